//! Reduced register master equation, unconditional and conditioned on a
//! homodyne record.
//!
//! In the frame rotating with the qubit Hamiltonian the register evolves as
//!
//! ```text
//! dρ = ½ Σ_l γ_l 𝒟[σ_z,l]ρ dt − i Σ_{k,l} χ_{k,l} P̃_k ∘ [σ_z,l, ρ] dt + √η ℳ[c_Q]ρ dW
//! ```
//!
//! with `[P̃_k]_{ij} = ᾱ_{k,j} α_{k,i}` and the diagonal measurement operator
//! `c_Q = e^{−iφ} Σ_k √κ_k α_{k,i} |i⟩⟨i|`. The deterministic part acts
//! elementwise on ρ, so it is stored as a matrix of complex rates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cavity::AmplitudeTable;
use crate::density::{DensityMatrix, StateHealth};
use crate::error::{Error, Result};
use crate::model::{Bitstring, SystemConfig};
use crate::srk::{self, NoiseIncrement, ScalarNoiseSde};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// `[P̃_k]_{ij} = conj(α_{k,j}) α_{k,i}` at grid index `i_t`.
pub fn ptilde(table: &AmplitudeTable, k: usize, i_t: usize) -> DMatrix<Complex64> {
    let a = table.mode_column(k, i_t);
    DMatrix::from_fn(a.len(), a.len(), |r, c| a[c].conj() * a[r])
}

/// Which frame the register equation is written in.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Frame {
    /// Rotating with the qubit Hamiltonian, which then drops out.
    #[default]
    Rotating,
    /// Laboratory frame with `H_Q = Σ_l h_l σ_z,l`; holds the `h_l`.
    Lab(Vec<f64>),
}

/// Elementwise generator of the deterministic part at one instant.
#[derive(Debug, Clone)]
pub struct DriftRates(pub DMatrix<Complex64>);

impl DriftRates {
    pub fn new(config: &SystemConfig, alphas: &[Complex64], frame: &Frame) -> Self {
        let n = config.dim();
        let m = config.n_modes;
        let states: Vec<Bitstring> = config.bitstrings().collect();
        let shifts: Vec<Vec<f64>> = states
            .iter()
            .map(|j| (0..m).map(|k| j.signed_chi_sum(config, k)).collect())
            .collect();
        let energies: Option<Vec<f64>> = match frame {
            Frame::Rotating => None,
            Frame::Lab(h) => Some(
                states
                    .iter()
                    .map(|j| h.iter().enumerate().map(|(l, hl)| j.sign(l) * hl).sum())
                    .collect(),
            ),
        };

        let mut rates = DMatrix::from_element(n, n, ZERO);
        for r in 0..n {
            for c in (r + 1)..n {
                let differing = states[r].value() ^ states[c].value();
                let dephasing: f64 = (0..config.n_qubits)
                    .filter(|l| differing >> l & 1 == 1)
                    .map(|l| config.gamma_z[l])
                    .sum();
                let mut coupling = ZERO;
                for k in 0..m {
                    let w = shifts[r][k] - shifts[c][k];
                    if w != 0.0 {
                        coupling += alphas[c * m + k].conj() * alphas[r * m + k] * w;
                    }
                }
                let mut rate = Complex64::new(-dephasing, 0.0) - I * coupling;
                if let Some(e) = &energies {
                    rate -= I * (e[r] - e[c]);
                }
                rates[(r, c)] = rate;
                rates[(c, r)] = rate.conj();
            }
        }
        Self(rates)
    }

    pub fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        self.0.component_mul(rho)
    }
}

/// Diagonal of the measurement operator c_Q at grid index `i_t`.
pub fn measurement_operator(config: &SystemConfig, table: &AmplitudeTable, i_t: usize) -> Vec<Complex64> {
    let phase = Complex64::from_polar(1.0, -config.phi);
    let m = config.n_modes;
    let slice = table.slice(i_t);
    (0..config.dim())
        .map(|j| {
            phase
                * (0..m)
                    .map(|k| slice[j * m + k] * config.kappa[k].sqrt())
                    .sum::<Complex64>()
        })
        .collect()
}

/// Deterministic right-hand side at grid index `i_t` (rotating frame).
pub fn drift(
    rho: &DensityMatrix,
    config: &SystemConfig,
    table: &AmplitudeTable,
    i_t: usize,
) -> DMatrix<Complex64> {
    DriftRates::new(config, table.slice(i_t), &Frame::Rotating).apply(&rho.0)
}

/// √η·ℳ[c](ρ) for diagonal `c`.
pub fn measurement_superop(rho: &DMatrix<Complex64>, c_q: &[Complex64], eta: f64) -> DMatrix<Complex64> {
    let n = rho.nrows();
    let trace: f64 = (0..n).map(|i| 2.0 * (c_q[i] * rho[(i, i)]).re).sum();
    let s = eta.sqrt();
    DMatrix::from_fn(n, n, |r, c| {
        let f = Complex64::new(c_q[r].re + c_q[c].re - trace, c_q[r].im - c_q[c].im);
        f * rho[(r, c)] * s
    })
}

/// √η·tr((c + c†)ρ): the mean homodyne current.
pub fn expected_photocurrent(rho: &DMatrix<Complex64>, c_q: &[Complex64], eta: f64) -> f64 {
    eta.sqrt()
        * (0..rho.nrows())
            .map(|i| 2.0 * (c_q[i] * rho[(i, i)]).re)
            .sum::<f64>()
}

/// Both coefficient functions frozen at the two ends of one step.
struct StepModel<'a> {
    t0: f64,
    start: (&'a DriftRates, &'a [Complex64]),
    end: (&'a DriftRates, &'a [Complex64]),
    eta: f64,
}

impl StepModel<'_> {
    fn at(&self, t: f64) -> (&DriftRates, &[Complex64]) {
        if t == self.t0 {
            self.start
        } else {
            self.end
        }
    }
}

impl ScalarNoiseSde<DMatrix<Complex64>> for StepModel<'_> {
    fn drift(&self, t: f64, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        self.at(t).0.apply(x)
    }

    fn diffusion(&self, t: f64, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        measurement_superop(x, self.at(t).1, self.eta)
    }
}

/// Precomputed drift rates and c_Q on the table grid points one trajectory
/// visits.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub rates: Vec<DriftRates>,
    pub c_q: Vec<Vec<Complex64>>,
    pub times: Vec<f64>,
}

impl Coefficients {
    /// Samples every `stride`-th table point.
    pub fn sample(config: &SystemConfig, table: &AmplitudeTable, stride: usize, frame: &Frame) -> Self {
        let idx: Vec<usize> = (0..table.grid().len()).step_by(stride).collect();
        Self {
            rates: idx
                .iter()
                .map(|&i| DriftRates::new(config, table.slice(i), frame))
                .collect(),
            c_q: idx
                .iter()
                .map(|&i| measurement_operator(config, table, i))
                .collect(),
            times: idx.iter().map(|&i| table.grid().time(i)).collect(),
        }
    }
}

/// One strong order-1.5 step of the conditioned equation from grid index
/// `i_t` to `i_t + 1` of the table.
pub fn step_sde(
    rho: &DensityMatrix,
    i_t: usize,
    noise: NoiseIncrement,
    config: &SystemConfig,
    table: &AmplitudeTable,
) -> Result<DensityMatrix> {
    table.check_compatible(config)?;
    if i_t + 1 >= table.grid().len() {
        return Err(Error::Index(format!("no table step after index {i_t}")));
    }
    let r0 = DriftRates::new(config, table.slice(i_t), &Frame::Rotating);
    let r1 = DriftRates::new(config, table.slice(i_t + 1), &Frame::Rotating);
    let c0 = measurement_operator(config, table, i_t);
    let c1 = measurement_operator(config, table, i_t + 1);
    let t0 = table.grid().time(i_t);
    let model = StepModel {
        t0,
        start: (&r0, &c0),
        end: (&r1, &c1),
        eta: config.eta,
    };
    Ok(DensityMatrix(srk::step(&model, t0, &rho.0, table.grid().dt(), noise)))
}

/// Invariant health at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub trace_deviation: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
    pub purity: f64,
    /// Largest diagonal entry of the deterministic right-hand side.
    pub drift_diagonal: f64,
}

impl Diagnostics {
    fn measure(t: f64, rho: &DensityMatrix, rates: &DriftRates) -> Self {
        let StateHealth {
            trace_deviation,
            hermiticity,
            min_eigenvalue,
            purity,
        } = rho.health();
        let d = rates.apply(&rho.0);
        let drift_diagonal = (0..d.nrows()).map(|i| d[(i, i)].norm()).fold(0.0, f64::max);
        Self {
            t,
            trace_deviation,
            hermiticity,
            min_eigenvalue,
            purity,
            drift_diagonal,
        }
    }
}

/// Limits beyond which a trajectory is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityThresholds {
    pub trace_deviation: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
    pub purity_excess: f64,
    pub drift_diagonal: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            trace_deviation: 1e-10,
            hermiticity: 1e-12,
            min_eigenvalue: -1e-8,
            purity_excess: 1e-8,
            drift_diagonal: 1e-10,
        }
    }
}

impl QualityThresholds {
    /// Coarse-step thresholds: the positivity floor is widened to the local
    /// strong error scale dt^1.5 when that exceeds the default.
    pub fn for_step(dt: f64) -> Self {
        let d = Self::default();
        Self {
            min_eigenvalue: d.min_eigenvalue.min(-dt.powf(1.5)),
            ..d
        }
    }

    pub fn check(&self, d: &Diagnostics) -> Option<String> {
        if d.trace_deviation >= self.trace_deviation {
            Some(format!("trace deviation {:e}", d.trace_deviation))
        } else if d.hermiticity >= self.hermiticity {
            Some(format!("hermiticity deviation {:e}", d.hermiticity))
        } else if d.min_eigenvalue <= self.min_eigenvalue {
            Some(format!("minimum eigenvalue {:e}", d.min_eigenvalue))
        } else if d.purity > 1.0 + self.purity_excess {
            Some(format!("purity {}", d.purity))
        } else if d.drift_diagonal >= self.drift_diagonal {
            Some(format!("drift diagonal {:e}", d.drift_diagonal))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryOptions {
    pub initial: DensityMatrix,
    pub snapshot_times: Vec<f64>,
    /// Diagnostics are recorded every this many steps and at the end.
    pub checkpoint_every: usize,
    /// `None` records diagnostics without enforcing them.
    pub thresholds: Option<QualityThresholds>,
}

impl TrajectoryOptions {
    pub fn from_plus_state(n_qubits: usize) -> Self {
        Self {
            initial: DensityMatrix::plus_state(n_qubits),
            snapshot_times: Vec::new(),
            checkpoint_every: 100,
            thresholds: Some(QualityThresholds::default()),
        }
    }
}

/// One conditioned trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Start time of each step.
    pub times: Vec<f64>,
    /// j(t_i) for each step, so that j·dt = ⟨current⟩·dt + ΔW.
    pub photocurrent: Vec<f64>,
    pub final_state: DensityMatrix,
    pub snapshots: Vec<(f64, DensityMatrix)>,
    pub seed: u64,
    pub stream: u64,
    pub diagnostics: Vec<Diagnostics>,
}

impl TrajectoryRecord {
    pub fn dt(&self) -> f64 {
        match self.times.as_slice() {
            [a, b, ..] => b - a,
            _ => 0.0,
        }
    }
}

/// Random stream for trajectory `stream` of an ensemble seeded with `seed`.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Integrates one conditioned trajectory over the whole table span in
/// `n_steps` uniform steps.
pub fn simulate_trajectory(
    config: &SystemConfig,
    table: &AmplitudeTable,
    n_steps: usize,
    seed: u64,
    stream: u64,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRecord> {
    let stride = table.grid().stride_for(n_steps)?;
    let coeffs = Coefficients::sample(config, table, stride, &Frame::Rotating);
    simulate_trajectory_with(config, &coeffs, seed, stream, opts)
}

/// As [`simulate_trajectory`], reusing coefficients shared across an ensemble.
pub fn simulate_trajectory_with(
    config: &SystemConfig,
    coeffs: &Coefficients,
    seed: u64,
    stream: u64,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRecord> {
    if opts.initial.dim() != config.dim() {
        return Err(Error::Domain("initial state dimension mismatch".into()));
    }
    let n_steps = coeffs.times.len() - 1;
    let dt = coeffs.times[1] - coeffs.times[0];
    let mut rng = trajectory_rng(seed, stream);
    let mut rho = opts.initial.0.clone();
    let mut photocurrent = Vec::with_capacity(n_steps);
    let mut diagnostics = Vec::new();
    let mut snapshots = Vec::new();
    let mut snap_iter = {
        let mut s = opts.snapshot_times.clone();
        s.sort_by(f64::total_cmp);
        s.into_iter().peekable()
    };
    let every = opts.checkpoint_every.max(1);

    let checkpoint = |n: usize, rho: &DMatrix<Complex64>, diags: &mut Vec<Diagnostics>| -> Result<()> {
        let d = Diagnostics::measure(coeffs.times[n], &DensityMatrix(rho.clone()), &coeffs.rates[n]);
        diags.push(d);
        if let Some(reason) = opts.thresholds.and_then(|th| th.check(&d)) {
            return Err(Error::IntegrationQuality {
                reason,
                diagnostics: Box::new(d),
            });
        }
        Ok(())
    };

    for n in 0..n_steps {
        let t = coeffs.times[n];
        while snap_iter.peek().is_some_and(|&s| s <= t + 0.5 * dt) {
            snap_iter.next();
            snapshots.push((t, DensityMatrix(rho.clone())));
        }
        if n % every == 0 {
            checkpoint(n, &rho, &mut diagnostics)?;
        }
        let noise = NoiseIncrement::sample(&mut rng, dt);
        photocurrent.push(expected_photocurrent(&rho, &coeffs.c_q[n], config.eta) + noise.dw / dt);
        let model = StepModel {
            t0: t,
            start: (&coeffs.rates[n], &coeffs.c_q[n]),
            end: (&coeffs.rates[n + 1], &coeffs.c_q[n + 1]),
            eta: config.eta,
        };
        rho = srk::step(&model, t, &rho, dt, noise);
    }
    for _ in snap_iter {
        snapshots.push((coeffs.times[n_steps], DensityMatrix(rho.clone())));
    }
    checkpoint(n_steps, &rho, &mut diagnostics)?;

    Ok(TrajectoryRecord {
        times: coeffs.times[..n_steps].to_vec(),
        photocurrent,
        final_state: DensityMatrix(rho),
        snapshots,
        seed,
        stream,
        diagnostics,
    })
}

/// Unconditioned evolution with classical RK4 on `n_steps` uniform steps.
/// The table must also resolve step midpoints (an even number of table
/// intervals per step). Returns the state at every step boundary.
pub fn simulate_deterministic(
    config: &SystemConfig,
    table: &AmplitudeTable,
    n_steps: usize,
    initial: &DensityMatrix,
    frame: &Frame,
) -> Result<Vec<(f64, DensityMatrix)>> {
    table.check_compatible(config)?;
    if initial.dim() != config.dim() {
        return Err(Error::Domain("initial state dimension mismatch".into()));
    }
    let stride = table.grid().stride_for(n_steps)?;
    if stride % 2 != 0 {
        return Err(Error::GridMismatch(
            "deterministic stepping needs table points at step midpoints".into(),
        ));
    }
    let half = stride / 2;
    let coeffs = Coefficients::sample(config, table, half, frame);
    let dt = table.grid().tau() / n_steps as f64;

    let mut out = Vec::with_capacity(n_steps + 1);
    let mut rho = initial.0.clone();
    out.push((0.0, initial.clone()));
    for n in 0..n_steps {
        let t = coeffs.times[2 * n];
        let rates = [&coeffs.rates[2 * n], &coeffs.rates[2 * n + 1], &coeffs.rates[2 * n + 2]];
        rho = srk::rk4_step(
            |s, x: &DMatrix<Complex64>| {
                let idx = if s == t {
                    0
                } else if s == t + 0.5 * dt {
                    1
                } else {
                    2
                };
                rates[idx].apply(x)
            },
            t,
            &rho,
            dt,
        );
        out.push((coeffs.times[2 * n + 2], DensityMatrix(rho.clone())));
    }
    Ok(out)
}
