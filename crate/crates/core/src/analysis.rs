//! Photocurrent filtering, parity assignment and fidelity statistics, plus
//! the closed-form fidelity of the gate-based reference circuit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity::AmplitudeTable;
use crate::density::{parity_vector, DensityMatrix};
use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::sme::{
    measurement_operator, simulate_trajectory_with, Coefficients, Frame, QualityThresholds,
    TrajectoryOptions, TrajectoryRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Uniform,
    Matched,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "matched" => Ok(Self::Matched),
            other => Err(Error::Domain(format!("unknown filter '{other}'"))),
        }
    }
}

/// How the filter is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Σ f·dt = 1.
    #[default]
    UnitIntegral,
    /// Mean value 1, i.e. Σ f·dt = τ.
    MeanOne,
}

/// Filter samples at the start of each trajectory step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterFunction {
    pub kind: FilterKind,
    pub normalization: Normalization,
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl FilterFunction {
    /// Σ f·dt; ±1 for unit-integral filters, the sign being the
    /// orientation of the even-parity current.
    pub fn integral(&self) -> f64 {
        self.samples.iter().sum::<f64>() * self.dt
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        if normalization != self.normalization {
            let tau = self.samples.len() as f64 * self.dt;
            let factor = match normalization {
                Normalization::MeanOne => tau,
                Normalization::UnitIntegral => 1.0 / tau,
            };
            self.samples.iter_mut().for_each(|f| *f *= factor);
            self.normalization = normalization;
        }
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.samples.iter_mut().for_each(|f| *f *= factor);
        self
    }
}

/// Nominal even-parity current √η·tr((c_Q + c_Q†)Π₊) at each step start.
pub fn even_current(config: &SystemConfig, table: &AmplitudeTable, n_steps: usize) -> Result<Vec<f64>> {
    table.check_compatible(config)?;
    let stride = table.grid().stride_for(n_steps)?;
    let even: Vec<usize> = config.bitstrings().filter(|j| j.is_even()).map(|j| j.value()).collect();
    Ok((0..n_steps)
        .map(|n| {
            let c = measurement_operator(config, table, n * stride);
            config.eta.sqrt() * even.iter().map(|&i| 2.0 * c[i].re).sum::<f64>()
        })
        .collect())
}

fn step_dt(table: &AmplitudeTable, n_steps: usize) -> f64 {
    table.grid().tau() / n_steps as f64
}

/// f = j₊ / |∫j₊|: the nominal even-parity current normalized to unit
/// absolute integral and oriented so that an even-parity record gives a
/// positive signal.
pub fn matched_filter(config: &SystemConfig, table: &AmplitudeTable, n_steps: usize) -> Result<FilterFunction> {
    let j_plus = even_current(config, table, n_steps)?;
    let dt = step_dt(table, n_steps);
    let total: f64 = j_plus.iter().sum::<f64>() * dt;
    let scale = j_plus.iter().map(|j| j.abs()).sum::<f64>() * dt;
    if total == 0.0 || total.abs() <= 1e-14 * scale {
        return Err(Error::Degenerate("nominal even-parity current integrates to zero".into()));
    }
    Ok(FilterFunction {
        kind: FilterKind::Matched,
        normalization: Normalization::UnitIntegral,
        dt,
        samples: j_plus.iter().map(|j| j / total.abs()).collect(),
    })
}

/// Constant filter with unit integral, signed so that a nominal even-parity
/// record integrates to a positive signal.
pub fn uniform_filter(config: &SystemConfig, table: &AmplitudeTable, n_steps: usize) -> Result<FilterFunction> {
    let j_plus = even_current(config, table, n_steps)?;
    let total: f64 = j_plus.iter().sum();
    if total == 0.0 {
        return Err(Error::Degenerate("nominal even-parity current integrates to zero".into()));
    }
    let tau = table.grid().tau();
    Ok(FilterFunction {
        kind: FilterKind::Uniform,
        normalization: Normalization::UnitIntegral,
        dt: step_dt(table, n_steps),
        samples: vec![total.signum() / tau; n_steps],
    })
}

pub fn build_filter(
    kind: FilterKind,
    config: &SystemConfig,
    table: &AmplitudeTable,
    n_steps: usize,
) -> Result<FilterFunction> {
    match kind {
        FilterKind::Matched => matched_filter(config, table, n_steps),
        FilterKind::Uniform => uniform_filter(config, table, n_steps),
    }
}

/// s(τ) = Σ f(t_i)·j(t_i)·dt.
pub fn integrated_signal(filter: &FilterFunction, record: &TrajectoryRecord) -> Result<f64> {
    signal_of(filter, &record.photocurrent, record.dt())
}

fn signal_of(filter: &FilterFunction, current: &[f64], dt: f64) -> Result<f64> {
    if current.len() != filter.samples.len() || (dt - filter.dt).abs() > 1e-12 * filter.dt {
        return Err(Error::GridMismatch(format!(
            "filter has {} samples at dt = {}, record has {} at dt = {dt}",
            filter.samples.len(),
            filter.dt,
            current.len()
        )));
    }
    Ok(filter.samples.iter().zip(current).map(|(f, j)| f * j).sum::<f64>() * dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn is_even(self) -> bool {
        self == Parity::Even
    }
}

/// Positive signals are even, negative odd; zero falls back to even.
pub fn assign_parity(s: f64) -> Parity {
    if s > 0.0 {
        Parity::Even
    } else if s < 0.0 {
        Parity::Odd
    } else {
        log::warn!("signal is exactly zero; assigning even parity");
        Parity::Even
    }
}

/// √⟨ψ_±|ρ|ψ_±⟩ for the parity eigenstate of the given class.
pub fn state_fidelity(rho: &DensityMatrix, parity: Parity) -> Result<f64> {
    state_fidelity_within(rho, parity, 1e-10)
}

/// As [`state_fidelity`], rejecting overlaps below `-tolerance`.
pub fn state_fidelity_within(rho: &DensityMatrix, parity: Parity, tolerance: f64) -> Result<f64> {
    let psi = parity_vector(rho.n_qubits(), parity.is_even());
    let overlap = rho.expectation_in(&psi);
    if overlap < -tolerance {
        return Err(Error::Positivity(format!("⟨ψ|ρ|ψ⟩ = {overlap:e}")));
    }
    Ok(overlap.clamp(0.0, 1.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Histogram with Freedman–Diaconis bin width 2·IQR·n^(−1/3).
pub fn freedman_diaconis(values: &[f64]) -> Histogram {
    if values.is_empty() {
        return Histogram {
            edges: Vec::new(),
            counts: Vec::new(),
        };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = 2.0 * iqr * (values.len() as f64).powf(-1.0 / 3.0);
    let bins = if width > 0.0 && hi > lo {
        (((hi - lo) / width).ceil() as usize).clamp(1, 10_000)
    } else {
        1
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let edges: Vec<f64> = (0..=bins).map(|b| lo + span * b as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let b = (((v - lo) / span) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    Histogram { edges, counts }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// |μ_a − μ_b| over the pooled standard deviation.
pub fn class_separation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / (na + nb - 2.0)).sqrt();
    (pooled > 0.0).then(|| (ma - mb).abs() / pooled)
}

fn rms(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt())
}

#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub n_trajectories: usize,
    pub n_steps: usize,
    pub base_seed: u64,
    pub initial: DensityMatrix,
    pub thresholds: Option<QualityThresholds>,
    pub checkpoint_every: usize,
}

impl EnsembleOptions {
    pub fn new(config: &SystemConfig, n_trajectories: usize, n_steps: usize, base_seed: u64) -> Self {
        Self {
            n_trajectories,
            n_steps,
            base_seed,
            initial: DensityMatrix::plus_state(config.n_qubits),
            thresholds: Some(QualityThresholds::default()),
            checkpoint_every: 100,
        }
    }
}

/// What is kept of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryOutcome {
    pub stream: u64,
    /// One signal per filter.
    pub signals: Vec<f64>,
    pub fidelity_even: f64,
    pub fidelity_odd: f64,
    /// Parity subspace holding most of the final population.
    pub collapsed: Parity,
}

/// Statistics of the ensemble as seen through one filter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterSummary {
    pub kind: FilterKind,
    pub normalization: Normalization,
    pub signals: Vec<f64>,
    pub assignments: Vec<Parity>,
    pub fidelities: Vec<f64>,
    pub n_even: usize,
    pub n_odd: usize,
    pub rms_fidelity_even: Option<f64>,
    pub rms_fidelity_odd: Option<f64>,
    /// Fraction of trajectories whose assignment matches the collapsed parity.
    pub accuracy: f64,
    /// Signal separation between the collapsed-parity classes.
    pub separation: Option<f64>,
    pub histogram: Histogram,
}

impl FilterSummary {
    pub fn odd_fraction(&self) -> f64 {
        self.n_odd as f64 / self.signals.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub n_trajectories: usize,
    pub n_steps: usize,
    pub base_seed: u64,
    pub outcomes: Vec<TrajectoryOutcome>,
    pub filters: Vec<FilterSummary>,
}

fn outcome(record: &TrajectoryRecord, filters: &[FilterFunction], tolerance: f64) -> Result<TrajectoryOutcome> {
    let signals = filters
        .iter()
        .map(|f| integrated_signal(f, record))
        .collect::<Result<Vec<_>>>()?;
    let (even, odd) = record.final_state.parity_populations();
    Ok(TrajectoryOutcome {
        stream: record.stream,
        signals,
        fidelity_even: state_fidelity_within(&record.final_state, Parity::Even, tolerance)?,
        fidelity_odd: state_fidelity_within(&record.final_state, Parity::Odd, tolerance)?,
        collapsed: if even >= odd { Parity::Even } else { Parity::Odd },
    })
}

fn summarize(index: usize, filter: &FilterFunction, outcomes: &[TrajectoryOutcome]) -> FilterSummary {
    let signals: Vec<f64> = outcomes.iter().map(|o| o.signals[index]).collect();
    let assignments: Vec<Parity> = signals.iter().map(|&s| assign_parity(s)).collect();
    let fidelities: Vec<f64> = outcomes
        .iter()
        .zip(&assignments)
        .map(|(o, p)| if p.is_even() { o.fidelity_even } else { o.fidelity_odd })
        .collect();
    let class = |p: Parity| -> Vec<f64> {
        fidelities
            .iter()
            .zip(&assignments)
            .filter(|(_, a)| **a == p)
            .map(|(f, _)| *f)
            .collect()
    };
    let by_truth = |p: Parity| -> Vec<f64> {
        outcomes
            .iter()
            .zip(&signals)
            .filter(|(o, _)| o.collapsed == p)
            .map(|(_, s)| *s)
            .collect()
    };
    let n_even = assignments.iter().filter(|a| a.is_even()).count();
    let correct = outcomes.iter().zip(&assignments).filter(|(o, a)| o.collapsed == **a).count();
    FilterSummary {
        kind: filter.kind,
        normalization: filter.normalization,
        n_even,
        n_odd: assignments.len() - n_even,
        rms_fidelity_even: rms(&class(Parity::Even)),
        rms_fidelity_odd: rms(&class(Parity::Odd)),
        accuracy: correct as f64 / outcomes.len().max(1) as f64,
        separation: class_separation(&by_truth(Parity::Even), &by_truth(Parity::Odd)),
        histogram: freedman_diaconis(&signals),
        signals,
        assignments,
        fidelities,
    }
}

/// Runs `n_trajectories` conditioned trajectories concurrently and evaluates
/// every filter on the same records. Trajectory `i` uses stream `i` of
/// `base_seed`, so results do not depend on scheduling.
pub fn ensemble_run(
    config: &SystemConfig,
    table: &AmplitudeTable,
    filters: &[FilterFunction],
    opts: &EnsembleOptions,
) -> Result<EnsembleSummary> {
    if opts.n_trajectories == 0 {
        return Err(Error::Domain("need at least one trajectory".into()));
    }
    table.check_compatible(config)?;
    let stride = table.grid().stride_for(opts.n_steps)?;
    let coeffs = Coefficients::sample(config, table, stride, &Frame::Rotating);
    let traj_opts = TrajectoryOptions {
        initial: opts.initial.clone(),
        snapshot_times: Vec::new(),
        checkpoint_every: opts.checkpoint_every,
        thresholds: opts.thresholds,
    };
    // Overlaps are held to the same positivity tolerance as the trajectories.
    let tolerance = opts
        .thresholds
        .map_or(f64::INFINITY, |t| (-t.min_eigenvalue).max(1e-10));
    let outcomes = (0..opts.n_trajectories as u64)
        .into_par_iter()
        .map(|stream| {
            let record = simulate_trajectory_with(config, &coeffs, opts.base_seed, stream, &traj_opts)?;
            outcome(&record, filters, tolerance)
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = filters
        .iter()
        .enumerate()
        .map(|(i, f)| summarize(i, f, &outcomes))
        .collect();
    Ok(EnsembleSummary {
        n_trajectories: opts.n_trajectories,
        n_steps: opts.n_steps,
        base_seed: opts.base_seed,
        outcomes,
        filters: summaries,
    })
}

const GATE_COEFFS: [(f64, f64); 11] = [
    (1.0, 1.0),
    (-128.0, 15.0),
    (8834.0, 225.0),
    (-74884.0, 675.0),
    (2130272.0, 10125.0),
    (-8409088.0, 30375.0),
    (23153152.0, 91125.0),
    (-43695104.0, 273375.0),
    (53886976.0, 820125.0),
    (-39059456.0, 2460375.0),
    (4194304.0, 2460375.0),
];

/// Largest error probability accepted by the gate model.
pub const GATE_P_MAX: f64 = 0.1;

/// Post-measurement state fidelity of the gate-based parity circuit with
/// depolarizing error probability `p`.
pub fn gate_fidelity(p: f64) -> Result<f64> {
    if !(0.0..=GATE_P_MAX).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0, {GATE_P_MAX}]")));
    }
    let poly = GATE_COEFFS
        .iter()
        .rev()
        .fold(0.0, |acc, (num, den)| acc * p + num / den);
    Ok(poly.sqrt())
}

/// Error probability at which the gate model reaches `target` fidelity.
pub fn solve_error_rate(target: f64) -> Result<f64> {
    let f_max_p = gate_fidelity(GATE_P_MAX)?;
    if !(f_max_p..=1.0).contains(&target) {
        return Err(Error::Domain(format!(
            "target fidelity {target} outside [{f_max_p}, 1]"
        )));
    }
    if target == 1.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, GATE_P_MAX);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if gate_fidelity(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
