//! Resonator response: the per-bitstring linear system, its transfer function
//! and steady state, and time-domain pointer amplitudes under a drive.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{parity_config, Bitstring, SystemConfig};
use crate::ode::{integrate_dense, OdeOptions, OdeStats};
use crate::pulse::PulseSpec;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// A real measurement-tone envelope ε(t).
pub trait Drive: Sync {
    fn amplitude(&self, t: f64) -> f64;

    /// Times where the envelope or its low derivatives are not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl Drive for PulseSpec {
    fn amplitude(&self, t: f64) -> f64 {
        PulseSpec::amplitude(self, t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let half = 0.5 * self.sigma;
        vec![
            self.t_on - half,
            self.t_on,
            self.t_on + half,
            self.t_off - half,
            self.t_off,
            self.t_off + half,
        ]
    }
}

/// ε(t) = const.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDrive(pub f64);

impl Drive for ConstantDrive {
    fn amplitude(&self, _t: f64) -> f64 {
        self.0
    }
}

/// Single-input single-output realization (A, B, C, D) of the cavity
/// equations for a fixed register basis state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<Complex64>,
    pub b: DVector<Complex64>,
    pub c: RowDVector<Complex64>,
    pub d: Complex64,
}

/// Effective detuning Δ_k + Σ_l (−1)^{j_l} χ_{k,l} of every mode.
pub fn effective_detunings(config: &SystemConfig, j: Bitstring) -> Vec<f64> {
    (0..config.n_modes)
        .map(|k| config.delta[k] + j.signed_chi_sum(config, k))
        .collect()
}

pub fn build_state_space(config: &SystemConfig, j: Bitstring) -> Result<StateSpace> {
    let config = config.clone().validated()?;
    if j.len() != config.n_qubits {
        return Err(Error::Domain(format!(
            "bitstring has {} bits, register has {} qubits",
            j.len(),
            config.n_qubits
        )));
    }
    let m = config.n_modes;
    let detuning = effective_detunings(&config, j);
    let sqrt_k: Vec<f64> = config.kappa.iter().map(|k| k.sqrt()).collect();
    let a = DMatrix::from_fn(m, m, |k, kp| {
        let loss = c(-0.5 * sqrt_k[k] * sqrt_k[kp]);
        if k == kp {
            loss - I * detuning[k]
        } else {
            loss
        }
    });
    let b = DVector::from_fn(m, |k, _| -I * sqrt_k[k]);
    let cm = RowDVector::from_fn(m, |_, k| c(sqrt_k[k]));
    Ok(StateSpace {
        a,
        b,
        c: cm,
        d: Complex64::new(0.0, 0.0),
    })
}

impl StateSpace {
    /// G(s) = C (s𝟙 − A)⁻¹ B + D.
    pub fn transfer(&self, s: Complex64) -> Result<Complex64> {
        let n = self.a.nrows();
        let shifted = DMatrix::<Complex64>::identity(n, n) * s - &self.a;
        let x = shifted
            .lu()
            .solve(&self.b)
            .ok_or_else(|| Error::Singular(format!("s·1 − A is singular at s = {s}")))?;
        Ok((&self.c * x)[(0, 0)] + self.d)
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let (_, t) = self.a.clone().schur().unpack();
        t.diagonal().iter().copied().collect()
    }
}

pub fn transfer_matrix(ss: &StateSpace, s: Complex64) -> Result<Complex64> {
    ss.transfer(s)
}

/// Inverse of `Diag(diag) + v vᵀ` (plain transpose) by the Sherman–Morrison
/// identity.
#[derive(Debug, Clone)]
pub struct RankOneInverse {
    pub inverse: DMatrix<Complex64>,
    /// The inverse exists but the diagonal or the denominator is small
    /// relative to the data, so the result is ill-conditioned.
    pub near_singular: bool,
}

const NEAR_SINGULAR_RATIO: f64 = 1e-4;

pub fn sherman_morrison(diag: &[Complex64], v: &[Complex64]) -> Result<RankOneInverse> {
    if diag.len() != v.len() {
        return Err(Error::Domain("diag and v lengths differ".into()));
    }
    if let Some(k) = diag.iter().position(|d| *d == Complex64::new(0.0, 0.0)) {
        return Err(Error::Singular(format!("diagonal entry {k} is zero")));
    }
    let inv_d: Vec<Complex64> = diag.iter().map(|d| d.inv()).collect();
    let w: Vec<Complex64> = inv_d.iter().zip(v).map(|(a, b)| a * b).collect();
    let denom = Complex64::new(1.0, 0.0) + v.iter().zip(&w).map(|(a, b)| a * b).sum::<Complex64>();
    let scale = 1.0 + v.iter().zip(&w).map(|(a, b)| (a * b).norm()).sum::<f64>();
    if denom.norm() <= f64::EPSILON * scale {
        return Err(Error::Singular(format!(
            "Sherman–Morrison denominator vanishes ({denom})"
        )));
    }

    let max_d = diag.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let min_d = diag.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
    let near_singular = min_d < NEAR_SINGULAR_RATIO * max_d || denom.norm() < NEAR_SINGULAR_RATIO * scale;
    if near_singular {
        log::warn!(
            "near-singular rank-one inverse: |d| in [{min_d:e}, {max_d:e}], denominator {denom}"
        );
    }

    let n = diag.len();
    let inverse = DMatrix::from_fn(n, n, |r, col| {
        let rank_one = w[r] * w[col] / denom;
        if r == col {
            inv_d[r] - rank_one
        } else {
            -rank_one
        }
    });
    Ok(RankOneInverse {
        inverse,
        near_singular,
    })
}

pub fn sherman_morrison_inverse(diag: &[Complex64], v: &[Complex64]) -> Result<DMatrix<Complex64>> {
    sherman_morrison(diag, v).map(|r| r.inverse)
}

/// Closed-form steady-state output amplitude under constant drive `eps_ss`.
///
/// Uses the effective detunings Δ̃_k; for uniform χ these equal
/// Δ_k + (n − 2·popcount(j))χ.
pub fn steady_state_output(config: &SystemConfig, j: Bitstring, eps_ss: f64) -> Result<Complex64> {
    let detuning = effective_detunings(config, j);
    let mut ratio = 0.0;
    for (k, (&kappa, &d)) in config.kappa.iter().zip(&detuning).enumerate() {
        if kappa == 0.0 {
            continue;
        }
        if d == 0.0 {
            return Err(Error::Resonance { mode: k });
        }
        ratio += kappa / d;
    }
    Ok(-I * ratio / (I + 0.5 * ratio) * eps_ss)
}

/// Steady state via the rank-one inverse of A: y = −C A⁻¹ B ε.
pub fn steady_state_via_inverse(config: &SystemConfig, j: Bitstring, eps_ss: f64) -> Result<Complex64> {
    let ss = build_state_space(config, j)?;
    let detuning = effective_detunings(config, j);
    let diag: Vec<Complex64> = detuning.iter().map(|d| -I * d).collect();
    let v: Vec<Complex64> = config.kappa.iter().map(|k| I * (k / 2.0).sqrt()).collect();
    let inv = sherman_morrison_inverse(&diag, &v)?;
    Ok(-(&ss.c * inv * &ss.b)[(0, 0)] * eps_ss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaOptimum {
    pub kappa: f64,
    /// |Re α_out(even) − Re α_out(odd)| per unit drive.
    pub separation: f64,
}

/// Scans equal loss rates κ₀ = κ₁ = κ with parity-matched detunings and
/// returns the κ maximizing the real-part separation of the even and odd
/// steady outputs of a three-qubit register.
pub fn optimize_kappa(chi: f64, grid: &[f64]) -> Result<KappaOptimum> {
    if grid.is_empty() {
        return Err(Error::Domain("empty kappa grid".into()));
    }
    let mut best: Option<KappaOptimum> = None;
    for &kappa in grid {
        let separation = parity_separation(chi, kappa)?;
        if best.is_none_or(|b| separation > b.separation) {
            best = Some(KappaOptimum { kappa, separation });
        }
    }
    Ok(best.expect("non-empty grid"))
}

pub fn parity_separation(chi: f64, kappa: f64) -> Result<f64> {
    let (d0, d1) = parity_config(kappa, kappa, chi)?;
    let config = SystemConfig::uniform(3, vec![kappa, kappa], vec![d0, d1], chi, 0.0, 1.0)?;
    let even = steady_state_output(&config, Bitstring::new(0, 3)?, 1.0)?;
    let odd = steady_state_output(&config, Bitstring::new(1, 3)?, 1.0)?;
    Ok((even.re - odd.re).abs())
}

/// Pointer amplitudes α_{k,j}(t_i) for every mode, bitstring and grid time.
#[derive(Debug, Clone)]
pub struct AmplitudeTable {
    grid: TimeGrid,
    n_modes: usize,
    n_states: usize,
    // [time][bitstring][mode]
    data: Vec<Complex64>,
    pub stats: Vec<OdeStats>,
}

impl AmplitudeTable {
    /// All amplitudes zero: the vacuum with no drive.
    pub fn vacuum(grid: TimeGrid, n_modes: usize, n_states: usize) -> Self {
        Self {
            grid,
            n_modes,
            n_states,
            data: vec![Complex64::new(0.0, 0.0); grid.len() * n_states * n_modes],
            stats: Vec::new(),
        }
    }

    /// Builds a table from `f(i, j, k)`.
    pub fn from_fn(
        grid: TimeGrid,
        n_modes: usize,
        n_states: usize,
        mut f: impl FnMut(usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut data = Vec::with_capacity(grid.len() * n_states * n_modes);
        for i in 0..grid.len() {
            for j in 0..n_states {
                for k in 0..n_modes {
                    data.push(f(i, j, k));
                }
            }
        }
        Self {
            grid,
            n_modes,
            n_states,
            data,
            stats: Vec::new(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn alpha(&self, k: usize, j: usize, i: usize) -> Complex64 {
        self.data[(i * self.n_states + j) * self.n_modes + k]
    }

    /// Amplitudes at grid index `i`, laid out `[bitstring][mode]`.
    pub fn slice(&self, i: usize) -> &[Complex64] {
        let w = self.n_states * self.n_modes;
        &self.data[i * w..(i + 1) * w]
    }

    /// Amplitudes of mode `k` for every bitstring at grid index `i`.
    pub fn mode_column(&self, k: usize, i: usize) -> Vec<Complex64> {
        (0..self.n_states).map(|j| self.alpha(k, j, i)).collect()
    }

    pub fn check_compatible(&self, config: &SystemConfig) -> Result<()> {
        if self.n_modes != config.n_modes || self.n_states != config.dim() {
            return Err(Error::GridMismatch(format!(
                "table holds {} modes × {} states, config needs {} × {}",
                self.n_modes,
                self.n_states,
                config.n_modes,
                config.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct AmplitudeOptions {
    pub ode: OdeOptions,
    /// Initial amplitudes `[bitstring][mode]`; vacuum if absent.
    pub initial: Option<Vec<Vec<Complex64>>>,
}

/// Integrates the pointer-amplitude equations of every bitstring independently
/// and samples them on `grid`.
pub fn integrate_amplitudes(
    config: &SystemConfig,
    drive: &dyn Drive,
    grid: TimeGrid,
    opts: &AmplitudeOptions,
) -> Result<AmplitudeTable> {
    let config = config.clone().validated()?;
    let m = config.n_modes;
    let n_states = config.dim();
    if let Some(init) = &opts.initial {
        if init.len() != n_states || init.iter().any(|v| v.len() != m) {
            return Err(Error::Domain("initial amplitudes have the wrong shape".into()));
        }
    }
    let mut ode = opts.ode.clone();
    ode.stops.extend(drive.breakpoints());
    let samples = grid.times();

    let per_state: Vec<(Vec<Vec<Complex64>>, OdeStats)> = config
        .bitstrings()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| {
            let ss = build_state_space(&config, j)?;
            let y0 = opts
                .initial
                .as_ref()
                .map(|init| init[j.value()].clone())
                .unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); m]);
            let a = &ss.a;
            let b = &ss.b;
            integrate_dense(
                |t, y, dy| {
                    let eps = drive.amplitude(t);
                    for r in 0..m {
                        let mut acc = b[r] * eps;
                        for col in 0..m {
                            acc += a[(r, col)] * y[col];
                        }
                        dy[r] = acc;
                    }
                },
                0.0,
                &y0,
                grid.tau(),
                &samples,
                &ode,
            )
        })
        .collect::<Result<_>>()?;

    let mut table = AmplitudeTable::from_fn(grid, m, n_states, |i, j, k| per_state[j].0[i][k]);
    table.stats = per_state.into_iter().map(|(_, s)| s).collect();
    Ok(table)
}

/// Output field amplitude Σ_k √κ_k α_{k,j}(t_i).
pub fn output_amplitude(
    table: &AmplitudeTable,
    config: &SystemConfig,
    j: Bitstring,
    i: usize,
) -> Result<Complex64> {
    table.check_compatible(config)?;
    if i >= table.grid.len() || j.value() >= table.n_states {
        return Err(Error::Index(format!(
            "(bitstring {}, grid index {i}) outside table of {} states × {} times",
            j.value(),
            table.n_states,
            table.grid.len()
        )));
    }
    Ok((0..config.n_modes)
        .map(|k| table.alpha(k, j.value(), i) * config.kappa[k].sqrt())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_mode(delta: f64) -> SystemConfig {
        SystemConfig::uniform(1, vec![2.0], vec![delta], 1.0, 0.0, 1.0).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    #[test]
    fn single_mode_matrices() {
        let cfg = single_mode(0.0);
        let ss = build_state_space(&cfg, Bitstring::new(0, 1).unwrap()).unwrap();
        assert!(close(ss.a[(0, 0)], Complex64::new(-1.0, -1.0), 1e-15));
        assert!(close(ss.b[0], Complex64::new(0.0, -(2f64.sqrt())), 1e-15));
        assert!(close(ss.c[0], c(2f64.sqrt()), 1e-15));
        assert_eq!(ss.d, Complex64::new(0.0, 0.0));

        let ss1 = build_state_space(&cfg, Bitstring::new(1, 1).unwrap()).unwrap();
        assert!(close(ss1.a[(0, 0)], Complex64::new(-1.0, 1.0), 1e-15));
    }

    #[test]
    fn two_mode_off_diagonals() {
        let cfg = SystemConfig::parity_default();
        for j in cfg.bitstrings() {
            let ss = build_state_space(&cfg, j).unwrap();
            assert!(close(ss.a[(0, 1)], c(-1.0), 1e-15));
            assert!(close(ss.a[(1, 0)], c(-1.0), 1e-15));
            for ev in ss.eigenvalues() {
                assert!(ev.re < 0.0, "unstable eigenvalue {ev}");
            }
        }
    }

    #[test]
    fn transfer_at_zero_single_mode() {
        let ss = build_state_space(&single_mode(0.0), Bitstring::new(0, 1).unwrap()).unwrap();
        // −C A⁻¹ B for the 1×1 system
        let expected = -(ss.c[0] * ss.b[0] / ss.a[(0, 0)]);
        let g = ss.transfer(Complex64::new(0.0, 0.0)).unwrap();
        assert!(close(g, expected, 1e-14));
        assert!(close(g, Complex64::new(-1.0, -1.0), 1e-14));
    }

    #[test]
    fn transfer_vanishes_at_high_frequency() {
        let cfg = SystemConfig::parity_default();
        let ss = build_state_space(&cfg, Bitstring::new(3, 3).unwrap()).unwrap();
        let mut prev = f64::INFINITY;
        for w in [1e2, 1e4, 1e6, 1e8] {
            let g = ss.transfer(Complex64::new(0.0, w)).unwrap().norm();
            assert!(g < prev);
            prev = g;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn transfer_singular_reports_frequency() {
        let cfg = SystemConfig::uniform(1, vec![0.0], vec![0.0], 1.0, 0.0, 1.0).unwrap();
        let ss = build_state_space(&cfg, Bitstring::new(0, 1).unwrap()).unwrap();
        // A = −i, so s = −i is a pole
        let err = ss.transfer(Complex64::new(0.0, -1.0)).unwrap_err();
        assert!(matches!(err, Error::Singular(msg) if msg.contains("-1i") || msg.contains("0-1i")));
    }

    #[test]
    fn parity_classes_at_dc() {
        let cfg = SystemConfig::parity_default();
        let even = build_state_space(&cfg, Bitstring::new(0, 3).unwrap())
            .unwrap()
            .transfer(c(0.0))
            .unwrap();
        let odd = build_state_space(&cfg, Bitstring::new(1, 3).unwrap())
            .unwrap()
            .transfer(c(0.0))
            .unwrap();
        assert_relative_eq!(even.norm(), odd.norm(), epsilon = 1e-12);
        assert_relative_eq!(even.re, -odd.re, epsilon = 1e-12);
    }

    #[test]
    fn sherman_morrison_trivial_and_errors() {
        let d = [Complex64::new(2.0, 1.0), Complex64::new(0.0, -3.0)];
        let inv = sherman_morrison_inverse(&d, &[c(0.0), c(0.0)]).unwrap();
        assert!(close(inv[(0, 0)], d[0].inv(), 1e-15));
        assert!(close(inv[(1, 1)], d[1].inv(), 1e-15));
        assert_eq!(inv[(0, 1)], c(0.0));

        assert!(matches!(
            sherman_morrison_inverse(&[c(0.0), c(1.0)], &[c(1.0), c(1.0)]),
            Err(Error::Singular(_))
        ));
        // 1 + vᵀ D⁻¹ v = 1 + (i)(i)/1 = 0
        assert!(matches!(
            sherman_morrison_inverse(&[c(1.0)], &[I]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn sherman_morrison_near_singular_flag() {
        let d = [Complex64::new(0.0, -6.0), Complex64::new(0.0, 1.0 / 9999.0)];
        let v = [I, I];
        let r = sherman_morrison(&d, &v).unwrap();
        assert!(r.near_singular);
        let full = DMatrix::from_fn(2, 2, |a, b| if a == b { d[a] } else { c(0.0) })
            + DMatrix::from_fn(2, 2, |a, b| v[a] * v[b]);
        let prod = full * r.inverse;
        assert!((prod - DMatrix::identity(2, 2)).norm() < 1e-9);
    }

    #[test]
    fn sherman_morrison_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut z = || Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        for trial in 0..100 {
            let n = 2 + trial % 4;
            let d: Vec<Complex64> = (0..n).map(|_| z()).collect();
            let v: Vec<Complex64> = (0..n).map(|_| z()).collect();
            let full = DMatrix::from_fn(n, n, |a, b| if a == b { d[a] } else { c(0.0) })
                + DMatrix::from_fn(n, n, |a, b| v[a] * v[b]);
            let dense = full.clone().lu().try_inverse().unwrap();
            let sm = sherman_morrison_inverse(&d, &v).unwrap();
            let rel = (&sm - &dense).norm() / dense.norm();
            assert!(rel < 1e-12, "trial {trial}: relative error {rel:e}");
        }
    }

    #[test]
    fn steady_output_parity_values() {
        let cfg = SystemConfig::parity_default();
        for j in cfg.bitstrings() {
            let y = steady_state_output(&cfg, j, 1.0).unwrap();
            let expected = if j.is_even() {
                Complex64::new(-1.0, -1.0)
            } else {
                Complex64::new(1.0, -1.0)
            };
            assert!(close(y, expected, 1e-12), "{j}: {y}");
        }
    }

    #[test]
    fn steady_output_agrees_with_transfer_and_inverse() {
        let mut cfgs = vec![SystemConfig::parity_default()];
        let mut other = SystemConfig::parity_default();
        other.kappa = vec![0.7, 3.1];
        other.delta = vec![2.2, -0.75];
        other.chi = vec![vec![1.0, 0.8, 1.3], vec![0.9, 1.1, 0.6]];
        cfgs.push(other);
        for cfg in &cfgs {
            for j in cfg.bitstrings() {
                let closed = steady_state_output(cfg, j, 0.37).unwrap();
                let g0 = build_state_space(cfg, j).unwrap().transfer(c(0.0)).unwrap() * 0.37;
                let sm = steady_state_via_inverse(cfg, j, 0.37).unwrap();
                assert!(close(closed, g0, 1e-10), "{j}: {closed} vs {g0}");
                assert!(close(sm, g0, 1e-10), "{j}: {sm} vs {g0}");
            }
        }
    }

    #[test]
    fn steady_output_resonance_and_far_detuned() {
        // Δ + χ = 0 for j = 0
        let cfg = single_mode(-1.0);
        assert!(matches!(
            steady_state_output(&cfg, Bitstring::new(0, 1).unwrap(), 1.0),
            Err(Error::Resonance { mode: 0 })
        ));
        let far = single_mode(1e9);
        assert!(steady_state_output(&far, Bitstring::new(0, 1).unwrap(), 1.0).unwrap().norm() < 1e-8);
    }

    #[test]
    fn kappa_scan() {
        let grid: Vec<f64> = (10..=400).map(|i| i as f64 * 0.01).collect();
        let best = optimize_kappa(1.0, &grid).unwrap();
        assert_relative_eq!(best.kappa, 2.0, epsilon = 1e-12);
        assert_relative_eq!(best.separation, 2.0, epsilon = 1e-12);
        // 2κ/(1 + κ²/4) at κ = 1
        assert_relative_eq!(parity_separation(1.0, 1.0).unwrap(), 1.6, epsilon = 1e-12);
        assert!(optimize_kappa(1.0, &[]).is_err());
    }

    #[test]
    fn difference_of_weight_classes_is_full_rank_on_imaginary_axis() {
        let cfg = SystemConfig::parity_default();
        let h0 = build_state_space(&cfg, Bitstring::new(0b000, 3).unwrap()).unwrap();
        let h2 = build_state_space(&cfg, Bitstring::new(0b011, 3).unwrap()).unwrap();
        for w in [0.1, 1.0, 10.0] {
            let s = Complex64::new(0.0, w);
            let diff = h0.transfer(s).unwrap() - h2.transfer(s).unwrap();
            // real 2×2 representation [[a, −b], [b, a]] has determinant a² + b²
            let det = diff.re * diff.re + diff.im * diff.im;
            assert!(det > 1e-6, "rank deficient at ω = {w}");
        }
    }

    fn constant_drive_solution(cfg: &SystemConfig, eps: f64, t: f64) -> Complex64 {
        // 1 mode, j = 0
        let dt = cfg.delta[0] + cfg.chi[0][0];
        let kappa = cfg.kappa[0];
        let rate = Complex64::new(-kappa / 2.0, -dt);
        let ss = -I * kappa.sqrt() * eps / (I * dt + kappa / 2.0);
        ss * (c(1.0) - (rate * t).exp())
    }

    #[test]
    fn constant_drive_matches_closed_form() {
        let cfg = single_mode(0.3);
        let grid = TimeGrid::new(13.5, 2700).unwrap();
        let table =
            integrate_amplitudes(&cfg, &ConstantDrive(0.4811), grid, &AmplitudeOptions::default())
                .unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..grid.len() {
            let exact = constant_drive_solution(&cfg, 0.4811, grid.time(i));
            worst = worst.max((table.alpha(0, 0, i) - exact).norm());
        }
        assert!(worst < 1e-8, "max error {worst:e}");
    }

    #[test]
    fn zero_drive_stays_vacuum() {
        let cfg = SystemConfig::parity_default();
        let grid = TimeGrid::new(13.5, 100).unwrap();
        let table =
            integrate_amplitudes(&cfg, &PulseSpec::off(13.5), grid, &AmplitudeOptions::default())
                .unwrap();
        for i in 0..grid.len() {
            assert!(table.slice(i).iter().all(|a| a.norm() == 0.0));
        }
        let vac = AmplitudeTable::vacuum(grid, 2, 8);
        assert_eq!(
            output_amplitude(&vac, &cfg, Bitstring::new(5, 3).unwrap(), 7).unwrap(),
            c(0.0)
        );
    }

    #[test]
    fn pulse_response_rings_down_and_respects_degeneracy() {
        let cfg = SystemConfig::parity_default();
        let grid = TimeGrid::new(13.5, 1350).unwrap();
        let table =
            integrate_amplitudes(&cfg, &PulseSpec::default(), grid, &AmplitudeOptions::default())
                .unwrap();
        let last = grid.len() - 1;
        let peak = |i: usize| table.slice(i).iter().map(|a| a.norm()).fold(0.0, f64::max);
        assert!(peak(last) < 1e-2);
        assert!(peak(last) < 0.1 * peak(1000));
        // equal popcount → identical signed sums → identical trajectories
        for i in (0..grid.len()).step_by(37) {
            for k in 0..2 {
                let a = table.alpha(k, 0b001, i);
                for j in [0b010, 0b100] {
                    assert!((table.alpha(k, j, i) - a).norm() < 1e-12);
                }
            }
        }
        // on the plateau the output approaches the parity-class steady state
        let i = (7.0 / grid.dt()).round() as usize;
        for j in cfg.bitstrings() {
            let out = output_amplitude(&table, &cfg, j, i).unwrap();
            let ss = steady_state_output(&cfg, j, 0.4811).unwrap();
            assert!((out - ss).norm() < 0.05, "{j}: {out} vs {ss}");
        }
    }

    #[test]
    fn long_constant_drive_reaches_steady_output() {
        let cfg = SystemConfig::parity_default();
        let grid = TimeGrid::new(60.0, 60).unwrap();
        let table =
            integrate_amplitudes(&cfg, &ConstantDrive(1.0), grid, &AmplitudeOptions::default())
                .unwrap();
        for j in cfg.bitstrings() {
            let out = output_amplitude(&table, &cfg, j, 60).unwrap();
            let ss = steady_state_output(&cfg, j, 1.0).unwrap();
            assert!((out - ss).norm() < 1e-8, "{j}: {out} vs {ss}");
        }
    }

    #[test]
    fn output_single_mode_and_bounds() {
        let cfg = single_mode(0.0);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let table = AmplitudeTable::from_fn(grid, 1, 2, |i, j, _| Complex64::new(i as f64, j as f64));
        let out = output_amplitude(&table, &cfg, Bitstring::new(1, 1).unwrap(), 3).unwrap();
        assert!(close(out, Complex64::new(3.0, 1.0) * 2f64.sqrt(), 1e-15));
        assert!(matches!(
            output_amplitude(&table, &cfg, Bitstring::new(1, 1).unwrap(), 5),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn initial_condition_override() {
        let cfg = single_mode(0.0);
        let grid = TimeGrid::new(2.0, 2).unwrap();
        let init = vec![vec![c(1.0)], vec![c(0.5)]];
        let table = integrate_amplitudes(
            &cfg,
            &ConstantDrive(0.0),
            grid,
            &AmplitudeOptions {
                initial: Some(init),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(table.alpha(0, 0, 0), c(1.0));
        assert_eq!(table.alpha(0, 1, 0), c(0.5));
        // free decay e^{(−iΔ̃ − κ/2)t} with Δ̃ = 1, κ = 2
        let expected = (Complex64::new(-1.0, -1.0) * 2.0).exp();
        assert!((table.alpha(0, 0, 2) - expected).norm() < 1e-9);
    }
}
