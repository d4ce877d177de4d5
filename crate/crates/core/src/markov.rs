//! Non-Markovianity of the reduced register dynamics.
//!
//! For a single mode the coupling term of the register equation can be written
//! as `−i(α̂σ̄ρα̂† − α̂ρσ̄α̂†)` with diagonal `α̂ = diag(α_i)` and
//! `σ̄ = Σ_l χ_l σ_z,l`. Expanding both operators in a trace-orthogonal basis
//! `{𝟙, F₁, F₂}` gives a 2×2 coefficient matrix on `(F₁, F₂)` which has one
//! negative eigenvalue, so the generator is not of Lindblad form.
//!
//! The trace-distance witness evolves two states under the unconditioned
//! equation; any increase of their distance rules out a Markovian semigroup.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::cavity::{integrate_amplitudes, AmplitudeOptions, AmplitudeTable, Drive};
use crate::density::{parity_vector, DensityMatrix};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::SystemConfig;
use crate::sme::{simulate_deterministic, Frame};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Coefficients of the coupling term in the `(F₁, F₂)` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    /// `a_nm` multiplying `F̂_n ρ F̂_m†` for the unit-norm `F̂_n`.
    pub entries: [[Complex64; 2]; 2],
    pub x: f64,
    /// `F₁` and `F₂` as diagonals.
    pub f1: Vec<Complex64>,
    pub f2: Vec<Complex64>,
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // tr(A B†) for diagonal operators
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    inner(a, a).re.sqrt()
}

impl CoefficientMatrix {
    /// `[[2x, i], [−i, 0]]`: the entries with the basis norms divided out.
    pub fn normalized(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(2.0 * self.x, 0.0), I, -I, Complex64::new(0.0, 0.0)],
        )
    }

    /// Eigenvalues of [`Self::normalized`], ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let ev = self.normalized().symmetric_eigenvalues();
        let (a, b) = (ev[0], ev[1]);
        if a <= b {
            [a, b]
        } else {
            [b, a]
        }
    }

    pub fn negative_count(&self) -> usize {
        self.eigenvalues().iter().filter(|e| **e < 0.0).count()
    }

    pub fn norms(&self) -> (f64, f64) {
        (norm(&self.f1), norm(&self.f2))
    }
}

/// Builds the coefficient matrix for diagonal `α̂` and `σ̄` (given by their
/// diagonals).
pub fn coefficient_matrix(alpha_hat: &[Complex64], sigma_bar: &[f64]) -> Result<CoefficientMatrix> {
    let n = alpha_hat.len();
    if n != sigma_bar.len() || n == 0 {
        return Err(Error::Domain("alpha_hat and sigma_bar must have equal, non-zero length".into()));
    }
    let scale = norm(alpha_hat).max(f64::MIN_POSITIVE);
    let mean_a = alpha_hat.iter().sum::<Complex64>() / n as f64;
    let f1: Vec<Complex64> = alpha_hat.iter().map(|a| a - mean_a).collect();
    let n1 = norm(&f1);
    if n1 <= 1e-12 * scale {
        return Err(Error::Degenerate("alpha_hat is proportional to the identity".into()));
    }
    if n == 2 {
        return Err(Error::Inapplicable(
            "a single qubit leaves no room for an operator orthogonal to 1 and F1".into(),
        ));
    }

    let g: Vec<Complex64> = alpha_hat.iter().zip(sigma_bar).map(|(a, s)| a * s).collect();
    let mean_g = g.iter().sum::<Complex64>() / n as f64;
    let c = inner(&g, &f1) / (n1 * n1);
    let f2: Vec<Complex64> = g.iter().zip(&f1).map(|(gi, fi)| gi - mean_g - c * fi).collect();
    let n2 = norm(&f2);
    if n2 <= 1e-12 * norm(&g).max(f64::MIN_POSITIVE) {
        return Err(Error::Inapplicable("alpha_hat·sigma_bar lies in span(1, F1)".into()));
    }

    let x = c.im;
    let entries = [
        [Complex64::new(2.0 * x * n1 * n1, 0.0), I * n1 * n2],
        [-I * n1 * n2, Complex64::new(0.0, 0.0)],
    ];
    Ok(CoefficientMatrix { entries, x, f1, f2 })
}

/// One coefficient matrix per mode at table index `i_t`. Their sum describes
/// the multi-mode coupling term but is not guaranteed to stay indefinite.
pub fn mode_coefficient_matrices(
    config: &SystemConfig,
    table: &AmplitudeTable,
    i_t: usize,
) -> Vec<Result<CoefficientMatrix>> {
    (0..config.n_modes)
        .map(|k| {
            let sigma: Vec<f64> = config.bitstrings().map(|j| j.signed_chi_sum(config, k)).collect();
            coefficient_matrix(&table.mode_column(k, i_t), &sigma)
        })
        .collect()
}

/// ½‖ρ₁ − ρ₂‖₁.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> f64 {
    let d = &rho1.0 - &rho2.0;
    0.5 * d.singular_values().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationInterval {
    pub start: f64,
    pub end: f64,
    /// D(end) − D(start).
    pub rise: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessResult {
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub violations: Vec<ViolationInterval>,
}

impl WitnessResult {
    pub fn max_rise(&self) -> f64 {
        self.violations.iter().map(|v| v.rise).fold(0.0, f64::max)
    }
}

/// Slope threshold separating genuine increases from integrator noise.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-9;

/// Maximal intervals on which the discrete derivative exceeds `tol`.
pub fn increasing_intervals(times: &[f64], values: &[f64], tol: f64) -> Vec<ViolationInterval> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for i in 0..values.len().saturating_sub(1) {
        let slope = (values[i + 1] - values[i]) / (times[i + 1] - times[i]);
        match (slope > tol, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                out.push(ViolationInterval {
                    start: times[s],
                    end: times[i],
                    rise: values[i] - values[s],
                });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        let last = values.len() - 1;
        out.push(ViolationInterval {
            start: times[s],
            end: times[last],
            rise: values[last] - values[s],
        });
    }
    out
}

/// Trace distance between the unconditioned evolutions of two initial states.
pub fn pair_witness(
    config: &SystemConfig,
    drive: &dyn Drive,
    tau: f64,
    n_steps: usize,
    rho_a: &DensityMatrix,
    rho_b: &DensityMatrix,
) -> Result<WitnessResult> {
    let grid = TimeGrid::new(tau, 2 * n_steps)?;
    let table = integrate_amplitudes(config, drive, grid, &AmplitudeOptions::default())?;
    let (a, b) = rayon::join(
        || simulate_deterministic(config, &table, n_steps, rho_a, &Frame::Rotating),
        || simulate_deterministic(config, &table, n_steps, rho_b, &Frame::Rotating),
    );
    let (a, b) = (a?, b?);
    let times: Vec<f64> = a.iter().map(|(t, _)| *t).collect();
    let distance: Vec<f64> = a.iter().zip(&b).map(|((_, x), (_, y))| trace_distance(x, y)).collect();
    let violations = increasing_intervals(&times, &distance, MONOTONICITY_TOLERANCE);
    Ok(WitnessResult {
        times,
        distance,
        violations,
    })
}

/// Distance between the evolved even and odd parity eigenstates with
/// intrinsic dephasing switched off.
pub fn witness_scan(config: &SystemConfig, pulse: &crate::pulse::PulseSpec, n_steps: usize) -> Result<WitnessResult> {
    let mut config = config.clone();
    config.gamma_z = vec![0.0; config.n_qubits];
    let n = config.n_qubits;
    let plus = DensityMatrix::from_pure(&parity_vector(n, true));
    let minus = DensityMatrix::from_pure(&parity_vector(n, false));
    pair_witness(&config, pulse, pulse.tau, n_steps, &plus, &minus)
}

/// Normalized `(|a⟩ + e^{iθ}|b⟩)/√2` as a density matrix.
pub fn two_level_superposition(n_qubits: usize, a: usize, b: usize, theta: f64) -> DensityMatrix {
    let mut psi = DVector::zeros(1 << n_qubits);
    let s = 0.5f64.sqrt();
    psi[a] = Complex64::new(s, 0.0);
    psi[b] = Complex64::from_polar(s, theta);
    DensityMatrix::from_pure(&psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::ConstantDrive;
    use crate::pulse::PulseSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n_qubits: usize) -> (Vec<Complex64>, Vec<f64>) {
        let dim = 1usize << n_qubits;
        let alpha = (0..dim)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let chi: Vec<f64> = (0..n_qubits).map(|_| rng.random_range(0.2..1.5)).collect();
        let sigma = (0..dim)
            .map(|j| {
                (0..n_qubits)
                    .map(|l| if j >> l & 1 == 0 { chi[l] } else { -chi[l] })
                    .sum()
            })
            .collect();
        (alpha, sigma)
    }

    fn diag(v: &[Complex64]) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    /// Superoperator of ρ ↦ −i(GρA† − AρG†) on row-major vec(ρ), built by
    /// acting on matrix units.
    fn coupling_superop(alpha: &[Complex64], sigma: &[f64]) -> DMatrix<Complex64> {
        let n = alpha.len();
        let a = diag(alpha);
        let g = diag(&alpha.iter().zip(sigma).map(|(x, s)| x * s).collect::<Vec<_>>());
        let mut s = DMatrix::zeros(n * n, n * n);
        for p in 0..n {
            for q in 0..n {
                let mut e = DMatrix::zeros(n, n);
                e[(p, q)] = Complex64::new(1.0, 0.0);
                let out = (&g * &e * a.adjoint() - &a * &e * g.adjoint()) * (-I);
                for r in 0..n {
                    for c in 0..n {
                        s[(r * n + c, p * n + q)] = out[(r, c)];
                    }
                }
            }
        }
        s
    }

    /// Row-major vec(XρY†) = (X ⊗ conj(Y)) vec(ρ).
    fn sandwich(x: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        x.kronecker(&y.map(|z| z.conj()))
    }

    #[test]
    fn coefficients_match_superoperator_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n_qubits in [2, 3] {
            for _ in 0..20 {
                let (alpha, sigma) = random_instance(&mut rng, n_qubits);
                let cm = coefficient_matrix(&alpha, &sigma).unwrap();
                let (n1, n2) = cm.norms();
                let dim = alpha.len();
                let basis = [
                    DMatrix::identity(dim, dim) * Complex64::new((dim as f64).powf(-0.5), 0.0),
                    diag(&cm.f1) / Complex64::new(n1, 0.0),
                    diag(&cm.f2) / Complex64::new(n2, 0.0),
                ];
                let s = coupling_superop(&alpha, &sigma);
                let mut recon = DMatrix::zeros(dim * dim, dim * dim);
                for (n, bn) in basis.iter().enumerate() {
                    for (m, bm) in basis.iter().enumerate() {
                        let op = sandwich(bn, bm);
                        let a_nm = op.dotc(&s);
                        recon += op * a_nm;
                        if n > 0 && m > 0 {
                            assert!((a_nm - cm.entries[n - 1][m - 1]).norm() < 1e-12, "{n}{m}");
                        }
                    }
                }
                assert!((recon - s).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn basis_is_trace_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (alpha, sigma) = random_instance(&mut rng, 3);
            let cm = coefficient_matrix(&alpha, &sigma).unwrap();
            assert!(cm.f1.iter().sum::<Complex64>().norm() < 1e-12);
            assert!(cm.f2.iter().sum::<Complex64>().norm() < 1e-12);
            assert!(inner(&cm.f2, &cm.f1).norm() < 1e-12);
        }
    }

    #[test]
    fn real_overlap_gives_unit_eigenvalues() {
        // real α̂ makes tr(α̂σ̄F₁†) real
        let alpha: Vec<Complex64> = [0.3, -0.2, 0.9, 0.1].iter().map(|&a| Complex64::new(a, 0.0)).collect();
        let sigma = [2.0, 0.0, 0.0, -2.0];
        let cm = coefficient_matrix(&alpha, &sigma).unwrap();
        assert_eq!(cm.x, 0.0);
        let ev = cm.eigenvalues();
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_and_single_qubit_cases() {
        let flat = vec![Complex64::new(0.4, 0.1); 4];
        assert!(matches!(coefficient_matrix(&flat, &[1.0, 0.0, 0.0, -1.0]), Err(Error::Degenerate(_))));
        let one = [Complex64::new(0.4, 0.1), Complex64::new(-0.3, 0.2)];
        assert!(matches!(coefficient_matrix(&one, &[1.0, -1.0]), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn trace_distance_cases() {
        let plus = DensityMatrix::parity_state(3, true);
        let minus = DensityMatrix::parity_state(3, false);
        assert!(trace_distance(&plus, &plus).abs() < 1e-15);
        assert!((trace_distance(&plus, &minus) - 1.0).abs() < 1e-14);
        assert!((trace_distance(&plus, &DensityMatrix::maximally_mixed(3)) - 0.875).abs() < 1e-14);
    }

    #[test]
    fn intervals_are_maximal() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let v = [1.0, 0.9, 0.95, 0.97, 0.96, 0.99];
        let iv = increasing_intervals(&t, &v, 1e-9);
        assert_eq!(iv.len(), 2);
        assert_eq!((iv[0].start, iv[0].end), (1.0, 3.0));
        assert!((iv[0].rise - 0.07).abs() < 1e-12);
        assert_eq!((iv[1].start, iv[1].end), (4.0, 5.0));
    }

    #[test]
    fn undriven_witness_is_flat() {
        let cfg = SystemConfig::parity_default();
        let w = witness_scan(&cfg, &PulseSpec::off(13.5), 200).unwrap();
        assert!((w.distance[0] - 1.0).abs() < 1e-14);
        assert!(w.distance.iter().all(|d| (d - 1.0).abs() < 1e-12));
        assert!(w.violations.is_empty());
    }

    #[test]
    fn parity_eigenstates_stay_orthogonal() {
        // the drift never mixes the even and odd blocks
        let cfg = SystemConfig::parity_default();
        let w = witness_scan(&cfg, &PulseSpec::default(), 1000).unwrap();
        assert!(w.distance.iter().all(|d| (d - 1.0).abs() < 1e-12));
    }

    #[test]
    fn same_parity_pair_can_regain_distinguishability() {
        // |001⟩ ± |111⟩ differ only in a coherence whose coupling rate has an
        // indefinite real part, so the distance falls and partially recovers
        let mut cfg = SystemConfig::parity_default();
        cfg.gamma_z = vec![0.0; 3];
        let a = two_level_superposition(3, 0b001, 0b111, 0.0);
        let b = two_level_superposition(3, 0b001, 0b111, std::f64::consts::PI);
        let w = pair_witness(&cfg, &ConstantDrive(0.4811), 13.5, 1350, &a, &b).unwrap();
        assert!(w.max_rise() > 1e-3, "{:?}", w.violations);
    }

    proptest! {
        #[test]
        fn trace_distance_is_a_metric(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = || {
                let g = DMatrix::from_fn(4, 4, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                let r = &g * g.adjoint();
                let tr = r.trace();
                DensityMatrix(r / tr)
            };
            let (a, b, c) = (state(), state(), state());
            let ab = trace_distance(&a, &b);
            prop_assert!((ab - trace_distance(&b, &a)).abs() < 1e-12);
            prop_assert!(ab <= trace_distance(&a, &c) + trace_distance(&c, &b) + 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));

            let h = DMatrix::from_fn(4, 4, |r, c| Complex64::new((r * 3 + c) as f64 * 0.1, r as f64 - c as f64));
            let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
            let u = (h * Complex64::new(0.0, -1.0)).exp();
            let rot = |x: &DensityMatrix| DensityMatrix(&u * &x.0 * u.adjoint());
            prop_assert!((trace_distance(&rot(&a), &rot(&b)) - ab).abs() < 1e-10);
        }

        #[test]
        fn exactly_one_negative_eigenvalue(seed in 0u64..1000, three in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (alpha, sigma) = random_instance(&mut rng, if three { 3 } else { 2 });
            let cm = coefficient_matrix(&alpha, &sigma).unwrap();
            let ev = cm.eigenvalues();
            let root = (cm.x * cm.x + 1.0).sqrt();
            prop_assert!((ev[0] - (cm.x - root)).abs() < 1e-12);
            prop_assert!((ev[1] - (cm.x + root)).abs() < 1e-12);
            prop_assert_eq!(cm.negative_count(), 1);
        }
    }
}
