//! Brute-force reference in the joint register ⊗ truncated-Fock space.
//!
//! The full master equation
//!
//! ```text
//! dρ/dt = −i[H(t), ρ] + 𝒟[Σ_k √κ_k a_k]ρ + ½ Σ_l γ_l 𝒟[σ_z,l]ρ
//! H(t) = Σ_k Δ_k a_k†a_k + Σ_l h_l σ_z,l + Σ_{k,l} χ_{k,l} σ_z,l a_k†a_k
//!        + ε(t) Σ_k √κ_k (a_k + a_k†)
//! ```
//!
//! is integrated with classical RK4. Only meant for a couple of qubits and
//! modes; it exists to check the pointer-state reduction.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::cavity::Drive;
use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::model::{Bitstring, SystemConfig};
use crate::srk::rk4_step;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Population allowed in the highest retained Fock level.
pub const TRUNCATION_LIMIT: f64 = 1e-6;

/// Joint register–resonator state. Basis index is `j·F + f` with `j` the
/// register bitstring, `f = Σ_k n_k·n_max^k` and `F = n_max^{modes}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub rho: DMatrix<Complex64>,
    pub n_qubits: usize,
    pub n_modes: usize,
    pub n_max: usize,
}

impl FullState {
    fn fock_dim(&self) -> usize {
        self.n_max.pow(self.n_modes as u32)
    }

    /// ρ_Q ⊗ |0⟩⟨0|.
    pub fn with_vacuum(rho_q: &DensityMatrix, n_modes: usize, n_max: usize) -> Self {
        let f = n_max.pow(n_modes as u32);
        let n = rho_q.dim();
        let mut rho = DMatrix::zeros(n * f, n * f);
        for r in 0..n {
            for c in 0..n {
                rho[(r * f, c * f)] = rho_q.0[(r, c)];
            }
        }
        Self {
            rho,
            n_qubits: rho_q.n_qubits(),
            n_modes,
            n_max,
        }
    }

    /// Σ_ij ρ_ij |i⟩⟨j| ⊗ |α_i⟩⟨α_j| with truncated coherent states; `alphas`
    /// is indexed `[bitstring][mode]`.
    pub fn pointer_state(rho_q: &DensityMatrix, alphas: &[Vec<Complex64>], n_max: usize) -> Self {
        let n_modes = alphas.first().map_or(0, Vec::len);
        let vecs: Vec<DVector<Complex64>> = alphas.iter().map(|a| product_coherent(a, n_max)).collect();
        let f = vecs.first().map_or(1, |v| v.len());
        let n = rho_q.dim();
        let mut rho = DMatrix::zeros(n * f, n * f);
        for r in 0..n {
            for c in 0..n {
                let block = &vecs[r] * vecs[c].adjoint() * rho_q.0[(r, c)];
                rho.view_mut((r * f, c * f), (f, f)).copy_from(&block);
            }
        }
        Self {
            rho,
            n_qubits: rho_q.n_qubits(),
            n_modes,
            n_max,
        }
    }

    /// Partial trace over the resonators.
    pub fn reduce(&self) -> DensityMatrix {
        let f = self.fock_dim();
        let n = 1usize << self.n_qubits;
        DensityMatrix(DMatrix::from_fn(n, n, |r, c| {
            (0..f).map(|m| self.rho[(r * f + m, c * f + m)]).sum()
        }))
    }

    /// Total population with any mode in its highest retained level.
    pub fn top_population(&self) -> f64 {
        let f = self.fock_dim();
        let n = 1usize << self.n_qubits;
        let mut p = 0.0;
        for j in 0..n {
            for m in 0..f {
                if digits(m, self.n_max, self.n_modes).any(|d| d == self.n_max - 1) {
                    p += self.rho[(j * f + m, j * f + m)].re;
                }
            }
        }
        p
    }

    /// ⟨a_k⟩ in the resonator state conditioned on register basis state `j`.
    pub fn conditioned_field(&self, k: usize, j: usize) -> Result<Complex64> {
        let f = self.fock_dim();
        let a = mode_lowering(k, self.n_modes, self.n_max);
        let block = self.rho.view((j * f, j * f), (f, f));
        let weight = block.trace();
        if weight.norm() < 1e-14 {
            return Err(Error::Domain(format!("register state {j} is unpopulated")));
        }
        Ok((a * block).trace() / weight)
    }
}

fn digits(mut m: usize, base: usize, count: usize) -> impl Iterator<Item = usize> {
    (0..count).map(move |_| {
        let d = m % base;
        m /= base;
        d
    })
}

/// Lowering operator of mode `k` on the resonator factor only.
fn mode_lowering(k: usize, n_modes: usize, n_max: usize) -> DMatrix<Complex64> {
    let f = n_max.pow(n_modes as u32);
    let stride = n_max.pow(k as u32);
    let mut a = DMatrix::zeros(f, f);
    for m in 0..f {
        let n = (m / stride) % n_max;
        if n > 0 {
            a[(m - stride, m)] = Complex64::new((n as f64).sqrt(), 0.0);
        }
    }
    a
}

fn coherent(alpha: Complex64, n_max: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n_max);
    let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..n_max {
        out.push(c);
        c *= alpha / ((n + 1) as f64).sqrt();
    }
    out
}

fn product_coherent(alphas: &[Complex64], n_max: usize) -> DVector<Complex64> {
    let f = n_max.pow(alphas.len() as u32);
    let factors: Vec<Vec<Complex64>> = alphas.iter().map(|a| coherent(*a, n_max)).collect();
    DVector::from_fn(f, |m, _| {
        digits(m, n_max, alphas.len())
            .enumerate()
            .map(|(k, d)| factors[k][d])
            .product()
    })
}

/// ⟨β|α⟩ for untruncated coherent states.
pub fn coherent_overlap(beta: Complex64, alpha: Complex64) -> Complex64 {
    (-0.5 * alpha.norm_sqr() - 0.5 * beta.norm_sqr() + beta.conj() * alpha).exp()
}

#[derive(Debug, Clone)]
pub struct FockOptions {
    pub n_max: usize,
    pub n_steps: usize,
    pub tau: f64,
    /// Qubit energies `h_l` of `Σ_l h_l σ_z,l`.
    pub qubit_energies: Vec<f64>,
    /// Store every this many steps (plus the final state).
    pub record_every: usize,
}

impl FockOptions {
    /// `h_l = Σ_k χ_{k,l}` and `n_max = 12`.
    pub fn for_config(config: &SystemConfig, tau: f64, n_steps: usize) -> Self {
        Self {
            n_max: 12,
            n_steps,
            tau,
            qubit_energies: (0..config.n_qubits)
                .map(|l| (0..config.n_modes).map(|k| config.chi[k][l]).sum())
                .collect(),
            record_every: 1,
        }
    }
}

struct Generator {
    h0: DMatrix<Complex64>,
    hd: DMatrix<Complex64>,
    loss: DMatrix<Complex64>,
    loss_dag: DMatrix<Complex64>,
    loss_sq: DMatrix<Complex64>,
    /// Elementwise factor of ½Σγ𝒟[σ_z].
    dephasing: DMatrix<Complex64>,
}

impl Generator {
    fn new(config: &SystemConfig, opts: &FockOptions) -> Self {
        let n = config.dim();
        let m = config.n_modes;
        let f = opts.n_max.pow(m as u32);
        let dim = n * f;
        let lowering: Vec<DMatrix<Complex64>> = (0..m).map(|k| mode_lowering(k, m, opts.n_max)).collect();
        let embed = |op: &DMatrix<Complex64>| DMatrix::<Complex64>::identity(n, n).kronecker(op);

        let mut h0 = DMatrix::zeros(dim, dim);
        let mut hd = DMatrix::zeros(dim, dim);
        let mut loss = DMatrix::zeros(dim, dim);
        let states: Vec<Bitstring> = config.bitstrings().collect();
        for k in 0..m {
            let a = &lowering[k];
            let number = a.adjoint() * a;
            let mut zdiag = DMatrix::zeros(n, n);
            for j in &states {
                zdiag[(j.value(), j.value())] = Complex64::new(config.delta[k] + j.signed_chi_sum(config, k), 0.0);
            }
            h0 += zdiag.kronecker(&number);
            let sk = config.kappa[k].sqrt();
            hd += embed(&((a + a.adjoint()) * Complex64::new(sk, 0.0)));
            loss += embed(&(a * Complex64::new(sk, 0.0)));
        }
        for j in &states {
            let e: f64 = opts
                .qubit_energies
                .iter()
                .enumerate()
                .map(|(l, h)| j.sign(l) * h)
                .sum();
            for q in 0..f {
                h0[(j.value() * f + q, j.value() * f + q)] += e;
            }
        }
        let dephasing = DMatrix::from_fn(dim, dim, |r, c| {
            let (jr, jc) = (r / f, c / f);
            let rate: f64 = (0..config.n_qubits)
                .filter(|l| (jr ^ jc) >> l & 1 == 1)
                .map(|l| config.gamma_z[l])
                .sum();
            Complex64::new(-rate, 0.0)
        });
        let loss_dag = loss.adjoint();
        let loss_sq = &loss_dag * &loss;
        Self {
            h0,
            hd,
            loss,
            loss_dag,
            loss_sq,
            dephasing,
        }
    }

    fn apply(&self, eps: f64, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let h = &self.h0 + &self.hd * Complex64::new(eps, 0.0);
        let hr = &h * rho;
        let mut out = (&hr - hr.adjoint()) * (-I);
        out += &self.loss * rho * &self.loss_dag;
        let lr = &self.loss_sq * rho;
        out -= (&lr + lr.adjoint()) * Complex64::new(0.5, 0.0);
        out += self.dephasing.component_mul(rho);
        out
    }
}

/// Integrates the full master equation from `initial` over `[0, opts.tau]`.
pub fn integrate_full(
    config: &SystemConfig,
    drive: &dyn Drive,
    initial: &FullState,
    opts: &FockOptions,
) -> Result<Vec<(f64, FullState)>> {
    let config = config.clone().validated()?;
    if initial.n_qubits != config.n_qubits || initial.n_modes != config.n_modes || initial.n_max != opts.n_max {
        return Err(Error::Domain("initial state does not match the configuration".into()));
    }
    if opts.n_steps == 0 || opts.n_max < 2 {
        return Err(Error::Domain("need n_steps > 0 and n_max ≥ 2".into()));
    }
    let gen = Generator::new(&config, opts);
    let dt = opts.tau / opts.n_steps as f64;
    let every = opts.record_every.max(1);
    let mut state = initial.clone();
    let mut out = vec![(0.0, state.clone())];
    for n in 0..opts.n_steps {
        let t = n as f64 * dt;
        state.rho = rk4_step(|s, x: &DMatrix<Complex64>| gen.apply(drive.amplitude(s), x), t, &state.rho, dt);
        let t1 = if n + 1 == opts.n_steps { opts.tau } else { t + dt };
        let top = state.top_population();
        if top >= TRUNCATION_LIMIT {
            return Err(Error::Truncation {
                t: t1,
                population: top,
            });
        }
        if (n + 1) % every == 0 || n + 1 == opts.n_steps {
            out.push((t1, state.clone()));
        }
    }
    Ok(out)
}
