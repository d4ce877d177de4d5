//! Register density matrices and the named states used throughout.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Bitstring;

/// A 2ⁿ×2ⁿ register state in the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub DMatrix<Complex64>);

/// Invariant deviations of one density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateHealth {
    pub trace_deviation: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
    pub purity: f64,
}

impl DensityMatrix {
    pub fn new(rho: DMatrix<Complex64>) -> Result<Self> {
        if !rho.is_square() || !rho.nrows().is_power_of_two() {
            return Err(Error::Domain(format!(
                "{}x{} is not a register density matrix",
                rho.nrows(),
                rho.ncols()
            )));
        }
        Ok(Self(rho))
    }

    pub fn from_pure(psi: &DVector<Complex64>) -> Self {
        Self(psi * psi.adjoint())
    }

    /// |+⟩^{⊗n}.
    pub fn plus_state(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        let amp = Complex64::new((dim as f64).powf(-0.5), 0.0);
        Self::from_pure(&DVector::from_element(dim, amp))
    }

    /// Equal superposition of all basis states with even (`even = true`) or
    /// odd popcount.
    pub fn parity_state(n_qubits: usize, even: bool) -> Self {
        Self::from_pure(&parity_vector(n_qubits, even))
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        Self(DMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0))
    }

    pub fn basis(n_qubits: usize, j: usize) -> Self {
        let dim = 1 << n_qubits;
        let mut rho = DMatrix::zeros(dim, dim);
        rho[(j, j)] = Complex64::new(1.0, 0.0);
        Self(rho)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Largest entry of |ρ − ρ†|.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.0[(r, c)] - self.0[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// tr(ρ²).
    pub fn purity(&self) -> f64 {
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..n {
            for c in 0..n {
                acc += self.0[(r, c)] * self.0[(c, r)];
            }
        }
        acc.re
    }

    pub fn health(&self) -> StateHealth {
        StateHealth {
            trace_deviation: (self.trace() - Complex64::new(1.0, 0.0)).norm(),
            hermiticity: self.hermiticity_deviation(),
            min_eigenvalue: self.eigenvalues().first().copied().unwrap_or(0.0),
            purity: self.purity(),
        }
    }

    /// ⟨ψ|ρ|ψ⟩ (real part).
    pub fn expectation_in(&self, psi: &DVector<Complex64>) -> f64 {
        (psi.adjoint() * &self.0 * psi)[(0, 0)].re
    }

    /// Populations of the even and odd popcount subspaces.
    pub fn parity_populations(&self) -> (f64, f64) {
        let n = self.n_qubits();
        let mut even = 0.0;
        let mut odd = 0.0;
        for j in Bitstring::all(n) {
            let p = self.0[(j.value(), j.value())].re;
            if j.is_even() {
                even += p;
            } else {
                odd += p;
            }
        }
        (even, odd)
    }
}

pub fn parity_vector(n_qubits: usize, even: bool) -> DVector<Complex64> {
    let dim = 1usize << n_qubits;
    let members = Bitstring::all(n_qubits).filter(|j| j.is_even() == even).count();
    let amp = Complex64::new((members as f64).powf(-0.5), 0.0);
    DVector::from_fn(dim, |j, _| {
        if Bitstring::new(j, n_qubits).expect("in range").is_even() == even {
            amp
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Normalized superposition of the listed basis states.
pub fn superposition(n_qubits: usize, members: &[usize]) -> DVector<Complex64> {
    let dim = 1usize << n_qubits;
    let mut psi = DVector::zeros(dim);
    let amp = Complex64::new((members.len() as f64).powf(-0.5), 0.0);
    for &m in members {
        psi[m] += amp;
    }
    psi
}
