//! Physical parameters, unit conventions and register bitstring combinatorics.
//!
//! All quantities are dimensionless in units where the dispersive coupling
//! scale χ is 1: rates and detunings in χ, times in 1/χ, drive amplitudes in √χ.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::PulseSpec;

/// Parameters of the qubit register, the internal resonator modes and the
/// homodyne detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_qubits: usize,
    pub n_modes: usize,
    /// Dispersive couplings, indexed `chi[mode][qubit]`.
    pub chi: Vec<Vec<f64>>,
    /// Photon loss rate of each mode.
    pub kappa: Vec<f64>,
    /// Detuning of each mode from the measurement tone.
    pub delta: Vec<f64>,
    /// Intrinsic dephasing rate of each qubit.
    pub gamma_z: Vec<f64>,
    /// Homodyne efficiency.
    pub eta: f64,
    /// Homodyne phase in radians.
    #[serde(default)]
    pub phi: f64,
}

/// A single failed invariant of a [`SystemConfig`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl SystemConfig {
    /// Uniform coupling `chi` between every mode and qubit.
    pub fn uniform(
        n_qubits: usize,
        kappa: Vec<f64>,
        delta: Vec<f64>,
        chi: f64,
        gamma_z: f64,
        eta: f64,
    ) -> Result<Self> {
        let n_modes = kappa.len();
        let config = Self {
            n_qubits,
            n_modes,
            chi: vec![vec![chi; n_qubits]; n_modes],
            kappa,
            delta,
            gamma_z: vec![gamma_z; n_qubits],
            eta,
            phi: 0.0,
        };
        config.validated()
    }

    /// Three qubits read out through two modes with κ = 2, Δ = ±√3,
    /// γ_z = 1/300 and unit efficiency.
    pub fn parity_default() -> Self {
        let (d0, d1) = parity_config(2.0, 2.0, 1.0).expect("positive inputs");
        Self {
            n_qubits: 3,
            n_modes: 2,
            chi: vec![vec![1.0; 3]; 2],
            kappa: vec![2.0, 2.0],
            delta: vec![d0, d1],
            gamma_z: vec![1.0 / 300.0; 3],
            eta: 1.0,
            phi: 0.0,
        }
    }

    pub fn validated(self) -> Result<Self> {
        let violations = validate(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(
                violations.iter().map(ToString::to_string).collect(),
            ))
        }
    }

    /// Dimension of the register Hilbert space, 2^n.
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// The common coupling if every χ_{k,l} is equal.
    pub fn uniform_chi(&self) -> Option<f64> {
        let first = *self.chi.first()?.first()?;
        self.chi
            .iter()
            .flatten()
            .all(|&c| c == first)
            .then_some(first)
    }

    pub fn bitstrings(&self) -> impl Iterator<Item = Bitstring> {
        Bitstring::all(self.n_qubits)
    }

    /// A copy with all qubit-resonator couplings set to zero.
    pub fn without_coupling(&self) -> Self {
        let mut out = self.clone();
        for row in &mut out.chi {
            row.iter_mut().for_each(|c| *c = 0.0);
        }
        out
    }
}

/// Checks every [`SystemConfig`] invariant, returning one entry per failure.
pub fn validate(config: &SystemConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field, message: String| out.push(Violation { field, message });

    if config.n_qubits == 0 {
        push("n_qubits", "must be positive".into());
    }
    if config.n_qubits > 16 {
        push("n_qubits", format!("{} qubits is beyond supported size", config.n_qubits));
    }
    if config.n_modes == 0 {
        push("n_modes", "must be positive".into());
    }
    if config.chi.len() != config.n_modes
        || config.chi.iter().any(|row| row.len() != config.n_qubits)
    {
        push(
            "chi",
            format!("expected shape {}x{}", config.n_modes, config.n_qubits),
        );
    }
    if config.chi.iter().flatten().any(|c| !c.is_finite()) {
        push("chi", "entries must be finite".into());
    }
    if config.kappa.len() != config.n_modes {
        push("kappa", format!("expected length {}", config.n_modes));
    }
    if let Some(k) = config.kappa.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
        push("kappa", format!("rate {k} is negative or not finite"));
    }
    if config.delta.len() != config.n_modes {
        push("delta", format!("expected length {}", config.n_modes));
    }
    if config.delta.iter().any(|d| !d.is_finite()) {
        push("delta", "entries must be finite".into());
    }
    if config.gamma_z.len() != config.n_qubits {
        push("gamma_z", format!("expected length {}", config.n_qubits));
    }
    if let Some(g) = config.gamma_z.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
        push("gamma_z", format!("rate {g} is negative or not finite"));
    }
    if !(0.0..=1.0).contains(&config.eta) {
        push("eta", format!("efficiency {} outside [0, 1]", config.eta));
    }
    if !config.phi.is_finite() {
        push("phi", "must be finite".into());
    }
    out
}

/// Detunings that equalize the steady-state outputs within each parity class
/// of a three-qubit register read out through two modes.
pub fn parity_config(kappa0: f64, kappa1: f64, chi: f64) -> Result<(f64, f64)> {
    for (name, v) in [("kappa0", kappa0), ("kappa1", kappa1), ("chi", chi)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} = {v} must be positive")));
        }
    }
    Ok((
        chi * (3.0 * kappa0 / kappa1).sqrt(),
        -chi * (3.0 * kappa1 / kappa0).sqrt(),
    ))
}

/// A computational basis state of the register. Bit `l` of `value` is qubit
/// `l`; bit value 0 is the σ_z = +1 eigenstate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bitstring {
    value: usize,
    n: usize,
}

impl Bitstring {
    pub fn new(value: usize, n: usize) -> Result<Self> {
        if n >= usize::BITS as usize || value >> n != 0 {
            return Err(Error::Domain(format!("{value} is not an {n}-bit string")));
        }
        Ok(Self { value, n })
    }

    pub fn all(n: usize) -> impl Iterator<Item = Bitstring> {
        (0..1usize << n).map(move |value| Bitstring { value, n })
    }

    pub fn value(self) -> usize {
        self.value
    }

    pub fn len(self) -> usize {
        self.n
    }

    pub fn is_empty(self) -> bool {
        self.n == 0
    }

    pub fn bit(self, l: usize) -> u8 {
        ((self.value >> l) & 1) as u8
    }

    /// σ_z eigenvalue of qubit `l`, (−1)^{j_l}.
    pub fn sign(self, l: usize) -> f64 {
        if self.bit(l) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn popcount(self) -> u32 {
        self.value.count_ones()
    }

    /// (−1)^{popcount}.
    pub fn parity(self) -> i8 {
        if self.popcount() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn is_even(self) -> bool {
        self.parity() == 1
    }

    pub fn flip(self, l: usize) -> Self {
        Self {
            value: self.value ^ (1 << l),
            n: self.n,
        }
    }

    /// Σ_l (−1)^{j_l} χ_{k,l}: the dispersive shift of mode `k`.
    pub fn signed_chi_sum(self, config: &SystemConfig, k: usize) -> f64 {
        config.chi[k]
            .iter()
            .enumerate()
            .map(|(l, c)| self.sign(l) * c)
            .sum()
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in 0..self.n {
            write!(f, "{}", self.bit(l))?;
        }
        Ok(())
    }
}

/// On-disk configuration document: the system parameters plus an optional
/// pulse block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseSpec>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            system: SystemConfig::parity_default(),
            pulse: Some(PulseSpec::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parity_detunings() {
        let (d0, d1) = parity_config(2.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(d0, 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(d1, -(3f64.sqrt()), epsilon = 1e-15);

        let (d0, d1) = parity_config(6.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(d0, 3.0, epsilon = 1e-15);
        assert_relative_eq!(d1, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn parity_detunings_swap_symmetry() {
        for (k0, k1, chi) in [(1.0, 3.0, 1.0), (0.5, 2.5, 0.7), (4.0, 0.1, 2.0)] {
            let (a0, a1) = parity_config(k0, k1, chi).unwrap();
            let (b0, b1) = parity_config(k1, k0, chi).unwrap();
            assert_relative_eq!(b0, -a1, epsilon = 1e-14);
            assert_relative_eq!(b1, -a0, epsilon = 1e-14);
        }
    }

    #[test]
    fn parity_detunings_reject_nonpositive() {
        assert!(matches!(parity_config(0.0, 2.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(parity_config(2.0, -1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(parity_config(2.0, 2.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn validate_reports_named_fields() {
        assert!(validate(&SystemConfig::parity_default()).is_empty());

        let mut c = SystemConfig::parity_default();
        c.eta = 1.5;
        let v = validate(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "eta");

        let mut c = SystemConfig::parity_default();
        c.kappa[1] = -2.0;
        let v = validate(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "kappa");

        let mut c = SystemConfig::parity_default();
        c.chi[0].pop();
        c.gamma_z.push(0.0);
        let fields: Vec<_> = validate(&c).iter().map(|v| v.field).collect();
        assert_eq!(fields, ["chi", "gamma_z"]);
    }

    #[test]
    fn single_flip_changes_parity() {
        for n in 1..=5 {
            for j in Bitstring::all(n) {
                for l in 0..n {
                    assert_eq!(j.parity() * j.flip(l).parity(), -1);
                }
            }
        }
    }

    #[test]
    fn uniform_signed_chi_sum_depends_on_popcount_only() {
        for n in 1..=4 {
            let config =
                SystemConfig::uniform(n, vec![1.0], vec![0.0], 0.75, 0.0, 1.0).unwrap();
            for j in Bitstring::all(n) {
                // brute force over the bits
                let direct: f64 = (0..n).map(|l| if j.bit(l) == 0 { 0.75 } else { -0.75 }).sum();
                assert_eq!(j.signed_chi_sum(&config, 0), direct);
                let by_weight = (n as f64 - 2.0 * j.popcount() as f64) * 0.75;
                assert_relative_eq!(direct, by_weight, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn config_json_defaults_phi() {
        let text = r#"{
            "n_qubits": 1, "n_modes": 1, "chi": [[1.0]], "kappa": [2.0],
            "delta": [0.0], "gamma_z": [0.0], "eta": 1.0
        }"#;
        let file = ConfigFile::from_json(text).unwrap();
        assert_eq!(file.system.phi, 0.0);
        assert!(file.pulse.is_none());

        let back = ConfigFile::from_json(&ConfigFile::default().to_json().unwrap()).unwrap();
        assert_eq!(back, ConfigFile::default());
    }

    #[test]
    fn bitstring_bounds() {
        assert!(Bitstring::new(8, 3).is_err());
        let j = Bitstring::new(0b110, 3).unwrap();
        assert_eq!(j.to_string(), "011");
        assert_eq!(j.popcount(), 2);
        assert!(j.is_even());
    }
}
