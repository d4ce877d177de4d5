//! Piecewise-quadratic measurement drive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drive envelope: zero, a quadratic smoothstep rise of width `sigma` centred
/// on `t_on`, a plateau at `eps_ss`, a mirrored fall centred on `t_off`, then
/// zero until the end of the record at `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub t_on: f64,
    pub t_off: f64,
    pub sigma: f64,
    pub eps_ss: f64,
    pub tau: f64,
}

impl Default for PulseSpec {
    /// The nominal readout pulse, with 3.5/χ of ring-down appended after the
    /// fall completes.
    fn default() -> Self {
        Self {
            t_on: 1.5,
            t_off: 8.5,
            sigma: 3.0,
            eps_ss: 0.4811,
            tau: 13.5,
        }
    }
}

impl PulseSpec {
    pub fn new(t_on: f64, t_off: f64, sigma: f64, eps_ss: f64, tau: f64) -> Result<Self> {
        Self {
            t_on,
            t_off,
            sigma,
            eps_ss,
            tau,
        }
        .validated()
    }

    /// A pulse that is identically zero over `[0, tau]`.
    pub fn off(tau: f64) -> Self {
        Self {
            eps_ss: 0.0,
            ..Self::default()
        }
        .with_tau(tau)
    }

    fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validated(self) -> Result<Self> {
        let half = 0.5 * self.sigma;
        let ok = self.sigma > 0.0
            && self.t_on - half >= 0.0
            && self.t_on + half <= self.t_off - half
            && (self.eps_ss == 0.0 || self.t_off + half <= self.tau)
            && self.tau > 0.0
            && self.eps_ss.is_finite();
        if ok {
            Ok(self)
        } else {
            Err(Error::Domain(format!(
                "pulse windows out of order: {self:?}"
            )))
        }
    }

    /// Drive amplitude at `t`, which must lie in `[0, tau]`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.tau).contains(&t) {
            return Err(Error::Domain(format!(
                "t = {t} outside pulse record [0, {}]",
                self.tau
            )));
        }
        Ok(self.amplitude(t))
    }

    /// Unchecked evaluation; zero outside the two transition windows and the
    /// plateau.
    pub fn amplitude(&self, t: f64) -> f64 {
        let half = 0.5 * self.sigma;
        if t <= self.t_on - half || t >= self.t_off + half {
            0.0
        } else if t < self.t_on + half {
            self.eps_ss * smoothstep((t - (self.t_on - half)) / self.sigma)
        } else if t <= self.t_off - half {
            self.eps_ss
        } else {
            self.eps_ss * smoothstep(((self.t_off + half) - t) / self.sigma)
        }
    }
}

/// Free-function form of [`PulseSpec::evaluate`].
pub fn evaluate_pulse(spec: &PulseSpec, t: f64) -> Result<f64> {
    spec.evaluate(t)
}

fn smoothstep(u: f64) -> f64 {
    if u <= 0.5 {
        2.0 * u * u
    } else {
        let v = 1.0 - u;
        1.0 - 2.0 * v * v
    }
}
