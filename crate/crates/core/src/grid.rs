use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_i = i·tau/intervals`, `i = 0..=intervals`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    tau: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, intervals: usize) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) || intervals == 0 {
            return Err(Error::Domain(format!(
                "grid needs tau > 0 and at least one interval (tau = {tau}, intervals = {intervals})"
            )));
        }
        Ok(Self { tau, intervals })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.tau / self.intervals as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.tau
        } else {
            self.tau * i as f64 / self.intervals as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// How many of this grid's intervals make up one interval of a coarser
    /// grid with `steps` intervals over the same span.
    pub fn stride_for(&self, steps: usize) -> Result<usize> {
        if steps == 0 || self.intervals % steps != 0 {
            return Err(Error::GridMismatch(format!(
                "{steps} steps do not divide the {} grid intervals",
                self.intervals
            )));
        }
        Ok(self.intervals / steps)
    }
}
