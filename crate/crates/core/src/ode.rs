//! Dormand–Prince 5(4) integrator with PI step control and continuous
//! (dense) output, for complex-valued first-order systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Tolerances and step-control limits.
#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Times the integrator must step onto exactly, e.g. kinks in the forcing.
    pub stops: Vec<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 1_000_000,
            stops: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` and returns the solution at each
/// of `samples` (ascending, inside `[t0, t_end]`), using the continuous
/// extension between accepted steps.
pub fn integrate_dense<F>(
    mut f: F,
    t0: f64,
    y0: &[Complex64],
    t_end: f64,
    samples: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<Vec<Complex64>>, OdeStats)>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    if samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("sample times must be ascending".into()));
    }
    if let (Some(&first), Some(&last)) = (samples.first(), samples.last()) {
        let slack = 1e-12 * (t_end - t0).abs().max(1.0);
        if first < t0 - slack || last > t_end + slack {
            return Err(Error::Domain("sample times outside integration span".into()));
        }
    }

    let n = y0.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut stops: Vec<f64> = opts
        .stops
        .iter()
        .copied()
        .filter(|&s| s > t0 && s < t_end)
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.push(t_end);
    let mut next_stop = 0;

    let mut stats = OdeStats::default();
    let mut out = Vec::with_capacity(samples.len());
    let mut next_sample = 0;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![zero; n]; 7];
    let mut ytmp = vec![zero; n];
    let mut ynew = vec![zero; n];
    f(t, &y, &mut k[0]);
    stats.evaluations += 1;

    while next_sample < samples.len() && samples[next_sample] <= t0 {
        out.push(y.clone());
        next_sample += 1;
    }

    let mut h = initial_step(&y, &k[0], t_end - t0, opts);
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut rcont = vec![vec![zero; n]; 5];

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepUnderflow { t, h });
        }
        let target = stops[next_stop];
        let mut hit_stop = false;
        if t + h >= target - 1e-14 * target.abs().max(1.0) {
            h = target - t;
            hit_stop = true;
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }

        let stage = |coeffs: &[(usize, f64)], k: &[Vec<Complex64>], out: &mut [Complex64]| {
            for i in 0..n {
                let mut acc = y[i];
                for &(s, a) in coeffs {
                    acc += k[s][i] * (a * h);
                }
                out[i] = acc;
            }
        };

        stage(&[(0, A21)], &k, &mut ytmp);
        f(t + C2 * h, &ytmp, &mut k[1]);
        stage(&[(0, A31), (1, A32)], &k, &mut ytmp);
        f(t + C3 * h, &ytmp, &mut k[2]);
        stage(&[(0, A41), (1, A42), (2, A43)], &k, &mut ytmp);
        f(t + C4 * h, &ytmp, &mut k[3]);
        stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], &k, &mut ytmp);
        f(t + C5 * h, &ytmp, &mut k[4]);
        stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &k, &mut ytmp);
        f(t + h, &ytmp, &mut k[5]);
        stage(&[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)], &k, &mut ynew);
        let t_new = if hit_stop { target } else { t + h };
        f(t_new, &ynew, &mut k[6]);
        stats.evaluations += 6;

        let mut sum = 0.0;
        for i in 0..n {
            let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6
                + k[6][i] * E7)
                * h;
            let sk = opts.atol + opts.rtol * y[i].norm().max(ynew[i].norm());
            sum += e.norm_sqr() / (sk * sk);
        }
        let err = (sum / n.max(1) as f64).sqrt();

        // PI controller
        let beta = 0.04;
        let expo1 = 0.2 - 0.75 * beta;
        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(beta) / 0.9).clamp(0.2, 10.0);
        let h_proposed = h / fac;

        if err <= 1.0 {
            facold = err.max(1e-4);
            stats.accepted += 1;

            for i in 0..n {
                let ydiff = ynew[i] - y[i];
                let bspl = k[0][i] * h - ydiff;
                rcont[0][i] = y[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - k[6][i] * h - bspl;
                rcont[4][i] = (k[0][i] * D1
                    + k[2][i] * D3
                    + k[3][i] * D4
                    + k[4][i] * D5
                    + k[5][i] * D6
                    + k[6][i] * D7)
                    * h;
            }
            while next_sample < samples.len() && samples[next_sample] <= t_new {
                let theta = ((samples[next_sample] - t) / h).clamp(0.0, 1.0);
                let theta1 = 1.0 - theta;
                let v = (0..n)
                    .map(|i| {
                        rcont[0][i]
                            + (rcont[1][i]
                                + (rcont[2][i] + (rcont[3][i] + rcont[4][i] * theta1) * theta)
                                    * theta1)
                                * theta
                    })
                    .collect();
                out.push(v);
                next_sample += 1;
            }

            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            k.swap(0, 6);
            if hit_stop {
                next_stop += 1;
            }
            h = if last_rejected {
                h_proposed.min(h)
            } else {
                h_proposed
            };
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h /= (fac11 / 0.9).min(5.0);
            last_rejected = true;
        }
    }

    // samples at t_end within rounding
    while next_sample < samples.len() {
        out.push(y.clone());
        next_sample += 1;
    }
    Ok((out, stats))
}

fn initial_step(y: &[Complex64], dy: &[Complex64], span: f64, opts: &OdeOptions) -> f64 {
    let n = y.len().max(1) as f64;
    let (mut d0, mut d1) = (0.0, 0.0);
    for (yi, fi) in y.iter().zip(dy) {
        let sk = opts.atol + opts.rtol * yi.norm();
        d0 += yi.norm_sqr() / (sk * sk);
        d1 += fi.norm_sqr() / (sk * sk);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.min(span.abs()).max(1e-10)
}
