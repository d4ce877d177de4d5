//! Explicit strong order-1.5 stochastic Runge–Kutta scheme for SDEs driven by
//! a single scalar Wiener process,
//!
//! ```text
//! dX = a(t, X) dt + b(t, X) dW.
//! ```
//!
//! The scheme is derivative free: the Itô–Taylor terms of order 1 and 1.5 are
//! replaced by finite differences over the supporting values
//!
//! ```text
//! Υ± = X + a·Δ ± b·√Δ,     Φ± = Υ+ ± b(Υ+)·√Δ,
//! ```
//!
//! all evaluated at the step end time. Each step consumes the pair
//! (ΔW, ΔZ) with ΔZ = ∫ (W_s − W_t) ds over the step.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// A state that supports the real linear combinations used by the scheme.
pub trait SdeState: Clone {
    fn add_scaled(&mut self, coef: f64, other: &Self);
}

impl SdeState for f64 {
    fn add_scaled(&mut self, coef: f64, other: &Self) {
        *self += coef * other;
    }
}

impl SdeState for DMatrix<Complex64> {
    fn add_scaled(&mut self, coef: f64, other: &Self) {
        for (x, y) in self.iter_mut().zip(other.iter()) {
            x.re += coef * y.re;
            x.im += coef * y.im;
        }
    }
}

pub trait ScalarNoiseSde<S> {
    fn drift(&self, t: f64, x: &S) -> S;
    fn diffusion(&self, t: f64, x: &S) -> S;
}

/// Wiener increment ΔW and its time integral ΔZ over one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseIncrement {
    pub dw: f64,
    pub dz: f64,
}

impl NoiseIncrement {
    /// Draws the jointly Gaussian pair with E[ΔW²] = Δ, E[ΔZ²] = Δ³/3 and
    /// E[ΔW·ΔZ] = Δ²/2.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, dt: f64) -> Self {
        let u1: f64 = rng.sample(StandardNormal);
        let u2: f64 = rng.sample(StandardNormal);
        Self {
            dw: u1 * dt.sqrt(),
            dz: 0.5 * dt.powf(1.5) * (u1 + u2 / 3f64.sqrt()),
        }
    }

    /// Combines consecutive increments of length `sub_dt` into one increment
    /// over their union.
    pub fn aggregate(parts: &[NoiseIncrement], sub_dt: f64) -> Self {
        let mut w = 0.0;
        let mut z = 0.0;
        for p in parts {
            z += p.dz + w * sub_dt;
            w += p.dw;
        }
        Self { dw: w, dz: z }
    }
}

fn combine<S: SdeState>(base: &S, terms: &[(f64, &S)]) -> S {
    let mut out = base.clone();
    for &(c, x) in terms {
        out.add_scaled(c, x);
    }
    out
}

/// Advances `x` from `t` to `t + dt`.
pub fn step<S, M>(model: &M, t: f64, x: &S, dt: f64, noise: NoiseIncrement) -> S
where
    S: SdeState,
    M: ScalarNoiseSde<S> + ?Sized,
{
    let sq = dt.sqrt();
    let t1 = t + dt;
    let a = model.drift(t, x);
    let b = model.diffusion(t, x);

    let ups_p = combine(x, &[(dt, &a), (sq, &b)]);
    let ups_m = combine(x, &[(dt, &a), (-sq, &b)]);
    let a_p = model.drift(t1, &ups_p);
    let a_m = model.drift(t1, &ups_m);
    let b_p = model.diffusion(t1, &ups_p);
    let b_m = model.diffusion(t1, &ups_m);

    let phi_p = combine(&ups_p, &[(sq, &b_p)]);
    let phi_m = combine(&ups_p, &[(-sq, &b_p)]);
    let bphi_p = model.diffusion(t1, &phi_p);
    let bphi_m = model.diffusion(t1, &phi_m);

    let NoiseIncrement { dw, dz } = noise;
    let c_da = dz / (2.0 * sq);
    let c_db = (dw * dw - dt) / (4.0 * sq);
    let c_d2b = (dw * dt - dz) / (2.0 * dt);
    let c_d3b = (dw * dw / 3.0 - dt) * dw / (4.0 * dt);

    combine(
        x,
        &[
            (dw, &b),
            (c_da, &a_p),
            (-c_da, &a_m),
            (0.25 * dt, &a_p),
            (0.5 * dt, &a),
            (0.25 * dt, &a_m),
            (c_db, &b_p),
            (-c_db, &b_m),
            (c_d2b, &b_p),
            (-2.0 * c_d2b, &b),
            (c_d2b, &b_m),
            (c_d3b, &bphi_p),
            (-c_d3b, &bphi_m),
            (-c_d3b, &b_p),
            (c_d3b, &b_m),
        ],
    )
}

/// Classical fourth-order Runge–Kutta step for `x' = a(t, x)`.
pub fn rk4_step<S, F>(f: F, t: f64, x: &S, dt: f64) -> S
where
    S: SdeState,
    F: Fn(f64, &S) -> S,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * dt, &combine(x, &[(0.5 * dt, &k1)]));
    let k3 = f(t + 0.5 * dt, &combine(x, &[(0.5 * dt, &k2)]));
    let k4 = f(t + dt, &combine(x, &[(dt, &k3)]));
    combine(
        x,
        &[
            (dt / 6.0, &k1),
            (dt / 3.0, &k2),
            (dt / 3.0, &k3),
            (dt / 6.0, &k4),
        ],
    )
}
