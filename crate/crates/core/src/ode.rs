//! Adaptive Dormand-Prince 5(4) integration for the small ODE systems that
//! arise from Loewner flows, with hooks for singularity-aware step clamping
//! and blow-up (absorption) detection.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step limit {0} exceeded")]
    TooManySteps(usize),
    #[error("right-hand side returned a non-finite value at t = {0}")]
    NonFinite(f64),
}

/// Why the integrator returned before reaching the end time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stopped {
    /// Reached the requested end time.
    Done,
    /// The event function crossed its threshold; `t` is bracketed to the
    /// resolution of the final step.
    Event { t: f64 },
}

pub struct OdeOpts {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOpts {
    fn default() -> Self {
        OdeOpts {
            rel_tol: 1e-10,
            abs_tol: 1e-11,
            h_init: 1e-3,
            h_max: 0.05,
            max_steps: 2_000_000,
        }
    }
}

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

/// Integrate `dy/dt = f(t, y)` from `t0` to `t1` (either direction).
///
/// `guard(t, y)` returns a distance-to-trouble estimate: the step size is
/// clamped to half of it, and when it drops at or below zero the integration
/// stops with `Stopped::Event`. Use `f64::INFINITY` when no guard applies.
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
    mut guard: impl FnMut(f64, &[f64; N]) -> f64,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    opts: &OdeOpts,
) -> Result<(Stopped, [f64; N]), OdeError> {
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0;
    if (t1 - t0).abs() == 0.0 {
        return Ok((Stopped::Done, y));
    }
    let mut h = opts.h_init.min(opts.h_max).min((t1 - t0).abs());
    let mut k1 = f(t, &y);
    for _ in 0..opts.max_steps {
        let d = guard(t, &y);
        if d <= 0.0 {
            return Ok((Stopped::Event { t }, y));
        }
        // Pole-aware clamp: never step further than half the distance to the
        // nearest singularity, measured through the local speed.
        let speed = norm(&k1).max(1e-300);
        h = h.min(0.5 * d / speed).min(opts.h_max);
        h = h.min((t1 - t).abs());
        if h < 1e-14 * (1.0 + t.abs()) {
            // Step underflow adjacent to a singularity counts as absorption.
            if d.is_finite() {
                return Ok((Stopped::Event { t }, y));
            }
            return Err(OdeError::StepUnderflow { t, h });
        }
        let hs = dir * h;

        let y2 = axpy(&y, hs, &[(A21, &k1)]);
        let k2 = f(t + C2 * hs, &y2);
        let y3 = axpy(&y, hs, &[(A31, &k1), (A32, &k2)]);
        let k3 = f(t + C3 * hs, &y3);
        let y4 = axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = f(t + C4 * hs, &y4);
        let y5 = axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = f(t + C5 * hs, &y5);
        let y6 = axpy(
            &y,
            hs,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        let k6 = f(t + hs, &y6);
        let ynew = axpy(
            &y,
            hs,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = f(t + hs, &ynew);
        let mut err = 0.0f64;
        for i in 0..N {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(ynew[i].abs());
            err += (e / scale).powi(2);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() {
            return Err(OdeError::NonFinite(t));
        }
        if err <= 1.0 {
            t += hs;
            y = ynew;
            k1 = k7;
            if (t1 - t).abs() <= 1e-14 * (1.0 + t1.abs()) {
                return Ok((Stopped::Done, y));
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Err(OdeError::TooManySteps(opts.max_steps))
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for &(c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn norm<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
