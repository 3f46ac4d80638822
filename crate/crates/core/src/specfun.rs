//! Special functions for annulus Loewner evolutions.
//!
//! The central objects are the lattice cotangent sums
//!
//! ```text
//! HA(t,z)      = PV sum over even n of cot2(z - i n t)
//! HA_I(t,z)    = PV sum over odd  n of cot2(z - i n t) = HA(t, z+it) + i
//! hatHA(t,z)   = i HA(t, iz)  = PV sum over even n of coth2(z - n t)
//! hatHA_I(t,z) = hatHA(t, z + pi*i) = PV sum over even n of tanh2(z - n t)
//! ```
//!
//! together with the theta functions they are logarithmic derivatives of
//! (`HA = 2 Theta'/Theta`, `HA_I = 2 Theta_I'/Theta_I`), the Taylor
//! coefficients `rA`, `hat rA` of the `2/z` pole at the origin, and the tail
//! integral `hat RA`. Direct series converge like `exp(-t)` per term pair,
//! so for small `t` every evaluator reroutes through the modular identities
//!
//! ```text
//! hatHA(t,z)   = (pi/t) HA(pi^2/t, pi z/t) + z/t      (and the same for _I)
//! hatTheta_I(t,z) = exp(z^2/4t) (pi/t)^{1/2} Theta_I(pi^2/t, pi z/t)
//! ```
//!
//! applied in whichever direction sends the modulus above the rescale
//! threshold.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecFunError {
    #[error("argument within {radius:.3e} of a pole near ({re:.6}, {im:.6})")]
    PoleProximity { re: f64, im: f64, radius: f64 },
    #[error("series did not converge within {max_terms} terms (tail estimate {tail:.3e})")]
    NonConvergent { max_terms: usize, tail: f64 },
    #[error("modulus parameter must be positive and finite, got {0}")]
    InvalidModulus(f64),
    #[error("invalid evaluation context: {0}")]
    InvalidContext(&'static str),
}

/// First argument of every special function: the modulus/time parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusTime(f64);

impl ModulusTime {
    pub fn new(t: f64) -> Result<Self, SpecFunError> {
        if t.is_finite() && t > 0.0 {
            Ok(ModulusTime(t))
        } else {
            Err(SpecFunError::InvalidModulus(t))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Evaluation context: truncation target, term cap, and the threshold below
/// which the rescaled (hatted) identities are used.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpecCtx {
    pub tolerance: f64,
    pub max_terms: usize,
    pub rescale_threshold: f64,
}

impl Default for SpecCtx {
    fn default() -> Self {
        SpecCtx {
            tolerance: 1e-10,
            max_terms: 4000,
            rescale_threshold: PI,
        }
    }
}

impl SpecCtx {
    pub fn new(tolerance: f64, max_terms: usize, rescale_threshold: f64) -> Result<Self, SpecFunError> {
        if !(tolerance > 0.0) {
            return Err(SpecFunError::InvalidContext("tolerance must be positive"));
        }
        if max_terms < 8 {
            return Err(SpecFunError::InvalidContext("max_terms must be at least 8"));
        }
        if !(rescale_threshold > 0.0) {
            return Err(SpecFunError::InvalidContext(
                "rescale_threshold must be positive",
            ));
        }
        Ok(SpecCtx {
            tolerance,
            max_terms,
            rescale_threshold,
        })
    }

    pub fn pole_radius(&self) -> f64 {
        self.tolerance.sqrt().max(1e-8)
    }
}

// ---------------------------------------------------------------------------
// half-argument primitives
// ---------------------------------------------------------------------------

pub fn cot2(z: Complex64) -> Complex64 {
    let h = 0.5 * z;
    h.cos() / h.sin()
}

pub fn coth2(z: Complex64) -> Complex64 {
    let h = 0.5 * z;
    h.cosh() / h.sinh()
}

pub fn tanh2(z: Complex64) -> Complex64 {
    (0.5 * z).tanh()
}

pub fn cosh2(z: Complex64) -> Complex64 {
    (0.5 * z).cosh()
}

pub fn tanh2_re(x: f64) -> f64 {
    (0.5 * x).tanh()
}

pub fn coth2_re(x: f64) -> f64 {
    1.0 / (0.5 * x).tanh()
}

/// d/dx tanh2(x) = 1 / (1 + cosh x).
pub fn tanh2_prime_re(x: f64) -> f64 {
    if x.abs() > 700.0 {
        return 0.0;
    }
    1.0 / (1.0 + x.cosh())
}

/// d/dx coth2(x) = -1 / (cosh x - 1).
pub fn coth2_prime_re(x: f64) -> f64 {
    if x.abs() > 700.0 {
        return 0.0;
    }
    -1.0 / (x.cosh() - 1.0)
}

fn dist_to_lattice(z: Complex64, re_step: f64, re_off: f64, im_step: f64, im_off: f64) -> f64 {
    let fold = |v: f64, step: f64, off: f64| -> f64 {
        let r = (v - off).rem_euclid(step);
        r.min(step - r)
    };
    let dx = fold(z.re, re_step, re_off);
    let dy = fold(z.im, im_step, im_off);
    dx.hypot(dy)
}

macro_rules! check_pole {
    ($ctx:expr, $z:expr, $re_step:expr, $re_off:expr, $im_step:expr, $im_off:expr) => {
        if dist_to_lattice($z, $re_step, $re_off, $im_step, $im_off) < $ctx.pole_radius() {
            return Err(SpecFunError::PoleProximity {
                re: $z.re,
                im: $z.im,
                radius: $ctx.pole_radius(),
            });
        }
    };
}

// ---------------------------------------------------------------------------
// direct series (assume t >= rescale threshold)
// ---------------------------------------------------------------------------

/// PV sum of coth2(z - 2kt) over k in Z, paired as
/// coth2(z-u) + coth2(z+u) = 2 sinh z / (cosh z - cosh u).
fn hat_ha_series(ctx: &SpecCtx, t: f64, z: Complex64) -> Result<Complex64, SpecFunError> {
    let mut sum = coth2(z);
    let sh = z.sinh();
    let ch = z.cosh();
    let settle = z.re.abs() + 2.0;
    let ratio = (-2.0 * t).exp();
    for k in 1..=ctx.max_terms {
        let u = 2.0 * k as f64 * t;
        if u > 700.0 {
            return Ok(sum);
        }
        let pair = 2.0 * sh / (ch - Complex64::new(u.cosh(), 0.0));
        sum += pair;
        if u >= settle && pair.norm() * ratio / (1.0 - ratio) < ctx.tolerance {
            return Ok(sum);
        }
    }
    Err(SpecFunError::NonConvergent {
        max_terms: ctx.max_terms,
        tail: f64::NAN,
    })
}

/// PV sum of tanh2(z - 2kt), paired as 2 sinh z / (cosh z + cosh u).
fn hat_ha_i_series(ctx: &SpecCtx, t: f64, z: Complex64) -> Result<Complex64, SpecFunError> {
    let mut sum = tanh2(z);
    let sh = z.sinh();
    let ch = z.cosh();
    let settle = z.re.abs() + 2.0;
    let ratio = (-2.0 * t).exp();
    for k in 1..=ctx.max_terms {
        let u = 2.0 * k as f64 * t;
        if u > 700.0 {
            return Ok(sum);
        }
        let pair = 2.0 * sh / (ch + Complex64::new(u.cosh(), 0.0));
        sum += pair;
        if u >= settle && pair.norm() * ratio / (1.0 - ratio) < ctx.tolerance {
            return Ok(sum);
        }
    }
    Err(SpecFunError::NonConvergent {
        max_terms: ctx.max_terms,
        tail: f64::NAN,
    })
}

/// HA direct series: cot2(z) + pairs 2 sin z / (cosh 2kt - cos z).
fn ha_series(ctx: &SpecCtx, t: f64, z: Complex64) -> Result<Complex64, SpecFunError> {
    let mut sum = cot2(z);
    let s = z.sin();
    let c = z.cos();
    let settle = z.im.abs() + 2.0;
    let ratio = (-2.0 * t).exp();
    for k in 1..=ctx.max_terms {
        let u = 2.0 * k as f64 * t;
        if u > 700.0 {
            return Ok(sum);
        }
        let pair = 2.0 * s / (Complex64::new(u.cosh(), 0.0) - c);
        sum += pair;
        if u >= settle && pair.norm() * ratio / (1.0 - ratio) < ctx.tolerance {
            return Ok(sum);
        }
    }
    Err(SpecFunError::NonConvergent {
        max_terms: ctx.max_terms,
        tail: f64::NAN,
    })
}

/// HA_I direct series: pairs over odd n, 2 sin z / (cosh (2k-1)t - cos z).
fn ha_i_series(ctx: &SpecCtx, t: f64, z: Complex64) -> Result<Complex64, SpecFunError> {
    let mut sum = Complex64::new(0.0, 0.0);
    let s = z.sin();
    let c = z.cos();
    let settle = z.im.abs() + 2.0;
    let ratio = (-2.0 * t).exp();
    for k in 1..=ctx.max_terms {
        let u = (2.0 * k as f64 - 1.0) * t;
        if u > 700.0 {
            return Ok(sum);
        }
        let pair = 2.0 * s / (Complex64::new(u.cosh(), 0.0) - c);
        sum += pair;
        if u >= settle && pair.norm() * ratio / (1.0 - ratio) < ctx.tolerance {
            return Ok(sum);
        }
    }
    Err(SpecFunError::NonConvergent {
        max_terms: ctx.max_terms,
        tail: f64::NAN,
    })
}

// ---------------------------------------------------------------------------
// public complex evaluators with the small-t reroute
// ---------------------------------------------------------------------------

/// HA(t, z): poles at 2m*pi + 2ikt, residue 2, odd, period 2pi,
/// progressive period (2it; -2i).
pub fn ha(ctx: &SpecCtx, t: ModulusTime, z: Complex64) -> Result<Complex64, SpecFunError> {
    let t = t.get();
    check_pole!(ctx, z, 2.0 * PI, 0.0, 2.0 * t, 0.0);
    if t >= ctx.rescale_threshold {
        ha_series(ctx, t, z)
    } else {
        let tt = PI * PI / t;
        let w = PI * z / t;
        Ok((PI / t) * hat_ha_series(ctx, tt, w)? - z / t)
    }
}

/// HA_I(t, z) = HA(t, z+it) + i: poles at 2m*pi + i(2k+1)t, real on R.
pub fn ha_i(ctx: &SpecCtx, t: ModulusTime, z: Complex64) -> Result<Complex64, SpecFunError> {
    let t = t.get();
    check_pole!(ctx, z, 2.0 * PI, 0.0, 2.0 * t, t);
    if t >= ctx.rescale_threshold {
        ha_i_series(ctx, t, z)
    } else {
        let tt = PI * PI / t;
        let w = PI * z / t;
        Ok((PI / t) * hat_ha_i_series(ctx, tt, w)? - z / t)
    }
}

/// SA(t, w) = i HA(t, z) with w = e^{iz}; kernel of the annulus Loewner
/// equation. `w` must avoid the pole rays |w| in {1, e^{-2kt}} at arg 0.
pub fn sa(ctx: &SpecCtx, t: ModulusTime, w: Complex64) -> Result<Complex64, SpecFunError> {
    // z = -i log w maps |w|=1 to the real axis.
    let z = Complex64::new(w.arg(), -w.norm().ln());
    Ok(Complex64::i() * ha(ctx, t, z)?)
}

/// The three hatted kernels at once.
#[derive(Debug, Clone, Copy)]
pub struct HatFamily {
    pub hat_ha: Complex64,
    pub hat_ha_i: Complex64,
    pub hat_ha_i_q: Complex64,
}

/// hatHA(t,z) = i HA(t, iz) and companions.
pub fn hat_ha(ctx: &SpecCtx, t: ModulusTime, z: Complex64) -> Result<Complex64, SpecFunError> {
    let t = t.get();
    check_pole!(ctx, z, 2.0 * t, 0.0, 2.0 * PI, 0.0);
    if t >= ctx.rescale_threshold {
        hat_ha_series(ctx, t, z)
    } else {
        let tt = PI * PI / t;
        let w = PI * z / t;
        Ok((PI / t) * ha_series(ctx, tt, w)? + z / t)
    }
}

/// hatHA_I(t,z) = hatHA(t, z + pi i).
pub fn hat_ha_i(ctx: &SpecCtx, t: ModulusTime, z: Complex64) -> Result<Complex64, SpecFunError> {
    let t = t.get();
    check_pole!(ctx, z, 2.0 * t, 0.0, 2.0 * PI, PI);
    if t >= ctx.rescale_threshold {
        hat_ha_i_series(ctx, t, z)
    } else {
        let tt = PI * PI / t;
        let w = PI * z / t;
        Ok((PI / t) * ha_i_series(ctx, tt, w)? + z / t)
    }
}

/// hatHA, hatHA_I and hatHA_{I,q} = hatHA_I - tanh2.
pub fn hat_family(ctx: &SpecCtx, t: ModulusTime, z: Complex64) -> Result<HatFamily, SpecFunError> {
    let h = hat_ha(ctx, t, z)?;
    let hi = hat_ha_i(ctx, t, z)?;
    Ok(HatFamily {
        hat_ha: h,
        hat_ha_i: hi,
        hat_ha_i_q: hi - tanh2(z),
    })
}

// ---------------------------------------------------------------------------
// theta family
// ---------------------------------------------------------------------------

/// Theta and companions; `Theta` has antiperiod 2pi, the rest period 2pi.
#[derive(Debug, Clone, Copy)]
pub struct ThetaFamily {
    pub theta: Complex64,
    pub theta_i: Complex64,
    pub hat_theta_i: Complex64,
    pub hat_theta_i_inf: Complex64,
    pub hat_theta_i_q: Complex64,
}

/// Theta(t,z): odd theta series 2 sum (-1)^n e^{-(n+1/2)^2 t} sin((n+1/2)z),
/// zeros at 2m*pi + 2ikt so that HA = 2 Theta'/Theta.
pub fn theta(ctx: &SpecCtx, t: ModulusTime, z: Complex64) -> Result<Complex64, SpecFunError> {
    let t = t.get();
    if t >= 0.5 {
        theta_series(ctx, t, z)
    } else {
        // Jacobi imaginary transformation within this normalization:
        // Theta(t,z) = -i (pi/t)^(1/2) exp(-z^2/4t) Theta(pi^2/t, i pi z / t).
        let tt = PI * PI / t;
        let w = Complex64::i() * PI * z / t;
        let pref = -Complex64::i() * (PI / t).sqrt() * (-z * z / (4.0 * t)).exp();
        Ok(pref * theta_series(ctx, tt, w)?)
    }
}

fn theta_series(ctx: &SpecCtx, t: f64, z: Complex64) -> Result<Complex64, SpecFunError> {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut sign = 1.0;
    let hump = (z.im.abs() / t).ceil() as usize + 1;
    for n in 0..ctx.max_terms {
        let a = n as f64 + 0.5;
        let mag = -a * a * t;
        if mag < -745.0 && n > hump {
            return Ok(2.0 * sum);
        }
        let term = sign * mag.exp() * (a * z).sin();
        sum += term;
        sign = -sign;
        if n > hump && term.norm() < 0.25 * ctx.tolerance {
            return Ok(2.0 * sum);
        }
    }
    Err(SpecFunError::NonConvergent {
        max_terms: ctx.max_terms,
        tail: f64::NAN,
    })
}

/// Theta_I(t,z) = 1 + 2 sum (-1)^n e^{-n^2 t} cos(nz): period 2pi, zeros at
/// 2m*pi + (2k+1)it, HA_I = 2 Theta_I'/Theta_I, positive on R.
pub fn theta_i(ctx: &SpecCtx, t: ModulusTime, z: Complex64) -> Result<Complex64, SpecFunError> {
    let t = t.get();
    if t >= 0.5 {
        theta_i_series(ctx, t, z)
    } else {
        let tt = PI * PI / t;
        let w = PI * z / t;
        let pref = (PI / t).sqrt() * (-z * z / (4.0 * t)).exp();
        Ok(pref * hat_theta_i_product(ctx, tt, w)?)
    }
}

fn theta_i_series(ctx: &SpecCtx, t: f64, z: Complex64) -> Result<Complex64, SpecFunError> {
    let mut sum = Complex64::new(1.0, 0.0);
    let mut sign = -1.0;
    let hump = (z.im.abs() / (2.0 * t)).ceil() as usize + 1;
    for n in 1..=ctx.max_terms {
        let mag = -(n as f64) * (n as f64) * t;
        if mag < -745.0 && n > hump {
            return Ok(sum);
        }
        let term = 2.0 * sign * mag.exp() * (n as f64 * z).cos();
        sum += term;
        sign = -sign;
        if n > hump && term.norm() < ctx.tolerance {
            return Ok(sum);
        }
    }
    Err(SpecFunError::NonConvergent {
        max_terms: ctx.max_terms,
        tail: f64::NAN,
    })
}

/// hatTheta_I by its product representation
/// 2 e^{-t/4} cosh2(z) prod (1 - e^{-2mt})(1 + e^{z-2mt})(1 + e^{-z-2mt}).
pub fn hat_theta_i(ctx: &SpecCtx, t: ModulusTime, z: Complex64) -> Result<Complex64, SpecFunError> {
    let t = t.get();
    if t >= ctx.rescale_threshold.min(1.0) {
        hat_theta_i_product(ctx, t, z)
    } else {
        let tt = PI * PI / t;
        let w = PI * z / t;
        let pref = (PI / t).sqrt() * (z * z / (4.0 * t)).exp();
        Ok(pref * theta_i_series(ctx, tt, w)?)
    }
}

fn hat_theta_i_product(ctx: &SpecCtx, t: f64, z: Complex64) -> Result<Complex64, SpecFunError> {
    let mut prod = 2.0 * (-t / 4.0).exp() * cosh2(z);
    let ez = z.exp();
    let emz = (-z).exp();
    for m in 1..=ctx.max_terms {
        let q = (-2.0 * m as f64 * t).exp();
        if q == 0.0 {
            return Ok(prod);
        }
        prod *= (1.0 - q) * (1.0 + q * ez) * (1.0 + q * emz);
        // Remaining factors differ from 1 by O(q * (2 + |e^z| + |e^-z|)).
        let rem = q * (-2.0 * t).exp() * (2.0 + ez.norm() + emz.norm());
        if rem / (1.0 - (-2.0 * t).exp()) < ctx.tolerance {
            return Ok(prod);
        }
    }
    Err(SpecFunError::NonConvergent {
        max_terms: ctx.max_terms,
        tail: f64::NAN,
    })
}

/// hatTheta_{I,inf}(t,z) = 2 e^{-t/4} cosh2(z).
pub fn hat_theta_i_inf(t: ModulusTime, z: Complex64) -> Complex64 {
    2.0 * (-t.get() / 4.0).exp() * cosh2(z)
}

pub fn theta_family(ctx: &SpecCtx, t: ModulusTime, z: Complex64) -> Result<ThetaFamily, SpecFunError> {
    let th = theta(ctx, t, z)?;
    let thi = theta_i(ctx, t, z)?;
    let hti = hat_theta_i(ctx, t, z)?;
    let inf = hat_theta_i_inf(t, z);
    Ok(ThetaFamily {
        theta: th,
        theta_i: thi,
        hat_theta_i: hti,
        hat_theta_i_inf: inf,
        hat_theta_i_q: hti / inf,
    })
}

// ---------------------------------------------------------------------------
// real-axis fast paths (used by boundary ODEs and Monte Carlo)
// ---------------------------------------------------------------------------

/// HA(t,x) for real x. Unchecked: caller keeps x away from 2 pi Z.
pub fn ha_re(ctx: &SpecCtx, t: f64, x: f64) -> f64 {
    if t >= ctx.rescale_threshold {
        let mut sum = (0.5 * x).cos() / (0.5 * x).sin();
        let s = x.sin();
        let c = x.cos();
        for k in 1..=ctx.max_terms {
            let u = 2.0 * k as f64 * t;
            if u > 700.0 {
                break;
            }
            let pair = 2.0 * s / (u.cosh() - c);
            sum += pair;
            if pair.abs() < ctx.tolerance * (1.0 - (-2.0 * t).exp()) {
                break;
            }
        }
        sum
    } else {
        (PI / t) * hat_ha_re(ctx, PI * PI / t, PI * x / t) - x / t
    }
}

/// hatHA(t,x) for real x away from 2tZ.
pub fn hat_ha_re(ctx: &SpecCtx, t: f64, x: f64) -> f64 {
    if t >= ctx.rescale_threshold {
        let mut sum = coth2_re(x);
        let sh = x.sinh();
        let ch = x.cosh();
        let settle = x.abs() + 2.0;
        for k in 1..=ctx.max_terms {
            let u = 2.0 * k as f64 * t;
            if u > 700.0 {
                break;
            }
            let pair = 2.0 * sh / (ch - u.cosh());
            sum += pair;
            if u >= settle && pair.abs() < ctx.tolerance * (1.0 - (-2.0 * t).exp()) {
                break;
            }
        }
        sum
    } else {
        (PI / t) * ha_re(ctx, PI * PI / t, PI * x / t) + x / t
    }
}

/// HA_I(t,x) for real x (no real poles).
pub fn ha_i_re(ctx: &SpecCtx, t: f64, x: f64) -> f64 {
    if t >= ctx.rescale_threshold {
        let s = x.sin();
        let c = x.cos();
        let mut sum = 0.0;
        for k in 1..=ctx.max_terms {
            let u = (2.0 * k as f64 - 1.0) * t;
            if u > 700.0 {
                break;
            }
            let pair = 2.0 * s / (u.cosh() - c);
            sum += pair;
            if pair.abs() < ctx.tolerance * (1.0 - (-2.0 * t).exp()) {
                break;
            }
        }
        sum
    } else {
        (PI / t) * hat_ha_i_re(ctx, PI * PI / t, PI * x / t) - x / t
    }
}

/// d/dx HA_I(t,x).
pub fn ha_i_prime_re(ctx: &SpecCtx, t: f64, x: f64) -> f64 {
    if t >= ctx.rescale_threshold {
        let s2 = x.sin() * x.sin();
        let c = x.cos();
        let mut sum = 0.0;
        for k in 1..=ctx.max_terms {
            let u = (2.0 * k as f64 - 1.0) * t;
            if u > 700.0 {
                break;
            }
            let d = u.cosh() - c;
            let term = 2.0 * (c * d - s2) / (d * d);
            sum += term;
            if term.abs() < ctx.tolerance * (1.0 - (-2.0 * t).exp()) {
                break;
            }
        }
        sum
    } else {
        let tt = PI * PI / t;
        (PI / t).powi(2) * hat_ha_i_prime_re(ctx, tt, PI * x / t) - 1.0 / t
    }
}

/// hatHA_I(t,x) for real x.
pub fn hat_ha_i_re(ctx: &SpecCtx, t: f64, x: f64) -> f64 {
    if t >= ctx.rescale_threshold {
        tanh2_re(x) + hat_ha_i_q_re_direct(ctx, t, x)
    } else {
        (PI / t) * ha_i_re(ctx, PI * PI / t, PI * x / t) + x / t
    }
}

fn hat_ha_i_q_re_direct(ctx: &SpecCtx, t: f64, x: f64) -> f64 {
    let sh = x.sinh();
    let ch = x.cosh();
    let settle = x.abs() + 2.0;
    let mut sum = 0.0;
    for k in 1..=ctx.max_terms {
        let u = 2.0 * k as f64 * t;
        if u > 700.0 {
            break;
        }
        let pair = 2.0 * sh / (ch + u.cosh());
        sum += pair;
        if u >= settle && pair.abs() < ctx.tolerance * (1.0 - (-2.0 * t).exp()) {
            break;
        }
    }
    sum
}

/// d/dx hatHA_I(t,x).
pub fn hat_ha_i_prime_re(ctx: &SpecCtx, t: f64, x: f64) -> f64 {
    if t >= ctx.rescale_threshold {
        tanh2_prime_re(x) + hat_ha_i_q_prime_re_direct(ctx, t, x)
    } else {
        let tt = PI * PI / t;
        (PI / t).powi(2) * ha_i_prime_re(ctx, tt, PI * x / t) + 1.0 / t
    }
}

fn hat_ha_i_q_prime_re_direct(ctx: &SpecCtx, t: f64, x: f64) -> f64 {
    let ch = x.cosh();
    let settle = x.abs() + 2.0;
    let mut sum = 0.0;
    for k in 1..=ctx.max_terms {
        let u = 2.0 * k as f64 * t;
        if u > 700.0 {
            break;
        }
        let cu = u.cosh();
        let d = ch + cu;
        let term = 2.0 * (1.0 + cu * ch) / (d * d);
        sum += term;
        if u >= settle && term.abs() < ctx.tolerance * (1.0 - (-2.0 * t).exp()) {
            break;
        }
    }
    sum
}

/// d/dx hatHA_{I,q}(t,x) = d/dx (hatHA_I - tanh2): the Monte-Carlo
/// integrand. For t above the threshold this is the n != 0 part of the
/// tanh2' lattice sum.
pub fn hat_ha_i_q_prime_re(ctx: &SpecCtx, t: f64, x: f64) -> f64 {
    if t >= ctx.rescale_threshold {
        hat_ha_i_q_prime_re_direct(ctx, t, x)
    } else {
        hat_ha_i_prime_re(ctx, t, x) - tanh2_prime_re(x)
    }
}

// ---------------------------------------------------------------------------
// Taylor coefficients and the tail integral
// ---------------------------------------------------------------------------

/// hat rA(t) = 1/6 - sum_{k>=1} sinh^{-2}(kt); the z-coefficient of hatHA
/// at the origin. Tail bound 8 e^{-2Kt} / (1 - e^{-2t}).
pub fn hat_r_a(ctx: &SpecCtx, t: ModulusTime) -> Result<f64, SpecFunError> {
    let t = t.get();
    let mut sum = 0.0;
    for k in 1..=ctx.max_terms {
        let u = k as f64 * t;
        if u > 360.0 {
            return Ok(1.0 / 6.0 - sum);
        }
        let s = u.sinh();
        let term = 1.0 / (s * s);
        sum += term;
        let tail = 8.0 * (-2.0 * u).exp() / (1.0 - (-2.0 * t).exp());
        if tail < ctx.tolerance {
            return Ok(1.0 / 6.0 - sum);
        }
    }
    Err(SpecFunError::NonConvergent {
        max_terms: ctx.max_terms,
        tail: f64::NAN,
    })
}

/// rA(t): the z-coefficient of HA at the origin. Direct series
/// rA(t) = sum sinh^{-2}(kt) - 1/6 = -hat rA(t) above the threshold,
/// otherwise through the modular identity
/// rA(t) = (pi/t)^2 hat rA(pi^2/t) - 1/t.
pub fn r_a(ctx: &SpecCtx, t: ModulusTime) -> Result<f64, SpecFunError> {
    let tv = t.get();
    if tv >= ctx.rescale_threshold {
        Ok(-hat_r_a(ctx, t)?)
    } else {
        let tt = ModulusTime::new(PI * PI / tv)?;
        Ok((PI / tv).powi(2) * hat_r_a(ctx, tt)? - 1.0 / tv)
    }
}

/// hat RA(t) = -int_t^inf (hat rA(s) - 1/6) ds = sum_{k>=1} (coth(kt)-1)/k;
/// positive and decreasing.
pub fn hat_big_r_a(ctx: &SpecCtx, t: ModulusTime) -> Result<f64, SpecFunError> {
    let t = t.get();
    let mut sum = 0.0;
    for k in 1..=ctx.max_terms {
        let u = k as f64 * t;
        if u > 360.0 {
            return Ok(sum);
        }
        let e = (-2.0 * u).exp();
        let term = 2.0 * e / ((1.0 - e) * k as f64);
        sum += term;
        if term < ctx.tolerance * (1.0 - (-2.0 * t).exp()) {
            return Ok(sum);
        }
    }
    Err(SpecFunError::NonConvergent {
        max_terms: ctx.max_terms,
        tail: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    fn ctx() -> SpecCtx {
        SpecCtx::default()
    }

    /// Context that forces the direct series even for small t (used to
    /// cross-check the rescaled route against the direct route).
    fn direct_ctx() -> SpecCtx {
        SpecCtx {
            rescale_threshold: 1e-9,
            max_terms: 200_000,
            ..SpecCtx::default()
        }
    }

    fn mt(t: f64) -> ModulusTime {
        ModulusTime::new(t).unwrap()
    }

    const I: Complex64 = Complex64::new(0.0, 1.0);

    #[test]
    fn ha_imaginary_part_on_upper_rail() {
        // Im HA(t, .) = -1 on the line Im z = t.
        let v = ha(&ctx(), mt(1.0), Complex64::new(0.7, 1.0)).unwrap();
        assert!((v.im + 1.0).abs() < 1e-10, "im = {}", v.im);
        let v2 = ha(&ctx(), mt(2.3), Complex64::new(-1.2, 2.3)).unwrap();
        assert!((v2.im + 1.0).abs() < 1e-10);
    }

    #[test]
    fn ha_residue_at_origin() {
        let z = Complex64::new(1e-4, 0.0);
        let v = ha(&ctx(), mt(2.0), z).unwrap();
        assert!((z * v - 2.0).norm() < 1e-7);
    }

    #[test]
    fn ha_periodicity_and_oddness() {
        let z = Complex64::new(0.9, 0.4);
        let t = mt(1.5);
        let a = ha(&ctx(), t, z).unwrap();
        let b = ha(&ctx(), t, z + 2.0 * PI).unwrap();
        assert!((a - b).norm() < 1e-10);
        let c = ha(&ctx(), t, -z).unwrap();
        assert!((a + c).norm() < 1e-10);
    }

    #[test]
    fn ha_progressive_period() {
        let z = Complex64::new(0.4, 0.3);
        let t = mt(1.1);
        let a = ha(&ctx(), t, z + 2.0 * I * 1.1).unwrap();
        let b = ha(&ctx(), t, z).unwrap() - 2.0 * I;
        assert!((a - b).norm() < 1e-9, "{:e}", (a - b).norm());
    }

    #[test]
    fn ha_i_identities() {
        let t = mt(1.0);
        // odd function vanishing at 0
        let v0 = ha_i(&ctx(), t, Complex64::new(0.0, 0.0)).unwrap();
        assert!(v0.norm() < 1e-12);
        // real on the real axis
        let vr = ha_i(&ctx(), t, Complex64::new(0.3, 0.0)).unwrap();
        assert!(vr.im.abs() < 1e-12);
        // HA_I(t,z) = HA(t, z+it) + i
        let z = Complex64::new(0.5, 0.2);
        let lhs = ha_i(&ctx(), t, z).unwrap();
        let rhs = ha(&ctx(), t, z + I).unwrap() + I;
        assert!((lhs - rhs).norm() < 1e-10);
        // progressive period (2it; -2i)
        let a = ha_i(&ctx(), t, z + 2.0 * I).unwrap();
        let b = ha_i(&ctx(), t, z).unwrap() - 2.0 * I;
        assert!((a - b).norm() < 1e-9);
    }

    #[test]
    fn hat_ha_is_rotated_ha() {
        let t = mt(1.3);
        let z = Complex64::new(0.7, 0.6);
        let lhs = hat_ha(&ctx(), t, z).unwrap();
        let rhs = I * ha(&ctx(), t, I * z).unwrap();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn hat_ha_i_vanishes_at_origin_and_shifts() {
        let t = mt(2.0);
        let v0 = hat_ha_i(&ctx(), t, Complex64::new(0.0, 0.0)).unwrap();
        assert!(v0.norm() < 1e-12);
        let z = Complex64::new(0.4, 0.2);
        let lhs = hat_ha_i(&ctx(), t, z).unwrap();
        let rhs = hat_ha(&ctx(), t, z + PI * I).unwrap();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn rescale_identity_hat_ha() {
        // hatHA(t,z) = (pi/t) HA(pi^2/t, pi z/t) + z/t, both sides by
        // direct series.
        let dctx = direct_ctx();
        for &t in &[2.0, 1.0, 2.9] {
            let z = Complex64::new(1.0, 0.5);
            let lhs = hat_ha(&dctx, mt(t), z).unwrap();
            let rhs = (PI / t) * ha(&dctx, mt(PI * PI / t), PI * z / t).unwrap() + z / t;
            assert!((lhs - rhs).norm() < 1e-9, "t={t} err={:e}", (lhs - rhs).norm());
        }
    }

    #[test]
    fn rescale_identity_theta() {
        // hatTheta_I(t,z) = e^{z^2/4t} (pi/t)^(1/2) Theta_I(pi^2/t, pi z/t),
        // both sides by direct series/product.
        let dctx = direct_ctx();
        for &t in &[1.2, 2.0] {
            let z = Complex64::new(0.6, 0.3);
            let lhs = hat_theta_i(&dctx, mt(t), z).unwrap();
            let pref = (PI / t).sqrt() * (z * z / (4.0 * t)).exp();
            let rhs = pref * theta_i(&dctx, mt(PI * PI / t), PI * z / t).unwrap();
            assert!((lhs - rhs).norm() < 1e-9 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn theta_jacobi_small_t_branch_matches_series() {
        // Exercise the t < 0.5 reroute of theta against the direct series at
        // a t where both apply.
        let z = Complex64::new(0.8, 0.2);
        let t = 0.45;
        let direct = theta_series(&ctx(), t, z).unwrap();
        let routed = theta(&ctx(), mt(t), z).unwrap();
        assert!((direct - routed).norm() < 1e-10);
        let ti_direct = theta_i_series(&ctx(), t, z).unwrap();
        let ti_routed = theta_i(&ctx(), mt(t), z).unwrap();
        assert!((ti_direct - ti_routed).norm() < 1e-10);
    }

    #[test]
    fn theta_antiperiod_and_theta_i_period() {
        let t = mt(1.0);
        let z = Complex64::new(0.9, 0.1);
        let a = theta(&ctx(), t, z + 2.0 * PI).unwrap();
        let b = theta(&ctx(), t, z).unwrap();
        assert!((a + b).norm() < 1e-12);
        let c = theta_i(&ctx(), t, z + 2.0 * PI).unwrap();
        let d = theta_i(&ctx(), t, z).unwrap();
        assert!((c - d).norm() < 1e-12);
    }

    #[test]
    fn hat_theta_i_at_origin_matches_product_constant() {
        let t = 1.7;
        let tight = SpecCtx {
            tolerance: 1e-14,
            ..SpecCtx::default()
        };
        let v = hat_theta_i(&tight, mt(t), Complex64::new(0.0, 0.0)).unwrap();
        let mut want = 2.0 * (-t / 4.0f64).exp();
        for m in 1..200 {
            let q: f64 = (-2.0 * m as f64 * t).exp();
            want *= (1.0 - q) * (1.0 + q) * (1.0 + q);
        }
        assert!((v.re - want).abs() < 1e-12 && v.im.abs() < 1e-14);
    }

    #[test]
    fn theta_log_derivatives_give_kernels() {
        // 2 Theta'/Theta = HA and 2 Theta_I'/Theta_I = HA_I and
        // 2 hatTheta_I'/hatTheta_I = hatHA_I by central differences.
        let t = mt(1.2);
        let h = 1e-5;
        let z = Complex64::new(0.4, 0.15);
        let dz = Complex64::new(h, 0.0);

        let f = |w| theta(&ctx(), t, w).unwrap();
        let logd = 2.0 * (f(z + dz) - f(z - dz)) / (2.0 * h) / f(z);
        let want = ha(&ctx(), t, z).unwrap();
        assert!((logd - want).norm() < 1e-6);

        let g = |w| theta_i(&ctx(), t, w).unwrap();
        let logd = 2.0 * (g(z + dz) - g(z - dz)) / (2.0 * h) / g(z);
        let want = ha_i(&ctx(), t, z).unwrap();
        assert!((logd - want).norm() < 1e-6);

        let p = |w| hat_theta_i(&ctx(), t, w).unwrap();
        let zq = Complex64::new(0.4, 0.0);
        let logd = 2.0 * (p(zq + dz) - p(zq - dz)) / (2.0 * h) / p(zq);
        let want = hat_ha_i(&ctx(), t, zq).unwrap();
        assert!((logd - want).norm() < 1e-6, "{:e}", (logd - want).norm());
    }

    #[test]
    fn hat_r_a_limits_and_two_routes() {
        let c = ctx();
        // large-t limit 1/6 with the sinh^{-2}(20) tail
        let v = hat_r_a(&c, mt(20.0)).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
        // below 1/6 always
        for &t in &[0.4, 1.0, 3.0] {
            assert!(hat_r_a(&c, mt(t)).unwrap() < 1.0 / 6.0);
        }
        // two-route agreement through the modular identity at t = 3:
        // hat rA(t) = (pi/t)^2 rA(pi^2/t) + 1/t with rA by direct series.
        for &t in &[1.0, 2.0, 3.0] {
            let lhs = hat_r_a(&c, mt(t)).unwrap();
            let ra = r_a(&c, mt(PI * PI / t)).unwrap();
            let rhs = (PI / t).powi(2) * ra + 1.0 / t;
            assert!((lhs - rhs).abs() < 1e-9, "t = {t}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn r_a_matches_laurent_fit_of_ha() {
        // (z HA(t,z) - 2)/z^2 -> rA(t); Richardson over z = h, h/2.
        let c = ctx();
        for &t in &[0.8, 2.0, 4.0] {
            let f = |h: f64| {
                let z = Complex64::new(h, 0.0);
                ((z * ha(&c, mt(t), z).unwrap() - 2.0) / (z * z)).re
            };
            let fit = (4.0 * f(0.005) - f(0.01)) / 3.0;
            let want = r_a(&c, mt(t)).unwrap();
            assert!((fit - want).abs() < 1e-5, "t = {t}: {fit} vs {want}");
        }
    }

    #[test]
    fn big_r_a_positive_decreasing_and_matches_quadrature() {
        let c = ctx();
        let v1 = hat_big_r_a(&c, mt(1.0)).unwrap();
        let v2 = hat_big_r_a(&c, mt(2.0)).unwrap();
        assert!(v1 > v2 && v2 > 0.0);
        assert!(hat_big_r_a(&c, mt(30.0)).unwrap() < 1e-10);
        // quadrature oracle: -int_1^inf (hat rA - 1/6) ds, truncated far out
        let byquad = quad::integrate(
            |s| -(hat_r_a(&c, mt(s)).unwrap() - 1.0 / 6.0),
            1.0,
            25.0,
            1e-11,
        )
        .unwrap();
        assert!((v1 - byquad).abs() < 1e-8, "{v1} vs {byquad}");
    }

    #[test]
    fn real_fast_paths_match_complex() {
        let c = ctx();
        for &t in &[0.6, 1.7, 4.0] {
            for &x in &[0.3, 1.8, -2.4] {
                let a = ha_i_re(&c, t, x);
                let b = ha_i(&c, mt(t), Complex64::new(x, 0.0)).unwrap().re;
                assert!((a - b).abs() < 1e-10, "ha_i t={t} x={x}");
                let a = hat_ha_i_re(&c, t, x);
                let b = hat_ha_i(&c, mt(t), Complex64::new(x, 0.0)).unwrap().re;
                assert!((a - b).abs() < 1e-10, "hat_ha_i t={t} x={x}");
                let a = ha_re(&c, t, x);
                let b = ha(&c, mt(t), Complex64::new(x, 0.0)).unwrap().re;
                assert!((a - b).abs() < 1e-10, "ha t={t} x={x}");
            }
        }
    }

    #[test]
    fn derivative_fast_paths_match_finite_differences() {
        let c = ctx();
        let h = 1e-5;
        for &t in &[0.7, 2.5] {
            for &x in &[0.4, -1.3, 2.0] {
                let fd = (ha_i_re(&c, t, x + h) - ha_i_re(&c, t, x - h)) / (2.0 * h);
                assert!((ha_i_prime_re(&c, t, x) - fd).abs() < 1e-7);
                let fd = (hat_ha_i_re(&c, t, x + h) - hat_ha_i_re(&c, t, x - h)) / (2.0 * h);
                assert!((hat_ha_i_prime_re(&c, t, x) - fd).abs() < 1e-7);
                let qd = hat_ha_i_q_prime_re(&c, t, x);
                assert!((qd - (hat_ha_i_prime_re(&c, t, x) - tanh2_prime_re(x))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lemma_bound_on_hat_ha_i_q_prime_spot() {
        let c = ctx();
        for &(t, x) in &[(0.5, 0.3), (1.0, 2.9), (3.0, 8.0), (6.0, 0.0)] {
            let v = hat_ha_i_q_prime_re(&c, t, x);
            let bound = (0.5f64).min(2.0 * (x - 2.0 * t).exp()) + 4.0 * (-t).exp() / (1.0 - (-2.0 * t).exp());
            assert!(v < bound, "t={t} x={x}: {v} !< {bound}");
        }
    }

    #[test]
    fn pole_proximity_is_detected() {
        let c = ctx();
        let near = Complex64::new(1e-9, 0.0);
        assert!(matches!(
            ha(&c, mt(1.0), near),
            Err(SpecFunError::PoleProximity { .. })
        ));
        let near_i = Complex64::new(2.0 * PI, 1.0 + 1e-10);
        assert!(matches!(
            ha_i(&c, mt(1.0), near_i),
            Err(SpecFunError::PoleProximity { .. })
        ));
    }

    #[test]
    fn nonconvergence_when_term_cap_too_small() {
        let c = SpecCtx {
            tolerance: 1e-10,
            max_terms: 8,
            rescale_threshold: 1e-12,
        };
        // direct series at t = 0.05 needs far more than 8 pairs
        assert!(matches!(
            ha(&c, mt(0.05), Complex64::new(1.0, 0.02)),
            Err(SpecFunError::NonConvergent { .. })
        ));
    }

    #[test]
    fn modulus_validation() {
        assert!(ModulusTime::new(0.0).is_err());
        assert!(ModulusTime::new(-1.0).is_err());
        assert!(ModulusTime::new(f64::NAN).is_err());
        assert!(SpecCtx::new(1e-10, 4, PI).is_err());
        assert!(SpecCtx::new(-1.0, 100, PI).is_err());
    }
}
