//! Gamma distribution truncated to an interval `(lower, upper)`.
//!
//! Draws use inverse-CDF sampling on the regularized incomplete gamma scale,
//! switching to the upper-tail function `Q` when the interval lies above the
//! mean. When the interval's mass is too small to represent accurately the
//! sampler falls back to rejection from an exponential or uniform envelope.

use rand::Rng;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Rejection attempts before giving up.
pub const MAX_REJECTIONS: usize = 10_000;

/// Smallest usable interval mass relative to the anchoring CDF value.
const MIN_RELATIVE_MASS: f64 = 1e-10;

fn ln_kernel(x: f64, shape: f64, rate: f64) -> f64 {
    (shape - 1.0) * x.ln() - rate * x
}

fn ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + ln_kernel(x, shape, rate)
}

fn check_args(shape: f64, rate: f64, lower: f64, upper: f64) -> Result<()> {
    if !(shape > 0.0 && shape.is_finite()) || !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!(
            "truncated gamma needs shape > 0 and rate >= 0, got ({shape}, {rate})"
        )));
    }
    if !(lower >= 0.0 && upper > lower) {
        return Err(Error::Domain(format!("empty truncation interval ({lower}, {upper})")));
    }
    if rate == 0.0 && upper.is_infinite() {
        return Err(Error::Domain("improper gamma (rate 0) on an unbounded interval".into()));
    }
    Ok(())
}

/// Interval mass in the better-conditioned representation.
struct Mass {
    upper_tail: bool,
    /// `P(lower)` or `Q(lower)`.
    start: f64,
    mass: f64,
    anchor: f64,
}

fn interval_mass(shape: f64, rate: f64, lower: f64, upper: f64) -> Mass {
    if lower * rate > shape {
        let q_lo = gamma_ur(shape, rate * lower);
        let q_hi = if upper.is_infinite() { 0.0 } else { gamma_ur(shape, rate * upper) };
        Mass { upper_tail: true, start: q_lo, mass: q_lo - q_hi, anchor: q_lo }
    } else {
        let p_lo = if lower == 0.0 { 0.0 } else { gamma_lr(shape, rate * lower) };
        let p_hi = if upper.is_infinite() { 1.0 } else { gamma_lr(shape, rate * upper) };
        Mass { upper_tail: false, start: p_lo, mass: p_hi - p_lo, anchor: p_hi }
    }
}

/// Log-density of `Gamma(shape, rate)` truncated to `(lower, upper)`.
pub fn ln_pdf_truncated(x: f64, shape: f64, rate: f64, lower: f64, upper: f64) -> Result<f64> {
    check_args(shape, rate, lower, upper)?;
    if rate == 0.0 {
        return Err(Error::Domain("truncated gamma density needs rate > 0".into()));
    }
    if !(x > lower && x < upper) {
        return Ok(f64::NEG_INFINITY);
    }
    let m = interval_mass(shape, rate, lower, upper);
    if !(m.mass > 0.0) {
        return Err(Error::Domain(format!(
            "truncated gamma mass underflows on ({lower}, {upper})"
        )));
    }
    Ok(ln_pdf(x, shape, rate) - m.mass.ln())
}

/// Draw from `Gamma(shape, rate)` (rate parameterisation) truncated to
/// `(lower, upper)`; `upper` may be infinite.
pub fn sample_truncated_gamma<R: Rng + ?Sized>(
    rng: &mut R,
    shape: f64,
    rate: f64,
    lower: f64,
    upper: f64,
) -> Result<f64> {
    check_args(shape, rate, lower, upper)?;
    if rate == 0.0 {
        // density proportional to x^(shape-1) on a bounded interval
        let u: f64 = rng.random();
        let (l, h) = (lower.powf(shape), upper.powf(shape));
        return Ok((l + u * (h - l)).powf(1.0 / shape).clamp(lower, upper));
    }
    let m = interval_mass(shape, rate, lower, upper);
    if m.mass > 0.0 && m.mass >= MIN_RELATIVE_MASS * m.anchor {
        let u: f64 = rng.random();
        let x = invert(shape, rate, lower, upper, &m, u);
        if x > lower && x < upper {
            return Ok(x);
        }
        // the inversion landed on an endpoint through rounding; fall through
    }
    rejection(rng, shape, rate, lower, upper)
}

fn invert(shape: f64, rate: f64, lower: f64, upper: f64, m: &Mass, u: f64) -> f64 {
    // increasing residual in x whose root is the draw
    let target = if m.upper_tail { m.start - u * m.mass } else { m.start + u * m.mass };
    let residual = |x: f64| {
        if m.upper_tail {
            target - gamma_ur(shape, rate * x)
        } else {
            gamma_lr(shape, rate * x) - target
        }
    };
    let mut lo = lower;
    let mut hi = upper;
    if hi.is_infinite() {
        hi = (lower.max(shape / rate)).max(f64::MIN_POSITIVE) * 2.0;
        while residual(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return lo;
            }
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let r = residual(x);
        if r == 0.0 {
            return x;
        }
        if r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = r / ln_pdf(x, shape, rate).exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if lo > 0.0 && hi / lo > 4.0 {
                (lo * hi).sqrt()
            } else if lo == 0.0 {
                hi / 16.0
            } else {
                0.5 * (lo + hi)
            };
        }
        if (next - x).abs() <= 1e-15 * x || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Exponential tail envelope anchored at `start` with rate `r`, heading in
/// `direction` (+1 upwards, -1 downwards) and truncated at `end`.
fn exp_envelope<R: Rng + ?Sized>(rng: &mut R, start: f64, end: f64, r: f64, direction: f64) -> f64 {
    let width = (end - start).abs();
    let u: f64 = rng.random();
    let span = if width.is_finite() { -(-r * width).exp_m1() } else { 1.0 };
    let e = -(-u * span).ln_1p() / r;
    start + direction * e.min(width)
}

fn rejection<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64, lower: f64, upper: f64) -> Result<f64> {
    let mode = if shape > 1.0 { (shape - 1.0) / rate } else { 0.0 };
    let a1 = shape - 1.0;
    for _ in 0..MAX_REJECTIONS {
        let u: f64 = rng.random();
        let (x, ln_accept) = if lower > 0.0 && shape >= 1.0 && rate - a1 / lower > 0.0 {
            // log-concave upper tail: tangent line at `lower`
            let r = rate - a1 / lower;
            let x = exp_envelope(rng, lower, upper, r, 1.0);
            let t = x / lower;
            (x, a1 * (t.ln() - (t - 1.0)))
        } else if lower > 0.0 && shape < 1.0 {
            // decreasing x^(shape-1) bounded by its value at `lower`
            let x = exp_envelope(rng, lower, upper, rate, 1.0);
            (x, a1 * (x / lower).ln())
        } else if upper.is_finite() && shape > 1.0 && a1 / upper - rate > 0.0 {
            // log-concave lower tail: tangent line at `upper`
            let r = a1 / upper - rate;
            let x = exp_envelope(rng, upper, lower, r, -1.0);
            let t = x / upper;
            (x, a1 * (t.ln() - (t - 1.0)))
        } else if lower == 0.0 && shape < 1.0 {
            // power-law proposal on (0, upper), accept on exp(-rate x)
            let v: f64 = rng.random();
            let x = upper * v.powf(1.0 / shape);
            (x, -rate * x)
        } else {
            // bounded interval containing the mode
            let v: f64 = rng.random();
            let x = lower + v * (upper - lower);
            let peak = mode.clamp(lower, upper);
            (x, ln_kernel(x, shape, rate) - ln_kernel(peak, shape, rate))
        };
        if x > lower && x < upper && u.ln() < ln_accept {
            return Ok(x);
        }
    }
    Err(Error::TruncatedGamma { shape, rate, lower, upper, attempts: MAX_REJECTIONS })
}
