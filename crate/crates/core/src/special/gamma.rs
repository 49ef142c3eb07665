//! Gamma function and friends.
//!
//! Large arguments use the Stirling series with the power split in two so
//! that `x^(x-1/2)` never overflows before Γ(x) itself does. Small arguments
//! are shifted up by the recurrence, negative ones go through reflection.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const SQRT_TWO_PI: f64 = 2.506_628_274_631_000_5;
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Argument above which the Stirling series is summed directly.
const STIRLING_MIN: f64 = 10.0;

/// Largest argument with a finite Γ in f64.
const GAMMA_MAX: f64 = 171.624_376_956_302_7;

/// Bernoulli-number coefficients B_{2k} / (2k (2k-1)).
const STIRLING_COEFFS: [f64; 8] =
    [1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0, 1.0 / 1188.0, -691.0 / 360_360.0, 1.0 / 156.0, -3617.0 / 122_400.0];

fn stirling_correction(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in STIRLING_COEFFS.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

/// sin(πx) with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    // reduce to r in [-1, 1]
    let r = x - 2.0 * (x * 0.5).round();
    if r == 0.0 || r.abs() == 1.0 {
        return 0.0;
    }
    if r > 0.5 {
        (PI * (1.0 - r)).sin()
    } else if r < -0.5 {
        -(PI * (1.0 + r)).sin()
    } else {
        (PI * r).sin()
    }
}

fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// Γ(x) for x ≥ STIRLING_MIN.
fn gamma_large(x: f64) -> f64 {
    if x > GAMMA_MAX {
        return f64::INFINITY;
    }
    let half = x.powf(0.5 * (x - 0.5));
    SQRT_TWO_PI * half * (half * (-x).exp()) * stirling_correction(x).exp()
}

/// Γ(x) for x ≥ 0.5 (no poles on this range).
fn gamma_positive(x: f64) -> f64 {
    if x == x.floor() && x <= 30.0 {
        // exact factorials while they fit in the mantissa
        return (2..x as u64).fold(1.0, |acc, k| acc * k as f64);
    }
    if x >= STIRLING_MIN {
        return gamma_large(x);
    }
    let mut y = x;
    let mut denom = 1.0;
    while y < STIRLING_MIN {
        denom *= y;
        y += 1.0;
    }
    gamma_large(y) / denom
}

/// Gamma function.
///
/// Returns a domain error at the poles 0, -1, -2, ...
pub fn gamma(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("gamma of NaN".into()));
    }
    if is_pole(x) {
        return Err(Error::Domain(format!("gamma has a pole at {x}")));
    }
    if x >= 0.5 {
        Ok(gamma_positive(x))
    } else {
        // Γ(x) = π / (sin(πx) Γ(1-x))
        let g = gamma_positive(1.0 - x);
        Ok(PI / (sin_pi(x) * g))
    }
}

/// 1/Γ(x), an entire function: zero at the poles of Γ, no error cases.
pub fn rgamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 0.5 {
        if x > GAMMA_MAX {
            return (-ln_gamma_positive(x)).exp();
        }
        1.0 / gamma_positive(x)
    } else {
        // 1/Γ(x) = sin(πx) Γ(1-x) / π
        let y = 1.0 - x;
        if y > GAMMA_MAX {
            let s = sin_pi(x);
            if s == 0.0 {
                return 0.0;
            }
            return s.signum() * (ln_gamma_positive(y) + s.abs().ln() - PI.ln()).exp();
        }
        sin_pi(x) * gamma_positive(y) / PI
    }
}

fn ln_gamma_positive(x: f64) -> f64 {
    if x >= STIRLING_MIN {
        return (x - 0.5) * x.ln() - x + HALF_LN_TWO_PI + stirling_correction(x);
    }
    let mut y = x;
    let mut denom = 1.0;
    while y < STIRLING_MIN {
        denom *= y;
        y += 1.0;
    }
    (y - 0.5) * y.ln() - y + HALF_LN_TWO_PI + stirling_correction(y) - denom.ln()
}

/// ln|Γ(x)|.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if x.is_nan() || is_pole(x) {
        return Err(Error::Domain(format!("ln_gamma undefined at {x}")));
    }
    if x >= 0.5 {
        Ok(ln_gamma_positive(x))
    } else {
        Ok(PI.ln() - sin_pi(x).abs().ln() - ln_gamma_positive(1.0 - x))
    }
}

/// Upper incomplete gamma Γ(a, x) for a > 0 (or any real a when x > 0 is
/// large enough for the continued fraction), x > 0.
pub fn upper_incomplete_gamma(a: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("upper incomplete gamma needs x > 0, got {x}")));
    }
    if x > a + 1.0 || a <= 0.0 {
        continued_fraction_upper(a, x)
    } else {
        // Γ(a, x) = Γ(a) - γ(a, x)
        let lower = series_lower(a, x)?;
        Ok(gamma(a)? - lower)
    }
}

/// Lower incomplete gamma by its power series: γ(a,x) = x^a e^{-x} Σ x^n / (a(a+1)...(a+n)).
fn series_lower(a: f64, x: f64) -> Result<f64> {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            return Ok(sum * (a * x.ln() - x).exp());
        }
    }
    Err(Error::Numeric("incomplete gamma series did not converge".into()))
}

/// Modified Lentz evaluation of the continued fraction for Γ(a, x).
fn continued_fraction_upper(a: f64, x: f64) -> Result<f64> {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok((a * x.ln() - x).exp() * h);
        }
    }
    Err(Error::Numeric("incomplete gamma continued fraction did not converge".into()))
}
