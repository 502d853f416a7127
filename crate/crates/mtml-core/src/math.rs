//! Scalar math helpers usable without `std`.
//!
//! Float intrinsics come from `libm`. The logistic helpers are written in
//! log-sigmoid form so losses stay finite for arguments up to ±1e4 and beyond.

/// Square root.
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Natural logarithm.
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// `ln(1 + x)`, accurate near zero.
#[inline]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

/// Exponential.
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// Absolute value.
#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// Rounds half away from zero.
#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Logistic sigmoid σ(z) = 1/(1+e^{−z}), overflow-safe on both tails.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}

/// Softplus ln(1 + e^z) without overflow: max(z, 0) + ln(1 + e^{−|z|}).
pub fn softplus(z: f64) -> f64 {
    let m = if z > 0.0 { z } else { 0.0 };
    m + ln_1p(exp(-abs(z)))
}

/// −ln σ(z) in stable form; equals softplus(−z).
#[inline]
pub fn neg_log_sigmoid(z: f64) -> f64 {
    softplus(-z)
}

/// Tangent of an angle given in degrees.
///
/// Quarter-turn arguments are handled exactly (tan 45° = 1), matching the
/// IEEE 754-2019 `tanPi` convention, so coefficients like 4·tan²α come out
/// exact at the common α = 45° setting instead of off by one ulp.
pub fn tan_degrees(deg: f64) -> f64 {
    // reduce to [0, 180)
    let r = deg - 180.0 * libm::floor(deg / 180.0);
    if r == 0.0 {
        return 0.0;
    }
    if r == 45.0 {
        return 1.0;
    }
    if r == 90.0 {
        return f64::INFINITY;
    }
    if r == 135.0 {
        return -1.0;
    }
    libm::tan(r * core::f64::consts::PI / 180.0)
}

/// Quantizes `x` to the nearest multiple of `step` (step > 0).
pub fn quantize(x: f64, step: f64) -> f64 {
    round(x / step) * step
}
