//! Thin wrappers over `libm` so the same transcendental implementations are
//! used in `std` and `no_std` builds alike, keeping results bit-identical
//! across the two configurations.

#[inline(always)]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline(always)]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline(always)]
pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline(always)]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline(always)]
pub fn asin(x: f64) -> f64 {
    libm::asin(x)
}

#[inline(always)]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline(always)]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline(always)]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline(always)]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline(always)]
pub fn cosh(x: f64) -> f64 {
    libm::cosh(x)
}
