//! Scalar helpers over `libm` so the crate stays `no_std`.

use num_complex::Complex;

pub type C64 = Complex<f64>;

pub const PI: f64 = core::f64::consts::PI;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_812_8e-12;
/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn hypot3(x: f64, y: f64, z: f64) -> f64 {
    sqrt(x * x + y * y + z * z)
}

/// `e^{-j x}`.
#[inline]
pub fn cis_neg(x: f64) -> C64 {
    C64::new(cos(x), -sin(x))
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn norm_sqr(z: C64) -> f64 {
    z.re * z.re + z.im * z.im
}

#[inline]
pub fn modulus(z: C64) -> f64 {
    sqrt(norm_sqr(z))
}

/// Euclidean norm of a complex vector.
pub fn vec_norm(x: &[C64]) -> f64 {
    sqrt(x.iter().map(|&z| norm_sqr(z)).sum::<f64>())
}

/// Conjugate inner product `Σ conj(a_i) b_i`.
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Relative distance `‖a − b‖ / ‖b‖`.
pub fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let num = sqrt(a.iter().zip(b).map(|(x, y)| norm_sqr(x - y)).sum::<f64>());
    num / vec_norm(b)
}

/// `−log10(err)`, infinite when the error vanishes.
pub fn neg_log10(err: f64) -> f64 {
    if err <= 0.0 {
        f64::INFINITY
    } else {
        -log10(err)
    }
}
