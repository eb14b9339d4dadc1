//! Scalar abstraction: all model math is generic over `f32`/`f64`.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar the whole crate is generic over.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Gauss error function (routed through f64; exact enough for both widths).
    fn erf(self) -> Self {
        Self::of(libm::erf(self.as_f64()))
    }
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Exact Gaussian-CDF GELU: `x * Phi(x)`.
pub fn gelu<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
    half * x * (T::one() + (x * inv_sqrt2).erf())
}

/// Derivative of the exact GELU: `Phi(x) + x * phi(x)`.
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    let inv_sqrt2 = T::of(std::f64::consts::FRAC_1_SQRT_2);
    let cdf = half * (T::one() + (x * inv_sqrt2).erf());
    let pdf = T::of(1.0 / (2.0 * std::f64::consts::PI).sqrt())
        * (-half * x * x).exp();
    cdf + x * pdf
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Overflow-safe `ln(1 + e^x)`.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-(x.abs())).exp().ln_1p()
}
