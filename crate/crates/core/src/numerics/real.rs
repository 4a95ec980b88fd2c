use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Scalar type of every tensor: `f32` for training, `f64` for gradient checks.
pub trait Real:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + 'static
{
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
    // Transcendentals always come from libm, so results do not depend on
    // whether some other crate switches num-traits to std math.
    fn libm_exp(self) -> Self;
    fn libm_ln(self) -> Self;
    fn libm_tanh(self) -> Self;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn libm_exp(self) -> Self {
        libm::expf(self)
    }
    #[inline]
    fn libm_ln(self) -> Self {
        libm::logf(self)
    }
    #[inline]
    fn libm_tanh(self) -> Self {
        libm::tanhf(self)
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn libm_exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn libm_ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn libm_tanh(self) -> Self {
        libm::tanh(self)
    }
}
