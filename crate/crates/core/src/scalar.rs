//! Scalar abstraction: every numeric routine in this crate is generic over
//! [`Real`] so the same code runs in `f32` or `f64` (the crate root exports
//! `f64` aliases, which is what the CLI and the acceptance suite use).

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use std::fmt::Debug;
use std::iter::Sum;

/// Floating-point scalar usable throughout the toolkit.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Sum + Debug + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for lifting an `f64` literal into the working scalar type.
#[inline]
pub(crate) fn cvt<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("f64 constant converts into the scalar type")
}

/// log2(2^a + 2^b) without leaving log space.
pub(crate) fn log2_add<F: Real>(a: F, b: F) -> F {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if (lo - hi) < cvt(-1074.0) {
        return hi;
    }
    hi + (F::one() + (lo - hi).exp2()).log2()
}
