//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the simulator can run on: `f32` or `f64`.
///
/// All physics is written against this trait. Tolerances quoted in the tests
/// assume `f64`; `f32` runs are useful for quick looks only.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + rustfft::FftNum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal or constant into this type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count or index.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    /// Lossy view as `f64` for reporting and error messages.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Largest acceptable norm drift of a propagated state.
    fn norm_tolerance() -> Self {
        (Self::epsilon() * Self::lit(1e4)).max(Self::lit(1e-8))
    }
}

impl Real for f32 {}
impl Real for f64 {}
