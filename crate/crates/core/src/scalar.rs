//! Floating-point scalar abstraction for the estimation paths.
//!
//! Counting (MACs, Ops, parameters, bytes) is exact integer arithmetic and
//! `work_per_output` is an exact rational. Everything measured in seconds,
//! joules, Ops/s or fractions goes through [`Scalar`], so the whole cost model
//! can be evaluated in `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A floating-point type usable for throughput, time, energy and shares.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + FromStr + Display + Debug + Default + Send + Sync + 'static
{
    /// Converts an exact count. Counts beyond 2^53 (f64) lose precision, which
    /// is far above anything an embedded graph produces.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("every u64 is representable as a float")
    }

    /// Converts an exact rational as `numer / denom`.
    fn from_ratio(r: Ratio<u64>) -> Self {
        Self::from_count(*r.numer()) / Self::from_count(*r.denom())
    }

    /// Converts a literal constant.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    /// Shortest decimal that round-trips through `FromStr` for this type.
    /// `None` for NaN and infinities.
    fn canonical(self) -> Option<String> {
        if self.is_finite() {
            Some(format!("{self}"))
        } else {
            None
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
