//! Numeric traits the algorithms are generic over.
//!
//! [`Scalar`] covers the floating-point work (TF-IDF weights, personalized
//! PageRank, the linear learner). [`MetricValue`] is the weaker field-like
//! bound used by the evaluation metrics, which only need counts and
//! division, so they also run over exact rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::{Ratio, Rational64};
use num_traits::{Float, FromPrimitive, Num};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used by graph construction, propagation and training.
pub trait Scalar:
    Float
    + FromPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn of_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize fits in a float")
    }

    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal fits")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Number type for precision / recall / ranking metrics.
pub trait MetricValue: Num + Clone + PartialOrd + Debug + Send + Sync {
    fn from_count(n: usize) -> Self;
    fn as_f64(&self) -> f64;
}

impl MetricValue for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }
    fn as_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl MetricValue for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }
    fn as_f64(&self) -> f64 {
        *self
    }
}

impl MetricValue for Rational64 {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(i64::try_from(n).expect("count fits in i64"))
    }
    fn as_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}
