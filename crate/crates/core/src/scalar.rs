use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Matrix element type: `f32` or `f64`.
///
/// Storage is generic but all accumulation runs in `f64`; the two helpers
/// below are the only conversions the rest of the crate uses.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar is representable as f64")
    }

    /// Nearest representable value; rounds when `Self` is `f32`.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to scalar")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
}
