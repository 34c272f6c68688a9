use num_traits::{Float, FromPrimitive};

/// Floating-point type used for derived metrics and the power model.
pub trait Scalar:
    Float + FromPrimitive + Default + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite value")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
