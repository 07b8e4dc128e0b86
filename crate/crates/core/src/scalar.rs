//! Scalar abstraction and the single home for dB/linear conversions.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type the physical models are computed in (`f32` or `f64`).
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `10^(db/10)`.
pub fn db_to_linear<T: Scalar>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

/// `10·log10(ratio)`.
pub fn linear_to_db<T: Scalar>(ratio: T) -> T {
    T::lit(10.0) * ratio.log10()
}

/// Power in dBm to milliwatts.
pub fn dbm_to_mw<T: Scalar>(dbm: T) -> T {
    db_to_linear(dbm)
}

/// Power in milliwatts to dBm.
pub fn mw_to_dbm<T: Scalar>(mw: T) -> T {
    linear_to_db(mw)
}

/// Fraction of power surviving a loss given in dB.
pub fn loss_to_transmission<T: Scalar>(loss_db: T) -> T {
    db_to_linear(-loss_db)
}
