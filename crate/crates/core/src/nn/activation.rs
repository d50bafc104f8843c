use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_48;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_37;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Selu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Linear => z,
            Activation::Selu => {
                if z > T::zero() {
                    T::lit(SELU_LAMBDA) * z
                } else {
                    T::lit(SELU_LAMBDA * SELU_ALPHA) * z.exp_m1()
                }
            }
        }
    }

    #[inline]
    pub fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Selu => {
                if z > T::zero() {
                    T::lit(SELU_LAMBDA)
                } else {
                    T::lit(SELU_LAMBDA * SELU_ALPHA) * z.exp()
                }
            }
        }
    }

    /// Second derivative. At exactly `z = 0` SELU takes the left limit λα.
    #[inline]
    pub fn second_derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Linear => T::zero(),
            Activation::Selu => {
                if z > T::zero() {
                    T::zero()
                } else {
                    T::lit(SELU_LAMBDA * SELU_ALPHA) * z.exp()
                }
            }
        }
    }
}
