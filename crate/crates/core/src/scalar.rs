//! Floating-point scalar abstraction shared by the model, observation,
//! log-domain and filtering code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01, Poisson, StandardNormal};

/// Real scalar used throughout the numerical core: `f32` or `f64`.
///
/// Besides the `num_traits` arithmetic this carries the few special
/// functions and random draws the model needs, so generic code never has
/// to name a concrete float type.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Natural log of the gamma function.
    fn lgamma(self) -> Self;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw on the open interval (0, 1).
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Gamma(shape, scale) draw. Both arguments must be positive and finite.
    fn gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Self;

    /// Poisson draw with the given mean. Mean zero yields zero.
    fn poisson<R: Rng + ?Sized>(mean: Self, rng: &mut R) -> u64;

    /// Lossy conversion from `f64`, used for literal constants.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        <Self as FromPrimitive>::from_u64(n).expect("count fits in float")
    }

    #[inline]
    fn from_index(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("index fits in float")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

macro_rules! impl_real {
    ($t:ty, $lgamma:path) => {
        impl Real for $t {
            #[inline]
            fn lgamma(self) -> Self {
                $lgamma(self)
            }

            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }

            #[inline]
            fn gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Self {
                Gamma::new(shape, scale)
                    .expect("gamma parameters must be positive")
                    .sample(rng)
            }

            fn poisson<R: Rng + ?Sized>(mean: Self, rng: &mut R) -> u64 {
                if !(mean > 0.0) {
                    return 0;
                }
                let draw: $t = Poisson::new(mean)
                    .expect("poisson mean within sampler range")
                    .sample(rng);
                draw as u64
            }
        }
    };
}

impl_real!(f64, libm::lgamma);
impl_real!(f32, libm::lgammaf);
