//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used by the policy, curriculum and trainer.
///
/// Implemented for `f32` and `f64`. Every routine in the crate needs
/// `exp`/`ln`/`tanh`, so exact rationals are not supported.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    /// Lossy conversion from a count.
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable log-sum-exp of a slice.
pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    if !max.is_finite() {
        return max;
    }
    let sum: S = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// In-place log-softmax.
pub fn log_softmax_in_place<S: Scalar>(xs: &mut [S]) {
    let lse = log_sum_exp(xs);
    for x in xs.iter_mut() {
        *x = *x - lse;
    }
}

/// Population mean and standard deviation.
pub fn mean_std<S: Scalar>(xs: &[S]) -> (S, S) {
    if xs.is_empty() {
        return (S::zero(), S::zero());
    }
    let n = S::of_usize(xs.len());
    let mean = xs.iter().copied().sum::<S>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_softmax_normalizes() {
        let mut v = vec![1.0f64, 2.0, 3.0, -40.0];
        log_softmax_in_place(&mut v);
        let total: f64 = v.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lse_handles_large_inputs() {
        let v = [1000.0f64, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[2.0f64, 0.0, 0.0, 2.0]);
        assert_eq!(m, 1.0);
        assert_eq!(s, 1.0);
    }
}
