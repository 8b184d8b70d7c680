//! Probability vectors on the (K−1)-simplex.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sum-to-one tolerance for [`SimplexVector`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Non-negative vector whose entries sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound(deserialize = "T: Scalar + Deserialize<'de>", serialize = "T: Scalar + Serialize"))]
pub struct SimplexVector<T>(Vec<T>);

impl<T: Scalar> SimplexVector<T> {
    pub fn new(v: Vec<T>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::arg("simplex vector must be non-empty"));
        }
        if v.iter().any(|x| !x.is_finite() || *x < T::zero()) {
            return Err(Error::arg("simplex entries must be finite and non-negative"));
        }
        let s: T = v.iter().copied().sum();
        if (s - T::one()).abs() > T::lit(SIMPLEX_TOL) {
            return Err(Error::arg(format!("simplex entries sum to {s}, not 1")));
        }
        Ok(Self(v))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0);
        Self(vec![T::one() / T::from_usize(k).unwrap(); k])
    }

    pub fn one_hot(k: usize, i: usize) -> Self {
        assert!(i < k);
        let mut v = vec![T::zero(); k];
        v[i] = T::one();
        Self(v)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn is_uniform(&self, tol: T) -> bool {
        let u = T::one() / T::from_usize(self.0.len()).unwrap();
        self.0.iter().all(|&p| (p - u).abs() <= tol)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl<T> Deref for SimplexVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for SimplexVector<T> {
    type Error = Error;

    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T> From<SimplexVector<T>> for Vec<T> {
    fn from(s: SimplexVector<T>) -> Vec<T> {
        s.0
    }
}

/// Clips negative entries to zero and renormalizes.
pub fn project_to_simplex<T: Scalar>(v: &[T]) -> Result<SimplexVector<T>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::arg("cannot project a non-finite vector"));
    }
    let clipped: Vec<T> = v.iter().map(|&x| x.max(T::zero())).collect();
    let s: T = clipped.iter().copied().sum();
    if s <= T::zero() {
        return Err(Error::DegenerateVector);
    }
    Ok(SimplexVector(clipped.into_iter().map(|x| x / s).collect()))
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(scores: &[T]) -> SimplexVector<T> {
    let m = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = scores.iter().map(|&s| (s - m).exp()).collect();
    let z: T = e.iter().copied().sum();
    SimplexVector(e.into_iter().map(|x| x / z).collect())
}

/// `log Σ exp(v_i)`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

pub fn argmax<T: PartialOrd>(v: &[T]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_simplex(&[0.3, 0.7]).unwrap().as_slice(), &[0.3, 0.7]);
        let p = project_to_simplex::<f64>(&[0.5, -0.1, 0.6]).unwrap();
        let want = [5.0 / 11.0, 0.0, 6.0 / 11.0];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(project_to_simplex(&[2.0, 2.0]).unwrap().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn projection_degenerate() {
        assert!(matches!(project_to_simplex(&[0.0, -1.0]), Err(Error::DegenerateVector)));
        assert!(project_to_simplex(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn simplex_validation() {
        assert!(SimplexVector::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexVector::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexVector::new(vec![1.1, -0.1]).is_err());
        assert!(SimplexVector::<f64>::new(vec![]).is_err());
        let s: SimplexVector<f64> = serde_json::from_str("[0.25,0.75]").unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), "[0.25,0.75]");
        assert!(serde_json::from_str::<SimplexVector<f64>>("[0.3,0.3]").is_err());
    }

    #[test]
    fn softmax_of_zero_is_uniform() {
        let s = softmax(&[0.0f64; 4]);
        assert!(s.is_uniform(1e-15));
        let big = softmax::<f64>(&[1000.0, 0.0]);
        assert!((big[0] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex_and_is_idempotent(
            v in prop::collection::vec(-5.0f64..5.0, 1..10)
        ) {
            prop_assume!(v.iter().any(|&x| x > 0.0));
            let p = project_to_simplex(&v).unwrap();
            prop_assert!(SimplexVector::new(p.as_slice().to_vec()).is_ok());
            let pp = project_to_simplex(p.as_slice()).unwrap();
            for (a, b) in p.iter().zip(pp.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_on_simplex(v in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let s = softmax(&v);
            let total: f64 = s.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(s.iter().all(|&p| p >= 0.0));
        }
    }
}
