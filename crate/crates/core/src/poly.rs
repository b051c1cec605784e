//! Dense univariate polynomials, the exact test-function family for identity
//! checks.

use rand::Rng;

use crate::scalar::Scalar;

/// `c[0] + c[1] x + ... + c[d] x^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Self { coeffs }
    }

    pub fn monomial(k: usize) -> Self {
        let mut c = vec![T::zero(); k + 1];
        c[k] = T::one();
        Self { coeffs: c }
    }

    /// Coefficients uniform on `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, degree: usize) -> Self {
        Self::new((0..=degree).map(|_| T::c(rng.gen_range(-1.0..=1.0))).collect())
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::new(vec![T::zero()]);
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * T::from_usize_(k))
                .collect(),
        )
    }

    /// Antiderivative vanishing at zero.
    pub fn antiderivative(&self) -> Self {
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(T::zero());
        c.extend(self.coeffs.iter().enumerate().map(|(k, &a)| a / T::from_usize_(k + 1)));
        Self::new(c)
    }

    /// Multiplies by `x`.
    pub fn shift_up(&self) -> Self {
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(T::zero());
        c.extend_from_slice(&self.coeffs);
        Self::new(c)
    }
}
