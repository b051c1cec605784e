//! Finite discrete distributions.
//!
//! A [`DiscreteDistribution`] keeps its atoms strictly increasing with
//! positive probabilities summing to one. Duplicate atoms are merged and
//! zero-probability atoms dropped at construction, so two distributions with
//! the same law have the same representation.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{bits, compensated_sum, Scalar};

/// Input probabilities may deviate from 1 by this much before rejection.
pub const INPUT_SUM_TOL: f64 = 1e-9;

/// Mean-zero tolerance (absolute, scaled by the largest atom magnitude when
/// that exceeds one).
pub const MEAN_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution<T> {
    atoms: Vec<T>,
    probs: Vec<T>,
}

/// Low-order moments of a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSummary<T> {
    pub mean: T,
    pub variance: T,
    pub third: T,
    pub fourth: T,
    pub abs_third: T,
}

impl<T: Scalar> DiscreteDistribution<T> {
    /// Validates, sorts, merges duplicate atoms and renormalizes.
    pub fn new(atoms: Vec<T>, probs: Vec<T>) -> Result<Self> {
        if atoms.len() != probs.len() {
            return Err(Error::LengthMismatch {
                atoms: atoms.len(),
                probs: probs.len(),
            });
        }
        if atoms.is_empty() {
            return Err(Error::Empty);
        }
        for (i, (&a, &p)) in atoms.iter().zip(&probs).enumerate() {
            if !a.is_finite() || !p.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            if p < T::zero() {
                return Err(Error::NegativeProbability {
                    index: i,
                    value: p.as_f64(),
                });
            }
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - T::one()).abs() > T::tol(INPUT_SUM_TOL) {
            return Err(Error::ProbabilitySum { sum: total.as_f64() });
        }
        Ok(Self::from_weighted(atoms.into_iter().zip(probs)))
    }

    /// Builds a distribution from nonnegative weights, normalizing by their
    /// total. Weights that sum to zero, or an empty input, panic: callers
    /// inside the crate only pass laws produced by enumeration.
    pub(crate) fn from_weighted<I: IntoIterator<Item = (T, T)>>(items: I) -> Self {
        let mut merged: HashMap<(u64, i16, i8), (T, Vec<T>)> = HashMap::new();
        for (a, w) in items {
            if w > T::zero() {
                merged
                    .entry(bits(a))
                    .or_insert_with(|| (a + T::zero(), Vec::new()))
                    .1
                    .push(w);
            }
        }
        let mut pairs: Vec<(T, T)> = merged.into_values().map(|(a, ws)| (a, compensated_sum(ws))).collect();
        assert!(!pairs.is_empty(), "law with no positive mass");
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite atoms"));
        let total = compensated_sum(pairs.iter().map(|p| p.1));
        let (atoms, probs) = pairs.into_iter().map(|(a, w)| (a, w / total)).unzip();
        Self { atoms, probs }
    }

    pub fn point_mass(x: T) -> Self {
        Self {
            atoms: vec![x],
            probs: vec![T::one()],
        }
    }

    /// Equal mass on each of the given values (duplicates merged).
    pub fn uniform(values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        let p = T::one() / T::from_usize_(values.len());
        Self::new(values.to_vec(), vec![p; values.len()])
    }

    pub fn atoms(&self) -> &[T] {
        &self.atoms
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.atoms.iter().copied().zip(self.probs.iter().copied())
    }

    /// `E g(X)` by compensated atom summation.
    pub fn expect<F: Fn(T) -> T>(&self, g: F) -> T {
        compensated_sum(self.iter().map(|(a, p)| p * g(a)))
    }

    /// Raw moment `E X^k`.
    pub fn moment(&self, k: u32) -> T {
        self.expect(|a| a.powi(k as i32))
    }

    /// Absolute moment `E |X|^k`.
    pub fn abs_moment(&self, k: u32) -> T {
        self.expect(|a| a.abs().powi(k as i32))
    }

    pub fn mean(&self) -> T {
        self.moment(1)
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.expect(|a| (a - m) * (a - m))
    }

    pub fn moments(&self) -> MomentSummary<T> {
        MomentSummary {
            mean: self.mean(),
            variance: self.variance(),
            third: self.moment(3),
            fourth: self.moment(4),
            abs_third: self.abs_moment(3),
        }
    }

    pub fn max_abs_atom(&self) -> T {
        self.atoms.iter().fold(T::zero(), |m, a| m.max(a.abs()))
    }

    /// The law of `X - E X`.
    pub fn center(&self) -> Self {
        let m = self.mean();
        if m == T::zero() {
            return self.clone();
        }
        Self::from_weighted(self.iter().map(|(a, p)| (a - m, p)))
    }

    /// The law of `c X`.
    pub fn scale(&self, c: T) -> Self {
        Self::from_weighted(self.iter().map(|(a, p)| (c * a, p)))
    }

    /// The law of `X + Y` for independent `X`, `Y`.
    pub fn convolve(&self, other: &Self) -> Self {
        Self::from_weighted(
            self.iter()
                .flat_map(|(a, p)| other.iter().map(move |(b, q)| (a + b, p * q))),
        )
    }

    /// True when the law is invariant under negation, within `tol`.
    pub fn is_symmetric(&self, tol: T) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            let j = n - 1 - i;
            (self.atoms[i] + self.atoms[j]).abs() <= tol && (self.probs[i] - self.probs[j]).abs() <= tol
        })
    }

    /// Right-continuous distribution function.
    pub fn cdf(&self, x: T) -> T {
        let k = self.atoms.partition_point(|&a| a <= x);
        compensated_sum(self.probs[..k].iter().copied())
    }

    /// Checks mean zero and nonzero variance; returns `σ²`.
    pub fn require_zero_mean(&self) -> Result<T> {
        let mean = self.mean();
        let scale = self.max_abs_atom().max(T::one());
        if mean.abs() > T::tol(MEAN_ZERO_TOL) * scale {
            return Err(Error::NonzeroMean { mean: mean.as_f64() });
        }
        let var = self.moment(2);
        if self.len() < 2 || var <= T::zero() {
            return Err(Error::ZeroVariance);
        }
        Ok(var)
    }

    pub fn sampler(&self) -> CdfTable<T> {
        CdfTable::new(&self.probs)
    }

    /// `count` i.i.d. draws by inversion of the distribution function.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<T> {
        let table = self.sampler();
        (0..count).map(|_| self.atoms[table.draw(rng)]).collect()
    }
}

/// Inversion sampler over a finite list of weights.
#[derive(Debug, Clone)]
pub struct CdfTable<T> {
    cumulative: Vec<T>,
}

impl<T: Scalar> CdfTable<T> {
    pub fn new(weights: &[T]) -> Self {
        let mut acc = Vec::with_capacity(weights.len());
        let mut sum = T::zero();
        let mut comp = T::zero();
        for &w in weights {
            let y = w - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            acc.push(sum);
        }
        Self { cumulative: acc }
    }

    pub fn total(&self) -> T {
        self.cumulative.last().copied().unwrap_or_else(T::zero)
    }

    /// Index of the weight selected by a uniform on `[0, total)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = T::c(rng.gen::<f64>()) * self.total();
        self.locate(u)
    }

    pub fn locate(&self, u: T) -> usize {
        let k = self.cumulative.partition_point(|&c| c <= u);
        k.min(self.cumulative.len() - 1)
    }
}

/// Draws a uniform `[0, 1)` variate in the working precision.
pub fn uniform01<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let u = T::c(rng.gen::<f64>());
    if u >= T::one() {
        T::one() - T::epsilon()
    } else {
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d(atoms: &[f64], probs: &[f64]) -> DiscreteDistribution<f64> {
        DiscreteDistribution::new(atoms.to_vec(), probs.to_vec()).unwrap()
    }

    #[test]
    fn construction_sorts_and_merges() {
        let x = d(&[1.0, -1.0], &[0.5, 0.5]);
        assert_eq!(x.atoms(), &[-1.0, 1.0]);
        assert_eq!(x.probs(), &[0.5, 0.5]);

        let y = d(&[0.0, 0.0, 1.0], &[0.25, 0.25, 0.5]);
        assert_eq!(y.atoms(), &[0.0, 1.0]);
        assert_eq!(y.probs(), &[0.5, 0.5]);

        let z = d(&[3.0, 1.0, 2.0], &[0.5, 0.0, 0.5]);
        assert_eq!(z.atoms(), &[2.0, 3.0]);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.6]),
            Err(Error::ProbabilitySum { .. })
        ));
        assert!(matches!(
            DiscreteDistribution::new(vec![0.0, 1.0], vec![1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            DiscreteDistribution::new(vec![0.0, 1.0], vec![1.5, -0.5]),
            Err(Error::NegativeProbability { .. })
        ));
        // round-off within the input tolerance is accepted and renormalized
        let x = d(&[0.0, 1.0], &[0.5, 0.5 + 1e-10]);
        assert!((x.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn moments_of_small_laws() {
        let u = d(&[-1.0, 1.0], &[0.5, 0.5]);
        assert_eq!(u.moment(2), 1.0);
        assert_eq!(u.moment(3), 0.0);
        let t = d(&[-1.0, 0.0, 1.0], &[0.25, 0.5, 0.25]);
        assert_eq!(t.moment(4), 0.5);
        let m = t.moments();
        assert!(m.abs_third >= m.third.abs());
    }

    #[test]
    fn centering() {
        let c = d(&[0.0, 2.0], &[0.5, 0.5]).center();
        assert_eq!(c.atoms(), &[-1.0, 1.0]);
        let c = d(&[0.0, 4.0], &[0.75, 0.25]).center();
        assert_eq!(c.atoms(), &[-1.0, 3.0]);
        assert_eq!(c.probs(), &[0.75, 0.25]);
        let already = d(&[-1.0, 1.0], &[0.5, 0.5]);
        assert_eq!(already.center(), already);
    }

    #[test]
    fn sampling_is_deterministic() {
        let pm = d(&[0.0], &[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(pm.sample(&mut rng, 3), vec![0.0, 0.0, 0.0]);

        let u = d(&[-1.0, 1.0], &[0.5, 0.5]);
        let a = u.sample(&mut ChaCha8Rng::seed_from_u64(7), 100);
        let b = u.sample(&mut ChaCha8Rng::seed_from_u64(7), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_within_clt_width() {
        let u = d(&[-1.0, 1.0], &[0.5, 0.5]);
        let n = 100_000;
        let xs = u.sample(&mut ChaCha8Rng::seed_from_u64(11), n);
        let mean = compensated_sum(xs) / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn empirical_cdf_converges() {
        let x = d(&[-2.0, -0.5, 0.1, 1.0, 3.0], &[0.1, 0.2, 0.3, 0.25, 0.15]);
        let n = 100_000;
        let mut xs = x.sample(&mut ChaCha8Rng::seed_from_u64(3), n);
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut dist: f64 = 0.0;
        for &a in x.atoms() {
            let emp = xs.partition_point(|&v| v <= a) as f64 / n as f64;
            dist = dist.max((emp - x.cdf(a)).abs());
        }
        assert!(dist < 1.63 / (n as f64).sqrt(), "KS {dist}");
    }

    #[test]
    fn convolution_of_signs_is_binomial() {
        let u = d(&[-1.0, 1.0], &[0.5, 0.5]);
        let w = u.convolve(&u).convolve(&u);
        assert_eq!(w.atoms(), &[-3.0, -1.0, 1.0, 3.0]);
        assert_eq!(w.probs(), &[0.125, 0.375, 0.375, 0.125]);
    }

    #[test]
    fn f32_instantiation() {
        let x = DiscreteDistribution::<f32>::new(vec![0.0, 4.0], vec![0.75, 0.25]).unwrap();
        let c = x.center();
        assert!(c.mean().abs() < 1e-6);
        assert_eq!(c.atoms(), &[-1.0f32, 3.0]);
    }

    fn arb_law() -> impl Strategy<Value = DiscreteDistribution<f64>> {
        prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..12).prop_map(|v| {
            let total: f64 = v.iter().map(|p| p.1).sum();
            let (a, p): (Vec<_>, Vec<_>) = v.into_iter().map(|(a, p)| (a, p / total)).unzip();
            DiscreteDistribution::new(a, p).unwrap()
        })
    }

    proptest! {
        #[test]
        fn centered_mean_vanishes(x in arb_law()) {
            prop_assert!(x.center().mean().abs() < 1e-14 * x.max_abs_atom().max(1.0));
        }

        #[test]
        fn merging_preserves_moments(x in arb_law(), dup in 0usize..12) {
            let k = dup % x.len();
            let mut atoms = x.atoms().to_vec();
            let mut probs = x.probs().to_vec();
            let half = probs[k] / 2.0;
            probs[k] = half;
            atoms.push(atoms[k]);
            probs.push(half);
            let y = DiscreteDistribution::new(atoms, probs).unwrap();
            for m in 0..=8 {
                let scale = x.abs_moment(m).max(1.0);
                prop_assert!((x.moment(m) - y.moment(m)).abs() <= 1e-12 * scale);
            }
        }
    }
}
