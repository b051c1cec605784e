//! The zero-bias transformation on finite discrete laws.
//!
//! For a mean-zero `W` with variance `σ²`, the zero-biased law has density
//! `p(w) = σ⁻² E[W; W > w]`. On a finite support this is constant between
//! consecutive atoms, so it is stored exactly as a [`PiecewiseUniformDensity`].

use rand::Rng;
use serde::Serialize;

use crate::dist::{uniform01, CdfTable, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::scalar::{bits, compensated_sum, sort_total, Scalar};

/// Identity residual tolerance used throughout the exact checks.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Constant density on each right-open interval `[b_i, b_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseUniformDensity<T> {
    breakpoints: Vec<T>,
    densities: Vec<T>,
}

impl<T: Scalar> PiecewiseUniformDensity<T> {
    pub fn new(breakpoints: Vec<T>, densities: Vec<T>) -> Result<Self> {
        if breakpoints.len() != densities.len() + 1 || densities.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} breakpoints need {} densities, got {}",
                breakpoints.len(),
                breakpoints.len().saturating_sub(1),
                densities.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("breakpoints must increase strictly".into()));
        }
        if let Some(i) = densities.iter().position(|&d| d < T::zero() || !d.is_finite()) {
            return Err(Error::NegativeProbability {
                index: i,
                value: densities[i].as_f64(),
            });
        }
        Ok(Self { breakpoints, densities })
    }

    /// Density of a finite mixture of uniforms; each component is
    /// `(lo, hi, weight)` with `lo < hi`. Zero-width components are ignored.
    pub fn from_uniform_mixture<I: IntoIterator<Item = (T, T, T)>>(components: I) -> Self {
        let comps: Vec<(T, T, T)> = components
            .into_iter()
            .filter(|c| c.0 < c.1 && c.2 > T::zero())
            .collect();
        let mut points: Vec<T> = comps.iter().flat_map(|c| [c.0, c.1]).collect();
        sort_total(&mut points);
        points.dedup_by(|a, b| bits(*a) == bits(*b));
        let m = points.len().saturating_sub(1);
        let mut parts: Vec<Vec<T>> = vec![Vec::new(); m];
        for &(lo, hi, w) in &comps {
            let start = points.partition_point(|&p| p < lo);
            let end = points.partition_point(|&p| p < hi);
            let h = w / (hi - lo);
            for part in &mut parts[start..end] {
                part.push(h);
            }
        }
        let densities = parts.into_iter().map(compensated_sum).collect();
        Self {
            breakpoints: points,
            densities,
        }
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[T] {
        &self.densities
    }

    /// Closed support `[b_0, b_m]`.
    pub fn support(&self) -> (T, T) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn interval_masses(&self) -> impl Iterator<Item = T> + '_ {
        self.densities
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(&d, w)| d * (w[1] - w[0]))
    }

    pub fn mass(&self) -> T {
        compensated_sum(self.interval_masses())
    }

    pub fn density_at(&self, x: T) -> T {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        if k == 0 || k == self.breakpoints.len() {
            T::zero()
        } else {
            self.densities[k - 1]
        }
    }

    pub fn cdf(&self, x: T) -> T {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        if k == 0 {
            return T::zero();
        }
        let full = compensated_sum(self.interval_masses().take(k - 1));
        if k == self.breakpoints.len() {
            return full;
        }
        full + self.densities[k - 1] * (x - self.breakpoints[k - 1])
    }

    /// `∫ p(w) g(w) dw` for polynomial `g`, by antiderivative differences.
    pub fn integrate_poly(&self, g: &Polynomial<T>) -> T {
        self.integrate_derivative(&g.antiderivative())
    }

    /// `∫ p(w) f'(w) dw = Σ d_i (f(b_{i+1}) - f(b_i))`.
    pub fn integrate_derivative(&self, f: &Polynomial<T>) -> T {
        let values: Vec<T> = self.breakpoints.iter().map(|&b| f.eval(b)).collect();
        compensated_sum(
            self.densities
                .iter()
                .zip(values.windows(2))
                .map(|(&d, v)| d * (v[1] - v[0])),
        )
    }

    /// `E (W*)^n` by exact integration.
    pub fn moment(&self, n: usize) -> T {
        self.integrate_poly(&Polynomial::monomial(n))
    }

    /// Nondecreasing left of zero, nonincreasing right of zero.
    pub fn is_unimodal_about_zero(&self, tol: T) -> bool {
        let b = &self.breakpoints;
        let d = &self.densities;
        (1..d.len()).all(|i| {
            if b[i + 1] <= T::zero() {
                d[i] + tol >= d[i - 1]
            } else if b[i - 1] >= T::zero() {
                d[i] <= d[i - 1] + tol
            } else {
                true
            }
        })
    }

    /// Largest density gap between two piecewise densities, evaluated on the
    /// common refinement. Sub-intervals narrower than `sliver` (round-off
    /// between nearly equal breakpoints) are skipped.
    pub fn max_abs_difference(&self, other: &Self, sliver: T) -> T {
        let mut points: Vec<T> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        sort_total(&mut points);
        points.dedup_by(|a, b| bits(*a) == bits(*b));
        let two = T::c(2.0);
        points
            .windows(2)
            .filter(|w| w[1] - w[0] > sliver)
            .map(|w| {
                let mid = (w[0] + w[1]) / two;
                (self.density_at(mid) - other.density_at(mid)).abs()
            })
            .fold(T::zero(), T::max)
    }

    /// Largest gap between the distribution functions of the two densities.
    pub fn max_cdf_difference(&self, other: &Self) -> T {
        self.breakpoints
            .iter()
            .chain(&other.breakpoints)
            .map(|&x| (self.cdf(x) - other.cdf(x)).abs())
            .fold(T::zero(), T::max)
    }

    /// Wasserstein-1 distance to a discrete law, computed exactly: the
    /// distribution functions are piecewise linear and piecewise constant on
    /// the merged grid.
    pub fn wasserstein1_to(&self, d: &DiscreteDistribution<T>) -> T {
        let mut points: Vec<T> = self.breakpoints.iter().chain(d.atoms()).copied().collect();
        sort_total(&mut points);
        points.dedup_by(|a, b| bits(*a) == bits(*b));
        let two = T::c(2.0);
        compensated_sum(points.windows(2).map(|w| {
            let fd = d.cdf(w[0]);
            let a = self.cdf(w[0]) - fd;
            let b = self.cdf(w[1]) - fd;
            let h = w[1] - w[0];
            if a * b >= T::zero() {
                h * (a.abs() + b.abs()) / two
            } else {
                h * (a * a + b * b) / (two * (a.abs() + b.abs()))
            }
        }))
    }

    pub fn sampler(&self) -> CdfTable<T> {
        CdfTable::new(&self.interval_masses().collect::<Vec<_>>())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<T> {
        let table = self.sampler();
        (0..count)
            .map(|_| {
                let k = table.draw(rng);
                let u: T = uniform01(rng);
                self.breakpoints[k] + u * (self.breakpoints[k + 1] - self.breakpoints[k])
            })
            .collect()
    }
}

/// Finite joint law on pairs `(x', x'')`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDistribution<T> {
    pairs: Vec<((T, T), T)>,
    exchangeable: bool,
}

impl<T: Scalar> PairDistribution<T> {
    /// Validates a user-supplied pair law; duplicate pairs are merged.
    pub fn new(pairs: Vec<((T, T), T)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty);
        }
        for (i, &((u, v), p)) in pairs.iter().enumerate() {
            if !u.is_finite() || !v.is_finite() || !p.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            if p < T::zero() {
                return Err(Error::NegativeProbability {
                    index: i,
                    value: p.as_f64(),
                });
            }
        }
        let total = compensated_sum(pairs.iter().map(|p| p.1));
        if (total - T::one()).abs() > T::tol(IDENTITY_TOL) {
            return Err(Error::ProbabilitySum { sum: total.as_f64() });
        }
        Ok(Self::from_masses(pairs))
    }

    /// Merges duplicates and drops zero masses; no renormalization.
    pub(crate) fn from_masses<I: IntoIterator<Item = ((T, T), T)>>(items: I) -> Self {
        let mut map: std::collections::HashMap<_, ((T, T), Vec<T>)> = std::collections::HashMap::new();
        for ((u, v), p) in items {
            if p > T::zero() {
                map.entry((bits(u), bits(v)))
                    .or_insert_with(|| ((u + T::zero(), v + T::zero()), Vec::new()))
                    .1
                    .push(p);
            }
        }
        let mut pairs: Vec<((T, T), T)> = map.into_values().map(|(k, ps)| (k, compensated_sum(ps))).collect();
        pairs.sort_by(|a, b| {
            a.0 .0
                .partial_cmp(&b.0 .0)
                .unwrap()
                .then(a.0 .1.partial_cmp(&b.0 .1).unwrap())
        });
        let mut out = Self {
            pairs,
            exchangeable: false,
        };
        out.exchangeable = out.asymmetry() <= T::tol(IDENTITY_TOL);
        out
    }

    pub fn pairs(&self) -> &[((T, T), T)] {
        &self.pairs
    }

    pub fn is_exchangeable(&self) -> bool {
        self.exchangeable
    }

    pub fn total(&self) -> T {
        compensated_sum(self.pairs.iter().map(|p| p.1))
    }

    pub fn mass_of(&self, u: T, v: T) -> T {
        let key = (bits(u), bits(v));
        self.pairs
            .iter()
            .find(|((a, b), _)| (bits(*a), bits(*b)) == key)
            .map_or(T::zero(), |p| p.1)
    }

    /// `max |m(u,v) - m(v,u)|` over the support.
    pub fn asymmetry(&self) -> T {
        self.pairs
            .iter()
            .map(|&((u, v), p)| (p - self.mass_of(v, u)).abs())
            .fold(T::zero(), T::max)
    }

    pub fn diagonal_mass(&self) -> T {
        compensated_sum(self.pairs.iter().filter(|((u, v), _)| u == v).map(|p| p.1))
    }

    pub fn marginal_first(&self) -> DiscreteDistribution<T> {
        DiscreteDistribution::from_weighted(self.pairs.iter().map(|&((u, _), p)| (u, p)))
    }

    pub fn marginal_second(&self) -> DiscreteDistribution<T> {
        DiscreteDistribution::from_weighted(self.pairs.iter().map(|&((_, v), p)| (v, p)))
    }

    /// `E g(x', x'')`.
    pub fn expect<F: Fn(T, T) -> T>(&self, g: F) -> T {
        compensated_sum(self.pairs.iter().map(|&((u, v), p)| p * g(u, v)))
    }

    /// Law of `U x' + (1 - U) x''` for an independent uniform `U`, as a
    /// mixture of uniforms over `[min, max]` of each pair.
    pub fn interpolated_density(&self) -> Result<PiecewiseUniformDensity<T>> {
        if self.diagonal_mass() > T::zero() {
            return Err(Error::InvalidArgument("pair law has mass on the diagonal".into()));
        }
        let total = self.total();
        Ok(PiecewiseUniformDensity::from_uniform_mixture(
            self.pairs.iter().map(|&((u, v), p)| (u.min(v), u.max(v), p / total)),
        ))
    }

    pub fn sampler(&self) -> CdfTable<T> {
        CdfTable::new(&self.pairs.iter().map(|p| p.1).collect::<Vec<_>>())
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (T, T) {
        self.pairs[self.sampler().draw(rng)].0
    }
}

/// `U x' + (1 - U) x''`.
#[inline]
pub fn interpolate<T: Scalar>(pair: (T, T), u: T) -> T {
    u * pair.0 + (T::one() - u) * pair.1
}

/// Exact zero-biased density of a mean-zero finite law.
///
/// On `(a_i, a_{i+1})` the density is `σ⁻² Σ_{j>i} p_j a_j`. When
/// `a_{i+1} > 0` every term of that tail is positive; otherwise the equal
/// quantity `-Σ_{j≤i} p_j a_j` has only positive terms. Picking the side
/// without cancellation keeps every density nonnegative and makes symmetric
/// inputs produce bit-symmetric outputs.
pub fn zero_bias_density<T: Scalar>(d: &DiscreteDistribution<T>) -> Result<PiecewiseUniformDensity<T>> {
    let var = d.require_zero_mean()?;
    let a = d.atoms();
    let p = d.probs();
    let m = a.len();
    let mut densities = vec![T::zero(); m - 1];

    let mut acc = Vec::new();
    for i in (0..m - 1).rev() {
        if a[i + 1] <= T::zero() {
            break;
        }
        acc.push(p[i + 1] * a[i + 1]);
        densities[i] = compensated_sum(acc.iter().copied()) / var;
    }
    acc.clear();
    for i in 0..m - 1 {
        if a[i + 1] > T::zero() {
            break;
        }
        acc.push(-p[i] * a[i]);
        densities[i] = compensated_sum(acc.iter().copied()) / var;
    }
    PiecewiseUniformDensity::new(a.to_vec(), densities)
}

/// `E (W*)^n = E W^{n+2} / ((n + 1) σ²)`.
pub fn zero_bias_moment<T: Scalar>(d: &DiscreteDistribution<T>, n: u32) -> Result<T> {
    if n == 0 {
        return Err(Error::InvalidArgument("moment order must be at least 1".into()));
    }
    let var = d.require_zero_mean()?;
    Ok(d.moment(n + 2) / (T::from_u32(n + 1).unwrap() * var))
}

/// Square-bias pair: mass `(u - v)² p(u) p(v) / (2σ²)` on ordered pairs.
pub fn square_bias_pair<T: Scalar>(d: &DiscreteDistribution<T>) -> Result<PairDistribution<T>> {
    let var = d.require_zero_mean()?;
    let two_var = T::c(2.0) * var;
    let items: Vec<_> = d
        .iter()
        .flat_map(|(u, pu)| {
            d.iter()
                .filter(move |&(v, _)| v != u)
                .map(move |(v, pv)| ((u, v), (u - v) * (u - v) * pu * pv / two_var))
        })
        .collect();
    Ok(PairDistribution::from_masses(items))
}

/// One draw of `U x' + (1 - U) x''` with `(x', x'')` from the pair law.
pub fn sample_zero_bias<T: Scalar, R: Rng + ?Sized>(pair: &PairDistribution<T>, rng: &mut R) -> T {
    let xy = pair.sample_pair(rng);
    let u: T = uniform01(rng);
    interpolate(xy, u)
}

/// As [`sample_zero_bias`] with the uniform supplied by the caller.
pub fn sample_zero_bias_with_u<T: Scalar, R: Rng + ?Sized>(pair: &PairDistribution<T>, rng: &mut R, u: T) -> T {
    interpolate(pair.sample_pair(rng), u)
}

/// Reweights an exchangeable pair law `(W, W')` by `(w - w')² / E(W - W')²`.
///
/// Interpolating the result with an independent uniform gives the W-zero-bias
/// law provided `E(W' | W) = (1 - λ) W`; that regression is checked here.
pub fn exchangeable_pair_zero_bias<T: Scalar>(joint: &PairDistribution<T>) -> Result<PairDistribution<T>> {
    let tol = T::tol(IDENTITY_TOL);
    let asym = joint.asymmetry();
    if asym > tol {
        return Err(Error::NotExchangeable {
            residual: asym.as_f64(),
        });
    }
    let marginal = joint.marginal_first();
    let scale = marginal.max_abs_atom().max(T::one());
    let var = marginal.require_zero_mean()?;
    let denom = joint.expect(|u, v| (u - v) * (u - v));
    if denom <= T::zero() {
        return Err(Error::DegeneratePair);
    }

    // E(W'|W = w) = (1 - λ) w with λ = E(W - W')² / (2σ²)
    let slope = T::one() - denom / (T::c(2.0) * var);
    let mut worst = T::zero();
    for (w, pw) in marginal.iter() {
        let cond = compensated_sum(
            joint
                .pairs()
                .iter()
                .filter(|((u, _), _)| bits(*u) == bits(w))
                .map(|&((_, v), p)| p * v),
        ) / pw;
        worst = worst.max((cond - slope * w).abs());
    }
    if worst > tol * scale {
        return Err(Error::NonlinearRegression {
            residual: worst.as_f64(),
        });
    }

    Ok(PairDistribution::from_masses(
        joint
            .pairs()
            .iter()
            .map(|&((u, v), p)| ((u, v), (u - v) * (u - v) * p / denom)),
    ))
}

/// `E W f(W)` and `σ² E f'(W*)`, each by its own exact route: atom summation
/// on the left, antiderivative differences over the zero-bias density on the
/// right.
pub fn characterization_sides<T: Scalar>(d: &DiscreteDistribution<T>, f: &Polynomial<T>) -> Result<(T, T)> {
    let density = zero_bias_density(d)?;
    let var = d.moment(2);
    let lhs = d.expect(|w| w * f.eval(w));
    let rhs = var * density.integrate_derivative(f);
    Ok((lhs, rhs))
}

/// `E W f(W) - σ² E f'(W*)`.
pub fn characterization_residual<T: Scalar>(d: &DiscreteDistribution<T>, f: &Polynomial<T>) -> Result<T> {
    let (l, r) = characterization_sides(d, f)?;
    Ok(l - r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d(atoms: &[f64], probs: &[f64]) -> DiscreteDistribution<f64> {
        DiscreteDistribution::new(atoms.to_vec(), probs.to_vec()).unwrap()
    }

    fn signs() -> DiscreteDistribution<f64> {
        d(&[-1.0, 1.0], &[0.5, 0.5])
    }

    #[test]
    fn signs_map_to_uniform() {
        let z = zero_bias_density(&signs()).unwrap();
        assert_eq!(z.breakpoints(), &[-1.0, 1.0]);
        assert_eq!(z.densities(), &[0.5]);
    }

    #[test]
    fn three_point_law_maps_to_uniform() {
        let z = zero_bias_density(&d(&[-1.0, 0.0, 1.0], &[0.25, 0.5, 0.25])).unwrap();
        assert_eq!(z.breakpoints(), &[-1.0, 0.0, 1.0]);
        assert_eq!(z.densities(), &[0.5, 0.5]);
    }

    #[test]
    fn skewed_two_point_law() {
        let x = d(&[-2.0, 0.5], &[0.2, 0.8]);
        let z = zero_bias_density(&x).unwrap();
        assert!((z.densities()[0] - 0.4).abs() < 1e-15);
        assert!((z.mass() - 1.0).abs() < 1e-15);
        assert!((0.4f64 * 2.5 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transform_rejects_bad_inputs() {
        assert!(matches!(
            zero_bias_density(&d(&[0.0, 2.0], &[0.5, 0.5])),
            Err(Error::NonzeroMean { .. })
        ));
        assert!(matches!(
            zero_bias_density(&d(&[0.0], &[1.0])),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn zero_bias_moments() {
        assert_eq!(zero_bias_moment(&signs(), 1).unwrap(), 0.0);
        assert!((zero_bias_moment(&signs(), 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // oracle: ∫ w² · 1/2 dw over [-1, 1]
        let z = zero_bias_density(&signs()).unwrap();
        assert!((z.moment(2) - 1.0 / 3.0).abs() < 1e-15);
        assert!(zero_bias_moment(&signs(), 0).is_err());
    }

    #[test]
    fn square_bias_pair_of_signs() {
        let p = square_bias_pair(&signs()).unwrap();
        assert_eq!(p.pairs().len(), 2);
        assert_eq!(p.mass_of(-1.0, 1.0), 0.5);
        assert_eq!(p.mass_of(1.0, -1.0), 0.5);
        assert!(p.is_exchangeable());
        assert_eq!(p.diagonal_mass(), 0.0);
    }

    #[test]
    fn square_bias_pair_normalization() {
        let x = d(&[-3.0, -1.0, 0.5, 2.0], &[0.1, 0.3, 0.4, 0.2]).center();
        let p = square_bias_pair(&x).unwrap();
        assert!((p.total() - 1.0).abs() < 1e-12);
        assert!(p.pairs().iter().all(|((u, v), _)| u != v));
        let z = p.interpolated_density().unwrap();
        let direct = zero_bias_density(&x).unwrap();
        assert!(z.max_abs_difference(&direct, 0.0) < 1e-12);
    }

    #[test]
    fn forced_midpoint() {
        let p = PairDistribution::new(vec![((-1.0, 1.0), 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_zero_bias_with_u(&p, &mut rng, 0.5), 0.0);
    }

    #[test]
    fn independent_joint_reweights_to_square_bias() {
        let x = d(&[-2.0, 1.0, 3.0], &[0.4, 0.5, 0.1]).center();
        let product: Vec<_> = x
            .iter()
            .flat_map(|(u, pu)| x.iter().map(move |(v, pv)| ((u, v), pu * pv)))
            .collect();
        let joint = PairDistribution::new(product).unwrap();
        let a = exchangeable_pair_zero_bias(&joint).unwrap();
        let b = square_bias_pair(&x).unwrap();
        assert_eq!(a.pairs().len(), b.pairs().len());
        for (pa, pb) in a.pairs().iter().zip(b.pairs()) {
            assert_eq!(pa.0, pb.0);
            assert!((pa.1 - pb.1).abs() < 1e-15);
        }
    }

    #[test]
    fn exchangeable_pair_with_holding_probability() {
        // W' = W with probability 1 - λ, otherwise an independent copy.
        let x = d(&[-1.0, 0.5, 2.0], &[0.5, 0.2, 0.3]).center();
        let lambda = 0.3;
        let mut items = Vec::new();
        for (u, pu) in x.iter() {
            for (v, pv) in x.iter() {
                let mut m = lambda * pu * pv;
                if u == v {
                    m += (1.0 - lambda) * pu;
                }
                items.push(((u, v), m));
            }
        }
        let joint = PairDistribution::new(items).unwrap();
        assert!(joint.is_exchangeable());
        let z = exchangeable_pair_zero_bias(&joint)
            .unwrap()
            .interpolated_density()
            .unwrap();
        let direct = zero_bias_density(&x).unwrap();
        assert_eq!(z.breakpoints(), direct.breakpoints());
        assert!(z.max_abs_difference(&direct, 0.0) < 1e-12);
    }

    #[test]
    fn exchangeable_pair_errors() {
        let diag = PairDistribution::new(vec![((-1.0, -1.0), 0.5), ((1.0, 1.0), 0.5)]).unwrap();
        assert_eq!(exchangeable_pair_zero_bias(&diag), Err(Error::DegeneratePair));

        let skew = PairDistribution::new(vec![((-1.0, 1.0), 0.7), ((1.0, -1.0), 0.3)]).unwrap();
        assert!(!skew.is_exchangeable());
        assert!(matches!(
            exchangeable_pair_zero_bias(&skew),
            Err(Error::NotExchangeable { .. })
        ));
    }

    #[test]
    fn characterization_simple_cases() {
        let x = d(&[-2.0, -0.5, 1.0, 1.5], &[0.1, 0.4, 0.3, 0.2]).center();
        let id = Polynomial::new(vec![0.0, 1.0]);
        let (l, r) = characterization_sides(&x, &id).unwrap();
        assert!((l - x.moment(2)).abs() < 1e-12);
        assert!((l - r).abs() < 1e-12);

        let sym = d(&[-2.0, -1.0, 1.0, 2.0], &[0.2, 0.3, 0.3, 0.2]);
        let half_sq = Polynomial::new(vec![0.0, 0.0, 0.5]);
        assert!(characterization_residual(&sym, &half_sq).unwrap().abs() < 1e-12);
    }

    #[test]
    fn cdf_and_density_lookup() {
        let z = zero_bias_density(&signs()).unwrap();
        assert_eq!(z.cdf(-2.0), 0.0);
        assert_eq!(z.cdf(0.0), 0.5);
        assert_eq!(z.cdf(1.0), 1.0);
        assert_eq!(z.density_at(1.0), 0.0);
        assert_eq!(z.density_at(-1.0), 0.5);
        assert!(z.is_unimodal_about_zero(0.0));
    }

    #[test]
    fn wasserstein_of_signs_against_uniform() {
        // F_d - F_p on [-1, 1] is (1/2) - (x+1)/2 = -x/2, so W1 = ∫|x|/2 = 1/2.
        let z = zero_bias_density(&signs()).unwrap();
        assert!((z.wasserstein1_to(&signs()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixture_accumulates_overlaps() {
        let m = PiecewiseUniformDensity::from_uniform_mixture([(0.0, 2.0, 0.5), (1.0, 3.0, 0.5)]);
        assert_eq!(m.breakpoints(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(m.densities(), &[0.25, 0.5, 0.25]);
        assert_eq!(m.mass(), 1.0);
    }
}
