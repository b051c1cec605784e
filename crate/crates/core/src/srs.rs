//! Simple random sampling without replacement from a finite population
//! `𝒜 = {a_1, .., a_N}` normalized to `⟨1⟩ = ⟨3⟩ = 0`, `⟨2⟩ = 1`, where
//! `⟨k⟩ = Σ a^k`.
//!
//! Samples are ordered: a draw of size `n` is uniform over the
//! `N(N-1)⋯(N-n+1)` ordered vectors of distinct population elements.
//!
//! The zero-bias coupling draws `(X̂_1', X̂_1'')` with mass
//! `q(u, v) = (u - v)² / (2N)` independently of the sample and repairs any
//! overlap `R = |{X_2..X_n} ∩ {X̂_1', X̂_1''}|` by resampling from the
//! unused elements. Exact oracles enumerate the law of `W` by multiplicity
//! classes and the coupling by all its finite outcomes.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{CouplingMoments, DependentFamily, JointLaw, MomentAccumulator};
use crate::dist::{uniform01, CdfTable, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::scalar::{bits, canonical_sum, compensated_sum, sort_total, BitKey, Scalar};
use crate::stats::mean_stderr;
use crate::stein::{srs_bound_from_norms, BoundReport, TestFunction};
use crate::zerobias::{interpolate, PairDistribution, IDENTITY_TOL};

/// Largest number of configurations an exact enumeration may visit.
pub const ENUMERATION_CAP: u64 = 1_000_000;

/// Largest number of coupling outcomes the construction enumeration may visit.
pub const COUPLING_ENUMERATION_CAP: u64 = 20_000_000;

/// A validated population with `⟨1⟩ = ⟨3⟩ = 0` and `⟨2⟩ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population<T> {
    values: Vec<T>,
    distinct: bool,
    power_sums: [T; 6],
}

fn power_sums<T: Scalar>(values: &[T]) -> [T; 6] {
    let mut out = [T::zero(); 6];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = compensated_sum(values.iter().map(|&a| a.powi(k as i32 + 1)));
    }
    out
}

impl<T: Scalar> Population<T> {
    /// Checks the moment conditions on values that are already normalized.
    fn validated(mut values: Vec<T>) -> Result<Self> {
        sort_total(&mut values);
        let sums = power_sums(&values);
        let tol = T::tol(IDENTITY_TOL);
        for (k, expected) in [(1u32, T::zero()), (2, T::one()), (3, T::zero())] {
            let v = sums[k as usize - 1];
            if (v - expected).abs() > tol {
                return Err(Error::MomentCondition {
                    k,
                    value: v.as_f64(),
                    expected: expected.as_f64(),
                });
            }
        }
        let distinct = values.windows(2).all(|w| w[0] < w[1]);
        Ok(Self {
            values,
            distinct,
            power_sums: sums,
        })
    }

    /// Values in ascending order.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn is_distinct(&self) -> bool {
        self.distinct
    }

    /// `⟨k⟩` for `k = 1..6`.
    pub fn power_sum(&self, k: usize) -> T {
        self.power_sums[k - 1]
    }

    fn check_n(&self, n: usize, max: usize) -> Result<()> {
        if n == 0 || n > max {
            return Err(Error::SampleSize {
                n,
                population: self.size(),
            });
        }
        Ok(())
    }

    fn require_distinct(&self) -> Result<()> {
        if self.distinct {
            Ok(())
        } else {
            Err(Error::NotDistinct)
        }
    }

    /// Distinct values with their multiplicities.
    fn classes(&self) -> Vec<(T, usize)> {
        let mut out: Vec<(T, usize)> = Vec::new();
        for &v in &self.values {
            match out.last_mut() {
                Some((u, c)) if *u == v => *c += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }
}

/// Rescales by `1/√⟨2⟩` and validates `⟨1⟩ = ⟨3⟩ = 0`.
pub fn load_population<T: Scalar>(values: &[T]) -> Result<Population<T>> {
    if values.len() < 2 {
        return Err(Error::PopulationTooSmall {
            min: 2,
            got: values.len(),
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    let s2 = compensated_sum(values.iter().map(|&a| a * a));
    if !(s2 > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    let c = s2.sqrt();
    Population::validated(values.iter().map(|&a| a / c).collect())
}

/// The `N/2` values `y_j / (2 Σ y²)^{1/2}` and their negatives.
pub fn symmetrize_population<T: Scalar>(y: &[T], n_total: usize) -> Result<Population<T>> {
    if n_total % 2 == 1 {
        return Err(Error::OddPopulation(n_total));
    }
    if y.len() * 2 != n_total || n_total == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} values supplied for N = {n_total}",
            y.len()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    let ss = compensated_sum(y.iter().map(|&v| v * v));
    if !(ss > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    let c = (T::c(2.0) * ss).sqrt();
    let values = y.iter().flat_map(|&v| [v / c, -(v / c)]).collect();
    Population::validated(values)
}

/// `N/2` copies each of `±1/√N`.
pub fn sign_population<T: Scalar>(n_total: usize) -> Result<Population<T>> {
    symmetrize_population(&vec![T::one(); n_total / 2], n_total)
}

fn sizes<T: Scalar>(pop: &Population<T>, n: usize) -> (T, T) {
    (T::from_usize_(pop.size()), T::from_usize_(n))
}

/// `σ² = n(N - n) / (N(N - 1))`.
pub fn srs_variance<T: Scalar>(pop: &Population<T>, n: usize) -> Result<T> {
    pop.check_n(n, pop.size() - 1)?;
    let (big, nn) = sizes(pop, n);
    Ok(nn * (big - nn) / (big * (big - T::one())))
}

/// Constants of the sampling-without-replacement bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SrsConstants<T> {
    pub population: usize,
    pub n: usize,
    pub sigma2: T,
    pub v1_sq: T,
    pub rho: T,
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub eta: T,
    pub c1: T,
    pub c2: T,
    /// Sampling fraction `n/N`.
    pub f: T,
    /// `B1`, `B2` evaluated at `f`, `n⟨4⟩` and `n²⟨6⟩`.
    pub b1: T,
    pub b2: T,
}

pub fn srs_constants<T: Scalar>(pop: &Population<T>, n: usize) -> Result<SrsConstants<T>> {
    let sigma2 = srs_variance(pop, n)?;
    let (big, nn) = sizes(pop, n);
    let one = T::one();
    let two = T::c(2.0);
    let rest = big - nn;
    let v1_sq = two / (big - one);
    let rho = -nn / rest;
    let alpha = (nn - one) / (big * rest) - one;
    let beta = -two * (nn - one) / (big * (rest + one)) + (nn - T::c(3.0)) / (big * rest) - one / big;
    let gamma = -two / (big * rest * (rest + one));
    let eta = (T::c(3.0) - big) / (big * rest);
    let p4 = pop.power_sum(4);
    let p6 = pop.power_sum(6);
    let inner = sigma2 / (T::c(4.0) * nn * nn)
        + p6 * alpha * alpha
        + beta * beta
        + gamma * gamma * (nn - one) * (nn - one)
        + eta * eta;
    let c1 = T::c(8.0).sqrt() * inner.sqrt();
    let c2 = T::c(11.0) * p4 + T::c(45.0) / big;
    let f = nn / big;
    let (b1, b2) = asymptotic_constants(f, nn * p4, nn * nn * p6)?;
    Ok(SrsConstants {
        population: pop.size(),
        n,
        sigma2,
        v1_sq,
        rho,
        alpha,
        beta,
        gamma,
        eta,
        c1,
        c2,
        f,
        b1,
        b2,
    })
}

/// `(B1, B2)` for sampling fraction `f`, `n4 = n⟨4⟩` and `n6 = n²⟨6⟩`.
pub fn asymptotic_constants<T: Scalar>(f: T, n4: T, n6: T) -> Result<(T, T)> {
    if !(f > T::zero() && f < T::one()) {
        return Err(Error::Fraction(f.as_f64()));
    }
    if !(n4 >= T::zero()) || !(n6 >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "n4 = {n4}, n6 = {n6} must be nonnegative"
        )));
    }
    let g = f * (T::one() - f);
    let r = f / (T::one() - f);
    let b1 = T::c(8.0).sqrt() / T::c(3.0) * (g / T::c(4.0) + n6 + T::c(2.0) * r * r).sqrt() / g.sqrt();
    let b2 = (T::c(11.0) * n4 + T::c(45.0) * f) / (T::c(8.0) * g);
    Ok((b1, b2))
}

/// `C1 ‖h'''‖ / (3σ) + C2 ‖h''''‖ / (8σ²)`.
pub fn theorem41_bound<T: Scalar>(pop: &Population<T>, n: usize, h: &TestFunction<T>) -> Result<BoundReport<T>> {
    let k = srs_constants(pop, n)?;
    let mut r = srs_bound_from_norms(k.sigma2.sqrt(), k.c1, k.c2, h.norm(3), h.norm(4))?;
    r.n = Some(n);
    Ok(r)
}

/// An ordered sample: population indices and their values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrsSample<T> {
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

/// Partial Fisher–Yates draw of `k` distinct entries of `pool`, in draw order.
fn partial_shuffle<R: Rng + ?Sized>(pool: &mut [usize], k: usize, rng: &mut R) {
    for i in 0..k {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
}

pub fn sample_srs<T: Scalar, R: Rng + ?Sized>(pop: &Population<T>, n: usize, rng: &mut R) -> Result<SrsSample<T>> {
    pop.check_n(n, pop.size())?;
    let mut pool: Vec<usize> = (0..pop.size()).collect();
    partial_shuffle(&mut pool, n, rng);
    pool.truncate(n);
    let values = pool.iter().map(|&i| pop.values[i]).collect();
    Ok(SrsSample { indices: pool, values })
}

/// Ordered pairs of distinct indices with mass `q(u, v) = (u - v)² / (2N)`.
#[derive(Debug, Clone)]
pub struct QTable<T> {
    size: usize,
    table: CdfTable<T>,
}

impl<T: Scalar> QTable<T> {
    pub fn new(pop: &Population<T>) -> Result<Self> {
        pop.require_distinct()?;
        let size = pop.size();
        let two_n = T::c(2.0) * T::from_usize_(size);
        let weights: Vec<T> = (0..size * size)
            .map(|k| {
                let d = pop.values[k / size] - pop.values[k % size];
                d * d / two_n
            })
            .collect();
        let table = CdfTable::new(&weights);
        let mass = table.total();
        if (mass - T::one()).abs() > T::tol(IDENTITY_TOL) {
            return Err(Error::QMass { mass: mass.as_f64() });
        }
        Ok(Self { size, table })
    }

    /// Index pair `(u, v)`, `u ≠ v`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let k = self.table.draw(rng);
        (k / self.size, k % self.size)
    }
}

/// One pair of values drawn from `q`.
pub fn draw_q_pair<T: Scalar, R: Rng + ?Sized>(pop: &Population<T>, rng: &mut R) -> Result<(T, T)> {
    let (i, j) = QTable::new(pop)?.draw(rng);
    Ok((pop.values[i], pop.values[j]))
}

/// One realization of the coupling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrsCouplingSample<T> {
    /// `X_1..X_n`.
    pub sample: Vec<T>,
    /// `(X̂_1', X̂_1'')`.
    pub pair: (T, T),
    /// `X̂_2..X̂_n`.
    pub filled: Vec<T>,
    pub r: u8,
    pub u: T,
    pub w: T,
    pub w_star: T,
}

/// Prepared sampler for [`couple_srs`].
#[derive(Debug, Clone)]
pub struct SrsCoupler<T> {
    pop: Population<T>,
    n: usize,
    q: QTable<T>,
}

impl<T: Scalar> SrsCoupler<T> {
    pub fn new(pop: &Population<T>, n: usize) -> Result<Self> {
        pop.require_distinct()?;
        if pop.size() < 3 {
            return Err(Error::SampleSize {
                n,
                population: pop.size(),
            });
        }
        pop.check_n(n, pop.size() - 2)?;
        Ok(Self {
            pop: pop.clone(),
            n,
            q: QTable::new(pop)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SrsCouplingSample<T> {
        let size = self.pop.size();
        let vals = &self.pop.values;
        let x = sample_srs(&self.pop, self.n, rng).expect("validated n");
        let (p1, p2) = self.q.draw(rng);
        let mut hat: Vec<usize> = x.indices[1..].to_vec();
        let vacated: Vec<usize> = (0..hat.len()).filter(|&j| hat[j] == p1 || hat[j] == p2).collect();
        let r = vacated.len();
        if r > 0 {
            let mut used = vec![false; size];
            used[p1] = true;
            used[p2] = true;
            for &i in &x.indices[1..] {
                used[i] = true;
            }
            let mut pool: Vec<usize> = (0..size).filter(|&i| !used[i]).collect();
            partial_shuffle(&mut pool, r, rng);
            for (slot, &j) in vacated.iter().enumerate() {
                hat[j] = pool[slot];
            }
        }
        let u: T = uniform01(rng);
        let filled: Vec<T> = hat.iter().map(|&i| vals[i]).collect();
        let (a, b) = endpoints(&filled, vals[p1], vals[p2]);
        SrsCouplingSample {
            w: canonical_sum(&mut x.values.clone()),
            sample: x.values,
            pair: (vals[p1], vals[p2]),
            filled,
            r: r as u8,
            u,
            w_star: interpolate((a, b), u),
        }
    }
}

/// `(Σ rest + x', Σ rest + x'')` by canonical summation.
fn endpoints<T: Scalar>(rest: &[T], x1: T, x2: T) -> (T, T) {
    let mut a = rest.to_vec();
    a.push(x1);
    let mut b = rest.to_vec();
    b.push(x2);
    (canonical_sum(&mut a), canonical_sum(&mut b))
}

/// One draw of `(W, W*)` from the sampling-without-replacement coupling.
pub fn couple_srs<T: Scalar, R: Rng + ?Sized>(
    pop: &Population<T>,
    n: usize,
    rng: &mut R,
) -> Result<SrsCouplingSample<T>> {
    Ok(SrsCoupler::new(pop, n)?.sample(rng))
}

/// `C(n, k)` in floating point.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Calls `f` on every `k`-subset of `items`, in lexicographic order.
fn for_each_subset<F: FnMut(&[usize])>(items: &[usize], k: usize, f: &mut F) {
    fn rec<F: FnMut(&[usize])>(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, f: &mut F) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, f);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut Vec::with_capacity(k), f);
}

/// Number of count vectors `(k_1, .., k_m)` with `Σ k_i = n`, `k_i ≤ c_i`.
fn class_configurations(counts: &[usize], n: usize) -> f64 {
    let mut ways = vec![0.0f64; n + 1];
    ways[0] = 1.0;
    for &c in counts {
        let mut next = vec![0.0; n + 1];
        for (t, &w) in ways.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for k in 0..=c.min(n - t) {
                next[t + k] += w;
            }
        }
        ways = next;
    }
    ways[n]
}

/// Exact law of `W = X_1 + .. + X_n`, enumerated over multiplicity classes:
/// the configuration taking `k_i` copies of the `i`-th distinct value has
/// probability `Π C(c_i, k_i) / C(N, n)`.
pub fn enumerate_srs<T: Scalar>(pop: &Population<T>, n: usize) -> Result<DiscreteDistribution<T>> {
    pop.check_n(n, pop.size())?;
    let classes = pop.classes();
    let counts: Vec<usize> = classes.iter().map(|c| c.1).collect();
    let needed = class_configurations(&counts, n);
    if needed > ENUMERATION_CAP as f64 {
        return Err(Error::EnumerationCap {
            needed,
            cap: ENUMERATION_CAP,
        });
    }
    let total = binomial(pop.size(), n);
    let first = counts[0].min(n);
    let chunks: Vec<Vec<(T, T)>> = (0..=first)
        .into_par_iter()
        .map(|k0| {
            let mut out = Vec::new();
            let mut ks = vec![0usize; classes.len()];
            ks[0] = k0;
            let tail_cap: usize = counts[1..].iter().sum();
            if n - k0 <= tail_cap {
                classes_rec(&classes, 1, n - k0, &mut ks, &mut |ks| {
                    let mut multiset = Vec::with_capacity(n);
                    let mut weight = 1.0;
                    for (i, &k) in ks.iter().enumerate() {
                        multiset.extend(std::iter::repeat_n(classes[i].0, k));
                        weight *= binomial(classes[i].1, k);
                    }
                    out.push((canonical_sum(&mut multiset), T::c(weight / total)));
                });
            }
            out
        })
        .collect();
    Ok(DiscreteDistribution::from_weighted(chunks.into_iter().flatten()))
}

fn classes_rec<T, F: FnMut(&[usize])>(classes: &[(T, usize)], i: usize, left: usize, ks: &mut Vec<usize>, f: &mut F) {
    if i == classes.len() {
        if left == 0 {
            f(ks);
        }
        return;
    }
    let remaining: usize = classes[i + 1..].iter().map(|c| c.1).sum();
    let lo = left.saturating_sub(remaining);
    for k in lo..=classes[i].1.min(left) {
        ks[i] = k;
        classes_rec(classes, i + 1, left - k, ks, f);
    }
    ks[i] = 0;
}

/// A construction outcome: `(X̂_1', X̂_1'')` as population indices and the
/// sorted index set `{X̂_2, .., X̂_n}`.
pub type HatKey = (usize, usize, Vec<usize>);

/// Visits every outcome of the coupling construction with its probability:
/// `f(w, x̂1', x̂1'', rest, mass)` where `w` is the sum of the sample and
/// `rest` the sorted index set `{X̂_2..X̂_n}`.
///
/// The sample is enumerated as `X_1` together with the unordered set
/// `{X_2..X_n}`: the construction never looks at their order.
fn visit_coupling<T: Scalar, F: FnMut(T, usize, usize, &[usize], T)>(
    pop: &Population<T>,
    n: usize,
    mut f: F,
) -> Result<()> {
    SrsCoupler::new(pop, n)?;
    let size = pop.size();
    let vals = &pop.values;
    let per_sample = size as f64 * binomial(size - 1, n - 1);
    let needed = per_sample * (size * (size - 1)) as f64;
    if needed > COUPLING_ENUMERATION_CAP as f64 {
        return Err(Error::EnumerationCap {
            needed,
            cap: COUPLING_ENUMERATION_CAP,
        });
    }
    let p_sample = T::one() / T::c(per_sample);
    let two_n = T::c(2.0) * T::from_usize_(size);
    for x1 in 0..size {
        let others: Vec<usize> = (0..size).filter(|&i| i != x1).collect();
        for_each_subset(&others, n - 1, &mut |s: &[usize]| {
            let mut sample: Vec<T> = s.iter().map(|&i| vals[i]).collect();
            sample.push(vals[x1]);
            let w = canonical_sum(&mut sample);
            for p1 in 0..size {
                for p2 in 0..size {
                    if p1 == p2 {
                        continue;
                    }
                    let d = vals[p1] - vals[p2];
                    let mass = p_sample * d * d / two_n;
                    let kept: Vec<usize> = s.iter().copied().filter(|&i| i != p1 && i != p2).collect();
                    let r = s.len() - kept.len();
                    if r == 0 {
                        f(w, p1, p2, s, mass);
                        continue;
                    }
                    let pool: Vec<usize> = (0..size).filter(|&i| i != p1 && i != p2 && !s.contains(&i)).collect();
                    let fills = T::c(binomial(pool.len(), r));
                    for_each_subset(&pool, r, &mut |add: &[usize]| {
                        let mut rest = kept.clone();
                        rest.extend_from_slice(add);
                        rest.sort_unstable();
                        f(w, p1, p2, &rest, mass / fills);
                    });
                }
            }
        });
    }
    Ok(())
}

/// Exact law of `(X̂_1', X̂_1'', {X̂_2..X̂_n})` produced by the construction.
pub fn coupling_outcome_law<T: Scalar>(pop: &Population<T>, n: usize) -> Result<Vec<(HatKey, T)>> {
    let mut acc: HashMap<HatKey, Vec<T>> = HashMap::new();
    visit_coupling(pop, n, |_, p1, p2, rest, m| {
        acc.entry((p1, p2, rest.to_vec())).or_default().push(m)
    })?;
    let mut out: Vec<(HatKey, T)> = acc.into_iter().map(|(k, ms)| (k, compensated_sum(ms))).collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// The target law of `(X̂_1', X̂_1'', {X̂_2..X̂_n})`: the ordered vector has
/// mass `(x̂' - x̂'')² / (2N) / (N-2)_{n-1}`, so each unordered rest set
/// carries `(x̂' - x̂'')² / (2N) / C(N-2, n-1)`.
pub fn target_outcome_law<T: Scalar>(pop: &Population<T>, n: usize) -> Result<Vec<(HatKey, T)>> {
    SrsCoupler::new(pop, n)?;
    let size = pop.size();
    let vals = &pop.values;
    let sets = T::c(binomial(size - 2, n - 1));
    let two_n = T::c(2.0) * T::from_usize_(size);
    let mut out = Vec::new();
    for p1 in 0..size {
        for p2 in 0..size {
            if p1 == p2 {
                continue;
            }
            let d = vals[p1] - vals[p2];
            let pool: Vec<usize> = (0..size).filter(|&i| i != p1 && i != p2).collect();
            for_each_subset(&pool, n - 1, &mut |s: &[usize]| {
                out.push(((p1, p2, s.to_vec()), d * d / two_n / sets));
            });
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Largest per-outcome difference between two outcome laws.
pub fn outcome_law_difference<T: Scalar>(a: &[(HatKey, T)], b: &[(HatKey, T)]) -> T {
    let ma: HashMap<&HatKey, T> = a.iter().map(|(k, p)| (k, *p)).collect();
    let mb: HashMap<&HatKey, T> = b.iter().map(|(k, p)| (k, *p)).collect();
    ma.iter()
        .map(|(k, &p)| (p - mb.get(k).copied().unwrap_or_else(T::zero)).abs())
        .chain(mb.iter().filter(|(k, _)| !ma.contains_key(*k)).map(|(_, &p)| p))
        .fold(T::zero(), T::max)
}

/// Exact law of the interpolation endpoints of `W*` under the construction.
pub fn srs_coupling_pair_law<T: Scalar>(pop: &Population<T>, n: usize) -> Result<PairDistribution<T>> {
    let vals = pop.values.clone();
    let mut items = Vec::new();
    visit_coupling(pop, n, |_, p1, p2, rest, m| {
        let rv: Vec<T> = rest.iter().map(|&i| vals[i]).collect();
        items.push((endpoints(&rv, vals[p1], vals[p2]), m));
    })?;
    Ok(PairDistribution::from_masses(items))
}

/// Exact `E{E(W* - W | W)²}` and `E(W* - W)²` under the construction.
pub fn srs_coupling_moments<T: Scalar>(pop: &Population<T>, n: usize) -> Result<CouplingMoments<T>> {
    let vals = pop.values.clone();
    let mut acc = MomentAccumulator::new();
    visit_coupling(pop, n, |w, p1, p2, rest, m| {
        let rv: Vec<T> = rest.iter().map(|&i| vals[i]).collect();
        let (a, b) = endpoints(&rv, vals[p1], vals[p2]);
        acc.add(w, a, b, m);
    })?;
    Ok(acc.finish())
}

/// The variance terms of the bound compared with their caps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport<T> {
    pub exact: bool,
    /// `Var(E{W* - W | W})`.
    pub cond_var: T,
    /// `E(W* - W)²`.
    pub sq_diff: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sq_diff_stderr: Option<T>,
    pub c1_sq: T,
    pub c2: T,
    pub cond_var_ok: bool,
    pub sq_diff_ok: bool,
}

impl<T: Scalar> VarianceReport<T> {
    fn new(exact: bool, cond_var: T, sq_diff: T, sq_diff_stderr: Option<T>, c1_sq: T, c2: T) -> Self {
        let slack = T::c(3.0) * sq_diff_stderr.unwrap_or_else(T::zero);
        Self {
            exact,
            cond_var,
            sq_diff,
            sq_diff_stderr,
            c1_sq,
            c2,
            cond_var_ok: cond_var <= c1_sq,
            sq_diff_ok: sq_diff - slack <= c2,
        }
    }

    /// Re-checks the terms against substituted caps.
    pub fn against(&self, c1_sq: T, c2: T) -> Self {
        Self::new(self.exact, self.cond_var, self.sq_diff, self.sq_diff_stderr, c1_sq, c2)
    }

    pub fn holds(&self) -> bool {
        self.cond_var_ok && self.sq_diff_ok
    }
}

/// Exact variance terms when the construction is enumerable, otherwise a
/// Monte Carlo estimate from `reps` seeded draws.
pub fn verify_variance_terms<T: Scalar, R: Rng + ?Sized>(
    pop: &Population<T>,
    n: usize,
    reps: usize,
    rng: &mut R,
) -> Result<VarianceReport<T>> {
    let k = srs_constants(pop, n)?;
    let c1_sq = k.c1 * k.c1;
    match srs_coupling_moments(pop, n) {
        Ok(m) => {
            let var = m.cond_var - m.mean_diff * m.mean_diff;
            Ok(VarianceReport::new(true, var, m.sq_diff, None, c1_sq, k.c2))
        }
        Err(Error::EnumerationCap { .. }) => {
            let coupler = SrsCoupler::new(pop, n)?;
            let mut groups: HashMap<BitKey, Vec<T>> = HashMap::new();
            let mut sq = Vec::with_capacity(reps);
            for _ in 0..reps {
                let s = coupler.sample(rng);
                let (a, b) = endpoints(&s.filled, s.pair.0, s.pair.1);
                let (d, e) = (a - b, b - s.w);
                sq.push(e * e + e * d + d * d / T::c(3.0));
                groups.entry(bits(s.w)).or_default().push(e + d / T::c(2.0));
            }
            let (sq_mean, sq_se) = mean_stderr(&sq);
            let total = T::from_usize_(reps);
            let cond = grouped_second_moment(groups, total);
            Ok(VarianceReport::new(false, cond, sq_mean, Some(sq_se), c1_sq, k.c2))
        }
        Err(e) => Err(e),
    }
}

/// `Σ_s p̂_s (m̂_s² - v̂_s / n_s)`: the squared group means, each corrected
/// for its sampling variance.
fn grouped_second_moment<T: Scalar>(groups: HashMap<BitKey, Vec<T>>, total: T) -> T {
    let mut keyed: Vec<_> = groups.into_iter().collect();
    keyed.sort_by_key(|(k, _)| *k);
    compensated_sum(keyed.into_iter().map(|(_, vs)| {
        let cnt = T::from_usize_(vs.len());
        let (m, se) = mean_stderr(&vs);
        cnt / total * (m * m - se * se)
    }))
}

/// The exchangeable family of ordered samples of size `n + 1`: every
/// per-index law is uniform over ordered `(n + 1)`-vectors of distinct
/// elements, and the base law is uniform over ordered `n`-vectors.
pub fn srs_family<T: Scalar>(pop: &Population<T>, n: usize) -> Result<DependentFamily<T>> {
    pop.check_n(n, pop.size() - 1)?;
    let size = pop.size();
    let needed: f64 = (0..=n).map(|i| (size - i) as f64).product();
    if needed > ENUMERATION_CAP as f64 {
        return Err(Error::EnumerationCap {
            needed,
            cap: ENUMERATION_CAP,
        });
    }
    let ordered = |k: usize| {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(k);
        let mut used = vec![false; size];
        ordered_rec(&pop.values, k, &mut cur, &mut used, &mut out);
        out
    };
    let base = JointLaw::uniform(ordered(n))?;
    let law = JointLaw::uniform(ordered(n + 1))?;
    DependentFamily::new(base, vec![law; n])
}

fn ordered_rec<T: Scalar>(vals: &[T], k: usize, cur: &mut Vec<T>, used: &mut [bool], out: &mut Vec<Vec<T>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in 0..vals.len() {
        if !used[i] {
            used[i] = true;
            cur.push(vals[i]);
            ordered_rec(vals, k, cur, used, out);
            cur.pop();
            used[i] = false;
        }
    }
}
