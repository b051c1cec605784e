//! Joint constructions of `(W, W*)` for sums `W = X_1 + ... + X_n`.
//!
//! Two constructions are provided:
//!
//! - independent summands: pick `I` with probability `σ_I² / σ²` and replace
//!   `X_I` by an independent draw from its zero-biased law;
//! - dependent summands described by a [`DependentFamily`]: for each index a
//!   finite joint law of `(X_1, .., X_i', X_i'', .., X_n)`; the index is
//!   drawn proportional to `v_i² = E(X_i' - X_i'')²`, the vector is drawn
//!   from the `(x_i' - x_i'')²`-reweighted law, and `X_i'`, `X_i''` are
//!   interpolated by an independent uniform.
//!
//! Every sum of summand values is formed by [`canonical_sum`], so the
//! endpoints of an exact coupling law coincide bit for bit with the atoms of
//! the exact law of `W`.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::dist::{uniform01, CdfTable, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::scalar::{bits, canonical_sum, compensated_sum, BitKey, Scalar};
use crate::zerobias::{interpolate, square_bias_pair, PairDistribution, IDENTITY_TOL};

/// Independent mean-zero summands.
#[derive(Debug, Clone)]
pub struct SumModel<T> {
    summands: Vec<DiscreteDistribution<T>>,
    variances: Vec<T>,
    total_variance: T,
}

impl<T: Scalar> SumModel<T> {
    pub fn new(summands: Vec<DiscreteDistribution<T>>) -> Result<Self> {
        if summands.is_empty() {
            return Err(Error::Empty);
        }
        let mut variances = Vec::with_capacity(summands.len());
        for d in &summands {
            let scale = d.max_abs_atom().max(T::one());
            let mean = d.mean();
            if mean.abs() > T::tol(IDENTITY_TOL) * scale {
                return Err(Error::NonzeroMean { mean: mean.as_f64() });
            }
            variances.push(d.moment(2));
        }
        let total_variance = compensated_sum(variances.iter().copied());
        if total_variance <= T::zero() {
            return Err(Error::ZeroVariance);
        }
        Ok(Self {
            summands,
            variances,
            total_variance,
        })
    }

    pub fn iid(d: DiscreteDistribution<T>, n: usize) -> Result<Self> {
        Self::new(vec![d; n])
    }

    pub fn summands(&self) -> &[DiscreteDistribution<T>] {
        &self.summands
    }

    pub fn variances(&self) -> &[T] {
        &self.variances
    }

    pub fn total_variance(&self) -> T {
        self.total_variance
    }

    pub fn len(&self) -> usize {
        self.summands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summands.is_empty()
    }

    /// Exact law of `W` by convolution.
    pub fn law_of_sum(&self) -> DiscreteDistribution<T> {
        convolve_all(self.summands.iter())
    }

    /// Exact law of `W_i = W - X_i`.
    pub fn law_without(&self, i: usize) -> DiscreteDistribution<T> {
        convolve_all(
            self.summands
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, d)| d),
        )
    }
}

fn convolve_all<'a, T: Scalar, I: Iterator<Item = &'a DiscreteDistribution<T>>>(mut it: I) -> DiscreteDistribution<T> {
    match it.next() {
        None => DiscreteDistribution::point_mass(T::zero()),
        Some(first) => it.fold(first.clone(), |acc, d| acc.convolve(d)),
    }
}

/// One realization of `(W, W*)` with its construction metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingSample<T> {
    pub w: T,
    pub w_star: T,
    /// The replaced index `I` (0-based).
    pub index: usize,
    pub u: T,
    /// The summands `X_1..X_n` whose sum is `w`.
    pub summands: Vec<T>,
    /// The interpolated pair `(x', x'')`.
    pub replaced: (T, T),
    /// Overlap count `R` for the sampling-without-replacement construction.
    pub case: Option<u8>,
}

/// `P(I = i) = σ_i² / σ²`.
pub fn replacement_weights<T: Scalar>(model: &SumModel<T>) -> Vec<T> {
    let total = compensated_sum(model.variances.iter().copied());
    model.variances.iter().map(|&v| v / total).collect()
}

/// Prepared sampler for the independent replacement coupling.
#[derive(Debug, Clone)]
pub struct IndependentCoupler<T> {
    model: SumModel<T>,
    index_table: CdfTable<T>,
    summand_tables: Vec<CdfTable<T>>,
    pairs: Vec<Option<(PairDistribution<T>, CdfTable<T>)>>,
}

impl<T: Scalar> IndependentCoupler<T> {
    pub fn new(model: &SumModel<T>) -> Result<Self> {
        let weights = replacement_weights(model);
        let pairs = model
            .summands
            .iter()
            .zip(&model.variances)
            .map(|(d, &v)| {
                if v > T::zero() {
                    square_bias_pair(d).map(|p| {
                        let t = p.sampler();
                        Some((p, t))
                    })
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model: model.clone(),
            index_table: CdfTable::new(&weights),
            summand_tables: model.summands.iter().map(|d| d.sampler()).collect(),
            pairs,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CouplingSample<T> {
        let xs: Vec<T> = self
            .model
            .summands
            .iter()
            .zip(&self.summand_tables)
            .map(|(d, t)| d.atoms()[t.draw(rng)])
            .collect();
        let index = self.index_table.draw(rng);
        let (pair, table) = self.pairs[index].as_ref().expect("positive-variance index");
        let replaced = pair.pairs()[table.draw(rng)].0;
        let u: T = uniform01(rng);
        let x_star = interpolate(replaced, u);
        let mut star = xs.clone();
        star[index] = x_star;
        let w = canonical_sum(&mut xs.clone());
        let w_star = canonical_sum(&mut star);
        CouplingSample {
            w,
            w_star,
            index,
            u,
            summands: xs,
            replaced,
            case: None,
        }
    }
}

/// One draw of `(W, W_I + X_I*)` for independent summands.
pub fn independent_sum_coupling<T: Scalar, R: Rng + ?Sized>(
    model: &SumModel<T>,
    rng: &mut R,
) -> Result<CouplingSample<T>> {
    Ok(IndependentCoupler::new(model)?.sample(rng))
}

/// Exact law of the interpolation endpoints `(W_I + x', W_I + x'')` of the
/// independent coupling; its interpolated density is the law of `W*`.
pub fn independent_coupling_law<T: Scalar>(model: &SumModel<T>) -> Result<PairDistribution<T>> {
    let weights = replacement_weights(model);
    let mut items = Vec::new();
    for (i, &wi) in weights.iter().enumerate() {
        if wi <= T::zero() {
            continue;
        }
        let rest = model.law_without(i);
        let pair = square_bias_pair(&model.summands[i])?;
        for (s, ps) in rest.iter() {
            for &((a, b), q) in pair.pairs() {
                items.push(((s + a, s + b), wi * ps * q));
            }
        }
    }
    Ok(PairDistribution::from_masses(items))
}

/// Exact coupling statistics entering the zero-bias bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingMoments<T> {
    /// `E{E(W* - W | W)²}`.
    pub cond_var: T,
    /// `E(W* - W)²`.
    pub sq_diff: T,
    /// `E(W* - W)`.
    pub mean_diff: T,
}

/// Accumulates outcomes `(w, a, b)` of a coupling in which
/// `W* = U a + (1 - U) b` with `U` uniform and independent of the rest.
/// Given an outcome, with `d = a - b` and `e = b - w`:
/// `E[W* - W] = e + d/2` and `E[(W* - W)²] = e² + e d + d²/3`.
#[derive(Debug, Default)]
pub(crate) struct MomentAccumulator<T> {
    groups: HashMap<BitKey, (Vec<T>, Vec<T>)>,
    sq: Vec<T>,
    diff: Vec<T>,
}

impl<T: Scalar> MomentAccumulator<T> {
    pub(crate) fn new() -> Self {
        Self {
            groups: HashMap::new(),
            sq: Vec::new(),
            diff: Vec::new(),
        }
    }

    pub(crate) fn add(&mut self, w: T, a: T, b: T, mass: T) {
        let d = a - b;
        let e = b - w;
        let m1 = e + d / T::c(2.0);
        let g = self.groups.entry(bits(w)).or_default();
        g.0.push(mass);
        g.1.push(mass * m1);
        self.sq.push(mass * (e * e + e * d + d * d / T::c(3.0)));
        self.diff.push(mass * m1);
    }

    pub(crate) fn finish(self) -> CouplingMoments<T> {
        let mut keyed: Vec<_> = self.groups.into_iter().collect();
        keyed.sort_by_key(|(k, _)| *k);
        let cond_var = compensated_sum(keyed.into_iter().map(|(_, (ps, ms))| {
            let p = compensated_sum(ps);
            let m = compensated_sum(ms);
            m * m / p
        }));
        CouplingMoments {
            cond_var,
            sq_diff: compensated_sum(self.sq),
            mean_diff: compensated_sum(self.diff),
        }
    }
}

/// Exact [`CouplingMoments`] of the independent replacement coupling, by
/// enumerating the product law of the summands (at most `cap` outcomes).
pub fn independent_coupling_moments<T: Scalar>(model: &SumModel<T>, cap: u64) -> Result<CouplingMoments<T>> {
    let needed: f64 = model.summands.iter().map(|d| d.len() as f64).product();
    if needed > cap as f64 {
        return Err(Error::EnumerationCap { needed, cap });
    }
    let weights = replacement_weights(model);
    let pairs = model
        .summands
        .iter()
        .zip(&weights)
        .map(|(d, &w)| {
            if w > T::zero() {
                square_bias_pair(d).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let base = DependentFamily::independent(model).base;
    let mut acc = MomentAccumulator::new();
    for (x, p) in base.outcomes() {
        let w = canonical_sum(&mut x.clone());
        for (i, pair) in pairs.iter().enumerate() {
            let Some(pair) = pair else { continue };
            let others: Vec<T> = x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &v)| v).collect();
            for &((a, b), q) in pair.pairs() {
                acc.add(w, sum_with(&others, a), sum_with(&others, b), *p * weights[i] * q);
            }
        }
    }
    Ok(acc.finish())
}

/// Finite joint law on real vectors of a fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointLaw<T> {
    dim: usize,
    outcomes: Vec<(Vec<T>, T)>,
}

type Key = Vec<BitKey>;

fn key_of<T: Scalar>(x: &[T]) -> Key {
    x.iter().map(|&v| bits(v)).collect()
}

impl<T: Scalar> JointLaw<T> {
    pub fn new(outcomes: Vec<(Vec<T>, T)>) -> Result<Self> {
        let dim = outcomes.first().ok_or(Error::Empty)?.0.len();
        for (i, (x, p)) in outcomes.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::InvalidFamily(format!(
                    "outcome {i} has dimension {}, expected {dim}",
                    x.len()
                )));
            }
            if !p.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
            if *p < T::zero() {
                return Err(Error::NegativeProbability {
                    index: i,
                    value: p.as_f64(),
                });
            }
        }
        let total = compensated_sum(outcomes.iter().map(|o| o.1));
        if (total - T::one()).abs() > T::tol(IDENTITY_TOL) {
            return Err(Error::ProbabilitySum { sum: total.as_f64() });
        }
        Ok(Self::from_masses(dim, outcomes))
    }

    /// Uniform law on the given outcome vectors.
    pub fn uniform(outcomes: Vec<Vec<T>>) -> Result<Self> {
        let p = T::one() / T::from_usize_(outcomes.len().max(1));
        Self::new(outcomes.into_iter().map(|x| (x, p)).collect())
    }

    /// Merges duplicate outcomes, drops zero masses, keeps insertion order.
    pub(crate) fn from_masses(dim: usize, items: Vec<(Vec<T>, T)>) -> Self {
        let mut index: HashMap<Key, usize> = HashMap::new();
        let mut parts: Vec<(Vec<T>, Vec<T>)> = Vec::new();
        for (x, p) in items {
            if p <= T::zero() {
                continue;
            }
            match index.get(&key_of(&x)) {
                Some(&k) => parts[k].1.push(p),
                None => {
                    index.insert(key_of(&x), parts.len());
                    parts.push((x, vec![p]));
                }
            }
        }
        Self {
            dim,
            outcomes: parts.into_iter().map(|(x, ps)| (x, compensated_sum(ps))).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outcomes(&self) -> &[(Vec<T>, T)] {
        &self.outcomes
    }

    pub fn total(&self) -> T {
        compensated_sum(self.outcomes.iter().map(|o| o.1))
    }

    pub fn expect<F: Fn(&[T]) -> T>(&self, g: F) -> T {
        compensated_sum(self.outcomes.iter().map(|(x, p)| *p * g(x)))
    }

    pub fn mass_of(&self, x: &[T]) -> T {
        let k = key_of(x);
        self.outcomes
            .iter()
            .find(|(y, _)| key_of(y) == k)
            .map_or(T::zero(), |o| o.1)
    }

    /// Image law under a vector map.
    pub fn map<F: Fn(&[T]) -> Vec<T>>(&self, g: F) -> Self {
        let items: Vec<_> = self.outcomes.iter().map(|(x, p)| (g(x), *p)).collect();
        let dim = items.first().map_or(0, |i| i.0.len());
        Self::from_masses(dim, items)
    }

    /// Image law under a scalar map.
    pub fn law_of<F: Fn(&[T]) -> T>(&self, g: F) -> DiscreteDistribution<T> {
        DiscreteDistribution::from_weighted(self.outcomes.iter().map(|(x, p)| (g(x), *p)))
    }

    /// Largest per-outcome mass difference between two laws.
    pub fn max_abs_difference(&self, other: &Self) -> T {
        let mine: HashMap<Key, T> = self.outcomes.iter().map(|(x, p)| (key_of(x), *p)).collect();
        let theirs: HashMap<Key, T> = other.outcomes.iter().map(|(x, p)| (key_of(x), *p)).collect();
        mine.iter()
            .map(|(k, &p)| (p - theirs.get(k).copied().unwrap_or_else(T::zero)).abs())
            .chain(theirs.iter().filter(|(k, _)| !mine.contains_key(*k)).map(|(_, &p)| p))
            .fold(T::zero(), T::max)
    }

    /// Moves `delta` of mass from outcome `from` to outcome `to`.
    pub fn perturbed(&self, from: usize, to: usize, delta: T) -> Self {
        let mut out = self.clone();
        out.outcomes[from].1 -= delta;
        out.outcomes[to].1 += delta;
        out
    }

    pub fn sampler(&self) -> CdfTable<T> {
        CdfTable::new(&self.outcomes.iter().map(|o| o.1).collect::<Vec<_>>())
    }
}

/// For each index `i`, a joint law on
/// `(x_1, .., x_{i-1}, x_i', x_i'', x_{i+1}, .., x_n)`: coordinate `i` holds
/// `x_i'` and coordinate `i + 1` holds `x_i''` (0-based), together with the
/// law of `(X_1, .., X_n)` itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DependentFamily<T> {
    n: usize,
    base: JointLaw<T>,
    laws: Vec<JointLaw<T>>,
}

/// Splits an outcome of law `i` into `(x_i', x_i'', others)`.
fn split<T: Scalar>(i: usize, x: &[T]) -> (T, T, Vec<T>) {
    let others = x[..i].iter().chain(&x[i + 2..]).copied().collect();
    (x[i], x[i + 1], others)
}

fn sum_with<T: Scalar>(others: &[T], extra: T) -> T {
    let mut v = others.to_vec();
    v.push(extra);
    canonical_sum(&mut v)
}

impl<T: Scalar> DependentFamily<T> {
    pub fn new(base: JointLaw<T>, laws: Vec<JointLaw<T>>) -> Result<Self> {
        let n = base.dim();
        if n == 0 {
            return Err(Error::InvalidFamily("empty base law".into()));
        }
        if laws.len() != n {
            return Err(Error::InvalidFamily(format!(
                "{} per-index laws for {n} summands",
                laws.len()
            )));
        }
        if let Some(i) = laws.iter().position(|l| l.dim() != n + 1) {
            return Err(Error::InvalidFamily(format!("law {i} must have dimension {}", n + 1)));
        }
        Ok(Self { n, base, laws })
    }

    /// Family whose base law is read off law 0 by dropping `x_1''`.
    pub fn from_laws(laws: Vec<JointLaw<T>>) -> Result<Self> {
        let first = laws.first().ok_or(Error::Empty)?;
        let base = first.map(|x| {
            let mut v = x.to_vec();
            v.remove(1);
            v
        });
        Self::new(base, laws)
    }

    /// Independent summands, with `X_i'`, `X_i''` independent replicates.
    pub fn independent(model: &SumModel<T>) -> Self {
        let n = model.len();
        let product = |ds: Vec<&DiscreteDistribution<T>>| {
            let mut acc: Vec<(Vec<T>, T)> = vec![(Vec::new(), T::one())];
            for d in ds {
                acc = acc
                    .into_iter()
                    .flat_map(|(x, p)| {
                        d.iter().map(move |(a, q)| {
                            let mut y = x.clone();
                            y.push(a);
                            (y, p * q)
                        })
                    })
                    .collect();
            }
            acc
        };
        let base = JointLaw::from_masses(n, product(model.summands.iter().collect()));
        let laws = (0..n)
            .map(|i| {
                let mut ds: Vec<&DiscreteDistribution<T>> = model.summands.iter().collect();
                ds.insert(i + 1, &model.summands[i]);
                JointLaw::from_masses(n + 1, product(ds))
            })
            .collect();
        Self { n, base, laws }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> &JointLaw<T> {
        &self.base
    }

    pub fn laws(&self) -> &[JointLaw<T>] {
        &self.laws
    }

    /// Replaces law `i`.
    pub fn with_law(&self, i: usize, law: JointLaw<T>) -> Self {
        let mut out = self.clone();
        out.laws[i] = law;
        out
    }

    /// Exact law of `W = Σ X_i`.
    pub fn law_of_w(&self) -> DiscreteDistribution<T> {
        self.base.law_of(|x| canonical_sum(&mut x.to_vec()))
    }

    pub fn sigma2(&self) -> T {
        self.base.expect(|x| {
            let w = canonical_sum(&mut x.to_vec());
            w * w
        })
    }

    /// `v_i² = E(X_i' - X_i'')²` under law `i`.
    pub fn v2(&self, i: usize) -> T {
        self.laws[i].expect(|x| (x[i] - x[i + 1]) * (x[i] - x[i + 1]))
    }

    pub fn v2_all(&self) -> Vec<T> {
        (0..self.n).map(|i| self.v2(i)).collect()
    }
}

/// `ρ = 1 - Σ v_i² / (2σ²)`.
pub fn rho_from_family<T: Scalar>(fam: &DependentFamily<T>) -> Result<T> {
    let s2 = fam.sigma2();
    if s2 <= T::zero() {
        return Err(Error::ZeroVariance);
    }
    Ok(T::one() - compensated_sum(fam.v2_all()) / (T::c(2.0) * s2))
}

/// `ρ` recovered from the linearity identity with `f(x) = x`:
/// `Σ_i E X_i'(W_i + X_i'') / E W²`.
pub fn regressed_rho<T: Scalar>(fam: &DependentFamily<T>) -> Result<T> {
    let s2 = fam.sigma2();
    if s2 <= T::zero() {
        return Err(Error::ZeroVariance);
    }
    let num = compensated_sum((0..fam.n).map(|i| {
        fam.laws[i].expect(|x| {
            let (a, b, others) = split(i, x);
            a * sum_with(&others, b)
        })
    }));
    Ok(num / s2)
}

/// Residuals of the family conditions, computed by exact enumeration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyReport<T> {
    pub rho: T,
    /// `max_i |E X_i|`.
    pub mean: T,
    /// Swap symmetry of `(x_i', x_i'')`.
    pub swap: T,
    /// Dropping `x_i''` recovers the base law.
    pub marginal: T,
    /// `|Σ_i E X_i' f(W_i + X_i'') - ρ E W f(W)|`.
    pub linearity: T,
    /// `max |E{X_i' | W_i + X_i''} - (ρ/n)(W_i + X_i'')|`, when requested.
    pub conditional: Option<T>,
}

impl<T: Scalar> FamilyReport<T> {
    pub fn max_residual(&self) -> T {
        [
            self.mean,
            self.swap,
            self.marginal,
            self.linearity,
            self.conditional.unwrap_or_else(T::zero),
        ]
        .into_iter()
        .fold(T::zero(), T::max)
    }

    pub fn passes(&self, tol: T) -> bool {
        self.max_residual() <= tol
    }
}

/// Checks swap symmetry, marginal consistency, the linearity identity for
/// `f`, and optionally the conditional-expectation form of it.
pub fn verify_family_conditions<T: Scalar>(
    fam: &DependentFamily<T>,
    f: &Polynomial<T>,
    conditional: bool,
) -> Result<FamilyReport<T>> {
    let rho = rho_from_family(fam)?;
    let n = fam.n;

    let mean = (0..n).map(|i| fam.base.expect(|x| x[i]).abs()).fold(T::zero(), T::max);

    let mut swap = T::zero();
    let mut marginal = T::zero();
    for (i, law) in fam.laws.iter().enumerate() {
        let swapped = law.map(|x| {
            let mut y = x.to_vec();
            y.swap(i, i + 1);
            y
        });
        swap = swap.max(law.max_abs_difference(&swapped));
        let dropped = law.map(|x| {
            let mut y = x.to_vec();
            y.remove(i + 1);
            y
        });
        marginal = marginal.max(dropped.max_abs_difference(&fam.base));
    }

    let lhs = compensated_sum((0..n).map(|i| {
        fam.laws[i].expect(|x| {
            let (a, b, others) = split(i, x);
            a * f.eval(sum_with(&others, b))
        })
    }));
    let ewfw = fam.base.expect(|x| {
        let w = canonical_sum(&mut x.to_vec());
        w * f.eval(w)
    });
    let linearity = (lhs - rho * ewfw).abs();

    let conditional = conditional.then(|| {
        let nn = T::from_usize_(n);
        let mut worst = T::zero();
        for i in 0..n {
            let mut groups: HashMap<BitKey, (T, Vec<T>, Vec<T>)> = HashMap::new();
            for (x, p) in fam.laws[i].outcomes() {
                let (a, b, others) = split(i, x);
                let s = sum_with(&others, b);
                let g = groups.entry(bits(s)).or_insert_with(|| (s, Vec::new(), Vec::new()));
                g.1.push(*p * a);
                g.2.push(*p);
            }
            for (s, num, den) in groups.into_values() {
                let cond = compensated_sum(num) / compensated_sum(den);
                worst = worst.max((cond - rho / nn * s).abs());
            }
        }
        worst
    });

    Ok(FamilyReport {
        rho,
        mean,
        swap,
        marginal,
        linearity,
        conditional,
    })
}

/// Prepared sampler for the dependent construction.
#[derive(Debug, Clone)]
pub struct DependentCoupler<T> {
    fam: DependentFamily<T>,
    index_table: CdfTable<T>,
    base_table: CdfTable<T>,
    hatted: Vec<Option<(JointLaw<T>, CdfTable<T>)>>,
}

impl<T: Scalar> DependentCoupler<T> {
    pub fn new(fam: &DependentFamily<T>) -> Result<Self> {
        let v2 = fam.v2_all();
        if v2.iter().all(|&v| v <= T::zero()) {
            return Err(Error::AllVZero);
        }
        let hatted = (0..fam.n)
            .map(|i| {
                (v2[i] > T::zero()).then(|| {
                    let law = reweighted(fam, i, v2[i]);
                    let table = law.sampler();
                    (law, table)
                })
            })
            .collect();
        Ok(Self {
            fam: fam.clone(),
            index_table: CdfTable::new(&v2),
            base_table: fam.base.sampler(),
            hatted,
        })
    }

    /// `W` is drawn from the base law independently of the `W*` construction.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CouplingSample<T> {
        let summands = self.fam.base.outcomes()[self.base_table.draw(rng)].0.clone();
        let w = canonical_sum(&mut summands.clone());
        let index = self.index_table.draw(rng);
        let (law, table) = self.hatted[index].as_ref().expect("positive v_i^2");
        let x = &law.outcomes()[table.draw(rng)].0;
        let (a, b, others) = split(index, x);
        let u: T = uniform01(rng);
        let w_star = interpolate((sum_with(&others, a), sum_with(&others, b)), u);
        CouplingSample {
            w,
            w_star,
            index,
            u,
            summands,
            replaced: (a, b),
            case: None,
        }
    }
}

/// `d\hat F_{n,i} = (x_i' - x_i'')² / v_i² dF_{n,i}`.
fn reweighted<T: Scalar>(fam: &DependentFamily<T>, i: usize, v2: T) -> JointLaw<T> {
    let items = fam.laws[i]
        .outcomes()
        .iter()
        .map(|(x, p)| (x.clone(), (x[i] - x[i + 1]) * (x[i] - x[i + 1]) * *p / v2))
        .collect();
    JointLaw::from_masses(fam.n + 1, items)
}

/// One draw of the dependent construction.
pub fn dependent_coupling<T: Scalar, R: Rng + ?Sized>(
    fam: &DependentFamily<T>,
    rng: &mut R,
) -> Result<CouplingSample<T>> {
    Ok(DependentCoupler::new(fam)?.sample(rng))
}

/// Exact law of the interpolation endpoints `(Ŵ_I + x̂_I', Ŵ_I + x̂_I'')`
/// of the dependent construction, mixed over `I`. The uniform is left
/// symbolic: the law of `W*` is this pair law's interpolated density.
pub fn dependent_coupling_law<T: Scalar>(fam: &DependentFamily<T>) -> Result<PairDistribution<T>> {
    let v2 = fam.v2_all();
    let total = compensated_sum(v2.iter().copied());
    if total <= T::zero() {
        return Err(Error::AllVZero);
    }
    let mut items = Vec::new();
    for i in 0..fam.n {
        for (x, p) in fam.laws[i].outcomes() {
            let (a, b, others) = split(i, x);
            let m = (a - b) * (a - b) * *p / total;
            items.push(((sum_with(&others, a), sum_with(&others, b)), m));
        }
    }
    Ok(PairDistribution::from_masses(items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical_99, ks_statistic, ks_two_sample, ks_two_sample_critical_99, mean_stderr};
    use crate::zerobias::zero_bias_density;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d(atoms: &[f64], probs: &[f64]) -> DiscreteDistribution<f64> {
        DiscreteDistribution::new(atoms.to_vec(), probs.to_vec()).unwrap()
    }

    fn signs() -> DiscreteDistribution<f64> {
        d(&[-1.0, 1.0], &[0.5, 0.5])
    }

    #[test]
    fn weights_are_variance_proportional() {
        let m = SumModel::iid(signs(), 4).unwrap();
        assert_eq!(replacement_weights(&m), vec![0.25; 4]);
        let a = d(&[-1.0, 1.0], &[0.5, 0.5]);
        let b = d(&[-3f64.sqrt(), 3f64.sqrt()], &[0.5, 0.5]);
        let w = replacement_weights(&SumModel::new(vec![a, b]).unwrap());
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sum_model_rejects_bad_summands() {
        assert!(matches!(
            SumModel::new(vec![d(&[0.0, 2.0], &[0.5, 0.5])]),
            Err(Error::NonzeroMean { .. })
        ));
        assert!(matches!(
            SumModel::new(vec![d(&[0.0], &[1.0])]),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn single_summand_coupling_is_zero_bias() {
        let x = d(&[-2.0, 0.5, 1.5], &[0.3, 0.5, 0.2]).center();
        let m = SumModel::new(vec![x.clone()]).unwrap();
        let c = IndependentCoupler::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| c.sample(&mut rng).w_star).collect();
        let z = zero_bias_density(&x).unwrap();
        let ks = ks_statistic(&draws, |t| z.cdf(t));
        assert!(ks < ks_critical_99(n), "KS {ks}");
    }

    #[test]
    fn two_signs_give_uniform_on_four() {
        let m = SumModel::iid(signs(), 2).unwrap();
        let exact = independent_coupling_law(&m).unwrap().interpolated_density().unwrap();
        assert_eq!(exact.breakpoints(), &[-2.0, 0.0, 2.0]);
        assert_eq!(exact.densities(), &[0.25, 0.25]);
        let oracle = zero_bias_density(&m.law_of_sum()).unwrap();
        assert_eq!(exact, oracle);

        let c = IndependentCoupler::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| c.sample(&mut rng).w_star).collect();
        let ks = ks_statistic(&draws, |t| ((t + 2.0) / 4.0).clamp(0.0, 1.0));
        assert!(ks < ks_critical_99(n), "KS {ks}");
    }

    #[test]
    fn symmetric_summands_center_the_difference() {
        let m = SumModel::iid(d(&[-1.0, 0.0, 1.0], &[0.25, 0.5, 0.25]), 5).unwrap();
        let c = IndependentCoupler::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let diffs: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let s = c.sample(&mut rng);
                s.w_star - s.w
            })
            .collect();
        let (mean, se) = mean_stderr(&diffs);
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn coupling_sample_records_are_consistent() {
        let m = SumModel::iid(d(&[-1.0, 0.25, 2.0], &[0.3, 0.6, 0.1]).center(), 4).unwrap();
        let c = IndependentCoupler::new(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let s = c.sample(&mut rng);
            let total: f64 = s.summands.iter().sum();
            assert!((s.w - total).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_marginals_are_exact() {
        let m = SumModel::new(vec![
            d(&[-1.0, 1.0], &[0.5, 0.5]),
            d(&[-2.0, 0.0, 1.0], &[0.2, 0.2, 0.6]).center(),
            d(&[-0.5, 1.5], &[0.75, 0.25]),
        ])
        .unwrap();
        let w = m.law_of_sum();
        assert!((w.moment(2) - m.total_variance()).abs() < 1e-12);
        let exact = independent_coupling_law(&m).unwrap().interpolated_density().unwrap();
        let oracle = zero_bias_density(&w).unwrap();
        assert!(exact.max_abs_difference(&oracle, 1e-9) < 1e-12);
        assert!(exact.max_cdf_difference(&oracle) < 1e-12);
    }

    #[test]
    fn rho_special_cases() {
        let m = SumModel::iid(d(&[-1.0, 0.0, 2.0], &[0.4, 0.4, 0.2]), 3).unwrap();
        let fam = DependentFamily::independent(&m);
        assert!(rho_from_family(&fam).unwrap().abs() < 1e-12);

        // X_i'' = X_i' almost surely
        let n = 2;
        let vals = [-1.0, 1.0];
        let mut base = Vec::new();
        for &a in &vals {
            for &b in &vals {
                base.push(vec![a, b]);
            }
        }
        let laws = (0..n)
            .map(|i| {
                JointLaw::uniform(
                    base.iter()
                        .map(|x| {
                            let mut y = x.clone();
                            y.insert(i + 1, x[i]);
                            y
                        })
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let fam = DependentFamily::new(JointLaw::uniform(base).unwrap(), laws).unwrap();
        assert_eq!(rho_from_family(&fam).unwrap(), 1.0);
        assert_eq!(DependentCoupler::new(&fam).unwrap_err(), Error::AllVZero);
    }

    #[test]
    fn independent_family_satisfies_conditions() {
        let m = SumModel::iid(d(&[-1.0, 0.5, 2.0], &[0.3, 0.5, 0.2]).center(), 3).unwrap();
        let fam = DependentFamily::independent(&m);
        let id = Polynomial::new(vec![0.0, 1.0]);
        let r = verify_family_conditions(&fam, &id, false).unwrap();
        assert!(r.passes(1e-12), "{r:?}");
        let cubic = Polynomial::new(vec![0.3, -1.0, 0.5, 0.25]);
        let r = verify_family_conditions(&fam, &cubic, true).unwrap();
        assert!(r.passes(1e-12), "{r:?}");
        assert!((regressed_rho(&fam).unwrap() - r.rho).abs() < 1e-12);
    }

    #[test]
    fn corrupted_family_is_detected() {
        let m = SumModel::iid(signs(), 2).unwrap();
        let fam = DependentFamily::independent(&m);
        let bad = fam.with_law(0, fam.laws()[0].perturbed(0, 1, 1e-3));
        let r = verify_family_conditions(&bad, &Polynomial::new(vec![0.0, 1.0]), true).unwrap();
        assert!(r.max_residual() > 1e-4, "{r:?}");
        assert!(!r.passes(1e-12));
    }

    #[test]
    fn dependent_matches_independent_construction() {
        let m = SumModel::iid(d(&[-1.0, 0.5, 2.0], &[0.3, 0.5, 0.2]).center(), 2).unwrap();
        let fam = DependentFamily::independent(&m);
        let dep = DependentCoupler::new(&fam).unwrap();
        let ind = IndependentCoupler::new(&m).unwrap();
        let n = 100_000;
        let mut r1 = ChaCha8Rng::seed_from_u64(21);
        let mut r2 = ChaCha8Rng::seed_from_u64(22);
        let a: Vec<f64> = (0..n).map(|_| dep.sample(&mut r1).w_star).collect();
        let b: Vec<f64> = (0..n).map(|_| ind.sample(&mut r2).w_star).collect();
        let ks = ks_two_sample(&a, &b);
        assert!(ks < ks_two_sample_critical_99(n, n), "KS {ks}");

        // exchangeable: indices drawn uniformly
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let hits = (0..20_000).filter(|_| dep.sample(&mut rng).index == 0).count();
        assert!((hits as f64 / 20_000.0 - 0.5).abs() < 3.0 * (0.25f64 / 20_000.0).sqrt());
    }

    #[test]
    fn dependent_exact_law_is_zero_bias_of_w() {
        let m = SumModel::new(vec![
            d(&[-1.0, 1.0], &[0.5, 0.5]),
            d(&[-2.0, 0.0, 1.0], &[0.2, 0.2, 0.6]).center(),
        ])
        .unwrap();
        let fam = DependentFamily::independent(&m);
        let exact = dependent_coupling_law(&fam).unwrap().interpolated_density().unwrap();
        let oracle = zero_bias_density(&fam.law_of_w()).unwrap();
        assert_eq!(exact.breakpoints(), oracle.breakpoints());
        assert!(exact.max_abs_difference(&oracle, 0.0) < 1e-12);
    }

    #[test]
    fn independent_moments_match_closed_forms() {
        // X uniform on {-1, 1}: E(X*|X) = 0, so E(W* - W | W) = -W/n
        let n = 6;
        let m = SumModel::iid(signs(), n).unwrap();
        let cm = independent_coupling_moments(&m, 1 << 20).unwrap();
        assert!((cm.cond_var - 1.0 / n as f64).abs() < 1e-14);
        assert!(cm.mean_diff.abs() < 1e-14);
        // E(X* - X)² = EX⁴/(3σ²) + σ² = 4/3
        assert!((cm.sq_diff - 4.0 / 3.0).abs() < 1e-14);

        let x = d(&[-2.0, 0.5, 1.5], &[0.2, 0.5, 0.3]).center();
        let m = SumModel::iid(x.clone(), 3).unwrap();
        let cm = independent_coupling_moments(&m, 1 << 20).unwrap();
        let s2 = x.moment(2);
        let expected = x.moment(4) / (3.0 * s2) + s2;
        assert!((cm.sq_diff - expected).abs() < 1e-12);
        assert!(cm.cond_var >= 0.0);
        assert!(matches!(
            independent_coupling_moments(&m, 10),
            Err(Error::EnumerationCap { .. })
        ));
    }
}
