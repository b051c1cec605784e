//! Smooth test functions, the Stein equation
//! `x f'(x) - σ² f''(x) = h(x/σ) - Φh`, and the bounds on
//! `|E h(W/σ) - Φh|` assembled from zero-bias coupling statistics.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::quadrature::{gauss_hermite_64, integrate};
use crate::scalar::{compensated_sum, Scalar};
use crate::stats::mean_stderr;

/// Grid used to validate declared derivative norms at registration.
pub const NORM_GRID: (f64, f64, f64) = (-20.0, 20.0, 1e-3);

/// Target absolute error of the Stein-solution quadrature.
pub const SOLUTION_QUAD_TOL: f64 = 1e-13;

/// Finite-difference step, relative to σ, for the residual check.
pub const RESIDUAL_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Sin,
    Cos,
    Trig,
    Logistic,
    PolynomialOnCompact,
    User,
}

type Evaluator<T> = Arc<dyn Fn(T, usize) -> T + Send + Sync>;

/// A test function `h` with derivatives up to order four and declared sup
/// norms `‖h^{(j)}‖`, `j = 1..4`.
#[derive(Clone)]
pub struct TestFunction<T> {
    name: String,
    family: Family,
    eval: Evaluator<T>,
    norms: [T; 4],
    domain: (T, T),
}

impl<T: fmt::Debug> fmt::Debug for TestFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("family", &self.family)
            .field("norms", &self.norms)
            .finish()
    }
}

/// Logistic derivatives in terms of `s = 1/(1 + e^{-x})`.
fn logistic_derivative<T: Scalar>(x: T, order: usize) -> T {
    let one = T::one();
    let s = one / (one + (-x).exp());
    let d1 = s * (one - s);
    let (six, twelve, two) = (T::c(6.0), T::c(12.0), T::c(2.0));
    match order {
        0 => s,
        1 => d1,
        2 => d1 * (one - two * s),
        3 => d1 * (one - six * s + six * s * s),
        _ => d1 * (one - two * s) * (one - twelve * s + twelve * s * s),
    }
}

/// Sup of the fourth logistic derivative, `t(1 - t²)(2 - 3t²)/4` at
/// `t² = (15 - √105)/30` with `t = tanh(x/2)`.
const LOGISTIC_H4: f64 = 0.127_683_921_967_80;

impl<T: Scalar> TestFunction<T> {
    /// Registers `h` after checking the declared norms on [`NORM_GRID`].
    pub fn register<F>(name: &str, family: Family, norms: [T; 4], eval: F) -> Result<Self>
    where
        F: Fn(T, usize) -> T + Send + Sync + 'static,
    {
        let h = Self {
            name: name.to_owned(),
            family,
            eval: Arc::new(eval),
            norms,
            domain: (T::c(NORM_GRID.0), T::c(NORM_GRID.1)),
        };
        h.check_norms()?;
        Ok(h)
    }

    pub fn user<F>(name: &str, norms: [T; 4], eval: F) -> Result<Self>
    where
        F: Fn(T, usize) -> T + Send + Sync + 'static,
    {
        Self::register(name, Family::User, norms, eval)
    }

    pub fn sin() -> Self {
        Self::register("sin", Family::Sin, [T::one(); 4], |x: T, j| match j % 4 {
            0 => x.sin(),
            1 => x.cos(),
            2 => -x.sin(),
            _ => -x.cos(),
        })
        .expect("unit norms")
    }

    pub fn cos() -> Self {
        Self::register("cos", Family::Cos, [T::one(); 4], |x: T, j| match j % 4 {
            0 => x.cos(),
            1 => -x.sin(),
            2 => -x.cos(),
            _ => x.sin(),
        })
        .expect("unit norms")
    }

    /// `h(x) = sin(ωx + φ)`, with `‖h^{(j)}‖ = |ω|^j`.
    pub fn trig(freq: T, phase: T) -> Result<Self> {
        if !freq.is_finite() || !phase.is_finite() || freq == T::zero() {
            return Err(Error::InvalidArgument(format!("trig frequency {freq}, phase {phase}")));
        }
        let w = freq.abs();
        let norms = [w, w * w, w * w * w, w * w * w * w];
        let half_pi = T::c(std::f64::consts::FRAC_PI_2);
        Self::register(&format!("sin({freq}x+{phase})"), Family::Trig, norms, move |x: T, j| {
            freq.powi(j as i32) * (freq * x + phase + T::from_usize_(j) * half_pi).sin()
        })
    }

    pub fn logistic() -> Self {
        let norms = [
            T::c(0.25),
            T::c(1.0 / (6.0 * 3f64.sqrt())),
            T::c(0.125),
            T::c(LOGISTIC_H4),
        ];
        Self::register("logistic", Family::Logistic, norms, logistic_derivative).expect("logistic norms")
    }

    /// Polynomial `p` restricted to `[lo, hi]`. Norms are taken over the
    /// compact only, so bounds built from them hold for laws supported there.
    pub fn polynomial_on_compact(p: Polynomial<T>, lo: T, hi: T) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("empty compact [{lo}, {hi}]")));
        }
        let derivs: Vec<Polynomial<T>> = std::iter::successors(Some(p.clone()), |q| Some(q.derivative()))
            .take(5)
            .collect();
        let mut norms = [T::zero(); 4];
        for (j, norm) in norms.iter_mut().enumerate() {
            *norm = sup_on_compact(&derivs[j + 1], lo, hi);
        }
        let h = Self {
            name: format!("poly{:?}", p.coeffs()),
            family: Family::PolynomialOnCompact,
            eval: Arc::new(move |x: T, j| derivs[j.min(4)].eval(x)),
            norms,
            domain: (lo, hi),
        };
        h.check_norms()?;
        Ok(h)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn norms(&self) -> [T; 4] {
        self.norms
    }

    /// `‖h^{(j)}‖` for `j = 1..4`.
    pub fn norm(&self, j: usize) -> T {
        self.norms[j - 1]
    }

    /// Interval on which the declared norms were validated.
    pub fn domain(&self) -> (T, T) {
        self.domain
    }

    pub fn value(&self, x: T) -> T {
        (self.eval)(x, 0)
    }

    /// `h^{(j)}(x)` for `j ≤ 4`.
    pub fn derivative(&self, x: T, j: usize) -> T {
        assert!(j <= 4, "derivatives up to order 4");
        (self.eval)(x, j)
    }

    fn check_norms(&self) -> Result<()> {
        let (lo, hi) = self.domain;
        let step = T::c(NORM_GRID.2);
        let count = ((hi - lo) / step).ceil().to_usize().unwrap_or(0);
        let slack = T::tol(1e-9);
        for j in 1..=4 {
            let declared = self.norms[j - 1];
            if !(declared >= T::zero()) || !declared.is_finite() {
                return Err(Error::NormCheck {
                    order: j,
                    observed: f64::NAN,
                    declared: declared.as_f64(),
                });
            }
            for k in 0..=count {
                let x = (lo + T::from_usize_(k) * step).min(hi);
                let v = (self.eval)(x, j).abs();
                if !(v <= declared * (T::one() + slack) + slack * T::c(1e-6)) {
                    return Err(Error::NormCheck {
                        order: j,
                        observed: v.as_f64(),
                        declared: declared.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Sup of `|q|` on `[lo, hi]`: endpoints plus real critical points located by
/// bisection between the critical points of `q'`.
fn sup_on_compact<T: Scalar>(q: &Polynomial<T>, lo: T, hi: T) -> T {
    critical_points(&q.derivative(), lo, hi)
        .into_iter()
        .chain([lo, hi])
        .map(|x| q.eval(x).abs())
        .fold(T::zero(), T::max)
}

/// Roots of `p` in `[lo, hi]`, found recursively from the roots of `p'`.
fn critical_points<T: Scalar>(p: &Polynomial<T>, lo: T, hi: T) -> Vec<T> {
    if p.degree() == 0 {
        return Vec::new();
    }
    let mut fences = vec![lo];
    fences.extend(critical_points(&p.derivative(), lo, hi));
    fences.push(hi);
    let mut roots = Vec::new();
    for w in fences.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (p.eval(a), p.eval(b));
        if fa == T::zero() {
            roots.push(a);
            continue;
        }
        if fa * fb > T::zero() {
            continue;
        }
        for _ in 0..200 {
            let m = (a + b) / T::c(2.0);
            if !(a < m && m < b) {
                break;
            }
            if (p.eval(m) > T::zero()) == (fa > T::zero()) {
                a = m;
            } else {
                b = m;
            }
        }
        roots.push((a + b) / T::c(2.0));
    }
    roots
}

/// `Φh = E h(Z)` by 64-node Gauss–Hermite quadrature.
pub fn normal_expectation<T: Scalar>(h: &TestFunction<T>) -> T {
    gauss_hermite_64().normal_expectation(|x| h.value(x))
}

/// The bounded solution of `x g(x) - σ² g'(x) = h(x/σ) - Φh`, where
/// `g = f'`:
///
/// `g(x) = σ^{-2} e^{x²/2σ²} ∫_x^∞ (h(t/σ) - Φh) e^{-t²/2σ²} dt`,
///
/// evaluated for `x < 0` through the equivalent left-tail integral.
#[derive(Debug, Clone)]
pub struct SteinSolution<T> {
    h: TestFunction<T>,
    sigma: T,
    phi_h: T,
}

impl<T: Scalar> SteinSolution<T> {
    pub fn new(h: &TestFunction<T>, sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma = {sigma}")));
        }
        Ok(Self {
            h: h.clone(),
            sigma,
            phi_h: normal_expectation(h),
        })
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn phi_h(&self) -> T {
        self.phi_h
    }

    /// `h(x/σ) - Φh`.
    pub fn centered_h(&self, x: T) -> T {
        self.h.value(x / self.sigma) - self.phi_h
    }

    /// `f'(x)`.
    pub fn f1(&self, x: T) -> Result<T> {
        let s2 = self.sigma * self.sigma;
        let ax = x.abs();
        // the kernel is below e^{-40} past this cut
        let mut cut = self.sigma * T::c(80f64.sqrt());
        if ax > T::zero() {
            cut = cut.min(T::c(40.0) * s2 / ax);
        }
        let two_s2 = T::c(2.0) * s2;
        let sign = if x >= T::zero() { T::one() } else { -T::one() };
        let integrand = |s: T| self.centered_h(x + sign * s) * (-(T::c(2.0) * ax * s + s * s) / two_s2).exp();
        let (v, _) = integrate(integrand, T::zero(), cut, T::tol(SOLUTION_QUAD_TOL) * s2)?;
        Ok(sign * v / s2)
    }

    /// `f''(x) = (x f'(x) - h(x/σ) + Φh) / σ²`.
    pub fn f2(&self, x: T) -> Result<T> {
        Ok((x * self.f1(x)? - self.centered_h(x)) / (self.sigma * self.sigma))
    }

    /// `f'''(x) = (f'(x) + x f''(x) - h'(x/σ)/σ) / σ²`.
    pub fn f3(&self, x: T) -> Result<T> {
        let g = self.f1(x)?;
        let s2 = self.sigma * self.sigma;
        let g1 = (x * g - self.centered_h(x)) / s2;
        Ok((g + x * g1 - self.h.derivative(x / self.sigma, 1) / self.sigma) / s2)
    }

    /// `f''(x)` by a five-point central difference of [`Self::f1`].
    pub fn f2_numeric(&self, x: T) -> Result<T> {
        let d = T::c(RESIDUAL_STEP) * self.sigma;
        let two = T::c(2.0);
        let (a, b) = (self.f1(x - two * d)?, self.f1(x - d)?);
        let (c, e) = (self.f1(x + d)?, self.f1(x + two * d)?);
        Ok((a - T::c(8.0) * b + T::c(8.0) * c - e) / (T::c(12.0) * d))
    }

    /// `x f'(x) - σ² f''(x) - (h(x/σ) - Φh)` with `f''` from finite differences.
    pub fn residual(&self, x: T) -> Result<T> {
        Ok(x * self.f1(x)? - self.sigma * self.sigma * self.f2_numeric(x)? - self.centered_h(x))
    }
}

/// Solution of the Stein equation for `h` and `σ`, evaluated as `f'(x)`.
pub fn stein_solution<T: Scalar>(h: &TestFunction<T>, sigma: T, x: T) -> Result<T> {
    SteinSolution::new(h, sigma)?.f1(x)
}

/// `‖f^{(j)}‖ ≤ ‖h^{(j)}‖ / (j σ^j)`.
pub fn solution_norm_bound<T: Scalar>(sigma: T, j: usize, h_norm: T) -> Result<T> {
    if !(1..=4).contains(&j) {
        return Err(Error::InvalidArgument(format!("derivative order {j} outside 1..=4")));
    }
    if !(sigma > T::zero()) {
        return Err(Error::InvalidArgument(format!("sigma = {sigma}")));
    }
    Ok(h_norm / (T::from_usize_(j) * sigma.powi(j as i32)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    /// `‖h'''‖ √cond_var / (3σ) + ‖h''''‖ sq_diff / (8σ²)`.
    ZeroBias,
    /// `n^{-1} (‖h'''‖/3 + ‖h''''‖ EX⁴/6)` for i.i.d. standardized summands.
    IidFourthMoment,
    /// `‖h'''‖ E|X|³ / (2√n)`.
    CltIid,
    /// `C1 ‖h'''‖ / (3σ) + C2 ‖h''''‖ / (8σ²)` for sampling without replacement.
    Srs,
}

/// A bound with every ingredient named. `bound = first_term + second_term`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport<T> {
    pub method: BoundMethod,
    pub sigma: T,
    pub h3_norm: T,
    pub h4_norm: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// `E{E(W* - W | W)²}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cond_var: Option<T>,
    /// `√E{E(W* - W | W)²}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cond_sd: Option<T>,
    /// `E(W* - W)²`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sq_diff: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ex4: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs3: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c1: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<T>,
    pub first_term: T,
    pub second_term: T,
    pub bound: T,
}

impl<T: Scalar> BoundReport<T> {
    fn base(method: BoundMethod, sigma: T, h3: T, h4: T, first: T, second: T) -> Self {
        Self {
            method,
            sigma,
            h3_norm: h3,
            h4_norm: h4,
            n: None,
            cond_var: None,
            cond_sd: None,
            sq_diff: None,
            ex4: None,
            abs3: None,
            c1: None,
            c2: None,
            first_term: first,
            second_term: second,
            bound: first + second,
        }
    }

    /// Recomputes the bound from the stored components.
    pub fn recompute(&self) -> T {
        let three = T::c(3.0);
        let eight = T::c(8.0);
        let s = self.sigma;
        let (first, second) = match self.method {
            BoundMethod::ZeroBias => (
                self.h3_norm * self.cond_var.unwrap_or_else(T::zero).sqrt() / (three * s),
                self.h4_norm * self.sq_diff.unwrap_or_else(T::zero) / (eight * s * s),
            ),
            BoundMethod::IidFourthMoment => {
                let n = T::from_usize_(self.n.unwrap_or(1));
                (
                    self.h3_norm / (three * n),
                    self.h4_norm * self.ex4.unwrap_or_else(T::zero) / (T::c(6.0) * n),
                )
            }
            BoundMethod::CltIid => {
                let n = T::from_usize_(self.n.unwrap_or(1));
                (
                    self.h3_norm * self.abs3.unwrap_or_else(T::zero) / (T::c(2.0) * n.sqrt()),
                    T::zero(),
                )
            }
            BoundMethod::Srs => (
                self.c1.unwrap_or_else(T::zero) * self.h3_norm / (three * s),
                self.c2.unwrap_or_else(T::zero) * self.h4_norm / (eight * s * s),
            ),
        };
        first + second
    }
}

fn check_nonnegative<T: Scalar>(name: &str, v: T) -> Result<()> {
    if !(v >= T::zero()) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{name} = {v} must be finite and nonnegative"
        )));
    }
    Ok(())
}

fn check_sigma<T: Scalar>(sigma: T) -> Result<()> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma = {sigma}")));
    }
    Ok(())
}

/// Zero-bias bound from explicit norms.
pub fn zero_bias_bound_from_norms<T: Scalar>(
    sigma: T,
    h3: T,
    h4: T,
    cond_var: T,
    sq_diff: T,
) -> Result<BoundReport<T>> {
    check_sigma(sigma)?;
    for (name, v) in [("h3", h3), ("h4", h4), ("cond_var", cond_var), ("sq_diff", sq_diff)] {
        check_nonnegative(name, v)?;
    }
    let cond_sd = cond_var.sqrt();
    let first = h3 * cond_sd / (T::c(3.0) * sigma);
    let second = h4 * sq_diff / (T::c(8.0) * sigma * sigma);
    let mut r = BoundReport::base(BoundMethod::ZeroBias, sigma, h3, h4, first, second);
    r.cond_var = Some(cond_var);
    r.cond_sd = Some(cond_sd);
    r.sq_diff = Some(sq_diff);
    Ok(r)
}

/// `‖h'''‖ √cond_var / (3σ) + ‖h''''‖ sq_diff / (8σ²)`.
pub fn zero_bias_bound<T: Scalar>(sigma: T, h: &TestFunction<T>, cond_var: T, sq_diff: T) -> Result<BoundReport<T>> {
    zero_bias_bound_from_norms(sigma, h.norm(3), h.norm(4), cond_var, sq_diff)
}

/// I.i.d. fourth-moment bound from explicit norms.
pub fn iid_fourth_moment_bound_from_norms<T: Scalar>(n: usize, ex4: T, h3: T, h4: T) -> Result<BoundReport<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    for (name, v) in [("h3", h3), ("h4", h4), ("ex4", ex4)] {
        check_nonnegative(name, v)?;
    }
    let nn = T::from_usize_(n);
    let first = h3 / (T::c(3.0) * nn);
    let second = h4 * ex4 / (T::c(6.0) * nn);
    let mut r = BoundReport::base(BoundMethod::IidFourthMoment, nn.sqrt(), h3, h4, first, second);
    r.n = Some(n);
    r.ex4 = Some(ex4);
    Ok(r)
}

/// `n^{-1} (‖h'''‖/3 + ‖h''''‖ EX⁴/6)` for `n` i.i.d. summands with variance
/// one and vanishing third moment.
pub fn iid_fourth_moment_bound<T: Scalar>(n: usize, ex4: T, h: &TestFunction<T>) -> Result<BoundReport<T>> {
    iid_fourth_moment_bound_from_norms(n, ex4, h.norm(3), h.norm(4))
}

/// [`iid_fourth_moment_bound`] with the summand law checked: mean zero,
/// variance one, third moment zero.
pub fn iid_summand_bound<T: Scalar>(
    n: usize,
    x: &DiscreteDistribution<T>,
    h: &TestFunction<T>,
) -> Result<BoundReport<T>> {
    let var = x.require_zero_mean()?;
    let m = x.moments();
    let scale = x.max_abs_atom().max(T::one());
    let tol = T::tol(1e-12);
    if (var - T::one()).abs() > tol * scale * scale {
        return Err(Error::NotStandardized { value: var.as_f64() });
    }
    if m.third.abs() > tol * scale * scale * scale {
        return Err(Error::NonzeroThirdMoment {
            value: m.third.as_f64(),
        });
    }
    iid_fourth_moment_bound(n, m.fourth, h)
}

/// `‖h'''‖ E|X|³ / (2√n)` from an explicit norm.
pub fn clt_iid_bound_from_norm<T: Scalar>(n: usize, abs3: T, h3: T) -> Result<BoundReport<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    check_nonnegative("h3", h3)?;
    check_nonnegative("abs3", abs3)?;
    let nn = T::from_usize_(n);
    let first = h3 * abs3 / (T::c(2.0) * nn.sqrt());
    let mut r = BoundReport::base(BoundMethod::CltIid, nn.sqrt(), h3, T::zero(), first, T::zero());
    r.n = Some(n);
    r.abs3 = Some(abs3);
    Ok(r)
}

pub fn clt_iid_bound<T: Scalar>(n: usize, abs3: T, h: &TestFunction<T>) -> Result<BoundReport<T>> {
    clt_iid_bound_from_norm(n, abs3, h.norm(3))
}

/// `C1 ‖h'''‖ / (3σ) + C2 ‖h''''‖ / (8σ²)`.
pub fn srs_bound_from_norms<T: Scalar>(sigma: T, c1: T, c2: T, h3: T, h4: T) -> Result<BoundReport<T>> {
    check_sigma(sigma)?;
    for (name, v) in [("h3", h3), ("h4", h4), ("C1", c1), ("C2", c2)] {
        check_nonnegative(name, v)?;
    }
    let first = c1 * h3 / (T::c(3.0) * sigma);
    let second = c2 * h4 / (T::c(8.0) * sigma * sigma);
    let mut r = BoundReport::base(BoundMethod::Srs, sigma, h3, h4, first, second);
    r.c1 = Some(c1);
    r.c2 = Some(c2);
    Ok(r)
}

/// `E h(W/σ) - Φh` with its standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap<T> {
    pub value: T,
    pub stderr: T,
}

/// Exact gap under a finite law.
pub fn expectation_gap<T: Scalar>(w: &DiscreteDistribution<T>, sigma: T, h: &TestFunction<T>) -> Result<Gap<T>> {
    expectation_gap_with(w, sigma, h, normal_expectation(h))
}

/// [`expectation_gap`] with a precomputed `Φh`.
pub fn expectation_gap_with<T: Scalar>(
    w: &DiscreteDistribution<T>,
    sigma: T,
    h: &TestFunction<T>,
    phi_h: T,
) -> Result<Gap<T>> {
    check_sigma(sigma)?;
    let value = w.expect(|x| h.value(x / sigma) - phi_h);
    Ok(Gap {
        value,
        stderr: T::zero(),
    })
}

/// Monte Carlo gap from draws of `W`.
pub fn expectation_gap_mc<T: Scalar>(samples: &[T], sigma: T, h: &TestFunction<T>) -> Result<Gap<T>> {
    check_sigma(sigma)?;
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let phi_h = normal_expectation(h);
    let values: Vec<T> = samples.iter().map(|&x| h.value(x / sigma) - phi_h).collect();
    let (value, stderr) = mean_stderr(&values);
    Ok(Gap { value, stderr })
}

/// `E[W f'(W) - σ² f''(W)]` under a finite law, with `f''` from finite
/// differences of the quadrature solution.
pub fn stein_identity_gap<T: Scalar>(w: &DiscreteDistribution<T>, sol: &SteinSolution<T>) -> Result<T> {
    let s2 = sol.sigma() * sol.sigma();
    let terms = w
        .iter()
        .map(|(x, p)| Ok(p * (x * sol.f1(x)? - s2 * sol.f2_numeric(x)?)))
        .collect::<Result<Vec<T>>>()?;
    Ok(compensated_sum(terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn binomial_signs(n: usize) -> DiscreteDistribution<f64> {
        let x = DiscreteDistribution::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        (1..n).fold(x.clone(), |acc, _| acc.convolve(&x))
    }

    #[test]
    fn normal_expectations() {
        let sq = TestFunction::user("square", [40.0, 2.0, 0.0, 0.0], |x: f64, j| match j {
            0 => x * x,
            1 => 2.0 * x,
            2 => 2.0,
            _ => 0.0,
        })
        .unwrap();
        assert!((normal_expectation(&sq) - 1.0).abs() < 1e-12);
        assert!((normal_expectation(&TestFunction::<f64>::cos()) - (-0.5f64).exp()).abs() < 1e-10);
        assert!(normal_expectation(&TestFunction::<f64>::sin()).abs() < 1e-12);
        let odd = TestFunction::trig(2.5f64, 0.0).unwrap();
        assert!(normal_expectation(&odd).abs() < 1e-12);
        // E sin(ωZ + φ) = sin φ e^{-ω²/2}
        let t = TestFunction::trig(1.5f64, 0.7).unwrap();
        assert!((normal_expectation(&t) - 0.7f64.sin() * (-1.125f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn registration_rejects_understated_norms() {
        let err = TestFunction::user("bad", [0.5, 1.0, 1.0, 1.0], |x: f64, j| match j % 4 {
            0 => x.sin(),
            1 => x.cos(),
            2 => -x.sin(),
            _ => -x.cos(),
        })
        .unwrap_err();
        assert!(matches!(err, Error::NormCheck { order: 1, .. }));
    }

    #[test]
    fn logistic_norms_are_tight() {
        let h = TestFunction::<f64>::logistic();
        for j in 1..=4 {
            let observed = (0..40_001)
                .map(|k| h.derivative(-20.0 + k as f64 * 1e-3, j).abs())
                .fold(0.0, f64::max);
            assert!(
                observed <= h.norm(j) && observed > h.norm(j) * (1.0 - 1e-6),
                "order {j}"
            );
        }
    }

    #[test]
    fn compact_polynomial_norms() {
        let p = Polynomial::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let h = TestFunction::polynomial_on_compact(p, -1.0, 2.0).unwrap();
        // x⁴ on [-1, 2]: derivatives 4x³, 12x², 24x, 24
        assert_eq!(h.norms(), [32.0, 48.0, 48.0, 24.0]);
    }

    #[test]
    fn trivial_solutions() {
        let c = TestFunction::user("const", [0.0; 4], |_x: f64, j| if j == 0 { 3.0 } else { 0.0 }).unwrap();
        let s = SteinSolution::new(&c, 1.0).unwrap();
        for x in [-3.0, 0.0, 2.5] {
            assert!(s.f1(x).unwrap().abs() < 1e-15);
        }
        let id = TestFunction::polynomial_on_compact(Polynomial::new(vec![0.0f64, 1.0]), -20.0, 20.0).unwrap();
        let s = SteinSolution::new(&id, 1.0).unwrap();
        for x in [-5.0, -1.0, 0.0, 0.3, 4.0] {
            assert!((s.f1(x).unwrap() - 1.0).abs() < 1e-12, "x = {x}");
            assert!(s.f2(x).unwrap().abs() < 1e-11);
        }
    }

    #[test]
    fn residuals_are_small_for_random_test_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for round in 0..4 {
            let h = match round {
                0 => TestFunction::<f64>::cos(),
                1 => TestFunction::logistic(),
                _ => TestFunction::trig(rng.gen_range(0.3..2.0), rng.gen_range(0.0..std::f64::consts::TAU)).unwrap(),
            };
            let sigma = rng.gen_range(0.5..3.0);
            let sol = SteinSolution::new(&h, sigma).unwrap();
            for k in 0..100 {
                let x = -10.0 * sigma + 20.0 * sigma * k as f64 / 99.0;
                let r = sol.residual(x).unwrap();
                assert!(r.abs() < 1e-8, "{} sigma {sigma} x {x}: {r}", h.name());
            }
        }
    }

    #[test]
    fn solution_respects_norm_bounds() {
        let h = TestFunction::<f64>::cos();
        let sol = SteinSolution::new(&h, 1.0).unwrap();
        for k in 0..81 {
            let x = -8.0 + 0.2 * k as f64;
            assert!(sol.f2(x).unwrap().abs() <= solution_norm_bound(1.0, 1, 1.0).unwrap() + 1e-12);
            assert!(sol.f3(x).unwrap().abs() <= solution_norm_bound(1.0, 2, 1.0).unwrap() + 1e-12);
        }
    }

    #[test]
    fn norm_bound_examples() {
        assert!((solution_norm_bound(1.0f64, 3, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(solution_norm_bound(2.0, 2, 4.0).unwrap(), 0.5);
        let a = solution_norm_bound(2.0, 1, 1.0).unwrap();
        let b = solution_norm_bound(4.0, 1, 1.0).unwrap();
        assert_eq!(b, a / 2.0);
        assert!(solution_norm_bound(1.0, 5, 1.0).is_err());
    }

    #[test]
    fn assembled_bounds() {
        let h = TestFunction::<f64>::cos();
        assert_eq!(zero_bias_bound(1.0, &h, 0.0, 0.0).unwrap().bound, 0.0);

        let n = 10usize;
        let sigma = (n as f64).sqrt();
        let r = zero_bias_bound(sigma, &h, 1.0 / n as f64, 0.0).unwrap();
        assert!((r.first_term - 1.0 / (3.0 * n as f64)).abs() < 1e-15);

        let r = iid_fourth_moment_bound(10, 1.0f64, &h).unwrap();
        assert!((r.bound - 0.05).abs() < 1e-15);
        assert_eq!(r.recompute(), r.bound);
        let doubled = iid_fourth_moment_bound(10, 2.0, &h).unwrap();
        assert_eq!(doubled.second_term, 2.0 * r.second_term);
        let quartered = iid_fourth_moment_bound(40, 1.0, &h).unwrap();
        assert!((quartered.bound - r.bound / 4.0).abs() < 1e-15);

        let r = clt_iid_bound(100, 1.0f64, &h).unwrap();
        assert!((r.bound - 0.05).abs() < 1e-15);
        assert!((clt_iid_bound(10_000, 1.0f64, &h).unwrap().bound - 0.005).abs() < 1e-15);

        let skew = DiscreteDistribution::new(vec![-1.0, 2.0], vec![2.0 / 3.0, 1.0 / 3.0])
            .unwrap()
            .scale(1.0 / 2f64.sqrt());
        assert!(matches!(
            iid_summand_bound(5, &skew, &h),
            Err(Error::NonzeroThirdMoment { .. })
        ));
        let signs = DiscreteDistribution::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!((iid_summand_bound(10, &signs, &h).unwrap().bound - 0.05).abs() < 1e-15);
        assert!(matches!(
            iid_summand_bound(10, &signs.scale(2.0), &h),
            Err(Error::NotStandardized { .. })
        ));
    }

    #[test]
    fn bounds_are_monotone_and_recomputable() {
        let base = zero_bias_bound_from_norms(2.0, 1.0, 1.0, 0.3, 0.4).unwrap();
        assert_eq!(base.recompute(), base.bound);
        for bumped in [
            zero_bias_bound_from_norms(2.0, 1.5, 1.0, 0.3, 0.4),
            zero_bias_bound_from_norms(2.0, 1.0, 1.5, 0.3, 0.4),
            zero_bias_bound_from_norms(2.0, 1.0, 1.0, 0.5, 0.4),
            zero_bias_bound_from_norms(2.0, 1.0, 1.0, 0.3, 0.6),
        ] {
            assert!(bumped.unwrap().bound >= base.bound);
        }
        let s = srs_bound_from_norms(1.5, 2.0, 14.0, 1.0, 1.0).unwrap();
        assert_eq!(s.recompute(), s.bound);
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["method"], "srs");
        assert!(json.get("first_term").is_some() && json.get("c2").is_some());
        assert!(json.get("ex4").is_none());
    }

    #[test]
    fn gaps() {
        let h = TestFunction::<f64>::cos();
        let w = binomial_signs(10);
        let gap = expectation_gap(&w, 10f64.sqrt(), &h).unwrap();
        assert_eq!(gap.stderr, 0.0);
        // E cos(W/√10) = cos(1/√10)^10
        let exact = (1.0 / 10f64.sqrt()).cos().powi(10) - (-0.5f64).exp();
        assert!((gap.value - exact).abs() < 1e-10);
        assert!(gap.value.abs() <= 0.05);

        let point = DiscreteDistribution::point_mass(0.0);
        let g = expectation_gap(&point, 1.0, &h).unwrap();
        assert!((g.value - (1.0 - (-0.5f64).exp())).abs() < 1e-10);

        // lattice discretization of N(0, 1)
        let atoms: Vec<f64> = (0..401).map(|k| -6.0 + 0.03 * k as f64).collect();
        let probs: Vec<f64> = atoms.iter().map(|x| (-x * x / 2.0).exp()).collect();
        let total: f64 = probs.iter().sum();
        let lattice = DiscreteDistribution::new(atoms, probs.iter().map(|p| p / total).collect()).unwrap();
        assert!(expectation_gap(&lattice, 1.0, &h).unwrap().value.abs() < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = w.sample(&mut rng, 50_000);
        let mc = expectation_gap_mc(&draws, 10f64.sqrt(), &h).unwrap();
        assert!(mc.stderr > 0.0);
        assert!((mc.value - gap.value).abs() < 4.0 * mc.stderr);
    }

    #[test]
    fn stein_identity_transfers_the_gap() {
        let w = binomial_signs(6).center();
        let sigma = 6f64.sqrt();
        for h in [TestFunction::<f64>::cos(), TestFunction::logistic()] {
            let sol = SteinSolution::new(&h, sigma).unwrap();
            let direct = expectation_gap(&w, sigma, &h).unwrap().value;
            let via = stein_identity_gap(&w, &sol).unwrap();
            assert!((direct - via).abs() < 1e-6, "{}: {direct} vs {via}", h.name());
        }
    }

    #[test]
    fn f32_solution() {
        let h = TestFunction::<f32>::cos();
        let sol = SteinSolution::new(&h, 1.0f32).unwrap();
        let r = sol.residual(0.7).unwrap();
        assert!(r.abs() < 1e-2);
        assert!((normal_expectation(&h) - (-0.5f32).exp()).abs() < 1e-6);
    }
}
