//! The `zbias` command line: `transform`, `verify`, `srs-experiment` and
//! `bound`.
//!
//! Exit codes: 0 success, 1 a residual or bound check failed, 2 invalid
//! input. Every stochastic command takes a mandatory `--seed`; Monte Carlo
//! work is split into fixed blocks, each with its own ChaCha stream
//! `(seed, block)`, and merged in block order, so the output does not depend
//! on the worker count (`ZB_THREADS`).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{
    dependent_coupling_law, independent_coupling_law, verify_family_conditions, DependentFamily, SumModel,
};
use crate::dist::DiscreteDistribution;
use crate::error::Error;
use crate::io::{density_json, read_distribution, read_family, read_population, write_atomic};
use crate::poly::Polynomial;
use crate::srs::{
    coupling_outcome_law, enumerate_srs, load_population, outcome_law_difference, srs_constants, srs_coupling_pair_law,
    srs_family, symmetrize_population, target_outcome_law, theorem41_bound, verify_variance_terms, Population,
    SrsCoupler,
};
use crate::stats::{ks_statistic, loglog_slope, mean_stderr};
use crate::stein::{
    clt_iid_bound_from_norm, iid_fourth_moment_bound_from_norms, normal_expectation, srs_bound_from_norms,
    zero_bias_bound_from_norms, Gap, TestFunction,
};
use crate::zerobias::{characterization_residual, zero_bias_density, zero_bias_moment};

/// Default thresholds, overridable per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Args)]
pub struct Tolerances {
    /// Exact-identity residual threshold.
    #[arg(long = "tol-identity", default_value_t = 1e-12)]
    pub identity: f64,
    /// Quadrature absolute error threshold.
    #[arg(long = "tol-quadrature", default_value_t = 1e-10)]
    pub quadrature: f64,
    /// Confidence level of statistical checks.
    #[arg(long = "tol-stat", default_value_t = 0.99)]
    pub stat_level: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-12,
            quadrature: 1e-10,
            stat_level: 0.99,
        }
    }
}

impl Tolerances {
    /// Asymptotic Kolmogorov critical coefficient `√(-ln((1 - level)/2) / 2)`.
    pub fn ks_coefficient(&self) -> f64 {
        (-0.5 * ((1.0 - self.stat_level) / 2.0).ln()).sqrt()
    }

    /// Two-sided normal quantile of the level, by bisection on `erfc`.
    pub fn z(&self) -> f64 {
        let target = 1.0 - self.stat_level;
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if erfc(mid / std::f64::consts::SQRT_2) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn validate(&self) -> Result<(), Failure> {
        let ok = self.identity >= 0.0 && self.quadrature >= 0.0 && self.stat_level > 0.0 && self.stat_level < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Failure::Invalid(format!("invalid tolerances {self:?}")))
        }
    }
}

/// Complementary error function, Numerical Recipes `erfcc` (relative error
/// below 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "zbias",
    version,
    about = "Zero-bias transformation and normal approximation bounds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Zero-bias density of a distribution file.
    Transform(TransformArgs),
    /// Residual suites: characterization, family conditions, coupling marginals.
    Verify(VerifyArgs),
    /// Gap and bound for sampling without replacement over a grid of sample sizes.
    SrsExperiment(SrsArgs),
    /// Assemble a bound from its ingredients.
    Bound(BoundArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransformArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Subtract the mean before transforming.
    #[arg(long)]
    pub center: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// Distribution (.json with atoms), family (.json with laws) or population (text) files.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draws for sampling checks.
    #[arg(long, default_value_t = 20_000)]
    pub reps: usize,
    /// Random distributions in the built-in characterization suite.
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tol: Tolerances,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SrsArgs {
    /// Population file; when absent, a symmetrized population of size n/f is built per row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Distribution of the symmetrized values `Y`; all ones when absent.
    #[arg(long)]
    pub y_input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub n_grid: Vec<usize>,
    #[arg(long, default_value = "cos")]
    pub h: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo draws when exact enumeration exceeds its cap.
    #[arg(long, default_value_t = 200_000)]
    pub reps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tol: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ZeroBias,
    Iid,
    Clt,
    Srs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Registered test function supplying the norms.
    #[arg(long)]
    pub h: Option<String>,
    #[arg(long)]
    pub h3: Option<f64>,
    #[arg(long)]
    pub h4: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub cond_var: Option<f64>,
    #[arg(long)]
    pub sq_diff: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub ex4: Option<f64>,
    #[arg(long)]
    pub abs3: Option<f64>,
    /// Population file for the sampling-without-replacement bound.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Why a command did not succeed.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// Exit 2: the input violates a precondition.
    Invalid(String),
    /// Exit 1: a check ran and failed.
    Violation(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Violation(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Invalid(format!("{}: {e}", path.display()))
}

/// Parses `cos`, `sin`, `logistic` or `trig:<freq>:<phase>`.
pub fn parse_test_function(name: &str) -> Result<TestFunction<f64>, Failure> {
    match name {
        "cos" => Ok(TestFunction::cos()),
        "sin" => Ok(TestFunction::sin()),
        "logistic" => Ok(TestFunction::logistic()),
        _ => {
            let parts: Vec<&str> = name.split(':').collect();
            if parts.len() == 3 && parts[0] == "trig" {
                let f: f64 = parts[1]
                    .parse()
                    .map_err(|_| Failure::Invalid(format!("bad frequency in {name}")))?;
                let p: f64 = parts[2]
                    .parse()
                    .map_err(|_| Failure::Invalid(format!("bad phase in {name}")))?;
                Ok(TestFunction::trig(f, p)?)
            } else {
                Err(Failure::Invalid(format!(
                    "unknown test function {name:?}; expected cos, sin, logistic or trig:<freq>:<phase>"
                )))
            }
        }
    }
}

fn require_seed(seed: Option<u64>) -> Result<u64, Failure> {
    seed.ok_or_else(|| Failure::Invalid("--seed is required for stochastic commands".into()))
}

/// RNG for block `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Monte Carlo block size; block `b` covers draws `b*BLOCK..(b+1)*BLOCK`.
pub const BLOCK: usize = 4096;

/// `reps` values of `draw`, produced in parallel blocks and returned in
/// draw order.
pub fn replicate<F>(seed: u64, stream_base: u64, reps: usize, draw: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let blocks = reps.div_ceil(BLOCK);
    let parts: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, stream_base + b as u64);
            let len = BLOCK.min(reps - b * BLOCK);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    parts.concat()
}

/// The seeded random suite: `count` centered distributions with at most ten
/// atoms in `[-2, 2]`.
pub fn random_distributions(seed: u64, count: usize) -> Vec<DiscreteDistribution<f64>> {
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|_| {
            let k = rng.gen_range(2..=10);
            let atoms: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            DiscreteDistribution::new(atoms, w.iter().map(|x| x / total).collect())
                .expect("valid random law")
                .center()
        })
        .collect()
}

/// Random polynomials of degree at most six.
pub fn random_polynomials(seed: u64, count: usize) -> Vec<Polynomial<f64>> {
    let mut rng = stream_rng(seed, 1);
    (0..count)
        .map(|_| {
            let deg = rng.gen_range(0..=6);
            Polynomial::random(&mut rng, deg)
        })
        .collect()
}

/// One line of the verify report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub suite: String,
    pub input: String,
    pub check: String,
    pub residual: f64,
    pub tolerance: f64,
}

impl Residual {
    pub fn pass(&self) -> bool {
        self.residual <= self.tolerance
    }
}

struct Report {
    rows: Vec<Residual>,
}

impl Report {
    fn push(&mut self, suite: &str, input: &str, check: &str, residual: f64, tolerance: f64) {
        self.rows.push(Residual {
            suite: suite.into(),
            input: input.into(),
            check: check.into(),
            // NaN never passes
            residual: if residual.is_nan() { f64::INFINITY } else { residual },
            tolerance,
        });
    }

    fn csv(&self) -> String {
        let mut s = String::from("suite,input,check,residual,tolerance,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{}",
                r.suite,
                r.input,
                r.check,
                r.residual,
                r.tolerance,
                r.pass()
            );
        }
        s
    }
}

enum InputKind {
    Distribution,
    Family,
    Population,
}

fn classify(path: &Path) -> Result<InputKind, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let json: Option<serde_json::Value> = serde_json::from_str(&text).ok();
    Ok(match json {
        Some(v) if v.get("atoms").is_some() => InputKind::Distribution,
        Some(v) if v.get("laws").is_some() => InputKind::Family,
        Some(_) => return Err(Failure::Invalid(format!("{}: unrecognized JSON input", path.display()))),
        None => InputKind::Population,
    })
}

fn check_distribution(
    rep: &mut Report,
    name: &str,
    d: &DiscreteDistribution<f64>,
    polys: &[Polynomial<f64>],
    tol: &Tolerances,
) -> Result<(), Failure> {
    let worst = polys
        .iter()
        .map(|f| characterization_residual(d, f).map(f64::abs))
        .collect::<crate::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    rep.push("characterization", name, "EWf(W)-s2Ef'(W*)", worst, tol.identity);
    let s2 = d.require_zero_mean()?;
    for k in 1..=4u32 {
        let lhs = zero_bias_moment(d, k)?;
        let rhs = d.moment(k + 2) / ((k as f64 + 1.0) * s2);
        rep.push("moments", name, &format!("n={k}"), (lhs - rhs).abs(), tol.identity);
    }
    Ok(())
}

fn check_population(
    rep: &mut Report,
    name: &str,
    pop: &Population<f64>,
    seed: u64,
    reps: usize,
    tol: &Tolerances,
) -> Result<(), Failure> {
    let size = pop.size();
    for n in [2usize, 3] {
        if n + 2 > size || !pop.is_distinct() {
            continue;
        }
        let label = format!("n={n}");
        let built = coupling_outcome_law(pop, n)?;
        let target = target_outcome_law(pop, n)?;
        rep.push(
            "coupling",
            name,
            &format!("{label} outcome law"),
            outcome_law_difference(&built, &target),
            tol.identity,
        );
        let w = enumerate_srs(pop, n)?;
        let oracle = zero_bias_density(&w)?;
        let exact = srs_coupling_pair_law(pop, n)?.interpolated_density()?;
        let same_breaks = exact.breakpoints() == oracle.breakpoints();
        rep.push(
            "coupling",
            name,
            &format!("{label} breakpoints"),
            if same_breaks { 0.0 } else { 1.0 },
            0.0,
        );
        rep.push(
            "coupling",
            name,
            &format!("{label} w_star density"),
            exact.max_abs_difference(&oracle, 0.0),
            tol.identity,
        );
        let fam = srs_family(pop, n)?;
        let id = Polynomial::new(vec![0.0, 1.0]);
        let fr = verify_family_conditions(&fam, &id, true)?;
        rep.push(
            "family",
            name,
            &format!("{label} conditions"),
            fr.max_residual(),
            tol.identity,
        );
        let k = srs_constants(pop, n)?;
        rep.push(
            "family",
            name,
            &format!("{label} rho"),
            (fr.rho - k.rho).abs(),
            tol.identity,
        );
        let vt = verify_variance_terms(pop, n, reps, &mut stream_rng(seed, 2))?;
        rep.push(
            "variance",
            name,
            &format!("{label} Var(E(W*-W|W))-C1^2"),
            (vt.cond_var - vt.c1_sq).max(0.0),
            0.0,
        );
        rep.push(
            "variance",
            name,
            &format!("{label} E(W*-W)^2-C2"),
            (vt.sq_diff - vt.c2).max(0.0),
            0.0,
        );
        if reps > 0 {
            let coupler = SrsCoupler::new(pop, n)?;
            let draws = replicate(seed, 1 << 32 | n as u64, reps, |rng| coupler.sample(rng).w_star);
            let ks = ks_statistic(&draws, |x| oracle.cdf(x));
            rep.push(
                "coupling",
                name,
                &format!("{label} w_star KS"),
                ks,
                tol.ks_coefficient() / (reps as f64).sqrt(),
            );
        }
    }
    Ok(())
}

fn check_family(
    rep: &mut Report,
    name: &str,
    fam: &DependentFamily<f64>,
    polys: &[Polynomial<f64>],
    tol: &Tolerances,
) -> Result<(), Failure> {
    let mut worst = [0.0f64; 4];
    for f in std::iter::once(&Polynomial::new(vec![0.0, 1.0])).chain(polys.iter().take(3)) {
        let r = verify_family_conditions(fam, f, false)?;
        for (slot, v) in worst.iter_mut().zip([r.mean, r.swap, r.marginal, r.linearity]) {
            *slot = slot.max(v);
        }
    }
    for (check, v) in ["mean", "swap", "marginal", "linearity"].into_iter().zip(worst) {
        rep.push("family", name, check, v, tol.identity);
    }
    let oracle = zero_bias_density(&fam.law_of_w())?;
    let exact = dependent_coupling_law(fam)?.interpolated_density()?;
    let diff = if exact.breakpoints() == oracle.breakpoints() {
        exact.max_abs_difference(&oracle, 0.0)
    } else {
        exact.max_cdf_difference(&oracle).max(f64::EPSILON)
    };
    rep.push("coupling", name, "w_star density", diff, tol.identity);
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<(), Failure> {
    a.tol.validate()?;
    let seed = require_seed(a.seed)?;
    let mut rep = Report { rows: Vec::new() };
    let polys = random_polynomials(seed, 8);

    let suite = random_distributions(seed, a.count);
    let mut char_worst = 0.0f64;
    let mut moment_worst = 0.0f64;
    for (d, f) in suite
        .iter()
        .zip(random_polynomials(seed ^ 0x9e37_79b9, a.count).iter().cycle())
    {
        char_worst = char_worst.max(characterization_residual(d, f)?.abs());
        let s2 = d.moment(2);
        for k in 1..=4u32 {
            let r = zero_bias_moment(d, k)? - d.moment(k + 2) / ((k as f64 + 1.0) * s2);
            moment_worst = moment_worst.max(r.abs());
        }
    }
    rep.push(
        "characterization",
        "random",
        "EWf(W)-s2Ef'(W*)",
        char_worst,
        a.tol.identity,
    );
    rep.push("moments", "random", "n=1..4", moment_worst, a.tol.identity);
    let phi = normal_expectation(&TestFunction::<f64>::cos());
    rep.push(
        "quadrature",
        "builtin",
        "E cos Z",
        (phi - (-0.5f64).exp()).abs(),
        a.tol.quadrature,
    );
    let signs = DiscreteDistribution::new(vec![-1.0, 1.0], vec![0.5, 0.5])?;
    let z = zero_bias_density(&signs)?;
    let uniform = z.breakpoints() == [-1.0, 1.0] && z.densities() == [0.5];
    rep.push(
        "transform",
        "builtin",
        "signs uniform",
        if uniform { 0.0 } else { 1.0 },
        0.0,
    );

    for path in &a.input {
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        match classify(path)? {
            InputKind::Distribution => {
                let d: DiscreteDistribution<f64> = read_distribution(path)?;
                check_distribution(&mut rep, &name, &d, &polys, &a.tol)?;
                let model = SumModel::iid(d, 2)?;
                let exact = independent_coupling_law(&model)?.interpolated_density()?;
                let oracle = zero_bias_density(&model.law_of_sum())?;
                rep.push(
                    "coupling",
                    &name,
                    "iid pair w_star cdf",
                    exact.max_cdf_difference(&oracle),
                    a.tol.identity,
                );
            }
            InputKind::Family => {
                let fam: DependentFamily<f64> = read_family(path)?;
                check_family(&mut rep, &name, &fam, &polys, &a.tol)?;
            }
            InputKind::Population => {
                let pop = load_population(&read_population::<f64>(path)?)?;
                let w = enumerate_srs(&pop, if pop.size() > 2 { 2 } else { 1 })?;
                check_distribution(&mut rep, &name, &w, &polys, &a.tol)?;
                check_population(&mut rep, &name, &pop, seed, a.reps, &a.tol)?;
            }
        }
    }

    let csv = rep.csv();
    emit(a.out.as_deref(), csv.as_bytes(), out)?;
    let failed: Vec<&Residual> = rep.rows.iter().filter(|r| !r.pass()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        let names: Vec<String> = failed
            .iter()
            .map(|r| format!("{}/{}/{}", r.suite, r.input, r.check))
            .collect();
        Err(Failure::Violation(format!(
            "{} check(s) failed: {}",
            failed.len(),
            names.join(", ")
        )))
    }
}

fn emit(path: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => write_atomic(p, bytes).map_err(|e| io_failure(p, e)),
        None => out
            .write_all(bytes)
            .map_err(|e| Failure::Invalid(format!("stdout: {e}"))),
    }
}

fn cmd_transform(a: &TransformArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut d: DiscreteDistribution<f64> = read_distribution(&a.input)?;
    if a.center {
        d = d.center();
    }
    let z = zero_bias_density(&d)?;
    let mut json = density_json(&z);
    json.push('\n');
    emit(a.out.as_deref(), json.as_bytes(), out)
}

/// One row of the sampling-without-replacement experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrsRow {
    pub population: usize,
    pub n: usize,
    pub f: f64,
    pub sigma2: f64,
    pub c1: f64,
    pub c2: f64,
    pub bound: f64,
    pub gap: f64,
    pub gap_stderr: f64,
    pub seed: u64,
    pub b1: f64,
    pub b2: f64,
    /// `(B1 ‖h'''‖ + B2 ‖h''''‖) / n`.
    pub b_bound: f64,
}

/// Echo of the configuration that produced a run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub y_input: Option<PathBuf>,
    pub n_grid: Vec<usize>,
    pub fraction: f64,
    pub h: String,
    pub reps: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub rows: Vec<SrsRow>,
    pub gap_slope: Option<f64>,
    pub bound_slope: Option<f64>,
    pub version: String,
    pub wall_clock_seconds: f64,
}

/// Rows of a sampling-without-replacement experiment and the log-log slopes
/// of `|gap|` and of the bound against `n`; a slope is absent with fewer than
/// two rows or a zero gap.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub rows: Vec<SrsRow>,
    pub gap_slope: Option<f64>,
    pub bound_slope: Option<f64>,
}

pub fn srs_experiment(a: &SrsArgs) -> Result<Experiment, Failure> {
    a.tol.validate()?;
    let seed = require_seed(a.seed)?;
    if a.n_grid.is_empty() || a.n_grid.windows(2).any(|w| w[0] >= w[1]) || a.n_grid[0] == 0 {
        return Err(Failure::Invalid(format!(
            "--n-grid must be positive and strictly increasing, got {:?}",
            a.n_grid
        )));
    }
    let h = parse_test_function(&a.h)?;
    let phi_h = normal_expectation(&h);
    let fixed = match &a.input {
        Some(p) => Some(load_population(&read_population::<f64>(p)?)?),
        None => {
            if !(a.fraction > 0.0 && a.fraction < 1.0) {
                return Err(Error::Fraction(a.fraction).into());
            }
            None
        }
    };
    let y_law: Option<DiscreteDistribution<f64>> = a.y_input.as_deref().map(read_distribution).transpose()?;
    let mut rows = Vec::new();
    for &n in &a.n_grid {
        let pop = match &fixed {
            Some(p) => p.clone(),
            None => {
                let big = (n as f64 / a.fraction).round() as usize;
                if ((big as f64) * a.fraction - n as f64).abs() > 1e-9 || big % 2 == 1 {
                    return Err(Failure::Invalid(format!(
                        "n = {n} and f = {} do not give an even integer N",
                        a.fraction
                    )));
                }
                let y = match &y_law {
                    Some(d) => d.sample(&mut stream_rng(seed, 3 << 32 | n as u64), big / 2),
                    None => vec![1.0; big / 2],
                };
                symmetrize_population(&y, big)?
            }
        };
        let k = srs_constants(&pop, n)?;
        let sigma = k.sigma2.sqrt();
        let bound = theorem41_bound(&pop, n, &h)?.bound;
        let gap = match enumerate_srs(&pop, n) {
            Ok(w) => Gap {
                value: w.expect(|x| h.value(x / sigma) - phi_h),
                stderr: 0.0,
            },
            Err(Error::EnumerationCap { .. }) => {
                let vals: Vec<f64> = pop.values().to_vec();
                let values = replicate(seed, 4 << 32 | (n as u64) << 8, a.reps, |rng| {
                    let mut idx: Vec<usize> = (0..vals.len()).collect();
                    for i in 0..n {
                        let j = rng.gen_range(i..idx.len());
                        idx.swap(i, j);
                    }
                    let mut s: Vec<f64> = idx[..n].iter().map(|&i| vals[i]).collect();
                    h.value(crate::scalar::canonical_sum(&mut s) / sigma) - phi_h
                });
                let (value, stderr) = mean_stderr(&values);
                Gap { value, stderr }
            }
            Err(e) => return Err(e.into()),
        };
        if gap.value.abs() - a.tol.z() * gap.stderr > bound {
            return Err(Failure::Violation(format!(
                "n = {n}: |gap| = {} exceeds bound {bound}",
                gap.value.abs()
            )));
        }
        rows.push(SrsRow {
            population: pop.size(),
            n,
            f: n as f64 / pop.size() as f64,
            sigma2: k.sigma2,
            c1: k.c1,
            c2: k.c2,
            bound,
            gap: gap.value,
            gap_stderr: gap.stderr,
            seed,
            b1: k.b1,
            b2: k.b2,
            b_bound: (k.b1 * h.norm(3) + k.b2 * h.norm(4)) / n as f64,
        });
    }
    let slope = |ys: Vec<f64>| {
        let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        (rows.len() >= 2 && ys.iter().all(|&y| y > 0.0)).then(|| loglog_slope(&xs, &ys))
    };
    let gap_slope = slope(rows.iter().map(|r| r.gap.abs()).collect());
    let bound_slope = slope(rows.iter().map(|r| r.bound).collect());
    Ok(Experiment {
        rows,
        gap_slope,
        bound_slope,
    })
}

pub fn srs_csv(rows: &[SrsRow], gap_slope: Option<f64>, bound_slope: Option<f64>) -> String {
    let mut s = String::from("N,n,f,sigma2,C1,C2,bound,gap_exact_or_mc,gap_stderr,seed,B1,B2,B_bound\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.population, r.n, r.f, r.sigma2, r.c1, r.c2, r.bound, r.gap, r.gap_stderr, r.seed, r.b1, r.b2, r.b_bound
        );
    }
    if let Some(v) = gap_slope {
        let _ = writeln!(s, "# slope,{v}");
    }
    if let Some(v) = bound_slope {
        let _ = writeln!(s, "# bound_slope,{v}");
    }
    s
}

fn cmd_srs(a: &SrsArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let start = Instant::now();
    let Experiment {
        rows,
        gap_slope,
        bound_slope,
    } = srs_experiment(a)?;
    let csv = srs_csv(&rows, gap_slope, bound_slope);
    emit(a.out.as_deref(), csv.as_bytes(), out)?;
    if let Some(path) = &a.out {
        let record = RunRecord {
            config: ExperimentConfig {
                command: "srs-experiment".into(),
                input: a.input.clone(),
                y_input: a.y_input.clone(),
                n_grid: a.n_grid.clone(),
                fraction: a.fraction,
                h: a.h.clone(),
                reps: a.reps,
                seed: a.seed.unwrap_or_default(),
                out: a.out.clone(),
                tolerances: a.tol,
            },
            rows,
            gap_slope,
            bound_slope,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        let mut side = path.clone().into_os_string();
        side.push(".run.json");
        let json = serde_json::to_string_pretty(&record).map_err(|e| Failure::Invalid(e.to_string()))?;
        let side = PathBuf::from(side);
        write_atomic(&side, json.as_bytes()).map_err(|e| io_failure(&side, e))?;
    }
    Ok(())
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Invalid(format!("missing --{flag}")))
}

fn cmd_bound(a: &BoundArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let h = a.h.as_deref().map(parse_test_function).transpose()?;
    let norm = |j: usize, explicit: Option<f64>| -> Result<f64, Failure> {
        explicit
            .or_else(|| h.as_ref().map(|h| h.norm(j)))
            .ok_or_else(|| Failure::Invalid(format!("missing norm of h^({j}): pass --h or --h{j}")))
    };
    let report = match a.method {
        Method::ZeroBias => zero_bias_bound_from_norms(
            need(a.sigma, "sigma")?,
            norm(3, a.h3)?,
            norm(4, a.h4)?,
            need(a.cond_var, "cond-var")?,
            need(a.sq_diff, "sq-diff")?,
        )?,
        Method::Iid => {
            iid_fourth_moment_bound_from_norms(need(a.n, "n")?, need(a.ex4, "ex4")?, norm(3, a.h3)?, norm(4, a.h4)?)?
        }
        Method::Clt => clt_iid_bound_from_norm(need(a.n, "n")?, need(a.abs3, "abs3")?, norm(3, a.h3)?)?,
        Method::Srs => {
            let path = need(a.input.as_ref(), "input")?;
            let pop = load_population(&read_population::<f64>(path)?)?;
            let n = need(a.n, "n")?;
            let k = srs_constants(&pop, n)?;
            let mut r = srs_bound_from_norms(k.sigma2.sqrt(), k.c1, k.c2, norm(3, a.h3)?, norm(4, a.h4)?)?;
            r.n = Some(n);
            r
        }
    };
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Invalid(e.to_string()))?;
    json.push('\n');
    emit(a.out.as_deref(), json.as_bytes(), out)
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("ZB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Invalid(format!("ZB_THREADS must be a positive integer, got {v:?}")))?;
        // a pool configured earlier in this process stays in effect
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs one command and returns its result.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Transform(a) => cmd_transform(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::SrsExperiment(a) => cmd_srs(a, out),
        Command::Bound(a) => cmd_bound(a, out),
    }
}

/// Parses arguments, runs, reports failures on stderr and returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Invalid(m) => eprintln!("error: {m}"),
                Failure::Violation(m) => eprintln!("violation: {m}"),
            }
            f.exit_code()
        }
    }
}
