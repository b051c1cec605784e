//! File formats.
//!
//! - distribution: JSON `{"atoms": [...], "probs": [...]}`;
//! - population: plain text, one decimal per line, `#` starts a comment;
//! - dependent family: JSON `{"base": [...]?, "laws": [[...], ...]}` where
//!   every outcome is `{"x": [...], "p": ...}` and law `i` stores `x_i'` at
//!   position `i` and `x_i''` at position `i + 1`;
//! - density: JSON `{"breakpoints": [...], "densities": [...]}`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;
use serde_json::{Number, Value};

use crate::coupling::{DependentFamily, JointLaw};
use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::zerobias::PiecewiseUniformDensity;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DistributionFile {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Outcome {
    x: Vec<f64>,
    p: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyFile {
    #[serde(default)]
    base: Option<Vec<Outcome>>,
    laws: Vec<Vec<Outcome>>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn cast<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::c(x)).collect()
}

pub fn parse_distribution<T: Scalar>(text: &str) -> Result<DiscreteDistribution<T>> {
    let f: DistributionFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    DiscreteDistribution::new(cast(&f.atoms), cast(&f.probs))
}

pub fn read_distribution<T: Scalar>(path: &Path) -> Result<DiscreteDistribution<T>> {
    parse_distribution(&read(path)?)
}

/// Raw population values; normalization happens in
/// [`crate::srs::load_population`].
pub fn parse_population<T: Scalar>(text: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let v: f64 = body
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: not a number: {body:?}", lineno + 1)))?;
        out.push(T::c(v));
    }
    Ok(out)
}

pub fn read_population<T: Scalar>(path: &Path) -> Result<Vec<T>> {
    parse_population(&read(path)?)
}

fn joint<T: Scalar>(outcomes: Vec<Outcome>) -> Result<JointLaw<T>> {
    JointLaw::new(outcomes.into_iter().map(|o| (cast(&o.x), T::c(o.p))).collect())
}

pub fn parse_family<T: Scalar>(text: &str) -> Result<DependentFamily<T>> {
    let f: FamilyFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let laws = f.laws.into_iter().map(joint).collect::<Result<Vec<_>>>()?;
    match f.base {
        Some(base) => DependentFamily::new(joint(base)?, laws),
        None => DependentFamily::from_laws(laws),
    }
}

pub fn read_family<T: Scalar>(path: &Path) -> Result<DependentFamily<T>> {
    parse_family(&read(path)?)
}

/// JSON number that prints integral values without a fractional part.
pub fn json_number(x: f64) -> Value {
    if x.fract() == 0.0 && x.abs() < 9.007_199_254_740_992e15 {
        Value::Number(Number::from(x as i64))
    } else {
        Number::from_f64(x).map_or(Value::Null, Value::Number)
    }
}

fn json_array<T: Scalar>(xs: &[T]) -> Value {
    Value::Array(xs.iter().map(|x| json_number(x.as_f64())).collect())
}

pub fn density_json<T: Scalar>(d: &PiecewiseUniformDensity<T>) -> String {
    let mut m = serde_json::Map::new();
    m.insert("breakpoints".into(), json_array(d.breakpoints()));
    m.insert("densities".into(), json_array(d.densities()));
    Value::Object(m).to_string()
}

/// Writes via a temporary file in the target directory and a rename, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
