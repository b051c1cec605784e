//! Small statistical helpers for the sampling checks.

use crate::scalar::{compensated_sum, sort_total, Scalar};

/// 99% asymptotic Kolmogorov–Smirnov coefficient.
pub const KS_99: f64 = 1.63;

/// One-sample KS statistic against a continuous distribution function.
pub fn ks_statistic<T: Scalar, F: Fn(T) -> T>(samples: &[T], cdf: F) -> T {
    let mut xs = samples.to_vec();
    sort_total(&mut xs);
    let n = T::from_usize_(xs.len());
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let hi = T::from_usize_(i + 1) / n - f;
            let lo = f - T::from_usize_(i) / n;
            hi.max(lo)
        })
        .fold(T::zero(), T::max)
}

pub fn ks_critical_99(n: usize) -> f64 {
    KS_99 / (n as f64).sqrt()
}

/// Two-sample KS statistic.
pub fn ks_two_sample<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    sort_total(&mut xs);
    sort_total(&mut ys);
    let (n, m) = (T::from_usize_(xs.len()), T::from_usize_(ys.len()));
    let (mut i, mut j) = (0, 0);
    let mut d = T::zero();
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((T::from_usize_(i) / n - T::from_usize_(j) / m).abs());
    }
    d
}

pub fn ks_two_sample_critical_99(n: usize, m: usize) -> f64 {
    KS_99 * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Sample mean and its standard error.
pub fn mean_stderr<T: Scalar>(values: &[T]) -> (T, T) {
    let n = T::from_usize_(values.len());
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, T::zero());
    }
    let ss = compensated_sum(values.iter().map(|&v| (v - mean) * (v - mean)));
    let var = ss / (n - T::one());
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
