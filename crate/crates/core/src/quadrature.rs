//! Gauss–Hermite rules for normal expectations and adaptive Gauss–Kronrod
//! integration on finite intervals.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Scalar};

/// Nodes and weights for `∫ e^{-x²} g(x) dx ≈ Σ w_i g(x_i)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on the orthonormal Hermite recurrence. Tested up to
    /// 128 nodes.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut z: f64 = 0.0;
        for i in 1..=m {
            z = match i {
                1 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                2 => z - 1.14 * nf.powf(0.426) / z,
                3 => 1.86 * z - 0.86 * x[0],
                4 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 3],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i - 1] = z;
            x[n - i] = -z;
            w[i - 1] = 2.0 / (pp * pp);
            w[n - i] = w[i - 1];
        }
        // ascending order
        x.reverse();
        w.reverse();
        Self { nodes: x, weights: w }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E g(Z)` for standard normal `Z`: `π^{-1/2} Σ w_i g(√2 x_i)`.
    pub fn normal_expectation<T: Scalar, G: Fn(T) -> T>(&self, g: G) -> T {
        let s2 = T::c(std::f64::consts::SQRT_2);
        let norm = T::c(std::f64::consts::PI.sqrt().recip());
        compensated_sum(
            self.nodes
                .iter()
                .zip(&self.weights)
                .map(|(&x, &w)| T::c(w) * g(s2 * T::c(x))),
        ) * norm
    }
}

/// The shared 64-node rule.
pub fn gauss_hermite_64() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(64))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point
/// Gauss rule.
fn gk15<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let two = T::c(2.0);
    let center = (a + b) / two;
    let half = (b - a) / two;
    let fc = f(center);
    let mut kronrod = fc * T::c(WGK[7]);
    let mut gauss = fc * T::c(WG[3]);
    for k in 0..7 {
        let dx = half * T::c(XGK[k]);
        let s = f(center - dx) + f(center + dx);
        kronrod += T::c(WGK[k]) * s;
        if k % 2 == 1 {
            gauss += T::c(WG[k / 2]) * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]` to absolute
/// tolerance `tol`. Returns the estimate and its error bound.
pub fn integrate<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T) -> Result<(T, T)> {
    const MAX_INTERVALS: usize = 4000;
    if a == b {
        return Ok((T::zero(), T::zero()));
    }
    let (v, e) = gk15(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let err = compensated_sum(pieces.iter().map(|p| p.3));
        if err <= tol {
            break;
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature { estimate: err.as_f64() });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .fold((0, T::zero()), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = (lo + hi) / T::c(2.0);
        if !(lo < mid && mid < hi) {
            return Err(Error::Quadrature { estimate: err.as_f64() });
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
    Ok((
        compensated_sum(pieces.iter().map(|p| p.2)),
        compensated_sum(pieces.iter().map(|p| p.3)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_moments() {
        let r = gauss_hermite_64();
        assert_eq!(r.nodes().len(), 64);
        let total: f64 = r.weights().iter().sum();
        assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        assert!((r.normal_expectation(|x: f64| x * x) - 1.0).abs() < 1e-13);
        assert!((r.normal_expectation(|x: f64| x.powi(4)) - 3.0).abs() < 1e-12);
        assert!(r.normal_expectation(|x: f64| x.powi(3)).abs() < 1e-13);
        assert!(r.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hermite_cos_matches_characteristic_function() {
        let v = gauss_hermite_64().normal_expectation(|x: f64| x.cos());
        assert!((v - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn large_rule_stays_finite() {
        let r = GaussHermite::new(128);
        assert!(r.nodes().iter().all(|x| x.is_finite()));
        let total: f64 = r.weights().iter().sum();
        assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn kronrod_integrates_smooth_functions() {
        let (v, _) = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-14).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        let (v, _) = integrate(|x: f64| (-x * x).exp(), 0.0, 10.0, 1e-14).unwrap();
        assert!((v - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-14);
        let (v, _) = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }
}
