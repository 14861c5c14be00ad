//! Grid observation noise and KL-divergence utilities for location shifts.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise parameter: {0}")]
    InvalidParameter(String),
    #[error("quadrature did not converge (estimate {estimate}, error {error})")]
    Quadrature { estimate: f64, error: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// White noise with per-cell variance `sigma^2 / N`.
    #[serde(rename = "gaussian")]
    GaussianWhite { sigma: f64 },
    /// Logistic values with the given scale, divided by `sqrt N`.
    Logistic { scale: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), NoiseError> {
        match *self {
            NoiseModel::GaussianWhite { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(NoiseError::InvalidParameter(format!("sigma must be >= 0, got {sigma}")))
            }
            NoiseModel::Logistic { scale } if !(scale > 0.0 && scale.is_finite()) => {
                Err(NoiseError::InvalidParameter(format!("logistic scale must be > 0, got {scale}")))
            }
            _ => Ok(()),
        }
    }

    /// Second-moment constant: `E <eps, y>^2 <= sigma^2 ||y||^2`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            NoiseModel::GaussianWhite { sigma } => sigma * sigma,
            NoiseModel::Logistic { scale } => scale * scale * std::f64::consts::PI.powi(2) / 3.0,
        }
    }

    /// KL curvature constant: `KL(p, p(. + v)) <= tau/2 ||v||^2`.
    pub fn tau(&self) -> f64 {
        match *self {
            NoiseModel::GaussianWhite { sigma } => 1.0 / (sigma * sigma),
            NoiseModel::Logistic { scale } => 25.0 / (6.0 * scale * scale),
        }
    }

    pub fn is_silent(&self) -> bool {
        matches!(*self, NoiseModel::GaussianWhite { sigma } if sigma == 0.0)
    }

    /// Cell masses `eps_i`, so that `<eps, y> = sum_i eps_i y_i` for grid functions `y`.
    pub fn sample_cells<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let root = (n as f64).sqrt();
        match *self {
            NoiseModel::GaussianWhite { sigma } => {
                let sd = sigma / root;
                (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
            }
            NoiseModel::Logistic { scale } => (0..n).map(|_| scale * standard_logistic(rng) / root).collect(),
        }
    }

    /// `(tau / 2) ||v||^2`.
    pub fn kl_shift_bound(&self, v: &[f64]) -> f64 {
        let sq: f64 = v.iter().map(|x| x * x).sum();
        if sq == 0.0 {
            return 0.0;
        }
        0.5 * self.tau() * sq
    }

    /// Exact `KL(p, p(. + v))` for a coordinatewise shift `v`.
    pub fn kl_shift_exact(&self, v: &[f64]) -> Result<f64, NoiseError> {
        match *self {
            NoiseModel::GaussianWhite { .. } => Ok(self.kl_shift_bound(v)),
            NoiseModel::Logistic { scale } => v.iter().map(|x| logistic_shift_kl(x / scale)).sum(),
        }
    }
}

/// Pairing of cell masses with a grid function.
pub fn pair(eps: &[f64], y: &[f64]) -> f64 {
    eps.iter().zip(y).map(|(e, v)| e * v).sum()
}

fn standard_logistic<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return (u / (1.0 - u)).ln();
        }
    }
}

/// `log p(x)` for the unit logistic density `e^{-x} / (1 + e^{-x})^2`.
fn log_logistic_density(x: f64) -> f64 {
    let a = x.abs();
    -a - 2.0 * (-a).exp().ln_1p()
}

/// `KL(p, p(. + v))` for the unit logistic density.
///
/// With `t = tanh(x/2)` the measure `p(x) dx` becomes `dt / 2` on `(-1, 1)`
/// and the integrand is the bounded log-ratio.
pub fn logistic_shift_kl(v: f64) -> Result<f64, NoiseError> {
    if v == 0.0 {
        return Ok(0.0);
    }
    let f = |t: f64| {
        let x = 2.0 * t.atanh();
        0.5 * (log_logistic_density(x) - log_logistic_density(x + v))
    };
    let (value, _) = adaptive_gauss_kronrod(&f, -1.0, 1.0, 1e-10, 1e-15, 60)?;
    Ok(value.max(0.0))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_GAUSS: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_KRONROD[7] * fc;
    let mut g = GK_GAUSS[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        k += GK_KRONROD[i] * s;
        if i % 2 == 1 {
            g += GK_GAUSS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Interval-bisecting Gauss-Kronrod (7/15) quadrature.
///
/// Each panel must meet its length share of `max(rel_tol |I|, abs_tol)`,
/// with `I` the single-panel estimate over `[a, b]`.
pub fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_depth: usize,
) -> Result<(f64, f64), NoiseError> {
    let (whole, _) = gk15(f, a, b);
    let tol = (rel_tol * whole.abs()).max(abs_tol);
    let mut stack = vec![(a, b, 0usize)];
    let (mut value, mut error) = (0.0, 0.0);
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, e) = gk15(f, lo, hi);
        if e <= tol * (hi - lo) / (b - a) {
            value += v;
            error += e;
        } else if depth >= max_depth {
            return Err(NoiseError::Quadrature { estimate: value + v, error: error + e });
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Ok((value, error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    /// Closed form `v + 2(-1 + q + q v)/(1 - q)` with `q = e^{-v}`, from
    /// `E log(1 + e^{-X-v})` evaluated through the logistic CDF.
    fn kl_closed(v: f64) -> f64 {
        let q = (-v).exp();
        v + 2.0 * (-1.0 + q + q * v) / (1.0 - q)
    }

    #[test]
    fn constants() {
        let g = NoiseModel::GaussianWhite { sigma: 2.0 };
        assert_eq!(g.second_moment(), 4.0);
        assert_eq!(g.tau(), 0.25);
        let l = NoiseModel::Logistic { scale: 1.0 };
        assert!((l.second_moment() - std::f64::consts::PI.powi(2) / 3.0).abs() < 1e-15);
        assert!((l.tau() - 25.0 / 6.0).abs() < 1e-15);
        assert!(NoiseModel::Logistic { scale: 0.0 }.validate().is_err());
        assert!(NoiseModel::GaussianWhite { sigma: -1.0 }.validate().is_err());
    }

    #[test]
    fn zero_sigma_is_silent() {
        let g = NoiseModel::GaussianWhite { sigma: 0.0 };
        assert!(g.sample_cells(16, &mut substream(1, &[])).iter().all(|&e| e == 0.0));
        assert_eq!(g.kl_shift_bound(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn bound_examples() {
        let g = NoiseModel::GaussianWhite { sigma: 1.0 };
        assert_eq!(g.kl_shift_bound(&[1.0, 1.0]), 1.0);
        let l = NoiseModel::Logistic { scale: 1.0 };
        let v = (12.0f64 / 25.0).sqrt();
        assert!((l.kl_shift_bound(&[v]) - 1.0).abs() < 1e-15);
        let v = [0.3, -1.2];
        assert_eq!(g.kl_shift_exact(&v).unwrap(), g.kl_shift_bound(&v));
    }

    #[test]
    fn gaussian_cell_variance() {
        let g = NoiseModel::GaussianWhite { sigma: 1.0 };
        let n = 256;
        let mut r = substream(2, &[]);
        let t = 100_000 / n * n;
        let mut vals = Vec::with_capacity(t);
        while vals.len() < t {
            vals.extend(g.sample_cells(n, &mut r));
        }
        let scaled: Vec<f64> = vals.iter().map(|e| e * e * n as f64).collect();
        let mean = scaled.iter().sum::<f64>() / t as f64;
        let var = scaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
        assert!((mean - 1.0).abs() < 3.0 * (var / t as f64).sqrt());
    }

    #[test]
    fn pairing_second_moment() {
        let n = 64;
        let y: Vec<f64> =
            (0..n).map(|i| (2.0 * std::f64::consts::PI * 3.0 * (i as f64 + 0.5) / n as f64).cos()).collect();
        let ynorm: f64 = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let y: Vec<f64> = y.iter().map(|v| v / ynorm.sqrt()).collect();
        for model in [NoiseModel::GaussianWhite { sigma: 1.5 }, NoiseModel::Logistic { scale: 1.0 }] {
            let mut r = substream(3, &[]);
            let t = 20_000;
            let s: Vec<f64> = (0..t).map(|_| pair(&model.sample_cells(n, &mut r), &y).powi(2)).collect();
            let mean = s.iter().sum::<f64>() / t as f64;
            let sd = (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / t as f64).sqrt();
            assert!(mean <= model.second_moment() + 3.0 * sd / (t as f64).sqrt());
        }
    }

    #[test]
    fn logistic_kl_matches_closed_form() {
        for v in [0.01, 0.1, 0.5, 1.0, -1.0, 2.5, -5.0, 12.0] {
            let q = logistic_shift_kl(v).unwrap();
            let c = kl_closed(v.abs());
            assert!((q - c).abs() <= 1e-8 * c.max(1e-12), "v={v}: {q} vs {c}");
        }
        assert_eq!(logistic_shift_kl(0.0).unwrap(), 0.0);
    }

    #[test]
    fn logistic_kl_against_trapezoid() {
        let v = 1.0;
        let h = 1e-3;
        let m = 100_000;
        let direct: f64 = (0..=m)
            .map(|i| {
                let x = -50.0 + i as f64 * h;
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                w * log_logistic_density(x).exp() * (log_logistic_density(x) - log_logistic_density(x + v))
            })
            .sum::<f64>()
            * h;
        assert!((logistic_shift_kl(v).unwrap() - direct).abs() < 1e-7);
        assert!(direct <= 25.0 / 12.0);
    }

    #[test]
    fn logistic_large_shift_below_abs() {
        let kl = logistic_shift_kl(5.0).unwrap();
        assert!(kl <= 5.0 && 5.0 <= 25.0);
    }

    #[test]
    fn gauss_kronrod_polynomial() {
        let (v, _) = adaptive_gauss_kronrod(&|x: f64| x.powi(6), 0.0, 2.0, 1e-12, 1e-15, 30).unwrap();
        assert!((v - 128.0 / 7.0).abs() < 1e-12);
        let (v, _) = adaptive_gauss_kronrod(&|x: f64| x.sqrt(), 0.0, 1.0, 1e-10, 1e-15, 50).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
    }
}
