//! Spectral decay profiles, eigensystems, Sobolev classes and rate formulas.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid spectral decay: {0}")]
    InvalidDecay(String),
    #[error("index {index} out of range 1..={len}")]
    Index { index: usize, len: usize },
    #[error("length mismatch: kernel has {kernel} coefficients, eigensystem has {eig}")]
    Shape { kernel: usize, eig: usize },
    #[error("invalid eigensystem: {0}")]
    InvalidEigenSystem(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    Polynomial,
    Exponential,
}

/// Two-sided envelope `a g(k) <= lambda_k <= b g(k)`, with `g(k) = k^{-2r}` or `exp(-r k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecay {
    pub kind: DecayKind,
    pub r: f64,
    pub a: f64,
    pub b: f64,
}

impl SpectralDecay {
    pub fn new(kind: DecayKind, r: f64, a: f64, b: f64) -> Result<Self, SpectralError> {
        let d = Self { kind, r, a, b };
        d.validate()?;
        Ok(d)
    }

    pub fn polynomial(r: f64, a: f64, b: f64) -> Result<Self, SpectralError> {
        Self::new(DecayKind::Polynomial, r, a, b)
    }

    pub fn exponential(r: f64, a: f64, b: f64) -> Result<Self, SpectralError> {
        Self::new(DecayKind::Exponential, r, a, b)
    }

    pub fn validate(&self) -> Result<(), SpectralError> {
        let bad = |m: String| Err(SpectralError::InvalidDecay(m));
        if !(self.r.is_finite() && self.a.is_finite() && self.b.is_finite()) {
            return bad("parameters must be finite".into());
        }
        match self.kind {
            DecayKind::Polynomial if self.r <= 0.25 => {
                return bad(format!("polynomial decay needs r > 1/4, got {}", self.r))
            }
            DecayKind::Exponential if self.r <= 0.0 => {
                return bad(format!("exponential decay needs r > 0, got {}", self.r))
            }
            _ => {}
        }
        if self.a <= 0.0 {
            return bad(format!("lower constant must be positive, got {}", self.a));
        }
        if self.a > self.b {
            return bad(format!("need a <= b, got a={} b={}", self.a, self.b));
        }
        Ok(())
    }

    /// Shape function `g(k)`.
    pub fn profile(&self, k: f64) -> f64 {
        match self.kind {
            DecayKind::Polynomial => k.powf(-2.0 * self.r),
            DecayKind::Exponential => (-self.r * k).exp(),
        }
    }

    /// `(a g(k), b g(k))` for `k >= 1`.
    pub fn envelope(&self, k: usize) -> Result<(f64, f64), SpectralError> {
        self.validate()?;
        if k == 0 {
            return Err(SpectralError::Index { index: 0, len: usize::MAX });
        }
        let g = self.profile(k as f64);
        Ok((self.a * g, self.b * g))
    }
}

pub fn eigenvalue_envelope(decay: &SpectralDecay, k: usize) -> Result<(f64, f64), SpectralError> {
    decay.envelope(k)
}

/// Trigonometric part of an analytic Fourier eigenfunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Cos,
    Sin,
}

/// `sqrt(2) cos(2 pi freq s)` or `sqrt(2) sin(2 pi freq s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierMode {
    pub freq: usize,
    pub trig: Trig,
}

impl FourierMode {
    pub fn eval(&self, s: f64) -> f64 {
        let t = 2.0 * std::f64::consts::PI * self.freq as f64 * s;
        std::f64::consts::SQRT_2
            * match self.trig {
                Trig::Cos => t.cos(),
                Trig::Sin => t.sin(),
            }
    }
}

/// Eigenfunctions tabulated on a quadrature grid of S, with the density of rho.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedBasis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub density: Vec<f64>,
    /// `values[k][i]` is `psi_{k+1}(nodes[i])`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    Fourier(Vec<FourierMode>),
    Tabulated(TabulatedBasis),
}

/// Ordered positive eigenvalues of the normal operator with its eigenfunctions.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    eigenvalues: Vec<f64>,
    basis: Basis,
}

impl EigenSystem {
    pub fn new(eigenvalues: Vec<f64>, basis: Basis) -> Result<Self, SpectralError> {
        let bad = |m: String| Err(SpectralError::InvalidEigenSystem(m));
        if eigenvalues.is_empty() {
            return bad("empty eigenvalue sequence".into());
        }
        for (i, w) in eigenvalues.windows(2).enumerate() {
            if w[1] > w[0] {
                return bad(format!("eigenvalues increase at index {}", i + 2));
            }
        }
        if let Some(i) = eigenvalues.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
            return bad(format!("eigenvalue {} is not positive", i + 1));
        }
        let k = eigenvalues.len();
        match &basis {
            Basis::Fourier(modes) if modes.len() != k => {
                return bad(format!("{} Fourier modes for {} eigenvalues", modes.len(), k))
            }
            Basis::Tabulated(t) => {
                let q = t.nodes.len();
                if t.values.len() != k {
                    return bad(format!("{} tabulated functions for {} eigenvalues", t.values.len(), k));
                }
                if t.weights.len() != q || t.density.len() != q || t.values.iter().any(|v| v.len() != q) {
                    return bad("tabulated basis arrays disagree with node count".into());
                }
            }
            _ => {}
        }
        Ok(Self { eigenvalues, basis })
    }

    /// Analytic Fourier system with `lambda_{2k-1} = lambda_{2k} = pair_values[k-1]`.
    pub fn fourier_pairs(pair_values: &[f64]) -> Result<Self, SpectralError> {
        let mut lambdas = Vec::with_capacity(2 * pair_values.len());
        let mut modes = Vec::with_capacity(2 * pair_values.len());
        for (i, &l) in pair_values.iter().enumerate() {
            for trig in [Trig::Cos, Trig::Sin] {
                lambdas.push(l);
                modes.push(FourierMode { freq: i + 1, trig });
            }
        }
        Self::new(lambdas, Basis::Fourier(modes))
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `lambda_k` with 1-based `k`.
    pub fn eigenvalue(&self, k: usize) -> Result<f64, SpectralError> {
        self.check_index(k)?;
        Ok(self.eigenvalues[k - 1])
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    fn check_index(&self, k: usize) -> Result<(), SpectralError> {
        if k == 0 || k > self.len() {
            Err(SpectralError::Index { index: k, len: self.len() })
        } else {
            Ok(())
        }
    }

    /// Keeps the leading `k` eigenpairs.
    pub fn truncate(&self, k: usize) -> Result<Self, SpectralError> {
        self.check_index(k)?;
        let basis = match &self.basis {
            Basis::Fourier(m) => Basis::Fourier(m[..k].to_vec()),
            Basis::Tabulated(t) => Basis::Tabulated(TabulatedBasis { values: t.values[..k].to_vec(), ..t.clone() }),
        };
        Self::new(self.eigenvalues[..k].to_vec(), basis)
    }

    /// `psi_k(s)`. Tabulated systems interpolate linearly between nodes.
    pub fn eval(&self, k: usize, s: f64) -> Result<f64, SpectralError> {
        self.check_index(k)?;
        Ok(match &self.basis {
            Basis::Fourier(m) => m[k - 1].eval(s),
            Basis::Tabulated(t) => interpolate(&t.nodes, &t.values[k - 1], s),
        })
    }

    /// Gram matrix of the basis in the weighted space, computed by quadrature.
    pub fn gram_matrix(&self) -> Vec<Vec<f64>> {
        let k = self.len();
        let (weights, table): (Vec<f64>, Vec<Vec<f64>>) = match &self.basis {
            Basis::Fourier(modes) => {
                let fmax = modes.iter().map(|m| m.freq).max().unwrap_or(0);
                let q = 4 * fmax + 8;
                let nodes: Vec<f64> = (0..q).map(|i| (i as f64 + 0.5) / q as f64).collect();
                let table = modes.iter().map(|m| nodes.iter().map(|&s| m.eval(s)).collect()).collect();
                (vec![1.0 / q as f64; q], table)
            }
            Basis::Tabulated(t) => (t.weights.iter().zip(&t.density).map(|(w, d)| w * d).collect(), t.values.clone()),
        };
        let mut g = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..=i {
                let v: f64 = weights.iter().zip(table[i].iter().zip(&table[j])).map(|(w, (a, b))| w * a * b).sum();
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        g
    }

    /// Largest entrywise deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.gram_matrix();
        let mut worst = 0.0f64;
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }
}

fn interpolate(nodes: &[f64], values: &[f64], s: f64) -> f64 {
    let q = nodes.len();
    if q == 1 || s <= nodes[0] {
        return values[0];
    }
    if s >= nodes[q - 1] {
        return values[q - 1];
    }
    let j = nodes.partition_point(|&x| x <= s);
    let (x0, x1) = (nodes[j - 1], nodes[j]);
    let t = (s - x0) / (x1 - x0);
    values[j - 1] * (1.0 - t) + values[j] * t
}

/// Smoothness `beta >= 0` and radius `L > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevClass {
    pub beta: f64,
    pub radius: f64,
}

impl SobolevClass {
    pub fn new(beta: f64, radius: f64) -> Result<Self, SpectralError> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(SpectralError::InvalidParameter(format!("beta must be >= 0, got {beta}")));
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(SpectralError::InvalidParameter(format!("radius must be >= 0, got {radius}")));
        }
        Ok(Self { beta, radius })
    }
}

/// Kernel coefficients in the eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFunction {
    pub coeffs: Vec<f64>,
}

impl KernelFunction {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(k: usize) -> Self {
        Self { coeffs: vec![0.0; k] }
    }

    /// `value * psi_index` in a system of size `k`.
    pub fn single_mode(k: usize, index: usize, value: f64) -> Result<Self, SpectralError> {
        if index == 0 || index > k {
            return Err(SpectralError::Index { index, len: k });
        }
        let mut c = vec![0.0; k];
        c[index - 1] = value;
        Ok(Self { coeffs: c })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Squared weighted L2 norm, by Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Coefficients beyond index `n` set to zero.
    pub fn head(&self, n: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.iter_mut().skip(n).for_each(|v| *v = 0.0);
        Self { coeffs: c }
    }

    /// Coefficients up to index `n` set to zero.
    pub fn tail(&self, n: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.iter_mut().take(n).for_each(|v| *v = 0.0);
        Self { coeffs: c }
    }
}

pub fn sobolev_norm_sq(phi: &KernelFunction, beta: f64, eig: &EigenSystem) -> Result<f64, SpectralError> {
    if phi.len() != eig.len() {
        return Err(SpectralError::Shape { kernel: phi.len(), eig: eig.len() });
    }
    Ok(phi.coeffs.iter().zip(eig.eigenvalues()).map(|(t, l)| t * t * l.powf(-beta)).sum())
}

/// `sum_{k >= n} theta_k^2` with 1-based `n`.
pub fn tail_energy(phi: &KernelFunction, n: usize) -> Result<f64, SpectralError> {
    if n == 0 || n > phi.len() {
        return Err(SpectralError::Index { index: n, len: phi.len() });
    }
    Ok(phi.coeffs[n - 1..].iter().map(|c| c * c).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum KernelProfile {
    Boundary,
    NearBoundary { delta: f64 },
    Random { seed: u64 },
}

impl Default for KernelProfile {
    fn default() -> Self {
        KernelProfile::NearBoundary { delta: 0.05 }
    }
}

/// A member of the class built as `theta_k = L lambda_k^{beta/2} c_k`.
pub fn sample_kernel(class: &SobolevClass, eig: &EigenSystem, profile: KernelProfile) -> KernelFunction {
    let k = eig.len();
    let c: Vec<f64> = match profile {
        KernelProfile::Boundary => {
            let f = 6f64.sqrt() / std::f64::consts::PI;
            (1..=k).map(|i| f / i as f64).collect()
        }
        KernelProfile::NearBoundary { delta } => normalized((1..=k).map(|i| (i as f64).powf(-0.5 - delta)).collect()),
        KernelProfile::Random { seed } => {
            let mut r = rng::substream(seed, &[0x6b65_726e]);
            normalized((0..k).map(|_| r.sample::<f64, _>(StandardNormal)).collect())
        }
    };
    let coeffs: Vec<f64> =
        c.iter().zip(eig.eigenvalues()).map(|(ci, l)| class.radius * l.powf(class.beta / 2.0) * ci).collect();
    let mut phi = KernelFunction::new(coeffs);
    let l2 = class.radius * class.radius;
    let norm = sobolev_norm_sq(&phi, class.beta, eig).unwrap_or(0.0);
    if norm > l2 {
        let f = (l2 / norm).sqrt() * (1.0 - 1e-15);
        phi.coeffs.iter_mut().for_each(|v| *v *= f);
    }
    phi
}

fn normalized(mut c: Vec<f64>) -> Vec<f64> {
    let s: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if s > 0.0 {
        c.iter_mut().for_each(|v| *v /= s);
    }
    c
}

/// Dimension chosen by the rate-optimal trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionChoice {
    pub n: usize,
    /// Value before rounding and clamping.
    pub raw: f64,
    /// Set when the unclamped result is below 1.
    pub below_regime: bool,
}

const ROUNDING_SLACK: f64 = 1e-10;

pub fn optimal_dimension(
    decay: &SpectralDecay,
    beta: f64,
    radius: f64,
    sigma: f64,
    m: usize,
    k_max: usize,
) -> Result<DimensionChoice, SpectralError> {
    decay.validate()?;
    if !(beta > 0.0) {
        return Err(SpectralError::InvalidParameter(format!("beta must be > 0, got {beta}")));
    }
    if m == 0 || k_max == 0 {
        return Err(SpectralError::InvalidParameter("M and K must be >= 1".into()));
    }
    let SpectralDecay { r, a, b, .. } = *decay;
    let l2 = radius * radius;
    let s2 = sigma * sigma;
    let mf = m as f64;
    let (raw, rounded) = match decay.kind {
        DecayKind::Polynomial => {
            let base = a * b.powf(beta) * beta * r * l2 / (2.0 * s2 * (1.0 + 2.0 * r)) * mf;
            let raw = base.powf(1.0 / (2.0 * beta * r + 2.0 * r + 1.0));
            (raw, (raw * (1.0 - ROUNDING_SLACK)).ceil())
        }
        DecayKind::Exponential => {
            let c1 = 4.0 * s2 * r.exp() / (a * (r.exp() - 1.0));
            let raw = (b.powf(beta) * beta * l2 * mf / c1).ln() / (beta * r + r);
            (raw, (raw + ROUNDING_SLACK * raw.abs().max(1.0)).floor())
        }
    };
    let below_regime = !(rounded >= 1.0);
    let n = if rounded.is_nan() || rounded < 1.0 {
        1
    } else if rounded >= k_max as f64 {
        k_max
    } else {
        rounded as usize
    };
    Ok(DimensionChoice { n, raw, below_regime })
}

/// Upper-rate exponent for the decay regime.
pub fn theoretical_exponent(decay: &SpectralDecay, beta: f64) -> f64 {
    match decay.kind {
        DecayKind::Polynomial => {
            let r = decay.r;
            2.0 * beta * r / (2.0 * beta * r + 2.0 * r + 1.0)
        }
        DecayKind::Exponential => beta / (beta + 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_system(k: usize, r: f64) -> EigenSystem {
        let l: Vec<f64> = (1..=k).map(|i| (i as f64).powf(-2.0 * r)).collect();
        let modes = (0..k).map(|i| FourierMode { freq: i + 1, trig: Trig::Cos }).collect();
        EigenSystem::new(l, Basis::Fourier(modes)).unwrap()
    }

    #[test]
    fn envelope_examples() {
        let d = SpectralDecay::polynomial(1.0, 1.0, 1.0).unwrap();
        assert_eq!(d.envelope(2).unwrap(), (0.25, 0.25));
        let d = SpectralDecay::polynomial(0.5, 0.5, 2.0).unwrap();
        let (lo, hi) = d.envelope(4).unwrap();
        assert!((lo - 0.125).abs() < 1e-15 && (hi - 0.5).abs() < 1e-15);
        assert!(SpectralDecay::exponential(0.0, 1.0, 1.0).is_err());
        assert!(SpectralDecay::polynomial(0.25, 1.0, 1.0).is_err());
        assert!(SpectralDecay::polynomial(1.0, 2.0, 1.0).is_err());
        assert!(d.envelope(0).is_err());
    }

    #[test]
    fn sobolev_norm_examples() {
        let eig = EigenSystem::new(
            vec![0.5, 0.25],
            Basis::Fourier(vec![FourierMode { freq: 1, trig: Trig::Cos }, FourierMode { freq: 1, trig: Trig::Sin }]),
        )
        .unwrap();
        let phi = KernelFunction::new(vec![1.0, 0.0]);
        assert!((sobolev_norm_sq(&phi, 1.0, &eig).unwrap() - 2.0).abs() < 1e-15);
        let phi = KernelFunction::new(vec![0.3, -0.4]);
        assert!((sobolev_norm_sq(&phi, 0.0, &eig).unwrap() - phi.l2_norm_sq()).abs() < 1e-15);
        assert!(matches!(sobolev_norm_sq(&KernelFunction::zeros(3), 1.0, &eig), Err(SpectralError::Shape { .. })));
    }

    #[test]
    fn telescoped_norm_is_one() {
        let eig = poly_system(50, 1.0);
        let beta = 1.3;
        let c = normalized((1..=50).map(|i| (i as f64).sin()).collect());
        let phi = KernelFunction::new(c.iter().zip(eig.eigenvalues()).map(|(ci, l)| l.powf(beta / 2.0) * ci).collect());
        assert!((sobolev_norm_sq(&phi, beta, &eig).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_energy_examples() {
        let eig = poly_system(10, 1.0);
        let class = SobolevClass::new(1.0, 2.0).unwrap();
        let phi = sample_kernel(&class, &eig, KernelProfile::Boundary);
        assert!((tail_energy(&phi, 1).unwrap() - phi.l2_norm_sq()).abs() < 1e-15);
        assert!(tail_energy(&phi, 0).is_err());
        assert!(tail_energy(&phi, 11).is_err());

        let n = 4;
        let l = eig.eigenvalue(n).unwrap();
        let single = KernelFunction::single_mode(10, n, 2.0 * l.sqrt()).unwrap();
        assert!((tail_energy(&single, n).unwrap() - 4.0 * l).abs() < 1e-15);
    }

    #[test]
    fn boundary_profile_norm() {
        let k = 200;
        let eig = poly_system(k, 1.0);
        let class = SobolevClass::new(1.0, 3.0).unwrap();
        let phi = sample_kernel(&class, &eig, KernelProfile::Boundary);
        let partial: f64 = (1..=k).map(|i| 6.0 / (std::f64::consts::PI.powi(2) * (i * i) as f64)).sum();
        let norm = sobolev_norm_sq(&phi, 1.0, &eig).unwrap();
        assert!((norm - 9.0 * partial).abs() < 1e-12);
        assert!(norm <= 9.0);
    }

    #[test]
    fn zero_radius_gives_zero_kernel() {
        let eig = poly_system(8, 1.0);
        let class = SobolevClass::new(1.0, 0.0).unwrap();
        for p in [KernelProfile::Boundary, KernelProfile::default(), KernelProfile::Random { seed: 3 }] {
            assert!(sample_kernel(&class, &eig, p).coeffs.iter().all(|&c| c == 0.0));
        }
    }

    #[test]
    fn near_boundary_tail_ratio_decay() {
        // Tail of c_k^2 with c_k ~ k^{-1/2-delta}, normalized, summed directly.
        let k = 100;
        let delta = 0.05;
        let eig = poly_system(k, 1.0);
        let class = SobolevClass::new(1.0, 1.0).unwrap();
        let phi = sample_kernel(&class, &eig, KernelProfile::NearBoundary { delta });
        let raw: Vec<f64> = (1..=k).map(|i| (i as f64).powf(-1.0 - 2.0 * delta)).collect();
        let total: f64 = raw.iter().sum();
        for n in [2usize, 5, 10, 20] {
            let ratio = tail_energy(&phi, n).unwrap() / eig.eigenvalue(n).unwrap();
            let oracle: f64 =
                (n..=k).map(|i| raw[i - 1] * eig.eigenvalue(i).unwrap() / eig.eigenvalue(n).unwrap()).sum::<f64>()
                    / total;
            assert!((ratio - oracle).abs() < 1e-12 * oracle.max(1.0));
        }
        // Dominant behaviour: ratio at 2n against n for small n, ~ 2^{-0.1}.
        let r10 = tail_energy(&phi, 10).unwrap() / eig.eigenvalue(10).unwrap();
        let r20 = tail_energy(&phi, 20).unwrap() / eig.eigenvalue(20).unwrap();
        let empirical = (r20 / r10).log2();
        assert!(empirical < 0.0 && empirical > -0.6, "exponent {empirical}");
    }

    #[test]
    fn optimal_dimension_examples() {
        let d = SpectralDecay::polynomial(0.5, 1.0, 1.0).unwrap();
        let c = optimal_dimension(&d, 1.0, 8f64.sqrt(), 1.0, 1000, 512).unwrap();
        assert_eq!(c.n, 10);
        assert!(!c.below_regime);

        let e = SpectralDecay::exponential(1.0, 1.0, 1.0).unwrap();
        let c = optimal_dimension(&e, 1.0, 1.0, 1.0, 1_000_000, 512).unwrap();
        let c1 = 4.0 * std::f64::consts::E / (std::f64::consts::E - 1.0);
        let expected = (0.5 * (1e6 / c1).ln()).floor() as usize;
        assert_eq!(expected, 5);
        assert_eq!(c.n, expected);

        let tiny = optimal_dimension(&e, 1.0, 1.0, 1.0, 1, 512).unwrap();
        assert!(tiny.below_regime);
        assert_eq!(tiny.n, 1);

        let clamp = optimal_dimension(&d, 1.0, 100.0, 1.0, 1_000_000_000, 16).unwrap();
        assert_eq!(clamp.n, 16);
    }

    #[test]
    fn optimal_dimension_doubles() {
        let d = SpectralDecay::polynomial(1.0, 1.0, 1.0).unwrap();
        let (beta, r) = (1.0, 1.0);
        let m = 10_000;
        let scale = 2f64.powf(2.0 * beta * r + 2.0 * r + 1.0) as usize;
        let a = optimal_dimension(&d, beta, 3.0, 1.0, m, 10_000).unwrap();
        let b = optimal_dimension(&d, beta, 3.0, 1.0, m * scale, 10_000).unwrap();
        assert!((b.raw / a.raw - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exponent_examples() {
        let p = SpectralDecay::polynomial(1.0, 1.0, 1.0).unwrap();
        assert!((theoretical_exponent(&p, 1.0) - 0.4).abs() < 1e-15);
        for r in [0.3, 1.0, 4.0] {
            let e = SpectralDecay::exponential(r, 1.0, 1.0).unwrap();
            assert_eq!(theoretical_exponent(&e, 1.0), 0.5);
            assert!(theoretical_exponent(&e, 1e-9) < 1e-8);
        }
        assert!(theoretical_exponent(&p, 1e-9) < 1e-8);
    }

    #[test]
    fn fourier_pairs_order() {
        let e = EigenSystem::fourier_pairs(&[0.5, 0.1]).unwrap();
        assert_eq!(e.eigenvalues(), &[0.5, 0.5, 0.1, 0.1]);
        match e.basis() {
            Basis::Fourier(m) => {
                assert_eq!(m[0], FourierMode { freq: 1, trig: Trig::Cos });
                assert_eq!(m[1], FourierMode { freq: 1, trig: Trig::Sin });
                assert_eq!(m[2].freq, 2);
            }
            _ => unreachable!(),
        }
        assert!(e.orthonormality_defect() < 1e-12);
        assert!(EigenSystem::new(vec![0.1, 0.2], Basis::Fourier(vec![])).is_err());
        assert!(EigenSystem::fourier_pairs(&[0.5, 0.0]).is_err());
    }

    #[test]
    fn interpolation_matches_nodes() {
        let nodes = vec![0.25, 0.75];
        let vals = vec![1.0, 3.0];
        assert_eq!(interpolate(&nodes, &vals, 0.5), 2.0);
        assert_eq!(interpolate(&nodes, &vals, 0.0), 1.0);
        assert_eq!(interpolate(&nodes, &vals, 1.0), 3.0);
    }
}
