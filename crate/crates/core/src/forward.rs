//! Input ensembles, forward operators, Mercer kernels and normal-operator eigensystems.
//!
//! Every operator here factors as `g[u](x, s) = sum_j e_j(s) W_j[u](x)` with a
//! fixed family of s-features `e_j`. A kernel enters only through its moments
//! `F_j = int phi(s) e_j(s) ds`, and `R_phi[u] = sum_j F_j W_j[u]`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{
    Basis, DecayKind, EigenSystem, FourierMode, KernelFunction, SpectralDecay, SpectralError, TabulatedBasis, Trig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForwardError {
    #[error("model {model:?} cannot be paired with a {ensemble:?} ensemble")]
    Mismatch { model: ForwardModel, ensemble: EnsembleKind },
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("grid of {grid} points is too coarse for {modes} input modes (need >= {needed})")]
    Grid { grid: usize, modes: usize, needed: usize },
    #[error("requested {requested} eigenpairs, usable rank is {usable}")]
    Rank { requested: usize, usable: usize },
    #[error("kernel has {kernel} coefficients, eigensystem has {eig}")]
    Shape { kernel: usize, eig: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    GaussianFourier,
    RademacherFourier,
}

/// Built-in coefficient profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum EnsemblePreset {
    /// `sigma_k^2 = 4 / (2 pi k)^2`.
    Sobolev,
    /// `sigma_k^2 = 4 (2k)^{-2r}`.
    Poly { rate: f64 },
    /// `sigma_k^2 = 4 exp(-2 r k)`.
    Exp { rate: f64 },
    /// `a_n = amplitude n^{-3}` with Rademacher signs.
    Rademacher { amplitude: f64 },
}

/// Random Fourier-cosine inputs on the periodic unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEnsemble {
    pub kind: EnsembleKind,
    /// Variances `sigma_k^2` (Gaussian) or amplitudes `a_n` (Rademacher), index `k - 1`.
    pub scales: Vec<f64>,
    /// Untruncated `sum sigma_k^2` when known in closed form.
    pub full_sum: Option<f64>,
}

impl InputEnsemble {
    pub fn gaussian(variances: Vec<f64>) -> Result<Self, ForwardError> {
        if variances.is_empty() {
            return Err(ForwardError::InvalidEnsemble("no modes".into()));
        }
        if variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ForwardError::InvalidEnsemble("variances must be finite and >= 0".into()));
        }
        Ok(Self { kind: EnsembleKind::GaussianFourier, scales: variances, full_sum: None })
    }

    pub fn rademacher(amplitudes: Vec<f64>) -> Result<Self, ForwardError> {
        if amplitudes.is_empty() {
            return Err(ForwardError::InvalidEnsemble("no modes".into()));
        }
        if amplitudes.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ForwardError::InvalidEnsemble("amplitudes must be positive".into()));
        }
        let s: f64 = amplitudes.iter().enumerate().map(|(i, a)| (i + 1) as f64 * a).sum();
        if s >= 1.0 {
            return Err(ForwardError::InvalidEnsemble(format!("sum n a_n = {s} must be < 1")));
        }
        Ok(Self { kind: EnsembleKind::RademacherFourier, scales: amplitudes, full_sum: None })
    }

    pub fn from_preset(preset: EnsemblePreset, modes: usize) -> Result<Self, ForwardError> {
        if modes == 0 {
            return Err(ForwardError::InvalidEnsemble("no modes".into()));
        }
        let ks = 1..=modes;
        match preset {
            EnsemblePreset::Sobolev => {
                let mut e = Self::gaussian(ks.map(|k| 4.0 / (2.0 * PI * k as f64).powi(2)).collect())?;
                e.full_sum = Some(4.0 / (4.0 * PI * PI) * PI * PI / 6.0);
                Ok(e)
            }
            EnsemblePreset::Poly { rate } => {
                if !(rate > 0.25) {
                    return Err(ForwardError::InvalidEnsemble(format!("poly rate must be > 1/4, got {rate}")));
                }
                Self::gaussian(ks.map(|k| 4.0 * (2.0 * k as f64).powf(-2.0 * rate)).collect())
            }
            EnsemblePreset::Exp { rate } => {
                if !(rate > 0.0) {
                    return Err(ForwardError::InvalidEnsemble(format!("exp rate must be > 0, got {rate}")));
                }
                let mut e = Self::gaussian(ks.map(|k| 4.0 * (-2.0 * rate * k as f64).exp()).collect())?;
                let q = (-2.0 * rate).exp();
                e.full_sum = Some(4.0 * q / (1.0 - q));
                Ok(e)
            }
            EnsemblePreset::Rademacher { amplitude } => {
                Self::rademacher(ks.map(|n| amplitude * (n as f64).powi(-3)).collect())
            }
        }
    }

    pub fn modes(&self) -> usize {
        self.scales.len()
    }

    /// Envelope of the integral-model eigenvalues implied by a Gaussian preset.
    pub fn preset_decay(preset: EnsemblePreset) -> Option<SpectralDecay> {
        match preset {
            EnsemblePreset::Sobolev => {
                SpectralDecay::new(DecayKind::Polynomial, 1.0, 1.0 / (4.0 * PI * PI), 1.0 / (PI * PI)).ok()
            }
            EnsemblePreset::Poly { rate } => {
                SpectralDecay::new(DecayKind::Polynomial, rate, 2f64.powf(-2.0 * rate), 1.0).ok()
            }
            EnsemblePreset::Exp { rate } => SpectralDecay::new(DecayKind::Exponential, rate, (-rate).exp(), 1.0).ok(),
            EnsemblePreset::Rademacher { .. } => None,
        }
    }
}

/// One draw `u(x) = offset + sum_k coeffs[k-1] cos(2 pi k x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFunction {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl InputFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.offset
            + self.coeffs.iter().enumerate().map(|(i, c)| c * (2.0 * PI * (i + 1) as f64 * x).cos()).sum::<f64>()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        -self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let w = 2.0 * PI * (i + 1) as f64;
                c * w * (w * x).sin()
            })
            .sum::<f64>()
    }
}

pub fn sample_input<R: Rng + ?Sized>(ens: &InputEnsemble, rng: &mut R) -> InputFunction {
    match ens.kind {
        EnsembleKind::GaussianFourier => InputFunction {
            coeffs: ens.scales.iter().map(|v| v.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect(),
            offset: 0.0,
        },
        EnsembleKind::RademacherFourier => InputFunction {
            coeffs: ens.scales.iter().map(|a| if rng.random::<bool>() { *a } else { -*a }).collect(),
            offset: 1.0,
        },
    }
}

/// Output values on the midpoint grid `x_i = (i - 1/2) / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFunction {
    pub values: Vec<f64>,
    /// `(cos, sin)` coefficient pairs per frequency, integral model only.
    pub fourier: Option<Vec<(f64, f64)>>,
}

impl OutputFunction {
    /// Grid norm `sum f_i^2 / N`.
    pub fn norm_sq(&self) -> f64 {
        grid_inner(&self.values, &self.values)
    }

    /// Exact L2 norm from the Fourier representation.
    pub fn exact_norm_sq(&self) -> Option<f64> {
        self.fourier.as_ref().map(|c| c.iter().map(|(a, b)| 0.5 * (a * a + b * b)).sum())
    }
}

/// Cell-averaged inner product `sum a_i b_i / N`.
pub fn grid_inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

pub fn grid_points(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardModel {
    /// `g[u](x, s) = u(x - s)`.
    Integral,
    /// `g[u](x, s) = u(x + s) + u(x - s) - 2 u(x)`.
    Nonlocal,
    /// `g[u](x, s) = d/dx [u(x + s) u(x) - u(x - s) u(x)]`.
    Aggregation,
}

impl ForwardModel {
    pub fn check(&self, ens: &InputEnsemble) -> Result<(), ForwardError> {
        let ok = matches!(
            (self, ens.kind),
            (ForwardModel::Integral | ForwardModel::Nonlocal, EnsembleKind::GaussianFourier)
                | (ForwardModel::Aggregation, EnsembleKind::RademacherFourier)
        );
        if ok {
            Ok(())
        } else {
            Err(ForwardError::Mismatch { model: *self, ensemble: ens.kind })
        }
    }

    /// Literal closed-form `G(s, s')` truncated at the ensemble modes.
    pub fn mercer_kernel(&self, ens: &InputEnsemble, s: f64, t: f64) -> f64 {
        let c = |k: usize, x: f64| (2.0 * PI * k as f64 * x).cos();
        let sn = |k: usize, x: f64| (2.0 * PI * k as f64 * x).sin();
        match self {
            ForwardModel::Integral => ens.scales.iter().enumerate().map(|(i, v)| 0.5 * v * c(i + 1, s - t)).sum(),
            ForwardModel::Nonlocal => {
                ens.scales.iter().enumerate().map(|(i, v)| 2.0 * v * (c(i + 1, s) - 1.0) * (c(i + 1, t) - 1.0)).sum()
            }
            ForwardModel::Aggregation => {
                let a = &ens.scales;
                let mut g = 0.0;
                for (i, an) in a.iter().enumerate() {
                    let n = (i + 1) as f64;
                    let mut cross = 0.0;
                    let mut off = 0.0;
                    for (j, am) in a.iter().enumerate() {
                        if j == i {
                            continue;
                        }
                        let m = (j + 1) as f64;
                        cross += am * am * (n * n + m * m);
                        off += 8.0 * PI * PI * an * an * am * am * m * n * sn(j + 1, t);
                    }
                    let diag = 8.0 * PI * PI * n * n * an * an
                        + 8.0 * PI * PI * n * n * an.powi(4)
                        + 4.0 * PI * PI * an * an * cross;
                    g += diag * sn(i + 1, s) * sn(i + 1, t) + sn(i + 1, s) * off;
                }
                g
            }
        }
    }
}

/// Per-sample feature functions `W_j[u]` on the grid.
#[derive(Debug, Clone)]
pub enum PreparedInput {
    /// `W_j = weights[j] * table_row(j)`.
    Scaled(Vec<f64>),
    /// Explicit rows `W_j(x_i)`.
    Rows(Vec<Vec<f64>>),
}

/// Forward model, ensemble and grid with precomputed trigonometric tables.
#[derive(Debug, Clone)]
pub struct ForwardContext {
    model: ForwardModel,
    ensemble: InputEnsemble,
    n: usize,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
    density_norm: f64,
}

impl ForwardContext {
    pub fn new(model: ForwardModel, ensemble: InputEnsemble, n: usize) -> Result<Self, ForwardError> {
        model.check(&ensemble)?;
        let ku = ensemble.modes();
        let needed = 8 * ku;
        if n < needed {
            return Err(ForwardError::Grid { grid: n, modes: ku, needed });
        }
        let x = grid_points(n);
        let table = |f: fn(f64) -> f64| -> Vec<Vec<f64>> {
            (1..=ku).map(|k| x.iter().map(|&xi| f(2.0 * PI * k as f64 * xi)).collect()).collect()
        };
        let cos = table(f64::cos);
        let sin = table(f64::sin);
        let mut ctx = Self { model, ensemble, n, cos, sin, density_norm: 1.0 };
        if model != ForwardModel::Integral {
            let q = (8 * ku).max(64);
            ctx.density_norm =
                grid_points(q).iter().map(|&s| ctx.model.mercer_kernel(&ctx.ensemble, s, s)).sum::<f64>() / q as f64;
        }
        Ok(ctx)
    }

    pub fn model(&self) -> ForwardModel {
        self.model
    }

    pub fn ensemble(&self) -> &InputEnsemble {
        &self.ensemble
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    /// Number of s-features.
    pub fn feature_count(&self) -> usize {
        match self.model {
            ForwardModel::Integral => 2 * self.ensemble.modes(),
            _ => self.ensemble.modes(),
        }
    }

    /// `e_j(s)` for 0-based feature index `j`.
    pub fn feature(&self, j: usize, s: f64) -> f64 {
        match self.model {
            ForwardModel::Integral => {
                let w = 2.0 * PI * (j / 2 + 1) as f64 * s;
                if j.is_multiple_of(2) {
                    w.cos()
                } else {
                    w.sin()
                }
            }
            ForwardModel::Nonlocal => (2.0 * PI * (j + 1) as f64 * s).cos() - 1.0,
            ForwardModel::Aggregation => (2.0 * PI * (j + 1) as f64 * s).sin(),
        }
    }

    /// Covariance `H_{jl} = E <W_j, W_l>` so that `G(s, s') = e(s)^T H e(s')`.
    pub fn feature_covariance(&self) -> DMatrix<f64> {
        let j = self.feature_count();
        let v = &self.ensemble.scales;
        match self.model {
            ForwardModel::Integral => DMatrix::from_fn(j, j, |r, c| if r == c { 0.5 * v[r / 2] } else { 0.0 }),
            ForwardModel::Nonlocal => DMatrix::from_fn(j, j, |r, c| if r == c { 2.0 * v[r] } else { 0.0 }),
            ForwardModel::Aggregation => {
                let p2 = PI * PI;
                let total_sq: Vec<f64> = v.iter().map(|a| a * a).collect();
                DMatrix::from_fn(j, j, |r, c| {
                    let (n, m) = ((r + 1) as f64, (c + 1) as f64);
                    if r == c {
                        let cross: f64 = total_sq
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| *i != r)
                            .map(|(i, am2)| am2 * (n * n + ((i + 1) as f64).powi(2)))
                            .sum();
                        8.0 * p2 * n * n * total_sq[r] * (1.0 + total_sq[r]) + 4.0 * p2 * total_sq[r] * cross
                    } else {
                        8.0 * p2 * total_sq[r] * total_sq[c] * n * m
                    }
                })
            }
        }
    }

    /// Exploration density `G(s, s) / Z`.
    pub fn exploration_density(&self, s: f64) -> f64 {
        match self.model {
            ForwardModel::Integral => 1.0,
            _ => self.model.mercer_kernel(&self.ensemble, s, s) / self.density_norm,
        }
    }

    pub fn mercer_kernel(&self, s: f64, t: f64) -> f64 {
        self.model.mercer_kernel(&self.ensemble, s, t)
    }

    /// Moments `F_j` of a kernel given in the eigenbasis.
    pub fn kernel_moments(&self, eig: &EigenSystem, phi: &KernelFunction) -> Result<Vec<f64>, ForwardError> {
        if phi.len() != eig.len() {
            return Err(ForwardError::Shape { kernel: phi.len(), eig: eig.len() });
        }
        let mut f = vec![0.0; self.feature_count()];
        match eig.basis() {
            Basis::Fourier(modes) => {
                for (theta, mode) in phi.coeffs.iter().zip(modes) {
                    if *theta != 0.0 {
                        if let Some(j) = self.fourier_feature(mode) {
                            f[j] += theta / SQRT_2;
                        }
                    }
                }
            }
            Basis::Tabulated(t) => {
                let q = t.nodes.len();
                let mut values = vec![0.0; q];
                for (theta, row) in phi.coeffs.iter().zip(&t.values) {
                    if *theta != 0.0 {
                        values.iter_mut().zip(row).for_each(|(v, p)| *v += theta * p);
                    }
                }
                for (j, fj) in f.iter_mut().enumerate() {
                    *fj = (0..q).map(|i| t.weights[i] * values[i] * self.feature(j, t.nodes[i])).sum();
                }
            }
        }
        Ok(f)
    }

    /// Moments of each basis function `psi_1..psi_n`.
    pub fn basis_moments(&self, eig: &EigenSystem, n: usize) -> Result<Vec<Vec<f64>>, ForwardError> {
        (1..=n).map(|k| self.kernel_moments(eig, &KernelFunction::single_mode(eig.len(), k, 1.0)?)).collect()
    }

    /// Feature with a nonzero moment against an analytic Fourier mode, moment `1/sqrt 2`.
    fn fourier_feature(&self, mode: &FourierMode) -> Option<usize> {
        if mode.freq == 0 || mode.freq > self.ensemble.modes() {
            return None;
        }
        let k = mode.freq - 1;
        match (self.model, mode.trig) {
            (ForwardModel::Integral, Trig::Cos) => Some(2 * k),
            (ForwardModel::Integral, Trig::Sin) => Some(2 * k + 1),
            (ForwardModel::Nonlocal, Trig::Cos) => Some(k),
            (ForwardModel::Aggregation, Trig::Sin) => Some(k),
            _ => None,
        }
    }

    pub fn prepare(&self, u: &InputFunction) -> PreparedInput {
        match self.model {
            ForwardModel::Integral => PreparedInput::Scaled(u.coeffs.iter().flat_map(|&c| [c, c]).collect()),
            ForwardModel::Nonlocal => PreparedInput::Scaled(u.coeffs.iter().map(|c| 2.0 * c).collect()),
            ForwardModel::Aggregation => {
                let mut uval = vec![u.offset; self.n];
                let mut uder = vec![0.0; self.n];
                for (k, c) in u.coeffs.iter().enumerate() {
                    let w = 2.0 * PI * (k + 1) as f64;
                    for i in 0..self.n {
                        uval[i] += c * self.cos[k][i];
                        uder[i] -= c * w * self.sin[k][i];
                    }
                }
                let rows = u
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let w = 2.0 * PI * (k + 1) as f64;
                        (0..self.n)
                            .map(|i| -2.0 * c * (w * self.cos[k][i] * uval[i] + self.sin[k][i] * uder[i]))
                            .collect()
                    })
                    .collect();
                PreparedInput::Rows(rows)
            }
        }
    }

    fn table_row(&self, j: usize) -> &[f64] {
        match self.model {
            ForwardModel::Integral if j % 2 == 1 => &self.sin[j / 2],
            ForwardModel::Integral => &self.cos[j / 2],
            _ => &self.cos[j],
        }
    }

    /// Adds `sum_j F_j W_j` to `out`.
    pub fn apply_prepared(&self, prep: &PreparedInput, moments: &[f64], out: &mut [f64]) {
        match prep {
            PreparedInput::Scaled(w) => {
                for (j, (f, wj)) in moments.iter().zip(w).enumerate() {
                    let c = f * wj;
                    if c != 0.0 {
                        out.iter_mut().zip(self.table_row(j)).for_each(|(o, t)| *o += c * t);
                    }
                }
            }
            PreparedInput::Rows(rows) => {
                for (f, row) in moments.iter().zip(rows) {
                    if *f != 0.0 {
                        out.iter_mut().zip(row).for_each(|(o, t)| *o += f * t);
                    }
                }
            }
        }
    }

    pub fn respond(&self, prep: &PreparedInput, moments: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_prepared(prep, moments, &mut out);
        out
    }

    /// `R_phi[u]` on the grid, with the exact Fourier form for the integral model.
    pub fn apply_forward(
        &self,
        eig: &EigenSystem,
        phi: &KernelFunction,
        u: &InputFunction,
    ) -> Result<OutputFunction, ForwardError> {
        let f = self.kernel_moments(eig, phi)?;
        let values = self.respond(&self.prepare(u), &f);
        let fourier = (self.model == ForwardModel::Integral)
            .then(|| u.coeffs.iter().enumerate().map(|(k, x)| (x * f[2 * k], x * f[2 * k + 1])).collect());
        Ok(OutputFunction { values, fourier })
    }

    /// Eigensystem of the normal operator with `k` pairs. Integral models are analytic,
    /// others use a density-weighted Nystrom discretization on `quad_nodes` midpoints.
    pub fn eigendecompose(&self, k: usize, quad_nodes: usize) -> Result<EigenSystem, ForwardError> {
        if self.model == ForwardModel::Integral {
            return self.analytic_system(k);
        }
        let q = quad_nodes.max(1);
        let nodes = grid_points(q);
        let w = 1.0 / q as f64;
        let density: Vec<f64> = nodes.iter().map(|&s| self.exploration_density(s)).collect();
        let h = self.feature_covariance();
        let e = DMatrix::from_fn(self.feature_count(), q, |j, i| self.feature(j, nodes[i]));
        let g = e.transpose() * &h * &e;
        let scale: Vec<f64> = density.iter().map(|d| (w / d).sqrt()).collect();
        let mut b = DMatrix::from_fn(q, q, |i, j| g[(i, j)] * scale[i] * scale[j]);
        b = (&b + b.transpose()) * 0.5;
        let se = SymmetricEigen::new(b);
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by(|&i, &j| se.eigenvalues[j].total_cmp(&se.eigenvalues[i]));
        let usable = order.iter().take_while(|&&i| se.eigenvalues[i] > 1e-12).count();
        if k == 0 || k > usable {
            return Err(ForwardError::Rank { requested: k, usable });
        }
        let mut lambdas = Vec::with_capacity(k);
        let mut values = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            lambdas.push(se.eigenvalues[i]);
            let col = se.eigenvectors.column(i);
            let sign = if col.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            let mut v: Vec<f64> = (0..q).map(|r| sign * col[r] / (w * density[r]).sqrt()).collect();
            let norm: f64 = v.iter().zip(&density).map(|(p, d)| w * d * p * p).sum::<f64>().sqrt();
            v.iter_mut().for_each(|p| *p /= norm);
            values.push(v);
        }
        let basis = TabulatedBasis { nodes, weights: vec![w; q], density, values };
        Ok(EigenSystem::new(lambdas, Basis::Tabulated(basis))?)
    }

    fn analytic_system(&self, k: usize) -> Result<EigenSystem, ForwardError> {
        let mut pairs: Vec<(f64, FourierMode)> = Vec::new();
        for (i, v) in self.ensemble.scales.iter().enumerate() {
            if *v > 0.0 {
                for trig in [Trig::Cos, Trig::Sin] {
                    pairs.push((v / 4.0, FourierMode { freq: i + 1, trig }));
                }
            }
        }
        // Stable sort keeps cosine before sine and lower frequency first on ties.
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        if k == 0 || k > pairs.len() {
            return Err(ForwardError::Rank { requested: k, usable: pairs.len() });
        }
        pairs.truncate(k);
        let (l, m): (Vec<f64>, Vec<FourierMode>) = pairs.into_iter().unzip();
        Ok(EigenSystem::new(l, Basis::Fourier(m))?)
    }

    /// `<L psi_k, psi_k>` by quadrature of the Mercer kernel on the basis nodes.
    pub fn rayleigh_quotient(&self, eig: &EigenSystem, k: usize) -> Result<f64, ForwardError> {
        eig.eigenvalue(k)?;
        let (nodes, values, weights): (Vec<f64>, Vec<f64>, Vec<f64>) = match eig.basis() {
            Basis::Tabulated(t) => (t.nodes.clone(), t.values[k - 1].clone(), t.weights.clone()),
            Basis::Fourier(_) => {
                let q = (8 * self.ensemble.modes()).max(64);
                let nodes = grid_points(q);
                let values = nodes.iter().map(|&s| eig.eval(k, s)).collect::<Result<_, _>>()?;
                (nodes, values, vec![1.0 / q as f64; q])
            }
        };
        let q = nodes.len();
        let mut acc = 0.0;
        for i in 0..q {
            for j in 0..q {
                acc += weights[i] * weights[j] * values[i] * values[j] * self.mercer_kernel(nodes[i], nodes[j]);
            }
        }
        Ok(acc)
    }
}

pub fn eigendecompose_normal(
    model: ForwardModel,
    ens: &InputEnsemble,
    k: usize,
    quad_nodes: usize,
) -> Result<EigenSystem, ForwardError> {
    let n = (8 * ens.modes()).max(64);
    ForwardContext::new(model, ens.clone(), n)?.eigendecompose(k, quad_nodes)
}
