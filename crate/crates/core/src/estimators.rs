//! Normal-system assembly, tamed least squares and baseline solvers.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{grid_inner, sample_input, ForwardContext, ForwardError, InputFunction, PreparedInput};
use crate::noise::NoiseModel;
use crate::par;
use crate::rng;
use crate::spectral::{DecayKind, EigenSystem, KernelFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("dimension {n} exceeds truncation {k}")]
    Dimension { n: usize, k: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("sample {index} has {got} grid values, expected {expected}")]
    Grid { index: usize, got: usize, expected: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("dataset has no true kernel")]
    NoTruth,
    #[error(transparent)]
    Forward(#[from] ForwardError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: InputFunction,
    /// Observed values `f(x_i) = R[u](x_i) + N eps_i`.
    pub output: Vec<f64>,
}

/// Input/output pairs sharing one grid, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub true_kernel: Option<KernelFunction>,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn check(&self, ctx: &ForwardContext) -> Result<(), EstimateError> {
        if self.samples.is_empty() {
            return Err(EstimateError::Empty);
        }
        let n = ctx.grid_size();
        for (i, s) in self.samples.iter().enumerate() {
            if s.output.len() != n {
                return Err(EstimateError::Grid { index: i, got: s.output.len(), expected: n });
            }
        }
        Ok(())
    }
}

/// One observation for a kernel with precomputed moments.
pub fn simulate_sample<R: Rng + ?Sized>(
    ctx: &ForwardContext,
    moments: &[f64],
    noise: &NoiseModel,
    rng: &mut R,
) -> (Sample, PreparedInput) {
    let input = sample_input(ctx.ensemble(), rng);
    let prep = ctx.prepare(&input);
    let mut output = ctx.respond(&prep, moments);
    if !noise.is_silent() {
        let cells = noise.sample_cells(output.len(), rng);
        let n = output.len() as f64;
        for (o, e) in output.iter_mut().zip(cells) {
            *o += n * e;
        }
    }
    (Sample { input, output }, prep)
}

/// `m` observations, sample `i` drawn from the substream `(seed, i)`.
pub fn simulate_dataset(
    ctx: &ForwardContext,
    eig: &EigenSystem,
    phi: &KernelFunction,
    noise: NoiseModel,
    m: usize,
    seed: u64,
) -> Result<Dataset, EstimateError> {
    let moments = ctx.kernel_moments(eig, phi)?;
    let samples = par::map_range(m, |i| {
        let mut r = rng::substream(seed, &[i as u64]);
        simulate_sample(ctx, &moments, &noise, &mut r).0
    });
    Ok(Dataset { samples, true_kernel: Some(phi.clone()), noise, seed })
}

/// Empirical normal matrix `A` and vector `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub m: usize,
}

impl NormalSystem {
    pub fn n(&self) -> usize {
        self.b.len()
    }
}

/// Running sums of `<R psi_k, R psi_l>` and `<f, R psi_k>`.
#[derive(Debug, Clone)]
pub struct NormalAccumulator {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    count: usize,
}

impl NormalAccumulator {
    pub fn new(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n], b: vec![0.0; n], count: 0 }
    }

    /// Adds one sample from its basis responses and (optionally) its output.
    pub fn add(&mut self, responses: &[Vec<f64>], output: Option<&[f64]>) {
        for k in 0..self.n {
            for l in 0..=k {
                self.a[k * self.n + l] += grid_inner(&responses[k], &responses[l]);
            }
            if let Some(f) = output {
                self.b[k] += grid_inner(f, &responses[k]);
            }
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.a.iter_mut().zip(&other.a).for_each(|(x, y)| *x += y);
        self.b.iter_mut().zip(&other.b).for_each(|(x, y)| *x += y);
        self.count += other.count;
    }

    pub fn finish(&self) -> NormalSystem {
        let n = self.n;
        let m = self.count.max(1) as f64;
        let a = DMatrix::from_fn(n, n, |k, l| {
            let (i, j) = if k >= l { (k, l) } else { (l, k) };
            self.a[i * n + j] / m
        });
        NormalSystem { a, b: DVector::from_iterator(n, self.b.iter().map(|v| v / m)), m: self.count }
    }
}

/// Basis responses `R_{psi_k}[u]` for `k = 1..n`.
pub fn basis_responses(ctx: &ForwardContext, prep: &PreparedInput, moments: &[Vec<f64>]) -> Vec<Vec<f64>> {
    moments.iter().map(|m| ctx.respond(prep, m)).collect()
}

const CHUNK: usize = 64;

pub fn assemble_normal_system(
    ctx: &ForwardContext,
    data: &Dataset,
    eig: &EigenSystem,
    n: usize,
) -> Result<NormalSystem, EstimateError> {
    if n == 0 || n > eig.len() {
        return Err(EstimateError::Dimension { n, k: eig.len() });
    }
    data.check(ctx)?;
    let moments = ctx.basis_moments(eig, n)?;
    let chunks = data.samples.len().div_ceil(CHUNK);
    let parts = par::map_range(chunks, |c| {
        let mut acc = NormalAccumulator::new(n);
        for s in data.samples.iter().skip(c * CHUNK).take(CHUNK) {
            let resp = basis_responses(ctx, &ctx.prepare(&s.input), &moments);
            acc.add(&resp, Some(&s.output));
        }
        acc
    });
    let mut total = NormalAccumulator::new(n);
    for p in &parts {
        total.merge(p);
    }
    Ok(total.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tlse,
    Pinv,
    Tsvd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub coeffs: Vec<f64>,
    pub cutoff: bool,
    pub method: Method,
    pub min_eigenvalue: f64,
    /// Eigenvalues of `A`, descending.
    pub eigenvalues: Vec<f64>,
}

fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let se = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| se.eigenvalues[j].total_cmp(&se.eigenvalues[i]));
    let vals = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| se.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Whether the well-conditioning event holds for the decay regime.
pub fn event_holds(eigenvalues_desc: &[f64], lambdas: &[f64], kind: DecayKind) -> bool {
    let n = eigenvalues_desc.len();
    match kind {
        DecayKind::Polynomial => eigenvalues_desc[n - 1] > lambdas[n - 1] / 4.0,
        DecayKind::Exponential => eigenvalues_desc.iter().zip(lambdas).all(|(mu, l)| *mu > l / 4.0),
    }
}

pub fn tlse_solve(sys: &NormalSystem, lambdas: &[f64], kind: DecayKind) -> Result<EstimateResult, EstimateError> {
    let n = sys.n();
    if lambdas.len() < n {
        return Err(EstimateError::Dimension { n, k: lambdas.len() });
    }
    let (vals, _) = sorted_eigen(&sys.a);
    let min = vals[n - 1];
    if !event_holds(&vals, &lambdas[..n], kind) {
        return Ok(EstimateResult {
            coeffs: vec![0.0; n],
            cutoff: true,
            method: Method::Tlse,
            min_eigenvalue: min,
            eigenvalues: vals,
        });
    }
    let chol = Cholesky::new(sys.a.clone())
        .ok_or_else(|| EstimateError::Numeric("Cholesky failed on a well-conditioned system".into()))?;
    let theta = chol.solve(&sys.b);
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(EstimateError::Numeric("non-finite solution".into()));
    }
    Ok(EstimateResult {
        coeffs: theta.iter().copied().collect(),
        cutoff: false,
        method: Method::Tlse,
        min_eigenvalue: min,
        eigenvalues: vals,
    })
}

fn spectral_solve(sys: &NormalSystem, threshold: f64, method: Method) -> EstimateResult {
    let n = sys.n();
    let (vals, vecs) = sorted_eigen(&sys.a);
    let mut theta = DVector::zeros(n);
    for (i, mu) in vals.iter().enumerate() {
        if *mu > threshold {
            let v = vecs.column(i);
            theta += v * (v.dot(&sys.b) / mu);
        }
    }
    EstimateResult {
        coeffs: theta.iter().copied().collect(),
        cutoff: false,
        method,
        min_eigenvalue: vals[n - 1],
        eigenvalues: vals,
    }
}

/// Moore-Penrose solution, eigenvalues below `1e-12 lambda_max(A)` dropped.
pub fn lse_pinv_solve(sys: &NormalSystem) -> EstimateResult {
    let max = sys.a.clone().symmetric_eigenvalues().max().max(0.0);
    spectral_solve(sys, 1e-12 * max, Method::Pinv)
}

/// Inverts only eigencomponents of `A` above `threshold`.
pub fn tsvd_solve(sys: &NormalSystem, threshold: f64) -> EstimateResult {
    spectral_solve(sys, threshold, Method::Tsvd)
}

/// `(1/M) sum (||R_phi[u]||^2 - 2 <f, R_phi[u]>)` evaluated on the grid.
pub fn empirical_loss(
    ctx: &ForwardContext,
    phi: &KernelFunction,
    data: &Dataset,
    eig: &EigenSystem,
) -> Result<f64, EstimateError> {
    data.check(ctx)?;
    let mut full = phi.coeffs.clone();
    full.resize(eig.len(), 0.0);
    let moments = ctx.kernel_moments(eig, &KernelFunction::new(full))?;
    let total: f64 = data
        .samples
        .iter()
        .map(|s| {
            let r = ctx.respond(&ctx.prepare(&s.input), &moments);
            grid_inner(&r, &r) - 2.0 * grid_inner(&s.output, &r)
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// `theta^T A theta - 2 b^T theta`.
pub fn quadratic_loss(sys: &NormalSystem, theta: &[f64]) -> f64 {
    let t = DVector::from_column_slice(theta);
    t.dot(&(&sys.a * &t)) - 2.0 * sys.b.dot(&t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorParts {
    pub variance: f64,
    pub bias: f64,
    pub total: f64,
}

pub fn estimation_error(coeffs: &[f64], truth: &KernelFunction, n: usize) -> ErrorParts {
    let variance: f64 = (0..n)
        .map(|k| {
            let t = truth.coeffs.get(k).copied().unwrap_or(0.0);
            let e = coeffs.get(k).copied().unwrap_or(0.0);
            (e - t).powi(2)
        })
        .sum();
    let bias: f64 = truth.coeffs.iter().skip(n).map(|t| t * t).sum();
    ErrorParts { variance, bias, total: variance + bias }
}

/// Tail-leakage vector `c` and noise vector `d` with `b = A theta_n + c + d`.
pub fn decompose_normal_vector(
    ctx: &ForwardContext,
    data: &Dataset,
    eig: &EigenSystem,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>), EstimateError> {
    let truth = data.true_kernel.as_ref().ok_or(EstimateError::NoTruth)?;
    if n == 0 || n > eig.len() {
        return Err(EstimateError::Dimension { n, k: eig.len() });
    }
    data.check(ctx)?;
    let basis = ctx.basis_moments(eig, n)?;
    let full = ctx.kernel_moments(eig, truth)?;
    let tail = ctx.kernel_moments(eig, &truth.tail(n))?;
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for s in &data.samples {
        let prep = ctx.prepare(&s.input);
        let resp = basis_responses(ctx, &prep, &basis);
        let r_tail = ctx.respond(&prep, &tail);
        let r_full = ctx.respond(&prep, &full);
        let resid: Vec<f64> = s.output.iter().zip(&r_full).map(|(f, r)| f - r).collect();
        for k in 0..n {
            c[k] += grid_inner(&r_tail, &resp[k]);
            d[k] += grid_inner(&resid, &resp[k]);
        }
    }
    let m = data.len() as f64;
    c.iter_mut().chain(d.iter_mut()).for_each(|v| *v /= m);
    Ok((c, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{EnsemblePreset, ForwardModel, InputEnsemble};

    fn integral_ctx(modes: usize, grid: usize) -> (ForwardContext, EigenSystem) {
        let ens = InputEnsemble::from_preset(EnsemblePreset::Poly { rate: 1.0 }, modes).unwrap();
        let ctx = ForwardContext::new(ForwardModel::Integral, ens, grid).unwrap();
        let eig = ctx.eigendecompose(2 * modes, 0).unwrap();
        (ctx, eig)
    }

    fn diag_system(d: &[f64], b: &[f64]) -> NormalSystem {
        NormalSystem {
            a: DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            b: DVector::from_column_slice(b),
            m: 1,
        }
    }

    #[test]
    fn zero_kernel_noise_off_gives_zero_b() {
        let (ctx, eig) = integral_ctx(4, 64);
        let data =
            simulate_dataset(&ctx, &eig, &KernelFunction::zeros(8), NoiseModel::GaussianWhite { sigma: 0.0 }, 1, 1)
                .unwrap();
        let sys = assemble_normal_system(&ctx, &data, &eig, 4).unwrap();
        assert!(sys.b.iter().all(|&v| v == 0.0));
        assert!(matches!(assemble_normal_system(&ctx, &data, &eig, 9), Err(EstimateError::Dimension { .. })));
    }

    #[test]
    fn normal_matrix_symmetric_psd() {
        let (ctx, eig) = integral_ctx(8, 128);
        let phi = KernelFunction::new((1..=16).map(|k| 1.0 / k as f64).collect());
        let data = simulate_dataset(&ctx, &eig, &phi, NoiseModel::GaussianWhite { sigma: 1.0 }, 7, 3).unwrap();
        let sys = assemble_normal_system(&ctx, &data, &eig, 10).unwrap();
        assert_eq!(sys.a, sys.a.transpose());
        assert!(sys.a.clone().symmetric_eigenvalues().min() > -1e-10);
    }

    #[test]
    fn normal_matrix_large_sample_limit() {
        let (ctx, eig) = integral_ctx(8, 128);
        let data = simulate_dataset(
            &ctx,
            &eig,
            &KernelFunction::zeros(16),
            NoiseModel::GaussianWhite { sigma: 0.0 },
            10_000,
            5,
        )
        .unwrap();
        let sys = assemble_normal_system(&ctx, &data, &eig, 8).unwrap();
        let l1 = eig.eigenvalues()[0];
        for k in 0..8 {
            assert!((sys.a[(k, k)] - eig.eigenvalues()[k]).abs() <= 5.0 * l1 / 100.0);
        }
    }

    #[test]
    fn tlse_diagonal_exact() {
        let l = [1.0, 0.5, 0.25];
        let t = [0.3, -2.0, 0.7];
        let b: Vec<f64> = l.iter().zip(&t).map(|(a, b)| a * b).collect();
        let r = tlse_solve(&diag_system(&l, &b), &l, DecayKind::Polynomial).unwrap();
        assert!(!r.cutoff);
        for (x, y) in r.coeffs.iter().zip(&t) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn tlse_cutoff_rules() {
        let l = [1.0, 0.5, 0.25];
        let sys = diag_system(&[1.0, 0.5, 0.25 / 8.0], &[1.0, 1.0, 1.0]);
        let r = tlse_solve(&sys, &l, DecayKind::Polynomial).unwrap();
        assert!(r.cutoff);
        assert!(r.coeffs.iter().all(|&c| c == 0.0));
        // Exponential rule compares index by index: second eigenvalue fails.
        let sys = diag_system(&[1.0, 0.1, 0.2], &[1.0, 1.0, 1.0]);
        assert!(!tlse_solve(&sys, &[1.0, 0.3, 0.1], DecayKind::Polynomial).unwrap().cutoff);
        assert!(tlse_solve(&sys, &[1.0, 0.9, 0.1], DecayKind::Exponential).unwrap().cutoff);
    }

    #[test]
    fn pinv_and_tsvd() {
        let l = [1.0, 0.5];
        let b = [0.4, 0.2];
        let sys = diag_system(&l, &b);
        let p = lse_pinv_solve(&sys);
        let t = tlse_solve(&sys, &l, DecayKind::Polynomial).unwrap();
        for (x, y) in p.coeffs.iter().zip(&t.coeffs) {
            assert!((x - y).abs() < 1e-14);
        }
        let s = tsvd_solve(&sys, 0.1);
        assert_eq!(s.coeffs, p.coeffs);
        assert!(tsvd_solve(&sys, 2.0).coeffs.iter().all(|&c| c == 0.0));
        let s = tsvd_solve(&diag_system(&[1.0, 1e-13], &[1.0, 1e-13]), 1e-6);
        assert_eq!(s.coeffs, vec![1.0, 0.0]);
        assert!(lse_pinv_solve(&diag_system(&l, &[0.0, 0.0])).coeffs.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn pinv_rank_deficient_minimum_norm() {
        // Rank-one matrix from a single duplicated direction.
        let v = DVector::from_column_slice(&[1.0, 2.0, 2.0]);
        let a = &v * v.transpose();
        let b = DVector::from_column_slice(&[3.0, 6.0, 6.0]);
        let sys = NormalSystem { a: a.clone(), b: b.clone(), m: 1 };
        let p = lse_pinv_solve(&sys);
        let theta = DVector::from_column_slice(&p.coeffs);
        // Minimum-norm solution lies along v: theta = v / 3.
        for (x, y) in theta.iter().zip((&v / 3.0).iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let grad = a.transpose() * (&a * &theta - &b);
        assert!(grad.norm() < 1e-10);
    }

    #[test]
    fn noiseless_in_span_recovery() {
        let (ctx, eig) = integral_ctx(8, 128);
        let mut phi = KernelFunction::zeros(16);
        phi.coeffs[..6].copy_from_slice(&[0.5, -0.3, 0.2, 0.1, -0.05, 0.02]);
        let data = simulate_dataset(&ctx, &eig, &phi, NoiseModel::GaussianWhite { sigma: 0.0 }, 64, 9).unwrap();
        let sys = assemble_normal_system(&ctx, &data, &eig, 6).unwrap();
        let r = tlse_solve(&sys, eig.eigenvalues(), DecayKind::Polynomial).unwrap();
        assert!(!r.cutoff);
        let e = estimation_error(&r.coeffs, &phi, 6);
        assert!(e.variance.sqrt() <= 1e-8, "{:?}", e);
        let (c, d) = decompose_normal_vector(&ctx, &data, &eig, 6).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-14));
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decomposition_identity_with_noise_and_tail() {
        for (model, preset) in [
            (ForwardModel::Integral, EnsemblePreset::Sobolev),
            (ForwardModel::Nonlocal, EnsemblePreset::Sobolev),
            (ForwardModel::Aggregation, EnsemblePreset::Rademacher { amplitude: 0.3 }),
        ] {
            let ens = InputEnsemble::from_preset(preset, 4).unwrap();
            let ctx = ForwardContext::new(model, ens, 64).unwrap();
            let eig = ctx.eigendecompose(4, 64).unwrap();
            let phi = KernelFunction::new(vec![0.4, -0.3, 0.2, 0.1]);
            let data = simulate_dataset(&ctx, &eig, &phi, NoiseModel::GaussianWhite { sigma: 0.5 }, 40, 2).unwrap();
            let n = 2;
            let sys = assemble_normal_system(&ctx, &data, &eig, n).unwrap();
            let (c, d) = decompose_normal_vector(&ctx, &data, &eig, n).unwrap();
            let head = DVector::from_column_slice(&phi.coeffs[..n]);
            let at = &sys.a * head;
            for k in 0..n {
                assert!((sys.b[k] - at[k] - c[k] - d[k]).abs() < 1e-10, "{model:?}");
            }
        }
    }

    #[test]
    fn loss_identity_and_minimality() {
        let (ctx, eig) = integral_ctx(6, 64);
        let phi = KernelFunction::new((1..=12).map(|k| 0.5 / k as f64).collect());
        let data = simulate_dataset(&ctx, &eig, &phi, NoiseModel::GaussianWhite { sigma: 1.0 }, 50, 4).unwrap();
        let n = 4;
        let sys = assemble_normal_system(&ctx, &data, &eig, n).unwrap();
        assert_eq!(empirical_loss(&ctx, &KernelFunction::zeros(n), &data, &eig).unwrap(), 0.0);
        let theta = [0.1, -0.2, 0.3, 0.05];
        let direct = empirical_loss(&ctx, &KernelFunction::new(theta.to_vec()), &data, &eig).unwrap();
        assert!((direct - quadratic_loss(&sys, &theta)).abs() < 1e-10);
        let r = tlse_solve(&sys, eig.eigenvalues(), DecayKind::Polynomial).unwrap();
        assert!(!r.cutoff);
        let best = quadratic_loss(&sys, &r.coeffs);
        let mut g = rng::substream(1, &[]);
        for _ in 0..50 {
            let p: Vec<f64> = r.coeffs.iter().map(|c| c + 0.01 * (g.random::<f64>() - 0.5)).collect();
            assert!(best <= quadratic_loss(&sys, &p));
        }
    }

    #[test]
    fn error_parts() {
        let truth = KernelFunction::new(vec![1.0, 2.0, 3.0]);
        let e = estimation_error(&[1.0, 2.0], &truth, 2);
        assert_eq!(e, ErrorParts { variance: 0.0, bias: 9.0, total: 9.0 });
        let e = estimation_error(&[0.0, 0.0], &truth, 2);
        assert_eq!(e.variance, 5.0);
    }

    #[test]
    fn noise_vector_scales_inverse_m() {
        let (ctx, eig) = integral_ctx(4, 64);
        let phi = KernelFunction::zeros(8);
        let noise = NoiseModel::GaussianWhite { sigma: 1.0 };
        let reps = 200;
        let mean_sq = |m: usize| -> f64 {
            (0..reps)
                .map(|r| {
                    let data = simulate_dataset(&ctx, &eig, &phi, noise, m, 1000 + r as u64 * 7 + m as u64).unwrap();
                    let (_, d) = decompose_normal_vector(&ctx, &data, &eig, 4).unwrap();
                    d.iter().map(|v| v * v).sum::<f64>()
                })
                .sum::<f64>()
                / reps as f64
        };
        let ratio = mean_sq(40) / mean_sq(80);
        assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
    }
}
