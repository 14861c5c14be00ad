//! Monte Carlo checks of eigenvalue tails, trace concentration, fourth moments
//! and the hypercube (Assouad) construction behind the lower rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{basis_responses, event_holds, NormalAccumulator};
use crate::forward::{grid_inner, sample_input, ForwardContext, ForwardError};
use crate::noise::NoiseModel;
use crate::par;
use crate::rng;
use crate::spectral::{DecayKind, EigenSystem, KernelFunction, SpectralDecay, SpectralError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("hypercube dimension {0} exceeds the enumeration cap of 16")]
    Capacity(usize),
    #[error("degenerate moment ratio: E||R_phi[u]||^2 is zero")]
    Degenerate,
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Bound on `P{lambda_min(A) <= (3 - eps) lambda_n / 8}`.
pub fn left_tail_bound(lambdas: &[f64], n: usize, m: usize, kappa: f64, epsilon: f64) -> f64 {
    let l1 = lambdas[0];
    let ln = lambdas[n - 1];
    let mf = m as f64;
    kappa * l1 * l1 / mf
        + (n as f64 * (20.0 * (l1 + 1.0) / ln).ln() - epsilon * mf * ln / (4.0 * kappa * (ln + l1))).exp()
}

/// Bound on `P{exists k <= n: lambda_k(A) <= lambda_k / 4}`.
pub fn left_tail_bound_all(lambdas: &[f64], n: usize, m: usize, kappa: f64) -> f64 {
    let l1 = lambdas[0];
    let mf = m as f64;
    n as f64 * kappa * l1 * l1 / mf
        + (1..=n)
            .map(|k| {
                let lk = lambdas[k - 1];
                (k as f64 * (20.0 * (l1 + 1.0) / lk).ln() - mf * lk / (4.0 * kappa * (lk + l1))).exp()
            })
            .sum::<f64>()
}

/// Bound on `P{Tr(A)/n >= lambda_1 + 1}`.
pub fn trace_bound(lambdas: &[f64], m: usize, kappa: f64) -> f64 {
    kappa * lambdas[0] * lambdas[0] / m as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailEvent {
    /// Smallest eigenvalue below `lambda_n / 4`.
    Smallest,
    /// Some sorted eigenvalue `lambda_k(A) <= lambda_k / 4`.
    AnyIndex,
    /// `Tr(A)/n >= lambda_1 + 1`.
    Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailBoundReport {
    pub event: TailEvent,
    pub n: usize,
    pub m: usize,
    pub kappa: f64,
    pub lambdas: Vec<f64>,
    pub analytic_bound: f64,
    pub empirical_probability: f64,
    pub trials: usize,
}

impl TailBoundReport {
    pub fn reported_bound(&self) -> f64 {
        self.analytic_bound.min(1.0)
    }

    pub fn binomial_se(&self) -> f64 {
        let p = self.empirical_probability;
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// `p_hat <= bound + 3 SE`.
    pub fn respects_bound(&self) -> bool {
        self.empirical_probability <= self.analytic_bound + 3.0 * self.binomial_se()
    }

    /// The bound is informative (at most 0.9).
    pub fn is_informative(&self) -> bool {
        self.analytic_bound <= 0.9
    }
}

fn check_tail_args(eig: &EigenSystem, n: usize, m: usize, trials: usize) -> Result<(), DiagnosticsError> {
    if n == 0 || n > eig.len() {
        return Err(DiagnosticsError::InvalidArgument(format!("n = {n} outside 1..={}", eig.len())));
    }
    if m == 0 {
        return Err(DiagnosticsError::InvalidArgument("M must be >= 1".into()));
    }
    if trials == 0 {
        return Err(DiagnosticsError::InvalidArgument("need at least one trial".into()));
    }
    Ok(())
}

/// Per-trial summaries `(cutoff event, trace / n)` over `trials` independent normal matrices.
fn tail_trials(
    ctx: &ForwardContext,
    eig: &EigenSystem,
    kind: DecayKind,
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<(bool, f64)>, DiagnosticsError> {
    let moments = ctx.basis_moments(eig, n)?;
    let lambdas = &eig.eigenvalues()[..n];
    Ok(par::map_range(trials, |t| {
        let mut r = rng::substream(seed, &[t as u64]);
        let mut acc = NormalAccumulator::new(n);
        for _ in 0..m {
            let prep = ctx.prepare(&sample_input(ctx.ensemble(), &mut r));
            acc.add(&basis_responses(ctx, &prep, &moments), None);
        }
        let a = acc.finish().a;
        let trace = a.trace() / n as f64;
        let mut vals: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(|x, y| y.total_cmp(x));
        (!event_holds(&vals, lambdas, kind), trace)
    }))
}

/// Cutoff-event and trace reports from one shared set of trials.
#[allow(clippy::too_many_arguments)]
pub fn tail_and_trace(
    ctx: &ForwardContext,
    eig: &EigenSystem,
    kind: DecayKind,
    n: usize,
    m: usize,
    trials: usize,
    kappa: f64,
    seed: u64,
) -> Result<(TailBoundReport, TailBoundReport), DiagnosticsError> {
    check_tail_args(eig, n, m, trials)?;
    let runs = tail_trials(ctx, eig, kind, n, m, trials, seed)?;
    let lambdas = eig.eigenvalues()[..n].to_vec();
    let l1 = lambdas[0];
    let freq = |hits: usize| hits as f64 / trials as f64;
    let (event, bound) = match kind {
        DecayKind::Polynomial => (TailEvent::Smallest, left_tail_bound(&lambdas, n, m, kappa, 1.0)),
        DecayKind::Exponential => (TailEvent::AnyIndex, left_tail_bound_all(&lambdas, n, m, kappa)),
    };
    let tail = TailBoundReport {
        event,
        n,
        m,
        kappa,
        lambdas: lambdas.clone(),
        analytic_bound: bound,
        empirical_probability: freq(runs.iter().filter(|r| r.0).count()),
        trials,
    };
    let trace = TailBoundReport {
        event: TailEvent::Trace,
        analytic_bound: trace_bound(&lambdas, m, kappa),
        empirical_probability: freq(runs.iter().filter(|r| r.1 >= l1 + 1.0).count()),
        ..tail.clone()
    };
    Ok((tail, trace))
}

/// Empirical cutoff frequency against the matching analytic left-tail bound.
#[allow(clippy::too_many_arguments)]
pub fn mc_left_tail(
    ctx: &ForwardContext,
    eig: &EigenSystem,
    kind: DecayKind,
    n: usize,
    m: usize,
    trials: usize,
    kappa: f64,
    seed: u64,
) -> Result<TailBoundReport, DiagnosticsError> {
    Ok(tail_and_trace(ctx, eig, kind, n, m, trials, kappa, seed)?.0)
}

/// Empirical frequency of `Tr(A)/n >= lambda_1 + 1` against `kappa lambda_1^2 / M`.
pub fn trace_tail_check(
    ctx: &ForwardContext,
    eig: &EigenSystem,
    n: usize,
    m: usize,
    trials: usize,
    kappa: f64,
    seed: u64,
) -> Result<TailBoundReport, DiagnosticsError> {
    Ok(tail_and_trace(ctx, eig, DecayKind::Polynomial, n, m, trials, kappa, seed)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRatio {
    pub kappa: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// `E||R_phi[u]||^4 / (E||R_phi[u]||^2)^2` with a jackknife standard error.
pub fn fourth_moment_ratio(
    ctx: &ForwardContext,
    eig: &EigenSystem,
    phi: &KernelFunction,
    trials: usize,
    seed: u64,
) -> Result<MomentRatio, DiagnosticsError> {
    if trials < 2 {
        return Err(DiagnosticsError::InvalidArgument("need at least two trials".into()));
    }
    let moments = ctx.kernel_moments(eig, phi)?;
    let y: Vec<f64> = par::map_range(trials, |t| {
        let mut r = rng::substream(seed, &[t as u64]);
        let out = ctx.respond(&ctx.prepare(&sample_input(ctx.ensemble(), &mut r)), &moments);
        grid_inner(&out, &out)
    });
    moment_ratio(&y)
}

/// Ratio estimate and jackknife SE from samples of `||R_phi[u]||^2`.
pub fn moment_ratio(y: &[f64]) -> Result<MomentRatio, DiagnosticsError> {
    let t = y.len();
    let tf = t as f64;
    let s1: f64 = y.iter().sum();
    let s2: f64 = y.iter().map(|v| v * v).sum();
    if !(s1 > 0.0) {
        return Err(DiagnosticsError::Degenerate);
    }
    let kappa = tf * s2 / (s1 * s1);
    let loo: Vec<f64> = y
        .iter()
        .map(|v| {
            let a = s1 - v;
            if a > 0.0 {
                (tf - 1.0) * (s2 - v * v) / (a * a)
            } else {
                kappa
            }
        })
        .collect();
    let mean = loo.iter().sum::<f64>() / tf;
    let var = (tf - 1.0) / tf * loo.iter().map(|k| (k - mean).powi(2)).sum::<f64>();
    Ok(MomentRatio { kappa, stderr: var.sqrt(), trials: t })
}

/// Binary-coefficient kernels on indices `n_M .. n_M + L_M - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssouadSet {
    pub n_m: usize,
    pub l_m: usize,
    pub beta: f64,
    pub radius: f64,
    pub lambdas: Vec<f64>,
    pub members: Vec<KernelFunction>,
}

impl AssouadSet {
    /// Height `L_M^{-1/2} L lambda_k^{beta/2}` of coordinate `k`.
    pub fn height(&self, k: usize) -> f64 {
        self.radius * self.lambdas[k - 1].powf(self.beta / 2.0) / (self.l_m as f64).sqrt()
    }

    /// Member with bit pattern `mask` (bit `j` switches index `n_M + j`).
    pub fn member(&self, mask: usize) -> &KernelFunction {
        &self.members[mask]
    }
}

pub fn assouad_set(
    eig: &EigenSystem,
    beta: f64,
    radius: f64,
    n_m: usize,
    l_m: usize,
) -> Result<AssouadSet, DiagnosticsError> {
    if l_m > 16 {
        return Err(DiagnosticsError::Capacity(l_m));
    }
    if n_m == 0 || l_m == 0 || n_m + l_m - 1 > eig.len() {
        return Err(DiagnosticsError::InvalidArgument(format!(
            "indices {n_m}..{} outside 1..={}",
            n_m + l_m,
            eig.len()
        )));
    }
    let k = eig.len();
    let mut set = AssouadSet {
        n_m,
        l_m,
        beta,
        radius,
        lambdas: eig.eigenvalues().to_vec(),
        members: Vec::with_capacity(1 << l_m),
    };
    for mask in 0..(1usize << l_m) {
        let mut c = vec![0.0; k];
        for j in 0..l_m {
            if mask >> j & 1 == 1 {
                c[n_m + j - 1] = set.height(n_m + j);
            }
        }
        set.members.push(KernelFunction::new(c));
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipBound {
    pub kl: f64,
    pub tv: f64,
}

/// KL bound `(tau M / 2) L^2 L_M^{-1} lambda_k^{beta+1}` and the Pinsker TV bound.
pub fn kl_flip_bound(k: usize, beta: f64, radius: f64, l_m: usize, lambdas: &[f64], tau: f64, m: usize) -> FlipBound {
    let lk = lambdas[k - 1];
    let kl = 0.5 * tau * m as f64 * radius * radius / l_m as f64 * lk.powf(beta + 1.0);
    FlipBound { kl, tv: 0.5 * (2.0 * kl).sqrt() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte Carlo `E ||R_delta[u]||^2`.
pub fn forward_energy(
    ctx: &ForwardContext,
    eig: &EigenSystem,
    delta: &KernelFunction,
    trials: usize,
    seed: u64,
) -> Result<McEstimate, DiagnosticsError> {
    let moments = ctx.kernel_moments(eig, delta)?;
    let y: Vec<f64> = par::map_range(trials, |t| {
        let mut r = rng::substream(seed, &[t as u64]);
        let out = ctx.respond(&ctx.prepare(&sample_input(ctx.ensemble(), &mut r)), &moments);
        grid_inner(&out, &out)
    });
    Ok(mean_se(&y))
}

fn mean_se(y: &[f64]) -> McEstimate {
    let t = y.len() as f64;
    let mean = y.iter().sum::<f64>() / t;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0).max(1.0);
    McEstimate { mean, stderr: (var / t).sqrt() }
}

/// KL between the `M`-sample data laws under two kernels with Gaussian grid noise.
///
/// Per sample the grid values are Gaussian with covariance `N sigma^2 I`, so the
/// KL is `sum_i (R_a - R_b)_i^2 / (2 N sigma^2)`; this averages it over inputs.
#[allow(clippy::too_many_arguments)]
pub fn gaussian_dataset_kl(
    ctx: &ForwardContext,
    eig: &EigenSystem,
    phi_a: &KernelFunction,
    phi_b: &KernelFunction,
    noise: &NoiseModel,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<McEstimate, DiagnosticsError> {
    let sigma = match *noise {
        NoiseModel::GaussianWhite { sigma } if sigma > 0.0 => sigma,
        _ => return Err(DiagnosticsError::InvalidArgument("needs Gaussian noise with sigma > 0".into())),
    };
    let ma = ctx.kernel_moments(eig, phi_a)?;
    let mb = ctx.kernel_moments(eig, phi_b)?;
    let grid = ctx.grid_size() as f64;
    let cell_var = grid * sigma * sigma;
    let y: Vec<f64> = par::map_range(trials, |t| {
        let mut r = rng::substream(seed, &[t as u64]);
        let prep = ctx.prepare(&sample_input(ctx.ensemble(), &mut r));
        let ra = ctx.respond(&prep, &ma);
        let rb = ctx.respond(&prep, &mb);
        m as f64 * ra.iter().zip(&rb).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * cell_var)
    });
    Ok(mean_se(&y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerRateCertificate {
    pub m: usize,
    pub n_m: usize,
    pub l_m: usize,
    /// `L_M^{-1} L^2 sum_k lambda_k^beta` with lambda at its lower envelope.
    pub rate_value: f64,
    /// `tau M L^2 L_M^{-1} lambda_{n_M}^{beta+1}` with lambda at its upper envelope.
    pub verification: f64,
    pub holds: bool,
}

pub fn lower_rate_certificate(
    decay: &SpectralDecay,
    beta: f64,
    radius: f64,
    tau: f64,
    m: usize,
) -> Result<LowerRateCertificate, DiagnosticsError> {
    decay.validate()?;
    if !(beta > 0.0) {
        return Err(DiagnosticsError::InvalidArgument(format!("beta must be > 0, got {beta}")));
    }
    let SpectralDecay { r, b, .. } = *decay;
    let l2 = radius * radius;
    let base = tau * m as f64 * l2 * b.powf(beta + 1.0);
    let (n_m, l_m) = match decay.kind {
        DecayKind::Polynomial => {
            let raw = base.powf(1.0 / (2.0 * beta * r + 2.0 * r + 1.0));
            let n = ((raw * (1.0 - 1e-12)).ceil() as usize).max(1);
            (n, n)
        }
        DecayKind::Exponential => {
            let raw = base.ln() / ((beta + 1.0) * r);
            let n = if raw.is_finite() && raw > 0.0 { ((raw * (1.0 - 1e-12)).ceil()) as usize } else { 0 };
            (n.max(1), 1)
        }
    };
    let rate_value = l2 / l_m as f64
        * (n_m..n_m + l_m).map(|k| decay.envelope(k).map(|e| e.0.powf(beta))).sum::<Result<f64, _>>()?;
    let upper = decay.envelope(n_m)?.1;
    let verification = tau * m as f64 * l2 / l_m as f64 * upper.powf(beta + 1.0);
    Ok(LowerRateCertificate { m, n_m, l_m, rate_value, verification, holds: verification <= 1.0 + 1e-12 })
}
