//! Rate sweeps over a geometric grid of sample sizes.

use serde::{Deserialize, Serialize};

use super::{Experiment, HarnessError};
use crate::estimators::{basis_responses, estimation_error, simulate_sample, tlse_solve, NormalAccumulator};
use crate::par;
use crate::rng;
use crate::spectral::theoretical_exponent;

/// One `(M, rep)` cell. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub experiment_id: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub rep: usize,
    pub n: usize,
    pub cutoff: bool,
    pub var_err: f64,
    pub bias_err: f64,
    pub total_err: f64,
    pub seed_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m: usize,
    pub n: usize,
    pub below_regime: bool,
    pub mean_total: f64,
    pub stderr: f64,
    pub cutoff_fraction: f64,
    /// Every repetition cut off; left out of the fit.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SlopeFit {
    Fitted { slope: f64, stderr: f64, intercept: f64 },
    Degenerate { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSweepResult {
    pub experiment_id: String,
    pub records: Vec<SweepRecord>,
    pub points: Vec<SweepPoint>,
    pub fit: SlopeFit,
    pub exponent: f64,
    pub margin: f64,
    /// `|slope - exponent| <= margin`, absent for degenerate fits.
    pub passed: Option<bool>,
    pub warnings: Vec<String>,
}

/// OLS of `log error` on `log M`; returns `(slope, stderr, intercept)` with the slope negated.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64, f64), HarnessError> {
    if points.len() < 4 {
        return Err(HarnessError::Numeric(format!("slope fit needs >= 4 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(HarnessError::Numeric(format!("non-positive point ({}, {})", p.0, p.1)));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Numeric("slope fit needs distinct M values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - alpha - beta * x).powi(2)).sum();
    let se = (rss / (k - 2.0) / sxx).sqrt();
    Ok((-beta, se, alpha))
}

/// Errors at or below this level are treated as exact recovery.
const ROUNDOFF_FLOOR: f64 = 1e-20;

pub fn run_rate_sweep(exp: &Experiment, workers: Option<usize>) -> Result<RateSweepResult, HarnessError> {
    let cfg = &exp.config;
    let phi = exp.true_kernel();
    let phi_moments = exp.ctx.kernel_moments(&exp.eig, &phi).map_err(|e| HarnessError::Config(e.to_string()))?;
    let noise = exp.noise();
    let reps = cfg.sweep.repetitions;
    let choices = cfg.sweep.m_values.iter().map(|&m| exp.dimension(m)).collect::<Result<Vec<_>, _>>()?;
    let nmax = choices.iter().map(|c| c.n).max().unwrap_or(1);
    let basis = exp.ctx.basis_moments(&exp.eig, nmax).map_err(|e| HarnessError::Config(e.to_string()))?;
    let lambdas = exp.eig.eigenvalues();
    let cells = cfg.sweep.m_values.len() * reps;

    let run_cell = |c: usize| -> Result<SweepRecord, HarnessError> {
        let (mi, rep) = (c / reps, c % reps);
        let m = cfg.sweep.m_values[mi];
        let n = choices[mi].n;
        let path = [mi as u64, rep as u64];
        let mut r = rng::substream(cfg.seed, &path);
        let mut acc = NormalAccumulator::new(n);
        for _ in 0..m {
            let (sample, prep) = simulate_sample(&exp.ctx, &phi_moments, &noise, &mut r);
            acc.add(&basis_responses(&exp.ctx, &prep, &basis[..n]), Some(&sample.output));
        }
        let est = tlse_solve(&acc.finish(), lambdas, exp.decay.kind)?;
        let e = estimation_error(&est.coeffs, &phi, n);
        Ok(SweepRecord {
            experiment_id: cfg.experiment_id.clone(),
            m,
            rep,
            n,
            cutoff: est.cutoff,
            var_err: e.variance,
            bias_err: e.bias,
            total_err: e.total,
            seed_path: rng::seed_path_string(cfg.seed, &path),
        })
    };
    let records =
        par::with_workers(workers, || par::map_range(cells, run_cell)).into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut warnings = Vec::new();
    let mut points = Vec::new();
    for (mi, &m) in cfg.sweep.m_values.iter().enumerate() {
        let rows = &records[mi * reps..(mi + 1) * reps];
        let totals: Vec<f64> = rows.iter().map(|r| r.total_err).collect();
        let mean = totals.iter().sum::<f64>() / reps as f64;
        let var =
            if reps > 1 { totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (reps - 1) as f64 } else { 0.0 };
        let cut = rows.iter().filter(|r| r.cutoff).count();
        let excluded = cut == reps;
        if excluded {
            warnings.push(format!("M = {m}: every repetition cut off, point excluded from the fit"));
        }
        if choices[mi].below_regime {
            warnings.push(format!("M = {m}: oracle dimension below 1 before clamping"));
        }
        points.push(SweepPoint {
            m,
            n: choices[mi].n,
            below_regime: choices[mi].below_regime,
            mean_total: mean,
            stderr: (var / reps as f64).sqrt(),
            cutoff_fraction: cut as f64 / reps as f64,
            excluded,
        });
    }

    let usable: Vec<(f64, f64)> = points.iter().filter(|p| !p.excluded).map(|p| (p.m as f64, p.mean_total)).collect();
    let fit = if usable.len() < 4 {
        SlopeFit::Degenerate { reason: format!("{} usable M values, need 4", usable.len()) }
    } else if usable.iter().all(|p| p.1 <= ROUNDOFF_FLOOR) {
        SlopeFit::Degenerate { reason: "errors at round-off level (exact recovery)".into() }
    } else {
        match fit_loglog_slope(&usable) {
            Ok((slope, stderr, intercept)) => SlopeFit::Fitted { slope, stderr, intercept },
            Err(e) => SlopeFit::Degenerate { reason: e.to_string() },
        }
    };
    let exponent = theoretical_exponent(&exp.decay, exp.class.beta);
    let passed = match fit {
        SlopeFit::Fitted { slope, .. } => Some((slope - exponent).abs() <= cfg.sweep.margin),
        SlopeFit::Degenerate { .. } => None,
    };
    Ok(RateSweepResult {
        experiment_id: cfg.experiment_id.clone(),
        records,
        points,
        fit,
        exponent,
        margin: cfg.sweep.margin,
        passed,
        warnings,
    })
}
