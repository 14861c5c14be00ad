//! Diagnostics campaigns over a grid of `(n, M)` points.

use serde::{Deserialize, Serialize};

use super::{Experiment, HarnessError};
use crate::diagnostics::{fourth_moment_ratio, tail_and_trace, MomentRatio, TailBoundReport};
use crate::forward::ForwardModel;
use crate::par;
use crate::rng;
use crate::spectral::KernelFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub experiment_id: String,
    /// Fourth-moment constant used inside the bounds.
    pub kappa: f64,
    /// Monte Carlo ratio for the leading eigenfunction, when computed.
    pub moment: Option<MomentRatio>,
    pub reports: Vec<TailBoundReport>,
}

impl CampaignResult {
    /// Informative reports whose empirical frequency exceeds bound + 3 SE.
    pub fn violations(&self) -> Vec<&TailBoundReport> {
        self.reports.iter().filter(|r| r.is_informative() && !r.respects_bound()).collect()
    }
}

const TAG_TAIL: u64 = 0x7461_696c;
const TAG_MOMENT: u64 = 0x6b61_7070;

/// Runs the left-tail, trace and fourth-moment diagnostics configured in `exp`.
///
/// Gaussian-linear models use `kappa = 3` inside the bounds; the aggregation
/// model uses the Monte Carlo ratio inflated by two standard errors.
pub fn run_diagnostics_campaign(exp: &Experiment, workers: Option<usize>) -> Result<CampaignResult, HarnessError> {
    let cfg = &exp.config;
    let dc = &cfg.diagnostics;
    let id = cfg.experiment_id.clone();
    if dc.points.is_empty() {
        return Ok(CampaignResult {
            experiment_id: id,
            kappa: dc.kappa.unwrap_or(3.0),
            moment: None,
            reports: Vec::new(),
        });
    }
    par::with_workers(workers, || {
        let moment = if dc.kappa_trials >= 2 {
            let probe = KernelFunction::single_mode(exp.eig.len(), 1, 1.0)?;
            Some(fourth_moment_ratio(
                &exp.ctx,
                &exp.eig,
                &probe,
                dc.kappa_trials,
                rng::derive_seed(cfg.seed, &[TAG_MOMENT]),
            )?)
        } else {
            None
        };
        let kappa = match (dc.kappa, cfg.model, moment) {
            (Some(k), _, _) => k,
            (None, ForwardModel::Integral | ForwardModel::Nonlocal, _) => 3.0,
            (None, ForwardModel::Aggregation, Some(m)) => (m.kappa + 2.0 * m.stderr).max(1.0),
            (None, ForwardModel::Aggregation, None) => {
                return Err(HarnessError::Config("aggregation campaigns need kappa or kappa_trials".into()))
            }
        };
        let mut reports = Vec::with_capacity(2 * dc.points.len());
        for (i, &(n, m)) in dc.points.iter().enumerate() {
            let seed = rng::derive_seed(cfg.seed, &[TAG_TAIL, i as u64]);
            let (tail, trace) = tail_and_trace(&exp.ctx, &exp.eig, exp.decay.kind, n, m, dc.trials, kappa, seed)?;
            reports.push(tail);
            reports.push(trace);
        }
        Ok(CampaignResult { experiment_id: id, kappa, moment, reports })
    })
}
