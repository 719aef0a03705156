//! MCMC driver: chain configuration, the sampling loop, and retained output.
//!
//! Chains are deterministic given (base seed, chain id). Proposal-scale
//! adaptation runs during burn-in only; retained draws are thinned
//! post-burn-in states. Wall-clock runtime excludes burn-in so that
//! sampling-efficiency comparisons are not distorted by adaptation.

pub mod sampler;

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::{ChainState, DetectionState, Model, ModelKind};
use crate::simulate::SimulatedDataset;
use crate::util::child_seed;

pub use sampler::{inclusion_probability, initial_state, AdaptiveScale, Sampler};

/// Stream constant separating chain seeds from other derived seeds.
const CHAIN_SEED_STREAM: u64 = 0xC4A1;

#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Target acceptance rate for adaptive random-walk proposals.
    pub target_acceptance: f64,
    /// Retain the per-detector baseline surface at every kept draw.
    pub store_baseline: bool,
    /// Drop all likelihood terms so the chain targets the prior
    /// (sampler validation only).
    pub prior_only: bool,
}

impl McmcConfig {
    /// Default iteration budget for a model kind at full scale.
    pub fn for_model(kind: ModelKind, aggregation: usize, seed: u64) -> Self {
        let (n_iterations, burn_in) = match kind {
            ModelKind::Scr | ModelKind::Fe => (30_000, 12_000),
            ModelKind::Re | ModelKind::Sare => (100_000, 20_000),
            ModelKind::Fm if aggregation > 1 => (20_000, 4_000),
            ModelKind::Fm => (60_000, 12_000),
        };
        McmcConfig {
            n_iterations,
            burn_in,
            thin: 1,
            n_chains: 3,
            seed,
            target_acceptance: 0.44,
            store_baseline: true,
            prior_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_iterations ({})",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config(format!(
                "target_acceptance must lie in (0, 1), got {}",
                self.target_acceptance
            )));
        }
        Ok(())
    }

    /// Number of draws each chain retains.
    pub fn n_retained(&self) -> usize {
        (self.n_iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Retained output of one chain.
#[derive(Debug, Clone)]
pub struct Chain {
    pub chain_id: u32,
    pub param_names: Vec<String>,
    /// One column of retained draws per parameter, `samples[k][r]`.
    pub samples: Vec<Vec<f64>>,
    /// Per-draw z-marginalized row log-likelihoods, `pointwise[r][i]`,
    /// over all M augmented rows (WAIC input).
    pub pointwise_loglik: Vec<Vec<f64>>,
    /// Per-draw baseline surface, `baseline[r][j]`, when retained.
    pub baseline_samples: Option<Vec<Vec<f64>>>,
    /// Wall-clock seconds spent on post-burn-in iterations.
    pub runtime_secs: f64,
    /// Per-block acceptance rates over the whole run.
    pub acceptance: Vec<(String, f64)>,
}

impl Chain {
    pub fn n_retained(&self) -> usize {
        self.samples.first().map_or(0, |c| c.len())
    }

    pub fn param(&self, name: &str) -> Option<&[f64]> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|k| self.samples[k].as_slice())
    }
}

/// Monitored top-level parameter names for a model kind. The derived
/// population size N comes first.
pub fn param_names(kind: ModelKind) -> Vec<String> {
    let mut names = vec!["N".to_string(), "psi".to_string(), "sigma".to_string()];
    match kind {
        ModelKind::Scr => names.push("p0".into()),
        ModelKind::Re => names.extend(["mu".into(), "sigma_w".into()]),
        ModelKind::Sare => names.extend(["mu".into(), "log_phi".into()]),
        ModelKind::Fm => names.extend(["eta1".into(), "eta2".into(), "pi".into()]),
        ModelKind::Fe => names.push("mu".into()),
    }
    names
}

fn extract_params(state: &ChainState) -> Vec<f64> {
    let mut row = vec![
        state.population_size() as f64,
        state.psi,
        state.sigma,
    ];
    match &state.detection {
        DetectionState::Scr { p0 } => row.push(*p0),
        DetectionState::Re { mu, sigma_w, .. } => row.extend([*mu, *sigma_w]),
        DetectionState::Sare { mu, log_phi, .. } => row.extend([*mu, *log_phi]),
        DetectionState::Fm { eta1, eta2, pi, .. } => row.extend([*eta1, *eta2, *pi]),
        DetectionState::Fe { mu } => row.push(*mu),
    }
    row
}

/// Runs one chain. Deterministic given (`cfg.seed`, `chain_id`).
pub fn run_chain(
    model: &Model,
    data: &SimulatedDataset,
    cfg: &McmcConfig,
    chain_id: u32,
) -> Result<Chain> {
    cfg.validate()?;
    let seed = child_seed(cfg.seed, CHAIN_SEED_STREAM, chain_id as u64);
    let mut sampler = Sampler::new(model, data, seed, cfg.target_acceptance, cfg.prior_only)?;

    let names = param_names(model.spec.kind);
    let n_retained = cfg.n_retained();
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(n_retained); names.len()];
    let mut pointwise = Vec::with_capacity(n_retained);
    let mut baseline = cfg.store_baseline.then(|| Vec::with_capacity(n_retained));

    let mut timer: Option<Instant> = None;
    for it in 0..cfg.n_iterations {
        if it == cfg.burn_in {
            sampler.freeze_adaptation();
            timer = Some(Instant::now());
        }
        sampler.sweep();
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            for (col, value) in samples.iter_mut().zip(extract_params(&sampler.state)) {
                col.push(value);
            }
            pointwise.push(sampler.pointwise_loglik());
            if let Some(b) = baseline.as_mut() {
                b.push(sampler.baseline().to_vec());
            }
        }
    }
    let runtime_secs = timer.map_or(0.0, |t| t.elapsed().as_secs_f64());

    Ok(Chain {
        chain_id,
        param_names: names,
        samples,
        pointwise_loglik: pointwise,
        baseline_samples: baseline,
        runtime_secs,
        acceptance: sampler.acceptance_rates(),
    })
}

/// Runs `cfg.n_chains` chains in parallel; output order is by chain id and
/// independent of scheduling.
pub fn run_chains(model: &Model, data: &SimulatedDataset, cfg: &McmcConfig) -> Result<Vec<Chain>> {
    cfg.validate()?;
    (0..cfg.n_chains as u32)
        .into_par_iter()
        .map(|id| run_chain(model, data, cfg, id))
        .collect()
}
