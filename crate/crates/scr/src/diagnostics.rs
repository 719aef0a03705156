//! Convergence diagnostics: potential scale reduction factor (R-hat) across
//! chains and effective sample size (ESS) from the pooled draws.

use crate::error::{Error, Result};
use crate::mcmc::Chain;
use crate::util::{mean, sample_variance};

/// Convergence gate on R-hat.
pub const RHAT_THRESHOLD: f64 = 1.1;
/// Convergence gate on effective sample size.
pub const ESS_THRESHOLD: f64 = 400.0;
/// Minimum retained draws per chain for a meaningful diagnostic.
pub const MIN_DRAWS: usize = 100;

/// Classic multi-chain potential scale reduction factor:
/// sqrt(((n-1)/n W + B/n) / W) with W the mean within-chain variance and
/// B/n the between-chain variance of the chain means.
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Diagnostics(format!(
            "R-hat needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostics(
            "R-hat needs equal-length chains".into(),
        ));
    }
    if n < MIN_DRAWS {
        return Err(Error::Diagnostics(format!(
            "R-hat needs at least {MIN_DRAWS} draws per chain, got {n}"
        )));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let grand = mean(&means);
    let w: f64 = chains.iter().map(|c| sample_variance(c)).sum::<f64>() / m;
    if w == 0.0 {
        return Err(Error::ConstantInput);
    }
    let b_over_n: f64 =
        means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

/// Split-chain variant: each chain is halved before the classic computation,
/// which also flags within-chain drift.
pub fn gelman_rubin_split(chains: &[&[f64]]) -> Result<f64> {
    let mut halves: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        // drop the middle draw of odd-length chains so halves match
        halves.push(&c[..half]);
        halves.push(&c[c.len() - half..]);
    }
    gelman_rubin(&halves)
}

/// Effective sample size of one pooled sequence using the initial monotone
/// positive sequence estimator of the autocorrelation time: successive
/// autocovariance pair sums are accumulated while positive and
/// non-increasing. The estimate is capped at the sequence length.
pub fn effective_sample_size(draws: &[f64]) -> Result<f64> {
    let n = draws.len();
    if n < MIN_DRAWS {
        return Err(Error::Diagnostics(format!(
            "ESS needs at least {MIN_DRAWS} draws, got {n}"
        )));
    }
    let mu = mean(draws);
    let gamma = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for t in 0..n - lag {
            acc += (draws[t] - mu) * (draws[t + lag] - mu);
        }
        acc / n as f64
    };
    let g0 = gamma(0);
    if g0 == 0.0 {
        return Err(Error::ConstantInput);
    }
    // sigma^2 = -gamma_0 + 2 * sum of pair sums Gamma_k = gamma_{2k} + gamma_{2k+1}
    let mut sigma_sq = -g0;
    let mut prev_pair = f64::INFINITY;
    let mut k = 0usize;
    while 2 * k + 1 < n {
        let pair = gamma(2 * k) + gamma(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair); // enforce monotone non-increase
        sigma_sq += 2.0 * pair;
        prev_pair = pair;
        k += 1;
    }
    if sigma_sq <= 0.0 {
        // antithetic sequences can push the estimate past n; cap there
        return Ok(n as f64);
    }
    Ok((n as f64 * g0 / sigma_sq).min(n as f64))
}

/// Pooled-concatenation ESS across chains.
pub fn pooled_ess(chains: &[&[f64]]) -> Result<f64> {
    let pooled: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    effective_sample_size(&pooled)
}

/// Diagnostics of one monitored parameter.
#[derive(Debug, Clone)]
pub struct ParamDiagnostic {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
}

/// Per-parameter diagnostics of one fitted model.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub params: Vec<ParamDiagnostic>,
}

impl ConvergenceReport {
    /// All monitored parameters pass R-hat <= 1.1 and ESS >= 400.
    pub fn converged(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.rhat <= RHAT_THRESHOLD && p.ess >= ESS_THRESHOLD)
    }

    pub fn worst_rhat(&self) -> f64 {
        self.params.iter().map(|p| p.rhat).fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min)
    }
}

/// Computes R-hat and pooled ESS for every monitored parameter of a set of
/// chains from the same fit. `split` halves each chain before R-hat.
pub fn assess(chains: &[Chain], split: bool) -> Result<ConvergenceReport> {
    if chains.len() < 2 {
        return Err(Error::Diagnostics(format!(
            "convergence assessment needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let names = &chains[0].param_names;
    let mut params = Vec::with_capacity(names.len());
    for name in names {
        let series: Vec<&[f64]> = chains
            .iter()
            .map(|c| {
                c.param(name).ok_or_else(|| {
                    Error::Diagnostics(format!("chain {} lacks parameter {name}", c.chain_id))
                })
            })
            .collect::<Result<_>>()?;
        let rhat = if split {
            gelman_rubin_split(&series)
        } else {
            gelman_rubin(&series)
        }?;
        let ess = pooled_ess(&series)?;
        params.push(ParamDiagnostic {
            name: name.clone(),
            rhat,
            ess,
        });
    }
    Ok(ConvergenceReport { params })
}
