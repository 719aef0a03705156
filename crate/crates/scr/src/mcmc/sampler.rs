//! Metropolis-within-Gibbs update kernels over one `ChainState`.
//!
//! Conjugate Gibbs steps where exact (psi, z, u, pi), adaptive random-walk
//! Metropolis elsewhere. Scalar walks run on an unconstrained transform with
//! Jacobian-corrected acceptance; proposal scales adapt toward 44% acceptance
//! during burn-in and are frozen afterwards.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::likelihood::{individual_loglik, ChainState, DetectionState, Model, ModelKind};
use crate::simulate::SimulatedDataset;
use crate::surfaces::exponential_covariance;
use crate::util::{inv_logit, ln_normal_pdf, log1m, log_add_exp, logit};

/// Random-walk proposal scale with diminishing Robbins-Monro adaptation.
#[derive(Debug, Clone)]
pub struct AdaptiveScale {
    ln_scale: f64,
    target: f64,
    steps: u64,
    pub frozen: bool,
    accepted: u64,
    attempted: u64,
}

impl AdaptiveScale {
    pub fn new(initial: f64, target: f64) -> Self {
        AdaptiveScale {
            ln_scale: initial.ln(),
            target,
            steps: 0,
            frozen: false,
            accepted: 0,
            attempted: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.ln_scale.exp()
    }

    /// Records one proposal with acceptance probability `alpha`.
    pub fn record(&mut self, alpha: f64, accepted: bool) {
        self.attempted += 1;
        if accepted {
            self.accepted += 1;
        }
        if !self.frozen {
            self.steps += 1;
            let gamma = (self.steps as f64).powf(-0.6);
            self.ln_scale += gamma * (alpha - self.target);
            self.ln_scale = self.ln_scale.clamp(-12.0, 6.0);
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempted == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

/// Full conditional inclusion probability of an undetected individual given
/// psi and its all-zero-row log-likelihood l0 = sum_j log(1 - p_ij).
pub fn inclusion_probability(psi: f64, l0: f64) -> f64 {
    // psi e^{l0} / (psi e^{l0} + 1 - psi), computed on the log-odds scale
    inv_logit(psi.ln() + l0 - log1m(psi))
}

/// Proposal blocks whose acceptance rates are tracked by name.
/// Extra per-sweep repetitions of the likelihood-free hyperparameter kernels
/// (translation, sigma_w, log phi) for the random-effect models.
const EXTRA_HYPER_UPDATES: usize = 5;

/// Per-sweep repetitions of the whitened joint (log phi, W) kernel; each one
/// costs a full likelihood pass, so this stays small.
const WHITENED_PHI_UPDATES: usize = 2;

const BLOCK_NAMES: &[&str] = &[
    "sigma",
    "baseline",
    "sigma_w",
    "log_phi",
    "log_phi_nc",
    "translation",
    "ac",
    "w",
];

/// One chain's sampler: state, caches, proposal scales, and generator.
pub struct Sampler<'a> {
    pub model: &'a Model,
    pub data: &'a SimulatedDataset,
    pub state: ChainState,
    /// Resolved per-detector baseline vector for the current state.
    p0: Vec<f64>,
    /// Per-individual detection log-likelihood given the current latents
    /// (zero for z_i = 0 individuals).
    loglik_i: Vec<f64>,
    /// When set, all likelihood contributions are treated as zero so the
    /// chain targets the prior (sampler validation).
    pub prior_only: bool,
    rng: ChaCha12Rng,
    // proposal scales
    sigma_scale: AdaptiveScale,
    baseline_scales: Vec<AdaptiveScale>, // p0 | mu | (eta1, eta2)
    sigma_w_scale: AdaptiveScale,
    log_phi_scale: AdaptiveScale,
    log_phi_nc_scale: AdaptiveScale,
    translation_scale: AdaptiveScale,
    ac_scales: Vec<AdaptiveScale>,
    w_scales: Vec<AdaptiveScale>,
    // SARE caches: precision Q = Gamma^{-1}, qw = Q w, quad = w' Q w, ln det
    precision: Option<DMatrix<f64>>,
    qw: Vec<f64>,
    w_quad: f64,
    gamma_ln_det: f64,
}

impl<'a> Sampler<'a> {
    pub fn new(
        model: &'a Model,
        data: &'a SimulatedDataset,
        seed: u64,
        target_acceptance: f64,
        prior_only: bool,
    ) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let state = initial_state(model, data, &mut rng);
        let p0 = model.resolve_baseline(&state);
        let mut sampler = Sampler {
            model,
            data,
            state,
            p0,
            loglik_i: vec![0.0; data.m],
            prior_only,
            rng,
            sigma_scale: AdaptiveScale::new(0.2, target_acceptance),
            baseline_scales: vec![
                AdaptiveScale::new(0.2, target_acceptance),
                AdaptiveScale::new(0.2, target_acceptance),
            ],
            sigma_w_scale: AdaptiveScale::new(0.3, target_acceptance),
            log_phi_scale: AdaptiveScale::new(0.5, target_acceptance),
            log_phi_nc_scale: AdaptiveScale::new(0.5, target_acceptance),
            translation_scale: AdaptiveScale::new(0.3, target_acceptance),
            ac_scales: vec![AdaptiveScale::new(1.0, target_acceptance); data.m],
            w_scales: vec![
                AdaptiveScale::new(0.5, target_acceptance);
                model.n_clusters()
            ],
            precision: None,
            qw: Vec::new(),
            w_quad: 0.0,
            gamma_ln_det: 0.0,
        };
        sampler.refresh_loglik_all();
        if let DetectionState::Sare { .. } = sampler.state.detection {
            sampler.refresh_sare_cache()?;
        }
        let lp = model.full_logposterior(&sampler.state, data);
        if !lp.is_finite() && !prior_only {
            return Err(Error::BadInit(format!(
                "log-posterior = {lp} for model {} (n_detected = {}, M = {})",
                model.spec.label(),
                data.n_detected,
                data.m
            )));
        }
        Ok(sampler)
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }

    /// Replaces the chain state and rebuilds every cache that depends on it.
    pub fn set_state(&mut self, state: ChainState) -> Result<()> {
        self.state = state;
        self.p0 = self.model.resolve_baseline(&self.state);
        self.refresh_loglik_all();
        if matches!(self.state.detection, DetectionState::Sare { .. }) {
            self.refresh_sare_cache()?;
        }
        Ok(())
    }

    pub fn baseline(&self) -> &[f64] {
        &self.p0
    }

    pub fn freeze_adaptation(&mut self) {
        self.sigma_scale.frozen = true;
        for s in &mut self.baseline_scales {
            s.frozen = true;
        }
        self.sigma_w_scale.frozen = true;
        self.log_phi_scale.frozen = true;
        self.log_phi_nc_scale.frozen = true;
        self.translation_scale.frozen = true;
        for s in &mut self.ac_scales {
            s.frozen = true;
        }
        for s in &mut self.w_scales {
            s.frozen = true;
        }
    }

    pub fn proposal_scales(&self) -> Vec<f64> {
        let mut v = vec![
            self.sigma_scale.scale(),
            self.baseline_scales[0].scale(),
            self.baseline_scales[1].scale(),
            self.sigma_w_scale.scale(),
            self.log_phi_scale.scale(),
            self.log_phi_nc_scale.scale(),
            self.translation_scale.scale(),
        ];
        v.extend(self.ac_scales.iter().map(|s| s.scale()));
        v.extend(self.w_scales.iter().map(|s| s.scale()));
        v
    }

    pub fn acceptance_rates(&self) -> Vec<(String, f64)> {
        let ac_mean = mean_rate(&self.ac_scales);
        let w_mean = mean_rate(&self.w_scales);
        BLOCK_NAMES
            .iter()
            .zip([
                self.sigma_scale.acceptance_rate(),
                self.baseline_scales[0].acceptance_rate(),
                self.sigma_w_scale.acceptance_rate(),
                self.log_phi_scale.acceptance_rate(),
                self.log_phi_nc_scale.acceptance_rate(),
                self.translation_scale.acceptance_rate(),
                ac_mean,
                w_mean,
            ])
            .map(|(n, r)| (n.to_string(), r))
            .collect()
    }

    /// Detection log-likelihood of row i at AC `s` with inclusion flag z.
    fn row_loglik(&self, i: usize, s: &Point, z: bool) -> f64 {
        if self.prior_only {
            return 0.0;
        }
        individual_loglik(
            self.data.row(i),
            s,
            z,
            &self.p0,
            self.state.sigma,
            &self.model.grid,
            self.model.spec.radius,
        )
    }

    fn refresh_loglik_all(&mut self) {
        for i in 0..self.data.m {
            let s = self.state.s[i];
            let ll = self.row_loglik(i, &s, self.state.z[i]);
            self.loglik_i[i] = ll;
        }
    }

    fn total_loglik(&self) -> f64 {
        self.loglik_i.iter().sum()
    }

    /// Rebuilds the SARE covariance caches from the current log phi.
    fn refresh_sare_cache(&mut self) -> Result<()> {
        if let DetectionState::Sare { log_phi, w, .. } = &self.state.detection {
            let cov = exponential_covariance(self.model.cluster_distances(), log_phi.exp())?;
            let f = cov.factorize()?;
            let q = f.precision();
            let qw: Vec<f64> = (0..w.len())
                .map(|r| (0..w.len()).map(|c| q[(r, c)] * w[c]).sum())
                .collect();
            self.w_quad = w.iter().zip(qw.iter()).map(|(a, b)| a * b).sum();
            self.gamma_ln_det = f.ln_det();
            self.precision = Some(q);
            self.qw = qw;
        }
        Ok(())
    }

    // ---- kernels -----------------------------------------------------------

    /// Redraws z_i for undetected individuals from the exact full
    /// conditional; detected individuals keep z_i = 1.
    pub fn update_latent_inclusion(&mut self) {
        for i in self.data.n_detected..self.data.m {
            let l0 = self.row_loglik(i, &self.state.s[i].clone(), true);
            let pr = inclusion_probability(self.state.psi, l0);
            let zi = self.rng.gen::<f64>() < pr;
            self.state.z[i] = zi;
            self.loglik_i[i] = if zi { l0 } else { 0.0 };
        }
    }

    /// Redraws psi from its Beta(1 + sum z, 1 + M - sum z) full conditional.
    pub fn update_psi(&mut self) {
        let n: usize = self.state.z.iter().filter(|&&z| z).count();
        let beta = Beta::new(1.0 + n as f64, 1.0 + (self.data.m - n) as f64).unwrap();
        self.state.psi = self.rng.sample(beta);
    }

    pub fn update_inclusion(&mut self) {
        self.update_latent_inclusion();
        self.update_psi();
    }

    /// Per-individual random-walk Metropolis on the activity centers.
    pub fn update_activity_centers(&mut self) {
        for i in 0..self.data.m {
            let scale = self.ac_scales[i].scale();
            let dx: f64 = self.rng.sample(StandardNormal);
            let dy: f64 = self.rng.sample(StandardNormal);
            let proposal = Point::new(
                self.state.s[i].x + scale * dx,
                self.state.s[i].y + scale * dy,
            );
            if !self.model.habitat.contains(&proposal) {
                self.ac_scales[i].record(0.0, false);
                continue;
            }
            let new_ll = self.row_loglik(i, &proposal, self.state.z[i]);
            let alpha = (new_ll - self.loglik_i[i]).exp().min(1.0);
            let accept = self.rng.gen::<f64>() < alpha;
            if accept {
                self.state.s[i] = proposal;
                self.loglik_i[i] = new_ll;
            }
            self.ac_scales[i].record(alpha, accept);
        }
    }

    /// Adaptive random-walk updates for all top-level scalar parameters of
    /// the model kind.
    pub fn update_scalars(&mut self) {
        self.update_sigma();
        match self.model.spec.kind {
            ModelKind::Scr | ModelKind::Re | ModelKind::Sare | ModelKind::Fe => {
                self.update_baseline_location();
            }
            ModelKind::Fm => {
                self.update_fm_eta(0);
                self.update_fm_eta(1);
            }
        }
        match self.model.spec.kind {
            ModelKind::Re => self.update_sigma_w(),
            ModelKind::Sare => self.update_log_phi(),
            _ => {}
        }
    }

    /// sigma on the log scale; uniform prior, Jacobian-corrected.
    pub fn update_sigma(&mut self) {
        let scale = self.sigma_scale.scale();
        let eps: f64 = self.rng.sample(StandardNormal);
        let u = self.state.sigma.ln();
        let u_new = u + scale * eps;
        let sigma_new = u_new.exp();
        if sigma_new >= self.model.spec.priors.sigma_upper {
            self.sigma_scale.record(0.0, false);
            return;
        }
        let old_sigma = self.state.sigma;
        let old_total = self.total_loglik();
        self.state.sigma = sigma_new;
        let new_ll: Vec<f64> = (0..self.data.m)
            .map(|i| {
                if self.state.z[i] {
                    self.row_loglik(i, &self.state.s[i].clone(), true)
                } else {
                    0.0
                }
            })
            .collect();
        let new_total: f64 = new_ll.iter().sum();
        let log_ratio = new_total - old_total + (u_new - u);
        let alpha = log_ratio.exp().min(1.0);
        let accept = log_ratio.is_finite() && self.rng.gen::<f64>() < alpha;
        if accept {
            self.loglik_i = new_ll;
        } else {
            self.state.sigma = old_sigma;
        }
        self.sigma_scale.record(if log_ratio.is_finite() { alpha } else { 0.0 }, accept);
    }

    /// SCR p0 (logit scale, normal prior on the logit) or mu (identity,
    /// normal prior) depending on the model kind.
    pub fn update_baseline_location(&mut self) {
        let scale = self.baseline_scales[0].scale();
        let eps: f64 = self.rng.sample(StandardNormal);
        let mu_sd = self.model.spec.priors.mu_sd;
        let (u_old, set): (f64, fn(&mut DetectionState, f64)) = match &self.state.detection {
            DetectionState::Scr { p0 } => (logit(*p0), |d, u| {
                if let DetectionState::Scr { p0 } = d {
                    *p0 = inv_logit(u);
                }
            }),
            DetectionState::Re { mu, .. } => (*mu, |d, u| {
                if let DetectionState::Re { mu, .. } = d {
                    *mu = u;
                }
            }),
            DetectionState::Sare { mu, .. } => (*mu, |d, u| {
                if let DetectionState::Sare { mu, .. } = d {
                    *mu = u;
                }
            }),
            DetectionState::Fe { mu } => (*mu, |d, u| {
                if let DetectionState::Fe { mu } = d {
                    *mu = u;
                }
            }),
            DetectionState::Fm { .. } => unreachable!("FM uses update_fm_eta"),
        };
        let u_new = u_old + scale * eps;
        // prior is normal in u for every branch (logit(p0) resp. mu)
        let d_prior = ln_normal_pdf(u_new, 0.0, mu_sd) - ln_normal_pdf(u_old, 0.0, mu_sd);
        self.propose_baseline_change(
            |state| set(&mut state.detection, u_new),
            |state| set(&mut state.detection, u_old),
            d_prior,
            0,
        );
    }

    /// FM eta_k on the logit scale with uniform prior (Jacobian term) and the
    /// ordering constraint eta1 <= eta2.
    pub fn update_fm_eta(&mut self, which: usize) {
        let scale = self.baseline_scales[which].scale();
        let eps: f64 = self.rng.sample(StandardNormal);
        let (e1, e2) = match &self.state.detection {
            DetectionState::Fm { eta1, eta2, .. } => (*eta1, *eta2),
            _ => unreachable!(),
        };
        let old = if which == 0 { e1 } else { e2 };
        let u_new = logit(old) + scale * eps;
        let new = inv_logit(u_new);
        let violates = if which == 0 { new > e2 } else { new < e1 };
        if violates {
            self.baseline_scales[which].record(0.0, false);
            return;
        }
        // uniform prior on eta: Jacobian of the logit transform only
        let d_prior = (new.ln() + log1m(new)) - (old.ln() + log1m(old));
        let setter = move |state: &mut ChainState, value: f64| {
            if let DetectionState::Fm { eta1, eta2, .. } = &mut state.detection {
                if which == 0 {
                    *eta1 = value;
                } else {
                    *eta2 = value;
                }
            }
        };
        self.propose_baseline_change(
            move |state| setter(state, new),
            move |state| setter(state, old),
            d_prior,
            which,
        );
    }

    /// Shared accept/reject for proposals that change the baseline surface.
    fn propose_baseline_change(
        &mut self,
        apply: impl Fn(&mut ChainState),
        revert: impl Fn(&mut ChainState),
        d_prior: f64,
        scale_idx: usize,
    ) {
        let old_total = self.total_loglik();
        let old_p0 = std::mem::take(&mut self.p0);
        apply(&mut self.state);
        self.p0 = self.model.resolve_baseline(&self.state);
        let new_ll: Vec<f64> = (0..self.data.m)
            .map(|i| {
                if self.state.z[i] {
                    self.row_loglik(i, &self.state.s[i].clone(), true)
                } else {
                    0.0
                }
            })
            .collect();
        let new_total: f64 = new_ll.iter().sum();
        let log_ratio = new_total - old_total + d_prior;
        let alpha = if log_ratio.is_finite() {
            log_ratio.exp().min(1.0)
        } else {
            0.0
        };
        let accept = alpha > 0.0 && self.rng.gen::<f64>() < alpha;
        if accept {
            self.loglik_i = new_ll;
        } else {
            revert(&mut self.state);
            self.p0 = old_p0;
        }
        self.baseline_scales[scale_idx].record(alpha, accept);
    }

    /// RE sigma_w on the log scale; only the W prior term depends on it.
    pub fn update_sigma_w(&mut self) {
        let scale = self.sigma_w_scale.scale();
        let eps: f64 = self.rng.sample(StandardNormal);
        if let DetectionState::Re { sigma_w, w, .. } = &mut self.state.detection {
            let u = sigma_w.ln();
            let u_new = u + scale * eps;
            let new = u_new.exp();
            if new >= self.model.spec.priors.sigma_w_upper {
                self.sigma_w_scale.record(0.0, false);
                return;
            }
            let old_prior: f64 = w.iter().map(|&wc| ln_normal_pdf(wc, 0.0, *sigma_w)).sum();
            let new_prior: f64 = w.iter().map(|&wc| ln_normal_pdf(wc, 0.0, new)).sum();
            let log_ratio = new_prior - old_prior + (u_new - u);
            let alpha = log_ratio.exp().min(1.0);
            let accept = self.rng.gen::<f64>() < alpha;
            if accept {
                *sigma_w = new;
            }
            self.sigma_w_scale.record(alpha, accept);
        }
    }

    /// SARE log phi; only the MVN W prior depends on it. A fresh Cholesky of
    /// the proposed covariance is computed; caches refresh on accept.
    pub fn update_log_phi(&mut self) {
        let scale = self.log_phi_scale.scale();
        let eps: f64 = self.rng.sample(StandardNormal);
        let (log_phi, w) = match &self.state.detection {
            DetectionState::Sare { log_phi, w, .. } => (*log_phi, w.clone()),
            _ => return,
        };
        let sd = self.model.spec.priors.log_phi_sd;
        let proposal = log_phi + scale * eps;
        let n = w.len() as f64;
        let two_pi = 2.0 * std::f64::consts::PI;
        let old_w_density = -0.5 * (self.w_quad + self.gamma_ln_det + n * two_pi.ln());
        let new_w_density = exponential_covariance(self.model.cluster_distances(), proposal.exp())
            .and_then(|c| c.factorize())
            .map(|f| f.ln_pdf(&w))
            .unwrap_or(f64::NEG_INFINITY);
        let log_ratio = new_w_density - old_w_density
            + ln_normal_pdf(proposal, 0.0, sd)
            - ln_normal_pdf(log_phi, 0.0, sd);
        let alpha = if log_ratio.is_finite() {
            log_ratio.exp().min(1.0)
        } else {
            0.0
        };
        let accept = alpha > 0.0 && self.rng.gen::<f64>() < alpha;
        if accept {
            if let DetectionState::Sare { log_phi, .. } = &mut self.state.detection {
                *log_phi = proposal;
            }
            self.refresh_sare_cache().expect("accepted phi must factorize");
        }
        self.log_phi_scale.record(alpha, accept);
    }

    /// Whitened joint update of (log phi, W). The white-noise vector
    /// z = L(phi)^{-1} W is held fixed while phi moves, so W deforms with the
    /// proposed covariance: W' = L(phi') z. In these coordinates the MVN
    /// prior on W is standard normal on z for every phi and cancels exactly,
    /// leaving only the likelihood change and the log phi prior in the
    /// acceptance ratio. This lets phi traverse regions where the marginal
    /// walk conditioned on a fixed W stalls (the conditional posterior of phi
    /// given W is much narrower than its marginal).
    pub fn update_log_phi_whitened(&mut self) {
        let (log_phi, w) = match &self.state.detection {
            DetectionState::Sare { log_phi, w, .. } => (*log_phi, w.clone()),
            _ => return,
        };
        let scale = self.log_phi_nc_scale.scale();
        let eps: f64 = self.rng.sample(StandardNormal);
        let proposal = log_phi + scale * eps;
        let dists = self.model.cluster_distances();
        let factor = |lp: f64| exponential_covariance(dists, lp.exp()).and_then(|c| c.factorize());
        let (f_cur, f_new) = match (factor(log_phi), factor(proposal)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                self.log_phi_nc_scale.record(0.0, false);
                return;
            }
        };
        let w_new = f_new.unwhiten(&f_cur.whiten(&w));
        let sd = self.model.spec.priors.log_phi_sd;
        let d_prior = ln_normal_pdf(proposal, 0.0, sd) - ln_normal_pdf(log_phi, 0.0, sd);
        let old_total = self.total_loglik();
        let old_p0 = std::mem::take(&mut self.p0);
        if let DetectionState::Sare { log_phi: lp, w: wv, .. } = &mut self.state.detection {
            *lp = proposal;
            *wv = w_new;
        }
        self.p0 = self.model.resolve_baseline(&self.state);
        let new_ll: Vec<f64> = (0..self.data.m)
            .map(|i| {
                if self.state.z[i] {
                    self.row_loglik(i, &self.state.s[i].clone(), true)
                } else {
                    0.0
                }
            })
            .collect();
        let new_total: f64 = new_ll.iter().sum();
        let log_ratio = new_total - old_total + d_prior;
        let alpha = if log_ratio.is_finite() {
            log_ratio.exp().min(1.0)
        } else {
            0.0
        };
        let accept = alpha > 0.0 && self.rng.gen::<f64>() < alpha;
        if accept {
            self.loglik_i = new_ll;
            self.refresh_sare_cache().expect("accepted phi must factorize");
        } else {
            if let DetectionState::Sare { log_phi: lp, w: wv, .. } = &mut self.state.detection {
                *lp = log_phi;
                *wv = w;
            }
            self.p0 = old_p0;
        }
        self.log_phi_nc_scale.record(alpha, accept);
    }

    /// Cluster-wise random-walk Metropolis on the random effects W.
    pub fn update_random_effects(&mut self) {
        let n_clusters = self.model.n_clusters();
        for c in 0..n_clusters {
            let scale = self.w_scales[c].scale();
            let eps: f64 = self.rng.sample(StandardNormal);
            let (wc, mu) = match &self.state.detection {
                DetectionState::Re { mu, w, .. } | DetectionState::Sare { mu, w, .. } => {
                    (w[c], *mu)
                }
                _ => return,
            };
            let wc_new = wc + scale * eps;
            let p0_new = inv_logit(mu + wc_new);
            let (d_ll, row_deltas) = self.cluster_loglik_delta(c, p0_new);
            let d_prior = match &self.state.detection {
                DetectionState::Re { sigma_w, .. } => {
                    ln_normal_pdf(wc_new, 0.0, *sigma_w) - ln_normal_pdf(wc, 0.0, *sigma_w)
                }
                DetectionState::Sare { .. } => {
                    let q = self.precision.as_ref().expect("SARE cache present");
                    let e = wc_new - wc;
                    -0.5 * (2.0 * e * self.qw[c] + e * e * q[(c, c)])
                }
                _ => unreachable!(),
            };
            let log_ratio = d_ll + d_prior;
            let alpha = if log_ratio.is_finite() {
                log_ratio.exp().min(1.0)
            } else {
                0.0
            };
            let accept = alpha > 0.0 && self.rng.gen::<f64>() < alpha;
            if accept {
                let e = wc_new - wc;
                if let DetectionState::Sare { .. } = self.state.detection {
                    let q = self.precision.as_ref().unwrap();
                    self.w_quad += 2.0 * e * self.qw[c] + e * e * q[(c, c)];
                    let col: Vec<f64> = (0..self.qw.len()).map(|r| q[(r, c)]).collect();
                    for (r, qc) in col.into_iter().enumerate() {
                        self.qw[r] += e * qc;
                    }
                }
                match &mut self.state.detection {
                    DetectionState::Re { w, .. } | DetectionState::Sare { w, .. } => {
                        w[c] = wc_new;
                    }
                    _ => unreachable!(),
                }
                for &j in self.model.clusters.members(c) {
                    self.p0[j] = p0_new;
                }
                for (i, d) in row_deltas {
                    self.loglik_i[i] += d;
                }
            }
            self.w_scales[c].record(alpha, accept);
        }
    }

    /// Joint translation mu -> mu + e, W -> W - e for RE and SARE. Every
    /// logit(p0_j) = mu + W_c is unchanged, so the likelihood cancels and
    /// only the priors enter the acceptance ratio. This breaks the posterior
    /// ridge between the intercept and the random-effect mean that otherwise
    /// stalls mu when it is only moved marginally.
    pub fn update_baseline_translation(&mut self) {
        let scale = self.translation_scale.scale();
        let eps: f64 = self.rng.sample(StandardNormal);
        let e = scale * eps;
        let mu_sd = self.model.spec.priors.mu_sd;
        let log_ratio = match &self.state.detection {
            DetectionState::Re { mu, sigma_w, w } => {
                let d_mu = ln_normal_pdf(mu + e, 0.0, mu_sd) - ln_normal_pdf(*mu, 0.0, mu_sd);
                let d_w: f64 = w
                    .iter()
                    .map(|&wc| {
                        ln_normal_pdf(wc - e, 0.0, *sigma_w) - ln_normal_pdf(wc, 0.0, *sigma_w)
                    })
                    .sum();
                d_mu + d_w
            }
            DetectionState::Sare { mu, .. } => {
                // (w - e 1)' Q (w - e 1) - w' Q w = -2 e 1'Qw + e^2 1'Q1
                let q = self.precision.as_ref().expect("SARE cache present");
                let sum_qw: f64 = self.qw.iter().sum();
                let one_q_one: f64 = q.iter().sum();
                let d_quad = -2.0 * e * sum_qw + e * e * one_q_one;
                let d_mu = ln_normal_pdf(mu + e, 0.0, mu_sd) - ln_normal_pdf(*mu, 0.0, mu_sd);
                d_mu - 0.5 * d_quad
            }
            _ => return,
        };
        let alpha = if log_ratio.is_finite() {
            log_ratio.exp().min(1.0)
        } else {
            0.0
        };
        let accept = alpha > 0.0 && self.rng.gen::<f64>() < alpha;
        if accept {
            if let DetectionState::Sare { .. } = self.state.detection {
                let q = self.precision.as_ref().unwrap();
                let sum_qw: f64 = self.qw.iter().sum();
                let one_q_one: f64 = q.iter().sum();
                self.w_quad += -2.0 * e * sum_qw + e * e * one_q_one;
                let row_sums: Vec<f64> = (0..self.qw.len()).map(|r| q.row(r).sum()).collect();
                for (r, rs) in row_sums.into_iter().enumerate() {
                    self.qw[r] -= e * rs;
                }
            }
            match &mut self.state.detection {
                DetectionState::Re { mu, w, .. } | DetectionState::Sare { mu, w, .. } => {
                    *mu += e;
                    for wc in w.iter_mut() {
                        *wc -= e;
                    }
                }
                _ => unreachable!(),
            }
            // p0 and all row log-likelihoods are unchanged by construction
        }
        self.translation_scale.record(alpha, accept);
    }

    /// Current SARE caches (Q w and w' Q w), for consistency checks.
    #[cfg(test)]
    pub(crate) fn sare_cache(&self) -> (&[f64], f64) {
        (&self.qw, self.w_quad)
    }

    /// Conditional probability that cluster `c` belongs to the high-detection
    /// group, given the current latents and the supplied FM parameters.
    pub fn membership_probability(&self, c: usize, eta1: f64, eta2: f64, pi: f64) -> f64 {
        let (l1, _) = self.cluster_loglik_at(c, eta1);
        let (l2, _) = self.cluster_loglik_at(c, eta2);
        let ln1 = log1m(pi) + l1;
        let ln2 = pi.ln() + l2;
        (ln2 - log_add_exp(ln1, ln2)).exp()
    }

    /// Exact Gibbs update of the FM group memberships u_c and pi.
    pub fn update_membership(&mut self) {
        let (eta1, eta2, pi) = match &self.state.detection {
            DetectionState::Fm { eta1, eta2, pi, .. } => (*eta1, *eta2, *pi),
            _ => return,
        };
        let n_clusters = self.model.n_clusters();
        for c in 0..n_clusters {
            let u_cur = match &self.state.detection {
                DetectionState::Fm { u, .. } => u[c],
                _ => unreachable!(),
            };
            let (l1, rows1) = self.cluster_loglik_at(c, eta1);
            let (l2, rows2) = self.cluster_loglik_at(c, eta2);
            let ln1 = log1m(pi) + l1;
            let ln2 = pi.ln() + l2;
            let pr2 = (ln2 - log_add_exp(ln1, ln2)).exp();
            let u_new = self.rng.gen::<f64>() < pr2;
            if u_new != u_cur {
                let (p0_new, rows_new, rows_old) = if u_new {
                    (eta2, &rows2, &rows1)
                } else {
                    (eta1, &rows1, &rows2)
                };
                for &j in self.model.clusters.members(c) {
                    self.p0[j] = p0_new;
                }
                for (&(i, new), &(_, old)) in rows_new.iter().zip(rows_old.iter()) {
                    self.loglik_i[i] += new - old;
                }
                if let DetectionState::Fm { u, .. } = &mut self.state.detection {
                    u[c] = u_new;
                }
            }
        }
        // pi | u ~ Beta(1 + sum u, 1 + n_clusters - sum u)
        if let DetectionState::Fm { pi, u, .. } = &mut self.state.detection {
            let k = u.iter().filter(|&&b| b).count();
            let beta = Beta::new(1.0 + k as f64, 1.0 + (u.len() - k) as f64).unwrap();
            *pi = self.rng.sample(beta);
        }
    }

    /// Change in detection log-likelihood if every detector in cluster `c`
    /// switched its baseline to `p0_new`, with per-row deltas.
    fn cluster_loglik_delta(&self, c: usize, p0_new: f64) -> (f64, Vec<(usize, f64)>) {
        let members = self.model.clusters.members(c);
        let mut total = 0.0;
        let mut rows = Vec::new();
        if self.prior_only {
            return (0.0, rows);
        }
        let two_sigma_sq = 2.0 * self.state.sigma * self.state.sigma;
        let radius_sq = self.model.spec.radius.map(|r| r * r);
        for i in 0..self.data.m {
            if !self.state.z[i] {
                continue;
            }
            let s = &self.state.s[i];
            let row = self.data.row(i);
            let mut delta = 0.0;
            for &j in members {
                let det = self.model.grid.coord(j);
                let d_sq = (s.x - det.x).powi(2) + (s.y - det.y).powi(2);
                if let Some(r2) = radius_sq {
                    if d_sq > r2 {
                        continue; // p = 0 under old and new baseline alike
                    }
                }
                let g = (-d_sq / two_sigma_sq).exp();
                let (p_old, p_new) = (self.p0[j] * g, p0_new * g);
                delta += if row[j] == 1 {
                    p_new.ln() - p_old.ln()
                } else {
                    log1m(p_new) - log1m(p_old)
                };
            }
            if delta != 0.0 {
                total += delta;
                rows.push((i, delta));
            }
        }
        (total, rows)
    }

    /// Detection log-likelihood restricted to cluster `c` with baseline
    /// `p0_val` at its detectors, with per-row values.
    fn cluster_loglik_at(&self, c: usize, p0_val: f64) -> (f64, Vec<(usize, f64)>) {
        let members = self.model.clusters.members(c);
        let mut total = 0.0;
        let mut rows = Vec::new();
        if self.prior_only {
            return (0.0, rows);
        }
        let two_sigma_sq = 2.0 * self.state.sigma * self.state.sigma;
        let radius_sq = self.model.spec.radius.map(|r| r * r);
        for i in 0..self.data.m {
            if !self.state.z[i] {
                rows.push((i, 0.0));
                continue;
            }
            let s = &self.state.s[i];
            let row = self.data.row(i);
            let mut ll = 0.0;
            for &j in members {
                let det = self.model.grid.coord(j);
                let d_sq = (s.x - det.x).powi(2) + (s.y - det.y).powi(2);
                let p = match radius_sq {
                    Some(r2) if d_sq > r2 => 0.0,
                    _ => p0_val * (-d_sq / two_sigma_sq).exp(),
                };
                ll += if row[j] == 1 {
                    if p > 0.0 {
                        p.ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    log1m(p)
                };
            }
            total += ll;
            rows.push((i, ll));
        }
        (total, rows)
    }

    /// One full sweep in the fixed kernel order.
    pub fn sweep(&mut self) {
        self.update_inclusion();
        self.update_activity_centers();
        self.update_scalars();
        match self.model.spec.kind {
            ModelKind::Re | ModelKind::Sare => {
                self.update_random_effects();
                // the hyperparameter kernels cost no likelihood evaluations,
                // so several repeats per sweep buy effective samples almost
                // for free on the poorly mixing mu and phi directions
                for _ in 0..EXTRA_HYPER_UPDATES {
                    self.update_baseline_translation();
                    match self.model.spec.kind {
                        ModelKind::Re => self.update_sigma_w(),
                        ModelKind::Sare => self.update_log_phi(),
                        _ => unreachable!(),
                    }
                }
                if self.model.spec.kind == ModelKind::Sare {
                    for _ in 0..WHITENED_PHI_UPDATES {
                        self.update_log_phi_whitened();
                    }
                }
            }
            ModelKind::Fm => self.update_membership(),
            _ => {}
        }
    }

    /// z-marginalized per-row log-likelihood f(Y_i | theta) for WAIC,
    /// conditional on the current activity centers.
    pub fn pointwise_loglik(&self) -> Vec<f64> {
        let psi = self.state.psi;
        (0..self.data.m)
            .map(|i| {
                let detected = self.data.row(i).iter().any(|&v| v == 1);
                if detected {
                    let l1 = if self.state.z[i] {
                        self.loglik_i[i]
                    } else {
                        self.row_loglik(i, &self.state.s[i], true)
                    };
                    psi.ln() + l1
                } else {
                    let l0 = if self.state.z[i] {
                        self.loglik_i[i]
                    } else {
                        self.row_loglik(i, &self.state.s[i], true)
                    };
                    log_add_exp(psi.ln() + l0, log1m(psi))
                }
            })
            .collect()
    }
}

fn mean_rate(scales: &[AdaptiveScale]) -> f64 {
    let rates: Vec<f64> = scales
        .iter()
        .map(|s| s.acceptance_rate())
        .filter(|r| r.is_finite())
        .collect();
    if rates.is_empty() {
        f64::NAN
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    }
}

/// Deterministic initialization with a guaranteed-finite posterior:
/// detected ACs at their detection centroid, psi = 0.5, sigma = 2,
/// location parameter from the overall detection frequency.
pub fn initial_state<R: Rng>(model: &Model, data: &SimulatedDataset, rng: &mut R) -> ChainState {
    let m = data.m;
    let psi = 0.5;
    let freq = if data.n_detected > 0 {
        (data.total_detections() as f64 / (data.n_detected * data.n_detectors) as f64)
            .clamp(0.01, 0.99)
    } else {
        0.01
    };
    let mu0 = logit(freq);
    let n_clusters = model.n_clusters();
    let detection = match model.spec.kind {
        ModelKind::Scr => DetectionState::Scr { p0: freq },
        ModelKind::Re => DetectionState::Re {
            mu: mu0,
            sigma_w: 1.0,
            w: vec![0.0; n_clusters],
        },
        ModelKind::Sare => DetectionState::Sare {
            mu: mu0,
            log_phi: 0.0,
            w: vec![0.0; n_clusters],
        },
        ModelKind::Fm => DetectionState::Fm {
            eta1: freq / 2.0,
            eta2: freq,
            pi: 0.5,
            u: vec![true; n_clusters],
        },
        ModelKind::Fe => DetectionState::Fe { mu: mu0 },
    };
    let mut s = Vec::with_capacity(m);
    let mut z = Vec::with_capacity(m);
    for i in 0..m {
        let detections = data.detections_of(i);
        if detections.is_empty() {
            s.push(Point::new(
                rng.gen_range(model.habitat.xmin..=model.habitat.xmax),
                rng.gen_range(model.habitat.ymin..=model.habitat.ymax),
            ));
            z.push(rng.gen::<f64>() < psi);
        } else {
            let n = detections.len() as f64;
            let (sx, sy) = detections.iter().fold((0.0, 0.0), |(sx, sy), &j| {
                let p = model.grid.coord(j);
                (sx + p.x, sy + p.y)
            });
            s.push(Point::new(sx / n, sy / n));
            z.push(true);
        }
    }
    ChainState {
        psi,
        sigma: 2.0,
        detection,
        s,
        z,
    }
}
