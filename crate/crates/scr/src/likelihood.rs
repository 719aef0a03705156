//! Model definitions for the five fitted models (SCR, RE, SARE, FM, FE):
//! parameter layouts, priors, and log-likelihood / log-posterior evaluation
//! with optional local truncation of detection terms.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{ClusterMap, DetectorGrid, Habitat, Point};
use crate::simulate::SimulatedDataset;
use crate::surfaces::exponential_covariance;
use crate::util::{inv_logit, ln_normal_pdf, log1m};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Scr,
    Re,
    Sare,
    Fm,
    Fe,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Scr => "SCR",
            ModelKind::Re => "RE",
            ModelKind::Sare => "SARE",
            ModelKind::Fm => "FM",
            ModelKind::Fe => "FE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SCR" => Ok(ModelKind::Scr),
            "RE" => Ok(ModelKind::Re),
            "SARE" => Ok(ModelKind::Sare),
            "FM" => Ok(ModelKind::Fm),
            "FE" => Ok(ModelKind::Fe),
            other => Err(Error::ModelSpec(format!(
                "unknown model kind '{other}'; expected SCR, RE, SARE, FM, or FE"
            ))),
        }
    }
}

/// Prior hyperparameters. Defaults follow the fitted-model priors:
/// psi ~ U(0,1), sigma ~ U(0, 50), mu and logit(p0) ~ N(0, 2^2),
/// log phi ~ N(0, 5^2), sigma_w ~ U(0, 10), eta1/eta2/pi ~ U(0, 1).
#[derive(Debug, Clone, Copy)]
pub struct Priors {
    pub sigma_upper: f64,
    pub mu_sd: f64,
    pub log_phi_sd: f64,
    pub sigma_w_upper: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            sigma_upper: 50.0,
            mu_sd: 2.0,
            log_phi_sd: 5.0,
            sigma_w_upper: 10.0,
        }
    }
}

/// Which model to fit and how.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Random-effect aggregation factor; 1 = per-detector effects.
    pub aggregation: usize,
    /// Local-evaluation radius in du; `None` evaluates all detectors.
    pub radius: Option<f64>,
    pub priors: Priors,
    /// FE only: the known per-detector covariate.
    pub covariate: Option<Vec<f64>>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, aggregation: usize) -> Self {
        ModelSpec {
            kind,
            aggregation,
            radius: Some(DEFAULT_LOCAL_RADIUS),
            priors: Priors::default(),
            covariate: None,
        }
    }

    pub fn label(&self) -> String {
        if self.aggregation > 1 {
            format!("{}-{}x{}", self.kind.name(), self.aggregation, self.aggregation)
        } else {
            self.kind.name().to_string()
        }
    }
}

/// Default local-evaluation radius, fixed per run and independent of the
/// current sigma sample (> 6 true sigma for the simulated scenarios).
pub const DEFAULT_LOCAL_RADIUS: f64 = 10.0;

/// Model-specific detection parameters of one MCMC state.
#[derive(Debug, Clone)]
pub enum DetectionState {
    Scr { p0: f64 },
    Re { mu: f64, sigma_w: f64, w: Vec<f64> },
    Sare { mu: f64, log_phi: f64, w: Vec<f64> },
    Fm { eta1: f64, eta2: f64, pi: f64, u: Vec<bool> },
    Fe { mu: f64 },
}

/// One full MCMC state: top-level parameters plus latent variables.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub psi: f64,
    pub sigma: f64,
    pub detection: DetectionState,
    /// Activity centers, length M.
    pub s: Vec<Point>,
    /// Inclusion flags, length M.
    pub z: Vec<bool>,
}

impl ChainState {
    pub fn population_size(&self) -> usize {
        self.z.iter().filter(|&&zi| zi).count()
    }
}

/// A model bound to the geometry it is fitted on.
pub struct Model {
    pub spec: ModelSpec,
    pub grid: DetectorGrid,
    pub habitat: Habitat,
    pub clusters: ClusterMap,
    cluster_distances: DMatrix<f64>,
}

impl Model {
    pub fn new(spec: ModelSpec, grid: DetectorGrid, habitat: Habitat) -> Result<Self> {
        if spec.kind == ModelKind::Fe {
            let cov = spec
                .covariate
                .as_ref()
                .ok_or_else(|| Error::ModelSpec("FE requires covariate".into()))?;
            if cov.len() != grid.n_detectors() {
                return Err(Error::ModelSpec(format!(
                    "FE covariate length {} does not match J = {}",
                    cov.len(),
                    grid.n_detectors()
                )));
            }
            if spec.aggregation != 1 {
                return Err(Error::ModelSpec(
                    "FE is fitted without aggregation".into(),
                ));
            }
        }
        let clusters = ClusterMap::build(&grid, spec.aggregation)?;
        let cluster_distances = clusters.centroid_distances();
        Ok(Model {
            spec,
            grid,
            habitat,
            clusters,
            cluster_distances,
        })
    }

    pub fn n_detectors(&self) -> usize {
        self.grid.n_detectors()
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.n_clusters()
    }

    /// Distances between cluster centroids (SARE covariance support).
    pub fn cluster_distances(&self) -> &DMatrix<f64> {
        &self.cluster_distances
    }

    /// Expands the state's detection parameters into the per-detector
    /// baseline vector p0. The single path from parameters to p0.
    pub fn resolve_baseline(&self, state: &ChainState) -> Vec<f64> {
        let j = self.n_detectors();
        match &state.detection {
            DetectionState::Scr { p0 } => vec![*p0; j],
            DetectionState::Re { mu, w, .. } | DetectionState::Sare { mu, w, .. } => (0..j)
                .map(|jj| inv_logit(mu + w[self.clusters.cluster_of(jj)]))
                .collect(),
            DetectionState::Fm { eta1, eta2, u, .. } => (0..j)
                .map(|jj| {
                    if u[self.clusters.cluster_of(jj)] {
                        *eta2
                    } else {
                        *eta1
                    }
                })
                .collect(),
            DetectionState::Fe { mu } => {
                let cov = self.spec.covariate.as_ref().expect("validated at build");
                cov.iter().map(|&wj| inv_logit(mu + wj)).collect()
            }
        }
    }

    /// Sum of prior log-densities for the top-level parameters.
    pub fn log_prior(&self, state: &ChainState) -> f64 {
        let pr = &self.spec.priors;
        let mut lp = 0.0;
        if !(state.psi > 0.0 && state.psi < 1.0) {
            return f64::NEG_INFINITY;
        }
        if !(state.sigma > 0.0 && state.sigma < pr.sigma_upper) {
            return f64::NEG_INFINITY;
        }
        lp -= pr.sigma_upper.ln();
        match &state.detection {
            DetectionState::Scr { p0 } => {
                if !(*p0 > 0.0 && *p0 < 1.0) {
                    return f64::NEG_INFINITY;
                }
                // logit(p0) ~ N(0, mu_sd^2), density on the probability scale
                let u = (p0 / (1.0 - p0)).ln();
                lp += ln_normal_pdf(u, 0.0, pr.mu_sd) - p0.ln() - (1.0 - p0).ln();
            }
            DetectionState::Re { mu, sigma_w, .. } => {
                lp += ln_normal_pdf(*mu, 0.0, pr.mu_sd);
                if !(*sigma_w > 0.0 && *sigma_w < pr.sigma_w_upper) {
                    return f64::NEG_INFINITY;
                }
                lp -= pr.sigma_w_upper.ln();
            }
            DetectionState::Sare { mu, log_phi, .. } => {
                lp += ln_normal_pdf(*mu, 0.0, pr.mu_sd);
                lp += ln_normal_pdf(*log_phi, 0.0, pr.log_phi_sd);
            }
            DetectionState::Fm { eta1, eta2, pi, .. } => {
                // bounded uniforms with the identifiability constraint eta1 <= eta2
                if !(*eta1 > 0.0 && *eta1 < 1.0 && *eta2 > 0.0 && *eta2 < 1.0) {
                    return f64::NEG_INFINITY;
                }
                if !(*pi > 0.0 && *pi < 1.0) {
                    return f64::NEG_INFINITY;
                }
                if eta1 > eta2 {
                    return f64::NEG_INFINITY;
                }
            }
            DetectionState::Fe { mu } => {
                lp += ln_normal_pdf(*mu, 0.0, pr.mu_sd);
            }
        }
        lp
    }

    /// Log-density of the random-effect vector under its prior: independent
    /// normals for RE, MVN(0, Gamma(phi)) over cluster centroids for SARE.
    pub fn w_log_prior(&self, state: &ChainState) -> f64 {
        match &state.detection {
            DetectionState::Re { sigma_w, w, .. } => {
                if !(*sigma_w > 0.0) {
                    return f64::NEG_INFINITY;
                }
                w.iter().map(|&wc| ln_normal_pdf(wc, 0.0, *sigma_w)).sum()
            }
            DetectionState::Sare { log_phi, w, .. } => {
                let phi = log_phi.exp();
                match exponential_covariance(&self.cluster_distances, phi)
                    .and_then(|c| c.factorize())
                {
                    Ok(f) => f.ln_pdf(w),
                    Err(_) => f64::NEG_INFINITY,
                }
            }
            _ => 0.0,
        }
    }

    /// Log of the z-prior, AC-prior, and detection likelihood for all
    /// individuals, given the resolved baseline vector.
    pub fn latent_loglik(&self, state: &ChainState, data: &SimulatedDataset, p0: &[f64]) -> f64 {
        let mut total = 0.0;
        let ln_area = self.habitat.area().ln();
        for i in 0..data.m {
            total += if state.z[i] {
                state.psi.ln()
            } else {
                log1m(state.psi)
            };
            if !self.habitat.contains(&state.s[i]) {
                return f64::NEG_INFINITY;
            }
            total -= ln_area;
            total += individual_loglik(
                data.row(i),
                &state.s[i],
                state.z[i],
                p0,
                state.sigma,
                &self.grid,
                self.spec.radius,
            );
        }
        total
    }

    /// Full log-posterior density (up to a constant).
    pub fn full_logposterior(&self, state: &ChainState, data: &SimulatedDataset) -> f64 {
        let lp = self.log_prior(state);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let wp = self.w_log_prior(state);
        if wp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let p0 = self.resolve_baseline(state);
        lp + wp + self.latent_loglik(state, data, &p0)
    }
}

/// Half-normal detection function p = p0 * exp(-d^2 / (2 sigma^2)).
pub fn half_normal_detection(p0: f64, d: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    Ok(p0 * (-d * d / (2.0 * sigma * sigma)).exp())
}

/// Log-likelihood of one capture-history row given its latent AC and
/// inclusion flag. With a finite radius, detectors beyond it contribute
/// detection probability zero.
pub fn individual_loglik(
    y_row: &[u8],
    s: &Point,
    z: bool,
    p0: &[f64],
    sigma: f64,
    grid: &DetectorGrid,
    radius: Option<f64>,
) -> f64 {
    if !z {
        // undetectable individual: any detection is impossible
        return if y_row.iter().any(|&v| v == 1) {
            f64::NEG_INFINITY
        } else {
            0.0
        };
    }
    let two_sigma_sq = 2.0 * sigma * sigma;
    let radius_sq = radius.map(|r| r * r);
    let mut total = 0.0;
    for (j, det) in grid.coords().iter().enumerate() {
        let dx = s.x - det.x;
        let dy = s.y - det.y;
        let d_sq = dx * dx + dy * dy;
        let p = match radius_sq {
            Some(r2) if d_sq > r2 => 0.0,
            _ => p0[j] * (-d_sq / two_sigma_sq).exp(),
        };
        total += if y_row[j] == 1 {
            if p > 0.0 {
                p.ln()
            } else {
                return f64::NEG_INFINITY;
            }
        } else {
            log1m(p)
        };
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DetectorGrid, Habitat};
    use crate::simulate::{scenario_by_id, simulate_scenario};
    use crate::util::logit;
    use approx::assert_relative_eq;

    fn toy_model(kind: ModelKind, aggregation: usize, nx: usize, ny: usize) -> Model {
        let grid = DetectorGrid::build(nx, ny, 1.0, Point::ORIGIN).unwrap();
        let habitat = Habitat::build(&grid, 2.0).unwrap();
        let mut spec = ModelSpec::new(kind, aggregation);
        spec.radius = None;
        if kind == ModelKind::Fe {
            spec.covariate = Some(vec![0.0; grid.n_detectors()]);
        }
        Model::new(spec, grid, habitat).unwrap()
    }

    fn base_state(_model: &Model, detection: DetectionState, m: usize) -> ChainState {
        ChainState {
            psi: 0.5,
            sigma: 1.5,
            detection,
            s: vec![Point::ORIGIN; m],
            z: vec![true; m],
        }
    }

    #[test]
    fn half_normal_values() {
        assert_relative_eq!(half_normal_detection(0.3, 0.0, 1.5).unwrap(), 0.3);
        let sigma = 1.5;
        let half_max_d = sigma * (2.0 * 2f64.ln()).sqrt();
        assert_relative_eq!(
            half_normal_detection(0.4, half_max_d, sigma).unwrap(),
            0.2,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            half_normal_detection(0.6, 3.0, 1.5).unwrap(),
            0.6 * (-2.0f64).exp(),
            epsilon = 1e-12
        );
        assert!(half_normal_detection(0.5, 1.0, 0.0).is_err());
        assert!(half_normal_detection(0.5, 1.0, -1.0).is_err());
    }

    #[test]
    fn resolve_baseline_scr_constant() {
        let model = toy_model(ModelKind::Scr, 1, 32, 32);
        let state = base_state(&model, DetectionState::Scr { p0: 0.2 }, 1);
        let p0 = model.resolve_baseline(&state);
        assert_eq!(p0.len(), 1024);
        assert!(p0.iter().all(|&p| p == 0.2));
    }

    #[test]
    fn resolve_baseline_fm_single_group() {
        let model = toy_model(ModelKind::Fm, 2, 4, 4);
        let state = base_state(
            &model,
            DetectionState::Fm {
                eta1: 0.1,
                eta2: 0.4,
                pi: 0.5,
                u: vec![true; 4],
            },
            1,
        );
        assert!(model.resolve_baseline(&state).iter().all(|&p| p == 0.4));
    }

    #[test]
    fn resolve_baseline_re_logit_inversion() {
        let model = toy_model(ModelKind::Re, 2, 4, 4);
        let state = base_state(
            &model,
            DetectionState::Re {
                mu: logit(0.3),
                sigma_w: 1.0,
                w: vec![0.0; 4],
            },
            1,
        );
        for p in model.resolve_baseline(&state) {
            assert_relative_eq!(p, 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn resolve_baseline_identical_within_cluster() {
        let model = toy_model(ModelKind::Sare, 2, 4, 4);
        let state = base_state(
            &model,
            DetectionState::Sare {
                mu: 0.0,
                log_phi: 0.0,
                w: vec![-0.3, 0.2, 0.9, -1.4],
            },
            1,
        );
        let p0 = model.resolve_baseline(&state);
        for j in 0..16 {
            let c = model.clusters.cluster_of(j);
            let expected = inv_logit(state_w(&state)[c]);
            assert_relative_eq!(p0[j], expected, epsilon = 1e-12);
        }
    }

    fn state_w(state: &ChainState) -> Vec<f64> {
        match &state.detection {
            DetectionState::Sare { mu, w, .. } => w.iter().map(|wc| mu + wc).collect(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn individual_loglik_simple_cases() {
        let grid = DetectorGrid::build(1, 1, 1.0, Point::ORIGIN).unwrap();
        // z = 0 with all-zero row
        assert_eq!(
            individual_loglik(&[0], &Point::ORIGIN, false, &[0.5], 1.0, &grid, None),
            0.0
        );
        // z = 0 with a detection is impossible
        assert_eq!(
            individual_loglik(&[1], &Point::ORIGIN, false, &[0.5], 1.0, &grid, None),
            f64::NEG_INFINITY
        );
        // single Bernoulli at distance 0
        assert_relative_eq!(
            individual_loglik(&[1], &Point::ORIGIN, true, &[0.5], 1.0, &grid, None),
            0.5f64.ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn individual_loglik_matches_term_by_term() {
        let grid = DetectorGrid::build(3, 1, 1.0, Point::ORIGIN).unwrap();
        let p0 = [0.3, 0.6, 0.1];
        let s = Point::new(0.4, 0.2);
        let sigma = 1.1;
        let y = [1u8, 0, 1];
        let mut expected = 0.0;
        for j in 0..3 {
            let d = s.distance(&grid.coord(j));
            let p = p0[j] * (-d * d / (2.0 * sigma * sigma)).exp();
            expected += if y[j] == 1 { p.ln() } else { (1.0 - p).ln() };
        }
        let got = individual_loglik(&y, &s, true, &p0, sigma, &grid, None);
        assert_relative_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn radius_truncation_is_negligible_at_10_sigma() {
        let s = scenario_by_id(3).unwrap().with_scale(16, 16, 40, 80);
        let data = simulate_scenario(&s, 21).unwrap();
        let grid = s.grid().unwrap();
        let habitat = s.habitat().unwrap();
        let mut spec = ModelSpec::new(ModelKind::Scr, 1);
        spec.radius = None;
        let model_full = Model::new(spec.clone(), grid.clone(), habitat).unwrap();
        spec.radius = Some(10.0 * 1.5);
        let model_trunc = Model::new(spec, grid, s.habitat().unwrap()).unwrap();

        let mut state = base_state(&model_full, DetectionState::Scr { p0: 0.3 }, data.m);
        // place ACs at truth for detected, center otherwise
        let truth = data.truth.as_ref().unwrap();
        for i in 0..truth.acs.len() {
            state.s[i] = truth.acs[i];
        }
        for i in truth.n_true..data.m {
            state.z[i] = false;
        }
        let a = model_full.full_logposterior(&state, &data);
        let b = model_trunc.full_logposterior(&state, &data);
        assert!((a - b).abs() < 1e-6, "truncation error {}", (a - b).abs());
    }

    #[test]
    fn log_prior_support_boundaries() {
        let model = toy_model(ModelKind::Scr, 1, 2, 2);
        let mut state = base_state(&model, DetectionState::Scr { p0: 0.2 }, 1);
        state.sigma = 60.0;
        assert_eq!(model.log_prior(&state), f64::NEG_INFINITY);

        let model = toy_model(ModelKind::Fm, 1, 2, 2);
        let state = base_state(
            &model,
            DetectionState::Fm {
                eta1: 0.4,
                eta2: 0.2,
                pi: 0.5,
                u: vec![false; 4],
            },
            1,
        );
        assert_eq!(model.log_prior(&state), f64::NEG_INFINITY);
    }

    #[test]
    fn sare_mu_prior_density_at_zero() {
        let model = toy_model(ModelKind::Sare, 1, 2, 2);
        let state = base_state(
            &model,
            DetectionState::Sare {
                mu: 0.0,
                log_phi: 0.0,
                w: vec![0.0; 4],
            },
            1,
        );
        // contributions: -ln(50) for sigma, N(0,2^2) at 0 for mu, N(0,5^2) at 0 for log phi
        let expected = -50f64.ln()
            + ln_normal_pdf(0.0, 0.0, 2.0)
            + ln_normal_pdf(0.0, 0.0, 5.0);
        assert_relative_eq!(model.log_prior(&state), expected, epsilon = 1e-12);
        // and the mu term alone equals -log(2 sqrt(2 pi))
        assert_relative_eq!(
            ln_normal_pdf(0.0, 0.0, 2.0),
            -(2.0 * (2.0 * std::f64::consts::PI).sqrt()).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sare_identity_limit_matches_independent_normals() {
        let model = toy_model(ModelKind::Sare, 1, 3, 3);
        let w: Vec<f64> = (0..9).map(|i| (i as f64 - 4.0) * 0.3).collect();
        let sare = base_state(
            &model,
            DetectionState::Sare {
                mu: 0.0,
                log_phi: 20.0, // phi astronomically large: Gamma -> identity
                w: w.clone(),
            },
            1,
        );
        let re_model = toy_model(ModelKind::Re, 1, 3, 3);
        let re = base_state(
            &re_model,
            DetectionState::Re {
                mu: 0.0,
                sigma_w: 1.0,
                w: w.clone(),
            },
            1,
        );
        assert_relative_eq!(
            model.w_log_prior(&sare),
            re_model.w_log_prior(&re),
            epsilon = 1e-8
        );
    }

    #[test]
    fn state_outside_habitat_is_impossible() {
        let s = scenario_by_id(1).unwrap().with_scale(2, 2, 2, 4);
        let data = simulate_scenario(&s, 1).unwrap();
        // rebuild model on the dataset geometry
        let grid = s.grid().unwrap();
        let habitat = s.habitat().unwrap();
        let mut spec = ModelSpec::new(ModelKind::Scr, 1);
        spec.radius = None;
        let model = Model::new(spec, grid, habitat).unwrap();
        let _ = &model;
        let mut state = base_state(&model, DetectionState::Scr { p0: 0.2 }, data.m);
        state.z = data
            .row(0)
            .iter()
            .any(|&v| v == 1)
            .then(|| {
                let mut z = vec![false; data.m];
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi = i < data.n_detected;
                }
                z
            })
            .unwrap_or_else(|| vec![false; data.m]);
        state.s[0] = Point::new(1e6, 0.0);
        assert_eq!(model.full_logposterior(&state, &data), f64::NEG_INFINITY);
    }

    #[test]
    fn permutation_invariance_of_logposterior() {
        let s = scenario_by_id(1).unwrap().with_scale(4, 4, 6, 12);
        let data = simulate_scenario(&s, 9).unwrap();
        let grid = s.grid().unwrap();
        let habitat = s.habitat().unwrap();
        let mut spec = ModelSpec::new(ModelKind::Scr, 1);
        spec.radius = None;
        let model = Model::new(spec, grid, habitat).unwrap();
        let mut state = base_state(&model, DetectionState::Scr { p0: 0.25 }, data.m);
        for i in 0..data.m {
            state.z[i] = i < data.n_detected || i % 3 == 0;
            state.s[i] = Point::new(-1.0 + 0.3 * i as f64 % 4.0, 0.2 * (i as f64 % 5.0) - 1.0);
        }
        let lp = model.full_logposterior(&state, &data);

        // permute rows together with their latents
        let perm: Vec<usize> = (0..data.m).rev().collect();
        let mut y2 = Vec::with_capacity(data.m * data.n_detectors);
        for &i in &perm {
            y2.extend_from_slice(data.row(i));
        }
        let data2 = SimulatedDataset::from_parts(
            y2,
            data.m,
            data.n_detectors,
            data.n_detected,
            None,
            s.clone(),
            data.seed,
        );
        let mut state2 = state.clone();
        for (new_i, &old_i) in perm.iter().enumerate() {
            state2.s[new_i] = state.s[old_i];
            state2.z[new_i] = state.z[old_i];
        }
        let lp2 = model.full_logposterior(&state2, &data2);
        assert_relative_eq!(lp, lp2, epsilon = 1e-12);
    }

    #[test]
    fn fe_requires_covariate_of_right_length() {
        let grid = DetectorGrid::build(2, 2, 1.0, Point::ORIGIN).unwrap();
        let habitat = Habitat::build(&grid, 1.0).unwrap();
        let spec = ModelSpec::new(ModelKind::Fe, 1);
        assert!(Model::new(spec, grid.clone(), habitat).is_err());
        let mut spec = ModelSpec::new(ModelKind::Fe, 1);
        spec.covariate = Some(vec![0.0; 3]);
        let habitat = Habitat::build(&grid, 1.0).unwrap();
        assert!(Model::new(spec, grid, habitat).is_err());
    }
}
