//! Study configuration loaded from TOML: which scenarios to simulate, which
//! models to fit, grid scale, and MCMC settings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::likelihood::{ModelKind, DEFAULT_LOCAL_RADIUS};
use crate::mcmc::McmcConfig;
use crate::simulate::{scenario_by_id, Scenario};

/// Parses a model label: a kind name (`SCR`) or kind plus aggregation
/// (`SARE-4x4`).
pub fn parse_model_label(label: &str) -> Result<(ModelKind, usize)> {
    match label.split_once('-') {
        None => Ok((ModelKind::parse(label)?, 1)),
        Some((kind, agg)) => {
            let kind = ModelKind::parse(kind)?;
            let (a, b) = agg.split_once('x').ok_or_else(|| {
                Error::Config(format!(
                    "aggregation suffix '{agg}' must look like 4x4"
                ))
            })?;
            let fa: usize = a.parse().map_err(|_| {
                Error::Config(format!("bad aggregation factor '{a}' in '{label}'"))
            })?;
            let fb: usize = b.parse().map_err(|_| {
                Error::Config(format!("bad aggregation factor '{b}' in '{label}'"))
            })?;
            if fa != fb {
                return Err(Error::Config(format!(
                    "aggregation must be square, got '{label}'"
                )));
            }
            if fa == 0 {
                return Err(Error::Config(format!(
                    "aggregation factor must be positive in '{label}'"
                )));
            }
            Ok((kind, fa))
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    study: RawStudy,
    #[serde(default)]
    scale: Option<RawScale>,
    #[serde(default)]
    mcmc: RawMcmc,
    #[serde(default)]
    iterations: BTreeMap<String, RawIterations>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    seed: u64,
    n_replicates: usize,
    #[serde(default)]
    scenarios: Option<Vec<u32>>,
    models: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScale {
    nx: usize,
    ny: usize,
    n_true: usize,
    m: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMcmc {
    n_chains: Option<usize>,
    thin: Option<usize>,
    target_acceptance: Option<f64>,
    /// Local-evaluation radius in du; absent = default, 0 = evaluate all
    /// detectors.
    radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIterations {
    n_iterations: usize,
    burn_in: usize,
}

/// Grid/population scale override applied to every scenario.
#[derive(Debug, Clone, Copy)]
pub struct ScaleOverride {
    pub nx: usize,
    pub ny: usize,
    pub n_true: usize,
    pub m: usize,
}

/// Validated study configuration.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub seed: u64,
    pub n_replicates: usize,
    pub scenarios: Vec<u32>,
    /// (kind, aggregation), in the preference order used for WAIC ties.
    pub models: Vec<(ModelKind, usize)>,
    pub scale: Option<ScaleOverride>,
    pub n_chains: usize,
    pub thin: usize,
    pub target_acceptance: f64,
    /// `None` evaluates every detector.
    pub radius: Option<f64>,
    iterations: BTreeMap<String, (usize, usize)>,
}

impl StudyConfig {
    /// Scenario with the scale override applied.
    pub fn scenario(&self, id: u32) -> Result<Scenario> {
        let s = scenario_by_id(id)?;
        Ok(match self.scale {
            Some(sc) => s.with_scale(sc.nx, sc.ny, sc.n_true, sc.m),
            None => s,
        })
    }

    /// MCMC configuration for one model, with any iteration override for its
    /// label applied.
    pub fn mcmc_config(&self, kind: ModelKind, aggregation: usize) -> McmcConfig {
        let mut cfg = McmcConfig::for_model(kind, aggregation, self.seed);
        cfg.n_chains = self.n_chains;
        cfg.thin = self.thin;
        cfg.target_acceptance = self.target_acceptance;
        let label = crate::likelihood::ModelSpec::new(kind, aggregation).label();
        if let Some(&(n, b)) = self
            .iterations
            .get(&label)
            .or_else(|| self.iterations.get(kind.name()))
        {
            cfg.n_iterations = n;
            cfg.burn_in = b;
        }
        cfg
    }

    fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("study.models must not be empty".into()));
        }
        for &id in &self.scenarios {
            // surfaces through the catalog error for out-of-range ids
            scenario_by_id(id)?;
        }
        for &(kind, agg) in &self.models {
            let (nx, ny) = match self.scale {
                Some(sc) => (sc.nx, sc.ny),
                None => {
                    let s = scenario_by_id(self.scenarios.first().copied().unwrap_or(1))?;
                    (s.nx, s.ny)
                }
            };
            if nx % agg != 0 || ny % agg != 0 {
                return Err(Error::Config(format!(
                    "model {} has aggregation {agg} which does not divide the {nx}x{ny} grid",
                    kind.name()
                )));
            }
            if kind == ModelKind::Fe && agg != 1 {
                return Err(Error::Config(
                    "FE is fitted without aggregation; use label 'FE'".into(),
                ));
            }
        }
        if self.n_chains == 0 {
            return Err(Error::Config("mcmc.n_chains must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("mcmc.thin must be at least 1".into()));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::Config(format!(
                    "mcmc.radius must be positive, got {r}"
                )));
            }
        }
        for label in self.iterations.keys() {
            parse_model_label(label).map_err(|_| {
                Error::Config(format!(
                    "iterations override key '{label}' is not a model label"
                ))
            })?;
        }
        Ok(())
    }
}

/// Parses and validates a TOML study configuration.
pub fn parse_config(text: &str) -> Result<StudyConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let scenarios = raw
        .study
        .scenarios
        .unwrap_or_else(|| (1..=10).collect());
    let models = raw
        .study
        .models
        .iter()
        .map(|label| parse_model_label(label))
        .collect::<Result<Vec<_>>>()?;
    // radius = 0 in the file means "no truncation"
    let radius = match raw.mcmc.radius {
        None => Some(DEFAULT_LOCAL_RADIUS),
        Some(r) if r == 0.0 => None,
        Some(r) => Some(r),
    };
    let cfg = StudyConfig {
        seed: raw.study.seed,
        n_replicates: raw.study.n_replicates,
        scenarios,
        models,
        scale: raw.scale.map(|s| ScaleOverride {
            nx: s.nx,
            ny: s.ny,
            n_true: s.n_true,
            m: s.m,
        }),
        n_chains: raw.mcmc.n_chains.unwrap_or(3),
        thin: raw.mcmc.thin.unwrap_or(1),
        target_acceptance: raw.mcmc.target_acceptance.unwrap_or(0.44),
        radius,
        iterations: raw
            .iterations
            .into_iter()
            .map(|(k, v)| (k, (v.n_iterations, v.burn_in)))
            .collect(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a study configuration from a TOML file.
pub fn load_config(path: &Path) -> Result<StudyConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::FileFormat {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::FileFormat {
            path: path.display().to_string(),
            message: msg,
        },
        other => other,
    })
}
