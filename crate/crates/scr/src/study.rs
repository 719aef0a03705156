//! Simulation-study orchestration: simulate replicates, fit every configured
//! model, score the fits, and write report tables.
//!
//! Each (scenario, replicate, model) task writes its scores to its own
//! result file, so an interrupted study resumes by skipping completed tasks.
//! All deterministic outputs are merged in a fixed order, making the report
//! tables byte-identical across serial, parallel, and resumed runs.
//! Wall-clock timings are inherently non-reproducible and go to a separate
//! timings table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::StudyConfig;
use crate::diagnostics::{assess, ConvergenceReport};
use crate::error::{Error, Result};
use crate::io::{read_key_values, write_csv, write_key_values, write_surface_csv};
use crate::likelihood::{Model, ModelKind, ModelSpec};
use crate::mcmc::{run_chains, Chain, McmcConfig};
use crate::metrics::{delta_scores, sse_surface, waic, PosteriorSummary};
use crate::simulate::{replicate_seed, ScenarioSimulator, SimulatedDataset};
use crate::util::{child_seed, mean, quantile};

/// Stream constant separating per-task fitting seeds from simulation seeds.
const FIT_SEED_STREAM: u64 = 0xF17;

/// One model fitted to one dataset.
pub struct FittedModel {
    pub label: String,
    pub chains: Vec<Chain>,
    pub report: ConvergenceReport,
}

/// Runs all chains for `model` on `data` and assesses convergence.
pub fn fit(model: &Model, data: &SimulatedDataset, cfg: &McmcConfig) -> Result<FittedModel> {
    let chains = run_chains(model, data, cfg)?;
    let report = assess(&chains, false)?;
    Ok(FittedModel {
        label: model.spec.label(),
        chains,
        report,
    })
}

/// Post-burn-in draws of one parameter pooled over chains.
pub fn pooled_param(chains: &[Chain], name: &str) -> Result<Vec<f64>> {
    let mut pooled = Vec::new();
    for c in chains {
        let col = c.param(name).ok_or_else(|| {
            Error::Diagnostics(format!("chain {} lacks parameter {name}", c.chain_id))
        })?;
        pooled.extend_from_slice(col);
    }
    Ok(pooled)
}

/// Pointwise log-likelihood draws pooled over chains.
pub fn pooled_pointwise(chains: &[Chain]) -> Vec<Vec<f64>> {
    chains
        .iter()
        .flat_map(|c| c.pointwise_loglik.iter().cloned())
        .collect()
}

/// Baseline-surface draws pooled over chains (when retained).
pub fn pooled_baseline(chains: &[Chain]) -> Option<Vec<Vec<f64>>> {
    let mut pooled = Vec::new();
    for c in chains {
        pooled.extend(c.baseline_samples.as_ref()?.iter().cloned());
    }
    Some(pooled)
}

/// Scores of one (scenario, replicate, model) task.
#[derive(Debug, Clone)]
pub struct TaskResult {
    pub scenario_id: u32,
    pub replicate: u64,
    pub model_label: String,
    /// Error message when the fit failed; scores are NaN in that case.
    pub error: Option<String>,
    pub converged: bool,
    pub worst_rhat: f64,
    pub min_ess: f64,
    pub n_mean: f64,
    pub rb_n: f64,
    pub cv_n: f64,
    pub covered_n: bool,
    pub rb_sigma: f64,
    pub cv_sigma: f64,
    pub covered_sigma: bool,
    pub sse: f64,
    pub waic: f64,
    /// Wall-clock seconds summed over chains (non-deterministic; reported in
    /// the timings table only).
    pub runtime_secs: f64,
}

impl TaskResult {
    fn failed(scenario_id: u32, replicate: u64, model_label: String, message: String) -> Self {
        TaskResult {
            scenario_id,
            replicate,
            model_label,
            error: Some(message),
            converged: false,
            worst_rhat: f64::NAN,
            min_ess: f64::NAN,
            n_mean: f64::NAN,
            rb_n: f64::NAN,
            cv_n: f64::NAN,
            covered_n: false,
            rb_sigma: f64::NAN,
            cv_sigma: f64::NAN,
            covered_sigma: false,
            sse: f64::NAN,
            waic: f64::NAN,
            runtime_secs: 0.0,
        }
    }

    fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs = vec![
            ("scenario".into(), self.scenario_id.to_string()),
            ("replicate".into(), self.replicate.to_string()),
            ("model".into(), self.model_label.clone()),
            (
                "status".into(),
                if self.error.is_some() { "failed" } else { "ok" }.into(),
            ),
        ];
        if let Some(msg) = &self.error {
            pairs.push(("error".into(), msg.replace('\n', " ")));
        }
        for (k, v) in [
            ("converged", (self.converged as u8) as f64),
            ("worst_rhat", self.worst_rhat),
            ("min_ess", self.min_ess),
            ("n_mean", self.n_mean),
            ("rb_n", self.rb_n),
            ("cv_n", self.cv_n),
            ("covered_n", (self.covered_n as u8) as f64),
            ("rb_sigma", self.rb_sigma),
            ("cv_sigma", self.cv_sigma),
            ("covered_sigma", (self.covered_sigma as u8) as f64),
            ("sse", self.sse),
            ("waic", self.waic),
        ] {
            pairs.push((k.into(), v.to_string()));
        }
        pairs
    }

    fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let map: BTreeMap<&str, &str> = pairs
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        let get = |key: &str| -> Result<&str> {
            map.get(key).copied().ok_or_else(|| {
                Error::FileFormat {
                    path: String::new(),
                    message: format!("result record lacks key '{key}'"),
                }
            })
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?.parse::<f64>().map_err(|e| Error::FileFormat {
                path: String::new(),
                message: format!("result key '{key}': {e}"),
            })
        };
        Ok(TaskResult {
            scenario_id: num("scenario")? as u32,
            replicate: num("replicate")? as u64,
            model_label: get("model")?.to_string(),
            error: if get("status")? == "ok" {
                None
            } else {
                Some(map.get("error").copied().unwrap_or("unknown").to_string())
            },
            converged: num("converged")? != 0.0,
            worst_rhat: num("worst_rhat")?,
            min_ess: num("min_ess")?,
            n_mean: num("n_mean")?,
            rb_n: num("rb_n")?,
            cv_n: num("cv_n")?,
            covered_n: num("covered_n")? != 0.0,
            rb_sigma: num("rb_sigma")?,
            cv_sigma: num("cv_sigma")?,
            covered_sigma: num("covered_sigma")? != 0.0,
            sse: num("sse")?,
            waic: num("waic")?,
            runtime_secs: 0.0,
        })
    }
}

fn result_path(out_dir: &Path, sid: u32, rep: u64, label: &str) -> PathBuf {
    out_dir
        .join("results")
        .join(format!("s{sid:02}_r{rep:04}_{label}.result"))
}

fn timing_path(out_dir: &Path, sid: u32, rep: u64, label: &str) -> PathBuf {
    out_dir
        .join("results")
        .join(format!("s{sid:02}_r{rep:04}_{label}.timing"))
}

/// Fits one task and scores it against the simulation truth.
fn run_task(
    cfg: &StudyConfig,
    simulator: &ScenarioSimulator,
    sid: u32,
    rep: u64,
    model_index: usize,
    out_dir: &Path,
) -> TaskResult {
    let (kind, aggregation) = cfg.models[model_index];
    let label = ModelSpec::new(kind, aggregation).label();
    let attempt = || -> Result<TaskResult> {
        let data_seed = replicate_seed(cfg.seed, sid, rep);
        let data = simulator.simulate(data_seed)?;
        let truth = data
            .truth
            .as_ref()
            .ok_or_else(|| Error::ModelSpec("simulated dataset lost its truth".into()))?;
        let mut spec = ModelSpec::new(kind, aggregation);
        spec.radius = cfg.radius;
        if kind == ModelKind::Fe {
            spec.covariate = Some(truth.w.clone());
        }
        let model = Model::new(
            spec,
            simulator.grid().clone(),
            simulator.habitat().clone(),
        )?;
        let mut mcmc = cfg.mcmc_config(kind, aggregation);
        mcmc.seed = child_seed(data_seed, FIT_SEED_STREAM, model_index as u64);
        let fitted = fit(&model, &data, &mcmc)?;

        let n_draws = pooled_param(&fitted.chains, "N")?;
        let sigma_draws = pooled_param(&fitted.chains, "sigma")?;
        let n_summary = PosteriorSummary::from_draws(&n_draws, truth.n_true as f64)?;
        let sigma_summary = PosteriorSummary::from_draws(&sigma_draws, truth.sigma)?;
        let baseline = pooled_baseline(&fitted.chains).ok_or_else(|| {
            Error::ModelSpec("baseline surfaces were not retained".into())
        })?;
        let (_, sse) = sse_surface(&baseline, &truth.p0)?;
        let w = waic(&pooled_pointwise(&fitted.chains))?;
        let runtime: f64 = fitted.chains.iter().map(|c| c.runtime_secs).sum();

        // representative posterior-mean surface for the first replicate
        if rep == 0 {
            let j = data.n_detectors;
            let mean_p0: Vec<f64> = (0..j)
                .map(|jj| mean(&baseline.iter().map(|d| d[jj]).collect::<Vec<_>>()))
                .collect();
            let path = out_dir
                .join("surfaces")
                .join(format!("s{sid:02}_{label}.csv"));
            write_surface_csv(&path, simulator.grid(), &model.clusters, &truth.w, &mean_p0)?;
        }

        Ok(TaskResult {
            scenario_id: sid,
            replicate: rep,
            model_label: label.clone(),
            error: None,
            converged: fitted.report.converged(),
            worst_rhat: fitted.report.worst_rhat(),
            min_ess: fitted.report.min_ess(),
            n_mean: n_summary.mean,
            rb_n: n_summary.relative_bias,
            cv_n: n_summary.cv,
            covered_n: n_summary.covered,
            rb_sigma: sigma_summary.relative_bias,
            cv_sigma: sigma_summary.cv,
            covered_sigma: sigma_summary.covered,
            sse,
            waic: w.waic,
            runtime_secs: runtime,
        })
    };
    attempt().unwrap_or_else(|e| TaskResult::failed(sid, rep, label, e.to_string()))
}

/// Runs (or resumes) the full study and returns all task results ordered by
/// (scenario, replicate, configured model order).
pub fn run_study(cfg: &StudyConfig, out_dir: &Path) -> Result<Vec<TaskResult>> {
    std::fs::create_dir_all(out_dir.join("results"))?;
    std::fs::create_dir_all(out_dir.join("surfaces"))?;

    let mut simulators = BTreeMap::new();
    for &sid in &cfg.scenarios {
        simulators.insert(sid, ScenarioSimulator::new(cfg.scenario(sid)?)?);
    }

    let mut tasks = Vec::new();
    for &sid in &cfg.scenarios {
        for rep in 0..cfg.n_replicates as u64 {
            for model_index in 0..cfg.models.len() {
                tasks.push((sid, rep, model_index));
            }
        }
    }

    let results: Vec<TaskResult> = tasks
        .par_iter()
        .map(|&(sid, rep, model_index)| {
            let (kind, aggregation) = cfg.models[model_index];
            let label = ModelSpec::new(kind, aggregation).label();
            let path = result_path(out_dir, sid, rep, &label);
            if path.exists() {
                if let Ok(pairs) = read_key_values(&path) {
                    if let Ok(mut r) = TaskResult::from_pairs(&pairs) {
                        if let Ok(tp) = read_key_values(&timing_path(out_dir, sid, rep, &label)) {
                            for (k, v) in tp {
                                if k == "runtime_secs" {
                                    r.runtime_secs = v.parse().unwrap_or(0.0);
                                }
                            }
                        }
                        return Ok(r);
                    }
                }
            }
            let simulator = &simulators[&sid];
            let r = run_task(cfg, simulator, sid, rep, model_index, out_dir);
            write_key_values(&path, &r.to_pairs())?;
            write_key_values(
                &timing_path(out_dir, sid, rep, &label),
                &[
                    ("runtime_secs".into(), r.runtime_secs.to_string()),
                    (
                        "ess_per_sec".into(),
                        if r.runtime_secs > 0.0 {
                            (r.min_ess / r.runtime_secs).to_string()
                        } else {
                            "NA".into()
                        },
                    ),
                ],
            )?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;

    // fixed merge order regardless of scheduling
    let order: BTreeMap<String, usize> = cfg
        .models
        .iter()
        .enumerate()
        .map(|(k, &(kind, agg))| (ModelSpec::new(kind, agg).label(), k))
        .collect();
    let mut results = results;
    results.sort_by_key(|r| {
        (
            r.scenario_id,
            r.replicate,
            order.get(&r.model_label).copied().unwrap_or(usize::MAX),
        )
    });
    Ok(results)
}

/// Loads every task-result record already present under `out_dir/results`,
/// in filename order. Used to rebuild report tables without fitting.
pub fn load_existing_results(out_dir: &Path) -> Result<Vec<TaskResult>> {
    let dir = out_dir.join("results");
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "result"))
            .collect(),
        Err(_) => Vec::new(),
    };
    paths.sort();
    let mut results = Vec::with_capacity(paths.len());
    for p in paths {
        let pairs = read_key_values(&p)?;
        let mut r = TaskResult::from_pairs(&pairs).map_err(|e| Error::FileFormat {
            path: p.display().to_string(),
            message: e.to_string(),
        })?;
        let tp = p.with_extension("timing");
        if tp.exists() {
            for (k, v) in read_key_values(&tp)? {
                if k == "runtime_secs" {
                    r.runtime_secs = v.parse().unwrap_or(0.0);
                }
            }
        }
        results.push(r);
    }
    Ok(results)
}

/// Aggregate row for one (scenario, model) cell.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub scenario_id: u32,
    pub model_label: String,
    pub n_tasks: usize,
    pub n_ok: usize,
    pub n_converged: usize,
    pub mean_rb_n: f64,
    pub median_rb_n: f64,
    pub coverage_n: f64,
    pub mean_cv_n: f64,
    pub mean_sse: f64,
    /// Replicates where this model had the best WAIC among converged fits.
    pub waic_wins: usize,
}

/// Aggregates task results over converged replicates and counts WAIC wins.
pub fn summarize(cfg: &StudyConfig, results: &[TaskResult]) -> Vec<SummaryRow> {
    let labels: Vec<String> = cfg
        .models
        .iter()
        .map(|&(kind, agg)| ModelSpec::new(kind, agg).label())
        .collect();

    // WAIC winner per (scenario, replicate) among converged fits,
    // tie-broken by configured model order via delta_scores
    let mut wins: BTreeMap<(u32, String), usize> = BTreeMap::new();
    let mut by_rep: BTreeMap<(u32, u64), Vec<&TaskResult>> = BTreeMap::new();
    for r in results {
        by_rep
            .entry((r.scenario_id, r.replicate))
            .or_default()
            .push(r);
    }
    for ((sid, _), rs) in &by_rep {
        let mut candidates: Vec<&TaskResult> = Vec::new();
        for label in &labels {
            if let Some(r) = rs
                .iter()
                .find(|r| &r.model_label == label && r.error.is_none() && r.converged)
            {
                candidates.push(r);
            }
        }
        if candidates.is_empty() {
            continue;
        }
        let waics: Vec<f64> = candidates.iter().map(|r| r.waic).collect();
        if let Ok((_, best)) = delta_scores(&waics) {
            *wins
                .entry((*sid, candidates[best].model_label.clone()))
                .or_default() += 1;
        }
    }

    let mut rows = Vec::new();
    for &sid in &cfg.scenarios {
        for label in &labels {
            let cell: Vec<&TaskResult> = results
                .iter()
                .filter(|r| r.scenario_id == sid && &r.model_label == label)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let ok: Vec<&&TaskResult> = cell.iter().filter(|r| r.error.is_none()).collect();
            let conv: Vec<&&TaskResult> = ok.iter().filter(|r| r.converged).copied().collect();
            let stat = |f: fn(&TaskResult) -> f64| -> Vec<f64> {
                conv.iter().map(|r| f(r)).collect()
            };
            let rb: Vec<f64> = stat(|r| r.rb_n);
            rows.push(SummaryRow {
                scenario_id: sid,
                model_label: label.clone(),
                n_tasks: cell.len(),
                n_ok: ok.len(),
                n_converged: conv.len(),
                mean_rb_n: if rb.is_empty() { f64::NAN } else { mean(&rb) },
                median_rb_n: if rb.is_empty() {
                    f64::NAN
                } else {
                    quantile(&rb, 0.5)
                },
                coverage_n: if conv.is_empty() {
                    f64::NAN
                } else {
                    conv.iter().filter(|r| r.covered_n).count() as f64 / conv.len() as f64
                },
                mean_cv_n: if conv.is_empty() {
                    f64::NAN
                } else {
                    mean(&stat(|r| r.cv_n))
                },
                mean_sse: if conv.is_empty() {
                    f64::NAN
                } else {
                    mean(&stat(|r| r.sse))
                },
                waic_wins: wins.get(&(sid, label.clone())).copied().unwrap_or(0),
            });
        }
    }
    rows
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        v.to_string()
    }
}

/// Writes `metrics.csv`, `summary.csv`, and the non-deterministic
/// `timings.csv` under `out_dir`.
pub fn write_reports(
    cfg: &StudyConfig,
    results: &[TaskResult],
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let metric_rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.scenario_id.to_string(),
                r.replicate.to_string(),
                r.model_label.clone(),
                if r.error.is_some() { "failed" } else { "ok" }.into(),
                (r.converged as u8).to_string(),
                fmt(r.worst_rhat),
                fmt(r.min_ess),
                fmt(r.n_mean),
                fmt(r.rb_n),
                fmt(r.cv_n),
                (r.covered_n as u8).to_string(),
                fmt(r.rb_sigma),
                fmt(r.cv_sigma),
                (r.covered_sigma as u8).to_string(),
                fmt(r.sse),
                fmt(r.waic),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &out_dir.join("metrics.csv"),
        &[
            "scenario",
            "replicate",
            "model",
            "status",
            "converged",
            "worst_rhat",
            "min_ess",
            "n_mean",
            "rb_n",
            "cv_n",
            "covered_n",
            "rb_sigma",
            "cv_sigma",
            "covered_sigma",
            "sse",
            "waic",
            "error",
        ],
        &metric_rows,
    )?;

    let summary = summarize(cfg, results);
    let summary_rows: Vec<Vec<String>> = summary
        .iter()
        .map(|s| {
            vec![
                s.scenario_id.to_string(),
                s.model_label.clone(),
                s.n_tasks.to_string(),
                s.n_ok.to_string(),
                s.n_converged.to_string(),
                fmt(s.mean_rb_n),
                fmt(s.median_rb_n),
                fmt(s.coverage_n),
                fmt(s.mean_cv_n),
                fmt(s.mean_sse),
                s.waic_wins.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out_dir.join("summary.csv"),
        &[
            "scenario",
            "model",
            "n_tasks",
            "n_ok",
            "n_converged",
            "mean_rb_n",
            "median_rb_n",
            "coverage_n",
            "mean_cv_n",
            "mean_sse",
            "waic_wins",
        ],
        &summary_rows,
    )?;

    // wall-clock table: intentionally separate, not reproducible run-to-run
    let timing_rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.scenario_id.to_string(),
                r.replicate.to_string(),
                r.model_label.clone(),
                fmt(r.runtime_secs),
                if r.runtime_secs > 0.0 && r.min_ess.is_finite() {
                    fmt(r.min_ess / r.runtime_secs)
                } else {
                    "NA".into()
                },
            ]
        })
        .collect();
    write_csv(
        &out_dir.join("timings.csv"),
        &["scenario", "replicate", "model", "runtime_secs", "min_ess_per_sec"],
        &timing_rows,
    )?;
    Ok(())
}
