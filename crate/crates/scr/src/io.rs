//! File formats: the versioned dataset format, chain output, and CSV export.
//!
//! The dataset format is line-oriented: a magic/version line, a key = value
//! header block, a `[detections]` section of (individual, detector) pairs,
//! and an optional `[truth]` section with the simulated activity centers,
//! detection covariate surface, and baseline surface.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mcmc::Chain;
use crate::simulate::{Scenario, SimulatedDataset, Truth};
use crate::surfaces::SurfaceKind;

const DATASET_MAGIC: &str = "scrdata v1";

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::FileFormat {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Writes `contents` to `path` via a temporary file and rename, so readers
/// never observe a partial file.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let tmp: PathBuf = path.with_extension("tmp~");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes a dataset, including the simulation truth when present.
pub fn write_dataset(path: &Path, data: &SimulatedDataset) -> Result<()> {
    let mut out = String::new();
    let sc = &data.scenario;
    writeln!(out, "{DATASET_MAGIC}").unwrap();
    writeln!(out, "scenario_id = {}", sc.id).unwrap();
    writeln!(out, "eta = {}", sc.eta).unwrap();
    writeln!(out, "phi = {}", sc.phi).unwrap();
    let kind = match sc.kind {
        SurfaceKind::Continuous => "continuous",
        SurfaceKind::Categorical => "categorical",
    };
    writeln!(out, "kind = {kind}").unwrap();
    writeln!(out, "n_true = {}", sc.n_true).unwrap();
    writeln!(out, "m = {}", data.m).unwrap();
    writeln!(out, "sigma = {}", sc.sigma).unwrap();
    writeln!(out, "nx = {}", sc.nx).unwrap();
    writeln!(out, "ny = {}", sc.ny).unwrap();
    writeln!(out, "spacing = {}", sc.spacing).unwrap();
    writeln!(out, "buffer = {}", sc.buffer).unwrap();
    writeln!(out, "seed = {}", data.seed).unwrap();
    writeln!(out, "n_detected = {}", data.n_detected).unwrap();
    writeln!(out, "[detections]").unwrap();
    for i in 0..data.m {
        for j in data.detections_of(i) {
            writeln!(out, "{i} {j}").unwrap();
        }
    }
    if let Some(truth) = &data.truth {
        writeln!(out, "[truth.acs]").unwrap();
        for (i, p) in truth.acs.iter().enumerate() {
            writeln!(out, "{i} {} {}", p.x, p.y).unwrap();
        }
        writeln!(out, "[truth.w]").unwrap();
        for (j, w) in truth.w.iter().enumerate() {
            writeln!(out, "{j} {w}").unwrap();
        }
        writeln!(out, "[truth.p0]").unwrap();
        for (j, p) in truth.p0.iter().enumerate() {
            writeln!(out, "{j} {p}").unwrap();
        }
    }
    atomic_write(path, &out)
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<SimulatedDataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, line)) if line.trim() == DATASET_MAGIC => {}
        Some((_, line)) => {
            return Err(format_error(
                path,
                format!("expected header '{DATASET_MAGIC}', found '{line}'"),
            ))
        }
        None => return Err(format_error(path, "empty file")),
    }

    let mut header = std::collections::BTreeMap::new();
    let mut section = String::new();
    let mut detections: Vec<(usize, usize)> = Vec::new();
    let mut acs: Vec<(usize, f64, f64)> = Vec::new();
    let mut w: Vec<(usize, f64)> = Vec::new();
    let mut p0: Vec<(usize, f64)> = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].to_string();
            continue;
        }
        let err = |msg: String| format_error(path, format!("line {}: {msg}", lineno + 1));
        match section.as_str() {
            "" => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected 'key = value', found '{line}'")))?;
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            "detections" => {
                let mut it = line.split_whitespace();
                let i = parse_field::<usize>(path, lineno, it.next(), "individual")?;
                let j = parse_field::<usize>(path, lineno, it.next(), "detector")?;
                detections.push((i, j));
            }
            "truth.acs" => {
                let mut it = line.split_whitespace();
                let i = parse_field::<usize>(path, lineno, it.next(), "individual")?;
                let x = parse_field::<f64>(path, lineno, it.next(), "x")?;
                let y = parse_field::<f64>(path, lineno, it.next(), "y")?;
                acs.push((i, x, y));
            }
            "truth.w" => {
                let mut it = line.split_whitespace();
                let j = parse_field::<usize>(path, lineno, it.next(), "detector")?;
                let v = parse_field::<f64>(path, lineno, it.next(), "w")?;
                w.push((j, v));
            }
            "truth.p0" => {
                let mut it = line.split_whitespace();
                let j = parse_field::<usize>(path, lineno, it.next(), "detector")?;
                let v = parse_field::<f64>(path, lineno, it.next(), "p0")?;
                p0.push((j, v));
            }
            other => return Err(err(format!("unknown section '[{other}]'"))),
        }
    }

    let get = |key: &str| -> Result<&String> {
        header
            .get(key)
            .ok_or_else(|| format_error(path, format!("missing header key '{key}'")))
    };
    let parse_num = |key: &str| -> Result<f64> {
        get(key)?
            .parse::<f64>()
            .map_err(|e| format_error(path, format!("header key '{key}': {e}")))
    };
    let kind = match get("kind")?.as_str() {
        "continuous" => SurfaceKind::Continuous,
        "categorical" => SurfaceKind::Categorical,
        other => {
            return Err(format_error(
                path,
                format!("kind must be continuous or categorical, found '{other}'"),
            ))
        }
    };
    let scenario = Scenario {
        id: parse_num("scenario_id")? as u32,
        eta: parse_num("eta")?,
        phi: parse_num("phi")?,
        kind,
        n_true: parse_num("n_true")? as usize,
        m: parse_num("m")? as usize,
        sigma: parse_num("sigma")?,
        nx: parse_num("nx")? as usize,
        ny: parse_num("ny")? as usize,
        spacing: parse_num("spacing")?,
        buffer: parse_num("buffer")?,
    };
    let m = scenario.m;
    let n_detectors = scenario.nx * scenario.ny;
    let n_detected = parse_num("n_detected")? as usize;
    let seed = parse_num("seed")? as u64;

    let mut y = vec![0u8; m * n_detectors];
    for (i, j) in detections {
        if i >= m || j >= n_detectors {
            return Err(format_error(
                path,
                format!("detection ({i}, {j}) out of range for M = {m}, J = {n_detectors}"),
            ));
        }
        y[i * n_detectors + j] = 1;
    }

    let truth = if acs.is_empty() && w.is_empty() && p0.is_empty() {
        None
    } else {
        let n_true = scenario.n_true;
        if acs.len() != n_true || w.len() != n_detectors || p0.len() != n_detectors {
            return Err(format_error(
                path,
                format!(
                    "truth block sizes (acs {}, w {}, p0 {}) do not match n_true = {n_true}, J = {n_detectors}",
                    acs.len(),
                    w.len(),
                    p0.len()
                ),
            ));
        }
        let mut acs_v = vec![Point::ORIGIN; n_true];
        for (i, x, yy) in acs {
            acs_v[i] = Point::new(x, yy);
        }
        let mut w_v = vec![0.0; n_detectors];
        for (j, v) in w {
            w_v[j] = v;
        }
        let mut p0_v = vec![0.0; n_detectors];
        for (j, v) in p0 {
            p0_v[j] = v;
        }
        Some(Truth {
            acs: acs_v,
            w: w_v,
            p0: p0_v,
            n_true,
            sigma: scenario.sigma,
            eta: scenario.eta,
            phi: scenario.phi,
        })
    };

    Ok(SimulatedDataset::from_parts(
        y, m, n_detectors, n_detected, truth, scenario, seed,
    ))
}

/// Writes retained draws as a whitespace-separated table (one column per
/// monitored parameter) plus a `.meta` sidecar with runtime and acceptance
/// rates. Runtime is wall-clock and therefore not reproducible bit-for-bit;
/// keeping it in the sidecar leaves the draw table deterministic.
pub fn write_chain(path: &Path, chain: &Chain) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{}", chain.param_names.join(" ")).unwrap();
    for r in 0..chain.n_retained() {
        let row: Vec<String> = chain.samples.iter().map(|col| col[r].to_string()).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    atomic_write(path, &out)?;

    let mut meta = String::new();
    writeln!(meta, "chain_id = {}", chain.chain_id).unwrap();
    writeln!(meta, "runtime_secs = {}", chain.runtime_secs).unwrap();
    for (name, rate) in &chain.acceptance {
        writeln!(meta, "acceptance.{name} = {rate}").unwrap();
    }
    atomic_write(&path.with_extension("meta"), &meta)
}

/// Reads a draw table written by [`write_chain`] as (names, columns).
pub fn read_chain_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let names: Vec<String> = lines
        .next()
        .ok_or_else(|| format_error(path, "empty chain file"))?
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let mut columns = vec![Vec::new(); names.len()];
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != names.len() {
            return Err(format_error(
                path,
                format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 2,
                    names.len(),
                    fields.len()
                ),
            ));
        }
        for (k, f) in fields.iter().enumerate() {
            columns[k].push(f.parse::<f64>().map_err(|e| {
                format_error(path, format!("line {}: {e}", lineno + 2))
            })?);
        }
    }
    Ok((names, columns))
}

/// Writes a CSV file with the given header and rows.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{}", header.join(",")).unwrap();
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "CSV row has {} fields but the header has {}",
                row.len(),
                header.len()
            )));
        }
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    atomic_write(path, &out)
}

/// Per-detector surface export: id, coordinates, covariate, baseline, and
/// cluster assignment.
pub fn write_surface_csv(
    path: &Path,
    grid: &crate::geometry::DetectorGrid,
    clusters: &crate::geometry::ClusterMap,
    w: &[f64],
    p0: &[f64],
) -> Result<()> {
    let j = grid.n_detectors();
    if w.len() != j || p0.len() != j {
        return Err(Error::Config(format!(
            "surface vectors (w {}, p0 {}) do not match J = {j}",
            w.len(),
            p0.len()
        )));
    }
    let rows: Vec<Vec<String>> = (0..j)
        .map(|jj| {
            let c = grid.coord(jj);
            vec![
                jj.to_string(),
                c.x.to_string(),
                c.y.to_string(),
                w[jj].to_string(),
                p0[jj].to_string(),
                clusters.cluster_of(jj).to_string(),
            ]
        })
        .collect();
    write_csv(path, &["detector_id", "x", "y", "w", "p0", "cluster_id"], &rows)
}

/// Simple `key = value` record used for small sidecar files.
pub fn write_key_values(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in pairs {
        writeln!(out, "{k} = {v}").unwrap();
    }
    atomic_write(path, &out)
}

pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            format_error(path, format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    lineno: usize,
    field: Option<&str>,
    what: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = field.ok_or_else(|| {
        format_error(path, format!("line {}: missing {what} field", lineno + 1))
    })?;
    raw.parse::<T>().map_err(|e| {
        format_error(path, format!("line {}: bad {what} field '{raw}': {e}", lineno + 1))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{scenario_by_id, simulate_scenario};
    use tempfile::tempdir;

    #[test]
    fn dataset_roundtrip_with_truth() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.scrdata");
        let scenario = scenario_by_id(3).unwrap().with_scale(8, 8, 20, 40);
        let data = simulate_scenario(&scenario, 77).unwrap();
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.m, data.m);
        assert_eq!(back.n_detectors, data.n_detectors);
        assert_eq!(back.n_detected, data.n_detected);
        assert_eq!(back.seed, data.seed);
        for i in 0..data.m {
            assert_eq!(back.row(i), data.row(i), "row {i}");
        }
        let (t0, t1) = (data.truth.as_ref().unwrap(), back.truth.as_ref().unwrap());
        assert_eq!(t0.w, t1.w);
        assert_eq!(t0.p0, t1.p0);
        assert_eq!(t0.acs.len(), t1.acs.len());
        for (a, b) in t0.acs.iter().zip(&t1.acs) {
            assert_eq!((a.x, a.y), (b.x, b.y));
        }
        assert_eq!(back.scenario.eta, data.scenario.eta);
        assert_eq!(back.scenario.kind, data.scenario.kind);
    }

    #[test]
    fn dataset_roundtrip_without_truth() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("blind.scrdata");
        let scenario = scenario_by_id(7).unwrap().with_scale(8, 8, 20, 40);
        let mut data = simulate_scenario(&scenario, 5).unwrap();
        data.truth = None;
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        assert!(back.truth.is_none());
        assert_eq!(back.total_detections(), data.total_detections());
    }

    #[test]
    fn dataset_errors_name_the_problem() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.scrdata");
        fs::write(&path, "not a dataset\n").unwrap();
        let err = read_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("scrdata v1"), "{err}");

        fs::write(&path, "scrdata v1\nnx = 4\n").unwrap();
        let err = read_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("missing header key"), "{err}");

        fs::write(
            &path,
            "scrdata v1\nscenario_id = 1\neta = 0.1\nphi = 1\nkind = continuous\n\
             n_true = 2\nm = 4\nsigma = 1.5\nnx = 2\nny = 2\nspacing = 1\nbuffer = 1\n\
             seed = 1\nn_detected = 1\n[detections]\n0 99\n",
        )
        .unwrap();
        let err = read_dataset(&path).unwrap_err().to_string();
        assert!(err.contains("out of range"), "{err}");
    }

    #[test]
    fn chain_table_roundtrip() {
        use crate::likelihood::{Model, ModelKind, ModelSpec};
        use crate::mcmc::{run_chain, McmcConfig};
        let scenario = scenario_by_id(1).unwrap().with_scale(4, 4, 5, 10);
        let data = simulate_scenario(&scenario, 3).unwrap();
        let model = Model::new(
            ModelSpec::new(ModelKind::Scr, 1),
            scenario.grid().unwrap(),
            scenario.habitat().unwrap(),
        )
        .unwrap();
        let mut cfg = McmcConfig::for_model(ModelKind::Scr, 1, 2);
        cfg.n_iterations = 300;
        cfg.burn_in = 100;
        let chain = run_chain(&model, &data, &cfg, 0).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("chain0.txt");
        write_chain(&path, &chain).unwrap();
        let (names, cols) = read_chain_table(&path).unwrap();
        assert_eq!(names, chain.param_names);
        assert_eq!(cols, chain.samples);
        let meta = read_key_values(&path.with_extension("meta")).unwrap();
        assert!(meta.iter().any(|(k, _)| k == "runtime_secs"));
    }

    #[test]
    fn surface_csv_shape() {
        use crate::geometry::{ClusterMap, DetectorGrid};
        let grid = DetectorGrid::build(4, 4, 1.0, Point::ORIGIN).unwrap();
        let clusters = ClusterMap::build(&grid, 2).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("surface.csv");
        let w = vec![0.1; 16];
        let p0 = vec![0.2; 16];
        write_surface_csv(&path, &grid, &clusters, &w, &p0).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 17);
        assert_eq!(lines[0], "detector_id,x,y,w,p0,cluster_id");
        assert!(write_surface_csv(&path, &grid, &clusters, &w[..3], &p0).is_err());
    }

    #[test]
    fn key_value_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("kv.txt");
        let pairs = vec![
            ("alpha".to_string(), "1.5".to_string()),
            ("label".to_string(), "SARE-4x4".to_string()),
        ];
        write_key_values(&path, &pairs).unwrap();
        assert_eq!(read_key_values(&path).unwrap(), pairs);
    }
}
