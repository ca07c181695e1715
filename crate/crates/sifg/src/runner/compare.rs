//! Align metric traces from several runs into one comparison table.

use std::path::Path;

use crate::{Error, Result};

use super::RunManifest;

/// Per-iteration mean and sample standard deviation across seeds, one column
/// pair per run.
#[derive(Debug, Clone)]
pub struct CompareTable {
    pub iterations: Vec<u64>,
    /// `(label, metric, means, stds)`.
    pub columns: Vec<(String, &'static str, Vec<f64>, Vec<f64>)>,
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration");
        for (label, metric, _, _) in &self.columns {
            out.push_str(&format!(",{label}_{metric}_mean,{label}_{metric}_std"));
        }
        out.push('\n');
        for (r, it) in self.iterations.iter().enumerate() {
            out.push_str(&it.to_string());
            for (_, _, means, stds) in &self.columns {
                out.push_str(&format!(",{},{}", means[r], stds[r]));
            }
            out.push('\n');
        }
        out
    }

    /// Final-row mean for a labeled column; used to rank methods.
    pub fn final_mean(&self, label: &str) -> Option<f64> {
        self.columns
            .iter()
            .find(|(l, _, _, _)| l == label)
            .and_then(|(_, _, means, _)| means.last().copied())
    }
}

/// Load manifests, check they are comparable (same target, same cadence),
/// and aggregate each run's per-seed traces into mean and std columns.
pub fn compare_runs(manifest_paths: &[impl AsRef<Path>]) -> Result<CompareTable> {
    if manifest_paths.is_empty() {
        return Err(Error::Usage("no manifests given".into()));
    }
    let manifests: Vec<(RunManifest, std::path::PathBuf)> = manifest_paths
        .iter()
        .map(|p| {
            let path = p.as_ref();
            RunManifest::load(path).map(|m| {
                let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
                (m, dir)
            })
        })
        .collect::<Result<_>>()?;

    let first_target = &manifests[0].0.config["target"];
    let first_cadence = manifests[0].0.kl_every;
    for (m, _) in &manifests {
        if &m.config["target"] != first_target {
            return Err(Error::Usage("manifests target different distributions".into()));
        }
        if m.kl_every != first_cadence {
            return Err(Error::Usage(format!(
                "mismatched metric cadence: {} vs {}",
                m.kl_every, first_cadence
            )));
        }
    }

    let mut iterations: Option<Vec<u64>> = None;
    let mut columns = Vec::new();
    let mut seen = std::collections::HashMap::<String, usize>::new();
    for (m, dir) in &manifests {
        let count = seen.entry(m.label.clone()).or_insert(0);
        *count += 1;
        let label = if *count == 1 {
            m.label.clone()
        } else {
            format!("{}_{}", m.label, count)
        };

        // (iteration -> values across seeds) for kl, falling back to amari.
        let mut per_seed: Vec<Vec<(u64, Option<f64>, Option<f64>)>> = Vec::new();
        for run in &m.runs {
            let csv_name = run.metrics_csv.as_ref().ok_or_else(|| {
                Error::Usage(format!("seed {} wrote no metrics csv", run.seed))
            })?;
            per_seed.push(read_metric_rows(&dir.join(csv_name))?);
        }
        let use_kl = per_seed
            .iter()
            .flatten()
            .any(|(_, kl, _)| kl.is_some());
        let metric: &'static str = if use_kl { "kl" } else { "amari" };

        let mut its = Vec::new();
        let mut series: Vec<Vec<f64>> = Vec::new();
        for rows in &per_seed {
            let mut s = Vec::new();
            let mut s_its = Vec::new();
            for (it, kl, amari) in rows {
                let v = if use_kl { *kl } else { *amari };
                if let Some(v) = v {
                    s_its.push(*it);
                    s.push(v);
                }
            }
            if its.is_empty() {
                its = s_its;
            } else if its != s_its {
                return Err(Error::Usage(
                    "mismatched metric cadence across seeds".into(),
                ));
            }
            series.push(s);
        }
        match &iterations {
            None => iterations = Some(its.clone()),
            Some(prev) => {
                if *prev != its {
                    return Err(Error::Usage(
                        "mismatched metric cadence across manifests".into(),
                    ));
                }
            }
        }

        let n_rows = its.len();
        let n_seeds = series.len() as f64;
        let mut means = Vec::with_capacity(n_rows);
        let mut stds = Vec::with_capacity(n_rows);
        for r in 0..n_rows {
            let vals: Vec<f64> = series.iter().map(|s| s[r]).collect();
            let mean = vals.iter().sum::<f64>() / n_seeds;
            let std = if vals.len() < 2 {
                0.0
            } else {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n_seeds - 1.0))
                    .sqrt()
            };
            means.push(mean);
            stds.push(std);
        }
        columns.push((label, metric, means, stds));
    }

    Ok(CompareTable {
        iterations: iterations.unwrap_or_default(),
        columns,
    })
}

/// Pull `(iteration, kl, amari)` out of a metrics CSV.
fn read_metric_rows(path: &Path) -> Result<Vec<(u64, Option<f64>, Option<f64>)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty metrics csv".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let idx = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Parse(format!("metrics csv missing column {name}")))
    };
    let (it_i, kl_i, am_i) = (idx("iteration")?, idx("kl")?, idx("amari")?);
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|e| Error::Parse(format!("bad metric value {s:?}: {e}")))
            }
        };
        rows.push((
            cells[it_i]
                .parse()
                .map_err(|e| Error::Parse(format!("bad iteration: {e}")))?,
            parse_opt(cells[kl_i])?,
            parse_opt(cells[am_i])?,
        ));
    }
    Ok(rows)
}
