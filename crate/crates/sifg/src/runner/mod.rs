//! Experiment orchestration: deterministic seeding, the metrics loop, and
//! CSV/JSON/binary emission.
//!
//! One run = one config x a list of seeds. Each seed produces
//! `metrics_<seed>.csv` and `samples_<seed>.bin`; the run manifest
//! (`manifest.json`) echoes the config and lists every file written. The
//! manifest is written in `running` status before the first step and
//! finalized afterward.

pub mod compare;
mod config;

pub use compare::{compare_runs, CompareTable};
pub use config::{
    load_config, parse_config, EstimatorKind, ExperimentConfig, IcaSynthSpec, MetricsSpec,
    NetSpec, OutputFormat, OutputSpec, ParticlesSpec, SamplerKind, TargetSpec,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow::{
    L2gfState, ParticleEnsemble, Sampler, SamplerConfig, ScoreEstimator, SifgState, SvgdState,
};
use crate::metrics::{amari_distance, knn_kl, mode_coverage, moment};
use crate::nn::{net_init, OptimizerState};
use crate::targets::Target;
use crate::{Error, Result};

pub const MANIFEST_FORMAT: &str = "sifg-run-manifest-v1";

/// Record of one completed (or aborted) multi-seed run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: String,
    pub out_dir: String,
    pub label: String,
    pub kl_every: u64,
    pub config: serde_json::Value,
    pub runs: Vec<SeedRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics_csv: Option<String>,
    pub samples: Option<String>,
    pub checkpoints: Vec<String>,
    pub aborted_at_iteration: Option<u64>,
    pub abort_reason: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Parse(format!("unknown manifest format {:?}", m.format)));
        }
        Ok(m)
    }

    fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| Error::Parse(e.to_string()))?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// One metrics row; empty fields stay empty in the CSV, never zero.
#[derive(Debug, Default, Clone)]
struct Row {
    iteration: u64,
    kl: Option<f64>,
    amari: Option<f64>,
    m2: Option<f64>,
    m4: Option<f64>,
    m5: Option<f64>,
    grad_norm: Option<f64>,
    sigma: Option<f64>,
    coverage: Option<Vec<f64>>,
    wall_ms: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Run every seed of an experiment, writing metric traces, final samples,
/// and the manifest under the output directory.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<RunManifest> {
    let out_dir = out_override
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| base_dir.join(&cfg.output.dir));
    std::fs::create_dir_all(&out_dir)?;

    let target = cfg.target.build(base_dir)?;
    let dim = target.dim();
    if cfg.particles.init_mean.len() != dim {
        return Err(Error::Config(format!(
            "particles.init.mean has length {}, target dimension is {}",
            cfg.particles.init_mean.len(),
            dim
        )));
    }

    let seeds: Vec<u64> = match seed_override {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };

    let ground_truth = if cfg.metrics.kl_every > 0 {
        target.sample_ground_truth(cfg.metrics.ground_truth_samples, cfg.metrics.ground_truth_seed)
    } else {
        None
    };
    if ground_truth.is_some() && cfg.particles.n <= cfg.metrics.knn_k {
        return Err(Error::Config(
            "particles.n must exceed metrics.knn_k when KL tracking is enabled".into(),
        ));
    }

    let mut manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        started_at: chrono::Utc::now().to_rfc3339(),
        finished_at: None,
        status: "running".into(),
        out_dir: out_dir.display().to_string(),
        label: cfg.sampler_kind.name().into(),
        kl_every: cfg.metrics.kl_every,
        config: serde_json::to_value(cfg).map_err(|e| Error::Parse(e.to_string()))?,
        runs: seeds
            .iter()
            .map(|&seed| SeedRun {
                seed,
                metrics_csv: None,
                samples: None,
                checkpoints: Vec::new(),
                aborted_at_iteration: None,
                abort_reason: None,
            })
            .collect(),
    };
    let manifest_path = out_dir.join("manifest.json");
    manifest.write(&manifest_path)?;

    // Seeds are independent jobs; each writes only its own files.
    let results: Vec<Result<SeedRun>> = seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, &target, ground_truth.as_deref(), &out_dir, seed))
        .collect();

    let mut status = "complete".to_string();
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        let run = r?;
        if run.aborted_at_iteration.is_some() {
            status = "aborted".into();
        }
        runs.push(run);
    }
    manifest.runs = runs;
    manifest.status = status;
    manifest.finished_at = Some(chrono::Utc::now().to_rfc3339());
    manifest.write(&manifest_path)?;
    Ok(manifest)
}

fn build_sampler(cfg: &ExperimentConfig, dim: usize, seed: u64) -> Result<Sampler> {
    let ensemble = ParticleEnsemble::init_gaussian(
        cfg.particles.n,
        &cfg.particles.init_mean,
        cfg.particles.init_var,
        seed,
    )?;
    let make_net = || -> Result<_> {
        let spec = cfg
            .net
            .as_ref()
            .ok_or_else(|| Error::Config("sampler.net is required".into()))?;
        let mut dims = Vec::with_capacity(spec.hidden.len() + 2);
        dims.push(dim);
        dims.extend_from_slice(&spec.hidden);
        dims.push(dim);
        let net = net_init(&dims, spec.activation, seed)?;
        let opt = OptimizerState::new(cfg.sampler.optimizer, &net);
        Ok((net, opt))
    };
    Ok(match cfg.sampler_kind {
        SamplerKind::Sifg | SamplerKind::Adasifg => {
            let estimator = match cfg.estimator {
                EstimatorKind::GaussianOracle => ScoreEstimator::GaussianOracle,
                EstimatorKind::Net => {
                    let (net, opt) = make_net()?;
                    ScoreEstimator::Net { net, opt }
                }
            };
            let state = SifgState::new(ensemble, estimator, cfg.sampler.sigma0)?;
            if cfg.sampler_kind == SamplerKind::Sifg {
                Sampler::Sifg(state)
            } else {
                Sampler::AdaSifg(state)
            }
        }
        SamplerKind::Svgd => Sampler::Svgd(SvgdState::new(ensemble)),
        SamplerKind::L2gf => {
            let (net, opt) = make_net()?;
            Sampler::L2gf(L2gfState::new(ensemble, net, opt)?)
        }
    })
}

fn run_seed(
    cfg: &ExperimentConfig,
    target: &Target,
    ground_truth: Option<&[f64]>,
    out_dir: &Path,
    seed: u64,
) -> Result<SeedRun> {
    let start = Instant::now();
    let dim = target.dim();
    let mut scfg: SamplerConfig = cfg.sampler.clone();
    scfg.seed = seed;
    let mut sampler = build_sampler(cfg, dim, seed)?;

    let gmm_modes = match (&cfg.target, cfg.metrics.modes) {
        (TargetSpec::GaussianMixture { means, stds, .. }, true) => {
            Some((means.clone(), stds.clone()))
        }
        _ => None,
    };
    let ica_truth: Option<Vec<Vec<f64>>> = match target {
        Target::Ica(m) => m.w_true.clone(),
        _ => None,
    };
    let source_dim = match target {
        Target::Ica(m) => m.source_dim,
        _ => 0,
    };

    let n_outer = scfg.n_outer;
    let eval_due = |k: u64| {
        k == 0
            || k == n_outer
            || (cfg.metrics.kl_every > 0 && k % cfg.metrics.kl_every == 0)
    };
    let moments_due = |k: u64| {
        k == 0
            || k == n_outer
            || (cfg.metrics.moments_every > 0 && k % cfg.metrics.moments_every == 0)
    };
    let row_due = |k: u64| eval_due(k) || moments_due(k);

    let mut rows: Vec<Row> = Vec::new();
    let record = |sampler: &Sampler, k: u64, rows: &mut Vec<Row>| -> Result<()> {
        let mut row = Row {
            iteration: k,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            ..Row::default()
        };
        if moments_due(k) {
            let ens = sampler.ensemble();
            row.m2 = Some(moment(ens, 2.0));
            row.m4 = Some(moment(ens, 4.0));
            row.m5 = Some(moment(ens, 5.0));
        }
        row.grad_norm = sampler.velocity_diag();
        row.sigma = sampler.sigma();
        if eval_due(k) {
            let needs_samples = ground_truth.is_some() || gmm_modes.is_some();
            let samples = if needs_samples {
                Some(sampler.approx_samples(&scfg))
            } else {
                None
            };
            if let (Some(gt), Some(s)) = (ground_truth, samples.as_ref()) {
                row.kl = Some(knn_kl(s, gt, dim, cfg.metrics.knn_k)?);
            }
            if let (Some((means, stds)), Some(s)) = (gmm_modes.as_ref(), samples.as_ref()) {
                row.coverage = Some(mode_coverage(s, means, stds, cfg.metrics.mode_radius)?);
            }
            if let Some(w_true) = ica_truth.as_ref() {
                let s = samples
                    .unwrap_or_else(|| sampler.approx_samples(&scfg));
                let d = source_dim;
                let mut acc = 0.0;
                let count = s.len() / (d * d);
                for w_flat in s.chunks_exact(d * d) {
                    let w_rows: Vec<Vec<f64>> =
                        (0..d).map(|r| w_flat[r * d..(r + 1) * d].to_vec()).collect();
                    acc += amari_distance(&w_rows, w_true)?;
                }
                row.amari = Some(acc / count as f64);
            }
        }
        rows.push(row);
        Ok(())
    };

    record(&sampler, 0, &mut rows)?;
    let mut seed_run = SeedRun {
        seed,
        metrics_csv: None,
        samples: None,
        checkpoints: Vec::new(),
        aborted_at_iteration: None,
        abort_reason: None,
    };
    for k in 1..=n_outer {
        match sampler.step(target, &scfg) {
            Ok(_) => {}
            Err(Error::Aborted(reason)) => {
                seed_run.aborted_at_iteration = Some(k);
                seed_run.abort_reason = Some(reason);
                break;
            }
            Err(e) => return Err(e),
        }
        if row_due(k) {
            record(&sampler, k, &mut rows)?;
        }
        if cfg.output.checkpoint_every > 0 && k % cfg.output.checkpoint_every == 0 {
            if let Sampler::Sifg(state) | Sampler::AdaSifg(state) = &sampler {
                let name = format!("checkpoint_{seed}_{k}.ckpt");
                state.save_checkpoint(&out_dir.join(&name))?;
                seed_run.checkpoints.push(name);
            }
        }
    }

    if cfg.output.formats.contains(&OutputFormat::Csv) {
        let name = format!("metrics_{seed}.csv");
        let coverage_cols = gmm_modes.as_ref().map(|(m, _)| m.len()).unwrap_or(0);
        write_csv(&out_dir.join(&name), &rows, coverage_cols)?;
        seed_run.metrics_csv = Some(name);
    }
    if seed_run.aborted_at_iteration.is_none()
        && cfg.output.formats.contains(&OutputFormat::Samples)
    {
        let name = format!("samples_{seed}.bin");
        let samples = sampler.approx_samples(&scfg);
        write_samples(&out_dir.join(&name), &samples, dim)?;
        seed_run.samples = Some(name);
    }
    Ok(seed_run)
}

fn write_csv(path: &Path, rows: &[Row], coverage_cols: usize) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("iteration,kl,amari,m2,m4,m5,grad_norm,sigma");
    for i in 1..=coverage_cols {
        header.push_str(&format!(",coverage_{i}"));
    }
    header.push_str(",wall_ms");
    writeln!(w, "{header}")?;
    for row in rows {
        let mut line = format!(
            "{},{},{},{},{},{},{},{}",
            row.iteration,
            fmt_opt(row.kl),
            fmt_opt(row.amari),
            fmt_opt(row.m2),
            fmt_opt(row.m4),
            fmt_opt(row.m5),
            fmt_opt(row.grad_norm),
            fmt_opt(row.sigma),
        );
        match &row.coverage {
            Some(cov) => {
                for c in cov {
                    line.push_str(&format!(",{c}"));
                }
            }
            None => {
                for _ in 0..coverage_cols {
                    line.push(',');
                }
            }
        }
        line.push_str(&format!(",{:.3}", row.wall_ms));
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Samples file: one JSON header line, then `n * d` little-endian f64.
pub fn write_samples(path: &Path, samples: &[f64], dim: usize) -> Result<()> {
    let n = samples.len() / dim;
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "{}",
        serde_json::json!({"n": n, "d": dim, "endianness": "little", "dtype": "f64"})
    )?;
    for v in samples {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a samples file back into a flat row-major buffer.
pub fn read_samples(path: &Path) -> Result<(Vec<f64>, usize)> {
    let bytes = std::fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("samples file missing header line".into()))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::Parse(e.to_string()))?;
    let n = header["n"].as_u64().ok_or_else(|| Error::Parse("bad n".into()))? as usize;
    let d = header["d"].as_u64().ok_or_else(|| Error::Parse("bad d".into()))? as usize;
    let payload = &bytes[newline + 1..];
    if payload.len() != n * d * 8 {
        return Err(Error::Parse(format!(
            "expected {} payload bytes, found {}",
            n * d * 8,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((data, d))
}
