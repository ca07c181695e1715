//! Experiment configuration: TOML grammar, strict validation, and the
//! validated form the runner consumes.
//!
//! Unknown keys are hard errors, and the core sampler knobs (`h`, `eta`,
//! `n_outer`, `n_inner`, `sigma0`) have no defaults: a config must spell out
//! what it runs. Auxiliary knobs (metric cadences, output formats) default
//! as documented in the README.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::flow::{SamplerConfig, SvgdBandwidth};
use crate::nn::{Activation, DsmSign, OptimizerKind};
use crate::targets::{ica_synthesize, GaussianMixture, GaussianTarget, IcaModel, MonomialGamma, Target};
use crate::{Error, Result};

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

// ---------------------------------------------------------------------------
// Raw layer: mirrors the TOML document, everything optional.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seeds: Option<Vec<u64>>,
    target: Option<RawTarget>,
    sampler: Option<RawSampler>,
    particles: Option<RawParticles>,
    metrics: Option<RawMetrics>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    kind: Option<String>,
    weights: Option<Vec<f64>>,
    means: Option<Vec<Vec<f64>>>,
    stds: Option<Vec<f64>>,
    dim: Option<usize>,
    mean: Option<Vec<f64>>,
    var: Option<f64>,
    prior_var: Option<f64>,
    minibatch: Option<usize>,
    dataset: Option<String>,
    synth: Option<RawIcaSynth>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIcaSynth {
    d: Option<usize>,
    n_obs: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampler {
    kind: Option<String>,
    h: Option<f64>,
    eta: Option<f64>,
    eta_tilde: Option<f64>,
    n_outer: Option<u64>,
    n_inner: Option<u64>,
    sigma0: Option<f64>,
    lb: Option<f64>,
    ub: Option<f64>,
    dsm_sign: Option<String>,
    estimator: Option<String>,
    cold_start: Option<bool>,
    dsm_minibatch: Option<usize>,
    bandwidth: Option<toml::Value>,
    optimizer: Option<RawOptimizer>,
    net: Option<RawNet>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    kind: Option<String>,
    beta: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    eps: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNet {
    hidden: Option<Vec<usize>>,
    activation: Option<String>,
    slope: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParticles {
    n: Option<usize>,
    init: Option<RawInit>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    kind: Option<String>,
    mean: Option<Vec<f64>>,
    var: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    kl_every: Option<u64>,
    moments_every: Option<u64>,
    modes: Option<bool>,
    mode_radius: Option<f64>,
    ground_truth_samples: Option<usize>,
    ground_truth_seed: Option<u64>,
    knn_k: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    formats: Option<Vec<String>>,
    checkpoint_every: Option<u64>,
}

// ---------------------------------------------------------------------------
// Validated layer.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Sifg,
    Adasifg,
    Svgd,
    L2gf,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Sifg => "sifg",
            SamplerKind::Adasifg => "adasifg",
            SamplerKind::Svgd => "svgd",
            SamplerKind::L2gf => "l2gf",
        }
    }

    pub fn uses_net(self) -> bool {
        !matches!(self, SamplerKind::Svgd)
    }

    pub fn semi_implicit(self) -> bool {
        matches!(self, SamplerKind::Sifg | SamplerKind::Adasifg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Net,
    GaussianOracle,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        stds: Vec<f64>,
    },
    MonomialGamma {
        dim: usize,
    },
    Gaussian {
        mean: Vec<f64>,
        var: f64,
    },
    BayesianIca {
        prior_var: f64,
        minibatch: Option<usize>,
        dataset: Option<String>,
        synth: Option<IcaSynthSpec>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IcaSynthSpec {
    pub d: usize,
    pub n_obs: usize,
    pub seed: u64,
}

impl TargetSpec {
    /// Instantiate the target. Dataset paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Target> {
        match self {
            TargetSpec::GaussianMixture {
                weights,
                means,
                stds,
            } => Ok(Target::GaussianMixture(GaussianMixture::new(
                weights.clone(),
                means.clone(),
                stds.clone(),
            )?)),
            TargetSpec::MonomialGamma { dim } => {
                Ok(Target::MonomialGamma(MonomialGamma::new(*dim)?))
            }
            TargetSpec::Gaussian { mean, var } => {
                Ok(Target::Gaussian(GaussianTarget::new(mean.clone(), *var)?))
            }
            TargetSpec::BayesianIca {
                prior_var,
                minibatch,
                dataset,
                synth,
            } => {
                let mut model = match (dataset, synth) {
                    (Some(path), None) => {
                        let resolved = base_dir.join(path);
                        let text = std::fs::read_to_string(&resolved).map_err(|e| {
                            cfg_err(format!("target.dataset {}: {e}", resolved.display()))
                        })?;
                        let model: IcaModel = serde_json::from_str(&text)
                            .map_err(|e| Error::Parse(format!("target.dataset: {e}")))?;
                        model
                    }
                    (None, Some(s)) => ica_synthesize(s.d, s.n_obs, s.seed)?.0,
                    _ => {
                        return Err(cfg_err(
                            "target needs exactly one of `dataset` or `synth` for bayesian_ica",
                        ))
                    }
                };
                model.prior_var = *prior_var;
                model.minibatch = *minibatch;
                if let Some(b) = model.minibatch {
                    if b == 0 || b > model.observations.len() {
                        return Err(cfg_err("target.minibatch out of range"));
                    }
                }
                Ok(Target::Ica(model))
            }
        }
    }

    /// Ambient dimension of the sampling space.
    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::GaussianMixture { means, .. } => means[0].len(),
            TargetSpec::MonomialGamma { dim } => *dim,
            TargetSpec::Gaussian { mean, .. } => mean.len(),
            TargetSpec::BayesianIca { synth, .. } => {
                // Dataset-backed dims are checked at build time.
                synth.map(|s| s.d * s.d).unwrap_or(0)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NetSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParticlesSpec {
    pub n: usize,
    pub init_mean: Vec<f64>,
    pub init_var: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsSpec {
    pub kl_every: u64,
    pub moments_every: u64,
    pub modes: bool,
    pub mode_radius: f64,
    pub ground_truth_samples: usize,
    pub ground_truth_seed: u64,
    pub knn_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Samples,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputSpec {
    pub dir: String,
    pub formats: Vec<OutputFormat>,
    pub checkpoint_every: u64,
}

/// A fully validated experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    pub sampler_kind: SamplerKind,
    pub sampler: SamplerConfig,
    pub estimator: EstimatorKind,
    pub net: Option<NetSpec>,
    pub particles: ParticlesSpec,
    pub metrics: MetricsSpec,
    pub output: OutputSpec,
    pub seeds: Vec<u64>,
}

/// Parse and validate a TOML experiment document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

    let seeds = raw.seeds.ok_or_else(|| cfg_err("seeds is required"))?;
    if seeds.is_empty() {
        return Err(cfg_err("seeds must be nonempty"));
    }

    let target = validate_target(raw.target.ok_or_else(|| cfg_err("[target] is required"))?)?;
    let raw_sampler = raw
        .sampler
        .ok_or_else(|| cfg_err("[sampler] is required"))?;
    let (sampler_kind, sampler, estimator, net) = validate_sampler(raw_sampler)?;
    let particles = validate_particles(
        raw.particles
            .ok_or_else(|| cfg_err("[particles] is required"))?,
    )?;
    let metrics = validate_metrics(raw.metrics)?;
    let output = validate_output(raw.output.ok_or_else(|| cfg_err("[output] is required"))?)?;

    // Cross checks that do not need the built target.
    let declared_dim = target.dim();
    if declared_dim > 0 && particles.init_mean.len() != declared_dim {
        return Err(cfg_err(format!(
            "particles.init.mean has length {}, target dimension is {}",
            particles.init_mean.len(),
            declared_dim
        )));
    }
    if metrics.modes && !matches!(target, TargetSpec::GaussianMixture { .. }) {
        return Err(cfg_err(
            "metrics.modes requires a gaussian_mixture target",
        ));
    }
    if sampler_kind == SamplerKind::L2gf
        && declared_dim > crate::flow::l2gf::MAX_EXACT_DIVERGENCE_DIM
    {
        return Err(cfg_err(format!(
            "sampler.kind l2gf supports at most d = {}; use sifg instead",
            crate::flow::l2gf::MAX_EXACT_DIVERGENCE_DIM
        )));
    }

    Ok(ExperimentConfig {
        target,
        sampler_kind,
        sampler,
        estimator,
        net,
        particles,
        metrics,
        output,
        seeds,
    })
}

/// Load a config from disk.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn validate_target(raw: RawTarget) -> Result<TargetSpec> {
    let kind = raw.kind.ok_or_else(|| cfg_err("target.kind is required"))?;
    let forbid = |cond: bool, field: &str, kind: &str| -> Result<()> {
        if cond {
            Err(cfg_err(format!("target.{field} does not apply to {kind}")))
        } else {
            Ok(())
        }
    };
    match kind.as_str() {
        "gaussian_mixture" => {
            forbid(raw.dim.is_some(), "dim", "gaussian_mixture")?;
            forbid(raw.prior_var.is_some(), "prior_var", "gaussian_mixture")?;
            forbid(raw.dataset.is_some(), "dataset", "gaussian_mixture")?;
            forbid(raw.synth.is_some(), "synth", "gaussian_mixture")?;
            let weights = raw
                .weights
                .ok_or_else(|| cfg_err("target.weights is required"))?;
            let means = raw.means.ok_or_else(|| cfg_err("target.means is required"))?;
            let stds = raw.stds.ok_or_else(|| cfg_err("target.stds is required"))?;
            // Constructing validates the simplex and std constraints.
            GaussianMixture::new(weights.clone(), means.clone(), stds.clone())?;
            Ok(TargetSpec::GaussianMixture {
                weights,
                means,
                stds,
            })
        }
        "monomial_gamma" => {
            let dim = raw.dim.ok_or_else(|| cfg_err("target.dim is required"))?;
            if dim == 0 {
                return Err(cfg_err("target.dim must be >= 1"));
            }
            Ok(TargetSpec::MonomialGamma { dim })
        }
        "gaussian" => {
            let mean = raw.mean.ok_or_else(|| cfg_err("target.mean is required"))?;
            let var = raw.var.ok_or_else(|| cfg_err("target.var is required"))?;
            GaussianTarget::new(mean.clone(), var)?;
            Ok(TargetSpec::Gaussian { mean, var })
        }
        "bayesian_ica" => {
            let synth = match raw.synth {
                Some(s) => Some(IcaSynthSpec {
                    d: s.d.ok_or_else(|| cfg_err("target.synth.d is required"))?,
                    n_obs: s
                        .n_obs
                        .ok_or_else(|| cfg_err("target.synth.n_obs is required"))?,
                    seed: s
                        .seed
                        .ok_or_else(|| cfg_err("target.synth.seed is required"))?,
                }),
                None => None,
            };
            if synth.is_none() && raw.dataset.is_none() {
                return Err(cfg_err(
                    "target needs one of `dataset` or `synth` for bayesian_ica",
                ));
            }
            if synth.is_some() && raw.dataset.is_some() {
                return Err(cfg_err(
                    "target.dataset and target.synth are mutually exclusive",
                ));
            }
            let prior_var = raw.prior_var.unwrap_or(100.0);
            if prior_var <= 0.0 {
                return Err(cfg_err("target.prior_var must be > 0"));
            }
            Ok(TargetSpec::BayesianIca {
                prior_var,
                minibatch: raw.minibatch,
                dataset: raw.dataset,
                synth,
            })
        }
        other => Err(cfg_err(format!(
            "target.kind {other:?} is not one of gaussian_mixture, monomial_gamma, gaussian, bayesian_ica"
        ))),
    }
}

fn validate_sampler(
    raw: RawSampler,
) -> Result<(SamplerKind, SamplerConfig, EstimatorKind, Option<NetSpec>)> {
    let kind = match raw
        .kind
        .as_deref()
        .ok_or_else(|| cfg_err("sampler.kind is required"))?
    {
        "sifg" => SamplerKind::Sifg,
        "adasifg" => SamplerKind::Adasifg,
        "svgd" => SamplerKind::Svgd,
        "l2gf" => SamplerKind::L2gf,
        other => {
            return Err(cfg_err(format!(
                "sampler.kind {other:?} is not one of sifg, adasifg, svgd, l2gf"
            )))
        }
    };

    let h = raw.h.ok_or_else(|| cfg_err("sampler.h is required"))?;
    if !(h > 0.0) {
        return Err(cfg_err("sampler.h must be > 0"));
    }
    let n_outer = raw
        .n_outer
        .ok_or_else(|| cfg_err("sampler.n_outer is required"))?;

    let needs_net = kind.uses_net();
    let semi = kind.semi_implicit();

    let eta = if needs_net {
        let eta = raw.eta.ok_or_else(|| cfg_err("sampler.eta is required"))?;
        if !(eta > 0.0) {
            return Err(cfg_err("sampler.eta must be > 0"));
        }
        eta
    } else {
        if raw.eta.is_some() {
            return Err(cfg_err("sampler.eta does not apply to svgd"));
        }
        1.0
    };
    let n_inner = if needs_net {
        raw.n_inner
            .ok_or_else(|| cfg_err("sampler.n_inner is required"))?
    } else {
        if raw.n_inner.is_some() {
            return Err(cfg_err("sampler.n_inner does not apply to svgd"));
        }
        0
    };

    let estimator = match raw.estimator.as_deref() {
        None => EstimatorKind::Net,
        Some("net") => EstimatorKind::Net,
        Some("gaussian_oracle") => EstimatorKind::GaussianOracle,
        Some(other) => {
            return Err(cfg_err(format!(
                "sampler.estimator {other:?} is not one of net, gaussian_oracle"
            )))
        }
    };
    if estimator == EstimatorKind::GaussianOracle && !semi {
        return Err(cfg_err(
            "sampler.estimator gaussian_oracle applies only to sifg/adasifg",
        ));
    }

    let sigma0 = if semi {
        let s = raw
            .sigma0
            .ok_or_else(|| cfg_err("sampler.sigma0 is required"))?;
        if !(s > 0.0) {
            return Err(cfg_err("sampler.sigma0 must be > 0"));
        }
        s
    } else {
        if raw.sigma0.is_some() {
            return Err(cfg_err(format!(
                "sampler.sigma0 does not apply to {}",
                kind.name()
            )));
        }
        0.1
    };

    let adaptive = kind == SamplerKind::Adasifg;
    let (lb, ub, eta_tilde) = if adaptive {
        let lb = raw.lb.ok_or_else(|| cfg_err("sampler.lb is required"))?;
        let ub = raw.ub.ok_or_else(|| cfg_err("sampler.ub is required"))?;
        let eta_tilde = raw
            .eta_tilde
            .ok_or_else(|| cfg_err("sampler.eta_tilde is required"))?;
        if !(lb > 0.0) {
            return Err(cfg_err("sampler.lb must be > 0"));
        }
        if !(ub < 1.0) {
            return Err(cfg_err("sampler.ub must be < 1"));
        }
        if !(lb <= sigma0 && sigma0 <= ub) {
            return Err(cfg_err("sampler needs lb <= sigma0 <= ub"));
        }
        if eta_tilde < 0.0 {
            return Err(cfg_err("sampler.eta_tilde must be >= 0"));
        }
        (lb, ub, eta_tilde)
    } else {
        for (set, field) in [
            (raw.lb.is_some(), "lb"),
            (raw.ub.is_some(), "ub"),
            (raw.eta_tilde.is_some(), "eta_tilde"),
        ] {
            if set {
                return Err(cfg_err(format!(
                    "sampler.{field} applies only to adasifg"
                )));
            }
        }
        (1e-6, 0.999, 0.0)
    };

    let dsm_sign = match raw.dsm_sign.as_deref() {
        None => DsmSign::Derivation,
        Some("derivation") => DsmSign::Derivation,
        Some("literal_alg1") => DsmSign::LiteralAlg1,
        Some(other) => {
            return Err(cfg_err(format!(
                "sampler.dsm_sign {other:?} is not one of derivation, literal_alg1"
            )))
        }
    };

    let bandwidth = match raw.bandwidth {
        None => SvgdBandwidth::MedianHeuristic,
        Some(v) => {
            if kind != SamplerKind::Svgd {
                return Err(cfg_err("sampler.bandwidth applies only to svgd"));
            }
            match v {
                toml::Value::String(s) if s == "median_heuristic" => {
                    SvgdBandwidth::MedianHeuristic
                }
                toml::Value::Float(f) if f > 0.0 => SvgdBandwidth::Fixed(f),
                toml::Value::Integer(i) if i > 0 => SvgdBandwidth::Fixed(i as f64),
                _ => {
                    return Err(cfg_err(
                        "sampler.bandwidth must be \"median_heuristic\" or a positive number",
                    ))
                }
            }
        }
    };

    let optimizer = match raw.optimizer {
        None => OptimizerKind::SgdMomentum { beta: 0.9 },
        Some(o) => {
            match o
                .kind
                .as_deref()
                .ok_or_else(|| cfg_err("sampler.optimizer.kind is required"))?
            {
                "sgd" => OptimizerKind::Sgd,
                "sgd_momentum" => OptimizerKind::SgdMomentum {
                    beta: o.beta.unwrap_or(0.9),
                },
                "adam" => OptimizerKind::Adam {
                    beta1: o.beta1.unwrap_or(0.9),
                    beta2: o.beta2.unwrap_or(0.999),
                    eps: o.eps.unwrap_or(1e-8),
                },
                other => {
                    return Err(cfg_err(format!(
                        "sampler.optimizer.kind {other:?} is not one of sgd, sgd_momentum, adam"
                    )))
                }
            }
        }
    };

    let net = match raw.net {
        Some(n) => {
            if !needs_net {
                return Err(cfg_err("sampler.net does not apply to svgd"));
            }
            let hidden = n
                .hidden
                .ok_or_else(|| cfg_err("sampler.net.hidden is required"))?;
            if hidden.is_empty() || hidden.iter().any(|&w| w == 0) {
                return Err(cfg_err("sampler.net.hidden widths must be positive"));
            }
            let activation = match n.activation.as_deref() {
                Some("tanh") | None => {
                    if n.slope.is_some() {
                        return Err(cfg_err("sampler.net.slope applies only to leaky_relu"));
                    }
                    Activation::Tanh
                }
                Some("leaky_relu") => Activation::LeakyRelu {
                    slope: n.slope.unwrap_or(0.1),
                },
                Some(other) => {
                    return Err(cfg_err(format!(
                        "sampler.net.activation {other:?} is not one of tanh, leaky_relu"
                    )))
                }
            };
            Some(NetSpec { hidden, activation })
        }
        None => {
            if needs_net && estimator == EstimatorKind::Net {
                return Err(cfg_err("sampler.net is required"));
            }
            None
        }
    };

    if raw.dsm_minibatch == Some(0) {
        return Err(cfg_err("sampler.dsm_minibatch must be >= 1"));
    }
    if (raw.cold_start.is_some() || raw.dsm_minibatch.is_some()) && !semi {
        return Err(cfg_err(
            "sampler.cold_start / sampler.dsm_minibatch apply only to sifg/adasifg",
        ));
    }

    let cfg = SamplerConfig {
        h,
        eta,
        eta_tilde,
        n_outer,
        n_inner,
        sigma0,
        lb,
        ub,
        seed: 0, // replaced per repetition
        dsm_sign,
        svgd_bandwidth: bandwidth,
        optimizer,
        cold_start: raw.cold_start.unwrap_or(false),
        dsm_minibatch: raw.dsm_minibatch,
    };
    cfg.validate(adaptive)?;
    Ok((kind, cfg, estimator, net))
}

fn validate_particles(raw: RawParticles) -> Result<ParticlesSpec> {
    let n = raw.n.ok_or_else(|| cfg_err("particles.n is required"))?;
    if n == 0 {
        return Err(cfg_err("particles.n must be >= 1"));
    }
    let init = raw
        .init
        .ok_or_else(|| cfg_err("[particles.init] is required"))?;
    match init.kind.as_deref() {
        Some("gaussian") => {}
        Some(other) => {
            return Err(cfg_err(format!(
                "particles.init.kind {other:?} must be \"gaussian\""
            )))
        }
        None => return Err(cfg_err("particles.init.kind is required")),
    }
    let mean = init
        .mean
        .ok_or_else(|| cfg_err("particles.init.mean is required"))?;
    if mean.is_empty() {
        return Err(cfg_err("particles.init.mean must be nonempty"));
    }
    let var = init
        .var
        .ok_or_else(|| cfg_err("particles.init.var is required"))?;
    if var < 0.0 {
        return Err(cfg_err("particles.init.var must be >= 0"));
    }
    Ok(ParticlesSpec {
        n,
        init_mean: mean,
        init_var: var,
    })
}

fn validate_metrics(raw: Option<RawMetrics>) -> Result<MetricsSpec> {
    let raw = match raw {
        Some(r) => r,
        None => {
            return Ok(MetricsSpec {
                kl_every: 0,
                moments_every: 0,
                modes: false,
                mode_radius: 3.0,
                ground_truth_samples: 2000,
                ground_truth_seed: 0,
                knn_k: 5,
            })
        }
    };
    let spec = MetricsSpec {
        kl_every: raw.kl_every.unwrap_or(0),
        moments_every: raw.moments_every.unwrap_or(0),
        modes: raw.modes.unwrap_or(false),
        mode_radius: raw.mode_radius.unwrap_or(3.0),
        ground_truth_samples: raw.ground_truth_samples.unwrap_or(2000),
        ground_truth_seed: raw.ground_truth_seed.unwrap_or(0),
        knn_k: raw.knn_k.unwrap_or(5),
    };
    if spec.mode_radius <= 0.0 {
        return Err(cfg_err("metrics.mode_radius must be > 0"));
    }
    if spec.knn_k == 0 {
        return Err(cfg_err("metrics.knn_k must be >= 1"));
    }
    if spec.kl_every > 0 && spec.ground_truth_samples <= spec.knn_k {
        return Err(cfg_err(
            "metrics.ground_truth_samples must exceed metrics.knn_k",
        ));
    }
    Ok(spec)
}

fn validate_output(raw: RawOutput) -> Result<OutputSpec> {
    let dir = raw.dir.ok_or_else(|| cfg_err("output.dir is required"))?;
    let formats = match raw.formats {
        None => vec![OutputFormat::Csv, OutputFormat::Samples],
        Some(fs) => {
            let mut out = Vec::new();
            for f in fs {
                match f.as_str() {
                    "csv" => out.push(OutputFormat::Csv),
                    "samples" => out.push(OutputFormat::Samples),
                    other => {
                        return Err(cfg_err(format!(
                            "output.formats entry {other:?} is not one of csv, samples"
                        )))
                    }
                }
            }
            out
        }
    };
    Ok(OutputSpec {
        dir,
        formats,
        checkpoint_every: raw.checkpoint_every.unwrap_or(0),
    })
}
