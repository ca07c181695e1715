//! The four samplers behind a single stepping interface.
//!
//! SIFG and its adaptive variant live here; the kernelized baseline and the
//! neural velocity-fit baseline are in [`svgd`] and [`l2gf`]. All samplers
//! step a [`ParticleEnsemble`] and share the same failure policy: if any
//! target score evaluation comes back non-finite, the whole outer step is
//! rolled back and counted, and more than [`MAX_CONSECUTIVE_FAILURES`]
//! consecutive rollbacks aborts the run. The iteration counter still
//! advances on a rollback so the retry perturbs with fresh noise.

mod checkpoint;
pub mod l2gf;
pub mod svgd;

pub use l2gf::{l2gf_step, L2gfState};
pub use svgd::{svgd_step, SvgdState};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::{
    dsm_loss_and_grad, net_init, optimizer_step, DsmSign, OptimizerKind, OptimizerState, ScoreNet,
};
use crate::rng::{tag, RngStream};
use crate::targets::Target;
use crate::{Error, Result};

/// Rollbacks tolerated in a row before a run is declared dead.
pub const MAX_CONSECUTIVE_FAILURES: u32 = 10;

/// `n` particles in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    data: Vec<f64>,
    dim: usize,
}

impl ParticleEnsemble {
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("particle dimension must be positive".into()));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Config(
                "particle buffer must hold n >= 1 rows of width d".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("particles must be finite".into()));
        }
        Ok(ParticleEnsemble { data, dim })
    }

    /// Draw `n` particles from `N(mean, var I)` on the init stream of `seed`.
    pub fn init_gaussian(n: usize, mean: &[f64], var: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("need at least one particle".into()));
        }
        if var < 0.0 {
            return Err(Error::Config("init variance must be nonnegative".into()));
        }
        let d = mean.len();
        let s = var.sqrt();
        let mut data = vec![0.0; n * d];
        data.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
            let mut stream = RngStream::new(seed, tag::PARTICLE_INIT, 0, i as u64);
            stream.fill_standard_normal(row);
            for (v, m) in row.iter_mut().zip(mean) {
                *v = m + s * *v;
            }
        });
        ParticleEnsemble::from_flat(data, d)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> Vec<f64> {
        let (n, d) = (self.count(), self.dim);
        let mut m = vec![0.0; d];
        for i in 0..n {
            for (mv, zv) in m.iter_mut().zip(self.particle(i)) {
                *mv += zv;
            }
        }
        for mv in &mut m {
            *mv /= n as f64;
        }
        m
    }

    /// Average per-coordinate variance, the isotropic spread estimate used
    /// by the analytic oracle.
    pub fn scalar_variance(&self) -> f64 {
        let (n, d) = (self.count(), self.dim);
        let m = self.mean();
        let mut acc = 0.0;
        for i in 0..n {
            for (zv, mv) in self.particle(i).iter().zip(&m) {
                let diff = zv - mv;
                acc += diff * diff;
            }
        }
        acc / (n * d) as f64
    }
}

/// SVGD kernel bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvgdBandwidth {
    MedianHeuristic,
    Fixed(f64),
}

/// Every hyperparameter the stepping functions consume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Particle step size.
    pub h: f64,
    /// Net learning rate for the inner loop.
    pub eta: f64,
    /// Noise-magnitude step size (adaptive variant only).
    pub eta_tilde: f64,
    /// Outer iterations.
    pub n_outer: u64,
    /// Inner optimizer steps per outer iteration.
    pub n_inner: u64,
    /// Initial noise magnitude.
    pub sigma0: f64,
    /// Noise clip bounds, active when adaptation is enabled.
    pub lb: f64,
    pub ub: f64,
    pub seed: u64,
    pub dsm_sign: DsmSign,
    pub svgd_bandwidth: SvgdBandwidth,
    pub optimizer: OptimizerKind,
    /// Re-initialize the net every outer iteration instead of warm starting.
    pub cold_start: bool,
    /// Sub-sample the inner-loop batch; `None` trains on all particles.
    pub dsm_minibatch: Option<usize>,
}

impl SamplerConfig {
    /// A config with the given required knobs and conventional defaults for
    /// the rest; tests and oracle runs adjust fields directly.
    pub fn new(h: f64, eta: f64, n_outer: u64, n_inner: u64, sigma0: f64, seed: u64) -> Self {
        SamplerConfig {
            h,
            eta,
            eta_tilde: 0.0,
            n_outer,
            n_inner,
            sigma0,
            lb: 1e-6,
            ub: 0.999,
            seed,
            dsm_sign: DsmSign::Derivation,
            svgd_bandwidth: SvgdBandwidth::MedianHeuristic,
            optimizer: OptimizerKind::SgdMomentum { beta: 0.9 },
            cold_start: false,
            dsm_minibatch: None,
        }
    }

    pub fn validate(&self, adaptive: bool) -> Result<()> {
        if self.h < 0.0 || !self.h.is_finite() {
            return Err(Error::Config("h must be finite and >= 0".into()));
        }
        if self.eta <= 0.0 {
            return Err(Error::Config("eta must be > 0".into()));
        }
        if self.sigma0 <= 0.0 {
            return Err(Error::Config("sigma0 must be > 0".into()));
        }
        if adaptive {
            if self.eta_tilde < 0.0 {
                return Err(Error::Config("eta_tilde must be >= 0".into()));
            }
            if !(self.lb > 0.0) {
                return Err(Error::Config("lb must be > 0".into()));
            }
            if !(self.ub < 1.0) {
                return Err(Error::Config("ub must be < 1".into()));
            }
            if !(self.lb <= self.sigma0 && self.sigma0 <= self.ub) {
                return Err(Error::Config(format!(
                    "need lb <= sigma0 <= ub (got lb={}, sigma0={}, ub={})",
                    self.lb, self.sigma0, self.ub
                )));
            }
        }
        if let SvgdBandwidth::Fixed(b) = self.svgd_bandwidth {
            if b <= 0.0 {
                return Err(Error::Config("fixed bandwidth must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// What stands in for the smoothed-density score.
#[derive(Debug, Clone)]
pub enum ScoreEstimator {
    /// A trainable net; the usual path.
    Net { net: ScoreNet, opt: OptimizerState },
    /// Closed-form score of a Gaussian fit to the current ensemble,
    /// smoothed by the current noise: `-(x - mean)/(var + sigma^2)`.
    /// Used for oracle runs and diagnostics; skips the inner loop.
    GaussianOracle,
}

impl ScoreEstimator {
    /// Evaluate the estimator at each perturbed point. `ensemble` provides
    /// the oracle's fit statistics and must be the pre-update particles.
    fn eval(&self, xs: &[f64], ensemble: &ParticleEnsemble, sigma: f64) -> Vec<f64> {
        let d = ensemble.dim();
        match self {
            ScoreEstimator::Net { net, .. } => {
                let mut out = vec![0.0; xs.len()];
                out.par_chunks_mut(d)
                    .zip(xs.par_chunks(d))
                    .for_each(|(dst, x)| {
                        dst.copy_from_slice(&net.forward(x));
                    });
                out
            }
            ScoreEstimator::GaussianOracle => {
                let mean = ensemble.mean();
                let denom = ensemble.scalar_variance() + sigma * sigma;
                let mut out = vec![0.0; xs.len()];
                out.par_chunks_mut(d)
                    .zip(xs.par_chunks(d))
                    .for_each(|(dst, x)| {
                        for j in 0..d {
                            dst[j] = -(x[j] - mean[j]) / denom;
                        }
                    });
                out
            }
        }
    }
}

/// Whether a step committed or was rolled back by the failure policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Applied,
    RolledBack,
}

/// Evolving state of a SIFG or Ada-SIFG run.
#[derive(Debug, Clone)]
pub struct SifgState {
    ensemble: ParticleEnsemble,
    estimator: ScoreEstimator,
    sigma: f64,
    iteration: u64,
    cached_x: Option<Vec<f64>>,
    last_velocity_sq_mean: Option<f64>,
    last_sigma_grad: Option<f64>,
    consecutive_failures: u32,
    total_failures: u64,
}

impl SifgState {
    pub fn new(ensemble: ParticleEnsemble, estimator: ScoreEstimator, sigma: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::Config("sigma must be > 0".into()));
        }
        if let ScoreEstimator::Net { net, .. } = &estimator {
            if net.dim() != ensemble.dim() {
                return Err(Error::Config(format!(
                    "net dimension {} does not match particle dimension {}",
                    net.dim(),
                    ensemble.dim()
                )));
            }
        }
        Ok(SifgState {
            ensemble,
            estimator,
            sigma,
            iteration: 0,
            cached_x: None,
            last_velocity_sq_mean: None,
            last_sigma_grad: None,
            consecutive_failures: 0,
            total_failures: 0,
        })
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        &self.ensemble
    }

    pub fn estimator(&self) -> &ScoreEstimator {
        &self.estimator
    }

    pub fn net(&self) -> Option<&ScoreNet> {
        match &self.estimator {
            ScoreEstimator::Net { net, .. } => Some(net),
            ScoreEstimator::GaussianOracle => None,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Perturbed points of the last completed step.
    pub fn cached_perturbed(&self) -> Option<&[f64]> {
        self.cached_x.as_deref()
    }

    /// Mean squared velocity of the last applied step.
    pub fn last_velocity_diag(&self) -> Option<f64> {
        self.last_velocity_sq_mean
    }

    /// Noise-gradient estimate of the last applied adaptive step.
    pub fn last_sigma_grad(&self) -> Option<f64> {
        self.last_sigma_grad
    }

    pub fn total_failures(&self) -> u64 {
        self.total_failures
    }
}

/// One outer iteration of the fixed-noise sampler: perturb, fit the score by
/// denoising score matching, then move every particle along
/// `grad log pi(x) - f(x)` evaluated at its perturbed point.
pub fn sifg_step(state: &mut SifgState, target: &Target, cfg: &SamplerConfig) -> Result<StepStatus> {
    step_impl(state, target, cfg, false)
}

/// As [`sifg_step`], plus a gradient update of the noise magnitude before
/// the particle move: `sigma <- clip(sigma + eta_tilde * g, lb, ub)` with
/// `g = (1/n) sum_i <grad log pi(x_i) - f(x_i), eps_i>` under the
/// post-inner-loop net. With `eta_tilde = 0` the trajectory is bit-identical
/// to the plain sampler.
pub fn adasifg_step(
    state: &mut SifgState,
    target: &Target,
    cfg: &SamplerConfig,
) -> Result<StepStatus> {
    cfg.validate(true)?;
    step_impl(state, target, cfg, true)
}

fn step_impl(
    state: &mut SifgState,
    target: &Target,
    cfg: &SamplerConfig,
    adapt: bool,
) -> Result<StepStatus> {
    let d = state.ensemble.dim();
    if target.dim() != d {
        return Err(Error::Config(format!(
            "target dimension {} does not match particle dimension {}",
            target.dim(),
            d
        )));
    }
    let n = state.ensemble.count();
    let k = state.iteration;
    let sigma = state.sigma;

    // Perturb: x_i = z_i + eps_i, one stream per (iteration, particle).
    let zs = state.ensemble.as_flat();
    let mut xs = vec![0.0; n * d];
    xs.par_chunks_mut(d)
        .zip(zs.par_chunks(d))
        .enumerate()
        .for_each(|(i, (x, z))| {
            let mut stream = RngStream::new(cfg.seed, tag::PERTURB, k, i as u64);
            stream.fill_standard_normal(x);
            for (xv, zv) in x.iter_mut().zip(z) {
                *xv = zv + sigma * *xv;
            }
        });

    // Target scores at the perturbed points; any failure rolls the whole
    // outer step back before anything is mutated.
    let batch = target.draw_minibatch(cfg.seed, k);
    let scores = match eval_scores(target, &xs, d, batch.as_deref()) {
        Ok(s) => s,
        Err(_) => return rollback(state),
    };

    // Inner loop: denoising score matching on {(x_i, z_i)}.
    if let ScoreEstimator::Net { net, opt } = &mut state.estimator {
        if cfg.cold_start && cfg.n_inner > 0 {
            let reseed = RngStream::new(cfg.seed, tag::NET_INIT, k, u64::MAX).next_u64();
            *net = net_init(&net.layer_dims().to_vec(), net.activation(), reseed)?;
            *opt = OptimizerState::new(opt.kind, net);
        }
        for t in 0..cfg.n_inner {
            let (bx, bz): (Vec<f64>, Vec<f64>) = match cfg.dsm_minibatch {
                Some(b) if b < n => {
                    let mut stream = RngStream::new(cfg.seed, tag::DSM_BATCH, k, t);
                    let mut bx = Vec::with_capacity(b * d);
                    let mut bz = Vec::with_capacity(b * d);
                    for _ in 0..b {
                        let i = stream.next_index(n);
                        bx.extend_from_slice(&xs[i * d..(i + 1) * d]);
                        bz.extend_from_slice(&zs[i * d..(i + 1) * d]);
                    }
                    (bx, bz)
                }
                _ => (xs.clone(), zs.to_vec()),
            };
            let (_, grads) = dsm_loss_and_grad(net, &bx, &bz, sigma, cfg.dsm_sign)?;
            let (next_net, next_opt) = optimizer_step(net, &grads, opt, cfg.eta)?;
            *net = next_net;
            *opt = next_opt;
        }
    }

    // Velocities w_i = grad log pi(x_i) - f(x_i).
    let f_vals = state.estimator.eval(&xs, &state.ensemble, sigma);
    if f_vals.iter().any(|v| !v.is_finite()) {
        return rollback(state);
    }
    let mut velocities = scores;
    for (w, f) in velocities.iter_mut().zip(&f_vals) {
        *w -= f;
    }
    let vel_sq_mean = velocities
        .chunks_exact(d)
        .map(|w| w.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / n as f64;

    // Noise adaptation happens between net training and the particle move.
    if adapt {
        let mut g_hat = 0.0;
        for i in 0..n {
            let w = &velocities[i * d..(i + 1) * d];
            let x = &xs[i * d..(i + 1) * d];
            let z = &zs[i * d..(i + 1) * d];
            let mut dot = 0.0;
            for j in 0..d {
                dot += w[j] * (x[j] - z[j]);
            }
            g_hat += dot;
        }
        g_hat /= n as f64;
        state.sigma = (sigma + cfg.eta_tilde * g_hat).clamp(cfg.lb, cfg.ub);
        state.last_sigma_grad = Some(g_hat);
    }

    // Particle move.
    let mut data = state.ensemble.as_flat().to_vec();
    for (zv, wv) in data.iter_mut().zip(&velocities) {
        *zv += cfg.h * wv;
    }
    state.ensemble = ParticleEnsemble::from_flat(data, d)?;
    state.cached_x = Some(xs);
    state.last_velocity_sq_mean = Some(vel_sq_mean);
    state.consecutive_failures = 0;
    state.iteration = k + 1;
    Ok(StepStatus::Applied)
}

fn rollback(state: &mut SifgState) -> Result<StepStatus> {
    state.consecutive_failures += 1;
    state.total_failures += 1;
    state.iteration += 1;
    if state.consecutive_failures > MAX_CONSECUTIVE_FAILURES {
        return Err(Error::Aborted(format!(
            "{} consecutive step failures",
            state.consecutive_failures
        )));
    }
    Ok(StepStatus::RolledBack)
}

/// Evaluate target scores at flat `n x d` points, failing fast on the first
/// error or non-finite value.
pub(crate) fn eval_scores(
    target: &Target,
    xs: &[f64],
    d: usize,
    batch: Option<&[usize]>,
) -> Result<Vec<f64>> {
    let rows: Vec<Result<Vec<f64>>> = xs
        .par_chunks(d)
        .map(|x| target.score(x, batch))
        .collect();
    let mut out = Vec::with_capacity(xs.len());
    for r in rows {
        out.extend_from_slice(&r?);
    }
    Ok(out)
}

/// Draw the returned (perturbed) samples: `z_i + eps_i` on the final-perturb
/// stream at the state's current iteration. For the noiseless baselines the
/// runner returns raw particles instead.
pub fn final_samples(state: &SifgState, cfg: &SamplerConfig) -> Vec<f64> {
    perturbed_samples(&state.ensemble, state.sigma, cfg.seed, state.iteration)
}

pub(crate) fn perturbed_samples(
    ensemble: &ParticleEnsemble,
    sigma: f64,
    seed: u64,
    iteration: u64,
) -> Vec<f64> {
    let d = ensemble.dim();
    let mut out = vec![0.0; ensemble.count() * d];
    out.par_chunks_mut(d)
        .zip(ensemble.as_flat().par_chunks(d))
        .enumerate()
        .for_each(|(i, (x, z))| {
            let mut stream = RngStream::new(seed, tag::FINAL_PERTURB, iteration, i as u64);
            stream.fill_standard_normal(x);
            for (xv, zv) in x.iter_mut().zip(z) {
                *xv = zv + sigma * *xv;
            }
        });
    out
}

/// Plug-in diagnostic for the squared Wasserstein-gradient norm:
/// `(1/n) sum_i ||grad log pi(x_i) - f(x_i)||^2` over the cached perturbed
/// points of the last completed step.
pub fn velocity_diag(state: &SifgState, target: &Target) -> Result<f64> {
    let xs = state
        .cached_x
        .as_ref()
        .ok_or_else(|| Error::Usage("no completed step cached".into()))?;
    let d = state.ensemble.dim();
    let n = state.ensemble.count();
    let scores = eval_scores(target, xs, d, None)?;
    let f_vals = state.estimator.eval(xs, &state.ensemble, state.sigma);
    let mut acc = 0.0;
    for (s, f) in scores.iter().zip(&f_vals) {
        let w = s - f;
        acc += w * w;
    }
    Ok(acc / n as f64)
}

/// The stepping interface the runner drives.
#[derive(Debug, Clone)]
pub enum Sampler {
    Sifg(SifgState),
    AdaSifg(SifgState),
    Svgd(SvgdState),
    L2gf(L2gfState),
}

impl Sampler {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Sampler::Sifg(_) => "sifg",
            Sampler::AdaSifg(_) => "adasifg",
            Sampler::Svgd(_) => "svgd",
            Sampler::L2gf(_) => "l2gf",
        }
    }

    pub fn step(&mut self, target: &Target, cfg: &SamplerConfig) -> Result<StepStatus> {
        match self {
            Sampler::Sifg(s) => sifg_step(s, target, cfg),
            Sampler::AdaSifg(s) => adasifg_step(s, target, cfg),
            Sampler::Svgd(s) => s.step(target, cfg),
            Sampler::L2gf(s) => l2gf_step(s, target, cfg),
        }
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        match self {
            Sampler::Sifg(s) | Sampler::AdaSifg(s) => s.ensemble(),
            Sampler::Svgd(s) => s.ensemble(),
            Sampler::L2gf(s) => s.ensemble(),
        }
    }

    pub fn iteration(&self) -> u64 {
        match self {
            Sampler::Sifg(s) | Sampler::AdaSifg(s) => s.iteration(),
            Sampler::Svgd(s) => s.iteration(),
            Sampler::L2gf(s) => s.iteration(),
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            Sampler::Sifg(s) | Sampler::AdaSifg(s) => Some(s.sigma()),
            _ => None,
        }
    }

    pub fn velocity_diag(&self) -> Option<f64> {
        match self {
            Sampler::Sifg(s) | Sampler::AdaSifg(s) => s.last_velocity_diag(),
            Sampler::Svgd(s) => s.last_velocity_diag(),
            Sampler::L2gf(s) => s.last_velocity_diag(),
        }
    }

    pub fn total_failures(&self) -> u64 {
        match self {
            Sampler::Sifg(s) | Sampler::AdaSifg(s) => s.total_failures(),
            Sampler::Svgd(s) => s.total_failures(),
            Sampler::L2gf(s) => s.total_failures(),
        }
    }

    /// Samples representing the sampler's current approximation: perturbed
    /// particles for the semi-implicit methods, raw particles otherwise.
    pub fn approx_samples(&self, cfg: &SamplerConfig) -> Vec<f64> {
        match self {
            Sampler::Sifg(s) | Sampler::AdaSifg(s) => final_samples(s, cfg),
            Sampler::Svgd(s) => s.ensemble().as_flat().to_vec(),
            Sampler::L2gf(s) => s.ensemble().as_flat().to_vec(),
        }
    }
}
