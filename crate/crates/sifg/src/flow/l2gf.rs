//! Functional gradient flow baseline with quadratic regularization.
//!
//! The velocity field is a neural net fitted on the raw particles against
//! `(1/n) sum_i [ -<grad log pi(z_i), v(z_i)> - div v(z_i) + 0.5 ||v||^2 ]`,
//! with the divergence computed exactly by `d` tangent propagations per
//! particle. Exact divergence caps the dimension; larger problems belong to
//! the semi-implicit sampler, whose score matching needs no divergence.

use rayon::prelude::*;

use super::{eval_scores, ParticleEnsemble, SamplerConfig, StepStatus, MAX_CONSECUTIVE_FAILURES};
use crate::nn::{optimizer_step, velocity_fit_loss_and_grad, OptimizerState, ScoreNet};
use crate::targets::Target;
use crate::{Error, Result};

/// Largest dimension the exact-divergence objective accepts.
pub const MAX_EXACT_DIVERGENCE_DIM: usize = 64;

/// Evolving state of the velocity-fit baseline.
#[derive(Debug, Clone)]
pub struct L2gfState {
    ensemble: ParticleEnsemble,
    net: ScoreNet,
    opt: OptimizerState,
    iteration: u64,
    last_velocity_sq_mean: Option<f64>,
    consecutive_failures: u32,
    total_failures: u64,
}

impl L2gfState {
    pub fn new(ensemble: ParticleEnsemble, net: ScoreNet, opt: OptimizerState) -> Result<Self> {
        if ensemble.dim() > MAX_EXACT_DIVERGENCE_DIM {
            return Err(Error::Config(format!(
                "exact divergence supports at most d = {MAX_EXACT_DIVERGENCE_DIM} \
                 (got {}); use the semi-implicit sampler instead",
                ensemble.dim()
            )));
        }
        if net.dim() != ensemble.dim() {
            return Err(Error::Config(format!(
                "net dimension {} does not match particle dimension {}",
                net.dim(),
                ensemble.dim()
            )));
        }
        Ok(L2gfState {
            ensemble,
            net,
            opt,
            iteration: 0,
            last_velocity_sq_mean: None,
            consecutive_failures: 0,
            total_failures: 0,
        })
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        &self.ensemble
    }

    pub fn net(&self) -> &ScoreNet {
        &self.net
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn last_velocity_diag(&self) -> Option<f64> {
        self.last_velocity_sq_mean
    }

    pub fn total_failures(&self) -> u64 {
        self.total_failures
    }
}

/// One outer iteration: refit the velocity net on the current particles,
/// then move `z_i <- z_i + h v(z_i)`.
pub fn l2gf_step(state: &mut L2gfState, target: &Target, cfg: &SamplerConfig) -> Result<StepStatus> {
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
    let zs = state.ensemble.as_flat().to_vec();

    let batch = target.draw_minibatch(cfg.seed, k);
    let scores = match eval_scores(target, &zs, d, batch.as_deref()) {
        Ok(s) => s,
        Err(Error::Numerical(_)) => {
            state.consecutive_failures += 1;
            state.total_failures += 1;
            state.iteration += 1;
            if state.consecutive_failures > MAX_CONSECUTIVE_FAILURES {
                return Err(Error::Aborted(format!(
                    "{} consecutive step failures",
                    state.consecutive_failures
                )));
            }
            return Ok(StepStatus::RolledBack);
        }
        Err(e) => return Err(e),
    };

    for _ in 0..cfg.n_inner {
        let (_, grads) = velocity_fit_loss_and_grad(&state.net, &zs, &scores)?;
        let (net, opt) = optimizer_step(&state.net, &grads, &state.opt, cfg.eta)?;
        state.net = net;
        state.opt = opt;
    }

    let mut velocities = vec![0.0; n * d];
    velocities
        .par_chunks_mut(d)
        .zip(zs.par_chunks(d))
        .for_each(|(v, z)| v.copy_from_slice(&state.net.forward(z)));

    let mut data = zs;
    for (z, v) in data.iter_mut().zip(&velocities) {
        *z += cfg.h * v;
    }
    state.ensemble = ParticleEnsemble::from_flat(data, d)?;
    state.last_velocity_sq_mean = Some(
        velocities
            .chunks_exact(d)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            / n as f64,
    );
    state.consecutive_failures = 0;
    state.iteration = k + 1;
    Ok(StepStatus::Applied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{net_init, Activation, OptimizerKind};
    use crate::targets::{GaussianTarget, Target};

    #[test]
    fn dimension_cap_enforced() {
        let d = MAX_EXACT_DIVERGENCE_DIM + 1;
        let ensemble = ParticleEnsemble::from_flat(vec![0.1; d], d).unwrap();
        let net = net_init(&[d, 4, d], Activation::Tanh, 1).unwrap();
        let opt = OptimizerState::new(OptimizerKind::Sgd, &net);
        assert!(matches!(
            L2gfState::new(ensemble, net, opt),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fitted_linear_velocity_matches_gaussian_flow() {
        // For pi = N(0, I) and particles from N(m, s2 I), the exact flow
        // velocity is -grad log(mu/pi)(z) = (1/s2 - 1) z - m/s2.
        let (m, s2) = (1.0, 0.25);
        let target = Target::Gaussian(GaussianTarget::new(vec![0.0, 0.0], 1.0).unwrap());
        let ensemble = ParticleEnsemble::init_gaussian(4000, &[m, 0.0], s2, 13).unwrap();
        // Single affine layer: v(z) = A z + b.
        let net = net_init(&[2, 2], Activation::Tanh, 5).unwrap();
        let opt = OptimizerState::new(OptimizerKind::adam_default(), &net);
        let mut state = L2gfState::new(ensemble, net, opt).unwrap();
        let mut cfg = SamplerConfig::new(0.0, 2e-2, 1, 1500, 0.1, 13);
        cfg.optimizer = OptimizerKind::adam_default();
        l2gf_step(&mut state, &target, &cfg).unwrap();

        let a_expect = 1.0 / s2 - 1.0;
        let b_expect = [-m / s2, 0.0];
        let w = &state.net().params().weights[0];
        let b = &state.net().params().biases[0];
        assert!(
            (w[0] - a_expect).abs() / a_expect < 0.1,
            "A[0,0] {} vs {a_expect}",
            w[0]
        );
        assert!(
            (w[3] - a_expect).abs() / a_expect < 0.1,
            "A[1,1] {} vs {a_expect}",
            w[3]
        );
        assert!(w[1].abs() < 0.3 && w[2].abs() < 0.3, "off-diagonals {w:?}");
        assert!(
            (b[0] - b_expect[0]).abs() / b_expect[0].abs() < 0.1,
            "b[0] {} vs {}",
            b[0],
            b_expect[0]
        );
        assert!(b[1].abs() < 0.3, "b[1] {}", b[1]);
    }

    #[test]
    fn step_moves_particles_toward_target_score() {
        let target = Target::Gaussian(GaussianTarget::new(vec![0.0, 0.0], 1.0).unwrap());
        let ensemble = ParticleEnsemble::init_gaussian(256, &[2.0, 0.0], 0.25, 3).unwrap();
        let net = net_init(&[2, 16, 16, 2], Activation::Tanh, 3).unwrap();
        let opt = OptimizerState::new(OptimizerKind::adam_default(), &net);
        let mut state = L2gfState::new(ensemble, net, opt).unwrap();
        let mut cfg = SamplerConfig::new(0.1, 5e-3, 60, 20, 0.1, 3);
        cfg.optimizer = OptimizerKind::adam_default();
        let start_norm: f64 = state.ensemble().mean().iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..60 {
            l2gf_step(&mut state, &target, &cfg).unwrap();
        }
        let end_norm: f64 = state.ensemble().mean().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            end_norm < 0.5 * start_norm,
            "mean norm {start_norm} -> {end_norm}"
        );
        assert!(state.last_velocity_diag().unwrap() >= 0.0);
    }
}
