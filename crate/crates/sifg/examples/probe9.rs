// scratch: ICA diagnosis — where is the amari floor coming from?
use sifg::flow::*;
use sifg::metrics::amari_distance;
use sifg::nn::*;
use sifg::targets::*;

fn amari_mean(flat: &[f64], d: usize, w_true: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    for w in flat.chunks_exact(d * d) {
        let rows: Vec<Vec<f64>> = (0..d).map(|r| w[r*d..(r+1)*d].to_vec()).collect();
        acc += amari_distance(&rows, w_true).unwrap();
    }
    acc / (flat.len() / (d * d)) as f64
}

fn main() {
    let (model, w_true) = ica_synthesize(2, 500, 7).unwrap();
    let target = Target::Ica(model.clone());
    let d = 2usize;

    // Reference: amari of W_true itself = 0; of a gradient-ascent MAP from W_true.
    let mut w = [w_true[0][0], w_true[0][1], w_true[1][0], w_true[1][1]];
    for _ in 0..2000 {
        let (_, g) = model.logp_score(&w, None).unwrap();
        for c in 0..4 { w[c] += 1e-4 * g[c]; }
    }
    println!("MAP-from-truth amari: {:.4}", amari_mean(&w, d, &w_true));
    let (lp_map, _) = model.logp_score(&w, None).unwrap();
    println!("logp at MAP: {lp_map:.2}");

    // Oracle-estimator SIFG run (no net, analytic gaussian fit).
    let seed = 1u64;
    let ensemble = ParticleEnsemble::init_gaussian(10, &[0.0; 4], 1.0, seed).unwrap();
    let mut st = SifgState::new(ensemble, ScoreEstimator::GaussianOracle, 0.03).unwrap();
    let cfg = SamplerConfig::new(1e-3, 1e-3, 2000, 0, 0.03, seed);
    for k in 1..=2000u64 {
        match sifg_step(&mut st, &target, &cfg) { Ok(_) => {}, Err(e) => { println!("err {e} at {k}"); return; } }
        if k % 500 == 0 {
            let raw = amari_mean(st.ensemble().as_flat(), d, &w_true);
            let pert = amari_mean(&final_samples(&st, &cfg), d, &w_true);
            let lp: f64 = (0..st.ensemble().count()).map(|i| model.logp_score(st.ensemble().particle(i), None).unwrap().0).sum::<f64>() / 10.0;
            println!("oracle k={k}: raw {raw:.4} pert {pert:.4} mean-logp {lp:.1}");
        }
    }

    // Net-estimator run with diagnostics.
    let ensemble = ParticleEnsemble::init_gaussian(10, &[0.0; 4], 1.0, seed).unwrap();
    let net = net_init(&[4, 120, 120, 4], Activation::Tanh, seed).unwrap();
    let opt = OptimizerState::new(OptimizerKind::Sgd, &net);
    let mut st = SifgState::new(ensemble, ScoreEstimator::Net { net, opt }, 0.03).unwrap();
    let cfg = SamplerConfig::new(1e-3, 1e-3, 2000, 20, 0.03, seed);
    for k in 1..=2000u64 {
        sifg_step(&mut st, &target, &cfg).unwrap();
        if k % 500 == 0 {
            let raw = amari_mean(st.ensemble().as_flat(), d, &w_true);
            let pert = amari_mean(&final_samples(&st, &cfg), d, &w_true);
            let lp: f64 = (0..st.ensemble().count()).map(|i| model.logp_score(st.ensemble().particle(i), None).unwrap().0).sum::<f64>() / 10.0;
            println!("net    k={k}: raw {raw:.4} pert {pert:.4} mean-logp {lp:.1} veldiag {:.1}", st.last_velocity_diag().unwrap());
        }
    }
}
