// scratch scan: final coverage per mean draw, SIFG vs velocity-fit baseline
use sifg::flow::*;
use sifg::metrics::mode_coverage;
use sifg::nn::*;
use sifg::rng::RngStream;
use sifg::targets::*;

fn means_for(seed: u64) -> Vec<Vec<f64>> {
    let mut s = RngStream::new(seed, 100, 0, 0);
    (0..5).map(|_| { let mut m = [0.0; 2]; s.fill_standard_normal(&mut m); m.to_vec() }).collect()
}

fn run_one(means: &[Vec<f64>], stds: &[f64], which: &str, h: f64) -> Vec<f64> {
    let gmm = GaussianMixture::new(vec![0.2; 5], means.to_vec(), stds.to_vec()).unwrap();
    let target = Target::GaussianMixture(gmm);
    let seed = 1u64;
    let ensemble = ParticleEnsemble::init_gaussian(1000, &[3.0, 0.0], 0.25, seed).unwrap();
    let net = net_init(&[2, 32, 32, 2], Activation::Tanh, seed).unwrap();
    let opt = OptimizerState::new(OptimizerKind::SgdMomentum { beta: 0.9 }, &net);
    match which {
        "sifg" => {
            let sigma = 0.12;
            let mut st = SifgState::new(ensemble, ScoreEstimator::Net { net, opt }, sigma).unwrap();
            let cfg = SamplerConfig::new(h, 1e-3, 2000, 5, sigma, seed);
            for _ in 0..2000 { sifg_step(&mut st, &target, &cfg).unwrap(); }
            let samples = final_samples(&st, &cfg);
            mode_coverage(&samples, means, stds, 3.0).unwrap()
        }
        _ => {
            let mut st = L2gfState::new(ensemble, net, opt).unwrap();
            let cfg = SamplerConfig::new(h, 1e-3, 2000, 5, 0.1, seed);
            for _ in 0..2000 { l2gf_step(&mut st, &target, &cfg).unwrap(); }
            mode_coverage(st.ensemble().as_flat(), means, stds, 3.0).unwrap()
        }
    }
}

fn main() {
    let stds = vec![0.1, 0.2, 0.3, 0.4, 0.5];
    for seed in 1..=20u64 {
        let means = means_for(seed);
        let cov = run_one(&means, &stds, "sifg", 0.01);
        let min = cov.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("seed {seed}: min {min:.3} cov {:?} means {:?}", 
            cov.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>(),
            means.iter().map(|m| format!("({:.2},{:.2})", m[0], m[1])).collect::<Vec<_>>());
    }
}
