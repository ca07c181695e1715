// scratch: velocity-fit baseline coverage on candidate mean draws
use sifg::flow::*;
use sifg::metrics::mode_coverage;
use sifg::nn::*;
use sifg::rng::RngStream;
use sifg::targets::*;

fn means_for(seed: u64) -> Vec<Vec<f64>> {
    let mut s = RngStream::new(seed, 100, 0, 0);
    (0..5).map(|_| { let mut m = [0.0; 2]; s.fill_standard_normal(&mut m); m.to_vec() }).collect()
}

fn main() {
    let stds = vec![0.1, 0.2, 0.3, 0.4, 0.5];
    for mean_seed in [3u64, 11, 15, 16, 17, 14, 4, 12] {
        let means = means_for(mean_seed);
        let gmm = GaussianMixture::new(vec![0.2; 5], means.clone(), stds.clone()).unwrap();
        let target = Target::GaussianMixture(gmm);
        let seed = 1u64;
        let ensemble = ParticleEnsemble::init_gaussian(1000, &[3.0, 0.0], 0.25, seed).unwrap();
        let net = net_init(&[2, 32, 32, 2], Activation::Tanh, seed).unwrap();
        let opt = OptimizerState::new(OptimizerKind::SgdMomentum { beta: 0.9 }, &net);
        let mut st = L2gfState::new(ensemble, net, opt).unwrap();
        let cfg = SamplerConfig::new(0.1, 1e-3, 2000, 5, 0.1, seed);
        for _ in 0..2000 { l2gf_step(&mut st, &target, &cfg).unwrap(); }
        let cov = mode_coverage(st.ensemble().as_flat(), &means, &stds, 3.0).unwrap();
        let min = cov.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("mean_seed {mean_seed}: l2gf min {min:.4} cov {:?}",
            cov.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>());
    }
}
