// scratch probe: gmm2d mode recovery across candidate mean draws
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
    let args: Vec<String> = std::env::args().collect();
    let mean_seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2);
    let which = args.get(2).map(|s| s.as_str()).unwrap_or("sifg");
    let sigma: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.12);
    let h: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.01);

    let means = means_for(mean_seed);
    let stds = vec![0.1, 0.2, 0.3, 0.4, 0.5];
    println!("mean_seed {mean_seed}: {:?}", means.iter().map(|m| format!("({:.2},{:.2})", m[0], m[1])).collect::<Vec<_>>());
    let gmm = GaussianMixture::new(vec![0.2; 5], means.clone(), stds.clone()).unwrap();
    let target = Target::GaussianMixture(gmm);
    let seed: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1);
    let ensemble = ParticleEnsemble::init_gaussian(1000, &[3.0, 0.0], 0.25, seed).unwrap();
    let net = net_init(&[2, 32, 32, 2], Activation::Tanh, seed).unwrap();
    let t0 = std::time::Instant::now();
    let opt = OptimizerState::new(OptimizerKind::SgdMomentum { beta: 0.9 }, &net);
    match which {
        "sifg" => {
            let mut st = SifgState::new(ensemble, ScoreEstimator::Net { net, opt }, sigma).unwrap();
            let cfg = SamplerConfig::new(h, 1e-3, 2000, 5, sigma, seed);
            for k in 1..=2000u64 {
                sifg_step(&mut st, &target, &cfg).unwrap();
                if k % 500 == 0 {
                    let samples = final_samples(&st, &cfg);
                    let cov = mode_coverage(&samples, &means, &stds, 3.0).unwrap();
                    println!("  sifg s={sigma} h={h} k={k}: cov {:?}  ({:.0}s)",
                        cov.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>(), t0.elapsed().as_secs_f64());
                }
            }
        }
        "l2gf" => {
            let mut st = L2gfState::new(ensemble, net, opt).unwrap();
            let cfg = SamplerConfig::new(h, 1e-3, 2000, 5, 0.1, seed);
            for k in 1..=2000u64 {
                l2gf_step(&mut st, &target, &cfg).unwrap();
                if k % 500 == 0 {
                    let cov = mode_coverage(st.ensemble().as_flat(), &means, &stds, 3.0).unwrap();
                    println!("  l2gf h={h} k={k}: cov {:?}  ({:.0}s)",
                        cov.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>(), t0.elapsed().as_secs_f64());
                }
            }
        }
        _ => panic!(),
    }
}
