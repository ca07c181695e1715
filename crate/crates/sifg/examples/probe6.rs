// scratch: 10D cost measurement + KL behavior, both methods, short runs
use sifg::flow::*;
use sifg::metrics::knn_kl;
use sifg::nn::*;
use sifg::rng::RngStream;
use sifg::targets::*;

fn means_for_10d(seed: u64) -> Vec<Vec<f64>> {
    let mut s = RngStream::new(seed, 101, 0, 0);
    (0..5).map(|_| { let mut m = [0.0; 10]; s.fill_standard_normal(&mut m); m.to_vec() }).collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("sifg");
    let iters: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    let mean_seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1);
    let means = means_for_10d(mean_seed);
    let stds = vec![0.1, 0.2, 0.3, 0.4, 0.5];
    let gmm = GaussianMixture::new(vec![0.2; 5], means.clone(), stds).unwrap();
    let gt = gmm.sample(2000, 999);
    let target = Target::GaussianMixture(gmm);
    let seed = 1u64;
    let ensemble = ParticleEnsemble::init_gaussian(1000, &[0.0; 10], 1.0, seed).unwrap();
    let net = net_init(&[10, 32, 32, 10], Activation::Tanh, seed).unwrap();
    let opt = OptimizerState::new(OptimizerKind::SgdMomentum { beta: 0.9 }, &net);
    let t0 = std::time::Instant::now();
    match which {
        "sifg" => {
            let mut st = SifgState::new(ensemble, ScoreEstimator::Net { net, opt }, 0.1).unwrap();
            let cfg = SamplerConfig::new(0.01, 1e-3, iters, 5, 0.1, seed);
            let s0 = final_samples(&st, &cfg);
            println!("kl at 0: {:.4}", knn_kl(&s0, &gt, 10, 5).unwrap());
            for k in 1..=iters {
                sifg_step(&mut st, &target, &cfg).unwrap();
                if k % (iters / 4).max(1) == 0 {
                    let s = final_samples(&st, &cfg);
                    println!("sifg k={k}: kl {:.4}  ({:.1}s)", knn_kl(&s, &gt, 10, 5).unwrap(), t0.elapsed().as_secs_f64());
                }
            }
        }
        _ => {
            let mut st = L2gfState::new(ensemble, net, opt).unwrap();
            let cfg = SamplerConfig::new(0.1, 1e-3, iters, 5, 0.1, seed);
            println!("kl at 0: {:.4}", knn_kl(st.ensemble().as_flat(), &gt, 10, 5).unwrap());
            for k in 1..=iters {
                l2gf_step(&mut st, &target, &cfg).unwrap();
                if k % (iters / 4).max(1) == 0 {
                    println!("l2gf k={k}: kl {:.4}  ({:.1}s)", knn_kl(st.ensemble().as_flat(), &gt, 10, 5).unwrap(), t0.elapsed().as_secs_f64());
                }
            }
        }
    }
}
