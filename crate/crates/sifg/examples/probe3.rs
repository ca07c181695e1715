// scratch: monomial gamma KL decay, SIFG vs velocity-fit baseline
use sifg::flow::*;
use sifg::metrics::knn_kl;
use sifg::nn::*;
use sifg::targets::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("sifg");
    let h: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1);
    let mg = MonomialGamma::new(2).unwrap();
    let gt = mg.sample(2000, 999);
    let target = Target::MonomialGamma(mg);
    let ensemble = ParticleEnsemble::init_gaussian(1000, &[0.0, 0.0], 1.0, seed).unwrap();
    let net = net_init(&[2, 32, 32, 2], Activation::Tanh, seed).unwrap();
    let opt = OptimizerState::new(OptimizerKind::SgdMomentum { beta: 0.9 }, &net);
    let t0 = std::time::Instant::now();
    match which {
        "sifg" => {
            let sigma = 0.1;
            let mut st = SifgState::new(ensemble, ScoreEstimator::Net { net, opt }, sigma).unwrap();
            let cfg = SamplerConfig::new(h, 1e-3, 2000, 5, sigma, seed);
            for k in 1..=2000u64 {
                sifg_step(&mut st, &target, &cfg).unwrap();
                if k % 200 == 0 {
                    let s = final_samples(&st, &cfg);
                    let kl = knn_kl(&s, &gt, 2, 5).unwrap();
                    println!("sifg h={h} seed={seed} k={k}: kl {kl:.4}  ({:.0}s)", t0.elapsed().as_secs_f64());
                }
            }
        }
        _ => {
            let mut st = L2gfState::new(ensemble, net, opt).unwrap();
            let cfg = SamplerConfig::new(h, 1e-3, 2000, 5, 0.1, seed);
            for k in 1..=2000u64 {
                l2gf_step(&mut st, &target, &cfg).unwrap();
                if k % 200 == 0 {
                    let kl = knn_kl(st.ensemble().as_flat(), &gt, 2, 5).unwrap();
                    println!("l2gf h={h} seed={seed} k={k}: kl {kl:.4}  ({:.0}s)", t0.elapsed().as_secs_f64());
                }
            }
        }
    }
}
