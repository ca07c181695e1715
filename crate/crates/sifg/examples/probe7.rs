// scratch: synthetic ICA amari trajectory, SIFG
use sifg::flow::*;
use sifg::metrics::amari_distance;
use sifg::nn::*;
use sifg::targets::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let h: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let n_inner: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(20);
    let (model, w_true) = ica_synthesize(2, 500, 7).unwrap();
    let target = Target::Ica(model);
    let d = 2usize;
    let ensemble = ParticleEnsemble::init_gaussian(10, &[0.0; 4], 1.0, seed).unwrap();
    let net = net_init(&[4, 120, 120, 4], Activation::Tanh, seed).unwrap();
    let opt = OptimizerState::new(OptimizerKind::Sgd, &net);
    let mut st = SifgState::new(ensemble, ScoreEstimator::Net { net, opt }, 0.03).unwrap();
    let cfg = SamplerConfig::new(h, 1e-3, 2000, n_inner, 0.03, seed);
    let amari_of = |st: &SifgState, cfg: &SamplerConfig| {
        let s = final_samples(st, cfg);
        let mut acc = 0.0;
        for w_flat in s.chunks_exact(d * d) {
            let rows: Vec<Vec<f64>> = (0..d).map(|r| w_flat[r*d..(r+1)*d].to_vec()).collect();
            acc += amari_distance(&rows, &w_true).unwrap();
        }
        acc / (s.len() / (d * d)) as f64
    };
    let t0 = std::time::Instant::now();
    println!("ica h={h} N'={n_inner} seed={seed} k=0: amari {:.4}", amari_of(&st, &cfg));
    for k in 1..=2000u64 {
        match sifg_step(&mut st, &target, &cfg) {
            Ok(StepStatus::Applied) => {}
            Ok(StepStatus::RolledBack) => println!("  rollback at {k}"),
            Err(e) => { println!("  ERROR {e} at {k}"); return; }
        }
        if k % 400 == 0 {
            println!("ica h={h} seed={seed} k={k}: amari {:.4}  ({:.0}s)", amari_of(&st, &cfg), t0.elapsed().as_secs_f64());
        }
    }
}
