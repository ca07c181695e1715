//! Quantitative diagnostics: KL estimation, Amari distance, moments, and
//! mode coverage.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::flow::ParticleEnsemble;
use crate::{Error, Result};

/// Minimum nearest-neighbor radius; duplicate points would otherwise
/// produce zero radii and infinite logs.
const RADIUS_FLOOR: f64 = 1e-12;

/// k-nearest-neighbor divergence estimate `D(p || q)` from two sample sets
/// (flat row-major `n x d` and `m x d`).
///
/// `D = (d/n) sum_i log(nu_k(i) / rho_k(i)) + log(m / (n - 1))`, where
/// `rho_k` is the k-th neighbor radius of `p_i` within `samples_p` (self
/// excluded) and `nu_k` within `samples_q`. Finite-sample estimates can be
/// negative.
pub fn knn_kl(samples_p: &[f64], samples_q: &[f64], dim: usize, k: usize) -> Result<f64> {
    if dim == 0 || k == 0 {
        return Err(Error::Usage("need dim >= 1 and k >= 1".into()));
    }
    if samples_p.len() % dim != 0 || samples_q.len() % dim != 0 {
        return Err(Error::Usage("sample buffers are not n x d".into()));
    }
    let n = samples_p.len() / dim;
    let m = samples_q.len() / dim;
    if n <= k || m <= k {
        return Err(Error::Usage(format!(
            "need more than k = {k} samples on both sides (got {n} and {m})"
        )));
    }

    let log_sum: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = &samples_p[i * dim..(i + 1) * dim];
            let rho = kth_radius(x, samples_p, dim, k, Some(i));
            let nu = kth_radius(x, samples_q, dim, k, None);
            (nu.max(RADIUS_FLOOR) / rho.max(RADIUS_FLOOR)).ln()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();

    Ok(dim as f64 / n as f64 * log_sum + (m as f64 / (n as f64 - 1.0)).ln())
}

fn kth_radius(x: &[f64], pool: &[f64], dim: usize, k: usize, skip: Option<usize>) -> f64 {
    let n = pool.len() / dim;
    let mut dists = Vec::with_capacity(n);
    for j in 0..n {
        if skip == Some(j) {
            continue;
        }
        let y = &pool[j * dim..(j + 1) * dim];
        let mut sq = 0.0;
        for (a, b) in x.iter().zip(y) {
            let diff = a - b;
            sq += diff * diff;
        }
        dists.push(sq);
    }
    let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    kth.sqrt()
}

/// Amari index of `P = W_est W_true^{-1}`: zero iff `P` is a scaled
/// permutation, i.e. the estimate matches up to the ICA indeterminacies.
pub fn amari_distance(w_est: &[Vec<f64>], w_true: &[Vec<f64>]) -> Result<f64> {
    let d = w_true.len();
    if d == 0 || w_est.len() != d {
        return Err(Error::Usage("matrices must be square and same size".into()));
    }
    if w_est.iter().chain(w_true).any(|r| r.len() != d) {
        return Err(Error::Usage("matrices must be square and same size".into()));
    }
    let wt = DMatrix::from_fn(d, d, |r, c| w_true[r][c]);
    let lu = wt.lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() <= 1e-300 {
        return Err(Error::Usage("ground-truth matrix is singular".into()));
    }
    let wt_inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Usage("ground-truth matrix is singular".into()))?;
    let we = DMatrix::from_fn(d, d, |r, c| w_est[r][c]);
    let p = (we * wt_inv).map(f64::abs);

    let mut total = 0.0;
    for i in 0..d {
        let row_max = (0..d).map(|j| p[(i, j)]).fold(0.0, f64::max);
        let row_sum: f64 = (0..d).map(|j| p[(i, j)]).sum();
        total += row_sum / row_max.max(RADIUS_FLOOR) - 1.0;
    }
    for j in 0..d {
        let col_max = (0..d).map(|i| p[(i, j)]).fold(0.0, f64::max);
        let col_sum: f64 = (0..d).map(|i| p[(i, j)]).sum();
        total += col_sum / col_max.max(RADIUS_FLOOR) - 1.0;
    }
    Ok(total / (2.0 * d as f64))
}

/// Empirical alpha-th absolute moment `(1/n) sum_i ||z_i||^alpha`.
pub fn moment(ensemble: &ParticleEnsemble, alpha: f64) -> f64 {
    assert!(alpha > 0.0, "alpha must be positive");
    let n = ensemble.count();
    let mut acc = 0.0;
    for i in 0..n {
        let z = ensemble.particle(i);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        acc += norm.powf(alpha);
    }
    acc / n as f64
}

/// Per-mode fraction of samples within `radius_mult * std_j` of `mean_j`.
/// Overlapping balls may count a sample toward several modes.
pub fn mode_coverage(
    samples: &[f64],
    means: &[Vec<f64>],
    stds: &[f64],
    radius_mult: f64,
) -> Result<Vec<f64>> {
    if radius_mult <= 0.0 {
        return Err(Error::Usage("radius_mult must be positive".into()));
    }
    if means.is_empty() || means.len() != stds.len() {
        return Err(Error::Usage("means and stds must match".into()));
    }
    let dim = means[0].len();
    if samples.is_empty() {
        return Err(Error::Usage("no samples".into()));
    }
    if samples.len() % dim != 0 {
        return Err(Error::Usage("sample buffer is not n x d".into()));
    }
    let n = samples.len() / dim;
    let mut fractions = vec![0.0; means.len()];
    for (j, (mean, std)) in means.iter().zip(stds).enumerate() {
        let r2 = (radius_mult * std) * (radius_mult * std);
        let mut count = 0usize;
        for i in 0..n {
            let x = &samples[i * dim..(i + 1) * dim];
            let sq: f64 = x
                .iter()
                .zip(mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if sq <= r2 {
                count += 1;
            }
        }
        fractions[j] = count as f64 / n as f64;
    }
    Ok(fractions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn normal_samples(n: usize, dim: usize, mean: f64, seed: u64) -> Vec<f64> {
        let mut out = vec![0.0; n * dim];
        let mut stream = RngStream::new(seed, 0, 0, 0);
        stream.fill_standard_normal(&mut out);
        for v in &mut out {
            *v += mean;
        }
        out
    }

    #[test]
    fn knn_kl_same_distribution_near_zero() {
        let p = normal_samples(5000, 2, 0.0, 1);
        let q = normal_samples(5000, 2, 0.0, 2);
        let kl = knn_kl(&p, &q, 2, 5).unwrap();
        assert!(kl.abs() < 0.05, "kl {kl}");
    }

    #[test]
    fn knn_kl_shifted_gaussian_calibration() {
        // KL(N(0,1) || N(1,1)) = 0.5.
        let p = normal_samples(10_000, 1, 0.0, 3);
        let q = normal_samples(10_000, 1, 1.0, 4);
        let kl = knn_kl(&p, &q, 1, 5).unwrap();
        assert!((kl - 0.5).abs() < 0.1, "kl {kl}");
    }

    #[test]
    fn knn_kl_rejects_small_samples() {
        let p = normal_samples(5, 1, 0.0, 1);
        let q = normal_samples(100, 1, 0.0, 2);
        assert!(knn_kl(&p, &q, 1, 5).is_err());
        assert!(knn_kl(&q, &p, 1, 5).is_err());
    }

    #[test]
    fn knn_kl_handles_duplicates() {
        let p = vec![0.0; 20];
        let q = normal_samples(20, 1, 0.0, 2);
        let kl = knn_kl(&p, &q, 1, 3).unwrap();
        assert!(kl.is_finite());
    }

    #[test]
    fn knn_kl_positive_in_expectation_for_distinct() {
        let mut acc = 0.0;
        for seed in 0..20 {
            let p = normal_samples(400, 1, 0.0, 100 + seed);
            let q = normal_samples(400, 1, 1.5, 200 + seed);
            acc += knn_kl(&p, &q, 1, 5).unwrap();
        }
        assert!(acc / 20.0 > 0.0);
    }

    #[test]
    fn amari_zero_cases_and_hand_value() {
        let w = vec![vec![0.8, 0.1], vec![-0.3, 1.2]];
        assert!(amari_distance(&w, &w).unwrap().abs() < 1e-12);

        // Scaled permutation of the truth is still zero.
        let dp = vec![vec![0.0, 2.0], vec![-3.0, 0.0]];
        let prod: Vec<Vec<f64>> = (0..2)
            .map(|r| {
                (0..2)
                    .map(|c| dp[r][0] * w[0][c] + dp[r][1] * w[1][c])
                    .collect()
            })
            .collect();
        assert!(amari_distance(&prod, &w).unwrap().abs() < 1e-12);

        // P = [[1,1],[0,1]] against the identity: hand value 0.5.
        let p = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!((amari_distance(&p, &id).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn amari_rejects_singular_truth() {
        let w = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let e = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(amari_distance(&e, &w).is_err());
    }

    #[test]
    fn moment_closed_values() {
        let e = ParticleEnsemble::from_flat(vec![0.0; 6], 2).unwrap();
        assert_eq!(moment(&e, 5.0), 0.0);
        let e = ParticleEnsemble::from_flat(vec![2.0, 0.0], 2).unwrap();
        assert_eq!(moment(&e, 5.0), 32.0);
    }

    #[test]
    fn moment_gaussian_fifth_absolute() {
        // E|Z|^5 = 2^{5/2} Gamma(3) / sqrt(pi) = 8 sqrt(2/pi).
        let samples = normal_samples(100_000, 1, 0.0, 3);
        let e = ParticleEnsemble::from_flat(samples, 1).unwrap();
        let expect = 8.0 * (2.0 / std::f64::consts::PI).sqrt();
        let got = moment(&e, 5.0);
        assert!((got - expect).abs() / expect < 0.02, "{got} vs {expect}");
    }

    #[test]
    fn mode_coverage_prefix_cases() {
        let means = vec![vec![0.0, 0.0], vec![10.0, 0.0]];
        let stds = vec![0.5, 0.5];
        let samples = vec![0.0, 0.0, 0.1, 0.0, 0.0, -0.1];
        let cov = mode_coverage(&samples, &means, &stds, 3.0).unwrap();
        assert_eq!(cov, vec![1.0, 0.0]);
        assert!(mode_coverage(&[], &means, &stds, 3.0).is_err());
    }

    #[test]
    fn mode_coverage_chi_squared_mass() {
        // 3-sigma ball in 2D holds 1 - exp(-4.5) of each component's mass.
        let g = crate::targets::GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![0.0, 0.0], vec![50.0, 0.0]],
            vec![1.0, 2.0],
        )
        .unwrap();
        let samples = g.sample(40_000, 17);
        let cov = mode_coverage(&samples, g.means(), g.stds(), 3.0).unwrap();
        let mass = 1.0 - (-4.5f64).exp();
        for c in cov {
            assert!((c - 0.5 * mass).abs() < 0.02, "coverage {c}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn moment_homogeneity(c in 0.1f64..10.0, alpha in 0.5f64..6.0) {
            let base = normal_samples(64, 3, 0.4, 21);
            let scaled: Vec<f64> = base.iter().map(|v| c * v).collect();
            let e0 = ParticleEnsemble::from_flat(base, 3).unwrap();
            let e1 = ParticleEnsemble::from_flat(scaled, 3).unwrap();
            let lhs = moment(&e1, alpha);
            let rhs = c.powf(alpha) * moment(&e0, alpha);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-9));
        }

        #[test]
        fn amari_scale_invariance(c in prop::sample::select(vec![-3.0f64, -0.5, 0.25, 2.0, 7.5])) {
            let w_true = vec![vec![1.0, 0.3], vec![-0.2, 0.8]];
            let w_est = vec![vec![0.9, 0.5], vec![0.1, 1.1]];
            let scaled: Vec<Vec<f64>> =
                w_est.iter().map(|r| r.iter().map(|v| c * v).collect()).collect();
            let a = amari_distance(&w_est, &w_true).unwrap();
            let b = amari_distance(&scaled, &w_true).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn mode_coverage_permutation(perm in prop::sample::select(vec![[0usize,1,2],[1,0,2],[2,1,0],[1,2,0]])) {
            let means = vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 4.0]];
            let stds = vec![0.3, 0.6, 0.9];
            let samples = normal_samples(128, 2, 0.5, 33);
            let base = mode_coverage(&samples, &means, &stds, 3.0).unwrap();
            let p_means: Vec<Vec<f64>> = perm.iter().map(|&i| means[i].clone()).collect();
            let p_stds: Vec<f64> = perm.iter().map(|&i| stds[i]).collect();
            let permuted = mode_coverage(&samples, &p_means, &p_stds, 3.0).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(permuted[k], base[i]);
            }
        }
    }
}
