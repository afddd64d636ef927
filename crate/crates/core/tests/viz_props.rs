use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semgap::synthetic::{gen_blobs, BlobSpec};
use semgap::viz::{calibrate_affinities, silhouette, tsne, TsneConfig};

/// Three 20-point clusters in D = 16 with unit per-coordinate spread and
/// class means 10 apart.
fn three_clusters(seed: u64) -> (Vec<f32>, Vec<i64>) {
    let spec = BlobSpec {
        sigma: 4.0,
        ..BlobSpec::new(3, 16, 20, 2.5, seed)
    };
    let (x, y) = gen_blobs(&spec).unwrap();
    (x.data().to_vec(), y.labels().to_vec())
}

fn entropy_bits(dist: &[f64], i: usize, sigma: f64) -> f64 {
    let w: Vec<f64> = dist
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            if j == i {
                0.0
            } else {
                (-d / (2.0 * sigma * sigma)).exp()
            }
        })
        .collect();
    let z: f64 = w.iter().sum();
    -w.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| (v / z) * (v / z).log2())
        .sum::<f64>()
}

#[test]
fn calibrated_rows_hit_target_perplexity() {
    let (x, _) = three_clusters(0);
    for perplexity in [5.0, 10.0, 19.0] {
        let a = calibrate_affinities(&x, 16, perplexity).unwrap();
        let n = a.n;
        for (i, h) in a.entropies.iter().enumerate() {
            assert!((h - perplexity.log2()).abs() <= 1e-4, "row {i}: {h}");
            let row_sum: f64 = a.conditional[i * n..(i + 1) * n].iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-5);
        }
        let total: f64 = a.joint.iter().sum();
        assert!((total - 1.0).abs() < 1e-5);
        for i in 0..n {
            assert_eq!(a.joint[i * n + i], 0.0);
            for j in 0..n {
                assert_eq!(a.joint[i * n + j], a.joint[j * n + i]);
                assert!(a.joint[i * n + j] >= 0.0);
            }
        }
    }
}

#[test]
fn bandwidths_match_direct_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, d) = (10, 3);
    let x: Vec<f32> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let perplexity = 3.0;
    let a = calibrate_affinities(&x, d, perplexity).unwrap();
    for i in 0..n {
        let dist: Vec<f64> = (0..n)
            .map(|j| {
                (0..d)
                    .map(|k| (x[i * d + k] as f64 - x[j * d + k] as f64).powi(2))
                    .sum()
            })
            .collect();
        // scan sigma geometrically and keep the closest entropy
        let mut best = (f64::INFINITY, 0.0);
        let mut sigma = 1e-3;
        while sigma < 1e3 {
            let err = (entropy_bits(&dist, i, sigma) - perplexity.log2()).abs();
            if err < best.0 {
                best = (err, sigma);
            }
            sigma *= 1.0001;
        }
        let ours = (1.0 / (2.0 * a.betas[i])).sqrt();
        assert!((ours - best.1).abs() / best.1 < 1e-3, "row {i}: {ours} vs {}", best.1);
    }
}

fn small_config() -> TsneConfig {
    TsneConfig {
        perplexity: 10.0,
        ..TsneConfig::default()
    }
}

#[test]
fn separated_clusters_stay_separated_in_2d() {
    let (x, y) = three_clusters(1);
    let emb = tsne(&x, 16, &small_config()).unwrap();
    assert_eq!(emb.len(), 60);
    assert!(emb.points.iter().all(|v| v.is_finite()));
    let s = silhouette(&emb.points, 2, &y).unwrap();
    assert!(s > 0.5, "silhouette {s}");
    assert!(
        emb.final_kl < emb.kl_history[250],
        "{} vs {}",
        emb.final_kl,
        emb.kl_history[250]
    );
    for axis in 0..2 {
        let mean: f64 = emb.points.iter().skip(axis).step_by(2).map(|&v| v as f64).sum::<f64>() / 60.0;
        assert!(mean.abs() < 1e-3, "axis {axis} mean {mean}");
    }
}

#[test]
fn embedding_is_deterministic_across_runs_and_threads() {
    let (x, _) = three_clusters(2);
    let cfg = TsneConfig {
        iterations: 300,
        ..small_config()
    };
    let a = tsne(&x, 16, &cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| tsne(&x, 16, &cfg).unwrap());
    assert_eq!(a, b);
    let c = tsne(&x, 16, &TsneConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.points, c.points);
}

#[test]
fn silhouette_of_far_tight_clusters_is_high() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (k, centre) in [0.0f32, 100.0].iter().enumerate() {
        for _ in 0..15 {
            pts.push(centre + rng.random_range(-0.5..0.5));
            pts.push(rng.random_range(-0.5..0.5));
            labels.push(k as i64);
        }
    }
    assert!(silhouette(&pts, 2, &labels).unwrap() > 0.9);
}

#[test]
fn random_labels_on_one_cloud_score_near_zero() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<f32> = (0..200 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<i64> = (0..200).map(|_| rng.random_range(0..3)).collect();
        let s = silhouette(&pts, 3, &labels).unwrap();
        assert!(s.abs() < 0.1, "seed {seed}: {s}");
    }
}

#[test]
fn coincident_clusters_do_not_score_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts: Vec<f32> = (0..40 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut labels: Vec<i64> = vec![0; 20];
    labels.extend(vec![1; 20]);
    // same cloud duplicated under two labels
    let mut doubled = pts[..40].to_vec();
    doubled.extend_from_slice(&pts[..40]);
    assert!(silhouette(&doubled, 2, &labels).unwrap() <= 0.0);
}

#[test]
fn silhouette_grows_with_separation() {
    let scores: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|&sep| {
            let (x, y) = gen_blobs(&BlobSpec::new(3, 8, 40, sep, 9)).unwrap();
            silhouette(x.data(), 8, y.labels()).unwrap()
        })
        .collect();
    assert!(scores.windows(2).all(|w| w[1] > w[0]), "{scores:?}");
}
