mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dyncart::dynamics::parse_log_str;
use dyncart::features::{build_feature_vectors, FeatureLayout};
use dyncart::gmm::{fit_gmm, rank_difficulty, GmmConfig};

use common::three_group_fixture;

fn clustered(seed: u64, n: usize, dim: usize, k: usize, spread: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k).map(|c| (0..dim).map(|j| if j == c % dim { 6.0 * c as f64 } else { 0.0 }).collect()).collect();
    (0..n)
        .map(|i| centers[i % k].iter().map(|c| c + rng.gen_range(-spread..spread)).collect())
        .collect()
}

fn bits(rows: &[Vec<f64>]) -> Vec<u64> {
    rows.iter().flatten().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn em_log_likelihood_never_decreases(seed in any::<u64>(), k in 1usize..4, dim in 1usize..5) {
        let data = clustered(seed, 80, dim, 3, 2.5);
        let fit = fit_gmm(&data, &GmmConfig { k, seed, n_init: 2, ..GmmConfig::default() }).unwrap();
        for r in &fit.restarts {
            for w in r.log_likelihoods.windows(2) {
                prop_assert!(w[1] - w[0] >= -1e-8, "step {}", w[1] - w[0]);
            }
        }
    }

    #[test]
    fn weights_sum_to_one_and_covariances_symmetric(seed in any::<u64>()) {
        let data = clustered(seed, 90, 3, 3, 1.0);
        let m = fit_gmm(&data, &GmmConfig { seed, n_init: 2, ..GmmConfig::default() }).unwrap().model;
        prop_assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(m.weights.iter().all(|w| *w > 0.0));
        for c in &m.covariances {
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(c[i][j].to_bits(), c[j][i].to_bits());
                }
            }
        }
    }

    #[test]
    fn row_permutation_permutes_assignments(seed in any::<u64>(), shuffle in any::<u64>()) {
        let data = clustered(seed, 60, 4, 3, 1.5);
        let cfg = GmmConfig { seed, n_init: 2, ..GmmConfig::default() };
        let a = fit_gmm(&data, &cfg).unwrap().model;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| data[i].clone()).collect();
        let b = fit_gmm(&permuted, &cfg).unwrap().model;
        prop_assert_eq!(bits(&a.means), bits(&b.means));
        let la = a.assign_clusters(&data).unwrap();
        let lb = b.assign_clusters(&permuted).unwrap();
        for (pos, &i) in order.iter().enumerate() {
            prop_assert_eq!(lb[pos], la[i]);
        }
    }

    #[test]
    fn uniform_rescaling_keeps_difficulty_mapping(seed in any::<u64>(), scale in 0.5f64..4.0) {
        let data = clustered(seed, 90, 3, 3, 1.0);
        let conf: Vec<f64> = (0..data.len()).map(|i| [0.9, 0.5, 0.1][i % 3]).collect();
        let cfg = GmmConfig { seed, n_init: 3, ..GmmConfig::default() };
        let scaled: Vec<Vec<f64>> = data.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        let la = fit_gmm(&data, &cfg).unwrap().model.assign_clusters(&data).unwrap();
        let lb = fit_gmm(&scaled, &cfg).unwrap().model.assign_clusters(&scaled).unwrap();
        let ra = rank_difficulty(&la, &conf, 3).unwrap();
        let rb = rank_difficulty(&lb, &conf, 3).unwrap();
        for i in 0..data.len() {
            prop_assert_eq!(ra.difficulty_of(la[i]), rb.difficulty_of(lb[i]));
        }
    }

    #[test]
    fn log_round_trips_and_ignores_line_order(seed in any::<u64>()) {
        let fx = three_group_fixture(seed, [4, 3, 2], 3);
        let log = parse_log_str(&fx.text).unwrap();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        prop_assert_eq!(&parse_log_str(std::str::from_utf8(&buf).unwrap()).unwrap(), &log);

        let mut lines: Vec<&str> = fx.text.lines().collect();
        lines[1..].shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = parse_log_str(&(lines.join("\n") + "\n")).unwrap();
        prop_assert_eq!(&shuffled, &log);
        let fa = build_feature_vectors(&log, FeatureLayout::Paired).unwrap();
        let fb = build_feature_vectors(&shuffled, FeatureLayout::Paired).unwrap();
        prop_assert_eq!(fa, fb);
    }
}
