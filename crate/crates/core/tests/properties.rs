use cfm_core::learning::{
    build_pairs, train_metric, xicor, LearnedMetric, MetricData, MetricTrainConfig, PairMode, Scale, Scenario,
};
use cfm_core::metric::InstanceMetric;
use cfm_core::nn::DenseMatrix;
use cfm_core::{BaseMetric, FeedForwardNet, Instance, Intervention, OracleMetric, Scm};
use proptest::prelude::*;

fn builtins() -> Vec<Scm> {
    vec![Scm::lin(), Scm::nlm(), Scm::example1()]
}

fn one(scm: &Scm, seed: u64) -> Instance {
    scm.sample(1, seed).remove(0).0
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn abduction_and_semilatent_round_trip(seed in any::<u64>()) {
        for scm in builtins() {
            let v = one(&scm, seed);
            let u = scm.abduct(&v).unwrap();
            prop_assert!(max_abs_diff(&scm.reduce(&u).unwrap(), &v) <= 1e-9);
            let q = scm.to_semilatent(&v).unwrap();
            prop_assert!(max_abs_diff(&scm.from_semilatent(&q).unwrap(), &v) <= 1e-9);
        }
    }

    #[test]
    fn twins_of_a_twin_are_the_same_twins(seed in any::<u64>()) {
        for scm in builtins() {
            let v = one(&scm, seed);
            let twins = scm.all_twins(&v).unwrap();
            for t in &twins {
                let again = scm.all_twins(t).unwrap();
                for (a, b) in again.iter().zip(&twins) {
                    prop_assert!(max_abs_diff(a, b) <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn oracle_is_a_pseudo_metric(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        for scm in builtins() {
            let oracle = OracleMetric::euclidean(scm.clone());
            let (a, b, c) = (one(&scm, s1), one(&scm, s2), one(&scm, s3));
            let ab = oracle.distance(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, oracle.distance(&b, &a).unwrap());
            let ac = oracle.distance(&a, &c).unwrap();
            let cb = oracle.distance(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
            for t in scm.all_twins(&a).unwrap() {
                prop_assert!(oracle.distance(&a, &t).unwrap() <= 1e-9);
            }
        }
    }

    #[test]
    fn small_noise_shifts_move_little(
        seed in any::<u64>(),
        d1 in -0.07f64..0.07,
        d2 in -0.07f64..0.07,
    ) {
        for scm in [Scm::lin(), Scm::nlm()] {
            let oracle = OracleMetric::euclidean(scm.clone());
            let v = one(&scm, seed);
            let shift = Intervention::NoiseShift(vec![0.0, d1, d2]);
            let w = scm.counterfactual(&v, &shift).unwrap();
            let norm = (d1 * d1 + d2 * d2).sqrt();
            prop_assert!(oracle.distance(&v, &w).unwrap() <= 2.0 * norm + 1e-12);
        }
    }

    #[test]
    fn latent_projection_matches_euclidean(s1 in any::<u64>(), s2 in any::<u64>()) {
        for scm in builtins() {
            let oracle = OracleMetric::euclidean(scm.clone());
            let n = scm.node_count();
            let mut sigma = DenseMatrix::zeros(n, n);
            for &i in scm.non_sensitive() {
                sigma[(i, i)] = 1.0;
            }
            let (a, b) = (one(&scm, s1), one(&scm, s2));
            let direct = oracle.distance(&a, &b).unwrap();
            let via = oracle.semilatent_mahalanobis(&a, &b, &sigma).unwrap();
            prop_assert!((direct - via).abs() <= 1e-12 * (1.0 + direct));
        }
    }

    #[test]
    fn ball_membership_is_invariant_under_twins(seed in any::<u64>(), delta in 0.05f64..0.3) {
        for scm in [Scm::lin(), Scm::nlm()] {
            let oracle = OracleMetric::euclidean(scm.clone());
            let v = one(&scm, seed);
            let ball = oracle.ball(v.clone(), delta).unwrap();
            let mut probes = ball.sample(20, seed).unwrap();
            probes.extend(oracle.ball(v.clone(), 3.0 * delta).unwrap().sample(20, seed ^ 1).unwrap());
            for t in scm.all_twins(&v).unwrap() {
                let tb = oracle.ball(t, delta).unwrap();
                for p in &probes {
                    prop_assert_eq!(ball.contains(p).unwrap(), tb.contains(p).unwrap());
                }
            }
            for p in ball.sample(20, seed ^ 2).unwrap() {
                prop_assert!(ball.contains(&p).unwrap());
            }
        }
    }

    #[test]
    fn xicor_range_and_rank_invariance(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..50)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let xi = xicor(&x, &y).unwrap();
        prop_assert!((-0.5..=1.0).contains(&xi), "ξ = {}", xi);
        let fx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let same_order = (0..x.len())
            .all(|i| (0..x.len()).all(|j| (x[i] < x[j]) == (fx[i] < fx[j]) && (x[i] == x[j]) == (fx[i] == fx[j])));
        prop_assume!(same_order);
        prop_assert_eq!(xi, xicor(&fx, &y).unwrap());
    }

    #[test]
    fn learned_distance_is_a_pseudo_metric(
        net_seed in any::<u64>(),
        pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 3),
        weighted in any::<bool>(),
    ) {
        let embed_metric = if weighted {
            BaseMetric::weighted(vec![0.5, 2.0]).unwrap()
        } else {
            BaseMetric::Euclidean
        };
        let lm = LearnedMetric { net: FeedForwardNet::new(&[3, 8, 8, 2], net_seed).unwrap(), embed_metric };
        let [a, b, c] = [0, 1, 2].map(|i| Instance::new(pts[i].clone()));
        let d = |p: &Instance, q: &Instance| lm.instance_distance(p, q).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!(d(&a, &b) >= 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &b) <= d(&a, &c) + d(&c, &b) + 1e-12);
    }
}

#[test]
fn training_is_bit_reproducible() {
    let oracle = OracleMetric::euclidean(Scm::lin());
    let cfg = MetricTrainConfig {
        examples: 200,
        epochs: 3,
        width: 16,
        depth: 2,
        ..MetricTrainConfig::preset(Scale::Desk, Scenario::Triplet, 0.1, 4)
    };
    let data = MetricData::Triplets(cfm_core::learning::build_triplets(&oracle, 0.1, 200, 4).unwrap());
    let (a, log_a) = train_metric(&oracle, &cfg, &data).unwrap();
    let (b, log_b) = train_metric(&oracle, &cfg, &data).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(log_a, log_b);
    let pairs = build_pairs(&oracle, 0.1, 200, 4, PairMode::Distance).unwrap();
    let other = MetricTrainConfig { seed: 5, ..cfg };
    let (c, _) = train_metric(&oracle, &MetricTrainConfig { scenario: Scenario::Distance, ..other }, &MetricData::Pairs(pairs))
        .unwrap();
    assert_ne!(a.to_json(), c.to_json());
}
