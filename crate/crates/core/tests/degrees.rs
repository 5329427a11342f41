use cmcrit::degrees::{
    materialize_law, sample_iid, tune_to_critical, DegreeSequence, ProbabilityVector,
};
use cmcrit::ExactRatio;
use proptest::prelude::*;

fn degrees_strategy() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..8, 1..100).prop_map(|mut d| {
        if d.iter().sum::<u32>() % 2 == 1 {
            d[0] += 1;
        }
        if d.iter().all(|&x| x == 0) {
            d[0] = 2;
        }
        d
    })
}

proptest! {
    #[test]
    fn duplication_leaves_statistics_unchanged(degrees in degrees_strategy()) {
        let one = DegreeSequence::new(degrees.clone()).unwrap();
        let two = DegreeSequence::new([degrees.clone(), degrees].concat()).unwrap();
        let (a, b) = (one.stats::<f64>(), two.stats::<f64>());
        prop_assert!((a.mu_n - b.mu_n).abs() <= 1e-12 * a.mu_n);
        prop_assert!((a.sigma2_n - b.sigma2_n).abs() <= 1e-12 * a.sigma2_n);
        prop_assert!((a.sigma3_n - b.sigma3_n).abs() <= 1e-12 * a.sigma3_n);
        prop_assert_eq!(a.nu_exact(), b.nu_exact());
    }

    #[test]
    fn exact_nu_is_the_ratio_of_sums(degrees in degrees_strategy()) {
        let ds = DegreeSequence::new(degrees.clone()).unwrap();
        let s1: u128 = degrees.iter().map(|&d| d as u128).sum();
        let s2: u128 = degrees.iter().map(|&d| d as u128 * (d as u128).saturating_sub(1)).sum();
        prop_assert_eq!(ds.stats::<f64>().nu_exact(), ExactRatio::new(s2, s1));
    }

    #[test]
    fn iid_draws_reproduce(seed in any::<u64>()) {
        let dist = ProbabilityVector::new([(1, 0.3), (2, 0.3), (5, 0.4)]).unwrap();
        prop_assert_eq!(sample_iid(&dist, 501, seed).unwrap(), sample_iid(&dist, 501, seed).unwrap());
    }
}

#[test]
fn tuned_two_point_law_at_a_million() {
    let dist = ProbabilityVector::new([(1, 0.5), (3, 0.5)]).unwrap();
    let ds = tune_to_critical(&dist, 1_000_000, 0.0, 7).unwrap();
    let nu = ds.stats::<f64>().nu_n;
    assert!((nu - 1.0).abs() <= 1e-3, "nu = {nu}");
    let counts = ds.counts();
    let ones = counts[&1] as f64 / 1e6;
    // 6(1 − p) = 3 − 2p gives p = 3/4.
    assert!((ones - 0.75).abs() < 1e-3, "{ones}");
}

#[test]
fn tuned_histogram_is_close_in_total_variation() {
    let dist = ProbabilityVector::new([(1, 0.4), (2, 0.3), (4, 0.3)]).unwrap();
    for lambda in [-1.0, 0.0, 2.0] {
        let ds = tune_to_critical(&dist, 100_000, lambda, 3).unwrap();
        let nu = ds.stats::<f64>().nu_n;
        let target = 1.0 + lambda * 100_000f64.powf(-1.0 / 3.0);
        assert!((nu - target).abs() < 100_000f64.powf(-1.0 / 3.0) / 10.0);
        let emp = ProbabilityVector::empirical(&ds);
        let (law, _) = cmcrit::degrees::critical_law(&dist, target).unwrap();
        assert!(emp.total_variation(&law) < 1e-2);
    }
}

#[test]
fn materialized_counts_follow_the_law() {
    let dist = ProbabilityVector::new([(1, 0.5), (3, 0.5)]).unwrap();
    let ds = materialize_law(&dist, 10_001, 1).unwrap();
    assert_eq!(ds.n(), 10_001);
    assert_eq!(ds.total_degree() % 2, 0);
    assert!(ProbabilityVector::empirical(&ds).total_variation(&dist) < 1e-3);
}
