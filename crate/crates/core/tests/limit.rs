use cmcrit::degrees::{critical_law, materialize_law, ProbabilityVector};
use cmcrit::limit::{
    limit_params, mark_excursions, percolation_limit_params, sample_limit_vector,
    sample_reflected, sample_refinement_pair, ExcursionSample, LimitParams, Scaling,
};
use cmcrit::percolation::{explode, p_critical};
use cmcrit::rng::substream;
use cmcrit::stats::{chi_square_gof, mean_and_se, quantile, variance_and_se};
use proptest::prelude::*;

/// `η = ½ Σ_i Σ_j p_i p_j k_i k_j (k_i − k_j)²`.
fn eta_by_pairs(support: &[(u32, f64)]) -> f64 {
    let mut s = 0.0;
    for &(a, pa) in support {
        for &(b, pb) in support {
            let (a, b) = (a as f64, b as f64);
            s += pa * pb * a * b * (a - b).powi(2);
        }
    }
    s / 2.0
}

fn two_point() -> ProbabilityVector {
    ProbabilityVector::new([(1, 0.5), (3, 0.5)]).unwrap()
}

fn critical_params(lambda: f64) -> LimitParams<f64> {
    let (law, _) = critical_law(&two_point(), 1.0).unwrap();
    limit_params(&law, lambda).unwrap()
}

#[test]
fn eta_matches_a_pairwise_oracle() {
    let support = [(1, 0.5), (2, 0.25), (4, 0.25)];
    let dist = ProbabilityVector::new(support).unwrap();
    let p: LimitParams<f64> = limit_params(&dist, 0.0).unwrap();
    assert!((p.eta - eta_by_pairs(&support)).abs() <= 1e-12 * p.eta);
    assert!((p.eta - 6.75).abs() < 1e-12);
    assert!((p.mu - 2.0).abs() < 1e-15);
    assert!((p.beta - 0.5).abs() < 1e-15);
    let c = critical_params(0.0);
    assert!((c.mu - 1.5).abs() < 1e-12 && (c.eta - 2.25).abs() < 1e-12);
}

#[test]
fn exploded_law_matches_explosion_histogram() {
    let dist = two_point();
    let n = 1_000_000;
    let ds = materialize_law(&dist, n, 1).unwrap();
    let nu = ds.stats::<f64>().nu_n;
    assert!((nu - 1.5).abs() < 1e-12);
    let pl = percolation_limit_params::<f64>(&dist, 1.5, 0.0).unwrap();
    let ex = explode(&ds, p_critical(nu, n, 0.0).unwrap(), 2).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for &d in &ex.degrees {
        *counts.entry(d).or_insert(0u64) += 1;
    }
    let total = ex.degrees.len() as f64;
    let emp = ProbabilityVector::new(counts.iter().map(|(&k, &c)| (k, c as f64 / total))).unwrap();
    let tv = emp.total_variation(&pl.exploded_law);
    assert!(tv < 1e-2, "tv = {tv}");
    assert!((total / n as f64 - pl.zeta).abs() < 5e-3);
}

#[test]
fn rectangle_marks_are_poisson() {
    let (h, len, dt, beta) = (2.0f64, 1.5f64, 0.01f64, 0.8f64);
    let steps = (len / dt) as usize;
    let mut w = vec![0.0];
    w.extend(std::iter::repeat_n(h, steps));
    w.push(0.0);
    let template = ExcursionSample::from_path(w, dt);
    assert_eq!(template.excursions.len(), 1);
    assert!((template.excursions[0].length - len).abs() < 1e-9);
    assert!((template.excursions[0].area - h * len).abs() < 1e-9);
    let mean = beta * h * len;
    let reps = 10_000u64;
    let max = 15usize;
    let mut observed = vec![0u64; max + 1];
    for r in 0..reps {
        let mut s = template.clone();
        let m = mark_excursions(&mut s, beta, r)[0] as usize;
        observed[m.min(max)] += 1;
    }
    let mut probs = Vec::with_capacity(max + 1);
    let mut pk = (-mean).exp();
    for k in 0..max {
        probs.push(pk);
        pk *= mean / (k + 1) as f64;
    }
    probs.push(1.0 - probs.iter().sum::<f64>());
    let t = chi_square_gof(&observed, &probs).unwrap();
    assert!(t.p_value > 1e-3, "{t:?}");
}

#[test]
fn endpoint_moments() {
    let p = critical_params(0.7);
    let horizon = 2.0;
    let ends: Vec<f64> = (0..10_000u64)
        .map(|r| *sample_reflected(&p, horizon, horizon / 512.0, r).unwrap().b.last().unwrap())
        .collect();
    let (m, se) = mean_and_se(&ends).unwrap();
    let (v, vse) = variance_and_se(&ends).unwrap();
    assert!((m - p.mean_at(horizon)).abs() < 3.0 * se, "mean {m} vs {}", p.mean_at(horizon));
    assert!((v - p.variance_at(horizon)).abs() < 3.0 * vse, "var {v} vs {}", p.variance_at(horizon));
}

#[test]
fn top_length_grows_with_lambda() {
    let (horizon, dt) = (16.0, 16.0 / 65536.0);
    let top = |lambda: f64, seed: u64| -> Vec<f64> {
        let p = critical_params(lambda);
        (0..2000u64)
            .map(|r| {
                sample_limit_vector(&p, horizon, dt, substream(seed, r), 1, Scaling::identity())
                    .unwrap()
                    .length(0)
            })
            .collect()
    };
    let (low, high) = (top(-1.0, 1), top(1.0, 2));
    let cdf = |xs: &[f64], x: f64| xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len() as f64;
    let worst = low
        .iter()
        .chain(&high)
        .map(|&x| cdf(&high, x) - cdf(&low, x))
        .fold(f64::NEG_INFINITY, f64::max);
    // one-sided KS critical value at 1e-3 for two samples of 2000
    assert!(worst < (0.5 * (1e-3f64).ln().abs() / 1000.0).sqrt(), "{worst}");
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(mean(&high) > mean(&low));
}

#[test]
fn halving_the_step_moves_top_lengths_little() {
    let p = critical_params(0.0);
    let (horizon, dt) = (16.0, 16.0 / 32768.0);
    let mut shifts = Vec::new();
    for r in 0..200u64 {
        let (coarse, fine) = sample_refinement_pair(&p, horizon, dt, r, 3).unwrap();
        shifts.extend((0..3).map(|k| (coarse.length(k) - fine.length(k)).abs()));
    }
    let median = quantile(&shifts, 0.5).unwrap();
    assert!(median < 2.0 * dt, "median shift {median}");
}

#[test]
fn late_excursions_carry_the_tail_square_mass() {
    let p = critical_params(0.5);
    let (from, to) = (8.0f64, 16.0f64);
    let dt = to / 65536.0;
    let sums: Vec<f64> = (0..400u64)
        .map(|r| {
            let s = sample_reflected(&p, to, dt, substream(12, r)).unwrap();
            s.excursions
                .iter()
                .filter(|e| e.l as f64 * dt >= from && !e.truncated)
                .map(|e| e.length * e.length)
                .sum()
        })
        .collect();
    let (m, se) = mean_and_se(&sums).unwrap();
    let expected = p.tail_square_length(from).unwrap() - p.tail_square_length(to).unwrap();
    // the truncated run at the horizon is dropped: at most one typical length
    assert!((m - expected).abs() < 3.0 * se + 0.02 * expected, "{m} ± {se} vs {expected}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reflection_and_lengths(
        lambda in -2.0f64..2.0,
        seed in any::<u64>(),
        beta in 0.1f64..2.0,
    ) {
        let p = critical_params(lambda);
        let (horizon, dt) = (4.0, 4.0 / 4096.0);
        let mut s = sample_reflected(&p, horizon, dt, seed).unwrap();
        let mut min = 0.0f64;
        for (b, w) in s.b.iter().zip(&s.w) {
            min = min.min(*b);
            prop_assert_eq!(*w, *b - min);
        }
        let total: f64 = s.excursions.iter().map(|e| e.length).sum();
        let zeros = s.w.iter().filter(|&&w| w == 0.0).count();
        prop_assert!(total <= horizon + 1e-9);
        prop_assert!((horizon - total - (zeros - 1) as f64 * dt).abs() < 1e-9);
        mark_excursions(&mut s, beta, seed);
        let ordered = s.ordered();
        for w in ordered.windows(2) {
            prop_assert!(w[0].length >= w[1].length);
            if w[0].length == w[1].length {
                prop_assert!(w[0].marks >= w[1].marks);
            }
        }
    }
}
