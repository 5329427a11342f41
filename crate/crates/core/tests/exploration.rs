mod common;

use cmcrit::degrees::DegreeSequence;
use cmcrit::exploration::{
    explore, explore_components, hitting_times, replay, surplus_per_component,
};
use cmcrit::multigraph::{components, uniform_match_degrees, HalfEdgeGraph};
use cmcrit::rng::substream;
use proptest::prelude::*;

fn degrees_strategy() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..5, 1..60).prop_map(|mut d| {
        if d.iter().sum::<u32>() % 2 == 1 {
            d[0] += 1;
        }
        if d.iter().all(|&x| x == 0) {
            d[0] = 2;
        }
        d
    })
}

#[test]
fn two_cycles_versus_two_loops() {
    let ds = DegreeSequence::new(vec![2, 2]).unwrap();
    let reps = 60_000u64;
    let joined = (0..reps)
        .filter(|&r| explore_components(&ds, substream(1, r)).len() == 1)
        .count() as f64;
    let sigma = (reps as f64 * 2.0 / 9.0).sqrt();
    assert!((joined - reps as f64 * 2.0 / 3.0).abs() < 4.0 * sigma, "{joined}");
    let law = common::matching_law(&[2, 2]);
    assert!((law[&vec![(2, 1)]] - 2.0 / 3.0).abs() < 1e-12);
    assert!((law[&vec![(1, 1), (1, 1)]] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn hand_trace_of_a_triangle() {
    // 0-1, 1-2, 2-0 on half-edges (0,1), (2,3), (4,5).
    let g = HalfEdgeGraph::from_pairs(&[2, 2, 2], &[(1, 2), (3, 4), (5, 0)]).unwrap();
    for seed in 0..20 {
        let t = replay(&g, seed).unwrap();
        assert_eq!(t.degree, vec![2, 2, 2]);
        assert_eq!(t.c.iter().sum::<u32>(), 1);
        // s = (0, 0, 0); S ends at −2 after the single cycle pair.
        assert_eq!(t.simple_walk, vec![0, 0, 0]);
        assert_eq!(*t.walk.last().unwrap(), -2);
        let h = hitting_times(&t).unwrap();
        assert_eq!(h.sizes(), vec![3]);
        assert_eq!(surplus_per_component(&t, &h), vec![1]);
    }
}

#[test]
fn first_vertex_is_size_biased() {
    let degrees = vec![1, 2, 3, 4];
    let ds = DegreeSequence::new(degrees.clone()).unwrap();
    let reps = 100_000u64;
    let mut first = [0u64; 4];
    for r in 0..reps {
        let t = explore(&ds, substream(2, r));
        first[t.vertex[0] as usize] += 1;
    }
    for (v, &d) in degrees.iter().enumerate() {
        let q = d as f64 / 10.0;
        let sigma = (reps as f64 * q * (1.0 - q)).sqrt();
        assert!(
            (first[v] as f64 - reps as f64 * q).abs() < 3.0 * sigma + 1.0,
            "vertex {v}: {first:?}"
        );
    }
}

#[test]
fn explored_law_matches_enumeration() {
    for degrees in [vec![2, 2, 2], vec![3, 1, 1, 1], vec![4, 2], vec![1, 1, 2, 2, 2]] {
        let ds = DegreeSequence::new(degrees.clone()).unwrap();
        let law = common::matching_law(&degrees);
        let counts = common::tally(
            (0..40_000u64).map(|r| common::shape_of_explored(&explore_components(&ds, substream(4, r)))),
        );
        let p = common::chi_square_p(&counts, &law);
        assert!(p > 1e-3, "{degrees:?}: p = {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn walk_identities(degrees in degrees_strategy(), seed in any::<u64>()) {
        let ds = DegreeSequence::new(degrees.clone()).unwrap();
        let t = explore(&ds, seed);
        prop_assert_eq!(t.len(), degrees.len());
        let mut c_acc = 0i64;
        let mut started = 0i64;
        for j in 0..t.len() {
            c_acc += t.c[j] as i64;
            if t.new_component[j] {
                started += 1;
            }
            prop_assert_eq!(t.walk[j], t.simple_walk[j] - 2 * c_acc);
            prop_assert_eq!(t.active[j] as i64, t.walk[j] + 2 * started);
        }
        let h = hitting_times(&t).unwrap();
        prop_assert_eq!(*t.walk.last().unwrap(), -2 * h.components() as i64);
        prop_assert_eq!(h.components(), t.component_count());
        let sizes = h.sizes();
        let surplus = surplus_per_component(&t, &h);
        let mut shape: Vec<(u64, u64)> = sizes.into_iter().zip(surplus).collect();
        shape.sort_unstable();
        let mut tallied: Vec<(u64, u64)> = explore_components(&ds, seed)
            .iter()
            .map(|c| (c.size, c.surplus))
            .collect();
        tallied.sort_unstable();
        prop_assert_eq!(shape, tallied);
    }

    #[test]
    fn replay_agrees_with_components(degrees in degrees_strategy(), seed in any::<u64>()) {
        let g = uniform_match_degrees(&degrees, seed).unwrap();
        let t = replay(&g, seed ^ 1).unwrap();
        let h = hitting_times(&t).unwrap();
        let mut shape: Vec<(u64, u64)> = h.sizes().into_iter().zip(surplus_per_component(&t, &h)).collect();
        shape.sort_unstable();
        prop_assert_eq!(shape, common::shape_of_summaries(&components(&g)));
    }
}
