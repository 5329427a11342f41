//! Depth-first exploration walk of the configuration model.
//!
//! One vertex is discovered per stage. The active half-edges form a stack:
//! half-edges of a newly discovered vertex are smaller than every earlier
//! active half-edge, so the smallest active half-edge is always on top and
//! the traversal is depth first. Half-edges closing a cycle with the active
//! set, or forming self-loops, are discarded and tallied in `c`.
//!
//! [`explore`] reveals the matching on demand, [`replay`] walks a fixed
//! matching. Both feed an [`ExplorationSink`], so summary-only runs never
//! store the per-stage trace.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::degrees::DegreeSequence;
use crate::multigraph::{ComponentEntry, ComponentVector, HalfEdgeGraph, OPEN};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

const NONE: u32 = u32::MAX;

/// One stage of the walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub vertex: u32,
    pub degree: u32,
    /// Cycle half-edges discarded at this stage, halved.
    pub c: u32,
    /// True when the stage starts a new component.
    pub new_component: bool,
    /// Live active half-edges after the stage.
    pub active: u64,
}

pub trait ExplorationSink {
    fn stage(&mut self, stage: Stage);
}

/// Set of unpaired half-edges with O(1) uniform removal.
struct Pool {
    items: Vec<u32>,
    pos: Vec<u32>,
}

impl Pool {
    fn new(ell: usize, members: impl Iterator<Item = u32>) -> Self {
        let mut pool = Pool {
            items: Vec::with_capacity(ell),
            pos: vec![NONE; ell],
        };
        for h in members {
            pool.pos[h as usize] = pool.items.len() as u32;
            pool.items.push(h);
        }
        pool
    }

    fn remove(&mut self, h: u32) {
        let p = self.pos[h as usize];
        if p == NONE {
            return;
        }
        let last = *self.items.last().expect("non-empty pool");
        self.items.swap_remove(p as usize);
        if last != h {
            self.pos[last as usize] = p;
        }
        self.pos[h as usize] = NONE;
    }

    fn uniform<R: Rng>(&self, rng: &mut R) -> u32 {
        self.items[rng.random_range(0..self.items.len())]
    }

    fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

enum Matching<'g> {
    /// Mates drawn uniformly from the unpaired pool when first needed.
    OnDemand(Vec<u32>),
    Fixed(&'g [u32]),
}

struct Explorer<'a, R> {
    offsets: Vec<usize>,
    owner: &'a [u32],
    matching: Matching<'a>,
    pool: Pool,
    stack: Vec<u32>,
    live: Vec<bool>,
    live_count: u64,
    discovered: Vec<bool>,
    rng: R,
}

impl<'a, R: Rng> Explorer<'a, R> {
    fn mate(&mut self, h: u32) -> u32 {
        match &mut self.matching {
            Matching::Fixed(m) => m[h as usize],
            Matching::OnDemand(m) => {
                let known = m[h as usize];
                if known != OPEN {
                    return known;
                }
                self.pool.remove(h);
                let partner = self.pool.uniform(&mut self.rng);
                self.pool.remove(partner);
                m[h as usize] = partner;
                m[partner as usize] = h;
                partner
            }
        }
    }

    fn known_mate(&self, h: u32) -> u32 {
        match &self.matching {
            Matching::Fixed(m) => m[h as usize],
            Matching::OnDemand(m) => m[h as usize],
        }
    }

    fn activate(&mut self, h: u32) {
        self.stack.push(h);
        self.live[h as usize] = true;
        self.live_count += 1;
    }

    fn retire(&mut self, h: u32) {
        debug_assert!(self.live[h as usize]);
        self.live[h as usize] = false;
        self.live_count -= 1;
    }

    fn pop_live(&mut self) -> Option<u32> {
        while let Some(h) = self.stack.pop() {
            if self.live[h as usize] {
                self.retire(h);
                return Some(h);
            }
        }
        None
    }

    /// Discovers `w`, entered through `entry` (whose mate is already fixed
    /// and active) or, when `entry` is `None`, as the root of a component
    /// through half-edge `root`. Returns the cycle count `c`.
    fn discover(&mut self, w: u32, entry: Option<u32>, root: u32) -> u32 {
        self.discovered[w as usize] = true;
        let fixed = matches!(self.matching, Matching::Fixed(_));
        let (lo, hi) = (
            self.offsets[w as usize] as u32,
            self.offsets[w as usize + 1] as u32,
        );
        if fixed {
            for h in lo..hi {
                self.pool.remove(h);
            }
        }
        let mut cycle_half_edges = 0u32;
        // The root half-edge goes last so that it ends on top of the stack.
        let order = (lo..hi)
            .filter(|&h| Some(h) != entry && h != root)
            .chain(std::iter::once(root).filter(|_| entry.is_none()));
        for h in order.collect::<Vec<_>>() {
            let known = self.known_mate(h);
            let m = self.mate(h);
            if self.owner[m as usize] == w {
                // A self-loop is counted once, from the side that reveals it.
                let seen = if fixed { m < h } else { known != OPEN };
                if !seen {
                    cycle_half_edges += 2;
                }
            } else if self.live[m as usize] {
                self.retire(m);
                cycle_half_edges += 2;
            } else {
                self.activate(h);
            }
        }
        debug_assert!(cycle_half_edges % 2 == 0);
        cycle_half_edges / 2
    }

    fn run<S: ExplorationSink>(mut self, sink: &mut S) {
        let n = self.offsets.len() - 1;
        let mut isolated = 0u32;
        for _ in 0..n {
            if let Some(a) = self.pop_live() {
                let b = self.mate(a);
                let w = self.owner[b as usize];
                debug_assert!(!self.discovered[w as usize]);
                let c = self.discover(w, Some(b), NONE);
                sink.stage(Stage {
                    vertex: w,
                    degree: self.degree(w),
                    c,
                    new_component: false,
                    active: self.live_count,
                });
            } else if !self.pool.is_empty() {
                let a = self.pool.uniform(&mut self.rng);
                let v = self.owner[a as usize];
                let c = self.discover(v, None, a);
                sink.stage(Stage {
                    vertex: v,
                    degree: self.degree(v),
                    c,
                    new_component: true,
                    active: self.live_count,
                });
            } else {
                while self.discovered[isolated as usize] || self.degree(isolated) > 0 {
                    isolated += 1;
                }
                self.discovered[isolated as usize] = true;
                sink.stage(Stage {
                    vertex: isolated,
                    degree: 0,
                    c: 0,
                    new_component: true,
                    active: 0,
                });
            }
        }
    }

    fn degree(&self, v: u32) -> u32 {
        (self.offsets[v as usize + 1] - self.offsets[v as usize]) as u32
    }
}

fn offsets_and_owner(degrees: &[u32]) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = Vec::with_capacity(degrees.len() + 1);
    let mut owner = Vec::new();
    offsets.push(0);
    for (v, &d) in degrees.iter().enumerate() {
        owner.extend(std::iter::repeat_n(v as u32, d as usize));
        offsets.push(owner.len());
    }
    (offsets, owner)
}

/// Runs the walk on a uniform matching revealed on demand.
pub fn explore_into<S: ExplorationSink>(ds: &DegreeSequence, seed: u64, sink: &mut S) {
    let (offsets, owner) = offsets_and_owner(ds.degrees());
    let ell = owner.len();
    let explorer = Explorer {
        offsets,
        owner: &owner,
        matching: Matching::OnDemand(vec![OPEN; ell]),
        pool: Pool::new(ell, 0..ell as u32),
        stack: Vec::new(),
        live: vec![false; ell],
        live_count: 0,
        discovered: vec![false; ds.n()],
        rng: rng_from_seed(seed),
    };
    explorer.run(sink);
}

/// Runs the walk on the fixed matching of `g`.
pub fn replay_into<S: ExplorationSink>(g: &HalfEdgeGraph, seed: u64, sink: &mut S) -> Result<()> {
    let open = g.open_count();
    if open > 0 {
        return Err(Error::PartialMatching(open));
    }
    let (offsets, _) = offsets_and_owner(&g.degrees());
    let ell = g.ell();
    let explorer = Explorer {
        offsets,
        owner: g.owners(),
        matching: Matching::Fixed(g.mates()),
        pool: Pool::new(ell, 0..ell as u32),
        stack: Vec::new(),
        live: vec![false; ell],
        live_count: 0,
        discovered: vec![false; g.n()],
        rng: rng_from_seed(seed),
    };
    explorer.run(&mut SinkRef(sink));
    Ok(())
}

struct SinkRef<'s, S>(&'s mut S);

impl<S: ExplorationSink> ExplorationSink for SinkRef<'_, S> {
    fn stage(&mut self, stage: Stage) {
        self.0.stage(stage);
    }
}

/// Per-stage record of the walk (stages are 1-based in all accessors that
/// take a stage number; vectors are 0-based).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExplorationTrace {
    pub vertex: Vec<u32>,
    pub degree: Vec<u32>,
    pub c: Vec<u32>,
    pub new_component: Vec<bool>,
    /// Walk `S(j) = Σ_{i≤j} (d_(i) − 2 − 2c_(i))`.
    pub walk: Vec<i64>,
    /// Walk `s(j) = Σ_{i≤j} (d_(i) − 2)`.
    pub simple_walk: Vec<i64>,
    pub active: Vec<u64>,
}

impl ExplorationSink for ExplorationTrace {
    fn stage(&mut self, st: Stage) {
        let prev = self.walk.last().copied().unwrap_or(0);
        let prev_simple = self.simple_walk.last().copied().unwrap_or(0);
        let step = st.degree as i64 - 2;
        self.vertex.push(st.vertex);
        self.degree.push(st.degree);
        self.c.push(st.c);
        self.new_component.push(st.new_component);
        self.walk.push(prev + step - 2 * st.c as i64);
        self.simple_walk.push(prev_simple + step);
        self.active.push(st.active);
    }
}

impl ExplorationTrace {
    pub fn len(&self) -> usize {
        self.walk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walk.is_empty()
    }

    pub fn component_count(&self) -> usize {
        self.new_component.iter().filter(|&&b| b).count()
    }

    /// `rank,...` CSV with columns `stage,vertex,degree,c,S,s,A`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "stage,vertex,degree,c,S,s,A")?;
        for j in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                j + 1,
                self.vertex[j],
                self.degree[j],
                self.c[j],
                self.walk[j],
                self.simple_walk[j],
                self.active[j]
            )?;
        }
        Ok(())
    }
}

pub fn explore(ds: &DegreeSequence, seed: u64) -> ExplorationTrace {
    let mut trace = ExplorationTrace::default();
    explore_into(ds, seed, &mut trace);
    trace
}

pub fn replay(g: &HalfEdgeGraph, seed: u64) -> Result<ExplorationTrace> {
    let mut trace = ExplorationTrace::default();
    replay_into(g, seed, &mut trace)?;
    Ok(trace)
}

/// `τ_0 = 0` and `τ_k = inf{i : S(i) = −2k}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HittingTimes {
    pub tau: Vec<usize>,
}

impl HittingTimes {
    pub fn sizes(&self) -> Vec<u64> {
        self.tau.windows(2).map(|w| (w[1] - w[0]) as u64).collect()
    }

    pub fn components(&self) -> usize {
        self.tau.len() - 1
    }
}

/// Hitting times of successive levels `−2k` by a walk with `S(0) = 0`.
pub fn hitting_times_of(walk: &[i64]) -> Result<HittingTimes> {
    let mut tau = vec![0];
    let mut k = 1i64;
    for (i, &s) in walk.iter().enumerate() {
        if s == -2 * k {
            tau.push(i + 1);
            k += 1;
        } else if s < -2 * k {
            return Err(Error::CorruptTrace(k as usize));
        }
    }
    if let Some(&last) = walk.last() {
        if last > -2 * (k - 1) {
            return Err(Error::CorruptTrace(k as usize));
        }
    }
    Ok(HittingTimes { tau })
}

pub fn hitting_times(trace: &ExplorationTrace) -> Result<HittingTimes> {
    hitting_times_of(&trace.walk)
}

/// Surplus of the k-th explored component: `Σ c_(j)` over `(τ_{k−1}, τ_k]`.
pub fn surplus_per_component(trace: &ExplorationTrace, hitting: &HittingTimes) -> Vec<u64> {
    hitting
        .tau
        .windows(2)
        .map(|w| trace.c[w[0]..w[1]].iter().map(|&c| c as u64).sum())
        .collect()
}

/// `N_k(t) = #{j ≤ t : d_(j) = k}` for `t = 0..=n`.
pub fn degree_discovery_counts(trace: &ExplorationTrace, k: u32) -> Vec<u64> {
    let mut out = Vec::with_capacity(trace.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &d in &trace.degree {
        acc += u64::from(d == k);
        out.push(acc);
    }
    out
}

/// Component in exploration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ExploredComponent {
    pub size: u64,
    pub surplus: u64,
    pub degree_sum: u64,
    pub min_vertex: u32,
}

/// Sink keeping only per-component tallies.
#[derive(Clone, Debug, Default)]
pub struct ComponentTally {
    pub components: Vec<ExploredComponent>,
}

impl ExplorationSink for ComponentTally {
    fn stage(&mut self, st: Stage) {
        if st.new_component || self.components.is_empty() {
            self.components.push(ExploredComponent {
                size: 0,
                surplus: 0,
                degree_sum: 0,
                min_vertex: st.vertex,
            });
        }
        let c = self.components.last_mut().expect("component started");
        c.size += 1;
        c.surplus += st.c as u64;
        c.degree_sum += st.degree as u64;
        c.min_vertex = c.min_vertex.min(st.vertex);
    }
}

/// Components of a fresh configuration model without storing the trace.
pub fn explore_components(ds: &DegreeSequence, seed: u64) -> Vec<ExploredComponent> {
    let mut tally = ComponentTally::default();
    explore_into(ds, seed, &mut tally);
    tally.components
}

pub fn explored_vector(comps: &[ExploredComponent], n: usize) -> ComponentVector {
    let scale = (n as f64).powf(-2.0 / 3.0);
    let mut entries: Vec<ComponentEntry> = comps
        .iter()
        .map(|c| ComponentEntry {
            rescaled_size: c.size as f64 * scale,
            size: c.size,
            surplus: c.surplus,
            edges: c.size - 1 + c.surplus,
            open_halfedges: 0,
            min_vertex: c.min_vertex,
        })
        .collect();
    crate::multigraph::order_entries(&mut entries);
    ComponentVector { n, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multigraph::{components, uniform_match};
    use proptest::prelude::*;

    fn seq(d: &[u32]) -> DegreeSequence {
        DegreeSequence::new(d.to_vec()).unwrap()
    }

    #[test]
    fn two_leaves() {
        let t = explore(&seq(&[1, 1]), 1);
        assert_eq!(t.walk, vec![-1, -2]);
        assert_eq!(t.c, vec![0, 0]);
        let h = hitting_times(&t).unwrap();
        assert_eq!(h.tau, vec![0, 2]);
        assert_eq!(h.sizes(), vec![2]);
    }

    #[test]
    fn forced_self_loop() {
        let t = explore(&seq(&[2]), 1);
        assert_eq!(t.walk, vec![-2]);
        assert_eq!(t.c, vec![1]);
        assert_eq!(hitting_times(&t).unwrap().sizes(), vec![1]);
    }

    #[test]
    fn hitting_time_examples() {
        assert_eq!(
            hitting_times_of(&[-1, -2, -3, -4]).unwrap().tau,
            vec![0, 2, 4]
        );
        assert_eq!(hitting_times_of(&[1, 0, -2]).unwrap().tau, vec![0, 3]);
        assert!(matches!(
            hitting_times_of(&[1, -3]),
            Err(Error::CorruptTrace(1))
        ));
    }

    #[test]
    fn triangle_replay() {
        // v0 {0,1}, v1 {2,3}, v2 {4,5}: 1-2, 3-4, 5-0
        let g = HalfEdgeGraph::from_pairs(&[2, 2, 2], &[(1, 2), (3, 4), (5, 0)]).unwrap();
        let t = replay(&g, 5).unwrap();
        // root: d=2, no cycle (S=0); second: d=2, c=0 (S=0); third closes the cycle.
        assert_eq!(t.walk, vec![0, 0, -2]);
        assert_eq!(t.c, vec![0, 0, 1]);
        assert_eq!(t.active, vec![2, 2, 0]);
        let h = hitting_times(&t).unwrap();
        assert_eq!(surplus_per_component(&t, &h), vec![1]);
    }

    #[test]
    fn isolated_vertices_last() {
        let t = explore(&seq(&[0, 1, 0, 1]), 3);
        assert_eq!(&t.vertex[2..], &[0, 2]);
        assert_eq!(t.walk, vec![-1, -2, -4, -6]);
        assert_eq!(hitting_times(&t).unwrap().sizes(), vec![2, 1, 1]);
    }

    #[test]
    fn discovery_counts() {
        let t = explore(&seq(&[2, 2, 2, 2]), 9);
        assert_eq!(degree_discovery_counts(&t, 2), vec![0, 1, 2, 3, 4]);
        assert_eq!(degree_discovery_counts(&t, 3), vec![0; 5]);
    }

    #[test]
    fn replay_rejects_partial() {
        let g = HalfEdgeGraph::unmatched(&[1, 1]);
        assert!(matches!(replay(&g, 0), Err(Error::PartialMatching(2))));
    }

    #[test]
    fn replay_is_deterministic() {
        let ds = seq(&[3, 1, 2, 2, 1, 3, 4, 1, 1, 2]);
        let g = uniform_match(&ds, 4).unwrap();
        assert_eq!(replay(&g, 11).unwrap(), replay(&g, 11).unwrap());
        assert_eq!(explore(&ds, 11), explore(&ds, 11));
    }

    #[test]
    fn csv_header_and_rows() {
        let mut buf = Vec::new();
        explore(&seq(&[1, 1]), 0).write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("stage,vertex,degree,c,S,s,A\n1,"));
        assert_eq!(s.lines().count(), 3);
    }

    fn check_identities(t: &ExplorationTrace) {
        let mut csum = 0i64;
        let mut started = 0i64;
        for j in 0..t.len() {
            csum += t.c[j] as i64;
            started += t.new_component[j] as i64;
            assert_eq!(t.walk[j], t.simple_walk[j] - 2 * csum);
            assert_eq!(t.active[j] as i64, t.walk[j] + 2 * started);
        }
        assert_eq!(*t.walk.last().unwrap(), -2 * t.component_count() as i64);
    }

    proptest! {
        #[test]
        fn replay_matches_components(
            d in proptest::collection::vec(0u32..5, 1..30),
            seed in any::<u64>(),
        ) {
            let mut d = d;
            if d.iter().sum::<u32>() % 2 == 1 { d[0] += 1; }
            prop_assume!(d.iter().any(|&x| x > 0));
            let ds = seq(&d);
            let g = uniform_match(&ds, seed).unwrap();
            let t = replay(&g, seed ^ 1).unwrap();
            check_identities(&t);
            let h = hitting_times(&t).unwrap();
            let mut got: Vec<(u64, u64)> = h.sizes().into_iter().zip(surplus_per_component(&t, &h)).collect();
            let mut want: Vec<(u64, u64)> = components(&g).iter().map(|c| (c.vertex_count, c.surplus)).collect();
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn explore_identities(
            d in proptest::collection::vec(0u32..6, 1..60),
            seed in any::<u64>(),
        ) {
            let mut d = d;
            if d.iter().sum::<u32>() % 2 == 1 { d[0] += 1; }
            prop_assume!(d.iter().any(|&x| x > 0));
            let ds = seq(&d);
            let t = explore(&ds, seed);
            check_identities(&t);
            let mut seen = t.vertex.clone();
            seen.sort();
            prop_assert_eq!(seen, (0..d.len() as u32).collect::<Vec<_>>());
            let tally = explore_components(&ds, seed);
            let h = hitting_times(&t).unwrap();
            prop_assert_eq!(tally.iter().map(|c| c.size).collect::<Vec<_>>(), h.sizes());
            prop_assert_eq!(tally.iter().map(|c| c.surplus).collect::<Vec<_>>(), surplus_per_component(&t, &h));
        }
    }
}
