//! Exponential-clock construction of the configuration model and the
//! kept-alive variant whose open half-edge masses merge as an exact
//! multiplicative coalescent.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::degrees::DegreeSequence;
use crate::multigraph::{
    summarize_labels, to_component_vector, ComponentSummary, ComponentVector, HalfEdgeGraph, OPEN,
};
use crate::rng::rng_from_seed;
use crate::unionfind::UnionFind;
use crate::{Error, Result};

/// `t_n(λ) = ½ ln(ν/(ν−1)) + λ / (2(ν−1) n^{1/3})`.
pub fn t_map(nu_n: f64, n: usize, lambda: f64) -> Result<f64> {
    if nu_n <= 1.0 || nu_n.is_nan() {
        return Err(Error::NotSupercritical(nu_n));
    }
    Ok(0.5 * (nu_n / (nu_n - 1.0)).ln() + lambda / (2.0 * (nu_n - 1.0) * (n as f64).cbrt()))
}

/// Inverse of [`t_map`] in `λ`.
pub fn lambda_of_time(nu_n: f64, n: usize, t: f64) -> Result<f64> {
    let t0 = t_map(nu_n, n, 0.0)?;
    Ok((t - t0) * 2.0 * (nu_n - 1.0) * (n as f64).cbrt())
}

/// Open half-edges with O(1) removal of arbitrary members.
#[derive(Clone, Debug)]
struct OpenPool {
    items: Vec<u32>,
    pos: Vec<u32>,
}

impl OpenPool {
    fn of_graph(g: &HalfEdgeGraph) -> Self {
        let mut pos = vec![OPEN; g.ell()];
        let mut items = Vec::new();
        for h in 0..g.ell() as u32 {
            if g.mate(h) == OPEN {
                pos[h as usize] = items.len() as u32;
                items.push(h);
            }
        }
        Self { items, pos }
    }

    fn remove(&mut self, h: u32) {
        let p = self.pos[h as usize];
        debug_assert!(p != OPEN);
        let last = *self.items.last().expect("non-empty pool");
        self.items.swap_remove(p as usize);
        if last != h {
            self.pos[last as usize] = p;
        }
        self.pos[h as usize] = OPEN;
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairEvent {
    pub time: f64,
    pub a: u32,
    pub b: u32,
}

/// Partition and open half-edge tallies at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicSnapshot {
    pub time: f64,
    pub open: u64,
    pub labels: Vec<u32>,
    pub components: Vec<ComponentSummary>,
}

impl DynamicSnapshot {
    pub fn component_vector(&self) -> ComponentVector {
        to_component_vector(&self.components, self.labels.len())
    }
}

/// State of the dynamic construction.
#[derive(Clone, Debug)]
pub struct DynamicState {
    pub time: f64,
    pub graph: HalfEdgeGraph,
    pub events: Vec<PairEvent>,
    pub snapshots: Vec<DynamicSnapshot>,
    pool: OpenPool,
    uf: UnionFind,
    initial_open: u64,
}

impl DynamicState {
    /// Starts from an arbitrary partial matching at time `time`.
    pub fn from_graph(graph: HalfEdgeGraph, time: f64) -> Self {
        let pool = OpenPool::of_graph(&graph);
        let uf = graph.union_find();
        let initial_open = pool.len() as u64;
        Self {
            time,
            graph,
            events: Vec::new(),
            snapshots: Vec::new(),
            pool,
            uf,
            initial_open,
        }
    }

    pub fn new(ds: &DegreeSequence) -> Self {
        Self::from_graph(HalfEdgeGraph::unmatched(ds.degrees()), 0.0)
    }

    /// Current number of open half-edges `s_1`.
    pub fn open(&self) -> u64 {
        self.pool.len() as u64
    }

    pub fn labels(&mut self) -> Vec<u32> {
        self.uf.labels()
    }

    pub fn snapshot(&mut self) -> DynamicSnapshot {
        let labels = self.uf.labels();
        let components = summarize_labels(&self.graph, &labels, |_| true);
        DynamicSnapshot {
            time: self.time,
            open: self.open(),
            labels,
            components,
        }
    }

    fn pair(&mut self, a: u32, b: u32) {
        self.pool.remove(a);
        self.pool.remove(b);
        self.graph.pair(a, b);
        self.uf.union(self.graph.owner(a), self.graph.owner(b));
    }

    /// Advances to `t_end`, taking snapshots at the given (sorted) times.
    pub fn advance<R: Rng>(
        &mut self,
        t_end: f64,
        snapshot_times: &[f64],
        rng: &mut R,
    ) -> Result<()> {
        if t_end < self.time {
            return Err(Error::TimeReversal {
                start: self.time,
                end: t_end,
            });
        }
        if snapshot_times.windows(2).any(|w| w[0] > w[1])
            || snapshot_times.iter().any(|&s| s < self.time || s > t_end)
        {
            return Err(Error::InvalidConfig(
                "snapshot times must be sorted and inside the run".into(),
            ));
        }
        let mut next_snap = 0;
        loop {
            let s1 = self.pool.len();
            let wait = if s1 >= 2 {
                let e: f64 = Exp1.sample(rng);
                e / s1 as f64
            } else {
                f64::INFINITY
            };
            let t_next = self.time + wait;
            while next_snap < snapshot_times.len()
                && (snapshot_times[next_snap] < t_next || t_next > t_end)
            {
                let saved = self.time;
                self.time = snapshot_times[next_snap];
                let snap = self.snapshot();
                self.snapshots.push(snap);
                self.time = saved;
                next_snap += 1;
            }
            if t_next > t_end {
                self.time = t_end;
                break;
            }
            self.time = t_next;
            let i = rng.random_range(0..s1);
            let a = self.pool.items[i];
            let mut j = rng.random_range(0..s1 - 1);
            if j >= i {
                j += 1;
            }
            let b = self.pool.items[j];
            self.pair(a, b);
            self.events.push(PairEvent { time: t_next, a, b });
        }
        Ok(())
    }

    /// `sup_{t ≤ t_max} |s_1(t)/ℓ − e^{−2t}|` over the recorded events,
    /// with `ℓ` the open count at the start.
    pub fn open_fraction_deviation(&self, start: f64, t_max: f64) -> f64 {
        let ell = self.initial_open as f64;
        let target = |t: f64| (-2.0 * (t - start)).exp();
        let mut sup = 0.0f64;
        let mut left = start;
        let mut value = 1.0;
        for (k, ev) in self.events.iter().enumerate() {
            let right = ev.time.min(t_max);
            sup = sup
                .max((value - target(left)).abs())
                .max((value - target(right)).abs());
            if ev.time > t_max {
                return sup;
            }
            left = ev.time;
            value = (self.initial_open - 2 * (k as u64 + 1)) as f64 / ell;
        }
        let right = t_max.min(self.time.max(left));
        sup.max((value - target(left)).abs())
            .max((value - target(right)).abs())
    }
}

/// Runs the dynamic construction from the empty matching up to `t_end`.
pub fn run_dynamic(
    ds: &DegreeSequence,
    t_end: f64,
    seed: u64,
    snapshot_times: &[f64],
) -> Result<DynamicState> {
    let mut state = DynamicState::new(ds);
    let mut rng = rng_from_seed(seed);
    state.advance(t_end, snapshot_times, &mut rng)?;
    Ok(state)
}

/// Window parameters for the kept-alive process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModifiedParams {
    pub nu_n: f64,
    pub n: usize,
    pub lambda_start: f64,
    pub lambda_end: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModifiedEvent {
    pub lambda: f64,
    pub a: u32,
    pub b: u32,
    /// Also an edge of the standard process.
    pub accepted: bool,
    /// Mass of the merged block, or 0 when both ends were already joined.
    pub merged_mass: u64,
}

/// Rescaled masses at one window location.
#[derive(Clone, Debug, PartialEq)]
pub struct MassSnapshot {
    pub lambda: f64,
    /// `β_n^{-1} Ō_i`, non-increasing.
    pub masses: Vec<f64>,
    pub bad_edges: u64,
    /// Standard process at the same location.
    pub standard: DynamicSnapshot,
}

/// Kept-alive process coupled with the standard one.
#[derive(Clone, Debug)]
pub struct ModifiedRun {
    pub params: ModifiedParams,
    pub lambda: f64,
    /// Open half-edges of the starting graph, selectable forever.
    pub frozen: Vec<u32>,
    pub beta_n: f64,
    pub events: Vec<ModifiedEvent>,
    pub bad_edges: u64,
    /// Standard process driven by the accepted events.
    pub standard: DynamicState,
    pub snapshots: Vec<MassSnapshot>,
    bar_uf: UnionFind,
    mass: Vec<u64>,
    containment_violations: u64,
    additivity_violations: u64,
}

impl ModifiedRun {
    /// Total frozen pool size `s̄_1`.
    pub fn pool_size(&self) -> usize {
        self.frozen.len()
    }

    /// Masses `Ō_i` of the current blocks, non-increasing.
    pub fn masses(&mut self) -> Vec<u64> {
        let n = self.bar_uf.len();
        let mut out: Vec<u64> = (0..n as u32)
            .filter(|&v| self.bar_uf.find(v) == v)
            .map(|v| self.mass[v as usize])
            .collect();
        out.sort_unstable_by(|a, b| b.cmp(a));
        out
    }

    pub fn rescaled_masses(&mut self) -> Vec<f64> {
        let beta = self.beta_n;
        self.masses().into_iter().map(|m| m as f64 / beta).collect()
    }

    pub fn bar_labels(&mut self) -> Vec<u32> {
        self.bar_uf.labels()
    }

    /// Every accepted event joined vertices already in one kept-alive
    /// block, and no merge broke mass additivity.
    pub fn invariants_hold(&self) -> bool {
        self.containment_violations == 0 && self.additivity_violations == 0
    }
}

/// Runs the kept-alive process from `base` over `[λ_start, λ_end]`.
///
/// Events arrive at rate `s̄_1/(2(ν_n−1)n^{1/3})` per unit `λ`; each picks a
/// uniform pair of distinct half-edges from the frozen pool. Events whose
/// half-edges are both still open in the standard process are also applied
/// there; the rest are bad edges. With `β_n² = (s̄_1−1)(ν_n−1)n^{1/3}`, the
/// rescaled masses `β_n^{-1}Ō_i` form a standard multiplicative coalescent.
pub fn run_modified(
    base: &DynamicState,
    params: ModifiedParams,
    snapshot_lambdas: &[f64],
    seed: u64,
) -> Result<ModifiedRun> {
    if params.lambda_end < params.lambda_start {
        return Err(Error::TimeReversal {
            start: params.lambda_start,
            end: params.lambda_end,
        });
    }
    if params.nu_n <= 1.0 {
        return Err(Error::NotSupercritical(params.nu_n));
    }
    if snapshot_lambdas.windows(2).any(|w| w[0] > w[1])
        || snapshot_lambdas
            .iter()
            .any(|&l| l < params.lambda_start || l > params.lambda_end)
    {
        return Err(Error::InvalidConfig(
            "snapshot locations must be sorted and inside the run".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let frozen = base.pool.items.clone();
    let s_bar = frozen.len();
    let scale = (params.nu_n - 1.0) * (params.n as f64).cbrt();
    let beta_n = ((s_bar.saturating_sub(1)) as f64 * scale).sqrt();
    let rate = s_bar as f64 / (2.0 * scale);

    let mut standard = base.clone();
    standard.events.clear();
    standard.snapshots.clear();
    let mut bar_uf = base.uf.clone();
    let mut mass = vec![0u64; base.graph.n()];
    for &h in &frozen {
        let r = bar_uf.find(base.graph.owner(h));
        mass[r as usize] += 1;
    }

    let mut run = ModifiedRun {
        params,
        lambda: params.lambda_start,
        frozen,
        beta_n,
        events: Vec::new(),
        bad_edges: 0,
        standard,
        snapshots: Vec::new(),
        bar_uf,
        mass,
        containment_violations: 0,
        additivity_violations: 0,
    };
    let t_of = |l: f64| base.time + (l - params.lambda_start) / (2.0 * scale);
    let mut next_snap = 0;
    loop {
        let wait = if s_bar >= 2 {
            let e: f64 = Exp1.sample(&mut rng);
            e / rate
        } else {
            f64::INFINITY
        };
        let l_next = run.lambda + wait;
        while next_snap < snapshot_lambdas.len()
            && (snapshot_lambdas[next_snap] < l_next || l_next > params.lambda_end)
        {
            let masses = run.rescaled_masses();
            run.standard.time = t_of(snapshot_lambdas[next_snap]);
            let standard = run.standard.snapshot();
            run.snapshots.push(MassSnapshot {
                lambda: snapshot_lambdas[next_snap],
                masses,
                bad_edges: run.bad_edges,
                standard,
            });
            next_snap += 1;
        }
        if l_next > params.lambda_end {
            run.lambda = params.lambda_end;
            run.standard.time = t_of(params.lambda_end);
            break;
        }
        run.lambda = l_next;
        let i = rng.random_range(0..s_bar);
        let mut j = rng.random_range(0..s_bar - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (run.frozen[i], run.frozen[j]);
        let (va, vb) = (base.graph.owner(a), base.graph.owner(b));
        let (ra, rb) = (run.bar_uf.find(va), run.bar_uf.find(vb));
        let mut merged_mass = 0;
        if ra != rb {
            let (ma, mb) = (run.mass[ra as usize], run.mass[rb as usize]);
            let root = run.bar_uf.union(ra, rb).expect("distinct blocks");
            merged_mass = ma + mb;
            run.mass[root as usize] = merged_mass;
            let other = if root == ra { rb } else { ra };
            run.mass[other as usize] = 0;
            if merged_mass != ma + mb {
                run.additivity_violations += 1;
            }
        }
        let std = &mut run.standard;
        let accepted = std.graph.mate(a) == OPEN && std.graph.mate(b) == OPEN;
        if accepted {
            std.time = t_of(l_next);
            std.pair(a, b);
            std.events.push(PairEvent {
                time: std.time,
                a,
                b,
            });
            if !run.bar_uf.same(va, vb) {
                run.containment_violations += 1;
            }
        } else {
            run.bad_edges += 1;
        }
        run.events.push(ModifiedEvent {
            lambda: l_next,
            a,
            b,
            accepted,
            merged_mass,
        });
    }
    Ok(run)
}

/// Trajectory row: standard-process components at one window location.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub lambda: f64,
    pub rank: usize,
    pub size: u64,
    pub rescaled_size: f64,
    pub rescaled_mass: f64,
    pub surplus: u64,
    pub bad_edges_so_far: u64,
}

/// Runs the dynamic construction to `t_n(λ_0)`, then the coupled kept-alive
/// process over the grid, reporting the standard process at each `λ`.
pub fn trajectory(
    ds: &DegreeSequence,
    lambdas: &[f64],
    top_k: usize,
    seed: u64,
) -> Result<Vec<TrajectoryRow>> {
    if lambdas.is_empty() || lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig(
            "lambda grid must be non-empty and sorted".into(),
        ));
    }
    let nu_n = ds.stats::<f64>().nu_n;
    let n = ds.n();
    let t0 = t_map(nu_n, n, lambdas[0])?;
    let base = run_dynamic(ds, t0, crate::rng::substream(seed, 0), &[])?;
    let params = ModifiedParams {
        nu_n,
        n,
        lambda_start: lambdas[0],
        lambda_end: *lambdas.last().expect("non-empty grid"),
    };
    let run = run_modified(&base, params, lambdas, crate::rng::substream(seed, 1))?;
    let mut rows = Vec::new();
    for snap in &run.snapshots {
        let v = snap.standard.component_vector();
        for (rank, e) in v.entries.iter().take(top_k).enumerate() {
            rows.push(TrajectoryRow {
                lambda: snap.lambda,
                rank: rank + 1,
                size: e.size,
                rescaled_size: e.rescaled_size,
                rescaled_mass: e.open_halfedges as f64 / run.beta_n,
                surplus: e.surplus,
                bad_edges_so_far: snap.bad_edges,
            });
        }
    }
    Ok(rows)
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "lambda,rank,rescaled_size,rescaled_mass,surplus,bad_edges_so_far"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.lambda, r.rank, r.rescaled_size, r.rescaled_mass, r.surplus, r.bad_edges_so_far
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(d: &[u32]) -> DegreeSequence {
        DegreeSequence::new(d.to_vec()).unwrap()
    }

    #[test]
    fn t_map_examples() {
        assert!((t_map(2.0, 1000, 0.0).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((t_map(2.0, 1000, 1.0).unwrap() - (0.5 * 2f64.ln() + 0.05)).abs() < 1e-12);
        assert!(t_map(2.0, 1000, 0.5).unwrap() < t_map(2.0, 1000, 0.6).unwrap());
        assert!(t_map(1.0, 10, 0.0).is_err());
        let l = lambda_of_time(1.5, 1000, t_map(1.5, 1000, -0.7).unwrap()).unwrap();
        assert!((l + 0.7).abs() < 1e-9);
    }

    #[test]
    fn single_edge_then_frozen() {
        let s = run_dynamic(&seq(&[1, 1]), 1e9, 3, &[]).unwrap();
        assert_eq!(s.events.len(), 1);
        assert_eq!(s.open(), 0);
        assert!(s.graph.is_fully_matched());
    }

    #[test]
    fn open_count_drops_by_two() {
        let ds = seq(&[3, 2, 1, 1, 4, 1, 2, 2]);
        let s = run_dynamic(&ds, 0.3, 9, &[0.1, 0.2]).unwrap();
        assert_eq!(s.open() as usize, 16 - 2 * s.events.len());
        assert_eq!(s.snapshots.len(), 2);
        assert!(s.events.windows(2).all(|w| w[0].time < w[1].time));
        let before = s.events.iter().filter(|e| e.time < 0.1).count();
        assert_eq!(s.snapshots[0].open as usize, 16 - 2 * before);
    }

    #[test]
    fn rejects_time_reversal() {
        let mut s = DynamicState::new(&seq(&[1, 1]));
        s.time = 2.0;
        assert!(matches!(
            s.advance(1.0, &[], &mut rng_from_seed(0)),
            Err(Error::TimeReversal { .. })
        ));
    }

    #[test]
    fn modified_without_events_is_unchanged() {
        let base = run_dynamic(&seq(&[3, 3, 2, 2, 1, 1]), 0.2, 1, &[]).unwrap();
        let params = ModifiedParams {
            nu_n: 1.5,
            n: 6,
            lambda_start: 0.0,
            lambda_end: 0.0,
        };
        let mut run = run_modified(&base, params, &[], 4).unwrap();
        assert!(run.events.is_empty());
        assert_eq!(run.standard.graph, base.graph);
        assert_eq!(run.masses().iter().sum::<u64>(), base.open());
    }

    #[test]
    fn modified_invariants() {
        let ds = seq(&[3, 3, 2, 2, 1, 1, 4, 1, 1, 2, 3, 1]);
        for seed in 0..50 {
            let base = run_dynamic(&ds, 0.1, seed, &[]).unwrap();
            let params = ModifiedParams {
                nu_n: 1.5,
                n: 12,
                lambda_start: 0.0,
                lambda_end: 5.0,
            };
            let mut run = run_modified(&base, params, &[1.0, 2.0], seed + 100).unwrap();
            assert!(run.invariants_hold());
            assert_eq!(run.snapshots.len(), 2);
            let total: u64 = run.masses().iter().sum();
            assert_eq!(total as usize, run.pool_size());
            let accepted = run.events.iter().filter(|e| e.accepted).count() as u64;
            assert_eq!(accepted + run.bad_edges, run.events.len() as u64);
            let fine = run.standard.labels();
            let coarse = run.bar_labels();
            assert!(crate::unionfind::refines(&fine, &coarse));
        }
    }

    #[test]
    fn deviation_on_tiny_run() {
        let s = run_dynamic(&seq(&[1, 1]), 2.0, 3, &[]).unwrap();
        let d = s.open_fraction_deviation(0.0, 1.0);
        assert!((0.0..=1.0).contains(&d));
    }
}
