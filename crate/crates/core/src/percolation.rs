//! Bond percolation on the configuration model.
//!
//! Three constructions with the same law: deleting matched pairs of a full
//! graph ([`percolate_direct`]), the explosion construction
//! ([`percolate_via_explosion`]) and the sequential pairing behind the
//! monotone λ-grid ([`coupled_grid`]).

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::degrees::DegreeSequence;
use crate::multigraph::{
    summarize_labels, to_component_vector, uniform_match_degrees, ComponentSummary,
    ComponentVector, HalfEdgeGraph,
};
use crate::rng::rng_from_seed;
use crate::unionfind::{refines, UnionFind};
use crate::{Error, Result};

/// Retention probability at window location `λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PercolationParams {
    pub p: f64,
    pub lambda: f64,
    pub nu_n: f64,
}

/// `p = (1 + λ n^{-1/3}) / ν_n`.
pub fn p_critical(nu_n: f64, n: usize, lambda: f64) -> Result<f64> {
    if nu_n <= 1.0 || nu_n.is_nan() {
        return Err(Error::NotSupercritical(nu_n));
    }
    let p = (1.0 + lambda * (n as f64).powf(-1.0 / 3.0)) / nu_n;
    if p <= 0.0 || p > 1.0 || p.is_nan() {
        return Err(Error::ProbabilityOutOfRange { p });
    }
    Ok(p)
}

impl PercolationParams {
    pub fn for_sequence(ds: &DegreeSequence, lambda: f64) -> Result<Self> {
        let nu_n = ds.stats::<f64>().nu_n;
        Ok(Self {
            p: p_critical(nu_n, ds.n(), lambda)?,
            lambda,
            nu_n,
        })
    }
}

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange { p })
    }
}

/// Degrees after detaching half-edges: `degrees[..n]` are the kept
/// degrees of the original vertices, followed by `n_plus` degree-one
/// vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExplodedSequence {
    pub degrees: Vec<u32>,
    pub n: usize,
    pub n_plus: usize,
}

impl ExplodedSequence {
    pub fn n_tilde(&self) -> usize {
        self.n + self.n_plus
    }

    pub fn total_degree(&self) -> u64 {
        self.degrees.iter().map(|&d| d as u64).sum()
    }
}

/// Detaches every half-edge independently with probability `1 − √p`.
pub fn explode(ds: &DegreeSequence, p: f64, seed: u64) -> Result<ExplodedSequence> {
    check_p(p)?;
    let mut rng = rng_from_seed(seed);
    explode_with(ds.degrees(), p, &mut rng)
}

fn explode_with<R: Rng>(degrees: &[u32], p: f64, rng: &mut R) -> Result<ExplodedSequence> {
    let keep = p.sqrt();
    let mut out = Vec::with_capacity(degrees.len() * 3 / 2);
    let mut n_plus = 0usize;
    for &d in degrees {
        let kept = (0..d).filter(|_| rng.random::<f64>() < keep).count() as u32;
        n_plus += (d - kept) as usize;
        out.push(kept);
    }
    out.extend(std::iter::repeat_n(1, n_plus));
    Ok(ExplodedSequence {
        degrees: out,
        n: degrees.len(),
        n_plus,
    })
}

/// Per component of the exploded graph: size and number of deleted
/// degree-one vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CleanupRecord {
    pub exploded_size: u64,
    pub deleted: u64,
    pub min_vertex: u32,
}

#[derive(Clone, Debug)]
pub struct ExplosionOutcome {
    pub exploded: ExplodedSequence,
    /// Configuration model on the exploded sequence.
    pub exploded_graph: HalfEdgeGraph,
    /// Vertices of the exploded graph removed by the cleanup.
    pub deleted: Vec<bool>,
    /// Percolated graph on the surviving vertices; half-edges whose mate was
    /// deleted are open.
    pub graph: HalfEdgeGraph,
    /// Exploded-graph index of each surviving vertex.
    pub survivors: Vec<u32>,
    pub components: Vec<ComponentSummary>,
    pub cleanup: Vec<CleanupRecord>,
}

impl ExplosionOutcome {
    pub fn component_vector(&self) -> ComponentVector {
        to_component_vector(&self.components, self.graph.n())
    }
}

/// Explodes, matches the exploded sequence uniformly and removes `n_+`
/// uniformly chosen degree-one vertices.
pub fn percolate_via_explosion(ds: &DegreeSequence, p: f64, seed: u64) -> Result<ExplosionOutcome> {
    check_p(p)?;
    let mut rng = rng_from_seed(seed);
    let exploded = explode_with(ds.degrees(), p, &mut rng)?;
    let g = uniform_match_degrees(&exploded.degrees, rng.random())?;
    let ones: Vec<u32> = (0..exploded.n_tilde() as u32)
        .filter(|&v| exploded.degrees[v as usize] == 1)
        .collect();
    assert!(
        ones.len() >= exploded.n_plus,
        "not enough degree-one vertices"
    );
    let mut deleted = vec![false; exploded.n_tilde()];
    for i in sample(&mut rng, ones.len(), exploded.n_plus) {
        deleted[ones[i] as usize] = true;
    }

    let mut uf = g.union_find();
    let labels = uf.labels();
    let mut cleanup_index = vec![u32::MAX; g.n()];
    let mut cleanup = Vec::new();
    for v in 0..g.n() {
        let root = labels[v] as usize;
        if cleanup_index[root] == u32::MAX {
            cleanup_index[root] = cleanup.len() as u32;
            cleanup.push(CleanupRecord {
                exploded_size: 0,
                deleted: 0,
                min_vertex: v as u32,
            });
        }
        let rec = &mut cleanup[cleanup_index[root] as usize];
        rec.exploded_size += 1;
        rec.deleted += deleted[v] as u64;
    }

    let keep: Vec<bool> = deleted.iter().map(|&d| !d).collect();
    let (graph, survivors) = g.induced(&keep);
    let components = crate::multigraph::components(&graph);
    Ok(ExplosionOutcome {
        exploded,
        exploded_graph: g,
        deleted,
        graph,
        survivors,
        components,
        cleanup,
    })
}

/// Keeps each matched pair of `g` independently with probability `p`.
pub fn percolate_direct(g: &HalfEdgeGraph, p: f64, seed: u64) -> Result<HalfEdgeGraph> {
    check_p(p)?;
    let open = g.open_count();
    if open > 0 {
        return Err(Error::PartialMatching(open));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = g.clone();
    let edges: Vec<(u32, u32)> = g.edges().collect();
    for (a, _) in edges {
        if rng.random::<f64>() >= p {
            out.unpair(a);
        }
    }
    Ok(out)
}

/// Partition of the vertex set at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSnapshot {
    pub lambda: f64,
    pub p: f64,
    pub edges: u64,
    /// Per-vertex label: smallest vertex of its component.
    pub labels: Vec<u32>,
    pub components: Vec<ComponentSummary>,
}

impl GridSnapshot {
    pub fn component_vector(&self) -> ComponentVector {
        to_component_vector(&self.components, self.labels.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingGrid {
    pub n: usize,
    pub snapshots: Vec<GridSnapshot>,
}

impl CouplingGrid {
    /// Each snapshot's partition refines the next one.
    pub fn refinement_holds(&self) -> bool {
        self.snapshots
            .windows(2)
            .all(|w| refines(&w[0].labels, &w[1].labels))
    }

    /// `lambda,rank,rescaled_size,surplus,open_halfedges`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,rank,rescaled_size,surplus,open_halfedges")?;
        for s in &self.snapshots {
            for (i, e) in s.component_vector().entries.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    s.lambda,
                    i + 1,
                    e.rescaled_size,
                    e.surplus,
                    e.open_halfedges
                )?;
            }
        }
        Ok(())
    }
}

/// Monotone coupling over window locations `lambdas` (sorted), with
/// `p_n(λ)` taken from the base sequence.
pub fn coupled_grid(ds: &DegreeSequence, lambdas: &[f64], seed: u64) -> Result<CouplingGrid> {
    if lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("lambda grid must be sorted".into()));
    }
    let nu_n = ds.stats::<f64>().nu_n;
    let ps = lambdas
        .iter()
        .map(|&l| p_critical(nu_n, ds.n(), l))
        .collect::<Result<Vec<_>>>()?;
    let mut grid = coupled_grid_p(ds, &ps, seed)?;
    for (s, &l) in grid.snapshots.iter_mut().zip(lambdas) {
        s.lambda = l;
    }
    Ok(grid)
}

/// Monotone coupling over retention probabilities `ps` (sorted). The
/// reported `lambda` of each snapshot is NaN.
///
/// Every one of the `ℓ_n/2` potential edges carries a uniform label; the
/// graph at `p` has `E(p) = #{labels ≤ p}` edges, built by pairing that many
/// uniformly chosen pairs of unpaired half-edges one after another.
pub fn coupled_grid_p(ds: &DegreeSequence, ps: &[f64], seed: u64) -> Result<CouplingGrid> {
    for &p in ps {
        check_p(p)?;
    }
    if ps.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig(
            "probability grid must be sorted".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let m = (ds.total_degree() / 2) as usize;
    let mut counts = vec![0u64; ps.len()];
    for _ in 0..m {
        let u: f64 = rng.random();
        let first = ps.partition_point(|&p| p < u);
        if first < ps.len() {
            counts[first] += 1;
        }
    }
    let mut edges_at = Vec::with_capacity(ps.len());
    let mut acc = 0;
    for c in counts {
        acc += c;
        edges_at.push(acc);
    }

    let mut g = HalfEdgeGraph::unmatched(ds.degrees());
    let mut pool: Vec<u32> = (0..g.ell() as u32).collect();
    let mut uf = UnionFind::new(ds.n());
    let mut paired = 0u64;
    let mut snapshots = Vec::with_capacity(ps.len());
    for (&p, &target) in ps.iter().zip(&edges_at) {
        while paired < target {
            let i = rng.random_range(0..pool.len());
            let a = pool.swap_remove(i);
            let j = rng.random_range(0..pool.len());
            let b = pool.swap_remove(j);
            g.pair(a, b);
            uf.union(g.owner(a), g.owner(b));
            paired += 1;
        }
        let labels = uf.labels();
        let components = summarize_labels(&g, &labels, |_| true);
        snapshots.push(GridSnapshot {
            lambda: f64::NAN,
            p,
            edges: paired,
            labels,
            components,
        });
    }
    Ok(CouplingGrid {
        n: ds.n(),
        snapshots,
    })
}
