//! Half-edge multigraphs, uniform perfect matchings and component summaries.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::degrees::DegreeSequence;
use crate::rng::rng_from_seed;
use crate::unionfind::UnionFind;
use crate::{Error, Result};

/// Sentinel for an unpaired half-edge.
pub const OPEN: u32 = u32::MAX;

/// Half-edges of vertex `v` are `offsets[v]..offsets[v+1]`; `mate` is a
/// (partial) fixed-point-free involution on half-edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HalfEdgeGraph {
    offsets: Vec<usize>,
    owner: Vec<u32>,
    mate: Vec<u32>,
}

impl HalfEdgeGraph {
    /// All half-edges open.
    pub fn unmatched(degrees: &[u32]) -> Self {
        let mut offsets = Vec::with_capacity(degrees.len() + 1);
        let mut owner = Vec::new();
        offsets.push(0);
        for (v, &d) in degrees.iter().enumerate() {
            owner.extend(std::iter::repeat_n(v as u32, d as usize));
            offsets.push(owner.len());
        }
        assert!(owner.len() < OPEN as usize, "too many half-edges");
        let mate = vec![OPEN; owner.len()];
        Self {
            offsets,
            owner,
            mate,
        }
    }

    /// Builds a graph from explicit pairs of half-edge indices.
    pub fn from_pairs(degrees: &[u32], pairs: &[(u32, u32)]) -> Result<Self> {
        let mut g = Self::unmatched(degrees);
        for &(a, b) in pairs {
            if a == b
                || a as usize >= g.owner.len()
                || b as usize >= g.owner.len()
                || g.mate[a as usize] != OPEN
                || g.mate[b as usize] != OPEN
            {
                return Err(Error::InvalidDegrees(format!("bad pair ({a}, {b})")));
            }
            g.pair(a, b);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn ell(&self) -> usize {
        self.owner.len()
    }

    pub fn owner(&self, h: u32) -> u32 {
        self.owner[h as usize]
    }

    pub fn mate(&self, h: u32) -> u32 {
        self.mate[h as usize]
    }

    pub fn owners(&self) -> &[u32] {
        &self.owner
    }

    pub fn mates(&self) -> &[u32] {
        &self.mate
    }

    pub fn degree(&self, v: u32) -> u32 {
        (self.offsets[v as usize + 1] - self.offsets[v as usize]) as u32
    }

    pub fn degrees(&self) -> Vec<u32> {
        (0..self.n() as u32).map(|v| self.degree(v)).collect()
    }

    pub fn half_edges(&self, v: u32) -> std::ops::Range<u32> {
        self.offsets[v as usize] as u32..self.offsets[v as usize + 1] as u32
    }

    pub(crate) fn pair(&mut self, a: u32, b: u32) {
        debug_assert!(a != b);
        self.mate[a as usize] = b;
        self.mate[b as usize] = a;
    }

    pub(crate) fn unpair(&mut self, a: u32) {
        let b = self.mate[a as usize];
        if b != OPEN {
            self.mate[a as usize] = OPEN;
            self.mate[b as usize] = OPEN;
        }
    }

    pub fn open_count(&self) -> usize {
        self.mate.iter().filter(|&&m| m == OPEN).count()
    }

    pub fn is_fully_matched(&self) -> bool {
        self.open_count() == 0
    }

    /// Matched pairs `(h, mate(h))` with `h < mate(h)`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.mate
            .iter()
            .enumerate()
            .filter(|&(h, &m)| m != OPEN && (h as u32) < m)
            .map(|(h, &m)| (h as u32, m))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Checks the involution and ownership invariants.
    pub fn validate(&self) -> bool {
        self.mate
            .iter()
            .enumerate()
            .all(|(h, &m)| m == OPEN || (m as usize != h && self.mate[m as usize] as usize == h))
            && (0..self.n()).all(|v| {
                self.half_edges(v as u32)
                    .all(|h| self.owner[h as usize] == v as u32)
            })
    }

    /// Union-find over vertices joined by matched pairs.
    pub fn union_find(&self) -> UnionFind {
        let mut uf = UnionFind::new(self.n());
        for (a, b) in self.edges() {
            uf.union(self.owner(a), self.owner(b));
        }
        uf
    }

    /// Subgraph induced on the vertices with `keep[v]`, renumbered in
    /// increasing order; half-edges whose mate is dropped become open.
    /// Also returns the kept vertex indices.
    pub fn induced(&self, keep: &[bool]) -> (HalfEdgeGraph, Vec<u32>) {
        let kept: Vec<u32> = (0..self.n() as u32).filter(|&v| keep[v as usize]).collect();
        let degrees: Vec<u32> = kept.iter().map(|&v| self.degree(v)).collect();
        let mut sub = HalfEdgeGraph::unmatched(&degrees);
        let mut new_index = vec![OPEN; self.ell()];
        for (i, &v) in kept.iter().enumerate() {
            for (k, h) in self.half_edges(v).enumerate() {
                new_index[h as usize] = sub.offsets[i] as u32 + k as u32;
            }
        }
        for (a, b) in self.edges() {
            let (na, nb) = (new_index[a as usize], new_index[b as usize]);
            if na != OPEN && nb != OPEN {
                sub.pair(na, nb);
            }
        }
        (sub, kept)
    }

    /// Debug dump: `half_edge,owner,mate` (mate empty when open).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "half_edge,owner,mate")?;
        for (h, (&o, &m)) in self.owner.iter().zip(&self.mate).enumerate() {
            if m == OPEN {
                writeln!(w, "{h},{o},")?;
            } else {
                writeln!(w, "{h},{o},{m}")?;
            }
        }
        Ok(())
    }
}

/// Draws a uniform perfect matching: repeatedly take the last unpaired
/// half-edge and pair it with a uniform other unpaired one.
pub fn uniform_match(ds: &DegreeSequence, seed: u64) -> Result<HalfEdgeGraph> {
    uniform_match_degrees(ds.degrees(), seed)
}

pub fn uniform_match_degrees(degrees: &[u32], seed: u64) -> Result<HalfEdgeGraph> {
    let mut g = HalfEdgeGraph::unmatched(degrees);
    let ell = g.ell();
    if ell % 2 == 1 {
        return Err(Error::OddTotalDegree(ell as u64));
    }
    let mut rng = rng_from_seed(seed);
    let mut pool: Vec<u32> = (0..ell as u32).collect();
    match_pool(&mut g, &mut pool, &mut rng);
    Ok(g)
}

/// Pairs every half-edge in `pool` uniformly (pool length must be even).
pub(crate) fn match_pool<R: Rng>(g: &mut HalfEdgeGraph, pool: &mut Vec<u32>, rng: &mut R) {
    debug_assert!(pool.len() % 2 == 0);
    while let Some(a) = pool.pop() {
        let j = rng.random_range(0..pool.len());
        let b = pool.swap_remove(j);
        g.pair(a, b);
    }
}

/// Per-component tallies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentSummary {
    pub vertex_count: u64,
    pub edge_count: u64,
    pub surplus: u64,
    pub open_halfedges: u64,
    /// Sorted `(degree, count)` pairs.
    pub degree_hist: Vec<(u32, u64)>,
    pub min_vertex: u32,
}

/// Components of `g`, listed by increasing minimal vertex index.
pub fn components(g: &HalfEdgeGraph) -> Vec<ComponentSummary> {
    let mut uf = g.union_find();
    let labels = uf.labels();
    summarize_labels(g, &labels, |_| true)
}

/// Tallies components from per-vertex labels (label = minimal vertex of the
/// block); vertices rejected by `keep` are skipped.
pub(crate) fn summarize_labels(
    g: &HalfEdgeGraph,
    labels: &[u32],
    keep: impl Fn(u32) -> bool,
) -> Vec<ComponentSummary> {
    let n = g.n();
    let mut index = vec![u32::MAX; n];
    let mut out: Vec<ComponentSummary> = Vec::new();
    let mut hists: Vec<BTreeMap<u32, u64>> = Vec::new();
    for v in 0..n as u32 {
        if !keep(v) {
            continue;
        }
        let root = labels[v as usize] as usize;
        if index[root] == u32::MAX {
            index[root] = out.len() as u32;
            out.push(ComponentSummary {
                vertex_count: 0,
                edge_count: 0,
                surplus: 0,
                open_halfedges: 0,
                degree_hist: Vec::new(),
                min_vertex: v,
            });
            hists.push(BTreeMap::new());
        }
        let c = index[root] as usize;
        let comp = &mut out[c];
        comp.vertex_count += 1;
        *hists[c].entry(g.degree(v)).or_insert(0) += 1;
        for h in g.half_edges(v) {
            let m = g.mate(h);
            if m == OPEN {
                comp.open_halfedges += 1;
            } else if h < m {
                comp.edge_count += 1;
            }
        }
    }
    for (comp, hist) in out.iter_mut().zip(hists) {
        comp.surplus = comp.edge_count + 1 - comp.vertex_count;
        comp.degree_hist = hist.into_iter().collect();
    }
    out
}

/// One entry of an ordered size/surplus vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComponentEntry {
    pub rescaled_size: f64,
    pub size: u64,
    pub surplus: u64,
    pub edges: u64,
    pub open_halfedges: u64,
    pub min_vertex: u32,
}

/// Components ordered by size (desc), surplus (desc), minimal vertex (asc).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentVector {
    pub n: usize,
    pub entries: Vec<ComponentEntry>,
}

impl ComponentVector {
    pub fn sizes(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.size).collect()
    }

    pub fn rescaled(&self, rank: usize) -> f64 {
        self.entries.get(rank).map_or(0.0, |e| e.rescaled_size)
    }

    pub fn surplus(&self, rank: usize) -> u64 {
        self.entries.get(rank).map_or(0, |e| e.surplus)
    }

    /// `rank,size,edges,surplus,open_halfedges` (ranks start at 1).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "rank,size,edges,surplus,open_halfedges")?;
        for (i, e) in self.entries.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                i + 1,
                e.size,
                e.edges,
                e.surplus,
                e.open_halfedges
            )?;
        }
        Ok(())
    }
}

pub fn order_entries(entries: &mut [ComponentEntry]) {
    entries.sort_unstable_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then(b.surplus.cmp(&a.surplus))
            .then(a.min_vertex.cmp(&b.min_vertex))
    });
}

pub fn to_component_vector(comps: &[ComponentSummary], n: usize) -> ComponentVector {
    let scale = (n as f64).powf(-2.0 / 3.0);
    let mut entries: Vec<ComponentEntry> = comps
        .iter()
        .map(|c| ComponentEntry {
            rescaled_size: c.vertex_count as f64 * scale,
            size: c.vertex_count,
            surplus: c.surplus,
            edges: c.edge_count,
            open_halfedges: c.open_halfedges,
            min_vertex: c.min_vertex,
        })
        .collect();
    order_entries(&mut entries);
    ComponentVector { n, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(d: &[u32]) -> DegreeSequence {
        DegreeSequence::new(d.to_vec()).unwrap()
    }

    #[test]
    fn forced_matchings() {
        let g = uniform_match(&seq(&[1, 1]), 3).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        let comps = components(&g);
        assert_eq!(comps.len(), 1);
        assert_eq!((comps[0].vertex_count, comps[0].surplus), (2, 0));

        let g = uniform_match(&seq(&[2]), 3).unwrap();
        let comps = components(&g);
        assert_eq!(comps[0].vertex_count, 1);
        assert_eq!(comps[0].edge_count, 1);
        assert_eq!(comps[0].surplus, 1);
    }

    #[test]
    fn odd_total_rejected() {
        assert!(matches!(
            uniform_match_degrees(&[1, 2], 0),
            Err(Error::OddTotalDegree(3))
        ));
    }

    #[test]
    fn path_and_triangle() {
        // half-edges: v0 {0}, v1 {1,2}, v2 {3}
        let g = HalfEdgeGraph::from_pairs(&[1, 2, 1], &[(0, 1), (2, 3)]).unwrap();
        let c = components(&g);
        assert_eq!(c.len(), 1);
        assert_eq!(
            (c[0].vertex_count, c[0].edge_count, c[0].surplus),
            (3, 2, 0)
        );
        // v0 {0,1}, v1 {2,3}, v2 {4,5}
        let g = HalfEdgeGraph::from_pairs(&[2, 2, 2], &[(1, 2), (3, 4), (5, 0)]).unwrap();
        let c = components(&g);
        assert_eq!(
            (c[0].vertex_count, c[0].edge_count, c[0].surplus),
            (3, 3, 1)
        );
        assert_eq!(c[0].degree_hist, vec![(2, 3)]);
    }

    #[test]
    fn partial_matching_counts_open() {
        let g = HalfEdgeGraph::from_pairs(&[2, 1, 1], &[(0, 2)]).unwrap();
        let c = components(&g);
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].vertex_count, c[0].open_halfedges), (2, 1));
        assert_eq!(
            (c[1].vertex_count, c[1].open_halfedges, c[1].surplus),
            (1, 1, 0)
        );
        assert!(g.validate());
    }

    #[test]
    fn ordering_rule() {
        let mk = |size, surplus, min_vertex| ComponentSummary {
            vertex_count: size,
            edge_count: size - 1 + surplus,
            surplus,
            open_halfedges: 0,
            degree_hist: vec![],
            min_vertex,
        };
        let comps = vec![mk(3, 0, 0), mk(5, 1, 3), mk(3, 2, 8)];
        let v = to_component_vector(&comps, 11);
        let got: Vec<(u64, u64)> = v.entries.iter().map(|e| (e.size, e.surplus)).collect();
        assert_eq!(got, vec![(5, 1), (3, 2), (3, 0)]);
    }

    #[test]
    fn isolated_vertices() {
        let g = HalfEdgeGraph::unmatched(&[0, 0, 0, 0]);
        let v = to_component_vector(&components(&g), 4);
        assert_eq!(v.entries.len(), 4);
        for e in &v.entries {
            assert!((e.rescaled_size - 4f64.powf(-2.0 / 3.0)).abs() < 1e-15);
            assert_eq!(e.surplus, 0);
        }
    }

    #[test]
    fn csv_outputs() {
        let g = HalfEdgeGraph::from_pairs(&[1, 1, 2], &[(0, 1)]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "half_edge,owner,mate\n0,0,1\n1,1,0\n2,2,\n3,2,\n"
        );
        let mut buf = Vec::new();
        to_component_vector(&components(&g), 3)
            .write_csv(&mut buf)
            .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "rank,size,edges,surplus,open_halfedges\n1,2,1,0,0\n2,1,0,0,2\n"
        );
    }

    proptest! {
        #[test]
        fn conservation_and_surplus_identity(
            d in proptest::collection::vec(0u32..6, 1..40),
            seed in any::<u64>(),
        ) {
            let mut d = d;
            if d.iter().map(|&x| x as u64).sum::<u64>() % 2 == 1 { d[0] += 1; }
            prop_assume!(d.iter().any(|&x| x > 0));
            let g = uniform_match(&seq(&d), seed).unwrap();
            prop_assert!(g.validate());
            prop_assert!(g.is_fully_matched());
            let comps = components(&g);
            let n: u64 = comps.iter().map(|c| c.vertex_count).sum();
            prop_assert_eq!(n as usize, d.len());
            let half: u64 = comps.iter().map(|c| 2 * c.edge_count + c.open_halfedges).sum();
            prop_assert_eq!(half, d.iter().map(|&x| x as u64).sum::<u64>());
            let surplus: u64 = comps.iter().map(|c| c.surplus).sum();
            let edges = g.edge_count() as u64;
            prop_assert_eq!(surplus + n, edges + comps.len() as u64);
        }

        #[test]
        fn ordering_matches_naive_sort(
            sizes in proptest::collection::vec((1u64..6, 0u64..3), 1..30),
        ) {
            let comps: Vec<ComponentSummary> = sizes.iter().enumerate().map(|(i, &(s, sp))| ComponentSummary {
                vertex_count: s, edge_count: s - 1 + sp, surplus: sp, open_halfedges: 0,
                degree_hist: vec![], min_vertex: (7 * i % 31) as u32,
            }).collect();
            let v = to_component_vector(&comps, 100);
            let mut naive: Vec<(u64, u64, u32)> = comps.iter().map(|c| (c.vertex_count, c.surplus, c.min_vertex)).collect();
            naive.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
            let got: Vec<(u64, u64, u32)> = v.entries.iter().map(|e| (e.size, e.surplus, e.min_vertex)).collect();
            prop_assert_eq!(got, naive);
        }
    }
}
