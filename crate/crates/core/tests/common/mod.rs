//! Brute-force oracles over all perfect matchings of small degree sequences.
#![allow(dead_code)]

use std::collections::BTreeMap;

use cmcrit::exploration::ExploredComponent;
use cmcrit::multigraph::{ComponentSummary, HalfEdgeGraph};
use cmcrit::stats::chi_square_gof;

/// Sorted `(size, surplus)` pairs of every component.
pub type Shape = Vec<(u64, u64)>;

pub type Law = BTreeMap<Shape, f64>;

/// Every perfect matching of half-edges `0..ell`.
pub fn matchings(ell: usize) -> Vec<Vec<(u32, u32)>> {
    fn rec(free: &mut Vec<u32>, cur: &mut Vec<(u32, u32)>, out: &mut Vec<Vec<(u32, u32)>>) {
        if free.is_empty() {
            out.push(cur.clone());
            return;
        }
        let a = free.remove(0);
        for i in 0..free.len() {
            let b = free.remove(i);
            cur.push((a, b));
            rec(free, cur, out);
            cur.pop();
            free.insert(i, b);
        }
        free.insert(0, a);
    }
    let mut out = Vec::new();
    rec(&mut (0..ell as u32).collect(), &mut Vec::new(), &mut out);
    out
}

pub fn owners(degrees: &[u32]) -> Vec<usize> {
    degrees
        .iter()
        .enumerate()
        .flat_map(|(v, &d)| std::iter::repeat_n(v, d as usize))
        .collect()
}

/// Component shape of the multigraph on `degrees.len()` vertices with the
/// given edges (pairs of half-edge indices), by depth-first search.
pub fn shape_of(degrees: &[u32], edges: &[(u32, u32)]) -> Shape {
    let n = degrees.len();
    let own = owners(degrees);
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        let (u, v) = (own[a as usize], own[b as usize]);
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![s];
        comp[s] = id;
        let mut size = 0u64;
        while let Some(u) = stack.pop() {
            size += 1;
            for &v in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = id;
                    stack.push(v);
                }
            }
        }
        sizes.push(size);
    }
    let mut edge_count = vec![0u64; sizes.len()];
    for &(a, _) in edges {
        edge_count[comp[own[a as usize]]] += 1;
    }
    let mut shape: Shape = sizes
        .iter()
        .zip(&edge_count)
        .map(|(&s, &e)| (s, e + 1 - s))
        .collect();
    shape.sort_unstable();
    shape
}

/// Exact law of the configuration model's component shape.
pub fn matching_law(degrees: &[u32]) -> Law {
    let ell = degrees.iter().sum::<u32>() as usize;
    let all = matchings(ell);
    let w = 1.0 / all.len() as f64;
    let mut law = Law::new();
    for m in &all {
        *law.entry(shape_of(degrees, m)).or_default() += w;
    }
    law
}

/// Exact law after keeping each edge independently with probability `p`.
pub fn percolation_law(degrees: &[u32], p: f64) -> Law {
    let ell = degrees.iter().sum::<u32>() as usize;
    let all = matchings(ell);
    let w = 1.0 / all.len() as f64;
    let mut law = Law::new();
    for m in &all {
        for mask in 0u32..(1 << m.len()) {
            let kept: Vec<(u32, u32)> = m
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            let k = kept.len() as i32;
            let prob = p.powi(k) * (1.0 - p).powi(m.len() as i32 - k);
            if prob == 0.0 {
                continue;
            }
            *law.entry(shape_of(degrees, &kept)).or_default() += w * prob;
        }
    }
    law
}

pub fn shape_of_summaries(comps: &[ComponentSummary]) -> Shape {
    let mut s: Shape = comps.iter().map(|c| (c.vertex_count, c.surplus)).collect();
    s.sort_unstable();
    s
}

pub fn shape_of_explored(comps: &[ExploredComponent]) -> Shape {
    let mut s: Shape = comps.iter().map(|c| (c.size, c.surplus)).collect();
    s.sort_unstable();
    s
}

pub fn shape_of_graph(g: &HalfEdgeGraph) -> Shape {
    shape_of_summaries(&cmcrit::multigraph::components(g))
}

/// Chi-square p-value of observed shape counts against an exact law. A
/// shape outside the support gives p = 0.
pub fn chi_square_p(counts: &BTreeMap<Shape, u64>, law: &Law) -> f64 {
    if counts.keys().any(|k| !law.contains_key(k)) {
        return 0.0;
    }
    if law.len() == 1 {
        return 1.0;
    }
    let observed: Vec<u64> = law.keys().map(|k| counts.get(k).copied().unwrap_or(0)).collect();
    let probs: Vec<f64> = law.values().copied().collect();
    chi_square_gof(&observed, &probs).unwrap().p_value
}

pub fn tally(samples: impl IntoIterator<Item = Shape>) -> BTreeMap<Shape, u64> {
    let mut out = BTreeMap::new();
    for s in samples {
        *out.entry(s).or_insert(0) += 1;
    }
    out
}

/// Partitions of `total` into positive parts, non-increasing.
pub fn partitions(total: u32) -> Vec<Vec<u32>> {
    fn rec(rest: u32, max: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        for part in (1..=rest.min(max)).rev() {
            cur.push(part);
            rec(rest - part, part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, total, &mut Vec::new(), &mut out);
    out
}

/// Degree sequences with even total degree `2..=max_ell`, one per
/// partition, plus a few with isolated vertices appended.
pub fn small_sequences(max_ell: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for ell in (2..=max_ell).step_by(2) {
        out.extend(partitions(ell));
    }
    out.push(vec![2, 0]);
    out.push(vec![1, 0, 1, 2]);
    out.push(vec![3, 0, 1, 0]);
    out
}

/// Odd double factorial `(ell − 1)!!`.
pub fn double_factorial(ell: u64) -> u64 {
    (1..ell).step_by(2).product::<u64>().max(1)
}
