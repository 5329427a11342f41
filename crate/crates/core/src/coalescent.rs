//! Multiplicative coalescent with passive weights.
//!
//! Particles `i`, `j` merge at rate `x_i x_j`; masses and weights add.
//! The next merging pair is drawn without rejection: the first particle
//! with probability proportional to `x_i (S − x_i)` (where `S = Σx` is
//! conserved) and the second proportional to `x_j` among the others.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::rng::rng_from_seed;
use crate::{Error, Result, Scalar};

/// Binary indexed tree over non-negative values.
#[derive(Clone, Debug)]
struct Fenwick<T> {
    tree: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> Fenwick<T> {
    fn new(values: Vec<T>) -> Self {
        let mut f = Fenwick {
            tree: vec![T::zero(); values.len() + 1],
            values,
        };
        f.rebuild();
        f
    }

    fn rebuild(&mut self) {
        let n = self.values.len();
        self.tree.iter_mut().for_each(|t| *t = T::zero());
        for i in 0..n {
            let k = i + 1;
            self.tree[k] = self.tree[k] + self.values[i];
            let parent = k + (k & k.wrapping_neg());
            if parent <= n {
                self.tree[parent] = self.tree[parent] + self.tree[k];
            }
        }
    }

    fn set(&mut self, i: usize, v: T) {
        let delta = v - self.values[i];
        self.values[i] = v;
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] = self.tree[k] + delta;
            k += k & k.wrapping_neg();
        }
    }

    fn prefix(&self, i: usize) -> T {
        let mut k = i;
        let mut s = T::zero();
        while k > 0 {
            s = s + self.tree[k];
            k &= k - 1;
        }
        s
    }

    fn total(&self) -> T {
        self.prefix(self.values.len())
    }

    /// Smallest index whose inclusive prefix exceeds `u`, restricted to
    /// positive entries.
    fn search(&self, mut u: T) -> usize {
        let n = self.values.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u = u - self.tree[next];
            }
            step >>= 1;
        }
        let mut idx = pos.min(n - 1);
        // Rounding can land on an empty slot; move to the nearest positive one.
        if self.values[idx] <= T::zero() {
            if let Some(j) = (idx..n).find(|&j| self.values[j] > T::zero()) {
                idx = j;
            } else if let Some(j) = (0..idx).rev().find(|&j| self.values[j] > T::zero()) {
                idx = j;
            }
        }
        idx
    }
}

/// Particles with masses and weights at time `time`. Merged particles stay
/// in place with `alive = false`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoalescentState<T> {
    pub mass: Vec<T>,
    pub weight: Vec<T>,
    pub alive: Vec<bool>,
    pub time: T,
}

impl<T: Scalar> CoalescentState<T> {
    pub fn new(mass: Vec<T>, weight: Vec<T>) -> Result<Self> {
        if mass.len() != weight.len() {
            return Err(Error::Misaligned(format!(
                "{} masses but {} weights",
                mass.len(),
                weight.len()
            )));
        }
        if mass
            .iter()
            .chain(&weight)
            .any(|&x| !(x >= T::zero()) || !x.is_finite())
        {
            return Err(Error::InvalidConfig(
                "masses and weights must be finite and non-negative".into(),
            ));
        }
        let alive = vec![true; mass.len()];
        Ok(Self {
            mass,
            weight,
            alive,
            time: T::zero(),
        })
    }

    /// Weights equal to masses.
    pub fn from_masses(mass: Vec<T>) -> Result<Self> {
        let weight = mass.clone();
        Self::new(mass, weight)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn particles(&self) -> impl Iterator<Item = (T, T)> + '_ {
        (0..self.len())
            .filter(|&i| self.alive[i])
            .map(|i| (self.mass[i], self.weight[i]))
    }

    pub fn total_mass(&self) -> T {
        self.particles().map(|p| p.0).sum()
    }

    pub fn total_weight(&self) -> T {
        self.particles().map(|p| p.1).sum()
    }

    /// `Σ_{i<j} x_i x_j` over live particles, from scratch.
    pub fn total_rate(&self) -> T {
        let (s, sq) = self
            .particles()
            .fold((T::zero(), T::zero()), |(s, q), (x, _)| (s + x, q + x * x));
        (s * s - sq) / T::of(2.0)
    }

    /// Live `(mass, weight)` pairs, by mass (desc) then weight (desc).
    pub fn ordered(&self) -> Vec<(T, T)> {
        let mut v: Vec<(T, T)> = self.particles().collect();
        v.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal))
        });
        v
    }

    /// Live weights, non-increasing.
    pub fn ordered_weights(&self) -> Vec<T> {
        let mut v: Vec<T> = self.particles().map(|p| p.1).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MergeEvent<T> {
    pub time: T,
    /// Surviving index.
    pub i: usize,
    /// Absorbed index.
    pub j: usize,
    pub new_mass: T,
    pub new_weight: T,
}

pub fn write_merge_log<T: Scalar, W: Write>(
    log: &[MergeEvent<T>],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "time,i,j,new_mass,new_weight")?;
    for e in log {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.time, e.i, e.j, e.new_mass, e.new_weight
        )?;
    }
    Ok(())
}

/// Result of [`simulate`]: final state, merge log when requested, and the
/// largest relative gap seen between the maintained and recomputed rate.
#[derive(Clone, Debug)]
pub struct Simulation<T> {
    pub state: CoalescentState<T>,
    pub log: Vec<MergeEvent<T>>,
    pub max_rate_error: f64,
}

/// Options for [`simulate_with`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SimulateOptions {
    pub record_log: bool,
    /// Recompute the rate from scratch after every event and track the
    /// relative discrepancy (quadratic cost).
    pub audit_rate: bool,
}

pub fn simulate<T: Scalar>(
    state: &CoalescentState<T>,
    t_end: T,
    seed: u64,
) -> Result<Simulation<T>> {
    simulate_with(
        state,
        t_end,
        seed,
        SimulateOptions {
            record_log: true,
            audit_rate: false,
        },
    )
}

pub fn simulate_with<T: Scalar>(
    state: &CoalescentState<T>,
    t_end: T,
    seed: u64,
    opts: SimulateOptions,
) -> Result<Simulation<T>> {
    if t_end < state.time {
        return Err(Error::TimeReversal {
            start: state.time.f64(),
            end: t_end.f64(),
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut st = state.clone();
    let n = st.len();
    let mut log = Vec::new();
    let mut max_rate_error = 0.0f64;
    if n < 2 {
        st.time = t_end;
        return Ok(Simulation {
            state: st,
            log,
            max_rate_error,
        });
    }
    let live_mass =
        |st: &CoalescentState<T>, i: usize| if st.alive[i] { st.mass[i] } else { T::zero() };
    let s = st.total_mass();
    let masses: Vec<T> = (0..n).map(|i| live_mass(&st, i)).collect();
    let mut by_mass = Fenwick::new(masses.clone());
    let mut by_rate = Fenwick::new(masses.iter().map(|&x| x * (s - x)).collect());
    let mut rate_at_rebuild = by_rate.total();
    let two = T::of(2.0);
    loop {
        let rate = by_rate.total() / two;
        if rate <= T::zero() {
            break;
        }
        let e: f64 = Exp1.sample(&mut rng);
        let t_next = st.time + T::of(e) / rate;
        if t_next > t_end || !t_next.is_finite() {
            break;
        }
        st.time = t_next;
        let u1 = T::of(rng.random::<f64>()) * by_rate.total();
        let i = by_rate.search(u1);
        let xi = by_mass.values[i];
        let rest = by_mass.total() - xi;
        let u2 = T::of(rng.random::<f64>()) * rest;
        let before = by_mass.prefix(i);
        let j = if u2 < before {
            by_mass.search(u2)
        } else {
            by_mass.search(u2 + xi)
        };
        if j == i {
            // Degenerate rounding at the boundary; redraw.
            continue;
        }
        let (keep, drop) = (i.min(j), i.max(j));
        let new_mass = st.mass[keep] + st.mass[drop];
        let new_weight = st.weight[keep] + st.weight[drop];
        st.mass[keep] = new_mass;
        st.weight[keep] = new_weight;
        st.alive[drop] = false;
        by_mass.set(keep, new_mass);
        by_mass.set(drop, T::zero());
        by_rate.set(keep, new_mass * (s - new_mass));
        by_rate.set(drop, T::zero());
        if opts.record_log {
            log.push(MergeEvent {
                time: t_next,
                i: keep,
                j: drop,
                new_mass,
                new_weight,
            });
        }
        let total = by_rate.total();
        if total <= rate_at_rebuild / two || total < T::zero() {
            by_mass.rebuild();
            by_rate.rebuild();
            rate_at_rebuild = by_rate.total();
        }
        if opts.audit_rate {
            let exact = st.total_rate().f64();
            let kept = (by_rate.total() / two).f64();
            if exact > 0.0 {
                max_rate_error = max_rate_error.max(((kept - exact) / exact).abs());
            } else {
                max_rate_error = max_rate_error.max(kept.abs());
            }
        }
    }
    st.time = t_end;
    Ok(Simulation {
        state: st,
        log,
        max_rate_error,
    })
}

/// Two coupled runs from `minus ≤ plus` (componentwise masses).
#[derive(Clone, Debug)]
pub struct CoupledRun<T> {
    pub minus: CoalescentState<T>,
    pub plus: CoalescentState<T>,
    /// Per initial particle: smallest index of its block.
    pub minus_blocks: Vec<u32>,
    pub plus_blocks: Vec<u32>,
}

impl<T> CoupledRun<T> {
    pub fn refinement_holds(&self) -> bool {
        crate::unionfind::refines(&self.minus_blocks, &self.plus_blocks)
    }
}

/// Subgraph coupling: pair events among the initial particles arrive at
/// rate `Σ_{i<j} x⁺_i x⁺_j`, with the pair chosen proportionally to
/// `x⁺_i x⁺_j`; each event joins the blocks of `i` and `j` in the `+` run and,
/// with probability `x⁻_i x⁻_j / (x⁺_i x⁺_j)`, also in the `−` run. Block masses
/// of either run then follow the multiplicative coalescent.
pub fn subgraph_couple<T: Scalar>(
    minus: &CoalescentState<T>,
    plus: &CoalescentState<T>,
    t_end: T,
    seed: u64,
) -> Result<CoupledRun<T>> {
    let n = plus.len();
    if minus.len() != n {
        return Err(Error::Misaligned(format!(
            "{} vs {} particles",
            minus.len(),
            n
        )));
    }
    if minus.time != plus.time || t_end < plus.time {
        return Err(Error::TimeReversal {
            start: plus.time.f64(),
            end: t_end.f64(),
        });
    }
    for i in 0..n {
        let lo = if minus.alive[i] {
            minus.mass[i]
        } else {
            T::zero()
        };
        let hi = if plus.alive[i] {
            plus.mass[i]
        } else {
            T::zero()
        };
        if lo > hi || (minus.alive[i] && !plus.alive[i]) {
            return Err(Error::Misaligned(format!(
                "particle {i}: minus mass exceeds plus mass"
            )));
        }
    }
    let x_plus: Vec<f64> = (0..n)
        .map(|i| {
            if plus.alive[i] {
                plus.mass[i].f64()
            } else {
                0.0
            }
        })
        .collect();
    let x_minus: Vec<f64> = (0..n)
        .map(|i| {
            if minus.alive[i] {
                minus.mass[i].f64()
            } else {
                0.0
            }
        })
        .collect();
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &x in &x_plus {
        acc += x;
        cumulative.push(acc);
    }
    let sq: f64 = x_plus.iter().map(|x| x * x).sum();
    let rate = (acc * acc - sq) / 2.0;

    let mut rng = rng_from_seed(seed);
    let mut uf_minus = crate::unionfind::UnionFind::new(n);
    let mut uf_plus = crate::unionfind::UnionFind::new(n);
    let draw = |rng: &mut crate::rng::SimRng| {
        let u = rng.random::<f64>() * acc;
        cumulative.partition_point(|&c| c <= u).min(n - 1)
    };
    let horizon = (t_end - plus.time).f64();
    let mut t = 0.0;
    if rate > 0.0 {
        loop {
            let e: f64 = Exp1.sample(&mut rng);
            t += e / rate;
            if t > horizon {
                break;
            }
            let (i, j) = loop {
                let i = draw(&mut rng);
                let j = draw(&mut rng);
                if i != j && x_plus[i] > 0.0 && x_plus[j] > 0.0 {
                    break (i, j);
                }
            };
            let accept = x_minus[i] * x_minus[j] / (x_plus[i] * x_plus[j]);
            let u: f64 = rng.random();
            uf_plus.union(i as u32, j as u32);
            if u < accept {
                uf_minus.union(i as u32, j as u32);
            }
        }
    }
    let minus_blocks = uf_minus.labels();
    let plus_blocks = uf_plus.labels();
    let collapse = |src: &CoalescentState<T>, blocks: &[u32]| {
        let mut out = src.clone();
        for i in 0..n {
            let b = blocks[i] as usize;
            if b != i {
                out.mass[b] = out.mass[b] + src.mass[i];
                out.weight[b] = out.weight[b] + src.weight[i];
                out.mass[i] = T::zero();
                out.weight[i] = T::zero();
                out.alive[i] = false;
            }
        }
        out.time = t_end;
        out
    };
    Ok(CoupledRun {
        minus: collapse(minus, &minus_blocks),
        plus: collapse(plus, &plus_blocks),
        minus_blocks,
        plus_blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fenwick_search() {
        let f = Fenwick::new(vec![1.0, 0.0, 2.0, 3.0]);
        assert_eq!(f.total(), 6.0);
        assert_eq!(f.search(0.5), 0);
        assert_eq!(f.search(1.0), 2);
        assert_eq!(f.search(2.99), 2);
        assert_eq!(f.search(3.0), 3);
        assert_eq!(f.search(5.99), 3);
    }

    #[test]
    fn single_particle_is_inert() {
        let s = CoalescentState::from_masses(vec![3.0]).unwrap();
        let out = simulate(&s, 100.0, 1).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.state.time, 100.0);
    }

    #[test]
    fn rejects_time_reversal_and_misalignment() {
        let mut s = CoalescentState::from_masses(vec![1.0, 2.0]).unwrap();
        s.time = 2.0;
        assert!(matches!(
            simulate(&s, 1.0, 0),
            Err(Error::TimeReversal { .. })
        ));
        assert!(CoalescentState::new(vec![1.0], vec![1.0, 2.0]).is_err());
        let a = CoalescentState::from_masses(vec![1.0, 2.0]).unwrap();
        let b = CoalescentState::from_masses(vec![1.0]).unwrap();
        assert!(matches!(
            subgraph_couple(&a, &b, 1.0, 0),
            Err(Error::Misaligned(_))
        ));
        let big = CoalescentState::from_masses(vec![2.0, 2.0]).unwrap();
        assert!(subgraph_couple(&big, &a, 1.0, 0).is_err());
    }

    #[test]
    fn zero_mass_is_inert() {
        let s = CoalescentState::new(vec![0.0, 1.0, 1.0], vec![5.0, 1.0, 1.0]).unwrap();
        for seed in 0..50 {
            let out = simulate(&s, 50.0, seed).unwrap();
            assert!(out.state.alive[0]);
            assert_eq!(out.state.weight[0], 5.0);
        }
    }

    #[test]
    fn merge_log_csv() {
        let s = CoalescentState::from_masses(vec![1.0, 1.0]).unwrap();
        let out = simulate(&s, 1e6, 3).unwrap();
        assert_eq!(out.log.len(), 1);
        let mut buf = Vec::new();
        write_merge_log(&out.log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,i,j,new_mass,new_weight\n"));
        assert!(text.contains(",0,1,2,2\n"));
    }

    #[test]
    fn identical_inputs_couple_identically() {
        let s = CoalescentState::from_masses(vec![0.5, 1.0, 0.2, 0.7, 1.3]).unwrap();
        for seed in 0..20 {
            let r = subgraph_couple(&s, &s, 2.0, seed).unwrap();
            assert_eq!(r.minus_blocks, r.plus_blocks);
            assert_eq!(r.minus, r.plus);
        }
    }

    #[test]
    fn zeroed_particle_never_merges_in_minus() {
        let plus = CoalescentState::from_masses(vec![0.5, 1.0, 0.2, 0.7]).unwrap();
        let minus = CoalescentState::from_masses(vec![0.5, 0.0, 0.2, 0.7]).unwrap();
        for seed in 0..50 {
            let r = subgraph_couple(&minus, &plus, 3.0, seed).unwrap();
            assert!(r
                .minus_blocks
                .iter()
                .enumerate()
                .all(|(i, &b)| (b == 1) == (i == 1)));
        }
    }

    #[test]
    fn f32_runs() {
        let s: CoalescentState<f32> =
            CoalescentState::from_masses(vec![0.5, 1.0, 0.25, 2.0]).unwrap();
        let out = simulate(&s, 10.0, 5).unwrap();
        assert!((out.state.total_mass() - 3.75).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn conservation_and_rate_bookkeeping(
            masses in proptest::collection::vec(0.0f64..3.0, 1..60),
            t in 0.0f64..2.0,
            seed in any::<u64>(),
        ) {
            let weights: Vec<f64> = masses.iter().map(|x| x * 0.5 + 1.0).collect();
            let s = CoalescentState::new(masses.clone(), weights.clone()).unwrap();
            let out = simulate_with(&s, t, seed, SimulateOptions { record_log: true, audit_rate: true }).unwrap();
            let m0: f64 = masses.iter().sum();
            let w0: f64 = weights.iter().sum();
            prop_assert!((out.state.total_mass() - m0).abs() <= 1e-9 * m0.max(1.0));
            prop_assert!((out.state.total_weight() - w0).abs() <= 1e-9 * w0.max(1.0));
            prop_assert!(out.max_rate_error < 1e-9);
            prop_assert!(out.log.windows(2).all(|w| w[0].time <= w[1].time));
        }

        #[test]
        fn coupling_refines(
            pairs in proptest::collection::vec((0.0f64..2.0, 0.0f64..1.0), 2..40),
            seed in any::<u64>(),
        ) {
            let plus: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let minus: Vec<f64> = pairs.iter().map(|p| p.0 * p.1).collect();
            let a = CoalescentState::from_masses(minus).unwrap();
            let b = CoalescentState::from_masses(plus).unwrap();
            let r = subgraph_couple(&a, &b, 1.5, seed).unwrap();
            prop_assert!(r.refinement_holds());
            prop_assert!((r.plus.total_mass() - b.total_mass()).abs() < 1e-9);
        }
    }
}
