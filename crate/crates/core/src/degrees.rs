//! Degree sequences, their moment statistics, and construction of sequences
//! inside the critical window.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::{Error, Result, Scalar};

/// Degrees `d_1..d_n` with an even, positive total.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeSequence {
    degrees: Vec<u32>,
}

impl DegreeSequence {
    pub fn new(degrees: Vec<u32>) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::EmptySequence);
        }
        let total: u64 = degrees.iter().map(|&d| d as u64).sum();
        if total == 0 {
            return Err(Error::ZeroTotalDegree);
        }
        if total % 2 == 1 {
            return Err(Error::OddTotalDegree(total));
        }
        Ok(Self { degrees })
    }

    /// Builds a sequence from `degree -> count`, vertices listed in increasing degree.
    pub fn from_counts(counts: &BTreeMap<u32, u64>) -> Result<Self> {
        let mut degrees = Vec::new();
        for (&d, &c) in counts {
            degrees.extend(std::iter::repeat_n(d, c as usize));
        }
        Self::new(degrees)
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn total_degree(&self) -> u64 {
        self.degrees.iter().map(|&d| d as u64).sum()
    }

    pub fn counts(&self) -> BTreeMap<u32, u64> {
        let mut counts = BTreeMap::new();
        for &d in &self.degrees {
            *counts.entry(d).or_insert(0) += 1;
        }
        counts
    }

    pub fn stats<T: Scalar>(&self) -> DegreeStats<T> {
        DegreeStats::from_degrees(&self.degrees).expect("validated sequence")
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.degrees
    }
}

/// Empirical moments of a degree sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeStats<T> {
    pub n: usize,
    pub ell_n: u64,
    pub mu_n: T,
    pub sigma2_n: T,
    pub sigma3_n: T,
    pub nu_n: T,
    pub d_max: u32,
    sum_d: u128,
    sum_d2: u128,
    sum_d3: u128,
}

impl<T: Scalar> DegreeStats<T> {
    pub fn from_degrees(degrees: &[u32]) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::EmptySequence);
        }
        let (mut s1, mut s2, mut s3) = (0u128, 0u128, 0u128);
        let mut d_max = 0;
        for &d in degrees {
            let d128 = d as u128;
            s1 += d128;
            s2 += d128 * d128;
            s3 += d128 * d128 * d128;
            d_max = d_max.max(d);
        }
        if s1 == 0 {
            return Err(Error::ZeroTotalDegree);
        }
        let n = degrees.len();
        let nf = n as f64;
        Ok(Self {
            n,
            ell_n: s1 as u64,
            mu_n: T::of(s1 as f64 / nf),
            sigma2_n: T::of(s2 as f64 / nf),
            sigma3_n: T::of(s3 as f64 / nf),
            nu_n: T::of((s2 - s1) as f64 / s1 as f64),
            d_max,
            sum_d: s1,
            sum_d2: s2,
            sum_d3: s3,
        })
    }

    /// `ν_n = Σ d_i(d_i − 1) / Σ d_i` as a reduced fraction.
    pub fn nu_exact(&self) -> Ratio<u128> {
        Ratio::new(self.sum_d2 - self.sum_d, self.sum_d)
    }

    /// `(Σd, Σd², Σd³)` as exact integers.
    pub fn power_sums(&self) -> (u128, u128, u128) {
        (self.sum_d, self.sum_d2, self.sum_d3)
    }
}

/// A degree law `P(D = k) = r_k` on finitely many degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    support: Vec<(u32, f64)>,
}

impl ProbabilityVector {
    pub fn new(support: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
        for (k, r) in support {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "probability {r} for degree {k}"
                )));
            }
            *merged.entry(k).or_insert(0.0) += r;
        }
        let total: f64 = merged.values().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        let support: Vec<(u32, f64)> = merged.into_iter().filter(|&(_, r)| r > 0.0).collect();
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        Ok(Self { support })
    }

    /// Normalizes non-negative weights into a law.
    pub fn from_weights(weights: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let w: Vec<(u32, f64)> = weights.into_iter().collect();
        let total: f64 = w.iter().map(|&(_, x)| x).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!("total weight {total}")));
        }
        let mut v: Vec<(u32, f64)> = w.into_iter().map(|(k, x)| (k, x / total)).collect();
        // absorb rounding so the sum is within 1e-12 of one
        let s: f64 = v.iter().map(|&(_, x)| x).sum();
        if let Some(last) = v.iter_mut().filter(|(_, x)| *x > 0.0).last() {
            last.1 += 1.0 - s;
        }
        Self::new(v)
    }

    pub fn support(&self) -> &[(u32, f64)] {
        &self.support
    }

    pub fn prob(&self, k: u32) -> f64 {
        self.support
            .iter()
            .find(|&&(d, _)| d == k)
            .map_or(0.0, |&(_, r)| r)
    }

    /// `E[D^r]`.
    pub fn moment(&self, r: i32) -> f64 {
        self.support
            .iter()
            .map(|&(k, p)| p * (k as f64).powi(r))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// `E[D(D−1)] / E[D]`.
    pub fn nu(&self) -> f64 {
        let m1 = self.moment(1);
        (self.moment(2) - m1) / m1
    }

    pub fn total_variation(&self, other: &ProbabilityVector) -> f64 {
        let mut keys: Vec<u32> = self
            .support
            .iter()
            .chain(other.support.iter())
            .map(|&(k, _)| k)
            .collect();
        keys.sort_unstable();
        keys.dedup();
        0.5 * keys
            .iter()
            .map(|&k| (self.prob(k) - other.prob(k)).abs())
            .sum::<f64>()
    }

    /// Empirical law of a degree sequence.
    pub fn empirical(ds: &DegreeSequence) -> Self {
        let n = ds.n() as f64;
        Self::from_weights(ds.counts().into_iter().map(|(k, c)| (k, c as f64 / n)))
            .expect("non-empty sequence")
    }
}

/// Draws `n` i.i.d. degrees from `dist`; an odd total is repaired by adding
/// one to the degree of a uniformly chosen vertex.
pub fn sample_iid(dist: &ProbabilityVector, n: usize, seed: u64) -> Result<DegreeSequence> {
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let mut rng = rng_from_seed(seed);
    let mut cumulative = Vec::with_capacity(dist.support.len());
    let mut acc = 0.0;
    for &(_, r) in &dist.support {
        acc += r;
        cumulative.push(acc);
    }
    let last = cumulative.len() - 1;
    let mut degrees: Vec<u32> = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let idx = cumulative.partition_point(|&c| c <= u).min(last);
            dist.support[idx].0
        })
        .collect();
    let total: u64 = degrees.iter().map(|&d| d as u64).sum();
    if total % 2 == 1 {
        let v = rng.random_range(0..n);
        degrees[v] += 1;
    }
    DegreeSequence::new(degrees)
}

/// The one-parameter family used for tuning: degree-1 mass set to `q`,
/// every other degree rescaled by `(1 − q) / (1 − r_1)`.
fn reweight_degree_one(dist: &ProbabilityVector, q: f64) -> Result<ProbabilityVector> {
    let r1 = dist.prob(1);
    let rest = 1.0 - r1;
    if rest <= 0.0 {
        return Err(Error::InfeasibleTarget {
            target: f64::NAN,
            min: 0.0,
            max: 0.0,
        });
    }
    let scale = (1.0 - q) / rest;
    let mut w: Vec<(u32, f64)> = dist
        .support
        .iter()
        .filter(|&&(k, _)| k != 1)
        .map(|&(k, r)| (k, r * scale))
        .collect();
    w.push((1, q));
    ProbabilityVector::from_weights(w)
}

/// The law in the degree-1 family whose `ν` equals `target`, with its degree-1 mass.
pub fn critical_law(dist: &ProbabilityVector, target: f64) -> Result<(ProbabilityVector, f64)> {
    let r1 = dist.prob(1);
    let rest = 1.0 - r1;
    // A = E[D(D-1); D != 1] / rest, B = E[D; D != 1] / rest (conditional on D != 1)
    let (mut a, mut b) = (0.0, 0.0);
    for &(k, r) in &dist.support {
        if k != 1 {
            let kf = k as f64;
            a += r * kf * (kf - 1.0);
            b += r * kf;
        }
    }
    if rest <= 0.0 || b <= 0.0 {
        return Err(Error::InfeasibleTarget {
            target,
            min: 0.0,
            max: 0.0,
        });
    }
    a /= rest;
    b /= rest;
    let nu_max = a / b;
    // (1 - q) a = t (q + (1 - q) b)
    let denom = a - target * b + target;
    let q = (a - target * b) / denom;
    if !(q > 0.0 && q < 1.0) || target <= 0.0 {
        return Err(Error::InfeasibleTarget {
            target,
            min: 0.0,
            max: nu_max,
        });
    }
    Ok((reweight_degree_one(dist, q)?, q))
}

/// Largest-remainder rounding of `n · weights` into integer counts summing to `n`.
fn largest_remainder(weights: &[(u32, f64)], n: u64) -> Vec<(u32, u64)> {
    let total: f64 = weights.iter().map(|&(_, w)| w).sum();
    if total <= 0.0 || n == 0 {
        return weights.iter().map(|&(k, _)| (k, 0)).collect();
    }
    let exact: Vec<f64> = weights.iter().map(|&(_, w)| w / total * n as f64).collect();
    let mut counts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = exact[i] - exact[i].floor();
        let fj = exact[j] - exact[j].floor();
        fj.partial_cmp(&fi).unwrap().then(i.cmp(&j))
    });
    for &i in order.iter().take((n - assigned) as usize) {
        counts[i] += 1;
    }
    weights.iter().map(|&(k, _)| k).zip(counts).collect()
}

fn materialize(law: &ProbabilityVector, n: usize, n_one: u64) -> BTreeMap<u32, u64> {
    let others: Vec<(u32, f64)> = law
        .support()
        .iter()
        .copied()
        .filter(|&(k, _)| k != 1)
        .collect();
    let mut counts: BTreeMap<u32, u64> = largest_remainder(&others, n as u64 - n_one)
        .into_iter()
        .filter(|&(_, c)| c > 0)
        .collect();
    if n_one > 0 {
        counts.insert(1, n_one);
    }
    counts
}

fn counts_nu(counts: &BTreeMap<u32, u64>) -> (f64, u64) {
    let (mut s1, mut s2) = (0u128, 0u128);
    for (&k, &c) in counts {
        s1 += k as u128 * c as u128;
        s2 += (k as u128) * (k as u128) * c as u128;
    }
    if s1 == 0 {
        return (0.0, 0);
    }
    ((s2 - s1) as f64 / s1 as f64, s1 as u64)
}

/// Tolerance on `ν_n` accepted by [`tune_to_critical`].
pub fn critical_tolerance(n: usize) -> f64 {
    (n as f64).powf(-1.0 / 3.0) / 10.0
}

/// Builds a degree sequence with `ν_n ≈ 1 + λ n^{-1/3}` by adjusting the
/// degree-1 mass of `dist`, materializing counts by largest remainder and
/// assigning degrees to vertices in a seeded random order.
pub fn tune_to_critical(
    dist: &ProbabilityVector,
    n: usize,
    lambda: f64,
    seed: u64,
) -> Result<DegreeSequence> {
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let target = 1.0 + lambda * (n as f64).powf(-1.0 / 3.0);
    let tol = critical_tolerance(n);
    let (law, q) = critical_law(dist, target)?;
    let base = (q * n as f64).round() as i64;
    let mut best: Option<(bool, f64, BTreeMap<u32, u64>)> = None;
    for delta in -4i64..=4 {
        let n_one = base + delta;
        if n_one < 1 || n_one > n as i64 {
            continue;
        }
        let counts = materialize(&law, n, n_one as u64);
        let (nu, ell) = counts_nu(&counts);
        if ell == 0 {
            continue;
        }
        let even = ell % 2 == 0;
        let err = (nu - target).abs();
        let better = match &best {
            None => true,
            Some((b_even, b_err, _)) => {
                let ok = err <= tol;
                let b_ok = *b_err <= tol;
                (ok, even && ok, -err) > (b_ok, *b_even && b_ok, -*b_err)
            }
        };
        if better {
            best = Some((even, err, counts));
        }
    }
    let (_, _, counts) = best.ok_or(Error::InfeasibleTarget {
        target,
        min: 0.0,
        max: law.nu(),
    })?;
    let mut degrees: Vec<u32> = Vec::with_capacity(n);
    for (&k, &c) in &counts {
        degrees.extend(std::iter::repeat_n(k, c as usize));
    }
    let mut rng = rng_from_seed(seed);
    degrees.shuffle(&mut rng);
    let total: u64 = degrees.iter().map(|&d| d as u64).sum();
    if total % 2 == 1 {
        let v = rng.random_range(0..n);
        degrees[v] += 1;
    }
    let ds = DegreeSequence::new(degrees)?;
    let nu = ds.stats::<f64>().nu_n;
    if (nu - target).abs() > tol || !ds.degrees().contains(&1) {
        return Err(Error::InfeasibleTarget {
            target,
            min: nu,
            max: nu,
        });
    }
    Ok(ds)
}

/// Deterministic materialization of `dist` on `n` vertices (largest remainder,
/// seeded vertex order, parity repaired as in [`sample_iid`]).
pub fn materialize_law(dist: &ProbabilityVector, n: usize, seed: u64) -> Result<DegreeSequence> {
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let counts = largest_remainder(dist.support(), n as u64);
    let mut degrees = Vec::with_capacity(n);
    for (k, c) in counts {
        degrees.extend(std::iter::repeat_n(k, c as usize));
    }
    let mut rng = rng_from_seed(seed);
    degrees.shuffle(&mut rng);
    let total: u64 = degrees.iter().map(|&d| d as u64).sum();
    if total % 2 == 1 {
        let v = rng.random_range(0..n);
        degrees[v] += 1;
    }
    DegreeSequence::new(degrees)
}
