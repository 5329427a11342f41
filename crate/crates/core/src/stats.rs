//! Two-sample and goodness-of-fit statistics used by the harness.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::rng::rng_from_seed;
use crate::{Error, Result};

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    v
}

/// Sup-distance between the empirical CDFs of `a` and `b`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS statistic with effective size `ne`
/// (Stephens' small-sample correction).
pub fn ks_pvalue(d: f64, ne: f64) -> f64 {
    let rn = ne.sqrt();
    kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let d = ks_distance(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(TestResult {
        statistic: d,
        p_value: ks_pvalue(d, na * nb / (na + nb)),
    })
}

/// One-sample KS against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if a.is_empty() {
        return Err(Error::EmptySample);
    }
    let a = sorted(a);
    let n = a.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in a.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(TestResult {
        statistic: d,
        p_value: ks_pvalue(d, n),
    })
}

/// Merges adjacent categories (left to right) until every pooled expected
/// count is at least `min_expected`; the remainder joins the last group.
fn pool(expected: &[f64], min_expected: f64) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (i, &e) in expected.iter().enumerate() {
        acc += e;
        if acc >= min_expected {
            groups.push(start..i + 1);
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < expected.len() {
        match groups.last_mut() {
            Some(last) => last.end = expected.len(),
            None => groups.push(start..expected.len()),
        }
    }
    groups
}

/// Pearson goodness of fit of `observed` counts against category
/// probabilities `probs` (the last category should carry the tail).
/// Categories are pooled until each expects at least five counts.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<TestResult> {
    if observed.len() != probs.len() {
        return Err(Error::Misaligned(format!(
            "{} counts vs {} probabilities",
            observed.len(),
            probs.len()
        )));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let expected: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let groups = pool(&expected, 5.0);
    let mut stat = 0.0;
    for g in &groups {
        let o: f64 = observed[g.clone()].iter().map(|&x| x as f64).sum();
        let e: f64 = expected[g.clone()].iter().sum();
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
        } else if o > 0.0 {
            stat = f64::INFINITY;
        }
    }
    Ok(TestResult {
        statistic: stat,
        p_value: chi_sf(stat, groups.len().saturating_sub(1)),
    })
}

fn chi_sf(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    if !stat.is_finite() {
        return 0.0;
    }
    1.0 - ChiSquared::new(df as f64).expect("positive df").cdf(stat)
}

/// Chi-square homogeneity test for two samples of non-negative integers.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let k = a.iter().chain(b).copied().max().unwrap_or(0) as usize + 1;
    let mut ca = vec![0u64; k];
    let mut cb = vec![0u64; k];
    a.iter().for_each(|&x| ca[x as usize] += 1);
    b.iter().for_each(|&x| cb[x as usize] += 1);
    chi_square_table(&ca, &cb)
}

/// Homogeneity test on two count vectors over the same categories.
pub fn chi_square_table(ca: &[u64], cb: &[u64]) -> Result<TestResult> {
    if ca.len() != cb.len() {
        return Err(Error::Misaligned("category counts differ".into()));
    }
    let (na, nb) = (ca.iter().sum::<u64>() as f64, cb.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::EmptySample);
    }
    let total = na + nb;
    // smaller of the two expected counts drives pooling
    let expected: Vec<f64> = ca
        .iter()
        .zip(cb)
        .map(|(&x, &y)| (x + y) as f64 * na.min(nb) / total)
        .collect();
    let groups = pool(&expected, 5.0);
    let mut stat = 0.0;
    for g in &groups {
        let oa: f64 = ca[g.clone()].iter().map(|&x| x as f64).sum();
        let ob: f64 = cb[g.clone()].iter().map(|&x| x as f64).sum();
        let col = oa + ob;
        if col == 0.0 {
            continue;
        }
        let ea = col * na / total;
        let eb = col * nb / total;
        stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    Ok(TestResult {
        statistic: stat,
        p_value: chi_sf(stat, groups.len().saturating_sub(1)),
    })
}

fn euclid<const D: usize>(x: &[f64; D], y: &[f64; D]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Energy statistic `2E|X−Y| − E|X−X'| − E|Y−Y'|` (V-statistic form).
pub fn energy_distance<const D: usize>(a: &[[f64; D]], b: &[[f64; D]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mean = |xs: &[[f64; D]], ys: &[[f64; D]]| {
        let mut s = 0.0;
        for x in xs {
            for y in ys {
                s += euclid(x, y);
            }
        }
        s / (xs.len() * ys.len()) as f64
    };
    Ok(2.0 * mean(a, b) - mean(a, a) - mean(b, b))
}

/// Energy-distance two-sample test with a permutation p-value
/// `(1 + #{perm ≥ observed}) / (1 + permutations)`.
pub fn energy_test<const D: usize>(
    a: &[[f64; D]],
    b: &[[f64; D]],
    permutations: usize,
    seed: u64,
) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let pooled: Vec<[f64; D]> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let (na, nb) = (a.len(), b.len());
    let mut dist = vec![0.0f32; n * n];
    let mut total = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            let d = euclid(&pooled[i], &pooled[j]);
            dist[i * n + j] = d as f32;
            dist[j * n + i] = d as f32;
            total += d;
        }
    }
    // with pairwise sums over unordered pairs: total = S_aa + S_bb + S_ab
    let statistic = |in_a: &[bool]| {
        let (mut saa, mut sbb) = (0.0f64, 0.0f64);
        for i in 0..n {
            let row = &dist[i * n..i * n + i];
            let mut ra = 0.0f32;
            let mut rb = 0.0f32;
            for (j, &d) in row.iter().enumerate() {
                if in_a[j] {
                    ra += d;
                } else {
                    rb += d;
                }
            }
            if in_a[i] {
                saa += ra as f64;
            } else {
                sbb += rb as f64;
            }
        }
        let sab = total - saa - sbb;
        2.0 * sab / (na * nb) as f64 - 2.0 * saa / (na * na) as f64 - 2.0 * sbb / (nb * nb) as f64
    };
    let mut labels: Vec<bool> = (0..n).map(|i| i < na).collect();
    let observed = statistic(&labels);
    let mut rng = rng_from_seed(seed);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        if statistic(&labels) >= observed - 1e-9 * observed.abs() {
            exceed += 1;
        }
    }
    Ok(TestResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
    })
}

/// Empirical quantile (type 7).
pub fn quantile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptySample);
    }
    let v = sorted(xs);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub fn mean_and_se(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::EmptySample);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((m, (v / n).sqrt()))
}

/// Sample variance and the standard error of the sample variance
/// (fourth-moment estimate).
pub fn variance_and_se(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 4 {
        return Err(Error::EmptySample);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - (n - 3.0) / (n - 1.0) * m2 * m2) / n).max(0.0).sqrt();
    Ok((var, se))
}

/// Null distribution of a two-sample statistic: the pool is randomly split
/// into disjoint samples of sizes `size_a` and `size_b`, `reps` times.
pub fn split_null<F>(
    pool: &[f64],
    size_a: usize,
    size_b: usize,
    reps: usize,
    seed: u64,
    stat: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    if size_a == 0 || size_b == 0 || size_a + size_b > pool.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot split {} values into {size_a} + {size_b}",
            pool.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut work = pool.to_vec();
    (0..reps)
        .map(|_| {
            let (head, _) = work.partial_shuffle(&mut rng, size_a + size_b);
            stat(&head[..size_a], &head[size_a..])
        })
        .collect()
}

/// Upper `q`-quantile of the split-half KS null for samples of the given sizes.
pub fn ks_null_band(
    pool: &[f64],
    size_a: usize,
    size_b: usize,
    reps: usize,
    q: f64,
    seed: u64,
) -> Result<f64> {
    let null = split_null(pool, size_a, size_b, reps, seed, ks_distance)?;
    quantile(&null, q)
}

/// Percentile bootstrap interval for the KS distance.
pub fn ks_bootstrap_ci(
    a: &[f64],
    b: &[f64],
    reps: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut rng = rng_from_seed(seed);
    let mut stats = Vec::with_capacity(reps);
    let mut ra = vec![0.0; a.len()];
    let mut rb = vec![0.0; b.len()];
    for _ in 0..reps {
        ra.iter_mut()
            .for_each(|x| *x = a[rng.random_range(0..a.len())]);
        rb.iter_mut()
            .for_each(|x| *x = b[rng.random_range(0..b.len())]);
        stats.push(ks_distance(&ra, &rb)?);
    }
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&stats, tail)?, quantile(&stats, 1.0 - tail)?))
}
