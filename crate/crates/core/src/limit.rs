//! Limit objects: Brownian motion with parabolic drift
//! `B(s) = (√η/μ) W(s) + λs − ηs²/(2μ³)`, its reflection above past minima,
//! ordered excursion lengths, and Poisson marks with intensity `β·W`.

use std::io::Write;

use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::degrees::ProbabilityVector;
use crate::rng::{rng_from_seed, substream, SimRng};
use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitParams<T> {
    pub mu: T,
    pub eta: T,
    pub beta: T,
    pub lambda: T,
}

impl<T: Scalar> LimitParams<T> {
    pub fn new(mu: T, eta: T, lambda: T) -> Result<Self> {
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(Error::InvalidConfig(format!("mu = {mu} must be positive")));
        }
        if !(eta > T::zero()) || !eta.is_finite() {
            return Err(Error::DegenerateLimit(eta.f64()));
        }
        Ok(Self {
            mu,
            eta,
            beta: T::one() / mu,
            lambda,
        })
    }

    pub fn with_lambda(self, lambda: T) -> Self {
        Self { lambda, ..self }
    }

    /// Diffusion coefficient `√η/μ`.
    pub fn sigma(&self) -> T {
        self.eta.sqrt() / self.mu
    }

    /// `E[B(t)] = λt − ηt²/(2μ³)`.
    pub fn mean_at(&self, t: T) -> T {
        self.lambda * t - self.eta * t * t / (T::of(2.0) * self.mu.powi(3))
    }

    /// `Var B(t) = ηt/μ²`.
    pub fn variance_at(&self, t: T) -> T {
        self.eta * t / (self.mu * self.mu)
    }

    /// Expected `Σ length²` over excursions after `horizon`, where the drift
    /// `v(s) = ηs/μ³ − λ` dominates and excursions are short:
    /// `∫_T^∞ σ²/v(s)² ds = μ/(ηT/μ³ − λ)`. `None` while the drift at
    /// `horizon` is not yet negative.
    pub fn tail_square_length(&self, horizon: T) -> Option<T> {
        let v = self.eta * horizon / self.mu.powi(3) - self.lambda;
        (v > T::zero()).then(|| self.mu / v)
    }

    pub fn cast<U: Scalar>(&self) -> LimitParams<U> {
        LimitParams {
            mu: U::of(self.mu.f64()),
            eta: U::of(self.eta.f64()),
            beta: U::of(self.beta.f64()),
            lambda: U::of(self.lambda.f64()),
        }
    }
}

/// `μ = E[D]`, `η = E[D³]E[D] − E[D²]²`, `β = 1/μ`.
pub fn limit_params<T: Scalar>(dist: &ProbabilityVector, lambda: T) -> Result<LimitParams<T>> {
    let s1 = dist.moment(1);
    let s2 = dist.moment(2);
    let s3 = dist.moment(3);
    let eta = s3 * s1 - s2 * s2;
    // exact zero for point masses is lost to rounding; treat tiny η as zero
    if eta <= 1e-12 * s2 * s2 {
        return Err(Error::DegenerateLimit(eta));
    }
    LimitParams::new(T::of(s1), T::of(eta), lambda)
}

/// Limit data for percolation at `p = 1/ν`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PercolationLimit<T> {
    /// Parameters of the exploded degree law `D̃`, with the caller's λ.
    pub params: LimitParams<T>,
    pub zeta: T,
    pub sqrt_nu: T,
    pub exploded_law: ProbabilityVector,
}

impl<T: Scalar> PercolationLimit<T> {
    /// Sizes `√ν·ζ^{2/3}·γ^λ`, as stated for the percolation limit.
    pub fn stated_scaling(&self) -> Scaling<T> {
        Scaling {
            size: self.sqrt_nu * self.zeta.powf(T::of(2.0 / 3.0)),
            lambda: T::one(),
        }
    }

    /// Sizes `ν^{-1/2}·ζ^{2/3}·γ^{λζ^{1/3}}`: the exploded graph on
    /// `ñ ≈ ζn` vertices has window parameter `λζ^{1/3}`, and removing the
    /// red vertices keeps a fraction `√p = ν^{-1/2}` of each component.
    pub fn rescaled_scaling(&self) -> Scaling<T> {
        Scaling {
            size: self.zeta.powf(T::of(2.0 / 3.0)) / self.sqrt_nu,
            lambda: self.zeta.cbrt(),
        }
    }
}

fn binomial_pmf(l: u32, j: u32, q: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..j {
        c *= (l - i) as f64 / (i + 1) as f64;
    }
    c * q.powi(j as i32) * (1.0 - q).powi((l - j) as i32)
}

/// Exploded law `D̃` at `p = 1/ν`: a degree-`l` vertex keeps each half-edge
/// with probability `√p`, and the `μ(1−√p)` detached half-edges per vertex
/// become degree-one vertices; normalized by `ζ = 1 + μ(1−√p)`.
pub fn percolation_limit_params<T: Scalar>(
    dist: &ProbabilityVector,
    nu: f64,
    lambda: T,
) -> Result<PercolationLimit<T>> {
    if !(nu > 1.0) || !nu.is_finite() {
        return Err(Error::NotSupercritical(nu));
    }
    let q = (1.0 / nu).sqrt();
    let mu = dist.mean();
    let zeta = 1.0 + mu * (1.0 - q);
    let d_max = dist.support().iter().map(|&(k, _)| k).max().unwrap_or(0);
    let mut weights = vec![0.0; d_max as usize + 1];
    for &(l, r) in dist.support() {
        for j in 0..=l {
            weights[j as usize] += r * binomial_pmf(l, j, q);
        }
    }
    if weights.len() < 2 {
        weights.resize(2, 0.0);
    }
    weights[1] += mu * (1.0 - q);
    let law = ProbabilityVector::from_weights(
        weights
            .iter()
            .enumerate()
            .map(|(k, &w)| (k as u32, w / zeta)),
    )?;
    let params = limit_params(&law, lambda)?;
    Ok(PercolationLimit {
        params,
        zeta: T::of(zeta),
        sqrt_nu: T::of(nu.sqrt()),
        exploded_law: law,
    })
}

/// Multipliers applied to a limit sample: lengths are multiplied by `size`
/// and the path is sampled at `λ·lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling<T> {
    pub size: T,
    pub lambda: T,
}

impl<T: Scalar> Scaling<T> {
    pub fn identity() -> Self {
        Self {
            size: T::one(),
            lambda: T::one(),
        }
    }
}

impl<T: Scalar> Default for Scaling<T> {
    fn default() -> Self {
        Self::identity()
    }
}

/// A maximal run of positive grid values `W[l..r]`; `W[r] = 0` unless
/// the run reaches the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Excursion<T> {
    pub l: usize,
    pub r: usize,
    pub length: T,
    /// Trapezoid integral of `W` over `[l−1, r]`.
    pub area: T,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExcursionSample<T> {
    pub dt: T,
    pub horizon: T,
    /// Unreflected path `B` on the grid.
    pub b: Vec<T>,
    /// Reflected path `W = B − min B`.
    pub w: Vec<T>,
    /// In time order.
    pub excursions: Vec<Excursion<T>>,
    /// Parallel to `excursions` once marked.
    pub marks: Vec<u64>,
}

impl<T: Scalar> ExcursionSample<T> {
    /// Wraps a reflected path given on the grid `0, dt, 2dt, …`.
    pub fn from_path(w: Vec<T>, dt: T) -> Self {
        let horizon = dt * T::of_usize(w.len().saturating_sub(1));
        let mut s = Self {
            dt,
            horizon,
            b: Vec::new(),
            w,
            excursions: Vec::new(),
            marks: Vec::new(),
        };
        s.excursions = extract_excursions(&s);
        s
    }

    /// Lengths sorted non-increasing.
    pub fn ordered_lengths(&self) -> Vec<T> {
        let mut v: Vec<T> = self.excursions.iter().map(|e| e.length).collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v
    }

    /// `(length, marks)` in U⁰↓ order; requires marks.
    pub fn ordered(&self) -> Vec<LimitEntry<T>> {
        let mut v: Vec<LimitEntry<T>> = self
            .excursions
            .iter()
            .zip(&self.marks)
            .map(|(e, &m)| LimitEntry {
                length: e.length,
                marks: m,
                truncated: e.truncated,
            })
            .collect();
        sort_entries(&mut v);
        v
    }
}

/// Euler scheme with midpoint drift on `[0, T]`, step `dt`.
pub fn sample_reflected<T: Scalar>(
    params: &LimitParams<T>,
    horizon: T,
    dt: T,
    seed: u64,
) -> Result<ExcursionSample<T>> {
    let steps = grid_steps(horizon, dt)?;
    let mut driver = Driver::new(params, dt, seed);
    let mut b = Vec::with_capacity(steps + 1);
    let mut w = Vec::with_capacity(steps + 1);
    let (mut cur, mut min) = (T::zero(), T::zero());
    b.push(cur);
    w.push(T::zero());
    for k in 1..=steps {
        cur = cur + driver.increment(k);
        if cur < min {
            min = cur;
        }
        b.push(cur);
        w.push(cur - min);
    }
    let mut s = ExcursionSample {
        dt,
        horizon,
        b,
        w,
        excursions: Vec::new(),
        marks: Vec::new(),
    };
    s.excursions = extract_excursions(&s);
    Ok(s)
}

fn grid_steps<T: Scalar>(horizon: T, dt: T) -> Result<usize> {
    if !(horizon > T::zero() && dt > T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "horizon {horizon} and step {dt} must be positive"
        )));
    }
    let ratio = (horizon / dt).f64();
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) || steps < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "horizon/step = {ratio} is not an integer"
        )));
    }
    Ok(steps as usize)
}

/// Gaussian increments of the drifted motion.
struct Driver<T> {
    rng: SimRng,
    scale: T,
    lambda_dt: T,
    curvature: T,
}

impl<T: Scalar> Driver<T> {
    fn new(params: &LimitParams<T>, dt: T, seed: u64) -> Self {
        Self {
            rng: rng_from_seed(seed),
            scale: params.sigma() * dt.sqrt(),
            lambda_dt: params.lambda * dt,
            curvature: params.eta / params.mu.powi(3) * dt * dt,
        }
    }

    fn normal(&mut self) -> T {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        T::of(z)
    }

    /// Drift of step `k` evaluated at `(k − ½)dt`.
    fn drift(&self, k: usize) -> T {
        self.lambda_dt - self.curvature * (T::of_usize(k) - T::of(0.5))
    }

    fn increment(&mut self, k: usize) -> T {
        self.scale * self.normal() + self.drift(k)
    }
}

/// Maximal positive runs of `W`: the run occupying indices `l..r` has
/// length `(r − l)·dt`.
pub fn extract_excursions<T: Scalar>(sample: &ExcursionSample<T>) -> Vec<Excursion<T>> {
    let mut tracker = Tracker::new(sample.dt);
    for (i, &w) in sample.w.iter().enumerate() {
        if let Some(e) = tracker.push(i, w) {
            tracker.completed.push(e);
        }
    }
    if let Some(e) = tracker.finish() {
        tracker.completed.push(e);
    }
    tracker.completed
}

/// Incremental excursion extraction over a stream of `W` values.
struct Tracker<T> {
    dt: T,
    start: Option<usize>,
    /// Sum of interior values and the last value (for the trapezoid).
    sum: T,
    last: T,
    last_index: usize,
    completed: Vec<Excursion<T>>,
}

impl<T: Scalar> Tracker<T> {
    fn new(dt: T) -> Self {
        Self {
            dt,
            start: None,
            sum: T::zero(),
            last: T::zero(),
            last_index: 0,
            completed: Vec::new(),
        }
    }

    fn push(&mut self, i: usize, w: T) -> Option<Excursion<T>> {
        self.last_index = i;
        if w > T::zero() {
            if self.start.is_none() {
                self.start = Some(i);
                self.sum = T::zero();
            }
            self.sum = self.sum + w;
            self.last = w;
            None
        } else {
            let l = self.start.take()?;
            Some(Excursion {
                l,
                r: i,
                length: T::of_usize(i - l) * self.dt,
                area: self.sum * self.dt,
                truncated: false,
            })
        }
    }

    /// Closes a run still open at the last grid point.
    fn finish(&mut self) -> Option<Excursion<T>> {
        let l = self.start.take()?;
        let r = self.last_index + 1;
        Some(Excursion {
            l,
            r,
            length: T::of_usize(r - l) * self.dt,
            area: (self.sum - self.last / T::of(2.0)) * self.dt,
            truncated: true,
        })
    }
}

fn mark_count<T: Scalar>(beta: T, area: T, seed: u64, start: usize) -> u64 {
    let mean = (beta * area).f64();
    if !(mean > 0.0) {
        return 0;
    }
    let mut rng = rng_from_seed(substream(seed, start as u64));
    let d = Poisson::new(mean).expect("finite positive mean");
    d.sample(&mut rng) as u64
}

/// Marks per excursion: Poisson with mean `β·area`. Each excursion draws from
/// its own stream keyed by its start index.
pub fn mark_excursions<T: Scalar>(sample: &mut ExcursionSample<T>, beta: T, seed: u64) -> &[u64] {
    sample.marks = sample
        .excursions
        .iter()
        .map(|e| mark_count(beta, e.area, seed, e.l))
        .collect();
    &sample.marks
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LimitEntry<T> {
    pub length: T,
    pub marks: u64,
    pub truncated: bool,
}

/// Lengths non-increasing, ties by marks non-increasing.
pub fn sort_entries<T: Scalar>(v: &mut [LimitEntry<T>]) {
    v.sort_by(|a, b| {
        b.length
            .partial_cmp(&a.length)
            .unwrap()
            .then(b.marks.cmp(&a.marks))
    });
}

/// The `top_k` largest `(length, marks)` pairs of one limit path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitVector<T> {
    pub entries: Vec<LimitEntry<T>>,
}

impl<T: Scalar> LimitVector<T> {
    pub fn length(&self, rank: usize) -> T {
        self.entries.get(rank).map_or(T::zero(), |e| e.length)
    }

    pub fn marks(&self, rank: usize) -> u64 {
        self.entries.get(rank).map_or(0, |e| e.marks)
    }

    /// True when the largest excursion reaches the horizon.
    pub fn truncated(&self) -> bool {
        self.entries.first().is_some_and(|e| e.truncated)
    }
}

/// Keeps every excursion whose length could still be among the top `k`.
struct TopK<T> {
    k: usize,
    items: Vec<Excursion<T>>,
    current: Option<T>,
}

impl<T: Scalar> TopK<T> {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::new(),
            current: None,
        }
    }

    fn threshold(&self) -> Option<T> {
        if self.items.len() < self.k || self.k == 0 {
            return None;
        }
        let mut lengths: Vec<T> = self.items.iter().map(|e| e.length).collect();
        let k = self.k - 1;
        lengths.select_nth_unstable_by(k, |a, b| b.partial_cmp(a).unwrap());
        Some(lengths[k])
    }

    fn push(&mut self, e: Excursion<T>) {
        if self.k == 0 {
            return;
        }
        if let Some(t) = self.current {
            if e.length < t {
                return;
            }
        }
        self.items.push(e);
        if self.items.len() >= self.k.saturating_mul(4).saturating_add(16) {
            if let Some(t) = self.threshold() {
                self.items.retain(|x| x.length >= t);
                self.current = Some(t);
            }
        }
    }
}

/// Streaming sampler: the path is never stored. Equal, entry for entry, to
/// [`sample_limit_vector_full`] with the same arguments.
pub fn sample_limit_vector<T: Scalar>(
    params: &LimitParams<T>,
    horizon: T,
    dt: T,
    seed: u64,
    top_k: usize,
    scaling: Scaling<T>,
) -> Result<LimitVector<T>> {
    let params = params.with_lambda(params.lambda * scaling.lambda);
    let steps = grid_steps(horizon, dt)?;
    let mut driver = Driver::new(&params, dt, substream(seed, 0));
    let mut tracker = Tracker::new(dt);
    let mut top = TopK::new(top_k);
    let (mut cur, mut min) = (T::zero(), T::zero());
    tracker.push(0, T::zero());
    for k in 1..=steps {
        cur = cur + driver.increment(k);
        if cur < min {
            min = cur;
        }
        if let Some(e) = tracker.push(k, cur - min) {
            top.push(e);
        }
    }
    if let Some(e) = tracker.finish() {
        top.push(e);
    }
    Ok(finish_vector(top.items, &params, seed, top_k, scaling))
}

fn finish_vector<T: Scalar>(
    excursions: Vec<Excursion<T>>,
    params: &LimitParams<T>,
    seed: u64,
    top_k: usize,
    scaling: Scaling<T>,
) -> LimitVector<T> {
    let mark_seed = substream(seed, 1);
    let mut entries: Vec<LimitEntry<T>> = excursions
        .iter()
        .map(|e| LimitEntry {
            length: e.length,
            marks: mark_count(params.beta, e.area, mark_seed, e.l),
            truncated: e.truncated,
        })
        .collect();
    sort_entries(&mut entries);
    entries.truncate(top_k);
    for e in &mut entries {
        e.length = e.length * scaling.size;
    }
    LimitVector { entries }
}

/// Same output as [`sample_limit_vector`], through the stored path.
pub fn sample_limit_vector_full<T: Scalar>(
    params: &LimitParams<T>,
    horizon: T,
    dt: T,
    seed: u64,
    top_k: usize,
    scaling: Scaling<T>,
) -> Result<LimitVector<T>> {
    let params = params.with_lambda(params.lambda * scaling.lambda);
    let mut sample = sample_reflected(&params, horizon, dt, substream(seed, 0))?;
    mark_excursions(&mut sample, params.beta, substream(seed, 1));
    let mut entries = sample.ordered();
    entries.truncate(top_k);
    for e in &mut entries {
        e.length = e.length * scaling.size;
    }
    Ok(LimitVector { entries })
}

/// Coarse (step `dt`) and fine (step `dt/2`) top-`k` vectors driven by the
/// same Brownian path: each coarse increment uses `(Z₁+Z₂)/√2` from the two
/// fine increments it spans.
pub fn sample_refinement_pair<T: Scalar>(
    params: &LimitParams<T>,
    horizon: T,
    dt: T,
    seed: u64,
    top_k: usize,
) -> Result<(LimitVector<T>, LimitVector<T>)> {
    let steps = grid_steps(horizon, dt)?;
    let mut coarse = Driver::new(params, dt, substream(seed, 0));
    let fine = Driver::<T>::new(params, dt / T::of(2.0), 0);
    let root2 = T::of(2.0).sqrt();
    let mut tc = Tracker::new(dt);
    let mut tf = Tracker::new(dt / T::of(2.0));
    let mut topc = TopK::new(top_k);
    let mut topf = TopK::new(top_k);
    let (mut bc, mut mc, mut bf, mut mf) = (T::zero(), T::zero(), T::zero(), T::zero());
    tc.push(0, T::zero());
    tf.push(0, T::zero());
    for k in 1..=steps {
        let z1 = coarse.normal();
        let z2 = coarse.normal();
        for (j, z) in [(2 * k - 1, z1), (2 * k, z2)] {
            bf = bf + fine.scale * z + fine.drift(j);
            if bf < mf {
                mf = bf;
            }
            if let Some(e) = tf.push(j, bf - mf) {
                topf.push(e);
            }
        }
        bc = bc + coarse.scale * (z1 + z2) / root2 + coarse.drift(k);
        if bc < mc {
            mc = bc;
        }
        if let Some(e) = tc.push(k, bc - mc) {
            topc.push(e);
        }
    }
    for (t, top) in [(&mut tc, &mut topc), (&mut tf, &mut topf)] {
        if let Some(e) = t.finish() {
            top.push(e);
        }
    }
    let id = Scaling::identity();
    Ok((
        finish_vector(topc.items, params, seed, top_k, id),
        finish_vector(topf.items, params, seed, top_k, id),
    ))
}

/// Horizon for which the mean top excursion length over a pilot ensemble is
/// below a quarter of it; doubles from `initial`.
pub fn calibrate_horizon<T: Scalar>(
    params: &LimitParams<T>,
    initial: T,
    pilot_paths: usize,
    seed: u64,
) -> Result<T> {
    let mut horizon = initial;
    for _ in 0..16 {
        let dt = horizon / T::of(4096.0);
        let mut total = T::zero();
        for i in 0..pilot_paths.max(1) {
            let v = sample_limit_vector(
                params,
                horizon,
                dt,
                substream(seed, i as u64),
                1,
                Scaling::identity(),
            )?;
            total = total + v.length(0);
        }
        let mean = total / T::of_usize(pilot_paths.max(1));
        if mean < horizon / T::of(4.0) {
            return Ok(horizon);
        }
        horizon = horizon * T::of(2.0);
    }
    Err(Error::InvalidConfig(
        "no horizon found for the limit sampler".into(),
    ))
}

/// Ensemble CSV: `replica,rank,length,marks,truncated_flag`, ranks from 1.
pub fn write_ensemble_csv<T: Scalar, W: Write>(
    vectors: &[LimitVector<T>],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "replica,rank,length,marks,truncated_flag")?;
    for (replica, v) in vectors.iter().enumerate() {
        for (rank, e) in v.entries.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                replica,
                rank + 1,
                e.length,
                e.marks,
                u8::from(e.truncated)
            )?;
        }
    }
    Ok(())
}
