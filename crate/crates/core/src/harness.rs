//! Monte Carlo experiments: ensembles of rescaled component sizes over
//! `(n, λ)` grids, limit ensembles, and the statistical comparisons between
//! them.
//!
//! Replicas run in parallel on a rayon pool; every replica draws from its
//! own seed (recorded in the table), so any single replica can be re-run in
//! isolation and reproduces its rows bit for bit.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalescent::{simulate_with, CoalescentState, SimulateOptions};
use crate::degrees::{
    materialize_law, sample_iid, tune_to_critical, DegreeSequence, ProbabilityVector,
};
use crate::dynamic::trajectory;
use crate::exploration::explore_components;
use crate::io::write_atomic;
use crate::limit::{
    percolation_limit_params, sample_limit_vector, LimitParams, LimitVector, Scaling,
};
use crate::multigraph::ComponentVector;
use crate::percolation::{coupled_grid, p_critical, percolate_via_explosion};
use crate::rng::substream;
use crate::stats::{
    chi_square_two_sample, energy_test, ks_bootstrap_ci, ks_distance, ks_null_band, ks_pvalue,
    TestResult,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    /// Configuration model explored directly.
    Direct,
    /// Percolation through the explosion construction, one λ at a time.
    Percolation,
    /// Percolation on one graph, coupled across the λ grid.
    Coupled,
    /// Dynamic construction with the kept-alive coupling.
    Dynamic,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Direct => "direct",
            Pipeline::Percolation => "percolation",
            Pipeline::Coupled => "coupled",
            Pipeline::Dynamic => "dynamic",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Pipeline::Direct),
            "percolation" => Ok(Pipeline::Percolation),
            "coupled" => Ok(Pipeline::Coupled),
            "dynamic" => Ok(Pipeline::Dynamic),
            _ => Err(Error::InvalidConfig(format!("unknown pipeline {s:?}"))),
        }
    }
}

/// How the degree sequence of each replica is built from the law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeMode {
    /// Degree-one mass adjusted so that `ν_n ≈ 1 + λn^{-1/3}` (direct pipeline).
    Tuned,
    /// Largest-remainder counts of the law.
    Materialized,
    /// I.i.d. draws.
    Iid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub dist: ProbabilityVector,
    pub degree_mode: DegreeMode,
    pub n_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub pipeline: Pipeline,
    pub top_k: usize,
    /// Ensemble CSV; when present the run resumes from it and rewrites it
    /// after every batch.
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses rayon's default.
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.replicas == 0 {
            return bad("replica count must be positive");
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return bad("n grid must be non-empty with positive entries");
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !l.is_finite()) {
            return bad("lambda grid must be non-empty and finite");
        }
        if self.lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lambda grid must be strictly increasing");
        }
        if self.top_k == 0 {
            return bad("top_k must be positive");
        }
        if self.degree_mode == DegreeMode::Tuned && self.pipeline != Pipeline::Direct {
            return bad("tuned degrees apply to the direct pipeline only");
        }
        if self.pipeline != Pipeline::Direct && self.dist.nu() <= 1.0 {
            return Err(Error::NotSupercritical(self.dist.nu()));
        }
        Ok(())
    }

    /// Seed of replica `replica` at size `n`.
    pub fn replica_seed(&self, n: usize, replica: usize) -> u64 {
        substream(substream(self.seed, n as u64), replica as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleRow {
    pub pipeline: Pipeline,
    pub n: usize,
    pub lambda: f64,
    pub replica: usize,
    pub seed: u64,
    pub rank: usize,
    pub size: u64,
    pub rescaled_size: f64,
    pub surplus: u64,
    /// Coupled pipeline: whether the replica's partitions refine along the grid.
    pub refined: Option<bool>,
}

pub fn rescale(size: u64, n: usize) -> f64 {
    size as f64 * (n as f64).powf(-2.0 / 3.0)
}

const HEADER: &str = "pipeline,n,lambda,replica,seed,rank,size,rescaled_size,surplus,refined";

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EnsembleTable {
    pub rows: Vec<EnsembleRow>,
}

impl EnsembleTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HEADER}")?;
        for r in &self.rows {
            let refined = match r.refined {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.pipeline,
                r.n,
                r.lambda,
                r.replica,
                r.seed,
                r.rank,
                r.size,
                r.rescaled_size,
                r.surplus,
                refined
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8")
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            msg: format!("line {line}: {msg}"),
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == HEADER => {}
            other => return Err(err(1, format!("unexpected header {other:?}"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let ln = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(err(ln, format!("expected 10 fields, found {}", f.len())));
            }
            fn num<T: FromStr>(s: &str, ln: usize, name: &str) -> std::result::Result<T, String> {
                s.parse()
                    .map_err(|_| format!("line {ln}: bad {name} {s:?}"))
            }
            let parsed = (|| -> std::result::Result<EnsembleRow, String> {
                Ok(EnsembleRow {
                    pipeline: f[0].parse().map_err(|e: Error| e.to_string())?,
                    n: num(f[1], ln, "n")?,
                    lambda: num(f[2], ln, "lambda")?,
                    replica: num(f[3], ln, "replica")?,
                    seed: num(f[4], ln, "seed")?,
                    rank: num(f[5], ln, "rank")?,
                    size: num(f[6], ln, "size")?,
                    rescaled_size: num(f[7], ln, "rescaled_size")?,
                    surplus: num(f[8], ln, "surplus")?,
                    refined: match f[9] {
                        "" => None,
                        "1" => Some(true),
                        "0" => Some(false),
                        s => return Err(format!("line {ln}: bad refined flag {s:?}")),
                    },
                })
            })();
            rows.push(parsed.map_err(|m| Error::Parse {
                path: path.to_path_buf(),
                msg: m,
            })?);
        }
        Ok(Self { rows })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    /// Every row's rescaled size recomputes exactly from its raw size.
    pub fn validate(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.rescaled_size == rescale(r.size, r.n) && r.rank >= 1)
    }

    pub fn rows_for(&self, n: usize, lambda: f64) -> impl Iterator<Item = &EnsembleRow> {
        self.rows
            .iter()
            .filter(move |r| r.n == n && r.lambda == lambda)
    }

    /// Replica indices present at `(n, λ)`, ascending.
    pub fn replicas(&self, n: usize, lambda: f64) -> Vec<usize> {
        let set: BTreeSet<usize> = self.rows_for(n, lambda).map(|r| r.replica).collect();
        set.into_iter().collect()
    }

    fn per_replica<F: Fn(&EnsembleRow) -> f64>(
        &self,
        n: usize,
        lambda: f64,
        rank: usize,
        f: F,
    ) -> Vec<f64> {
        let reps = self.replicas(n, lambda);
        let mut out = vec![0.0; reps.len()];
        for r in self.rows_for(n, lambda).filter(|r| r.rank == rank) {
            let i = reps.binary_search(&r.replica).expect("replica listed");
            out[i] = f(r);
        }
        out
    }

    /// Rescaled size at `rank` (from 1) per replica; 0 when a replica has
    /// fewer components.
    pub fn rank_sizes(&self, n: usize, lambda: f64, rank: usize) -> Vec<f64> {
        self.per_replica(n, lambda, rank, |r| r.rescaled_size)
    }

    pub fn rank_surplus(&self, n: usize, lambda: f64, rank: usize) -> Vec<u64> {
        self.per_replica(n, lambda, rank, |r| r.surplus as f64)
            .into_iter()
            .map(|x| x as u64)
            .collect()
    }
}

fn base_sequence(
    cfg: &ExperimentConfig,
    n: usize,
    lambda: f64,
    seed: u64,
) -> Result<DegreeSequence> {
    match cfg.degree_mode {
        DegreeMode::Tuned => tune_to_critical(&cfg.dist, n, lambda, seed),
        DegreeMode::Materialized => materialize_law(&cfg.dist, n, seed),
        DegreeMode::Iid => sample_iid(&cfg.dist, n, seed),
    }
}

fn push_vector(
    rows: &mut Vec<EnsembleRow>,
    cfg: &ExperimentConfig,
    key: (usize, f64, usize, u64),
    v: &ComponentVector,
    refined: Option<bool>,
) {
    let (n, lambda, replica, seed) = key;
    for (i, e) in v.entries.iter().take(cfg.top_k).enumerate() {
        rows.push(EnsembleRow {
            pipeline: cfg.pipeline,
            n,
            lambda,
            replica,
            seed,
            rank: i + 1,
            size: e.size,
            rescaled_size: rescale(e.size, n),
            surplus: e.surplus,
            refined,
        });
    }
}

/// Rows of one replica, in λ-grid then rank order.
pub fn run_replica(cfg: &ExperimentConfig, n: usize, replica: usize) -> Result<Vec<EnsembleRow>> {
    let seed = cfg.replica_seed(n, replica);
    let mut rows = Vec::new();
    let lambdas = &cfg.lambda_grid;
    match cfg.pipeline {
        Pipeline::Direct => {
            for (i, &lambda) in lambdas.iter().enumerate() {
                let s = substream(seed, i as u64);
                let ds = base_sequence(cfg, n, lambda, substream(s, 0))?;
                let comps = explore_components(&ds, substream(s, 1));
                let v = crate::exploration::explored_vector(&comps, n);
                push_vector(&mut rows, cfg, (n, lambda, replica, seed), &v, None);
            }
        }
        Pipeline::Percolation => {
            let ds = base_sequence(cfg, n, 0.0, substream(seed, 0))?;
            let nu_n = ds.stats::<f64>().nu_n;
            for (i, &lambda) in lambdas.iter().enumerate() {
                let p = p_critical(nu_n, n, lambda)?;
                let out = percolate_via_explosion(&ds, p, substream(seed, 1 + i as u64))?;
                push_vector(
                    &mut rows,
                    cfg,
                    (n, lambda, replica, seed),
                    &out.component_vector(),
                    None,
                );
            }
        }
        Pipeline::Coupled => {
            let ds = base_sequence(cfg, n, 0.0, substream(seed, 0))?;
            let grid = coupled_grid(&ds, lambdas, substream(seed, 1))?;
            let refined = grid.refinement_holds();
            for snap in &grid.snapshots {
                push_vector(
                    &mut rows,
                    cfg,
                    (n, snap.lambda, replica, seed),
                    &snap.component_vector(),
                    Some(refined),
                );
            }
        }
        Pipeline::Dynamic => {
            let ds = base_sequence(cfg, n, 0.0, substream(seed, 0))?;
            for r in trajectory(&ds, lambdas, cfg.top_k, substream(seed, 1))? {
                rows.push(EnsembleRow {
                    pipeline: cfg.pipeline,
                    n,
                    lambda: r.lambda,
                    replica,
                    seed,
                    rank: r.rank,
                    size: r.size,
                    rescaled_size: rescale(r.size, n),
                    surplus: r.surplus,
                    refined: None,
                });
            }
        }
    }
    Ok(rows)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn sort_rows(cfg: &ExperimentConfig, rows: &mut [EnsembleRow]) {
    let n_pos = |n: usize| {
        cfg.n_grid
            .iter()
            .position(|&m| m == n)
            .unwrap_or(usize::MAX)
    };
    let l_pos = |l: f64| {
        cfg.lambda_grid
            .iter()
            .position(|&m| m == l)
            .unwrap_or(usize::MAX)
    };
    rows.sort_by_key(|r| (n_pos(r.n), r.replica, l_pos(r.lambda), r.rank));
}

/// Runs all missing `(n, replica)` cells. With an output path, rows already
/// in the file are kept (resume), and the file is rewritten atomically after
/// every batch, including when a replica fails.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EnsembleTable> {
    cfg.validate()?;
    let mut table = match &cfg.output {
        Some(p) if p.exists() => EnsembleTable::read_csv(p)?,
        _ => EnsembleTable::default(),
    };
    if table.rows.iter().any(|r| r.pipeline != cfg.pipeline) {
        return Err(Error::MetadataMismatch(
            "existing output was produced by another pipeline".into(),
        ));
    }
    let done: BTreeSet<(usize, usize)> = table.rows.iter().map(|r| (r.n, r.replica)).collect();
    let todo: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.replicas).map(move |r| (n, r)))
        .filter(|cell| !done.contains(cell))
        .collect();
    let pool = pool(cfg.jobs)?;
    let batch = (pool.current_num_threads() * 8).max(16);
    let mut failure = None;
    for chunk in todo.chunks(batch) {
        let results: Vec<Result<Vec<EnsembleRow>>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&(n, r)| run_replica(cfg, n, r))
                .collect()
        });
        for res in results {
            match res {
                Ok(rows) => table.rows.extend(rows),
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        sort_rows(cfg, &mut table.rows);
        if let Some(p) = &cfg.output {
            table.save(p)?;
        }
        if let Some(e) = failure {
            return Err(e);
        }
    }
    sort_rows(cfg, &mut table.rows);
    if let Some(p) = &cfg.output {
        table.save(p)?;
    }
    Ok(table)
}

/// Limit vectors sampled at `params` (unscaled λ), with sizes scaled.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitEnsemble {
    pub params: LimitParams<f64>,
    pub scaling: Scaling<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub vectors: Vec<LimitVector<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub horizon: f64,
    pub dt: f64,
    pub replicas: usize,
    pub top_k: usize,
    pub seed: u64,
    pub jobs: usize,
}

pub fn limit_ensemble(
    params: &LimitParams<f64>,
    scaling: Scaling<f64>,
    spec: &LimitSpec,
) -> Result<LimitEnsemble> {
    let pool = pool(spec.jobs)?;
    let vectors = pool.install(|| {
        (0..spec.replicas)
            .into_par_iter()
            .map(|i| {
                sample_limit_vector(
                    params,
                    spec.horizon,
                    spec.dt,
                    substream(spec.seed, i as u64),
                    spec.top_k,
                    scaling,
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(LimitEnsemble {
        params: *params,
        scaling,
        horizon: spec.horizon,
        dt: spec.dt,
        seed: spec.seed,
        vectors,
    })
}

impl LimitEnsemble {
    fn usable(&self) -> impl Iterator<Item = &LimitVector<f64>> {
        self.vectors.iter().filter(|v| !v.truncated())
    }

    /// Length at `rank` (from 1) over non-truncated replicas.
    pub fn lengths(&self, rank: usize) -> Vec<f64> {
        self.usable().map(|v| v.length(rank - 1)).collect()
    }

    pub fn marks(&self, rank: usize) -> Vec<u64> {
        self.usable().map(|v| v.marks(rank - 1)).collect()
    }

    pub fn truncated_count(&self) -> usize {
        self.vectors.iter().filter(|v| v.truncated()).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        crate::limit::write_ensemble_csv(&self.vectors, w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareThresholds {
    /// Quantile of the split-half KS null used as the band.
    pub band_quantile: f64,
    pub null_reps: usize,
    pub bootstrap_reps: usize,
    /// Minimum chi-square p-value for the surplus comparison.
    pub surplus_alpha: f64,
}

impl Default for CompareThresholds {
    fn default() -> Self {
        Self {
            band_quantile: 0.99,
            null_reps: 200,
            bootstrap_reps: 200,
            surplus_alpha: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub ks: f64,
    pub p_value: f64,
    pub ci: (f64, f64),
    pub band: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub n: usize,
    pub lambda: f64,
    pub finite_replicas: usize,
    pub limit_replicas: usize,
    pub limit_truncated: usize,
    pub ranks: Vec<RankReport>,
    pub surplus: Option<TestResult>,
    pub pass: bool,
}

/// Per-rank two-sample KS between the table at `(n, λ)` and the first half
/// of the limit ensemble, judged against the `band_quantile` of KS
/// distances between random disjoint splits of the whole ensemble; plus a
/// chi-square homogeneity test of rank-1 surplus against rank-1 marks.
pub fn compare_to_limit(
    table: &EnsembleTable,
    n: usize,
    lambda: f64,
    limit: &LimitEnsemble,
    ranks: &[usize],
    thresholds: &CompareThresholds,
    seed: u64,
) -> Result<CompareReport> {
    if limit.params.lambda != lambda {
        return Err(Error::MetadataMismatch(format!(
            "table at lambda {lambda}, limit ensemble at lambda {}",
            limit.params.lambda
        )));
    }
    let m = table.replicas(n, lambda).len();
    if m == 0 {
        return Err(Error::MetadataMismatch(format!(
            "no rows at n = {n}, lambda = {lambda}"
        )));
    }
    let mut reports = Vec::new();
    let mut limit_replicas = 0;
    for (i, &rank) in ranks.iter().enumerate() {
        let finite = table.rank_sizes(n, lambda, rank);
        let pool = limit.lengths(rank);
        let half = pool.len() / 2;
        if half == 0 {
            return Err(Error::EmptySample);
        }
        limit_replicas = pool.len();
        let reference = &pool[..half];
        let ks = ks_distance(&finite, reference)?;
        let (na, nb) = (finite.len() as f64, half as f64);
        let s = substream(seed, i as u64);
        let band = ks_null_band(
            &pool,
            finite.len().min(pool.len() - half),
            half,
            thresholds.null_reps,
            thresholds.band_quantile,
            substream(s, 0),
        )?;
        let ci = ks_bootstrap_ci(
            &finite,
            reference,
            thresholds.bootstrap_reps,
            0.95,
            substream(s, 1),
        )?;
        reports.push(RankReport {
            rank,
            ks,
            p_value: ks_pvalue(ks, na * nb / (na + nb)),
            ci,
            band,
            pass: ks <= band,
        });
    }
    let surplus = {
        let finite = table.rank_surplus(n, lambda, 1);
        let marks = limit.marks(1);
        let half = marks.len() / 2;
        if half > 0 {
            Some(chi_square_two_sample(&finite, &marks[..half])?)
        } else {
            None
        }
    };
    let pass = reports.iter().all(|r| r.pass)
        && surplus.is_none_or(|t| t.p_value >= thresholds.surplus_alpha);
    Ok(CompareReport {
        n,
        lambda,
        finite_replicas: m,
        limit_replicas,
        limit_truncated: limit.truncated_count(),
        ranks: reports,
        surplus,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointReport {
    pub n: usize,
    pub lambdas: (f64, f64),
    pub replicas: usize,
    pub refined_replicas: usize,
    /// Rank-1 size at λ₁ is at least the rank-1 size at λ₀ in every replica.
    pub monotone: bool,
    pub energy: TestResult,
    pub alpha: f64,
    pub pass: bool,
}

/// Finite-n joint sample `(rank-1 size at λ₀, rank-1 size at λ₁)` per replica.
pub fn joint_sample(table: &EnsembleTable, n: usize, l0: f64, l1: f64) -> Vec<[f64; 2]> {
    let a = table.rank_sizes(n, l0, 1);
    let b = table.rank_sizes(n, l1, 1);
    a.into_iter().zip(b).map(|(x, y)| [x, y]).collect()
}

/// Refinement across the grid plus a 2-D energy permutation test of the
/// joint rank-1 sample against `limit_joint`.
pub fn joint_lambda_check(
    table: &EnsembleTable,
    n: usize,
    lambdas: (f64, f64),
    limit_joint: &[[f64; 2]],
    permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<JointReport> {
    let rows: Vec<&EnsembleRow> = table.rows.iter().filter(|r| r.n == n).collect();
    if rows.is_empty() {
        return Err(Error::MetadataMismatch(format!("no rows at n = {n}")));
    }
    if rows
        .iter()
        .any(|r| r.pipeline != Pipeline::Coupled || r.refined.is_none())
    {
        return Err(Error::InvalidConfig(
            "joint check needs the coupled pipeline".into(),
        ));
    }
    let (l0, l1) = lambdas;
    if table.replicas(n, l0) != table.replicas(n, l1) {
        return Err(Error::Misaligned(
            "replicas differ between the two lambdas".into(),
        ));
    }
    let reps = table.replicas(n, l0);
    let refined: BTreeSet<usize> = rows
        .iter()
        .filter(|r| r.refined == Some(true))
        .map(|r| r.replica)
        .collect();
    let sample = joint_sample(table, n, l0, l1);
    let monotone = sample.iter().all(|p| p[1] >= p[0]);
    let energy = energy_test(&sample, limit_joint, permutations, seed)?;
    let refined_replicas = reps.iter().filter(|r| refined.contains(r)).count();
    Ok(JointReport {
        n,
        lambdas,
        replicas: reps.len(),
        refined_replicas,
        monotone,
        energy,
        alpha,
        pass: refined_replicas == reps.len() && energy.p_value >= alpha,
    })
}

/// Limit counterpart of [`joint_sample`] for percolation on a base law:
/// the λ₀ vector `c` is sampled from the percolation limit, then evolved
/// as a multiplicative coalescent with masses `√(ν/μ)·c` and weights `c`
/// for time `t = λ₁ − λ₀`.
///
/// Excursions after the horizon are too short to sample but carry a
/// square mass `D` (see [`LimitParams::tail_square_length`]). They enter as
/// infinitesimal dust: chains through dust connect `i` and `j` with total
/// intensity `t x_i x_j/(1 − tD)`, and the dust hanging off a block adds a
/// fraction `tD/(1 − tD)` of its weight. So the sampled blocks run for time
/// `t/(1 − tD)` and the weights are scaled by `1/(1 − tD)`.
///
/// Every excursion before the horizon is kept; `spec.top_k` is unused.
pub fn limit_joint_ensemble(
    dist: &ProbabilityVector,
    lambdas: (f64, f64),
    spec: &LimitSpec,
) -> Result<Vec<[f64; 2]>> {
    let (l0, l1) = lambdas;
    if l1 < l0 {
        return Err(Error::TimeReversal { start: l0, end: l1 });
    }
    let nu = dist.nu();
    let pl = percolation_limit_params(dist, nu, l0)?;
    let scaling = pl.rescaled_scaling();
    let factor = (nu / dist.mean()).sqrt();
    let t = l1 - l0;
    let tail = pl
        .params
        .with_lambda(l0 * scaling.lambda)
        .tail_square_length(spec.horizon)
        .ok_or_else(|| Error::InvalidConfig("horizon too short for the tail correction".into()))?;
    let dust = t * tail * (factor * scaling.size).powi(2);
    if dust >= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "horizon too short: tail mass times elapsed time is {dust}"
        )));
    }
    let dilation = 1.0 / (1.0 - dust);
    let pool = pool(spec.jobs)?;
    pool.install(|| {
        (0..spec.replicas)
            .into_par_iter()
            .map(|i| {
                let s = substream(spec.seed, i as u64);
                let v = sample_limit_vector(
                    &pl.params,
                    spec.horizon,
                    spec.dt,
                    substream(s, 0),
                    usize::MAX,
                    scaling,
                )?;
                let c: Vec<f64> = v.entries.iter().map(|e| e.length).collect();
                let first = c.first().copied().unwrap_or(0.0);
                let state = CoalescentState::new(c.iter().map(|x| x * factor).collect(), c)?;
                let out = simulate_with(
                    &state,
                    t * dilation,
                    substream(s, 1),
                    SimulateOptions::default(),
                )?;
                let top = out.state.ordered_weights().first().copied().unwrap_or(0.0) * dilation;
                Ok([first, top])
            })
            .collect()
    })
}

/// Summary JSON `{experiment, thresholds, statistics, pass}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub thresholds: serde_json::Value,
    pub statistics: serde_json::Value,
    pub pass: bool,
}

impl Summary {
    pub fn new<T: Serialize, S: Serialize>(
        experiment: &str,
        thresholds: &T,
        statistics: &S,
        pass: bool,
    ) -> Result<Self> {
        Ok(Self {
            experiment: experiment.to_string(),
            thresholds: serde_json::to_value(thresholds)?,
            statistics: serde_json::to_value(statistics)?,
            pass,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pipeline: Pipeline, mode: DegreeMode, lambdas: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            experiment: "t".into(),
            dist: ProbabilityVector::new([(1, 0.5), (3, 0.5)]).unwrap(),
            degree_mode: mode,
            n_grid: vec![1000],
            lambda_grid: lambdas,
            replicas: 1,
            seed: 11,
            pipeline,
            top_k: 5,
            output: None,
            jobs: 1,
        }
    }

    #[test]
    fn smoke_run_validates_and_reproduces() {
        let c = cfg(Pipeline::Direct, DegreeMode::Tuned, vec![0.0]);
        let a = run_experiment(&c).unwrap();
        assert!(!a.rows.is_empty() && a.validate());
        assert_eq!(a, run_experiment(&c).unwrap());
        assert_eq!(run_replica(&c, 1000, 0).unwrap(), a.rows);
    }

    #[test]
    fn coupled_grid_refines() {
        let mut c = cfg(
            Pipeline::Coupled,
            DegreeMode::Materialized,
            vec![-1.0, 0.0, 1.0],
        );
        c.replicas = 3;
        let t = run_experiment(&c).unwrap();
        assert!(t.rows.iter().all(|r| r.refined == Some(true)));
        assert_eq!(t.replicas(1000, 0.0), vec![0, 1, 2]);
    }

    #[test]
    fn percolation_and_dynamic_pipelines_run() {
        for p in [Pipeline::Percolation, Pipeline::Dynamic] {
            let t = run_experiment(&cfg(p, DegreeMode::Materialized, vec![-1.0, 1.0])).unwrap();
            assert!(t.validate());
            assert_eq!(t.replicas(1000, 1.0), vec![0]);
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut c = cfg(Pipeline::Direct, DegreeMode::Tuned, vec![0.0]);
        c.replicas = 0;
        assert!(c.validate().is_err());
        let c = cfg(Pipeline::Coupled, DegreeMode::Tuned, vec![0.0]);
        assert!(c.validate().is_err());
        let c = cfg(Pipeline::Direct, DegreeMode::Tuned, vec![1.0, 0.0]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn csv_round_trip_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut c = cfg(Pipeline::Direct, DegreeMode::Tuned, vec![0.0]);
        c.replicas = 2;
        c.output = Some(path.clone());
        let full = run_experiment(&c).unwrap();
        assert_eq!(EnsembleTable::read_csv(&path).unwrap(), full);
        // drop replica 1 and resume
        let partial = EnsembleTable {
            rows: full
                .rows
                .iter()
                .filter(|r| r.replica == 0)
                .cloned()
                .collect(),
        };
        partial.save(&path).unwrap();
        let resumed = run_experiment(&c).unwrap();
        assert_eq!(resumed, full);
        assert_eq!(fs::read_to_string(&path).unwrap(), full.to_csv_string());
    }

    #[test]
    fn compare_flags_metadata_mismatch() {
        let c = cfg(Pipeline::Direct, DegreeMode::Tuned, vec![0.0]);
        let t = run_experiment(&c).unwrap();
        let params = crate::limit::limit_params::<f64>(&c.dist, 1.0).unwrap();
        let spec = LimitSpec {
            horizon: 4.0,
            dt: 1.0 / 256.0,
            replicas: 4,
            top_k: 2,
            seed: 1,
            jobs: 1,
        };
        let e = limit_ensemble(&params, Scaling::identity(), &spec).unwrap();
        let r = compare_to_limit(&t, 1000, 0.0, &e, &[1], &CompareThresholds::default(), 0);
        assert!(matches!(r, Err(Error::MetadataMismatch(_))));
    }

    #[test]
    fn joint_check_rejects_uncoupled_and_handles_diagonal() {
        let c = cfg(Pipeline::Direct, DegreeMode::Tuned, vec![0.0]);
        let t = run_experiment(&c).unwrap();
        assert!(joint_lambda_check(&t, 1000, (0.0, 0.0), &[[0.0, 0.0]], 9, 0.001, 0).is_err());
        let mut c = cfg(Pipeline::Coupled, DegreeMode::Materialized, vec![0.0]);
        c.replicas = 4;
        let t = run_experiment(&c).unwrap();
        let s = joint_sample(&t, 1000, 0.0, 0.0);
        assert!(s.iter().all(|p| p[0] == p[1]));
        let r = joint_lambda_check(&t, 1000, (0.0, 0.0), &s, 19, 0.001, 0).unwrap();
        assert!(r.monotone && r.pass);
    }

    #[test]
    fn limit_joint_is_monotone() {
        let dist = ProbabilityVector::new([(1, 0.5), (3, 0.5)]).unwrap();
        let spec = LimitSpec {
            horizon: 8.0,
            dt: 1.0 / 512.0,
            replicas: 8,
            top_k: 50,
            seed: 3,
            jobs: 1,
        };
        let j = limit_joint_ensemble(&dist, (-1.0, 1.0), &spec).unwrap();
        assert_eq!(j.len(), 8);
        assert!(j.iter().all(|p| p[1] >= p[0]));
    }

    #[test]
    fn summary_shape() {
        let s = Summary::new("x", &CompareThresholds::default(), &vec![1.0], true).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        for k in ["experiment", "thresholds", "statistics", "pass"] {
            assert!(v.get(k).is_some());
        }
    }
}
