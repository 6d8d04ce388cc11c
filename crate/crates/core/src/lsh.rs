//! Signed-random-projection LSH over embedded vectors.
//!
//! Bit `b` of table `t` is `[⟨h_{t,b}, x⟩ ≥ 0]` where `h_{t,b}` is standard
//! normal, drawn from the LSH namespace of the Gaussian streams with stream
//! id `t·H + b`. Adding tables never changes the existing ones.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use crate::data::SparseDataset;
use crate::embedding::EmbeddedMatrix;
use crate::ensemble::{fuse, EnsembleSpec};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianStream, Namespace};
use crate::metrics::{evaluate, EvalReport, PropensityModel};
use crate::par;
use crate::predictor::{dot, propagate, Learner, NeighborList, ScoreVector};

pub const DEFAULT_TABLES: usize = 10;
pub const DEFAULT_BITS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LshParams {
    pub tables: usize,
    pub bits: usize,
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            tables: DEFAULT_TABLES,
            bits: DEFAULT_BITS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LshIndex<'a> {
    train: &'a EmbeddedMatrix,
    params: LshParams,
    /// `tables · bits` hyperplanes of length `r`, table-major.
    hyperplanes: Vec<Vec<f32>>,
    buckets: Vec<HashMap<u64, Vec<u32>>>,
}

/// Result of [`LshIndex::query`].
#[derive(Debug, Clone, PartialEq)]
pub struct LshQuery {
    pub neighbors: NeighborList,
    pub candidates: usize,
}

impl LshQuery {
    pub fn is_empty_candidate_set(&self) -> bool {
        self.candidates == 0
    }
}

pub fn build_index(train: &EmbeddedMatrix, params: LshParams) -> Result<LshIndex<'_>> {
    if params.tables == 0 || params.bits == 0 || params.bits > 64 {
        return Err(Error::param(format!(
            "need tables >= 1 and 1 <= bits <= 64, got T={} H={}",
            params.tables, params.bits
        )));
    }
    let r = train.r();
    let hyperplanes: Vec<Vec<f32>> = (0..params.tables * params.bits)
        .map(|h| {
            let mut v = vec![0.0f32; r];
            GaussianStream::new(params.seed, Namespace::LshHyperplane, h as u64).fill(&mut v);
            v
        })
        .collect();
    let mut index = LshIndex {
        train,
        params,
        hyperplanes,
        buckets: vec![HashMap::new(); params.tables],
    };
    let codes = par::map_range(train.n(), |j| index.codes(train.column(j)));
    for (j, cs) in codes.into_iter().enumerate() {
        for (t, c) in cs.into_iter().enumerate() {
            index.buckets[t].entry(c).or_default().push(j as u32);
        }
    }
    Ok(index)
}

impl LshIndex<'_> {
    pub fn params(&self) -> LshParams {
        self.params
    }

    /// Code of `x` in table `t`.
    pub fn code(&self, x: &[f32], t: usize) -> u64 {
        let h = self.params.bits;
        self.hyperplanes[t * h..(t + 1) * h]
            .iter()
            .enumerate()
            .fold(0u64, |acc, (b, plane)| {
                acc | (u64::from(dot(plane, x) >= 0.0) << b)
            })
    }

    pub fn codes(&self, x: &[f32]) -> Vec<u64> {
        (0..self.params.tables).map(|t| self.code(x, t)).collect()
    }

    /// Union of the query's buckets, ascending.
    pub fn candidates(&self, query: &[f32]) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .codes(query)
            .into_iter()
            .enumerate()
            .filter_map(|(t, c)| self.buckets[t].get(&c))
            .flatten()
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Exact top-`k` by dot product within the candidate set.
    pub fn query(&self, query: &[f32], k: usize) -> Result<LshQuery> {
        if query.len() != self.train.r() {
            return Err(Error::DimensionMismatch {
                expected: self.train.r(),
                actual: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::param("k must be >= 1"));
        }
        let cands = self.candidates(query);
        let mut scored: Vec<(u32, f64)> = cands
            .iter()
            .map(|&j| (j, dot(query, self.train.column(j as usize)).clamp(-1.0, 1.0)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(LshQuery {
            neighbors: NeighborList::from_sorted(scored),
            candidates: cands.len(),
        })
    }
}

/// Outcome of [`compare`].
#[derive(Debug, Clone)]
pub struct LshComparison {
    pub exhaustive: EvalReport,
    pub lsh: EvalReport,
    pub exhaustive_time: Duration,
    pub lsh_build_time: Duration,
    pub lsh_query_time: Duration,
    pub empty_candidate_queries: usize,
    pub mean_candidates: f64,
}

/// Runs exhaustive and LSH neighbour search on the same learners and fuses
/// each path over the ensemble.
pub fn compare(
    spec: &EnsembleSpec,
    train: &SparseDataset,
    test: &SparseDataset,
    params: LshParams,
    model: &PropensityModel,
) -> Result<LshComparison> {
    let mut seeds = spec.seeds.clone();
    seeds.sort_unstable();
    let mut exact_all = Vec::new();
    let mut lsh_all = Vec::new();
    let (mut t_exact, mut t_build, mut t_query) = (Duration::ZERO, Duration::ZERO, Duration::ZERO);
    let (mut empty, mut cand_total) = (0usize, 0usize);
    for seed in seeds {
        let learner = Learner::fit(spec.embedding(seed), train)?;
        let queries = learner.embed_queries(test)?;

        let t = Instant::now();
        let exact = par::map_range(queries.n(), |q| {
            crate::predictor::knn(queries.column(q), &learner.train, spec.k)
                .and_then(|nl| propagate(&nl, train, train.num_labels()))
        })
        .into_iter()
        .collect::<Result<Vec<ScoreVector>>>()?;
        t_exact += t.elapsed();

        let t = Instant::now();
        let index = build_index(&learner.train, params)?;
        t_build += t.elapsed();
        let t = Instant::now();
        let results = par::map_range(queries.n(), |q| index.query(queries.column(q), spec.k))
            .into_iter()
            .collect::<Result<Vec<LshQuery>>>()?;
        let approx = results
            .iter()
            .map(|r| propagate(&r.neighbors, train, train.num_labels()))
            .collect::<Result<Vec<ScoreVector>>>()?;
        t_query += t.elapsed();
        empty += results.iter().filter(|r| r.is_empty_candidate_set()).count();
        cand_total += results.iter().map(|r| r.candidates).sum::<usize>();

        exact_all.push(exact);
        lsh_all.push(approx);
    }
    let fuse_all = |all: &[Vec<ScoreVector>]| -> Vec<ScoreVector> {
        (0..test.n())
            .map(|q| fuse(&all.iter().map(|l| &l[q]).collect::<Vec<_>>()))
            .collect()
    };
    let queries = (test.n() * spec.len()).max(1);
    Ok(LshComparison {
        exhaustive: evaluate(&fuse_all(&exact_all), test, model)?,
        lsh: evaluate(&fuse_all(&lsh_all), test, model)?,
        exhaustive_time: t_exact,
        lsh_build_time: t_build,
        lsh_query_time: t_query,
        empty_candidate_queries: empty,
        mean_candidates: cand_total as f64 / queries as f64,
    })
}
