//! Exhaustive k-nearest-neighbour search and similarity-weighted label
//! propagation.
//!
//! For a query `t` with neighbours `N`, the score of label `w` is
//! `Σ_{i ∈ N, w ∈ labels(i)} max(⟨x_i, x_t⟩, 0)`. Scores are left
//! unnormalized; only their ranking is consumed downstream.
//!
//! Ties: neighbours with equal similarity are ordered by ascending training
//! index, labels with equal score by ascending label index.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use crate::data::{LabelLookup, SparseDataset, SparseRow};
use crate::embedding::{
    embed_single_with, embed_with, DenseProjection, EmbedOptions, EmbeddedMatrix,
    EmbeddingSpec, GaussianProjection, Projection,
};
use crate::error::{Error, Result};
use crate::par;

/// Nearest neighbours of one query, most similar first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborList {
    entries: Vec<(u32, f64)>,
}

impl NeighborList {
    pub fn from_sorted(entries: Vec<(u32, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| rank(&w[0], &w[1]) != Ordering::Greater));
        NeighborList { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.0)
    }
}

/// Descending similarity, then ascending index.
#[inline]
fn rank(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Bounded top-k buffer under [`rank`].
struct TopK {
    k: usize,
    buf: Vec<(u32, f64)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            buf: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, cand: (u32, f64)) {
        if self.buf.len() == self.k {
            match self.buf.last() {
                Some(worst) if rank(&cand, worst) == Ordering::Less => {}
                _ => return,
            }
            self.buf.pop();
        }
        let pos = self
            .buf
            .partition_point(|e| rank(e, &cand) == Ordering::Less);
        self.buf.insert(pos, cand);
    }

    fn into_list(self) -> NeighborList {
        NeighborList { entries: self.buf }
    }
}

/// Dot product of two `f32` slices accumulated in `f64`.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

fn check_query(query: &[f32], train: &EmbeddedMatrix, k: usize) -> Result<()> {
    if query.len() != train.r() {
        return Err(Error::DimensionMismatch {
            expected: train.r(),
            actual: query.len(),
        });
    }
    if k == 0 {
        return Err(Error::param("k must be >= 1"));
    }
    Ok(())
}

fn scan(
    query: &[f32],
    train: &EmbeddedMatrix,
    range: std::ops::Range<usize>,
    k: usize,
    exclude: Option<usize>,
) -> TopK {
    let mut top = TopK::new(k);
    for j in range {
        if Some(j) == exclude {
            continue;
        }
        let s = dot(query, train.column(j)).clamp(-1.0, 1.0);
        top.offer((j as u32, s));
    }
    top
}

/// Exact top-`k` training columns by dot product.
pub fn knn(query: &[f32], train: &EmbeddedMatrix, k: usize) -> Result<NeighborList> {
    knn_excluding(query, train, k, None)
}

/// [`knn`] that skips training column `exclude` (self-match removal when
/// evaluating on the training set).
pub fn knn_excluding(
    query: &[f32],
    train: &EmbeddedMatrix,
    k: usize,
    exclude: Option<usize>,
) -> Result<NeighborList> {
    check_query(query, train, k)?;
    Ok(scan(query, train, 0..train.n(), k, exclude).into_list())
}

/// [`knn`] with the training columns split into `blocks` contiguous ranges
/// searched independently (in parallel when possible) and merged. The result
/// is identical to [`knn`] for any block count.
pub fn knn_partitioned(
    query: &[f32],
    train: &EmbeddedMatrix,
    k: usize,
    blocks: usize,
) -> Result<NeighborList> {
    check_query(query, train, k)?;
    let n = train.n();
    let blocks = blocks.clamp(1, n.max(1));
    let size = n.div_ceil(blocks).max(1);
    let partial = par::map_range(blocks, |b| {
        let lo = (b * size).min(n);
        let hi = ((b + 1) * size).min(n);
        scan(query, train, lo..hi, k, None).buf
    });
    let mut merged = TopK::new(k);
    for e in partial.into_iter().flatten() {
        merged.offer(e);
    }
    Ok(merged.into_list())
}

/// Sparse label scores of one query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreVector {
    scores: BTreeMap<u32, f64>,
}

impl ScoreVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `w` to label `label`; nonpositive contributions are ignored.
    pub fn add(&mut self, label: u32, w: f64) {
        if w > 0.0 {
            *self.scores.entry(label).or_insert(0.0) += w;
        }
    }

    pub fn get(&self, label: u32) -> f64 {
        self.scores.get(&label).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `(label, score)` in ascending label order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.scores.iter().map(|(&l, &s)| (l, s))
    }

    pub fn divided(&self, c: f64) -> ScoreVector {
        ScoreVector {
            scores: self.scores.iter().map(|(&l, &s)| (l, s / c)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> ScoreVector {
        ScoreVector {
            scores: self.scores.iter().map(|(&l, &s)| (l, s * c)).collect(),
        }
    }

    /// Labels ranked by descending score, ties by ascending label.
    pub fn ranked(&self) -> Vec<(u32, f64)> {
        let mut v: Vec<(u32, f64)> = self.iter().collect();
        v.sort_by(rank);
        v
    }
}

impl FromIterator<(u32, f64)> for ScoreVector {
    fn from_iter<I: IntoIterator<Item = (u32, f64)>>(iter: I) -> Self {
        let mut s = ScoreVector::new();
        for (l, w) in iter {
            s.add(l, w);
        }
        s
    }
}

/// Weighted Bernoulli propagation of neighbour labels.
pub fn propagate<L: LabelLookup + ?Sized>(
    neighbors: &NeighborList,
    labelsets: &L,
    num_labels: usize,
) -> Result<ScoreVector> {
    let mut scores = ScoreVector::new();
    for &(i, sim) in neighbors.entries() {
        let i = i as usize;
        if i >= labelsets.label_count() {
            return Err(Error::IndexOutOfRange {
                index: i,
                bound: labelsets.label_count(),
            });
        }
        let weight = sim.max(0.0);
        if weight == 0.0 {
            continue;
        }
        for &l in labelsets.sample_labels(i) {
            if l as usize >= num_labels {
                return Err(Error::IndexOutOfRange {
                    index: l as usize,
                    bound: num_labels,
                });
            }
            scores.add(l, weight);
        }
    }
    Ok(scores)
}

/// The `top` best labels of `scores`.
pub fn top_k_labels(scores: &ScoreVector, top: usize) -> Vec<u32> {
    let mut ranked = scores.ranked();
    ranked.truncate(top);
    ranked.into_iter().map(|e| e.0).collect()
}

/// Embed, search and propagate for a single query.
pub fn predict<L: LabelLookup + ?Sized>(
    spec: &EmbeddingSpec,
    train: &EmbeddedMatrix,
    labelsets: &L,
    num_labels: usize,
    query: SparseRow<'_>,
    k: usize,
) -> Result<ScoreVector> {
    let q = embed_single_with(&GaussianProjection::new(*spec), query, EmbedOptions::default())?;
    let nl = knn(&q, train, k)?;
    propagate(&nl, labelsets, num_labels)
}

/// Per-phase timings of a batch prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PredictTimings {
    pub matrix_generation: Duration,
    pub embedding: Duration,
    pub search: Duration,
    pub propagation: Duration,
}

impl PredictTimings {
    pub fn accumulate(&mut self, other: &PredictTimings) {
        self.matrix_generation += other.matrix_generation;
        self.embedding += other.embedding;
        self.search += other.search;
        self.propagation += other.propagation;
    }
}

/// Options for [`Learner::predict_batch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub k: usize,
    /// Queries embedded per chunk; bounds memory to `r × chunk` floats.
    pub chunk: usize,
    /// Store the projection matrix while predicting if it fits in this many
    /// bytes; otherwise rows are regenerated for every chunk.
    pub dense_budget_bytes: usize,
    /// Skip training column `i` when predicting query `i`.
    pub exclude_self: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            k: crate::DEFAULT_K,
            chunk: 4096,
            dense_budget_bytes: 256 << 20,
            exclude_self: false,
        }
    }
}

/// One seeded projection together with the embedded training set.
#[derive(Debug, Clone)]
pub struct Learner {
    pub spec: EmbeddingSpec,
    pub train: EmbeddedMatrix,
    pub fit_timings: crate::embedding::EmbedTimings,
}

impl Learner {
    pub fn fit(spec: EmbeddingSpec, train: &SparseDataset) -> Result<Self> {
        let (m, t) = embed_with(&GaussianProjection::new(spec), train, EmbedOptions::default())?;
        Ok(Learner {
            spec,
            train: m,
            fit_timings: t,
        })
    }

    pub fn from_embedded(spec: EmbeddingSpec, train: EmbeddedMatrix) -> Self {
        Learner {
            spec,
            train,
            fit_timings: Default::default(),
        }
    }

    /// Embeds query samples with this learner's projection.
    pub fn embed_queries(&self, test: &SparseDataset) -> Result<EmbeddedMatrix> {
        embed_with(&GaussianProjection::new(self.spec), test, EmbedOptions::default())
            .map(|(m, _)| m)
    }

    /// Predicts every sample of `test`, chunk by chunk, in parallel across
    /// queries.
    pub fn predict_batch<L: LabelLookup + ?Sized>(
        &self,
        labelsets: &L,
        num_labels: usize,
        test: &SparseDataset,
        opts: &PredictOptions,
    ) -> Result<(Vec<ScoreVector>, PredictTimings)> {
        if test.d() != self.spec.d {
            return Err(Error::DimensionMismatch {
                expected: self.spec.d,
                actual: test.d(),
            });
        }
        let mut timings = PredictTimings::default();
        let gaussian = GaussianProjection::new(self.spec);
        let dense = if self.spec.parameter_count() * 4 <= opts.dense_budget_bytes {
            let t = Instant::now();
            let d = DenseProjection::materialize(&gaussian);
            timings.matrix_generation += t.elapsed();
            Some(d)
        } else {
            None
        };
        let proj: &dyn Projection = match &dense {
            Some(d) => d,
            None => &gaussian,
        };

        let mut out = Vec::with_capacity(test.n());
        let chunk = opts.chunk.max(1);
        let mut start = 0;
        while start < test.n() {
            let end = (start + chunk).min(test.n());
            let idx: Vec<usize> = (start..end).collect();
            let part = test.subset(&idx);
            let t = Instant::now();
            let (emb, et) = embed_with(proj, &part, EmbedOptions::default())?;
            if dense.is_none() {
                timings.matrix_generation += et.generation;
            }
            timings.embedding += t.elapsed().saturating_sub(if dense.is_none() {
                et.generation
            } else {
                Duration::ZERO
            });

            let t = Instant::now();
            let neigh = par::map_range(part.n(), |q| {
                let exclude = opts.exclude_self.then_some(start + q);
                knn_excluding(emb.column(q), &self.train, opts.k, exclude)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            timings.search += t.elapsed();

            let t = Instant::now();
            let scores = par::map_slice(&neigh, |nl| propagate(nl, labelsets, num_labels));
            timings.propagation += t.elapsed();
            for s in scores {
                out.push(s?);
            }
            start = end;
        }
        Ok((out, timings))
    }
}

/// Writes one TSV row per sample: the top `top` `label:score` pairs.
pub fn write_predictions<W: Write>(mut w: W, predictions: &[ScoreVector], top: usize) -> io::Result<()> {
    let mut line = String::new();
    for s in predictions {
        line.clear();
        for (i, (l, v)) in s.ranked().into_iter().take(top).enumerate() {
            if i > 0 {
                line.push('\t');
            }
            let _ = write!(line, "{l}:{v:.6}");
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

/// Parses the output of [`write_predictions`].
pub fn read_predictions(text: &str) -> Result<Vec<ScoreVector>> {
    text.lines()
        .enumerate()
        .map(|(ln, line)| {
            line.split('\t')
                .filter(|t| !t.is_empty())
                .map(|tok| {
                    let bad = || Error::param(format!("prediction line {}: bad pair {tok:?}", ln + 1));
                    let (l, v) = tok.split_once(':').ok_or_else(bad)?;
                    Ok((l.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?))
                })
                .collect::<Result<ScoreVector>>()
        })
        .collect()
}
