//! Sparse datasets in the Extreme Classification Repository text format.
//!
//! ```text
//! n d L
//! l1,l2,... f1:v1 f2:v2 ...
//! ```
//!
//! Indices are 0-based. A line whose label field is missing (it starts with a
//! space or directly with an `idx:val` token) has an empty label set. Feature
//! values are parsed as `f64` and stored as `f32`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaussian::Namespace;

/// Borrowed sparse vector: strictly increasing indices with parallel values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseRow<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f32],
}

impl SparseRow<'_> {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Euclidean norm, accumulated in `f64`.
    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_owned(&self) -> SparseVector {
        SparseVector {
            indices: self.indices.to_vec(),
            values: self.values.to_vec(),
        }
    }
}

/// Owned sparse feature vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f32>,
}

impl SparseVector {
    /// Builds a vector from `(index, value)` pairs, sorting them by index.
    pub fn new(mut entries: Vec<(u32, f32)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::param("duplicate feature index"));
        }
        if entries.iter().any(|e| !e.1.is_finite()) {
            return Err(Error::param("non-finite feature value"));
        }
        let (indices, values) = entries.into_iter().unzip();
        Ok(SparseVector { indices, values })
    }

    pub fn one_hot(index: u32) -> Self {
        SparseVector {
            indices: vec![index],
            values: vec![1.0],
        }
    }

    pub fn view(&self) -> SparseRow<'_> {
        SparseRow {
            indices: &self.indices,
            values: &self.values,
        }
    }

    pub fn scaled(&self, c: f32) -> Self {
        SparseVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// Sorted set of 0-based label indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet(Vec<u32>);

impl LabelSet {
    pub fn new(mut labels: Vec<u32>) -> Self {
        labels.sort_unstable();
        labels.dedup();
        LabelSet(labels)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn contains(&self, label: u32) -> bool {
        self.0.binary_search(&label).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-sample label lookup shared by the prediction and metric code.
pub trait LabelLookup: Sync {
    fn sample_labels(&self, i: usize) -> &[u32];
    fn label_count(&self) -> usize;
}

impl LabelLookup for [LabelSet] {
    fn sample_labels(&self, i: usize) -> &[u32] {
        self[i].as_slice()
    }
    fn label_count(&self) -> usize {
        self.len()
    }
}

impl LabelLookup for Vec<LabelSet> {
    fn sample_labels(&self, i: usize) -> &[u32] {
        self[i].as_slice()
    }
    fn label_count(&self) -> usize {
        self.len()
    }
}

/// CSR feature matrix plus per-sample label sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    d: usize,
    num_labels: usize,
    feat_ptr: Vec<usize>,
    feat_idx: Vec<u32>,
    feat_val: Vec<f32>,
    label_ptr: Vec<usize>,
    label_idx: Vec<u32>,
    label_frequencies: Vec<u32>,
}

impl SparseDataset {
    pub fn builder(d: usize, num_labels: usize) -> DatasetBuilder {
        DatasetBuilder::new(d, num_labels)
    }

    pub fn n(&self) -> usize {
        self.feat_ptr.len() - 1
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn nnz(&self) -> usize {
        self.feat_idx.len()
    }

    pub fn features(&self, i: usize) -> SparseRow<'_> {
        let (a, b) = (self.feat_ptr[i], self.feat_ptr[i + 1]);
        SparseRow {
            indices: &self.feat_idx[a..b],
            values: &self.feat_val[a..b],
        }
    }

    pub fn labels(&self, i: usize) -> &[u32] {
        &self.label_idx[self.label_ptr[i]..self.label_ptr[i + 1]]
    }

    pub fn label_set(&self, i: usize) -> LabelSet {
        LabelSet(self.labels(i).to_vec())
    }

    pub fn label_sets(&self) -> Vec<LabelSet> {
        (0..self.n()).map(|i| self.label_set(i)).collect()
    }

    /// Number of samples carrying each label.
    pub fn label_frequencies(&self) -> &[u32] {
        &self.label_frequencies
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> SparseDataset {
        let mut b = DatasetBuilder::new(self.d, self.num_labels);
        for &i in indices {
            b.push_unchecked(self.features(i), self.labels(i));
        }
        b.finish()
    }

    /// Splits into the first `at` samples and the rest.
    pub fn split_at(&self, at: usize) -> (SparseDataset, SparseDataset) {
        let at = at.min(self.n());
        let head: Vec<usize> = (0..at).collect();
        let tail: Vec<usize> = (at..self.n()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Writes the repository text format.
    pub fn write_to<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "{} {} {}", self.n(), self.d, self.num_labels)?;
        let mut line = String::new();
        for i in 0..self.n() {
            line.clear();
            for (j, l) in self.labels(i).iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{l}");
            }
            for (idx, val) in self.features(i).iter() {
                let _ = write!(line, " {idx}:{val}");
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = fs::File::create(path)?;
        self.write_to(f)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        parse_dataset(path)
    }
}

impl LabelLookup for SparseDataset {
    fn sample_labels(&self, i: usize) -> &[u32] {
        self.labels(i)
    }
    fn label_count(&self) -> usize {
        self.n()
    }
}

/// Incremental CSR construction with validation against `d` and `L`.
#[derive(Debug)]
pub struct DatasetBuilder {
    d: usize,
    num_labels: usize,
    feat_ptr: Vec<usize>,
    feat_idx: Vec<u32>,
    feat_val: Vec<f32>,
    label_ptr: Vec<usize>,
    label_idx: Vec<u32>,
}

impl DatasetBuilder {
    pub fn new(d: usize, num_labels: usize) -> Self {
        DatasetBuilder {
            d,
            num_labels,
            feat_ptr: vec![0],
            feat_idx: Vec::new(),
            feat_val: Vec::new(),
            label_ptr: vec![0],
            label_idx: Vec::new(),
        }
    }

    pub fn push(&mut self, features: &SparseVector, labels: &LabelSet) -> Result<()> {
        let row = features.view();
        if let Some(&max) = row.indices.last() {
            if max as usize >= self.d {
                return Err(Error::IndexOutOfRange {
                    index: max as usize,
                    bound: self.d,
                });
            }
        }
        if let Some(&max) = labels.as_slice().last() {
            if max as usize >= self.num_labels {
                return Err(Error::IndexOutOfRange {
                    index: max as usize,
                    bound: self.num_labels,
                });
            }
        }
        self.push_unchecked(row, labels.as_slice());
        Ok(())
    }

    fn push_unchecked(&mut self, row: SparseRow<'_>, labels: &[u32]) {
        self.feat_idx.extend_from_slice(row.indices);
        self.feat_val.extend_from_slice(row.values);
        self.feat_ptr.push(self.feat_idx.len());
        self.label_idx.extend_from_slice(labels);
        self.label_ptr.push(self.label_idx.len());
    }

    pub fn finish(self) -> SparseDataset {
        let mut label_frequencies = vec![0u32; self.num_labels];
        for &l in &self.label_idx {
            label_frequencies[l as usize] += 1;
        }
        SparseDataset {
            d: self.d,
            num_labels: self.num_labels,
            feat_ptr: self.feat_ptr,
            feat_idx: self.feat_idx,
            feat_val: self.feat_val,
            label_ptr: self.label_ptr,
            label_idx: self.label_idx,
            label_frequencies,
        }
    }
}

/// Parses a dataset file. Errors carry the 1-based line number.
pub fn parse_dataset(path: impl AsRef<Path>) -> Result<SparseDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_str(&text).map_err(|(line, msg)| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

/// Parses dataset text; errors are `(line, message)`.
pub fn parse_str(text: &str) -> std::result::Result<SparseDataset, (usize, String)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or((1, "empty file".to_string()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_count = |s: &str| -> Option<usize> { s.parse::<usize>().ok().filter(|&v| v > 0) };
    let (n, d, num_labels) = match fields.as_slice() {
        [a, b, c] => match (parse_count(a), parse_count(b), parse_count(c)) {
            (Some(n), Some(d), Some(l)) => (n, d, l),
            _ => return Err((1, format!("malformed header {header:?}"))),
        },
        _ => {
            return Err((
                1,
                format!("malformed header {header:?}: expected \"n d L\""),
            ))
        }
    };

    let mut builder = DatasetBuilder::new(d, num_labels);
    let mut feats: Vec<(u32, f32)> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    let mut seen = 0usize;
    for (offset, line) in lines.enumerate() {
        let lineno = offset + 2;
        if seen == n {
            if line.trim().is_empty() {
                continue;
            }
            return Err((lineno, format!("more than the {n} samples declared in the header")));
        }
        feats.clear();
        labels.clear();
        parse_line(line, d, num_labels, &mut labels, &mut feats).map_err(|m| (lineno, m))?;
        let (idx, val): (Vec<u32>, Vec<f32>) = feats.iter().copied().unzip();
        builder.push_unchecked(
            SparseRow {
                indices: &idx,
                values: &val,
            },
            &labels,
        );
        seen += 1;
    }
    if seen != n {
        return Err((
            seen + 2,
            format!("header declares {n} samples but only {seen} found"),
        ));
    }
    Ok(builder.finish())
}

fn parse_line(
    line: &str,
    d: usize,
    num_labels: usize,
    labels: &mut Vec<u32>,
    feats: &mut Vec<(u32, f32)>,
) -> std::result::Result<(), String> {
    let mut tokens = line.split_whitespace().peekable();
    let has_labels = !line.starts_with(char::is_whitespace)
        && tokens.peek().is_some_and(|t| !t.contains(':'));
    if has_labels {
        let field = tokens.next().unwrap_or_default();
        for tok in field.split(',').filter(|t| !t.is_empty()) {
            let l: usize = tok
                .parse()
                .map_err(|_| format!("bad label index {tok:?}"))?;
            if l >= num_labels {
                return Err(format!("label index {l} >= L = {num_labels}"));
            }
            labels.push(l as u32);
        }
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate label index".into());
        }
    }
    for tok in tokens {
        let (i, v) = tok
            .split_once(':')
            .ok_or_else(|| format!("expected idx:val, got {tok:?}"))?;
        let i: usize = i.parse().map_err(|_| format!("bad feature index {i:?}"))?;
        if i >= d {
            return Err(format!("feature index {i} >= d = {d}"));
        }
        let v: f64 = v.parse().map_err(|_| format!("bad feature value {v:?}"))?;
        let v32 = v as f32;
        if !v.is_finite() || !v32.is_finite() {
            return Err(format!("non-finite feature value {v}"));
        }
        feats.push((i as u32, v32));
    }
    feats.sort_by_key(|f| f.0);
    if feats.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err("duplicate feature index".into());
    }
    Ok(())
}

/// Parameters of the clustered synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub n: usize,
    pub d: usize,
    pub num_labels: usize,
    /// Mean nonzeros per row.
    pub sparsity: usize,
    /// Mean labels per sample.
    pub labels_per_sample: usize,
    pub clusters: usize,
    pub seed: u64,
}

impl SyntheticParams {
    fn validate(&self) -> Result<()> {
        let p = self;
        if p.n == 0 || p.d == 0 || p.num_labels == 0 || p.sparsity == 0 || p.clusters == 0 {
            return Err(Error::param("synthetic counts must be positive"));
        }
        if p.labels_per_sample == 0 {
            return Err(Error::param("labels_per_sample must be positive"));
        }
        if p.sparsity > p.d {
            return Err(Error::param(format!("sparsity {} > d {}", p.sparsity, p.d)));
        }
        if p.labels_per_sample > p.num_labels {
            return Err(Error::param(format!(
                "labels_per_sample {} > L {}",
                p.labels_per_sample, p.num_labels
            )));
        }
        Ok(())
    }
}

struct Centroid {
    support: Vec<u32>,
    weights: Vec<f32>,
    label_pool: Vec<u32>,
}

const IN_CLUSTER_FEATURE: f64 = 0.7;
const IN_CLUSTER_LABEL: f64 = 0.85;

fn distinct_sample(rng: &mut ChaCha8Rng, bound: usize, count: usize) -> Vec<u32> {
    let count = count.min(bound);
    let mut set = BTreeSet::new();
    while set.len() < count {
        set.insert(rng.random_range(0..bound) as u32);
    }
    set.into_iter().collect()
}

/// Uniform integer in `[max(1, m/2), m + m/2]`, mean ≈ `m`.
fn around(rng: &mut ChaCha8Rng, mean: usize, cap: usize) -> usize {
    let lo = (mean / 2).max(1);
    let hi = (mean + mean / 2).max(lo);
    rng.random_range(lo..=hi).min(cap)
}

/// Generates a clustered dataset; see [`generate_synthetic_with_clusters`].
pub fn generate_synthetic(params: &SyntheticParams) -> Result<SparseDataset> {
    generate_synthetic_with_clusters(params).map(|(ds, _)| ds)
}

/// Generates a clustered dataset and returns the latent cluster of each sample.
///
/// Each cluster owns a feature support (with base weights) and a label pool.
/// A sample draws most of its features from its cluster's support and most of
/// its labels from its cluster's pool; the remainder is uniform noise.
pub fn generate_synthetic_with_clusters(
    params: &SyntheticParams,
) -> Result<(SparseDataset, Vec<u32>)> {
    params.validate()?;
    let p = params;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream((Namespace::Synthetic as u64) << 48);

    let support_len = (4 * p.sparsity).min(p.d);
    let pool_len = (2 * p.labels_per_sample).min(p.num_labels);
    let centroids: Vec<Centroid> = (0..p.clusters)
        .map(|_| {
            let support = distinct_sample(&mut rng, p.d, support_len);
            let weights = support
                .iter()
                .map(|_| rng.random_range(0.5f32..1.5))
                .collect();
            let label_pool = distinct_sample(&mut rng, p.num_labels, pool_len);
            Centroid {
                support,
                weights,
                label_pool,
            }
        })
        .collect();

    let mut builder = DatasetBuilder::new(p.d, p.num_labels);
    let mut assignment = Vec::with_capacity(p.n);
    for _ in 0..p.n {
        let c = rng.random_range(0..p.clusters);
        let centroid = &centroids[c];
        assignment.push(c as u32);

        let nnz = around(&mut rng, p.sparsity, p.d);
        let mut feats = std::collections::BTreeMap::new();
        while feats.len() < nnz {
            if rng.random_bool(IN_CLUSTER_FEATURE) {
                let s = rng.random_range(0..centroid.support.len());
                let v = centroid.weights[s] * rng.random_range(0.5f32..1.5);
                feats.entry(centroid.support[s]).or_insert(v);
            } else {
                let f = rng.random_range(0..p.d) as u32;
                let v = rng.random_range(0.1f32..1.0);
                feats.entry(f).or_insert(v);
            }
        }

        let want = around(&mut rng, p.labels_per_sample, p.num_labels);
        let mut labels = BTreeSet::new();
        while labels.len() < want {
            if rng.random_bool(IN_CLUSTER_LABEL) {
                let l = centroid.label_pool[rng.random_range(0..centroid.label_pool.len())];
                labels.insert(l);
            } else {
                labels.insert(rng.random_range(0..p.num_labels) as u32);
            }
        }

        let idx: Vec<u32> = feats.keys().copied().collect();
        let val: Vec<f32> = feats.values().copied().collect();
        let lab: Vec<u32> = labels.into_iter().collect();
        builder.push_unchecked(
            SparseRow {
                indices: &idx,
                values: &val,
            },
            &lab,
        );
    }
    Ok((builder.finish(), assignment))
}
