#![allow(dead_code)]

use ogeec::data::{generate_synthetic, SparseDataset, SyntheticParams};
use ogeec::embedding::{materialize_row, EmbeddingSpec};
use ogeec::metrics::{Metric, PropensityModel};
use ogeec::LabelSet;

pub fn synthetic(n: usize, d: usize, labels: usize, clusters: usize, seed: u64) -> SparseDataset {
    generate_synthetic(&SyntheticParams {
        n,
        d,
        num_labels: labels,
        sparsity: 15,
        labels_per_sample: 3,
        clusters,
        seed,
    })
    .unwrap()
}

/// Train/test pair drawn from the same clusters.
pub fn split(n_train: usize, n_test: usize, d: usize, labels: usize, clusters: usize, seed: u64) -> (SparseDataset, SparseDataset) {
    synthetic(n_train + n_test, d, labels, clusters, seed).split_at(n_train)
}

/// Independent end-to-end reference: dense F, dense inputs, full sort.
pub struct NaiveModel {
    pub f: Vec<Vec<f64>>,
    pub train: Vec<Vec<f64>>,
    pub labels: Vec<Vec<u32>>,
}

fn dense(ds: &SparseDataset, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; ds.d()];
    for (j, x) in ds.features(i).iter() {
        v[j as usize] = f64::from(x);
    }
    v
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

impl NaiveModel {
    pub fn new(spec: &EmbeddingSpec, train: &SparseDataset) -> Self {
        let f: Vec<Vec<f64>> = (0..spec.r)
            .map(|i| materialize_row(spec, i).unwrap().into_iter().map(f64::from).collect())
            .collect();
        let mut m = NaiveModel {
            f,
            train: Vec::new(),
            labels: (0..train.n()).map(|i| train.labels(i).to_vec()).collect(),
        };
        m.train = (0..train.n()).map(|i| m.embed(&dense(train, i))).collect();
        m
    }

    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        let x = unit(x.to_vec());
        unit(self.f.iter().map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum()).collect())
    }

    /// All (index, similarity) sorted by descending similarity, ties by index.
    pub fn ranking(&self, q: &[f64]) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = self
            .train
            .iter()
            .enumerate()
            .map(|(j, t)| (j, t.iter().zip(q).map(|(a, b)| a * b).sum()))
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all
    }

    /// Label → score, sorted by descending score then label.
    pub fn predict(&self, ds: &SparseDataset, i: usize, k: usize) -> Vec<(u32, f64)> {
        let q = self.embed(&dense(ds, i));
        let mut scores = std::collections::HashMap::<u32, f64>::new();
        for &(j, s) in self.ranking(&q).iter().take(k) {
            if s > 0.0 {
                for &l in &self.labels[j] {
                    *scores.entry(l).or_default() += s;
                }
            }
        }
        let mut v: Vec<(u32, f64)> = scores.into_iter().collect();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        v
    }
}

/// Cosine of two sparse rows of a dataset.
pub fn cosine(ds: &SparseDataset, i: usize, j: usize) -> f64 {
    let (a, b) = (ds.features(i), ds.features(j));
    let mut dot = 0.0;
    let (mut p, mut q) = (0, 0);
    while p < a.nnz() && q < b.nnz() {
        match a.indices[p].cmp(&b.indices[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                dot += f64::from(a.values[p]) * f64::from(b.values[q]);
                p += 1;
                q += 1;
            }
        }
    }
    dot / (a.norm() * b.norm())
}

/// Values printed by tests/reference/metrics_reference.py.
#[allow(clippy::excessive_precision)]
pub const METRICS_REFERENCE: [(Metric, usize, f64); 12] = [
    (Metric::Precision, 1, 0.44444444444444442),
    (Metric::Precision, 3, 0.40740740740740738),
    (Metric::Precision, 5, 0.31111111111111112),
    (Metric::Ndcg, 1, 0.44444444444444442),
    (Metric::Ndcg, 3, 0.50248625516630918),
    (Metric::Ndcg, 5, 0.56715632053944831),
    (Metric::PsPrecision, 1, 0.32998367286836955),
    (Metric::PsPrecision, 3, 0.53575827383816998),
    (Metric::PsPrecision, 5, 0.65972390370048095),
    (Metric::PsNdcg, 1, 0.32998367286836955),
    (Metric::PsNdcg, 3, 0.4643912453476462),
    (Metric::PsNdcg, 5, 0.51677322482397159),
];

/// Ten ranked predictions over 8 labels; sample 4 has no true labels.
pub fn metrics_fixture() -> (Vec<Vec<u32>>, Vec<LabelSet>, PropensityModel) {
    let pred: Vec<Vec<u32>> = vec![
        vec![0, 1, 2, 3, 4],
        vec![7, 6, 5],
        vec![3, 0],
        vec![],
        vec![1, 2, 0, 5, 6],
        vec![6, 7, 0, 1, 2],
        vec![2],
        vec![4, 3, 2, 1, 0],
        vec![0, 5, 7, 2, 4],
        vec![1, 0, 3],
    ];
    let truth: Vec<LabelSet> = [
        vec![0, 2],
        vec![6, 7],
        vec![1],
        vec![0, 1],
        vec![],
        vec![7, 1, 2, 3, 4, 5],
        vec![2, 5],
        vec![0],
        vec![5, 7],
        vec![0, 1, 3],
    ]
    .into_iter()
    .map(LabelSet::new)
    .collect();
    let model = PropensityModel::new(&[50, 20, 10, 5, 3, 2, 1, 0], 100, 0.55, 1.5).unwrap();
    (pred, truth, model)
}
