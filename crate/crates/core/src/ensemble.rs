//! Seed ensembles: one learner per seed, fused by uniform score averaging.
//!
//! Learners are always accumulated in ascending seed order, so the fused
//! scores do not depend on the order in which seeds were listed.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::SparseDataset;
use crate::embedding::EmbeddingSpec;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, PropensityModel};
use crate::predictor::{Learner, PredictOptions, PredictTimings, ScoreVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub seeds: Vec<u64>,
    pub d: usize,
    pub r: usize,
    pub k: usize,
}

impl EnsembleSpec {
    pub fn new(seeds: Vec<u64>, d: usize, r: usize, k: usize) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::param("ensemble needs at least one seed"));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("ensemble seeds must be distinct"));
        }
        Self::new_unchecked(seeds, d, r, k)
    }

    /// Like [`new`](Self::new) but allows repeated seeds.
    pub fn new_unchecked(seeds: Vec<u64>, d: usize, r: usize, k: usize) -> Result<Self> {
        EmbeddingSpec::new(0, d, r)?;
        if k == 0 {
            return Err(Error::param("k must be >= 1"));
        }
        Ok(EnsembleSpec { seeds, d, r, k })
    }

    /// Seeds `base, base+1, …, base+size-1`.
    pub fn consecutive(base_seed: u64, size: usize, d: usize, r: usize, k: usize) -> Result<Self> {
        let seeds = (0..size as u64).map(|i| base_seed.wrapping_add(i)).collect();
        Self::new(seeds, d, r, k)
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn embedding(&self, seed: u64) -> EmbeddingSpec {
        EmbeddingSpec {
            seed,
            d: self.d,
            r: self.r,
        }
    }

    /// The first `size` seeds as an ensemble of their own.
    pub fn prefix(&self, size: usize) -> Result<Self> {
        if size == 0 || size > self.len() {
            return Err(Error::param(format!(
                "ensemble size {size} outside 1..={}",
                self.len()
            )));
        }
        Ok(EnsembleSpec {
            seeds: self.seeds[..size].to_vec(),
            ..self.clone()
        })
    }

    fn seed_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| self.seeds[i]);
        order
    }

    fn check_dataset(&self, ds: &SparseDataset) -> Result<()> {
        if ds.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: ds.d(),
            });
        }
        Ok(())
    }
}

/// Whether to keep every learner's embedded training matrix alive at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemoryMode {
    /// Embed, predict and drop one learner at a time.
    #[default]
    Reembed,
    /// Embed all learners up front.
    HoldAll,
}

/// `score[w] = (1/E) Σ_e score_e[w]`, summing in the given order.
pub fn fuse(learner_scores: &[&ScoreVector]) -> ScoreVector {
    let mut sum = ScoreVector::new();
    for s in learner_scores {
        for (l, v) in s.iter() {
            sum.add(l, v);
        }
    }
    sum.divided(learner_scores.len() as f64)
}

/// Ensemble prediction for a single query. Embeds the training set once per
/// learner; use [`predict_ensemble_batch`] for many queries.
pub fn predict_ensemble(
    spec: &EnsembleSpec,
    dataset: &SparseDataset,
    query: crate::data::SparseRow<'_>,
) -> Result<ScoreVector> {
    spec.check_dataset(dataset)?;
    let mut per_learner = Vec::with_capacity(spec.len());
    for i in spec.seed_order() {
        let learner = Learner::fit(spec.embedding(spec.seeds[i]), dataset)?;
        per_learner.push(crate::predictor::predict(
            &learner.spec,
            &learner.train,
            dataset,
            dataset.num_labels(),
            query,
            spec.k,
        )?);
    }
    Ok(fuse(&per_learner.iter().collect::<Vec<_>>()))
}

/// Fused predictions for every sample of `test`.
pub fn predict_ensemble_batch(
    spec: &EnsembleSpec,
    train: &SparseDataset,
    test: &SparseDataset,
    opts: &PredictOptions,
    mode: MemoryMode,
) -> Result<(Vec<ScoreVector>, PredictTimings)> {
    predict_ensemble_batch_with(spec, train, test, opts, mode, |e| Learner::fit(e, train))
}

/// [`predict_ensemble_batch`] with learners supplied by `make_learner`
/// (e.g. loaded from an embedded-matrix cache).
pub fn predict_ensemble_batch_with<F>(
    spec: &EnsembleSpec,
    train: &SparseDataset,
    test: &SparseDataset,
    opts: &PredictOptions,
    mode: MemoryMode,
    make_learner: F,
) -> Result<(Vec<ScoreVector>, PredictTimings)>
where
    F: Fn(EmbeddingSpec) -> Result<Learner>,
{
    spec.check_dataset(train)?;
    spec.check_dataset(test)?;
    let opts = PredictOptions { k: spec.k, ..*opts };
    let mut timings = PredictTimings::default();
    let mut sums = vec![ScoreVector::new(); test.n()];

    let mut absorb = |learner: &Learner, fit_time: Duration, timings: &mut PredictTimings| -> Result<()> {
        timings.matrix_generation += learner.fit_timings.generation;
        timings.embedding += fit_time.saturating_sub(learner.fit_timings.generation);
        let (preds, t) = learner.predict_batch(train, train.num_labels(), test, &opts)?;
        timings.accumulate(&t);
        for (acc, p) in sums.iter_mut().zip(&preds) {
            for (l, v) in p.iter() {
                acc.add(l, v);
            }
        }
        Ok(())
    };

    let timed = |i: usize| -> Result<(Learner, Duration)> {
        let t = Instant::now();
        let l = make_learner(spec.embedding(spec.seeds[i]))?;
        Ok((l, t.elapsed()))
    };
    match mode {
        MemoryMode::Reembed => {
            for i in spec.seed_order() {
                let (learner, fit_time) = timed(i)?;
                absorb(&learner, fit_time, &mut timings)?;
            }
        }
        MemoryMode::HoldAll => {
            let learners = spec
                .seed_order()
                .into_iter()
                .map(timed)
                .collect::<Result<Vec<_>>>()?;
            for (learner, fit_time) in &learners {
                absorb(learner, *fit_time, &mut timings)?;
            }
        }
    }
    let e = spec.len() as f64;
    Ok((sums.iter().map(|s| s.divided(e)).collect(), timings))
}

/// Metrics of a fused prefix of the ensemble.
#[derive(Debug, Clone)]
pub struct SizeReport {
    pub size: usize,
    pub report: EvalReport,
}

/// Result of [`sweep_ensemble_size`].
#[derive(Debug, Clone)]
pub struct EnsembleSweep {
    pub sizes: Vec<SizeReport>,
    /// Each learner evaluated alone, in spec order.
    pub single: Vec<EvalReport>,
}

impl EnsembleSweep {
    /// Mean and sample standard deviation of the single-learner reports.
    pub fn single_mean_std(&self) -> (EvalReport, EvalReport) {
        EvalReport::mean_std(&self.single)
    }
}

/// Evaluates the fusion of the first `s` seeds for every `s` in `sizes`.
pub fn sweep_ensemble_size(
    spec: &EnsembleSpec,
    train: &SparseDataset,
    test: &SparseDataset,
    sizes: &[usize],
    model: &PropensityModel,
    opts: &PredictOptions,
) -> Result<EnsembleSweep> {
    spec.check_dataset(train)?;
    let max = sizes.iter().copied().max().unwrap_or(0);
    if max > spec.len() {
        return Err(Error::param(format!(
            "ensemble size {max} exceeds the {} available seeds",
            spec.len()
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::param("ensemble size must be >= 1"));
    }
    let opts = PredictOptions { k: spec.k, ..*opts };
    let per_learner: Vec<Vec<ScoreVector>> = spec.seeds[..max]
        .iter()
        .map(|&seed| {
            let learner = Learner::fit(spec.embedding(seed), train)?;
            learner
                .predict_batch(train, train.num_labels(), test, &opts)
                .map(|(p, _)| p)
        })
        .collect::<Result<_>>()?;

    let single = per_learner
        .iter()
        .map(|p| evaluate(p, test, model))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let prefix = spec.prefix(size)?;
        let order = prefix.seed_order();
        let fused: Vec<ScoreVector> = (0..test.n())
            .map(|q| {
                let parts: Vec<&ScoreVector> = order.iter().map(|&e| &per_learner[e][q]).collect();
                fuse(&parts)
            })
            .collect();
        out.push(SizeReport {
            size,
            report: evaluate(&fused, test, model)?,
        });
    }
    Ok(EnsembleSweep {
        sizes: out,
        single,
    })
}

/// The whole persisted "model": seeds and shapes, no learned parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub ensemble_size: usize,
}

impl ModelMetadata {
    pub fn new(base_seed: u64, spec: &EnsembleSpec) -> Self {
        ModelMetadata {
            base_seed,
            seeds: spec.seeds.clone(),
            d: spec.d,
            r: spec.r,
            k: spec.k,
            ensemble_size: spec.len(),
        }
    }

    pub fn to_spec(&self) -> Result<EnsembleSpec> {
        if self.seeds.len() != self.ensemble_size {
            return Err(Error::param("metadata seed list disagrees with ensemble_size"));
        }
        EnsembleSpec::new(self.seeds.clone(), self.d, self.r, self.k)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metadata serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::param(format!("bad model metadata: {e}")))
    }
}
