//! Ranking metrics: P@K, nDCG@K and their propensity-scored variants.
//!
//! Conventions:
//! - a predicted list shorter than `K` counts its missing slots as misses;
//! - nDCG uses gain 1 and discount `1/log2(rank + 1)`;
//! - propensity-scored metrics weight a hit on label `l` by `1/p_l` and are
//!   divided by the best score attainable for the sample (its true labels
//!   ranked by ascending propensity), so they lie in `[0, 1]`;
//! - samples with no true labels are left out of every mean and counted.

use std::fmt;

use crate::data::LabelLookup;
use crate::error::{Error, Result};
use crate::predictor::{top_k_labels, PredictTimings, ScoreVector};

/// Cut-offs reported by [`EvalReport`].
pub const CUTOFFS: [usize; 3] = [1, 3, 5];

/// Default sigmoid parameters of the propensity model.
pub const DEFAULT_PROPENSITY_A: f64 = 0.55;
pub const DEFAULT_PROPENSITY_B: f64 = 1.5;

/// Per-label propensities `p_l = 1 / (1 + C · (N_l + B)^-A)` with
/// `C = (ln n − 1)(B + 1)^A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    propensities: Vec<f64>,
}

impl PropensityModel {
    /// Fits the model to training label frequencies `N_l` over `n` samples.
    ///
    /// For `n < e` the constant `C` would be negative; it is clamped at 0,
    /// which gives every label propensity 1.
    pub fn new(frequencies: &[u32], n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("propensity model needs n >= 1"));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::param(format!("propensity A must lie in (0, 1), got {a}")));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::param(format!("propensity B must be >= 0, got {b}")));
        }
        let c = (((n as f64).ln() - 1.0) * (b + 1.0).powf(a)).max(0.0);
        let mut propensities = Vec::with_capacity(frequencies.len());
        for (l, &nl) in frequencies.iter().enumerate() {
            let base = f64::from(nl) + b;
            if base <= 0.0 {
                if c == 0.0 {
                    propensities.push(1.0);
                    continue;
                }
                return Err(Error::param(format!(
                    "label {l} never occurs in training; B must be > 0"
                )));
            }
            propensities.push(1.0 / (1.0 + c * (-a * base.ln()).exp()));
        }
        Ok(PropensityModel {
            a,
            b,
            c,
            propensities,
        })
    }

    /// Every label with the same propensity `p`.
    pub fn constant(num_labels: usize, p: f64) -> Self {
        PropensityModel {
            a: f64::NAN,
            b: f64::NAN,
            c: f64::NAN,
            propensities: vec![p; num_labels],
        }
    }

    pub fn propensities(&self) -> &[f64] {
        &self.propensities
    }

    pub fn get(&self, label: u32) -> f64 {
        self.propensities[label as usize]
    }

    pub fn num_labels(&self) -> usize {
        self.propensities.len()
    }
}

#[inline]
fn discount(rank0: usize) -> f64 {
    1.0 / ((rank0 + 2) as f64).log2()
}

#[inline]
fn hit(truth: &[u32], label: u32) -> bool {
    truth.binary_search(&label).is_ok()
}

/// `|top-K predicted ∩ truth| / K`. `truth` must be sorted.
pub fn precision_at_k(predicted: &[u32], truth: &[u32], k: usize) -> f64 {
    let hits = predicted.iter().take(k).filter(|&&l| hit(truth, l)).count();
    hits as f64 / k as f64
}

/// DCG@K / iDCG@K; 0 when `truth` is empty.
pub fn ndcg_at_k(predicted: &[u32], truth: &[u32], k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let dcg: f64 = predicted
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &l)| hit(truth, l))
        .map(|(i, _)| discount(i))
        .sum();
    let idcg: f64 = (0..k.min(truth.len())).map(discount).sum();
    dcg / idcg
}

/// Inverse propensities of the true labels, largest first.
fn ideal_weights(truth: &[u32], model: &PropensityModel, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = truth.iter().map(|&l| 1.0 / model.get(l)).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    w.truncate(k);
    w
}

/// Propensity-scored precision@K normalized by the per-sample ideal.
pub fn psp_at_k(predicted: &[u32], truth: &[u32], model: &PropensityModel, k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let num: f64 = predicted
        .iter()
        .take(k)
        .filter(|&&l| hit(truth, l))
        .map(|&l| 1.0 / model.get(l))
        .sum();
    let den: f64 = ideal_weights(truth, model, k).iter().sum();
    num / den
}

/// Propensity-scored nDCG@K normalized by the per-sample ideal.
pub fn psn_at_k(predicted: &[u32], truth: &[u32], model: &PropensityModel, k: usize) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let num: f64 = predicted
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &l)| hit(truth, l))
        .map(|(i, &l)| discount(i) / model.get(l))
        .sum();
    let den: f64 = ideal_weights(truth, model, k)
        .iter()
        .enumerate()
        .map(|(i, w)| w * discount(i))
        .sum();
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Precision,
    Ndcg,
    PsPrecision,
    PsNdcg,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Precision,
        Metric::Ndcg,
        Metric::PsPrecision,
        Metric::PsNdcg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Precision => "P",
            Metric::Ndcg => "N",
            Metric::PsPrecision => "PSP",
            Metric::PsNdcg => "PSN",
        }
    }
}

/// Twelve metric means (4 metrics × K ∈ {1, 3, 5}).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    /// `values[metric][cutoff]`, fractions in `[0, 1]`.
    pub values: [[f64; 3]; 4],
    /// Samples included in the means.
    pub samples: usize,
    /// Samples skipped for having no true labels.
    pub skipped_empty: usize,
    pub timings: Option<PredictTimings>,
}

impl EvalReport {
    pub fn get(&self, metric: Metric, k: usize) -> f64 {
        let ki = CUTOFFS
            .iter()
            .position(|&c| c == k)
            .unwrap_or_else(|| panic!("cutoff {k} not reported"));
        self.values[metric as usize][ki]
    }

    /// Element-wise mean and sample standard deviation over `reports`.
    pub fn mean_std(reports: &[EvalReport]) -> (EvalReport, EvalReport) {
        let mut mean = EvalReport::default();
        let mut std = EvalReport::default();
        let n = reports.len() as f64;
        if reports.is_empty() {
            return (mean, std);
        }
        for m in 0..4 {
            for k in 0..3 {
                let mu = reports.iter().map(|r| r.values[m][k]).sum::<f64>() / n;
                let var = if reports.len() > 1 {
                    reports
                        .iter()
                        .map(|r| (r.values[m][k] - mu).powi(2))
                        .sum::<f64>()
                        / (n - 1.0)
                } else {
                    0.0
                };
                mean.values[m][k] = mu;
                std.values[m][k] = var.sqrt();
            }
        }
        mean.samples = reports[0].samples;
        mean.skipped_empty = reports[0].skipped_empty;
        (mean, std)
    }

    /// `metric\tK\tvalue` rows plus sample counts.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("metric\tK\tvalue\n");
        for m in Metric::ALL {
            for (ki, k) in CUTOFFS.iter().enumerate() {
                s += &format!("{}\t{}\t{:.10}\n", m.name(), k, self.values[m as usize][ki]);
            }
        }
        s += &format!("samples\t-\t{}\nskipped_empty\t-\t{}\n", self.samples, self.skipped_empty);
        s
    }
}

impl fmt::Display for EvalReport {
    /// Metric × K grid in percent.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6}{:>10}{:>10}{:>10}{:>10}", "@K", "Prec.", "nDCG", "PS-Prec.", "PS-nDCG")?;
        for (ki, k) in CUTOFFS.iter().enumerate() {
            write!(f, "{:<6}", format!("@{k}"))?;
            for m in 0..4 {
                write!(f, "{:>10.2}", 100.0 * self.values[m][ki])?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "samples: {} (skipped without labels: {})",
            self.samples, self.skipped_empty
        )
    }
}

/// Evaluates ranked label lists (best first) against the truth.
pub fn evaluate_ranked<L: LabelLookup + ?Sized>(
    ranked: &[Vec<u32>],
    truth: &L,
    model: &PropensityModel,
) -> Result<EvalReport> {
    if ranked.len() != truth.label_count() {
        return Err(Error::DimensionMismatch {
            expected: truth.label_count(),
            actual: ranked.len(),
        });
    }
    let mut report = EvalReport::default();
    for (i, pred) in ranked.iter().enumerate() {
        let t = truth.sample_labels(i);
        if t.is_empty() {
            report.skipped_empty += 1;
            continue;
        }
        let bound = model.num_labels();
        if let Some(&l) = t.iter().chain(pred).find(|&&l| l as usize >= bound) {
            return Err(Error::IndexOutOfRange {
                index: l as usize,
                bound,
            });
        }
        for (ki, &k) in CUTOFFS.iter().enumerate() {
            report.values[0][ki] += precision_at_k(pred, t, k);
            report.values[1][ki] += ndcg_at_k(pred, t, k);
            report.values[2][ki] += psp_at_k(pred, t, model, k);
            report.values[3][ki] += psn_at_k(pred, t, model, k);
        }
        report.samples += 1;
    }
    if report.samples > 0 {
        let n = report.samples as f64;
        for row in report.values.iter_mut() {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
    }
    Ok(report)
}

/// Evaluates score vectors (ranked by [`top_k_labels`]) against the truth.
pub fn evaluate<L: LabelLookup + ?Sized>(
    predictions: &[ScoreVector],
    truth: &L,
    model: &PropensityModel,
) -> Result<EvalReport> {
    let max_k = *CUTOFFS.last().unwrap();
    let ranked: Vec<Vec<u32>> = predictions.iter().map(|s| top_k_labels(s, max_k)).collect();
    evaluate_ranked(&ranked, truth, model)
}
