//! Distortion bounds of random projections and their empirical check.
//!
//! The bound uses `ε = sqrt(log10(n) / r)` with `n` training samples and `r`
//! output dimensions; this is the form that reproduces the published
//! Delicious-200K / Amazon-670K / Amazon-3M bound tables.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{SparseDataset, SparseRow};
use crate::embedding::{embed_with, EmbedOptions, EmbeddingSpec, GaussianProjection, Projection};
use crate::error::{Error, Result};
use crate::gaussian::Namespace;

/// Training-set sizes of the three benchmark datasets.
pub const BENCHMARK_DATASETS: [(&str, usize); 3] = [
    ("Delicious-200K", 196_606),
    ("Amazon-670K", 490_449),
    ("Amazon-3M", 1_717_899),
];

/// Output dimensions swept in the bound table.
pub const R_SWEEP: [usize; 8] = [50, 100, 150, 200, 250, 300, 350, 400];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub n: usize,
    pub r: usize,
    pub epsilon: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BoundReport {
    pub fn contains(&self, ratio: f64) -> bool {
        ratio >= self.lower && ratio <= self.upper
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}\t{:.4}\t{:.4}", self.epsilon, self.lower, self.upper)
    }
}

pub fn jl_epsilon(n: usize, r: usize) -> Result<BoundReport> {
    if n < 2 {
        return Err(Error::param(format!("need n >= 2, got {n}")));
    }
    if r == 0 {
        return Err(Error::param("need r >= 1"));
    }
    let epsilon = ((n as f64).log10() / r as f64).sqrt();
    Ok(BoundReport {
        n,
        r,
        epsilon,
        lower: 1.0 - epsilon,
        upper: 1.0 + epsilon,
    })
}

/// Bound table for the benchmark datasets at `r`.
pub fn dataset_table(r: usize) -> Vec<(&'static str, BoundReport)> {
    BENCHMARK_DATASETS
        .iter()
        .map(|&(name, n)| (name, jl_epsilon(n, r).expect("valid table entry")))
        .collect()
}

/// Bound table for one dataset size over [`R_SWEEP`].
pub fn r_sweep_table(n: usize) -> Result<Vec<BoundReport>> {
    R_SWEEP.iter().map(|&r| jl_epsilon(n, r)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub bound: BoundReport,
    /// Pairs with nonzero original distance.
    pub pairs: usize,
    /// Pairs skipped because the two samples coincide after normalization.
    pub skipped_zero: usize,
    pub within: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub histogram: Vec<HistogramBin>,
    /// Ratio of every evaluated pair, in sampling order.
    pub ratios: Vec<f64>,
}

impl DistortionReport {
    pub fn fraction_within(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.within as f64 / self.pairs as f64
        }
    }

    /// `bin_lo\tbin_hi\tcount` rows.
    pub fn histogram_tsv(&self) -> String {
        let mut s = String::from("bin_lo\tbin_hi\tcount\n");
        for b in &self.histogram {
            s += &format!("{:.4}\t{:.4}\t{}\n", b.lo, b.hi, b.count);
        }
        s
    }
}

/// Histogram layout for [`measure_distortion_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            bins: 50,
            lo: 0.5,
            hi: 1.5,
        }
    }
}

/// Samples `pairs` index pairs `i != j` uniformly.
pub fn sample_pairs(n: usize, pairs: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((Namespace::PairSampling as u64) << 48);
    (0..pairs)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect()
}

fn normalized_distance(a: SparseRow<'_>, b: SparseRow<'_>) -> f64 {
    let sa = if a.norm() > 0.0 { 1.0 / a.norm() } else { 0.0 };
    let sb = if b.norm() > 0.0 { 1.0 / b.norm() } else { 0.0 };
    let (mut p, mut q, mut acc) = (0, 0, 0.0f64);
    while p < a.nnz() || q < b.nnz() {
        let ia = a.indices.get(p).copied().unwrap_or(u32::MAX);
        let ib = b.indices.get(q).copied().unwrap_or(u32::MAX);
        let diff = if ia == ib {
            let v = f64::from(a.values[p]) * sa - f64::from(b.values[q]) * sb;
            p += 1;
            q += 1;
            v
        } else if ia < ib {
            p += 1;
            f64::from(a.values[p - 1]) * sa
        } else {
            q += 1;
            -f64::from(b.values[q - 1]) * sb
        };
        acc += diff * diff;
    }
    acc.sqrt()
}

pub fn measure_distortion(
    dataset: &SparseDataset,
    spec: &EmbeddingSpec,
    pairs: usize,
    seed: u64,
) -> Result<DistortionReport> {
    measure_distortion_with(
        dataset,
        &GaussianProjection::new(*spec),
        pairs,
        seed,
        HistogramSpec::default(),
    )
}

/// Ratio `‖F x̂_i − F x̂_j‖ / (√r ‖x̂_i − x̂_j‖)` over sampled pairs, where `x̂`
/// is the L2-normalized input and the projection is not re-normalized.
pub fn measure_distortion_with<P: Projection + ?Sized>(
    dataset: &SparseDataset,
    proj: &P,
    pairs: usize,
    seed: u64,
    hist: HistogramSpec,
) -> Result<DistortionReport> {
    if dataset.d() != proj.d() {
        return Err(Error::DimensionMismatch {
            expected: proj.d(),
            actual: dataset.d(),
        });
    }
    if pairs == 0 {
        return Err(Error::param("need at least one pair"));
    }
    if hist.bins == 0 || hist.hi.partial_cmp(&hist.lo) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::param("bad histogram range"));
    }
    let n = dataset.n();
    let bound = jl_epsilon(n, proj.r())?;
    let sampled = sample_pairs(n, pairs, seed);

    let mut involved: Vec<usize> = sampled.iter().flat_map(|&(i, j)| [i, j]).collect();
    involved.sort_unstable();
    involved.dedup();
    let (projected, _) = embed_with(proj, &dataset.subset(&involved), EmbedOptions::raw())?;
    let col = |i: usize| projected.column(involved.binary_search(&i).expect("sampled index"));
    let scale = 1.0 / (proj.r() as f64).sqrt();

    let mut ratios = Vec::with_capacity(pairs);
    let mut skipped_zero = 0;
    for &(i, j) in &sampled {
        let orig = normalized_distance(dataset.features(i), dataset.features(j));
        if orig == 0.0 {
            skipped_zero += 1;
            continue;
        }
        let proj_dist = col(i)
            .iter()
            .zip(col(j))
            .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
            .sum::<f64>()
            .sqrt();
        ratios.push(proj_dist * scale / orig);
    }

    let width = (hist.hi - hist.lo) / hist.bins as f64;
    let mut histogram: Vec<HistogramBin> = (0..hist.bins)
        .map(|b| HistogramBin {
            lo: hist.lo + b as f64 * width,
            hi: hist.lo + (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &q in &ratios {
        let b = ((q - hist.lo) / width).floor().clamp(0.0, (hist.bins - 1) as f64) as usize;
        histogram[b].count += 1;
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        f64::NAN
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };

    Ok(DistortionReport {
        bound,
        pairs: ratios.len(),
        skipped_zero,
        within: ratios.iter().filter(|&&q| bound.contains(q)).count(),
        min: sorted.first().copied().unwrap_or(f64::NAN),
        median,
        max: sorted.last().copied().unwrap_or(f64::NAN),
        histogram,
        ratios,
    })
}
