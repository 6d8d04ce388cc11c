//! Seeded Gaussian projections and the project-and-normalize pipeline.
//!
//! A projection `F` is `r × d` with i.i.d. standard-normal entries. Row `i` of
//! the matrix for seed `s` is stream `(s, i)` of [`GaussianStream`], so `F` is
//! never stored unless a caller materializes it with [`DenseProjection`].
//!
//! Embedding a sample: L2-normalize the sparse input, multiply by `F` touching
//! only its nonzeros (products accumulated in `f64`, rounded to `f32`), then
//! L2-normalize the `r`-dimensional result. Zero inputs stay zero.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::{SparseDataset, SparseRow};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianStream, Namespace};
use crate::par;

/// `(seed, d, r)`: everything needed to regenerate one projection matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub seed: u64,
    pub d: usize,
    pub r: usize,
}

impl EmbeddingSpec {
    pub fn new(seed: u64, d: usize, r: usize) -> Result<Self> {
        if r == 0 || r > d {
            return Err(Error::param(format!("need 1 <= r <= d, got r={r}, d={d}")));
        }
        Ok(EmbeddingSpec { seed, d, r })
    }

    /// Number of entries in the (implicit) projection matrix.
    pub fn parameter_count(&self) -> usize {
        self.r * self.d
    }
}

/// Source of projection-matrix rows.
pub trait Projection: Sync {
    fn d(&self) -> usize;
    fn r(&self) -> usize;

    /// Writes row `row` (length `d`) into `out`.
    fn fill_row(&self, row: usize, out: &mut [f32]);

    /// Writes `F[row, cols[k]]` into `out[k]`.
    fn gather(&self, row: usize, cols: &[u32], out: &mut [f32]);
}

/// The on-the-fly Gaussian projection of an [`EmbeddingSpec`].
#[derive(Debug, Clone, Copy)]
pub struct GaussianProjection {
    spec: EmbeddingSpec,
}

impl GaussianProjection {
    pub fn new(spec: EmbeddingSpec) -> Self {
        GaussianProjection { spec }
    }

    fn stream(&self, row: usize) -> GaussianStream {
        GaussianStream::new(self.spec.seed, Namespace::Projection, row as u64)
    }
}

impl Projection for GaussianProjection {
    fn d(&self) -> usize {
        self.spec.d
    }

    fn r(&self) -> usize {
        self.spec.r
    }

    fn fill_row(&self, row: usize, out: &mut [f32]) {
        self.stream(row).fill(out);
    }

    fn gather(&self, row: usize, cols: &[u32], out: &mut [f32]) {
        let mut s = self.stream(row);
        for (o, &c) in out.iter_mut().zip(cols) {
            *o = s.at(u64::from(c));
        }
    }
}

/// A fully stored row-major projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseProjection {
    r: usize,
    d: usize,
    data: Vec<f32>,
}

impl DenseProjection {
    pub fn from_rows(r: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != r * d {
            return Err(Error::DimensionMismatch {
                expected: r * d,
                actual: data.len(),
            });
        }
        Ok(DenseProjection { r, d, data })
    }

    /// Stores every row of `proj`.
    pub fn materialize<P: Projection + ?Sized>(proj: &P) -> Self {
        let (r, d) = (proj.r(), proj.d());
        let mut data = vec![0.0f32; r * d];
        par::for_each_chunk_mut(&mut data, d, |row, out| proj.fill_row(row, out));
        DenseProjection { r, d, data }
    }

    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0f32; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        DenseProjection { r: d, d, data }
    }

    pub fn scaled(&self, c: f32) -> Self {
        DenseProjection {
            r: self.r,
            d: self.d,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn size_bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<f32>()
    }
}

impl Projection for DenseProjection {
    fn d(&self) -> usize {
        self.d
    }

    fn r(&self) -> usize {
        self.r
    }

    fn fill_row(&self, row: usize, out: &mut [f32]) {
        out.copy_from_slice(self.row(row));
    }

    fn gather(&self, row: usize, cols: &[u32], out: &mut [f32]) {
        let row = self.row(row);
        for (o, &c) in out.iter_mut().zip(cols) {
            *o = row[c as usize];
        }
    }
}

/// Row `row` of the projection matrix described by `spec`.
pub fn materialize_row(spec: &EmbeddingSpec, row: usize) -> Result<Vec<f32>> {
    if row >= spec.r {
        return Err(Error::IndexOutOfRange {
            index: row,
            bound: spec.r,
        });
    }
    let mut out = vec![0.0f32; spec.d];
    GaussianProjection::new(*spec).fill_row(row, &mut out);
    Ok(out)
}

/// Normalization steps around the projection. Both default to on; turning
/// `pre_normalize` off is an ablation switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedOptions {
    pub pre_normalize: bool,
    pub post_normalize: bool,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            pre_normalize: true,
            post_normalize: true,
        }
    }
}

impl EmbedOptions {
    /// Pre-normalized, projected, not re-normalized.
    pub fn raw() -> Self {
        EmbedOptions {
            pre_normalize: true,
            post_normalize: false,
        }
    }
}

/// Summed per-row wall time of the two phases of [`embed_with`] (CPU time
/// when rows run on several workers).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EmbedTimings {
    pub generation: Duration,
    pub projection: Duration,
}

/// Dense `r × n` column-major matrix of embedded samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedMatrix {
    r: usize,
    n: usize,
    data: Vec<f32>,
}

impl EmbeddedMatrix {
    pub fn from_columns(r: usize, n: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != r * n {
            return Err(Error::DimensionMismatch {
                expected: r * n,
                actual: data.len(),
            });
        }
        Ok(EmbeddedMatrix { r, n, data })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, j: usize) -> &[f32] {
        &self.data[j * self.r..(j + 1) * self.r]
    }

    pub fn columns(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.r)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Writes the binary cache and its `.meta` sidecar.
    pub fn save_cache(&self, path: impl AsRef<Path>, spec: &EmbeddingSpec) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.r as u32).to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        let meta = toml::to_string(spec).map_err(|e| Error::Cache(e.to_string()))?;
        fs::write(sidecar_path(path), meta)?;
        Ok(())
    }

    /// Reads a cache written by [`save_cache`](Self::save_cache), verifying
    /// its sidecar against `spec`.
    pub fn load_cache(path: impl AsRef<Path>, spec: &EmbeddingSpec) -> Result<Self> {
        let path = path.as_ref();
        let meta = fs::read_to_string(sidecar_path(path))?;
        let stored: EmbeddingSpec =
            toml::from_str(&meta).map_err(|e| Error::Cache(format!("bad sidecar: {e}")))?;
        if stored != *spec {
            return Err(Error::Cache(format!(
                "cache was built for {stored:?}, requested {spec:?}"
            )));
        }
        let mut rd = BufReader::new(fs::File::open(path)?);
        let mut magic = [0u8; 4];
        rd.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let mut b2 = [0u8; 2];
        rd.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!("unsupported version {version}")));
        }
        let mut b4 = [0u8; 4];
        rd.read_exact(&mut b4)?;
        let r = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        rd.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        if r != spec.r {
            return Err(Error::Cache(format!("header r={r}, spec r={}", spec.r)));
        }
        let mut bytes = Vec::with_capacity(r * n * 4);
        rd.read_to_end(&mut bytes)?;
        if bytes.len() != r * n * 4 {
            return Err(Error::Cache(format!(
                "expected {} payload bytes, found {}",
                r * n * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(EmbeddedMatrix { r, n, data })
    }
}

const CACHE_MAGIC: &[u8; 4] = b"OGEC";
const CACHE_VERSION: u16 = 1;

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn input_scale(row: SparseRow<'_>, opts: EmbedOptions) -> f64 {
    if !opts.pre_normalize {
        return 1.0;
    }
    let norm = row.norm();
    if norm > 0.0 {
        1.0 / norm
    } else {
        0.0
    }
}

/// `Σ_k F[i, idx_k] · x_k · scale`, in index order, rounded to `f32`.
#[inline]
fn row_dot(frow: impl Fn(usize) -> f32, row: SparseRow<'_>, scale: f64) -> f32 {
    let mut acc = 0.0f64;
    for (k, &v) in row.values.iter().enumerate() {
        acc += f64::from(frow(k)) * (f64::from(v) * scale);
    }
    acc as f32
}

fn normalize_in_place(col: &mut [f32]) {
    let norm = col
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        for v in col.iter_mut() {
            *v = (f64::from(*v) / norm) as f32;
        }
    }
}

/// Embeds every sample of `dataset` with the projection of `spec`.
pub fn embed(spec: &EmbeddingSpec, dataset: &SparseDataset) -> Result<EmbeddedMatrix> {
    embed_with(
        &GaussianProjection::new(*spec),
        dataset,
        EmbedOptions::default(),
    )
    .map(|(m, _)| m)
}

/// Embeds every sample of `dataset` with an arbitrary projection.
///
/// Rows of the projection are generated one at a time (in parallel across
/// rows), each pass touching only the dataset's nonzeros. Peak memory is two
/// `r × n` `f32` buffers plus one length-`d` row per worker.
pub fn embed_with<P: Projection + ?Sized>(
    proj: &P,
    dataset: &SparseDataset,
    opts: EmbedOptions,
) -> Result<(EmbeddedMatrix, EmbedTimings)> {
    if dataset.d() != proj.d() {
        return Err(Error::DimensionMismatch {
            expected: proj.d(),
            actual: dataset.d(),
        });
    }
    let (r, n, d) = (proj.r(), dataset.n(), proj.d());
    let scales: Vec<f64> = (0..n)
        .map(|j| input_scale(dataset.features(j), opts))
        .collect();

    let gen_ns = AtomicU64::new(0);
    let proj_ns = AtomicU64::new(0);
    let mut row_major = vec![0.0f32; r * n];
    if n > 0 {
        par::for_each_chunk_mut(&mut row_major, n, |i, out| {
            let t0 = Instant::now();
            let mut frow = vec![0.0f32; d];
            proj.fill_row(i, &mut frow);
            let t1 = Instant::now();
            for (j, o) in out.iter_mut().enumerate() {
                let x = dataset.features(j);
                *o = row_dot(|k| frow[x.indices[k] as usize], x, scales[j]);
            }
            gen_ns.fetch_add((t1 - t0).as_nanos() as u64, Ordering::Relaxed);
            proj_ns.fetch_add(t1.elapsed().as_nanos() as u64, Ordering::Relaxed);
        });
    }

    let t2 = Instant::now();
    let mut data = vec![0.0f32; r * n];
    par::for_each_chunk_mut(&mut data, r.max(1), |j, col| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = row_major[i * n + j];
        }
        if opts.post_normalize {
            normalize_in_place(col);
        }
    });
    let timings = EmbedTimings {
        generation: Duration::from_nanos(gen_ns.into_inner()),
        projection: Duration::from_nanos(proj_ns.into_inner()) + t2.elapsed(),
    };
    Ok((EmbeddedMatrix { r, n, data }, timings))
}

/// Embeds a single query; bit-identical to the matching column of [`embed`].
pub fn embed_single(spec: &EmbeddingSpec, x: SparseRow<'_>) -> Result<Vec<f32>> {
    embed_single_with(&GaussianProjection::new(*spec), x, EmbedOptions::default())
}

pub fn embed_single_with<P: Projection + ?Sized>(
    proj: &P,
    x: SparseRow<'_>,
    opts: EmbedOptions,
) -> Result<Vec<f32>> {
    if let Some(&max) = x.indices.last() {
        if max as usize >= proj.d() {
            return Err(Error::IndexOutOfRange {
                index: max as usize,
                bound: proj.d(),
            });
        }
    }
    let scale = input_scale(x, opts);
    let mut gathered = vec![0.0f32; x.nnz()];
    let mut out: Vec<f32> = (0..proj.r())
        .map(|i| {
            proj.gather(i, x.indices, &mut gathered);
            row_dot(|k| gathered[k], x, scale)
        })
        .collect();
    if opts.post_normalize {
        normalize_in_place(&mut out);
    }
    Ok(out)
}
