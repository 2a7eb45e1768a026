//! Dataset ingestion, z-score normalization and synthetic generators.
//!
//! A [`Dataset`] stores `n` points of dimension `dim` column-oriented
//! (each point contiguous), optional integer ground-truth labels, and the
//! normalization record when the data has been z-scored.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature shift and scale recorded by [`zscore_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// A column-oriented real matrix of points with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<f64>,
    n: usize,
    dim: usize,
    labels: Option<Vec<i64>>,
    norm_params: Option<NormParams>,
    pixel_scale: Option<f64>,
}

impl Dataset {
    /// Builds a dataset from a flat buffer laid out point-major
    /// (point `i` occupies `points[i*dim .. (i+1)*dim]`).
    pub fn from_flat(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::EmptyDataset);
        }
        for (idx, &v) in points.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteData {
                    point: idx / dim,
                    feature: idx % dim,
                });
            }
        }
        let n = points.len() / dim;
        Ok(Dataset {
            points,
            n,
            dim,
            labels: None,
            norm_params: None,
            pixel_scale: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::LengthMismatch {
                left: self.n,
                right: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn norm_params(&self) -> Option<&NormParams> {
        self.norm_params.as_ref()
    }

    /// The divisor applied by [`flatten_image_table`], kept so cluster
    /// centers can be mapped back to pixel values.
    pub fn pixel_scale(&self) -> Option<f64> {
        self.pixel_scale
    }
}

/// Per-feature z-score normalization: subtract the mean, divide by the
/// population standard deviation. The original mean and deviation are
/// recorded on the returned dataset. Errors on a zero-variance feature,
/// naming it.
pub fn zscore_normalize(ds: &Dataset) -> Result<Dataset> {
    let (n, dim) = (ds.n, ds.dim);
    let mut mean = vec![0.0; dim];
    for i in 0..n {
        for (d, m) in mean.iter_mut().enumerate() {
            *m += ds.points[i * dim + d];
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = vec![0.0; dim];
    for i in 0..n {
        for (d, v) in var.iter_mut().enumerate() {
            let c = ds.points[i * dim + d] - mean[d];
            *v += c * c;
        }
    }
    let mut std = vec![0.0; dim];
    for (d, v) in var.iter().enumerate() {
        let s = (v / n as f64).sqrt();
        if s == 0.0 {
            return Err(Error::ZeroVariance { feature: d });
        }
        std[d] = s;
    }
    let mut points = Vec::with_capacity(n * dim);
    for i in 0..n {
        for d in 0..dim {
            points.push((ds.points[i * dim + d] - mean[d]) / std[d]);
        }
    }
    Ok(Dataset {
        points,
        n,
        dim,
        labels: ds.labels.clone(),
        norm_params: Some(NormParams { mean, std }),
        pixel_scale: ds.pixel_scale,
    })
}

/// Parameters for the Gaussian blob generator.
///
/// Centers are drawn uniformly from `[-center_box, center_box]^dim`; when
/// `min_separation > 0` candidates closer than that to an accepted center
/// are redrawn, which guarantees separable instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n: usize,
    pub k_true: usize,
    pub dim: usize,
    pub sigma: f64,
    pub center_box: f64,
    pub min_separation: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn new(n: usize, k_true: usize, dim: usize, sigma: f64, seed: u64) -> Self {
        BlobSpec {
            n,
            k_true,
            dim,
            sigma,
            center_box: 10.0,
            min_separation: 0.0,
            seed,
        }
    }

    pub fn with_center_box(mut self, b: f64) -> Self {
        self.center_box = b;
        self
    }

    pub fn with_min_separation(mut self, s: f64) -> Self {
        self.min_separation = s;
        self
    }
}

/// Generates `n` points split evenly over `k_true` isotropic Gaussian blobs,
/// with ground-truth labels attached. Deterministic per seed.
pub fn gaussian_blobs(spec: &BlobSpec) -> Result<Dataset> {
    let BlobSpec {
        n,
        k_true,
        dim,
        sigma,
        center_box,
        min_separation,
        seed,
    } = *spec;
    if k_true == 0 || n < k_true {
        return Err(Error::InvalidConfig(format!(
            "need n >= k_true >= 1, got n = {n}, k_true = {k_true}"
        )));
    }
    if dim == 0 || sigma < 0.0 || center_box <= 0.0 || min_separation < 0.0 {
        return Err(Error::InvalidConfig("blob parameters out of range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers: Vec<f64> = Vec::with_capacity(k_true * dim);
    let mut attempts = 0usize;
    while centers.len() < k_true * dim {
        let cand: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-center_box..center_box))
            .collect();
        let ok = min_separation == 0.0
            || centers.chunks(dim).all(|c| {
                let d2: f64 = c.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 >= min_separation * min_separation
            });
        if ok {
            centers.extend_from_slice(&cand);
        } else {
            attempts += 1;
            if attempts > 1000 * k_true {
                return Err(Error::InvalidConfig(format!(
                    "could not place {k_true} centers at separation {min_separation} in a box of half-width {center_box}"
                )));
            }
        }
    }

    let base = n / k_true;
    let extra = n % k_true;
    let mut points = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for j in 0..k_true {
        let size = base + usize::from(j < extra);
        let center = &centers[j * dim..(j + 1) * dim];
        for _ in 0..size {
            for &c in center {
                let noise: f64 = rng.sample(StandardNormal);
                points.push(c + sigma * noise);
            }
            labels.push(j as i64);
        }
    }
    Dataset::from_flat(points, dim)?.with_labels(labels)
}

/// Options for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// The last column holds integer ground-truth labels.
    pub has_labels: bool,
    /// Skip one header row.
    pub has_header: bool,
    /// Interpret CSV columns (not rows) as points. Incompatible with
    /// `has_labels`.
    pub points_as_columns: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            has_labels: false,
            has_header: false,
            points_as_columns: false,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a rectangular numeric table as a dataset. Rejects ragged rows and
/// non-numeric cells with their coordinates.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    if opts.has_labels && opts.points_as_columns {
        return Err(Error::InvalidConfig(
            "label column requires row-oriented points".into(),
        ));
    }
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut width: Option<usize> = None;
    for (ridx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::RaggedRow {
                row: ridx,
                expected: w,
                found: rec.len(),
            });
        }
        let ncols = if opts.has_labels { w - 1 } else { w };
        let mut row = Vec::with_capacity(ncols);
        for (cidx, field) in rec.iter().enumerate() {
            if opts.has_labels && cidx == w - 1 {
                let lab: i64 = field.parse().map_err(|_| Error::NonNumericCell {
                    row: ridx,
                    col: cidx,
                    content: field.to_string(),
                })?;
                labels.push(lab);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::NonNumericCell {
                    row: ridx,
                    col: cidx,
                    content: field.to_string(),
                })?;
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let ds = if opts.points_as_columns {
        let dim = rows.len();
        let n = rows[0].len();
        let mut points = Vec::with_capacity(n * dim);
        for i in 0..n {
            for row in &rows {
                points.push(row[i]);
            }
        }
        Dataset::from_flat(points, dim)?
    } else {
        let dim = rows[0].len();
        let points: Vec<f64> = rows.into_iter().flatten().collect();
        Dataset::from_flat(points, dim)?
    };
    if opts.has_labels {
        ds.with_labels(labels)
    } else {
        Ok(ds)
    }
}

/// Writes a dataset as rows of points with the label as a trailing integer
/// column when present. Floats are printed in shortest round-trip form, so
/// `load_csv` recovers the dataset bit-exactly.
pub fn save_csv(ds: &Dataset, path: &Path, delimiter: u8) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(file);
    for i in 0..ds.n {
        let mut fields: Vec<String> = ds.point(i).iter().map(|v| format!("{v}")).collect();
        if let Some(labels) = &ds.labels {
            fields.push(labels[i].to_string());
        }
        writer.write_record(&fields).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Ingests a pre-flattened RGB pixel table (one row per pixel, three
/// channels) and divides every channel by `scale` (255 for 8-bit images).
/// The scale is retained on the dataset for reconstruction.
pub fn flatten_image_table(path: &Path, scale: f64) -> Result<Dataset> {
    if scale <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "pixel scale must be positive, got {scale}"
        )));
    }
    let raw = load_csv(path, &CsvOptions::default())?;
    if raw.dim != 3 {
        return Err(Error::NotAPixelTable {
            path: path.to_path_buf(),
            cols: raw.dim,
        });
    }
    let points: Vec<f64> = raw.points.iter().map(|v| v / scale).collect();
    let mut ds = Dataset::from_flat(points, 3)?;
    ds.pixel_scale = Some(scale);
    Ok(ds)
}

/// Maps cluster centers back to pixel values: every point is replaced by its
/// center scaled by the dataset's pixel scale (1 when absent), giving the
/// reconstructed pixel table row-major.
pub fn reconstruct_pixels(ds: &Dataset, centers: &[f64], labels: &[usize]) -> Vec<f64> {
    let dim = ds.dim;
    let scale = ds.pixel_scale.unwrap_or(1.0);
    let mut out = Vec::with_capacity(ds.n * dim);
    for &label in labels {
        for d in 0..dim {
            out.push(centers[label * dim + d] * scale);
        }
    }
    out
}
