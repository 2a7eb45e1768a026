//! Reproduction harness: runs configured experiments over
//! (mode x delta x seed) cells, aggregates the metrics, and emits result
//! tables and plot-ready curves. Outputs are deterministic: an identical
//! spec produces byte-identical files.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{self, BlobSpec, CsvOptions, Dataset};
use crate::distance::{dist_sq_gram, gram_form_error_bound, kernel_matrix_diff, PrecisionContext};
use crate::error::{Error, Result};
use crate::kmeans::{
    assign, center_update_precision_bound, converged, fit, seed_d2, update_centers, KMeansConfig,
    Mode,
};
use crate::metrics::MetricsReport;
use crate::simfloat::{gamma, inner_product, round_to_format, FloatFormat, FormatName, FP64};

/// Where the experiment's points come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSpec {
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_labels: bool,
        #[serde(default)]
        has_header: bool,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
    /// Pre-flattened RGB pixel table; channels divided by `scale`.
    Image {
        path: PathBuf,
        scale: f64,
    },
    Blobs(BlobSpec),
}

fn default_delimiter() -> char {
    ','
}

impl DataSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSpec::Csv {
                path,
                has_labels,
                has_header,
                delimiter,
            } => {
                let opts = CsvOptions {
                    delimiter: *delimiter as u8,
                    has_labels: *has_labels,
                    has_header: *has_header,
                    points_as_columns: false,
                };
                data::load_csv(path, &opts)
            }
            DataSpec::Image { path, scale } => data::flatten_image_table(path, *scale),
            DataSpec::Blobs(spec) => data::gaussian_blobs(spec),
        }
    }
}

/// One experiment: a dataset crossed with modes, trigger thresholds and
/// seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub data: DataSpec,
    pub normalize: bool,
    pub k: usize,
    pub modes: Vec<Mode>,
    pub low_format: FormatName,
    /// Trigger thresholds for mixed mode; other modes ignore them.
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub max_iter: usize,
    pub tol: f64,
    pub rescue: bool,
}

impl ExperimentSpec {
    /// Working mode, delta 2, seeds 0..=4, fp16 low format.
    pub fn new(data: DataSpec, k: usize) -> Self {
        ExperimentSpec {
            data,
            normalize: false,
            k,
            modes: vec![Mode::Working],
            low_format: FormatName::Fp16,
            deltas: vec![2.0],
            seeds: vec![0, 1, 2, 3, 4],
            max_iter: 300,
            tol: 1e-4,
            rescue: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig(
                "experiment needs at least one mode".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig(
                "experiment needs at least one seed".into(),
            ));
        }
        if self.deltas.is_empty() {
            return Err(Error::InvalidConfig(
                "experiment needs at least one delta".into(),
            ));
        }
        for &d in &self.deltas {
            if !(d >= 1.0) {
                return Err(Error::InvalidConfig(format!("delta must be >= 1, got {d}")));
            }
        }
        for (i, &d) in self.deltas.iter().enumerate() {
            if self.deltas[..i].contains(&d) {
                return Err(Error::InvalidConfig(format!("duplicate delta {d}")));
            }
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }

    fn low(&self) -> Result<FloatFormat> {
        FloatFormat::preset(self.low_format)
    }
}

/// One (mode, delta, seed) cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub mode: Mode,
    /// `None` for modes that ignore the trigger threshold.
    pub delta: Option<f64>,
    pub seed: u64,
    pub report: Option<MetricsReport>,
    pub iterations: usize,
    pub warnings: Vec<String>,
    /// A per-cell failure; it does not abort the sweep.
    pub error: Option<String>,
}

/// Mean/min/max over the seeds of one (mode, delta) group; `None` when no
/// seed produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricStats {
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl MetricStats {
    fn from_values(values: &[f64]) -> MetricStats {
        if values.is_empty() {
            return MetricStats::default();
        }
        let sum: f64 = values.iter().sum();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        MetricStats {
            mean: Some(sum / values.len() as f64),
            min: Some(min),
            max: Some(max),
        }
    }
}

/// Aggregate row for one (mode, delta) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub mode: Mode,
    pub delta: Option<f64>,
    pub normalized: bool,
    pub sse: MetricStats,
    pub ari: MetricStats,
    pub ami: MetricStats,
    pub homogeneity: MetricStats,
    pub completeness: MetricStats,
    pub v_measure: MetricStats,
    pub eta: MetricStats,
    /// Seeds whose completeness was NA (prediction collapsed to one cluster
    /// against a multi-class truth).
    pub completeness_na_count: usize,
}

/// The serializable outcome of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellRecord>,
    pub aggregates: Vec<AggregateRecord>,
}

/// Runs every (mode, delta, seed) cell of the spec. Modes other than mixed
/// run once per seed (the trigger threshold does not apply to them).
/// Per-cell failures are recorded in the cell, not raised.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunRecord> {
    spec.validate()?;
    let raw = spec.data.load()?;
    let ds = if spec.normalize {
        data::zscore_normalize(&raw)?
    } else {
        raw
    };
    let low = spec.low()?;

    let mut cells = Vec::new();
    for &mode in &spec.modes {
        let deltas: Vec<Option<f64>> = match mode {
            Mode::Mixed => spec.deltas.iter().copied().map(Some).collect(),
            _ => vec![None],
        };
        for delta in deltas {
            for &seed in &spec.seeds {
                cells.push(run_cell(&ds, spec, mode, delta, seed, low));
            }
        }
    }
    let aggregates = aggregate(&cells, spec.normalize);
    Ok(RunRecord {
        spec: spec.clone(),
        cells,
        aggregates,
    })
}

fn run_cell(
    ds: &Dataset,
    spec: &ExperimentSpec,
    mode: Mode,
    delta: Option<f64>,
    seed: u64,
    low: FloatFormat,
) -> CellRecord {
    let cfg = match mode {
        Mode::Working => Ok(KMeansConfig::working(spec.k)),
        Mode::Low => KMeansConfig::low(spec.k, low),
        Mode::Mixed => KMeansConfig::mixed(spec.k, low, delta.unwrap_or(2.0)),
    };
    let outcome = cfg.and_then(|cfg| {
        let cfg = cfg
            .with_seed(seed)
            .with_max_iter(spec.max_iter)
            .with_tol(spec.tol)
            .with_rescue(spec.rescue);
        let clustering = fit(ds, &cfg)?;
        let eta = match mode {
            Mode::Mixed => Some(clustering.eta),
            _ => None,
        };
        let report = MetricsReport::evaluate(ds.labels(), &clustering.labels, clustering.sse, eta)?;
        Ok((clustering, report))
    });
    match outcome {
        Ok((clustering, report)) => CellRecord {
            mode,
            delta,
            seed,
            report: Some(report),
            iterations: clustering.iterations_run,
            warnings: clustering.warnings.iter().map(|w| w.to_string()).collect(),
            error: None,
        },
        Err(e) => CellRecord {
            mode,
            delta,
            seed,
            report: None,
            iterations: 0,
            warnings: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

fn aggregate(cells: &[CellRecord], normalized: bool) -> Vec<AggregateRecord> {
    let mut groups: Vec<(Mode, Option<f64>)> = Vec::new();
    for cell in cells {
        if !groups.contains(&(cell.mode, cell.delta)) {
            groups.push((cell.mode, cell.delta));
        }
    }
    groups
        .into_iter()
        .map(|(mode, delta)| {
            let members: Vec<&CellRecord> = cells
                .iter()
                .filter(|c| c.mode == mode && c.delta == delta)
                .collect();
            let collect = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Vec<f64> {
                members
                    .iter()
                    .filter_map(|c| c.report.as_ref().and_then(f))
                    .collect()
            };
            let completeness_na_count = members
                .iter()
                .filter(|c| c.report.as_ref().is_some_and(|r| r.completeness.is_none()))
                .count();
            AggregateRecord {
                mode,
                delta,
                normalized,
                sse: MetricStats::from_values(&collect(&|r| Some(r.sse))),
                ari: MetricStats::from_values(&collect(&|r| r.ari)),
                ami: MetricStats::from_values(&collect(&|r| r.ami)),
                homogeneity: MetricStats::from_values(&collect(&|r| r.homogeneity)),
                completeness: MetricStats::from_values(&collect(&|r| r.completeness)),
                v_measure: MetricStats::from_values(&collect(&|r| r.v_measure)),
                eta: MetricStats::from_values(&collect(&|r| r.eta)),
                completeness_na_count,
            }
        })
        .collect()
}

/// Output encodings for [`emit_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            other => Err(Error::InvalidConfig(format!(
                "unknown output format `{other}`"
            ))),
        }
    }
}

/// One row of the emitted result table (seed means per (mode, delta) group).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub mode: Mode,
    pub normalized: bool,
    pub delta: Option<f64>,
    pub sse: Option<f64>,
    pub ari: Option<f64>,
    pub ami: Option<f64>,
    pub homogeneity: Option<f64>,
    pub completeness: Option<f64>,
    pub v_measure: Option<f64>,
    pub eta: Option<f64>,
}

fn table_rows(record: &RunRecord) -> Vec<TableRow> {
    record
        .aggregates
        .iter()
        .map(|a| TableRow {
            mode: a.mode,
            normalized: a.normalized,
            delta: a.delta,
            sse: a.sse.mean,
            ari: a.ari.mean,
            ami: a.ami.mean,
            homogeneity: a.homogeneity.mean,
            completeness: a.completeness.mean,
            v_measure: a.v_measure.mean,
            eta: a.eta.mean,
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Writes the per-group seed means with the stable column order
/// mode, normalized, delta, SSE, ARI, AMI, Homogeneity, Completeness,
/// V-measure, eta. NA values serialize as empty cells (CSV) or null (JSON).
pub fn emit_table(record: &RunRecord, format: TableFormat, out: &mut dyn Write) -> Result<()> {
    let rows = table_rows(record);
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let io = |e: csv::Error| Error::InvalidConfig(format!("table write failed: {e}"));
            w.write_record([
                "mode",
                "normalized",
                "delta",
                "sse",
                "ari",
                "ami",
                "homogeneity",
                "completeness",
                "v_measure",
                "eta",
            ])
            .map_err(io)?;
            for r in rows {
                w.write_record([
                    r.mode.to_string(),
                    r.normalized.to_string(),
                    fmt_opt(r.delta),
                    fmt_opt(r.sse),
                    fmt_opt(r.ari),
                    fmt_opt(r.ami),
                    fmt_opt(r.homogeneity),
                    fmt_opt(r.completeness),
                    fmt_opt(r.v_measure),
                    fmt_opt(r.eta),
                ])
                .map_err(io)?;
            }
            w.flush()
                .map_err(|e| Error::InvalidConfig(format!("table flush failed: {e}")))?;
        }
        TableFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &rows)
                .map_err(|e| Error::InvalidConfig(format!("json write failed: {e}")))?;
            out.write_all(b"\n")
                .map_err(|e| Error::InvalidConfig(format!("json write failed: {e}")))?;
        }
    }
    Ok(())
}

/// Long-format sweep curves: one `(delta, seed, metric, value)` row per
/// metric of every mixed-mode cell, suitable for external plotting. The
/// metric order is fixed; missing values emit empty cells. Errors when the
/// record's delta list contains duplicates.
pub fn emit_curves(record: &RunRecord, out: &mut dyn Write) -> Result<()> {
    for (i, &d) in record.spec.deltas.iter().enumerate() {
        if record.spec.deltas[..i].contains(&d) {
            return Err(Error::InvalidConfig(format!("duplicate delta {d}")));
        }
    }
    let io = |e: csv::Error| Error::InvalidConfig(format!("curve write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta", "seed", "metric", "value"])
        .map_err(io)?;
    for cell in record.cells.iter().filter(|c| c.mode == Mode::Mixed) {
        let Some(report) = &cell.report else { continue };
        let delta = fmt_opt(cell.delta);
        let metrics: [(&str, Option<f64>); 7] = [
            ("sse", Some(report.sse)),
            ("ari", report.ari),
            ("ami", report.ami),
            ("homogeneity", report.homogeneity),
            ("completeness", report.completeness),
            ("v_measure", report.v_measure),
            ("eta", report.eta),
        ];
        for (name, value) in metrics {
            w.write_record([
                delta.clone(),
                cell.seed.to_string(),
                name.into(),
                fmt_opt(value),
            ])
            .map_err(io)?;
        }
    }
    w.flush()
        .map_err(|e| Error::InvalidConfig(format!("curve flush failed: {e}")))?;
    Ok(())
}

/// Numerical-stability diagnostics for a dataset: the per-iteration
/// center-update precision bound along a working-format run, compared with
/// the configured low format's unit roundoff, plus the Frobenius difference
/// between the two distance formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub iterations: usize,
    /// Minimum over the clusters of the center-update precision bound, per
    /// iteration; `None` when no center moved.
    pub min_bound_per_iteration: Vec<Option<f64>>,
    pub low_format: FormatName,
    pub low_u: f64,
    /// Iterations (1-based) where the low format's unit roundoff exceeds the
    /// bound, i.e. a center update in that precision could stall.
    pub exceeded_iterations: Vec<usize>,
    pub kernel_diff_fro: f64,
    pub kernel_ref_fro: f64,
    pub kernel_overflow_entries: usize,
    /// Gram-form distances recomputed in the low format on sampled point
    /// pairs, measured against the working-format value: the worst observed
    /// error as a fraction of the gram-form error bound. `None` when the
    /// bound constant is undefined for this dimension in the low format.
    pub low_bound_worst_ratio: Option<f64>,
    pub low_bound_checked_pairs: usize,
    pub low_bound_overflowed_pairs: usize,
}

impl fmt::Display for DiagnosisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "iterations: {}", self.iterations)?;
        for (i, b) in self.min_bound_per_iteration.iter().enumerate() {
            match b {
                Some(b) => writeln!(f, "iteration {}: center-update bound {b:e}", i + 1)?,
                None => writeln!(f, "iteration {}: centers stationary", i + 1)?,
            }
        }
        writeln!(f, "low format {} has u = {:e}", self.low_format, self.low_u)?;
        if self.exceeded_iterations.is_empty() {
            writeln!(
                f,
                "u stays below the center-update bound in every iteration"
            )?;
        } else {
            writeln!(
                f,
                "u exceeds the bound in iterations {:?}",
                self.exceeded_iterations
            )?;
        }
        writeln!(
            f,
            "kernel matrix difference: {:e} (reference norm {:e}, {} overflowed entries)",
            self.kernel_diff_fro, self.kernel_ref_fro, self.kernel_overflow_entries
        )?;
        match self.low_bound_worst_ratio {
            Some(r) => writeln!(
                f,
                "{} gram-form error on {} sampled pairs: worst {:.3} of the bound ({} pairs overflowed)",
                self.low_format, self.low_bound_checked_pairs, r, self.low_bound_overflowed_pairs
            ),
            None => writeln!(
                f,
                "no finite gram-form error bound for dimension in {} (r*u >= 1)",
                self.low_format
            ),
        }
    }
}

/// Runs a working-format clustering while streaming the center-update
/// precision bound, and measures the kernel-matrix difference of the two
/// distance formulas on the same data.
pub fn diagnose(spec: &ExperimentSpec) -> Result<DiagnosisReport> {
    spec.validate()?;
    let raw = spec.data.load()?;
    let ds = if spec.normalize {
        data::zscore_normalize(&raw)?
    } else {
        raw
    };
    let low = spec.low()?;
    let ctx = PrecisionContext::new(FP64, FP64, 2.0)?;
    let seed = spec.seeds.first().copied().unwrap_or(0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    use rand::SeedableRng;

    let seeded = seed_d2(&ds, spec.k, &mut rng, Mode::Working, &ctx)?;
    let dim = ds.dim();
    let mut centers = Vec::with_capacity(spec.k * dim);
    for &idx in &seeded.indices {
        centers.extend_from_slice(ds.point(idx));
    }

    let mut min_bounds = Vec::new();
    let mut iterations = 0;
    loop {
        let pass = assign(&ds, &centers, Mode::Working, &ctx, true);
        let (new_centers, _) = update_centers(&ds, &pass.labels, spec.k, &centers);
        iterations += 1;
        let mut min_bound: Option<f64> = None;
        for j in 0..spec.k {
            let prev = &centers[j * dim..(j + 1) * dim];
            let new = &new_centers[j * dim..(j + 1) * dim];
            if let Some(b) = center_update_precision_bound(prev, new) {
                min_bound = Some(match min_bound {
                    Some(m) => m.min(b),
                    None => b,
                });
            }
        }
        min_bounds.push(min_bound);
        let done = converged(&centers, &new_centers, spec.tol) || iterations >= spec.max_iter;
        centers = new_centers;
        if done {
            break;
        }
    }

    let low_u = low.u();
    let exceeded = min_bounds
        .iter()
        .enumerate()
        .filter_map(|(i, b)| match b {
            Some(b) if low_u > *b => Some(i + 1),
            _ => None,
        })
        .collect();

    let kernel = kernel_matrix_diff(&ds, FP64);
    let (worst_ratio, checked, overflowed) = low_bound_check(&ds, low);
    Ok(DiagnosisReport {
        iterations,
        min_bound_per_iteration: min_bounds,
        low_format: spec.low_format,
        low_u,
        exceeded_iterations: exceeded,
        kernel_diff_fro: kernel.diff_fro,
        kernel_ref_fro: kernel.ref_fro,
        kernel_overflow_entries: kernel.overflow_count,
        low_bound_worst_ratio: worst_ratio,
        low_bound_checked_pairs: checked,
        low_bound_overflowed_pairs: overflowed,
    })
}

/// Recomputes gram-form distances in the low format on up to 200 sampled
/// point pairs and reports the worst observed error as a fraction of the
/// gram-form error bound evaluated at that format.
fn low_bound_check(ds: &Dataset, low: FloatFormat) -> (Option<f64>, usize, usize) {
    if gamma(ds.dim() + 2, low).is_err() {
        return (None, 0, 0);
    }
    let n = ds.n();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut overflowed = 0usize;
    // A deterministic stride over the pair space.
    let stride = (n * n.saturating_sub(1) / 2 / 200).max(1);
    let mut pair = 0usize;
    'outer: for i in 0..n {
        for j in (i + 1)..n {
            pair += 1;
            if pair % stride != 0 {
                continue;
            }
            if checked + overflowed >= 200 {
                break 'outer;
            }
            let x: Vec<f64> = ds
                .point(i)
                .iter()
                .map(|&v| round_to_format(v, low).value)
                .collect();
            let y: Vec<f64> = ds
                .point(j)
                .iter()
                .map(|&v| round_to_format(v, low).value)
                .collect();
            let xx = inner_product(&x, &x, low);
            let yy = inner_product(&y, &y, low);
            let got = dist_sq_gram(xx.value, yy.value, &x, &y, low);
            if got.flags.overflowed || xx.flags.overflowed || yy.flags.overflowed {
                overflowed += 1;
                continue;
            }
            let exact = dist_sq_gram(
                inner_product(&x, &x, FP64).value,
                inner_product(&y, &y, FP64).value,
                &x,
                &y,
                FP64,
            )
            .d2;
            let bound = gram_form_error_bound(&x, &y, low);
            if bound > 0.0 {
                worst = worst.max((got.d2 - exact).abs() / bound);
            }
            checked += 1;
        }
    }
    (Some(worst), checked, overflowed)
}
