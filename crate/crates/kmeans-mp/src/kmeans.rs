//! D²-weighted seeding and Lloyd iterations in three precision variants.
//!
//! The `mode` of a [`KMeansConfig`] selects the distance kernel:
//!
//! - [`Mode::Working`]: the gram form in the working format;
//! - [`Mode::Low`]: the gram form with points, centers, norms and every
//!   scalar operation in the low format;
//! - [`Mode::Mixed`]: the trigger-gated kernel
//!   [`crate::distance::dist_sq_mixed`].
//!
//! Center updates, convergence tests and distance comparisons always run in
//! the working format. The final label assignment runs in the working format
//! except in low mode, where every distance of the variant stays in the low
//! format. Seeding draws and the cumulative-probability sampling stay in the
//! working format in every mode.

use std::fmt;
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::distance::{dist_sq_gram, dist_sq_mixed, PrecisionContext};
use crate::error::{Error, Result};
use crate::metrics;
use crate::simfloat::{inner_product, round_to_format, FloatFormat, FP64};

/// Which distance kernel the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Working,
    Low,
    Mixed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Working => "working",
            Mode::Low => "low",
            Mode::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "working" => Ok(Mode::Working),
            "low" => Ok(Mode::Low),
            "mixed" => Ok(Mode::Mixed),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}` (expected working, low or mixed)"
            ))),
        }
    }
}

/// Configuration for one clustering run.
#[derive(Debug)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Convergence threshold on the Frobenius norm of the center movement.
    pub tol: f64,
    pub mode: Mode,
    pub ctx: PrecisionContext,
    /// Seeds one ChaCha8 stream per run, consumed only by the seeding draws
    /// (first-center pick and the cumulative-probability samples), so a
    /// multi-seed protocol is simply seeds `0..s`.
    pub seed: u64,
    /// Re-evaluate a point's distances in the working format when every
    /// candidate distance came back nonfinite. Disabling this reproduces the
    /// total-failure behavior of an unguarded low-precision run.
    pub rescue: bool,
}

impl KMeansConfig {
    fn new(k: usize, mode: Mode, ctx: PrecisionContext) -> Self {
        KMeansConfig {
            k,
            max_iter: 300,
            tol: 1e-4,
            mode,
            ctx,
            seed: 0,
            rescue: true,
        }
    }

    /// Everything in the working format (fp64).
    pub fn working(k: usize) -> Self {
        let ctx = PrecisionContext::new(FP64, FP64, 2.0).expect("fp64 context");
        Self::new(k, Mode::Working, ctx)
    }

    /// All distance computations in `low`.
    pub fn low(k: usize, low: FloatFormat) -> Result<Self> {
        let ctx = PrecisionContext::new(FP64, low, 2.0)?;
        Ok(Self::new(k, Mode::Low, ctx))
    }

    /// Trigger-gated distances: inner products demote to `low` when the norm
    /// ratio reaches `delta^2`.
    pub fn mixed(k: usize, low: FloatFormat, delta: f64) -> Result<Self> {
        let ctx = PrecisionContext::new(FP64, low, delta)?;
        Ok(Self::new(k, Mode::Mixed, ctx))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_rescue(mut self, rescue: bool) -> Self {
        self.rescue = rescue;
        self
    }
}

/// Events surfaced by a run instead of failing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWarning {
    /// The D² weights for one seeding draw were all zero or nonfinite; the
    /// draw fell back to uniform sampling.
    SeedingFallback { draw: usize },
    /// A cluster lost all its points and kept its previous center.
    EmptyCluster { cluster: usize, iteration: usize },
    /// Points whose candidate distances were all nonfinite in one assignment
    /// pass (`iteration` is `None` for the final pass). With rescue enabled
    /// they were re-assigned in the working format.
    PoisonedAssignment {
        iteration: Option<usize>,
        points: usize,
    },
}

impl fmt::Display for FitWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitWarning::SeedingFallback { draw } => {
                write!(
                    f,
                    "seeding draw {draw}: degenerate weights, fell back to uniform sampling"
                )
            }
            FitWarning::EmptyCluster { cluster, iteration } => {
                write!(
                    f,
                    "iteration {iteration}: cluster {cluster} empty, kept previous center"
                )
            }
            FitWarning::PoisonedAssignment {
                iteration: Some(it),
                points,
            } => {
                write!(f, "iteration {it}: {points} points had no finite distance")
            }
            FitWarning::PoisonedAssignment {
                iteration: None,
                points,
            } => {
                write!(
                    f,
                    "final assignment: {points} points had no finite distance"
                )
            }
        }
    }
}

/// The result of a clustering run.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// `k * dim` flat center matrix, center `j` contiguous.
    pub centers: Vec<f64>,
    pub k: usize,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub cardinalities: Vec<usize>,
    pub iterations_run: usize,
    /// Final SSE in the working format, from the final labels and centers.
    pub sse: f64,
    /// Fraction of distance computations that ran the low-precision path;
    /// 0 outside mixed mode.
    pub eta: f64,
    /// SSE after each (assign, update) pair, in the working format.
    pub sse_trace: Vec<f64>,
    pub warnings: Vec<FitWarning>,
}

impl Clustering {
    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }
}

/// Precomputed per-mode views of the data: the coordinates the kernel reads
/// and the per-point norms in the kernel's precision.
struct ModeData {
    mode: Mode,
    /// Points rounded into the low format (low mode only).
    low_points: Option<Vec<f64>>,
    /// Per-point norms `fl(p^T p)` in the kernel precision.
    pp: Vec<f64>,
}

impl ModeData {
    fn prepare(ds: &Dataset, mode: Mode, ctx: &PrecisionContext) -> ModeData {
        let n = ds.n();
        match mode {
            Mode::Working | Mode::Mixed => {
                let pp = (0..n)
                    .map(|i| inner_product(ds.point(i), ds.point(i), ctx.work()).value)
                    .collect();
                ModeData {
                    mode,
                    low_points: None,
                    pp,
                }
            }
            Mode::Low => {
                let low = ctx.low();
                let low_points: Vec<f64> = ds
                    .points_flat()
                    .iter()
                    .map(|&v| round_to_format(v, low).value)
                    .collect();
                let dim = ds.dim();
                let pp = (0..n)
                    .map(|i| {
                        let p = &low_points[i * dim..(i + 1) * dim];
                        inner_product(p, p, low).value
                    })
                    .collect();
                ModeData {
                    mode,
                    low_points: Some(low_points),
                    pp,
                }
            }
        }
    }

    /// Distance between point `i` and a prepared center.
    fn to_center(
        &self,
        ds: &Dataset,
        ctx: &PrecisionContext,
        i: usize,
        c: &CenterData,
        j: usize,
    ) -> f64 {
        let dim = ds.dim();
        match self.mode {
            Mode::Working => {
                dist_sq_gram(
                    self.pp[i],
                    c.cc[j],
                    ds.point(i),
                    c.slice(j, dim),
                    ctx.work(),
                )
                .d2
            }
            Mode::Low => {
                let pts = self.low_points.as_ref().expect("low points prepared");
                let p = &pts[i * dim..(i + 1) * dim];
                dist_sq_gram(self.pp[i], c.cc[j], p, c.slice(j, dim), ctx.low()).d2
            }
            Mode::Mixed => dist_sq_mixed(ds.point(i), c.slice(j, dim), self.pp[i], c.cc[j], ctx).d2,
        }
    }

    /// Distance between point `i` and point `j` acting as a center
    /// (seeding).
    fn between_points(&self, ds: &Dataset, ctx: &PrecisionContext, i: usize, j: usize) -> f64 {
        let dim = ds.dim();
        match self.mode {
            Mode::Working => {
                dist_sq_gram(self.pp[i], self.pp[j], ds.point(i), ds.point(j), ctx.work()).d2
            }
            Mode::Low => {
                let pts = self.low_points.as_ref().expect("low points prepared");
                let p = &pts[i * dim..(i + 1) * dim];
                let q = &pts[j * dim..(j + 1) * dim];
                dist_sq_gram(self.pp[i], self.pp[j], p, q, ctx.low()).d2
            }
            Mode::Mixed => dist_sq_mixed(ds.point(i), ds.point(j), self.pp[i], self.pp[j], ctx).d2,
        }
    }
}

/// Centers in the representation the kernel reads, with their norms.
struct CenterData {
    coords: Vec<f64>,
    cc: Vec<f64>,
}

impl CenterData {
    fn prepare(
        centers: &[f64],
        k: usize,
        dim: usize,
        mode: Mode,
        ctx: &PrecisionContext,
    ) -> CenterData {
        match mode {
            Mode::Working | Mode::Mixed => {
                let cc = (0..k)
                    .map(|j| {
                        let c = &centers[j * dim..(j + 1) * dim];
                        inner_product(c, c, ctx.work()).value
                    })
                    .collect();
                CenterData {
                    coords: centers.to_vec(),
                    cc,
                }
            }
            Mode::Low => {
                let low = ctx.low();
                let coords: Vec<f64> = centers
                    .iter()
                    .map(|&v| round_to_format(v, low).value)
                    .collect();
                let cc = (0..k)
                    .map(|j| {
                        let c = &coords[j * dim..(j + 1) * dim];
                        inner_product(c, c, low).value
                    })
                    .collect();
                CenterData { coords, cc }
            }
        }
    }

    fn slice(&self, j: usize, dim: usize) -> &[f64] {
        &self.coords[j * dim..(j + 1) * dim]
    }
}

/// Outcome of D²-weighted seeding: the chosen point indices, in draw order.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub indices: Vec<usize>,
    pub warnings: Vec<FitWarning>,
}

/// Seeding by D² weighting: the first center uniform over the points, each
/// subsequent center drawn with probability `D(p)^2 / sum D(q)^2` where
/// `D(p)` is the distance to the nearest already-chosen center, computed by
/// the mode's distance kernel. Returns `k` distinct indices.
///
/// Degenerate weight vectors (all zero, or containing nonfinite values from
/// overflow) fall back to uniform sampling and are recorded: when some
/// weights are infinite the draw is uniform over those points, where the D²
/// distribution concentrates.
pub fn seed_d2(
    ds: &Dataset,
    k: usize,
    rng: &mut ChaCha8Rng,
    mode: Mode,
    ctx: &PrecisionContext,
) -> Result<SeedOutcome> {
    let n = ds.n();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("k = {k} must be in 1..={n}")));
    }
    let md = ModeData::prepare(ds, mode, ctx);
    let mut warnings = Vec::new();
    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];

    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;

    let mut weights: Vec<f64> = (0..n)
        .map(|i| {
            if i == first {
                0.0
            } else {
                md.between_points(ds, ctx, i, first)
            }
        })
        .collect();

    while chosen.len() < k {
        let draw = chosen.len();
        let next = sample_weighted(&weights, &is_chosen, rng, &mut warnings, draw);
        chosen.push(next);
        is_chosen[next] = true;
        weights[next] = 0.0;
        if chosen.len() == k {
            break;
        }
        for i in 0..n {
            if !is_chosen[i] {
                let d = md.between_points(ds, ctx, i, next);
                if d < weights[i] {
                    weights[i] = d;
                }
            }
        }
    }
    Ok(SeedOutcome {
        indices: chosen,
        warnings,
    })
}

fn sample_weighted(
    weights: &[f64],
    is_chosen: &[bool],
    rng: &mut ChaCha8Rng,
    warnings: &mut Vec<FitWarning>,
    draw: usize,
) -> usize {
    let overflowed: Vec<usize> = (0..weights.len())
        .filter(|&i| !is_chosen[i] && weights[i].is_infinite())
        .collect();
    if !overflowed.is_empty() {
        warnings.push(FitWarning::SeedingFallback { draw });
        return overflowed[rng.random_range(0..overflowed.len())];
    }
    let total: f64 = (0..weights.len())
        .filter(|&i| !is_chosen[i])
        .map(|i| weights[i])
        .sum();
    if !(total > 0.0) {
        warnings.push(FitWarning::SeedingFallback { draw });
        let remaining: Vec<usize> = (0..weights.len()).filter(|&i| !is_chosen[i]).collect();
        return remaining[rng.random_range(0..remaining.len())];
    }
    let target = rng.random::<f64>() * total;
    let mut cum = 0.0;
    let mut last_positive = None;
    for i in 0..weights.len() {
        if is_chosen[i] {
            continue;
        }
        if weights[i] > 0.0 {
            last_positive = Some(i);
        }
        cum += weights[i];
        if cum > target {
            return i;
        }
    }
    // Rounding in the cumulative sum can leave cum marginally below the
    // target; the mass sits on the last positive-weight point.
    last_positive.expect("total > 0 implies a positive weight")
}

/// One assignment pass.
#[derive(Debug, Clone)]
pub struct AssignOutcome {
    pub labels: Vec<usize>,
    /// Points whose candidate distances were all nonfinite.
    pub poisoned: usize,
}

/// Assigns every point to its nearest center under the mode's kernel, ties
/// broken toward the lowest center index; comparisons happen on the returned
/// working-precision values. When every candidate distance for a point is
/// nonfinite and `rescue` is set, the point is re-assigned with the working
/// format's gram kernel on the original coordinates.
pub fn assign(
    ds: &Dataset,
    centers: &[f64],
    mode: Mode,
    ctx: &PrecisionContext,
    rescue: bool,
) -> AssignOutcome {
    let n = ds.n();
    let dim = ds.dim();
    let k = centers.len() / dim;
    let md = ModeData::prepare(ds, mode, ctx);
    let cd = CenterData::prepare(centers, k, dim, mode, ctx);
    // Working-format fallback views, built on demand.
    let mut rescue_data: Option<(ModeData, CenterData)> = None;

    let mut labels = vec![0usize; n];
    let mut poisoned = 0usize;
    for i in 0..n {
        let mut best = 0usize;
        let mut best_d = md.to_center(ds, ctx, i, &cd, 0);
        for j in 1..k {
            let d = md.to_center(ds, ctx, i, &cd, j);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        if best_d.is_infinite() {
            poisoned += 1;
            if rescue {
                let (rmd, rcd) = rescue_data.get_or_insert_with(|| {
                    (
                        ModeData::prepare(ds, Mode::Working, ctx),
                        CenterData::prepare(centers, k, dim, Mode::Working, ctx),
                    )
                });
                best = 0;
                let mut rd = rmd.to_center(ds, ctx, i, rcd, 0);
                for j in 1..k {
                    let d = rmd.to_center(ds, ctx, i, rcd, j);
                    if d < rd {
                        rd = d;
                        best = j;
                    }
                }
            }
        }
        labels[i] = best;
    }
    AssignOutcome { labels, poisoned }
}

/// Mean-center update: sequential summation over the points of each cluster
/// in data order, then one scalar division, in the working format. Empty
/// clusters keep their previous center; their indices are returned.
pub fn update_centers(
    ds: &Dataset,
    labels: &[usize],
    k: usize,
    prev_centers: &[f64],
) -> (Vec<f64>, Vec<usize>) {
    let dim = ds.dim();
    let mut sums = vec![0.0_f64; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &label) in labels.iter().enumerate() {
        counts[label] += 1;
        let p = ds.point(i);
        for d in 0..dim {
            sums[label * dim + d] += p[d];
        }
    }
    let mut empty = Vec::new();
    for j in 0..k {
        if counts[j] == 0 {
            empty.push(j);
            sums[j * dim..(j + 1) * dim].copy_from_slice(&prev_centers[j * dim..(j + 1) * dim]);
        } else {
            let m = counts[j] as f64;
            for d in 0..dim {
                sums[j * dim + d] /= m;
            }
        }
    }
    (sums, empty)
}

/// True when the Frobenius norm of the center movement is within `tol`.
pub fn converged(prev_centers: &[f64], new_centers: &[f64], tol: f64) -> bool {
    let mut sum = 0.0;
    for (a, b) in prev_centers.iter().zip(new_centers) {
        sum += (a - b) * (a - b);
    }
    sum.sqrt() <= tol
}

/// The largest unit roundoff under which the center update from `prev` to
/// `new` still provably decreases the clustering energy:
/// `|c - m|^T |c - m| / (2 |c - m|^T |m|)` with `c` the previous and `m` the
/// new center. `None` when the centers are identical (the update has
/// converged and the bound is moot); infinite when the new center is zero.
pub fn center_update_precision_bound(prev: &[f64], new: &[f64]) -> Option<f64> {
    if prev == new {
        return None;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, m) in prev.iter().zip(new) {
        let d = (c - m).abs();
        num += d * d;
        den += d * m.abs();
    }
    Some(num / (2.0 * den))
}

/// Both sides of the energy decomposition around the mean: for a point set
/// `S` with mean `mu` and an arbitrary probe point, returns
/// `(phi(probe, S), phi(mu, S) + |S| * dist(probe, mu)^2)`, evaluated in the
/// working format. The two sides coincide in exact arithmetic.
pub fn energy_identity_check(points: &[f64], dim: usize, probe: &[f64]) -> (f64, f64) {
    let m = points.len() / dim;
    let mut mean = vec![0.0_f64; dim];
    for p in points.chunks(dim) {
        for (d, v) in p.iter().enumerate() {
            mean[d] += v;
        }
    }
    for v in mean.iter_mut() {
        *v /= m as f64;
    }
    let dist2 =
        |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let lhs: f64 = points.chunks(dim).map(|p| dist2(p, probe)).sum();
    let phi_mean: f64 = points.chunks(dim).map(|p| dist2(p, &mean)).sum();
    let rhs = phi_mean + m as f64 * dist2(probe, &mean);
    (lhs, rhs)
}

/// Runs D² seeding followed by Lloyd iterations until the centers move less
/// than `tol` in the Frobenius norm or `max_iter` is reached, then assigns
/// final labels (in the working format, except in low mode) and reports SSE,
/// the trigger rate and any warnings.
pub fn fit(ds: &Dataset, cfg: &KMeansConfig) -> Result<Clustering> {
    let n = ds.n();
    let dim = ds.dim();
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::InvalidConfig(format!(
            "k = {} must be in 1..={n}",
            cfg.k
        )));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tol must be >= 0, got {}",
            cfg.tol
        )));
    }
    if cfg.max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
    }

    let ctx = cfg.ctx.fresh();
    let mut warnings = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let seeded = seed_d2(ds, cfg.k, &mut rng, cfg.mode, &ctx)?;
    warnings.extend(seeded.warnings.iter().copied());
    let mut centers = Vec::with_capacity(cfg.k * dim);
    for &idx in &seeded.indices {
        centers.extend_from_slice(ds.point(idx));
    }

    let mut sse_trace = Vec::new();
    let mut iterations = 0usize;
    loop {
        let pass = assign(ds, &centers, cfg.mode, &ctx, cfg.rescue);
        if pass.poisoned > 0 {
            warnings.push(FitWarning::PoisonedAssignment {
                iteration: Some(iterations + 1),
                points: pass.poisoned,
            });
        }
        let (new_centers, empty) = update_centers(ds, &pass.labels, cfg.k, &centers);
        for cluster in empty {
            warnings.push(FitWarning::EmptyCluster {
                cluster,
                iteration: iterations + 1,
            });
        }
        iterations += 1;
        sse_trace.push(metrics::sse(ds, &pass.labels, &new_centers));
        let done = converged(&centers, &new_centers, cfg.tol) || iterations >= cfg.max_iter;
        centers = new_centers;
        if done {
            break;
        }
    }

    // Final assignment: working format, except that the low variant keeps
    // every distance of the run in the low format.
    let final_mode = if cfg.mode == Mode::Low {
        Mode::Low
    } else {
        Mode::Working
    };
    let pass = assign(ds, &centers, final_mode, &ctx, cfg.rescue);
    if pass.poisoned > 0 {
        warnings.push(FitWarning::PoisonedAssignment {
            iteration: None,
            points: pass.poisoned,
        });
    }
    let labels = pass.labels;
    let mut cardinalities = vec![0usize; cfg.k];
    for &l in &labels {
        cardinalities[l] += 1;
    }
    let sse = metrics::sse(ds, &labels, &centers);
    let eta = if cfg.mode == Mode::Mixed {
        ctx.eta()
    } else {
        0.0
    };

    Ok(Clustering {
        centers,
        k: cfg.k,
        dim,
        labels,
        cardinalities,
        iterations_run: iterations,
        sse,
        eta,
        sse_trace,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gaussian_blobs, BlobSpec};
    use crate::metrics::ari;
    use crate::simfloat::{FP16, Q52};

    fn ctx_work() -> PrecisionContext {
        PrecisionContext::new(FP64, FP64, 2.0).unwrap()
    }

    fn dataset(points: &[f64], dim: usize) -> Dataset {
        Dataset::from_flat(points.to_vec(), dim).unwrap()
    }

    #[test]
    fn seeding_with_k_equal_n_selects_every_point() {
        let ds = dataset(&[0.0, 1.0, 5.0, 9.0], 1);
        let ctx = ctx_work();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = seed_d2(&ds, 4, &mut rng, Mode::Working, &ctx).unwrap();
        let mut idx = out.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn seeding_k1_is_deterministic() {
        let ds = dataset(&[0.0, 1.0, 5.0, 9.0], 1);
        let ctx = ctx_work();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = seed_d2(&ds, 1, &mut rng, Mode::Working, &ctx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = seed_d2(&ds, 1, &mut rng, Mode::Working, &ctx).unwrap();
        assert_eq!(a.indices, b.indices);
        assert_eq!(a.indices.len(), 1);
    }

    #[test]
    fn seeding_duplicate_groups_never_doubles_up() {
        // Two far-separated duplicate pairs: the D² weight of the first
        // center's twin is exactly zero, so the second center always lands
        // in the other group.
        let ds = dataset(&[0.0, 0.0, 100.0, 100.0], 1);
        let ctx = ctx_work();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = seed_d2(&ds, 2, &mut rng, Mode::Working, &ctx).unwrap();
            let group = |i: usize| usize::from(i >= 2);
            assert_ne!(group(out.indices[0]), group(out.indices[1]), "seed {seed}");
        }
    }

    #[test]
    fn assign_point_on_center_gets_its_label() {
        let ds = dataset(&[1.0, 2.0, 9.0, 9.0], 2);
        let centers = vec![9.0, 9.0, 1.0, 2.0];
        let out = assign(&ds, &centers, Mode::Working, &ctx_work(), true);
        assert_eq!(out.labels, vec![1, 0]);
    }

    #[test]
    fn assign_breaks_ties_toward_lowest_index() {
        let ds = dataset(&[0.0], 1);
        let centers = vec![-1.0, 1.0];
        let out = assign(&ds, &centers, Mode::Working, &ctx_work(), true);
        assert_eq!(out.labels, vec![0]);
    }

    #[test]
    fn assign_one_dimensional_hand_checked() {
        let ds = dataset(&[0.0, 1.0, 10.0, 11.0], 1);
        let centers = vec![0.5, 10.5];
        let out = assign(&ds, &centers, Mode::Working, &ctx_work(), true);
        assert_eq!(out.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn update_centers_means_and_singletons() {
        let ds = dataset(&[0.0, 0.0, 2.0, 2.0, 7.0, -1.0], 2);
        let prev = vec![0.0; 6];
        let (centers, empty) = update_centers(&ds, &[0, 0, 1], 3, &prev);
        assert_eq!(&centers[0..2], &[1.0, 1.0]);
        assert_eq!(&centers[2..4], &[7.0, -1.0]);
        // Cluster 2 is empty and keeps its previous center.
        assert_eq!(&centers[4..6], &[0.0, 0.0]);
        assert_eq!(empty, vec![2]);
    }

    #[test]
    fn update_centers_error_within_gamma_bound() {
        use crate::simfloat::gamma;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 400;
        let dim = 3;
        let points: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = dataset(&points, dim);
        let labels = vec![0usize; m];
        let (centers, _) = update_centers(&ds, &labels, 1, &vec![0.0; dim]);
        // Neumaier-compensated reference mean.
        let mut reference = vec![0.0_f64; dim];
        for d in 0..dim {
            let mut sum = 0.0;
            let mut comp = 0.0;
            for i in 0..m {
                let x = points[i * dim + d];
                let t = sum + x;
                if sum.abs() >= x.abs() {
                    comp += (sum - t) + x;
                } else {
                    comp += (x - t) + sum;
                }
                sum = t;
            }
            reference[d] = (sum + comp) / m as f64;
        }
        let err: f64 = centers
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err <= gamma(m, FP64).unwrap() * norm);
    }

    #[test]
    fn convergence_examples() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        assert!(converged(&a, &a, 0.0));
        let b = vec![1.0, 2.0, 3.0, 5.0];
        assert!(!converged(&a, &b, 0.5));
        let c = vec![1.0, 2.0, 3.0, 4.0 + 1e-5];
        assert!(converged(&a, &c, 1e-4));
    }

    #[test]
    fn precision_bound_hand_values() {
        let b = center_update_precision_bound(&[2.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(b, 0.5);
        let b = center_update_precision_bound(&[0.0, 2.0], &[0.0, 1.0]).unwrap();
        assert_eq!(b, 0.5);
        assert_eq!(
            center_update_precision_bound(&[1.0, 1.0], &[1.0, 1.0]),
            None
        );
    }

    #[test]
    fn precision_bound_scales_linearly_with_movement() {
        let target = [3.0, -1.0];
        let far = [3.5, -0.6];
        let near = [3.05, -0.96];
        let b_far = center_update_precision_bound(&far, &target).unwrap();
        let b_near = center_update_precision_bound(&near, &target).unwrap();
        assert!((b_far / b_near - 10.0).abs() < 1e-9);
    }

    #[test]
    fn fit_k1_recovers_the_mean() {
        let ds = dataset(&[0.0, 0.0, 2.0, 0.0, 4.0, 6.0], 2);
        let cfg = KMeansConfig::working(1).with_seed(3);
        let out = fit(&ds, &cfg).unwrap();
        assert_eq!(out.center(0), &[2.0, 2.0]);
        let expect: f64 = (0..3)
            .map(|i| {
                let p = ds.point(i);
                (p[0] - 2.0).powi(2) + (p[1] - 2.0).powi(2)
            })
            .sum();
        assert_eq!(out.sse, expect);
        assert_eq!(out.cardinalities, vec![3]);
    }

    #[test]
    fn fit_separates_two_blobs_across_seeds() {
        let spec = BlobSpec::new(200, 2, 2, 0.5, 1).with_min_separation(8.0);
        let ds = gaussian_blobs(&spec).unwrap();
        for seed in 0..5 {
            let cfg = KMeansConfig::working(2).with_seed(seed);
            let out = fit(&ds, &cfg).unwrap();
            let score = ari(ds.labels().unwrap(), &out.labels).unwrap();
            assert_eq!(score, 1.0, "seed {seed}");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let spec = BlobSpec::new(150, 3, 2, 1.0, 9);
        let ds = gaussian_blobs(&spec).unwrap();
        let out1 = fit(&ds, &KMeansConfig::working(3).with_seed(4)).unwrap();
        let out2 = fit(&ds, &KMeansConfig::working(3).with_seed(4)).unwrap();
        assert_eq!(out1, out2);
    }

    #[test]
    fn mixed_with_huge_delta_matches_working_bitwise() {
        let spec = BlobSpec::new(120, 3, 2, 1.0, 5).with_min_separation(4.0);
        let ds = gaussian_blobs(&spec).unwrap();
        let seed = 2;
        let working = fit(&ds, &KMeansConfig::working(3).with_seed(seed)).unwrap();
        let mixed_cfg = KMeansConfig::mixed(3, FP16, 1e12).unwrap().with_seed(seed);
        let mixed = fit(&ds, &mixed_cfg).unwrap();
        assert_eq!(working.labels, mixed.labels);
        assert_eq!(working.centers, mixed.centers);
        assert_eq!(mixed.eta, 0.0);
    }

    #[test]
    fn mixed_with_low_equal_to_work_degenerates_to_working() {
        let spec = BlobSpec::new(120, 3, 2, 1.0, 6);
        let ds = gaussian_blobs(&spec).unwrap();
        let seed = 3;
        let working = fit(&ds, &KMeansConfig::working(3).with_seed(seed)).unwrap();
        let mixed_cfg = KMeansConfig::mixed(3, FP64, 2.0).unwrap().with_seed(seed);
        let mixed = fit(&ds, &mixed_cfg).unwrap();
        assert_eq!(working.labels, mixed.labels);
        assert_eq!(working.centers, mixed.centers);
        assert_eq!(working.sse, mixed.sse);
        assert!(mixed.eta > 0.0);
    }

    #[test]
    fn eta_is_one_at_delta_one_and_zero_in_working_mode() {
        let spec = BlobSpec::new(100, 2, 2, 1.0, 8).with_min_separation(5.0);
        let ds = gaussian_blobs(&spec).unwrap();
        let out = fit(&ds, &KMeansConfig::working(2).with_seed(0)).unwrap();
        assert_eq!(out.eta, 0.0);
        let cfg = KMeansConfig::mixed(2, FP16, 1.0).unwrap().with_seed(0);
        let out = fit(&ds, &cfg).unwrap();
        assert_eq!(out.eta, 1.0);
    }

    #[test]
    fn eta_is_nonincreasing_in_delta() {
        let spec = BlobSpec::new(300, 5, 2, 0.5, 1).with_min_separation(5.0);
        let ds = gaussian_blobs(&spec).unwrap();
        let mut last = f64::INFINITY;
        for delta in [1.0, 2.0, 5.0, 20.0, 80.0] {
            let cfg = KMeansConfig::mixed(5, FP16, delta).unwrap().with_seed(0);
            let out = fit(&ds, &cfg).unwrap();
            assert!(out.eta <= last, "delta {delta}: {} > {last}", out.eta);
            last = out.eta;
        }
    }

    #[test]
    fn sse_trace_is_nonincreasing_in_working_mode() {
        let spec = BlobSpec::new(300, 4, 2, 1.5, 2);
        let ds = gaussian_blobs(&spec).unwrap();
        for seed in 0..3 {
            let out = fit(&ds, &KMeansConfig::working(4).with_seed(seed)).unwrap();
            for w in out.sse_trace.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-12),
                    "seed {seed}: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn energy_identity_hand_checked() {
        let points = [0.0, 0.0, 2.0, 0.0];
        let (lhs, rhs) = energy_identity_check(&points, 2, &[2.0, 0.0]);
        assert_eq!(lhs, 4.0);
        assert_eq!(rhs, 4.0);
        // Probe at the mean: both sides are phi(mean).
        let (lhs, rhs) = energy_identity_check(&points, 2, &[1.0, 0.0]);
        assert_eq!(lhs, rhs);
        assert_eq!(lhs, 2.0);
    }

    #[test]
    fn energy_identity_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let m = rng.random_range(2..40);
            let dim = rng.random_range(1..6);
            let points: Vec<f64> = (0..m * dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let probe: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (lhs, rhs) = energy_identity_check(&points, dim, &probe);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn low_q52_without_rescue_collapses_on_large_magnitudes() {
        // Coordinates near 1e3 make every squared norm overflow q52, so all
        // distances are infinite; without rescue every point keeps label 0.
        let spec = BlobSpec::new(60, 3, 2, 20.0, 4)
            .with_center_box(1000.0)
            .with_min_separation(400.0);
        let ds = gaussian_blobs(&spec).unwrap();
        let cfg = KMeansConfig::low(3, Q52)
            .unwrap()
            .with_seed(0)
            .with_rescue(false);
        let out = fit(&ds, &cfg).unwrap();
        assert!(out.labels.iter().all(|&l| l == 0));
        assert!(out
            .warnings
            .iter()
            .any(|w| matches!(w, FitWarning::SeedingFallback { .. })));
        assert!(out.warnings.iter().any(|w| matches!(
            w,
            FitWarning::PoisonedAssignment {
                iteration: None,
                ..
            }
        )));
    }

    #[test]
    fn low_q52_with_rescue_yields_a_usable_clustering() {
        // Same overflow regime as above; the per-point working-format rescue
        // keeps the assignment meaningful even though seeding degenerated to
        // uniform draws. The clustering must not collapse and must beat the
        // rescue-less run (which scores 0) clearly.
        let spec = BlobSpec::new(60, 3, 2, 20.0, 4)
            .with_center_box(1000.0)
            .with_min_separation(400.0);
        let ds = gaussian_blobs(&spec).unwrap();
        let cfg = KMeansConfig::low(3, Q52).unwrap().with_seed(0);
        let out = fit(&ds, &cfg).unwrap();
        let distinct: std::collections::HashSet<usize> = out.labels.iter().copied().collect();
        assert!(distinct.len() > 1);
        let score = ari(ds.labels().unwrap(), &out.labels).unwrap();
        assert!(score > 0.2, "ari = {score}");
        assert!(out.warnings.iter().any(|w| matches!(
            w,
            FitWarning::PoisonedAssignment {
                iteration: Some(_),
                ..
            }
        )));
    }

    #[test]
    fn empty_cluster_keeps_previous_center_and_is_reported() {
        let ds = dataset(&[0.0, 0.0, 0.0], 1);
        let cfg = KMeansConfig::working(2).with_seed(0);
        let out = fit(&ds, &cfg).unwrap();
        assert!(out
            .warnings
            .iter()
            .any(|w| matches!(w, FitWarning::EmptyCluster { .. })));
        assert_eq!(out.labels, vec![0, 0, 0]);
    }

    #[test]
    fn mode_names_round_trip() {
        for (s, m) in [
            ("working", Mode::Working),
            ("low", Mode::Low),
            ("mixed", Mode::Mixed),
        ] {
            assert_eq!(s.parse::<Mode>().unwrap(), m);
            assert_eq!(m.to_string(), s);
        }
        assert!("fast".parse::<Mode>().is_err());
    }
}
