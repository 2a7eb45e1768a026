//! Squared-Euclidean-distance kernels in uniform and mixed precision, the
//! magnitude-ratio trigger, and evaluators for the forward-error bounds of
//! the two distance formulas.
//!
//! Two routes compute `dist(x, y)^2`:
//!
//! - the difference form `(x - y)^T (x - y)` ([`dist_sq_diff`]), forward
//!   stable with relative error at most `gamma_{r+2}`;
//! - the gram form `x^T x - 2 x^T y + y^T y` ([`dist_sq_gram`]), which lets
//!   the point norms be precomputed and reused but admits cancellation.
//!
//! [`dist_sq_mixed`] evaluates the gram form with the inner product demoted
//! to a lower-precision format whenever the norm ratio test
//! `max{x^Tx/y^Ty, y^Ty/x^Tx} >= delta^2` holds, scaling both vectors by
//! their infinity norms first so the demoted product cannot overflow.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::simfloat::{
    fl_op, gamma, inner_product, round_to_format, ArithOp, FloatFormat, RoundFlags,
};

/// The result of one squared-distance evaluation.
///
/// `d2` is never negative and never NaN: small negative values produced by
/// cancellation in the gram form are clamped to zero (recorded in
/// `clamped`), and NaN arising from `inf - inf` after an overflow is
/// normalized to `+inf` so the poisoning stays visible in comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceOutcome {
    pub d2: f64,
    pub used_low_precision: bool,
    pub flags: RoundFlags,
    pub clamped: bool,
}

fn finalize(value: f64, mut flags: RoundFlags, used_low_precision: bool) -> DistanceOutcome {
    let mut d2 = value;
    let mut clamped = false;
    if d2.is_nan() {
        d2 = f64::INFINITY;
        flags.overflowed = true;
    } else if d2 < 0.0 {
        d2 = 0.0;
        clamped = true;
    }
    DistanceOutcome {
        d2,
        used_low_precision,
        flags,
        clamped,
    }
}

/// Counts distance computations and how many of them triggered the
/// low-precision path. Increment-only; relaxed atomics keep the ratio
/// independent of scheduling.
#[derive(Debug, Default)]
pub struct TriggerCounters {
    total: AtomicU64,
    triggered: AtomicU64,
}

/// The working/low format pair, the trigger threshold `delta`, and the
/// trigger-rate counters.
#[derive(Debug)]
pub struct PrecisionContext {
    work: FloatFormat,
    low: FloatFormat,
    delta: f64,
    counters: TriggerCounters,
}

impl PrecisionContext {
    /// Requires `low.u() >= work.u()` and `delta >= 1`.
    pub fn new(work: FloatFormat, low: FloatFormat, delta: f64) -> Result<Self> {
        if low.u() < work.u() {
            return Err(Error::InvalidConfig(format!(
                "low format {low} is finer than working format {work}"
            )));
        }
        if !(delta >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must be >= 1, got {delta}"
            )));
        }
        Ok(PrecisionContext {
            work,
            low,
            delta,
            counters: TriggerCounters::default(),
        })
    }

    /// Same formats and threshold, fresh zeroed counters.
    pub fn fresh(&self) -> Self {
        PrecisionContext {
            work: self.work,
            low: self.low,
            delta: self.delta,
            counters: TriggerCounters::default(),
        }
    }

    pub fn work(&self) -> FloatFormat {
        self.work
    }

    pub fn low(&self) -> FloatFormat {
        self.low
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn total(&self) -> u64 {
        self.counters.total.load(Ordering::Relaxed)
    }

    pub fn triggered(&self) -> u64 {
        self.counters.triggered.load(Ordering::Relaxed)
    }

    /// Fraction of distance computations that ran the low-precision path;
    /// 0 when nothing has been counted yet.
    pub fn eta(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.triggered() as f64 / total as f64
        }
    }
}

/// `(x - y)^T (x - y)` with every scalar operation rounded into `fmt`.
pub fn dist_sq_diff(x: &[f64], y: &[f64], fmt: FloatFormat) -> DistanceOutcome {
    debug_assert_eq!(x.len(), y.len());
    let mut flags = RoundFlags::default();
    let mut acc = 0.0_f64;
    for (&xi, &yi) in x.iter().zip(y.iter()) {
        let d = fl_op(xi, yi, ArithOp::Sub, fmt);
        let p = fl_op(d.value, d.value, ArithOp::Mul, fmt);
        let s = fl_op(acc, p.value, ArithOp::Add, fmt);
        flags = flags.union(d.flags).union(p.flags).union(s.flags);
        acc = s.value;
    }
    finalize(acc, flags, false)
}

/// `xx - 2 x^T y + yy` with every scalar operation rounded into `fmt`;
/// `xx` and `yy` are the precomputed rounded norms. Negative results from
/// cancellation are clamped to zero.
pub fn dist_sq_gram(xx: f64, yy: f64, x: &[f64], y: &[f64], fmt: FloatFormat) -> DistanceOutcome {
    let ip = inner_product(x, y, fmt);
    let two_ip = fl_op(2.0, ip.value, ArithOp::Mul, fmt);
    let a = fl_op(xx, two_ip.value, ArithOp::Sub, fmt);
    let d = fl_op(a.value, yy, ArithOp::Add, fmt);
    let flags = ip.flags.union(two_ip.flags).union(a.flags).union(d.flags);
    finalize(d.value, flags, false)
}

/// The gram form with a trigger-gated low-precision inner product.
///
/// `pp = fl(p^T p)` and `cc = fl(c^T c)` are precomputed in the working
/// precision. When `max{pp/cc, cc/pp} >= delta^2`, both vectors are scaled
/// by their infinity norms in working precision, the inner product of the
/// scaled vectors runs entirely in the low format, and the outer
/// combination `pp + cc - 2 s1 (p~^T c~) s2` runs in working precision.
/// Otherwise the whole computation stays in the working format.
///
/// Zero-vector guard: a zero norm on one side makes the ratio infinite and
/// fires the trigger; two zero norms yield distance 0 without a trigger.
pub fn dist_sq_mixed(
    p: &[f64],
    c: &[f64],
    pp: f64,
    cc: f64,
    ctx: &PrecisionContext,
) -> DistanceOutcome {
    debug_assert_eq!(p.len(), c.len());
    ctx.counters.total.fetch_add(1, Ordering::Relaxed);

    if pp == 0.0 && cc == 0.0 {
        return DistanceOutcome {
            d2: 0.0,
            used_low_precision: false,
            flags: RoundFlags::default(),
            clamped: false,
        };
    }
    let ratio = if pp == 0.0 || cc == 0.0 {
        f64::INFINITY
    } else {
        f64::max(pp / cc, cc / pp)
    };
    if !(ratio >= ctx.delta * ctx.delta) {
        let mut out = dist_sq_gram(pp, cc, p, c, ctx.work);
        out.used_low_precision = false;
        return out;
    }

    ctx.counters.triggered.fetch_add(1, Ordering::Relaxed);

    // With low == work there is no lower precision to demote into; the
    // scaled route would only add rounding steps, so the gram form in the
    // working format is the degenerate evaluation.
    if ctx.low.same_parameters(&ctx.work) {
        let mut out = dist_sq_gram(pp, cc, p, c, ctx.work);
        out.used_low_precision = true;
        return out;
    }

    let mut s1 = p.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut s2 = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    // A zero vector scales to itself; its inner product is exactly zero in
    // any precision.
    if s1 == 0.0 {
        s1 = 1.0;
    }
    if s2 == 0.0 {
        s2 = 1.0;
    }

    let work = ctx.work;
    let low = ctx.low;
    let mut flags = RoundFlags::default();
    let mut acc = 0.0_f64;
    for (&pi, &ci) in p.iter().zip(c.iter()) {
        let ps = fl_op(pi, s1, ArithOp::Div, work);
        let cs = fl_op(ci, s2, ArithOp::Div, work);
        let pl = round_to_format(ps.value, low);
        let cl = round_to_format(cs.value, low);
        let prod = fl_op(pl.value, cl.value, ArithOp::Mul, low);
        let sum = fl_op(acc, prod.value, ArithOp::Add, low);
        flags = flags
            .union(ps.flags)
            .union(cs.flags)
            .union(pl.flags)
            .union(cl.flags)
            .union(prod.flags)
            .union(sum.flags);
        acc = sum.value;
    }

    let t1 = fl_op(2.0, s1, ArithOp::Mul, work);
    let t2 = fl_op(t1.value, acc, ArithOp::Mul, work);
    let t3 = fl_op(t2.value, s2, ArithOp::Mul, work);
    let a = fl_op(pp, cc, ArithOp::Add, work);
    let d = fl_op(a.value, t3.value, ArithOp::Sub, work);
    flags = flags
        .union(t1.flags)
        .union(t2.flags)
        .union(t3.flags)
        .union(a.flags)
        .union(d.flags);
    finalize(d.value, flags, true)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn abs_dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a * b).abs()).sum()
}

/// Forward-error bound `gamma_{r+2} |d_r|` for the difference form, with
/// `d_r` the exact squared distance evaluated in working precision. Returns
/// `+inf` when `gamma_{r+2}` is undefined (`(r+2) u >= 1`), where the bound
/// carries no information.
pub fn diff_form_error_bound(x: &[f64], y: &[f64], fmt: FloatFormat) -> f64 {
    let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    match gamma(x.len() + 2, fmt) {
        Ok(g) => g * d.abs(),
        Err(_) => f64::INFINITY,
    }
}

/// Forward-error bound `gamma_{r+2} (x^T x + 2 |x|^T |y| + y^T y)` for the
/// gram form. Returns `+inf` when the gamma constant is undefined.
pub fn gram_form_error_bound(x: &[f64], y: &[f64], fmt: FloatFormat) -> f64 {
    let s = dot(x, x) + 2.0 * abs_dot(x, y) + dot(y, y);
    match gamma(x.len() + 2, fmt) {
        Ok(g) => g * s,
        Err(_) => f64::INFINITY,
    }
}

/// Forward-error bound `(r+2) u (x^T x + y^T y) + 2 (r+2) u_l |x|^T |y|`
/// for the trigger-gated mixed evaluation.
pub fn mixed_form_error_bound(x: &[f64], y: &[f64], ctx: &PrecisionContext) -> f64 {
    let r2 = (x.len() + 2) as f64;
    r2 * ctx.work.u() * (dot(x, x) + dot(y, y)) + 2.0 * r2 * ctx.low.u() * abs_dot(x, y)
}

/// Relative condition number of the inner product `x^T y`, namely
/// `||x|| ||y|| / |x^T y| = 1 / cos(theta)`; infinite for orthogonal
/// inputs. Errors on a zero vector.
pub fn inner_product_condition(x: &[f64], y: &[f64]) -> Result<f64> {
    let nx = dot(x, x).sqrt();
    let ny = dot(y, y).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroVector);
    }
    let ip = dot(x, y).abs();
    if ip == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(nx * ny / ip)
}

/// Difference between the two distance formulas over a whole dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelDiff {
    /// Frobenius norm of the entrywise difference of the two n-by-n
    /// squared-distance matrices.
    pub diff_fro: f64,
    /// Frobenius norm of the difference-form matrix, for relative reporting.
    pub ref_fro: f64,
    /// Entries where either formula overflowed; such entries are excluded
    /// from the norms rather than silently absorbed.
    pub overflow_count: usize,
}

/// Builds both squared-distance matrices under `fmt` (streaming, without
/// materializing them) and measures their difference in the Frobenius norm.
pub fn kernel_matrix_diff(ds: &Dataset, fmt: FloatFormat) -> KernelDiff {
    let n = ds.n();
    let norms: Vec<f64> = (0..n)
        .map(|i| inner_product(ds.point(i), ds.point(i), fmt).value)
        .collect();
    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    let mut overflow_count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = dist_sq_diff(ds.point(i), ds.point(j), fmt);
            let b = dist_sq_gram(norms[i], norms[j], ds.point(i), ds.point(j), fmt);
            if a.flags.overflowed || b.flags.overflowed {
                overflow_count += 2;
                continue;
            }
            let d = a.d2 - b.d2;
            // Off-diagonal entries appear twice in the symmetric matrices.
            diff_sq += 2.0 * d * d;
            ref_sq += 2.0 * a.d2 * a.d2;
        }
    }
    KernelDiff {
        diff_fro: diff_sq.sqrt(),
        ref_fro: ref_sq.sqrt(),
        overflow_count,
    }
}
