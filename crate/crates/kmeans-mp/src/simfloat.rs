//! Software emulation of reduced-precision floating-point arithmetic.
//!
//! A [`FloatFormat`] describes a binary floating-point number system by its
//! significand length `t` (counting the implicit leading bit) and exponent
//! range `[e_min, e_max]`. Values are carried in `f64` and rounded into the
//! target format with [`round_to_format`]; arithmetic is emulated by
//! computing each scalar operation in working precision (`f64`) and rounding
//! the result ([`fl_op`], [`inner_product`]). Rounding is round-to-nearest,
//! ties-to-even; subnormals are supported; overflow maps to ±∞ and
//! propagates.
//!
//! Emulation is exact as long as the target format is strictly narrower than
//! `f64` (`t <= 53`, `e_min >= -1022`), which the constructor enforces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names for the built-in format presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatName {
    Q52,
    Fp16,
    Fp32,
    Fp64,
    Custom,
}

impl fmt::Display for FormatName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FormatName::Q52 => "q52",
            FormatName::Fp16 => "fp16",
            FormatName::Fp32 => "fp32",
            FormatName::Fp64 => "fp64",
            FormatName::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for FormatName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q52" => Ok(FormatName::Q52),
            "fp16" => Ok(FormatName::Fp16),
            "fp32" => Ok(FormatName::Fp32),
            "fp64" => Ok(FormatName::Fp64),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// Parameters of a simulated binary floating-point number system.
///
/// `t` counts significand binary digits including the implicit leading bit,
/// so the unit roundoff is `u = 2^(-t)`, the smallest positive normalized
/// value is `x_min = 2^e_min` and the largest finite value is
/// `x_max = 2^e_max * (2 - 2^(1-t))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloatFormat {
    name: FormatName,
    t: u32,
    e_min: i32,
    e_max: i32,
}

/// Quarter precision: 1 sign bit, 5 exponent bits, 2 explicit significand
/// bits.
pub const Q52: FloatFormat = FloatFormat {
    name: FormatName::Q52,
    t: 3,
    e_min: -14,
    e_max: 15,
};
/// IEEE 754 binary16.
pub const FP16: FloatFormat = FloatFormat {
    name: FormatName::Fp16,
    t: 11,
    e_min: -14,
    e_max: 15,
};
/// IEEE 754 binary32.
pub const FP32: FloatFormat = FloatFormat {
    name: FormatName::Fp32,
    t: 24,
    e_min: -126,
    e_max: 127,
};
/// IEEE 754 binary64; rounding into it is the identity on `f64` values.
pub const FP64: FloatFormat = FloatFormat {
    name: FormatName::Fp64,
    t: 53,
    e_min: -1022,
    e_max: 1023,
};

impl FloatFormat {
    /// A user-defined format. The format must be no wider than `f64` in both
    /// significand and exponent range so that the emulation stays exact.
    pub fn custom(t: u32, e_min: i32, e_max: i32) -> Result<Self> {
        if !(2..=53).contains(&t) {
            return Err(Error::InvalidFormat(format!("t = {t} out of range 2..=53")));
        }
        if e_min >= e_max {
            return Err(Error::InvalidFormat(format!(
                "e_min = {e_min} must be < e_max = {e_max}"
            )));
        }
        if e_min < -1022 || e_max > 1023 {
            return Err(Error::InvalidFormat(format!(
                "exponent range [{e_min}, {e_max}] exceeds the f64 carrier range [-1022, 1023]"
            )));
        }
        Ok(FloatFormat {
            name: FormatName::Custom,
            t,
            e_min,
            e_max,
        })
    }

    pub fn preset(name: FormatName) -> Result<Self> {
        match name {
            FormatName::Q52 => Ok(Q52),
            FormatName::Fp16 => Ok(FP16),
            FormatName::Fp32 => Ok(FP32),
            FormatName::Fp64 => Ok(FP64),
            FormatName::Custom => Err(Error::InvalidFormat(
                "custom formats need explicit parameters".into(),
            )),
        }
    }

    pub fn name(&self) -> FormatName {
        self.name
    }

    /// Significand digits, including the implicit leading bit.
    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn e_min(&self) -> i32 {
        self.e_min
    }

    pub fn e_max(&self) -> i32 {
        self.e_max
    }

    /// Unit roundoff `u = 2^(-t)`.
    pub fn u(&self) -> f64 {
        exp2i(-(self.t as i32))
    }

    /// Smallest positive normalized value, `2^e_min`.
    pub fn x_min(&self) -> f64 {
        exp2i(self.e_min)
    }

    /// Largest finite value, `2^e_max * (2 - 2^(1-t))`.
    pub fn x_max(&self) -> f64 {
        exp2i(self.e_max) * (2.0 - exp2i(1 - self.t as i32))
    }

    /// Smallest positive subnormal value, `2^(e_min - t + 1)`.
    pub fn min_subnormal(&self) -> f64 {
        mul_pow2(1.0, self.e_min - self.t as i32 + 1)
    }

    /// True when the format has the same (t, e_min, e_max) as `f64`, making
    /// rounding the identity on finite values.
    pub fn is_double(&self) -> bool {
        self.t == 53 && self.e_min == -1022 && self.e_max == 1023
    }

    /// True when both formats describe the same number system, regardless of
    /// their names.
    pub fn same_parameters(&self, other: &FloatFormat) -> bool {
        self.t == other.t && self.e_min == other.e_min && self.e_max == other.e_max
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

impl FromStr for FloatFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FloatFormat::preset(s.parse()?)
    }
}

/// Events observed while rounding a value into a format.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundFlags {
    /// The magnitude exceeded the format range and the result is ±∞.
    pub overflowed: bool,
    /// A nonzero value rounded to zero.
    pub underflowed_to_zero: bool,
    /// The result is subnormal in the target format.
    pub subnormal: bool,
}

impl RoundFlags {
    pub fn any(&self) -> bool {
        self.overflowed || self.underflowed_to_zero || self.subnormal
    }

    pub fn union(self, other: RoundFlags) -> RoundFlags {
        RoundFlags {
            overflowed: self.overflowed || other.overflowed,
            underflowed_to_zero: self.underflowed_to_zero || other.underflowed_to_zero,
            subnormal: self.subnormal || other.subnormal,
        }
    }
}

/// A value together with the format it was rounded into and the rounding
/// events observed along the way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundedValue {
    pub value: f64,
    pub format: FloatFormat,
    pub flags: RoundFlags,
}

/// Scalar operations covered by the rounded-arithmetic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// `2^k` for `k` in `[-1022, 1023]`, via bit manipulation.
const fn exp2i(k: i32) -> f64 {
    debug_assert!(k >= -1022 && k <= 1023);
    f64::from_bits(((1023 + k) as u64) << 52)
}

/// Exact multiplication by `2^k`, splitting the scale when `2^k` is not a
/// normal `f64`. Exact whenever the true result is representable.
fn mul_pow2(x: f64, k: i32) -> f64 {
    if (-1022..=1023).contains(&k) {
        x * exp2i(k)
    } else if k > 1023 {
        x * exp2i(1023) * exp2i(k - 1023)
    } else {
        // k >= -1074 in all uses below.
        x * exp2i(-1022) * exp2i(k + 1022)
    }
}

/// Unbiased exponent of a positive normal `f64`.
fn exponent_of(a: f64) -> i32 {
    ((a.to_bits() >> 52) & 0x7ff) as i32 - 1023
}

/// Round a working-precision value to the nearest value representable in
/// `fmt`, ties to even. Magnitudes past the overflow threshold map to ±∞,
/// values below half the smallest subnormal map to signed zero, and results
/// in the gradual-underflow range are flagged as subnormal. NaN passes
/// through. Total on all `f64` inputs.
pub fn round_to_format(x: f64, fmt: FloatFormat) -> RoundedValue {
    let mut flags = RoundFlags::default();

    if x.is_nan() {
        return RoundedValue {
            value: x,
            format: fmt,
            flags,
        };
    }
    if x.is_infinite() {
        flags.overflowed = true;
        return RoundedValue {
            value: x,
            format: fmt,
            flags,
        };
    }
    if x == 0.0 {
        // Preserves the sign of zero.
        return RoundedValue {
            value: x,
            format: fmt,
            flags,
        };
    }
    if fmt.is_double() {
        flags.subnormal = x.is_subnormal();
        return RoundedValue {
            value: x,
            format: fmt,
            flags,
        };
    }

    let a = x.abs();
    let sign = if x.is_sign_negative() { -1.0 } else { 1.0 };
    let x_min = fmt.x_min();

    let value = if a < x_min {
        // Gradual underflow: fixed quantum 2^(e_min - t + 1).
        let k = fmt.e_min - fmt.t as i32 + 1;
        let scaled = mul_pow2(a, -k);
        let rounded = scaled.round_ties_even();
        let v = mul_pow2(rounded, k);
        if v == 0.0 {
            flags.underflowed_to_zero = true;
        } else if v < x_min {
            flags.subnormal = true;
        }
        v
    } else {
        let e = exponent_of(a);
        if e > fmt.e_max {
            flags.overflowed = true;
            return RoundedValue {
                value: sign * f64::INFINITY,
                format: fmt,
                flags,
            };
        }
        // Quantum 2^(e - t + 1); the scaled value lies in [2^(t-1), 2^t].
        let k = e - fmt.t as i32 + 1;
        let scaled = mul_pow2(a, -k);
        let rounded = scaled.round_ties_even();
        let v = mul_pow2(rounded, k);
        if v > fmt.x_max() {
            flags.overflowed = true;
            return RoundedValue {
                value: sign * f64::INFINITY,
                format: fmt,
                flags,
            };
        }
        v
    };

    RoundedValue {
        value: sign * value,
        format: fmt,
        flags,
    }
}

/// One scalar operation under the standard model: the exact `f64` result is
/// rounded into `fmt`, so `fl(x op y) = (x op y)(1 + d)` with `|d| <= u`
/// for results inside the format range. Division by zero follows IEEE
/// semantics (signed infinity, flagged as overflow).
pub fn fl_op(x: f64, y: f64, op: ArithOp, fmt: FloatFormat) -> RoundedValue {
    let exact = match op {
        ArithOp::Add => x + y,
        ArithOp::Sub => x - y,
        ArithOp::Mul => x * y,
        ArithOp::Div => x / y,
    };
    round_to_format(exact, fmt)
}

/// Sequential left-to-right inner product with every multiply and add
/// rounded into `fmt`. Satisfies `|fl(x^T y) - x^T y| <= gamma_r |x|^T |y|`
/// absent over/underflow. Flags accumulate across all operations.
pub fn inner_product(x: &[f64], y: &[f64], fmt: FloatFormat) -> RoundedValue {
    debug_assert_eq!(x.len(), y.len());
    let mut flags = RoundFlags::default();
    let mut acc = 0.0_f64;
    for (&xi, &yi) in x.iter().zip(y.iter()) {
        let p = fl_op(xi, yi, ArithOp::Mul, fmt);
        flags = flags.union(p.flags);
        let s = fl_op(acc, p.value, ArithOp::Add, fmt);
        flags = flags.union(s.flags);
        acc = s.value;
    }
    RoundedValue {
        value: acc,
        format: fmt,
        flags,
    }
}

/// The constant `gamma_r = r*u / (1 - r*u)` used by the rounding-error
/// bounds. Errors when `r*u >= 1`, where the bound is meaningless.
pub fn gamma(r: usize, fmt: FloatFormat) -> Result<f64> {
    if r == 0 {
        return Ok(0.0);
    }
    let u = fmt.u();
    let ru = r as f64 * u;
    if ru >= 1.0 {
        return Err(Error::GammaUndefined { r, u, ru });
    }
    Ok(ru / (1.0 - ru))
}
