//! Independent reference implementations used by the acceptance suite.
//! These deliberately take different routes than the library: bit-level
//! binary16 conversion, O(n^2) pair counting for ARI, exact binomial
//! hypergeometric series for E[MI], and per-group sub-entropies for the
//! homogeneity family.

/// Direct f64 -> IEEE binary16 conversion with round-to-nearest-even,
/// operating on the bit patterns.
pub fn f64_to_binary16_bits(x: f64) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 63) as u16) << 15;
    if x.is_nan() {
        return sign | 0x7e00;
    }
    let exp_raw = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp_raw == 0x7ff {
        return sign | 0x7c00; // infinity
    }
    if exp_raw == 0 {
        // f64 zeros and subnormals: far below half the smallest binary16
        // subnormal (2^-25), so they all round to signed zero.
        return sign;
    }
    let e = exp_raw - 1023;
    let mant = frac | (1u64 << 52); // 53 significant bits
    if e >= 16 {
        return sign | 0x7c00;
    }
    // Align to the result quantum: 2^(e-10) for normals, 2^-24 below.
    let shift = if e >= -14 { 42 } else { 42 + (-14 - e) };
    if shift >= 64 {
        return sign;
    }
    let q = mant >> shift;
    let rem = mant & ((1u64 << shift) - 1);
    let half = 1u64 << (shift - 1);
    let q = q + u64::from(rem > half || (rem == half && (q & 1) == 1));
    if e >= -14 {
        let (q, e) = if q == (1 << 11) {
            (1u64 << 10, e + 1)
        } else {
            (q, e)
        };
        if e > 15 {
            return sign | 0x7c00;
        }
        sign | (((e + 15) as u16) << 10) | ((q & 0x3ff) as u16)
    } else {
        // Subnormal digits; q == 2^10 lands on x_min through encoding
        // continuity.
        sign | (q as u16)
    }
}

/// Adjusted Rand index by exhaustive pair counting.
pub fn ari_pair_counting(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let (mut n11, mut n10, mut n01, mut n00) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..n {
        for j in (i + 1)..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    let num = 2.0 * (n11 * n00 - n10 * n01);
    let den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00);
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Exact binomial coefficient; every intermediate division is exact.
fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c * (n - k + i) as u128 / i as u128;
    }
    c
}

fn group_sizes(labels: &[usize]) -> Vec<u64> {
    let mut sizes: std::collections::BTreeMap<usize, u64> = std::collections::BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_insert(0) += 1;
    }
    sizes.into_values().collect()
}

fn entropy_of_sizes(sizes: &[u64], n: u64) -> f64 {
    sizes
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// Canonical partition signature: labels renamed to first-appearance order.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Adjusted mutual information with E[MI] evaluated as the direct
/// hypergeometric series over exact binomial coefficients.
pub fn ami_hypergeometric(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    if canonical(a) == canonical(b) {
        return 1.0;
    }
    let n = a.len() as u64;
    let nf = n as f64;
    let sizes_a = group_sizes(a);
    let sizes_b = group_sizes(b);
    let h_a = entropy_of_sizes(&sizes_a, n);
    let h_b = entropy_of_sizes(&sizes_b, n);

    // Joint counts via sorted unique label values.
    let mut joint: std::collections::BTreeMap<(usize, usize), u64> =
        std::collections::BTreeMap::new();
    for (&x, &y) in a.iter().zip(b.iter()) {
        *joint.entry((x, y)).or_insert(0) += 1;
    }
    let marg = |labels: &[usize]| -> std::collections::BTreeMap<usize, u64> {
        let mut m = std::collections::BTreeMap::new();
        for &l in labels {
            *m.entry(l).or_insert(0) += 1;
        }
        m
    };
    let ma = marg(a);
    let mb = marg(b);
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let p = c as f64 / nf;
        let pa = ma[&x] as f64 / nf;
        let pb = mb[&y] as f64 / nf;
        mi += p * (p / (pa * pb)).ln();
    }

    let mut emi = 0.0;
    for &ai in &sizes_a {
        for &bj in &sizes_b {
            let lo = 1.max((ai + bj).saturating_sub(n));
            let hi = ai.min(bj);
            for nij in lo..=hi {
                let ways = binom(ai, nij) * binom(n - ai, bj.saturating_sub(nij));
                let prob = ways as f64 / binom(n, bj) as f64;
                let term = (nij as f64 / nf) * ((nf * nij as f64) / (ai as f64 * bj as f64)).ln();
                emi += prob * term;
            }
        }
    }

    let mean_h = 0.5 * (h_a + h_b);
    (mi - emi) / (mean_h - emi)
}

/// Homogeneity, completeness (None = NA on collapse) and V-measure, via
/// per-group sub-entropies.
pub fn hcv_direct(a: &[usize], b: &[usize]) -> (f64, Option<f64>, f64) {
    assert_eq!(a.len(), b.len());
    let n = a.len() as u64;
    let sizes_a = group_sizes(a);
    let sizes_b = group_sizes(b);
    let h_a = entropy_of_sizes(&sizes_a, n);
    let h_b = entropy_of_sizes(&sizes_b, n);

    // H(A | B): split by the B groups, take each sub-distribution's entropy.
    let conditional = |target: &[usize], given: &[usize]| -> f64 {
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> =
            std::collections::BTreeMap::new();
        for (i, &g) in given.iter().enumerate() {
            groups.entry(g).or_default().push(target[i]);
        }
        groups
            .values()
            .map(|members| {
                let m = members.len() as u64;
                let sizes = group_sizes(members);
                (m as f64 / n as f64) * entropy_of_sizes(&sizes, m)
            })
            .sum()
    };

    let h = if h_a == 0.0 {
        1.0
    } else {
        1.0 - conditional(a, b) / h_a
    };
    let c_val = if h_b == 0.0 {
        1.0
    } else {
        1.0 - conditional(b, a) / h_b
    };
    let v = if h + c_val == 0.0 {
        0.0
    } else {
        2.0 * h * c_val / (h + c_val)
    };
    let collapsed = sizes_b.len() == 1 && sizes_a.len() > 1;
    (h, if collapsed { None } else { Some(c_val) }, v)
}

/// Neumaier-compensated dot product, the working-precision reference for
/// rounding-error checks.
pub fn compensated_dot(x: &[f64], y: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let p = a * b;
        let t = sum + p;
        if sum.abs() >= p.abs() {
            comp += (sum - t) + p;
        } else {
            comp += (p - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
