//! Small dense-vector helpers shared by the affinity and alignment code.
//!
//! Everything here works on `&[f64]` so the affinity formulas stay free of
//! any particular matrix library.

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean (L2) norm.
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity. Callers are responsible for non-degenerate inputs;
/// this returns 0 when either norm vanishes.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Scale `v` to unit L2 norm in place. Returns the original norm, or `None`
/// if it was below `eps` (the vector is then left untouched).
///
/// Vectors whose norm is already within 1e-12 of 1 are left as-is, which
/// makes normalization exactly idempotent and load/save round-trips
/// bit-identical.
pub fn normalize(v: &mut [f64], eps: f64) -> Option<f64> {
    let n = norm(v);
    if n < eps {
        return None;
    }
    if (n - 1.0).abs() > 1e-12 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    Some(n)
}

/// Component-wise mean of a non-empty set of equal-length vectors.
pub fn mean_vector<'a, I>(vectors: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut acc = vec![0.0; dim];
    let mut count = 0usize;
    for v in vectors {
        debug_assert_eq!(v.len(), dim);
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        count += 1;
    }
    debug_assert!(count > 0);
    for a in acc.iter_mut() {
        *a /= count as f64;
    }
    acc
}

/// Euclidean distance between two equal-length slices.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean of a non-empty slice.
pub fn mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divide by n).
pub fn population_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

/// Lossless float formatting for report files: shortest round-trip decimal,
/// switching to exponent notation below 1e-4 so small p-values stay
/// readable. Parsing the output reproduces the exact f64 either way.
pub fn fmt_float(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}
