//! Ordinary least squares regression, Pearson and partial correlation with
//! significance, and helpers for turning symmetric distance matrices into
//! paired observations.
//!
//! Two-sided p-values come from the Student t distribution via the
//! regularized incomplete beta function: p = I_x(dof/2, 1/2) with
//! x = dof / (dof + t^2).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::affinity::DistanceMatrix;
use crate::error::Error;
use crate::types::Language;
use crate::Result;

/// Relative diagonal threshold below which a QR factor signals rank
/// deficiency.
const RANK_EPS: f64 = 1e-10;

/// Two-sided p-value for a t statistic with `dof` degrees of freedom.
pub fn t_two_sided_p(t: f64, dof: usize) -> f64 {
    assert!(dof >= 1, "t distribution needs dof >= 1");
    if !t.is_finite() {
        return 0.0;
    }
    let nu = dof as f64;
    let x = nu / (nu + t * t);
    statrs::function::beta::beta_reg(nu / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Multiple-regression output, intercept row first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    /// "intercept" followed by predictor names.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub n: usize,
    /// Number of predictors (excluding the intercept).
    pub k: usize,
    pub standardized: bool,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn dof(&self) -> usize {
        self.n - self.k - 1
    }

    /// Coefficient for a named predictor.
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.p_values[i])
    }
}

/// Solve `design * beta = y` by thin QR, returning (beta, residuals,
/// unscaled covariance (X^T X)^{-1}). Errors on rank deficiency.
fn qr_solve(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let m = design.ncols();
    let qr = design.clone().qr();
    let q = qr.q();
    let r = qr.r();

    let mut max_diag = 0.0f64;
    let mut min_diag = f64::INFINITY;
    for i in 0..m {
        let d = r[(i, i)].abs();
        max_diag = max_diag.max(d);
        min_diag = min_diag.min(d);
    }
    if max_diag == 0.0 || min_diag <= RANK_EPS * max_diag {
        return Err(Error::RankDeficientDesign);
    }

    let qty = q.transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficientDesign)?;
    let residuals = y - design * &beta;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or(Error::RankDeficientDesign)?;
    let cov_unscaled = &r_inv * r_inv.transpose();
    Ok((beta, residuals, cov_unscaled))
}

fn sample_sd(values: &[f64]) -> f64 {
    let m = crate::math::mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() as f64 - 1.0)).sqrt()
}

/// Ordinary least squares of `y` on the columns of `x`, with an intercept.
///
/// `x` is n×k without an intercept column; one is prepended. With
/// `standardize` the predictors are z-scored first (the response is left
/// alone), which makes coefficients comparable across predictors and turns
/// the intercept into the response mean.
pub fn ols_fit(
    x: &DMatrix<f64>,
    y: &[f64],
    names: &[String],
    standardize: bool,
) -> Result<RegressionResult> {
    let n = x.nrows();
    let k = x.ncols();
    assert_eq!(names.len(), k, "one name per predictor column");
    assert_eq!(y.len(), n, "response length must match rows");
    if n <= k + 1 {
        return Err(Error::TooFewObservations { n, k });
    }

    let mut design = DMatrix::zeros(n, k + 1);
    for i in 0..n {
        design[(i, 0)] = 1.0;
    }
    for j in 0..k {
        let column: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
        if standardize {
            let mean = crate::math::mean(&column);
            let sd = sample_sd(&column);
            if sd == 0.0 {
                return Err(Error::ZeroVariance {
                    name: names[j].clone(),
                });
            }
            for i in 0..n {
                design[(i, j + 1)] = (column[i] - mean) / sd;
            }
        } else {
            for i in 0..n {
                design[(i, j + 1)] = column[i];
            }
        }
    }

    let yv = DVector::from_column_slice(y);
    let (beta, residuals, cov_unscaled) = qr_solve(&design, &yv)?;

    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let y_mean = crate::math::mean(y);
    let tss: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    if tss == 0.0 {
        return Err(Error::ZeroVariance {
            name: "response".into(),
        });
    }
    let dof = n - k - 1;
    let sigma2 = rss / dof as f64;
    let r_squared = 1.0 - rss / tss;
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / dof as f64;

    let mut coefficients = Vec::with_capacity(k + 1);
    let mut std_errors = Vec::with_capacity(k + 1);
    let mut t_stats = Vec::with_capacity(k + 1);
    let mut p_values = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let coef = beta[j];
        let se = (sigma2 * cov_unscaled[(j, j)]).sqrt();
        let t = if se == 0.0 { f64::INFINITY } else { coef / se };
        coefficients.push(coef);
        std_errors.push(se);
        t_stats.push(t);
        p_values.push(t_two_sided_p(t, dof));
    }

    let mut all_names = Vec::with_capacity(k + 1);
    all_names.push("intercept".to_string());
    all_names.extend(names.iter().cloned());

    Ok(RegressionResult {
        names: all_names,
        coefficients,
        std_errors,
        t_stats,
        p_values,
        r_squared,
        adj_r_squared,
        n,
        k,
        standardized: standardize,
        residuals: residuals.iter().copied().collect(),
    })
}

/// Pearson product-moment correlation with a two-sided p-value from
/// t = r sqrt((n-2)/(1-r^2)).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    assert_eq!(x.len(), y.len(), "paired observations");
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewForPearson { n });
    }
    let mx = crate::math::mean(x);
    let my = crate::math::mean(y);
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance { name: "x".into() });
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance { name: "y".into() });
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let p = pearson_p(r, n, 0);
    Ok((r, p))
}

/// p-value for a (partial) correlation with `g` controls:
/// t = r sqrt((n-2-g)/(1-r^2)), dof = n-2-g.
fn pearson_p(r: f64, n: usize, g: usize) -> f64 {
    let dof = n - 2 - g;
    let denom = 1.0 - r * r;
    if denom <= f64::EPSILON {
        return 0.0;
    }
    let t = r * ((dof as f64) / denom).sqrt();
    t_two_sided_p(t, dof)
}

/// Correlation between two variables after linearly removing the controls
/// from both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialCorrResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    pub controls: Vec<String>,
}

/// Partial correlation of `x` and `y` given `controls`, by residualizing
/// both on the controls (with intercept) and correlating the residuals.
/// With no controls this is exactly [`pearson`].
pub fn partial_correlation(
    x: &[f64],
    y: &[f64],
    controls: &[(&str, &[f64])],
) -> Result<PartialCorrResult> {
    assert_eq!(x.len(), y.len(), "paired observations");
    let n = x.len();
    let g = controls.len();
    if g == 0 {
        let (r, p_value) = pearson(x, y)?;
        return Ok(PartialCorrResult {
            r,
            p_value,
            n,
            controls: vec![],
        });
    }
    if n < g + 3 {
        return Err(Error::TooFewForPartial { n, controls: g });
    }
    for (_, c) in controls {
        assert_eq!(c.len(), n, "control length must match observations");
    }

    let mut design = DMatrix::zeros(n, g + 1);
    for i in 0..n {
        design[(i, 0)] = 1.0;
    }
    for (j, (_, c)) in controls.iter().enumerate() {
        for i in 0..n {
            design[(i, j + 1)] = c[i];
        }
    }

    let resid = |values: &[f64], name: &str| -> Result<Vec<f64>> {
        let v = DVector::from_column_slice(values);
        let (_, residuals, _) = qr_solve(&design, &v)?;
        let var_resid: f64 = residuals.iter().map(|r| r * r).sum();
        let mean = crate::math::mean(values);
        let var_total: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        if var_total == 0.0 || var_resid <= 1e-20 * var_total {
            return Err(Error::UndefinedPartial { name: name.into() });
        }
        Ok(residuals.iter().copied().collect())
    };
    let rx = resid(x, "x")?;
    let ry = resid(y, "y")?;

    // correlate the residuals; they are centered by construction
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(PartialCorrResult {
        r,
        p_value: pearson_p(r, n, g),
        n,
        controls: controls.iter().map(|(name, _)| name.to_string()).collect(),
    })
}

/// A symmetric matrix flattened to its upper triangle, with the pair labels
/// that line up with each value.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorizedMatrix {
    pub values: Vec<f64>,
    pub pairs: Vec<(Language, Language)>,
}

/// Upper triangle (excluding the diagonal) in row-major pair order. Every
/// matrix over the same language ordering vectorizes to the same pair order,
/// so the value vectors align elementwise.
pub fn vectorize_matrix(m: &DistanceMatrix) -> Result<VectorizedMatrix> {
    let n = m.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if m.get(i, j) != m.get(j, i) {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    let mut values = Vec::with_capacity(n * (n - 1) / 2);
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            values.push(m.get(i, j));
            pairs.push((m.languages[i].clone(), m.languages[j].clone()));
        }
    }
    Ok(VectorizedMatrix { values, pairs })
}

/// Mantel-style permutation test of the correlation between two distance
/// matrices, permuting language labels. Seeded and reproducible: permutation
/// `i` draws from its own stream, so the result is independent of evaluation
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MantelResult {
    pub r: f64,
    pub p_value: f64,
    pub permutations: usize,
}

pub fn mantel_test(
    a: &DistanceMatrix,
    b: &DistanceMatrix,
    permutations: usize,
    seed: u64,
) -> Result<MantelResult> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    assert_eq!(a.languages, b.languages, "matrices must share ordering");
    let va = vectorize_matrix(a)?;
    let vb = vectorize_matrix(b)?;
    let (observed, _) = pearson(&va.values, &vb.values)?;

    let n = a.len();
    let mut at_least_as_extreme = 0usize;
    for i in 0..permutations {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);

        let mut permuted = Vec::with_capacity(vb.values.len());
        for r in 0..n {
            for c in (r + 1)..n {
                permuted.push(b.get(perm[r], perm[c]));
            }
        }
        let (r_perm, _) = pearson(&va.values, &permuted)?;
        if r_perm.abs() >= observed.abs() {
            at_least_as_extreme += 1;
        }
    }
    Ok(MantelResult {
        r: observed,
        p_value: (1.0 + at_least_as_extreme as f64) / (permutations as f64 + 1.0),
        permutations,
    })
}
