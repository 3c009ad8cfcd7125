//! Least squares through Householder QR.
//!
//! Columns are processed left to right; a column whose component orthogonal
//! to the already-accepted columns is negligible is marked aliased and left
//! out of the fit.

use super::design::DesignMatrix;
use super::SensitivityError;

/// Relative norm below which a column counts as aliased.
const ALIAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    /// `None` for aliased columns.
    pub coefficients: Vec<Option<f64>>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    pub rank: usize,
}

/// Solves min ‖y − Xβ‖ for the given columns (no intercept).
pub fn least_squares(columns: &[&[f64]], y: &[f64]) -> LeastSquares {
    let n = y.len();
    let p = columns.len();
    let mut a: Vec<Vec<f64>> = columns.iter().map(|c| c.to_vec()).collect();
    let mut qty = y.to_vec();
    let mut pivots: Vec<usize> = Vec::new();
    let mut r_diag: Vec<f64> = Vec::new();

    for j in 0..p {
        let r = pivots.len();
        if r >= n {
            break;
        }
        let orig = columns[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm = a[j][r..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if orig == 0.0 || norm <= ALIAS_TOL * orig {
            continue;
        }
        // reflector v = x - alpha e1 with alpha = -sign(x0)‖x‖
        let alpha = if a[j][r] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][r..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            let apply = |col: &mut [f64]| {
                let dot: f64 = col[r..].iter().zip(&v).map(|(x, vi)| x * vi).sum();
                let f = 2.0 * dot / vnorm2;
                for (x, vi) in col[r..].iter_mut().zip(&v) {
                    *x -= f * vi;
                }
            };
            for col in a.iter_mut().skip(j) {
                apply(col);
            }
            apply(&mut qty);
        }
        pivots.push(j);
        r_diag.push(a[j][r]);
    }

    let rank = pivots.len();
    // back substitution on the accepted columns
    let mut beta = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for (k, b) in beta.iter().enumerate().skip(i + 1) {
            s -= a[pivots[k]][i] * b;
        }
        beta[i] = s / r_diag[i];
    }
    let mut coefficients = vec![None; p];
    for (k, &j) in pivots.iter().enumerate() {
        coefficients[j] = Some(beta[k]);
    }
    let mut residuals = y.to_vec();
    for (k, &j) in pivots.iter().enumerate() {
        for (res, x) in residuals.iter_mut().zip(columns[j]) {
            *res -= beta[k] * x;
        }
    }
    let ssr = residuals.iter().map(|e| e * e).sum();
    LeastSquares {
        coefficients,
        residuals,
        ssr,
        rank,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: Vec<Option<f64>>,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub r_squared: Option<f64>,
    pub ss_resid: f64,
    pub ss_total: f64,
    pub rank: usize,
    /// Indices of aliased design columns.
    pub aliased: Vec<usize>,
}

impl FitResult {
    /// Residual degrees of freedom, accounting for the implicit intercept.
    pub fn df_resid(&self) -> i64 {
        self.residuals.len() as i64 - 1 - self.rank as i64
    }
}

/// Centers the response (implicit intercept) and fits every design column.
pub fn fit_ols(x: &DesignMatrix) -> Result<FitResult, SensitivityError> {
    let n = x.rows();
    let p = x.columns.len();
    if n < p + 1 {
        return Err(SensitivityError::Underdetermined { rows: n, columns: p });
    }
    let mean = x.response.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = x.response.iter().map(|v| v - mean).collect();
    let cols: Vec<&[f64]> = x.columns.iter().map(|c| c.values.as_slice()).collect();
    let ls = least_squares(&cols, &y);
    let ss_total: f64 = y.iter().map(|v| v * v).sum();
    let r_squared = if ss_total > 0.0 {
        Some((1.0 - ls.ssr / ss_total).clamp(0.0, 1.0))
    } else {
        None
    };
    let aliased = ls
        .coefficients
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.is_none().then_some(i))
        .collect();
    Ok(FitResult {
        coefficients: ls.coefficients,
        intercept: mean,
        residuals: ls.residuals,
        r_squared,
        ss_resid: ls.ssr,
        ss_total,
        rank: ls.rank,
        aliased,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit() {
        let x = [1.0, -1.0, 2.0, 0.5];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let ls = least_squares(&[&x], &y);
        assert!((ls.coefficients[0].unwrap() - 3.0).abs() < 1e-12);
        assert!(ls.ssr < 1e-24);
    }

    #[test]
    fn aliased_column_dropped_left_to_right() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        let c = [1.0, 0.0, 1.0, 0.0];
        let y = [1.0, 2.0, 2.0, 5.0];
        let ls = least_squares(&[&a, &b, &c], &y);
        assert!(ls.coefficients[0].is_some());
        assert!(ls.coefficients[1].is_none());
        assert!(ls.coefficients[2].is_some());
        assert_eq!(ls.rank, 2);
        for col in [&a[..], &c[..]] {
            let dot: f64 = col.iter().zip(&ls.residuals).map(|(x, e)| x * e).sum();
            assert!(dot.abs() < 1e-10);
        }
    }

    #[test]
    fn zero_column_is_aliased() {
        let z = [0.0; 3];
        let a = [1.0, 2.0, 4.0];
        let ls = least_squares(&[&z, &a], &[1.0, 1.0, 1.0]);
        assert_eq!(ls.coefficients[0], None);
        assert_eq!(ls.rank, 1);
    }
}
