//! Regression-based sensitivity analysis.
//!
//! Responses (one long-term metric value per configuration) are regressed on
//! standardized parameter columns and their pairwise interactions. Terms are
//! then ranked by their sum of squares, with η² effect sizes and F-test
//! p-values.

mod anova;
mod design;
mod fdist;
mod ols;
mod ranking;

pub use anova::{
    anova, rank_terms, AnovaRow, AnovaTable, Coefficient, EffectClass, RankedTerm,
    SensitivityReport, ALPHA,
};
pub use design::{encode_design, standardize, Column, DesignMatrix, Term, TermKind};
pub use fdist::f_cdf;
pub use ols::{fit_ols, least_squares, FitResult, LeastSquares};
pub use ranking::{kendall_tau, rbo};

use thiserror::Error;

use crate::config::{ConfigSpace, Configuration};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensitivityError {
    #[error("need at least 2 distinct configurations")]
    TooFewConfigurations,
    #[error("non-finite response")]
    NonFiniteResponse,
    #[error("underdetermined: {rows} rows for {columns} columns")]
    Underdetermined { rows: usize, columns: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty anova table")]
    EmptyTable,
    #[error("invalid ranking: {0}")]
    InvalidRanking(String),
}

/// Encode, fit, decompose and rank in one go.
pub fn analyze(
    space: &ConfigSpace,
    configs: &[Configuration],
    responses: &[f64],
    response_name: &str,
) -> Result<SensitivityReport, SensitivityError> {
    let design = encode_design(space, configs, responses)?;
    let fit = fit_ols(&design)?;
    let table = anova(&design, &fit)?;
    rank_terms(&table, response_name)
}

/// Ranks `baseline`'s significant terms in both reports and returns
/// `(rbo, kendall tau)`. Terms missing from `sampled` are placed last.
pub fn compare_rankings(
    baseline: &SensitivityReport,
    sampled: &SensitivityReport,
    persistence: f64,
) -> Result<(f64, f64), SensitivityError> {
    let reference = baseline.significant_terms();
    let mut other: Vec<(f64, String)> = reference
        .iter()
        .map(|t| {
            let ss = sampled.term(t).map_or(f64::NEG_INFINITY, |r| r.row.sum_sq);
            (ss, t.clone())
        })
        .collect();
    other.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let other: Vec<String> = other.into_iter().map(|(_, t)| t).collect();
    let r = rbo(&reference, &other, persistence)?;
    let tau = if reference.len() >= 2 {
        kendall_tau(&reference, &other)?
    } else {
        1.0
    };
    Ok((r, tau))
}
