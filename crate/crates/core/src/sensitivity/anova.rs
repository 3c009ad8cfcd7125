use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use super::fdist::f_cdf;
use super::ols::{least_squares, FitResult};
use super::SensitivityError;

/// Significance threshold used to flag rows.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectClass {
    Negligible,
    Small,
    Medium,
    Large,
}

impl EffectClass {
    /// Cohen's classes for η²: 0.01 / 0.06 / 0.14.
    pub fn from_eta_squared(eta: f64) -> Self {
        if eta >= 0.14 {
            EffectClass::Large
        } else if eta >= 0.06 {
            EffectClass::Medium
        } else if eta >= 0.01 {
            EffectClass::Small
        } else {
            EffectClass::Negligible
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EffectClass::Negligible => "negligible",
            EffectClass::Small => "small",
            EffectClass::Medium => "medium",
            EffectClass::Large => "large",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub dummy: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub term: String,
    pub coefficients: Vec<Coefficient>,
    pub sum_sq: f64,
    pub df: usize,
    pub f_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub eta_squared: f64,
    pub effect: EffectClass,
}

impl AnovaRow {
    pub fn is_significant(&self) -> bool {
        self.p_value.is_some_and(|p| p < ALPHA)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub rows: Vec<AnovaRow>,
    pub ss_resid: f64,
    pub df_resid: i64,
    pub ss_total: f64,
    pub r_squared: Option<f64>,
    pub n_rows: usize,
    /// Constant columns and terms without columns (from encoding), plus
    /// terms whose columns were all aliased.
    pub dropped: Vec<String>,
    pub aliased: Vec<String>,
}

/// Per-term sums of squares: SSR without the term's columns minus SSR of the
/// full model.
pub fn anova(x: &DesignMatrix, fit: &FitResult) -> Result<AnovaTable, SensitivityError> {
    let n = x.rows();
    let mean = x.response.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = x.response.iter().map(|v| v - mean).collect();
    let df_resid = fit.df_resid();
    let ms_resid = (df_resid > 0).then(|| fit.ss_resid / df_resid as f64);

    let mut rows = Vec::new();
    let mut aliased = Vec::new();
    for (t, term) in x.terms.iter().enumerate() {
        let df = term
            .columns
            .iter()
            .filter(|&&c| fit.coefficients[c].is_some())
            .count();
        if df == 0 {
            aliased.push(term.name.clone());
            continue;
        }
        let reduced: Vec<&[f64]> = x
            .columns
            .iter()
            .filter(|c| c.term != t)
            .map(|c| c.values.as_slice())
            .collect();
        let ssr_reduced = least_squares(&reduced, &y).ssr;
        let sum_sq = (ssr_reduced - fit.ss_resid).max(0.0);
        let (f_stat, p_value) = match ms_resid {
            Some(ms) if ms > 0.0 => {
                let f = (sum_sq / df as f64) / ms;
                (Some(f), Some((1.0 - f_cdf(f, df as f64, df_resid as f64)).clamp(0.0, 1.0)))
            }
            Some(_) => (Some(f64::INFINITY), Some(0.0)),
            None => (None, None),
        };
        let eta_squared = if fit.ss_total > 0.0 {
            (sum_sq / fit.ss_total).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let coefficients = term
            .columns
            .iter()
            .filter_map(|&c| {
                fit.coefficients[c].map(|value| Coefficient {
                    dummy: x.columns[c].dummy.clone(),
                    value,
                })
            })
            .collect();
        rows.push(AnovaRow {
            term: term.name.clone(),
            coefficients,
            sum_sq,
            df,
            f_stat,
            p_value,
            eta_squared,
            effect: EffectClass::from_eta_squared(eta_squared),
        });
    }
    Ok(AnovaTable {
        rows,
        ss_resid: fit.ss_resid,
        df_resid,
        ss_total: fit.ss_total,
        r_squared: fit.r_squared,
        n_rows: n,
        dropped: x.dropped.clone(),
        aliased,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTerm {
    pub rank: usize,
    #[serde(flatten)]
    pub row: AnovaRow,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub response: String,
    pub rows: Vec<RankedTerm>,
    pub r_squared: Option<f64>,
    pub ss_total: f64,
    pub ss_resid: f64,
    pub df_resid: i64,
    pub n_rows: usize,
    pub dropped: Vec<String>,
    pub aliased: Vec<String>,
}

impl SensitivityReport {
    pub fn term(&self, name: &str) -> Option<&RankedTerm> {
        self.rows.iter().find(|r| r.row.term == name)
    }

    /// Names of significant terms in rank order.
    pub fn significant_terms(&self) -> Vec<String> {
        self.rows
            .iter()
            .filter(|r| r.significant)
            .map(|r| r.row.term.clone())
            .collect()
    }
}

/// Orders rows by sum of squares, descending; equal sums by term name.
pub fn rank_terms(table: &AnovaTable, response: &str) -> Result<SensitivityReport, SensitivityError> {
    if table.rows.is_empty() {
        return Err(SensitivityError::EmptyTable);
    }
    let mut rows = table.rows.clone();
    rows.sort_by(|a, b| match b.sum_sq.partial_cmp(&a.sum_sq) {
        Some(Ordering::Equal) | None => a.term.cmp(&b.term),
        Some(o) => o,
    });
    Ok(SensitivityReport {
        response: response.to_string(),
        rows: rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| RankedTerm {
                rank: i + 1,
                significant: row.is_significant(),
                row,
            })
            .collect(),
        r_squared: table.r_squared,
        ss_total: table.ss_total,
        ss_resid: table.ss_resid,
        df_resid: table.df_resid,
        n_rows: table.n_rows,
        dropped: table.dropped.clone(),
        aliased: table.aliased.clone(),
    })
}
