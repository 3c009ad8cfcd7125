//! Ranking similarity: extrapolated rank-biased overlap and Kendall's tau.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use super::SensitivityError;

fn check_unique<T: Eq + Hash>(r: &[T]) -> Result<(), SensitivityError> {
    let mut seen = HashSet::with_capacity(r.len());
    if r.iter().all(|x| seen.insert(x)) {
        Ok(())
    } else {
        Err(SensitivityError::InvalidRanking("duplicate item".into()))
    }
}

/// Extrapolated RBO (Webber, Moffat & Zobel) with persistence `p`.
///
/// Lists may differ in length; for equal-length lists this reduces to
/// `X_k/k · p^k + (1−p)/p · Σ_{d≤k} X_d/d · p^d`.
pub fn rbo<T: Eq + Hash>(r1: &[T], r2: &[T], p: f64) -> Result<f64, SensitivityError> {
    if r1.is_empty() || r2.is_empty() {
        return Err(SensitivityError::InvalidRanking("empty ranking".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(SensitivityError::InvalidRanking(format!("persistence {p} outside (0, 1)")));
    }
    check_unique(r1)?;
    check_unique(r2)?;
    let (short, long) = if r1.len() <= r2.len() { (r1, r2) } else { (r2, r1) };
    let s = short.len();
    let l = long.len();

    let mut seen_short = HashSet::new();
    let mut seen_long = HashSet::new();
    let mut overlap = 0usize;
    // overlap[d-1] = |short[..min(d,s)] ∩ long[..d]|
    let mut x = Vec::with_capacity(l);
    for d in 0..l {
        let b = &long[d];
        if d < s {
            let a = &short[d];
            if a == b {
                overlap += 1;
            } else {
                if seen_long.contains(a) {
                    overlap += 1;
                }
                if seen_short.contains(b) {
                    overlap += 1;
                }
            }
            seen_short.insert(a);
        } else if seen_short.contains(b) {
            overlap += 1;
        }
        seen_long.insert(b);
        x.push(overlap as f64);
    }

    let x_s = x[s - 1];
    let x_l = x[l - 1];
    let mut sum = 0.0;
    let mut pd = 1.0;
    for d in 1..=l {
        pd *= p;
        sum += x[d - 1] / d as f64 * pd;
        if d > s {
            sum += x_s * (d - s) as f64 / (s * d) as f64 * pd;
        }
    }
    let tail = ((x_l - x_s) / l as f64 + x_s / s as f64) * p.powi(l as i32);
    Ok((1.0 - p) / p * sum + tail)
}

/// Kendall's tau-a between two orderings of the same items.
pub fn kendall_tau<T: Eq + Hash>(r1: &[T], r2: &[T]) -> Result<f64, SensitivityError> {
    let n = r1.len();
    if n < 2 {
        return Err(SensitivityError::InvalidRanking("need at least 2 items".into()));
    }
    check_unique(r1)?;
    let pos2: HashMap<&T, usize> = r2.iter().enumerate().map(|(i, x)| (x, i)).collect();
    if r2.len() != n || pos2.len() != n {
        return Err(SensitivityError::InvalidRanking("rankings cover different items".into()));
    }
    let mapped = r1
        .iter()
        .map(|x| pos2.get(x).copied())
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| SensitivityError::InvalidRanking("rankings cover different items".into()))?;
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += if mapped[i] < mapped[j] { 1 } else { -1 };
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        let r = ["a", "b", "c", "d", "e"];
        assert!((rbo(&r, &r, 0.8).unwrap() - 1.0).abs() < 1e-12);
        assert!((rbo(&r, &r, 0.3).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(kendall_tau(&r, &r).unwrap(), 1.0);
    }

    #[test]
    fn swapped_pair_depth_two() {
        // X1 = 0, X2 = 2: 0.64 + 0.25 * (0 + 0.64) = 0.8
        let v = rbo(&["a", "b"], &["b", "a"], 0.8).unwrap();
        assert!((v - 0.8).abs() < 1e-12, "{v}");
    }

    #[test]
    fn reversal_tau() {
        assert_eq!(kendall_tau(&[1, 2, 3, 4], &[4, 3, 2, 1]).unwrap(), -1.0);
    }

    #[test]
    fn disjoint_prefix_scores_lower() {
        let base: Vec<u32> = (0..20).collect();
        let mut same_prefix = base.clone();
        same_prefix.swap(15, 16);
        let mut disjoint = base.clone();
        disjoint[..4].reverse();
        disjoint.swap(0, 10);
        disjoint.swap(1, 11);
        assert!(rbo(&base, &disjoint, 0.8).unwrap() < rbo(&base, &same_prefix, 0.8).unwrap());
    }

    #[test]
    fn uneven_lengths_match_equal_formula_when_prefix() {
        // extending the longer list with items absent from the shorter one
        // is handled by the uneven-length branch
        let v = rbo(&["a", "b", "c"], &["a", "b", "c", "d"], 0.8).unwrap();
        assert!(v > 0.9 && v <= 1.0 + 1e-12, "{v}");
    }

    #[test]
    fn errors() {
        let empty: [&str; 0] = [];
        assert!(rbo(&empty, &["a"], 0.8).is_err());
        assert!(rbo(&["a", "a"], &["a"], 0.8).is_err());
        assert!(rbo(&["a"], &["a"], 1.0).is_err());
        assert!(kendall_tau(&["a"], &["a"]).is_err());
        assert!(kendall_tau(&["a", "b"], &["a", "c"]).is_err());
    }
}
