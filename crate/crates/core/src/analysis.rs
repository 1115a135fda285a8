//! Margin statistics, accuracy and the leave-one-out bound.

use std::fmt::Write as _;

use crate::data::{format_real, Label, LabeledDataset};
use crate::error::{LdmError, Result};
use crate::kernel::{gram_matrix, KernelSpec};
use crate::kernel_ldm::{solve_gram, KernelLdmParams};

/// Largest dataset [`leave_one_out_error`] retrains on.
pub const DEFAULT_LOO_CAP: usize = 200;

/// Per-instance margins `gamma_i = y_i f(x_i)` and their summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginStats {
    pub margins: Vec<f64>,
    pub mean: f64,
    /// `(2/m^2) (m sum gamma^2 - (sum gamma)^2)`
    pub variance: f64,
    pub minimum: f64,
    /// Empirical CDF: `(margin, fraction of margins <= margin)`, one row per
    /// distinct margin.
    pub cumulative: Vec<(f64, f64)>,
}

pub fn compute_margins(scores: &[f64], y: &[Label]) -> Result<MarginStats> {
    if scores.len() != y.len() {
        return Err(LdmError::LengthMismatch {
            left: scores.len(),
            right: y.len(),
        });
    }
    if scores.is_empty() {
        return Err(LdmError::DegenerateData("no margins to summarize".into()));
    }
    // + 0.0 turns -0.0 into 0.0
    let margins: Vec<f64> = scores.iter().zip(y).map(|(s, l)| l.sign() * s + 0.0).collect();
    let m = margins.len() as f64;
    let mean = margins.iter().sum::<f64>() / m;
    // centred form of (2/m^2)(m sum g^2 - (sum g)^2)
    let variance = 2.0 / m * margins.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>();
    let minimum = margins.iter().copied().fold(f64::INFINITY, f64::min);

    let mut sorted = margins.clone();
    sorted.sort_by(f64::total_cmp);
    let mut cumulative: Vec<(f64, f64)> = Vec::new();
    for (k, &g) in sorted.iter().enumerate() {
        let frac = (k + 1) as f64 / m;
        match cumulative.last_mut() {
            Some(last) if last.0 == g => last.1 = frac,
            _ => cumulative.push((g, frac)),
        }
    }
    Ok(MarginStats {
        margins,
        mean,
        variance,
        minimum,
        cumulative,
    })
}

/// Rows of the cumulative margin curve.
pub fn cumulative_curve_export(stats: &MarginStats) -> Vec<(f64, f64)> {
    stats.cumulative.clone()
}

/// `margin,fraction` CSV with 17 significant digits.
pub fn cumulative_curve_csv(stats: &MarginStats) -> String {
    let mut out = String::from("margin,fraction\n");
    for &(g, f) in &stats.cumulative {
        let _ = writeln!(out, "{},{}", format_real(g), format_real(f));
    }
    out
}

/// Leave-one-out bound `(h sum_{I1} beta_i + |I2|) / m` from a dual solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LooBoundReport {
    pub bound: f64,
    /// `max_i h_ii`
    pub h: f64,
    /// Indices strictly inside the box.
    pub interior: Vec<usize>,
    /// Indices at the upper bound `C`.
    pub at_bound: Vec<usize>,
}

pub fn default_boundary_tol(c: f64) -> f64 {
    1e-6 * c
}

/// `dual` holds the box-constrained dual variables (in `[0, c]`), `h_diag`
/// the diagonal of the dual Hessian.
pub fn loo_bound(dual: &[f64], h_diag: &[f64], c: f64, boundary_tol: f64) -> LooBoundReport {
    let m = dual.len();
    let h = h_diag.iter().copied().fold(0.0, f64::max);
    let mut interior = Vec::new();
    let mut at_bound = Vec::new();
    for (i, &a) in dual.iter().enumerate() {
        if a >= c - boundary_tol {
            at_bound.push(i);
        } else if a > boundary_tol {
            interior.push(i);
        }
    }
    let bound = if m == 0 {
        0.0
    } else {
        let s: f64 = interior.iter().map(|&i| dual[i]).sum();
        ((h * s + at_bound.len() as f64) / m as f64).clamp(0.0, 1.0)
    };
    LooBoundReport {
        bound,
        h,
        interior,
        at_bound,
    }
}

/// Fraction of instances misclassified by a kernel LDM trained on all the
/// others. Each retraining uses the full Gram matrix with one row and column
/// deleted.
pub fn leave_one_out_error(d: &LabeledDataset, spec: &KernelSpec, params: &KernelLdmParams) -> Result<f64> {
    leave_one_out_error_capped(d, spec, params, DEFAULT_LOO_CAP)
}

pub fn leave_one_out_error_capped(
    d: &LabeledDataset,
    spec: &KernelSpec,
    params: &KernelLdmParams,
    cap: usize,
) -> Result<f64> {
    let m = d.len();
    if m > cap {
        return Err(LdmError::TooLarge {
            what: "leave-one-out retraining",
            m,
            cap,
        });
    }
    if m < 2 {
        return Err(LdmError::DegenerateData("leave-one-out needs at least two instances".into()));
    }
    params.validate()?;
    spec.validate()?;
    let gram = gram_matrix(spec, d);
    let y = d.signs();
    let mut errors = 0usize;
    for i in 0..m {
        let keep: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        let sub_y: Vec<f64> = keep.iter().map(|&j| y[j]).collect();
        let sub = KernelLdmParams {
            record_objective: false,
            ..params.clone()
        };
        let (state, _) = solve_gram(&gram.without(i), &sub_y, &sub)?;
        let score: f64 = keep
            .iter()
            .zip(state.alpha.iter())
            .map(|(&j, a)| a * gram.matrix()[(j, i)])
            .sum();
        if Label::from_score(score) != d.labels()[i] {
            errors += 1;
        }
    }
    Ok(errors as f64 / m as f64)
}

pub fn accuracy(predictions: &[Label], truth: &[Label]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(LdmError::LengthMismatch {
            left: predictions.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(LdmError::DegenerateData("no predictions to score".into()));
    }
    let hits = predictions.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}
