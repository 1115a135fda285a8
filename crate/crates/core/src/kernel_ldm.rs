//! Kernel LDM trained by dual coordinate descent.
//!
//! With Gram matrix `G`, labels `y` (`Y = diag(y)`) and `m` instances the
//! expansion coefficients `alpha` minimize
//!
//! ```text
//! 1/2 alpha' Q alpha - (lambda2/m) (G y)' alpha + C sum xi_i
//! Q = (4 lambda1 / m^2) (m G'G - (G y)(G y)') + G
//! ```
//!
//! subject to the soft-margin constraints. The dual over `beta in [0, C]^m`
//! is
//!
//! ```text
//! f(beta) = 1/2 beta' H beta + ((lambda2/m) H e - e)' beta,   H = Y G Q^-1 G Y
//! ```
//!
//! and `alpha = Q^-1 G Y (lambda2/m e + beta)`. The solver never inverts `Q`:
//! it factors `Q + ridge I` once and precomputes `A = Q^-1 G Y` column by
//! column. [`coordinate_step`] keeps `alpha` current with rank-one updates
//! `alpha += dbeta_i A e_i`; [`DualProblem::solve`] instead tracks the scores
//! `u = Y G alpha` through columns of `H = (G Y)' A`, so a coordinate's
//! gradient costs O(1) and a coordinate that stays at its bound costs
//! nothing. `alpha` is recovered from `beta` at the end.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::analysis;
use crate::data::{Label, LabeledDataset, NormalizationMap, SparseVector};
use crate::error::{LdmError, Result};
use crate::kernel::{gram_matrix, GramMatrix, KernelSpec};
use crate::report::SolverReport;
use crate::rng;

pub const DEFAULT_RIDGE_SCALE: f64 = 1e-10;
pub const DEFAULT_SIZE_CAP: usize = 10_000;
pub const DEFAULT_DIAGNOSTIC_CAP: usize = 2_000;
/// Coordinates with `h_ii` at or below this have no usable curvature.
pub const MIN_CURVATURE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelLdmParams {
    /// Weight of the margin variance.
    pub lambda1: f64,
    /// Weight of the margin mean.
    pub lambda2: f64,
    /// Slack penalty.
    pub c: f64,
    /// Stop once the largest projected-gradient violation drops below this.
    pub tolerance: f64,
    pub max_epochs: usize,
    /// Ridge added to `Q`, relative to `trace(Q) / m`.
    pub ridge_scale: f64,
    /// Visit coordinates in a fresh seeded permutation each epoch instead of
    /// `0..m`.
    pub shuffle: bool,
    pub seed: u64,
    /// Record `f(beta)` after every epoch.
    pub record_objective: bool,
    /// Largest training set the dense solver accepts.
    pub size_cap: usize,
}

impl Default for KernelLdmParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0 / 16.0,
            lambda2: 1.0 / 16.0,
            c: 10.0,
            tolerance: 1e-3,
            max_epochs: 1000,
            ridge_scale: DEFAULT_RIDGE_SCALE,
            shuffle: true,
            seed: 0,
            record_objective: true,
            size_cap: DEFAULT_SIZE_CAP,
        }
    }
}

impl KernelLdmParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LdmError::InvalidParameter(msg));
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad(format!("lambda1 must be nonnegative, got {}", self.lambda1));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad(format!("lambda2 must be nonnegative, got {}", self.lambda2));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("C must be positive, got {}", self.c));
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.ridge_scale >= 0.0 && self.ridge_scale.is_finite()) {
            return bad(format!("ridge_scale must be nonnegative, got {}", self.ridge_scale));
        }
        Ok(())
    }
}

/// `Q + ridge I` in factored form.
#[derive(Debug, Clone)]
pub struct QOperator {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    ridge: f64,
}

impl QOperator {
    /// The assembled matrix, ridge included.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

/// `G Y`: column `j` of `G` scaled by `y_j`.
fn scale_columns(g: &DMatrix<f64>, y: &[f64]) -> DMatrix<f64> {
    let mut gy = g.clone();
    for (j, &yj) in y.iter().enumerate() {
        gy.column_mut(j).scale_mut(yj);
    }
    gy
}

fn check_shapes(g: &GramMatrix, y: &[f64]) -> Result<()> {
    if g.size() != y.len() {
        return Err(LdmError::LengthMismatch {
            left: g.size(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(LdmError::DegenerateData("no training instances".into()));
    }
    Ok(())
}

/// Assemble and factor `Q + ridge I` with `ridge = ridge_scale * trace(Q) / m`.
pub fn assemble_q(g: &GramMatrix, y: &[f64], lambda1: f64, ridge_scale: f64) -> Result<QOperator> {
    check_shapes(g, y)?;
    let gm = g.matrix();
    let m = gm.nrows();
    let mut q = gm.clone();
    if lambda1 != 0.0 {
        let mf = m as f64;
        let gy = gm * DVector::from_column_slice(y);
        let mut pair = gm * gm;
        pair *= mf;
        pair.ger(-1.0, &gy, &gy, 1.0);
        q += pair * (4.0 * lambda1 / (mf * mf));
        // G G is only symmetric up to rounding
        for j in 0..m {
            for i in 0..j {
                let s = 0.5 * (q[(i, j)] + q[(j, i)]);
                q[(i, j)] = s;
                q[(j, i)] = s;
            }
        }
    }
    let ridge = ridge_scale * q.trace() / m as f64;
    for i in 0..m {
        q[(i, i)] += ridge;
    }
    let chol = Cholesky::new(q.clone()).ok_or(LdmError::Factorization { ridge, ridge_scale })?;
    Ok(QOperator {
        matrix: q,
        chol,
        ridge,
    })
}

/// Dual variables and the quantities coordinate descent maintains.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub beta: DVector<f64>,
    pub alpha: DVector<f64>,
    /// `A = Q^-1 G Y`
    pub a_matrix: DMatrix<f64>,
    /// `h_ii = (G Y e_i)' (A e_i)`, the diagonal of `H`.
    pub h_diag: DVector<f64>,
}

/// `beta = 0`, `alpha = (lambda2/m) Q^-1 G y`, `A = Q^-1 G Y`.
pub fn init_state(
    q: &QOperator,
    g: &GramMatrix,
    y: &[f64],
    params: &KernelLdmParams,
) -> Result<DualState> {
    check_shapes(g, y)?;
    let m = y.len();
    let gy = scale_columns(g.matrix(), y);
    let a_matrix = q.solve_matrix(&gy);
    let h_diag = DVector::from_fn(m, |i, _| gy.column(i).dot(&a_matrix.column(i)));
    let gy_vec = g.matrix() * DVector::from_column_slice(y);
    let alpha = q.solve(&gy_vec) * (params.lambda2 / m as f64);
    if !(a_matrix.iter().all(|v| v.is_finite()) && alpha.iter().all(|v| v.is_finite())) {
        return Err(LdmError::Factorization {
            ridge: q.ridge(),
            ridge_scale: params.ridge_scale,
        });
    }
    Ok(DualState {
        beta: DVector::zeros(m),
        alpha,
        a_matrix,
        h_diag,
    })
}

/// Exact minimizer of `1/2 h t^2 + grad t` over `beta + t in [0, c]`.
pub fn clipped_newton(beta: f64, grad: f64, h: f64, c: f64) -> f64 {
    (beta - grad / h).max(0.0).min(c)
}

/// Magnitude of the projected gradient at one coordinate.
pub fn projected_violation(beta: f64, grad: f64, c: f64) -> f64 {
    if beta <= 0.0 {
        (-grad).max(0.0)
    } else if beta >= c {
        grad.max(0.0)
    } else {
        grad.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// `|beta_i_new - beta_i_old|`
    pub delta: f64,
    /// Projected-gradient violation at coordinate `i` before the step.
    pub violation: f64,
}

/// `[grad f(beta)]_i = y_i (G alpha)_i - 1`
pub fn coordinate_gradient(state: &DualState, i: usize, g: &GramMatrix, y: &[f64]) -> f64 {
    y[i] * g.matrix().column(i).dot(&state.alpha) - 1.0
}

/// Minimize `f` along coordinate `i` and update `alpha` to match.
///
/// When `h_ii <= MIN_CURVATURE` the restriction of `f` to the coordinate is
/// linear, so `beta_i` moves to whichever bound the gradient points at.
pub fn coordinate_step(
    state: &mut DualState,
    i: usize,
    g: &GramMatrix,
    y: &[f64],
    c: f64,
) -> StepOutcome {
    let grad = coordinate_gradient(state, i, g, y);
    let old = state.beta[i];
    let violation = projected_violation(old, grad, c);
    let h = state.h_diag[i];
    let new = if h > MIN_CURVATURE {
        clipped_newton(old, grad, h, c)
    } else if grad < 0.0 {
        c
    } else if grad > 0.0 {
        0.0
    } else {
        old
    };
    let diff = new - old;
    if diff != 0.0 {
        state.beta[i] = new;
        state.alpha.axpy(diff, &state.a_matrix.column(i), 1.0);
    }
    StepOutcome {
        delta: diff.abs(),
        violation,
    }
}

/// `f(beta)` evaluated with an explicitly formed `H = (G Y)' Q^-1 (G Y)`.
pub fn dual_objective(
    state: &DualState,
    g: &GramMatrix,
    y: &[f64],
    q: &QOperator,
    lambda2: f64,
) -> Result<f64> {
    dual_objective_capped(state, g, y, q, lambda2, DEFAULT_DIAGNOSTIC_CAP)
}

pub fn dual_objective_capped(
    state: &DualState,
    g: &GramMatrix,
    y: &[f64],
    q: &QOperator,
    lambda2: f64,
    cap: usize,
) -> Result<f64> {
    check_shapes(g, y)?;
    let m = y.len();
    if m > cap {
        return Err(LdmError::TooLarge {
            what: "dense dual objective (disable objective diagnostics)",
            m,
            cap,
        });
    }
    let gy = scale_columns(g.matrix(), y);
    let h = gy.transpose() * q.solve_matrix(&gy);
    let e = DVector::from_element(m, 1.0);
    let linear = &h * &e * (lambda2 / m as f64) - &e;
    let beta = &state.beta;
    Ok(0.5 * beta.dot(&(&h * beta)) + linear.dot(beta))
}

/// `|alpha - Q^-1 G Y (lambda2/m e + beta)|_inf`: drift of the incrementally
/// maintained `alpha` from its closed form.
pub fn alpha_drift(state: &DualState, g: &GramMatrix, y: &[f64], q: &QOperator, lambda2: f64) -> f64 {
    let m = y.len();
    let shifted = state.beta.add_scalar(lambda2 / m as f64);
    let rhs = g.matrix() * shifted.component_mul(&DVector::from_column_slice(y));
    (q.solve(&rhs) - &state.alpha).amax()
}

/// The part of the dual that depends only on `(G, y, lambda1)`: reusable
/// across `C` and `lambda2`.
#[derive(Debug, Clone)]
pub struct DualProblem<'g> {
    gram: &'g GramMatrix,
    y: Vec<f64>,
    q: QOperator,
    base: DualState,
    /// `H = Y G Q^-1 G Y`
    h: DMatrix<f64>,
    /// `Q^-1 G y`
    unit_alpha: DVector<f64>,
    /// `H e`
    h_e: DVector<f64>,
}

impl<'g> DualProblem<'g> {
    pub fn new(gram: &'g GramMatrix, y: &[f64], lambda1: f64, ridge_scale: f64) -> Result<Self> {
        let q = assemble_q(gram, y, lambda1, ridge_scale)?;
        let params = KernelLdmParams {
            lambda1,
            lambda2: 0.0,
            ridge_scale,
            ..Default::default()
        };
        let base = init_state(&q, gram, y, &params)?;
        let mut h = scale_columns(gram.matrix(), y).tr_mul(&base.a_matrix);
        // symmetric up to rounding
        let m = y.len();
        for j in 0..m {
            for i in 0..j {
                let v = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let unit_alpha = q.solve(&(gram.matrix() * DVector::from_column_slice(y)));
        let h_e = h.column_sum();
        Ok(Self {
            gram,
            y: y.to_vec(),
            q,
            base,
            h,
            unit_alpha,
            h_e,
        })
    }

    pub fn q(&self) -> &QOperator {
        &self.q
    }

    pub fn gram(&self) -> &GramMatrix {
        self.gram
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn h_diag(&self) -> &DVector<f64> {
        &self.base.h_diag
    }

    /// Fresh state with `beta = 0` for the given `lambda2`.
    pub fn initial_state(&self, lambda2: f64) -> DualState {
        let mut s = self.base.clone();
        s.alpha = &self.unit_alpha * (lambda2 / self.y.len() as f64);
        s
    }

    /// `u = Y G alpha = H ((lambda2/m) e + beta)`
    fn scores(&self, beta: &DVector<f64>, lambda2: f64) -> DVector<f64> {
        &self.h * beta + &self.h_e * (lambda2 / self.y.len() as f64)
    }

    /// `(f(beta), max projected violation)` from exact scores `u`, using
    /// `f = 1/2 beta'(u + (lambda2/m) H e) - e'beta`.
    fn evaluate(&self, beta: &DVector<f64>, u: &DVector<f64>, lambda2: f64, c: f64) -> (f64, f64) {
        let scale = lambda2 / self.y.len() as f64;
        let mut objective = 0.0;
        let mut violation: f64 = 0.0;
        for (i, &b) in beta.iter().enumerate() {
            objective += 0.5 * b * (u[i] + scale * self.h_e[i]) - b;
            violation = violation.max(projected_violation(b, u[i] - 1.0, c));
        }
        (objective, violation)
    }

    /// Run dual coordinate descent from `beta = 0`.
    pub fn solve(&self, params: &KernelLdmParams) -> Result<(DualState, SolverReport)> {
        params.validate()?;
        let m = self.y.len();
        let c = params.c;
        let h_diag = &self.base.h_diag;
        let mut beta = DVector::zeros(m);
        let mut u = self.scores(&beta, params.lambda2);
        let mut report = SolverReport::default();
        let mut order: Vec<usize> = (0..m).collect();
        let mut rng = rng::seeded(params.seed);

        for epoch in 1..=params.max_epochs {
            if params.shuffle {
                order = rng::permutation(m, &mut rng);
            }
            let mut worst: f64 = 0.0;
            for &i in &order {
                let grad = u[i] - 1.0;
                let old = beta[i];
                worst = worst.max(projected_violation(old, grad, c));
                let new = if h_diag[i] > MIN_CURVATURE {
                    clipped_newton(old, grad, h_diag[i], c)
                } else if grad < 0.0 {
                    c
                } else if grad > 0.0 {
                    0.0
                } else {
                    old
                };
                let diff = new - old;
                if diff != 0.0 {
                    beta[i] = new;
                    u.axpy(diff, &self.h.column(i), 1.0);
                }
            }
            report.epochs = epoch;
            report.iterations += m as u64;

            let check = worst < params.tolerance || epoch == params.max_epochs;
            if params.record_objective || check {
                // refresh the incrementally maintained scores
                u = self.scores(&beta, params.lambda2);
                let (objective, violation) = self.evaluate(&beta, &u, params.lambda2, c);
                if !objective.is_finite() {
                    return Err(LdmError::Diverged("dual objective is not finite".into()));
                }
                if params.record_objective {
                    report.objective_trace.push(objective);
                }
                report.final_violation = Some(violation);
                if violation < params.tolerance {
                    report.converged = true;
                    break;
                }
            }
        }
        let bound = analysis::loo_bound(
            beta.as_slice(),
            h_diag.as_slice(),
            c,
            analysis::default_boundary_tol(c),
        );
        report.loo_bound = Some(bound.bound);
        let mut state = self.initial_state(params.lambda2);
        state.alpha.gemv(1.0, &self.base.a_matrix, &beta, 1.0);
        state.beta = beta;
        Ok((state, report))
    }
}

/// Solve on a precomputed Gram matrix.
pub fn solve_gram(
    gram: &GramMatrix,
    y: &[f64],
    params: &KernelLdmParams,
) -> Result<(DualState, SolverReport)> {
    params.validate()?;
    if y.len() > params.size_cap {
        return Err(LdmError::TooLarge {
            what: "kernel solver",
            m: y.len(),
            cap: params.size_cap,
        });
    }
    DualProblem::new(gram, y, params.lambda1, params.ridge_scale)?.solve(params)
}

/// Train a kernel LDM on `d` as given (no feature scaling).
pub fn solve(
    d: &LabeledDataset,
    spec: &KernelSpec,
    params: &KernelLdmParams,
) -> Result<(KernelLdmModel, SolverReport)> {
    params.validate()?;
    spec.validate()?;
    d.require_both_classes()?;
    if d.len() > params.size_cap {
        return Err(LdmError::TooLarge {
            what: "kernel solver",
            m: d.len(),
            cap: params.size_cap,
        });
    }
    let gram = gram_matrix(spec, d);
    let (state, report) = solve_gram(&gram, &d.signs(), params)?;
    let model = KernelLdmModel::new(
        state.alpha.as_slice().to_vec(),
        d.instances().to_vec(),
        *spec,
        None,
    )?;
    Ok((model, report))
}

/// `sum_i alpha_i k(x_i, z)`
#[derive(Debug, Clone, PartialEq)]
pub struct KernelLdmModel {
    alpha: Vec<f64>,
    support: Vec<SparseVector>,
    kernel: KernelSpec,
    normalizer: Option<NormalizationMap>,
}

impl KernelLdmModel {
    pub fn new(
        alpha: Vec<f64>,
        support: Vec<SparseVector>,
        kernel: KernelSpec,
        normalizer: Option<NormalizationMap>,
    ) -> Result<Self> {
        if alpha.len() != support.len() {
            return Err(LdmError::LengthMismatch {
                left: alpha.len(),
                right: support.len(),
            });
        }
        kernel.validate()?;
        Ok(Self {
            alpha,
            support,
            kernel,
            normalizer,
        })
    }

    pub fn with_normalizer(mut self, map: NormalizationMap) -> Self {
        self.normalizer = Some(map);
        self
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn support(&self) -> &[SparseVector] {
        &self.support
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn normalizer(&self) -> Option<&NormalizationMap> {
        self.normalizer.as_ref()
    }

    /// Score of an already scaled instance.
    pub fn score_scaled(&self, z: &SparseVector) -> f64 {
        self.alpha
            .iter()
            .zip(&self.support)
            .map(|(a, x)| a * self.kernel.eval(x, z))
            .sum()
    }

    pub fn score(&self, z: &SparseVector) -> f64 {
        match &self.normalizer {
            Some(map) => self.score_scaled(&map.apply_vector(z)),
            None => self.score_scaled(z),
        }
    }

    pub fn predict(&self, z: &SparseVector) -> (Label, f64) {
        let s = self.score(z);
        (Label::from_score(s), s)
    }

    /// `w = sum_i alpha_i x_i` for the linear kernel; `None` otherwise.
    pub fn explicit_weights(&self) -> Option<Vec<f64>> {
        if self.kernel != KernelSpec::Linear {
            return None;
        }
        let dim = self.support.iter().map(SparseVector::max_index).max().unwrap_or(0);
        let mut w = vec![0.0; dim];
        for (a, x) in self.alpha.iter().zip(&self.support) {
            x.axpy_into(*a, &mut w);
        }
        Some(w)
    }
}

pub fn predict(model: &KernelLdmModel, z: &SparseVector) -> (Label, f64) {
    model.predict(z)
}
