//! Linear LDM trained by averaged stochastic gradient descent.
//!
//! The primal objective over `w` is
//!
//! ```text
//! g(w) = 1/2 w'w + (2 lambda1 / m^2) (m sum_i (w'x_i)^2 - (sum_i y_i w'x_i)^2)
//!        - (lambda2 / m) sum_i y_i w'x_i + C sum_i max(0, 1 - y_i w'x_i)
//! ```
//!
//! Each step draws two instances `i`, `j` independently and uniformly and
//! follows
//!
//! ```text
//! grad(w; i, j) = 4 lambda1 (x_i'w) x_i - 4 lambda1 y_i y_j (x_j'w) x_i + w
//!                 - lambda2 y_i x_i - m C [y_i w'x_i < 1] y_i x_i
//! ```
//!
//! whose mean over all `m^2` ordered pairs is exactly the gradient of `g`.
//! Besides `w` itself the estimate only points along `x_i`, so a step costs
//! `O(d + nnz(x_i) + nnz(x_j))`.

use rand::RngExt;

use crate::data::{Label, LabeledDataset, NormalizationMap, SparseVector};
use crate::error::{LdmError, Result};
use crate::report::SolverReport;
use crate::rng;

/// Step sizes tried by the calibration pass.
pub const ETA_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];
pub const DEFAULT_CALIBRATION_SIZE: usize = 1000;
/// Decay exponent of the step-size schedule.
pub const SCHEDULE_POWER: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLdmParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub c: f64,
    /// Passes over the data; `epochs * m` pair draws in total.
    pub epochs: usize,
    /// Initial step size; calibrated on a subsample when `None`.
    pub eta0: Option<f64>,
    /// Iteration at which averaging starts and the schedule's time scale;
    /// `m` when `None`.
    pub t0: Option<usize>,
    pub seed: u64,
    pub calibration_size: usize,
}

impl Default for LinearLdmParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0 / 16.0,
            lambda2: 1.0 / 16.0,
            c: 10.0,
            epochs: 5,
            eta0: None,
            t0: None,
            seed: 0,
            calibration_size: DEFAULT_CALIBRATION_SIZE,
        }
    }
}

impl LinearLdmParams {
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
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if let Some(eta) = self.eta0 {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad(format!("eta0 must be positive, got {eta}"));
            }
        }
        if self.t0 == Some(0) {
            return bad("t0 must be at least 1".into());
        }
        Ok(())
    }
}

/// `eta0 / (1 + t / t0)^0.75`
pub fn step_size(eta0: f64, t0: usize, t: u64) -> f64 {
    eta0 / (1.0 + t as f64 / t0 as f64).powf(SCHEDULE_POWER)
}

/// `1 / max(1, t - t0)`
pub fn averaging_weight(t0: usize, t: u64) -> f64 {
    1.0 / (t.saturating_sub(t0 as u64)).max(1) as f64
}

pub fn exact_objective(w: &[f64], d: &LabeledDataset, params: &LinearLdmParams) -> f64 {
    let m = d.len() as f64;
    let (mut sq, mut signed, mut hinge) = (0.0, 0.0, 0.0);
    for (x, y) in d.instances().iter().zip(d.labels()) {
        let s = x.dot_dense(w);
        let margin = y.sign() * s;
        sq += s * s;
        signed += margin;
        hinge += (1.0 - margin).max(0.0);
    }
    let ww: f64 = w.iter().map(|v| v * v).sum();
    0.5 * ww + 2.0 * params.lambda1 / (m * m) * (m * sq - signed * signed)
        - params.lambda2 / m * signed
        + params.c * hinge
}

/// Gradient of [`exact_objective`]; the hinge contributes only where
/// `y_i w'x_i < 1` strictly.
pub fn exact_gradient(w: &[f64], d: &LabeledDataset, params: &LinearLdmParams) -> Vec<f64> {
    let m = d.len() as f64;
    let scores: Vec<f64> = d.instances().iter().map(|x| x.dot_dense(w)).collect();
    let signed: f64 = scores.iter().zip(d.labels()).map(|(s, y)| y.sign() * s).sum();
    let var = 4.0 * params.lambda1 / (m * m);
    let mut grad = w.to_vec();
    for ((x, y), s) in d.instances().iter().zip(d.labels()).zip(&scores) {
        let y = y.sign();
        let mut coef = var * (m * s - signed * y) - params.lambda2 / m * y;
        if y * s < 1.0 {
            coef -= params.c * y;
        }
        x.axpy_into(coef, &mut grad);
    }
    grad
}

/// Coefficient `k` such that the stochastic gradient is `w + k x_i`.
fn pair_coefficient(
    w: &[f64],
    xi: &SparseVector,
    yi: f64,
    xj: &SparseVector,
    yj: f64,
    m: f64,
    params: &LinearLdmParams,
) -> f64 {
    let si = xi.dot_dense(w);
    let sj = xj.dot_dense(w);
    let mut coef = 4.0 * params.lambda1 * (si - yi * yj * sj) - params.lambda2 * yi;
    if yi * si < 1.0 {
        coef -= m * params.c * yi;
    }
    coef
}

pub fn stochastic_gradient(
    w: &[f64],
    i: usize,
    j: usize,
    d: &LabeledDataset,
    params: &LinearLdmParams,
) -> Vec<f64> {
    let (xs, ys) = (d.instances(), d.labels());
    let coef = pair_coefficient(w, &xs[i], ys[i].sign(), &xs[j], ys[j].sign(), d.len() as f64, params);
    let mut grad = w.to_vec();
    xs[i].axpy_into(coef, &mut grad);
    grad
}

/// Current iterate `w` and its running average `w_bar`, the predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub w_bar: Vec<f64>,
    pub t: u64,
    normalizer: Option<NormalizationMap>,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: vec![0.0; dim],
            w_bar: vec![0.0; dim],
            t: 0,
            normalizer: None,
        }
    }

    /// A model that predicts with `w_bar` (and carries it as `w` too).
    pub fn from_weights(w_bar: Vec<f64>, normalizer: Option<NormalizationMap>) -> Self {
        Self {
            w: w_bar.clone(),
            w_bar,
            t: 0,
            normalizer,
        }
    }

    pub fn with_normalizer(mut self, map: NormalizationMap) -> Self {
        self.normalizer = Some(map);
        self
    }

    pub fn normalizer(&self) -> Option<&NormalizationMap> {
        self.normalizer.as_ref()
    }

    /// One update with the pair `(i, j)`:
    /// `w -= eta grad(w; i, j)`, then `w_bar += mu (w - w_bar)`.
    pub fn sgd_step(
        &mut self,
        d: &LabeledDataset,
        i: usize,
        j: usize,
        eta: f64,
        mu: f64,
        params: &LinearLdmParams,
    ) {
        let (xs, ys) = (d.instances(), d.labels());
        let coef = pair_coefficient(&self.w, &xs[i], ys[i].sign(), &xs[j], ys[j].sign(), d.len() as f64, params);
        for v in self.w.iter_mut() {
            *v *= 1.0 - eta;
        }
        xs[i].axpy_into(-eta * coef, &mut self.w);
        for (b, v) in self.w_bar.iter_mut().zip(&self.w) {
            *b += mu * (v - *b);
        }
        self.t += 1;
    }

    pub fn score_scaled(&self, z: &SparseVector) -> f64 {
        z.dot_dense(&self.w_bar)
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
}

pub fn predict_linear(model: &LinearModel, z: &SparseVector) -> (Label, f64) {
    model.predict(z)
}

/// Run `epochs * m` averaged SGD steps from zero. Returns the model and the
/// objective `g(w_bar)` recorded at each epoch boundary.
fn run_asgd(
    d: &LabeledDataset,
    params: &LinearLdmParams,
    eta0: f64,
    t0: usize,
    seed: u64,
) -> (LinearModel, Vec<f64>) {
    let m = d.len();
    let mut model = LinearModel::zeros(d.dimension());
    let mut rng = rng::seeded(seed);
    let mut trace = Vec::with_capacity(params.epochs);
    for _ in 0..params.epochs {
        for _ in 0..m {
            let i = rng.random_range(0..m);
            let j = rng.random_range(0..m);
            let t = model.t + 1;
            model.sgd_step(d, i, j, step_size(eta0, t0, t), averaging_weight(t0, t), params);
        }
        trace.push(exact_objective(&model.w_bar, d, params));
    }
    (model, trace)
}

/// Pick `eta0` from [`ETA_GRID`]: one epoch on a seeded subsample per
/// candidate, keeping the one with the lowest `g(w_bar)` on that subsample.
pub fn calibrate_eta0(d: &LabeledDataset, params: &LinearLdmParams) -> Result<f64> {
    let n = d.len().min(params.calibration_size.max(2));
    let sample = if n < d.len() {
        let mut idx = rng::permutation(d.len(), &mut rng::seeded(rng::derive_seed(params.seed, 1)));
        idx.truncate(n);
        idx.sort_unstable();
        d.subset(&idx)?
    } else {
        d.clone()
    };
    let probe = LinearLdmParams { epochs: 1, ..params.clone() };
    let mut best: Option<(f64, f64)> = None;
    for &eta in &ETA_GRID {
        let (_, trace) = run_asgd(&sample, &probe, eta, n, rng::derive_seed(params.seed, 2));
        let g = trace[0];
        if g.is_finite() && best.is_none_or(|(_, b)| g < b) {
            best = Some((eta, g));
        }
    }
    best.map(|(eta, _)| eta)
        .ok_or_else(|| LdmError::Diverged("every calibration step size diverged".into()))
}

/// Train a linear LDM on `d` as given (no feature scaling).
pub fn train(d: &LabeledDataset, params: &LinearLdmParams) -> Result<(LinearModel, SolverReport)> {
    params.validate()?;
    d.require_both_classes()?;
    let eta0 = match params.eta0 {
        Some(eta) => eta,
        None => calibrate_eta0(d, params)?,
    };
    let t0 = params.t0.unwrap_or(d.len());
    let (model, trace) = run_asgd(d, params, eta0, t0, params.seed);
    if !model.w_bar.iter().chain(&model.w).all(|v| v.is_finite()) {
        return Err(LdmError::Diverged(format!(
            "weights became non-finite with eta0 = {eta0}"
        )));
    }
    let report = SolverReport {
        objective_trace: trace,
        converged: true,
        epochs: params.epochs,
        iterations: model.t,
        final_violation: None,
        loo_bound: None,
        eta0: Some(eta0),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{random_dataset, separable_dataset};
    use proptest::prelude::*;

    fn params(l1: f64, l2: f64, c: f64) -> LinearLdmParams {
        LinearLdmParams { lambda1: l1, lambda2: l2, c, ..Default::default() }
    }

    fn random_w(dim: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..dim).map(|_| r.random_range(-scale..scale)).collect()
    }

    /// Term-by-term dense evaluation with explicit `X X'` and `X y`.
    fn dense_objective(w: &[f64], d: &LabeledDataset, p: &LinearLdmParams) -> f64 {
        let dim = w.len();
        let m = d.len() as f64;
        let xs: Vec<Vec<f64>> = d.instances().iter().map(|x| x.to_dense(dim)).collect();
        let y = d.signs();
        let mut xxt = vec![vec![0.0; dim]; dim];
        let mut xy = vec![0.0; dim];
        for (x, yi) in xs.iter().zip(&y) {
            for a in 0..dim {
                xy[a] += x[a] * yi;
                for b in 0..dim {
                    xxt[a][b] += x[a] * x[b];
                }
            }
        }
        let mut quad = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                quad += w[a] * (m * xxt[a][b] - xy[a] * xy[b]) * w[b];
            }
        }
        let lin: f64 = xy.iter().zip(w).map(|(a, b)| a * b).sum();
        let hinge: f64 = xs
            .iter()
            .zip(&y)
            .map(|(x, yi)| (1.0 - yi * x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()).max(0.0))
            .sum();
        0.5 * w.iter().map(|v| v * v).sum::<f64>() + 2.0 * p.lambda1 / (m * m) * quad - p.lambda2 / m * lin
            + p.c * hinge
    }

    #[test]
    fn objective_at_zero_is_cm() {
        let d = random_dataset(17, 4, 1, 0.2);
        let p = params(0.3, 0.7, 2.5);
        assert_eq!(exact_objective(&[0.0; 4], &d, &p), 2.5 * 17.0);
    }

    #[test]
    fn objective_without_hinge_is_half_norm() {
        let d = separable_dataset(20, 3, 2);
        // scale a separating direction until every margin is at least 1
        let (model, _) = crate::kernel_ldm::solve(
            &d,
            &crate::kernel::KernelSpec::Linear,
            &crate::kernel_ldm::KernelLdmParams { lambda1: 0.0, lambda2: 0.0, c: 1e4, tolerance: 1e-8, ..Default::default() },
        )
        .unwrap();
        let w: Vec<f64> = model.explicit_weights().unwrap().iter().map(|v| v * 1.01).collect();
        assert!(d.instances().iter().zip(d.labels()).all(|(x, y)| y.sign() * x.dot_dense(&w) >= 1.0));
        let ww: f64 = w.iter().map(|v| v * v).sum();
        assert!((exact_objective(&w, &d, &params(0.0, 0.0, 3.0)) - 0.5 * ww).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_dense_matrices() {
        for seed in 0..10 {
            let d = random_dataset(15, 4, seed, 0.2);
            let w = random_w(4, seed + 100, 2.0);
            let p = params(0.1 * seed as f64, 0.05 * seed as f64, 1.5);
            let (a, b) = (exact_objective(&w, &d, &p), dense_objective(&w, &d, &p));
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn gradient_special_cases() {
        let d = separable_dataset(12, 3, 3);
        // huge w: every margin exceeds 1, hinge set empty
        let (model, _) = crate::kernel_ldm::solve(
            &d,
            &crate::kernel::KernelSpec::Linear,
            &crate::kernel_ldm::KernelLdmParams { lambda1: 0.0, lambda2: 0.0, c: 1e4, tolerance: 1e-8, ..Default::default() },
        )
        .unwrap();
        let w: Vec<f64> = model.explicit_weights().unwrap().iter().map(|v| v * 3.0).collect();
        assert_eq!(exact_gradient(&w, &d, &params(0.0, 0.0, 1.0)), w);

        let p = params(0.4, 0.6, 2.0);
        let zero = vec![0.0; 3];
        let g = exact_gradient(&zero, &d, &p);
        let mut want = vec![0.0; 3];
        for (x, y) in d.instances().iter().zip(d.labels()) {
            x.axpy_into(-(0.6 / 12.0) * y.sign() - 2.0 * y.sign(), &mut want);
        }
        for (a, b) in g.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stochastic_gradient_special_cases() {
        let d = separable_dataset(8, 2, 4);
        let p0 = params(0.0, 0.0, 1.0);
        let w: Vec<f64> = d.instances()[0].to_dense(2).iter().map(|v| 200.0 * d.labels()[0].sign() * v).collect();
        assert!(d.labels()[0].sign() * d.instances()[0].dot_dense(&w) >= 1.0);
        assert_eq!(stochastic_gradient(&w, 0, 3, &d, &p0), w);

        let p = params(0.5, 0.25, 2.0);
        let g = stochastic_gradient(&[0.0, 0.0], 2, 5, &d, &p);
        let y = d.labels()[2].sign();
        let mut want = vec![0.0; 2];
        d.instances()[2].axpy_into(-0.25 * y - 8.0 * 2.0 * y, &mut want);
        assert_eq!(g, want);
    }

    #[test]
    fn one_step_from_zero() {
        let d = separable_dataset(6, 3, 5);
        let p = params(0.0, 0.0, 1.5);
        let eta = 0.01;
        let mut model = LinearModel::zeros(3);
        model.sgd_step(&d, 0, 0, eta, 1.0, &p);
        let mut want = vec![0.0; 3];
        d.instances()[0].axpy_into(eta * 6.0 * 1.5 * d.labels()[0].sign(), &mut want);
        for (a, b) in model.w.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(model.w_bar, model.w);
    }

    #[test]
    fn averaging_recursion_is_the_mean_of_iterates() {
        let d = random_dataset(20, 3, 6, 0.1);
        let p = params(0.2, 0.1, 1.0);
        let t0 = 7usize;
        let mut model = LinearModel::zeros(3);
        let mut r = rng::seeded(1);
        let mut iterates = Vec::new();
        for t in 1..=60u64 {
            let (i, j) = (r.random_range(0..20), r.random_range(0..20));
            model.sgd_step(&d, i, j, step_size(0.05, t0, t), averaging_weight(t0, t), &p);
            iterates.push(model.w.clone());
        }
        let tail = &iterates[t0..];
        for k in 0..3 {
            let mean = tail.iter().map(|w| w[k]).sum::<f64>() / tail.len() as f64;
            assert!((model.w_bar[k] - mean).abs() <= 1e-10);
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let d = random_dataset(50, 4, 7, 0.1);
        let p = LinearLdmParams { seed: 3, ..Default::default() };
        let (a, ra) = train(&d, &p).unwrap();
        let (b, rb) = train(&d, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ra.objective_trace.len(), 5);
        assert_eq!(ra.iterations, 250);
        let (c, _) = train(&d, &LinearLdmParams { seed: 4, ..p }).unwrap();
        assert_ne!(a.w_bar, c.w_bar);
    }

    #[test]
    fn predict_hand_values() {
        let m = LinearModel::from_weights(vec![1.0, -1.0], None);
        let z = SparseVector::new(vec![(1, 1.0)]).unwrap();
        assert_eq!(predict_linear(&m, &z), (Label::Positive, 1.0));
        let zero = LinearModel::zeros(2);
        assert_eq!(zero.predict(&SparseVector::new(vec![(2, 5.0)]).unwrap()).0, Label::Positive);
        // features beyond the model's dimension are ignored
        assert_eq!(m.score(&SparseVector::new(vec![(1, 2.0), (7, 9.0)]).unwrap()), 2.0);
    }

    #[test]
    fn rejects_bad_params() {
        let d = random_dataset(10, 2, 8, 0.0);
        for p in [
            LinearLdmParams { lambda2: -0.5, ..Default::default() },
            LinearLdmParams { epochs: 0, ..Default::default() },
            LinearLdmParams { eta0: Some(0.0), ..Default::default() },
        ] {
            assert!(matches!(train(&d, &p), Err(LdmError::InvalidParameter(_))));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pair_average_equals_gradient(
            seed in any::<u64>(),
            m in 2usize..15,
            l1 in 0.0f64..2.0,
            l2 in 0.0f64..2.0,
            c in 0.01f64..10.0,
        ) {
            let d = random_dataset(m, 3, seed, 0.2);
            let w = random_w(3, seed ^ 1, 3.0);
            let p = params(l1, l2, c);
            let mut mean = vec![0.0; 3];
            for i in 0..m {
                for j in 0..m {
                    for (a, b) in mean.iter_mut().zip(stochastic_gradient(&w, i, j, &d, &p)) {
                        *a += b;
                    }
                }
            }
            let exact = exact_gradient(&w, &d, &p);
            for (a, b) in mean.iter().zip(&exact) {
                prop_assert!((a / (m * m) as f64 - b).abs() <= 1e-10);
            }
        }

        #[test]
        fn objective_is_convex(seed in any::<u64>(), l1 in 0.0f64..2.0, l2 in 0.0f64..2.0) {
            let d = random_dataset(12, 3, seed, 0.3);
            let p = params(l1, l2, 1.0);
            let u = random_w(3, seed ^ 2, 4.0);
            let v = random_w(3, seed ^ 3, 4.0);
            let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = exact_objective(&mid, &d, &p);
            let rhs = 0.5 * exact_objective(&u, &d, &p) + 0.5 * exact_objective(&v, &d, &p);
            prop_assert!(lhs <= rhs + 1e-10 * (1.0 + rhs.abs()));
        }
    }
}
