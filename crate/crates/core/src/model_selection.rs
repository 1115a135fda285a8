//! Grid search by k-fold cross-validation.

use std::cmp::Ordering;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::analysis::accuracy;
use crate::data::{fit_normalizer, format_real, make_folds, FoldPlan, Label, LabeledDataset};
use crate::error::{LdmError, Result};
use crate::kernel::{gram_matrix, rbf_width_base, KernelSpec, DEFAULT_WIDTH_CAP};
use crate::kernel_ldm::{DualProblem, KernelLdmParams};
use crate::linear_ldm::{self, LinearLdmParams};
use crate::rng;

pub const DEFAULT_FOLDS: usize = 5;

/// Which model the search trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    /// Kernel solver with the linear kernel.
    KernelLinear,
    /// Kernel solver with an RBF kernel; widths are multiples of the per-fold
    /// mean pairwise distance.
    KernelRbf,
    /// Averaged SGD on the primal.
    Linear,
}

impl ModelFamily {
    pub fn uses_width(self) -> bool {
        self == ModelFamily::KernelRbf
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub c_values: Vec<f64>,
    /// Used for both `lambda1` and `lambda2`, as a cross product.
    pub lambda_values: Vec<f64>,
    pub width_multipliers: Vec<f64>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            c_values: vec![10.0, 50.0, 100.0],
            lambda_values: (-8..=-2).map(|e| 2f64.powi(e)).collect(),
            width_multipliers: (-2..=2).map(|e| 2f64.powi(e)).collect(),
        }
    }
}

impl SearchGrid {
    pub fn singleton(c: f64, lambda: f64, width: f64) -> Self {
        Self {
            c_values: vec![c],
            lambda_values: vec![lambda],
            width_multipliers: vec![width],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in [
            ("C", &self.c_values),
            ("lambda", &self.lambda_values),
            ("width", &self.width_multipliers),
        ] {
            if values.is_empty() {
                return Err(LdmError::InvalidParameter(format!("{name} grid is empty")));
            }
            if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(LdmError::InvalidParameter(format!(
                    "{name} grid values must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Every configuration, ordered by C, then lambda1, lambda2, width. The
    /// width is 0 for families without one.
    pub fn configurations(&self, family: ModelFamily) -> Vec<Config> {
        let widths: &[f64] = if family.uses_width() { &self.width_multipliers } else { &[0.0] };
        let mut out = Vec::new();
        for &c in &self.c_values {
            for &lambda1 in &self.lambda_values {
                for &lambda2 in &self.lambda_values {
                    for &width in widths {
                        out.push(Config { c, lambda1, lambda2, width });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    pub c: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Multiplier of the per-fold width base; 0 when unused.
    pub width: f64,
}

impl Config {
    /// Tie-break order: smaller C, lambda1, lambda2, width first.
    pub fn tie_order(&self, other: &Config) -> Ordering {
        self.c
            .total_cmp(&other.c)
            .then(self.lambda1.total_cmp(&other.lambda1))
            .then(self.lambda2.total_cmp(&other.lambda2))
            .then(self.width.total_cmp(&other.width))
    }

    /// `BEST c=... lambda1=... lambda2=... width=...`
    pub fn best_line(&self) -> String {
        format!(
            "BEST c={} lambda1={} lambda2={} width={}",
            format_real(self.c),
            format_real(self.lambda1),
            format_real(self.lambda2),
            format_real(self.width)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldRecord {
    pub config: usize,
    pub fold: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: Config,
    pub best_index: usize,
    pub configs: Vec<Config>,
    /// Mean held-out accuracy per configuration.
    pub mean_accuracy: Vec<f64>,
    pub folds: Vec<FoldRecord>,
    /// Width base of each fold's training portion (RBF only).
    pub width_bases: Vec<Option<f64>>,
    pub plan: FoldPlan,
    /// Configurations that tied for the best mean, in tie-break order.
    pub tie_break: Vec<usize>,
}

impl SearchResult {
    pub fn best_accuracy(&self) -> f64 {
        self.mean_accuracy[self.best_index]
    }

    /// `c,lambda1,lambda2,width,fold,accuracy`, one row per configuration and
    /// fold.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("c,lambda1,lambda2,width,fold,accuracy\n");
        for r in &self.folds {
            let c = &self.configs[r.config];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                format_real(c.c),
                format_real(c.lambda1),
                format_real(c.lambda2),
                format_real(c.width),
                r.fold,
                format_real(r.accuracy)
            );
        }
        out
    }
}

/// What a fold's preprocessing was fitted on, reported to an observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStage {
    Normalizer,
    WidthBase,
}

#[derive(Debug, Clone, Copy)]
pub struct FitEvent<'a> {
    pub fold: usize,
    pub stage: FitStage,
    /// Indices into the full dataset.
    pub instances: &'a [usize],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub k: usize,
    pub seed: u64,
    /// Template for the kernel solver; the grid overrides `c`, `lambda1`,
    /// `lambda2`.
    pub kernel: KernelLdmParams,
    /// Template for the linear solver.
    pub linear: LinearLdmParams,
    pub width_cap: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            k: DEFAULT_FOLDS,
            seed: 0,
            kernel: KernelLdmParams {
                record_objective: false,
                ..Default::default()
            },
            linear: LinearLdmParams::default(),
            width_cap: DEFAULT_WIDTH_CAP,
        }
    }
}

pub fn cross_validate(
    d: &LabeledDataset,
    family: ModelFamily,
    grid: &SearchGrid,
    k: usize,
    seed: u64,
) -> Result<SearchResult> {
    let settings = CvSettings { k, seed, ..Default::default() };
    cross_validate_with(d, family, grid, &settings, &mut |_| {})
}

/// Fold plan whose training portions all contain both classes. One re-seed is
/// attempted before giving up.
pub fn usable_folds(d: &LabeledDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    for attempt in 0..2 {
        let s = if attempt == 0 { seed } else { rng::derive_seed(seed, 1) };
        let plan = make_folds(d.len(), k, s)?;
        let ok = (0..k).all(|f| {
            let (train, _) = plan.split(f);
            let pos = train.iter().filter(|&&i| d.labels()[i] == Label::Positive).count();
            pos > 0 && pos < train.len()
        });
        if ok {
            return Ok(plan);
        }
    }
    Err(LdmError::DegenerateData(format!(
        "a training fold of {k}-fold cross-validation has a single class"
    )))
}

pub fn cross_validate_with(
    d: &LabeledDataset,
    family: ModelFamily,
    grid: &SearchGrid,
    settings: &CvSettings,
    observer: &mut dyn FnMut(&FitEvent),
) -> Result<SearchResult> {
    grid.validate()?;
    settings.kernel.validate()?;
    d.require_both_classes()?;
    let plan = usable_folds(d, settings.k, settings.seed)?;
    let configs = grid.configurations(family);
    let mut sums = vec![0.0; configs.len()];
    let mut folds = Vec::with_capacity(configs.len() * settings.k);
    let mut width_bases = Vec::with_capacity(settings.k);

    for fold in 0..settings.k {
        let (train_idx, test_idx) = plan.split(fold);
        observer(&FitEvent { fold, stage: FitStage::Normalizer, instances: &train_idx });
        let raw_train = d.subset(&train_idx)?;
        let map = fit_normalizer(&raw_train);
        let train = map.apply(&raw_train);
        let test = map.apply(&d.subset(&test_idx)?);

        let base = if family.uses_width() {
            observer(&FitEvent { fold, stage: FitStage::WidthBase, instances: &train_idx });
            Some(rbf_width_base(&train, settings.width_cap, rng::derive_seed(settings.seed, 2))?)
        } else {
            None
        };
        width_bases.push(base);

        let acc = fold_accuracies(&train, &test, family, grid, &configs, base, settings)?;
        for (i, a) in acc.into_iter().enumerate() {
            sums[i] += a;
            folds.push(FoldRecord { config: i, fold, accuracy: a });
        }
    }
    folds.sort_by_key(|r| (r.config, r.fold));

    let mean_accuracy: Vec<f64> = sums.iter().map(|s| s / settings.k as f64).collect();
    let top = mean_accuracy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut tie_break: Vec<usize> = (0..configs.len()).filter(|&i| mean_accuracy[i] == top).collect();
    tie_break.sort_by(|&a, &b| configs[a].tie_order(&configs[b]).then(a.cmp(&b)));
    let best_index = tie_break[0];
    Ok(SearchResult {
        best: configs[best_index],
        best_index,
        configs,
        mean_accuracy,
        folds,
        width_bases,
        plan,
        tie_break,
    })
}

/// Held-out accuracy of every configuration on one fold.
fn fold_accuracies(
    train: &LabeledDataset,
    test: &LabeledDataset,
    family: ModelFamily,
    grid: &SearchGrid,
    configs: &[Config],
    base: Option<f64>,
    settings: &CvSettings,
) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; configs.len()];
    let truth = test.labels();
    match family {
        ModelFamily::Linear => {
            for (i, cfg) in configs.iter().enumerate() {
                let params = LinearLdmParams {
                    lambda1: cfg.lambda1,
                    lambda2: cfg.lambda2,
                    c: cfg.c,
                    ..settings.linear.clone()
                };
                let (model, _) = linear_ldm::train(train, &params)?;
                let pred: Vec<Label> = test.instances().iter().map(|x| model.predict(x).0).collect();
                out[i] = accuracy(&pred, truth)?;
            }
        }
        ModelFamily::KernelLinear | ModelFamily::KernelRbf => {
            let widths: Vec<f64> = if family.uses_width() { grid.width_multipliers.clone() } else { vec![0.0] };
            let y = train.signs();
            for &mult in &widths {
                let spec = match base {
                    Some(b) => KernelSpec::rbf(mult * b)?,
                    None => KernelSpec::Linear,
                };
                let gram = gram_matrix(&spec, train);
                let cross = cross_gram(&spec, test, train);
                for &lambda1 in &grid.lambda_values {
                    let problem = DualProblem::new(&gram, &y, lambda1, settings.kernel.ridge_scale)?;
                    for (i, cfg) in configs.iter().enumerate() {
                        if cfg.lambda1 != lambda1 || cfg.width != mult || !out[i].is_nan() {
                            continue;
                        }
                        let params = KernelLdmParams {
                            lambda1,
                            lambda2: cfg.lambda2,
                            c: cfg.c,
                            record_objective: false,
                            ..settings.kernel.clone()
                        };
                        let (state, _) = problem.solve(&params)?;
                        out[i] = cross_accuracy(&cross, &state.alpha, truth)?;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `K[t, j] = k(test_t, train_j)`
fn cross_gram(spec: &KernelSpec, test: &LabeledDataset, train: &LabeledDataset) -> DMatrix<f64> {
    DMatrix::from_fn(test.len(), train.len(), |t, j| {
        spec.eval(&test.instances()[t], &train.instances()[j])
    })
}

fn cross_accuracy(cross: &DMatrix<f64>, alpha: &DVector<f64>, truth: &[Label]) -> Result<f64> {
    let scores = cross * alpha;
    let pred: Vec<Label> = scores.iter().map(|&s| Label::from_score(s)).collect();
    accuracy(&pred, truth)
}

/// Mean held-out accuracy of one configuration under an existing fold plan,
/// computed without the grid machinery.
pub fn replay(
    d: &LabeledDataset,
    family: ModelFamily,
    config: &Config,
    plan: &FoldPlan,
    settings: &CvSettings,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(plan.k());
    for fold in 0..plan.k() {
        let (train_idx, test_idx) = plan.split(fold);
        let raw_train = d.subset(&train_idx)?;
        let map = fit_normalizer(&raw_train);
        let train = map.apply(&raw_train);
        let test = map.apply(&d.subset(&test_idx)?);
        let pred: Vec<Label> = match family {
            ModelFamily::Linear => {
                let params = LinearLdmParams {
                    lambda1: config.lambda1,
                    lambda2: config.lambda2,
                    c: config.c,
                    ..settings.linear.clone()
                };
                let (model, _) = linear_ldm::train(&train, &params)?;
                test.instances().iter().map(|x| model.predict(x).0).collect()
            }
            _ => {
                let spec = if family.uses_width() {
                    let b = rbf_width_base(&train, settings.width_cap, rng::derive_seed(settings.seed, 2))?;
                    KernelSpec::rbf(config.width * b)?
                } else {
                    KernelSpec::Linear
                };
                let params = KernelLdmParams {
                    lambda1: config.lambda1,
                    lambda2: config.lambda2,
                    c: config.c,
                    record_objective: false,
                    ..settings.kernel.clone()
                };
                let (model, _) = crate::kernel_ldm::solve(&train, &spec, &params)?;
                test.instances().iter().map(|x| model.predict(x).0).collect()
            }
        };
        out.push(accuracy(&pred, test.labels())?);
    }
    Ok(out)
}
