//! Scale, train and package a model in one call.

use crate::data::{fit_normalizer, LabeledDataset};
use crate::error::{LdmError, Result};
use crate::kernel::{rbf_width_base, KernelSpec, DEFAULT_WIDTH_CAP};
use crate::kernel_ldm::{self, KernelLdmParams};
use crate::linear_ldm::{self, LinearLdmParams, LinearModel};
use crate::model_file::{Hyperparameters, ModelFile, TrainedModel};
use crate::report::SolverReport;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Kernel,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    Linear,
    /// Width given directly.
    RbfWidth(f64),
    /// Width as a multiple of the mean pairwise distance of the (scaled)
    /// training data.
    RbfFactor(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub solver: SolverKind,
    pub kernel: KernelChoice,
    pub c: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Epoch limit (kernel) or epoch count (linear); solver default if `None`.
    pub epochs: Option<usize>,
    pub tolerance: f64,
    pub eta0: Option<f64>,
    pub seed: u64,
    /// Fit a [0, 1] scaling on the training data and store it in the model.
    pub normalize: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let k = KernelLdmParams::default();
        Self {
            solver: SolverKind::Kernel,
            kernel: KernelChoice::Linear,
            c: k.c,
            lambda1: k.lambda1,
            lambda2: k.lambda2,
            epochs: None,
            tolerance: k.tolerance,
            eta0: None,
            seed: 0,
            normalize: true,
        }
    }
}

pub fn train_model(raw: &LabeledDataset, opts: &TrainOptions) -> Result<(ModelFile, SolverReport)> {
    raw.require_both_classes()?;
    let map = opts.normalize.then(|| fit_normalizer(raw));
    let scaled;
    let d = match &map {
        Some(m) => {
            scaled = m.apply(raw);
            &scaled
        }
        None => raw,
    };
    let hyper = Hyperparameters { c: opts.c, lambda1: opts.lambda1, lambda2: opts.lambda2 };
    let (model, report) = match opts.solver {
        SolverKind::Kernel => {
            let spec = match opts.kernel {
                KernelChoice::Linear => KernelSpec::Linear,
                KernelChoice::RbfWidth(w) => KernelSpec::rbf(w)?,
                KernelChoice::RbfFactor(f) => {
                    if !(f > 0.0 && f.is_finite()) {
                        return Err(LdmError::InvalidParameter(format!(
                            "width factor must be positive, got {f}"
                        )));
                    }
                    let base = rbf_width_base(d, DEFAULT_WIDTH_CAP, rng::derive_seed(opts.seed, 2))?;
                    KernelSpec::rbf(f * base)?
                }
            };
            let params = KernelLdmParams {
                lambda1: opts.lambda1,
                lambda2: opts.lambda2,
                c: opts.c,
                tolerance: opts.tolerance,
                max_epochs: opts.epochs.unwrap_or(KernelLdmParams::default().max_epochs),
                seed: opts.seed,
                ..Default::default()
            };
            params.validate()?;
            let (m, report) = kernel_ldm::solve(d, &spec, &params)?;
            let m = match map {
                Some(map) => m.with_normalizer(map),
                None => m,
            };
            (TrainedModel::Kernel(m), report)
        }
        SolverKind::Linear => {
            if opts.kernel != KernelChoice::Linear {
                return Err(LdmError::InvalidParameter(
                    "the linear solver only supports the linear kernel".into(),
                ));
            }
            let params = LinearLdmParams {
                lambda1: opts.lambda1,
                lambda2: opts.lambda2,
                c: opts.c,
                epochs: opts.epochs.unwrap_or(LinearLdmParams::default().epochs),
                eta0: opts.eta0,
                seed: opts.seed,
                ..Default::default()
            };
            params.validate()?;
            let (m, report) = linear_ldm::train(d, &params)?;
            (TrainedModel::Linear(LinearModel::from_weights(m.w_bar, map)), report)
        }
    };
    Ok((ModelFile { hyper, model }, report))
}
