//! Kernel evaluation, Gram matrices and the RBF width heuristic.

use nalgebra::DMatrix;

use crate::data::{LabeledDataset, SparseVector};
use crate::error::{LdmError, Result};
use crate::rng;

/// Default subsample size for [`rbf_width_base`].
pub const DEFAULT_WIDTH_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    /// `exp(-|a - b|^2 / (2 width^2))`
    Rbf { width: f64 },
}

impl KernelSpec {
    pub fn rbf(width: f64) -> Result<Self> {
        let spec = KernelSpec::Rbf { width };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { width } if !(width > 0.0 && width.is_finite()) => Err(
                LdmError::InvalidParameter(format!("rbf width must be positive, got {width}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, a: &SparseVector, b: &SparseVector) -> f64 {
        match *self {
            KernelSpec::Linear => a.dot(b),
            KernelSpec::Rbf { width } => {
                (-a.squared_distance(b) / (2.0 * width * width)).exp()
            }
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, a: &SparseVector, b: &SparseVector) -> f64 {
    spec.eval(a, b)
}

/// Dense symmetric kernel matrix over a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    /// Wrap an existing matrix; it must be square and exactly symmetric.
    pub fn from_matrix(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() {
            return Err(LdmError::InvalidParameter("Gram matrix must be square".into()));
        }
        let m = g.nrows();
        for i in 0..m {
            for j in 0..i {
                if g[(i, j)] != g[(j, i)] {
                    return Err(LdmError::InvalidParameter(
                        "Gram matrix must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(Self(g))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    /// Delete row and column `k`.
    pub fn without(&self, k: usize) -> GramMatrix {
        GramMatrix(self.0.clone().remove_row(k).remove_column(k))
    }

    /// Principal submatrix on `indices`.
    pub fn select(&self, indices: &[usize]) -> GramMatrix {
        let n = indices.len();
        GramMatrix(DMatrix::from_fn(n, n, |i, j| self.0[(indices[i], indices[j])]))
    }
}

pub fn gram_matrix(spec: &KernelSpec, d: &LabeledDataset) -> GramMatrix {
    let xs = d.instances();
    let m = xs.len();
    let mut g = DMatrix::zeros(m, m);
    for j in 0..m {
        for i in 0..=j {
            let v = spec.eval(&xs[i], &xs[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    GramMatrix(g)
}

/// Mean pairwise Euclidean distance `delta`, the base of the RBF width grid.
/// Above `cap` instances the mean is taken over a seeded subsample of `cap`.
pub fn rbf_width_base(d: &LabeledDataset, cap: usize, seed: u64) -> Result<f64> {
    let m = d.len();
    if m < 2 {
        return Err(LdmError::DegenerateData(
            "need at least two instances to estimate a kernel width".into(),
        ));
    }
    let idx: Vec<usize> = if m > cap.max(2) {
        let mut p = rng::permutation(m, &mut rng::seeded(seed));
        p.truncate(cap.max(2));
        p.sort_unstable();
        p
    } else {
        (0..m).collect()
    };
    let xs = d.instances();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            total += xs[i].squared_distance(&xs[j]).sqrt();
            pairs += 1;
        }
    }
    let delta = total / pairs as f64;
    if delta > 0.0 {
        Ok(delta)
    } else {
        Err(LdmError::DegenerateData(
            "all instances are identical; the width grid would be degenerate".into(),
        ))
    }
}
