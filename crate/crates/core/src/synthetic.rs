//! Seeded synthetic datasets for tests, benchmarks and demos.

use rand::RngExt;

use crate::data::{Label, LabeledDataset, SparseVector};
use crate::rng;

fn direction(d: usize, r: &mut rng::LdmRng) -> Vec<f64> {
    let w: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    let n = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    w.into_iter().map(|v| v / n).collect()
}

fn build(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> LabeledDataset {
    LabeledDataset::new(
        rows.iter()
            .map(|r| SparseVector::from_dense(r).expect("finite"))
            .collect(),
        labels,
    )
    .expect("non-empty")
}

/// Points uniform in `[-1, 1]^d` labelled by a random hyperplane through the
/// origin, keeping only points at least 0.1 away from it. Both classes are
/// always present for `m >= 2`.
pub fn separable_dataset(m: usize, d: usize, seed: u64) -> LabeledDataset {
    let mut r = rng::seeded(seed);
    let w = direction(d, &mut r);
    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    while rows.len() < m {
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        if s.abs() < 0.1 {
            continue;
        }
        // alternate classes so both are present
        let want = if rows.len() % 2 == 0 { s > 0.0 } else { s < 0.0 };
        let x = if want { x } else { x.iter().map(|v| -v).collect() };
        let s = if want { s } else { -s };
        labels.push(Label::from_score(s));
        rows.push(x);
    }
    build(rows, labels)
}

/// Like [`separable_dataset`] without the margin filter, then each label is
/// flipped with probability `flip`.
pub fn random_dataset(m: usize, d: usize, seed: u64, flip: f64) -> LabeledDataset {
    let mut r = rng::seeded(seed);
    let w = direction(d, &mut r);
    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let mut x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        if (i % 2 == 0) != (s >= 0.0) {
            x.iter_mut().for_each(|v| *v = -*v);
            s = -s;
        }
        let mut label = Label::from_score(s);
        if i >= 2 && r.random_bool(flip) {
            label = label.flipped();
        }
        labels.push(label);
        rows.push(x);
    }
    build(rows, labels)
}

/// Two Gaussian-ish blobs centred at `+-separation` along every axis, shifted
/// by `offset` so all coordinates are typically positive when `offset` is
/// large enough.
pub fn two_clusters(m: usize, d: usize, separation: f64, offset: f64, seed: u64) -> LabeledDataset {
    let mut r = rng::seeded(seed);
    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
        let centre = offset + label.sign() * separation;
        // sum of uniforms: cheap, bounded, bell-shaped
        rows.push(
            (0..d)
                .map(|_| centre + (0..3).map(|_| r.random_range(-0.5..0.5)).sum::<f64>())
                .collect(),
        );
        labels.push(label);
    }
    build(rows, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded_and_balanced() {
        assert_eq!(separable_dataset(20, 3, 1), separable_dataset(20, 3, 1));
        assert_eq!(random_dataset(20, 3, 1, 0.2), random_dataset(20, 3, 1, 0.2));
        for d in [separable_dataset(20, 3, 2), random_dataset(20, 3, 2, 0.5), two_clusters(20, 2, 1.0, 0.0, 2)] {
            assert_eq!(d.len(), 20);
            assert!(d.has_both_classes());
        }
    }
}
