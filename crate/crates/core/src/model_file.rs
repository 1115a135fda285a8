//! Line-oriented text format for trained models.
//!
//! ```text
//! #LDM v1
//! solver kernel
//! kernel rbf <width>
//! c <c>
//! lambda1 <lambda1>
//! lambda2 <lambda2>
//! normalization <n>
//! <min> <max>            (n lines)
//! alpha <m>
//! <alpha> <idx:value>... (m lines)
//! ```
//!
//! Linear models use `solver linear`, `kernel linear` and end with
//! `weights <dim>` followed by `idx:value` lines for the nonzero entries of
//! `w_bar`. Reals are written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{format_real, Label, NormalizationMap, SparseVector};
use crate::error::{LdmError, Result};
use crate::kernel::KernelSpec;
use crate::kernel_ldm::KernelLdmModel;
use crate::linear_ldm::LinearModel;

pub const MAGIC: &str = "#LDM v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    pub c: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Kernel(KernelLdmModel),
    Linear(LinearModel),
}

impl TrainedModel {
    pub fn score(&self, z: &SparseVector) -> f64 {
        match self {
            TrainedModel::Kernel(m) => m.score(z),
            TrainedModel::Linear(m) => m.score(z),
        }
    }

    pub fn predict(&self, z: &SparseVector) -> (Label, f64) {
        let s = self.score(z);
        (Label::from_score(s), s)
    }

    pub fn normalizer(&self) -> Option<&NormalizationMap> {
        match self {
            TrainedModel::Kernel(m) => m.normalizer(),
            TrainedModel::Linear(m) => m.normalizer(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub hyper: Hyperparameters,
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let (solver, kernel) = match &self.model {
            TrainedModel::Kernel(m) => ("kernel", *m.kernel()),
            TrainedModel::Linear(_) => ("linear", KernelSpec::Linear),
        };
        let _ = writeln!(out, "solver {solver}");
        match kernel {
            KernelSpec::Linear => out.push_str("kernel linear\n"),
            KernelSpec::Rbf { width } => {
                let _ = writeln!(out, "kernel rbf {}", format_real(width));
            }
        }
        let _ = writeln!(out, "c {}", format_real(self.hyper.c));
        let _ = writeln!(out, "lambda1 {}", format_real(self.hyper.lambda1));
        let _ = writeln!(out, "lambda2 {}", format_real(self.hyper.lambda2));
        match self.model.normalizer() {
            None => out.push_str("normalization none\n"),
            Some(map) => {
                let _ = writeln!(out, "normalization {}", map.dimension());
                for &(lo, hi) in map.ranges() {
                    let _ = writeln!(out, "{} {}", format_real(lo), format_real(hi));
                }
            }
        }
        match &self.model {
            TrainedModel::Kernel(m) => {
                let _ = writeln!(out, "alpha {}", m.alpha().len());
                for (a, x) in m.alpha().iter().zip(m.support()) {
                    out.push_str(&format_real(*a));
                    for &(i, v) in x.entries() {
                        let _ = write!(out, " {i}:{}", format_real(v));
                    }
                    out.push('\n');
                }
            }
            TrainedModel::Linear(m) => {
                let _ = writeln!(out, "weights {}", m.w_bar.len());
                for (k, &v) in m.w_bar.iter().enumerate() {
                    if v != 0.0 {
                        let _ = writeln!(out, "{}:{}", k + 1, format_real(v));
                    }
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        Reader::new(text).model_file()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().enumerate(), line: 0 }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(LdmError::ModelFormat { line: self.line, message: message.into() })
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((n, l)) => {
                self.line = n + 1;
                Ok(l.trim())
            }
            None => {
                self.line += 1;
                self.err("unexpected end of file")
            }
        }
    }

    fn real(&self, s: &str) -> Result<f64> {
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => self.err(format!("expected a finite number, got {s:?}")),
        }
    }

    fn count(&self, s: &str) -> Result<usize> {
        s.parse().or_else(|_| self.err(format!("expected a count, got {s:?}")))
    }

    /// `key value...` with the given key.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return self.err(format!("expected `{key}`"));
        }
        Ok(parts.collect())
    }

    fn keyed_real(&mut self, key: &str) -> Result<f64> {
        match self.keyed(key)?.as_slice() {
            [v] => self.real(v),
            _ => self.err(format!("`{key}` takes one value")),
        }
    }

    fn keyed_count(&mut self, key: &str) -> Result<usize> {
        match self.keyed(key)?.as_slice() {
            [v] => self.count(v),
            _ => self.err(format!("`{key}` takes one value")),
        }
    }

    fn feature(&self, tok: &str) -> Result<(usize, f64)> {
        let Some((i, v)) = tok.split_once(':') else {
            return self.err(format!("expected index:value, got {tok:?}"));
        };
        Ok((self.count(i)?, self.real(v)?))
    }

    fn model_file(mut self) -> Result<ModelFile> {
        if self.next()? != MAGIC {
            return self.err(format!("missing `{MAGIC}` header"));
        }
        let solver = match self.keyed("solver")?.as_slice() {
            ["kernel"] => "kernel",
            ["linear"] => "linear",
            _ => return self.err("solver must be `kernel` or `linear`"),
        };
        let kernel = match self.keyed("kernel")?.as_slice() {
            ["linear"] => KernelSpec::Linear,
            ["rbf", w] => {
                let width = self.real(w)?;
                KernelSpec::rbf(width).or_else(|e| self.err(e.to_string()))?
            }
            _ => return self.err("kernel must be `linear` or `rbf <width>`"),
        };
        let hyper = Hyperparameters {
            c: self.keyed_real("c")?,
            lambda1: self.keyed_real("lambda1")?,
            lambda2: self.keyed_real("lambda2")?,
        };
        let normalizer = match self.keyed("normalization")?.as_slice() {
            ["none"] => None,
            [n] => {
                let n = self.count(n)?;
                let mut ranges = Vec::with_capacity(n);
                for _ in 0..n {
                    let l = self.next()?;
                    match l.split_whitespace().collect::<Vec<_>>().as_slice() {
                        [lo, hi] => ranges.push((self.real(lo)?, self.real(hi)?)),
                        _ => return self.err("expected `min max`"),
                    }
                }
                Some(NormalizationMap::from_ranges(ranges).or_else(|e| self.err(e.to_string()))?)
            }
            _ => return self.err("bad normalization header"),
        };
        let model = if solver == "kernel" {
            let m = self.keyed_count("alpha")?;
            let mut alpha = Vec::with_capacity(m);
            let mut support = Vec::with_capacity(m);
            for _ in 0..m {
                let l = self.next()?;
                let mut toks = l.split_whitespace();
                let Some(a) = toks.next() else {
                    return self.err("empty alpha line");
                };
                alpha.push(self.real(a)?);
                let entries = toks.map(|t| self.feature(t)).collect::<Result<Vec<_>>>()?;
                support.push(SparseVector::new(entries).or_else(|e| self.err(e.to_string()))?);
            }
            TrainedModel::Kernel(KernelLdmModel::new(alpha, support, kernel, normalizer)?)
        } else {
            if kernel != KernelSpec::Linear {
                return self.err("linear solver requires the linear kernel");
            }
            let dim = self.keyed_count("weights")?;
            let mut w = vec![0.0; dim];
            let mut last = 0;
            while let Some((n, l)) = self.lines.next() {
                self.line = n + 1;
                let l = l.trim();
                if l.is_empty() {
                    continue;
                }
                let (i, v) = self.feature(l)?;
                if i <= last || i > dim {
                    return self.err(format!("weight index {i} out of order or range"));
                }
                last = i;
                w[i - 1] = v;
            }
            TrainedModel::Linear(LinearModel::from_weights(w, normalizer))
        };
        for (n, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                return Err(LdmError::ModelFormat { line: n + 1, message: "trailing content".into() });
            }
        }
        Ok(ModelFile { hyper, model })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_normalizer, parse_sparse};
    use crate::kernel_ldm::{self, KernelLdmParams};
    use crate::linear_ldm::{self as lin, LinearLdmParams};
    use crate::synthetic::random_dataset;

    fn hyper() -> Hyperparameters {
        Hyperparameters { c: 10.0, lambda1: 0.1, lambda2: 1.0 / 3.0 }
    }

    fn kernel_file() -> (ModelFile, crate::data::LabeledDataset) {
        let raw = random_dataset(25, 4, 3, 0.1);
        let map = fit_normalizer(&raw);
        let d = map.apply(&raw);
        let (m, _) = kernel_ldm::solve(&d, &KernelSpec::Rbf { width: 0.7 }, &KernelLdmParams::default()).unwrap();
        let file = ModelFile { hyper: hyper(), model: TrainedModel::Kernel(m.with_normalizer(map)) };
        (file, raw)
    }

    #[test]
    fn kernel_round_trip_is_exact() {
        let (file, raw) = kernel_file();
        let text = file.to_text();
        assert!(text.starts_with("#LDM v1\nsolver kernel\nkernel rbf "));
        let back = ModelFile::parse(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_text(), text);
        for x in raw.instances() {
            assert_eq!(back.model.score(x).to_bits(), file.model.score(x).to_bits());
        }
    }

    #[test]
    fn linear_round_trip_is_exact() {
        let raw = random_dataset(30, 5, 4, 0.1);
        let map = fit_normalizer(&raw);
        let (m, _) = lin::train(&map.apply(&raw), &LinearLdmParams::default()).unwrap();
        let file = ModelFile { hyper: hyper(), model: TrainedModel::Linear(LinearModel::from_weights(m.w_bar.clone(), Some(map))) };
        let text = file.to_text();
        let back = ModelFile::parse(&text).unwrap();
        assert_eq!(back, file);
        for x in raw.instances() {
            assert_eq!(back.model.score(x).to_bits(), file.model.score(x).to_bits());
        }
    }

    #[test]
    fn zero_weights_and_no_normalizer() {
        let file = ModelFile {
            hyper: hyper(),
            model: TrainedModel::Linear(LinearModel::from_weights(vec![0.0; 3], None)),
        };
        let text = file.to_text();
        assert!(text.ends_with("normalization none\nweights 3\n"));
        assert_eq!(ModelFile::parse(&text).unwrap(), file);
    }

    #[test]
    fn file_round_trip() {
        let (file, _) = kernel_file();
        let dir = std::env::temp_dir().join(format!("ldm-model-{}", std::process::id()));
        file.save(&dir).unwrap();
        assert_eq!(ModelFile::load(&dir).unwrap(), file);
        std::fs::remove_file(&dir).unwrap();
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (file, _) = kernel_file();
        let text = file.to_text();
        let cases = [
            String::new(),
            text.replacen("#LDM v1", "#LDM v2", 1),
            text.replacen("solver kernel", "solver svm", 1),
            text.replacen("kernel rbf", "kernel poly", 1),
            text.replacen("lambda1", "lambda3", 1),
            text.lines().take(12).collect::<Vec<_>>().join("\n"),
            format!("{text}junk\n"),
            text.replacen("alpha 25", "alpha 26", 1),
        ];
        for bad in &cases {
            assert!(matches!(ModelFile::parse(bad), Err(LdmError::ModelFormat { .. })), "{bad:.60}");
        }
        let lin = "#LDM v1\nsolver linear\nkernel linear\nc 1\nlambda1 0\nlambda2 0\nnormalization none\nweights 2\n2:1\n1:1\n";
        assert!(matches!(ModelFile::parse(lin), Err(LdmError::ModelFormat { line: 10, .. })));
        assert!(ModelFile::parse(&lin.replace("2:1\n1:1\n", "1:1\n2:x\n")).is_err());
        assert!(ModelFile::parse(&lin.replace("2:1\n1:1\n", "3:1\n")).is_err());
    }

    #[test]
    fn unseen_features_contribute_nothing() {
        let file = ModelFile::parse(
            "#LDM v1\nsolver linear\nkernel linear\nc 1\nlambda1 0\nlambda2 0\nnormalization none\nweights 2\n1:2\n2:-1\n",
        )
        .unwrap();
        let d = parse_sparse("+1 1:1 2:1 7:100\n").unwrap();
        assert_eq!(file.model.score(&d.instances()[0]), 1.0);
    }
}
