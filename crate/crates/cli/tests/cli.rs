use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ldm::analysis::compute_margins;
use ldm::data::{format_real, LabeledDataset};
use ldm::model_file::ModelFile;
use ldm::synthetic::{random_dataset, separable_dataset};

fn ldm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldm")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ldm(args);
    assert!(out.status.success(), "ldm {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    ldm(args).status.code().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        s(&p)
    }

    fn dataset(&self, name: &str, d: &LabeledDataset) -> String {
        let p = self.path(name);
        d.write_file(&p).unwrap();
        s(&p)
    }
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn separable_training_set_is_fit_exactly() {
    let ws = Workspace::new();
    let data = ws.dataset("train.txt", &separable_dataset(60, 3, 1));
    let model = s(&ws.path("m.model"));
    for solver in ["kernel", "linear"] {
        let summary = ok(&[
            "train", &data, "--solver", solver, "--lambda1", "0", "--lambda2", "0", "--c", "100", "--epochs", "200",
            "--model-out", &model,
        ]);
        assert!(summary.contains("iterations="));
        let pred = ws.path("pred.txt");
        ok(&["predict", &data, "--model", &model, "--output", &s(&pred)]);
        let acc = ok(&["eval", &data, "--predictions", &s(&pred)]);
        assert_eq!(acc, "accuracy=1.000000\n", "{solver}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let ws = Workspace::new();
    let data = ws.dataset("d.txt", &random_dataset(10, 2, 2, 0.0));
    let model = s(&ws.path("m"));
    assert_eq!(code(&["train", &data, "--lambda1", "-1", "--model-out", &model]), 1);
    assert_eq!(code(&["train", &data, "--c", "0", "--model-out", &model]), 1);
    assert_eq!(code(&["train", &data, "--solver", "linear", "--kernel", "rbf", "--model-out", &model]), 1);
    assert_eq!(code(&["train", &data]), 1);
    assert_eq!(code(&["bogus"]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert!(!Path::new(&model).exists());
}

#[test]
fn data_errors_exit_with_two() {
    let ws = Workspace::new();
    let bad = ws.write("bad.txt", "+1 1:0.5\n-1 x:1\n");
    let model = s(&ws.path("m"));
    let out = ldm(&["train", &bad, "--model-out", &model]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let one_class = ws.write("one.txt", "+1 1:1\n+1 1:2\n");
    assert_eq!(code(&["train", &one_class, "--model-out", &model]), 2);
    assert_eq!(code(&["train", &s(&ws.path("missing.txt")), "--model-out", &model]), 2);
    let corrupt = ws.write("corrupt.model", "#LDM v1\nsolver kernel\n");
    let data = ws.write("ok.txt", "+1 1:1\n");
    assert_eq!(code(&["predict", &data, "--model", &corrupt]), 2);
    let preds = ws.write("p.txt", "+1\n-1\n");
    assert_eq!(code(&["eval", &data, "--predictions", &preds]), 2);
}

#[test]
fn solver_errors_exit_with_three() {
    let ws = Workspace::new();
    // featureless instances give a zero Gram matrix, which no ridge can fix
    let data = ws.write("d.txt", "+1\n-1\n+1\n");
    let out = ldm(&["train", &data, "--model-out", &s(&ws.path("m"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("positive definite"));
}

#[test]
fn single_class_folds_exit_with_two() {
    let ws = Workspace::new();
    let data = ws.write("d.txt", "+1 1:1\n-1 1:2\n+1 1:3\n");
    assert_eq!(code(&["cv", &data, "--folds", "2"]), 2);
}

#[test]
fn predict_shapes_and_round_trip() {
    let ws = Workspace::new();
    let train = random_dataset(40, 4, 3, 0.1);
    let data = ws.dataset("train.txt", &train);
    let single = ws.write("one.txt", "-1 2:0.3 9:4\n");
    for kernel in ["linear", "rbf"] {
        let model = s(&ws.path(&format!("{kernel}.model")));
        ok(&["train", &data, "--kernel", kernel, "--model-out", &model]);
        assert_eq!(ok(&["predict", &single, "--model", &model]).lines().count(), 1);

        let loaded = ModelFile::load(&model).unwrap();
        let out = ok(&["predict", &data, "--model", &model, "--scores"]);
        for (line, x) in out.lines().zip(train.instances()) {
            let (label, score) = loaded.model.predict(x);
            assert_eq!(line, format!("{label}\t{}", format_real(score)));
        }
        assert_eq!(out.lines().count(), 40);
    }
}

#[test]
fn margins_match_library_values() {
    let ws = Workspace::new();
    let train = random_dataset(30, 3, 4, 0.2);
    let data = ws.dataset("train.txt", &train);
    let model = s(&ws.path("m.model"));
    ok(&["train", &data, "--kernel", "rbf", "--width", "0.8", "--model-out", &model]);
    let csv = ws.path("curve.csv");
    let line = ok(&["margins", &data, "--model", &model, "--csv", &s(&csv)]);

    let loaded = ModelFile::load(&model).unwrap();
    let scores: Vec<f64> = train.instances().iter().map(|x| loaded.model.score(x)).collect();
    let stats = compute_margins(&scores, train.labels()).unwrap();
    assert_eq!(
        line,
        format!("mean={} variance={} min={}\n", format_real(stats.mean), format_real(stats.variance), format_real(stats.minimum))
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("margin,fraction"));
    assert_eq!(text.lines().count() - 1, stats.cumulative.len());
}

#[test]
fn zero_model_has_zero_margins() {
    let ws = Workspace::new();
    let data = ws.write("d.txt", "+1 1:1\n-1 1:2\n-1 2:1\n");
    let model = ws.write(
        "zero.model",
        "#LDM v1\nsolver linear\nkernel linear\nc 1\nlambda1 0\nlambda2 0\nnormalization none\nweights 2\n",
    );
    let csv = ws.path("c.csv");
    let line = ok(&["margins", &data, "--model", &model, "--csv", &s(&csv)]);
    let z = format_real(0.0);
    assert_eq!(line, format!("mean={z} variance={z} min={z}\n"));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 2);
}

#[test]
fn eval_counts_matches() {
    let ws = Workspace::new();
    let data = ws.write("d.txt", "+1 1:1\n+1 1:2\n-1 1:3\n-1 1:4\n");
    for (preds, want) in [
        ("+1\n+1\n-1\n-1\n", "accuracy=1.000000\n"),
        ("-1\n-1\n+1\n+1\n", "accuracy=0.000000\n"),
        ("+1\t0.5\n-1\t-2\n-1\t-1\n+1\t3\n", "accuracy=0.500000\n"),
    ] {
        let p = ws.write("p.txt", preds);
        assert_eq!(ok(&["eval", &data, "--predictions", &p]), want);
    }
}

fn best_line(out: &str) -> &str {
    out.lines().last().unwrap()
}

fn parse_best(line: &str) -> Vec<(String, f64)> {
    line.strip_prefix("BEST ")
        .unwrap()
        .split(' ')
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn cv_singleton_grid_echoes_configuration() {
    let ws = Workspace::new();
    let data = ws.dataset("d.txt", &random_dataset(40, 3, 5, 0.1));
    let out = ok(&["cv", &data, "--c-grid", "50", "--lambda-grid", "0.125", "--folds", "4"]);
    let best = parse_best(best_line(&out));
    let names: Vec<&str> = best.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(names, ["c", "lambda1", "lambda2", "width"]);
    assert_eq!(best.iter().map(|(_, v)| *v).collect::<Vec<_>>(), [50.0, 0.125, 0.125, 0.0]);
}

#[test]
fn cv_log_enumerates_default_grid() {
    let ws = Workspace::new();
    let data = ws.dataset("d.txt", &random_dataset(30, 2, 6, 0.1));
    let log = ws.path("log.csv");
    let out = ok(&["cv", &data, "--folds", "3", "--log", &s(&log), "--epochs", "50"]);
    // header + configurations + BEST
    assert_eq!(out.lines().count(), 1 + 3 * 49 + 1);
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().next(), Some("c,lambda1,lambda2,width,fold,accuracy"));
    assert_eq!(text.lines().count(), 1 + 3 * 49 * 3);

    let out = ok(&["cv", &data, "--kernel", "rbf", "--folds", "3", "--epochs", "20", "--c-grid", "10"]);
    assert_eq!(out.lines().count(), 1 + 49 * 5 + 1);
}

#[test]
fn cv_best_replays_to_logged_accuracy() {
    use ldm::model_selection::{replay, usable_folds, Config, CvSettings, ModelFamily};
    let ws = Workspace::new();
    let d = random_dataset(50, 3, 7, 0.15);
    let data = ws.dataset("d.txt", &d);
    let log = ws.path("log.csv");
    let out = ok(&[
        "cv", &data, "--kernel", "rbf", "--folds", "5", "--seed", "9", "--c-grid", "1,10", "--lambda-grid",
        "0.0625,0.25", "--width-grid", "0.5,2", "--log", &s(&log),
    ]);
    let best = parse_best(best_line(&out));
    let config = Config { c: best[0].1, lambda1: best[1].1, lambda2: best[2].1, width: best[3].1 };
    let logged: Vec<f64> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
            (f[0] == config.c && f[1] == config.lambda1 && f[2] == config.lambda2 && f[3] == config.width).then_some(f[5])
        })
        .collect();
    assert_eq!(logged.len(), 5);
    let settings = CvSettings { k: 5, seed: 9, kernel: ldm::KernelLdmParams { seed: 9, record_objective: false, ..Default::default() }, ..Default::default() };
    let plan = usable_folds(&d, 5, 9).unwrap();
    assert_eq!(replay(&d, ModelFamily::KernelRbf, &config, &plan, &settings).unwrap(), logged);
}

#[test]
fn same_seed_gives_identical_model_files() {
    let ws = Workspace::new();
    let data = ws.dataset("d.txt", &random_dataset(50, 4, 8, 0.1));
    for solver in ["kernel", "linear"] {
        let (a, b) = (s(&ws.path("a.model")), s(&ws.path("b.model")));
        for m in [&a, &b] {
            ok(&["train", &data, "--solver", solver, "--seed", "4", "--model-out", m]);
        }
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
