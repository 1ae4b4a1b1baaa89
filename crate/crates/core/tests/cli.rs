use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_traffic-lgp"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn traffic-lgp")
}

fn ok(cmd: &mut Command) -> Output {
    let out = run(cmd);
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_string)
        .collect()
}

struct Data {
    _dir: tempfile::TempDir,
    root: PathBuf,
    network: PathBuf,
    speeds: PathBuf,
}

fn synth() -> Data {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    ok(bin()
        .args(["synth", "--grid-rows", "4", "--grid-cols", "4", "--segments", "30"])
        .args(["--interval-minutes", "60", "--days", "8", "--seed", "3"])
        .arg("--out")
        .arg(root.join("data")));
    Data {
        network: root.join("data/network.csv"),
        speeds: root.join("data/speeds.csv"),
        root,
        _dir: dir,
    }
}

impl Data {
    fn cmd(&self, sub: &str, out: &str) -> Command {
        let mut c = bin();
        c.arg(sub)
            .arg("--network")
            .arg(&self.network)
            .arg("--speeds")
            .arg(&self.speeds)
            .args(["--interval-minutes", "60", "--seed", "5"])
            .arg("--out")
            .arg(self.root.join(out));
        c
    }
}

#[test]
fn synth_writes_inputs_and_spec() {
    let d = synth();
    let net = csv_rows(&d.network);
    assert_eq!(net.len(), 31);
    assert!(csv_rows(&d.speeds).len() > 30 * 24);
    assert!(d.root.join("data/synth.toml").exists());
}

#[test]
fn pipeline_factorize_train_predict() {
    let d = synth();

    ok(d.cmd("select-k", "sel").args(["--k-min", "1", "--k-max", "3", "--folds", "3", "--iters", "30"]));
    let summary = csv_rows(&d.root.join("sel/k_selection_summary.csv"));
    assert_eq!(summary.len(), 4);

    ok(d.cmd("factorize", "fac").args(["--k", "2", "--iters", "20"]));
    let trace = csv_rows(&d.root.join("fac/residual_trace.csv"));
    assert_eq!(trace.len(), 22, "header + initial state + 20 cycles");

    ok(d.cmd("train", "model").args(["--model", "lgp", "--k", "2", "--t-max", "60", "--gp-budget", "20"]));
    assert!(d.root.join("model/run.toml").exists());

    ok(d.cmd("predict", "pred")
        .args(["--model", "lgp", "--k", "2", "--t-max", "60", "--gp-budget", "20"])
        .args(["--t", "8", "--steps", "2"]));
    let rows = csv_rows(&d.root.join("pred/predictions.csv"));
    assert!(rows.len() > 1);
    let header: Vec<&str> = rows[0].split(',').collect();
    let mean_col = header.iter().position(|h| *h == "mean_mph").expect("mean column");
    let var_col = header.iter().position(|h| *h == "variance").expect("variance column");
    for r in &rows[1..] {
        let f: Vec<&str> = r.split(',').collect();
        assert!(f[mean_col].parse::<f64>().unwrap().is_finite());
        assert!(f[var_col].parse::<f64>().unwrap() >= 0.0);
    }
}

#[test]
fn evaluate_writes_result_tables() {
    let d = synth();
    ok(d.cmd("evaluate", "eval")
        .args(["--variants", "gp,lgp", "--trial-hours", "6,12", "--steps", "1,2"])
        .args(["--k", "2", "--t-max", "60", "--gp-budget", "20", "--no-timing"]));
    let out = d.root.join("eval");
    let results = csv_rows(&out.join("results.csv"));
    assert_eq!(results.len(), 1 + 2 * 2 * 2);
    assert!(csv_rows(&out.join("summary.csv")).iter().any(|r| r.contains(",all,")));
    assert!(out.join("significance.csv").exists());
    assert!(out.join("run.toml").exists());
    assert!(!out.join("predictions.csv").exists());
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let d = synth();
    let cfg = d.root.join("exp.toml");
    std::fs::write(&cfg, "trial_hours = [7]\nsteps = [1]\nvariants = [\"gp\"]\nt_max = 40\ngp_budget = 10\n").unwrap();
    ok(d.cmd("evaluate", "eval").arg("--config").arg(&cfg).args(["--steps", "1,3", "--no-timing"]));
    let results = csv_rows(&d.root.join("eval/results.csv"));
    assert_eq!(results.len(), 1 + 2);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let d = synth();
    let cfg = d.root.join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = run(d.cmd("evaluate", "eval").arg("--config").arg(&cfg));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let d = synth();
    let out = run(d.cmd("train", "m").args(["--model", "nope"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let out = run(bin()
        .args(["train", "--network", "/nonexistent/net.csv", "--speeds"])
        .arg(&d.speeds));
    assert_eq!(out.status.code(), Some(2));

    let out = run(d.cmd("factorize", "f").args(["--k", "0"]));
    assert_eq!(out.status.code(), Some(1));

    ok(bin().arg("--help"));
}
