use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn out_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("torus-kam-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str], config: Option<&str>, out: &PathBuf) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_torus-kam"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(configs().join(c));
    }
    cmd.output().unwrap()
}

#[test]
fn missing_config_is_a_config_error() {
    let out = out_dir("missing");
    let o = run(&["check"], Some("does-not-exist.toml"), &out);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn non_unimodular_matrix_is_a_config_error() {
    let out = out_dir("det2");
    let o = run(&["check"], Some("bad-matrix.toml"), &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unimodular"));
}

#[test]
fn unknown_flag_is_a_config_error() {
    let out = out_dir("flag");
    let o = run(&["run", "--bogus"], None, &out);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unperturbed_run_is_certified() {
    let out = out_dir("unperturbed");
    let o = run(&["run"], Some("unperturbed.toml"), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["converged"], true);
    assert_eq!(report["max_conjugation_error"].as_f64().unwrap(), 0.0);
    let iters = fs::read_to_string(out.join("iterations.csv")).unwrap();
    assert!(iters.starts_with("iteration,N,kept_measure,eps0,eps_r0,max_h_norm\n"));
}

#[test]
fn cat_pair_fails_higher_rank_with_witness() {
    let out = out_dir("catpair");
    let o = run(&["check"], Some("cat-pair.toml"), &out);
    assert_eq!(o.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("check.json")).unwrap()).unwrap();
    let hr = report["conditions"].as_array().unwrap().iter().find(|c| c["name"] == "higher rank").unwrap();
    assert_eq!(hr["pass"], false);
    assert!(hr["detail"].as_str().unwrap().contains("not ergodic"));
}

#[test]
fn golden_exclusion_meets_the_measure_bound() {
    let out = out_dir("golden");
    let o = run(&["exclude"], Some("golden-exclusion.toml"), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("exclusion.json")).unwrap()).unwrap();
    let kept = report["kept_measure"].as_f64().unwrap();
    assert!(kept >= (1.0 - 2.0 * 4.0 / 1000.0) * 0.01);
    let csv = fs::read_to_string(out.join("kept_intervals.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lo,hi,min_gap"));
    let total: f64 = lines
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            assert!(f[2] >= 1e-9, "gap {} below 1000^-3", f[2]);
            f[1] - f[0]
        })
        .sum();
    assert!((total - kept).abs() < 1e-12);
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (out_dir("det-a"), out_dir("det-b"));
    for dir in [&a, &b] {
        assert_eq!(run(&["solve", "--seed", "11"], Some("unperturbed.toml"), dir).status.code(), Some(0));
        assert_eq!(run(&["exclude"], Some("golden-exclusion.toml"), dir).status.code(), Some(0));
    }
    for f in ["solve.json", "exclusion.json", "kept_intervals.csv", "gap_histogram.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn reference_config_is_complete() {
    let o = Command::new(env!("CARGO_BIN_EXE_torus-kam")).arg("config").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for key in ["[action]", "[parameters]", "[perturbation]", "[scheme]", "[arithmetic]", "[solve]", "[exclusion]", "[estimates]"] {
        assert!(text.contains(key), "{key}");
    }
    assert_eq!(text, fs::read_to_string(configs().join("reference.toml")).unwrap());
}
