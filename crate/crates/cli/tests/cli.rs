use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn autoscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autoscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_BO: &str = r#"
kind = "bo_explore"
seed = 4

[sample]
width = 24
height = 24

[engine]
n_seed_points = 12
batch = 6
max_measurements = 30
"#;

#[test]
fn run_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "bo.toml", SMALL_BO);
    let out = tmp.path().join("run");
    let o = autoscope(&["run", &spec, "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    assert!(out.join("manifest.json").is_file());
    assert!(out.join("advisory.json").is_file());
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(!manifest.contains("advisory"));

    let o = autoscope(&["report", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(out.join("report/summary.csv").is_file());
    assert!(out.join("report/rmse_vs_budget.svg").is_file());
}

#[test]
fn seed_flag_overrides_spec_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "bo.toml", SMALL_BO);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let o = autoscope(&["run", &spec, "--seed", "17", "--out", d.to_str().unwrap(), "--quiet"]);
        assert!(o.status.success());
    }
    let ma = fs::read(a.join("manifest.json")).unwrap();
    assert_eq!(ma, fs::read(b.join("manifest.json")).unwrap());
    assert!(String::from_utf8_lossy(&ma).contains("\"seed\": 17"));
}

#[test]
fn validation_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_spec(tmp.path(), "unknown.toml", "kind = \"bo_explore\"\nbogus = 3\n");
    let o = autoscope(&["run", &unknown]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let over = write_spec(
        tmp.path(),
        "over.toml",
        "kind = \"bo_explore\"\n[engine]\nmax_measurements = 600\n",
    );
    assert_eq!(autoscope(&["run", &over]).status.code(), Some(1));

    let bo = write_spec(tmp.path(), "bo.toml", SMALL_BO);
    assert_eq!(autoscope(&["rl-train", &bo]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    assert_eq!(autoscope(&["run", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(autoscope(&["report", tmp.path().to_str().unwrap()]).status.code(), Some(2));
    let spec = write_spec(
        tmp.path(),
        "missing_sample.toml",
        "kind = \"ferrobot\"\n[sample]\npath = \"/nonexistent/sample.json\"\n",
    );
    assert_eq!(autoscope(&["run", &spec]).status.code(), Some(2));
}

#[test]
fn generate_writes_sample_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = autoscope(&[
        "generate",
        "--width",
        "16",
        "--height",
        "12",
        "--style",
        "bubbles",
        "--seed",
        "3",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for ext in ["json", "raw", "pgm"] {
        assert!(tmp.path().join(format!("sample.{ext}")).is_file());
    }
    let pgm = fs::read(tmp.path().join("sample.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 12\n255\n"));
}

#[test]
fn generated_sample_feeds_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = autoscope(&["generate", "--width", "24", "--height", "24", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success());
    let body = SMALL_BO.replace(
        "[sample]\nwidth = 24\nheight = 24",
        &format!("[sample]\npath = {:?}", tmp.path().join("sample.json").to_string_lossy()),
    );
    let spec = write_spec(tmp.path(), "bo.toml", &body);
    let out = tmp.path().join("run");
    let o = autoscope(&["run", &spec, "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bench_and_rl_train() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), "bo.toml", &format!("{SMALL_BO}\n[bench]\nn_seeds = 2\n"));
    let out = tmp.path().join("bench");
    let o = autoscope(&["bench", &spec, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("median_rmse_random"));
    assert!(out.join("bench.csv").is_file());

    let rl = write_spec(
        tmp.path(),
        "rl.toml",
        "kind = \"rl_tip\"\n[rl]\neval_episodes = 200\n[rl.double_q]\nn_episodes = 500\n",
    );
    let out = tmp.path().join("rl");
    let o = autoscope(&["rl-train", &rl, "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("learning_curve.csv").is_file());
    let o = autoscope(&["report", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success());
    assert!(out.join("report/learning_curve.svg").is_file());
}

#[test]
fn example_specs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let spec = autoscope::campaign::CampaignSpec::load(&p);
            assert!(spec.is_ok(), "{}: {:?}", p.display(), spec.err());
            n += 1;
        }
    }
    assert!(n >= 6);
}
