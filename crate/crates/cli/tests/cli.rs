use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn levyop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levyop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

/// Every artifact except the manifest appears in the manifest, and vice versa.
fn assert_manifest_complete(dir: &Path) {
    let manifest = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    let listed: Vec<&str> = manifest
        .lines()
        .filter_map(|l| l.strip_prefix("file = "))
        .map(|l| l.split(' ').next().unwrap())
        .collect();
    for f in listing(dir) {
        if f != "manifest.txt" {
            assert!(listed.contains(&f.as_str()), "orphan artifact {f}");
        }
    }
    for f in listed {
        assert!(dir.join(f).exists(), "manifest lists missing file {f}");
    }
}

const SMALL: &str = r#"
[kernel]
alpha = 1.5
[kernel.coefficient]
kind = "constant"
value = 1.0
[grid]
npts = 128
[symbol]
rel_tol = 1e-10
csv_stride = 8
[resolvent]
factors = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
[cauchy]
horizon = 0.5
steps = 128
[simulate]
epsilon = 0.05
n_paths = 4000
seed = 11
horizon = 0.5
checkpoints = [0.25, 0.5]
"#;

#[test]
fn empty_pipeline_writes_only_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "pipeline = []\n");
    let out = tmp.path().join("out");
    let o = levyop(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(listing(&out), vec!["manifest.txt"]);
    let m = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(
        m.contains("config_sha256 = ") && m.contains("seed_root = ") && m.contains("status = pass")
    );
}

#[test]
fn out_of_range_alpha_fails_before_any_compute() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[kernel]\nalpha = 2.5\n");
    let out = tmp.path().join("out");
    let o = levyop(&["symbol", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("alpha out of (0,2)"), "{err}");
    assert!(!out.exists(), "no artifacts before validation passes");
}

#[test]
fn unknown_keys_and_bad_values_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[grid]\nnpts = 64\nspacing = 3\n");
    let o = levyop(&[
        "symbol",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("spacing") && err.contains("line"), "{err}");

    let cfg = write_config(tmp.path(), "[simulate]\nepsilon = 1.5\n");
    let o = levyop(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon must lie in (0,1)"));

    let cfg = write_config(tmp.path(), "pipeline = [\"symbol\", \"plot\"]\n");
    let o = levyop(&[
        "run",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown pipeline `plot`"));
}

#[test]
fn reruns_give_identical_csv_payloads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = levyop(&[
            "simulate",
            "--config",
            &cfg,
            "--seed",
            "5",
            "--threads",
            "1",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
        assert_manifest_complete(d);
    }
    for f in listing(&a) {
        if f != "manifest.txt" {
            assert_eq!(
                fs::read(a.join(&f)).unwrap(),
                fs::read(b.join(&f)).unwrap(),
                "{f} differs"
            );
        }
    }
    assert!(fs::read_to_string(a.join("manifest.txt"))
        .unwrap()
        .contains("seed_root = 5"));
    assert!(listing(&a).iter().any(|f| f.ends_with(".gp")));
}

#[test]
fn crosscheck_on_the_constant_coefficient_fixture_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("x");
    let o = levyop(&[
        "crosscheck",
        "--config",
        &cfg,
        "--no-plots",
        "--out",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        o.status.success(),
        "{stdout}\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let files = listing(&out);
    for f in [
        "symbol.csv",
        "sector.txt",
        "resolvent_scan_0.csv",
        "resolvent_defect.csv",
        "crosscheck_pde.csv",
        "mc_vs_pde.csv",
    ] {
        assert!(files.contains(&f.to_string()), "missing {f}");
    }
    assert!(!files.iter().any(|f| f.ends_with(".gp")));
    assert!(stdout.contains("PASS Monte Carlo versus PDE"));
    assert_manifest_complete(&out);
}

#[test]
fn failing_checks_give_exit_status_one() {
    let tmp = tempfile::tempdir().unwrap();
    // A discontinuous coefficient violates the Hölder assumption.
    let cfg = write_config(
        tmp.path(),
        "[kernel.coefficient]\nkind = \"step\"\n[grid]\nnpts = 64\n",
    );
    let out = tmp.path().join("v");
    let o = levyop(&["validate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    assert!(fs::read_to_string(out.join("manifest.txt"))
        .unwrap()
        .contains("status = fail"));
}

#[test]
fn default_kernel_satisfies_the_assumptions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let o = levyop(&["validate", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("validation.csv").exists());
    assert_manifest_complete(&out);
}

#[test]
fn bench_records_timings_in_the_manifest_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("b");
    let o = levyop(&["bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(listing(&out), vec!["manifest.txt"]);
    assert!(fs::read_to_string(out.join("manifest.txt"))
        .unwrap()
        .contains("timing.symbol = "));
}
