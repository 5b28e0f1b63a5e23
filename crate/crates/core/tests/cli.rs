use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rbm_tfi::io::sha256_hex;
use rbm_tfi::run::KeyValues;

fn rbmtfi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbmtfi"))
        .args(args)
        .env("RBMTFI_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

fn csv_column(text: &str, name: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(k).unwrap().parse().unwrap())
        .collect()
}

/// Every `output.*` digest in the manifest matches the file on disk.
fn assert_manifest_consistent(dir: &Path) {
    let manifest = KeyValues::read(&dir.join("manifest.txt")).unwrap();
    let text = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let (key, _) = line.split_once(" = ").unwrap();
        if let Some(rel) = key.strip_prefix("output.") {
            let digest: String = manifest.require(key).unwrap();
            assert_eq!(
                sha256_hex(&fs::read(dir.join(rel)).unwrap()),
                digest,
                "{rel}"
            );
            n += 1;
        }
    }
    assert!(n > 0);
}

#[test]
fn exact_subcommand() {
    let o = rbmtfi(&["exact", "--L", "8", "--gamma", "0", "--method", "fermion"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).parse::<f64>().unwrap(), -8.0);

    let ed: f64 = stdout(&rbmtfi(&[
        "exact", "--L", "12", "--gamma", "0.7", "--method", "ed",
    ]))
    .parse()
    .unwrap();
    let ff: f64 = stdout(&rbmtfi(&[
        "exact", "--L", "12", "--gamma", "0.7", "--method", "fermion",
    ]))
    .parse()
    .unwrap();
    assert!((ed - ff).abs() <= 1e-9 * ff.abs());

    let o = rbmtfi(&["exact", "--L", "9", "--method", "fermion"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("even L required"));
}

#[test]
fn missing_gamma_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "L = 8\nseed = 1\n").unwrap();
    let out = dir.path().join("out");
    let o = rbmtfi(&[
        "optimize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("`gamma`"), "{}", stderr(&o));
    assert!(!out.join("manifest.txt").exists());
}

#[test]
fn seed_must_be_explicit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = rbmtfi(&[
        "optimize",
        "--L",
        "6",
        "--gamma",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("`seed`"));
}

#[test]
fn optimize_is_deterministic_and_guarded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# small run\nL = 6\ngamma = 0.8\nseed = 17\nn_iters = 30\nn_sweeps = 100\nn_burnin = 20\nn_chains = 3\n",
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = rbmtfi(&[
            "optimize",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["trace.csv", "params.txt", "profile.csv", "snapshots.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_manifest_consistent(&a);
    let trace = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,energy,energy_err,eloc_var,delta_w_norm\n"));
    assert_eq!(trace.lines().count(), 31);

    // rerun into the same directory needs --force; flags override the file
    let o = rbmtfi(&[
        "optimize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--force"));
    let o = rbmtfi(&[
        "optimize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
        "--force",
        "--n-iters",
        "10",
    ]);
    assert!(o.status.success());
    assert_eq!(
        fs::read_to_string(a.join("trace.csv"))
            .unwrap()
            .lines()
            .count(),
        11
    );
    assert!(fs::read_to_string(a.join("manifest.txt"))
        .unwrap()
        .contains("config.n_iters = 10"));
}

#[test]
fn optimize_default_config_reaches_exact_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = rbmtfi(&[
        "optimize",
        "--L",
        "8",
        "--gamma",
        "1",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = KeyValues::read(&out.join("manifest.txt")).unwrap();
    let rel: f64 = m.require("result.rel_error").unwrap();
    assert!(rel <= 1e-3, "relative error {rel}");
}

#[test]
fn thermo_of_trivial_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.txt");
    fs::write(&zero, "L 4\n0 0\n1 0\n2 0\n3 0\n").unwrap();
    let out = dir.path().join("zero");
    let o = rbmtfi(&[
        "thermo",
        "--snapshot",
        zero.to_str().unwrap(),
        "--gamma",
        "0",
        "--seed",
        "2",
        "--temps",
        "0.5,2",
        "--n-sweeps",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("thermo.csv")).unwrap();
    assert_eq!(csv_column(&csv, "T"), vec![0.5, 1.0, 2.0]);
    assert!(csv_column(&csv, "c_per_site").iter().all(|&c| c == 0.0));
    assert_manifest_consistent(&out);

    let w = 0.7;
    let pair = dir.path().join("pair.txt");
    fs::write(&pair, format!("L 6\n0 {w}\n1 0\n2 0\n3 0\n4 0\n5 0\n")).unwrap();
    let out = dir.path().join("pair");
    let o = rbmtfi(&[
        "thermo",
        "--snapshot",
        pair.to_str().unwrap(),
        "--gamma",
        "0",
        "--seed",
        "3",
        "--temps",
        "0.5,2",
        "--n-sweeps",
        "20000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("thermo.csv")).unwrap();
    let ts = csv_column(&csv, "T");
    let e = csv_column(&csv, "e_per_site");
    let err = csv_column(&csv, "e_err");
    for k in 0..ts.len() {
        let exact = -6.0 * w * (w / ts[k]).tanh() / 12.0;
        assert!(
            (e[k] - exact).abs() <= 3.0 * err[k],
            "T={}: {} vs {exact}",
            ts[k],
            e[k]
        );
    }
}

#[test]
fn thermo_reads_gamma_from_run_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = rbmtfi(&[
        "optimize",
        "--L",
        "4",
        "--gamma",
        "1.3",
        "--seed",
        "9",
        "--n-iters",
        "5",
        "--n-sweeps",
        "50",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("thermo");
    let o = rbmtfi(&[
        "thermo",
        "--snapshot",
        run.join("params.txt").to_str().unwrap(),
        "--seed",
        "1",
        "--temps",
        "1",
        "--n-sweeps",
        "200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("thermo.csv")).unwrap();
    assert_eq!(csv_column(&csv, "gamma"), vec![1.3]);
}

#[test]
fn scan_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan");
    let o = rbmtfi(&[
        "scan",
        "--L",
        "6,8",
        "--gammas",
        "0.8,1.2",
        "--seed",
        "5",
        "--n-iters",
        "20",
        "--n-sweeps",
        "100",
        "--n-burnin",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tail = fs::read_to_string(out.join("tail.csv")).unwrap();
    assert!(tail.starts_with(
        "gamma,L,w_tail,w_tail_L,origin_index,energy,energy_err,exact_energy,rel_error,seed\n"
    ));
    assert_eq!(tail.lines().count(), 5);
    for name in ["L6_g0.800", "L6_g1.200", "L8_g0.800", "L8_g1.200"] {
        let profile = fs::read_to_string(out.join(format!("profiles/profile_{name}.csv"))).unwrap();
        assert!(profile.starts_with("d,W_d\n"));
        assert!(out.join(format!("params/params_{name}.txt")).exists());
    }
    assert!(out.join("energy.csv").exists());
    assert_manifest_consistent(&out);
    let n_manifests = walk(&out)
        .iter()
        .filter(|p| p.ends_with("manifest.txt"))
        .count();
    assert_eq!(n_manifests, 1);
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn paper_scale_needs_confirmation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig5");
    let o = rbmtfi(&[
        "reproduce",
        "fig5",
        "--scale",
        "paper",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--confirm"));
    assert!(stderr(&o).contains("hours"));
    assert!(!out.exists());
}
