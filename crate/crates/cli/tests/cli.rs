use std::path::Path;
use std::process::{Command, Output};

fn optomech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optomech"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const SMALL_QSD: &str = r#"
engine = "qsd"
[params]
detuning = -0.4
pump = 0.05
sigma = 1.0
[fock]
cavity = 4
mech = 5
[schedule]
t_end = 5.0
dt = 0.005
record_stride = 100
snapshot_times = [5.0]
leak_threshold = 1.0
[ensemble]
trajectories = 200
seed = 7
trajectory_files = 2
[wigner]
"#;

#[test]
fn validate_prints_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "engine = \"classical\"\n[params]\ndetuning = -0.4\n");
    let out = optomech(&["validate", &cfg]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("pump = 1.5"), "{text}");
    assert!(text.contains("kappa = 0.5"));
    assert!(text.contains("gamma = 0.0005"));
}

#[test]
fn unknown_key_fails_closed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "engine = \"qsd\"\n[params]\nsigmaa = 0.1\n");
    let out = optomech(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigmaa"));
}

#[test]
fn unknown_figure_lists_ids() {
    let out = optomech(&["playbook", "fig12"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fig1") && err.contains("fig7"), "{err}");
}

#[test]
fn playbook_configs_validate() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_string_lossy().into_owned();
    let out = optomech(&["playbook", "fig4", "--variant", "both", "--out-dir", &root]);
    assert!(out.status.success());
    for variant in ["desk", "full"] {
        let cfg = dir.path().join(variant).join("fig4-cat.toml");
        let text = std::fs::read_to_string(&cfg).unwrap();
        assert!(text.contains("kind = \"cat\""));
        assert!(optomech(&["validate", &cfg.to_string_lossy()]).status.success());
    }
}

#[test]
fn chart_run_finds_both_branches() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("chart");
    let cfg = write(
        dir.path(),
        "chart.toml",
        "engine = \"chart\"\n[chart]\ndelta_min = -0.5\ndelta_max = -0.4\ndelta_points = 2\namp_min = 0.0\namp_max = 3.5\namp_points = 15\n",
    );
    let out = optomech(&["run", &cfg, "--out-dir", &out_dir.to_string_lossy()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let grid = std::fs::read_to_string(out_dir.join("chart_grid.txt")).unwrap();
    let axes: Vec<&str> = grid.lines().filter(|l| !l.starts_with('#')).take(2).collect();
    assert!(axes[0].starts_with("detuning,-0.5,"));
    assert!(axes[1].starts_with("amplitude,0,0.25,"));

    let (h, rows) = table(&out_dir.join("chart_branches.csv"));
    let (d, a) = (column(&h, "detuning"), column(&h, "amplitude"));
    let at: Vec<f64> = rows.iter().filter(|r| (r[d] + 0.4).abs() < 1e-12).map(|r| r[a]).collect();
    assert_eq!(at.len(), 2, "{at:?}");
    assert!((at[0] - 1.2).abs() < 0.15 && (at[1] - 2.7).abs() < 0.2, "{at:?}");
    assert!(out_dir.join("manifest.json").exists() && out_dir.join("config.toml").exists());
}

#[test]
fn classical_case_d_is_chaotic() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("d");
    let cfg = write(dir.path(), "d.toml", "engine = \"classical\"\n[params]\ndetuning = -0.7\n");
    let out = optomech(&["run", &cfg, "--out-dir", &out_dir.to_string_lossy()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("attractor.json")).unwrap()).unwrap();
    assert_eq!(report["kind"]["kind"], "chaotic", "{report}");
    assert!(report["lyapunov"].as_f64().unwrap() > 0.0);
    assert!(out_dir.join("series.csv").exists() && out_dir.join("strobe.csv").exists());
}

#[test]
fn paired_qsd_and_master_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let q_dir = dir.path().join("q");
    let m_dir = dir.path().join("m");
    let q = write(dir.path(), "q.toml", SMALL_QSD);
    let m = write(dir.path(), "m.toml", &SMALL_QSD.replace("engine = \"qsd\"", "engine = \"master\""));
    for (cfg, out) in [(&q, &q_dir), (&m, &m_dir)] {
        let o = optomech(&["run", cfg, "--out-dir", &out.to_string_lossy()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (hq, rq) = table(&q_dir.join("ensemble.csv"));
    let (hm, rm) = table(&m_dir.join("master.csv"));
    assert_eq!(rq.len(), rm.len());
    for (a, b) in rq.iter().zip(&rm) {
        assert_eq!(a[0], b[0]);
        for (name, se) in [("x", "x_stderr"), ("p", "p_stderr"), ("n_cav", "n_cav_stderr")] {
            let diff = (a[column(&hq, name)] - b[column(&hm, name)]).abs();
            let se = a[column(&hq, se)];
            assert!(diff <= 4.0 * se + 1e-12, "{name} at tau {}: diff {diff:.3e}, se {se:.3e}", a[0]);
        }
    }
    for name in ["trajectory_0.csv", "trajectory_1.csv", "rho_mech_tau5.0000.bin", "wigner_tau5.0000.txt"] {
        assert!(q_dir.join(name).exists(), "{name}");
    }
    assert!(!q_dir.join("trajectory_2.csv").exists());
    assert!(m_dir.join("rho_tau5.0000.bin").exists() && m_dir.join("wigner_tau5.0000.txt").exists());
}

fn strip_timing(mut v: serde_json::Value) -> serde_json::Value {
    let obj = v.as_object_mut().unwrap();
    obj.remove("started_unix");
    obj.remove("wall_clock_seconds");
    v
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "q.toml", &SMALL_QSD.replace("trajectories = 200", "trajectories = 20"));
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|n| {
            let d = dir.path().join(n);
            assert!(optomech(&["run", &cfg, "--out-dir", &d.to_string_lossy()]).status.success());
            d
        })
        .collect();
    let mut names: Vec<_> = std::fs::read_dir(&runs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        let a = std::fs::read(runs[0].join(&name)).unwrap();
        let b = std::fs::read(runs[1].join(&name)).unwrap();
        if name == "manifest.json" {
            let pa = strip_timing(serde_json::from_slice(&a).unwrap());
            let pb = strip_timing(serde_json::from_slice(&b).unwrap());
            assert_eq!(pa, pb);
        } else if name == "config.toml" {
            // output_dir differs by construction
            continue;
        } else {
            assert!(a == b, "{name:?} differs");
        }
    }

    let d = dir.path().join("c");
    assert!(optomech(&["run", &cfg, "--out-dir", &d.to_string_lossy(), "--seed-override", "8", "--threads", "2"])
        .status
        .success());
    assert_ne!(
        std::fs::read(d.join("ensemble.csv")).unwrap(),
        std::fs::read(runs[0].join("ensemble.csv")).unwrap()
    );
}

#[test]
fn truncation_leak_exits_with_physics_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "leak.toml",
        "engine = \"qsd\"\n[params]\nsigma = 1.0\n[fock]\ncavity = 2\nmech = 2\n[schedule]\nt_end = 1.0\ndt = 0.005\n",
    );
    let out = optomech(&["run", &cfg, "--out-dir", &dir.path().join("o").to_string_lossy()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("leak"));
}

#[test]
fn integrator_failure_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "stiff.toml",
        "engine = \"classical\"\n[classical]\nt_end = 10.0\natol = 1e-300\nrtol = 1e-300\nlyapunov = false\n",
    );
    let out = optomech(&["run", &cfg, "--out-dir", &dir.path().join("o").to_string_lossy()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
