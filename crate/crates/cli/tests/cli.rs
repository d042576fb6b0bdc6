use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfctrl"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn chain4(controller: Value, dir: &Path) -> Value {
    json!({
        "graph": configs().join("graphs/chain4.json"),
        "x0": [0.7, 0.1, 0.1, 0.1],
        "xeq": [0.1, 0.1, 0.1, 0.7],
        "controller": controller,
        "horizon": 10.0,
        "agents": 50,
        "runs": 2,
        "seed": 3,
        "window_start": 8.0,
        "output": dir.join("out"),
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(cmd: &str, config: &Path, extra: &[&str]) -> Output {
    bin().arg(cmd).arg("--config").arg(config).args(extra).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn steer_reaches_target() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = chain4(json!({"case": "case1-laplacian"}), dir.path());
    cfg["horizon"] = json!(1.0);
    cfg["window_start"] = json!(0.5);
    let o = run("steer", &write_config(dir.path(), &cfg), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&dir.path().join("out/steer.json"));
    assert!(report["endpoint_error"].as_f64().unwrap() <= 1e-8);

    let g = mfctrl::io::read_graph(&configs().join("graphs/chain4.json")).unwrap();
    let sched = mfctrl::io::read_schedule(&dir.path().join("out/schedule.csv"), g.edge_count()).unwrap();
    let x0 = mfctrl::Density::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap();
    let end = mfctrl::steering::schedule_endpoint(&g, &sched, &x0).unwrap();
    assert!(end.sup_distance(&[0.1, 0.1, 0.1, 0.7]) <= 1e-8);
}

#[test]
fn steer_to_start_is_zero_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = chain4(json!({"case": "case1-laplacian"}), dir.path());
    cfg["xeq"] = cfg["x0"].clone();
    assert_eq!(code(&run("steer", &write_config(dir.path(), &cfg), &[])), 0);
    let g = mfctrl::Graph::chain(4).unwrap();
    let sched = mfctrl::io::read_schedule(&dir.path().join("out/schedule.csv"), g.edge_count()).unwrap();
    assert_eq!(sched.max_rate(), 0.0);
    assert_eq!(read_json(&dir.path().join("out/steer.json"))["endpoint_error"], json!(0.0));
}

#[test]
fn steer_to_boundary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = chain4(json!({"case": "case1-laplacian"}), dir.path());
    cfg["xeq"] = json!([0.0, 0.2, 0.1, 0.7]);
    let o = run("steer", &write_config(dir.path(), &cfg), &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("boundary"));
}

#[test]
fn synth_writes_certificate_and_law() {
    for name in ["case3-chain4-n500", "case3-grid9-n500"] {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("synth");
        let o = run("synth", &configs().join(format!("{name}.json")), &["--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let report = read_json(&out.join("synth.json"));
        assert!(report["margin"].as_f64().unwrap() <= -1e-6);
        let cert: mfctrl::synthesis::CertificateFile =
            serde_json::from_str(&fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
        let g = mfctrl::io::read_graph(&configs().join(if name.contains("grid") {
            "graphs/grid9.json"
        } else {
            "graphs/chain4.json"
        }))
        .unwrap();
        mfctrl::GainCertificate::from_file(&cert, g.edge_count()).unwrap();
        let law = mfctrl::io::read_law(&g, &out.join("law.json")).unwrap();
        assert_eq!(law.kind(), mfctrl::LawKind::RationalRealized);
    }
}

#[test]
fn synth_refuses_disconnected_graph() {
    let dir = tempfile::tempdir().unwrap();
    let gp = dir.path().join("g.json");
    fs::write(&gp, r#"{"M": 3, "edges": [[1, 2], [2, 3], [3, 2]]}"#).unwrap();
    let mut cfg = chain4(json!({"case": "case3-lmi", "epsilon": 0.1, "tol_margin": 1e-6}), dir.path());
    cfg["graph"] = json!(gp);
    cfg["x0"] = json!([0.4, 0.3, 0.3]);
    cfg["xeq"] = json!([0.2, 0.3, 0.5]);
    let o = run("synth", &write_config(dir.path(), &cfg), &[]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("V1 = [1]") && err.contains("V2 = [2, 3]"), "{err}");
}

#[test]
fn synth_infeasible_margin_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = chain4(json!({"case": "case3-lmi", "epsilon": 0.1, "tol_margin": 1e3}), dir.path());
    let o = run("synth", &write_config(dir.path(), &cfg), &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("margin"));
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &chain4(json!({"case": "case2-lemma1"}), dir.path()));
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = bin()
            .env("MFCTRL_THREADS", threads)
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--out", out.to_str().unwrap(), "--runs", "3", "--seed", "11"])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(out);
    }
    for f in [
        "meanfield.csv",
        "switches.csv",
        "ensemble.csv",
        "traces/run-11.csv",
        "traces/run-13.agents.csv",
        "traces/run-12.meta.json",
    ] {
        let a = fs::read(outs[0].join(f)).unwrap();
        let b = fs::read(outs[1].join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    assert!(outs[0].join("overlay.svg").exists() && outs[0].join("agent.svg").exists());
    assert!(!outs[0].join("traces/run-14.csv").exists());
}

#[test]
fn analyze_reports_switches_and_variance() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = chain4(json!({"case": "case2-lemma1"}), dir.path());
    cfg["horizon"] = json!(50.0);
    cfg["window_start"] = json!(40.0);
    let case2 = write_config(dir.path(), &cfg);
    assert_eq!(code(&run("simulate", &case2, &[])), 0);
    assert_eq!(code(&run("analyze", &case2, &[])), 0);
    let report = read_json(&dir.path().join("out/report.json"));
    for t in report["traces"].as_array().unwrap() {
        assert_eq!(t["window_switches"], json!(0));
    }

    let dir1 = tempfile::tempdir().unwrap();
    let mut cfg = chain4(json!({"case": "case1-laplacian"}), dir1.path());
    cfg["horizon"] = json!(20.0);
    cfg["window_start"] = json!(15.0);
    let case1 = write_config(dir1.path(), &cfg);
    assert_eq!(code(&run("simulate", &case1, &[])), 0);
    assert_eq!(code(&run("analyze", &case1, &[])), 0);
    let report = read_json(&dir1.path().join("out/report.json"));
    assert!(report["steady_state_variance"].as_f64().unwrap() > 0.0);
}

#[test]
fn analyze_rejects_decay_fit_without_control() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("zero.csv");
    fs::write(&sched, "t_start,t_end,edge_id,rate\n0,10,1,0\n").unwrap();
    let cfg = write_config(dir.path(), &chain4(json!({"case": "custom-schedule", "schedule": sched}), dir.path()));
    assert_eq!(code(&run("simulate", &cfg, &[])), 0);
    assert_eq!(code(&run("analyze", &cfg, &[])), 0);
    let report = read_json(&dir.path().join("out/report.json"));
    for t in report["traces"].as_array().unwrap() {
        assert!(t["decay_fit"].is_null());
        assert!(t["decay_fit_rejected"].is_string());
    }
}

#[test]
fn analyze_malformed_trace_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &chain4(json!({"case": "case2-lemma1"}), dir.path()));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,N_1\n0,x\n").unwrap();
    let o = run("analyze", &cfg, &[bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn step_overflow_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("fast.csv");
    fs::write(&sched, "t_start,t_end,edge_id,rate\n0,10,1,1e13\n").unwrap();
    let cfg = write_config(dir.path(), &chain4(json!({"case": "custom-schedule", "schedule": sched}), dir.path()));
    let o = run("simulate", &cfg, &[]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run("steer", &dir.path().join("missing.json"), &[])), 2);
    let mut cfg = chain4(json!({"case": "case3-lmi", "epsilon": 0.1}), dir.path());
    assert_eq!(code(&run("synth", &write_config(dir.path(), &cfg), &[])), 2);
    cfg["controller"] = json!({"case": "case2-lemma1"});
    cfg["x0"] = json!([0.5, 0.5]);
    assert_eq!(code(&run("simulate", &write_config(dir.path(), &cfg), &[])), 2);
    let o = bin()
        .env("MFCTRL_THREADS", "zero")
        .args(["steer", "--config"])
        .arg(configs().join("steer-chain4.json"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
