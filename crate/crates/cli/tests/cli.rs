use std::path::Path;
use std::process::Command;

use mshlab_cli::config::*;
use proptest::prelude::*;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mshlab"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn only_run_dir(out: &Path) -> std::path::PathBuf {
    let dirs: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs[0].clone()
}

#[test]
fn verify_weights_writes_certificates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"experiment": {"kind": "verify-weights", "tuples": [{"k": 2, "m": 1, "delta": 3}, {"k": 3, "m": 2, "delta": 2}]}, "seed": 1}"#,
    );
    let out = tmp.path().join("out");
    let st = bin().args(["verify-weights", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let run = only_run_dir(&out);
    for f in ["report.json", "report.csv", "config.json", "artifacts/certificate_sub_k2_m1_d3.json", "artifacts/certificate_super_k3_m2_d2.json"] {
        assert!(run.join(f).exists(), "{} missing", f);
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["failed"], 0);
    assert!(report["records"].as_array().unwrap().iter().all(|r| r["basis"].is_string()));
}

#[test]
fn siu_falsifier_reports_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"experiment": {"kind": "siu", "gammas": [1.0], "falsifier": {"offset": 1.0, "terms": [{"frequency": [1, 0], "amplitude": 0.5}]}}}"#,
    );
    let out = tmp.path().join("out");
    let st = bin().args(["siu", "--format", "json", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let run = only_run_dir(&out);
    assert!(!run.join("report.csv").exists());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("artifacts/siu_falsifier.json")).unwrap()).unwrap();
    assert_eq!(v["verdict"], "not-m-subharmonic");
    assert!(v["violation"]["margin"].as_f64().unwrap() < 0.0);
}

#[test]
fn malformed_json_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"experiment": {"kind": "lelong", "#);
    let out = tmp.path().join("out");
    let o = bin().args(["lelong", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));
}

#[test]
fn invalid_field_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"experiment": {"kind": "lelong", "tolerance": -1.0}}"#);
    let out = tmp.path().join("out");
    let o = bin().args(["lelong", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment.tolerance"));
    assert!(!out.exists());
    let cfg = write(tmp.path(), "d.json", r#"{"experiment": {"kind": "minimal"}}"#);
    let o = bin().args(["lelong", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment.kind"));
    let o = bin().args(["minimal", "--threads", "0", "--out"]).arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_check_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    // delta = 3 is below the admissible bound for (k, m) = (3, 1)
    let cfg = write(tmp.path(), "c.json", r#"{"experiment": {"kind": "verify-weights", "tuples": [{"k": 3, "m": 1, "delta": 3}]}}"#);
    let out = tmp.path().join("out");
    let st = bin().args(["verify-weights", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(1));
    assert!(only_run_dir(&out).join("report.json").exists());
}

#[test]
fn same_config_same_directory_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (out, t) in [(&a, "1"), (&b, "2")] {
        let st = bin().args(["minimal", "--threads", t, "--seed", "5", "--out"]).arg(out).status().unwrap();
        assert_eq!(st.code(), Some(0));
    }
    let (ra, rb) = (only_run_dir(&a), only_run_dir(&b));
    assert_eq!(ra.file_name(), rb.file_name());
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("report.json")).unwrap()).unwrap();
        v["runtime_ms"] = 0.into();
        for r in v["records"].as_array_mut().unwrap() {
            r["runtime_ms"] = 0.into();
        }
        v
    };
    assert_eq!(strip(&ra), strip(&rb));
}

#[test]
fn defaults_validate() {
    for k in ["verify-weights", "expansion", "lelong", "reltype", "localize", "siu", "compare", "minimal", "full-suite"] {
        let cfg = RunConfig::new(Experiment::default_for(k).unwrap());
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
    assert!(Experiment::default_for("nope").is_none());
}

#[test]
fn hash_ignores_threads_and_output() {
    let mut a = RunConfig::new(Experiment::default_for("lelong").unwrap());
    let h = a.hash();
    a.threads = Some(3);
    a.output.dir = "elsewhere".into();
    assert_eq!(a.hash(), h);
    a.seed += 1;
    assert_ne!(a.hash(), h);
}

fn tuple() -> impl Strategy<Value = WeightTuple> {
    (1usize..6, 1usize..6, 0.1f64..10.0).prop_map(|(k, m, delta)| WeightTuple { k, m, delta })
}

fn experiment() -> impl Strategy<Value = Experiment> {
    prop_oneof![
        (prop::collection::vec(tuple(), 1..4), 2usize..100, 1e-14f64..1e-2).prop_map(|(tuples, n, tol)| Experiment::VerifyWeights(VerifyWeights {
            tuples,
            maximality_radii: n,
            maximality_tolerance: tol,
            ..Default::default()
        })),
        (prop::collection::vec(tuple(), 1..4), prop::collection::vec(0.0f64..1e-2, 1..3)).prop_map(|(tuples, epsilons)| Experiment::Expansion(Expansion {
            tuples,
            epsilons,
            ..Default::default()
        })),
        (prop::collection::vec(0.01f64..5.0, 1..4), 0.05f64..0.5, 6usize..20, any::<bool>()).prop_map(|(gammas, start, count, mc)| Experiment::Lelong(Lelong {
            gammas,
            grid: GeometricGrid { start, ratio: 0.5, count },
            method: if mc { SeriesMethod::MonteCarlo } else { SeriesMethod::Flux },
            ..Default::default()
        })),
        (1e-4f64..0.1, -3.0f64..3.0).prop_map(|(tol, ph)| {
            let mut l = Localize { tolerance: tol, ..Default::default() };
            l.theta.terms[0].phase = ph;
            Experiment::Localize(l)
        }),
        (0.001f64..0.1).prop_map(|t| Experiment::Siu(Siu { spread_tolerance: t, ..Default::default() })),
        Just(Experiment::FullSuite),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(exp in experiment(), seed in any::<u64>(), threads in prop::option::of(1usize..64), tube in 0.01f64..1.0, period in 0.1f64..20.0) {
        let mut cfg = RunConfig::new(exp);
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.model.tube_radius = tube;
        cfg.model.torus_period = period;
        let text = cfg.to_json();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), text);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
