use econ::metrics::{
    constraint_violation, emit_summary, emit_trace, moreau_gradient_norm, read_trace, stationarity_violation,
    write_trace, Record, RunSummary, RunTrace, TRACE_HEADER,
};
use econ::oracle::true_constraints;
use econ::penalty::PenaltyConfig;
use econ::problems::{build_example_1d, build_synthetic_quadratic, Objective1d};
use econ::Error;
use proptest::prelude::*;

fn record() -> impl Strategy<Value = Record> {
    (
        any::<u64>(),
        -1e6..1e6f64,
        -1e6..1e6f64,
        0.0..1e3f64,
        prop::option::of(0.0..10.0f64),
        0.0..1e6f64,
        0.0..1e6f64,
        0.0..1e9f64,
    )
        .prop_map(|(k, alpha, fv, cvio, svio, dp_f, dp_g, wall_ms)| Record { k, alpha, fv, cvio, svio, dp_f, dp_g, wall_ms })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trace_round_trips_exactly(records in prop::collection::vec(record(), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = RunTrace { records };
        emit_trace(&trace, &path).unwrap();
        prop_assert_eq!(read_trace(&path).unwrap(), trace);
    }
}

#[test]
fn trace_layout() {
    let trace = RunTrace {
        records: vec![Record { k: 3, alpha: 0.01, fv: 2.0, cvio: 0.0, svio: None, dp_f: 1.5, dp_g: 3.0, wall_ms: 0.0 }],
    };
    let mut buf = Vec::new();
    write_trace(&trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    assert_eq!(
        lines.next(),
        Some("3,1.0000000000000000e-2,2.0000000000000000e0,0.0000000000000000e0,,1.5000000000000000e0,3.0000000000000000e0,0.0000000000000000e0")
    );
    assert_eq!(lines.next(), None);
}

#[test]
fn malformed_traces_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, "k,alpha\n1,2\n").unwrap();
    assert!(matches!(read_trace(&path), Err(Error::Format { .. })));
    std::fs::write(&path, format!("{TRACE_HEADER}\n1,x,0,0,,0,0,0\n")).unwrap();
    let e = read_trace(&path).unwrap_err().to_string();
    assert!(e.contains("alpha"), "{e}");
    assert!(read_trace(&dir.path().join("missing.csv")).is_err());
}

#[test]
fn summary_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.json");
    let s = RunSummary {
        seed: 7,
        stop: "budget".into(),
        iterations: 12,
        last: None,
        config: serde_json::json!({ "beta": 10.0 }),
        extra: serde_json::Value::Null,
    };
    emit_summary(&s, &path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["config"]["beta"], 10.0);
    assert_eq!(v["stop"], "budget");
}

#[test]
fn violation_examples() {
    assert_eq!(constraint_violation(&[-1.0, 2.0, 0.5]), 2.5);
    assert_eq!(constraint_violation(&[-1.0, -2.0]), 0.0);
    let nu = 1e-3;
    assert_eq!(constraint_violation(&[nu, nu]), 2.0 * nu);
}

#[test]
fn stationarity_on_the_quadratic() {
    let p = build_synthetic_quadratic(None).unwrap();
    let tol = 1e-2;
    assert!(stationarity_violation(&p, &[1.0, 1.0], tol).unwrap() <= 2.0 * tol);
    // The subproblem is the original problem here, whose solution is (1, 1).
    let s = stationarity_violation(&p, &[0.0, 0.0], tol).unwrap();
    assert!((s - 2f64.sqrt()).abs() <= 2.0 * tol, "{s}");
}

#[test]
fn stationarity_on_the_cubic_instance() {
    let p = build_example_1d(Objective1d::Linear { slope: 1.0 }).unwrap();
    let tol = 1e-2;
    for c in [0.3, 0.5, 0.8] {
        let n = 200_000;
        let mut best = (f64::INFINITY, c);
        for i in 0..=n {
            let x = i as f64 / n as f64;
            let g = true_constraints(&p, &[x]).unwrap()[0] + 4.0 * (x - c) * (x - c);
            if g <= 0.0 && x < best.0 {
                best = (x, x);
            }
        }
        let s = stationarity_violation(&p, &[c], tol).unwrap();
        assert!((s - (c - best.1).abs()).abs() <= 2.0 * tol, "center {c}: {s}");
    }
}

#[test]
fn moreau_gradient_of_a_quadratic() {
    // Near 0.3 the constraint is far from active, so the envelope is that of
    // (z - 0.2)^2 with rho = beta * 4.
    let p = build_example_1d(Objective1d::Quadratic { target: 0.2 }).unwrap();
    let cfg = PenaltyConfig::new(10.0, 1e-3).unwrap();
    let rho: f64 = 40.0;
    for x in [0.1, 0.25, 0.3] {
        let z = (0.2 + rho * x) / (1.0 + rho);
        let want = 2.0 * rho * (x - z).abs();
        let got = moreau_gradient_norm(&p, &cfg, &[x]).unwrap();
        assert!((got - want).abs() < 1e-6, "x {x}: {got} vs {want}");
    }
    assert!(moreau_gradient_norm(&p, &cfg, &[0.2]).unwrap() < 1e-6);
}

#[test]
fn moreau_gradient_vanishes_at_the_penalized_minimiser() {
    let p = build_example_1d(Objective1d::Linear { slope: -1.0 }).unwrap();
    let cfg = PenaltyConfig::new(10.0, 1e-3).unwrap();
    let n = 1_000_000;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let x = i as f64 / n as f64;
        let v = econ::penalty::exact_penalized(&p, &cfg, &[x]).unwrap();
        if v < best.0 {
            best = (v, x);
        }
    }
    let g = moreau_gradient_norm(&p, &cfg, &[best.1]).unwrap();
    assert!(g <= 2.0 * 40.0 * 2e-6, "{g}");
    assert!(moreau_gradient_norm(&build_synthetic_quadratic(None).unwrap(), &cfg, &[0.0, 0.0]).is_err());
}
