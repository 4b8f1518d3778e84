use nabla_calc::scenario::*;
use nabla_calc::Error;
use std::process::Command;

const SMALL: &str = r#"{
  "name": "small",
  "chart": { "lower": [-1, -1], "upper": [1, 1], "points": 65, "interior_only": true },
  "bundle": "magnetic-example",
  "checks": [
    { "id": "leibniz", "kind": "leibniz", "trials": 2, "tolerance": 5e-2 },
    { "id": "coverings", "kind": "covering-bounds", "coverings": 4 },
    { "id": "closed-forms", "kind": "magnetic-closed-form", "trials": 1, "tolerance": 5e-2 }
  ],
  "seed": 3
}"#;

fn small() -> Scenario {
    Scenario::from_json(SMALL).unwrap()
}

fn with_checks(checks: &str) -> Scenario {
    let src = SMALL.replace(&SMALL[SMALL.find("\"checks\"").unwrap()..SMALL.find("\"seed\"").unwrap()], &format!("\"checks\": {checks},\n  "));
    Scenario::from_json(&src).unwrap()
}

#[test]
fn builtins_are_listed_and_parse() {
    let names: Vec<&str> = builtins().iter().map(|(n, _)| *n).collect();
    assert_eq!(names, ["magnetic-example", "sphere-ffc"]);
    for n in names {
        let s = builtin(n).unwrap();
        assert_eq!(s.name, n);
        assert!(!s.checks.is_empty());
    }
    assert!(matches!(builtin("torus"), Err(Error::Resolution(_))));
}

#[test]
fn empty_check_list_gives_an_empty_passing_report() {
    let s = with_checks("[]");
    let run = run_scenario(&s).unwrap();
    assert!(run.report.passed);
    assert!(run.report.rows.is_empty());
    let csv = run.report.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("scenario,id,kind,digest,measured"));
}

#[test]
fn reports_are_byte_identical_and_round_trip() {
    let s = small();
    let a = run_scenario(&s).unwrap();
    let b = run_scenario(&s).unwrap();
    assert!(a.report.passed, "{:?}", a.report);
    assert_eq!(a.runtime_ms.len(), 3);
    for f in [Format::Csv, Format::Json] {
        assert_eq!(a.report.render(f).unwrap(), b.report.render(f).unwrap());
    }
    let back = Report::from_json(&a.report.to_json().unwrap()).unwrap();
    assert_eq!(back, a.report);
    let csv = a.report.to_csv().unwrap();
    assert_eq!(csv.lines().count() - 1, s.checks.len());
    let ids: Vec<&str> = a.report.rows.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["leibniz", "coverings", "closed-forms"]);
}

#[test]
fn digests_track_inputs() {
    let a = run_scenario(&small()).unwrap().report;
    let mut s = small();
    s.seed = 4;
    let b = run_scenario(&s).unwrap().report;
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.digest.len(), 16);
        assert_ne!(x.digest, y.digest);
    }
}

#[test]
fn scenario_json_round_trips() {
    for n in ["magnetic-example", "sphere-ffc"] {
        let s = builtin(n).unwrap();
        let again = Scenario::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(again, s);
    }
}

#[test]
fn overrides_change_grid_order_and_seed() {
    let mut s = small();
    s.apply(&Overrides { h: Some(0.05), fd_order: Some(2), seed: Some(9) });
    let g = s.grid().unwrap();
    assert_eq!(g.shape(), &[41, 41]);
    assert_eq!(s.seed, 9);
    assert_eq!(s.chart.fd_order, 2);
}

#[test]
fn schema_errors_are_config_errors() {
    let bad = [
        SMALL.replace("\"leibniz\", \"trials\"", "\"laplace\", \"trials\""),
        SMALL.replace("\"points\": 65", "\"points\": 65, \"h\": 0.1"),
        SMALL.replace("\"trials\": 1, \"tolerance\": 5e-2", "\"trials\": 1, \"tolerance\": -1"),
        SMALL.replace("\"id\": \"coverings\"", "\"id\": \"leibniz\""),
        SMALL.replace("\"interior_only\"", "\"fd_order\": 3, \"interior_only\""),
        SMALL.replace("\"seed\": 3", "\"seed\": 3, \"colour\": 1"),
    ];
    for src in bad {
        assert!(matches!(Scenario::from_json(&src), Err(Error::Config(_))), "{src}");
    }
}

#[test]
fn unknown_names_are_resolution_errors() {
    for (field, value) in [("bundle", "\"moebius\""), ("metric", "\"hyperbolic\""), ("embedding", "\"torus-ambient\"")] {
        let src = SMALL.replace("\"seed\": 3", &format!("\"seed\": 3, \"{field}\": {value}")).replace("\"bundle\": \"magnetic-example\",", if field == "bundle" { "" } else { "\"bundle\": \"magnetic-example\"," });
        let s = Scenario::from_json(&src).unwrap();
        assert!(matches!(run_scenario(&s), Err(Error::Resolution(_))), "{field}");
    }
    let s = with_checks(r#"[{ "id": "d", "kind": "divergence-duality", "bidiff": "nope" }]"#);
    match run_scenario(&s) {
        Err(Error::Check { check, source }) => {
            assert_eq!(check, "d");
            assert!(matches!(*source, Error::Resolution(_)));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn expression_configured_geometry_and_operators() {
    let src = r#"{
      "name": "expressions",
      "chart": { "lower": [-1, -1], "upper": [1, 1], "points": 65, "interior_only": true },
      "metric": { "conformal": "1 + 0.1*x1*x2" },
      "bundle": { "rank": 1, "potentials": [["i*0.3*x2"], ["-i*0.3*x1"]] },
      "embedding": "identity",
      "weight": { "rho": "2 + 0.2*x1", "f0": "1" },
      "operators": [
        { "name": "p", "form": "nabla", "terms": [ { "order": 0, "coefficient": ["1"] }, { "order": 1, "coefficient": ["x1", "cos(x2)"] } ] },
        { "name": "m", "form": "mixed", "fields": "generators", "terms": [ { "fields": [1, 0], "coefficient": ["1 + x1^2"] }, { "fields": [0], "coefficient": ["i"] } ] }
      ],
      "bidiffs": [
        { "name": "b", "order": 1, "entries": [
          { "i": 0, "j": 0, "coefficient": ["1"] },
          { "i": 1, "j": 1, "coefficient": ["1", "0", "0", "1 + 0.5*sin(x1)"] }
        ] }
      ],
      "checks": [
        { "id": "rewrite", "kind": "operator-round-trip", "operator": "m", "specs": 2 },
        { "id": "duality", "kind": "divergence-duality", "bidiff": "b", "pairs": 2, "tolerance": 1e-4 },
        { "id": "weighted", "kind": "weighted-duality", "bidiff": "b", "pairs": 2, "tolerance": 1e-3 },
        { "id": "identities", "kind": "generator-identities", "trials": 2 },
        { "id": "order", "kind": "convergence", "of": { "kind": "grid-divergence", "trials": 1 } }
      ],
      "seed": 11
    }"#;
    let s = Scenario::from_json(src).unwrap();
    let run = run_scenario(&s).unwrap();
    for r in &run.report.rows {
        assert!(r.passed, "{r:?}");
    }
}

#[test]
fn mapping_bound_on_a_configured_operator() {
    let src = r#"{
      "name": "mapping",
      "chart": { "lower": [-1, -1], "upper": [1, 1], "points": 65, "margin": 6 },
      "operators": [ { "name": "p", "form": "nabla", "terms": [ { "order": 1, "coefficient": ["x1", "1"] } ] } ],
      "checks": [ { "id": "bound", "kind": "mapping-bound", "operator": "p", "k": 1, "trials": 3 } ]
    }"#;
    let run = run_scenario(&Scenario::from_json(src).unwrap()).unwrap();
    assert!(run.report.passed, "{:?}", run.report);
}

#[test]
fn failing_tolerance_fails_the_report_without_error() {
    let s = with_checks(r#"[{ "id": "tight", "kind": "leibniz", "trials": 1, "tolerance": 1e-30 }]"#);
    let run = run_scenario(&s).unwrap();
    assert!(!run.report.passed);
    assert!(!run.report.rows[0].passed);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nabla-calc"))
}

fn write_scenario(dir: &std::path::Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn cli_exit_codes_and_outputs() {
    let dir = std::env::temp_dir().join(format!("nabla-calc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let good = write_scenario(&dir, "good.json", SMALL);
    let out = dir.join("out");

    let st = bin().args(["run", "--scenario"]).arg(&good).arg("--out").arg(&out).args(["--format", "json"]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let first = std::fs::read(out.join("small.json")).unwrap();
    let st = bin().args(["run", "--scenario"]).arg(&good).arg("--out").arg(&out).args(["--format", "json"]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert_eq!(first, std::fs::read(out.join("small.json")).unwrap());
    assert_eq!(Report::from_json(std::str::from_utf8(&first).unwrap()).unwrap().rows.len(), 3);

    let o = bin().args(["run", "--scenario"]).arg(&good).args(["--fd-order", "2", "--h", "0.0625"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(1).unwrap().contains(",33x33,2,"));

    let tight = write_scenario(&dir, "tight.json", &SMALL.replace("\"trials\": 1, \"tolerance\": 5e-2", "\"trials\": 1, \"tolerance\": 1e-30"));
    assert_eq!(bin().args(["run", "--scenario"]).arg(&tight).output().unwrap().status.code(), Some(1));

    let broken = write_scenario(&dir, "broken.json", "{ \"name\": 1 }");
    assert_eq!(bin().args(["run", "--scenario"]).arg(&broken).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["run", "--scenario"]).arg(dir.join("missing.json")).output().unwrap().status.code(), Some(2));
    let threads = bin().env("NABLA_CALC_THREADS", "zero").args(["run", "--scenario"]).arg(&good).output().unwrap();
    assert_eq!(threads.status.code(), Some(2));
    let one = bin().env("NABLA_CALC_THREADS", "1").args(["run", "--scenario"]).arg(&good).output().unwrap();
    assert_eq!(one.status.code(), Some(0));

    let list = bin().args(["run", "--list-builtins"]).output().unwrap();
    assert_eq!(list.status.code(), Some(0));
    let text = String::from_utf8(list.stdout).unwrap();
    assert!(text.contains("magnetic-example") && text.contains("sphere-ffc"));
    std::fs::remove_dir_all(&dir).unwrap();
}
