use chainlab_core::chain_engine::ChainGraph;
use chainlab_core::lab::{
    convergence_study, emit_plot_data, read_points, run_batch, run_scenario, write_study_csv, Scenario, ScenarioFile,
};
use chainlab_core::models::PresetLibrary;

fn lib() -> PresetLibrary {
    PresetLibrary::builtin()
}

#[test]
fn periodic_product_scenario_closes_for_each_k() {
    let mut s = Scenario::periodic("p", "product", [0.13, 0.58, 0.4], vec![10, 20, 40], 3);
    s.resolution = 16;
    let r = run_scenario(&lib(), &s).unwrap();
    assert!(r.passed(), "{:?}", r.failures);
    assert_eq!(r.results.len(), 3);
    for k in &r.results {
        assert!(k.tau.abs() <= 1.0 / k.k as f64);
        assert!(k.periodic_residual.unwrap() < 1e-10);
    }
}

#[test]
fn unknown_preset_is_an_error() {
    let s = Scenario::walk("bad", "mystery", [0.1, 0.2, 0.3], vec![10], 1);
    assert!(run_scenario(&lib(), &s).unwrap_err().to_string().contains("mystery"));
}

#[test]
fn scenario_file_parses() {
    let text = r#"
[[scenario]]
id = "a"
preset = "nonlinear"
x = [0.1, 0.2, 0.3]
ks = [10, 20]
seed = 4
target = { kind = "walk", min_len = 5, max_len = 9 }

[[scenario]]
id = "b"
preset = "product"
x = [0.5, 0.5, 0.5]
ks = [10]
resolution = 16
target = { kind = "point", y = [0.5, 0.5, 0.9] }
"#;
    let f = ScenarioFile::parse(text).unwrap();
    assert_eq!(f.scenario.len(), 2);
    assert_eq!(f.scenario[0].resolution, 64);
    assert_eq!(f.scenario[1].resolution, 16);
    assert!(ScenarioFile::parse("[[scenario]]\nid = 3").is_err());
}

#[test]
fn study_bound_halves_as_k_doubles() {
    let s = Scenario::walk("w", "product", [0.3, 0.7, 0.2], vec![10, 20, 40, 80], 9);
    let (record, rows) = convergence_study(&lib(), &s).unwrap();
    assert!(record.passed(), "{:?}", record.failures);
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        assert!((w[0].bound / w[1].bound - 2.0).abs() < 1e-12);
    }
    for r in &rows {
        assert!(r.tau.abs() <= 1.0 / r.k as f64 && r.margin > 0.0);
    }
    let mut csv = Vec::new();
    write_study_csv(&rows, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    let short = Scenario::walk("w", "product", [0.3, 0.7, 0.2], vec![10, 20], 9);
    assert!(convergence_study(&lib(), &short).is_err());
}

#[test]
fn seeded_walks_have_positive_margin() {
    let scenarios: Vec<Scenario> = (0..20)
        .map(|i| {
            let f = i as f64 / 20.0;
            Scenario::walk(&format!("w{i}"), "nonlinear", [f, 0.5 * f + 0.1, 1.0 - f], vec![10, 20], i)
        })
        .collect();
    for r in run_batch(&lib(), &scenarios) {
        let r = r.unwrap();
        assert!(r.passed(), "{}: {:?}", r.scenario.id, r.failures);
        assert!(r.results.iter().all(|k| k.margin() > 0.0));
    }
}

#[test]
fn plot_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::walk("w", "nonlinear", [0.2, 0.6, 0.4], vec![10, 20, 40], 5);
    let r = run_scenario(&lib(), &s).unwrap();
    let g = ChainGraph::build(&lib().get("product").unwrap().system, 16, 0.12).unwrap();
    let classes = g.chain_recurrent_classes();
    let files = emit_plot_data(&r, dir.path(), Some((g.grid(), &classes))).unwrap();
    let tau = read_points(&files.tau).unwrap();
    let dist = read_points(&files.distances).unwrap();
    assert_eq!(tau.len(), 3);
    assert_eq!(dist.len(), 3);
    for (row, k) in tau.iter().zip(&r.results) {
        assert!((row[0] - (k.k as f64).log10()).abs() < 1e-12);
        assert!((row[1] - k.tau.abs().log10()).abs() < 1e-12 || k.tau == 0.0);
    }
    let text = std::fs::read_to_string(files.classes.unwrap()).unwrap();
    assert_eq!(text.lines().count() - 1, g.grid().box_count());
}

#[test]
fn identical_scenarios_give_identical_records() {
    let s = Scenario::walk("w", "tilted", [0.4, 0.3, 0.9], vec![10, 20], 77);
    let a = run_scenario(&lib(), &s).unwrap();
    let b = run_scenario(&lib(), &s).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn cross_class_target_is_not_attempted() {
    let s = Scenario::point("x", "two-circle", [0.3, 0.6, 0.5], [0.7, 0.2, 0.0], vec![10], 1);
    let r = run_scenario(&lib(), &s).unwrap();
    assert!(!r.attainable);
    assert!(r.results.is_empty());
    assert_eq!(r.failures.len(), 1);
    assert_eq!(r.failures[0].stage, "chain-graph");
    assert!(r.failures[0].message.contains("not chain attainable"));
}
