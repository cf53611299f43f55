use std::path::{Path, PathBuf};

use nlmc::experiments::config::{parse_config, ExperimentConfig, KappaSpec};
use nlmc::experiments::Scene;
use nlmc::geometry::Layers;
use nlmc::NlmcError;

fn benchmark_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes/benchmark.json")
}

const MINIMAL: &str = r#"{
  "domain": { "Lx": 1.0, "Ly": 1.0 },
  "fine": { "nx": 20, "ny": 20 },
  "coarse": [ { "Nx": 4, "Ny": 4 } ],
  "oversampling": [1, "global"]
}"#;

fn parse(text: &str) -> Result<ExperimentConfig, NlmcError> {
    ExperimentConfig::from_json(text, Path::new("."))
}

#[test]
fn minimal_matrix_only_scene() {
    let cfg = parse(MINIMAL).unwrap();
    assert_eq!(cfg.kappa_matrix, KappaSpec::Scalar(1.0));
    assert_eq!(cfg.oversampling, vec![Layers::Count(1), Layers::Global]);
    assert!(cfg.transient.is_none());
    assert_eq!(cfg.tolerances.solver, 1e-10);
    let scene = Scene::new(cfg).unwrap();
    let level = scene.level(scene.config.coarse[0]).unwrap();
    assert_eq!(level.continua.len(), 16);
    assert!((0..16).all(|b| level.continua.fracture_count(b) == 0));
}

#[test]
fn benchmark_scene_matches_reference_setup() {
    let cfg = parse_config(&benchmark_path()).unwrap();
    assert_eq!((cfg.fine.nx, cfg.fine.ny), (200, 200));
    assert_eq!(cfg.kappa_matrix, KappaSpec::Scalar(1.0));
    assert!(cfg.fractures.iter().all(|f| f.conductivity == 1e2));
    let mut values: Vec<f64> = cfg.sources.iter().map(|s| s.value).collect();
    values.sort_by(f64::total_cmp);
    assert_eq!(values, vec![-1e2, 1e2]);
    let pos = cfg.sources.iter().find(|s| s.value > 0.0).unwrap();
    assert_eq!(pos.bbox, [0.0, 0.2, 0.3, 0.4]);
    let neg = cfg.sources.iter().find(|s| s.value < 0.0).unwrap();
    assert_eq!(neg.bbox, [0.0, 0.2, 0.7, 0.8]);
    let t = cfg.transient.as_ref().unwrap();
    assert_eq!(t.report_times, vec![0.1, 0.5, 1.0]);
    assert_eq!(*cfg.oversampling.last().unwrap(), Layers::Global);
}

#[test]
fn unbalanced_sources_rejected() {
    let text = MINIMAL.replace(
        r#""oversampling""#,
        r#""sources": [ { "box": [0.0, 0.2, 0.0, 0.2], "value": 1.0 } ], "oversampling""#,
    );
    assert!(matches!(parse(&text), Err(NlmcError::IncompatibleSource { .. })));
}

fn pointer_of(text: &str) -> String {
    match parse(text) {
        Err(NlmcError::Config { pointer, .. }) => pointer,
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn schema_errors_carry_json_pointer() {
    assert_eq!(pointer_of(&MINIMAL.replace(r#""Nx": 4"#, r#""Nx": "four""#)), "/coarse/0/Nx");
    assert_eq!(pointer_of(&MINIMAL.replace(r#"[1, "global"]"#, r#"["global", 1]"#)), "/oversampling/1");
    assert_eq!(pointer_of(&MINIMAL.replace(r#""Nx": 4"#, r#""Nx": 3"#)), "/coarse/0");
    assert_eq!(pointer_of(&MINIMAL.replace(r#"[1, "global"]"#, "[]")), "/oversampling");
    let unknown = MINIMAL.replace(r#""fine""#, r#""bogus": 1, "fine""#);
    assert!(matches!(parse(&unknown), Err(NlmcError::Config { .. })));
}

#[test]
fn kappa_file_is_resolved_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let n = 4 * 4;
    let values: Vec<String> = (0..n).map(|k| format!("{}", 1.0 + k as f64)).collect();
    std::fs::write(dir.path().join("kappa.txt"), values.join(" ")).unwrap();
    let text = r#"{
      "domain": { "Lx": 1.0, "Ly": 1.0 },
      "fine": { "nx": 4, "ny": 4 },
      "coarse": [ { "Nx": 2, "Ny": 2 } ],
      "kappa_matrix": { "file": "kappa.txt" },
      "oversampling": ["global"]
    }"#;
    let path = dir.path().join("scene.json");
    std::fs::write(&path, text).unwrap();
    let cfg = parse_config(&path).unwrap();
    let kappa = cfg.load_kappa().unwrap();
    assert_eq!(kappa.len(), n);
    assert_eq!(kappa[5], 6.0);

    std::fs::write(dir.path().join("kappa.txt"), "1 2 3").unwrap();
    assert!(matches!(cfg.load_kappa(), Err(NlmcError::Config { .. })));
}
