#![allow(dead_code)]

use std::path::Path;

use faer::Mat;
use nlmc::experiments::config::ExperimentConfig;
use nlmc::experiments::Scene;

/// 40×40 fine / 4×4 coarse scene with three fractures and a block-aligned dipole source.
pub const TOY: &str = r#"{
  "domain": { "Lx": 1.0, "Ly": 1.0 },
  "fine": { "nx": 40, "ny": 40 },
  "coarse": [ { "Nx": 4, "Ny": 4 } ],
  "fractures": [
    { "p0": [0.1, 0.35], "p1": [0.85, 0.35], "conductivity": 100.0 },
    { "p0": [0.6, 0.1], "p1": [0.6, 0.9], "conductivity": 100.0 },
    { "p0": [0.15, 0.6], "p1": [0.35, 0.8], "conductivity": 100.0 }
  ],
  "sources": [
    { "box": [0.0, 0.25, 0.25, 0.5], "value": 1.0 },
    { "box": [0.0, 0.25, 0.5, 0.75], "value": -1.0 }
  ],
  "oversampling": [1, 2, "global"],
  "transient": { "dt": 0.01, "t_end": 0.2, "report_times": [0.1, 0.2] }
}"#;

pub fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text, Path::new(".")).unwrap()
}

pub fn toy_scene() -> Scene {
    Scene::new(config(TOY)).unwrap()
}

pub fn dense_from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Mat<f64> {
    Mat::from_fn(n, n, f)
}

pub fn max_abs(a: &Mat<f64>) -> f64 {
    let mut m = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}
