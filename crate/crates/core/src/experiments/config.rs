//! Scene and study configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_path_to_error::Segment;

use crate::basis::BoundaryPolicy;
use crate::error::{NlmcError, Result};
use crate::fem::DofScaling;
use crate::geometry::Layers;
use crate::upscale::RhsMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub fine: FineSpec,
    pub coarse: Vec<CoarseSpec>,
    #[serde(default)]
    pub kappa_matrix: KappaSpec,
    #[serde(default)]
    pub fractures: Vec<FractureSpec>,
    #[serde(default)]
    pub sources: Vec<SourceBox>,
    pub oversampling: Vec<Layers>,
    #[serde(default)]
    pub transient: Option<TransientSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub options: Options,
    /// Directory holding the config file; relative file references resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineSpec {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseSpec {
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Ny")]
    pub ny: usize,
}

/// Matrix permeability: one value, or a whitespace-separated cellwise file
/// (x fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaSpec {
    Scalar(f64),
    File { file: PathBuf },
}

impl Default for KappaSpec {
    fn default() -> Self {
        KappaSpec::Scalar(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractureSpec {
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub conductivity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceBox {
    /// `[x0, x1, y0, y1]`
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub value: f64,
}

impl SourceBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [x0, x1, y0, y1] = self.bbox;
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransientSpec {
    pub dt: f64,
    pub t_end: f64,
    pub report_times: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative residual of steady solves and source compatibility.
    pub solver: f64,
    /// Saddle-point residual of the local basis problems.
    pub constraint: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { solver: 1e-10, constraint: 1e-9 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    #[default]
    Simplified,
    Spectral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    pub basis: BasisKind,
    pub bc_policy: BoundaryPolicy,
    pub rhs: RhsMode,
    pub dof_scaling: DofScaling,
    /// Aperture of the fracture storage term in the mass matrix; none by default.
    pub fracture_aperture: Option<f64>,
    /// Fixed number of auxiliary modes per block for the spectral basis;
    /// defaults to one per continuum, extended until the modes resolve the
    /// block's continuum means.
    pub aux_modes: Option<usize>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            basis: BasisKind::Simplified,
            bc_policy: BoundaryPolicy::default(),
            rhs: RhsMode::default(),
            dof_scaling: DofScaling::default(),
            fracture_aperture: None,
            aux_modes: None,
        }
    }
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

fn invalid(pointer: &str, message: impl Into<String>) -> NlmcError {
    NlmcError::Config { pointer: pointer.into(), message: message.into() }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| invalid(&pointer(e.path()), e.inner().to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let DomainSpec { lx, ly } = self.domain;
        if !(lx > 0.0 && ly > 0.0) {
            return Err(invalid("/domain", "domain lengths must be positive"));
        }
        if self.fine.nx == 0 || self.fine.ny == 0 {
            return Err(invalid("/fine", "cell counts must be positive"));
        }
        if self.coarse.is_empty() {
            return Err(invalid("/coarse", "at least one coarse grid is required"));
        }
        for (k, c) in self.coarse.iter().enumerate() {
            if c.nx == 0 || c.ny == 0 || self.fine.nx % c.nx != 0 || self.fine.ny % c.ny != 0 {
                return Err(invalid(&format!("/coarse/{k}"), "coarse grid must evenly divide the fine grid"));
            }
        }
        if self.oversampling.is_empty() {
            return Err(invalid("/oversampling", "layer list must not be empty"));
        }
        for (k, w) in self.oversampling.windows(2).enumerate() {
            if w[0] >= w[1] {
                return Err(invalid(&format!("/oversampling/{}", k + 1), "layer list must be strictly ascending"));
            }
        }
        if self.oversampling.contains(&Layers::Count(0)) {
            return Err(invalid("/oversampling/0", "at least one oversampling layer is required"));
        }
        if let KappaSpec::Scalar(k) = self.kappa_matrix {
            if !(k > 0.0) {
                return Err(invalid("/kappa_matrix", "permeability must be positive"));
            }
        }
        for (k, f) in self.fractures.iter().enumerate() {
            if !(f.conductivity > 0.0) {
                return Err(invalid(&format!("/fractures/{k}/conductivity"), "conductivity must be positive"));
            }
        }
        for (k, s) in self.sources.iter().enumerate() {
            let [x0, x1, y0, y1] = s.bbox;
            if !(x0 < x1 && y0 < y1) {
                return Err(invalid(&format!("/sources/{k}/box"), "box must satisfy x0 < x1 and y0 < y1"));
            }
        }
        self.check_source_balance()?;
        if let Some(t) = &self.transient {
            if !(t.dt > 0.0 && t.t_end > 0.0) {
                return Err(invalid("/transient", "dt and t_end must be positive"));
            }
            if let Some(k) = t.report_times.iter().position(|&r| r < 0.0 || r > t.t_end) {
                return Err(invalid(&format!("/transient/report_times/{k}"), "report time outside [0, t_end]"));
            }
        }
        if self.tolerances.solver <= 0.0 || self.tolerances.constraint <= 0.0 {
            return Err(invalid("/tolerances", "tolerances must be positive"));
        }
        Ok(())
    }

    /// `∫ g` over the domain must vanish for the pure-Neumann problem.
    fn check_source_balance(&self) -> Result<()> {
        let DomainSpec { lx, ly } = self.domain;
        let (mut total, mut l1) = (0.0, 0.0);
        for s in &self.sources {
            let [x0, x1, y0, y1] = s.bbox;
            let area = (x1.min(lx) - x0.max(0.0)).max(0.0) * (y1.min(ly) - y0.max(0.0)).max(0.0);
            total += s.value * area;
            l1 += s.value.abs() * area;
        }
        let tol = self.tolerances.solver * l1;
        if total.abs() > tol {
            return Err(NlmcError::IncompatibleSource { imbalance: total, tolerance: tol });
        }
        Ok(())
    }

    pub fn load_kappa(&self) -> Result<Vec<f64>> {
        let n = self.fine.nx * self.fine.ny;
        match &self.kappa_matrix {
            KappaSpec::Scalar(k) => Ok(vec![*k; n]),
            KappaSpec::File { file } => {
                let path = self.base_dir.join(file);
                let text = std::fs::read_to_string(&path)?;
                let vals = text
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| invalid("/kappa_matrix/file", format!("{}: {e}", path.display()))))
                    .collect::<Result<Vec<f64>>>()?;
                if vals.len() != n {
                    return Err(invalid("/kappa_matrix/file", format!("expected {n} values, found {}", vals.len())));
                }
                Ok(vals)
            }
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    ExperimentConfig::from_json(&text, &base)
}
