//! Steady and transient error studies over coarse grids and oversampling layers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::basis_decay_profile;
use crate::error::{Result, ResultExt};
use crate::geometry::Layers;
use crate::linalg::{dense_apply, norm2};
use crate::upscale::{row_sum_defect, ErrorReport};

use super::config::ExperimentConfig;
use super::export::{
    decay_csv, export_field, slab_csv, slab_profile, solution_csv, transmissibility_map_csv, triplets_string, write_text,
};
use super::pipeline::Scene;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyRow {
    #[serde(rename = "H")]
    pub h: f64,
    pub layers: Layers,
    pub errors: ErrorReport,
    /// `max |A_T 1| / max |A_T|`
    pub conservation: f64,
    pub max_constraint_residual: f64,
    /// `‖T ū − g‖ / ‖g‖` for the Galerkin operator at the averaged fine solution;
    /// only defined when the coarse unknowns are continuum averages.
    pub galerkin_residual: Option<f64>,
    /// `max |T 1| / max |T|`, the row-sum defect removed by the finite-volume form.
    pub galerkin_row_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransientRow {
    #[serde(rename = "H")]
    pub h: f64,
    pub layers: Layers,
    pub time: f64,
    pub errors: ErrorReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    #[serde(rename = "H")]
    pub h: f64,
    pub layers: Layers,
    pub block: usize,
    pub profile: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub phase: String,
    #[serde(rename = "H")]
    pub h: Option<f64>,
    pub layers: Option<Layers>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub steady: Vec<SteadyRow>,
    pub transient: Vec<TransientRow>,
    pub decay: Vec<DecayRow>,
    pub timings: Vec<Timing>,
}

impl RunReport {
    pub fn steady_csv(&self) -> String {
        let mut out = String::from("H,layers,error_pct,error_matrix_pct,error_fracture_pct\n");
        for r in &self.steady {
            let e = &r.errors;
            let _ = writeln!(out, "{},{},{:.6e},{:.6e},{:.6e}", r.h, r.layers, e.total_pct, e.matrix_pct, e.fracture_pct);
        }
        out
    }

    pub fn transient_csv(&self) -> String {
        let mut out = String::from("H,layers,time,error_pct,error_matrix_pct,error_fracture_pct\n");
        for r in &self.transient {
            let e = &r.errors;
            let _ = writeln!(
                out,
                "{},{},{},{:.6e},{:.6e},{:.6e}",
                r.h, r.layers, r.time, e.total_pct, e.matrix_pct, e.fracture_pct
            );
        }
        out
    }

    fn time(&mut self, phase: &str, h: Option<f64>, layers: Option<Layers>, start: Instant) {
        let seconds = start.elapsed().as_secs_f64();
        log::info!("{phase} (H = {h:?}, layers = {layers:?}): {seconds:.2} s");
        self.timings.push(Timing { phase: phase.into(), h, layers, seconds });
    }
}

/// What a study computes and where it writes.
#[derive(Clone, Debug, Default)]
pub struct StudyPlan {
    pub steady: bool,
    pub transient: bool,
    pub out: Option<PathBuf>,
    /// Write per-case exports (fields, maps, profiles) besides the tables.
    pub details: bool,
}

/// Runs every configured (H, layers) pair.
pub fn run_study(config: &ExperimentConfig, plan: &StudyPlan) -> Result<RunReport> {
    let mut report = RunReport::default();
    let t0 = Instant::now();
    let scene = Scene::new(config.clone())?;
    report.time("setup", None, None, t0);

    let t0 = Instant::now();
    let fine_steady = if plan.steady { Some(scene.fine_steady()?) } else { None };
    report.time("fine_steady", None, None, t0);
    let spec = config.transient.as_ref();
    let fine_transient = match (plan.transient, spec) {
        (true, Some(spec)) => {
            let t0 = Instant::now();
            let states = scene.fine_transient(spec).context(|| "fine transient run".into())?;
            report.time("fine_transient", None, None, t0);
            Some(states)
        }
        (true, None) => {
            return Err(crate::NlmcError::Config { pointer: "/transient".into(), message: "transient spec missing".into() })
        }
        _ => None,
    };

    if let (Some(dir), Some(u)) = (&plan.out, &fine_steady) {
        if plan.details {
            export_field(&scene.mesh, &[("u_fine", u)], &dir.join("fine_steady.vtk"))?;
        }
    }

    for cspec in &config.coarse {
        let t0 = Instant::now();
        let level = scene.level(*cspec)?;
        let h = level.h();
        report.time("coarse_setup", Some(h), None, t0);
        let center = level.coarse.block(level.coarse.nx / 2, level.coarse.ny / 2);

        for &layers in &config.oversampling {
            let ctx = || format!("H = {h}, layers = {layers}");
            let t0 = Instant::now();
            let set = level.bases(layers)?;
            report.time("basis", Some(h), Some(layers), t0);

            let t0 = Instant::now();
            let system = level.upscale(&set, plan.transient).context(ctx)?;
            report.time("assembly", Some(h), Some(layers), t0);

            let center_basis = set
                .bases
                .iter()
                .position(|b| b.block == center && b.continuum == 0)
                .unwrap_or(0);
            report.decay.push(DecayRow {
                h,
                layers,
                block: center,
                profile: basis_decay_profile(&set.bases[center_basis], &level.coarse),
            });

            if let Some(u_f) = &fine_steady {
                let t0 = Instant::now();
                let coeffs = system.steady(config.tolerances.solver).context(ctx)?;
                let u_t = level.coarse_averages(&set, &system, &coeffs)?;
                report.time("coarse_steady", Some(h), Some(layers), t0);
                let errors = level.errors(&u_t, u_f).context(ctx)?;
                let galerkin_residual = system.averages_are_dofs().then(|| {
                    let r: Vec<f64> = dense_apply(&system.transmissibility, &level.average(u_f))
                        .iter()
                        .zip(&system.rhs)
                        .map(|(a, b)| a - b)
                        .collect();
                    let g = norm2(&system.rhs);
                    if g == 0.0 {
                        norm2(&r)
                    } else {
                        norm2(&r) / g
                    }
                });
                report.steady.push(SteadyRow {
                    h,
                    layers,
                    errors,
                    conservation: system.conservation_defect(),
                    max_constraint_residual: set.max_constraint_residual(),
                    galerkin_residual,
                    galerkin_row_sum: row_sum_defect(&system.transmissibility),
                });
                if let (Some(dir), true) = (&plan.out, plan.details) {
                    let case = dir.join(format!("H{h}_L{layers}"));
                    let u_bar = level.average(u_f);
                    write_text(
                        &case.join("solution.csv"),
                        &solution_csv(&level.coarse, &level.continua, level.constraints.measures(), &u_t, &u_bar),
                    )?;
                    let u_ms = set.downscale(&scene.mesh, &coeffs)?;
                    export_field(&scene.mesh, &[("u_ms", &u_ms)], &case.join("downscaled.vtk"))?;
                }
            }

            if let (Some(states), Some(spec)) = (&fine_transient, spec) {
                let t0 = Instant::now();
                let coarse_states = system.transient(spec).context(ctx)?;
                report.time("coarse_transient", Some(h), Some(layers), t0);
                for ((t, u_f), (_, c)) in states.iter().zip(&coarse_states) {
                    let u_t = level.coarse_averages(&set, &system, c)?;
                    let errors = if u_f.iter().all(|v| *v == 0.0) && u_t.iter().all(|v| *v == 0.0) {
                        ErrorReport { total_pct: 0.0, matrix_pct: 0.0, fracture_pct: 0.0, weighted_pct: 0.0 }
                    } else {
                        level.errors(&u_t, u_f).context(|| format!("{}, t = {t}", ctx()))?
                    };
                    report.transient.push(TransientRow { h, layers, time: *t, errors });
                }
            }

            if let (Some(dir), true) = (&plan.out, plan.details) {
                let case = dir.join(format!("H{h}_L{layers}"));
                let t = &system.transmissibility;
                write_text(&case.join("transmissibility_map.csv"), &transmissibility_map_csv(t, &level.coarse, &level.continua, center))?;
                write_text(&case.join("slab.csv"), &slab_csv(&slab_profile(t, &level.coarse, &level.continua, center)))?;
                write_text(&case.join("decay.csv"), &decay_csv(&report.decay.last().unwrap().profile))?;
                write_text(&case.join("a_t.txt"), &triplets_string(&system.operator))?;
            }
        }
    }

    if let Some(dir) = &plan.out {
        if plan.steady {
            write_text(&dir.join("steady_errors.csv"), &report.steady_csv())?;
        }
        if plan.transient {
            write_text(&dir.join("transient_errors.csv"), &report.transient_csv())?;
        }
        let json = serde_json::to_string_pretty(&report).map_err(|e| crate::NlmcError::InvalidArgument(e.to_string()))?;
        write_text(&dir.join("report.json"), &json)?;
    }
    Ok(report)
}

pub fn run_steady_study(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunReport> {
    run_study(config, &StudyPlan { steady: true, transient: false, out: out.map(Path::to_path_buf), details: true })
}

pub fn run_transient_study(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunReport> {
    run_study(config, &StudyPlan { steady: false, transient: true, out: out.map(Path::to_path_buf), details: false })
}
