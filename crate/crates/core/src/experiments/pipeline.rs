//! Scene assembly and the per-(H, layers) upscaling pipeline.

use faer::Mat;

use crate::basis::{BasisBuilder, BasisOptions, BasisSet};
use crate::error::{NlmcError, Result, ResultExt};
use crate::fem::{
    assemble_mass, assemble_stiffness, averaging_matrix, check_compatibility, load_cellwise, nodal_weights,
    solve_fine_steady, ConstraintMatrix, FineTransient, MassOptions,
};
use crate::geometry::{check_blocks, enumerate_continua, CoarseGrid, ContinuumIndex, FineMesh, FractureNetwork, Layers};
use crate::linalg::{solve_gauged_dense, SparseOperator};
use crate::spectral::{build_auxiliary_spaces, AuxiliarySpace, CemBuilder};
use crate::upscale::{
    assemble_coarse_mass, assemble_transmissibility, coarse_gauge, coarse_rhs, error_report, finite_volume_correct,
    report_steps, row_sum_defect, solve_transient, solve_upscaled_steady, ErrorReport,
};

use super::config::{BasisKind, CoarseSpec, ExperimentConfig, TransientSpec};

/// Fine-scale problem built from a config.
pub struct Scene {
    pub config: ExperimentConfig,
    pub mesh: FineMesh,
    pub fractures: FractureNetwork,
    pub kappa: Vec<f64>,
    pub stiffness: SparseOperator,
    pub mass: SparseOperator,
    /// Source value per fine cell.
    pub source_cells: Vec<f64>,
    /// Fine load vector `∫ g φ_n`.
    pub load: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Scene {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let mesh = FineMesh::new(config.fine.nx, config.fine.ny, config.domain.lx, config.domain.ly)?;
        let mut fractures = FractureNetwork::new();
        for (k, f) in config.fractures.iter().enumerate() {
            fractures
                .add_segment(&mesh, f.p0, f.p1, f.conductivity)
                .context(|| format!("fracture {k}"))?;
        }
        let kappa = config.load_kappa()?;
        let stiffness = assemble_stiffness(&mesh, &fractures, &kappa)?;
        let mass = assemble_mass(&mesh, &fractures, MassOptions { fracture_aperture: config.options.fracture_aperture });
        let source_cells: Vec<f64> = (0..mesh.n_cells())
            .map(|c| {
                let [x, y] = mesh.cell_center(c);
                config.sources.iter().filter(|s| s.contains(x, y)).map(|s| s.value).sum()
            })
            .collect();
        let load = load_cellwise(&mesh, &source_cells);
        check_compatibility(&load, config.tolerances.solver).context(|| "discretized source".into())?;
        let weights = nodal_weights(&mesh);
        Ok(Self { config, mesh, fractures, kappa, stiffness, mass, source_cells, load, weights })
    }

    pub fn fine_steady(&self) -> Result<Vec<f64>> {
        solve_fine_steady(&self.stiffness, &self.load, &self.weights, self.config.tolerances.solver)
            .context(|| "fine steady solve".into())
    }

    /// Fine backward-Euler states at the report times, starting from zero.
    pub fn fine_transient(&self, spec: &TransientSpec) -> Result<Vec<(f64, Vec<f64>)>> {
        let (total, steps) = report_steps(spec.dt, spec.t_end, &spec.report_times)?;
        let stepper = FineTransient::new(&self.stiffness, &self.mass, spec.dt)?;
        let mut u = vec![0.0; self.mesh.n_nodes()];
        let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
        for (&t, &s) in spec.report_times.iter().zip(&steps) {
            if s == 0 {
                out.push((t, u.clone()));
            }
        }
        for n in 1..=total {
            u = stepper.step(&u, &self.load);
            for (&t, &s) in spec.report_times.iter().zip(&steps) {
                if s == n {
                    out.push((t, u.clone()));
                }
            }
        }
        Ok(out)
    }

    pub fn level(&self, spec: CoarseSpec) -> Result<Level<'_>> {
        let coarse = CoarseGrid::new(&self.mesh, spec.nx, spec.ny)?;
        check_blocks(&self.mesh, &coarse, &self.fractures)?;
        let continua = enumerate_continua(&self.mesh, &coarse, &self.fractures);
        let constraints = averaging_matrix(&continua, &self.mesh, &coarse);
        let aux = match self.config.options.basis {
            BasisKind::Simplified => None,
            BasisKind::Spectral => Some(build_auxiliary_spaces(
                &self.mesh,
                &coarse,
                &self.fractures,
                &continua,
                &constraints,
                &self.kappa,
                self.config.options.aux_modes,
            )?),
        };
        Ok(Level { scene: self, coarse, continua, constraints, aux })
    }

    pub fn basis_options(&self) -> BasisOptions {
        BasisOptions {
            policy: self.config.options.bc_policy,
            scaling: self.config.options.dof_scaling,
            tolerance: self.config.tolerances.constraint,
        }
    }
}

/// One coarse grid over a scene.
pub struct Level<'s> {
    pub scene: &'s Scene,
    pub coarse: CoarseGrid,
    pub continua: ContinuumIndex,
    pub constraints: ConstraintMatrix,
    pub aux: Option<Vec<AuxiliarySpace>>,
}

impl<'s> Level<'s> {
    pub fn h(&self) -> f64 {
        self.coarse.h
    }

    pub fn simplified_builder(&self) -> BasisBuilder<'_> {
        BasisBuilder {
            mesh: &self.scene.mesh,
            coarse: &self.coarse,
            continua: &self.continua,
            stiffness: &self.scene.stiffness,
            constraints: &self.constraints,
            options: self.scene.basis_options(),
        }
    }

    pub fn bases(&self, layers: Layers) -> Result<BasisSet> {
        let set = match &self.aux {
            None => self.simplified_builder().build_all(layers),
            Some(aux) => CemBuilder {
                mesh: &self.scene.mesh,
                coarse: &self.coarse,
                stiffness: &self.scene.stiffness,
                aux,
                options: self.scene.basis_options(),
            }
            .build_all(layers),
        };
        set.context(|| format!("basis construction (H = {}, layers = {layers})", self.coarse.h))
    }

    /// Coarse DOFs of a fine field (means or integrals per the scaling option).
    pub fn average(&self, u: &[f64]) -> Vec<f64> {
        self.constraints.apply_scaled(u, self.scene.config.options.dof_scaling)
    }

    pub fn upscale(&self, set: &BasisSet, with_mass: bool) -> Result<CoarseSystem> {
        let scene = self.scene;
        let opts = &scene.config.options;
        let transmissibility = assemble_transmissibility(&scene.mesh, &scene.stiffness, set)?;
        let mass = if with_mass { Some(assemble_coarse_mass(&scene.mesh, &scene.mass, set)?) } else { None };
        let rhs = coarse_rhs(
            opts.rhs,
            &scene.mesh,
            &self.coarse,
            &self.continua,
            opts.dof_scaling,
            set,
            &scene.load,
            &scene.source_cells,
        )?;
        let (operator, gauge, averages_are_dofs) = match opts.basis {
            BasisKind::Simplified => (
                finite_volume_correct(&transmissibility),
                coarse_gauge(&self.continua, &self.constraints, opts.dof_scaling),
                true,
            ),
            // CEM coefficients are not averages: Galerkin form with a zero-mean gauge on the downscaled field.
            BasisKind::Spectral => (transmissibility.clone(), set.project(&scene.mesh, &scene.weights)?, false),
        };
        Ok(CoarseSystem { transmissibility, operator, mass, rhs, gauge, averages_are_dofs })
    }

    /// Continuum averages of the coarse solution.
    pub fn coarse_averages(&self, set: &BasisSet, system: &CoarseSystem, coeffs: &[f64]) -> Result<Vec<f64>> {
        if system.averages_are_dofs {
            Ok(coeffs.to_vec())
        } else {
            Ok(self.average(&set.downscale(&self.scene.mesh, coeffs)?))
        }
    }

    pub fn errors(&self, u_coarse_avg: &[f64], u_fine: &[f64]) -> Result<ErrorReport> {
        let reference = self.average(u_fine);
        error_report(u_coarse_avg, &reference, &self.continua, self.constraints.measures())
    }
}

/// Assembled coarse operators for one basis set.
pub struct CoarseSystem {
    /// `T = Ψᵀ A_f Ψ`
    pub transmissibility: Mat<f64>,
    /// Matrix actually solved: finite-volume form for the simplified basis,
    /// Galerkin form for the spectral basis.
    pub operator: Mat<f64>,
    pub mass: Option<Mat<f64>>,
    pub rhs: Vec<f64>,
    pub gauge: Vec<f64>,
    averages_are_dofs: bool,
}

impl CoarseSystem {
    /// Whether the coarse unknowns are the continuum averages themselves.
    pub fn averages_are_dofs(&self) -> bool {
        self.averages_are_dofs
    }

    pub fn conservation_defect(&self) -> f64 {
        row_sum_defect(&self.operator)
    }

    pub fn steady(&self, tolerance: f64) -> Result<Vec<f64>> {
        if self.averages_are_dofs {
            solve_upscaled_steady(&self.operator, &self.rhs, &self.gauge, tolerance)
        } else {
            if self.rhs.iter().all(|v| *v == 0.0) {
                return Ok(vec![0.0; self.rhs.len()]);
            }
            solve_gauged_dense(&self.operator, &self.rhs, &self.gauge)
        }
    }

    pub fn transient(&self, spec: &TransientSpec) -> Result<Vec<(f64, Vec<f64>)>> {
        let mass = self
            .mass
            .as_ref()
            .ok_or_else(|| NlmcError::InvalidArgument("coarse mass matrix was not assembled".into()))?;
        let u0 = vec![0.0; self.rhs.len()];
        solve_transient(&self.operator, mass, &self.rhs, spec.dt, spec.t_end, &u0, &spec.report_times)
    }
}
