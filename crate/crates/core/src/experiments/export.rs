//! Text exports: VTK fields and CSV tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use faer::Mat;

use crate::error::{NlmcError, Result};
use crate::geometry::{CoarseGrid, ContinuumIndex, FineMesh};

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text).map_err(|e| NlmcError::Context {
        context: format!("writing {}", path.display()),
        source: Box::new(e.into()),
    })
}

/// Legacy ASCII VTK `STRUCTURED_POINTS` with one scalar array per field.
pub fn vtk_string(mesh: &FineMesh, fields: &[(&str, &[f64])]) -> Result<String> {
    let n = mesh.n_nodes();
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "nlmc field");
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", mesh.nx + 1, mesh.ny + 1);
    let _ = writeln!(out, "ORIGIN 0 0 0");
    let _ = writeln!(out, "SPACING {} {} 1", mesh.h, mesh.h);
    let _ = writeln!(out, "POINT_DATA {n}");
    for (name, vals) in fields {
        if vals.len() != n {
            return Err(NlmcError::Dimension { expected: n, found: vals.len() });
        }
        let _ = writeln!(out, "SCALARS {name} double 1");
        let _ = writeln!(out, "LOOKUP_TABLE default");
        for v in vals.iter() {
            let _ = writeln!(out, "{v:.12e}");
        }
    }
    Ok(out)
}

pub fn export_field(mesh: &FineMesh, fields: &[(&str, &[f64])], path: &Path) -> Result<()> {
    write(path, &vtk_string(mesh, fields)?)
}

/// Row of `t` belonging to the matrix continuum of `center`, keyed by block offset.
pub fn transmissibility_map_csv(t: &Mat<f64>, coarse: &CoarseGrid, continua: &ContinuumIndex, center: usize) -> String {
    let row = continua.index(center, 0);
    let (ci, cj) = coarse.block_ij(center);
    let mut out = String::from("block_dx,block_dy,continuum,value\n");
    for (k, c) in continua.iter().enumerate() {
        let (bi, bj) = coarse.block_ij(c.block);
        let _ = writeln!(out, "{},{},{},{:.12e}", bi as i64 - ci as i64, bj as i64 - cj as i64, c.local, t[(row, k)]);
    }
    out
}

/// `|T|` between the matrix continuum of `center` and the matrix continua of
/// the blocks in the same row, by horizontal offset.
pub fn slab_profile(t: &Mat<f64>, coarse: &CoarseGrid, continua: &ContinuumIndex, center: usize) -> Vec<(i64, f64)> {
    let row = continua.index(center, 0);
    let (ci, cj) = coarse.block_ij(center);
    (0..coarse.nx)
        .map(|bi| (bi as i64 - ci as i64, t[(row, continua.index(coarse.block(bi, cj), 0))].abs()))
        .collect()
}

pub fn slab_csv(profile: &[(i64, f64)]) -> String {
    let mut out = String::from("block_dx,abs_value\n");
    for (dx, v) in profile {
        let _ = writeln!(out, "{dx},{v:.12e}");
    }
    out
}

/// Nonzero entries as `row col value` lines.
pub fn triplets_string(a: &Mat<f64>) -> String {
    let mut out = String::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{i} {j} {v:.15e}");
            }
        }
    }
    out
}

pub fn solution_csv(coarse: &CoarseGrid, continua: &ContinuumIndex, measures: &[f64], u_t: &[f64], u_bar: &[f64]) -> String {
    let mut out = String::from("index,block,block_i,block_j,continuum,measure,u_T,u_bar\n");
    for (k, c) in continua.iter().enumerate() {
        let (bi, bj) = coarse.block_ij(c.block);
        let _ = writeln!(
            out,
            "{k},{},{bi},{bj},{},{:.12e},{:.15e},{:.15e}",
            c.block, c.local, measures[k], u_t[k], u_bar[k]
        );
    }
    out
}

pub fn decay_csv(profile: &[f64]) -> String {
    let mut out = String::from("layer,max_abs\n");
    for (k, v) in profile.iter().enumerate() {
        let _ = writeln!(out, "{k},{v:.12e}");
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text)
}
