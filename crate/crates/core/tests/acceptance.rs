//! Acceptance checks on the shipped benchmark scene and the toy scene.
//!
//! Runs without the libtest harness so that every criterion prints exactly one
//! PASS/FAIL line; the process exits nonzero if any criterion or gating check
//! fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nlmc::experiments::config::{parse_config, BasisKind, CoarseSpec};
use nlmc::experiments::study::{run_study, RunReport, StudyPlan};
use nlmc::experiments::Scene;
use nlmc::fem::{assemble_stiffness, l2_error, load_from_fn, nodal_weights, solve_fine_steady};
use nlmc::geometry::{FineMesh, FractureNetwork, Layers};
use nlmc::linalg::{dense_apply, dot};
use nlmc::spectral::cem_simplified_correlation;
use nlmc::upscale::solve_transient;

const CONSTRAINT_TOL: f64 = 1e-9;
const CONSERVATION_TOL: f64 = 1e-12;
const GALERKIN_TOL: f64 = 1e-7;
const DECAY_TOL: f64 = 1e-3;
const RATE_MIN: f64 = 1.9;
const COSINE_MIN: f64 = 0.9;

const H10: f64 = 0.1;
const H20: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Bench {
    report: RunReport,
    out: tempfile::TempDir,
}

fn run_benchmark() -> Bench {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes/benchmark.json");
    let config = parse_config(&path).expect("benchmark config");
    let out = tempfile::tempdir().expect("temp dir");
    let plan = StudyPlan { steady: true, transient: true, out: Some(out.path().to_path_buf()), details: true };
    let report = run_study(&config, &plan).expect("benchmark study");
    Bench { report, out }
}

fn count(n: usize) -> Layers {
    Layers::Count(n)
}

const CRITERION_LAYERS: [Layers; 5] = [Layers::Count(1), Layers::Count(2), Layers::Count(4), Layers::Count(6), Layers::Global];

fn steady_error(r: &RunReport, h: f64, layers: Layers) -> f64 {
    r.steady.iter().find(|s| s.h == h && s.layers == layers).map(|s| s.errors.total_pct).unwrap_or(f64::NAN)
}

fn seconds(r: &RunReport, keep: impl Fn(&str, Option<f64>, Option<Layers>) -> bool) -> f64 {
    r.timings.iter().filter(|t| keep(&t.phase, t.h, t.layers)).map(|t| t.seconds).sum()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" / ")
}

fn constraint_exactness(b: &Bench) -> Outcome {
    let r = &b.report;
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for h in [H10, H20] {
        for layers in CRITERION_LAYERS {
            if let Some(row) = r.steady.iter().find(|s| s.h == h && s.layers == layers) {
                worst = worst.max(row.max_constraint_residual);
                cases += 1;
            }
        }
    }
    let secs = seconds(r, |p, _, l| p == "basis" && l.is_some_and(|l| CRITERION_LAYERS.contains(&l)));
    outcome(
        cases == 10 && worst <= CONSTRAINT_TOL && secs < 120.0,
        format!("{cases} basis sets, max residual {worst:.2e} (tol {CONSTRAINT_TOL:.0e}), basis time {secs:.1} s"),
    )
}

fn conservation(b: &Bench) -> Outcome {
    let worst = b.report.steady.iter().map(|s| s.conservation).fold(0.0_f64, f64::max);
    let n = b.report.steady.len();
    outcome(n > 0 && worst <= CONSERVATION_TOL, format!("{n} coarse systems, max row sum / max |A_T| = {worst:.2e}"))
}

fn coarse_10_trend(b: &Bench) -> Outcome {
    let r = &b.report;
    let e: Vec<f64> = [count(1), count(2), count(3), count(4), Layers::Global].map(|l| steady_error(r, H10, l)).to_vec();
    let secs = seconds(r, |p, h, _| p == "setup" || p == "fine_steady" || (h == Some(H10) && !p.contains("transient")));
    let pass = e[0] > 5.0 && e[1] <= e[0] / 5.0 && e[3] <= 0.1 && e[4] <= 0.01 && strictly_decreasing(&e) && secs < 300.0;
    outcome(pass, format!("H = 1/10 errors (layers 1/2/3/4/global) {} %, {secs:.1} s", fmt(&e)))
}

fn coarse_20_trend(b: &Bench) -> Outcome {
    let r = &b.report;
    let e: Vec<f64> = CRITERION_LAYERS.map(|l| steady_error(r, H20, l)).to_vec();
    let secs = seconds(r, |p, h, _| p == "setup" || p == "fine_steady" || (h == Some(H20) && !p.contains("transient")));
    let pass = strictly_decreasing(&e) && e[3] <= 0.01 && secs < 600.0;
    outcome(pass, format!("H = 1/20 errors (layers 1/2/4/6/global) {} %, {secs:.1} s", fmt(&e)))
}

fn transient_trend(b: &Bench) -> Outcome {
    let r = &b.report;
    let layers = [count(1), count(2), count(3), count(4), count(6), Layers::Global];
    let mut pass = true;
    let mut parts = Vec::new();
    for t in [0.1, 0.5, 1.0] {
        let e: Vec<f64> = layers
            .iter()
            .map(|l| {
                r.transient
                    .iter()
                    .find(|x| x.h == H20 && x.layers == *l && (x.time - t).abs() < 1e-12)
                    .map(|x| x.errors.total_pct)
                    .unwrap_or(f64::NAN)
            })
            .collect();
        pass &= strictly_decreasing(&e);
        if t == 1.0 {
            pass &= e[5] <= 0.01;
        }
        parts.push(format!("t={t}: {}", fmt(&e)));
    }
    let secs = seconds(r, |p, h, _| p == "setup" || p == "fine_transient" || h == Some(H20));
    pass &= secs < 900.0;
    outcome(pass, format!("H = 1/20 errors % (layers 1/2/3/4/6/global) {}; {secs:.1} s", parts.join("; ")))
}

fn global_exactness(b: &Bench) -> Outcome {
    let res: Vec<f64> = b
        .report
        .steady
        .iter()
        .filter(|s| s.layers == Layers::Global)
        .map(|s| s.galerkin_residual.unwrap_or(f64::INFINITY))
        .collect();
    let pass = res.len() == 2 && res.iter().all(|r| *r <= GALERKIN_TOL);
    outcome(pass, format!("||A_G u_bar - Psi^T g|| / ||Psi^T g|| at H = 1/10, 1/20: {}", fmt(&res)))
}

fn basis_decay(b: &Bench) -> Outcome {
    let row = b.report.decay.iter().find(|d| d.h == H20 && d.layers == count(6));
    match row {
        Some(d) if d.profile.len() > 6 && d.profile[0] > 0.0 => {
            let ratio = d.profile[6] / d.profile[0];
            outcome(ratio <= DECAY_TOL, format!("H = 1/20 center block, d_6/d_0 = {ratio:.2e}"))
        }
        _ => outcome(false, "no 6-layer decay profile reaching distance 6".into()),
    }
}

fn fine_convergence() -> Outcome {
    let pi = std::f64::consts::PI;
    let exact = |x: f64, y: f64| (pi * x).cos() * (pi * y).cos();
    let mut errs = Vec::new();
    for n in [32, 64] {
        let mesh = FineMesh::new(n, n, 1.0, 1.0).unwrap();
        let a = assemble_stiffness(&mesh, &FractureNetwork::new(), &vec![1.0; mesh.n_cells()]).unwrap();
        let load = load_from_fn(&mesh, |x, y| 2.0 * pi * pi * exact(x, y));
        let u = solve_fine_steady(&a, &load, &nodal_weights(&mesh), 1e-10).unwrap();
        errs.push(l2_error(&mesh, &u, exact));
    }
    let rate = (errs[0] / errs[1]).log2();
    outcome(rate >= RATE_MIN, format!("L2 errors h=1/32, 1/64: {}, rate {rate:.3}", fmt(&errs)))
}

fn spectral_sanity() -> Outcome {
    let mut cfg = common::config(common::TOY);
    cfg.coarse = vec![CoarseSpec { nx: 8, ny: 8 }];
    cfg.options.basis = BasisKind::Spectral;
    let scene = Scene::new(cfg).unwrap();
    let level = scene.level(scene.config.coarse[0]).unwrap();
    let aux = level.aux.as_ref().unwrap();
    let cem = level.bases(Layers::Count(2)).unwrap();
    let simple = level.simplified_builder().build_all(Layers::Count(2)).unwrap();
    let (mut fractured, mut bad_count) = (0, Vec::new());
    let mut worst = 1.0_f64;
    for b in 0..level.coarse.n_blocks() {
        let networks = level.continua.fracture_count(b);
        if networks == 0 {
            continue;
        }
        fractured += 1;
        if aux[b].count_below(1e-2) != 1 + networks {
            bad_count.push(b);
        }
        let cos = cem_simplified_correlation(
            &scene.mesh,
            &level.coarse,
            &level.continua,
            &level.constraints,
            scene.config.options.dof_scaling,
            &scene.stiffness,
            &cem,
            &simple,
            b,
        )
        .unwrap();
        worst = cos.into_iter().fold(worst, f64::min);
    }
    outcome(
        fractured > 0 && bad_count.is_empty() && worst >= COSINE_MIN,
        format!(
            "{fractured} fractured blocks, eigenvalue-count mismatches {bad_count:?}, min |cos| {worst:.3} (toy 40x40 / 8x8)"
        ),
    )
}

fn property_suite() -> Outcome {
    let t0 = Instant::now();
    let scene = common::toy_scene();
    let level = scene.level(scene.config.coarse[0]).unwrap();
    let sets: Vec<_> = [count(1), count(2), Layers::Global].into_iter().map(|l| level.bases(l).unwrap()).collect();
    let mut failures = Vec::new();

    let system = level.upscale(&sets[0], true).unwrap();
    let t = &system.transmissibility;
    let scale = common::max_abs(t);
    let n = t.nrows();
    let asym = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (t[(i, j)] - t[(j, i)]).abs()).fold(0.0, f64::max);
    if asym > 1e-9 * scale {
        failures.push(format!("T asymmetry {asym:.2e}"));
    }

    let mut leaks = 0;
    for (k, a) in sets[0].bases.iter().enumerate() {
        for (l, b) in sets[0].bases.iter().enumerate() {
            let disjoint = a.support.intersect(&b.support).is_none_or(|r| r.width() == 1 || r.height() == 1);
            if disjoint && t[(k, l)].abs() > 1e-12 * scale {
                leaks += 1;
            }
        }
    }
    if leaks > 0 {
        failures.push(format!("{leaks} couplings without region overlap"));
    }

    for w in sets.windows(2) {
        let up = w[0].bases.iter().zip(&w[1].bases).filter(|(a, b)| b.energy > a.energy * (1.0 + 1e-9) + 1e-12).count();
        if up > 0 {
            failures.push(format!("{up} bases gained energy from {} to {} layers", w[0].layers, w[1].layers));
        }
    }

    let m_t = system.mass.as_ref().unwrap();
    let zero = vec![0.0; n];
    let u0: Vec<f64> = (0..n).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
    let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.01).collect();
    let states = solve_transient(&system.operator, m_t, &zero, 0.01, 0.2, &u0, &times).unwrap();
    let energy = |u: &[f64]| dot(u, &dense_apply(m_t, u));
    if states.windows(2).any(|w| energy(&w[1].1) > energy(&w[0].1) * (1.0 + 1e-12)) {
        failures.push("backward Euler energy increased with g = 0".into());
    }

    let secs = t0.elapsed().as_secs_f64();
    if secs >= 30.0 {
        failures.push(format!("took {secs:.1} s"));
    }
    let detail = if failures.is_empty() {
        format!("symmetry, locality, energy monotonicity, dissipation hold on the 40x40 / 4x4 toy in {secs:.1} s")
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

/// `|T|` along the center row of the GLOBAL transmissibility, four blocks
/// out relative to the center block, on both sides.
fn slab_decay(b: &Bench) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for h in [H10, H20] {
        let text = std::fs::read_to_string(b.out.path().join(format!("H{h}_Lglobal/slab.csv"))).unwrap_or_default();
        let profile: Vec<(i64, f64)> = text
            .lines()
            .skip(1)
            .filter_map(|l| l.split_once(','))
            .map(|(dx, v)| (dx.parse().unwrap(), v.parse().unwrap()))
            .collect();
        let at = |d: i64| profile.iter().find(|p| p.0 == d).map(|p| p.1);
        match (at(0), at(-4), at(4)) {
            (Some(center), Some(left), Some(right)) => {
                let drop = left.max(right) / center;
                pass &= drop <= 1e-3;
                parts.push(format!("H = {h}: max |T(+-4)| / |T(0)| = {drop:.2e}"));
            }
            _ => {
                pass = false;
                parts.push(format!("H = {h}: slab profile missing"));
            }
        }
    }
    outcome(pass, format!("{} (three orders expected)", parts.join("; ")))
}

fn galerkin_row_sums(b: &Bench) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for h in [H10, H20] {
        let v: Vec<f64> = b.report.steady.iter().filter(|s| s.h == h).map(|s| s.galerkin_row_sum).collect();
        pass &= v.windows(2).all(|w| w[1] <= w[0] * 1.1) && v.last().is_some_and(|x| *x <= 1e-8);
        parts.push(format!("H = {h}: {}", fmt(&v)));
    }
    outcome(pass, format!("max |T 1| / max |T| over layers: {}", parts.join("; ")))
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let bench = run_benchmark();
    println!("benchmark study finished in {:.1} s", t0.elapsed().as_secs_f64());
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 constraint exactness", Box::new(|| constraint_exactness(&bench))),
        ("2 conservation", Box::new(|| conservation(&bench))),
        ("3 steady error decay, H = 1/10", Box::new(|| coarse_10_trend(&bench))),
        ("4 steady error decay, H = 1/20", Box::new(|| coarse_20_trend(&bench))),
        ("5 transient error decay", Box::new(|| transient_trend(&bench))),
        ("6 GLOBAL exactness", Box::new(|| global_exactness(&bench))),
        ("7 basis decay", Box::new(|| basis_decay(&bench))),
        ("8 fine solver convergence", Box::new(fine_convergence)),
        ("9 spectral path", Box::new(spectral_sanity)),
        ("10 property suite", Box::new(property_suite)),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        let o = check();
        failed += usize::from(!o.pass);
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let o = galerkin_row_sums(&bench);
    failed += usize::from(!o.pass);
    println!("check Galerkin row sums: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    // measured and reported, not gating: see the known limitations in the README
    let o = slab_decay(&bench);
    println!("note slab decay over four blocks: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance checks failed");
        ExitCode::FAILURE
    }
}
