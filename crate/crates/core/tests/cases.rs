//! Whole-problem checks on the bundled cases.

use std::path::PathBuf;

use efem::assembly::Mode;
use efem::config::CaseConfig;
use efem::driver::{run_case, solve_case};
use efem::interface::{LevelSet, Sign};
use efem::mesh::{generate_structured, unit_box};
use efem::oracles::{conforming_reference, electrode_boundary, planar_solution};
use efem::postprocess::{l2_line_difference, l2_line_error, Line, Reference};
use efem::problem::{solve, CaseSetup, SolveOptions};
use efem::solver::SolverOptions;
use efem::{MaterialPair, Point};

fn case(name: &str) -> CaseConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(format!("{name}.ini"));
    CaseConfig::read(path).unwrap()
}

fn p(x: f64, y: f64) -> Point {
    Point::new(x, y, 0.0)
}

#[test]
fn planar_nodes_follow_the_closed_form() {
    let mut c = case("planar_q3");
    c.tol = 1e-10;
    let (field, _) = solve_case(&c, Mode::Efem).unwrap();
    for (x, phi) in field.mesh.nodes().iter().zip(&field.phi) {
        let side = if x.y >= 0.5 {
            Sign::Positive
        } else {
            Sign::Negative
        };
        let (exact, _) = planar_solution(3.0, 0.5, x.y, side).unwrap();
        assert!((phi - exact).abs() < 1e-7, "node {x:?}: {phi} vs {exact}");
    }
    let below = field.eval(&p(0.5, 0.5), Sign::Negative).unwrap();
    let above = field.eval(&p(0.5, 0.5), Sign::Positive).unwrap();
    assert!((below.phi - 0.75).abs() < 1e-6);
    assert!((above.phi - 0.75).abs() < 1e-6);
    assert!((below.e.y - 1.5).abs() < 1e-6);
    assert!((above.e.y - 0.5).abs() < 1e-6);
}

#[test]
fn unit_ratio_needs_no_enrichment() {
    let (field, _) = solve_case(&case("planar_q1"), Mode::Efem).unwrap();
    assert!(field.enrichment.iter().flatten().count() > 0);
    for star in field.enrichment.iter().flatten() {
        assert!(star.abs() < 1e-8);
    }
}

#[test]
fn conductor_carries_no_field() {
    let mut c = case("planar_cond");
    c.set_h(0.03);
    let (field, _) = solve_case(&c, Mode::Efem).unwrap();
    for y in [0.55, 0.7, 0.95] {
        let v = field.eval(&p(0.37, y), Sign::Positive).unwrap();
        assert!(v.e.norm() < 2e-6, "E = {} at y = {y}", v.e.norm());
    }
}

#[test]
fn summary_reports_interface_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = case("planar_q3");
    let with_d = run_case(&c, Some(dir.path())).unwrap();
    let crossing = &with_d.lines[0].crossings[0];
    assert!(crossing.phi_error.unwrap() < 1e-6);

    c.mode = Mode::EfemNoD;
    let without = run_case(&c, Some(dir.path())).unwrap();
    let err = without.lines[0].crossings[0].phi_error.unwrap();
    assert!(err > 0.01 && err < 0.3, "{err}");
    assert!(dir.path().join("planar_q3_efem-nod_summary.json").exists());
}

#[test]
fn preconditioning_does_not_cost_iterations() {
    let c = case("cylinder");
    let mesh = unit_box(2, 27).unwrap();
    let setup = CaseSetup {
        mesh,
        levelset: LevelSet::circle(p(0.25, 0.75), 0.2).unwrap(),
        materials: MaterialPair::new(c.eps1, c.eps2).unwrap(),
        boundary: electrode_boundary(2),
    };
    let run = |precondition: bool| {
        let opts = SolveOptions {
            solver: SolverOptions {
                tol: 1e-10,
                precondition,
                ..SolverOptions::default()
            },
            ..SolveOptions::default()
        };
        solve(setup.clone(), &opts).unwrap().1
    };
    let with = run(true);
    let without = run(false);
    assert!(with.converged && without.converged);
    assert!(
        with.iterations <= without.iterations,
        "{} vs {}",
        with.iterations,
        without.iterations
    );
}

fn inclined_levelset() -> LevelSet {
    LevelSet::plane(p(0.1, 0.0), p(-1.0, 1.0)).unwrap()
}

#[test]
fn conforming_reference_passes_the_patch_test() {
    let mesh = generate_structured(2, &[40, 40], p(0.0, 0.0), p(1.0, 1.0)).unwrap();
    let m = MaterialPair::new(2.0, 2.0).unwrap();
    let field =
        conforming_reference(mesh, &inclined_levelset(), m, &electrode_boundary(2), 1e-12).unwrap();
    for (x, phi) in field.mesh.nodes().iter().zip(&field.phi) {
        assert!((phi - x.y).abs() < 1e-8);
    }
}

#[test]
fn conforming_reference_is_converged() {
    let m = MaterialPair::new(3.0, 1.0).unwrap();
    let solve_at = |n: usize| {
        let mesh = generate_structured(2, &[n, n], p(0.0, 0.0), p(1.0, 1.0)).unwrap();
        conforming_reference(mesh, &inclined_levelset(), m, &electrode_boundary(2), 1e-12).unwrap()
    };
    let coarse = solve_at(200);
    let fine = solve_at(400);
    for line in [
        Line::new(p(0.0, 0.0), p(0.0, 1.0)),
        Line::new(p(0.0, 0.7), p(1.0, 0.7)),
    ] {
        let diff = l2_line_difference(&coarse, &fine, &line, 2001).unwrap();
        assert!(diff < 1e-4, "{diff}");
    }
}

#[test]
fn inclined_unit_ratio_is_exact() {
    let mut c = case("inclined");
    c.eps1 = 1.0;
    c.eps2 = 1.0;
    c.set_h(0.075);
    let (field, _) = solve_case(&c, Mode::Efem).unwrap();
    let uniform = UniformField;
    for l in &c.lines {
        let err = l2_line_error(&field, &uniform, &Line::new(l.start, l.end), l.samples).unwrap();
        assert!(err < 1e-8, "{}: {err}", l.name);
    }
}

struct UniformField;

impl Reference for UniformField {
    fn evaluate(&self, x: &Point, _side: Sign) -> Option<(f64, Point)> {
        Some((x.y, p(0.0, 1.0)))
    }
}
