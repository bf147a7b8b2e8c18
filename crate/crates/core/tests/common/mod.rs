//! Strategies and invariant checks shared by the property tests and the
//! acceptance run.
#![allow(dead_code)]

use efem::assembly::{assemble_global, AssemblyOptions, Mode};
use efem::element::{element_displacement_terms, element_matrices, hat_eval, MaterialPair};
use efem::interface::{
    classify_elements, cut_exterior_faces, split_simplex, CutDecomposition, ElementCut, LevelSet,
    Sign, SplitError,
};
use efem::mesh::{simplex_measure, unit_box, ElementGeometry, Mesh};
use efem::oracles::electrode_boundary;
use efem::problem::{solve, CaseSetup, SolveOptions};
use efem::solver::SolverOptions;
use efem::Point;
use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type Check = Result<(), TestCaseError>;

pub fn simplex(dim: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(prop::array::uniform3(0.0..1.0f64), dim + 1)
        .prop_map(move |pts| {
            let mut pts: Vec<Point> = pts
                .into_iter()
                .map(|[x, y, z]| Point::new(x, y, if dim == 3 { z } else { 0.0 }))
                .collect();
            if ElementGeometry::from_coords(dim, &pts).is_err() {
                pts.swap(0, 1);
            }
            pts
        })
        .prop_filter("well shaped", move |pts| {
            let m = simplex_measure(pts);
            let h = (0..pts.len())
                .flat_map(|i| (0..i).map(move |j| (i, j)))
                .map(|(i, j)| (pts[i] - pts[j]).norm())
                .fold(0.0, f64::max);
            m > 0.02 * h.powi(dim as i32)
        })
}

pub fn distances(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0.02..1.0f64, any::<bool>()), n)
        .prop_map(|v| {
            v.into_iter()
                .map(|(a, s)| if s { a } else { -a })
                .collect::<Vec<f64>>()
        })
        .prop_filter("mixed signs", |d| {
            d.iter().any(|v| *v > 0.0) && d.iter().any(|v| *v < 0.0)
        })
}

/// A random triangle or tetrahedron with mixed-sign nodal distances.
pub fn cut_element() -> impl Strategy<Value = (Vec<Point>, Vec<f64>)> {
    prop_oneof![Just(2usize), Just(3usize)].prop_flat_map(|dim| (simplex(dim), distances(dim + 1)))
}

pub fn circle() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.2..0.8f64, 0.2..0.8f64, 0.05..0.35f64)
}

pub fn decompose(coords: &[Point], d: &[f64]) -> Option<CutDecomposition> {
    match split_simplex(0, coords, d) {
        Ok(mut dec) => {
            dec.cut_faces = cut_exterior_faces(&dec);
            Some(dec)
        }
        Err(SplitError::Degenerate { .. }) => None,
        Err(e) => panic!("{e}"),
    }
}

pub fn measure_is_conserved(coords: &[Point], d: &[f64]) -> Check {
    let Some(dec) = decompose(coords, d) else {
        return Err(TestCaseError::reject("degenerate cut"));
    };
    let parent = simplex_measure(coords);
    let children: f64 = dec.children.iter().map(|c| c.measure).sum();
    prop_assert!((children - parent).abs() <= 1e-10 * parent);
    for child in &dec.children {
        prop_assert_eq!(Sign::of(child.centroid().interpolate(d)), child.sign);
    }
    for facet in &dec.interface_facets {
        for v in facet {
            prop_assert!(v.interpolate(d).abs() <= 1e-12);
        }
    }
    let geometry = ElementGeometry::from_coords(coords.len() - 1, coords).unwrap();
    for face in &dec.cut_faces {
        let pieces: f64 = face.pieces.iter().map(|p| p.measure).sum();
        let full = geometry.face_measure(face.local_face);
        prop_assert!((pieces - full).abs() <= 1e-10 * full);
    }
    Ok(())
}

pub fn enrichment_vanishes_at_nodes(d: &[f64]) -> Check {
    let n = d.len();
    for i in 0..n {
        let mut bary = vec![0.0; n];
        bary[i] = 1.0;
        prop_assert!(hat_eval(d, &bary).abs() <= 1e-12);
    }
    Ok(())
}

pub fn displacement_sums_to_zero(coords: &[Point], d: &[f64], q: f64) -> Check {
    let Some(dec) = decompose(coords, d) else {
        return Err(TestCaseError::reject("degenerate cut"));
    };
    let geometry = ElementGeometry::from_coords(coords.len() - 1, coords).unwrap();
    let m = MaterialPair::new(q, 1.0).unwrap();
    let (dv, _) = element_displacement_terms(&geometry, &m, &dec, |_| true);
    let scale = dv.amax().max(f64::MIN_POSITIVE);
    prop_assert!(
        dv.sum().abs() <= 1e-12 * scale,
        "sum {} of {}",
        dv.sum(),
        dv
    );
    Ok(())
}

/// Solves the element block system with node 0 held at 1 and `rhs` on the
/// other node rows, once in full and once condensed.
pub fn condensation_matches_block_solve(
    coords: &[Point],
    d: &[f64],
    eps: (f64, f64),
    rhs: &[f64],
) -> Check {
    let Some(dec) = decompose(coords, d) else {
        return Err(TestCaseError::reject("degenerate cut"));
    };
    let n = coords.len();
    let geometry = ElementGeometry::from_coords(n - 1, coords).unwrap();
    let m = MaterialPair::new(eps.0, eps.1).unwrap();
    let (dv, denr) = element_displacement_terms(&geometry, &m, &dec, |_| true);
    let sys = element_matrices(&geometry, &m, &ElementCut::Cut(Box::new(dec)))
        .with_displacement(dv, denr);
    let Ok(condensed) = sys.condense() else {
        return Err(TestCaseError::reject("singular enrichment"));
    };
    let mut full = sys.block_matrix();
    let mut f = DVector::zeros(n + 1);
    f[0] = 1.0;
    for i in 1..n {
        f[i] = rhs[i - 1];
    }
    for j in 0..=n {
        full[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
    }
    let mut c = condensed.matrix.clone();
    for j in 0..n {
        c[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
    }
    let (lu_full, lu_c) = (full.lu(), c.lu());
    if lu_full.determinant().abs() <= 1e-8 || lu_c.determinant().abs() <= 1e-8 {
        return Err(TestCaseError::reject("near-singular block"));
    }
    let x_full = lu_full.solve(&f).unwrap();
    let x = lu_c.solve(&f.rows(0, n).into_owned()).unwrap();
    let scale = x_full.amax().max(1.0);
    prop_assert!((&x - x_full.rows(0, n)).amax() <= 1e-10 * scale);
    prop_assert!((condensed.recovery.dot(&x) - x_full[n]).abs() <= 1e-10 * scale);
    Ok(())
}

/// The enrichment agrees from both elements at points of every shared face.
pub fn enrichment_is_continuous(mesh: &Mesh, levelset: &LevelSet, samples: &[(f64, f64)]) -> Check {
    let cls = classify_elements(mesh, levelset).unwrap();
    let hat = |e: usize, x: &Point| match &cls.elements[e] {
        ElementCut::Uncut(_) => 0.0,
        ElementCut::Cut(dec) => hat_eval(&dec.nodal_d, &mesh.element_geometry(e).barycentric(x)),
    };
    for face in mesh.faces() {
        let Some((f, _)) = face.neighbor else {
            continue;
        };
        let p: Vec<Point> = mesh
            .face_nodes(face.element, face.local_face)
            .iter()
            .map(|&i| mesh.nodes()[i])
            .collect();
        for &(s, t) in samples {
            let x = if p.len() == 2 {
                p[0] + (p[1] - p[0]) * s
            } else {
                let (s, t) = if s + t > 1.0 {
                    (1.0 - s, 1.0 - t)
                } else {
                    (s, t)
                };
                p[0] + (p[1] - p[0]) * s + (p[2] - p[0]) * t
            };
            prop_assert!((hat(face.element, &x) - hat(f, &x)).abs() <= 1e-12);
        }
    }
    Ok(())
}

pub fn graph_is_mode_independent(n: usize, (cx, cy, r): (f64, f64, f64), q: f64) -> Check {
    let mesh = unit_box(2, n).unwrap();
    let ls = LevelSet::circle(Point::new(cx, cy, 0.0), r).unwrap();
    let cls = classify_elements(&mesh, &ls).unwrap();
    let m = MaterialPair::new(1.0, q).unwrap();
    let boundary = electrode_boundary(2);
    let systems: Vec<_> = Mode::ALL
        .iter()
        .map(|&mode| {
            assemble_global(
                &mesh,
                &cls,
                &m,
                &boundary,
                &AssemblyOptions::with_mode(mode),
            )
            .unwrap()
        })
        .collect();
    for s in &systems[1..] {
        prop_assert!(s.matrix.same_pattern(&systems[0].matrix));
    }
    Ok(())
}

fn circle_setup(n: usize, (cx, cy, r): (f64, f64, f64), eps1: f64, eps2: f64) -> CaseSetup {
    CaseSetup {
        mesh: unit_box(2, n).unwrap(),
        levelset: LevelSet::circle(Point::new(cx, cy, 0.0), r).unwrap(),
        materials: MaterialPair::new(eps1, eps2).unwrap(),
        boundary: electrode_boundary(2),
    }
}

/// One material on both sides of a cut: the linear field must come out exact.
pub fn uniform_field_is_exact(n: usize, c: (f64, f64, f64), eps: f64, mode: Mode) -> Check {
    let opts = SolveOptions {
        assembly: AssemblyOptions::with_mode(mode),
        direct: true,
        ..SolveOptions::default()
    };
    let (field, _) = solve(circle_setup(n, c, eps, eps), &opts).unwrap();
    for (x, phi) in field.mesh.nodes().iter().zip(&field.phi) {
        prop_assert!((phi - x.y).abs() <= 1e-8);
    }
    for star in field.enrichment.iter().flatten() {
        prop_assert!(star.abs() <= 1e-8);
    }
    Ok(())
}

pub fn permittivity_scale_is_irrelevant(n: usize, c: (f64, f64, f64), q: f64, scale: f64) -> Check {
    let opts = SolveOptions {
        direct: true,
        ..SolveOptions::default()
    };
    let a = solve(circle_setup(n, c, 1.0, q), &opts).unwrap().0.phi;
    let b = solve(circle_setup(n, c, scale, scale * q), &opts)
        .unwrap()
        .0
        .phi;
    for (x, y) in a.iter().zip(&b) {
        prop_assert!((x - y).abs() <= 1e-9);
    }
    Ok(())
}

pub fn bicgstab_matches_lu(n: usize, c: (f64, f64, f64), q: f64, mode: Mode) -> Check {
    let setup = circle_setup(n, c, 1.0, q);
    if setup.mesh.n_nodes() > 2000 {
        return Err(TestCaseError::reject("too large for dense LU"));
    }
    let assembly = AssemblyOptions::with_mode(mode);
    let direct = SolveOptions {
        assembly,
        direct: true,
        ..SolveOptions::default()
    };
    let iterative = SolveOptions {
        assembly,
        solver: SolverOptions {
            tol: 1e-12,
            ..SolverOptions::default()
        },
        direct: false,
    };
    let (a, _) = solve(setup.clone(), &direct).unwrap();
    let (b, report) = solve(setup, &iterative).unwrap();
    prop_assert!(report.converged);
    let diff = a
        .phi
        .iter()
        .zip(&b.phi)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    prop_assert!(diff <= 1e-7, "max difference {diff}");
    Ok(())
}

pub fn mode() -> impl Strategy<Value = Mode> {
    prop_oneof![
        Just(Mode::StandardFem),
        Just(Mode::EfemNoD),
        Just(Mode::Efem)
    ]
}

/// Modes that must pass the patch test.
pub fn consistent_mode() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::StandardFem), Just(Mode::Efem)]
}
