use efem::element::{element_displacement_terms, element_matrices, hat_eval, MaterialPair};
use efem::interface::{cut_exterior_faces, split_simplex, CutDecomposition, ElementCut, Sign};
use efem::mesh::ElementGeometry;
use efem::Point;
use nalgebra::{DMatrix, DVector};

fn p(x: f64, y: f64, z: f64) -> Point {
    Point::new(x, y, z)
}

fn decompose(coords: &[Point], d: &[f64]) -> CutDecomposition {
    let mut dec = split_simplex(0, coords, d).unwrap();
    dec.cut_faces = cut_exterior_faces(&dec);
    dec
}

fn unit_triangle() -> Vec<Point> {
    vec![p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0)]
}

fn skew_tet() -> Vec<Point> {
    vec![
        p(0.1, 0.0, 0.05),
        p(1.0, 0.2, 0.0),
        p(0.3, 0.9, 0.1),
        p(0.2, 0.3, 0.8),
    ]
}

/// Gradient of the enrichment in each child, fitted from enrichment values at
/// the child vertices. The enrichment is linear on a child.
fn child_gradient(parent: &ElementGeometry, d: &[f64], vertices: &[Point]) -> Point {
    let dim = parent.dim;
    let child = ElementGeometry::from_coords(dim, vertices).unwrap();
    vertices
        .iter()
        .zip(&child.gradients)
        .map(|(x, g)| g * hat_eval(d, &parent.barycentric(x)))
        .sum()
}

/// Volume blocks by a three-point (2D) or four-point (3D) rule on each child.
fn quadrature_blocks(
    coords: &[Point],
    d: &[f64],
    m: &MaterialPair,
) -> (DMatrix<f64>, DVector<f64>, f64) {
    let dim = coords.len() - 1;
    let parent = ElementGeometry::from_coords(dim, coords).unwrap();
    let dec = decompose(coords, d);
    let n = dim + 1;
    let mut k = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut kenr = 0.0;
    for child in &dec.children {
        let pts: Vec<Point> = child.vertices.iter().map(|v| v.point).collect();
        let gbar = child_gradient(&parent, d, &pts);
        let geom = ElementGeometry::from_coords(dim, &pts).unwrap();
        // Interior points of a symmetric degree-2 rule, equal weights.
        let (a, w) = if dim == 2 {
            (1.0 / 6.0, 1.0 / 3.0)
        } else {
            (0.138_196_601_125_010_5, 0.25)
        };
        for q in 0..n {
            let mut lambda = vec![a; n];
            lambda[q] = 1.0 - a * dim as f64;
            let x = geom.point_from_barycentric(&lambda);
            let eps = m.eps(Sign::of(
                parent
                    .barycentric(&x)
                    .iter()
                    .zip(d)
                    .map(|(l, d)| l * d)
                    .sum(),
            ));
            let weight = w * geom.measure * eps;
            for i in 0..n {
                for j in 0..n {
                    k[(i, j)] += weight * parent.gradients[i].dot(&parent.gradients[j]);
                }
                b[i] += weight * parent.gradients[i].dot(&gbar);
            }
            kenr += weight * gbar.norm_squared();
        }
    }
    (k, b, kenr)
}

#[test]
fn volume_blocks_match_child_quadrature() {
    let m = MaterialPair::new(3.0, 1.0).unwrap();
    let cases: Vec<(Vec<Point>, Vec<f64>)> = vec![
        (unit_triangle(), vec![-1.0, 1.0, 1.0]),
        (unit_triangle(), vec![0.4, -0.25, 0.9]),
        (skew_tet(), vec![-1.0, 0.5, 0.7, 0.2]),
        (skew_tet(), vec![-0.3, 0.6, -0.2, 0.4]),
    ];
    for (coords, d) in cases {
        let geometry = ElementGeometry::from_coords(coords.len() - 1, &coords).unwrap();
        let sys = element_matrices(
            &geometry,
            &m,
            &ElementCut::Cut(Box::new(decompose(&coords, &d))),
        );
        let (k, b, kenr) = quadrature_blocks(&coords, &d, &m);
        assert!((sys.k - k).amax() < 1e-12);
        assert!((sys.b - b).amax() < 1e-12);
        assert!((sys.kenr - kenr).abs() < 1e-12, "{} vs {}", sys.kenr, kenr);
    }
}

#[test]
fn enrichment_stiffness_of_reference_cut() {
    // d = (-1, 1, 1): the enrichment is 2 N_0 on the positive side (area 3/8)
    // and 2 (N_1 + N_2) on the negative corner (area 1/8).
    let m = MaterialPair::new(3.0, 1.0).unwrap();
    let geometry = ElementGeometry::from_coords(2, &unit_triangle()).unwrap();
    let dec = decompose(&unit_triangle(), &[-1.0, 1.0, 1.0]);
    let sys = element_matrices(&geometry, &m, &ElementCut::Cut(Box::new(dec)));
    assert!((sys.kenr - (3.0 * 8.0 * 0.375 + 1.0 * 8.0 * 0.125)).abs() < 1e-14);
}

/// Face integrals by a 50-point composite trapezoid rule on every segment.
fn trapezoid_displacement(coords: &[Point], d: &[f64], m: &MaterialPair) -> (DVector<f64>, f64) {
    let parent = ElementGeometry::from_coords(2, coords).unwrap();
    let dec = decompose(coords, d);
    let mut dv = DVector::zeros(3);
    let mut denr = 0.0;
    for face in dec.cut_faces.iter().filter(|f| f.is_crossed()) {
        let normal = parent.face_normal(face.local_face);
        for piece in &face.pieces {
            let (a, b) = (piece.vertices[0].point, piece.vertices[1].point);
            let len = (b - a).norm();
            let eps = m.eps(piece.sign);
            let mid = (a + b) / 2.0;
            let gbar = child_gradient_at(&parent, d, mid, piece.sign);
            let steps = 49;
            let mut integral = 0.0;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let w = if s == 0 || s == steps { 0.5 } else { 1.0 } / steps as f64;
                integral += w * hat_eval(d, &parent.barycentric(&(a + (b - a) * t)));
            }
            integral *= len;
            for i in 0..3 {
                dv[i] += integral * eps * normal.dot(&parent.gradients[i]);
            }
            denr += integral * eps * normal.dot(&gbar);
        }
    }
    (dv, denr)
}

/// Enrichment gradient on side `side` by central differences at `x`, shifted
/// into that side along the level-set gradient.
fn child_gradient_at(parent: &ElementGeometry, d: &[f64], x: Point, side: Sign) -> Point {
    let grad_d: Point = parent.gradients.iter().zip(d).map(|(g, d)| g * *d).sum();
    let x = x + grad_d.normalize() * (side.value() * 1e-3);
    let h = 1e-5;
    let f = |y: Point| hat_eval(d, &parent.barycentric(&y));
    let ex = p(h, 0.0, 0.0);
    let ey = p(0.0, h, 0.0);
    p(
        (f(x + ex) - f(x - ex)) / (2.0 * h),
        (f(x + ey) - f(x - ey)) / (2.0 * h),
        0.0,
    )
}

#[test]
fn displacement_matches_trapezoid_rule() {
    let m = MaterialPair::new(3.0, 1.0).unwrap();
    for d in [[-1.0, 1.0, 1.0], [0.4, -0.25, 0.9], [0.3, 0.6, -0.8]] {
        let coords = unit_triangle();
        let geometry = ElementGeometry::from_coords(2, &coords).unwrap();
        let dec = decompose(&coords, &d);
        let (dv, denr) = element_displacement_terms(&geometry, &m, &dec, |_| true);
        let (dt, denr_t) = trapezoid_displacement(&coords, &d, &m);
        assert!((dv - dt).amax() < 1e-10);
        // The face gradient is recovered by differences; linear, so only
        // rounding remains.
        assert!((denr - denr_t).abs() < 1e-8, "{denr} vs {denr_t}");
    }
}

#[test]
fn displacement_of_reference_cut() {
    // d = (-1, 1, 1): faces through node 0 are crossed at their midpoints. On
    // each half the enrichment rises linearly from 0 to 1 and back, so every
    // half contributes 0.25 * eps times n . grad N_i.
    let m = MaterialPair::new(3.0, 1.0).unwrap();
    let coords = unit_triangle();
    let geometry = ElementGeometry::from_coords(2, &coords).unwrap();
    let dec = decompose(&coords, &[-1.0, 1.0, 1.0]);
    let (dv, _) = element_displacement_terms(&geometry, &m, &dec, |_| true);
    // Bottom face, n = (0, -1): eps (1 + 3) * 0.25 * (-grad N_i . e_y).
    // Left face, n = (-1, 0): eps (1 + 3) * 0.25 * (-grad N_i . e_x).
    let expected = [
        (1.0 + 3.0) * 0.25 * (1.0 + 1.0),
        (1.0 + 3.0) * 0.25 * (0.0 - 1.0),
        (1.0 + 3.0) * 0.25 * (-1.0 + 0.0),
    ];
    for i in 0..3 {
        assert!((dv[i] - expected[i]).abs() < 1e-14, "D[{i}] = {}", dv[i]);
    }
    assert!(dv.sum().abs() < 1e-14);
}

fn block_versus_condensed(coords: &[Point], d: &[f64], m: &MaterialPair, rhs: &[f64]) -> f64 {
    let dim = coords.len() - 1;
    let n = dim + 1;
    let geometry = ElementGeometry::from_coords(dim, coords).unwrap();
    let dec = decompose(coords, d);
    let (dv, denr) = element_displacement_terms(&geometry, m, &dec, |_| true);
    let sys =
        element_matrices(&geometry, m, &ElementCut::Cut(Box::new(dec))).with_displacement(dv, denr);

    // Node 0 is prescribed to 1, the remaining rows carry `rhs`.
    let mut full = sys.block_matrix();
    let mut f = DVector::zeros(n + 1);
    for j in 0..=n {
        full[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
    }
    f[0] = 1.0;
    for i in 1..n {
        f[i] = rhs[i - 1];
    }
    let x_full = full.lu().solve(&f).unwrap();

    let c = sys.condense().unwrap();
    let mut cond = c.matrix.clone();
    for j in 0..n {
        cond[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
    }
    let x = cond.lu().solve(&f.rows(0, n).into_owned()).unwrap();
    let star = c.recovery.dot(&x);
    let mut err = (&x - x_full.rows(0, n)).amax();
    err = err.max((star - x_full[n]).abs());
    err / x_full.amax()
}

#[test]
fn condensation_equals_block_solve() {
    let m = MaterialPair::new(3.0, 1.0).unwrap();
    assert!(block_versus_condensed(&unit_triangle(), &[-1.0, 1.0, 1.0], &m, &[0.3, -0.2]) < 1e-12);
    assert!(block_versus_condensed(&unit_triangle(), &[0.4, -0.25, 0.9], &m, &[1.0, 0.5]) < 1e-12);
    let m = MaterialPair::new(1.0, 7.0).unwrap();
    assert!(
        block_versus_condensed(&skew_tet(), &[-0.3, 0.6, -0.2, 0.4], &m, &[0.1, 0.2, -0.4]) < 1e-12
    );
}
