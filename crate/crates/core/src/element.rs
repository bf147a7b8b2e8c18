//! Elemental enriched systems: hat-function enrichment, the 2x2 block
//! matrices with the inter-elemental displacement terms, and static
//! condensation of the single enrichment degree of freedom.
//!
//! For an element with nodal distances `d_i` the enrichment is
//! `Nbar(x) = sum_i N_i(x) |d_i| - |sum_i N_i(x) d_i|`. It vanishes at the
//! element nodes and is linear inside each sign region, so all volume
//! integrands are constant per child and all face integrands are linear.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::interface::{CutDecomposition, ElementCut, Sign};
use crate::mesh::{ElementGeometry, Point};

/// Relative threshold on `|Kenr - Denr|` below which condensation is refused.
pub const SINGULAR_ENRICHMENT: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("permittivities must be finite and positive (eps1 = {0}, eps2 = {1})")]
    NonPositive(f64, f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum CondenseError {
    #[error("enrichment block is singular: |Kenr - Denr| = {value:e} vs |K| = {scale:e}")]
    SingularEnrichment { value: f64, scale: f64 },
}

/// Permittivities of the two materials. `eps1` belongs to the positive side of
/// the level set, `eps2` to the negative side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialPair {
    pub eps1: f64,
    pub eps2: f64,
}

impl MaterialPair {
    pub fn new(eps1: f64, eps2: f64) -> Result<Self, MaterialError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(eps1) || !ok(eps2) {
            return Err(MaterialError::NonPositive(eps1, eps2));
        }
        Ok(Self { eps1, eps2 })
    }

    /// `eps1 = q`, `eps2 = 1`.
    pub fn from_ratio(q: f64) -> Result<Self, MaterialError> {
        Self::new(q, 1.0)
    }

    pub fn ratio(&self) -> f64 {
        self.eps1 / self.eps2
    }

    pub fn eps(&self, sign: Sign) -> f64 {
        match sign {
            Sign::Positive => self.eps1,
            Sign::Negative => self.eps2,
        }
    }
}

/// Enrichment value at barycentric coordinates `bary`.
pub fn hat_eval(nodal_d: &[f64], bary: &[f64]) -> f64 {
    let mut sum_abs = 0.0;
    let mut sum = 0.0;
    for (d, l) in nodal_d.iter().zip(bary) {
        sum_abs += l * d.abs();
        sum += l * d;
    }
    sum_abs - sum.abs()
}

/// Constant gradient of the enrichment inside the region of sign `side`.
pub fn hat_gradient(gradients: &[Point], nodal_d: &[f64], side: Sign) -> Point {
    let s = side.value();
    gradients
        .iter()
        .zip(nodal_d)
        .map(|(g, &d)| g * (d.abs() - s * d))
        .sum()
}

/// Standard P1 stiffness `eps * |e| * G G^T`.
pub fn stiffness(geometry: &ElementGeometry, eps: f64) -> DMatrix<f64> {
    let n = geometry.n_nodes();
    DMatrix::from_fn(n, n, |i, j| {
        eps * geometry.measure * geometry.gradients[i].dot(&geometry.gradients[j])
    })
}

/// The blocks of the elemental system
///
/// ```text
/// [ K          B            ] [ phi  ]
/// [ B^T - D    Kenr - Denr  ] [ phi* ]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ElementSystem {
    pub k: DMatrix<f64>,
    pub b: DVector<f64>,
    pub kenr: f64,
    pub d: DVector<f64>,
    pub denr: f64,
}

/// Condensed elemental matrix and the vector recovering the enrichment:
/// `phi* = recovery . phi_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condensed {
    pub matrix: DMatrix<f64>,
    pub recovery: DVector<f64>,
}

impl ElementSystem {
    pub fn is_enriched(&self) -> bool {
        self.kenr != 0.0
    }

    pub fn with_displacement(mut self, d: DVector<f64>, denr: f64) -> Self {
        self.d = d;
        self.denr = denr;
        self
    }

    /// Eliminates the enrichment DoF:
    /// `K - B (Kenr - Denr)^-1 (B - D)^T`, recovery `-(Kenr - Denr)^-1 (B - D)`.
    pub fn condense(&self) -> Result<Condensed, CondenseError> {
        let n = self.k.nrows();
        if !self.is_enriched() {
            return Ok(Condensed {
                matrix: self.k.clone(),
                recovery: DVector::zeros(n),
            });
        }
        let pivot = self.kenr - self.denr;
        let scale = self.k.norm();
        if !(pivot.abs() >= SINGULAR_ENRICHMENT * scale) {
            return Err(CondenseError::SingularEnrichment {
                value: pivot.abs(),
                scale,
            });
        }
        let row = &self.b - &self.d;
        let matrix = &self.k - &self.b * row.transpose() / pivot;
        let recovery = -row / pivot;
        Ok(Condensed { matrix, recovery })
    }

    /// The full `(n+1) x (n+1)` block matrix, used for checks against the
    /// condensed form.
    pub fn block_matrix(&self) -> DMatrix<f64> {
        let n = self.k.nrows();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&self.k);
        for i in 0..n {
            m[(i, n)] = self.b[i];
            m[(n, i)] = self.b[i] - self.d[i];
        }
        m[(n, n)] = self.kenr - self.denr;
        m
    }
}

/// Volume blocks `K`, `B`, `Kenr` (displacement terms zero). Uncut elements
/// take the permittivity of their side.
pub fn element_matrices(
    geometry: &ElementGeometry,
    materials: &MaterialPair,
    cut: &ElementCut,
) -> ElementSystem {
    let n = geometry.n_nodes();
    match cut {
        ElementCut::Uncut(sign) => ElementSystem {
            k: stiffness(geometry, materials.eps(*sign)),
            b: DVector::zeros(n),
            kenr: 0.0,
            d: DVector::zeros(n),
            denr: 0.0,
        },
        ElementCut::Cut(decomposition) => cut_element_matrices(geometry, materials, decomposition),
    }
}

fn cut_element_matrices(
    geometry: &ElementGeometry,
    materials: &MaterialPair,
    decomposition: &CutDecomposition,
) -> ElementSystem {
    let n = geometry.n_nodes();
    let g = &geometry.gradients;
    let mut k = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut kenr = 0.0;
    // One point per child suffices: every integrand is constant on a child.
    for child in &decomposition.children {
        let w = materials.eps(child.sign) * child.measure;
        let gbar = hat_gradient(g, &decomposition.nodal_d, child.sign);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] += w * g[i].dot(&g[j]);
            }
            b[i] += w * g[i].dot(&gbar);
        }
        kenr += w * gbar.norm_squared();
    }
    ElementSystem {
        k,
        b,
        kenr,
        d: DVector::zeros(n),
        denr: 0.0,
    }
}

/// Inter-elemental displacement terms
/// `D_i = int Nbar n . (eps grad N_i)` and `Denr = int Nbar n . (eps grad Nbar)`
/// over the exterior faces of a cut element. `include_face(k)` selects which
/// local faces contribute; faces where the enrichment vanishes identically add
/// nothing regardless.
pub fn element_displacement_terms(
    geometry: &ElementGeometry,
    materials: &MaterialPair,
    decomposition: &CutDecomposition,
    include_face: impl Fn(usize) -> bool,
) -> (DVector<f64>, f64) {
    let n = geometry.n_nodes();
    let g = &geometry.gradients;
    let nodal_d = &decomposition.nodal_d;
    let mut d = DVector::zeros(n);
    let mut denr = 0.0;
    for face in decomposition.cut_faces.iter().filter(|f| f.is_crossed()) {
        if !include_face(face.local_face) {
            continue;
        }
        let normal = geometry.face_normal(face.local_face);
        for piece in &face.pieces {
            // The enrichment is linear on the piece: the vertex average is exact.
            let mean: f64 = piece
                .vertices
                .iter()
                .map(|v| hat_eval(nodal_d, &v.bary[..n]))
                .sum::<f64>()
                / piece.vertices.len() as f64;
            let integral = mean * piece.measure;
            let eps = materials.eps(piece.sign);
            let gbar = hat_gradient(g, nodal_d, piece.sign);
            for i in 0..n {
                d[i] += integral * eps * normal.dot(&g[i]);
            }
            denr += integral * eps * normal.dot(&gbar);
        }
    }
    (d, denr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface::{cut_exterior_faces, split_simplex};

    fn p2(x: f64, y: f64) -> Point {
        Point::new(x, y, 0.0)
    }

    fn unit_tri() -> ElementGeometry {
        ElementGeometry::from_coords(2, &[p2(0.0, 0.0), p2(1.0, 0.0), p2(0.0, 1.0)]).unwrap()
    }

    fn cut_unit_tri(d: &[f64]) -> CutDecomposition {
        let g = unit_tri();
        let mut dec = split_simplex(0, &g.coords, d).unwrap();
        dec.cut_faces = cut_exterior_faces(&dec);
        dec
    }

    #[test]
    fn hat_vanishes_at_nodes_and_on_uncut() {
        let d = [-1.0, 0.7, 2.0];
        for i in 0..3 {
            let mut bary = [0.0; 3];
            bary[i] = 1.0;
            assert_eq!(hat_eval(&d, &bary), 0.0);
        }
        assert_eq!(hat_eval(&[0.3, 0.7, 2.0], &[0.2, 0.3, 0.5]), 0.0);
    }

    #[test]
    fn hat_at_virtual_node() {
        // x = (0.5, 0) on the unit triangle with d = (-1, 1, 1).
        assert!((hat_eval(&[-1.0, 1.0, 1.0], &[0.5, 0.5, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uncut_stiffness() {
        let sys = element_matrices(
            &unit_tri(),
            &MaterialPair::new(1.0, 1.0).unwrap(),
            &ElementCut::Uncut(Sign::Positive),
        );
        let expected =
            DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 1.0, 0.0, -1.0, 0.0, 1.0]) * 0.5;
        assert!((sys.k - expected).norm() < 1e-15);
        assert_eq!(sys.kenr, 0.0);
        let c = sys_condensed_uncut();
        assert!(c.recovery.iter().all(|&r| r == 0.0));
    }

    fn sys_condensed_uncut() -> Condensed {
        element_matrices(
            &unit_tri(),
            &MaterialPair::new(2.0, 1.0).unwrap(),
            &ElementCut::Uncut(Sign::Negative),
        )
        .condense()
        .unwrap()
    }

    #[test]
    fn equal_permittivity_cut_matches_uncut() {
        let g = unit_tri();
        let m = MaterialPair::new(2.5, 2.5).unwrap();
        let cut = ElementCut::Cut(Box::new(cut_unit_tri(&[-1.0, 1.0, 1.0])));
        let a = element_matrices(&g, &m, &cut);
        let b = element_matrices(&g, &m, &ElementCut::Uncut(Sign::Positive));
        assert!((a.k - b.k).norm() < 1e-14);
    }

    #[test]
    fn row_sums_vanish() {
        let g = unit_tri();
        let m = MaterialPair::new(3.0, 1.0).unwrap();
        let dec = cut_unit_tri(&[-0.3, 0.5, 1.2]);
        let sys = element_matrices(&g, &m, &ElementCut::Cut(Box::new(dec.clone())));
        let ones = DVector::from_element(3, 1.0);
        assert!((&sys.k * &ones).norm() < 1e-12 * sys.k.norm());
        assert!(sys.b.sum().abs() < 1e-12 * sys.b.norm());
        let (d, _) = element_displacement_terms(&g, &m, &dec, |_| true);
        assert!(d.sum().abs() < 1e-12 * d.norm().max(1.0));
    }

    #[test]
    fn schur_complement_without_displacement_is_symmetric() {
        let g = unit_tri();
        let m = MaterialPair::new(3.0, 1.0).unwrap();
        let sys = element_matrices(
            &g,
            &m,
            &ElementCut::Cut(Box::new(cut_unit_tri(&[-1.0, 1.0, 1.0]))),
        );
        let c = sys.condense().unwrap();
        let expected = &sys.k - &sys.b * sys.b.transpose() / sys.kenr;
        assert!((&c.matrix - &expected).norm() < 1e-14);
        assert!((&c.matrix - c.matrix.transpose()).norm() < 1e-14);
    }

    #[test]
    fn singular_enrichment_is_rejected() {
        let g = unit_tri();
        let m = MaterialPair::new(3.0, 1.0).unwrap();
        let sys = element_matrices(
            &g,
            &m,
            &ElementCut::Cut(Box::new(cut_unit_tri(&[-1.0, 1.0, 1.0]))),
        );
        let denr = sys.kenr;
        let n = sys.d.len();
        let sys = sys.with_displacement(DVector::zeros(n), denr);
        assert!(matches!(
            sys.condense(),
            Err(CondenseError::SingularEnrichment { .. })
        ));
    }

    #[test]
    fn displacement_vanishes_on_uncut_faces() {
        // Only the edges from node 0 are crossed; the face opposite node 0 is not.
        let dec = cut_unit_tri(&[-1.0, 1.0, 1.0]);
        assert!(!dec.cut_faces[0].is_crossed());
        assert!(dec.cut_faces[1].is_crossed() && dec.cut_faces[2].is_crossed());
        let g = unit_tri();
        let m = MaterialPair::new(3.0, 1.0).unwrap();
        let (d_all, denr_all) = element_displacement_terms(&g, &m, &dec, |_| true);
        let (d_some, denr_some) = element_displacement_terms(&g, &m, &dec, |k| k != 0);
        assert_eq!(d_all, d_some);
        assert_eq!(denr_all, denr_some);
    }

    #[test]
    fn material_validation() {
        assert!(MaterialPair::new(0.0, 1.0).is_err());
        assert!(MaterialPair::new(1.0, f64::NAN).is_err());
        assert_eq!(MaterialPair::from_ratio(3.0).unwrap().ratio(), 3.0);
    }
}
