//! Material interface as a signed distance function, element classification
//! and decomposition of cut elements into sign-homogeneous children.
//!
//! Material 1 lives where the distance is positive, material 2 where it is
//! negative. Inside an element the interface is the zero set of the linear
//! interpolant of the nodal distances, so every cut is planar.

use log::warn;
use thiserror::Error;

use crate::mesh::{simplex_measure, ElementGeometry, Mesh, Point};

/// Nodal distances closer to zero than `SNAP_TOLERANCE * h_e` are pushed to
/// `±SNAP_TOLERANCE * h_e`.
pub const SNAP_TOLERANCE: f64 = 1e-6;

/// Children smaller than this fraction of the parent make the cut degenerate.
pub const DEGENERATE_FRACTION: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum LevelSetError {
    #[error("plane normal must be non-zero and finite")]
    ZeroNormal,
    #[error("radius must be positive and finite (got {0})")]
    Radius(f64),
    #[error("nodal level set can only be evaluated at mesh nodes")]
    OffNode,
    #[error("nodal level set has {values} values but the mesh has {nodes} nodes")]
    NodeCount { values: usize, nodes: usize },
    #[error("{kind} level set is incompatible with a {dim}D mesh")]
    Dimension { kind: &'static str, dim: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("nodal distances do not change sign")]
    NotCut,
    #[error("cut produces a degenerate child (measure fraction {fraction:e})")]
    Degenerate {
        fraction: f64,
        positive_measure: f64,
        negative_measure: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    /// Sign of `d`; zero counts as positive.
    pub fn of(d: f64) -> Self {
        if d < 0.0 {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevelSet {
    Plane { point: Point, normal: Point },
    Circle { center: Point, radius: f64 },
    Sphere { center: Point, radius: f64 },
    Nodal(Vec<f64>),
}

impl LevelSet {
    /// Plane through `point`; the distance is positive on the side `normal`
    /// points to. The normal is normalised here.
    pub fn plane(point: Point, normal: Point) -> Result<Self, LevelSetError> {
        let len = normal.norm();
        if !(len > 0.0 && len.is_finite()) {
            return Err(LevelSetError::ZeroNormal);
        }
        Ok(LevelSet::Plane {
            point,
            normal: normal / len,
        })
    }

    /// Circle in the xy-plane, positive outside.
    pub fn circle(center: Point, radius: f64) -> Result<Self, LevelSetError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LevelSetError::Radius(radius));
        }
        Ok(LevelSet::Circle { center, radius })
    }

    /// Sphere, positive outside.
    pub fn sphere(center: Point, radius: f64) -> Result<Self, LevelSetError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LevelSetError::Radius(radius));
        }
        Ok(LevelSet::Sphere { center, radius })
    }

    /// Signed Euclidean distance at `x`.
    pub fn evaluate(&self, x: &Point) -> Result<f64, LevelSetError> {
        match self {
            LevelSet::Plane { point, normal } => Ok((x - point).dot(normal)),
            LevelSet::Circle { center, radius } => {
                Ok(((x.x - center.x).powi(2) + (x.y - center.y).powi(2)).sqrt() - radius)
            }
            LevelSet::Sphere { center, radius } => Ok((x - center).norm() - radius),
            LevelSet::Nodal(_) => Err(LevelSetError::OffNode),
        }
    }

    pub fn check_dimension(&self, dim: usize) -> Result<(), LevelSetError> {
        let ok = match self {
            LevelSet::Plane { normal, point } => dim == 3 || (normal.z == 0.0 && point.z == 0.0),
            LevelSet::Circle { .. } => dim == 2,
            LevelSet::Sphere { .. } => dim == 3,
            LevelSet::Nodal(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(LevelSetError::Dimension {
                kind: self.kind(),
                dim,
            })
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LevelSet::Plane { .. } => "plane",
            LevelSet::Circle { .. } => "circle",
            LevelSet::Sphere { .. } => "sphere",
            LevelSet::Nodal(_) => "nodal",
        }
    }

    pub fn nodal_values(&self, mesh: &Mesh) -> Result<Vec<f64>, LevelSetError> {
        self.check_dimension(mesh.dim())?;
        match self {
            LevelSet::Nodal(values) => {
                if values.len() != mesh.n_nodes() {
                    return Err(LevelSetError::NodeCount {
                        values: values.len(),
                        nodes: mesh.n_nodes(),
                    });
                }
                Ok(values.clone())
            }
            _ => mesh.nodes().iter().map(|x| self.evaluate(x)).collect(),
        }
    }
}

/// A vertex of a child simplex or facet piece: an element node or a virtual
/// interface node, stored with its barycentric coordinates in the parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutVertex {
    pub bary: [f64; 4],
    pub point: Point,
}

impl CutVertex {
    fn node(coords: &[Point], i: usize) -> Self {
        let mut bary = [0.0; 4];
        bary[i] = 1.0;
        Self {
            bary,
            point: coords[i],
        }
    }

    /// Linear interpolant of the nodal values `d` at this vertex.
    pub fn interpolate(&self, d: &[f64]) -> f64 {
        d.iter().zip(&self.bary).map(|(v, l)| v * l).sum()
    }
}

/// Zero crossing of the interpolated distance on edge `(i, j)`. The edge is
/// always parametrised from the lower local index so both faces and children
/// produce bit-identical points.
fn edge_crossing(coords: &[Point], d: &[f64], i: usize, j: usize) -> CutVertex {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    let t = d[a] / (d[a] - d[b]);
    let mut bary = [0.0; 4];
    bary[a] = 1.0 - t;
    bary[b] = t;
    CutVertex {
        bary,
        point: coords[a] + (coords[b] - coords[a]) * t,
    }
}

#[derive(Debug, Clone)]
pub struct VirtualNode {
    pub edge: (usize, usize),
    pub vertex: CutVertex,
}

#[derive(Debug, Clone)]
pub struct Child {
    pub vertices: Vec<CutVertex>,
    pub sign: Sign,
    pub measure: f64,
}

impl Child {
    pub fn centroid(&self) -> CutVertex {
        let n = self.vertices.len() as f64;
        let mut bary = [0.0; 4];
        let mut point = Point::zeros();
        for v in &self.vertices {
            for (b, vb) in bary.iter_mut().zip(&v.bary) {
                *b += vb / n;
            }
            point += v.point / n;
        }
        CutVertex { bary, point }
    }
}

/// Sign-homogeneous part of an exterior face.
#[derive(Debug, Clone)]
pub struct FacetPiece {
    pub vertices: Vec<CutVertex>,
    pub sign: Sign,
    pub measure: f64,
}

#[derive(Debug, Clone)]
pub struct FaceCut {
    pub local_face: usize,
    /// More than one piece iff the interface crosses the face.
    pub pieces: Vec<FacetPiece>,
}

impl FaceCut {
    pub fn is_crossed(&self) -> bool {
        self.pieces.len() > 1
    }
}

#[derive(Debug, Clone)]
pub struct CutDecomposition {
    pub element: usize,
    pub coords: Vec<Point>,
    /// Snapped nodal distances.
    pub nodal_d: Vec<f64>,
    pub virtual_nodes: Vec<VirtualNode>,
    pub children: Vec<Child>,
    /// Interface inside the element: one segment in 2D, one or two triangles in 3D.
    pub interface_facets: Vec<Vec<CutVertex>>,
    pub cut_faces: Vec<FaceCut>,
}

impl CutDecomposition {
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn measure_of(&self, sign: Sign) -> f64 {
        self.children
            .iter()
            .filter(|c| c.sign == sign)
            .map(|c| c.measure)
            .sum()
    }

    pub fn interface_measure(&self) -> f64 {
        self.interface_facets
            .iter()
            .map(|f| {
                let pts: Vec<Point> = f.iter().map(|v| v.point).collect();
                simplex_measure(&pts)
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
pub enum ElementCut {
    Uncut(Sign),
    Cut(Box<CutDecomposition>),
}

impl ElementCut {
    pub fn is_cut(&self) -> bool {
        matches!(self, ElementCut::Cut(_))
    }

    pub fn decomposition(&self) -> Option<&CutDecomposition> {
        match self {
            ElementCut::Cut(d) => Some(d),
            ElementCut::Uncut(_) => None,
        }
    }
}

/// Per-element interface classification of a mesh.
#[derive(Debug, Clone)]
pub struct Classification {
    pub elements: Vec<ElementCut>,
    /// Elements with mixed signs whose cut was degenerate and that are
    /// treated as uncut.
    pub fallbacks: Vec<usize>,
}

impl Classification {
    pub fn n_cut(&self) -> usize {
        self.elements.iter().filter(|c| c.is_cut()).count()
    }

    pub fn cut_elements(&self) -> impl Iterator<Item = &CutDecomposition> {
        self.elements.iter().filter_map(ElementCut::decomposition)
    }

    /// Material by the level-set sign at each centroid, with no cuts. Meant
    /// for meshes that conform to the interface.
    pub fn by_centroid(mesh: &Mesh, levelset: &LevelSet) -> Result<Self, LevelSetError> {
        levelset.check_dimension(mesh.dim())?;
        let elements = (0..mesh.n_elements())
            .map(|e| {
                let c = mesh.element_geometry(e).centroid();
                levelset
                    .evaluate(&c)
                    .map(|d| ElementCut::Uncut(Sign::of(d)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            elements,
            fallbacks: Vec::new(),
        })
    }
}

/// Pushes nodal distances away from zero so no node lies on the interface.
pub fn snap_distances(d: &[f64], h: f64, tolerance: f64) -> Vec<f64> {
    let eps = tolerance * h;
    d.iter()
        .map(|&v| {
            if v.abs() < eps {
                Sign::of(v).value() * eps
            } else {
                v
            }
        })
        .collect()
}

fn uniform_sign(d: &[f64]) -> Option<Sign> {
    let s = Sign::of(d[0]);
    d.iter().all(|&v| Sign::of(v) == s).then_some(s)
}

fn oriented(dim: usize, mut vertices: Vec<CutVertex>) -> Vec<CutVertex> {
    let pts: Vec<Point> = vertices.iter().map(|v| v.point).collect();
    let signed = if dim == 2 {
        let a = pts[1] - pts[0];
        let b = pts[2] - pts[0];
        a.x * b.y - a.y * b.x
    } else {
        (pts[1] - pts[0]).dot(&(pts[2] - pts[0]).cross(&(pts[3] - pts[0])))
    };
    if signed < 0.0 {
        vertices.swap(1, 2);
    }
    vertices
}

fn make_child(dim: usize, vertices: Vec<CutVertex>, sign: Sign) -> Child {
    let vertices = oriented(dim, vertices);
    let pts: Vec<Point> = vertices.iter().map(|v| v.point).collect();
    Child {
        measure: simplex_measure(&pts),
        vertices,
        sign,
    }
}

fn tet_quality(p: &[Point; 4]) -> f64 {
    let mut lmax: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            lmax = lmax.max((p[i] - p[j]).norm());
        }
    }
    if lmax == 0.0 {
        return 0.0;
    }
    simplex_measure(p) / lmax.powi(3)
}

/// Splits the convex prism with bottom triangle `p` and top triangle `q`
/// (lateral edges `p[i]-q[i]`) into three tetrahedra. Among the six
/// rotation/reflection variants the one whose worst tetrahedron has the best
/// volume-to-edge ratio is chosen; ties keep the earliest variant.
fn split_prism(p: [CutVertex; 3], q: [CutVertex; 3]) -> [[CutVertex; 4]; 3] {
    const ORDERS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [1, 2, 0],
        [2, 0, 1],
        [0, 2, 1],
        [2, 1, 0],
        [1, 0, 2],
    ];
    let mut best = None;
    let mut best_quality = f64::NEG_INFINITY;
    for o in ORDERS {
        let tets = [
            [p[o[0]], p[o[1]], p[o[2]], q[o[2]]],
            [p[o[0]], p[o[1]], q[o[1]], q[o[2]]],
            [p[o[0]], q[o[0]], q[o[1]], q[o[2]]],
        ];
        let quality = tets
            .iter()
            .map(|t| tet_quality(&[t[0].point, t[1].point, t[2].point, t[3].point]))
            .fold(f64::INFINITY, f64::min);
        if quality > best_quality {
            best_quality = quality;
            best = Some(tets);
        }
    }
    best.expect("at least one prism split")
}

/// Splits a simplex with mixed-sign nodal distances into sign-homogeneous
/// children. Cut faces are left empty; see [`cut_exterior_faces`].
pub fn split_simplex(
    element: usize,
    coords: &[Point],
    nodal_d: &[f64],
) -> Result<CutDecomposition, SplitError> {
    let dim = coords.len() - 1;
    assert!(
        dim == 2 || dim == 3,
        "split_simplex needs a triangle or tetrahedron"
    );
    if uniform_sign(nodal_d).is_some() {
        return Err(SplitError::NotCut);
    }
    let signs: Vec<Sign> = nodal_d.iter().map(|&d| Sign::of(d)).collect();
    let positives: Vec<usize> = (0..=dim).filter(|&i| signs[i] == Sign::Positive).collect();
    let negatives: Vec<usize> = (0..=dim).filter(|&i| signs[i] == Sign::Negative).collect();
    let node = |i: usize| CutVertex::node(coords, i);
    let cross = |i: usize, j: usize| edge_crossing(coords, nodal_d, i, j);

    let mut virtual_nodes = Vec::new();
    for &i in &positives {
        for &j in &negatives {
            let (a, b) = (i.min(j), i.max(j));
            virtual_nodes.push(VirtualNode {
                edge: (a, b),
                vertex: cross(a, b),
            });
        }
    }
    virtual_nodes.sort_by_key(|v| v.edge);

    let mut children = Vec::new();
    let mut interface_facets = Vec::new();
    if dim == 2 {
        let (k, others) = if positives.len() == 1 {
            (positives[0], negatives)
        } else {
            (negatives[0], positives)
        };
        let (i, j) = (others[0], others[1]);
        let (xi, xj) = (cross(k, i), cross(k, j));
        children.push(make_child(2, vec![node(k), xi, xj], signs[k]));
        let s = signs[i];
        if (coords[i] - xj.point).norm() <= (coords[j] - xi.point).norm() {
            children.push(make_child(2, vec![node(i), node(j), xj], s));
            children.push(make_child(2, vec![node(i), xj, xi], s));
        } else {
            children.push(make_child(2, vec![node(i), node(j), xi], s));
            children.push(make_child(2, vec![node(j), xj, xi], s));
        }
        interface_facets.push(vec![xi, xj]);
    } else if positives.len() == 1 || negatives.len() == 1 {
        let (k, others) = if positives.len() == 1 {
            (positives[0], negatives)
        } else {
            (negatives[0], positives)
        };
        let xs: Vec<CutVertex> = others.iter().map(|&o| cross(k, o)).collect();
        children.push(make_child(3, vec![node(k), xs[0], xs[1], xs[2]], signs[k]));
        let s = signs[others[0]];
        let prism = split_prism(
            [node(others[0]), node(others[1]), node(others[2])],
            [xs[0], xs[1], xs[2]],
        );
        for tet in prism {
            children.push(make_child(3, tet.to_vec(), s));
        }
        interface_facets.push(xs);
    } else {
        let (a, b) = (negatives[0], negatives[1]);
        let (c, e) = (positives[0], positives[1]);
        let (xac, xae, xbc, xbe) = (cross(a, c), cross(a, e), cross(b, c), cross(b, e));
        for tet in split_prism([node(a), xac, xae], [node(b), xbc, xbe]) {
            children.push(make_child(3, tet.to_vec(), Sign::Negative));
        }
        for tet in split_prism([node(c), xac, xbc], [node(e), xae, xbe]) {
            children.push(make_child(3, tet.to_vec(), Sign::Positive));
        }
        // Cyclic quad xac, xae, xbe, xbc; split along the shorter diagonal.
        if (xac.point - xbe.point).norm() <= (xae.point - xbc.point).norm() {
            interface_facets.push(vec![xac, xae, xbe]);
            interface_facets.push(vec![xac, xbe, xbc]);
        } else {
            interface_facets.push(vec![xac, xae, xbc]);
            interface_facets.push(vec![xae, xbe, xbc]);
        }
    }

    let parent = simplex_measure(coords);
    let smallest = children
        .iter()
        .map(|c| c.measure)
        .fold(f64::INFINITY, f64::min);
    if smallest < DEGENERATE_FRACTION * parent {
        let positive_measure = children
            .iter()
            .filter(|c| c.sign == Sign::Positive)
            .map(|c| c.measure)
            .sum();
        let negative_measure = children
            .iter()
            .filter(|c| c.sign == Sign::Negative)
            .map(|c| c.measure)
            .sum();
        return Err(SplitError::Degenerate {
            fraction: smallest / parent,
            positive_measure,
            negative_measure,
        });
    }

    Ok(CutDecomposition {
        element,
        coords: coords.to_vec(),
        nodal_d: nodal_d.to_vec(),
        virtual_nodes,
        children,
        interface_facets,
        cut_faces: Vec::new(),
    })
}

fn piece(vertices: Vec<CutVertex>, sign: Sign) -> FacetPiece {
    let pts: Vec<Point> = vertices.iter().map(|v| v.point).collect();
    FacetPiece {
        measure: simplex_measure(&pts),
        vertices,
        sign,
    }
}

/// Partitions every exterior face of a cut element into sign-homogeneous
/// pieces. Faces not crossed by the interface come back whole.
pub fn cut_exterior_faces(decomposition: &CutDecomposition) -> Vec<FaceCut> {
    let coords = &decomposition.coords;
    let d = &decomposition.nodal_d;
    let dim = decomposition.dim();
    let node = |i: usize| CutVertex::node(coords, i);
    (0..=dim)
        .map(|k| {
            let face: Vec<usize> = (0..=dim).filter(|&a| a != k).collect();
            let signs: Vec<Sign> = face.iter().map(|&i| Sign::of(d[i])).collect();
            let pieces = if signs.iter().all(|&s| s == signs[0]) {
                vec![piece(face.iter().map(|&i| node(i)).collect(), signs[0])]
            } else if dim == 2 {
                let (i, j) = (face[0], face[1]);
                let x = edge_crossing(coords, d, i, j);
                vec![
                    piece(vec![node(i), x], signs[0]),
                    piece(vec![x, node(j)], signs[1]),
                ]
            } else {
                // Exactly one face node has a sign different from the other two.
                let m = (0..3)
                    .find(|&a| signs.iter().filter(|&&s| s == signs[a]).count() == 1)
                    .expect("mixed triangle has an isolated vertex");
                let o1 = face[(m + 1) % 3];
                let o2 = face[(m + 2) % 3];
                let iso = face[m];
                let x1 = edge_crossing(coords, d, iso, o1);
                let x2 = edge_crossing(coords, d, iso, o2);
                let s_other = signs[(m + 1) % 3];
                vec![
                    piece(vec![node(iso), x1, x2], signs[m]),
                    piece(vec![node(o1), node(o2), x2], s_other),
                    piece(vec![node(o1), x2, x1], s_other),
                ]
            };
            FaceCut {
                local_face: k,
                pieces,
            }
        })
        .collect()
}

/// Classifies every element against the level set. Elements whose cut would be
/// degenerate are treated as uncut with the sign holding the larger volume.
pub fn classify_elements(
    mesh: &Mesh,
    levelset: &LevelSet,
) -> Result<Classification, LevelSetError> {
    classify_with_tolerance(mesh, levelset, SNAP_TOLERANCE)
}

pub fn classify_with_tolerance(
    mesh: &Mesh,
    levelset: &LevelSet,
    snap: f64,
) -> Result<Classification, LevelSetError> {
    let d = levelset.nodal_values(mesh)?;
    let mut elements = Vec::with_capacity(mesh.n_elements());
    let mut fallbacks = Vec::new();
    for e in 0..mesh.n_elements() {
        let geometry: ElementGeometry = mesh.element_geometry(e);
        let raw: Vec<f64> = mesh.element(e).iter().map(|&n| d[n]).collect();
        let snapped = snap_distances(&raw, geometry.h(), snap);
        if let Some(sign) = uniform_sign(&snapped) {
            elements.push(ElementCut::Uncut(sign));
            continue;
        }
        match split_simplex(e, &geometry.coords, &snapped) {
            Ok(mut decomposition) => {
                decomposition.cut_faces = cut_exterior_faces(&decomposition);
                elements.push(ElementCut::Cut(Box::new(decomposition)));
            }
            Err(SplitError::Degenerate {
                fraction,
                positive_measure,
                negative_measure,
            }) => {
                let sign = if positive_measure >= negative_measure {
                    Sign::Positive
                } else {
                    Sign::Negative
                };
                warn!("element {e}: degenerate cut (child fraction {fraction:e}), treated as uncut {sign:?}");
                fallbacks.push(e);
                elements.push(ElementCut::Uncut(sign));
            }
            Err(SplitError::NotCut) => unreachable!("mixed signs checked above"),
        }
    }
    Ok(Classification {
        elements,
        fallbacks,
    })
}
