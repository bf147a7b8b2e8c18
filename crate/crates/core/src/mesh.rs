//! Simplex meshes (triangles in 2D, tetrahedra in 3D) with boundary tags and
//! element-to-element face adjacency.
//!
//! Points are stored as 3-vectors in both dimensions; in 2D the `z` component
//! is always zero. Local face `k` of an element is the face opposite its local
//! node `k`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Vector3};
use thiserror::Error;

pub type Point = Vector3<f64>;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh dimension {0} (expected 2 or 3)")]
    Dimension(usize),
    #[error("subdivision counts must be >= 1 (got {0:?})")]
    Subdivision(Vec<usize>),
    #[error("domain box must have positive extent")]
    EmptyBox,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("element {element} references node {node}, but the mesh has {n_nodes} nodes")]
    DanglingNode {
        element: usize,
        node: usize,
        n_nodes: usize,
    },
    #[error("element {0} repeats a node index")]
    RepeatedNode(usize),
    #[error(
        "element {element} has non-positive measure {measure:e} under its stored node ordering"
    )]
    Orientation { element: usize, measure: f64 },
    #[error("face shared by more than two elements (element {0})")]
    NonManifold(usize),
    #[error("boundary record {index} refers to element {element} local face {face}, which is not a boundary face")]
    NotBoundary {
        index: usize,
        element: usize,
        face: usize,
    },
    #[error("boundary face (element {element}, local face {face}) has no tag")]
    Untagged { element: usize, face: usize },
    #[error("boundary face (element {element}, local face {face}) is tagged twice")]
    DuplicateTag { element: usize, face: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a tagged part of the boundary is constrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    /// Prescribed potential (volts).
    Dirichlet(f64),
    /// Zero normal electric displacement.
    NeumannZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTag {
    pub name: String,
    pub kind: BoundaryKind,
}

impl BoundaryTag {
    pub fn dirichlet(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            kind: BoundaryKind::Dirichlet(value),
        }
    }

    pub fn neumann(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: BoundaryKind::NeumannZero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryFace {
    pub element: usize,
    pub local_face: usize,
    /// Index into [`Mesh::tag_names`].
    pub tag: usize,
}

/// One geometric face of the mesh. Interior faces carry the neighbouring
/// element and its local face index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Face {
    pub element: usize,
    pub local_face: usize,
    pub neighbor: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<Point>,
    /// Flat connectivity, `dim + 1` entries per element.
    connectivity: Vec<usize>,
    tag_names: Vec<String>,
    boundary: Vec<BoundaryFace>,
    faces: Vec<Face>,
    /// `neighbors[e * (dim + 1) + k]` is the element across local face `k`.
    neighbors: Vec<Option<usize>>,
}

/// Per-element geometric data for a P1 simplex.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub dim: usize,
    pub coords: Vec<Point>,
    pub measure: f64,
    /// Constant gradients of the P1 shape functions.
    pub gradients: Vec<Point>,
}

type FaceKey = [usize; 3];

fn face_key(element: &[usize], local_face: usize) -> FaceKey {
    let mut key = [usize::MAX; 3];
    let mut n = 0;
    for (k, &node) in element.iter().enumerate() {
        if k != local_face {
            key[n] = node;
            n += 1;
        }
    }
    key[..n].sort_unstable();
    key
}

/// Builds the face list and neighbour table from connectivity.
fn build_faces(
    dim: usize,
    connectivity: &[usize],
) -> Result<(Vec<Face>, Vec<Option<usize>>), MeshError> {
    let npe = dim + 1;
    let n_elements = connectivity.len() / npe;
    let mut index: HashMap<FaceKey, usize> = HashMap::with_capacity(n_elements * npe);
    let mut faces: Vec<Face> = Vec::new();
    let mut neighbors = vec![None; connectivity.len()];
    for e in 0..n_elements {
        let element = &connectivity[e * npe..(e + 1) * npe];
        for k in 0..npe {
            let key = face_key(element, k);
            match index.get(&key) {
                None => {
                    index.insert(key, faces.len());
                    faces.push(Face {
                        element: e,
                        local_face: k,
                        neighbor: None,
                    });
                }
                Some(&f) => {
                    let face = &mut faces[f];
                    if face.neighbor.is_some() {
                        return Err(MeshError::NonManifold(e));
                    }
                    face.neighbor = Some((e, k));
                    neighbors[face.element * npe + face.local_face] = Some(e);
                    neighbors[e * npe + k] = Some(face.element);
                }
            }
        }
    }
    Ok((faces, neighbors))
}

impl ElementGeometry {
    /// Computes measure and shape-function gradients. Fails on non-positive
    /// measure; the element index in the error is left as `usize::MAX`, callers
    /// that know the index replace it.
    pub fn from_coords(dim: usize, coords: &[Point]) -> Result<Self, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::Dimension(dim));
        }
        assert_eq!(coords.len(), dim + 1, "simplex needs dim + 1 vertices");
        let x0 = coords[0];
        let mut gradients = vec![Point::zeros(); dim + 1];
        let measure;
        if dim == 2 {
            let e1 = coords[1] - x0;
            let e2 = coords[2] - x0;
            let jac = Matrix2::new(e1.x, e2.x, e1.y, e2.y);
            let det = jac.determinant();
            measure = 0.5 * det;
            if !(measure > 0.0) {
                return Err(MeshError::Orientation {
                    element: usize::MAX,
                    measure,
                });
            }
            // Rows of J^{-1} are the gradients of N_1, N_2.
            let inv = jac.try_inverse().expect("positive determinant");
            for i in 0..2 {
                gradients[i + 1] = Point::new(inv[(i, 0)], inv[(i, 1)], 0.0);
            }
        } else {
            let jac = Matrix3::from_columns(&[coords[1] - x0, coords[2] - x0, coords[3] - x0]);
            let det = jac.determinant();
            measure = det / 6.0;
            if !(measure > 0.0) {
                return Err(MeshError::Orientation {
                    element: usize::MAX,
                    measure,
                });
            }
            let inv = jac.try_inverse().expect("positive determinant");
            for i in 0..3 {
                gradients[i + 1] = Point::new(inv[(i, 0)], inv[(i, 1)], inv[(i, 2)]);
            }
        }
        let sum: Point = gradients[1..].iter().sum();
        gradients[0] = -sum;
        Ok(Self {
            dim,
            coords: coords.to_vec(),
            measure,
            gradients,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.dim + 1
    }

    /// Barycentric coordinates (values of the P1 shape functions) at `x`.
    pub fn barycentric(&self, x: &Point) -> Vec<f64> {
        let dx = x - self.coords[0];
        let mut lambda: Vec<f64> = self.gradients.iter().map(|g| g.dot(&dx)).collect();
        lambda[0] += 1.0;
        lambda
    }

    pub fn point_from_barycentric(&self, lambda: &[f64]) -> Point {
        self.coords.iter().zip(lambda).map(|(c, &l)| c * l).sum()
    }

    /// Characteristic length: the longest edge.
    pub fn h(&self) -> f64 {
        let mut h: f64 = 0.0;
        for i in 0..self.coords.len() {
            for j in i + 1..self.coords.len() {
                h = h.max((self.coords[i] - self.coords[j]).norm());
            }
        }
        h
    }

    pub fn centroid(&self) -> Point {
        self.coords.iter().sum::<Point>() / self.coords.len() as f64
    }

    /// Outward unit normal of local face `k`.
    pub fn face_normal(&self, k: usize) -> Point {
        -self.gradients[k].normalize()
    }

    /// Measure (length or area) of local face `k`.
    pub fn face_measure(&self, k: usize) -> f64 {
        // |grad N_k| = face_measure / (dim * measure)
        self.gradients[k].norm() * self.dim as f64 * self.measure
    }
}

/// Measure of a simplex given by its vertices, unsigned. Works for segments,
/// triangles and tetrahedra embedded in 3-space.
pub fn simplex_measure(points: &[Point]) -> f64 {
    match points.len() {
        2 => (points[1] - points[0]).norm(),
        3 => {
            0.5 * (points[1] - points[0])
                .cross(&(points[2] - points[0]))
                .norm()
        }
        4 => {
            let m = Matrix3::from_columns(&[
                points[1] - points[0],
                points[2] - points[0],
                points[3] - points[0],
            ]);
            m.determinant().abs() / 6.0
        }
        n => panic!("unsupported simplex with {n} vertices"),
    }
}

impl Mesh {
    /// Builds and validates a mesh. `boundary` lists `(element, local_face,
    /// tag_name)` and must tag every boundary face exactly once.
    pub fn new(
        dim: usize,
        nodes: Vec<Point>,
        connectivity: Vec<usize>,
        boundary: Vec<(usize, usize, String)>,
    ) -> Result<Self, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::Dimension(dim));
        }
        let npe = dim + 1;
        assert_eq!(connectivity.len() % npe, 0, "ragged connectivity");
        let n_nodes = nodes.len();
        for (e, element) in connectivity.chunks(npe).enumerate() {
            for (a, &node) in element.iter().enumerate() {
                if node >= n_nodes {
                    return Err(MeshError::DanglingNode {
                        element: e,
                        node,
                        n_nodes,
                    });
                }
                if element[..a].contains(&node) {
                    return Err(MeshError::RepeatedNode(e));
                }
            }
            let coords: Vec<Point> = element.iter().map(|&n| nodes[n]).collect();
            if let Err(MeshError::Orientation { measure, .. }) =
                ElementGeometry::from_coords(dim, &coords)
            {
                return Err(MeshError::Orientation {
                    element: e,
                    measure,
                });
            }
        }
        let (faces, neighbors) = build_faces(dim, &connectivity)?;

        let mut tag_names: Vec<String> = Vec::new();
        let mut tagged = vec![false; connectivity.len()];
        let mut records = Vec::with_capacity(boundary.len());
        for (index, (element, local_face, tag)) in boundary.into_iter().enumerate() {
            let slot = element * npe + local_face;
            if local_face >= npe || slot >= neighbors.len() || neighbors[slot].is_some() {
                return Err(MeshError::NotBoundary {
                    index,
                    element,
                    face: local_face,
                });
            }
            if tagged[slot] {
                return Err(MeshError::DuplicateTag {
                    element,
                    face: local_face,
                });
            }
            tagged[slot] = true;
            let tag = match tag_names.iter().position(|t| *t == tag) {
                Some(t) => t,
                None => {
                    tag_names.push(tag);
                    tag_names.len() - 1
                }
            };
            records.push(BoundaryFace {
                element,
                local_face,
                tag,
            });
        }
        for face in faces.iter().filter(|f| f.neighbor.is_none()) {
            if !tagged[face.element * npe + face.local_face] {
                return Err(MeshError::Untagged {
                    element: face.element,
                    face: face.local_face,
                });
            }
        }
        Ok(Self {
            dim,
            nodes,
            connectivity,
            tag_names,
            boundary: records,
            faces,
            neighbors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.connectivity.len() / (self.dim + 1)
    }

    pub fn nodes_per_element(&self) -> usize {
        self.dim + 1
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let npe = self.dim + 1;
        &self.connectivity[e * npe..(e + 1) * npe]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> {
        self.connectivity.chunks(self.dim + 1)
    }

    pub fn tag_names(&self) -> &[String] {
        &self.tag_names
    }

    pub fn tag_index(&self, name: &str) -> Option<usize> {
        self.tag_names.iter().position(|t| t == name)
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Element on the other side of local face `k` of element `e`.
    pub fn neighbor(&self, e: usize, k: usize) -> Option<usize> {
        self.neighbors[e * (self.dim + 1) + k]
    }

    pub fn is_boundary_face(&self, e: usize, k: usize) -> bool {
        self.neighbor(e, k).is_none()
    }

    pub fn n_interior_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.neighbor.is_some()).count()
    }

    /// Global node indices of local face `k` of element `e`.
    pub fn face_nodes(&self, e: usize, k: usize) -> Vec<usize> {
        self.element(e)
            .iter()
            .enumerate()
            .filter(|&(a, _)| a != k)
            .map(|(_, &n)| n)
            .collect()
    }

    pub fn element_coords(&self, e: usize) -> Vec<Point> {
        self.element(e).iter().map(|&n| self.nodes[n]).collect()
    }

    pub fn element_geometry(&self, e: usize) -> ElementGeometry {
        ElementGeometry::from_coords(self.dim, &self.element_coords(e))
            .expect("mesh elements are validated on construction")
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| self.element_geometry(e).measure)
            .sum()
    }

    /// Axis-aligned bounding box of all nodes.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if self.dim == 2 {
            lo.z = 0.0;
            hi.z = 0.0;
        }
        (lo, hi)
    }

    /// Largest element edge length.
    pub fn max_h(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| self.element_geometry(e).h())
            .fold(0.0, f64::max)
    }

    /// Nodes lying on faces carrying tag `tag`.
    pub fn tagged_nodes(&self, tag: usize) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .boundary
            .iter()
            .filter(|b| b.tag == tag)
            .flat_map(|b| self.face_nodes(b.element, b.local_face))
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses the line-based text format:
    ///
    /// ```text
    /// dim n_nodes n_elements n_boundary_faces
    /// x y [z]                 (n_nodes lines)
    /// i0 i1 i2 [i3]           (n_elements lines, 0-based)
    /// element local_face tag  (n_boundary_faces lines)
    /// ```
    ///
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, MeshError> {
        let mut lines = text.lines().enumerate().filter_map(|(i, raw)| {
            let content = raw.split('#').next().unwrap_or("").trim();
            (!content.is_empty()).then_some((i + 1, content))
        });
        let parse_err = |line: usize, message: String| MeshError::Parse { line, message };
        fn num<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T, MeshError> {
            tok.parse().map_err(|_| MeshError::Parse {
                line,
                message: format!("cannot parse {what} from '{tok}'"),
            })
        }

        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty mesh file".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 4 {
            return Err(parse_err(
                hline,
                "header must be 'dim n_nodes n_elements n_boundary_faces'".into(),
            ));
        }
        let dim: usize = num(hline, head[0], "dim")?;
        if dim != 2 && dim != 3 {
            return Err(parse_err(hline, format!("dim must be 2 or 3, got {dim}")));
        }
        let n_nodes: usize = num(hline, head[1], "node count")?;
        let n_elements: usize = num(hline, head[2], "element count")?;
        let n_boundary: usize = num(hline, head[3], "boundary face count")?;

        let mut next = |what: &str| {
            lines.next().ok_or_else(|| {
                parse_err(usize::MAX, format!("unexpected end of file reading {what}"))
            })
        };

        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (ln, l) = next("nodes")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != dim {
                return Err(parse_err(ln, format!("node line needs {dim} coordinates")));
            }
            let mut p = Point::zeros();
            for (c, tok) in toks.iter().enumerate() {
                p[c] = num(ln, tok, "coordinate")?;
            }
            nodes.push(p);
        }
        let mut connectivity = Vec::with_capacity(n_elements * (dim + 1));
        for _ in 0..n_elements {
            let (ln, l) = next("elements")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != dim + 1 {
                return Err(parse_err(
                    ln,
                    format!("element line needs {} node indices", dim + 1),
                ));
            }
            for tok in toks {
                connectivity.push(num(ln, tok, "node index")?);
            }
        }
        let mut boundary = Vec::with_capacity(n_boundary);
        for _ in 0..n_boundary {
            let (ln, l) = next("boundary faces")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(parse_err(
                    ln,
                    "boundary line must be 'element local_face tag'".into(),
                ));
            }
            let element: usize = num(ln, toks[0], "element index")?;
            let face: usize = num(ln, toks[1], "local face")?;
            if element >= n_elements || face > dim {
                return Err(parse_err(
                    ln,
                    format!("boundary face ({element}, {face}) out of range"),
                ));
            }
            boundary.push((element, face, toks[2].to_string()));
        }
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln, "trailing data after boundary section".into()));
        }
        Self::new(dim, nodes, connectivity, boundary)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.dim,
            self.n_nodes(),
            self.n_elements(),
            self.boundary.len()
        );
        for p in &self.nodes {
            for c in 0..self.dim {
                let _ = write!(out, "{}{}", if c > 0 { " " } else { "" }, p[c]);
            }
            out.push('\n');
        }
        for element in self.elements() {
            let line: Vec<String> = element.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        for b in &self.boundary {
            let _ = writeln!(
                out,
                "{} {} {}",
                b.element, b.local_face, self.tag_names[b.tag]
            );
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Structured simplex mesh of the box `[lo, hi]`.
///
/// In 2D each cell is split into two triangles along the diagonal from node
/// `(i, j)` to `(i + 1, j + 1)`. In 3D each cell is split into six tetrahedra
/// sharing the main diagonal, which keeps neighbouring cells conforming.
/// Boundary faces are tagged `left`/`right` (x), `bottom`/`top` (y) and
/// `front`/`back` (z).
pub fn generate_structured(
    dim: usize,
    counts: &[usize],
    lo: Point,
    hi: Point,
) -> Result<Mesh, MeshError> {
    if dim != 2 && dim != 3 {
        return Err(MeshError::Dimension(dim));
    }
    if counts.len() != dim || counts.contains(&0) {
        return Err(MeshError::Subdivision(counts.to_vec()));
    }
    if (0..dim).any(|c| !(hi[c] > lo[c])) {
        return Err(MeshError::EmptyBox);
    }
    let n = [counts[0], counts[1], if dim == 3 { counts[2] } else { 0 }];
    let stride = [1, n[0] + 1, (n[0] + 1) * (n[1] + 1)];
    let coord = |c: usize, i: usize| {
        if i == n[c] {
            hi[c]
        } else {
            lo[c] + (hi[c] - lo[c]) * i as f64 / n[c] as f64
        }
    };

    let mut nodes = Vec::new();
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                let z = if dim == 3 { coord(2, k) } else { 0.0 };
                nodes.push(Point::new(coord(0, i), coord(1, j), z));
            }
        }
    }
    let id = |i: usize, j: usize, k: usize| i * stride[0] + j * stride[1] + k * stride[2];

    let mut connectivity = Vec::new();
    if dim == 2 {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let a = id(i, j, 0);
                let b = id(i + 1, j, 0);
                let c = id(i + 1, j + 1, 0);
                let d = id(i, j + 1, 0);
                connectivity.extend_from_slice(&[a, b, c, a, c, d]);
            }
        }
    } else {
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    for perm in PERMS {
                        let mut cur = [i, j, k];
                        let mut tet = [id(i, j, k), 0, 0, 0];
                        for (s, &axis) in perm.iter().enumerate() {
                            cur[axis] += 1;
                            tet[s + 1] = id(cur[0], cur[1], cur[2]);
                        }
                        let pts: Vec<Point> = tet.iter().map(|&v| nodes[v]).collect();
                        let m = Matrix3::from_columns(&[
                            pts[1] - pts[0],
                            pts[2] - pts[0],
                            pts[3] - pts[0],
                        ]);
                        if m.determinant() < 0.0 {
                            tet.swap(2, 3);
                        }
                        connectivity.extend_from_slice(&tet);
                    }
                }
            }
        }
    }

    // Tag boundary faces by the box side all of their nodes lie on, using
    // integer grid indices to avoid floating-point comparisons.
    let grid_index = |v: usize| {
        [
            v % stride[1],
            (v / stride[1]) % (n[1] + 1),
            v / stride[2].max(1),
        ]
    };
    let (faces, _) = build_faces(dim, &connectivity)?;
    let npe = dim + 1;
    let sides = [["left", "right"], ["bottom", "top"], ["front", "back"]];
    let mut boundary = Vec::new();
    for face in faces.iter().filter(|f| f.neighbor.is_none()) {
        let element = &connectivity[face.element * npe..(face.element + 1) * npe];
        let idx: Vec<[usize; 3]> = element
            .iter()
            .enumerate()
            .filter(|&(a, _)| a != face.local_face)
            .map(|(_, &v)| {
                let mut g = grid_index(v);
                if dim == 2 {
                    g[2] = 0;
                }
                g
            })
            .collect();
        let tag = (0..dim)
            .find_map(|c| {
                if idx.iter().all(|g| g[c] == 0) {
                    Some(sides[c][0])
                } else if idx.iter().all(|g| g[c] == n[c]) {
                    Some(sides[c][1])
                } else {
                    None
                }
            })
            .expect("structured boundary face lies on a box side");
        boundary.push((face.element, face.local_face, tag.to_string()));
    }
    Mesh::new(dim, nodes, connectivity, boundary)
}

/// Unit-box structured mesh with `n` cells per direction.
pub fn unit_box(dim: usize, n: usize) -> Result<Mesh, MeshError> {
    let hi = if dim == 2 {
        Point::new(1.0, 1.0, 0.0)
    } else {
        Point::new(1.0, 1.0, 1.0)
    };
    generate_structured(dim, &vec![n; dim], Point::zeros(), hi)
}

/// Number of cells per unit length for a nominal element size `h`.
pub fn cells_for_h(h: f64) -> usize {
    ((1.0 / h).round() as usize).max(1)
}
