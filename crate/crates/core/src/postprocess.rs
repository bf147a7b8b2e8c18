//! Enrichment recovery, field evaluation, line sampling, error norms and
//! export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use thiserror::Error;

use crate::element::{hat_eval, hat_gradient, MaterialPair};
use crate::interface::{Classification, ElementCut, Sign};
use crate::mesh::{Mesh, Point};

/// Barycentric slack when deciding whether a point lies in an element.
const INSIDE_TOLERANCE: f64 = 1e-10;
/// Relative interpolated distance below which a point counts as on the interface.
const ON_INTERFACE: f64 = 1e-12;
pub const MIN_LINE_SAMPLES: usize = 1000;

#[derive(Debug, Error)]
pub enum PostError {
    #[error("point ({x}, {y}, {z}) is outside the mesh")]
    OutsideMesh { x: f64, y: f64, z: f64 },
    #[error("field has {got} nodal values for {expected} nodes")]
    Length { got: usize, expected: usize },
    #[error("reference is undefined at ({x}, {y}, {z})")]
    Reference { x: f64, y: f64, z: f64 },
    #[error("CSV parse error on line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn outside(x: &Point) -> PostError {
    PostError::OutsideMesh {
        x: x.x,
        y: x.y,
        z: x.z,
    }
}

/// Uniform bucket grid over element bounding boxes.
#[derive(Debug, Clone)]
pub struct PointLocator {
    lo: Point,
    cell: Point,
    counts: [usize; 3],
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let dim = mesh.dim();
        let (lo, hi) = mesh.bounding_box();
        let per_axis = (mesh.n_elements() as f64)
            .powf(1.0 / dim as f64)
            .ceil()
            .max(1.0) as usize;
        let mut counts = [1; 3];
        let mut cell = Point::new(1.0, 1.0, 1.0);
        for a in 0..dim {
            counts[a] = per_axis;
            let extent = (hi[a] - lo[a]).max(f64::MIN_POSITIVE);
            cell[a] = extent / per_axis as f64;
        }
        let mut locator = Self {
            lo,
            cell,
            counts,
            buckets: vec![Vec::new(); counts.iter().product()],
        };
        for e in 0..mesh.n_elements() {
            let coords = mesh.element_coords(e);
            let mut blo = coords[0];
            let mut bhi = coords[0];
            for p in &coords[1..] {
                blo = blo.inf(p);
                bhi = bhi.sup(p);
            }
            let (a, b) = (locator.cell_of(&blo), locator.cell_of(&bhi));
            for i in a[0]..=b[0] {
                for j in a[1]..=b[1] {
                    for k in a[2]..=b[2] {
                        let idx = locator.bucket_index([i, j, k]);
                        locator.buckets[idx].push(e);
                    }
                }
            }
        }
        locator
    }

    fn cell_of(&self, x: &Point) -> [usize; 3] {
        let mut c = [0; 3];
        for a in 0..3 {
            let t = ((x[a] - self.lo[a]) / self.cell[a]).floor();
            c[a] = (t.max(0.0) as usize).min(self.counts[a] - 1);
        }
        c
    }

    fn bucket_index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.counts[1] + c[1]) * self.counts[0] + c[0]
    }

    /// Elements whose bounding box may contain `x`.
    pub fn candidates(&self, x: &Point) -> &[usize] {
        &self.buckets[self.bucket_index(self.cell_of(x))]
    }

    /// Elements whose bounding box may meet the box `[lo, hi]`, sorted.
    pub fn candidates_in_box(&self, lo: &Point, hi: &Point) -> Vec<usize> {
        let (a, b) = (self.cell_of(lo), self.cell_of(hi));
        let mut out = Vec::new();
        for i in a[0]..=b[0] {
            for j in a[1]..=b[1] {
                for k in a[2]..=b[2] {
                    out.extend_from_slice(&self.buckets[self.bucket_index([i, j, k])]);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Per-element `phi* = r_e . phi_e` for the elements that carry a recovery vector.
pub fn recover_enrichment(
    mesh: &Mesh,
    recovery: &[Option<DVector<f64>>],
    phi: &[f64],
) -> Vec<Option<f64>> {
    recovery
        .iter()
        .enumerate()
        .map(|(e, r)| {
            r.as_ref().map(|r| {
                mesh.element(e)
                    .iter()
                    .zip(r.iter())
                    .map(|(&n, ri)| ri * phi[n])
                    .sum()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub phi: f64,
    /// Gradient of the potential.
    pub e: Point,
    pub element: usize,
    pub side: Sign,
}

/// Anything that can supply a potential and field at a point. `side` picks
/// the one-sided value on an interface and is ignored elsewhere.
pub trait Reference {
    fn evaluate(&self, x: &Point, side: Sign) -> Option<(f64, Point)>;

    fn phi(&self, x: &Point) -> Option<f64> {
        self.evaluate(x, Sign::Positive).map(|v| v.0)
    }

    /// This reference's own interface crossing on `line` nearest to parameter
    /// `t`, with the unit interface normal there (towards the positive side).
    fn crossing(&self, _line: &Line, _t: f64) -> Option<(Point, Point)> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct SolutionField {
    pub mesh: Mesh,
    pub classification: Classification,
    pub materials: MaterialPair,
    pub phi: Vec<f64>,
    /// Recovered enrichment value for enriched elements.
    pub enrichment: Vec<Option<f64>>,
    locator: PointLocator,
}

impl SolutionField {
    pub fn new(
        mesh: Mesh,
        classification: Classification,
        materials: MaterialPair,
        phi: Vec<f64>,
        enrichment: Vec<Option<f64>>,
    ) -> Result<Self, PostError> {
        if phi.len() != mesh.n_nodes() {
            return Err(PostError::Length {
                got: phi.len(),
                expected: mesh.n_nodes(),
            });
        }
        let locator = PointLocator::new(&mesh);
        Ok(Self {
            mesh,
            classification,
            materials,
            phi,
            enrichment,
            locator,
        })
    }

    pub fn locator(&self) -> &PointLocator {
        &self.locator
    }

    /// Side of the interface at barycentric position `bary` in element `e`,
    /// or `None` when the point lies on the interface.
    fn side_at(&self, e: usize, bary: &[f64]) -> Option<Sign> {
        match &self.classification.elements[e] {
            ElementCut::Uncut(s) => Some(*s),
            ElementCut::Cut(dec) => {
                let d: f64 = dec.nodal_d.iter().zip(bary).map(|(d, l)| d * l).sum();
                let scale = dec.nodal_d.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
                if d.abs() <= ON_INTERFACE * scale {
                    None
                } else {
                    Some(Sign::of(d))
                }
            }
        }
    }

    /// Evaluates inside element `e` at barycentric coordinates `bary`.
    pub fn eval_in(&self, e: usize, bary: &[f64], hint: Sign) -> FieldValue {
        self.eval_side(e, bary, self.side_at(e, bary).unwrap_or(hint))
    }

    /// Evaluates the branch of side `side` in element `e`, continued to `bary`.
    fn eval_side(&self, e: usize, bary: &[f64], side: Sign) -> FieldValue {
        let geometry = self.mesh.element_geometry(e);
        let nodes = self.mesh.element(e);
        let mut phi = 0.0;
        let mut grad = Point::zeros();
        for (a, &n) in nodes.iter().enumerate() {
            phi += bary[a] * self.phi[n];
            grad += geometry.gradients[a] * self.phi[n];
        }
        if let (ElementCut::Cut(dec), Some(Some(star))) =
            (&self.classification.elements[e], self.enrichment.get(e))
        {
            phi += hat_eval(&dec.nodal_d, bary) * star;
            grad += hat_gradient(&geometry.gradients, &dec.nodal_d, side) * *star;
        }
        FieldValue {
            phi,
            e: grad,
            element: e,
            side,
        }
    }

    /// Elements containing `x`, with their barycentric coordinates.
    fn containing(&self, x: &Point) -> Vec<(usize, Vec<f64>)> {
        self.locator
            .candidates(x)
            .iter()
            .filter_map(|&e| {
                let bary = self.mesh.element_geometry(e).barycentric(x);
                let min = bary.iter().cloned().fold(f64::INFINITY, f64::min);
                (min >= -INSIDE_TOLERANCE).then_some((e, bary))
            })
            .collect()
    }

    /// Potential and field at `x`. Where `x` lies on the interface, or on an
    /// element boundary between materials, the value from side `hint` is
    /// returned.
    pub fn eval(&self, x: &Point, hint: Sign) -> Result<FieldValue, PostError> {
        let found = self.containing(x);
        let interior = |b: &Vec<f64>| b.iter().cloned().fold(f64::INFINITY, f64::min);
        let matching = found
            .iter()
            .filter(|(e, b)| self.side_at(*e, b).is_none_or(|s| s == hint))
            .max_by(|a, b| interior(&a.1).total_cmp(&interior(&b.1)));
        if let Some((e, bary)) = matching {
            return Ok(self.eval_in(*e, &clamp(bary), hint));
        }
        // No element sees side `hint` at `x` itself, for example when the
        // interface runs through a node that snapped to the other side.
        let touches = |e: usize| match &self.classification.elements[e] {
            ElementCut::Uncut(s) => *s == hint,
            ElementCut::Cut(dec) => dec.nodal_d.iter().any(|d| Sign::of(*d) == hint),
        };
        if let Some((e, bary)) = found
            .iter()
            .filter(|(e, _)| touches(*e))
            .max_by(|a, b| interior(&a.1).total_cmp(&interior(&b.1)))
        {
            return Ok(self.eval_side(*e, &clamp(bary), hint));
        }
        let (e, bary) = found
            .iter()
            .max_by(|a, b| interior(&a.1).total_cmp(&interior(&b.1)))
            .ok_or_else(|| outside(x))?;
        Ok(self.eval_in(*e, &clamp(bary), hint))
    }

    /// Unit normal of the interpolated level set in a cut element, pointing to
    /// the positive side.
    pub fn interface_normal(&self, e: usize) -> Option<Point> {
        let ElementCut::Cut(dec) = &self.classification.elements[e] else {
            return None;
        };
        let g = self.mesh.element_geometry(e);
        let n: Point = g
            .gradients
            .iter()
            .zip(&dec.nodal_d)
            .map(|(g, d)| g * *d)
            .sum();
        (n.norm() > 0.0).then(|| n.normalize())
    }

    /// Largest potential difference between the two elements sharing a face,
    /// taken at the interface crossings on that face. Only faces between two
    /// enriched elements can disagree.
    pub fn interface_potential_mismatch(&self) -> f64 {
        let mut worst = 0.0_f64;
        for face in self.mesh.faces() {
            let Some((f, _)) = face.neighbor else {
                continue;
            };
            let e = face.element;
            let (ElementCut::Cut(dec), ElementCut::Cut(_)) = (
                &self.classification.elements[e],
                &self.classification.elements[f],
            ) else {
                continue;
            };
            for vn in &dec.virtual_nodes {
                if vn.edge.0 == face.local_face || vn.edge.1 == face.local_face {
                    continue;
                }
                let here = self.eval_in(e, &vn.vertex.bary, Sign::Positive).phi;
                let bary = self.mesh.element_geometry(f).barycentric(&vn.vertex.point);
                let there = self.eval_in(f, &bary, Sign::Positive).phi;
                worst = worst.max((here - there).abs());
            }
        }
        worst
    }
}

impl Reference for SolutionField {
    fn evaluate(&self, x: &Point, side: Sign) -> Option<(f64, Point)> {
        self.eval(x, side).ok().map(|v| (v.phi, v.e))
    }

    fn crossing(&self, line: &Line, t: f64) -> Option<(Point, Point)> {
        let (tc, e) = interface_crossings(self, line)
            .into_iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|c| (c.0, c.2))?;
        Some((line.at(tc), self.interface_normal(e)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub start: Point,
    pub end: Point,
}

impl Line {
    pub fn new(start: Point, end: Point) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn at(&self, t: f64) -> Point {
        self.start + (self.end - self.start) * t
    }
}

/// Parameter interval of `line` inside element `e`, if any.
fn clip_to_element(mesh: &Mesh, e: usize, line: &Line) -> Option<(f64, f64)> {
    let g = mesh.element_geometry(e);
    let b0 = g.barycentric(&line.start);
    let b1 = g.barycentric(&line.end);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for (a, b) in b0.iter().zip(&b1) {
        let slope = b - a;
        if slope.abs() < 1e-300 {
            if *a < -INSIDE_TOLERANCE {
                return None;
            }
            continue;
        }
        let t = -a / slope;
        if slope > 0.0 {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
    }
    (hi >= lo).then_some((lo, hi))
}

fn clamp(bary: &[f64]) -> Vec<f64> {
    let c: Vec<f64> = bary.iter().map(|l| l.max(0.0)).collect();
    let s: f64 = c.iter().sum();
    c.iter().map(|l| l / s).collect()
}

/// Where the line crosses the interface, with the side seen just before the
/// crossing and the cut element.
fn interface_crossings(field: &SolutionField, line: &Line) -> Vec<(f64, Sign, usize)> {
    let mut out = Vec::new();
    for e in segment_candidates(field, line) {
        let ElementCut::Cut(dec) = &field.classification.elements[e] else {
            continue;
        };
        let Some((t0, t1)) = clip_to_element(&field.mesh, e, line) else {
            continue;
        };
        let g = field.mesh.element_geometry(e);
        let d_at = |t: f64| -> f64 {
            g.barycentric(&line.at(t))
                .iter()
                .zip(&dec.nodal_d)
                .map(|(l, d)| l * d)
                .sum()
        };
        let (d0, d1) = (d_at(t0), d_at(t1));
        if (d0 > 0.0) == (d1 > 0.0) || d0 == d1 {
            continue;
        }
        let t = t0 + (t1 - t0) * d0 / (d0 - d1);
        out.push((t, Sign::of(d0), e));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);
    out
}

fn segment_candidates(field: &SolutionField, line: &Line) -> Vec<usize> {
    let lo = line.start.inf(&line.end);
    let hi = line.start.sup(&line.end);
    field.locator.candidates_in_box(&lo, &hi)
}

/// Parameters of element-boundary and interface crossings along the line.
fn line_breakpoints(field: &SolutionField, line: &Line) -> Vec<f64> {
    let mut ts = Vec::new();
    for e in segment_candidates(field, line) {
        if let Some((a, b)) = clip_to_element(&field.mesh, e, line) {
            ts.push(a);
            ts.push(b);
        }
    }
    ts.extend(interface_crossings(field, line).into_iter().map(|c| c.0));
    ts
}

/// `sqrt(integral over the line of (phi_h - phi_ref)^2)` by the composite
/// trapezoid rule on at least `samples` intervals, with element-boundary and
/// interface crossings added as nodes.
pub fn l2_line_error(
    field: &SolutionField,
    reference: &dyn Reference,
    line: &Line,
    samples: usize,
) -> Result<f64, PostError> {
    let n = samples.max(MIN_LINE_SAMPLES);
    let mut ts: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    ts.extend(line_breakpoints(field, line));
    ts.retain(|t| (0.0..=1.0).contains(t));
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let length = line.length();
    let mut sq = Vec::with_capacity(ts.len());
    for &t in &ts {
        let x = line.at(t);
        let h = field.eval(&x, Sign::Positive)?.phi;
        let r = reference.phi(&x).ok_or(PostError::Reference {
            x: x.x,
            y: x.y,
            z: x.z,
        })?;
        sq.push((h - r).powi(2));
    }
    let integral: f64 = ts
        .windows(2)
        .zip(sq.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * length * (f[0] + f[1]))
        .sum();
    Ok(integral.sqrt())
}

/// Trapezoid L2 error of a reference along a line against another reference,
/// without any mesh breakpoints.
pub fn l2_line_difference(
    a: &dyn Reference,
    b: &dyn Reference,
    line: &Line,
    samples: usize,
) -> Option<f64> {
    let n = samples.max(1);
    let mut integral = 0.0;
    let mut prev: Option<f64> = None;
    let dt = line.length() / n as f64;
    for i in 0..=n {
        let x = line.at(i as f64 / n as f64);
        let f = (a.phi(&x)? - b.phi(&x)?).powi(2);
        if let Some(p) = prev {
            integral += 0.5 * dt * (p + f);
        }
        prev = Some(f);
    }
    Some(integral.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Point,
    pub phi: f64,
    pub e: Point,
    pub side: Sign,
    pub element: usize,
    /// One of the two one-sided samples taken at an interface crossing.
    pub on_interface: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSample {
    pub line: Line,
    pub dim: usize,
    pub samples: Vec<Sample>,
}

impl LineSample {
    /// The one-sided pairs at interface crossings, in line order.
    pub fn crossings(&self) -> Vec<(Sample, Sample)> {
        self.samples
            .windows(2)
            .filter(|w| w[0].on_interface && w[1].on_interface && w[0].t == w[1].t)
            .map(|w| (w[0], w[1]))
            .collect()
    }
}

/// Evaluates the field at `count` evenly spaced points (ends included) and at
/// every interface crossing, where one sample per side is recorded.
pub fn sample_line(
    field: &SolutionField,
    line: &Line,
    count: usize,
) -> Result<LineSample, PostError> {
    let count = count.max(2);
    let mut samples = Vec::with_capacity(count + 4);
    for i in 0..count {
        let t = i as f64 / (count - 1) as f64;
        let x = line.at(t);
        let v = field.eval(&x, Sign::Positive)?;
        samples.push(Sample {
            t,
            x,
            phi: v.phi,
            e: v.e,
            side: v.side,
            element: v.element,
            on_interface: false,
        });
    }
    for (t, first, _) in interface_crossings(field, line) {
        let x = line.at(t);
        for side in [first, first.flip()] {
            let v = field.eval(&x, side)?;
            samples.push(Sample {
                t,
                x,
                phi: v.phi,
                e: v.e,
                side,
                element: v.element,
                on_interface: true,
            });
        }
    }
    // Stable sort keeps each crossing pair in approach order.
    samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(LineSample {
        line: *line,
        dim: field.mesh.dim(),
        samples,
    })
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn side_label(s: Sign) -> &'static str {
    match s {
        Sign::Positive => "+",
        Sign::Negative => "-",
    }
}

pub fn write_csv(sample: &LineSample, out: &mut impl Write) -> std::io::Result<()> {
    let dim = sample.dim;
    let mut header: Vec<String> = AXES[..dim].iter().map(|s| s.to_string()).collect();
    header.push("phi".into());
    header.extend(AXES[..dim].iter().map(|a| format!("E{a}")));
    header.push("side".into());
    writeln!(out, "{}", header.join(","))?;
    for s in &sample.samples {
        let mut row: Vec<String> = (0..dim).map(|a| format!("{:.16e}", s.x[a])).collect();
        row.push(format!("{:.16e}", s.phi));
        row.extend((0..dim).map(|a| format!("{:.16e}", s.e[a])));
        row.push(side_label(s.side).into());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn export_csv(sample: &LineSample, path: impl AsRef<Path>) -> Result<(), PostError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(sample, &mut w)?;
    w.flush()?;
    Ok(())
}

/// One parsed CSV row: coordinates, potential, field, side.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub x: Vec<f64>,
    pub phi: f64,
    pub e: Vec<f64>,
    pub side: Sign,
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>, PostError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut dim = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split(',').collect();
        let err = |message: String| PostError::Csv {
            line: i + 1,
            message,
        };
        if i == 0 {
            dim = (fields.len() - 2) / 2;
            continue;
        }
        if fields.len() != 2 * dim + 2 {
            return Err(err(format!("expected {} fields", 2 * dim + 2)));
        }
        let nums = fields[..2 * dim + 1]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(e.to_string()))?;
        let side = match fields[2 * dim + 1] {
            "+" => Sign::Positive,
            "-" => Sign::Negative,
            other => return Err(err(format!("bad side '{other}'"))),
        };
        rows.push(CsvRow {
            x: nums[..dim].to_vec(),
            phi: nums[dim],
            e: nums[dim + 1..].to_vec(),
            side,
        });
    }
    Ok(rows)
}

/// Legacy ASCII VTK. Cut elements are written as their children so the kink
/// in the potential shows up.
pub fn write_vtk(field: &SolutionField, out: &mut impl Write) -> Result<(), PostError> {
    let mesh = &field.mesh;
    let mut points: Vec<Point> = mesh.nodes().to_vec();
    let mut point_phi = field.phi.clone();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut cell_e: Vec<Point> = Vec::new();
    for e in 0..mesh.n_elements() {
        match &field.classification.elements[e] {
            ElementCut::Uncut(s) => {
                cells.push(mesh.element(e).to_vec());
                let c = mesh.element_geometry(e).centroid();
                let bary = mesh.element_geometry(e).barycentric(&c);
                cell_e.push(field.eval_in(e, &bary, *s).e);
            }
            ElementCut::Cut(dec) => {
                for child in &dec.children {
                    let mut ids = Vec::with_capacity(child.vertices.len());
                    for v in &child.vertices {
                        ids.push(points.len());
                        points.push(v.point);
                        point_phi.push(field.eval_in(e, &v.bary, child.sign).phi);
                    }
                    cells.push(ids);
                    cell_e.push(field.eval_in(e, &child.centroid().bary, child.sign).e);
                }
            }
        }
    }
    let cell_type = if mesh.dim() == 2 { 5 } else { 10 };
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "efem solution")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", points.len())?;
    for p in &points {
        writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z)?;
    }
    let size: usize = cells.iter().map(|c| c.len() + 1).sum();
    writeln!(out, "CELLS {} {}", cells.len(), size)?;
    for c in &cells {
        let ids: Vec<String> = c.iter().map(|i| i.to_string()).collect();
        writeln!(out, "{} {}", c.len(), ids.join(" "))?;
    }
    writeln!(out, "CELL_TYPES {}", cells.len())?;
    for _ in &cells {
        writeln!(out, "{cell_type}")?;
    }
    writeln!(out, "POINT_DATA {}", points.len())?;
    writeln!(out, "SCALARS phi double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in &point_phi {
        writeln!(out, "{v:.16e}")?;
    }
    writeln!(out, "CELL_DATA {}", cells.len())?;
    writeln!(out, "VECTORS E double")?;
    for v in &cell_e {
        writeln!(out, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)?;
    }
    Ok(())
}

pub fn export_vtk(field: &SolutionField, path: impl AsRef<Path>) -> Result<(), PostError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vtk(field, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Least-squares slope of `log e` against `log h`.
pub fn observed_order(h: &[f64], e: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(e)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface::{classify_elements, LevelSet};
    use crate::mesh::unit_box;

    fn p2(x: f64, y: f64) -> Point {
        Point::new(x, y, 0.0)
    }

    /// Nodal values `f(node)` on an uncut mesh.
    fn linear_field(n: usize, f: impl Fn(&Point) -> f64) -> SolutionField {
        let mesh = unit_box(2, n).unwrap();
        let phi = mesh.nodes().iter().map(f).collect();
        let ls = LevelSet::plane(p2(0.0, -1.0), p2(0.0, 1.0)).unwrap();
        let cls = classify_elements(&mesh, &ls).unwrap();
        let ne = mesh.n_elements();
        SolutionField::new(
            mesh,
            cls,
            MaterialPair::from_ratio(1.0).unwrap(),
            phi,
            vec![None; ne],
        )
        .unwrap()
    }

    struct Zero;
    impl Reference for Zero {
        fn evaluate(&self, _: &Point, _: Sign) -> Option<(f64, Point)> {
            Some((0.0, Point::zeros()))
        }
    }

    #[test]
    fn uncut_evaluation_is_p1() {
        let f = linear_field(4, |p| 2.0 * p.x - p.y + 0.5);
        let v = f.eval(&p2(0.31, 0.77), Sign::Positive).unwrap();
        assert!((v.phi - (0.62 - 0.77 + 0.5)).abs() < 1e-14);
        assert!((v.e - p2(2.0, -1.0)).norm() < 1e-12);
        assert!(f.eval(&p2(1.5, 0.5), Sign::Positive).is_err());
    }

    #[test]
    fn line_error_of_linear_function() {
        let f = linear_field(3, |p| p.y);
        let line = Line::new(p2(0.5, 0.0), p2(0.5, 1.0));
        let e = l2_line_error(&f, &Zero, &line, 1000).unwrap();
        assert!((e - (1.0_f64 / 3.0).sqrt()).abs() < 1e-6);
        assert!(l2_line_error(&f, &f, &line, 1000).unwrap() < 1e-14);
    }

    #[test]
    fn observed_order_of_power_law() {
        let h = [0.4, 0.2, 0.1, 0.05];
        let e: Vec<f64> = h.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        assert!((observed_order(&h, &e).unwrap() - 2.0).abs() < 1e-12);
        assert!(observed_order(&[0.1], &[0.2]).is_none());
    }

    #[test]
    fn recovery_uses_element_nodes() {
        let mesh = unit_box(2, 1).unwrap();
        let phi: Vec<f64> = (0..mesh.n_nodes()).map(|i| i as f64).collect();
        let r = vec![Some(DVector::from_vec(vec![1.0, 1.0, 1.0])), None];
        let star = recover_enrichment(&mesh, &r, &phi);
        let expected: f64 = mesh.element(0).iter().map(|&n| n as f64).sum();
        assert_eq!(star, vec![Some(expected), None]);
    }

    #[test]
    fn vtk_of_two_uncut_triangles() {
        let f = linear_field(1, |p| p.x + p.y);
        let mut buf = Vec::new();
        write_vtk(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("CELLS 2 8"));
        assert!(text.contains("POINTS 4 double"));
        assert!(text.contains("2.0000000000000000e0"));
    }

    #[test]
    fn vtk_exports_children_of_cut_triangle() {
        let mesh = unit_box(2, 1).unwrap();
        let ls = LevelSet::plane(p2(0.0, 0.5), p2(0.0, 1.0)).unwrap();
        let cls = classify_elements(&mesh, &ls).unwrap();
        let f = SolutionField::new(
            mesh,
            cls,
            MaterialPair::from_ratio(2.0).unwrap(),
            vec![0.0; 4],
            vec![Some(0.0); 2],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_vtk(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("CELLS 6 24"), "{text}");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = linear_field(3, |p| (p.x * 1.7).sin() + p.y / 3.0);
        let sample = sample_line(&f, &Line::new(p2(0.1, 0.0), p2(0.9, 1.0)), 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("line.csv");
        export_csv(&sample, &path).unwrap();
        let rows = read_csv(&path).unwrap();
        assert_eq!(rows.len(), sample.samples.len());
        for (r, s) in rows.iter().zip(&sample.samples) {
            assert_eq!(r.phi, s.phi);
            assert_eq!(r.x, vec![s.x.x, s.x.y]);
            assert_eq!(r.e, vec![s.e.x, s.e.y]);
        }
    }

    #[test]
    fn crossings_are_sampled_on_both_sides() {
        let mesh = unit_box(2, 5).unwrap();
        let ls = LevelSet::plane(p2(0.0, 0.5), p2(0.0, 1.0)).unwrap();
        let cls = classify_elements(&mesh, &ls).unwrap();
        let phi = mesh.nodes().iter().map(|p| p.y).collect();
        let ne = mesh.n_elements();
        let f = SolutionField::new(
            mesh,
            cls,
            MaterialPair::from_ratio(3.0).unwrap(),
            phi,
            vec![Some(0.3); ne],
        )
        .unwrap();
        let s = sample_line(&f, &Line::new(p2(0.5, 0.0), p2(0.5, 1.0)), 11).unwrap();
        let pairs = s.crossings();
        assert_eq!(pairs.len(), 1);
        let (a, b) = pairs[0];
        assert!((a.x.y - 0.5).abs() < 1e-12);
        assert_eq!((a.side, b.side), (Sign::Negative, Sign::Positive));
        assert!((a.phi - b.phi).abs() < 1e-12);
        assert!((a.e - b.e).norm() > 1e-3);
    }
}
