//! Closed-form reference solutions and fine-mesh reference solves.

use thiserror::Error;

use crate::assembly::{AssemblyOptions, Mode};
use crate::element::MaterialPair;
use crate::interface::{Classification, LevelSet, Sign};
use crate::mesh::{unit_box, BoundaryTag, Mesh, MeshError, Point};
use crate::postprocess::{Line, Reference, SolutionField};
use crate::problem::{solve, solve_classified, CaseSetup, ProblemError, SolveOptions};
use crate::solver::SolverOptions;

/// Relative distance from a circle or sphere below which a point counts as
/// on it, so the requested side decides the branch.
const ON_SURFACE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("y = {0} is outside [0, 1]")]
    OutOfDomain(f64),
    #[error("region-2 potential is undefined at the centre")]
    AtCentre,
    #[error("mesh does not conform to the interface: element {0} is cut")]
    NotConforming(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Two slabs between electrodes at y = 0 (phi = 0) and y = 1 (phi = 1), with
/// permittivity ratio `q = eps_above / eps_below` and the interface at `y0`.
/// Returns the potential and the slope on the requested side.
pub fn planar_solution(q: f64, y0: f64, y: f64, side: Sign) -> Result<(f64, f64), OracleError> {
    if !(0.0..=1.0).contains(&y) {
        return Err(OracleError::OutOfDomain(y));
    }
    let above = 1.0 / (q * y0 + 1.0 - y0);
    let below = q * above;
    let upper = if y == y0 {
        side == Sign::Positive
    } else {
        y > y0
    };
    if upper {
        Ok((1.0 - above * (1.0 - y), above))
    } else {
        Ok((below * y, below))
    }
}

/// Dielectric sphere of radius `r_o` in a unit uniform field, permittivity
/// ratio `q = eps_inside / eps_outside`, in polar form about the field axis.
pub fn sphere_solution(q: f64, r_o: f64, r: f64, theta: f64) -> Result<f64, OracleError> {
    if r <= r_o {
        Ok(3.0 * r * theta.cos() / (2.0 + q))
    } else {
        if r == 0.0 {
            return Err(OracleError::AtCentre);
        }
        Ok(theta.cos() * (r + (1.0 - q) / (2.0 + q) * r_o.powi(3) / (r * r)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticCase {
    /// Interface `y = y0`; the positive side is above.
    Planar { q: f64, y0: f64 },
    /// Sphere in a unit field along +y, potential `offset` at the centre. The
    /// inside is the negative side, `q = eps_inside / eps_outside`.
    Sphere {
        q: f64,
        radius: f64,
        center: Point,
        offset: f64,
    },
    /// Circular inclusion in an unbounded plane under a unit field along +y.
    /// Only exact far from any boundary.
    Cylinder2d {
        q: f64,
        radius: f64,
        center: Point,
        offset: f64,
    },
}

impl AnalyticCase {
    /// The interface as a level set with the sign convention of this case.
    pub fn levelset(&self) -> LevelSet {
        match *self {
            AnalyticCase::Planar { y0, .. } => {
                LevelSet::plane(Point::new(0.0, y0, 0.0), Point::new(0.0, 1.0, 0.0))
                    .expect("unit normal")
            }
            AnalyticCase::Sphere { radius, center, .. } => {
                LevelSet::sphere(center, radius).expect("positive radius")
            }
            AnalyticCase::Cylinder2d { radius, center, .. } => {
                LevelSet::circle(center, radius).expect("positive radius")
            }
        }
    }

    /// Permittivities matching the level-set signs.
    pub fn materials(&self) -> MaterialPair {
        match *self {
            AnalyticCase::Planar { q, .. } => MaterialPair::new(q, 1.0),
            AnalyticCase::Sphere { q, .. } | AnalyticCase::Cylinder2d { q, .. } => {
                MaterialPair::new(1.0, q)
            }
        }
        .expect("positive ratio")
    }
}

impl Reference for AnalyticCase {
    fn evaluate(&self, x: &Point, side: Sign) -> Option<(f64, Point)> {
        let ey = Point::new(0.0, 1.0, 0.0);
        match *self {
            AnalyticCase::Planar { q, y0 } => {
                let (phi, slope) = planar_solution(q, y0, x.y.clamp(0.0, 1.0), side).ok()?;
                Some((phi, ey * slope))
            }
            AnalyticCase::Sphere {
                q,
                radius,
                center,
                offset,
            } => {
                let rel = x - center;
                let r = rel.norm();
                let inside = if (r - radius).abs() <= ON_SURFACE * radius {
                    side == Sign::Negative
                } else {
                    r < radius
                };
                if inside {
                    let s = 3.0 / (2.0 + q);
                    Some((offset + s * rel.y, ey * s))
                } else {
                    let a = (1.0 - q) / (2.0 + q) * radius.powi(3);
                    let r3 = r.powi(3);
                    let phi = offset + rel.y + a * rel.y / r3;
                    let grad = ey + (ey / r3 - rel * (3.0 * rel.y / r.powi(5))) * a;
                    Some((phi, grad))
                }
            }
            AnalyticCase::Cylinder2d {
                q,
                radius,
                center,
                offset,
            } => {
                let mut rel = x - center;
                rel.z = 0.0;
                let r = rel.norm();
                let inside = if (r - radius).abs() <= ON_SURFACE * radius {
                    side == Sign::Negative
                } else {
                    r < radius
                };
                if inside {
                    let s = 2.0 / (1.0 + q);
                    Some((offset + s * rel.y, ey * s))
                } else {
                    let a = (1.0 - q) / (1.0 + q) * radius * radius;
                    let r2 = r * r;
                    let phi = offset + rel.y + a * rel.y / r2;
                    let grad = ey + (ey / r2 - rel * (2.0 * rel.y / (r2 * r2))) * a;
                    Some((phi, grad))
                }
            }
        }
    }

    fn crossing(&self, line: &Line, t: f64) -> Option<(Point, Point)> {
        let dir = line.end - line.start;
        let (radius, center, flat) = match *self {
            AnalyticCase::Planar { y0, .. } => {
                if dir.y == 0.0 {
                    return None;
                }
                let tc = (y0 - line.start.y) / dir.y;
                return Some((line.at(tc), Point::new(0.0, 1.0, 0.0)));
            }
            AnalyticCase::Sphere { radius, center, .. } => (radius, center, false),
            AnalyticCase::Cylinder2d { radius, center, .. } => (radius, center, true),
        };
        let mut p = line.start - center;
        let mut d = dir;
        if flat {
            p.z = 0.0;
            d.z = 0.0;
        }
        let (a, b, c) = (d.dot(&d), 2.0 * p.dot(&d), p.dot(&p) - radius * radius);
        let disc = b * b - 4.0 * a * c;
        if a == 0.0 || disc < 0.0 {
            return None;
        }
        let roots = [
            (-b - disc.sqrt()) / (2.0 * a),
            (-b + disc.sqrt()) / (2.0 * a),
        ];
        let tc = if (roots[0] - t).abs() <= (roots[1] - t).abs() {
            roots[0]
        } else {
            roots[1]
        };
        let mut n = line.at(tc) - center;
        if flat {
            n.z = 0.0;
        }
        Some((line.at(tc), n.normalize()))
    }
}

/// Electrodes on the bottom (0) and top (1) faces of the unit box; every other
/// side is insulating.
pub fn electrode_boundary(dim: usize) -> Vec<BoundaryTag> {
    let mut tags = vec![
        BoundaryTag::dirichlet("bottom", 0.0),
        BoundaryTag::dirichlet("top", 1.0),
        BoundaryTag::neumann("left"),
        BoundaryTag::neumann("right"),
    ];
    if dim == 3 {
        tags.push(BoundaryTag::neumann("front"));
        tags.push(BoundaryTag::neumann("back"));
    }
    tags
}

/// Standard FEM on a mesh whose element boundaries contain the interface.
/// Each element takes the material at its centroid.
pub fn conforming_reference(
    mesh: Mesh,
    levelset: &LevelSet,
    materials: MaterialPair,
    boundary: &[BoundaryTag],
    tol: f64,
) -> Result<SolutionField, OracleError> {
    let d = levelset.nodal_values(&mesh).map_err(ProblemError::from)?;
    let scale = mesh.max_h();
    for (e, nodes) in mesh.elements().enumerate() {
        let pos = nodes.iter().any(|&n| d[n] > 1e-9 * scale);
        let neg = nodes.iter().any(|&n| d[n] < -1e-9 * scale);
        if pos && neg {
            return Err(OracleError::NotConforming(e));
        }
    }
    let classification =
        Classification::by_centroid(&mesh, levelset).map_err(ProblemError::from)?;
    let options = SolveOptions {
        assembly: AssemblyOptions::with_mode(Mode::StandardFem),
        solver: SolverOptions {
            tol,
            ..SolverOptions::default()
        },
        direct: false,
    };
    let (field, _) = solve_classified(mesh, classification, materials, boundary, &options)?;
    Ok(field)
}

/// Fine-mesh enriched solve with the displacement terms, used where no
/// conforming mesh is available.
pub fn self_reference(
    dim: usize,
    h: f64,
    levelset: &LevelSet,
    materials: MaterialPair,
    boundary: &[BoundaryTag],
    tol: f64,
) -> Result<SolutionField, OracleError> {
    let mesh = unit_box(dim, crate::mesh::cells_for_h(h))?;
    let setup = CaseSetup {
        mesh,
        levelset: levelset.clone(),
        materials,
        boundary: boundary.to_vec(),
    };
    let options = SolveOptions {
        assembly: AssemblyOptions::with_mode(Mode::Efem),
        solver: SolverOptions {
            tol,
            ..SolverOptions::default()
        },
        direct: false,
    };
    let (field, _) = solve(setup, &options)?;
    Ok(field)
}
