//! Case runs and convergence sweeps behind the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use crate::assembly::{AssemblyOptions, Mode};
use crate::config::{CaseConfig, ConfigError, LevelSetSpec, MeshSpec, ReferenceSpec};
use crate::element::{MaterialError, MaterialPair};
use crate::interface::{LevelSet, LevelSetError, Sign};
use crate::mesh::{generate_structured, Mesh, MeshError, Point};
use crate::oracles::{conforming_reference, self_reference, AnalyticCase, OracleError};
use crate::postprocess::{
    export_csv, export_vtk, l2_line_error, observed_order, sample_line, Line, PostError, Reference,
    SolutionField,
};
use crate::problem::{solve, CaseSetup, ProblemError, SolveOptions, SolveSummary};
use crate::solver::SolverOptions;

/// Errors below this are reported as exact in convergence tables.
pub const EXACT_FLOOR: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Setup(String),
    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
    #[error("reference: {0}")]
    Reference(String),
    #[error("{0}")]
    Failed(String),
    #[error("output: {0}")]
    Io(String),
}

impl DriverError {
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Config(_) => 2,
            DriverError::NotConverged { .. } => 3,
            DriverError::Setup(_) => 4,
            _ => 1,
        }
    }
}

impl From<MeshError> for DriverError {
    fn from(e: MeshError) -> Self {
        DriverError::Setup(format!("mesh: {e}"))
    }
}

impl From<LevelSetError> for DriverError {
    fn from(e: LevelSetError) -> Self {
        DriverError::Setup(format!("level set: {e}"))
    }
}

impl From<MaterialError> for DriverError {
    fn from(e: MaterialError) -> Self {
        DriverError::Failed(e.to_string())
    }
}

impl From<ProblemError> for DriverError {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::LevelSet(e) => e.into(),
            other => DriverError::Failed(other.to_string()),
        }
    }
}

impl From<PostError> for DriverError {
    fn from(e: PostError) -> Self {
        DriverError::Failed(e.to_string())
    }
}

impl From<OracleError> for DriverError {
    fn from(e: OracleError) -> Self {
        DriverError::Reference(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DriverError {
    DriverError::Io(format!("{}: {e}", path.display()))
}

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub mode: Option<Mode>,
    pub h: Option<f64>,
    pub tol: Option<f64>,
    pub direct: bool,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunOptions {
    pub fn apply(&self, config: &mut CaseConfig) {
        if let Some(m) = self.mode {
            config.mode = m;
        }
        if let Some(h) = self.h {
            config.set_h(h);
        }
        if let Some(t) = self.tol {
            config.tol = t;
        }
        if self.direct {
            config.direct = true;
        }
        if let Some(n) = self.threads {
            config.threads = n.max(1);
        }
    }
}

pub fn build_mesh(config: &CaseConfig) -> Result<Mesh, DriverError> {
    let mesh = match &config.mesh {
        MeshSpec::Structured { cells, lo, hi } => {
            generate_structured(config.dim, &vec![*cells; config.dim], *lo, *hi)?
        }
        MeshSpec::File(p) => Mesh::read(p)?,
    };
    if mesh.dim() != config.dim {
        return Err(DriverError::Setup(format!(
            "mesh is {}D but the case is {}D",
            mesh.dim(),
            config.dim
        )));
    }
    Ok(mesh)
}

pub fn build_levelset(config: &CaseConfig, mesh: &Mesh) -> Result<LevelSet, DriverError> {
    let ls = match &config.levelset {
        LevelSetSpec::Plane { point, normal } => LevelSet::plane(*point, *normal)?,
        LevelSetSpec::Circle { center, radius } => LevelSet::circle(*center, *radius)?,
        LevelSetSpec::Sphere { center, radius } => LevelSet::sphere(*center, *radius)?,
        LevelSetSpec::Nodal(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| DriverError::Setup(format!("{}: {e}", path.display())))?;
            let values = text
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| DriverError::Setup(format!("{}: {e}", path.display())))?;
            LevelSet::Nodal(values)
        }
    };
    ls.check_dimension(mesh.dim())?;
    if let LevelSet::Nodal(v) = &ls {
        if v.len() != mesh.n_nodes() {
            return Err(LevelSetError::NodeCount {
                values: v.len(),
                nodes: mesh.n_nodes(),
            }
            .into());
        }
    }
    Ok(ls)
}

pub fn solve_options(config: &CaseConfig, mode: Mode) -> SolveOptions {
    SolveOptions {
        assembly: AssemblyOptions {
            mode,
            d_on_boundary: config.d_on_boundary,
            threads: config.threads,
        },
        solver: SolverOptions {
            tol: config.tol,
            max_iter: config.max_iter,
            ..SolverOptions::default()
        },
        direct: config.direct,
    }
}

/// Solves the configured case in `mode` on its configured mesh.
pub fn solve_case(
    config: &CaseConfig,
    mode: Mode,
) -> Result<(SolutionField, SolveSummary), DriverError> {
    let mesh = build_mesh(config)?;
    let levelset = build_levelset(config, &mesh)?;
    let materials = MaterialPair::new(config.eps1, config.eps2)?;
    let setup = CaseSetup {
        mesh,
        levelset,
        materials,
        boundary: config.boundary.clone(),
    };
    Ok(solve(setup, &solve_options(config, mode))?)
}

pub enum BuiltReference {
    Analytic(AnalyticCase),
    Field(Box<SolutionField>),
}

impl BuiltReference {
    pub fn as_reference(&self) -> &dyn Reference {
        match self {
            BuiltReference::Analytic(a) => a,
            BuiltReference::Field(f) => f.as_ref(),
        }
    }
}

pub fn build_reference(
    config: &CaseConfig,
    spec: &ReferenceSpec,
) -> Result<BuiltReference, DriverError> {
    let materials = MaterialPair::new(config.eps1, config.eps2)?;
    let analytic = |a| Ok(BuiltReference::Analytic(a));
    match *spec {
        ReferenceSpec::Planar { q, y0 } => analytic(AnalyticCase::Planar { q, y0 }),
        ReferenceSpec::Sphere {
            q,
            radius,
            center,
            offset,
        } => analytic(AnalyticCase::Sphere {
            q,
            radius,
            center,
            offset,
        }),
        ReferenceSpec::Cylinder2d {
            q,
            radius,
            center,
            offset,
        } => analytic(AnalyticCase::Cylinder2d {
            q,
            radius,
            center,
            offset,
        }),
        ReferenceSpec::Conforming { cells, tol } => {
            let (lo, hi) = match &config.mesh {
                MeshSpec::Structured { lo, hi, .. } => (*lo, *hi),
                MeshSpec::File(_) => {
                    return Err(DriverError::Reference(
                        "conforming references need a structured mesh case".into(),
                    ))
                }
            };
            let mesh = generate_structured(config.dim, &vec![cells; config.dim], lo, hi)?;
            let ls = build_levelset(config, &mesh)?;
            if matches!(ls, LevelSet::Nodal(_)) {
                return Err(DriverError::Reference(
                    "no conforming mesh for a nodal level set".into(),
                ));
            }
            let field = conforming_reference(mesh, &ls, materials, &config.boundary, tol)?;
            Ok(BuiltReference::Field(Box::new(field)))
        }
        ReferenceSpec::SelfEfem { h, tol } => {
            let probe = generate_structured(
                config.dim,
                &vec![1; config.dim],
                Point::zeros(),
                Point::new(1.0, 1.0, 1.0),
            )?;
            let ls = build_levelset(config, &probe)?;
            if matches!(ls, LevelSet::Nodal(_)) {
                return Err(DriverError::Reference(
                    "no fine mesh for a nodal level set".into(),
                ));
            }
            let field = self_reference(config.dim, h, &ls, materials, &config.boundary, tol)?;
            Ok(BuiltReference::Field(Box::new(field)))
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SideValue {
    /// Field component along the interface normal (pointing to the positive side).
    pub en: f64,
    pub en_ref: Option<f64>,
    /// `|1 - en / en_ref|`.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CrossingReport {
    pub point: Vec<f64>,
    pub phi: f64,
    pub phi_ref: Option<f64>,
    /// `|1 - phi / phi_ref|`.
    pub phi_error: Option<f64>,
    pub negative: SideValue,
    pub positive: SideValue,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LineReport {
    pub name: String,
    pub l2_error: Option<f64>,
    pub crossings: Vec<CrossingReport>,
    /// File name inside the output directory.
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Summary {
    pub case: String,
    pub mode: String,
    pub dim: usize,
    pub h: Option<f64>,
    pub unknowns: usize,
    pub elements: usize,
    pub cut_elements: usize,
    pub fallbacks: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub seconds: f64,
    /// Largest potential disagreement between neighbouring cut elements.
    pub interface_mismatch: f64,
    pub lines: Vec<LineReport>,
    /// File name inside the output directory.
    pub vtk: Option<String>,
}

fn relative_error(value: f64, reference: f64) -> Option<f64> {
    (reference != 0.0).then(|| (1.0 - value / reference).abs())
}

/// Samples every configured line and compares against the reference.
pub fn line_reports(
    config: &CaseConfig,
    field: &SolutionField,
    reference: Option<&dyn Reference>,
    out: Option<&Path>,
    mode: Mode,
) -> Result<Vec<LineReport>, DriverError> {
    let mut reports = Vec::new();
    for spec in &config.lines {
        let line = Line::new(spec.start, spec.end);
        let sample = sample_line(field, &line, spec.samples)?;
        let mut crossings = Vec::new();
        for (a, b) in sample.crossings() {
            let (neg, pos) = if a.side == Sign::Negative {
                (a, b)
            } else {
                (b, a)
            };
            let normal = field
                .interface_normal(neg.element)
                .unwrap_or_else(|| (line.end - line.start).normalize());
            // The reference is read at its own crossing, with its own normal.
            let (x_ref, n_ref) = reference
                .and_then(|r| r.crossing(&line, a.t))
                .unwrap_or((a.x, normal));
            let side = |s: &crate::postprocess::Sample| {
                let en = s.e.dot(&normal);
                let en_ref = reference
                    .and_then(|r| r.evaluate(&x_ref, s.side))
                    .map(|v| v.1.dot(&n_ref));
                SideValue {
                    en,
                    en_ref,
                    error: en_ref.and_then(|r| relative_error(en, r)),
                }
            };
            let phi_ref = reference.and_then(|r| r.phi(&x_ref));
            crossings.push(CrossingReport {
                point: (0..config.dim).map(|k| a.x[k]).collect(),
                phi: a.phi,
                phi_ref,
                phi_error: phi_ref.and_then(|r| relative_error(a.phi, r)),
                negative: side(&neg),
                positive: side(&pos),
            });
        }
        let l2_error = reference
            .map(|r| l2_line_error(field, r, &line, spec.samples))
            .transpose()?;
        let csv = match (out, spec.csv) {
            (Some(dir), true) => {
                let file = format!("{}_{}_{}.csv", config.name, mode, spec.name);
                export_csv(&sample, dir.join(&file))?;
                Some(file)
            }
            _ => None,
        };
        reports.push(LineReport {
            name: spec.name.clone(),
            l2_error,
            crossings,
            csv,
        });
    }
    Ok(reports)
}

/// Runs the case once and writes the summary (and any requested CSV and VTK
/// files) to `out`. A solve that does not converge still writes its summary
/// before reporting the failure.
pub fn run_case(config: &CaseConfig, out: Option<&Path>) -> Result<Summary, DriverError> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let (field, report) = solve_case(config, config.mode)?;
    let reference = config
        .reference
        .as_ref()
        .map(|spec| build_reference(config, spec))
        .transpose()?;
    let lines = line_reports(
        config,
        &field,
        reference.as_ref().map(|r| r.as_reference()),
        out,
        config.mode,
    )?;
    let vtk = match (out, config.vtk) {
        (Some(dir), true) => {
            let file = format!("{}_{}.vtk", config.name, config.mode);
            export_vtk(&field, dir.join(&file))?;
            Some(file)
        }
        _ => None,
    };
    let summary = Summary {
        case: config.name.clone(),
        mode: config.mode.to_string(),
        dim: config.dim,
        h: config.h,
        unknowns: report.unknowns,
        elements: field.mesh.n_elements(),
        cut_elements: report.cut_elements,
        fallbacks: report.fallbacks,
        iterations: report.iterations,
        residual: report.residual,
        converged: report.converged,
        seconds: report.seconds,
        interface_mismatch: field.interface_potential_mismatch(),
        lines,
        vtk,
    };
    if let Some(dir) = out {
        let path = dir.join(format!("{}_{}_summary.json", config.name, config.mode));
        let text = serde_json::to_string_pretty(&summary).map_err(|e| io_err(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        info!("wrote {}", path.display());
    }
    if !report.converged {
        return Err(DriverError::NotConverged {
            residual: report.residual,
            iterations: report.iterations,
        });
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub cells: usize,
    pub iterations: usize,
    /// One error per configured line.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ModeConvergence {
    pub mode: String,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares order per line; `None` when the errors sit at the
    /// exactness floor.
    pub orders: Vec<Option<f64>>,
    pub exact: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConvergenceReport {
    pub case: String,
    pub lines: Vec<String>,
    pub modes: Vec<ModeConvergence>,
}

impl ConvergenceReport {
    pub fn mode(&self, mode: Mode) -> Option<&ModeConvergence> {
        self.modes.iter().find(|m| m.mode == mode.name())
    }

    /// Plain-text table of errors and fitted orders.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for m in &self.modes {
            s.push_str(&format!("mode {}\n", m.mode));
            s.push_str(&format!("{:>10} {:>6}", "h", "cells"));
            for l in &self.lines {
                s.push_str(&format!(" {:>14}", format!("e[{l}]")));
            }
            s.push('\n');
            for r in &m.rows {
                s.push_str(&format!("{:>10.5} {:>6}", r.h, r.cells));
                for e in &r.errors {
                    s.push_str(&format!(" {e:>14.6e}"));
                }
                s.push('\n');
            }
            s.push_str(&format!("{:>17}", "order"));
            for (o, exact) in m.orders.iter().zip(&m.exact) {
                let text = match (o, exact) {
                    (_, true) => "exact".to_string(),
                    (Some(o), _) => format!("{o:.3}"),
                    (None, _) => "-".to_string(),
                };
                s.push_str(&format!(" {text:>14}"));
            }
            s.push_str("\n\n");
        }
        s
    }
}

/// Solves the case on each mesh size in every mode and fits observed orders
/// of the line errors against the configured reference.
pub fn run_convergence(
    config: &CaseConfig,
    h_list: &[f64],
    modes: &[Mode],
    out: Option<&Path>,
) -> Result<ConvergenceReport, DriverError> {
    if h_list.len() < 3 {
        return Err(DriverError::Config(ConfigError::Invalid {
            section: "convergence".into(),
            key: "h_list".into(),
            line: 0,
            message: format!("need at least 3 mesh sizes, got {}", h_list.len()),
        }));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(DriverError::Config(ConfigError::Invalid {
            section: "convergence".into(),
            key: "h_list".into(),
            line: 0,
            message: "mesh sizes must be strictly decreasing".into(),
        }));
    }
    let spec = config
        .reference
        .as_ref()
        .ok_or_else(|| DriverError::Reference("the case has no [reference] section".into()))?;
    let reference = build_reference(config, spec)?;
    let reference = reference.as_reference();
    let mut report = ConvergenceReport {
        case: config.name.clone(),
        lines: config.lines.iter().map(|l| l.name.clone()).collect(),
        modes: Vec::new(),
    };
    for &mode in modes {
        let mut rows = Vec::new();
        for &h in h_list {
            let mut c = config.clone();
            c.set_h(h);
            let (field, summary) = solve_case(&c, mode)?;
            if !summary.converged {
                warn!(
                    "{mode} at h = {h}: residual {:.3e} above tolerance",
                    summary.residual
                );
            }
            let errors = c
                .lines
                .iter()
                .map(|l| l2_line_error(&field, reference, &Line::new(l.start, l.end), l.samples))
                .collect::<Result<Vec<_>, _>>()?;
            let cells = match c.mesh {
                MeshSpec::Structured { cells, .. } => cells,
                MeshSpec::File(_) => 0,
            };
            info!("{mode} h = {h}: errors {errors:?}");
            rows.push(ConvergenceRow {
                h,
                cells,
                iterations: summary.iterations,
                errors,
            });
        }
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let mut orders = Vec::new();
        let mut exact = Vec::new();
        for k in 0..report.lines.len() {
            let es: Vec<f64> = rows.iter().map(|r| r.errors[k]).collect();
            let at_floor = es.iter().all(|e| *e < EXACT_FLOOR);
            exact.push(at_floor);
            orders.push(if at_floor {
                None
            } else {
                observed_order(&hs, &es)
            });
        }
        report.modes.push(ModeConvergence {
            mode: mode.to_string(),
            rows,
            orders,
            exact,
        });
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(format!("{}_convergence.json", config.name));
        let text = serde_json::to_string_pretty(&report).map_err(|e| io_err(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    }
    Ok(report)
}
