//! One complete solve: classify, assemble, solve, recover.

use std::time::Instant;

use log::{debug, info, warn};
use thiserror::Error;

use crate::assembly::{assemble_global, AssemblyError, AssemblyOptions};
use crate::element::MaterialPair;
use crate::interface::{classify_elements, Classification, ElementCut, LevelSet, LevelSetError};
use crate::mesh::{BoundaryTag, Mesh};
use crate::postprocess::{recover_enrichment, PostError, SolutionField};
use crate::solver::{bicgstab, dense_solve, relative_residual, SolverError, SolverOptions};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    LevelSet(#[from] LevelSetError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Post(#[from] PostError),
}

#[derive(Debug, Clone)]
pub struct CaseSetup {
    pub mesh: Mesh,
    pub levelset: LevelSet,
    pub materials: MaterialPair,
    pub boundary: Vec<BoundaryTag>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    pub assembly: AssemblyOptions,
    pub solver: SolverOptions,
    /// Dense LU instead of BiCGSTAB (small systems only).
    pub direct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSummary {
    pub unknowns: usize,
    pub cut_elements: usize,
    pub fallbacks: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub seconds: f64,
}

/// Solves with the interface cut from the level set.
pub fn solve(
    setup: CaseSetup,
    options: &SolveOptions,
) -> Result<(SolutionField, SolveSummary), ProblemError> {
    let classification = classify_elements(&setup.mesh, &setup.levelset)?;
    solve_classified(
        setup.mesh,
        classification,
        setup.materials,
        &setup.boundary,
        options,
    )
}

/// Solves with a given classification, for example one built from element
/// centroids on a conforming mesh.
pub fn solve_classified(
    mesh: Mesh,
    mut classification: Classification,
    materials: MaterialPair,
    boundary: &[BoundaryTag],
    options: &SolveOptions,
) -> Result<(SolutionField, SolveSummary), ProblemError> {
    let start = Instant::now();
    let system = assemble_global(
        &mesh,
        &classification,
        &materials,
        boundary,
        &options.assembly,
    )?;
    debug!(
        "assembled {} unknowns, {} nonzeros, {} cut elements",
        system.matrix.n(),
        system.matrix.nnz(),
        classification.n_cut()
    );
    let (phi, iterations, residual, converged) = if options.direct {
        let phi = dense_solve(&system.matrix, &system.rhs)?;
        let residual = relative_residual(&system.matrix, &phi, &system.rhs);
        (phi, 0, residual, true)
    } else {
        let x0: Vec<f64> = system.dirichlet.iter().map(|d| d.unwrap_or(0.0)).collect();
        let (phi, report) = bicgstab(&system.matrix, &system.rhs, &x0, &options.solver)?;
        (phi, report.iterations, report.residual, report.converged)
    };
    if !system.fallbacks.is_empty() {
        warn!(
            "{} cut elements had a singular enrichment block and were treated as uncut",
            system.fallbacks.len()
        );
    }
    let cut_elements = classification.n_cut();
    let fallbacks = system.fallbacks.len() + classification.fallbacks.len();
    for &(e, sign) in &system.fallbacks {
        classification.elements[e] = ElementCut::Uncut(sign);
    }
    let enrichment = recover_enrichment(&mesh, &system.recovery, &phi);
    let summary = SolveSummary {
        unknowns: mesh.n_nodes(),
        cut_elements,
        fallbacks,
        iterations,
        residual,
        converged: converged && residual.is_finite(),
        seconds: start.elapsed().as_secs_f64(),
    };
    info!(
        "{} mode: {} unknowns, {} iterations, residual {:.3e}",
        options.assembly.mode, summary.unknowns, summary.iterations, summary.residual
    );
    let field = SolutionField::new(mesh, classification, materials, phi, enrichment)?;
    Ok((field, summary))
}
