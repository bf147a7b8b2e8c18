//! Global assembly of condensed elemental systems on the standard P1 graph,
//! with Dirichlet elimination that keeps the sparsity pattern intact.

use std::fmt;
use std::str::FromStr;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::element::{
    element_displacement_terms, element_matrices, stiffness, ElementSystem, MaterialPair,
};
use crate::interface::{Classification, ElementCut, Sign};
use crate::mesh::{BoundaryKind, BoundaryTag, Mesh};
use crate::solver::CsrMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("boundary tag '{0}' does not exist in the mesh")]
    UnknownTag(String),
    #[error("no Dirichlet constraint: the system would be singular")]
    NoDirichlet,
    #[error("classification has {got} entries for {expected} elements")]
    Classification { got: usize, expected: usize },
    #[error("failed to build thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Plain P1 FEM; cut elements get the volume-weighted mean permittivity.
    StandardFem,
    /// Enriched, without the inter-elemental displacement terms.
    EfemNoD,
    /// Enriched, including the inter-elemental displacement terms.
    Efem,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::StandardFem, Mode::EfemNoD, Mode::Efem];

    pub fn name(self) -> &'static str {
        match self {
            Mode::StandardFem => "standard",
            Mode::EfemNoD => "efem-nod",
            Mode::Efem => "efem",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "standard" | "standard_fem" | "fem" => Ok(Mode::StandardFem),
            "efem-nod" | "efem_no_D" | "efem-no-d" => Ok(Mode::EfemNoD),
            "efem" | "efem_with_D" => Ok(Mode::Efem),
            other => Err(format!(
                "unknown mode '{other}' (expected standard, efem-nod or efem)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub mode: Mode,
    /// Integrate the displacement terms on domain-boundary faces too.
    pub d_on_boundary: bool,
    /// Worker threads for the elemental loop; 1 runs inline.
    pub threads: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Efem,
            d_on_boundary: true,
            threads: 1,
        }
    }
}

impl AssemblyOptions {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

/// Condensed contribution of one element.
#[derive(Debug, Clone)]
pub struct ElementContribution {
    pub matrix: DMatrix<f64>,
    /// Present for enriched elements: `phi* = recovery . phi_e`.
    pub recovery: Option<DVector<f64>>,
    /// Condensation was singular and the element was treated as uncut with
    /// this sign.
    pub fallback: Option<Sign>,
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Prescribed value per node, if any.
    pub dirichlet: Vec<Option<f64>>,
    /// Per-element recovery vectors (cut elements only).
    pub recovery: Vec<Option<DVector<f64>>>,
    /// Cut elements whose condensation fell back to an uncut treatment.
    pub fallbacks: Vec<(usize, Sign)>,
}

/// Node-adjacency pattern of P1 elements, zero-valued.
pub fn sparsity_pattern(mesh: &Mesh) -> CsrMatrix {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_nodes()];
    for element in mesh.elements() {
        for &i in element {
            rows[i].extend_from_slice(element);
        }
    }
    CsrMatrix::from_pattern(rows)
}

/// The uncondensed block system of element `e` for the given mode. For the
/// standard mode the enrichment blocks are zero.
pub fn element_system(
    mesh: &Mesh,
    classification: &Classification,
    materials: &MaterialPair,
    e: usize,
    options: &AssemblyOptions,
) -> ElementSystem {
    let geometry = mesh.element_geometry(e);
    let cut = &classification.elements[e];
    match (options.mode, cut) {
        (Mode::StandardFem, ElementCut::Cut(dec)) => {
            let eps = (materials.eps1 * dec.measure_of(Sign::Positive)
                + materials.eps2 * dec.measure_of(Sign::Negative))
                / geometry.measure;
            let n = geometry.n_nodes();
            ElementSystem {
                k: stiffness(&geometry, eps),
                b: DVector::zeros(n),
                kenr: 0.0,
                d: DVector::zeros(n),
                denr: 0.0,
            }
        }
        (Mode::Efem, ElementCut::Cut(dec)) => {
            let system = element_matrices(&geometry, materials, cut);
            let include = |k: usize| options.d_on_boundary || !mesh.is_boundary_face(e, k);
            let (d, denr) = element_displacement_terms(&geometry, materials, dec, include);
            system.with_displacement(d, denr)
        }
        _ => element_matrices(&geometry, materials, cut),
    }
}

/// Condensed matrix of element `e`, falling back to an uncut element with the
/// majority sign when the enrichment block is singular.
pub fn element_contribution(
    mesh: &Mesh,
    classification: &Classification,
    materials: &MaterialPair,
    e: usize,
    options: &AssemblyOptions,
) -> ElementContribution {
    let system = element_system(mesh, classification, materials, e, options);
    if !system.is_enriched() {
        return ElementContribution {
            matrix: system.k,
            recovery: None,
            fallback: None,
        };
    }
    match system.condense() {
        Ok(c) => ElementContribution {
            matrix: c.matrix,
            recovery: Some(c.recovery),
            fallback: None,
        },
        Err(err) => {
            let dec = classification.elements[e]
                .decomposition()
                .expect("enriched elements are cut");
            let sign = if dec.measure_of(Sign::Positive) >= dec.measure_of(Sign::Negative) {
                Sign::Positive
            } else {
                Sign::Negative
            };
            debug!("element {e}: {err}; treated as uncut {sign:?}");
            let geometry = mesh.element_geometry(e);
            ElementContribution {
                matrix: stiffness(&geometry, materials.eps(sign)),
                recovery: None,
                fallback: Some(sign),
            }
        }
    }
}

/// Node values prescribed by the Dirichlet tags. Tags are applied in order and
/// the first tag to claim a node wins.
pub fn dirichlet_values(
    mesh: &Mesh,
    boundary: &[BoundaryTag],
) -> Result<Vec<Option<f64>>, AssemblyError> {
    let mut values = vec![None; mesh.n_nodes()];
    for tag in boundary {
        let index = mesh
            .tag_index(&tag.name)
            .ok_or_else(|| AssemblyError::UnknownTag(tag.name.clone()))?;
        if let BoundaryKind::Dirichlet(value) = tag.kind {
            for node in mesh.tagged_nodes(index) {
                values[node].get_or_insert(value);
            }
        }
    }
    if values.iter().all(Option::is_none) {
        return Err(AssemblyError::NoDirichlet);
    }
    Ok(values)
}

/// Replaces constrained rows by identity rows and moves constrained columns to
/// the right-hand side. Structural entries are kept.
pub fn apply_dirichlet(matrix: &mut CsrMatrix, rhs: &mut [f64], dirichlet: &[Option<f64>]) {
    for i in 0..matrix.n() {
        if let Some(g) = dirichlet[i] {
            matrix.set_identity_row(i);
            rhs[i] = g;
            continue;
        }
        let (cols, vals) = matrix.row_mut(i);
        for (&j, v) in cols.iter().zip(vals.iter_mut()) {
            if let Some(g) = dirichlet[j] {
                rhs[i] -= *v * g;
                *v = 0.0;
            }
        }
    }
}

/// Assembles the global condensed system. Elemental work may run on several
/// threads; insertion happens in element order so the result does not depend
/// on the thread count.
pub fn assemble_global(
    mesh: &Mesh,
    classification: &Classification,
    materials: &MaterialPair,
    boundary: &[BoundaryTag],
    options: &AssemblyOptions,
) -> Result<AssembledSystem, AssemblyError> {
    if classification.elements.len() != mesh.n_elements() {
        return Err(AssemblyError::Classification {
            got: classification.elements.len(),
            expected: mesh.n_elements(),
        });
    }
    let dirichlet = dirichlet_values(mesh, boundary)?;
    let compute = |e: usize| element_contribution(mesh, classification, materials, e, options);
    let contributions: Vec<ElementContribution> = if options.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| AssemblyError::ThreadPool(e.to_string()))?;
        pool.install(|| {
            (0..mesh.n_elements())
                .into_par_iter()
                .map(compute)
                .collect()
        })
    } else {
        (0..mesh.n_elements()).map(compute).collect()
    };

    let mut matrix = sparsity_pattern(mesh);
    let mut recovery = Vec::with_capacity(mesh.n_elements());
    let mut fallbacks = Vec::new();
    for (e, c) in contributions.into_iter().enumerate() {
        let nodes = mesh.element(e);
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                matrix
                    .add(i, j, c.matrix[(a, b)])
                    .expect("element pairs are in the P1 pattern");
            }
        }
        if let Some(sign) = c.fallback {
            fallbacks.push((e, sign));
        }
        recovery.push(c.recovery);
    }
    let mut rhs = vec![0.0; mesh.n_nodes()];
    apply_dirichlet(&mut matrix, &mut rhs, &dirichlet);
    Ok(AssembledSystem {
        matrix,
        rhs,
        dirichlet,
        recovery,
        fallbacks,
    })
}
