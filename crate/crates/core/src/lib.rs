//! Enriched finite elements for multi-material electrostatics on meshes that
//! do not conform to the material interface.
//!
//! Each element crossed by the interface carries one extra hat-function
//! unknown, eliminated element by element before global assembly, so the
//! global system keeps the P1 node graph. The optional displacement terms on
//! the element faces make the cut elements talk to their neighbours.

pub mod assembly;
pub mod config;
pub mod driver;
pub mod element;
pub mod interface;
pub mod mesh;
pub mod oracles;
pub mod postprocess;
pub mod problem;
pub mod solver;

pub use assembly::Mode;
pub use element::MaterialPair;
pub use interface::{LevelSet, Sign};
pub use mesh::{BoundaryTag, Mesh, Point};
pub use postprocess::SolutionField;
pub use problem::{solve, CaseSetup, SolveOptions};
