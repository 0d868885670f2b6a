//! Reference machinery for tests: synthetic data with known truth, exhaustive LP
//! vertex enumeration and grid-search bounds for tiny programs.

mod brute;
mod dgp;
mod vertex;

pub use brute::{brute_force_bounds, BruteForceBounds, GridSpec, VertexSolver, MAX_GRID, MAX_ROWS};
pub use dgp::{
    effects_from, MediatorEquation, OutcomeEquation, SelectionEquation, SyntheticDgp, SyntheticSample, TreatmentEquation, VariableKind,
};
pub use vertex::{for_each_vertex, vertex_optimum, vertex_range};
