use thiserror::Error;

use crate::mesh::ElementId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid base mesh: {0}")]
    InvalidBaseMesh(String),
    #[error("element {0} is not an active leaf")]
    NotALeaf(ElementId),
    #[error("element {0} cannot be coarsened: {1}")]
    CannotCoarsen(ElementId, &'static str),
    #[error("unknown element id {0}")]
    UnknownElement(ElementId),
    #[error("maximum refinement level {0} exceeded")]
    LevelLimit(usize),
    #[error("integrated Legendre mode {mode} at {xi} is outside its domain")]
    ShapeDomain { mode: usize, xi: f64 },
    #[error("point ({0}, {1}) lies outside element {2}")]
    PointOutsideElement(f64, f64, ElementId),
    #[error("point ({0}, {1}) lies outside the mesh")]
    PointOutsideMesh(f64, f64),
    #[error("segment is not on the mesh boundary")]
    InteriorSegment,
    #[error("dirichlet and neumann segments overlap")]
    OverlappingBoundaryConditions,
    #[error("only homogeneous dirichlet values are supported (got {0})")]
    NonHomogeneousDirichlet(f64),
    #[error("exact solution gradient is singular at ({0}, {1})")]
    Singularity(f64, f64),
    #[error("degree of freedom {0} has empty leaf support")]
    EmptySupport(usize),
    #[error("exchange packet from rank {from} carries row {row} not owned by rank {to}")]
    ProtocolViolation { from: usize, to: usize, row: usize },
    #[error("conjugate gradient did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
