//! Plane-strain finite elements for finger cross-sections.

pub mod body;
pub mod contact;
pub mod grip;
pub mod material;
pub mod mesh;
pub mod outline;
pub mod solver;
pub mod sim;
pub mod sparse;

pub use body::{Assembly, ElasticBody, TangentMode};
pub use contact::{ContactNode, ContactParams, ContactSummary, SelfContact, Silhouette};
pub use sim::{DynamicState, Integrator, Scene, StepReport};
pub use grip::{grip_simulation, FingerModel, GripResult, TraceRow};
pub use material::{MaterialModel, SimConfig};
pub use mesh::{triangulate, BoundaryEdge, MeshError, MeshQuality, TriMesh2D};
pub use outline::{finger_outline, BoundaryTag, FinGeometry, FingerOutline, GeometryError, Outline, TaggedLoop, Vec2};

#[derive(Debug, thiserror::Error)]
pub enum FemError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("element {element} inverted")]
    ElementInversion { element: usize },
    #[error("linear solve stalled at relative residual {residual:.3e} after {iterations} iterations")]
    StepNotConverged { residual: f64, iterations: usize },
    #[error("non-finite state")]
    NonFinite,
}
