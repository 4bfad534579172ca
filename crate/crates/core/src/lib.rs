//! Fin-ray gripper design search: parameterization, 2D contact FEM,
//! grasp scoring and a CMA-ME archive.

pub mod design;
pub mod fem2d;
pub mod grasp;
pub mod qd;
