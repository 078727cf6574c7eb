//! Finite element assembly on structured P1/P2 meshes.

pub mod assembly;
pub mod dirichlet;
pub mod element;
pub mod quadrature;
pub mod shape;

pub use assembly::{
    assemble_advection, assemble_load_boundary, assemble_load_domain, assemble_mass, assemble_stiffness,
    evaluate, interpolate, l2_error, Space,
};
pub use dirichlet::DofMap;
pub use quadrature::{gauss3_unit, TriangleRule};
pub use shape::ShapeSpec;
