//! Room temperature regulation: finite element discretization of an
//! advection-diffusion model driven by a steady Navier-Stokes flow, robust
//! output-regulation controller synthesis and closed-loop simulation.

pub mod config;
pub mod controller;
pub mod error;
pub mod fem;
pub mod flow;
pub mod lti;
pub mod mesh;
pub mod pipeline;
pub mod plant;
pub mod sim;
pub mod sparse;

pub use error::{Error, Result};

// links the system LAPACK used by the Schur decomposition
extern crate lapack_src;
