//! Damped wave networks with point-mass oscillators.
//!
//! Strings on the edges of a metric graph obey `y_tt = y_xx`; interior
//! vertices carry oscillators `m s'' + s = -y_t`, controlled leaves absorb
//! through `d·y_x = -y_t`, and the root is clamped.

pub mod chain;
pub mod counterex;
pub mod dynamics;
pub mod error;
pub mod length;
pub mod linalg;
pub mod mesh;
pub mod network;
pub mod quadrature;
pub mod resolvent;
pub mod spectra;

pub use error::{Error, Result};
pub use length::{Length, LengthExpr};
pub use network::{
    build_graph, pi_tree_check, CircuitCoupling, GraphSpec, MetricGraph, PiTreeVerdict, Variant, VertexKind,
};
