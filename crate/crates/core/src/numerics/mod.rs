//! Dense-matrix reverse-mode differentiation, parameter storage, Adam and
//! finite-difference gradient checking.

mod adam;
mod gradcheck;
mod graph;
mod params;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_params, ParamCheck};
pub use graph::{Dim, ForwardOp, Gradients, Graph, Matrix, Var};
pub use params::{uniform, xavier, ParamGrads, ParamId, ParamStore};
