//! Dense Hermitian linear algebra and a small semidefinite-programming core.

pub mod hermitian;
pub(crate) mod ipm;
pub mod lmi;

pub use hermitian::*;
pub use lmi::{
    lmi_feasibility, sdp_solve, verify_certificate, Feasibility, LmiBlock, LmiProblem,
    SdpSolution, SdpStatus, VarSign, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
