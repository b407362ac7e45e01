pub mod bfim;
pub mod duality;
pub mod error;
pub mod fixture;
pub mod maxmin;
pub mod model;
pub mod numerics;
pub mod random;
pub mod sdr;

pub use error::{Error, Result};
