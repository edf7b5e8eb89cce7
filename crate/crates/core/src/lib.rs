pub mod analysis;
pub mod error;
pub mod export;
pub mod linalg;
pub mod models;
pub mod mor;
pub mod parametric;
pub mod pce;
pub mod ph;
pub mod sg;
pub mod timestep;

pub use error::{Error, Result};
