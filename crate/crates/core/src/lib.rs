pub mod config;
pub mod error;
pub mod fokker_planck;
pub mod grid;
pub mod io;
pub mod limit;
pub mod pnp;
pub mod poisson;
pub mod transport;
pub mod vpfp;

pub use error::{Error, Result};
