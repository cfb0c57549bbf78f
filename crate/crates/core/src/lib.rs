pub mod cli;
pub mod conditioning;
pub mod error;
pub mod experiments;
pub mod kahler;
mod optim;
pub mod quadrature;
pub mod randsys;
pub mod rootfind;
pub mod supports;
pub mod volume;

pub use error::{Error, Result};
