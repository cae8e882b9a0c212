pub mod data;
pub mod error;
pub mod formula;
pub mod inference;
pub mod model;
pub mod optim;
pub mod pls;
pub mod sparse;

pub use error::{Error, Result};
