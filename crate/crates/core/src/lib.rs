pub mod error;
pub mod lp;
pub mod model;
pub mod mwu;
pub mod oracles;
mod par;
pub mod runtime;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
