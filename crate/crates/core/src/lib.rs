pub mod basis;
pub mod distributed;
pub mod error;
pub mod exec;
pub mod export;
pub mod mesh;
pub mod partition;
pub mod physics;
pub mod pipeline;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};
pub use exec::Execution;
