//! The `minisql` dialect accepted by the engine.

mod exec;
pub mod parser;

pub use exec::QueryOutput;
pub use parser::{parse, Statement};
