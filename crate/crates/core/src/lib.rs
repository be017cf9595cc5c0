//! Design-grammar engine: typed attributed design graphs rewritten by
//! object-oriented production systems.

pub mod ast;
pub mod check;
pub mod diag;
pub mod dsl;
pub mod export;
pub mod graph;
pub mod linker;
pub mod matcher;
pub mod program;
pub mod rewriter;
pub mod runtime;
pub mod schema;
pub mod value;
