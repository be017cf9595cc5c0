//! The textual grammar language: lexer, recursive-descent parser and printer.

mod lexer;
mod parser;
mod printer;

pub use lexer::quote;
pub use parser::{is_reserved, parse_expr, parse_grammar};
pub use printer::{print_expr, print_grammar, print_signature, print_type};
