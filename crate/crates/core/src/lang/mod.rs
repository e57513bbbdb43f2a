//! Lexer, parser, and printer for the schema-definition, data-manipulation,
//! and query languages.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod printer;

pub use ast::*;
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse_condition, parse_query, parse_script, parse_script_with_recovery, parse_statement_text};
pub use printer::{print_condition, print_query, print_scalar};
