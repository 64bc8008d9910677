//! Lexing and parsing of single Java method declarations.

mod lexer;
mod parser;

pub use lexer::{is_keyword, lex, tokenize, LexError, LexOutput, Token, TokenKind};
pub use parser::{parse_method, MethodAst, ParseError};

use crate::tree::Tree;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// A parsed method plus the Javadoc block that preceded it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedMethod {
    pub ast: MethodAst,
    pub javadoc: Option<String>,
}

/// Lexes and parses one method declaration.
pub fn parse_source(source: &str) -> Result<ParsedMethod, FrontendError> {
    let out = lex(source)?;
    let ast = parse_method(&out.tokens)?;
    Ok(ParsedMethod {
        ast,
        javadoc: out.javadoc,
    })
}

/// Canonical parenthesized rendering of a method tree.
pub fn ast_to_sexpr(ast: &MethodAst) -> String {
    ast.tree().to_sexpr()
}

/// Reads a tree back from s-expression form (labels and shape only).
pub fn sexpr_to_tree(text: &str) -> Result<Tree, crate::tree::SexprError> {
    Tree::parse_sexpr(text)
}
