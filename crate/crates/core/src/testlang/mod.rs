//! Parsing and pretty-printing for the subset of Java found in unit tests.
//!
//! The subset covers a method header followed by variable declarations,
//! assignments, expression statements, `try`/`catch` blocks and assertion
//! calls. Expressions are literals, names, (chained) method calls, field
//! accesses, `new` and casts. Anything else inside a method body is kept as
//! an [`Statement::Opaque`] statement carrying its raw text.

mod ast;
mod lexer;
mod parser;
mod render;

use std::fmt;

pub use ast::{
    AssertCall, Expr, LiteralType, MethodSignature, Param, SourceSpan, Statement, TestMethod,
    TypeName, UnitContext, NULL_TYPE, PRIMITIVES,
};
pub use parser::{parse_call_outline, parse_expression, parse_statement, CallOutline};
pub use render::{render_assert_call, render_expr, render_statement, render_statements, render_test_method};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub position: usize,
    pub expected: String,
}

impl ParseError {
    pub fn new(position: usize, expected: &str) -> Self {
        ParseError { position, expected: expected.to_string() }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at byte {}: expected {}", self.position, self.expected)
    }
}

/// Parses source holding exactly one test method. A leading `@Test`
/// annotation (with or without arguments) is skipped.
pub fn parse_test_method(source: &str) -> Result<TestMethod, ParseError> {
    parser::parse_test_method(source)
}

/// Parses a method header such as `public void removeValue(int i)`.
pub fn parse_method_signature(sig: &str) -> Result<MethodSignature, ParseError> {
    parser::parse_method_signature(sig)
}

/// Parses a method header into a context with no class name and no docstring.
pub fn parse_signature(sig: &str) -> Result<UnitContext, ParseError> {
    Ok(UnitContext {
        class_name: String::new(),
        signature: parse_method_signature(sig)?,
        docstring: String::new(),
        implementation_present: false,
    })
}
