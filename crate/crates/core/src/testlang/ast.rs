use std::fmt;

use serde::{Deserialize, Serialize};

/// Type name as written in source, e.g. `List<String>` or `int[]`.
///
/// Generic arguments are kept for rendering; comparisons that need coarse
/// typing go through [`TypeName::erased`] or [`TypeName::canonical`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeName(String);

const BOXES: &[(&str, &str)] = &[
    ("Integer", "int"),
    ("Long", "long"),
    ("Double", "double"),
    ("Float", "float"),
    ("Boolean", "boolean"),
    ("Character", "char"),
    ("Short", "short"),
    ("Byte", "byte"),
];

pub const PRIMITIVES: &[&str] = &["boolean", "byte", "char", "short", "int", "long", "float", "double"];

impl TypeName {
    pub fn new(text: impl Into<String>) -> Self {
        TypeName(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The type with every generic argument list removed.
    pub fn erased(&self) -> String {
        let mut out = String::with_capacity(self.0.len());
        let mut depth = 0usize;
        for c in self.0.chars() {
            match c {
                '<' => depth += 1,
                '>' => depth = depth.saturating_sub(1),
                _ if depth == 0 && !c.is_whitespace() => out.push(c),
                _ => {}
            }
        }
        out
    }

    /// Dictionary key: erased, `java.lang.` dropped, boxed primitives unboxed.
    pub fn canonical(&self) -> String {
        let erased = self.erased();
        let short = erased.strip_prefix("java.lang.").unwrap_or(&erased);
        BOXES
            .iter()
            .find(|(boxed, _)| *boxed == short)
            .map_or_else(|| short.to_string(), |(_, prim)| prim.to_string())
    }

    pub fn is_primitive(&self) -> bool {
        PRIMITIVES.contains(&self.0.as_str())
    }
}

impl fmt::Display for TypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiteralType {
    Int,
    Long,
    Double,
    Float,
    Boolean,
    Char,
    String,
    Null,
}

impl LiteralType {
    /// Dictionary key for values of this literal type. `null` has no real
    /// type and gets the pseudo-type `nulltype`.
    pub fn type_key(self) -> &'static str {
        match self {
            LiteralType::Int => "int",
            LiteralType::Long => "long",
            LiteralType::Double => "double",
            LiteralType::Float => "float",
            LiteralType::Boolean => "boolean",
            LiteralType::Char => "char",
            LiteralType::String => "String",
            LiteralType::Null => NULL_TYPE,
        }
    }
}

pub const NULL_TYPE: &str = "nulltype";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expr {
    Literal {
        literal_type: LiteralType,
        /// Exact source text, including quotes and sign.
        text: String,
    },
    VarRef {
        name: String,
    },
    MethodCall {
        receiver: Option<Box<Expr>>,
        method: String,
        args: Vec<Expr>,
    },
    FieldAccess {
        receiver: Box<Expr>,
        field: String,
    },
    New {
        ty: TypeName,
        args: Vec<Expr>,
    },
    Cast {
        ty: TypeName,
        expr: Box<Expr>,
    },
}

impl Expr {
    pub fn literal(literal_type: LiteralType, text: impl Into<String>) -> Self {
        Expr::Literal { literal_type, text: text.into() }
    }

    pub fn var(name: impl Into<String>) -> Self {
        Expr::VarRef { name: name.into() }
    }

    pub fn call(receiver: Option<Expr>, method: impl Into<String>, args: Vec<Expr>) -> Self {
        Expr::MethodCall { receiver: receiver.map(Box::new), method: method.into(), args }
    }

    pub fn is_const_or_var(&self) -> bool {
        matches!(self, Expr::Literal { .. } | Expr::VarRef { .. })
    }

    /// Visits this expression and every subexpression in source order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Literal { .. } | Expr::VarRef { .. } => {}
            Expr::MethodCall { receiver, args, .. } => {
                if let Some(r) = receiver {
                    r.walk(f);
                }
                args.iter().for_each(|a| a.walk(f));
            }
            Expr::FieldAccess { receiver, .. } => receiver.walk(f),
            Expr::New { args, .. } => args.iter().for_each(|a| a.walk(f)),
            Expr::Cast { expr, .. } => expr.walk(f),
        }
    }

    /// Dotted name (`org.junit.Assert`) if the expression is a plain name chain.
    pub fn dotted_name(&self) -> Option<String> {
        match self {
            Expr::VarRef { name } => Some(name.clone()),
            Expr::FieldAccess { receiver, field } => {
                receiver.dotted_name().map(|r| format!("{r}.{field}"))
            }
            _ => None,
        }
    }
}

/// Call to an `assert*` method or to `fail`, optionally qualified
/// (`Assert.fail()`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssertCall {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualifier: Option<String>,
    pub method_name: String,
    pub args: Vec<Expr>,
}

impl AssertCall {
    pub fn new(method_name: impl Into<String>, args: Vec<Expr>) -> Self {
        AssertCall { qualifier: None, method_name: method_name.into(), args }
    }

    pub fn is_fail(&self) -> bool {
        self.method_name == "fail"
    }

    pub(crate) fn is_assert_name(name: &str) -> bool {
        name.starts_with("assert") || name == "fail"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statement {
    VarDecl {
        declared_type: TypeName,
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init: Option<Expr>,
    },
    Assign {
        target: String,
        value: Expr,
    },
    ExprStmt {
        expr: Expr,
    },
    TryCatch {
        body: Vec<Statement>,
        caught_type: TypeName,
        catch_var: String,
        catch_body: Vec<Statement>,
    },
    AssertStmt {
        call: AssertCall,
    },
    /// Construct outside the supported subset, kept as raw source text.
    Opaque {
        text: String,
    },
}

impl Statement {
    pub fn is_assert(&self) -> bool {
        matches!(self, Statement::AssertStmt { .. })
    }

    pub fn is_fail_call(&self) -> bool {
        matches!(self, Statement::AssertStmt { call } if call.is_fail())
    }

    /// For a `TryCatch`, whether the try body ends in a `fail(...)` call.
    pub fn has_fail_call(&self) -> bool {
        match self {
            Statement::TryCatch { body, .. } => body.last().is_some_and(Statement::is_fail_call),
            _ => false,
        }
    }

    /// Expressions directly owned by this statement (not nested statements).
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Statement::VarDecl { init, .. } => init.iter().collect(),
            Statement::Assign { value, .. } => vec![value],
            Statement::ExprStmt { expr } => vec![expr],
            Statement::AssertStmt { call } => call.args.iter().collect(),
            Statement::TryCatch { .. } | Statement::Opaque { .. } => Vec::new(),
        }
    }

    /// Visits this statement and all nested ones in source order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Statement)) {
        f(self);
        if let Statement::TryCatch { body, catch_body, .. } = self {
            body.iter().chain(catch_body).for_each(|s| s.walk(f));
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

/// A parsed unit test.
///
/// Equality is structural: `source_span` is ignored so that a rendered and
/// reparsed test compares equal to the original.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestMethod {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub throws: Vec<TypeName>,
    pub statements: Vec<Statement>,
    #[serde(default)]
    pub source_span: SourceSpan,
}

impl PartialEq for TestMethod {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.throws == other.throws && self.statements == other.statements
    }
}

impl Eq for TestMethod {}

impl TestMethod {
    pub fn new(name: impl Into<String>, statements: Vec<Statement>) -> Self {
        TestMethod { name: name.into(), throws: Vec::new(), statements, source_span: SourceSpan::default() }
    }

    pub fn has_opaque(&self) -> bool {
        let mut found = false;
        for s in &self.statements {
            s.walk(&mut |st| found |= matches!(st, Statement::Opaque { .. }));
        }
        found
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub ty: TypeName,
    pub name: String,
}

/// Serialized as its header text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MethodSignature {
    pub modifiers: Vec<String>,
    pub type_params: Option<String>,
    pub return_type: TypeName,
    pub name: String,
    pub params: Vec<Param>,
    pub throws: Vec<TypeName>,
}

impl From<MethodSignature> for String {
    fn from(s: MethodSignature) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for MethodSignature {
    type Error = super::ParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        super::parser::parse_method_signature(&s)
    }
}

impl fmt::Display for MethodSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.modifiers {
            write!(f, "{m} ")?;
        }
        if let Some(tp) = &self.type_params {
            write!(f, "{tp} ")?;
        }
        write!(f, "{} {}(", self.return_type, self.name)?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{} {}", p.ty, p.name)?;
        }
        f.write_str(")")?;
        if !self.throws.is_empty() {
            let names: Vec<_> = self.throws.iter().map(TypeName::as_str).collect();
            write!(f, " throws {}", names.join(", "))?;
        }
        Ok(())
    }
}

/// What the oracle generator may see of the method under test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitContext {
    pub class_name: String,
    pub signature: MethodSignature,
    /// Verbatim docstring, empty when absent.
    pub docstring: String,
    pub implementation_present: bool,
}

impl UnitContext {
    pub fn signature_text(&self) -> String {
        self.signature.to_string()
    }

    /// Text used for hashing and for external scorers.
    pub fn text(&self) -> String {
        format!("{}\n{}\n{}", self.class_name, self.signature, self.docstring)
    }
}
