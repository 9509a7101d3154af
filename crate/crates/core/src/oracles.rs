//! The oracle grammar: a test is a prefix followed by either an expected
//! exception wrapper or a single assertion from a small set of forms.
//!
//! This module classifies assertions against that grammar, strips oracles
//! off parsed tests (yielding prefixes and labels) and renders tests back
//! from `(prefix, oracle)` pairs.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::testlang::{
    parse_statement, parse_test_method, render_assert_call, AssertCall, CallOutline, Expr, LiteralType, ParseError,
    Statement, TestMethod, TypeName,
};

/// Serialized as its rendered call, e.g. `"assertTrue(b)"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AssertionForm {
    /// `assertEquals(expected, actual)`; `expected` is a literal or a variable.
    Equals { expected: Expr, actual: Expr },
    True(Expr),
    False(Expr),
    Null(Expr),
    NotNull(Expr),
}

impl AssertionForm {
    pub fn method_name(&self) -> &'static str {
        match self {
            AssertionForm::Equals { .. } => "assertEquals",
            AssertionForm::True(_) => "assertTrue",
            AssertionForm::False(_) => "assertFalse",
            AssertionForm::Null(_) => "assertNull",
            AssertionForm::NotNull(_) => "assertNotNull",
        }
    }

    pub fn to_assert_call(&self) -> AssertCall {
        let args = match self {
            AssertionForm::Equals { expected, actual } => vec![expected.clone(), actual.clone()],
            AssertionForm::True(e)
            | AssertionForm::False(e)
            | AssertionForm::Null(e)
            | AssertionForm::NotNull(e) => vec![e.clone()],
        };
        AssertCall::new(self.method_name(), args)
    }

    /// Canonical text, e.g. `assertEquals(0, int0)` (no trailing `;`).
    pub fn render(&self) -> String {
        render_assert_call(&self.to_assert_call())
    }

    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            AssertionForm::Equals { expected, actual } => vec![expected, actual],
            AssertionForm::True(e)
            | AssertionForm::False(e)
            | AssertionForm::Null(e)
            | AssertionForm::NotNull(e) => vec![e],
        }
    }
}

impl fmt::Display for AssertionForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl AssertionForm {
    /// Parses a single in-grammar assertion such as `assertEquals(0, int0)`.
    pub fn parse(text: &str) -> Result<Self, String> {
        match parse_statement(text).map_err(|e| e.to_string())? {
            Statement::AssertStmt { call } => match classify_assertion(&call) {
                Classification::InGrammar(form) => Ok(form),
                Classification::OutOfGrammar(reason) => Err(format!("assertion out of grammar: {}", reason.as_str())),
            },
            _ => Err(format!("not an assertion: {text}")),
        }
    }
}

impl From<AssertionForm> for String {
    fn from(a: AssertionForm) -> String {
        a.render()
    }
}

impl TryFrom<String> for AssertionForm {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        AssertionForm::parse(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Oracle {
    ExpectedException {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exception_type: Option<TypeName>,
    },
    Assertion { form: AssertionForm },
}

impl Oracle {
    pub fn expected_exception(exception_type: Option<TypeName>) -> Self {
        Oracle::ExpectedException { exception_type }
    }

    pub fn assertion(form: AssertionForm) -> Self {
        Oracle::Assertion { form }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutOfGrammarReason {
    UnsupportedMethod,
    ExpectedNotConstOrVar,
    Arity,
}

impl OutOfGrammarReason {
    pub fn as_str(self) -> &'static str {
        match self {
            OutOfGrammarReason::UnsupportedMethod => "unsupported-method",
            OutOfGrammarReason::ExpectedNotConstOrVar => "expected-not-const-or-var",
            OutOfGrammarReason::Arity => "arity",
        }
    }
}

impl fmt::Display for OutOfGrammarReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    InGrammar(AssertionForm),
    OutOfGrammar(OutOfGrammarReason),
}

/// Which argument plays which role once an assertion is known to fit.
enum Shape {
    Equals { expected: usize, actual: usize },
    Unary(fn(Expr) -> AssertionForm),
}

/// Grammar check on the call's outline only: method name, arity and whether
/// each argument is a literal/variable.
fn grammar_shape(method: &str, const_or_var: &[bool]) -> Result<Shape, OutOfGrammarReason> {
    let unary: fn(Expr) -> AssertionForm = match method {
        "assertEquals" => {
            if const_or_var.len() != 2 {
                return Err(OutOfGrammarReason::Arity);
            }
            // expected-first is the JUnit convention; a literal on the right
            // is swapped into place
            return match (const_or_var[0], const_or_var[1]) {
                (true, _) => Ok(Shape::Equals { expected: 0, actual: 1 }),
                (false, true) => Ok(Shape::Equals { expected: 1, actual: 0 }),
                (false, false) => Err(OutOfGrammarReason::ExpectedNotConstOrVar),
            };
        }
        "assertTrue" => AssertionForm::True,
        "assertFalse" => AssertionForm::False,
        "assertNull" => AssertionForm::Null,
        "assertNotNull" => AssertionForm::NotNull,
        _ => return Err(OutOfGrammarReason::UnsupportedMethod),
    };
    if const_or_var.len() != 1 {
        return Err(OutOfGrammarReason::Arity);
    }
    Ok(Shape::Unary(unary))
}

pub fn classify_assertion(a: &AssertCall) -> Classification {
    let flags: Vec<bool> = a.args.iter().map(Expr::is_const_or_var).collect();
    match grammar_shape(&a.method_name, &flags) {
        Ok(Shape::Equals { expected, actual }) => Classification::InGrammar(AssertionForm::Equals {
            expected: a.args[expected].clone(),
            actual: a.args[actual].clone(),
        }),
        Ok(Shape::Unary(make)) => Classification::InGrammar(make(a.args[0].clone())),
        Err(reason) => Classification::OutOfGrammar(reason),
    }
}

/// Grammar membership for a call whose arguments may not parse. Arguments
/// outside the expression subset are never literals or variables.
pub fn classify_outline(o: &CallOutline) -> Result<(), OutOfGrammarReason> {
    let flags: Vec<bool> =
        o.args.iter().map(|a| a.as_ref().is_ok_and(Expr::is_const_or_var)).collect();
    grammar_shape(&o.method_name, &flags).map(|_| ())
}

/// Statements that drive the unit into a state, free of oracle constructs.
/// Serialized as rendered statements, one per line.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TestPrefix {
    statements: Vec<Statement>,
}

impl TestPrefix {
    /// Builds a prefix, dropping every assertion and `fail` call (also inside
    /// nested `try` blocks).
    pub fn new(statements: Vec<Statement>) -> Self {
        TestPrefix { statements: purge(statements) }
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    /// Variables declared at the top level of the prefix.
    pub fn declared_variables(&self) -> HashSet<&str> {
        self.statements
            .iter()
            .filter_map(|s| match s {
                Statement::VarDecl { name, .. } => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Rendered statements, one per line.
    pub fn text(&self) -> String {
        crate::testlang::render_statements(&self.statements)
    }
}

impl From<TestPrefix> for String {
    fn from(p: TestPrefix) -> String {
        p.text()
    }
}

impl TryFrom<String> for TestPrefix {
    type Error = ParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        TestPrefix::parse(&s)
    }
}

impl TestPrefix {
    /// Parses statement text (as produced by [`TestPrefix::text`]).
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        if text.trim().is_empty() {
            return Ok(TestPrefix::default());
        }
        let t = parse_test_method(&format!("void prefix() {{\n{text}\n}}"))?;
        Ok(TestPrefix::new(t.statements))
    }
}

fn purge(statements: Vec<Statement>) -> Vec<Statement> {
    statements
        .into_iter()
        .filter(|s| !s.is_assert())
        .map(|s| match s {
            Statement::TryCatch { body, caught_type, catch_var, catch_body } => Statement::TryCatch {
                body: purge(body),
                caught_type,
                catch_var,
                catch_body: purge(catch_body),
            },
            other => other,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedAssertion {
    pub prefix: TestPrefix,
    pub call: AssertCall,
    pub reason: OutOfGrammarReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripResult {
    /// All non-oracle statements of the test.
    pub prefix: TestPrefix,
    pub oracles: Vec<Oracle>,
    pub per_oracle_prefixes: Vec<(TestPrefix, Oracle)>,
    /// Assertions removed from the test that the grammar cannot express.
    pub rejected: Vec<RejectedAssertion>,
}

impl StripResult {
    pub fn is_expected_exception(&self) -> bool {
        matches!(self.oracles.as_slice(), [Oracle::ExpectedException { .. }])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stripped {
    Oracles(StripResult),
    /// Neither an expected-exception wrapper nor any assertion was found.
    NoOracle { prefix: TestPrefix },
}

const GENERIC_EXCEPTIONS: &[&str] = &["Exception", "Throwable", "java.lang.Exception", "java.lang.Throwable"];

fn expected_exception_type(caught: &TypeName, catch_var: &str, catch_body: &[Statement]) -> Option<TypeName> {
    if !GENERIC_EXCEPTIONS.contains(&caught.erased().as_str()) {
        return Some(caught.clone());
    }
    catch_body.iter().find_map(|s| match s {
        Statement::ExprStmt { expr: Expr::MethodCall { receiver: None, method, args } }
            if method == "verifyException" && args.len() == 2 =>
        {
            match (&args[0], args[1].dotted_name()) {
                (Expr::VarRef { name }, Some(ty)) if name == catch_var => Some(TypeName::new(ty)),
                _ => None,
            }
        }
        _ => None,
    })
}

pub fn strip_oracles(t: &TestMethod) -> Stripped {
    let stmts = &t.statements;
    if let Some(idx) = stmts.iter().position(Statement::has_fail_call) {
        let Statement::TryCatch { body, caught_type, catch_var, catch_body } = &stmts[idx] else {
            unreachable!("has_fail_call implies TryCatch")
        };
        let mut prefix_stmts: Vec<Statement> = stmts[..idx].to_vec();
        prefix_stmts.extend(body[..body.len() - 1].iter().cloned());
        let prefix = TestPrefix::new(prefix_stmts);
        let oracle = Oracle::expected_exception(expected_exception_type(caught_type, catch_var, catch_body));
        return Stripped::Oracles(StripResult {
            prefix: prefix.clone(),
            oracles: vec![oracle.clone()],
            per_oracle_prefixes: vec![(prefix, oracle)],
            rejected: Vec::new(),
        });
    }

    let mut running = Vec::new();
    let mut oracles = Vec::new();
    let mut per_oracle = Vec::new();
    let mut rejected = Vec::new();
    let mut saw_assert = false;
    for s in stmts {
        match s {
            Statement::AssertStmt { call } => {
                saw_assert = true;
                let prefix = TestPrefix::new(running.clone());
                match classify_assertion(call) {
                    Classification::InGrammar(form) => {
                        let o = Oracle::assertion(form);
                        oracles.push(o.clone());
                        per_oracle.push((prefix, o));
                    }
                    Classification::OutOfGrammar(reason) => {
                        rejected.push(RejectedAssertion { prefix, call: call.clone(), reason })
                    }
                }
            }
            other => running.push(other.clone()),
        }
    }
    let prefix = TestPrefix::new(running);
    if !saw_assert {
        return Stripped::NoOracle { prefix };
    }
    Stripped::Oracles(StripResult { prefix, oracles, per_oracle_prefixes: per_oracle, rejected })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("invalid oracle: {0}")]
    InvalidOracle(String),
}

fn is_variable_name(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_lowercase() || c == '_') && name != "this" && name != "super"
}

/// Variables (lower-case names by Java convention) that `form` reads but
/// `prefix` never declares.
pub fn undefined_variables(prefix: &TestPrefix, form: &AssertionForm) -> Vec<String> {
    let declared = prefix.declared_variables();
    let mut missing = Vec::new();
    for e in form.exprs() {
        e.walk(&mut |x| {
            if let Expr::VarRef { name } = x {
                if is_variable_name(name) && !declared.contains(name.as_str()) && !missing.contains(name) {
                    missing.push(name.clone());
                }
            }
        });
    }
    missing
}

pub const FAIL_MESSAGE: &str = "\"expecting exception\"";

pub fn render_oracle_test(p: &TestPrefix, o: &Oracle, name: &str) -> Result<TestMethod, OracleError> {
    if p.is_empty() {
        return Err(OracleError::InvalidOracle("empty prefix".into()));
    }
    let statements = match o {
        Oracle::ExpectedException { exception_type } => {
            let mut body = p.statements().to_vec();
            body.push(Statement::AssertStmt {
                call: AssertCall::new("fail", vec![Expr::literal(LiteralType::String, FAIL_MESSAGE)]),
            });
            let catch_body = exception_type
                .iter()
                .map(|ty| Statement::ExprStmt {
                    expr: Expr::call(None, "verifyException", vec![Expr::var("e"), Expr::var(ty.as_str())]),
                })
                .collect();
            vec![Statement::TryCatch {
                body,
                caught_type: TypeName::new("Exception"),
                catch_var: "e".into(),
                catch_body,
            }]
        }
        Oracle::Assertion { form } => {
            let missing = undefined_variables(p, form);
            if !missing.is_empty() {
                return Err(OracleError::InvalidOracle(format!(
                    "{} references undefined variable(s) {}",
                    form,
                    missing.join(", ")
                )));
            }
            let mut stmts = p.statements().to_vec();
            stmts.push(Statement::AssertStmt { call: form.to_assert_call() });
            stmts
        }
    };
    Ok(TestMethod::new(name, statements))
}

/// A test carrying only the implicit no-exception oracle.
pub fn render_prefix_only(p: &TestPrefix, name: &str) -> TestMethod {
    TestMethod::new(name, p.statements().to_vec())
}

pub fn normalize_test_name(t: &TestMethod, n: u64) -> TestMethod {
    let mut out = t.clone();
    out.name = format!("test{n}");
    out
}

pub fn label_exception(t: &TestMethod) -> u8 {
    match strip_oracles(t) {
        Stripped::Oracles(r) if r.is_expected_exception() => 1,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testlang::{parse_statement, parse_test_method, render_test_method};

    const PUSH_POP: &str = include_str!("../tests/fixtures/worked/stack_push_pop.java");
    const POP_EMPTY: &str = include_str!("../tests/fixtures/worked/stack_pop_empty.java");

    fn call(src: &str) -> AssertCall {
        match parse_statement(src).unwrap() {
            Statement::AssertStmt { call } => call,
            other => panic!("not an assertion: {other:?}"),
        }
    }

    fn classify(src: &str) -> Classification {
        classify_assertion(&call(src))
    }

    #[test]
    fn classification_examples() {
        assert!(matches!(classify("assertTrue(s.isEmpty())"), Classification::InGrammar(AssertionForm::True(_))));
        assert_eq!(classify("assertThat(x, is(4))"), Classification::OutOfGrammar(OutOfGrammarReason::UnsupportedMethod));
        assert_eq!(
            classify("assertEquals(id1.hashCode(), id2.hashCode())"),
            Classification::OutOfGrammar(OutOfGrammarReason::ExpectedNotConstOrVar)
        );
        assert_eq!(classify("assertEquals(0.1, x, 1e-9)"), Classification::OutOfGrammar(OutOfGrammarReason::Arity));
        assert_eq!(classify("assertTrue(\"msg\", ok)"), Classification::OutOfGrammar(OutOfGrammarReason::Arity));
        assert_eq!(classify("fail()"), Classification::OutOfGrammar(OutOfGrammarReason::UnsupportedMethod));
    }

    #[test]
    fn literal_on_the_right_is_canonicalized() {
        let Classification::InGrammar(form) = classify("assertEquals(x.size(), 4)") else { panic!() };
        assert_eq!(form.render(), "assertEquals(4, x.size())");
    }

    #[test]
    fn classification_partitions_method_names() {
        let names = ["assertEquals", "assertTrue", "assertFalse", "assertNull", "assertNotNull",
            "assertSame", "assertNotSame", "assertThat", "assertArrayEquals", "assertNotEquals", "fail"];
        for name in names {
            let arity = if name == "assertEquals" { 2 } else { 1 };
            let args = (0..arity).map(|i| Expr::var(format!("v{i}"))).collect();
            let c = classify_assertion(&AssertCall::new(name, args));
            let supported = names[..5].contains(&name);
            assert_eq!(matches!(c, Classification::InGrammar(_)), supported, "{name}");
            if !supported {
                assert_eq!(c, Classification::OutOfGrammar(OutOfGrammarReason::UnsupportedMethod));
            }
        }
    }

    #[test]
    fn pop_empty_is_an_expected_exception() {
        let t = parse_test_method(POP_EMPTY).unwrap();
        let Stripped::Oracles(r) = strip_oracles(&t) else { panic!() };
        assert_eq!(r.oracles, vec![Oracle::expected_exception(None)]);
        assert_eq!(r.prefix.text(), "Stack s = new Stack();\ns.pop();\n");
        assert_eq!(r.per_oracle_prefixes.len(), 1);
        assert_eq!(label_exception(&t), 1);
    }

    #[test]
    fn push_pop_has_one_assertion() {
        let t = parse_test_method(PUSH_POP).unwrap();
        let Stripped::Oracles(r) = strip_oracles(&t) else { panic!() };
        assert_eq!(r.oracles.len(), 1);
        let Oracle::Assertion { form } = &r.oracles[0] else { panic!() };
        assert_eq!(form.render(), "assertTrue(s.isEmpty())");
        assert_eq!(r.per_oracle_prefixes[0].0.len(), 3);
        assert_eq!(label_exception(&t), 0);
    }

    #[test]
    fn multiple_assertions_split_per_oracle() {
        let t = parse_test_method(
            "public void t() { Foo a = make(); assertNotNull(a); int b = a.size(); assertEquals(0, b); }",
        )
        .unwrap();
        let Stripped::Oracles(r) = strip_oracles(&t) else { panic!() };
        let prefixes: Vec<_> = r.per_oracle_prefixes.iter().map(|(p, _)| p.text()).collect();
        assert_eq!(prefixes, ["Foo a = make();\n", "Foo a = make();\nint b = a.size();\n"]);
        assert_eq!(r.prefix.len(), 2);
    }

    #[test]
    fn no_oracle_is_distinguished() {
        let t = parse_test_method("public void t() { go(); }").unwrap();
        assert!(matches!(strip_oracles(&t), Stripped::NoOracle { .. }));
        assert_eq!(label_exception(&t), 0);
    }

    #[test]
    fn out_of_grammar_assertions_are_rejected_not_kept() {
        let t = parse_test_method("public void t() { int x = f(); assertThat(x, is(4)); }").unwrap();
        let Stripped::Oracles(r) = strip_oracles(&t) else { panic!() };
        assert!(r.oracles.is_empty());
        assert_eq!(r.rejected.len(), 1);
        assert_eq!(r.rejected[0].reason, OutOfGrammarReason::UnsupportedMethod);
    }

    #[test]
    fn specific_catch_type_is_the_expected_exception() {
        let t = parse_test_method(
            "public void t() { try { f(null); fail(\"x\"); } catch (NullPointerException e) { } }",
        )
        .unwrap();
        let Stripped::Oracles(r) = strip_oracles(&t) else { panic!() };
        assert_eq!(r.oracles, vec![Oracle::expected_exception(Some(TypeName::new("NullPointerException")))]);
    }

    #[test]
    fn keyed_values_assertion_render() {
        let p = TestPrefix::new(
            parse_test_method(
                "public void t() { KeyedValues kv = new KeyedValues(); kv.removeValue(0); }",
            )
            .unwrap()
            .statements,
        );
        let form = AssertionForm::Equals {
            expected: Expr::literal(LiteralType::Int, "0"),
            actual: Expr::call(Some(Expr::var("kv")), "itemCount", vec![]),
        };
        let t = render_oracle_test(&p, &Oracle::assertion(form), "testKeyedValues").unwrap();
        let text = render_test_method(&t);
        assert_eq!(text.lines().rev().nth(1), Some("  assertEquals(0, kv.itemCount());"));
    }

    #[test]
    fn create_number_expected_exception_render() {
        let p = TestPrefix::new(vec![parse_statement("NumberUtils.createNumber(\"0XT\");").unwrap()]);
        let o = Oracle::expected_exception(Some(TypeName::new("NumberFormatException")));
        let text = render_test_method(&render_oracle_test(&p, &o, "testStack").unwrap());
        assert_eq!(
            text,
            "public void testStack() {\n  try {\n    NumberUtils.createNumber(\"0XT\");\n    fail(\"expecting exception\");\n  } catch (Exception e) {\n    verifyException(e, NumberFormatException);\n  }\n}\n"
        );
    }

    #[test]
    fn undefined_variable_is_invalid() {
        let p = TestPrefix::new(vec![parse_statement("int x = f();").unwrap()]);
        let o = Oracle::assertion(AssertionForm::True(Expr::var("y")));
        assert!(matches!(render_oracle_test(&p, &o, "t"), Err(OracleError::InvalidOracle(_))));
        assert!(render_oracle_test(&TestPrefix::default(), &o, "t").is_err());
    }

    #[test]
    fn normalize_only_touches_the_name() {
        let t = parse_test_method(PUSH_POP).unwrap();
        let renamed = normalize_test_name(&t, 7);
        assert_eq!(renamed.name, "test7");
        let (a, b) = (render_test_method(&t), render_test_method(&renamed));
        let diff: Vec<_> = a.lines().zip(b.lines()).filter(|(x, y)| x != y).collect();
        assert_eq!(diff, vec![("public void testPushPop() {", "public void test7() {")]);
        let t0 = TestMethod::new("test0", t.statements.clone());
        assert_eq!(normalize_test_name(&t0, 0), t0);
        let throws = parse_test_method("public void testThrowsException() { go(); }").unwrap();
        assert_eq!(normalize_test_name(&throws, 3).name, "test3");
    }

    #[test]
    fn prefixes_never_contain_oracle_constructs() {
        let t = parse_test_method(
            "public void t() { try { go(); } catch (Exception e) { fail(); } int x = f(); assertEquals(1, x); }",
        )
        .unwrap();
        let Stripped::Oracles(r) = strip_oracles(&t) else { panic!() };
        for (p, _) in &r.per_oracle_prefixes {
            for s in p.statements() {
                s.walk(&mut |st| assert!(!st.is_assert()));
            }
        }
    }
}
