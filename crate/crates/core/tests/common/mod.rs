//! Random prefixes and corpora for the property and acceptance suites.
//!
//! Every generated prefix records, alongside its source text, the values it
//! introduced (type key and text, in order of appearance) so tests can
//! compute expected candidate sets without touching the library.

#![allow(dead_code)]

use oracle_forge::oracles::{AssertionForm, TestPrefix};
use oracle_forge::testlang::{parse_test_method, Expr, LiteralType};
use rand::seq::SliceRandom;
use rand::Rng;

pub const RET_TYPES: [&str; 4] = ["boolean", "int", "String", "Widget"];
pub const INTS: [&str; 6] = ["0", "1", "2", "3", "-1", "42"];
pub const STRINGS: [&str; 4] = ["\"a\"", "\"b\"", "\"\"", "\"x y\""];
pub const BOOLS: [&str; 2] = ["true", "false"];

pub struct GenPrefix {
    pub body: String,
    pub ret_type: &'static str,
    pub ret_var: &'static str,
    /// (type key, text) of every value introduced, first appearance first.
    pub locals: Vec<(String, String)>,
}

impl GenPrefix {
    pub fn prefix(&self) -> TestPrefix {
        let t = parse_test_method(&format!("public void t() {{\n{}\n}}", self.body)).expect("generated prefix parses");
        TestPrefix::new(t.statements)
    }
}

fn literal(rng: &mut impl Rng) -> (&'static str, &'static str) {
    match rng.gen_range(0..3) {
        0 => ("int", *INTS.choose(rng).unwrap()),
        1 => ("String", *STRINGS.choose(rng).unwrap()),
        _ => ("boolean", *BOOLS.choose(rng).unwrap()),
    }
}

pub fn gen_prefix(rng: &mut impl Rng) -> GenPrefix {
    let ret_type = *RET_TYPES.choose(rng).unwrap();
    let mut lines = vec!["Widget w0 = new Widget();".to_string()];
    let mut locals = vec![("Widget".to_string(), "w0".to_string())];
    let n = rng.gen_range(0..=6);
    for i in 1..=n {
        match rng.gen_range(0..4) {
            0 => {
                let (ty, lit) = literal(rng);
                let var = format!("v{i}");
                lines.push(format!("{ty} {var} = {lit};"));
                locals.push((ty.to_string(), var));
                locals.push((ty.to_string(), lit.to_string()));
            }
            1 => {
                let (ty, lit) = literal(rng);
                lines.push(format!("w0.use({lit});"));
                locals.push((ty.to_string(), lit.to_string()));
            }
            2 => {
                let var = format!("w{i}");
                lines.push(format!("Widget {var} = w0.copy();"));
                locals.push(("Widget".to_string(), var));
            }
            _ => {
                lines.push("w0.use(null);".to_string());
                locals.push(("nulltype".to_string(), "null".to_string()));
            }
        }
    }
    lines.push(format!("{ret_type} result = w0.compute();"));
    GenPrefix { body: lines.join("\n"), ret_type, ret_var: "result", locals }
}

/// Random `assertEquals` corpus; returns the forms and their (type, text) pairs.
pub fn gen_corpus(rng: &mut impl Rng) -> (Vec<AssertionForm>, Vec<(String, String)>) {
    let m = rng.gen_range(0..=30);
    let mut forms = Vec::with_capacity(m);
    let mut pairs = Vec::with_capacity(m);
    for _ in 0..m {
        let (ty, lit) = if rng.gen_bool(0.1) { ("nulltype", "null") } else { literal(rng) };
        let lt = match ty {
            "int" => LiteralType::Int,
            "String" => LiteralType::String,
            "boolean" => LiteralType::Boolean,
            _ => LiteralType::Null,
        };
        forms.push(AssertionForm::Equals { expected: Expr::literal(lt, lit), actual: Expr::var("x") });
        pairs.push((ty.to_string(), lit.to_string()));
    }
    (forms, pairs)
}
