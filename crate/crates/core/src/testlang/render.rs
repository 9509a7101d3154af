use std::fmt::Write;

use super::ast::{AssertCall, Expr, Statement, TestMethod};

const INDENT: &str = "  ";

pub fn render_expr(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, e);
    out
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Literal { text, .. } => out.push_str(text),
        Expr::VarRef { name } => out.push_str(name),
        Expr::MethodCall { receiver, method, args } => {
            if let Some(r) = receiver {
                write_receiver(out, r);
                out.push('.');
            }
            out.push_str(method);
            write_args(out, args);
        }
        Expr::FieldAccess { receiver, field } => {
            write_receiver(out, receiver);
            out.push('.');
            out.push_str(field);
        }
        Expr::New { ty, args } => {
            let _ = write!(out, "new {ty}");
            write_args(out, args);
        }
        Expr::Cast { ty, expr } => {
            let _ = write!(out, "({ty}) ");
            write_expr(out, expr);
        }
    }
}

fn write_receiver(out: &mut String, r: &Expr) {
    if matches!(r, Expr::Cast { .. }) {
        out.push('(');
        write_expr(out, r);
        out.push(')');
    } else {
        write_expr(out, r);
    }
}

fn write_args(out: &mut String, args: &[Expr]) {
    out.push('(');
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a);
    }
    out.push(')');
}

pub fn render_assert_call(call: &AssertCall) -> String {
    let mut out = String::new();
    if let Some(q) = &call.qualifier {
        out.push_str(q);
        out.push('.');
    }
    out.push_str(&call.method_name);
    write_args(&mut out, &call.args);
    out
}

pub fn render_statement(s: &Statement) -> String {
    let mut out = String::new();
    write_statement(&mut out, s, 0);
    out.truncate(out.trim_end().len());
    out
}

/// Renders statements one per line at indent level zero.
pub fn render_statements(stmts: &[Statement]) -> String {
    let mut out = String::new();
    for s in stmts {
        write_statement(&mut out, s, 0);
    }
    out
}

fn write_statement(out: &mut String, s: &Statement, level: usize) {
    let pad = INDENT.repeat(level);
    out.push_str(&pad);
    match s {
        Statement::VarDecl { declared_type, name, init } => {
            let _ = write!(out, "{declared_type} {name}");
            if let Some(e) = init {
                out.push_str(" = ");
                write_expr(out, e);
            }
            out.push_str(";\n");
        }
        Statement::Assign { target, value } => {
            let _ = write!(out, "{target} = ");
            write_expr(out, value);
            out.push_str(";\n");
        }
        Statement::ExprStmt { expr } => {
            write_expr(out, expr);
            out.push_str(";\n");
        }
        Statement::AssertStmt { call } => {
            out.push_str(&render_assert_call(call));
            out.push_str(";\n");
        }
        Statement::TryCatch { body, caught_type, catch_var, catch_body } => {
            out.push_str("try {\n");
            body.iter().for_each(|b| write_statement(out, b, level + 1));
            let _ = writeln!(out, "{pad}}} catch ({caught_type} {catch_var}) {{");
            catch_body.iter().for_each(|b| write_statement(out, b, level + 1));
            let _ = writeln!(out, "{pad}}}");
        }
        Statement::Opaque { text } => {
            out.push_str(text);
            out.push('\n');
        }
    }
}

/// Canonical rendering: one statement per line, two-space indentation.
pub fn render_test_method(t: &TestMethod) -> String {
    let mut out = format!("public void {}()", t.name);
    if !t.throws.is_empty() {
        let names: Vec<_> = t.throws.iter().map(|ty| ty.as_str()).collect();
        let _ = write!(out, " throws {}", names.join(", "));
    }
    out.push_str(" {\n");
    for s in &t.statements {
        write_statement(&mut out, s, 1);
    }
    out.push_str("}\n");
    out
}
