use super::ast::{
    AssertCall, Expr, LiteralType, MethodSignature, Param, SourceSpan, Statement, TestMethod,
    TypeName,
};
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;

const KEYWORDS: &[&str] = &[
    "abstract", "assert", "break", "case", "catch", "class", "continue", "default", "do", "else",
    "enum", "extends", "final", "finally", "for", "if", "implements", "import", "instanceof",
    "interface", "native", "new", "package", "private", "protected", "public", "return",
    "static", "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "try", "volatile", "while",
];

const MODIFIERS: &[&str] = &[
    "public", "protected", "private", "static", "final", "abstract", "synchronized", "native",
    "default", "strictfp",
];

type PResult<T> = Result<T, ParseError>;

struct Cursor<'a> {
    src: &'a str,
    toks: &'a [Token],
    pos: usize,
    /// Exclusive upper bound of the region being parsed.
    end: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, toks: &'a [Token], pos: usize, end: usize) -> Self {
        Cursor { src, toks, pos, end }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.peek_at(0)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Token> {
        let i = self.pos + n;
        if i < self.end {
            self.toks.get(i)
        } else {
            None
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.end
    }

    fn offset(&self) -> usize {
        match self.peek() {
            Some(t) => t.start,
            None => self.toks.get(self.end.saturating_sub(1)).map_or(self.src.len(), |t| t.end),
        }
    }

    fn err<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError::new(self.offset(), expected))
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek().is_some_and(|t| t.is_punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            self.err(&format!("'{c}'"))
        }
    }

    fn eat_ident(&mut self, word: &str) -> bool {
        if self.peek().is_some_and(|t| t.is_ident(word)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Ident(name)) if !KEYWORDS.contains(&name.as_str()) => {
                self.pos += 1;
                Ok(name.clone())
            }
            _ => self.err("identifier"),
        }
    }

    /// Index of the token closing the bracket at `open`.
    fn matching(&self, open: usize) -> PResult<usize> {
        let (o, c) = match self.toks[open].kind {
            TokenKind::Punct('(') => ('(', ')'),
            TokenKind::Punct('{') => ('{', '}'),
            TokenKind::Punct('[') => ('[', ']'),
            _ => return Err(ParseError::new(self.toks[open].start, "bracket")),
        };
        let mut depth = 0usize;
        for i in open..self.end {
            if self.toks[i].is_punct(o) {
                depth += 1;
            } else if self.toks[i].is_punct(c) {
                depth -= 1;
                if depth == 0 {
                    return Ok(i);
                }
            }
        }
        Err(ParseError::new(self.toks[open].start, &format!("'{c}'")))
    }

    fn skip_annotations(&mut self) -> PResult<()> {
        while self.peek().is_some_and(|t| t.is_punct('@')) {
            if self.peek_at(1).is_some_and(|t| t.is_ident("interface")) {
                return self.err("annotation");
            }
            self.pos += 1;
            self.ident()?;
            while self.peek().is_some_and(|t| t.is_punct('.')) {
                self.pos += 1;
                self.ident()?;
            }
            if self.peek().is_some_and(|t| t.is_punct('(')) {
                self.pos = self.matching(self.pos)? + 1;
            }
        }
        Ok(())
    }

    fn parse_type(&mut self) -> PResult<TypeName> {
        let mut text = self.ident()?;
        while self.peek().is_some_and(|t| t.is_punct('.'))
            && matches!(self.peek_at(1).map(|t| &t.kind), Some(TokenKind::Ident(_)))
        {
            self.pos += 1;
            text.push('.');
            text.push_str(&self.ident()?);
        }
        if self.peek().is_some_and(|t| t.is_punct('<')) {
            text.push_str(&self.type_args()?);
        }
        while self.peek().is_some_and(|t| t.is_punct('['))
            && self.peek_at(1).is_some_and(|t| t.is_punct(']'))
        {
            self.pos += 2;
            text.push_str("[]");
        }
        Ok(TypeName::new(text))
    }

    fn type_args(&mut self) -> PResult<String> {
        self.expect_punct('<')?;
        let mut parts = Vec::new();
        if !self.peek().is_some_and(|t| t.is_punct('>')) {
            loop {
                let part = if self.eat_punct('?') {
                    if self.eat_ident("extends") {
                        format!("? extends {}", self.parse_type()?)
                    } else if self.eat_ident("super") {
                        format!("? super {}", self.parse_type()?)
                    } else {
                        "?".to_string()
                    }
                } else {
                    let mut ty = self.parse_type()?.to_string();
                    // bounded type parameter in `<T extends A & B>`
                    if self.eat_ident("extends") {
                        ty = format!("{ty} extends {}", self.parse_type()?);
                        while self.peek().is_some_and(|t| t.kind == TokenKind::Op("&".into())) {
                            self.pos += 1;
                            ty = format!("{ty} & {}", self.parse_type()?);
                        }
                    }
                    ty
                };
                parts.push(part);
                if !self.eat_punct(',') {
                    break;
                }
            }
        }
        self.expect_punct('>')?;
        Ok(format!("<{}>", parts.join(", ")))
    }

    fn starts_primary(&self) -> bool {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Ident(name)) => {
                !KEYWORDS.contains(&name.as_str()) || matches!(name.as_str(), "new" | "this" | "super")
            }
            Some(TokenKind::Literal(_)) | Some(TokenKind::Punct('(')) => true,
            Some(TokenKind::Op(op)) => op == "-" && self.peek_at(1).is_some_and(is_numeric_literal),
            _ => false,
        }
    }

    fn parse_expr(&mut self) -> PResult<Expr> {
        if let Some(Token { kind: TokenKind::Op(op), start, .. }) = self.peek() {
            if op == "-" {
                return match self.peek_at(1) {
                    Some(lit) if is_numeric_literal(lit) => {
                        let TokenKind::Literal(ty) = lit.kind else { unreachable!() };
                        self.pos += 2;
                        Ok(Expr::literal(ty, &self.src[*start..lit.end]))
                    }
                    _ => self.err("literal after '-'"),
                };
            }
        }
        if self.peek().is_some_and(|t| t.is_punct('(')) {
            let save = self.pos;
            self.pos += 1;
            if let Ok(ty) = self.parse_type() {
                if self.eat_punct(')') && self.starts_primary() {
                    let inner = self.parse_expr()?;
                    return Ok(Expr::Cast { ty, expr: Box::new(inner) });
                }
            }
            self.pos = save + 1;
            let inner = self.parse_expr()?;
            self.expect_punct(')')?;
            return self.parse_postfix(inner);
        }
        let primary = self.parse_primary()?;
        self.parse_postfix(primary)
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let Some(tok) = self.peek() else {
            return self.err("expression");
        };
        match &tok.kind {
            TokenKind::Literal(ty) => {
                self.pos += 1;
                Ok(Expr::literal(*ty, &self.src[tok.start..tok.end]))
            }
            TokenKind::Ident(name) if name == "new" => {
                self.pos += 1;
                let ty = self.parse_type()?;
                let args = self.parse_args()?;
                if self.peek().is_some_and(|t| t.is_punct('{')) {
                    return self.err("end of constructor call");
                }
                Ok(Expr::New { ty, args })
            }
            TokenKind::Ident(name) if name == "this" || name == "super" => {
                self.pos += 1;
                Ok(Expr::var(name.clone()))
            }
            TokenKind::Ident(_) => {
                let name = self.ident()?;
                if self.peek().is_some_and(|t| t.is_punct('(')) {
                    let args = self.parse_args()?;
                    Ok(Expr::call(None, name, args))
                } else {
                    Ok(Expr::var(name))
                }
            }
            _ => self.err("expression"),
        }
    }

    fn parse_postfix(&mut self, mut expr: Expr) -> PResult<Expr> {
        while self.peek().is_some_and(|t| t.is_punct('.')) {
            self.pos += 1;
            let name = match self.peek().map(|t| &t.kind) {
                // `Foo.class` and `Outer.this` are plain field-like accesses
                Some(TokenKind::Ident(n)) => n.clone(),
                _ => return self.err("member name"),
            };
            self.pos += 1;
            if self.peek().is_some_and(|t| t.is_punct('(')) {
                let args = self.parse_args()?;
                expr = Expr::call(Some(expr), name, args);
            } else {
                expr = Expr::FieldAccess { receiver: Box::new(expr), field: name };
            }
        }
        Ok(expr)
    }

    fn parse_args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_punct('(')?;
        let mut args = Vec::new();
        if self.eat_punct(')') {
            return Ok(args);
        }
        loop {
            args.push(self.parse_expr()?);
            if self.eat_punct(')') {
                return Ok(args);
            }
            self.expect_punct(',')?;
        }
    }

    /// Parses `[start, end)` as a sequence of statements.
    fn parse_block(&self, start: usize, end: usize) -> PResult<Vec<Statement>> {
        let mut out = Vec::new();
        let mut i = start;
        while i < end {
            let stop = statement_end(self.toks, i, end);
            let mut sub = Cursor::new(self.src, self.toks, i, stop);
            let stmt = match sub.parse_statement() {
                Ok(s) if sub.at_end() => s,
                _ => Statement::Opaque {
                    text: self.src[self.toks[i].start..self.toks[stop - 1].end].to_string(),
                },
            };
            out.push(stmt);
            i = stop;
        }
        Ok(out)
    }

    fn parse_statement(&mut self) -> PResult<Statement> {
        if self.peek().is_some_and(|t| t.is_ident("try")) {
            return self.parse_try();
        }
        let last = self.end - 1;
        if !self.toks[last].is_punct(';') {
            return self.err("';'");
        }
        let body_end = last;
        let start = self.pos;

        let mut decl = Cursor::new(self.src, self.toks, start, body_end);
        if let Ok(stmt) = decl.parse_var_decl() {
            if decl.at_end() {
                self.pos = self.end;
                return Ok(stmt);
            }
        }

        let mut assign = Cursor::new(self.src, self.toks, start, body_end);
        if let Ok(target) = assign.ident() {
            if assign.eat_punct('=') {
                let value = assign.parse_expr()?;
                if !assign.at_end() {
                    return assign.err("';'");
                }
                self.pos = self.end;
                return Ok(Statement::Assign { target, value });
            }
        }

        let mut expr_cur = Cursor::new(self.src, self.toks, start, body_end);
        let expr = expr_cur.parse_expr()?;
        if !expr_cur.at_end() {
            return expr_cur.err("';'");
        }
        self.pos = self.end;
        match expr {
            Expr::MethodCall { receiver, method, args } if is_assert_target(receiver.as_deref(), &method) => {
                let qualifier = receiver.and_then(|r| r.dotted_name());
                Ok(Statement::AssertStmt { call: AssertCall { qualifier, method_name: method, args } })
            }
            e @ (Expr::MethodCall { .. } | Expr::New { .. }) => Ok(Statement::ExprStmt { expr: e }),
            _ => Err(ParseError::new(self.toks[start].start, "statement expression")),
        }
    }

    fn parse_var_decl(&mut self) -> PResult<Statement> {
        let declared_type = self.parse_type()?;
        let name = self.ident()?;
        let init = if self.eat_punct('=') { Some(self.parse_expr()?) } else { None };
        Ok(Statement::VarDecl { declared_type, name, init })
    }

    fn parse_try(&mut self) -> PResult<Statement> {
        self.pos += 1;
        let body = self.parse_braced()?;
        if !self.eat_ident("catch") {
            return self.err("catch");
        }
        self.expect_punct('(')?;
        let caught_type = self.parse_type()?;
        let catch_var = self.ident()?;
        self.expect_punct(')')?;
        let catch_body = self.parse_braced()?;
        if !self.at_end() {
            return self.err("end of try statement");
        }
        Ok(Statement::TryCatch { body, caught_type, catch_var, catch_body })
    }

    fn parse_braced(&mut self) -> PResult<Vec<Statement>> {
        if !self.peek().is_some_and(|t| t.is_punct('{')) {
            return self.err("'{'");
        }
        let close = self.matching(self.pos)?;
        let stmts = self.parse_block(self.pos + 1, close)?;
        self.pos = close + 1;
        Ok(stmts)
    }
}

fn is_numeric_literal(t: &Token) -> bool {
    matches!(
        t.kind,
        TokenKind::Literal(LiteralType::Int | LiteralType::Long | LiteralType::Double | LiteralType::Float)
    )
}

fn is_assert_target(receiver: Option<&Expr>, method: &str) -> bool {
    if !AssertCall::is_assert_name(method) {
        return false;
    }
    match receiver {
        None => true,
        Some(r) => r
            .dotted_name()
            .is_some_and(|q| q.rsplit('.').next().is_some_and(|last| last.starts_with("Assert"))),
    }
}

/// Exclusive end index of the statement beginning at `start`.
///
/// A statement ends at a top-level `;`, or at the `}` closing a top-level
/// block unless the construct continues (`else`, `catch`, an anonymous class
/// followed by `;`, ...). Without a terminator the rest of the region is
/// taken.
fn statement_end(toks: &[Token], start: usize, end: usize) -> usize {
    let mut depth = 0i32;
    let mut i = start;
    while i < end {
        let t = &toks[i];
        match t.kind {
            TokenKind::Punct('(' | '[' | '{') => depth += 1,
            TokenKind::Punct(')' | ']') => depth -= 1,
            TokenKind::Punct('}') => {
                depth -= 1;
                if depth == 0 {
                    let continues = toks[i + 1..end].first().is_some_and(|n| {
                        ["else", "catch", "finally", "while"].iter().any(|w| n.is_ident(w))
                            || [';', ')', '.', ','].iter().any(|&c| n.is_punct(c))
                    });
                    if !continues {
                        return i + 1;
                    }
                }
            }
            TokenKind::Punct(';') if depth == 0 => return i + 1,
            _ => {}
        }
        i += 1;
    }
    end
}

fn check_balanced(src: &str, toks: &[Token]) -> PResult<()> {
    let mut stack: Vec<(char, usize)> = Vec::new();
    for t in toks {
        if let TokenKind::Punct(c) = t.kind {
            match c {
                '(' | '{' | '[' => stack.push((c, t.start)),
                ')' | '}' | ']' => {
                    let want = match c {
                        ')' => '(',
                        '}' => '{',
                        _ => '[',
                    };
                    match stack.pop() {
                        Some((open, _)) if open == want => {}
                        _ => return Err(ParseError::new(t.start, &format!("matching '{want}' before '{c}'"))),
                    }
                }
                _ => {}
            }
        }
    }
    if let Some((open, _)) = stack.pop() {
        let close = match open {
            '(' => ')',
            '{' => '}',
            _ => ']',
        };
        return Err(ParseError::new(src.len(), &format!("'{close}'")));
    }
    Ok(())
}

pub fn parse_test_method(src: &str) -> PResult<TestMethod> {
    let toks = tokenize(src)?;
    check_balanced(src, &toks)?;
    let mut cur = Cursor::new(src, &toks, 0, toks.len());
    cur.skip_annotations()?;
    while cur.peek().is_some_and(|t| MODIFIERS.iter().any(|m| t.is_ident(m))) {
        cur.pos += 1;
    }
    let header_start = cur.offset();
    cur.parse_type().map_err(|_| ParseError::new(header_start, "method header"))?;
    let name = cur.ident().map_err(|_| ParseError::new(cur.offset(), "method name"))?;
    if !cur.peek().is_some_and(|t| t.is_punct('(')) {
        return cur.err("'(' of method header");
    }
    cur.pos = cur.matching(cur.pos)? + 1;
    let mut throws = Vec::new();
    if cur.eat_ident("throws") {
        loop {
            throws.push(cur.parse_type()?);
            if !cur.eat_punct(',') {
                break;
            }
        }
    }
    if !cur.peek().is_some_and(|t| t.is_punct('{')) {
        return cur.err("method body");
    }
    let open = cur.pos;
    let close = cur.matching(open)?;
    if close + 1 != toks.len() {
        return Err(ParseError::new(toks[close + 1].start, "end of input after method body"));
    }
    let statements = cur.parse_block(open + 1, close)?;
    if statements.is_empty() {
        return Err(ParseError::new(toks[close].start, "at least one statement"));
    }
    let span = SourceSpan { start: toks.first().map_or(0, |t| t.start), end: toks[close].end };
    Ok(TestMethod { name, throws, statements, source_span: span })
}

/// Parses a single statement (e.g. an assertion line such as
/// `assertEquals(0, x);`). A missing trailing `;` is tolerated.
pub fn parse_statement(src: &str) -> PResult<Statement> {
    let mut text = src.trim().to_string();
    if !text.ends_with(';') && !text.ends_with('}') {
        text.push(';');
    }
    let toks = tokenize(&text)?;
    check_balanced(&text, &toks)?;
    if toks.is_empty() {
        return Err(ParseError::new(0, "statement"));
    }
    let mut cur = Cursor::new(&text, &toks, 0, toks.len());
    let stmt = cur.parse_statement()?;
    if !cur.at_end() {
        return cur.err("end of statement");
    }
    Ok(stmt)
}

pub fn parse_expression(src: &str) -> PResult<Expr> {
    let toks = tokenize(src)?;
    check_balanced(src, &toks)?;
    let mut cur = Cursor::new(src, &toks, 0, toks.len());
    let e = cur.parse_expr()?;
    if !cur.at_end() {
        return cur.err("end of expression");
    }
    Ok(e)
}

/// Outline of a call `[qualifier.]name(arg, ...)` whose arguments may lie
/// outside the expression subset. Unparseable arguments are `Err(raw)`.
#[derive(Debug, Clone)]
pub struct CallOutline {
    pub qualifier: Option<String>,
    pub method_name: String,
    pub args: Vec<Result<Expr, String>>,
}

pub fn parse_call_outline(src: &str) -> PResult<CallOutline> {
    let text = src.trim().trim_end_matches(';').trim_end();
    let toks = tokenize(text)?;
    check_balanced(text, &toks)?;
    let mut cur = Cursor::new(text, &toks, 0, toks.len());
    let mut names = vec![cur.ident()?];
    while cur.eat_punct('.') {
        names.push(cur.ident()?);
    }
    let method_name = names.pop().expect("at least one name");
    let qualifier = (!names.is_empty()).then(|| names.join("."));
    if !cur.peek().is_some_and(|t| t.is_punct('(')) {
        return cur.err("'('");
    }
    let close = cur.matching(cur.pos)?;
    if close + 1 != toks.len() {
        return Err(ParseError::new(toks[close + 1].start, "end of call"));
    }
    let mut args = Vec::new();
    let mut i = cur.pos + 1;
    let mut depth = 0i32;
    let mut arg_start = i;
    while i <= close {
        let t = &toks[i];
        let split = (i == close) || (depth == 0 && t.is_punct(','));
        if split {
            if arg_start < i {
                let raw = &text[toks[arg_start].start..toks[i - 1].end];
                let mut sub = Cursor::new(text, &toks, arg_start, i);
                let parsed = match sub.parse_expr() {
                    Ok(e) if sub.at_end() => Ok(e),
                    _ => Err(raw.to_string()),
                };
                args.push(parsed);
            } else if i != close || !args.is_empty() {
                return Err(ParseError::new(t.start, "argument"));
            }
            arg_start = i + 1;
        } else {
            match t.kind {
                TokenKind::Punct('(' | '[' | '{') => depth += 1,
                TokenKind::Punct(')' | ']' | '}') => depth -= 1,
                _ => {}
            }
        }
        i += 1;
    }
    Ok(CallOutline { qualifier, method_name, args })
}

pub fn parse_method_signature(src: &str) -> PResult<MethodSignature> {
    let toks = tokenize(src)?;
    check_balanced(src, &toks)?;
    let mut cur = Cursor::new(src, &toks, 0, toks.len());
    cur.skip_annotations()?;
    let mut modifiers = Vec::new();
    while let Some(m) = cur.peek().and_then(|t| MODIFIERS.iter().find(|m| t.is_ident(m))) {
        modifiers.push(m.to_string());
        cur.pos += 1;
        cur.skip_annotations()?;
    }
    let type_params = if cur.peek().is_some_and(|t| t.is_punct('<')) {
        Some(cur.type_args()?)
    } else {
        None
    };
    // `name(` directly after the modifiers means the return type is missing
    if cur.peek_at(1).is_some_and(|t| t.is_punct('(')) {
        return cur.err("return type");
    }
    let return_type = cur.parse_type()?;
    let name = cur.ident().map_err(|_| ParseError::new(cur.offset(), "method name"))?;
    cur.expect_punct('(')?;
    let mut params = Vec::new();
    if !cur.eat_punct(')') {
        loop {
            cur.skip_annotations()?;
            cur.eat_ident("final");
            let mut ty = cur.parse_type()?;
            if cur.peek().is_some_and(|t| t.kind == TokenKind::Ellipsis) {
                cur.pos += 1;
                ty = TypeName::new(format!("{ty}..."));
            }
            let pname = cur.ident()?;
            params.push(Param { ty, name: pname });
            if cur.eat_punct(')') {
                break;
            }
            cur.expect_punct(',')?;
        }
    }
    let mut throws = Vec::new();
    if cur.eat_ident("throws") {
        loop {
            throws.push(cur.parse_type()?);
            if !cur.eat_punct(',') {
                break;
            }
        }
    }
    cur.eat_punct(';');
    if !cur.at_end() {
        return cur.err("end of signature");
    }
    Ok(MethodSignature { modifiers, type_params, return_type, name, params, throws })
}
