//! Tokenizer for the test-subset grammar.
//!
//! Comments and whitespace are skipped. Every token keeps its byte span so
//! that literals and opaque statements can be sliced back out of the source
//! verbatim.

use super::ast::LiteralType;
use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Literal(LiteralType),
    /// Single punctuation character. `>>` and friends are never fused, which
    /// keeps nested generic arguments trivial to close.
    Punct(char),
    /// `...` in varargs parameters.
    Ellipsis,
    /// Any other operator sequence (`+`, `==`, `->`, ...). Unsupported in the
    /// subset but still tokenized so opaque statements can be delimited.
    Op(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is_punct(&self, c: char) -> bool {
        self.kind == TokenKind::Punct(c)
    }

    pub fn is_ident(&self, s: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident(name) if name == s)
    }
}

const PUNCT: &[char] = &['(', ')', '{', '}', '[', ']', ';', ',', '.', '<', '>', '?', '@', '='];
const OP_CHARS: &[char] = &['+', '-', '*', '/', '%', '!', '~', '&', '|', '^', ':', '=', '<', '>'];

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = src[i..].chars().next().expect("in bounds");
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        if src[i..].starts_with("//") {
            i = src[i..].find('\n').map_or(bytes.len(), |off| i + off + 1);
            continue;
        }
        if src[i..].starts_with("/*") {
            match src[i + 2..].find("*/") {
                Some(off) => i = i + 2 + off + 2,
                None => return Err(ParseError::new(i, "end of block comment")),
            }
            continue;
        }
        let start = i;
        let kind = if c == '"' {
            i = scan_quoted(src, i, '"')?;
            TokenKind::Literal(LiteralType::String)
        } else if c == '\'' {
            i = scan_quoted(src, i, '\'')?;
            TokenKind::Literal(LiteralType::Char)
        } else if c.is_ascii_digit()
            || (c == '.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()))
        {
            let (end, ty) = scan_number(src, i);
            i = end;
            TokenKind::Literal(ty)
        } else if is_ident_start(c) {
            let end = src[i..]
                .char_indices()
                .find(|&(_, ch)| !is_ident_part(ch))
                .map_or(src.len(), |(off, _)| i + off);
            let word = &src[i..end];
            i = end;
            match word {
                "true" | "false" => TokenKind::Literal(LiteralType::Boolean),
                "null" => TokenKind::Literal(LiteralType::Null),
                _ => TokenKind::Ident(word.to_string()),
            }
        } else if src[i..].starts_with("...") {
            i += 3;
            TokenKind::Ellipsis
        } else if c == '=' && bytes.get(i + 1) == Some(&b'=') {
            i += 2;
            TokenKind::Op("==".into())
        } else if PUNCT.contains(&c) {
            i += 1;
            TokenKind::Punct(c)
        } else if OP_CHARS.contains(&c) {
            let end = src[i..]
                .char_indices()
                .find(|&(_, ch)| !OP_CHARS.contains(&ch))
                .map_or(src.len(), |(off, _)| i + off);
            let op = &src[i..end];
            i = end;
            TokenKind::Op(op.to_string())
        } else {
            return Err(ParseError::new(i, "token"));
        };
        tokens.push(Token { kind, start, end: i });
    }
    Ok(tokens)
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_part(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

fn scan_quoted(src: &str, start: usize, quote: char) -> Result<usize, ParseError> {
    let mut chars = src[start + 1..].char_indices();
    while let Some((off, ch)) = chars.next() {
        match ch {
            '\\' => {
                chars.next();
            }
            '\n' => break,
            c if c == quote => return Ok(start + 1 + off + 1),
            _ => {}
        }
    }
    Err(ParseError::new(start, "closing quote"))
}

fn scan_number(src: &str, start: usize) -> (usize, LiteralType) {
    let bytes = src.as_bytes();
    let mut i = start;
    let lower = |i: usize| bytes.get(i).map(|b| b.to_ascii_lowercase());
    if bytes[i] == b'0' && matches!(lower(i + 1), Some(b'x') | Some(b'b')) {
        i += 2;
        while i < bytes.len() && (bytes[i].is_ascii_hexdigit() || bytes[i] == b'_') {
            i += 1;
        }
        if matches!(lower(i), Some(b'l')) {
            return (i + 1, LiteralType::Long);
        }
        return (i, LiteralType::Int);
    }
    let mut floating = false;
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
        i += 1;
    }
    if bytes.get(i) == Some(&b'.') && !src[i..].starts_with("..") {
        // `1.foo` is not a number continuation
        let next = bytes.get(i + 1);
        let continues = next.is_none_or(|b| {
            !b.is_ascii_alphabetic() || matches!(b.to_ascii_lowercase(), b'e' | b'f' | b'd')
        });
        if continues {
            floating = true;
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                i += 1;
            }
        }
    }
    if matches!(lower(i), Some(b'e')) {
        let mut j = i + 1;
        if matches!(bytes.get(j), Some(b'+') | Some(b'-')) {
            j += 1;
        }
        if bytes.get(j).is_some_and(|b| b.is_ascii_digit()) {
            floating = true;
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    match lower(i) {
        Some(b'l') if !floating => (i + 1, LiteralType::Long),
        Some(b'f') => (i + 1, LiteralType::Float),
        Some(b'd') => (i + 1, LiteralType::Double),
        _ if floating => (i, LiteralType::Double),
        _ => (i, LiteralType::Int),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn numeric_literal_types() {
        let lits: Vec<_> = ["0", "0x1F", "10L", "1.5", "2f", "3e10", "0.5d", ".5", "1_000"]
            .iter()
            .map(|s| kinds(s))
            .collect();
        use LiteralType::*;
        let expected = [Int, Int, Long, Double, Float, Double, Double, Double, Int];
        for (got, want) in lits.iter().zip(expected) {
            assert_eq!(got, &vec![TokenKind::Literal(want)]);
        }
    }

    #[test]
    fn strings_keep_escapes_in_span() {
        let src = r#"f("a\"b", 'c')"#;
        let toks = tokenize(src).unwrap();
        assert_eq!(&src[toks[2].start..toks[2].end], r#""a\"b""#);
        assert_eq!(&src[toks[4].start..toks[4].end], "'c'");
    }

    #[test]
    fn comments_are_skipped() {
        let toks = kinds("a // x\n /* y */ b");
        assert_eq!(toks, vec![TokenKind::Ident("a".into()), TokenKind::Ident("b".into())]);
    }

    #[test]
    fn generic_closers_stay_separate() {
        let toks = kinds("Map<String, List<Integer>>");
        assert_eq!(toks.iter().filter(|k| **k == TokenKind::Punct('>')).count(), 2);
    }

    #[test]
    fn unterminated_string_is_an_error() {
        assert!(tokenize("\"abc").is_err());
    }
}
