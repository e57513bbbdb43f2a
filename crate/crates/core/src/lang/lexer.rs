//! Hand-rolled lexer for `.dj` scripts.

use serde::{Deserialize, Serialize};

use crate::error::LexError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Number,
    /// Quoted string or date/datetime literal; `text` holds the content
    /// without quotes.
    Str,
    Symbol,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
    pub column: usize,
}

/// Reserved words: statement keywords, condition functions, datatype names,
/// and aggregation function names. Rejected as attribute names.
pub const KEYWORDS: &[&str] = &[
    "insert", "delete", "update", "populate", "U", "And", "Not", "master", "in", "null", "int",
    "unsigned", "decimal", "char", "varchar", "date", "datetime", "year", "enum", "double",
    "count", "sum", "min", "max", "avg", "median", "percentile", "stddev", "var",
];

const SYMBOLS: &[&str] = &[
    "---", "...", "::", "->", "==", "!=", "<>", "<=", ">=", ":", ",", ".", "(", ")", "[", "]",
    "{", "}", "&", "\\", "*", "+", "-", "/", "<", ">", "=",
];

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        self.src[self.pos..].starts_with(s.as_bytes())
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn bump_n(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }

    fn err(&self, message: impl Into<String>) -> LexError {
        LexError {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    /// A date `YYYY-MM-DD`, optionally extended to `YYYY-MM-DD HH:MM:SS`.
    fn try_date(&self) -> Option<usize> {
        let rest = &self.src[self.pos..];
        let digits = |range: std::ops::Range<usize>| {
            range.clone().all(|i| rest.get(i).is_some_and(u8::is_ascii_digit))
        };
        if !(digits(0..4)
            && rest.get(4) == Some(&b'-')
            && digits(5..7)
            && rest.get(7) == Some(&b'-')
            && digits(8..10))
        {
            return None;
        }
        // must not be a longer digit run
        if rest.get(10).is_some_and(u8::is_ascii_digit) {
            return None;
        }
        let time = rest.get(10) == Some(&b' ')
            && digits(11..13)
            && rest.get(13) == Some(&b':')
            && digits(14..16)
            && rest.get(16) == Some(&b':')
            && digits(17..19)
            && !rest.get(19).is_some_and(u8::is_ascii_digit);
        Some(if time { 19 } else { 10 })
    }
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let mut lx = Lexer {
        src: source.as_bytes(),
        pos: 0,
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();
    'outer: while let Some(c) = lx.peek() {
        if c.is_ascii_whitespace() {
            lx.bump();
            continue;
        }
        let (line, column) = (lx.line, lx.column);
        if c == b'#' {
            let start = lx.pos + 1;
            while lx.peek().is_some_and(|c| c != b'\n') {
                lx.bump();
            }
            tokens.push(Token {
                kind: TokenKind::Comment,
                text: source[start..lx.pos].trim().to_string(),
                line,
                column,
            });
            continue;
        }
        if c == b'\'' || c == b'"' {
            let quote = c;
            lx.bump();
            let start = lx.pos;
            loop {
                match lx.peek() {
                    None | Some(b'\n') => return Err(lx.err("unterminated string literal")),
                    Some(q) if q == quote => break,
                    _ => {
                        lx.bump();
                    }
                }
            }
            let text = source[start..lx.pos].to_string();
            lx.bump(); // closing quote
            tokens.push(Token {
                kind: TokenKind::Str,
                text,
                line,
                column,
            });
            continue;
        }
        if c.is_ascii_digit() {
            if let Some(len) = lx.try_date() {
                let text = source[lx.pos..lx.pos + len].to_string();
                lx.bump_n(len);
                tokens.push(Token {
                    kind: TokenKind::Str,
                    text,
                    line,
                    column,
                });
                continue;
            }
            let start = lx.pos;
            while lx.peek().is_some_and(|c| c.is_ascii_digit()) {
                lx.bump();
            }
            // fractional part, but not the `..` of an ellipsis
            if lx.peek() == Some(b'.') && lx.src.get(lx.pos + 1).is_some_and(u8::is_ascii_digit) {
                lx.bump();
                while lx.peek().is_some_and(|c| c.is_ascii_digit()) {
                    lx.bump();
                }
            }
            tokens.push(Token {
                kind: TokenKind::Number,
                text: source[start..lx.pos].to_string(),
                line,
                column,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = lx.pos;
            while lx
                .peek()
                .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_')
            {
                lx.bump();
            }
            let text = &source[start..lx.pos];
            tokens.push(Token {
                kind: if KEYWORDS.contains(&text) {
                    TokenKind::Keyword
                } else {
                    TokenKind::Identifier
                },
                text: text.to_string(),
                line,
                column,
            });
            continue;
        }
        for sym in SYMBOLS {
            if lx.starts_with(sym) {
                lx.bump_n(sym.len());
                tokens.push(Token {
                    kind: TokenKind::Symbol,
                    text: (*sym).to_string(),
                    line,
                    column,
                });
                continue 'outer;
            }
        }
        return Err(lx.err(format!("illegal character `{}`", c as char)));
    }
    Ok(tokens)
}
