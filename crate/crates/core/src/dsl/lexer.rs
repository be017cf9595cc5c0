use std::sync::Arc;

use crate::diag::{Diagnostic, DiagnosticKind, SourceSpan};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Colon,
    Comma,
    Dot,
    DotDot,
    DotDotEq,
    Arrow,
    Minus,
    Plus,
    Star,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Assign,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Real(r) => format!("real {r}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::DotDot => "..",
            Tok::DotDotEq => "..=",
            Tok::Arrow => "->",
            Tok::Minus => "-",
            Tok::Plus => "+",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::EqEq => "==",
            Tok::NotEq => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Bang => "!",
            Tok::Assign => "=",
            _ => "?",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

/// Splits source text into tokens. Lexical errors are reported and the
/// offending character skipped, so the token stream always ends with `Eof`.
pub fn tokenize(file: &Arc<str>, src: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut lx = Lexer {
        file: file.clone(),
        src,
        chars: src.char_indices().peekable(),
        line: 1,
        col: 1,
        tokens: Vec::new(),
        diags: Vec::new(),
    };
    lx.run();
    (lx.tokens, lx.diags)
}

struct Lexer<'a> {
    file: Arc<str>,
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: u32,
    col: u32,
    tokens: Vec<Token>,
    diags: Vec<Diagnostic>,
}

impl Lexer<'_> {
    fn bump(&mut self) -> Option<(usize, char)> {
        let next = self.chars.next();
        if let Some((_, c)) = next {
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        next
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn span(&self, line: u32, col: u32, start: usize, end: usize) -> SourceSpan {
        let len = self.src[start..end].chars().count() as u32;
        SourceSpan::new(self.file.clone(), line, col, len, start as u32)
    }

    fn push(&mut self, tok: Tok, line: u32, col: u32, start: usize, end: usize) {
        let span = self.span(line, col, start, end);
        self.tokens.push(Token { tok, span });
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map(|&(i, _)| i).unwrap_or(self.src.len())
    }

    fn run(&mut self) {
        loop {
            let (line, col) = (self.line, self.col);
            let start = self.offset();
            let Some((_, c)) = self.bump() else {
                let end = self.src.len();
                let span = SourceSpan::new(self.file.clone(), line, col, 1, end as u32);
                self.tokens.push(Token {
                    tok: Tok::Eof,
                    span,
                });
                return;
            };
            match c {
                c if c.is_whitespace() => {}
                '#' => {
                    while let Some(n) = self.peek() {
                        if n == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    while matches!(self.peek(), Some(n) if n.is_ascii_alphanumeric() || n == '_') {
                        self.bump();
                    }
                    let end = self.offset();
                    let text = self.src[start..end].to_string();
                    self.push(Tok::Ident(text), line, col, start, end);
                }
                c if c.is_ascii_digit() => self.number(line, col, start),
                '"' => self.string(line, col, start),
                _ => {
                    let tok = match c {
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        '[' => Tok::LBracket,
                        ']' => Tok::RBracket,
                        ';' => Tok::Semi,
                        ':' => Tok::Colon,
                        ',' => Tok::Comma,
                        '+' => Tok::Plus,
                        '*' => Tok::Star,
                        '/' => Tok::Slash,
                        '%' => Tok::Percent,
                        '.' => {
                            if self.peek() == Some('.') {
                                self.bump();
                                if self.peek() == Some('=') {
                                    self.bump();
                                    Tok::DotDotEq
                                } else {
                                    Tok::DotDot
                                }
                            } else {
                                Tok::Dot
                            }
                        }
                        '-' => self.two('>', Tok::Arrow, Tok::Minus),
                        '=' => self.two('=', Tok::EqEq, Tok::Assign),
                        '!' => self.two('=', Tok::NotEq, Tok::Bang),
                        '<' => self.two('=', Tok::Le, Tok::Lt),
                        '>' => self.two('=', Tok::Ge, Tok::Gt),
                        '&' if self.peek() == Some('&') => {
                            self.bump();
                            Tok::AndAnd
                        }
                        '|' if self.peek() == Some('|') => {
                            self.bump();
                            Tok::OrOr
                        }
                        other => {
                            let end = self.offset();
                            let span = self.span(line, col, start, end);
                            self.diags.push(
                                Diagnostic::error(
                                    DiagnosticKind::SyntaxError,
                                    format!("unexpected character {other:?}"),
                                )
                                .at(&span),
                            );
                            continue;
                        }
                    };
                    let end = self.offset();
                    self.push(tok, line, col, start, end);
                }
            }
        }
    }

    fn two(&mut self, next: char, yes: Tok, no: Tok) -> Tok {
        if self.peek() == Some(next) {
            self.bump();
            yes
        } else {
            no
        }
    }

    fn number(&mut self, line: u32, col: u32, start: usize) {
        let mut is_real = false;
        while matches!(self.peek(), Some(n) if n.is_ascii_digit()) {
            self.bump();
        }
        // `1..4` is a range, not a real.
        if self.peek() == Some('.') && matches!(self.peek2(), Some(n) if n.is_ascii_digit()) {
            is_real = true;
            self.bump();
            while matches!(self.peek(), Some(n) if n.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let mut look = self.chars.clone();
            look.next();
            let mut has_digits = false;
            if let Some(&(_, s)) = look.peek() {
                if s == '+' || s == '-' {
                    look.next();
                }
            }
            if let Some(&(_, d)) = look.peek() {
                has_digits = d.is_ascii_digit();
            }
            if has_digits {
                is_real = true;
                self.bump();
                if matches!(self.peek(), Some('+' | '-')) {
                    self.bump();
                }
                while matches!(self.peek(), Some(n) if n.is_ascii_digit()) {
                    self.bump();
                }
            }
        }
        let end = self.offset();
        let text = &self.src[start..end];
        let tok = if is_real {
            match text.parse::<f64>() {
                Ok(r) if r.is_finite() => Tok::Real(r),
                _ => {
                    self.number_error(line, col, start, end, text);
                    Tok::Real(0.0)
                }
            }
        } else {
            match text.parse::<i64>() {
                Ok(i) => Tok::Int(i),
                Err(_) => {
                    self.number_error(line, col, start, end, text);
                    Tok::Int(0)
                }
            }
        };
        self.push(tok, line, col, start, end);
    }

    fn number_error(&mut self, line: u32, col: u32, start: usize, end: usize, text: &str) {
        let span = self.span(line, col, start, end);
        self.diags.push(
            Diagnostic::error(
                DiagnosticKind::SyntaxError,
                format!("number literal `{text}` out of range"),
            )
            .at(&span),
        );
    }

    fn string(&mut self, line: u32, col: u32, start: usize) {
        let mut out = String::new();
        loop {
            match self.bump() {
                None => {
                    let end = self.src.len();
                    let span = self.span(line, col, start, end);
                    self.diags.push(
                        Diagnostic::error(
                            DiagnosticKind::SyntaxError,
                            "unterminated string literal",
                        )
                        .at(&span),
                    );
                    break;
                }
                Some((_, '"')) => break,
                Some((_, '\\')) => match self.bump() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, '"')) => out.push('"'),
                    Some((_, '\\')) => out.push('\\'),
                    Some((_, other)) => {
                        out.push('\\');
                        out.push(other);
                    }
                    None => {}
                },
                Some((_, c)) => out.push(c),
            }
        }
        let end = self.offset();
        self.push(Tok::Str(out), line, col, start, end);
    }
}

/// Quote a string so that the lexer reads it back unchanged.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
