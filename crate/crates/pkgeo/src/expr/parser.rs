//! Recursive-descent parser for the scalar DSL.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! expr   := term (('+' | '-') term)*          left-associative
//! term   := unary (('*' | '/') unary)*        left-associative
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?                 right-associative
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers followed by `(` must name one of the built-in functions;
//! all other identifiers are variables or named parameters, resolved by
//! the caller.

use std::sync::Arc;

use thiserror::Error;

use super::ast::{self, Expr, Func};

#[derive(Debug, Clone, Error, PartialEq)]
#[error("syntax error at offset {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(usize, Tok)>,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        match c {
            '+' => {
                toks.push((start, Tok::Plus));
                i += 1;
            }
            '-' => {
                toks.push((start, Tok::Minus));
                i += 1;
            }
            '*' => {
                toks.push((start, Tok::Star));
                i += 1;
            }
            '/' => {
                toks.push((start, Tok::Slash));
                i += 1;
            }
            '^' => {
                toks.push((start, Tok::Caret));
                i += 1;
            }
            '(' => {
                toks.push((start, Tok::LParen));
                i += 1;
            }
            ')' => {
                toks.push((start, Tok::RParen));
                i += 1;
            }
            '0'..='9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    if i >= bytes.len() || !bytes[i].is_ascii_digit() {
                        return Err(ParseError {
                            pos: i,
                            msg: "expected digits after decimal point".into(),
                        });
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    pos: start,
                    msg: format!("malformed number `{}`", text),
                })?;
                toks.push((start, Tok::Num(value)));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((start, Tok::Ident(src[start..i].to_string())));
            }
            _ => {
                return Err(ParseError {
                    pos: start,
                    msg: format!("unexpected character `{}`", c),
                });
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    lx: Lexer<'a>,
    at: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.lx.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.lx
            .toks
            .get(self.at)
            .map(|(p, _)| *p)
            .unwrap_or(self.lx.src.len())
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.lx.toks.get(self.at).map(|(_, t)| t.clone());
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.at += 1;
                Ok(())
            }
            _ => Err(ParseError {
                pos: self.pos(),
                msg: "expected `)`".into(),
            }),
        }
    }

    fn expr(&mut self) -> Result<Arc<Expr>, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.at += 1;
                    let rhs = self.term()?;
                    lhs = ast::add(lhs, rhs);
                }
                Some(Tok::Minus) => {
                    self.at += 1;
                    let rhs = self.term()?;
                    lhs = ast::sub(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Arc<Expr>, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.at += 1;
                    let rhs = self.unary()?;
                    lhs = ast::mul(lhs, rhs);
                }
                Some(Tok::Slash) => {
                    self.at += 1;
                    let rhs = self.unary()?;
                    lhs = ast::div(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Arc<Expr>, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.at += 1;
            let inner = self.unary()?;
            return Ok(ast::neg(inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Arc<Expr>, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.at += 1;
            // Exponent re-enters at unary level: right-associative, and
            // `x^-2` is accepted.
            let exp = self.unary()?;
            return Ok(ast::pow(base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Arc<Expr>, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(ast::cst(v)),
            Some(Tok::Ident(name)) => {
                if let Some(Tok::LParen) = self.peek() {
                    let func = Func::from_name(&name).ok_or_else(|| ParseError {
                        pos,
                        msg: format!("unknown function `{}`", name),
                    })?;
                    self.at += 1;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(ast::call(func, arg))
                } else {
                    Ok(ast::var(&name))
                }
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(other) => Err(ParseError {
                pos,
                msg: format!("unexpected token `{:?}`", other),
            }),
            None => Err(ParseError {
                pos,
                msg: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parse a DSL string. Identifier validity (variables vs parameters) is
/// checked by `ScalarField`, not here.
pub fn parse(src: &str) -> Result<Arc<Expr>, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        lx: Lexer { src, toks },
        at: 0,
    };
    let e = p.expr()?;
    if p.at != p.lx.toks.len() {
        return Err(ParseError {
            pos: p.pos(),
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(e)
}
