use std::collections::HashMap;

use thiserror::Error;

use super::Expr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("division by constant zero at offset {offset}")]
    DivisionByZero { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::DivisionByZero { offset } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((start, Tok::End));
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start).map(|n| (start, Tok::Num(n)));
        }
        if c.is_ascii_alphabetic() {
            while self
                .src
                .get(self.pos)
                .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
            {
                self.pos += 1;
            }
            let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return Ok((start, Tok::Ident(s.to_string())));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((start, Tok::Op(c as char)));
        }
        Err(ParseError::Syntax {
            offset: start,
            message: format!("unexpected character '{}'", c as char),
        })
    }

    fn number(&mut self, start: usize) -> Result<f64, ParseError> {
        let digits = |l: &mut Self| {
            let s = l.pos;
            while l.src.get(l.pos).is_some_and(u8::is_ascii_digit) {
                l.pos += 1;
            }
            l.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(ParseError::Syntax { offset: start, message: "malformed number".into() });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // not an exponent after all, e.g. "2e1x" is still an error later
                self.pos = save;
            }
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        s.parse::<f64>()
            .map_err(|_| ParseError::Syntax { offset: start, message: format!("malformed number '{s}'") })
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    at: usize,
    vars: &'a [&'a str],
    params: &'a HashMap<String, f64>,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ParseError> {
        let (at, tok) = self.lex.next()?;
        self.at = at;
        self.tok = tok;
        Ok(())
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { offset: self.at, message: message.into() })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.tok == Tok::Op(c) {
            self.bump()
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Op('+') => {
                    self.bump()?;
                    let rhs = self.term()?;
                    lhs = Expr::add(&lhs, &rhs);
                }
                Tok::Op('-') => {
                    self.bump()?;
                    let rhs = self.term()?;
                    lhs = Expr::sub(&lhs, &rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.tok {
                Tok::Op('*') => {
                    self.bump()?;
                    let rhs = self.unary()?;
                    lhs = Expr::mul(&lhs, &rhs);
                }
                Tok::Op('/') => {
                    self.bump()?;
                    let at = self.at;
                    let rhs = self.unary()?;
                    if rhs.is_zero() {
                        return Err(ParseError::DivisionByZero { offset: at });
                    }
                    lhs = Expr::div(&lhs, &rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            let inner = self.unary()?;
            return Ok(Expr::neg(&inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.tok != Tok::Op('^') {
            return Ok(base);
        }
        self.bump()?;
        let at = self.at;
        // right-associative; the exponent may carry a unary minus
        let exponent = self.unary()?;
        match exponent.as_const() {
            Some(c) => {
                if base.is_zero() && c < 0.0 {
                    return Err(ParseError::DivisionByZero { offset: at });
                }
                Ok(Expr::powf(&base, c))
            }
            None => Err(ParseError::Syntax {
                offset: at,
                message: "exponent must be a constant".into(),
            }),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::constant(v))
            }
            Tok::Op('(') => {
                self.bump()?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.at;
                self.bump()?;
                if self.tok == Tok::Op('(') {
                    let f: fn(&Expr) -> Expr = match name.as_str() {
                        "sin" => Expr::sin,
                        "cos" => Expr::cos,
                        "exp" => Expr::exp,
                        _ => return Err(ParseError::UnknownIdentifier { offset: at, name }),
                    };
                    self.bump()?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(f(&arg));
                }
                if self.vars.contains(&name.as_str()) {
                    Ok(Expr::var(&name))
                } else if let Some(v) = self.params.get(&name) {
                    Ok(Expr::constant(*v))
                } else if name == "pi" {
                    Ok(Expr::constant(std::f64::consts::PI))
                } else {
                    Err(ParseError::UnknownIdentifier { offset: at, name })
                }
            }
            Tok::End => self.err("unexpected end of input"),
            Tok::Op(c) => self.err(format!("unexpected '{c}'")),
        }
    }
}

/// Parse `text` into an expression. Identifiers must be listed in
/// `allowed_vars` or `params`; parameters (and the builtin `pi`) are folded
/// into constants.
pub fn parse(
    text: &str,
    allowed_vars: &[&str],
    params: &HashMap<String, f64>,
) -> Result<Expr, ParseError> {
    let mut p = Parser {
        lex: Lexer { src: text.as_bytes(), pos: 0 },
        tok: Tok::End,
        at: 0,
        vars: allowed_vars,
        params,
    };
    p.bump()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return p.err("trailing input");
    }
    Ok(e)
}
