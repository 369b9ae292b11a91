//! Parser for the constraint sub-grammar carried in goal `constraint` strings.

use crate::constraint::{ArithExpr, BoolExpr, CmpOp, ConstraintExpr, TemporalOp};

/// Error with a character offset/length inside the constraint string.
#[derive(Debug, Clone)]
pub struct ConstraintParseError {
    pub message: String,
    pub offset: usize,
    pub length: usize,
}

impl ConstraintParseError {
    fn at(message: impl Into<String>, offset: usize, length: usize) -> Self {
        ConstraintParseError { message: message.into(), offset, length: length.max(1) }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Cmp(CmpOp),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    offset: usize,
    length: usize,
}

fn tokenize(text: &str) -> Result<Vec<Spanned>, ConstraintParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '(' | ')' | ',' | '+' | '-' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    '+' => Tok::Plus,
                    _ => Tok::Minus,
                };
                out.push(Spanned { tok, offset: i, length: 1 });
                i += 1;
            }
            '<' | '>' | '=' => {
                let two = chars.get(i + 1) == Some(&'=');
                let (op, len) = match (c, two) {
                    ('<', true) => (CmpOp::Le, 2),
                    ('<', false) => (CmpOp::Lt, 1),
                    ('>', true) => (CmpOp::Ge, 2),
                    ('>', false) => (CmpOp::Gt, 1),
                    ('=', true) => (CmpOp::Eq, 2),
                    ('=', false) => {
                        return Err(ConstraintParseError::at("expected `==`", i, 1));
                    }
                    _ => unreachable!(),
                };
                out.push(Spanned { tok: Tok::Cmp(op), offset: i, length: len });
                i += len;
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let n = s.parse::<f64>().map_err(|_| {
                    ConstraintParseError::at(format!("bad number `{s}`"), start, i - start)
                })?;
                out.push(Spanned { tok: Tok::Num(n), offset: start, length: i - start });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Spanned { tok: Tok::Ident(s), offset: start, length: i - start });
            }
            other => {
                return Err(ConstraintParseError::at(
                    format!("unexpected character `{other}` in constraint"),
                    i,
                    1,
                ));
            }
        }
    }
    Ok(out)
}

pub fn parse_constraint(text: &str) -> Result<ConstraintExpr, ConstraintParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0, end: text.chars().count() };
    let expr = p.constraint()?;
    if p.pos < p.toks.len() {
        let t = &p.toks[p.pos];
        return Err(ConstraintParseError::at("trailing input after constraint", t.offset, t.length));
    }
    Ok(expr)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, message: impl Into<String>) -> ConstraintParseError {
        match self.toks.get(self.pos) {
            Some(t) => ConstraintParseError::at(message, t.offset, t.length),
            None => ConstraintParseError::at(message, self.end.saturating_sub(1), 1),
        }
    }

    fn expect_ident(&mut self, word: &str) -> Result<(), ConstraintParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == word => {
                self.next();
                Ok(())
            }
            _ => Err(self.err_here(format!("expected `{word}`"))),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ConstraintParseError> {
        if self.peek() == Some(&tok) {
            self.next();
            Ok(())
        } else {
            Err(self.err_here(format!("expected {what}")))
        }
    }

    fn constraint(&mut self) -> Result<ConstraintExpr, ConstraintParseError> {
        let op = match self.peek() {
            Some(Tok::Ident(s)) if s == "always" => TemporalOp::Always,
            Some(Tok::Ident(s)) if s == "at_end" => TemporalOp::AtEnd,
            _ => return Err(self.err_here("expected `always` or `at_end`")),
        };
        self.next();
        self.expect(Tok::LParen, "`(`")?;
        let body = self.bexpr()?;
        self.expect(Tok::RParen, "`)`")?;
        Ok(ConstraintExpr { op, body })
    }

    fn bexpr(&mut self) -> Result<BoolExpr, ConstraintParseError> {
        // `when a implies b` is sugar for `a implies b`.
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "when") {
            self.next();
            let guard = self.and_expr()?;
            self.expect_ident("implies")?;
            let then = self.bexpr()?;
            return Ok(BoolExpr::Implies(Box::new(guard), Box::new(then)));
        }
        let left = self.and_expr()?;
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "implies") {
            self.next();
            let right = self.bexpr()?;
            return Ok(BoolExpr::Implies(Box::new(left), Box::new(right)));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<BoolExpr, ConstraintParseError> {
        let mut left = self.batom()?;
        while matches!(self.peek(), Some(Tok::Ident(s)) if s == "and") {
            self.next();
            let right = self.batom()?;
            left = BoolExpr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn batom(&mut self) -> Result<BoolExpr, ConstraintParseError> {
        // Parenthesized boolean, distinguished from an arithmetic group by
        // what follows the closing paren.
        if self.peek() == Some(&Tok::LParen) {
            let mark = self.pos;
            self.next();
            if let Ok(inner) = self.bexpr() {
                if self.peek() == Some(&Tok::RParen)
                    && !matches!(self.toks.get(self.pos + 1).map(|s| &s.tok), Some(Tok::Cmp(_)))
                {
                    self.next();
                    return Ok(inner);
                }
            }
            self.pos = mark;
        }
        let a = self.aexpr()?;
        let op = match self.peek() {
            Some(Tok::Cmp(op)) => *op,
            _ => return Err(self.err_here("expected comparison operator")),
        };
        self.next();
        let b = self.aexpr()?;
        Ok(BoolExpr::Cmp(a, op, b))
    }

    fn aexpr(&mut self) -> Result<ArithExpr, ConstraintParseError> {
        let mut left = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.next();
                    let rhs = self.term()?;
                    left = ArithExpr::Add(Box::new(left), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.next();
                    let rhs = self.term()?;
                    left = ArithExpr::Sub(Box::new(left), Box::new(rhs));
                }
                _ => return Ok(left),
            }
        }
    }

    fn term(&mut self) -> Result<ArithExpr, ConstraintParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.next();
                Ok(ArithExpr::Num(n))
            }
            Some(Tok::Minus) => {
                self.next();
                match self.peek() {
                    Some(Tok::Num(n)) => {
                        let n = -n;
                        self.next();
                        Ok(ArithExpr::Num(n))
                    }
                    _ => Err(self.err_here("expected number after unary `-`")),
                }
            }
            Some(Tok::LParen) => {
                self.next();
                let inner = self.aexpr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) if name == "min" || name == "max" => {
                self.next();
                self.expect(Tok::LParen, "`(`")?;
                let a = self.aexpr()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.aexpr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(if name == "min" {
                    ArithExpr::Min(Box::new(a), Box::new(b))
                } else {
                    ArithExpr::Max(Box::new(a), Box::new(b))
                })
            }
            Some(Tok::Ident(name)) => {
                self.next();
                Ok(ArithExpr::Poi(name))
            }
            _ => Err(self.err_here("expected poi, number, `min` or `max`")),
        }
    }
}
