//! Goal constraint expressions.
//!
//! A constraint wraps a boolean expression in one temporal operator:
//! `always(e)` must hold at every trace sample, `at_end(e)` at the final
//! sample. Boolean expressions combine comparisons with `and` and `implies`
//! (also spellable `when a implies b`); arithmetic covers `+`, `-`, `min`,
//! `max`, PoI names and numeric literals.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalOp {
    Always,
    AtEnd,
}

impl TemporalOp {
    pub fn keyword(self) -> &'static str {
        match self {
            TemporalOp::Always => "always",
            TemporalOp::AtEnd => "at_end",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> bool {
        // Equality with a small tolerance; signals are finite reals.
        const EPS: f64 = 1e-9;
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => (a - b).abs() <= EPS,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArithExpr {
    Poi(String),
    Num(f64),
    Add(Box<ArithExpr>, Box<ArithExpr>),
    Sub(Box<ArithExpr>, Box<ArithExpr>),
    Min(Box<ArithExpr>, Box<ArithExpr>),
    Max(Box<ArithExpr>, Box<ArithExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    Cmp(ArithExpr, CmpOp, ArithExpr),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Implies(Box<BoolExpr>, Box<BoolExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintExpr {
    pub op: TemporalOp,
    pub body: BoolExpr,
}

impl ConstraintExpr {
    /// Names of every PoI the expression reads.
    pub fn referenced_pois(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_bool(&self.body, &mut out);
        out.sort();
        out.dedup();
        out
    }

    /// Evaluate the body at one sample, with PoI values supplied by `lookup`.
    pub fn holds_at(&self, lookup: &dyn Fn(&str) -> f64) -> bool {
        eval_bool(&self.body, lookup)
    }
}

fn collect_bool(e: &BoolExpr, out: &mut Vec<String>) {
    match e {
        BoolExpr::Cmp(a, _, b) => {
            collect_arith(a, out);
            collect_arith(b, out);
        }
        BoolExpr::And(a, b) | BoolExpr::Implies(a, b) => {
            collect_bool(a, out);
            collect_bool(b, out);
        }
    }
}

fn collect_arith(e: &ArithExpr, out: &mut Vec<String>) {
    match e {
        ArithExpr::Poi(name) => out.push(name.clone()),
        ArithExpr::Num(_) => {}
        ArithExpr::Add(a, b) | ArithExpr::Sub(a, b) | ArithExpr::Min(a, b) | ArithExpr::Max(a, b) => {
            collect_arith(a, out);
            collect_arith(b, out);
        }
    }
}

fn eval_bool(e: &BoolExpr, lookup: &dyn Fn(&str) -> f64) -> bool {
    match e {
        BoolExpr::Cmp(a, op, b) => op.apply(eval_arith(a, lookup), eval_arith(b, lookup)),
        BoolExpr::And(a, b) => eval_bool(a, lookup) && eval_bool(b, lookup),
        BoolExpr::Implies(a, b) => !eval_bool(a, lookup) || eval_bool(b, lookup),
    }
}

fn eval_arith(e: &ArithExpr, lookup: &dyn Fn(&str) -> f64) -> f64 {
    match e {
        ArithExpr::Poi(name) => lookup(name),
        ArithExpr::Num(n) => *n,
        ArithExpr::Add(a, b) => eval_arith(a, lookup) + eval_arith(b, lookup),
        ArithExpr::Sub(a, b) => eval_arith(a, lookup) - eval_arith(b, lookup),
        ArithExpr::Min(a, b) => eval_arith(a, lookup).min(eval_arith(b, lookup)),
        ArithExpr::Max(a, b) => eval_arith(a, lookup).max(eval_arith(b, lookup)),
    }
}

// Canonical text form. `implies` binds loosest, then `and`; arithmetic `+`/`-`
// associate left and parenthesize nested sums explicitly when needed.

impl fmt::Display for ConstraintExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.op.keyword(), self.body)
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoolExpr::Cmp(a, op, b) => write!(f, "{a} {} {b}", op.symbol()),
            BoolExpr::And(a, b) => {
                // `and` chains associate left; an `implies` operand needs parens.
                write_bool_operand(f, a, matches!(**a, BoolExpr::Implies(..)))?;
                write!(f, " and ")?;
                write_bool_operand(f, b, !matches!(**b, BoolExpr::Cmp(..)))
            }
            BoolExpr::Implies(a, b) => {
                // `implies` associates right; a left `implies` operand needs parens.
                write_bool_operand(f, a, matches!(**a, BoolExpr::Implies(..)))?;
                write!(f, " implies ")?;
                write_bool_operand(f, b, false)
            }
        }
    }
}

fn write_bool_operand(f: &mut fmt::Formatter<'_>, e: &BoolExpr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for ArithExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArithExpr::Poi(name) => write!(f, "{name}"),
            ArithExpr::Num(n) => write!(f, "{n}"),
            ArithExpr::Add(a, b) => write!(f, "{a} + {}", Operand(b)),
            ArithExpr::Sub(a, b) => write!(f, "{a} - {}", Operand(b)),
            ArithExpr::Min(a, b) => write!(f, "min({a}, {b})"),
            ArithExpr::Max(a, b) => write!(f, "max({a}, {b})"),
        }
    }
}

/// Right operand of `+`/`-`: parenthesized when itself a sum, so the printed
/// form reparses to the same tree.
struct Operand<'a>(&'a ArithExpr);

impl fmt::Display for Operand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            ArithExpr::Add(..) | ArithExpr::Sub(..) => write!(f, "({})", self.0),
            other => write!(f, "{other}"),
        }
    }
}
