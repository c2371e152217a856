//! Recursive-descent parser for the textual algebra.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::plan::{AggFunc, AggSpec, CmpOp, Cond, Dir, Expr, Plan, ProjItem};
use crate::error::{Error, Result};
use crate::value::{parse_number, Value};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Str(String),
    Param(usize),
    Sym(&'static str),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

const SYMS: [&str; 16] = ["<>", "!=", "<=", ">=", "(", ")", "[", "]", ",", "=", "<", ">", "+", "-", "*", "/"];

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let b = src.as_bytes();
        let mut i = 0;
        while i < b.len() {
            let c = b[i];
            if c.is_ascii_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            if c.is_ascii_alphabetic() || c == b'_' {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'.') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(src[start..i].to_string()), start));
            } else if c.is_ascii_digit() {
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                    i += 1;
                }
                lx.toks.push((Tok::Num(src[start..i].to_string()), start));
            } else if c == b'$' {
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                let k: usize = src[start + 1..i]
                    .parse()
                    .ok()
                    .filter(|k| *k >= 1)
                    .ok_or_else(|| perr(start, "expected parameter number after `$`"))?;
                lx.toks.push((Tok::Param(k), start));
            } else if c == b'\'' {
                i += 1;
                let mut s = String::new();
                loop {
                    if i >= b.len() {
                        return Err(perr(start, "unterminated string literal"));
                    }
                    if b[i] == b'\'' {
                        if i + 1 < b.len() && b[i + 1] == b'\'' {
                            s.push('\'');
                            i += 2;
                            continue;
                        }
                        i += 1;
                        break;
                    }
                    let ch = src[i..].chars().next().unwrap();
                    s.push(ch);
                    i += ch.len_utf8();
                }
                lx.toks.push((Tok::Str(s), start));
            } else {
                let sym = SYMS.iter().find(|s| lx.src[i..].starts_with(**s));
                match sym {
                    Some(s) => {
                        i += s.len();
                        let s: &'static str = if *s == "!=" { "<>" } else { s };
                        lx.toks.push((Tok::Sym(s), start));
                    }
                    None => {
                        let ch = src[i..].chars().next().unwrap();
                        return Err(perr(start, &format!("unexpected character `{ch}`")));
                    }
                }
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }
}

fn perr(offset: usize, message: &str) -> Error {
    Error::Parse { offset, message: message.to_string() }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

/// Parses the textual algebra, for example
/// `topk(avgden desc, 1, agg([state], avg(popden) as avgden, scan(cities)))`.
///
/// Only syntax is checked here; names and kinds are checked by
/// [`super::analyze`].
pub fn parse_query(text: &str) -> Result<Plan> {
    let toks = Lexer::run(text)?;
    let mut p = Parser { toks, pos: 0 };
    let plan = p.plan()?;
    p.expect_end()?;
    Ok(plan)
}

/// Parses a standalone condition (used by tests and tools).
pub fn parse_cond(text: &str) -> Result<Cond> {
    let toks = Lexer::run(text)?;
    let mut p = Parser { toks, pos: 0 };
    let c = p.cond()?;
    p.expect_end()?;
    Ok(c)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(s) => format!("number `{s}`"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Param(k) => format!("`${k}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::End => "end of input".to_string(),
        }
    }

    fn fail<T>(&self, what: &str) -> Result<T> {
        Err(perr(self.offset(), &format!("expected {what}, found {}", Self::describe(self.peek()))))
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(x) if *x == s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.fail(&format!("`{s}`"))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x.eq_ignore_ascii_case(kw))
    }

    fn kw(&mut self, kw: &str) -> Result<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.fail(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.fail(what),
        }
    }

    fn expect_end(&self) -> Result<()> {
        if *self.peek() == Tok::End {
            Ok(())
        } else {
            self.fail("end of input")
        }
    }

    fn plan(&mut self) -> Result<Plan> {
        let op = match self.peek() {
            Tok::Ident(s) => s.to_ascii_lowercase(),
            _ => return self.fail("an operator"),
        };
        let known = ["scan", "select", "project", "dedup", "cross", "join", "union", "agg", "topk"];
        if !known.contains(&op.as_str()) {
            return self.fail("an operator");
        }
        self.bump();
        self.sym("(")?;
        let plan = match op.as_str() {
            "scan" => Plan::Scan(self.ident("a relation name")?),
            "select" => {
                let cond = self.cond()?;
                self.sym(",")?;
                Plan::Select { cond, input: Box::new(self.plan()?) }
            }
            "project" => {
                self.sym("[")?;
                let mut items = Vec::new();
                loop {
                    let expr = self.expr()?;
                    let alias = if self.is_kw("as") {
                        self.bump();
                        Some(self.ident("an output name")?)
                    } else {
                        None
                    };
                    items.push(ProjItem { expr, alias });
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.sym("]")?;
                self.sym(",")?;
                Plan::Project { items, input: Box::new(self.plan()?) }
            }
            "dedup" => Plan::Dedup(Box::new(self.plan()?)),
            "cross" | "union" => {
                let a = self.plan()?;
                self.sym(",")?;
                let b = self.plan()?;
                if op == "cross" {
                    Plan::Cross(Box::new(a), Box::new(b))
                } else {
                    Plan::Union(Box::new(a), Box::new(b))
                }
            }
            "join" => {
                let left = self.ident("a join attribute")?;
                self.sym("=")?;
                let right = self.ident("a join attribute")?;
                self.sym(",")?;
                let l = self.plan()?;
                self.sym(",")?;
                let r = self.plan()?;
                Plan::Join { left, right, l: Box::new(l), r: Box::new(r) }
            }
            "agg" => {
                self.sym("[")?;
                let mut group = Vec::new();
                if !self.eat_sym("]") {
                    loop {
                        group.push(self.ident("a group-by attribute")?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.sym("]")?;
                }
                self.sym(",")?;
                let fname = self.ident("an aggregate function")?.to_ascii_lowercase();
                let func = match fname.as_str() {
                    "count" => AggFunc::Count,
                    "sum" => AggFunc::Sum,
                    "avg" => AggFunc::Avg,
                    "min" => AggFunc::Min,
                    "max" => AggFunc::Max,
                    _ => {
                        self.pos -= 1;
                        return self.fail("one of count, sum, avg, min, max");
                    }
                };
                self.sym("(")?;
                let arg = if self.eat_sym("*") {
                    if func != AggFunc::Count {
                        self.pos -= 1;
                        return self.fail("an attribute (only count accepts `*`)");
                    }
                    None
                } else {
                    Some(self.ident("an attribute")?)
                };
                self.sym(")")?;
                self.kw("as")?;
                let output = self.ident("an output name")?;
                self.sym(",")?;
                Plan::Aggregate { group, agg: AggSpec { func, arg, output }, input: Box::new(self.plan()?) }
            }
            "topk" => {
                let mut keys = Vec::new();
                if self.eat_sym("[") {
                    loop {
                        keys.push(self.order_key()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.sym("]")?;
                } else {
                    keys.push(self.order_key()?);
                }
                self.sym(",")?;
                let count = match self.peek() {
                    Tok::Num(n) => match n.parse::<u64>() {
                        Ok(c) => c,
                        Err(_) => return self.fail("a non-negative integer"),
                    },
                    _ => return self.fail("a non-negative integer"),
                };
                self.bump();
                self.sym(",")?;
                Plan::TopK { keys, count, input: Box::new(self.plan()?) }
            }
            _ => unreachable!(),
        };
        self.sym(")")?;
        Ok(plan)
    }

    fn order_key(&mut self) -> Result<(String, Dir)> {
        let k = self.ident("an order key")?;
        let dir = if self.is_kw("asc") {
            self.bump();
            Dir::Asc
        } else if self.is_kw("desc") {
            self.bump();
            Dir::Desc
        } else {
            Dir::Asc
        };
        Ok((k, dir))
    }

    fn cond(&mut self) -> Result<Cond> {
        let mut c = self.conj()?;
        while self.is_kw("or") {
            self.bump();
            let r = self.conj()?;
            c = Cond::Or(Box::new(c), Box::new(r));
        }
        Ok(c)
    }

    fn conj(&mut self) -> Result<Cond> {
        let mut c = self.neg()?;
        while self.is_kw("and") {
            self.bump();
            let r = self.neg()?;
            c = Cond::And(Box::new(c), Box::new(r));
        }
        Ok(c)
    }

    fn neg(&mut self) -> Result<Cond> {
        if self.is_kw("not") {
            self.bump();
            return Ok(Cond::Not(Box::new(self.neg()?)));
        }
        if self.is_kw("true") {
            self.bump();
            return Ok(Cond::True);
        }
        if self.is_kw("false") {
            self.bump();
            return Ok(Cond::False);
        }
        if matches!(self.peek(), Tok::Sym("(")) {
            // Either a parenthesized condition or an arithmetic operand.
            let save = self.pos;
            self.bump();
            if let Ok(c) = self.cond() {
                if self.eat_sym(")") && !self.at_expr_continuation() {
                    return Ok(c);
                }
            }
            self.pos = save;
        }
        self.comparison()
    }

    fn at_expr_continuation(&self) -> bool {
        matches!(self.peek(), Tok::Sym(s) if ["=", "<>", "<", "<=", ">", ">=", "+", "-", "*", "/"].contains(s))
    }

    fn comparison(&mut self) -> Result<Cond> {
        let l = self.expr()?;
        let op = match self.peek() {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("<>") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => return self.fail("a comparison operator"),
        };
        self.bump();
        let r = self.expr()?;
        Ok(Cond::Cmp(l, op, r))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut e = self.term()?;
        loop {
            if self.eat_sym("+") {
                let r = self.term()?;
                e = fold(Expr::Add(Box::new(e), Box::new(r)));
            } else if self.eat_sym("-") {
                let r = self.term()?;
                e = fold(Expr::Sub(Box::new(e), Box::new(r)));
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut e = self.factor()?;
        loop {
            if self.eat_sym("*") {
                let at = self.offset();
                let r = self.factor()?;
                if !e.is_constant() && !r.is_constant() {
                    return Err(perr(at, "multiplication needs a constant operand"));
                }
                e = fold(Expr::Mul(Box::new(e), Box::new(r)));
            } else if self.eat_sym("/") {
                let at = self.offset();
                let r = self.factor()?;
                let d = r.constant_value().filter(|v| v.is_numeric() && *v != Value::Int(0));
                let Some(d) = d else {
                    return Err(perr(at, "division needs a nonzero numeric constant"));
                };
                let inv = Value::Int(1).div(&d).unwrap();
                e = fold(Expr::Mul(Box::new(e), Box::new(Expr::Lit(inv))));
            } else {
                return Ok(e);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                parse_number(&n).map(Expr::Lit).ok_or_else(|| perr(at, "malformed number"))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Lit(Value::Str(s)))
            }
            Tok::Param(k) => {
                self.bump();
                Ok(Expr::Param(k))
            }
            Tok::Ident(s) => {
                let lower = s.to_ascii_lowercase();
                if ["and", "or", "not", "as", "asc", "desc"].contains(&lower.as_str()) {
                    return self.fail("an operand");
                }
                if lower == "null" {
                    self.bump();
                    return Ok(Expr::Lit(Value::Null));
                }
                self.bump();
                Ok(Expr::Col(s))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            Tok::Sym("-") => {
                self.bump();
                let e = self.factor()?;
                Ok(fold(Expr::Neg(Box::new(e))))
            }
            _ => self.fail("an operand"),
        }
    }
}

/// Folds constant subexpressions into literals.
fn fold(e: Expr) -> Expr {
    if e.is_constant() {
        if let Some(v) = e.constant_value() {
            return Expr::Lit(v);
        }
    }
    e
}
