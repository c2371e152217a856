use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::relalg::{CmpOp, Cond, Expr};
use crate::value::{Kind, Value};

/// Variable name to kind. Parameters are named `$k`; primed copies of
/// attribute variables end in `'`.
pub type Universe = BTreeMap<String, Kind>;

/// Variable name to value.
pub type Assignment = BTreeMap<String, Value>;

/// Primed copy of a variable. Parameters are shared and never primed.
pub fn prime(v: &str) -> String {
    if v.starts_with('$') {
        v.to_string()
    } else {
        format!("{v}'")
    }
}

pub fn param_var(k: usize) -> String {
    format!("${k}")
}

/// `sum(c_i * x_i) + c0`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LinExpr {
    pub coeffs: BTreeMap<String, BigRational>,
    pub constant: BigRational,
}

pub(crate) fn rat(i: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(i))
}

impl LinExpr {
    pub fn var(v: &str) -> LinExpr {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(v.to_string(), rat(1));
        LinExpr { coeffs, constant: BigRational::zero() }
    }

    pub fn constant(c: BigRational) -> LinExpr {
        LinExpr { coeffs: BTreeMap::new(), constant: c }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        for (v, c) in &other.coeffs {
            let e = out.coeffs.entry(v.clone()).or_insert_with(BigRational::zero);
            *e += c;
            if e.is_zero() {
                out.coeffs.remove(v);
            }
        }
        out.constant += &other.constant;
        out
    }

    pub fn scale(&self, k: &BigRational) -> LinExpr {
        if k.is_zero() {
            return LinExpr::default();
        }
        LinExpr {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        self.add(&other.scale(&rat(-1)))
    }

    pub fn rename(&self, f: &impl Fn(&str) -> String) -> LinExpr {
        let mut out = LinExpr::constant(self.constant.clone());
        for (v, c) in &self.coeffs {
            out = out.add(&LinExpr::var(&f(v)).scale(c));
        }
        out
    }

    /// Replaces `x` by `e`.
    pub fn substitute(&self, x: &str, e: &LinExpr) -> LinExpr {
        match self.coeffs.get(x) {
            None => self.clone(),
            Some(c) => {
                let mut rest = self.clone();
                let c = c.clone();
                rest.coeffs.remove(x);
                rest.add(&e.scale(&c))
            }
        }
    }

    pub fn eval(&self, a: &Assignment) -> Option<BigRational> {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            acc += c * a.get(v)?.to_rational()?;
        }
        Some(acc)
    }
}

fn rat_text(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .coeffs
            .iter()
            .map(|(v, c)| if c.is_one() { v.clone() } else { format!("(* {} {v})", rat_text(c)) })
            .collect();
        if !self.constant.is_zero() || parts.is_empty() {
            parts.push(rat_text(&self.constant));
        }
        if parts.len() == 1 {
            f.write_str(&parts[0])
        } else {
            write!(f, "(+ {})", parts.join(" "))
        }
    }
}

/// Operand of a string comparison.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    fn eval<'a>(&'a self, a: &'a Assignment) -> Option<&'a str> {
        match self {
            Term::Var(v) => a.get(v)?.as_str(),
            Term::Const(s) => Some(s),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(s) => f.write_str(&Value::Str(s.clone()).literal()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    /// `expr op 0`
    Num { expr: LinExpr, op: CmpOp },
    Str { lhs: Term, op: CmpOp, rhs: Term },
}

impl Atom {
    pub fn negate(&self) -> Atom {
        match self {
            Atom::Num { expr, op } => Atom::Num { expr: expr.clone(), op: op.negate() },
            Atom::Str { lhs, op, rhs } => Atom::Str { lhs: lhs.clone(), op: op.negate(), rhs: rhs.clone() },
        }
    }

    pub fn vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Atom::Num { expr, .. } => out.extend(expr.coeffs.keys().cloned()),
            Atom::Str { lhs, rhs, .. } => {
                for t in [lhs, rhs] {
                    if let Term::Var(v) = t {
                        out.insert(v.clone());
                    }
                }
            }
        }
    }

    pub fn rename(&self, f: &impl Fn(&str) -> String) -> Atom {
        let t = |t: &Term| match t {
            Term::Var(v) => Term::Var(f(v)),
            c => c.clone(),
        };
        match self {
            Atom::Num { expr, op } => Atom::Num { expr: expr.rename(f), op: *op },
            Atom::Str { lhs, op, rhs } => Atom::Str { lhs: t(lhs), op: *op, rhs: t(rhs) },
        }
    }

    pub fn eval(&self, a: &Assignment) -> Option<bool> {
        match self {
            Atom::Num { expr, op } => Some(op.holds(expr.eval(a)?.cmp(&BigRational::zero()))),
            Atom::Str { lhs, op, rhs } => Some(op.holds(lhs.eval(a)?.cmp(rhs.eval(a)?))),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Num { expr, op } => write!(f, "({} {expr} 0)", op.symbol()),
            Atom::Str { lhs, op, rhs } => write!(f, "({} {lhs} {rhs})", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
}

impl Formula {
    pub fn and_all(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut v = Vec::new();
        for p in parts {
            match p {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(xs) => v.extend(xs),
                x => v.push(x),
            }
        }
        match v.len() {
            0 => Formula::True,
            1 => v.pop().unwrap(),
            _ => Formula::And(v),
        }
    }

    pub fn or_all(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut v = Vec::new();
        for p in parts {
            match p {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(xs) => v.extend(xs),
                x => v.push(x),
            }
        }
        match v.len() {
            0 => Formula::False,
            1 => v.pop().unwrap(),
            _ => Formula::Or(v),
        }
    }

    pub fn and(self, other: Formula) -> Formula {
        Formula::and_all([self, other])
    }

    pub fn or(self, other: Formula) -> Formula {
        Formula::or_all([self, other])
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(f) => *f,
            f => Formula::Not(Box::new(f)),
        }
    }

    pub fn implies(self, other: Formula) -> Formula {
        self.not().or(other)
    }

    /// `a op b` for two variables of the given kind.
    pub fn cmp_vars(a: &str, op: CmpOp, b: &str, kind: Kind) -> Formula {
        if kind == Kind::Str {
            Formula::Atom(Atom::Str { lhs: Term::Var(a.to_string()), op, rhs: Term::Var(b.to_string()) })
        } else {
            Formula::Atom(Atom::Num { expr: LinExpr::var(a).sub(&LinExpr::var(b)), op })
        }
    }

    /// `a op c` for a variable and a constant.
    pub fn cmp_const(a: &str, op: CmpOp, c: &Value) -> Formula {
        match c {
            Value::Str(s) => Formula::Atom(Atom::Str { lhs: Term::Var(a.to_string()), op, rhs: Term::Const(s.clone()) }),
            Value::Null => Formula::False,
            v => Formula::Atom(Atom::Num {
                expr: LinExpr::var(a).sub(&LinExpr::constant(v.to_rational().unwrap())),
                op,
            }),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => a.vars(out),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.collect_vars(out)),
            Formula::Not(x) => x.collect_vars(out),
        }
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => out.push(a),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.collect_atoms(out)),
            Formula::Not(x) => x.collect_atoms(out),
        }
    }

    pub fn rename(&self, f: &impl Fn(&str) -> String) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(a) => Formula::Atom(a.rename(f)),
            Formula::And(xs) => Formula::And(xs.iter().map(|x| x.rename(f)).collect()),
            Formula::Or(xs) => Formula::Or(xs.iter().map(|x| x.rename(f)).collect()),
            Formula::Not(x) => Formula::Not(Box::new(x.rename(f))),
        }
    }

    /// Primes every attribute variable.
    pub fn primed(&self) -> Formula {
        self.rename(&|v| prime(v))
    }

    /// Truth value; `None` if some variable is unassigned or ill-typed.
    pub fn eval(&self, a: &Assignment) -> Option<bool> {
        match self {
            Formula::True => Some(true),
            Formula::False => Some(false),
            Formula::Atom(x) => x.eval(a),
            Formula::And(xs) => {
                let mut r = true;
                for x in xs {
                    r &= x.eval(a)?;
                }
                Some(r)
            }
            Formula::Or(xs) => {
                let mut r = false;
                for x in xs {
                    r |= x.eval(a)?;
                }
                Some(r)
            }
            Formula::Not(x) => Some(!x.eval(a)?),
        }
    }

    /// Checks that every variable is declared and used at its kind.
    pub fn typecheck(&self, u: &Universe) -> Result<()> {
        for a in self.atoms() {
            let kind = |v: &str| u.get(v).copied().ok_or_else(|| Error::Type(format!("undeclared variable {v}")));
            match a {
                Atom::Num { expr, .. } => {
                    for v in expr.coeffs.keys() {
                        if !kind(v)?.is_numeric() {
                            return Err(Error::Type(format!("string variable {v} in arithmetic atom {a}")));
                        }
                    }
                }
                Atom::Str { lhs, rhs, .. } => {
                    for t in [lhs, rhs] {
                        if let Term::Var(v) = t {
                            if kind(v)? != Kind::Str {
                                return Err(Error::Type(format!("numeric variable {v} in string atom {a}")));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Translates a selection condition. `var_of` names the variable of a
    /// column reference; parameters become `$k`. Kinds come from `u`.
    pub fn from_cond(c: &Cond, var_of: &dyn Fn(&str) -> Result<String>, u: &Universe) -> Result<Formula> {
        Ok(match c {
            Cond::True => Formula::True,
            Cond::False => Formula::False,
            Cond::And(a, b) => Formula::from_cond(a, var_of, u)?.and(Formula::from_cond(b, var_of, u)?),
            Cond::Or(a, b) => Formula::from_cond(a, var_of, u)?.or(Formula::from_cond(b, var_of, u)?),
            Cond::Not(a) => Formula::from_cond(a, var_of, u)?.not(),
            Cond::Cmp(l, op, r) => {
                let lt = Operand::of(l, var_of, u)?;
                let rt = Operand::of(r, var_of, u)?;
                match (lt, rt) {
                    (Operand::Null, _) | (_, Operand::Null) => Formula::False,
                    (Operand::Str(a), Operand::Str(b)) => Formula::Atom(Atom::Str { lhs: a, op: *op, rhs: b }),
                    (Operand::Num(a), Operand::Num(b)) => Formula::Atom(Atom::Num { expr: a.sub(&b), op: *op }),
                    _ => return Err(Error::Type(format!("`{c}` compares a string with a number"))),
                }
            }
        })
    }

    /// Translates a (linear) scalar expression.
    pub fn linear(e: &Expr, var_of: &dyn Fn(&str) -> Result<String>, u: &Universe) -> Result<LinExpr> {
        match Operand::of(e, var_of, u)? {
            Operand::Num(l) => Ok(l),
            _ => Err(Error::Type(format!("`{e}` is not numeric"))),
        }
    }

    /// Either operand of a string comparison, if `e` is string-valued.
    pub fn term(e: &Expr, var_of: &dyn Fn(&str) -> Result<String>, u: &Universe) -> Result<Option<Term>> {
        match Operand::of(e, var_of, u)? {
            Operand::Str(t) => Ok(Some(t)),
            _ => Ok(None),
        }
    }
}

enum Operand {
    Num(LinExpr),
    Str(Term),
    Null,
}

impl Operand {
    fn of(e: &Expr, var_of: &dyn Fn(&str) -> Result<String>, u: &Universe) -> Result<Operand> {
        let var = |v: String| -> Result<Operand> {
            match u.get(&v) {
                Some(Kind::Str) => Ok(Operand::Str(Term::Var(v))),
                Some(_) => Ok(Operand::Num(LinExpr::var(&v))),
                None => Err(Error::Type(format!("undeclared variable {v}"))),
            }
        };
        let num = |e: &Expr| -> Result<LinExpr> {
            match Operand::of(e, var_of, u)? {
                Operand::Num(l) => Ok(l),
                _ => Err(Error::Type(format!("`{e}` is not numeric"))),
            }
        };
        Ok(match e {
            Expr::Col(c) => var(var_of(c)?)?,
            Expr::Param(k) => var(param_var(*k))?,
            Expr::Lit(Value::Null) => Operand::Null,
            Expr::Lit(Value::Str(s)) => Operand::Str(Term::Const(s.clone())),
            Expr::Lit(v) => Operand::Num(LinExpr::constant(v.to_rational().unwrap())),
            Expr::Neg(a) => Operand::Num(num(a)?.scale(&rat(-1))),
            Expr::Add(a, b) => Operand::Num(num(a)?.add(&num(b)?)),
            Expr::Sub(a, b) => Operand::Num(num(a)?.sub(&num(b)?)),
            Expr::Mul(a, b) => {
                let (x, y) = (num(a)?, num(b)?);
                if x.is_constant() {
                    Operand::Num(y.scale(&x.constant))
                } else if y.is_constant() {
                    Operand::Num(x.scale(&y.constant))
                } else {
                    return Err(Error::Type(format!("`{e}` is not linear")));
                }
            }
        })
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::And(xs) | Formula::Or(xs) => {
                f.write_str(if matches!(self, Formula::And(_)) { "(and" } else { "(or" })?;
                for x in xs {
                    write!(f, " {x}")?;
                }
                f.write_str(")")
            }
            Formula::Not(x) => write!(f, "(not {x})"),
        }
    }
}
