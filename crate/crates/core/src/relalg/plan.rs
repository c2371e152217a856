use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::value::Value;

/// Scalar expression: column references, literals, parameters and linear
/// arithmetic (multiplication needs a constant side).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Col(String),
    Lit(Value),
    Param(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    /// Operator with its operands swapped (`a < b` iff `b > a`).
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            o => o,
        }
    }

    pub fn holds(self, ord: core::cmp::Ordering) -> bool {
        use core::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cond {
    True,
    False,
    Cmp(Expr, CmpOp, Expr),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Not(Box<Cond>),
}

impl Cond {
    pub fn cmp(l: Expr, op: CmpOp, r: Expr) -> Cond {
        Cond::Cmp(l, op, r)
    }

    pub fn and(self, other: Cond) -> Cond {
        match (self, other) {
            (Cond::True, c) | (c, Cond::True) => c,
            (a, b) => Cond::And(Box::new(a), Box::new(b)),
        }
    }

    pub fn or(self, other: Cond) -> Cond {
        match (self, other) {
            (Cond::False, c) | (c, Cond::False) => c,
            (a, b) => Cond::Or(Box::new(a), Box::new(b)),
        }
    }

    /// Column references made by the condition.
    pub fn columns(&self, out: &mut BTreeSet<String>) {
        match self {
            Cond::True | Cond::False => {}
            Cond::Cmp(l, _, r) => {
                l.columns(out);
                r.columns(out);
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                a.columns(out);
                b.columns(out);
            }
            Cond::Not(a) => a.columns(out),
        }
    }

    pub fn map_exprs(&self, f: &mut impl FnMut(&Expr) -> Expr) -> Cond {
        match self {
            Cond::True => Cond::True,
            Cond::False => Cond::False,
            Cond::Cmp(l, op, r) => Cond::Cmp(f(l), *op, f(r)),
            Cond::And(a, b) => Cond::And(Box::new(a.map_exprs(f)), Box::new(b.map_exprs(f))),
            Cond::Or(a, b) => Cond::Or(Box::new(a.map_exprs(f)), Box::new(b.map_exprs(f))),
            Cond::Not(a) => Cond::Not(Box::new(a.map_exprs(f))),
        }
    }
}

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Col(name.to_string())
    }

    pub fn lit(v: impl Into<Value>) -> Expr {
        Expr::Lit(v.into())
    }

    pub fn columns(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Col(c) => {
                out.insert(c.clone());
            }
            Expr::Lit(_) | Expr::Param(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.columns(out);
                b.columns(out);
            }
            Expr::Neg(a) => a.columns(out),
        }
    }

    pub fn params(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Param(k) => {
                out.insert(*k);
            }
            Expr::Col(_) | Expr::Lit(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.params(out);
                b.params(out);
            }
            Expr::Neg(a) => a.params(out),
        }
    }

    /// Bottom-up rewrite.
    pub fn rewrite(&self, f: &mut impl FnMut(&Expr) -> Option<Expr>) -> Expr {
        if let Some(e) = f(self) {
            return e;
        }
        match self {
            Expr::Add(a, b) => Expr::Add(Box::new(a.rewrite(f)), Box::new(b.rewrite(f))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.rewrite(f)), Box::new(b.rewrite(f))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.rewrite(f)), Box::new(b.rewrite(f))),
            Expr::Neg(a) => Expr::Neg(Box::new(a.rewrite(f))),
            e => e.clone(),
        }
    }

    /// Whether the expression is free of columns and parameters.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Lit(_) => true,
            Expr::Col(_) | Expr::Param(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.is_constant() && b.is_constant(),
            Expr::Neg(a) => a.is_constant(),
        }
    }

    /// Value of a constant expression.
    pub fn constant_value(&self) -> Option<Value> {
        match self {
            Expr::Lit(v) => Some(v.clone()),
            Expr::Add(a, b) => Some(a.constant_value()?.add(&b.constant_value()?)),
            Expr::Sub(a, b) => Some(a.constant_value()?.sub(&b.constant_value()?)),
            Expr::Mul(a, b) => Some(a.constant_value()?.mul(&b.constant_value()?)),
            Expr::Neg(a) => Some(a.constant_value()?.neg()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }
}

/// `f(arg) as output`; `arg = None` is `count(*)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AggSpec {
    pub func: AggFunc,
    pub arg: Option<String>,
    pub output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProjItem {
    pub expr: Expr,
    pub alias: Option<String>,
}

/// Query plan over the bag algebra.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Plan {
    Scan(String),
    Select { cond: Cond, input: Box<Plan> },
    Project { items: Vec<ProjItem>, input: Box<Plan> },
    Dedup(Box<Plan>),
    Cross(Box<Plan>, Box<Plan>),
    Join { left: String, right: String, l: Box<Plan>, r: Box<Plan> },
    Union(Box<Plan>, Box<Plan>),
    Aggregate { group: Vec<String>, agg: AggSpec, input: Box<Plan> },
    TopK { keys: Vec<(String, Dir)>, count: u64, input: Box<Plan> },
}

pub type QueryPlan = Plan;

impl Plan {
    pub fn scan(rel: &str) -> Plan {
        Plan::Scan(rel.to_string())
    }

    pub fn select(cond: Cond, input: Plan) -> Plan {
        Plan::Select { cond, input: Box::new(input) }
    }

    pub fn children(&self) -> Vec<&Plan> {
        match self {
            Plan::Scan(_) => Vec::new(),
            Plan::Select { input, .. }
            | Plan::Project { input, .. }
            | Plan::Aggregate { input, .. }
            | Plan::TopK { input, .. } => alloc::vec![&**input],
            Plan::Dedup(p) => alloc::vec![&**p],
            Plan::Cross(a, b) | Plan::Union(a, b) => alloc::vec![&**a, &**b],
            Plan::Join { l, r, .. } => alloc::vec![&**l, &**r],
        }
    }

    /// Scanned relations in left-to-right order (with repetitions).
    pub fn scans(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_scans(&mut out);
        out
    }

    fn collect_scans(&self, out: &mut Vec<String>) {
        if let Plan::Scan(r) = self {
            out.push(r.clone());
        }
        for c in self.children() {
            c.collect_scans(out);
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Parameter indices referenced anywhere in the plan.
    pub fn params(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.walk_exprs(&mut |e| e.params(&mut out));
        out
    }

    pub fn contains_min_max(&self) -> bool {
        if let Plan::Aggregate { agg, .. } = self {
            if matches!(agg.func, AggFunc::Min | AggFunc::Max) {
                return true;
            }
        }
        self.children().iter().any(|c| c.contains_min_max())
    }

    fn walk_exprs(&self, f: &mut impl FnMut(&Expr)) {
        match self {
            Plan::Select { cond, .. } => walk_cond(cond, f),
            Plan::Project { items, .. } => items.iter().for_each(|i| f(&i.expr)),
            _ => {}
        }
        for c in self.children() {
            c.walk_exprs(f);
        }
    }

    /// Rewrites every expression of every selection and projection.
    pub fn map_exprs(&self, f: &mut impl FnMut(&Expr) -> Expr) -> Plan {
        match self {
            Plan::Scan(r) => Plan::Scan(r.clone()),
            Plan::Select { cond, input } => {
                Plan::Select { cond: cond.map_exprs(f), input: Box::new(input.map_exprs(f)) }
            }
            Plan::Project { items, input } => Plan::Project {
                items: items.iter().map(|i| ProjItem { expr: f(&i.expr), alias: i.alias.clone() }).collect(),
                input: Box::new(input.map_exprs(f)),
            },
            Plan::Dedup(p) => Plan::Dedup(Box::new(p.map_exprs(f))),
            Plan::Cross(a, b) => Plan::Cross(Box::new(a.map_exprs(f)), Box::new(b.map_exprs(f))),
            Plan::Union(a, b) => Plan::Union(Box::new(a.map_exprs(f)), Box::new(b.map_exprs(f))),
            Plan::Join { left, right, l, r } => Plan::Join {
                left: left.clone(),
                right: right.clone(),
                l: Box::new(l.map_exprs(f)),
                r: Box::new(r.map_exprs(f)),
            },
            Plan::Aggregate { group, agg, input } => {
                Plan::Aggregate { group: group.clone(), agg: agg.clone(), input: Box::new(input.map_exprs(f)) }
            }
            Plan::TopK { keys, count, input } => {
                Plan::TopK { keys: keys.clone(), count: *count, input: Box::new(input.map_exprs(f)) }
            }
        }
    }

    /// Rewrites the tree bottom-up; `f` sees each node after its children
    /// have been rewritten.
    pub fn transform(&self, f: &mut impl FnMut(Plan) -> Plan) -> Plan {
        let node = match self {
            Plan::Scan(r) => Plan::Scan(r.clone()),
            Plan::Select { cond, input } => Plan::Select { cond: cond.clone(), input: Box::new(input.transform(f)) },
            Plan::Project { items, input } => {
                Plan::Project { items: items.clone(), input: Box::new(input.transform(f)) }
            }
            Plan::Dedup(p) => Plan::Dedup(Box::new(p.transform(f))),
            Plan::Cross(a, b) => Plan::Cross(Box::new(a.transform(f)), Box::new(b.transform(f))),
            Plan::Union(a, b) => Plan::Union(Box::new(a.transform(f)), Box::new(b.transform(f))),
            Plan::Join { left, right, l, r } => Plan::Join {
                left: left.clone(),
                right: right.clone(),
                l: Box::new(l.transform(f)),
                r: Box::new(r.transform(f)),
            },
            Plan::Aggregate { group, agg, input } => {
                Plan::Aggregate { group: group.clone(), agg: agg.clone(), input: Box::new(input.transform(f)) }
            }
            Plan::TopK { keys, count, input } => {
                Plan::TopK { keys: keys.clone(), count: *count, input: Box::new(input.transform(f)) }
            }
        };
        f(node)
    }
}

fn walk_cond(c: &Cond, f: &mut impl FnMut(&Expr)) {
    match c {
        Cond::True | Cond::False => {}
        Cond::Cmp(l, _, r) => {
            f(l);
            f(r);
        }
        Cond::And(a, b) | Cond::Or(a, b) => {
            walk_cond(a, f);
            walk_cond(b, f);
        }
        Cond::Not(a) => walk_cond(a, f),
    }
}

// Display renders the textual syntax accepted by `parse_query`.

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Col(c) => f.write_str(c),
            Expr::Lit(v) => match v {
                Value::Rat(_) | Value::Int(_) if v < &Value::Int(0) => write!(f, "({})", v.literal()),
                _ => f.write_str(&v.literal()),
            },
            Expr::Param(k) => write!(f, "${k}"),
            Expr::Add(a, b) => write!(f, "{a} + {}", Paren(b, 1)),
            Expr::Sub(a, b) => write!(f, "{a} - {}", Paren(b, 1)),
            Expr::Mul(a, b) => write!(f, "{} * {}", Paren(a, 2), Paren(b, 2)),
            Expr::Neg(a) => write!(f, "-{}", Paren(a, 2)),
        }
    }
}

struct Paren<'a>(&'a Expr, u8);

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let needs = match self.0 {
            Expr::Add(..) | Expr::Sub(..) => self.1 >= 1,
            Expr::Mul(..) => self.1 >= 2,
            Expr::Lit(Value::Rat(_)) => true,
            _ => false,
        };
        if needs {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cond::True => f.write_str("TRUE"),
            Cond::False => f.write_str("FALSE"),
            Cond::Cmp(l, op, r) => write!(f, "{l} {} {r}", op.symbol()),
            Cond::And(a, b) => write!(f, "({a} AND {b})"),
            Cond::Or(a, b) => write!(f, "({a} OR {b})"),
            Cond::Not(a) => write!(f, "NOT {a}"),
        }
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Plan::Scan(r) => write!(f, "scan({r})"),
            Plan::Select { cond, input } => write!(f, "select({cond}, {input})"),
            Plan::Project { items, input } => {
                f.write_str("project([")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}", it.expr)?;
                    if let Some(a) = &it.alias {
                        write!(f, " as {a}")?;
                    }
                }
                write!(f, "], {input})")
            }
            Plan::Dedup(p) => write!(f, "dedup({p})"),
            Plan::Cross(a, b) => write!(f, "cross({a}, {b})"),
            Plan::Join { left, right, l, r } => write!(f, "join({left} = {right}, {l}, {r})"),
            Plan::Union(a, b) => write!(f, "union({a}, {b})"),
            Plan::Aggregate { group, agg, input } => {
                write!(f, "agg([{}], {}({}) as {}, {input})", group.join(", "), agg.func.name(),
                    agg.arg.as_deref().unwrap_or("*"), agg.output)
            }
            Plan::TopK { keys, count, input } => {
                let ks: Vec<String> = keys
                    .iter()
                    .map(|(k, d)| alloc::format!("{k} {}", if *d == Dir::Asc { "asc" } else { "desc" }))
                    .collect();
                if ks.len() == 1 {
                    write!(f, "topk({}, {count}, {input})", ks[0])
                } else {
                    write!(f, "topk([{}], {count}, {input})", ks.join(", "))
                }
            }
        }
    }
}
