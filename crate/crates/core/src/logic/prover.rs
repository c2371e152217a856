//! Validity of `premise -> conclusion` by refuting every DNF conjunct of
//! `premise AND NOT conclusion`.
//!
//! Per conjunct: string atoms are embedded into the rationals (constants at
//! even positions, so every finite string model maps to a rational one);
//! equalities are eliminated by substitution; the remaining inequalities
//! become bounds and differences on a constraint graph, with integer bounds
//! tightened and other linear forms relaxed to fresh variables. A negative
//! cycle refutes the conjunct. Otherwise a witness is read off the shortest
//! paths and checked by substitution into the original formulas.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::formula::{rat, Assignment, Atom, Formula, LinExpr, Term, Universe};
use crate::error::Result;
use crate::relalg::CmpOp;
use crate::value::{Kind, Value};

/// Conjunct count above which the prover gives up.
pub const DNF_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Valid,
    /// A verified assignment making the premise true and the conclusion false.
    NotValid(Assignment),
    Unknown,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Valid => "valid",
            Verdict::NotValid(_) => "not-valid",
            Verdict::Unknown => "unknown",
        }
    }
}

/// Decides whether `premise -> conclusion` holds for all assignments of the
/// variables at their declared kinds. `Valid` and `NotValid` are always
/// correct; `Unknown` means the procedure could not decide.
pub fn is_valid(premise: &Formula, conclusion: &Formula, u: &Universe) -> Result<Verdict> {
    premise.typecheck(u)?;
    conclusion.typecheck(u)?;
    let goal = premise.clone().and(conclusion.clone().not());
    let Some(conjuncts) = dnf(&goal, true) else {
        return Ok(Verdict::Unknown);
    };
    let mut consts: Vec<String> = Vec::new();
    for a in goal.atoms() {
        if let Atom::Str { lhs, rhs, .. } = a {
            for t in [lhs, rhs] {
                if let Term::Const(s) = t {
                    consts.push(s.clone());
                }
            }
        }
    }
    consts.sort();
    consts.dedup();
    let goal_vars = goal.vars();
    let mut refuted = true;
    for conj in &conjuncts {
        match solve(conj, u, &consts) {
            Outcome::Unsat => {}
            Outcome::Unknown => refuted = false,
            Outcome::Candidates(cands) => {
                refuted = false;
                for mut a in cands {
                    for v in &goal_vars {
                        if !a.contains_key(v) {
                            a.insert(v.clone(), default_value(u[v]));
                        }
                    }
                    if goal.eval(&a) == Some(true) {
                        return Ok(Verdict::NotValid(a));
                    }
                }
            }
        }
    }
    Ok(if refuted { Verdict::Valid } else { Verdict::Unknown })
}

fn default_value(k: Kind) -> Value {
    match k {
        Kind::Str => Value::str(""),
        _ => Value::Int(0),
    }
}

/// Disjunctive normal form of `f` (negated when `positive` is false), with
/// `<>` split into `<` or `>`. `None` beyond [`DNF_LIMIT`] conjuncts.
fn dnf(f: &Formula, positive: bool) -> Option<Vec<Vec<Atom>>> {
    match (f, positive) {
        (Formula::True, true) | (Formula::False, false) => Some(vec![vec![]]),
        (Formula::False, true) | (Formula::True, false) => Some(vec![]),
        (Formula::Not(x), p) => dnf(x, !p),
        (Formula::Atom(a), p) => {
            let a = if p { a.clone() } else { a.negate() };
            let with = |op| match &a {
                Atom::Num { expr, .. } => Atom::Num { expr: expr.clone(), op },
                Atom::Str { lhs, rhs, .. } => Atom::Str { lhs: lhs.clone(), op, rhs: rhs.clone() },
            };
            let op = match &a {
                Atom::Num { op, .. } | Atom::Str { op, .. } => *op,
            };
            if op == CmpOp::Ne {
                Some(vec![vec![with(CmpOp::Lt)], vec![with(CmpOp::Gt)]])
            } else {
                Some(vec![vec![a]])
            }
        }
        (Formula::And(xs), true) | (Formula::Or(xs), false) => {
            let mut acc: Vec<Vec<Atom>> = vec![vec![]];
            for x in xs {
                let d = dnf(x, positive)?;
                if d.is_empty() {
                    return Some(vec![]);
                }
                if acc.len().saturating_mul(d.len()) > DNF_LIMIT {
                    return None;
                }
                let mut next = Vec::with_capacity(acc.len() * d.len());
                for a in &acc {
                    for b in &d {
                        let mut c = a.clone();
                        for atom in b {
                            if !c.contains(atom) {
                                c.push(atom.clone());
                            }
                        }
                        next.push(c);
                    }
                }
                acc = next;
            }
            Some(acc)
        }
        (Formula::Or(xs), true) | (Formula::And(xs), false) => {
            let mut acc = Vec::new();
            for x in xs {
                acc.extend(dnf(x, positive)?);
                if acc.len() > DNF_LIMIT {
                    return None;
                }
            }
            Some(acc)
        }
    }
}

enum Outcome {
    Unsat,
    Candidates(Vec<Assignment>),
    Unknown,
}

/// `expr op 0` with `op` one of `=`, `<`, `<=`.
struct Cons {
    expr: LinExpr,
    op: CmpOp,
}

fn str_pos(consts: &[String], s: &str) -> BigRational {
    let i = consts.binary_search_by(|c| c.as_str().cmp(s)).expect("constant collected");
    rat(2 * (i as i64 + 1))
}

fn term_expr(t: &Term, consts: &[String]) -> LinExpr {
    match t {
        Term::Var(v) => LinExpr::var(v),
        Term::Const(s) => LinExpr::constant(str_pos(consts, s)),
    }
}

fn gcd_feasible(e: &LinExpr) -> bool {
    let mut l = BigInt::one();
    for c in e.coeffs.values().chain(core::iter::once(&e.constant)) {
        l = l.lcm(c.denom());
    }
    let scale = BigRational::from_integer(l);
    let mut g = BigInt::zero();
    for c in e.coeffs.values() {
        g = g.gcd(&(c * &scale).to_integer());
    }
    let k = (&e.constant * &scale).to_integer();
    g.is_zero() || (k % g).is_zero()
}

#[derive(Clone, PartialEq, Eq)]
struct W {
    v: BigRational,
    strict: bool,
}

impl W {
    fn lt(&self, o: &W) -> bool {
        self.v < o.v || (self.v == o.v && self.strict && !o.strict)
    }

    fn add(&self, o: &W) -> W {
        W { v: &self.v + &o.v, strict: self.strict || o.strict }
    }

    fn negative(&self) -> bool {
        self.v.is_negative() || (self.v.is_zero() && self.strict)
    }
}

struct Graph {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    /// `(from, to, w)`: `to - from <= w` (strict: `<`).
    edges: Vec<(usize, usize, W)>,
    virtual_from: usize,
}

impl Graph {
    fn node(&mut self, name: &str) -> usize {
        if let Some(i) = self.index.get(name) {
            return *i;
        }
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }

    fn upper(&mut self, x: usize, b: BigRational, strict: bool, int: bool) {
        let w = if int { W { v: tighten_upper(&b, strict), strict: false } } else { W { v: b, strict } };
        self.edges.push((0, x, w));
    }

    fn lower(&mut self, x: usize, b: BigRational, strict: bool, int: bool) {
        let v = if int { tighten_lower(&b, strict) } else { b };
        self.edges.push((x, 0, W { v: -v, strict: strict && !int }));
    }
}

fn tighten_upper(b: &BigRational, strict: bool) -> BigRational {
    if strict {
        b.ceil() - rat(1)
    } else {
        b.floor()
    }
}

fn tighten_lower(b: &BigRational, strict: bool) -> BigRational {
    if strict {
        b.floor() + rat(1)
    } else {
        b.ceil()
    }
}

fn solve(conj: &[Atom], u: &Universe, consts: &[String]) -> Outcome {
    let is_int = |v: &str| u.get(v) == Some(&Kind::Int);
    let mut cons: Vec<Cons> = Vec::with_capacity(conj.len());
    let mut str_vars = BTreeSet::new();
    for a in conj {
        let (expr, op) = match a {
            Atom::Num { expr, op } => (expr.clone(), *op),
            Atom::Str { lhs, op, rhs } => {
                for t in [lhs, rhs] {
                    if let Term::Var(v) = t {
                        str_vars.insert(v.clone());
                    }
                }
                (term_expr(lhs, consts).sub(&term_expr(rhs, consts)), *op)
            }
        };
        let (expr, op) = match op {
            CmpOp::Gt => (expr.scale(&rat(-1)), CmpOp::Lt),
            CmpOp::Ge => (expr.scale(&rat(-1)), CmpOp::Le),
            o => (expr, o),
        };
        debug_assert!(op != CmpOp::Ne);
        cons.push(Cons { expr, op });
    }

    // Equalities.
    let mut subs: Vec<(String, LinExpr)> = Vec::new();
    while let Some(i) = cons.iter().position(|c| c.op == CmpOp::Eq) {
        let c = cons.swap_remove(i);
        if c.expr.is_constant() {
            if !c.expr.constant.is_zero() {
                return Outcome::Unsat;
            }
            continue;
        }
        if c.expr.coeffs.keys().all(|v| is_int(v)) && !gcd_feasible(&c.expr) {
            return Outcome::Unsat;
        }
        let x = c
            .expr
            .coeffs
            .keys()
            .find(|v| !is_int(v))
            .or_else(|| c.expr.coeffs.iter().find(|(_, k)| k.abs().is_one()).map(|(v, _)| v))
            .unwrap_or_else(|| c.expr.coeffs.keys().next().unwrap())
            .clone();
        let k = c.expr.coeffs[&x].clone();
        let mut rest = c.expr.clone();
        rest.coeffs.remove(&x);
        let e = rest.scale(&(-rat(1) / k));
        for o in cons.iter_mut() {
            o.expr = o.expr.substitute(&x, &e);
        }
        subs.push((x, e));
    }

    // Inequalities onto the graph.
    let mut g = Graph { names: vec!["0".to_string()], index: BTreeMap::new(), edges: Vec::new(), virtual_from: 0 };
    g.index.insert("0".to_string(), 0);
    let mut forms: BTreeMap<Vec<(String, BigRational)>, String> = BTreeMap::new();
    let mut pending_virtual: Vec<(String, BigRational, bool, bool)> = Vec::new();
    for c in &cons {
        let strict = c.op == CmpOp::Lt;
        let d = &c.expr.constant;
        let terms: Vec<(&String, &BigRational)> = c.expr.coeffs.iter().collect();
        match terms.len() {
            0 => {
                if d.is_positive() || (d.is_zero() && strict) {
                    return Outcome::Unsat;
                }
            }
            1 => {
                let (x, k) = terms[0];
                let b = -d / k;
                let n = g.node(x);
                if k.is_positive() {
                    g.upper(n, b, strict, is_int(x));
                } else {
                    g.lower(n, b, strict, is_int(x));
                }
            }
            2 if *terms[0].1 == -terms[1].1.clone() => {
                let ((x, k), (y, _)) = if terms[0].1.is_positive() { (terms[0], terms[1]) } else { (terms[1], terms[0]) };
                let b = -d / k;
                let (nx, ny) = (g.node(x), g.node(y));
                let w = if is_int(x) && is_int(y) {
                    W { v: tighten_upper(&b, strict), strict: false }
                } else {
                    W { v: b, strict }
                };
                g.edges.push((ny, nx, w));
            }
            _ => {
                let k = terms[0].1.clone();
                let key: Vec<(String, BigRational)> = terms.iter().map(|(v, c)| ((*v).clone(), *c / &k)).collect();
                let n = forms.len();
                let name = forms.entry(key).or_insert_with(|| alloc::format!("#form{n}")).clone();
                pending_virtual.push((name, -d / &k, strict, k.is_positive()));
            }
        }
    }
    g.virtual_from = g.names.len();
    for (name, b, strict, upper) in pending_virtual {
        let n = g.node(&name);
        if upper {
            g.upper(n, b, strict, false);
        } else {
            g.lower(n, b, strict, false);
        }
    }

    // Negative cycles.
    let n = g.names.len();
    let mut d: Vec<Vec<Option<W>>> = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(W { v: BigRational::zero(), strict: false });
    }
    for (a, b, w) in &g.edges {
        if d[*a][*b].as_ref().is_none_or(|old| w.lt(old)) {
            d[*a][*b] = Some(w.clone());
        }
    }
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = d[i][k].clone() else { continue };
            for j in 0..n {
                if let Some(kj) = &d[k][j] {
                    let s = ik.add(kj);
                    if d[i][j].as_ref().is_none_or(|old| s.lt(old)) {
                        d[i][j] = Some(s);
                    }
                }
            }
            if d[i][i].as_ref().unwrap().negative() {
                return Outcome::Unsat;
            }
        }
    }
    if (0..n).any(|i| d[i][i].as_ref().unwrap().negative()) {
        return Outcome::Unsat;
    }

    // Witness candidates.
    let mut cands = Vec::new();
    for eps in [rat(1), rat(1) / rat(2), rat(1) / rat(16), rat(1) / rat(1024), rat(1) / rat(1 << 20)] {
        let mut m: Vec<Vec<Option<BigRational>>> = vec![vec![None; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = Some(BigRational::zero());
        }
        for (a, b, w) in &g.edges {
            let v = if w.strict { &w.v - &eps } else { w.v.clone() };
            if m[*a][*b].as_ref().is_none_or(|old| v < *old) {
                m[*a][*b] = Some(v);
            }
        }
        for k in 0..n {
            for i in 0..n {
                let Some(ik) = m[i][k].clone() else { continue };
                for j in 0..n {
                    if let Some(kj) = &m[k][j] {
                        let s = &ik + kj;
                        if m[i][j].as_ref().is_none_or(|old| s < *old) {
                            m[i][j] = Some(s);
                        }
                    }
                }
            }
        }
        if (0..n).any(|i| m[i][i].as_ref().unwrap().is_negative()) {
            continue;
        }
        let pot: Vec<BigRational> = (0..n)
            .map(|x| {
                (0..n).filter_map(|i| m[i][x].clone()).fold(BigRational::zero(), |acc, v| if v < acc { v } else { acc })
            })
            .collect();
        let mut vals: BTreeMap<String, BigRational> = BTreeMap::new();
        for (i, name) in g.names.iter().enumerate().take(g.virtual_from).skip(1) {
            vals.insert(name.clone(), &pot[i] - &pot[0]);
        }
        for (x, e) in subs.iter().rev() {
            let mut acc = e.constant.clone();
            for (v, c) in &e.coeffs {
                let val = vals.entry(v.clone()).or_insert_with(BigRational::zero).clone();
                acc += c * val;
            }
            vals.insert(x.clone(), acc);
        }
        if let Some(a) = to_assignment(&vals, u, &str_vars, consts) {
            cands.push(a);
        }
    }
    if cands.is_empty() {
        Outcome::Unknown
    } else {
        Outcome::Candidates(cands)
    }
}

fn to_assignment(
    vals: &BTreeMap<String, BigRational>,
    u: &Universe,
    str_vars: &BTreeSet<String>,
    consts: &[String],
) -> Option<Assignment> {
    let mut a = Assignment::new();
    let mut strs: BTreeMap<String, BigRational> = BTreeMap::new();
    for (v, r) in vals {
        if str_vars.contains(v) {
            strs.insert(v.clone(), r.clone());
            continue;
        }
        match u.get(v)? {
            Kind::Int if !r.is_integer() => return None,
            Kind::Str => return None,
            _ => {
                a.insert(v.clone(), Value::rat(r.clone()));
            }
        }
    }
    // Interval j holds values strictly between constants j-1 and j.
    let mut groups: BTreeMap<usize, BTreeSet<BigRational>> = BTreeMap::new();
    for r in strs.values() {
        let j = consts.iter().enumerate().filter(|(i, _)| rat(2 * (*i as i64 + 1)) < *r).count();
        let on_const = j < consts.len() && rat(2 * (j as i64 + 1)) == *r;
        if !on_const {
            groups.entry(j).or_default().insert(r.clone());
        }
    }
    for (v, r) in strs {
        let j = consts.iter().enumerate().filter(|(i, _)| rat(2 * (*i as i64 + 1)) < r).count();
        let s = if j < consts.len() && rat(2 * (j as i64 + 1)) == r {
            consts[j].clone()
        } else {
            let rank = groups[&j].iter().position(|x| *x == r).unwrap() + 1;
            let base = if j == 0 { String::new() } else { consts[j - 1].clone() };
            let mut s = base;
            for _ in 0..rank {
                s.push('\u{1}');
            }
            s
        };
        a.insert(v, Value::Str(s));
    }
    Some(a)
}
