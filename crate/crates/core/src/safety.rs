//! Static safety check: does every provenance sketch over an attribute set
//! `X` (accurate or captured) give the same query result as the full
//! database?
//!
//! The checker walks the plan bottom-up, carrying for each node a relation
//! `Psi` between a tuple of the result on the sketch instance (unprimed
//! variables) and its match in the result on the full database (primed
//! variables), plus `pred`/`expr` constraints that every tuple satisfies.
//! Each operator contributes proof obligations discharged by
//! [`crate::logic::is_valid`]; the query is safe when all of them are valid.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::logic::{is_valid, param_var, prime, Atom, Formula, LinExpr, Term, Universe, Verdict};
use crate::partition::Stats;
use crate::relalg::{analyze, AggFunc, CmpOp, Expr, Plan, Schema};
use crate::value::{Kind, Value};

/// Sketched attributes: at most one attribute per relation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttrSet {
    attrs: BTreeMap<String, String>,
}

impl AttrSet {
    pub fn new() -> AttrSet {
        AttrSet::default()
    }

    pub fn single(relation: &str, attribute: &str) -> AttrSet {
        let mut s = AttrSet::new();
        s.insert(relation, attribute).unwrap();
        s
    }

    pub fn insert(&mut self, relation: &str, attribute: &str) -> Result<()> {
        match self.attrs.get(relation) {
            Some(a) if a != attribute => Err(Error::Invalid(format!(
                "relation `{relation}` has two sketched attributes ({a}, {attribute})"
            ))),
            _ => {
                self.attrs.insert(relation.to_string(), attribute.to_string());
                Ok(())
            }
        }
    }

    /// Parses `rel.attr,rel2.attr2`; the empty string is the empty set.
    pub fn parse(text: &str) -> Result<AttrSet> {
        let mut s = AttrSet::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (r, a) = part
                .split_once('.')
                .ok_or_else(|| Error::Invalid(format!("`{part}` is not of the form relation.attribute")))?;
            s.insert(r, a)?;
        }
        Ok(s)
    }

    pub fn get(&self, relation: &str) -> Option<&str> {
        self.attrs.get(relation).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.attrs.iter().map(|(r, a)| (r.as_str(), a.as_str()))
    }
}

impl fmt::Display for AttrSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(r, a)| format!("{r}.{a}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafetyVerdict {
    Safe,
    Unknown,
}

impl SafetyVerdict {
    pub fn name(self) -> &'static str {
        match self {
            SafetyVerdict::Safe => "safe",
            SafetyVerdict::Unknown => "unknown",
        }
    }
}

/// One implication handed to the prover. Non-required ones only select
/// between rule cases and never fail the check.
#[derive(Debug, Clone, PartialEq)]
pub struct Obligation {
    pub operator: String,
    pub premise: Formula,
    pub conclusion: Formula,
    pub verdict: Verdict,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyReport {
    pub verdict: SafetyVerdict,
    pub obligations: Vec<Obligation>,
    /// Structural rule violations (no prover involved).
    pub failures: Vec<String>,
    /// Relation between sketch-side and full-side result tuples at the root.
    pub psi: Formula,
    /// A top-k operator sits above sketched data; executions should check
    /// that its input on the instance has at least `count` rows.
    pub topk_runtime_check: bool,
}

impl SafetyReport {
    pub fn is_safe(&self) -> bool {
        self.verdict == SafetyVerdict::Safe
    }
}

impl fmt::Display for SafetyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {}", self.verdict.name())?;
        for o in &self.obligations {
            let tag = if o.required { "" } else { " (case)" };
            writeln!(f, "[{}]{tag} {}: {} => {}", o.verdict.name(), o.operator, o.premise, o.conclusion)?;
        }
        for m in &self.failures {
            writeln!(f, "[failed] {m}")?;
        }
        writeln!(f, "psi: {}", self.psi)?;
        if self.topk_runtime_check {
            writeln!(f, "top-k runtime check required")?;
        }
        Ok(())
    }
}

/// Per-node constraints shared by the safety and reuse checkers.
#[derive(Debug, Clone)]
pub(crate) struct Desc {
    pub schema: Schema,
    pub pred: Formula,
    pub expr: Formula,
    /// Selection condition or join equality, over this node's variables.
    pub theta: Formula,
    /// Projection outputs: variable, source variable when the item is a
    /// plain column.
    pub proj: Vec<(String, Option<String>)>,
    /// Union: right output variable to left output variable.
    pub rename: BTreeMap<String, String>,
    pub children: Vec<Desc>,
}

impl Desc {
    pub fn conds(&self) -> Formula {
        self.pred.clone().and(self.expr.clone())
    }

    pub fn vars(&self) -> Vec<String> {
        self.schema.columns.iter().map(|c| c.var()).collect()
    }
}

pub(crate) fn var_resolver(schema: &Schema) -> impl Fn(&str) -> Result<String> + '_ {
    move |c: &str| Ok(schema.columns[schema.resolve(c)?].var())
}

fn declare(u: &mut Universe, schema: &Schema) {
    for c in &schema.columns {
        u.insert(c.var(), c.kind);
        u.insert(prime(&c.var()), c.kind);
    }
}

/// Statistics bounds `min(a) <= a <= max(a)` for every attribute of `rel`.
fn bounds(rel: &str, schema: &Schema, stats: &Stats) -> Formula {
    let mut parts = Vec::new();
    for c in &schema.columns {
        if let Some(cs) = stats.get(rel, &c.name) {
            if let (Some(lo), Some(hi)) = (&cs.min, &cs.max) {
                parts.push(Formula::cmp_const(&c.var(), CmpOp::Ge, lo));
                parts.push(Formula::cmp_const(&c.var(), CmpOp::Le, hi));
            }
        }
    }
    Formula::and_all(parts)
}

/// Builds the constraint tree. Declares every column variable (and its
/// primed copy) in `u`; parameters must already be declared.
pub(crate) fn describe(
    plan: &Plan,
    schemas: &BTreeMap<String, Schema>,
    stats: &Stats,
    u: &mut Universe,
) -> Result<Desc> {
    let leaf = |schema: Schema, pred: Formula, expr: Formula, children: Vec<Desc>| Desc {
        schema,
        pred,
        expr,
        theta: Formula::True,
        proj: Vec::new(),
        rename: BTreeMap::new(),
        children,
    };
    Ok(match plan {
        Plan::Scan(r) => {
            let s = schemas.get(r).ok_or_else(|| Error::UnknownRelation(r.clone()))?.clone();
            declare(u, &s);
            let pred = bounds(r, &s, stats);
            leaf(s, pred, Formula::True, Vec::new())
        }
        Plan::Select { cond, input } => {
            let c = describe(input, schemas, stats, u)?;
            let theta = Formula::from_cond(cond, &var_resolver(&c.schema), u)?;
            let mut d = leaf(c.schema.clone(), c.pred.clone().and(theta.clone()), c.expr.clone(), Vec::new());
            d.theta = theta;
            d.children.push(c);
            d
        }
        Plan::Project { items, input } => {
            let c = describe(input, schemas, stats, u)?;
            let schema = analyze(plan, schemas)?.schema;
            declare(u, &schema);
            let mut atoms = Vec::new();
            let mut proj = Vec::new();
            for (it, col) in items.iter().zip(&schema.columns) {
                let v = col.var();
                let source = match &it.expr {
                    Expr::Col(name) => Some(var_resolver(&c.schema)(name)?),
                    _ => None,
                };
                if it.alias.is_some() {
                    atoms.push(define(&v, col.kind, &it.expr, &c.schema, u)?);
                }
                proj.push((v, source));
            }
            let mut d = leaf(schema, c.pred.clone(), c.expr.clone().and(Formula::and_all(atoms)), Vec::new());
            d.proj = proj;
            d.children.push(c);
            d
        }
        Plan::Dedup(p) | Plan::TopK { input: p, .. } => {
            let c = describe(p, schemas, stats, u)?;
            leaf(c.schema.clone(), c.pred.clone(), c.expr.clone(), alloc::vec![c])
        }
        Plan::Cross(a, b) => {
            let l = describe(a, schemas, stats, u)?;
            let r = describe(b, schemas, stats, u)?;
            leaf(
                l.schema.concat(&r.schema),
                l.pred.clone().and(r.pred.clone()),
                l.expr.clone().and(r.expr.clone()),
                alloc::vec![l, r],
            )
        }
        Plan::Join { left, right, l, r } => {
            let ld = describe(l, schemas, stats, u)?;
            let rd = describe(r, schemas, stats, u)?;
            let lc = &ld.schema.columns[ld.schema.resolve(left)?];
            let rc = &rd.schema.columns[rd.schema.resolve(right)?];
            let theta = Formula::cmp_vars(&lc.var(), CmpOp::Eq, &rc.var(), lc.kind);
            let mut d = leaf(
                ld.schema.concat(&rd.schema),
                ld.pred.clone().and(rd.pred.clone()).and(theta.clone()),
                ld.expr.clone().and(rd.expr.clone()),
                Vec::new(),
            );
            d.theta = theta;
            d.children = alloc::vec![ld, rd];
            d
        }
        Plan::Union(a, b) => {
            let l = describe(a, schemas, stats, u)?;
            let r = describe(b, schemas, stats, u)?;
            let rename: BTreeMap<String, String> = r.vars().into_iter().zip(l.vars()).collect();
            let f = |v: &str| rename.get(v).cloned().unwrap_or_else(|| v.to_string());
            let mut d = leaf(
                l.schema.clone(),
                l.pred.clone().or(r.pred.rename(&f)),
                l.expr.clone().or(r.expr.rename(&f)),
                Vec::new(),
            );
            d.rename = rename.clone();
            d.children = alloc::vec![l, r];
            d
        }
        Plan::Aggregate { input, .. } => {
            let c = describe(input, schemas, stats, u)?;
            let schema = analyze(plan, schemas)?.schema;
            declare(u, &schema);
            leaf(schema, c.pred.clone(), c.expr.clone(), alloc::vec![c])
        }
    })
}

/// `v = e` for a projection item.
fn define(v: &str, kind: Kind, e: &Expr, input: &Schema, u: &Universe) -> Result<Formula> {
    if matches!(e, Expr::Lit(Value::Null)) {
        return Ok(Formula::True);
    }
    let vo = var_resolver(input);
    if kind == Kind::Str {
        let t = Formula::term(e, &vo, u)?.ok_or_else(|| Error::Type(format!("`{e}` is not a string")))?;
        Ok(Formula::Atom(Atom::Str { lhs: Term::Var(v.to_string()), op: CmpOp::Eq, rhs: t }))
    } else {
        let l = Formula::linear(e, &vo, u)?;
        Ok(Formula::Atom(Atom::Num { expr: LinExpr::var(v).sub(&l), op: CmpOp::Eq }))
    }
}

/// Universe holding the parameters of `plan` at their inferred kinds.
pub(crate) fn param_universe(plan: &Plan, schemas: &BTreeMap<String, Schema>) -> Result<Universe> {
    let a = analyze(plan, schemas)?;
    let mut u = Universe::new();
    for k in plan.params() {
        // A parameter whose kind cannot be inferred is unconstrained.
        u.insert(param_var(k), a.params.get(&k).copied().unwrap_or(Kind::Rat));
    }
    Ok(u)
}

/// Conjunction of constraints satisfied by every result tuple: statistics
/// bounds of base relations plus selection and join conditions.
pub fn pred(plan: &Plan, schemas: &BTreeMap<String, Schema>, stats: &Stats) -> Result<Formula> {
    let mut u = param_universe(plan, schemas)?;
    Ok(describe(plan, schemas, stats, &mut u)?.pred)
}

/// Definitions of computed projection columns in terms of their inputs.
pub fn expr(plan: &Plan, schemas: &BTreeMap<String, Schema>) -> Result<Formula> {
    let mut u = param_universe(plan, schemas)?;
    Ok(describe(plan, schemas, &Stats::default(), &mut u)?.expr)
}

/// Replaces every non-null literal in selection conditions by a fresh
/// parameter. Literals under a multiplication stay, keeping terms linear.
/// Returns the new plan and the kinds of the new parameters.
pub fn abstract_literals(plan: &Plan) -> (Plan, BTreeMap<usize, Kind>) {
    let mut next = plan.params().iter().next_back().map_or(1, |k| k + 1);
    let mut kinds = BTreeMap::new();
    let out = plan.transform(&mut |node| match node {
        Plan::Select { cond, input } => {
            let cond = cond.map_exprs(&mut |e| abstract_expr(e, &mut next, &mut kinds));
            Plan::Select { cond, input }
        }
        n => n,
    });
    (out, kinds)
}

fn abstract_expr(e: &Expr, next: &mut usize, kinds: &mut BTreeMap<usize, Kind>) -> Expr {
    use alloc::boxed::Box;
    match e {
        Expr::Lit(v) if !v.is_null() => {
            let k = *next;
            *next += 1;
            kinds.insert(k, if v.kind() == Some(Kind::Str) { Kind::Str } else { Kind::Rat });
            Expr::Param(k)
        }
        Expr::Add(a, b) => Expr::Add(Box::new(abstract_expr(a, next, kinds)), Box::new(abstract_expr(b, next, kinds))),
        Expr::Sub(a, b) => Expr::Sub(Box::new(abstract_expr(a, next, kinds)), Box::new(abstract_expr(b, next, kinds))),
        Expr::Neg(a) => Expr::Neg(Box::new(abstract_expr(a, next, kinds))),
        e => e.clone(),
    }
}

/// `v op v'` per variable.
pub(crate) type Psi = BTreeMap<String, CmpOp>;

pub(crate) fn psi_formula(psi: &Psi, u: &Universe) -> Formula {
    Formula::and_all(psi.iter().map(|(v, op)| {
        let kind = u.get(v).copied().unwrap_or(Kind::Rat);
        Formula::cmp_vars(v, *op, &prime(v), kind)
    }))
}

/// Strongest relation implied by both `a` and `b`.
pub(crate) fn weakest(a: CmpOp, b: CmpOp) -> Option<CmpOp> {
    match (a, b) {
        (x, y) if x == y => Some(x),
        (CmpOp::Eq, o) | (o, CmpOp::Eq) => Some(o),
        _ => None,
    }
}

pub(crate) fn all_equal(vars: &[String], u: &Universe) -> Formula {
    Formula::and_all(vars.iter().map(|v| {
        let kind = u.get(v).copied().unwrap_or(Kind::Rat);
        Formula::cmp_vars(v, CmpOp::Eq, &prime(v), kind)
    }))
}

struct Info {
    psi: Psi,
    /// Set of key variables `K` such that the instance-side result is
    /// exactly the full-side tuples whose `K` values pass a fixed filter.
    fexact: Option<BTreeSet<String>>,
    has_x: bool,
}

struct Checker<'a> {
    x: &'a AttrSet,
    u: Universe,
    obligations: Vec<Obligation>,
    failures: Vec<String>,
    topk: bool,
}

impl Checker<'_> {
    fn prove(&mut self, op: &str, premise: Formula, conclusion: Formula, required: bool) -> Result<bool> {
        let verdict = is_valid(&premise, &conclusion, &self.u)?;
        let ok = verdict.is_valid();
        self.obligations.push(Obligation { operator: op.to_string(), premise, conclusion, verdict, required });
        Ok(ok)
    }

    /// `Psi /\ conds /\ conds'` of a node's input.
    fn premise(&self, psi: &Psi, d: &Desc) -> Formula {
        let c = d.conds();
        psi_formula(psi, &self.u).and(c.primed()).and(c)
    }

    /// `contributing`: every tuple of this node's result contributes to the
    /// query result (only projection, dedup, union and non-extreme
    /// aggregation above).
    fn node(&mut self, plan: &Plan, d: &Desc, contributing: bool) -> Result<Info> {
        match plan {
            Plan::Scan(r) => {
                let vars = d.vars();
                let psi = vars.iter().map(|v| (v.clone(), CmpOp::Eq)).collect();
                let mut k = BTreeSet::new();
                if let Some(a) = self.x.get(r) {
                    k.insert(var_resolver(&d.schema)(a)?);
                }
                let has_x = !k.is_empty();
                Ok(Info { psi, fexact: Some(k), has_x })
            }
            Plan::Select { input, .. } => {
                let c = &d.children[0];
                let i = self.node(input, c, false)?;
                if i.has_x {
                    let p = self.premise(&i.psi, c).and(d.theta.clone());
                    self.prove("select", p, d.theta.primed(), true)?;
                }
                Ok(i)
            }
            Plan::Project { input, .. } => {
                let c = &d.children[0];
                let mut i = self.node(input, c, contributing)?;
                let fexact = i.fexact.as_ref().and_then(|k| {
                    k.iter()
                        .map(|kv| d.proj.iter().find(|(_, s)| s.as_deref() == Some(kv.as_str())).map(|(v, _)| v.clone()))
                        .collect::<Option<BTreeSet<String>>>()
                });
                let mut new = Psi::new();
                for (v, source) in &d.proj {
                    if !i.has_x {
                        new.insert(v.clone(), CmpOp::Eq);
                        continue;
                    }
                    if let Some(op) = source.as_ref().and_then(|s| i.psi.get(s)) {
                        new.insert(v.clone(), *op);
                        continue;
                    }
                    let p = self.premise(&i.psi, c).and(d.expr.clone()).and(d.expr.primed());
                    let kind = self.u[v];
                    for op in [CmpOp::Eq, CmpOp::Le, CmpOp::Ge] {
                        let goal = Formula::cmp_vars(v, op, &prime(v), kind);
                        if self.prove("project", p.clone(), goal, false)? {
                            new.insert(v.clone(), op);
                            break;
                        }
                    }
                }
                i.psi.extend(new);
                i.fexact = fexact;
                Ok(i)
            }
            Plan::Dedup(input) => {
                let c = &d.children[0];
                let mut i = self.node(input, c, contributing)?;
                if i.has_x {
                    let goal = all_equal(&d.vars(), &self.u);
                    self.prove("dedup", self.premise(&i.psi, c), goal, true)?;
                }
                for v in d.vars() {
                    i.psi.insert(v, CmpOp::Eq);
                }
                Ok(i)
            }
            Plan::Cross(a, b) | Plan::Join { l: a, r: b, .. } => {
                let (lc, rc) = (&d.children[0], &d.children[1]);
                let l = self.node(a, lc, false)?;
                let r = self.node(b, rc, false)?;
                let mut psi = l.psi;
                psi.extend(r.psi);
                let has_x = l.has_x || r.has_x;
                if has_x {
                    if let Plan::Join { left, right, .. } = plan {
                        let lv = var_resolver(&lc.schema)(left)?;
                        let rv = var_resolver(&rc.schema)(right)?;
                        let goal = all_equal(&[lv, rv], &self.u);
                        let premise = psi_formula(&psi, &self.u)
                            .and(lc.conds())
                            .and(rc.conds())
                            .and(lc.conds().primed())
                            .and(rc.conds().primed());
                        self.prove("join", premise, goal, true)?;
                    }
                }
                let fexact = match (l.fexact, r.fexact) {
                    (Some(mut x), Some(y)) => {
                        x.extend(y);
                        Some(x)
                    }
                    _ => None,
                };
                Ok(Info { psi, fexact, has_x })
            }
            Plan::Union(a, b) => {
                let (lc, rc) = (&d.children[0], &d.children[1]);
                let l = self.node(a, lc, contributing)?;
                let r = self.node(b, rc, contributing)?;
                let has_x = l.has_x || r.has_x;
                let out: BTreeSet<String> = d.vars().into_iter().collect();
                let mut psi = Psi::new();
                for v in &out {
                    if !has_x {
                        psi.insert(v.clone(), CmpOp::Eq);
                        continue;
                    }
                    let rv = d.rename.iter().find(|(_, lv)| *lv == v).map(|(rv, _)| rv);
                    let lop = l.psi.get(v);
                    let rop = rv.and_then(|rv| r.psi.get(rv));
                    if let (Some(x), Some(y)) = (lop, rop) {
                        if let Some(op) = weakest(*x, *y) {
                            psi.insert(v.clone(), op);
                        }
                    }
                }
                for (v, op) in l.psi.iter().chain(r.psi.iter()) {
                    if !out.contains(v) && !d.rename.contains_key(v) {
                        psi.insert(v.clone(), *op);
                    }
                }
                let fexact = if has_x { None } else { Some(BTreeSet::new()) };
                Ok(Info { psi, fexact, has_x })
            }
            Plan::Aggregate { group, agg, input } => {
                let c = &d.children[0];
                let extreme = matches!(agg.func, AggFunc::Min | AggFunc::Max);
                let i = self.node(input, c, contributing && !extreme)?;
                let vo = var_resolver(&c.schema);
                let gvars: Vec<String> = group.iter().map(|g| vo(g)).collect::<Result<_>>()?;
                let b = agg.output.clone();
                let mut psi: Psi = gvars.iter().map(|g| (g.clone(), CmpOp::Eq)).collect();
                if !i.has_x {
                    psi.insert(b, CmpOp::Eq);
                    return Ok(Info { psi, fexact: Some(BTreeSet::new()), has_x: false });
                }
                let premise = self.premise(&i.psi, c);
                self.prove("aggregate group-by", premise.clone(), all_equal(&gvars, &self.u), true)?;

                // Case (i): groups are kept or dropped as a whole.
                if let Some(k) = &i.fexact {
                    let mut mapped = BTreeSet::new();
                    let mut all = true;
                    for kv in k {
                        if gvars.contains(kv) {
                            mapped.insert(kv.clone());
                            continue;
                        }
                        let mut found = false;
                        let same: Vec<&String> = gvars.iter().filter(|g| self.u[*g] == self.u[kv]).collect();
                        for g in same {
                            let goal = Formula::cmp_vars(kv, CmpOp::Eq, g, self.u[g]);
                            if self.prove("aggregate key", c.conds(), goal, false)? {
                                mapped.insert(g.clone());
                                found = true;
                                break;
                            }
                        }
                        if !found {
                            all = false;
                            break;
                        }
                    }
                    if all {
                        psi.insert(b, CmpOp::Eq);
                        return Ok(Info { psi, fexact: Some(mapped), has_x: true });
                    }
                }

                let a = match &agg.arg {
                    Some(a) => Some(vo(a)?),
                    None => None,
                };
                let rel = match (agg.func, &a) {
                    (AggFunc::Count, _) => Some(CmpOp::Le),
                    (AggFunc::Avg, _) | (_, None) => None,
                    (f, Some(a)) => {
                        let zero = Value::Int(0);
                        let mut rel = None;
                        if matches!(f, AggFunc::Sum | AggFunc::Max) {
                            let nonneg = self.prove("aggregate sign", c.conds(), Formula::cmp_const(a, CmpOp::Ge, &zero), false)?;
                            if nonneg && self.prove("aggregate monotone", premise.clone(), self.rel(a, CmpOp::Le), false)? {
                                rel = Some(CmpOp::Le);
                            }
                        }
                        if rel.is_none() && matches!(f, AggFunc::Sum | AggFunc::Min) {
                            let nonpos = self.prove("aggregate sign", c.conds(), Formula::cmp_const(a, CmpOp::Le, &zero), false)?;
                            if nonpos && self.prove("aggregate monotone", premise.clone(), self.rel(a, CmpOp::Ge), false)? {
                                rel = Some(CmpOp::Ge);
                            }
                        }
                        rel
                    }
                };
                if extreme {
                    let a = a.as_deref().unwrap_or_default();
                    let op = if agg.func == AggFunc::Min { CmpOp::Ge } else { CmpOp::Le };
                    self.prove(&format!("{} under capture", agg.func.name()), premise, self.rel(a, op), true)?;
                }
                if let Some(op) = rel {
                    psi.insert(b, op);
                }
                Ok(Info { psi, fexact: None, has_x: true })
            }
            Plan::TopK { input, .. } => {
                let c = &d.children[0];
                let mut i = self.node(input, c, false)?;
                if !i.has_x {
                    return Ok(i);
                }
                self.topk = true;
                if !contributing {
                    self.failures.push(
                        "top-k over sketched data must reach the result only through projection, dedup, union or aggregation"
                            .to_string(),
                    );
                }
                let goal = all_equal(&d.vars(), &self.u);
                self.prove("top-k", self.premise(&i.psi, c), goal, true)?;
                for v in d.vars() {
                    i.psi.insert(v, CmpOp::Eq);
                }
                i.fexact = Some(BTreeSet::new());
                Ok(i)
            }
        }
    }

    fn rel(&self, v: &str, op: CmpOp) -> Formula {
        Formula::cmp_vars(v, op, &prime(v), self.u.get(v).copied().unwrap_or(Kind::Rat))
    }
}

/// Checks whether every sketch over `x` is safe for `plan`. Selection
/// literals are treated as parameters, so the verdict is the same for every
/// binding of a template. `Unknown` means no safety proof was found.
pub fn check_safe(
    plan: &Plan,
    x: &AttrSet,
    schemas: &BTreeMap<String, Schema>,
    stats: &Stats,
) -> Result<SafetyReport> {
    analyze(plan, schemas)?;
    let scans = plan.scans();
    for (r, a) in x.iter() {
        if !scans.iter().any(|s| s == r) {
            return Err(Error::Invalid(format!("sketched relation `{r}` is not accessed by the query")));
        }
        schemas[r].resolve(a)?;
    }
    let (abstracted, fresh) = abstract_literals(plan);
    let mut u = param_universe(&abstracted, schemas)?;
    for (k, kind) in fresh {
        u.insert(param_var(k), kind);
    }
    let d = describe(&abstracted, schemas, stats, &mut u)?;
    let mut ck = Checker { x, u, obligations: Vec::new(), failures: Vec::new(), topk: false };
    let info = ck.node(&abstracted, &d, true)?;
    let ok = ck.failures.is_empty() && ck.obligations.iter().all(|o| !o.required || o.verdict.is_valid());
    let out: BTreeSet<String> = d.vars().into_iter().collect();
    let root_psi: Psi = info.psi.into_iter().filter(|(v, _)| out.contains(v)).collect();
    Ok(SafetyReport {
        verdict: if ok { SafetyVerdict::Safe } else { SafetyVerdict::Unknown },
        psi: psi_formula(&root_psi, &ck.u),
        obligations: ck.obligations,
        failures: ck.failures,
        topk_runtime_check: ck.topk,
    })
}
