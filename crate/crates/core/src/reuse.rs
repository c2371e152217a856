//! Parameterized query templates and the static check deciding whether a
//! sketch captured for one binding of a template may answer another.
//!
//! The checker relates the incoming instance `Q'` (primed variables) to the
//! captured instance `Q` (unprimed) node by node and proves that the lineage
//! of every `Q'` result tuple is contained in the lineage of a distinct `Q`
//! result tuple. Combined with a safe attribute set this makes the captured
//! sketch a superset of the sketch `Q'` needs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::hash::Hasher;

use crate::error::{Error, Result};
use crate::logic::{is_valid, prime, Formula, Universe};
use crate::partition::Stats;
use crate::relalg::{analyze, AggFunc, CmpOp, Expr, Plan, Schema};
use crate::safety::{all_equal, describe, psi_formula, var_resolver, weakest, Desc, Obligation, Psi};
use crate::sketch::ProvenanceSketch;
use crate::value::{Kind, Value};

/// A plan whose parameters `$1..$n` are all referenced.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    plan: Plan,
    kinds: Vec<Kind>,
    id: String,
}

impl Template {
    pub fn new(plan: Plan, schemas: &BTreeMap<String, Schema>) -> Result<Template> {
        let a = analyze(&plan, schemas)?;
        let params = plan.params();
        let n = params.len();
        if let Some(k) = (1..=n).find(|k| !params.contains(k)) {
            return Err(Error::Invalid(format!("template parameters must be $1..${n}; ${k} is never used")));
        }
        let kinds = (1..=n).map(|k| a.params.get(&k).copied().unwrap_or(Kind::Rat)).collect();
        let id = template_id(&plan);
        Ok(Template { plan, kinds, id })
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn arity(&self) -> usize {
        self.kinds.len()
    }

    pub fn param_kinds(&self) -> &[Kind] {
        &self.kinds
    }

    /// Substitutes `$i` by the `i`-th binding value.
    pub fn instantiate(&self, b: &Binding) -> Result<Plan> {
        self.check(b)?;
        Ok(instantiate(&self.plan, b))
    }

    fn check(&self, b: &Binding) -> Result<()> {
        if b.len() != self.arity() {
            return Err(Error::Binding(format!("template takes {} parameters, binding has {}", self.arity(), b.len())));
        }
        for (i, (v, k)) in b.values().iter().zip(&self.kinds).enumerate() {
            let ok = match (v, k) {
                (Value::Str(_), Kind::Str) => true,
                (Value::Int(_), Kind::Int) => true,
                (Value::Int(_) | Value::Rat(_), Kind::Rat) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Binding(format!("${} is {k}, got {}", i + 1, v.literal())));
            }
        }
        Ok(())
    }
}

/// Lifts every non-null selection literal into a fresh parameter, in the
/// same order as [`crate::safety::abstract_literals`]. Literals under a
/// multiplication stay.
pub fn lift_literals(plan: &Plan) -> (Plan, Binding) {
    let mut values = Vec::new();
    let t = plan.transform(&mut |node| match node {
        Plan::Select { cond, input } => {
            let cond = cond.map_exprs(&mut |e| lift(e, &mut values));
            Plan::Select { cond, input }
        }
        n => n,
    });
    (t, Binding(values))
}

fn lift(e: &Expr, values: &mut Vec<Value>) -> Expr {
    use alloc::boxed::Box;
    match e {
        Expr::Lit(v) if !v.is_null() => {
            values.push(v.clone());
            Expr::Param(values.len())
        }
        Expr::Add(a, b) => Expr::Add(Box::new(lift(a, values)), Box::new(lift(b, values))),
        Expr::Sub(a, b) => Expr::Sub(Box::new(lift(a, values)), Box::new(lift(b, values))),
        Expr::Neg(a) => Expr::Neg(Box::new(lift(a, values))),
        other => other.clone(),
    }
}

impl Template {
    /// Template and binding of a parameter-free query.
    pub fn from_query(plan: &Plan, schemas: &BTreeMap<String, Schema>) -> Result<(Template, Binding)> {
        if !plan.params().is_empty() {
            return Err(Error::Invalid("query has unbound parameters".to_string()));
        }
        let (t, b) = lift_literals(plan);
        let t = Template::new(t, schemas)?;
        t.check(&b)?;
        Ok((t, b))
    }
}

/// Stable template identifier: FNV-1a of the canonical plan text.
pub fn template_id(plan: &Plan) -> String {
    let mut h = fnv::FnvHasher::default();
    h.write(plan.to_string().as_bytes());
    format!("t{:016x}", h.finish())
}

fn instantiate(plan: &Plan, b: &Binding) -> Plan {
    plan.map_exprs(&mut |e| {
        e.rewrite(&mut |x| match x {
            Expr::Param(k) => Some(Expr::Lit(b.values()[k - 1].clone())),
            _ => None,
        })
    })
}

/// Values for `$1..$n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Binding(pub Vec<Value>);

impl Binding {
    pub fn new(values: Vec<Value>) -> Binding {
        Binding(values)
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses a comma-separated list of literals: numbers, `'strings'`
    /// (quotes doubled inside) and `null`.
    /// Comma-separated literals, optionally wrapped in parentheses as
    /// printed by `Display`.
    pub fn parse(text: &str) -> Result<Binding> {
        let t = text.trim();
        let text = t.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(t);
        let mut values = Vec::new();
        let mut chars = text.chars().peekable();
        loop {
            while chars.peek().is_some_and(|c| c.is_whitespace()) {
                chars.next();
            }
            if chars.peek().is_none() {
                if !values.is_empty() {
                    return Err(Error::Binding("trailing comma".to_string()));
                }
                break;
            }
            if chars.peek() == Some(&'\'') {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('\'') if chars.peek() == Some(&'\'') => {
                            chars.next();
                            s.push('\'');
                        }
                        Some('\'') => break,
                        Some(c) => s.push(c),
                        None => return Err(Error::Binding("unterminated string".to_string())),
                    }
                }
                values.push(Value::Str(s));
            } else {
                let mut tok = String::new();
                while let Some(c) = chars.peek().copied() {
                    if c == ',' {
                        break;
                    }
                    tok.push(c);
                    chars.next();
                }
                let tok = tok.trim();
                let v = if tok.eq_ignore_ascii_case("null") {
                    Value::Null
                } else {
                    crate::value::parse_number(tok).ok_or_else(|| Error::Binding(format!("bad literal `{tok}`")))?
                };
                values.push(v);
            }
            while chars.peek().is_some_and(|c| c.is_whitespace()) {
                chars.next();
            }
            match chars.next() {
                None => break,
                Some(',') => {}
                Some(c) => return Err(Error::Binding(format!("unexpected `{c}`"))),
            }
        }
        Ok(Binding(values))
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.literal()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReuseVerdict {
    Reusable,
    Unknown,
}

impl ReuseVerdict {
    pub fn name(self) -> &'static str {
        match self {
            ReuseVerdict::Reusable => "reusable",
            ReuseVerdict::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReuseReport {
    pub verdict: ReuseVerdict,
    pub obligations: Vec<Obligation>,
    pub failures: Vec<String>,
    /// Relation between captured (unprimed) and incoming (primed) result
    /// tuples at the root, including atoms over projected-away variables.
    pub psi: Formula,
}

impl ReuseReport {
    pub fn is_reusable(&self) -> bool {
        self.verdict == ReuseVerdict::Reusable
    }
}

impl fmt::Display for ReuseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verdict: {}", self.verdict.name())?;
        for o in &self.obligations {
            let tag = if o.required { "" } else { " (case)" };
            writeln!(f, "[{}]{tag} {}: {} => {}", o.verdict.name(), o.operator, o.premise, o.conclusion)?;
        }
        for m in &self.failures {
            writeln!(f, "[failed] {m}")?;
        }
        writeln!(f, "psi: {}", self.psi)
    }
}

struct Info {
    psi: Psi,
    /// Incoming tuples are identical copies of distinct captured tuples.
    sub: bool,
    /// With `sub`: key variables `K` such that a `K`-slice that is nonempty
    /// on both sides is identical on both sides.
    keys: Option<BTreeSet<String>>,
}

struct Checker {
    u: Universe,
    obligations: Vec<Obligation>,
    failures: Vec<String>,
}

impl Checker {
    fn prove(&mut self, op: &str, premise: Formula, conclusion: Formula, required: bool) -> Result<bool> {
        let verdict = is_valid(&premise, &conclusion, &self.u)?;
        let ok = verdict.is_valid();
        self.obligations.push(Obligation { operator: op.to_string(), premise, conclusion, verdict, required });
        Ok(ok)
    }

    fn premise(&self, psi: &Psi, d: &Desc, dp: &Desc) -> Formula {
        psi_formula(psi, &self.u).and(d.conds()).and(dp.conds().primed())
    }

    fn rel(&self, v: &str, op: CmpOp) -> Formula {
        Formula::cmp_vars(v, op, &prime(v), self.u.get(v).copied().unwrap_or(Kind::Rat))
    }

    fn node(&mut self, plan: &Plan, d: &Desc, dp: &Desc) -> Result<Info> {
        match plan {
            Plan::Scan(_) => Ok(Info {
                psi: d.vars().into_iter().map(|v| (v, CmpOp::Eq)).collect(),
                sub: true,
                keys: Some(BTreeSet::new()),
            }),
            Plan::Select { input, .. } => {
                let (c, cp) = (&d.children[0], &dp.children[0]);
                let mut i = self.node(input, c, cp)?;
                let p = self.premise(&i.psi, c, cp);
                let theta = d.theta.clone();
                let theta_p = dp.theta.primed();
                self.prove("select", p.clone().and(theta_p.clone()), theta.clone(), true)?;
                if i.sub && i.keys.is_some() && !self.prove("select converse", p.and(theta.clone()), theta_p, false)? {
                    let cols = theta.vars().into_iter().filter(|v| !v.starts_with('$'));
                    i.keys.as_mut().unwrap().extend(cols);
                }
                Ok(i)
            }
            Plan::Project { input, .. } => {
                let (c, cp) = (&d.children[0], &dp.children[0]);
                let mut i = self.node(input, c, cp)?;
                let keys = i.keys.as_ref().and_then(|k| {
                    k.iter()
                        .map(|kv| d.proj.iter().find(|(_, s)| s.as_deref() == Some(kv.as_str())).map(|(v, _)| v.clone()))
                        .collect::<Option<BTreeSet<String>>>()
                });
                let mut new = Psi::new();
                let mut identical = i.sub;
                for (v, source) in &d.proj {
                    if let Some(op) = source.as_ref().and_then(|s| i.psi.get(s)) {
                        new.insert(v.clone(), *op);
                        continue;
                    }
                    let p = self.premise(&i.psi, c, cp).and(d.expr.clone()).and(dp.expr.primed());
                    let mut found = None;
                    for op in [CmpOp::Eq, CmpOp::Ge, CmpOp::Le] {
                        if self.prove("project", p.clone(), self.rel(v, op), false)? {
                            found = Some(op);
                            break;
                        }
                    }
                    if found != Some(CmpOp::Eq) {
                        identical = false;
                    }
                    if let Some(op) = found {
                        new.insert(v.clone(), op);
                    }
                }
                i.psi.extend(new);
                i.sub = identical;
                i.keys = if identical { keys } else { None };
                Ok(i)
            }
            Plan::Dedup(input) => {
                let (c, cp) = (&d.children[0], &dp.children[0]);
                let mut i = self.node(input, c, cp)?;
                if !i.sub {
                    let goal = all_equal(&d.vars(), &self.u);
                    let p = self.premise(&i.psi, c, cp);
                    self.prove("dedup", p, goal, true)?;
                    i.sub = true;
                    i.keys = None;
                }
                for v in d.vars() {
                    i.psi.insert(v, CmpOp::Eq);
                }
                Ok(i)
            }
            Plan::Cross(a, b) | Plan::Join { l: a, r: b, .. } => {
                let (lc, rc) = (&d.children[0], &d.children[1]);
                let (lcp, rcp) = (&dp.children[0], &dp.children[1]);
                let l = self.node(a, lc, lcp)?;
                let r = self.node(b, rc, rcp)?;
                let mut psi = l.psi;
                psi.extend(r.psi);
                let sub = l.sub && r.sub;
                if let (Plan::Join { left, right, .. }, false) = (plan, sub) {
                    let lv = var_resolver(&lc.schema)(left)?;
                    let rv = var_resolver(&rc.schema)(right)?;
                    let premise = psi_formula(&psi, &self.u)
                        .and(lc.conds())
                        .and(rc.conds())
                        .and(lcp.conds().primed())
                        .and(rcp.conds().primed());
                    self.prove("join", premise, all_equal(&[lv, rv], &self.u), true)?;
                }
                let keys = match (sub, l.keys, r.keys) {
                    (true, Some(mut x), Some(y)) => {
                        x.extend(y);
                        Some(x)
                    }
                    _ => None,
                };
                Ok(Info { psi, sub, keys })
            }
            Plan::Union(a, b) => {
                let (lc, rc) = (&d.children[0], &d.children[1]);
                let (lcp, rcp) = (&dp.children[0], &dp.children[1]);
                let l = self.node(a, lc, lcp)?;
                let r = self.node(b, rc, rcp)?;
                let out: BTreeSet<String> = d.vars().into_iter().collect();
                let mut psi = Psi::new();
                for v in &out {
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
                Ok(Info { psi, sub: l.sub && r.sub, keys: None })
            }
            Plan::Aggregate { group, agg, input } => {
                let (c, cp) = (&d.children[0], &dp.children[0]);
                let mut i = self.node(input, c, cp)?;
                let vo = var_resolver(&c.schema);
                let gvars: Vec<String> = group.iter().map(|g| vo(g)).collect::<Result<_>>()?;
                let b = agg.output.clone();
                let premise = self.premise(&i.psi, c, cp);
                if !i.sub {
                    self.prove("aggregate group-by", premise.clone(), all_equal(&gvars, &self.u), true)?;
                }
                for g in &gvars {
                    i.psi.insert(g.clone(), CmpOp::Eq);
                }

                // Groups of the incoming instance equal the captured ones.
                if let (true, Some(k)) = (i.sub, &i.keys) {
                    let mut mapped = BTreeSet::new();
                    let mut all = true;
                    for kv in k {
                        if gvars.contains(kv) {
                            mapped.insert(kv.clone());
                            continue;
                        }
                        let same: Vec<String> =
                            gvars.iter().filter(|g| self.u[*g].comparable(self.u[kv])).cloned().collect();
                        let mut found = false;
                        for g in same {
                            let goal = Formula::cmp_vars(kv, CmpOp::Eq, &g, self.u[&g]);
                            if self.prove("aggregate key", c.conds(), goal, false)? {
                                mapped.insert(g);
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
                        i.psi.insert(b, CmpOp::Eq);
                        return Ok(Info { psi: i.psi, sub: true, keys: Some(mapped) });
                    }
                }

                let a = match &agg.arg {
                    Some(a) => Some(vo(a)?),
                    None => None,
                };
                let rel = match (agg.func, &a) {
                    (AggFunc::Min | AggFunc::Max, _) => {
                        self.failures.push(format!(
                            "{}({}) needs identical groups in both instances",
                            agg.func.name(),
                            agg.arg.as_deref().unwrap_or("*")
                        ));
                        None
                    }
                    (AggFunc::Count, _) => Some(CmpOp::Ge),
                    (AggFunc::Sum, Some(a)) => {
                        let zero = Value::Int(0);
                        let mut rel = None;
                        let up = i.sub || self.prove("aggregate monotone", premise.clone(), self.rel(a, CmpOp::Ge), false)?;
                        if up && self.prove("aggregate sign", c.conds(), Formula::cmp_const(a, CmpOp::Ge, &zero), false)? {
                            rel = Some(CmpOp::Ge);
                        }
                        if rel.is_none() {
                            let down = i.sub || self.prove("aggregate monotone", premise, self.rel(a, CmpOp::Le), false)?;
                            if down
                                && self.prove("aggregate sign", c.conds(), Formula::cmp_const(a, CmpOp::Le, &zero), false)?
                            {
                                rel = Some(CmpOp::Le);
                            }
                        }
                        rel
                    }
                    _ => None,
                };
                match rel {
                    Some(op) => {
                        i.psi.insert(b, op);
                    }
                    None => {
                        i.psi.remove(&b);
                    }
                }
                Ok(Info { psi: i.psi, sub: false, keys: None })
            }
            Plan::TopK { input, .. } => {
                let (c, cp) = (&d.children[0], &dp.children[0]);
                let i = self.node(input, c, cp)?;
                if !(i.sub && i.keys.as_ref().is_some_and(|k| k.is_empty())) {
                    self.failures.push("top-k needs identical inputs in both instances".to_string());
                }
                Ok(i)
            }
        }
    }
}

/// Decides whether a sketch captured for `t` under `captured` can answer
/// `t` under `incoming`.
pub fn check_reusable(
    t: &Template,
    captured: &Binding,
    incoming: &Binding,
    schemas: &BTreeMap<String, Schema>,
    stats: &Stats,
) -> Result<ReuseReport> {
    let q = t.instantiate(captured)?;
    let qp = t.instantiate(incoming)?;
    let mut u = Universe::new();
    let d = describe(&q, schemas, stats, &mut u)?;
    let dp = describe(&qp, schemas, stats, &mut u)?;
    let mut ck = Checker { u, obligations: Vec::new(), failures: Vec::new() };
    let info = ck.node(&q, &d, &dp)?;
    let psi = psi_formula(&info.psi, &ck.u);
    let premise = psi.clone().and(dp.conds().primed()).and(d.expr.clone());
    ck.prove("uconds", premise, d.pred.clone(), true)?;
    let ok = ck.failures.is_empty() && ck.obligations.iter().all(|o| !o.required || o.verdict.is_valid());
    Ok(ReuseReport {
        verdict: if ok { ReuseVerdict::Reusable } else { ReuseVerdict::Unknown },
        obligations: ck.obligations,
        failures: ck.failures,
        psi,
    })
}

/// A captured sketch for one relation of a template instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub template_id: String,
    pub binding: Binding,
    pub sketch: ProvenanceSketch,
    /// Logical capture time (the tuning step or a caller-chosen stamp).
    pub captured_at: u64,
    pub use_count: u64,
    /// Fraction of the relation's rows covered by the sketch.
    pub selectivity: f64,
}

/// Index of the reusable entry of `t` with the fewest set bits (the first
/// such entry on ties).
pub fn find_reusable(
    catalog: &[CatalogEntry],
    t: &Template,
    incoming: &Binding,
    schemas: &BTreeMap<String, Schema>,
    stats: &Stats,
) -> Result<Option<usize>> {
    let mut best: Option<(usize, usize)> = None;
    for (i, e) in catalog.iter().enumerate() {
        if e.template_id != t.id() {
            continue;
        }
        let bits = e.sketch.bits.count_ones();
        if best.is_some_and(|(_, b)| b <= bits) {
            continue;
        }
        if check_reusable(t, &e.binding, incoming, schemas, stats)?.is_reusable() {
            best = Some((i, bits));
        }
    }
    Ok(best.map(|(i, _)| i))
}
