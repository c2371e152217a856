//! Bag evaluation, generic over a per-row annotation. Plain evaluation uses
//! `()`, lineage uses [`LineageSet`], capture uses sketch annotations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;

use super::analyze::analyze;
use super::plan::{AggFunc, Cond, Dir, Expr, Plan};
use super::schema::{Database, Relation, Row, Schema};
use crate::error::{Error, Result};
use crate::value::Value;

/// Per-row annotation propagated through evaluation.
pub trait Annotation: Clone {
    /// Combines two annotations (cross product, grouping, dedup).
    fn merge(&mut self, other: &Self);

    /// When true, min/max aggregates keep only the annotation of one row
    /// holding the extreme value instead of merging the whole group.
    fn extreme_only() -> bool {
        false
    }
}

impl Annotation for () {
    fn merge(&mut self, _: &Self) {}
}

/// A base row reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowRef {
    pub rel: Arc<str>,
    pub id: u64,
}

impl fmt::Display for RowRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:t{}", self.rel, self.id)
    }
}

/// Set of base rows an output row was derived from.
pub type LineageSet = BTreeSet<RowRef>;

impl Annotation for LineageSet {
    fn merge(&mut self, other: &Self) {
        if self.is_empty() {
            self.clone_from(other);
        } else {
            self.extend(other.iter().cloned());
        }
    }
}

/// Intermediate or final relation whose rows carry annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnRelation<A> {
    pub schema: Schema,
    pub rows: Vec<(Vec<Value>, A)>,
}

impl<A> AnnRelation<A> {
    /// Drops annotations; row ids are positions starting at 1.
    pub fn strip(&self) -> Relation {
        Relation {
            name: Arc::from("result"),
            schema: self.schema.clone(),
            rows: self.rows.iter().enumerate().map(|(i, (v, _))| Row { id: i as u64 + 1, values: v.clone() }).collect(),
        }
    }
}

/// Evaluates `plan` under bag semantics.
pub fn eval(plan: &Plan, db: &Database) -> Result<Relation> {
    let r = eval_annotated(plan, db, &mut |_, _| Ok(()))?;
    Ok(r.strip())
}

/// Evaluates `plan` and returns the lineage of every output row (by
/// position).
pub fn eval_with_lineage(plan: &Plan, db: &Database) -> Result<(Relation, Vec<LineageSet>)> {
    let r = eval_annotated(plan, db, &mut |rel, row| {
        let mut s = LineageSet::new();
        s.insert(RowRef { rel: rel.name.clone(), id: row.id });
        Ok(s)
    })?;
    let rel = r.strip();
    Ok((rel, r.rows.into_iter().map(|(_, a)| a).collect()))
}

/// Union of per-row lineage: the provenance of the whole query.
pub fn whole_lineage(rows: &[LineageSet]) -> LineageSet {
    let mut out = LineageSet::new();
    for r in rows {
        out.extend(r.iter().cloned());
    }
    out
}

/// Bag equality of two relations (schemas are not compared).
pub fn bag_eq(a: &Relation, b: &Relation) -> bool {
    a.len() == b.len() && a.sorted_tuples() == b.sorted_tuples()
}

/// Annotated evaluation. `init` annotates each scanned base row.
pub fn eval_annotated<A: Annotation>(
    plan: &Plan,
    db: &Database,
    init: &mut dyn FnMut(&Relation, &Row) -> Result<A>,
) -> Result<AnnRelation<A>> {
    let schemas = db.schemas();
    let a = analyze(plan, &schemas)?;
    if let Some(p) = a.params.keys().next() {
        return Err(Error::UnboundParameter(*p));
    }
    if let Some(p) = plan.params().into_iter().next() {
        return Err(Error::UnboundParameter(p));
    }
    let ev = Evaluator { db, schemas };
    ev.node(plan, init)
}

struct Evaluator<'a> {
    db: &'a Database,
    schemas: BTreeMap<String, Schema>,
}

impl Evaluator<'_> {
    fn schema_of(&self, plan: &Plan) -> Result<Schema> {
        Ok(analyze(plan, &self.schemas)?.schema)
    }

    fn node<A: Annotation>(
        &self,
        plan: &Plan,
        init: &mut dyn FnMut(&Relation, &Row) -> Result<A>,
    ) -> Result<AnnRelation<A>> {
        match plan {
            Plan::Scan(r) => {
                let rel = self.db.get(r)?;
                let mut rows = Vec::with_capacity(rel.len());
                for row in &rel.rows {
                    rows.push((row.values.clone(), init(rel, row)?));
                }
                Ok(AnnRelation { schema: rel.schema.clone(), rows })
            }
            Plan::Select { cond, input } => {
                let inp = self.node(input, init)?;
                let c = BCond::bind(cond, &inp.schema)?;
                let rows = inp.rows.into_iter().filter(|(v, _)| c.eval(v)).collect();
                Ok(AnnRelation { schema: inp.schema, rows })
            }
            Plan::Project { items, input } => {
                let schema = self.schema_of(plan)?;
                let inp = self.node(input, init)?;
                let exprs: Vec<BExpr> =
                    items.iter().map(|i| BExpr::bind(&i.expr, &inp.schema)).collect::<Result<_>>()?;
                let rows = inp
                    .rows
                    .into_iter()
                    .map(|(v, a)| (exprs.iter().map(|e| e.eval(&v)).collect(), a))
                    .collect();
                Ok(AnnRelation { schema, rows })
            }
            Plan::Dedup(p) => {
                let inp = self.node(p, init)?;
                let mut index: BTreeMap<Vec<Value>, usize> = BTreeMap::new();
                let mut rows: Vec<(Vec<Value>, A)> = Vec::new();
                for (v, a) in inp.rows {
                    match index.get(&v) {
                        Some(&i) => rows[i].1.merge(&a),
                        None => {
                            index.insert(v.clone(), rows.len());
                            rows.push((v, a));
                        }
                    }
                }
                Ok(AnnRelation { schema: inp.schema, rows })
            }
            Plan::Cross(a, b) => {
                let l = self.node(a, init)?;
                let r = self.node(b, init)?;
                let mut rows = Vec::with_capacity(l.rows.len() * r.rows.len());
                for (lv, la) in &l.rows {
                    for (rv, ra) in &r.rows {
                        rows.push(concat(lv, la, rv, ra));
                    }
                }
                Ok(AnnRelation { schema: l.schema.concat(&r.schema), rows })
            }
            Plan::Join { left, right, l, r } => {
                let l = self.node(l, init)?;
                let r = self.node(r, init)?;
                let li = l.schema.resolve(left)?;
                let ri = r.schema.resolve(right)?;
                let mut by_key: BTreeMap<&Value, Vec<usize>> = BTreeMap::new();
                for (i, (rv, _)) in r.rows.iter().enumerate() {
                    if !rv[ri].is_null() {
                        by_key.entry(&rv[ri]).or_default().push(i);
                    }
                }
                let mut rows = Vec::new();
                for (lv, la) in &l.rows {
                    if let Some(ms) = by_key.get(&lv[li]) {
                        for &m in ms {
                            let (rv, ra) = &r.rows[m];
                            rows.push(concat(lv, la, rv, ra));
                        }
                    }
                }
                Ok(AnnRelation { schema: l.schema.concat(&r.schema), rows })
            }
            Plan::Union(a, b) => {
                let mut l = self.node(a, init)?;
                let r = self.node(b, init)?;
                l.rows.extend(r.rows);
                Ok(l)
            }
            Plan::Aggregate { group, agg, input } => {
                let schema = self.schema_of(plan)?;
                let inp = self.node(input, init)?;
                let gi: Vec<usize> = group.iter().map(|g| inp.schema.resolve(g)).collect::<Result<_>>()?;
                let ai = match &agg.arg {
                    Some(a) => Some(inp.schema.resolve(a)?),
                    None => None,
                };
                let mut groups: BTreeMap<Vec<Value>, Vec<usize>> = BTreeMap::new();
                for (i, (v, _)) in inp.rows.iter().enumerate() {
                    groups.entry(gi.iter().map(|&g| v[g].clone()).collect()).or_default().push(i);
                }
                let mut rows = Vec::with_capacity(groups.len());
                for (key, members) in groups {
                    let (value, ann) = aggregate(agg.func, ai, &members, &inp.rows);
                    let mut out = key;
                    out.push(value);
                    rows.push((out, ann));
                }
                Ok(AnnRelation { schema, rows })
            }
            Plan::TopK { keys, count, input } => {
                let inp = self.node(input, init)?;
                let ki: Vec<(usize, Dir)> =
                    keys.iter().map(|(k, d)| Ok((inp.schema.resolve(k)?, *d))).collect::<Result<_>>()?;
                let rest: Vec<usize> = (0..inp.schema.len()).filter(|i| !ki.iter().any(|(k, _)| k == i)).collect();
                let mut order: Vec<usize> = (0..inp.rows.len()).collect();
                order.sort_by(|&x, &y| {
                    let (a, b) = (&inp.rows[x].0, &inp.rows[y].0);
                    for (k, d) in &ki {
                        let o = a[*k].cmp(&b[*k]);
                        let o = if *d == Dir::Desc { o.reverse() } else { o };
                        if o != Ordering::Equal {
                            return o;
                        }
                    }
                    for i in &rest {
                        let o = a[*i].cmp(&b[*i]);
                        if o != Ordering::Equal {
                            return o;
                        }
                    }
                    Ordering::Equal
                });
                order.truncate(usize::try_from(*count).unwrap_or(usize::MAX));
                // Emit in sorted order.
                let mut slots: Vec<Option<(Vec<Value>, A)>> = inp.rows.into_iter().map(Some).collect();
                let rows = order.iter().map(|&i| slots[i].take().unwrap()).collect();
                Ok(AnnRelation { schema: inp.schema, rows })
            }
        }
    }
}

fn concat<A: Annotation>(lv: &[Value], la: &A, rv: &[Value], ra: &A) -> (Vec<Value>, A) {
    let mut v = Vec::with_capacity(lv.len() + rv.len());
    v.extend_from_slice(lv);
    v.extend_from_slice(rv);
    let mut a = la.clone();
    a.merge(ra);
    (v, a)
}

fn aggregate<A: Annotation>(
    func: AggFunc,
    arg: Option<usize>,
    members: &[usize],
    rows: &[(Vec<Value>, A)],
) -> (Value, A) {
    let merged = || {
        let mut a = rows[members[0]].1.clone();
        for &m in &members[1..] {
            a.merge(&rows[m].1);
        }
        a
    };
    let vals = || members.iter().map(|&m| &rows[m].0[arg.unwrap()]).filter(|v| !v.is_null());
    match func {
        AggFunc::Count => {
            let n = match arg {
                None => members.len(),
                Some(_) => vals().count(),
            };
            (Value::Int(n as i64), merged())
        }
        AggFunc::Sum => {
            let mut acc: Option<Value> = None;
            for v in vals() {
                acc = Some(match acc {
                    None => v.clone(),
                    Some(a) => a.add(v),
                });
            }
            (acc.unwrap_or(Value::Null), merged())
        }
        AggFunc::Avg => {
            let mut sum = BigRational::from_integer(BigInt::from(0));
            let mut n = 0i64;
            for v in vals() {
                sum += v.to_rational().unwrap();
                n += 1;
            }
            let value = if n == 0 { Value::Null } else { Value::rat(sum / BigRational::from_integer(BigInt::from(n))) };
            (value, merged())
        }
        AggFunc::Min | AggFunc::Max => {
            let pick = |a: &Value, b: &Value| if func == AggFunc::Min { a < b } else { a > b };
            let mut best: Option<&Value> = None;
            for v in vals() {
                if best.is_none_or(|b| pick(v, b)) {
                    best = Some(v);
                }
            }
            let Some(best) = best.cloned() else {
                return (Value::Null, merged());
            };
            if !A::extreme_only() {
                return (best, merged());
            }
            // First row holding the extreme value under the full-tuple order.
            let a = arg.unwrap();
            let chosen = members
                .iter()
                .filter(|&&m| rows[m].0[a] == best)
                .min_by(|&&x, &&y| rows[x].0.cmp(&rows[y].0).then(x.cmp(&y)))
                .unwrap();
            (best, rows[*chosen].1.clone())
        }
    }
}

/// Expression with column references resolved to positions.
#[derive(Debug, Clone)]
pub(crate) enum BExpr {
    Col(usize),
    Lit(Value),
    Add(alloc::boxed::Box<BExpr>, alloc::boxed::Box<BExpr>),
    Sub(alloc::boxed::Box<BExpr>, alloc::boxed::Box<BExpr>),
    Mul(alloc::boxed::Box<BExpr>, alloc::boxed::Box<BExpr>),
    Neg(alloc::boxed::Box<BExpr>),
}

impl BExpr {
    pub(crate) fn bind(e: &Expr, s: &Schema) -> Result<BExpr> {
        use alloc::boxed::Box;
        Ok(match e {
            Expr::Col(c) => BExpr::Col(s.resolve(c)?),
            Expr::Lit(v) => BExpr::Lit(v.clone()),
            Expr::Param(k) => return Err(Error::UnboundParameter(*k)),
            Expr::Add(a, b) => BExpr::Add(Box::new(Self::bind(a, s)?), Box::new(Self::bind(b, s)?)),
            Expr::Sub(a, b) => BExpr::Sub(Box::new(Self::bind(a, s)?), Box::new(Self::bind(b, s)?)),
            Expr::Mul(a, b) => BExpr::Mul(Box::new(Self::bind(a, s)?), Box::new(Self::bind(b, s)?)),
            Expr::Neg(a) => BExpr::Neg(Box::new(Self::bind(a, s)?)),
        })
    }

    pub(crate) fn eval(&self, row: &[Value]) -> Value {
        match self {
            BExpr::Col(i) => row[*i].clone(),
            BExpr::Lit(v) => v.clone(),
            BExpr::Add(a, b) => a.eval(row).add(&b.eval(row)),
            BExpr::Sub(a, b) => a.eval(row).sub(&b.eval(row)),
            BExpr::Mul(a, b) => a.eval(row).mul(&b.eval(row)),
            BExpr::Neg(a) => a.eval(row).neg(),
        }
    }
}

/// Condition with resolved column references.
#[derive(Debug, Clone)]
pub(crate) enum BCond {
    Const(bool),
    Cmp(BExpr, super::plan::CmpOp, BExpr),
    And(alloc::boxed::Box<BCond>, alloc::boxed::Box<BCond>),
    Or(alloc::boxed::Box<BCond>, alloc::boxed::Box<BCond>),
    Not(alloc::boxed::Box<BCond>),
}

impl BCond {
    pub(crate) fn bind(c: &Cond, s: &Schema) -> Result<BCond> {
        use alloc::boxed::Box;
        Ok(match c {
            Cond::True => BCond::Const(true),
            Cond::False => BCond::Const(false),
            Cond::Cmp(l, op, r) => BCond::Cmp(BExpr::bind(l, s)?, *op, BExpr::bind(r, s)?),
            Cond::And(a, b) => BCond::And(Box::new(Self::bind(a, s)?), Box::new(Self::bind(b, s)?)),
            Cond::Or(a, b) => BCond::Or(Box::new(Self::bind(a, s)?), Box::new(Self::bind(b, s)?)),
            Cond::Not(a) => BCond::Not(Box::new(Self::bind(a, s)?)),
        })
    }

    /// Comparisons involving null or incomparable values are false.
    pub(crate) fn eval(&self, row: &[Value]) -> bool {
        match self {
            BCond::Const(b) => *b,
            BCond::Cmp(l, op, r) => {
                let (a, b) = (l.eval(row), r.eval(row));
                a.comparable(&b) && op.holds(a.cmp(&b))
            }
            BCond::And(a, b) => a.eval(row) && b.eval(row),
            BCond::Or(a, b) => a.eval(row) || b.eval(row),
            BCond::Not(a) => !a.eval(row),
        }
    }
}

/// Evaluates a condition over one tuple of the given schema.
pub fn eval_cond(c: &Cond, schema: &Schema, row: &[Value]) -> Result<bool> {
    Ok(BCond::bind(c, schema)?.eval(row))
}

/// Keeps, for each relation, only the rows listed in `lineage`.
pub fn restrict_to_lineage(db: &Database, lineage: &LineageSet) -> Database {
    let mut out = Database::new();
    for rel in db.relations.values() {
        out.insert(rel.filter(|r| lineage.contains(&RowRef { rel: rel.name.clone(), id: r.id })));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relalg::parse_query;
    use crate::value::Kind;
    use alloc::vec;

    pub(crate) fn cities() -> Database {
        let rows = [
            (4200, "Anchorage", "AK"),
            (6000, "San Diego", "CA"),
            (5000, "Sacramento", "CA"),
            (7000, "New York", "NY"),
            (2000, "Buffalo", "NY"),
            (3700, "Austin", "TX"),
            (2500, "Houston", "TX"),
        ];
        let rel = Relation::new(
            "cities",
            &[("popden", Kind::Int), ("city", Kind::Str), ("state", Kind::Str)],
            rows.iter().map(|(p, c, s)| vec![Value::Int(*p), Value::str(c), Value::str(s)]).collect(),
        )
        .unwrap();
        Database::new().with(rel)
    }

    fn run(q: &str) -> Relation {
        eval(&parse_query(q).unwrap(), &cities()).unwrap()
    }

    #[test]
    fn running_example_result() {
        let r = run("topk(avgden desc, 1, agg([state], avg(popden) as avgden, scan(cities)))");
        assert_eq!(r.sorted_tuples(), vec![vec![Value::str("CA"), Value::Int(5500)]]);
    }

    #[test]
    fn sums_per_state() {
        let r = run("agg([state], sum(popden) as totden, scan(cities))");
        let expect: Vec<Vec<Value>> = [("AK", 4200), ("CA", 11000), ("NY", 9000), ("TX", 6200)]
            .iter()
            .map(|(s, v)| vec![Value::str(s), Value::Int(*v)])
            .collect();
        assert_eq!(r.sorted_tuples(), expect);
    }

    #[test]
    fn select_true_is_identity() {
        let db = cities();
        let r = run("select(TRUE, scan(cities))");
        assert!(bag_eq(&r, db.get("cities").unwrap()));
    }

    #[test]
    fn lineage_of_running_example() {
        let p = parse_query("topk(avgden desc, 1, agg([state], avg(popden) as avgden, scan(cities)))").unwrap();
        let (_, lin) = eval_with_lineage(&p, &cities()).unwrap();
        let ids: Vec<u64> = whole_lineage(&lin).iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![2, 3]);
    }

    #[test]
    fn lineage_is_sufficient_for_having_query() {
        let db = cities();
        let p = parse_query("select(totden > 10000, agg([state], sum(popden) as totden, scan(cities)))").unwrap();
        let (r, lin) = eval_with_lineage(&p, &db).unwrap();
        let all = whole_lineage(&lin);
        assert_eq!(all.iter().map(|r| r.id).collect::<Vec<_>>(), vec![2, 3]);
        let small = restrict_to_lineage(&db, &all);
        let again = eval(&p, &small).unwrap();
        assert!(bag_eq(&r, &again));
        assert_eq!(again.sorted_tuples(), vec![vec![Value::str("CA"), Value::Int(11000)]]);
    }

    #[test]
    fn topk_keeps_duplicates_by_position() {
        let rel = Relation::new(
            "r",
            &[("a", Kind::Int), ("b", Kind::Int)],
            vec![vec![1.into(), 5.into()], vec![1.into(), 5.into()], vec![1.into(), 2.into()], vec![0.into(), 9.into()]],
        )
        .unwrap();
        let db = Database::new().with(rel);
        let r = eval(&parse_query("topk(a asc, 3, scan(r))").unwrap(), &db).unwrap();
        assert_eq!(
            r.rows.iter().map(|r| r.values.clone()).collect::<Vec<_>>(),
            vec![vec![0.into(), 9.into()], vec![1.into(), 2.into()], vec![1.into(), 5.into()]]
        );
        let r = eval(&parse_query("topk(a desc, 2, scan(r))").unwrap(), &db).unwrap();
        assert_eq!(r.sorted_tuples(), vec![vec![1.into(), 2.into()], vec![1.into(), 5.into()]]);
    }

    #[test]
    fn bag_multiplicities() {
        let rel = Relation::new("r", &[("a", Kind::Int)], vec![vec![1.into()], vec![1.into()], vec![2.into()]]).unwrap();
        let s = Relation::new("s", &[("b", Kind::Int)], vec![vec![7.into()], vec![7.into()]]).unwrap();
        let db = Database::new().with(rel).with(s);
        assert_eq!(eval(&parse_query("cross(scan(r), scan(s))").unwrap(), &db).unwrap().len(), 6);
        assert_eq!(eval(&parse_query("dedup(scan(r))").unwrap(), &db).unwrap().len(), 2);
        let u = eval(&parse_query("union(scan(r), scan(s))").unwrap(), &db).unwrap();
        assert_eq!(u.len(), 5);
        let agg = eval(&parse_query("agg([], count(*) as n, select(a > 5, scan(r)))").unwrap(), &db).unwrap();
        assert!(agg.is_empty());
    }

    #[test]
    fn unbound_parameter_is_an_error() {
        let p = parse_query("select(popden > $1, scan(cities))").unwrap();
        assert!(matches!(eval(&p, &cities()), Err(Error::UnboundParameter(1))));
    }

    #[test]
    fn nulls_compare_false_and_are_skipped() {
        let rel = Relation::new("r", &[("a", Kind::Int)], vec![vec![Value::Null], vec![3.into()]]).unwrap();
        let db = Database::new().with(rel);
        let r = eval(&parse_query("select(NOT a = 3, scan(r))").unwrap(), &db).unwrap();
        assert_eq!(r.len(), 1);
        let r = eval(&parse_query("select(a = 3 OR a <> 3, scan(r))").unwrap(), &db).unwrap();
        assert_eq!(r.len(), 1);
        let r = eval(&parse_query("agg([], count(a) as n, scan(r))").unwrap(), &db).unwrap();
        assert_eq!(r.rows[0].values[0], Value::Int(1));
        let r = eval(&parse_query("agg([], count(*) as n, scan(r))").unwrap(), &db).unwrap();
        assert_eq!(r.rows[0].values[0], Value::Int(2));
    }
}
