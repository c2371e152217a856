//! Random databases, plans, partitions and templates shared by the
//! integration tests. Everything is driven by a seeded ChaCha generator so
//! failures reproduce from the printed seed.

#![allow(dead_code)]

use std::collections::BTreeMap;

use provsketch_core::partition::{RangePartition, Stats};
use provsketch_core::relalg::{
    analyze, eval, AggFunc, AggSpec, CmpOp, Cond, Database, Dir, Expr, Plan, ProjItem, Relation, Schema,
};
use provsketch_core::{Kind, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type R = ChaCha8Rng;

pub fn rng(seed: u64) -> R {
    ChaCha8Rng::seed_from_u64(seed)
}

const STRS: [&str; 5] = ["p", "q", "r", "s", "t"];

fn int_value(rng: &mut R, col: &str) -> Value {
    match col {
        // b and e may be negative so sums move both ways.
        "b" | "e" => Value::Int(rng.gen_range(-3..7)),
        _ => Value::Int(rng.gen_range(0..8)),
    }
}

/// `r(a int, b int, c str)` and `s(d int, e int, f str)` with up to
/// `max_rows` rows each.
pub fn database(rng: &mut R, max_rows: usize) -> Database {
    let mut db = Database::new();
    for (name, cols) in [("r", ["a", "b", "c"]), ("s", ["d", "e", "f"])] {
        let n = rng.gen_range(0..=max_rows);
        let rows = (0..n)
            .map(|_| {
                vec![
                    int_value(rng, cols[0]),
                    int_value(rng, cols[1]),
                    Value::str(STRS[rng.gen_range(0..STRS.len())]),
                ]
            })
            .collect();
        let attrs = [(cols[0], Kind::Int), (cols[1], Kind::Int), (cols[2], Kind::Str)];
        db.insert(Relation::new(name, &attrs, rows).unwrap());
    }
    db
}

pub struct PlanGen<'a> {
    pub schemas: &'a BTreeMap<String, Schema>,
    next: usize,
}

fn literal(rng: &mut R, kind: Kind) -> Value {
    match kind {
        Kind::Int => Value::Int(rng.gen_range(-2..10)),
        Kind::Rat => {
            if rng.gen_bool(0.5) {
                Value::Int(rng.gen_range(-2..10))
            } else {
                Value::rat(num_rational::BigRational::new((rng.gen_range(-4..20)).into(), 2.into()))
            }
        }
        Kind::Str => Value::str(["a", "p", "q", "r", "s", "t", "z"][rng.gen_range(0..7)]),
    }
}

fn op(rng: &mut R) -> CmpOp {
    [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge][rng.gen_range(0..6)]
}

impl<'a> PlanGen<'a> {
    pub fn new(schemas: &'a BTreeMap<String, Schema>) -> PlanGen<'a> {
        PlanGen { schemas, next: 0 }
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}{}", self.next)
    }

    fn schema(&self, p: &Plan) -> Option<Schema> {
        analyze(p, self.schemas).ok().map(|a| a.schema)
    }

    fn atom(&mut self, rng: &mut R, s: &Schema) -> Cond {
        let c = s.columns.choose(rng).unwrap();
        let lhs = Expr::col(&c.var());
        let roll = rng.gen_range(0..10);
        if roll < 2 {
            let others: Vec<_> = s.columns.iter().filter(|d| d.kind.comparable(c.kind) && d.var() != c.var()).collect();
            if let Some(d) = others.choose(rng) {
                return Cond::cmp(lhs, op(rng), Expr::col(&d.var()));
            }
        }
        if roll == 2 && c.kind.is_numeric() {
            let e = Expr::Add(Box::new(lhs), Box::new(Expr::Lit(literal(rng, Kind::Int))));
            return Cond::cmp(e, op(rng), Expr::Lit(literal(rng, c.kind)));
        }
        Cond::cmp(lhs, op(rng), Expr::Lit(literal(rng, c.kind)))
    }

    pub fn cond(&mut self, rng: &mut R, s: &Schema) -> Cond {
        let a = self.atom(rng, s);
        match rng.gen_range(0..10) {
            0..=4 => a,
            5..=7 => a.and(self.atom(rng, s)),
            8 => a.or(self.atom(rng, s)),
            _ => Cond::Not(Box::new(a)),
        }
    }

    fn unary(&mut self, rng: &mut R, input: Plan) -> Option<Plan> {
        let s = self.schema(&input)?;
        let p = match rng.gen_range(0..10) {
            0..=3 => Plan::select(self.cond(rng, &s), input),
            4 => {
                let mut cols: Vec<_> = s.columns.clone();
                cols.shuffle(rng);
                cols.truncate(rng.gen_range(1..=cols.len()));
                let mut items: Vec<ProjItem> =
                    cols.iter().map(|c| ProjItem { expr: Expr::col(&c.var()), alias: None }).collect();
                let nums: Vec<_> = s.columns.iter().filter(|c| c.kind == Kind::Int).collect();
                if nums.len() >= 2 && rng.gen_bool(0.3) {
                    let e = Expr::Add(Box::new(Expr::col(&nums[0].var())), Box::new(Expr::col(&nums[1].var())));
                    items.push(ProjItem { expr: e, alias: Some(self.fresh("x")) });
                }
                Plan::Project { items, input: Box::new(input) }
            }
            5 => Plan::Dedup(Box::new(input)),
            6..=8 => {
                let mut group: Vec<String> = Vec::new();
                for c in &s.columns {
                    if group.len() < 2 && rng.gen_bool(0.4) {
                        group.push(c.var());
                    }
                }
                let nums: Vec<_> = s.columns.iter().filter(|c| c.kind.is_numeric()).collect();
                let func = [AggFunc::Count, AggFunc::Sum, AggFunc::Avg, AggFunc::Min, AggFunc::Max][rng.gen_range(0..5)];
                let (func, arg) = match (func, nums.choose(rng)) {
                    (AggFunc::Count, _) | (_, None) => (AggFunc::Count, None),
                    (f, Some(c)) => (f, Some(c.var())),
                };
                let agg = AggSpec { func, arg, output: self.fresh("g") };
                let p = Plan::Aggregate { group, agg, input: Box::new(input) };
                // Aggregates usually sit under a having-style selection.
                if rng.gen_bool(0.5) {
                    let s2 = self.schema(&p)?;
                    return Some(Plan::select(self.cond(rng, &s2), p));
                }
                p
            }
            _ => {
                let mut keys = Vec::new();
                let n = rng.gen_range(1..=2.min(s.columns.len()));
                for c in s.columns.choose_multiple(rng, n) {
                    keys.push((c.var(), if rng.gen_bool(0.5) { Dir::Asc } else { Dir::Desc }));
                }
                Plan::TopK { keys, count: rng.gen_range(1..5), input: Box::new(input) }
            }
        };
        Some(p)
    }

    /// A plan over the relations in `rels` with at most `depth` operators
    /// above the scans.
    pub fn plan_over(&mut self, rng: &mut R, depth: usize, rels: &[&str]) -> Option<Plan> {
        if rels.len() == 2 {
            if depth == 0 {
                return None;
            }
            if depth >= 2 && rng.gen_bool(0.3) {
                let inner = self.plan_over(rng, depth - 1, rels)?;
                return self.unary(rng, inner);
            }
            return match rng.gen_range(0..3) {
                0 => {
                    let l = self.plan_over(rng, depth - 1, &rels[..1])?;
                    let r = self.plan_over(rng, depth - 1, &rels[1..])?;
                    Some(Plan::Cross(Box::new(l), Box::new(r)))
                }
                1 => {
                    let l = self.plan_over(rng, depth - 1, &rels[..1])?;
                    let r = self.plan_over(rng, depth - 1, &rels[1..])?;
                    let (ls, rs) = (self.schema(&l)?, self.schema(&r)?);
                    let lc = ls.columns.choose(rng)?;
                    let rc = rs.columns.iter().filter(|c| c.kind.comparable(lc.kind)).collect::<Vec<_>>();
                    let rc = rc.choose(rng)?;
                    Some(Plan::Join { left: lc.var(), right: rc.var(), l: Box::new(l), r: Box::new(r) })
                }
                _ => self.union(rng, depth),
            };
        }
        let rel = rels[0];
        if depth == 0 || rng.gen_bool(0.2) {
            return Some(Plan::scan(rel));
        }
        let inner = self.plan_over(rng, depth - 1, rels)?;
        self.unary(rng, inner)
    }

    fn shape_preserving(&mut self, rng: &mut R, rel: &str, depth: usize) -> Option<Plan> {
        let mut p = Plan::scan(rel);
        for _ in 0..rng.gen_range(0..depth.max(1)) {
            let s = self.schema(&p)?;
            p = match rng.gen_range(0..3) {
                0 => Plan::Dedup(Box::new(p)),
                1 => {
                    let c = s.columns.choose(rng).unwrap().var();
                    Plan::TopK { keys: vec![(c, Dir::Asc)], count: rng.gen_range(1..5), input: Box::new(p) }
                }
                _ => Plan::select(self.cond(rng, &s), p),
            };
        }
        Some(p)
    }

    fn union(&mut self, rng: &mut R, depth: usize) -> Option<Plan> {
        let shapes: [&[usize]; 4] = [&[0], &[0, 1], &[0, 2], &[0, 1, 2]];
        let shape = shapes[rng.gen_range(0..4)];
        let side = |g: &mut Self, rng: &mut R, rel: &str| -> Option<Plan> {
            let p = g.shape_preserving(rng, rel, depth.saturating_sub(2))?;
            let s = g.schema(&p)?;
            let items = shape.iter().map(|&i| ProjItem { expr: Expr::col(&s.columns[i].var()), alias: None }).collect();
            Some(Plan::Project { items, input: Box::new(p) })
        };
        let l = side(self, rng, "r")?;
        let r = side(self, rng, "s")?;
        Some(Plan::Union(Box::new(l), Box::new(r)))
    }

    /// A well-typed plan that evaluates on `db`: one relation most of the
    /// time, both relations otherwise. At most four operators deep.
    pub fn plan(&mut self, rng: &mut R, db: &Database) -> Plan {
        loop {
            let depth = rng.gen_range(1..=4);
            let rels: &[&str] = if rng.gen_bool(0.3) { &["r", "s"] } else if rng.gen_bool(0.8) { &["r"] } else { &["s"] };
            if let Some(p) = self.plan_over(rng, depth, rels) {
                if analyze(&p, self.schemas).is_ok() && eval(&p, db).is_ok() {
                    return p;
                }
            }
        }
    }
}

/// Random range partition with 2..=8 fragments over a column of `rel`.
pub fn partition(rng: &mut R, db: &Database, rel: &str) -> RangePartition {
    let r = db.get(rel).unwrap();
    let c = r.schema.columns.choose(rng).unwrap().clone();
    partition_on(rng, rel, &c.name, c.kind)
}

pub fn partition_on(rng: &mut R, rel: &str, attr: &str, kind: Kind) -> RangePartition {
    let k = rng.gen_range(2..=8);
    let mut domain: Vec<Value> = match kind {
        Kind::Str => STRS.iter().map(|s| Value::str(s)).collect(),
        _ => (-3..8).map(Value::Int).collect(),
    };
    domain.shuffle(rng);
    domain.truncate(k - 1);
    domain.sort();
    RangePartition::new(rel, attr, kind, domain, None).unwrap()
}

/// Replaces every selection literal by a fresh parameter and returns the
/// template plan with the original literals as its binding.
pub fn templatize(plan: &Plan) -> (Plan, Vec<Value>) {
    let (t, b) = provsketch_core::reuse::lift_literals(plan);
    (t, b.0)
}

/// Perturbs a binding: each value moves a little, strings may change.
pub fn perturb(rng: &mut R, b: &[Value]) -> Vec<Value> {
    b.iter()
        .map(|v| {
            if rng.gen_bool(0.4) {
                return v.clone();
            }
            match v {
                Value::Int(i) => Value::Int(i + rng.gen_range(-3..=3)),
                Value::Rat(_) => v.add(&Value::Int(rng.gen_range(-2..=2))),
                Value::Str(_) => literal(rng, Kind::Str),
                Value::Null => Value::Null,
            }
        })
        .collect()
}

pub fn stats(db: &Database) -> Stats {
    Stats::from_database(db)
}
