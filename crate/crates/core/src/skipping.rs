//! Using sketches: skip predicates, the sketch-use rewrite and evaluation
//! with scanned-row accounting.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::partition::RangePartition;
use crate::relalg::{eval, CmpOp, Cond, Database, Expr, Plan, Relation};
use crate::sketch::{BitSketch, ProvenanceSketch, SketchSet};
use crate::value::Value;

/// Maximal runs `[start, end]` of set bits.
pub fn runs(s: &BitSketch) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for i in s.ones_iter() {
        match out.last_mut() {
            Some((_, e)) if *e + 1 == i => *e = i,
            _ => out.push((i, i)),
        }
    }
    out
}

fn range_cond(col: &str, p: &RangePartition, start: usize, end: usize) -> Cond {
    let mut c = Cond::True;
    if start > 0 {
        c = c.and(Cond::cmp(Expr::col(col), CmpOp::Gt, Expr::Lit(p.uppers()[start - 1].clone())));
    }
    if end + 1 < p.len() {
        c = c.and(Cond::cmp(Expr::col(col), CmpOp::Le, Expr::Lit(p.uppers()[end].clone())));
    }
    c
}

/// Skip predicate over `rel.attr`: one range condition per maximal run of
/// set fragments. All ones gives `True`, all zeros `False`.
pub fn sketch_to_predicate(s: &ProvenanceSketch) -> Cond {
    let col = s.partition.column();
    runs(&s.bits).into_iter().fold(Cond::False, |acc, (a, b)| acc.or(range_cond(&col, &s.partition, a, b)))
}

/// Same predicate without merging: one disjunct per set fragment.
pub fn sketch_to_predicate_unmerged(s: &ProvenanceSketch) -> Cond {
    let col = s.partition.column();
    s.bits.ones_iter().fold(Cond::False, |acc, i| acc.or(range_cond(&col, &s.partition, i, i)))
}

/// Puts the skip predicate of each covered relation on top of its scan.
pub fn quse(plan: &Plan, set: &SketchSet) -> Plan {
    plan.transform(&mut |node| match node {
        Plan::Scan(r) => match set.get(&r) {
            Some(s) => Plan::select(sketch_to_predicate(s), Plan::Scan(r)),
            None => Plan::Scan(r),
        },
        n => n,
    })
}

/// Whether the fragment holding `v` is in the sketch (binary search over
/// the boundaries).
pub fn member(s: &ProvenanceSketch, v: &Value) -> Result<bool> {
    Ok(s.bits.get(s.partition.fragment_of(v)?))
}

/// Rows read from one relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScanCount {
    pub scanned: usize,
    pub total: usize,
}

impl ScanCount {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.scanned as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRun {
    pub result: Relation,
    pub scans: BTreeMap<String, ScanCount>,
}

impl SkippedRun {
    pub fn rows_scanned(&self) -> usize {
        self.scans.values().map(|c| c.scanned).sum()
    }
}

/// Rows of `r` whose fragment is in the sketch.
pub fn count_members(s: &ProvenanceSketch, r: &Relation) -> Result<usize> {
    let col = r.schema.resolve(s.partition.attribute())?;
    let mut n = 0;
    for row in &r.rows {
        if member(s, &row.values[col])? {
            n += 1;
        }
    }
    Ok(n)
}

/// Evaluates `quse(plan, set)`. A covered relation counts only the rows in
/// its sketched fragments as scanned; others count every row.
pub fn eval_skipping(plan: &Plan, db: &Database, set: &SketchSet) -> Result<SkippedRun> {
    let scanned = plan.scans();
    for s in set.iter() {
        if !scanned.iter().any(|r| r == s.relation()) {
            return Err(Error::Sketch(alloc::format!("relation {} is not accessed by the query", s.relation())));
        }
    }
    let result = eval(&quse(plan, set), db)?;
    let mut scans = BTreeMap::new();
    for r in scanned {
        let rel = db.get(&r)?;
        let n = match set.get(&r) {
            Some(s) => count_members(s, rel)?,
            None => rel.len(),
        };
        scans.insert(r, ScanCount { scanned: n, total: rel.len() });
    }
    Ok(SkippedRun { result, scans })
}

/// Row positions of one relation grouped by fragment, so that applying a
/// sketch reads only the rows of its fragments.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentIndex {
    relation: String,
    fingerprint: u64,
    rows: Vec<Vec<usize>>,
}

impl FragmentIndex {
    pub fn build(p: &RangePartition, r: &Relation) -> Result<FragmentIndex> {
        let col = r.schema.resolve(p.attribute())?;
        let mut rows = alloc::vec![Vec::new(); p.len()];
        for (i, row) in r.rows.iter().enumerate() {
            rows[p.fragment_of(&row.values[col])?].push(i);
        }
        Ok(FragmentIndex { relation: p.relation().into(), fingerprint: p.fingerprint(), rows })
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn fragment_sizes(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    /// Positions of the rows in the sketch's fragments, in relation order.
    pub fn positions(&self, s: &BitSketch) -> Result<Vec<usize>> {
        if s.partition_fingerprint() != self.fingerprint {
            return Err(Error::Sketch(alloc::format!("sketch and index of {} use different partitions", self.relation)));
        }
        let mut out: Vec<usize> = s.ones_iter().flat_map(|i| self.rows[i].iter().copied()).collect();
        out.sort_unstable();
        Ok(out)
    }
}

/// Same result and accounting as [`eval_skipping`], but sketched relations
/// are read through their fragment index instead of filtered row by row.
/// Every sketched relation needs an index.
pub fn eval_indexed(
    plan: &Plan,
    db: &Database,
    set: &SketchSet,
    indexes: &[&FragmentIndex],
) -> Result<SkippedRun> {
    let scanned = plan.scans();
    let mut restricted = Database::new();
    let mut scans = BTreeMap::new();
    for r in &scanned {
        let rel = db.get(r)?;
        match set.get(r) {
            Some(s) => {
                let idx = indexes.iter().find(|i| i.relation == *r).ok_or_else(|| Error::Sketch(alloc::format!("no fragment index for {r}")))?;
                let pos = idx.positions(&s.bits)?;
                scans.insert(r.clone(), ScanCount { scanned: pos.len(), total: rel.len() });
                let rows = pos.into_iter().map(|i| rel.rows[i].clone()).collect();
                restricted.insert(Relation { name: rel.name.clone(), schema: rel.schema.clone(), rows });
            }
            None => {
                scans.insert(r.clone(), ScanCount { scanned: rel.len(), total: rel.len() });
                restricted.insert(rel.clone());
            }
        }
    }
    for s in set.iter() {
        if !scanned.iter().any(|r| r == s.relation()) {
            return Err(Error::Sketch(alloc::format!("relation {} is not accessed by the query", s.relation())));
        }
    }
    Ok(SkippedRun { result: eval(plan, &restricted)?, scans })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{cities, f_popden, f_state, Q2};
    use crate::relalg::{bag_eq, parse_query};
    use crate::sketch::instance;

    fn ps(p: RangePartition, bits: &str) -> ProvenanceSketch {
        let b = BitSketch::from_bits(bits, p.fingerprint()).unwrap();
        ProvenanceSketch::new(p, b).unwrap()
    }

    #[test]
    fn merged_runs() {
        let c = sketch_to_predicate(&ps(f_state(), "1100"));
        assert_eq!(c.to_string(), "cities.state <= 'MI'");
        assert_eq!(sketch_to_predicate(&ps(f_state(), "1111")), Cond::True);
        assert_eq!(sketch_to_predicate(&ps(f_state(), "0000")), Cond::False);
        let two = sketch_to_predicate(&ps(f_state(), "1010"));
        assert!(matches!(two, Cond::Or(_, _)));
        assert_eq!(runs(&ps(f_state(), "1011").bits), alloc::vec![(0, 0), (2, 3)]);
        assert_eq!(sketch_to_predicate(&ps(f_state(), "0110")).to_string(), "(cities.state > 'DE' AND cities.state <= 'OK')");
    }

    #[test]
    fn merge_selects_same_rows() {
        let db = cities();
        for bits in ["1100", "1010", "0111", "1001", "0100"] {
            let s = ps(f_state(), bits);
            let a = eval(&Plan::select(sketch_to_predicate(&s), Plan::scan("cities")), &db).unwrap();
            let b = eval(&Plan::select(sketch_to_predicate_unmerged(&s), Plan::scan("cities")), &db).unwrap();
            assert!(bag_eq(&a, &b), "{bits}");
        }
    }

    #[test]
    fn membership() {
        let s = ps(f_state(), "1000");
        assert!(member(&s, &Value::str("CA")).unwrap());
        assert!(!member(&s, &Value::str("TX")).unwrap());
        let all = ps(f_state(), "1111");
        assert!(member(&all, &Value::str("ZZ")).unwrap());
        assert!(member(&s, &Value::Int(1)).is_err());
    }

    #[test]
    fn use_on_running_example() {
        let db = cities();
        let q = parse_query(Q2).unwrap();
        let safe = SketchSet::single(ps(f_state(), "1000"));
        let run = eval_skipping(&q, &db, &safe).unwrap();
        assert_eq!(run.result.sorted_tuples(), eval(&q, &db).unwrap().sorted_tuples());
        assert_eq!(run.scans["cities"], ScanCount { scanned: 3, total: 7 });

        let unsafe_set = SketchSet::single(ps(f_popden(), "01"));
        let run = eval_skipping(&q, &db, &unsafe_set).unwrap();
        assert_eq!(run.result.sorted_tuples(), alloc::vec![alloc::vec![Value::str("NY"), Value::Int(7000)]]);
        let inst = eval(&q, &instance(&unsafe_set, &db).unwrap()).unwrap();
        assert!(bag_eq(&run.result, &inst));

        assert_eq!(quse(&q, &SketchSet::new()), q);
    }

    #[test]
    fn indexed_matches_filtering() {
        let db = cities();
        let q = parse_query(Q2).unwrap();
        let rel = db.get("cities").unwrap();
        let idx = FragmentIndex::build(&f_state(), rel).unwrap();
        assert_eq!(idx.fragment_sizes(), alloc::vec![3, 0, 2, 2]);
        for bits in ["1000", "0011", "1111", "0000"] {
            let set = SketchSet::single(ps(f_state(), bits));
            let a = eval_skipping(&q, &db, &set).unwrap();
            let b = eval_indexed(&q, &db, &set, &[&idx]).unwrap();
            assert_eq!(a, b, "{bits}");
        }
        let other = SketchSet::single(ps(f_popden(), "01"));
        assert!(eval_indexed(&q, &db, &other, &[&idx]).is_err());
    }
}
