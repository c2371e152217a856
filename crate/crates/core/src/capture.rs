//! Sketch capture by annotated evaluation.
//!
//! Each base row of a partitioned relation starts with the index of its
//! fragment. Indices stay unencoded until two different ones meet, then
//! become bit vectors that are merged a word at a time. Selections and top-k
//! pass annotations through, products concatenate them, aggregation and
//! dedup merge the annotations of a group, except min/max which keep the
//! annotation of one row holding the extreme value. The annotations of all
//! result rows are merged at the end.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::partition::RangePartition;
use crate::relalg::{analyze, eval_annotated, AggFunc, Annotation, Database, Plan, Relation, Schema};
use crate::sketch::{BitSketch, ProvenanceSketch, SketchSet};

/// Annotation for one partition: a lone fragment index until the first
/// merge with a different fragment, then a bit vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Lambda {
    Singleton { index: usize, nbits: usize, partition: u64 },
    Bits(BitSketch),
}

impl Lambda {
    pub fn to_sketch(&self) -> BitSketch {
        match self {
            Lambda::Singleton { index, nbits, partition } => {
                BitSketch::singleton_raw(*nbits, *partition, *index).expect("index checked at init")
            }
            Lambda::Bits(b) => b.clone(),
        }
    }

    fn merge(&mut self, other: &Lambda) {
        match (&mut *self, other) {
            (Lambda::Singleton { index: a, .. }, Lambda::Singleton { index: b, .. }) if a == b => {}
            (Lambda::Bits(s), Lambda::Singleton { index, .. }) => {
                s.set(*index).expect("same partition");
            }
            (Lambda::Bits(s), Lambda::Bits(t)) => {
                s.or_assign(t).expect("same partition");
            }
            (Lambda::Singleton { .. }, _) => {
                let mut s = self.to_sketch();
                match other {
                    Lambda::Singleton { index, .. } => s.set(*index).expect("same partition"),
                    Lambda::Bits(t) => s.or_assign(t).expect("same partition"),
                }
                *self = Lambda::Bits(s);
            }
        }
    }
}

/// One optional annotation per partition in play. A slot is empty when the
/// row does not derive from that partition's relation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaptureAnn(pub Vec<Option<Lambda>>);

impl Annotation for CaptureAnn {
    fn merge(&mut self, other: &Self) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), None);
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            match (a.as_mut(), b) {
                (_, None) => {}
                (None, Some(b)) => *a = Some(b.clone()),
                (Some(a), Some(b)) => a.merge(b),
            }
        }
    }

    fn extreme_only() -> bool {
        true
    }
}

/// Annotates every row of `r` with its fragment in `p` (slot 0).
pub fn init_annotations(r: &Relation, p: &RangePartition) -> Result<Vec<(Vec<crate::Value>, CaptureAnn)>> {
    let col = r.schema.resolve(p.attribute())?;
    let (nbits, fp) = (p.len(), p.fingerprint());
    r.rows
        .iter()
        .map(|row| {
            let index = p.fragment_of(&row.values[col])?;
            Ok((row.values.clone(), CaptureAnn(alloc::vec![Some(Lambda::Singleton { index, nbits, partition: fp })])))
        })
        .collect()
}

/// Query result together with the captured sketches.
#[derive(Debug, Clone, PartialEq)]
pub struct Captured {
    pub result: Relation,
    pub sketches: SketchSet,
}

/// Evaluates `plan` with sketch annotations for the given partitions (one
/// per relation, each relation scanned exactly once by the plan).
pub fn capture(plan: &Plan, db: &Database, parts: &[RangePartition]) -> Result<Captured> {
    let scans = plan.scans();
    for (i, p) in parts.iter().enumerate() {
        let n = scans.iter().filter(|s| *s == p.relation()).count();
        if n != 1 {
            return Err(Error::Sketch(format!("relation {} is scanned {n} times; capture needs exactly one", p.relation())));
        }
        if parts[..i].iter().any(|q| q.relation() == p.relation()) {
            return Err(Error::Sketch(format!("two partitions on relation {}", p.relation())));
        }
    }
    let mut cols = Vec::with_capacity(parts.len());
    for p in parts {
        cols.push(db.get(p.relation())?.schema.resolve(p.attribute())?);
    }
    let k = parts.len();
    let fps: Vec<u64> = parts.iter().map(RangePartition::fingerprint).collect();
    let ann = eval_annotated(plan, db, &mut |rel: &Relation, row| {
        let mut slots = alloc::vec![None; k];
        for (i, p) in parts.iter().enumerate() {
            if p.relation() == &*rel.name {
                let index = p.fragment_of(&row.values[cols[i]])?;
                slots[i] = Some(Lambda::Singleton { index, nbits: p.len(), partition: fps[i] });
            }
        }
        Ok(CaptureAnn(slots))
    })?;
    let mut acc: Vec<BitSketch> = parts.iter().map(BitSketch::zeros).collect();
    for (_, a) in &ann.rows {
        for (i, slot) in a.0.iter().enumerate() {
            match slot {
                Some(Lambda::Singleton { index, .. }) => acc[i].set(*index)?,
                Some(Lambda::Bits(b)) => acc[i].or_assign(b)?,
                None => {}
            }
        }
    }
    let mut sketches = SketchSet::new();
    for (p, bits) in parts.iter().zip(acc) {
        sketches.insert(ProvenanceSketch::new(p.clone(), bits)?)?;
    }
    Ok(Captured { result: ann.strip(), sketches })
}

/// Textual form of the instrumented query: base accesses compute the
/// fragment column, aggregates and dedup fold sketches with `bitor_agg`,
/// and the root merges all result rows.
pub fn render_instrumented(plan: &Plan, db: &Database, parts: &[RangePartition]) -> Result<String> {
    let schemas = db.schemas();
    let names: Vec<String> = parts.iter().map(|p| format!("ps_{}_{}", p.relation(), p.attribute())).collect();
    let mut body = String::new();
    render(plan, &schemas, parts, &names, 1, &mut body)?;
    let folds: Vec<String> = names.iter().map(|n| format!("bitor_agg({n}) as {n}")).collect();
    Ok(format!("agg([], {},\n{body})", folds.join(", ")))
}

fn case_expr(p: &RangePartition) -> String {
    let a = p.attribute();
    if p.len() > 8 {
        let bounds: Vec<String> = p.uppers().iter().map(|u| u.literal()).collect();
        return format!("fragment_bsearch({a}, [{}])", bounds.join(", "));
    }
    let mut s = String::from("case");
    for (i, u) in p.uppers().iter().enumerate() {
        let _ = write!(s, " when {a} <= {} then {}", u.literal(), i + 1);
    }
    let _ = write!(s, " else {} end", p.len());
    s
}

fn live(plan: &Plan, parts: &[RangePartition], names: &[String]) -> Vec<String> {
    let scans = plan.scans();
    parts.iter().zip(names).filter(|(p, _)| scans.iter().any(|s| s == p.relation())).map(|(_, n)| n.clone()).collect()
}

fn cols(schema: &Schema) -> Vec<String> {
    schema.columns.iter().map(|c| c.var()).collect()
}

fn render(
    plan: &Plan,
    schemas: &alloc::collections::BTreeMap<String, Schema>,
    parts: &[RangePartition],
    names: &[String],
    depth: usize,
    out: &mut String,
) -> Result<()> {
    let pad = "  ".repeat(depth);
    let lam = live(plan, parts, names);
    match plan {
        Plan::Scan(r) => {
            let mut extra = Vec::new();
            for (p, n) in parts.iter().zip(names) {
                if p.relation() == r {
                    extra.push(format!("{} as {n}", case_expr(p)));
                }
            }
            if extra.is_empty() {
                let _ = write!(out, "{pad}scan({r})");
            } else {
                let mut items = cols(&schemas[r]);
                items.extend(extra);
                let _ = write!(out, "{pad}project([{}], scan({r}))", items.join(", "));
            }
        }
        Plan::Select { cond, input } => {
            let _ = writeln!(out, "{pad}select({cond},");
            render(input, schemas, parts, names, depth + 1, out)?;
            out.push(')');
        }
        Plan::Project { items, input } => {
            let mut its: Vec<String> = items
                .iter()
                .map(|i| match &i.alias {
                    Some(a) => format!("{} as {a}", i.expr),
                    None => i.expr.to_string(),
                })
                .collect();
            its.extend(lam.iter().cloned());
            let _ = writeln!(out, "{pad}project([{}],", its.join(", "));
            render(input, schemas, parts, names, depth + 1, out)?;
            out.push(')');
        }
        Plan::Dedup(p) => {
            let s = analyze(p, schemas)?.schema;
            let folds: Vec<String> = lam.iter().map(|n| format!("bitor_agg({n}) as {n}")).collect();
            let _ = writeln!(out, "{pad}agg([{}], {},", cols(&s).join(", "), folds.join(", "));
            render(p, schemas, parts, names, depth + 1, out)?;
            out.push(')');
        }
        Plan::Cross(a, b) | Plan::Union(a, b) => {
            let op = if matches!(plan, Plan::Cross(..)) { "cross" } else { "union" };
            let _ = writeln!(out, "{pad}{op}(");
            render(a, schemas, parts, names, depth + 1, out)?;
            out.push_str(",\n");
            render(b, schemas, parts, names, depth + 1, out)?;
            out.push(')');
        }
        Plan::Join { left, right, l, r } => {
            let _ = writeln!(out, "{pad}join({left} = {right},");
            render(l, schemas, parts, names, depth + 1, out)?;
            out.push_str(",\n");
            render(r, schemas, parts, names, depth + 1, out)?;
            out.push(')');
        }
        Plan::Aggregate { group, agg, input } => {
            let arg = agg.arg.clone().unwrap_or_else(|| "*".to_string());
            let f = format!("{}({arg}) as {}", agg.func.name(), agg.output);
            let folds: Vec<String> = lam
                .iter()
                .map(|n| match agg.func {
                    AggFunc::Min | AggFunc::Max => format!("{n} of first row with {}({arg}) as {n}", agg.func.name()),
                    _ => format!("bitor_agg({n}) as {n}"),
                })
                .collect();
            let mut items = alloc::vec![f];
            items.extend(folds);
            let _ = writeln!(out, "{pad}agg([{}], {},", group.join(", "), items.join(", "));
            render(input, schemas, parts, names, depth + 1, out)?;
            out.push(')');
        }
        Plan::TopK { keys, count, input } => {
            let ks: Vec<String> = keys
                .iter()
                .map(|(k, d)| format!("{k} {}", if *d == crate::relalg::Dir::Asc { "asc" } else { "desc" }))
                .collect();
            let _ = writeln!(out, "{pad}topk([{}], {count},", ks.join(", "));
            render(input, schemas, parts, names, depth + 1, out)?;
            out.push(')');
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{cities, cities_relation, f_popden, f_state, Q2};
    use crate::relalg::{eval, parse_query};
    use crate::sketch::accurate_sketch;

    fn bits(rows: &[(Vec<crate::Value>, CaptureAnn)]) -> Vec<String> {
        rows.iter().map(|(_, a)| a.0[0].as_ref().unwrap().to_sketch().to_bits()).collect()
    }

    #[test]
    fn init_on_state_and_popden() {
        let r = cities_relation();
        assert_eq!(bits(&init_annotations(&r, &f_state()).unwrap()), ["1000", "1000", "1000", "0010", "0010", "0001", "0001"]);
        assert_eq!(bits(&init_annotations(&r, &f_popden()).unwrap()), ["01", "01", "01", "01", "10", "10", "10"]);
        let empty = r.filter(|_| false);
        assert!(init_annotations(&empty, &f_state()).unwrap().is_empty());
    }

    #[test]
    fn running_example_capture() {
        let q = parse_query(Q2).unwrap();
        let c = capture(&q, &cities(), &[f_state()]).unwrap();
        assert_eq!(c.sketches.get("cities").unwrap().bits.to_bits(), "1000");
        assert!(crate::relalg::bag_eq(&c.result, &eval(&q, &cities()).unwrap()));
    }

    #[test]
    fn capture_matches_oracle_on_simple_plans() {
        for text in ["select(state = 'CA', scan(cities))", "scan(cities)", "select(popden > 4500, scan(cities))"] {
            let q = parse_query(text).unwrap();
            for p in [f_state(), f_popden()] {
                let c = capture(&q, &cities(), std::slice::from_ref(&p)).unwrap();
                assert_eq!(c.sketches.get("cities").unwrap().bits, accurate_sketch(&q, &cities(), &p).unwrap(), "{text}");
            }
        }
        let q = parse_query("scan(cities)").unwrap();
        assert_eq!(capture(&q, &cities(), &[f_state()]).unwrap().sketches.get("cities").unwrap().bits.to_bits(), "1011");
    }

    #[test]
    fn min_keeps_one_row() {
        let q = parse_query("agg([], min(popden) as m, scan(cities))").unwrap();
        let c = capture(&q, &cities(), &[f_popden()]).unwrap();
        assert_eq!(c.sketches.get("cities").unwrap().bits.to_bits(), "10");
        assert_eq!(accurate_sketch(&q, &cities(), &f_popden()).unwrap().to_bits(), "11");
    }

    #[test]
    fn delayed_encoding() {
        let mut a = CaptureAnn(alloc::vec![Some(Lambda::Singleton { index: 1, nbits: 4, partition: 9 })]);
        a.merge(&a.clone());
        assert!(matches!(a.0[0], Some(Lambda::Singleton { .. })));
        a.merge(&CaptureAnn(alloc::vec![Some(Lambda::Singleton { index: 3, nbits: 4, partition: 9 })]));
        assert_eq!(a.0[0].as_ref().unwrap().to_sketch().to_bits(), "0101");
    }

    #[test]
    fn rejects_missing_or_repeated_relation() {
        let q = parse_query("scan(cities)").unwrap();
        let other = RangePartition::whole("r", "a", crate::Kind::Int);
        assert!(capture(&q, &cities(), &[other]).is_err());
        assert!(capture(&q, &cities(), &[f_state(), f_popden()]).is_err());
    }

    #[test]
    fn instrumented_text() {
        let q = parse_query(Q2).unwrap();
        let t = render_instrumented(&q, &cities(), &[f_state()]).unwrap();
        assert!(t.starts_with("agg([], bitor_agg(ps_cities_state) as ps_cities_state,"));
        assert!(t.contains("case when state <= 'DE' then 1 when state <= 'MI' then 2 when state <= 'OK' then 3 else 4 end"));
    }
}
