//! Range partitions over one attribute and the statistics used to build them.
//!
//! Fragment `i` (0-based) holds values `v` with `u[i-1] < v <= u[i]`, where
//! `u[-1] = -inf` and the last upper bound is `+inf`. Only the finite upper
//! bounds are stored.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::hash::Hasher;

use crate::error::{Error, Result};
use crate::relalg::{Database, Relation};
use crate::value::{Kind, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangePartition {
    relation: String,
    attribute: String,
    kind: Kind,
    uppers: Vec<Value>,
    labels: Vec<String>,
}

impl RangePartition {
    /// Builds a partition from its finite upper boundaries (strictly
    /// increasing). `labels` are cosmetic; defaults describe the interval.
    pub fn new(
        relation: &str,
        attribute: &str,
        kind: Kind,
        uppers: Vec<Value>,
        labels: Option<Vec<String>>,
    ) -> Result<RangePartition> {
        for u in &uppers {
            let ok = match u.kind() {
                Some(k) => k.comparable(kind),
                None => false,
            };
            if !ok {
                return Err(Error::Partition(format!("boundary {} does not match kind {kind}", u.literal())));
            }
        }
        if uppers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Partition("boundaries must be strictly increasing".to_string()));
        }
        let n = uppers.len() + 1;
        let labels = match labels {
            Some(l) if l.len() == n => l,
            Some(l) => {
                return Err(Error::Partition(format!("{} labels for {n} fragments", l.len())));
            }
            None => (0..n)
                .map(|i| {
                    let lo = if i == 0 { "-inf".to_string() } else { uppers[i - 1].literal() };
                    let hi = if i + 1 == n { "+inf".to_string() } else { uppers[i].literal() };
                    format!("({lo}, {hi}]")
                })
                .collect(),
        };
        Ok(RangePartition { relation: relation.to_string(), attribute: attribute.to_string(), kind, uppers, labels })
    }

    /// Single fragment covering the whole domain.
    pub fn whole(relation: &str, attribute: &str, kind: Kind) -> RangePartition {
        RangePartition::new(relation, attribute, kind, Vec::new(), None).unwrap()
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    /// Qualified attribute, `rel.attr`.
    pub fn column(&self) -> String {
        format!("{}.{}", self.relation, self.attribute)
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// Finite upper boundaries; the last fragment is unbounded above.
    pub fn uppers(&self) -> &[Value] {
        &self.uppers
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of fragments.
    pub fn len(&self) -> usize {
        self.uppers.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lower (exclusive) and upper (inclusive) bound of fragment `i`;
    /// `None` stands for an infinite end.
    pub fn bounds(&self, i: usize) -> (Option<&Value>, Option<&Value>) {
        let lo = if i == 0 { None } else { self.uppers.get(i - 1) };
        (lo, self.uppers.get(i))
    }

    /// Fragment holding `v`, by binary search over the boundaries. Nulls sort
    /// below every value and land in fragment 0.
    pub fn fragment_of(&self, v: &Value) -> Result<usize> {
        if let Some(k) = v.kind() {
            if !k.comparable(self.kind) {
                return Err(Error::Partition(format!(
                    "value {} is not comparable with partition kind {}",
                    v.literal(),
                    self.kind
                )));
            }
        }
        Ok(self.uppers.partition_point(|u| u < v))
    }

    /// Row ids of `r` per fragment.
    pub fn fragment_rows(&self, r: &Relation) -> Result<Vec<Vec<u64>>> {
        let col = r.schema.resolve(&self.attribute)?;
        let mut out = alloc::vec![Vec::new(); self.len()];
        for row in &r.rows {
            out[self.fragment_of(&row.values[col])?].push(row.id);
        }
        Ok(out)
    }

    /// Stable content fingerprint (FNV-1a over the canonical rendering).
    pub fn fingerprint(&self) -> u64 {
        let mut h = fnv::FnvHasher::default();
        h.write(self.relation.as_bytes());
        h.write(&[0]);
        h.write(self.attribute.as_bytes());
        h.write(&[0]);
        h.write(self.kind.name().as_bytes());
        for u in &self.uppers {
            h.write(&[0]);
            h.write(u.literal().as_bytes());
        }
        h.finish()
    }

    pub fn fingerprint_hex(&self) -> String {
        format!("{:016x}", self.fingerprint())
    }
}

/// Statistics of one column: non-null values in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub kind: Kind,
    pub min: Option<Value>,
    pub max: Option<Value>,
    pub sorted: Vec<Value>,
    pub distinct: usize,
}

impl ColumnStats {
    pub fn from_values(kind: Kind, mut values: Vec<Value>) -> ColumnStats {
        values.retain(|v| !v.is_null());
        values.sort();
        let distinct = if values.is_empty() { 0 } else { 1 + values.windows(2).filter(|w| w[0] != w[1]).count() };
        ColumnStats { kind, min: values.first().cloned(), max: values.last().cloned(), sorted: values, distinct }
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

/// Statistics keyed by `(relation, attribute)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stats {
    pub columns: BTreeMap<(String, String), ColumnStats>,
}

impl Stats {
    pub fn from_database(db: &Database) -> Stats {
        let mut s = Stats::default();
        for rel in db.relations.values() {
            s.add_relation(rel);
        }
        s
    }

    pub fn add_relation(&mut self, rel: &Relation) {
        for (i, c) in rel.schema.columns.iter().enumerate() {
            let values = rel.rows.iter().map(|r| r.values[i].clone()).collect();
            self.columns.insert((rel.name.to_string(), c.name.clone()), ColumnStats::from_values(c.kind, values));
        }
    }

    pub fn get(&self, relation: &str, attribute: &str) -> Option<&ColumnStats> {
        self.columns.get(&(relation.to_string(), attribute.to_string()))
    }
}

/// Equi-depth partition: boundaries at sample quantiles so that fragment
/// sizes differ by at most one on distinct data. With fewer distinct values
/// than `k`, one fragment per distinct value.
pub fn build_equi_depth(stats: &Stats, relation: &str, attribute: &str, k: usize) -> Result<RangePartition> {
    let cs = stats
        .get(relation, attribute)
        .ok_or_else(|| Error::Partition(format!("no statistics for {relation}.{attribute}")))?;
    equi_depth_from(cs, relation, attribute, k)
}

pub fn equi_depth_from(cs: &ColumnStats, relation: &str, attribute: &str, k: usize) -> Result<RangePartition> {
    if k == 0 {
        return Err(Error::Partition("fragment count must be positive".to_string()));
    }
    if cs.is_empty() {
        return Err(Error::Partition(format!("empty statistics for {relation}.{attribute}")));
    }
    let v = &cs.sorted;
    let mut uppers: Vec<Value> = Vec::new();
    if cs.distinct < k {
        for w in v.windows(2) {
            if w[0] != w[1] {
                uppers.push(w[0].clone());
            }
        }
    } else {
        let n = v.len();
        for i in 1..k {
            let idx = i * n / k;
            if idx == 0 {
                continue;
            }
            let u = &v[idx - 1];
            if uppers.last().is_none_or(|l| l < u) {
                uppers.push(u.clone());
            }
        }
    }
    // The largest value needs no finite boundary.
    if uppers.last() == v.last() {
        uppers.pop();
    }
    RangePartition::new(relation, attribute, cs.kind, uppers, None)
}
