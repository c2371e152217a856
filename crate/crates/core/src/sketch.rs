//! Bit-vector provenance sketches, sketch instances and the lineage-based
//! accurate sketch.
//!
//! Bit `i` (0-based fragment index) is stored in word `i / 64` at bit
//! `i % 64`. Printed form puts fragment 0 leftmost: `1000` is `{f1}` of a
//! four-fragment partition.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::partition::RangePartition;
use crate::relalg::{bag_eq, eval, eval_with_lineage, whole_lineage, Database, Plan};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitSketch {
    nbits: usize,
    words: Vec<u64>,
    partition: u64,
}

fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

impl BitSketch {
    /// Empty sketch over a partition with `nbits` fragments and the given
    /// partition fingerprint.
    pub fn zeros_raw(nbits: usize, partition: u64) -> BitSketch {
        BitSketch { nbits, words: vec![0; words_for(nbits)], partition }
    }

    pub fn zeros(p: &RangePartition) -> BitSketch {
        BitSketch::zeros_raw(p.len(), p.fingerprint())
    }

    pub fn ones(p: &RangePartition) -> BitSketch {
        let mut s = BitSketch::zeros(p);
        for i in 0..s.nbits {
            s.words[i / 64] |= 1 << (i % 64);
        }
        s
    }

    /// Exactly fragment `i` (0-based).
    pub fn singleton(p: &RangePartition, i: usize) -> Result<BitSketch> {
        BitSketch::singleton_raw(p.len(), p.fingerprint(), i)
    }

    pub fn singleton_raw(nbits: usize, partition: u64, i: usize) -> Result<BitSketch> {
        let mut s = BitSketch::zeros_raw(nbits, partition);
        s.set(i)?;
        Ok(s)
    }

    pub fn from_indices(p: &RangePartition, idx: impl IntoIterator<Item = usize>) -> Result<BitSketch> {
        let mut s = BitSketch::zeros(p);
        for i in idx {
            s.set(i)?;
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.nbits
    }

    pub fn is_empty(&self) -> bool {
        self.nbits == 0
    }

    pub fn partition_fingerprint(&self) -> u64 {
        self.partition
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.nbits && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize) -> Result<()> {
        if i >= self.nbits {
            return Err(Error::Sketch(format!("fragment {} out of range 1..={}", i + 1, self.nbits)));
        }
        self.words[i / 64] |= 1 << (i % 64);
        Ok(())
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.count_ones() == self.nbits
    }

    /// Set fragment indices in increasing order.
    pub fn ones_iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            core::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }

    fn check_same(&self, other: &BitSketch) -> Result<()> {
        if self.nbits != other.nbits || self.partition != other.partition {
            return Err(Error::Sketch(format!(
                "sketches over different partitions ({} bits, {:016x} vs {} bits, {:016x})",
                self.nbits, self.partition, other.nbits, other.partition
            )));
        }
        Ok(())
    }

    /// In-place union, one word at a time.
    pub fn or_assign(&mut self, other: &BitSketch) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
        Ok(())
    }

    pub fn bitor(&self, other: &BitSketch) -> Result<BitSketch> {
        let mut s = self.clone();
        s.or_assign(other)?;
        Ok(s)
    }

    pub fn is_subset(&self, other: &BitSketch) -> Result<bool> {
        self.check_same(other)?;
        Ok(self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0))
    }

    /// Binary string, fragment 0 first.
    pub fn to_bits(&self) -> String {
        (0..self.nbits).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }

    pub fn from_bits(bits: &str, partition: u64) -> Result<BitSketch> {
        let mut s = BitSketch::zeros_raw(bits.len(), partition);
        for (i, c) in bits.chars().enumerate() {
            match c {
                '1' => s.set(i)?,
                '0' => {}
                _ => return Err(Error::Sketch(format!("bad bit character `{c}`"))),
            }
        }
        Ok(s)
    }

    /// Hex digits, four fragments per digit from the left; the last digit is
    /// padded with zero bits on the right.
    pub fn to_hex(&self) -> String {
        let mut out = String::with_capacity(self.nbits.div_ceil(4));
        for d in 0..self.nbits.div_ceil(4) {
            let mut nib = 0u32;
            for k in 0..4 {
                if self.get(d * 4 + k) {
                    nib |= 8 >> k;
                }
            }
            out.push(char::from_digit(nib, 16).unwrap());
        }
        out
    }

    pub fn from_hex(hex: &str, nbits: usize, partition: u64) -> Result<BitSketch> {
        let hex = hex.strip_prefix("0x").unwrap_or(hex);
        if hex.len() != nbits.div_ceil(4) {
            return Err(Error::Sketch(format!("{} hex digits for {nbits} bits", hex.len())));
        }
        let mut s = BitSketch::zeros_raw(nbits, partition);
        for (d, c) in hex.chars().enumerate() {
            let nib = c.to_digit(16).ok_or_else(|| Error::Sketch(format!("bad hex digit `{c}`")))?;
            for k in 0..4 {
                if nib & (8 >> k) != 0 {
                    let i = d * 4 + k;
                    if i >= nbits {
                        return Err(Error::Sketch("nonzero padding bits".to_string()));
                    }
                    s.set(i)?;
                }
            }
        }
        Ok(s)
    }

    /// Heap bytes used by the bit words.
    pub fn byte_size(&self) -> usize {
        self.words.len() * 8
    }
}

impl fmt::Display for BitSketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bits())
    }
}

/// A sketch together with the partition it ranges over.
#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceSketch {
    pub partition: RangePartition,
    pub bits: BitSketch,
}

impl ProvenanceSketch {
    pub fn new(partition: RangePartition, bits: BitSketch) -> Result<ProvenanceSketch> {
        if bits.len() != partition.len() || bits.partition_fingerprint() != partition.fingerprint() {
            return Err(Error::Sketch(format!("sketch does not belong to partition on {}", partition.column())));
        }
        Ok(ProvenanceSketch { partition, bits })
    }

    pub fn relation(&self) -> &str {
        self.partition.relation()
    }
}

/// At most one sketch per relation, keyed by relation name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SketchSet {
    pub sketches: BTreeMap<String, ProvenanceSketch>,
}

impl SketchSet {
    pub fn new() -> SketchSet {
        SketchSet::default()
    }

    pub fn insert(&mut self, s: ProvenanceSketch) -> Result<()> {
        let rel = s.relation().to_string();
        if self.sketches.contains_key(&rel) {
            return Err(Error::Sketch(format!("relation {rel} already has a sketch")));
        }
        self.sketches.insert(rel, s);
        Ok(())
    }

    pub fn single(s: ProvenanceSketch) -> SketchSet {
        let mut set = SketchSet::new();
        set.insert(s).unwrap();
        set
    }

    pub fn get(&self, rel: &str) -> Option<&ProvenanceSketch> {
        self.sketches.get(rel)
    }

    pub fn is_empty(&self) -> bool {
        self.sketches.is_empty()
    }

    pub fn len(&self) -> usize {
        self.sketches.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProvenanceSketch> {
        self.sketches.values()
    }
}

/// Sketch whose fragments are exactly those holding whole-query lineage.
pub fn accurate_sketch(plan: &Plan, db: &Database, p: &RangePartition) -> Result<BitSketch> {
    let set = accurate_sketches(plan, db, core::slice::from_ref(p))?;
    Ok(set.sketches.into_values().next().unwrap().bits)
}

/// Accurate sketches for several partitions (distinct relations) from one
/// lineage evaluation.
pub fn accurate_sketches(plan: &Plan, db: &Database, parts: &[RangePartition]) -> Result<SketchSet> {
    let scanned = plan.scans();
    for p in parts {
        if !scanned.iter().any(|s| s == p.relation()) {
            return Err(Error::Sketch(format!("relation {} is not accessed by the query", p.relation())));
        }
    }
    let (_, lineage) = eval_with_lineage(plan, db)?;
    let all = whole_lineage(&lineage);
    let mut out = SketchSet::new();
    for p in parts {
        let rel = db.get(p.relation())?;
        let col = rel.schema.resolve(p.attribute())?;
        let by_id: BTreeMap<u64, usize> = rel.rows.iter().enumerate().map(|(i, row)| (row.id, i)).collect();
        let mut bits = BitSketch::zeros(p);
        for r in all.iter().filter(|r| &*r.rel == p.relation()) {
            let row = by_id
                .get(&r.id)
                .map(|i| &rel.rows[*i])
                .ok_or_else(|| Error::Invalid(format!("lineage row {r} missing")))?;
            bits.set(p.fragment_of(&row.values[col])?)?;
        }
        out.insert(ProvenanceSketch::new(p.clone(), bits)?)?;
    }
    Ok(out)
}

/// The database restricted to rows whose fragment is in the sketch, for
/// every sketched relation.
pub fn instance(set: &SketchSet, db: &Database) -> Result<Database> {
    let mut out = db.clone();
    for s in set.iter() {
        let rel = db.get(s.relation())?;
        let col = rel.schema.resolve(s.partition.attribute())?;
        let mut err = None;
        let kept = rel.filter(|row| match s.partition.fragment_of(&row.values[col]) {
            Ok(i) => s.bits.get(i),
            Err(e) => {
                err = Some(e);
                false
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        out.insert(kept);
    }
    Ok(out)
}

/// Whether evaluating over the sketch instance reproduces the full result.
pub fn empirically_safe(plan: &Plan, db: &Database, set: &SketchSet) -> Result<bool> {
    let full = eval(plan, db)?;
    let inst = eval(plan, &instance(set, db)?)?;
    Ok(bag_eq(&full, &inst))
}
