//! Sketch catalog: a JSON-lines file with one record per line.
//!
//! Capture appends records. A use-count bump appends the updated record,
//! and the last record with a given id wins. `drop` rewrites the file with
//! only the live records. Every command holds an advisory lock on the file
//! for as long as it has it open: shared to read, exclusive to write.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use provsketch_core::partition::RangePartition;
use provsketch_core::reuse::{Binding, Template};
use provsketch_core::sketch::{BitSketch, ProvenanceSketch};
use provsketch_core::{Kind, Value};
use serde::{Deserialize, Serialize};

use crate::error::{io, usage, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: u64,
    pub template_id: String,
    /// Plan text with `$k` parameters.
    pub template: String,
    pub binding: String,
    pub relation: String,
    pub attribute: String,
    pub kind: String,
    /// Finite upper boundaries as literals.
    pub boundaries: Vec<String>,
    /// Fingerprint of the partition, hex.
    pub partition_ref: String,
    pub nbits: usize,
    pub bits: String,
    pub bits_hex: String,
    /// Logical clock: one more than the largest stamp in the catalog.
    pub captured_at: u64,
    pub use_count: u64,
    pub selectivity: f64,
    /// False when captured with `--force` on attributes not proven safe.
    pub safe: bool,
    pub topk_runtime_check: bool,
}

fn literal(text: &str) -> Result<Value> {
    let b = Binding::parse(text)?;
    match b.0.as_slice() {
        [v] => Ok(v.clone()),
        _ => Err(usage(format!("`{text}` is not a single literal"))),
    }
}

impl Record {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u64,
        t: &Template,
        b: &Binding,
        s: &ProvenanceSketch,
        captured_at: u64,
        selectivity: f64,
        safe: bool,
        topk_runtime_check: bool,
    ) -> Record {
        let p = &s.partition;
        Record {
            id,
            template_id: t.id().to_string(),
            template: t.plan().to_string(),
            binding: b.to_string(),
            relation: p.relation().to_string(),
            attribute: p.attribute().to_string(),
            kind: p.kind().name().to_string(),
            boundaries: p.uppers().iter().map(Value::literal).collect(),
            partition_ref: p.fingerprint_hex(),
            nbits: s.bits.len(),
            bits: s.bits.to_bits(),
            bits_hex: format!("0x{}", s.bits.to_hex()),
            captured_at,
            use_count: 0,
            selectivity,
            safe,
            topk_runtime_check,
        }
    }

    pub fn partition(&self) -> Result<RangePartition> {
        let kind = Kind::parse(&self.kind).ok_or_else(|| usage(format!("entry {}: unknown kind {}", self.id, self.kind)))?;
        let uppers = self.boundaries.iter().map(|b| literal(b)).collect::<Result<Vec<_>>>()?;
        let p = RangePartition::new(&self.relation, &self.attribute, kind, uppers, None)?;
        if p.fingerprint_hex() != self.partition_ref {
            return Err(usage(format!("entry {}: boundaries do not match partition_ref {}", self.id, self.partition_ref)));
        }
        Ok(p)
    }

    pub fn sketch(&self) -> Result<ProvenanceSketch> {
        let p = self.partition()?;
        let bits = BitSketch::from_bits(&self.bits, p.fingerprint())?;
        if format!("0x{}", bits.to_hex()) != self.bits_hex {
            return Err(usage(format!("entry {}: bits and bits_hex disagree", self.id)));
        }
        Ok(ProvenanceSketch::new(p, bits)?)
    }
}

pub struct Catalog {
    path: PathBuf,
    file: Option<File>,
    pub records: BTreeMap<u64, Record>,
}

impl Catalog {
    /// Opens for reading. A missing file is an empty catalog.
    pub fn read(path: &Path) -> Result<Catalog> {
        if !path.exists() {
            return Ok(Catalog { path: path.to_path_buf(), file: None, records: BTreeMap::new() });
        }
        let file = File::open(path).map_err(io(path))?;
        file.lock_shared().map_err(io(path))?;
        Catalog::from_file(path, file)
    }

    /// Opens for writing, creating the file if needed.
    pub fn write(path: &Path) -> Result<Catalog> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io(dir))?;
        }
        let file = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io(path))?;
        file.lock().map_err(io(path))?;
        Catalog::from_file(path, file)
    }

    fn from_file(path: &Path, file: File) -> Result<Catalog> {
        let mut records = BTreeMap::new();
        for (i, line) in BufReader::new(&file).lines().enumerate() {
            let line = line.map_err(io(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: Record = serde_json::from_str(&line)
                .map_err(|e| CliError::Data { path: path.to_path_buf(), line: i as u64 + 1, message: e.to_string() })?;
            records.insert(r.id, r);
        }
        Ok(Catalog { path: path.to_path_buf(), file: Some(file), records })
    }

    pub fn get(&self, id: u64) -> Result<&Record> {
        self.records.get(&id).ok_or_else(|| usage(format!("no catalog entry {id}")))
    }

    pub fn next_id(&self) -> u64 {
        self.records.keys().next_back().map_or(1, |k| k + 1)
    }

    pub fn next_stamp(&self) -> u64 {
        self.records.values().map(|r| r.captured_at).max().map_or(1, |k| k + 1)
    }

    fn writer(&mut self) -> Result<&mut File> {
        match self.file.as_mut() {
            Some(f) => Ok(f),
            None => Err(usage("catalog was opened read-only")),
        }
    }

    /// Appends `r`, replacing any earlier record with the same id.
    pub fn append(&mut self, r: Record) -> Result<()> {
        let line = serde_json::to_string(&r).map_err(|source| CliError::Json { path: self.path.clone(), source })?;
        let path = self.path.clone();
        let f = self.writer()?;
        writeln!(f, "{line}").map_err(io(&path))?;
        self.records.insert(r.id, r);
        Ok(())
    }

    /// Removes `id` and rewrites the file with one line per live record.
    pub fn drop_entry(&mut self, id: u64) -> Result<Record> {
        let r = self.records.remove(&id).ok_or_else(|| usage(format!("no catalog entry {id}")))?;
        let mut text = String::new();
        for rec in self.records.values() {
            text += &serde_json::to_string(rec).map_err(|source| CliError::Json { path: self.path.clone(), source })?;
            text.push('\n');
        }
        let path = self.path.clone();
        let f = self.writer()?;
        f.set_len(0).map_err(io(&path))?;
        f.seek(SeekFrom::Start(0)).map_err(io(&path))?;
        f.write_all(text.as_bytes()).map_err(io(&path))?;
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use provsketch_core::fixtures::{cities, f_state, Q2};
    use provsketch_core::relalg::parse_query;

    fn record(id: u64) -> Record {
        let db = cities();
        let (t, b) = Template::from_query(&parse_query(Q2).unwrap(), &db.schemas()).unwrap();
        let p = f_state();
        let bits = BitSketch::from_bits("1000", p.fingerprint()).unwrap();
        Record::new(id, &t, &b, &ProvenanceSketch::new(p, bits).unwrap(), id, 3.0 / 7.0, true, true)
    }

    #[test]
    fn records_round_trip() {
        let r = record(1);
        assert_eq!(r.bits_hex, "0x8");
        assert_eq!(r.sketch().unwrap().partition.uppers(), f_state().uppers());
        let back: Record = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let mut bad = r.clone();
        bad.boundaries.pop();
        assert!(bad.partition().is_err());
        bad = r;
        bad.bits_hex = "0x4".into();
        assert!(bad.sketch().is_err());
    }

    #[test]
    fn last_record_wins_and_drop_compacts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cat.jsonl");
        assert!(Catalog::read(&path).unwrap().records.is_empty());
        {
            let mut c = Catalog::write(&path).unwrap();
            c.append(record(1)).unwrap();
            c.append(record(2)).unwrap();
            let mut used = record(1);
            used.use_count = 5;
            c.append(used).unwrap();
        }
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
        let c = Catalog::read(&path).unwrap();
        assert_eq!(c.records[&1].use_count, 5);
        assert_eq!(c.next_id(), 3);
        drop(c);
        Catalog::write(&path).unwrap().drop_entry(1).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(Catalog::read(&path).unwrap().records.keys().copied().collect::<Vec<_>>(), vec![2]);
        assert!(Catalog::write(&path).unwrap().drop_entry(7).is_err());
    }
}
