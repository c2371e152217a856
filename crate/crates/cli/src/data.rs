//! Data directory: one `NAME.csv` per relation next to a `NAME.schema.json`
//! sidecar declaring column names and kinds.

use std::fs;
use std::path::{Path, PathBuf};

use provsketch_core::relalg::{Database, Relation};
use provsketch_core::value::parse_number;
use provsketch_core::{Kind, Value};
use serde::{Deserialize, Serialize};

use crate::error::{io, usage, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDecl {
    pub name: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDecl {
    pub relation: String,
    pub columns: Vec<ColumnDecl>,
}

impl SchemaDecl {
    /// `name:kind,name:kind`.
    pub fn parse(relation: &str, text: &str) -> Result<SchemaDecl> {
        let mut columns = Vec::new();
        for part in text.split(',').map(str::trim) {
            let (name, kind) =
                part.split_once(':').ok_or_else(|| usage(format!("column `{part}` is not of the form name:kind")))?;
            columns.push(ColumnDecl { name: name.trim().to_string(), kind: kind.trim().to_string() });
        }
        let d = SchemaDecl { relation: relation.to_string(), columns };
        d.kinds()?;
        Ok(d)
    }

    pub fn kinds(&self) -> Result<Vec<Kind>> {
        self.columns
            .iter()
            .map(|c| Kind::parse(&c.kind).ok_or_else(|| usage(format!("unknown kind `{}` for column {}", c.kind, c.name))))
            .collect()
    }
}

fn cell(text: &str, kind: Kind) -> Option<Value> {
    match kind {
        Kind::Str => Some(Value::str(text)),
        Kind::Int => text.trim().parse::<i64>().ok().map(Value::Int),
        Kind::Rat => parse_number(text),
    }
}

/// Reads a CSV file whose header must list the declared columns in order.
/// Row ids follow file order starting at 1.
pub fn read_csv(path: &Path, decl: &SchemaDecl) -> Result<Relation> {
    let kinds = decl.kinds()?;
    let file = fs::File::open(path).map_err(io(path))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let bad = |line: u64, message: String| CliError::Data { path: path.to_path_buf(), line, message };
    let header = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let want: Vec<&str> = decl.columns.iter().map(|c| c.name.as_str()).collect();
    if names != want {
        return Err(bad(1, format!("header {} does not match schema {}", names.join(","), want.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(kinds.len());
        for ((text, kind), col) in rec.iter().zip(&kinds).zip(&decl.columns) {
            let v = cell(text, *kind).ok_or_else(|| bad(line, format!("`{text}` is not a valid {kind} for {}", col.name)))?;
            values.push(v);
        }
        rows.push(values);
    }
    let attrs: Vec<(&str, Kind)> = decl.columns.iter().map(|c| c.name.as_str()).zip(kinds).collect();
    Ok(Relation::new(&decl.relation, &attrs, rows)?)
}

fn sidecar(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.schema.json"))
}

/// Validates `csv`, copies it into `dir` as `NAME.csv` and writes the
/// sidecar. Fails if `NAME` is already present.
pub fn load(dir: &Path, csv: &Path, decl: &SchemaDecl) -> Result<Relation> {
    let name = &decl.relation;
    if sidecar(dir, name).exists() {
        return Err(usage(format!("relation `{name}` already exists in {}", dir.display())));
    }
    let rel = read_csv(csv, decl)?;
    fs::create_dir_all(dir).map_err(io(dir))?;
    let target = dir.join(format!("{name}.csv"));
    let same = match (fs::canonicalize(csv), fs::canonicalize(&target)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if !same {
        fs::copy(csv, &target).map_err(io(&target))?;
    }
    let path = sidecar(dir, name);
    let text = serde_json::to_string_pretty(decl).map_err(|source| CliError::Json { path: path.clone(), source })?;
    fs::write(&path, text + "\n").map_err(io(&path))?;
    Ok(rel)
}

/// Every relation with a sidecar in `dir`.
pub fn open(dir: &Path) -> Result<Database> {
    let mut db = Database::new();
    let entries = fs::read_dir(dir).map_err(io(dir))?;
    let mut sidecars: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".schema.json"))
        .collect();
    sidecars.sort();
    for path in sidecars {
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let decl: SchemaDecl = serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.clone(), source })?;
        if db.relations.contains_key(&decl.relation) {
            return Err(usage(format!("relation `{}` is declared twice", decl.relation)));
        }
        db.insert(read_csv(&dir.join(format!("{}.csv", decl.relation)), &decl)?);
    }
    Ok(db)
}
