use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::value::{Kind, Value};

/// A column. Base columns are qualified by their relation, computed columns
/// (projection aliases, aggregate outputs) are not.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Column {
    pub qual: Option<String>,
    pub name: String,
    pub kind: Kind,
}

impl Column {
    pub fn base(rel: &str, name: &str, kind: Kind) -> Column {
        Column { qual: Some(rel.to_string()), name: name.to_string(), kind }
    }

    pub fn computed(name: &str, kind: Kind) -> Column {
        Column { qual: None, name: name.to_string(), kind }
    }

    /// Identity of the column inside one plan; also its logic variable name.
    pub fn var(&self) -> String {
        match &self.qual {
            Some(q) => format!("{q}.{}", self.name),
            None => self.name.clone(),
        }
    }

    fn matches(&self, reference: &str) -> bool {
        match reference.split_once('.') {
            Some((q, n)) => self.qual.as_deref() == Some(q) && self.name == n,
            None => self.name == reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    pub columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Schema {
        Schema { columns }
    }

    /// Schema of a stored relation: every attribute qualified by `rel`.
    pub fn for_relation(rel: &str, attrs: &[(&str, Kind)]) -> Schema {
        Schema { columns: attrs.iter().map(|(n, k)| Column::base(rel, n, *k)).collect() }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Resolves `name` or `rel.name` to a column position.
    pub fn resolve(&self, reference: &str) -> Result<usize> {
        let mut found = None;
        for (i, c) in self.columns.iter().enumerate() {
            if c.matches(reference) {
                if found.is_some() {
                    return Err(Error::AmbiguousAttribute(reference.to_string()));
                }
                found = Some(i);
            }
        }
        found.ok_or_else(|| Error::UnknownAttribute(reference.to_string()))
    }

    pub fn concat(&self, other: &Schema) -> Schema {
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        Schema { columns }
    }

    pub fn kinds(&self) -> Vec<Kind> {
        self.columns.iter().map(|c| c.kind).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub id: u64,
    pub values: Vec<Value>,
}

/// A named bag of rows. Row ids are unique within the relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: Arc<str>,
    pub schema: Schema,
    pub rows: Vec<Row>,
}

impl Relation {
    /// Builds a stored relation; row ids are 1, 2, ... in the given order.
    pub fn new(name: &str, attrs: &[(&str, Kind)], rows: Vec<Vec<Value>>) -> Result<Relation> {
        let schema = Schema::for_relation(name, attrs);
        let mut seen = alloc::collections::BTreeSet::new();
        for (n, _) in attrs {
            if !seen.insert(*n) {
                return Err(Error::Schema(format!("duplicate attribute `{n}` in `{name}`")));
            }
        }
        let mut out = Vec::with_capacity(rows.len());
        for (i, values) in rows.into_iter().enumerate() {
            check_row(&schema, &values)?;
            out.push(Row { id: i as u64 + 1, values });
        }
        Ok(Relation { name: Arc::from(name), schema, rows: out })
    }

    /// Builds a relation with explicit row ids.
    pub fn with_rows(name: &str, schema: Schema, rows: Vec<Row>) -> Result<Relation> {
        let mut ids = alloc::collections::BTreeSet::new();
        for r in &rows {
            check_row(&schema, &r.values)?;
            if !ids.insert(r.id) {
                return Err(Error::Schema(format!("duplicate row id {} in `{name}`", r.id)));
            }
        }
        Ok(Relation { name: Arc::from(name), schema, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Same relation keeping only rows accepted by `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&Row) -> bool) -> Relation {
        Relation {
            name: self.name.clone(),
            schema: self.schema.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    /// Values of one attribute in row order.
    pub fn column(&self, attr: &str) -> Result<Vec<Value>> {
        let i = self.schema.resolve(attr)?;
        Ok(self.rows.iter().map(|r| r.values[i].clone()).collect())
    }

    /// Bag of tuples, sorted; convenient for comparisons.
    pub fn sorted_tuples(&self) -> Vec<Vec<Value>> {
        let mut t: Vec<Vec<Value>> = self.rows.iter().map(|r| r.values.clone()).collect();
        t.sort();
        t
    }
}

fn check_row(schema: &Schema, values: &[Value]) -> Result<()> {
    if values.len() != schema.len() {
        return Err(Error::Schema(format!("row arity {} does not match schema arity {}", values.len(), schema.len())));
    }
    for (v, c) in values.iter().zip(&schema.columns) {
        match v.kind() {
            None => {}
            Some(k) if k == c.kind || (k.is_numeric() && c.kind == Kind::Rat) => {}
            Some(k) => {
                return Err(Error::Type(format!("value of kind {k} in column `{}` of kind {}", c.var(), c.kind)))
            }
        }
    }
    Ok(())
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.schema.columns.iter().map(|c| c.name.clone()).collect();
        writeln!(f, "{}", names.join(" | "))?;
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{}", vals.join(" | "))?;
        }
        Ok(())
    }
}

/// A named collection of relations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Database {
    pub relations: BTreeMap<String, Relation>,
}

impl Database {
    pub fn new() -> Database {
        Database::default()
    }

    pub fn insert(&mut self, rel: Relation) {
        self.relations.insert(rel.name.to_string(), rel);
    }

    pub fn with(mut self, rel: Relation) -> Database {
        self.insert(rel);
        self
    }

    pub fn get(&self, name: &str) -> Result<&Relation> {
        self.relations.get(name).ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    /// Schemas of all relations, as needed by plan analysis.
    pub fn schemas(&self) -> BTreeMap<String, Schema> {
        self.relations.iter().map(|(k, r)| (k.clone(), r.schema.clone())).collect()
    }

    pub fn total_rows(&self) -> usize {
        self.relations.values().map(|r| r.len()).sum()
    }
}
