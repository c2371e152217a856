use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};

use super::plan::{AggFunc, CmpOp, Cond, Expr, Plan};
use super::schema::{Column, Schema};
use crate::error::{Error, Result};
use crate::value::{Kind, Value};

/// Result of checking a plan against base schemas.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub schema: Schema,
    /// Inferred kind of every parameter placeholder.
    pub params: BTreeMap<usize, Kind>,
}

/// Checks names, kinds and structural rules of a plan and returns its output
/// schema. Rules: each relation is scanned at most once, computed column
/// names are unique across the plan, union inputs agree on arity and kinds.
pub fn analyze(plan: &Plan, schemas: &BTreeMap<String, Schema>) -> Result<Analysis> {
    let mut cx = Cx { schemas, scanned: BTreeSet::new(), computed: BTreeSet::new(), params: BTreeMap::new() };
    let schema = cx.node(plan)?;
    Ok(Analysis { schema, params: cx.params })
}

struct Cx<'a> {
    schemas: &'a BTreeMap<String, Schema>,
    scanned: BTreeSet<String>,
    computed: BTreeSet<String>,
    params: BTreeMap<usize, Kind>,
}

impl Cx<'_> {
    fn fresh_name(&mut self, name: &str) -> Result<()> {
        if name.contains('.') {
            return Err(Error::Schema(format!("computed column `{name}` must not be qualified")));
        }
        if !self.computed.insert(name.to_string()) {
            return Err(Error::Schema(format!("computed column `{name}` defined twice")));
        }
        Ok(())
    }

    fn node(&mut self, plan: &Plan) -> Result<Schema> {
        match plan {
            Plan::Scan(r) => {
                let s = self.schemas.get(r).ok_or_else(|| Error::UnknownRelation(r.clone()))?;
                if !self.scanned.insert(r.clone()) {
                    return Err(Error::RepeatedAccess(r.clone()));
                }
                Ok(s.clone())
            }
            Plan::Select { cond, input } => {
                let s = self.node(input)?;
                self.cond(cond, &s)?;
                Ok(s)
            }
            Plan::Project { items, input } => {
                let s = self.node(input)?;
                let mut out = Schema::default();
                for it in items {
                    let col = match (&it.expr, &it.alias) {
                        (Expr::Col(c), None) => s.columns[s.resolve(c)?].clone(),
                        (e, Some(a)) => {
                            let k = self
                                .expr(e, &s)?
                                .ok_or_else(|| Error::Type(format!("cannot infer the kind of `{e}`")))?;
                            self.fresh_name(a)?;
                            Column::computed(a, k)
                        }
                        (e, None) => {
                            return Err(Error::Schema(format!("projection of `{e}` needs an `as` name")))
                        }
                    };
                    if out.columns.iter().any(|c| c.var() == col.var()) {
                        return Err(Error::Schema(format!("column `{}` projected twice", col.var())));
                    }
                    out.columns.push(col);
                }
                Ok(out)
            }
            Plan::Dedup(p) => self.node(p),
            Plan::Cross(a, b) => {
                let l = self.node(a)?;
                let r = self.node(b)?;
                Ok(l.concat(&r))
            }
            Plan::Join { left, right, l, r } => {
                let ls = self.node(l)?;
                let rs = self.node(r)?;
                let lk = ls.columns[ls.resolve(left)?].kind;
                let rk = rs.columns[rs.resolve(right)?].kind;
                if !lk.comparable(rk) {
                    return Err(Error::Type(format!("join compares {lk} with {rk}")));
                }
                Ok(ls.concat(&rs))
            }
            Plan::Union(a, b) => {
                let l = self.node(a)?;
                let r = self.node(b)?;
                if l.kinds() != r.kinds() {
                    return Err(Error::Schema(format!(
                        "union inputs differ: ({}) vs ({})",
                        kinds_text(&l),
                        kinds_text(&r)
                    )));
                }
                Ok(l)
            }
            Plan::Aggregate { group, agg, input } => {
                let s = self.node(input)?;
                let mut out = Schema::default();
                for g in group {
                    let c = s.columns[s.resolve(g)?].clone();
                    if out.columns.contains(&c) {
                        return Err(Error::Schema(format!("group-by attribute `{g}` repeated")));
                    }
                    out.columns.push(c);
                }
                let kind = match (&agg.arg, agg.func) {
                    (None, AggFunc::Count) => Kind::Int,
                    (None, f) => return Err(Error::Type(format!("{}(*) is not allowed", f.name()))),
                    (Some(a), f) => {
                        let k = s.columns[s.resolve(a)?].kind;
                        match f {
                            AggFunc::Count => Kind::Int,
                            _ if !k.is_numeric() => {
                                return Err(Error::Type(format!("{}({a}) over a non-numeric attribute", f.name())))
                            }
                            AggFunc::Avg => Kind::Rat,
                            _ => k,
                        }
                    }
                };
                self.fresh_name(&agg.output)?;
                out.columns.push(Column::computed(&agg.output, kind));
                Ok(out)
            }
            Plan::TopK { keys, input, .. } => {
                let s = self.node(input)?;
                for (k, _) in keys {
                    s.resolve(k)?;
                }
                Ok(s)
            }
        }
    }

    fn cond(&mut self, c: &Cond, s: &Schema) -> Result<()> {
        match c {
            Cond::True | Cond::False => Ok(()),
            Cond::And(a, b) | Cond::Or(a, b) => {
                self.cond(a, s)?;
                self.cond(b, s)
            }
            Cond::Not(a) => self.cond(a, s),
            Cond::Cmp(l, op, r) => {
                let lk = self.expr(l, s)?;
                let rk = self.expr(r, s)?;
                match (lk, rk) {
                    (Some(a), Some(b)) if !a.comparable(b) => {
                        Err(Error::Type(format!("`{l} {} {r}` compares {a} with {b}", op.symbol())))
                    }
                    (Some(_), Some(_)) => Ok(()),
                    (Some(k), None) => self.bind_params(r, k),
                    (None, Some(k)) => self.bind_params(l, k),
                    (None, None) => {
                        if is_null(l) || is_null(r) {
                            Ok(())
                        } else {
                            Err(Error::Type(format!("cannot infer kinds in `{l} {} {r}`", CmpOp::symbol(*op))))
                        }
                    }
                }
            }
        }
    }

    fn bind_params(&mut self, e: &Expr, k: Kind) -> Result<()> {
        if let Expr::Param(p) = e {
            match self.params.get(p) {
                Some(old) if !old.comparable(k) => {
                    return Err(Error::Type(format!("parameter ${p} used as {old} and as {k}")))
                }
                Some(_) => {}
                None => {
                    self.params.insert(*p, k);
                }
            }
        }
        Ok(())
    }

    /// Kind of an expression; `None` for a lone parameter or null literal
    /// whose kind comes from context.
    fn expr(&mut self, e: &Expr, s: &Schema) -> Result<Option<Kind>> {
        match e {
            Expr::Col(c) => Ok(Some(s.columns[s.resolve(c)?].kind)),
            Expr::Lit(v) => Ok(v.kind()),
            Expr::Param(p) => Ok(self.params.get(p).copied()),
            Expr::Neg(a) => {
                let k = self.numeric(a, s)?;
                Ok(Some(k))
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                if let Expr::Mul(..) = e {
                    if !a.is_constant() && !b.is_constant() {
                        return Err(Error::Type(format!("`{e}` is not linear")));
                    }
                }
                let ka = self.numeric(a, s)?;
                let kb = self.numeric(b, s)?;
                Ok(Some(if ka == Kind::Int && kb == Kind::Int { Kind::Int } else { Kind::Rat }))
            }
        }
    }

    fn numeric(&mut self, e: &Expr, s: &Schema) -> Result<Kind> {
        match self.expr(e, s)? {
            Some(k) if k.is_numeric() => Ok(k),
            Some(k) => Err(Error::Type(format!("arithmetic over {k} in `{e}`"))),
            None => {
                if let Expr::Param(p) = e {
                    self.bind_params(e, Kind::Rat)?;
                    Ok(*self.params.get(p).unwrap())
                } else {
                    Err(Error::Type(format!("null in arithmetic `{e}`")))
                }
            }
        }
    }
}

fn is_null(e: &Expr) -> bool {
    matches!(e, Expr::Lit(Value::Null))
}

fn kinds_text(s: &Schema) -> String {
    let v: alloc::vec::Vec<&str> = s.columns.iter().map(|c| c.kind.name()).collect();
    v.join(", ")
}
