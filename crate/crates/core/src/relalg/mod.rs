//! Bag relational algebra: plans, schemas, the textual syntax and evaluation.

mod analyze;
mod eval;
mod parse;
mod plan;
mod schema;

pub use analyze::{analyze, Analysis};
pub use eval::{
    bag_eq, eval, eval_annotated, eval_cond, eval_with_lineage, restrict_to_lineage, whole_lineage, AnnRelation,
    Annotation, LineageSet, RowRef,
};
pub use parse::{parse_cond, parse_query};
pub use plan::{AggFunc, AggSpec, CmpOp, Cond, Dir, Expr, Plan, ProjItem, QueryPlan};
pub use schema::{Column, Database, Relation, Row, Schema};
