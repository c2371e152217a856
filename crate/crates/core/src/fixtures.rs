//! The seven-row `cities` relation and the two partitions used throughout
//! the docs and tests.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::partition::RangePartition;
use crate::relalg::{Database, Relation};
use crate::value::{Kind, Value};

pub const CITIES: [(i64, &str, &str); 7] = [
    (4200, "Anchorage", "AK"),
    (6000, "San Diego", "CA"),
    (5000, "Sacramento", "CA"),
    (7000, "New York", "NY"),
    (2000, "Buffalo", "NY"),
    (3700, "Austin", "TX"),
    (2500, "Houston", "TX"),
];

/// Highest average density state.
pub const Q2: &str = "topk(avgden desc, 1, agg([state], avg(popden) as avgden, scan(cities)))";

/// States whose summed density exceeds a threshold.
pub const Q_POP_STATE: &str = "select(totden > 10000, agg([state], sum(popden) as totden, scan(cities)))";

/// States with more than `$2` cities of density above `$1`.
pub const T_REUSE: &str = "select(cnt > $2, agg([state], count(*) as cnt, select(popden > $1, scan(cities))))";

pub fn cities_relation() -> Relation {
    Relation::new(
        "cities",
        &[("popden", Kind::Int), ("city", Kind::Str), ("state", Kind::Str)],
        CITIES.iter().map(|(p, c, s)| vec![Value::Int(*p), Value::str(c), Value::str(s)]).collect(),
    )
    .expect("fixture is well typed")
}

pub fn cities() -> Database {
    Database::new().with(cities_relation())
}

/// Four fragments on `state`: [AL,DE], [FL,MI], [MN,OK], [OR,WY].
pub fn f_state() -> RangePartition {
    let labels: Vec<String> = ["[AL,DE]", "[FL,MI]", "[MN,OK]", "[OR,WY]"].iter().map(|s| String::from(*s)).collect();
    RangePartition::new(
        "cities",
        "state",
        Kind::Str,
        vec![Value::str("DE"), Value::str("MI"), Value::str("OK")],
        Some(labels),
    )
    .expect("fixture boundaries increase")
}

/// Two fragments on `popden`: [0,4000] and [4001,9000].
pub fn f_popden() -> RangePartition {
    let labels = vec![String::from("[0,4000]"), String::from("[4001,9000]")];
    RangePartition::new("cities", "popden", Kind::Int, vec![Value::Int(4000)], Some(labels))
        .expect("fixture boundaries increase")
}
