//! Exhaustive checking of an implication over finite value grids.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::formula::{Assignment, Formula};
use crate::value::Value;

/// First grid assignment where `premise` holds and `conclusion` does not.
/// Variables missing from `grid`, or atoms that cannot be evaluated, count
/// as a violation.
pub fn grid_counterexample(
    premise: &Formula,
    conclusion: &Formula,
    grid: &BTreeMap<String, Vec<Value>>,
) -> Option<Assignment> {
    let mut vars: Vec<String> = premise.vars().into_iter().collect();
    for v in conclusion.vars() {
        if !vars.contains(&v) {
            vars.push(v);
        }
    }
    let mut domains = Vec::with_capacity(vars.len());
    for v in &vars {
        match grid.get(v) {
            Some(d) if !d.is_empty() => domains.push(d),
            Some(_) => return None,
            None => return Some(Assignment::new()),
        }
    }
    let mut idx = alloc::vec![0usize; vars.len()];
    let mut a: Assignment = vars.iter().zip(&domains).map(|(v, d)| (v.clone(), d[0].clone())).collect();
    loop {
        match (premise.eval(&a), conclusion.eval(&a)) {
            (Some(false), _) | (Some(true), Some(true)) => {}
            _ => return Some(a),
        }
        // Odometer step; only the digits that change are rewritten.
        let mut k = 0;
        loop {
            if k == idx.len() {
                return None;
            }
            idx[k] += 1;
            let wrapped = idx[k] == domains[k].len();
            if wrapped {
                idx[k] = 0;
            }
            if let Some(slot) = a.get_mut(&vars[k]) {
                *slot = domains[k][idx[k]].clone();
            }
            if !wrapped {
                break;
            }
            k += 1;
        }
    }
}

/// Whether the implication holds at every point of the grid product.
pub fn grid_validity_oracle(premise: &Formula, conclusion: &Formula, grid: &BTreeMap<String, Vec<Value>>) -> bool {
    grid_counterexample(premise, conclusion, grid).is_none()
}
