//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line with its
//! measured runtime and budget, then asserts.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::{Duration, Instant};

use common::{database, partition, perturb, templatize, PlanGen};
use num_rational::BigRational;
use provsketch_core::capture::capture;
use provsketch_core::fixtures::{cities, f_popden, f_state, Q2, Q_POP_STATE, T_REUSE};
use provsketch_core::logic::{grid_validity_oracle, is_valid, Formula, Universe, Verdict};
use provsketch_core::partition::{build_equi_depth, RangePartition, Stats};
use provsketch_core::relalg::{
    bag_eq, eval, eval_with_lineage, parse_cond, parse_query, whole_lineage, CmpOp, Cond, Database, Expr, Plan, Relation,
};
use provsketch_core::reuse::{check_reusable, Binding, Template};
use provsketch_core::safety::{check_safe, AttrSet};
use provsketch_core::sketch::{accurate_sketch, empirically_safe, instance, BitSketch, ProvenanceSketch, SketchSet};
use provsketch_core::skipping::{eval_skipping, quse, sketch_to_predicate};
use provsketch_core::tuning::{
    generate_workload, optimal_option, simulate, Dist, Mode, ParamSpec, Policy, Strategy, TemplateSpec, WorkloadSpec,
};
use provsketch_core::{Kind, Value};
use rand::Rng;

/// Runs one criterion: prints its line (bypassing output capture so the
/// line shows up in plain `cargo test` output) and fails on error or when
/// the budget is exceeded.
fn criterion(id: u32, name: &str, budget: Duration, body: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let outcome = body();
    let took = start.elapsed();
    let (ok, detail) = match &outcome {
        Ok(d) if took <= budget => (true, d.clone()),
        Ok(d) => (false, format!("{d}; over budget")),
        Err(e) => (false, e.clone()),
    };
    let line = format!(
        "acceptance {id} {name}: {} ({:.2}s of {}s) {detail}\n",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        budget.as_secs()
    );
    std::io::stdout().write_all(line.as_bytes()).unwrap();
    assert!(ok, "{line}");
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ps(p: RangePartition, bits: BitSketch) -> ProvenanceSketch {
    ProvenanceSketch::new(p, bits).unwrap()
}

#[test]
fn c1_running_example() {
    criterion(1, "running example", Duration::from_secs(1), || {
        let db = cities();
        let q = e(parse_query(Q2))?;
        let (res, lineage) = e(eval_with_lineage(&q, &db))?;
        let avg = Value::rat(BigRational::from_integer(5500.into()));
        ensure(res.sorted_tuples() == vec![vec![Value::str("CA"), avg]], format!("result {:?}", res.sorted_tuples()))?;
        let ids: BTreeSet<u64> = whole_lineage(&lineage).iter().map(|r| r.id).collect();
        ensure(ids == BTreeSet::from([2, 3]), format!("lineage {ids:?}"))?;
        let acc = e(accurate_sketch(&q, &db, &f_state()))?;
        ensure(acc.to_bits() == "1000", format!("accurate {}", acc.to_bits()))?;
        let cap = e(capture(&q, &db, &[f_state()]))?;
        let bits = cap.sketches.get("cities").unwrap().bits.to_bits();
        ensure(bits == "1000", format!("captured {bits}"))?;
        ensure(bag_eq(&cap.result, &res), "capture changed the result")?;
        Ok("Q2 = {(CA, 5500)}, lineage {t2, t3}, sketch 1000".into())
    });
}

#[test]
fn c2_unsafe_sketch() {
    criterion(2, "unsafe sketch", Duration::from_secs(1), || {
        let db = cities();
        let q = e(parse_query(Q2))?;
        let acc = e(accurate_sketch(&q, &db, &f_popden()))?;
        ensure(acc.to_bits() == "01", format!("accurate {}", acc.to_bits()))?;
        let set = SketchSet::single(ps(f_popden(), acc));
        let on_instance = e(eval(&q, &e(instance(&set, &db))?))?;
        let expect = vec![vec![Value::str("NY"), Value::Int(7000)]];
        ensure(on_instance.sorted_tuples() == expect, format!("instance result {:?}", on_instance.sorted_tuples()))?;
        ensure(!e(empirically_safe(&q, &db, &set))?, "sketch reported safe")?;
        Ok("sketch {g2} yields {(NY, 7000)}".into())
    });
}

#[test]
fn c3_safety_verdicts() {
    criterion(3, "safety verdicts", Duration::from_secs(1), || {
        let db = cities();
        let (schemas, stats) = (db.schemas(), Stats::from_database(&db));
        let below = e(parse_query("select(totden < 7000, agg([state], sum(popden) as totden, scan(cities)))"))?;
        let r = e(check_safe(&below, &e(AttrSet::parse("cities.popden"))?, &schemas, &stats))?;
        ensure(!r.is_safe(), format!("totden < 7000 on popden: {}", r.verdict.name()))?;
        let r = e(check_safe(&e(parse_query(Q2))?, &e(AttrSet::parse("cities.state"))?, &schemas, &stats))?;
        ensure(r.is_safe(), format!("Q2 on state: {}", r.verdict.name()))?;
        let r = e(check_safe(&e(parse_query(Q_POP_STATE))?, &e(AttrSet::parse("cities.state"))?, &schemas, &stats))?;
        ensure(r.is_safe(), "group-by attribute not safe")?;
        Ok("popden Unknown, state Safe".into())
    });
}

struct Tally {
    cases: usize,
    tried: usize,
    nontrivial: usize,
    nonempty: usize,
    ops: BTreeMap<&'static str, usize>,
}

fn operators(p: &Plan, out: &mut BTreeSet<&'static str>) {
    out.insert(match p {
        Plan::Scan(_) => "scan",
        Plan::Select { .. } => "select",
        Plan::Project { .. } => "project",
        Plan::Dedup(_) => "dedup",
        Plan::Cross(..) => "cross",
        Plan::Join { .. } => "join",
        Plan::Union(..) => "union",
        Plan::Aggregate { .. } => "agg",
        Plan::TopK { .. } => "topk",
    });
    for c in p.children() {
        operators(c, out);
    }
}

#[test]
fn c4_safety_soundness() {
    criterion(4, "safety soundness", Duration::from_secs(60), || {
        let mut t = Tally { cases: 0, tried: 0, nontrivial: 0, nonempty: 0, ops: BTreeMap::new() };
        let mut seed = 0u64;
        while t.cases < 1000 {
            seed += 1;
            let mut rng = common::rng(seed);
            let db = database(&mut rng, 64);
            let (schemas, stats) = (db.schemas(), Stats::from_database(&db));
            let q = PlanGen::new(&schemas).plan(&mut rng, &db);
            let scans = q.scans();
            let rel = &scans[rng.gen_range(0..scans.len())];
            let p = partition(&mut rng, &db, rel);
            t.tried += 1;
            let x = AttrSet::single(rel, p.attribute());
            if !e(check_safe(&q, &x, &schemas, &stats))?.is_safe() {
                continue;
            }
            t.cases += 1;
            let mut ops = BTreeSet::new();
            operators(&q, &mut ops);
            for o in ops {
                *t.ops.entry(o).or_default() += 1;
            }
            if !e(eval(&q, &db))?.is_empty() {
                t.nonempty += 1;
            }
            let acc = e(accurate_sketch(&q, &db, &p))?;
            if !acc.is_full() {
                t.nontrivial += 1;
            }
            let acc_set = SketchSet::single(ps(p.clone(), acc));
            ensure(e(empirically_safe(&q, &db, &acc_set))?, format!("seed {seed}: accurate sketch unsafe for {q}"))?;
            let cap = e(capture(&q, &db, std::slice::from_ref(&p)))?;
            ensure(e(empirically_safe(&q, &db, &cap.sketches))?, format!("seed {seed}: captured sketch unsafe for {q}"))?;
        }
        let ops: Vec<String> = t.ops.iter().map(|(o, n)| format!("{o} {n}")).collect();
        Ok(format!(
            "{} Safe cases of {} tried ({} nonempty results, {} with skipped fragments; operators: {}), 0 violations",
            t.cases,
            t.tried,
            t.nonempty,
            t.nontrivial,
            ops.join(", ")
        ))
    });
}

#[test]
fn c5_reuse() {
    criterion(5, "reuse", Duration::from_secs(60), || {
        let db = cities();
        let (schemas, stats) = (db.schemas(), Stats::from_database(&db));
        let t = e(Template::new(e(parse_query(T_REUSE))?, &schemas))?;
        let b = |x, y| Binding(vec![Value::Int(x), Value::Int(y)]);
        let fwd = e(check_reusable(&t, &b(100, 10), &b(100, 15), &schemas, &stats))?;
        ensure(fwd.is_reusable(), "(100,10) -> (100,15) not reusable")?;
        let back = e(check_reusable(&t, &b(100, 15), &b(100, 10), &schemas, &stats))?;
        ensure(!back.is_reusable(), "(100,15) -> (100,10) reusable")?;
        // The failing obligation really is invalid: a grid over small
        // counts refutes it.
        let grid: BTreeMap<String, Vec<Value>> =
            [("cnt", 0..20), ("cnt'", 0..20)].into_iter().map(|(v, r)| (v.to_string(), r.map(Value::Int).collect())).collect();
        let u: Universe = [("cnt".to_string(), Kind::Int), ("cnt'".to_string(), Kind::Int)].into();
        let premise = e(Formula::from_cond(&e(parse_cond("cnt = cnt_p AND cnt_p > 10"))?, &|c| Ok(c.replace("_p", "'")), &u))?;
        let concl = e(Formula::from_cond(&e(parse_cond("cnt > 15"))?, &|c| Ok(c.to_string()), &u))?;
        ensure(!grid_validity_oracle(&premise, &concl, &grid), "grid oracle did not refute the reverse direction")?;

        let (mut cases, mut distinct, mut tried, mut seed) = (0usize, 0usize, 0usize, 0u64);
        while cases < 1000 {
            seed += 1;
            let mut rng = common::rng(1_000_000 + seed);
            let db = database(&mut rng, 64);
            let (schemas, stats) = (db.schemas(), Stats::from_database(&db));
            let q = PlanGen::new(&schemas).plan(&mut rng, &db);
            let (tp, vals) = templatize(&q);
            if vals.is_empty() {
                continue;
            }
            let Ok(t) = Template::new(tp, &schemas) else { continue };
            let b1 = Binding(vals);
            let b2 = Binding(perturb(&mut rng, b1.values()));
            let (Ok(q1), Ok(q2)) = (t.instantiate(&b1), t.instantiate(&b2)) else { continue };
            if eval(&q2, &db).is_err() {
                continue;
            }
            let scans = q1.scans();
            let rel = &scans[rng.gen_range(0..scans.len())];
            let p = partition(&mut rng, &db, rel);
            if !e(check_safe(&q1, &AttrSet::single(rel, p.attribute()), &schemas, &stats))?.is_safe() {
                continue;
            }
            tried += 1;
            if !e(check_reusable(&t, &b1, &b2, &schemas, &stats))?.is_reusable() {
                continue;
            }
            cases += 1;
            if b1 != b2 {
                distinct += 1;
            }
            let l1 = whole_lineage(&e(eval_with_lineage(&q1, &db))?.1);
            let l2 = whole_lineage(&e(eval_with_lineage(&q2, &db))?.1);
            ensure(l2.is_subset(&l1), format!("seed {seed}: lineage not contained for {t:?} {b1} -> {b2}", t = t.plan().to_string()))?;
            let cap = e(capture(&q1, &db, std::slice::from_ref(&p)))?;
            ensure(
                e(empirically_safe(&q2, &db, &cap.sketches))?,
                format!("seed {seed}: captured sketch unsafe for {} {b1} -> {b2}", t.plan()),
            )?;
            let acc = SketchSet::single(ps(p.clone(), e(accurate_sketch(&q1, &db, &p))?));
            ensure(e(empirically_safe(&q2, &db, &acc))?, format!("seed {seed}: accurate sketch unsafe for {}", t.plan()))?;
        }
        Ok(format!(
            "fixture Reusable/Unknown; {cases} Reusable cases of {tried} safe pairs ({distinct} with different bindings), 0 violations"
        ))
    });
}

#[test]
fn c6_skipping() {
    criterion(6, "skipping equivalence", Duration::from_secs(30), || {
        let db = cities();
        let two = ps(f_state(), e(BitSketch::from_bits("1100", f_state().fingerprint()))?);
        let c = sketch_to_predicate(&two);
        let expect = Cond::cmp(Expr::col("cities.state"), CmpOp::Le, Expr::Lit(Value::str("MI")));
        ensure(c == expect, format!("merged predicate {c}"))?;
        let picked = e(eval(&Plan::select(c, Plan::scan("cities")), &db))?;
        let states: BTreeSet<String> = picked.rows.iter().map(|r| r.values[2].literal()).collect();
        ensure(picked.len() == 3 && states.iter().all(|s| s.as_str() <= "'MI'"), "merged predicate rows")?;

        let (mut cases, mut skipped, mut seed) = (0usize, 0usize, 0u64);
        while cases < 1000 {
            seed += 1;
            let mut rng = common::rng(2_000_000 + seed);
            let db = database(&mut rng, 64);
            let (schemas, stats) = (db.schemas(), Stats::from_database(&db));
            let q = PlanGen::new(&schemas).plan(&mut rng, &db);
            let scans = q.scans();
            let rel = &scans[rng.gen_range(0..scans.len())];
            let p = partition(&mut rng, &db, rel);
            if !e(check_safe(&q, &AttrSet::single(rel, p.attribute()), &schemas, &stats))?.is_safe() {
                continue;
            }
            cases += 1;
            let cap = e(capture(&q, &db, std::slice::from_ref(&p)))?;
            let full = e(eval(&q, &db))?;
            let used = e(eval(&quse(&q, &cap.sketches), &db))?;
            let inst = e(eval(&q, &e(instance(&cap.sketches, &db))?))?;
            ensure(bag_eq(&used, &full) && bag_eq(&inst, &full), format!("seed {seed}: results differ for {q}"))?;
            let run = e(eval_skipping(&q, &db, &cap.sketches))?;
            ensure(bag_eq(&run.result, &full), format!("seed {seed}: skipping run differs"))?;
            if run.scans[rel.as_str()].scanned < run.scans[rel.as_str()].total {
                skipped += 1;
            }
        }
        Ok(format!("{{f1,f2}} -> state <= 'MI'; {cases} safe cases agree, {skipped} skip rows"))
    });
}

fn random_atom(rng: &mut common::R) -> String {
    let ints = ["x", "y", "z"];
    let i = |rng: &mut common::R| ints[rng.gen_range(0..3)];
    let ops = ["=", "<>", "<", "<=", ">", ">="];
    let o = ops[rng.gen_range(0..6)];
    match rng.gen_range(0..10) {
        0..=2 => format!("{} {o} {}", i(rng), rng.gen_range(-2..5)),
        3..=4 => format!("{} {o} {}", i(rng), i(rng)),
        5 => format!("{} + {} {o} {}", i(rng), i(rng), rng.gen_range(-2..6)),
        6 => format!("2 * {} - {} {o} {}", i(rng), i(rng), rng.gen_range(-2..4)),
        7 => format!("w {o} {}", ["0", "1", "0.5", "-1.5", "x"][rng.gen_range(0..5)]),
        _ => {
            let s = ["s", "t"][rng.gen_range(0..2)];
            let rhs = ["'b'", "'m'", "'q'", "s", "t"][rng.gen_range(0..5)];
            format!("{s} {o} {rhs}")
        }
    }
}

fn random_formula(rng: &mut common::R, atoms: usize) -> String {
    let mut f = random_atom(rng);
    for _ in 1..atoms {
        let joiner = if rng.gen_bool(0.7) { "AND" } else { "OR" };
        f = format!("({f}) {joiner} ({})", random_atom(rng));
    }
    if rng.gen_bool(0.1) {
        f = format!("NOT ({f})");
    }
    f
}

/// A fresh small grid per implication: five integers, five halves and
/// four strings per variable.
fn random_grid(rng: &mut common::R) -> BTreeMap<String, Vec<Value>> {
    use rand::seq::SliceRandom;
    let pick = |rng: &mut common::R, mut all: Vec<Value>, n: usize| {
        all.shuffle(rng);
        all.truncate(n);
        all
    };
    let mut grid = BTreeMap::new();
    for v in ["x", "y", "z"] {
        grid.insert(v.to_string(), pick(rng, (-3..7).map(Value::Int).collect(), 5));
    }
    let halves = (-4..7).map(|h| Value::rat(BigRational::new(h.into(), 2.into()))).collect();
    grid.insert("w".to_string(), pick(rng, halves, 5));
    for v in ["s", "t"] {
        grid.insert(v.to_string(), pick(rng, ["a", "b", "m", "q", "z"].iter().map(|s| Value::str(s)).collect(), 4));
    }
    grid
}

#[test]
fn c7_prover() {
    criterion(7, "prover soundness", Duration::from_secs(30), || {
        let mut u = Universe::new();
        for v in ["x", "y", "z"] {
            u.insert(v.into(), Kind::Int);
        }
        u.insert("w".into(), Kind::Rat);
        u.insert("s".into(), Kind::Str);
        u.insert("t".into(), Kind::Str);
        let ident = |c: &str| -> provsketch_core::Result<String> { Ok(c.to_string()) };
        let mut rng = common::rng(77);
        let (mut valid, mut refuted, mut unknown) = (0, 0, 0);
        let (mut prover_time, mut grid_time) = (Duration::ZERO, Duration::ZERO);
        for case in 0..10_000 {
            let (np, nc) = (rng.gen_range(1..4), rng.gen_range(1..3));
            let p_text = random_formula(&mut rng, np);
            let c_text = random_formula(&mut rng, nc);
            let p = e(Formula::from_cond(&e(parse_cond(&p_text))?, &ident, &u))?;
            let c = e(Formula::from_cond(&e(parse_cond(&c_text))?, &ident, &u))?;
            let grid = random_grid(&mut rng);
            let t0 = Instant::now();
            let verdict = e(is_valid(&p, &c, &u))?;
            prover_time += t0.elapsed();
            match verdict {
                Verdict::Valid => {
                    valid += 1;
                    let t0 = Instant::now();
                    ensure(grid_validity_oracle(&p, &c, &grid), format!("case {case}: false Valid for {p_text} => {c_text}"))?;
                    grid_time += t0.elapsed();
                }
                Verdict::NotValid(a) => {
                    refuted += 1;
                    let holds = p.eval(&a) == Some(true) && c.eval(&a) == Some(false);
                    ensure(holds, format!("case {case}: bad witness {a:?} for {p_text} => {c_text}"))?;
                }
                Verdict::Unknown => unknown += 1,
            }
        }
        // Fixture obligations: the selection pair and every required
        // obligation of the safety and reuse fixtures.
        let sel_u: Universe = [("a".to_string(), Kind::Int), ("a'".to_string(), Kind::Int)].into();
        let prem = e(Formula::from_cond(&e(parse_cond("a = a_p AND a_p = 40 AND a_p > 10"))?, &|c| Ok(c.replace("_p", "'")), &sel_u))?;
        let concl = e(Formula::from_cond(&e(parse_cond("a = 40 AND a > 30"))?, &|c| Ok(c.to_string()), &sel_u))?;
        ensure(e(is_valid(&prem, &concl, &sel_u))? == Verdict::Valid, "selection fixture not Valid")?;
        let db = cities();
        let (schemas, stats) = (db.schemas(), Stats::from_database(&db));
        let mut fixtures = 1;
        for (q, x) in [(Q2, "cities.state"), (Q_POP_STATE, "cities.state"), (Q_POP_STATE, "cities.popden")] {
            let r = e(check_safe(&e(parse_query(q))?, &e(AttrSet::parse(x))?, &schemas, &stats))?;
            for o in r.obligations.iter().filter(|o| o.required) {
                fixtures += 1;
                ensure(o.verdict == Verdict::Valid, format!("{q} on {x}: {} not Valid", o.operator))?;
            }
        }
        let t = e(Template::new(e(parse_query(T_REUSE))?, &schemas))?;
        let b = |x, y| Binding(vec![Value::Int(x), Value::Int(y)]);
        let r = e(check_reusable(&t, &b(100, 10), &b(100, 15), &schemas, &stats))?;
        for o in r.obligations.iter().filter(|o| o.required) {
            fixtures += 1;
            ensure(o.verdict == Verdict::Valid, format!("reuse fixture: {} not Valid", o.operator))?;
        }
        Ok(format!(
            "10000 implications: {valid} Valid, {refuted} NotValid, {unknown} Unknown, 0 unsound (prover {:.1}s, grid {:.1}s); \
             {fixtures} fixture obligations Valid",
            prover_time.as_secs_f64(),
            grid_time.as_secs_f64()
        ))
    });
}

/// `r(g, v)`: 1000 groups of 100 rows; a group's sum grows with `g`.
fn tuning_database() -> Database {
    let mut rng = common::rng(8);
    let rows = (0..100_000i64)
        .map(|i| {
            let g = i % 1000;
            vec![Value::Int(g), Value::Int(g + rng.gen_range(-2..=2))]
        })
        .collect();
    Database::new().with(Relation::new("r", &[("g", Kind::Int), ("v", Kind::Int)], rows).unwrap())
}

#[test]
fn c8_tuning() {
    criterion(8, "tuning", Duration::from_secs(60), || {
        let db = tuning_database();
        let text = "select(total > $1, agg([g], sum(v) as total, scan(r)))";
        let spec = WorkloadSpec {
            templates: vec![TemplateSpec {
                text: text.into(),
                weight: 1.0,
                params: vec![ParamSpec::Normal { dist: Dist { mean: 99_000.0, stddev: 300.0 }, kind: Kind::Int }],
            }],
            queries: 200,
            seed: 7,
        };
        let workload = e(generate_workload(&spec))?;
        let t = e(Template::new(e(parse_query(text))?, &db.schemas()))?;
        let queries: Vec<(usize, Binding)> = workload.iter().map(|q| (q.template, q.binding.clone())).collect();
        let policy = Policy { strategy: Strategy::Adaptive, ..Policy::default() };
        let ledger = e(simulate(&db, std::slice::from_ref(&t), &queries, policy.clone()))?;
        // Every query run plain costs what the ledger records as its
        // no-sketch cost.
        let ratio = ledger.total() / ledger.c_nops;
        ensure(ratio < 0.5, format!("adaptive/plain cost ratio {ratio:.3}"))?;
        let first_reuse = ledger.first(Mode::Reuse).ok_or("no reuse")?;
        let first_capture = ledger.first(Mode::Capture).ok_or("no capture")?;
        ensure(
            first_capture + 1 >= policy.evidence_threshold as usize && first_reuse > first_capture,
            format!("capture at {first_capture}, first reuse at {first_reuse}"),
        )?;
        // Crossover, then a widening gap.
        let cum = ledger.cumulative();
        let cross = cum.iter().position(|(a, p)| a < p).ok_or("no crossover")?;
        let gap = |i: usize| cum[i].1 - cum[i].0;
        ensure(gap(cum.len() - 1) > gap((cross + cum.len()) / 2), "gap does not widen")?;
        let sel: f64 = ledger.entries.iter().filter(|e| e.mode == Mode::Reuse).map(|e| e.rows_scanned as f64).sum::<f64>()
            / (ledger.count(Mode::Reuse) as f64 * 100_000.0);

        // Break-even arithmetic of capture-then-use against running plain.
        ensure(optimal_option(10.0, &[(12.0, 1.0)], 1).is_none(), "n=1")?;
        ensure(optimal_option(10.0, &[(12.0, 1.0)], 2) == Some(0), "n=2")?;
        ensure(optimal_option(10.0, &[(12.0, 1.0)], 0).is_none(), "n=0")?;
        // Costs relative to a plain run of 100 that put the break-even
        // points of three sketch sizes at 2, 46 and 667 repetitions.
        let opts = [(150.0, 10.0), (195.5, 9.0), (862.0, 8.0)];
        for n in 1..2000u64 {
            let want = match n {
                1 => None,
                2..=45 => Some(0),
                46..=666 => Some(1),
                _ => Some(2),
            };
            ensure(optimal_option(100.0, &opts, n) == want, format!("n_runs {n}"))?;
        }
        Ok(format!(
            "adaptive/plain {ratio:.3}; capture at query {first_capture}, first reuse at {first_reuse}, crossover at {cross}; \
             {} captures, {} reuses, mean scanned fraction {sel:.4}",
            ledger.count(Mode::Capture),
            ledger.count(Mode::Reuse)
        ))
    });
}

fn linear_fragment(p: &RangePartition, v: &Value) -> usize {
    p.uppers().iter().position(|u| v <= u).unwrap_or(p.len() - 1)
}

#[test]
fn c9_bits_and_partitions() {
    criterion(9, "bit and partition properties", Duration::from_secs(10), || {
        let p3 = RangePartition::new("r", "a", Kind::Int, vec![Value::Int(1), Value::Int(2)], None).unwrap();
        let all: Vec<BitSketch> = (0..8u8)
            .map(|m| BitSketch::from_indices(&p3, (0..3).filter(|i| m & (1 << i) != 0)).unwrap())
            .collect();
        let zero = BitSketch::zeros(&p3);
        for a in &all {
            ensure(a.bitor(a).unwrap() == *a && a.bitor(&zero).unwrap() == *a, "idempotence/identity")?;
            for b in &all {
                ensure(a.bitor(b).unwrap() == b.bitor(a).unwrap(), "commutativity")?;
                for c in &all {
                    ensure(a.bitor(b).unwrap().bitor(c).unwrap() == a.bitor(&b.bitor(c).unwrap()).unwrap(), "associativity")?;
                }
            }
        }
        let mut rng = common::rng(9);
        let big = RangePartition::new("r", "a", Kind::Int, (1..1000).map(|i| Value::Int(i * 10)).collect(), None).unwrap();
        let rand_sketch = |rng: &mut common::R| {
            BitSketch::from_indices(&big, (0..1000).filter(|_| rng.gen_bool(0.1)).collect::<Vec<_>>()).unwrap()
        };
        for _ in 0..200 {
            let (a, b, c) = (rand_sketch(&mut rng), rand_sketch(&mut rng), rand_sketch(&mut rng));
            ensure(a.bitor(&b).unwrap() == b.bitor(&a).unwrap(), "commutativity (large)")?;
            ensure(a.bitor(&b).unwrap().bitor(&c).unwrap() == a.bitor(&b.bitor(&c).unwrap()).unwrap(), "associativity (large)")?;
            ensure(a.bitor(&a).unwrap() == a && a.bitor(&BitSketch::zeros(&big)).unwrap() == a, "idempotence (large)")?;
        }
        for _ in 0..10_000 {
            let k = rng.gen_range(1..40);
            let mut bounds: Vec<i64> = (0..k - 1).map(|_| rng.gen_range(-100..100)).collect();
            bounds.sort();
            bounds.dedup();
            let p = RangePartition::new("r", "a", Kind::Int, bounds.into_iter().map(Value::Int).collect(), None).unwrap();
            let v = Value::Int(rng.gen_range(-120..120));
            ensure(p.fragment_of(&v).unwrap() == linear_fragment(&p, &v), "binary and linear search disagree")?;
        }
        let balanced = |n: usize, k: usize| -> Result<(), String> {
            let rel = Relation::new("r", &[("a", Kind::Int)], (0..n as i64).map(|i| vec![Value::Int(i * 3)]).collect()).unwrap();
            let db = Database::new().with(rel);
            let p = build_equi_depth(&Stats::from_database(&db), "r", "a", k).unwrap();
            let sizes: Vec<usize> = p.fragment_rows(db.get("r").unwrap()).unwrap().iter().map(|f| f.len()).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            ensure(p.len() == k.min(n) && hi - lo <= 1, format!("n={n} k={k}: sizes {sizes:?}"))
        };
        for n in 1..=40 {
            for k in 1..=n {
                balanced(n, k)?;
            }
        }
        for _ in 0..20 {
            balanced(rng.gen_range(1000..20_000), rng.gen_range(2..2000))?;
        }
        Ok("bitor laws, 10000 lookups, equi-depth balance".into())
    });
}
