//! `provsketch`: load CSV data, run queries, capture and apply provenance
//! sketches, check safety and reuse, and simulate self-tuning workloads.
//!
//! Exit status: 0 on success, 1 when a check comes back negative (or a
//! command refuses to act on an unproven sketch), 2 on usage or I/O errors.

mod catalog;
mod data;
mod error;
mod workload;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use provsketch_core::capture::{capture, render_instrumented};
use provsketch_core::partition::{build_equi_depth, RangePartition, Stats};
use provsketch_core::relalg::{analyze, eval, parse_query, Database, Plan, Schema};
use provsketch_core::reuse::{check_reusable, Binding, Template};
use provsketch_core::safety::{check_safe, AttrSet};
use provsketch_core::sketch::SketchSet;
use provsketch_core::skipping::{count_members, eval_skipping, quse};
use provsketch_core::tuning::{generate_workload, Strategy, Tuner};

use catalog::{Catalog, Record};
use data::SchemaDecl;
use error::{io, usage, CliError, Result};
use workload::{Report, WorkloadJson};

#[derive(Parser)]
#[command(name = "provsketch", version, about = "Provenance sketches for data skipping")]
struct Cli {
    /// Directory with NAME.csv files and NAME.schema.json sidecars.
    #[arg(long, global = true, default_value = ".")]
    data: PathBuf,
    /// Sketch catalog (JSON lines). Defaults to DATA/catalog.jsonl.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Seed for workload generation; overrides the workload file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a CSV file and register it in the data directory.
    Load {
        csv: PathBuf,
        /// Relation name; defaults to the file stem.
        #[arg(long)]
        name: Option<String>,
        /// Column declarations, e.g. `popden:int,city:str,state:str`.
        #[arg(long)]
        schema: String,
    },
    /// Evaluate a query, optionally skipping data with catalog sketches.
    Run {
        query: String,
        /// Catalog entry to apply; repeat for several relations.
        #[arg(long = "use-sketch")]
        use_sketch: Vec<u64>,
        /// Print the rewritten query.
        #[arg(long)]
        show_rewrite: bool,
        /// Apply sketches that are not proven to answer the query.
        #[arg(long)]
        force: bool,
    },
    /// Capture sketches for a query and store them in the catalog.
    Capture {
        query: String,
        /// `rel.attr:equi-depth:K` or `rel.attr:bounds:LIT,LIT,...`.
        #[arg(long = "partition", required = true)]
        partitions: Vec<String>,
        /// Store the sketch even if the attributes are not proven safe.
        #[arg(long)]
        force: bool,
        /// Print the instrumented query.
        #[arg(long)]
        show_rewrite: bool,
    },
    /// Check whether sketches on the given attributes are safe for a query.
    CheckSafe {
        query: String,
        /// `rel.attr[,rel.attr]`.
        #[arg(long)]
        attrs: String,
        /// Print every proof obligation and its outcome.
        #[arg(long)]
        explain: bool,
    },
    /// Check whether a sketch captured for one binding answers another.
    CheckReuse {
        /// Query template with parameters `$1..$n`.
        template: String,
        /// Binding the sketch was captured with, e.g. `100, 10`.
        #[arg(long)]
        captured: String,
        /// Binding of the incoming query.
        #[arg(long)]
        incoming: String,
        #[arg(long)]
        explain: bool,
    },
    /// Replay a generated workload through the self-tuning loop.
    Simulate {
        /// Workload specification (JSON).
        #[arg(long)]
        workload: PathBuf,
        /// adaptive, eager or plain.
        #[arg(long, default_value = "adaptive")]
        policy: String,
        /// Write a JSON report with the cumulative cost series.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Re-run reused queries plainly and count mismatches.
        #[arg(long)]
        verify: bool,
    },
    /// Inspect or edit the sketch catalog.
    Catalog {
        #[command(subcommand)]
        cmd: CatalogCmd,
    },
}

#[derive(Subcommand)]
enum CatalogCmd {
    List,
    Show { id: u64 },
    Drop { id: u64 },
}

enum Outcome {
    Done,
    Negative,
}

struct Ctx {
    data: PathBuf,
    catalog: PathBuf,
    seed: Option<u64>,
}

impl Ctx {
    fn db(&self) -> Result<Database> {
        data::open(&self.data)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        catalog: cli.catalog.clone().unwrap_or_else(|| cli.data.join("catalog.jsonl")),
        data: cli.data,
        seed: cli.seed,
    };
    match dispatch(&ctx, cli.cmd) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(ctx: &Ctx, cmd: Cmd) -> Result<Outcome> {
    match cmd {
        Cmd::Load { csv, name, schema } => load(ctx, &csv, name, &schema),
        Cmd::Run { query, use_sketch, show_rewrite, force } => run(ctx, &query, &use_sketch, show_rewrite, force),
        Cmd::Capture { query, partitions, force, show_rewrite } => capture_cmd(ctx, &query, &partitions, force, show_rewrite),
        Cmd::CheckSafe { query, attrs, explain } => check_safe_cmd(ctx, &query, &attrs, explain),
        Cmd::CheckReuse { template, captured, incoming, explain } => {
            check_reuse_cmd(ctx, &template, &captured, &incoming, explain)
        }
        Cmd::Simulate { workload, policy, report, verify } => simulate(ctx, &workload, &policy, report.as_deref(), verify),
        Cmd::Catalog { cmd } => catalog_cmd(ctx, cmd),
    }
}

fn load(ctx: &Ctx, csv: &Path, name: Option<String>, schema: &str) -> Result<Outcome> {
    let name = match name {
        Some(n) => n,
        None => csv
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| usage(format!("cannot derive a relation name from {}", csv.display())))?
            .to_string(),
    };
    let rel = data::load(&ctx.data, csv, &SchemaDecl::parse(&name, schema)?)?;
    println!("loaded {name}: {} rows", rel.len());
    Ok(Outcome::Done)
}

fn query(text: &str, schemas: &std::collections::BTreeMap<String, Schema>) -> Result<Plan> {
    let q = parse_query(text)?;
    analyze(&q, schemas)?;
    if !q.params().is_empty() {
        return Err(usage("query has unbound parameters"));
    }
    Ok(q)
}

/// `(count, input)` of every top-k operator.
fn topks(p: &Plan, out: &mut Vec<(u64, Plan)>) {
    if let Plan::TopK { count, input, .. } = p {
        out.push((*count, (**input).clone()));
    }
    for c in p.children() {
        topks(c, out);
    }
}

fn run(ctx: &Ctx, text: &str, ids: &[u64], show_rewrite: bool, force: bool) -> Result<Outcome> {
    let db = ctx.db()?;
    let schemas = db.schemas();
    let q = query(text, &schemas)?;
    if ids.is_empty() {
        print!("{}", eval(&q, &db)?);
        return Ok(Outcome::Done);
    }
    let stats = Stats::from_database(&db);
    let mut cat = Catalog::write(&ctx.catalog)?;
    let incoming = Template::from_query(&q, &schemas).ok();
    let mut set = SketchSet::new();
    let mut used = Vec::new();
    for &id in ids {
        let rec = cat.get(id)?.clone();
        let reusable = match &incoming {
            Some((t, b)) if t.id() == rec.template_id => {
                check_reusable(t, &Binding::parse(&rec.binding)?, b, &schemas, &stats)?.is_reusable()
            }
            _ => false,
        };
        if !(rec.safe && reusable) {
            let why = if rec.safe { "is not proven to answer this query" } else { "was captured on attributes not proven safe" };
            if !force {
                eprintln!("entry {id} {why}; pass --force to apply it anyway");
                return Ok(Outcome::Negative);
            }
            eprintln!("warning: entry {id} {why}");
        }
        set.insert(rec.sketch()?)?;
        used.push(rec);
    }
    let rewritten = quse(&q, &set);
    if show_rewrite {
        println!("rewrite: {rewritten}");
    }
    let run = eval_skipping(&q, &db, &set)?;
    let mut result = run.result;
    if used.iter().any(|r| r.topk_runtime_check) {
        // The sketch only guarantees a top-k result if the operator still
        // sees at least `count` input rows on the skipped data.
        let mut ks = Vec::new();
        topks(&rewritten, &mut ks);
        for (count, input) in ks {
            if (eval(&input, &db)?.len() as u64) < count {
                eprintln!("warning: top-k input has fewer than {count} rows on the sketched data; evaluating without sketches");
                result = eval(&q, &db)?;
                break;
            }
        }
    }
    print!("{result}");
    for (r, c) in &run.scans {
        println!("scanned {r}: {}/{} rows", c.scanned, c.total);
    }
    for mut rec in used {
        rec.use_count += 1;
        cat.append(rec)?;
    }
    Ok(Outcome::Done)
}

fn partition(spec: &str, db: &Database, stats: &Stats) -> Result<RangePartition> {
    let bad = || usage(format!("partition `{spec}` is not rel.attr:equi-depth:K or rel.attr:bounds:LIT,..."));
    let mut it = spec.splitn(3, ':');
    let (col, method, arg) = (it.next().ok_or_else(bad)?, it.next().ok_or_else(bad)?, it.next().ok_or_else(bad)?);
    let (rel, attr) = col.split_once('.').ok_or_else(bad)?;
    match method {
        "equi-depth" => {
            let k: usize = arg.trim().parse().map_err(|_| bad())?;
            Ok(build_equi_depth(stats, rel, attr, k)?)
        }
        "bounds" => {
            let r = db.get(rel)?;
            let kind = r.schema.columns[r.schema.resolve(attr)?].kind;
            Ok(RangePartition::new(rel, attr, kind, Binding::parse(arg)?.0, None)?)
        }
        _ => Err(bad()),
    }
}

fn capture_cmd(ctx: &Ctx, text: &str, specs: &[String], force: bool, show_rewrite: bool) -> Result<Outcome> {
    let db = ctx.db()?;
    let schemas = db.schemas();
    let stats = Stats::from_database(&db);
    let q = query(text, &schemas)?;
    let (t, b) = Template::from_query(&q, &schemas)?;
    let parts = specs.iter().map(|s| partition(s, &db, &stats)).collect::<Result<Vec<_>>>()?;
    let mut x = AttrSet::new();
    for p in &parts {
        x.insert(p.relation(), p.attribute())?;
    }
    let report = check_safe(&q, &x, &schemas, &stats)?;
    if !report.is_safe() {
        println!("verdict: {} for {x}", report.verdict.name());
        if !force {
            eprintln!("refusing to capture on attributes not proven safe; pass --force to store a flagged sketch");
            return Ok(Outcome::Negative);
        }
    }
    let cap = capture(&q, &db, &parts)?;
    if show_rewrite {
        println!("{}", render_instrumented(&q, &db, &parts)?);
    }
    let mut cat = Catalog::write(&ctx.catalog)?;
    let stamp = cat.next_stamp();
    for s in cap.sketches.iter() {
        let rel = db.get(s.relation())?;
        let sel = if rel.is_empty() { 0.0 } else { count_members(s, rel)? as f64 / rel.len() as f64 };
        let rec = Record::new(cat.next_id(), &t, &b, s, stamp, sel, report.is_safe(), report.topk_runtime_check);
        println!(
            "entry {}: {}.{} bits {} hex {} ({} of {} fragments, selectivity {:.4}){}",
            rec.id,
            rec.relation,
            rec.attribute,
            rec.bits,
            rec.bits_hex,
            s.bits.count_ones(),
            s.bits.len(),
            sel,
            if rec.safe { "" } else { " [unsafe]" }
        );
        cat.append(rec)?;
    }
    Ok(Outcome::Done)
}

fn check_safe_cmd(ctx: &Ctx, text: &str, attrs: &str, explain: bool) -> Result<Outcome> {
    let db = ctx.db()?;
    let schemas = db.schemas();
    let q = query(text, &schemas)?;
    let report = check_safe(&q, &AttrSet::parse(attrs)?, &schemas, &Stats::from_database(&db))?;
    if explain {
        print!("{report}");
    } else {
        println!("verdict: {}", report.verdict.name());
    }
    Ok(if report.is_safe() { Outcome::Done } else { Outcome::Negative })
}

fn check_reuse_cmd(ctx: &Ctx, template: &str, captured: &str, incoming: &str, explain: bool) -> Result<Outcome> {
    let db = ctx.db()?;
    let schemas = db.schemas();
    let t = Template::new(parse_query(template)?, &schemas)?;
    let (c, i) = (Binding::parse(captured)?, Binding::parse(incoming)?);
    let report = check_reusable(&t, &c, &i, &schemas, &Stats::from_database(&db))?;
    if explain {
        print!("{report}");
    } else {
        println!("verdict: {}", report.verdict.name());
    }
    Ok(if report.is_reusable() { Outcome::Done } else { Outcome::Negative })
}

fn simulate(ctx: &Ctx, path: &Path, policy: &str, report: Option<&Path>, verify: bool) -> Result<Outcome> {
    let strategy = Strategy::parse(policy).ok_or_else(|| usage(format!("unknown policy `{policy}`")))?;
    let text = fs::read_to_string(path).map_err(io(path))?;
    let w: WorkloadJson =
        serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    let seed = ctx.seed.or(w.seed).unwrap_or(0);
    let spec = w.spec(seed)?;
    let mut policy = w.policy(strategy);
    policy.verify |= verify;
    let db = ctx.db()?;
    let schemas = db.schemas();
    let templates =
        spec.templates.iter().map(|t| Ok(Template::new(parse_query(&t.text)?, &schemas)?)).collect::<Result<Vec<_>>>()?;
    let mut tuner = Tuner::new(&db, policy)?;
    for q in generate_workload(&spec)? {
        tuner.step(&templates[q.template], &q.binding)?;
    }
    let r = Report::new(strategy, seed, &tuner.ledger, tuner.log.clone());
    println!(
        "{} queries ({} plain, {} capture, {} reuse): cost {:.1} vs {:.1} without sketches (ratio {:.3}), {} rows scanned",
        r.queries, r.plain, r.capture, r.reuse, r.total_cost, r.plain_cost, r.ratio, r.rows_scanned
    );
    if r.mismatches > 0 {
        println!("{} reused results differed from plain evaluation", r.mismatches);
    }
    if let Some(out) = report {
        let json = serde_json::to_string_pretty(&r).map_err(|source| CliError::Json { path: out.to_path_buf(), source })?;
        fs::write(out, json + "\n").map_err(io(out))?;
    }
    Ok(Outcome::Done)
}

fn catalog_cmd(ctx: &Ctx, cmd: CatalogCmd) -> Result<Outcome> {
    match cmd {
        CatalogCmd::List => {
            let cat = Catalog::read(&ctx.catalog)?;
            println!("id\ttemplate\tbinding\tsketch\tbits\thex\tuses\tselectivity\tflags");
            for r in cat.records.values() {
                let mut flags = Vec::new();
                if !r.safe {
                    flags.push("unsafe");
                }
                if r.topk_runtime_check {
                    flags.push("topk-check");
                }
                println!(
                    "{}\t{}\t{}\t{}.{}\t{}\t{}\t{}\t{:.4}\t{}",
                    r.id,
                    r.template_id,
                    r.binding,
                    r.relation,
                    r.attribute,
                    r.bits,
                    r.bits_hex,
                    r.use_count,
                    r.selectivity,
                    flags.join(",")
                );
            }
        }
        CatalogCmd::Show { id } => {
            let cat = Catalog::read(&ctx.catalog)?;
            let r = cat.get(id)?;
            let s = r.sketch()?;
            println!("entry {}", r.id);
            println!("template {} {}", r.template_id, r.template);
            println!("binding {}", r.binding);
            println!("sketch {}.{} ({}), partition {}", r.relation, r.attribute, r.kind, r.partition_ref);
            println!("bits {} hex {}", r.bits, r.bits_hex);
            println!("captured_at {} uses {} selectivity {:.4} safe {}", r.captured_at, r.use_count, r.selectivity, r.safe);
            if r.topk_runtime_check {
                println!("top-k input size is re-checked when the sketch is used");
            }
            for (i, label) in s.partition.labels().iter().enumerate() {
                println!("  {} f{} {label}", if s.bits.get(i) { '1' } else { '0' }, i + 1);
            }
        }
        CatalogCmd::Drop { id } => {
            Catalog::write(&ctx.catalog)?.drop_entry(id)?;
            println!("dropped entry {id}");
        }
    }
    Ok(Outcome::Done)
}
