//! Self-tuning over a parameterized workload: per query, run plain, reuse a
//! captured sketch or capture a new one. Also workload generation and the
//! capture amortization model.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::float::FloatCore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distributions::WeightedIndex;
use rand_distr::{Distribution, Normal};

use crate::capture::capture;
use crate::error::{Error, Result};
use crate::partition::{build_equi_depth, RangePartition, Stats};
use crate::relalg::{bag_eq, eval, Database, Plan, Schema};
use crate::reuse::{find_reusable, template_id, Binding, CatalogEntry, Template};
use crate::safety::{check_safe, AttrSet};
use crate::skipping::{count_members, eval_indexed, FragmentIndex};
use crate::sketch::SketchSet;
use crate::value::{Kind, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Capture only after repeated misses.
    Adaptive,
    /// Capture on every miss.
    Eager,
    /// Never use sketches.
    Plain,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Adaptive => "adaptive",
            Strategy::Eager => "eager",
            Strategy::Plain => "plain",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        match s {
            "adaptive" => Some(Strategy::Adaptive),
            "eager" => Some(Strategy::Eager),
            "plain" => Some(Strategy::Plain),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub selectivity_threshold: f64,
    pub evidence_threshold: u32,
    pub strategy: Strategy,
    /// Fixed cost added to every query.
    pub query_cost: f64,
    /// Capture costs `rows * (1 + capture_factor)`.
    pub capture_factor: f64,
    /// Fragments of the equi-depth partitions built for capture.
    pub fragments: usize,
    /// Observations kept for the trailing selectivity average.
    pub window: usize,
    /// Re-run reused queries without a sketch and count mismatches
    /// (not charged).
    pub verify: bool,
}

impl Default for Policy {
    fn default() -> Policy {
        Policy {
            selectivity_threshold: 0.75,
            evidence_threshold: 3,
            strategy: Strategy::Adaptive,
            query_cost: 100.0,
            capture_factor: 0.3,
            fragments: 1000,
            window: 10,
            verify: false,
        }
    }
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        if !(self.selectivity_threshold > 0.0 && self.selectivity_threshold <= 1.0) {
            return Err(Error::Invalid(format!("selectivity threshold {} not in (0, 1]", self.selectivity_threshold)));
        }
        if self.evidence_threshold == 0 || self.fragments == 0 || self.window == 0 {
            return Err(Error::Invalid("evidence threshold, fragments and window must be positive".to_string()));
        }
        if self.query_cost < 0.0 || self.capture_factor < 0.0 {
            return Err(Error::Invalid("costs must be non-negative".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Plain,
    Reuse,
    Capture,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::Reuse => "reuse",
            Mode::Capture => "capture",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub query: usize,
    pub template_id: String,
    pub binding: Binding,
    pub mode: Mode,
    pub estimate: Option<f64>,
    pub rows_scanned: usize,
    pub cost: f64,
    /// Cost of the same query run plain.
    pub plain_cost: f64,
    /// Catalog entry used or created.
    pub entry: Option<usize>,
    /// With `verify`: whether a reused result matched the plain result.
    pub verified: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostLedger {
    pub entries: Vec<LedgerEntry>,
    /// Sum of `plain_cost` over all queries.
    pub c_nops: f64,
    pub c_plain: f64,
    pub c_cap: f64,
    pub c_use: f64,
}

impl CostLedger {
    fn push(&mut self, e: LedgerEntry) {
        self.c_nops += e.plain_cost;
        match e.mode {
            Mode::Plain => self.c_plain += e.cost,
            Mode::Reuse => self.c_use += e.cost,
            Mode::Capture => self.c_cap += e.cost,
        }
        self.entries.push(e);
    }

    pub fn total(&self) -> f64 {
        self.c_plain + self.c_cap + self.c_use
    }

    pub fn rows_scanned(&self) -> usize {
        self.entries.iter().map(|e| e.rows_scanned).sum()
    }

    /// Running totals `(strategy cost, plain cost)` after each query.
    pub fn cumulative(&self) -> Vec<(f64, f64)> {
        let (mut a, mut b) = (0.0, 0.0);
        self.entries
            .iter()
            .map(|e| {
                a += e.cost;
                b += e.plain_cost;
                (a, b)
            })
            .collect()
    }

    pub fn count(&self, m: Mode) -> usize {
        self.entries.iter().filter(|e| e.mode == m).count()
    }

    pub fn first(&self, m: Mode) -> Option<usize> {
        self.entries.iter().find(|e| e.mode == m).map(|e| e.query)
    }

    pub fn mismatches(&self) -> usize {
        self.entries.iter().filter(|e| e.verified == Some(false)).count()
    }
}

impl fmt::Display for CostLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let est = e.estimate.map_or("-".to_string(), |s| format!("{s:.4}"));
            writeln!(
                f,
                "{} {} {} {} est={est} rows={} cost={:.1} plain={:.1}",
                e.query,
                e.template_id,
                e.binding,
                e.mode.name(),
                e.rows_scanned,
                e.cost,
                e.plain_cost
            )?;
        }
        write!(
            f,
            "total={:.1} noPS={:.1} plain={:.1} capture={:.1} use={:.1}",
            self.total(),
            self.c_nops,
            self.c_plain,
            self.c_cap,
            self.c_use
        )
    }
}

/// What `step` did with one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub mode: Mode,
    pub estimate: Option<f64>,
    pub entry: Option<usize>,
    pub result: crate::relalg::Relation,
}

/// Tuning state: the catalog, miss counters and selectivity observations.
pub struct Tuner<'a> {
    db: &'a Database,
    schemas: BTreeMap<String, Schema>,
    stats: Stats,
    pub policy: Policy,
    pub catalog: Vec<CatalogEntry>,
    pub ledger: CostLedger,
    /// Notes such as templates without a safe attribute.
    pub log: Vec<String>,
    misses: BTreeMap<(String, String), u32>,
    safe: BTreeMap<String, Option<AttrSet>>,
    partitions: BTreeMap<(String, String), RangePartition>,
    indexes: BTreeMap<u64, FragmentIndex>,
    observed: BTreeMap<String, VecDeque<f64>>,
}

impl<'a> Tuner<'a> {
    pub fn new(db: &'a Database, policy: Policy) -> Result<Tuner<'a>> {
        policy.validate()?;
        Ok(Tuner {
            db,
            schemas: db.schemas(),
            stats: Stats::from_database(db),
            policy,
            catalog: Vec::new(),
            ledger: CostLedger::default(),
            log: Vec::new(),
            misses: BTreeMap::new(),
            safe: BTreeMap::new(),
            partitions: BTreeMap::new(),
            indexes: BTreeMap::new(),
            observed: BTreeMap::new(),
        })
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    /// First single attribute (scan order, then schema order) that
    /// `check_safe` accepts for the template; cached per template.
    pub fn safe_attributes(&mut self, t: &Template) -> Result<Option<AttrSet>> {
        if let Some(s) = self.safe.get(t.id()) {
            return Ok(s.clone());
        }
        let mut found = None;
        'outer: for r in t.plan().scans() {
            let rel = self.db.get(&r)?;
            if rel.is_empty() {
                continue;
            }
            for c in &rel.schema.columns {
                let x = AttrSet::single(&r, &c.name);
                if check_safe(t.plan(), &x, &self.schemas, &self.stats)?.is_safe() {
                    found = Some(x);
                    break 'outer;
                }
            }
        }
        if found.is_none() {
            self.log.push(format!("template {}: no safe attribute, running plain", t.id()));
        }
        self.safe.insert(t.id().to_string(), found.clone());
        Ok(found)
    }

    fn partition(&mut self, rel: &str, attr: &str) -> Result<RangePartition> {
        let key = (rel.to_string(), attr.to_string());
        if let Some(p) = self.partitions.get(&key) {
            return Ok(p.clone());
        }
        let p = build_equi_depth(&self.stats, rel, attr, self.policy.fragments)?;
        self.partitions.insert(key, p.clone());
        Ok(p)
    }

    fn full_rows(&self, plan: &Plan) -> Result<usize> {
        let mut n = 0;
        for r in plan.scans() {
            n += self.db.get(&r)?.len();
        }
        Ok(n)
    }

    fn observe(&mut self, tid: &str, s: f64) {
        let q = self.observed.entry(tid.to_string()).or_default();
        q.push_back(s);
        while q.len() > self.policy.window {
            q.pop_front();
        }
    }

    /// Trailing average of observed provenance fractions of the template.
    fn trailing(&self, tid: &str) -> Option<f64> {
        let q = self.observed.get(tid)?;
        if q.is_empty() {
            return None;
        }
        Some(q.iter().sum::<f64>() / q.len() as f64)
    }

    /// Decides and executes one query.
    pub fn step(&mut self, t: &Template, b: &Binding) -> Result<Decision> {
        let plan = t.instantiate(b)?;
        let rows = self.full_rows(&plan)?;
        let plain_cost = rows as f64 + self.policy.query_cost;
        let query = self.ledger.entries.len();
        let mut entry = LedgerEntry {
            query,
            template_id: t.id().to_string(),
            binding: b.clone(),
            mode: Mode::Plain,
            estimate: None,
            rows_scanned: rows,
            cost: plain_cost,
            plain_cost,
            entry: None,
            verified: None,
        };
        let x = match self.policy.strategy {
            Strategy::Plain => None,
            _ => self.safe_attributes(t)?,
        };
        let Some(x) = x else {
            let result = eval(&plan, self.db)?;
            self.ledger.push(entry);
            return Ok(Decision { mode: Mode::Plain, estimate: None, entry: None, result });
        };

        let hit = find_reusable(&self.catalog, t, b, &self.schemas, &self.stats)?;
        let estimate = match hit {
            Some(i) => Some(self.catalog[i].selectivity),
            None => self.trailing(t.id()),
        };
        entry.estimate = estimate;
        if estimate.is_some_and(|s| s > self.policy.selectivity_threshold) {
            let result = eval(&plan, self.db)?;
            self.ledger.push(entry);
            return Ok(Decision { mode: Mode::Plain, estimate, entry: None, result });
        }

        if let Some(i) = hit {
            let e = &mut self.catalog[i];
            e.use_count += 1;
            let set = SketchSet::single(e.sketch.clone());
            let fp = e.sketch.bits.partition_fingerprint();
            if !self.indexes.contains_key(&fp) {
                let idx = FragmentIndex::build(&e.sketch.partition, self.db.get(e.sketch.relation())?)?;
                self.indexes.insert(fp, idx);
            }
            let run = eval_indexed(&plan, self.db, &set, &[&self.indexes[&fp]])?;
            let scanned = run.rows_scanned();
            let sel = e.selectivity;
            if self.policy.verify {
                entry.verified = Some(bag_eq(&run.result, &eval(&plan, self.db)?));
            }
            self.observe(t.id(), sel);
            entry.mode = Mode::Reuse;
            entry.rows_scanned = scanned;
            entry.cost = scanned as f64 + self.policy.query_cost;
            entry.entry = Some(i);
            self.ledger.push(entry);
            return Ok(Decision { mode: Mode::Reuse, estimate, entry: Some(i), result: run.result });
        }

        let key = (t.id().to_string(), x.to_string());
        let misses = {
            let m = self.misses.entry(key.clone()).or_insert(0);
            *m += 1;
            *m
        };
        let capture_now = match self.policy.strategy {
            Strategy::Eager => true,
            Strategy::Adaptive => misses >= self.policy.evidence_threshold,
            Strategy::Plain => false,
        };
        if !capture_now {
            let result = eval(&plan, self.db)?;
            self.ledger.push(entry);
            return Ok(Decision { mode: Mode::Plain, estimate, entry: None, result });
        }

        self.misses.insert(key, 0);
        let (rel, attr) = x.iter().next().map(|(r, a)| (r.to_string(), a.to_string())).unwrap();
        let p = self.partition(&rel, &attr)?;
        let cap = capture(&plan, self.db, core::slice::from_ref(&p))?;
        let sketch = cap.sketches.get(&rel).cloned().ok_or_else(|| Error::Sketch(format!("no sketch for {rel}")))?;
        let relation = self.db.get(&rel)?;
        let sel = if relation.is_empty() { 0.0 } else { count_members(&sketch, relation)? as f64 / relation.len() as f64 };
        self.observe(t.id(), sel);
        self.catalog.push(CatalogEntry {
            template_id: t.id().to_string(),
            binding: b.clone(),
            sketch,
            captured_at: query as u64,
            use_count: 0,
            selectivity: sel,
        });
        let i = self.catalog.len() - 1;
        entry.mode = Mode::Capture;
        entry.cost = rows as f64 * (1.0 + self.policy.capture_factor) + self.policy.query_cost;
        entry.entry = Some(i);
        self.ledger.push(entry);
        Ok(Decision { mode: Mode::Capture, estimate, entry: Some(i), result: cap.result })
    }
}

/// Runs a workload of `(template index, binding)` pairs.
pub fn simulate(db: &Database, templates: &[Template], workload: &[(usize, Binding)], policy: Policy) -> Result<CostLedger> {
    let mut tuner = Tuner::new(db, policy)?;
    for (t, b) in workload {
        let t = templates.get(*t).ok_or_else(|| Error::Invalid(format!("no template #{t}")))?;
        tuner.step(t, b)?;
    }
    Ok(tuner.ledger)
}

/// Normal distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dist {
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamSpec {
    /// One parameter drawn from a normal distribution.
    Normal { dist: Dist, kind: Kind },
    /// Two consecutive parameters `$k = start`, `$k+1 = start + width`.
    Interval { start: Dist, width: Dist, kind: Kind },
    /// A fixed value.
    Fixed(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSpec {
    pub text: String,
    pub weight: f64,
    pub params: Vec<ParamSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub templates: Vec<TemplateSpec>,
    pub queries: usize,
    pub seed: u64,
}

/// One generated query: template index, its id and the binding.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadQuery {
    pub template: usize,
    pub template_id: String,
    pub binding: Binding,
}

fn number(x: f64, kind: Kind) -> Value {
    match kind {
        Kind::Int => Value::Int(FloatCore::round(x) as i64),
        // Two decimal places keep generated rationals readable.
        _ => Value::rat(BigRational::new(BigInt::from(FloatCore::round(x * 100.0) as i64), BigInt::from(100))),
    }
}

fn draw(d: &Dist, rng: &mut ChaCha8Rng) -> Result<f64> {
    if d.stddev == 0.0 {
        return Ok(d.mean);
    }
    let n = Normal::new(d.mean, d.stddev).map_err(|e| Error::Invalid(format!("bad distribution: {e}")))?;
    Ok(n.sample(rng))
}

/// Deterministic workload: per query, pick a template by weight and draw
/// its parameters.
pub fn generate_workload(spec: &WorkloadSpec) -> Result<Vec<WorkloadQuery>> {
    if spec.templates.is_empty() {
        return Err(Error::Invalid("workload has no templates".to_string()));
    }
    for t in &spec.templates {
        if !(t.weight > 0.0) {
            return Err(Error::Invalid(format!("template weight {} must be positive", t.weight)));
        }
        for p in &t.params {
            let bad = match p {
                ParamSpec::Normal { dist, .. } => dist.stddev < 0.0,
                ParamSpec::Interval { start, width, .. } => start.stddev < 0.0 || width.stddev < 0.0,
                ParamSpec::Fixed(_) => false,
            };
            if bad {
                return Err(Error::Invalid("standard deviations must be non-negative".to_string()));
            }
        }
    }
    let ids: Vec<String> =
        spec.templates.iter().map(|t| Ok(template_id(&crate::relalg::parse_query(&t.text)?))).collect::<Result<_>>()?;
    let weights = WeightedIndex::new(spec.templates.iter().map(|t| t.weight))
        .map_err(|e| Error::Invalid(format!("bad weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.queries);
    for _ in 0..spec.queries {
        let ti = if spec.templates.len() == 1 { 0 } else { weights.sample(&mut rng) };
        let mut values = Vec::new();
        for p in &spec.templates[ti].params {
            match p {
                ParamSpec::Normal { dist, kind } => values.push(number(draw(dist, &mut rng)?, *kind)),
                ParamSpec::Interval { start, width, kind } => {
                    let s = number(draw(start, &mut rng)?, *kind);
                    let w = number(draw(width, &mut rng)?, *kind);
                    values.push(s.clone());
                    values.push(s.add(&w));
                }
                ParamSpec::Fixed(v) => values.push(v.clone()),
            }
        }
        // Keep the generator's state independent of the parameter count.
        let _: u32 = rng.gen();
        out.push(WorkloadQuery { template: ti, template_id: ids[ti].clone(), binding: Binding(values) });
    }
    Ok(out)
}

/// Cheapest way to run a query `n_runs` times: `None` is running plain
/// (`c_nops * n_runs`), `Some(i)` is capturing with option `i` and then
/// using it (`c_cap + c_use * n_runs`). Ties go to plain, then to the
/// earlier option.
pub fn optimal_option(c_nops: f64, options: &[(f64, f64)], n_runs: u64) -> Option<usize> {
    let n = n_runs as f64;
    let mut best = c_nops * n;
    let mut choice = None;
    for (i, (cap, usec)) in options.iter().enumerate() {
        let c = cap + usec * n;
        if c < best {
            best = c;
            choice = Some(i);
        }
    }
    choice
}
