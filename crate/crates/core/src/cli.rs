//! Command runner and report emission for the `uilkit` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Value};

use crate::arith::{critical_orbit_partial, f64_down, f64_up, DEFAULT_PREC_CAP};
use crate::error::{Error, Result};
use crate::hofbauer::{cutting_value_gaps, f_graph, long_branched_evidence, tower, tower_crosscheck, Geometry};
use crate::inverse_limit::{classification_report, reluctance_search, RecurrenceClass, TwoSidedItinerary};
use crate::kneading::{
    admissible_disjoint, admissible_q_nu, cutting_data, nu_from_orbit, nu_from_q, q_asymptotics, q_list, renorm_scan,
    KneadingPrefix,
};
use crate::presets::{nu_of, parse_slope, q_preset};
use crate::seqgen::{generate_from, WordLedger, DEFAULT_MAX_LEN};
use crate::subcontinua::{build_chain, classify_chain, find_qcond_chains, nasty_cascade_rule, Variant, CASCADE_MIN};
use crate::verdict::{Status, Verdict};
use crate::SlopeParam;

pub const SCHEMA: &str = "uilkit-report/1";
pub const PREC_CAP_ENV: &str = "UILKIT_PREC_CAP";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Knead,
    Tower,
    Classify,
    Persistence,
    Subcontinua,
    Genseq,
    Density,
    Fmap,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Input {
    Slope(String),
    Nu(String),
    Q(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<Input>,
    pub horizon: Option<usize>,
    pub depth: Option<usize>,
    /// `ε = 2^-eps_bits`.
    pub eps_bits: Option<i32>,
    pub prec_cap: Option<u32>,
    pub format: Format,
    /// Itineraries for `classify`.
    pub items: Vec<String>,
    /// Target length for `genseq`.
    pub len: Option<usize>,
    pub compat: bool,
    pub grid: Option<usize>,
    pub kmax: Option<usize>,
    #[serde(skip)]
    pub resume: Option<PathBuf>,
    #[serde(skip)]
    pub ledger_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command, input: Option<Input>) -> RunConfig {
        RunConfig {
            command,
            input,
            horizon: None,
            depth: None,
            eps_bits: None,
            prec_cap: None,
            format: Format::Json,
            items: Vec::new(),
            len: None,
            compat: true,
            grid: None,
            kmax: None,
            resume: None,
            ledger_out: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.horizon, self.depth, self.len, self.grid].iter().all(|v| *v != Some(0));
        if !positive || self.eps_bits.is_some_and(|b| b <= 0) || self.prec_cap == Some(0) {
            return Err(Error::Config("numeric settings must be positive".into()));
        }
        Ok(())
    }

    fn prec_cap(&self) -> Result<u32> {
        if let Ok(v) = std::env::var(PREC_CAP_ENV) {
            return v.trim().parse().map_err(|_| Error::Config(format!("{} must be a positive integer", PREC_CAP_ENV)));
        }
        Ok(self.prec_cap.unwrap_or(DEFAULT_PREC_CAP))
    }
}

/// Parse `--eps`: `2^-k`, a bare exponent `k`, or a decimal in (0, 1).
pub fn parse_eps(text: &str) -> Result<i32> {
    let t = text.trim();
    let bad = || Error::Config(format!("cannot read epsilon {:?}", text));
    if let Some(e) = t.strip_prefix("2^-").or_else(|| t.strip_prefix("2^(-").map(|r| r.trim_end_matches(')'))) {
        return e.parse().map_err(|_| bad());
    }
    if let Ok(k) = t.parse::<i32>() {
        return if k > 0 { Ok(k) } else { Err(bad()) };
    }
    let x: f64 = t.parse().map_err(|_| bad())?;
    if !(x > 0.0 && x < 1.0) {
        return Err(bad());
    }
    Ok((-x.log2()).round() as i32)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Table {
        Table { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub config: RunConfig,
    pub result: Value,
    pub summary: Value,
    #[serde(skip)]
    pub table: Option<Table>,
}

fn slope_of(cfg: &RunConfig) -> Result<SlopeParam> {
    let cap = cfg.prec_cap()?;
    let s = match &cfg.input {
        Some(Input::Slope(t)) => parse_slope(t).map_err(|e| Error::Config(format!("slope {:?}: {}", t, e)))?,
        Some(Input::Q(t)) => match q_preset(t) {
            Some(f) => SlopeParam::kneading(t, Arc::new(move |n| nu_of(f, n))),
            None => return Err(Error::Config("a slope is needed; --q accepts only a named map here".into())),
        },
        Some(Input::Nu(_)) => return Err(Error::Config("a slope is needed; give --slope or a named --q".into())),
        None => return Err(Error::Config("missing --slope/--nu/--q".into())),
    };
    Ok(s.with_prec_cap(cap))
}

fn parse_q_list(text: &str) -> Result<Vec<usize>> {
    text.split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|t| t.trim().parse().map_err(|_| Error::Config(format!("bad Q value {:?}", t))))
        .collect()
}

/// Cutting times from a kneading map list: `S_k = S_{k−1} + S_{Q(k)}`.
fn s_from_q(q: &[usize]) -> Result<Vec<usize>> {
    let mut s = vec![1usize];
    for (i, &v) in q.iter().enumerate() {
        if v > i {
            return Err(Error::Config(format!("Q({}) = {} is not below {}", i + 1, v, i + 1)));
        }
        s.push(s[i] + s[v]);
    }
    Ok(s)
}

fn nu_of_input(cfg: &RunConfig, horizon: usize) -> Result<KneadingPrefix> {
    match &cfg.input {
        Some(Input::Nu(t)) => Ok(KneadingPrefix::parse(t).map_err(|e| Error::Config(format!("ν {:?}: {}", t, e)))?),
        Some(Input::Q(t)) => match q_preset(t) {
            Some(f) => Ok(KneadingPrefix::literal(nu_of(f, horizon))?),
            None => {
                let q = parse_q_list(t)?;
                let s = s_from_q(&q)?;
                Ok(nu_from_q(&q, *s.last().unwrap())?)
            }
        },
        Some(Input::Slope(_)) => Ok(nu_from_orbit(&slope_of(cfg)?, horizon)?),
        None => Err(Error::Config("missing --slope/--nu/--q".into())),
    }
}

fn q_of_input(cfg: &RunConfig, horizon: usize) -> Result<Vec<usize>> {
    match &cfg.input {
        Some(Input::Q(t)) => match q_preset(t) {
            Some(f) => Ok(q_list(f, horizon)),
            None => parse_q_list(t),
        },
        _ => {
            // S_k ≥ k + 1, and usually much more, so this is a generous length.
            let nu = nu_of_input(cfg, (4 * horizon).max(64))?;
            Ok(cutting_data(&nu)?.q.into_iter().take(horizon).collect())
        }
    }
}

fn eps_rational(bits: i32) -> BigRational {
    BigRational::new(1.into(), num_bigint::BigInt::from(1u8) << bits as usize)
}

pub fn run_command(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let (result, summary, table) = match cfg.command {
        Command::Knead => knead(cfg)?,
        Command::Tower => tower_cmd(cfg)?,
        Command::Classify => classify(cfg)?,
        Command::Persistence => persistence(cfg)?,
        Command::Subcontinua => subcontinua(cfg)?,
        Command::Genseq => genseq(cfg)?,
        Command::Density => density(cfg)?,
        Command::Fmap => fmap(cfg)?,
    };
    Ok(Report {
        schema: SCHEMA,
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command,
        config: cfg.clone(),
        result,
        summary,
        table,
    })
}

type Out = (Value, Value, Option<Table>);

/// Shortest round-trip form, with an exponent for very small or large values.
fn num(x: f64) -> String {
    format!("{:?}", x)
}

/// The longest certified prefix within the precision cap, and where it stopped.
fn nu_within_cap(cfg: &RunConfig, n: usize) -> Result<(KneadingPrefix, Option<usize>)> {
    let slope = slope_of(cfg)?;
    let orbit = critical_orbit_partial(&slope, n)?;
    let stop = orbit.first_unresolved();
    let end = stop.unwrap_or(orbit.len());
    let bits: Vec<u8> = orbit.signs[1..end].iter().map(|s| s.symbol().unwrap()).collect();
    Ok((KneadingPrefix::literal(bits)?, stop))
}

fn knead(cfg: &RunConfig) -> Result<Out> {
    let (nu, truncated_at) = match (&cfg.input, cfg.horizon) {
        (Some(Input::Slope(_)), None) => nu_within_cap(cfg, 10_000)?,
        _ => (nu_of_input(cfg, cfg.horizon.unwrap_or(10_000))?, None),
    };
    let lex = admissible_q_nu(&nu);
    let dis = admissible_disjoint(&nu);
    let agree = (lex.status == Status::Refuted) == (dis.status == Status::Refuted);
    if !agree {
        return Err(Error::Inconsistent(format!("admissibility checkers disagree on {}", nu.dotted())));
    }
    let admissible = dis.status != Status::Refuted;
    let mut table = Table::new("knead", &["n", "nu", "beta", "cutting", "cocutting"]);
    let result = if admissible {
        let cd = cutting_data(&nu)?;
        for n in 1..=nu.len() {
            table.push(vec![
                n.to_string(),
                nu.nu(n).to_string(),
                cd.beta[n].to_string(),
                cd.is_cutting_time(n).to_string(),
                cd.cocut.times.contains(&n).to_string(),
            ]);
        }
        json!({
            "nu": nu.dotted(),
            "length": nu.len(),
            "s": cd.s,
            "q": cd.q,
            "beta": &cd.beta[1..],
            "cocutting": cd.cocut,
            "kappa": cd.kappa,
            "admissible_q": lex,
            "admissible_disjoint": dis,
        })
    } else {
        json!({"nu": crate::kneading::word_string(&nu.bits), "length": nu.len(), "admissible_q": lex, "admissible_disjoint": dis})
    };
    let summary =
        json!({"admissible": admissible, "checkers_agree": agree, "length": nu.len(), "truncated_at": truncated_at});
    Ok((result, summary, Some(table)))
}

fn tower_cmd(cfg: &RunConfig) -> Result<Out> {
    let upto = cfg.horizon.unwrap_or(256);
    let mut table = Table::new("tower", &["n", "len_lo", "len_hi"]);
    if !matches!(cfg.input, Some(Input::Slope(_))) && !matches!(&cfg.input, Some(Input::Q(t)) if q_preset(t).is_some())
    {
        // Index form only.
        let nu = nu_of_input(cfg, upto)?;
        let cd = cutting_data(&nu)?;
        let levels: Vec<Value> = (1..=upto.min(nu.len()))
            .map(|n| json!({"n": n, "beta": cd.beta[n], "contains_c": cd.is_cutting_time(n)}))
            .collect();
        return Ok((json!({"levels": levels}), json!({"levels": levels.len(), "numeric": false}), None));
    }
    let slope = slope_of(cfg)?;
    let levels = tower(&slope, upto)?;
    let geom = Geometry::build(&slope, 0, upto)?;
    tower_crosscheck(&geom, upto)?;
    let mut rows = Vec::new();
    for l in &levels {
        let len = l.length.as_ref().unwrap();
        let (lo, hi) = (f64_down(&len.lo()), f64_up(&len.hi()));
        table.push(vec![l.n.to_string(), num(lo), num(hi)]);
        rows.push(
            json!({"n": l.n, "beta": l.endpoint_indices.1, "contains_c": l.contains_c, "len_lo": lo, "len_hi": hi}),
        );
    }
    let threshold = eps_rational(cfg.eps_bits.unwrap_or(10));
    let lb = long_branched_evidence(&slope, upto, &threshold)?;
    let result = json!({
        "slope": slope.label(),
        "levels": rows,
        "long_branched": lb.verdict,
        "long_branched_symbolic": lb.symbolic,
        "min_len_hi": f64_up(&lb.min_len.hi()),
        "argmin": lb.argmin,
        "window_minima": lb.window_minima,
    });
    let summary = json!({"levels": levels.len(), "numeric": true, "crosscheck": "ok"});
    Ok((result, summary, Some(table)))
}

fn workers(n: usize) -> usize {
    std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1).min(n).max(1)
}

fn classify(cfg: &RunConfig) -> Result<Out> {
    if cfg.items.is_empty() {
        return Err(Error::Config("classify needs at least one itinerary".into()));
    }
    let its: Vec<TwoSidedItinerary> = cfg.items.iter().map(|t| TwoSidedItinerary::parse(t)).collect::<Result<_>>()?;
    let slope = slope_of(cfg)?;
    let depth = cfg.depth.unwrap_or(256);
    let horizon = cfg.horizon.unwrap_or(2048);
    let eps = 2f64.powi(-cfg.eps_bits.unwrap_or(crate::inverse_limit::DEFAULT_EPS_BITS));
    // The slope enclosure is cached, so workers share its cost.
    let n = workers(its.len());
    let mut slots: Vec<Option<Result<Value>>> = vec![None; its.len()];
    std::thread::scope(|scope| {
        let chunks: Vec<_> = slots.chunks_mut(its.len().div_ceil(n)).zip(its.chunks(its.len().div_ceil(n))).collect();
        for (out, items) in chunks {
            let slope = &slope;
            scope.spawn(move || {
                for (o, it) in out.iter_mut().zip(items) {
                    *o = Some(
                        classification_report(it, slope, depth, eps, horizon)
                            .map(|pc| json!({"itinerary": it.to_string(), "classification": pc})),
                    );
                }
            });
        }
    });
    let mut items = Vec::new();
    let (mut folding, mut endpoint, mut violations) = (0, 0, 0);
    for (it, slot) in its.iter().zip(slots) {
        match slot.unwrap() {
            Ok(v) => {
                let f = v["classification"]["folding"].clone();
                let e = v["classification"]["endpoint"].clone();
                let lean =
                    |x: &Value| serde_json::from_value::<Verdict>(x.clone()).map(|v| v.leans_true()).unwrap_or(false);
                let refuted = |x: &Value| x["status"] == "refuted";
                folding += lean(&f) as usize;
                endpoint += lean(&e) as usize;
                violations += (lean(&e) && refuted(&f)) as usize;
                items.push(v);
            }
            Err(e) if e.is_precision() => return Err(e),
            Err(e) => items.push(json!({"itinerary": it.to_string(), "error": e.to_string()})),
        }
    }
    if violations > 0 {
        return Err(Error::Inconsistent(format!("{} endpoint(s) outside the folding set", violations)));
    }
    let summary = json!({"items": its.len(), "folding_leans_true": folding, "endpoint_leans_true": endpoint});
    Ok((json!({"slope": slope.label(), "depth": depth, "horizon": horizon, "items": items}), summary, None))
}

fn persistence(cfg: &RunConfig) -> Result<Out> {
    let slope = slope_of(cfg)?;
    let horizon = cfg.horizon.unwrap_or(1024);
    let grid: Vec<i32> = match cfg.eps_bits {
        Some(b) => vec![b],
        None => (6..=12).collect(),
    };
    let rep = reluctance_search(&slope, &grid, 64, horizon)?;
    let persistent = matches!(rep.class, RecurrenceClass::PersistentEvidence { .. });
    let fe = if persistent {
        Verdict::evidence("folding-equals-endpoints", horizon as u64, json!({"from": "persistent recurrence"}))
    } else {
        Verdict::counter_evidence(
            "folding-equals-endpoints",
            horizon as u64,
            json!({"from": "monotone pull-back witness"}),
        )
    };
    let class = match rep.class {
        RecurrenceClass::PersistentEvidence { .. } => "PersistentEvidence",
        RecurrenceClass::ReluctantEvidence { .. } => "ReluctantEvidence",
        RecurrenceClass::NonRecurrent => "NonRecurrent",
    };
    let summary = json!({"class": class, "f_equals_e_expected": persistent});
    let result = json!({"slope": slope.label(), "report": rep, "f_equals_e": fe});
    Ok((result, summary, None))
}

fn subcontinua(cfg: &RunConfig) -> Result<Out> {
    let horizon = cfg.horizon.unwrap_or(40);
    let q = q_of_input(cfg, horizon)?;
    let horizon = horizon.min(q.len());
    let mut chains_out = Vec::new();
    let mut counts = Vec::new();
    for variant in [Variant::Eq3, Variant::Eq4] {
        let chains = find_qcond_chains(&q, horizon, variant);
        counts.push(json!({"variant": variant, "chains": chains.len()}));
        for c in chains {
            let class = classify_chain(&c.k, &q, horizon, None);
            chains_out.push(json!({"chain": c, "class": class}));
        }
    }
    let cascade = nasty_cascade_rule(&q, horizon, CASCADE_MIN);
    let renorm = renorm_scan(&q, horizon);
    let mut construction = Value::Null;
    if let (Ok(slope), Some(first)) = (slope_of(cfg), chains_out.first()) {
        let k: Vec<usize> = serde_json::from_value(first["chain"]["k"].clone()).unwrap_or_default();
        let k: Vec<usize> = k.into_iter().take(cfg.depth.unwrap_or(4)).collect();
        construction = match build_chain(&slope, &k, Variant::Eq3) {
            Ok(ch) => {
                let class = classify_chain(&ch.k_indices, &q, horizon, Some(&ch.d_levels));
                json!({"chain": ch, "class": class})
            }
            Err(e) if e.is_precision() => return Err(e),
            Err(e) => json!({"k": k, "error": e.to_string()}),
        };
    }
    let result = json!({
        "q": q,
        "chains": chains_out,
        "construction": construction,
        "cascade": cascade,
        "renormalisable_at": renorm.cascade,
        "q_asymptotics": q_asymptotics(&q),
    });
    let summary = json!({"variants": counts, "non_renormalisable": renorm.cascade.is_empty()});
    Ok((result, summary, None))
}

fn genseq(cfg: &RunConfig) -> Result<Out> {
    let target = cfg.len.unwrap_or(25);
    let start = match &cfg.resume {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {}", p.display(), e)))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("resume file {}: {}", p.display(), e)))?
        }
        None => WordLedger::seed(DEFAULT_MAX_LEN),
    };
    let g = generate_from(start, target, cfg.compat)?;
    if let Some(p) = &cfg.ledger_out {
        write_atomic(p, serde_json::to_string(&g.ledger).unwrap().as_bytes())?;
    }
    let mut table = Table::new("genseq", &["step", "v", "v_prime", "n_prime", "r", "new_q", "compat"]);
    for (i, p) in g.steps.iter().enumerate() {
        let q: Vec<String> = p.new_q.iter().map(|x| x.to_string()).collect();
        table.push(vec![
            (i + 1).to_string(),
            p.v.clone(),
            p.v_prime.clone(),
            p.n_prime.to_string(),
            p.r.to_string(),
            q.join(" "),
            p.compat.to_string(),
        ]);
    }
    let c = &g.certificate;
    let summary = json!({
        "length": g.nu.len(),
        "steps": g.steps.len(),
        "coverage_len": c.coverage_len,
        "q_ne_1": c.q_ne_1,
        "q_le_k_minus_2": c.q_le_k_minus_2,
        "checkers_accept": c.checkers_accept,
        "ledger_sound": c.ledger_sound,
    });
    let result = json!({"nu": g.nu.dotted(), "certificate": c, "steps": g.steps});
    Ok((result, summary, Some(table)))
}

fn density(cfg: &RunConfig) -> Result<Out> {
    let slope = slope_of(cfg)?;
    let kmax = cfg.kmax.or(cfg.horizon).unwrap_or(15);
    let bits = cfg.eps_bits.unwrap_or(6);
    let rep = cutting_value_gaps(&slope, kmax, &eps_rational(bits))?;
    let mut table = Table::new("gaps", &["label", "lo", "hi", "gap_after_lo", "gap_after_hi", "max_gap"]);
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    for r in &rep.all.rows {
        table.push(vec![
            r.label.clone(),
            num(r.lo),
            num(r.hi),
            opt(r.gap_after_lo),
            opt(r.gap_after_hi),
            r.max_gap.to_string(),
        ]);
    }
    let summary = json!({"k_max": kmax, "status": rep.verdict.status, "small_q_status": rep.small_q_verdict.status});
    Ok((json!({"slope": slope.label(), "gaps": rep}), summary, Some(table)))
}

fn fmap(cfg: &RunConfig) -> Result<Out> {
    let slope = slope_of(cfg)?;
    let kmax = cfg.kmax.unwrap_or(10);
    let grid = cfg.grid.unwrap_or(256);
    let geom = Geometry::build(&slope, kmax + 1, 16)?;
    let rows = f_graph(&geom, grid, kmax)?;
    let mut table = Table::new("fmap", &["x_lo", "x_hi", "f_lo", "f_hi", "cell_k"]);
    for r in &rows {
        table.push(vec![num(r.x_lo), num(r.x_hi), num(r.f_lo), num(r.f_hi), r.cell_k.to_string()]);
    }
    let summary = json!({"rows": rows.len(), "grid": grid, "k_max": kmax});
    Ok((json!({"slope": slope.label(), "rows": rows}), summary, Some(table)))
}

/// Write to a sibling temporary file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {}", path.display(), e));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Render a report in the requested format.
pub fn render(report: &Report, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let table = report
                .table
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{:?} has no CSV output", report.command).to_lowercase()))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&table.header).map_err(|e| Error::Io(e.to_string()))?;
            for r in &table.rows {
                w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
            }
            w.into_inner().map_err(|e| Error::Io(e.to_string()))
        }
    }
}

/// Exit code for an error: 2 configuration, 3 precision exhausted, 4 internal inconsistency.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        _ if e.is_precision() => 3,
        Error::Inconsistent(_) | Error::ConstructionStuck { .. } => 4,
        Error::Config(_) | Error::Domain(_) | Error::Knead(crate::kneading::KneadError::Invalid(_)) => 2,
        Error::Knead(crate::kneading::KneadError::NotAdmissible(_)) => 2,
        _ => 1,
    }
}
