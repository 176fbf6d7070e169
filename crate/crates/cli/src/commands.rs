//! One function per subcommand. Each returns a JSON payload and the CSV
//! table that represents the same result.

use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use urllc_core::dimensioning::{harq_staffing, scaling_curves, SweepVariable};
use urllc_core::exact_queue::{blocking_report, compare_tall_wide, ExactOptions, LossClass};
use urllc_core::exec::map_indexed;
use urllc_core::harq::{optimize, sweep_table, OptimizerOptions, Regime, StageRow};
use urllc_core::sim::{simulate, validate_against_exact, FinalStatus, PacketRecord, SimReport};
use urllc_core::traffic::{SystemConfig, TrafficClass};
use urllc_core::Execution;

use crate::error::{CliError, CliResult};
use crate::output::{Cell, Table};
use crate::scenario::Scenario;

/// δ used by `dimension` when neither the flag nor any class supplies one.
const FALLBACK_DELTA: f64 = 1e-6;

pub struct Report {
    pub payload: Value,
    pub table: Table,
    /// Per-attempt trace, only from `simulate --trace`.
    pub trace: Option<Table>,
}

impl Report {
    fn new(payload: impl Serialize, table: Table) -> Self {
        Self {
            payload: serde_json::to_value(payload).expect("payload serializes"),
            table,
            trace: None,
        }
    }
}

/// `var:start:stop:steps[:log]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    pub log: bool,
}

impl FromStr for SweepSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let usage = || format!("sweep {s:?}: expected var:start:stop:steps[:log]");
        if !(4..=5).contains(&parts.len()) {
            return Err(usage());
        }
        let log = match parts.get(4) {
            None => false,
            Some(&"log") => true,
            Some(other) => return Err(format!("sweep {s:?}: unknown spacing {other:?}, expected \"log\"")),
        };
        let num = |t: &str| t.parse::<f64>().map_err(|_| usage());
        let spec = SweepSpec {
            variable: parts[0].to_string(),
            start: num(parts[1])?,
            stop: num(parts[2])?,
            steps: parts[3].parse().map_err(|_| usage())?,
            log,
        };
        if spec.steps == 0 {
            return Err(format!("sweep {s:?}: needs at least one step"));
        }
        if !spec.start.is_finite() || !spec.stop.is_finite() {
            return Err(usage());
        }
        if spec.steps > 1 && spec.stop <= spec.start {
            return Err(format!("sweep {s:?}: stop must exceed start"));
        }
        if log && !(spec.start > 0.0) {
            return Err(format!("sweep {s:?}: log spacing needs a positive start"));
        }
        Ok(spec)
    }
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                let t = i as f64 / last;
                if self.log {
                    (self.start.ln() + t * (self.stop.ln() - self.start.ln())).exp()
                } else {
                    self.start + t * (self.stop - self.start)
                }
            })
            .collect()
    }
}

/// `i:q` splits class `i` by factor `q`; a bare `q` splits the first class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub class: usize,
    pub factor: u32,
}

impl FromStr for SplitSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let usage = || format!("split {s:?}: expected class:factor, e.g. 0:2");
        let (class, factor) = match s.split_once(':') {
            Some((c, q)) => (c.parse().map_err(|_| usage())?, q),
            None => (0, s),
        };
        let factor: u32 = factor.parse().map_err(|_| usage())?;
        if factor == 0 {
            return Err(format!("split {s:?}: factor must be at least 1"));
        }
        Ok(SplitSpec { class, factor })
    }
}

pub fn dimension(scenario: &Scenario, opts: &OptimizerOptions, delta: Option<f64>) -> CliResult<Report> {
    let system = scenario.unchecked_system(opts, f64::INFINITY)?;
    let delta = delta.unwrap_or_else(|| {
        system
            .classes
            .iter()
            .map(|p| p.class.reliability_eps)
            .reduce(f64::min)
            .unwrap_or(FALLBACK_DELTA)
    });
    let staffing = harq_staffing(&system, delta)?;
    let classes: Vec<Value> = system
        .classes
        .iter()
        .map(|p| json!({ "name": p.class.name, "scheme": p.scheme }))
        .collect();
    let mut table = Table::new(&[
        "delta",
        "mean_utilization",
        "utilization_variance",
        "required_bandwidth",
        "safety_coefficient",
        "scenario_bandwidth",
    ]);
    table.push(vec![
        delta.into(),
        staffing.mean_utilization.into(),
        staffing.utilization_variance.into(),
        staffing.required_bandwidth.into(),
        staffing.safety_coefficient.into(),
        system.bandwidth.into(),
    ]);
    let payload = json!({
        "delta": delta,
        "channel_use_density": system.channel_use_density,
        "scenario_bandwidth": system.bandwidth,
        "classes": classes,
        "staffing": staffing,
    });
    Ok(Report::new(payload, table))
}

pub fn capacity(scenario: &Scenario, sweep: Option<&SweepSpec>) -> CliResult<Report> {
    let classes = scenario.traffic_classes()?;
    let [class] = classes.as_slice() else {
        return Err(CliError::Scenario(format!(
            "capacity is defined for a single class; the scenario has {}",
            classes.len()
        )));
    };
    let kappa = scenario.channel_use_density()?;
    let bandwidth = scenario.system.bandwidth;
    let (label, variable, shown, grid) = match sweep {
        None => ("bandwidth", SweepVariable::Bandwidth, vec![bandwidth], vec![bandwidth]),
        Some(spec) => {
            let values = spec.values();
            let (variable, grid) = match spec.variable.as_str() {
                "bandwidth" => (SweepVariable::Bandwidth, values.clone()),
                "sinr" => (SweepVariable::Sinr, values.clone()),
                "sinr_db" => (SweepVariable::Sinr, values.iter().map(|db| db_to_linear(*db)).collect()),
                "deadline" => (SweepVariable::Deadline, values.clone()),
                "reliability" => (SweepVariable::Reliability, values.clone()),
                other => {
                    return Err(CliError::Usage(format!(
                        "capacity cannot sweep {other:?}; use bandwidth, sinr, sinr_db, deadline or reliability"
                    )))
                }
            };
            (spec.variable.as_str(), variable, values, grid)
        }
    };
    let curve = scaling_curves(class, bandwidth, kappa, variable, &grid)?;
    let mut table = Table::new(&["sweep_var", "value", "lambda_star", "diagnostic_ratio", "feasible"]);
    for (x, p) in shown.iter().zip(&curve.points) {
        table.push(vec![label.into(), (*x).into(), p.lambda_star.into(), p.diagnostic.into(), p.feasible.into()]);
    }
    let payload = json!({
        "class": class.name,
        "channel_use_density": kappa,
        "bandwidth": bandwidth,
        "sweep_var": label,
        "values": shown,
        "curve": curve,
    });
    Ok(Report::new(payload, table))
}

const STAGE_HEADER: [&str; 9] = ["class", "m", "r", "s", "h", "p_stage", "objective", "feasible", "best"];

fn stage_cells(class: &str, row: &StageRow, best: Option<u32>) -> Vec<Cell> {
    vec![
        class.into(),
        row.stages.into(),
        row.blocklength.into(),
        row.duration.into(),
        row.stage_bandwidth.into(),
        row.stage_failure_prob.into(),
        row.objective.into(),
        row.feasible().into(),
        (best == Some(row.stages)).into(),
    ]
}

pub fn optimize_harq(scenario: &Scenario, opts: &OptimizerOptions, regime: Regime) -> CliResult<Report> {
    let classes = scenario.traffic_classes()?;
    let kappa = scenario.channel_use_density()?;
    let bandwidth = scenario.system.bandwidth;
    let mut table = Table::new(&STAGE_HEADER);
    let mut results = Vec::with_capacity(classes.len());
    for class in &classes {
        let res = optimize(class, regime, bandwidth, kappa, opts)?;
        for row in &res.per_m_table {
            table.push(stage_cells(&class.name, row, Some(res.best_scheme.stages)));
        }
        results.push(json!({ "class": class.name, "result": res }));
    }
    let payload = json!({
        "regime": regime.name(),
        "channel_use_density": kappa,
        "bandwidth": bandwidth,
        "max_stages": opts.max_stages,
        "convention": opts.convention,
        "classes": results,
    });
    Ok(Report::new(payload, table))
}

/// Every attempt of every class as its own loss stream with rate `λ·p^k`.
fn stage_streams(system: &SystemConfig) -> CliResult<Vec<(usize, u32, LossClass)>> {
    let mut streams = Vec::new();
    for (i, plan) in system.classes.iter().enumerate() {
        let s = &plan.scheme;
        for k in 0..s.stages {
            let rate = plan.class.arrival_rate * s.stage_failure_prob.powi(k as i32);
            streams.push((i, k + 1, LossClass::new(rate, s.stage_bandwidth, s.duration)?));
        }
    }
    Ok(streams)
}

pub fn blocking(
    scenario: &Scenario,
    opts: &OptimizerOptions,
    exact: &ExactOptions,
    split: Option<SplitSpec>,
) -> CliResult<Report> {
    let system = scenario.system(opts)?;
    let approximate = system.classes.iter().any(|p| p.scheme.stages > 1);
    let streams = stage_streams(&system)?;
    let loss: Vec<LossClass> = streams.iter().map(|(_, _, c)| *c).collect();
    let name = |i: usize| system.classes[i].class.name.as_str();

    if let Some(split) = split {
        if approximate {
            return Err(CliError::Usage(
                "--split needs every class to use a single attempt".into(),
            ));
        }
        if split.class >= loss.len() {
            return Err(CliError::Usage(format!(
                "--split class {} out of range for {} classes",
                split.class,
                loss.len()
            )));
        }
        let cmp = compare_tall_wide(&loss, system.bandwidth, split.class, split.factor, exact)?;
        let mut table = Table::new(&["class", "original", "split"]);
        for (i, (b, a)) in cmp.before.iter().zip(&cmp.after).enumerate() {
            table.push(vec![name(i).into(), (*b).into(), (*a).into()]);
        }
        let payload = json!({
            "bandwidth": system.bandwidth,
            "split_class": name(split.class),
            "wide_no_worse": cmp.wide_no_worse(),
            "comparison": cmp,
        });
        return Ok(Report::new(payload, table));
    }

    let mut table = Table::new(&["class", "stage", "arrival_rate", "bandwidth", "duration", "load", "blocking"]);
    if loss.is_empty() {
        let payload = json!({ "bandwidth": system.bandwidth, "approximate": false, "rows": [] });
        return Ok(Report::new(payload, table));
    }
    let report = blocking_report(&loss, system.bandwidth, exact)?;
    let mut rows = Vec::with_capacity(streams.len());
    for ((i, stage, c), b) in streams.iter().zip(&report.per_class_blocking) {
        table.push(vec![
            name(*i).into(),
            (*stage).into(),
            c.arrival_rate.into(),
            c.bandwidth.into(),
            c.duration.into(),
            c.load().into(),
            (*b).into(),
        ]);
        rows.push(json!({
            "class": name(*i),
            "stage": stage,
            "stream": c,
            "load": c.load(),
            "blocking": b,
        }));
    }
    let payload = json!({
        "bandwidth": system.bandwidth,
        "approximate": approximate,
        "state_count": report.state_count,
        "exact_grid": report.exact_grid,
        "log_normalizer": report.log_normalizer,
        "normalization_error": report.normalization_error,
        "rows": rows,
    });
    Ok(Report::new(payload, table))
}

fn summary_table(report: &SimReport) -> Table {
    let mut table = Table::new(&[
        "class",
        "arrivals",
        "delivered",
        "blocked_dropped",
        "decode_exhausted",
        "in_flight",
        "blocking_rate",
        "blocking_half_width",
        "decode_exhausted_rate",
        "qos_violation_rate",
        "qos_violation_half_width",
        "delay_mean",
        "delay_p99",
        "delay_p999",
    ]);
    for c in &report.classes {
        table.push(vec![
            c.name.as_str().into(),
            c.counts.arrivals.into(),
            c.counts.delivered.into(),
            c.counts.blocked_dropped.into(),
            c.counts.decode_exhausted.into(),
            c.counts.in_flight.into(),
            c.blocking_rate.mean.into(),
            c.blocking_rate.half_width.into(),
            c.decode_exhausted_rate.mean.into(),
            c.qos_violation_rate.mean.into(),
            c.qos_violation_rate.half_width.into(),
            c.delay_mean.map(|e| e.mean).into(),
            c.delay_p99.map(|e| e.mean).into(),
            c.delay_p999.map(|e| e.mean).into(),
        ]);
    }
    table
}

fn trace_table(system: &SystemConfig, trace: &[PacketRecord]) -> Table {
    let mut table = Table::new(&["class", "packet", "stage", "start", "end", "outcome"]);
    for (n, rec) in trace.iter().enumerate() {
        let class = system.classes[rec.class_index].class.name.as_str();
        for (k, st) in rec.stages.iter().enumerate() {
            let outcome = if st.blocked {
                "blocked"
            } else if st.decoded {
                "decoded"
            } else if k + 1 == rec.stages.len() && rec.final_status == FinalStatus::InFlight {
                "in_flight"
            } else {
                "failed"
            };
            table.push(vec![class.into(), n.into(), (k + 1).into(), st.start.into(), st.end.into(), outcome.into()]);
        }
    }
    table
}

pub fn simulate_cmd(
    scenario: &Scenario,
    opts: &OptimizerOptions,
    seed: Option<u64>,
    trace: bool,
) -> CliResult<Report> {
    let system = scenario.system(opts)?;
    let cfg = scenario.sim_config(system, seed, trace);
    let out = simulate(&cfg)?;
    let mut report = Report::new(&out.report, summary_table(&out.report));
    if trace {
        report.trace = Some(trace_table(&cfg.system, &out.trace));
    }
    Ok(report)
}

pub fn validate(
    scenario: &Scenario,
    opts: &OptimizerOptions,
    exact: &ExactOptions,
    seed: Option<u64>,
    sigmas: f64,
) -> CliResult<Report> {
    if !(sigmas > 0.0) {
        return Err(CliError::Usage(format!("--sigmas must be positive, got {sigmas}")));
    }
    let system = scenario.system(opts)?;
    let cfg = scenario.sim_config(system, seed, false);
    let result = validate_against_exact(&cfg, sigmas, exact)?;
    let mut table = Table::new(&["class", "exact", "simulated", "half_width", "deviation", "within"]);
    for r in &result.rows {
        table.push(vec![
            r.class.as_str().into(),
            r.exact.into(),
            r.simulated.into(),
            r.half_width.into(),
            r.deviation.into(),
            r.within.into(),
        ]);
    }
    let payload = json!({
        "seed": cfg.seed,
        "replications": cfg.replications,
        "warmup": cfg.warmup,
        "horizon": cfg.horizon,
        "all_within": result.all_within(),
        "table": result,
    });
    Ok(Report::new(payload, table))
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn apply_sweep(class: &mut TrafficClass, bandwidth: &mut f64, variable: &str, x: f64) -> CliResult<()> {
    match variable {
        "sinr_db" => class.sinr_linear = db_to_linear(x),
        "sinr" => class.sinr_linear = x,
        "payload_bits" => {
            if x.fract() != 0.0 || !(x >= 1.0 && x <= f64::from(u32::MAX)) {
                return Err(CliError::Usage(format!("payload_bits must be a positive integer, got {x}")));
            }
            class.payload_bits = x as u32;
        }
        "deadline" => class.deadline = x,
        "reliability" => class.reliability_eps = x,
        "feedback_delay" => class.feedback_delay = x,
        "arrival_rate" => class.arrival_rate = x,
        "bandwidth" => *bandwidth = x,
        other => {
            return Err(CliError::Usage(format!(
                "sweep cannot vary {other:?}; use sinr_db, sinr, payload_bits, deadline, \
                 reliability, feedback_delay, arrival_rate or bandwidth"
            )))
        }
    }
    Ok(())
}

/// Per-stage-count objective tables for every class, optionally along a
/// parameter sweep.
pub fn sweep(
    scenario: &Scenario,
    opts: &OptimizerOptions,
    regime: Regime,
    spec: Option<&SweepSpec>,
) -> CliResult<Report> {
    let classes = scenario.traffic_classes()?;
    let kappa = scenario.channel_use_density()?;
    let (variable, values) = match spec {
        Some(s) => (s.variable.as_str(), s.values()),
        None => ("none", vec![f64::NAN]),
    };
    let points: Vec<(usize, f64)> = (0..classes.len())
        .flat_map(|c| values.iter().map(move |&x| (c, x)))
        .collect();
    let evaluated = map_indexed(points.len(), Execution::Parallel, |i| -> CliResult<_> {
        let (c, x) = points[i];
        let mut class = classes[c].clone();
        let mut bandwidth = scenario.system.bandwidth;
        if spec.is_some() {
            apply_sweep(&mut class, &mut bandwidth, variable, x)?;
        }
        let rows = sweep_table(&class, regime, class.arrival_rate, bandwidth, kappa, opts)?;
        let best = rows
            .iter()
            .filter(|r| r.feasible())
            .fold(None::<&StageRow>, |best, r| match best {
                Some(b) if b.objective <= r.objective => Some(b),
                _ => Some(r),
            })
            .map(|r| r.stages);
        Ok((rows, best))
    });
    let mut table = Table::new(&[
        "class", "sweep_var", "value", "m", "r", "s", "h", "p_stage", "objective", "feasible", "best",
    ]);
    let mut out = Vec::with_capacity(points.len());
    for ((c, x), res) in points.iter().zip(evaluated) {
        let (rows, best) = res?;
        let name = classes[*c].name.as_str();
        let value = spec.map(|_| *x);
        for row in &rows {
            let mut cells = stage_cells(name, row, best);
            cells.insert(1, variable.into());
            cells.insert(2, value.into());
            table.push(cells);
        }
        out.push(json!({ "class": name, "value": value, "best_stages": best, "rows": rows }));
    }
    let payload = json!({
        "regime": regime.name(),
        "sweep_var": variable,
        "channel_use_density": kappa,
        "max_stages": opts.max_stages,
        "convention": opts.convention,
        "points": out,
    });
    Ok(Report::new(payload, table))
}
