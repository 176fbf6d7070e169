//! Discrete-event simulation of the shared-bandwidth loss system with
//! per-class HARQ.
//!
//! Each packet requests `h` Hz for `s` seconds per attempt. If the
//! bandwidth is not free the packet is dropped on the spot; otherwise it
//! transmits, waits `f` seconds for feedback, and either decodes or asks
//! for the next attempt. Admission runs on the same integer bandwidth grid
//! as the exact solver, so "fits" means exactly the same thing in both.
//!
//! Determinism: every (replication, class, purpose) pair draws from its
//! own ChaCha stream derived from the master seed, events at equal times
//! are ordered releases-first and then by scheduling order, and
//! replications are merged in index order. The same seed therefore gives
//! bit-identical reports for any thread count.

mod engine;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::exact_queue::{blocking_report, ExactOptions, LossClass};
use crate::exec::{map_indexed, Execution};
use crate::grid::BandwidthGrid;
use crate::traffic::SystemConfig;

pub use stats::Estimate;

use engine::{Engine, RunTally};

/// Expected number of rare events below which a warning is attached.
const RARE_EVENT_TARGET: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub system: SystemConfig,
    /// End of simulated time, seconds.
    pub horizon: f64,
    /// Statistics are collected only on `[warmup, horizon]`.
    pub warmup: f64,
    pub seed: u64,
    pub replications: u32,
    #[serde(default)]
    pub trace: bool,
    #[serde(skip)]
    pub exec: Execution,
}

impl SimConfig {
    /// Warm-up of ten times the longest deadline and a horizon long enough
    /// to see about a hundred deadline-level failures of the rarest class.
    pub fn with_defaults(system: SystemConfig, seed: u64) -> Self {
        let warmup = default_warmup(&system);
        let horizon = warmup + default_observation(&system);
        Self {
            system,
            horizon,
            warmup,
            seed,
            replications: 1,
            trace: false,
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if !(self.warmup >= 0.0) || !self.warmup.is_finite() {
            return Err(validation("warm-up must be finite and non-negative"));
        }
        if !(self.horizon > self.warmup) || !self.horizon.is_finite() {
            return Err(validation(format!(
                "horizon {} must be finite and exceed warm-up {}",
                self.horizon, self.warmup
            )));
        }
        if self.replications == 0 {
            return Err(validation("at least one replication is required"));
        }
        Ok(())
    }
}

pub fn default_warmup(system: &SystemConfig) -> f64 {
    10.0 * system
        .classes
        .iter()
        .map(|p| p.class.deadline)
        .fold(0.0, f64::max)
}

fn default_observation(system: &SystemConfig) -> f64 {
    let rarest = system
        .classes
        .iter()
        .map(|p| p.class.arrival_rate * p.class.reliability_eps)
        .filter(|&r| r > 0.0)
        .fold(f64::INFINITY, f64::min);
    if rarest.is_finite() {
        RARE_EVENT_TARGET / rarest
    } else {
        // nothing arrives; any positive window gives the all-zero report
        default_warmup(system).max(1.0)
    }
}

/// Outcome of one transmission attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub start: f64,
    pub end: f64,
    /// Admission was refused; `start == end`.
    pub blocked: bool,
    pub decoded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStatus {
    Delivered,
    BlockedDropped,
    DecodeExhausted,
    /// Still in the system when the horizon was reached.
    InFlight,
}

impl FinalStatus {
    pub fn name(self) -> &'static str {
        match self {
            FinalStatus::Delivered => "delivered",
            FinalStatus::BlockedDropped => "blocked_dropped",
            FinalStatus::DecodeExhausted => "decode_exhausted",
            FinalStatus::InFlight => "in_flight",
        }
    }
}

/// Per-packet trace entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub class_index: usize,
    pub arrival_time: f64,
    pub stages: Vec<StageOutcome>,
    pub final_status: FinalStatus,
    /// Arrival-to-decode time for delivered packets.
    pub total_delay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStats {
    /// Post-warm-up requests for this attempt, summed over replications.
    pub requests: u64,
    pub blocked: u64,
    /// Fraction of requests for this attempt that found no room.
    pub blocking_rate: Estimate,
    /// Time-average number of packets transmitting this attempt.
    pub mean_count: Estimate,
}

/// Totals over all replications for one class (post-warm-up arrivals).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ClassCounts {
    pub arrivals: u64,
    pub delivered: u64,
    pub blocked_dropped: u64,
    pub decode_exhausted: u64,
    pub in_flight: u64,
}

impl ClassCounts {
    /// Every arrival ends up in exactly one bucket.
    pub fn is_conserved(&self) -> bool {
        self.delivered + self.blocked_dropped + self.decode_exhausted + self.in_flight
            == self.arrivals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub name: String,
    pub counts: ClassCounts,
    /// Dropped for lack of bandwidth, per arrival.
    pub blocking_rate: Estimate,
    /// Ran out of attempts without decoding, per arrival.
    pub decode_exhausted_rate: Estimate,
    /// Not delivered within the deadline, per resolved packet.
    pub qos_violation_rate: Estimate,
    /// Fraction of time a new request of this class would not fit.
    pub full_time_fraction: Estimate,
    pub delay_mean: Option<Estimate>,
    pub delay_p99: Option<Estimate>,
    pub delay_p999: Option<Estimate>,
    pub stages: Vec<StageStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub replications: u32,
    pub warmup: f64,
    pub horizon: f64,
    pub classes: Vec<ClassStats>,
    /// Time-average occupied bandwidth, Hz.
    pub occupancy_mean: Estimate,
    /// Time-average variance of occupied bandwidth, Hz².
    pub occupancy_variance: Estimate,
    /// Largest occupied bandwidth seen in any replication, Hz.
    pub peak_occupancy: f64,
    pub warnings: Vec<String>,
}

/// Full output including the optional trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub report: SimReport,
    /// Trace of the first replication, sorted by arrival time.
    pub trace: Vec<PacketRecord>,
}

fn replication_seed(master: u64, rep: u32) -> u64 {
    // splitmix64 finalizer over (seed, index)
    let mut z = master ^ (u64::from(rep) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run all replications and aggregate.
pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let system = &config.system;
    let demands: Vec<f64> = system
        .classes
        .iter()
        .map(|p| p.scheme.stage_bandwidth)
        .collect();
    let grid = BandwidthGrid::new(system.bandwidth, &demands)?;
    let tallies: Vec<RunTally> = map_indexed(config.replications as usize, config.exec, |rep| {
        let engine = Engine::new(
            system,
            &grid,
            config.warmup,
            config.horizon,
            config.trace && rep == 0,
        );
        engine.run(replication_seed(config.seed, rep as u32))
    });
    let mut report = stats::aggregate(config, &grid, &tallies);
    report.warnings = rare_event_warnings(config);
    let mut trace = tallies.into_iter().next().map(|t| t.trace).unwrap_or_default();
    trace.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
    Ok(SimOutput { report, trace })
}

fn rare_event_warnings(config: &SimConfig) -> Vec<String> {
    let window = (config.horizon - config.warmup) * f64::from(config.replications);
    config
        .system
        .classes
        .iter()
        .filter(|p| p.class.arrival_rate > 0.0)
        .filter_map(|p| {
            let expected = p.class.arrival_rate * p.class.reliability_eps * window;
            (expected < RARE_EVENT_TARGET).then(|| {
                format!(
                    "class {}: only {expected:.3} deadline misses expected at the target \
                     rate {:e}; estimates near that level are unreliable",
                    p.class.name, p.class.reliability_eps
                )
            })
        })
        .collect()
}

/// Time-average mean and variance of occupied bandwidth, Hz and Hz².
pub fn occupancy_moments(report: &SimReport) -> (f64, f64) {
    (report.occupancy_mean.mean, report.occupancy_variance.mean)
}

/// Recompute occupancy moments over `[warmup, horizon]` from a trace.
///
/// The trace must contain every packet of the replication, including those
/// that arrived during warm-up.
pub fn occupancy_moments_from_trace(
    records: &[PacketRecord],
    system: &SystemConfig,
    warmup: f64,
    horizon: f64,
) -> (f64, f64) {
    let mut edges: Vec<(f64, f64)> = Vec::new();
    for r in records {
        let h = system.classes[r.class_index].scheme.stage_bandwidth;
        for st in r.stages.iter().filter(|s| !s.blocked) {
            let (a, b) = (st.start.max(warmup), st.end.min(horizon));
            if b > a {
                edges.push((a, h));
                edges.push((b, -h));
            }
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mut level, mut last, mut m1, mut m2) = (0.0_f64, warmup, 0.0, 0.0);
    for (t, dh) in edges {
        let dt = t - last;
        m1 += level * dt;
        m2 += level * level * dt;
        level += dh;
        last = t;
    }
    let dt = horizon - last;
    m1 += level * dt;
    m2 += level * level * dt;
    let span = horizon - warmup;
    let mean = m1 / span;
    (mean, m2 / span - mean * mean)
}

/// One row of a simulation-versus-exact comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub class: String,
    pub exact: f64,
    pub simulated: f64,
    pub half_width: Option<f64>,
    /// `|simulated − exact| / half_width`.
    pub deviation: Option<f64>,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationTable {
    /// Allowed deviation in half-widths.
    pub k: f64,
    pub rows: Vec<ValidationRow>,
}

impl ValidationTable {
    pub fn all_within(&self) -> bool {
        self.rows.iter().all(|r| r.within)
    }
}

/// Compare simulated blocking with exact blocking for a one-shot system.
///
/// A row passes when the exact value lies within `k` confidence half-widths
/// of the estimate. Without a half-width (single replication) only an exact
/// match passes.
pub fn validate_against_exact(
    config: &SimConfig,
    k: f64,
    exact_opts: &ExactOptions,
) -> Result<ValidationTable> {
    config.validate()?;
    if let Some(p) = config.system.classes.iter().find(|p| p.scheme.stages != 1) {
        return Err(validation(format!(
            "class {}: validation against the exact solver needs single-attempt schemes, got {} attempts",
            p.class.name, p.scheme.stages
        )));
    }
    if config.system.classes.is_empty() {
        return Ok(ValidationTable { k, rows: Vec::new() });
    }
    let loss: Vec<LossClass> = config
        .system
        .classes
        .iter()
        .map(|p| LossClass::new(p.class.arrival_rate, p.scheme.stage_bandwidth, p.scheme.duration))
        .collect::<Result<_>>()?;
    let exact = blocking_report(&loss, config.system.bandwidth, exact_opts)?;
    let sim = simulate(config)?;
    let rows = sim
        .report
        .classes
        .iter()
        .zip(&exact.per_class_blocking)
        .map(|(c, &b)| {
            let est = c.blocking_rate;
            let diff = (est.mean - b).abs();
            let deviation = est.half_width.map(|hw| if hw > 0.0 { diff / hw } else if diff == 0.0 { 0.0 } else { f64::INFINITY });
            let within = match est.half_width {
                Some(hw) => diff <= k * hw,
                None => diff == 0.0,
            };
            ValidationRow {
                class: c.name.clone(),
                exact: b,
                simulated: est.mean,
                half_width: est.half_width,
                deviation,
                within,
            }
        })
        .collect();
    Ok(ValidationTable { k, rows })
}
