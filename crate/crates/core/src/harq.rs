//! Repetition-coding HARQ schemes and their per-class optimization.
//!
//! A scheme repeats the same codeword up to `m` times. Every stage uses the
//! same blocklength `r`, duration `s` and bandwidth `h = r/(κs)`, and each
//! decoding attempt fails independently with `p(r)`. With feedback delay
//! `f`, the whole budget `m(s + f)` is spent on the deadline `d`.
//!
//! The optimizer is exhaustive over `m = 1..=m_max`: for each `m` it sets
//! the per-stage target `δ^(1/m)`, takes the smallest integer blocklength
//! meeting it, and scores the scheme in one of two regimes:
//!
//! * variance-dominated: `(λ/κ²)·(r²/s)·Σ p^k`
//! * mean-dominated: `(λ/κ)·r·Σ p^k`

use serde::{Deserialize, Serialize};

use crate::channel::{blocklength_for_reliability, failure_probability, LinkSpec};
use crate::dimensioning::homogeneous_moments;
use crate::error::{validation, Error, Result};
use crate::traffic::TrafficClass;

pub const DEFAULT_MAX_STAGES: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Variance,
    Mean,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Variance => "variance",
            Regime::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(Regime::Variance),
            "mean" => Ok(Regime::Mean),
            other => Err(validation(format!(
                "unknown regime {other:?}; expected \"mean\" or \"variance\""
            ))),
        }
    }
}

/// How many geometric terms weight a scheme's objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SumConvention {
    /// `Σ_{k=0}^{m−1} p^k`: the expected number of transmissions, matching
    /// the staffing formulas.
    #[default]
    Transmissions,
    /// `Σ_{k=0}^{m} p^k`, one extra term.
    ExtraTerm,
}

impl SumConvention {
    fn terms(self, stages: u32) -> u32 {
        match self {
            SumConvention::Transmissions => stages,
            SumConvention::ExtraTerm => stages + 1,
        }
    }
}

/// Homogeneous repetition-coding plan for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarqScheme {
    pub stages: u32,
    /// Channel uses per stage (integer-valued once materialized).
    pub blocklength: f64,
    /// Seconds per stage.
    pub duration: f64,
    /// Hz per stage.
    pub stage_bandwidth: f64,
    pub stage_failure_prob: f64,
}

impl HarqScheme {
    /// `m`-stage scheme spending the whole deadline: `s = d/m − f`,
    /// per-stage target `δ^(1/m)`, smallest integer blocklength meeting it.
    pub fn homogeneous(class: &TrafficClass, stages: u32, kappa: f64) -> Result<Self> {
        class.validate()?;
        if stages == 0 {
            return Err(validation("a scheme needs at least one stage"));
        }
        let duration = stage_duration(class, stages);
        if !(duration > 0.0) {
            return Err(Error::Infeasible(format!(
                "class {}: {stages} stages leave no transmission time \
                 (d/m − f = {duration} s)",
                class.name
            )));
        }
        let link = class.link()?;
        let target = stage_target(class.reliability_eps, stages);
        let r = minimal_blocklength_for_stage_target(&link, target)? as f64;
        Ok(Self {
            stages,
            blocklength: r,
            duration,
            stage_bandwidth: r / (kappa * duration),
            stage_failure_prob: failure_probability(r, &link)?,
        })
    }

    /// Expected number of transmissions per packet, `Σ_{k<m} p^k`.
    pub fn expected_transmissions(&self) -> f64 {
        (0..self.stages).map(|k| self.stage_failure_prob.powi(k as i32)).sum()
    }

    pub fn validate_for(&self, class: &TrafficClass, kappa: f64) -> Result<()> {
        let name = &class.name;
        if self.stages == 0 {
            return Err(validation(format!("class {name}: scheme has zero stages")));
        }
        if !(self.blocklength > 0.0 && self.duration > 0.0 && self.stage_bandwidth > 0.0) {
            return Err(validation(format!(
                "class {name}: blocklength, duration and bandwidth must be positive"
            )));
        }
        if !(self.stage_failure_prob >= 0.0 && self.stage_failure_prob < 1.0) {
            return Err(validation(format!(
                "class {name}: stage failure probability must lie in [0, 1)"
            )));
        }
        let budget = f64::from(self.stages) * (self.duration + class.feedback_delay);
        if budget > class.deadline * (1.0 + 1e-9) {
            return Err(validation(format!(
                "class {name}: {} stages need {budget} s, over the {} s deadline",
                self.stages, class.deadline
            )));
        }
        if (kappa * self.stage_bandwidth * self.duration - self.blocklength).abs() > 1.0 {
            return Err(validation(format!(
                "class {name}: κ·h·s = {} does not match blocklength {}",
                kappa * self.stage_bandwidth * self.duration,
                self.blocklength
            )));
        }
        if self.stage_failure_prob.powi(self.stages as i32) > class.reliability_eps * (1.0 + 1e-9) {
            return Err(validation(format!(
                "class {name}: residual failure {} exceeds target {}",
                self.stage_failure_prob.powi(self.stages as i32),
                class.reliability_eps
            )));
        }
        Ok(())
    }
}

fn stage_duration(class: &TrafficClass, stages: u32) -> f64 {
    class.deadline / f64::from(stages) - class.feedback_delay
}

fn stage_target(delta: f64, stages: u32) -> f64 {
    if stages == 1 {
        delta
    } else {
        delta.powf(1.0 / f64::from(stages))
    }
}

/// Smallest integer `r` with `p(r) ≤ per_stage_p`.
pub fn minimal_blocklength_for_stage_target(link: &LinkSpec, per_stage_p: f64) -> Result<u64> {
    let real = blocklength_for_reliability(link, per_stage_p)?;
    let mut r = real.ceil().max(1.0) as u64;
    while failure_probability(r as f64, link)? > per_stage_p {
        r += 1;
    }
    while r > 1 && failure_probability((r - 1) as f64, link)? <= per_stage_p {
        r -= 1;
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeObjective {
    pub regime: Regime,
    /// Hz² (variance regime) or Hz (mean regime).
    pub value: f64,
}

pub fn objective_for_scheme(
    scheme: &HarqScheme,
    regime: Regime,
    arrival_rate: f64,
    kappa: f64,
    convention: SumConvention,
) -> RegimeObjective {
    let (mean, variance) = homogeneous_moments(
        arrival_rate,
        scheme.blocklength,
        scheme.duration,
        scheme.stage_failure_prob,
        convention.terms(scheme.stages),
        kappa,
    );
    RegimeObjective {
        regime,
        value: match regime {
            Regime::Variance => variance,
            Regime::Mean => mean,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub max_stages: u32,
    pub convention: SumConvention,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_stages: DEFAULT_MAX_STAGES,
            convention: SumConvention::default(),
        }
    }
}

/// Why a stage count was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Infeasibility {
    /// `d/m − f ≤ 0`.
    NoTransmissionTime,
    /// `h > W`.
    ExceedsBandwidth,
}

/// One candidate stage count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    pub stages: u32,
    pub blocklength: u64,
    pub duration: f64,
    /// `None` when the duration is not positive.
    pub stage_bandwidth: Option<f64>,
    pub stage_failure_prob: f64,
    pub objective: Option<f64>,
    pub infeasible: Option<Infeasibility>,
}

impl StageRow {
    pub fn feasible(&self) -> bool {
        self.infeasible.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub best_scheme: HarqScheme,
    pub objective: RegimeObjective,
    pub per_m_table: Vec<StageRow>,
}

/// Evaluates every `m ∈ 1..=max_stages` at arrival rate `arrival_rate`.
/// Rows are infeasible when `d/m − f ≤ 0` or when `h` exceeds `bandwidth`.
pub fn sweep_table(
    class: &TrafficClass,
    regime: Regime,
    arrival_rate: f64,
    bandwidth: f64,
    kappa: f64,
    opts: &OptimizerOptions,
) -> Result<Vec<StageRow>> {
    class.validate()?;
    if opts.max_stages == 0 {
        return Err(validation("max stages must be at least 1"));
    }
    if !(kappa > 0.0) {
        return Err(validation("channel-use density must be positive"));
    }
    let link = class.link()?;
    (1..=opts.max_stages)
        .map(|m| {
            let duration = stage_duration(class, m);
            let r = minimal_blocklength_for_stage_target(&link, stage_target(class.reliability_eps, m))?;
            let p = failure_probability(r as f64, &link)?;
            if !(duration > 0.0) {
                return Ok(StageRow {
                    stages: m,
                    blocklength: r,
                    duration,
                    stage_bandwidth: None,
                    stage_failure_prob: p,
                    objective: None,
                    infeasible: Some(Infeasibility::NoTransmissionTime),
                });
            }
            let scheme = HarqScheme {
                stages: m,
                blocklength: r as f64,
                duration,
                stage_bandwidth: r as f64 / (kappa * duration),
                stage_failure_prob: p,
            };
            let objective = objective_for_scheme(&scheme, regime, arrival_rate, kappa, opts.convention);
            Ok(StageRow {
                stages: m,
                blocklength: r,
                duration,
                stage_bandwidth: Some(scheme.stage_bandwidth),
                stage_failure_prob: p,
                objective: Some(objective.value),
                infeasible: (scheme.stage_bandwidth > bandwidth)
                    .then_some(Infeasibility::ExceedsBandwidth),
            })
        })
        .collect()
}

/// Best homogeneous scheme for `class` in `regime`; ties go to fewer stages.
pub fn optimize(
    class: &TrafficClass,
    regime: Regime,
    bandwidth: f64,
    kappa: f64,
    opts: &OptimizerOptions,
) -> Result<OptimizationResult> {
    let table = sweep_table(class, regime, class.arrival_rate, bandwidth, kappa, opts)?;
    let best = table
        .iter()
        .filter(|row| row.feasible())
        .fold(None::<&StageRow>, |best, row| match best {
            Some(b) if b.objective <= row.objective => Some(b),
            _ => Some(row),
        });
    let Some(best) = best else {
        let reasons: Vec<String> = table
            .iter()
            .map(|row| match row.infeasible {
                Some(Infeasibility::NoTransmissionTime) => {
                    format!("m={}: d/m − f = {} s leaves no transmission time", row.stages, row.duration)
                }
                Some(Infeasibility::ExceedsBandwidth) => format!(
                    "m={}: stage bandwidth {} Hz exceeds W = {bandwidth} Hz",
                    row.stages,
                    row.stage_bandwidth.unwrap_or(f64::NAN)
                ),
                None => unreachable!("feasible rows were filtered"),
            })
            .collect();
        return Err(Error::Infeasible(format!(
            "class {}: no feasible stage count; {}",
            class.name,
            reasons.join("; ")
        )));
    };
    let best_scheme = HarqScheme {
        stages: best.stages,
        blocklength: best.blocklength as f64,
        duration: best.duration,
        stage_bandwidth: best.stage_bandwidth.expect("feasible rows have a bandwidth"),
        stage_failure_prob: best.stage_failure_prob,
    };
    Ok(OptimizationResult {
        best_scheme,
        objective: RegimeObjective {
            regime,
            value: best.objective.expect("feasible rows have an objective"),
        },
        per_m_table: table,
    })
}
