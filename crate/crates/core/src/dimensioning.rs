//! Square-root staffing for one-shot and HARQ systems, single-class
//! capacity, and capacity scaling sweeps.
//!
//! Required bandwidth is `mean + c(δ)·√variance` with `c(δ) = Q⁻¹(δ)`, where
//! mean and variance describe the bandwidth held by transmissions in an
//! infinite-bandwidth system:
//!
//! ```text
//! mean     = (1/κ)  Σ_c λ_c Σ_m P_{c,m} r_{c,m}
//! variance = (1/κ²) Σ_c λ_c Σ_m P_{c,m} r_{c,m}² / s_{c,m}
//! ```
//!
//! `P_{c,m}` is the probability that stage `m` is needed (product of the
//! earlier stage failure probabilities). The inequality is returned at
//! equality, i.e. the minimal bandwidth.

use serde::{Deserialize, Serialize};

use crate::channel::{blocklength_for_reliability, q_inverse};
use crate::error::{domain, validation, Result};
use crate::traffic::{SystemConfig, TrafficClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaffingResult {
    /// Hz.
    pub mean_utilization: f64,
    /// Hz².
    pub utilization_variance: f64,
    /// Hz.
    pub required_bandwidth: f64,
    pub safety_coefficient: f64,
}

impl StaffingResult {
    fn from_moments(mean: f64, variance: f64, c: f64) -> Self {
        Self {
            mean_utilization: mean,
            utilization_variance: variance,
            required_bandwidth: mean + c * variance.sqrt(),
            safety_coefficient: c,
        }
    }
}

/// One class in the one-shot model: rate, blocklength and duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneShotLoad {
    pub arrival_rate: f64,
    pub blocklength: f64,
    pub duration: f64,
}

/// Mean and variance contribution of one class whose stages all use
/// blocklength `r` and duration `s` and fail independently with `p`.
/// `terms` is the number of geometric terms `Σ_{k<terms} p^k`.
pub(crate) fn homogeneous_moments(
    arrival_rate: f64,
    blocklength: f64,
    duration: f64,
    stage_failure: f64,
    terms: u32,
    kappa: f64,
) -> (f64, f64) {
    let mut weight = 0.0;
    let mut reach = 1.0;
    for _ in 0..terms {
        weight += reach;
        reach *= stage_failure;
    }
    let mean = arrival_rate * (blocklength * weight) / kappa;
    let variance = arrival_rate * (blocklength * blocklength / duration * weight) / (kappa * kappa);
    (mean, variance)
}

fn safety_coefficient(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!(
            "target blocking probability must lie in (0, 1), got {delta}"
        )));
    }
    q_inverse(delta)
}

/// Bandwidth for one-shot transmissions.
///
/// The usual choice is `duration = d`; any positive duration is accepted.
pub fn one_shot_staffing(loads: &[OneShotLoad], delta: f64, kappa: f64) -> Result<StaffingResult> {
    let c = safety_coefficient(delta)?;
    if !(kappa > 0.0) {
        return Err(validation("channel-use density must be positive"));
    }
    let (mut mean, mut variance) = (0.0, 0.0);
    for load in loads {
        if !(load.arrival_rate >= 0.0) || !(load.blocklength > 0.0) || !(load.duration > 0.0) {
            return Err(validation(format!("invalid one-shot load {load:?}")));
        }
        let (m, v) =
            homogeneous_moments(load.arrival_rate, load.blocklength, load.duration, 0.0, 1, kappa);
        mean += m;
        variance += v;
    }
    Ok(StaffingResult::from_moments(mean, variance, c))
}

/// Bandwidth for a system whose classes use (homogeneous) HARQ schemes.
pub fn harq_staffing(system: &SystemConfig, delta: f64) -> Result<StaffingResult> {
    let c = safety_coefficient(delta)?;
    if !(system.channel_use_density > 0.0) {
        return Err(validation("channel-use density must be positive"));
    }
    let (mut mean, mut variance) = (0.0, 0.0);
    for plan in &system.classes {
        plan.class.validate()?;
        let s = &plan.scheme;
        let budget = f64::from(s.stages) * (s.duration + plan.class.feedback_delay);
        if budget > plan.class.deadline * (1.0 + 1e-9) {
            return Err(validation(format!(
                "class {}: {} stages of {} s plus feedback {} s take {budget} s, \
                 exceeding the deadline {} s",
                plan.class.name, s.stages, s.duration, plan.class.feedback_delay, plan.class.deadline
            )));
        }
        let (m, v) = homogeneous_moments(
            plan.class.arrival_rate,
            s.blocklength,
            s.duration,
            s.stage_failure_prob,
            s.stages,
            system.channel_use_density,
        );
        mean += m;
        variance += v;
    }
    Ok(StaffingResult::from_moments(mean, variance, c))
}

/// Largest single-class arrival rate a bandwidth supports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityResult {
    /// Packets per second; zero when infeasible.
    pub lambda_star: f64,
    /// Real-valued blocklength meeting `δ` in one shot.
    pub blocklength: f64,
    pub safety_coefficient: f64,
    /// False when `κ·W·d < r`, i.e. one packet does not fit.
    pub feasible: bool,
}

/// Inverts the one-shot staffing rule for a single class with `s = d`.
///
/// Solving `κW = λr + c·r·√(λ/d)` as a quadratic in `√λ` gives
///
/// ```text
/// λ* = κW/r + (c²/(2d))·(1 − √(1 + 4κWd/(c²r)))
/// ```
///
/// evaluated here as `4K²/(d·(√(c² + 4K) + c)²)` with `K = κWd/r`, which
/// avoids the cancellation and stays finite at `c = 0`.
pub fn single_class_capacity(bandwidth: f64, class: &TrafficClass, kappa: f64) -> Result<CapacityResult> {
    if !(bandwidth > 0.0) {
        return Err(validation(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if !(kappa > 0.0) {
        return Err(validation("channel-use density must be positive"));
    }
    class.validate()?;
    let c = safety_coefficient(class.reliability_eps)?;
    let r = blocklength_for_reliability(&class.link()?, class.reliability_eps)?;
    let d = class.deadline;
    let k = kappa * bandwidth * d / r;
    if k < 1.0 {
        return Ok(CapacityResult {
            lambda_star: 0.0,
            blocklength: r,
            safety_coefficient: c,
            feasible: false,
        });
    }
    let root = (c * c + 4.0 * k).sqrt() + c;
    Ok(CapacityResult {
        lambda_star: 4.0 * k * k / (d * root * root),
        blocklength: r,
        safety_coefficient: c,
        feasible: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    /// Total bandwidth, Hz.
    Bandwidth,
    /// Linear SINR.
    Sinr,
    /// Deadline, seconds.
    Deadline,
    /// Target failure probability δ.
    Reliability,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Bandwidth => "bandwidth",
            SweepVariable::Sinr => "sinr",
            SweepVariable::Deadline => "deadline",
            SweepVariable::Reliability => "reliability",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub x: f64,
    pub lambda_star: f64,
    /// Ratio expected to settle to a constant along the sweep:
    /// `λ*/W`, `λ*/log₂ SINR`, `λ*/(κW/r)` or `λ*·(−log₂ δ)`.
    pub diagnostic: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingCurve {
    pub variable: SweepVariable,
    pub points: Vec<ScalingPoint>,
}

impl ScalingCurve {
    /// `λ*(x_{k+1}) / λ*(x_k)` for consecutive points.
    pub fn successive_ratios(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| w[1].lambda_star / w[0].lambda_star)
            .collect()
    }

    /// max/min of the diagnostic column over feasible points.
    pub fn diagnostic_spread(&self) -> f64 {
        let vals = self.points.iter().filter(|p| p.feasible).map(|p| p.diagnostic);
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        hi / lo
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].lambda_star >= w[0].lambda_star)
    }

    /// Largest change in slope between consecutive segments; concave curves
    /// give a non-positive value. Works on uneven grids.
    pub fn max_slope_increase(&self) -> f64 {
        let slopes: Vec<f64> = self
            .points
            .windows(2)
            .map(|w| (w[1].lambda_star - w[0].lambda_star) / (w[1].x - w[0].x))
            .collect();
        slopes
            .windows(2)
            .map(|s| s[1] - s[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evaluates single-class capacity along one parameter, holding the rest of
/// `template`, `bandwidth` and `kappa` fixed.
pub fn scaling_curves(
    template: &TrafficClass,
    bandwidth: f64,
    kappa: f64,
    variable: SweepVariable,
    grid: &[f64],
) -> Result<ScalingCurve> {
    if grid.is_empty() {
        return Err(validation("sweep grid is empty"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(validation("sweep grid must be strictly increasing"));
    }
    let points = grid
        .iter()
        .map(|&x| {
            let mut class = template.clone();
            let mut w = bandwidth;
            match variable {
                SweepVariable::Bandwidth => w = x,
                SweepVariable::Sinr => class.sinr_linear = x,
                SweepVariable::Deadline => class.deadline = x,
                SweepVariable::Reliability => class.reliability_eps = x,
            }
            let cap = single_class_capacity(w, &class, kappa)?;
            let diagnostic = match variable {
                SweepVariable::Bandwidth => cap.lambda_star / x,
                SweepVariable::Sinr => cap.lambda_star / x.log2(),
                SweepVariable::Deadline => cap.lambda_star / (kappa * w / cap.blocklength),
                SweepVariable::Reliability => cap.lambda_star * -x.log2(),
            };
            Ok(ScalingPoint {
                x,
                lambda_star: cap.lambda_star,
                diagnostic,
                feasible: cap.feasible,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingCurve { variable, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LinkSpec;

    fn class() -> TrafficClass {
        TrafficClass {
            name: "ref".into(),
            arrival_rate: 1e4,
            payload_bits: 256,
            sinr_linear: 10.0,
            deadline: 1e-3,
            reliability_eps: 1e-6,
            feedback_delay: 0.125e-3,
        }
    }

    #[test]
    fn empty_load_needs_no_bandwidth() {
        let r = one_shot_staffing(
            &[OneShotLoad { arrival_rate: 0.0, blocklength: 93.0, duration: 1e-3 }],
            1e-6,
            1.0,
        )
        .unwrap();
        assert_eq!(r.required_bandwidth, 0.0);
    }

    #[test]
    fn half_target_means_mean_only() {
        let r = one_shot_staffing(
            &[OneShotLoad { arrival_rate: 500.0, blocklength: 93.0, duration: 1e-3 }],
            0.5,
            1.0,
        )
        .unwrap();
        assert_eq!(r.safety_coefficient, 0.0);
        assert_eq!(r.required_bandwidth, r.mean_utilization);
    }

    #[test]
    fn reference_class_moments() {
        let r = blocklength_for_reliability(&LinkSpec::new(10.0, 256).unwrap(), 1e-6).unwrap();
        let res = one_shot_staffing(
            &[OneShotLoad { arrival_rate: 1e4, blocklength: r, duration: 1e-3 }],
            1e-6,
            1.0,
        )
        .unwrap();
        assert!((res.mean_utilization - 1e4 * r).abs() < 1e-6);
        assert!((res.utilization_variance - 1e4 * r * r / 1e-3).abs() < 1e-3);
        let expect = 1e4 * r + 4.753424308822899 * (1e7 * r * r).sqrt();
        assert!(((res.required_bandwidth - expect) / expect).abs() < 1e-12);
    }

    #[test]
    fn bad_delta_is_domain_error() {
        assert!(matches!(one_shot_staffing(&[], 0.0, 1.0), Err(crate::Error::Domain(_))));
        assert!(one_shot_staffing(&[], 1.0, 1.0).is_err());
    }

    #[test]
    fn capacity_at_half_target() {
        let mut c = class();
        c.reliability_eps = 0.5;
        let cap = single_class_capacity(1e7, &c, 1.0).unwrap();
        assert_eq!(cap.safety_coefficient, 0.0);
        assert!(((cap.lambda_star - 1e7 / cap.blocklength) / cap.lambda_star).abs() < 1e-14);
    }

    #[test]
    fn capacity_round_trip() {
        let c = class();
        for &w in &[2e5, 1e6, 7.3e6, 1e9] {
            let cap = single_class_capacity(w, &c, 1.0).unwrap();
            assert!(cap.feasible);
            let back = one_shot_staffing(
                &[OneShotLoad {
                    arrival_rate: cap.lambda_star,
                    blocklength: cap.blocklength,
                    duration: c.deadline,
                }],
                c.reliability_eps,
                1.0,
            )
            .unwrap();
            assert!(((back.required_bandwidth - w) / w).abs() < 1e-8, "{w}");
        }
    }

    #[test]
    fn too_little_bandwidth_is_flagged() {
        let cap = single_class_capacity(1000.0, &class(), 1.0).unwrap();
        assert!(!cap.feasible);
        assert_eq!(cap.lambda_star, 0.0);
    }

    #[test]
    fn bandwidth_doubling_approaches_two() {
        let grid: Vec<f64> = [10.0, 20.0, 40.0, 80.0].iter().map(|k| k * 1e6).collect();
        let curve = scaling_curves(&class(), 0.0, 1.0, SweepVariable::Bandwidth, &grid).unwrap();
        let ratios = curve.successive_ratios();
        for w in ratios.windows(2) {
            assert!(w[0] > w[1] && w[1] > 2.0);
        }
    }

    #[test]
    fn sweep_grid_validation() {
        assert!(scaling_curves(&class(), 1e6, 1.0, SweepVariable::Sinr, &[]).is_err());
        assert!(scaling_curves(&class(), 1e6, 1.0, SweepVariable::Sinr, &[2.0, 1.0]).is_err());
    }
}
