//! Traffic classes and whole-system configuration.

use serde::{Deserialize, Serialize};

use crate::channel::LinkSpec;
use crate::error::{validation, Result};
use crate::harq::HarqScheme;

/// Default channel-use density (channel uses per second per Hz).
pub const DEFAULT_KAPPA: f64 = 1.0;

/// 12 subcarriers × 14 symbols per 180 kHz resource block per 1 ms slot.
pub const NR_NUMEROLOGY_0_KAPPA: f64 = 12.0 * 14.0 / (180e3 * 1e-3);

/// Users sharing one SINR level and one QoS requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficClass {
    pub name: String,
    /// Packets per second.
    pub arrival_rate: f64,
    pub payload_bits: u32,
    pub sinr_linear: f64,
    /// Delivery deadline in seconds.
    pub deadline: f64,
    /// Tolerated probability of missing the deadline.
    pub reliability_eps: f64,
    /// Decode-and-feedback delay per attempt, seconds.
    pub feedback_delay: f64,
}

impl TrafficClass {
    pub fn validate(&self) -> Result<()> {
        let name = &self.name;
        if !(self.arrival_rate >= 0.0) || !self.arrival_rate.is_finite() {
            return Err(validation(format!(
                "class {name}: arrival rate must be finite and non-negative"
            )));
        }
        if self.payload_bits == 0 {
            return Err(validation(format!("class {name}: payload must be at least one bit")));
        }
        if !(self.sinr_linear > 0.0) || !self.sinr_linear.is_finite() {
            return Err(validation(format!("class {name}: SINR must be positive")));
        }
        if !(self.reliability_eps > 0.0 && self.reliability_eps < 1.0) {
            return Err(validation(format!(
                "class {name}: reliability target must lie in (0, 1), got {}",
                self.reliability_eps
            )));
        }
        if !(self.feedback_delay >= 0.0) || !self.feedback_delay.is_finite() {
            return Err(validation(format!("class {name}: feedback delay must be non-negative")));
        }
        if !(self.deadline > self.feedback_delay) || !self.deadline.is_finite() {
            return Err(validation(format!(
                "class {name}: deadline {} must exceed feedback delay {}",
                self.deadline, self.feedback_delay
            )));
        }
        Ok(())
    }

    pub fn link(&self) -> Result<LinkSpec> {
        LinkSpec::new(self.sinr_linear, self.payload_bits)
    }
}

/// A traffic class together with the transmission plan it uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPlan {
    pub class: TrafficClass,
    pub scheme: HarqScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Total bandwidth `W`, Hz.
    pub bandwidth: f64,
    /// Channel uses per second per Hz.
    pub channel_use_density: f64,
    pub classes: Vec<ClassPlan>,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(validation(format!(
                "total bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if !(self.channel_use_density > 0.0) || !self.channel_use_density.is_finite() {
            return Err(validation("channel-use density must be positive"));
        }
        for plan in &self.classes {
            plan.class.validate()?;
            plan.scheme.validate_for(&plan.class, self.channel_use_density)?;
            if plan.scheme.stage_bandwidth > self.bandwidth {
                return Err(validation(format!(
                    "class {}: stage bandwidth {} Hz exceeds total bandwidth {} Hz",
                    plan.class.name, plan.scheme.stage_bandwidth, self.bandwidth
                )));
            }
        }
        Ok(())
    }
}
