//! Scenario files: JSON with a versioned `schema` field.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "system": { "bandwidth": 2.0e7, "preset": "nr-numerology-0" },
//!   "classes": [
//!     { "name": "control", "arrival_rate": 1000, "payload_bits": 256,
//!       "sinr_db": 10, "deadline": 0.001, "reliability": 1e-6,
//!       "feedback_delay": 0.000125, "scheme": "optimize:mean" }
//!   ],
//!   "sim": { "seed": 7, "horizon": 10, "warmup": 0.01, "replications": 10 }
//! }
//! ```
//!
//! Times are in seconds, bandwidth in Hz, rates in packets per second. A
//! class carries exactly one of `sinr_db` and `sinr_linear`; its `scheme`
//! is `{"stages": m}`, `"optimize:mean"`, `"optimize:variance"` or absent
//! (one attempt).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use urllc_core::harq::{optimize, HarqScheme, OptimizerOptions, Regime};
use urllc_core::sim::SimConfig;
use urllc_core::traffic::{
    ClassPlan, SystemConfig, TrafficClass, DEFAULT_KAPPA, NR_NUMEROLOGY_0_KAPPA,
};
use urllc_core::Execution;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
const NR_PRESET: &str = "nr-numerology-0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub system: SystemBlock,
    #[serde(default)]
    pub classes: Vec<ClassBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    /// Hz.
    pub bandwidth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_use_density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub arrival_rate: f64,
    pub payload_bits: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinr_linear: Option<f64>,
    pub deadline: f64,
    pub reliability: f64,
    #[serde(default)]
    pub feedback_delay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemeSpec {
    Fixed { stages: u32 },
    Directive(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<u32>,
}

impl Scenario {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let scenario: Scenario = serde_json::from_str(text)
            .map_err(|e| CliError::Scenario(format!("malformed scenario: {e}")))?;
        if scenario.schema != SCHEMA_VERSION {
            return Err(CliError::Scenario(format!(
                "unsupported schema {}; this tool reads schema {SCHEMA_VERSION}",
                scenario.schema
            )));
        }
        Ok(scenario)
    }

    /// SHA-256 of the canonical serialization. Key order, whitespace and
    /// number spelling in the source file do not affect it.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn channel_use_density(&self) -> CliResult<f64> {
        match (&self.system.preset, self.system.channel_use_density) {
            (Some(_), Some(_)) => Err(CliError::Scenario(
                "system: give either preset or channel_use_density, not both".into(),
            )),
            (Some(p), None) if p == NR_PRESET => Ok(NR_NUMEROLOGY_0_KAPPA),
            (Some(p), None) => Err(CliError::Scenario(format!(
                "system: unknown preset {p:?}; known presets: {NR_PRESET}"
            ))),
            (None, Some(k)) => Ok(k),
            (None, None) => Ok(DEFAULT_KAPPA),
        }
    }

    /// Traffic classes with ingestion-time conversions applied.
    pub fn traffic_classes(&self) -> CliResult<Vec<TrafficClass>> {
        self.classes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let name = c.name.clone().unwrap_or_else(|| format!("class{i}"));
                let sinr_linear = match (c.sinr_db, c.sinr_linear) {
                    (Some(db), None) => 10f64.powf(db / 10.0),
                    (None, Some(lin)) => lin,
                    _ => {
                        return Err(CliError::Scenario(format!(
                            "class {name}: give exactly one of sinr_db and sinr_linear"
                        )))
                    }
                };
                let class = TrafficClass {
                    name,
                    arrival_rate: c.arrival_rate,
                    payload_bits: c.payload_bits,
                    sinr_linear,
                    deadline: c.deadline,
                    reliability_eps: c.reliability,
                    feedback_delay: c.feedback_delay,
                };
                class.validate()?;
                Ok(class)
            })
            .collect()
    }

    /// Builds and validates the full system, running the optimizer for
    /// classes that ask for it.
    pub fn system(&self, opts: &OptimizerOptions) -> CliResult<SystemConfig> {
        let system = self.unchecked_system(opts, self.system.bandwidth)?;
        system.validate()?;
        Ok(system)
    }

    /// Like [`Scenario::system`] but the optimizer sees `optimizer_bandwidth`
    /// and stage bandwidths are not checked against the total. Used when
    /// the bandwidth is the unknown.
    pub fn unchecked_system(&self, opts: &OptimizerOptions, optimizer_bandwidth: f64) -> CliResult<SystemConfig> {
        let kappa = self.channel_use_density()?;
        let classes = self.traffic_classes()?;
        let plans = classes
            .into_iter()
            .zip(&self.classes)
            .map(|(class, block)| {
                let scheme = match &block.scheme {
                    None => HarqScheme::homogeneous(&class, 1, kappa)?,
                    Some(SchemeSpec::Fixed { stages }) => HarqScheme::homogeneous(&class, *stages, kappa)?,
                    Some(SchemeSpec::Directive(d)) => match d.strip_prefix("optimize:") {
                        Some(regime) => {
                            let regime: Regime = regime.parse()?;
                            optimize(&class, regime, optimizer_bandwidth, kappa, opts)?.best_scheme
                        }
                        None if d == "one-shot" => HarqScheme::homogeneous(&class, 1, kappa)?,
                        None => {
                            return Err(CliError::Scenario(format!(
                                "class {}: unknown scheme {d:?}; expected {{\"stages\": m}}, \
                                 \"one-shot\", \"optimize:mean\" or \"optimize:variance\"",
                                class.name
                            )))
                        }
                    },
                };
                Ok(ClassPlan { class, scheme })
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(SystemConfig {
            bandwidth: self.system.bandwidth,
            channel_use_density: kappa,
            classes: plans,
        })
    }

    pub fn sim_config(&self, system: SystemConfig, seed: Option<u64>, trace: bool) -> SimConfig {
        let block = self.sim.clone().unwrap_or_default();
        let mut cfg = SimConfig::with_defaults(system, 0);
        let observation = cfg.horizon - cfg.warmup;
        cfg.warmup = block.warmup.unwrap_or(cfg.warmup);
        cfg.horizon = block.horizon.unwrap_or(cfg.warmup + observation);
        cfg.seed = seed.or(block.seed).unwrap_or(0);
        cfg.replications = block.replications.unwrap_or(cfg.replications);
        cfg.trace = trace;
        cfg.exec = Execution::Parallel;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "schema": 1,
        "system": {"bandwidth": 2e7},
        "classes": [{"name": "a", "arrival_rate": 1000, "payload_bits": 256,
                     "sinr_db": 10, "deadline": 0.001, "reliability": 1e-6}]
    }"#;

    #[test]
    fn digest_ignores_key_order_and_spelling() {
        let reordered = r#"{"classes": [{"reliability": 0.000001, "deadline": 1e-3,
            "sinr_db": 10.0, "payload_bits": 256, "arrival_rate": 1e3, "name": "a"}],
            "system": {"bandwidth": 20000000}, "schema": 1}"#;
        let a = Scenario::parse(BASE).unwrap();
        let b = Scenario::parse(reordered).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.classes[0].arrival_rate = 1001.0;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn round_trip_is_identity() {
        let a = Scenario::parse(BASE).unwrap();
        let text = serde_json::to_string_pretty(&a).unwrap();
        assert_eq!(Scenario::parse(&text).unwrap(), a);
    }

    #[test]
    fn sinr_must_be_given_once() {
        let both = BASE.replace(r#""sinr_db": 10"#, r#""sinr_db": 10, "sinr_linear": 10"#);
        let err = Scenario::parse(&both).unwrap().traffic_classes().unwrap_err();
        assert!(err.to_string().contains("class a"), "{err}");
        let neither = BASE.replace(r#""sinr_db": 10,"#, "");
        assert!(Scenario::parse(&neither).unwrap().traffic_classes().is_err());
    }

    #[test]
    fn db_converted_on_ingestion() {
        let s = Scenario::parse(BASE).unwrap();
        assert_eq!(s.traffic_classes().unwrap()[0].sinr_linear, 10.0);
    }

    #[test]
    fn presets_and_schema() {
        let nr = BASE.replace(r#"{"bandwidth": 2e7}"#, r#"{"bandwidth": 2e7, "preset": "nr-numerology-0"}"#);
        let k = Scenario::parse(&nr).unwrap().channel_use_density().unwrap();
        assert_eq!(k, NR_NUMEROLOGY_0_KAPPA);
        let both = BASE.replace(
            r#"{"bandwidth": 2e7}"#,
            r#"{"bandwidth": 2e7, "preset": "nr-numerology-0", "channel_use_density": 1}"#,
        );
        assert!(Scenario::parse(&both).unwrap().channel_use_density().is_err());
        assert!(Scenario::parse(&BASE.replace(r#""schema": 1"#, r#""schema": 2"#)).is_err());
        assert!(Scenario::parse(&BASE.replace(r#""deadline""#, r#""deadline_ms""#)).is_err());
    }

    #[test]
    fn optimize_directive_matches_explicit_scheme() {
        let opt = BASE.replace(r#""reliability": 1e-6"#, r#""reliability": 1e-6, "feedback_delay": 1.25e-4, "sinr_db": 0, "scheme": "optimize:mean""#)
            .replace(r#""sinr_db": 10, "#, "");
        let s = Scenario::parse(&opt).unwrap();
        let sys = s.system(&OptimizerOptions::default()).unwrap();
        let m = sys.classes[0].scheme.stages;
        assert!(m > 1);
        let fixed = opt.replace(r#""optimize:mean""#, &format!(r#"{{"stages": {m}}}"#));
        let sys2 = Scenario::parse(&fixed).unwrap().system(&OptimizerOptions::default()).unwrap();
        assert_eq!(sys, sys2);
    }
}
