//! Replication statistics.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::engine::RunTally;
use super::{ClassCounts, ClassStats, SimConfig, SimReport, StageStats};
use crate::grid::BandwidthGrid;

/// Mean across replications with a 95% Student-t half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// `None` with a single replication.
    pub half_width: Option<f64>,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        let n = samples.len();
        if n == 0 {
            return None;
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Some(Self { mean, half_width: None });
        }
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        Some(Self {
            mean,
            half_width: Some(t * (var / n as f64).sqrt()),
        })
    }

    /// Whether `value` lies within `k` half-widths of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        match self.half_width {
            Some(hw) => (self.mean - value).abs() <= k * hw,
            None => self.mean == value,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Nearest-rank quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn estimate(samples: &[f64]) -> Estimate {
    Estimate::from_samples(samples).expect("at least one replication")
}

pub(crate) fn aggregate(config: &SimConfig, grid: &BandwidthGrid, tallies: &[RunTally]) -> SimReport {
    let plans = &config.system.classes;
    let per_rep = |f: &dyn Fn(&RunTally) -> f64| tallies.iter().map(f).collect::<Vec<f64>>();

    let classes = plans
        .iter()
        .enumerate()
        .map(|(c, plan)| {
            let mut counts = ClassCounts::default();
            for t in tallies {
                let ct = &t.classes[c];
                counts.arrivals += ct.arrivals;
                counts.delivered += ct.delivered;
                counts.blocked_dropped += ct.blocked_dropped;
                counts.decode_exhausted += ct.decode_exhausted;
                counts.in_flight += ct.in_flight;
            }
            let delay_stats = |f: &dyn Fn(&[f64]) -> f64| {
                let samples: Vec<f64> = tallies
                    .iter()
                    .filter(|t| !t.classes[c].delays.is_empty())
                    .map(|t| {
                        let mut d = t.classes[c].delays.clone();
                        d.sort_by(f64::total_cmp);
                        f(&d)
                    })
                    .collect();
                Estimate::from_samples(&samples)
            };
            let stages = (0..plan.scheme.stages as usize)
                .map(|k| StageStats {
                    requests: tallies.iter().map(|t| t.classes[c].stage_requests[k]).sum(),
                    blocked: tallies.iter().map(|t| t.classes[c].stage_blocked[k]).sum(),
                    blocking_rate: estimate(&per_rep(&|t| {
                        ratio(t.classes[c].stage_blocked[k], t.classes[c].stage_requests[k])
                    })),
                    mean_count: estimate(&per_rep(&|t| {
                        t.classes[c].stage_count_integral[k] / t.observed_time
                    })),
                })
                .collect();
            ClassStats {
                name: plan.class.name.clone(),
                counts,
                blocking_rate: estimate(&per_rep(&|t| {
                    ratio(t.classes[c].blocked_dropped, t.classes[c].arrivals)
                })),
                decode_exhausted_rate: estimate(&per_rep(&|t| {
                    ratio(t.classes[c].decode_exhausted, t.classes[c].arrivals)
                })),
                qos_violation_rate: estimate(&per_rep(&|t| {
                    let ct = &t.classes[c];
                    let resolved = ct.arrivals - ct.in_flight;
                    ratio(resolved - ct.on_time, resolved)
                })),
                full_time_fraction: estimate(&per_rep(&|t| t.classes[c].full_time / t.observed_time)),
                delay_mean: delay_stats(&|d| d.iter().sum::<f64>() / d.len() as f64),
                delay_p99: delay_stats(&|d| quantile(d, 0.99)),
                delay_p999: delay_stats(&|d| quantile(d, 0.999)),
                stages,
            }
        })
        .collect();

    let means = per_rep(&|t| t.occupancy_integral / t.observed_time);
    let variances: Vec<f64> = tallies
        .iter()
        .zip(&means)
        .map(|(t, m)| (t.occupancy_sq_integral / t.observed_time - m * m).max(0.0))
        .collect();
    let peak_units = tallies.iter().map(|t| t.max_occupied_units).max().unwrap_or(0);

    SimReport {
        seed: config.seed,
        replications: config.replications,
        warmup: config.warmup,
        horizon: config.horizon,
        classes,
        occupancy_mean: estimate(&means),
        occupancy_variance: estimate(&variances),
        peak_occupancy: peak_units as f64 * grid.unit_hz,
        warnings: Vec::new(),
    }
}
