//! Integer bandwidth grid shared by the exact solver and the simulator.
//!
//! Feasibility tests `Σ h·n ≤ W` are done in integer units so that a state
//! on the boundary is never misclassified by rounding.

use crate::error::{validation, Result};

const MAX_DENOMINATOR: u64 = 1_000_000;
const MAX_UNITS: u128 = 1 << 53;
const FALLBACK_RESOLUTION: f64 = (1u64 << 40) as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthGrid {
    /// Hz per integer unit.
    pub unit_hz: f64,
    pub capacity: u64,
    pub demands: Vec<u64>,
    /// False when the values had no small common denominator and were
    /// quantized instead (demands rounded up, capacity rounded down).
    pub exact: bool,
}

impl BandwidthGrid {
    pub fn new(capacity_hz: f64, demands_hz: &[f64]) -> Result<Self> {
        if !(capacity_hz > 0.0) || !capacity_hz.is_finite() {
            return Err(validation(format!(
                "total bandwidth must be positive, got {capacity_hz}"
            )));
        }
        for &h in demands_hz {
            if !(h > 0.0) || !h.is_finite() {
                return Err(validation(format!(
                    "per-transmission bandwidth must be positive, got {h}"
                )));
            }
        }
        Ok(Self::exact(capacity_hz, demands_hz)
            .unwrap_or_else(|| Self::quantized(capacity_hz, demands_hz)))
    }

    fn exact(capacity_hz: f64, demands_hz: &[f64]) -> Option<Self> {
        let mut fracs = Vec::with_capacity(demands_hz.len() + 1);
        fracs.push(rational(capacity_hz)?);
        for &h in demands_hz {
            fracs.push(rational(h)?);
        }
        let mut lcm: u128 = 1;
        for &(_, d) in &fracs {
            lcm = lcm / gcd(lcm, d as u128) * d as u128;
            if lcm > MAX_UNITS {
                return None;
            }
        }
        let mut units = Vec::with_capacity(fracs.len());
        for &(n, d) in &fracs {
            let u = n as u128 * (lcm / d as u128);
            if u > MAX_UNITS {
                return None;
            }
            units.push(u as u64);
        }
        Some(Self {
            unit_hz: 1.0 / lcm as f64,
            capacity: units[0],
            demands: units[1..].to_vec(),
            exact: true,
        })
    }

    fn quantized(capacity_hz: f64, demands_hz: &[f64]) -> Self {
        let unit_hz = capacity_hz / FALLBACK_RESOLUTION;
        Self {
            unit_hz,
            capacity: FALLBACK_RESOLUTION as u64,
            demands: demands_hz
                .iter()
                .map(|&h| (h / unit_hz).ceil().max(1.0) as u64)
                .collect(),
            exact: false,
        }
    }

    /// Largest number of simultaneous transmissions of demand `k` that fit.
    pub fn max_count(&self, k: usize) -> u64 {
        self.capacity / self.demands[k]
    }
}

/// Continued-fraction approximation `n/d` of `x` with `d ≤ MAX_DENOMINATOR`
/// and relative error ≤ 1e-12, or `None`.
fn rational(x: f64) -> Option<(u64, u64)> {
    let (mut h0, mut h1) = (0u128, 1u128);
    let (mut k0, mut k1) = (1u128, 0u128);
    let mut frac = x;
    for _ in 0..64 {
        let a = frac.floor();
        if a > 1e18 {
            return None;
        }
        let a_int = a as u128;
        let h2 = a_int * h1 + h0;
        let k2 = a_int * k1 + k0;
        if k2 > MAX_DENOMINATOR as u128 || h2 > MAX_UNITS {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let approx = h1 as f64 / k1 as f64;
        if (approx - x).abs() <= 1e-12 * x {
            return if h1 == 0 { None } else { Some((h1 as u64, k1 as u64)) };
        }
        let rem = frac - a;
        if rem <= 0.0 {
            return None;
        }
        frac = 1.0 / rem;
    }
    None
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
