//! Finite-blocklength AWGN link model.
//!
//! The normal approximation relates payload `L`, blocklength `r` (channel
//! uses) and block error probability `p` through
//!
//! ```text
//! L ≈ r·C − Q⁻¹(p)·√(r·V)
//! ```
//!
//! with capacity `C = log₂(1 + SINR)` and dispersion
//! `V = (log₂ e)²·(1 − (1 + SINR)⁻²)`. The `0.5·log₂ r` correction is left
//! out by default; [`Approximation::LogCorrected`] keeps it for sensitivity
//! studies.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{domain, Result};

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// A link class: payload size and received SINR (linear scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub sinr_linear: f64,
    pub payload_bits: u32,
}

impl LinkSpec {
    pub fn new(sinr_linear: f64, payload_bits: u32) -> Result<Self> {
        if !(sinr_linear > 0.0) || !sinr_linear.is_finite() {
            return Err(domain(format!("SINR must be positive, got {sinr_linear}")));
        }
        if payload_bits == 0 {
            return Err(domain("payload must be at least one bit"));
        }
        Ok(Self {
            sinr_linear,
            payload_bits,
        })
    }

    pub fn capacity(&self) -> f64 {
        (1.0 + self.sinr_linear).log2()
    }

    pub fn dispersion(&self) -> f64 {
        dispersion_unchecked(self.sinr_linear)
    }
}

/// A (blocklength, failure probability) operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodingPoint {
    pub blocklength: f64,
    pub failure_prob: f64,
}

/// Which form of the normal approximation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approximation {
    /// `L = rC − Q⁻¹(p)√(rV)`; the closed-form blocklength applies.
    #[default]
    Truncated,
    /// Adds `0.5·log₂ r` to the achievable payload.
    LogCorrected,
}

/// AWGN capacity in bits per channel use.
pub fn shannon_capacity(sinr_linear: f64) -> Result<f64> {
    check_sinr(sinr_linear)?;
    Ok((1.0 + sinr_linear).log2())
}

/// AWGN channel dispersion in squared bits per channel use.
pub fn channel_dispersion(sinr_linear: f64) -> Result<f64> {
    check_sinr(sinr_linear)?;
    Ok(dispersion_unchecked(sinr_linear))
}

fn dispersion_unchecked(sinr: f64) -> f64 {
    let inv = 1.0 / (1.0 + sinr);
    // 1 − inv² written as (1 − inv)(1 + inv) to keep precision at low SINR
    LOG2_E * LOG2_E * (sinr * inv) * (1.0 + inv)
}

fn check_sinr(sinr_linear: f64) -> Result<()> {
    if sinr_linear > 0.0 && sinr_linear.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("SINR must be positive, got {sinr_linear}")))
    }
}

/// Standard normal upper tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`q_function`] on `(0, 1)`.
///
/// Safeguarded Newton iteration on `ln Q`, which keeps relative accuracy
/// in the far tail where `Q` itself is tiny.
pub fn q_inverse(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!(
            "tail probability must lie in (0, 1), got {delta}"
        )));
    }
    if delta == 0.5 {
        return Ok(0.0);
    }
    if delta > 0.5 {
        return Ok(-upper_tail_inverse(1.0 - delta));
    }
    Ok(upper_tail_inverse(delta))
}

/// Solves `Q(x) = delta` for `delta ∈ (0, 0.5)`, so `x > 0`.
fn upper_tail_inverse(delta: f64) -> f64 {
    let target = delta.ln();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while q_function(hi) > delta {
        lo = hi;
        hi *= 2.0;
    }
    // Q(x) ≤ exp(−x²/2)/2, so √(−2 ln δ) overshoots the root slightly
    let mut x = (-2.0 * target).sqrt();
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let q = q_function(x);
        if q > delta {
            lo = x;
        } else {
            hi = x;
        }
        let resid = q.ln() - target;
        if resid.abs() <= 1e-15 {
            break;
        }
        // d/dx ln Q(x) = −φ(x)/Q(x)
        let slope = -normal_pdf(x) / q;
        let mut next = x - resid / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Blocklength that meets block error probability `target_p`.
///
/// Positive root of the truncated normal approximation, viewed as a
/// quadratic in `√r`. For `target_p ≤ 0.5` this is
///
/// ```text
/// r = L/C + a + a·√(1 + 4LC/(V·q²)),   a = q²V/(2C²),  q = Q⁻¹(p)
/// ```
///
/// and it collapses to `L/C` at `p = 0.5`.
pub fn blocklength_for_reliability(link: &LinkSpec, target_p: f64) -> Result<f64> {
    let q = q_inverse(target_p)?;
    let c = shannon_capacity(link.sinr_linear)?;
    let v = channel_dispersion(link.sinr_linear)?;
    let l = f64::from(link.payload_bits);
    if q == 0.0 {
        return Ok(l / c);
    }
    if q > 0.0 {
        let a = q * q * v / (2.0 * c * c);
        return Ok(l / c + a + a * (1.0 + 4.0 * l * c / (v * q * q)).sqrt());
    }
    // p > 0.5: rationalised root avoids cancellation
    let x = 2.0 * l / ((q * q * v + 4.0 * c * l).sqrt() - q * v.sqrt());
    Ok(x * x)
}

/// Block error probability `Q((rC − L)/√(rV))` at blocklength `r`.
pub fn failure_probability(blocklength: f64, link: &LinkSpec) -> Result<f64> {
    failure_probability_with(Approximation::Truncated, blocklength, link)
}

pub fn failure_probability_with(
    approx: Approximation,
    blocklength: f64,
    link: &LinkSpec,
) -> Result<f64> {
    if !(blocklength > 0.0) || !blocklength.is_finite() {
        return Err(domain(format!(
            "blocklength must be positive, got {blocklength}"
        )));
    }
    let c = shannon_capacity(link.sinr_linear)?;
    let v = channel_dispersion(link.sinr_linear)?;
    let mut margin = blocklength * c - f64::from(link.payload_bits);
    if approx == Approximation::LogCorrected {
        margin += 0.5 * blocklength.log2();
    }
    Ok(q_function(margin / (blocklength * v).sqrt()))
}

/// Blocklength meeting `target_p` under either approximation.
///
/// The log-corrected form has no closed form; it is solved by bisection
/// on the monotone failure curve, bracketed by the truncated solution.
pub fn blocklength_with(approx: Approximation, link: &LinkSpec, target_p: f64) -> Result<f64> {
    let truncated = blocklength_for_reliability(link, target_p)?;
    match approx {
        Approximation::Truncated => Ok(truncated),
        Approximation::LogCorrected => {
            // the log term only helps, so the root lies at or below the truncated one
            let mut hi = truncated;
            let mut lo = hi * 0.5;
            while lo > 1e-9
                && failure_probability_with(approx, lo, link)? <= target_p
            {
                hi = lo;
                lo *= 0.5;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if failure_probability_with(approx, mid, link)? > target_p {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-12 * hi {
                    break;
                }
            }
            Ok(hi)
        }
    }
}

/// One row comparing the truncated and log-corrected blocklengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproximationGap {
    pub target_p: f64,
    pub truncated: f64,
    pub log_corrected: f64,
}

impl ApproximationGap {
    pub fn relative_gap(&self) -> f64 {
        (self.truncated - self.log_corrected) / self.truncated
    }
}

/// Tabulates how much the `0.5·log₂ r` term shortens the blocklength.
pub fn approximation_gap_table(
    link: &LinkSpec,
    targets: &[f64],
) -> Result<Vec<ApproximationGap>> {
    targets
        .iter()
        .map(|&p| {
            Ok(ApproximationGap {
                target_p: p,
                truncated: blocklength_with(Approximation::Truncated, link, p)?,
                log_corrected: blocklength_with(Approximation::LogCorrected, link, p)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(l: u32, sinr: f64) -> LinkSpec {
        LinkSpec::new(sinr, l).unwrap()
    }

    /// Upper tail by composite Simpson quadrature of the normal density.
    fn q_quadrature(x: f64) -> f64 {
        let upper = x + 14.0;
        let n = 20_000;
        let h = (upper - x) / n as f64;
        let mut acc = normal_pdf(x) + normal_pdf(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * normal_pdf(x + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn capacity_values() {
        assert_eq!(shannon_capacity(1.0).unwrap(), 1.0);
        assert!((shannon_capacity(10.0).unwrap() - 3.4594316186372973).abs() < 1e-12);
        assert!(matches!(shannon_capacity(0.0), Err(crate::Error::Domain(_))));
        assert!(shannon_capacity(-1.0).is_err());
    }

    #[test]
    fn dispersion_values() {
        let log2e_sq = LOG2_E * LOG2_E;
        assert!((channel_dispersion(1.0).unwrap() - 0.75 * log2e_sq).abs() < 1e-12);
        assert!((channel_dispersion(10.0).unwrap() - 2.0642).abs() < 1e-4);
        assert!(channel_dispersion(1e-12).unwrap() < 1e-11);
        assert!(channel_dispersion(1e6).unwrap() < log2e_sq);
        assert!(channel_dispersion(1e9).unwrap() <= log2e_sq);
        let mut prev = 0.0;
        for k in 0..60 {
            let v = channel_dispersion(10f64.powf(-3.0 + 0.1 * k as f64)).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(channel_dispersion(0.0).is_err());
    }

    #[test]
    fn q_function_symmetry_points() {
        assert_eq!(q_function(0.0), 0.5);
        assert_eq!(q_inverse(0.5).unwrap(), 0.0);
        assert!(q_inverse(0.0).is_err());
        assert!(q_inverse(1.0).is_err());
        assert!(q_inverse(f64::NAN).is_err());
    }

    #[test]
    fn q_function_matches_quadrature() {
        for &x in &[0.0, 0.5, 1.0, 2.5, 4.0, 4.7534, 5.5] {
            let oracle = q_quadrature(x);
            assert!(
                ((q_function(x) - oracle) / oracle).abs() < 1e-9,
                "x={x}: {} vs {oracle}",
                q_function(x)
            );
        }
    }

    #[test]
    fn q_inverse_tail_value_against_bisection_oracle() {
        // bisection on the quadrature oracle, independent of erfc
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if q_quadrature(mid) > 1e-6 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let x = q_inverse(1e-6).unwrap();
        assert!((x - lo).abs() < 1e-7, "{x} vs {lo}");
        assert!((x - 4.753424308822899).abs() < 1e-9);
    }

    #[test]
    fn q_inverse_round_trip_accuracy() {
        let mut d = 1e-9;
        while d <= 0.5 {
            let x = q_inverse(d).unwrap();
            let back = q_function(x);
            assert!(
                (back - d).abs() <= 1e-10 * d.max(1e-12),
                "d={d}: back={back}"
            );
            d *= 1.37;
        }
        let x = q_inverse(0.9).unwrap();
        assert!((x + q_inverse(0.1).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn blocklength_reference_points() {
        let l = link(256, 10.0);
        let c = 11f64.log2();
        assert_eq!(blocklength_for_reliability(&l, 0.5).unwrap(), 256.0 / c);
        assert!((256.0 / c - 74.0).abs() < 0.01);
        let r = blocklength_for_reliability(&l, 1e-6).unwrap();
        assert!((r - 93.04272530978336).abs() < 1e-8, "{r}");
    }

    #[test]
    fn failure_probability_reference_points() {
        let l = link(256, 10.0);
        let at_capacity = failure_probability(256.0 / 11f64.log2(), &l).unwrap();
        assert!((at_capacity - 0.5).abs() < 1e-15);
        let p = failure_probability(93.04272530978336, &l).unwrap();
        assert!(((p - 1e-6) / 1e-6).abs() < 1e-8);
        assert!(failure_probability(0.0, &l).is_err());
        assert!(failure_probability(-3.0, &l).is_err());
        let mut prev = 1.0;
        for r in (10..2000).step_by(7) {
            let p = failure_probability(r as f64, &l).unwrap();
            assert!(p <= prev);
            prev = p;
        }
        assert!(prev < 1e-100);
    }

    #[test]
    fn inverse_pair_above_one_half() {
        let l = link(100, 3.0);
        for &p in &[0.6, 0.9, 0.99] {
            let r = blocklength_for_reliability(&l, p).unwrap();
            let back = failure_probability(r, &l).unwrap();
            assert!(((back - p) / p).abs() < 1e-9);
        }
    }

    #[test]
    fn truncated_payload_identity() {
        for &(bits, sinr, p) in &[(256, 10.0, 1e-6), (2000, 1.0, 1e-7), (512, 100.0, 1e-3)] {
            let l = link(bits, sinr);
            let r = blocklength_for_reliability(&l, p).unwrap();
            let payload = r * l.capacity() - q_inverse(p).unwrap() * (r * l.dispersion()).sqrt();
            assert!(((payload - bits as f64) / bits as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn log_term_shortens_blocklength() {
        let l = link(256, 10.0);
        let table = approximation_gap_table(&l, &[1e-3, 1e-6]).unwrap();
        for row in &table {
            assert!(row.log_corrected < row.truncated);
            let p = failure_probability_with(Approximation::LogCorrected, row.log_corrected, &l)
                .unwrap();
            assert!(((p - row.target_p) / row.target_p).abs() < 1e-6);
            assert!(row.relative_gap() > 0.0 && row.relative_gap() < 0.1);
        }
    }
}
