//! Exact stationary analysis of the multi-class loss system.
//!
//! With immediate scheduling and no queueing, the occupancy vector `n` of a
//! system with total bandwidth `W` has the truncated product form
//!
//! ```text
//! π(n) ∝ Π_c ρ_c^{n_c} / n_c!,   n ∈ S = { n : Σ h_c n_c ≤ W }
//! ```
//!
//! which depends on each class only through its load `ρ_c = λ_c s_c` and its
//! bandwidth `h_c`. By PASTA a class-`c` arrival is blocked with the
//! stationary mass of `S_c = { n ∈ S : n + e_c ∉ S }`.
//!
//! Enumeration is streaming: weights are accumulated in log space with a
//! running max shift and no state table is kept, except in
//! [`enumerate_feasible_states`] which exists for inspection of small systems.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::grid::BandwidthGrid;

pub const DEFAULT_STATE_CAP: u64 = 10_000_000;

/// One Poisson traffic stream in the loss system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossClass {
    /// Packets per second.
    pub arrival_rate: f64,
    /// Hz held per transmission.
    pub bandwidth: f64,
    /// Seconds each transmission holds its bandwidth.
    pub duration: f64,
}

impl LossClass {
    pub fn new(arrival_rate: f64, bandwidth: f64, duration: f64) -> Result<Self> {
        let class = Self {
            arrival_rate,
            bandwidth,
            duration,
        };
        class.validate()?;
        Ok(class)
    }

    pub fn load(&self) -> f64 {
        self.arrival_rate * self.duration
    }

    fn validate(&self) -> Result<()> {
        if !(self.arrival_rate >= 0.0) || !self.arrival_rate.is_finite() {
            return Err(validation(format!(
                "arrival rate must be finite and non-negative, got {}",
                self.arrival_rate
            )));
        }
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(validation(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(validation(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !self.load().is_finite() {
            return Err(validation("load λ·s overflows"));
        }
        Ok(())
    }
}

/// Concurrent-transmission counts, one entry per class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OccupancyState(pub Vec<u32>);

impl OccupancyState {
    pub fn used_bandwidth(&self, classes: &[LossClass]) -> f64 {
        self.0
            .iter()
            .zip(classes)
            .map(|(&n, c)| f64::from(n) * c.bandwidth)
            .sum()
    }
}

/// Product-form distribution of the infinite-bandwidth system: independent
/// Poisson marginals with means `ρ_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductForm {
    loads: Vec<f64>,
    bandwidths: Vec<f64>,
}

pub fn infinite_bw_distribution(classes: &[LossClass]) -> Result<ProductForm> {
    for c in classes {
        c.validate()?;
    }
    Ok(ProductForm {
        loads: classes.iter().map(LossClass::load).collect(),
        bandwidths: classes.iter().map(|c| c.bandwidth).collect(),
    })
}

impl ProductForm {
    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    /// `P(N_c = n)`.
    pub fn marginal(&self, class: usize, n: u32) -> f64 {
        log_poisson_weight(self.loads[class], n)
            .map_or(0.0, |lw| (lw - self.loads[class]).exp())
    }

    pub fn pmf(&self, state: &OccupancyState) -> f64 {
        state
            .0
            .iter()
            .enumerate()
            .map(|(c, &n)| self.marginal(c, n))
            .product()
    }

    /// `E[h·Nᵀ] = h·ρᵀ`.
    pub fn mean_utilization(&self) -> f64 {
        self.loads.iter().zip(&self.bandwidths).map(|(r, h)| r * h).sum()
    }

    /// `Var[h·Nᵀ] = Σ h_c² ρ_c`.
    pub fn utilization_variance(&self) -> f64 {
        self.loads
            .iter()
            .zip(&self.bandwidths)
            .map(|(r, h)| r * h * h)
            .sum()
    }
}

/// `ln(ρⁿ/n!)`, or `None` when the weight is exactly zero.
fn log_poisson_weight(rho: f64, n: u32) -> Option<f64> {
    if n == 0 {
        return Some(0.0);
    }
    if rho == 0.0 {
        return None;
    }
    let ln_rho = rho.ln();
    Some((1..=n).map(|k| ln_rho - f64::from(k).ln()).sum())
}

/// Feasible set `S` and per-class blocking frontiers `S_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub states: Vec<OccupancyState>,
    /// `frontiers[c]` holds indices into `states` forming `S_c`.
    pub frontiers: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    pub state_cap: u64,
    pub exec: Execution,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            state_cap: DEFAULT_STATE_CAP,
            exec: Execution::default(),
        }
    }
}

fn prepare(classes: &[LossClass], bandwidth: f64, cap: u64) -> Result<BandwidthGrid> {
    if classes.is_empty() {
        return Err(validation("at least one class is required"));
    }
    for c in classes {
        c.validate()?;
    }
    let demands: Vec<f64> = classes.iter().map(|c| c.bandwidth).collect();
    let grid = BandwidthGrid::new(bandwidth, &demands)?;
    let mut bound: u128 = 1;
    for k in 0..classes.len() {
        bound = bound.saturating_mul(u128::from(grid.max_count(k)) + 1);
    }
    if bound > u128::from(cap) {
        return Err(Error::StateSpace { states: bound, cap });
    }
    Ok(grid)
}

/// Enumerates `S` and every `S_c`; materializes the states, so intended
/// for small systems.
pub fn enumerate_feasible_states(
    classes: &[LossClass],
    bandwidth: f64,
    state_cap: u64,
) -> Result<StateSpace> {
    let grid = prepare(classes, bandwidth, state_cap)?;
    let mut space = StateSpace {
        states: Vec::new(),
        frontiers: vec![Vec::new(); classes.len()],
    };
    let mut counts = vec![0u32; classes.len()];
    walk(&grid, 0, grid.capacity, &mut counts, &mut |counts, free| {
        let idx = space.states.len();
        space.states.push(OccupancyState(counts.to_vec()));
        for (c, &h) in grid.demands.iter().enumerate() {
            if h > free {
                space.frontiers[c].push(idx);
            }
        }
    });
    Ok(space)
}

/// Depth-first walk over feasible states; `visit(counts, free_units)`.
fn walk<F: FnMut(&[u32], u64)>(
    grid: &BandwidthGrid,
    class: usize,
    free: u64,
    counts: &mut [u32],
    visit: &mut F,
) {
    if class == counts.len() {
        visit(counts, free);
        return;
    }
    let h = grid.demands[class];
    for n in 0..=free / h {
        counts[class] = n as u32;
        walk(grid, class + 1, free - n * h, counts, visit);
    }
    counts[class] = 0;
}

/// Running `ln Σ exp(xᵢ)` with a max shift.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn merge(&mut self, other: &Self) {
        if other.sum == 0.0 {
            return;
        }
        if other.max > self.max {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        } else {
            self.sum += other.sum * (other.max - self.max).exp();
        }
    }

    fn ln(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

#[derive(Debug, Clone)]
struct Partial {
    total: LogSum,
    blocked: Vec<LogSum>,
    states: u64,
}

/// Exact blocking for every class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockingReport {
    pub per_class_blocking: Vec<f64>,
    /// `G = 1 / Σ_{n∈S} Π ρ^n/n!`; may underflow for heavy loads, see
    /// `log_normalizer`.
    pub normalizing_constant: f64,
    /// `ln Σ_{n∈S} Π ρ^n/n!`.
    pub log_normalizer: f64,
    pub state_count: u64,
    /// `|Σ_partitions mass/Z − 1|`.
    pub normalization_error: f64,
    pub exact_grid: bool,
}

/// Exact per-class blocking of the loss system.
///
/// The state space is split by the count of the first class; partial sums
/// come back in partition order and are merged sequentially, so the result
/// does not depend on how many workers ran.
pub fn blocking_report(
    classes: &[LossClass],
    bandwidth: f64,
    opts: &ExactOptions,
) -> Result<BlockingReport> {
    let grid = prepare(classes, bandwidth, opts.state_cap)?;
    let tables: Vec<Vec<f64>> = classes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let rho = c.load();
            let ln_rho = if rho > 0.0 { rho.ln() } else { f64::NEG_INFINITY };
            let mut t = Vec::with_capacity(grid.max_count(k) as usize + 1);
            let mut acc = 0.0;
            t.push(0.0);
            for n in 1..=grid.max_count(k) {
                acc += ln_rho - (n as f64).ln();
                t.push(acc);
            }
            t
        })
        .collect();

    let h0 = grid.demands[0];
    let first_max = grid.max_count(0) as usize;
    let partials = map_indexed(first_max + 1, opts.exec, |n0| {
        let mut part = Partial {
            total: LogSum::EMPTY,
            blocked: vec![LogSum::EMPTY; classes.len()],
            states: 0,
        };
        let mut counts = vec![0u32; classes.len()];
        counts[0] = n0 as u32;
        walk(
            &grid,
            1,
            grid.capacity - n0 as u64 * h0,
            &mut counts,
            &mut |counts, free| {
                let lw: f64 = counts
                    .iter()
                    .zip(&tables)
                    .map(|(&n, t)| t[n as usize])
                    .sum();
                part.states += 1;
                part.total.add(lw);
                for (c, &h) in grid.demands.iter().enumerate() {
                    if h > free {
                        part.blocked[c].add(lw);
                    }
                }
            },
        );
        part
    });

    let mut total = LogSum::EMPTY;
    let mut blocked = vec![LogSum::EMPTY; classes.len()];
    let mut states = 0;
    for p in &partials {
        total.merge(&p.total);
        for (b, pb) in blocked.iter_mut().zip(&p.blocked) {
            b.merge(pb);
        }
        states += p.states;
    }
    let ln_z = total.ln();
    let normalization_error = (partials
        .iter()
        .map(|p| (p.total.ln() - ln_z).exp())
        .sum::<f64>()
        - 1.0)
        .abs();
    debug_assert!(normalization_error < 1e-12);

    Ok(BlockingReport {
        per_class_blocking: blocked
            .iter()
            .map(|b| (b.ln() - ln_z).exp().clamp(0.0, 1.0))
            .collect(),
        normalizing_constant: (-ln_z).exp(),
        log_normalizer: ln_z,
        state_count: states,
        normalization_error,
        exact_grid: grid.exact,
    })
}

/// Exact blocking probability of one class.
pub fn blocking_probability(class_index: usize, classes: &[LossClass], bandwidth: f64) -> Result<f64> {
    if class_index >= classes.len() {
        return Err(validation(format!(
            "class index {class_index} out of range for {} classes",
            classes.len()
        )));
    }
    Ok(blocking_report(classes, bandwidth, &ExactOptions::default())?.per_class_blocking[class_index])
}

/// Erlang-B blocking of an `m`-server loss system offered `load` Erlangs.
pub fn erlang_b(servers: u32, load: f64) -> f64 {
    let mut b = 1.0;
    for k in 1..=servers {
        b = load * b / (f64::from(k) + load * b);
    }
    b
}

/// Blocking before and after replacing `(h_i, s_i)` with `(h_i/q, q·s_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TallWideComparison {
    pub split_class: usize,
    pub factor: u32,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    /// `ρ_i < 1`, the regime where the wide system is guaranteed to win
    /// for large enough bandwidth.
    pub below_unit_load: bool,
}

impl TallWideComparison {
    /// Every class is blocked no more often in the wide system.
    pub fn wide_no_worse(&self) -> bool {
        self.before
            .iter()
            .zip(&self.after)
            .all(|(&b, &a)| a <= b * (1.0 + 1e-12))
    }
}

/// Spreads class `split` over `factor` times the duration at `1/factor` of
/// the bandwidth; arrival rate is unchanged, so its load grows by `factor`.
pub fn widen_class(classes: &[LossClass], split: usize, factor: u32) -> Result<Vec<LossClass>> {
    if factor == 0 {
        return Err(validation("split factor must be a positive integer"));
    }
    if split >= classes.len() {
        return Err(validation(format!(
            "split class {split} out of range for {} classes",
            classes.len()
        )));
    }
    let mut out = classes.to_vec();
    let q = f64::from(factor);
    out[split].bandwidth /= q;
    out[split].duration *= q;
    Ok(out)
}

pub fn compare_tall_wide(
    classes: &[LossClass],
    bandwidth: f64,
    split: usize,
    factor: u32,
    opts: &ExactOptions,
) -> Result<TallWideComparison> {
    let widened = widen_class(classes, split, factor)?;
    let before = blocking_report(classes, bandwidth, opts)?.per_class_blocking;
    let after = if factor == 1 {
        before.clone()
    } else {
        blocking_report(&widened, bandwidth, opts)?.per_class_blocking
    };
    Ok(TallWideComparison {
        split_class: split,
        factor,
        before,
        after,
        below_unit_load: classes[split].load() < 1.0,
    })
}

/// Outcome of scanning the tall/wide comparison over a bandwidth grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdScan {
    pub rows: Vec<(f64, TallWideComparison)>,
    /// Smallest grid bandwidth from which the wide system is no worse at
    /// every remaining grid point; `None` if the last point still violates.
    pub threshold: Option<f64>,
}

pub fn scan_tall_wide_threshold(
    classes: &[LossClass],
    bandwidths: &[f64],
    split: usize,
    factor: u32,
    opts: &ExactOptions,
) -> Result<ThresholdScan> {
    if bandwidths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(validation("bandwidth grid must be strictly increasing"));
    }
    let rows = bandwidths
        .iter()
        .map(|&w| Ok((w, compare_tall_wide(classes, w, split, factor, opts)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut threshold = None;
    for (w, cmp) in rows.iter().rev() {
        if cmp.wide_no_worse() {
            threshold = Some(*w);
        } else {
            break;
        }
    }
    Ok(ThresholdScan { rows, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(rho: f64, h: f64) -> LossClass {
        LossClass::new(rho, h, 1.0).unwrap()
    }

    #[test]
    fn product_form_marginals() {
        let pf = infinite_bw_distribution(&[class(0.0, 1.0)]).unwrap();
        assert_eq!(pf.marginal(0, 0), 1.0);
        assert_eq!(pf.marginal(0, 3), 0.0);
        let pf = infinite_bw_distribution(&[class(1.0, 1.0)]).unwrap();
        assert!((pf.marginal(0, 0) - (-1f64).exp()).abs() < 1e-15);
        let pf = infinite_bw_distribution(&[class(1.0, 3.0), class(2.0, 5.0)]).unwrap();
        assert!((pf.mean_utilization() - 13.0).abs() < 1e-12);
        assert!((pf.utilization_variance() - 59.0).abs() < 1e-12);
        let total: f64 = (0..40)
            .flat_map(|a| (0..40).map(move |b| OccupancyState(vec![a, b])))
            .map(|s| pf.pmf(&s))
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_server_state_space() {
        let s = enumerate_feasible_states(&[class(1.0, 1.0)], 1.0, 100).unwrap();
        assert_eq!(s.states, vec![OccupancyState(vec![0]), OccupancyState(vec![1])]);
        assert_eq!(s.frontiers[0], vec![1]);
        let s = enumerate_feasible_states(&[class(1.0, 1.0 / 3.0)], 1.0, 100).unwrap();
        assert_eq!(s.states.len(), 4);
    }

    #[test]
    fn two_half_width_classes() {
        let s = enumerate_feasible_states(&[class(1.0, 0.5), class(1.0, 0.5)], 1.0, 100).unwrap();
        let mut got: Vec<_> = s.states.iter().map(|s| (s.0[0], s.0[1])).collect();
        got.sort();
        assert_eq!(got, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)]);
        for f in &s.frontiers {
            let mut blocked: Vec<_> = f.iter().map(|&i| (s.states[i].0[0], s.states[i].0[1])).collect();
            blocked.sort();
            assert_eq!(blocked, vec![(0, 2), (1, 1), (2, 0)]);
        }
    }

    #[test]
    fn frontier_is_exactly_the_blocking_states() {
        let classes = [class(1.0, 2.0), class(1.0, 3.0), class(0.5, 5.0)];
        let w = 17.0;
        let s = enumerate_feasible_states(&classes, w, 10_000).unwrap();
        for (c, frontier) in s.frontiers.iter().enumerate() {
            for (i, st) in s.states.iter().enumerate() {
                let used = st.used_bandwidth(&classes);
                assert!(used <= w);
                let blocked = used + classes[c].bandwidth > w;
                assert_eq!(blocked, frontier.contains(&i));
            }
        }
    }

    #[test]
    fn erlang_b_values() {
        assert_eq!(erlang_b(0, 3.0), 1.0);
        assert_eq!(erlang_b(1, 1.0), 0.5);
        assert!((erlang_b(2, 1.0) - 0.2).abs() < 1e-15);
        assert!((erlang_b(10, 5.0) - 0.018_384_570_336_648).abs() < 1e-12);
    }

    #[test]
    fn blocking_reduces_to_erlang() {
        assert!((blocking_probability(0, &[class(1.0, 1.0)], 1.0).unwrap() - 0.5).abs() < 1e-15);
        let b = blocking_probability(0, &[class(5.0, 0.1)], 1.0).unwrap();
        assert!((b - erlang_b(10, 5.0)).abs() < 1e-12);
        assert_eq!(blocking_probability(0, &[class(0.0, 1.0)], 4.0).unwrap(), 0.0);
        assert!(blocking_probability(0, &[class(1e-9, 1.0)], 4.0).unwrap() < 1e-30);
    }

    #[test]
    fn state_cap_is_enforced() {
        let err = blocking_report(
            &[class(1.0, 1.0), class(1.0, 1.0)],
            9999.0,
            &ExactOptions {
                state_cap: 1000,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::StateSpace { states: 100_000_000, cap: 1000 }));
    }

    #[test]
    fn insensitivity_to_lambda_s_split() {
        let a = [LossClass::new(2.0, 3.0, 0.5).unwrap(), LossClass::new(4.0, 2.0, 0.25).unwrap()];
        let b = [LossClass::new(1.0, 3.0, 1.0).unwrap(), LossClass::new(0.5, 2.0, 2.0).unwrap()];
        let ra = blocking_report(&a, 20.0, &ExactOptions::default()).unwrap();
        let rb = blocking_report(&b, 20.0, &ExactOptions::default()).unwrap();
        assert_eq!(ra.per_class_blocking, rb.per_class_blocking);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let classes = [class(3.0, 2.0), class(1.5, 3.0), class(0.7, 7.0)];
        let seq = blocking_report(&classes, 60.0, &ExactOptions { exec: Execution::Sequential, ..Default::default() }).unwrap();
        let par = blocking_report(&classes, 60.0, &ExactOptions { exec: Execution::Parallel, ..Default::default() }).unwrap();
        assert_eq!(seq, par);
        assert!(seq.normalization_error < 1e-12);
    }

    #[test]
    fn heavy_load_does_not_overflow() {
        let r = blocking_report(&[class(400.0, 1.0)], 450.0, &ExactOptions::default()).unwrap();
        assert!((r.per_class_blocking[0] - erlang_b(450, 400.0)).abs() < 1e-12);
        assert_eq!(r.normalizing_constant, (-r.log_normalizer).exp());
        assert!(r.log_normalizer > 300.0);
        assert!(r.log_normalizer.is_finite());
    }

    #[test]
    fn identity_split() {
        let classes = [class(0.5, 2.0), class(1.0, 3.0)];
        let cmp = compare_tall_wide(&classes, 12.0, 0, 1, &ExactOptions::default()).unwrap();
        assert_eq!(cmp.before, cmp.after);
        assert!(cmp.wide_no_worse());
    }

    #[test]
    fn single_class_split_helps() {
        let classes = [LossClass::new(0.5, 0.5, 1.0).unwrap()];
        let cmp = compare_tall_wide(&classes, 1.0, 0, 2, &ExactOptions::default()).unwrap();
        assert!(cmp.below_unit_load);
        assert!(cmp.after[0] <= cmp.before[0]);
        // B(2, 0.5) before, B(4, 1.0) after
        assert!((cmp.before[0] - erlang_b(2, 0.5)).abs() < 1e-14);
        assert!((cmp.after[0] - erlang_b(4, 1.0)).abs() < 1e-14);
    }

    #[test]
    fn threshold_scan_reports_tail_start() {
        let classes = [class(0.9, 4.0), class(3.0, 2.0)];
        let grid: Vec<f64> = (2..=40).map(|k| 2.0 * k as f64).collect();
        let scan = scan_tall_wide_threshold(&classes, &grid, 0, 2, &ExactOptions::default()).unwrap();
        let t = scan.threshold.expect("threshold inside grid");
        for (w, cmp) in &scan.rows {
            if *w >= t {
                assert!(cmp.wide_no_worse());
            }
        }
        assert!(scan_tall_wide_threshold(&classes, &[4.0, 4.0], 0, 2, &ExactOptions::default()).is_err());
    }
}
