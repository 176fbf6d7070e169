//! Single-replication event loop.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{FinalStatus, PacketRecord, StageOutcome};
use crate::grid::BandwidthGrid;
use crate::traffic::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    /// A transmission finished and releases its bandwidth.
    Release { packet: usize },
    /// Decoding feedback reached the base station.
    Feedback { packet: usize },
    Arrival { class: usize },
}

impl Kind {
    /// Releases run before any admission scheduled at the same instant.
    fn rank(self) -> u8 {
        match self {
            Kind::Release { .. } => 0,
            Kind::Feedback { .. } | Kind::Arrival { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap and we want the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.rank().cmp(&self.kind.rank()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug)]
struct Packet {
    class: usize,
    arrival_time: f64,
    stage: u32,
    counted: bool,
    trace: Option<Vec<StageOutcome>>,
}

/// Raw per-class tallies of one replication.
#[derive(Debug, Clone, Default)]
pub(crate) struct ClassTally {
    pub arrivals: u64,
    pub delivered: u64,
    pub blocked_dropped: u64,
    pub decode_exhausted: u64,
    pub in_flight: u64,
    pub on_time: u64,
    pub delays: Vec<f64>,
    pub stage_requests: Vec<u64>,
    pub stage_blocked: Vec<u64>,
    /// ∫ N_{c,m}(t) dt over the observation window.
    pub stage_count_integral: Vec<f64>,
    /// ∫ 1{occupied + h_c > W} dt.
    pub full_time: f64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct RunTally {
    pub classes: Vec<ClassTally>,
    /// ∫ occupied(t) dt, Hz·s.
    pub occupancy_integral: f64,
    /// ∫ occupied(t)² dt, Hz²·s.
    pub occupancy_sq_integral: f64,
    pub observed_time: f64,
    pub max_occupied_units: u64,
    pub trace: Vec<PacketRecord>,
}

pub(crate) struct Engine<'a> {
    system: &'a SystemConfig,
    grid: &'a BandwidthGrid,
    warmup: f64,
    horizon: f64,
    record_trace: bool,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl<'a> Engine<'a> {
    pub(crate) fn new(
        system: &'a SystemConfig,
        grid: &'a BandwidthGrid,
        warmup: f64,
        horizon: f64,
        record_trace: bool,
    ) -> Self {
        Self {
            system,
            grid,
            warmup,
            horizon,
            record_trace,
        }
    }

    pub(crate) fn run(&self, seed: u64) -> RunTally {
        let plans = &self.system.classes;
        let n_classes = plans.len();
        // one independent stream per (class, purpose)
        let mut arrival_rngs: Vec<ChaCha8Rng> =
            (0..n_classes).map(|c| stream_rng(seed, 2 * c as u64)).collect();
        let mut decode_rngs: Vec<ChaCha8Rng> =
            (0..n_classes).map(|c| stream_rng(seed, 2 * c as u64 + 1)).collect();
        let gaps: Vec<Option<Exp<f64>>> = plans
            .iter()
            .map(|p| {
                (p.class.arrival_rate > 0.0)
                    .then(|| Exp::new(p.class.arrival_rate).expect("positive rate"))
            })
            .collect();

        let mut tally = RunTally {
            classes: plans
                .iter()
                .map(|p| {
                    let m = p.scheme.stages as usize;
                    ClassTally {
                        stage_requests: vec![0; m],
                        stage_blocked: vec![0; m],
                        stage_count_integral: vec![0.0; m],
                        ..Default::default()
                    }
                })
                .collect(),
            observed_time: self.horizon - self.warmup,
            ..Default::default()
        };

        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        let mut push = |heap: &mut BinaryHeap<Event>, time: f64, kind: Kind| {
            heap.push(Event { time, seq, kind });
            seq += 1;
        };
        for (c, gap) in gaps.iter().enumerate() {
            if let Some(gap) = gap {
                let t = gap.sample(&mut arrival_rngs[c]);
                if t < self.horizon {
                    push(&mut heap, t, Kind::Arrival { class: c });
                }
            }
        }

        let mut packets: Vec<Option<Packet>> = Vec::new();
        let mut free_slots: Vec<usize> = Vec::new();
        let mut occupied: u64 = 0;
        let mut in_tx: Vec<Vec<u64>> = plans
            .iter()
            .map(|p| vec![0; p.scheme.stages as usize])
            .collect();
        let mut last_time = self.warmup;
        let unit = self.grid.unit_hz;

        while let Some(ev) = heap.pop() {
            if ev.time > self.horizon {
                break;
            }
            // integrate the piecewise-constant state up to this event
            if ev.time > last_time {
                let dt = ev.time - last_time;
                self.integrate(&mut tally, occupied, &in_tx, dt, unit);
                last_time = ev.time;
            }
            let now = ev.time;
            match ev.kind {
                Kind::Arrival { class } => {
                    if let Some(gap) = &gaps[class] {
                        let next = now + gap.sample(&mut arrival_rngs[class]);
                        if next < self.horizon {
                            push(&mut heap, next, Kind::Arrival { class });
                        }
                    }
                    let counted = now >= self.warmup;
                    if counted {
                        tally.classes[class].arrivals += 1;
                    }
                    let packet = Packet {
                        class,
                        arrival_time: now,
                        stage: 1,
                        counted,
                        trace: self.record_trace.then(Vec::new),
                    };
                    let id = match free_slots.pop() {
                        Some(slot) => {
                            packets[slot] = Some(packet);
                            slot
                        }
                        None => {
                            packets.push(Some(packet));
                            packets.len() - 1
                        }
                    };
                    self.request(
                        id,
                        now,
                        &mut packets,
                        &mut free_slots,
                        &mut occupied,
                        &mut in_tx,
                        &mut tally,
                        &mut heap,
                        &mut push,
                    );
                }
                Kind::Release { packet } => {
                    let p = packets[packet].as_ref().expect("live packet");
                    let c = p.class;
                    occupied -= self.grid.demands[c];
                    in_tx[c][p.stage as usize - 1] -= 1;
                    let f = plans[c].class.feedback_delay;
                    push(&mut heap, now + f, Kind::Feedback { packet });
                }
                Kind::Feedback { packet } => {
                    let p = packets[packet].as_mut().expect("live packet");
                    let c = p.class;
                    let scheme = &plans[c].scheme;
                    let failed = decode_rngs[c].random::<f64>() < scheme.stage_failure_prob;
                    if let Some(trace) = &mut p.trace {
                        trace.last_mut().expect("stage recorded").decoded = !failed;
                    }
                    if !failed {
                        let delay = now - p.arrival_time;
                        if p.counted {
                            let t = &mut tally.classes[c];
                            t.delivered += 1;
                            t.delays.push(delay);
                            if delay <= plans[c].class.deadline * (1.0 + 1e-12) {
                                t.on_time += 1;
                            }
                        }
                        self.finish(packet, FinalStatus::Delivered, Some(delay), &mut packets, &mut free_slots, &mut tally);
                    } else if p.stage < scheme.stages {
                        p.stage += 1;
                        self.request(
                            packet,
                            now,
                            &mut packets,
                            &mut free_slots,
                            &mut occupied,
                            &mut in_tx,
                            &mut tally,
                            &mut heap,
                            &mut push,
                        );
                    } else {
                        if p.counted {
                            tally.classes[c].decode_exhausted += 1;
                        }
                        self.finish(packet, FinalStatus::DecodeExhausted, None, &mut packets, &mut free_slots, &mut tally);
                    }
                }
            }
        }
        if self.horizon > last_time {
            self.integrate(&mut tally, occupied, &in_tx, self.horizon - last_time, unit);
        }
        for slot in 0..packets.len() {
            if let Some(p) = &packets[slot] {
                if p.counted {
                    tally.classes[p.class].in_flight += 1;
                }
                self.finish(slot, FinalStatus::InFlight, None, &mut packets, &mut free_slots, &mut tally);
            }
        }
        tally
    }

    fn integrate(&self, tally: &mut RunTally, occupied: u64, in_tx: &[Vec<u64>], dt: f64, unit: f64) {
        let hz = occupied as f64 * unit;
        tally.occupancy_integral += hz * dt;
        tally.occupancy_sq_integral += hz * hz * dt;
        for (c, ct) in tally.classes.iter_mut().enumerate() {
            for (acc, &n) in ct.stage_count_integral.iter_mut().zip(&in_tx[c]) {
                *acc += n as f64 * dt;
            }
            if occupied + self.grid.demands[c] > self.grid.capacity {
                ct.full_time += dt;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn request<P: FnMut(&mut BinaryHeap<Event>, f64, Kind)>(
        &self,
        id: usize,
        now: f64,
        packets: &mut [Option<Packet>],
        free_slots: &mut Vec<usize>,
        occupied: &mut u64,
        in_tx: &mut [Vec<u64>],
        tally: &mut RunTally,
        heap: &mut BinaryHeap<Event>,
        push: &mut P,
    ) {
        let p = packets[id].as_mut().expect("live packet");
        let c = p.class;
        let stage = p.stage as usize - 1;
        let h = self.grid.demands[c];
        if p.counted {
            tally.classes[c].stage_requests[stage] += 1;
        }
        if *occupied + h > self.grid.capacity {
            if let Some(trace) = &mut p.trace {
                trace.push(StageOutcome { start: now, end: now, blocked: true, decoded: false });
            }
            if p.counted {
                tally.classes[c].stage_blocked[stage] += 1;
                tally.classes[c].blocked_dropped += 1;
            }
            self.finish(id, FinalStatus::BlockedDropped, None, packets, free_slots, tally);
            return;
        }
        *occupied += h;
        assert!(*occupied <= self.grid.capacity, "occupied bandwidth exceeds W");
        tally.max_occupied_units = tally.max_occupied_units.max(*occupied);
        in_tx[c][stage] += 1;
        let end = now + self.system.classes[c].scheme.duration;
        if let Some(trace) = &mut p.trace {
            trace.push(StageOutcome { start: now, end, blocked: false, decoded: false });
        }
        push(heap, end, Kind::Release { packet: id });
    }

    fn finish(
        &self,
        id: usize,
        status: FinalStatus,
        delay: Option<f64>,
        packets: &mut [Option<Packet>],
        free_slots: &mut Vec<usize>,
        tally: &mut RunTally,
    ) {
        let p = packets[id].take().expect("live packet");
        free_slots.push(id);
        if let Some(stages) = p.trace {
            tally.trace.push(PacketRecord {
                class_index: p.class,
                arrival_time: p.arrival_time,
                stages,
                final_status: status,
                total_delay: delay,
            });
        }
    }
}
