//! Poisson arrival generation for the three traffic classes and the
//! deadline-ordered critical queue.
//!
//! Per scheduling period each class draws an independent Poisson count:
//! performance packets feed the per-user backlog, critical packets join
//! the queue with a service deadline, and GSM-R arrivals activate
//! carriers (or tag colliding PRBs directly) for the period.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::grid::GridConfig;
use crate::{SimError, UserId};

/// Valid critical payload range in bytes.
pub const CRITICAL_SIZE_RANGE: (u32, u32) = (70, 120);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    /// ETCS signalling data; always served before voice.
    Signaling,
    /// Emergency voice.
    Voice,
}

/// A critical-class packet awaiting mini-slot service.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPacket {
    /// Arrival sequence number; the stable sort / trace key.
    pub seq: u64,
    pub user: UserId,
    pub kind: CriticalKind,
    pub size_bytes: u32,
    pub arrival_period: u64,
    pub arrival_slot: usize,
    pub arrival_mini: usize,
    pub deadline_ms: f64,
}

impl CriticalPacket {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        seq: u64,
        user: UserId,
        kind: CriticalKind,
        size_bytes: u32,
        arrival_period: u64,
        arrival_slot: usize,
        arrival_mini: usize,
        deadline_ms: f64,
    ) -> Result<Self, SimError> {
        if !(CRITICAL_SIZE_RANGE.0..=CRITICAL_SIZE_RANGE.1).contains(&size_bytes) {
            return Err(SimError::Config(format!(
                "critical payload {size_bytes} B outside the {}..={} B range",
                CRITICAL_SIZE_RANGE.0, CRITICAL_SIZE_RANGE.1
            )));
        }
        Ok(Self { seq, user, kind, size_bytes, arrival_period, arrival_slot, arrival_mini, deadline_ms })
    }

    /// Last absolute slot (period * slots + slot) in which the packet can
    /// still be served: the deadline counts down one slot duration per
    /// slot and expires once it goes negative.
    pub fn last_slot_abs(&self, grid: &GridConfig) -> u64 {
        let deadline_slots = (self.deadline_ms / grid.slot_duration_ms).floor() as u64;
        self.arrival_period * grid.slots as u64 + self.arrival_slot as u64 + deadline_slots
    }

    /// Deadline left at the start of `period`, in ms. Negative = expired.
    pub fn deadline_remaining_ms(&self, period: u64, grid: &GridConfig) -> f64 {
        let arrival_abs = self.arrival_period * grid.slots as u64 + self.arrival_slot as u64;
        let now_abs = period * grid.slots as u64;
        self.deadline_ms - (now_abs.saturating_sub(arrival_abs)) as f64 * grid.slot_duration_ms
    }

    /// Serviceable slot window within `period`: `(first_slot, first_mini,
    /// last_slot)`. `None` once the window lies entirely in the past.
    pub fn window_in_period(&self, period: u64, grid: &GridConfig) -> Option<(usize, usize, usize)> {
        if self.arrival_period > period {
            return None;
        }
        let last_abs = self.last_slot_abs(grid);
        let period_start = period * grid.slots as u64;
        if last_abs < period_start {
            return None;
        }
        let (first_slot, first_mini) = if self.arrival_period == period {
            (self.arrival_slot, self.arrival_mini)
        } else {
            (0, 0)
        };
        let last_slot = ((last_abs - period_start).min(grid.slots as u64 - 1)) as usize;
        Some((first_slot, first_mini, last_slot))
    }

    /// True when the deadline falls within `period`, i.e. this period is
    /// the packet's last chance.
    pub fn expires_within(&self, period: u64, grid: &GridConfig) -> bool {
        self.last_slot_abs(grid) < (period + 1) * grid.slots as u64
    }
}

/// Demand description of a performance-class user: the sustained rate
/// the scheduler sizes its PRB grant against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceDemand {
    pub user: UserId,
    pub target_bps: f64,
    pub packet_bytes: u32,
}

impl PerformanceDemand {
    /// Uniform demand for users 0..n.
    pub fn uniform(num_users: u32, target_bps: f64, packet_bytes: u32) -> Vec<Self> {
        (0..num_users)
            .map(|i| Self { user: UserId(i), target_bps, packet_bytes })
            .collect()
    }
}

/// Mean arrivals per scheduling period for the three classes, plus the
/// packet parameters they draw from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrivalConfig {
    pub lambda_perf: f64,
    pub lambda_critical: f64,
    pub lambda_gsmr: f64,
    pub seed: u64,
    pub critical_deadline_ms: f64,
    pub critical_packet_bytes: u32,
    pub perf_packet_bytes: u32,
    /// Probability that a critical packet is signalling (vs voice).
    pub signaling_fraction: f64,
}

impl Default for ArrivalConfig {
    fn default() -> Self {
        Self {
            lambda_perf: 50.0,
            lambda_critical: 10.0,
            lambda_gsmr: 2.0,
            seed: 1,
            critical_deadline_ms: 5.0,
            critical_packet_bytes: 100,
            perf_packet_bytes: 200,
            signaling_fraction: 0.5,
        }
    }
}

impl ArrivalConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.lambda_perf < 0.0 || self.lambda_critical < 0.0 || self.lambda_gsmr < 0.0 {
            return Err(SimError::Config("arrival rates must be non-negative".into()));
        }
        if !(CRITICAL_SIZE_RANGE.0..=CRITICAL_SIZE_RANGE.1).contains(&self.critical_packet_bytes) {
            return Err(SimError::Config(format!(
                "critical packet size {} B outside the {}..={} B range",
                self.critical_packet_bytes, CRITICAL_SIZE_RANGE.0, CRITICAL_SIZE_RANGE.1
            )));
        }
        if !(0.0..=1.0).contains(&self.signaling_fraction) {
            return Err(SimError::Config("signaling_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Arrivals drawn for one scheduling period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodArrivals {
    pub critical: Vec<CriticalPacket>,
    /// New backlog bits per user index.
    pub perf_bits: Vec<f64>,
    /// GSM-R activation events (carriers or occupied PRBs to draw).
    pub gsmr_activations: u64,
}

/// Poisson draw that tolerates a zero rate.
pub fn poisson_count(rng: &mut impl Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive lambda").sample(rng) as u64
}

/// Draws one period of arrivals for every class. Packets get uniformly
/// random (slot, mini-slot) arrival instants and uniformly random owners;
/// `next_seq` threads the arrival order across periods.
pub fn generate_arrivals(
    rng: &mut impl Rng,
    cfg: &ArrivalConfig,
    grid: &GridConfig,
    num_users: u32,
    period: u64,
    next_seq: &mut u64,
) -> PeriodArrivals {
    let mut perf_bits = vec![0.0; num_users as usize];
    if num_users > 0 {
        for _ in 0..poisson_count(rng, cfg.lambda_perf) {
            let user = rng.random_range(0..num_users) as usize;
            perf_bits[user] += cfg.perf_packet_bytes as f64 * 8.0;
        }
    }

    let mut critical = Vec::new();
    if num_users > 0 {
        for _ in 0..poisson_count(rng, cfg.lambda_critical) {
            let user = UserId(rng.random_range(0..num_users));
            let kind = if rng.random_bool(cfg.signaling_fraction) {
                CriticalKind::Signaling
            } else {
                CriticalKind::Voice
            };
            let slot = rng.random_range(0..grid.slots);
            let mini = rng.random_range(0..grid.mini_slots);
            let packet = CriticalPacket::new(
                *next_seq,
                user,
                kind,
                cfg.critical_packet_bytes,
                period,
                slot,
                mini,
                cfg.critical_deadline_ms,
            )
            .expect("validated packet size");
            *next_seq += 1;
            critical.push(packet);
        }
    }

    PeriodArrivals {
        critical,
        perf_bits,
        gsmr_activations: poisson_count(rng, cfg.lambda_gsmr),
    }
}

/// Orders a critical queue for service: signalling before voice, then
/// ascending remaining deadline, then arrival order (stable).
pub fn sort_critical_queue(queue: &mut [CriticalPacket], period: u64, grid: &GridConfig) {
    queue.sort_by(|a, b| {
        a.kind
            .cmp(&b.kind)
            .then(
                a.deadline_remaining_ms(period, grid)
                    .total_cmp(&b.deadline_remaining_ms(period, grid)),
            )
            .then(a.seq.cmp(&b.seq))
    });
}

/// Mutable cross-period traffic state for one scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficQueues {
    pub critical: Vec<CriticalPacket>,
    pub perf_backlog_bits: Vec<f64>,
    /// Monotone counter of expired (dropped) critical packets.
    pub expired: u64,
    pub next_seq: u64,
}

impl TrafficQueues {
    pub fn new(num_users: u32) -> Self {
        Self {
            critical: Vec::new(),
            perf_backlog_bits: vec![0.0; num_users as usize],
            expired: 0,
            next_seq: 0,
        }
    }

    pub fn push_arrivals(&mut self, arrivals: &PeriodArrivals) {
        self.critical.extend_from_slice(&arrivals.critical);
        for (backlog, add) in self.perf_backlog_bits.iter_mut().zip(&arrivals.perf_bits) {
            *backlog += add;
        }
    }

    pub fn sort_for_period(&mut self, period: u64, grid: &GridConfig) {
        sort_critical_queue(&mut self.critical, period, grid);
    }

    /// Drains delivered performance bits from a user's backlog.
    pub fn drain_perf(&mut self, user: usize, bits: f64) {
        if let Some(backlog) = self.perf_backlog_bits.get_mut(user) {
            *backlog = (*backlog - bits).max(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha12Rng;
    use rand::SeedableRng;

    fn grid() -> GridConfig {
        GridConfig::default()
    }

    fn packet(seq: u64, kind: CriticalKind, deadline_ms: f64) -> CriticalPacket {
        CriticalPacket::new(seq, UserId(0), kind, 100, 0, 0, 0, deadline_ms).unwrap()
    }

    #[test]
    fn zero_rate_yields_no_packets() {
        let cfg = ArrivalConfig { lambda_critical: 0.0, ..ArrivalConfig::default() };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut seq = 0;
        let arr = generate_arrivals(&mut rng, &cfg, &grid(), 2, 0, &mut seq);
        assert!(arr.critical.is_empty());
    }

    #[test]
    fn identical_seeds_identical_streams() {
        let cfg = ArrivalConfig::default();
        let run = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut seq = 0;
            (0..20)
                .map(|p| generate_arrivals(&mut rng, &cfg, &grid(), 2, p, &mut seq))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn sample_mean_within_three_sigma() {
        let cfg = ArrivalConfig { lambda_critical: 10.0, ..ArrivalConfig::default() };
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut seq = 0;
        let periods = 10_000u64;
        let total: u64 = (0..periods)
            .map(|p| generate_arrivals(&mut rng, &cfg, &grid(), 2, p, &mut seq).critical.len() as u64)
            .sum();
        let mean = total as f64 / periods as f64;
        let sigma = (10.0f64).sqrt() / (periods as f64).sqrt();
        assert!((mean - 10.0).abs() < 3.0 * sigma, "mean {mean}, 3 sigma {}", 3.0 * sigma);
    }

    #[test]
    fn queue_order_kind_then_deadline() {
        let mut q = vec![
            packet(0, CriticalKind::Voice, 2.0),
            packet(1, CriticalKind::Signaling, 5.0),
        ];
        sort_critical_queue(&mut q, 0, &grid());
        assert_eq!(q[0].kind, CriticalKind::Signaling);
        assert_eq!(q[1].kind, CriticalKind::Voice);

        let mut q = vec![
            packet(0, CriticalKind::Signaling, 3.0),
            packet(1, CriticalKind::Signaling, 1.0),
        ];
        sort_critical_queue(&mut q, 0, &grid());
        assert_eq!(q[0].seq, 1);
    }

    #[test]
    fn equal_keys_preserve_arrival_order() {
        let mut q: Vec<CriticalPacket> =
            (0..6).map(|i| packet(i, CriticalKind::Voice, 5.0)).collect();
        sort_critical_queue(&mut q, 0, &grid());
        let seqs: Vec<u64> = q.iter().map(|p| p.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2, 3, 4, 5]);
        // Sorting is idempotent.
        let once = q.clone();
        sort_critical_queue(&mut q, 0, &grid());
        assert_eq!(q, once);
    }

    #[test]
    fn deadline_windows() {
        let g = grid();
        // Arrival at slot 7 of period 0, 5 ms deadline: last absolute slot 12.
        let p = packet(0, CriticalKind::Signaling, 5.0);
        let p = CriticalPacket { arrival_slot: 7, arrival_mini: 3, ..p };
        assert_eq!(p.window_in_period(0, &g), Some((7, 3, 9)));
        assert_eq!(p.window_in_period(1, &g), Some((0, 0, 2)));
        assert_eq!(p.window_in_period(2, &g), None);
        assert!(!p.expires_within(0, &g));
        assert!(p.expires_within(1, &g));
        assert_eq!(p.deadline_remaining_ms(1, &g), 2.0);
    }

    #[test]
    fn packet_size_bounds_enforced() {
        assert!(CriticalPacket::new(0, UserId(0), CriticalKind::Voice, 69, 0, 0, 0, 5.0).is_err());
        assert!(CriticalPacket::new(0, UserId(0), CriticalKind::Voice, 121, 0, 0, 0, 5.0).is_err());
        assert!(CriticalPacket::new(0, UserId(0), CriticalKind::Voice, 70, 0, 0, 0, 5.0).is_ok());
    }
}
