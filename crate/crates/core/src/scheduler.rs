//! The ITSP scheduler and the BCQI baseline over one scheduling period.
//!
//! Both schedulers share the CQI-greedy performance pass; they differ in
//! the PRB set they may touch and in preemption:
//!
//! * ITSP serves performance traffic on every PRB that is not
//!   control-reserved and not GSM-R-occupied (colliding-but-idle PRBs
//!   included), then drains the critical queue into free mini-slots of
//!   non-colliding PRBs, then punctures performance-owned mini-slots
//!   within the preemption allowance. Packets on their last serviceable
//!   slot preempt unconditionally, lowest-MCS PRB first.
//! * BCQI never touches a colliding PRB for either traffic class and
//!   never preempts: critical traffic waits for free mini-slots and
//!   expires if none appear in time.
//!
//! Everything is deterministic: equal-CQI users order by ascending id,
//! PRBs are taken in ascending index, preemption targets by ascending
//! owner MCS, then PRB, slot and mini-slot.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::band_plan::BandPlan;
use crate::channel::{mini_slots_for_bytes, required_prbs, LinkState};
use crate::grid::{AllocationReport, CellOwner, GridConfig, ResourceGrid};
use crate::traffic::{CriticalKind, CriticalPacket, PerformanceDemand, TrafficQueues};
use crate::{SimError, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Itsp,
    Bcqi,
}

impl SchedulerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::Itsp => "itsp",
            SchedulerKind::Bcqi => "bcqi",
        }
    }
}

/// Experiment toggle for the preemption-target tie-break. The default
/// punctures the lowest-MCS owner first to minimize the throughput hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreemptOrder {
    #[default]
    LowestMcs,
    PrbIndex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerParams {
    pub kind: SchedulerKind,
    /// PA: mini-slots preemptable per (PRB, slot) outside emergencies.
    pub pa_mini_slots: u32,
    /// Per-(user, PRB) cap on critical mini-slots over the period.
    pub delay_budget_minis: u64,
    pub preempt_order: PreemptOrder,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        Self {
            kind: SchedulerKind::Itsp,
            pa_mini_slots: 2,
            delay_budget_minis: 35,
            preempt_order: PreemptOrder::LowestMcs,
        }
    }
}

/// One entry of the decision trace. Replaying the grant entries onto a
/// fresh grid reproduces the final grid exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    PerfGrant { user: UserId, prb: usize, slot: usize },
    CriticalPlace {
        seq: u64,
        user: UserId,
        prb: usize,
        slot: usize,
        mini: usize,
        preempted: bool,
        emergency: bool,
    },
    Drop { seq: u64, reason: DropReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// The user is in outage (CQI 0).
    Unservable,
    /// No non-colliding capacity at the deadline.
    NoCapacity,
    /// The service window closed unserved.
    Expired,
}

/// A critical packet that made it onto the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ServedPacket {
    pub seq: u64,
    pub user: UserId,
    pub kind: CriticalKind,
    pub size_bytes: u32,
    pub arrival_period: u64,
    pub arrival_slot: usize,
    pub arrival_mini: usize,
    pub deadline_ms: f64,
    pub minis: Vec<(usize, usize, usize)>,
    pub emergency: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerOutcome {
    pub kind: SchedulerKind,
    pub period: u64,
    pub grid: ResourceGrid,
    pub report: AllocationReport,
    pub served: Vec<ServedPacket>,
    pub drops: Vec<(u64, DropReason)>,
    pub trace: Vec<Decision>,
}

#[derive(Clone, Copy)]
struct Candidate {
    prb: usize,
    slot: usize,
    mini: usize,
    preempted: bool,
}

struct CriticalPass<'a> {
    grid: &'a mut ResourceGrid,
    links: &'a BTreeMap<UserId, LinkState>,
    params: &'a SchedulerParams,
    /// Normal-phase preempted mini-slots per (PRB, slot); a pair whose
    /// count reached PA is in the outage set.
    pa_used: Vec<u32>,
    /// Critical mini-slots per (user, PRB) toward the delay budget.
    budget_used: BTreeMap<(UserId, usize), u64>,
}

impl<'a> CriticalPass<'a> {
    fn new(
        grid: &'a mut ResourceGrid,
        links: &'a BTreeMap<UserId, LinkState>,
        params: &'a SchedulerParams,
    ) -> Self {
        let pairs = grid.config().prbs * grid.config().slots;
        Self { grid, links, params, pa_used: vec![0; pairs], budget_used: BTreeMap::new() }
    }

    fn pair(&self, k: usize, t: usize) -> usize {
        k * self.grid.config().slots + t
    }

    fn budget_left(&self, user: UserId, k: usize, taken_here: u64) -> u64 {
        let used = self.budget_used.get(&(user, k)).copied().unwrap_or(0) + taken_here;
        self.params.delay_budget_minis.saturating_sub(used)
    }

    fn slot_minis(&self, t: usize, window: (usize, usize, usize)) -> std::ops::Range<usize> {
        let start = if t == window.0 { window.1 } else { 0 };
        start..self.grid.config().mini_slots
    }

    /// Eligible PRBs for critical traffic: never reserved, never colliding.
    fn critical_prbs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid.config().prbs).filter(|&k| {
            let f = self.grid.flags(k);
            !f.reserved && !f.colliding
        })
    }

    /// Free mini-slots in (PRB, slot, mini) order within the window.
    fn collect_free(
        &self,
        user: UserId,
        window: (usize, usize, usize),
        need: u64,
        out: &mut Vec<Candidate>,
    ) {
        for k in self.critical_prbs().collect::<Vec<_>>() {
            let mut on_prb = 0u64;
            for t in window.0..=window.2 {
                for m in self.slot_minis(t, window) {
                    if out.len() as u64 >= need {
                        return;
                    }
                    if self.budget_left(user, k, on_prb) == 0 {
                        break;
                    }
                    if self.grid.cell(k, t, m).owner == CellOwner::Free {
                        out.push(Candidate { prb: k, slot: t, mini: m, preempted: false });
                        on_prb += 1;
                    }
                }
            }
        }
    }

    /// Performance-owned (PRB, slot) pairs in preemption order:
    /// lowest-owner-MCS first by default, plain index order under the
    /// experiment toggle.
    fn preemption_targets(&self, window: (usize, usize, usize)) -> Vec<(usize, usize)> {
        let mut targets: Vec<(f64, usize, usize)> = Vec::new();
        for k in self.critical_prbs().collect::<Vec<_>>() {
            for t in window.0..=window.2 {
                if let Some(owner) = self.grid.perf_owner(k, t) {
                    let eff = self.links.get(&owner).map_or(0.0, |l| l.efficiency);
                    targets.push((eff, k, t));
                }
            }
        }
        if self.params.preempt_order == PreemptOrder::LowestMcs {
            targets.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        }
        targets.into_iter().map(|(_, k, t)| (k, t)).collect()
    }

    /// Preemptable mini-slots within the allowance, lowest-MCS PRB first.
    fn collect_preemptable(
        &self,
        user: UserId,
        window: (usize, usize, usize),
        need: u64,
        out: &mut Vec<Candidate>,
    ) {
        let mut on_prb: BTreeMap<usize, u64> = BTreeMap::new();
        for (k, t) in self.preemption_targets(window) {
            let mut left = self.params.pa_mini_slots.saturating_sub(self.pa_used[self.pair(k, t)]);
            if left == 0 {
                continue; // pair is in the outage set
            }
            for m in self.slot_minis(t, window) {
                if out.len() as u64 >= need {
                    return;
                }
                if left == 0 {
                    break;
                }
                let taken = on_prb.get(&k).copied().unwrap_or(0);
                if self.budget_left(user, k, taken) == 0 {
                    break;
                }
                if matches!(self.grid.cell(k, t, m).owner, CellOwner::Performance(_)) {
                    out.push(Candidate { prb: k, slot: t, mini: m, preempted: true });
                    *on_prb.entry(k).or_insert(0) += 1;
                    left -= 1;
                }
            }
        }
    }

    /// Emergency candidates: free mini-slots first, then any
    /// performance-owned mini-slot regardless of the allowance.
    fn collect_emergency(
        &self,
        user: UserId,
        window: (usize, usize, usize),
        need: u64,
        out: &mut Vec<Candidate>,
    ) {
        self.collect_free(user, window, need, out);
        if (out.len() as u64) >= need {
            return;
        }
        let mut on_prb: BTreeMap<usize, u64> = BTreeMap::new();
        for c in out.iter() {
            *on_prb.entry(c.prb).or_insert(0) += 1;
        }
        for (k, t) in self.preemption_targets(window) {
            for m in self.slot_minis(t, window) {
                if out.len() as u64 >= need {
                    return;
                }
                let taken = on_prb.get(&k).copied().unwrap_or(0);
                if self.budget_left(user, k, taken) == 0 {
                    break;
                }
                if matches!(self.grid.cell(k, t, m).owner, CellOwner::Performance(_)) {
                    out.push(Candidate { prb: k, slot: t, mini: m, preempted: true });
                    *on_prb.entry(k).or_insert(0) += 1;
                }
            }
        }
    }

    /// Commits a full placement; the caller guarantees `cands.len() == n`.
    fn commit(
        &mut self,
        packet: &CriticalPacket,
        cands: &[Candidate],
        emergency: bool,
        trace: &mut Vec<Decision>,
    ) -> ServedPacket {
        let mut minis = Vec::with_capacity(cands.len());
        for c in cands {
            self.grid
                .grant_critical(packet.user, c.prb, c.slot, c.mini, c.preempted)
                .expect("candidate cell was checked eligible");
            if c.preempted && !emergency {
                let pair = self.pair(c.prb, c.slot);
                self.pa_used[pair] += 1;
            }
            *self.budget_used.entry((packet.user, c.prb)).or_insert(0) += 1;
            minis.push((c.prb, c.slot, c.mini));
            trace.push(Decision::CriticalPlace {
                seq: packet.seq,
                user: packet.user,
                prb: c.prb,
                slot: c.slot,
                mini: c.mini,
                preempted: c.preempted,
                emergency,
            });
        }
        ServedPacket {
            seq: packet.seq,
            user: packet.user,
            kind: packet.kind,
            size_bytes: packet.size_bytes,
            arrival_period: packet.arrival_period,
            arrival_slot: packet.arrival_slot,
            arrival_mini: packet.arrival_mini,
            deadline_ms: packet.deadline_ms,
            minis,
            emergency,
        }
    }
}

/// Runs one scheduler over one period. GSM-R occupancy must already be
/// applied to the plan; `queues` is consumed: served and dropped packets
/// leave the critical queue, the rest carry into the next period.
pub fn schedule(
    params: &SchedulerParams,
    cfg: GridConfig,
    plan: &BandPlan,
    links: &[LinkState],
    demands: &[PerformanceDemand],
    queues: &mut TrafficQueues,
    period: u64,
) -> Result<SchedulerOutcome, SimError> {
    if params.pa_mini_slots as usize > cfg.mini_slots {
        return Err(SimError::Config(format!(
            "preemption allowance {} exceeds {} mini-slots per slot",
            params.pa_mini_slots, cfg.mini_slots
        )));
    }
    let mut grid = ResourceGrid::new(cfg, plan)?;
    let mut trace = Vec::new();
    let link_map: BTreeMap<UserId, LinkState> = links.iter().map(|l| (l.user, *l)).collect();

    // Performance pass: highest CQI first, ties by ascending user id.
    let mut order: Vec<&LinkState> = links.iter().collect();
    order.sort_by(|a, b| b.cqi.cmp(&a.cqi).then(a.user.cmp(&b.user)));
    let mut available: Vec<usize> = (0..cfg.prbs)
        .filter(|&k| {
            let f = grid.flags(k);
            match params.kind {
                SchedulerKind::Itsp => !f.reserved && !f.occupied,
                SchedulerKind::Bcqi => !f.reserved && !f.colliding,
            }
        })
        .collect();
    for link in order {
        let Some(demand) = demands.iter().find(|d| d.user == link.user) else {
            continue;
        };
        let backlog = queues
            .perf_backlog_bits
            .get(link.user.0 as usize)
            .copied()
            .unwrap_or(0.0);
        if backlog <= 0.0 {
            continue;
        }
        let Some(required) = required_prbs(demand.target_bps, link.efficiency) else {
            continue; // outage
        };
        let take = (required as usize).min(available.len());
        for k in available.drain(..take) {
            for t in 0..cfg.slots {
                grid.grant_performance(link.user, k, t)
                    .expect("available PRB is grantable on a fresh grid");
                trace.push(Decision::PerfGrant { user: link.user, prb: k, slot: t });
            }
        }
    }

    // Critical pass.
    queues.sort_for_period(period, &cfg);
    let mut pass = CriticalPass::new(&mut grid, &link_map, params);
    let mut served = Vec::new();
    let mut drops = Vec::new();
    let mut pending = Vec::new();

    let packets = std::mem::take(&mut queues.critical);
    for packet in packets {
        let Some(window) = packet.window_in_period(period, &cfg) else {
            drops.push((packet.seq, DropReason::Expired));
            trace.push(Decision::Drop { seq: packet.seq, reason: DropReason::Expired });
            queues.expired += 1;
            continue;
        };
        let eff = link_map.get(&packet.user).map_or(0.0, |l| l.efficiency);
        let Some(need) = mini_slots_for_bytes(packet.size_bytes, eff) else {
            drops.push((packet.seq, DropReason::Unservable));
            trace.push(Decision::Drop { seq: packet.seq, reason: DropReason::Unservable });
            continue;
        };
        let mut cands = Vec::with_capacity(need as usize);
        pass.collect_free(packet.user, window, need, &mut cands);
        if (cands.len() as u64) < need && params.kind == SchedulerKind::Itsp {
            pass.collect_preemptable(packet.user, window, need, &mut cands);
        }
        if cands.len() as u64 >= need {
            served.push(pass.commit(&packet, &cands, false, &mut trace));
        } else {
            pending.push(packet);
        }
    }

    // Last-chance pass: packets whose deadline falls inside this period
    // preempt unconditionally (ITSP) or expire (BCQI).
    for packet in pending {
        if !packet.expires_within(period, &cfg) {
            queues.critical.push(packet);
            continue;
        }
        if params.kind == SchedulerKind::Itsp {
            let window = packet
                .window_in_period(period, &cfg)
                .expect("window checked in the normal pass");
            let eff = link_map.get(&packet.user).map_or(0.0, |l| l.efficiency);
            let need = mini_slots_for_bytes(packet.size_bytes, eff)
                .expect("outage packets were dropped in the normal pass");
            let mut cands = Vec::with_capacity(need as usize);
            pass.collect_emergency(packet.user, window, need, &mut cands);
            if cands.len() as u64 >= need {
                served.push(pass.commit(&packet, &cands, true, &mut trace));
                continue;
            }
            drops.push((packet.seq, DropReason::NoCapacity));
            trace.push(Decision::Drop { seq: packet.seq, reason: DropReason::NoCapacity });
        } else {
            drops.push((packet.seq, DropReason::Expired));
            trace.push(Decision::Drop { seq: packet.seq, reason: DropReason::Expired });
            queues.expired += 1;
        }
    }

    let report = grid.report(links);
    Ok(SchedulerOutcome { kind: params.kind, period, grid, report, served, drops, trace })
}

/// Replays the grant entries of a trace onto a fresh grid.
pub fn replay_trace(
    cfg: GridConfig,
    plan: &BandPlan,
    trace: &[Decision],
) -> Result<ResourceGrid, SimError> {
    let mut grid = ResourceGrid::new(cfg, plan)?;
    for d in trace {
        let result = match *d {
            Decision::PerfGrant { user, prb, slot } => grid.grant_performance(user, prb, slot),
            Decision::CriticalPlace { user, prb, slot, mini, preempted, .. } => {
                grid.grant_critical(user, prb, slot, mini, preempted)
            }
            Decision::Drop { .. } => Ok(()),
        };
        result.map_err(|e| SimError::Config(format!("trace replay failed at {d:?}: {e}")))?;
    }
    Ok(grid)
}
