//! Executable forms of the allocation constraints, checked against every
//! scheduler outcome: single ownership per PRB-slot and per mini-slot,
//! GSM-R-occupied and colliding PRB exclusions, the per-(user, PRB) delay
//! budget, packet deadline windows, and the preemption allowance.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::channel::{mini_slots_for_bytes, LinkState};
use crate::grid::{CellOwner, ResourceGrid};
use crate::scheduler::{Decision, SchedulerOutcome, SchedulerParams};
use crate::UserId;

/// A broken constraint, pointing at the offending cell.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{rule} at PRB {prb:?} slot {slot:?} mini {mini:?}: {detail}")]
pub struct Violation {
    pub rule: &'static str,
    pub prb: Option<usize>,
    pub slot: Option<usize>,
    pub mini: Option<usize>,
    pub detail: String,
}

impl Violation {
    fn new(rule: &'static str, detail: String) -> Self {
        Self { rule, prb: None, slot: None, mini: None, detail }
    }

    fn at(mut self, prb: usize, slot: Option<usize>, mini: Option<usize>) -> Self {
        self.prb = Some(prb);
        self.slot = slot;
        self.mini = mini;
        self
    }
}

/// Grid-level checks: ownership exclusivity per PRB-slot and mini-slot,
/// flag consistency, and the colliding / occupied / reserved exclusions.
pub fn validate_grid(grid: &ResourceGrid) -> Result<(), Violation> {
    let cfg = *grid.config();
    for k in 0..cfg.prbs {
        let f = grid.flags(k);
        if f.occupied && !f.colliding {
            return Err(Violation::new(
                "occupied-implies-colliding",
                format!("PRB {k} is GSM-R-occupied but not in the colliding set"),
            )
            .at(k, None, None));
        }
        for t in 0..cfg.slots {
            let mut perf_users: Vec<UserId> = Vec::new();
            for m in 0..cfg.mini_slots {
                let cell = grid.cell(k, t, m);
                if cell.preempted_from.is_some()
                    && !matches!(cell.owner, CellOwner::Critical(_))
                {
                    return Err(Violation::new(
                        "preempted-cell-owner",
                        "preempted_from set on a non-critical cell".into(),
                    )
                    .at(k, Some(t), Some(m)));
                }
                let perf_user = match cell.owner {
                    CellOwner::Performance(u) => Some(u),
                    CellOwner::Critical(_) => cell.preempted_from,
                    _ => None,
                };
                if let Some(u) = perf_user {
                    if !perf_users.contains(&u) {
                        perf_users.push(u);
                    }
                }
                match cell.owner {
                    CellOwner::Performance(u) => {
                        if f.occupied {
                            return Err(Violation::new(
                                "perf-on-occupied",
                                format!("{u} owns a GSM-R-occupied PRB"),
                            )
                            .at(k, Some(t), Some(m)));
                        }
                        if f.reserved {
                            return Err(Violation::new(
                                "perf-on-reserved",
                                format!("{u} owns a control-reserved PRB"),
                            )
                            .at(k, Some(t), Some(m)));
                        }
                    }
                    CellOwner::Critical(u) => {
                        if f.colliding {
                            return Err(Violation::new(
                                "critical-on-colliding",
                                format!("{u} owns a colliding PRB"),
                            )
                            .at(k, Some(t), Some(m)));
                        }
                        if f.reserved {
                            return Err(Violation::new(
                                "critical-on-reserved",
                                format!("{u} owns a control-reserved PRB"),
                            )
                            .at(k, Some(t), Some(m)));
                        }
                    }
                    CellOwner::GsmR => {
                        if !f.occupied {
                            return Err(Violation::new(
                                "gsmr-on-idle",
                                "GSM-R cell on a PRB that is not occupied".into(),
                            )
                            .at(k, Some(t), Some(m)));
                        }
                    }
                    CellOwner::Free => {}
                }
            }
            if perf_users.len() > 1 {
                return Err(Violation::new(
                    "one-perf-user-per-prb-slot",
                    format!("{} performance users share the pair", perf_users.len()),
                )
                .at(k, Some(t), None));
            }
        }
        // Occupied PRBs keep whole-period GSM-R ownership.
        if f.occupied {
            for t in 0..cfg.slots {
                for m in 0..cfg.mini_slots {
                    if grid.cell(k, t, m).owner != CellOwner::GsmR {
                        return Err(Violation::new(
                            "occupied-not-gsmr",
                            "occupied PRB cell not owned by GSM-R".into(),
                        )
                        .at(k, Some(t), Some(m)));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Full outcome check: the grid-level rules plus the deadline windows of
/// every served packet, the per-(user, PRB) delay budget, and the
/// preemption allowance outside emergencies.
pub fn validate_outcome(
    outcome: &SchedulerOutcome,
    params: &SchedulerParams,
    links: &[LinkState],
) -> Result<(), Violation> {
    validate_grid(&outcome.grid)?;
    let cfg = *outcome.grid.config();

    // Deadline rule: served mini-slots lie inside each packet's window.
    for p in &outcome.served {
        let Some((first_slot, first_mini, last_slot)) = crate::traffic::CriticalPacket::new(
            p.seq,
            p.user,
            p.kind,
            p.size_bytes,
            p.arrival_period,
            p.arrival_slot,
            p.arrival_mini,
            p.deadline_ms,
        )
        .ok()
        .and_then(|pkt| pkt.window_in_period(outcome.period, &cfg)) else {
            return Err(Violation::new(
                "deadline-window",
                format!("packet {} served outside any valid window", p.seq),
            ));
        };
        for &(k, t, m) in &p.minis {
            if t < first_slot || t > last_slot || (t == first_slot && m < first_mini) {
                return Err(Violation::new(
                    "deadline-window",
                    format!(
                        "packet {} served at ({k},{t},{m}) outside slots {first_slot}..={last_slot}",
                        p.seq
                    ),
                )
                .at(k, Some(t), Some(m)));
            }
        }
        let eff = links
            .iter()
            .find(|l| l.user == p.user)
            .map_or(0.0, |l| l.efficiency);
        match mini_slots_for_bytes(p.size_bytes, eff) {
            Some(need) if need == p.minis.len() as u64 => {}
            other => {
                return Err(Violation::new(
                    "packet-mini-count",
                    format!(
                        "packet {} got {} mini-slots, demand is {:?}",
                        p.seq,
                        p.minis.len(),
                        other
                    ),
                ));
            }
        }
    }

    // Delay budget: critical mini-slots per (user, PRB) over the period.
    let mut per_user_prb: BTreeMap<(UserId, usize), u64> = BTreeMap::new();
    for k in 0..cfg.prbs {
        for t in 0..cfg.slots {
            for m in 0..cfg.mini_slots {
                if let CellOwner::Critical(u) = outcome.grid.cell(k, t, m).owner {
                    *per_user_prb.entry((u, k)).or_insert(0) += 1;
                }
            }
        }
    }
    for ((u, k), count) in per_user_prb {
        if count > params.delay_budget_minis {
            return Err(Violation::new(
                "delay-budget",
                format!("{u} holds {count} critical mini-slots on PRB {k} (budget {})",
                    params.delay_budget_minis),
            )
            .at(k, None, None));
        }
    }

    // Preemption allowance: non-emergency preempted mini-slots per pair.
    let mut preempted: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for d in &outcome.trace {
        if let Decision::CriticalPlace { prb, slot, preempted: true, emergency: false, .. } = d {
            *preempted.entry((*prb, *slot)).or_insert(0) += 1;
        }
    }
    for ((k, t), count) in preempted {
        if count > params.pa_mini_slots {
            return Err(Violation::new(
                "preemption-allowance",
                format!("{count} non-emergency preemptions (PA {})", params.pa_mini_slots),
            )
            .at(k, Some(t), None));
        }
    }
    Ok(())
}
