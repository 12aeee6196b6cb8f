//! The K x |T| x |M| allocation grid and its occupancy / reuse metrics.
//!
//! Performance traffic owns whole slots (all M mini-slots of a PRB-slot
//! pair); critical traffic owns individual mini-slots and may take them
//! from a performance owner (preemption), recorded in `preempted_from`.
//! GSM-R-occupied PRBs are materialized as whole-period `GsmR` ownership
//! when the grid is built, so they are never schedulable.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::band_plan::BandPlan;
use crate::channel::LinkState;
use crate::{SimError, UserId};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub prbs: usize,
    pub slots: usize,
    pub mini_slots: usize,
    pub slot_duration_ms: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { prbs: 17, slots: 10, mini_slots: 7, slot_duration_ms: 1.0 }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.prbs == 0 || self.slots == 0 || self.mini_slots == 0 {
            return Err(SimError::Config("grid dimensions must be >= 1".into()));
        }
        if self.slot_duration_ms <= 0.0 {
            return Err(SimError::Config("slot duration must be positive".into()));
        }
        Ok(())
    }

    pub fn slot_duration_s(&self) -> f64 {
        self.slot_duration_ms / 1e3
    }

    /// Scheduling-period duration in seconds.
    pub fn period_duration_s(&self) -> f64 {
        self.slots as f64 * self.slot_duration_s()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellOwner {
    Free,
    GsmR,
    Performance(UserId),
    Critical(UserId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellState {
    pub owner: CellOwner,
    /// Performance user whose mini-slot this critical cell punctured.
    pub preempted_from: Option<UserId>,
}

impl CellState {
    const FREE: CellState = CellState { owner: CellOwner::Free, preempted_from: None };
}

/// Collision state of one PRB, copied from the band plan at period start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrbFlags {
    pub colliding: bool,
    pub occupied: bool,
    pub reserved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GrantError {
    #[error("cell is already owned")]
    Occupied,
    #[error("PRB is occupied by live GSM-R traffic")]
    GsmrOccupied,
    #[error("PRB is reserved for control signalling")]
    ControlReserved,
    #[error("critical traffic must use non-colliding PRBs")]
    CollidingPrb,
    #[error("cell is performance-owned and preemption was not requested")]
    PreemptionNotAllowed,
    #[error("critical cells cannot be preempted")]
    CannotPreemptCritical,
    #[error("index out of bounds")]
    OutOfBounds,
}

/// Per-user traffic accounting over one scheduled period.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AllocationReport {
    /// Bits delivered per performance user: the un-preempted mini-slot
    /// fraction of each owned PRB-slot times its per-slot capacity.
    pub performance_bits: BTreeMap<UserId, f64>,
    /// Bits delivered per critical user, one mini-slot = 1/M of a slot.
    pub critical_bits: BTreeMap<UserId, f64>,
    /// Executed PRB-slot grants (the scheduled `x` count).
    pub perf_prb_slots: u64,
    /// Executed critical mini-slot grants (the scheduled `y` count).
    pub critical_mini_slots: u64,
    /// Mini-slot/slot pairs in which at least one PRB carried pure
    /// performance traffic (the executed per-(m,t) activity count).
    pub perf_mini_slots_active: u64,
    /// PRB-slot pairs owned by performance traffic.
    pub perf_pairs: u64,
    /// Of those, pairs with at least one preempted mini-slot.
    pub preempted_pairs: u64,
    /// `preempted_pairs / perf_pairs`, 0 when nothing is performance-owned.
    pub reuse_rate: f64,
}

impl AllocationReport {
    pub fn total_performance_bits(&self) -> f64 {
        self.performance_bits.values().sum()
    }

    pub fn total_critical_bits(&self) -> f64 {
        self.critical_bits.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    cfg: GridConfig,
    flags: Vec<PrbFlags>,
    cells: Vec<CellState>,
}

impl ResourceGrid {
    /// Builds a fresh grid for one period. GSM-R-occupied PRBs get
    /// whole-period `GsmR` ownership.
    pub fn new(cfg: GridConfig, plan: &BandPlan) -> Result<Self, SimError> {
        cfg.validate()?;
        if plan.num_prbs() != cfg.prbs {
            return Err(SimError::Config(format!(
                "band plan has {} PRBs but the grid is configured for {}",
                plan.num_prbs(),
                cfg.prbs
            )));
        }
        let flags: Vec<PrbFlags> = plan
            .prbs()
            .iter()
            .map(|p| PrbFlags {
                colliding: p.colliding,
                occupied: p.gsmr_occupied,
                reserved: p.control_reserved,
            })
            .collect();
        let mut cells = vec![CellState::FREE; cfg.prbs * cfg.slots * cfg.mini_slots];
        for (k, f) in flags.iter().enumerate() {
            if f.occupied {
                for t in 0..cfg.slots {
                    for m in 0..cfg.mini_slots {
                        cells[Self::idx_of(&cfg, k, t, m)].owner = CellOwner::GsmR;
                    }
                }
            }
        }
        Ok(Self { cfg, flags, cells })
    }

    fn idx_of(cfg: &GridConfig, k: usize, t: usize, m: usize) -> usize {
        (k * cfg.slots + t) * cfg.mini_slots + m
    }

    fn idx(&self, k: usize, t: usize, m: usize) -> usize {
        Self::idx_of(&self.cfg, k, t, m)
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    pub fn flags(&self, k: usize) -> PrbFlags {
        self.flags[k]
    }

    pub fn cell(&self, k: usize, t: usize, m: usize) -> CellState {
        self.cells[self.idx(k, t, m)]
    }

    /// Performance user owning the (k, t) pair, counting preempted cells.
    pub fn perf_owner(&self, k: usize, t: usize) -> Option<UserId> {
        for m in 0..self.cfg.mini_slots {
            match self.cell(k, t, m) {
                CellState { owner: CellOwner::Performance(u), .. } => return Some(u),
                CellState { preempted_from: Some(u), .. } => return Some(u),
                _ => {}
            }
        }
        None
    }

    /// Grants all M mini-slots of (k, t) to a performance user.
    pub fn grant_performance(&mut self, user: UserId, k: usize, t: usize) -> Result<(), GrantError> {
        if k >= self.cfg.prbs || t >= self.cfg.slots {
            return Err(GrantError::OutOfBounds);
        }
        let f = self.flags[k];
        if f.reserved {
            return Err(GrantError::ControlReserved);
        }
        if f.occupied {
            return Err(GrantError::GsmrOccupied);
        }
        for m in 0..self.cfg.mini_slots {
            if self.cell(k, t, m).owner != CellOwner::Free {
                return Err(GrantError::Occupied);
            }
        }
        for m in 0..self.cfg.mini_slots {
            let i = self.idx(k, t, m);
            self.cells[i].owner = CellOwner::Performance(user);
        }
        Ok(())
    }

    /// Grants one mini-slot to a critical user. With `preempt` the cell
    /// may be taken from a performance owner; critical cells and GSM-R
    /// cells are never preemptable, and colliding PRBs are never eligible.
    pub fn grant_critical(
        &mut self,
        user: UserId,
        k: usize,
        t: usize,
        m: usize,
        preempt: bool,
    ) -> Result<(), GrantError> {
        if k >= self.cfg.prbs || t >= self.cfg.slots || m >= self.cfg.mini_slots {
            return Err(GrantError::OutOfBounds);
        }
        let f = self.flags[k];
        if f.reserved {
            return Err(GrantError::ControlReserved);
        }
        if f.colliding {
            return Err(GrantError::CollidingPrb);
        }
        let i = self.idx(k, t, m);
        match self.cells[i].owner {
            CellOwner::Free => {
                self.cells[i].owner = CellOwner::Critical(user);
                Ok(())
            }
            CellOwner::Performance(owner) => {
                if !preempt {
                    return Err(GrantError::PreemptionNotAllowed);
                }
                self.cells[i] = CellState {
                    owner: CellOwner::Critical(user),
                    preempted_from: Some(owner),
                };
                Ok(())
            }
            CellOwner::Critical(_) => Err(GrantError::CannotPreemptCritical),
            CellOwner::GsmR => Err(GrantError::GsmrOccupied),
        }
    }

    /// Traffic accounting for a fully scheduled period. Rates come from
    /// each owner's link snapshot; owners missing from `links` count 0.
    pub fn report(&self, links: &[LinkState]) -> AllocationReport {
        let rate = |u: UserId| -> f64 {
            links
                .iter()
                .find(|l| l.user == u)
                .map_or(0.0, |l| l.effective_rate_bps())
        };
        let slot_s = self.cfg.slot_duration_s();
        let m_count = self.cfg.mini_slots as f64;
        let mut report = AllocationReport::default();

        for k in 0..self.cfg.prbs {
            for t in 0..self.cfg.slots {
                if let Some(owner) = self.perf_owner(k, t) {
                    report.perf_prb_slots += 1;
                    report.perf_pairs += 1;
                    let mut clean = 0u64;
                    let mut punctured = 0u64;
                    for m in 0..self.cfg.mini_slots {
                        match self.cell(k, t, m) {
                            CellState { owner: CellOwner::Performance(_), .. } => clean += 1,
                            CellState { preempted_from: Some(_), .. } => punctured += 1,
                            _ => {}
                        }
                    }
                    if punctured > 0 {
                        report.preempted_pairs += 1;
                    }
                    let bits = (clean as f64 / m_count) * rate(owner) * slot_s;
                    *report.performance_bits.entry(owner).or_insert(0.0) += bits;
                }
                for m in 0..self.cfg.mini_slots {
                    if let CellOwner::Critical(u) = self.cell(k, t, m).owner {
                        report.critical_mini_slots += 1;
                        let bits = rate(u) * slot_s / m_count;
                        *report.critical_bits.entry(u).or_insert(0.0) += bits;
                    }
                }
            }
        }

        for t in 0..self.cfg.slots {
            for m in 0..self.cfg.mini_slots {
                let active = (0..self.cfg.prbs).any(|k| {
                    matches!(self.cell(k, t, m).owner, CellOwner::Performance(_))
                });
                if active {
                    report.perf_mini_slots_active += 1;
                }
            }
        }

        report.reuse_rate = if report.perf_pairs == 0 {
            0.0
        } else {
            report.preempted_pairs as f64 / report.perf_pairs as f64
        };
        report
    }

    /// One CSV row per cell plus the per-PRB flags, self-contained for the
    /// `validate` CLI and golden-file tests.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("k,t,m,owner,user,preempted_from,colliding,occupied,reserved\n");
        for k in 0..self.cfg.prbs {
            let f = self.flags[k];
            for t in 0..self.cfg.slots {
                for m in 0..self.cfg.mini_slots {
                    let cell = self.cell(k, t, m);
                    let (owner, user) = match cell.owner {
                        CellOwner::Free => ("free", String::new()),
                        CellOwner::GsmR => ("gsmr", String::new()),
                        CellOwner::Performance(u) => ("perf", u.0.to_string()),
                        CellOwner::Critical(u) => ("crit", u.0.to_string()),
                    };
                    let pre = cell.preempted_from.map_or(String::new(), |u| u.0.to_string());
                    out.push_str(&format!(
                        "{k},{t},{m},{owner},{user},{pre},{},{},{}\n",
                        f.colliding as u8, f.occupied as u8, f.reserved as u8
                    ));
                }
            }
        }
        out
    }

    /// Parses a [`ResourceGrid::dump_csv`] dump. Dimensions are inferred
    /// from the row indices; `slot_duration_ms` is not part of the dump.
    pub fn parse_csv(text: &str, slot_duration_ms: f64) -> Result<Self, SimError> {
        let mut rows = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "k,t,m,owner,user,preempted_from,colliding,occupied,reserved" => {}
            _ => return Err(SimError::Parse("grid dump: missing or unknown header".into())),
        }
        for (lineno, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(SimError::Parse(format!(
                    "grid dump line {}: expected 9 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let ctx = |what: &str| format!("grid dump line {}: bad {what}", lineno + 1);
            let k: usize = fields[0].parse().map_err(|_| SimError::Parse(ctx("k")))?;
            let t: usize = fields[1].parse().map_err(|_| SimError::Parse(ctx("t")))?;
            let m: usize = fields[2].parse().map_err(|_| SimError::Parse(ctx("m")))?;
            let user = |s: &str| -> Result<UserId, SimError> {
                Ok(UserId(s.parse().map_err(|_| SimError::Parse(ctx("user")))?))
            };
            let owner = match fields[3] {
                "free" => CellOwner::Free,
                "gsmr" => CellOwner::GsmR,
                "perf" => CellOwner::Performance(user(fields[4])?),
                "crit" => CellOwner::Critical(user(fields[4])?),
                other => return Err(SimError::Parse(format!(
                    "grid dump line {}: unknown owner {other:?}",
                    lineno + 1
                ))),
            };
            let preempted_from =
                if fields[5].is_empty() { None } else { Some(user(fields[5])?) };
            let flag = |s: &str| -> Result<bool, SimError> {
                match s {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    _ => Err(SimError::Parse(ctx("flag"))),
                }
            };
            rows.push((
                k,
                t,
                m,
                CellState { owner, preempted_from },
                PrbFlags {
                    colliding: flag(fields[6])?,
                    occupied: flag(fields[7])?,
                    reserved: flag(fields[8])?,
                },
            ));
        }
        if rows.is_empty() {
            return Err(SimError::Parse("grid dump has no cells".into()));
        }
        let prbs = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let slots = rows.iter().map(|r| r.1).max().unwrap() + 1;
        let minis = rows.iter().map(|r| r.2).max().unwrap() + 1;
        let cfg = GridConfig { prbs, slots, mini_slots: minis, slot_duration_ms };
        if rows.len() != prbs * slots * minis {
            return Err(SimError::Parse(format!(
                "grid dump: {} cells, expected {} for {prbs}x{slots}x{minis}",
                rows.len(),
                prbs * slots * minis
            )));
        }
        let mut flags = vec![PrbFlags::default(); prbs];
        let mut cells = vec![CellState::FREE; prbs * slots * minis];
        for (k, t, m, cell, f) in rows {
            flags[k] = f;
            cells[Self::idx_of(&cfg, k, t, m)] = cell;
        }
        Ok(Self { cfg, flags, cells })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band_plan::BandPlan;
    use crate::channel::{CqiTable, LinkState};

    fn plan_with(colliding: &[usize], occupied: &[usize]) -> BandPlan {
        let mut plan = BandPlan::from_colliding_list(4, colliding, &[]).unwrap();
        plan.set_occupied_prbs(&occupied.iter().copied().collect()).unwrap();
        plan
    }

    fn cfg4() -> GridConfig {
        GridConfig { prbs: 4, slots: 2, mini_slots: 7, slot_duration_ms: 1.0 }
    }

    fn link(user: u32, cqi: u8) -> LinkState {
        let table = CqiTable::standard();
        LinkState {
            user: UserId(user),
            distance_m: 500.0,
            path_loss_db: 0.0,
            snr_db: 0.0,
            cqi,
            efficiency: table.efficiency(cqi),
            prb_rate_bps: 700_000.0,
            distance_clamped: false,
        }
    }

    #[test]
    fn perf_grant_on_free_prb() {
        let mut grid = ResourceGrid::new(cfg4(), &plan_with(&[], &[])).unwrap();
        grid.grant_performance(UserId(0), 1, 0).unwrap();
        for m in 0..7 {
            assert_eq!(grid.cell(1, 0, m).owner, CellOwner::Performance(UserId(0)));
        }
    }

    #[test]
    fn perf_grant_rejected_on_gsmr_occupied_prb() {
        let mut grid = ResourceGrid::new(cfg4(), &plan_with(&[2], &[2])).unwrap();
        assert_eq!(grid.grant_performance(UserId(0), 2, 0), Err(GrantError::GsmrOccupied));
        // Colliding but idle is fine for performance traffic.
        let mut grid = ResourceGrid::new(cfg4(), &plan_with(&[2], &[])).unwrap();
        assert!(grid.grant_performance(UserId(0), 2, 0).is_ok());
    }

    #[test]
    fn second_perf_grant_rejected() {
        let mut grid = ResourceGrid::new(cfg4(), &plan_with(&[], &[])).unwrap();
        grid.grant_performance(UserId(0), 1, 0).unwrap();
        assert_eq!(grid.grant_performance(UserId(1), 1, 0), Err(GrantError::Occupied));
        // The other slot is independent.
        assert!(grid.grant_performance(UserId(1), 1, 1).is_ok());
    }

    #[test]
    fn critical_rejected_on_colliding_prb() {
        let mut grid = ResourceGrid::new(cfg4(), &plan_with(&[2], &[])).unwrap();
        assert_eq!(
            grid.grant_critical(UserId(1), 2, 0, 0, true),
            Err(GrantError::CollidingPrb)
        );
    }

    #[test]
    fn preemption_records_displaced_owner() {
        let mut grid = ResourceGrid::new(cfg4(), &plan_with(&[], &[])).unwrap();
        grid.grant_performance(UserId(0), 1, 0).unwrap();
        assert_eq!(
            grid.grant_critical(UserId(1), 1, 0, 3, false),
            Err(GrantError::PreemptionNotAllowed)
        );
        grid.grant_critical(UserId(1), 1, 0, 3, true).unwrap();
        let cell = grid.cell(1, 0, 3);
        assert_eq!(cell.owner, CellOwner::Critical(UserId(1)));
        assert_eq!(cell.preempted_from, Some(UserId(0)));
        assert_eq!(
            grid.grant_critical(UserId(0), 1, 0, 3, true),
            Err(GrantError::CannotPreemptCritical)
        );
    }

    #[test]
    fn reserved_prb_never_schedulable() {
        let plan = BandPlan::from_colliding_list(4, &[], &[3]).unwrap();
        let mut grid = ResourceGrid::new(cfg4(), &plan).unwrap();
        assert_eq!(grid.grant_performance(UserId(0), 3, 0), Err(GrantError::ControlReserved));
        assert_eq!(
            grid.grant_critical(UserId(0), 3, 0, 0, false),
            Err(GrantError::ControlReserved)
        );
    }

    #[test]
    fn empty_grid_reports_zero() {
        let grid = ResourceGrid::new(cfg4(), &plan_with(&[], &[])).unwrap();
        let report = grid.report(&[link(0, 15)]);
        assert_eq!(report.total_performance_bits(), 0.0);
        assert_eq!(report.total_critical_bits(), 0.0);
        assert_eq!(report.reuse_rate, 0.0);
        assert_eq!(report.perf_prb_slots, 0);
    }

    #[test]
    fn preempted_mini_slot_scales_bits() {
        let mut grid = ResourceGrid::new(cfg4(), &plan_with(&[], &[])).unwrap();
        grid.grant_performance(UserId(0), 0, 0).unwrap();
        grid.grant_critical(UserId(1), 0, 0, 6, true).unwrap();
        let links = [link(0, 15), link(1, 15)];
        let report = grid.report(&links);
        let slot_bits = 700_000.0 * 1e-3;
        let perf = report.performance_bits[&UserId(0)];
        assert!((perf - slot_bits * 6.0 / 7.0).abs() < 1e-9, "got {perf}");
        let crit = report.critical_bits[&UserId(1)];
        assert!((crit - slot_bits / 7.0).abs() < 1e-9);
        assert_eq!(report.reuse_rate, 1.0);
        assert_eq!(report.preempted_pairs, 1);
        assert_eq!(report.perf_mini_slots_active, 6);
    }

    #[test]
    fn dump_roundtrip_and_golden() {
        let mut grid = ResourceGrid::new(
            GridConfig { prbs: 2, slots: 1, mini_slots: 2, slot_duration_ms: 1.0 },
            &BandPlan::from_colliding_list(2, &[1], &[]).unwrap(),
        )
        .unwrap();
        grid.grant_performance(UserId(0), 0, 0).unwrap();
        grid.grant_critical(UserId(1), 0, 0, 1, true).unwrap();
        let dump = grid.dump_csv();
        let expected = "\
k,t,m,owner,user,preempted_from,colliding,occupied,reserved
0,0,0,perf,0,,0,0,0
0,0,1,crit,1,0,0,0,0
1,0,0,free,,,1,0,0
1,0,1,free,,,1,0,0
";
        assert_eq!(dump, expected);
        let parsed = ResourceGrid::parse_csv(&dump, 1.0).unwrap();
        assert_eq!(parsed, grid);
    }

    #[test]
    fn gsmr_rows_materialized() {
        let grid = ResourceGrid::new(cfg4(), &plan_with(&[1, 2], &[1])).unwrap();
        for t in 0..2 {
            for m in 0..7 {
                assert_eq!(grid.cell(1, t, m).owner, CellOwner::GsmR);
                assert_eq!(grid.cell(2, t, m).owner, CellOwner::Free);
            }
        }
    }
}
