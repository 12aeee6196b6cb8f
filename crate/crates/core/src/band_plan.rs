//! GSM-R / FRMCS band geometry: which FRMCS PRBs potentially collide with
//! GSM-R carriers (the set `E_c`, flags `a_k`) and which colliding PRBs are
//! occupied by live GSM-R traffic for the current scheduling period
//! (flags `b_k`).
//!
//! All frequency spans are half-open `[low, high)` intervals: touching
//! edges do not collide.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::SimError;

/// GSM-R channels are 200 kHz wide.
pub const GSMR_CARRIER_WIDTH_HZ: f64 = 200_000.0;
/// FRMCS PRBs are 180 kHz wide (12 x 15 kHz subcarriers).
pub const PRB_WIDTH_HZ: f64 = 180_000.0;
/// GSM-R uplink band.
pub const GSMR_UL_BAND_HZ: (f64, f64) = (876.0e6, 880.0e6);
/// Uplink range where FRMCS and GSM-R deployments overlap.
pub const DEFAULT_OVERLAP_UL_HZ: (f64, f64) = (876.0e6, 879.4e6);

/// Low edge of the first schedulable PRB in the default deployment: the
/// 5 MHz FRMCS UL block starting at 874.4 MHz carries 25 PRBs with a
/// 0.25 MHz guard on each side, and 4 control-reserved PRBs sit at each
/// band edge. 874.4 MHz + 0.25 MHz + 4 x 180 kHz = 875.37 MHz.
pub const DEFAULT_FRMCS_LOW_EDGE_HZ: f64 = 875.37e6;
/// Schedulable PRBs in the default deployment (25 total minus 8 reserved).
pub const DEFAULT_NUM_PRBS: usize = 17;

/// A deployed 200 kHz GSM-R carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsmrCarrier {
    pub center_hz: f64,
    #[serde(default)]
    pub active: bool,
}

impl GsmrCarrier {
    pub fn new(center_hz: f64) -> Self {
        Self { center_hz, active: false }
    }

    /// Frequency span `[low, high)`.
    pub fn span(&self) -> (f64, f64) {
        (
            self.center_hz - GSMR_CARRIER_WIDTH_HZ / 2.0,
            self.center_hz + GSMR_CARRIER_WIDTH_HZ / 2.0,
        )
    }
}

/// A 180 kHz FRMCS physical resource block with its collision flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrmcsPrb {
    pub index: usize,
    pub low_edge_hz: f64,
    /// `a_k`: the PRB span intersects a possible GSM-R carrier position.
    pub colliding: bool,
    /// `b_k`: a live GSM-R carrier currently occupies this PRB. Implies
    /// `colliding`.
    pub gsmr_occupied: bool,
    /// Reserved for control signalling; never schedulable.
    pub control_reserved: bool,
}

impl FrmcsPrb {
    /// Frequency span `[low, high)`.
    pub fn span(&self) -> (f64, f64) {
        (self.low_edge_hz, self.low_edge_hz + PRB_WIDTH_HZ)
    }
}

fn spans_intersect(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0.max(b.0) < a.1.min(b.1)
}

/// The carrier layout and derived per-PRB collision state for one
/// simulated direction. Immutable within a scheduling period; occupancy is
/// refreshed once per period through [`BandPlan::apply_gsmr_occupancy`] or
/// [`BandPlan::set_occupied_prbs`].
#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    frmcs_low_edge_hz: f64,
    overlap_hz: (f64, f64),
    prbs: Vec<FrmcsPrb>,
    carriers: Vec<GsmrCarrier>,
}

impl BandPlan {
    /// Builds a plan from an explicit carrier layout and recomputes `E_c`.
    pub fn new(
        frmcs_low_edge_hz: f64,
        num_prbs: usize,
        carriers: Vec<GsmrCarrier>,
        control_reserved: &[usize],
    ) -> Result<Self, SimError> {
        if num_prbs == 0 {
            return Err(SimError::Config("band plan needs at least one PRB".into()));
        }
        for c in &carriers {
            if c.center_hz < GSMR_UL_BAND_HZ.0 || c.center_hz > GSMR_UL_BAND_HZ.1 {
                return Err(SimError::Config(format!(
                    "GSM-R carrier center {:.4} MHz outside the {:.1}-{:.1} MHz UL band",
                    c.center_hz / 1e6,
                    GSMR_UL_BAND_HZ.0 / 1e6,
                    GSMR_UL_BAND_HZ.1 / 1e6
                )));
            }
        }
        for &k in control_reserved {
            if k >= num_prbs {
                return Err(SimError::Config(format!(
                    "control-reserved PRB {k} out of range (num_prbs = {num_prbs})"
                )));
            }
        }
        let prbs = (0..num_prbs)
            .map(|k| FrmcsPrb {
                index: k,
                low_edge_hz: frmcs_low_edge_hz + k as f64 * PRB_WIDTH_HZ,
                colliding: false,
                gsmr_occupied: false,
                control_reserved: control_reserved.contains(&k),
            })
            .collect();
        let mut plan = Self {
            frmcs_low_edge_hz,
            overlap_hz: DEFAULT_OVERLAP_UL_HZ,
            prbs,
            carriers,
        };
        plan.compute_colliding_set()?;
        Ok(plan)
    }

    /// Builds a plan with explicit `a_k` flags and no carrier layout, the
    /// `colliding_prbs` config entry point. Occupancy is then injected per
    /// PRB via [`BandPlan::set_occupied_prbs`]. The PRBs sit at the low
    /// edge of the overlap range so plans of any size stay valid.
    pub fn from_colliding_list(
        num_prbs: usize,
        colliding: &[usize],
        control_reserved: &[usize],
    ) -> Result<Self, SimError> {
        let low_edge = DEFAULT_FRMCS_LOW_EDGE_HZ + 4.0 * PRB_WIDTH_HZ;
        let mut plan = Self::new(low_edge, num_prbs, Vec::new(), control_reserved)?;
        for &k in colliding {
            if k >= num_prbs {
                return Err(SimError::Config(format!(
                    "colliding PRB {k} out of range (num_prbs = {num_prbs})"
                )));
            }
            plan.prbs[k].colliding = true;
        }
        Ok(plan)
    }

    /// Synthesizes carrier positions so that exactly `colliding` PRBs fall
    /// in `E_c`. A 200 kHz carrier centred on a PRB boundary covers that
    /// pair of PRBs; centred on a PRB it pokes 10 kHz into both
    /// neighbours, covering three. Even counts use boundary carriers,
    /// odd counts lead with one centred carrier.
    pub fn with_colliding_count(num_prbs: usize, colliding: usize) -> Result<Self, SimError> {
        let base = Self::new(DEFAULT_FRMCS_LOW_EDGE_HZ, num_prbs, Vec::new(), &[])?;
        let eligible: Vec<usize> = base
            .prbs
            .iter()
            .filter(|p| !p.control_reserved && spans_intersect(p.span(), base.overlap_hz))
            .map(|p| p.index)
            .collect();
        // Carrier placement needs runs of adjacent PRBs.
        let contiguous = eligible.windows(2).all(|w| w[1] == w[0] + 1);
        if !contiguous {
            return Err(SimError::Config(
                "cannot synthesize carriers: eligible PRBs are not contiguous".into(),
            ));
        }
        if colliding == 1 || colliding > eligible.len() {
            return Err(SimError::Config(format!(
                "cannot synthesize {colliding} colliding PRBs ({} eligible; single-PRB \
                 collisions are impossible with 200 kHz carriers on a 180 kHz grid)",
                eligible.len()
            )));
        }
        let mut carriers = Vec::new();
        let mut next = 0usize;
        let mut remaining = colliding;
        if remaining % 2 == 1 {
            // One carrier centred on the middle PRB of the first triple.
            let mid = eligible[next + 1];
            let center = base.prbs[mid].low_edge_hz + PRB_WIDTH_HZ / 2.0;
            carriers.push(GsmrCarrier::new(center));
            next += 3;
            remaining -= 3;
        }
        while remaining > 0 {
            // Carrier centred on the boundary between a PRB pair.
            let hi = eligible[next + 1];
            carriers.push(GsmrCarrier::new(base.prbs[hi].low_edge_hz));
            next += 2;
            remaining -= 2;
        }
        let plan = Self::new(DEFAULT_FRMCS_LOW_EDGE_HZ, num_prbs, carriers, &[])?;
        debug_assert_eq!(plan.colliding_set().len(), colliding);
        Ok(plan)
    }

    /// Default 17-PRB schedulable plan with no carriers deployed.
    pub fn default_17() -> Self {
        Self::new(DEFAULT_FRMCS_LOW_EDGE_HZ, DEFAULT_NUM_PRBS, Vec::new(), &[])
            .expect("default plan is valid")
    }

    pub fn num_prbs(&self) -> usize {
        self.prbs.len()
    }

    pub fn prb(&self, k: usize) -> &FrmcsPrb {
        &self.prbs[k]
    }

    pub fn prbs(&self) -> &[FrmcsPrb] {
        &self.prbs
    }

    pub fn carriers(&self) -> &[GsmrCarrier] {
        &self.carriers
    }

    pub fn overlap_hz(&self) -> (f64, f64) {
        self.overlap_hz
    }

    /// `E_c`, sorted ascending.
    pub fn colliding_set(&self) -> Vec<usize> {
        self.prbs.iter().filter(|p| p.colliding).map(|p| p.index).collect()
    }

    /// PRBs with `b_k = 1`, sorted ascending.
    pub fn occupied_set(&self) -> Vec<usize> {
        self.prbs.iter().filter(|p| p.gsmr_occupied).map(|p| p.index).collect()
    }

    /// Recomputes `a_k` from the carrier layout: PRB `k` enters `E_c` iff
    /// its span intersects any carrier span and intersects the overlap
    /// range. Rejects plans whose FRMCS span misses the overlap range
    /// entirely (degenerate configuration).
    pub fn compute_colliding_set(&mut self) -> Result<BTreeSet<usize>, SimError> {
        let frmcs_span = (
            self.frmcs_low_edge_hz,
            self.frmcs_low_edge_hz + self.prbs.len() as f64 * PRB_WIDTH_HZ,
        );
        if !spans_intersect(frmcs_span, self.overlap_hz) {
            return Err(SimError::Config(format!(
                "FRMCS span [{:.4}, {:.4}) MHz does not intersect the overlap range \
                 [{:.4}, {:.4}] MHz",
                frmcs_span.0 / 1e6,
                frmcs_span.1 / 1e6,
                self.overlap_hz.0 / 1e6,
                self.overlap_hz.1 / 1e6
            )));
        }
        let mut set = BTreeSet::new();
        for prb in &mut self.prbs {
            let span = (prb.low_edge_hz, prb.low_edge_hz + PRB_WIDTH_HZ);
            let in_overlap = spans_intersect(span, self.overlap_hz);
            prb.colliding = in_overlap
                && self.carriers.iter().any(|c| spans_intersect(span, c.span()));
            if prb.colliding {
                set.insert(prb.index);
            }
            prb.gsmr_occupied &= prb.colliding;
        }
        Ok(set)
    }

    /// Marks the given carriers active for the next scheduling period and
    /// tags the PRBs they occupy (`b_k`). Idempotent; PRBs outside `E_c`
    /// are never tagged.
    pub fn apply_gsmr_occupancy(&mut self, active_carriers: &BTreeSet<usize>) -> Result<(), SimError> {
        if let Some(&bad) = active_carriers.iter().find(|&&i| i >= self.carriers.len()) {
            return Err(SimError::Config(format!(
                "active carrier index {bad} out of range ({} carriers)",
                self.carriers.len()
            )));
        }
        for (i, c) in self.carriers.iter_mut().enumerate() {
            c.active = active_carriers.contains(&i);
        }
        for prb in &mut self.prbs {
            let span = (prb.low_edge_hz, prb.low_edge_hz + PRB_WIDTH_HZ);
            prb.gsmr_occupied = prb.colliding
                && self
                    .carriers
                    .iter()
                    .any(|c| c.active && spans_intersect(span, c.span()));
        }
        Ok(())
    }

    /// Occupancy injection for plans without a carrier layout: tags the
    /// given PRBs directly. Rejects PRBs outside `E_c`.
    pub fn set_occupied_prbs(&mut self, occupied: &BTreeSet<usize>) -> Result<(), SimError> {
        for &k in occupied {
            if k >= self.prbs.len() {
                return Err(SimError::Config(format!("occupied PRB {k} out of range")));
            }
            if !self.prbs[k].colliding {
                return Err(SimError::Config(format!(
                    "PRB {k} is not in the colliding set and cannot be GSM-R-occupied"
                )));
            }
        }
        for prb in &mut self.prbs {
            prb.gsmr_occupied = occupied.contains(&prb.index);
        }
        Ok(())
    }
}
