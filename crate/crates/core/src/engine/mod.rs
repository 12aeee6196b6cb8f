//! Scenario configuration: the structured-text (TOML) file the CLI and
//! the runner consume, with one section per subsystem.
//!
//! Minimal scenario:
//!
//! ```toml
//! id = "demo"
//! [run]
//! periods = 20
//! sweep_colliding = { from = 2, to = 10 }
//! ```
//!
//! Every section has defaults matching the standard setup: 17 PRBs, 10
//! slots of 1 ms with 7 mini-slots, RMa propagation, two trains 3 km
//! apart at 300 km/h, 10 Mbps performance demand and 300 kbps critical
//! demand per train.

pub mod runner;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::band_plan::{BandPlan, GsmrCarrier, DEFAULT_FRMCS_LOW_EDGE_HZ};
use crate::channel::{CqiTable, PathLossModel, RadioParams};
use crate::grid::GridConfig;
use crate::scheduler::SchedulerKind;
use crate::traffic::ArrivalConfig;
use crate::SimError;

pub use runner::{export_scenario_ilp, metrics_csv, run_scenario, run_scenario_seeded, MetricsRow};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FRMCS_SIM_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub slots: usize,
    pub mini_slots: usize,
    pub slot_duration_ms: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { slots: 10, mini_slots: 7, slot_duration_ms: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandPlanSection {
    pub num_prbs: usize,
    pub frmcs_low_edge_hz: f64,
    pub control_reserved_prbs: Vec<usize>,
    /// Explicit colliding-PRB indices; mutually exclusive with `carriers`.
    pub colliding_prbs: Option<Vec<usize>>,
    /// Explicit carrier layout; collisions derive from geometry.
    pub carriers: Option<Vec<GsmrCarrier>>,
}

impl Default for BandPlanSection {
    fn default() -> Self {
        Self {
            num_prbs: 17,
            frmcs_low_edge_hz: DEFAULT_FRMCS_LOW_EDGE_HZ,
            control_reserved_prbs: Vec::new(),
            colliding_prbs: None,
            carriers: None,
        }
    }
}

impl BandPlanSection {
    pub fn build(&self) -> Result<BandPlan, SimError> {
        match (&self.colliding_prbs, &self.carriers) {
            (Some(_), Some(_)) => Err(SimError::Config(
                "band_plan: give either colliding_prbs or carriers, not both".into(),
            )),
            (Some(list), None) => BandPlan::from_colliding_list(
                self.num_prbs,
                list,
                &self.control_reserved_prbs,
            ),
            (None, Some(carriers)) => BandPlan::new(
                self.frmcs_low_edge_hz,
                self.num_prbs,
                carriers.clone(),
                &self.control_reserved_prbs,
            ),
            (None, None) => BandPlan::new(
                self.frmcs_low_edge_hz,
                self.num_prbs,
                Vec::new(),
                &self.control_reserved_prbs,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelSection {
    pub model: PathLossModel,
    #[serde(flatten)]
    pub radio: RadioParams,
    /// Optional CSV override of the SNR -> CQI ladder.
    pub cqi_table: Option<String>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { model: PathLossModel::Rma, radio: RadioParams::default(), cqi_table: None }
    }
}

impl ChannelSection {
    pub fn load_cqi_table(&self) -> Result<CqiTable, SimError> {
        match &self.cqi_table {
            None => Ok(CqiTable::standard()),
            Some(path) => CqiTable::from_csv(&std::fs::read_to_string(path)?),
        }
    }
}

/// How GSM-R occupancy is drawn each period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccupancyMode {
    /// `lambda_gsmr` Poisson activations per period.
    #[default]
    Poisson,
    /// Nothing active.
    None,
    /// Every carrier (or colliding PRB) active.
    All,
    /// Everything but the last carrier (or colliding PRB) active: the
    /// occupied set is a strict subset of the colliding set.
    AllButOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficSection {
    #[serde(flatten)]
    pub arrivals: ArrivalConfig,
    pub occupancy: OccupancyMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Itsp,
    Bcqi,
    #[default]
    Both,
}

impl Algorithm {
    pub fn kinds(&self) -> Vec<SchedulerKind> {
        match self {
            Algorithm::Itsp => vec![SchedulerKind::Itsp],
            Algorithm::Bcqi => vec![SchedulerKind::Bcqi],
            Algorithm::Both => vec![SchedulerKind::Itsp, SchedulerKind::Bcqi],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerSection {
    pub algorithm: Algorithm,
    pub pa_mini_slots: u32,
    /// Experiment-only tie-break toggle; leave at the default otherwise.
    pub preempt_order: crate::scheduler::PreemptOrder,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Both,
            pa_mini_slots: 2,
            preempt_order: crate::scheduler::PreemptOrder::LowestMcs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub users: u32,
    pub user_positions_m: Vec<f64>,
    pub user_speeds_kmh: Vec<f64>,
    pub periods: u64,
    pub perf_target_bps: f64,
    pub critical_target_bps: f64,
    /// When set, the colliding-PRB count sweeps this inclusive range with
    /// synthesized carrier layouts, overriding the band_plan section.
    pub sweep_colliding: Option<SweepRange>,
    /// Trains wrap around a track of twice this length centred on the gNB.
    pub track_half_length_m: f64,
    pub min_train_distance_m: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            users: 2,
            user_positions_m: vec![-1500.0, 1500.0],
            user_speeds_kmh: vec![300.0, 300.0],
            periods: 100,
            perf_target_bps: 10e6,
            critical_target_bps: 300e3,
            sweep_colliding: None,
            track_half_length_m: 3000.0,
            min_train_distance_m: 3000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub band_plan: BandPlanSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub traffic: TrafficSection,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub run: RunSection,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let sc: Scenario =
            toml::from_str(text).map_err(|e| SimError::Config(format!("scenario file: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SimError::Config(format!("cannot read scenario {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// Grid config with the PRB dimension taken from the band plan.
    pub fn grid_config(&self) -> GridConfig {
        GridConfig {
            prbs: self.band_plan.num_prbs,
            slots: self.grid.slots,
            mini_slots: self.grid.mini_slots,
            slot_duration_ms: self.grid.slot_duration_ms,
        }
    }

    /// Delay budget of one packet deadline expressed in mini-slots.
    pub fn delay_budget_minis(&self) -> u64 {
        let slots = self.traffic.arrivals.critical_deadline_ms / self.grid.slot_duration_ms;
        (slots * self.grid.mini_slots as f64).floor() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.id.is_empty() {
            return Err(SimError::Config("scenario id must not be empty".into()));
        }
        if !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(SimError::Config(format!(
                "scenario id {:?} may only contain alphanumerics, '-' and '_'",
                self.id
            )));
        }
        self.grid_config().validate()?;
        self.channel.radio.validate()?;
        self.traffic.arrivals.validate()?;
        let n = self.run.users as usize;
        if self.run.user_positions_m.len() != n || self.run.user_speeds_kmh.len() != n {
            return Err(SimError::Config(format!(
                "run: {} users need {} positions and speeds (got {} and {})",
                n,
                n,
                self.run.user_positions_m.len(),
                self.run.user_speeds_kmh.len()
            )));
        }
        if self.run.periods == 0 {
            return Err(SimError::Config("run: periods must be >= 1".into()));
        }
        let half = self.run.track_half_length_m;
        if half <= 0.0 {
            return Err(SimError::Config("run: track_half_length_m must be positive".into()));
        }
        // Initial inter-train spacing on the circular track.
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (self.run.user_positions_m[i] - self.run.user_positions_m[j]).abs();
                let circ = d.min(2.0 * half - d);
                if circ < self.run.min_train_distance_m {
                    return Err(SimError::Config(format!(
                        "run: trains {i} and {j} start {circ:.0} m apart, minimum is {} m",
                        self.run.min_train_distance_m
                    )));
                }
            }
        }
        if let Some(sweep) = &self.run.sweep_colliding {
            if sweep.from > sweep.to {
                return Err(SimError::Config("run: sweep_colliding.from > to".into()));
            }
            if sweep.from < 2 {
                return Err(SimError::Config(
                    "run: sweep_colliding.from must be >= 2 (a 200 kHz carrier always spans \
                     two 180 kHz PRBs)"
                        .into(),
                ));
            }
        } else {
            self.band_plan.build()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let sc = Scenario::from_toml_str("id = \"demo\"\n").unwrap();
        assert_eq!(sc.run.users, 2);
        assert_eq!(sc.grid_config().prbs, 17);
        assert_eq!(sc.grid_config().mini_slots, 7);
        assert_eq!(sc.delay_budget_minis(), 35);
        assert_eq!(sc.scheduler.algorithm, Algorithm::Both);
        assert_eq!(sc.traffic.occupancy, OccupancyMode::Poisson);
    }

    #[test]
    fn full_scenario_parses() {
        let text = r#"
id = "high_load"

[grid]
slots = 10
mini_slots = 7
slot_duration_ms = 1.0

[band_plan]
num_prbs = 17

[channel]
model = "rma"
tx_power_dbm = 23.0

[traffic]
lambda_perf = 50.0
lambda_critical = 10.0
lambda_gsmr = 2.0
seed = 7
occupancy = "all-but-one"

[scheduler]
algorithm = "both"
pa_mini_slots = 2

[run]
users = 2
user_positions_m = [-1500.0, 1500.0]
user_speeds_kmh = [300.0, 300.0]
periods = 50
sweep_colliding = { from = 2, to = 10 }
"#;
        let sc = Scenario::from_toml_str(text).unwrap();
        assert_eq!(sc.traffic.arrivals.lambda_critical, 10.0);
        assert_eq!(sc.traffic.occupancy, OccupancyMode::AllButOne);
        assert_eq!(sc.run.sweep_colliding.unwrap().to, 10);
        assert_eq!(sc.channel.radio.tx_power_dbm, 23.0);
    }

    #[test]
    fn bad_configs_give_field_diagnostics() {
        let err = Scenario::from_toml_str("id = \"x\"\n[run]\nusers = 3\n").unwrap_err();
        assert!(err.to_string().contains("positions"), "{err}");

        let err = Scenario::from_toml_str("id = \"x\"\n[run]\nperiods = \"ten\"\n").unwrap_err();
        assert!(err.to_string().contains("periods"), "{err}");

        let close = "id = \"x\"\n[run]\nuser_positions_m = [0.0, 100.0]\n";
        let err = Scenario::from_toml_str(close).unwrap_err();
        assert!(err.to_string().contains("apart"), "{err}");
    }

    #[test]
    fn band_plan_section_exclusive_sources() {
        let both = r#"
id = "x"
[band_plan]
colliding_prbs = [3]
carriers = [{ center_hz = 876.2e6 }]
"#;
        assert!(Scenario::from_toml_str(both).is_err());
    }
}
