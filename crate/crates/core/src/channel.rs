//! Link-budget chain: distance -> path loss -> SNR -> CQI/MCS -> per-PRB
//! achievable rate and PRB demand.
//!
//! Path-loss bodies are the standard UMa-LOS and RMa-LOS forms, with the
//! long-range UMa branch shifted so the two branches meet at the
//! breakpoint distance. The SNR numeric chain (EIRP/RSSI/TNF) and the
//! SNR->CQI ladder are model-conventional, not measured: treat absolute
//! figures accordingly.

use serde::{Deserialize, Serialize};

use crate::{SimError, UserId};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;
/// OFDM symbols per second per PRB: 12 subcarriers x 14 symbols / 1 ms.
pub const SYMBOLS_PER_SEC_PER_PRB: f64 = 168_000.0;
/// Subcarriers per PRB.
pub const SUBCARRIERS_PER_PRB: u32 = 12;
/// OFDM symbols per mini-slot.
pub const SYMBOLS_PER_MINI_SLOT: u32 = 2;
/// Distance validity clamp for the path-loss models, metres.
pub const MIN_DISTANCE_M: f64 = 10.0;
pub const MAX_DISTANCE_M: f64 = 10_000.0;

/// Line-of-sight propagation model selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathLossModel {
    /// Urban Macro LOS.
    Uma,
    /// Rural Macro LOS.
    Rma,
}

/// Radio-layer parameters shared by every link computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioParams {
    pub carrier_freq_hz: f64,
    pub gnb_height_m: f64,
    pub ue_height_m: f64,
    pub avg_building_height_m: f64,
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_db: f64,
    pub noise_figure_db: f64,
    pub prb_bandwidth_hz: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 877.7e6,
            gnb_height_m: 35.0,
            ue_height_m: 4.0,
            avg_building_height_m: 5.0,
            tx_power_dbm: 23.0,
            tx_gain_dbi: 0.0,
            rx_gain_db: 3.0,
            noise_figure_db: 5.0,
            prb_bandwidth_hz: 180_000.0,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.carrier_freq_hz <= 0.0 {
            return Err(SimError::Config("carrier frequency must be positive".into()));
        }
        if self.gnb_height_m <= 0.0 || self.ue_height_m <= 0.0 {
            return Err(SimError::Config("antenna heights must be positive".into()));
        }
        if self.gnb_height_m <= self.ue_height_m {
            return Err(SimError::Config(
                "gNB antenna must be higher than the UE antenna".into(),
            ));
        }
        if self.prb_bandwidth_hz <= 0.0 {
            return Err(SimError::Config("PRB bandwidth must be positive".into()));
        }
        Ok(())
    }
}

/// Path-loss value plus a flag set when the requested distance was outside
/// the model validity range and had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    pub db: f64,
    pub clamped: bool,
}

/// Breakpoint distance `4 * h'_gnb * h'_ue * f_c / c`. UMa uses effective
/// antenna heights (h - 1.0 m), RMa the full heights.
pub fn breakpoint_distance(model: PathLossModel, params: &RadioParams) -> Result<f64, SimError> {
    params.validate()?;
    let (h_gnb, h_ue) = match model {
        PathLossModel::Uma => (params.gnb_height_m - 1.0, params.ue_height_m - 1.0),
        PathLossModel::Rma => (params.gnb_height_m, params.ue_height_m),
    };
    if h_gnb <= 0.0 || h_ue <= 0.0 {
        return Err(SimError::Config(format!(
            "effective antenna height is non-positive (gnb {h_gnb} m, ue {h_ue} m)"
        )));
    }
    Ok(4.0 * h_gnb * h_ue * params.carrier_freq_hz / SPEED_OF_LIGHT)
}

fn uma_short(d: f64, fc_ghz: f64) -> f64 {
    22.0 * d.log10() + 28.0 + 20.0 * fc_ghz.log10()
}

fn uma_long_raw(d: f64, fc_ghz: f64, d_bp: f64, dh: f64) -> f64 {
    40.0 * d.log10() + 28.0 + 20.0 * fc_ghz.log10() - 9.0 * (d_bp * d_bp + dh * dh).log10()
}

fn rma_short(d: f64, fc_ghz: f64, h: f64) -> f64 {
    let h172 = h.powf(1.72);
    20.0 * (40.0 * std::f64::consts::PI * d * fc_ghz / 3.0).log10()
        + (0.03 * h172).min(10.0) * d.log10()
        - (0.044 * h172).min(14.77)
        + 0.002 * h.log10() * d
}

/// Piecewise LOS path loss in dB. Below the breakpoint the short-range
/// expression applies; at/above it the long-range one, shifted (UMa) or
/// anchored (RMa) so both branches meet at the breakpoint.
pub fn path_loss(model: PathLossModel, params: &RadioParams, distance_m: f64) -> Result<PathLoss, SimError> {
    let d_bp = breakpoint_distance(model, params)?;
    let clamped = !(MIN_DISTANCE_M..=MAX_DISTANCE_M).contains(&distance_m);
    let d = distance_m.clamp(MIN_DISTANCE_M, MAX_DISTANCE_M);
    let fc_ghz = params.carrier_freq_hz / 1e9;
    let db = match model {
        PathLossModel::Uma => {
            if d < d_bp {
                uma_short(d, fc_ghz)
            } else {
                let dh = params.gnb_height_m - params.ue_height_m;
                let shift = uma_short(d_bp, fc_ghz) - uma_long_raw(d_bp, fc_ghz, d_bp, dh);
                uma_long_raw(d, fc_ghz, d_bp, dh) + shift
            }
        }
        PathLossModel::Rma => {
            let h = params.avg_building_height_m;
            if d < d_bp {
                rma_short(d, fc_ghz, h)
            } else {
                rma_short(d_bp, fc_ghz, h) + 40.0 * (d / d_bp).log10()
            }
        }
    };
    Ok(PathLoss { db, clamped })
}

/// Thermal noise floor in dBm for the given channel width.
pub fn thermal_noise_floor_dbm(channel_width_hz: f64) -> f64 {
    -144.0 + 10.0 * (channel_width_hz / 1e3).log10()
}

/// SNR = RSSI - TNF - NF with RSSI = EIRP - PL + rx gain and
/// EIRP = tx power + tx gain. The channel width is one PRB.
pub fn snr_db(params: &RadioParams, path_loss_db: f64) -> f64 {
    let eirp = params.tx_power_dbm + params.tx_gain_dbi;
    let rssi = eirp - path_loss_db + params.rx_gain_db;
    rssi - thermal_noise_floor_dbm(params.prb_bandwidth_hz) - params.noise_figure_db
}

/// One row of the SNR->CQI ladder: `min_snr_db` is an inclusive lower
/// bound for the CQI equal to the row position + 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqiRow {
    pub min_snr_db: f64,
    pub efficiency: f64,
}

/// 4-bit CQI ladder: inclusive SNR thresholds and MCS spectral
/// efficiencies in bits/symbol. CQI 0 (below the first threshold) is
/// outage.
#[derive(Debug, Clone, PartialEq)]
pub struct CqiTable {
    rows: Vec<CqiRow>,
}

const STANDARD_CQI_ROWS: [(f64, f64); 15] = [
    (-6.7, 0.1523),
    (-4.7, 0.2344),
    (-2.3, 0.3770),
    (0.2, 0.6016),
    (2.4, 0.8770),
    (4.3, 1.1758),
    (5.9, 1.4766),
    (8.1, 1.9141),
    (10.3, 2.4063),
    (11.7, 2.7305),
    (14.1, 3.3223),
    (16.3, 3.9023),
    (18.7, 4.5234),
    (21.0, 5.1152),
    (22.7, 5.5547),
];

impl Default for CqiTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl CqiTable {
    pub fn standard() -> Self {
        Self {
            rows: STANDARD_CQI_ROWS
                .iter()
                .map(|&(min_snr_db, efficiency)| CqiRow { min_snr_db, efficiency })
                .collect(),
        }
    }

    /// Loads an override table from CSV text, one `snr_db,efficiency` row
    /// per CQI starting at 1. `#`-prefixed lines are comments.
    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64, SimError> {
                s.ok_or_else(|| SimError::Parse(format!("CQI table line {}: missing field", lineno + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| SimError::Parse(format!("CQI table line {}: {e}", lineno + 1)))
            };
            let min_snr_db = parse(parts.next())?;
            let efficiency = parse(parts.next())?;
            rows.push(CqiRow { min_snr_db, efficiency });
        }
        if rows.is_empty() {
            return Err(SimError::Parse("CQI table has no rows".into()));
        }
        if !rows.windows(2).all(|w| w[0].min_snr_db < w[1].min_snr_db) {
            return Err(SimError::Parse("CQI thresholds must be strictly increasing".into()));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[CqiRow] {
        &self.rows
    }

    /// Monotone step lookup; thresholds are inclusive lower bounds.
    pub fn cqi_for_snr(&self, snr_db: f64) -> u8 {
        let mut cqi = 0u8;
        for (i, row) in self.rows.iter().enumerate() {
            if snr_db >= row.min_snr_db {
                cqi = (i + 1) as u8;
            }
        }
        cqi
    }

    /// MCS spectral efficiency in bits/symbol; CQI 0 is outage (0.0).
    pub fn efficiency(&self, cqi: u8) -> f64 {
        if cqi == 0 {
            0.0
        } else {
            self.rows.get(cqi as usize - 1).map_or(0.0, |r| r.efficiency)
        }
    }
}

/// Maximum achievable per-PRB rate in bits/s: `B_k * log2(1 + snr)`.
pub fn prb_rate_bps(params: &RadioParams, snr_db: f64) -> f64 {
    let linear = 10f64.powf(snr_db / 10.0);
    params.prb_bandwidth_hz * (1.0 + linear).log2()
}

/// PRBs needed to sustain `target_bps` at the given MCS efficiency:
/// `ceil(target / (168000 * eff))`. `None` means unservable (outage).
pub fn required_prbs(target_bps: f64, efficiency: f64) -> Option<u64> {
    if target_bps <= 0.0 {
        return Some(0);
    }
    if efficiency <= 0.0 {
        return None;
    }
    Some((target_bps / (SYMBOLS_PER_SEC_PER_PRB * efficiency)).ceil() as u64)
}

/// Mini-slots needed to carry `size_bytes` at the given MCS efficiency:
/// `ceil(bytes*8 / (2 symbols * 12 subcarriers * eff))`. `None` = outage.
pub fn mini_slots_for_bytes(size_bytes: u32, efficiency: f64) -> Option<u64> {
    if efficiency <= 0.0 {
        return None;
    }
    let bits_per_mini = (SYMBOLS_PER_MINI_SLOT * SUBCARRIERS_PER_PRB) as f64 * efficiency;
    Some(((size_bytes as f64 * 8.0) / bits_per_mini).ceil() as u64)
}

/// Snapshot of one user's link for a scheduling period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub user: UserId,
    pub distance_m: f64,
    pub path_loss_db: f64,
    pub snr_db: f64,
    pub cqi: u8,
    /// MCS efficiency, bits/symbol (0.0 in outage).
    pub efficiency: f64,
    /// Shannon-bound per-PRB rate, bits/s.
    pub prb_rate_bps: f64,
    pub distance_clamped: bool,
}

impl LinkState {
    /// Rate the scheduler accounts with: 0 in outage (CQI 0).
    pub fn effective_rate_bps(&self) -> f64 {
        if self.cqi == 0 {
            0.0
        } else {
            self.prb_rate_bps
        }
    }
}

/// Full chain: distance -> PL -> SNR -> CQI -> efficiency and rate.
pub fn compute_link(
    user: UserId,
    model: PathLossModel,
    params: &RadioParams,
    table: &CqiTable,
    distance_m: f64,
) -> Result<LinkState, SimError> {
    let pl = path_loss(model, params, distance_m)?;
    let snr = snr_db(params, pl.db);
    let cqi = table.cqi_for_snr(snr);
    Ok(LinkState {
        user,
        distance_m,
        path_loss_db: pl.db,
        snr_db: snr,
        cqi,
        efficiency: table.efficiency(cqi),
        prb_rate_bps: prb_rate_bps(params, snr),
        distance_clamped: pl.clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn uma_short_range_value() {
        // 22*log10(100) + 28 + 20*log10(0.8777) = 70.867 dB.
        let params = RadioParams::default();
        let pl = path_loss(PathLossModel::Uma, &params, 100.0).unwrap();
        assert!(!pl.clamped);
        assert!((pl.db - 70.867).abs() < 1e-3, "got {}", pl.db);
    }

    #[test]
    fn breakpoint_value_and_linearity() {
        let params = RadioParams::default();
        let d_bp = breakpoint_distance(PathLossModel::Uma, &params).unwrap();
        // 4 * 34 * 3 * 877.7e6 / 3e8
        assert!((d_bp - 1193.672).abs() < 1e-2, "got {d_bp}");

        let doubled = RadioParams { carrier_freq_hz: 2.0 * 877.7e6, ..params };
        let d2 = breakpoint_distance(PathLossModel::Uma, &doubled).unwrap();
        assert!((d2 - 2.0 * d_bp).abs() < 1e-9);
    }

    #[test]
    fn breakpoint_rejects_zero_effective_height() {
        let params = RadioParams { ue_height_m: 1.0, ..RadioParams::default() };
        assert!(breakpoint_distance(PathLossModel::Uma, &params).is_err());
        // RMa uses full heights, so 1.0 m is still valid there.
        assert!(breakpoint_distance(PathLossModel::Rma, &params).is_ok());
    }

    #[test]
    fn continuity_at_breakpoint() {
        for model in [PathLossModel::Uma, PathLossModel::Rma] {
            let params = RadioParams::default();
            let d_bp = breakpoint_distance(model, &params).unwrap();
            let below = path_loss(model, &params, d_bp * (1.0 - 1e-12)).unwrap().db;
            let at = path_loss(model, &params, d_bp).unwrap().db;
            assert!((below - at).abs() < 1e-9, "{model:?}: {below} vs {at}");
        }
    }

    #[test]
    fn rma_monotone_in_distance() {
        let params = RadioParams::default();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let d1 = rng.random_range(MIN_DISTANCE_M..MAX_DISTANCE_M);
            let d2 = rng.random_range(d1..=MAX_DISTANCE_M);
            if d2 > d1 {
                let p1 = path_loss(PathLossModel::Rma, &params, d1).unwrap().db;
                let p2 = path_loss(PathLossModel::Rma, &params, d2).unwrap().db;
                assert!(p2 > p1, "PL({d2}) = {p2} <= PL({d1}) = {p1}");
            }
        }
    }

    #[test]
    fn out_of_range_distance_clamps_with_flag() {
        let params = RadioParams::default();
        let low = path_loss(PathLossModel::Uma, &params, 1.0).unwrap();
        assert!(low.clamped);
        assert_eq!(low.db, path_loss(PathLossModel::Uma, &params, 10.0).unwrap().db);
        let high = path_loss(PathLossModel::Uma, &params, 50_000.0).unwrap();
        assert!(high.clamped);
    }

    #[test]
    fn thermal_noise_floor_180khz() {
        let tnf = thermal_noise_floor_dbm(180e3);
        assert!((tnf - (-121.45)).abs() < 0.01, "got {tnf}");
    }

    #[test]
    fn snr_chain_value() {
        // EIRP 23 dBm, PL 70.867 dB, rx gain 3 dB, NF 5 dB.
        let params = RadioParams::default();
        let snr = snr_db(&params, 70.867);
        assert!((snr - 71.58).abs() < 0.05, "got {snr}");
    }

    #[test]
    fn snr_linear_in_path_loss() {
        let params = RadioParams::default();
        let s1 = snr_db(&params, 70.0);
        let s2 = snr_db(&params, 80.0);
        assert!((s1 - s2 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn cqi_lookup_bounds() {
        let table = CqiTable::standard();
        assert_eq!(table.cqi_for_snr(-10.0), 0);
        assert_eq!(table.cqi_for_snr(25.0), 15);
        // Thresholds are inclusive lower bounds.
        assert_eq!(table.cqi_for_snr(-6.7), 1);
        assert_eq!(table.cqi_for_snr(22.7), 15);
        assert_eq!(table.cqi_for_snr(8.1), 8);
    }

    #[test]
    fn cqi_monotone_in_snr() {
        let table = CqiTable::standard();
        let mut prev = 0;
        let mut snr = -20.0;
        while snr < 30.0 {
            let cqi = table.cqi_for_snr(snr);
            assert!(cqi >= prev);
            prev = cqi;
            snr += 0.05;
        }
    }

    #[test]
    fn cqi_table_csv_roundtrip() {
        let mut csv = String::from("# snr_db,efficiency\n");
        for row in CqiTable::standard().rows() {
            csv.push_str(&format!("{},{}\n", row.min_snr_db, row.efficiency));
        }
        let parsed = CqiTable::from_csv(&csv).unwrap();
        assert_eq!(parsed, CqiTable::standard());
        assert!(CqiTable::from_csv("1.0,0.5\n0.5,0.7\n").is_err());
    }

    #[test]
    fn prb_rate_values() {
        let params = RadioParams::default();
        // 0 dB SNR => log2(2) = 1 => exactly B_k.
        assert_eq!(prb_rate_bps(&params, 0.0), 180_000.0);
        // 15 dB => 180e3 * log2(1 + 31.623) ~ 905.0 kbps.
        let r = prb_rate_bps(&params, 15.0);
        assert!((r - 905_000.0).abs() < 500.0, "got {r}");
        // Rate vanishes as SNR -> -inf.
        assert!(prb_rate_bps(&params, -200.0) < 1e-12);
    }

    #[test]
    fn prb_rate_increasing_and_linear_in_bandwidth() {
        let params = RadioParams::default();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..100 {
            let s1 = rng.random_range(-20.0..40.0);
            let s2 = rng.random_range(s1..41.0);
            if s2 > s1 {
                assert!(prb_rate_bps(&params, s2) > prb_rate_bps(&params, s1));
            }
            let wide = RadioParams { prb_bandwidth_hz: 360e3, ..params };
            let ratio = prb_rate_bps(&wide, s1) / prb_rate_bps(&params, s1);
            assert!((ratio - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn required_prb_counts() {
        assert_eq!(required_prbs(10e6, 5.5547), Some(11));
        assert_eq!(required_prbs(0.0, 5.5547), Some(0));
        assert_eq!(required_prbs(168_000.0 * 5.5547, 5.5547), Some(1));
        assert_eq!(required_prbs(10e6, 0.0), None);
    }

    #[test]
    fn mini_slot_demand() {
        // 100 bytes at CQI 15: 800 / (24 * 5.5547) = 6.0006 -> 7.
        assert_eq!(mini_slots_for_bytes(100, 5.5547), Some(7));
        assert_eq!(mini_slots_for_bytes(100, 0.0), None);
    }

    #[test]
    fn mcs_rate_below_shannon_at_threshold() {
        // At each row's threshold SNR the MCS rate may exceed the Shannon
        // bound by at most the 5% table-granularity slack.
        let params = RadioParams::default();
        for row in CqiTable::standard().rows() {
            let mcs = SYMBOLS_PER_SEC_PER_PRB * row.efficiency;
            let shannon = prb_rate_bps(&params, row.min_snr_db);
            assert!(
                mcs <= shannon * 1.05,
                "eff {} at {} dB: {mcs} > {shannon} * 1.05",
                row.efficiency,
                row.min_snr_db
            );
        }
    }

    #[test]
    fn outage_link_has_zero_effective_rate() {
        let params = RadioParams::default();
        let table = CqiTable::standard();
        let link = compute_link(crate::UserId(0), PathLossModel::Uma, &params, &table, 10_000.0)
            .unwrap();
        if link.cqi == 0 {
            assert_eq!(link.effective_rate_bps(), 0.0);
        }
        // A mid-cell link is healthy.
        let good = compute_link(crate::UserId(0), PathLossModel::Rma, &params, &table, 1000.0)
            .unwrap();
        assert!(good.cqi > 0);
        assert_eq!(good.effective_rate_bps(), good.prb_rate_bps);
    }
}
