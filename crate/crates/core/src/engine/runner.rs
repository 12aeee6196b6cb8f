//! Scenario execution: sweeps the colliding-PRB count, regenerates
//! occupancy / traffic / train positions per period, runs the configured
//! schedulers on identical inputs, validates every outcome, and
//! accumulates the per-sweep-point metric rows.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::band_plan::BandPlan;
use crate::channel::{compute_link, CqiTable, LinkState};
use crate::engine::{OccupancyMode, Scenario};
use crate::ilp::{build_model, lp::export_lp, IlpScenario, IlpUser};
use crate::scheduler::{schedule, SchedulerKind, SchedulerParams};
use crate::traffic::{generate_arrivals, PerformanceDemand, PeriodArrivals, TrafficQueues};
use crate::validate::validate_outcome;
use crate::{SimError, UserId};

/// CSV schema version emitted in every row.
pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: String,
    pub colliding_prbs: usize,
    pub scheduler: &'static str,
    pub seed: u64,
    pub periods: u64,
    pub perf_throughput_bps: f64,
    pub critical_throughput_bps: f64,
    pub reuse_rate: f64,
    pub critical_drop_rate: f64,
}

/// Splitmix-style mix of the run seed with the sweep point and period, so
/// streams are independent of sweep order and parallel execution.
fn mix_seed(seed: u64, colliding: u64, period: u64) -> u64 {
    let mut z = seed
        ^ colliding.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ period.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn wrap_position(x: f64, half: f64) -> f64 {
    (x + half).rem_euclid(2.0 * half) - half
}

/// Per-period state shared by every scheduler at one sweep point.
struct PeriodInputs {
    plan: BandPlan,
    links: Vec<LinkState>,
    arrivals: PeriodArrivals,
}

struct PointRunner<'a> {
    sc: &'a Scenario,
    base_plan: BandPlan,
    table: CqiTable,
    seed: u64,
    colliding: usize,
}

impl<'a> PointRunner<'a> {
    fn period_inputs(&self, period: u64) -> Result<PeriodInputs, SimError> {
        let cfg = self.sc.grid_config();
        let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(self.seed, self.colliding as u64, period));
        let mut next_seq = 0u64;
        let arrivals = generate_arrivals(
            &mut rng,
            &self.sc.traffic.arrivals,
            &cfg,
            self.sc.run.users,
            period,
            &mut next_seq,
        );

        let mut plan = self.base_plan.clone();
        let choices = if plan.carriers().is_empty() {
            plan.colliding_set()
        } else {
            (0..plan.carriers().len()).collect()
        };
        let active: BTreeSet<usize> = match self.sc.traffic.occupancy {
            OccupancyMode::None => BTreeSet::new(),
            OccupancyMode::All => choices.iter().copied().collect(),
            OccupancyMode::AllButOne => {
                choices.iter().copied().take(choices.len().saturating_sub(1)).collect()
            }
            OccupancyMode::Poisson => {
                let n = (arrivals.gsmr_activations as usize).min(choices.len());
                rand::seq::index::sample(&mut rng, choices.len(), n)
                    .iter()
                    .map(|i| choices[i])
                    .collect()
            }
        };
        if plan.carriers().is_empty() {
            plan.set_occupied_prbs(&active)?;
        } else {
            plan.apply_gsmr_occupancy(&active)?;
        }

        let elapsed_s = period as f64 * cfg.period_duration_s();
        let mut links = Vec::with_capacity(self.sc.run.users as usize);
        for i in 0..self.sc.run.users as usize {
            let speed_ms = self.sc.run.user_speeds_kmh[i] / 3.6;
            let pos = wrap_position(
                self.sc.run.user_positions_m[i] + speed_ms * elapsed_s,
                self.sc.run.track_half_length_m,
            );
            links.push(compute_link(
                UserId(i as u32),
                self.sc.channel.model,
                &self.sc.channel.radio,
                &self.table,
                pos.abs(),
            )?);
        }
        Ok(PeriodInputs { plan, links, arrivals })
    }

    fn run_kind(&self, kind: SchedulerKind) -> Result<MetricsRow, SimError> {
        let cfg = self.sc.grid_config();
        let params = SchedulerParams {
            kind,
            pa_mini_slots: self.sc.scheduler.pa_mini_slots,
            delay_budget_minis: self.sc.delay_budget_minis(),
            preempt_order: self.sc.scheduler.preempt_order,
        };
        let demands = PerformanceDemand::uniform(
            self.sc.run.users,
            self.sc.run.perf_target_bps,
            self.sc.traffic.arrivals.perf_packet_bytes,
        );
        let mut queues = TrafficQueues::new(self.sc.run.users);
        let mut perf_bits = 0.0;
        let mut crit_bits = 0.0;
        let mut perf_pairs = 0u64;
        let mut preempted_pairs = 0u64;
        let mut served = 0u64;
        let mut dropped = 0u64;

        for period in 0..self.sc.run.periods {
            let inputs = self.period_inputs(period)?;
            queues.push_arrivals(&inputs.arrivals);
            let outcome =
                schedule(&params, cfg, &inputs.plan, &inputs.links, &demands, &mut queues, period)?;
            validate_outcome(&outcome, &params, &inputs.links)?;
            perf_bits += outcome.report.total_performance_bits();
            crit_bits += outcome.report.total_critical_bits();
            perf_pairs += outcome.report.perf_pairs;
            preempted_pairs += outcome.report.preempted_pairs;
            served += outcome.served.len() as u64;
            dropped += outcome.drops.len() as u64;
            for (user, bits) in &outcome.report.performance_bits {
                queues.drain_perf(user.0 as usize, *bits);
            }
        }

        let duration_s = self.sc.run.periods as f64 * cfg.period_duration_s();
        Ok(MetricsRow {
            scenario: self.sc.id.clone(),
            colliding_prbs: self.colliding,
            scheduler: kind.name(),
            seed: self.seed,
            periods: self.sc.run.periods,
            perf_throughput_bps: perf_bits / duration_s,
            critical_throughput_bps: crit_bits / duration_s,
            reuse_rate: if perf_pairs == 0 {
                0.0
            } else {
                preempted_pairs as f64 / perf_pairs as f64
            },
            critical_drop_rate: if served + dropped == 0 {
                0.0
            } else {
                dropped as f64 / (served + dropped) as f64
            },
        })
    }
}

/// Sweep points and their base band plans for one scenario.
fn sweep_plans(sc: &Scenario) -> Result<Vec<(usize, BandPlan)>, SimError> {
    match &sc.run.sweep_colliding {
        Some(range) => (range.from..=range.to)
            .map(|n| Ok((n, BandPlan::with_colliding_count(sc.band_plan.num_prbs, n)?)))
            .collect(),
        None => {
            let plan = sc.band_plan.build()?;
            Ok(vec![(plan.colliding_set().len(), plan)])
        }
    }
}

/// Runs a scenario with the seed from its traffic section.
pub fn run_scenario(sc: &Scenario) -> Result<Vec<MetricsRow>, SimError> {
    run_scenario_seeded(sc, sc.traffic.arrivals.seed)
}

/// Runs a scenario under an explicit seed: every sweep point runs every
/// configured scheduler on identical per-period inputs. Sweep points run
/// in parallel; rows come back in deterministic order.
pub fn run_scenario_seeded(sc: &Scenario, seed: u64) -> Result<Vec<MetricsRow>, SimError> {
    sc.validate()?;
    let table = sc.channel.load_cqi_table()?;
    let points = sweep_plans(sc)?;
    let mut rows: Vec<MetricsRow> = points
        .into_par_iter()
        .map(|(colliding, base_plan)| {
            let runner = PointRunner { sc, base_plan, table: table.clone(), seed, colliding };
            sc.scheduler
                .algorithm
                .kinds()
                .into_iter()
                .map(|kind| runner.run_kind(kind))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<Vec<_>>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| {
        a.scenario
            .cmp(&b.scenario)
            .then(a.colliding_prbs.cmp(&b.colliding_prbs))
            .then(a.scheduler.cmp(b.scheduler))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

/// Renders metric rows as CSV with a fixed, versioned schema.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(
        "schema_version,scenario,colliding_prbs,scheduler,seed,periods,\
         perf_throughput_bps,critical_throughput_bps,reuse_rate,critical_drop_rate\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            METRICS_SCHEMA_VERSION,
            r.scenario,
            r.colliding_prbs,
            r.scheduler,
            r.seed,
            r.periods,
            r.perf_throughput_bps,
            r.critical_throughput_bps,
            r.reuse_rate,
            r.critical_drop_rate,
        ));
    }
    out
}

/// Builds the optimization model of period 0 at every sweep point and
/// renders it as LP text. Returns `(file_name, lp_text)` pairs named
/// `{scenario}_{colliding}_{variant}.lp`.
pub fn export_scenario_ilp(
    sc: &Scenario,
    preemption: bool,
) -> Result<Vec<(String, String)>, SimError> {
    sc.validate()?;
    let table = sc.channel.load_cqi_table()?;
    let cfg = sc.grid_config();
    let variant = if preemption { "preempt" } else { "no-preempt" };
    let mut out = Vec::new();
    for (colliding, base_plan) in sweep_plans(sc)? {
        let runner = PointRunner {
            sc,
            base_plan,
            table: table.clone(),
            seed: sc.traffic.arrivals.seed,
            colliding,
        };
        let inputs = runner.period_inputs(0)?;
        let period_s = cfg.period_duration_s();
        let slot_s = cfg.slot_duration_s();
        let users = |target_bps: f64| -> Vec<IlpUser> {
            inputs
                .links
                .iter()
                .map(|l| IlpUser {
                    id: l.user,
                    gamma_bits_per_slot: l.effective_rate_bps() * slot_s,
                    demand_bits: target_bps * period_s,
                })
                .collect()
        };
        let scenario = IlpScenario {
            name: format!("{}_{}_{}", sc.id, colliding, variant),
            prbs: cfg.prbs,
            slots: cfg.slots,
            minis: cfg.mini_slots,
            colliding: inputs.plan.prbs().iter().map(|p| p.colliding).collect(),
            occupied: inputs.plan.prbs().iter().map(|p| p.gsmr_occupied).collect(),
            perf_users: users(sc.run.perf_target_bps),
            critical_users: users(sc.run.critical_target_bps),
            delay_budget_minis: sc.delay_budget_minis(),
        };
        let model = build_model(&scenario, preemption)?;
        out.push((format!("{}.lp", scenario.name), export_lp(&model)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Algorithm;

    fn scenario(text: &str) -> Scenario {
        Scenario::from_toml_str(text).unwrap()
    }

    const SMALL: &str = r#"
id = "small"
[traffic]
lambda_perf = 20.0
lambda_critical = 4.0
lambda_gsmr = 2.0
seed = 3
[run]
periods = 5
sweep_colliding = { from = 2, to = 4 }
"#;

    #[test]
    fn sweep_emits_rows_per_point_and_scheduler() {
        let rows = run_scenario(&scenario(SMALL)).unwrap();
        assert_eq!(rows.len(), 3 * 2);
        assert!(rows.iter().all(|r| r.periods == 5));
        let collides: Vec<usize> = rows.iter().map(|r| r.colliding_prbs).collect();
        assert_eq!(collides, vec![2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn zero_traffic_zero_throughput() {
        let text = r#"
id = "idle"
[traffic]
lambda_perf = 0.0
lambda_critical = 0.0
lambda_gsmr = 0.0
[run]
periods = 3
"#;
        let rows = run_scenario(&scenario(text)).unwrap();
        assert!(rows.iter().all(|r| r.perf_throughput_bps == 0.0));
        assert!(rows.iter().all(|r| r.critical_throughput_bps == 0.0));
        assert!(rows.iter().all(|r| r.reuse_rate == 0.0));
    }

    #[test]
    fn identical_seeds_identical_csv() {
        let sc = scenario(SMALL);
        let a = metrics_csv(&run_scenario(&sc).unwrap());
        let b = metrics_csv(&run_scenario(&sc).unwrap());
        assert_eq!(a, b);
        let c = metrics_csv(&run_scenario_seeded(&sc, 99).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn bcqi_throughput_non_increasing_with_saturated_occupancy() {
        let text = r#"
id = "sat"
[traffic]
lambda_perf = 50.0
lambda_critical = 0.0
occupancy = "all"
[scheduler]
algorithm = "bcqi"
[run]
periods = 4
sweep_colliding = { from = 2, to = 10 }
"#;
        let rows = run_scenario(&scenario(text)).unwrap();
        assert_eq!(rows.len(), 9);
        for pair in rows.windows(2) {
            assert!(
                pair[1].perf_throughput_bps <= pair[0].perf_throughput_bps + 1e-9,
                "throughput rose from {} to {} at |E_c| {}",
                pair[0].perf_throughput_bps,
                pair[1].perf_throughput_bps,
                pair[1].colliding_prbs
            );
        }
    }

    #[test]
    fn itsp_reuse_zero_without_critical_traffic() {
        let text = r#"
id = "nocrit"
[traffic]
lambda_critical = 0.0
[scheduler]
algorithm = "itsp"
[run]
periods = 4
sweep_colliding = { from = 2, to = 5 }
"#;
        let rows = run_scenario(&scenario(text)).unwrap();
        assert!(rows.iter().all(|r| r.reuse_rate == 0.0));
    }

    #[test]
    fn ilp_export_counts_and_determinism() {
        let mut sc = scenario(SMALL);
        sc.run.sweep_colliding = None;
        sc.band_plan.colliding_prbs = Some(vec![3, 4]);
        let files = export_scenario_ilp(&sc, true).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(files[0].0, "small_2_preempt.lp");
        let model = crate::ilp::lp::parse_lp(&files[0].1).unwrap();
        // x count = |U_p| * K * |T| = 2 * 17 * 10.
        assert_eq!(model.var_count_with_prefix("x_"), 340);
        assert_eq!(model.var_count_with_prefix("y_"), 2 * 17 * 7 * 10);
        let again = export_scenario_ilp(&sc, true).unwrap();
        assert_eq!(files, again);
        let relaxed = export_scenario_ilp(&sc, false).unwrap();
        assert_eq!(relaxed[0].0, "small_2_no-preempt.lp");
        let relaxed_model = crate::ilp::lp::parse_lp(&relaxed[0].1).unwrap();
        assert!(relaxed_model.rows.iter().any(|r| r.name.starts_with("ch_")));
        assert!(model.rows.iter().all(|r| !r.name.starts_with("ch_")));
    }

    #[test]
    fn algorithm_selection() {
        assert_eq!(Algorithm::Both.kinds().len(), 2);
        let mut sc = scenario(SMALL);
        sc.scheduler.algorithm = Algorithm::Itsp;
        let rows = run_scenario(&sc).unwrap();
        assert!(rows.iter().all(|r| r.scheduler == "itsp"));
    }
}
