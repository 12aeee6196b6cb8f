//! Cross-module checks: executed grids, the optimization model and the
//! exhaustive oracle must tell one consistent story.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use frmcs_sim::band_plan::BandPlan;
use frmcs_sim::channel::CqiTable;
use frmcs_sim::grid::{CellOwner, GridConfig, ResourceGrid};
use frmcs_sim::ilp::oracle::solve_exhaustive;
use frmcs_sim::ilp::{build_model, IlpModel, IlpScenario, IlpUser};
use frmcs_sim::channel::LinkState;
use frmcs_sim::UserId;

fn link_with_rate(user: u32, rate_bps: f64) -> LinkState {
    LinkState {
        user: UserId(user),
        distance_m: 100.0,
        path_loss_db: 0.0,
        snr_db: 0.0,
        cqi: 15,
        efficiency: CqiTable::standard().efficiency(15),
        prb_rate_bps: rate_bps,
        distance_clamped: false,
    }
}

fn plan_from_flags(s: &IlpScenario) -> BandPlan {
    let colliding: Vec<usize> = (0..s.prbs).filter(|&k| s.colliding[k]).collect();
    let occupied: BTreeSet<usize> = (0..s.prbs).filter(|&k| s.occupied[k]).collect();
    let mut plan = BandPlan::from_colliding_list(s.prbs, &colliding, &[]).unwrap();
    plan.set_occupied_prbs(&occupied).unwrap();
    plan
}

/// Executes an oracle assignment on a real grid.
fn materialize(model: &IlpModel, s: &IlpScenario, asg: &[u8], plan: &BandPlan) -> ResourceGrid {
    let cfg = GridConfig {
        prbs: s.prbs,
        slots: s.slots,
        mini_slots: s.minis,
        slot_duration_ms: 1.0,
    };
    let mut grid = ResourceGrid::new(cfg, plan).unwrap();
    for (i, u) in s.perf_users.iter().enumerate() {
        for k in 0..s.prbs {
            for t in 0..s.slots {
                if asg[model.index_of(&format!("x_{i}_{k}_{t}")).unwrap()] == 1 {
                    grid.grant_performance(u.id, k, t).unwrap();
                }
            }
        }
    }
    for (i, u) in s.critical_users.iter().enumerate() {
        for k in 0..s.prbs {
            for m in 0..s.minis {
                for t in 0..s.slots {
                    if asg[model.index_of(&format!("y_{i}_{k}_{m}_{t}")).unwrap()] == 1 {
                        let preempt =
                            matches!(grid.cell(k, t, m).owner, CellOwner::Performance(_));
                        grid.grant_critical(u.id, k, t, m, preempt).unwrap();
                    }
                }
            }
        }
    }
    grid
}

fn scenario(colliding: Vec<bool>, occupied: Vec<bool>, crit_demand_minis: f64) -> IlpScenario {
    let prbs = colliding.len();
    let perf_gamma = 900.0;
    let crit_gamma = 700.0;
    IlpScenario {
        name: "cross".into(),
        prbs,
        slots: 1,
        minis: 2,
        colliding,
        occupied,
        perf_users: vec![IlpUser {
            id: UserId(0),
            gamma_bits_per_slot: perf_gamma,
            demand_bits: 1e9,
        }],
        critical_users: vec![IlpUser {
            id: UserId(1),
            gamma_bits_per_slot: crit_gamma,
            demand_bits: crit_gamma * crit_demand_minis,
        }],
        delay_budget_minis: 2,
    }
}

#[test]
fn oracle_solution_report_matches_objective_terms() {
    // Critical demand forcing one mini-slot; one colliding idle PRB.
    let s = scenario(vec![false, true], vec![false, false], 0.9);
    let model = build_model(&s, true).unwrap();
    let sol = solve_exhaustive(&model, 24).unwrap();
    assert!(sol.feasible);

    let plan = plan_from_flags(&s);
    let grid = materialize(&model, &s, &sol.assignment, &plan);

    // The executed grid re-translates to exactly the oracle assignment.
    assert_eq!(model.assignment_from_grid(&grid).unwrap(), sol.assignment);

    let links = [link_with_rate(0, 900_000.0), link_with_rate(1, 700_000.0)];
    let report = grid.report(&links);

    let count = |prefix: &str| -> u64 {
        model
            .vars
            .iter()
            .zip(&sol.assignment)
            .filter(|(name, &v)| name.starts_with(prefix) && v == 1)
            .count() as u64
    };
    assert_eq!(report.perf_prb_slots, count("x_"));
    assert_eq!(report.critical_mini_slots, count("y_"));
    assert_eq!(report.perf_mini_slots_active, count("zs_"));

    // Objective recomputed from the report's executed counts.
    let (nk, nt, nm) = (s.prbs as f64, s.slots as f64, s.minis as f64);
    let t1 = report.perf_prb_slots as f64 / (nt * nk * 1.0);
    let t2 = report.critical_mini_slots as f64 / (nt * nm * nk * 1.0);
    let t3 = report.perf_mini_slots_active as f64 / (nt * nm);
    assert!((sol.objective - (t1 - t2 - t3)).abs() < 1e-9);

    // Delivered bits line up with the demand-row left-hand sides: the
    // model credits a mini-slot with a full slot of bits, the report
    // with 1/M of one.
    let e_lhs: f64 = model
        .rows
        .iter()
        .find(|r| r.name == "ce1_u0")
        .unwrap()
        .eval(&sol.assignment);
    let perf_bits = report.performance_bits.get(&UserId(0)).copied().unwrap_or(0.0);
    assert!((e_lhs - nm * perf_bits).abs() < 1e-6, "{e_lhs} vs {}", nm * perf_bits);
    let f_lhs: f64 = model
        .rows
        .iter()
        .find(|r| r.name == "cf_u0")
        .unwrap()
        .eval(&sol.assignment);
    let crit_bits = report.critical_bits.get(&UserId(1)).copied().unwrap_or(0.0);
    assert!((f_lhs - nm * crit_bits).abs() < 1e-6);
}

#[test]
fn oracle_solutions_respect_collision_flags() {
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    for _ in 0..20 {
        let colliding: Vec<bool> = (0..2).map(|_| rng.random_bool(0.5)).collect();
        let occupied: Vec<bool> =
            colliding.iter().map(|&a| a && rng.random_bool(0.5)).collect();
        // Keep the critical demand satisfiable: zero when no PRB is free
        // of collisions.
        let demand = if colliding.iter().any(|&a| !a) { 0.9 } else { 0.0 };
        let s = scenario(colliding.clone(), occupied.clone(), demand);
        let model = build_model(&s, true).unwrap();
        let sol = solve_exhaustive(&model, 24).unwrap();
        assert!(sol.feasible);
        for k in 0..s.prbs {
            for t in 0..s.slots {
                let x = sol.assignment[model.index_of(&format!("x_0_{k}_{t}")).unwrap()];
                if occupied[k] {
                    assert_eq!(x, 0, "x on occupied PRB {k}");
                }
                for m in 0..s.minis {
                    let y =
                        sol.assignment[model.index_of(&format!("y_0_{k}_{m}_{t}")).unwrap()];
                    if colliding[k] {
                        assert_eq!(y, 0, "y on colliding PRB {k}");
                    }
                }
            }
        }
    }
}
