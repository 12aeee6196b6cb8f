//! Exact optimization model of the coexistence allocation problem.
//!
//! Binary variables: `x[i,k,t]` (performance user i holds PRB k in slot
//! t), `y[i,k,m,t]` (critical user i holds mini-slot m), `zc[k,m,t]` (the
//! mini-slot carries pure performance traffic), `zs[m,t]` (some PRB
//! carries pure performance traffic in that mini-slot) and, in the
//! preemption variant, the linearization product `f[i,k,m,t] = zc * x`.
//!
//! The objective maximizes the normalized performance PRB count minus the
//! normalized critical mini-slot count minus the normalized count of
//! mini-slot/slot pairs spent on performance traffic.
//!
//! The non-preemption variant adds the orthogonality rows `x + y <= 1`,
//! drops `f`, and states the demand cap directly on `x` (with no shared
//! cells the mini-slot fraction collapses to the slot indicator).

pub mod lp;
pub mod oracle;

use std::collections::HashMap;

use crate::grid::{CellOwner, ResourceGrid};
use crate::{SimError, UserId};

/// One user's data seen by the model: the per-PRB-slot capacity and the
/// demand over the whole period, both in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlpUser {
    pub id: UserId,
    pub gamma_bits_per_slot: f64,
    pub demand_bits: f64,
}

/// Fixed inputs of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct IlpScenario {
    pub name: String,
    pub prbs: usize,
    pub slots: usize,
    pub minis: usize,
    /// `a_k` per PRB.
    pub colliding: Vec<bool>,
    /// `b_k` per PRB; implies `colliding`.
    pub occupied: Vec<bool>,
    pub perf_users: Vec<IlpUser>,
    pub critical_users: Vec<IlpUser>,
    /// Delay budget per (critical user, PRB) in mini-slots.
    pub delay_budget_minis: u64,
}

impl IlpScenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.prbs == 0 || self.slots == 0 || self.minis == 0 {
            return Err(SimError::Config("model dimensions must be >= 1".into()));
        }
        if self.colliding.len() != self.prbs || self.occupied.len() != self.prbs {
            return Err(SimError::Config("flag vectors must have one entry per PRB".into()));
        }
        for k in 0..self.prbs {
            if self.occupied[k] && !self.colliding[k] {
                return Err(SimError::Config(format!(
                    "PRB {k} is occupied but not colliding"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinTerm {
    pub var: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<LinTerm>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    fn le(name: String, terms: Vec<LinTerm>, rhs: f64) -> Self {
        Self { name, terms, sense: Sense::Le, rhs }
    }

    fn ge(name: String, terms: Vec<LinTerm>, rhs: f64) -> Self {
        Self { name, terms, sense: Sense::Ge, rhs }
    }

    pub fn eval(&self, assignment: &[u8]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * assignment[t.var] as f64)
            .sum()
    }

    pub fn satisfied(&self, assignment: &[u8], tol: f64) -> bool {
        let v = self.eval(assignment);
        match self.sense {
            Sense::Le => v <= self.rhs + tol,
            Sense::Ge => v >= self.rhs - tol,
        }
    }
}

/// Variable index bookkeeping for models built from a scenario; parsed
/// models do not carry it.
#[derive(Debug, Clone, PartialEq)]
struct ModelDims {
    scenario: IlpScenario,
    x0: usize,
    y0: usize,
    zc0: usize,
    zs0: usize,
    f0: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct IlpModel {
    pub name: String,
    pub preemption: bool,
    pub vars: Vec<String>,
    /// Dense objective coefficient per variable; the model maximizes.
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    dims: Option<ModelDims>,
    var_index: HashMap<String, usize>,
}

impl IlpModel {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.var_index.get(name).copied()
    }

    pub fn var_count_with_prefix(&self, prefix: &str) -> usize {
        self.vars.iter().filter(|v| v.starts_with(prefix)).count()
    }

    pub fn objective_value(&self, assignment: &[u8]) -> f64 {
        self.objective
            .iter()
            .zip(assignment)
            .map(|(c, &a)| c * a as f64)
            .sum()
    }

    /// Names of rows the assignment breaks, at 1e-9 tolerance.
    pub fn violated_rows(&self, assignment: &[u8]) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| !r.satisfied(assignment, 1e-9))
            .map(|r| r.name.as_str())
            .collect()
    }

    pub(crate) fn from_parts(
        name: String,
        preemption: bool,
        vars: Vec<String>,
        objective: Vec<f64>,
        rows: Vec<Row>,
    ) -> Self {
        let var_index = vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();
        Self { name, preemption, vars, objective, rows, dims: None, var_index }
    }

    fn x(&self, i: usize, k: usize, t: usize) -> usize {
        let d = self.dims.as_ref().expect("scenario-built model");
        d.x0 + (i * d.scenario.prbs + k) * d.scenario.slots + t
    }

    fn y(&self, i: usize, k: usize, m: usize, t: usize) -> usize {
        let d = self.dims.as_ref().expect("scenario-built model");
        let s = &d.scenario;
        d.y0 + ((i * s.prbs + k) * s.minis + m) * s.slots + t
    }

    fn zc(&self, k: usize, m: usize, t: usize) -> usize {
        let d = self.dims.as_ref().expect("scenario-built model");
        d.zc0 + (k * d.scenario.minis + m) * d.scenario.slots + t
    }

    fn zs(&self, m: usize, t: usize) -> usize {
        let d = self.dims.as_ref().expect("scenario-built model");
        d.zs0 + m * d.scenario.slots + t
    }

    fn f(&self, i: usize, k: usize, m: usize, t: usize) -> usize {
        let d = self.dims.as_ref().expect("scenario-built model");
        let s = &d.scenario;
        d.f0.expect("preemption variant") + ((i * s.prbs + k) * s.minis + m) * s.slots + t
    }

    /// Translates an executed grid into a full assignment of this model:
    /// `x` from performance ownership (preempted cells included), `y`
    /// from critical cells, `zc`/`zs`/`f` derived from their definitions.
    pub fn assignment_from_grid(&self, grid: &ResourceGrid) -> Result<Vec<u8>, SimError> {
        let dims = self
            .dims
            .as_ref()
            .ok_or_else(|| SimError::Config("model was not built from a scenario".into()))?;
        let s = &dims.scenario;
        let cfg = grid.config();
        if cfg.prbs != s.prbs || cfg.slots != s.slots || cfg.mini_slots != s.minis {
            return Err(SimError::Config(format!(
                "grid is {}x{}x{}, model expects {}x{}x{}",
                cfg.prbs, cfg.slots, cfg.mini_slots, s.prbs, s.slots, s.minis
            )));
        }
        let perf_idx = |u: UserId| s.perf_users.iter().position(|p| p.id == u);
        let crit_idx = |u: UserId| s.critical_users.iter().position(|p| p.id == u);

        let mut asg = vec![0u8; self.vars.len()];
        for k in 0..s.prbs {
            for t in 0..s.slots {
                if let Some(owner) = grid.perf_owner(k, t) {
                    let i = perf_idx(owner).ok_or_else(|| {
                        SimError::Config(format!("{owner} is not a model performance user"))
                    })?;
                    asg[self.x(i, k, t)] = 1;
                }
                for m in 0..s.minis {
                    match grid.cell(k, t, m).owner {
                        CellOwner::Critical(u) => {
                            let i = crit_idx(u).ok_or_else(|| {
                                SimError::Config(format!("{u} is not a model critical user"))
                            })?;
                            asg[self.y(i, k, m, t)] = 1;
                        }
                        CellOwner::Performance(_) => {
                            asg[self.zc(k, m, t)] = 1;
                        }
                        _ => {}
                    }
                }
            }
        }
        for m in 0..s.minis {
            for t in 0..s.slots {
                let active = (0..s.prbs).any(|k| asg[self.zc(k, m, t)] == 1);
                asg[self.zs(m, t)] = active as u8;
            }
        }
        if self.preemption {
            for (i, _) in s.perf_users.iter().enumerate() {
                for k in 0..s.prbs {
                    for m in 0..s.minis {
                        for t in 0..s.slots {
                            let v = asg[self.zc(k, m, t)] & asg[self.x(i, k, t)];
                            asg[self.f(i, k, m, t)] = v;
                        }
                    }
                }
            }
        }
        Ok(asg)
    }
}

/// Builds the model for one scenario. With `preemption` the demand cap is
/// linearized through `f`; without it the orthogonality rows apply and
/// the cap is stated on `x` directly.
pub fn build_model(scenario: &IlpScenario, preemption: bool) -> Result<IlpModel, SimError> {
    scenario.validate()?;
    let s = scenario;
    let (nk, nt, nm) = (s.prbs, s.slots, s.minis);
    let (np, nc) = (s.perf_users.len(), s.critical_users.len());

    let mut vars: Vec<String> = Vec::new();
    let x0 = vars.len();
    for i in 0..np {
        for k in 0..nk {
            for t in 0..nt {
                vars.push(format!("x_{i}_{k}_{t}"));
            }
        }
    }
    let y0 = vars.len();
    for i in 0..nc {
        for k in 0..nk {
            for m in 0..nm {
                for t in 0..nt {
                    vars.push(format!("y_{i}_{k}_{m}_{t}"));
                }
            }
        }
    }
    let zc0 = vars.len();
    for k in 0..nk {
        for m in 0..nm {
            for t in 0..nt {
                vars.push(format!("zc_{k}_{m}_{t}"));
            }
        }
    }
    let zs0 = vars.len();
    for m in 0..nm {
        for t in 0..nt {
            vars.push(format!("zs_{m}_{t}"));
        }
    }
    let f0 = preemption.then_some(vars.len());
    if preemption {
        for i in 0..np {
            for k in 0..nk {
                for m in 0..nm {
                    for t in 0..nt {
                        vars.push(format!("f_{i}_{k}_{m}_{t}"));
                    }
                }
            }
        }
    }

    let mut model = IlpModel {
        name: s.name.clone(),
        preemption,
        objective: vec![0.0; vars.len()],
        rows: Vec::new(),
        dims: Some(ModelDims { scenario: s.clone(), x0, y0, zc0, zs0, f0 }),
        var_index: vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect(),
        vars,
    };

    // Normalized objective: + performance PRBs - critical mini-slots
    // - mini-slot/slot pairs carrying performance traffic.
    if np > 0 {
        let c = 1.0 / (nt * nk * np) as f64;
        for i in 0..np {
            for k in 0..nk {
                for t in 0..nt {
                    let v = model.x(i, k, t);
                    model.objective[v] = c;
                }
            }
        }
    }
    if nc > 0 {
        let c = -1.0 / (nt * nm * nk * nc) as f64;
        for i in 0..nc {
            for k in 0..nk {
                for m in 0..nm {
                    for t in 0..nt {
                        let v = model.y(i, k, m, t);
                        model.objective[v] = c;
                    }
                }
            }
        }
    }
    let zs_coeff = -1.0 / (nt * nm) as f64;
    for m in 0..nm {
        for t in 0..nt {
            let v = model.zs(m, t);
            model.objective[v] = zs_coeff;
        }
    }

    let one = |v: usize| LinTerm { var: v, coeff: 1.0 };
    let neg = |v: usize| LinTerm { var: v, coeff: -1.0 };
    let mut rows = Vec::new();

    // (a) one performance user per PRB-slot.
    if np > 0 {
        for k in 0..nk {
            for t in 0..nt {
                let terms = (0..np).map(|i| one(model.x(i, k, t))).collect();
                rows.push(Row::le(format!("ca_k{k}_t{t}"), terms, 1.0));
            }
        }
    }
    // (b) one critical user per mini-slot.
    if nc > 0 {
        for k in 0..nk {
            for m in 0..nm {
                for t in 0..nt {
                    let terms = (0..nc).map(|i| one(model.y(i, k, m, t))).collect();
                    rows.push(Row::le(format!("cb_k{k}_m{m}_t{t}"), terms, 1.0));
                }
            }
        }
    }
    // (c) performance traffic only on PRBs not occupied by GSM-R.
    for i in 0..np {
        for k in 0..nk {
            for t in 0..nt {
                rows.push(Row::le(
                    format!("cc_u{i}_k{k}_t{t}"),
                    vec![one(model.x(i, k, t))],
                    1.0 - s.occupied[k] as u8 as f64,
                ));
            }
        }
    }
    // (d) critical traffic only on non-colliding PRBs.
    for i in 0..nc {
        for k in 0..nk {
            for m in 0..nm {
                for t in 0..nt {
                    rows.push(Row::le(
                        format!("cd_u{i}_k{k}_m{m}_t{t}"),
                        vec![one(model.y(i, k, m, t))],
                        1.0 - s.colliding[k] as u8 as f64,
                    ));
                }
            }
        }
    }
    // (e) demand cap for performance users.
    if preemption {
        for (i, u) in s.perf_users.iter().enumerate() {
            let mut terms = Vec::new();
            for k in 0..nk {
                for m in 0..nm {
                    for t in 0..nt {
                        terms.push(LinTerm {
                            var: model.f(i, k, m, t),
                            coeff: u.gamma_bits_per_slot,
                        });
                    }
                }
            }
            rows.push(Row::le(format!("ce1_u{i}"), terms, nm as f64 * u.demand_bits));
        }
        for i in 0..np {
            for k in 0..nk {
                for m in 0..nm {
                    for t in 0..nt {
                        let f = model.f(i, k, m, t);
                        rows.push(Row::le(
                            format!("ce2_u{i}_k{k}_m{m}_t{t}"),
                            vec![one(f), neg(model.zc(k, m, t))],
                            0.0,
                        ));
                        rows.push(Row::le(
                            format!("ce3_u{i}_k{k}_m{m}_t{t}"),
                            vec![one(f), neg(model.x(i, k, t))],
                            0.0,
                        ));
                        rows.push(Row::ge(
                            format!("ce4_u{i}_k{k}_m{m}_t{t}"),
                            vec![one(f), neg(model.zc(k, m, t)), neg(model.x(i, k, t))],
                            -1.0,
                        ));
                    }
                }
            }
        }
    } else {
        // With the orthogonality rows no cell is shared, so the mini-slot
        // fraction equals the slot indicator and the cap is linear in x.
        for (i, u) in s.perf_users.iter().enumerate() {
            let mut terms = Vec::new();
            for k in 0..nk {
                for t in 0..nt {
                    terms.push(LinTerm { var: model.x(i, k, t), coeff: u.gamma_bits_per_slot });
                }
            }
            rows.push(Row::le(format!("ce_u{i}"), terms, u.demand_bits));
        }
    }
    // (f) minimum critical throughput.
    for (i, u) in s.critical_users.iter().enumerate() {
        let mut terms = Vec::new();
        for k in 0..nk {
            for m in 0..nm {
                for t in 0..nt {
                    terms.push(LinTerm { var: model.y(i, k, m, t), coeff: u.gamma_bits_per_slot });
                }
            }
        }
        rows.push(Row::ge(format!("cf_u{i}"), terms, u.demand_bits));
    }
    // (g) delay budget per (critical user, PRB).
    for i in 0..nc {
        for k in 0..nk {
            let mut terms = Vec::new();
            for m in 0..nm {
                for t in 0..nt {
                    terms.push(one(model.y(i, k, m, t)));
                }
            }
            rows.push(Row::le(format!("cg_u{i}_k{k}"), terms, s.delay_budget_minis as f64));
        }
    }
    // zc definition: 1 exactly when some x holds the slot and no y holds
    // the mini-slot.
    for k in 0..nk {
        for m in 0..nm {
            for t in 0..nt {
                let zc = model.zc(k, m, t);
                for i in 0..np {
                    let mut terms = vec![one(zc), neg(model.x(i, k, t))];
                    for ic in 0..nc {
                        terms.push(one(model.y(ic, k, m, t)));
                    }
                    rows.push(Row::ge(format!("z4a_u{i}_k{k}_m{m}_t{t}"), terms, 0.0));
                }
                let mut terms = vec![one(zc)];
                for i in 0..np {
                    terms.push(neg(model.x(i, k, t)));
                }
                rows.push(Row::le(format!("z4b_k{k}_m{m}_t{t}"), terms, 0.0));
                for ic in 0..nc {
                    rows.push(Row::le(
                        format!("z4c_u{ic}_k{k}_m{m}_t{t}"),
                        vec![one(zc), one(model.y(ic, k, m, t))],
                        1.0,
                    ));
                }
            }
        }
    }
    // zs definition: 1 exactly when some PRB has zc set.
    for m in 0..nm {
        for t in 0..nt {
            let zs = model.zs(m, t);
            for k in 0..nk {
                rows.push(Row::ge(
                    format!("z5a_k{k}_m{m}_t{t}"),
                    vec![one(zs), neg(model.zc(k, m, t))],
                    0.0,
                ));
            }
            let mut terms = vec![one(zs)];
            for k in 0..nk {
                terms.push(neg(model.zc(k, m, t)));
            }
            rows.push(Row::le(format!("z5b_m{m}_t{t}"), terms, 0.0));
        }
    }
    // (h) orthogonality between the traffic classes (no-preemption only).
    if !preemption {
        for k in 0..nk {
            for m in 0..nm {
                for t in 0..nt {
                    for i in 0..np {
                        for ic in 0..nc {
                            rows.push(Row::le(
                                format!("ch_u{i}_u{ic}_k{k}_m{m}_t{t}"),
                                vec![one(model.x(i, k, t)), one(model.y(ic, k, m, t))],
                                1.0,
                            ));
                        }
                    }
                }
            }
        }
    }

    model.rows = rows;
    Ok(model)
}

#[cfg(test)]
#[allow(clippy::identity_op)] // spelled-out count formulas
mod tests {
    use super::*;
    use crate::band_plan::BandPlan;
    use crate::grid::GridConfig;

    pub(crate) fn tiny_scenario() -> IlpScenario {
        IlpScenario {
            name: "tiny".into(),
            prbs: 2,
            slots: 1,
            minis: 2,
            colliding: vec![false, false],
            occupied: vec![false, false],
            perf_users: vec![IlpUser {
                id: UserId(0),
                gamma_bits_per_slot: 500.0,
                demand_bits: 1e9,
            }],
            critical_users: vec![IlpUser {
                id: UserId(1),
                gamma_bits_per_slot: 400.0,
                demand_bits: 0.0,
            }],
            delay_budget_minis: 2,
        }
    }

    #[test]
    fn variable_counts_match_formulas() {
        let s = tiny_scenario();
        let with = build_model(&s, true).unwrap();
        assert_eq!(with.var_count_with_prefix("x_"), 1 * 2 * 1);
        assert_eq!(with.var_count_with_prefix("y_"), 1 * 2 * 1 * 2);
        assert_eq!(with.var_count_with_prefix("f_"), 1 * 2 * 1 * 2);
        assert_eq!(with.var_count_with_prefix("zc_"), 2 * 2 * 1);
        assert_eq!(with.var_count_with_prefix("zs_"), 2 * 1);
        let without = build_model(&s, false).unwrap();
        assert_eq!(without.var_count_with_prefix("f_"), 0);
    }

    #[test]
    fn colliding_prb_forces_y_to_zero() {
        let mut s = tiny_scenario();
        s.colliding[0] = true;
        let model = build_model(&s, true).unwrap();
        let row = model
            .rows
            .iter()
            .find(|r| r.name == "cd_u0_k0_m0_t0")
            .unwrap();
        assert_eq!(row.rhs, 0.0);
        assert_eq!(row.sense, Sense::Le);
        // And the non-colliding PRB keeps rhs 1.
        let free = model.rows.iter().find(|r| r.name == "cd_u0_k1_m0_t0").unwrap();
        assert_eq!(free.rhs, 1.0);
    }

    #[test]
    fn no_preemption_adds_orthogonality_rows() {
        let s = tiny_scenario();
        let model = build_model(&s, false).unwrap();
        let ch_rows = model.rows.iter().filter(|r| r.name.starts_with("ch_")).count();
        // One row per (i, i', k, m, t).
        assert_eq!(ch_rows, 1 * 1 * 2 * 2 * 1);
        assert!(build_model(&s, true).unwrap().rows.iter().all(|r| !r.name.starts_with("ch_")));
    }

    #[test]
    fn empty_user_sets_build_trivially() {
        let s = IlpScenario {
            perf_users: vec![],
            critical_users: vec![],
            ..tiny_scenario()
        };
        let model = build_model(&s, true).unwrap();
        let asg = vec![0u8; model.num_vars()];
        assert!(model.violated_rows(&asg).is_empty());
        assert_eq!(model.objective_value(&asg), 0.0);
    }

    #[test]
    fn grid_translation_satisfies_structure() {
        let s = tiny_scenario();
        let model = build_model(&s, true).unwrap();
        let plan = BandPlan::from_colliding_list(2, &[], &[]).unwrap();
        let cfg = GridConfig { prbs: 2, slots: 1, mini_slots: 2, slot_duration_ms: 1.0 };
        let mut grid = ResourceGrid::new(cfg, &plan).unwrap();
        grid.grant_performance(UserId(0), 0, 0).unwrap();
        grid.grant_critical(UserId(1), 0, 0, 1, true).unwrap();
        let asg = model.assignment_from_grid(&grid).unwrap();
        assert_eq!(asg[model.index_of("x_0_0_0").unwrap()], 1);
        assert_eq!(asg[model.index_of("y_0_0_1_0").unwrap()], 1);
        assert_eq!(asg[model.index_of("zc_0_0_0").unwrap()], 1);
        assert_eq!(asg[model.index_of("zc_0_1_0").unwrap()], 0);
        assert_eq!(asg[model.index_of("zs_0_0").unwrap()], 1);
        assert_eq!(asg[model.index_of("f_0_0_0_0").unwrap()], 1);
        assert!(model.violated_rows(&asg).is_empty(), "{:?}", model.violated_rows(&asg));
    }
}
