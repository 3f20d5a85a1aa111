//! The column generation loop.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::init::{greedy_vertex, repair_to_vertex, two_approx};
use crate::master::{barycenter_points, BarycenterPoint, MasterState};
use crate::model::{combination_cost, Instance, SparseMass, Strides};
use crate::oracle::{DirectModel, DIRECT_CAP};
pub use crate::pricing::PairVariant;
use crate::pricing::{choose_partition, PricingState};
use crate::transport::{solve_transportation, TransportationProblem};

/// How the first column is built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartStrategy {
    #[default]
    #[serde(rename = "greedy")]
    Greedy,
    #[serde(rename = "2app")]
    TwoApprox,
}

impl std::str::FromStr for StartStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(StartStrategy::Greedy),
            "2app" | "two_app" => Ok(StartStrategy::TwoApprox),
            other => Err(Error::Parse(format!("unknown start strategy '{other}'"))),
        }
    }
}

/// Default byte budget for the reduced-cost arrays.
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub start: StartStrategy,
    pub pair_variant: PairVariant,
    /// Stop once the pricing objective is at least `-tol`.
    pub tol: f64,
    /// Most columns added after the first.
    pub max_iter: usize,
    /// Rebuild the reduced costs from scratch every this many updates.
    pub recompute_period: usize,
    pub polish: bool,
    pub memory_cap: u64,
    pub exec: Execution,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            start: StartStrategy::Greedy,
            pair_variant: PairVariant::Large,
            tol: 1e-6,
            max_iter: 100_000,
            recompute_period: 500,
            polish: true,
            memory_cap: DEFAULT_MEMORY_CAP,
            exec: Execution::default(),
        }
    }
}

/// Seconds spent per step of the loop.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimings {
    #[serde(rename = "setup-RM")]
    pub setup_rm: f64,
    #[serde(rename = "solve-RM")]
    pub solve_rm: f64,
    #[serde(rename = "update-reduced-costs")]
    pub update_reduced_costs: f64,
    #[serde(rename = "calc-best-costs")]
    pub calc_best_costs: f64,
    #[serde(rename = "solve-pricing")]
    pub solve_pricing: f64,
}

impl StepTimings {
    pub fn total(&self) -> f64 {
        self.setup_rm + self.solve_rm + self.update_reduced_costs + self.calc_best_costs + self.solve_pricing
    }

    /// `(label, fraction of total)` per step.
    pub fn shares(&self) -> [(&'static str, f64); 5] {
        let t = self.total().max(f64::MIN_POSITIVE);
        [
            ("setup-RM", self.setup_rm / t),
            ("solve-RM", self.solve_rm / t),
            ("update-reduced-costs", self.update_reduced_costs / t),
            ("calc-best-costs", self.calc_best_costs / t),
            ("solve-pricing", self.solve_pricing / t),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub rm_obj: f64,
    pub pricing_obj: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub barycenter: Vec<BarycenterPoint>,
    /// `sum_h w_h c_h` of the returned barycenter.
    pub objective: f64,
    /// Last restricted master objective (equals `objective` for direct solves).
    pub rm_objective: f64,
    /// Columns added after the first.
    pub iterations: usize,
    pub converged: bool,
    pub timings: StepTimings,
    /// Cost vector and initial vertex, before the first master solve.
    pub preprocess_seconds: f64,
    /// Estimated peak heap bytes of the solver's own structures.
    pub peak_memory: u64,
    pub trace: Vec<TraceEntry>,
    /// Nonzeros of the recovered convex combination before polishing.
    pub raw_support: usize,
    pub polished: bool,
    /// Barycenter weights by combination index of the input instance.
    pub weights: SparseMass,
}

impl SolveResult {
    fn closed(inst: &Instance, strides: &Strides, w: SparseMass, objective: f64, peak_memory: u64) -> Self {
        SolveResult {
            barycenter: barycenter_points(&w, inst, strides),
            objective,
            rm_objective: objective,
            iterations: 0,
            converged: true,
            timings: StepTimings::default(),
            preprocess_seconds: 0.0,
            peak_memory,
            trace: Vec::new(),
            raw_support: w.len(),
            polished: false,
            weights: w,
        }
    }
}

/// Computes a barycenter by column generation.
pub fn solve(inst: &Instance, cfg: &SolveConfig) -> Result<SolveResult> {
    if cfg.tol.is_nan() || cfg.tol <= 0.0 || cfg.max_iter == 0 || cfg.recompute_period == 0 {
        return Err(Error::Contract("tol, max_iter and recompute_period must be positive".into()));
    }
    let strides = inst.strides()?;
    match inst.n() {
        1 => {
            let w: SparseMass = inst.measure(0).masses().iter().enumerate().map(|(j, &m)| (j as u64, m)).collect();
            Ok(SolveResult::closed(inst, &strides, w, 0.0, 0))
        }
        2 => solve_pair(inst, &strides),
        _ => ColumnGeneration::run(inst, &strides, cfg),
    }
}

/// Two measures: one transportation problem over all pairs.
fn solve_pair(inst: &Instance, strides: &Strides) -> Result<SolveResult> {
    let (a, b) = (inst.measure(0), inst.measure(1));
    let mut costs = Vec::with_capacity(a.len() * b.len());
    for i in 0..a.len() {
        for j in 0..b.len() {
            costs.push(combination_cost(&[i, j], inst));
        }
    }
    let bytes = (costs.len() * 8) as u64;
    let tp = TransportationProblem::new(a.masses().to_vec(), b.masses().to_vec(), costs)?;
    let plan = solve_transportation(&tp)?;
    let mut w: SparseMass = plan.flows.iter().map(|&(i, j, q)| ((i * b.len() + j) as u64, q)).collect();
    w.prune();
    let objective = w.cost(inst, strides);
    Ok(SolveResult::closed(inst, strides, w, objective, bytes))
}

/// Maps combination indices between two orderings of the same measures.
struct Reindex {
    from: Strides,
    to: Strides,
    /// `to` position `k` holds `from` position `perm[k]`.
    perm: Vec<usize>,
}

impl Reindex {
    fn index(&self, h: u64, inverse: bool, a: &mut [usize], b: &mut [usize]) -> u64 {
        let (src, dst) = if inverse { (&self.to, &self.from) } else { (&self.from, &self.to) };
        src.tuple_into(h, a);
        for (k, &p) in self.perm.iter().enumerate() {
            if inverse {
                b[p] = a[k];
            } else {
                b[k] = a[p];
            }
        }
        dst.index_of(b).expect("permuted tuple stays in range")
    }

    fn apply(&self, w: &SparseMass, inverse: bool) -> SparseMass {
        let n = self.perm.len();
        let (mut a, mut b) = (vec![0; n], vec![0; n]);
        w.iter().map(|(h, m)| (self.index(h, inverse, &mut a, &mut b), m)).collect()
    }
}

struct ColumnGeneration;

impl ColumnGeneration {
    fn run(inst: &Instance, strides: &Strides, cfg: &SolveConfig) -> Result<SolveResult> {
        let started = Instant::now();
        let partition = choose_partition(inst, cfg.pair_variant)?;
        let pinst = inst.permuted(&partition.perm);
        let reindex = Reindex { from: strides.clone(), to: pinst.strides()?, perm: partition.perm.clone() };

        // Allocates c and a, failing before allocation when over budget.
        let mut pricing = PricingState::new(&pinst, &partition, cfg.memory_cap, cfg.exec)?;
        let p1 = match cfg.start {
            StartStrategy::Greedy => greedy_vertex(inst)?,
            StartStrategy::TwoApprox => repair_to_vertex(&two_approx(inst)?, inst)?,
        };
        let preprocess_seconds = started.elapsed().as_secs_f64();

        let mut timings = StepTimings::default();
        let t = Instant::now();
        let mut rm = MasterState::new(reindex.apply(&p1, false), &pinst)?;
        timings.setup_rm += t.elapsed().as_secs_f64();

        let mut y_prev = vec![0.0; pricing.master_rows()];
        let mut since_recompute = 0;
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut master_peak = 0;
        let converged = loop {
            let t = Instant::now();
            rm.solve()?;
            timings.solve_rm += t.elapsed().as_secs_f64();
            master_peak = master_peak.max(rm.heap_bytes());

            let t = Instant::now();
            if since_recompute >= cfg.recompute_period {
                pricing.recompute_reduced_costs(&rm.y);
                since_recompute = 0;
            } else {
                pricing.update_reduced_costs(&y_prev, &rm.y);
                since_recompute += 1;
            }
            y_prev.copy_from_slice(&rm.y);
            timings.update_reduced_costs += t.elapsed().as_secs_f64();

            let t = Instant::now();
            pricing.best_costs();
            timings.calc_best_costs += t.elapsed().as_secs_f64();

            let t = Instant::now();
            pricing.sigma = -rm.sigma;
            let (pricing_obj, plan) = pricing.solve_pricing()?;
            timings.solve_pricing += t.elapsed().as_secs_f64();

            trace.push(TraceEntry { iter: iterations, rm_obj: rm.objective, pricing_obj });
            if pricing_obj >= -cfg.tol {
                break true;
            }
            if iterations >= cfg.max_iter {
                break false;
            }
            let t = Instant::now();
            rm.add_column(pricing.expand_column(&plan), &pinst);
            timings.setup_rm += t.elapsed().as_secs_f64();
            iterations += 1;
        };

        let raw = reindex.apply(&rm.recover(), true);
        let raw_support = raw.len();
        let raw_objective = raw.cost(inst, strides);
        let candidates = polish_candidates(&rm, &reindex, &raw);
        let (w, objective, polished) = match cfg.polish.then(|| polish(inst, candidates, raw_objective)) {
            Some(Some((w, obj))) => (w, obj, true),
            _ => (raw, raw_objective, false),
        };
        Ok(SolveResult {
            barycenter: barycenter_points(&w, inst, strides),
            objective,
            rm_objective: rm.objective,
            iterations,
            converged,
            timings,
            preprocess_seconds,
            peak_memory: pricing.heap_bytes() + master_peak,
            trace,
            raw_support,
            polished,
            weights: w,
        })
    }
}

/// Most columns the polish LP may have.
pub const POLISH_CAP: usize = DIRECT_CAP as usize;

/// Union of the supports of all generated columns, in input indexing, or just
/// `supp(raw)` when the union exceeds [`POLISH_CAP`].
fn polish_candidates(rm: &MasterState, reindex: &Reindex, raw: &SparseMass) -> Vec<u64> {
    let union: BTreeSet<u64> = rm.columns().iter().flat_map(|c| c.p.indices()).collect();
    if union.len() > POLISH_CAP {
        return raw.indices().collect();
    }
    let n = reindex.perm.len();
    let (mut a, mut b) = (vec![0; n], vec![0; n]);
    let mapped: BTreeSet<u64> = union.into_iter().map(|h| reindex.index(h, true, &mut a, &mut b)).collect();
    mapped.into_iter().collect()
}

/// Re-solves the full LP over `candidates` for a basic solution. Returns
/// `None` when that does not match or improve the raw objective.
fn polish(inst: &Instance, candidates: Vec<u64>, raw_objective: f64) -> Option<(SparseMass, f64)> {
    let model = DirectModel::restricted(inst, candidates).ok()?;
    let (w, _) = model.solve().ok()?;
    let objective = w.cost(inst, model.strides());
    let feasible = w.is_feasible(inst, model.strides(), crate::model::FEASIBILITY_TOL);
    (feasible && objective <= raw_objective + 1e-9 * (1.0 + raw_objective.abs())).then_some((w, objective))
}
