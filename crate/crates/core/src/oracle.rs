//! Direct solution of the full barycenter LP, one column per combination.
//!
//! Only usable for small `N`; it exists to check column generation.

use std::time::Instant;

use crate::driver::{SolveResult, StepTimings};
use crate::error::{Error, Result};
use crate::master::barycenter_points;
use crate::model::{combination_cost, CostEvaluator, Instance, SparseMass, Strides};
use crate::simplex::{self, LinearProgram, LpStatus, SparseLP};

/// Largest `N` [`solve_direct`] accepts.
pub const DIRECT_CAP: u64 = 200_000;

/// The barycenter LP with every column stored explicitly.
#[derive(Clone, Debug)]
pub struct DirectModel {
    strides: Strides,
    lp: SparseLP,
    /// Combination behind each LP column.
    columns: Vec<u64>,
    /// Row of the full-rank system for each kept row.
    lp_row: Vec<Option<usize>>,
    kept_rhs: Vec<f64>,
}

/// The model without its redundant rows.
struct FullRank<'a>(&'a DirectModel);

impl LinearProgram for FullRank<'_> {
    fn num_rows(&self) -> usize {
        self.0.kept_rhs.len()
    }
    fn num_cols(&self) -> usize {
        self.0.lp.num_cols()
    }
    fn rhs(&self) -> &[f64] {
        &self.0.kept_rhs
    }
    fn cost(&self, j: usize) -> f64 {
        self.0.lp.cost(j)
    }
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        out.extend(self.0.lp.entries(j).filter_map(|(r, v)| self.0.lp_row[r].map(|q| (q, v))));
    }
    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        self.0.lp.entries(j).filter_map(|(r, v)| self.0.lp_row[r].map(|q| y[q] * v)).sum()
    }
}

impl DirectModel {
    /// All `N` columns; refuses when `N > cap`.
    pub fn build(inst: &Instance, cap: u64) -> Result<Self> {
        let strides = inst.strides()?;
        let total = strides.total();
        if total > cap {
            return Err(Error::Capacity {
                what: format!("direct LP with N = {total} columns"),
                needed: total,
                limit: cap,
            });
        }
        let eval = CostEvaluator::new(inst, &strides);
        let mut costs = vec![0.0; total as usize];
        eval.fill(0, &mut costs);
        Ok(Self::from_columns(inst, strides, (0..total).collect(), |k, _| costs[k]))
    }

    /// Only the listed combinations, costs evaluated directly.
    pub fn restricted(inst: &Instance, columns: Vec<u64>) -> Result<Self> {
        let strides = inst.strides()?;
        if let Some(&h) = columns.iter().find(|&&h| h >= strides.total()) {
            return Err(Error::IndexOutOfRange { index: h, limit: strides.total() });
        }
        let mut idx = vec![0; strides.n()];
        let st = strides.clone();
        Ok(Self::from_columns(inst, strides, columns, |_, h| {
            st.tuple_into(h, &mut idx);
            combination_cost(&idx, inst)
        }))
    }

    fn from_columns(
        inst: &Instance,
        strides: Strides,
        columns: Vec<u64>,
        mut cost: impl FnMut(usize, u64) -> f64,
    ) -> Self {
        let rhs: Vec<f64> = inst.measures().iter().flat_map(|m| m.masses().iter().copied()).collect();
        let n = strides.n();
        let mut lp = SparseLP::with_capacity(rhs, columns.len(), columns.len() * n);
        let mut rows = vec![0; n];
        for (k, &h) in columns.iter().enumerate() {
            strides.column_support_into(h, &mut rows);
            lp.push_column(cost(k, h), rows.iter().map(|&r| (r, 1.0)));
        }
        // Every measure's rows sum to 1, so the simplex sees all rows but the
        // last one of each measure after the first.
        let offsets = strides.row_offsets();
        let mut lp_row = vec![None; strides.num_rows()];
        let mut kept_rhs = Vec::with_capacity(strides.num_rows());
        for i in 0..n {
            let end = if i == 0 { offsets[1] } else { offsets[i + 1] - 1 };
            for (j, r) in (offsets[i]..end).enumerate() {
                lp_row[r] = Some(kept_rhs.len());
                kept_rhs.push(inst.mass(i, j));
            }
        }
        DirectModel { strides, lp, columns, lp_row, kept_rhs }
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn nonzeros(&self) -> usize {
        self.lp.nonzeros()
    }

    pub fn heap_bytes(&self) -> usize {
        self.lp.heap_bytes()
            + self.columns.capacity() * std::mem::size_of::<u64>()
            + self.lp_row.capacity() * std::mem::size_of::<Option<usize>>()
            + self.kept_rhs.capacity() * std::mem::size_of::<f64>()
    }

    pub fn strides(&self) -> &Strides {
        &self.strides
    }

    /// Optimal basic solution and its objective.
    pub fn solve(&self) -> Result<(SparseMass, f64)> {
        let sol = simplex::solve(&FullRank(self), None)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::LpStatus(sol.status));
        }
        let mut w: SparseMass = sol.support().map(|(k, v)| (self.columns[k], v)).collect();
        w.prune();
        Ok((w, sol.objective))
    }
}

/// Solves the barycenter LP directly, refusing when `N` exceeds [`DIRECT_CAP`].
pub fn solve_direct(inst: &Instance) -> Result<SolveResult> {
    solve_direct_with_cap(inst, DIRECT_CAP)
}

pub fn solve_direct_with_cap(inst: &Instance, cap: u64) -> Result<SolveResult> {
    let start = Instant::now();
    let model = DirectModel::build(inst, cap)?;
    let peak = model.heap_bytes() as u64;
    let (w, objective) = model.solve()?;
    let timings = StepTimings { solve_rm: start.elapsed().as_secs_f64(), ..Default::default() };
    Ok(SolveResult {
        barycenter: barycenter_points(&w, inst, model.strides()),
        objective,
        rm_objective: objective,
        iterations: 0,
        converged: true,
        timings,
        preprocess_seconds: 0.0,
        peak_memory: peak,
        trace: Vec::new(),
        raw_support: w.len(),
        polished: false,
        weights: w,
    })
}
