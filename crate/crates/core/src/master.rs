//! The restricted master problem: convex combinations of generated vertices
//! that satisfy the master measures' marginals.
//!
//! Rows are the points of the master measures (positions `2..n` of the
//! permuted instance) followed by the convexity row. Column `j` is
//! `(A_m p_j, 1)` with cost `c^T p_j`; `A_m p_j` is accumulated from the
//! nonzeros of `p_j` through [`Strides::column_support_into`].
//!
//! Each master measure's rows add up to the convexity row, so the LP handed to
//! the simplex omits the last point row of every master measure. The omitted
//! rows get dual 0.

use crate::error::{Error, Result};
use crate::model::{combination_cost, Instance, SparseMass, Strides, FEASIBILITY_TOL, MASS_ZERO_TOL};
use crate::simplex::{self, Basis, LinearProgram, LpStatus};

/// First position of a master measure in the permuted instance.
pub const FIRST_MASTER: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct DWColumn {
    pub p: SparseMass,
    pub cost: f64,
    /// Nonzeros of `A_m p` as `(master row, value)`, by increasing row.
    pub amp: Vec<(usize, f64)>,
}

impl DWColumn {
    pub fn dense_amp(&self, rows: usize) -> Vec<f64> {
        let mut v = vec![0.0; rows];
        for &(r, x) in &self.amp {
            v[r] = x;
        }
        v
    }
}

#[derive(Clone, Debug)]
pub struct MasterState {
    strides: Strides,
    /// `d_m` followed by 1 for the convexity row.
    rhs: Vec<f64>,
    /// Master rows passed to the simplex, then the convexity row.
    kept: Vec<usize>,
    /// LP row of each master row, if kept.
    lp_row: Vec<Option<usize>>,
    lp_rhs: Vec<f64>,
    columns: Vec<DWColumn>,
    pub mu: Vec<f64>,
    /// Duals of the master rows.
    pub y: Vec<f64>,
    /// Dual of the convexity row.
    pub sigma: f64,
    pub basis: Option<Basis>,
    pub objective: f64,
    /// Simplex pivots spent by the latest solve.
    pub last_pivots: usize,
}

impl MasterState {
    /// A master problem with the single column `p1`, which must satisfy every
    /// marginal of the permuted instance `pinst`.
    pub fn new(p1: SparseMass, pinst: &Instance) -> Result<Self> {
        let strides = pinst.strides()?;
        let residual = p1.marginal_residual(pinst, &strides);
        if residual > FEASIBILITY_TOL {
            return Err(Error::Contract(format!("initial vertex violates A w = d by {residual:e}")));
        }
        let mut rhs: Vec<f64> = pinst.measures()[FIRST_MASTER.min(pinst.n())..]
            .iter()
            .flat_map(|m| m.masses().iter().copied())
            .collect();
        rhs.push(1.0);
        let offsets = strides.row_offsets();
        let base = offsets[FIRST_MASTER.min(pinst.n())];
        let last_rows: Vec<usize> = (FIRST_MASTER..pinst.n()).map(|i| offsets[i + 1] - 1 - base).collect();
        let m = rhs.len() - 1;
        let mut kept: Vec<usize> = (0..m).filter(|r| !last_rows.contains(r)).collect();
        kept.push(m);
        let mut lp_row = vec![None; m + 1];
        for (k, &r) in kept.iter().enumerate() {
            lp_row[r] = Some(k);
        }
        let lp_rhs = kept.iter().map(|&r| rhs[r]).collect();
        let mut state = MasterState {
            strides,
            rhs,
            kept,
            lp_row,
            lp_rhs,
            columns: Vec::new(),
            mu: Vec::new(),
            y: Vec::new(),
            sigma: 0.0,
            basis: None,
            objective: f64::INFINITY,
            last_pivots: 0,
        };
        state.add_column(p1, pinst);
        Ok(state)
    }

    pub fn master_rows(&self) -> usize {
        self.rhs.len() - 1
    }

    pub fn columns(&self) -> &[DWColumn] {
        &self.columns
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// Appends the column generated by vertex `p`.
    pub fn add_column(&mut self, p: SparseMass, pinst: &Instance) {
        let n = self.strides.n();
        let base = self.strides.row_offsets()[FIRST_MASTER.min(n)];
        let mut rows = vec![0usize; n];
        let mut idx = vec![0usize; n];
        let mut amp = vec![0.0; self.master_rows()];
        let mut cost = 0.0;
        for (h, mass) in p.iter() {
            self.strides.column_support_into(h, &mut rows);
            for &r in &rows[FIRST_MASTER.min(n)..] {
                amp[r - base] += mass;
            }
            self.strides.tuple_into(h, &mut idx);
            cost += mass * combination_cost(&idx, pinst);
        }
        let amp = amp.into_iter().enumerate().filter(|&(_, v)| v != 0.0).collect();
        self.columns.push(DWColumn { p, cost, amp });
    }

    /// Re-solves LP (RM), warm-started from the previous basis.
    pub fn solve(&mut self) -> Result<()> {
        let lp = RestrictedMaster { rhs: &self.lp_rhs, lp_row: &self.lp_row, columns: &self.columns };
        let sol = match simplex::solve(&lp, self.basis.as_ref()) {
            Err(Error::Numerical(_)) if self.basis.is_some() => simplex::solve(&lp, None)?,
            other => other?,
        };
        if sol.status != LpStatus::Optimal {
            return Err(Error::Numerical(format!("restricted master problem became {:?}", sol.status)));
        }
        let m = self.master_rows();
        self.y = vec![0.0; m];
        for (&r, &d) in self.kept.iter().zip(&sol.duals) {
            if r < m {
                self.y[r] = d;
            }
        }
        self.sigma = sol.duals[self.kept.len() - 1];
        self.mu = sol.x;
        self.objective = sol.objective;
        self.basis = Some(sol.basis);
        self.last_pivots = sol.pivots;
        Ok(())
    }

    /// `w = sum_j mu_j p_j`, pruned at the mass-zero tolerance.
    pub fn recover(&self) -> SparseMass {
        let mut w = SparseMass::new();
        for (col, &mu) in self.columns.iter().zip(&self.mu) {
            if mu > 0.0 {
                for (h, m) in col.p.iter() {
                    w.add(h, mu * m);
                }
            }
        }
        w.prune();
        w
    }

    /// Heap bytes of the generated columns and the dense basis inverse.
    pub fn heap_bytes(&self) -> u64 {
        let entry = std::mem::size_of::<(u64, f64)>() as u64;
        let cols: u64 = self
            .columns
            .iter()
            .map(|c| (c.p.len() + c.amp.len()) as u64 * entry + 3 * 8)
            .sum();
        let m = self.lp_rhs.len() as u64;
        cols + m * m * 8 + (self.mu.len() as u64 + m) * 8
    }
}

/// LP (RM) as seen by the simplex.
struct RestrictedMaster<'a> {
    rhs: &'a [f64],
    lp_row: &'a [Option<usize>],
    columns: &'a [DWColumn],
}

impl LinearProgram for RestrictedMaster<'_> {
    fn num_rows(&self) -> usize {
        self.rhs.len()
    }
    fn num_cols(&self) -> usize {
        self.columns.len()
    }
    fn rhs(&self) -> &[f64] {
        self.rhs
    }
    fn cost(&self, j: usize) -> f64 {
        self.columns[j].cost
    }
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        out.extend(self.columns[j].amp.iter().filter_map(|&(r, v)| self.lp_row[r].map(|k| (k, v))));
        out.push((self.rhs.len() - 1, 1.0));
    }
    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        let amp = &self.columns[j].amp;
        amp.iter().filter_map(|&(r, v)| self.lp_row[r].map(|k| y[k] * v)).sum::<f64>() + y[self.rhs.len() - 1]
    }
}

/// Barycenter support point: a weighted mean and the combination behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct BarycenterPoint {
    pub coords: Vec<f64>,
    pub mass: f64,
    /// Point index chosen from each input measure.
    pub assignment: Vec<usize>,
}

/// Support points for the combinations of `w` (indices in `inst`'s layout).
pub fn barycenter_points(w: &SparseMass, inst: &Instance, strides: &Strides) -> Vec<BarycenterPoint> {
    w.iter()
        .filter(|&(_, m)| m > MASS_ZERO_TOL)
        .map(|(h, mass)| {
            let mut assignment = vec![0; strides.n()];
            strides.tuple_into(h, &mut assignment);
            BarycenterPoint { coords: crate::model::weighted_mean(&assignment, inst), mass, assignment }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::greedy_vertex;
    use crate::model::DiscreteMeasure;

    fn inst3() -> Instance {
        let m = |xs: &[f64]| {
            DiscreteMeasure::new(xs.iter().map(|&x| vec![x, x * x]).collect(), vec![1.0 / xs.len() as f64; xs.len()])
                .unwrap()
        };
        Instance::uniform(vec![m(&[0.0, 1.0]), m(&[0.5, 2.0, 3.0]), m(&[0.1, 0.7])]).unwrap()
    }

    #[test]
    fn single_column_master() {
        let inst = inst3();
        let strides = inst.strides().unwrap();
        let p1 = greedy_vertex(&inst).unwrap();
        let expected = p1.cost(&inst, &strides);
        let mut rm = MasterState::new(p1.clone(), &inst).unwrap();
        rm.solve().unwrap();
        assert_eq!(rm.mu.len(), 1);
        assert!((rm.mu[0] - 1.0).abs() < 1e-12);
        assert!((rm.objective - expected).abs() < 1e-12);

        rm.solve().unwrap();
        assert_eq!(rm.last_pivots, 0);

        let w = rm.recover();
        assert!(w.is_feasible(&inst, &strides, FEASIBILITY_TOL));
    }

    #[test]
    fn amp_sums_to_column_mass_per_measure() {
        let inst = inst3();
        let p1 = greedy_vertex(&inst).unwrap();
        let mut rm = MasterState::new(p1, &inst).unwrap();
        let single: SparseMass = [(4u64, 1.0)].into_iter().collect();
        rm.add_column(single.clone(), &inst);
        rm.add_column(single, &inst);
        assert_eq!(rm.num_columns(), 3);
        // Only measure 2 is a master measure here (rows 0..2).
        let amp = rm.columns()[1].dense_amp(rm.master_rows());
        assert_eq!(amp.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(amp.iter().sum::<f64>(), 1.0);
        rm.solve().unwrap();
        assert!((rm.mu.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_start_is_a_contract_error() {
        let inst = inst3();
        let bad: SparseMass = [(0u64, 1.0)].into_iter().collect();
        assert!(matches!(MasterState::new(bad, &inst), Err(Error::Contract(_))));
    }

    #[test]
    fn two_measures_leave_only_the_convexity_row() {
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let inst = Instance::uniform(vec![m.clone(), m]).unwrap();
        let p1 = greedy_vertex(&inst).unwrap();
        let cost = p1.cost(&inst, &inst.strides().unwrap());
        let mut rm = MasterState::new(p1, &inst).unwrap();
        assert_eq!(rm.master_rows(), 0);
        rm.solve().unwrap();
        assert!((rm.objective - cost).abs() < 1e-15);
    }
}
