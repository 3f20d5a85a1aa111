//! Initial vertices of `{w : A w = d, w >= 0}`.
//!
//! [`greedy_vertex`] walks one pointer per measure through the support
//! points, always assigning the smallest outstanding mass to the current
//! combination. [`two_approx`] places the barycenter on the union of the input
//! supports by solving a polynomial-size LP; [`repair_to_vertex`] then splits
//! every approximate support point into combinations with the same greedy
//! sweep, moving its mass onto weighted means.

use crate::error::{Error, Result};
use crate::model::{sq_dist, Instance, SparseMass, MASS_ZERO_TOL};
use crate::simplex::{self, LpStatus, SparseLP};

/// Outstanding mass at or below this counts as exhausted.
pub const EXHAUSTED_TOL: f64 = 1e-12;

/// The greedy vertex: at most `sum |P_i| - n + 1` combinations, never
/// splitting a barycenter point's mass within a measure.
pub fn greedy_vertex(inst: &Instance) -> Result<SparseMass> {
    let strides = inst.strides()?;
    let n = inst.n();
    let sizes = strides.sizes();
    let n_o = strides.n_o();
    let mut remaining: Vec<Vec<f64>> = inst.measures().iter().map(|m| m.masses().to_vec()).collect();
    let mut ptr = vec![0usize; n];
    let mut assigned = 0.0;
    let mut w = SparseMass::new();
    while assigned < 1.0 - EXHAUSTED_TOL && ptr.iter().zip(sizes).all(|(&p, &s)| p < s) {
        let step = (0..n).map(|i| remaining[i][ptr[i]]).fold(f64::INFINITY, f64::min);
        let h: u64 = ptr.iter().zip(n_o).map(|(&j, &o)| j as u64 * o).sum();
        w.add(h, step);
        assigned += step;
        for i in 0..n {
            let r = &mut remaining[i][ptr[i]];
            *r -= step;
            if *r <= EXHAUSTED_TOL {
                ptr[i] += 1;
            }
        }
    }
    Ok(w)
}

/// Barycenter supported on the union of the input supports.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxBarycenter {
    /// Candidate locations, measure by measure, in input order.
    pub support: Vec<Vec<f64>>,
    /// `(measure, point)` each candidate was copied from.
    pub origin: Vec<(usize, usize)>,
    /// Mass `z_s` at each candidate (zero for unused candidates).
    pub mass: Vec<f64>,
    /// `flows[i][s]`: `(point of measure i, mass)` sent from candidate `s`, by point index.
    pub flows: Vec<Vec<Vec<(usize, f64)>>>,
    pub cost: f64,
}

impl ApproxBarycenter {
    /// Candidates carrying mass.
    pub fn used(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.mass.len()).filter(|&s| self.mass[s] > MASS_ZERO_TOL)
    }

    /// `sum_i lambda_i sum_{s,j} |s - x_ij|^2 y^i_{s,j}`.
    pub fn transport_cost(&self, inst: &Instance) -> f64 {
        let mut total = 0.0;
        for (i, per_s) in self.flows.iter().enumerate() {
            let lambda = inst.lambdas()[i];
            for (s, flows) in per_s.iter().enumerate() {
                for &(j, q) in flows {
                    total += lambda * q * sq_dist(&self.support[s], inst.measure(i).point(j));
                }
            }
        }
        total
    }

    /// Largest violation of the candidate-balance and marginal constraints.
    pub fn residual(&self, inst: &Instance) -> f64 {
        let mut worst: f64 = (self.mass.iter().sum::<f64>() - 1.0).abs();
        for (i, per_s) in self.flows.iter().enumerate() {
            let mut received = vec![0.0; inst.measure(i).len()];
            for (s, flows) in per_s.iter().enumerate() {
                let out: f64 = flows.iter().map(|f| f.1).sum();
                worst = worst.max((out - self.mass[s]).abs());
                for &(j, q) in flows {
                    received[j] += q;
                }
            }
            for (got, want) in received.iter().zip(inst.measure(i).masses()) {
                worst = worst.max((got - want).abs());
            }
        }
        worst
    }
}

/// Solves the barycenter LP restricted to the union of the input supports.
///
/// Variables are the flows `y^i_{s,j}` from candidate `s` to point `j` of
/// measure `i`. The candidate mass `z_s` is identified with measure 0's
/// outflow, so the balance rows read `sum_j y^i_{s,j} - sum_j y^0_{s,j} = 0`
/// for `i >= 1`, followed by the marginal rows `sum_s y^i_{s,j} = d_ij`.
pub fn two_approx(inst: &Instance) -> Result<ApproxBarycenter> {
    let n = inst.n();
    let (support, origin): (Vec<Vec<f64>>, Vec<(usize, usize)>) = inst
        .measures()
        .iter()
        .enumerate()
        .flat_map(|(i, m)| m.points().enumerate().map(move |(j, p)| (p.to_vec(), (i, j))))
        .unzip();
    let k = support.len();
    // The last marginal row of each measure after the first follows from the
    // balance rows and measure 0's marginals, so it is left out.
    let mut marginal_offset = vec![(n - 1) * k];
    for (i, m) in inst.measures().iter().enumerate() {
        let kept = if i == 0 { m.len() } else { m.len() - 1 };
        marginal_offset.push(marginal_offset.last().unwrap() + kept);
    }
    let rows = *marginal_offset.last().unwrap();
    let mut rhs = vec![0.0; rows];
    for (i, m) in inst.measures().iter().enumerate() {
        let kept = marginal_offset[i + 1] - marginal_offset[i];
        rhs[marginal_offset[i]..marginal_offset[i + 1]].copy_from_slice(&m.masses()[..kept]);
    }

    let mut lp = SparseLP::with_capacity(rhs, k * k, 3 * k * k);
    let mut var = Vec::with_capacity(k * k);
    for (i, m) in inst.measures().iter().enumerate() {
        let lambda = inst.lambdas()[i];
        for (s, loc) in support.iter().enumerate() {
            for (j, x) in m.points().enumerate() {
                let cost = lambda * sq_dist(loc, x);
                let row = marginal_offset[i] + j;
                let marginal = (row < marginal_offset[i + 1]).then_some((row, 1.0));
                if i == 0 {
                    let balance = (1..n).map(|l| ((l - 1) * k + s, -1.0));
                    lp.push_column(cost, balance.chain(marginal));
                } else {
                    lp.push_column(cost, std::iter::once(((i - 1) * k + s, 1.0)).chain(marginal));
                }
                var.push((i, s, j));
            }
        }
    }

    let sol = simplex::solve(&lp, None)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::LpStatus(sol.status));
    }
    let mut flows = vec![vec![Vec::new(); k]; n];
    let mut mass = vec![0.0; k];
    for (col, q) in sol.support() {
        let (i, s, j) = var[col];
        flows[i][s].push((j, q));
        if i == 0 {
            mass[s] += q;
        }
    }
    Ok(ApproxBarycenter { support, origin, mass, flows, cost: sol.objective })
}

/// Splits every approximate support point into combinations, sweeping the
/// destinations of each measure in point order and assigning the smallest
/// outstanding flow each step.
pub fn repair_to_vertex(apx: &ApproxBarycenter, inst: &Instance) -> Result<SparseMass> {
    let strides = inst.strides()?;
    let n = inst.n();
    if apx.flows.len() != n || apx.flows.iter().any(|f| f.len() != apx.mass.len()) {
        return Err(Error::Contract("approximate barycenter does not match the instance".into()));
    }
    let residual = apx.residual(inst);
    if residual > 1e-9 {
        return Err(Error::Contract(format!("inconsistent approximate barycenter flows (residual {residual:e})")));
    }

    let mut w = SparseMass::new();
    let mut choice = vec![0usize; n];
    for s in 0..apx.mass.len() {
        let mut outstanding = apx.mass[s];
        if outstanding <= EXHAUSTED_TOL {
            continue;
        }
        let mut pending: Vec<Vec<(usize, f64)>> = apx.flows.iter().map(|per_s| {
            let mut f = per_s[s].clone();
            f.sort_by_key(|&(j, _)| j);
            f
        }).collect();
        let mut ptr = vec![0usize; n];
        'sweep: while outstanding > EXHAUSTED_TOL {
            let mut step = outstanding;
            for i in 0..n {
                while ptr[i] < pending[i].len() && pending[i][ptr[i]].1 <= EXHAUSTED_TOL {
                    ptr[i] += 1;
                }
                let Some(&(j, q)) = pending[i].get(ptr[i]) else {
                    break 'sweep;
                };
                choice[i] = j;
                step = step.min(q);
            }
            w.add(strides.index_of(&choice)?, step);
            outstanding -= step;
            for i in 0..n {
                pending[i][ptr[i]].1 -= step;
            }
        }
    }
    w.prune();
    Ok(w)
}
