//! Balanced transportation problems, solved exactly by the transportation
//! simplex: a northwest-corner spanning-tree basis improved with MODI
//! potentials. Costs may be negative.

use crate::error::{Error, Result};
use crate::simplex::{self, LinearProgram, LpStatus, SparseLP};

/// Largest allowed `|sum supplies - sum demands|`.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct TransportationProblem {
    supplies: Vec<f64>,
    demands: Vec<f64>,
    /// Row-major `supplies.len() x demands.len()`.
    costs: Vec<f64>,
}

impl TransportationProblem {
    pub fn new(supplies: Vec<f64>, demands: Vec<f64>, costs: Vec<f64>) -> Result<Self> {
        let (m, k) = (supplies.len(), demands.len());
        if m == 0 || k == 0 {
            return Err(Error::Contract("transportation problem needs at least one source and sink".into()));
        }
        if costs.len() != m * k {
            return Err(Error::Contract(format!("expected {} costs, got {}", m * k, costs.len())));
        }
        if let Some(s) = supplies.iter().chain(&demands).find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Contract(format!("supplies and demands must be positive, got {s}")));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Contract("costs must be finite".into()));
        }
        let gap = supplies.iter().sum::<f64>() - demands.iter().sum::<f64>();
        if gap.abs() > BALANCE_TOL {
            return Err(Error::Contract(format!("unbalanced transportation problem (gap {gap:e})")));
        }
        Ok(TransportationProblem { supplies, demands, costs })
    }

    pub fn from_matrix(supplies: Vec<f64>, demands: Vec<f64>, costs: &[Vec<f64>]) -> Result<Self> {
        Self::new(supplies, demands, costs.concat())
    }

    pub fn rows(&self) -> usize {
        self.supplies.len()
    }

    pub fn cols(&self) -> usize {
        self.demands.len()
    }

    pub fn supplies(&self) -> &[f64] {
        &self.supplies
    }

    pub fn demands(&self) -> &[f64] {
        &self.demands
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.demands.len() + j]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransportPlan {
    /// `(row, col, mass)` with `mass > 0`, sorted by `(row, col)`.
    pub flows: Vec<(usize, usize, f64)>,
    pub objective: f64,
}

impl TransportPlan {
    pub fn row_sums(&self, rows: usize) -> Vec<f64> {
        let mut s = vec![0.0; rows];
        for &(i, _, q) in &self.flows {
            s[i] += q;
        }
        s
    }

    pub fn col_sums(&self, cols: usize) -> Vec<f64> {
        let mut s = vec![0.0; cols];
        for &(_, j, q) in &self.flows {
            s[j] += q;
        }
        s
    }

    /// Whether the support, as edges of the bipartite row/column graph, is a forest.
    pub fn support_is_forest(&self, rows: usize, cols: usize) -> bool {
        let mut parent: Vec<usize> = (0..rows + cols).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        self.flows.iter().all(|&(i, j, _)| {
            let (a, b) = (find(&mut parent, i), find(&mut parent, rows + j));
            parent[a] = b;
            a != b
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TransportMethod {
    #[default]
    TransportationSimplex,
    /// Route through the general simplex; for differential testing.
    GeneralSimplex,
}

pub fn solve_transportation(tp: &TransportationProblem) -> Result<TransportPlan> {
    solve_transportation_with(tp, TransportMethod::TransportationSimplex)
}

pub fn solve_transportation_with(tp: &TransportationProblem, method: TransportMethod) -> Result<TransportPlan> {
    match method {
        TransportMethod::TransportationSimplex => TreeSolver::new(tp).solve(),
        TransportMethod::GeneralSimplex => solve_via_simplex(tp),
    }
}

/// The transportation LP in equality form: supply rows, then demand rows.
pub fn as_linear_program(tp: &TransportationProblem) -> SparseLP {
    let (m, k) = (tp.rows(), tp.cols());
    let rhs = tp.supplies.iter().chain(&tp.demands).copied().collect();
    let mut lp = SparseLP::with_capacity(rhs, m * k, 2 * m * k);
    for i in 0..m {
        for j in 0..k {
            lp.push_column(tp.cost(i, j), [(i, 1.0), (m + j, 1.0)]);
        }
    }
    lp
}

fn solve_via_simplex(tp: &TransportationProblem) -> Result<TransportPlan> {
    let lp = as_linear_program(tp);
    let sol = simplex::solve(&lp, None)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::LpStatus(sol.status));
    }
    let k = tp.cols();
    let flows: Vec<_> = sol.support().map(|(c, q)| (c / k, c % k, q)).collect();
    let objective = flows.iter().map(|&(i, j, q)| q * tp.cost(i, j)).sum();
    debug_assert_eq!(lp.num_cols(), tp.rows() * k);
    Ok(TransportPlan { flows, objective })
}

const NOT_BASIC: usize = usize::MAX;
const BLAND_AFTER: usize = 50;

struct TreeSolver<'a> {
    tp: &'a TransportationProblem,
    m: usize,
    k: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    /// Basis slot of each cell, or `NOT_BASIC`.
    slot: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl<'a> TreeSolver<'a> {
    fn new(tp: &'a TransportationProblem) -> Self {
        let (m, k) = (tp.rows(), tp.cols());
        TreeSolver {
            tp,
            m,
            k,
            cells: Vec::with_capacity(m + k - 1),
            flow: Vec::with_capacity(m + k - 1),
            slot: vec![NOT_BASIC; m * k],
            u: vec![0.0; m],
            v: vec![0.0; k],
            adj: vec![Vec::new(); m + k],
        }
    }

    fn northwest_corner(&mut self) {
        let mut s = self.tp.supplies.clone();
        let mut d = self.tp.demands.clone();
        let (mut i, mut j) = (0, 0);
        loop {
            let q = s[i].min(d[j]);
            s[i] -= q;
            d[j] -= q;
            self.slot[i * self.k + j] = self.cells.len();
            self.cells.push((i, j));
            self.flow.push(q);
            if i == self.m - 1 && j == self.k - 1 {
                break;
            }
            if i == self.m - 1 {
                j += 1;
            } else if j == self.k - 1 || s[i] <= d[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    fn rebuild_tree(&mut self) {
        self.adj.iter_mut().for_each(Vec::clear);
        for (b, &(i, j)) in self.cells.iter().enumerate() {
            self.adj[i].push(b);
            self.adj[self.m + j].push(b);
        }
    }

    fn other_end(&self, b: usize, node: usize) -> usize {
        let (i, j) = self.cells[b];
        if node == i { self.m + j } else { i }
    }

    fn compute_potentials(&mut self) {
        let mut known = vec![false; self.m + self.k];
        let mut stack = vec![0usize];
        known[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for idx in 0..self.adj[node].len() {
                let b = self.adj[node][idx];
                let next = self.other_end(b, node);
                if known[next] {
                    continue;
                }
                let (i, j) = self.cells[b];
                let c = self.tp.cost(i, j);
                if next < self.m {
                    self.u[next] = c - self.v[j];
                } else {
                    self.v[next - self.m] = c - self.u[i];
                }
                known[next] = true;
                stack.push(next);
            }
        }
    }

    /// Basic cells on the tree path from column node `j` to row node `i`.
    fn tree_path(&self, i: usize, j: usize) -> Vec<usize> {
        let nodes = self.m + self.k;
        let mut parent_edge = vec![NOT_BASIC; nodes];
        let mut visited = vec![false; nodes];
        let mut stack = vec![i];
        visited[i] = true;
        let target = self.m + j;
        while let Some(node) = stack.pop() {
            if node == target {
                break;
            }
            for &b in &self.adj[node] {
                let next = self.other_end(b, node);
                if !visited[next] {
                    visited[next] = true;
                    parent_edge[next] = b;
                    stack.push(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while node != i {
            let b = parent_edge[node];
            path.push(b);
            node = self.other_end(b, node);
        }
        path
    }

    fn solve(mut self) -> Result<TransportPlan> {
        self.northwest_corner();
        let scale = 1.0 + self.tp.costs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let tol = 1e-12 * scale;
        let max_iter = 1000 + 50 * self.m * self.k * (self.m + self.k);
        let mut streak = 0usize;
        for _ in 0..max_iter {
            self.rebuild_tree();
            self.compute_potentials();
            let bland = streak >= BLAND_AFTER;
            let mut entering: Option<(usize, usize, f64)> = None;
            'scan: for i in 0..self.m {
                for j in 0..self.k {
                    if self.slot[i * self.k + j] != NOT_BASIC {
                        continue;
                    }
                    let rc = self.tp.cost(i, j) - self.u[i] - self.v[j];
                    if rc < -tol && entering.is_none_or(|(_, _, best)| rc < best) {
                        entering = Some((i, j, rc));
                        if bland {
                            break 'scan;
                        }
                    }
                }
            }
            let Some((ei, ej, _)) = entering else {
                return Ok(self.into_plan());
            };

            let path = self.tree_path(ei, ej);
            // Path cells alternate -, +, -, ... starting at column `ej`.
            let mut leave: Option<usize> = None;
            for &b in path.iter().step_by(2) {
                let better = match leave {
                    None => true,
                    Some(l) => {
                        let (fb, fl) = (self.flow[b].max(0.0), self.flow[l].max(0.0));
                        fb < fl || (fb == fl && self.cells[b] < self.cells[l])
                    }
                };
                if better {
                    leave = Some(b);
                }
            }
            let leave = leave.expect("a cycle always has a decreasing cell");
            let theta = self.flow[leave].max(0.0);
            for (pos, &b) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.flow[b] = (self.flow[b] - theta).max(0.0);
                } else {
                    self.flow[b] += theta;
                }
            }
            let (li, lj) = self.cells[leave];
            self.slot[li * self.k + lj] = NOT_BASIC;
            self.slot[ei * self.k + ej] = leave;
            self.cells[leave] = (ei, ej);
            self.flow[leave] = theta;

            if theta <= 1e-15 {
                streak += 1;
            } else {
                streak = 0;
            }
        }
        Err(Error::Numerical("transportation simplex did not converge".into()))
    }

    fn into_plan(self) -> TransportPlan {
        let mut flows: Vec<(usize, usize, f64)> = self
            .cells
            .iter()
            .zip(&self.flow)
            .filter(|(_, &q)| q > 0.0)
            .map(|(&(i, j), &q)| (i, j, q))
            .collect();
        flows.sort_by_key(|&(i, j, _)| (i, j));
        let objective = flows.iter().map(|&(i, j, q)| q * self.tp.cost(i, j)).sum();
        TransportPlan { flows, objective }
    }
}
