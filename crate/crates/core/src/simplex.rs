//! Dense revised primal simplex for `min c^T x, A x = b, x >= 0`.
//!
//! The basis inverse is kept explicitly and updated by Gauss-Jordan pivots; it
//! is rebuilt from an LU factorisation every `refactor_every` pivots. Columns
//! are pulled through [`LinearProgram`], so the constraint matrix may be
//! implicit. Phase I starts from one artificial per row. Artificials that are
//! still basic in phase II (redundant rows) are held at zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column access for the simplex.
pub trait LinearProgram {
    fn num_rows(&self) -> usize;
    fn num_cols(&self) -> usize;
    fn rhs(&self) -> &[f64];
    fn cost(&self, j: usize) -> f64;
    /// Replaces `out` with the nonzeros `(row, value)` of column `j`.
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>);
    /// `sum_r y[r] * a_rj`.
    fn dot_column(&self, j: usize, y: &[f64]) -> f64;
}

/// Row-major dense LP.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLP {
    pub cost: Vec<f64>,
    pub a: Vec<f64>,
    pub rhs: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl DenseLP {
    pub fn new(cost: Vec<f64>, a: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self> {
        let rows = a.len();
        let cols = cost.len();
        if rhs.len() != rows {
            return Err(Error::Contract(format!("{rows} constraint rows but {} right-hand sides", rhs.len())));
        }
        if let Some(r) = a.iter().position(|row| row.len() != cols) {
            return Err(Error::Contract(format!("row {r} has {} entries, expected {cols}", a[r].len())));
        }
        let all_finite = cost.iter().chain(&rhs).chain(a.iter().flatten()).all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Contract("LP data must be finite".into()));
        }
        Ok(DenseLP { cost, a: a.concat(), rhs, rows, cols })
    }

    pub fn entry(&self, r: usize, j: usize) -> f64 {
        self.a[r * self.cols + j]
    }
}

impl LinearProgram for DenseLP {
    fn num_rows(&self) -> usize {
        self.rows
    }
    fn num_cols(&self) -> usize {
        self.cols
    }
    fn rhs(&self) -> &[f64] {
        &self.rhs
    }
    fn cost(&self, j: usize) -> f64 {
        self.cost[j]
    }
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        for r in 0..self.rows {
            let v = self.entry(r, j);
            if v != 0.0 {
                out.push((r, v));
            }
        }
    }
    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        (0..self.rows).map(|r| self.entry(r, j) * y[r]).sum()
    }
}

/// Column-compressed LP.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseLP {
    cost: Vec<f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    rhs: Vec<f64>,
}

impl SparseLP {
    pub fn new(rhs: Vec<f64>) -> Self {
        SparseLP { col_ptr: vec![0], rhs, ..Default::default() }
    }

    pub fn with_capacity(rhs: Vec<f64>, cols: usize, nonzeros: usize) -> Self {
        let mut col_ptr = Vec::with_capacity(cols + 1);
        col_ptr.push(0);
        SparseLP {
            cost: Vec::with_capacity(cols),
            col_ptr,
            row_idx: Vec::with_capacity(nonzeros),
            values: Vec::with_capacity(nonzeros),
            rhs,
        }
    }

    pub fn push_column(&mut self, cost: f64, entries: impl IntoIterator<Item = (usize, f64)>) -> usize {
        for (r, v) in entries {
            debug_assert!(r < self.rhs.len());
            self.row_idx.push(r);
            self.values.push(v);
        }
        self.col_ptr.push(self.row_idx.len());
        self.cost.push(cost);
        self.cost.len() - 1
    }

    pub fn nonzeros(&self) -> usize {
        self.row_idx.len()
    }

    /// `(row, value)` entries of column `j`.
    pub fn entries(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// Heap bytes held by the matrix, costs and right-hand side.
    pub fn heap_bytes(&self) -> usize {
        use std::mem::size_of;
        self.cost.capacity() * size_of::<f64>()
            + self.col_ptr.capacity() * size_of::<usize>()
            + self.row_idx.capacity() * size_of::<usize>()
            + self.values.capacity() * size_of::<f64>()
            + self.rhs.capacity() * size_of::<f64>()
    }
}

impl LinearProgram for SparseLP {
    fn num_rows(&self) -> usize {
        self.rhs.len()
    }
    fn num_cols(&self) -> usize {
        self.cost.len()
    }
    fn rhs(&self) -> &[f64] {
        &self.rhs
    }
    fn cost(&self, j: usize) -> f64 {
        self.cost[j]
    }
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        out.extend(self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied()));
    }
    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()].iter().zip(&self.values[range]).map(|(&r, v)| y[r] * v).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasisVar {
    Column(usize),
    /// Artificial variable of the given row.
    Artificial(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    pub basic: Vec<BasisVar>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LPSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub objective: f64,
    pub basis: Basis,
    pub pivots: usize,
}

impl LPSolution {
    /// Nonzero primal entries.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.x.iter().copied().enumerate().filter(|&(_, v)| v > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    /// Degenerate pivots in a row before switching to Bland's rule.
    pub bland_after: usize,
    pub refactor_every: usize,
    pub max_pivots: usize,
    /// Largest accepted 1-norm condition estimate of a basis.
    pub max_condition: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            bland_after: 50,
            refactor_every: 100,
            max_pivots: 5_000_000,
            max_condition: 1e14,
        }
    }
}

pub fn solve<P: LinearProgram + ?Sized>(lp: &P, warm: Option<&Basis>) -> Result<LPSolution> {
    solve_with(lp, warm, &SimplexOptions::default())
}

pub fn solve_with<P: LinearProgram + ?Sized>(
    lp: &P,
    warm: Option<&Basis>,
    opts: &SimplexOptions,
) -> Result<LPSolution> {
    let m = lp.num_rows();
    if lp.rhs().iter().any(|b| !b.is_finite()) {
        return Err(Error::Contract("right-hand side must be finite".into()));
    }
    if m == 0 {
        return solve_unconstrained(lp);
    }
    let mut t = Tableau::new(lp, opts);
    let warm_ok = match warm {
        Some(basis) => t.load(basis)?,
        None => false,
    };
    if !warm_ok {
        t.load_artificial();
        match t.run(Phase::One)? {
            Outcome::Optimal => {}
            Outcome::Unbounded => return Err(Error::Numerical("phase I reported unboundedness".into())),
        }
        let infeasibility: f64 = t
            .basis
            .iter()
            .zip(&t.xb)
            .filter(|(v, _)| matches!(v, BasisVar::Artificial(_)))
            .map(|(_, x)| x.max(0.0))
            .sum();
        let scale = 1.0 + lp.rhs().iter().map(|b| b.abs()).sum::<f64>();
        if infeasibility > opts.feasibility_tol * scale {
            return Ok(t.finish(LpStatus::Infeasible));
        }
    }
    let status = match t.run(Phase::Two)? {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
    };
    Ok(t.finish(status))
}

fn solve_unconstrained<P: LinearProgram + ?Sized>(lp: &P) -> Result<LPSolution> {
    let k = lp.num_cols();
    let status = if (0..k).any(|j| lp.cost(j) < 0.0) { LpStatus::Unbounded } else { LpStatus::Optimal };
    Ok(LPSolution {
        status,
        x: vec![0.0; k],
        duals: vec![],
        objective: 0.0,
        basis: Basis::default(),
        pivots: 0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Tableau<'a, P: ?Sized> {
    lp: &'a P,
    opts: &'a SimplexOptions,
    m: usize,
    /// Row-major `B^{-1}`.
    binv: Vec<f64>,
    basis: Vec<BasisVar>,
    xb: Vec<f64>,
    in_basis: Vec<bool>,
    art_sign: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
    degenerate_streak: usize,
    bland: bool,
    col: Vec<(usize, f64)>,
    alpha: Vec<f64>,
    y: Vec<f64>,
}

impl<'a, P: LinearProgram + ?Sized> Tableau<'a, P> {
    fn new(lp: &'a P, opts: &'a SimplexOptions) -> Self {
        let m = lp.num_rows();
        let art_sign = lp.rhs().iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
        Tableau {
            lp,
            opts,
            m,
            binv: vec![0.0; m * m],
            basis: Vec::new(),
            xb: vec![0.0; m],
            in_basis: vec![false; lp.num_cols()],
            art_sign,
            pivots: 0,
            since_refactor: 0,
            degenerate_streak: 0,
            bland: false,
            col: Vec::new(),
            alpha: vec![0.0; m],
            y: vec![0.0; m],
        }
    }

    fn load_artificial(&mut self) {
        self.basis = (0..self.m).map(BasisVar::Artificial).collect();
        self.in_basis.iter_mut().for_each(|b| *b = false);
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.m {
            self.binv[r * self.m + r] = self.art_sign[r];
        }
        self.xb = self.lp.rhs().iter().map(|b| b.abs()).collect();
        self.since_refactor = 0;
    }

    /// Tries a warm basis; `false` means it was unusable and phase I is needed.
    fn load(&mut self, warm: &Basis) -> Result<bool> {
        let k = self.lp.num_cols();
        if warm.basic.len() != self.m {
            return Ok(false);
        }
        let mut seen = std::collections::HashSet::new();
        for v in &warm.basic {
            let valid = match *v {
                BasisVar::Column(j) => j < k,
                BasisVar::Artificial(r) => r < self.m,
            };
            if !valid || !seen.insert(*v) {
                return Ok(false);
            }
        }
        self.basis = warm.basic.clone();
        if self.refactor().is_err() {
            return Ok(false);
        }
        let tol = self.opts.feasibility_tol;
        let feasible = self.basis.iter().zip(&self.xb).all(|(v, &x)| match v {
            BasisVar::Column(_) => x >= -tol,
            BasisVar::Artificial(_) => x.abs() <= tol,
        });
        if !feasible {
            return Ok(false);
        }
        self.in_basis.iter_mut().for_each(|b| *b = false);
        for v in &self.basis {
            if let BasisVar::Column(j) = *v {
                self.in_basis[j] = true;
            }
        }
        Ok(true)
    }

    fn var_cost(&self, v: BasisVar, phase: Phase) -> f64 {
        match (phase, v) {
            (Phase::One, BasisVar::Artificial(_)) => 1.0,
            (Phase::One, BasisVar::Column(_)) => 0.0,
            (Phase::Two, BasisVar::Artificial(_)) => 0.0,
            (Phase::Two, BasisVar::Column(j)) => self.lp.cost(j),
        }
    }

    fn bland_key(&self, v: BasisVar) -> usize {
        match v {
            BasisVar::Column(j) => j,
            BasisVar::Artificial(r) => self.lp.num_cols() + r,
        }
    }

    fn compute_duals(&mut self, phase: Phase) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for p in 0..m {
            let cb = self.var_cost(self.basis[p], phase);
            if cb != 0.0 {
                let row = &self.binv[p * m..(p + 1) * m];
                for (yr, b) in self.y.iter_mut().zip(row) {
                    *yr += cb * b;
                }
            }
        }
    }

    fn load_column(&mut self, v: BasisVar) {
        match v {
            BasisVar::Column(j) => self.lp.column(j, &mut self.col),
            BasisVar::Artificial(r) => {
                self.col.clear();
                self.col.push((r, self.art_sign[r]));
            }
        }
    }

    fn compute_alpha(&mut self, v: BasisVar) {
        self.load_column(v);
        let m = self.m;
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            self.alpha[p] = self.col.iter().map(|&(r, a)| row[r] * a).sum();
        }
    }

    fn choose_entering(&self, phase: Phase) -> Option<usize> {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.lp.num_cols() {
            if self.in_basis[j] {
                continue;
            }
            let cj = if phase == Phase::Two { self.lp.cost(j) } else { 0.0 };
            let d = cj - self.lp.dot_column(j, &self.y);
            if d < -tol {
                if self.bland {
                    return Some(j);
                }
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Harris two-pass ratio test: bound the step with the feasibility
    /// tolerance, then take the largest pivot among rows within that bound.
    /// Under Bland's rule the exact minimum ratio with the lowest key wins.
    fn choose_leaving(&self, phase: Phase) -> Option<(usize, f64)> {
        let piv = self.opts.pivot_tol;
        let tol = self.opts.feasibility_tol;
        // Basic artificials in phase II must stay at zero: any nonzero pivot leaves first.
        let mut forced: Option<usize> = None;
        let mut bound = f64::INFINITY;
        for p in 0..self.m {
            let a = self.alpha[p];
            if phase == Phase::Two && matches!(self.basis[p], BasisVar::Artificial(_)) {
                if a.abs() > piv && forced.is_none_or(|q| a.abs() > self.alpha[q].abs()) {
                    forced = Some(p);
                }
            } else if a > piv {
                bound = bound.min((self.xb[p].max(0.0) + tol) / a);
            }
        }
        if let Some(p) = forced {
            return Some((p, 0.0));
        }
        if bound.is_infinite() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for p in 0..self.m {
            let a = self.alpha[p];
            if a <= piv || (phase == Phase::Two && matches!(self.basis[p], BasisVar::Artificial(_))) {
                continue;
            }
            let ratio = self.xb[p].max(0.0) / a;
            if ratio > bound {
                continue;
            }
            let better = match best {
                None => true,
                Some((q, r)) if self.bland => {
                    let tie = (ratio - r).abs() <= 1e-12 * (1.0 + r.abs());
                    if tie {
                        self.bland_key(self.basis[p]) < self.bland_key(self.basis[q])
                    } else {
                        ratio < r
                    }
                }
                Some((q, _)) => a > self.alpha[q],
            };
            if better {
                best = Some((p, ratio));
            }
        }
        best
    }

    fn run(&mut self, phase: Phase) -> Result<Outcome> {
        self.degenerate_streak = 0;
        self.bland = false;
        loop {
            self.compute_duals(phase);
            let Some(j) = self.choose_entering(phase) else {
                if self.since_refactor == 0 {
                    return Ok(Outcome::Optimal);
                }
                // Confirm optimality on a freshly factorised basis.
                self.refactor()?;
                continue;
            };
            if self.pivots >= self.opts.max_pivots {
                return Err(Error::IterationLimit(self.opts.max_pivots));
            }
            self.compute_alpha(BasisVar::Column(j));
            let Some((p, theta)) = self.choose_leaving(phase) else {
                return Ok(Outcome::Unbounded);
            };
            self.pivot(p, j, theta);
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
        }
    }

    fn pivot(&mut self, p: usize, j: usize, theta: f64) {
        let m = self.m;
        let ap = self.alpha[p];
        for q in 0..m {
            if q != p {
                self.xb[q] -= theta * self.alpha[q];
            }
        }
        self.xb[p] = theta;

        let (before, rest) = self.binv.split_at_mut(p * m);
        let (prow, after) = rest.split_at_mut(m);
        prow.iter_mut().for_each(|v| *v /= ap);
        for (q, row) in before.chunks_exact_mut(m).chain(after.chunks_exact_mut(m)).enumerate() {
            let q = if q < p { q } else { q + 1 };
            let f = self.alpha[q];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
            }
        }

        if let BasisVar::Column(old) = self.basis[p] {
            self.in_basis[old] = false;
        }
        self.basis[p] = BasisVar::Column(j);
        self.in_basis[j] = true;
        self.pivots += 1;
        self.since_refactor += 1;

        if theta <= 1e-12 {
            self.degenerate_streak += 1;
            if self.degenerate_streak >= self.opts.bland_after {
                self.bland = true;
            }
        } else {
            self.degenerate_streak = 0;
            self.bland = false;
        }
    }

    /// Rebuilds `B^{-1}` and the basic values from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = DMatrix::<f64>::zeros(m, m);
        for p in 0..m {
            self.load_column(self.basis[p]);
            for &(r, v) in &self.col {
                b[(r, p)] = v;
            }
        }
        let norm_b = one_norm(&b);
        let inv = b
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular basis".into()))?;
        let cond = norm_b * one_norm(&inv);
        if !cond.is_finite() || cond > self.opts.max_condition {
            return Err(Error::Numerical(format!("basis condition estimate {cond:e} exceeds limit")));
        }
        for p in 0..m {
            for r in 0..m {
                self.binv[p * m + r] = inv[(p, r)];
            }
        }
        let rhs = self.lp.rhs();
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            let v: f64 = row.iter().zip(rhs).map(|(a, b)| a * b).sum();
            self.xb[p] = if v.abs() <= 1e-13 { 0.0 } else { v };
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn finish(mut self, status: LpStatus) -> LPSolution {
        let k = self.lp.num_cols();
        self.compute_duals(Phase::Two);
        let mut x = vec![0.0; k];
        for (v, &val) in self.basis.iter().zip(&self.xb) {
            if let BasisVar::Column(j) = *v {
                x[j] = if val > self.opts.feasibility_tol { val } else { val.max(0.0) };
            }
        }
        let objective = x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| self.lp.cost(j) * v).sum();
        LPSolution {
            status,
            x,
            duals: self.y,
            objective,
            basis: Basis { basic: self.basis },
            pivots: self.pivots,
        }
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}
