//! Instances, combination indexing on the implicit constraint matrix, and
//! transport costs.
//!
//! The barycenter LP has one column per combination `h`, a choice of one
//! support point from each measure. Measure `i` owns a block of `|P_i|` rows
//! and column `h` has a single one in each block. With strides
//! `n_o(i) = |P_{i+1}| * ... * |P_n|`, the point chosen from measure `i` is
//! `(h / n_o(i)) mod |P_i|`, so rows in measure `i`'s block hold runs of
//! `n_o(i)` consecutive ones.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};

/// Tolerance on the total mass of a measure and on the sum of the weights.
pub const MASS_SUM_TOL: f64 = 1e-12;

/// Entries of a [`SparseMass`] at or below this are dropped.
pub const MASS_ZERO_TOL: f64 = 1e-12;

/// Default tolerance of the marginal feasibility predicate.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInstance("measure has no support points".into()));
        }
        if points.len() != masses.len() {
            return Err(Error::InvalidInstance(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidInstance("points have dimension 0".into()));
        }
        let mut coords = Vec::with_capacity(dim * points.len());
        for (j, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::InvalidInstance(format!(
                    "point {j} has dimension {} but point 0 has dimension {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInstance(format!("point {j} has a non-finite coordinate")));
            }
            coords.extend_from_slice(p);
        }
        for (j, &m) in masses.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidInstance(format!("mass {j} is {m}, expected > 0")));
            }
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::InvalidInstance(format!("masses sum to {total}, expected 1")));
        }
        Ok(DiscreteMeasure { dim, coords, masses })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    measures: Vec<DiscreteMeasure>,
    lambdas: Vec<f64>,
}

impl Instance {
    pub fn new(measures: Vec<DiscreteMeasure>, lambdas: Vec<f64>) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::InvalidInstance("no measures".into()));
        }
        if measures.len() != lambdas.len() {
            return Err(Error::InvalidInstance(format!(
                "{} measures but {} weights",
                measures.len(),
                lambdas.len()
            )));
        }
        let dim = measures[0].dim();
        for (i, m) in measures.iter().enumerate() {
            if m.dim() != dim {
                return Err(Error::InvalidInstance(format!(
                    "measure {i} has dimension {} but measure 0 has dimension {dim}",
                    m.dim()
                )));
            }
        }
        for (i, &l) in lambdas.iter().enumerate() {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::InvalidInstance(format!("weight {i} is {l}, expected >= 0")));
            }
        }
        let total: f64 = lambdas.iter().sum();
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(Error::InvalidInstance(format!("weights sum to {total}, expected 1")));
        }
        Ok(Instance { measures, lambdas })
    }

    /// Equal weights `1/n`.
    pub fn uniform(measures: Vec<DiscreteMeasure>) -> Result<Self> {
        let n = measures.len().max(1);
        Self::new(measures, vec![1.0 / n as f64; n])
    }

    pub fn n(&self) -> usize {
        self.measures.len()
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim()
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    pub fn measure(&self, i: usize) -> &DiscreteMeasure {
        &self.measures[i]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.measures.iter().map(DiscreteMeasure::len).collect()
    }

    pub fn total_points(&self) -> usize {
        self.measures.iter().map(DiscreteMeasure::len).sum()
    }

    pub fn strides(&self) -> Result<Strides> {
        Strides::new(&self.sizes())
    }

    /// The instance with measure `perm[k]` moved to position `k`.
    pub fn permuted(&self, perm: &[usize]) -> Instance {
        Instance {
            measures: perm.iter().map(|&i| self.measures[i].clone()).collect(),
            lambdas: perm.iter().map(|&i| self.lambdas[i]).collect(),
        }
    }

    /// Mass of point `j` in measure `i`.
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.measures[i].masses[j]
    }
}

/// Consecutive-ones counts of the implicit constraint matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Strides {
    sizes: Vec<usize>,
    n_o: Vec<u64>,
    total: u64,
    row_offsets: Vec<usize>,
}

impl Strides {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidInstance("no measures".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInstance(format!("measure {i} has no support points")));
        }
        let n = sizes.len();
        let mut n_o = vec![1u64; n];
        for i in (0..n - 1).rev() {
            n_o[i] = n_o[i + 1].checked_mul(sizes[i + 1] as u64).ok_or_else(|| overflow(sizes))?;
        }
        let total = n_o[0].checked_mul(sizes[0] as u64).ok_or_else(|| overflow(sizes))?;
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        for &s in sizes {
            row_offsets.push(row_offsets.last().unwrap() + s);
        }
        Ok(Strides { sizes: sizes.to_vec(), n_o, total, row_offsets })
    }

    pub fn n(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `n_o[i]`: length of a run of ones in measure `i`'s rows.
    pub fn n_o(&self) -> &[u64] {
        &self.n_o
    }

    /// Number of combinations `N`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// `row_offsets[i]` is the first row of measure `i`; the last entry is the row count.
    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn num_rows(&self) -> usize {
        *self.row_offsets.last().unwrap()
    }

    fn check(&self, h: u64) -> Result<()> {
        if h >= self.total {
            return Err(Error::IndexOutOfRange { index: h, limit: self.total });
        }
        Ok(())
    }

    /// Rows holding a one in column `h`, one per measure block, increasing.
    pub fn column_support(&self, h: u64) -> Result<Vec<usize>> {
        self.check(h)?;
        let mut rows = vec![0; self.n()];
        self.column_support_into(h, &mut rows);
        Ok(rows)
    }

    /// Unchecked version of [`Strides::column_support`] writing into `rows`.
    pub fn column_support_into(&self, h: u64, rows: &mut [usize]) {
        let n = self.n();
        if n == 1 {
            rows[0] = h as usize;
            return;
        }
        rows[0] = (h / self.n_o[0]) as usize;
        for (i, row) in rows.iter_mut().enumerate().take(n - 1).skip(1) {
            *row = self.row_offsets[i] + ((h % self.n_o[i - 1]) / self.n_o[i]) as usize;
        }
        rows[n - 1] = self.row_offsets[n - 1] + (h % self.sizes[n - 1] as u64) as usize;
    }

    pub fn tuple_of(&self, h: u64) -> Result<Combination> {
        self.check(h)?;
        let mut indices = vec![0; self.n()];
        self.tuple_into(h, &mut indices);
        Ok(Combination { indices, h })
    }

    /// Unchecked decomposition of `h` into point indices.
    pub fn tuple_into(&self, h: u64, indices: &mut [usize]) {
        for (i, slot) in indices.iter_mut().enumerate() {
            *slot = ((h / self.n_o[i]) % self.sizes[i] as u64) as usize;
        }
    }

    /// Point index chosen from measure `i` by combination `h`.
    pub fn component(&self, h: u64, i: usize) -> usize {
        ((h / self.n_o[i]) % self.sizes[i] as u64) as usize
    }

    pub fn index_of(&self, indices: &[usize]) -> Result<u64> {
        if indices.len() != self.n() {
            return Err(Error::Contract(format!(
                "combination has {} entries, expected {}",
                indices.len(),
                self.n()
            )));
        }
        let mut h = 0u64;
        for (i, &j) in indices.iter().enumerate() {
            if j >= self.sizes[i] {
                return Err(Error::IndexOutOfRange { index: j as u64, limit: self.sizes[i] as u64 });
            }
            h += j as u64 * self.n_o[i];
        }
        Ok(h)
    }

    pub fn combination(&self, indices: &[usize]) -> Result<Combination> {
        let h = self.index_of(indices)?;
        Ok(Combination { indices: indices.to_vec(), h })
    }
}

fn overflow(sizes: &[usize]) -> Error {
    Error::Capacity {
        what: format!("combination count of support sizes {sizes:?}"),
        needed: u64::MAX,
        limit: u64::MAX,
    }
}

/// One support point from each measure.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Combination {
    pub indices: Vec<usize>,
    pub h: u64,
}

/// `sum_i lambda_i x_i` over the points selected by `indices`.
pub fn weighted_mean(indices: &[usize], inst: &Instance) -> Vec<f64> {
    let mut mean = vec![0.0; inst.dim()];
    for (i, &j) in indices.iter().enumerate() {
        let lambda = inst.lambdas[i];
        for (m, x) in mean.iter_mut().zip(inst.measures[i].point(j)) {
            *m += lambda * x;
        }
    }
    mean
}

/// `c_h = sum_i lambda_i |mean - x_i|^2`, evaluated directly.
pub fn combination_cost(indices: &[usize], inst: &Instance) -> f64 {
    let mean = weighted_mean(indices, inst);
    indices
        .iter()
        .enumerate()
        .map(|(i, &j)| inst.lambdas[i] * sq_dist(&mean, inst.measures[i].point(j)))
        .sum()
}

/// `sum_i lambda_i |x_i|^2 - |mean|^2`, the same cost in closed form.
pub fn combination_cost_closed_form(indices: &[usize], inst: &Instance) -> f64 {
    let mean = weighted_mean(indices, inst);
    let second: f64 = indices
        .iter()
        .enumerate()
        .map(|(i, &j)| inst.lambdas[i] * inst.measures[i].point(j).iter().map(|x| x * x).sum::<f64>())
        .sum();
    second - mean.iter().map(|x| x * x).sum::<f64>()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Evaluates costs for a contiguous range of combination indices.
///
/// Coordinates are shifted to their centroid so the closed form loses less to
/// cancellation. An odometer over the tuple keeps per-level partial sums, so
/// each cost costs `O(d)` amortised.
pub struct CostEvaluator {
    sizes: Vec<usize>,
    n_o: Vec<u64>,
    dim: usize,
    /// `lambda_i * (x_ij - centroid)`, per measure, flattened.
    scaled: Vec<Vec<f64>>,
    /// `lambda_i * |x_ij - centroid|^2`.
    weighted_sq: Vec<Vec<f64>>,
}

impl CostEvaluator {
    pub fn new(inst: &Instance, strides: &Strides) -> Self {
        let dim = inst.dim();
        let mut centroid = vec![0.0; dim];
        let mut count = 0usize;
        for m in inst.measures() {
            for p in m.points() {
                for (c, x) in centroid.iter_mut().zip(p) {
                    *c += x;
                }
                count += 1;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= count as f64);

        let mut scaled = Vec::with_capacity(inst.n());
        let mut weighted_sq = Vec::with_capacity(inst.n());
        for (m, &lambda) in inst.measures().iter().zip(inst.lambdas()) {
            let mut s = Vec::with_capacity(m.len() * dim);
            let mut q = Vec::with_capacity(m.len());
            for p in m.points() {
                let mut norm = 0.0;
                for (x, c) in p.iter().zip(&centroid) {
                    let v = x - c;
                    s.push(lambda * v);
                    norm += v * v;
                }
                q.push(lambda * norm);
            }
            scaled.push(s);
            weighted_sq.push(q);
        }
        CostEvaluator {
            sizes: strides.sizes().to_vec(),
            n_o: strides.n_o().to_vec(),
            dim,
            scaled,
            weighted_sq,
        }
    }

    /// Writes `c_h` for `h = start .. start + out.len()` into `out`.
    pub fn fill(&self, start: u64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        let n = self.sizes.len();
        let d = self.dim;
        let mut idx: Vec<usize> =
            (0..n).map(|i| ((start / self.n_o[i]) % self.sizes[i] as u64) as usize).collect();
        // Partial sums through level i of the scaled coordinates and squared norms.
        let mut mean = vec![0.0; n * d];
        let mut second = vec![0.0; n];
        self.refresh(&idx, 0, &mut mean, &mut second);
        let last = n - 1;
        for slot in out.iter_mut() {
            let m = &mean[last * d..];
            let cost = second[last] - m.iter().map(|x| x * x).sum::<f64>();
            *slot = cost.max(0.0);

            let mut level = last;
            loop {
                idx[level] += 1;
                if idx[level] < self.sizes[level] {
                    break;
                }
                idx[level] = 0;
                if level == 0 {
                    break;
                }
                level -= 1;
            }
            self.refresh(&idx, level, &mut mean, &mut second);
        }
    }

    fn refresh(&self, idx: &[usize], from: usize, mean: &mut [f64], second: &mut [f64]) {
        let d = self.dim;
        for i in from..idx.len() {
            let j = idx[i];
            let x = &self.scaled[i][j * d..(j + 1) * d];
            let q = self.weighted_sq[i][j];
            if i == 0 {
                mean[..d].copy_from_slice(x);
                second[0] = q;
            } else {
                let (prev, cur) = mean.split_at_mut(i * d);
                let prev = &prev[(i - 1) * d..];
                for k in 0..d {
                    cur[k] = prev[k] + x[k];
                }
                second[i] = second[i - 1] + q;
            }
        }
    }

    /// Cost of a single combination through the same arithmetic as [`CostEvaluator::fill`].
    pub fn cost(&self, h: u64) -> f64 {
        let mut out = [0.0];
        self.fill(h, &mut out);
        out[0]
    }
}

/// Materialises the full cost vector `c` (length `N`).
pub fn cost_vector(inst: &Instance, strides: &Strides, exec: Execution) -> Vec<f64> {
    let mut c = vec![0.0; strides.total() as usize];
    fill_cost_vector(inst, strides, exec, &mut c);
    c
}

pub fn fill_cost_vector(inst: &Instance, strides: &Strides, exec: Execution, out: &mut [f64]) {
    let eval = CostEvaluator::new(inst, strides);
    let chunk = exec::chunk_len_for(1, exec::MIN_PARALLEL_CHUNK);
    exec::for_each_chunk_mut(exec, out, chunk, |k, slice| {
        eval.fill((k * chunk) as u64, slice);
    });
}

/// A nonnegative vector over combination indices, stored sparsely.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseMass {
    entries: BTreeMap<u64, f64>,
}

impl SparseMass {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `mass` at `h`; nonpositive amounts are ignored.
    pub fn add(&mut self, h: u64, mass: f64) {
        if mass > 0.0 {
            *self.entries.entry(h).or_insert(0.0) += mass;
        }
    }

    /// Drops entries at or below [`MASS_ZERO_TOL`].
    pub fn prune(&mut self) {
        self.entries.retain(|_, m| *m > MASS_ZERO_TOL);
    }

    pub fn get(&self, h: u64) -> f64 {
        self.entries.get(&h).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.entries.iter().map(|(&h, &m)| (h, m))
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.keys().copied()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// `sum_h mass(h) * c_h` with costs evaluated directly.
    pub fn cost(&self, inst: &Instance, strides: &Strides) -> f64 {
        let mut idx = vec![0; strides.n()];
        self.iter()
            .map(|(h, m)| {
                strides.tuple_into(h, &mut idx);
                m * combination_cost(&idx, inst)
            })
            .sum()
    }

    /// Row sums `(A w)`, laid out like the rows of the constraint matrix.
    pub fn marginals(&self, strides: &Strides) -> Vec<f64> {
        let mut sums = vec![0.0; strides.num_rows()];
        let mut rows = vec![0; strides.n()];
        for (h, m) in self.iter() {
            strides.column_support_into(h, &mut rows);
            for &r in &rows {
                sums[r] += m;
            }
        }
        sums
    }

    /// Largest `|(A w)_ij - d_ij|` over the rows of the listed measures.
    pub fn marginal_residual_for(&self, inst: &Instance, strides: &Strides, measures: &[usize]) -> f64 {
        let sums = self.marginals(strides);
        let offsets = strides.row_offsets();
        measures
            .iter()
            .flat_map(|&i| {
                let sums = &sums;
                inst.measure(i)
                    .masses()
                    .iter()
                    .enumerate()
                    .map(move |(j, d)| (sums[offsets[i] + j] - d).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|(A w)_ij - d_ij|` over all rows.
    pub fn marginal_residual(&self, inst: &Instance, strides: &Strides) -> f64 {
        let all: Vec<usize> = (0..inst.n()).collect();
        self.marginal_residual_for(inst, strides, &all)
    }

    /// The feasibility predicate `A w = d` at tolerance `tol`.
    pub fn is_feasible(&self, inst: &Instance, strides: &Strides, tol: f64) -> bool {
        self.iter().all(|(h, m)| h < strides.total() && m >= 0.0)
            && self.marginal_residual(inst, strides) <= tol
    }
}

impl FromIterator<(u64, f64)> for SparseMass {
    fn from_iter<I: IntoIterator<Item = (u64, f64)>>(iter: I) -> Self {
        let mut w = SparseMass::new();
        for (h, m) in iter {
            w.add(h, m);
        }
        w
    }
}
