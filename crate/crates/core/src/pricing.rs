//! The pricing problem over the constraints of two measures.
//!
//! The pair is permuted to the front of the instance, so combination `h`
//! decomposes as `h = u * n_d + r` where `u = j_a * |P_b| + j_b` is the unique
//! pair-row pattern and `r` indexes its `n_d` duplicates. Minimising the
//! reduced cost over each contiguous duplicate range gives the best-cost vector
//! `b`, and the pricing LP over unique columns is a `|P_a| x |P_b|`
//! transportation problem with costs `b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{fill_cost_vector, Instance, SparseMass, Strides};
use crate::transport::{solve_transportation, TransportPlan, TransportationProblem};

/// Which two measures go to the pricing problem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairVariant {
    /// The first two input measures.
    Any,
    /// The two largest supports; ties go to the earlier measure.
    #[default]
    Large,
    /// The two smallest supports; ties go to the earlier measure.
    Small,
}

impl std::str::FromStr for PairVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any" => Ok(PairVariant::Any),
            "large" => Ok(PairVariant::Large),
            "small" => Ok(PairVariant::Small),
            other => Err(Error::Parse(format!("unknown pair variant '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    /// Input positions of the pricing measures, increasing.
    pub pair: (usize, usize),
    /// `perm[k]` is the input measure placed at position `k`; the pair comes first.
    pub perm: Vec<usize>,
    pub n_u: u64,
    pub n_d: u64,
}

impl Partition {
    /// Number of master measures.
    pub fn master_measures(&self) -> usize {
        self.perm.len() - 2
    }
}

pub fn choose_partition(inst: &Instance, variant: PairVariant) -> Result<Partition> {
    let n = inst.n();
    if n < 3 {
        return Err(Error::Contract(format!("pricing needs at least 3 measures, got {n}")));
    }
    let sizes = inst.sizes();
    let mut order: Vec<usize> = (0..n).collect();
    match variant {
        PairVariant::Any => {}
        PairVariant::Large => order.sort_by_key(|&i| (std::cmp::Reverse(sizes[i]), i)),
        PairVariant::Small => order.sort_by_key(|&i| (sizes[i], i)),
    }
    let (a, b) = (order[0].min(order[1]), order[0].max(order[1]));
    let mut perm = vec![a, b];
    perm.extend((0..n).filter(|&i| i != a && i != b));
    let total = inst.strides()?.total();
    let n_u = (sizes[a] * sizes[b]) as u64;
    Ok(Partition { pair: (a, b), perm, n_u, n_d: total / n_u })
}

/// Length cap of the per-update table of summed dual changes.
const DELTA_TABLE_LEN: usize = 1 << 14;

/// Heap bytes that [`PricingState::new`] allocates for `N` combinations and
/// `n_u` unique columns.
pub fn pricing_bytes(total: u64, n_u: u64) -> u64 {
    let reals = std::mem::size_of::<f64>() as u64;
    let index = std::mem::size_of::<u64>() as u64;
    2 * total * reals + n_u * (reals + index)
}

/// Reduced costs over all combinations of the permuted instance and their
/// compression to unique columns.
#[derive(Clone, Debug)]
pub struct PricingState {
    strides: Strides,
    masses: (Vec<f64>, Vec<f64>),
    costs: Vec<f64>,
    /// `a = c - A_m^T y`, length `N`.
    a: Vec<f64>,
    /// Best cost per unique column.
    b: Vec<f64>,
    /// Argmin full index per unique column.
    best_index: Vec<u64>,
    /// Constant term of the pricing objective.
    pub sigma: f64,
    n_d: u64,
    exec: Execution,
}

impl PricingState {
    /// Builds `c` and `a = c` for the permuted instance (pair at positions 0, 1).
    pub fn new(pinst: &Instance, partition: &Partition, memory_cap: u64, exec: Execution) -> Result<Self> {
        let strides = pinst.strides()?;
        let needed = pricing_bytes(strides.total(), partition.n_u);
        if needed > memory_cap {
            return Err(Error::Capacity {
                what: format!("reduced-cost storage for N = {}", strides.total()),
                needed,
                limit: memory_cap,
            });
        }
        let n = strides.total() as usize;
        let mut costs = vec![0.0; n];
        fill_cost_vector(pinst, &strides, exec, &mut costs);
        let a = costs.clone();
        let n_u = partition.n_u as usize;
        let mut state = PricingState {
            masses: (pinst.measure(0).masses().to_vec(), pinst.measure(1).masses().to_vec()),
            strides,
            costs,
            a,
            b: vec![0.0; n_u],
            best_index: vec![0; n_u],
            sigma: 0.0,
            n_d: partition.n_d,
            exec,
        };
        state.best_costs();
        Ok(state)
    }

    pub fn strides(&self) -> &Strides {
        &self.strides
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn reduced_costs(&self) -> &[f64] {
        &self.a
    }

    pub fn best(&self) -> &[f64] {
        &self.b
    }

    pub fn best_index(&self) -> &[u64] {
        &self.best_index
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn set_execution(&mut self, exec: Execution) {
        self.exec = exec;
    }

    /// Number of master rows, `sum_{i >= 2} |P_i|`.
    pub fn master_rows(&self) -> usize {
        let off = self.strides.row_offsets();
        off[self.strides.n()] - off[2.min(self.strides.n())]
    }

    pub fn heap_bytes(&self) -> u64 {
        pricing_bytes(self.strides.total(), self.b.len() as u64)
    }

    /// Applies a change of master duals from `y_old` to `y_new` in one pass
    /// over `a`. Master positions are the innermost strides, so the summed
    /// change over a trailing block of positions is tabulated once and each
    /// block of `a` subtracts the table plus a constant from the remaining
    /// master positions. Entries whose rows did not move are left untouched.
    pub fn update_reduced_costs(&mut self, y_old: &[f64], y_new: &[f64]) {
        assert_eq!(y_old.len(), self.master_rows());
        assert_eq!(y_new.len(), self.master_rows());
        let n = self.strides.n();
        let sizes = self.strides.sizes();
        let n_o = self.strides.n_o();
        let off = self.strides.row_offsets();
        let base = off[2];
        let delta: Vec<f64> = y_new.iter().zip(y_old).map(|(a, b)| a - b).collect();
        let moved: Vec<usize> = (2..n)
            .filter(|&pos| delta[off[pos] - base..off[pos + 1] - base].iter().any(|&d| d != 0.0))
            .collect();
        if moved.is_empty() {
            return;
        }

        let mut split = n;
        let mut block = 1usize;
        while split > 2 && block * sizes[split - 1] <= DELTA_TABLE_LEN {
            split -= 1;
            block *= sizes[split];
        }
        let mut table = vec![0.0; block];
        for &pos in moved.iter().filter(|&&p| p >= split) {
            let d = &delta[off[pos] - base..off[pos + 1] - base];
            let run = n_o[pos] as usize;
            for (k, t) in table.iter_mut().enumerate() {
                *t += d[(k / run) % sizes[pos]];
            }
        }
        let outer: Vec<(u64, usize, &[f64])> = moved
            .iter()
            .filter(|&&p| p < split)
            .map(|&pos| (n_o[pos], sizes[pos], &delta[off[pos] - base..off[pos + 1] - base]))
            .collect();
        let table_moves = table.iter().any(|&t| t != 0.0);

        let chunk = exec::chunk_len_for(block, exec::MIN_PARALLEL_CHUNK);
        exec::for_each_chunk_mut(self.exec, &mut self.a, chunk, |ci, part| {
            let start = (ci * chunk) as u64;
            for (bi, blk) in part.chunks_exact_mut(block).enumerate() {
                let h0 = start + (bi * block) as u64;
                let c: f64 = outer.iter().map(|&(run, size, d)| d[((h0 / run) % size as u64) as usize]).sum();
                if c != 0.0 {
                    for (x, t) in blk.iter_mut().zip(&table) {
                        *x -= t + c;
                    }
                } else if table_moves {
                    for (x, t) in blk.iter_mut().zip(&table) {
                        *x -= t;
                    }
                }
            }
        });
    }

    /// Rebuilds `a = c - A_m^T y` from scratch.
    pub fn recompute_reduced_costs(&mut self, y: &[f64]) {
        assert_eq!(y.len(), self.master_rows());
        self.a.copy_from_slice(&self.costs);
        let zeros = vec![0.0; y.len()];
        self.update_reduced_costs(&zeros, y);
    }

    /// Range minima of `a` over each unique column's duplicates, lowest index on ties.
    pub fn best_costs(&mut self) {
        let n_d = self.n_d as usize;
        let mins = exec::map_chunks(self.exec, &self.a, n_d, |u, range| {
            let (mut arg, mut best) = (0usize, range[0]);
            for (k, &v) in range.iter().enumerate().skip(1) {
                if v < best {
                    best = v;
                    arg = k;
                }
            }
            (best, (u * n_d + arg) as u64)
        });
        for (u, (best, arg)) in mins.into_iter().enumerate() {
            self.b[u] = best;
            self.best_index[u] = arg;
        }
    }

    /// Solves the transportation problem over unique columns and returns its
    /// objective plus `sigma`.
    pub fn solve_pricing(&self) -> Result<(f64, TransportPlan)> {
        let tp = TransportationProblem::new(self.masses.0.clone(), self.masses.1.clone(), self.b.clone())?;
        let plan = solve_transportation(&tp)?;
        Ok((plan.objective + self.sigma, plan))
    }

    /// Maps the transport flows back to full combination indices.
    pub fn expand_column(&self, plan: &TransportPlan) -> SparseMass {
        let k = self.masses.1.len();
        let mut p = SparseMass::new();
        for &(ja, jb, q) in &plan.flows {
            p.add(self.best_index[ja * k + jb], q);
        }
        p.prune();
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DiscreteMeasure;

    fn line_measure(xs: &[f64]) -> DiscreteMeasure {
        let m = 1.0 / xs.len() as f64;
        DiscreteMeasure::new(xs.iter().map(|&x| vec![x, 0.5 * x]).collect(), vec![m; xs.len()]).unwrap()
    }

    fn sized(sizes: &[usize]) -> Instance {
        Instance::uniform(
            sizes
                .iter()
                .enumerate()
                .map(|(i, &s)| line_measure(&(0..s).map(|j| (j * 7 + i * 3) as f64 / 10.0).collect::<Vec<_>>()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn partition_variants() {
        let inst = sized(&[2, 3, 4, 5]);
        let p = choose_partition(&inst, PairVariant::Large).unwrap();
        assert_eq!(p.pair, (2, 3));
        assert_eq!(p.perm, vec![2, 3, 0, 1]);
        assert_eq!((p.n_u, p.n_d), (20, 6));
        assert_eq!(choose_partition(&inst, PairVariant::Small).unwrap().pair, (0, 1));
        assert_eq!(choose_partition(&inst, PairVariant::Any).unwrap().pair, (0, 1));
        assert_eq!(choose_partition(&sized(&[7, 7, 2]), PairVariant::Large).unwrap().pair, (0, 1));
        assert_eq!(choose_partition(&sized(&[3, 2, 2, 2]), PairVariant::Small).unwrap().pair, (1, 2));
        assert!(choose_partition(&sized(&[3, 2]), PairVariant::Any).is_err());
    }

    fn state_for(sizes: &[usize]) -> PricingState {
        let inst = sized(sizes);
        let part = choose_partition(&inst, PairVariant::Any).unwrap();
        PricingState::new(&inst.permuted(&part.perm), &part, u64::MAX, Execution::Sequential).unwrap()
    }

    #[test]
    fn example_layout_sizes() {
        let s = state_for(&[2, 3, 2, 3]);
        assert_eq!(s.reduced_costs().len(), 36);
        assert_eq!(s.best().len(), 6);
        assert_eq!(s.master_rows(), 5);
        let min_a = s.reduced_costs().iter().cloned().fold(f64::INFINITY, f64::min);
        let min_b = s.best().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min_a, min_b);
    }

    #[test]
    fn range_minima() {
        let mut s = state_for(&[1, 2, 3]);
        s.a = vec![3.0, 1.0, 2.0, 5.0, 4.0, 6.0];
        s.best_costs();
        assert_eq!(s.best(), &[1.0, 4.0]);
        assert_eq!(s.best_index(), &[1, 4]);

        // Ties keep the lowest index.
        s.a = vec![2.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        s.best_costs();
        assert_eq!(s.best_index(), &[1, 3]);
    }

    #[test]
    fn no_duplicates_means_identity() {
        let mut s = state_for(&[2, 3, 1]);
        s.best_costs();
        assert_eq!(s.best(), s.reduced_costs());
        assert_eq!(s.best_index(), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn unchanged_duals_leave_costs_alone() {
        let mut s = state_for(&[2, 3, 2, 3]);
        let before = s.reduced_costs().to_vec();
        let y = vec![0.3, -0.2, 0.1, 0.0, 0.5];
        s.update_reduced_costs(&y, &y);
        assert_eq!(s.reduced_costs(), before.as_slice());
    }

    #[test]
    fn single_row_delta_touches_n_over_size_entries() {
        let mut s = state_for(&[2, 3, 2, 3]);
        let before = s.reduced_costs().to_vec();
        // Master rows: measure at position 2 (2 points), then position 3 (3 points).
        let y_old = vec![0.0; 5];
        let mut y_new = y_old.clone();
        y_new[3] = 0.75;
        s.update_reduced_costs(&y_old, &y_new);
        let changed: Vec<usize> = (0..36).filter(|&h| s.reduced_costs()[h] != before[h]).collect();
        assert_eq!(changed.len(), 36 / 3);
        for &h in &changed {
            assert_eq!(s.strides().component(h as u64, 3), 1);
            assert!((before[h] - s.reduced_costs()[h] - 0.75).abs() < 1e-15);
        }
    }

    /// `a` rebuilt column by column from the support of each combination.
    fn naive_reduced_costs(s: &PricingState, y: &[f64]) -> Vec<f64> {
        let base = s.strides().row_offsets()[2];
        (0..s.strides().total())
            .map(|h| {
                let rows = s.strides().column_support(h).unwrap();
                s.costs()[h as usize] - rows[2..].iter().map(|&r| y[r - base]).sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn incremental_updates_track_a_fresh_build() {
        for sizes in [&[2, 3, 2, 3][..], &[3, 2, 4, 1, 5, 2], &[2, 2, 3, 3, 3, 3, 3, 3, 3, 3, 3]] {
            let mut s = state_for(sizes);
            let m = s.master_rows();
            let mut y = vec![0.0; m];
            for step in 0..6 {
                let mut next = y.clone();
                for (r, v) in next.iter_mut().enumerate() {
                    if (r + step) % 3 != 0 {
                        *v = ((r * 31 + step * 17) % 13) as f64 / 7.0 - 0.9;
                    }
                }
                s.update_reduced_costs(&y, &next);
                y = next;
                let expect = naive_reduced_costs(&s, &y);
                for (a, b) in s.reduced_costs().iter().zip(&expect) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sigma_shifts_the_pricing_objective() {
        let mut s = state_for(&[2, 2, 2]);
        s.a.iter_mut().for_each(|x| *x = 0.0);
        s.best_costs();
        let (obj, plan) = s.solve_pricing().unwrap();
        assert_eq!(obj, 0.0);
        s.sigma = -0.25;
        assert_eq!(s.solve_pricing().unwrap().0, -0.25);
        let p = s.expand_column(&plan);
        assert!((p.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn capacity_is_checked_before_allocation() {
        let inst = sized(&[4, 4, 4]);
        let part = choose_partition(&inst, PairVariant::Any).unwrap();
        let err = PricingState::new(&inst.permuted(&part.perm), &part, 100, Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
    }
}
