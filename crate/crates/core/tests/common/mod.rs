//! Shared generators and independent oracles for the integration tests.
#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use barycenter_cg::{DiscreteMeasure, Instance};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Masses bounded away from zero and normalised.
pub fn random_masses(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.2 + rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

pub fn random_measure(rng: &mut ChaCha8Rng, k: usize, dim: usize, uniform: bool) -> DiscreteMeasure {
    let points = (0..k).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect();
    let masses = if uniform { vec![1.0 / k as f64; k] } else { random_masses(rng, k) };
    DiscreteMeasure::new(points, masses).unwrap()
}

/// Random points and masses; weights uniform unless `random_weights`.
pub fn random_instance(rng: &mut ChaCha8Rng, sizes: &[usize], dim: usize, random_weights: bool) -> Instance {
    let uniform = rng.gen_bool(0.3);
    let measures: Vec<_> = sizes.iter().map(|&k| random_measure(rng, k, dim, uniform)).collect();
    if random_weights {
        let w = random_masses(rng, sizes.len());
        Instance::new(measures, w).unwrap()
    } else {
        Instance::uniform(measures).unwrap()
    }
}

/// `n` sizes in `1..=max_size` whose product stays within `max_total`.
pub fn random_sizes(rng: &mut ChaCha8Rng, n: usize, max_size: usize, max_total: u64) -> Vec<usize> {
    loop {
        let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=max_size)).collect();
        if sizes.iter().map(|&s| s as u64).product::<u64>() <= max_total {
            return sizes;
        }
    }
}

/// Dense 0/1 matrix of the barycenter LP, rows by measure then point.
pub fn dense_matrix(inst: &Instance) -> Vec<Vec<f64>> {
    let strides = inst.strides().unwrap();
    let n_cols = strides.total() as usize;
    let mut a = vec![vec![0.0; n_cols]; strides.num_rows()];
    for h in 0..n_cols {
        for r in strides.column_support(h as u64).unwrap() {
            a[r][h] = 1.0;
        }
    }
    a
}

/// Numerical rank by Gaussian elimination with partial pivoting.
pub fn rank(rows: &[Vec<f64>]) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let cols = m.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())) else {
            break;
        };
        if m[p][c].abs() < 1e-9 {
            continue;
        }
        m.swap(r, p);
        for q in r + 1..m.len() {
            let f = m[q][c] / m[r][c];
            if f != 0.0 {
                for k in c..cols {
                    m[q][k] -= f * m[r][k];
                }
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

/// Rank of the columns of `a` listed in `cols`.
pub fn column_rank(a: &[Vec<f64>], cols: &[usize]) -> usize {
    let sub: Vec<Vec<f64>> = a.iter().map(|row| cols.iter().map(|&j| row[j]).collect()).collect();
    rank(&sub)
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// Minimum of `c^T x` over the basic feasible solutions of `A x = b, x >= 0`,
/// by trying every column subset of size `rank(A)`. `None` when infeasible.
pub fn vertex_enumeration(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let k = c.len();
    let r = rank(a);
    let mut best: Option<f64> = None;
    let mut subset: Vec<usize> = (0..r).collect();
    loop {
        if let Some(x) = solve_subset(a, b, &subset) {
            if x.iter().all(|&v| v >= -1e-10) {
                let obj: f64 = subset.iter().zip(&x).map(|(&j, v)| c[j] * v).sum();
                best = Some(best.map_or(obj, |o| o.min(obj)));
            }
        }
        // Next combination in lexicographic order.
        let mut i = r;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < k - r + i {
                subset[i] += 1;
                for q in i + 1..r {
                    subset[q] = subset[q - 1] + 1;
                }
                break;
            }
        }
        if r == 0 {
            return best;
        }
    }
}

/// Unique solution of `A_S x = b` when the columns `S` are independent and
/// the system is consistent.
fn solve_subset(a: &[Vec<f64>], b: &[f64], s: &[usize]) -> Option<Vec<f64>> {
    let cols = s.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| s.iter().map(|&j| row[j]).chain(std::iter::once(bi)).collect())
        .collect();
    let mut r = 0;
    for c in 0..cols {
        let p = (r..m.len()).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))?;
        if m[p][c].abs() < 1e-10 {
            return None;
        }
        m.swap(r, p);
        let pivot = m[r][c];
        for v in m[r].iter_mut() {
            *v /= pivot;
        }
        for q in 0..m.len() {
            if q != r {
                let f = m[q][c];
                if f != 0.0 {
                    for k in 0..=cols {
                        m[q][k] -= f * m[r][k];
                    }
                }
            }
        }
        r += 1;
    }
    if m[r..].iter().any(|row| row[cols].abs() > 1e-9) {
        return None;
    }
    Some((0..cols).map(|c| m[c][cols]).collect())
}

/// Exact optimum of `min c^T x, A x = b, x >= 0` over the rationals by a
/// two-phase tableau simplex with Bland's rule. `None` when infeasible or
/// unbounded.
pub fn rational_lp(a: &[Vec<i64>], b: &[i64], c: &[i64]) -> Option<BigRational> {
    let q = |v: i64| BigRational::from_integer(v.into());
    let m = a.len();
    let k = c.len();
    // Columns: k structural, m artificial, then the right-hand side.
    let width = k + m + 1;
    let mut t: Vec<Vec<BigRational>> = (0..m)
        .map(|r| {
            let sign = if b[r] < 0 { -1 } else { 1 };
            let mut row: Vec<BigRational> = a[r].iter().map(|&v| q(v * sign)).collect();
            row.extend((0..m).map(|s| if s == r { BigRational::one() } else { BigRational::zero() }));
            row.push(q(b[r] * sign));
            row
        })
        .collect();
    let mut basis: Vec<usize> = (k..k + m).collect();

    fn run(t: &mut [Vec<BigRational>], basis: &mut [usize], cost: &[BigRational], allowed: usize) -> bool {
        let m = t.len();
        let width = t[0].len();
        loop {
            // Reduced costs d_j = c_j - c_B^T column_j.
            let entering = (0..allowed).find(|&j| {
                if basis.contains(&j) {
                    return false;
                }
                let mut d = cost[j].clone();
                for r in 0..m {
                    d -= &cost[basis[r]] * &t[r][j];
                }
                d.is_negative()
            });
            let Some(j) = entering else { return true };
            let mut leave: Option<(usize, BigRational)> = None;
            for r in 0..m {
                if t[r][j].is_positive() {
                    let ratio = &t[r][width - 1] / &t[r][j];
                    let better = match &leave {
                        None => true,
                        Some((p, best)) => ratio < *best || (ratio == *best && basis[r] < basis[*p]),
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((p, _)) = leave else { return false };
            let pv = t[p][j].clone();
            for v in t[p].iter_mut() {
                *v /= &pv;
            }
            for r in 0..m {
                if r != p && !t[r][j].is_zero() {
                    let f = t[r][j].clone();
                    for col in 0..width {
                        let delta = &f * &t[p][col];
                        t[r][col] -= delta;
                    }
                }
            }
            basis[p] = j;
        }
    }

    let phase1: Vec<BigRational> = (0..k + m).map(|j| if j < k { q(0) } else { q(1) }).collect();
    run(&mut t, &mut basis, &phase1, k + m);
    let infeasibility: BigRational =
        (0..m).filter(|&r| basis[r] >= k).map(|r| t[r][width - 1].clone()).fold(q(0), |a, v| a + v);
    if infeasibility.is_positive() {
        return None;
    }
    // Drive zero-level artificials out where possible.
    for r in 0..m {
        if basis[r] >= k {
            if let Some(j) = (0..k).find(|&j| !t[r][j].is_zero() && !basis.contains(&j)) {
                let pv = t[r][j].clone();
                for v in t[r].iter_mut() {
                    *v /= &pv;
                }
                for s in 0..m {
                    if s != r && !t[s][j].is_zero() {
                        let f = t[s][j].clone();
                        for col in 0..width {
                            let delta = &f * &t[r][col];
                            t[s][col] -= delta;
                        }
                    }
                }
                basis[r] = j;
            }
        }
    }
    // Remaining artificials sit on redundant rows; they cost nothing in phase II
    // and only structural columns may enter.
    let phase2: Vec<BigRational> = (0..k + m).map(|j| if j < k { q(c[j]) } else { q(0) }).collect();
    if !run(&mut t, &mut basis, &phase2, k) {
        return None;
    }
    Some((0..m).filter(|&r| basis[r] < k).map(|r| q(c[basis[r]]) * &t[r][width - 1]).fold(q(0), |a, v| a + v))
}

pub fn to_f64(x: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap()
}

/// The 10 x 36 constraint matrix for sizes `[2, 3, 2, 3]`, row by row.
pub const EXAMPLE_A: [&str; 10] = [
    "111111111111111111000000000000000000",
    "000000000000000000111111111111111111",
    "111111000000000000111111000000000000",
    "000000111111000000000000111111000000",
    "000000000000111111000000000000111111",
    "111000111000111000111000111000111000",
    "000111000111000111000111000111000111",
    "100100100100100100100100100100100100",
    "010010010010010010010010010010010010",
    "001001001001001001001001001001001001",
];

/// Unique columns of the first two measures' rows for the same sizes.
pub const EXAMPLE_UP: [&str; 5] = ["111000", "000111", "100100", "010010", "001001"];

/// Relative agreement `|a - b| <= tol (1 + |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}
