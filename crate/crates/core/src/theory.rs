//! Numerical checks of the link between the DURA penalty and the
//! tensor nuclear 2-norm: global sums, balanced rescalings and rank-1
//! oracles on small real factorizations with diagonal relations.

use std::fmt;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{KgeError, Result};

/// Rank-`D` factorization of a 3-way tensor. Rows of `r` are relation
/// diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTriple {
    pub u: Array2<f64>,
    pub r: Array2<f64>,
    pub v: Array2<f64>,
}

/// Rank-`D` factorization of a 4-way tensor with diagonal timestamp factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorQuad {
    pub u: Array2<f64>,
    pub r: Array2<f64>,
    pub t: Array2<f64>,
    pub v: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalVariant {
    Dura1,
    Dura2,
}

fn col_sq_norms(m: &Array2<f64>) -> Array1<f64> {
    m.map(|x| x * x).sum_axis(Axis(0))
}

fn col_norms(m: &Array2<f64>) -> Array1<f64> {
    col_sq_norms(m).mapv(f64::sqrt)
}

fn check_cols(parts: &[(&str, &Array2<f64>)]) -> Result<usize> {
    let d = parts[0].1.ncols();
    for (name, m) in parts {
        if m.ncols() != d {
            return Err(KgeError::Dimension(format!(
                "factor {name} has {} columns, expected {d}",
                m.ncols()
            )));
        }
    }
    Ok(d)
}

fn scale_cols(m: &Array2<f64>, s: &[f64]) -> Array2<f64> {
    let mut out = m.clone();
    for (mut col, &a) in out.axis_iter_mut(Axis(1)).zip(s) {
        col.mapv_inplace(|x| x * a);
    }
    out
}

fn keep_cols(m: &Array2<f64>, keep: &[usize]) -> Array2<f64> {
    m.select(Axis(1), keep)
}

impl FactorTriple {
    pub fn new(u: Array2<f64>, r: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        check_cols(&[("u", &u), ("r", &r), ("v", &v)])?;
        if u.nrows() != v.nrows() {
            return Err(KgeError::Dimension("head and tail factors differ in entity count".into()));
        }
        Ok(FactorTriple { u, r, v })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn num_relations(&self) -> usize {
        self.r.nrows()
    }

    /// `X[i, j, k] = Σ_d u[i,d] r[j,d] v[k,d]`, flattened row-major.
    pub fn reconstruct(&self) -> Vec<f64> {
        let (e, nr, d) = (self.u.nrows(), self.r.nrows(), self.rank());
        let mut x = vec![0.0; e * nr * e];
        for i in 0..e {
            for j in 0..nr {
                for k in 0..e {
                    x[(i * nr + j) * e + k] = (0..d).map(|c| self.u[[i, c]] * self.r[[j, c]] * self.v[[k, c]]).sum();
                }
            }
        }
        x
    }

    /// `Σ_d ‖u_d‖ ‖r_d‖ ‖v_d‖` over columns.
    pub fn norm_product_sum(&self) -> f64 {
        let (nu, nr, nv) = (col_norms(&self.u), col_norms(&self.r), col_norms(&self.v));
        (0..self.rank()).map(|c| nu[c] * nr[c] * nv[c]).sum()
    }

    fn drop_zero_columns(&self) -> Self {
        let (nu, nr, nv) = (col_norms(&self.u), col_norms(&self.r), col_norms(&self.v));
        let keep: Vec<usize> = (0..self.rank())
            .filter(|&c| nu[c] > 0.0 && nr[c] > 0.0 && nv[c] > 0.0)
            .collect();
        FactorTriple {
            u: keep_cols(&self.u, &keep),
            r: keep_cols(&self.r, &keep),
            v: keep_cols(&self.v, &keep),
        }
    }
}

impl FactorQuad {
    pub fn new(u: Array2<f64>, r: Array2<f64>, t: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        check_cols(&[("u", &u), ("r", &r), ("t", &t), ("v", &v)])?;
        if u.nrows() != v.nrows() {
            return Err(KgeError::Dimension("head and tail factors differ in entity count".into()));
        }
        Ok(FactorQuad { u, r, t, v })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// `X[i, j, k, l] = Σ_d u[i,d] r[j,d] v[k,d] t[l,d]`, flattened row-major
    /// in `(i, j, k, l)` order.
    pub fn reconstruct(&self) -> Vec<f64> {
        let (e, nr, nt, d) = (self.u.nrows(), self.r.nrows(), self.t.nrows(), self.rank());
        let mut x = Vec::with_capacity(e * nr * e * nt);
        for i in 0..e {
            for j in 0..nr {
                for k in 0..e {
                    for l in 0..nt {
                        x.push(
                            (0..d)
                                .map(|c| self.u[[i, c]] * self.r[[j, c]] * self.v[[k, c]] * self.t[[l, c]])
                                .sum(),
                        );
                    }
                }
            }
        }
        x
    }

    pub fn norm_product_sum(&self) -> f64 {
        let (nu, nr, nt, nv) = (col_norms(&self.u), col_norms(&self.r), col_norms(&self.t), col_norms(&self.v));
        (0..self.rank()).map(|c| nu[c] * nr[c] * nt[c] * nv[c]).sum()
    }

    fn drop_zero_columns(&self) -> Self {
        let n = [col_norms(&self.u), col_norms(&self.r), col_norms(&self.t), col_norms(&self.v)];
        let keep: Vec<usize> = (0..self.rank()).filter(|&c| n.iter().all(|x| x[c] > 0.0)).collect();
        FactorQuad {
            u: keep_cols(&self.u, &keep),
            r: keep_cols(&self.r, &keep),
            t: keep_cols(&self.t, &keep),
            v: keep_cols(&self.v, &keep),
        }
    }
}

/// `Σ_j (‖U diag(r_j)‖² + ‖V‖² + ‖V diag(r_j)‖² + ‖U‖²)`, summed slice by slice.
pub fn global_dura_sum(f: &FactorTriple) -> f64 {
    let (uu, vv) = (sq_fro(&f.u), sq_fro(&f.v));
    f.r.rows()
        .into_iter()
        .map(|rj| {
            let rj = rj.to_vec();
            sq_fro(&scale_cols(&f.u, &rj)) + vv + sq_fro(&scale_cols(&f.v, &rj)) + uu
        })
        .sum()
}

/// The same sum regrouped by column:
/// `Σ_d (‖u_d‖²‖r_d‖² + |R|‖v_d‖² + ‖v_d‖²‖r_d‖² + |R|‖u_d‖²)`.
pub fn global_dura_sum_columnwise(f: &FactorTriple) -> f64 {
    let (u, r, v) = (col_sq_norms(&f.u), col_sq_norms(&f.r), col_sq_norms(&f.v));
    let nr = f.num_relations() as f64;
    (0..f.rank())
        .map(|c| u[c] * r[c] + nr * v[c] + v[c] * r[c] + nr * u[c])
        .sum()
}

fn sq_fro(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// Per-column rescaling that leaves the tensor unchanged and minimises the
/// global sum: `‖u_d‖ = ‖v_d‖ = √(P_d / √|R|)` and `‖r_d‖ = √|R|`, where
/// `P_d = ‖u_d‖‖r_d‖‖v_d‖`. Columns with a zero factor are dropped.
pub fn balanced_rescale(f: &FactorTriple) -> Result<FactorTriple> {
    let f = f.drop_zero_columns();
    let sr = (f.num_relations() as f64).sqrt();
    let (nu, nr, nv) = (col_norms(&f.u), col_norms(&f.r), col_norms(&f.v));
    let d = f.rank();
    let (mut au, mut ar, mut av) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for c in 0..d {
        let p = nu[c] * nr[c] * nv[c];
        if !(p.is_finite() && p > 0.0) {
            return Err(KgeError::Data(format!("column {c} has a degenerate norm product {p}")));
        }
        let a = (p / sr).sqrt();
        au[c] = a / nu[c];
        av[c] = a / nv[c];
        ar[c] = sr / nr[c];
    }
    Ok(FactorTriple {
        u: scale_cols(&f.u, &au),
        r: scale_cols(&f.r, &ar),
        v: scale_cols(&f.v, &av),
    })
}

/// `‖u‖‖r‖‖v‖(‖t‖)`: the nuclear 2-norm of a rank-1 tensor.
pub fn rank1_nuclear_oracle(u: &[f64], r: &[f64], v: &[f64], t: Option<&[f64]>) -> f64 {
    let n = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    n(u) * n(r) * n(v) * t.map_or(1.0, n)
}

/// Slice-by-slice global sum of a temporal variant over every
/// `(relation, timestamp)` pair.
pub fn global_temporal_sum(f: &FactorQuad, variant: TemporalVariant) -> f64 {
    let (uu, vv) = (sq_fro(&f.u), sq_fro(&f.v));
    let mut total = 0.0;
    for rj in f.r.rows() {
        for tk in f.t.rows() {
            total += match variant {
                TemporalVariant::Dura1 => {
                    let rt: Vec<f64> = rj.iter().zip(tk.iter()).map(|(a, b)| a * b).collect();
                    sq_fro(&scale_cols(&f.u, &rt)) + vv + sq_fro(&scale_cols(&f.v, &rt)) + uu
                }
                TemporalVariant::Dura2 => {
                    let (r, t) = (rj.to_vec(), tk.to_vec());
                    sq_fro(&scale_cols(&f.u, &r))
                        + sq_fro(&scale_cols(&f.v, &t))
                        + sq_fro(&scale_cols(&f.u, &t))
                        + sq_fro(&scale_cols(&f.v, &r))
                }
            };
        }
    }
    total
}

/// Column-grouped form of `global_temporal_sum`.
pub fn global_temporal_sum_columnwise(f: &FactorQuad, variant: TemporalVariant) -> f64 {
    let (u, r, t, v) = (col_sq_norms(&f.u), col_sq_norms(&f.r), col_sq_norms(&f.t), col_sq_norms(&f.v));
    let (nr, nt) = (f.r.nrows() as f64, f.t.nrows() as f64);
    (0..f.rank())
        .map(|c| match variant {
            TemporalVariant::Dura1 => u[c] * r[c] * t[c] + nr * nt * v[c] + v[c] * r[c] * t[c] + nr * nt * u[c],
            TemporalVariant::Dura2 => nt * u[c] * r[c] + nr * v[c] * t[c] + nr * u[c] * t[c] + nt * v[c] * r[c],
        })
        .sum()
}

/// Per-column rescaling for a temporal variant. Both set
/// `‖u_d‖ = ‖v_d‖ = √(P_d / √(|R||T|))`; the first splits `√(|R||T|)` evenly
/// between the relation and timestamp factors, the second sets
/// `‖r_d‖ = √|R|` and `‖t_d‖ = √|T|`.
pub fn temporal_rescale(f: &FactorQuad, variant: TemporalVariant) -> Result<FactorQuad> {
    let f = f.drop_zero_columns();
    let (nr_rows, nt_rows) = (f.r.nrows() as f64, f.t.nrows() as f64);
    let srt = (nr_rows * nt_rows).sqrt();
    let (nu, nr, nt, nv) = (col_norms(&f.u), col_norms(&f.r), col_norms(&f.t), col_norms(&f.v));
    let d = f.rank();
    let mut scales = vec![vec![0.0; d]; 4];
    for c in 0..d {
        let p = nu[c] * nr[c] * nt[c] * nv[c];
        if !(p.is_finite() && p > 0.0) {
            return Err(KgeError::Data(format!("column {c} has a degenerate norm product {p}")));
        }
        let a = (p / srt).sqrt();
        scales[0][c] = a / nu[c];
        scales[3][c] = a / nv[c];
        match variant {
            TemporalVariant::Dura1 => {
                let s = (srt / (nr[c] * nt[c])).sqrt();
                scales[1][c] = s;
                scales[2][c] = s;
            }
            TemporalVariant::Dura2 => {
                scales[1][c] = nr_rows.sqrt() / nr[c];
                scales[2][c] = nt_rows.sqrt() / nt[c];
            }
        }
    }
    Ok(FactorQuad {
        u: scale_cols(&f.u, &scales[0]),
        r: scale_cols(&f.r, &scales[1]),
        t: scale_cols(&f.t, &scales[2]),
        v: scale_cols(&f.v, &scales[3]),
    })
}

/// Largest relative violation of the per-column balance conditions that make
/// the global sum meet its lower bound.
pub fn static_balance_deviation(f: &FactorTriple) -> f64 {
    let sr = (f.num_relations() as f64).sqrt();
    let (nu, nr, nv) = (col_norms(&f.u), col_norms(&f.r), col_norms(&f.v));
    (0..f.rank())
        .flat_map(|c| [rel(nu[c] * nr[c], sr * nv[c]), rel(nv[c] * nr[c], sr * nu[c])])
        .fold(0.0, f64::max)
}

pub fn temporal_balance_deviation(f: &FactorQuad, variant: TemporalVariant) -> f64 {
    let (sr, st) = ((f.r.nrows() as f64).sqrt(), (f.t.nrows() as f64).sqrt());
    let (nu, nr, nt, nv) = (col_norms(&f.u), col_norms(&f.r), col_norms(&f.t), col_norms(&f.v));
    (0..f.rank())
        .flat_map(|c| match variant {
            TemporalVariant::Dura1 => [
                rel(nu[c] * nr[c] * nt[c], sr * st * nv[c]),
                rel(nv[c] * nr[c] * nt[c], sr * st * nu[c]),
            ],
            TemporalVariant::Dura2 => [
                rel(st * nu[c] * nr[c], sr * nv[c] * nt[c]),
                rel(st * nv[c] * nr[c], sr * nu[c] * nt[c]),
            ],
        })
        .fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Outcome of the temporal checks on one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalBalance {
    pub reconstruction: f64,
    pub balance: f64,
    /// Relative gap between the rescaled global sum and `4√(|R||T|) Σ P_d`.
    pub bound_gap: f64,
    pub sum_before: f64,
    pub sum_after: f64,
}

pub fn verify_temporal_balance(f: &FactorQuad, variant: TemporalVariant) -> Result<TemporalBalance> {
    let g = temporal_rescale(f, variant)?;
    let srt = ((f.r.nrows() * f.t.nrows()) as f64).sqrt();
    let sum_after = global_temporal_sum(&g, variant);
    Ok(TemporalBalance {
        reconstruction: max_abs_diff(&f.reconstruct(), &g.reconstruct()),
        balance: temporal_balance_deviation(&g, variant),
        bound_gap: rel(sum_after, 4.0 * srt * g.norm_product_sum()),
        sum_before: global_temporal_sum(f, variant),
        sum_after,
    })
}

/// One line of the verification suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub seeds: u64,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<34} seeds={:<4} max_dev={:<10.3e} tol={:.0e} {}",
            self.name,
            self.seeds,
            self.max_deviation,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

pub const SUITE_TOLERANCE: f64 = 1e-9;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

pub fn random_triple(seed: u64, entities: usize, relations: usize, rank: usize) -> FactorTriple {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FactorTriple {
        u: gaussian(&mut rng, entities, rank),
        r: gaussian(&mut rng, relations, rank),
        v: gaussian(&mut rng, entities, rank),
    }
}

pub fn random_quad(seed: u64, entities: usize, relations: usize, timestamps: usize, rank: usize) -> FactorQuad {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FactorQuad {
        u: gaussian(&mut rng, entities, rank),
        r: gaussian(&mut rng, relations, rank),
        t: gaussian(&mut rng, timestamps, rank),
        v: gaussian(&mut rng, entities, rank),
    }
}

/// Deviations of every check on one seed, in suite order.
fn seed_deviations(seed: u64) -> Result<Vec<f64>> {
    let f = random_triple(seed, 3, 4, 1 + (seed % 4) as usize);
    let g = balanced_rescale(&f)?;
    let sr = (f.num_relations() as f64).sqrt();
    let before = global_dura_sum(&f);
    let after = global_dura_sum(&g);
    let bound = 4.0 * sr * f.norm_product_sum();

    let one = random_triple(seed ^ 0x5eed, 3, 4, 1);
    let one_min = global_dura_sum(&balanced_rescale(&one)?);
    let col = |m: &Array2<f64>| m.column(0).to_vec();
    let oracle = rank1_nuclear_oracle(&col(&one.u), &col(&one.r), &col(&one.v), None);

    let q = random_quad(seed, 3, 3, 2, 1 + (seed % 3) as usize);
    let t1 = verify_temporal_balance(&q, TemporalVariant::Dura1)?;
    let t2 = verify_temporal_balance(&q, TemporalVariant::Dura2)?;
    let q1 = random_quad(seed ^ 0x5eed, 2, 3, 2, 1);
    let q1_min = global_temporal_sum(&temporal_rescale(&q1, TemporalVariant::Dura1)?, TemporalVariant::Dura1);
    let q_oracle = rank1_nuclear_oracle(&col(&q1.u), &col(&q1.r), &col(&q1.v), Some(&col(&q1.t)));
    let srt = ((q1.r.nrows() * q1.t.nrows()) as f64).sqrt();

    Ok(vec![
        rel(before, global_dura_sum_columnwise(&f)),
        max_abs_diff(&f.reconstruct(), &g.reconstruct()),
        static_balance_deviation(&g),
        rel(after, 4.0 * sr * g.norm_product_sum()),
        ((bound - before) / before.max(1.0)).max(0.0),
        ((after - before) / before.max(1.0)).max(0.0),
        rel(one_min, 4.0 * sr * oracle),
        t1.reconstruction,
        t1.balance,
        t1.bound_gap,
        ((t1.sum_after - t1.sum_before) / t1.sum_before.max(1.0)).max(0.0),
        t2.reconstruction,
        t2.balance,
        t2.bound_gap,
        ((t2.sum_after - t2.sum_before) / t2.sum_before.max(1.0)).max(0.0),
        rel(global_temporal_sum(&q, TemporalVariant::Dura1), global_temporal_sum_columnwise(&q, TemporalVariant::Dura1)),
        rel(global_temporal_sum(&q, TemporalVariant::Dura2), global_temporal_sum_columnwise(&q, TemporalVariant::Dura2)),
        rel(q1_min, 4.0 * srt * q_oracle),
    ])
}

pub const SUITE_CHECKS: [&str; 18] = [
    "static: slice sum = column sum",
    "static: reconstruction invariance",
    "static: per-column balance",
    "static: rescaled sum = bound",
    "static: sum >= bound",
    "static: rescaling never increases",
    "static: rank-1 min = oracle",
    "dura1: reconstruction invariance",
    "dura1: per-column balance",
    "dura1: rescaled sum = bound",
    "dura1: rescaling never increases",
    "dura2: reconstruction invariance",
    "dura2: per-column balance",
    "dura2: rescaled sum = bound",
    "dura2: rescaling never increases",
    "dura1: slice sum = column sum",
    "dura2: slice sum = column sum",
    "dura1: rank-1 min = oracle",
];

/// Runs every check on seeds `0..seeds` and reports the worst deviation.
pub fn run_suite(seeds: u64) -> Result<Vec<CheckReport>> {
    let per_seed: Vec<Vec<f64>> = (0..seeds).into_par_iter().map(seed_deviations).collect::<Result<_>>()?;
    Ok(SUITE_CHECKS
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let max_deviation = per_seed.iter().map(|d| d[i]).fold(0.0, f64::max);
            CheckReport {
                name,
                seeds,
                max_deviation,
                tolerance: SUITE_TOLERANCE,
                passed: max_deviation <= SUITE_TOLERANCE,
            }
        })
        .collect())
}
