//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use covdet::linalg::{CMat, RMat};
use covdet::lp::{FeasibilityProblem, VarSign};
use covdet::rng;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Q = BigRational;

fn q(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

/// Exact solution of `A_S y = b` when the columns of `A_S` are independent
/// and the system is consistent.
fn solve_exact(cols: &[Vec<Q>], b: &[Q]) -> Option<Vec<Q>> {
    let m = b.len();
    let k = cols.len();
    let mut aug: Vec<Vec<Q>> = (0..m).map(|i| cols.iter().map(|c| c[i].clone()).chain([b[i].clone()]).collect()).collect();
    let mut row = 0;
    for c in 0..k {
        let p = (row..m).find(|&r| !aug[r][c].is_zero())?;
        aug.swap(row, p);
        let piv = aug[row][c].clone();
        for v in aug[row].iter_mut() {
            *v = &*v / &piv;
        }
        for r in 0..m {
            if r != row && !aug[r][c].is_zero() {
                let f = aug[r][c].clone();
                for j in 0..=k {
                    let d = &f * &aug[row][j];
                    aug[r][j] = &aug[r][j] - d;
                }
            }
        }
        row += 1;
    }
    if aug[row..].iter().any(|r| !r[k].is_zero()) {
        return None;
    }
    Some((0..k).map(|c| aug[c][k].clone()).collect())
}

fn subsets(n: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == size {
        out.push(cur.clone());
        return;
    }
    for j in start..n {
        cur.push(j);
        subsets(n, size, j + 1, cur, out);
        cur.pop();
    }
}

/// Feasibility by enumerating basic solutions of the standard form.
pub fn oracle(a: &[Vec<i64>], b: &[i64], sign: &[VarSign]) -> bool {
    let m = b.len();
    let mut std_cols: Vec<Vec<Q>> = Vec::new();
    for (j, s) in sign.iter().enumerate() {
        let col: Vec<Q> = (0..m).map(|i| q(a[i][j])).collect();
        let neg: Vec<Q> = col.iter().map(|v| -v).collect();
        match s {
            VarSign::NonNeg => std_cols.push(col),
            VarSign::NonPos => std_cols.push(neg),
            VarSign::Free => {
                std_cols.push(col);
                std_cols.push(neg);
            }
        }
    }
    let bq: Vec<Q> = b.iter().map(|&v| q(v)).collect();
    if bq.iter().all(Zero::is_zero) {
        return true;
    }
    for size in 1..=m.min(std_cols.len()) {
        let mut all = Vec::new();
        subsets(std_cols.len(), size, 0, &mut Vec::new(), &mut all);
        for s in all {
            let cols: Vec<Vec<Q>> = s.iter().map(|&j| std_cols[j].clone()).collect();
            if let Some(y) = solve_exact(&cols, &bq) {
                if y.iter().all(|v| !v.is_negative()) {
                    return true;
                }
            }
        }
    }
    false
}

pub struct Case {
    pub a: Vec<Vec<i64>>,
    pub b: Vec<i64>,
    pub sign: Vec<VarSign>,
}

impl Case {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let m = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=6);
        let sign: Vec<VarSign> = (0..n)
            .map(|_| match rng.gen_range(0..3) {
                0 => VarSign::NonNeg,
                1 => VarSign::NonPos,
                _ => VarSign::Free,
            })
            .collect();
        let mut a: Vec<Vec<i64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-3..=3)).collect()).collect();
        let mut b: Vec<i64> = (0..m).map(|_| if rng.gen_bool(0.5) { 0 } else { rng.gen_range(-3..=3) }).collect();
        // half the cases look like the cone problems: homogeneous rows plus a
        // normalization row
        if rng.gen_bool(0.5) {
            b.iter_mut().for_each(|v| *v = 0);
            let last = m - 1;
            for (j, s) in sign.iter().enumerate() {
                a[last][j] = match s {
                    VarSign::NonNeg => 1,
                    VarSign::NonPos => -1,
                    VarSign::Free => 0,
                };
            }
            b[last] = 1;
        }
        Self { a, b, sign }
    }

    pub fn problem(&self, row_scale: &[f64]) -> FeasibilityProblem {
        let m = self.b.len();
        let n = self.sign.len();
        let a = RMat::from_fn(m, n, |i, j| self.a[i][j] as f64 * row_scale[i]);
        let b = (0..m).map(|i| self.b[i] as f64 * row_scale[i]).collect();
        FeasibilityProblem::new(a, b, self.sign.clone()).unwrap()
    }
}


pub fn random_sigs(l: usize, n: usize, r: &mut rng::TrialRng) -> CMat {
    CMat::from_fn(l, n, |_, _| rng::complex_normal(r, 1.0 / l as f64))
}

/// Log-uniform over two decades.
pub fn random_gains(n: usize, r: &mut rng::TrialRng) -> Vec<f64> {
    (0..n).map(|_| 10f64.powf(r.gen_range(-1.0..1.0))).collect()
}

/// `true` marks inactive devices; exactly `k` of `n` active.
pub fn random_mask(n: usize, k: usize, r: &mut rng::TrialRng) -> Vec<bool> {
    let mut inactive = vec![true; n];
    for i in sample(r, n, k) {
        inactive[i] = false;
    }
    inactive
}

pub fn complement(mask: &[bool]) -> Vec<bool> {
    mask.iter().map(|&z| !z).collect()
}

/// A random known-fading instance near the transition: `L² < N`.
pub fn near_boundary(r: &mut rng::TrialRng) -> (CMat, Vec<f64>, Vec<bool>) {
    let l = r.gen_range(3..=4);
    let n = r.gen_range(l * l + 2..=2 * l * l);
    let k = r.gen_range(0..=n);
    (random_sigs(l, n, r), random_gains(n, r), random_mask(n, k, r))
}

/// Largest step-to-step rise, relative to the magnitude.
pub fn worst_rise(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(1.0)).fold(f64::NEG_INFINITY, f64::max)
}
