//! Identifiability of the covariance MLE as the number of antennas grows.
//!
//! The estimator is consistent when the null space of the Fisher information
//! meets the cone of feasible directions at the truth only in zero. The null
//! space equals the kernel of a real `L² × N` expansion of the signatures,
//! so each condition reduces to an LP feasibility problem.

mod sweep;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::lp::{self, FeasibilityProblem, LpStatus, VarSign};

pub use sweep::{phase_sweep, Boundary, PhaseMap, PhasePoint, PhaseRegime, SweepSettings};

/// Relative singular-value cutoff for the support-rank check.
pub const RANK_RTOL: f64 = 1e-9;

/// Relative singular-value cutoff when extracting the constraint row space.
pub const ROW_SPACE_RTOL: f64 = 1e-12;

/// Real rows spanning the kernel condition `S̃ x = 0` for real `x`, where
/// column `n` of `S̃` is `s_n* ⊗ s_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealExpansion {
    /// `L²` rows per block; one block per base station when stacked.
    pub matrix: RMat,
    pub seq_len: usize,
    pub blocks: usize,
}

impl RealExpansion {
    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Multiply column `n` by `w[n]`.
    pub fn scale_columns(&self, w: &[f64]) -> Result<Self> {
        if w.len() != self.ncols() {
            return Err(Error::Shape(format!("{} weights for {} columns", w.len(), self.ncols())));
        }
        let mut matrix = self.matrix.clone();
        for (n, mut col) in matrix.column_iter_mut().enumerate() {
            col *= w[n];
        }
        Ok(Self { matrix, ..*self })
    }

    /// `[E·diag(w_1); …; E·diag(w_B)]`.
    pub fn stack_scaled(&self, weights: &[Vec<f64>]) -> Result<Self> {
        let rows = self.matrix.nrows();
        let mut matrix = RMat::zeros(rows * weights.len(), self.ncols());
        for (b, w) in weights.iter().enumerate() {
            let block = self.scale_columns(w)?;
            matrix.rows_mut(b * rows, rows).copy_from(&block.matrix);
        }
        Ok(Self { matrix, seq_len: self.seq_len, blocks: weights.len() * self.blocks })
    }
}

/// Rows `Re r_i ⊙ Re r_j + Im r_i ⊙ Im r_j` for `i ≤ j`, then
/// `Re r_i ⊙ Im r_j − Im r_i ⊙ Re r_j` for `i < j`, where `r_i` is row `i` of
/// `S`. Columns are multiplied by `gains` when given.
pub fn khatri_rao_real_rows(s: &CMat, gains: Option<&[f64]>) -> Result<RealExpansion> {
    let (l, n) = s.shape();
    let mut matrix = RMat::zeros(l * l, n);
    for k in 0..n {
        let col = s.column(k);
        let mut r = 0;
        for i in 0..l {
            for j in i..l {
                matrix[(r, k)] = col[i].re * col[j].re + col[i].im * col[j].im;
                r += 1;
            }
        }
        for i in 0..l {
            for j in i + 1..l {
                matrix[(r, k)] = col[i].re * col[j].im - col[i].im * col[j].re;
                r += 1;
            }
        }
    }
    let e = RealExpansion { matrix, seq_len: l, blocks: 1 };
    match gains {
        Some(g) => e.scale_columns(g),
        None => Ok(e),
    }
}

/// Which Fisher matrix a [`FisherInfo`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FisherKind {
    UnknownLsf,
    KnownLsf,
    MulticellKnownLsf,
}

/// Fisher information without the factor `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherInfo {
    pub matrix: RMat,
    pub kind: FisherKind,
}

fn hadamard_abs2(q: &CMat) -> RMat {
    RMat::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)].norm_sqr())
}

/// `G^{1/2} S^H Σ⁻¹ S G^{1/2}` with `Σ = S diag(c) S^H + σ² I`.
fn weighted_gram(s: &CMat, c: &[f64], outer: &[f64], noise_var: f64) -> Result<CMat> {
    let l = s.nrows();
    let mut sigma = linalg::identity_scaled(l, noise_var);
    for (k, &ck) in c.iter().enumerate() {
        if ck < 0.0 || !ck.is_finite() {
            return Err(Error::NegativeWeight { index: k, value: ck });
        }
        if ck != 0.0 {
            linalg::hermitian_rank1_add(&mut sigma, s.column(k).as_slice(), ck);
        }
    }
    let (inv, _) = linalg::hermitian_inverse(&sigma)?;
    let mut scaled = s.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::from(outer[k].sqrt());
    }
    let mut q = scaled.adjoint() * inv * scaled;
    linalg::hermitize(&mut q);
    Ok(q)
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Shape(format!("{} {what} for {n} devices", v.len())));
    }
    Ok(())
}

/// `|P|²` elementwise, `P = S^H Σ⁻¹ S`, `Σ = S Γ S^H + σ² I`.
pub fn fisher_info_unknown_lsf(s: &CMat, gammas: &[f64], noise_var: f64) -> Result<FisherInfo> {
    check_len("gains", gammas, s.ncols())?;
    let p = weighted_gram(s, gammas, &vec![1.0; s.ncols()], noise_var)?;
    Ok(FisherInfo { matrix: hadamard_abs2(&p), kind: FisherKind::UnknownLsf })
}

/// `|Q|²` elementwise, `Q = G^{1/2} S^H Σ⁻¹ S G^{1/2}`, `Σ = S A G S^H + σ² I`.
pub fn fisher_info_known_lsf(s: &CMat, gains: &[f64], activity: &[f64], noise_var: f64) -> Result<FisherInfo> {
    check_len("gains", gains, s.ncols())?;
    check_len("indicators", activity, s.ncols())?;
    let c: Vec<f64> = gains.iter().zip(activity).map(|(g, a)| g * a).collect();
    let q = weighted_gram(s, &c, gains, noise_var)?;
    Ok(FisherInfo { matrix: hadamard_abs2(&q), kind: FisherKind::KnownLsf })
}

/// `Σ_b |Q_b|²` over base stations. `s` is the stacked `L × BN` signature
/// matrix and `gains[b]` the gains of all `BN` devices to BS `b`.
pub fn fisher_info_multicell(s: &CMat, gains: &[Vec<f64>], activity: &[f64], noise_var: f64) -> Result<FisherInfo> {
    let n = s.ncols();
    check_len("indicators", activity, n)?;
    let mut total = RMat::zeros(n, n);
    for g in gains {
        check_len("gains", g, n)?;
        let c: Vec<f64> = g.iter().zip(activity).map(|(g, a)| g * a).collect();
        total += hadamard_abs2(&weighted_gram(s, &c, g, noise_var)?);
    }
    Ok(FisherInfo { matrix: total, kind: FisherKind::MulticellKnownLsf })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConditionVerdict {
    /// Consistency condition satisfied.
    pub holds: bool,
    /// Status of the separating-certificate LP; `Feasible` is a certificate.
    pub lp_status: LpStatus,
    pub support_rank_ok: bool,
}

fn check_mask(e: &RealExpansion, inactive: &[bool]) -> Result<()> {
    if inactive.len() != e.ncols() {
        return Err(Error::Shape(format!("mask of {} for {} columns", inactive.len(), e.ncols())));
    }
    Ok(())
}

/// Orthonormal rows spanning the row space of `e` after unit-norm column
/// scaling. The kernel is the same up to that positive scaling, so sign
/// patterns in it are unchanged, and the LPs built on it are far better
/// conditioned.
fn row_space(e: &RMat) -> RMat {
    let n = e.ncols();
    let mut scaled = e.clone();
    for mut col in scaled.column_iter_mut() {
        let c = col.norm();
        if c > 0.0 {
            col /= c;
        }
    }
    if scaled.nrows() == 0 || n == 0 {
        return RMat::zeros(0, n);
    }
    let svd = scaled.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > ROW_SPACE_RTOL * smax)
        .collect();
    v_t.select_rows(&keep)
}

/// Separating-certificate LP over `w`: `(Bᵀw)_j · sign_j ≥ 1` for columns
/// with `Some(sign)`, `(Bᵀw)_j = 0` for columns with `None`, where `B` is the
/// row space of `e`. Feasible exactly when no nonzero kernel vector has the
/// sign pattern on the `Some` columns (Gordan / Motzkin alternatives).
///
/// The primal form (find such a kernel vector under a normalization row)
/// has a zero right-hand side in every row but one and stalls the simplex
/// method at multi-cell sizes; here every inequality row has right-hand
/// side 1.
fn separation(e: &RealExpansion, sign: impl Fn(usize) -> Option<f64>) -> Result<LpStatus> {
    let basis = row_space(&e.matrix);
    let (m, n) = basis.shape();
    let slacks: Vec<(usize, f64)> = (0..n).filter_map(|j| sign(j).map(|s| (j, s))).collect();
    if slacks.is_empty() {
        // w = 0 works
        return Ok(LpStatus::Feasible);
    }
    let cols = m + slacks.len();
    let mut a = RMat::zeros(n, cols);
    let mut b = vec![0.0; n];
    for j in 0..n {
        let s = sign(j).unwrap_or(1.0);
        for i in 0..m {
            a[(j, i)] = s * basis[(i, j)];
        }
    }
    for (k, &(j, _)) in slacks.iter().enumerate() {
        a[(j, m + k)] = -1.0;
        b[j] = 1.0;
    }
    let var_sign = (0..cols).map(|c| if c < m { VarSign::Free } else { VarSign::NonNeg }).collect();
    Ok(lp::solve_feasibility(&FeasibilityProblem::new(a, b, var_sign)?, lp::DEFAULT_TOL)?.status)
}

/// Known fading: is `{x : E x = 0, x_i ≥ 0 on I, x_i ≤ 0 off I} = {0}`?
///
/// `inactive` marks `I`, the devices whose true indicator is zero. Works for
/// a single expansion or a stack of gain-scaled blocks alike.
pub fn condition_known_lsf(e: &RealExpansion, inactive: &[bool]) -> Result<ConditionVerdict> {
    check_mask(e, inactive)?;
    let lp_status = separation(e, |j| Some(if inactive[j] { 1.0 } else { -1.0 }))?;
    Ok(ConditionVerdict { holds: lp_status == LpStatus::Feasible, lp_status, support_rank_ok: true })
}

/// Multi-cell known fading on the stacked expansion `D̃`.
pub fn condition_multicell(stacked: &RealExpansion, inactive: &[bool]) -> Result<ConditionVerdict> {
    let rows = stacked.seq_len * stacked.seq_len * stacked.blocks;
    if stacked.matrix.nrows() != rows {
        return Err(Error::Shape(format!("{} rows for {} blocks", stacked.matrix.nrows(), stacked.blocks)));
    }
    condition_known_lsf(stacked, inactive)
}

/// Unknown fading: is `{x : E x = 0, x_i ≥ 0 on I} = {0}`?
///
/// The LP certifies that no kernel vector with `x_I ≥ 0` puts weight on `I`;
/// kernel vectors supported on the active set alone exist exactly when the
/// active columns are linearly dependent, which is checked by rank. This
/// combination is our operational form of the cone condition.
pub fn condition_unknown_lsf(e: &RealExpansion, inactive: &[bool]) -> Result<ConditionVerdict> {
    check_mask(e, inactive)?;
    let active: Vec<usize> = (0..e.ncols()).filter(|&j| !inactive[j]).collect();
    let sub = e.matrix.select_columns(&active);
    let support_rank_ok = active.is_empty() || linalg::numerical_rank(&sub, RANK_RTOL) == active.len();
    let lp_status = separation(e, |j| inactive[j].then_some(1.0))?;
    Ok(ConditionVerdict { holds: lp_status == LpStatus::Feasible && support_rank_ok, lp_status, support_rank_ok })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn expansion_of_one_and_i() {
        let s = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 1.0)]);
        let e = khatri_rao_real_rows(&s, None).unwrap();
        assert_eq!(e.matrix.as_slice(), &[1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn real_signatures_have_no_antisymmetric_part() {
        let s = CMat::from_fn(3, 4, |i, j| c((i * 4 + j) as f64 - 5.0, 0.0));
        let e = khatri_rao_real_rows(&s, None).unwrap();
        assert_eq!(e.matrix.nrows(), 9);
        assert!(e.matrix.rows(6, 3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stacking_scales_blocks() {
        let s = CMat::from_column_slice(1, 2, &[c(1.0, 1.0), c(2.0, 0.0)]);
        let e = khatri_rao_real_rows(&s, None).unwrap();
        let d = e.stack_scaled(&[vec![1.0, 2.0], vec![3.0, 0.5]]).unwrap();
        assert_eq!(d.blocks, 2);
        assert_eq!(d.matrix, RMat::from_row_slice(2, 2, &[2.0, 8.0, 6.0, 2.0]));
    }

    #[test]
    fn one_row_four_devices_two_active_fails() {
        let s = CMat::from_row_slice(1, 4, &[c(1.0, 0.0), c(0.3, 0.8), c(-0.7, 0.2), c(0.1, -1.1)]);
        let e = khatri_rao_real_rows(&s, None).unwrap();
        let mask = [true, false, true, false];
        assert!(!condition_known_lsf(&e, &mask).unwrap().holds);
        assert!(!condition_unknown_lsf(&e, &mask).unwrap().holds);
    }
}
