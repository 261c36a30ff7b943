use num_complex::Complex64;

use super::engine::{Coordinate, CovState, Problem};
use super::{Regime, SolutionVector, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{CovarianceSet, NetworkInstance, SignatureSet};

fn column(s: &CMat, n: usize) -> &[Complex64] {
    let l = s.nrows();
    &s.as_slice()[n * l..(n + 1) * l]
}

fn check_square(m: &CMat, l: usize) -> Result<()> {
    if m.nrows() != l || m.ncols() != l {
        return Err(Error::Shape(format!("covariance is {}×{}, expected {l}×{l}", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn check_set(cov: &CovarianceSet, sigs: &SignatureSet) -> Result<()> {
    if cov.mats.len() != sigs.cells() {
        return Err(Error::Shape(format!("{} covariances for {} cells", cov.mats.len(), sigs.cells())));
    }
    cov.mats.iter().try_for_each(|m| check_square(m, sigs.seq_len()))
}

/// Single-cell detection from one sample covariance.
///
/// `gains` are the power gains `g²_n`; required for [`Regime::KnownLsf`] and
/// ignored otherwise.
pub fn solve_single_cell(
    sigma_hat: &CMat,
    sigs: &CMat,
    gains: Option<&[f64]>,
    noise_var: f64,
    regime: Regime,
    opts: &SolverOptions,
) -> Result<SolutionVector> {
    let (l, n) = (sigs.nrows(), sigs.ncols());
    check_square(sigma_hat, l)?;
    let coords = match regime {
        Regime::KnownLsf => {
            let g = gains.ok_or_else(|| Error::Config("known-fading detection needs gains".into()))?;
            if g.len() != n {
                return Err(Error::Shape(format!("{} gains for {n} devices", g.len())));
            }
            (0..n)
                .map(|k| Coordinate { sig: column(sigs, k), couplings: vec![(0, g[k])], decide_with: None })
                .collect()
        }
        Regime::UnknownLsf => (0..n)
            .map(|k| Coordinate { sig: column(sigs, k), couplings: vec![(0, 1.0)], decide_with: None })
            .collect(),
    };
    let base = linalg::identity_scaled(l, noise_var);
    let problem = Problem { models: vec![CovState::new(sigma_hat.clone(), base)?], coords, regime };
    problem.solve(opts.initial.as_deref(), opts, 0)
}

fn noise_states(cov: &CovarianceSet, l: usize) -> Result<Vec<CovState>> {
    cov.mats
        .iter()
        .map(|m| CovState::new(m.clone(), linalg::identity_scaled(l, cov.noise_var)))
        .collect()
}

/// Cooperative known-fading detection over all `B·N` devices using every
/// base station's covariance.
pub fn solve_multicell_coop(
    cov: &CovarianceSet,
    sigs: &SignatureSet,
    net: &NetworkInstance,
    opts: &SolverOptions,
) -> Result<SolutionVector> {
    check_set(cov, sigs)?;
    let (b_count, n) = (sigs.cells(), sigs.devices());
    let coords = (0..b_count * n)
        .map(|i| {
            let (j, k) = (i / n, i % n);
            Coordinate {
                sig: sigs.column(j, k),
                couplings: (0..b_count).map(|b| (b, net.gain(b, j, k))).collect(),
                decide_with: None,
            }
        })
        .collect();
    let problem = Problem { models: noise_states(cov, sigs.seq_len())?, coords, regime: Regime::KnownLsf };
    problem.solve(opts.initial.as_deref(), opts, 0)
}

/// Cooperative unknown-fading detection: one gain `γ_bjn` per (BS, device).
/// Values are stored as `B` blocks of length `B·N`, block `b` for BS `b`.
pub fn solve_multicell_unknown_lsf(
    cov: &CovarianceSet,
    sigs: &SignatureSet,
    opts: &SolverOptions,
) -> Result<SolutionVector> {
    check_set(cov, sigs)?;
    let (b_count, n) = (sigs.cells(), sigs.devices());
    let per_bs = b_count * n;
    let coords = (0..b_count * per_bs)
        .map(|i| {
            let (b, d) = (i / per_bs, i % per_bs);
            Coordinate { sig: sigs.column(d / n, d % n), couplings: vec![(b, 1.0)], decide_with: None }
        })
        .collect();
    let problem = Problem { models: noise_states(cov, sigs.seq_len())?, coords, regime: Regime::UnknownLsf };
    problem.solve(opts.initial.as_deref(), opts, 0)
}

/// Own-cell gain estimates `γ̂_jjn`, flattened `j·N + n`.
pub fn own_cell_gammas(sol: &SolutionVector, cells: usize, devices: usize) -> Vec<f64> {
    let per_bs = cells * devices;
    (0..per_bs).map(|d| sol.values[(d / devices) * per_bs + d]).collect()
}

/// Preliminary detection at BS `bs` of every device in every cell, from its
/// own covariance only.
pub fn local_detect_all_cells(
    sigma_hat: &CMat,
    sigs: &SignatureSet,
    net: &NetworkInstance,
    bs: usize,
    noise_var: f64,
    opts: &SolverOptions,
) -> Result<SolutionVector> {
    local_detect_within(sigma_hat, sigs, net, bs, noise_var, None, opts)
}

/// As [`local_detect_all_cells`], but devices farther than `radius_m` from
/// the BS are not estimated and reported as zero.
pub fn local_detect_within(
    sigma_hat: &CMat,
    sigs: &SignatureSet,
    net: &NetworkInstance,
    bs: usize,
    noise_var: f64,
    radius_m: Option<f64>,
    opts: &SolverOptions,
) -> Result<SolutionVector> {
    check_square(sigma_hat, sigs.seq_len())?;
    let n = sigs.devices();
    let total = sigs.cells() * n;
    let kept: Vec<usize> = (0..total)
        .filter(|&i| radius_m.map_or(true, |r| net.distance(bs, net.device_positions[i / n][i % n]) <= r))
        .collect();
    if kept.is_empty() {
        return Err(Error::Config(format!("no device within the detection radius of BS {bs}")));
    }
    let coords = kept
        .iter()
        .map(|&i| Coordinate {
            sig: sigs.column(i / n, i % n),
            couplings: vec![(0, net.gain(bs, i / n, i % n))],
            decide_with: None,
        })
        .collect();
    let initial = match &opts.initial {
        Some(x) if x.len() != total => return Err(Error::Shape(format!("initial point has {} entries, expected {total}", x.len()))),
        Some(x) => Some(kept.iter().map(|&i| x[i]).collect::<Vec<_>>()),
        None => None,
    };
    let base = linalg::identity_scaled(sigs.seq_len(), noise_var);
    let problem = Problem { models: vec![CovState::new(sigma_hat.clone(), base)?], coords, regime: Regime::KnownLsf };
    let mut sol = problem.solve(initial.as_deref(), opts, 0)?;
    if kept.len() < total {
        let mut values = vec![0.0; total];
        for (&i, &v) in kept.iter().zip(&sol.values) {
            values[i] = v;
        }
        sol.values = values;
    }
    Ok(sol)
}

/// `(K/N) Σ_{j≠b} S_j G_bj S_j^H + σ² I`.
pub fn tin_base_covariance(
    sigs: &SignatureSet,
    net: &NetworkInstance,
    bs: usize,
    activity_fraction: f64,
    noise_var: f64,
) -> CMat {
    let mut base = linalg::identity_scaled(sigs.seq_len(), noise_var);
    for j in (0..sigs.cells()).filter(|&j| j != bs) {
        for k in 0..sigs.devices() {
            linalg::hermitian_rank1_add(&mut base, sigs.column(j, k), activity_fraction * net.gain(bs, j, k));
        }
    }
    base
}

/// Treating interference as noise: each BS detects its own cell with the
/// inter-cell interference replaced by its activity-averaged covariance.
/// Returns one solution per cell.
pub fn baseline_tin(
    cov: &CovarianceSet,
    sigs: &SignatureSet,
    net: &NetworkInstance,
    activity_fraction: f64,
    opts: &SolverOptions,
) -> Result<Vec<SolutionVector>> {
    check_set(cov, sigs)?;
    let n = sigs.devices();
    (0..sigs.cells())
        .map(|b| {
            let base = tin_base_covariance(sigs, net, b, activity_fraction, cov.noise_var);
            let coords = (0..n)
                .map(|k| Coordinate { sig: sigs.column(b, k), couplings: vec![(0, net.gain(b, b, k))], decide_with: None })
                .collect();
            let problem = Problem {
                models: vec![CovState::new(cov.mats[b].clone(), base)?],
                coords,
                regime: Regime::KnownLsf,
            };
            let init = opts.initial.as_ref().map(|v| &v[b * n..(b + 1) * n]);
            problem.solve(init, opts, b as u64)
        })
        .collect()
}

/// BS with the largest gain to device `n` of cell `cell`.
pub fn best_bs_index(net: &NetworkInstance, cell: usize, n: usize) -> usize {
    (0..net.cells())
        .max_by(|&a, &b| net.gain(a, cell, n).total_cmp(&net.gain(b, cell, n)))
        .unwrap_or(0)
}

/// Low-complexity known-fading detection: every device is updated from the
/// covariance of its strongest BS only, while all models stay current.
pub fn baseline_best_bs(
    cov: &CovarianceSet,
    sigs: &SignatureSet,
    net: &NetworkInstance,
    opts: &SolverOptions,
) -> Result<SolutionVector> {
    check_set(cov, sigs)?;
    let (b_count, n) = (sigs.cells(), sigs.devices());
    let coords = (0..b_count * n)
        .map(|i| {
            let (j, k) = (i / n, i % n);
            Coordinate {
                sig: sigs.column(j, k),
                couplings: (0..b_count).map(|b| (b, net.gain(b, j, k))).collect(),
                decide_with: Some(best_bs_index(net, j, k)),
            }
        })
        .collect();
    let problem = Problem { models: noise_states(cov, sigs.seq_len())?, coords, regime: Regime::KnownLsf };
    problem.solve(opts.initial.as_deref(), opts, 0)
}

pub fn concat_values(parts: &[SolutionVector]) -> Vec<f64> {
    parts.iter().flat_map(|s| s.values.iter().copied()).collect()
}
