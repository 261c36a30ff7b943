//! Monte Carlo maps of the consistency condition over `(L, K)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{condition_known_lsf, condition_multicell, condition_unknown_lsf, khatri_rao_real_rows};
use crate::error::{Error, Result};
use crate::model::{self, SystemConfig};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseRegime {
    KnownLsf,
    UnknownLsf,
    MulticellKnownLsf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// Geometry and population; `seq_len` and `active` are overridden by the grid.
    pub system: SystemConfig,
    pub seq_lens: Vec<usize>,
    /// Active devices per cell.
    pub actives: Vec<usize>,
    pub trials: usize,
    pub regime: PhaseRegime,
    /// Keep one device drop for every trial instead of redrawing it.
    pub fix_positions: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub seq_len: usize,
    pub active: usize,
    pub l2_over_n: f64,
    pub k_over_n: f64,
    /// Verdict per trial, in trial order.
    pub verdicts: Vec<bool>,
}

impl PhasePoint {
    pub fn n_trials(&self) -> usize {
        self.verdicts.len()
    }

    pub fn holds(&self) -> usize {
        self.verdicts.iter().filter(|&&v| v).count()
    }

    pub fn freq(&self) -> f64 {
        self.holds() as f64 / self.n_trials() as f64
    }

    pub fn all_hold(&self) -> bool {
        self.holds() == self.n_trials()
    }

    pub fn none_hold(&self) -> bool {
        self.holds() == 0
    }
}

/// Where the satisfaction frequency first drops through one half, scanning
/// `K` upward at fixed `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct Boundary {
    pub seq_len: usize,
    pub l2_over_n: f64,
    /// Linear interpolation of the crossing.
    pub k50: Option<f64>,
    /// Largest grid `K` below the crossing with every trial satisfied.
    pub k_all_hold: Option<usize>,
    /// Smallest grid `K` above the crossing with no trial satisfied.
    pub k_none_hold: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    pub regime: PhaseRegime,
    pub devices: usize,
    pub cells: usize,
    /// Row-major over `seq_lens × actives`, skipping `K > N`.
    pub points: Vec<PhasePoint>,
}

pub const PHASE_CSV_HEADER: &str = "L,K,L2_over_N,K_over_N,freq,n_trials,all_hold,none_hold";
pub const BOUNDARY_CSV_HEADER: &str = "L,L2_over_N,K50,K50_over_N,K_all_hold,K_none_hold";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl PhaseMap {
    pub fn point(&self, seq_len: usize, active: usize) -> Option<&PhasePoint> {
        self.points.iter().find(|p| p.seq_len == seq_len && p.active == active)
    }

    pub fn boundaries(&self) -> Vec<Boundary> {
        let mut ls: Vec<usize> = self.points.iter().map(|p| p.seq_len).collect();
        ls.dedup();
        ls.into_iter()
            .map(|l| {
                let mut row: Vec<&PhasePoint> = self.points.iter().filter(|p| p.seq_len == l).collect();
                row.sort_by_key(|p| p.active);
                let crossing = row.windows(2).position(|w| w[0].freq() >= 0.5 && w[1].freq() < 0.5);
                let k50 = crossing.map(|i| {
                    let (a, b) = (row[i], row[i + 1]);
                    let (fa, fb) = (a.freq(), b.freq());
                    a.active as f64 + (fa - 0.5) / (fa - fb) * (b.active - a.active) as f64
                });
                let (k_all_hold, k_none_hold) = match crossing {
                    Some(i) => (
                        row[..=i].iter().rev().find(|p| p.all_hold()).map(|p| p.active),
                        row[i + 1..].iter().find(|p| p.none_hold()).map(|p| p.active),
                    ),
                    None => (None, None),
                };
                Boundary {
                    seq_len: l,
                    l2_over_n: (l * l) as f64 / self.devices as f64,
                    k50,
                    k_all_hold,
                    k_none_hold,
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{PHASE_CSV_HEADER}")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                p.seq_len,
                p.active,
                p.l2_over_n,
                p.k_over_n,
                p.freq(),
                p.n_trials(),
                u8::from(p.all_hold()),
                u8::from(p.none_hold())
            )?;
        }
        Ok(())
    }

    pub fn write_boundary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{BOUNDARY_CSV_HEADER}")?;
        for b in self.boundaries() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                b.seq_len,
                b.l2_over_n,
                opt(b.k50),
                opt(b.k50.map(|k| k / self.devices as f64)),
                opt(b.k_all_hold),
                opt(b.k_none_hold)
            )?;
        }
        Ok(())
    }
}

/// Verdicts of one trial at one sequence length for every grid `K`.
///
/// Sequences, gains and one device ordering per cell are drawn once and
/// shared by all `K`: the first `K` devices of the ordering are active for
/// `K ≤ N/2`, and the complement of the first `N − K` otherwise, so the
/// supports at `K` and `N − K` are exact complements.
fn trial_verdicts(s: &SweepSettings, l: usize, ks: &[usize], trial: usize) -> Result<Vec<bool>> {
    let multi = s.regime == PhaseRegime::MulticellKnownLsf;
    let cells = if multi { s.system.cells } else { 1 };
    let cfg = SystemConfig { cells, seq_len: l, active: 0, ..s.system.clone() };
    let n = cfg.devices;
    let mut rng = rng::stream(cfg.seed, &[0x7068_6173, l as u64, trial as u64]);
    let net = if s.fix_positions { model::build_network(&cfg)? } else { model::build_network_with(&cfg, &mut rng)? };
    let sigs = model::generate_signatures(&cfg, &mut rng);
    let orders: Vec<Vec<usize>> = (0..cells).map(|_| rand::seq::index::sample(&mut rng, n, n).into_vec()).collect();

    let expansion = match s.regime {
        PhaseRegime::KnownLsf => khatri_rao_real_rows(&sigs.mats[0], Some(&net.gains_row(0)))?,
        PhaseRegime::UnknownLsf => khatri_rao_real_rows(&sigs.mats[0], None)?,
        PhaseRegime::MulticellKnownLsf => {
            let gains: Vec<Vec<f64>> = (0..cells).map(|b| net.gains_row(b)).collect();
            khatri_rao_real_rows(&sigs.stacked(), None)?.stack_scaled(&gains)?
        }
    };

    ks.iter()
        .map(|&k| {
            let mut inactive = vec![true; cells * n];
            for (j, order) in orders.iter().enumerate() {
                let (chosen, is_active) = if 2 * k <= n { (k, true) } else { (n - k, false) };
                inactive[j * n..(j + 1) * n].iter_mut().for_each(|z| *z = is_active);
                for &d in &order[..chosen] {
                    inactive[j * n + d] = !is_active;
                }
            }
            let v = match s.regime {
                PhaseRegime::KnownLsf => condition_known_lsf(&expansion, &inactive)?,
                PhaseRegime::UnknownLsf => condition_unknown_lsf(&expansion, &inactive)?,
                PhaseRegime::MulticellKnownLsf => condition_multicell(&expansion, &inactive)?,
            };
            Ok(v.holds)
        })
        .collect()
}

/// Evaluate the regime's condition on `trials` random instances per grid
/// point. Runs on the current rayon pool; output is independent of its size.
pub fn phase_sweep(s: &SweepSettings) -> Result<PhaseMap> {
    if s.seq_lens.is_empty() || s.actives.is_empty() {
        return Err(Error::Config("phase grid must be nonempty".into()));
    }
    if s.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if s.seq_lens.contains(&0) {
        return Err(Error::Config("sequence length must be positive".into()));
    }
    let n = s.system.devices;
    let ks: Vec<usize> = s
        .actives
        .iter()
        .copied()
        .filter(|&k| {
            let ok = k <= n;
            if !ok {
                log::warn!("skipping K={k}: only {n} devices per cell");
            }
            ok
        })
        .collect();

    let jobs: Vec<(usize, usize)> = s.seq_lens.iter().flat_map(|&l| (0..s.trials).map(move |t| (l, t))).collect();
    let results: Vec<Vec<bool>> = jobs
        .par_iter()
        .map(|&(l, t)| trial_verdicts(s, l, &ks, t))
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(s.seq_lens.len() * ks.len());
    for (li, &l) in s.seq_lens.iter().enumerate() {
        for (ki, &k) in ks.iter().enumerate() {
            let verdicts = (0..s.trials).map(|t| results[li * s.trials + t][ki]).collect();
            points.push(PhasePoint {
                seq_len: l,
                active: k,
                l2_over_n: (l * l) as f64 / n as f64,
                k_over_n: k as f64 / n as f64,
                verdicts,
            });
        }
    }
    let cells = if s.regime == PhaseRegime::MulticellKnownLsf { s.system.cells } else { 1 };
    Ok(PhaseMap { regime: s.regime, devices: n, cells, points })
}
