//! Generic coordinate-descent engine shared by every detection regime.
//!
//! A problem is a set of base-station covariance models and a set of scalar
//! coordinates. Each coordinate is a device signature together with the
//! base stations whose model it enters (and the power gain it enters with).
//! The engine keeps every model inverse current through rank-1 updates.

use num_complex::Complex64;
use rand::seq::SliceRandom;

use super::search::{self, CouplingTerm};
use super::{CoordinateOrder, Regime, SolutionVector, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::rng;

/// Downdates with `1 + c·q` below this lose most digits of the inverse
/// (removing a dominant device); the model is rebuilt instead.
const DOWNDATE_FLOOR: f64 = 0.1;

/// Maintained model for the covariance observed at one base station.
#[derive(Clone, Debug)]
pub struct CovState {
    pub sigma_hat: CMat,
    /// Model covariance with every coordinate at zero.
    pub base: CMat,
    /// `Σ̃⁻¹` of the current model.
    pub inv: CMat,
    /// `ln|Σ̃|` of the current model.
    pub logdet: f64,
}

impl CovState {
    pub fn new(sigma_hat: CMat, base: CMat) -> Result<Self> {
        let (inv, logdet) = linalg::hermitian_inverse(&base)?;
        Ok(Self { sigma_hat, base, inv, logdet })
    }

    /// `ln|Σ̃| + tr(Σ̃⁻¹ Σ̂)`.
    pub fn objective(&self) -> f64 {
        self.logdet + linalg::trace_product_re(&self.inv, &self.sigma_hat)
    }

    /// `q = s^H Σ̃⁻¹ s` and `p = s^H Σ̃⁻¹ Σ̂ Σ̃⁻¹ s`, leaving `Σ̃⁻¹ s` in `u`.
    pub fn stats(&self, s: &[Complex64], u: &mut [Complex64]) -> Result<(f64, f64)> {
        linalg::mat_vec_into(&self.inv, s, u);
        let q = linalg::inner_re(s, u);
        let p = linalg::hermitian_form(&self.sigma_hat, u);
        if !(q > 0.0) || !q.is_finite() || !p.is_finite() {
            return Err(Error::Degenerate(format!("s^H Σ̃⁻¹ s = {q:e}")));
        }
        Ok((q, p))
    }

    /// Apply `Σ̃ ← Σ̃ + c s s^H` given `u = Σ̃⁻¹ s` and `q = s^H u`
    /// (Sherman-Morrison).
    pub fn rank1(&mut self, u: &[Complex64], q: f64, c: f64) {
        let den = 1.0 + c * q;
        self.logdet += den.ln();
        linalg::hermitian_rank1_sub(&mut self.inv, u, c / den);
    }

    /// Recompute inverse and log-determinant of `base + Σ c_k s_k s_k^H`.
    pub fn rebuild<'a>(&mut self, terms: impl Iterator<Item = (&'a [Complex64], f64)>) -> Result<()> {
        let sigma = self.model(terms);
        let (inv, logdet) = linalg::hermitian_inverse(&sigma)?;
        self.inv = inv;
        self.logdet = logdet;
        Ok(())
    }

    pub fn model<'a>(&self, terms: impl Iterator<Item = (&'a [Complex64], f64)>) -> CMat {
        let mut sigma = self.base.clone();
        for (s, c) in terms {
            if c != 0.0 {
                linalg::hermitian_rank1_add(&mut sigma, s, c);
            }
        }
        sigma
    }

    /// Closed-form known-fading step for one device. Returns the new value.
    pub fn update_known(&mut self, value: f64, gain: f64, s: &[Complex64]) -> Result<f64> {
        let mut u = vec![Complex64::new(0.0, 0.0); s.len()];
        let (q, p) = self.stats(s, &mut u)?;
        let term = CouplingTerm { gain, q, p };
        let d = search::closed_form_step(&term, -value, 1.0 - value);
        let new = (value + d).clamp(0.0, 1.0);
        let d = new - value;
        if d != 0.0 {
            self.rank1(&u, q, d * gain);
        }
        Ok(new)
    }

    /// Closed-form unknown-fading step for one device. Returns the new value.
    pub fn update_unknown(&mut self, value: f64, s: &[Complex64]) -> Result<f64> {
        let mut u = vec![Complex64::new(0.0, 0.0); s.len()];
        let (q, p) = self.stats(s, &mut u)?;
        let d = unknown_step(q, p, value)?;
        let new = (value + d).max(0.0);
        let d = new - value;
        if d != 0.0 {
            self.rank1(&u, q, d);
        }
        Ok(new)
    }
}

pub(crate) fn unknown_step(q: f64, p: f64, value: f64) -> Result<f64> {
    let theta = (p - q) / (q * q);
    if !theta.is_finite() {
        return Err(Error::Degenerate(format!("non-finite step θ = {theta}")));
    }
    Ok(theta.max(-value))
}

/// One scalar unknown of the problem.
#[derive(Clone, Debug)]
pub(crate) struct Coordinate<'a> {
    pub sig: &'a [Complex64],
    /// `(model index, power gain)` for every model this coordinate enters.
    pub couplings: Vec<(usize, f64)>,
    /// Restrict the step to the single coupling at this position.
    pub decide_with: Option<usize>,
}

pub(crate) struct Problem<'a> {
    pub models: Vec<CovState>,
    pub coords: Vec<Coordinate<'a>>,
    pub regime: Regime,
}

impl<'a> Problem<'a> {
    fn upper(&self) -> f64 {
        match self.regime {
            Regime::KnownLsf => 1.0,
            Regime::UnknownLsf => f64::INFINITY,
        }
    }

    fn objective(&self) -> f64 {
        self.models.iter().map(CovState::objective).sum()
    }

    fn rebuild(&mut self, values: &[f64]) -> Result<()> {
        (0..self.models.len()).try_for_each(|b| self.rebuild_model(b, values))
    }

    fn rebuild_model(&mut self, b: usize, values: &[f64]) -> Result<()> {
        let terms = self.coords.iter().zip(values).flat_map(|(c, &v)| {
            c.couplings.iter().filter(move |(m, _)| *m == b).map(move |&(_, g)| (c.sig, v * g))
        });
        self.models[b].rebuild(terms)
    }

    fn inverse_drift(&self, values: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (b, model) in self.models.iter().enumerate() {
            let terms = self.coords.iter().zip(values).flat_map(|(c, &v)| {
                c.couplings.iter().filter(move |(m, _)| *m == b).map(move |&(_, g)| (c.sig, v * g))
            });
            let (direct, _) = linalg::hermitian_inverse(&model.model(terms))?;
            worst = worst.max((&model.inv - &direct).norm() / direct.norm());
        }
        Ok(worst)
    }

    /// Run coordinate descent from `init`. `stream_key` separates the
    /// permutation streams of problems sharing one options seed.
    pub fn solve(mut self, init: Option<&[f64]>, opts: &SolverOptions, stream_key: u64) -> Result<SolutionVector> {
        opts.validate()?;
        let n = self.coords.len();
        let upper = self.upper();
        let mut values = match init {
            Some(v) if v.len() == n => v.iter().map(|&x| x.clamp(0.0, upper)).collect(),
            Some(v) => return Err(Error::Shape(format!("initial point has {} entries, expected {n}", v.len()))),
            None => vec![0.0; n],
        };
        if values.iter().any(|&v| v != 0.0) {
            self.rebuild(&values)?;
        }

        let l = self.models.first().map_or(1, |m| m.sigma_hat.nrows());
        let tol = opts.tol.unwrap_or(1e-8 * (l * self.models.len()) as f64);
        let mut rng = rng::stream(opts.seed, &[0x6364, stream_key]);
        let mut order: Vec<usize> = (0..n).collect();
        let max_couplings = self.coords.iter().map(|c| c.couplings.len()).max().unwrap_or(0);
        let mut us = vec![vec![Complex64::new(0.0, 0.0); l]; max_couplings];
        let mut terms = Vec::with_capacity(max_couplings);
        let mut stale = Vec::with_capacity(max_couplings);

        let mut objective = self.objective();
        let mut sol = SolutionVector {
            values: Vec::new(),
            regime: self.regime,
            objective_trace: vec![objective],
            epochs_run: 0,
            update_trace: Vec::new(),
            inverse_drift: Vec::new(),
        };
        if opts.record_updates {
            sol.update_trace.push(objective);
        }

        for epoch in 0..opts.max_epochs {
            if opts.order == CoordinateOrder::RandomPermutation {
                order.shuffle(&mut rng);
            }
            let mut running = objective;
            for &k in &order {
                let coord = &self.coords[k];
                terms.clear();
                for (slot, &(m, g)) in coord.couplings.iter().enumerate() {
                    let (q, p) = self.models[m].stats(coord.sig, &mut us[slot])?;
                    terms.push(CouplingTerm { gain: g, q, p });
                }
                let x = values[k];
                let new = match self.regime {
                    Regime::UnknownLsf => {
                        let t = &terms[coord.decide_with.unwrap_or(0)];
                        (x + unknown_step(t.q, t.p, x)?).max(0.0)
                    }
                    Regime::KnownLsf => {
                        let d = match (coord.decide_with, terms.len()) {
                            (Some(i), _) => search::closed_form_step(&terms[i], -x, 1.0 - x),
                            (None, 1) => search::closed_form_step(&terms[0], -x, 1.0 - x),
                            (None, _) => search::minimize_coordinate_multicell(-x, 1.0 - x, &terms, opts.grid_points)?,
                        };
                        (x + d).clamp(0.0, 1.0)
                    }
                };
                let d = new - x;
                if d == 0.0 {
                    if opts.record_updates {
                        sol.update_trace.push(running);
                    }
                    continue;
                }
                if opts.record_updates {
                    running += search::objective(d, &terms);
                    sol.update_trace.push(running);
                }
                stale.clear();
                for (slot, &(m, g)) in coord.couplings.iter().enumerate() {
                    if 1.0 + d * g * terms[slot].q < DOWNDATE_FLOOR {
                        stale.push(m);
                    } else {
                        self.models[m].rank1(&us[slot], terms[slot].q, d * g);
                    }
                }
                values[k] = new;
                for &m in &stale {
                    self.rebuild_model(m, &values)?;
                }
            }

            if (epoch + 1) % opts.rebuild_every == 0 {
                self.rebuild(&values)?;
            }
            if opts.check_inverse {
                sol.inverse_drift.push(self.inverse_drift(&values)?);
            }
            let next = self.objective();
            if !next.is_finite() {
                return Err(Error::Degenerate("objective became non-finite".into()));
            }
            sol.objective_trace.push(next);
            sol.epochs_run = epoch + 1;
            let decrease = objective - next;
            objective = next;
            if decrease < tol {
                break;
            }
        }
        sol.values = values;
        Ok(sol)
    }
}
