//! One-dimensional coordinate subproblem for cooperative detection.
//!
//! For a device seen by several base stations the coordinate step `d`
//! minimizes
//!
//! ```text
//! f(d) = Σ_j [ ln(1 + d·g_j·q_j) − d·g_j·p_j / (1 + d·g_j·q_j) ]
//! ```
//!
//! over the box `[lo, hi]`. The derivative is a rational function whose
//! numerator has degree `2B − 1`; rather than extracting polynomial roots we
//! bracket sign changes of `f′` on a uniform grid and bisect each bracket.

use crate::error::{Error, Result};

/// Per-BS quantities entering the subproblem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingTerm {
    /// Power gain from the device to this BS.
    pub gain: f64,
    /// `s^H Σ̃⁻¹ s`.
    pub q: f64,
    /// `s^H Σ̃⁻¹ Σ̂ Σ̃⁻¹ s`.
    pub p: f64,
}

const BISECT_WIDTH: f64 = 1e-10;

/// Relative distance kept from the pole `1 + d·g·q = 0`.
const POLE_MARGIN: f64 = 1e-9;

/// A nonzero step must lower `f` by more than this; smaller gains are
/// rounding noise and the coordinate stays put.
const MIN_GAIN: f64 = 1e-14;

pub fn objective(d: f64, terms: &[CouplingTerm]) -> f64 {
    terms
        .iter()
        .map(|t| {
            let c = d * t.gain;
            let den = 1.0 + c * t.q;
            den.ln() - c * t.p / den
        })
        .sum()
}

pub fn derivative(d: f64, terms: &[CouplingTerm]) -> f64 {
    terms
        .iter()
        .map(|t| {
            let den = 1.0 + d * t.gain * t.q;
            t.gain * (t.q * den - t.p) / (den * den)
        })
        .sum()
}

/// Minimizer of the cooperative coordinate objective over `[lo, hi]`.
pub fn minimize_coordinate_multicell(
    lo: f64,
    hi: f64,
    terms: &[CouplingTerm],
    grid_points: usize,
) -> Result<f64> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Subproblem(format!("empty interval [{lo}, {hi}]")));
    }
    if terms.is_empty() {
        return Err(Error::Subproblem("no coupling terms".into()));
    }
    // Removing a dominant device puts `lo` on the pole up to rounding in `q`.
    let pole = terms
        .iter()
        .filter(|t| t.gain * t.q > 0.0)
        .map(|t| -1.0 / (t.gain * t.q))
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = if lo <= pole { (pole + POLE_MARGIN * pole.abs()).min(hi) } else { lo };
    let f_lo = objective(lo, terms);
    let f_hi = objective(hi, terms);
    if !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(Error::Subproblem(format!("objective not finite on [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(lo);
    }

    let (mut best_d, mut best_f) = if f_hi < f_lo { (hi, f_hi) } else { (lo, f_lo) };
    let pts = grid_points.max(2);
    let step = (hi - lo) / (pts - 1) as f64;
    let mut x0 = lo;
    let mut g0 = derivative(lo, terms);
    for k in 1..pts {
        let x1 = if k == pts - 1 { hi } else { lo + step * k as f64 };
        let g1 = derivative(x1, terms);
        if !g1.is_finite() {
            return Err(Error::Subproblem(format!("derivative not finite at {x1}")));
        }
        // only a − to + crossing can hold an interior minimum
        if g0 < 0.0 && g1 >= 0.0 {
            let root = bisect(x0, x1, terms);
            let f = objective(root, terms);
            if f < best_f {
                best_f = f;
                best_d = root;
            }
        }
        x0 = x1;
        g0 = g1;
    }
    if best_d != 0.0 && lo <= 0.0 && 0.0 <= hi && best_f > -MIN_GAIN {
        return Ok(0.0);
    }
    Ok(best_d)
}

fn bisect(mut a: f64, mut b: f64, terms: &[CouplingTerm]) -> f64 {
    while b - a > BISECT_WIDTH {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if derivative(mid, terms) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Closed-form step for a single coupling term, clamped to `[lo, hi]`.
pub fn closed_form_step(term: &CouplingTerm, lo: f64, hi: f64) -> f64 {
    let theta = (term.p - term.q) / (term.q * term.q);
    (theta / term.gain).max(lo).min(hi)
}
