//! Maximum-likelihood activity detection by coordinate descent.
//!
//! All solvers minimize (sums of) `ln|Σ_b| + tr(Σ_b⁻¹ Σ̂_b)` one scalar at a
//! time, starting from zero, and differ only in which covariance models a
//! coordinate enters and with which gain.

mod engine;
mod metrics;
pub mod search;
mod solvers;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use engine::CovState;
pub use metrics::{equal_error_threshold, DetectionReport};
pub use search::{minimize_coordinate_multicell, CouplingTerm};
pub use solvers::{
    baseline_best_bs, baseline_tin, best_bs_index, concat_values, local_detect_all_cells, local_detect_within,
    own_cell_gammas, solve_multicell_coop, solve_multicell_unknown_lsf, solve_single_cell, tin_base_covariance,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Large-scale fading known; activity indicators in `[0, 1]`.
    KnownLsf,
    /// Large-scale fading unknown; gains `γ ≥ 0` estimated directly.
    UnknownLsf,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::KnownLsf => "known_lsf",
            Regime::UnknownLsf => "unknown_lsf",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateOrder {
    RandomPermutation,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_epochs: usize,
    /// Stop once an epoch lowers the objective by less than this.
    /// `None` means `1e-8 · L · B`.
    pub tol: Option<f64>,
    pub order: CoordinateOrder,
    /// Grid size for the cooperative scalar subproblem.
    pub grid_points: usize,
    pub seed: u64,
    /// Rebuild every inverse from scratch after this many epochs.
    pub rebuild_every: usize,
    /// Keep the objective after every single coordinate update.
    pub record_updates: bool,
    /// Compare the maintained inverses against direct inverses every epoch.
    pub check_inverse: bool,
    /// Starting point; zero when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            tol: None,
            order: CoordinateOrder::RandomPermutation,
            grid_points: 64,
            seed: 0,
            rebuild_every: 25,
            record_updates: false,
            check_inverse: false,
            initial: None,
        }
    }
}

impl SolverOptions {
    /// Defaults, but run until an epoch no longer lowers the objective at
    /// all (or `max_epochs` is hit). Near flat valleys the default tolerance
    /// stops well short of the minimizer, which matters with ideal
    /// covariances where the minimizer is the exact answer.
    pub fn until_stationary(max_epochs: usize) -> Self {
        Self { max_epochs, tol: Some(0.0), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0) {
                return Err(Error::Config("tol must be non-negative".into()));
            }
        }
        if self.grid_points < 8 {
            return Err(Error::Config("grid_points must be at least 8".into()));
        }
        if self.rebuild_every == 0 {
            return Err(Error::Config("rebuild_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Solver output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionVector {
    /// Activity estimates (known fading) or gain estimates (unknown fading).
    pub values: Vec<f64>,
    pub regime: Regime,
    /// Objective at the start and after every epoch.
    pub objective_trace: Vec<f64>,
    pub epochs_run: usize,
    /// Objective after every coordinate update, when requested.
    pub update_trace: Vec<f64>,
    /// Relative distance between maintained and direct inverses per epoch,
    /// when requested.
    pub inverse_drift: Vec<f64>,
}

impl SolutionVector {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with the initial objective")
    }

    /// Epoch-level objective trace as `epoch,objective` rows.
    pub fn write_trace_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,objective")?;
        for (e, f) in self.objective_trace.iter().enumerate() {
            writeln!(w, "{e},{f}")?;
        }
        Ok(())
    }
}
