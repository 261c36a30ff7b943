//! Linear-programming feasibility by the phase-1 simplex method.
//!
//! Problems have the form `A x = b` with a sign tag per variable. They are
//! brought to standard form (`x ≥ 0`, `b ≥ 0`), artificial variables are
//! added, and their sum is minimized with Bland's rule on a dense tableau.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::RMat;

pub const DEFAULT_TOL: f64 = 1e-9;

/// Tie tolerance in ratio tests.
const LEX_EPS: f64 = 1e-12;

const RHS_SNAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarSign {
    NonNeg,
    NonPos,
    Free,
}

#[derive(Clone, Debug)]
pub struct FeasibilityProblem {
    pub a_eq: RMat,
    pub b_eq: Vec<f64>,
    pub sign: Vec<VarSign>,
}

impl FeasibilityProblem {
    pub fn new(a_eq: RMat, b_eq: Vec<f64>, sign: Vec<VarSign>) -> Result<Self> {
        let p = Self { a_eq, b_eq, sign };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.a_eq.shape();
        if m == 0 || n == 0 {
            return Err(Error::InvalidLp(format!("empty constraint matrix {m}×{n}")));
        }
        if self.b_eq.len() != m || self.sign.len() != n {
            return Err(Error::InvalidLp("b or sign length does not match A".into()));
        }
        if self.a_eq.iter().chain(&self.b_eq).any(|v| !v.is_finite()) {
            return Err(Error::InvalidLp("non-finite entry".into()));
        }
        Ok(())
    }

    /// Largest violation of the equalities (each row divided by its largest
    /// coefficient) or of the sign constraints.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let (m, n) = self.a_eq.shape();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            let row_max = (0..n).map(|j| self.a_eq[(i, j)].abs()).fold(self.b_eq[i].abs(), f64::max);
            let r: f64 = (0..n).map(|j| self.a_eq[(i, j)] * x[j]).sum::<f64>() - self.b_eq[i];
            if row_max > 0.0 {
                worst = worst.max(r.abs() / row_max);
            }
        }
        for (v, s) in x.iter().zip(&self.sign) {
            let viol = match s {
                VarSign::NonNeg => (-v).max(0.0),
                VarSign::NonPos => v.max(0.0),
                VarSign::Free => 0.0,
            };
            worst = worst.max(viol);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Feasible,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub witness: Option<Vec<f64>>,
    /// Residual of the witness (see [`FeasibilityProblem::residual`]), or the
    /// phase-1 optimum when infeasible.
    pub certificate_residual: f64,
    pub iterations: usize,
    pub tableau_dump: Option<String>,
}

#[derive(Clone, Debug)]
pub struct LpOptions {
    pub tol: f64,
    /// Defaults to `50·(m + n)` over the standard-form dimensions.
    pub iteration_cap: Option<usize>,
    /// Keep a text dump of the final tableau.
    pub dump_tableau: bool,
    /// Scale rows and columns to unit max-norm before solving.
    pub equilibrate: bool,
    pub rule: PivotRule,
}

/// Anti-cycling pivoting rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PivotRule {
    /// Lowest-index entering column, lowest-index basic variable on ratio ties.
    Bland,
    /// Most negative reduced cost entering, lexicographic ratio test.
    Lexicographic,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, iteration_cap: None, dump_tableau: false, equilibrate: true, rule: PivotRule::Lexicographic }
    }
}

pub fn solve_feasibility(p: &FeasibilityProblem, tol: f64) -> Result<LpOutcome> {
    solve_feasibility_with(p, &LpOptions { tol, ..Default::default() })
}

/// Dense phase-1 tableau. Artificial columns are kept as a running record of
/// the basis inverse (used by the lexicographic ratio test) but never enter.
struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows × (cols + rows + 1)`: structural, artificial, rhs.
    data: Vec<f64>,
    /// Reduced costs, rhs slot holds `-objective`.
    cost: Vec<f64>,
    /// Basic variable per row; `cols + i` is the artificial of row `i`.
    basis: Vec<usize>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + self.rows + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width() - 1)
    }

    fn objective(&self) -> f64 {
        -self.cost[self.width() - 1]
    }

    fn entering(&self, rule: PivotRule, tol: f64) -> Option<usize> {
        let candidates = (0..self.cols).filter(|&j| self.cost[j] < -tol);
        match rule {
            PivotRule::Bland => candidates.min(),
            PivotRule::Lexicographic => candidates.min_by(|&a, &b| self.cost[a].total_cmp(&self.cost[b])),
        }
    }

    /// Is row `i` lexicographically smaller than row `r` after dividing by
    /// their entries in column `e`? Compares `(rhs, B⁻¹ row)`.
    fn lex_less(&self, i: usize, r: usize, e: usize) -> bool {
        let (ai, ar) = (self.at(i, e), self.at(r, e));
        let rhs = self.width() - 1;
        for k in std::iter::once(rhs).chain(self.cols..rhs) {
            let (x, y) = (self.at(i, k) / ai, self.at(r, k) / ar);
            if x < y - LEX_EPS {
                return true;
            }
            if x > y + LEX_EPS {
                return false;
            }
        }
        self.basis[i] < self.basis[r]
    }

    fn leaving(&self, e: usize, rule: PivotRule, tol: f64) -> Option<usize> {
        let mut best: Option<usize> = None;
        for i in (0..self.rows).filter(|&i| self.at(i, e) > tol) {
            best = match best {
                None => Some(i),
                Some(r) => {
                    let better = match rule {
                        PivotRule::Lexicographic => self.lex_less(i, r, e),
                        PivotRule::Bland => {
                            let (x, y) = (self.rhs(i) / self.at(i, e), self.rhs(r) / self.at(r, e));
                            x < y - LEX_EPS || (x <= y + LEX_EPS && self.basis[i] < self.basis[r])
                        }
                    };
                    Some(if better { i } else { r })
                }
            };
        }
        best
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width();
        let piv = self.data[r * w + e];
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        prow.iter_mut().for_each(|v| *v /= piv);
        prow[e] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[e];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[e] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        eliminate(&mut self.cost);
        self.basis[r] = e;
        // keep degenerate rows exactly degenerate
        for i in 0..self.rows {
            let v = &mut self.data[i * w + w - 1];
            if v.abs() < RHS_SNAP {
                *v = 0.0;
            }
        }
    }

    fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tableau {}x{} objective {:e}", self.rows, self.cols, self.objective());
        for i in 0..self.rows {
            let _ = write!(s, "x{:<5}|", self.basis[i]);
            for j in 0..self.width() {
                let _ = write!(s, " {:>11.4e}", self.at(i, j));
            }
            s.push('\n');
        }
        let _ = write!(s, "cost  |");
        for v in &self.cost {
            let _ = write!(s, " {v:>11.4e}");
        }
        s.push('\n');
        s
    }
}

pub fn solve_feasibility_with(p: &FeasibilityProblem, opts: &LpOptions) -> Result<LpOutcome> {
    p.validate()?;
    let (m, n) = p.a_eq.shape();

    let mut col_scale = vec![1.0; n];
    let mut row_scale = vec![1.0; m];
    if opts.equilibrate {
        for (j, cs) in col_scale.iter_mut().enumerate() {
            let mx = p.a_eq.column(j).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if mx > 0.0 {
                *cs = 1.0 / mx;
            }
        }
        for (i, rs) in row_scale.iter_mut().enumerate() {
            let mx = (0..n).fold(p.b_eq[i].abs(), |a, j| a.max((p.a_eq[(i, j)] * col_scale[j]).abs()));
            if mx > 0.0 {
                *rs = 1.0 / mx;
            }
        }
    }

    // standard-form columns: (original variable, orientation)
    let mut std_cols: Vec<(usize, f64)> = Vec::with_capacity(2 * n);
    for (j, s) in p.sign.iter().enumerate() {
        match s {
            VarSign::NonNeg => std_cols.push((j, 1.0)),
            VarSign::NonPos => std_cols.push((j, -1.0)),
            VarSign::Free => {
                std_cols.push((j, 1.0));
                std_cols.push((j, -1.0));
            }
        }
    }
    let cols = std_cols.len();
    let w = cols + m + 1;
    let mut data = vec![0.0; m * w];
    let mut cost = vec![0.0; w];
    for i in 0..m {
        let b = p.b_eq[i] * row_scale[i];
        let flip = if b < 0.0 { -1.0 } else { 1.0 };
        for (c, &(j, o)) in std_cols.iter().enumerate() {
            data[i * w + c] = flip * o * p.a_eq[(i, j)] * col_scale[j] * row_scale[i];
        }
        data[i * w + cols + i] = 1.0;
        data[i * w + w - 1] = flip * b;
        for c in (0..cols).chain(std::iter::once(w - 1)) {
            cost[c] -= data[i * w + c];
        }
    }
    let mut t = Tableau { rows: m, cols, data, cost, basis: (cols..cols + m).collect() };

    let cap = opts.iteration_cap.unwrap_or(50 * (m + cols));
    let tol = opts.tol;
    let mut iterations = 0;
    while let Some(e) = t.entering(opts.rule, tol) {
        let Some(r) = t.leaving(e, opts.rule, tol) else {
            // phase 1 is bounded below; this only happens when every entry in
            // the column is below the pivot tolerance
            t.cost[e] = 0.0;
            continue;
        };
        if iterations >= cap {
            return Err(Error::IterationCap(cap));
        }
        t.pivot(r, e);
        iterations += 1;
    }

    let optimum = t.objective().max(0.0);
    let tableau_dump = opts.dump_tableau.then(|| t.dump());
    if optimum > tol {
        return Ok(LpOutcome {
            status: LpStatus::Infeasible,
            witness: None,
            certificate_residual: optimum,
            iterations,
            tableau_dump,
        });
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        let bv = t.basis[i];
        if bv < cols {
            let (j, o) = std_cols[bv];
            x[j] += o * t.rhs(i).max(0.0);
        }
    }
    for (v, s) in x.iter_mut().zip(&col_scale) {
        *v *= s;
    }
    let certificate_residual = p.residual(&x);
    Ok(LpOutcome { status: LpStatus::Feasible, witness: Some(x), certificate_residual, iterations, tableau_dump })
}
