//! Linear-programming kernel: feasibility, linear optimization, Chebyshev
//! interior points and Euclidean projection onto polyhedra.
//!
//! Every constraint is rescaled to a unit normal before it reaches the
//! simplex, so the interior margin of an open constraint is a Euclidean
//! distance rather than a raw slack.

pub mod linalg;
mod projection;
mod simplex;
pub mod system;

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

pub use linalg::{dot, norm2, DenseMatrix, DenseVector};
pub use projection::{Projection, PROJECTION_GAP_TOL};
pub use system::{ConstraintSystem, LinearConstraint, Sense, Strictness};

use crate::error::{check_dim, Error, Result};
use simplex::{DenseLp, SimplexOutcome};

/// Interior margin for open constraints.
pub const DEFAULT_INTERIOR_TOL: f64 = 1e-7;
/// Satisfaction tolerance for closed constraints.
pub const DEFAULT_NUMERIC_TOL: f64 = 1e-9;
/// Half-width of the box that stands in for an unbounded input space.
pub const DEFAULT_SENTINEL: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub interior: f64,
    pub numeric: f64,
    pub sentinel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            interior: DEFAULT_INTERIOR_TOL,
            numeric: DEFAULT_NUMERIC_TOL,
            sentinel: DEFAULT_SENTINEL,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.interior) && ok(self.numeric) && ok(self.sentinel) {
            Ok(())
        } else {
            Err(Error::invalid("tolerances must be positive and finite"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    pub witness: Option<DenseVector>,
    /// Minimum signed distance of the witness to the constraint
    /// hyperplanes; reported by [`LpSolver::interior_point`] only.
    pub depth: Option<f64>,
}

impl FeasibilityResult {
    fn infeasible() -> Self {
        FeasibilityResult {
            status: FeasibilityStatus::Infeasible,
            witness: None,
            depth: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptSense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub argopt: Option<DenseVector>,
    pub value: Option<f64>,
}

impl LpSolution {
    fn with_status(status: LpStatus) -> Self {
        LpSolution {
            status,
            argopt: None,
            value: None,
        }
    }
}

/// Normalized `≤` rows of a system, or `None` when a trivial constraint
/// already makes it infeasible.
struct Rows {
    lp: DenseLp,
    /// Largest |rhs| among rows with negative rhs (phase-I scale).
    neg_scale: f64,
}

/// LP front end. Cheap to copy; holds tolerances and the iteration cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpSolver {
    pub tol: Tolerances,
    pub max_iterations: usize,
}

impl Default for LpSolver {
    fn default() -> Self {
        LpSolver::new(Tolerances::default())
    }
}

impl LpSolver {
    pub fn new(tol: Tolerances) -> Self {
        LpSolver {
            tol,
            max_iterations: 50_000,
        }
    }

    fn rows(&self, system: &ConstraintSystem, extra_cols: usize, with_margins: bool) -> Option<Rows> {
        let n = system.dim() + extra_cols;
        let mut lp = DenseLp::new(n);
        let mut neg_scale: f64 = 0.0;
        let mut row = vec![0.0; n];
        for c in system.constraints() {
            if c.is_trivial() {
                if !c.trivially_satisfied() {
                    return None;
                }
                continue;
            }
            let (a, b) = c.as_le();
            let norm = norm2(&a);
            let margin = match (with_margins, c.strictness) {
                (true, Strictness::Open) => self.tol.interior + self.tol.numeric,
                _ => 0.0,
            };
            row[..a.len()].iter_mut().zip(&a).for_each(|(r, v)| *r = v / norm);
            row[a.len()..].iter_mut().for_each(|r| *r = 0.0);
            let rhs = b / norm - margin;
            if rhs < 0.0 {
                neg_scale = neg_scale.max(-rhs);
            }
            lp.push_row(&row, rhs);
        }
        Some(Rows { lp, neg_scale })
    }

    fn feas_tol(&self, neg_scale: f64) -> f64 {
        self.tol.numeric * 1e-2 * (1.0 + neg_scale)
    }

    fn check_witness(&self, system: &ConstraintSystem, x: &[f64]) -> Result<()> {
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let slack_tol = self.tol.numeric * scale;
        match system
            .constraints()
            .iter()
            .position(|c| !c.satisfied_by(x, self.tol.interior, slack_tol))
        {
            None => Ok(()),
            Some(i) => Err(Error::Numerical(format!(
                "witness violates constraint {i} (distance {:e})",
                system[i].distance(x)
            ))),
        }
    }

    /// Phase-I feasibility with open constraints held at the interior margin.
    pub fn feasibility(&self, system: &ConstraintSystem) -> Result<FeasibilityResult> {
        if system.dim() == 0 {
            return Err(Error::invalid("constraint system has dimension 0"));
        }
        let Some(rows) = self.rows(system, 0, true) else {
            return Ok(FeasibilityResult::infeasible());
        };
        match rows
            .lp
            .solve(None, self.feas_tol(rows.neg_scale), self.max_iterations)?
        {
            SimplexOutcome::Optimal { x, .. } => {
                self.check_witness(system, &x)?;
                Ok(FeasibilityResult {
                    status: FeasibilityStatus::Feasible,
                    witness: Some(DenseVector::from_finite(x)),
                    depth: None,
                })
            }
            SimplexOutcome::Infeasible => Ok(FeasibilityResult::infeasible()),
            SimplexOutcome::Unbounded => unreachable!("phase I cannot be unbounded"),
        }
    }

    /// Optimizes `objective · x` over the system (open constraints at margin).
    pub fn optimize(&self, objective: &[f64], sense: OptSense, system: &ConstraintSystem) -> Result<LpSolution> {
        check_dim(system.dim(), objective.len())?;
        if objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("objective has non-finite entries"));
        }
        let Some(rows) = self.rows(system, 0, true) else {
            return Ok(LpSolution::with_status(LpStatus::Infeasible));
        };
        let c: Vec<f64> = match sense {
            OptSense::Min => objective.to_vec(),
            OptSense::Max => objective.iter().map(|v| -v).collect(),
        };
        match rows
            .lp
            .solve(Some(&c), self.feas_tol(rows.neg_scale), self.max_iterations)?
        {
            SimplexOutcome::Optimal { x, .. } => {
                self.check_witness(system, &x)?;
                let value = dot(objective, &x);
                Ok(LpSolution {
                    status: LpStatus::Optimal,
                    argopt: Some(DenseVector::from_finite(x)),
                    value: Some(value),
                })
            }
            SimplexOutcome::Infeasible => Ok(LpSolution::with_status(LpStatus::Infeasible)),
            SimplexOutcome::Unbounded => Ok(LpSolution::with_status(LpStatus::Unbounded)),
        }
    }

    /// Chebyshev-style center: maximizes the minimum signed distance to the
    /// non-trivial constraints (capped at the sentinel). Infeasible when the
    /// best depth is below the interior margin.
    pub fn interior_point(&self, system: &ConstraintSystem) -> Result<FeasibilityResult> {
        if system.dim() == 0 {
            return Err(Error::invalid("constraint system has dimension 0"));
        }
        if system.constraints().iter().all(LinearConstraint::is_trivial) {
            return Err(Error::invalid(
                "interior point needs at least one non-trivial constraint",
            ));
        }
        let p = system.dim();
        let Some(mut rows) = self.rows(system, 1, false) else {
            return Ok(FeasibilityResult::infeasible());
        };
        // Append the depth column: a·x + t ≤ b.
        let n = p + 1;
        for i in 0..rows.lp.rows() {
            rows.lp.a[i * n + p] = 1.0;
        }
        let mut cap = vec![0.0; n];
        cap[p] = 1.0;
        rows.lp.push_row(&cap, self.tol.sentinel);
        let mut c = vec![0.0; n];
        c[p] = -1.0;
        match rows
            .lp
            .solve(Some(&c), self.feas_tol(rows.neg_scale), self.max_iterations)?
        {
            SimplexOutcome::Optimal { mut x, .. } => {
                let depth = x.pop().unwrap_or(0.0);
                if depth < self.tol.interior {
                    return Ok(FeasibilityResult::infeasible());
                }
                Ok(FeasibilityResult {
                    status: FeasibilityStatus::Feasible,
                    witness: Some(DenseVector::from_finite(x)),
                    depth: Some(depth),
                })
            }
            // Cannot happen with at least one row, but stay total.
            SimplexOutcome::Infeasible | SimplexOutcome::Unbounded => Ok(FeasibilityResult::infeasible()),
        }
    }

    /// Euclidean projection of `x0` onto the system (open constraints at
    /// margin). `None` when the system is infeasible.
    pub fn project(&self, x0: &[f64], system: &ConstraintSystem) -> Result<Option<Projection>> {
        check_dim(system.dim(), x0.len())?;
        let start = self.feasibility(system)?;
        let Some(start) = start.witness else {
            return Ok(None);
        };
        let rows = self
            .rows(system, 0, true)
            .expect("feasible system has satisfiable trivial constraints");
        projection::active_set(&rows.lp, x0, start.into_vec(), self.max_iterations).map(Some)
    }
}

/// [`LpSolver`] that counts the problems it is asked to solve. Shareable
/// across threads.
#[derive(Debug, Default)]
pub struct CountingSolver {
    pub solver: LpSolver,
    calls: AtomicU64,
}

impl CountingSolver {
    pub fn new(tol: Tolerances) -> Self {
        CountingSolver {
            solver: LpSolver::new(tol),
            calls: AtomicU64::new(0),
        }
    }

    pub fn tol(&self) -> &Tolerances {
        &self.solver.tol
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn tick(&self) {
        self.calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn feasibility(&self, system: &ConstraintSystem) -> Result<FeasibilityResult> {
        self.tick();
        self.solver.feasibility(system)
    }

    pub fn optimize(&self, objective: &[f64], sense: OptSense, system: &ConstraintSystem) -> Result<LpSolution> {
        self.tick();
        self.solver.optimize(objective, sense, system)
    }

    pub fn interior_point(&self, system: &ConstraintSystem) -> Result<FeasibilityResult> {
        self.tick();
        self.solver.interior_point(system)
    }

    pub fn project(&self, x0: &[f64], system: &ConstraintSystem) -> Result<Option<Projection>> {
        self.tick();
        self.solver.project(x0, system)
    }
}

/// Feasibility under default tolerances.
pub fn solve_feasibility(system: &ConstraintSystem) -> Result<FeasibilityResult> {
    LpSolver::default().feasibility(system)
}

/// Linear optimization under default tolerances.
pub fn optimize_linear(objective: &[f64], sense: OptSense, system: &ConstraintSystem) -> Result<LpSolution> {
    LpSolver::default().optimize(objective, sense, system)
}

/// Chebyshev interior point under default tolerances.
pub fn interior_point(system: &ConstraintSystem) -> Result<FeasibilityResult> {
    LpSolver::default().interior_point(system)
}
