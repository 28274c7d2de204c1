//! Verification applications, each a visitor over the traversal.

mod counterfactual;
mod monotonicity;
mod property;
mod range;
mod robustness;

pub use counterfactual::{
    counterfactual, ClassRegion, CounterfactualResult, CounterfactualSpec, CounterfactualStatus, Norm,
};
pub use monotonicity::{monotonicity, Direction, MonotonicityReport, MonotonicityVerdict};
pub use property::{verify_output_property, Inequality, PropertyMode, PropertyResult, PropertySpec};
pub use range::{
    adversarial_binary, adversarial_multiclass, output_range, AttackMode, BinaryAttack, MulticlassAttack,
    PolytopeRange, RangeResult,
};
pub use robustness::{robustness_check, RobustnessResult, RobustnessSpec};

use serde::Serialize;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::lp::{dot, ConstraintSystem, CountingSolver, LinearConstraint, OptSense, Tolerances};
use crate::network::{ActivationCode, ReluNetwork};
use crate::polytope::{BoundedRegion, Polytope};
use crate::traversal::{TraversalConfig, TraversalResult, TraversalStats};

/// Traversal settings shared by the verifiers; the region comes from the
/// verification problem.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub max_polytopes: Option<usize>,
    pub time_budget: Option<Duration>,
    pub prescreen: bool,
    pub workers: usize,
    pub tolerances: Tolerances,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            max_polytopes: None,
            time_budget: None,
            prescreen: true,
            workers: 1,
            tolerances: Tolerances::default(),
        }
    }
}

impl VerifyOptions {
    pub fn config(&self, region: BoundedRegion) -> TraversalConfig {
        TraversalConfig {
            region,
            max_polytopes: self.max_polytopes,
            time_budget: self.time_budget,
            prescreen: self.prescreen,
            workers: self.workers,
            tolerances: self.tolerances,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    Violated {
        witness: Vec<f64>,
        code: ActivationCode,
        /// Amount by which the witness breaks the property.
        margin: f64,
    },
    Truncated,
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::Verified)
    }

    pub fn is_violated(&self) -> bool {
        matches!(self, Verdict::Violated { .. })
    }
}

fn verdict_of(violation: Option<(Vec<f64>, ActivationCode, f64)>, run: &TraversalResult) -> Verdict {
    match violation {
        Some((witness, code, margin)) => Verdict::Violated { witness, code, margin },
        None if run.complete() => Verdict::Verified,
        None => Verdict::Truncated,
    }
}

/// Optimization domain for one visited polytope: its closure within the
/// region.
fn local_system(p: &Polytope, region_sys: &ConstraintSystem) -> Result<ConstraintSystem> {
    let mut sys = p.system.closure();
    sys.extend_from(region_sys)?;
    Ok(sys)
}

/// Optimum of `w·x + b` over `sys`.
fn extremum(
    solver: &CountingSolver,
    w: &[f64],
    b: f64,
    sense: OptSense,
    sys: &ConstraintSystem,
) -> Result<(f64, Vec<f64>)> {
    let sol = solver.optimize(w, sense, sys)?;
    match sol.argopt {
        Some(x) => Ok((dot(w, &x) + b, x.into_vec())),
        None => Err(Error::Numerical(format!(
            "linear program over a visited polytope ended {:?}",
            sol.status
        ))),
    }
}

fn require_scalar(net: &ReluNetwork) -> Result<()> {
    if net.output_dim() == 1 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "this verifier needs a scalar output, the network has {}",
            net.output_dim()
        )))
    }
}

/// A point of the region used as the traversal start.
fn region_start(region: &BoundedRegion, tol: Tolerances) -> Result<Vec<f64>> {
    region
        .center(&CountingSolver::new(tol))?
        .ok_or_else(|| Error::invalid("the region is empty"))
}

fn check_start(region: &BoundedRegion, x0: &[f64], tol: Tolerances) -> Result<()> {
    let scale = 1.0 + x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if region.contains(x0, tol.numeric * scale) {
        Ok(())
    } else {
        Err(Error::invalid("the origin point lies outside the region"))
    }
}

/// `a·(Ŵᵒ x + b̂ᵒ)` as an affine function `(w, b)` of the input.
fn dot_row(a: &[f64], model: &crate::network::LocalLinearModel) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; model.weights.cols()];
    let mut b = 0.0;
    for (k, ak) in a.iter().enumerate() {
        let (row, bk) = model.output_row(k);
        w.iter_mut().zip(row).for_each(|(wi, r)| *wi += ak * r);
        b += ak * bk;
    }
    (w, b)
}

fn halfspace(w: Vec<f64>, b: f64, lower: f64) -> Result<LinearConstraint> {
    // w·x + b ≥ lower
    LinearConstraint::ge(w, lower - b)
}

/// Stats snapshot helper so results can carry stats by value.
fn stats(run: &TraversalResult) -> TraversalStats {
    run.stats.clone()
}
