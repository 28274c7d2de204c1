//! L∞ robustness with early stop on the first adversarial witness.

use serde::Serialize;

use super::{extremum, local_system, stats, verdict_of, Verdict, VerifyOptions};
use crate::error::{check_dim, Error, Result};
use crate::lp::{CountingSolver, OptSense};
use crate::network::{ActivationCode, ReluNetwork};
use crate::polytope::BoundedRegion;
use crate::traversal::{traverse, TraversalStats, VisitOutcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessSpec {
    pub origin: Vec<f64>,
    pub epsilon: f64,
    /// Feature bounds the perturbed point must respect.
    pub clip: Option<(Vec<f64>, Vec<f64>)>,
    /// Class threshold for scalar outputs.
    pub threshold: f64,
}

impl RobustnessSpec {
    pub fn new(origin: Vec<f64>, epsilon: f64) -> Self {
        RobustnessSpec {
            origin,
            epsilon,
            clip: None,
            threshold: 0.0,
        }
    }

    pub fn with_clip(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.clip = Some((lower, upper));
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn region(&self) -> Result<BoundedRegion> {
        let ball = BoundedRegion::linf_ball(self.origin.clone(), self.epsilon)?;
        match &self.clip {
            None => Ok(ball),
            Some((lo, hi)) => Ok(ball.intersect(&BoundedRegion::boxed(lo.clone(), hi.clone())?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessResult {
    pub origin_class: usize,
    pub verdict: Verdict,
    /// Class predicted at the witness, when violated.
    pub witness_class: Option<usize>,
    pub region: BoundedRegion,
    pub stats: TraversalStats,
}

/// Searches the clipped L∞ ball for a point whose predicted class differs
/// from the origin's and stops at the first one found.
pub fn robustness_check(net: &ReluNetwork, spec: &RobustnessSpec, opts: &VerifyOptions) -> Result<RobustnessResult> {
    check_dim(net.input_dim(), spec.origin.len())?;
    let region = spec.region()?;
    let scale = 1.0 + spec.origin.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !region.contains(&spec.origin, opts.tolerances.numeric * scale) {
        return Err(Error::invalid("the origin point lies outside the clipping box"));
    }
    let origin_class = net.predicted_class(&spec.origin, spec.threshold)?;
    let q = net.output_dim();
    let tol = opts.tolerances.numeric;
    let region_sys = region.bounded_system(opts.tolerances.sentinel)?;
    let solver = CountingSolver::new(opts.tolerances);
    let mut found: Option<(Vec<f64>, ActivationCode, f64)> = None;
    let run = traverse(net, &spec.origin, &opts.config(region.clone()), |p, model| {
        let sys = local_system(p, &region_sys)?;
        let hit = if q == 1 {
            let (w, b) = model.output_row(0);
            if origin_class == 1 {
                let (v, x) = extremum(&solver, w, b, OptSense::Min, &sys)?;
                (spec.threshold - v > tol).then_some((x, spec.threshold - v))
            } else {
                let (v, x) = extremum(&solver, w, b, OptSense::Max, &sys)?;
                (v - spec.threshold > tol).then_some((x, v - spec.threshold))
            }
        } else {
            let mut hit = None;
            for i in (0..q).filter(|&i| i != origin_class) {
                let (w, b) = model.margin_row(i, origin_class);
                let (v, x) = extremum(&solver, &w, b, OptSense::Max, &sys)?;
                if v > tol {
                    hit = Some((x, v));
                    break;
                }
            }
            hit
        };
        match hit {
            Some((x, margin)) => {
                found = Some((x, p.code.clone(), margin));
                Ok(VisitOutcome::Stop)
            }
            None => Ok(VisitOutcome::Continue),
        }
    })?;
    let witness_class = match &found {
        Some((x, ..)) => Some(net.predicted_class(x, spec.threshold)?),
        None => None,
    };
    let verdict = verdict_of(found, &run);
    let mut stats = stats(&run);
    stats.lp_calls += solver.calls();
    Ok(RobustnessResult {
        origin_class,
        verdict,
        witness_class,
        region,
        stats,
    })
}
