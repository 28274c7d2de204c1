//! Linear output properties `a·o + β ≤ 0` over a region.

use serde::{Deserialize, Serialize};

use super::{dot_row, extremum, local_system, region_start, stats, verdict_of, Verdict, VerifyOptions};
use crate::error::{check_dim, Error, Result};
use crate::lp::{CountingSolver, OptSense};
use crate::network::{ActivationCode, ReluNetwork};
use crate::polytope::BoundedRegion;
use crate::traversal::{traverse, TraversalStats, VisitOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyMode {
    #[default]
    Forall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inequality {
    pub a: Vec<f64>,
    pub beta: f64,
}

/// Every inequality must hold at every point of the region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertySpec {
    pub region: BoundedRegion,
    pub inequalities: Vec<Inequality>,
    #[serde(default)]
    pub mode: PropertyMode,
}

impl PropertySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("property", e.to_string()))
    }

    pub fn validate(&self, net: &ReluNetwork) -> Result<()> {
        self.region.validate()?;
        check_dim(net.input_dim(), self.region.dim()?)?;
        if self.inequalities.is_empty() {
            return Err(Error::invalid("property has no inequalities"));
        }
        for (k, ineq) in self.inequalities.iter().enumerate() {
            if ineq.a.len() != net.output_dim() {
                return Err(Error::invalid(format!(
                    "inequality {k} has {} coefficients for {} outputs",
                    ineq.a.len(),
                    net.output_dim()
                )));
            }
            if !ineq.beta.is_finite() || ineq.a.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("inequality {k} has non-finite coefficients")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub verdict: Verdict,
    /// Index of the broken inequality, when violated.
    pub inequality: Option<usize>,
    /// Largest `a_k·o + β_k` per inequality in each visited polytope.
    pub per_polytope: Vec<(ActivationCode, Vec<f64>)>,
    pub stats: TraversalStats,
}

/// Maximizes each `a_k·o + β_k` polytope by polytope and stops at the
/// first value above the numeric tolerance.
pub fn verify_output_property(net: &ReluNetwork, spec: &PropertySpec, opts: &VerifyOptions) -> Result<PropertyResult> {
    spec.validate(net)?;
    let tol = opts.tolerances;
    let start = region_start(&spec.region, tol)?;
    let region_sys = spec.region.bounded_system(tol.sentinel)?;
    let solver = CountingSolver::new(tol);
    let mut per_polytope = Vec::new();
    let mut found: Option<(Vec<f64>, ActivationCode, f64)> = None;
    let mut broken = None;
    let run = traverse(net, &start, &opts.config(spec.region.clone()), |p, model| {
        let sys = local_system(p, &region_sys)?;
        let mut values = Vec::with_capacity(spec.inequalities.len());
        for (k, ineq) in spec.inequalities.iter().enumerate() {
            let (w, b) = dot_row(&ineq.a, model);
            let (v, x) = extremum(&solver, &w, b + ineq.beta, OptSense::Max, &sys)?;
            values.push(v);
            if v > tol.numeric && found.is_none() {
                found = Some((x, p.code.clone(), v));
                broken = Some(k);
            }
        }
        per_polytope.push((p.code.clone(), values));
        Ok(if found.is_some() {
            VisitOutcome::Stop
        } else {
            VisitOutcome::Continue
        })
    })?;
    let verdict = verdict_of(found, &run);
    let mut stats = stats(&run);
    stats.lp_calls += solver.calls();
    Ok(PropertyResult {
        verdict,
        inequality: broken,
        per_polytope,
        stats,
    })
}
