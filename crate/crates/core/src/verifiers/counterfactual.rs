//! Nearest point with a different predicted class, under a shrinking L∞
//! search region.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::{halfspace, local_system, stats, VerifyOptions};
use crate::error::{check_dim, Error, Result};
use crate::lp::{ConstraintSystem, CountingSolver, DenseVector, LinearConstraint, LpStatus, OptSense, Sense};
use crate::network::{ActivationCode, LocalLinearModel, ReluNetwork};
use crate::polytope::BoundedRegion;
use crate::traversal::{traverse_with_shrinking, TraversalStats, VisitOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn distance(self, x: &[f64], y: &[f64]) -> f64 {
        let d = x.iter().zip(y).map(|(a, b)| (a - b).abs());
        match self {
            Norm::L1 => d.sum(),
            Norm::L2 => d.map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Linf => d.fold(0.0, f64::max),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "l1" => Ok(Norm::L1),
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" => Ok(Norm::Linf),
            _ => Err(Error::invalid(format!("unknown norm {s:?}; expected l1, l2 or linf"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualSpec {
    pub origin: Vec<f64>,
    pub norm: Norm,
    /// Class threshold for scalar outputs.
    pub threshold: f64,
    /// Initial search region; the sentinel box when absent.
    pub region: Option<BoundedRegion>,
}

impl CounterfactualSpec {
    pub fn new(origin: Vec<f64>, norm: Norm) -> Self {
        CounterfactualSpec {
            origin,
            norm,
            threshold: 0.0,
            region: None,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_region(mut self, region: BoundedRegion) -> Self {
        self.region = Some(region);
        self
    }
}

/// Where a local model predicts class `class`, each winning condition held
/// with margin `margin`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRegion {
    pub class: usize,
    pub constraints: ConstraintSystem,
}

impl ClassRegion {
    /// The `Q − 1` halfspaces `(ŵ_q − ŵ_i)·x + (b̂_q − b̂_i) ≥ margin`.
    pub fn multiclass(model: &LocalLinearModel, class: usize, margin: f64) -> Result<Self> {
        let q = model.bias.len();
        let mut constraints = ConstraintSystem::new(model.weights.cols());
        for i in (0..q).filter(|&i| i != class) {
            let (w, b) = model.margin_row(class, i);
            constraints.push(halfspace(w, b, margin)?)?;
        }
        Ok(ClassRegion { class, constraints })
    }

    /// Scalar output: `o ≥ γ + margin` for class 1, `o ≤ γ − margin` for 0.
    pub fn binary(model: &LocalLinearModel, class: usize, threshold: f64, margin: f64) -> Result<Self> {
        let (w, b) = model.output_row(0);
        let c = if class == 1 {
            halfspace(w.to_vec(), b, threshold + margin)?
        } else {
            LinearConstraint::le(w.to_vec(), threshold - margin - b)?
        };
        Ok(ClassRegion {
            class,
            constraints: ConstraintSystem::from_constraints(w.len(), vec![c])?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterfactualStatus {
    Found,
    NoneFound,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualResult {
    pub status: CounterfactualStatus,
    pub norm: Norm,
    pub origin_class: usize,
    pub point: Option<Vec<f64>>,
    pub distance: Option<f64>,
    pub achieved_class: Option<usize>,
    pub code: Option<ActivationCode>,
    pub final_region: BoundedRegion,
    /// Best distance found in each visited polytope.
    pub per_polytope: Vec<(ActivationCode, Option<f64>)>,
    pub stats: TraversalStats,
}

/// `sys` lifted into `dim` variables, the extra ones unconstrained.
fn lift(sys: &ConstraintSystem, dim: usize) -> Result<ConstraintSystem> {
    let mut out = ConstraintSystem::new(dim);
    for c in sys.constraints() {
        let mut normal = c.normal.to_vec();
        normal.resize(dim, 0.0);
        out.push(LinearConstraint {
            normal: DenseVector::new(normal)?,
            ..c.clone()
        })?;
    }
    Ok(out)
}

/// Closest point of `sys` to `x0` under `norm`.
pub(crate) fn nearest(
    solver: &CountingSolver,
    norm: Norm,
    x0: &[f64],
    sys: &ConstraintSystem,
) -> Result<Option<Vec<f64>>> {
    let n = x0.len();
    if norm == Norm::L2 {
        let Some(p) = solver.project(x0, sys)? else {
            return Ok(None);
        };
        if p.gap > crate::lp::PROJECTION_GAP_TOL {
            return Err(Error::Numerical(format!("projection gap {} above tolerance", p.gap)));
        }
        return Ok(Some(p.point.into_vec()));
    }
    // L1: one slack per coordinate; L∞: one shared bound.
    let extra = if norm == Norm::L1 { n } else { 1 };
    let dim = n + extra;
    let mut lifted = lift(sys, dim)?;
    for j in 0..n {
        let s = if norm == Norm::L1 { n + j } else { n };
        for sign in [1.0, -1.0] {
            // s ± x_j ≥ ±x0_j
            let mut a = vec![0.0; dim];
            a[s] = 1.0;
            a[j] = sign;
            lifted.push(LinearConstraint::new(
                DenseVector::new(a)?,
                sign * x0[j],
                Sense::Ge,
                Default::default(),
            )?)?;
        }
    }
    let mut c = vec![0.0; dim];
    c[n..].iter_mut().for_each(|v| *v = 1.0);
    let sol = solver.optimize(&c, OptSense::Min, &lifted)?;
    match sol.status {
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Numerical("distance program reported unbounded".into())),
        LpStatus::Optimal => Ok(Some(sol.argopt.expect("optimal point")[..n].to_vec())),
    }
}

/// Closest point to `spec.origin` whose predicted class differs, found by
/// traversal under a search region that shrinks to the L∞ ball of the
/// incumbent distance.
pub fn counterfactual(
    net: &ReluNetwork,
    spec: &CounterfactualSpec,
    opts: &VerifyOptions,
) -> Result<CounterfactualResult> {
    let p = net.input_dim();
    check_dim(p, spec.origin.len())?;
    let tol = opts.tolerances;
    let initial = match &spec.region {
        Some(r) => r.clone(),
        None => BoundedRegion::sentinel(p, tol.sentinel),
    };
    let origin_class = net.predicted_class(&spec.origin, spec.threshold)?;
    let q = net.output_dim();
    let targets: Vec<usize> = if q == 1 {
        vec![1 - origin_class]
    } else {
        (0..q).filter(|&c| c != origin_class).collect()
    };
    let solver = CountingSolver::new(tol);
    let mut region_sys = initial.bounded_system(tol.sentinel)?;
    let mut best: Option<(f64, Vec<f64>, ActivationCode)> = None;
    let mut per_polytope = Vec::new();
    let x0 = &spec.origin;
    let run = traverse_with_shrinking(net, x0, &opts.config(initial.clone()), |poly, model| {
        let base = local_system(poly, &region_sys)?;
        let mut local: Option<(f64, Vec<f64>)> = None;
        for &t in &targets {
            let class = if q == 1 {
                ClassRegion::binary(model, t, spec.threshold, tol.interior)?
            } else {
                ClassRegion::multiclass(model, t, tol.interior)?
            };
            let mut sys = base.clone();
            sys.extend_from(&class.constraints)?;
            if let Some(x) = nearest(&solver, spec.norm, x0, &sys)? {
                let d = spec.norm.distance(&x, x0);
                if local.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    local = Some((d, x));
                }
            }
        }
        per_polytope.push((poly.code.clone(), local.as_ref().map(|l| l.0)));
        let Some((d, x)) = local else {
            return Ok(VisitOutcome::Continue);
        };
        if best.as_ref().is_some_and(|(bd, ..)| d >= *bd) {
            return Ok(VisitOutcome::Continue);
        }
        best = Some((d, x, poly.code.clone()));
        let shrunk = BoundedRegion::linf_ball(x0.clone(), d)?.intersect(&initial);
        region_sys = shrunk.bounded_system(tol.sentinel)?;
        Ok(VisitOutcome::ShrinkRegion(shrunk))
    })?;
    let status = if !run.complete() {
        CounterfactualStatus::Truncated
    } else if best.is_some() {
        CounterfactualStatus::Found
    } else {
        CounterfactualStatus::NoneFound
    };
    let achieved_class = match &best {
        Some((_, x, _)) => Some(net.predicted_class(x, spec.threshold)?),
        None => None,
    };
    let mut stats = stats(&run);
    stats.lp_calls += solver.calls();
    Ok(CounterfactualResult {
        status,
        norm: spec.norm,
        origin_class,
        distance: best.as_ref().map(|b| b.0),
        point: best.as_ref().map(|b| b.1.clone()),
        code: best.map(|b| b.2),
        achieved_class,
        final_region: run.final_region,
        per_polytope,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{identity, two_output};
    use crate::oracle::{grid_points, random_network};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(norm: Norm) -> CounterfactualSpec {
        CounterfactualSpec::new(vec![0.2, 0.2], norm).with_threshold(1.0)
    }

    #[test]
    fn identity_l2_and_l1() {
        let opts = VerifyOptions::default();
        let l2 = counterfactual(&identity(), &spec(Norm::L2), &opts).unwrap();
        assert_eq!(l2.status, CounterfactualStatus::Found);
        assert_eq!(l2.origin_class, 0);
        assert_eq!(l2.achieved_class, Some(1));
        assert!((l2.distance.unwrap() - 0.18f64.sqrt()).abs() < 1e-6);
        let x = l2.point.unwrap();
        assert!((x[0] - 0.5).abs() < 1e-6 && (x[1] - 0.5).abs() < 1e-6);
        let l1 = counterfactual(&identity(), &spec(Norm::L1), &opts).unwrap();
        assert!((l1.distance.unwrap() - 0.6).abs() < 1e-6);
        let linf = counterfactual(&identity(), &spec(Norm::Linf), &opts).unwrap();
        assert!((linf.distance.unwrap() - 0.3).abs() < 1e-6);
        assert_eq!(
            linf.final_region.bounding_box().unwrap().1,
            vec![0.2 + linf.distance.unwrap(); 2]
        );
    }

    #[test]
    fn none_found_and_multiclass() {
        let opts = VerifyOptions::default();
        let never = CounterfactualSpec::new(vec![0.2, 0.2], Norm::L2)
            .with_threshold(10.0)
            .with_region(BoundedRegion::boxed(vec![-1.0; 2], vec![1.0; 2]).unwrap());
        let r = counterfactual(&identity(), &never, &opts).unwrap();
        assert_eq!(r.status, CounterfactualStatus::NoneFound);
        assert_eq!(r.stats.polytopes_visited, 4);
        let mc = counterfactual(
            &two_output(),
            &CounterfactualSpec::new(vec![-0.5, 0.0], Norm::Linf),
            &opts,
        )
        .unwrap();
        assert_eq!(mc.origin_class, 1);
        assert_eq!(mc.achieved_class, Some(0));
        assert!((mc.distance.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn beats_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let region = BoundedRegion::boxed(vec![-1.0; 2], vec![1.0; 2]).unwrap();
        let grid = grid_points(&region, 0.02).unwrap();
        for norm in [Norm::L1, Norm::L2, Norm::Linf] {
            for _ in 0..5 {
                let net = random_network(&mut rng, 2, &[6, 4], 1);
                let s = CounterfactualSpec::new(vec![0.1, -0.1], norm).with_region(region.clone());
                let r = counterfactual(&net, &s, &VerifyOptions::default()).unwrap();
                let c0 = net.predicted_class(&s.origin, 0.0).unwrap();
                let grid_best = grid
                    .iter()
                    .filter(|x| net.predicted_class(x, 0.0).unwrap() != c0)
                    .map(|x| norm.distance(x, &s.origin))
                    .fold(f64::INFINITY, f64::min);
                match r.distance {
                    Some(d) => {
                        assert!(grid_best >= d - 0.02 * 2f64.sqrt());
                        let x = r.point.unwrap();
                        assert_ne!(net.predicted_class(&x, 0.0).unwrap(), c0);
                        assert!((norm.distance(&x, &s.origin) - d).abs() <= 1e-8);
                    }
                    None => assert!(grid_best.is_infinite()),
                }
            }
        }
    }

    #[test]
    fn norms_parse() {
        assert_eq!("l2".parse::<Norm>().unwrap(), Norm::L2);
        assert_eq!("inf".parse::<Norm>().unwrap(), Norm::Linf);
        assert!("l3".parse::<Norm>().is_err());
    }
}
