//! Output range and local adversarial attacks.

use serde::Serialize;

use super::{
    check_start, extremum, local_system, region_start, require_scalar, stats, verdict_of, Verdict, VerifyOptions,
};
use crate::error::{check_dim, Error, Result};
use crate::lp::{linalg::solve_dense, ConstraintSystem, CountingSolver, OptSense};
use crate::network::{ActivationCode, LocalLinearModel, ReluNetwork};
use crate::polytope::BoundedRegion;
use crate::traversal::{traverse, TraversalStats, VisitOutcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolytopeRange {
    pub code: ActivationCode,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeResult {
    pub output_index: usize,
    pub min: f64,
    pub max: f64,
    pub argmin: Vec<f64>,
    pub argmax: Vec<f64>,
    pub argmin_code: ActivationCode,
    pub argmax_code: ActivationCode,
    pub per_polytope: Vec<PolytopeRange>,
    pub truncated: bool,
    pub stats: TraversalStats,
}

/// Range of output `output_index` over `region`, optimal over every
/// polytope meeting it unless truncated.
pub fn output_range(
    net: &ReluNetwork,
    region: &BoundedRegion,
    output_index: usize,
    opts: &VerifyOptions,
) -> Result<RangeResult> {
    let start = region_start(region, opts.tolerances)?;
    range_from(net, region, &start, output_index, opts)
}

fn range_from(
    net: &ReluNetwork,
    region: &BoundedRegion,
    start: &[f64],
    k: usize,
    opts: &VerifyOptions,
) -> Result<RangeResult> {
    if k >= net.output_dim() {
        return Err(Error::invalid(format!(
            "output index {k} out of range for {} outputs",
            net.output_dim()
        )));
    }
    let config = opts.config(region.clone());
    let region_sys = region.bounded_system(opts.tolerances.sentinel)?;
    let solver = CountingSolver::new(opts.tolerances);
    let mut per_polytope = Vec::new();
    let mut lo: Option<(f64, Vec<f64>, ActivationCode)> = None;
    let mut hi: Option<(f64, Vec<f64>, ActivationCode)> = None;
    let run = traverse(net, start, &config, |p, model| {
        let sys = local_system(p, &region_sys)?;
        let (w, b) = model.output_row(k);
        let (min, argmin) = extremum(&solver, w, b, OptSense::Min, &sys)?;
        let (max, argmax) = extremum(&solver, w, b, OptSense::Max, &sys)?;
        if lo.as_ref().is_none_or(|(v, _, _)| min < *v) {
            lo = Some((min, argmin, p.code.clone()));
        }
        if hi.as_ref().is_none_or(|(v, _, _)| max > *v) {
            hi = Some((max, argmax, p.code.clone()));
        }
        per_polytope.push(PolytopeRange {
            code: p.code.clone(),
            min,
            max,
        });
        Ok(VisitOutcome::Continue)
    })?;
    let (Some((min, argmin, argmin_code)), Some((max, argmax, argmax_code))) = (lo, hi) else {
        return Err(Error::invalid("no polytope meets the region"));
    };
    let mut stats = stats(&run);
    stats.lp_calls += solver.calls();
    Ok(RangeResult {
        output_index: k,
        min,
        max,
        argmin,
        argmax,
        argmin_code,
        argmax_code,
        per_polytope,
        truncated: run.truncated,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryAttack {
    pub label: u8,
    /// Output at the origin point.
    pub origin_value: f64,
    /// Most adversarial point: the minimizer for label 1, the maximizer for 0.
    pub point: Vec<f64>,
    pub value: f64,
    pub code: ActivationCode,
    pub range: RangeResult,
}

/// Attack on a scalar-output classifier: drives the pre-link output down
/// for label 1 and up for label 0.
pub fn adversarial_binary(
    net: &ReluNetwork,
    x0: &[f64],
    region: &BoundedRegion,
    label: u8,
    opts: &VerifyOptions,
) -> Result<BinaryAttack> {
    require_scalar(net)?;
    check_dim(net.input_dim(), x0.len())?;
    if label > 1 {
        return Err(Error::invalid("binary label must be 0 or 1"));
    }
    check_start(region, x0, opts.tolerances)?;
    let range = range_from(net, region, x0, 0, opts)?;
    let (point, value, code) = if label == 1 {
        (range.argmin.clone(), range.min, range.argmin_code.clone())
    } else {
        (range.argmax.clone(), range.max, range.argmax_code.clone())
    };
    Ok(BinaryAttack {
        label,
        origin_value: net.forward(x0)?[0],
        point,
        value,
        code,
        range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Maximize each competitor margin by LP.
    Sound,
    /// Also maximize the sum of exponentiated margins over polytope vertices.
    Exact,
}

/// Largest input dimension accepted by [`AttackMode::Exact`].
pub const MAX_EXACT_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MulticlassAttack {
    pub class: usize,
    pub verdict: Verdict,
    /// Largest competitor margin `oᵢ − o_q` over the region.
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
    pub worst_code: ActivationCode,
    pub competitor: usize,
    /// Largest competitor margin per visited polytope.
    pub per_polytope: Vec<(ActivationCode, f64)>,
    /// Maximum of `Σ_{i≠q} exp(oᵢ − o_q)` and its maximizer, in exact mode.
    pub exact_objective: Option<f64>,
    pub exact_point: Option<Vec<f64>>,
    pub truncated: bool,
    pub stats: TraversalStats,
}

/// Attack on class `class` of a multi-output classifier. The verdict is
/// violated when some competitor's margin exceeds the numeric tolerance.
pub fn adversarial_multiclass(
    net: &ReluNetwork,
    x0: &[f64],
    region: &BoundedRegion,
    class: usize,
    mode: AttackMode,
    opts: &VerifyOptions,
) -> Result<MulticlassAttack> {
    let q = net.output_dim();
    if q < 2 {
        return Err(Error::invalid("multiclass attack needs at least two outputs"));
    }
    if class >= q {
        return Err(Error::invalid(format!("class {class} out of range for {q} outputs")));
    }
    if mode == AttackMode::Exact && net.input_dim() > MAX_EXACT_DIM {
        return Err(Error::Unsupported(format!(
            "exact attack mode needs input dimension at most {MAX_EXACT_DIM}, got {}",
            net.input_dim()
        )));
    }
    check_dim(net.input_dim(), x0.len())?;
    check_start(region, x0, opts.tolerances)?;
    let config = opts.config(region.clone());
    let region_sys = region.bounded_system(opts.tolerances.sentinel)?;
    let solver = CountingSolver::new(opts.tolerances);
    let mut per_polytope = Vec::new();
    let mut worst: Option<(f64, Vec<f64>, ActivationCode, usize)> = None;
    let mut exact: Option<(f64, Vec<f64>)> = None;
    let run = traverse(net, x0, &config, |p, model| {
        let sys = local_system(p, &region_sys)?;
        let mut local = f64::NEG_INFINITY;
        for i in (0..q).filter(|&i| i != class) {
            let (w, b) = model.margin_row(i, class);
            let (v, x) = extremum(&solver, &w, b, OptSense::Max, &sys)?;
            local = local.max(v);
            if worst.as_ref().is_none_or(|(best, ..)| v > *best) {
                worst = Some((v, x, p.code.clone(), i));
            }
        }
        per_polytope.push((p.code.clone(), local));
        if mode == AttackMode::Exact {
            if let Some((v, x)) = best_vertex(&sys, |x| softmax_objective(model, class, x))? {
                if exact.as_ref().is_none_or(|(best, _)| v > *best) {
                    exact = Some((v, x));
                }
            }
        }
        Ok(VisitOutcome::Continue)
    })?;
    let (worst_margin, worst_point, worst_code, competitor) =
        worst.ok_or_else(|| Error::invalid("no polytope meets the region"))?;
    let violation =
        (worst_margin > opts.tolerances.numeric).then(|| (worst_point.clone(), worst_code.clone(), worst_margin));
    let verdict = verdict_of(violation, &run);
    let mut stats = stats(&run);
    stats.lp_calls += solver.calls();
    Ok(MulticlassAttack {
        class,
        verdict,
        worst_margin,
        worst_point,
        worst_code,
        competitor,
        per_polytope,
        exact_objective: exact.as_ref().map(|e| e.0),
        exact_point: exact.map(|e| e.1),
        truncated: run.truncated,
        stats,
    })
}

fn softmax_objective(model: &LocalLinearModel, class: usize, x: &[f64]) -> f64 {
    let oq = model.evaluate_row(class, x);
    (0..model.bias.len())
        .filter(|&i| i != class)
        .map(|i| (model.evaluate_row(i, x) - oq).exp())
        .sum()
}

/// Maximum of a convex function over a bounded polyhedron, taken over its
/// vertices.
fn best_vertex(sys: &ConstraintSystem, f: impl Fn(&[f64]) -> f64) -> Result<Option<(f64, Vec<f64>)>> {
    let n = sys.dim();
    let rows: Vec<(Vec<f64>, f64)> = sys
        .constraints()
        .iter()
        .filter(|c| !c.is_trivial())
        .map(|c| c.as_le())
        .collect();
    let feasible = |x: &[f64]| {
        rows.iter().all(|(a, b)| {
            let lhs: f64 = a.iter().zip(x).map(|(u, v)| u * v).sum();
            lhs <= b + 1e-9 * (1.0 + b.abs() + crate::lp::norm2(a))
        })
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for pick in itertools::Itertools::combinations(0..rows.len(), n) {
        let a: Vec<f64> = pick.iter().flat_map(|&i| rows[i].0.iter().copied()).collect();
        let b: Vec<f64> = pick.iter().map(|&i| rows[i].1).collect();
        let Some(x) = solve_dense(a, b, n) else {
            continue;
        };
        if x.iter().all(|v| v.is_finite()) && feasible(&x) {
            let v = f(&x);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, x));
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{identity, two_output};
    use crate::oracle::{grid_scan, random_network};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square(lo: f64, hi: f64) -> BoundedRegion {
        BoundedRegion::boxed(vec![lo; 2], vec![hi; 2]).unwrap()
    }

    #[test]
    fn identity_range() {
        let r = output_range(&identity(), &square(-1.0, 1.0), 0, &VerifyOptions::default()).unwrap();
        assert_eq!((r.min, r.max), (0.0, 2.0));
        assert_eq!(r.argmax, vec![1.0, 1.0]);
        assert_eq!(r.per_polytope.len(), 4);
        let dead = output_range(&identity(), &square(-1.0, -0.5), 0, &VerifyOptions::default()).unwrap();
        assert_eq!((dead.min, dead.max), (0.0, 0.0));
        assert_eq!(dead.per_polytope.len(), 1);
        assert!(output_range(&identity(), &square(-1.0, 1.0), 1, &VerifyOptions::default()).is_err());
    }

    #[test]
    fn binary_attack_on_ball() {
        let ball = BoundedRegion::linf_ball(vec![0.2, 0.2], 0.3).unwrap();
        let opts = VerifyOptions::default();
        let down = adversarial_binary(&identity(), &[0.2, 0.2], &ball, 1, &opts).unwrap();
        assert_eq!(down.value, 0.0);
        assert!((down.origin_value - 0.4).abs() < 1e-15);
        assert_eq!(identity().forward(&down.point).unwrap()[0], 0.0);
        let up = adversarial_binary(&identity(), &[0.2, 0.2], &ball, 0, &opts).unwrap();
        assert!((up.value - 1.0).abs() < 1e-12);
        assert!((up.point[0] - 0.5).abs() < 1e-12 && (up.point[1] - 0.5).abs() < 1e-12);
        assert_eq!(up.value, up.range.max);
        assert!(adversarial_binary(&identity(), &[0.9, 0.9], &ball, 0, &opts).is_err());
    }

    #[test]
    fn multiclass_examples() {
        let net = two_output();
        let opts = VerifyOptions::default();
        let safe = adversarial_multiclass(&net, &[-0.5, 0.0], &square(-1.0, 0.4), 1, AttackMode::Sound, &opts).unwrap();
        assert!(safe.verdict.is_verified());
        assert!((safe.worst_margin + 0.1).abs() < 1e-12);
        let bad = adversarial_multiclass(&net, &[-0.5, 0.0], &square(-1.0, 0.6), 1, AttackMode::Sound, &opts).unwrap();
        assert!(bad.verdict.is_violated());
        assert!((bad.worst_margin - 0.1).abs() < 1e-12);
        assert!((bad.worst_point[0] - 0.6).abs() < 1e-12);
        assert_eq!(net.predicted_class(&bad.worst_point, 0.0).unwrap(), 0);
        let exact =
            adversarial_multiclass(&net, &[-0.5, 0.0], &square(-1.0, 0.6), 1, AttackMode::Exact, &opts).unwrap();
        assert!((exact.exact_objective.unwrap() - 0.1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn exact_mode_is_gated_by_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = random_network(&mut rng, 5, &[3], 3);
        let region = BoundedRegion::boxed(vec![-1.0; 5], vec![1.0; 5]).unwrap();
        let r = adversarial_multiclass(
            &net,
            &[0.0; 5],
            &region,
            0,
            AttackMode::Exact,
            &VerifyOptions::default(),
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn range_brackets_grid_and_witnesses_reproduce() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let region = square(-1.0, 1.0);
        for _ in 0..10 {
            let net = random_network(&mut rng, 2, &[6, 4], 1);
            let r = output_range(&net, &region, 0, &VerifyOptions::default()).unwrap();
            let g = grid_scan(&net, &region, 0.05).unwrap();
            assert!(r.min <= g.min[0] + 1e-12 && g.max[0] <= r.max + 1e-12);
            assert!((net.forward(&r.argmin).unwrap()[0] - r.min).abs() <= 1e-8);
            assert!((net.forward(&r.argmax).unwrap()[0] - r.max).abs() <= 1e-8);
        }
    }

    #[test]
    fn multiclass_verdict_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let opts = VerifyOptions::default();
        for _ in 0..10 {
            let net = random_network(&mut rng, 2, &[5], 3);
            let x0 = [0.1, -0.2];
            let class = net.predicted_class(&x0, 0.0).unwrap();
            let region = BoundedRegion::linf_ball(x0.to_vec(), 0.3).unwrap();
            let r = adversarial_multiclass(&net, &x0, &region, class, AttackMode::Exact, &opts).unwrap();
            let grid = crate::oracle::grid_points(&region, 0.01).unwrap();
            let grid_flip = grid.iter().any(|x| net.predicted_class(x, 0.0).unwrap() != class);
            if grid_flip {
                assert!(r.verdict.is_violated());
            }
            if let Verdict::Violated { witness, margin, .. } = &r.verdict {
                let o = net.forward(witness).unwrap();
                assert!((o[r.competitor] - o[class] - margin).abs() <= 1e-8);
            }
            let best = grid
                .iter()
                .map(|x| {
                    let o = net.forward(x).unwrap();
                    (0..3)
                        .filter(|&i| i != class)
                        .map(|i| (o[i] - o[class]).exp())
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(best <= r.exact_objective.unwrap() + 1e-9);
        }
    }
}
