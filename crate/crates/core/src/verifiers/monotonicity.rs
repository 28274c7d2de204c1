//! Monotonicity of a scalar output in one feature, from the signs of the
//! local model coefficients.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use super::{region_start, require_scalar, stats, VerifyOptions};
use crate::error::{Error, Result};
use crate::network::{ActivationCode, ReluNetwork};
use crate::polytope::BoundedRegion;
use crate::traversal::{traverse, TraversalStats, VisitOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
    Any,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "increasing" | "inc" | "+" => Ok(Direction::Increasing),
            "decreasing" | "dec" | "-" => Ok(Direction::Decreasing),
            "any" => Ok(Direction::Any),
            _ => Err(Error::invalid(format!(
                "unknown direction {s:?}; expected increasing, decreasing or any"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotonicityVerdict {
    MonotoneNondecreasing,
    MonotoneNonincreasing,
    Constant,
    Violated,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub feature: usize,
    pub claimed: Direction,
    pub verdict: MonotonicityVerdict,
    /// Whether the verdict supports the claimed direction.
    pub claim_holds: bool,
    /// Polytopes whose coefficient contradicts the claim; under `Any`, the
    /// polytopes of the less frequent sign when both occur.
    pub violations: Vec<(ActivationCode, f64)>,
    pub coefficients: Vec<(ActivationCode, f64)>,
    pub stats: TraversalStats,
}

/// Collects `∂o/∂x_feature` over every polytope meeting `region`. Values
/// within the numeric tolerance of zero fit either direction.
pub fn monotonicity(
    net: &ReluNetwork,
    region: &BoundedRegion,
    feature: usize,
    claimed: Direction,
    opts: &VerifyOptions,
) -> Result<MonotonicityReport> {
    require_scalar(net)?;
    if feature >= net.input_dim() {
        return Err(Error::invalid(format!(
            "feature {feature} out of range for {} inputs",
            net.input_dim()
        )));
    }
    let tol = opts.tolerances.numeric;
    let start = region_start(region, opts.tolerances)?;
    let mut coefficients = Vec::new();
    let run = traverse(net, &start, &opts.config(region.clone()), |p, model| {
        coefficients.push((p.code.clone(), model.output_row(0).0[feature]));
        Ok(VisitOutcome::Continue)
    })?;
    let pos: Vec<_> = coefficients.iter().filter(|(_, v)| *v > tol).cloned().collect();
    let neg: Vec<_> = coefficients.iter().filter(|(_, v)| *v < -tol).cloned().collect();
    let verdict = match (pos.is_empty(), neg.is_empty()) {
        (false, false) => MonotonicityVerdict::Violated,
        _ if !run.complete() => MonotonicityVerdict::Truncated,
        (false, true) => MonotonicityVerdict::MonotoneNondecreasing,
        (true, false) => MonotonicityVerdict::MonotoneNonincreasing,
        (true, true) => MonotonicityVerdict::Constant,
    };
    let violations = match claimed {
        Direction::Increasing => neg,
        Direction::Decreasing => pos,
        Direction::Any if verdict == MonotonicityVerdict::Violated => {
            if pos.len() < neg.len() {
                pos
            } else {
                neg
            }
        }
        Direction::Any => Vec::new(),
    };
    let claim_holds = run.complete() && violations.is_empty() && verdict != MonotonicityVerdict::Violated;
    Ok(MonotonicityReport {
        feature,
        claimed,
        verdict,
        claim_holds,
        violations,
        coefficients,
        stats: stats(&run),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::DenseMatrix;
    use crate::network::fixtures::identity;
    use crate::network::LayerSpec;
    use crate::oracle::{grid_points, random_network};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bump() -> ReluNetwork {
        // ReLU(x) − 2·ReLU(x − 0.5)
        ReluNetwork::new(
            1,
            vec![LayerSpec::from_rows(&[vec![1.0], vec![1.0]], vec![0.0, -0.5]).unwrap()],
            LayerSpec::from_rows(&[vec![1.0, -2.0]], vec![0.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn examples() {
        let opts = VerifyOptions::default();
        let sq = BoundedRegion::boxed(vec![-1.0; 2], vec![1.0; 2]).unwrap();
        let r = monotonicity(&identity(), &sq, 0, Direction::Increasing, &opts).unwrap();
        assert_eq!(r.verdict, MonotonicityVerdict::MonotoneNondecreasing);
        assert!(r.claim_holds);
        let r = monotonicity(&identity(), &sq, 0, Direction::Decreasing, &opts).unwrap();
        assert!(!r.claim_holds);
        assert_eq!(r.violations.len(), 2);
        let unit = BoundedRegion::boxed(vec![0.0], vec![1.0]).unwrap();
        let r = monotonicity(&bump(), &unit, 0, Direction::Any, &opts).unwrap();
        assert_eq!(r.verdict, MonotonicityVerdict::Violated);
        let mut seen: Vec<f64> = r.coefficients.iter().map(|c| c.1).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![-1.0, 1.0]);
        let left = BoundedRegion::boxed(vec![-1.0], vec![-0.5]).unwrap();
        assert_eq!(
            monotonicity(&bump(), &left, 0, Direction::Any, &opts).unwrap().verdict,
            MonotonicityVerdict::Constant
        );
        assert!(monotonicity(&bump(), &unit, 1, Direction::Any, &opts).is_err());
    }

    /// Signs seen by finite differences along `feature` on a grid.
    fn grid_signs(net: &ReluNetwork, region: &BoundedRegion, feature: usize) -> (bool, bool) {
        let h = 1e-3;
        let (mut pos, mut neg) = (false, false);
        for x in grid_points(region, 0.02).unwrap() {
            let mut y = x.clone();
            y[feature] += h;
            if !region.contains(&y, 0.0) {
                continue;
            }
            let d = net.forward(&y).unwrap()[0] - net.forward(&x).unwrap()[0];
            pos |= d > 1e-9;
            neg |= d < -1e-9;
        }
        (pos, neg)
    }

    #[test]
    fn agrees_with_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let region = BoundedRegion::boxed(vec![-1.0; 2], vec![1.0; 2]).unwrap();
        for i in 0..12 {
            let mut net = random_network(&mut rng, 2, &[5, 3], 1);
            if i % 3 == 0 {
                let layers: Vec<LayerSpec> = net
                    .hidden_layers()
                    .iter()
                    .chain([net.output_layer()])
                    .map(|l| {
                        let w = l.weights.as_slice().iter().map(|v| v.abs()).collect();
                        LayerSpec::new(
                            DenseMatrix::new(l.weights.rows(), l.weights.cols(), w).unwrap(),
                            l.bias.clone(),
                        )
                        .unwrap()
                    })
                    .collect();
                let (hidden, out) = layers.split_at(layers.len() - 1);
                net = ReluNetwork::new(2, hidden.to_vec(), out[0].clone()).unwrap();
            }
            let feature = rng.gen_range(0..2);
            let r = monotonicity(&net, &region, feature, Direction::Increasing, &VerifyOptions::default()).unwrap();
            let (pos, neg) = grid_signs(&net, &region, feature);
            if pos && neg {
                assert_eq!(r.verdict, MonotonicityVerdict::Violated);
            }
            match r.verdict {
                MonotonicityVerdict::MonotoneNondecreasing => assert!(!neg),
                MonotonicityVerdict::MonotoneNonincreasing => assert!(!pos),
                MonotonicityVerdict::Constant => assert!(!pos && !neg),
                _ => {}
            }
            if i % 3 == 0 {
                assert!(r.claim_holds);
            }
        }
    }
}
