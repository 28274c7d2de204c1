//! Plot data for two-input networks: cell polygons, partitioning
//! hyperplane segments and local models.

use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lp::{linalg::solve_dense, ConstraintSystem, LinearConstraint};
use crate::network::{ActivationCode, LocalLinearModel, ReluNetwork};
use crate::polytope::{polytope_from_code, BoundedRegion};
use crate::traversal::{traverse, TraversalConfig, TraversalStats, VisitOutcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub code: ActivationCode,
    /// Polygon of the cell within the region, counter-clockwise.
    pub vertices: Vec<[f64; 2]>,
    pub model: LocalLinearModel,
}

/// Piece of neuron `neuron`'s hyperplane at `level` inside the parent
/// polytope `parent` and the region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub level: usize,
    pub neuron: usize,
    pub parent: ActivationCode,
    pub from: [f64; 2],
    pub to: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolytopeDump {
    pub region: BoundedRegion,
    pub cells: Vec<Cell>,
    pub segments: Vec<Segment>,
    pub truncated: bool,
    pub stats: TraversalStats,
}

impl PolytopeDump {
    /// One row per polygon vertex or segment end point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,code,level,neuron,index,x1,x2\n");
        for c in &self.cells {
            for (i, v) in c.vertices.iter().enumerate() {
                let _ = writeln!(out, "cell,{},{},,{i},{},{}", c.code, c.code.num_levels(), v[0], v[1]);
            }
        }
        for s in &self.segments {
            for (i, v) in [s.from, s.to].iter().enumerate() {
                let _ = writeln!(
                    out,
                    "segment,{},{},{},{i},{},{}",
                    s.parent, s.level, s.neuron, v[0], v[1]
                );
            }
        }
        out
    }
}

const VERTEX_TOL: f64 = 1e-9;

/// Vertices of a bounded two-dimensional closed system, counter-clockwise
/// and without repeats. Fewer than three points for degenerate sets.
pub fn polygon(sys: &ConstraintSystem) -> Vec<[f64; 2]> {
    let rows: Vec<(Vec<f64>, f64)> = sys
        .constraints()
        .iter()
        .filter(|c| !c.is_trivial())
        .map(|c| c.as_le())
        .collect();
    let inside = |x: &[f64]| {
        rows.iter()
            .all(|(a, b)| a[0] * x[0] + a[1] * x[1] <= b + VERTEX_TOL * (1.0 + b.abs() + a[0].abs() + a[1].abs()))
    };
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let a = vec![rows[i].0[0], rows[i].0[1], rows[j].0[0], rows[j].0[1]];
            let Some(x) = solve_dense(a, vec![rows[i].1, rows[j].1], 2) else {
                continue;
            };
            if x.iter().all(|v| v.is_finite())
                && inside(&x)
                && !pts
                    .iter()
                    .any(|p| (p[0] - x[0]).abs() + (p[1] - x[1]).abs() <= 1e-9 * (1.0 + x[0].abs() + x[1].abs()))
            {
                pts.push([x[0] + 0.0, x[1] + 0.0]);
            }
        }
    }
    if pts.len() > 2 {
        let cx = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
        let cy = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
        pts.sort_by(|p, q| (p[1] - cy).atan2(p[0] - cx).total_cmp(&(q[1] - cy).atan2(q[0] - cx)));
    }
    pts
}

/// Whether `x` lies in the convex polygon `poly` up to `tol`.
pub fn polygon_contains(poly: &[[f64; 2]], x: [f64; 2], tol: f64) -> bool {
    if poly.len() < 3 {
        return false;
    }
    (0..poly.len()).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let cross = ex * (x[1] - a[1]) - ey * (x[0] - a[0]);
        cross >= -tol * (ex.hypot(ey))
    })
}

/// Cells and hyperplane segments of every polytope meeting `region`.
pub fn dump_polytopes(net: &ReluNetwork, config: &TraversalConfig) -> Result<PolytopeDump> {
    if net.input_dim() != 2 {
        return Err(Error::Unsupported(format!(
            "polytope dumps need two inputs, the network has {}",
            net.input_dim()
        )));
    }
    let region = &config.region;
    let region_sys = region.bounded_system(config.tolerances.sentinel)?;
    let within = |sys: &ConstraintSystem| -> Result<ConstraintSystem> {
        let mut s = sys.closure();
        s.extend_from(&region_sys)?;
        Ok(s)
    };
    let start = region
        .center(&crate::lp::CountingSolver::new(config.tolerances))?
        .ok_or_else(|| Error::invalid("the region is empty"))?;
    let mut cells = Vec::new();
    let run = traverse(net, &start, config, |p, model| {
        cells.push(Cell {
            code: p.code.clone(),
            vertices: polygon(&within(&p.system)?),
            model: model.clone(),
        });
        Ok(VisitOutcome::Continue)
    })?;

    let mut segments = Vec::new();
    for level in 1..=net.num_levels() {
        let parents: BTreeSet<ActivationCode> = cells.iter().map(|c| c.code.prefix(level - 1)).collect();
        for parent in parents {
            let base = if level == 1 {
                ConstraintSystem::new(2)
            } else {
                polytope_from_code(net, &parent)?.system
            };
            let base = within(&base)?;
            let coeffs = net.level_coefficients(&parent, level)?;
            for m in 0..coeffs.effective_weights.rows() {
                let w = coeffs.effective_weights.row(m).to_vec();
                if w.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let b = coeffs.effective_bias[m];
                let mut sys = base.clone();
                sys.push(LinearConstraint::le(w.clone(), -b)?)?;
                sys.push(LinearConstraint::ge(w, -b)?)?;
                let ends = polygon(&sys);
                if ends.len() >= 2 {
                    let (from, to) = extreme_pair(&ends);
                    segments.push(Segment {
                        level,
                        neuron: m,
                        parent: parent.clone(),
                        from,
                        to,
                    });
                }
            }
        }
    }
    Ok(PolytopeDump {
        region: region.clone(),
        cells,
        segments,
        truncated: run.truncated,
        stats: run.stats,
    })
}

fn extreme_pair(pts: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut best = (pts[0], pts[1], -1.0);
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            let d = (p[0] - q[0]).hypot(p[1] - q[1]);
            if d > best.2 {
                best = (*p, *q, d);
            }
        }
    }
    (best.0, best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{identity, two_layer};
    use crate::oracle::{grid_points, random_network};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square() -> TraversalConfig {
        TraversalConfig::new(BoundedRegion::boxed(vec![-1.0; 2], vec![1.0; 2]).unwrap())
    }

    #[test]
    fn identity_dump() {
        let d = dump_polytopes(&identity(), &square()).unwrap();
        assert_eq!(d.cells.len(), 4);
        assert!(d.cells.iter().all(|c| c.vertices.len() == 4));
        assert_eq!(d.segments.len(), 2);
        let csv = d.to_csv();
        assert_eq!(csv.lines().count(), 1 + 16 + 4);
    }

    #[test]
    fn two_layer_dump() {
        let d = dump_polytopes(&two_layer(), &square()).unwrap();
        assert_eq!(d.cells.len(), 3);
        let deep: Vec<&Segment> = d.segments.iter().filter(|s| s.level == 2).collect();
        assert_eq!(deep.len(), 1);
        assert_eq!(deep[0].from[0], 0.5);
        assert_eq!(deep[0].to[0], 0.5);
        assert_eq!(deep[0].parent, "1".parse().unwrap());
    }

    #[test]
    fn needs_two_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = random_network(&mut rng, 3, &[2], 1);
        let cfg = TraversalConfig::new(BoundedRegion::boxed(vec![-1.0; 3], vec![1.0; 3]).unwrap());
        assert!(matches!(dump_polytopes(&net, &cfg), Err(Error::Unsupported(_))));
    }

    #[test]
    fn cells_cover_the_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = square();
        for _ in 0..5 {
            let net = random_network(&mut rng, 2, &[6, 4], 1);
            let d = dump_polytopes(&net, &cfg).unwrap();
            let area: f64 = d.cells.iter().map(|c| shoelace(&c.vertices)).sum();
            assert!((area - 4.0).abs() < 1e-9);
            for x in grid_points(&cfg.region, 0.05).unwrap() {
                assert!(d
                    .cells
                    .iter()
                    .any(|c| polygon_contains(&c.vertices, [x[0], x[1]], 1e-9)));
            }
        }
    }

    fn shoelace(p: &[[f64; 2]]) -> f64 {
        (0..p.len())
            .map(|i| {
                let (a, b) = (p[i], p[(i + 1) % p.len()]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0
    }
}
