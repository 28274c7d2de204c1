//! Minimum-Euclidean-distance point of a polyhedron, by a primal active-set
//! method with a Lagrangian duality-gap certificate.

use serde::{Deserialize, Serialize};

use super::linalg::{dot, norm2, solve_dense, DenseVector};
use super::simplex::DenseLp;
use crate::error::{Error, Result};

/// Largest accepted duality gap on `½‖x − x₀‖²`.
pub const PROJECTION_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub point: DenseVector,
    pub distance: f64,
    /// Primal minus dual objective at termination.
    pub gap: f64,
}

/// Multipliers `μ` with `(A_W A_Wᵀ) μ = A_W v`.
fn working_multipliers(lp: &DenseLp, working: &[usize], v: &[f64]) -> Option<Vec<f64>> {
    let k = working.len();
    let n = lp.n;
    let row = |i: usize| &lp.a[i * n..(i + 1) * n];
    let mut gram = vec![0.0; k * k];
    for (r, &i) in working.iter().enumerate() {
        for (c, &j) in working.iter().enumerate() {
            gram[r * k + c] = dot(row(i), row(j));
        }
    }
    let rhs = working.iter().map(|&i| dot(row(i), v)).collect();
    solve_dense(gram, rhs, k)
}

pub(crate) fn active_set(lp: &DenseLp, x0: &[f64], start: Vec<f64>, max_iter: usize) -> Result<Projection> {
    let n = lp.n;
    let m = lp.rows();
    let row = |i: usize| &lp.a[i * n..(i + 1) * n];
    let mut x = start;
    let mut working: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let scale = 1.0 + norm2(x0);

    for _ in 0..max_iter {
        let g: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
        let mu = if working.is_empty() {
            Vec::new()
        } else {
            working_multipliers(lp, &working, &g)
                .ok_or_else(|| Error::Numerical("degenerate working set in projection".into()))?
        };
        // Step toward the projection of x0 onto the working-set face.
        let mut p: Vec<f64> = g.iter().map(|v| -v).collect();
        for (&i, &u) in working.iter().zip(&mu) {
            for (pj, aj) in p.iter_mut().zip(row(i)) {
                *pj += u * aj;
            }
        }
        if norm2(&p) <= 1e-13 * scale {
            // KKT: g + A_Wᵀ λ = 0 with λ = −μ.
            let drop = mu
                .iter()
                .enumerate()
                .filter(|(_, u)| -**u < -1e-12 * scale)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(r, _)| r);
            let Some(drop) = drop else {
                lambda = mu.iter().map(|u| -u).collect();
                break;
            };
            working.remove(drop);
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if working.contains(&i) {
                continue;
            }
            let ap = dot(row(i), &p);
            if ap > 1e-14 {
                let step = ((lp.b[i] - dot(row(i), &x)) / ap).max(0.0);
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        for (xj, pj) in x.iter_mut().zip(&p) {
            *xj += alpha * pj;
        }
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    if lambda.len() != working.len() {
        return Err(Error::SolverStall { iterations: max_iter });
    }

    // Dual value: −½‖Aᵀλ‖² + λᵀ(A x₀ − b), λ supported on the working set.
    let mut at_lambda = vec![0.0; n];
    let mut lin = 0.0;
    for (&i, &l) in working.iter().zip(&lambda) {
        for (v, a) in at_lambda.iter_mut().zip(row(i)) {
            *v += l * a;
        }
        lin += l * (dot(row(i), x0) - lp.b[i]);
    }
    let dual = -0.5 * dot(&at_lambda, &at_lambda) + lin;
    let diff: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
    let primal = 0.5 * dot(&diff, &diff);
    let gap = (primal - dual).max(0.0);
    if gap > PROJECTION_GAP_TOL {
        return Err(Error::Numerical(format!("projection duality gap {gap:e}")));
    }
    Ok(Projection {
        distance: norm2(&diff),
        point: DenseVector::new(x).map_err(|e| Error::Numerical(e.to_string()))?,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projects_onto_corner() {
        // {x ≤ 0, y ≤ 0} from (1, 2) lands on the origin with both active.
        let mut lp = DenseLp::new(2);
        lp.push_row(&[1.0, 0.0], 0.0);
        lp.push_row(&[0.0, 1.0], 0.0);
        let p = active_set(&lp, &[1.0, 2.0], vec![-3.0, -1.0], 100).unwrap();
        assert!(norm2(&p.point) < 1e-12);
        assert!((p.distance - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn interior_origin_is_its_own_projection() {
        let mut lp = DenseLp::new(1);
        lp.push_row(&[1.0], 1.0);
        let p = active_set(&lp, &[0.25], vec![-2.0], 100).unwrap();
        assert!((p.point[0] - 0.25).abs() < 1e-12);
        assert!(p.distance < 1e-12);
    }
}
