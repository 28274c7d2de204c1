//! Closed convex traversing regions.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::lp::{norm2, ConstraintSystem, CountingSolver, LinearConstraint, LpStatus, OptSense, Strictness};

/// A closed convex region given by finitely many halfspaces.
///
/// JSON: `{"type": "box", "lower": [..], "upper": [..]}`,
/// `{"type": "linf_ball", "center": [..], "radius": r}`,
/// `{"type": "halfspaces", "rows": [{"normal": [..], "offset": b, "sense": "le"}, ..]}`
/// or `{"type": "intersection", "regions": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundedRegion {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    LinfBall { center: Vec<f64>, radius: f64 },
    Halfspaces { rows: Vec<LinearConstraint> },
    Intersection { regions: Vec<BoundedRegion> },
}

impl BoundedRegion {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let r = BoundedRegion::Box { lower, upper };
        r.validate()?;
        Ok(r)
    }

    pub fn linf_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let r = BoundedRegion::LinfBall { center, radius };
        r.validate()?;
        Ok(r)
    }

    pub fn halfspaces(rows: Vec<LinearConstraint>) -> Result<Self> {
        let r = BoundedRegion::Halfspaces { rows };
        r.validate()?;
        Ok(r)
    }

    /// The box `[-s, s]^dim`, standing in for all of input space.
    pub fn sentinel(dim: usize, s: f64) -> Self {
        BoundedRegion::Box {
            lower: vec![-s; dim],
            upper: vec![s; dim],
        }
    }

    pub fn intersect(&self, other: &BoundedRegion) -> BoundedRegion {
        let mut parts = Vec::new();
        for r in [self, other] {
            match r {
                BoundedRegion::Intersection { regions } => parts.extend(regions.iter().cloned()),
                r => parts.push(r.clone()),
            }
        }
        BoundedRegion::Intersection { regions: parts }
    }

    pub fn dim(&self) -> Result<usize> {
        match self {
            BoundedRegion::Box { lower, .. } => Ok(lower.len()),
            BoundedRegion::LinfBall { center, .. } => Ok(center.len()),
            BoundedRegion::Halfspaces { rows } => rows
                .first()
                .map(LinearConstraint::dim)
                .ok_or_else(|| Error::invalid("halfspace region needs at least one row")),
            BoundedRegion::Intersection { regions } => regions
                .first()
                .ok_or_else(|| Error::invalid("intersection needs at least one region"))?
                .dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim()?;
        if dim == 0 {
            return Err(Error::invalid("region has dimension 0"));
        }
        match self {
            BoundedRegion::Box { lower, upper } => {
                check_dim(dim, upper.len())?;
                if lower.iter().chain(upper).any(|v| !v.is_finite()) {
                    return Err(Error::invalid("box bounds must be finite"));
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(Error::invalid("box has lower > upper"));
                }
            }
            BoundedRegion::LinfBall { center, radius } => {
                if center.iter().any(|v| !v.is_finite()) || !radius.is_finite() || *radius < 0.0 {
                    return Err(Error::invalid("ball needs a finite center and a finite radius ≥ 0"));
                }
            }
            BoundedRegion::Halfspaces { rows } => {
                for r in rows {
                    check_dim(dim, r.dim())?;
                }
            }
            BoundedRegion::Intersection { regions } => {
                for r in regions {
                    r.validate()?;
                    check_dim(dim, r.dim()?)?;
                }
            }
        }
        Ok(())
    }

    /// Box equivalent of a box or ball.
    fn own_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            BoundedRegion::Box { lower, upper } => Some((lower.clone(), upper.clone())),
            BoundedRegion::LinfBall { center, radius } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            _ => None,
        }
    }

    /// Smallest axis box implied by the box and ball parts of the region;
    /// `None` when no part is a box or ball. Empty boxes are reported with
    /// lower > upper in some coordinate.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            BoundedRegion::Intersection { regions } => {
                let mut acc: Option<(Vec<f64>, Vec<f64>)> = None;
                for r in regions {
                    if let Some((l, u)) = r.bounding_box() {
                        acc = Some(match acc {
                            None => (l, u),
                            Some((al, au)) => (
                                al.iter().zip(&l).map(|(a, b)| a.max(*b)).collect(),
                                au.iter().zip(&u).map(|(a, b)| a.min(*b)).collect(),
                            ),
                        });
                    }
                }
                acc
            }
            r => r.own_box(),
        }
    }

    /// Whether the region is exactly its bounding box.
    pub fn is_box(&self) -> bool {
        match self {
            BoundedRegion::Box { .. } | BoundedRegion::LinfBall { .. } => true,
            BoundedRegion::Halfspaces { .. } => false,
            BoundedRegion::Intersection { regions } => regions.iter().all(BoundedRegion::is_box),
        }
    }

    /// Closed halfspace form of the region.
    pub fn to_system(&self) -> Result<ConstraintSystem> {
        let dim = self.dim()?;
        let mut sys = ConstraintSystem::new(dim);
        self.push_rows(&mut sys)?;
        Ok(sys)
    }

    /// Halfspace form, intersected with the sentinel box when the region has
    /// no box part, so every LP over it is bounded.
    pub fn bounded_system(&self, sentinel: f64) -> Result<ConstraintSystem> {
        let mut sys = self.to_system()?;
        if self.bounding_box().is_none() {
            BoundedRegion::sentinel(sys.dim(), sentinel).push_rows(&mut sys)?;
        }
        Ok(sys)
    }

    fn push_rows(&self, sys: &mut ConstraintSystem) -> Result<()> {
        let dim = sys.dim();
        let boxed = if self.is_box() { self.bounding_box() } else { None };
        if let Some((lower, upper)) = boxed {
            for j in 0..dim {
                let mut e = vec![0.0; dim];
                e[j] = 1.0;
                sys.push(LinearConstraint::le(e.clone(), upper[j])?)?;
                sys.push(LinearConstraint::ge(e, lower[j])?)?;
            }
            return Ok(());
        }
        match self {
            BoundedRegion::Halfspaces { rows } => {
                for r in rows {
                    sys.push(r.clone().closed())?;
                }
            }
            BoundedRegion::Intersection { regions } => {
                for r in regions {
                    r.push_rows(sys)?;
                }
            }
            _ => unreachable!("boxes handled above"),
        }
        Ok(())
    }

    /// Membership with absolute tolerance `tol` on each row.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self.to_system() {
            Ok(sys) => x.len() == sys.dim() && sys.constraints().iter().all(|c| c.slack(x) >= -tol),
            Err(_) => false,
        }
    }

    /// Whether `self ⊆ outer`. Decided on the boxes when both regions are
    /// boxes, otherwise by maximizing each row of `outer` over `self`.
    pub fn is_subset_of(&self, outer: &BoundedRegion, solver: &CountingSolver) -> Result<bool> {
        check_dim(outer.dim()?, self.dim()?)?;
        let tol = solver.tol().numeric;
        if self.is_box() && outer.is_box() {
            let (il, iu) = self.bounding_box().expect("box region");
            let (ol, ou) = outer.bounding_box().expect("box region");
            if il.iter().zip(&iu).any(|(l, u)| l > u) {
                return Ok(true);
            }
            let scale = |v: f64| tol * (1.0 + v.abs());
            return Ok(il.iter().zip(&ol).all(|(i, o)| *i >= o - scale(*o))
                && iu.iter().zip(&ou).all(|(i, o)| *i <= o + scale(*o)));
        }
        let inner = self.bounded_system(solver.tol().sentinel)?;
        for c in outer.to_system()?.constraints() {
            if c.is_trivial() {
                continue;
            }
            let (a, b) = c.as_le();
            let sol = solver.optimize(&a, OptSense::Max, &inner)?;
            match sol.status {
                LpStatus::Infeasible => return Ok(true),
                LpStatus::Unbounded => return Ok(false),
                LpStatus::Optimal => {
                    let v = sol.value.expect("optimal value");
                    let norm = norm2(&a);
                    if v > b + tol * (norm + b.abs()) {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Region center: the box midpoint, or a Chebyshev-style interior point.
    pub fn center(&self, solver: &CountingSolver) -> Result<Option<Vec<f64>>> {
        if self.is_box() {
            let (l, u) = self.bounding_box().expect("box region");
            if l.iter().zip(&u).any(|(a, b)| a > b) {
                return Ok(None);
            }
            return Ok(Some(l.iter().zip(&u).map(|(a, b)| 0.5 * (a + b)).collect()));
        }
        let sys = self.bounded_system(solver.tol().sentinel)?;
        let closed = ConstraintSystem::from_constraints(
            sys.dim(),
            sys.constraints()
                .iter()
                .map(|c| LinearConstraint {
                    strictness: Strictness::Closed,
                    ..c.clone()
                })
                .collect(),
        )?;
        let r = solver.interior_point(&closed)?;
        if let Some(w) = r.witness {
            return Ok(Some(w.into_vec()));
        }
        // Flat but non-empty regions have no interior; fall back to any point.
        Ok(solver.feasibility(&closed)?.witness.map(|w| w.into_vec()))
    }
}
