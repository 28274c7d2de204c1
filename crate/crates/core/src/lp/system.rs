//! Linear constraints and constraint systems.

use serde::{Deserialize, Serialize};

use super::linalg::{dot, DenseVector};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    /// `normal · x ≤ offset`
    Le,
    /// `normal · x ≥ offset`
    Ge,
}

impl Sense {
    pub fn flipped(self) -> Sense {
        match self {
            Sense::Le => Sense::Ge,
            Sense::Ge => Sense::Le,
        }
    }
}

/// Whether a constraint must hold with an interior margin.
///
/// Open constraints are enforced with signed distance at least the solver's
/// interior tolerance; open constraints with a zero normal must hold strictly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    #[default]
    Closed,
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub normal: DenseVector,
    pub offset: f64,
    pub sense: Sense,
    #[serde(default)]
    pub strictness: Strictness,
}

impl LinearConstraint {
    pub fn new(normal: DenseVector, offset: f64, sense: Sense, strictness: Strictness) -> Result<Self> {
        if !offset.is_finite() {
            return Err(Error::invalid("constraint offset is not finite"));
        }
        Ok(LinearConstraint {
            normal,
            offset,
            sense,
            strictness,
        })
    }

    /// Closed `normal · x ≤ offset`.
    pub fn le(normal: Vec<f64>, offset: f64) -> Result<Self> {
        Self::new(DenseVector::new(normal)?, offset, Sense::Le, Strictness::Closed)
    }

    /// Closed `normal · x ≥ offset`.
    pub fn ge(normal: Vec<f64>, offset: f64) -> Result<Self> {
        Self::new(DenseVector::new(normal)?, offset, Sense::Ge, Strictness::Closed)
    }

    pub fn open(mut self) -> Self {
        self.strictness = Strictness::Open;
        self
    }

    pub fn closed(mut self) -> Self {
        self.strictness = Strictness::Closed;
        self
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// A constraint whose normal is identically zero.
    pub fn is_trivial(&self) -> bool {
        self.normal.iter().all(|v| *v == 0.0)
    }

    /// Same hyperplane, opposite side, same strictness.
    pub fn flipped(&self) -> Self {
        LinearConstraint {
            sense: self.sense.flipped(),
            ..self.clone()
        }
    }

    /// Returns `(a, b)` with the constraint expressed as `a · x ≤ b`.
    pub fn as_le(&self) -> (Vec<f64>, f64) {
        match self.sense {
            Sense::Le => (self.normal.to_vec(), self.offset),
            Sense::Ge => (self.normal.iter().map(|v| -v).collect(), -self.offset),
        }
    }

    /// Signed slack `b − a·x` of the `≤` form (positive means satisfied).
    pub fn slack(&self, x: &[f64]) -> f64 {
        let v = dot(&self.normal, x);
        match self.sense {
            Sense::Le => self.offset - v,
            Sense::Ge => v - self.offset,
        }
    }

    /// Slack divided by the normal's length, i.e. the signed distance from
    /// `x` to the hyperplane. Trivial constraints report the raw slack.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let n = self.normal.norm2();
        if n == 0.0 {
            self.slack(x)
        } else {
            self.slack(x) / n
        }
    }

    /// For a trivial constraint, whether the constant relation holds under
    /// the constraint's strictness.
    pub fn trivially_satisfied(&self) -> bool {
        let slack = self.slack(&vec![0.0; self.dim()]);
        match self.strictness {
            Strictness::Closed => slack >= 0.0,
            Strictness::Open => slack > 0.0,
        }
    }

    /// Membership test with the given interior margin for open constraints
    /// and numerical tolerance for closed ones.
    pub fn satisfied_by(&self, x: &[f64], interior: f64, numeric: f64) -> bool {
        if self.is_trivial() {
            return self.trivially_satisfied();
        }
        let d = self.distance(x);
        match self.strictness {
            Strictness::Closed => d >= -numeric,
            Strictness::Open => d >= interior - numeric,
        }
    }
}

/// A set of linear constraints over a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSystem {
    dim: usize,
    constraints: Vec<LinearConstraint>,
}

impl ConstraintSystem {
    pub fn new(dim: usize) -> Self {
        ConstraintSystem {
            dim,
            constraints: Vec::new(),
        }
    }

    pub fn from_constraints(dim: usize, constraints: Vec<LinearConstraint>) -> Result<Self> {
        let mut sys = ConstraintSystem::new(dim);
        for c in constraints {
            sys.push(c)?;
        }
        Ok(sys)
    }

    pub fn push(&mut self, c: LinearConstraint) -> Result<()> {
        check_dim(self.dim, c.dim())?;
        self.constraints.push(c);
        Ok(())
    }

    pub fn extend_from(&mut self, other: &ConstraintSystem) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        self.constraints.extend(other.constraints.iter().cloned());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn get(&self, i: usize) -> Option<&LinearConstraint> {
        self.constraints.get(i)
    }

    /// Copy with constraint `index` replaced by its flip.
    pub fn with_flipped(&self, index: usize) -> Result<Self> {
        let mut out = self.clone();
        let c = out
            .constraints
            .get_mut(index)
            .ok_or_else(|| Error::invalid(format!("constraint index {index} out of range")))?;
        *c = c.flipped();
        Ok(out)
    }

    /// Copy with every constraint closed (the topological closure of the set).
    pub fn closure(&self) -> Self {
        ConstraintSystem {
            dim: self.dim,
            constraints: self.constraints.iter().map(|c| c.clone().closed()).collect(),
        }
    }

    pub fn contains(&self, x: &[f64], interior: f64, numeric: f64) -> bool {
        x.len() == self.dim && self.constraints.iter().all(|c| c.satisfied_by(x, interior, numeric))
    }
}

impl std::ops::Index<usize> for ConstraintSystem {
    type Output = LinearConstraint;
    fn index(&self, i: usize) -> &LinearConstraint {
        &self.constraints[i]
    }
}
