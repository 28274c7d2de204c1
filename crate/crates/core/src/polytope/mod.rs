//! Polytopes indexed by activation codes, and the LP queries on them.
//!
//! Neuron `m` with effective pre-activation `w·x + b` contributes the row
//! `(−1)^c (w·x + b) ≤ 0`. Rows with a non-zero normal are open: a polytope
//! counts as non-empty only if it holds a point at distance at least the
//! interior tolerance from each of its hyperplanes. A zero normal gives a
//! constant row; it is closed for bit 1 and open for bit 0, matching the
//! `≥ 0` encoding rule.

mod region;

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::ops::Range;
use std::sync::Mutex;

pub use region::BoundedRegion;

use crate::error::{check_dim, Error, Result};
use crate::lp::{
    dot, norm2, ConstraintSystem, CountingSolver, DenseVector, LinearConstraint, Sense, Strictness, Tolerances,
};
use crate::network::{mask, ActivationCode, LayerSpec, ReluNetwork};

/// Row for one neuron with pre-activation `w·x + b` and code bit `bit`.
pub fn hyperplane_constraint(w: &[f64], b: f64, bit: bool) -> LinearConstraint {
    let trivial = w.iter().all(|v| *v == 0.0);
    let (normal, offset) = if bit {
        (w.iter().map(|v| -v).collect(), b)
    } else {
        (w.to_vec(), -b)
    };
    let strictness = if !trivial || !bit {
        Strictness::Open
    } else {
        Strictness::Closed
    };
    LinearConstraint {
        normal: DenseVector::new(normal).expect("finite coefficients"),
        offset,
        sense: Sense::Le,
        strictness,
    }
}

/// The row for the same neuron with the opposite bit.
pub fn flip_constraint(c: &LinearConstraint) -> LinearConstraint {
    let mut out = c.flipped();
    if c.is_trivial() {
        out.strictness = match c.strictness {
            Strictness::Open => Strictness::Closed,
            Strictness::Closed => Strictness::Open,
        };
    }
    out
}

fn push_level_rows(sys: &mut ConstraintSystem, layer: &LayerSpec, bits: &[bool]) {
    for (m, &bit) in bits.iter().enumerate() {
        sys.push(hyperplane_constraint(layer.weights.row(m), layer.bias[m], bit))
            .expect("layer rows match the input dimension");
    }
}

/// `R_c`: one row per neuron of every level covered by `code`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polytope {
    pub code: ActivationCode,
    pub system: ConstraintSystem,
    #[serde(skip)]
    level_starts: Vec<usize>,
}

impl Polytope {
    pub(crate) fn from_parts(code: ActivationCode, system: ConstraintSystem) -> Self {
        let mut level_starts = Vec::with_capacity(code.num_levels());
        let mut at = 0;
        for bits in code.levels() {
            level_starts.push(at);
            at += bits.len();
        }
        Polytope {
            code,
            system,
            level_starts,
        }
    }

    /// Number of code levels.
    pub fn level(&self) -> usize {
        self.code.num_levels()
    }

    /// Row indices of level `l` (1-based).
    pub fn level_range(&self, l: usize) -> Range<usize> {
        let start = self.level_starts[l - 1];
        start..start + self.code.level(l).len()
    }

    pub fn last_level_range(&self) -> Range<usize> {
        self.level_range(self.level())
    }

    /// The system with row `index` replaced by the opposite-bit row.
    pub fn flipped_system(&self, index: usize) -> Result<ConstraintSystem> {
        let c = self
            .system
            .get(index)
            .ok_or_else(|| Error::invalid(format!("constraint {index} out of range (have {})", self.system.len())))?;
        let mut cs = self.system.constraints().to_vec();
        cs[index] = flip_constraint(c);
        ConstraintSystem::from_constraints(self.system.dim(), cs)
    }

    /// The polytope's rows followed by the region's.
    pub fn within(&self, region: &ConstraintSystem) -> Result<ConstraintSystem> {
        let mut sys = self.system.clone();
        sys.extend_from(region)?;
        Ok(sys)
    }
}

pub fn polytope_from_code(net: &ReluNetwork, code: &ActivationCode) -> Result<Polytope> {
    if code.num_levels() == 0 {
        return Err(Error::invalid("polytope needs a code with at least one level"));
    }
    let mut sys = ConstraintSystem::new(net.input_dim());
    let mut effective = net.level_coefficients(code, 1).map(|c| LayerSpec {
        weights: c.effective_weights,
        bias: c.effective_bias,
    })?;
    for l in 1..=code.num_levels() {
        push_level_rows(&mut sys, &effective, code.level(l));
        if l < code.num_levels() {
            effective = net.next_level(&mask(&effective, code.level(l)), l + 1);
        }
    }
    Ok(Polytope::from_parts(code.clone(), sys))
}

/// Hyperplanes cutting a region, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrescreenResult {
    pub cutting: Vec<usize>,
}

impl PrescreenResult {
    pub fn all(m: usize) -> Self {
        PrescreenResult {
            cutting: (0..m).collect(),
        }
    }
}

/// LP results memoized by `(code, region version)`.
#[derive(Debug, Default)]
pub struct EmptinessCache {
    map: Mutex<HashMap<(ActivationCode, u64), Option<DenseVector>>>,
}

impl EmptinessCache {
    pub fn new() -> Self {
        EmptinessCache::default()
    }

    /// Cached witness (`None` when empty), computing it on a miss. The first
    /// inserted value wins.
    pub fn get_or_check(
        &self,
        code: &ActivationCode,
        version: u64,
        check: impl FnOnce() -> Result<Option<DenseVector>>,
    ) -> Result<Option<DenseVector>> {
        let key = (code.clone(), version);
        if let Some(v) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let v = check()?;
        Ok(self.map.lock().expect("cache lock").entry(key).or_insert(v).clone())
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// LP queries on polytopes with configurable tolerances and a call counter.
#[derive(Debug, Default)]
pub struct PolytopeQueries {
    pub solver: CountingSolver,
}

impl PolytopeQueries {
    pub fn new(tol: Tolerances) -> Self {
        PolytopeQueries {
            solver: CountingSolver::new(tol),
        }
    }

    fn region_system(&self, dim: usize, region: Option<&BoundedRegion>) -> Result<ConstraintSystem> {
        match region {
            Some(r) => {
                r.validate()?;
                check_dim(dim, r.dim()?)?;
                r.bounded_system(self.solver.tol().sentinel)
            }
            None => Ok(ConstraintSystem::new(dim)),
        }
    }

    /// Witness of `system ∩ region`, if any.
    fn witness(&self, system: &ConstraintSystem) -> Result<Option<DenseVector>> {
        Ok(self.solver.feasibility(system)?.witness)
    }

    pub fn is_empty(&self, polytope: &Polytope, region: Option<&BoundedRegion>) -> Result<bool> {
        let rs = self.region_system(polytope.system.dim(), region)?;
        Ok(self.witness(&polytope.within(&rs)?)?.is_none())
    }

    /// Flip test on the closure: redundant if the closed system with row
    /// `index` reversed is infeasible.
    pub fn is_redundant(&self, polytope: &Polytope, index: usize) -> Result<bool> {
        let flipped = polytope.system.closure().with_flipped(index)?;
        Ok(!self.solver.feasibility(&flipped)?.is_feasible())
    }

    pub fn boundaries(&self, polytope: &Polytope, region: Option<&BoundedRegion>) -> Result<Vec<usize>> {
        let rs = self.region_system(polytope.system.dim(), region)?;
        if self.witness(&polytope.within(&rs)?)?.is_none() {
            return Err(Error::invalid(format!("polytope {} is empty", polytope.code)));
        }
        let mut out = Vec::new();
        for m in 0..polytope.system.len() {
            let mut sys = polytope.flipped_system(m)?;
            sys.extend_from(&rs)?;
            if self.witness(&sys)?.is_some() {
                out.push(m);
            }
        }
        Ok(out)
    }

    pub fn one_adjacent_codes(
        &self,
        polytope: &Polytope,
        candidates: &PrescreenResult,
        region: Option<&BoundedRegion>,
    ) -> Result<Vec<ActivationCode>> {
        let rs = self.region_system(polytope.system.dim(), region)?;
        let range = polytope.last_level_range();
        let mut out = Vec::new();
        for &m in &candidates.cutting {
            if m >= range.len() {
                return Err(Error::invalid(format!("candidate {m} outside the last level")));
            }
            let mut sys = polytope.flipped_system(range.start + m)?;
            sys.extend_from(&rs)?;
            if self.witness(&sys)?.is_some() {
                out.push(polytope.code.flip_last(m));
            }
        }
        Ok(out)
    }

    /// Indices of `hyperplanes` (read as `normal·x = offset`) with
    /// non-empty open sides in both directions inside `region`.
    pub fn prescreen(&self, hyperplanes: &ConstraintSystem, region: &BoundedRegion) -> Result<PrescreenResult> {
        let rs = self.region_system(hyperplanes.dim(), Some(region))?;
        let Some(seed) = self.witness(&rs)? else {
            return Err(Error::invalid("prescreening region is empty"));
        };
        let rows: Vec<(Vec<f64>, f64)> = hyperplanes
            .constraints()
            .iter()
            .map(|c| (c.normal.to_vec(), -c.offset))
            .collect();
        let screen = Screen {
            solver: &self.solver,
            region: &rs,
            bbox: region.bounding_box(),
            exact_box: region.is_box(),
        };
        screen.run(&rows, vec![seed.into_vec()])
    }
}

/// Hyperplane pre-screening of rows `w·x + b` against a region system.
pub(crate) struct Screen<'a> {
    pub solver: &'a CountingSolver,
    pub region: &'a ConstraintSystem,
    /// Box containing the region, for LP-free exclusion.
    pub bbox: Option<(Vec<f64>, Vec<f64>)>,
    /// The region equals `bbox`, so the box test is decisive.
    pub exact_box: bool,
}

impl Screen<'_> {
    /// `pool` holds points known to satisfy `region` with margin; LP
    /// witnesses are added as they are found.
    pub fn run(&self, rows: &[(Vec<f64>, f64)], mut pool: Vec<Vec<f64>>) -> Result<PrescreenResult> {
        let tol = self.solver.tol();
        let margin = tol.interior + tol.numeric;
        let mut cutting = Vec::new();
        for (m, (w, b)) in rows.iter().enumerate() {
            let norm = norm2(w);
            if norm == 0.0 {
                continue;
            }
            if let Some((lo, hi)) = &self.bbox {
                let (mut min, mut max) = (*b, *b);
                for ((wj, l), u) in w.iter().zip(lo).zip(hi) {
                    let (a, c) = (wj * l, wj * u);
                    min += a.min(c);
                    max += a.max(c);
                }
                // Lenient by ε_num so borderline rows fall through to the LP.
                let cut = margin * norm - tol.numeric * norm;
                if max < cut || min > -cut {
                    continue;
                }
                if self.exact_box {
                    cutting.push(m);
                    continue;
                }
            }
            let strict = (tol.interior + 2.0 * tol.numeric) * norm;
            let mut pos = false;
            let mut neg = false;
            for p in &pool {
                let v = dot(w, p) + b;
                pos |= v >= strict;
                neg |= v <= -strict;
            }
            let mut cuts = true;
            for (seen, bit) in [(pos, true), (neg, false)] {
                if seen {
                    continue;
                }
                let mut sys = self.region.clone();
                sys.push(hyperplane_constraint(w, *b, bit))?;
                match self.solver.feasibility(&sys)?.witness {
                    Some(x) => pool.push(x.into_vec()),
                    None => {
                        cuts = false;
                        break;
                    }
                }
            }
            if cuts {
                cutting.push(m);
            }
        }
        Ok(PrescreenResult { cutting })
    }
}

pub fn is_empty(polytope: &Polytope, region: Option<&BoundedRegion>) -> Result<bool> {
    PolytopeQueries::default().is_empty(polytope, region)
}

pub fn is_redundant(polytope: &Polytope, index: usize) -> Result<bool> {
    PolytopeQueries::default().is_redundant(polytope, index)
}

pub fn boundaries(polytope: &Polytope, region: Option<&BoundedRegion>) -> Result<Vec<usize>> {
    PolytopeQueries::default().boundaries(polytope, region)
}

pub fn one_adjacent_codes(
    polytope: &Polytope,
    candidates: &PrescreenResult,
    region: Option<&BoundedRegion>,
) -> Result<Vec<ActivationCode>> {
    PolytopeQueries::default().one_adjacent_codes(polytope, candidates, region)
}

pub fn prescreen(hyperplanes: &ConstraintSystem, region: &BoundedRegion) -> Result<PrescreenResult> {
    PolytopeQueries::default().prescreen(hyperplanes, region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{identity, two_layer};
    use crate::oracle::{grid_points, random_network};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn code(s: &str) -> ActivationCode {
        s.parse().unwrap()
    }

    fn unit_box(lo: f64, hi: f64) -> BoundedRegion {
        BoundedRegion::boxed(vec![lo, lo], vec![hi, hi]).unwrap()
    }

    fn rows(p: &Polytope) -> Vec<(Vec<f64>, f64)> {
        p.system.constraints().iter().map(|c| c.as_le()).collect()
    }

    #[test]
    fn direction_convention() {
        let p = polytope_from_code(&identity(), &code("10")).unwrap();
        assert_eq!(rows(&p), vec![(vec![-1.0, 0.0], 0.0), (vec![0.0, 1.0], 0.0)]);
        let q = polytope_from_code(&two_layer(), &code("1|1")).unwrap();
        assert_eq!(rows(&q), vec![(vec![-1.0, 0.0], 0.0), (vec![-1.0, 0.0], -0.5)]);
        assert_eq!(q.level_range(2), 1..2);
    }

    #[test]
    fn conflicting_code_still_constructs() {
        let net = ReluNetwork::new(
            1,
            vec![LayerSpec::from_rows(&[vec![1.0], vec![1.0]], vec![-1.0, 1.0]).unwrap()],
            LayerSpec::from_rows(&[vec![1.0, 1.0]], vec![0.0]).unwrap(),
        )
        .unwrap();
        // Bit 1 on x − 1 and bit 0 on x + 1: x ≥ 1 and x ≤ −1.
        let p = polytope_from_code(&net, &code("10")).unwrap();
        assert_eq!(p.system.len(), 2);
        assert!(is_empty(&p, None).unwrap());
    }

    #[test]
    fn emptiness_in_boxes() {
        let p = polytope_from_code(&identity(), &code("11")).unwrap();
        assert!(!is_empty(&p, Some(&unit_box(-1.0, 1.0))).unwrap());
        assert!(is_empty(&p, Some(&unit_box(-1.0, -0.5))).unwrap());
    }

    #[test]
    fn dead_neuron_rows_follow_the_tie_rule() {
        // Level 2 of code 0| is the constant −0.5 < 0, so only bit 0 is possible.
        let net = two_layer();
        assert!(is_empty(&polytope_from_code(&net, &code("0|1")).unwrap(), None).unwrap());
        assert!(!is_empty(&polytope_from_code(&net, &code("0|0")).unwrap(), None).unwrap());
        let zero = hyperplane_constraint(&[0.0, 0.0], 0.0, true);
        assert!(zero.trivially_satisfied());
        assert!(!flip_constraint(&zero).trivially_satisfied());
    }

    #[test]
    fn redundancy_examples() {
        let p = Polytope::from_parts(
            code("11"),
            ConstraintSystem::from_constraints(
                1,
                vec![
                    LinearConstraint::le(vec![1.0], 1.0).unwrap(),
                    LinearConstraint::le(vec![1.0], 2.0).unwrap(),
                ],
            )
            .unwrap(),
        );
        assert!(is_redundant(&p, 1).unwrap());
        assert!(!is_redundant(&p, 0).unwrap());
        assert!(is_redundant(&p, 2).is_err());
        let dup = Polytope::from_parts(
            code("11"),
            ConstraintSystem::from_constraints(
                1,
                vec![
                    LinearConstraint::le(vec![1.0], 0.0).unwrap(),
                    LinearConstraint::le(vec![1.0], 0.0).unwrap(),
                ],
            )
            .unwrap(),
        );
        assert!(!is_redundant(&dup, 0).unwrap());
        assert!(!is_redundant(&dup, 1).unwrap());
    }

    #[test]
    fn boundary_examples() {
        let p = polytope_from_code(&identity(), &code("11")).unwrap();
        assert_eq!(boundaries(&p, None).unwrap(), vec![0, 1]);
        assert!(boundaries(&p, Some(&unit_box(0.5, 1.0))).unwrap().is_empty());
        assert!(boundaries(&p, Some(&unit_box(-1.0, -0.5))).is_err());
    }

    #[test]
    fn adjacency_examples() {
        let p = polytope_from_code(&identity(), &code("11")).unwrap();
        let n = one_adjacent_codes(&p, &PrescreenResult::all(2), None).unwrap();
        assert_eq!(n, vec![code("01"), code("10")]);
        let q = polytope_from_code(&two_layer(), &code("1|1")).unwrap();
        assert_eq!(
            one_adjacent_codes(&q, &PrescreenResult::all(1), None).unwrap(),
            vec![code("1|0")]
        );
        for c in &n {
            assert_eq!(c.hamming(&p.code), Some(1));
        }
    }

    #[test]
    fn prescreen_examples() {
        let region = BoundedRegion::boxed(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        let hs = ConstraintSystem::from_constraints(
            2,
            vec![
                LinearConstraint::le(vec![1.0, 0.0], 0.0).unwrap(),
                LinearConstraint::le(vec![1.0, 0.0], 1.5).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(prescreen(&hs, &region).unwrap().cutting, vec![1]);
        // Same answer through the LP path.
        let tri = BoundedRegion::halfspaces(region.to_system().unwrap().constraints().to_vec()).unwrap();
        assert_eq!(prescreen(&hs, &tri).unwrap().cutting, vec![1]);
        let empty = BoundedRegion::halfspaces(vec![
            LinearConstraint::le(vec![1.0, 0.0], 0.0).unwrap(),
            LinearConstraint::ge(vec![1.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        assert!(prescreen(&hs, &empty).is_err());
    }

    #[test]
    fn random_nets_agree_with_grid_and_flip_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let region = unit_box(-1.0, 1.0);
        let q = PolytopeQueries::default();
        for _ in 0..10 {
            let net = random_network(&mut rng, 2, &[4, 3], 1);
            let grid = grid_points(&region, 0.1).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for x in &grid {
                seen.insert(net.encode(x, 2).unwrap());
            }
            for c in &seen {
                let p = polytope_from_code(&net, c).unwrap();
                // A grid point with this code lies in the closure; emptiness
                // under the margin is only possible for slivers.
                if q.is_empty(&p, Some(&region)).unwrap() {
                    continue;
                }
                // Boundaries: one-sided grid check.
                let bs = q.boundaries(&p, Some(&region)).unwrap();
                for m in 0..p.system.len() {
                    let flipped = p.flipped_system(m).unwrap();
                    let hit = grid.iter().any(|x| flipped.contains(x, 1e-6, 1e-12));
                    if hit {
                        assert!(bs.contains(&m), "{c} row {m}");
                    }
                }
                for n in q
                    .one_adjacent_codes(&p, &PrescreenResult::all(3), Some(&region))
                    .unwrap()
                {
                    let pn = polytope_from_code(&net, &n).unwrap();
                    let back = q
                        .one_adjacent_codes(&pn, &PrescreenResult::all(3), Some(&region))
                        .unwrap();
                    assert!(back.contains(c));
                }
            }
        }
    }

    #[test]
    fn redundancy_is_sound_on_a_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let region = unit_box(-1.0, 1.0);
        let grid = grid_points(&region, 0.05).unwrap();
        for _ in 0..10 {
            let net = random_network(&mut rng, 2, &[6], 1);
            let x = [0.1, -0.2];
            let p = polytope_from_code(&net, &net.encode(&x, 1).unwrap()).unwrap();
            let closed = p.system.closure();
            for m in 0..closed.len() {
                if !is_redundant(&p, m).unwrap() {
                    continue;
                }
                let mut rest = closed.constraints().to_vec();
                rest.remove(m);
                let rest = ConstraintSystem::from_constraints(2, rest).unwrap();
                for g in &grid {
                    assert_eq!(
                        rest.contains(g, 0.0, 1e-12),
                        closed.contains(g, 0.0, 1e-12),
                        "row {m} at {g:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn cache_inserts_once() {
        let cache = EmptinessCache::new();
        let c = code("1");
        let first = cache.get_or_check(&c, 0, || Ok(None)).unwrap();
        let second = cache.get_or_check(&c, 0, || panic!("cached")).unwrap();
        assert_eq!(first, second);
        assert_eq!(cache.len(), 1);
        cache.get_or_check(&c, 1, || Ok(Some(DenseVector::zeros(1)))).unwrap();
        assert_eq!(cache.len(), 2);
    }
}
