//! Breadth-first traversal of the polytope adjacency graph.
//!
//! Level-`l` polytopes are traversed inside each non-empty level-`(l−1)`
//! polytope `R` intersected with the region `B`. The traversal pops codes
//! in FIFO order, descends into a popped code before expanding it, and
//! tries neighbor candidates in ascending hyperplane index, so visit order
//! is deterministic for a given start point. When the visitor shrinks the
//! region, queued codes are re-checked against the new region when popped
//! and every active level is reseeded from an interior point of
//! `B_new ∩ R`, which keeps the search complete over the final region.

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use std::collections::{BTreeSet, HashSet, VecDeque};
use std::time::{Duration, Instant};

use crate::error::{check_dim, Error, Result};
use crate::lp::{ConstraintSystem, CountingSolver, Tolerances};
use crate::network::{mask, ActivationCode, LayerSpec, LocalLinearModel, ReluNetwork};
use crate::polytope::{
    hyperplane_constraint, polytope_from_code, BoundedRegion, EmptinessCache, Polytope, PrescreenResult, Screen,
};

fn secs<S: Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

fn secs_opt<S: Serializer>(d: &Option<Duration>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match d {
        Some(d) => s.serialize_some(&d.as_secs_f64()),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraversalConfig {
    pub region: BoundedRegion,
    pub max_polytopes: Option<usize>,
    #[serde(serialize_with = "secs_opt")]
    pub time_budget: Option<Duration>,
    pub prescreen: bool,
    /// Threads used for neighbor checks; 1 keeps everything on the caller's thread.
    pub workers: usize,
    pub tolerances: Tolerances,
}

impl TraversalConfig {
    pub fn new(region: BoundedRegion) -> Self {
        TraversalConfig {
            region,
            max_polytopes: None,
            time_budget: None,
            prescreen: true,
            workers: 1,
            tolerances: Tolerances::default(),
        }
    }

    pub fn with_max_polytopes(mut self, n: usize) -> Self {
        self.max_polytopes = Some(n);
        self
    }

    pub fn with_time_budget(mut self, d: Duration) -> Self {
        self.time_budget = Some(d);
        self
    }

    pub fn with_prescreen(mut self, on: bool) -> Self {
        self.prescreen = on;
        self
    }

    pub fn with_workers(mut self, n: usize) -> Self {
        self.workers = n;
        self
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tolerances = tol;
        self
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        self.region.validate()?;
        check_dim(input_dim, self.region.dim()?)?;
        self.tolerances.validate()?;
        if self.max_polytopes == Some(0) {
            return Err(Error::invalid("max_polytopes must be positive"));
        }
        if self.time_budget.is_some_and(|d| d.is_zero()) {
            return Err(Error::invalid("time budget must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VisitOutcome {
    Continue,
    Stop,
    /// Continue inside a sub-region of the current region.
    ShrinkRegion(BoundedRegion),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TraversalStats {
    pub polytopes_visited: usize,
    pub lp_calls: u64,
    pub codes_checked: usize,
    #[serde(serialize_with = "secs")]
    pub wall_time: Duration,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraversalResult {
    /// Visited codes in visit order.
    pub codes: Vec<ActivationCode>,
    pub stats: TraversalStats,
    /// A polytope or time limit ended the run early.
    pub truncated: bool,
    /// The visitor ended the run early.
    pub stopped: bool,
    pub final_region: BoundedRegion,
}

impl TraversalResult {
    pub fn code_set(&self) -> BTreeSet<ActivationCode> {
        self.codes.iter().cloned().collect()
    }

    /// Whether every polytope meeting the final region was visited.
    pub fn complete(&self) -> bool {
        !self.truncated && !self.stopped
    }
}

/// Level-`L` traversal of every polytope meeting `config.region`.
pub fn traverse<V>(
    net: &ReluNetwork,
    start: &[f64],
    config: &TraversalConfig,
    mut visitor: V,
) -> Result<TraversalResult>
where
    V: FnMut(&Polytope, &LocalLinearModel) -> Result<VisitOutcome>,
{
    let visit = |p: &Polytope, m: Option<&LocalLinearModel>| match visitor(p, m.expect("leaf model"))? {
        VisitOutcome::ShrinkRegion(_) => Err(Error::invalid("region shrinking requires traverse_with_shrinking")),
        other => Ok(other),
    };
    run_from_start(net, start, config, visit)
}

/// [`traverse`] whose visitor may shrink the region; the guarantee holds
/// for the final region.
pub fn traverse_with_shrinking<V>(
    net: &ReluNetwork,
    start: &[f64],
    config: &TraversalConfig,
    mut visitor: V,
) -> Result<TraversalResult>
where
    V: FnMut(&Polytope, &LocalLinearModel) -> Result<VisitOutcome>,
{
    run_from_start(net, start, config, |p, m| visitor(p, m.expect("leaf model")))
}

fn run_from_start<V>(net: &ReluNetwork, start: &[f64], config: &TraversalConfig, visitor: V) -> Result<TraversalResult>
where
    V: FnMut(&Polytope, Option<&LocalLinearModel>) -> Result<VisitOutcome>,
{
    config.validate(net.input_dim())?;
    check_dim(net.input_dim(), start.len())?;
    let scale = 1.0 + start.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !config.region.contains(start, config.tolerances.numeric * scale) {
        return Err(Error::invalid("start point lies outside the traversing region"));
    }
    let mut engine = Engine::new(net, config, net.num_levels(), visitor)?;
    let frame = FrameSpec {
        prefix: ActivationCode::empty(),
        parent: ConstraintSystem::new(net.input_dim()),
        layer: net.first_level(),
    };
    engine.run(frame, Some(start.to_vec()))?;
    Ok(engine.finish())
}

/// Traverses the level-`level` polytopes inside `parent_code`'s polytope
/// intersected with `config.region`, without descending further.
pub fn traverse_level<V>(
    net: &ReluNetwork,
    parent_code: &ActivationCode,
    config: &TraversalConfig,
    start: &[f64],
    level: usize,
    mut visitor: V,
) -> Result<TraversalResult>
where
    V: FnMut(&Polytope) -> Result<VisitOutcome>,
{
    config.validate(net.input_dim())?;
    check_dim(net.input_dim(), start.len())?;
    if level == 0 || level > net.num_levels() || parent_code.num_levels() + 1 != level {
        return Err(Error::invalid(format!(
            "level {level} needs a parent code with {} levels, got {}",
            level.saturating_sub(1),
            parent_code.num_levels()
        )));
    }
    let parent = if level == 1 {
        ConstraintSystem::new(net.input_dim())
    } else {
        polytope_from_code(net, parent_code)?.system
    };
    let scale = 1.0 + start.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = config.tolerances.numeric * scale;
    if !config.region.contains(start, tol) || !parent.closure().contains(start, 0.0, tol) {
        return Err(Error::invalid("start point lies outside the parent polytope or region"));
    }
    let coeffs = net.level_coefficients(parent_code, level)?;
    let frame = FrameSpec {
        prefix: parent_code.clone(),
        parent,
        layer: LayerSpec {
            weights: coeffs.effective_weights,
            bias: coeffs.effective_bias,
        },
    };
    let visit = |p: &Polytope, _: Option<&LocalLinearModel>| match visitor(p)? {
        VisitOutcome::ShrinkRegion(_) => Err(Error::invalid("region shrinking is not supported per level")),
        other => Ok(other),
    };
    let mut engine = Engine::new(net, config, level, visit)?;
    engine.run(frame, Some(start.to_vec()))?;
    Ok(engine.finish())
}

/// Parent data of one level traversal.
struct FrameSpec {
    prefix: ActivationCode,
    /// Rows of the parent polytope (empty at level 1).
    parent: ConstraintSystem,
    /// `Ŵˡ, b̂ˡ` under the prefix.
    layer: LayerSpec,
}

struct Frame {
    spec: FrameSpec,
    level: usize,
    /// `B ∩ R` for the current region version.
    bsys: ConstraintSystem,
    version: u64,
    checked: HashSet<Vec<bool>>,
    queue: VecDeque<Entry>,
    screen: Option<PrescreenResult>,
}

struct Entry {
    bits: Vec<bool>,
    /// A point of the cell inside `B ∩ R`, valid for `version`.
    witness: Vec<f64>,
    version: u64,
}

enum Flow {
    Go,
    Halt,
}

/// Thread-safe part of the engine.
struct Ctx<'a> {
    net: &'a ReluNetwork,
    config: &'a TraversalConfig,
    solver: CountingSolver,
    cache: EmptinessCache,
    pool: Option<rayon::ThreadPool>,
}

/// Candidate bits and a witness when the cell is non-empty.
type Checked = (Vec<bool>, Option<Vec<f64>>);

impl Ctx<'_> {
    fn cell_system(&self, f: &Frame, bits: &[bool]) -> ConstraintSystem {
        let mut sys = f.bsys.clone();
        for (m, &bit) in bits.iter().enumerate() {
            sys.push(hyperplane_constraint(
                f.spec.layer.weights.row(m),
                f.spec.layer.bias[m],
                bit,
            ))
            .expect("layer rows match the input dimension");
        }
        sys
    }

    /// Witness of cell `bits` inside `B ∩ R`, if non-empty.
    fn check(&self, f: &Frame, bits: &[bool]) -> Result<Option<Vec<f64>>> {
        let code = f.spec.prefix.with_level(bits.to_vec());
        let w = self.cache.get_or_check(&code, f.version, || {
            Ok(self.solver.feasibility(&self.cell_system(f, bits))?.witness)
        })?;
        Ok(w.map(|w| w.into_vec()))
    }

    fn check_many(&self, f: &Frame, cands: Vec<Vec<bool>>) -> Result<Vec<Checked>> {
        let one = |bits: Vec<bool>| -> Result<Checked> {
            let w = self.check(f, &bits)?;
            Ok((bits, w))
        };
        match &self.pool {
            Some(pool) if cands.len() > 1 => pool.install(|| cands.into_par_iter().map(one).collect()),
            _ => cands.into_iter().map(one).collect(),
        }
    }

    fn inside(&self, f: &Frame, x: &[f64]) -> bool {
        let tol = &self.config.tolerances;
        f.bsys
            .constraints()
            .iter()
            .all(|c| c.satisfied_by(x, tol.interior + tol.numeric, tol.numeric))
    }

    /// A point deep inside `B ∩ R`, or any point of it when it has no
    /// interior; `None` when it is empty.
    fn interior(&self, f: &Frame) -> Result<Option<Vec<f64>>> {
        if let Some(w) = self.solver.interior_point(&f.bsys)?.witness {
            return Ok(Some(w.into_vec()));
        }
        Ok(self.solver.feasibility(&f.bsys)?.witness.map(|w| w.into_vec()))
    }

    /// The non-empty cell holding `x`. Bits of neurons whose hyperplane
    /// passes within the margin of `x` are resolved by LP.
    fn cell_at(&self, f: &Frame, x: &[f64]) -> Result<Option<(Vec<bool>, Vec<f64>)>> {
        let tol = &self.config.tolerances;
        let strict = tol.interior + 2.0 * tol.numeric;
        let pre = f.spec.layer.apply(x)?;
        let bits: Vec<bool> = pre.iter().map(|v| *v >= 0.0).collect();
        let ambiguous: Vec<usize> = (0..bits.len())
            .filter(|&m| {
                let n = crate::lp::norm2(f.spec.layer.weights.row(m));
                n > 0.0 && pre[m].abs() < strict * n
            })
            .collect();
        if ambiguous.is_empty() && self.inside(f, x) {
            return Ok(Some((bits, x.to_vec())));
        }
        let k = ambiguous.len().min(10);
        for flips in 0..1u32 << k {
            let mut b = bits.clone();
            for (i, &m) in ambiguous.iter().take(k).enumerate() {
                if flips >> i & 1 == 1 {
                    b[m] = !b[m];
                }
            }
            if let Some(w) = self.check(f, &b)? {
                return Ok(Some((b, w)));
            }
        }
        Ok(None)
    }

    /// Starting cell from `seed`, falling back to an interior point of
    /// `B ∩ R`. `None` when `B ∩ R` is empty.
    fn seed_cell(&self, f: &Frame, seed: Option<Vec<f64>>) -> Result<Option<(Vec<bool>, Vec<f64>)>> {
        if let Some(x) = seed {
            if let Some(found) = self.cell_at(f, &x)? {
                return Ok(Some(found));
            }
        }
        let Some(x) = self.interior(f)? else {
            return Ok(None);
        };
        match self.cell_at(f, &x)? {
            Some(found) => Ok(Some(found)),
            None => Err(Error::Numerical(format!(
                "no seed cell found at level {} inside a non-empty region",
                f.level
            ))),
        }
    }
}

struct Engine<'a, V> {
    ctx: Ctx<'a>,
    target: usize,
    region: BoundedRegion,
    region_sys: ConstraintSystem,
    version: u64,
    visitor: V,
    codes: Vec<ActivationCode>,
    codes_checked: usize,
    started: Instant,
    truncated: bool,
    stopped: bool,
}

impl<'a, V> Engine<'a, V>
where
    V: FnMut(&Polytope, Option<&LocalLinearModel>) -> Result<VisitOutcome>,
{
    fn new(net: &'a ReluNetwork, config: &'a TraversalConfig, target: usize, visitor: V) -> Result<Self> {
        let pool = if config.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.workers)
                    .build()
                    .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Engine {
            ctx: Ctx {
                net,
                config,
                solver: CountingSolver::new(config.tolerances),
                cache: EmptinessCache::new(),
                pool,
            },
            target,
            region_sys: config.region.bounded_system(config.tolerances.sentinel)?,
            region: config.region.clone(),
            version: 0,
            visitor,
            codes: Vec::new(),
            codes_checked: 0,
            started: Instant::now(),
            truncated: false,
            stopped: false,
        })
    }

    fn finish(self) -> TraversalResult {
        TraversalResult {
            stats: TraversalStats {
                polytopes_visited: self.codes.len(),
                lp_calls: self.ctx.solver.calls(),
                codes_checked: self.codes_checked,
                wall_time: self.started.elapsed(),
                workers: self.ctx.config.workers,
            },
            codes: self.codes,
            truncated: self.truncated,
            stopped: self.stopped,
            final_region: self.region,
        }
    }

    fn bsys(&self, parent: &ConstraintSystem) -> ConstraintSystem {
        let mut sys = self.region_sys.clone();
        sys.extend_from(parent).expect("parent rows share the input dimension");
        sys
    }

    fn shrink(&mut self, region: BoundedRegion) -> Result<()> {
        region.validate()?;
        check_dim(self.ctx.net.input_dim(), region.dim()?)?;
        if !region.is_subset_of(&self.region, &self.ctx.solver)? {
            return Err(Error::invalid("shrunk region is not a subset of the current region"));
        }
        self.region_sys = region.bounded_system(self.ctx.config.tolerances.sentinel)?;
        self.region = region;
        self.version += 1;
        Ok(())
    }

    /// Brings the frame up to the current region; `false` when `B ∩ R` is
    /// now empty.
    fn refresh(&mut self, f: &mut Frame) -> Result<bool> {
        if f.version == self.version {
            return Ok(true);
        }
        f.bsys = self.bsys(&f.spec.parent);
        f.version = self.version;
        let Some((bits, x)) = self.ctx.seed_cell(f, None)? else {
            return Ok(false);
        };
        if f.checked.insert(bits.clone()) {
            self.codes_checked += 1;
            f.queue.push_back(Entry {
                bits,
                witness: x,
                version: self.version,
            });
        }
        Ok(true)
    }

    fn screen(&self, f: &Frame, pool: Vec<Vec<f64>>) -> Result<PrescreenResult> {
        let m = f.spec.layer.width();
        if !self.ctx.config.prescreen {
            return Ok(PrescreenResult::all(m));
        }
        let rows: Vec<(Vec<f64>, f64)> = (0..m)
            .map(|i| (f.spec.layer.weights.row(i).to_vec(), f.spec.layer.bias[i]))
            .collect();
        let pool = pool.into_iter().filter(|x| self.ctx.inside(f, x)).collect();
        Screen {
            solver: &self.ctx.solver,
            region: &f.bsys,
            bbox: self.region.bounding_box(),
            exact_box: f.spec.parent.is_empty() && self.region.is_box(),
        }
        .run(&rows, pool)
    }

    fn out_of_time(&self) -> bool {
        self.ctx.config.time_budget.is_some_and(|b| self.started.elapsed() > b)
    }

    fn run(&mut self, spec: FrameSpec, seed: Option<Vec<f64>>) -> Result<Flow> {
        let level = spec.prefix.num_levels() + 1;
        let mut f = Frame {
            bsys: self.bsys(&spec.parent),
            spec,
            level,
            version: self.version,
            checked: HashSet::new(),
            queue: VecDeque::new(),
            screen: None,
        };
        let Some((bits, x)) = self.ctx.seed_cell(&f, seed)? else {
            return Ok(Flow::Go);
        };
        f.checked.insert(bits.clone());
        self.codes_checked += 1;
        f.queue.push_back(Entry {
            bits,
            witness: x,
            version: self.version,
        });

        while let Some(e) = f.queue.pop_front() {
            if self.out_of_time() {
                self.truncated = true;
                return Ok(Flow::Halt);
            }
            if !self.refresh(&mut f)? {
                return Ok(Flow::Go);
            }
            let witness = if e.version == self.version {
                e.witness
            } else {
                match self.ctx.check(&f, &e.bits)? {
                    Some(w) => w,
                    None => continue,
                }
            };
            let code = f.spec.prefix.with_level(e.bits.clone());
            let masked = mask(&f.spec.layer, &e.bits);
            let mut rows = f.spec.parent.clone();
            for (m, &bit) in e.bits.iter().enumerate() {
                rows.push(hyperplane_constraint(
                    f.spec.layer.weights.row(m),
                    f.spec.layer.bias[m],
                    bit,
                ))?;
            }
            if level == self.target {
                if self.ctx.config.max_polytopes.is_some_and(|max| self.codes.len() >= max) {
                    self.truncated = true;
                    return Ok(Flow::Halt);
                }
                let model = (level == self.ctx.net.num_levels()).then(|| {
                    let o = self.ctx.net.output_of(&masked);
                    LocalLinearModel {
                        weights: o.weights,
                        bias: o.bias,
                    }
                });
                let poly = Polytope::from_parts(code.clone(), rows);
                self.codes.push(code);
                match (self.visitor)(&poly, model.as_ref())? {
                    VisitOutcome::Continue => {}
                    VisitOutcome::Stop => {
                        self.stopped = true;
                        return Ok(Flow::Halt);
                    }
                    VisitOutcome::ShrinkRegion(r) => self.shrink(r)?,
                }
            } else {
                let child = FrameSpec {
                    prefix: code,
                    parent: rows,
                    layer: self.ctx.net.next_level(&masked, level + 1),
                };
                if let Flow::Halt = self.run(child, Some(witness.clone()))? {
                    return Ok(Flow::Halt);
                }
            }
            if !self.refresh(&mut f)? {
                return Ok(Flow::Go);
            }
            if f.screen.is_none() {
                f.screen = Some(self.screen(&f, vec![witness])?);
            }
            let cands: Vec<Vec<bool>> = f
                .screen
                .as_ref()
                .expect("screen computed")
                .cutting
                .iter()
                .map(|&m| {
                    let mut b = e.bits.clone();
                    b[m] = !b[m];
                    b
                })
                .filter(|b| f.checked.insert(b.clone()))
                .collect();
            self.codes_checked += cands.len();
            for (bits, w) in self.ctx.check_many(&f, cands)? {
                if let Some(witness) = w {
                    f.queue.push_back(Entry {
                        bits,
                        witness,
                        version: self.version,
                    });
                }
            }
        }
        Ok(Flow::Go)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{identity, two_layer};
    use crate::oracle::{enumerate_bruteforce, random_network};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square() -> BoundedRegion {
        BoundedRegion::boxed(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()
    }

    fn codes(list: &[&str]) -> BTreeSet<ActivationCode> {
        list.iter().map(|s| s.parse().unwrap()).collect()
    }

    fn all(net: &ReluNetwork, start: &[f64], cfg: &TraversalConfig) -> TraversalResult {
        traverse(net, start, cfg, |_, _| Ok(VisitOutcome::Continue)).unwrap()
    }

    #[test]
    fn identity_quadrants() {
        let r = all(&identity(), &[0.5, 0.5], &TraversalConfig::new(square()));
        assert_eq!(r.code_set(), codes(&["00", "01", "10", "11"]));
        assert_eq!(r.codes[0], "11".parse().unwrap());
        assert!(r.complete());
        assert!(r.stats.codes_checked >= r.stats.polytopes_visited);
    }

    #[test]
    fn two_layer_partition() {
        let r = all(&two_layer(), &[0.7, 0.0], &TraversalConfig::new(square()));
        assert_eq!(r.code_set(), codes(&["0|0", "1|0", "1|1"]));
        assert_eq!(r.codes[0], "1|1".parse().unwrap());
    }

    #[test]
    fn start_on_a_hyperplane() {
        let r = all(&identity(), &[0.0, 0.0], &TraversalConfig::new(square()));
        assert_eq!(r.code_set().len(), 4);
    }

    #[test]
    fn level_traversal_examples() {
        let net = two_layer();
        let cfg = TraversalConfig::new(square());
        let on = traverse_level(&net, &"1".parse().unwrap(), &cfg, &[0.7, 0.0], 2, |_| {
            Ok(VisitOutcome::Continue)
        })
        .unwrap();
        assert_eq!(on.code_set(), codes(&["1|0", "1|1"]));
        let off = traverse_level(&net, &"0".parse().unwrap(), &cfg, &[-0.5, 0.0], 2, |_| {
            Ok(VisitOutcome::Continue)
        })
        .unwrap();
        assert_eq!(off.code_set(), codes(&["0|0"]));
        assert_eq!(off.stats.lp_calls, 0);
        let first = traverse_level(&net, &ActivationCode::empty(), &cfg, &[0.7, 0.0], 1, |_| {
            Ok(VisitOutcome::Continue)
        })
        .unwrap();
        assert_eq!(first.code_set(), codes(&["0", "1"]));
        assert!(
            traverse_level(&net, &"1".parse().unwrap(), &cfg, &[-0.5, 0.0], 2, |_| Ok(
                VisitOutcome::Continue
            ))
            .is_err()
        );
    }

    #[test]
    fn errors_and_limits() {
        let net = identity();
        let cfg = TraversalConfig::new(square());
        assert!(traverse(&net, &[2.0, 0.0], &cfg, |_, _| Ok(VisitOutcome::Continue)).is_err());
        let r = all(&net, &[0.5, 0.5], &cfg.clone().with_max_polytopes(2));
        assert!(r.truncated);
        assert_eq!(r.codes.len(), 2);
        let r = all(&net, &[0.5, 0.5], &cfg.clone().with_max_polytopes(4));
        assert!(!r.truncated);
        let r = traverse(&net, &[0.5, 0.5], &cfg, |_, _| Ok(VisitOutcome::Stop)).unwrap();
        assert!(r.stopped && r.codes.len() == 1);
        let shrink = traverse(&net, &[0.5, 0.5], &cfg, |_, _| Ok(VisitOutcome::ShrinkRegion(square())));
        assert!(shrink.is_err());
        assert!(cfg.clone().with_workers(0).validate(2).is_err());
    }

    #[test]
    fn shrinking_skips_excluded_queue_entries() {
        let net = identity();
        let cfg = TraversalConfig::new(square());
        let small = BoundedRegion::boxed(vec![0.25, -1.0], vec![1.0, 1.0]).unwrap();
        let mut first = true;
        let r = traverse_with_shrinking(&net, &[0.5, 0.5], &cfg, |_, _| {
            if std::mem::take(&mut first) {
                Ok(VisitOutcome::ShrinkRegion(small.clone()))
            } else {
                Ok(VisitOutcome::Continue)
            }
        })
        .unwrap();
        assert_eq!(r.code_set(), codes(&["11", "10"]));
        assert_eq!(r.final_region, small);
        let grow = traverse_with_shrinking(&net, &[0.5, 0.5], &TraversalConfig::new(small.clone()), |_, _| {
            Ok(VisitOutcome::ShrinkRegion(square()))
        });
        assert!(grow.is_err());
    }

    #[test]
    fn shrinking_to_a_far_corner_is_complete() {
        // The new region does not touch the start polytope's neighbors.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let net = random_network(&mut rng, 2, &[5, 4], 1);
            let corner = BoundedRegion::boxed(vec![0.6, 0.6], vec![1.0, 1.0]).unwrap();
            let mut shrunk = false;
            let r = traverse_with_shrinking(&net, &[-0.9, -0.9], &TraversalConfig::new(square()), |_, _| {
                if shrunk {
                    Ok(VisitOutcome::Continue)
                } else {
                    shrunk = true;
                    Ok(VisitOutcome::ShrinkRegion(corner.clone()))
                }
            })
            .unwrap();
            let truth = enumerate_bruteforce(&net, &corner).unwrap().codes;
            let after: BTreeSet<_> = r.codes[1..].iter().cloned().collect();
            assert_eq!(after, truth);
        }
    }

    #[test]
    fn matches_bruteforce_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for widths in [vec![6], vec![4, 3], vec![3, 3, 2]] {
            for _ in 0..10 {
                let p = rng.gen_range(2..=3);
                let net = random_network(&mut rng, p, &widths, 1);
                let region = BoundedRegion::boxed(vec![-1.0; p], vec![1.0; p]).unwrap();
                let start: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let cfg = TraversalConfig::new(region.clone());
                let a = all(&net, &start, &cfg);
                let truth = enumerate_bruteforce(&net, &region).unwrap().codes;
                assert_eq!(a.code_set(), truth);
                assert_eq!(a.codes.len(), truth.len());
                let b = all(&net, &start, &cfg);
                assert_eq!(a.codes, b.codes);
                assert_eq!(a.stats.lp_calls, b.stats.lp_calls);
                let c = all(&net, &start, &cfg.clone().with_prescreen(false));
                assert_eq!(c.code_set(), truth);
                let d = all(&net, &start, &cfg.clone().with_workers(3));
                assert_eq!(d.codes, a.codes);
            }
        }
    }
}
