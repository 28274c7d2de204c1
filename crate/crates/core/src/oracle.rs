//! Brute-force baselines: exhaustive code enumeration and dense grid scans.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{check_dim, Error, Result};
use crate::lp::{DenseMatrix, DenseVector, LpSolver, Tolerances};
use crate::network::{ActivationCode, LayerSpec, ReluNetwork};
use crate::polytope::{polytope_from_code, BoundedRegion};

/// Largest total neuron count accepted by [`enumerate_bruteforce`].
pub const MAX_BRUTEFORCE_NEURONS: usize = 24;

/// Largest number of points accepted by [`grid_scan`].
pub const MAX_GRID_POINTS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumerationResult {
    pub codes: BTreeSet<ActivationCode>,
    pub lp_calls: u64,
}

fn bits_of(pattern: u32, width: usize) -> Vec<bool> {
    (0..width).map(|i| pattern >> i & 1 == 1).collect()
}

/// Every code whose polytope meets `region`, found by checking all codes
/// level by level below each non-empty prefix.
pub fn enumerate_bruteforce(net: &ReluNetwork, region: &BoundedRegion) -> Result<EnumerationResult> {
    enumerate_bruteforce_with(net, region, Tolerances::default())
}

pub fn enumerate_bruteforce_with(
    net: &ReluNetwork,
    region: &BoundedRegion,
    tol: Tolerances,
) -> Result<EnumerationResult> {
    let total: usize = net.widths().iter().sum();
    if total > MAX_BRUTEFORCE_NEURONS {
        return Err(Error::Unsupported(format!(
            "brute-force enumeration over {total} neurons (limit {MAX_BRUTEFORCE_NEURONS})"
        )));
    }
    region.validate()?;
    check_dim(net.input_dim(), region.dim()?)?;
    let region_sys = region.bounded_system(tol.sentinel)?;
    let solver = LpSolver::new(tol);
    let calls = AtomicU64::new(0);

    let mut prefixes = vec![ActivationCode::empty()];
    for width in net.widths() {
        let candidates: Vec<ActivationCode> = prefixes
            .iter()
            .flat_map(|p| (0..1u32 << width).map(move |k| p.with_level(bits_of(k, width))))
            .collect();
        let keep: Vec<Option<ActivationCode>> = candidates
            .into_par_iter()
            .map(|code| {
                let sys = polytope_from_code(net, &code)?.within(&region_sys)?;
                calls.fetch_add(1, Ordering::Relaxed);
                Ok(solver.feasibility(&sys)?.is_feasible().then_some(code))
            })
            .collect::<Result<_>>()?;
        prefixes = keep.into_iter().flatten().collect();
    }
    Ok(EnumerationResult {
        codes: prefixes.into_iter().collect(),
        lp_calls: calls.into_inner(),
    })
}

/// Grid coordinates along one axis: `lo + k·res` below `hi`, then `hi`.
fn axis(lo: f64, hi: f64, res: f64) -> Vec<f64> {
    let n = ((hi - lo) / res + 1e-9).floor() as usize;
    let mut out: Vec<f64> = (0..=n).map(|k| lo + k as f64 * res).filter(|v| *v <= hi).collect();
    if out.last().is_none_or(|v| hi - v > 1e-12 * (1.0 + hi.abs())) {
        out.push(hi);
    }
    out
}

/// Uniform grid over the region's bounding box, corners included, keeping
/// the points inside the region.
pub fn grid_points(region: &BoundedRegion, resolution: f64) -> Result<Vec<Vec<f64>>> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::invalid("grid resolution must be positive"));
    }
    region.validate()?;
    let (lo, hi) = region
        .bounding_box()
        .ok_or_else(|| Error::invalid("grid scan needs a region with a box or ball part"))?;
    let axes: Vec<Vec<f64>> = lo.iter().zip(&hi).map(|(l, h)| axis(*l, *h, resolution)).collect();
    let count = axes
        .iter()
        .try_fold(1usize, |acc, a| acc.checked_mul(a.len()))
        .filter(|n| *n <= MAX_GRID_POINTS)
        .ok_or_else(|| Error::Unsupported(format!("grid exceeds {MAX_GRID_POINTS} points")))?;
    let exact = region.is_box();
    let sys = region.to_system()?;
    let mut out = Vec::with_capacity(count);
    let mut idx = vec![0usize; axes.len()];
    loop {
        let x: Vec<f64> = idx.iter().zip(&axes).map(|(i, a)| a[*i]).collect();
        if exact || sys.contains(&x, 0.0, 1e-12) {
            out.push(x);
        }
        let mut d = 0;
        loop {
            if d == axes.len() {
                return Ok(out);
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridScan {
    pub points: usize,
    pub codes: BTreeSet<ActivationCode>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub argmin: Vec<Vec<f64>>,
    pub argmax: Vec<Vec<f64>>,
}

/// Evaluates the network on every grid point of the region.
pub fn grid_scan(net: &ReluNetwork, region: &BoundedRegion, resolution: f64) -> Result<GridScan> {
    check_dim(net.input_dim(), region.dim()?)?;
    let pts = grid_points(region, resolution)?;
    if pts.is_empty() {
        return Err(Error::invalid("no grid point inside the region"));
    }
    let q = net.output_dim();
    let evals: Vec<(ActivationCode, DenseVector)> = pts
        .par_iter()
        .map(|x| Ok((net.encode(x, net.num_levels())?, net.forward(x)?)))
        .collect::<Result<_>>()?;
    let mut scan = GridScan {
        points: pts.len(),
        codes: BTreeSet::new(),
        min: vec![f64::INFINITY; q],
        max: vec![f64::NEG_INFINITY; q],
        argmin: vec![Vec::new(); q],
        argmax: vec![Vec::new(); q],
    };
    for (x, (code, o)) in pts.iter().zip(evals) {
        scan.codes.insert(code);
        for k in 0..q {
            if o[k] < scan.min[k] {
                scan.min[k] = o[k];
                scan.argmin[k] = x.clone();
            }
            if o[k] > scan.max[k] {
                scan.max[k] = o[k];
                scan.argmax[k] = x.clone();
            }
        }
    }
    Ok(scan)
}

/// Network with weights and biases drawn uniformly from `[-1, 1]`.
pub fn random_network<R: Rng + ?Sized>(rng: &mut R, input_dim: usize, widths: &[usize], outputs: usize) -> ReluNetwork {
    let mut layer = |rows: usize, cols: usize| LayerSpec {
        weights: DenseMatrix::from_finite(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        ),
        bias: DenseVector::from_finite((0..rows).map(|_| rng.gen_range(-1.0..=1.0)).collect()),
    };
    let mut cols = input_dim;
    let mut hidden = Vec::with_capacity(widths.len());
    for &w in widths {
        hidden.push(layer(w, cols));
        cols = w;
    }
    let output = layer(outputs, cols);
    ReluNetwork::new(input_dim, hidden, output).expect("random network shapes chain")
}
