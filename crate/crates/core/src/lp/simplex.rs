//! Two-phase dense-tableau primal simplex with Bland's anti-cycling rule.
//!
//! Solves `min c·x` subject to `A x ≤ b` with every `x` free. Free variables
//! are split as `x = x⁺ − x⁻`; each row gets a slack, and rows with negative
//! right-hand side get an artificial variable for phase I.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SimplexOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// A dense LP in inequality form over free variables.
#[derive(Debug, Clone)]
pub(crate) struct DenseLp {
    pub n: usize,
    /// Row-major `m × n` coefficients.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseLp {
    pub fn new(n: usize) -> Self {
        DenseLp {
            n,
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: &[f64], rhs: f64) {
        debug_assert_eq!(row.len(), self.n);
        self.a.extend_from_slice(row);
        self.b.push(rhs);
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    /// Minimizes `c·x`; `c = None` stops after phase I (pure feasibility).
    pub fn solve(&self, c: Option<&[f64]>, feas_tol: f64, max_iter: usize) -> Result<SimplexOutcome> {
        Tableau::build(self).run(c, feas_tol, max_iter)
    }
}

struct Tableau {
    n: usize,
    m: usize,
    /// Columns: x⁺ (n), x⁻ (n), slacks (m), artificials (k), then the rhs.
    width: usize,
    n_art: usize,
    data: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
}

impl Tableau {
    fn build(lp: &DenseLp) -> Self {
        let n = lp.n;
        let m = lp.rows();
        let n_art = lp.b.iter().filter(|v| **v < 0.0).count();
        let width = 2 * n + m + n_art + 1;
        let mut data = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let mut art = 0;
        for i in 0..m {
            let row = &mut data[i * width..(i + 1) * width];
            let sign = if lp.b[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                let v = lp.a[i * n + j];
                row[j] = sign * v;
                row[n + j] = -sign * v;
            }
            row[2 * n + i] = sign;
            row[width - 1] = sign * lp.b[i];
            if sign < 0.0 {
                let col = 2 * n + m + art;
                row[col] = 1.0;
                basis[i] = col;
                art += 1;
            } else {
                basis[i] = 2 * n + i;
            }
        }
        Tableau {
            n,
            m,
            width,
            n_art,
            data,
            obj: vec![0.0; width],
            basis,
            iterations: 0,
        }
    }

    fn art_start(&self) -> usize {
        2 * self.n + self.m
    }

    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.data[r * w + c];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        let (head, tail) = self.data.split_at_mut(r * w);
        let (prow, rest) = tail.split_at_mut(w);
        let eliminate = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[c] = 0.0;
            }
        };
        head.chunks_exact_mut(w).for_each(eliminate);
        rest.chunks_exact_mut(w).for_each(eliminate);
        eliminate(&mut self.obj);
        self.basis[r] = c;
    }

    /// Runs simplex iterations over columns `< ncols` until optimal.
    /// Returns `false` when the objective is unbounded below.
    fn iterate(&mut self, ncols: usize, max_iter: usize) -> Result<bool> {
        let w = self.width;
        loop {
            if self.iterations >= max_iter {
                return Err(Error::SolverStall {
                    iterations: self.iterations,
                });
            }
            // Bland: lowest-index improving column.
            let Some(enter) = (0..ncols).find(|&j| self.obj[j] < -COST_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.data[i * w + enter];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-12 * best.abs().max(1.0)
                                || (ratio <= best + 1e-12 * best.abs().max(1.0) && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Ok(false);
            };
            self.pivot(row, enter);
            self.iterations += 1;
        }
    }

    fn primal(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.width - 1];
        for (i, &col) in self.basis.iter().enumerate() {
            z[col] = self.rhs(i);
        }
        (0..self.n).map(|j| z[j] - z[self.n + j]).collect()
    }

    fn run(mut self, c: Option<&[f64]>, feas_tol: f64, max_iter: usize) -> Result<SimplexOutcome> {
        let w = self.width;
        let art0 = self.art_start();
        if self.n_art > 0 {
            // Phase I: minimize the sum of artificials.
            for i in 0..self.m {
                if self.basis[i] >= art0 {
                    for j in 0..w {
                        if j < art0 || j == w - 1 {
                            self.obj[j] -= self.data[i * w + j];
                        }
                    }
                }
            }
            self.iterate(art0 + self.n_art, max_iter)?;
            let infeasibility = -self.obj[w - 1];
            if infeasibility > feas_tol {
                return Ok(SimplexOutcome::Infeasible);
            }
            // Drive zero-level artificials out of the basis; drop rows that
            // turn out to be linearly dependent.
            let mut i = 0;
            while i < self.m {
                if self.basis[i] >= art0 {
                    let row = &self.data[i * w..(i + 1) * w];
                    match (0..art0).find(|&j| row[j].abs() > 1e-9) {
                        Some(j) => {
                            self.pivot(i, j);
                            i += 1;
                        }
                        None => {
                            self.data.drain(i * w..(i + 1) * w);
                            self.basis.remove(i);
                            self.m -= 1;
                        }
                    }
                } else {
                    i += 1;
                }
            }
        }
        let Some(c) = c else {
            return Ok(SimplexOutcome::Optimal {
                x: self.primal(),
                value: 0.0,
            });
        };
        // Phase II over the structural and slack columns.
        let n = self.n;
        let cost = |j: usize| -> f64 {
            if j < n {
                c[j]
            } else if j < 2 * n {
                -c[j - n]
            } else {
                0.0
            }
        };
        self.obj = vec![0.0; w];
        for j in 0..art0 {
            self.obj[j] = cost(j);
        }
        for i in 0..self.m {
            let cb = cost(self.basis[i]);
            if cb != 0.0 {
                for j in 0..w {
                    if j < art0 || j == w - 1 {
                        self.obj[j] -= cb * self.data[i * w + j];
                    }
                }
            }
        }
        if !self.iterate(art0, max_iter)? {
            return Ok(SimplexOutcome::Unbounded);
        }
        let x = self.primal();
        let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        Ok(SimplexOutcome::Optimal { x, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(n: usize, rows: &[(&[f64], f64)]) -> DenseLp {
        let mut lp = DenseLp::new(n);
        for (a, b) in rows {
            lp.push_row(a, *b);
        }
        lp
    }

    #[test]
    fn box_maximum() {
        let p = lp(
            2,
            &[
                (&[1.0, 0.0], 1.0),
                (&[-1.0, 0.0], 1.0),
                (&[0.0, 1.0], 1.0),
                (&[0.0, -1.0], 1.0),
            ],
        );
        match p.solve(Some(&[-1.0, -1.0]), 1e-9, 1000).unwrap() {
            SimplexOutcome::Optimal { x, value } => {
                assert!((value + 2.0).abs() < 1e-12);
                assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let p = lp(1, &[(&[1.0], -1.0), (&[-1.0], -1.0)]);
        assert_eq!(p.solve(None, 1e-9, 1000).unwrap(), SimplexOutcome::Infeasible);
        let q = lp(1, &[(&[1.0], 1.0)]);
        assert_eq!(q.solve(Some(&[1.0]), 1e-9, 1000).unwrap(), SimplexOutcome::Unbounded);
    }

    #[test]
    fn redundant_equality_rows_are_dropped() {
        // x ≥ 1 written twice plus x ≤ 1: a degenerate vertex.
        let p = lp(1, &[(&[-1.0], -1.0), (&[-1.0], -1.0), (&[1.0], 1.0)]);
        match p.solve(Some(&[1.0]), 1e-9, 1000).unwrap() {
            SimplexOutcome::Optimal { x, .. } => assert!((x[0] - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn iteration_limit_is_a_stall() {
        let p = lp(2, &[(&[-1.0, 0.0], -1.0), (&[0.0, -1.0], -1.0)]);
        assert_eq!(
            p.solve(None, 1e-9, 0).unwrap_err(),
            Error::SolverStall { iterations: 0 }
        );
    }
}
