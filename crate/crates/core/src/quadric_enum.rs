//! Enumeration of the integer zeros of a quadratic form in a sup-norm box
//! and least-squares fits of the growth exponent.
//!
//! For `F(x) = 0` with `|x| < P` the enumerator iterates over the first
//! `n - 2` coordinates and solves the residual binary quadratic in the last
//! two through a representation table built once per call: substituting
//! `w = 2Qy + l` (with `Q` the trailing 2x2 block and `l` the linear
//! coupling from the prefix) turns the residual equation into
//! `w^T adj(Q) w = t`, so one hash map from values of the adjugate form to
//! the pairs `w` realising them answers every prefix. When the trailing
//! block is singular the enumerator falls back to a full scan.

use crate::budget::Budget;
use crate::numeric::visit_box;
use crate::quadform::QuadraticForm;
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::HashMap;

/// Cap on representation-table cells (memory guard).
const TABLE_CELL_CAP: u64 = 16_000_000;

/// The integer zeros of a form with sup norm below `p`, stored flat.
#[derive(Debug, Clone)]
pub struct ZeroSet {
    n: usize,
    p: f64,
    bound: i64,
    data: Vec<i64>,
}

impl ZeroSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Largest coordinate magnitude compatible with `|x| < p`.
    pub fn bound(&self) -> i64 {
        self.bound
    }

    pub fn count(&self) -> u64 {
        (self.data.len() / self.n) as u64
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> {
        self.data.chunks_exact(self.n)
    }
}

pub(crate) fn box_bound(p: f64) -> Result<i64> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "box size P = {p} must be a finite number >= 1"
        )));
    }
    if p > 1e9 {
        return Err(Error::InvalidArgument(format!(
            "box size P = {p} too large"
        )));
    }
    Ok(if p.fract() == 0.0 {
        p as i64 - 1
    } else {
        p.floor() as i64
    })
}

fn sup_norm(x: &[i64]) -> i64 {
    x.iter().map(|c| c.abs()).max().unwrap_or(0)
}

/// Representation table for the adjugate of the trailing 2x2 block.
struct PairTable {
    q11: i128,
    q12: i128,
    q22: i128,
    two_det: i128,
    map: HashMap<i128, Vec<(i64, i64)>>,
}

impl PairTable {
    fn build(q11: i64, q12: i64, q22: i64, wmax: (i64, i64)) -> Self {
        let (a, b, c) = (q11 as i128, q12 as i128, q22 as i128);
        let det = a * c - b * b;
        let mut map: HashMap<i128, Vec<(i64, i64)>> = HashMap::new();
        // lexicographic fill keeps each bucket deterministically ordered
        for w1 in -wmax.0..=wmax.0 {
            let w1c = w1 as i128;
            for w2 in -wmax.1..=wmax.1 {
                let w2c = w2 as i128;
                let val = c * w1c * w1c - 2 * b * w1c * w2c + a * w2c * w2c;
                map.entry(val).or_default().push((w1, w2));
            }
        }
        PairTable {
            q11: a,
            q12: b,
            q22: c,
            two_det: 2 * det,
            map,
        }
    }

    /// All integer `y` with `y^T Q y + l . y + m = 0` and `|y| <= bound`.
    fn solve(&self, l: (i128, i128), m: i128, bound: i64, mut sink: impl FnMut(i64, i64)) {
        // target of the adjugate form after completing the square
        let l_adj = self.q22 * l.0 * l.0 - 2 * self.q12 * l.0 * l.1 + self.q11 * l.1 * l.1;
        let t = -2 * self.two_det * m + l_adj;
        if let Some(ws) = self.map.get(&t) {
            for &(w1, w2) in ws {
                let u1 = w1 as i128 - l.0;
                let u2 = w2 as i128 - l.1;
                let y1_num = self.q22 * u1 - self.q12 * u2;
                let y2_num = -self.q12 * u1 + self.q11 * u2;
                if y1_num % self.two_det != 0 || y2_num % self.two_det != 0 {
                    continue;
                }
                let y1 = y1_num / self.two_det;
                let y2 = y2_num / self.two_det;
                if y1.unsigned_abs() <= bound as u128 && y2.unsigned_abs() <= bound as u128 {
                    sink(y1 as i64, y2 as i64);
                }
            }
        }
    }
}

/// Enumerates `{x : F(x) = 0, |x| < p}` deterministically; the parallel
/// prefix sweep merges in first-coordinate order and the result is sorted.
pub fn enumerate_zeros(f: &QuadraticForm, p: f64, budget: &Budget) -> Result<ZeroSet> {
    let n = f.n();
    let b = box_bound(p)?;

    let data = if n == 1 {
        // a x^2 = 0 has only the origin
        vec![0i64]
    } else {
        let q11 = f.entry(n - 2, n - 2);
        let q12 = f.entry(n - 2, n - 1);
        let q22 = f.entry(n - 1, n - 1);
        let det2 = q11 as i128 * q22 as i128 - q12 as i128 * q12 as i128;
        if det2 != 0 {
            enumerate_with_table(f, b, budget)?
        } else {
            full_scan(f, b, budget)?
        }
    };
    let mut points: Vec<Vec<i64>> = data.chunks_exact(n).map(|c| c.to_vec()).collect();
    points.sort_unstable();
    let mut flat = Vec::with_capacity(points.len() * n);
    for pnt in points {
        flat.extend(pnt);
    }
    Ok(ZeroSet {
        n,
        p,
        bound: b,
        data: flat,
    })
}

fn enumerate_with_table(f: &QuadraticForm, b: i64, budget: &Budget) -> Result<Vec<i64>> {
    let n = f.n();
    let pd = n - 2;
    let q11 = f.entry(pd, pd);
    let q12 = f.entry(pd, n - 1);
    let q22 = f.entry(n - 1, n - 1);

    // Peak coupling magnitudes decide the w-grid extent.
    let lmax: Vec<i64> = (0..2)
        .map(|k| 2 * (0..pd).map(|j| f.entry(j, pd + k).abs()).sum::<i64>() * b)
        .collect();
    let wmax1 = 2 * (q11.abs() + q12.abs()) * b + lmax[0];
    let wmax2 = 2 * (q12.abs() + q22.abs()) * b + lmax[1];
    let cells = (2 * wmax1 as u64 + 1) * (2 * wmax2 as u64 + 1);
    let prefix_count = (2 * b as u64 + 1).pow(pd as u32);
    if cells > TABLE_CELL_CAP {
        // the coupled grid is too large to tabulate; fall back to scanning
        return full_scan(f, b, budget);
    }
    budget.check(cells.saturating_add(prefix_count.saturating_mul(2)))?;

    let table = PairTable::build(q11, q12, q22, (wmax1, wmax2));

    let solve_prefix = |xp: &[i64], out: &mut Vec<i64>| {
        debug_assert_eq!(xp.len(), pd);
        let mut m: i128 = 0;
        for i in 0..pd {
            let xi = xp[i] as i128;
            m += f.entry(i, i) as i128 * xi * xi;
            for j in i + 1..pd {
                m += 2 * f.entry(i, j) as i128 * xi * xp[j] as i128;
            }
        }
        let mut l = (0i128, 0i128);
        for j in 0..pd {
            l.0 += 2 * f.entry(j, pd) as i128 * xp[j] as i128;
            l.1 += 2 * f.entry(j, n - 1) as i128 * xp[j] as i128;
        }
        table.solve(l, m, b, |y1, y2| {
            out.extend_from_slice(xp);
            out.push(y1);
            out.push(y2);
        });
    };

    if pd == 0 {
        let mut out = Vec::new();
        solve_prefix(&[], &mut out);
        return Ok(out);
    }

    // parallel over the first prefix coordinate, merged in order
    let lo_rest = vec![-b; pd - 1];
    let hi_rest = vec![b; pd - 1];
    let chunks: Vec<Vec<i64>> = (-b..=b)
        .into_par_iter()
        .map(|x1| {
            let mut out = Vec::new();
            let mut xp = vec![0i64; pd];
            xp[0] = x1;
            visit_box(&lo_rest, &hi_rest, |rest| {
                xp[1..].copy_from_slice(rest);
                solve_prefix(&xp, &mut out);
            });
            out
        })
        .collect();
    Ok(chunks.concat())
}

fn full_scan(f: &QuadraticForm, b: i64, budget: &Budget) -> Result<Vec<i64>> {
    let n = f.n();
    let width = (2 * b + 1) as u64;
    let mut work = 1u64;
    for _ in 0..n {
        work = work.checked_mul(width).ok_or(Error::BudgetExceeded {
            required: u64::MAX,
            budget: budget.limit(),
        })?;
    }
    budget.check(work)?;
    let lo = vec![-b; n];
    let hi = vec![b; n];
    let mut out = Vec::new();
    visit_box(&lo, &hi, |x| {
        if f.evaluate_unchecked(x) == 0 {
            out.extend_from_slice(x);
        }
    });
    Ok(out)
}

/// Least-squares fit of `log N(P) = e log P + log a`.
#[derive(Debug, Clone)]
pub struct CountingFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub counts: Vec<(f64, u64)>,
    /// RMS of the log residuals.
    pub residual_rms: f64,
    /// Set when the form has fewer than five variables, where the box count
    /// can drift from the `P^(n-2)` reference.
    pub small_dimension_warning: bool,
}

/// Enumerates at every `P` in `ps` and fits the growth exponent.
pub fn counting_fit(f: &QuadraticForm, ps: &[f64], budget: &Budget) -> Result<CountingFit> {
    if ps.len() < 4 {
        return Err(Error::NotEnoughData {
            needed: 4,
            got: ps.len(),
        });
    }
    let mut counts = Vec::with_capacity(ps.len());
    for &p in ps {
        let zs = enumerate_zeros(f, p, budget)?;
        counts.push((p, zs.count()));
    }
    let mut fit = counting_fit_from_counts(&counts)?;
    fit.small_dimension_warning = f.n() < 5;
    Ok(fit)
}

/// Fit from precomputed `(P, N)` pairs (used for synthetic checks too).
pub fn counting_fit_from_counts(counts: &[(f64, u64)]) -> Result<CountingFit> {
    if counts.len() < 4 {
        return Err(Error::NotEnoughData {
            needed: 4,
            got: counts.len(),
        });
    }
    for &(p, nn) in counts {
        if nn == 0 {
            return Err(Error::EmptyCount { p });
        }
    }
    let pts: Vec<(f64, f64)> = counts.iter().map(|&(p, nn)| (p, nn as f64)).collect();
    let (slope, intercept) = crate::numeric::fit_log_log(&pts);
    let mut rss = 0.0;
    for &(p, y) in &pts {
        let r = y.ln() - (slope * p.ln() + intercept);
        rss += r * r;
    }
    Ok(CountingFit {
        exponent: slope,
        amplitude: intercept.exp(),
        counts: counts.to_vec(),
        residual_rms: (rss / pts.len() as f64).sqrt(),
        small_dimension_warning: false,
    })
}

/// Number of zeros in the boundary shell `(1 - delta) P <= |x| < P`.
pub fn shell_count(f: &QuadraticForm, p: f64, delta: f64, budget: &Budget) -> Result<u64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!(
            "shell width delta = {delta} must lie in [0, 1)"
        )));
    }
    let zs = enumerate_zeros(f, p, budget)?;
    let threshold = (1.0 - delta) * p;
    Ok(zs
        .iter()
        .filter(|x| sup_norm(x) as f64 >= threshold)
        .count() as u64)
}
