//! Integer quadratic forms `F(x) = x^T L x` with symmetric `L`, their Smith
//! normal forms, kernel counts modulo `q`, and local solubility certificates.
//!
//! The kernel count drives the square-cancellation bound for complete Gauss
//! sums: `|S_q(a, v)|^2 <= q^n * #{x mod q : 2Mx = 0 mod q}` with `M = 2L`,
//! and that cardinality is a product of gcds of `q` with the invariant
//! factors of `2M`.

use crate::{Error, Result};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

/// Largest coefficient magnitude accepted in a form's matrix.
pub const ENTRY_CAP: i64 = 1_000_000;

/// Largest modulus accepted by [`kernel_count`].
pub const MODULUS_CAP: u64 = 1_000_000;

/// Square matrix over the integers, arbitrary precision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BigMatrix {
    n: usize,
    data: Vec<BigInt>,
}

impl BigMatrix {
    pub fn zero(n: usize) -> Self {
        BigMatrix {
            n,
            data: vec![BigInt::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zero(n);
        for i in 0..n {
            m.data[i * n + i] = BigInt::one();
        }
        m
    }

    pub fn from_i64_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
        }
        let mut m = Self::zero(n);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                m.data[i * n + j] = BigInt::from(v);
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigInt) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul(&self, other: &BigMatrix) -> BigMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = BigMatrix::zero(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let add = a * other.get(k, j);
                    let cur = out.get(i, j) + add;
                    out.set(i, j, cur);
                }
            }
        }
        out
    }

    pub fn scaled(&self, c: i64) -> BigMatrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= c;
        }
        out
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> BigInt {
        let n = self.n;
        if n == 0 {
            return BigInt::one();
        }
        let mut m = self.data.clone();
        let idx = |i: usize, j: usize| i * n + j;
        let mut sign = 1i32;
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if m[idx(k, k)].is_zero() {
                let mut found = None;
                for i in k + 1..n {
                    if !m[idx(i, k)].is_zero() {
                        found = Some(i);
                        break;
                    }
                }
                match found {
                    Some(i) => {
                        for j in 0..n {
                            m.swap(idx(k, j), idx(i, j));
                        }
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let t = &m[idx(i, j)] * &m[idx(k, k)] - &m[idx(i, k)] * &m[idx(k, j)];
                    m[idx(i, j)] = t / &prev;
                }
                m[idx(i, k)] = BigInt::zero();
            }
            prev = m[idx(k, k)].clone();
        }
        let mut d = m[idx(n - 1, n - 1)].clone();
        if sign < 0 {
            d = -d;
        }
        d
    }

    pub fn is_unimodular(&self) -> bool {
        let d = self.det();
        d.abs().is_one()
    }

    pub fn diagonal(&self) -> Vec<BigInt> {
        (0..self.n).map(|i| self.get(i, i).clone()).collect()
    }
}

/// Decomposition `M = S * D * T` with `S`, `T` unimodular and `D` diagonal
/// with a divisibility chain `d_1 | d_2 | ...`.
#[derive(Debug, Clone)]
pub struct SmithDecomposition {
    pub s: BigMatrix,
    pub d: BigMatrix,
    pub t: BigMatrix,
}

impl SmithDecomposition {
    /// Nonnegative diagonal of `D`.
    pub fn invariants(&self) -> Vec<BigInt> {
        self.d.diagonal()
    }
}

/// Quotient minimizing `|a - q b|` (ties toward the smaller quotient).
fn nearest_quotient(a: &BigInt, b: &BigInt) -> BigInt {
    debug_assert!(!b.is_zero());
    let (q, r) = a.div_rem(b);
    let mut best = q.clone();
    let mut best_abs = r.abs();
    for cand in [&q + 1, &q - 1] {
        let diff: BigInt = a - &cand * b;
        let abs = diff.abs();
        if abs < best_abs {
            best_abs = abs;
            best = cand;
        }
    }
    best
}

/// Smith normal form with explicit unimodular transforms.
///
/// The pivot at each stage is the entry of smallest nonzero magnitude in the
/// remaining submatrix, ties broken in row-major order, so the output is
/// deterministic for a given input.
pub fn smith_normal_form(m: &BigMatrix) -> SmithDecomposition {
    let n = m.n();
    let mut a = m.clone();
    let mut s = BigMatrix::identity(n);
    let mut t = BigMatrix::identity(n);

    // Row op on `a` is compensated on `s` by the inverse column op, and
    // column op on `a` by the inverse row op on `t`, so m = s * a * t holds
    // after every step.
    let swap_rows = |a: &mut BigMatrix, s: &mut BigMatrix, i: usize, j: usize| {
        if i == j {
            return;
        }
        for col in 0..n {
            let ii = i * n + col;
            let jj = j * n + col;
            a.data.swap(ii, jj);
        }
        for row in 0..n {
            let ii = row * n + i;
            let jj = row * n + j;
            s.data.swap(ii, jj);
        }
    };
    let swap_cols = |a: &mut BigMatrix, t: &mut BigMatrix, i: usize, j: usize| {
        if i == j {
            return;
        }
        for row in 0..n {
            let ii = row * n + i;
            let jj = row * n + j;
            a.data.swap(ii, jj);
        }
        for col in 0..n {
            let ii = i * n + col;
            let jj = j * n + col;
            t.data.swap(ii, jj);
        }
    };
    // row_i -= c * row_j on `a`; col_j += c * col_i on `s`.
    let add_row = |a: &mut BigMatrix, s: &mut BigMatrix, i: usize, j: usize, c: &BigInt| {
        if c.is_zero() {
            return;
        }
        for col in 0..n {
            let v = a.get(i, col) - c * a.get(j, col);
            a.set(i, col, v);
        }
        for row in 0..n {
            let v = s.get(row, j) + c * s.get(row, i);
            s.set(row, j, v);
        }
    };
    // col_j -= c * col_i on `a`; row_i += c * row_j on `t`.
    let add_col = |a: &mut BigMatrix, t: &mut BigMatrix, j: usize, i: usize, c: &BigInt| {
        if c.is_zero() {
            return;
        }
        for row in 0..n {
            let v = a.get(row, j) - c * a.get(row, i);
            a.set(row, j, v);
        }
        for col in 0..n {
            let v = t.get(i, col) + c * t.get(j, col);
            t.set(i, col, v);
        }
    };

    for stage in 0..n {
        'stage: loop {
            // Deterministic pivot: smallest |entry| != 0, row-major ties.
            let mut pivot: Option<(usize, usize)> = None;
            let mut pivot_abs = BigInt::zero();
            for i in stage..n {
                for j in stage..n {
                    let v = a.get(i, j);
                    if v.is_zero() {
                        continue;
                    }
                    let abs = v.abs();
                    if pivot.is_none() || abs < pivot_abs {
                        pivot = Some((i, j));
                        pivot_abs = abs;
                    }
                }
            }
            let (pi, pj) = match pivot {
                Some(p) => p,
                None => break 'stage, // remaining block is zero
            };
            swap_rows(&mut a, &mut s, stage, pi);
            swap_cols(&mut a, &mut t, stage, pj);

            let mut clean = true;
            for i in stage + 1..n {
                if !a.get(i, stage).is_zero() {
                    let q = nearest_quotient(a.get(i, stage), a.get(stage, stage));
                    add_row(&mut a, &mut s, i, stage, &q);
                    if !a.get(i, stage).is_zero() {
                        clean = false;
                    }
                }
            }
            for j in stage + 1..n {
                if !a.get(stage, j).is_zero() {
                    let q = nearest_quotient(a.get(stage, j), a.get(stage, stage));
                    add_col(&mut a, &mut t, j, stage, &q);
                    if !a.get(stage, j).is_zero() {
                        clean = false;
                    }
                }
            }
            if !clean {
                continue 'stage; // smaller remainders became the new pivots
            }
            // Divisibility of the trailing block by the pivot; folding a
            // offending row into this one strictly shrinks the gcd.
            let d = a.get(stage, stage).clone();
            for i in stage + 1..n {
                for j in stage + 1..n {
                    if !(a.get(i, j) % &d).is_zero() {
                        let minus_one = BigInt::from(-1);
                        add_row(&mut a, &mut s, stage, i, &minus_one);
                        continue 'stage;
                    }
                }
            }
            break 'stage;
        }
    }
    // Normalize signs so the invariants are nonnegative.
    for i in 0..n {
        if a.get(i, i).is_negative() {
            for col in 0..n {
                let v = -a.get(i, col).clone();
                a.set(i, col, v);
            }
            for row in 0..n {
                let v = -s.get(row, i).clone();
                s.set(row, i, v);
            }
        }
    }
    SmithDecomposition { s, d: a, t }
}

/// Symmetric integer quadratic form `F(x) = x^T L x`.
///
/// Construction validates symmetry, the coefficient cap, and that `L` is
/// non-singular; the determinant and the invariant factors of `2L` are
/// computed once and cached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticForm {
    n: usize,
    l: Vec<i64>,
    det: BigInt,
    smith_2l: Vec<BigInt>,
}

impl QuadraticForm {
    pub fn new(n: usize, entries: Vec<i64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("form dimension must be >= 1".into()));
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        for &v in &entries {
            if v.abs() > ENTRY_CAP {
                return Err(Error::EntryTooLarge {
                    value: v,
                    cap: ENTRY_CAP,
                });
            }
        }
        for i in 0..n {
            for j in 0..i {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        let rows: Vec<Vec<i64>> = (0..n)
            .map(|i| entries[i * n..(i + 1) * n].to_vec())
            .collect();
        let lm = BigMatrix::from_i64_rows(&rows)?;
        let det = lm.det();
        if det.is_zero() {
            return Err(Error::SingularForm);
        }
        let snf = smith_normal_form(&lm.scaled(2));
        Ok(QuadraticForm {
            n,
            l: entries,
            det,
            smith_2l: snf.invariants(),
        })
    }

    pub fn diagonal(diag: &[i64]) -> Result<Self> {
        let n = diag.len();
        let mut entries = vec![0i64; n * n];
        for (i, &d) in diag.iter().enumerate() {
            entries[i * n + i] = d;
        }
        Self::new(n, entries)
    }

    /// Parses the plain-text format: first line `n`, then `n` rows of `n`
    /// integers.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty form description".into()))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad dimension line: {e}")))?;
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing matrix row {}", i + 1)))?;
            let row: std::result::Result<Vec<i64>, _> =
                line.split_whitespace().map(|t| t.parse::<i64>()).collect();
            let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            entries.extend(row);
        }
        Self::new(n, entries)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| self.entry(i, j).to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> i64 {
        self.l[i * self.n + j]
    }

    pub fn det(&self) -> &BigInt {
        &self.det
    }

    /// Invariant factors of `2L`.
    pub fn smith_invariants(&self) -> &[BigInt] {
        &self.smith_2l
    }

    pub fn is_diagonal(&self) -> bool {
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.entry(i, j) != 0 {
                    return false;
                }
            }
        }
        true
    }

    pub fn diagonal_entries(&self) -> Vec<i64> {
        (0..self.n).map(|i| self.entry(i, i)).collect()
    }

    /// `F(x)` as an exact integer. Coordinates are capped at `10^12` so the
    /// internal 128-bit arithmetic cannot overflow.
    pub fn evaluate(&self, x: &[i64]) -> Result<BigInt> {
        Ok(BigInt::from(self.evaluate_i128(x)?))
    }

    pub(crate) fn evaluate_i128(&self, x: &[i64]) -> Result<i128> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        const COORD_CAP: i64 = 1_000_000_000_000;
        for &c in x {
            if c.abs() > COORD_CAP {
                return Err(Error::InvalidArgument(format!(
                    "coordinate {c} exceeds the supported range"
                )));
            }
        }
        Ok(self.evaluate_unchecked(x))
    }

    /// Hot-path evaluation; callers guarantee coordinates within range.
    #[inline]
    pub(crate) fn evaluate_unchecked(&self, x: &[i64]) -> i128 {
        let n = self.n;
        let mut acc: i128 = 0;
        for i in 0..n {
            let xi = x[i] as i128;
            acc += self.l[i * n + i] as i128 * xi * xi;
            for j in i + 1..n {
                acc += 2 * self.l[i * n + j] as i128 * xi * x[j] as i128;
            }
        }
        acc
    }

    /// `(2L) x`, the gradient of `F`.
    pub fn gradient(&self, x: &[i64]) -> Vec<i128> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut acc: i128 = 0;
                for j in 0..n {
                    acc += self.l[i * n + j] as i128 * x[j] as i128;
                }
                2 * acc
            })
            .collect()
    }

    /// `L y` (no doubling), used by the lattice-sum bound.
    pub fn l_times(&self, y: &[i64]) -> Vec<i128> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut acc: i128 = 0;
                for j in 0..n {
                    acc += self.l[i * n + j] as i128 * y[j] as i128;
                }
                acc
            })
            .collect()
    }

    pub fn big_matrix(&self) -> BigMatrix {
        let rows: Vec<Vec<i64>> = (0..self.n)
            .map(|i| self.l[i * self.n..(i + 1) * self.n].to_vec())
            .collect();
        BigMatrix::from_i64_rows(&rows).expect("validated at construction")
    }
}

/// `#{x mod q : 2Mx = 0 mod q}` with `M = 2L`, computed as the product of
/// `gcd(q, e_i)` over the invariant factors `e_i` of `2M = 4L`.
pub fn kernel_count(f: &QuadraticForm, q: u64) -> Result<BigInt> {
    if q == 0 || q > MODULUS_CAP {
        return Err(Error::InvalidArgument(format!(
            "modulus {q} out of range 1..={MODULUS_CAP}"
        )));
    }
    let qb = BigInt::from(q);
    let mut count = BigInt::one();
    for d in f.smith_invariants() {
        // invariant factors of 4L are twice those of 2L
        count *= qb.gcd(&(d * 2));
    }
    Ok(count)
}

/// Outcome of the search at one prime.
#[derive(Debug, Clone, Serialize)]
pub struct PrimeReport {
    pub p: u64,
    pub soluble: bool,
    /// Depth at which the decision was reached.
    pub level: u32,
    /// Depth the search was allowed.
    pub depth: u32,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, Serialize)]
pub enum Certificate {
    /// A zero mod `p^level` whose gradient valuation `v` satisfies
    /// `level >= 2v + 1`, so it lifts by Newton iteration.
    SmoothPoint {
        witness: Vec<i64>,
        grad_valuation: u32,
    },
    /// Five or more variables: an indefinite-rank argument applies and no
    /// search is necessary.
    HighDimension,
    /// No primitive zero exists mod `p^level`, hence none exists at all.
    EmptyLevel,
}

/// Local solubility summary over the reals and a set of primes.
#[derive(Debug, Clone, Serialize)]
pub struct SolubilityReport {
    pub real_soluble: bool,
    /// (positive, negative) inertia counts of `L`.
    pub signature: (usize, usize),
    pub primes: Vec<PrimeReport>,
    /// True when the real place and every checked prime admit zeros.
    pub unobstructed: bool,
}

/// Exact inertia counts of the real symmetric matrix `L` via integer
/// congruence diagonalization (Sylvester's law keeps the signs valid under
/// the non-unimodular scalings used here).
pub fn real_signature(f: &QuadraticForm) -> (usize, usize) {
    let n = f.n();
    let mut a = f.big_matrix();
    let mut pos = 0usize;
    let mut neg = 0usize;
    for t in 0..n {
        if a.get(t, t).is_zero() {
            let mut swapped = false;
            for i in t + 1..n {
                if !a.get(i, i).is_zero() {
                    for col in 0..n {
                        let x = a.get(t, col).clone();
                        let y = a.get(i, col).clone();
                        a.set(t, col, y);
                        a.set(i, col, x);
                    }
                    for row in 0..n {
                        let x = a.get(row, t).clone();
                        let y = a.get(row, i).clone();
                        a.set(row, t, y);
                        a.set(row, i, x);
                    }
                    swapped = true;
                    break;
                }
            }
            if !swapped {
                // all remaining diagonal entries vanish; fold in a column
                // with a nonzero off-diagonal coupling
                let mut j_found = None;
                for j in t + 1..n {
                    if !a.get(t, j).is_zero() {
                        j_found = Some(j);
                        break;
                    }
                }
                let j = j_found.expect("non-singular block has a nonzero row");
                for col in 0..n {
                    let v = a.get(t, col) + a.get(j, col);
                    a.set(t, col, v);
                }
                for row in 0..n {
                    let v = a.get(row, t) + a.get(row, j);
                    a.set(row, t, v);
                }
            }
        }
        let d = a.get(t, t).clone();
        if d.is_positive() {
            pos += 1;
        } else {
            neg += 1;
        }
        for i in t + 1..n {
            let c = a.get(i, t).clone();
            if c.is_zero() {
                continue;
            }
            for col in 0..n {
                let v = a.get(i, col) * &d - &c * a.get(t, col);
                a.set(i, col, v);
            }
            for row in 0..n {
                let v = a.get(row, i) * &d - &c * a.get(row, t);
                a.set(row, i, v);
            }
        }
    }
    (pos, neg)
}

/// Primes checked by default: every `p <= 20` plus the primes dividing
/// `2 det L`. For `p` outside this set and `n >= 3` a nondegenerate zero
/// exists automatically, so the set certifies forms of rank at least 3.
pub fn default_primes(f: &QuadraticForm) -> Vec<u64> {
    let mut primes: Vec<u64> = vec![2, 3, 5, 7, 11, 13, 17, 19];
    let doubled: BigInt = f.det() * 2;
    let mut d = doubled.abs();
    let mut p = BigInt::from(2);
    while &p * &p <= d {
        if (&d % &p).is_zero() {
            if let Some(pp) = p.to_u64() {
                if !primes.contains(&pp) {
                    primes.push(pp);
                }
            }
            while (&d % &p).is_zero() {
                d /= &p;
            }
        }
        p += 1;
    }
    if d > BigInt::one() {
        if let Some(pp) = d.to_u64() {
            if !primes.contains(&pp) {
                primes.push(pp);
            }
        }
    }
    primes.sort_unstable();
    primes
}

fn valuation_big(x: &BigInt, p: u64) -> u32 {
    let mut v = 0;
    let mut x = x.abs();
    let pb = BigInt::from(p);
    while !x.is_zero() && (&x % &pb).is_zero() {
        x /= &pb;
        v += 1;
    }
    v
}

fn valuation_i128(mut x: i128, p: u64) -> u32 {
    let mut v = 0;
    let p = p as i128;
    x = x.abs();
    while x > 0 && x % p == 0 {
        x /= p;
        v += 1;
    }
    v
}

/// Default search depth at `p`: `2 v_p(2 det) + 3`, enough that every
/// primitive zero mod `p^k` either certifies smoothly or cannot exist.
pub fn default_depth(f: &QuadraticForm, p: u64) -> u32 {
    2 * valuation_big(&(f.det() * 2), p) + 3
}

const LEVEL_NODE_CAP: usize = 2_000_000;
const LEVEL_EVAL_CAP: u64 = 200_000_000;

/// Decides whether `F = 0` has a nontrivial zero over the `p`-adics by a
/// level-by-level search with Newton-style smooth-point certificates.
///
/// Sound in both directions: a reported witness lifts, and an empty level
/// proves insolubility because a primitive zero would reduce onto it. If the
/// survivor set is still ambiguous at `depth`, the search reports
/// [`Error::Inconclusive`].
pub fn p_soluble(f: &QuadraticForm, p: u64, depth: u32) -> Result<PrimeReport> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!("{p} is not a prime")));
    }
    let n = f.n();
    if n >= 5 {
        return Ok(PrimeReport {
            p,
            soluble: true,
            level: 0,
            depth,
            certificate: Certificate::HighDimension,
        });
    }
    let depth = depth.max(1);
    // Level 1: full sweep of (Z/p)^n minus the origin.
    let level1_cost = (p as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if level1_cost > LEVEL_EVAL_CAP {
        return Err(Error::BudgetExceeded {
            required: level1_cost,
            budget: LEVEL_EVAL_CAP,
        });
    }
    let mut survivors: Vec<Vec<i64>> = Vec::new();
    let mut found: Option<(Vec<i64>, u32)> = None;
    let lo = vec![0i64; n];
    let hi = vec![p as i64 - 1; n];
    crate::numeric::visit_box(&lo, &hi, |x| {
        if found.is_some() || x.iter().all(|&c| c == 0) {
            return;
        }
        let val = f.evaluate_unchecked(x);
        if val.rem_euclid(p as i128) != 0 {
            return;
        }
        let v = gradient_valuation(f, x, p);
        if 1 >= 2 * v + 1 {
            found = Some((x.to_vec(), v));
        } else {
            survivors.push(x.to_vec());
        }
    });
    if let Some((witness, v)) = found {
        return Ok(PrimeReport {
            p,
            soluble: true,
            level: 1,
            depth,
            certificate: Certificate::SmoothPoint {
                witness,
                grad_valuation: v,
            },
        });
    }
    if survivors.is_empty() {
        return Ok(PrimeReport {
            p,
            soluble: false,
            level: 1,
            depth,
            certificate: Certificate::EmptyLevel,
        });
    }

    let mut pk: i128 = p as i128; // p^(level-1) while lifting to `level`
    for level in 2..=depth {
        let modulus = pk * p as i128;
        let mut next: Vec<Vec<i64>> = Vec::new();
        let branch = (p as u64).pow(n as u32);
        if (survivors.len() as u64).saturating_mul(branch) > LEVEL_EVAL_CAP {
            return Err(Error::Inconclusive { p, depth: level });
        }
        for base in &survivors {
            let mut lifted = vec![0i64; n];
            let mut certified: Option<(Vec<i64>, u32)> = None;
            crate::numeric::visit_box(&lo, &hi, |u| {
                if certified.is_some() {
                    return;
                }
                for i in 0..n {
                    lifted[i] = base[i] + pk as i64 * u[i];
                }
                let val = f.evaluate_unchecked(&lifted);
                if val.rem_euclid(modulus) != 0 {
                    return;
                }
                let v = gradient_valuation(f, &lifted, p);
                if level >= 2 * v + 1 {
                    certified = Some((lifted.clone(), v));
                } else {
                    next.push(lifted.clone());
                }
            });
            if let Some((witness, v)) = certified {
                return Ok(PrimeReport {
                    p,
                    soluble: true,
                    level,
                    depth,
                    certificate: Certificate::SmoothPoint {
                        witness,
                        grad_valuation: v,
                    },
                });
            }
            if next.len() > LEVEL_NODE_CAP {
                return Err(Error::Inconclusive { p, depth: level });
            }
        }
        if next.is_empty() {
            return Ok(PrimeReport {
                p,
                soluble: false,
                level,
                depth,
                certificate: Certificate::EmptyLevel,
            });
        }
        survivors = next;
        pk = modulus;
    }
    Err(Error::Inconclusive { p, depth })
}

fn gradient_valuation(f: &QuadraticForm, x: &[i64], p: u64) -> u32 {
    let g = f.gradient(x);
    let mut v = u32::MAX;
    for gi in g {
        if gi != 0 {
            v = v.min(valuation_i128(gi, p));
        }
    }
    debug_assert!(v != u32::MAX, "gradient of a primitive point vanishes");
    v
}

/// Runs [`p_soluble`] over `primes` (default set if `None`) and combines
/// with the real signature test.
pub fn local_solubility(
    f: &QuadraticForm,
    primes: Option<&[u64]>,
    depth: Option<u32>,
) -> Result<SolubilityReport> {
    let primes: Vec<u64> = match primes {
        Some(ps) => ps.to_vec(),
        None => default_primes(f),
    };
    let signature = real_signature(f);
    let real_soluble = signature.0 > 0 && signature.1 > 0;
    let mut reports = Vec::with_capacity(primes.len());
    for &p in &primes {
        let d = depth.unwrap_or_else(|| default_depth(f, p));
        reports.push(p_soluble(f, p, d)?);
    }
    let unobstructed = real_soluble && reports.iter().all(|r| r.soluble);
    Ok(SolubilityReport {
        real_soluble,
        signature,
        primes: reports,
        unobstructed,
    })
}

/// JSON report used by the CLI: `{n, det, smith, real_soluble, p_reports}`.
pub fn form_report(f: &QuadraticForm, sol: &SolubilityReport) -> serde_json::Value {
    serde_json::json!({
        "n": f.n(),
        "det": f.det().to_string(),
        "smith": f.smith_invariants().iter().map(|d| d.to_string()).collect::<Vec<_>>(),
        "real_soluble": sol.real_soluble,
        "p_reports": sol.primes.iter().map(|r| serde_json::json!({
            "p": r.p,
            "soluble": r.soluble,
            "level": r.level,
            "depth": r.depth,
        })).collect::<Vec<_>>(),
    })
}

#[allow(dead_code)]
fn is_prime_u64(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= x {
        if x % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn form(diag: &[i64]) -> QuadraticForm {
        QuadraticForm::diagonal(diag).unwrap()
    }

    #[test]
    fn evaluate_matches_hand_values() {
        let f = form(&[1, 1, -1]);
        assert_eq!(f.evaluate(&[1, 1, 1]).unwrap(), BigInt::from(1));
        assert_eq!(f.evaluate(&[3, 4, 5]).unwrap(), BigInt::from(0));
        // cross terms count twice
        let g = QuadraticForm::new(2, vec![2, 1, 1, 2]).unwrap();
        assert_eq!(g.evaluate(&[1, 1]).unwrap(), BigInt::from(6));
        assert_eq!(g.evaluate(&[1, -1]).unwrap(), BigInt::from(2));
    }

    #[test]
    fn evaluate_is_even() {
        let f = QuadraticForm::new(3, vec![1, 2, 0, 2, -3, 1, 0, 1, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x: Vec<i64> = (0..3).map(|_| rng.gen_range(-50..=50)).collect();
            let neg: Vec<i64> = x.iter().map(|&c| -c).collect();
            assert_eq!(f.evaluate(&x).unwrap(), f.evaluate(&neg).unwrap());
        }
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            QuadraticForm::new(2, vec![1, 2, 3, 4]),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            QuadraticForm::diagonal(&[1, 0]),
            Err(Error::SingularForm)
        ));
        assert!(matches!(
            QuadraticForm::diagonal(&[2_000_000]),
            Err(Error::EntryTooLarge { .. })
        ));
    }

    #[test]
    fn text_round_trip() {
        let f = QuadraticForm::new(2, vec![2, 1, 1, -2]).unwrap();
        let g = QuadraticForm::from_text(&f.to_text()).unwrap();
        assert_eq!(f, g);
        let h = QuadraticForm::from_text("3\n1 0 0\n0 1 0\n0 0 -1\n").unwrap();
        assert_eq!(h.diagonal_entries(), vec![1, 1, -1]);
    }

    #[test]
    fn smith_normal_form_hand_cases() {
        let m = BigMatrix::from_i64_rows(&[vec![2, 0], vec![0, 3]]).unwrap();
        let snf = smith_normal_form(&m);
        assert_eq!(snf.invariants(), vec![BigInt::from(1), BigInt::from(6)]);
        let m = BigMatrix::from_i64_rows(&[vec![2, 1], vec![1, 2]]).unwrap();
        let snf = smith_normal_form(&m);
        assert_eq!(snf.invariants(), vec![BigInt::from(1), BigInt::from(3)]);
    }

    #[test]
    fn smith_normal_form_random_matrices() {
        // S D T must reproduce M with unimodular S, T and a divisibility
        // chain, including singular inputs.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..1000 {
            let n = rng.gen_range(1..=4);
            let rows: Vec<Vec<i64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.gen_range(-9..=9)).collect())
                .collect();
            let m = BigMatrix::from_i64_rows(&rows).unwrap();
            let snf = smith_normal_form(&m);
            assert!(snf.s.is_unimodular(), "trial {trial}: S not unimodular");
            assert!(snf.t.is_unimodular(), "trial {trial}: T not unimodular");
            let prod = snf.s.mul(&snf.d).mul(&snf.t);
            assert_eq!(prod, m, "trial {trial}: S D T != M");
            let inv = snf.invariants();
            for w in inv.windows(2) {
                if w[0].is_zero() {
                    assert!(w[1].is_zero(), "trial {trial}: zero before nonzero");
                } else {
                    assert!(
                        (&w[1] % &w[0]).is_zero(),
                        "trial {trial}: chain broken: {} does not divide {}",
                        w[0],
                        w[1]
                    );
                }
            }
            for d in &inv {
                assert!(!d.is_negative());
            }
        }
    }

    #[test]
    fn smith_normal_form_is_deterministic() {
        let rows = vec![vec![4, 6, 2], vec![6, 0, -3], vec![2, -3, 9]];
        let m = BigMatrix::from_i64_rows(&rows).unwrap();
        let a = smith_normal_form(&m);
        let b = smith_normal_form(&m);
        assert_eq!(a.s, b.s);
        assert_eq!(a.t, b.t);
        assert_eq!(a.d, b.d);
    }

    /// Brute-force `#{x mod q : 4Lx = 0 mod q}`.
    fn kernel_brute(f: &QuadraticForm, q: u64) -> u64 {
        let n = f.n();
        let lo = vec![0i64; n];
        let hi = vec![q as i64 - 1; n];
        let mut count = 0u64;
        crate::numeric::visit_box(&lo, &hi, |x| {
            let g = f.gradient(x); // 2Lx
            if g.iter().all(|&gi| (2 * gi).rem_euclid(q as i128) == 0) {
                count += 1;
            }
        });
        count
    }

    #[test]
    fn kernel_count_hand_values() {
        let f = form(&[1]);
        assert_eq!(kernel_count(&f, 4).unwrap(), BigInt::from(4));
        assert_eq!(kernel_count(&f, 2).unwrap(), BigInt::from(2));
        let g = form(&[1, 1]);
        assert_eq!(kernel_count(&g, 3).unwrap(), BigInt::from(1));
    }

    #[test]
    fn kernel_count_matches_brute_force() {
        let forms = vec![
            form(&[1]),
            form(&[3]),
            form(&[1, 1]),
            form(&[2, -3]),
            QuadraticForm::new(2, vec![2, 1, 1, 2]).unwrap(),
            QuadraticForm::new(2, vec![4, 2, 2, 6]).unwrap(),
            form(&[1, 1, -1]),
            QuadraticForm::new(3, vec![2, 1, 0, 1, 2, 1, 0, 1, 2]).unwrap(),
            form(&[1, 2, 3, -4]),
        ];
        for f in &forms {
            let qs: Vec<u64> = match f.n() {
                1 | 2 => (1..=60).chain([64, 96, 128, 144, 200]).collect(),
                3 => (1..=40).collect(),
                _ => (1..=16).collect(),
            };
            for q in qs {
                let fast = kernel_count(f, q).unwrap();
                let brute = kernel_brute(f, q);
                assert_eq!(fast, BigInt::from(brute), "form n={} q={q}", f.n());
            }
        }
    }

    #[test]
    fn kernel_count_is_multiplicative_on_coprime_moduli() {
        let f = QuadraticForm::new(2, vec![2, 1, 1, -2]).unwrap();
        for (q1, q2) in [(3u64, 4u64), (5, 8), (9, 16), (7, 25)] {
            let a = kernel_count(&f, q1).unwrap();
            let b = kernel_count(&f, q2).unwrap();
            let ab = kernel_count(&f, q1 * q2).unwrap();
            assert_eq!(a * b, ab);
        }
    }

    #[test]
    fn signature_and_real_solubility() {
        assert_eq!(real_signature(&form(&[1, 1, -1])), (2, 1));
        assert_eq!(real_signature(&form(&[1, 1, 1])), (3, 0));
        assert_eq!(real_signature(&form(&[-2, -3])), (0, 2));
        // zero diagonal needs the folding step: x y form is indefinite
        let f = QuadraticForm::new(2, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(real_signature(&f), (1, 1));
    }

    #[test]
    fn solubility_definite_form_fails_at_two() {
        let f = form(&[1, 1, 1]);
        let r = p_soluble(&f, 2, 5).unwrap();
        assert!(!r.soluble);
        assert!(r.level <= 3, "emptiness shows up by level 3");
        assert!(matches!(r.certificate, Certificate::EmptyLevel));
        // ... but every odd prime is fine
        for p in [3, 5, 7, 11, 13] {
            let r = p_soluble(&f, p, 5).unwrap();
            assert!(r.soluble, "p = {p}");
        }
        let rep = local_solubility(&f, None, None).unwrap();
        assert!(!rep.real_soluble);
        assert!(!rep.unobstructed);
    }

    #[test]
    fn solubility_isotropic_forms() {
        let f = form(&[1, -1]);
        for p in [2, 3, 5, 7, 19] {
            let r = p_soluble(&f, p, 6).unwrap();
            assert!(r.soluble, "p = {p}");
            if let Certificate::SmoothPoint { witness, .. } = &r.certificate {
                let val = f.evaluate(witness).unwrap();
                let modulus = BigInt::from(p).pow(r.level);
                assert!((val % modulus).is_zero());
            } else {
                panic!("expected a smooth witness");
            }
        }
        let g = form(&[1, 1, 1, 1, -1]);
        let rep = local_solubility(&g, None, None).unwrap();
        assert!(rep.real_soluble);
        assert!(rep.unobstructed);
        // dimension 5 short-circuits
        assert!(rep
            .primes
            .iter()
            .all(|r| matches!(r.certificate, Certificate::HighDimension)));
        let h = form(&[1, 1, -1]);
        let rep = local_solubility(&h, None, None).unwrap();
        assert!(rep.unobstructed);
    }

    #[test]
    fn default_depth_tracks_determinant() {
        let f = form(&[1, 1, -1]);
        // 2 det = -2: v_2 = 1 so depth 5 at p = 2, 3 elsewhere
        assert_eq!(default_depth(&f, 2), 5);
        assert_eq!(default_depth(&f, 3), 3);
        let g = form(&[4, -8]);
        // det = -32, 2 det = -64 = -2^6: depth 15 at 2
        assert_eq!(default_depth(&g, 2), 15);
    }

    #[test]
    fn default_primes_include_det_divisors() {
        let f = form(&[23, -29]);
        let ps = default_primes(&f);
        assert!(ps.contains(&23));
        assert!(ps.contains(&29));
        assert!(ps.contains(&2));
        assert!(ps.contains(&19));
    }

    #[test]
    fn report_json_shape() {
        let f = form(&[1, -1]);
        let sol = local_solubility(&f, Some(&[2, 3]), None).unwrap();
        let j = form_report(&f, &sol);
        assert_eq!(j["n"], 2);
        assert_eq!(j["det"], "-1");
        assert_eq!(j["real_soluble"], true);
        assert_eq!(j["p_reports"].as_array().unwrap().len(), 2);
        assert_eq!(j["smith"].as_array().unwrap().len(), 2);
    }
}
