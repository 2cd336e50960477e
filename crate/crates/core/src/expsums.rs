//! Exponential sums and oscillatory integrals over quadric orbits: the
//! weighted sum S(alpha), complete Gauss sums with their cancellation
//! certificates, exponential integrals with Taylor splitting, Poisson
//! cross-checks, and the diagonal L^2 identity.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::budget::{Budget, GAUSS_FULL_ENUM_STEPS};
use crate::error::Error;
use crate::numeric::{composite_nodes, e, e_q, visit_box, KahanComplex, KahanSum, TWO_PI};
use crate::quadform::{kernel_count, QuadraticForm};
use crate::quadric_enum::box_bound;
use crate::quotient::{horocycle, Observable, QuotientPoint};
use crate::weights::{norm_1d, NormKind, ProductWeight, SplitKernel, Weight1d};
use crate::Result;

/// Lattice cutoff at scale `P`: either the sharp box indicator `|x| < P` or
/// a smooth product weight evaluated at `x/P`.
#[derive(Clone, Debug)]
pub enum Cutoff {
    Sharp,
    Smooth(ProductWeight),
}

impl Cutoff {
    /// Weight of the already-scaled point `x/P`.
    pub fn value(&self, scaled: &[f64]) -> f64 {
        match self {
            Cutoff::Sharp => {
                if scaled.iter().all(|t| t.abs() < 1.0) {
                    1.0
                } else {
                    0.0
                }
            }
            Cutoff::Smooth(w) => w.value(scaled),
        }
    }

    /// Weight of the integer point `x` at scale `1/inv_p`, allocation-free.
    pub(crate) fn value_at(&self, x: &[i64], inv_p: f64) -> f64 {
        match self {
            Cutoff::Sharp => {
                if x.iter().all(|&c| (c as f64 * inv_p).abs() < 1.0) {
                    1.0
                } else {
                    0.0
                }
            }
            Cutoff::Smooth(w) => {
                let mut prod = 1.0;
                for (i, &c) in x.iter().enumerate() {
                    prod *= w.factor(i).value(c as f64 * inv_p);
                    if prod == 0.0 {
                        return 0.0;
                    }
                }
                prod
            }
        }
    }

    /// Sup norm of the cutoff.
    pub fn sup(&self) -> Result<f64> {
        match self {
            Cutoff::Sharp => Ok(1.0),
            Cutoff::Smooth(w) => {
                let mut prod = 1.0;
                for i in 0..w.n() {
                    prod *= norm_1d(w.factor(i), NormKind::LInf, 0)?;
                }
                Ok(prod)
            }
        }
    }

    pub(crate) fn dimension_ok(&self, n: usize) -> Result<()> {
        match self {
            Cutoff::Sharp => Ok(()),
            Cutoff::Smooth(w) if w.n() == n => Ok(()),
            Cutoff::Smooth(w) => Err(Error::DimensionMismatch {
                expected: n,
                got: w.n(),
            }),
        }
    }
}

/// Base point of the product space: one quotient point per coordinate.
#[derive(Clone, Debug)]
pub struct ProductPoint {
    components: Vec<QuotientPoint>,
}

impl ProductPoint {
    pub fn new(components: Vec<QuotientPoint>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "a product point needs at least one component".into(),
            ));
        }
        Ok(ProductPoint { components })
    }

    /// The same point in every coordinate.
    pub fn uniform(p: QuotientPoint, n: usize) -> Result<Self> {
        ProductPoint::new(vec![p; n])
    }

    pub fn identity(n: usize) -> Result<Self> {
        ProductPoint::uniform(QuotientPoint::identity(), n)
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &QuotientPoint {
        &self.components[i]
    }

    /// Coordinate-wise horocycle flow: component `i` moves by time `t[i]`.
    pub fn flow(&self, t: &[f64]) -> Result<ProductPoint> {
        if t.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: t.len(),
            });
        }
        let components = self
            .components
            .iter()
            .zip(t)
            .map(|(p, &ti)| horocycle(p, ti))
            .collect::<Result<Vec<_>>>()?;
        ProductPoint::new(components)
    }
}

/// Observable on the product space that factors through the coordinates.
#[derive(Clone, Debug)]
pub struct ProductObservable {
    factors: Vec<Observable>,
}

impl ProductObservable {
    pub fn new(factors: Vec<Observable>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument(
                "a product observable needs at least one factor".into(),
            ));
        }
        Ok(ProductObservable { factors })
    }

    /// The same factor in every coordinate.
    pub fn uniform(f: Observable, n: usize) -> Result<Self> {
        ProductObservable::new(vec![f; n])
    }

    /// The constant function 1, the unweighted-count control.
    pub fn constant_one(n: usize) -> Self {
        ProductObservable {
            factors: vec![Observable::constant(1.0); n],
        }
    }

    pub fn n(&self) -> usize {
        self.factors.len()
    }

    pub fn factor(&self, i: usize) -> &Observable {
        &self.factors[i]
    }

    /// `f(u(t) x0) = prod_i f_i(x0_i u0(t_i))`.
    pub fn orbit_value(&self, base: &ProductPoint, t: &[f64]) -> Result<f64> {
        if base.n() != self.n() || t.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: t.len(),
            });
        }
        let mut prod = 1.0;
        for i in 0..self.n() {
            prod *= self.factors[i].eval(&horocycle(base.component(i), t[i])?);
        }
        Ok(prod)
    }

    pub fn sup_bound(&self) -> f64 {
        self.factors.iter().map(|f| f.sup_bound()).product()
    }

    pub fn label(&self) -> String {
        self.factors
            .iter()
            .map(|f| f.label())
            .collect::<Vec<_>>()
            .join("*")
    }
}

/// Tabulated observable values along integer horocycle times, one row per
/// coordinate.  Turns the inner orbit evaluation of a box sum into a lookup.
pub struct OrbitTable {
    bound: i64,
    values: Vec<Vec<f64>>,
}

impl OrbitTable {
    pub fn build(obs: &ProductObservable, base: &ProductPoint, bound: i64) -> Result<Self> {
        if base.n() != obs.n() {
            return Err(Error::DimensionMismatch {
                expected: obs.n(),
                got: base.n(),
            });
        }
        if bound < 0 {
            return Err(Error::InvalidArgument("orbit table bound < 0".into()));
        }
        let side = 2 * bound as usize + 1;
        let mut values = Vec::with_capacity(obs.n());
        for i in 0..obs.n() {
            let f = obs.factor(i);
            let row = if let Some(c) = f.constant_value() {
                vec![c; side]
            } else {
                let mut row = Vec::with_capacity(side);
                for t in -bound..=bound {
                    row.push(f.eval(&horocycle(base.component(i), t as f64)?));
                }
                row
            };
            values.push(row);
        }
        Ok(OrbitTable { bound, values })
    }

    pub fn bound(&self) -> i64 {
        self.bound
    }

    /// `prod_i f_i(x0_i u0(x_i))` by table lookup.
    pub fn value(&self, x: &[i64]) -> f64 {
        let mut prod = 1.0;
        for (row, &c) in self.values.iter().zip(x) {
            prod *= row[(c + self.bound) as usize];
        }
        prod
    }
}

/// Result of a weighted exponential sum, with enough context to replay it.
#[derive(Clone, Debug)]
pub struct ExpSumValue {
    pub value: Complex64,
    pub terms: u64,
    pub alpha: f64,
    pub p: f64,
    pub form: String,
    pub observable: String,
}

impl ExpSumValue {
    /// Triangle-inequality ceiling `terms * sup(w) * sup(f)`.
    pub fn triangle_bound(&self, w_sup: f64, f_sup: f64) -> f64 {
        self.terms as f64 * w_sup * f_sup
    }
}

pub(crate) fn box_terms(b: i64, n: usize) -> Option<u64> {
    let side = (2 * b + 1) as u64;
    let mut total = 1u64;
    for _ in 0..n {
        total = total.checked_mul(side)?;
    }
    Some(total)
}

/// Core box sum `sum_x weight(x) e(alpha F(x))` over `|x_i| <= b`,
/// parallelized over the first coordinate with a fixed merge order so the
/// result does not depend on the thread count.
pub(crate) fn box_phase_sum<W>(
    form: &QuadraticForm,
    b: i64,
    alpha: f64,
    weight: W,
) -> (Complex64, u64)
where
    W: Fn(&[i64]) -> f64 + Sync,
{
    let n = form.n();
    let alpha = alpha.rem_euclid(1.0);
    let firsts: Vec<i64> = (-b..=b).collect();
    let chunks: Vec<Complex64> = firsts
        .par_iter()
        .map(|&x0| {
            let mut acc = KahanComplex::new();
            let mut x = vec![0i64; n];
            x[0] = x0;
            let lo = vec![-b; n - 1];
            let hi = vec![b; n - 1];
            visit_box(&lo, &hi, |rest| {
                x[1..].copy_from_slice(rest);
                let wv = weight(&x);
                if wv != 0.0 {
                    let fv = form.evaluate_unchecked(&x) as f64;
                    acc.add(e(alpha * fv) * wv);
                }
            });
            acc.value()
        })
        .collect();
    let mut total = KahanComplex::new();
    for c in chunks {
        total.add(c);
    }
    let terms = box_terms(b, n).unwrap_or(u64::MAX);
    (total.value(), terms)
}

/// `S(alpha) = sum_x w(x/P) f(u(x) x0) e(alpha F(x))`, an exact finite sum
/// over the integer box `|x| < P`.
pub fn weighted_exp_sum(
    form: &QuadraticForm,
    w: &Cutoff,
    obs: &ProductObservable,
    base: &ProductPoint,
    p: f64,
    alpha: f64,
    budget: &Budget,
) -> Result<ExpSumValue> {
    let n = form.n();
    if obs.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: obs.n(),
        });
    }
    if base.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: base.n(),
        });
    }
    w.dimension_ok(n)?;
    let b = box_bound(p)?;
    let terms = box_terms(b, n).ok_or(Error::BudgetExceeded {
        required: u64::MAX,
        budget: budget.limit(),
    })?;
    budget.check(terms)?;
    let table = OrbitTable::build(obs, base, b)?;
    let inv_p = 1.0 / p;
    let (value, terms) = box_phase_sum(form, b, alpha, |x| w.value_at(x, inv_p) * table.value(x));
    Ok(ExpSumValue {
        value,
        terms,
        alpha,
        p,
        form: form.to_text(),
        observable: obs.label(),
    })
}

/// Recomputes `S(alpha)` through the window partition: the bump weight
/// `w(x/P)` is replaced by `prod_i sum_k W_{delta,k}(x_i/N - k)` with
/// `delta = N/P`, which reproduces it exactly.  Agreement with
/// [`weighted_exp_sum`] validates the splitting identity.
pub fn split_exp_sum(
    form: &QuadraticForm,
    obs: &ProductObservable,
    base: &ProductPoint,
    p: f64,
    pieces: i64,
    alpha: f64,
    budget: &Budget,
) -> Result<ExpSumValue> {
    if p < 2.0 || p.fract() != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "splitting needs an integer scale P >= 2, got {p}"
        )));
    }
    if pieces < 1 || pieces as f64 > p {
        return Err(Error::InvalidArgument(format!(
            "piece length N = {pieces} must satisfy 1 <= N <= P"
        )));
    }
    let n = form.n();
    if obs.n() != n || base.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: obs.n(),
        });
    }
    let delta = pieces as f64 / p;
    let kernel = SplitKernel::new(delta)?;
    let b = box_bound(p)?;
    let terms = box_terms(b, n).ok_or(Error::BudgetExceeded {
        required: u64::MAX,
        budget: budget.limit(),
    })?;
    budget.check(terms)?;
    let partition: Vec<f64> = (-b..=b)
        .map(|t| kernel.partition_value(pieces as f64, t as f64))
        .collect();
    let table = OrbitTable::build(obs, base, b)?;
    let (value, terms) = box_phase_sum(form, b, alpha, |x| {
        let mut prod = 1.0;
        for &c in x {
            prod *= partition[(c + b) as usize];
        }
        prod * table.value(x)
    });
    Ok(ExpSumValue {
        value,
        terms,
        alpha,
        p,
        form: form.to_text(),
        observable: obs.label(),
    })
}

fn is_diagonal(form: &QuadraticForm) -> bool {
    let n = form.n();
    (0..n).all(|i| (0..n).all(|j| i == j || form.entry(i, j) == 0))
}

fn e_q_wide(num: i128, q: u64) -> Complex64 {
    e_q(num.rem_euclid(q as i128) as i64, q)
}

/// Largest modulus this module accepts; keeps every phase inside `i128`
/// given the entry cap on forms.
pub const GAUSS_MAX_MODULUS: u64 = 1_000_000_000;

/// Complete Gauss sum `S_q(a, v) = sum_{x mod q} e_q(a(F(x) + shift.x) + v.x)`
/// with `gcd(a, q) = 1`; `shift` carries the splitting vector `2 N L y0`.
///
/// Diagonal forms factor into one-dimensional sums of cost `n q`; everything
/// else is enumerated directly, which restricts `q^n` to the full-enumeration
/// budget.
pub fn gauss_sum(
    form: &QuadraticForm,
    q: u64,
    a: u64,
    v: &[i64],
    shift: &[i64],
    budget: &Budget,
) -> Result<Complex64> {
    let n = form.n();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    if shift.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: shift.len(),
        });
    }
    if q == 0 || q > GAUSS_MAX_MODULUS {
        return Err(Error::InvalidArgument(format!(
            "modulus q = {q} outside 1..={GAUSS_MAX_MODULUS}"
        )));
    }
    let a = a % q;
    if num_integer::gcd(a, q) != 1 {
        return Err(Error::InvalidArgument(format!(
            "a = {a} shares a factor with q = {q}"
        )));
    }
    if is_diagonal(form) {
        budget.check_product(n as u64, q)?;
        Ok(gauss_sum_diagonal(form, q, a, v, shift))
    } else {
        let total = q.saturating_pow(n as u32);
        if total > GAUSS_FULL_ENUM_STEPS {
            return Err(Error::BudgetExceeded {
                required: total,
                budget: GAUSS_FULL_ENUM_STEPS,
            });
        }
        budget.check(total)?;
        Ok(gauss_sum_enumerated(form, q, a, v, shift))
    }
}

fn gauss_sum_diagonal(form: &QuadraticForm, q: u64, a: u64, v: &[i64], shift: &[i64]) -> Complex64 {
    let ai = a as i128;
    let mut prod = Complex64::new(1.0, 0.0);
    for i in 0..form.n() {
        let l = form.entry(i, i) as i128;
        let s = shift[i] as i128;
        let vi = v[i] as i128;
        let mut acc = KahanComplex::new();
        for t in 0..q as i128 {
            acc.add(e_q_wide(ai * (l * t * t + s * t) + vi * t, q));
        }
        prod *= acc.value();
    }
    prod
}

fn gauss_sum_enumerated(
    form: &QuadraticForm,
    q: u64,
    a: u64,
    v: &[i64],
    shift: &[i64],
) -> Complex64 {
    let n = form.n();
    let lo = vec![0i64; n];
    let hi = vec![q as i64 - 1; n];
    let ai = a as i128;
    let mut acc = KahanComplex::new();
    visit_box(&lo, &hi, |x| {
        let mut linear: i128 = 0;
        let mut twist: i128 = 0;
        for i in 0..n {
            linear += v[i] as i128 * x[i] as i128;
            twist += shift[i] as i128 * x[i] as i128;
        }
        let phase = ai * (form.evaluate_unchecked(x) + twist) + linear;
        acc.add(e_q_wide(phase, q));
    });
    acc.value()
}

/// One sampled Gauss sum checked against the kernel-count ceiling.
#[derive(Clone, Debug, Serialize)]
pub struct GaussRow {
    pub q: u64,
    pub a: u64,
    pub v_hash: u64,
    pub abs: f64,
    /// `|S_q| / q^{n/2}`, the square-root-cancellation ratio.
    pub ratio: f64,
    /// `sqrt(q^n * kernel_count)`, the exact ceiling on `|S_q|`.
    pub bound: f64,
}

/// Outcome of a cancellation survey over sampled `(q, a, v, shift)`.
#[derive(Clone, Debug, Serialize)]
pub struct CancellationReport {
    pub samples: usize,
    pub max_ratio: f64,
    /// Largest relative excess `(|S_q|^2 - bound^2) / max(1, bound^2)` seen;
    /// negative when every sum sits strictly below its ceiling.
    pub worst_slack: f64,
    pub all_within_slack: bool,
    pub rows: Vec<GaussRow>,
}

/// Relative arithmetic slack allowed on the exact inequality
/// `|S_q|^2 <= q^n kernel_count`.
pub const CANCELLATION_SLACK: f64 = 1e-9;

fn fnv1a(values: &[i64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for x in values {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn nth_root_floor(x: u64, n: u32) -> u64 {
    if n <= 1 {
        return x;
    }
    let mut r = (x as f64).powf(1.0 / n as f64).floor() as u64 + 2;
    while r > 1 && r.saturating_pow(n) > x {
        r -= 1;
    }
    r.max(1)
}

/// Samples Gauss sums of `form` with `q <= q_max` and checks the exact
/// cancellation inequality `|S_q(a, v)|^2 <= q^n kernel_count(F, q)` on every
/// draw.  Non-diagonal forms keep `q^n` within direct-enumeration reach.
pub fn cancellation_certificate(
    form: &QuadraticForm,
    q_max: u64,
    samples: usize,
    seed: u64,
    budget: &Budget,
) -> Result<CancellationReport> {
    if q_max == 0 {
        return Err(Error::InvalidArgument("q_max must be positive".into()));
    }
    let n = form.n();
    let q_cap = if is_diagonal(form) {
        q_max
    } else {
        q_max.min(nth_root_floor(1_000_000, n as u32))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(samples);
    let mut max_ratio: f64 = 0.0;
    let mut worst_slack = f64::NEG_INFINITY;
    let mut all_within = true;
    for _ in 0..samples {
        let q = rng.gen_range(1..=q_cap);
        let a = loop {
            let a = rng.gen_range(1..=q);
            if num_integer::gcd(a, q) == 1 {
                break a;
            }
        };
        let v: Vec<i64> = (0..n).map(|_| rng.gen_range(0..q as i64 + 1)).collect();
        let shift: Vec<i64> = (0..n).map(|_| rng.gen_range(0..q as i64 + 1)).collect();
        let s = gauss_sum(form, q, a, &v, &shift, budget)?;
        let sq = s.norm_sqr();
        let kc = kernel_count(form, q)?.to_f64().unwrap_or(f64::INFINITY);
        let bound_sq = (q as f64).powi(n as i32) * kc;
        let slack = (sq - bound_sq) / bound_sq.max(1.0);
        worst_slack = worst_slack.max(slack);
        if slack > CANCELLATION_SLACK {
            all_within = false;
        }
        let ratio = (sq / (q as f64).powi(n as i32)).sqrt();
        max_ratio = max_ratio.max(ratio);
        let mut hashed = v.clone();
        hashed.extend_from_slice(&shift);
        rows.push(GaussRow {
            q,
            a,
            v_hash: fnv1a(&hashed),
            abs: sq.sqrt(),
            ratio,
            bound: bound_sq.sqrt(),
        });
    }
    Ok(CancellationReport {
        samples,
        max_ratio,
        worst_slack,
        all_within_slack: all_within,
        rows,
    })
}

fn real_form_value(l: &[Vec<f64>], t: &[f64]) -> f64 {
    let n = t.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += l[i][j] * t[i] * t[j];
        }
    }
    acc
}

fn form_rows(form: &QuadraticForm) -> Vec<Vec<f64>> {
    let n = form.n();
    (0..n)
        .map(|i| (0..n).map(|j| form.entry(i, j) as f64).collect())
        .collect()
}

/// `I(z, v) = int W_{delta,y0}(t/N) f(u(t) x1) e(z F(t) - v.t) dt` by
/// oscillation-aware product quadrature; the window confines the integral to
/// `|t_i| < 1.5 N`.
#[allow(clippy::too_many_arguments)]
pub fn exp_integral(
    form: &QuadraticForm,
    kernel: &SplitKernel,
    y0: &[i64],
    obs: &ProductObservable,
    x1: &ProductPoint,
    scale: f64,
    z: f64,
    v: &[f64],
    budget: &Budget,
) -> Result<Complex64> {
    let n = form.n();
    if y0.len() != n || obs.n() != n || x1.n() != n || v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y0.len(),
        });
    }
    if n > 3 {
        return Err(Error::InvalidArgument(
            "direct quadrature of the exponential integral supports n <= 3".into(),
        ));
    }
    if !scale.is_finite() || scale < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "window scale N = {scale} must be >= 1"
        )));
    }
    let half = 1.5 * scale;
    let rows = form_rows(form);
    // Coordinate grids: at node t the stored factor is
    // glweight * W_{delta,y0_i}(t/N) * f_i(u0(t) x1_i) * e(-v_i t).
    let mut grids: Vec<Vec<(f64, Complex64)>> = Vec::with_capacity(n);
    let mut total: u64 = 1;
    for i in 0..n {
        let row_sum: f64 = rows[i].iter().map(|c| c.abs()).sum();
        let osc_rad = TWO_PI * (z.abs() * 2.0 * row_sum * half + v[i].abs());
        let width = (scale / 8.0).min(6.0 / (1.0 + osc_rad));
        let nodes = composite_nodes(-half, half, width);
        total = total
            .checked_mul(nodes.len() as u64)
            .ok_or(Error::BudgetExceeded {
                required: u64::MAX,
                budget: budget.limit(),
            })?;
        let mut grid = Vec::with_capacity(nodes.len());
        for (t, gw) in nodes {
            let window = kernel.window(y0[i], t / scale);
            let factor = if window == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                let fv = obs.factor(i).eval(&horocycle(x1.component(i), t)?);
                e(-v[i] * t) * (gw * window * fv)
            };
            grid.push((t, factor));
        }
        grids.push(grid);
    }
    budget.check(total)?;
    let mut acc = KahanComplex::new();
    match n {
        1 => {
            let l00 = rows[0][0];
            for &(t, f) in &grids[0] {
                if f != Complex64::new(0.0, 0.0) {
                    acc.add(f * e(z * l00 * t * t));
                }
            }
        }
        2 => {
            for &(t0, f0) in &grids[0] {
                if f0 == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for &(t1, f1) in &grids[1] {
                    if f1 == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let fv =
                        rows[0][0] * t0 * t0 + 2.0 * rows[0][1] * t0 * t1 + rows[1][1] * t1 * t1;
                    acc.add(f0 * f1 * e(z * fv));
                }
            }
        }
        _ => {
            let mut t = [0.0f64; 3];
            for &(t0, f0) in &grids[0] {
                if f0 == Complex64::new(0.0, 0.0) {
                    continue;
                }
                t[0] = t0;
                for &(t1, f1) in &grids[1] {
                    if f1 == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    t[1] = t1;
                    let partial = f0 * f1;
                    for &(t2, f2) in &grids[2] {
                        if f2 == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        t[2] = t2;
                        acc.add(partial * f2 * e(z * real_form_value(&rows, &t)));
                    }
                }
            }
        }
    }
    Ok(acc.value())
}

/// Total-degree ceiling for Taylor splitting.
pub const TAYLOR_DEGREE_CAP: usize = 40;

type Poly = BTreeMap<Vec<u8>, Complex64>;

fn poly_total(exp: &[u8]) -> usize {
    exp.iter().map(|&e| e as usize).sum()
}

fn poly_mul(a: &Poly, b: &Poly, cap: usize) -> Poly {
    let mut out = Poly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            if poly_total(ea) + poly_total(eb) > cap {
                continue;
            }
            let exp: Vec<u8> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(exp).or_insert(Complex64::new(0.0, 0.0)) += ca * cb;
        }
    }
    out
}

/// Truncated multivariate Taylor expansion of `e(F(y))`.
///
/// Substituting `y = z^{1/2} t` turns it into the expansion of `e(z F(t))`,
/// which is how the oscillatory factor of an exponential integral is split
/// from the slowly varying one.
#[derive(Clone, Debug)]
pub struct TaylorSeries {
    n: usize,
    degree: usize,
    coeffs: Poly,
}

impl TaylorSeries {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of stored monomials.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coefficient(&self, beta: &[u8]) -> Complex64 {
        self.coeffs
            .get(beta)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], Complex64)> {
        self.coeffs.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    /// Direct evaluation `sum_beta c_beta y^beta`.
    pub fn eval(&self, y: &[f64]) -> Complex64 {
        let mut acc = KahanComplex::new();
        for (exp, c) in &self.coeffs {
            let mut mono = 1.0;
            for (&e, &yi) in exp.iter().zip(y) {
                mono *= yi.powi(e as i32);
            }
            acc.add(*c * mono);
        }
        acc.value()
    }

    /// `sum_beta c_beta (z^{1/2} t)^beta`, the split form of `e(z F(t))`;
    /// `z^{1/2}` is the principal branch, so negative `z` is fine.
    pub fn eval_scaled(&self, z: f64, t: &[f64]) -> Complex64 {
        let root = Complex64::from(z).sqrt();
        let mut acc = KahanComplex::new();
        for (exp, c) in &self.coeffs {
            let mut mono = 1.0;
            for (&e, &ti) in exp.iter().zip(t) {
                mono *= ti.powi(e as i32);
            }
            acc.add(*c * root.powu(poly_total(exp) as u32) * mono);
        }
        acc.value()
    }
}

/// Taylor coefficients of `e(F(y))` up to total degree `k / eps`, computed by
/// exponentiating the polynomial `2 pi i F`.  The `(z, scale)` pair is the
/// splitting regime the caller is in; it must satisfy `|z| scale^2 <= 1` for
/// the substituted series to stay inside the window support.
pub fn taylor_split(
    form: &QuadraticForm,
    z: f64,
    scale: f64,
    k: usize,
    eps: f64,
) -> Result<TaylorSeries> {
    if k == 0 || !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need k >= 1 and eps in (0, 1], got k = {k}, eps = {eps}"
        )));
    }
    let degree = (k as f64 / eps).ceil() as usize;
    if degree > TAYLOR_DEGREE_CAP {
        return Err(Error::DegreeOverflow {
            degree,
            cap: TAYLOR_DEGREE_CAP,
        });
    }
    if z.abs().sqrt() * scale > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "outside the splitting regime: |z|^(1/2) N = {} > 1",
            z.abs().sqrt() * scale
        )));
    }
    let n = form.n();
    let mut quad = Poly::new();
    for i in 0..n {
        for j in i..n {
            let c = if i == j {
                form.entry(i, i)
            } else {
                2 * form.entry(i, j)
            };
            if c != 0 {
                let mut exp = vec![0u8; n];
                exp[i] += 1;
                exp[j] += 1;
                quad.insert(exp, Complex64::new(0.0, TWO_PI * c as f64));
            }
        }
    }
    let one = Complex64::new(1.0, 0.0);
    let mut coeffs = Poly::new();
    coeffs.insert(vec![0u8; n], one);
    let mut term = coeffs.clone();
    let mut m = 1;
    while 2 * m <= degree {
        term = poly_mul(&term, &quad, degree);
        for c in term.values_mut() {
            *c /= m as f64;
        }
        if term.is_empty() {
            break;
        }
        for (exp, c) in &term {
            *coeffs
                .entry(exp.clone())
                .or_insert(Complex64::new(0.0, 0.0)) += *c;
        }
        m += 1;
    }
    Ok(TaylorSeries { n, degree, coeffs })
}

/// `I(z, v)` assembled from a Taylor split: per-coordinate moments of the
/// window against the slow factors, recombined with the series coefficients.
/// In the scaled variable `u = t/N` this reads
/// `N^n sum_beta c_beta (z^{1/2} N)^{|beta|} prod_i M_i[beta_i]`.
#[allow(clippy::too_many_arguments)]
pub fn exp_integral_taylor(
    kernel: &SplitKernel,
    y0: &[i64],
    obs: &ProductObservable,
    x1: &ProductPoint,
    scale: f64,
    z: f64,
    v: &[f64],
    series: &TaylorSeries,
    budget: &Budget,
) -> Result<Complex64> {
    let n = series.n();
    if y0.len() != n || obs.n() != n || x1.n() != n || v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y0.len(),
        });
    }
    if !scale.is_finite() || scale < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "window scale N = {scale} must be >= 1"
        )));
    }
    let degree = series.degree();
    let mut moments: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for i in 0..n {
        let osc_rad = TWO_PI * v[i].abs() * scale;
        let width = (0.125f64).min(6.0 / (1.0 + osc_rad));
        let nodes = composite_nodes(-1.5, 1.5, width);
        budget.check_product(nodes.len() as u64, (degree + 1) as u64)?;
        let mut m = vec![Complex64::new(0.0, 0.0); degree + 1];
        let mut acc: Vec<KahanComplex> = vec![KahanComplex::new(); degree + 1];
        for (u, gw) in nodes {
            let window = kernel.window(y0[i], u);
            if window == 0.0 {
                continue;
            }
            let fv = obs.factor(i).eval(&horocycle(x1.component(i), scale * u)?);
            let base = e(-v[i] * scale * u) * (gw * window * fv);
            let mut upow = 1.0;
            for slot in acc.iter_mut() {
                slot.add(base * upow);
                upow *= u;
            }
        }
        for (slot, out) in acc.iter().zip(m.iter_mut()) {
            *out = slot.value();
        }
        moments.push(m);
    }
    let root_scale = Complex64::from(z).sqrt() * scale;
    let mut acc = KahanComplex::new();
    for (beta, c) in series.iter() {
        let mut term = c * root_scale.powu(poly_total(beta) as u32);
        for (i, &b) in beta.iter().enumerate() {
            term *= moments[i][b as usize];
        }
        acc.add(term);
    }
    Ok(acc.value() * scale.powi(n as i32))
}

/// Poisson-summation residual
/// `|sum_m g(qm + r) - q^{-1} sum_v ghat(v/q) e_q(rv)|` for `g(x) = w(x/s)`.
///
/// The left side is a finite exact sum; the right side truncates its tail
/// with the integration-by-parts bound at four derivatives.
pub fn poisson_check(w: &Weight1d, s: f64, q: u64, r: i64, budget: &Budget) -> Result<f64> {
    if !s.is_finite() || s <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "scale s = {s} must be positive"
        )));
    }
    if q == 0 || q > GAUSS_MAX_MODULUS {
        return Err(Error::InvalidArgument(format!(
            "modulus q = {q} outside 1..={GAUSS_MAX_MODULUS}"
        )));
    }
    let (lo, hi) = w.support();
    let (lo, hi) = (s * lo, s * hi);
    // Left side: g vanishes outside (lo, hi), so m ranges over one interval.
    let mut lhs = KahanSum::new();
    let qf = q as f64;
    let m_lo = ((lo - r as f64) / qf).floor() as i64;
    let m_hi = ((hi - r as f64) / qf).ceil() as i64;
    for m in m_lo..=m_hi {
        let x = (m * q as i64 + r) as f64;
        lhs.add(w.eval(x / s, 0));
    }
    let lhs = lhs.value();
    // Tail cutoff from |ghat(xi)| <= ||g^(6)||_1 / (2 pi xi)^6.
    let g6 = norm_1d(w, NormKind::L1, 6)? / s.powi(5);
    let tail_target = 1e-12;
    let v_max = if g6 == 0.0 {
        0
    } else {
        // 2/q * g6 * (q/2pi)^6 * 1/(5 V^5) <= target
        let c = 2.0 / qf * g6 * (qf / TWO_PI).powi(6) / 5.0;
        (c / tail_target).powf(0.2).ceil() as u64 + 1
    };
    if v_max > 100_000 {
        let bound = 2.0 / qf * g6 * (qf / TWO_PI).powi(6) / (5.0 * (1e5f64).powi(5));
        return Err(Error::TailNotSummable { bound });
    }
    let transform = |xi: f64| -> Complex64 {
        let width = (0.125 * s).min(0.5 / (1.0 + xi.abs()));
        let nodes = composite_nodes(lo, hi, width);
        let mut acc = KahanComplex::new();
        for (x, gw) in nodes {
            acc.add(e(-xi * x) * (gw * w.eval(x / s, 0)));
        }
        acc.value()
    };
    // Per-frequency panel count grows linearly with v; keep the whole scan
    // inside the budget before starting.
    let panels_top = (hi - lo) * (1.0 + v_max as f64 / qf) / 0.5 + 16.0;
    budget.check_product(v_max + 1, 32 * panels_top as u64)?;
    let rr = r.rem_euclid(q as i64);
    let mut rhs = KahanComplex::new();
    rhs.add(transform(0.0));
    for v in 1..=v_max {
        let term = transform(v as f64 / qf) * e_q_wide(rr as i128 * v as i128, q);
        // g real: the -v term is the conjugate of the +v term
        rhs.add(term + term.conj());
    }
    let rhs = rhs.value() / qf;
    Ok((Complex64::new(lhs, 0.0) - rhs).norm())
}

/// Both sides of the diagonal L^2 identity
/// `int_0^1 |S(z)|^2 dz = sum_{F(x) = F(x')} w w' f f'`.
///
/// The left side groups the box by the integer value `F(x)` (the integral
/// kills every nonzero frequency); the right side is an independent double
/// loop over pairs.
pub fn l2_identity(
    form: &QuadraticForm,
    w: &Cutoff,
    obs: &ProductObservable,
    base: &ProductPoint,
    p: f64,
    budget: &Budget,
) -> Result<(f64, f64)> {
    let n = form.n();
    if n > 3 {
        return Err(Error::InvalidArgument(
            "the pair loop of the L^2 identity supports n <= 3".into(),
        ));
    }
    if obs.n() != n || base.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: obs.n(),
        });
    }
    w.dimension_ok(n)?;
    let b = box_bound(p)?;
    let terms = box_terms(b, n).ok_or(Error::BudgetExceeded {
        required: u64::MAX,
        budget: budget.limit(),
    })?;
    budget.check_product(terms, terms)?;
    let table = OrbitTable::build(obs, base, b)?;
    let inv_p = 1.0 / p;
    let lo = vec![-b; n];
    let hi = vec![b; n];
    let mut entries: Vec<(i128, f64)> = Vec::new();
    visit_box(&lo, &hi, |x| {
        let wv = w.value_at(x, inv_p) * table.value(x);
        if wv != 0.0 {
            entries.push((form.evaluate_unchecked(x), wv));
        }
    });
    // Grouped side: sort by value, then sum (sum of weights)^2 per run.
    let mut sorted = entries.clone();
    sorted.sort_by_key(|&(v, _)| v);
    let mut lhs = KahanSum::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let mut run = KahanSum::new();
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            run.add(sorted[j].1);
            j += 1;
        }
        let a = run.value();
        lhs.add(a * a);
        i = j;
    }
    // Pair side: explicit double loop, the independent oracle.
    let mut rhs = KahanSum::new();
    for &(va, wa) in &entries {
        for &(vb, wb) in &entries {
            if va == vb {
                rhs.add(wa * wb);
            }
        }
    }
    Ok((lhs.value(), rhs.value()))
}
