//! Farey dissection of the unit circle and the integral representation
//! of the weighted count.
//!
//! The count of weighted zeros equals the integral of the exponential sum
//! `S` over one period, and the dissection splits that period into arcs
//! around rationals `a/q` with `q <= Q`.  Each arc further splits into a
//! near-rational core (`m1`, where `|alpha - a/q| < q^{-2} P^{-2+eps0}`)
//! and the rest (`m2`).  This module builds the dissection, locates points
//! in it, measures the core region, and checks the van der Corput and
//! lattice-point inequalities used to bound the arc contributions.

use num_complex::Complex64;
use num_integer::Integer;
use rayon::prelude::*;
use serde::Serialize;

use crate::budget::Budget;
use crate::error::Error;
use crate::expsums::{
    box_phase_sum, box_terms, Cutoff, OrbitTable, ProductObservable, ProductPoint,
};
use crate::numeric::{circle_dist, e, frac_dist, integrate, visit_box, KahanComplex, KahanSum};
use crate::quadform::QuadraticForm;
use crate::quadric_enum::{box_bound, enumerate_zeros};
use crate::Result;

/// Sharpness of the near-rational cutoff in the default arc split.
pub const DEFAULT_EPS0: f64 = 1.0 / 240.0;

/// Largest supported arc parameter.
pub const ARC_Q_CAP: u64 = 1_000_000;

/// Arc parameter matched to the box scale, `Q = ceil(P^(1/20))`.
pub fn default_arc_parameter(p: f64) -> Result<u64> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "scale must be at least 1, got {p}"
        )));
    }
    Ok((p.powf(0.05).ceil() as u64).max(1))
}

/// One Dirichlet arc: the points within `1/(q q_max)` of `a/q` on the circle.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Arc {
    pub a: u64,
    pub q: u64,
    pub center: f64,
    pub radius: f64,
}

/// The full dissection at parameter `q_max`: one arc per reduced fraction
/// `a/q` with `0 <= a < q <= q_max`, sorted by center.
#[derive(Clone, Debug, Serialize)]
pub struct ArcDecomposition {
    q_max: u64,
    arcs: Vec<Arc>,
}

impl ArcDecomposition {
    pub fn q_max(&self) -> u64 {
        self.q_max
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    /// Exact cover check.  Consecutive Farey fractions `a/q < a'/q'` satisfy
    /// `a'q - aq' = 1` and `q + q' > q_max`, which is equivalent (in integers,
    /// so no rounding is involved) to the two open arcs overlapping.  Checking
    /// every consecutive pair plus the wrap-around proves the arcs cover the
    /// whole circle.
    pub fn covers_circle(&self) -> bool {
        if self.arcs.is_empty() {
            return false;
        }
        if self.arcs.len() == 1 {
            let arc = self.arcs[0];
            return arc.q == 1 && arc.radius >= 0.5;
        }
        let overlap = |a: u64, q: u64, a2: u64, q2: u64| -> bool {
            let det = u128::from(a2) * u128::from(q) == u128::from(a) * u128::from(q2) + 1;
            det && q + q2 > self.q_max
        };
        let consecutive = self
            .arcs
            .windows(2)
            .all(|w| overlap(w[0].a, w[0].q, w[1].a, w[1].q));
        let last = self.arcs[self.arcs.len() - 1];
        consecutive && overlap(last.a, last.q, 1, 1)
    }

    /// Scans `samples` equally spaced points and reports whether each lies
    /// strictly inside some arc.  Linear in `len() * samples`; meant as an
    /// independent diagnostic for small `q_max`.
    pub fn gap_scan(&self, samples: u64) -> bool {
        (0..samples).all(|k| {
            let x = k as f64 / samples as f64;
            self.arcs
                .iter()
                .any(|arc| circle_dist(x, arc.center) < arc.radius)
        })
    }
}

/// Builds the Farey dissection at parameter `q_max`.
///
/// Fractions come from the mediant recurrence, so the construction costs
/// one step per arc and yields them already reduced and sorted.  The exact
/// cover check runs before returning.
pub fn farey_cover(q_max: u64, budget: &Budget) -> Result<ArcDecomposition> {
    if q_max == 0 || q_max > ARC_Q_CAP {
        return Err(Error::InvalidArgument(format!(
            "arc parameter must be in [1, {ARC_Q_CAP}], got {q_max}"
        )));
    }
    budget.check(q_max)?;
    let count: u64 = {
        let phi = totients(q_max);
        phi.iter().skip(1).sum()
    };
    budget.check(count)?;

    let qf = q_max as f64;
    let arc_of = |a: u64, q: u64| Arc {
        a,
        q,
        center: a as f64 / q as f64,
        radius: 1.0 / (q as f64 * qf),
    };
    let mut arcs = Vec::with_capacity(count as usize);
    arcs.push(arc_of(0, 1));
    let (mut a0, mut b0, mut a1, mut b1) = (0u64, 1u64, 1u64, q_max);
    while a1 != b1 {
        arcs.push(arc_of(a1, b1));
        let k = (b0 + q_max) / b1;
        let (a2, b2) = (k * a1 - a0, k * b1 - b0);
        a0 = a1;
        b0 = b1;
        a1 = a2;
        b1 = b2;
    }
    let cover = ArcDecomposition { q_max, arcs };
    debug_assert_eq!(cover.arcs.len() as u64, count);
    if !cover.covers_circle() {
        return Err(Error::InvalidArgument(
            "arc construction left a gap on the circle".into(),
        ));
    }
    Ok(cover)
}

/// Finds the reduced fraction `a/q` with `q <= q_max` whose Dirichlet arc
/// contains `alpha`.
///
/// Scans denominators in increasing order, so the result is the arc of the
/// smallest denominator; ties cannot happen because distinct fractions with
/// the same `q` are at least `1/q > 2/(q q_max)` apart for `q < q_max`.
/// Only the nearest numerator needs testing at each `q`: the arc radius
/// `1/(q q_max)` never exceeds half the spacing of the grid `a/q`.
pub fn locate(alpha: f64, q_max: u64) -> Result<(u64, u64)> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    if q_max == 0 || q_max > ARC_Q_CAP {
        return Err(Error::InvalidArgument(format!(
            "arc parameter must be in [1, {ARC_Q_CAP}], got {q_max}"
        )));
    }
    let big_q = q_max as f64;
    // Best near-miss among reduced fractions, in case alpha sits exactly on
    // an arc boundary after rounding.
    let mut fallback: Option<(f64, u64, u64)> = None;
    for q in 1..=q_max {
        let qf = q as f64;
        let nearest = (alpha * qf).round() as u64;
        let a = nearest % q;
        let dist = circle_dist(alpha, nearest as f64 / qf);
        let radius = 1.0 / (qf * big_q);
        if a.gcd(&q) != 1 {
            // The reduced form of this fraction appeared at a smaller q with
            // a strictly larger radius, so it was already tested.
            continue;
        }
        if dist < radius {
            return Ok((a, q));
        }
        let slack = dist - radius;
        if fallback.map_or(true, |(s, _, _)| slack < s) {
            fallback = Some((slack, a, q));
        }
    }
    let (_, a, q) = fallback
        .ok_or_else(|| Error::InvalidArgument(format!("no arc found for alpha = {alpha}")))?;
    Ok((a, q))
}

/// Which side of the near-rational cutoff a point falls on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    M1,
    M2,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::M1 => "m1",
            Region::M2 => "m2",
        }
    }
}

/// Half-width of the `m1` core around a fraction with denominator `q`.
pub fn m1_threshold(q: u64, p: f64, eps0: f64) -> f64 {
    p.powf(eps0 - 2.0) / (q as f64 * q as f64)
}

/// Classifies `alpha` within its arc: `M1` when it lies within
/// `q^{-2} P^{-2+eps0}` of the arc center, `M2` otherwise.
pub fn region_of(alpha: f64, q_max: u64, p: f64, eps0: f64) -> Result<Region> {
    if !p.is_finite() || p < 2.0 {
        return Err(Error::InvalidArgument(format!(
            "scale must be at least 2, got {p}"
        )));
    }
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff exponent must lie in (0, 1), got {eps0}"
        )));
    }
    let (a, q) = locate(alpha, q_max)?;
    let dist = circle_dist(alpha, a as f64 / q as f64);
    if dist < m1_threshold(q, p, eps0) {
        Ok(Region::M1)
    } else {
        Ok(Region::M2)
    }
}

/// Euler phi for every modulus up to `limit`, by sieve.
fn totients(limit: u64) -> Vec<u64> {
    let n = limit as usize;
    let mut phi: Vec<u64> = (0..=n as u64).collect();
    for p in 2..=n {
        if phi[p] == p as u64 {
            let mut m = p;
            while m <= n {
                phi[m] -= phi[m] / p as u64;
                m += p;
            }
        }
    }
    phi
}

/// Total length of the `m1` cores summed over all arcs, ignoring overlap:
/// `sum_q 2 phi(q) q^{-2} P^{-2+eps0}`.
///
/// With the default parameter `q_max = ceil(P^(1/20))` and any `P >= 2` the
/// cores are pairwise disjoint (their half-widths are below half the gap
/// `1/q_max^2` between fractions), so this equals the measure exactly.
pub fn m1_closed_form(q_max: u64, p: f64, eps0: f64) -> Result<f64> {
    if q_max == 0 || q_max > ARC_Q_CAP {
        return Err(Error::InvalidArgument(format!(
            "arc parameter must be in [1, {ARC_Q_CAP}], got {q_max}"
        )));
    }
    if !p.is_finite() || p < 2.0 {
        return Err(Error::InvalidArgument(format!(
            "scale must be at least 2, got {p}"
        )));
    }
    let phi = totients(q_max);
    let scale = p.powf(eps0 - 2.0);
    let mut sum = KahanSum::default();
    for q in 1..=q_max {
        sum.add(2.0 * phi[q as usize] as f64 * scale / (q as f64 * q as f64));
    }
    Ok(sum.value())
}

/// Lebesgue measure of the `m1` region, computed as a union of intervals
/// with overlaps merged.
pub fn meas_m1(q_max: u64, p: f64, eps0: f64, budget: &Budget) -> Result<f64> {
    if q_max == 0 || q_max > ARC_Q_CAP {
        return Err(Error::InvalidArgument(format!(
            "arc parameter must be in [1, {ARC_Q_CAP}], got {q_max}"
        )));
    }
    if !p.is_finite() || p < 2.0 {
        return Err(Error::InvalidArgument(format!(
            "scale must be at least 2, got {p}"
        )));
    }
    budget.check_product(q_max, q_max)?;
    let scale = p.powf(eps0 - 2.0);
    // Each entry carries its exact length alongside the endpoints, so a
    // run without overlaps never pays the (c + t) - (c - t) cancellation
    // when t is many orders below c.
    let mut intervals: Vec<(f64, f64, f64)> = Vec::new();
    for q in 1..=q_max {
        let t = scale / (q as f64 * q as f64);
        for a in 0..q {
            if a.gcd(&q) != 1 {
                continue;
            }
            let c = a as f64 / q as f64;
            let (lo, hi) = (c - t, c + t);
            // Fold an interval on the circle into [0, 1].
            if lo < 0.0 {
                intervals.push((0.0, hi, hi));
                intervals.push((lo + 1.0, 1.0, -lo));
            } else if hi > 1.0 {
                intervals.push((lo, 1.0, 1.0 - lo));
                intervals.push((0.0, hi - 1.0, hi - 1.0));
            } else {
                intervals.push((lo, hi, 2.0 * t));
            }
        }
    }
    intervals.sort_by(|x, y| x.partial_cmp(y).expect("finite endpoints"));
    let mut total = KahanSum::default();
    let mut current: Option<(f64, f64, f64, bool)> = None;
    let flush = |run: &Option<(f64, f64, f64, bool)>, total: &mut KahanSum| {
        if let Some((clo, chi, width, merged)) = *run {
            // Overlapping runs must use the endpoint span (summed widths
            // would double-count); isolated intervals keep their length.
            total.add(if merged { chi - clo } else { width });
        }
    };
    for (lo, hi, width) in intervals {
        match current {
            Some((clo, chi, w0, _)) if lo <= chi => {
                current = Some((clo, chi.max(hi), w0, true));
            }
            Some(_) => {
                flush(&current, &mut total);
                current = Some((lo, hi, width, false));
            }
            None => current = Some((lo, hi, width, false)),
        }
    }
    flush(&current, &mut total);
    Ok(total.value())
}

/// Amplitude spectrum of the weighted exponential sum: the value
/// at any phase is `sum_m a_m e(m alpha)` where `a_m` adds `w f` over the
/// integer points with form value `m`.  Returned sorted by `m`.
pub fn value_spectrum(
    form: &QuadraticForm,
    w: &Cutoff,
    obs: &ProductObservable,
    base: &ProductPoint,
    p: f64,
    budget: &Budget,
) -> Result<Vec<(i64, f64)>> {
    let n = form.n();
    w.dimension_ok(n)?;
    if obs.n() != n || base.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: obs.n().max(base.n()),
        });
    }
    let b = box_bound(p)?;
    let terms = box_terms(b, n).ok_or(Error::BudgetExceeded {
        required: u64::MAX,
        budget: budget.limit(),
    })?;
    budget.check(terms)?;
    let table = OrbitTable::build(obs, base, b)?;
    let inv_p = 1.0 / p;

    let mut entries: Vec<(i64, f64)> = Vec::new();
    let lo = vec![-b; n];
    let hi = vec![b; n];
    let mut overflow = false;
    visit_box(&lo, &hi, |x| {
        let wf = w.value_at(x, inv_p) * table.value(x);
        if wf != 0.0 {
            let value = form.evaluate_unchecked(x);
            match i64::try_from(value) {
                Ok(m) => entries.push((m, wf)),
                Err(_) => overflow = true,
            }
        }
    });
    if overflow {
        return Err(Error::InvalidArgument(
            "form value exceeds the 64-bit range supported by the spectrum".into(),
        ));
    }
    entries.sort_unstable_by_key(|&(m, _)| m);
    let mut spectrum: Vec<(i64, f64)> = Vec::new();
    let mut i = 0;
    while i < entries.len() {
        let m = entries[i].0;
        let mut amp = KahanSum::default();
        while i < entries.len() && entries[i].0 == m {
            amp.add(entries[i].1);
            i += 1;
        }
        let a = amp.value();
        if a != 0.0 {
            spectrum.push((m, a));
        }
    }
    Ok(spectrum)
}

/// Evaluates a spectrum at a phase: `sum_m a_m e(m alpha)`.
pub fn spectrum_eval(spectrum: &[(i64, f64)], alpha: f64) -> Complex64 {
    let mut sum = KahanComplex::default();
    for &(m, amp) in spectrum {
        sum.add(e(m as f64 * alpha) * amp);
    }
    sum.value()
}

/// Checks the integral representation of the weighted count two ways.
///
/// Returns `(direct, via)`: `direct` adds `w f` over the enumerated zero
/// set, `via` is the zero-frequency amplitude of the spectrum, which equals
/// the integral of `S` over one period because every other frequency
/// integrates to zero.  The two paths share no code: the first enumerates
/// solutions of `F = 0`, the second groups the full box by form value.
pub fn delta_identity_check(
    form: &QuadraticForm,
    w: &Cutoff,
    obs: &ProductObservable,
    base: &ProductPoint,
    p: f64,
    budget: &Budget,
) -> Result<(f64, f64)> {
    let n = form.n();
    if n > 3 || p > 32.0 {
        return Err(Error::InvalidArgument(format!(
            "identity check is sized for n <= 3 and P <= 32, got n = {n}, P = {p}"
        )));
    }
    w.dimension_ok(n)?;
    if obs.n() != n || base.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: obs.n().max(base.n()),
        });
    }
    let zeros = enumerate_zeros(form, p, budget)?;
    let table = OrbitTable::build(obs, base, zeros.bound())?;
    let inv_p = 1.0 / p;
    let mut direct = KahanSum::default();
    for x in zeros.iter() {
        direct.add(w.value_at(x, inv_p) * table.value(x));
    }
    let spectrum = value_spectrum(form, w, obs, base, p, budget)?;
    let via = spectrum
        .binary_search_by_key(&0, |&(m, _)| m)
        .map(|i| spectrum[i].1)
        .unwrap_or(0.0);
    Ok((direct.value(), via))
}

/// One difference vector of the van der Corput inequality.
#[derive(Clone, Debug)]
pub struct VdcRow {
    /// The shift `d = h1 - h2`.
    pub shift: Vec<i64>,
    /// Number of pairs `(h1, h2)` in `[0, H)^n` with this difference.
    pub count: u64,
    /// The correlation `sum_y g(y + d) conj(g(y))`.
    pub sum: Complex64,
}

/// Everything the van der Corput step produces on one instance.
#[derive(Clone, Debug)]
pub struct VdcReport {
    /// The plain weighted sum `S(alpha)`.
    pub s: Complex64,
    /// The shifted double sum `sum_x sum_h g(x + h)`, which must equal
    /// `H^n S` exactly.
    pub rearranged: Complex64,
    pub rearrangement_rel: f64,
    /// `|H^n S|^2` versus `|B| sum_x |inner(x)|^2`.
    pub cs_lhs: f64,
    pub cs_rhs: f64,
    pub cs_holds: bool,
    /// Number of points of the enlarged box `B`.
    pub box_size: u64,
    /// Relative gap between `sum_d count(d) sum(d)` and `sum_x |inner(x)|^2`.
    pub diff_rel: f64,
    pub rows: Vec<VdcRow>,
}

/// Runs the van der Corput differencing step on a weighted sum and checks
/// each identity numerically.
///
/// Averaging `S` over `H^n` shifts, Cauchy-Schwarz over the enlarged box,
/// and regrouping by difference vector turn `|S|` into correlations with
/// linear phases; every step here is an identity or an inequality, and the
/// report records both sides.
pub fn vdc_difference(
    form: &QuadraticForm,
    w: &Cutoff,
    obs: &ProductObservable,
    base: &ProductPoint,
    p: f64,
    alpha: f64,
    h: i64,
    budget: &Budget,
) -> Result<VdcReport> {
    let n = form.n();
    w.dimension_ok(n)?;
    if obs.n() != n || base.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: obs.n().max(base.n()),
        });
    }
    if !p.is_finite() || p < 2.0 || p.fract() != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "differencing needs an integer scale P >= 2, got {p}"
        )));
    }
    if h < 1 || (h as f64) > p / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "shift length must satisfy 1 <= H <= P/2, got {h}"
        )));
    }
    let b = box_bound(p)?;
    let hu = h as u64;
    let side = (2 * b + h - 1) as u64 + 1;
    let pow = |base: u64, exp: usize| -> Result<u64> {
        base.checked_pow(exp as u32).ok_or(Error::BudgetExceeded {
            required: u64::MAX,
            budget: budget.limit(),
        })
    };
    let box_size = pow(side, n)?;
    let h_terms = pow(hu, n)?;
    let plain_terms = pow(2 * b as u64 + 1, n)?;
    let row_count = pow(2 * hu - 1, n)?;
    budget.check_product(box_size, h_terms)?;
    budget.check_product(row_count, plain_terms)?;
    budget.check(plain_terms)?;

    let table = OrbitTable::build(obs, base, b)?;
    let inv_p = 1.0 / p;
    let g = |y: &[i64]| -> Complex64 {
        let wf = w.value_at(y, inv_p) * table.value(y);
        if wf == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            e(alpha * form.evaluate_unchecked(y) as f64) * wf
        }
    };

    let (s, _) = box_phase_sum(form, b, alpha, |y| w.value_at(y, inv_p) * table.value(y));

    // Shifted double sum over the enlarged box and its per-x inner sums.
    let lo_x = vec![-b - h + 1; n];
    let hi_x = vec![b; n];
    let lo_h = vec![0i64; n];
    let hi_h = vec![h - 1; n];
    let mut rearranged = KahanComplex::default();
    let mut inner_sq = KahanSum::default();
    let mut y = vec![0i64; n];
    visit_box(&lo_x, &hi_x, |x| {
        let mut inner = KahanComplex::default();
        visit_box(&lo_h, &hi_h, |hh| {
            for i in 0..n {
                y[i] = x[i] + hh[i];
            }
            if y.iter().all(|&t| t.abs() <= b) {
                inner.add(g(&y));
            }
        });
        let v = inner.value();
        rearranged.add(v);
        inner_sq.add(v.norm_sqr());
    });
    let rearranged = rearranged.value();
    let inner_sq = inner_sq.value();

    let h_pow = h_terms as f64;
    let scaled_s = s * h_pow;
    let denom = scaled_s.norm().max(rearranged.norm()).max(1e-300);
    let rearrangement_rel = (scaled_s - rearranged).norm() / denom;

    let cs_lhs = rearranged.norm_sqr();
    let cs_rhs = box_size as f64 * inner_sq;
    let cs_holds = cs_lhs <= cs_rhs * (1.0 + 1e-12) + 1e-300;

    // Regroup the square by difference vector.
    let lo_d = vec![-(h - 1); n];
    let hi_d = vec![h - 1; n];
    let lo_y = vec![-b; n];
    let hi_y = vec![b; n];
    let mut rows = Vec::with_capacity(row_count as usize);
    let mut diff_total = KahanComplex::default();
    let mut shifted = vec![0i64; n];
    visit_box(&lo_d, &hi_d, |d| {
        let count: u64 = d.iter().map(|&di| hu - di.unsigned_abs()).product();
        let mut t = KahanComplex::default();
        visit_box(&lo_y, &hi_y, |yy| {
            let gy = g(yy);
            if gy == Complex64::new(0.0, 0.0) {
                return;
            }
            for i in 0..n {
                shifted[i] = yy[i] + d[i];
            }
            if shifted.iter().all(|&t| t.abs() <= b) {
                t.add(g(&shifted) * gy.conj());
            }
        });
        let sum = t.value();
        diff_total.add(sum * count as f64);
        rows.push(VdcRow {
            shift: d.to_vec(),
            count,
            sum,
        });
    });
    let diff_rel = (diff_total.value() - Complex64::from(inner_sq)).norm() / inner_sq.max(1e-300);

    Ok(VdcReport {
        s,
        rearranged,
        rearrangement_rel,
        cs_lhs,
        cs_rhs,
        cs_holds,
        box_size,
        diff_rel,
        rows,
    })
}

/// Both sides of the lattice-point inequality.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LatticeSum {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Evaluates the lattice-point sum that controls a single differenced
/// correlation and the closed-form bound it must stay below.
///
/// The left side sums, over `0 <= y <= P` coordinate-wise, the product of
/// `(1 + H ||z (L y)_i||)^{-delta} + C`; the right side is
/// `P^n (1/P + |z| + H^{-delta} + (H |z| P)^{-delta} + C)^n` up to the
/// constant tracked by `ratio`.  At `H = 0` the bound is infinite and the
/// ratio is reported as zero.
pub fn lattice_sum_check(
    form: &QuadraticForm,
    p: u64,
    h: f64,
    z: f64,
    delta: f64,
    c: f64,
    budget: &Budget,
) -> Result<LatticeSum> {
    let n = form.n();
    if p == 0 {
        return Err(Error::InvalidArgument("box size must be positive".into()));
    }
    if !z.is_finite() || !h.is_finite() || h < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need finite z and H >= 0, got z = {z}, H = {h}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "decay exponent must lie in (0, 1], got {delta}"
        )));
    }
    if !(c >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "additive constant must be nonnegative, got {c}"
        )));
    }
    let points = (p + 1).checked_pow(n as u32).ok_or(Error::BudgetExceeded {
        required: u64::MAX,
        budget: budget.limit(),
    })?;
    budget.check_product(points, n as u64)?;

    let lo = vec![0i64; n];
    let hi = vec![p as i64; n];
    let mut lhs = KahanSum::default();
    visit_box(&lo, &hi, |y| {
        let ly = form.l_times(y);
        let mut term = 1.0;
        for &v in &ly {
            term *= (1.0 + h * frac_dist(z * v as f64)).powf(-delta) + c;
        }
        lhs.add(term);
    });
    let lhs = lhs.value();

    let pf = p as f64;
    let factor = 1.0 / pf + z.abs() + h.powf(-delta) + (h * z.abs() * pf).powf(-delta) + c;
    let rhs = pf.powi(n as i32) * factor.powi(n as i32);
    let ratio = if rhs.is_finite() && rhs > 0.0 {
        lhs / rhs
    } else {
        0.0
    };
    Ok(LatticeSum { lhs, rhs, ratio })
}

/// Masses of `|S|` over the two regions, plus the measure of the core.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ArcMasses {
    pub m1_mass: f64,
    pub m2_mass: f64,
    pub m1_measure: f64,
    pub segments: usize,
}

/// Integrates `|S(alpha)|` over one period, split by region.
///
/// The period is cut at every arc endpoint and every `m1` boundary, so the
/// located arc and the region are constant on each open segment; each
/// segment is then integrated by fixed-order panels no wider than
/// `resolution`.  The sum `m1_mass + m2_mass` dominates the absolute value
/// of the weighted count by the triangle inequality.
pub fn arc_integral(
    form: &QuadraticForm,
    w: &Cutoff,
    obs: &ProductObservable,
    base: &ProductPoint,
    p: f64,
    q_max: u64,
    eps0: f64,
    resolution: f64,
    budget: &Budget,
) -> Result<ArcMasses> {
    let n = form.n();
    if n > 3 || p > 32.0 {
        return Err(Error::InvalidArgument(format!(
            "arc integration is sized for n <= 3 and P <= 32, got n = {n}, P = {p}"
        )));
    }
    if !p.is_finite() || p < 2.0 {
        return Err(Error::InvalidArgument(format!(
            "scale must be at least 2, got {p}"
        )));
    }
    if !(resolution > 1e-6 && resolution <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "panel width must lie in (1e-6, 0.5], got {resolution}"
        )));
    }
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff exponent must lie in (0, 1), got {eps0}"
        )));
    }

    let spectrum = value_spectrum(form, w, obs, base, p, budget)?;
    let cover = farey_cover(q_max, budget)?;

    let mut cuts: Vec<f64> = vec![0.0, 1.0];
    for arc in cover.arcs() {
        let t = m1_threshold(arc.q, p, eps0);
        for offset in [-arc.radius, -t, t, arc.radius] {
            let x = (arc.center + offset).rem_euclid(1.0);
            if x > 0.0 && x < 1.0 {
                cuts.push(x);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite cuts"));
    cuts.dedup();

    let segments: Vec<(f64, f64)> = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect();
    let panels: u64 = segments
        .iter()
        .map(|&(a, b)| ((b - a) / resolution).ceil() as u64 + 1)
        .sum();
    budget.check_product(panels * 32, spectrum.len().max(1) as u64)?;

    let masses: Result<Vec<(Region, f64)>> = segments
        .par_iter()
        .map(|&(a, b)| {
            let region = region_of(0.5 * (a + b), q_max, p, eps0)?;
            let mass = integrate(a, b, resolution, |x| spectrum_eval(&spectrum, x).norm());
            Ok((region, mass))
        })
        .collect();
    let masses = masses?;

    let mut m1_mass = KahanSum::default();
    let mut m2_mass = KahanSum::default();
    for (region, mass) in &masses {
        match region {
            Region::M1 => m1_mass.add(*mass),
            Region::M2 => m2_mass.add(*mass),
        }
    }
    let m1_measure = meas_m1(q_max, p, eps0, budget)?;
    Ok(ArcMasses {
        m1_mass: m1_mass.value(),
        m2_mass: m2_mass.value(),
        m1_measure,
        segments: segments.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quotient::{Observable, QuotientPoint};
    use crate::weights::{ProductWeight, Weight1d};

    fn budget() -> Budget {
        Budget::default()
    }

    fn smooth_cutoff(n: usize) -> Cutoff {
        Cutoff::Smooth(ProductWeight::uniform(Weight1d::Bump, n).unwrap())
    }

    fn bump_obs(n: usize) -> ProductObservable {
        let f = Observable::bump(Complex64::new(0.0, 1.8), 0.6).unwrap();
        ProductObservable::uniform(f, n).unwrap()
    }

    fn generic_point(n: usize) -> ProductPoint {
        // Integer horocycle flow fixes the identity coset, so tests that
        // need a nonconstant orbit start from a point with irrational-like
        // height: the orbit then walks the reduced abscissa densely.
        let p = QuotientPoint::from_z(Complex64::new(0.25, 1.85)).unwrap();
        ProductPoint::uniform(p, n).unwrap()
    }

    fn ones(n: usize) -> (ProductObservable, ProductPoint) {
        (
            ProductObservable::constant_one(n),
            ProductPoint::identity(n).unwrap(),
        )
    }

    #[test]
    fn farey_hand_cover_q3() {
        let cover = farey_cover(3, &budget()).unwrap();
        let fracs: Vec<(u64, u64)> = cover.arcs().iter().map(|a| (a.a, a.q)).collect();
        assert_eq!(fracs, vec![(0, 1), (1, 3), (1, 2), (2, 3)]);
        let radii: Vec<f64> = cover.arcs().iter().map(|a| a.radius).collect();
        let expect = [1.0 / 3.0, 1.0 / 9.0, 1.0 / 6.0, 1.0 / 9.0];
        for (r, e) in radii.iter().zip(expect) {
            assert!((r - e).abs() < 1e-15);
        }
        assert!(cover.covers_circle());
        assert!(cover.gap_scan(4 * 9));
    }

    #[test]
    fn farey_single_arc_at_q1() {
        let cover = farey_cover(1, &budget()).unwrap();
        assert_eq!(cover.len(), 1);
        assert_eq!((cover.arcs()[0].a, cover.arcs()[0].q), (0, 1));
        assert!((cover.arcs()[0].radius - 1.0).abs() < 1e-15);
        assert!(cover.covers_circle());
        assert!(cover.gap_scan(16));
    }

    #[test]
    fn farey_count_is_totient_sum() {
        // |F_Q| = sum of phi(q): 1, 2, 4, 6, 10, ...
        for (q, expect) in [(1u64, 1usize), (2, 2), (3, 4), (4, 6), (5, 10), (20, 128)] {
            let cover = farey_cover(q, &budget()).unwrap();
            assert_eq!(cover.len(), expect, "Q = {q}");
            assert!(cover.covers_circle());
            assert!(cover.gap_scan(4 * q * q));
        }
    }

    #[test]
    fn farey_respects_budget() {
        let err = farey_cover(10_000, &Budget::new(100)).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn locate_hand_values() {
        assert_eq!(locate(0.40, 3).unwrap(), (1, 2));
        assert_eq!(locate(1.0 / 3.0, 3).unwrap(), (1, 3));
        assert_eq!(locate(0.001, 10).unwrap(), (0, 1));
        assert_eq!(locate(0.0, 7).unwrap(), (0, 1));
        assert_eq!(locate(0.5, 3).unwrap(), (1, 2));
        assert!(locate(1.0, 3).is_err());
        assert!(locate(-0.1, 3).is_err());
    }

    #[test]
    fn locate_agrees_with_cover_membership() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for q_max in [1u64, 2, 3, 7, 20, 50] {
            let cover = farey_cover(q_max, &budget()).unwrap();
            for _ in 0..400 {
                let alpha: f64 = rng.gen();
                let (a, q) = locate(alpha, q_max).unwrap();
                assert!(q <= q_max && a < q.max(1));
                assert_eq!(a.gcd(&q), 1);
                // The located fraction is one of the cover's arcs and alpha
                // lies inside it, or sits on a boundary within rounding.
                let arc = cover
                    .arcs()
                    .iter()
                    .find(|arc| arc.a == a && arc.q == q)
                    .expect("located fraction is in the cover");
                let dist = circle_dist(alpha, arc.center);
                assert!(dist < arc.radius + 1e-12, "alpha = {alpha}, Q = {q_max}");
            }
        }
    }

    #[test]
    fn locate_picks_smallest_denominator() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let alpha: f64 = rng.gen();
            let (a, q) = locate(alpha, 30).unwrap();
            for q2 in 1..q {
                let nearest = (alpha * q2 as f64).round();
                let dist = circle_dist(alpha, nearest / q2 as f64);
                assert!(
                    dist >= 1.0 / (q2 as f64 * 30.0) - 1e-15,
                    "a smaller denominator {q2} already captures {alpha}, got ({a}, {q})"
                );
            }
        }
    }

    #[test]
    fn region_hand_values() {
        // P = 100: threshold at q = 1 is 100^(-2 + 1/240) ~ 1.019e-4.
        let r = region_of(1e-5, 3, 100.0, DEFAULT_EPS0).unwrap();
        assert_eq!(r, Region::M1);
        let r = region_of(0.4, 3, 100.0, DEFAULT_EPS0).unwrap();
        assert_eq!(r, Region::M2);
        // Exactly rational points are always in the core.
        let r = region_of(1.0 / 3.0, 3, 100.0, DEFAULT_EPS0).unwrap();
        assert_eq!(r, Region::M1);
        let r = region_of(0.5, 3, 100.0, DEFAULT_EPS0).unwrap();
        assert_eq!(r, Region::M1);
        // Just past the q = 1 threshold.
        let t = m1_threshold(1, 100.0, DEFAULT_EPS0);
        assert!((t - 1.0194e-4).abs() < 1e-7);
        assert_eq!(
            region_of(t * 1.01, 3, 100.0, DEFAULT_EPS0).unwrap(),
            Region::M2
        );
        assert_eq!(
            region_of(t * 0.99, 3, 100.0, DEFAULT_EPS0).unwrap(),
            Region::M1
        );
    }

    #[test]
    fn default_parameter_tracks_scale() {
        assert_eq!(default_arc_parameter(1.0).unwrap(), 1);
        assert_eq!(default_arc_parameter(100.0).unwrap(), 2);
        assert_eq!(default_arc_parameter(1e6).unwrap(), 2);
        assert_eq!(default_arc_parameter(1e9).unwrap(), 3);
        assert!(default_arc_parameter(0.5).is_err());
    }

    #[test]
    fn totient_sieve_matches_direct_count() {
        let phi = totients(50);
        for q in 1u64..=50 {
            let direct = (1..=q).filter(|a| a.gcd(&q) == 1).count() as u64;
            assert_eq!(phi[q as usize], direct, "q = {q}");
        }
    }

    #[test]
    fn m1_measure_matches_closed_form_when_disjoint() {
        // With Q = ceil(P^(1/20)) the cores never overlap, so the union
        // measure equals the plain sum of lengths.
        for (q, p) in [(2u64, 100.0), (3, 100.0), (5, 1000.0), (10, 1e6)] {
            let merged = meas_m1(q, p, DEFAULT_EPS0, &budget()).unwrap();
            let closed = m1_closed_form(q, p, DEFAULT_EPS0).unwrap();
            assert!(
                (merged - closed).abs() <= 1e-15 * closed.max(1.0),
                "Q = {q}, P = {p}: {merged} vs {closed}"
            );
        }
        // Q = 3, P = 100 hand bound: 2 (1 + 1/4 + 2/9) P^(-2 + eps0).
        let closed = m1_closed_form(3, 100.0, DEFAULT_EPS0).unwrap();
        let tau = 100f64.powf(DEFAULT_EPS0 - 2.0);
        let hand = 2.0 * (1.0 + 0.25 + 2.0 / 9.0) * tau;
        assert!((closed - hand).abs() < 1e-15);
        assert!(closed < 3.45e-4);
    }

    #[test]
    fn m1_measure_merges_overlaps() {
        // A huge "scale" exponent makes every interval the whole circle.
        let merged = meas_m1(5, 2.0, 0.99, &budget()).unwrap();
        assert!(merged <= 1.0 + 1e-12);
        let closed = m1_closed_form(5, 2.0, 0.99).unwrap();
        assert!(closed > merged);
    }

    #[test]
    fn spectrum_of_one_dimensional_square() {
        let f = QuadraticForm::new(1, vec![1]).unwrap();
        let (obs, base) = ones(1);
        let spec = value_spectrum(&f, &Cutoff::Sharp, &obs, &base, 3.0, &budget()).unwrap();
        // x in [-2, 2]: values 0, 1, 1, 4, 4.
        assert_eq!(spec, vec![(0, 1.0), (1, 2.0), (4, 2.0)]);
        let s0 = spectrum_eval(&spec, 0.0);
        assert!((s0.re - 5.0).abs() < 1e-14 && s0.im.abs() < 1e-14);
    }

    #[test]
    fn delta_identity_hand_count() {
        // x^2 = y^2 with |x|, |y| <= 1: five solutions.
        let f = QuadraticForm::new(2, vec![1, 0, 0, -1]).unwrap();
        let (obs, base) = ones(2);
        let (direct, via) =
            delta_identity_check(&f, &Cutoff::Sharp, &obs, &base, 2.0, &budget()).unwrap();
        assert_eq!(direct, 5.0);
        assert!((via - 5.0).abs() < 1e-12);
    }

    #[test]
    fn delta_identity_zero_observable() {
        let f = QuadraticForm::new(2, vec![1, 0, 0, -1]).unwrap();
        let zero = Observable::constant(0.0);
        let obs = ProductObservable::uniform(zero, 2).unwrap();
        let base = ProductPoint::identity(2).unwrap();
        let (direct, via) =
            delta_identity_check(&f, &Cutoff::Sharp, &obs, &base, 6.0, &budget()).unwrap();
        assert_eq!(direct, 0.0);
        assert_eq!(via, 0.0);
    }

    #[test]
    fn delta_identity_generic_smooth_instance() {
        let f = QuadraticForm::new(3, vec![1, 0, 0, 0, 1, 0, 0, 0, -1]).unwrap();
        let w = smooth_cutoff(3);
        let obs = bump_obs(3);
        let base = generic_point(3);
        let (direct, via) = delta_identity_check(&f, &w, &obs, &base, 8.0, &budget()).unwrap();
        assert!(direct > 0.0);
        assert!(
            (direct - via).abs() <= 1e-12 * direct.abs().max(1.0),
            "direct = {direct}, via = {via}"
        );
    }

    #[test]
    fn vdc_single_shift_is_identity() {
        let f = QuadraticForm::new(1, vec![1]).unwrap();
        let (obs, base) = ones(1);
        let r = vdc_difference(&f, &Cutoff::Sharp, &obs, &base, 8.0, 0.3, 1, &budget()).unwrap();
        assert!(r.rearrangement_rel < 1e-15);
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].count, 1);
        assert!(r.cs_holds);
        assert!(r.diff_rel < 1e-12);
    }

    #[test]
    fn vdc_rearrangement_is_exact() {
        let f1 = QuadraticForm::new(1, vec![1]).unwrap();
        let (obs1, base1) = ones(1);
        for h in [2i64, 4] {
            let r =
                vdc_difference(&f1, &Cutoff::Sharp, &obs1, &base1, 8.0, 0.3, h, &budget()).unwrap();
            assert!(
                r.rearrangement_rel < 1e-12,
                "H = {h}: {}",
                r.rearrangement_rel
            );
            assert!(r.cs_holds);
            assert!(r.diff_rel < 1e-12, "H = {h}: {}", r.diff_rel);
            let hn = h.pow(1) as u64;
            assert!(r.rows.iter().all(|row| row.count <= hn));
        }

        let f2 = QuadraticForm::new(2, vec![1, 1, 1, -1]).unwrap();
        let w = smooth_cutoff(2);
        let obs = bump_obs(2);
        let base = generic_point(2);
        let r = vdc_difference(&f2, &w, &obs, &base, 8.0, 0.7321, 3, &budget()).unwrap();
        assert!(r.s.norm() > 0.0);
        assert!(r.rearrangement_rel < 1e-12, "{}", r.rearrangement_rel);
        assert!(r.cs_holds);
        assert!(r.diff_rel < 1e-12, "{}", r.diff_rel);
        assert!(r.rows.iter().all(|row| row.count <= 9));
        assert_eq!(r.rows.len(), 25);
    }

    #[test]
    fn vdc_correlations_have_linear_phase() {
        // For a fixed shift d, the correlation must equal the sum of
        // w(y+d) w(y) f(y+d) f(y) e(alpha (2 (L d) . y + F(d))).
        let f = QuadraticForm::new(2, vec![1, 1, 1, -1]).unwrap();
        let w = smooth_cutoff(2);
        let obs = bump_obs(2);
        let base = generic_point(2);
        let alpha = 0.3173;
        let p = 6.0;
        let r = vdc_difference(&f, &w, &obs, &base, p, alpha, 3, &budget()).unwrap();

        let b = (p as i64) - 1;
        let table = OrbitTable::build(&obs, &base, b).unwrap();
        let inv_p = 1.0 / p;
        for row in &r.rows {
            let d = &row.shift;
            let ld = f.l_times(d);
            let fd = f.evaluate_unchecked(d);
            let mut expect = KahanComplex::default();
            visit_box(&[-b, -b], &[b, b], |y| {
                let shifted = [y[0] + d[0], y[1] + d[1]];
                if shifted.iter().any(|&t| t.abs() > b) {
                    return;
                }
                let wf = w.value_at(y, inv_p)
                    * table.value(y)
                    * w.value_at(&shifted, inv_p)
                    * table.value(&shifted);
                if wf == 0.0 {
                    return;
                }
                let dot: i128 = ld.iter().zip(y).map(|(&l, &yi)| l * yi as i128).sum();
                expect.add(e(alpha * (2 * dot + fd) as f64) * wf);
            });
            let expect = expect.value();
            assert!(
                (expect - row.sum).norm() <= 1e-12 * (1.0 + expect.norm()),
                "d = {d:?}: {expect} vs {}",
                row.sum
            );
        }
    }

    #[test]
    fn vdc_rejects_bad_shifts() {
        let f = QuadraticForm::new(1, vec![1]).unwrap();
        let (obs, base) = ones(1);
        assert!(vdc_difference(&f, &Cutoff::Sharp, &obs, &base, 8.0, 0.3, 0, &budget()).is_err());
        assert!(vdc_difference(&f, &Cutoff::Sharp, &obs, &base, 8.0, 0.3, 5, &budget()).is_err());
        assert!(vdc_difference(&f, &Cutoff::Sharp, &obs, &base, 8.5, 0.3, 2, &budget()).is_err());
    }

    #[test]
    fn lattice_sum_hand_value() {
        // n = 1, F = x^2, P = 10, H = 10, z = 1/2, delta = 1/2, C = 0:
        // even multiples give 6 terms of 1, odd give 5 of 6^(-1/2).
        let f = QuadraticForm::new(1, vec![1]).unwrap();
        let r = lattice_sum_check(&f, 10, 10.0, 0.5, 0.5, 0.0, &budget()).unwrap();
        let hand = 6.0 + 5.0 / 6.0f64.sqrt();
        assert!((r.lhs - hand).abs() < 1e-12);
        assert!((r.lhs - 8.041241452).abs() < 1e-6);
        assert!(r.ratio > 0.0 && r.ratio <= 32.0);
    }

    #[test]
    fn lattice_sum_zero_shift_gives_zero_ratio() {
        let f = QuadraticForm::new(1, vec![1]).unwrap();
        let r = lattice_sum_check(&f, 10, 0.0, 0.5, 0.5, 0.3, &budget()).unwrap();
        assert!((r.lhs - 11.0 * 1.3).abs() < 1e-12);
        assert!(r.rhs.is_infinite());
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn lattice_ratio_stays_bounded() {
        let f1 = QuadraticForm::new(1, vec![1]).unwrap();
        let f2 = QuadraticForm::new(2, vec![1, 1, 1, -1]).unwrap();
        for k in 1..=20 {
            let z = k as f64 / 21.0;
            for h in [1.0, 4.0, 16.0] {
                let r1 = lattice_sum_check(&f1, 16, h, z, 0.5, 0.0, &budget()).unwrap();
                assert!(r1.ratio <= 32.0, "n = 1: z = {z}, H = {h}: {}", r1.ratio);
                let r2 = lattice_sum_check(&f2, 12, h, z, 0.5, 0.1, &budget()).unwrap();
                assert!(
                    r2.ratio <= 32.0 * 32.0,
                    "n = 2: z = {z}, H = {h}: {}",
                    r2.ratio
                );
            }
        }
    }

    #[test]
    fn arc_integral_zero_observable() {
        let f = QuadraticForm::new(2, vec![1, 0, 0, -1]).unwrap();
        let zero = Observable::constant(0.0);
        let obs = ProductObservable::uniform(zero, 2).unwrap();
        let base = ProductPoint::identity(2).unwrap();
        let m = arc_integral(
            &f,
            &Cutoff::Sharp,
            &obs,
            &base,
            8.0,
            3,
            DEFAULT_EPS0,
            0.01,
            &budget(),
        )
        .unwrap();
        assert_eq!(m.m1_mass, 0.0);
        assert_eq!(m.m2_mass, 0.0);
        assert!(m.m1_measure > 0.0);
    }

    #[test]
    fn arc_masses_dominate_the_count() {
        let f = QuadraticForm::new(2, vec![1, 0, 0, -1]).unwrap();
        let w = smooth_cutoff(2);
        let (obs, base) = ones(2);
        let (direct, via) = delta_identity_check(&f, &w, &obs, &base, 8.0, &budget()).unwrap();
        assert!((direct - via).abs() <= 1e-12 * direct.max(1.0));
        let m = arc_integral(&f, &w, &obs, &base, 8.0, 3, DEFAULT_EPS0, 0.02, &budget()).unwrap();
        let total = m.m1_mass + m.m2_mass;
        assert!(
            total >= direct.abs() * (1.0 - 1e-9),
            "masses {total} cannot be below the count {direct}"
        );
        assert!(m.m1_mass > 0.0 && m.m2_mass > 0.0);
        assert!(m.segments > 8);
        // The measure of the core is what the closed form says.
        let closed = m1_closed_form(3, 8.0, DEFAULT_EPS0).unwrap();
        assert!((m.m1_measure - closed).abs() <= 1e-15);
    }

    #[test]
    fn arc_integral_full_circle_matches_plain_quadrature() {
        // Cutting the circle into arc segments must not change the total.
        let f = QuadraticForm::new(1, vec![1]).unwrap();
        let (obs, base) = ones(1);
        let spec = value_spectrum(&f, &Cutoff::Sharp, &obs, &base, 5.0, &budget()).unwrap();
        let plain = integrate(0.0, 1.0, 0.01, |x| spectrum_eval(&spec, x).norm());
        let m = arc_integral(
            &f,
            &Cutoff::Sharp,
            &obs,
            &base,
            5.0,
            2,
            DEFAULT_EPS0,
            0.01,
            &budget(),
        )
        .unwrap();
        let total = m.m1_mass + m.m2_mass;
        assert!(
            (total - plain).abs() <= 1e-6 * plain,
            "split total {total} vs plain {plain}"
        );
    }
}
