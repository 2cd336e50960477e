//! Smooth compactly supported cutoffs: the standard bump, scaled and
//! flat-top variants, coordinate products, Sobolev-style norms, and the
//! two-variable splitting kernel with its window functions.
//!
//! Bump derivatives come from the closed recursion
//! `w^(j)(x) = N_j(x) (1-x^2)^(-2j) w(x)` with polynomial numerators
//! `N_{j+1} = N_j' (1-x^2)^2 + 4 j x N_j (1-x^2) - 2 x N_j`, which stays
//! accurate near the support boundary where finite differences collapse.

use crate::numeric::{binomial, integrate};
use crate::{Error, Result};
use std::sync::OnceLock;

/// Highest derivative order carried by every weight.
pub const J_MAX: usize = 6;

fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_deriv(p: &[f64]) -> Vec<f64> {
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| i as f64 * c)
        .collect()
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    if p.is_empty() || q.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn poly_add(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len().max(q.len())];
    for (i, &a) in p.iter().enumerate() {
        out[i] += a;
    }
    for (i, &b) in q.iter().enumerate() {
        out[i] += b;
    }
    out
}

/// Numerators N_j of the bump derivative recursion, j = 0..=J_MAX.
fn bump_numerators() -> &'static Vec<Vec<f64>> {
    static CELL: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    CELL.get_or_init(|| {
        let one_minus_x2 = vec![1.0, 0.0, -1.0];
        let sq = poly_mul(&one_minus_x2, &one_minus_x2);
        let mut list = vec![vec![1.0]];
        for j in 0..J_MAX {
            let n = &list[j];
            let term1 = poly_mul(&poly_deriv(n), &sq);
            let term2 = poly_mul(&poly_mul(&[0.0, 4.0 * j as f64], n), &one_minus_x2);
            let term3 = poly_mul(&[0.0, -2.0], n);
            list.push(poly_add(&poly_add(&term1, &term2), &term3));
        }
        list
    })
}

/// j-th derivative of `exp(-1/(1-x^2))`, zero outside `(-1,1)`.
pub fn bump_deriv(j: usize, x: f64) -> f64 {
    assert!(j <= J_MAX, "derivative order {j} exceeds {J_MAX}");
    let r = 1.0 - x * x;
    if r <= 0.0 {
        return 0.0;
    }
    let base = (-1.0 / r).exp();
    if j == 0 {
        return base;
    }
    poly_eval(&bump_numerators()[j], x) / r.powi(2 * j as i32) * base
}

/// Mass of the standard bump (cached quadrature).
pub fn bump_mass() -> f64 {
    static CELL: OnceLock<f64> = OnceLock::new();
    *CELL.get_or_init(|| integrate(-1.0, 1.0, 0.125, |x| bump_deriv(0, x)))
}

/// Cumulative ramp profile h on [0,1]: h(0)=0, h(1)=1, h' proportional to
/// a bump, sampled once and evaluated by cubic Hermite interpolation.
struct RampTable {
    values: Vec<f64>,
    step: f64,
    scale: f64,
}

fn ramp_table() -> &'static RampTable {
    static CELL: OnceLock<RampTable> = OnceLock::new();
    CELL.get_or_init(|| {
        let cells = 2048usize;
        let step = 1.0 / cells as f64;
        let scale = 2.0 / bump_mass();
        let mut values = Vec::with_capacity(cells + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for i in 0..cells {
            let a = i as f64 * step;
            let b = a + step;
            acc += integrate(a, b, step, |t| scale * bump_deriv(0, 2.0 * t - 1.0));
            values.push(acc);
        }
        // exact endpoint by construction of the normalization
        let correction = 1.0 / acc;
        for v in values.iter_mut() {
            *v *= correction;
        }
        RampTable {
            values,
            step,
            scale: scale * correction,
        }
    })
}

fn ramp_value(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let tab = ramp_table();
    let pos = t / tab.step;
    let cell = (pos.floor() as usize).min(tab.values.len() - 2);
    let s = pos - cell as f64;
    let h = tab.step;
    let (v0, v1) = (tab.values[cell], tab.values[cell + 1]);
    let d0 = tab.scale * bump_deriv(0, 2.0 * (cell as f64 * h) - 1.0);
    let d1 = tab.scale * bump_deriv(0, 2.0 * ((cell + 1) as f64 * h) - 1.0);
    // cubic Hermite basis
    let s2 = s * s;
    let s3 = s2 * s;
    v0 * (2.0 * s3 - 3.0 * s2 + 1.0)
        + d0 * h * (s3 - 2.0 * s2 + s)
        + v1 * (-2.0 * s3 + 3.0 * s2)
        + d1 * h * (s3 - s2)
}

/// m-th derivative of the ramp for m >= 1 (closed form).
fn ramp_deriv(m: usize, t: f64) -> f64 {
    debug_assert!(m >= 1);
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    let scale = 2.0 / bump_mass();
    scale * 2f64.powi(m as i32 - 1) * bump_deriv(m - 1, 2.0 * t - 1.0)
}

/// One-coordinate weight: evaluation of derivatives up to `J_MAX`,
/// vanishing outside an open support interval.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight1d {
    /// `exp(-1/(1-x^2))` on `(-1,1)`.
    Bump,
    /// `bump((x-center)/scale)`.
    Scaled { center: f64, scale: f64 },
    /// Flat top: 1 on `[-1+delta, 1-delta]`, smooth ramp to 0 at `|x|=1`.
    Plateau { delta: f64 },
    /// Identically zero.
    Zero,
}

impl Weight1d {
    pub fn scaled(center: f64, scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "weight scale {scale} must be positive"
            )));
        }
        Ok(Weight1d::Scaled { center, scale })
    }

    pub fn plateau(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "plateau ramp width {delta} must lie in (0,1]"
            )));
        }
        Ok(Weight1d::Plateau { delta })
    }

    /// Open interval outside which every derivative vanishes.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Weight1d::Bump | Weight1d::Plateau { .. } => (-1.0, 1.0),
            Weight1d::Scaled { center, scale } => (center - scale, center + scale),
            Weight1d::Zero => (0.0, 0.0),
        }
    }

    /// Value of the j-th derivative, j <= `J_MAX`.
    pub fn eval(&self, x: f64, j: usize) -> f64 {
        assert!(j <= J_MAX, "derivative order {j} exceeds {J_MAX}");
        match *self {
            Weight1d::Bump => bump_deriv(j, x),
            Weight1d::Scaled { center, scale } => {
                bump_deriv(j, (x - center) / scale) / scale.powi(j as i32)
            }
            Weight1d::Plateau { delta } => {
                if x.abs() >= 1.0 {
                    return 0.0;
                }
                let t = (1.0 - x.abs()) / delta;
                if j == 0 {
                    ramp_value(t)
                } else {
                    let chain = -x.signum() / delta;
                    ramp_deriv(j, t) * chain.powi(j as i32)
                }
            }
            Weight1d::Zero => 0.0,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x, 0)
    }
}

/// Which norm a Sobolev sum accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    LInf,
}

/// `L^p` norm of the m-th derivative of a one-coordinate weight.
///
/// The sup norm comes from a dense grid with local ternary refinement; the
/// `L^1` norm splits the support at sign changes and integrates each piece.
pub fn norm_1d(w: &Weight1d, kind: NormKind, m: usize) -> Result<f64> {
    if m > J_MAX {
        return Err(Error::DerivativeOrder {
            order: m,
            max: J_MAX,
        });
    }
    let (a, b) = w.support();
    if b <= a {
        return Ok(0.0);
    }
    match kind {
        NormKind::LInf => {
            let grid = 4096usize;
            let step = (b - a) / grid as f64;
            let mut best_x = a;
            let mut best = 0.0f64;
            for i in 0..=grid {
                let x = a + i as f64 * step;
                let v = w.eval(x, m).abs();
                if v > best {
                    best = v;
                    best_x = x;
                }
            }
            let (mut lo, mut hi) = ((best_x - step).max(a), (best_x + step).min(b));
            for _ in 0..80 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if w.eval(m1, m).abs() < w.eval(m2, m).abs() {
                    lo = m1;
                } else {
                    hi = m2;
                }
            }
            Ok(best.max(w.eval(0.5 * (lo + hi), m).abs()))
        }
        NormKind::L1 => {
            let grid = 4096usize;
            let step = (b - a) / grid as f64;
            let mut cuts = vec![a];
            // track the last nonzero sample so sign flips across exact
            // zeros on the grid are still caught
            let mut last_sign = 0.0f64;
            let mut last_x = a;
            for i in 0..=grid {
                let x = a + i as f64 * step;
                let v = w.eval(x, m);
                if v == 0.0 {
                    continue;
                }
                if last_sign != 0.0 && v.signum() != last_sign {
                    let (mut lo, mut hi) = (last_x, x);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let fm = w.eval(mid, m);
                        if fm == 0.0 {
                            lo = mid;
                            hi = mid;
                            break;
                        }
                        if fm.signum() == last_sign {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    cuts.push(0.5 * (lo + hi));
                }
                last_sign = v.signum();
                last_x = x;
            }
            cuts.push(b);
            let mut total = 0.0;
            for pair in cuts.windows(2) {
                let piece = integrate(pair[0], pair[1], (b - a) / 16.0, |x| w.eval(x, m));
                total += piece.abs();
            }
            Ok(total)
        }
    }
}

/// Product weight `w(x) = prod_i w_i(x_i)`.
#[derive(Debug, Clone)]
pub struct ProductWeight {
    factors: Vec<Weight1d>,
}

impl ProductWeight {
    pub fn new(factors: Vec<Weight1d>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument(
                "product weight needs at least one factor".into(),
            ));
        }
        Ok(ProductWeight { factors })
    }

    pub fn uniform(factor: Weight1d, n: usize) -> Result<Self> {
        ProductWeight::new(vec![factor; n.max(1)])
    }

    pub fn n(&self) -> usize {
        self.factors.len()
    }

    pub fn factor(&self, i: usize) -> &Weight1d {
        &self.factors[i]
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.factors.len());
        self.factors
            .iter()
            .zip(x)
            .map(|(w, &xi)| w.value(xi))
            .product()
    }

    /// Mixed partial with per-coordinate orders `beta`.
    pub fn partial(&self, beta: &[usize], x: &[f64]) -> f64 {
        debug_assert_eq!(beta.len(), self.factors.len());
        self.factors
            .iter()
            .zip(beta)
            .zip(x)
            .map(|((w, &b), &xi)| w.eval(xi, b))
            .product()
    }

    /// Sup of coordinate support endpoints: values vanish for `|x| >= r`.
    pub fn support_radius(&self) -> f64 {
        self.factors
            .iter()
            .map(|w| {
                let (a, b) = w.support();
                a.abs().max(b.abs())
            })
            .fold(0.0, f64::max)
    }
}

/// `S_{p,k}(w)`: sum over multi-indices `|beta| <= k` of the `L^p` norms of
/// the mixed partials. Both norms factorize exactly over coordinates.
pub fn sobolev_norm(w: &ProductWeight, kind: NormKind, k: usize) -> Result<f64> {
    if k > J_MAX {
        return Err(Error::DerivativeOrder {
            order: k,
            max: J_MAX,
        });
    }
    let n = w.n();
    let mut table = vec![vec![0.0f64; k + 1]; n];
    for (i, row) in table.iter_mut().enumerate() {
        for (m, slot) in row.iter_mut().enumerate() {
            *slot = norm_1d(w.factor(i), kind, m)?;
        }
    }
    fn walk(table: &[Vec<f64>], coord: usize, left: usize, acc: f64, out: &mut f64) {
        if coord == table.len() {
            *out += acc;
            return;
        }
        for m in 0..=left {
            walk(table, coord + 1, left - m, acc * table[coord][m], out);
        }
    }
    let mut total = 0.0;
    walk(&table, 0, k, 1.0, &mut total);
    Ok(total)
}

/// Two-variable splitting kernel `K(x,y) = bump(y + delta x) rho(x)` with
/// `rho` the mass-one bump; satisfies the reconstruction identity
/// `delta^{-1} int K((x-y)/delta, y) dy = bump(x)` by substitution.
#[derive(Debug, Clone)]
pub struct SplitKernel {
    delta: f64,
}

impl SplitKernel {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "splitting parameter {delta} must lie in (0,1]"
            )));
        }
        Ok(SplitKernel { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        bump_deriv(0, y + self.delta * x) * bump_deriv(0, x) / bump_mass()
    }

    /// Mixed partial of order (bx, by); Leibniz in x spreads across the
    /// composed bump and the normalized factor.
    pub fn partial(&self, bx: usize, by: usize, x: f64, y: f64) -> Result<f64> {
        if bx + by > J_MAX {
            return Err(Error::DerivativeOrder {
                order: bx + by,
                max: J_MAX,
            });
        }
        let mut total = 0.0;
        for i in 0..=bx {
            total += binomial(bx, i)
                * self.delta.powi(i as i32)
                * bump_deriv(by + i, y + self.delta * x)
                * bump_deriv(bx - i, x)
                / bump_mass();
        }
        Ok(total)
    }

    /// `delta^{-1} int K((x-y)/delta, y) dy`, which must reproduce the bump.
    pub fn reconstruct(&self, x: f64) -> f64 {
        let d = self.delta;
        integrate(x - d, x + d, d / 8.0, |y| self.value((x - y) / d, y)) / d
    }

    /// One-coordinate window `int_{|t|<1/2} K(x - t, delta (y0 + t)) dt`.
    pub fn window(&self, y0: i64, x: f64) -> f64 {
        if x.abs() >= 1.5 || y0.abs() > self.window_y0_bound() {
            return 0.0;
        }
        integrate(-0.5, 0.5, 0.125, |t| {
            self.value(x - t, self.delta * (y0 as f64 + t))
        })
    }

    /// m-th x-derivative of the window (differentiation under the integral).
    pub fn window_partial(&self, m: usize, y0: i64, x: f64) -> Result<f64> {
        if m > J_MAX {
            return Err(Error::DerivativeOrder {
                order: m,
                max: J_MAX,
            });
        }
        if x.abs() >= 1.5 || y0.abs() > self.window_y0_bound() {
            return Ok(0.0);
        }
        let mut err = None;
        let v = integrate(-0.5, 0.5, 0.125, |t| {
            match self.partial(m, 0, x - t, self.delta * (y0 as f64 + t)) {
                Ok(v) => v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }

    /// Windows with `|y0|` beyond this bound vanish identically.
    pub fn window_y0_bound(&self) -> i64 {
        ((1.0 + self.delta) / self.delta + 0.5).ceil() as i64
    }

    /// `sum_k window(k, (x - s k)/s)` with `s = P delta`; recovers
    /// `bump(x / (s/delta))` up to quadrature error.
    pub fn partition_value(&self, s: f64, x: f64) -> f64 {
        let center = x / s;
        let k_lo = (center - 1.5).floor() as i64;
        let k_hi = (center + 1.5).ceil() as i64;
        let mut total = 0.0;
        for k in k_lo..=k_hi {
            total += self.window(k, center - k as f64);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_hand_values() {
        assert!((bump_deriv(0, 0.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((bump_deriv(0, 0.5) - (-4.0f64 / 3.0).exp()).abs() < 1e-15);
        for j in 0..=J_MAX {
            assert_eq!(bump_deriv(j, 1.0), 0.0);
            assert_eq!(bump_deriv(j, -1.0), 0.0);
            assert_eq!(bump_deriv(j, 1.7), 0.0);
        }
        // first derivative closed form -2x/(1-x^2)^2 * bump
        let x = 0.3f64;
        let expect = -2.0 * x / (1.0 - x * x).powi(2) * bump_deriv(0, x);
        assert!((bump_deriv(1, x) - expect).abs() < 1e-15);
    }

    #[test]
    fn bump_mass_value() {
        assert!((bump_mass() - 0.443994).abs() < 1e-6);
    }

    #[test]
    fn derivative_chain_consistency() {
        // order j+1 integrates back to order j (fundamental theorem, tight),
        // and a five-point difference of order j matches order j+1 at the
        // scale of the derivative on a grid clear of the support boundary
        let spans = [(-0.9, 0.4), (-0.3, 0.77), (0.1, 0.95), (0.8, 1.3)];
        let h = 1e-3;
        for w in [
            Weight1d::Bump,
            Weight1d::scaled(0.2, 0.7).unwrap(),
            Weight1d::plateau(0.5).unwrap(),
        ] {
            for j in 0..J_MAX {
                let scale = (0..=1200)
                    .map(|i| w.eval(-1.2 + i as f64 * 0.002, j + 1).abs())
                    .fold(0.0f64, f64::max);
                for &(x0, x1) in &spans {
                    let integral = integrate(x0, x1, 1.0 / 256.0, |t| w.eval(t, j + 1));
                    let diff = w.eval(x1, j) - w.eval(x0, j);
                    assert!(
                        (integral - diff).abs() < 1e-9 * (1.0 + scale),
                        "{w:?} order {j} span ({x0},{x1})"
                    );
                }
                // spot check with a five-point stencil; allow 5% pointwise
                // slack where the next orders spike near the support edge
                let (a, b) = w.support();
                let (mid, rad) = (0.5 * (a + b), 0.5 * (b - a));
                for i in 0..=120 {
                    let x = mid + rad * (-0.8 + i as f64 / 75.0);
                    let fd = (w.eval(x - 2.0 * h, j) - 8.0 * w.eval(x - h, j)
                        + 8.0 * w.eval(x + h, j)
                        - w.eval(x + 2.0 * h, j))
                        / (12.0 * h);
                    let exact = w.eval(x, j + 1);
                    let err = (fd - exact).abs();
                    assert!(
                        err < 1e-4 * (1.0 + scale) + 0.05 * exact.abs(),
                        "{w:?} order {j} at {x}: fd {fd} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn plateau_shape() {
        let w = Weight1d::plateau(0.25).unwrap();
        assert_eq!(w.value(0.0), 1.0);
        assert_eq!(w.value(0.75), 1.0);
        assert_eq!(w.value(-0.75), 1.0);
        assert_eq!(w.value(1.0), 0.0);
        assert_eq!(w.value(1.3), 0.0);
        // midpoint of the ramp is exactly 1/2 by symmetry of the bump
        assert!((w.value(1.0 - 0.125) - 0.5).abs() < 1e-9);
        assert!((w.value(-(1.0 - 0.125)) - 0.5).abs() < 1e-9);
        // mass of the flat-top weight is 2 - delta
        let mass = integrate(-1.0, 1.0, 0.05, |x| w.value(x));
        assert!((mass - 1.75).abs() < 1e-8, "mass {mass}");
    }

    #[test]
    fn plateau_matches_ramp_derivatives() {
        let delta = 0.4;
        let w = Weight1d::plateau(delta).unwrap();
        // inside the flat top all derivatives vanish
        for j in 1..=J_MAX {
            assert_eq!(w.eval(0.3, j), 0.0);
        }
        // on the ramp the first derivative is negative on the right side
        assert!(w.eval(0.85, 1) < 0.0);
        assert!(w.eval(-0.85, 1) > 0.0);
    }

    #[test]
    fn norms_hand_values() {
        let bump = Weight1d::Bump;
        // sup at the center
        let sup = norm_1d(&bump, NormKind::LInf, 0).unwrap();
        assert!((sup - (-1.0f64).exp()).abs() < 1e-9);
        // L1 of the weight is its mass
        let l1 = norm_1d(&bump, NormKind::L1, 0).unwrap();
        assert!((l1 - bump_mass()).abs() < 1e-9);
        // the derivative changes sign once at 0, so its L1 mass is twice
        // the peak value
        let l1d = norm_1d(&bump, NormKind::L1, 1).unwrap();
        assert!((l1d - 2.0 * (-1.0f64).exp()).abs() < 1e-8, "{l1d}");
        let zero = Weight1d::Zero;
        assert_eq!(norm_1d(&zero, NormKind::L1, 3).unwrap(), 0.0);
        assert_eq!(norm_1d(&zero, NormKind::LInf, 0).unwrap(), 0.0);
    }

    #[test]
    fn sobolev_values_and_monotonicity() {
        let w1 = ProductWeight::uniform(Weight1d::Bump, 1).unwrap();
        let s0 = sobolev_norm(&w1, NormKind::LInf, 0).unwrap();
        assert!((s0 - 0.367879).abs() < 1e-5);
        let w2 = ProductWeight::uniform(Weight1d::Bump, 2).unwrap();
        let s0p = sobolev_norm(&w2, NormKind::LInf, 0).unwrap();
        assert!((s0p - 0.135335).abs() < 1e-5);
        let z = ProductWeight::uniform(Weight1d::Zero, 2).unwrap();
        for k in 0..=J_MAX {
            assert_eq!(sobolev_norm(&z, NormKind::L1, k).unwrap(), 0.0);
            assert_eq!(sobolev_norm(&z, NormKind::LInf, k).unwrap(), 0.0);
        }
        for kind in [NormKind::L1, NormKind::LInf] {
            let mut prev = 0.0;
            for k in 0..=J_MAX {
                let s = sobolev_norm(&w2, kind, k).unwrap();
                assert!(s >= prev);
                prev = s;
            }
        }
        assert!(matches!(
            sobolev_norm(&w1, NormKind::L1, J_MAX + 1),
            Err(Error::DerivativeOrder { .. })
        ));
    }

    #[test]
    fn kernel_supports() {
        let k = SplitKernel::new(0.5).unwrap();
        assert_eq!(k.value(1.0, 0.2), 0.0);
        assert_eq!(k.value(-1.2, 0.2), 0.0);
        assert_eq!(k.value(0.3, 1.5), 0.0);
        assert_eq!(k.value(0.3, -1.6), 0.0);
        assert!(k.value(0.3, -1.3) > 0.0 || k.value(0.3, -1.3) == 0.0);
        assert!(k.value(0.0, 0.0) > 0.0);
    }

    #[test]
    fn kernel_reconstruction() {
        for delta in [1.0, 0.5, 0.1] {
            let k = SplitKernel::new(delta).unwrap();
            let mut worst = 0.0f64;
            for i in 0..100 {
                let x = -0.99 + 0.02 * i as f64;
                worst = worst.max((k.reconstruct(x) - bump_deriv(0, x)).abs());
            }
            assert!(worst < 1e-6, "delta {delta}: {worst}");
        }
    }

    #[test]
    fn kernel_partials_match_finite_differences() {
        let k = SplitKernel::new(0.5).unwrap();
        let h = 1e-4;
        for &(x, y) in &[(0.2, 0.3), (-0.4, 0.6), (0.1, -0.8), (0.55, 0.0)] {
            let dx = (k.value(x + h, y) - k.value(x - h, y)) / (2.0 * h);
            assert!((dx - k.partial(1, 0, x, y).unwrap()).abs() < 1e-5);
            let dy = (k.value(x, y + h) - k.value(x, y - h)) / (2.0 * h);
            assert!((dy - k.partial(0, 1, x, y).unwrap()).abs() < 1e-5);
            let dxy = (k.value(x + h, y + h) - k.value(x + h, y - h) - k.value(x - h, y + h)
                + k.value(x - h, y - h))
                / (4.0 * h * h);
            assert!((dxy - k.partial(1, 1, x, y).unwrap()).abs() < 1e-3);
        }
        assert!(matches!(
            k.partial(4, 3, 0.1, 0.1),
            Err(Error::DerivativeOrder { .. })
        ));
    }

    #[test]
    fn kernel_derivative_bound() {
        // grid max of each mixed partial stays within a fixed multiple of
        // the matching Sobolev norm of the bump, uniformly in delta
        let w = ProductWeight::uniform(Weight1d::Bump, 1).unwrap();
        for delta in [1.0, 0.5, 0.1] {
            let k = SplitKernel::new(delta).unwrap();
            for (bx, by) in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)] {
                let s = sobolev_norm(&w, NormKind::LInf, bx + by).unwrap();
                let mut grid_max = 0.0f64;
                for i in 0..60 {
                    for j in 0..60 {
                        let x = -1.0 + 2.0 * (i as f64 + 0.5) / 60.0;
                        let y = -1.5 + 3.0 * (j as f64 + 0.5) / 60.0;
                        grid_max = grid_max.max(k.partial(bx, by, x, y).unwrap().abs());
                    }
                }
                let c = grid_max / s;
                assert!(
                    c.is_finite() && c <= 8.0,
                    "({bx},{by}) delta {delta}: C = {c}"
                );
            }
        }
    }

    #[test]
    fn window_support_and_partition() {
        let k = SplitKernel::new(0.25).unwrap();
        assert_eq!(k.window(0, 1.5), 0.0);
        assert_eq!(k.window(0, -2.0), 0.0);
        assert!(k.window(0, 0.0) > 0.0);
        let far = k.window_y0_bound() + 1;
        assert_eq!(k.window(far, 0.0), 0.0);
        assert_eq!(k.window(-far, 0.3), 0.0);
        // partition of unity against the bump: at x = 0.3 P the windows sum
        // back to bump(0.3)
        let p = 16.0;
        let got = k.partition_value(p * 0.25, 0.3 * p);
        assert!((got - bump_deriv(0, 0.3)).abs() < 1e-5, "{got}");
        // a second point plus the two-coordinate product
        let g2 = k.partition_value(p * 0.25, -0.62 * p);
        assert!((g2 - bump_deriv(0, -0.62)).abs() < 1e-5);
        let prod = got * g2;
        assert!((prod - bump_deriv(0, 0.3) * bump_deriv(0, -0.62)).abs() < 3e-5);
    }

    #[test]
    fn window_derivative_bound() {
        let w = ProductWeight::uniform(Weight1d::Bump, 1).unwrap();
        let k = SplitKernel::new(0.5).unwrap();
        for m in 0..=2 {
            let s = sobolev_norm(&w, NormKind::LInf, m).unwrap();
            let mut grid_max = 0.0f64;
            for y0 in -3..=3 {
                for i in 0..80 {
                    let x = -1.5 + 3.0 * (i as f64 + 0.5) / 80.0;
                    grid_max = grid_max.max(k.window_partial(m, y0, x).unwrap().abs());
                }
            }
            assert!(grid_max / s <= 8.0, "order {m}: ratio {}", grid_max / s);
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(SplitKernel::new(0.0).is_err());
        assert!(SplitKernel::new(1.5).is_err());
        assert!(Weight1d::plateau(0.0).is_err());
        assert!(Weight1d::scaled(0.0, -1.0).is_err());
    }
}
