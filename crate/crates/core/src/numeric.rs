//! Shared numerical kernels: the additive character `e(x)`, compensated
//! summation, composite Gauss-Legendre quadrature, low-discrepancy sampling,
//! and small fitting helpers.

use num_complex::Complex64;
use std::sync::OnceLock;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// `e(x) = exp(2 pi i x)`, with the argument reduced mod 1 before any
/// trigonometry so that large phases keep full relative accuracy.
pub fn e(x: f64) -> Complex64 {
    let r = x - x.floor();
    let (s, c) = (TWO_PI * r).sin_cos();
    Complex64::new(c, s)
}

/// `e(num/q)` with the fraction reduced exactly in integers first.
pub fn e_q(num: i64, q: u64) -> Complex64 {
    debug_assert!(q > 0);
    let r = num.rem_euclid(q as i64);
    e(r as f64 / q as f64)
}

/// Distance from `x` to the nearest integer.
pub fn frac_dist(x: f64) -> f64 {
    let r = x - x.floor();
    r.min(1.0 - r)
}

/// Distance between two points of R/Z.
pub fn circle_dist(x: f64, y: f64) -> f64 {
    frac_dist(x - y)
}

/// Neumaier-compensated accumulator for `f64`.
///
/// Keeps the running error of long alternating sums near one ulp of the
/// result instead of one ulp of the largest intermediate.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    s: f64,
    c: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    pub fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// Compensated accumulator for complex values (independent real/imag parts).
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanComplex {
    re: KahanSum,
    im: KahanSum,
}

impl KahanComplex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

const GL_POINTS: usize = 32;

fn gauss_legendre_table() -> &'static (Vec<f64>, Vec<f64>) {
    static TABLE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    TABLE.get_or_init(|| {
        // Nodes of P_32 on (-1,1) by Newton iteration on the three-term
        // recurrence; symmetric, so only half are solved for.
        let n = GL_POINTS;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_pair(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_pair(n, x);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// 32-point Gauss-Legendre rule on `[a, b]`.
pub fn gl_panel<F: FnMut(f64) -> f64>(a: f64, b: f64, f: &mut F) -> f64 {
    let (nodes, weights) = gauss_legendre_table();
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = KahanSum::new();
    for (x, w) in nodes.iter().zip(weights) {
        acc.add(w * f(mid + half * x));
    }
    half * acc.value()
}

pub fn gl_panel_complex<F: FnMut(f64) -> Complex64>(a: f64, b: f64, f: &mut F) -> Complex64 {
    let (nodes, weights) = gauss_legendre_table();
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = KahanComplex::new();
    for (x, w) in nodes.iter().zip(weights) {
        acc.add(f(mid + half * x) * *w);
    }
    acc.value() * half
}

/// Composite Gauss-Legendre quadrature with panels of width at most
/// `max_width` (32 nodes per panel).
pub fn integrate<F: FnMut(f64) -> f64>(a: f64, b: f64, max_width: f64, mut f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = (((b - a) / max_width).ceil() as usize).max(1);
    let h = (b - a) / panels as f64;
    let mut acc = KahanSum::new();
    for k in 0..panels {
        let lo = a + k as f64 * h;
        acc.add(gl_panel(lo, lo + h, &mut f));
    }
    acc.value()
}

/// Quadrature nodes and scaled weights of the composite rule that
/// [`integrate`] applies on `[a, b]`, for callers that evaluate several
/// integrands against one set of samples.
pub(crate) fn composite_nodes(a: f64, b: f64, max_width: f64) -> Vec<(f64, f64)> {
    if b <= a {
        return Vec::new();
    }
    let (nodes, weights) = gauss_legendre_table();
    let panels = (((b - a) / max_width).ceil() as usize).max(1);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * GL_POINTS);
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in nodes.iter().zip(weights) {
            out.push((mid + half * x, w * half));
        }
    }
    out
}

pub fn integrate_complex<F: FnMut(f64) -> Complex64>(
    a: f64,
    b: f64,
    max_width: f64,
    mut f: F,
) -> Complex64 {
    if b <= a {
        return Complex64::new(0.0, 0.0);
    }
    let panels = (((b - a) / max_width).ceil() as usize).max(1);
    let h = (b - a) / panels as f64;
    let mut acc = KahanComplex::new();
    for k in 0..panels {
        let lo = a + k as f64 * h;
        acc.add(gl_panel_complex(lo, lo + h, &mut f));
    }
    acc.value()
}

/// Visits every integer vector of the box `lo[i] <= x[i] <= hi[i]` in
/// lexicographic order.
pub fn visit_box<F: FnMut(&[i64])>(lo: &[i64], hi: &[i64], mut f: F) {
    assert_eq!(lo.len(), hi.len());
    let n = lo.len();
    if n == 0 {
        f(&[]);
        return;
    }
    for i in 0..n {
        if lo[i] > hi[i] {
            return;
        }
    }
    let mut x: Vec<i64> = lo.to_vec();
    loop {
        f(&x);
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if x[i] < hi[i] {
                x[i] += 1;
                for j in i + 1..n {
                    x[j] = lo[j];
                }
                break;
            }
        }
    }
}

/// `i`-th element of the van der Corput sequence in the given base.
pub fn van_der_corput(mut i: u64, base: u64) -> f64 {
    let mut r = 0.0;
    let mut denom = 1.0;
    while i > 0 {
        denom *= base as f64;
        r += (i % base) as f64 / denom;
        i /= base;
    }
    r
}

/// 2-D Halton point (bases 2 and 3), offset by one to skip the origin.
pub fn halton2(i: u64) -> (f64, f64) {
    (van_der_corput(i + 1, 2), van_der_corput(i + 1, 3))
}

/// 3-D Halton point (bases 2, 3 and 5).
pub fn halton3(i: u64) -> (f64, f64, f64) {
    (
        van_der_corput(i + 1, 2),
        van_der_corput(i + 1, 3),
        van_der_corput(i + 1, 5),
    )
}

/// Least-squares fit of `log y = s log x + b`; returns `(s, b)`.
///
/// All `x` and `y` must be positive.
pub fn fit_log_log(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Binomial coefficient as `f64` (small arguments only).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn character_is_periodic_and_unitary() {
        for &x in &[0.0, 0.25, -1.3, 7.75, 123456.125] {
            let z = e(x);
            assert!((z.norm() - 1.0).abs() < 1e-14);
            assert!((z - e(x + 1.0)).norm() < 1e-12);
            assert!((z - e(x - 3.0)).norm() < 1e-12);
        }
        assert!((e(0.5) - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!((e(0.25) - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn exact_rational_character() {
        // e_q reduces the numerator in integers, so huge multiples of q
        // land exactly on 1.
        let z = e_q(3 * 1_000_000_007, 3);
        assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let z = e_q(-1, 4);
        assert!((z - Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        // 1 + 1e-16 added 1e6 times: naive f64 drops the small terms.
        let mut k = KahanSum::new();
        k.add(1.0);
        for _ in 0..1_000_000 {
            k.add(1e-16);
        }
        let got = k.value() - 1.0;
        assert!((got - 1e-10).abs() < 1e-14, "got {got:e}");
    }

    #[test]
    fn quadrature_exact_on_polynomials() {
        // GL-32 integrates degree <= 63 exactly; check a few moments.
        let v = integrate(-1.0, 1.0, 2.0, |x| x * x);
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        let v = integrate(0.0, 2.0, 0.125, |x| x.powi(7) - 3.0 * x + 1.0);
        assert!((v - (256.0 / 8.0 - 6.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn quadrature_oscillatory() {
        // int_0^1 e(5x) dx = 0 exactly.
        let v = integrate_complex(0.0, 1.0, 1.0 / 48.0, |x| e(5.0 * x));
        assert!(v.norm() < 1e-13, "residual {:e}", v.norm());
    }

    #[test]
    fn box_visits_in_lexicographic_order() {
        let mut seen = Vec::new();
        visit_box(&[-1, 0], &[0, 1], |x| seen.push((x[0], x[1])));
        assert_eq!(seen, vec![(-1, 0), (-1, 1), (0, 0), (0, 1)]);
    }

    #[test]
    fn log_log_fit_recovers_exponent() {
        let pts: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 32.0]
            .iter()
            .map(|&p: &f64| (p, 2.5 * p.powf(3.0)))
            .collect();
        let (s, b) = fit_log_log(&pts);
        assert!((s - 3.0).abs() < 1e-12);
        assert!((b.exp() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn halton_is_roughly_uniform() {
        let n = 4096;
        let mut acc = 0.0;
        for i in 0..n {
            let (u, v) = halton2(i);
            acc += u * v;
        }
        // E[uv] = 1/4 for the uniform square.
        assert!((acc / n as f64 - 0.25).abs() < 1e-3);
    }

    #[test]
    fn nearest_integer_distance() {
        assert_eq!(frac_dist(3.0), 0.0);
        assert!((frac_dist(2.75) - 0.25).abs() < 1e-15);
        assert!((frac_dist(-0.1) - 0.1).abs() < 1e-15);
    }
}
