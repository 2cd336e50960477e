//! The modular quotient: unit-determinant 2x2 frames up to the integer
//! lattice acting on the left, with the horocycle flow acting on the right.
//!
//! A point is stored through its reduced representative: the frame is
//! translated into the standard fundamental domain (|Re z| <= 1/2,
//! |z| >= 1) of the upper half-plane via z = g.i, and the reducing word is
//! tracked. Observables read the reduced z and the frame angle, so they
//! must be supported away from the domain boundary identifications (the
//! vertical sides are glued by a translation, which preserves the frame
//! angle, so only the unit-circle edge needs clearance).

use crate::numeric::{e, fit_log_log, halton3, integrate_complex, KahanSum};
use crate::weights::{bump_deriv, Weight1d};
use crate::{Error, Result};
use num_complex::Complex64;

pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat_det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn mat_scale(m: &Mat2, s: f64) -> Mat2 {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

fn frobenius_distance(a: &Mat2, b: &Mat2) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += (a[i][j] - b[i][j]).powi(2);
        }
    }
    s.sqrt()
}

/// Upper-triangular unipotent flow matrix.
pub fn u0(t: f64) -> Mat2 {
    [[1.0, t], [0.0, 1.0]]
}

/// Exponential of `s * m` for traceless `m` (closed form).
pub fn exp_traceless(m: &Mat2, s: f64) -> Mat2 {
    debug_assert!((m[0][0] + m[1][1]).abs() < 1e-12);
    let a = s * m[0][0];
    let b = s * m[0][1];
    let c = s * m[1][0];
    let disc = a * a + b * c;
    let (cosh, ratio) = if disc > 1e-24 {
        let l = disc.sqrt();
        (l.cosh(), l.sinh() / l)
    } else if disc < -1e-24 {
        let w = (-disc).sqrt();
        (w.cos(), w.sin() / w)
    } else {
        (1.0 + disc / 2.0, 1.0)
    };
    [[cosh + ratio * a, ratio * b], [ratio * c, cosh - ratio * a]]
}

const MAX_REDUCTION_STEPS: usize = 10_000;

/// Reduces a frame into the fundamental domain; counts generator blocks.
fn reduce_frame(mut h: Mat2) -> Result<(Mat2, usize)> {
    let mut word = 0usize;
    for _ in 0..MAX_REDUCTION_STEPS {
        let (c, d) = (h[1][0], h[1][1]);
        let denom = c * c + d * d;
        if denom < 1e-300 {
            return Err(Error::ReductionUnderflow { im: denom });
        }
        let re = (h[0][0] * c + h[0][1] * d) / denom;
        if re.abs() > 0.5 + 1e-15 {
            let k = (re + 0.5).floor();
            // left-multiply by the inverse translation
            h = [
                [h[0][0] - k * h[1][0], h[0][1] - k * h[1][1]],
                [h[1][0], h[1][1]],
            ];
            word += 1;
            continue;
        }
        // |z|^2 = re^2 + im^2 with im = 1/denom (determinant is kept at 1)
        let abs2 = re * re + 1.0 / (denom * denom);
        if abs2 < 1.0 - 1e-15 {
            // inversion
            h = [[-h[1][0], -h[1][1]], [h[0][0], h[0][1]]];
            word += 1;
            continue;
        }
        // canonical sign for the representative
        if h[1][0] < 0.0 || (h[1][0] == 0.0 && h[1][1] < 0.0) {
            h = mat_scale(&h, -1.0);
        }
        return Ok((h, word));
    }
    Err(Error::ReductionDiverged {
        max_steps: MAX_REDUCTION_STEPS as u32,
    })
}

fn z_of(h: &Mat2) -> Complex64 {
    let (c, d) = (h[1][0], h[1][1]);
    let denom = c * c + d * d;
    Complex64::new((h[0][0] * c + h[0][1] * d) / denom, 1.0 / denom)
}

/// Reduces a point of the upper half-plane into the fundamental domain.
pub fn reduce_z(z: Complex64) -> Result<(Complex64, usize)> {
    if !(z.im > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "point {z} is not in the upper half-plane"
        )));
    }
    let s = z.im.sqrt();
    let (h, word) = reduce_frame([[s, z.re / s], [0.0, 1.0 / s]])?;
    Ok((z_of(&h), word))
}

/// A quotient point, held by its reduced representative frame.
#[derive(Debug, Clone, Copy)]
pub struct QuotientPoint {
    h: Mat2,
    z: Complex64,
    word: usize,
}

impl QuotientPoint {
    pub fn new(g: Mat2) -> Result<Self> {
        let det = mat_det(&g);
        if !det.is_finite() || det < 0.5 || det > 2.0 {
            return Err(Error::InvalidArgument(format!(
                "frame determinant {det} too far from 1"
            )));
        }
        let (h, word) = reduce_frame(mat_scale(&g, 1.0 / det.sqrt()))?;
        Ok(QuotientPoint {
            h,
            z: z_of(&h),
            word,
        })
    }

    pub fn identity() -> Self {
        QuotientPoint {
            h: IDENTITY,
            z: Complex64::new(0.0, 1.0),
            word: 0,
        }
    }

    /// Point over a reduced upper half-plane coordinate with frame angle 0.
    pub fn from_z(z: Complex64) -> Result<Self> {
        if !(z.im > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "point {z} is not in the upper half-plane"
            )));
        }
        let s = z.im.sqrt();
        QuotientPoint::new([[s, z.re / s], [0.0, 1.0 / s]])
    }

    /// The reduced representative (determinant 1, canonical sign).
    pub fn matrix(&self) -> Mat2 {
        self.h
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    /// Angle of the bottom row of the reduced frame, in [0, pi).
    pub fn frame_angle(&self) -> f64 {
        self.h[1][0].atan2(self.h[1][1])
    }

    pub fn word_length(&self) -> usize {
        self.word
    }

    /// Right translation by an arbitrary unit-determinant matrix.
    pub fn translate(&self, m: &Mat2) -> Result<Self> {
        let g = mat_mul(&self.h, m);
        let det = mat_det(&g);
        let (h, word) = reduce_frame(mat_scale(&g, 1.0 / det.sqrt()))?;
        Ok(QuotientPoint {
            h,
            z: z_of(&h),
            word,
        })
    }
}

/// Time-t horocycle image of a point.
pub fn horocycle(p: &QuotientPoint, t: f64) -> Result<QuotientPoint> {
    if !(t.abs() <= 1e9) {
        return Err(Error::InvalidArgument(format!(
            "flow time {t} beyond stable range"
        )));
    }
    p.translate(&u0(t))
}

/// Distance between quotient points: smallest frame distance over a ball
/// of short lattice words (the reduced representatives of equal points can
/// differ by a boundary identification).
pub fn quotient_distance(p: &QuotientPoint, q: &QuotientPoint) -> f64 {
    static BALL: std::sync::OnceLock<Vec<Mat2>> = std::sync::OnceLock::new();
    let ball = BALL.get_or_init(|| {
        let gens: [Mat2; 3] = [
            [[1.0, 1.0], [0.0, 1.0]],
            [[1.0, -1.0], [0.0, 1.0]],
            [[0.0, -1.0], [1.0, 0.0]],
        ];
        let mut words = vec![IDENTITY];
        for g in &gens {
            words.push(*g);
        }
        for g in &gens {
            for h in &gens {
                words.push(mat_mul(g, h));
            }
        }
        let mut out: Vec<Mat2> = Vec::new();
        for w in words {
            for m in [w, mat_scale(&w, -1.0)] {
                if !out.iter().any(|x| frobenius_distance(x, &m) < 1e-9) {
                    out.push(m);
                }
            }
        }
        out
    });
    ball.iter()
        .map(|g| frobenius_distance(&mat_mul(g, &p.h), &q.h))
        .fold(f64::INFINITY, f64::min)
}

/// Lie algebra directions used for derivatives: the flow generator, the
/// diagonal direction, and the opposite unipotent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
    Z,
}

impl Direction {
    pub fn matrix(self) -> Mat2 {
        match self {
            Direction::X => [[0.0, 1.0], [0.0, 0.0]],
            Direction::Y => [[0.5, 0.0], [0.0, -0.5]],
            Direction::Z => [[0.0, 0.0], [1.0, 0.0]],
        }
    }
}

/// Real observables on the quotient, evaluated from the reduced point.
#[derive(Debug, Clone)]
pub enum ObservableKind {
    Const(f64),
    /// Radial bump around `center` in the half-plane, vanishing for
    /// |z - center| >= width.
    Bump {
        center: Complex64,
        width: f64,
    },
    /// The same bump carrying the frame-angle factor cos(2 m theta).
    Angular {
        center: Complex64,
        width: f64,
        m: u32,
    },
}

#[derive(Debug, Clone)]
pub struct Observable {
    kind: ObservableKind,
    offset: f64,
    zero_average: bool,
}

impl Observable {
    pub fn constant(v: f64) -> Self {
        Observable {
            kind: ObservableKind::Const(v),
            offset: 0.0,
            zero_average: v == 0.0,
        }
    }

    pub fn bump(center: Complex64, width: f64) -> Result<Self> {
        Self::check_support(center, width)?;
        Ok(Observable {
            kind: ObservableKind::Bump { center, width },
            offset: 0.0,
            zero_average: false,
        })
    }

    pub fn angular(center: Complex64, width: f64, m: u32) -> Result<Self> {
        Self::check_support(center, width)?;
        if m == 0 {
            return Err(Error::InvalidArgument(
                "angular frequency must be positive; use a plain bump".into(),
            ));
        }
        Ok(Observable {
            kind: ObservableKind::Angular { center, width, m },
            // the angle average of cos(2 m theta) vanishes identically
            offset: 0.0,
            zero_average: true,
        })
    }

    fn check_support(center: Complex64, width: f64) -> Result<()> {
        if !(width > 0.0) || !center.im.is_finite() {
            return Err(Error::InvalidArgument("bad observable parameters".into()));
        }
        // keep the support clear of the unit-circle edge of the domain,
        // where reduced coordinates jump discontinuously
        if center.im - width < 1.05 {
            return Err(Error::InvalidArgument(format!(
                "support of bump at {center} (width {width}) reaches the folded edge"
            )));
        }
        Ok(())
    }

    pub fn is_zero_average(&self) -> bool {
        self.zero_average
    }

    /// The constant value when the observable does not depend on the point.
    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            ObservableKind::Const(v) => Some(v - self.offset),
            _ => None,
        }
    }

    /// Short text form for logs and result records.
    pub fn label(&self) -> String {
        let base = match self.kind {
            ObservableKind::Const(v) => format!("const({v})"),
            ObservableKind::Bump { center, width } => {
                format!("bump({:.3}{:+.3}i,{width})", center.re, center.im)
            }
            ObservableKind::Angular { center, width, m } => {
                format!("angular({:.3}{:+.3}i,{width},{m})", center.re, center.im)
            }
        };
        if self.offset != 0.0 {
            format!("{base}-{:.6e}", self.offset)
        } else {
            base
        }
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Value from reduced coordinates and frame angle.
    pub fn eval_at(&self, z: Complex64, theta: f64) -> f64 {
        let raw = match self.kind {
            ObservableKind::Const(v) => v,
            ObservableKind::Bump { center, width } => bump_deriv(0, (z - center).norm() / width),
            ObservableKind::Angular { center, width, m } => {
                bump_deriv(0, (z - center).norm() / width) * (2.0 * m as f64 * theta).cos()
            }
        };
        raw - self.offset
    }

    pub fn eval(&self, p: &QuotientPoint) -> f64 {
        self.eval_at(p.z(), p.frame_angle())
    }

    /// Sup-norm bound from the construction.
    pub fn sup_bound(&self) -> f64 {
        let raw = match self.kind {
            ObservableKind::Const(v) => v.abs(),
            ObservableKind::Bump { .. } | ObservableKind::Angular { .. } => bump_deriv(0, 0.0),
        };
        raw + self.offset.abs()
    }

    /// Quasi-Monte Carlo estimate of the quotient-measure mean, sampling
    /// the domain with hyperbolic density and the frame angle uniformly.
    pub fn mean_estimate(&self, samples: usize) -> f64 {
        let mut acc = KahanSum::new();
        for i in 0..samples {
            let (u, v, w) = halton3(i as u64);
            let x = u - 0.5;
            let floor = (1.0 - x * x).sqrt();
            let y = floor / (1.0 - v);
            let theta = std::f64::consts::PI * w;
            let g = self.eval_at(Complex64::new(x, y), theta) / floor;
            acc.add(g * 3.0 / std::f64::consts::PI);
        }
        acc.value() / samples as f64
    }
}

/// Subtracts the estimated mean, producing a zero-average observable.
pub fn zero_average_projection(f: &Observable, samples: usize) -> Result<Observable> {
    if samples < 10_000 {
        return Err(Error::InvalidArgument(format!(
            "{samples} samples are too few for the mean estimate"
        )));
    }
    let mean = f.mean_estimate(samples);
    if !mean.is_finite() {
        return Err(Error::InvalidArgument(
            "observable mean estimate diverged".into(),
        ));
    }
    Ok(Observable {
        kind: f.kind.clone(),
        offset: f.offset + mean,
        zero_average: true,
    })
}

const LIE_STEP: f64 = 1e-4;

/// Derivative of `f` along `exp(s direction)` applied on the right.
pub fn derivative_along(f: &Observable, dir: &Mat2, p: &QuotientPoint) -> Result<f64> {
    let fwd = f.eval(&p.translate(&exp_traceless(dir, LIE_STEP))?);
    let bwd = f.eval(&p.translate(&exp_traceless(dir, -LIE_STEP))?);
    Ok((fwd - bwd) / (2.0 * LIE_STEP))
}

pub fn lie_derivative(f: &Observable, d: Direction, p: &QuotientPoint) -> Result<f64> {
    derivative_along(f, &d.matrix(), p)
}

/// Work cap for the oscillatory orbit integral.
const MAX_PANELS: f64 = 1e7;

/// `int w(t/P) f(p u0(t)) e(c t) dt` by panel quadrature; panels are kept
/// at unit scale or finer since the orbit varies on t-scale one even when
/// the cutoff is much wider.
pub fn twisted_average(
    f: &Observable,
    p: &QuotientPoint,
    w: &Weight1d,
    big_p: f64,
    c: f64,
) -> Result<Complex64> {
    if !(big_p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff scale {big_p} must be at least 1"
        )));
    }
    let panel = (big_p / 8.0).min(big_p / (8.0 * (1.0 + c.abs()))).min(1.0);
    if 2.0 * big_p / panel > MAX_PANELS {
        return Err(Error::BudgetExceeded {
            required: (2.0 * big_p / panel) as u64,
            budget: MAX_PANELS as u64,
        });
    }
    let mut failure = None;
    let value = integrate_complex(-big_p, big_p, panel, |t| {
        let weight = w.value(t / big_p);
        if weight == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        match horocycle(p, t) {
            Ok(q) => weight * f.eval(&q) * e(c * t),
            Err(err) => {
                failure = Some(err);
                Complex64::new(0.0, 0.0)
            }
        }
    });
    match failure {
        Some(err) => Err(err),
        None => Ok(value),
    }
}

/// Largest sampled first-order derivative of the flow-translated
/// observable, for trend studies of the derivative growth in t.
pub fn translated_derivative_sup(
    f: &Observable,
    d: Direction,
    t: f64,
    base_points: &[QuotientPoint],
) -> Result<f64> {
    let dir = d.matrix();
    let mut sup = 0.0f64;
    for p in base_points {
        // derivative of x -> f(x u0(t)) at p
        let fwd = f.eval(&p.translate(&mat_mul(&exp_traceless(&dir, LIE_STEP), &u0(t)))?);
        let bwd = f.eval(&p.translate(&mat_mul(&exp_traceless(&dir, -LIE_STEP), &u0(t)))?);
        sup = sup.max(((fwd - bwd) / (2.0 * LIE_STEP)).abs());
    }
    Ok(sup)
}

/// Log-log slope of the derivative growth over `ts`.
pub fn derivative_growth_slope(
    f: &Observable,
    d: Direction,
    ts: &[f64],
    base_points: &[QuotientPoint],
) -> Result<f64> {
    let mut pts = Vec::with_capacity(ts.len());
    for &t in ts {
        let s = translated_derivative_sup(f, d, t, base_points)?;
        if s > 0.0 {
            pts.push((1.0 + t.abs(), s));
        }
    }
    if pts.len() < 3 {
        return Err(Error::NotEnoughData {
            needed: 3,
            got: pts.len(),
        });
    }
    Ok(fit_log_log(&pts).0)
}

/// Quasi-random interior sample points for sup estimates.
pub fn sample_points(count: usize) -> Vec<QuotientPoint> {
    (0..count)
        .filter_map(|i| {
            let (u, v, w) = halton3(i as u64);
            let x = 0.98 * (u - 0.5);
            let floor = (1.0 - x * x).sqrt();
            let y = (floor + 0.01) / (1.0 - 0.95 * v);
            let theta = std::f64::consts::PI * w;
            let (s, c) = (theta.sin(), theta.cos());
            let rot = [[c, -s], [s, c]];
            let half: Mat2 = [[y.sqrt(), x / y.sqrt()], [0.0, 1.0 / y.sqrt()]];
            QuotientPoint::new(mat_mul(&half, &rot)).ok()
        })
        .collect()
}
