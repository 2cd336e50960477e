//! Experiment drivers: sparse averages over quadric lattice points, the
//! sharp-versus-smooth cutoff comparison, decay studies, and Gauss-sum
//! surveys, with reproducible CSV and JSON emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::budget::{Budget, DEFAULT_STEPS};
use crate::circle::DEFAULT_EPS0;
use crate::error::Error;
use crate::expsums::{
    cancellation_certificate, CancellationReport, Cutoff, OrbitTable, ProductObservable,
    ProductPoint,
};
use crate::numeric::{fit_log_log, KahanSum};
use crate::quadform::{local_solubility, QuadraticForm};
use crate::quadric_enum::{enumerate_zeros, shell_count};
use crate::quotient::{zero_average_projection, Observable, QuotientPoint};
use crate::weights::{ProductWeight, Weight1d};
use crate::Result;

/// How lattice points are weighted in a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CutoffMode {
    Sharp,
    Smooth,
}

/// Which observable the run evaluates along the orbits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ObservableMode {
    /// Per-coordinate bump, recentered to zero quotient average.
    ZeroAverageBump,
    /// The constant 1; control runs must average to exactly 1.
    One,
}

/// Starting frame for the orbits.
///
/// The integer flow fixes the identity coset (the flow matrices land in the
/// lattice), so runs that need a moving orbit must start elsewhere: either
/// at a chosen height (orbit walks a closed horocycle) or at a
/// lower-triangular frame (orbit is non-periodic for irrational `c`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaseSpec {
    Identity,
    Height(Complex64),
    Lower(f64),
}

impl BaseSpec {
    fn label(&self) -> String {
        match self {
            BaseSpec::Identity => "identity".into(),
            BaseSpec::Height(z) => format!("z:{}", format_complex(*z)),
            BaseSpec::Lower(c) => format!("lower:{c}"),
        }
    }

    pub fn point(&self) -> Result<QuotientPoint> {
        match self {
            BaseSpec::Identity => Ok(QuotientPoint::identity()),
            BaseSpec::Height(z) => QuotientPoint::from_z(*z),
            BaseSpec::Lower(c) => QuotientPoint::new([[1.0, 0.0], [*c, 1.0]]),
        }
    }
}

/// A full experiment description, parsed from a flat `key = value` file.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub form: QuadraticForm,
    pub form_label: String,
    pub observable: ObservableMode,
    pub center: Complex64,
    pub width: f64,
    pub base: BaseSpec,
    pub p_min: f64,
    pub p_max: f64,
    pub p_step: f64,
    pub q: Option<u64>,
    pub eps0: f64,
    pub delta: f64,
    pub h: i64,
    pub cutoff: CutoffMode,
    pub seed: u64,
    pub budget: u64,
    pub mean_samples: usize,
}

fn default_form() -> QuadraticForm {
    QuadraticForm::new(
        5,
        vec![
            1, 0, 0, 0, 0, //
            0, 1, 0, 0, 0, //
            0, 0, 1, 0, 0, //
            0, 0, 0, 1, 0, //
            0, 0, 0, 0, -1,
        ],
    )
    .expect("default form is regular")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            form: default_form(),
            form_label: "diag(1,1,1,1,-1)".into(),
            observable: ObservableMode::ZeroAverageBump,
            center: Complex64::new(0.0, 2.0),
            width: 0.5,
            base: BaseSpec::Lower(0.618_033_988_749_894_9),
            p_min: 10.0,
            p_max: 60.0,
            p_step: 10.0,
            q: None,
            eps0: DEFAULT_EPS0,
            delta: 0.1,
            h: 2,
            cutoff: CutoffMode::Sharp,
            seed: 0,
            budget: DEFAULT_STEPS,
            mean_samples: 20_000,
        }
    }
}

fn parse_complex(s: &str) -> Result<Complex64> {
    let s = s.trim();
    let bad = || Error::Parse(format!("cannot read '{s}' as a complex number"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some(body) = s.strip_suffix('i') {
        // Split off a trailing imaginary part at the last sign that is not
        // the leading one and not part of an exponent.
        let split = body
            .char_indices()
            .rev()
            .find(|&(i, ch)| {
                (ch == '+' || ch == '-') && i > 0 && !matches!(body.as_bytes()[i - 1], b'e' | b'E')
            })
            .map(|(i, _)| i);
        let (re_str, im_str) = match split {
            Some(i) => (&body[..i], &body[i..]),
            None => ("0", body),
        };
        let re: f64 = if re_str.is_empty() {
            0.0
        } else {
            re_str.trim().parse().map_err(|_| bad())?
        };
        let im: f64 = match im_str.trim() {
            "" | "+" => 1.0,
            "-" => -1.0,
            t => t.parse().map_err(|_| bad())?,
        };
        Ok(Complex64::new(re, im))
    } else {
        let re: f64 = s.parse().map_err(|_| bad())?;
        Ok(Complex64::new(re, 0.0))
    }
}

fn format_complex(z: Complex64) -> String {
    if z.im >= 0.0 {
        format!("{}+{}i", z.re, z.im)
    } else {
        format!("{}{}i", z.re, z.im)
    }
}

fn parse_form(value: &str) -> Result<(QuadraticForm, String)> {
    let v = value.trim();
    if let Some(body) = v.strip_prefix("diag(").and_then(|b| b.strip_suffix(')')) {
        let entries: Vec<i64> = body
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::Parse(format!("bad diagonal entry '{t}'")))
            })
            .collect::<Result<_>>()?;
        let n = entries.len();
        let mut full = vec![0i64; n * n];
        for (i, &d) in entries.iter().enumerate() {
            full[i * n + i] = d;
        }
        Ok((QuadraticForm::new(n, full)?, v.to_string()))
    } else {
        let text = std::fs::read_to_string(v)
            .map_err(|e| Error::Io(format!("cannot read form file '{v}': {e}")))?;
        Ok((QuadraticForm::from_text(&text)?, v.to_string()))
    }
}

fn parse_base(value: &str) -> Result<BaseSpec> {
    let v = value.trim();
    if v == "identity" {
        return Ok(BaseSpec::Identity);
    }
    if let Some(rest) = v.strip_prefix("z:") {
        return Ok(BaseSpec::Height(parse_complex(rest)?));
    }
    if let Some(rest) = v.strip_prefix("lower:") {
        let c: f64 = rest
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad frame entry '{rest}'")))?;
        return Ok(BaseSpec::Lower(c));
    }
    Ok(BaseSpec::Height(parse_complex(v)?))
}

impl ExperimentConfig {
    /// Parses a flat `key = value` description.  Blank lines and `#`
    /// comments are skipped; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected 'key = value'", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let num = |name: &str| -> Result<f64> {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad numeric value for {name}: '{value}'")))
            };
            match key {
                "form" => {
                    let (form, label) = parse_form(value)?;
                    cfg.form = form;
                    cfg.form_label = label;
                }
                "observable.kind" => {
                    cfg.observable = match value {
                        "bump" => ObservableMode::ZeroAverageBump,
                        "one" => ObservableMode::One,
                        other => {
                            return Err(Error::Parse(format!(
                                "observable.kind must be 'bump' or 'one', got '{other}'"
                            )))
                        }
                    };
                }
                "observable.center" => cfg.center = parse_complex(value)?,
                "observable.width" => cfg.width = num("observable.width")?,
                "base" => cfg.base = parse_base(value)?,
                "p.min" => cfg.p_min = num("p.min")?,
                "p.max" => cfg.p_max = num("p.max")?,
                "p.step" => cfg.p_step = num("p.step")?,
                "q" => {
                    cfg.q = Some(
                        value
                            .parse::<u64>()
                            .map_err(|_| Error::Parse(format!("bad arc parameter '{value}'")))?,
                    )
                }
                "eps0" => cfg.eps0 = num("eps0")?,
                "delta" => cfg.delta = num("delta")?,
                "h" => {
                    cfg.h = value
                        .parse::<i64>()
                        .map_err(|_| Error::Parse(format!("bad shift length '{value}'")))?
                }
                "cutoff" => {
                    cfg.cutoff = match value {
                        "sharp" => CutoffMode::Sharp,
                        "smooth" => CutoffMode::Smooth,
                        other => {
                            return Err(Error::Parse(format!(
                                "cutoff must be 'sharp' or 'smooth', got '{other}'"
                            )))
                        }
                    };
                }
                "seed" => {
                    cfg.seed = value
                        .parse::<u64>()
                        .map_err(|_| Error::Parse(format!("bad seed '{value}'")))?
                }
                "budget" => {
                    cfg.budget = value
                        .parse::<u64>()
                        .map_err(|_| Error::Parse(format!("bad budget '{value}'")))?
                }
                "mean.samples" => {
                    cfg.mean_samples = value
                        .parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad sample count '{value}'")))?
                }
                other => return Err(Error::Parse(format!("unknown key '{other}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_min >= 2.0 && self.p_max >= self.p_min && self.p_step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need 2 <= p.min <= p.max and p.step > 0, got {} / {} / {}",
                self.p_min, self.p_max, self.p_step
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "smoothing width must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cutoff exponent must lie in (0, 1), got {}",
                self.eps0
            )));
        }
        if self.h < 1 {
            return Err(Error::InvalidArgument(format!(
                "shift length must be positive, got {}",
                self.h
            )));
        }
        Ok(())
    }

    /// The increasing schedule of box scales.
    pub fn schedule(&self) -> Vec<f64> {
        let mut ps = Vec::new();
        let mut p = self.p_min;
        while p <= self.p_max + 1e-9 {
            ps.push(p);
            p += self.p_step;
        }
        ps
    }

    pub fn work_budget(&self) -> Budget {
        Budget::new(self.budget)
    }

    /// Canonical flat echo of every parameter, for manifests.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("form".into(), self.form_label.clone());
        m.insert(
            "observable.kind".into(),
            match self.observable {
                ObservableMode::ZeroAverageBump => "bump".into(),
                ObservableMode::One => "one".into(),
            },
        );
        m.insert("observable.center".into(), format_complex(self.center));
        m.insert("observable.width".into(), self.width.to_string());
        m.insert("base".into(), self.base.label());
        m.insert("p.min".into(), self.p_min.to_string());
        m.insert("p.max".into(), self.p_max.to_string());
        m.insert("p.step".into(), self.p_step.to_string());
        m.insert(
            "q".into(),
            self.q
                .map(|q| q.to_string())
                .unwrap_or_else(|| "auto".into()),
        );
        m.insert("eps0".into(), self.eps0.to_string());
        m.insert("delta".into(), self.delta.to_string());
        m.insert("h".into(), self.h.to_string());
        m.insert(
            "cutoff".into(),
            match self.cutoff {
                CutoffMode::Sharp => "sharp".into(),
                CutoffMode::Smooth => "smooth".into(),
            },
        );
        m.insert("seed".into(), self.seed.to_string());
        m.insert("budget".into(), self.budget.to_string());
        m.insert("mean.samples".into(), self.mean_samples.to_string());
        m
    }

    /// Builds the product observable the config describes.
    pub fn build_observable(&self) -> Result<ProductObservable> {
        let n = self.form.n();
        match self.observable {
            ObservableMode::One => Ok(ProductObservable::constant_one(n)),
            ObservableMode::ZeroAverageBump => {
                let bump = Observable::bump(self.center, self.width)?;
                let centered = zero_average_projection(&bump, self.mean_samples)?;
                ProductObservable::uniform(centered, n)
            }
        }
    }

    pub fn build_base(&self) -> Result<ProductPoint> {
        ProductPoint::uniform(self.base.point()?, self.form.n())
    }

    fn build_cutoff(&self) -> Result<Cutoff> {
        Ok(match self.cutoff {
            CutoffMode::Sharp => Cutoff::Sharp,
            CutoffMode::Smooth => {
                Cutoff::Smooth(ProductWeight::uniform(Weight1d::Bump, self.form.n())?)
            }
        })
    }
}

/// One scheduled scale of a sparse-average run.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentRecord {
    pub p: f64,
    /// Number of zeros in the box (origin included).
    pub count: u64,
    /// The weighted orbit sum over the zeros.
    pub sigma: f64,
    /// `sigma / count`.
    pub average: f64,
    /// Construction bound on `|f|`, so `|average| <= f_sup` always.
    pub f_sup: f64,
    /// Wall time; excluded from the byte-identical outputs.
    pub wall_ms: u128,
}

/// Runs the sparse average over the config's schedule.
///
/// For each scale the zero set is enumerated, each coordinate's orbit value
/// is read from a per-coordinate flow table, and the observable values are
/// accumulated under the configured cutoff.
pub fn sparse_average(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    let budget = cfg.work_budget();
    let sol = local_solubility(&cfg.form, None, None)?;
    if !sol.unobstructed {
        return Err(Error::InvalidArgument(
            "form is locally obstructed: the zero count cannot grow".into(),
        ));
    }
    let obs = cfg.build_observable()?;
    let base = cfg.build_base()?;
    let w = cfg.build_cutoff()?;
    let f_sup = obs.sup_bound();

    let mut records = Vec::new();
    for p in cfg.schedule() {
        let start = Instant::now();
        let zeros = enumerate_zeros(&cfg.form, p, &budget)?;
        let count = zeros.count();
        if count <= 1 && p >= 4.0 {
            return Err(Error::EmptyCount { p });
        }
        let table = OrbitTable::build(&obs, &base, zeros.bound())?;
        let inv_p = 1.0 / p;
        let mut sigma = KahanSum::default();
        for x in zeros.iter() {
            sigma.add(w.value_at(x, inv_p) * table.value(x));
        }
        let sigma = sigma.value();
        records.push(ExperimentRecord {
            p,
            count,
            sigma,
            average: sigma / count as f64,
            f_sup,
            wall_ms: start.elapsed().as_millis(),
        });
    }
    Ok(records)
}

/// Sharp-versus-smooth comparison at one scale.
#[derive(Clone, Debug, Serialize)]
pub struct SmoothingReport {
    pub p: f64,
    pub delta: f64,
    pub sigma_sharp: f64,
    pub sigma_smooth: f64,
    pub difference: f64,
    pub f_sup: f64,
    /// Zeros within `delta * p` of the box boundary.
    pub shell: u64,
    /// `f_sup * shell`, the proven ceiling on the difference.
    pub bound: f64,
    pub holds: bool,
    pub slack: f64,
}

/// Compares the sharp indicator against a flat-top weight that equals 1 on
/// the inner `(1-delta)`-box, at the largest scheduled scale.
///
/// Both sums run over the same zero set, and the difference picks up only
/// boundary-shell points, so it is at most `sup|f|` times the shell count.
pub fn smoothing_comparison(cfg: &ExperimentConfig, delta: f64) -> Result<SmoothingReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "smoothing width must lie in (0, 1), got {delta}"
        )));
    }
    let budget = cfg.work_budget();
    let p = cfg.p_max;
    let obs = cfg.build_observable()?;
    let base = cfg.build_base()?;
    let n = cfg.form.n();
    let flat = Cutoff::Smooth(ProductWeight::uniform(Weight1d::plateau(delta)?, n)?);
    let f_sup = obs.sup_bound();

    let zeros = enumerate_zeros(&cfg.form, p, &budget)?;
    let table = OrbitTable::build(&obs, &base, zeros.bound())?;
    let inv_p = 1.0 / p;
    let mut sharp = KahanSum::default();
    let mut smooth = KahanSum::default();
    for x in zeros.iter() {
        let f = table.value(x);
        sharp.add(f);
        smooth.add(flat.value_at(x, inv_p) * f);
    }
    let sigma_sharp = sharp.value();
    let sigma_smooth = smooth.value();
    let difference = (sigma_sharp - sigma_smooth).abs();
    let shell = shell_count(&cfg.form, p, delta, &budget)?;
    let bound = f_sup * shell as f64;
    let slack = bound - difference;
    Ok(SmoothingReport {
        p,
        delta,
        sigma_sharp,
        sigma_smooth,
        difference,
        f_sup,
        shell,
        bound,
        holds: difference <= bound + 1e-9 * (1.0 + bound),
        slack,
    })
}

/// One row of a decay study.
#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub p: f64,
    pub count: u64,
    pub sigma: f64,
    pub average: f64,
    pub used_in_fit: bool,
}

/// Slope fit of `log |sigma|` against `log P`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayStudy {
    pub rows: Vec<DecayRow>,
    pub fitted_exponent: f64,
    pub fitted_amplitude: f64,
    /// The no-cancellation reference slope `n - 2`.
    pub reference: f64,
    /// `reference - fitted_exponent`; positive means the sum decays.
    pub gap: f64,
    pub dropped: usize,
}

/// Fits a power law through `(p, value)` pairs, dropping exact zeros.
pub fn decay_fit(points: &[(f64, f64)]) -> Result<(f64, f64, usize)> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(_, v)| v != 0.0)
        .map(|&(p, v)| (p, v.abs()))
        .collect();
    if usable.len() < 2 {
        return Err(Error::NotEnoughData {
            needed: 2,
            got: usable.len(),
        });
    }
    let (slope, amp) = fit_log_log(&usable);
    Ok((slope, amp, points.len() - usable.len()))
}

fn decay_from_records(cfg: &ExperimentConfig, records: &[ExperimentRecord]) -> Result<DecayStudy> {
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.p, r.sigma)).collect();
    let (fitted_exponent, fitted_amplitude, dropped) = decay_fit(&points)?;
    let reference = cfg.form.n() as f64 - 2.0;
    let rows = records
        .iter()
        .map(|r| DecayRow {
            p: r.p,
            count: r.count,
            sigma: r.sigma,
            average: r.average,
            used_in_fit: r.sigma != 0.0,
        })
        .collect();
    Ok(DecayStudy {
        rows,
        fitted_exponent,
        fitted_amplitude,
        reference,
        gap: reference - fitted_exponent,
        dropped,
    })
}

/// Runs the schedule and fits the decay exponent of `|sigma|`.
pub fn decay_study(cfg: &ExperimentConfig) -> Result<DecayStudy> {
    let records = sparse_average(cfg)?;
    decay_from_records(cfg, &records)
}

/// Sweeps Gauss sums for the config's form up to `q_max` and checks the
/// square-root cancellation ceiling on every sampled sum.
pub fn gauss_sum_survey(
    cfg: &ExperimentConfig,
    q_max: u64,
    samples: usize,
) -> Result<CancellationReport> {
    cancellation_certificate(&cfg.form, q_max, samples, cfg.seed, &cfg.work_budget())
}

/// CSV of sparse-average records.  Wall times are deliberately left out so
/// that rerunning a config reproduces the bytes.
pub fn records_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from("p,count,sigma,average\n");
    for r in records {
        writeln!(out, "{},{},{},{}", r.p, r.count, r.sigma, r.average).expect("string write");
    }
    out
}

pub fn decay_csv(study: &DecayStudy) -> String {
    let mut out = String::from("p,count,sigma,average,used_in_fit\n");
    for r in &study.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.p, r.count, r.sigma, r.average, r.used_in_fit
        )
        .expect("string write");
    }
    out
}

pub fn gauss_csv(report: &CancellationReport) -> String {
    let mut out = String::from("q,a,v_hash,abs,ratio,bound\n");
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.q, r.a, r.v_hash, r.abs, r.ratio, r.bound
        )
        .expect("string write");
    }
    out
}

/// The JSON run manifest: config echo, versions, results, timings.
///
/// Everything except the `timings_ms` object is byte-identical across
/// reruns of the same config and seed.
pub fn run_manifest(
    cfg: &ExperimentConfig,
    results: serde_json::Value,
    timings_ms: &BTreeMap<String, u128>,
) -> serde_json::Value {
    json!({
        "config": cfg.echo(),
        "versions": {
            "quadric-core": env!("CARGO_PKG_VERSION"),
        },
        "results": results,
        "timings_ms": timings_ms,
    })
}

/// Everything `quadric run` emits.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<ExperimentRecord>,
    pub smoothing: SmoothingReport,
    pub decay: DecayStudy,
    pub gauss: CancellationReport,
    pub manifest: serde_json::Value,
    pub records_csv: String,
    pub decay_csv: String,
    pub gauss_csv: String,
}

/// Full batch driver: sparse average, smoothing comparison, decay fit, and
/// Gauss-sum survey, assembled into CSV bodies and a JSON manifest.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut timings: BTreeMap<String, u128> = BTreeMap::new();

    let t0 = Instant::now();
    let records = sparse_average(cfg)?;
    timings.insert("sparse_average".into(), t0.elapsed().as_millis());

    let t0 = Instant::now();
    let smoothing = smoothing_comparison(cfg, cfg.delta)?;
    timings.insert("smoothing_comparison".into(), t0.elapsed().as_millis());

    let t0 = Instant::now();
    let decay = decay_from_records(cfg, &records)?;
    timings.insert("decay_fit".into(), t0.elapsed().as_millis());

    let t0 = Instant::now();
    let q_max = cfg.q.unwrap_or(40);
    let gauss = gauss_sum_survey(cfg, q_max, 200)?;
    timings.insert("gauss_survey".into(), t0.elapsed().as_millis());

    let results = json!({
        "records": records.iter().map(|r| json!({
            "p": r.p,
            "count": r.count,
            "sigma": r.sigma,
            "average": r.average,
        })).collect::<Vec<_>>(),
        "smoothing": {
            "p": smoothing.p,
            "delta": smoothing.delta,
            "difference": smoothing.difference,
            "shell": smoothing.shell,
            "bound": smoothing.bound,
            "holds": smoothing.holds,
        },
        "decay": {
            "fitted_exponent": decay.fitted_exponent,
            "reference": decay.reference,
            "gap": decay.gap,
            "dropped": decay.dropped,
        },
        "gauss": {
            "samples": gauss.samples,
            "max_ratio": gauss.max_ratio,
            "all_within_slack": gauss.all_within_slack,
        },
    });
    let manifest = run_manifest(cfg, results, &timings);
    let records_csv = records_csv(&records);
    let decay_csv = decay_csv(&decay);
    let gauss_csv = gauss_csv(&gauss);
    Ok(RunOutput {
        records,
        smoothing,
        decay,
        gauss,
        manifest,
        records_csv,
        decay_csv,
        gauss_csv,
    })
}
