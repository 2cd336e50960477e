use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use quadric_core::budget::{Budget, DEFAULT_STEPS};
use quadric_core::circle::{locate, m1_threshold, Region, DEFAULT_EPS0};
use quadric_core::experiments::{self, ExperimentConfig};
use quadric_core::expsums::{
    cancellation_certificate, weighted_exp_sum, Cutoff, ProductObservable, ProductPoint,
};
use quadric_core::numeric::circle_dist;
use quadric_core::quadform::QuadraticForm;
use quadric_core::quadric_enum::enumerate_zeros;
use quadric_core::verify;
use quadric_core::weights::{ProductWeight, Weight1d};

/// Desk-scale laboratory for lattice points on quadrics, twisted
/// exponential sums, arc decompositions, and orbit averages.
#[derive(Parser)]
#[command(name = "quadric", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count lattice zeros of a form in growing boxes; CSV on stdout.
    Count {
        /// File holding the form as whitespace-separated matrix rows
        #[arg(long)]
        form: PathBuf,
        /// Largest box scale
        #[arg(long)]
        pmax: f64,
        /// Scale increment (also the first scale unless --pmin is given)
        #[arg(long)]
        pstep: f64,
        /// First box scale
        #[arg(long)]
        pmin: Option<f64>,
        /// Dump the zeros at the largest scale, one vector per line
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Elementary-step budget
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        budget: u64,
    },
    /// Sample complete Gauss sums against their modulus bound; CSV on stdout.
    Gauss {
        /// File holding the form as whitespace-separated matrix rows
        #[arg(long)]
        form: PathBuf,
        /// Largest modulus to sample
        #[arg(long)]
        qmax: u64,
        /// Number of sampled sums
        #[arg(long)]
        samples: usize,
        /// Seed for the sampler
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Elementary-step budget
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        budget: u64,
    },
    /// Evaluate one weighted exponential sum; JSON on stdout.
    Expsum {
        /// File holding the form as whitespace-separated matrix rows
        #[arg(long)]
        form: PathBuf,
        /// Phase of the sum
        #[arg(long)]
        alpha: f64,
        /// Box scale
        #[arg(long)]
        p: f64,
        /// Use the smooth bump cutoff instead of the sharp box
        #[arg(long)]
        smooth: bool,
        /// Elementary-step budget
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        budget: u64,
    },
    /// Locate phases in the arc decomposition; CSV on stdout.
    Arcs {
        /// Arc parameter (largest denominator)
        #[arg(long)]
        q: u64,
        /// Single phase to locate
        #[arg(long, conflicts_with = "scan")]
        alpha: Option<f64>,
        /// Scan the whole circle with this step
        #[arg(long)]
        scan: Option<f64>,
        /// Box scale for the region cutoff (default: q^20, the scale whose
        /// default arc parameter is q)
        #[arg(long)]
        p: Option<f64>,
        /// Region cutoff exponent
        #[arg(long, default_value_t = DEFAULT_EPS0)]
        eps0: f64,
    },
    /// Run the experiment batch described by a key = value config file.
    Run {
        /// Config file path
        config: PathBuf,
        /// Output directory for CSVs and the manifest
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the full acceptance checklist; nonzero exit on any failure.
    Verify,
    /// Render a run CSV as a standalone SVG of the decay curve.
    Plot {
        /// CSV produced by `quadric run` (records.csv or decay.csv)
        csv: PathBuf,
        /// Output file (default: the CSV path with an .svg extension)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_form(path: &Path) -> Result<QuadraticForm> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading form file {}", path.display()))?;
    Ok(QuadraticForm::from_text(&text)?)
}

fn cmd_count(
    form: &Path,
    pmax: f64,
    pstep: f64,
    pmin: Option<f64>,
    dump: Option<&Path>,
    budget: u64,
) -> Result<()> {
    let f = read_form(form)?;
    let budget = Budget::new(budget);
    if pstep <= 0.0 || pmax <= 0.0 {
        bail!("scales must be positive, got pmax = {pmax}, pstep = {pstep}");
    }
    println!("P,N_F,seconds");
    let mut p = pmin.unwrap_or(pstep);
    let mut last = None;
    while p <= pmax + 1e-9 {
        let start = Instant::now();
        let zeros = enumerate_zeros(&f, p, &budget)?;
        let seconds = start.elapsed().as_secs_f64();
        println!("{},{},{:.3}", p, zeros.count(), seconds);
        last = Some(zeros);
        p += pstep;
    }
    if let (Some(path), Some(zeros)) = (dump, last) {
        let mut lines = String::new();
        for x in zeros.iter() {
            let row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            lines.push_str(&row.join(" "));
            lines.push('\n');
        }
        fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_gauss(form: &Path, qmax: u64, samples: usize, seed: u64, budget: u64) -> Result<()> {
    let f = read_form(form)?;
    let report = cancellation_certificate(&f, qmax, samples, seed, &Budget::new(budget))?;
    print!("{}", experiments::gauss_csv(&report));
    if !report.all_within_slack {
        bail!(
            "a sampled sum exceeded its bound (worst slack {:.3e})",
            report.worst_slack
        );
    }
    Ok(())
}

fn cmd_expsum(form: &Path, alpha: f64, p: f64, smooth: bool, budget: u64) -> Result<()> {
    let f = read_form(form)?;
    let n = f.n();
    let w = if smooth {
        Cutoff::Smooth(ProductWeight::uniform(Weight1d::Bump, n)?)
    } else {
        Cutoff::Sharp
    };
    let value = weighted_exp_sum(
        &f,
        &w,
        &ProductObservable::constant_one(n),
        &ProductPoint::identity(n)?,
        p,
        alpha,
        &Budget::new(budget),
    )?;
    let json = serde_json::json!({
        "value": { "re": value.value.re, "im": value.value.im },
        "abs": value.value.norm(),
        "terms": value.terms,
        "alpha": value.alpha,
        "p": value.p,
        "form": value.form,
        "observable": value.observable,
    });
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}

fn cmd_arcs(
    q: u64,
    alpha: Option<f64>,
    scan: Option<f64>,
    p: Option<f64>,
    eps0: f64,
) -> Result<()> {
    let p = p.unwrap_or_else(|| (q as f64).powi(20).max(2.0));
    let phases: Vec<f64> = match (alpha, scan) {
        (Some(a), None) => vec![a],
        (None, Some(step)) => {
            if !(step > 0.0 && step < 1.0) {
                bail!("scan step must lie in (0, 1), got {step}");
            }
            let count = (1.0 / step).ceil() as usize;
            (0..count)
                .map(|k| k as f64 * step)
                .filter(|a| *a < 1.0)
                .collect()
        }
        _ => bail!("pass exactly one of --alpha or --scan"),
    };
    println!("alpha,a,q,region,dist");
    for phase in phases {
        let folded = phase.rem_euclid(1.0);
        let (a, den) = locate(folded, q)?;
        let dist = circle_dist(folded, a as f64 / den as f64);
        let region = if dist < m1_threshold(den, p, eps0) {
            Region::M1
        } else {
            Region::M2
        };
        println!("{},{},{},{},{}", phase, a, den, region.as_str(), dist);
    }
    Ok(())
}

fn cmd_run(config: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let cfg = ExperimentConfig::parse(&text)?;
    let output = experiments::run(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let manifest = serde_json::to_string_pretty(&output.manifest)?;
    for (name, body) in [
        ("records.csv", output.records_csv.as_str()),
        ("decay.csv", output.decay_csv.as_str()),
        ("gauss.csv", output.gauss_csv.as_str()),
        ("manifest.json", manifest.as_str()),
    ] {
        let path = out.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    println!(
        "decay exponent {:.4} (reference {:.1}), smoothing difference {:.3e}, gauss worst slack {:.3e}",
        output.decay.fitted_exponent,
        output.decay.reference,
        output.smoothing.difference,
        output.gauss.worst_slack
    );
    Ok(())
}

fn cmd_verify() -> Result<()> {
    let results = verify::run_all();
    let mut failed = 0usize;
    for r in &results {
        println!("{}", r.line());
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} of {} criteria failed", results.len());
    }
    println!("all {} criteria passed", results.len());
    Ok(())
}

struct Series {
    p: Vec<f64>,
    magnitude: Vec<f64>,
}

fn parse_run_csv(text: &str) -> Result<Series> {
    let mut lines = text.lines();
    let header = lines.next().context("empty CSV")?;
    let columns: Vec<&str> = header.split(',').collect();
    let p_col = columns
        .iter()
        .position(|c| *c == "p")
        .context("CSV has no 'p' column")?;
    let avg_col = columns
        .iter()
        .position(|c| *c == "average")
        .context("CSV has no 'average' column")?;
    let mut p = Vec::new();
    let mut magnitude = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let want = p_col.max(avg_col) + 1;
        if fields.len() < want {
            bail!(
                "row {} has {} fields, expected at least {want}",
                idx + 2,
                fields.len()
            );
        }
        let scale: f64 = fields[p_col]
            .parse()
            .with_context(|| format!("bad scale in row {}", idx + 2))?;
        let avg: f64 = fields[avg_col]
            .parse()
            .with_context(|| format!("bad average in row {}", idx + 2))?;
        p.push(scale);
        magnitude.push(avg.abs());
    }
    if p.len() < 2 {
        bail!("need at least two rows to plot, got {}", p.len());
    }
    Ok(Series { p, magnitude })
}

/// Log-log decay plot as a standalone SVG: one polyline through the
/// |average| samples plus labeled axis ticks.
fn render_svg(series: &Series) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 20.0;
    const B: f64 = 50.0;

    let floor = 1e-300;
    let xs: Vec<f64> = series.p.iter().map(|v| v.log10()).collect();
    let ys: Vec<f64> = series
        .magnitude
        .iter()
        .map(|v| v.max(floor).log10())
        .collect();
    let (x_lo, x_hi) = span(&xs);
    let (y_lo, y_hi) = span(&ys);
    let to_x = |v: f64| L + (v - x_lo) / (x_hi - x_lo) * (W - L - R);
    let to_y = |v: f64| H - B - (v - y_lo) / (y_hi - y_lo) * (H - T - B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"{L}\" y=\"{T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        W - L - R,
        H - T - B
    ));

    for (v, label) in ticks(x_lo, x_hi) {
        let x = to_x(v);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
            T,
            H - B
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n",
            H - B + 18.0
        ));
    }
    for (v, label) in ticks(y_lo, y_hi) {
        let y = to_y(v);
        svg.push_str(&format!(
            "<line x1=\"{L}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n",
            W - R
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{label}</text>\n",
            L - 6.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">box scale P</text>\n",
        L + (W - L - R) / 2.0,
        H - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">|average|</text>\n",
        T + (H - T - B) / 2.0,
        T + (H - T - B) / 2.0
    ));

    let points: Vec<String> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| format!("{:.1},{:.1}", to_x(*x), to_y(*y)))
        .collect();
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n",
        points.join(" ")
    ));
    for (x, y) in xs.iter().zip(&ys) {
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#1f77b4\"/>\n",
            to_x(*x),
            to_y(*y)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn span(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Round tick positions in log10 space, labeled as powers of ten.
fn ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let step = ((hi - lo) / 5.0).max(1e-12);
    let step = if step <= 0.5 { 0.5 } else { step.ceil() };
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|k| {
            let v = k as f64 * step;
            let label = if v.fract() == 0.0 {
                format!("1e{}", v as i64)
            } else {
                format!("{:.2e}", 10f64.powf(v))
            };
            (v, label)
        })
        .collect()
}

fn cmd_plot(csv: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(csv).with_context(|| format!("reading CSV {}", csv.display()))?;
    let series = parse_run_csv(&text)?;
    let svg = render_svg(&series);
    let target = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| csv.with_extension("svg"));
    fs::write(&target, svg).with_context(|| format!("writing {}", target.display()))?;
    println!("wrote {}", target.display());
    Ok(())
}

fn run_cli(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Count {
            form,
            pmax,
            pstep,
            pmin,
            dump,
            budget,
        } => cmd_count(&form, pmax, pstep, pmin, dump.as_deref(), budget),
        Command::Gauss {
            form,
            qmax,
            samples,
            seed,
            budget,
        } => cmd_gauss(&form, qmax, samples, seed, budget),
        Command::Expsum {
            form,
            alpha,
            p,
            smooth,
            budget,
        } => cmd_expsum(&form, alpha, p, smooth, budget),
        Command::Arcs {
            q,
            alpha,
            scan,
            p,
            eps0,
        } => cmd_arcs(q, alpha, scan, p, eps0),
        Command::Run { config, out } => cmd_run(&config, &out),
        Command::Verify => cmd_verify(),
        Command::Plot { csv, out } => cmd_plot(&csv, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
