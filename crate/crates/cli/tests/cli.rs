//! End-to-end checks of the `quadric` binary: every subcommand is run
//! against small inputs and its output is parsed back.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quadric"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("quadric-cli-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn cone_form(dir: &PathBuf) -> PathBuf {
    let path = dir.join("cone.txt");
    fs::write(&path, "3\n1 0 0\n0 1 0\n0 0 -1\n").unwrap();
    path
}

#[test]
fn count_emits_monotone_counts() {
    let dir = workdir("count");
    let form = cone_form(&dir);
    let dump = dir.join("points.txt");
    let out = bin()
        .args(["count", "--form"])
        .arg(&form)
        .args(["--pmax", "15", "--pstep", "5", "--dump"])
        .arg(&dump)
        .output()
        .unwrap();
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("P,N_F,seconds"));
    let counts: Vec<u64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 3);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");

    let points = fs::read_to_string(&dump).unwrap();
    let first = points.lines().next().unwrap();
    let v: Vec<i64> = first
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(v.len(), 3);
    assert_eq!(v[0] * v[0] + v[1] * v[1], v[2] * v[2]);
}

#[test]
fn gauss_rows_stay_within_bound() {
    let dir = workdir("gauss");
    let form = cone_form(&dir);
    let out = bin()
        .args(["gauss", "--form"])
        .arg(&form)
        .args(["--qmax", "25", "--samples", "12", "--seed", "3"])
        .output()
        .unwrap();
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("q,a,v_hash,abs,ratio,bound"));
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6);
        let abs: f64 = fields[3].parse().unwrap();
        let bound: f64 = fields[5].parse().unwrap();
        assert!(abs <= bound * (1.0 + 1e-9), "{line}");
        rows += 1;
    }
    assert_eq!(rows, 12);
}

#[test]
fn expsum_json_triangle_inequality() {
    let dir = workdir("expsum");
    let form = cone_form(&dir);
    let out = bin()
        .args(["expsum", "--form"])
        .arg(&form)
        .args(["--alpha", "0.3173", "--p", "8"])
        .output()
        .unwrap();
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let abs = value["abs"].as_f64().unwrap();
    let terms = value["terms"].as_u64().unwrap();
    assert_eq!(terms, 15u64.pow(3));
    assert!(abs <= terms as f64);
    let re = value["value"]["re"].as_f64().unwrap();
    let im = value["value"]["im"].as_f64().unwrap();
    assert!((re.hypot(im) - abs).abs() < 1e-12);
}

#[test]
fn arcs_scan_assigns_smallest_denominator() {
    let out = bin()
        .args(["arcs", "--q", "5", "--scan", "0.25"])
        .output()
        .unwrap();
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha,a,q,region,dist"));
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    // 0 and 1/2 are exact centers; 1/4 belongs to its own arc at q = 4
    assert_eq!(rows[0][1..3], ["0".to_string(), "1".to_string()]);
    assert_eq!(rows[1][1..3], ["1".to_string(), "4".to_string()]);
    assert_eq!(rows[2][1..3], ["1".to_string(), "2".to_string()]);
    for row in &rows {
        assert!(row[3] == "m1" || row[3] == "m2", "{row:?}");
        let dist: f64 = row[4].parse().unwrap();
        assert!(dist >= 0.0 && dist <= 0.5);
    }
}

#[test]
fn run_writes_outputs_and_plot_renders_them() {
    let dir = workdir("run");
    let cfg = dir.join("demo.cfg");
    fs::write(
        &cfg,
        "form = diag(1, 1, -1)\n\
         observable.kind = bump\n\
         base = lower:0.6180339887498949\n\
         p.min = 6\np.max = 14\np.step = 4\n\
         q = 20\nseed = 5\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    stdout(&out);

    let records = fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert!(records.starts_with("p,count,sigma,average\n"));
    assert_eq!(records.lines().count(), 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["form"], "diag(1, 1, -1)");
    assert!(manifest["timings_ms"].is_object());
    assert!(fs::read_to_string(out_dir.join("gauss.csv"))
        .unwrap()
        .starts_with("q,a,v_hash,"));

    let plot = bin()
        .arg("plot")
        .arg(out_dir.join("decay.csv"))
        .output()
        .unwrap();
    stdout(&plot);
    let svg = fs::read_to_string(out_dir.join("decay.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));
    assert!(svg.trim_end().ends_with("</svg>"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = workdir("repro");
    let cfg = dir.join("demo.cfg");
    fs::write(
        &cfg,
        "form = diag(1, 2, -3)\nobservable.kind = bump\np.min = 6\np.max = 10\np.step = 4\nseed = 9\n",
    )
    .unwrap();
    let (a, b) = (dir.join("a"), dir.join("b"));
    for out in [&a, &b] {
        let run = bin()
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        stdout(&run);
    }
    for name in ["records.csv", "decay.csv", "gauss.csv"] {
        let left = fs::read(a.join(name)).unwrap();
        let right = fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = workdir("bad");
    let form = dir.join("bad.txt");
    fs::write(&form, "2\n1 0\n0 0\n").unwrap();
    let out = bin()
        .args(["count", "--form"])
        .arg(&form)
        .args(["--pmax", "10", "--pstep", "5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let missing = bin().args(["arcs", "--q", "5"]).output().unwrap();
    assert!(!missing.status.success());
}
