//! Command-line front end: experiment configs (flat key=value files plus flag
//! overrides), deterministic execution, and CSV / JSON-lines emission with a
//! '#' header echoing the config hash.
//!
//! Every subcommand resolves its settings in the order flag > config file >
//! built-in default; the fully resolved settings form the [`ExperimentConfig`]
//! whose SHA-256 is printed in the header and which `--save-config` writes
//! back in re-ingestible form.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::eisenstein::{
    class_transform, e_partial, estar_partial, ClassGroupData, UpperHalfTuple,
};
use crate::equidist_lab::{d_constants, theorem_check, DOptions, TestBump};
use crate::error::{LabError, Result};
use crate::group_kit::{kau_decompose, khu_decompose, GroupElement, RealMat2, Sign};
use crate::number_field::{FieldKind, NumberFieldSpec};
use crate::quadric_counting::{
    fit_main_term, orbit_count, rat, rat_matrix, CountSeries, NormChoice, TernaryQuadricProblem,
};
use crate::torus_lines::{discrepancy_sweep, Direction, LineSpec, SweepOptions, TrigPolynomial};
use crate::volume_zeta::{ball_measure, height_zeta, log_weighted_ball, zeta_closed_form};

/// Settings accepted by every subcommand.
const GLOBAL_DEFAULTS: &[(&str, &str)] = &[("format", "csv"), ("seed", "1"), ("threads", "0")];

const QUADRIC_DEFAULTS: &[(&str, &str)] = &[("form", "1,1,-1"), ("m", "1"), ("norm", "euclidean")];

/// The subcommands and their per-command defaults.
fn command_defaults(command: &str) -> Option<Vec<(&'static str, &'static str)>> {
    let mut d: Vec<(&str, &str)> = match command {
        "count" => [QUADRIC_DEFAULTS, &[("T", "100,1000"), ("orbits", "false"), ("plateau_budget", "4096")]].concat(),
        "fit" => [QUADRIC_DEFAULTS, &[("T", "1000,3000,10000,30000,100000")]].concat(),
        "torus" => vec![
            ("field", "quadratic:2"),
            ("direction", "0"),
            ("T", "100,1000,10000"),
            ("kappa", "4.5"),
            ("interval", "0,6.283185307179586"),
            ("offset", "0"),
            ("order", "2"),
            ("width", "0.5"),
        ],
        "volume" => [QUADRIC_DEFAULTS, &[("T", "1000,10000,100000")]].concat(),
        "zeta" => [QUADRIC_DEFAULTS, &[("tau", "1.01,1.02,1.05,1.1"), ("cutoff", "1e6")]].concat(),
        "equidist" => vec![("z0", "0,1"), ("rho", "0.3"), ("s", "2,4,8,16,32,64"), ("eps0", "0"), ("rel_tol", "1e-9")],
        "eisenstein" => vec![
            ("field", "rational"),
            ("z", "0,1"),
            ("s", "2"),
            ("cutoff", "1000"),
            ("series", "E*"),
            ("class_data", ""),
        ],
        "decompose" => vec![("matrix", "2,0,0,0.5"), ("mode", "kau"), ("sign", "plus")],
        _ => return None,
    };
    d.extend_from_slice(GLOBAL_DEFAULTS);
    Some(d)
}

/// A fully serialisable experiment: the command plus its flat settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub settings: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// A config for `command` from explicit settings (unknown keys are rejected),
    /// with every missing key filled from the defaults.
    pub fn resolve(command: &str, explicit: BTreeMap<String, String>) -> Result<Self> {
        let defaults = command_defaults(command).ok_or_else(|| LabError::ConfigInvalid {
            key: "command".into(),
            reason: format!("unknown command `{command}`"),
        })?;
        for key in explicit.keys() {
            if key != "command" && !defaults.iter().any(|(k, _)| k == key) {
                return Err(LabError::ConfigInvalid { key: key.clone(), reason: format!("not a setting of `{command}`") });
            }
        }
        let mut settings = BTreeMap::new();
        for (k, v) in defaults {
            settings.insert(k.to_string(), explicit.get(k).cloned().unwrap_or_else(|| v.to_string()));
        }
        Ok(ExperimentConfig { command: command.to_string(), settings })
    }

    /// Parses a key=value file ('#' comments and blank lines ignored). A
    /// `command` key, when present, must agree with the invoked command.
    pub fn parse_settings(text: &str) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| LabError::ConfigInvalid {
                key: format!("line {}", n + 1),
                reason: "expected key=value".into(),
            })?;
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(out)
    }

    /// The re-ingestible key=value form (command first, then sorted settings).
    pub fn to_text(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.settings {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// SHA-256 of [`Self::to_text`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// The '#' comment header of every artifact.
    pub fn header(&self) -> String {
        let mut s = format!("# quadric-lab {}\n# config-hash: sha256:{}\n", self.command, self.hash());
        for (k, v) in &self.settings {
            let _ = writeln!(s, "# {k}={v}");
        }
        s
    }

    fn raw(&self, key: &str) -> &str {
        self.settings.get(key).map(String::as_str).unwrap_or("")
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> LabError {
        LabError::ConfigInvalid { key: key.to_string(), reason: reason.into() }
    }

    /// A scalar setting.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key);
        raw.parse().map_err(|_| self.invalid(key, format!("cannot parse `{raw}`")))
    }

    /// A comma-separated list setting (empty string = empty list).
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Ok(vec![]);
        }
        raw.split(',')
            .map(|p| p.trim().parse().map_err(|_| self.invalid(key, format!("cannot parse `{p}` in `{raw}`"))))
            .collect()
    }

    /// A list setting that also accepts `start:stop:step` ranges (inclusive).
    pub fn range_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.raw(key);
        let parts: Vec<&str> = raw.split(':').collect();
        if parts.len() != 3 {
            return self.list(key);
        }
        let p = |s: &str| s.trim().parse::<f64>().map_err(|_| self.invalid(key, format!("bad range `{raw}`")));
        let (a, b, h) = (p(parts[0])?, p(parts[1])?, p(parts[2])?);
        if !(h > 0.0 && b >= a) {
            return Err(self.invalid(key, "range needs start ≤ stop and a positive step"));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| a + i as f64 * h).collect())
    }
}

/// Output format of the artifact body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

/// Writes records as CSV (RFC-4180 via the csv crate) or one JSON object per line.
fn emit<T: Serialize>(format: Format, rows: &[T], out: &mut dyn Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r).map_err(|e| LabError::Io(e.to_string()))?;
            }
            w.flush()?;
        }
        Format::Json => {
            for r in rows {
                let line = serde_json::to_string(r).map_err(|e| LabError::Io(e.to_string()))?;
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}

/// Runs a resolved experiment, writing header and body to `out`.
pub fn run(config: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let format = match config.raw("format") {
        "csv" => Format::Csv,
        "json" => Format::Json,
        other => return Err(config.invalid("format", format!("expected csv or json, got `{other}`"))),
    };
    let threads: usize = config.get("threads")?;
    if threads > 0 {
        // A global pool can be built once per process; later calls keep the first.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let _seed: u64 = config.get("seed")?;
    out.write_all(config.header().as_bytes())?;
    match config.command.as_str() {
        "count" => run_count(config, format, out),
        "fit" => run_fit(config, format, out),
        "torus" => run_torus(config, format, out),
        "volume" => run_volume(config, format, out),
        "zeta" => run_zeta(config, format, out),
        "equidist" => run_equidist(config, format, out),
        "eisenstein" => run_eisenstein(config, format, out),
        "decompose" => run_decompose(config, format, out),
        other => Err(config.invalid("command", format!("unknown command `{other}`"))),
    }
}

fn problem(config: &ExperimentConfig) -> Result<TernaryQuadricProblem> {
    let form: Vec<i64> = config.list("form")?;
    let gram = match form.len() {
        3 => rat_matrix([[form[0], 0, 0], [0, form[1], 0], [0, 0, form[2]]]),
        9 => rat_matrix([
            [form[0], form[1], form[2]],
            [form[3], form[4], form[5]],
            [form[6], form[7], form[8]],
        ]),
        _ => return Err(config.invalid("form", "expected 3 diagonal or 9 Gram entries")),
    };
    let norm = match config.raw("norm") {
        "euclidean" => NormChoice::Euclidean,
        "max" => NormChoice::Max,
        other => return Err(config.invalid("norm", format!("expected euclidean or max, got `{other}`"))),
    };
    let m: i64 = config.get("m")?;
    let p = TernaryQuadricProblem::new(gram, rat(m), norm)?;
    p.validate()?;
    Ok(p)
}

fn run_count(config: &ExperimentConfig, format: Format, out: &mut dyn Write) -> Result<()> {
    let p = problem(config)?;
    let ts: Vec<f64> = config.list("T")?;
    let orbits: bool = config.get("orbits")?;
    if orbits {
        #[derive(Serialize)]
        struct Row {
            #[serde(rename = "T")]
            t: f64,
            representative: String,
            count: u64,
        }
        let budget: usize = config.get("plateau_budget")?;
        let mut rows = Vec::new();
        for &t in &ts {
            for (rep, n) in orbit_count(&p, t, budget)? {
                rows.push(Row { t, representative: format!("{} {} {}", rep[0], rep[1], rep[2]), count: n });
            }
        }
        emit(format, &rows, out)
    } else {
        #[derive(Serialize)]
        struct Row {
            #[serde(rename = "T")]
            t: f64,
            count: u64,
        }
        let series = CountSeries::measure(&p, &ts)?;
        let rows: Vec<Row> = series.samples.iter().map(|&(t, count)| Row { t, count }).collect();
        emit(format, &rows, out)
    }
}

fn run_fit(config: &ExperimentConfig, format: Format, out: &mut dyn Write) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        #[serde(rename = "T")]
        t: f64,
        count: u64,
        model: f64,
        relative_residual: f64,
        c1: f64,
        c2: f64,
    }
    let p = problem(config)?;
    let ts: Vec<f64> = config.list("T")?;
    let series = CountSeries::measure(&p, &ts)?;
    let fit = fit_main_term(&series)?;
    let rows: Vec<Row> = series
        .samples
        .iter()
        .zip(&fit.relative_residuals)
        .map(|(&(t, count), &rr)| Row { t, count, model: fit.c1 * t * t.ln() + fit.c2 * t, relative_residual: rr, c1: fit.c1, c2: fit.c2 })
        .collect();
    emit(format, &rows, out)
}

fn field(config: &ExperimentConfig) -> Result<NumberFieldSpec> {
    let raw = config.raw("field");
    if raw == "rational" {
        return Ok(NumberFieldSpec::rational());
    }
    let d = raw
        .strip_prefix("quadratic:")
        .and_then(|d| d.parse::<i64>().ok())
        .ok_or_else(|| config.invalid("field", format!("expected rational or quadratic:<d>, got `{raw}`")))?;
    NumberFieldSpec::new(FieldKind::Quadratic { d }).map_err(|e| config.invalid("field", e.to_string()))
}

fn run_torus(config: &ExperimentConfig, format: Format, out: &mut dyn Write) -> Result<()> {
    let spec = field(config)?;
    let lattice = spec.ok_lattice();
    let place: usize = config.get("direction")?;
    if place >= spec.places() {
        return Err(config.invalid("direction", format!("field has {} places", spec.places())));
    }
    let direction = if place < spec.l1 {
        Direction::Real { index: place }
    } else {
        let iv: Vec<f64> = config.list("interval")?;
        if iv.len() != 2 {
            return Err(config.invalid("interval", "expected two angles a,b"));
        }
        Direction::Complex { index: place - spec.l1, interval: (iv[0], iv[1]) }
    };
    let dim = lattice.dim();
    let mut offset: Vec<f64> = config.list("offset")?;
    match offset.len() {
        1 => offset = vec![offset[0]; dim],
        n if n == dim => {}
        _ => return Err(config.invalid("offset", format!("expected 1 or {dim} coordinates"))),
    }
    let f = TrigPolynomial::smooth_bump(&lattice, config.get("order")?, config.get("width")?);
    let template = LineSpec { l1: spec.l1, direction, offset, t0: 0.0, t: 1.0 };
    template.validate()?;
    let opts = SweepOptions { kappa: config.get("kappa")?, field: Some(spec.clone()), ..SweepOptions::default() };
    let sweep = discrepancy_sweep(&f, &lattice, &template, &config.list::<f64>("T")?, &opts)?;
    emit(format, &sweep.rows, out)
}

fn run_volume(config: &ExperimentConfig, format: Format, out: &mut dyn Write) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        #[serde(rename = "T")]
        t: f64,
        ball_measure: f64,
        log_weighted_ball: f64,
    }
    let p = problem(config)?;
    let rows = config
        .list::<f64>("T")?
        .into_iter()
        .map(|t| Ok(Row { t, ball_measure: ball_measure(&p, t)?, log_weighted_ball: log_weighted_ball(&p, t)? }))
        .collect::<Result<Vec<Row>>>()?;
    emit(format, &rows, out)
}

fn run_zeta(config: &ExperimentConfig, format: Format, out: &mut dyn Write) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        tau: f64,
        z: f64,
        z_tail: f64,
        z_log: f64,
        z_log_tail: f64,
        closed_form: f64,
    }
    let p = problem(config)?;
    let cutoff: f64 = config.get("cutoff")?;
    let m: f64 = config.get("m")?;
    let rows = config
        .range_list("tau")?
        .into_iter()
        .map(|tau| {
            let z = height_zeta(&p, tau, cutoff, false)?;
            let zl = height_zeta(&p, tau, cutoff, true)?;
            Ok(Row { tau, z: z.value, z_tail: z.tail, z_log: zl.value, z_log_tail: zl.tail, closed_form: zeta_closed_form(m, tau) })
        })
        .collect::<Result<Vec<Row>>>()?;
    emit(format, &rows, out)
}

fn point(config: &ExperimentConfig, key: &str) -> Result<Complex64> {
    let v: Vec<f64> = config.list(key)?;
    if v.len() != 2 {
        return Err(config.invalid(key, "expected a point x,y"));
    }
    Ok(Complex64::new(v[0], v[1]))
}

fn run_equidist(config: &ExperimentConfig, format: Format, out: &mut dyn Write) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        s: f64,
        #[serde(rename = "T")]
        t: f64,
        orbit_integral: f64,
        log_term: f64,
        #[serde(rename = "Dplus")]
        d_plus: f64,
        #[serde(rename = "Dminus")]
        d_minus: f64,
        residual: f64,
    }
    let bump = TestBump::new(point(config, "z0")?, config.get("rho")?)?;
    let opts = DOptions { eps0: config.get("eps0")?, x_split: None, rel_tol: config.get("rel_tol")? };
    let d = d_constants(&bump, &opts)?;
    let check = theorem_check(&bump, &config.list::<f64>("s")?, &d)?;
    let rows: Vec<Row> = check
        .rows
        .iter()
        .map(|r| Row {
            s: r.s,
            t: r.t,
            orbit_integral: r.orbit_integral,
            log_term: r.log_term,
            d_plus: r.d_plus,
            d_minus: r.d_minus,
            residual: r.residual,
        })
        .collect();
    emit(format, &rows, out)
}

/// Points of 𝐡_{k∞} as `x,y` per real place and `re,im,y` per complex place,
/// places separated by ';'.
fn upper_half_tuple(config: &ExperimentConfig, spec: &NumberFieldSpec) -> Result<UpperHalfTuple> {
    let raw = config.raw("z");
    let parts: Vec<Vec<f64>> = raw
        .split(';')
        .map(|p| p.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| config.invalid("z", format!("cannot parse `{raw}`")))?;
    if parts.len() != spec.places() {
        return Err(config.invalid("z", format!("expected {} places separated by ';'", spec.places())));
    }
    let mut reals = Vec::new();
    let mut complexes = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        match (i < spec.l1, p.len()) {
            (true, 2) => reals.push(Complex64::new(p[0], p[1])),
            (false, 3) => complexes.push((Complex64::new(p[0], p[1]), p[2])),
            _ => return Err(config.invalid("z", "real places take x,y and complex places re,im,y")),
        }
    }
    UpperHalfTuple::new(reals, complexes).map_err(|e| config.invalid("z", e.to_string()))
}

/// Class data file for `eisenstein --class-data`: the character table plus,
/// per s, the L-values L(2s, χ_λ⁻¹) and the per-class E values to invert.
#[derive(Debug, Clone, serde::Deserialize)]
struct ClassDataFile {
    labels: Vec<String>,
    characters: Vec<Vec<Complex64>>,
    l_values: Vec<Complex64>,
    e_values: Vec<Complex64>,
}

fn run_eisenstein(config: &ExperimentConfig, format: Format, out: &mut dyn Write) -> Result<()> {
    let class_path = config.raw("class_data");
    if !class_path.is_empty() {
        #[derive(Serialize)]
        struct Row {
            class: String,
            estar_re: f64,
            estar_im: f64,
        }
        let text = std::fs::read_to_string(class_path).map_err(|e| config.invalid("class_data", e.to_string()))?;
        let file: ClassDataFile = serde_json::from_str(&text).map_err(|e| config.invalid("class_data", e.to_string()))?;
        let data = ClassGroupData::new(file.labels, file.characters).map_err(|e| config.invalid("class_data", e.to_string()))?;
        let estar = class_transform(&file.e_values, &file.l_values, &data)?;
        let rows: Vec<Row> =
            data.labels.iter().zip(estar).map(|(l, v)| Row { class: l.clone(), estar_re: v.re, estar_im: v.im }).collect();
        return emit(format, &rows, out);
    }
    #[derive(Serialize)]
    struct Row {
        s: f64,
        value: f64,
        tail: f64,
        cutoff: u64,
    }
    let spec = field(config)?;
    let z = upper_half_tuple(config, &spec)?;
    let cutoff: u64 = config.get("cutoff")?;
    let primitive = match config.raw("series") {
        "E" => false,
        "E*" | "Estar" => true,
        other => return Err(config.invalid("series", format!("expected E or E*, got `{other}`"))),
    };
    let rows = config
        .range_list("s")?
        .into_iter()
        .map(|s| {
            let e = if primitive { estar_partial(&spec, &z, s, cutoff)? } else { e_partial(&spec, &z, s, cutoff)? };
            Ok(Row { s, value: e.value, tail: e.tail, cutoff })
        })
        .collect::<Result<Vec<Row>>>()?;
    emit(format, &rows, out)
}

fn run_decompose(config: &ExperimentConfig, format: Format, out: &mut dyn Write) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        mode: String,
        k11: f64,
        k12: f64,
        k21: f64,
        k22: f64,
        lambda: f64,
        r: f64,
        reconstruction_error: f64,
    }
    let v: Vec<f64> = config.list("matrix")?;
    if v.len() != 4 {
        return Err(config.invalid("matrix", "expected four entries a,b,c,d"));
    }
    let g: RealMat2 = [[v[0], v[1]], [v[2], v[3]]];
    if ((v[0] * v[3] - v[1] * v[2]) - 1.0).abs() > 1e-9 {
        return Err(config.invalid("matrix", "determinant must be 1"));
    }
    let sign = match config.raw("sign") {
        "plus" | "+" => Sign::Plus,
        "minus" | "-" => Sign::Minus,
        other => return Err(config.invalid("sign", format!("expected plus or minus, got `{other}`"))),
    };
    let row = match config.raw("mode") {
        "kau" => {
            let d = kau_decompose(&g, sign)?;
            let rec = d.reconstruct();
            let err = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (rec[i][j] - g[i][j]).abs()).fold(0.0, f64::max);
            Row { mode: "kau".into(), k11: d.k[0][0], k12: d.k[0][1], k21: d.k[1][0], k22: d.k[1][1], lambda: d.lambda, r: d.r, reconstruction_error: err }
        }
        "khu" => {
            let ge = GroupElement::real(g)?;
            let d = khu_decompose(&ge, sign);
            let err = d.reconstruct().distance(&ge);
            let b = d.b.places[0];
            let u = d.u.places[0];
            let r = if sign == Sign::Plus { u[0][1].re } else { u[1][0].re };
            Row { mode: "khu".into(), k11: b[0][0].re, k12: b[0][1].re, k21: b[1][0].re, k22: b[1][1].re, lambda: d.s, r, reconstruction_error: err }
        }
        other => return Err(config.invalid("mode", format!("expected kau or khu, got `{other}`"))),
    };
    emit(format, &[row], out)
}

#[derive(Parser, Debug)]
#[command(name = "quadric-lab", version, about = "Integer points on quadrics, equidistribution and Eisenstein-series experiments")]
struct Cli {
    /// Key=value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact path (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the resolved config here (re-ingestible with --config).
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,
    /// Output format: csv or json (one object per line).
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Worker threads (0 = all logical cores).
    #[arg(long, global = true)]
    threads: Option<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct QuadricArgs {
    /// Three diagonal or nine Gram entries.
    #[arg(long)]
    form: Option<String>,
    #[arg(long)]
    m: Option<String>,
    /// euclidean or max.
    #[arg(long)]
    norm: Option<String>,
    /// Comma-separated height bounds.
    #[arg(long = "T")]
    t: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Count integer points N(T) (optionally per orbit class).
    Count {
        #[command(flatten)]
        q: QuadricArgs,
        #[arg(long)]
        orbits: Option<String>,
        #[arg(long)]
        plateau_budget: Option<String>,
    },
    /// Fit N(T) ≈ c₁·T·log T + c₂·T.
    Fit {
        #[command(flatten)]
        q: QuadricArgs,
    },
    /// Line-average discrepancy sweep on the torus k∞/O_k.
    Torus {
        /// rational or quadratic:<d>.
        #[arg(long)]
        field: Option<String>,
        /// Place index of the line direction (real places first).
        #[arg(long)]
        direction: Option<String>,
        #[arg(long = "T")]
        t: Option<String>,
        #[arg(long)]
        kappa: Option<String>,
        #[arg(long)]
        interval: Option<String>,
        #[arg(long)]
        offset: Option<String>,
        #[arg(long)]
        order: Option<String>,
        #[arg(long)]
        width: Option<String>,
    },
    /// Ball volumes m(B_T) and ∫_{B_T} log T_g.
    Volume {
        #[command(flatten)]
        q: QuadricArgs,
    },
    /// Height zeta functions Z(τ), Z_log(τ).
    Zeta {
        #[command(flatten)]
        q: QuadricArgs,
        /// List or start:stop:step range.
        #[arg(long)]
        tau: Option<String>,
        #[arg(long)]
        cutoff: Option<String>,
    },
    /// Diagonal-orbit identity residuals on SL₂(ℝ)/SL₂(ℤ).
    Equidist {
        #[arg(long)]
        z0: Option<String>,
        #[arg(long)]
        rho: Option<String>,
        #[arg(long)]
        s: Option<String>,
        #[arg(long)]
        eps0: Option<String>,
        #[arg(long)]
        rel_tol: Option<String>,
    },
    /// Partial Eisenstein sums E / E*, or class inversion from a data file.
    Eisenstein {
        #[arg(long)]
        field: Option<String>,
        /// x,y per real place, re,im,y per complex place, ';'-separated.
        #[arg(long)]
        z: Option<String>,
        /// Value, list, or start:stop:step range.
        #[arg(long)]
        s: Option<String>,
        #[arg(long)]
        cutoff: Option<String>,
        /// E or E*.
        #[arg(long)]
        series: Option<String>,
        /// JSON with labels, characters, l_values, e_values.
        #[arg(long)]
        class_data: Option<String>,
    },
    /// KAU or KHU decomposition of a 2×2 real matrix.
    Decompose {
        /// a,b,c,d (row-major).
        #[arg(long)]
        matrix: Option<String>,
        /// kau or khu.
        #[arg(long)]
        mode: Option<String>,
        /// plus or minus.
        #[arg(long)]
        sign: Option<String>,
    },
}

fn put(map: &mut BTreeMap<String, String>, key: &str, value: &Option<String>) {
    if let Some(v) = value {
        map.insert(key.to_string(), v.clone());
    }
}

fn put_quadric(map: &mut BTreeMap<String, String>, q: &QuadricArgs) {
    put(map, "form", &q.form);
    put(map, "m", &q.m);
    put(map, "norm", &q.norm);
    put(map, "T", &q.t);
}

impl Cmd {
    fn name_and_flags(&self) -> (&'static str, BTreeMap<String, String>) {
        let mut m = BTreeMap::new();
        let name = match self {
            Cmd::Count { q, orbits, plateau_budget } => {
                put_quadric(&mut m, q);
                put(&mut m, "orbits", orbits);
                put(&mut m, "plateau_budget", plateau_budget);
                "count"
            }
            Cmd::Fit { q } => {
                put_quadric(&mut m, q);
                "fit"
            }
            Cmd::Torus { field, direction, t, kappa, interval, offset, order, width } => {
                put(&mut m, "field", field);
                put(&mut m, "direction", direction);
                put(&mut m, "T", t);
                put(&mut m, "kappa", kappa);
                put(&mut m, "interval", interval);
                put(&mut m, "offset", offset);
                put(&mut m, "order", order);
                put(&mut m, "width", width);
                "torus"
            }
            Cmd::Volume { q } => {
                put_quadric(&mut m, q);
                "volume"
            }
            Cmd::Zeta { q, tau, cutoff } => {
                put_quadric(&mut m, q);
                put(&mut m, "tau", tau);
                put(&mut m, "cutoff", cutoff);
                "zeta"
            }
            Cmd::Equidist { z0, rho, s, eps0, rel_tol } => {
                put(&mut m, "z0", z0);
                put(&mut m, "rho", rho);
                put(&mut m, "s", s);
                put(&mut m, "eps0", eps0);
                put(&mut m, "rel_tol", rel_tol);
                "equidist"
            }
            Cmd::Eisenstein { field, z, s, cutoff, series, class_data } => {
                put(&mut m, "field", field);
                put(&mut m, "z", z);
                put(&mut m, "s", s);
                put(&mut m, "cutoff", cutoff);
                put(&mut m, "series", series);
                put(&mut m, "class_data", class_data);
                "eisenstein"
            }
            Cmd::Decompose { matrix, mode, sign } => {
                put(&mut m, "matrix", matrix);
                put(&mut m, "mode", mode);
                put(&mut m, "sign", sign);
                "decompose"
            }
        };
        (name, m)
    }
}

/// Builds the resolved config from parsed arguments (config file, then flags).
fn config_from_cli(cli: &Cli) -> Result<ExperimentConfig> {
    let (name, flags) = cli.command.name_and_flags();
    let mut settings = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| LabError::ConfigInvalid { key: "config".into(), reason: format!("{}: {e}", path.display()) })?;
            ExperimentConfig::parse_settings(&text)?
        }
        None => BTreeMap::new(),
    };
    if let Some(cmd) = settings.remove("command") {
        if cmd != name {
            return Err(LabError::ConfigInvalid { key: "command".into(), reason: format!("config is for `{cmd}`, not `{name}`") });
        }
    }
    settings.extend(flags);
    put(&mut settings, "format", &cli.format);
    put(&mut settings, "seed", &cli.seed);
    put(&mut settings, "threads", &cli.threads);
    ExperimentConfig::resolve(name, settings)
}

fn execute(cli: &Cli) -> Result<()> {
    let config = config_from_cli(cli)?;
    if let Some(path) = &cli.save_config {
        std::fs::write(path, config.to_text())?;
    }
    // Buffer the artifact so a failed run leaves no partial output behind.
    let mut buf = Vec::new();
    run(&config, &mut buf)?;
    match &cli.out {
        Some(path) => std::fs::write(path, buf)?,
        None => std::io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

/// Entry point of the binary: parses argv, runs, and returns the exit code
/// (0 ok, 2 configuration, 3 budget, 4 numerical failure).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Result<String> {
        let cli = Cli::try_parse_from(std::iter::once("quadric-lab").chain(args.iter().copied())).unwrap();
        let config = config_from_cli(&cli)?;
        let mut buf = Vec::new();
        run(&config, &mut buf)?;
        Ok(String::from_utf8(buf).unwrap())
    }

    fn body(text: &str) -> Vec<&str> {
        text.lines().filter(|l| !l.starts_with('#')).collect()
    }

    #[test]
    fn count_prints_brute_force_value() {
        let out = run_args(&["count", "--form", "1,1,-1", "--m", "1", "--norm", "euclidean", "--T", "5"]).unwrap();
        assert!(out.starts_with("# quadric-lab count\n# config-hash: sha256:"));
        assert_eq!(body(&out), vec!["T,count", "5.0,44"]);
    }

    #[test]
    fn decompose_reports_kau_parts() {
        let out = run_args(&["decompose", "--matrix", "2,0,0,0.5", "--mode", "kau"]).unwrap();
        let rows = body(&out);
        assert_eq!(rows[0], "mode,k11,k12,k21,k22,lambda,r,reconstruction_error");
        let err: f64 = rows[1].rsplit(',').next().unwrap().parse().unwrap();
        assert!(err < 1e-12);
        let khu = run_args(&["decompose", "--matrix", "2,1,1,1", "--mode", "khu", "--format", "json"]).unwrap();
        let v: serde_json::Value = serde_json::from_str(body(&khu)[0]).unwrap();
        assert!(v["reconstruction_error"].as_f64().unwrap() < 1e-10);
    }

    #[test]
    fn torus_sweep_has_one_row_per_t() {
        let out = run_args(&["torus", "--field", "quadratic:2", "--direction", "1", "--T", "100,1000,10000"]).unwrap();
        let rows = body(&out);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0], "T,line_avg,torus_avg,abs_err,excluded_measure");
    }

    #[test]
    fn eisenstein_json_lines() {
        let out = run_args(&["eisenstein", "--s", "2:3:0.5", "--cutoff", "200", "--format", "json"]).unwrap();
        let rows = body(&out);
        assert_eq!(rows.len(), 3);
        let v: serde_json::Value = serde_json::from_str(rows[0]).unwrap();
        assert!(v["value"].as_f64().unwrap() > 2.0 && v["tail"].as_f64().unwrap() > 0.0);
        assert_eq!(v["cutoff"].as_u64(), Some(200));
    }

    #[test]
    fn config_round_trip_and_determinism() {
        let cli = Cli::try_parse_from(["quadric-lab", "count", "--T", "3,5"]).unwrap();
        let config = config_from_cli(&cli).unwrap();
        let text = config.to_text();
        let mut settings = ExperimentConfig::parse_settings(&text).unwrap();
        let cmd = settings.remove("command").unwrap();
        let again = ExperimentConfig::resolve(&cmd, settings).unwrap();
        assert_eq!(again, config);
        assert_eq!(again.hash(), config.hash());
        let (mut a, mut b) = (Vec::new(), Vec::new());
        run(&config, &mut a).unwrap();
        run(&again, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_settings_name_the_key() {
        let err = run_args(&["count", "--norm", "taxicab", "--T", "5"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(&err, LabError::ConfigInvalid { key, .. } if key == "norm"));
        let err = ExperimentConfig::resolve("count", BTreeMap::from([("bogus".to_string(), "1".to_string())])).unwrap_err();
        assert!(matches!(&err, LabError::ConfigInvalid { key, .. } if key == "bogus"));
        let err = run_args(&["decompose", "--matrix", "1,2,3"]).unwrap_err();
        assert!(matches!(&err, LabError::ConfigInvalid { key, .. } if key == "matrix"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["quadric-lab", "count", "--T", "5", "--format", "xml"]), 2);
        assert_eq!(main_with_args(["quadric-lab", "nonsense"]), 2);
        // A Gram matrix with zero determinant is a numerical-domain failure.
        assert_eq!(main_with_args(["quadric-lab", "count", "--form", "1,1,0", "--T", "5"]), 4);
        // The bump radius is outside (0, 1].
        assert_eq!(main_with_args(["quadric-lab", "equidist", "--rho", "2"]), 2);
    }
}
