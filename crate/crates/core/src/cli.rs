//! Command-line configuration, validation and output writers.
//!
//! A run is described by a [`RunConfig`], read from an optional JSON file
//! and then overridden by command-line flags. Outputs are CSV (one header
//! row, LF line endings, floats printed with 17 significant digits) or
//! JSON. Complex numbers become `<name>_re,<name>_im` column pairs in CSV
//! and `[re, im]` arrays in JSON. Phase codes in CSV are 0 = Unbroken,
//! 1 = Exceptional, 2 = Broken.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::ChainSpec;
use crate::classical::{classify_trajectory, integrate, ClassicalState, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::modes::mode_set;
use crate::oracle::{fock_spectrum_check, FockBasisSpec, SpectralComparison};
use crate::phase::{
    classify_point, scan_phase_diagram, validate_grid, Axis, GridRequest, PhaseClass, PhaseGrid, Witness,
    DEFAULT_PHASE_TOL,
};
use crate::poincare::{poincare_section, Direction, PoincareSection, SectionConfig, Variable};
use crate::spectrum::{eigenfunction_evaluate, enumerate_levels, EigenfunctionSample, EnergyLevel, OccupationVector};

/// Parses a real number, accepting exact rationals such as `1/12` or
/// `-2/3`.
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::ConfigParse(format!("'{s}' is not a number"));
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            num / den
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

/// Parses `a`, `bi`, `a+bi` or `a-bi`; either part may be a rational.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::ConfigParse(format!("'{s}' is not a complex number"));
    let Some(body) = t.strip_suffix('i') else {
        return Ok(Complex64::new(parse_real(&t)?, 0.0));
    };
    // Split at the last sign that is not leading and not an exponent sign.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (parse_real(&body[..k])?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        _ => {
            // `1/2i` style: the slash belongs to the coefficient.
            let im = im.strip_prefix('+').unwrap_or(im);
            parse_real(im).map_err(|_| bad())?
        }
    };
    Ok(Complex64::new(re, im))
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(item).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    Eigenfunction,
    PhasePoint,
    PhaseScan,
    Trajectory,
    Poincare,
    OracleCheck,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Spectrum => "spectrum",
            Command::Eigenfunction => "eigenfunction",
            Command::PhasePoint => "phase-point",
            Command::PhaseScan => "phase-scan",
            Command::Trajectory => "trajectory",
            Command::Poincare => "poincare",
            Command::OracleCheck => "oracle-check",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub n: Option<usize>,
    /// Squared frequencies; all ones when omitted.
    pub omega_sq: Option<Vec<f64>>,
    pub gamma: f64,
    pub max_quanta: u32,
    pub occ: Option<Vec<u32>>,
    pub points: Vec<Vec<f64>>,
    /// Random evaluation points drawn uniformly from `[-sample_box, sample_box]^N`
    /// when `points` is empty.
    pub samples: usize,
    pub sample_box: f64,
    pub axes: Vec<Axis>,
    pub tol: f64,
    /// `x_1..x_N` followed by `v_1..v_N`.
    pub init: Option<Vec<Complex64>>,
    pub dt: f64,
    pub t_end: Option<f64>,
    pub dt_out: f64,
    pub section: SectionConfig,
    pub cutoff: i64,
    /// Highest `Σn` compared by `oracle-check`; `cutoff / 4` when omitted.
    pub oracle_quanta: Option<u32>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    /// Worker threads, 0 for one per core.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            n: None,
            omega_sq: None,
            gamma: 0.0,
            max_quanta: 10,
            occ: None,
            points: Vec::new(),
            samples: 0,
            sample_box: 3.0,
            axes: Vec::new(),
            tol: DEFAULT_PHASE_TOL,
            init: None,
            dt: 1e-3,
            t_end: None,
            dt_out: 0.02,
            section: SectionConfig::default(),
            cutoff: 30,
            oracle_quanta: None,
            output: None,
            format: Format::Csv,
            seed: 0,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn diag(field: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        field: field.to_string(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigParse(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))
    }

    pub fn chain_spec(&self) -> Result<ChainSpec> {
        let n = self.n.or(self.omega_sq.as_ref().map(Vec::len)).unwrap_or(0);
        let omega_sq = self.omega_sq.clone().unwrap_or_else(|| vec![1.0; n]);
        if omega_sq.len() != n {
            return Err(Error::InvalidSpec(format!(
                "n = {n} but {} squared frequencies given",
                omega_sq.len()
            )));
        }
        ChainSpec::new(omega_sq, self.gamma)
    }

    fn initial_state(&self, n: usize) -> Result<ClassicalState> {
        let init = self.init.as_deref().unwrap_or(&[]);
        if init.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: init.len(),
            });
        }
        ClassicalState::new(0.0, init[..n].to_vec(), init[n..].to_vec())
    }

    fn grid_request(&self, spec: &ChainSpec) -> GridRequest {
        GridRequest {
            base: spec.clone(),
            axes: self.axes.clone(),
            tol: self.tol,
        }
    }
}

/// Every problem that would stop `run` before it starts computing.
pub fn validate(config: &RunConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let Some(command) = config.command else {
        out.push(diag("command", "no command given"));
        return out;
    };

    let n = config.n.or(config.omega_sq.as_ref().map(Vec::len));
    match n {
        None => out.push(diag("n", "n is required")),
        Some(n) if n < 2 => out.push(diag("n", "n must be ≥ 2")),
        _ => {}
    }
    if let (Some(n), Some(w)) = (config.n, &config.omega_sq) {
        if w.len() != n {
            out.push(diag("omega_sq", format!("{} values for n = {n}", w.len())));
        }
    }
    if let Some(w) = &config.omega_sq {
        if w.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            out.push(diag("omega_sq", "squared frequencies must be positive"));
        }
    }
    if !config.gamma.is_finite() {
        out.push(diag("gamma", "gamma must be finite"));
    }
    if !(config.tol > 0.0 && config.tol.is_finite()) {
        out.push(diag("tol", "tol must be positive"));
    }
    let n = n.unwrap_or(0);
    let spec = config.chain_spec().ok();

    match command {
        Command::Spectrum | Command::PhasePoint => {}
        Command::Eigenfunction => {
            match &config.occ {
                None => out.push(diag("occ", "eigenfunction needs an occupation vector")),
                Some(o) if o.len() != n => {
                    out.push(diag("occ", format!("{} occupation numbers for n = {n}", o.len())))
                }
                _ => {}
            }
            if config.points.is_empty() && config.samples == 0 {
                out.push(diag("points", "give evaluation points or a sample count"));
            }
            if let Some(p) = config.points.iter().find(|p| p.len() != n) {
                out.push(diag("points", format!("point with {} coordinates for n = {n}", p.len())));
            }
            if config.points.is_empty() && !(config.sample_box > 0.0 && config.sample_box.is_finite()) {
                out.push(diag("sample_box", "sample_box must be positive"));
            }
        }
        Command::PhaseScan => {
            if config.axes.is_empty() {
                out.push(diag("axes", "phase-scan needs at least one axis"));
            } else if let Some(spec) = &spec {
                for e in validate_grid(&config.grid_request(spec)) {
                    if !matches!(e, Error::GridTooLarge { .. }) {
                        out.push(diag("axes", e.to_string()));
                    }
                }
            }
        }
        Command::Trajectory | Command::Poincare => {
            match &config.init {
                None => out.push(diag("init", format!("initial state needs {} values", 2 * n))),
                Some(v) if v.len() != 2 * n => out.push(diag(
                    "init",
                    format!("{} initial values given, need 2N = {}", v.len(), 2 * n),
                )),
                _ => {}
            }
            if !(config.dt > 0.0 && config.dt.is_finite()) {
                out.push(diag("dt", "dt must be positive"));
            }
            match config.t_end {
                None => out.push(diag("t_end", "t_end is required")),
                Some(t) if !(t > 0.0 && t.is_finite()) => out.push(diag("t_end", "t_end must be positive")),
                _ => {}
            }
            if !(config.dt_out >= config.dt && config.dt_out.is_finite()) {
                out.push(diag("dt_out", "dt_out must be at least dt"));
            }
            if command == Command::Poincare {
                let s = &config.section;
                for v in [s.variable, s.projection.0, s.projection.1] {
                    let (Variable::X(j, _) | Variable::V(j, _)) = v;
                    if j >= n {
                        out.push(diag("section", format!("{v} is outside a {n}-site chain")));
                    }
                }
            }
        }
        Command::OracleCheck => {
            if config.cutoff < 1 {
                out.push(diag("cutoff", format!("cutoff must be positive (got {})", config.cutoff)));
            }
        }
    }
    out
}

// ---------- output rendering ----------

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

fn complex_cells(z: Complex64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

fn complex_header(name: &str) -> [String; 2] {
    [format!("{name}_re"), format!("{name}_im")]
}

fn occ_header(n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("n{j}")).collect()
}

fn witness_text(w: Option<Witness>) -> String {
    match w {
        None => String::new(),
        Some(Witness::ComplexMode(j)) => format!("complex_mode:{j}"),
        Some(Witness::Coalescing(a, b)) => format!("coalescing:{a}:{b}"),
    }
}

fn levels_csv(n: usize, levels: &[EnergyLevel]) -> String {
    let mut out = String::new();
    let mut header = occ_header(n);
    header.extend(complex_header("energy"));
    header.push("is_real".into());
    push_row(&mut out, &header);
    for l in levels {
        let mut row: Vec<String> = l.occ.as_slice().iter().map(|k| k.to_string()).collect();
        row.extend(complex_cells(l.energy));
        row.push(l.is_real.to_string());
        push_row(&mut out, &row);
    }
    out
}

fn sample_csv(n: usize, s: &EigenfunctionSample) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = (1..=n).map(|j| format!("x{j}")).collect();
    header.extend(complex_header("psi"));
    push_row(&mut out, &header);
    for (p, v) in s.points.iter().zip(&s.values) {
        let mut row: Vec<String> = p.iter().map(|&x| num(x)).collect();
        row.extend(complex_cells(*v));
        push_row(&mut out, &row);
    }
    out
}

#[derive(Serialize)]
struct PhasePointReport {
    phase: String,
    code: u8,
    witness: Option<Witness>,
    nu_sq: Option<Vec<Complex64>>,
}

fn grid_csv(grid: &PhaseGrid) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = grid.axes.iter().map(|a| a.param.to_string()).collect();
    header.push("code".into());
    push_row(&mut out, &header);
    for (k, c) in grid.cells.iter().enumerate() {
        let mut row: Vec<String> = grid.coordinates(k).into_iter().map(num).collect();
        row.push(c.code().to_string());
        push_row(&mut out, &row);
    }
    out
}

#[derive(Serialize)]
struct GridJson<'a> {
    axes: &'a [Axis],
    fixed: &'a ChainSpec,
    tol: f64,
    shape: Vec<usize>,
    codes: Vec<u8>,
}

fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let n = record.spec.n();
    let mut out = String::new();
    let mut header = vec!["t".to_string()];
    for name in ["x", "v"] {
        for j in 1..=n {
            header.extend(complex_header(&format!("{name}{j}")));
        }
    }
    header.extend(complex_header("h"));
    push_row(&mut out, &header);
    for (s, h) in record.states.iter().zip(&record.energy) {
        let mut row = vec![num(s.t)];
        for z in s.x.iter().chain(&s.v) {
            row.extend(complex_cells(*z));
        }
        row.extend(complex_cells(*h));
        push_row(&mut out, &row);
    }
    out
}

fn section_csv(section: &PoincareSection) -> String {
    let mut out = String::new();
    let (a, b) = section.config.projection;
    push_row(&mut out, &["t".into(), a.to_string(), b.to_string()]);
    for (t, p) in section.times.iter().zip(&section.points) {
        push_row(&mut out, &[num(*t), num(p[0]), num(p[1])]);
    }
    out
}

fn comparison_csv(cmp: &SpectralComparison) -> String {
    let mut out = String::new();
    let mut header = occ_header(cmp.n_sites);
    header.extend(complex_header("analytic"));
    header.extend(complex_header("numeric"));
    header.push("distance".into());
    push_row(&mut out, &header);
    for m in &cmp.matches {
        let mut row: Vec<String> = m.occ.as_slice().iter().map(|k| k.to_string()).collect();
        row.extend(complex_cells(m.analytic));
        row.extend(complex_cells(m.numeric));
        row.push(num(m.distance));
        push_row(&mut out, &row);
    }
    out
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Rendered artifact plus a small machine-readable summary for the manifest.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub body: String,
    pub summary: serde_json::Value,
}

fn sample_points(config: &RunConfig, n: usize) -> Vec<Vec<f64>> {
    if !config.points.is_empty() {
        return config.points.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let b = config.sample_box;
    (0..config.samples)
        .map(|_| (0..n).map(|_| rng.random_range(-b..b)).collect())
        .collect()
}

/// Runs the computation for a validated config and renders its output.
/// Nothing is written to disk.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    let problems = validate(config);
    if !problems.is_empty() {
        let text: Vec<String> = problems.iter().map(|d| d.to_string()).collect();
        return Err(Error::ConfigParse(text.join("; ")));
    }
    let spec = config.chain_spec()?;
    let n = spec.n();
    let format = config.format;
    let command = config.command.expect("validated");

    let (body, summary) = match command {
        Command::Spectrum => {
            let levels = enumerate_levels(&spec, config.max_quanta)?;
            let body = match format {
                Format::Csv => levels_csv(n, &levels),
                Format::Json => json(&levels)?,
            };
            let real = levels.iter().filter(|l| l.is_real).count();
            (body, serde_json::json!({ "levels": levels.len(), "real_levels": real }))
        }
        Command::Eigenfunction => {
            let occ = OccupationVector::new(config.occ.clone().expect("validated"));
            let sample = eigenfunction_evaluate(&spec, &occ, &sample_points(config, n))?;
            let energy = sample.eigenfunction().energy();
            let body = match format {
                Format::Csv => sample_csv(n, &sample),
                Format::Json => json(&serde_json::json!({
                    "energy": energy,
                    "occ": &sample.occ,
                    "points": &sample.points,
                    "values": &sample.values,
                }))?,
            };
            (body, serde_json::json!({ "energy": energy, "points": sample.points.len() }))
        }
        Command::PhasePoint => {
            let class: PhaseClass = classify_point(spec.omega_sq(), spec.gamma(), config.tol)?;
            let report = PhasePointReport {
                phase: class.phase.to_string(),
                code: class.phase.code(),
                witness: class.witness,
                nu_sq: mode_set(&spec).ok().map(|m| m.nu_sq().to_vec()),
            };
            let body = match format {
                Format::Csv => {
                    let mut out = String::new();
                    push_row(&mut out, &["phase".into(), "code".into(), "witness".into()]);
                    push_row(
                        &mut out,
                        &[report.phase.clone(), report.code.to_string(), witness_text(report.witness)],
                    );
                    out
                }
                Format::Json => json(&report)?,
            };
            (body, serde_json::json!({ "phase": report.phase }))
        }
        Command::PhaseScan => {
            let grid = scan_phase_diagram(&config.grid_request(&spec))?;
            let body = match format {
                Format::Csv => grid_csv(&grid),
                Format::Json => json(&GridJson {
                    axes: &grid.axes,
                    fixed: &grid.fixed,
                    tol: grid.tol,
                    shape: grid.shape(),
                    codes: grid.cells.iter().map(|c| c.code()).collect(),
                })?,
            };
            let counts: Vec<usize> = (0..3u8)
                .map(|code| grid.cells.iter().filter(|c| c.code() == code).count())
                .collect();
            (body, serde_json::json!({ "cells": grid.cells.len(), "counts_by_code": counts }))
        }
        Command::Trajectory | Command::Poincare => {
            let init = config.initial_state(n)?;
            let record = integrate(&spec, &init, config.dt, config.t_end.expect("validated"), config.dt_out)?;
            let class = classify_trajectory(&spec, &init)
                .map(|c| c.name().to_string())
                .unwrap_or_else(|e| format!("unclassified ({})", e.kind()));
            if command == Command::Trajectory {
                let body = match format {
                    Format::Csv => trajectory_csv(&record),
                    Format::Json => json(&record)?,
                };
                let summary = serde_json::json!({
                    "class": class,
                    "samples": record.states.len(),
                    "bounded_drift": record.bounded_drift(),
                    "growing_drift": record.growing_drift(),
                });
                (body, summary)
            } else {
                let section = poincare_section(&record, &config.section)?;
                let body = match format {
                    Format::Csv => section_csv(&section),
                    Format::Json => json(&section)?,
                };
                (body, serde_json::json!({ "class": class, "points": section.points.len() }))
            }
        }
        Command::OracleCheck => {
            let basis = FockBasisSpec::new(config.cutoff as usize, n);
            let cmp = fock_spectrum_check(&spec, &basis, config.oracle_quanta)?;
            let body = match format {
                Format::Csv => comparison_csv(&cmp),
                Format::Json => json(&cmp)?,
            };
            let summary = serde_json::json!({
                "matched": cmp.matches.len(),
                "max_distance": cmp.max_distance,
                "dimension": basis.dimension(),
            });
            (body, summary)
        }
    };
    Ok(RunOutput { body, summary })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: String,
    config: &'a RunConfig,
    output: Option<&'a Path>,
    summary: &'a serde_json::Value,
    wall_time_s: f64,
}

/// Sidecar manifest path: `<output>.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Executes on a pool of `config.threads` workers and writes the output
/// (stdout when no path is set) and, for file outputs, the manifest.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::ConfigParse(format!("cannot start {} threads: {e}", config.threads)))?;
    let out = pool.install(|| execute(config))?;
    match &config.output {
        None => print!("{}", out.body),
        Some(path) => {
            std::fs::write(path, &out.body)?;
            let manifest = Manifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                command: config.command.map(|c| c.to_string()).unwrap_or_default(),
                config,
                output: Some(path),
                summary: &out.summary,
                wall_time_s: start.elapsed().as_secs_f64(),
            };
            std::fs::write(manifest_path(path), json(&manifest)?)?;
        }
    }
    Ok(out)
}

// ---------- flags ----------

fn real_arg(s: &str) -> std::result::Result<f64, String> {
    parse_real(s).map_err(|e| e.to_string())
}

fn reals_arg(s: &str) -> std::result::Result<Vec<f64>, String> {
    parse_list(s, parse_real).map_err(|e| e.to_string())
}

fn complexes_arg(s: &str) -> std::result::Result<Vec<Complex64>, String> {
    parse_list(s, parse_complex).map_err(|e| e.to_string())
}

fn axes_arg(s: &str) -> std::result::Result<Vec<Axis>, String> {
    parse_list(s, str::parse).map_err(|e: Error| e.to_string())
}

fn occ_arg(s: &str) -> std::result::Result<Vec<u32>, String> {
    parse_list(s, |p| {
        p.trim()
            .parse()
            .map_err(|_| Error::ConfigParse(format!("'{p}' is not an occupation number")))
    })
    .map_err(|e| e.to_string())
}

fn variable_arg(s: &str) -> std::result::Result<Variable, String> {
    s.trim().parse().map_err(|e: Error| e.to_string())
}

fn projection_arg(s: &str) -> std::result::Result<(Variable, Variable), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("projection '{s}' must be two variables, e.g. re_x1,re_v1"))?;
    Ok((variable_arg(a)?, variable_arg(b)?))
}

fn direction_arg(s: &str) -> std::result::Result<Direction, String> {
    match s {
        "ascending" | "up" => Ok(Direction::Ascending),
        "descending" | "down" => Ok(Direction::Descending),
        "both" => Ok(Direction::Both),
        _ => Err(format!("direction '{s}' must be ascending, descending or both")),
    }
}

// Aliases keep clap from treating list-valued flags as repeated scalars.
type Reals = Vec<f64>;
type Complexes = Vec<Complex64>;
type Axes = Vec<Axis>;
type Occupations = Vec<u32>;

/// Command-line flags. Every flag is optional and overrides the config file.
#[derive(Debug, Parser)]
#[command(name = "ptchain", version, about = "Spectra, phases and classical orbits of imaginary-coupled oscillator chains")]
pub struct Flags {
    pub command: Option<Command>,

    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated squared frequencies, e.g. `3,1` or `1/3,2/3,1`.
    #[arg(long, value_parser = reals_arg, allow_hyphen_values = true)]
    pub omega_sq: Option<Reals>,
    #[arg(long, value_parser = real_arg, allow_hyphen_values = true)]
    pub omega_x_sq: Option<f64>,
    #[arg(long, value_parser = real_arg, allow_hyphen_values = true)]
    pub omega_y_sq: Option<f64>,
    #[arg(long, value_parser = real_arg, allow_hyphen_values = true)]
    pub omega_z_sq: Option<f64>,
    #[arg(long, value_parser = real_arg, allow_hyphen_values = true)]
    pub omega_w_sq: Option<f64>,
    #[arg(long, value_parser = real_arg, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub max_quanta: Option<u32>,
    #[arg(long, value_parser = occ_arg)]
    pub occ: Option<Occupations>,
    /// Evaluation point, comma separated; repeat for more points.
    #[arg(long = "point", value_parser = reals_arg, allow_hyphen_values = true)]
    pub points: Vec<Reals>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_parser = real_arg)]
    pub sample_box: Option<f64>,
    /// `param:lo:hi:count[,param:lo:hi:count...]`, params `gamma`, `wx`, `wysq`, `w5`...
    #[arg(long, value_parser = axes_arg, allow_hyphen_values = true)]
    pub axes: Option<Axes>,
    #[arg(long, value_parser = real_arg)]
    pub tol: Option<f64>,
    /// 2N complex values, positions then velocities, e.g. `-1+i,2-2i,1+1/2i,3/2+i`.
    #[arg(long, value_parser = complexes_arg, allow_hyphen_values = true)]
    pub init: Option<Complexes>,
    #[arg(long, value_parser = real_arg)]
    pub dt: Option<f64>,
    #[arg(long, value_parser = real_arg)]
    pub t_end: Option<f64>,
    #[arg(long, value_parser = real_arg)]
    pub dt_out: Option<f64>,
    /// Section variable, e.g. `re_x2`.
    #[arg(long, value_parser = variable_arg)]
    pub section_var: Option<Variable>,
    #[arg(long, value_parser = real_arg, allow_hyphen_values = true)]
    pub section_level: Option<f64>,
    #[arg(long, value_parser = direction_arg)]
    pub direction: Option<Direction>,
    /// Projection pair, e.g. `re_x1,re_v1`.
    #[arg(long, value_parser = projection_arg)]
    pub projection: Option<(Variable, Variable)>,
    #[arg(long, allow_hyphen_values = true)]
    pub cutoff: Option<i64>,
    #[arg(long)]
    pub oracle_quanta: Option<u32>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Flags {
    /// Overlays the flags on `base`.
    pub fn apply(self, mut c: RunConfig) -> RunConfig {
        macro_rules! set {
            ($($field:ident),*) => {
                $( if let Some(v) = self.$field { c.$field = v; } )*
            };
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {
                $( if self.$field.is_some() { c.$field = self.$field; } )*
            };
        }
        set!(gamma, max_quanta, samples, sample_box, axes, tol, dt, dt_out, cutoff, format, seed, threads);
        set_opt!(command, n, omega_sq, occ, init, t_end, oracle_quanta, output);
        if !self.points.is_empty() {
            c.points = self.points;
        }
        if let Some(v) = self.section_var {
            c.section.variable = v;
        }
        if let Some(v) = self.section_level {
            c.section.level = v;
        }
        if let Some(v) = self.direction {
            c.section.direction = v;
        }
        if let Some(v) = self.projection {
            c.section.projection = v;
        }

        let sites = [self.omega_x_sq, self.omega_y_sq, self.omega_z_sq, self.omega_w_sq];
        if sites.iter().any(Option::is_some) {
            let n = c.n.or(c.omega_sq.as_ref().map(Vec::len)).unwrap_or(0);
            let w = c.omega_sq.get_or_insert_with(|| vec![1.0; n]);
            for (j, v) in sites.into_iter().enumerate() {
                if let (Some(v), Some(slot)) = (v, w.get_mut(j)) {
                    *slot = v;
                }
            }
        }
        c
    }
}

/// Parses arguments, merges the config file and flags.
pub fn load_config<I, T>(args: I) -> std::result::Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let flags = Flags::try_parse_from(args)?;
    let base = match &flags.config {
        Some(path) => RunConfig::from_json_file(path)
            .map_err(|e| clap::Error::raw(clap::error::ErrorKind::Io, e.to_string()))?,
        None => RunConfig::default(),
    };
    Ok(flags.apply(base))
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
    diagnostics: &'a [Diagnostic],
}

fn report(kind: &str, code: i32, message: String, diagnostics: &[Diagnostic]) -> i32 {
    let r = ErrorReport {
        error: kind,
        exit_code: code,
        message,
        diagnostics,
    };
    eprintln!("{}", serde_json::to_string(&r).unwrap_or_default());
    code
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.render().to_string();
            return report("ConfigParse", 2, msg.trim().to_string(), &[]);
        }
    };
    let problems = validate(&config);
    if !problems.is_empty() {
        return report("ConfigParse", 2, "invalid configuration".into(), &problems);
    }
    match run(&config) {
        Ok(_) => 0,
        Err(e) => report(e.kind(), e.exit_code(), e.to_string(), &[]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(args: &[&str]) -> RunConfig {
        let mut full = vec!["ptchain"];
        full.extend_from_slice(args);
        load_config(full).unwrap()
    }

    #[test]
    fn rationals() {
        assert_eq!(parse_real("1/12").unwrap(), 1.0 / 12.0);
        assert_eq!(parse_real(" -2/3 ").unwrap(), -2.0 / 3.0);
        assert_eq!(parse_real("1e-3").unwrap(), 1e-3);
        assert!(parse_real("1/0").is_err());
        assert!(parse_real("abc").is_err());
    }

    #[test]
    fn complex_literals() {
        let c = Complex64::new;
        let cases = [
            ("-1+i", c(-1.0, 1.0)),
            ("2-2i", c(2.0, -2.0)),
            ("1+1/2i", c(1.0, 0.5)),
            ("3/2+i", c(1.5, 1.0)),
            ("-i", c(0.0, -1.0)),
            ("0.25", c(0.25, 0.0)),
            ("1e-3-2e+1i", c(1e-3, -20.0)),
            ("5i", c(0.0, 5.0)),
        ];
        for (s, want) in cases {
            assert_eq!(parse_complex(s).unwrap(), want, "{s}");
        }
    }

    #[test]
    fn validate_examples() {
        let mut c = cfg(&["spectrum", "--n", "1"]);
        let d = validate(&c);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "n must be ≥ 2");

        c = cfg(&["oracle-check", "--n", "2", "--gamma", "1", "--cutoff", "-3"]);
        assert!(validate(&c).iter().any(|d| d.field == "cutoff"));

        c = cfg(&["spectrum", "--omega-sq", "3,1", "--gamma", "1/2", "--max-quanta", "4"]);
        assert!(validate(&c).is_empty());
    }

    #[test]
    fn validate_reports_everything() {
        let c = cfg(&["trajectory", "--n", "1", "--dt", "0", "--init", "1,2,3"]);
        let fields: Vec<String> = validate(&c).into_iter().map(|d| d.field).collect();
        for f in ["n", "init", "dt", "t_end"] {
            assert!(fields.iter().any(|x| x == f), "missing {f} in {fields:?}");
        }
    }

    #[test]
    fn site_overrides() {
        let c = cfg(&["phase-scan", "--n", "3", "--gamma", "1/12", "--omega-y-sq", "2/3", "--axes", "wx:0:2:4,wz:0:2:4"]);
        assert_eq!(c.omega_sq.as_deref(), Some(&[1.0, 2.0 / 3.0, 1.0][..]));
        assert_eq!(c.axes.len(), 2);
        assert!(validate(&c).is_empty());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"command":"spectrum","n":2,"gamma":0.25,"max_quanta":3,"format":"json"}"#,
        )
        .unwrap();
        let c = cfg(&["--config", path.to_str().unwrap(), "--gamma", "1"]);
        assert_eq!(c.command, Some(Command::Spectrum));
        assert_eq!(c.gamma, 1.0);
        assert_eq!(c.max_quanta, 3);
        assert_eq!(c.format, Format::Json);
    }

    #[test]
    fn config_round_trip() {
        let c = cfg(&[
            "poincare", "--omega-sq", "3,1", "--gamma", "1/2", "--init", "1+1/2i,-2+2i,1+1/2i,-3/2-3/2i",
            "--t-end", "10", "--direction", "ascending",
        ]);
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn spectrum_csv_levels() {
        let c = cfg(&["spectrum", "--n", "2", "--gamma", "1", "--max-quanta", "10"]);
        let out = execute(&c).unwrap();
        let lines: Vec<&str> = out.body.lines().collect();
        assert_eq!(lines[0], "n1,n2,energy_re,energy_im,is_real");
        assert_eq!(lines.len(), 1 + 66);
        assert!(!out.body.contains('\r'));
    }

    #[test]
    fn csv_floats_round_trip() {
        let c = cfg(&["spectrum", "--n", "3", "--gamma", "0.3", "--max-quanta", "3"]);
        let out = execute(&c).unwrap();
        let levels = enumerate_levels(&c.chain_spec().unwrap(), 3).unwrap();
        for (line, l) in out.body.lines().skip(1).zip(&levels) {
            let cols: Vec<&str> = line.split(',').collect();
            let re: f64 = cols[3].parse().unwrap();
            let im: f64 = cols[4].parse().unwrap();
            assert_eq!(re.to_bits(), l.energy.re.to_bits());
            assert_eq!(im.to_bits(), l.energy.im.to_bits());
        }
    }

    #[test]
    fn json_complex_pairs() {
        let c = cfg(&["phase-point", "--omega-sq", "3,1", "--gamma", "1/2", "--format", "json"]);
        let out = execute(&c).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.body).unwrap();
        assert_eq!(v["phase"], "Unbroken");
        assert_eq!(v["code"], 0);
        let nu_sq = v["nu_sq"].as_array().unwrap();
        assert_eq!(nu_sq.len(), 2);
        assert_eq!(nu_sq[0].as_array().unwrap().len(), 2);
    }

    #[test]
    fn random_points_follow_seed() {
        let a = cfg(&["eigenfunction", "--n", "2", "--gamma", "1", "--occ", "1,0", "--samples", "5", "--seed", "7"]);
        let b = cfg(&["eigenfunction", "--n", "2", "--gamma", "1", "--occ", "1,0", "--samples", "5", "--seed", "8"]);
        assert_eq!(execute(&a).unwrap().body, execute(&a).unwrap().body);
        assert_ne!(execute(&a).unwrap().body, execute(&b).unwrap().body);
        assert_eq!(execute(&a).unwrap().body.lines().count(), 6);
    }

    #[test]
    fn phase_scan_csv_codes() {
        let c = cfg(&["phase-scan", "--omega-sq", "1,1", "--gamma", "1/2", "--axes", "wxsq:0:4:4"]);
        let out = execute(&c).unwrap();
        let codes: Vec<&str> = out.body.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
        // ωx² at 0.5, 1.5, 2.5, 3.5 against |ωx² − 1| > 1.
        assert_eq!(codes, ["2", "2", "0", "0"]);
    }

    #[test]
    fn run_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("levels.csv");
        let c = cfg(&["spectrum", "--n", "2", "--gamma", "1", "--max-quanta", "2", "-o", out.to_str().unwrap()]);
        run(&c).unwrap();
        assert!(out.exists());
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(manifest_path(&out)).unwrap()).unwrap();
        assert_eq!(m["command"], "spectrum");
        assert_eq!(m["config"]["gamma"], 1.0);
        assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["ptchain", "spectrum", "--n", "1"]), 2);
        assert_eq!(main_with_args(["ptchain", "spectrum", "--gamma", "x"]), 2);
        // 2 sites at max_quanta 2000 is about two million levels.
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("big.csv");
        let args = ["ptchain", "spectrum", "--n", "2", "--max-quanta", "2000", "-o", out.to_str().unwrap()];
        assert_eq!(main_with_args(args), 4);
        assert_eq!(main_with_args(["ptchain", "phase-point", "--n", "2", "--gamma", "1", "-o", dir.path().join("p.csv").to_str().unwrap()]), 0);
    }
}
