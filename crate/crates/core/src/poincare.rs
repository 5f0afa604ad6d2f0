//! Poincaré sections of trajectory records.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::build_coupling_matrix;
use crate::classical::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::modes::mode_set;

/// Minimum number of record samples per period of the fastest mode.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

impl Part {
    fn of(self, z: Complex64) -> f64 {
        match self {
            Part::Re => z.re,
            Part::Im => z.im,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ascending,
    Descending,
    Both,
}

/// One real phase-space coordinate: a part of `x_j` or of `v_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Variable {
    X(usize, Part),
    V(usize, Part),
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, j, part) = match self {
            Variable::X(j, p) => ("x", j, p),
            Variable::V(j, p) => ("v", j, p),
        };
        let part = match part {
            Part::Re => "re",
            Part::Im => "im",
        };
        write!(f, "{part}_{name}{}", j + 1)
    }
}

impl From<Variable> for String {
    fn from(v: Variable) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for Variable {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Variable {
    type Err = Error;

    /// `re_x2`, `im_v1`, ... with one-based site indices.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ConfigParse(format!("unknown phase-space variable '{s}'"));
        let (part, rest) = s.split_once('_').ok_or_else(bad)?;
        let part = match part {
            "re" => Part::Re,
            "im" => Part::Im,
            _ => return Err(bad()),
        };
        let (kind, idx) = rest.split_at(rest.len().min(1));
        let j: usize = idx.parse().map_err(|_| bad())?;
        if j == 0 {
            return Err(bad());
        }
        match kind {
            "x" => Ok(Variable::X(j - 1, part)),
            "v" => Ok(Variable::V(j - 1, part)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionConfig {
    /// Section function is `variable − level`.
    pub variable: Variable,
    pub level: f64,
    pub direction: Direction,
    pub projection: (Variable, Variable),
}

impl Default for SectionConfig {
    /// `Re x₂ = 0` in both directions, projected on `(Re x₁, Re v₁)`.
    /// One-sided sections of the slow reference orbits give too few points
    /// over practical run lengths.
    fn default() -> Self {
        SectionConfig {
            variable: Variable::X(1, Part::Re),
            level: 0.0,
            direction: Direction::Both,
            projection: (Variable::X(0, Part::Re), Variable::V(0, Part::Re)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareSection {
    pub config: SectionConfig,
    pub times: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub interpolation: &'static str,
}

impl PoincareSection {
    /// `(min₀, max₀, min₁, max₁)` of the first `k` points.
    pub fn bounding_box(&self, k: usize) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in self.points.iter().take(k) {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].max(p[0]);
            b[2] = b[2].min(p[1]);
            b[3] = b[3].max(p[1]);
        }
        b
    }
}

// Value and time derivative of a variable at record sample `k`, using the
// equations of motion for velocity derivatives.
struct Sampler {
    accel: Vec<Vec<Complex64>>,
}

impl Sampler {
    fn new(record: &TrajectoryRecord) -> Self {
        let m = build_coupling_matrix(&record.spec);
        let accel = record
            .states
            .iter()
            .map(|s| m.apply(&s.x).into_iter().map(|a| -a).collect())
            .collect();
        Sampler { accel }
    }

    fn get(&self, record: &TrajectoryRecord, k: usize, var: Variable) -> (f64, f64) {
        let s = &record.states[k];
        match var {
            Variable::X(j, p) => (p.of(s.x[j]), p.of(s.v[j])),
            Variable::V(j, p) => (p.of(s.v[j]), p.of(self.accel[k][j])),
        }
    }
}

// Cubic Hermite on [0, h] through (f0, d0) and (f1, d1), at u = t/h.
fn hermite(f0: f64, d0: f64, f1: f64, d1: f64, h: f64, u: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * f0
        + (u3 - 2.0 * u2 + u) * h * d0
        + (-2.0 * u3 + 3.0 * u2) * f1
        + (u3 - u2) * h * d1
}

fn check_variable(var: Variable, n: usize) -> Result<()> {
    let (Variable::X(j, _) | Variable::V(j, _)) = var;
    if j >= n {
        return Err(Error::InvalidSpec(format!(
            "section variable {var} refers to site {} of a {n}-site chain",
            j + 1
        )));
    }
    Ok(())
}

/// Detects crossings of `variable = level` between consecutive samples and
/// refines each by bisection on the cubic Hermite interpolant.
pub fn poincare_section(record: &TrajectoryRecord, config: &SectionConfig) -> Result<PoincareSection> {
    let n = record.spec.n();
    for v in [config.variable, config.projection.0, config.projection.1] {
        check_variable(v, n)?;
    }
    let fastest = mode_set(&record.spec)?
        .nu()
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let period = 2.0 * PI / fastest;
    if record.dt_out * MIN_SAMPLES_PER_PERIOD > period {
        return Err(Error::UndersampledRecord(format!(
            "dt_out = {} gives fewer than {MIN_SAMPLES_PER_PERIOD} samples per fastest period {period:.4}",
            record.dt_out
        )));
    }

    let sampler = Sampler::new(record);
    let mut times = Vec::new();
    let mut points = Vec::new();
    for k in 0..record.states.len().saturating_sub(1) {
        let (f0, d0) = sampler.get(record, k, config.variable);
        let (f1, d1) = sampler.get(record, k + 1, config.variable);
        let (f0, f1) = (f0 - config.level, f1 - config.level);
        let up = f0 < 0.0 && f1 >= 0.0;
        let down = f0 > 0.0 && f1 <= 0.0;
        let wanted = match config.direction {
            Direction::Ascending => up,
            Direction::Descending => down,
            Direction::Both => up || down,
        };
        if !wanted {
            continue;
        }
        let h = record.states[k + 1].t - record.states[k].t;
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            let fm = hermite(f0, d0, f1, d1, h, mid);
            if (fm < 0.0) == (f0 < 0.0) {
                a = mid;
            } else {
                b = mid;
            }
        }
        let u = 0.5 * (a + b);
        let proj = |var| {
            let (p0, q0) = sampler.get(record, k, var);
            let (p1, q1) = sampler.get(record, k + 1, var);
            hermite(p0, q0, p1, q1, h, u)
        };
        times.push(record.states[k].t + u * h);
        points.push([proj(config.projection.0), proj(config.projection.1)]);
    }
    if points.is_empty() {
        return Err(Error::NoCrossings);
    }
    Ok(PoincareSection {
        config: config.clone(),
        times,
        points,
        interpolation: "cubic-hermite",
    })
}
