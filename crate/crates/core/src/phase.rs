//! Unbroken / exceptional / broken classification of parameter points and
//! grid scans of the phase diagram.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::modes::mode_set;

pub const DEFAULT_PHASE_TOL: f64 = 1e-9;

/// Relative separation below which two computed roots count as one.
/// A double root of a polynomial splits by O(√ε) under rounding, so the
/// requested tolerance is not allowed to go below this.
pub const SEPARATION_FLOOR: f64 = 1e-7;

/// Cap on the number of grid cells.
pub const MAX_GRID_CELLS: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Unbroken,
    Exceptional,
    Broken,
}

impl Phase {
    /// Integer code used in grid output.
    pub fn code(self) -> u8 {
        match self {
            Phase::Unbroken => 0,
            Phase::Exceptional => 1,
            Phase::Broken => 2,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Unbroken => "Unbroken",
            Phase::Exceptional => "Exceptional",
            Phase::Broken => "Broken",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Witness {
    /// Index (in mode-set order) of a non-real squared frequency.
    ComplexMode(usize),
    /// Two squared frequencies that coincide within tolerance.
    Coalescing(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseClass {
    pub phase: Phase,
    pub witness: Option<Witness>,
}

impl PhaseClass {
    fn bare(phase: Phase) -> Self {
        PhaseClass { phase, witness: None }
    }
}

/// Two sites: unbroken iff `|ωx² − ωy²| > 2|γ|`. `tol` is absolute in
/// parameter space.
pub fn classify_phase_n2(omega_x_sq: f64, omega_y_sq: f64, gamma: f64, tol: f64) -> PhaseClass {
    let gap = (omega_x_sq - omega_y_sq).abs() - 2.0 * gamma.abs();
    if gap.abs() <= tol {
        PhaseClass {
            phase: Phase::Exceptional,
            witness: Some(Witness::Coalescing(0, 1)),
        }
    } else if gap > 0.0 {
        PhaseClass::bare(Phase::Unbroken)
    } else {
        PhaseClass::bare(Phase::Broken)
    }
}

// Turns signed condition margins (positive = satisfied) into a phase.
fn from_margins(margins: &[f64], thr: f64) -> Phase {
    if margins.iter().all(|&m| m > thr) {
        Phase::Unbroken
    } else if margins.iter().all(|&m| m >= -thr) {
        Phase::Exceptional
    } else {
        Phase::Broken
    }
}

fn threshold(tol: f64) -> f64 {
    tol.max(SEPARATION_FLOOR)
}

// Maps a polynomial value near a double root onto the root-separation
// scale: f(c) ≈ ½ f''(c) δ², with f'' of order s^(deg−2).
fn root_scale(v: f64, s: f64, deg: i32) -> f64 {
    v.signum() * v.abs().sqrt() / s.powf(deg as f64 / 2.0)
}

fn params_scale(omega_sq: &[f64], gamma: f64) -> f64 {
    omega_sq.iter().copied().fold(gamma.abs(), f64::max)
}

/// Coefficients `(A, B, C)` of `f(λ) = λ³ − Aλ² + Bλ − C` for three sites.
pub fn cubic_coefficients(w: [f64; 3], gamma: f64) -> (f64, f64, f64) {
    let g2 = gamma * gamma;
    let a = w[0] + w[1] + w[2];
    let b = w[0] * w[1] + w[0] * w[2] + w[1] * w[2] + 2.0 * g2;
    let c = w[0] * w[1] * w[2] + (w[0] + w[2]) * g2;
    (a, b, c)
}

/// Signed, scale-free margins of the three-site conditions
/// `f(0) < 0, λmax > 0, λmin > 0, f(λmax) > 0, f(λmin) < 0`, where `λmax`
/// and `λmin` locate the local maximum and minimum. `None` when `f` has no
/// real extrema (one real root).
pub fn cubic_margins(w: [f64; 3], gamma: f64) -> Option<[f64; 5]> {
    let (a, b, c) = cubic_coefficients(w, gamma);
    let s = params_scale(&w, gamma);
    let f = |l: f64| ((l - a) * l + b) * l - c;
    // f'(λ) = 3λ² − 2Aλ + B
    let mut disc = a * a - 3.0 * b;
    if disc < 0.0 {
        if disc >= -1e-12 * a * a {
            disc = 0.0;
        } else {
            return None;
        }
    }
    let r = disc.sqrt();
    let l_max = (a - r) / 3.0;
    let l_min = (a + r) / 3.0;
    Some([
        root_scale(-f(0.0), s, 3),
        l_max / s,
        l_min / s,
        root_scale(f(l_max), s, 3),
        root_scale(-f(l_min), s, 3),
    ])
}

/// Discriminant of the three-site cubic, `−27 f(λmax) f(λmin)`.
pub fn cubic_discriminant(w: [f64; 3], gamma: f64) -> f64 {
    let (a, b, c) = cubic_coefficients(w, gamma);
    let f = |l: f64| ((l - a) * l + b) * l - c;
    let disc = (a * a - 3.0 * b).max(0.0);
    let r = disc.sqrt();
    -27.0 * f((a - r) / 3.0) * f((a + r) / 3.0)
}

/// Three-site closed-form classifier.
pub fn cubic_criteria_n3(omega_sq: [f64; 3], gamma: f64, tol: f64) -> PhaseClass {
    match cubic_margins(omega_sq, gamma) {
        Some(m) => PhaseClass::bare(from_margins(&m, threshold(tol))),
        None => PhaseClass::bare(Phase::Broken),
    }
}

/// Coefficients `(a, b, c, d)` of `f(λ) = λ⁴ − aλ³ + bλ² − cλ + d` for four
/// sites.
pub fn quartic_coefficients(w: [f64; 4], gamma: f64) -> (f64, f64, f64, f64) {
    let [x, y, z, v] = w;
    let g2 = gamma * gamma;
    let a = x + y + z + v;
    let b = x * y + x * z + x * v + y * z + y * v + z * v + 3.0 * g2;
    let c = x * y * z + x * y * v + x * z * v + y * z * v
        + 2.0 * g2 * x
        + 2.0 * g2 * v
        + g2 * y
        + g2 * z;
    let d = x * y * z * v + g2 * x * y + g2 * x * v + g2 * z * v + g2 * g2;
    (a, b, c, d)
}

/// Real roots of `p3 t³ + p2 t² + p1 t + p0` in ascending order when all
/// three are real (repeated roots allowed); `None` otherwise.
fn cubic_real_roots(p3: f64, p2: f64, p1: f64, p0: f64) -> Option<[f64; 3]> {
    let (b, c, d) = (p2 / p3, p1 / p3, p0 / p3);
    // t = u − b/3 gives u³ + p u + q
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let size = b.abs().max(c.abs().sqrt()).max(d.abs().cbrt()).max(f64::MIN_POSITIVE);
    if p.abs() <= 1e-14 * size * size {
        if q.abs() <= 1e-13 * size * size * size {
            return Some([-shift; 3]);
        }
        return None;
    }
    if p > 0.0 {
        return None;
    }
    let m = 2.0 * (-p / 3.0).sqrt();
    let arg = 3.0 * q / (p * m);
    if arg.abs() > 1.0 + 1e-10 {
        return None;
    }
    let theta = arg.clamp(-1.0, 1.0).acos() / 3.0;
    let mut r = [0.0; 3];
    for (k, slot) in r.iter_mut().enumerate() {
        *slot = m * (theta - 2.0 * PI * k as f64 / 3.0).cos() - shift;
    }
    r.sort_by(f64::total_cmp);
    Some(r)
}

/// Signed, scale-free margins of the four-site conditions: `f(0) > 0`,
/// three positive roots `c₁ < c₂ < c₃` of `f′`, `f(c₁) < 0`, `f(c₂) > 0`,
/// `f(c₃) < 0`. `None` when `f′` has a single real root.
pub fn quartic_margins(w: [f64; 4], gamma: f64) -> Option<[f64; 7]> {
    let (a, b, c, d) = quartic_coefficients(w, gamma);
    let s = params_scale(&w, gamma);
    let f = |l: f64| (((l - a) * l + b) * l - c) * l + d;
    let [c1, c2, c3] = cubic_real_roots(4.0, -3.0 * a, 2.0 * b, -c)?;
    Some([
        root_scale(f(0.0), s, 4),
        c1 / s,
        c2 / s,
        c3 / s,
        root_scale(-f(c1), s, 4),
        root_scale(f(c2), s, 4),
        root_scale(-f(c3), s, 4),
    ])
}

/// Four-site closed-form classifier.
pub fn quartic_criteria_n4(omega_sq: [f64; 4], gamma: f64, tol: f64) -> PhaseClass {
    match quartic_margins(omega_sq, gamma) {
        Some(m) => PhaseClass::bare(from_margins(&m, threshold(tol))),
        None => PhaseClass::bare(Phase::Broken),
    }
}

/// Generic classifier on the computed squared mode frequencies.
///
/// A root is real when `|Im λ| ≤ tol·s`, and two roots coalesce when
/// `|λa − λb| ≤ max(tol, SEPARATION_FLOOR)·s`, with `s = max(ω², |γ|)`.
/// Any isolated non-real root makes the point Broken; otherwise any
/// coalescing pair makes it Exceptional.
pub fn classify_phase(spec: &ChainSpec, tol: f64) -> Result<PhaseClass> {
    let modes = mode_set(spec)?;
    Ok(classify_roots(modes.nu_sq(), spec.scale(), tol))
}

pub fn classify_roots(lambda: &[Complex64], scale: f64, tol: f64) -> PhaseClass {
    let real_thr = tol * scale;
    let sep_thr = threshold(tol) * scale;
    let n = lambda.len();
    let mut clustered = vec![false; n];
    let mut first_pair = None;
    for a in 0..n {
        for b in (a + 1)..n {
            if (lambda[a] - lambda[b]).norm() <= sep_thr {
                clustered[a] = true;
                clustered[b] = true;
                first_pair.get_or_insert((a, b));
            }
        }
    }
    for (j, l) in lambda.iter().enumerate() {
        let real = l.im.abs() <= real_thr;
        if clustered[j] {
            continue;
        }
        if !real || l.re <= 0.0 {
            return PhaseClass {
                phase: Phase::Broken,
                witness: Some(Witness::ComplexMode(j)),
            };
        }
    }
    match first_pair {
        Some((a, b)) => PhaseClass {
            phase: Phase::Exceptional,
            witness: Some(Witness::Coalescing(a, b)),
        },
        None => PhaseClass::bare(Phase::Unbroken),
    }
}

/// Cheapest classifier for a parameter point: closed forms for two to four
/// sites, eigenvalues otherwise.
pub fn classify_point(omega_sq: &[f64], gamma: f64, tol: f64) -> Result<PhaseClass> {
    match *omega_sq {
        [x, y] => Ok(classify_phase_n2(x, y, gamma, tol)),
        [x, y, z] => Ok(cubic_criteria_n3([x, y, z], gamma, tol)),
        [x, y, z, w] => Ok(quartic_criteria_n4([x, y, z, w], gamma, tol)),
        _ => classify_phase(&ChainSpec::new(omega_sq.to_vec(), gamma)?, tol),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisParam {
    /// Natural frequency `ω_j` of site `j` (zero based); the chain uses its
    /// square.
    Omega(usize),
    /// `ω_j²` directly.
    OmegaSq(usize),
    Gamma,
}

const SITE_LETTERS: [char; 4] = ['x', 'y', 'z', 'w'];

fn site_name(j: usize) -> String {
    match SITE_LETTERS.get(j) {
        Some(c) => c.to_string(),
        None => (j + 1).to_string(),
    }
}

fn parse_site(s: &str) -> Option<usize> {
    if let Some(j) = SITE_LETTERS.iter().position(|c| s.len() == 1 && s.starts_with(*c)) {
        return Some(j);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Some(k - 1),
        _ => None,
    }
}

impl fmt::Display for AxisParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisParam::Omega(j) => write!(f, "w{}", site_name(*j)),
            AxisParam::OmegaSq(j) => write!(f, "w{}sq", site_name(*j)),
            AxisParam::Gamma => f.write_str("gamma"),
        }
    }
}

impl FromStr for AxisParam {
    type Err = Error;

    /// `gamma`, `wx`..`ww` or `w<k>` (one based) for `ω`, with a `sq` suffix
    /// for `ω²`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "gamma" {
            return Ok(AxisParam::Gamma);
        }
        let bad = || Error::ConfigParse(format!("unknown axis parameter '{s}'"));
        let rest = s.strip_prefix('w').ok_or_else(bad)?;
        let (site, squared) = match rest.strip_suffix("sq") {
            Some(site) => (site, true),
            None => (rest, false),
        };
        let j = parse_site(site).ok_or_else(bad)?;
        Ok(if squared {
            AxisParam::OmegaSq(j)
        } else {
            AxisParam::Omega(j)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: AxisParam,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    /// Cell-centred sample `i`: `lo + (i + ½)(hi − lo)/count`.
    pub fn value(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * (self.hi - self.lo) / self.count as f64
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

impl FromStr for Axis {
    type Err = Error;

    /// `param:lo:hi:count`, bounds may be rationals such as `1/12`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(Error::ConfigParse(format!(
                "axis '{s}' must look like param:lo:hi:count"
            )));
        }
        let count = parts[3]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::ConfigParse(format!("bad sample count in axis '{s}'")))?;
        Ok(Axis {
            param: parts[0].trim().parse()?,
            lo: crate::cli::parse_real(parts[1])?,
            hi: crate::cli::parse_real(parts[2])?,
            count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRequest {
    /// Fixed parameters; the axis parameters overwrite their entries.
    pub base: ChainSpec,
    pub axes: Vec<Axis>,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseGrid {
    pub axes: Vec<Axis>,
    pub fixed: ChainSpec,
    pub tol: f64,
    /// Row-major, last axis fastest.
    pub cells: Vec<Phase>,
}

impl PhaseGrid {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    /// Axis sample indices of flat cell `k`.
    pub fn index_of(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (slot, axis) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = k % axis.count;
            k /= axis.count;
        }
        idx
    }

    pub fn coordinates(&self, k: usize) -> Vec<f64> {
        self.index_of(k)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.value(i))
            .collect()
    }

    /// Class of the cell whose centre is nearest to `point` (one value per
    /// axis).
    pub fn nearest(&self, point: &[f64]) -> Phase {
        let mut k = 0;
        for (axis, &p) in self.axes.iter().zip(point) {
            let step = (axis.hi - axis.lo) / axis.count as f64;
            let i = ((p - axis.lo) / step - 0.5).round().clamp(0.0, (axis.count - 1) as f64);
            k = k * axis.count + i as usize;
        }
        self.cells[k]
    }

    pub fn count(&self, phase: Phase) -> usize {
        self.cells.iter().filter(|&&c| c == phase).count()
    }
}

pub fn validate_grid(req: &GridRequest) -> Vec<Error> {
    let mut errs = Vec::new();
    let n = req.base.n();
    if req.axes.is_empty() || req.axes.len() > 3 {
        errs.push(Error::InvalidSpec(format!(
            "a phase scan needs 1 to 3 axes (got {})",
            req.axes.len()
        )));
    }
    for a in &req.axes {
        if !(a.lo.is_finite() && a.hi.is_finite() && a.lo < a.hi) {
            errs.push(Error::InvalidSpec(format!("axis {} needs lo < hi", a.param)));
        }
        if a.count == 0 {
            errs.push(Error::InvalidSpec(format!("axis {} has no samples", a.param)));
        }
        match a.param {
            AxisParam::Omega(j) | AxisParam::OmegaSq(j) if j >= n => {
                errs.push(Error::InvalidSpec(format!(
                    "axis {} refers to site {} of a {n}-site chain",
                    a.param,
                    j + 1
                )))
            }
            AxisParam::OmegaSq(_) if a.count > 0 && a.value(0) <= 0.0 => {
                errs.push(Error::InvalidSpec(format!(
                    "axis {} reaches non-positive squared frequencies",
                    a.param
                )))
            }
            _ => {}
        }
    }
    let cells = req
        .axes
        .iter()
        .fold(1u128, |acc, a| acc.saturating_mul(a.count as u128));
    if cells > MAX_GRID_CELLS {
        errs.push(Error::GridTooLarge {
            cells,
            cap: MAX_GRID_CELLS as usize,
        });
    }
    errs
}

/// Classifies every cell of the grid. Cells are independent and evaluated
/// on the current rayon pool; output order does not depend on scheduling.
pub fn scan_phase_diagram(req: &GridRequest) -> Result<PhaseGrid> {
    if let Some(e) = validate_grid(req).into_iter().next() {
        return Err(e);
    }
    let mut grid = PhaseGrid {
        axes: req.axes.clone(),
        fixed: req.base.clone(),
        tol: req.tol,
        cells: Vec::new(),
    };
    let total: usize = grid.shape().iter().product();
    let cells: Result<Vec<Phase>> = (0..total)
        .into_par_iter()
        .map(|k| {
            let mut w = req.base.omega_sq().to_vec();
            let mut g = req.base.gamma();
            for (axis, v) in grid.axes.iter().zip(grid.coordinates(k)) {
                match axis.param {
                    AxisParam::Omega(j) => w[j] = v * v,
                    AxisParam::OmegaSq(j) => w[j] = v,
                    AxisParam::Gamma => g = v,
                }
            }
            if w.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::InvalidSpec(format!(
                    "cell {k} has a vanishing squared frequency"
                )));
            }
            classify_point(&w, g, req.tol).map(|c| c.phase)
        })
        .collect();
    grid.cells = cells?;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = DEFAULT_PHASE_TOL;

    fn spec(w: &[f64], g: f64) -> ChainSpec {
        ChainSpec::new(w.to_vec(), g).unwrap()
    }

    #[test]
    fn two_site_examples() {
        assert_eq!(classify_phase_n2(3.0, 1.0, 0.5, TOL).phase, Phase::Unbroken);
        assert_eq!(classify_phase_n2(1.0, 1.0, 1.0, TOL).phase, Phase::Broken);
        assert_eq!(classify_phase_n2(2.0, 1.0, 0.5, TOL).phase, Phase::Exceptional);
        assert_eq!(classify_phase(&spec(&[3.0, 1.0], 0.5), TOL).unwrap().phase, Phase::Unbroken);
        assert_eq!(classify_phase(&spec(&[1.0, 1.0], 1.0), TOL).unwrap().phase, Phase::Broken);
        assert_eq!(classify_phase(&spec(&[2.0, 1.0], 0.5), TOL).unwrap().phase, Phase::Exceptional);
    }

    #[test]
    fn three_site_examples() {
        let w = [1.0 / 3.0, 2.0 / 3.0, 1.0];
        assert_eq!(cubic_criteria_n3(w, 1.0 / 12.0, TOL).phase, Phase::Unbroken);
        assert_eq!(classify_phase(&spec(&w, 1.0 / 12.0), TOL).unwrap().phase, Phase::Unbroken);
        let w = [1.0 / 3.0, 2.0 / 3.0, 13.0 / 20.0];
        assert_eq!(cubic_criteria_n3(w, 1.0 / 12.0, TOL).phase, Phase::Broken);
        assert_eq!(classify_phase(&spec(&w, 1.0 / 12.0), TOL).unwrap().phase, Phase::Broken);
        assert_eq!(cubic_criteria_n3([1.0; 3], 0.0, TOL).phase, Phase::Exceptional);
        assert_eq!(classify_phase(&spec(&[1.0; 3], 0.0), TOL).unwrap().phase, Phase::Exceptional);
        assert!(cubic_discriminant([1.0 / 3.0, 2.0 / 3.0, 1.0], 1.0 / 12.0) > 0.0);
    }

    #[test]
    fn cubic_discriminant_matches_root_product() {
        let w = [0.4, 1.7, 2.3];
        let g = 0.2;
        let roots = mode_set(&spec(&w, g)).unwrap().nu_sq().to_vec();
        let mut prod = Complex64::new(1.0, 0.0);
        for a in 0..3 {
            for b in (a + 1)..3 {
                prod *= (roots[a] - roots[b]).powi(2);
            }
        }
        let d = cubic_discriminant(w, g);
        assert!((prod.re - d).abs() <= 1e-10 * d.abs() && prod.im.abs() < 1e-10);
    }

    #[test]
    fn four_site_examples() {
        assert_eq!(quartic_criteria_n4([1.0; 4], 1.0, TOL).phase, Phase::Broken);
        assert_eq!(quartic_criteria_n4([0.5, 1.0, 2.0, 3.5], 0.0, TOL).phase, Phase::Unbroken);
        assert_eq!(quartic_criteria_n4([1.0; 4], 0.0, TOL).phase, Phase::Exceptional);
        // widely split frequencies with the remaining pair as in the
        // right-hand reference panel
        assert_eq!(quartic_criteria_n4([0.1, 6.0, 1.0, 4.0], 0.3, TOL).phase, Phase::Unbroken);
        assert_eq!(
            classify_phase(&spec(&[0.1, 6.0, 1.0, 4.0], 0.3), TOL).unwrap().phase,
            Phase::Unbroken
        );
    }

    #[test]
    fn uniform_five_site_is_broken() {
        let c = classify_phase(&ChainSpec::uniform(5, 0.1).unwrap(), TOL).unwrap();
        assert_eq!(c.phase, Phase::Broken);
        assert!(matches!(c.witness, Some(Witness::ComplexMode(_))));
    }

    #[test]
    fn real_cubic_roots() {
        let r = cubic_real_roots(1.0, -6.0, 11.0, -6.0).unwrap();
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(cubic_real_roots(1.0, 0.0, 1.0, 0.0).is_none());
        let r = cubic_real_roots(4.0, -12.0, 12.0, -4.0).unwrap();
        assert!(r.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    fn closed_form_margin(w: &[f64], g: f64) -> f64 {
        let m: Vec<f64> = match *w {
            [x, y, z] => match cubic_margins([x, y, z], g) {
                Some(m) => m.to_vec(),
                None => return f64::INFINITY,
            },
            [x, y, z, v] => match quartic_margins([x, y, z, v], g) {
                Some(m) => m.to_vec(),
                None => return f64::INFINITY,
            },
            _ => unreachable!(),
        };
        m.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
    }

    fn agreement_run(n: usize, seed: u64) -> (usize, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut checked = 0;
        let mut disagree = 0;
        while checked < 1000 {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..4.0)).collect();
            let g = rng.random_range(-1.0..1.0) * rng.random_range(0.0f64..1.0).powi(2);
            if closed_form_margin(&w, g) < 1e-6 {
                continue;
            }
            checked += 1;
            let a = classify_point(&w, g, TOL).unwrap().phase;
            let b = classify_phase(&spec(&w, g), TOL).unwrap().phase;
            if a != b {
                disagree += 1;
            }
        }
        (checked, disagree)
    }

    #[test]
    fn closed_forms_agree_with_generic() {
        for (n, seed) in [(3, 1), (4, 2)] {
            let (checked, disagree) = agreement_run(n, seed);
            assert_eq!(disagree, 0, "n={n}: {disagree} of {checked}");
        }
    }

    #[test]
    fn random_agreement_covers_both_phases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut seen = [0usize; 3];
        for _ in 0..1000 {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..4.0)).collect();
            let g = rng.random_range(-1.0..1.0) * rng.random_range(0.0f64..1.0).powi(2);
            seen[classify_point(&w, g, TOL).unwrap().phase.code() as usize] += 1;
        }
        assert!(seen[0] > 50 && seen[2] > 50, "{seen:?}");
    }

    #[test]
    fn boundary_sweep_two_sites() {
        // γ across |ωx² − ωy²|/2 = 1/2, hitting it exactly at the middle
        let req = GridRequest {
            base: spec(&[2.0, 1.0], 0.5),
            axes: vec![Axis {
                param: AxisParam::Gamma,
                lo: 0.0,
                hi: 1.0,
                count: 101,
            }],
            tol: TOL,
        };
        let grid = scan_phase_diagram(&req).unwrap();
        let codes: Vec<u8> = grid.cells.iter().map(|c| c.code()).collect();
        let ex: Vec<usize> = (0..101).filter(|&i| codes[i] == 1).collect();
        assert_eq!(ex, vec![50]);
        assert!(codes[..50].iter().all(|&c| c == 0));
        assert!(codes[51..].iter().all(|&c| c == 2));
    }

    #[test]
    fn two_site_grid_matches_analytic_region() {
        let req = GridRequest {
            base: spec(&[1.0, 1.0], 0.5),
            axes: vec![
                Axis {
                    param: AxisParam::OmegaSq(0),
                    lo: 0.0,
                    hi: 4.0,
                    count: 80,
                },
                Axis {
                    param: AxisParam::OmegaSq(1),
                    lo: 0.0,
                    hi: 4.0,
                    count: 80,
                },
            ],
            tol: TOL,
        };
        let grid = scan_phase_diagram(&req).unwrap();
        let step = 4.0 / 80.0;
        for k in 0..grid.cells.len() {
            let p = grid.coordinates(k);
            let gap = (p[0] - p[1]).abs() - 1.0;
            if gap.abs() <= step {
                continue;
            }
            let want = if gap > 0.0 { Phase::Unbroken } else { Phase::Broken };
            assert_eq!(grid.cells[k], want, "{p:?}");
        }
    }

    #[test]
    fn three_site_frequency_plane() {
        let req = GridRequest {
            base: spec(&[1.0, 2.0 / 3.0, 1.0], 1.0 / 12.0),
            axes: vec![
                Axis {
                    param: AxisParam::Omega(0),
                    lo: 0.0,
                    hi: 2.0,
                    count: 400,
                },
                Axis {
                    param: AxisParam::Omega(2),
                    lo: 0.0,
                    hi: 2.0,
                    count: 400,
                },
            ],
            tol: TOL,
        };
        let grid = scan_phase_diagram(&req).unwrap();
        assert_eq!(grid.nearest(&[(1.0f64 / 3.0).sqrt(), 1.0]), Phase::Unbroken);
        assert_eq!(grid.nearest(&[(1.0f64 / 3.0).sqrt(), (0.65f64).sqrt()]), Phase::Broken);
        assert!(grid.count(Phase::Unbroken) > 0 && grid.count(Phase::Broken) > 0);
    }

    #[test]
    fn three_site_volume() {
        let axes = (0..3)
            .map(|j| Axis {
                param: AxisParam::Omega(j),
                lo: 0.0,
                hi: 2.0,
                count: 24,
            })
            .collect();
        let req = GridRequest {
            base: spec(&[1.0, 1.0, 1.0], 1.0 / 12.0),
            axes,
            tol: TOL,
        };
        let grid = scan_phase_diagram(&req).unwrap();
        assert_eq!(grid.cells.len(), 24 * 24 * 24);
        assert!(grid.count(Phase::Unbroken) > 0);
    }

    #[test]
    fn scan_rejects_bad_requests() {
        let axis = |count| Axis {
            param: AxisParam::Gamma,
            lo: 0.0,
            hi: 1.0,
            count,
        };
        let base = spec(&[1.0, 2.0, 3.0], 0.1);
        let req = GridRequest {
            base: base.clone(),
            axes: vec![axis(10_000), axis(10_000)],
            tol: TOL,
        };
        assert!(matches!(scan_phase_diagram(&req), Err(Error::GridTooLarge { .. })));
        let req = GridRequest {
            base: base.clone(),
            axes: vec![],
            tol: TOL,
        };
        assert!(scan_phase_diagram(&req).is_err());
        let req = GridRequest {
            base,
            axes: vec![Axis {
                param: AxisParam::OmegaSq(5),
                lo: 0.1,
                hi: 1.0,
                count: 3,
            }],
            tol: TOL,
        };
        assert!(matches!(scan_phase_diagram(&req), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn axis_syntax() {
        let a: Axis = "wx:0:2:50".parse().unwrap();
        assert_eq!(a.param, AxisParam::Omega(0));
        assert_eq!(a.count, 50);
        let a: Axis = "wzsq:1/3:2:4".parse().unwrap();
        assert_eq!(a.param, AxisParam::OmegaSq(2));
        assert_eq!(a.lo, 1.0 / 3.0);
        let a: Axis = "w7sq:1:2:4".parse().unwrap();
        assert_eq!(a.param, AxisParam::OmegaSq(6));
        assert_eq!("gamma".parse::<AxisParam>().unwrap(), AxisParam::Gamma);
        assert!("wq:0:1:3".parse::<Axis>().is_err());
        assert!("wx:0:1".parse::<Axis>().is_err());
        for p in [AxisParam::Omega(1), AxisParam::OmegaSq(3), AxisParam::OmegaSq(9), AxisParam::Gamma] {
            assert_eq!(p.to_string().parse::<AxisParam>().unwrap(), p);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn scaling_invariance(
            w in prop::collection::vec(0.05f64..4.0, 2..=6),
            g in -2.0f64..2.0,
            s in 0.01f64..100.0,
        ) {
            let base = classify_phase(&spec(&w, g), TOL).unwrap().phase;
            prop_assume!(base != Phase::Exceptional);
            let ws: Vec<f64> = w.iter().map(|x| x * s).collect();
            let scaled = classify_phase(&spec(&ws, g * s), TOL).unwrap().phase;
            prop_assert_eq!(base, scaled);
        }

        #[test]
        fn unbroken_iff_all_frequencies_real(
            w in prop::collection::vec(0.05f64..4.0, 2..=6),
            g in -1.0f64..1.0,
        ) {
            let sp = spec(&w, g);
            let c = classify_phase(&sp, TOL).unwrap();
            prop_assume!(c.phase != Phase::Exceptional);
            let modes = mode_set(&sp).unwrap();
            let all_real = modes.nu().iter().all(|v| v.im.abs() <= TOL * (1.0 + v.norm()));
            prop_assert_eq!(c.phase == Phase::Unbroken, all_real);
        }
    }
}
