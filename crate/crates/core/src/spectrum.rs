//! Exact quantum spectrum `E = Σ ν_j (n_j + ½)`, the Gaussian ground state
//! and the excited eigenfunctions in mode coordinates.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::{build_coupling_matrix, ChainSpec};
use crate::error::{Error, Result};
use crate::linalg::sqrtm_denman_beavers;
use crate::modes::{decoupling_transform, mode_set, principal_sqrt, Decoupling, ModePair, ModeSet};

/// Absolute tolerance on `Im E` for calling a level real.
pub const REALITY_TOL: f64 = 1e-10;
/// Grid on `Re E` used to group degenerate levels.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Default maximum number of enumerated levels.
pub const DEFAULT_LEVEL_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupationVector {
    n: Vec<u32>,
}

impl OccupationVector {
    pub fn new(n: Vec<u32>) -> Self {
        OccupationVector { n }
    }

    pub fn ground(len: usize) -> Self {
        OccupationVector { n: vec![0; len] }
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.n
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.n.iter().map(|&k| k as u64).sum()
    }

    /// Occupations exchanged within every conjugate pair.
    pub fn conjugate(&self, modes: &ModeSet) -> Self {
        let mut n = self.n.clone();
        for p in modes.pairing() {
            if let ModePair::ConjugatePair(a, b) = *p {
                n.swap(a, b);
            }
        }
        OccupationVector { n }
    }
}

impl From<Vec<u32>> for OccupationVector {
    fn from(n: Vec<u32>) -> Self {
        OccupationVector::new(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLevel {
    pub occ: OccupationVector,
    pub energy: Complex64,
    pub is_real: bool,
    pub degeneracy_key: f64,
}

fn degeneracy_key(re: f64) -> f64 {
    (re / DEGENERACY_TOL).round() * DEGENERACY_TOL
}

/// `½ Σ ν_j`.
pub fn ground_state_energy(spec: &ChainSpec) -> Result<Complex64> {
    let modes = mode_set(spec)?;
    Ok(modes.nu().iter().sum::<Complex64>() * 0.5)
}

pub fn level_energy(spec: &ChainSpec, occ: &OccupationVector) -> Result<EnergyLevel> {
    let modes = mode_set(spec)?;
    level_from_modes(&modes, occ)
}

/// Level energy for an already computed mode set.
pub fn level_from_modes(modes: &ModeSet, occ: &OccupationVector) -> Result<EnergyLevel> {
    if occ.len() != modes.len() {
        return Err(Error::DimensionMismatch {
            expected: modes.len(),
            got: occ.len(),
        });
    }
    let energy: Complex64 = modes
        .nu()
        .iter()
        .zip(occ.as_slice())
        .map(|(nu, &k)| nu * (k as f64 + 0.5))
        .sum();
    let is_real = modes.pairing().iter().all(|p| match *p {
        ModePair::ConjugatePair(a, b) => occ.as_slice()[a] == occ.as_slice()[b],
        ModePair::RealSingleton(_) => true,
    });
    Ok(EnergyLevel {
        occ: occ.clone(),
        energy,
        is_real,
        degeneracy_key: degeneracy_key(energy.re),
    })
}

/// Number of occupation vectors of length `n` with at most `max_quanta`
/// quanta, `C(max_quanta + n, n)`, saturating.
pub fn level_count(n: usize, max_quanta: u32) -> u128 {
    let q = max_quanta as u128;
    let mut c: u128 = 1;
    for k in 1..=(n as u128) {
        c = match c.checked_mul(q + k) {
            Some(v) => v / k,
            None => return u128::MAX,
        };
    }
    c
}

pub fn enumerate_levels(spec: &ChainSpec, max_quanta: u32) -> Result<Vec<EnergyLevel>> {
    enumerate_levels_with_cap(spec, max_quanta, DEFAULT_LEVEL_CAP)
}

/// All levels with `Σ n_j ≤ max_quanta`, sorted by `(Re E, Im E)`.
pub fn enumerate_levels_with_cap(
    spec: &ChainSpec,
    max_quanta: u32,
    cap: usize,
) -> Result<Vec<EnergyLevel>> {
    let count = level_count(spec.n(), max_quanta);
    if count > cap as u128 {
        return Err(Error::CombinatorialOverflow { count, cap });
    }
    let modes = mode_set(spec)?;
    let mut levels = Vec::with_capacity(count as usize);
    let mut occ = vec![0u32; spec.n()];
    fill(&modes, &mut occ, 0, max_quanta, &mut levels)?;
    levels.sort_by(|a, b| {
        a.energy
            .re
            .total_cmp(&b.energy.re)
            .then(a.energy.im.total_cmp(&b.energy.im))
            .then_with(|| a.occ.as_slice().cmp(b.occ.as_slice()))
    });
    Ok(levels)
}

fn fill(
    modes: &ModeSet,
    occ: &mut [u32],
    slot: usize,
    left: u32,
    out: &mut Vec<EnergyLevel>,
) -> Result<()> {
    if slot == occ.len() {
        out.push(level_from_modes(modes, &OccupationVector::new(occ.to_vec()))?);
        return Ok(());
    }
    for k in 0..=left {
        occ[slot] = k;
        fill(modes, occ, slot + 1, left - k, out)?;
    }
    occ[slot] = 0;
    Ok(())
}

/// `ψ₀(x) ∝ exp(−½ xᵀ A x)` with `A = √M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGroundState {
    pub a_matrix: DMatrix<Complex64>,
    pub energy: Complex64,
}

impl GaussianGroundState {
    pub fn exponent(&self, x: &[f64]) -> Complex64 {
        let n = x.len();
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                s += self.a_matrix[(j, k)] * (x[j] * x[k]);
            }
        }
        -0.5 * s
    }

    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        self.exponent(x).exp()
    }
}

/// Principal square root of `M`, through the mode transform when it exists
/// and by Denman–Beavers iteration otherwise.
pub fn ground_state_gaussian(spec: &ChainSpec) -> Result<GaussianGroundState> {
    let a = match decoupling_transform(spec) {
        Ok(d) => {
            let nu = DMatrix::from_diagonal(&DVector::from_vec(d.modes.nu().to_vec()));
            &d.v * nu * d.v.transpose()
        }
        Err(Error::DegenerateModes(_)) => {
            let m = build_coupling_matrix(spec).to_dense();
            sqrtm_denman_beavers(&m).ok_or_else(|| {
                Error::DegenerateModes("matrix square root iteration did not converge".into())
            })?
        }
        Err(e) => return Err(e),
    };
    // symmetrise away rounding
    let a = (&a + a.transpose()).scale(0.5);
    let energy = a.trace() * 0.5;
    Ok(GaussianGroundState { a_matrix: a, energy })
}

/// Physicists' Hermite polynomial at complex argument.
pub fn hermite(k: u32, z: Complex64) -> Complex64 {
    let mut prev = Complex64::new(1.0, 0.0);
    if k == 0 {
        return prev;
    }
    let mut cur = 2.0 * z;
    for m in 1..k {
        let next = 2.0 * z * cur - 2.0 * m as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Unnormalised eigenfunction `Π_j H_{n_j}(√ν_j q_j) exp(−ν_j q_j²/2)`,
/// `q = Vᵀx`.
#[derive(Debug, Clone)]
pub struct Eigenfunction {
    decoupling: Decoupling,
    occ: OccupationVector,
    root_nu: Vec<Complex64>,
}

impl Eigenfunction {
    pub fn new(spec: &ChainSpec, occ: &OccupationVector) -> Result<Self> {
        let decoupling = decoupling_transform(spec)?;
        if occ.len() != spec.n() {
            return Err(Error::DimensionMismatch {
                expected: spec.n(),
                got: occ.len(),
            });
        }
        let root_nu = decoupling.modes.nu().iter().map(|&v| principal_sqrt(v)).collect();
        Ok(Eigenfunction {
            decoupling,
            occ: occ.clone(),
            root_nu,
        })
    }

    pub fn occ(&self) -> &OccupationVector {
        &self.occ
    }

    pub fn modes(&self) -> &ModeSet {
        &self.decoupling.modes
    }

    pub fn energy(&self) -> Complex64 {
        level_from_modes(&self.decoupling.modes, &self.occ)
            .map(|l| l.energy)
            .unwrap_or_default()
    }

    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let q = self.decoupling.to_modes(&xc);
        let nu = self.decoupling.modes.nu();
        let mut poly = Complex64::new(1.0, 0.0);
        let mut expo = Complex64::new(0.0, 0.0);
        for j in 0..q.len() {
            poly *= hermite(self.occ.as_slice()[j], self.root_nu[j] * q[j]);
            expo -= 0.5 * nu[j] * q[j] * q[j];
        }
        poly * expo.exp()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenfunctionSample {
    pub occ: OccupationVector,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Complex64>,
    #[serde(skip)]
    source: Arc<Eigenfunction>,
}

impl EigenfunctionSample {
    pub fn eigenfunction(&self) -> &Eigenfunction {
        &self.source
    }
}

pub fn eigenfunction_evaluate(
    spec: &ChainSpec,
    occ: &OccupationVector,
    points: &[Vec<f64>],
) -> Result<EigenfunctionSample> {
    let f = Eigenfunction::new(spec, occ)?;
    for p in points {
        if p.len() != spec.n() {
            return Err(Error::DimensionMismatch {
                expected: spec.n(),
                got: p.len(),
            });
        }
    }
    let values = points.iter().map(|p| f.evaluate(p)).collect();
    Ok(EigenfunctionSample {
        occ: occ.clone(),
        points: points.to_vec(),
        values,
        source: Arc::new(f),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PtResidual {
    pub residual: f64,
    pub sign: i8,
}

/// Departure from `conj ψ(Px) = s ψ(x)` where `P` flips the coordinates in
/// `flip_set`, minimised over `s = ±1` and scaled by `max |ψ|`.
pub fn partial_pt_residual(sample: &EigenfunctionSample, flip_set: &[usize]) -> PtResidual {
    let f = sample.eigenfunction();
    let scale = sample.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut worst = [0.0f64; 2];
    for (p, &v) in sample.points.iter().zip(&sample.values) {
        let mut q = p.clone();
        for &j in flip_set {
            if let Some(c) = q.get_mut(j) {
                *c = -*c;
            }
        }
        let w = f.evaluate(&q).conj();
        worst[0] = worst[0].max((w - v).norm());
        worst[1] = worst[1].max((w + v).norm());
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    if worst[0] <= worst[1] {
        PtResidual {
            residual: worst[0] / scale,
            sign: 1,
        }
    } else {
        PtResidual {
            residual: worst[1] / scale,
            sign: -1,
        }
    }
}
