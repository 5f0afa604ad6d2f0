//! Truncated Fock-space diagonalisation of the chain Hamiltonian, used as
//! an independent check of the analytic spectrum.
//!
//! The site basis is the eigenbasis of `½p² + ½x²`, so every site term and
//! the coupling `iγ x_j x_{j+1}` have explicit ladder matrix elements.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::linalg::hessenberg_eigenvalues;
use crate::spectrum::{enumerate_levels, OccupationVector};

pub const DEFAULT_DIMENSION_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FockBasisSpec {
    /// Highest quantum number kept on each site.
    pub cutoff: usize,
    pub n_sites: usize,
}

impl FockBasisSpec {
    pub fn new(cutoff: usize, n_sites: usize) -> Self {
        FockBasisSpec { cutoff, n_sites }
    }

    /// `(cutoff + 1)^n_sites`, saturating.
    pub fn dimension(&self) -> usize {
        (0..self.n_sites).fold(1usize, |d, _| d.saturating_mul(self.cutoff + 1))
    }

    fn occupations(&self, mut k: usize) -> Vec<usize> {
        let base = self.cutoff + 1;
        let mut n = vec![0; self.n_sites];
        for slot in n.iter_mut().rev() {
            *slot = k % base;
            k /= base;
        }
        n
    }

    fn index(&self, n: &[usize]) -> usize {
        n.iter().fold(0, |k, &m| k * (self.cutoff + 1) + m)
    }

    fn check(&self, spec: &ChainSpec, cap: usize) -> Result<()> {
        if self.n_sites != spec.n() {
            return Err(Error::DimensionMismatch {
                expected: spec.n(),
                got: self.n_sites,
            });
        }
        let dim = self.dimension();
        if dim > cap {
            return Err(Error::DimensionCap { dim, cap });
        }
        Ok(())
    }
}

// Nonzero entries of row `k` as (column, value).
fn row_entries(spec: &ChainSpec, basis: &FockBasisSpec, k: usize) -> Vec<(usize, Complex64)> {
    let c = basis.cutoff;
    let n = basis.occupations(k);
    let w = spec.omega_sq();
    let mut out = Vec::new();

    let diag: f64 = n
        .iter()
        .zip(w)
        .map(|(&m, &w2)| 0.5 * (1.0 + w2) * (m as f64 + 0.5))
        .sum();
    out.push((k, Complex64::new(diag, 0.0)));

    // ½(ω² − 1)·½√((m+1)(m+2)) between m and m + 2
    for j in 0..n.len() {
        let m = n[j];
        let amp = |lo: usize| 0.25 * (w[j] - 1.0) * (((lo + 1) * (lo + 2)) as f64).sqrt();
        let mut q = n.clone();
        if m + 2 <= c {
            q[j] = m + 2;
            out.push((basis.index(&q), Complex64::new(amp(m), 0.0)));
        }
        if m >= 2 {
            q[j] = m - 2;
            out.push((basis.index(&q), Complex64::new(amp(m - 2), 0.0)));
        }
    }

    // ⟨m'|x|m⟩ = √(m/2) δ_{m', m−1} + √((m+1)/2) δ_{m', m+1}
    let x_moves = |m: usize| {
        let mut v = Vec::with_capacity(2);
        if m >= 1 {
            v.push((m - 1, (m as f64 / 2.0).sqrt()));
        }
        if m < c {
            v.push((m + 1, ((m + 1) as f64 / 2.0).sqrt()));
        }
        v
    };
    let g = spec.gamma();
    if g != 0.0 {
        for j in 0..n.len().saturating_sub(1) {
            for (a, xa) in x_moves(n[j]) {
                for (b, xb) in x_moves(n[j + 1]) {
                    let mut q = n.clone();
                    q[j] = a;
                    q[j + 1] = b;
                    out.push((basis.index(&q), Complex64::new(0.0, g * xa * xb)));
                }
            }
        }
    }
    out
}

/// Dense matrix of the Hamiltonian in the truncated product basis.
pub fn build_fock_hamiltonian(spec: &ChainSpec, basis: &FockBasisSpec) -> Result<DMatrix<Complex64>> {
    build_fock_hamiltonian_with_cap(spec, basis, DEFAULT_DIMENSION_CAP)
}

pub fn build_fock_hamiltonian_with_cap(
    spec: &ChainSpec,
    basis: &FockBasisSpec,
    cap: usize,
) -> Result<DMatrix<Complex64>> {
    basis.check(spec, cap)?;
    let dim = basis.dimension();
    let rows: Vec<Vec<(usize, Complex64)>> =
        (0..dim).into_par_iter().map(|k| row_entries(spec, basis, k)).collect();
    let mut h = DMatrix::zeros(dim, dim);
    for (k, row) in rows.into_iter().enumerate() {
        for (col, v) in row {
            h[(k, col)] += v;
        }
    }
    Ok(h)
}

/// Eigenvalues of the truncated Hamiltonian.
///
/// With `φ(n) = (π/2) Σ_{j odd} n_j` the similarity `e^{−iφ} H e^{iφ}` is
/// real, and the total quantum number parity is conserved, so the problem
/// splits into two real blocks.
pub fn fock_eigenvalues(spec: &ChainSpec, basis: &FockBasisSpec) -> Result<Vec<Complex64>> {
    basis.check(spec, DEFAULT_DIMENSION_CAP)?;
    let dim = basis.dimension();
    let rows: Vec<Vec<(usize, Complex64)>> =
        (0..dim).into_par_iter().map(|k| row_entries(spec, basis, k)).collect();
    let phase = |k: usize| -> usize {
        basis
            .occupations(k)
            .iter()
            .skip(1)
            .step_by(2)
            .sum::<usize>()
            % 4
    };
    let parity = |k: usize| basis.occupations(k).iter().sum::<usize>() % 2;
    let i_pow = |p: usize| match p % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };

    let mut eigenvalues = Vec::with_capacity(dim);
    for block_parity in 0..2 {
        let members: Vec<usize> = (0..dim).filter(|&k| parity(k) == block_parity).collect();
        let mut slot = vec![usize::MAX; dim];
        for (s, &k) in members.iter().enumerate() {
            slot[k] = s;
        }
        let m = members.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        for (s, &k) in members.iter().enumerate() {
            for &(col, v) in &rows[k] {
                let t = slot[col];
                if t == usize::MAX {
                    return Err(Error::EigensolveFailure(
                        "Hamiltonian couples states of different parity".into(),
                    ));
                }
                // e^{−iφ(k)} H e^{iφ(col)}
                let z = v * i_pow(4 - phase(k)) * i_pow(phase(col));
                if z.im.abs() > 1e-12 * z.norm().max(1.0) {
                    return Err(Error::EigensolveFailure(
                        "phase transform failed to produce a real matrix".into(),
                    ));
                }
                a[(s, t)] += z.re;
            }
        }
        let h = a.hessenberg().h();
        let rows: Vec<Vec<f64>> = (0..m).map(|i| h.row(i).iter().copied().collect()).collect();
        let ev = hessenberg_eigenvalues(rows).ok_or_else(|| {
            Error::EigensolveFailure(format!("QR iteration did not converge (block {m})"))
        })?;
        eigenvalues.extend(ev);
    }
    eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(eigenvalues)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelMatch {
    pub occ: OccupationVector,
    pub analytic: Complex64,
    pub numeric: Complex64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralComparison {
    pub cutoff: usize,
    pub n_sites: usize,
    pub max_quanta: u32,
    pub matches: Vec<LevelMatch>,
    pub numeric: Vec<Complex64>,
    pub max_distance: f64,
}

/// Matches the analytic levels with `Σn ≤ max_quanta` (default
/// `cutoff / 4`) to eigenvalues of the truncated Hamiltonian, greedily by
/// ascending distance.
///
/// A match counts as ambiguous, and the check fails, when its distance
/// reaches a tenth of the gap to the nearest distinct analytic level.
pub fn fock_spectrum_check(
    spec: &ChainSpec,
    basis: &FockBasisSpec,
    max_quanta: Option<u32>,
) -> Result<SpectralComparison> {
    let max_quanta = max_quanta.unwrap_or((basis.cutoff / 4) as u32);
    let levels = enumerate_levels(spec, max_quanta)?;
    let numeric = fock_eigenvalues(spec, basis)?;
    if numeric.len() < levels.len() {
        return Err(Error::MatchingAmbiguous(format!(
            "{} analytic levels but only {} eigenvalues",
            levels.len(),
            numeric.len()
        )));
    }

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (a, l) in levels.iter().enumerate() {
        for (k, e) in numeric.iter().enumerate() {
            pairs.push(((l.energy - e).norm(), a, k));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; levels.len()];
    let mut used_k = vec![false; numeric.len()];
    let mut chosen = vec![usize::MAX; levels.len()];
    let mut left = levels.len();
    for &(_, a, k) in &pairs {
        if left == 0 {
            break;
        }
        if used_a[a] || used_k[k] {
            continue;
        }
        used_a[a] = true;
        used_k[k] = true;
        chosen[a] = k;
        left -= 1;
    }

    let mut matches = Vec::with_capacity(levels.len());
    for (a, l) in levels.iter().enumerate() {
        let k = chosen[a];
        let distance = (l.energy - numeric[k]).norm();
        let gap = levels
            .iter()
            .map(|o| (o.energy - l.energy).norm())
            .filter(|&d| d > 1e-9)
            .fold(f64::INFINITY, f64::min);
        if distance >= 0.1 * gap {
            return Err(Error::MatchingAmbiguous(format!(
                "level {:?} (E = {}) sits {distance:.3e} from its eigenvalue, gap {gap:.3e}",
                l.occ.as_slice(),
                l.energy
            )));
        }
        matches.push(LevelMatch {
            occ: l.occ.clone(),
            analytic: l.energy,
            numeric: numeric[k],
            distance,
        });
    }
    let max_distance = matches.iter().map(|m| m.distance).fold(0.0, f64::max);
    Ok(SpectralComparison {
        cutoff: basis.cutoff,
        n_sites: basis.n_sites,
        max_quanta,
        matches,
        numeric,
        max_distance,
    })
}
