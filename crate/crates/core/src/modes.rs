//! Normal modes of the chain.
//!
//! The squared mode frequencies `ν²` are the eigenvalues of the coupling
//! matrix `M`. Frequencies use the principal square-root branch (positive
//! real part, ties broken toward non-negative imaginary part).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::{build_coupling_matrix, ChainSpec};
use crate::error::{Error, Result};
use crate::linalg::{hessenberg_eigenvalues, max_abs};

/// Default relative tolerance used when pairing conjugate modes.
pub const DEFAULT_BRANCH_TOL: f64 = 1e-8;

/// Square root with `Re w > 0`, or `Re w = 0` and `Im w >= 0`.
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    if z.re == 0.0 && z.im == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let r = z.re.hypot(z.im);
    let t = (0.5 * (r + z.re.abs())).sqrt();
    if z.re >= 0.0 {
        Complex64::new(t, z.im / (2.0 * t))
    } else {
        let im = if z.im >= 0.0 { t } else { -t };
        Complex64::new(z.im.abs() / (2.0 * t), im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModePair {
    ConjugatePair(usize, usize),
    RealSingleton(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    nu_sq: Vec<Complex64>,
    nu: Vec<Complex64>,
    pairing: Vec<ModePair>,
    branch_tol: f64,
}

impl ModeSet {
    /// Sorts the squared frequencies by `(Re ν desc, Im ν desc)` and pairs
    /// conjugates greedily within `branch_tol · (1 + |ν|)`.
    pub fn from_squared(nu_sq: Vec<Complex64>, branch_tol: f64) -> Result<Self> {
        let mut both: Vec<(Complex64, Complex64)> =
            nu_sq.into_iter().map(|l| (l, principal_sqrt(l))).collect();
        both.sort_by(|a, b| b.1.re.total_cmp(&a.1.re).then(b.1.im.total_cmp(&a.1.im)));
        let (nu_sq, nu): (Vec<_>, Vec<_>) = both.into_iter().unzip();

        let n = nu.len();
        let mut taken = vec![false; n];
        let mut pairing = Vec::with_capacity(n);
        for a in 0..n {
            if taken[a] {
                continue;
            }
            let tol = branch_tol * (1.0 + nu[a].norm());
            taken[a] = true;
            if nu[a].im.abs() <= tol {
                pairing.push(ModePair::RealSingleton(a));
                continue;
            }
            let partner = (0..n)
                .filter(|&b| !taken[b])
                .map(|b| (b, (nu[a] - nu[b].conj()).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1));
            match partner {
                Some((b, d)) if d <= tol => {
                    taken[b] = true;
                    pairing.push(ModePair::ConjugatePair(a, b));
                }
                _ => {
                    return Err(Error::RootSolveFailure(format!(
                        "mode {a} (nu = {}) has no conjugate partner",
                        nu[a]
                    )))
                }
            }
        }
        Ok(ModeSet {
            nu_sq,
            nu,
            pairing,
            branch_tol,
        })
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    pub fn nu_sq(&self) -> &[Complex64] {
        &self.nu_sq
    }

    pub fn nu(&self) -> &[Complex64] {
        &self.nu
    }

    pub fn pairing(&self) -> &[ModePair] {
        &self.pairing
    }

    pub fn branch_tol(&self) -> f64 {
        self.branch_tol
    }

    /// Index of the conjugate partner of mode `j`, if any.
    pub fn partner(&self, j: usize) -> Option<usize> {
        self.pairing.iter().find_map(|p| match *p {
            ModePair::ConjugatePair(a, b) if a == j => Some(b),
            ModePair::ConjugatePair(a, b) if b == j => Some(a),
            _ => None,
        })
    }

    /// Smallest pairwise distance between squared frequencies.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.len() {
            for b in (a + 1)..self.len() {
                best = best.min((self.nu_sq[a] - self.nu_sq[b]).norm());
            }
        }
        best
    }
}

/// Closed form for uniform chains:
/// `ν_j² = 1 + 2iγ cos(jπ/(N+1))`, `j = 1..N`, kept in `j` order.
///
/// Mode `j` pairs with `N+1−j`; the middle mode of an odd chain is real.
/// With `γ = 0` every mode is a real singleton.
pub fn uniform_mode_frequencies(n: usize, gamma: f64) -> Result<ModeSet> {
    if n < 2 {
        return Err(Error::InvalidSpec(format!("n must be >= 2 (got {n})")));
    }
    let nu_sq: Vec<Complex64> = (1..=n)
        .map(|j| {
            let c = uniform_cos(j, n);
            Complex64::new(1.0, 2.0 * gamma * c)
        })
        .collect();
    let nu: Vec<Complex64> = nu_sq.iter().map(|&l| principal_sqrt(l)).collect();
    let pairing = if gamma == 0.0 {
        (0..n).map(ModePair::RealSingleton).collect()
    } else {
        let mut p: Vec<ModePair> = (0..n / 2)
            .map(|a| ModePair::ConjugatePair(a, n - 1 - a))
            .collect();
        if n % 2 == 1 {
            p.push(ModePair::RealSingleton(n / 2));
        }
        p
    };
    Ok(ModeSet {
        nu_sq,
        nu,
        pairing,
        branch_tol: DEFAULT_BRANCH_TOL,
    })
}

// cos(jπ/(N+1)) with the antisymmetry about the middle made exact, so that
// modes j and N+1−j are exact conjugates.
fn uniform_cos(j: usize, n: usize) -> f64 {
    let mirror = n + 1 - j;
    if 2 * j == n + 1 {
        0.0
    } else if j < mirror {
        (j as f64 * PI / (n + 1) as f64).cos()
    } else {
        -(mirror as f64 * PI / (n + 1) as f64).cos()
    }
}

/// Mode frequencies of an arbitrary chain from the eigenvalues of `M`.
pub fn general_mode_frequencies(spec: &ChainSpec) -> Result<ModeSet> {
    general_mode_frequencies_with_tol(spec, DEFAULT_BRANCH_TOL)
}

pub fn general_mode_frequencies_with_tol(spec: &ChainSpec, branch_tol: f64) -> Result<ModeSet> {
    let rows = build_coupling_matrix(spec).real_similar();
    let lambdas = hessenberg_eigenvalues(rows).ok_or_else(|| {
        Error::RootSolveFailure(format!("QR iteration did not converge for n = {}", spec.n()))
    })?;
    ModeSet::from_squared(lambdas, branch_tol)
}

/// Closed form for uniform chains, eigen-solver otherwise.
pub fn mode_set(spec: &ChainSpec) -> Result<ModeSet> {
    if spec.is_uniform() {
        uniform_mode_frequencies(spec.n(), spec.gamma())
    } else {
        general_mode_frequencies(spec)
    }
}

/// Complex-orthogonal matrix `V` with `M = V diag(ν²) Vᵀ`; column `k`
/// belongs to mode `k` of `modes`.
#[derive(Debug, Clone)]
pub struct Decoupling {
    pub modes: ModeSet,
    pub v: DMatrix<Complex64>,
}

impl Decoupling {
    /// Mode coordinates `q = Vᵀ x`.
    pub fn to_modes(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| (0..n).map(|j| self.v[(j, k)] * x[j]).sum())
            .collect()
    }

    /// Physical coordinates `x = V q`.
    pub fn from_modes(&self, q: &[Complex64]) -> Vec<Complex64> {
        let n = q.len();
        (0..n)
            .map(|j| (0..n).map(|k| self.v[(j, k)] * q[k]).sum())
            .collect()
    }
}

const TRANSFORM_ORTHO_TOL: f64 = 1e-10;
const TRANSFORM_DIAG_TOL: f64 = 1e-9;

/// Decouples the chain into independent oscillators.
///
/// Uniform chains use the real sine transform
/// `V[j][k] = √(2/(N+1)) sin(jkπ/(N+1))`. Other chains take eigenvectors of
/// `M` by inverse iteration, normalised so that `vᵀv = 1`. Coalescing
/// frequencies (an exceptional point) give `DegenerateModes`.
pub fn decoupling_transform(spec: &ChainSpec) -> Result<Decoupling> {
    let n = spec.n();
    if spec.is_uniform() {
        let modes = uniform_mode_frequencies(n, spec.gamma())?;
        let norm = (2.0 / (n + 1) as f64).sqrt();
        let v = DMatrix::from_fn(n, n, |j, k| {
            let arg = ((j + 1) * (k + 1)) as f64 * PI / (n + 1) as f64;
            Complex64::new(norm * arg.sin(), 0.0)
        });
        return Ok(Decoupling { modes, v });
    }

    let modes = general_mode_frequencies(spec)?;
    let sep_tol = modes.branch_tol() * (1.0 + spec.scale());
    let sep = modes.min_separation();
    if sep <= sep_tol {
        return Err(Error::DegenerateModes(format!(
            "squared frequencies coincide to within {sep:.3e}"
        )));
    }

    let m = build_coupling_matrix(spec).to_dense();
    let mut v = DMatrix::<Complex64>::zeros(n, n);
    for (k, &lambda) in modes.nu_sq().iter().enumerate() {
        let col = eigenvector(&m, lambda, spec.scale())?;
        v.set_column(k, &col);
    }

    let vtv = v.transpose() * &v;
    let ortho = max_abs(&(vtv - DMatrix::identity(n, n)));
    let d = v.transpose() * &m * &v;
    let diag = max_abs(&(d - DMatrix::from_diagonal(&DVector::from_vec(modes.nu_sq().to_vec()))));
    if !(ortho <= TRANSFORM_ORTHO_TOL && diag <= TRANSFORM_DIAG_TOL) {
        return Err(Error::DegenerateModes(format!(
            "mode transform is ill conditioned (|VᵀV − I| = {ortho:.2e}, |VᵀMV − D| = {diag:.2e})"
        )));
    }
    Ok(Decoupling { modes, v })
}

fn eigenvector(m: &DMatrix<Complex64>, lambda: Complex64, scale: f64) -> Result<DVector<Complex64>> {
    let n = m.nrows();
    let shift = lambda + Complex64::new(1.0, 0.5) * (1e-13 * (scale + lambda.norm()));
    let mut a = m.clone();
    for j in 0..n {
        a[(j, j)] -= shift;
    }
    let lu = a.lu();
    let mut x = DVector::from_fn(n, |j, _| Complex64::new(1.0 + 0.1 * j as f64, 0.0));
    for _ in 0..3 {
        x = lu
            .solve(&x)
            .ok_or_else(|| Error::DegenerateModes("singular shifted coupling matrix".into()))?;
        let scale = x.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::DegenerateModes("inverse iteration broke down".into()));
        }
        x.unscale_mut(scale);
    }

    let self_dot: Complex64 = x.iter().map(|c| c * c).sum();
    let norm_sq: f64 = x.iter().map(|c| c.norm_sqr()).sum();
    if self_dot.norm() <= 1e-8 * norm_sq {
        return Err(Error::DegenerateModes(format!(
            "eigenvector for nu^2 = {lambda} is self-orthogonal"
        )));
    }
    x.unscale_mut(1.0);
    let root = principal_sqrt(self_dot);
    x.iter_mut().for_each(|c| *c /= root);

    // Fix the residual ± sign: first significant entry gets a positive
    // real part (or positive imaginary part when it is purely imaginary).
    let big = x.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if let Some(lead) = x.iter().find(|c| c.norm() > 1e-6 * big) {
        let flip = if lead.re.abs() > 1e-12 * lead.norm() {
            lead.re < 0.0
        } else {
            lead.im < 0.0
        };
        if flip {
            x.neg_mut();
        }
    }
    Ok(x)
}
