//! The oscillator chain and its coupling matrix.
//!
//! A chain of `n` oscillators with squared natural frequencies `omega_sq[j]`
//! and nearest-neighbour coupling `i * gamma * x_j * x_{j+1}` has potential
//! `U = ½ xᵀ M x`, where `M` is complex symmetric and tridiagonal.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChainSpec", into = "RawChainSpec")]
pub struct ChainSpec {
    omega_sq: Vec<f64>,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawChainSpec {
    n: usize,
    omega_sq: Vec<f64>,
    gamma: f64,
}

impl TryFrom<RawChainSpec> for ChainSpec {
    type Error = Error;

    fn try_from(raw: RawChainSpec) -> Result<Self> {
        if raw.omega_sq.len() != raw.n {
            return Err(Error::InvalidSpec(format!(
                "n = {} but {} squared frequencies given",
                raw.n,
                raw.omega_sq.len()
            )));
        }
        ChainSpec::new(raw.omega_sq, raw.gamma)
    }
}

impl From<ChainSpec> for RawChainSpec {
    fn from(spec: ChainSpec) -> Self {
        RawChainSpec {
            n: spec.n(),
            omega_sq: spec.omega_sq,
            gamma: spec.gamma,
        }
    }
}

impl ChainSpec {
    pub fn new(omega_sq: Vec<f64>, gamma: f64) -> Result<Self> {
        if omega_sq.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "n must be >= 2 (got {})",
                omega_sq.len()
            )));
        }
        if let Some((j, w)) = omega_sq
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidSpec(format!(
                "omega_sq[{j}] = {w} must be finite and > 0"
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidSpec(format!("gamma = {gamma} is not finite")));
        }
        Ok(ChainSpec { omega_sq, gamma })
    }

    /// All natural frequencies equal to one.
    pub fn uniform(n: usize, gamma: f64) -> Result<Self> {
        ChainSpec::new(vec![1.0; n], gamma)
    }

    pub fn n(&self) -> usize {
        self.omega_sq.len()
    }

    pub fn omega_sq(&self) -> &[f64] {
        &self.omega_sq
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_uniform(&self) -> bool {
        self.omega_sq.iter().all(|&w| w == 1.0)
    }

    /// Characteristic parameter magnitude, used to make tolerances relative.
    pub fn scale(&self) -> f64 {
        self.omega_sq
            .iter()
            .fold(self.gamma.abs(), |acc, &w| acc.max(w))
    }

    /// Same chain with every parameter multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        ChainSpec::new(
            self.omega_sq.iter().map(|w| w * s).collect(),
            self.gamma * s,
        )
    }
}

/// Tridiagonal complex-symmetric matrix `M` with `M[j][j] = omega_j²` and
/// `M[j][j±1] = i gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    diagonal: Vec<f64>,
    gamma: f64,
}

impl CouplingMatrix {
    pub fn n(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn off_diagonal(&self) -> Complex64 {
        Complex64::new(0.0, self.gamma)
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        if j == k {
            Complex64::new(self.diagonal[j], 0.0)
        } else if j.abs_diff(k) == 1 {
            self.off_diagonal()
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |j, k| self.get(j, k))
    }

    /// `M x` without forming the dense matrix.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        let c = self.off_diagonal();
        (0..n)
            .map(|j| {
                let mut acc = x[j] * self.diagonal[j];
                if j > 0 {
                    acc += c * x[j - 1];
                }
                if j + 1 < n {
                    acc += c * x[j + 1];
                }
                acc
            })
            .collect()
    }

    /// `xᵀ M x` (bilinear, no conjugation).
    pub fn quadratic_form(&self, x: &[Complex64]) -> Complex64 {
        self.apply(x)
            .iter()
            .zip(x)
            .map(|(mx, xj)| mx * xj)
            .sum()
    }

    /// Real matrix similar to `M`.
    ///
    /// Conjugating with `S = diag(1, i, i², …)` turns the off-diagonals into
    /// `-gamma` (upper) and `+gamma` (lower). The result has the same
    /// eigenvalues and is returned as dense rows.
    pub(crate) fn real_similar(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut rows = vec![vec![0.0; n]; n];
        for j in 0..n {
            rows[j][j] = self.diagonal[j];
            if j + 1 < n {
                rows[j][j + 1] = -self.gamma;
                rows[j + 1][j] = self.gamma;
            }
        }
        rows
    }
}

pub fn build_coupling_matrix(spec: &ChainSpec) -> CouplingMatrix {
    CouplingMatrix {
        diagonal: spec.omega_sq.clone(),
        gamma: spec.gamma,
    }
}

/// Real polynomial with coefficients stored lowest power first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Coefficient of `λ^k`.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }
}

/// `p(λ) = det(λI − M)`, monic of degree `n`.
///
/// Built by the continuant recurrence
/// `p_k = (λ − ω_k²) p_{k−1} + γ² p_{k−2}`, `p_0 = 1`, `p_{−1} = 0`.
/// The off-diagonal product `(iγ)² = −γ²` makes every coefficient real.
pub fn characteristic_polynomial(spec: &ChainSpec) -> Polynomial {
    let g2 = spec.gamma * spec.gamma;
    let mut prev: Vec<f64> = Vec::new();
    let mut cur: Vec<f64> = vec![1.0];
    for &w in &spec.omega_sq {
        let mut next = vec![0.0; cur.len() + 1];
        for (k, &c) in cur.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= w * c;
        }
        for (k, &c) in prev.iter().enumerate() {
            next[k] += g2 * c;
        }
        prev = cur;
        cur = next;
    }
    Polynomial::new(cur)
}

/// `det(λI − M)` evaluated directly by the recurrence; better conditioned
/// than expanding the coefficients when roots cluster.
pub fn characteristic_value(spec: &ChainSpec, lambda: Complex64) -> Complex64 {
    let g2 = spec.gamma * spec.gamma;
    let mut prev = Complex64::new(0.0, 0.0);
    let mut cur = Complex64::new(1.0, 0.0);
    for &w in &spec.omega_sq {
        let next = (lambda - w) * cur + g2 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // Laplace expansion along the first row; exponential but exact in
    // structure, so independent of the recurrence.
    fn cofactor_det(m: &[Vec<Complex64>]) -> Complex64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        let mut acc = c(0.0, 0.0);
        for col in 0..n {
            if m[0][col] == c(0.0, 0.0) {
                continue;
            }
            let minor: Vec<Vec<Complex64>> = m[1..]
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(k, _)| *k != col)
                        .map(|(_, v)| *v)
                        .collect()
                })
                .collect();
            let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
            acc += m[0][col] * cofactor_det(&minor) * sign;
        }
        acc
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(ChainSpec::new(vec![1.0], 0.5), Err(Error::InvalidSpec(_))));
        assert!(matches!(ChainSpec::new(vec![1.0, 0.0], 0.5), Err(Error::InvalidSpec(_))));
        assert!(matches!(ChainSpec::new(vec![1.0, -2.0], 0.5), Err(Error::InvalidSpec(_))));
        assert!(matches!(ChainSpec::new(vec![1.0, 1.0], f64::NAN), Err(Error::InvalidSpec(_))));
        let bad: std::result::Result<ChainSpec, _> =
            serde_json::from_str(r#"{"n":3,"omega_sq":[1.0,1.0],"gamma":0.1}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn uniform_predicate() {
        assert!(ChainSpec::uniform(4, 0.3).unwrap().is_uniform());
        assert!(!ChainSpec::new(vec![1.0, 1.0 + 1e-15], 0.3).unwrap().is_uniform());
    }

    #[test]
    fn five_site_uniform_matrix() {
        let g = 0.7;
        let m = build_coupling_matrix(&ChainSpec::uniform(5, g).unwrap()).to_dense();
        for j in 0usize..5 {
            for k in 0..5 {
                let expect = if j == k {
                    c(1.0, 0.0)
                } else if j.abs_diff(k) == 1 {
                    c(0.0, g)
                } else {
                    c(0.0, 0.0)
                };
                assert_eq!(m[(j, k)], expect);
            }
        }
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn decoupled_pair() {
        let m = build_coupling_matrix(&ChainSpec::new(vec![3.0, 1.0], 0.0).unwrap()).to_dense();
        assert_eq!(m[(0, 0)], c(3.0, 0.0));
        assert_eq!(m[(1, 1)], c(1.0, 0.0));
        assert_eq!(m[(0, 1)], c(0.0, 0.0));
        assert_eq!(m[(1, 0)], c(0.0, 0.0));
    }

    #[test]
    fn four_site_general_matrix() {
        let w = [0.4, 2.5, 1.0, 4.0];
        let g = 0.3;
        let m = build_coupling_matrix(&ChainSpec::new(w.to_vec(), g).unwrap()).to_dense();
        let expect = [
            [c(w[0], 0.0), c(0.0, g), c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.0, g), c(w[1], 0.0), c(0.0, g), c(0.0, 0.0)],
            [c(0.0, 0.0), c(0.0, g), c(w[2], 0.0), c(0.0, g)],
            [c(0.0, 0.0), c(0.0, 0.0), c(0.0, g), c(w[3], 0.0)],
        ];
        for j in 0..4 {
            for k in 0..4 {
                assert_eq!(m[(j, k)], expect[j][k]);
            }
        }
    }

    #[test]
    fn cubic_coefficients() {
        let (x, y, z, g) = (0.3_f64, 1.7, 0.9, 0.45);
        let p = characteristic_polynomial(&ChainSpec::new(vec![x, y, z], g).unwrap());
        let g2 = g * g;
        let expect = [
            -x * y * z - (x + z) * g2,
            x * y + x * z + y * z + 2.0 * g2,
            -(x + y + z),
            1.0,
        ];
        for k in 0..4 {
            assert!((p.coeff(k) - expect[k]).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn quartic_coefficients() {
        let (x, y, z, w, g) = (0.3_f64, 1.7, 0.9, 2.2, 0.45);
        let g2 = g * g;
        let a = x + y + z + w;
        let b = x * y + x * z + x * w + y * z + y * w + z * w + 3.0 * g2;
        let cc = x * y * z + x * y * w + x * z * w + y * z * w
            + 2.0 * g2 * x
            + 2.0 * g2 * w
            + g2 * y
            + g2 * z;
        let d = x * y * z * w + g2 * x * y + g2 * x * w + g2 * z * w + g2 * g2;
        let p = characteristic_polynomial(&ChainSpec::new(vec![x, y, z, w], g).unwrap());
        let expect = [d, -cc, b, -a, 1.0];
        for k in 0..5 {
            assert!((p.coeff(k) - expect[k]).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn two_site_uniform_quadratic() {
        let g = 1.3;
        let p = characteristic_polynomial(&ChainSpec::uniform(2, g).unwrap());
        assert_eq!(p.coeffs(), &[1.0 + g * g, -2.0, 1.0]);
    }

    proptest! {
        #[test]
        fn recurrence_matches_cofactor_determinant(
            w in prop::collection::vec(0.05f64..4.0, 2..=8),
            g in -3.0f64..3.0,
            pts in prop::collection::vec((-4.0f64..6.0, -4.0f64..4.0), 20),
        ) {
            let spec = ChainSpec::new(w, g).unwrap();
            let m = build_coupling_matrix(&spec);
            let n = spec.n();
            let p = characteristic_polynomial(&spec);
            for (re, im) in pts {
                let lam = c(re, im);
                let rows: Vec<Vec<Complex64>> = (0..n)
                    .map(|j| (0..n).map(|k| {
                        let d = if j == k { lam } else { c(0.0, 0.0) };
                        d - m.get(j, k)
                    }).collect())
                    .collect();
                let det = cofactor_det(&rows);
                let scale = 1.0 + det.norm();
                prop_assert!((p.eval_complex(lam) - det).norm() <= 1e-9 * scale);
                prop_assert!((characteristic_value(&spec, lam) - det).norm() <= 1e-9 * scale);
            }
        }

        #[test]
        fn real_similar_form_preserves_the_polynomial(
            w in prop::collection::vec(0.05f64..4.0, 2..=6),
            g in -3.0f64..3.0,
            re in -3.0f64..5.0,
            im in -3.0f64..3.0,
        ) {
            let spec = ChainSpec::new(w, g).unwrap();
            let rows = build_coupling_matrix(&spec).real_similar();
            let lam = c(re, im);
            let shifted: Vec<Vec<Complex64>> = rows.iter().enumerate()
                .map(|(j, r)| r.iter().enumerate().map(|(k, &v)| {
                    (if j == k { lam } else { c(0.0, 0.0) }) - v
                }).collect())
                .collect();
            let det = cofactor_det(&shifted);
            let p = characteristic_value(&spec, lam);
            prop_assert!((p - det).norm() <= 1e-9 * (1.0 + det.norm()));
        }
    }
}
