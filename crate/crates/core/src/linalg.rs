//! Small dense helpers: Francis QR for real Hessenberg matrices and a
//! principal matrix square root for complex matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

const MAX_SWEEPS_PER_ROOT: usize = 60;

/// Eigenvalues of a real upper Hessenberg matrix by the Francis
/// double-shift QR iteration (EISPACK `hqr`).
///
/// Complex eigenvalues come out as exact conjugate pairs. Returns `None`
/// if some eigenvalue fails to deflate within the iteration budget.
pub(crate) fn hessenberg_eigenvalues(mut a: Vec<Vec<f64>>) -> Option<Vec<Complex64>> {
    let n = a.len();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    if n == 0 {
        return Some(Vec::new());
    }

    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }

    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let hi = nn as usize;
            // Find the lowest small subdiagonal element.
            let mut l = hi;
            while l >= 1 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() <= f64::EPSILON * s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }

            let mut x = a[hi][hi];
            if l == hi {
                wr[hi] = x + t;
                wi[hi] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[hi - 1][hi - 1];
            let mut w = a[hi][hi - 1] * a[hi - 1][hi];
            if l + 1 == hi {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + z.copysign(p);
                    wr[hi - 1] = x + z;
                    wr[hi] = if z != 0.0 { x - w / z } else { x + z };
                    wi[hi - 1] = 0.0;
                    wi[hi] = 0.0;
                } else {
                    wr[hi - 1] = x + p;
                    wr[hi] = x + p;
                    wi[hi - 1] = z;
                    wi[hi] = -z;
                }
                nn -= 2;
                break;
            }

            if its >= MAX_SWEEPS_PER_ROOT {
                return None;
            }
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 0..=hi {
                    a[i][i] -= x;
                }
                let s = a[hi][hi - 1].abs() + a[hi - 1][hi - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            // Look for two consecutive small subdiagonal elements.
            let mut m = hi - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[m][m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - ss;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=hi {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }

            // Double QR step on rows l..=hi, columns m..=hi.
            let mut xk = 0.0;
            for k in m..hi {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = if k + 1 != hi { a[k + 2][k - 1] } else { 0.0 };
                    xk = p.abs() + q.abs() + r.abs();
                    if xk != 0.0 {
                        p /= xk;
                        q /= xk;
                        r /= xk;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        a[k][k - 1] = -a[k][k - 1];
                    }
                } else {
                    a[k][k - 1] = -s * xk;
                }
                p += s;
                let xs = p / s;
                let ys = q / s;
                let zs = r / s;
                q /= p;
                r /= p;
                for j in k..=hi {
                    let mut pp = a[k][j] + q * a[k + 1][j];
                    if k + 1 != hi {
                        pp += r * a[k + 2][j];
                        a[k + 2][j] -= pp * zs;
                    }
                    a[k + 1][j] -= pp * ys;
                    a[k][j] -= pp * xs;
                }
                let mmin = hi.min(k + 3);
                for row in a.iter_mut().take(mmin + 1).skip(l) {
                    let mut pp = xs * row[k] + ys * row[k + 1];
                    if k + 1 != hi {
                        pp += zs * row[k + 2];
                        row[k + 2] -= pp * r;
                    }
                    row[k + 1] -= pp * q;
                    row[k] -= pp;
                }
            }
        }
    }

    Some(
        wr.into_iter()
            .zip(wi)
            .map(|(re, im)| Complex64::new(re, im))
            .collect(),
    )
}

/// Principal square root by the Denman–Beavers iteration.
///
/// Requires no eigenvalue on the closed negative real axis. Returns `None`
/// on a singular iterate or when the iteration stalls.
pub(crate) fn sqrtm_denman_beavers(m: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let n = m.nrows();
    let mut y = m.clone();
    let mut z = DMatrix::<Complex64>::identity(n, n);
    let norm = m.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let y_inv = y.clone().try_inverse()?;
        let z_inv = z.clone().try_inverse()?;
        let y_next = (&y + z_inv).scale(0.5);
        let z_next = (&z + y_inv).scale(0.5);
        let step = (&y_next - &y).iter().map(|v| v.norm()).fold(0.0, f64::max);
        y = y_next;
        z = z_next;
        if step <= 1e-15 * norm.sqrt().max(1.0) {
            return Some(y);
        }
    }
    let resid = (&y * &y - m).iter().map(|v| v.norm()).fold(0.0, f64::max);
    (resid <= 1e-10 * norm.max(1.0)).then_some(y)
}

/// Largest entry modulus.
pub(crate) fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}
