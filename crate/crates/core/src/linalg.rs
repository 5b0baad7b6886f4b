//! Dense linear-algebra helpers on top of nalgebra.

use alloc::vec::Vec;

use nalgebra::linalg::{Hessenberg, LU};
use nalgebra::{DMatrix, DVector, Dyn};

use crate::C64;

/// Reciprocal 1-norm condition number estimate (Hager's method) from an LU
/// factorization of `a`. Returns 0 for an exactly singular factorization.
pub fn rcond_estimate(a: &DMatrix<f64>, lu: &LU<f64, Dyn, Dyn>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 1.0;
    }
    let anorm = one_norm(a);
    if anorm == 0.0 {
        return 0.0;
    }
    let lu_t = a.transpose().lu();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else { return 0.0 };
        est = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let Some(z) = lu_t.solve(&xi) else { return 0.0 };
        let (jmax, zmax) = z.iter().enumerate().fold((0, 0.0), |acc, (j, v)| {
            if v.abs() > acc.1 {
                (j, v.abs())
            } else {
                acc
            }
        });
        if zmax <= z.dot(&x) {
            break;
        }
        x.fill(0.0);
        x[jmax] = 1.0;
    }
    if !est.is_finite() || est == 0.0 {
        return 0.0;
    }
    1.0 / (anorm * est)
}

pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Diagonal similarity scaling by powers of two that equalizes row and column
/// norms. Returns the balanced matrix; eigenvalues are unchanged.
pub fn balance(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while c >= r * 2.0 {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
    m
}

/// All eigenvalues of a real square matrix (balanced, Hessenberg, then
/// Francis double-shift QR).
pub fn eigenvalues(a: &DMatrix<f64>) -> Option<Vec<C64>> {
    if a.nrows() == 0 {
        return Some(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut h = Hessenberg::new(balance(a)).h();
    hessenberg_qr(&mut h)
}

/// Eigenvalues of an upper Hessenberg matrix by the implicit double-shift QR
/// iteration with exceptional shifts. `h` is overwritten.
fn hessenberg_qr(a: &mut DMatrix<f64>) -> Option<Vec<C64>> {
    let n = a.nrows() as isize;
    let eps = f64::EPSILON;
    let mut out = alloc::vec![C64::new(0.0, 0.0); n as usize];
    let at = |a: &DMatrix<f64>, i: isize, j: isize| a[(i as usize, j as usize)];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            anorm += at(a, i, j).abs();
        }
    }
    let mut nn = n - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 1 {
                let mut s = at(a, l - 1, l - 1).abs() + at(a, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at(a, l, l - 1).abs() <= eps * s {
                    a[(l as usize, l as usize - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = at(a, nn, nn);
            if l == nn {
                out[nn as usize] = C64::new(x + t, 0.0);
                nn -= 1;
            } else {
                let mut y = at(a, nn - 1, nn - 1);
                let mut w = at(a, nn, nn - 1) * at(a, nn - 1, nn);
                if l == nn - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = libm::sqrt(q.abs());
                    x += t;
                    if q >= 0.0 {
                        z = p + libm::copysign(z, p);
                        out[nn as usize - 1] = C64::new(x + z, 0.0);
                        out[nn as usize] = C64::new(if z != 0.0 { x - w / z } else { x + z }, 0.0);
                    } else {
                        out[nn as usize - 1] = C64::new(x + p, z);
                        out[nn as usize] = C64::new(x + p, -z);
                    }
                    nn -= 2;
                } else {
                    if its == 60 {
                        return None;
                    }
                    if its == 10 || its == 20 {
                        t += x;
                        for i in 0..=nn {
                            a[(i as usize, i as usize)] -= x;
                        }
                        let s = at(a, nn, nn - 1).abs() + at(a, nn - 1, nn - 2).abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let (mut p, mut q, mut r, mut z);
                    let mut m = nn - 2;
                    loop {
                        z = at(a, m, m);
                        let rr = x - z;
                        let ss = y - z;
                        p = (rr * ss - w) / at(a, m + 1, m) + at(a, m, m + 1);
                        q = at(a, m + 1, m + 1) - z - rr - ss;
                        r = at(a, m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = at(a, m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs() * (at(a, m - 1, m - 1).abs() + z.abs() + at(a, m + 1, m + 1).abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in (m + 2)..=nn {
                        a[(i as usize, i as usize - 2)] = 0.0;
                        if i != m + 2 {
                            a[(i as usize, i as usize - 3)] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = at(a, k, k - 1);
                            q = at(a, k + 1, k - 1);
                            r = if k + 1 != nn { at(a, k + 2, k - 1) } else { 0.0 };
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = libm::copysign(libm::sqrt(p * p + q * q + r * r), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[(k as usize, k as usize - 1)] = -at(a, k, k - 1);
                                }
                            } else {
                                a[(k as usize, k as usize - 1)] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                let (ku, ju) = (k as usize, j as usize);
                                let mut pp = a[(ku, ju)] + q * a[(ku + 1, ju)];
                                if k + 1 != nn {
                                    pp += r * a[(ku + 2, ju)];
                                    a[(ku + 2, ju)] -= pp * z;
                                }
                                a[(ku + 1, ju)] -= pp * y;
                                a[(ku, ju)] -= pp * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                let (iu, ku) = (i as usize, k as usize);
                                let mut pp = x * a[(iu, ku)] + y * a[(iu, ku + 1)];
                                if k + 1 != nn {
                                    pp += z * a[(iu, ku + 2)];
                                    a[(iu, ku + 2)] -= pp * r;
                                }
                                a[(iu, ku + 1)] -= pp * q;
                                a[(iu, ku)] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l + 1 >= nn {
                break;
            }
        }
    }
    Some(out)
}

/// Right eigenvector for an (approximate) eigenvalue by inverse iteration.
/// Normalized to unit 2-norm.
pub fn right_eigenvector(a: &DMatrix<f64>, lambda: C64) -> Option<DVector<C64>> {
    let n = a.nrows();
    let scale = 1.0 + lambda.norm() + a.amax();
    for attempt in 0..4 {
        let shift = lambda + C64::new(scale * 1e-13 * (attempt as f64), scale * 1e-13 * (attempt as f64));
        let m = DMatrix::from_fn(n, n, |i, j| {
            let v = C64::new(a[(i, j)], 0.0);
            if i == j {
                v - shift
            } else {
                v
            }
        });
        let lu = m.lu();
        let mut x = DVector::from_fn(n, |i, _| C64::new(1.0, 0.1 * i as f64 / n.max(1) as f64));
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&x) {
                Some(y) if y.iter().all(|c| c.re.is_finite() && c.im.is_finite()) => {
                    let nrm = y.norm();
                    if nrm == 0.0 {
                        ok = false;
                        break;
                    }
                    x = y.unscale(nrm);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Some(x);
        }
    }
    None
}

/// Left eigenvector `w` with `w^H A = lambda w^H`, unit 2-norm.
pub fn left_eigenvector(a: &DMatrix<f64>, lambda: C64) -> Option<DVector<C64>> {
    right_eigenvector(&a.transpose(), lambda).map(|u| u.map(|c| c.conj()))
}

/// `w^H v`.
pub fn hdot(w: &DVector<C64>, v: &DVector<C64>) -> C64 {
    w.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::linalg::Cholesky::new(a.clone()).map(|c| c.l())
}
