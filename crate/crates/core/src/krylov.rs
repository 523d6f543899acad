//! Matrix-free Krylov solvers on plain slices.
//!
//! Operators are closures `apply(x, y)` writing `y = A x`. Singular systems
//! whose null space is the constants are handled with `project_mean`, which
//! keeps the right-hand side and every residual orthogonal to constants.

use crate::grid::dot;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Final residual relative to `||b||`.
    pub residual: f64,
    pub converged: bool,
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive
/// (semi-)definite operators. `x` holds the initial guess on entry.
pub fn cg(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    inv_diag: Option<&[f64]>,
    project_mean: bool,
    tol: f64,
    max_iter: usize,
) -> KrylovStats {
    let n = b.len();
    let mut rhs = b.to_vec();
    if project_mean {
        remove_mean(&mut rhs);
        remove_mean(x);
    }
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovStats { iterations: 0, residual: 0.0, converged: true };
    }
    let precond = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((z, r), d)| *z = r * d),
        None => z.copy_from_slice(r),
    };
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if project_mean {
        remove_mean(&mut r);
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    if project_mean {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    for it in 0..max_iter {
        if res <= tol {
            return KrylovStats { iterations: it, residual: res, converged: true };
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if project_mean {
            remove_mean(&mut r);
        }
        precond(&r, &mut z);
        if project_mean {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        res = norm(&r) / bnorm;
    }
    if project_mean {
        remove_mean(x);
    }
    KrylovStats { iterations: max_iter, residual: res, converged: res <= tol }
}

/// Jacobi-preconditioned BiCGSTAB for general nonsingular (or
/// constant-null-space, with `project_mean`) operators.
pub fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    inv_diag: Option<&[f64]>,
    project_mean: bool,
    tol: f64,
    max_iter: usize,
) -> KrylovStats {
    let n = b.len();
    let mut rhs = b.to_vec();
    if project_mean {
        remove_mean(&mut rhs);
        remove_mean(x);
    }
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovStats { iterations: 0, residual: 0.0, converged: true };
    }
    let precond = |r: &[f64], z: &mut [f64]| {
        match inv_diag {
            Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((z, r), d)| *z = r * d),
            None => z.copy_from_slice(r),
        }
        if project_mean {
            remove_mean(z);
        }
    };
    let residual = |x: &[f64], r: &mut Vec<f64>, scratch: &mut Vec<f64>| {
        apply(x, scratch);
        for k in 0..n {
            r[k] = rhs[k] - scratch[k];
        }
        if project_mean {
            remove_mean(r);
        }
    };
    let mut scratch = vec![0.0; n];
    let mut r = vec![0.0; n];
    residual(x, &mut r, &mut scratch);
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    let mut restarts = 0;
    for it in 0..max_iter {
        if res <= tol {
            return KrylovStats { iterations: it, residual: res, converged: true };
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // breakdown: restart from the true residual
            restarts += 1;
            if restarts > 50 {
                break;
            }
            residual(x, &mut r, &mut scratch);
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|x| *x = 0.0);
            p.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        precond(&p, &mut phat);
        apply(&phat, &mut v);
        if project_mean {
            remove_mean(&mut v);
        }
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            break;
        }
        alpha = rho / rv;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        if norm(&s) / bnorm <= tol {
            for k in 0..n {
                x[k] += alpha * phat[k];
            }
            residual(x, &mut r, &mut scratch);
            res = norm(&r) / bnorm;
            if res <= tol {
                return KrylovStats { iterations: it + 1, residual: res, converged: true };
            }
            continue;
        }
        precond(&s, &mut shat);
        apply(&shat, &mut t);
        if project_mean {
            remove_mean(&mut t);
        }
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for k in 0..n {
            x[k] += alpha * phat[k] + omega * shat[k];
            r[k] = s[k] - omega * t[k];
        }
        res = norm(&r) / bnorm;
        // guard against drift of the recursive residual
        if res <= tol {
            residual(x, &mut r, &mut scratch);
            res = norm(&r) / bnorm;
        }
    }
    if project_mean {
        remove_mean(x);
    }
    KrylovStats { iterations: max_iter, residual: res, converged: res <= tol }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d_periodic(x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            y[i] = 2.0 * x[i] - x[(i + n - 1) % n] - x[(i + 1) % n];
        }
    }

    #[test]
    fn cg_solves_spd_tridiagonal() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = 3.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 };
            }
        };
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        apply(&exact, &mut b);
        let mut x = vec![0.0; n];
        let st = cg(apply, &b, &mut x, None, false, 1e-12, 500);
        assert!(st.converged);
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_periodic_system_returns_zero_mean_solution() {
        let n = 32;
        let exact: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
        let mut b = vec![0.0; n];
        lap1d_periodic(&exact, &mut b);
        for use_cg in [true, false] {
            let mut x: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let st = if use_cg {
                cg(lap1d_periodic, &b, &mut x, None, true, 1e-12, 1000)
            } else {
                bicgstab(lap1d_periodic, &b, &mut x, None, true, 1e-12, 1000)
            };
            assert!(st.converged, "{st:?}");
            let mean = x.iter().sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-12);
            for (a, e) in x.iter().zip(&exact) {
                assert!((a - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bicgstab_handles_nonsymmetric_operator() {
        let n = 40;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = 4.0 * x[i] - 1.5 * if i > 0 { x[i - 1] } else { 0.0 } - 0.5 * if i + 1 < n { x[i + 1] } else { 0.0 };
            }
        };
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.01).collect();
        let mut x = vec![0.0; n];
        let st = bicgstab(apply, &b, &mut x, None, false, 1e-12, 500);
        assert!(st.converged);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        for (a, bb) in ax.iter().zip(&b) {
            assert!((a - bb).abs() < 1e-10);
        }
    }
}
