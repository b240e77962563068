//! Jacobi-preconditioned conjugate gradient for the symmetric x-subproblem.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// Final `||r|| / ||rhs||`.
    pub relative_residual: f64,
}

/// Solves `M x = rhs` in place, starting from the incoming `x`.
///
/// `apply(v, out)` must write `M v` into `out`. When `diag` is given and all
/// of its entries are positive it is used as a Jacobi preconditioner.
/// Iteration stops once `||r|| <= tol * ||rhs||`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: Option<&[f64]>,
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> CgOutcome {
    let n = rhs.len();
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        x.fill(0.0);
        return CgOutcome { iterations: 0, converged: true, relative_residual: 0.0 };
    }
    let inv_diag: Option<Vec<f64>> = diag
        .filter(|d| d.iter().all(|&v| v > 0.0))
        .map(|d| d.iter().map(|v| 1.0 / v).collect());
    let precondition = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(inv) => z.iter_mut().zip(r).zip(inv).for_each(|((z, r), i)| *z = r * i),
        None => z.copy_from_slice(r),
    };

    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let mut rel = norm(&r) / rhs_norm;
    if rel <= tol {
        return CgOutcome { iterations: 0, converged: true, relative_residual: rel };
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut mp = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iters {
        apply(&p, &mut mp);
        let curvature = dot(&p, &mp);
        if curvature <= 0.0 || !curvature.is_finite() {
            return CgOutcome { iterations: it, converged: false, relative_residual: rel };
        }
        let step = rz / curvature;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * mp[i];
        }
        rel = norm(&r) / rhs_norm;
        if rel <= tol {
            return CgOutcome { iterations: it, converged: true, relative_residual: rel };
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome { iterations: max_iters, converged: false, relative_residual: rel }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
