use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods win whenever std is linked
use num_traits::Float;

use super::dot;

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `sqrt(rᵀ M⁻¹ r)` at exit.
    pub residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator. Stops once `sqrt(rᵀ M⁻¹ r) <= tol`.
pub fn pcg<A, P>(mut apply: A, precond: P, b: &[f64], x0: Option<&[f64]>, tol: f64, maxit: usize) -> CgOutcome
where
    A: FnMut(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut x = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    let mut r = b.to_vec();
    let mut ap = vec![0.0; n];
    if x0.is_some() {
        apply(&x, &mut ap);
        for (ri, a) in r.iter_mut().zip(&ap) {
            *ri -= a;
        }
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut rz = dot(&r, &z);
    let mut p = z.clone();
    let mut iterations = 0;
    while rz.max(0.0).sqrt() > tol && iterations < maxit {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
    }
    let residual = rz.max(0.0).sqrt();
    CgOutcome { x, iterations, residual, converged: residual <= tol }
}
