//! Adaptive Lanczos approximation of exp(−iHt)v for Hermitian H given only
//! through its action on vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fock::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovOptions {
    /// Krylov subspace dimension per step.
    pub dim: usize,
    /// Bound on the estimated local error of each accepted step.
    pub tol: f64,
    /// Smallest step before giving up.
    pub min_step: f64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { dim: 30, tol: 1e-9, min_step: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KrylovStats {
    pub steps: usize,
    pub rejected: usize,
    pub max_error: f64,
}

/// One Lanczos step of length h. Returns the propagated vector and the
/// a-posteriori error estimate.
fn lanczos_step<F>(apply: &F, v: &DVector<C64>, h: f64, m: usize) -> (DVector<C64>, f64)
where
    F: Fn(&DVector<C64>) -> DVector<C64>,
{
    let beta0 = v.norm();
    if beta0 == 0.0 {
        return (v.clone(), 0.0);
    }
    let n = v.len();
    let m = m.min(n).max(1);
    let mut basis: Vec<DVector<C64>> = vec![v / C64::new(beta0, 0.0)];
    let mut alpha = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    let mut next_beta = 0.0;
    for j in 0..m {
        let mut w = apply(&basis[j]);
        let a = basis[j].dotc(&w).re;
        alpha.push(a);
        // Full reorthogonalization, twice.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&w);
                w.axpy(-c, q, C64::new(1.0, 0.0));
            }
        }
        let b = w.norm();
        if j + 1 == m {
            next_beta = b;
            break;
        }
        if b < 1e-13 * (a.abs() + 1.0) {
            next_beta = 0.0;
            break;
        }
        beta.push(b);
        basis.push(w / C64::new(b, 0.0));
    }
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    // y = Q exp(−iθh) Qᵀ e1 β0
    let mut y = DVector::<C64>::zeros(k);
    for p in 0..k {
        let phase = C64::from_polar(1.0, -eig.eigenvalues[p] * h) * eig.eigenvectors[(0, p)];
        for i in 0..k {
            y[i] += eig.eigenvectors[(i, p)] * phase;
        }
    }
    y *= C64::new(beta0, 0.0);
    let err = next_beta * y[k - 1].norm();
    let mut out = DVector::<C64>::zeros(n);
    for (i, q) in basis.iter().take(k).enumerate() {
        out.axpy(y[i], q, C64::new(1.0, 0.0));
    }
    (out, err)
}

/// Propagates `v` forward by `span` with adaptive steps. `h` carries the
/// step-size guess between calls.
pub fn krylov_advance<F>(
    apply: &F,
    v: &DVector<C64>,
    span: f64,
    h: &mut f64,
    opts: &KrylovOptions,
    stats: &mut KrylovStats,
) -> Result<DVector<C64>>
where
    F: Fn(&DVector<C64>) -> DVector<C64>,
{
    let mut v = v.clone();
    let mut left = span;
    if *h <= 0.0 {
        *h = span.max(opts.min_step);
    }
    let order = opts.dim as f64;
    while left > 0.0 {
        let step = h.min(left);
        let (w, err) = lanczos_step(apply, &v, step, opts.dim);
        if err <= opts.tol {
            v = w;
            left -= step;
            stats.steps += 1;
            stats.max_error = stats.max_error.max(err);
            let grow = if err == 0.0 { 4.0 } else { (0.9 * (opts.tol / err).powf(1.0 / order)).clamp(1.0, 4.0) };
            if step == *h {
                *h *= grow;
            }
        } else {
            stats.rejected += 1;
            *h = step * (0.9 * (opts.tol / err).powf(1.0 / order)).clamp(0.1, 0.7);
            if *h < opts.min_step {
                return Err(Error::Numerical(format!(
                    "Krylov step fell below {:.1e} with local error estimate {err:.3e} (tol {:.1e}); \
                     {} steps accepted, {} rejected",
                    opts.min_step, opts.tol, stats.steps, stats.rejected
                )));
            }
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 60;
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let h = (&a + a.transpose()) * 0.5;
        let v = DVector::<C64>::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let v = &v / C64::new(v.norm(), 0.0);
        let t = 7.3;
        let eig = h.clone().symmetric_eigen();
        let hc = h.map(|x| C64::new(x, 0.0));
        let mut exact = DVector::<C64>::zeros(n);
        for p in 0..n {
            let q = eig.eigenvectors.column(p).map(|x| C64::new(x, 0.0));
            let c = q.dotc(&v) * C64::from_polar(1.0, -eig.eigenvalues[p] * t);
            exact.axpy(c, &q, C64::new(1.0, 0.0));
        }
        let apply = |x: &DVector<C64>| &hc * x;
        let mut step = 0.0;
        let mut stats = KrylovStats::default();
        let got = krylov_advance(&apply, &v, t, &mut step, &KrylovOptions::default(), &mut stats).unwrap();
        assert!((got - exact).norm() < 1e-8 * stats.steps.max(1) as f64);
        assert!(stats.steps >= 1);
    }

    #[test]
    fn invariant_subspace_is_exact() {
        let h = DMatrix::<C64>::from_diagonal(&DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(-2.0, 0.0),
            C64::new(0.5, 0.0),
        ]));
        let mut v = DVector::<C64>::zeros(3);
        v[1] = C64::new(1.0, 0.0);
        let apply = |x: &DVector<C64>| &h * x;
        let mut step = 0.0;
        let mut stats = KrylovStats::default();
        let got = krylov_advance(&apply, &v, 3.0, &mut step, &KrylovOptions::default(), &mut stats).unwrap();
        assert!((got[1] - C64::from_polar(1.0, 6.0)).norm() < 1e-13);
        assert_eq!(stats.steps, 1);
    }
}
