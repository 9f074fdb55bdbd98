//! Spectral decomposition inside the associative subalgebra generated by
//! one element, orthonormalized for the trace form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::scalar::Field;

use super::JordanAlgebra;

/// Eigenvalues below this are treated as zero before square roots.
pub const SQRT_CLAMP: f64 = -1e-12;

const KRYLOV_TOL: f64 = 1e-10;

/// `a = Σ λᵢ cᵢ` with `cᵢ` orthogonal idempotents summing to the unit.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub eigenvalues: Vec<f64>,
    pub idempotents: Vec<DVector<f64>>,
}

impl Spectral {
    pub fn min(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.idempotents[0].len());
        for (l, c) in self.eigenvalues.iter().zip(&self.idempotents) {
            out += c * f(*l);
        }
        out
    }
}

fn tau_dot(tau: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.transpose() * tau * b)[0]
}

/// Krylov space of `a` from the unit, Gram–Schmidt in `τ`, then the
/// symmetric eigenproblem of `L_a` on it. Requires `τ` positive definite.
pub fn spectral_decomposition(j: &JordanAlgebra<f64>, tau: &DMatrix<f64>, a: &DVector<f64>) -> Result<Spectral> {
    let d = j.dim;
    let mut q: Vec<DVector<f64>> = Vec::new();
    let e_norm = tau_dot(tau, &j.unit, &j.unit);
    if e_norm <= 0.0 {
        return Err(Error::Numerical("trace form is not positive on the unit".into()));
    }
    q.push(&j.unit / e_norm.sqrt());
    while q.len() < d {
        let mut v = j.product(a, q.last().expect("non-empty"));
        let before = tau_dot(tau, &v, &v).max(0.0).sqrt();
        for _ in 0..2 {
            for b in &q {
                let c = tau_dot(tau, b, &v);
                v -= b * c;
            }
        }
        let after = tau_dot(tau, &v, &v).max(0.0).sqrt();
        if after <= KRYLOV_TOL * before.max(1.0) {
            break;
        }
        q.push(v / after);
    }
    let k = q.len();
    let s = DMatrix::from_fn(k, k, |r, c| tau_dot(tau, &q[r], &j.product(a, &q[c])));
    let sym = (&s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut pairs: Vec<(f64, DVector<f64>)> = Vec::with_capacity(k);
    for col in 0..k {
        let mut v = DVector::zeros(d);
        for (r, b) in q.iter().enumerate() {
            v += b * eig.eigenvectors[(r, col)];
        }
        let vv = j.product(&v, &v);
        let scale = tau_dot(tau, &vv, &v) / tau_dot(tau, &v, &v);
        if !scale.is_finite() || scale.abs() < 1e-14 {
            return Err(Error::Numerical("spectral decomposition did not converge".into()));
        }
        pairs.push((eig.eigenvalues[col], v / scale));
    }
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite eigenvalues"));
    let raw = Spectral {
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        idempotents: pairs.into_iter().map(|p| p.1).collect(),
    };
    let polished = polish(j, a, raw.clone());
    let worst = |sp: &Spectral| {
        let (r, u) = residual(j, a, sp);
        r.max(u)
    };
    let sp = if worst(&polished) < worst(&raw) { polished } else { raw };
    let scale = 1.0 + a.amax();
    let err = residual(j, a, &sp);
    if !(err.0 <= 1e-8 * scale && err.1 <= 1e-8) {
        return Err(Error::Numerical("spectral decomposition did not converge".into()));
    }
    Ok(sp)
}

/// Recomposition and unit errors.
fn residual(j: &JordanAlgebra<f64>, a: &DVector<f64>, sp: &Spectral) -> (f64, f64) {
    let recomposed = sp.apply(|l| l);
    let unit = sp.apply(|_| 1.0);
    let e = ((recomposed - a).amax(), (unit - &j.unit).amax());
    if e.0.is_finite() && e.1.is_finite() {
        e
    } else {
        (f64::INFINITY, f64::INFINITY)
    }
}

/// Purifies each idempotent with `c ← 3c² − 2c³` and refits the
/// eigenvalues to `a` by least squares. Recovers accuracy lost to an
/// ill-conditioned trace form.
fn polish(j: &JordanAlgebra<f64>, a: &DVector<f64>, sp: Spectral) -> Spectral {
    let idempotents: Vec<DVector<f64>> = sp
        .idempotents
        .into_iter()
        .map(|mut c| {
            for _ in 0..3 {
                let c2 = j.product(&c, &c);
                c = &c2 * 3.0 - j.product(&c, &c2) * 2.0;
            }
            c
        })
        .collect();
    let basis = DMatrix::from_columns(&idempotents);
    let eigenvalues = match basis.clone().svd(true, true).solve(a, 1e-14) {
        Ok(l) => l.iter().copied().collect(),
        Err(_) => sp.eigenvalues,
    };
    Spectral { eigenvalues, idempotents }
}

/// `a^{1/2}` for `a` in the cone of squares.
pub fn sqrt(j: &JordanAlgebra<f64>, tau: &DMatrix<f64>, a: &DVector<f64>) -> Result<DVector<f64>> {
    let sp = spectral_decomposition(j, tau, a)?;
    if sp.min() < SQRT_CLAMP * (1.0 + a.amax()) {
        return Err(Error::Numerical(format!("negative eigenvalue {} under square root", sp.min())));
    }
    Ok(sp.apply(|l| l.max(0.0).sqrt()))
}

/// All eigenvalues at least `-tol`.
pub fn cone_of_squares_membership<F: Field>(j: &JordanAlgebra<F>, a: &Vector<F>, tol: f64) -> Result<bool> {
    let jf = j.to_float();
    let tau = crate::linalg::to_float_mat(&j.trace_form());
    let af = crate::linalg::to_float_vec(a);
    Ok(spectral_decomposition(&jf, &tau, &af)?.min() >= -tol)
}
