//! Finite-dimensional quantum systems over the reals or complexes.
//!
//! Hermitian operators are coordinatized in the basis `{1, lambda_1, ...}`
//! where the `lambda_k` are generalized Gell-Mann matrices normalized by
//! `tr(lambda_j lambda_k) = 2 delta_jk` (only the real symmetric ones for the
//! real field). The identity therefore has coordinates `(1, 0, ..., 0)`.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HilbertField {
    Real,
    Complex,
}

impl std::fmt::Display for HilbertField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HilbertField::Real => "real",
            HilbertField::Complex => "complex",
        })
    }
}

#[derive(Debug, Clone)]
pub struct OperatorBasis {
    field: HilbertField,
    dim: usize,
    elements: Vec<CMat>,
}

fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

impl OperatorBasis {
    pub fn new(field: HilbertField, dim: usize) -> Self {
        assert!(dim >= 1);
        let mut elements = vec![CMat::identity(dim, dim)];
        for j in 0..dim {
            for k in j + 1..dim {
                let mut s = CMat::zeros(dim, dim);
                s[(j, k)] = c(1.0);
                s[(k, j)] = c(1.0);
                elements.push(s);
                if field == HilbertField::Complex {
                    let mut a = CMat::zeros(dim, dim);
                    a[(j, k)] = Complex::new(0.0, -1.0);
                    a[(k, j)] = Complex::new(0.0, 1.0);
                    elements.push(a);
                }
            }
        }
        for l in 1..dim {
            let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
            let mut d = CMat::zeros(dim, dim);
            for j in 0..l {
                d[(j, j)] = c(norm);
            }
            d[(l, l)] = c(-(l as f64) * norm);
            elements.push(d);
        }
        OperatorBasis {
            field,
            dim,
            elements,
        }
    }

    pub fn field(&self) -> HilbertField {
        self.field
    }

    pub fn hilbert_dim(&self) -> usize {
        self.dim
    }

    /// Real dimension of the space of Hermitian operators.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMat] {
        &self.elements
    }

    pub fn coords(&self, a: &CMat) -> DVector<f64> {
        DVector::from_fn(self.len(), |k, _| {
            let t = (a * &self.elements[k]).trace().re;
            if k == 0 {
                t / self.dim as f64
            } else {
                t / 2.0
            }
        })
    }

    pub fn matrix(&self, coords: &DVector<f64>) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for (k, e) in self.elements.iter().enumerate() {
            m += e * c(coords[k]);
        }
        m
    }

    /// Gram matrix of the trace form `tr(ab)` in these coordinates.
    pub fn trace_gram(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.len(), |i, j| {
            (&self.elements[i] * &self.elements[j]).trace().re
        })
    }

    /// Matrix of `a -> u a u^dagger` on coordinates.
    pub fn conjugation_action(&self, u: &CMat) -> DMatrix<f64> {
        let ud = u.adjoint();
        let mut m = DMatrix::zeros(self.len(), self.len());
        for (k, e) in self.elements.iter().enumerate() {
            m.set_column(k, &self.coords(&(u * e * &ud)));
        }
        m
    }

    /// Matrix of entrywise complex conjugation `a -> conj(a)` on coordinates.
    pub fn complex_conjugation(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.len(), self.len());
        for (k, e) in self.elements.iter().enumerate() {
            m.set_column(k, &self.coords(&e.map(|z| z.conj())));
        }
        m
    }

    pub fn eigenvalues(&self, coords: &DVector<f64>) -> Vec<f64> {
        let m = self.matrix(coords);
        let h = (&m + m.adjoint()) * c(0.5);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn min_eigenvalue(&self, coords: &DVector<f64>) -> f64 {
        self.eigenvalues(coords).first().cloned().unwrap_or(0.0)
    }

    pub fn is_psd(&self, coords: &DVector<f64>, tol: f64) -> bool {
        self.min_eigenvalue(coords) >= -tol
    }
}

pub fn projector(v: &CVec) -> CMat {
    let n = v.norm();
    let u = v / c(n);
    &u * u.adjoint()
}

/// Haar-distributed unitary (orthogonal for the real field) from QR of a
/// Gaussian matrix.
pub fn random_unitary<R: Rng>(field: HilbertField, dim: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = match field {
            HilbertField::Real => 0.0,
            HilbertField::Complex => rng.sample(StandardNormal),
        };
        Complex::new(re, im)
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMat::from_fn(dim, dim, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / c(d.norm())
            } else {
                c(1.0)
            }
        } else {
            c(0.0)
        }
    });
    q * phases
}

/// A quantum system together with a finite sample of its outcomes
/// (rank-one projections grouped into frames).
#[derive(Debug, Clone)]
pub struct QuantumSystem {
    pub basis: OperatorBasis,
    pub vectors: Vec<CVec>,
}

impl QuantumSystem {
    pub fn field(&self) -> HilbertField {
        self.basis.field()
    }

    pub fn dim(&self) -> usize {
        self.basis.hilbert_dim()
    }

    pub fn projection(&self, outcome: usize) -> CMat {
        projector(&self.vectors[outcome])
    }

    pub fn outcome_coords(&self, outcome: usize) -> DVector<f64> {
        self.basis.coords(&self.projection(outcome))
    }

    fn match_projection(&self, p: &CMat) -> Option<usize> {
        (0..self.vectors.len()).find(|&j| (&self.projection(j) - p).norm() < MATCH_TOL)
    }

    /// Permutation induced on sampled outcomes by conjugation with `u`, if
    /// the sample is closed under it.
    pub fn permutation_from_unitary(&self, u: &CMat) -> Option<Vec<usize>> {
        let ud = u.adjoint();
        (0..self.vectors.len())
            .map(|i| self.match_projection(&(u * self.projection(i) * &ud)))
            .collect()
    }

    /// Permutation induced by complex conjugation of projections.
    pub fn conjugation_permutation(&self) -> Option<Vec<usize>> {
        (0..self.vectors.len())
            .map(|i| self.match_projection(&self.projection(i).map(|z| z.conj())))
            .collect()
    }

    /// Density-matrix membership: PSD with unit trace.
    pub fn is_density(&self, coords: &DVector<f64>, tol: f64) -> bool {
        (coords[0] * self.dim() as f64 - 1.0).abs() <= tol
            && self.basis.is_psd(coords, tol)
    }
}

/// Coordinates of `count` Haar-random pure states drawn from `seed`.
pub fn sample_pure_states(basis: &OperatorBasis, count: usize, seed: u64) -> Vec<DVector<f64>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u = random_unitary(basis.field(), basis.hilbert_dim(), &mut rng);
            basis.coords(&projector(&u.column(0).into_owned()))
        })
        .collect()
}

pub fn fourier_vector(dim: usize, k: usize) -> CVec {
    let n = dim as f64;
    CVec::from_fn(dim, |j, _| {
        let angle = 2.0 * std::f64::consts::PI * (j * k) as f64 / n;
        Complex::from_polar(1.0 / n.sqrt(), angle)
    })
}

pub fn basis_vector(dim: usize, k: usize) -> CVec {
    CVec::from_fn(dim, |j, _| if j == k { c(1.0) } else { c(0.0) })
}

/// Orthonormal DCT-II basis vector; a real frame unbiased-ish to the
/// standard one.
pub fn dct_vector(dim: usize, k: usize) -> CVec {
    let n = dim as f64;
    let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
    CVec::from_fn(dim, |j, _| {
        c(scale * (std::f64::consts::PI * (j as f64 + 0.5) * k as f64 / n).cos())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qubit_basis_is_pauli() {
        let b = OperatorBasis::new(HilbertField::Complex, 2);
        assert_eq!(b.len(), 4);
        let gram = b.trace_gram();
        assert!((gram[(0, 0)] - 2.0).abs() < 1e-12);
        for k in 1..4 {
            assert!((gram[(k, k)] - 2.0).abs() < 1e-12);
        }
        // |0><0| = (1 + sigma_z) / 2
        let p = projector(&basis_vector(2, 0));
        let x = b.coords(&p);
        assert!((x - DVector::from_vec(vec![0.5, 0.0, 0.0, 0.5])).norm() < 1e-12);
    }

    #[test]
    fn dimensions_match_field() {
        assert_eq!(OperatorBasis::new(HilbertField::Real, 2).len(), 3);
        assert_eq!(OperatorBasis::new(HilbertField::Real, 3).len(), 6);
        assert_eq!(OperatorBasis::new(HilbertField::Complex, 3).len(), 9);
    }

    #[test]
    fn coordinates_round_trip() {
        let b = OperatorBasis::new(HilbertField::Complex, 3);
        let v = DVector::from_fn(9, |i, _| (i as f64 * 0.37).sin());
        assert!((b.coords(&b.matrix(&v)) - &v).norm() < 1e-12);
    }

    #[test]
    fn random_unitaries_are_unitary_and_act_orthogonally_on_traceless_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for field in [HilbertField::Real, HilbertField::Complex] {
            let u = random_unitary(field, 3, &mut rng);
            assert!((&u * u.adjoint() - CMat::identity(3, 3)).norm() < 1e-12);
            let b = OperatorBasis::new(field, 3);
            let m = b.conjugation_action(&u);
            let g = b.trace_gram();
            assert!((m.transpose() * &g * &m - &g).norm() < 1e-10);
        }
    }
}
