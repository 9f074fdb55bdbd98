//! Euclidean Jordan algebras: a catalog of structure tensors, spectral
//! calculus, symmetric-cone verification, product recovery and
//! identification.

mod catalog;
pub mod identify;
pub mod recover;
pub mod spectral;
pub mod verify;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::scalar::Field;

pub use catalog::{complex_herm, direct_sum, from_kind, quat_herm, real_sym, spin_factor};
pub use identify::{identify_algebra, Identification};
pub use recover::{recover_jordan_product, ConeOracle, Recovery, RecoveryProblem, RecoveryReport, NEWTON_SEEDS, RECOVERY_SEED};
pub use spectral::{cone_of_squares_membership, spectral_decomposition, sqrt, Spectral};
pub use verify::{verify_symmetric_cone, SymmetricConeReport, VerifyOptions};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Kind {
    RealSym(usize),
    ComplexHerm(usize),
    QuatHerm(usize),
    SpinFactor(usize),
    DirectSum(Vec<Kind>),
    Recovered,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::RealSym(n) => write!(f, "RealSym({n})"),
            Kind::ComplexHerm(n) => write!(f, "ComplexHerm({n})"),
            Kind::QuatHerm(n) => write!(f, "QuatHerm({n})"),
            Kind::SpinFactor(n) => write!(f, "SpinFactor({n})"),
            Kind::DirectSum(parts) => {
                let inner: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "DirectSum({})", inner.join(", "))
            }
            Kind::Recovered => f.write_str("Recovered"),
        }
    }
}

impl Serialize for Kind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "Recovered" {
            return Ok(Kind::Recovered);
        }
        let bad = || Error::Parse(format!("unknown algebra kind `{s}`"));
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s.strip_suffix(')').ok_or_else(bad)?[open + 1..].trim();
        let name = &s[..open];
        if name == "DirectSum" {
            let mut parts = Vec::new();
            let (mut depth, mut start) = (0usize, 0usize);
            for (i, ch) in inner.char_indices() {
                match ch {
                    '(' => depth += 1,
                    ')' => depth = depth.saturating_sub(1),
                    ',' if depth == 0 => {
                        parts.push(inner[start..i].parse()?);
                        start = i + 1;
                    }
                    _ => {}
                }
            }
            parts.push(inner[start..].parse()?);
            return Ok(Kind::DirectSum(parts));
        }
        let n: usize = inner.parse().map_err(|_| bad())?;
        match name {
            "RealSym" if n >= 1 => Ok(Kind::RealSym(n)),
            "ComplexHerm" if n >= 1 => Ok(Kind::ComplexHerm(n)),
            "QuatHerm" if n >= 1 => Ok(Kind::QuatHerm(n)),
            "SpinFactor" if n >= 1 => Ok(Kind::SpinFactor(n)),
            _ => Err(bad()),
        }
    }
}

/// A commutative algebra on `F^dim` given by structure constants
/// `(a∘b)_k = Σ T[k,i,j] a_i b_j`, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanAlgebra<F: Field> {
    pub kind: Kind,
    pub dim: usize,
    pub unit: Vector<F>,
    pub labels: Vec<String>,
    entries: Vec<(usize, usize, usize, F)>,
}

impl<F: Field> JordanAlgebra<F> {
    /// From a dense row-major tensor `T[k][i][j]`.
    pub fn from_dense(kind: Kind, dim: usize, dense: &[F], unit: Vector<F>) -> Result<Self> {
        if dense.len() != dim * dim * dim || unit.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim * dim,
                got: dense.len(),
            });
        }
        let zero = F::zero();
        let entries = (0..dense.len())
            .filter(|&idx| dense[idx] != zero)
            .map(|idx| (idx / (dim * dim), (idx / dim) % dim, idx % dim, dense[idx].clone()))
            .collect();
        Ok(JordanAlgebra {
            kind,
            dim,
            unit,
            labels: (0..dim).map(|i| format!("b{i}")).collect(),
            entries,
        })
    }

    pub fn dense(&self) -> Vec<F> {
        let d = self.dim;
        let mut out = vec![F::zero(); d * d * d];
        for (k, i, j, v) in &self.entries {
            out[k * d * d + i * d + j] = v.clone();
        }
        out
    }

    pub fn basis_vector(&self, i: usize) -> Vector<F> {
        Vector::from_fn(self.dim, |k, _| if k == i { F::one() } else { F::zero() })
    }

    pub fn product(&self, a: &Vector<F>, b: &Vector<F>) -> Vector<F> {
        let zero = F::zero();
        let mut out = Vector::from_element(self.dim, F::zero());
        for (k, i, j, v) in &self.entries {
            if a[*i] == zero || b[*j] == zero {
                continue;
            }
            out[*k] = out[*k].clone() + v.clone() * a[*i].clone() * b[*j].clone();
        }
        out
    }

    pub fn square(&self, a: &Vector<F>) -> Vector<F> {
        self.product(a, a)
    }

    /// Matrix of `L_a : x ↦ a∘x`.
    pub fn mult_op(&self, a: &Vector<F>) -> Mat<F> {
        let zero = F::zero();
        let mut m = Mat::from_element(self.dim, self.dim, F::zero());
        for (k, i, j, v) in &self.entries {
            if a[*i] != zero {
                m[(*k, *j)] = m[(*k, *j)].clone() + v.clone() * a[*i].clone();
            }
        }
        m
    }

    /// `P(a) = 2 L_a² − L_{a²}`.
    pub fn quadratic_rep(&self, a: &Vector<F>) -> Mat<F> {
        let la = self.mult_op(a);
        let la2 = linalg::mat_mul(&la, &la);
        let lsq = self.mult_op(&self.square(a));
        Mat::from_fn(self.dim, self.dim, |i, j| {
            F::from_i64(2) * la2[(i, j)].clone() - lsq[(i, j)].clone()
        })
    }

    /// `τ(a, b) = Tr L_{a∘b}`.
    pub fn trace_form(&self) -> Mat<F> {
        let d = self.dim;
        let mut t = vec![F::zero(); d];
        for (k, i, j, v) in &self.entries {
            if k == j {
                t[*i] = t[*i].clone() + v.clone();
            }
        }
        let mut m = Mat::from_element(d, d, F::zero());
        for (k, i, j, v) in &self.entries {
            m[(*i, *j)] = m[(*i, *j)].clone() + v.clone() * t[*k].clone();
        }
        m
    }

    pub fn is_commutative(&self) -> bool {
        let d = self.dense();
        let n = self.dim;
        (0..n).all(|k| {
            (0..n).all(|i| (0..i).all(|j| close(&d[k * n * n + i * n + j], &d[k * n * n + j * n + i])))
        })
    }

    /// `e∘bᵢ = bᵢ` for every basis vector.
    pub fn unit_law(&self) -> bool {
        (0..self.dim).all(|i| {
            let b = self.basis_vector(i);
            vec_close(&self.product(&self.unit, &b), &b)
        })
    }

    /// `a²∘(b∘a) − (a²∘b)∘a`.
    pub fn jordan_defect(&self, a: &Vector<F>, b: &Vector<F>) -> Vector<F> {
        let a2 = self.square(a);
        let lhs = self.product(&a2, &self.product(b, a));
        let rhs = self.product(&self.product(&a2, b), a);
        linalg::vec_sub(&lhs, &rhs)
    }

    pub fn to_float(&self) -> JordanAlgebra<f64> {
        JordanAlgebra {
            kind: self.kind.clone(),
            dim: self.dim,
            unit: linalg::to_float_vec(&self.unit),
            labels: self.labels.clone(),
            entries: self
                .entries
                .iter()
                .map(|(k, i, j, v)| (*k, *i, *j, v.to_f64()))
                .collect(),
        }
    }

    /// Transported algebra `a ⋄ b = T(T⁻¹a ∘ T⁻¹b)`.
    pub fn transport(&self, t: &Mat<F>) -> Result<JordanAlgebra<F>> {
        let t_inv = linalg::inverse(t).ok_or_else(|| Error::Singular("transport map".into()))?;
        let d = self.dim;
        let pre: Vec<Vector<F>> = (0..d).map(|i| t_inv.column(i).into_owned()).collect();
        let mut dense = vec![F::zero(); d * d * d];
        for i in 0..d {
            for j in 0..d {
                let p = linalg::mat_vec(t, &self.product(&pre[i], &pre[j]));
                for k in 0..d {
                    dense[k * d * d + i * d + j] = p[k].clone();
                }
            }
        }
        let mut out = JordanAlgebra::from_dense(self.kind.clone(), d, &dense, linalg::mat_vec(t, &self.unit))?;
        out.labels = (0..d).map(|i| format!("t{i}")).collect();
        Ok(out)
    }

    /// Copy with one diagonal structure constant `T[k,i,i]` shifted by one,
    /// at a basis vector `bᵢ` orthogonal to the unit. In dimension two every
    /// commutative unital algebra is Jordan, so there `T[i,i,k]` is shifted
    /// instead, on one side only.
    pub fn corrupted(&self) -> JordanAlgebra<F> {
        let d = self.dim;
        let mut dense = self.dense();
        let i = (0..d).find(|&i| self.unit[i] == F::zero()).unwrap_or(0);
        let k = (i + 1) % d;
        let idx = if d > 2 { k * d * d + i * d + i } else { i * d * d + i * d + k };
        dense[idx] = dense[idx].clone() + F::one();
        let mut out = JordanAlgebra::from_dense(self.kind.clone(), d, &dense, self.unit.clone()).expect("shape");
        out.labels = self.labels.clone();
        out
    }
}

fn close<F: Field>(a: &F, b: &F) -> bool {
    if F::EXACT {
        (a.clone() - b.clone()).is_zero()
    } else {
        (a.to_f64() - b.to_f64()).abs() <= 1e-9 * (1.0 + b.to_f64().abs())
    }
}

fn vec_close<F: Field>(a: &Vector<F>, b: &Vector<F>) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| close(x, y))
}

/// Seeded standard-normal vector.
pub fn random_vector(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// Small random integers in `[-3, 3]`, for exact identity checks.
pub fn random_integer_vector<F: Field>(dim: usize, rng: &mut ChaCha8Rng) -> Vector<F> {
    Vector::from_fn(dim, |_, _| F::from_i64(rng.random_range(-3..=3)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Serializable form: dimension, unit, dense row-major tensor.
#[derive(Debug, Clone, Serialize)]
pub struct AlgebraJson {
    pub kind: Kind,
    pub dim: usize,
    pub labels: Vec<String>,
    pub unit: Vec<String>,
    pub product: Vec<String>,
}

impl<F: Field> From<&JordanAlgebra<F>> for AlgebraJson {
    fn from(j: &JordanAlgebra<F>) -> Self {
        AlgebraJson {
            kind: j.kind.clone(),
            dim: j.dim,
            labels: j.labels.clone(),
            unit: j.unit.iter().map(Field::render).collect(),
            product: j.dense().iter().map(Field::render).collect(),
        }
    }
}
