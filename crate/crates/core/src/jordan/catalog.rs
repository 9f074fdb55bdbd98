//! Structure tensors of the catalog algebras, computed exactly from
//! matrix bases over `ℚ[i]` with the symmetrized product.

use crate::linalg::{self, Mat, Vector};
use crate::scalar::{q, qi, Q};

use super::{JordanAlgebra, Kind};

/// A matrix over `ℚ[i]` as its real and imaginary parts.
#[derive(Debug, Clone)]
struct CMatQ {
    re: Mat<Q>,
    im: Mat<Q>,
}

impl CMatQ {
    fn zeros(n: usize) -> Self {
        CMatQ {
            re: Mat::from_element(n, n, qi(0)),
            im: Mat::from_element(n, n, qi(0)),
        }
    }

    fn mul(&self, o: &CMatQ) -> CMatQ {
        let rr = linalg::mat_mul(&self.re, &o.re);
        let ii = linalg::mat_mul(&self.im, &o.im);
        let ri = linalg::mat_mul(&self.re, &o.im);
        let ir = linalg::mat_mul(&self.im, &o.re);
        CMatQ {
            re: Mat::from_fn(rr.nrows(), rr.ncols(), |i, j| &rr[(i, j)] - &ii[(i, j)]),
            im: Mat::from_fn(ri.nrows(), ri.ncols(), |i, j| &ri[(i, j)] + &ir[(i, j)]),
        }
    }

    /// `(XY + YX) / 2`.
    fn jordan(&self, o: &CMatQ) -> CMatQ {
        let a = self.mul(o);
        let b = o.mul(self);
        let half = q(1, 2);
        CMatQ {
            re: Mat::from_fn(a.re.nrows(), a.re.ncols(), |i, j| (&a.re[(i, j)] + &b.re[(i, j)]) * &half),
            im: Mat::from_fn(a.im.nrows(), a.im.ncols(), |i, j| (&a.im[(i, j)] + &b.im[(i, j)]) * &half),
        }
    }

    /// `Re tr(XY)`.
    fn re_trace_product(&self, o: &CMatQ) -> Q {
        let n = self.re.nrows();
        let mut acc = qi(0);
        for i in 0..n {
            for k in 0..n {
                acc += &self.re[(i, k)] * &o.re[(k, i)] - &self.im[(i, k)] * &o.im[(k, i)];
            }
        }
        acc
    }
}

/// Structure tensor of an orthogonal Hermitian matrix basis.
fn from_matrix_basis(kind: Kind, basis: Vec<CMatQ>, labels: Vec<String>, identity: &CMatQ) -> JordanAlgebra<Q> {
    let d = basis.len();
    let norms: Vec<Q> = basis.iter().map(|b| b.re_trace_product(b)).collect();
    let coords = |x: &CMatQ| -> Vec<Q> {
        basis
            .iter()
            .zip(&norms)
            .map(|(b, n)| x.re_trace_product(b) / n)
            .collect()
    };
    let mut dense = vec![qi(0); d * d * d];
    for i in 0..d {
        for j in i..d {
            let c = coords(&basis[i].jordan(&basis[j]));
            for (k, v) in c.into_iter().enumerate() {
                dense[k * d * d + i * d + j] = v.clone();
                dense[k * d * d + j * d + i] = v;
            }
        }
    }
    let unit = Vector::from_vec(coords(identity));
    let mut j = JordanAlgebra::from_dense(kind, d, &dense, unit).expect("shape");
    j.labels = labels;
    j
}

fn unit_matrix(n: usize, r: usize, c: usize, v: Q) -> Mat<Q> {
    let mut m = Mat::from_element(n, n, qi(0));
    m[(r, c)] = v;
    m
}

fn real_part(m: Mat<Q>) -> CMatQ {
    let n = m.nrows();
    CMatQ {
        re: m,
        im: Mat::from_element(n, n, qi(0)),
    }
}

fn identity_q(n: usize) -> CMatQ {
    real_part(linalg::identity(n))
}

/// Real symmetric `n × n` matrices: basis `Eⱼⱼ`, then `Eⱼₖ + Eₖⱼ`.
pub fn real_sym(n: usize) -> JordanAlgebra<Q> {
    let mut basis = Vec::new();
    let mut labels = Vec::new();
    for j in 0..n {
        basis.push(real_part(unit_matrix(n, j, j, qi(1))));
        labels.push(format!("E{}{}", j + 1, j + 1));
    }
    for j in 0..n {
        for k in j + 1..n {
            basis.push(real_part(unit_matrix(n, j, k, qi(1)) + unit_matrix(n, k, j, qi(1))));
            labels.push(format!("S{}{}", j + 1, k + 1));
        }
    }
    from_matrix_basis(Kind::RealSym(n), basis, labels, &identity_q(n))
}

/// Complex Hermitian matrices: `Eⱼⱼ`, `Eⱼₖ + Eₖⱼ`, `i(Eⱼₖ − Eₖⱼ)`.
pub fn complex_herm(n: usize) -> JordanAlgebra<Q> {
    let mut basis = Vec::new();
    let mut labels = Vec::new();
    for j in 0..n {
        basis.push(real_part(unit_matrix(n, j, j, qi(1))));
        labels.push(format!("E{}{}", j + 1, j + 1));
    }
    for j in 0..n {
        for k in j + 1..n {
            basis.push(real_part(unit_matrix(n, j, k, qi(1)) + unit_matrix(n, k, j, qi(1))));
            labels.push(format!("S{}{}", j + 1, k + 1));
            basis.push(CMatQ {
                re: Mat::from_element(n, n, qi(0)),
                im: unit_matrix(n, j, k, qi(1)) + unit_matrix(n, k, j, qi(-1)),
            });
            labels.push(format!("A{}{}", j + 1, k + 1));
        }
    }
    from_matrix_basis(Kind::ComplexHerm(n), basis, labels, &identity_q(n))
}

/// The 2×2 complex block of a quaternion unit `1, i, j, k`.
fn quaternion_block(unit: usize) -> CMatQ {
    let mut b = CMatQ::zeros(2);
    match unit {
        0 => {
            b.re[(0, 0)] = qi(1);
            b.re[(1, 1)] = qi(1);
        }
        1 => {
            b.im[(0, 0)] = qi(1);
            b.im[(1, 1)] = qi(-1);
        }
        2 => {
            b.re[(0, 1)] = qi(1);
            b.re[(1, 0)] = qi(-1);
        }
        _ => {
            b.im[(0, 1)] = qi(1);
            b.im[(1, 0)] = qi(1);
        }
    }
    b
}

fn adjoint(m: &CMatQ) -> CMatQ {
    CMatQ {
        re: m.re.transpose(),
        im: m.im.transpose().map(|v| -v),
    }
}

fn place(target: &mut CMatQ, block: &CMatQ, r: usize, c: usize) {
    for i in 0..2 {
        for j in 0..2 {
            target.re[(2 * r + i, 2 * c + j)] = block.re[(i, j)].clone();
            target.im[(2 * r + i, 2 * c + j)] = block.im[(i, j)].clone();
        }
    }
}

/// Quaternionic Hermitian matrices embedded as `2n × 2n` complex matrices.
pub fn quat_herm(n: usize) -> JordanAlgebra<Q> {
    let m = 2 * n;
    let mut basis = Vec::new();
    let mut labels = Vec::new();
    for j in 0..n {
        let mut b = CMatQ::zeros(m);
        place(&mut b, &quaternion_block(0), j, j);
        basis.push(b);
        labels.push(format!("E{}{}", j + 1, j + 1));
    }
    for j in 0..n {
        for k in j + 1..n {
            for (u, name) in ["1", "i", "j", "k"].iter().enumerate() {
                let block = quaternion_block(u);
                let mut b = CMatQ::zeros(m);
                place(&mut b, &block, j, k);
                place(&mut b, &adjoint(&block), k, j);
                basis.push(b);
                labels.push(format!("Q{}{}.{name}", j + 1, k + 1));
            }
        }
    }
    from_matrix_basis(Kind::QuatHerm(n), basis, labels, &identity_q(m))
}

/// `ℝⁿ × ℝ` with `(x,s)∘(y,t) = (t x + s y, ⟨x,y⟩ + s t)`; unit last.
pub fn spin_factor(n: usize) -> JordanAlgebra<Q> {
    let d = n + 1;
    let mut dense = vec![qi(0); d * d * d];
    let s = n;
    let mut set = |k: usize, i: usize, j: usize| dense[k * d * d + i * d + j] = qi(1);
    for i in 0..n {
        set(s, i, i);
        set(i, i, s);
        set(i, s, i);
    }
    set(s, s, s);
    let unit = Vector::from_fn(d, |k, _| if k == s { qi(1) } else { qi(0) });
    let mut j = JordanAlgebra::from_dense(Kind::SpinFactor(n), d, &dense, unit).expect("shape");
    j.labels = (0..n).map(|i| format!("x{}", i + 1)).chain(std::iter::once("s".to_string())).collect();
    j
}

/// Block-diagonal sum of algebras.
pub fn direct_sum(parts: &[JordanAlgebra<Q>]) -> JordanAlgebra<Q> {
    let d: usize = parts.iter().map(|p| p.dim).sum();
    let mut dense = vec![qi(0); d * d * d];
    let mut unit = Vec::with_capacity(d);
    let mut labels = Vec::with_capacity(d);
    let mut offset = 0;
    for (idx, p) in parts.iter().enumerate() {
        let pd = p.dim;
        let inner = p.dense();
        for k in 0..pd {
            for i in 0..pd {
                for j in 0..pd {
                    dense[(offset + k) * d * d + (offset + i) * d + offset + j] = inner[k * pd * pd + i * pd + j].clone();
                }
            }
        }
        unit.extend(p.unit.iter().cloned());
        labels.extend(p.labels.iter().map(|l| format!("{idx}:{l}")));
        offset += pd;
    }
    let kind = Kind::DirectSum(parts.iter().map(|p| p.kind.clone()).collect());
    let mut j = JordanAlgebra::from_dense(kind, d, &dense, Vector::from_vec(unit)).expect("shape");
    j.labels = labels;
    j
}

/// Catalog algebra of a kind; `Recovered` has no catalog entry.
pub fn from_kind(kind: &Kind) -> Option<JordanAlgebra<Q>> {
    Some(match kind {
        Kind::RealSym(n) => real_sym(*n),
        Kind::ComplexHerm(n) => complex_herm(*n),
        Kind::QuatHerm(n) => quat_herm(*n),
        Kind::SpinFactor(n) => spin_factor(*n),
        Kind::DirectSum(parts) => direct_sum(&parts.iter().map(from_kind).collect::<Option<Vec<_>>>()?),
        Kind::Recovered => return None,
    })
}
