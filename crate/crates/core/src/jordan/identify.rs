//! Classification by dimension, rank and center.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::scalar::Field;

use super::spectral::spectral_decomposition;
use super::{random_vector, rng, JordanAlgebra, Kind};

const IDENTIFY_SEED: u64 = 4242;
/// Cap on listed direct-sum combinations.
const MAX_CANDIDATES: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct Component {
    pub dim: usize,
    pub rank: usize,
    pub candidates: Vec<Kind>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Identification {
    pub dim: usize,
    pub rank: usize,
    pub center_dim: usize,
    pub components: Vec<Component>,
    pub candidates: Vec<Kind>,
}

/// Simple algebras with this dimension and rank.
pub fn simple_candidates(dim: usize, rank: usize) -> Vec<Kind> {
    let r = rank;
    let mut out = Vec::new();
    if r == 0 {
        return out;
    }
    if r == 1 {
        if dim == 1 {
            out.push(Kind::RealSym(1));
        }
        return out;
    }
    let off = r * (r - 1) / 2;
    if dim == r + off {
        out.push(Kind::RealSym(r));
    }
    if dim == r + 2 * off {
        out.push(Kind::ComplexHerm(r));
    }
    if dim == r + 4 * off {
        out.push(Kind::QuatHerm(r));
    }
    if r == 2 && dim >= 3 {
        out.push(Kind::SpinFactor(dim - 1));
    }
    out
}

fn combine(components: &[Component]) -> Vec<Kind> {
    if components.len() == 1 {
        return components[0].candidates.clone();
    }
    let mut acc: Vec<Vec<Kind>> = vec![Vec::new()];
    for c in components {
        let mut next = Vec::new();
        for prefix in &acc {
            for k in &c.candidates {
                if next.len() < MAX_CANDIDATES {
                    let mut p = prefix.clone();
                    p.push(k.clone());
                    next.push(p);
                }
            }
        }
        acc = next;
    }
    acc.into_iter().filter(|p| !p.is_empty()).map(Kind::DirectSum).collect()
}

/// Basis of the center `{z : [L_z, L_x] = 0 for all x}`.
pub fn center<F: Field>(j: &JordanAlgebra<F>) -> Vec<crate::linalg::Vector<F>> {
    let d = j.dim;
    let ops: Vec<Mat<F>> = (0..d).map(|i| j.mult_op(&j.basis_vector(i))).collect();
    let mut rows: Vec<Vec<F>> = Vec::new();
    for li in &ops {
        let comms: Vec<Mat<F>> = ops
            .iter()
            .map(|lm| {
                let (x, y) = (linalg::mat_mul(lm, li), linalg::mat_mul(li, lm));
                Mat::from_fn(d, d, |r, c| x[(r, c)].clone() - y[(r, c)].clone())
            })
            .collect();
        for r in 0..d {
            for c in 0..d {
                let row: Vec<F> = comms.iter().map(|m| m[(r, c)].clone()).collect();
                if row.iter().any(|x| !x.is_zero()) {
                    rows.push(row);
                }
            }
        }
    }
    if rows.is_empty() {
        return (0..d).map(|i| j.basis_vector(i)).collect();
    }
    let m = Mat::from_fn(rows.len(), d, |r, c| rows[r][c].clone());
    linalg::nullspace(&m)
}

pub fn identify_algebra<F: Field>(j: &JordanAlgebra<F>) -> Result<Identification> {
    let d = j.dim;
    let tau = j.trace_form();
    if !linalg::is_positive_definite(&tau) {
        return Err(Error::Singular("trace form is not positive definite".into()));
    }
    let tau_f = linalg::to_float_mat(&tau);
    let jf = j.to_float();
    let z_basis = center(j);
    let center_dim = z_basis.len();

    let mut r = rng(IDENTIFY_SEED);
    let coeffs = random_vector(center_dim, &mut r);
    let mut z = DVector::zeros(d);
    for (c, b) in coeffs.iter().zip(&z_basis) {
        z += linalg::to_float_vec(b) * *c;
    }
    let central = if center_dim == 1 {
        vec![jf.unit.clone()]
    } else {
        spectral_decomposition(&jf, &tau_f, &z)?.idempotents
    };
    let generic = spectral_decomposition(&jf, &tau_f, &random_vector(d, &mut r))?;
    let rank = generic.idempotents.len();

    let mut ranks = vec![0usize; central.len()];
    for p in &generic.idempotents {
        let owner = central
            .iter()
            .position(|c| (jf.product(c, p) - p).amax() <= 1e-6 * (1.0 + p.amax()))
            .ok_or_else(|| Error::Numerical("primitive idempotent straddles components".into()))?;
        ranks[owner] += 1;
    }
    let mut components: Vec<Component> = central
        .iter()
        .zip(&ranks)
        .map(|(c, &rank)| {
            let dim = jf.mult_op(c).trace().round() as usize;
            Component {
                dim,
                rank,
                candidates: simple_candidates(dim, rank),
            }
        })
        .collect();
    components.sort_by_key(|c| (c.dim, c.rank));
    let candidates = combine(&components);
    Ok(Identification {
        dim: d,
        rank,
        center_dim,
        components,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jordan::{complex_herm, direct_sum, quat_herm, real_sym, spin_factor};

    #[test]
    fn simple_examples() {
        let id = identify_algebra(&complex_herm(2)).unwrap();
        assert_eq!((id.dim, id.rank, id.center_dim), (4, 2, 1));
        assert_eq!(id.candidates, vec![Kind::ComplexHerm(2), Kind::SpinFactor(3)]);
        let id = identify_algebra(&real_sym(3)).unwrap();
        assert_eq!(id.candidates, vec![Kind::RealSym(3)]);
        let id = identify_algebra(&quat_herm(2)).unwrap();
        assert!(id.candidates.contains(&Kind::QuatHerm(2)));
        assert!(id.candidates.contains(&Kind::SpinFactor(5)));
        let id = identify_algebra(&spin_factor(6)).unwrap();
        assert_eq!(id.candidates, vec![Kind::SpinFactor(6)]);
    }

    #[test]
    fn classical_sum() {
        let j = direct_sum(&[real_sym(1), real_sym(1), real_sym(1)]);
        let id = identify_algebra(&j).unwrap();
        assert_eq!((id.rank, id.center_dim), (3, 3));
        assert_eq!(id.candidates, vec![Kind::DirectSum(vec![Kind::RealSym(1); 3])]);
    }

    #[test]
    fn mixed_sum() {
        let j = direct_sum(&[real_sym(1), spin_factor(3)]);
        let id = identify_algebra(&j).unwrap();
        assert_eq!((id.dim, id.rank, id.center_dim), (5, 3, 2));
        assert!(id
            .candidates
            .contains(&Kind::DirectSum(vec![Kind::RealSym(1), Kind::SpinFactor(3)])));
    }

    #[test]
    fn candidate_table() {
        assert!(simple_candidates(6, 3).contains(&Kind::RealSym(3)));
        assert!(simple_candidates(9, 3).contains(&Kind::ComplexHerm(3)));
        assert!(simple_candidates(15, 3).contains(&Kind::QuatHerm(3)));
        assert!(simple_candidates(7, 3).is_empty());
    }
}
