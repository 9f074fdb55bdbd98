//! Dense linear algebra over [`Field`]s.
//!
//! Row reduction is shared by both fields; over `f64` it pivots on the
//! largest entry and treats anything below a relative threshold as zero.
//! Float null spaces come from the SVD (singular values below
//! `1e-9 * sigma_max` count as zero) and are then brought to reduced row
//! echelon form so that bases are reproducible.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{Field, FLOAT_TOL};

pub type Mat<F> = DMatrix<F>;
pub type Vector<F> = DVector<F>;

/// Relative singular-value cutoff for float rank decisions.
pub const SVD_REL_TOL: f64 = 1e-9;

fn max_abs<F: Field>(m: &Mat<F>) -> f64 {
    m.iter().map(|v| v.to_f64().abs()).fold(0.0, f64::max)
}

/// Reduced row echelon form and pivot columns.
pub fn rref<F: Field>(m: &Mat<F>) -> (Mat<F>, Vec<usize>) {
    let mut a = m.clone();
    let (rows, cols) = a.shape();
    let scale = if F::EXACT { 1.0 } else { max_abs(m).max(1.0) };
    let negligible = |v: &F| -> bool {
        if F::EXACT {
            v.is_zero()
        } else {
            v.to_f64().abs() <= 1e-10 * scale
        }
    };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let pick = if F::EXACT {
            (r..rows).find(|&i| !a[(i, c)].is_zero())
        } else {
            (r..rows)
                .filter(|&i| !negligible(&a[(i, c)]))
                .max_by(|&i, &j| {
                    a[(i, c)]
                        .to_f64()
                        .abs()
                        .partial_cmp(&a[(j, c)].to_f64().abs())
                        .unwrap()
                })
        };
        let Some(p) = pick else { continue };
        a.swap_rows(r, p);
        let inv = F::one() / a[(r, c)].clone();
        for j in c..cols {
            let v = a[(r, j)].clone() * inv.clone();
            a[(r, j)] = v;
        }
        for i in 0..rows {
            if i == r || a[(i, c)].is_zero() && F::EXACT {
                continue;
            }
            let f = a[(i, c)].clone();
            if !F::EXACT && f == F::zero() {
                continue;
            }
            for j in c..cols {
                if a[(r, j)] == F::zero() {
                    continue;
                }
                let v = a[(i, j)].clone() - f.clone() * a[(r, j)].clone();
                a[(i, j)] = v;
            }
        }
        if !F::EXACT {
            for i in 0..rows {
                for j in 0..cols {
                    if a[(i, j)].to_f64().abs() <= 1e-14 * scale {
                        a[(i, j)] = F::zero();
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    (a, pivots)
}

fn nullspace_from_rref<F: Field>(reduced: &Mat<F>, pivots: &[usize]) -> Vec<Vector<F>> {
    let cols = reduced.ncols();
    let mut basis = Vec::new();
    for free in (0..cols).filter(|c| !pivots.contains(c)) {
        let mut v = Vector::from_element(cols, F::zero());
        v[free] = F::one();
        for (r, &p) in pivots.iter().enumerate() {
            v[p] = -reduced[(r, free)].clone();
        }
        basis.push(v);
    }
    basis
}

fn float_nullspace(m: &Mat<f64>) -> Vec<Vector<f64>> {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Vec::new();
    }
    if rows == 0 {
        return (0..cols)
            .map(|i| {
                let mut v = Vector::zeros(cols);
                v[i] = 1.0;
                v
            })
            .collect();
    }
    let padded = if rows < cols {
        let mut p = Mat::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = (SVD_REL_TOL * sigma_max).max(1e-300);
    let null_rows: Vec<usize> = (0..vt.nrows())
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .collect();
    if null_rows.is_empty() {
        return Vec::new();
    }
    let k = null_rows.len();
    let basis = Mat::from_fn(k, cols, |i, j| vt[(null_rows[i], j)]);
    // canonical ordering: reduced row echelon form of the basis rows
    let (reduced, pivots) = rref(&basis);
    (0..pivots.len())
        .map(|i| reduced.row(i).transpose())
        .collect()
}

/// Basis of `{x : m x = 0}` in reduced row echelon ordering.
pub fn nullspace<F: Field>(m: &Mat<F>) -> Vec<Vector<F>> {
    if F::EXACT {
        let (reduced, pivots) = rref(m);
        nullspace_from_rref(&reduced, &pivots)
    } else {
        let mf = m.map(|v| v.to_f64());
        float_nullspace(&mf)
            .into_iter()
            .map(|v| v.map(F::from_f64_lossy))
            .collect()
    }
}

pub fn rank<F: Field>(m: &Mat<F>) -> usize {
    if F::EXACT {
        rref(m).1.len()
    } else {
        if m.nrows() == 0 || m.ncols() == 0 {
            return 0;
        }
        let mf = m.map(|v| v.to_f64());
        let sv = mf.singular_values();
        let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
        if sigma_max <= 1e-300 {
            return 0;
        }
        sv.iter().filter(|&&s| s > SVD_REL_TOL * sigma_max).count()
    }
}

/// Indices of the first maximal linearly independent subset of columns.
pub fn independent_columns<F: Field>(m: &Mat<F>) -> Vec<usize> {
    rref(m).1
}

/// Affine solution set of `a x = b`: a particular solution and a null-space
/// basis, or `None` when inconsistent. Over `f64` the particular solution is
/// the minimum-norm one.
pub fn solve_affine<F: Field>(a: &Mat<F>, b: &Vector<F>) -> Option<(Vector<F>, Vec<Vector<F>>)> {
    let (rows, cols) = a.shape();
    assert_eq!(rows, b.len());
    if F::EXACT {
        let mut aug = Mat::from_element(rows, cols + 1, F::zero());
        aug.view_mut((0, 0), (rows, cols)).copy_from(a);
        for i in 0..rows {
            aug[(i, cols)] = b[i].clone();
        }
        let (reduced, pivots) = rref(&aug);
        if pivots.last() == Some(&cols) {
            return None;
        }
        let mut x = Vector::from_element(cols, F::zero());
        for (r, &p) in pivots.iter().enumerate() {
            x[p] = reduced[(r, cols)].clone();
        }
        let sub = reduced.columns(0, cols).into_owned();
        Some((x, nullspace_from_rref(&sub, &pivots)))
    } else {
        let af = a.map(|v| v.to_f64());
        let bf = b.map(|v| v.to_f64());
        let x = if rows == 0 {
            Vector::zeros(cols)
        } else {
            let svd = af.clone().svd(true, true);
            let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let eps = (SVD_REL_TOL * sigma_max).max(1e-300);
            svd.solve(&bf, eps).ok()?
        };
        let residual = (&af * &x - &bf).norm();
        if residual > FLOAT_TOL * bf.norm().max(1.0) {
            return None;
        }
        let null = float_nullspace(&af);
        Some((
            x.map(F::from_f64_lossy),
            null.into_iter().map(|v| v.map(F::from_f64_lossy)).collect(),
        ))
    }
}

/// Gauss-Jordan inverse; `None` when singular.
pub fn inverse<F: Field>(m: &Mat<F>) -> Option<Mat<F>> {
    let n = m.nrows();
    if n != m.ncols() {
        return None;
    }
    if !F::EXACT {
        let mf = m.map(|v| v.to_f64());
        if rank(&mf) < n {
            return None;
        }
        return mf.try_inverse().map(|i| i.map(F::from_f64_lossy));
    }
    let mut aug = Mat::from_element(n, 2 * n, F::zero());
    aug.view_mut((0, 0), (n, n)).copy_from(m);
    for i in 0..n {
        aug[(i, n + i)] = F::one();
    }
    let (reduced, pivots) = rref(&aug);
    if pivots.len() < n || pivots[n - 1] != n - 1 {
        return None;
    }
    Some(reduced.columns(n, n).into_owned())
}

/// Symmetric positive definiteness: exact pivots of an LDL^T elimination,
/// or the smallest eigenvalue over `f64`.
pub fn is_positive_definite<F: Field>(m: &Mat<F>) -> bool {
    let n = m.nrows();
    if n != m.ncols() || !is_symmetric(m) {
        return false;
    }
    if F::EXACT {
        let mut a = m.clone();
        for k in 0..n {
            if !a[(k, k)].is_positive() {
                return false;
            }
            for i in k + 1..n {
                let f = a[(i, k)].clone() / a[(k, k)].clone();
                if f.is_zero() {
                    continue;
                }
                for j in k..n {
                    let v = a[(i, j)].clone() - f.clone() * a[(k, j)].clone();
                    a[(i, j)] = v;
                }
            }
        }
        true
    } else {
        min_eigenvalue(&m.map(|v| v.to_f64())) > FLOAT_TOL
    }
}

/// Smallest eigenvalue of a symmetric float matrix.
pub fn min_eigenvalue(m: &Mat<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn is_symmetric<F: Field>(m: &Mat<F>) -> bool {
    let n = m.nrows();
    n == m.ncols()
        && (0..n).all(|i| (i + 1..n).all(|j| (m[(i, j)].clone() - m[(j, i)].clone()).is_zero()))
}

/// `x^T m y`.
pub fn bilinear<F: Field>(m: &Mat<F>, x: &Vector<F>, y: &Vector<F>) -> F {
    let mut acc = F::zero();
    for i in 0..m.nrows() {
        if x[i].is_zero() && F::EXACT {
            continue;
        }
        let mut row = F::zero();
        for j in 0..m.ncols() {
            row = row + m[(i, j)].clone() * y[j].clone();
        }
        acc = acc + x[i].clone() * row;
    }
    acc
}

pub fn dot<F: Field>(x: &Vector<F>, y: &Vector<F>) -> F {
    x.iter()
        .zip(y.iter())
        .fold(F::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
}

pub fn vec_add<F: Field>(a: &Vector<F>, b: &Vector<F>) -> Vector<F> {
    Vector::from_fn(a.len(), |i, _| a[i].clone() + b[i].clone())
}

pub fn vec_sub<F: Field>(a: &Vector<F>, b: &Vector<F>) -> Vector<F> {
    Vector::from_fn(a.len(), |i, _| a[i].clone() - b[i].clone())
}

pub fn vec_scale<F: Field>(a: &Vector<F>, s: &F) -> Vector<F> {
    a.map(|v| v * s.clone())
}

pub fn mat_vec<F: Field>(m: &Mat<F>, v: &Vector<F>) -> Vector<F> {
    Vector::from_fn(m.nrows(), |i, _| {
        (0..m.ncols()).fold(F::zero(), |acc, j| acc + m[(i, j)].clone() * v[j].clone())
    })
}

pub fn mat_mul<F: Field>(a: &Mat<F>, b: &Mat<F>) -> Mat<F> {
    assert_eq!(a.ncols(), b.nrows());
    Mat::from_fn(a.nrows(), b.ncols(), |i, j| {
        (0..a.ncols()).fold(F::zero(), |acc, k| acc + a[(i, k)].clone() * b[(k, j)].clone())
    })
}

pub fn identity<F: Field>(n: usize) -> Mat<F> {
    Mat::from_fn(n, n, |i, j| if i == j { F::one() } else { F::zero() })
}

pub fn mats_equal<F: Field>(a: &Mat<F>, b: &Mat<F>) -> bool {
    a.shape() == b.shape()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x.clone() - y.clone()).is_zero())
}

pub fn vecs_equal<F: Field>(a: &Vector<F>, b: &Vector<F>) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x.clone() - y.clone()).is_zero())
}

pub fn to_float_mat<F: Field>(m: &Mat<F>) -> Mat<f64> {
    m.map(|v| v.to_f64())
}

pub fn to_float_vec<F: Field>(v: &Vector<F>) -> Vector<f64> {
    v.map(|x| x.to_f64())
}

/// Stacks column vectors into a matrix.
pub fn columns_to_mat<F: Field>(rows: usize, cols: &[Vector<F>]) -> Mat<F> {
    Mat::from_fn(rows, cols.len(), |i, j| cols[j][i].clone())
}

/// Converts a symmetric matrix to its upper-triangular parameter vector
/// (row-major over `i <= j`) and back.
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

pub fn sym_param_count(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn sym_from_params<F: Field>(n: usize, p: &Vector<F>) -> Mat<F> {
    Mat::from_fn(n, n, |i, j| p[sym_index(n, i, j)].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{q, qi, Q};

    fn qmat(rows: usize, cols: usize, vals: &[i64]) -> Mat<Q> {
        Mat::from_row_slice(rows, cols, &vals.iter().map(|&v| qi(v)).collect::<Vec<_>>())
    }

    #[test]
    fn exact_nullspace_is_in_rref_order() {
        let m = qmat(1, 3, &[1, 1, 1]);
        let ns = nullspace(&m);
        assert_eq!(ns.len(), 2);
        assert_eq!(ns[0], Vector::from_vec(vec![qi(-1), qi(1), qi(0)]));
        assert_eq!(ns[1], Vector::from_vec(vec![qi(-1), qi(0), qi(1)]));
    }

    #[test]
    fn float_nullspace_matches_exact_one() {
        let m = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let ns = nullspace(&m);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!((&m * v).norm() < 1e-12);
        }
        assert!((ns[0][0] - 1.0).abs() < 1e-12 && ns[0][1].abs() < 1e-12);
    }

    #[test]
    fn affine_solve_detects_inconsistency() {
        let a = qmat(2, 2, &[1, 1, 1, 1]);
        let b = Vector::from_vec(vec![qi(1), qi(2)]);
        assert!(solve_affine(&a, &b).is_none());
        let b = Vector::from_vec(vec![qi(1), qi(1)]);
        let (x, ns) = solve_affine(&a, &b).unwrap();
        assert_eq!(mat_vec(&a, &x), b);
        assert_eq!(ns.len(), 1);
    }

    #[test]
    fn exact_inverse_and_definiteness() {
        let m = qmat(2, 2, &[2, 1, 1, 2]);
        let inv = inverse(&m).unwrap();
        assert_eq!(mat_mul(&m, &inv), identity(2));
        assert!(is_positive_definite(&m));
        assert!(!is_positive_definite(&qmat(2, 2, &[1, 2, 2, 1])));
        assert!(inverse(&qmat(2, 2, &[1, 2, 2, 4])).is_none());
        assert_eq!(inv[(0, 0)], q(2, 3));
    }

    #[test]
    fn independent_columns_are_greedy_in_order() {
        let m = qmat(2, 4, &[1, 2, 0, 1, 0, 0, 1, 1]);
        assert_eq!(independent_columns(&m), vec![0, 2]);
    }

    #[test]
    fn symmetric_parameter_round_trip() {
        let n = 3;
        let p = Vector::from_fn(sym_param_count(n), |i, _| qi(i as i64));
        let s = sym_from_params(n, &p);
        assert!(is_symmetric(&s));
        assert_eq!(s[(1, 2)], p[sym_index(n, 1, 2)]);
        assert_eq!(s[(2, 1)], p[sym_index(n, 1, 2)]);
    }
}
