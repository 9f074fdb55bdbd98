//! Invariant symmetric bilinear forms, SPIN forms and irreducibility.
//!
//! Invariance is imposed on generators only; a form fixed by every
//! generator is fixed by every word in them, hence by the generated group.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::linearization::{LinearizedGroup, OrderUnitSpace};
use crate::lp::{LinearProgram, Relation};
use crate::model::quantum::sample_pure_states;
use crate::model::Model;
use crate::scalar::{qi, Field, Q, FLOAT_TOL};
use crate::verdict::Tri;

/// Seed of the pure states used to probe positivity on quantum cones.
pub const POSITIVITY_SAMPLE_SEED: u64 = 20;
pub const POSITIVITY_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FormFlags {
    pub positive_on_cone: Tri,
    pub invariant: Tri,
    pub normalized: Tri,
    pub orthogonalizing: Tri,
    pub positive_definite: Tri,
}

impl Default for FormFlags {
    fn default() -> Self {
        FormFlags {
            positive_on_cone: Tri::Unknown,
            invariant: Tri::Unknown,
            normalized: Tri::Unknown,
            orthogonalizing: Tri::Unknown,
            positive_definite: Tri::Unknown,
        }
    }
}

impl FormFlags {
    /// Symmetric, positive, invariant, normalized and orthogonalizing.
    pub fn is_orthogonalizing_spin(&self) -> Tri {
        self.positive_on_cone
            .and(self.invariant)
            .and(self.normalized)
            .and(self.orthogonalizing)
    }
}

/// A symmetric form `B(a, b) = aᵀ M b` on `E(A)`.
#[derive(Debug, Clone)]
pub struct BilinearForm<F: Field> {
    pub matrix: Mat<F>,
    pub flags: FormFlags,
}

impl<F: Field> BilinearForm<F> {
    pub fn new(matrix: Mat<F>) -> Result<Self> {
        if !linalg::is_symmetric(&matrix) {
            return Err(Error::InvalidModel("form matrix is not symmetric".into()));
        }
        Ok(BilinearForm {
            matrix,
            flags: FormFlags::default(),
        })
    }

    pub fn eval(&self, a: &Vector<F>, b: &Vector<F>) -> F {
        linalg::bilinear(&self.matrix, a, b)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn to_float(&self) -> BilinearForm<f64> {
        BilinearForm {
            matrix: linalg::to_float_mat(&self.matrix),
            flags: self.flags,
        }
    }
}

fn close<F: Field>(a: &F, b: &F) -> bool {
    if F::EXACT {
        (a.clone() - b.clone()).is_zero()
    } else {
        (a.to_f64() - b.to_f64()).abs() <= FLOAT_TOL * (1.0 + b.to_f64().abs())
    }
}

fn mats_close<F: Field>(a: &Mat<F>, b: &Mat<F>) -> bool {
    if F::EXACT {
        linalg::mats_equal(a, b)
    } else {
        let scale = b.iter().map(|v| v.to_f64().abs()).fold(1.0, f64::max);
        a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x.to_f64() - y.to_f64()).abs() <= FLOAT_TOL * scale)
    }
}

/// `MᵀBM = B` for every generator.
pub fn is_invariant<F: Field>(b: &Mat<F>, generators: &[Mat<F>]) -> bool {
    generators.iter().all(|m| {
        let t = linalg::mat_mul(&linalg::mat_mul(&m.transpose(), b), m);
        mats_close(&t, b)
    })
}

/// Rows of the linear system `MᵀBM − B = 0` in the symmetric parameters
/// of `B`.
fn invariance_rows<F: Field>(n: usize, generators: &[Mat<F>]) -> Vec<Vec<F>> {
    let params = linalg::sym_param_count(n);
    let mut rows = Vec::new();
    for m in generators {
        for i in 0..n {
            for j in i..n {
                let mut row = vec![F::zero(); params];
                for k in 0..n {
                    if m[(k, i)].is_zero() && F::EXACT {
                        continue;
                    }
                    for l in 0..n {
                        let c = m[(k, i)].clone() * m[(l, j)].clone();
                        if c.is_zero() {
                            continue;
                        }
                        let idx = linalg::sym_index(n, k, l);
                        row[idx] = row[idx].clone() + c;
                    }
                }
                let idx = linalg::sym_index(n, i, j);
                row[idx] = row[idx].clone() - F::one();
                if row.iter().any(|v| !v.is_zero()) {
                    rows.push(row);
                }
            }
        }
    }
    rows
}

fn rows_to_mat<F: Field>(rows: &[Vec<F>], cols: usize) -> Mat<F> {
    Mat::from_fn(rows.len(), cols, |i, j| rows[i][j].clone())
}

fn forms_from_params<F: Field>(n: usize, basis: Vec<Vector<F>>) -> Vec<Mat<F>> {
    basis.iter().map(|p| linalg::sym_from_params(n, p)).collect()
}

/// Basis of the invariant symmetric forms on `ℝⁿ` for the given actions.
pub fn invariant_forms_for<F: Field>(n: usize, generators: &[Mat<F>]) -> Vec<Mat<F>> {
    let params = linalg::sym_param_count(n);
    let rows = invariance_rows(n, generators);
    forms_from_params(n, linalg::nullspace(&rows_to_mat(&rows, params)))
}

/// Where the invariant forms live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    Full,
    UPerp,
}

/// Basis of `u^⊥ = {a : B(a, u) = 0}`.
pub fn u_perp_basis<F: Field>(b: &Mat<F>, u: &Vector<F>) -> Vec<Vector<F>> {
    let bu = linalg::mat_vec(b, u);
    let row = Mat::from_fn(1, bu.len(), |_, j| bu[j].clone());
    linalg::nullspace(&row)
}

/// Matrices of the generators restricted to the span of `basis`, which must
/// be invariant.
pub fn restrict_actions<F: Field>(basis: &[Vector<F>], generators: &[Mat<F>]) -> Result<Vec<Mat<F>>> {
    let n = basis.first().map(|v| v.len()).unwrap_or(0);
    let k = basis.len();
    let w = linalg::columns_to_mat(n, basis);
    generators
        .iter()
        .map(|m| {
            let mw = linalg::mat_mul(m, &w);
            let mut r = Mat::from_element(k, k, F::zero());
            for j in 0..k {
                let col = Vector::from_fn(n, |i, _| mw[(i, j)].clone());
                let (x, _) = linalg::solve_affine(&w, &col).ok_or_else(|| {
                    Error::InconsistentExtension("subspace is not invariant under the group".into())
                })?;
                r.set_column(j, &x);
            }
            Ok(r)
        })
        .collect()
}

/// Invariant symmetric forms on `E(A)` or on `u^⊥`; forms on `u^⊥` are in
/// the coordinates of [`reference_u_perp`].
pub fn invariant_symmetric_forms<F: Field>(
    e: &OrderUnitSpace<F>,
    g: &LinearizedGroup<F>,
    restrict_to: Restriction,
) -> Result<Vec<Mat<F>>> {
    match restrict_to {
        Restriction::Full => Ok(invariant_forms_for(e.dim, &g.generators)),
        Restriction::UPerp => {
            let basis = reference_u_perp(e, g)?;
            let actions = restrict_actions(&basis, &g.generators)?;
            Ok(invariant_forms_for(basis.len(), &actions))
        }
    }
}

/// `u^⊥` for the averaged identity form.
pub fn reference_u_perp<F: Field>(e: &OrderUnitSpace<F>, g: &LinearizedGroup<F>) -> Result<Vec<Vector<F>>> {
    let b0 = average_form(&linalg::identity(e.dim), g)?;
    if !linalg::is_positive_definite(&b0) {
        return Err(Error::Numerical("no positive-definite invariant form found".into()));
    }
    Ok(u_perp_basis(&b0, &e.unit))
}

/// Group average of `b0`: exact over enumerated elements, otherwise the
/// Frobenius-nearest invariant form.
pub fn average_form<F: Field>(b0: &Mat<F>, g: &LinearizedGroup<F>) -> Result<Mat<F>> {
    let n = b0.nrows();
    if let Some(elements) = &g.elements {
        let mut acc = Mat::from_element(n, n, F::zero());
        for m in elements {
            let t = linalg::mat_mul(&linalg::mat_mul(&m.transpose(), b0), m);
            acc = Mat::from_fn(n, n, |i, j| acc[(i, j)].clone() + t[(i, j)].clone());
        }
        let k = F::from_i64(elements.len() as i64);
        return Ok(acc.map(|v| v / k.clone()));
    }
    let basis = invariant_forms_for(n, &g.generators);
    if basis.is_empty() {
        return Ok(Mat::from_element(n, n, F::zero()));
    }
    let frob = |a: &Mat<F>, b: &Mat<F>| {
        a.iter()
            .zip(b.iter())
            .fold(F::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
    };
    let k = basis.len();
    let gram = Mat::from_fn(k, k, |i, j| frob(&basis[i], &basis[j]));
    let rhs = Vector::from_fn(k, |i, _| frob(&basis[i], b0));
    let (c, _) = linalg::solve_affine(&gram, &rhs)
        .ok_or_else(|| Error::Numerical("projection onto invariant forms failed".into()))?;
    let mut out = Mat::from_element(n, n, F::zero());
    for (ci, bi) in c.iter().zip(&basis) {
        out = Mat::from_fn(n, n, |i, j| out[(i, j)].clone() + ci.clone() * bi[(i, j)].clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Irreducibility {
    pub irreducible: bool,
    /// Dimension of the invariant symmetric forms on `u^⊥`.
    pub forms_on_u_perp: usize,
    pub u_perp_dim: usize,
}

/// Irreducible iff the invariant symmetric forms on `u^⊥` are one-dimensional.
pub fn is_irreducible<F: Field>(e: &OrderUnitSpace<F>, g: &LinearizedGroup<F>) -> Result<Irreducibility> {
    let basis = reference_u_perp(e, g)?;
    let actions = restrict_actions(&basis, &g.generators)?;
    let k = invariant_forms_for(basis.len(), &actions).len();
    Ok(Irreducibility {
        irreducible: k == 1,
        forms_on_u_perp: k,
        u_perp_dim: basis.len(),
    })
}

/// True when the two subspaces coincide.
pub fn same_subspace<F: Field>(a: &[Vector<F>], b: &[Vector<F>]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let n = a.first().map(|v| v.len()).unwrap_or(0);
    let ra = linalg::rank(&linalg::columns_to_mat(n, a));
    let stacked: Vec<Vector<F>> = a.iter().chain(b).cloned().collect();
    ra == a.len() && linalg::rank(&linalg::columns_to_mat(n, &stacked)) == ra
}

/// Points on which positivity is probed: cone generators, plus random pure
/// states for quantum cones.
fn positivity_probes<F: Field>(e: &OrderUnitSpace<F>) -> Vec<Vector<F>> {
    let mut probes = e.cone_generators.clone();
    if let Some(ops) = &e.operators {
        probes.extend(
            sample_pure_states(ops, POSITIVITY_SAMPLES, POSITIVITY_SAMPLE_SEED)
                .into_iter()
                .map(|v| v.map(F::from_f64_lossy)),
        );
    }
    probes
}

/// A positive multiple of the trace form is positive on the PSD cone.
fn is_trace_form_multiple<F: Field>(e: &OrderUnitSpace<F>, b: &Mat<F>) -> bool {
    let Some(ops) = &e.operators else { return false };
    let gram = ops.trace_gram();
    let bf = linalg::to_float_mat(b);
    let c = bf[(0, 0)] / gram[(0, 0)];
    c > FLOAT_TOL && (bf - gram * c).norm() <= FLOAT_TOL * (1.0 + c)
}

pub fn positive_on_cone<F: Field>(e: &OrderUnitSpace<F>, b: &Mat<F>) -> Tri {
    if e.is_quantum() && is_trace_form_multiple(e, b) {
        return Tri::Yes;
    }
    let probes = positivity_probes(e);
    let ok = probes.iter().all(|x| {
        probes.iter().all(|y| {
            let v = linalg::bilinear(b, x, y);
            if F::EXACT {
                !v.is_negative()
            } else {
                v.to_f64() >= -FLOAT_TOL
            }
        })
    });
    ok.into()
}

/// Evaluates all five flags of a form against a model.
pub fn evaluate_flags<F: Field>(m: &Model, e: &OrderUnitSpace<F>, g: &LinearizedGroup<F>, b: &Mat<F>) -> FormFlags {
    let orth = m
        .testspace
        .perp_pairs()
        .iter()
        .all(|&(x, y)| close(&linalg::bilinear(b, &e.outcome_vectors[x], &e.outcome_vectors[y]), &F::zero()));
    FormFlags {
        positive_on_cone: positive_on_cone(e, b),
        invariant: is_invariant(b, &g.generators).into(),
        normalized: close(&linalg::bilinear(b, &e.unit, &e.unit), &F::one()).into(),
        orthogonalizing: orth.into(),
        positive_definite: linalg::is_positive_definite(b).into(),
    }
}

#[derive(Debug, Clone)]
pub struct SpinSearch<F: Field> {
    pub form: Option<BilinearForm<F>>,
    /// Dimension of the homogeneous solution space before normalization.
    pub solution_space_dim: usize,
}

/// Solves for symmetric, invariant forms vanishing on distinguishable pairs
/// with `B(u,u) = 1`, then filters by positivity on the cone.
pub fn find_orthogonalizing_spin_form<F: Field>(
    m: &Model,
    e: &OrderUnitSpace<F>,
    g: &LinearizedGroup<F>,
) -> Result<SpinSearch<F>> {
    let n = e.dim;
    let params = linalg::sym_param_count(n);
    let mut rows = invariance_rows(n, &g.generators);
    for (x, y) in m.testspace.perp_pairs() {
        if x > y {
            continue;
        }
        rows.push(pair_row(n, &e.outcome_vectors[x], &e.outcome_vectors[y]));
    }
    let homogeneous = forms_from_params(n, linalg::nullspace(&rows_to_mat(&rows, params)));
    let dim = homogeneous.len();
    let form = match dim {
        0 => None,
        1 => {
            let b1 = &homogeneous[0];
            let uu = linalg::bilinear(b1, &e.unit, &e.unit);
            if uu.is_zero() || (!F::EXACT && uu.to_f64().abs() <= FLOAT_TOL) {
                None
            } else {
                let b = b1.map(|v| v / uu.clone());
                (positive_on_cone(e, &b) == Tri::Yes).then_some(b)
            }
        }
        _ => positive_combination(e, &homogeneous),
    };
    let form = form.map(|b| {
        let flags = evaluate_flags(m, e, g, &b);
        BilinearForm { matrix: b, flags }
    });
    Ok(SpinSearch {
        form,
        solution_space_dim: dim,
    })
}

/// Row of `B(a, b) = 0` in symmetric parameters.
fn pair_row<F: Field>(n: usize, a: &Vector<F>, b: &Vector<F>) -> Vec<F> {
    let mut row = vec![F::zero(); linalg::sym_param_count(n)];
    for i in 0..n {
        for j in 0..n {
            let c = a[i].clone() * b[j].clone();
            if c.is_zero() {
                continue;
            }
            let idx = linalg::sym_index(n, i, j);
            row[idx] = row[idx].clone() + c;
        }
    }
    row
}

/// A combination `Σ cᵢ Bᵢ` with `B(u,u) = 1` that is non-negative on all
/// probe pairs, found by exact LP (float inputs are rationalized).
fn positive_combination<F: Field>(e: &OrderUnitSpace<F>, basis: &[Mat<F>]) -> Option<Mat<F>> {
    let exact_q = |v: &F| v.to_rational();
    let k = basis.len();
    // free coefficients c = p - q with p, q >= 0
    let mut lp = LinearProgram::new(2 * k);
    let split = |vals: Vec<Q>| -> Vec<(usize, Q)> {
        vals.iter()
            .enumerate()
            .flat_map(|(i, v)| [(i, v.clone()), (k + i, -v.clone())])
            .collect()
    };
    let uu: Vec<Q> = basis.iter().map(|b| exact_q(&linalg::bilinear(b, &e.unit, &e.unit))).collect();
    lp.add_constraint(split(uu), Relation::Eq, qi(1));
    let probes = positivity_probes(e);
    for (i, x) in probes.iter().enumerate() {
        for y in &probes[i..] {
            let vals: Vec<Q> = basis.iter().map(|b| exact_q(&linalg::bilinear(b, x, y))).collect();
            lp.add_constraint(split(vals), Relation::Ge, qi(0));
        }
    }
    let sol = lp.solve();
    let x = sol.solution()?;
    let n = e.dim;
    let mut out = Mat::from_element(n, n, F::zero());
    for (i, b) in basis.iter().enumerate() {
        let c = x[i].clone() - x[k + i].clone();
        let cf = F::from_rational(&c);
        out = Mat::from_fn(n, n, |r, s| out[(r, s)].clone() + cf.clone() * b[(r, s)].clone());
    }
    Some(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Report {
    pub irreducible: bool,
    pub forms_on_u_perp: usize,
    pub solution_space_dim: usize,
    pub form_found: bool,
    pub positive_definite: Tri,
    /// Smallest eigenvalue of the form, when one was found.
    pub min_eigenvalue: Option<f64>,
    pub hypothesis_met: bool,
    /// `unknown` when the hypothesis is not met (the theorem is silent).
    pub confirmed: Tri,
}

/// Irreducible models have at most one orthogonalizing SPIN form, and it is
/// positive definite.
pub fn check_theorem1<F: Field>(m: &Model, e: &OrderUnitSpace<F>, g: &LinearizedGroup<F>) -> Result<Theorem1Report> {
    let irr = is_irreducible(e, g)?;
    let spin = find_orthogonalizing_spin_form(m, e, g)?;
    let pd = spin
        .form
        .as_ref()
        .map(|f| f.flags.positive_definite)
        .unwrap_or(Tri::Unknown);
    let min_eigenvalue = spin
        .form
        .as_ref()
        .map(|f| linalg::min_eigenvalue(&linalg::to_float_mat(&f.matrix)));
    let confirmed = if !irr.irreducible {
        Tri::Unknown
    } else {
        let unique = spin.solution_space_dim <= 1;
        let inner = spin.form.as_ref().map(|_| pd.is_yes()).unwrap_or(true);
        Tri::from(unique && inner)
    };
    Ok(Theorem1Report {
        irreducible: irr.irreducible,
        forms_on_u_perp: irr.forms_on_u_perp,
        solution_space_dim: spin.solution_space_dim,
        form_found: spin.form.is_some(),
        positive_definite: pd,
        min_eigenvalue,
        hypothesis_met: irr.irreducible,
        confirmed,
    })
}

/// Every generator is unitary for `B`: its `B`-adjoint `B⁻¹MᵀB` is `M⁻¹`.
pub fn check_unitarity<F: Field>(generators: &[Mat<F>], b: &Mat<F>) -> Result<bool> {
    if linalg::inverse(b).is_none() {
        return Err(Error::Singular("form is not invertible".into()));
    }
    Ok(is_invariant(b, generators))
}
