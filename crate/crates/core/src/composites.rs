//! Bipartite states as joint tables, conditionals, the map `ω̂`, conjugate
//! systems and the forms they induce.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cones::{self, PolyhedralCone};
use crate::error::{Error, Result};
use crate::forms::{self, BilinearForm};
use crate::linalg::{self, Mat};
use crate::linearization::{LinearizedGroup, OrderUnitSpace};
use crate::lp::{LinearProgram, Relation};
use crate::model::{Model, Perm, State, StateSpace, SymmetryGroup};
use crate::scalar::{parse_rational, Field, Q, FLOAT_TOL};
use crate::verdict::Tri;

/// Pure-state grid size used when testing positivity on PSD cones.
pub const PSD_GRID: usize = 20;

/// Joint probabilities `ω(x, y)`: rows are outcomes of `A`, columns of `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState<F: Field> {
    pub table: Mat<F>,
    /// `M` with `ω(x, y) = x̂ᵀ M ŷ`, when known beyond the sampled outcomes.
    pub extension: Option<Mat<F>>,
}

impl<F: Field> BipartiteState<F> {
    pub fn new(table: Mat<F>) -> Self {
        BipartiteState { table, extension: None }
    }

    pub fn get(&self, x: usize, y: usize) -> &F {
        &self.table[(x, y)]
    }

    /// Swaps the roles of the two factors.
    pub fn transpose(&self) -> Self {
        BipartiteState {
            table: self.table.transpose(),
            extension: self.extension.as_ref().map(|m| m.transpose()),
        }
    }

    pub fn to_float(&self) -> BipartiteState<f64> {
        BipartiteState {
            table: linalg::to_float_mat(&self.table),
            extension: self.extension.as_ref().map(linalg::to_float_mat),
        }
    }

    /// `x ↦ Σ_{y ∈ F} ω(x, y)` over the first test `F` of `B`.
    pub fn marginal_a(&self, b: &Model) -> Vec<F> {
        let f = &b.testspace.tests[0];
        (0..self.table.nrows())
            .map(|x| f.iter().fold(F::zero(), |acc, &y| acc + self.table[(x, y)].clone()))
            .collect()
    }

    pub fn marginal_b(&self, a: &Model) -> Vec<F> {
        self.transpose().marginal_a(a)
    }
}

fn close<F: Field>(a: &F, b: &F) -> bool {
    if F::EXACT {
        (a.clone() - b.clone()).is_zero()
    } else {
        (a.to_f64() - b.to_f64()).abs() <= FLOAT_TOL * (1.0 + b.to_f64().abs())
    }
}

/// `(α ⊗ β)(x, y) = α(x) β(y)`.
pub fn product_state<F: Field>(alpha: &[F], beta: &[F]) -> BipartiteState<F> {
    BipartiteState::new(Mat::from_fn(alpha.len(), beta.len(), |x, y| {
        alpha[x].clone() * beta[y].clone()
    }))
}

/// The unnormalized conditional `ω(x, ·)` on `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional<F: Field> {
    pub values: Vec<F>,
    /// Total mass on one test of `B`.
    pub mass: F,
    pub zero_mass: bool,
}

impl<F: Field> Conditional<F> {
    /// Divides by the mass; `None` at zero mass.
    pub fn normalized(&self) -> Option<Vec<F>> {
        (!self.zero_mass).then(|| self.values.iter().map(|v| v.clone() / self.mass.clone()).collect())
    }
}

pub fn conditional<F: Field>(omega: &BipartiteState<F>, a: &Model, b: &Model, x: &str) -> Result<Conditional<F>> {
    let xi = a.testspace.index_of(x)?;
    let values: Vec<F> = (0..omega.table.ncols()).map(|y| omega.table[(xi, y)].clone()).collect();
    let mass = b.testspace.tests[0]
        .iter()
        .fold(F::zero(), |acc, &y| acc + values[y].clone());
    let zero_mass = values.iter().all(|v| v.is_zero());
    Ok(Conditional { values, mass, zero_mass })
}

/// Quantum state coordinates `r` reproducing `values` as `tr(ρ P_y)`, when
/// such an operator exists.
pub fn operator_for_functional(e: &OrderUnitSpace<f64>, values: &[f64]) -> Option<DVector<f64>> {
    let ops = e.operators.as_ref()?;
    let g = ops.trace_gram();
    let n = values.len();
    let a = DMatrix::from_fn(n, e.dim, |y, k| (g.clone() * &e.outcome_vectors[y])[k]);
    let b = DVector::from_column_slice(values);
    let r = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    ((&a * &r - &b).norm() <= FLOAT_TOL * (1.0 + b.norm())).then_some(r)
}

/// Whether an unnormalized conditional lies in the cone over `Ω(B)`.
pub fn conditional_in_cone<F: Field>(b: &Model, eb: &OrderUnitSpace<F>, values: &[F]) -> bool {
    match &b.states {
        StateSpace::Polytope(vertices) => {
            let gens: Vec<Vec<Q>> = vertices.iter().map(|v| v.0.clone()).collect();
            let target: Vec<Q> = values.iter().map(Field::to_rational).collect();
            crate::lp::conic_combination(&gens, &target).is_ok()
        }
        StateSpace::Quantum(_) => {
            let ef = eb.to_float();
            let vals: Vec<f64> = values.iter().map(Field::to_f64).collect();
            match operator_for_functional(&ef, &vals) {
                Some(r) => ef.operators.as_ref().expect("quantum").is_psd(&r, FLOAT_TOL),
                None => false,
            }
        }
    }
}

/// Violated constraints of a joint table, empty when it is a valid
/// bipartite state.
pub fn bipartite_violations<F: Field>(
    omega: &BipartiteState<F>,
    a: &Model,
    ea: &OrderUnitSpace<F>,
    b: &Model,
    eb: &OrderUnitSpace<F>,
) -> Vec<String> {
    let mut out = Vec::new();
    if omega.table.shape() != (a.num_outcomes(), b.num_outcomes()) {
        out.push(format!(
            "table has shape {:?}, expected ({}, {})",
            omega.table.shape(),
            a.num_outcomes(),
            b.num_outcomes()
        ));
        return out;
    }
    for (x, y) in (0..a.num_outcomes()).flat_map(|x| (0..b.num_outcomes()).map(move |y| (x, y))) {
        let v = &omega.table[(x, y)];
        if v.is_negative() && !(!F::EXACT && v.to_f64() >= -FLOAT_TOL) {
            out.push(format!("negative entry at ({}, {})", a.testspace.name(x), b.testspace.name(y)));
        }
    }
    for e in &a.testspace.tests {
        for f in &b.testspace.tests {
            let s = e
                .iter()
                .flat_map(|&x| f.iter().map(move |&y| (x, y)))
                .fold(F::zero(), |acc, (x, y)| acc + omega.table[(x, y)].clone());
            if !close(&s, &F::one()) {
                out.push(format!("product test sums to {}", s.render()));
            }
        }
    }
    for x in 0..a.num_outcomes() {
        let row: Vec<F> = (0..b.num_outcomes()).map(|y| omega.table[(x, y)].clone()).collect();
        if !conditional_in_cone(b, eb, &row) {
            out.push(format!("conditional on {} is not in the state cone", a.testspace.name(x)));
        }
    }
    for y in 0..b.num_outcomes() {
        let col: Vec<F> = (0..a.num_outcomes()).map(|x| omega.table[(x, y)].clone()).collect();
        if !conditional_in_cone(a, ea, &col) {
            out.push(format!("conditional on {} is not in the state cone", b.testspace.name(y)));
        }
    }
    out
}

/// Matrix `W` with `ω(x, y) = ŷᵀ W x̂`: the map `E(A) → E(B)*`.
pub fn omega_hat<F: Field>(omega: &BipartiteState<F>, ea: &OrderUnitSpace<F>, eb: &OrderUnitSpace<F>) -> Result<Mat<F>> {
    let w = match &omega.extension {
        Some(m) => m.clone(),
        None => bilinear_from_table(&omega.table, ea, eb)?,
    };
    Ok(w.transpose())
}

/// `M` with `x̂ᵀ M ŷ = t[x][y]`, checked on every entry.
fn bilinear_from_table<F: Field>(t: &Mat<F>, ea: &OrderUnitSpace<F>, eb: &OrderUnitSpace<F>) -> Result<Mat<F>> {
    let xa = ea.outcome_matrix();
    let xb = eb.outcome_matrix();
    let ia = linalg::independent_columns(&xa);
    let ib = linalg::independent_columns(&xb);
    if ia.len() < ea.dim || ib.len() < eb.dim {
        return Err(Error::InconsistentExtension("outcome vectors do not span".into()));
    }
    let sa = Mat::from_fn(ea.dim, ea.dim, |i, j| xa[(i, ia[j])].clone());
    let sb = Mat::from_fn(eb.dim, eb.dim, |i, j| xb[(i, ib[j])].clone());
    let sa_inv = linalg::inverse(&sa).ok_or_else(|| Error::Singular("outcome frame".into()))?;
    let sb_inv = linalg::inverse(&sb).ok_or_else(|| Error::Singular("outcome frame".into()))?;
    let core = Mat::from_fn(ea.dim, eb.dim, |i, j| t[(ia[i], ib[j])].clone());
    let m = linalg::mat_mul(&linalg::mat_mul(&sa_inv.transpose(), &core), &sb_inv);
    for x in 0..t.nrows() {
        for y in 0..t.ncols() {
            let v = linalg::bilinear(&m, &ea.outcome_vectors[x], &eb.outcome_vectors[y]);
            if !close(&v, &t[(x, y)]) {
                return Err(Error::InconsistentExtension(format!(
                    "entry ({x}, {y}) is {} but linear dependencies force {}",
                    t[(x, y)].render(),
                    v.render()
                )));
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize)]
pub struct IsomorphismCheck {
    pub invertible: bool,
    pub positive: Tri,
    pub inverse_positive: Tri,
    pub verdict: Tri,
    /// `exact` on polytope models, `sampled` on PSD cones.
    pub method: &'static str,
}

/// `ω̂` is invertible, positive into the dual of `E(B)₊`, and has a
/// positive inverse.
pub fn is_isomorphism_state<F: Field>(
    omega: &BipartiteState<F>,
    ea: &OrderUnitSpace<F>,
    eb: &OrderUnitSpace<F>,
) -> Result<IsomorphismCheck> {
    if ea.is_quantum() || eb.is_quantum() {
        return isomorphism_psd(&omega.to_float(), &ea.to_float(), &eb.to_float());
    }
    let q = |m: &Mat<F>| m.map(|v| v.to_rational());
    let w = q(&omega_hat(omega, ea, eb)?);
    let Some(w_inv) = (w.nrows() == w.ncols()).then(|| linalg::inverse(&w)).flatten() else {
        return Ok(IsomorphismCheck {
            invertible: false,
            positive: Tri::No,
            inverse_positive: Tri::No,
            verdict: Tri::No,
            method: "exact",
        });
    };
    let ka = PolyhedralCone::from_vectors(ea.dim, &ea.cone_generators)?;
    let kb = PolyhedralCone::from_vectors(eb.dim, &eb.cone_generators)?;
    let kb_dual = cones::dual_cone(&kb, &linalg::identity(eb.dim))?;
    let positive = cones::is_positive_map(&w, &ka, &kb_dual);
    let inverse_positive = cones::is_positive_map(&w_inv, &kb_dual, &ka);
    Ok(IsomorphismCheck {
        invertible: true,
        positive: positive.into(),
        inverse_positive: inverse_positive.into(),
        verdict: (positive && inverse_positive).into(),
        method: "exact",
    })
}

fn isomorphism_psd(
    omega: &BipartiteState<f64>,
    ea: &OrderUnitSpace<f64>,
    eb: &OrderUnitSpace<f64>,
) -> Result<IsomorphismCheck> {
    let (Some(oa), Some(ob)) = (&ea.operators, &eb.operators) else {
        return Err(Error::Unsupported("mixed polytope and quantum factors".into()));
    };
    let w = omega_hat(omega, ea, eb)?;
    let gb = ob.trace_gram();
    let gb_inv = gb.clone().try_inverse().ok_or_else(|| Error::Singular("trace form".into()))?;
    let Some(w_inv) = w.clone().try_inverse().filter(|_| w.is_square() && w.determinant().abs() > FLOAT_TOL) else {
        return Ok(IsomorphismCheck {
            invertible: false,
            positive: Tri::No,
            inverse_positive: Tri::No,
            verdict: Tri::No,
            method: "sampled",
        });
    };
    let positive = cones::pure_state_grid(oa, PSD_GRID)
        .iter()
        .all(|x| ob.is_psd(&(&gb_inv * (&w * x)), FLOAT_TOL));
    let inverse_positive = cones::pure_state_grid(ob, PSD_GRID)
        .iter()
        .all(|r| oa.is_psd(&(&w_inv * (&gb * r)), FLOAT_TOL));
    Ok(IsomorphismCheck {
        invertible: true,
        positive: positive.into(),
        inverse_positive: inverse_positive.into(),
        verdict: (positive && inverse_positive).into(),
        method: "sampled",
    })
}

/// A conjugate system `(γ, η)` with `Ā` identified with `A` through the
/// outcome bijection `γ`.
#[derive(Debug, Clone)]
pub struct Conjugate<F: Field> {
    pub gamma: Perm,
    pub eta: BipartiteState<F>,
    pub invariant: bool,
}

/// Identity on polytope models, complex conjugation of the sampled
/// projections on quantum ones.
pub fn default_gamma(m: &Model) -> Result<Perm> {
    match &m.states {
        StateSpace::Polytope(_) => Ok(Perm::identity(m.num_outcomes())),
        StateSpace::Quantum(sys) => sys
            .conjugation_permutation()
            .map(Perm)
            .ok_or_else(|| Error::Unsupported("outcome sample is not closed under conjugation".into())),
    }
}

fn check_gamma(m: &Model, gamma: &Perm) -> Result<()> {
    if gamma.len() != m.num_outcomes() || !gamma.is_bijection() {
        return Err(Error::InvalidModel("gamma is not a bijection of outcomes".into()));
    }
    if !m.testspace.preserved_by(gamma) {
        return Err(Error::InvalidModel("gamma does not map tests to tests".into()));
    }
    Ok(())
}

/// Exact LP for a conjugate table on a polytope model: non-negativity,
/// product-test normalization, conditionals in the state cone, diagonal
/// `1/n`, and optionally `η(gx, γ(gy)) = η(x, γ(y))`.
pub fn find_conjugate_state(m: &Model, gamma: &Perm, require_invariance: bool) -> Result<Option<Conjugate<Q>>> {
    let n = m.rank()?;
    check_gamma(m, gamma)?;
    let StateSpace::Polytope(vertices) = &m.states else {
        return Err(Error::Unsupported("use find_conjugate_state_quantum".into()));
    };
    let k = m.num_outcomes();
    let var = |x: usize, y: usize| x * k + y;
    let mut lp = LinearProgram::new(k * k);
    add_conditional_rows(&mut lp, k, vertices, var);
    add_conditional_rows(&mut lp, k, vertices, |y, x| var(x, y));
    let tests = &m.testspace.tests;
    for e in tests {
        for f in tests {
            let coeffs = e
                .iter()
                .flat_map(|&x| f.iter().map(move |&y| (var(x, y), Q::from_i64(1))))
                .collect();
            lp.add_constraint(coeffs, Relation::Eq, Q::from_i64(1));
        }
    }
    for x in 0..k {
        lp.add_constraint(vec![(var(x, gamma.apply(x)), Q::from_i64(1))], Relation::Eq, Q::from_ratio(1, n as i64));
    }
    if require_invariance {
        let SymmetryGroup::Permutation(g) = &m.group else {
            return Err(Error::Unsupported("polytope model without a permutation group".into()));
        };
        for p in &g.generators {
            for x in 0..k {
                for y in 0..k {
                    let lhs = var(p.apply(x), gamma.apply(p.apply(y)));
                    let rhs = var(x, gamma.apply(y));
                    if lhs != rhs {
                        lp.add_constraint(
                            vec![(lhs, Q::from_i64(1)), (rhs, Q::from_i64(-1))],
                            Relation::Eq,
                            Q::from_i64(0),
                        );
                    }
                }
            }
        }
    }
    let outcome = lp.solve();
    Ok(outcome.solution().map(|s| Conjugate {
        gamma: gamma.clone(),
        eta: BipartiteState::new(Mat::from_fn(k, k, |x, y| s[var(x, y)].clone())),
        invariant: require_invariance,
    }))
}

/// `row(x)(y) = Σ_v μ_{x,v} v(y)` with fresh `μ ≥ 0`.
fn add_conditional_rows(lp: &mut LinearProgram, k: usize, vertices: &[State], var: impl Fn(usize, usize) -> usize) {
    for x in 0..k {
        let mus: Vec<usize> = vertices.iter().map(|_| lp.add_var()).collect();
        for y in 0..k {
            let mut coeffs = vec![(var(x, y), Q::from_i64(1))];
            for (mu, v) in mus.iter().zip(vertices) {
                if !v.0[y].is_zero() {
                    coeffs.push((*mu, -v.0[y].clone()));
                }
            }
            lp.add_constraint(coeffs, Relation::Eq, Q::from_i64(0));
        }
    }
}

/// Conjugate table on a quantum model: least-norm solution for
/// `η(x, z) = x̂ᵀ W ẑ` under unit normalization, diagonal `1/n` and
/// invariance `Mᵀ W M̄ = W`, then verified as a bipartite state.
pub fn find_conjugate_state_quantum(
    m: &Model,
    e: &OrderUnitSpace<f64>,
    gamma: &Perm,
    require_invariance: bool,
) -> Result<Option<Conjugate<f64>>> {
    let n = m.rank()?;
    check_gamma(m, gamma)?;
    let ops = e
        .operators
        .as_ref()
        .ok_or_else(|| Error::Unsupported("use find_conjugate_state".into()))?;
    let d = e.dim;
    let conj = ops.complex_conjugation();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let pair_row = |a: &DVector<f64>, b: &DVector<f64>| -> Vec<f64> {
        (0..d * d).map(|idx| a[idx / d] * b[idx % d]).collect()
    };
    rows.push(pair_row(&e.unit, &e.unit));
    rhs.push(1.0);
    for x in 0..m.num_outcomes() {
        rows.push(pair_row(&e.outcome_vectors[x], &e.outcome_vectors[gamma.apply(x)]));
        rhs.push(1.0 / n as f64);
    }
    if require_invariance {
        let SymmetryGroup::Linear(l) = &m.group else {
            return Err(Error::Unsupported("quantum model without linear actions".into()));
        };
        for act in &l.actions {
            let bar = &conj * act * &conj;
            for a in 0..d {
                for b in 0..d {
                    let mut row: Vec<f64> = (0..d * d).map(|idx| act[(idx / d, a)] * bar[(idx % d, b)]).collect();
                    row[a * d + b] -= 1.0;
                    rows.push(row);
                    rhs.push(0.0);
                }
            }
        }
    }
    let a = DMatrix::from_fn(rows.len(), d * d, |i, j| rows[i][j]);
    let b = DVector::from_vec(rhs);
    let w = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|s| Error::Numerical(s.to_string()))?;
    if (&a * &w - &b).norm() > FLOAT_TOL * (1.0 + b.norm()) {
        return Ok(None);
    }
    let wm = DMatrix::from_fn(d, d, |i, j| w[i * d + j]);
    let k = m.num_outcomes();
    let table = DMatrix::from_fn(k, k, |x, z| (e.outcome_vectors[x].transpose() * &wm * &e.outcome_vectors[z])[0]);
    let eta = BipartiteState {
        table,
        extension: Some(wm),
    };
    if !bipartite_violations(&eta, m, e, m, e).is_empty() {
        return Ok(None);
    }
    Ok(Some(Conjugate {
        gamma: gamma.clone(),
        eta,
        invariant: require_invariance,
    }))
}

/// For feasible `η`, `η(x, γ(y)) = 0` whenever `x ≠ y` share a test.
pub fn diagonal_forces_orthogonality<F: Field>(m: &Model, c: &Conjugate<F>) -> bool {
    m.testspace
        .perp_pairs()
        .iter()
        .all(|&(x, y)| close(&c.eta.table[(x, c.gamma.apply(y))], &F::zero()))
}

/// `B(x̂, ŷ) = η(x, γ(y))`, averaged over the group when not invariant.
pub fn spin_form_from_conjugate<F: Field>(
    m: &Model,
    e: &OrderUnitSpace<F>,
    g: &LinearizedGroup<F>,
    c: &Conjugate<F>,
) -> Result<BilinearForm<F>> {
    let k = m.num_outcomes();
    let mut b = match (&c.eta.extension, &e.operators) {
        (Some(w), Some(ops)) => {
            let conj: Mat<F> = ops.complex_conjugation().map(|v| F::from_f64_lossy(v));
            linalg::mat_mul(w, &conj)
        }
        _ => {
            let t = Mat::from_fn(k, k, |x, y| c.eta.table[(x, c.gamma.apply(y))].clone());
            bilinear_from_table(&t, e, e)?
        }
    };
    if !forms::is_invariant(&b, &g.generators) {
        b = forms::average_form(&b, g)?;
    }
    let asym = (0..b.nrows()).any(|i| (0..i).any(|j| !close(&b[(i, j)], &b[(j, i)])));
    if asym {
        return Err(Error::InvalidModel("form induced by the conjugate is not symmetric".into()));
    }
    if !F::EXACT {
        b = Mat::from_fn(b.nrows(), b.ncols(), |i, j| {
            (b[(i, j)].clone() + b[(j, i)].clone()) / F::from_i64(2)
        });
    }
    let flags = forms::evaluate_flags(m, e, g, &b);
    Ok(BilinearForm { matrix: b, flags })
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessCheck {
    pub isomorphism: Tri,
    pub marginal: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HomogeneityReport {
    pub witnesses: Vec<WitnessCheck>,
    /// For each sample, the first verified witness whose marginal it is.
    pub covered_by: Vec<Option<usize>>,
    pub uncovered: Vec<usize>,
    pub verdict: String,
}

/// Which sampled interior states are marginals of verified isomorphism
/// states. A report on samples, not a proof of homogeneity.
pub fn homogeneity_report<F: Field>(
    m: &Model,
    e: &OrderUnitSpace<F>,
    witnesses: &[BipartiteState<F>],
    samples: &[Vec<F>],
) -> Result<HomogeneityReport> {
    let mut checks = Vec::new();
    let mut marginals = Vec::new();
    for w in witnesses {
        let iso = is_isomorphism_state(w, e, e)?.verdict;
        let marg = w.marginal_a(m);
        checks.push(WitnessCheck {
            isomorphism: iso,
            marginal: marg.iter().map(Field::render).collect(),
        });
        marginals.push((iso.is_yes(), marg));
    }
    let covered_by: Vec<Option<usize>> = samples
        .iter()
        .map(|s| {
            marginals
                .iter()
                .position(|(ok, marg)| *ok && marg.len() == s.len() && marg.iter().zip(s).all(|(a, b)| close(a, b)))
        })
        .collect();
    let uncovered: Vec<usize> = (0..samples.len()).filter(|&i| covered_by[i].is_none()).collect();
    let verdict = if uncovered.is_empty() {
        "hypothesis verified on samples".to_string()
    } else {
        format!("{} of {} samples uncovered", uncovered.len(), samples.len())
    };
    Ok(HomogeneityReport {
        witnesses: checks,
        covered_by,
        uncovered,
        verdict,
    })
}

/// Sparse nested table `{"x": {"y": "p/q"}}`, zero entries omitted.
pub fn bipartite_to_json<F: Field>(omega: &BipartiteState<F>, a: &Model, b: &Model) -> serde_json::Value {
    let mut outer = BTreeMap::new();
    for x in 0..omega.table.nrows() {
        let mut inner = BTreeMap::new();
        for y in 0..omega.table.ncols() {
            let v = &omega.table[(x, y)];
            if !v.is_zero() {
                inner.insert(b.testspace.name(y).to_string(), serde_json::Value::String(v.render()));
            }
        }
        if !inner.is_empty() {
            outer.insert(a.testspace.name(x).to_string(), inner);
        }
    }
    serde_json::to_value(outer).expect("string map")
}

/// Reads the nested table format; values are rational strings or numbers.
pub fn parse_bipartite<F: Field>(json: &serde_json::Value, a: &Model, b: &Model) -> Result<BipartiteState<F>> {
    let outer = json
        .as_object()
        .ok_or_else(|| Error::Parse("bipartite state must be an object".into()))?;
    let mut table = Mat::from_element(a.num_outcomes(), b.num_outcomes(), F::zero());
    for (x, row) in outer {
        let xi = a.testspace.index_of(x)?;
        let row = row
            .as_object()
            .ok_or_else(|| Error::Parse(format!("row {x} must be an object")))?;
        for (y, v) in row {
            let yi = b.testspace.index_of(y)?;
            let q = match v {
                serde_json::Value::String(s) => parse_rational(s)?,
                serde_json::Value::Number(n) => parse_rational(&n.to_string())?,
                _ => return Err(Error::Parse(format!("entry ({x}, {y}) is not a number"))),
            };
            table[(xi, yi)] = F::from_rational(&q);
        }
    }
    Ok(BipartiteState::new(table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearization::{build_effect_space, linearize_group_exact, linearize_group_float};
    use crate::model::builtins::builtin;
    use crate::scalar::{q, qi};
    use proptest::prelude::*;

    fn exact(name: &str) -> (Model, OrderUnitSpace<Q>, LinearizedGroup<Q>) {
        let m = builtin(name).unwrap();
        let e = build_effect_space(&m).unwrap().exact().unwrap().clone();
        let g = linearize_group_exact(&m, &e, true).unwrap();
        (m, e, g)
    }

    fn float(name: &str) -> (Model, OrderUnitSpace<f64>, LinearizedGroup<f64>) {
        let m = builtin(name).unwrap();
        let e = build_effect_space(&m).unwrap().to_float();
        let g = linearize_group_float(&m, &e).unwrap();
        (m, e, g)
    }

    fn diag(vals: &[Q]) -> BipartiteState<Q> {
        BipartiteState::new(Mat::from_fn(vals.len(), vals.len(), |i, j| {
            if i == j {
                vals[i].clone()
            } else {
                qi(0)
            }
        }))
    }

    #[test]
    fn products_of_point_masses_and_uniform_states() {
        let p = product_state(&[qi(1), qi(0)], &[qi(0), qi(1)]);
        assert_eq!(p.table, Mat::from_row_slice(2, 2, &[qi(0), qi(1), qi(0), qi(0)]));
        let third = vec![q(1, 3); 3];
        let u = product_state(&third, &third);
        assert!(u.table.iter().all(|v| *v == q(1, 9)));
        let (m, e, _) = exact("classical:3");
        assert!(bipartite_violations(&u, &m, &e, &m, &e).is_empty());
    }

    #[test]
    fn conditionals_of_a_product() {
        let (m, e, _) = exact("classical:3");
        let alpha = vec![q(1, 2), q(1, 2), qi(0)];
        let beta = vec![q(1, 6), q(1, 3), q(1, 2)];
        let p = product_state(&alpha, &beta);
        let c = conditional(&p, &m, &m, "a0").unwrap();
        assert_eq!(c.values, beta.iter().map(|b| b * q(1, 2)).collect::<Vec<_>>());
        assert_eq!(c.normalized().unwrap(), beta);
        let z = conditional(&p, &m, &m, "a2").unwrap();
        assert!(z.zero_mass && z.normalized().is_none());
        assert!(conditional(&p, &m, &m, "nope").is_err());
        assert_eq!(p.marginal_a(&m), alpha);
        assert_eq!(p.marginal_b(&m), beta);
        let w = omega_hat(&p, &e, &e).unwrap();
        assert_eq!(linalg::rank(&w), 1);
        assert!(is_isomorphism_state(&p, &e, &e).unwrap().verdict.is_no());
    }

    #[test]
    fn correlated_bit_is_an_isomorphism_state() {
        let (_, e, _) = exact("classical:2");
        let w = diag(&[q(1, 2), q(1, 2)]);
        let hat = omega_hat(&w, &e, &e).unwrap();
        assert!(linalg::inverse(&hat).is_some());
        assert!(is_isomorphism_state(&w, &e, &e).unwrap().verdict.is_yes());
    }

    #[test]
    fn inconsistent_table_is_rejected() {
        let (_, e, _) = exact("squit");
        // x0 + x1 = y0 + y1, so rows must agree on sums
        let mut t = Mat::from_element(4, 4, q(1, 4));
        t[(0, 0)] = q(1, 2);
        let r = omega_hat(&BipartiteState::new(t), &e, &e);
        assert!(matches!(r, Err(Error::InconsistentExtension(_))));
    }

    #[test]
    fn classical_conjugates_are_diagonal() {
        for n in 2..=5 {
            let (m, e, g) = exact(&format!("classical:{n}"));
            let gamma = default_gamma(&m).unwrap();
            let c = find_conjugate_state(&m, &gamma, true).unwrap().unwrap();
            for x in 0..n {
                for y in 0..n {
                    let want = if x == y { q(1, n as i64) } else { qi(0) };
                    assert_eq!(c.eta.table[(x, y)], want);
                }
            }
            assert!(diagonal_forces_orthogonality(&m, &c));
            let b = spin_form_from_conjugate(&m, &e, &g, &c).unwrap();
            let spin = forms::find_orthogonalizing_spin_form(&m, &e, &g).unwrap().form.unwrap();
            assert_eq!(b.matrix, spin.matrix);
            assert!(b.flags.is_orthogonalizing_spin().is_yes());
            assert_eq!(linalg::bilinear(&b.matrix, &e.unit, &e.unit), qi(1));
        }
    }

    #[test]
    fn squit_conjugate_is_not_an_isomorphism_state() {
        let (m, e, _) = exact("squit");
        let gamma = default_gamma(&m).unwrap();
        let c = find_conjugate_state(&m, &gamma, true).unwrap();
        let c = c.expect("the invariant LP is feasible on the squit");
        assert!(diagonal_forces_orthogonality(&m, &c));
        let iso = is_isomorphism_state(&c.eta, &e, &e).unwrap();
        assert!(!iso.verdict.is_yes());
    }

    #[test]
    fn gamma_must_preserve_tests() {
        let m = builtin("squit").unwrap();
        assert!(find_conjugate_state(&m, &Perm(vec![0, 2, 1, 3]), false).is_err());
    }

    #[test]
    fn qubit_maximally_entangled_conjugate() {
        let (m, e, g) = float("qubit:complex");
        let gamma = default_gamma(&m).unwrap();
        assert!(!gamma.is_identity());
        let c = find_conjugate_state_quantum(&m, &e, &gamma, true).unwrap().unwrap();
        let sys = m.states.quantum().unwrap();
        for x in 0..m.num_outcomes() {
            assert!((c.eta.table[(x, gamma.apply(x))] - 0.5).abs() < 1e-9);
            for y in 0..m.num_outcomes() {
                // tr(x conj(y)) / 2
                let px = sys.projection(x);
                let py = sys.projection(y).map(|z| z.conj());
                let want = (px * py).trace().re / 2.0;
                assert!((c.eta.table[(x, y)] - want).abs() < 1e-9);
            }
        }
        // conditional on x is half the state γ(x)
        let cond = conditional(&c.eta, &m, &m, "z+").unwrap();
        let zbar = gamma.apply(0);
        for y in 0..m.num_outcomes() {
            let py = sys.projection(y);
            let want = (sys.projection(zbar) * py).trace().re / 2.0;
            assert!((cond.values[y] - want).abs() < 1e-9);
        }
        assert!(is_isomorphism_state(&c.eta, &e, &e).unwrap().verdict.is_yes());
        let b = spin_form_from_conjugate(&m, &e, &g, &c).unwrap();
        let half_trace = e.operators.as_ref().unwrap().trace_gram() * 0.5;
        assert!((&b.matrix - half_trace).norm() < 1e-9);
    }

    #[test]
    fn real_qubit_and_qutrit_conjugates() {
        for name in ["qubit:real", "qutrit:complex"] {
            let (m, e, g) = float(name);
            let gamma = default_gamma(&m).unwrap();
            let c = find_conjugate_state_quantum(&m, &e, &gamma, true).unwrap().unwrap();
            let n = m.rank().unwrap() as f64;
            let b = spin_form_from_conjugate(&m, &e, &g, &c).unwrap();
            let scaled = e.operators.as_ref().unwrap().trace_gram() / n;
            assert!((&b.matrix - scaled).norm() < 1e-9, "{name}");
        }
    }

    #[test]
    fn homogeneity_examples() {
        let (m, e, _) = exact("classical:2");
        let ps = [q(1, 3), q(1, 2), q(4, 5)];
        let witnesses: Vec<_> = ps.iter().map(|p| diag(&[p.clone(), qi(1) - p])).collect();
        let samples: Vec<Vec<Q>> = ps.iter().map(|p| vec![p.clone(), qi(1) - p]).collect();
        let r = homogeneity_report(&m, &e, &witnesses, &samples).unwrap();
        assert!(r.uncovered.is_empty());
        let r = homogeneity_report(&m, &e, &[], &samples).unwrap();
        assert_eq!(r.uncovered, vec![0, 1, 2]);

        let (m, e, _) = float("qubit:complex");
        let gamma = default_gamma(&m).unwrap();
        let eta = find_conjugate_state_quantum(&m, &e, &gamma, true).unwrap().unwrap().eta;
        let mixed = vec![0.5; m.num_outcomes()];
        let mut biased = mixed.clone();
        biased[0] = 0.75;
        biased[1] = 0.25;
        let r = homogeneity_report(&m, &e, &[eta], &[mixed, biased]).unwrap();
        assert_eq!(r.covered_by, vec![Some(0), None]);
        assert_eq!(r.uncovered, vec![1]);
    }

    #[test]
    fn json_round_trip() {
        let m = builtin("classical:3").unwrap();
        let w = diag(&[q(1, 3), q(1, 3), q(1, 3)]);
        let j = bipartite_to_json(&w, &m, &m);
        assert_eq!(j["a1"]["a1"], "1/3");
        assert!(j["a1"].get("a0").is_none());
        let back: BipartiteState<Q> = parse_bipartite(&j, &m, &m).unwrap();
        assert_eq!(back, w);
    }

    proptest! {
        #[test]
        fn product_marginals_round_trip(a in prop::collection::vec(1i64..20, 3), b in prop::collection::vec(1i64..20, 3)) {
            let (m, e, _) = exact("classical:3");
            let norm = |v: &[i64]| -> Vec<Q> {
                let s: i64 = v.iter().sum();
                v.iter().map(|x| q(*x, s)).collect()
            };
            let (alpha, beta) = (norm(&a), norm(&b));
            let p = product_state(&alpha, &beta);
            prop_assert_eq!(p.marginal_a(&m), alpha);
            prop_assert_eq!(p.marginal_b(&m), beta);
            prop_assert!(bipartite_violations(&p, &m, &e, &m, &e).is_empty());
            prop_assert_eq!(linalg::rank(&omega_hat(&p, &e, &e).unwrap()), 1);
        }
    }
}
