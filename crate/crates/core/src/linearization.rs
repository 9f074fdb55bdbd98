//! The order-unit space `E(A)` spanned by the outcome functionals.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lp;
use crate::model::morphism::MorphismData;
use crate::model::{Model, OperatorBasis, State, StateSpace, SymmetryGroup};
use crate::scalar::{Field, Q, FLOAT_TOL};

/// How coordinates on `E(A)` are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Coordinates {
    /// Evaluation on these extreme states (indices into the vertex list).
    StateEvaluations { states: Vec<usize> },
    /// Coordinates of Hermitian operators in the identity + Gell-Mann basis.
    Operators,
}

/// `E(A)` with its cone and order unit, over an exact or float field.
#[derive(Debug, Clone)]
pub struct OrderUnitSpace<F: Field> {
    pub dim: usize,
    pub coordinates: Coordinates,
    /// One vector per outcome, in outcome order.
    pub outcome_vectors: Vec<Vector<F>>,
    /// Distinct non-zero outcome vectors.
    pub cone_generators: Vec<Vector<F>>,
    pub unit: Vector<F>,
    /// Groups of outcomes sharing one vector.
    pub identifications: Vec<Vec<usize>>,
    /// Operator basis for quantum models; membership is then PSD.
    pub operators: Option<OperatorBasis>,
}

/// Exact for polytope models, float for quantum ones.
#[derive(Debug, Clone)]
pub enum EffectSpace {
    Exact(OrderUnitSpace<Q>),
    Float(OrderUnitSpace<f64>),
}

impl EffectSpace {
    pub fn dim(&self) -> usize {
        match self {
            EffectSpace::Exact(e) => e.dim,
            EffectSpace::Float(e) => e.dim,
        }
    }

    pub fn exact(&self) -> Option<&OrderUnitSpace<Q>> {
        match self {
            EffectSpace::Exact(e) => Some(e),
            EffectSpace::Float(_) => None,
        }
    }

    pub fn float(&self) -> Option<&OrderUnitSpace<f64>> {
        match self {
            EffectSpace::Float(e) => Some(e),
            EffectSpace::Exact(_) => None,
        }
    }

    /// Float copy, whatever the backend.
    pub fn to_float(&self) -> OrderUnitSpace<f64> {
        match self {
            EffectSpace::Exact(e) => e.to_float(),
            EffectSpace::Float(e) => e.clone(),
        }
    }

    pub fn backend(&self) -> &'static str {
        match self {
            EffectSpace::Exact(_) => "polytope",
            EffectSpace::Float(_) => "quantum-analytic",
        }
    }
}

fn identify<F: Field>(vectors: &[Vector<F>]) -> (Vec<Vector<F>>, Vec<Vec<usize>>) {
    let mut generators: Vec<Vector<F>> = Vec::new();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (x, v) in vectors.iter().enumerate() {
        match generators.iter().position(|g| linalg::vecs_equal(g, v)) {
            Some(k) => classes[k].push(x),
            None => {
                generators.push(v.clone());
                classes.push(vec![x]);
            }
        }
    }
    let identifications = classes.iter().filter(|c| c.len() > 1).cloned().collect();
    let keep: Vec<Vector<F>> = generators
        .into_iter()
        .filter(|g| g.iter().any(|c| !c.is_zero()))
        .collect();
    (keep, identifications)
}

/// Builds `E(A)`; coordinates are evaluations on the first maximal
/// independent subset of vertex states (polytope) or operator coordinates
/// (quantum).
pub fn build_effect_space(m: &Model) -> Result<EffectSpace> {
    let n = m.num_outcomes();
    match &m.states {
        StateSpace::Polytope(vertices) => {
            if vertices.is_empty() {
                return Err(Error::InvalidModel("no states".into()));
            }
            // columns are states; independent columns pick the coordinates
            let p = Mat::from_fn(n, vertices.len(), |x, s| vertices[s].0[x].clone());
            let basis = linalg::independent_columns(&p);
            let outcome_vectors: Vec<Vector<Q>> = (0..n)
                .map(|x| Vector::from_fn(basis.len(), |k, _| vertices[basis[k]].0[x].clone()))
                .collect();
            let space = assemble(m, basis.len(), Coordinates::StateEvaluations { states: basis }, outcome_vectors, None)?;
            Ok(EffectSpace::Exact(space))
        }
        StateSpace::Quantum(q) => {
            let outcome_vectors: Vec<Vector<f64>> = (0..n).map(|x| q.outcome_coords(x)).collect();
            let space = assemble(
                m,
                q.basis.len(),
                Coordinates::Operators,
                outcome_vectors,
                Some(q.basis.clone()),
            )?;
            Ok(EffectSpace::Float(space))
        }
    }
}

fn assemble<F: Field>(
    m: &Model,
    dim: usize,
    coordinates: Coordinates,
    outcome_vectors: Vec<Vector<F>>,
    operators: Option<OperatorBasis>,
) -> Result<OrderUnitSpace<F>> {
    let sum = |t: &[usize]| {
        t.iter()
            .fold(Vector::from_element(dim, F::zero()), |acc, &x| linalg::vec_add(&acc, &outcome_vectors[x]))
    };
    let first = m
        .testspace
        .tests
        .first()
        .ok_or_else(|| Error::InvalidModel("no tests".into()))?;
    let unit = sum(first);
    for (k, t) in m.testspace.tests.iter().enumerate() {
        if !linalg::vecs_equal(&sum(t), &unit) {
            return Err(Error::InconsistentExtension(format!(
                "outcomes of test #{k} do not sum to the unit"
            )));
        }
    }
    let (cone_generators, identifications) = identify(&outcome_vectors);
    Ok(OrderUnitSpace {
        dim,
        coordinates,
        outcome_vectors,
        cone_generators,
        unit,
        identifications,
        operators,
    })
}

impl<F: Field> OrderUnitSpace<F> {
    /// Outcome vectors as the columns of a `dim × |X|` matrix.
    pub fn outcome_matrix(&self) -> Mat<F> {
        linalg::columns_to_mat(self.dim, &self.outcome_vectors)
    }

    pub fn is_quantum(&self) -> bool {
        self.operators.is_some()
    }

    pub fn to_float(&self) -> OrderUnitSpace<f64> {
        OrderUnitSpace {
            dim: self.dim,
            coordinates: self.coordinates.clone(),
            outcome_vectors: self.outcome_vectors.iter().map(linalg::to_float_vec).collect(),
            cone_generators: self.cone_generators.iter().map(linalg::to_float_vec).collect(),
            unit: linalg::to_float_vec(&self.unit),
            identifications: self.identifications.clone(),
            operators: self.operators.clone(),
        }
    }

    /// Rank of the cone generators.
    pub fn generator_rank(&self) -> usize {
        linalg::rank(&linalg::columns_to_mat(self.dim, &self.cone_generators))
    }

    /// Cone membership: exact conic combination for polytope spaces, PSD for
    /// quantum ones.
    pub fn cone_contains(&self, v: &Vector<F>) -> Result<bool> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if let Some(ops) = &self.operators {
            return Ok(ops.is_psd(&linalg::to_float_vec(v), FLOAT_TOL));
        }
        let gens: Vec<Vec<Q>> = self
            .cone_generators
            .iter()
            .map(|g| g.iter().map(Field::to_rational).collect())
            .collect();
        let target: Vec<Q> = v.iter().map(Field::to_rational).collect();
        Ok(lp::conic_combination(&gens, &target).is_ok())
    }
}

impl OrderUnitSpace<Q> {
    /// The functional on `E(A)` induced by a state, in the dual coordinates
    /// (`f · x̂ = α(x)`), or `None` when the state is outside the span.
    pub fn state_functional(&self, alpha: &State) -> Option<Vector<Q>> {
        let x = self.outcome_matrix().transpose();
        let b = Vector::from_vec(alpha.0.clone());
        linalg::solve_affine(&x, &b).map(|(f, _)| f)
    }
}

/// Matrix `M` with `M · source[x] = target[x]` for every `x`.
pub fn linear_extension<F: Field>(dim_out: usize, source: &[Vector<F>], target: &[Vector<F>], names: &dyn Fn(usize) -> String) -> Result<Mat<F>> {
    assert_eq!(source.len(), target.len());
    let dim_in = source.first().map(|v| v.len()).unwrap_or(0);
    let s = linalg::columns_to_mat(dim_in, source);
    let cols = linalg::independent_columns(&s);
    if cols.len() < dim_in {
        return Err(Error::InconsistentExtension("source vectors do not span".into()));
    }
    let s_sub = Mat::from_fn(dim_in, dim_in, |i, j| s[(i, cols[j])].clone());
    let t_sub = Mat::from_fn(dim_out, dim_in, |i, j| target[cols[j]][i].clone());
    let inv = linalg::inverse(&s_sub).ok_or_else(|| Error::Singular("coordinate frame".into()))?;
    let m = linalg::mat_mul(&t_sub, &inv);
    for x in 0..source.len() {
        let image = linalg::mat_vec(&m, &source[x]);
        let ok = if F::EXACT {
            linalg::vecs_equal(&image, &target[x])
        } else {
            (linalg::to_float_vec(&image) - linalg::to_float_vec(&target[x])).norm() <= 1e-8
        };
        if !ok {
            // witness: an independent outcome whose relation x violates
            let witness = cols
                .iter()
                .find(|&&c| !linalg::vecs_equal(&source[c], &source[x]))
                .copied()
                .unwrap_or(cols[0]);
            return Err(Error::InconsistentExtension(format!(
                "outcomes `{}` and `{}`: linear relation not preserved",
                names(x),
                names(witness)
            )));
        }
    }
    Ok(m)
}

/// `M` with `M x̂ = φ(x)^` for every outcome of the source.
pub fn linearize_morphism<F: Field>(
    f: &MorphismData,
    source_model: &Model,
    source: &OrderUnitSpace<F>,
    target: &OrderUnitSpace<F>,
) -> Result<Mat<F>> {
    if f.phi.len() != source.outcome_vectors.len() {
        return Err(Error::DimensionMismatch {
            expected: source.outcome_vectors.len(),
            got: f.phi.len(),
        });
    }
    let images: Vec<Vector<F>> = f.phi.iter().map(|&y| target.outcome_vectors[y].clone()).collect();
    linear_extension(target.dim, &source.outcome_vectors, &images, &|x| {
        source_model.testspace.name(x).to_string()
    })
}

/// Symmetry generators as matrices on `E(A)`.
#[derive(Debug, Clone)]
pub struct LinearizedGroup<F: Field> {
    pub generators: Vec<Mat<F>>,
    /// Every group element, for enumerated permutation groups.
    pub elements: Option<Vec<Mat<F>>>,
}

/// `M_g` with `M_g x̂ = (g x)^`.
pub fn linearize_permutation<F: Field>(e: &OrderUnitSpace<F>, g: &crate::model::Perm, names: &dyn Fn(usize) -> String) -> Result<Mat<F>> {
    let images: Vec<Vector<F>> = (0..g.len()).map(|x| e.outcome_vectors[g.apply(x)].clone()).collect();
    linear_extension(e.dim, &e.outcome_vectors, &images, names)
}

/// Linearizes the group of a polytope model exactly.
pub fn linearize_group_exact(m: &Model, e: &OrderUnitSpace<Q>, enumerate: bool) -> Result<LinearizedGroup<Q>> {
    let SymmetryGroup::Permutation(g) = &m.group else {
        return Err(Error::Unsupported("exact linearization needs a permutation group".into()));
    };
    let names = |x: usize| m.testspace.name(x).to_string();
    let generators = g
        .generators
        .iter()
        .map(|p| linearize_permutation(e, p, &names))
        .collect::<Result<Vec<_>>>()?;
    let elements = if enumerate {
        Some(
            g.elements(m.num_outcomes())?
                .iter()
                .map(|p| linearize_permutation(e, p, &names))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(LinearizedGroup { generators, elements })
}

/// Float linearization: the stored actions of a topological group, or the
/// permutation matrices of a finite one.
pub fn linearize_group_float(m: &Model, e: &OrderUnitSpace<f64>) -> Result<LinearizedGroup<f64>> {
    match &m.group {
        SymmetryGroup::Linear(l) => Ok(LinearizedGroup {
            generators: l.actions.clone(),
            elements: None,
        }),
        SymmetryGroup::Permutation(g) => {
            let names = |x: usize| m.testspace.name(x).to_string();
            let generators = g
                .generators
                .iter()
                .map(|p| linearize_permutation(e, p, &names))
                .collect::<Result<Vec<_>>>()?;
            Ok(LinearizedGroup {
                generators,
                elements: None,
            })
        }
    }
}

/// A vector rendered entrywise.
pub fn render_vector<F: Field>(v: &Vector<F>) -> Vec<String> {
    v.iter().map(|c| c.render()).collect()
}

pub fn render_matrix<F: Field>(m: &Mat<F>) -> Vec<Vec<String>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].render()).collect())
        .collect()
}

/// Float vector from plain values.
pub fn fvec(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtins::{builtin, BUILTIN_NAMES};
    use crate::model::TestSpace;
    use crate::scalar::{q, qi};
    use proptest::prelude::*;

    fn qv(v: &[i64]) -> Vector<Q> {
        Vector::from_vec(v.iter().map(|&x| qi(x)).collect())
    }

    #[test]
    fn classical_trit_is_the_orthant() {
        let m = builtin("classical:3").unwrap();
        let e = build_effect_space(&m).unwrap();
        let e = e.exact().unwrap();
        assert_eq!(e.dim, 3);
        assert_eq!(e.unit, qv(&[1, 1, 1]));
        assert_eq!(e.cone_generators, vec![qv(&[1, 0, 0]), qv(&[0, 1, 0]), qv(&[0, 0, 1])]);
        assert!(e.cone_contains(&qv(&[0, 0, 0])).unwrap());
        assert!(!e.cone_contains(&qv(&[1, -1, 0])).unwrap());
    }

    #[test]
    fn squit_outcome_vectors() {
        // states (1,1), (1,0), (0,1) are independent; coordinates are
        // evaluations on them
        let e = build_effect_space(&builtin("squit").unwrap()).unwrap();
        let e = e.exact().unwrap();
        assert_eq!(e.dim, 3);
        assert_eq!(e.outcome_vectors[0], qv(&[1, 1, 0]));
        assert_eq!(e.outcome_vectors[1], qv(&[0, 0, 1]));
        assert_eq!(e.outcome_vectors[2], qv(&[1, 0, 1]));
        assert_eq!(e.outcome_vectors[3], qv(&[0, 1, 0]));
        assert_eq!(e.unit, qv(&[1, 1, 1]));
    }

    #[test]
    fn qubit_unit_is_the_identity_matrix() {
        let e = build_effect_space(&builtin("qubit:complex").unwrap()).unwrap();
        let e = e.float().unwrap();
        assert_eq!(e.dim, 4);
        let ops = e.operators.as_ref().unwrap();
        let id = ops.matrix(&e.unit);
        assert!((id - crate::model::quantum::CMat::identity(2, 2)).norm() < 1e-12);
        // diag(0.7, 0.3) = 0.5 I + 0.2 σz
        assert!(e.cone_contains(&fvec(&[0.5, 0.0, 0.0, 0.2])).unwrap());
        assert!(!e.cone_contains(&fvec(&[0.5, 0.0, 0.0, 0.7])).unwrap());
        assert!(e.cone_contains(&fvec(&[0.5, 0.0])).is_err());
    }

    #[test]
    fn copies_are_identified() {
        let e = build_effect_space(&builtin("classical-copies:2:2").unwrap()).unwrap();
        let e = e.exact().unwrap();
        assert_eq!(e.dim, 2);
        assert_eq!(e.identifications, vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(e.cone_generators.len(), 2);
    }

    #[test]
    fn collapse_linearizes_to_a_zero_one_matrix() {
        let a = builtin("classical:4").unwrap();
        let b = builtin("classical:2").unwrap();
        let (ea, eb) = (build_effect_space(&a).unwrap(), build_effect_space(&b).unwrap());
        let f = MorphismData::from_names(
            &a.testspace,
            b.testspace.clone(),
            &[("a0", "a0"), ("a1", "a1"), ("a2", "a0"), ("a3", "a1")],
        )
        .unwrap();
        let m = linearize_morphism(&f, &a, ea.exact().unwrap(), eb.exact().unwrap()).unwrap();
        let expected = Mat::from_row_slice(2, 4, &[qi(1), qi(0), qi(1), qi(0), qi(0), qi(1), qi(0), qi(1)]);
        assert_eq!(m, expected);
    }

    #[test]
    fn identity_morphism_is_identity() {
        let a = builtin("squit").unwrap();
        let ea = build_effect_space(&a).unwrap();
        let e = ea.exact().unwrap();
        let m = linearize_morphism(&MorphismData::identity(&a), &a, e, e).unwrap();
        assert_eq!(m, linalg::identity(3));
    }

    #[test]
    fn inconsistent_extension_is_reported() {
        // a map that sends a dependent outcome somewhere incompatible
        let a = builtin("squit").unwrap();
        let e = build_effect_space(&a).unwrap();
        let e = e.exact().unwrap();
        let target = TestSpace::from_names(&["x0", "x1", "y0", "y1"], &[&["x0", "x1"], &["y0", "y1"]]).unwrap();
        let f = MorphismData {
            target,
            phi: vec![0, 1, 2, 2],
            psi: None,
        };
        assert!(matches!(linearize_morphism(&f, &a, e, e), Err(Error::InconsistentExtension(_))));
    }

    #[test]
    fn automorphisms_fix_the_unit_and_permute_generators() {
        for name in ["classical:3", "squit", "classical-copies:2:2", "bitsum"] {
            let m = builtin(name).unwrap();
            let e = build_effect_space(&m).unwrap();
            let e = e.exact().unwrap();
            let g = linearize_group_exact(&m, e, true).unwrap();
            for mg in g.elements.as_ref().unwrap() {
                assert_eq!(linalg::mat_vec(mg, &e.unit), e.unit);
                for c in &e.cone_generators {
                    let img = linalg::mat_vec(mg, c);
                    assert!(e.cone_generators.contains(&img), "{name}");
                }
            }
        }
    }

    #[test]
    fn linearization_is_a_homomorphism() {
        let m = builtin("squit").unwrap();
        let e = build_effect_space(&m).unwrap();
        let e = e.exact().unwrap();
        let names = |x: usize| x.to_string();
        let perms = m.group_elements().unwrap().unwrap();
        for g in &perms {
            for h in &perms {
                let lhs = linearize_permutation(e, &g.compose(h), &names).unwrap();
                let rhs = linalg::mat_mul(
                    &linearize_permutation(e, g, &names).unwrap(),
                    &linearize_permutation(e, h, &names).unwrap(),
                );
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn quantum_tests_sum_to_the_unit() {
        for name in BUILTIN_NAMES {
            let m = builtin(name).unwrap();
            let e = build_effect_space(&m).unwrap().to_float();
            for t in &m.testspace.tests {
                let s = t.iter().fold(DVector::zeros(e.dim), |acc, &x| acc + &e.outcome_vectors[x]);
                assert!((s - &e.unit).norm() < 1e-12, "{name}");
            }
        }
    }

    #[test]
    fn state_functionals_evaluate_correctly() {
        for name in ["classical:4", "squit", "bitsum"] {
            let m = builtin(name).unwrap();
            let e = build_effect_space(&m).unwrap();
            let e = e.exact().unwrap();
            let mid = crate::model::State(
                (0..m.num_outcomes())
                    .map(|x| {
                        let vs = m.states.vertices().unwrap();
                        vs.iter().map(|s| s.0[x].clone()).sum::<Q>() / qi(vs.len() as i64)
                    })
                    .collect(),
            );
            for s in m.states.vertices().unwrap().iter().chain([&mid]) {
                let f = e.state_functional(s).unwrap();
                assert_eq!(linalg::dot(&f, &e.unit), qi(1));
                for (x, v) in e.outcome_vectors.iter().enumerate() {
                    assert_eq!(linalg::dot(&f, v), s.0[x]);
                    assert!(linalg::dot(&f, v) >= q(0, 1));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn unit_consistency_on_classical(n in 2usize..7) {
            let m = builtin(&format!("classical:{n}")).unwrap();
            let e = build_effect_space(&m).unwrap();
            let e = e.exact().unwrap();
            for t in &m.testspace.tests {
                let s = t.iter().fold(Vector::from_element(e.dim, qi(0)), |acc, &x| linalg::vec_add(&acc, &e.outcome_vectors[x]));
                prop_assert_eq!(&s, &e.unit);
            }
            prop_assert_eq!(e.generator_rank(), e.dim);
        }
    }
}
