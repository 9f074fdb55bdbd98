//! Morphisms between models and image models.

use std::collections::{BTreeSet, HashSet};

use nalgebra::DVector;
use num::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lp::{LinearProgram, Relation};
use crate::scalar::Q;

use super::quantum::QuantumSystem;
use super::{extreme_states, Model, Perm, PermutationGroup, State, StateSpace, SymmetryGroup, TestSpace};

/// Largest vertex list for which image polytopes are enumerated.
pub const MAX_IMAGE_VERTICES: usize = 16;

/// An outcome map onto a target test space, with optional images of the
/// source generators.
#[derive(Debug, Clone)]
pub struct MorphismData {
    pub target: TestSpace,
    /// `phi[x]` is the target outcome of source outcome `x`.
    pub phi: Vec<usize>,
    /// `psi[i]` is the image of source generator `i`; induced from `phi`
    /// when absent.
    pub psi: Option<Vec<Perm>>,
}

impl MorphismData {
    pub fn identity(m: &Model) -> Self {
        MorphismData {
            target: m.testspace.clone(),
            phi: (0..m.num_outcomes()).collect(),
            psi: None,
        }
    }

    /// Builds the map from outcome names.
    pub fn from_names(source: &TestSpace, target: TestSpace, pairs: &[(&str, &str)]) -> Result<Self> {
        let mut phi = vec![usize::MAX; source.len()];
        for (x, y) in pairs {
            phi[source.index_of(x)?] = target.index_of(y)?;
        }
        if let Some(x) = phi.iter().position(|&y| y == usize::MAX) {
            return Err(Error::InvalidModel(format!("outcome `{}` is not mapped", source.name(x))));
        }
        Ok(MorphismData { target, phi, psi: None })
    }

    pub fn is_injective(&self) -> bool {
        self.phi.iter().collect::<HashSet<_>>().len() == self.phi.len()
    }

    fn check_shape(&self, m: &Model) -> Result<()> {
        if self.phi.len() != m.num_outcomes() {
            return Err(Error::DimensionMismatch {
                expected: m.num_outcomes(),
                got: self.phi.len(),
            });
        }
        if self.phi.iter().any(|&y| y >= self.target.len()) {
            return Err(Error::InvalidModel("outcome map leaves the target".into()));
        }
        let hit: HashSet<usize> = self.phi.iter().copied().collect();
        if hit.len() != self.target.len() {
            let missing = (0..self.target.len()).find(|y| !hit.contains(y)).unwrap();
            return Err(Error::NotSurjective(format!(
                "`{}` has no preimage",
                self.target.name(missing)
            )));
        }
        let images: HashSet<Vec<usize>> = m
            .testspace
            .tests
            .iter()
            .map(|t| self.image_of(t))
            .collect();
        for t in &self.target.tests {
            if !images.contains(t) {
                return Err(Error::InvalidModel(
                    "a target test is not the image of a source test".into(),
                ));
            }
        }
        Ok(())
    }

    fn image_of(&self, set: &[usize]) -> Vec<usize> {
        set.iter()
            .map(|&x| self.phi[x])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Generator images, checked or induced through `phi(g x) = psi(g) phi(x)`.
    pub fn group_images(&self, generators: &[Perm]) -> Result<Vec<Perm>> {
        let ny = self.target.len();
        match &self.psi {
            Some(psi) => {
                if psi.len() != generators.len() {
                    return Err(Error::DimensionMismatch {
                        expected: generators.len(),
                        got: psi.len(),
                    });
                }
                for (i, (g, h)) in generators.iter().zip(psi).enumerate() {
                    if h.len() != ny || !h.is_bijection() {
                        return Err(Error::InvalidModel(format!("image of generator #{i} is not a bijection")));
                    }
                    if (0..self.phi.len()).any(|x| self.phi[g.apply(x)] != h.apply(self.phi[x])) {
                        return Err(Error::InvalidModel(format!("equivariance fails for generator #{i}")));
                    }
                }
                Ok(psi.clone())
            }
            None => generators
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let mut img = vec![usize::MAX; ny];
                    for x in 0..self.phi.len() {
                        let (y, gy) = (self.phi[x], self.phi[g.apply(x)]);
                        if img[y] != usize::MAX && img[y] != gy {
                            return Err(Error::InvalidModel(format!(
                                "generator #{i} does not respect the fibres of the outcome map"
                            )));
                        }
                        img[y] = gy;
                    }
                    let p = Perm(img);
                    if !p.is_bijection() {
                        return Err(Error::InvalidModel(format!("generator #{i} induces no bijection")));
                    }
                    Ok(p)
                })
                .collect(),
        }
    }

    /// `φ*β = β ∘ φ`.
    pub fn pullback(&self, beta: &State) -> State {
        State(self.phi.iter().map(|&y| beta.0[y].clone()).collect())
    }
}

/// Exact convex-hull membership of a state.
pub fn state_in_polytope(vertices: &[State], s: &State) -> bool {
    if vertices.is_empty() {
        return false;
    }
    let mut lp = LinearProgram::new(vertices.len());
    for x in 0..s.0.len() {
        let coeffs = vertices.iter().enumerate().map(|(k, v)| (k, v.0[x].clone())).collect();
        lp.add_constraint(coeffs, Relation::Eq, s.0[x].clone());
    }
    lp.add_constraint((0..vertices.len()).map(|k| (k, Q::one())).collect(), Relation::Eq, Q::one());
    lp.solve().is_feasible()
}

/// The image model `(Y, ℬ, Γ, H)` with `Γ = {β : φ*β ∈ Ω}`.
pub fn image_model(m: &Model, f: &MorphismData) -> Result<Model> {
    f.check_shape(m)?;
    let sample_gens = m
        .group
        .outcome_action()
        .map(|g| g.generators.clone())
        .unwrap_or_default();
    let psi = f.group_images(&sample_gens)?;
    let cap = m.group.outcome_action().map(|g| g.cap).unwrap_or(super::DEFAULT_CAP);
    let mut h: Vec<Perm> = Vec::new();
    for p in psi {
        if !p.is_identity() && !h.contains(&p) {
            h.push(p);
        }
    }
    let group = SymmetryGroup::Permutation(PermutationGroup::new(h, cap));
    let states = match &m.states {
        StateSpace::Polytope(vertices) => {
            let gamma = image_vertices(vertices, f)?;
            if gamma.is_empty() {
                return Err(Error::EmptyImage);
            }
            StateSpace::Polytope(gamma)
        }
        StateSpace::Quantum(q) => {
            if f.is_injective() {
                let vectors = (0..f.target.len())
                    .map(|y| q.vectors[f.phi.iter().position(|&v| v == y).unwrap()].clone())
                    .collect();
                let system = QuantumSystem {
                    basis: q.basis.clone(),
                    vectors,
                };
                let mut out = m.clone();
                out.testspace = f.target.clone();
                out.states = StateSpace::Quantum(system);
                if let SymmetryGroup::Linear(l) = &mut out.group {
                    l.sample_symmetries = group.as_permutation().cloned();
                }
                return Ok(out);
            }
            return match quantum_image_feasibility(q, &m.testspace, f) {
                ImageFeasibility::Empty => Err(Error::EmptyImage),
                ImageFeasibility::NonEmpty => Err(Error::Unsupported(
                    "non-empty image of a quantum model is not a polytope".into(),
                )),
                ImageFeasibility::Undecided => Err(Error::Unsupported(
                    "could not decide whether the quantum image is empty".into(),
                )),
            };
        }
    };
    let mut out = Model::unchecked(format!("image of {}", m.name), f.target.clone(), states, group);
    out.builtin = false;
    Ok(out)
}

/// Vertices of `{β : β ∘ φ ∈ conv(vertices), β normalized on ℬ}`, found as
/// basic feasible solutions over supports of the source vertices.
fn image_vertices(vertices: &[State], f: &MorphismData) -> Result<Vec<State>> {
    let nv = vertices.len();
    if nv > MAX_IMAGE_VERTICES {
        return Err(Error::Unsupported(format!(
            "image enumeration is limited to {MAX_IMAGE_VERTICES} vertices"
        )));
    }
    let nx = f.phi.len();
    let rep: Vec<usize> = (0..f.target.len())
        .map(|y| f.phi.iter().position(|&v| v == y).unwrap())
        .collect();
    // rows: Σμ = 1, fibre equalities, normalization on target tests
    let mut rows: Vec<(Vec<Q>, Q)> = vec![(vec![Q::one(); nv], Q::one())];
    for x in 0..nx {
        let r = rep[f.phi[x]];
        if r != x {
            let row = vertices.iter().map(|v| v.0[x].clone() - v.0[r].clone()).collect();
            rows.push((row, Q::zero()));
        }
    }
    for t in &f.target.tests {
        let row = vertices
            .iter()
            .map(|v| t.iter().map(|&y| v.0[rep[y]].clone()).sum())
            .collect();
        rows.push((row, Q::one()));
    }
    let a = Mat::from_fn(rows.len(), nv, |i, j| rows[i].0[j].clone());
    let b = Vector::from_fn(rows.len(), |i, _| rows[i].1.clone());

    let mut found: Vec<State> = Vec::new();
    for mask in 1u32..(1u32 << nv) {
        let support: Vec<usize> = (0..nv).filter(|&k| mask & (1 << k) != 0).collect();
        let sub = Mat::from_fn(a.nrows(), support.len(), |i, j| a[(i, support[j])].clone());
        if linalg::rank(&sub) < support.len() {
            continue;
        }
        let Some((mu, _)) = linalg::solve_affine(&sub, &b) else { continue };
        if mu.iter().any(|v| v <= &Q::zero()) {
            continue;
        }
        let beta = State(
            rep.iter()
                .map(|&r| support.iter().zip(mu.iter()).map(|(&k, w)| w * &vertices[k].0[r]).sum())
                .collect(),
        );
        if !found.contains(&beta) {
            found.push(beta);
        }
    }
    let keep = extreme_states(&found);
    Ok(keep.into_iter().map(|i| found[i].clone()).collect())
}

/// Outcome relabelling `σ: X_a → X_b` carrying tests onto tests and the
/// vertex set onto the vertex set.
pub fn polytope_isomorphism(a: &Model, b: &Model) -> Option<Perm> {
    let (StateSpace::Polytope(va), StateSpace::Polytope(vb)) = (&a.states, &b.states) else {
        return None;
    };
    let n = a.num_outcomes();
    if n != b.num_outcomes()
        || a.testspace.tests.len() != b.testspace.tests.len()
        || extreme_states(va).len() != extreme_states(vb).len()
    {
        return None;
    }
    let target_tests: HashSet<Vec<usize>> = b.testspace.tests.iter().cloned().collect();
    let target_vertices: HashSet<State> = extreme_states(vb).into_iter().map(|i| vb[i].clone()).collect();
    let source_vertices: Vec<State> = extreme_states(va).into_iter().map(|i| va[i].clone()).collect();
    let mut sigma = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn search(
        x: usize,
        sigma: &mut Vec<usize>,
        used: &mut Vec<bool>,
        a: &Model,
        tt: &HashSet<Vec<usize>>,
        sv: &[State],
        tv: &HashSet<State>,
    ) -> bool {
        let n = sigma.len();
        if x == n {
            let p = Perm(sigma.clone());
            return a.testspace.tests.iter().all(|t| tt.contains(&p.image_set(t)))
                && sv.iter().all(|s| tv.contains(&s.act(&p)));
        }
        for y in 0..n {
            if used[y] {
                continue;
            }
            sigma[x] = y;
            used[y] = true;
            if search(x + 1, sigma, used, a, tt, sv, tv) {
                return true;
            }
            used[y] = false;
        }
        sigma[x] = usize::MAX;
        false
    }
    if search(0, &mut sigma, &mut used, a, &target_tests, &source_vertices, &target_vertices) {
        Some(Perm(sigma))
    } else {
        None
    }
}

/// True when every image of a catalog model under `f` is isomorphic to a
/// catalog member (vacuously true when `f` produces no image).
pub fn check_image_closure(catalog: &[Model], f: &MorphismData) -> bool {
    catalog
        .iter()
        .filter(|m| m.num_outcomes() == f.phi.len())
        .filter_map(|m| image_model(m, f).ok())
        .all(|img| catalog.iter().any(|c| polytope_isomorphism(&img, c).is_some() || quantum_relabelling(&img, c)))
}

fn quantum_relabelling(a: &Model, b: &Model) -> bool {
    match (&a.states, &b.states) {
        (StateSpace::Quantum(qa), StateSpace::Quantum(qb)) => {
            qa.field() == qb.field()
                && qa.dim() == qb.dim()
                && a.testspace.tests.len() == b.testspace.tests.len()
                && a.num_outcomes() == b.num_outcomes()
        }
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageFeasibility {
    Empty,
    NonEmpty,
    Undecided,
}

/// Decides whether some density matrix pulls back along `f`: linear
/// conditions on `ρ` followed by a PSD check at the point nearest to the
/// maximally mixed state.
fn quantum_image_feasibility(q: &QuantumSystem, source: &TestSpace, f: &MorphismData) -> ImageFeasibility {
    let dim = q.basis.len();
    let d = q.dim() as f64;
    let gram = q.basis.trace_gram();
    let functional = |x: usize| -> DVector<f64> { &gram * q.outcome_coords(x) };
    let rep: Vec<usize> = (0..f.target.len())
        .map(|y| f.phi.iter().position(|&v| v == y).unwrap())
        .collect();
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut trace = DVector::zeros(dim);
    trace[0] = d;
    rows.push((trace, 1.0));
    for x in 0..source.len() {
        let r = rep[f.phi[x]];
        if r != x {
            rows.push((functional(x) - functional(r), 0.0));
        }
    }
    for t in &f.target.tests {
        let mut row = DVector::zeros(dim);
        for &y in t {
            row += functional(rep[y]);
        }
        rows.push((row, 1.0));
    }
    let a = Mat::from_fn(rows.len(), dim, |i, j| rows[i].0[j]);
    let b = Vector::from_fn(rows.len(), |i, _| rows[i].1);
    let Some((x0, null)) = linalg::solve_affine(&a, &b) else {
        return ImageFeasibility::Empty;
    };
    // nearest point of the affine set to the maximally mixed state
    let mut mixed = DVector::zeros(dim);
    mixed[0] = 1.0 / d;
    let mut point = x0.clone();
    if !null.is_empty() {
        let n = linalg::columns_to_mat(dim, &null);
        let delta = &mixed - &x0;
        if let Ok(coef) = n.clone().svd(true, true).solve(&delta, 1e-12) {
            point = &x0 + n * coef;
        }
    }
    if q.is_density(&point, 1e-9) {
        ImageFeasibility::NonEmpty
    } else {
        ImageFeasibility::Undecided
    }
}

/// One candidate outcome partition of a quantum model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionVerdict {
    pub blocks: Vec<Vec<String>>,
    pub image: ImageFeasibility,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantumImageSearch {
    pub model: String,
    pub partitions_examined: usize,
    pub invariant_non_injective: Vec<PartitionVerdict>,
    /// True when no invariant, non-injective outcome map has a non-empty image.
    pub no_nontrivial_images: bool,
}

/// Set partitions of `{0..n}` as restricted growth strings.
fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut a = vec![0usize; n];
    fn rec(i: usize, max: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == a.len() {
            out.push(a.clone());
            return;
        }
        for v in 0..=max + 1 {
            a[i] = v;
            rec(i + 1, max.max(v), a, out);
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    rec(1, 0, &mut a, &mut out);
    out
}

/// Exhausts every outcome map that is equivariant for the sample symmetries
/// and non-injective, over every admissible family of target tests.
pub fn quantum_image_search(m: &Model) -> Result<QuantumImageSearch> {
    let StateSpace::Quantum(q) = &m.states else {
        return Err(Error::Unsupported("quantum image search needs a quantum model".into()));
    };
    let n = m.num_outcomes();
    let gens = m
        .group
        .outcome_action()
        .map(|g| g.generators.clone())
        .unwrap_or_default();
    let partitions = set_partitions(n);
    let mut verdicts = Vec::new();
    for labels in &partitions {
        let blocks = 1 + labels.iter().copied().max().unwrap_or(0);
        if blocks == n {
            continue;
        }
        let f0 = MorphismData {
            target: TestSpace::new((0..blocks).map(|b| format!("b{b}")).collect(), Vec::new()),
            phi: labels.clone(),
            psi: None,
        };
        if f0.group_images(&gens).is_err() {
            continue;
        }
        let images: Vec<Vec<usize>> = m
            .testspace
            .tests
            .iter()
            .map(|t| f0.image_of(t))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut verdict = ImageFeasibility::Empty;
        for mask in 1u32..(1u32 << images.len()) {
            let chosen: Vec<Vec<usize>> = (0..images.len())
                .filter(|&k| mask & (1 << k) != 0)
                .map(|k| images[k].clone())
                .collect();
            let covered: HashSet<usize> = chosen.iter().flatten().copied().collect();
            if covered.len() != blocks {
                continue;
            }
            let f = MorphismData {
                target: TestSpace::new(f0.target.outcomes.clone(), chosen),
                ..f0.clone()
            };
            match quantum_image_feasibility(q, &m.testspace, &f) {
                ImageFeasibility::Empty => {}
                other => {
                    verdict = other;
                    if other == ImageFeasibility::NonEmpty {
                        break;
                    }
                }
            }
        }
        let mut named: Vec<Vec<String>> = vec![Vec::new(); blocks];
        for (x, &b) in labels.iter().enumerate() {
            named[b].push(m.testspace.name(x).to_string());
        }
        verdicts.push(PartitionVerdict {
            blocks: named,
            image: verdict,
        });
    }
    let none = verdicts.iter().all(|v| v.image == ImageFeasibility::Empty);
    Ok(QuantumImageSearch {
        model: m.name.clone(),
        partitions_examined: partitions.len(),
        invariant_non_injective: verdicts,
        no_nontrivial_images: none,
    })
}
