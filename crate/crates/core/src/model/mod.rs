//! Finite test spaces, states, symmetry groups and probabilistic models.

pub mod builtins;
pub mod group;
pub mod io;
pub mod morphism;
pub mod quantum;

use std::collections::{BTreeSet, HashMap, HashSet};

use num::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation};
use crate::scalar::{render_rational, Q};
use crate::verdict::Tri;

pub use group::{LinearGroup, Perm, PermutationGroup, SymmetryGroup, DEFAULT_CAP};
pub use quantum::{HilbertField, OperatorBasis, QuantumSystem};

const QUANTUM_TOL: f64 = 1e-9;

/// Outcomes `X` and the covering family of tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSpace {
    pub outcomes: Vec<String>,
    /// Each test as a sorted list of outcome indices.
    pub tests: Vec<Vec<usize>>,
}

impl TestSpace {
    pub fn new(outcomes: Vec<String>, tests: Vec<Vec<usize>>) -> Self {
        let tests = tests
            .into_iter()
            .map(|mut t| {
                t.sort_unstable();
                t
            })
            .collect();
        TestSpace { outcomes, tests }
    }

    /// Builds a test space from outcome names.
    pub fn from_names(outcomes: &[&str], tests: &[&[&str]]) -> Result<Self> {
        let outcomes: Vec<String> = outcomes.iter().map(|s| s.to_string()).collect();
        let index: HashMap<&str, usize> = outcomes
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let tests = tests
            .iter()
            .map(|t| {
                t.iter()
                    .map(|n| index.get(n).copied().ok_or_else(|| Error::UnknownOutcome(n.to_string())))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TestSpace::new(outcomes, tests))
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.outcomes
            .iter()
            .position(|o| o == name)
            .ok_or_else(|| Error::UnknownOutcome(name.to_string()))
    }

    pub fn name(&self, i: usize) -> &str {
        &self.outcomes[i]
    }

    /// Common test size, or the list of sizes when they differ.
    pub fn rank(&self) -> Result<usize> {
        let sizes: BTreeSet<usize> = self.tests.iter().map(|t| t.len()).collect();
        match sizes.len() {
            1 => Ok(*sizes.iter().next().unwrap()),
            _ => Err(Error::NonUniformRank(self.tests.iter().map(|t| t.len()).collect())),
        }
    }

    pub fn test_index(&self, sorted: &[usize]) -> Option<usize> {
        self.tests.iter().position(|t| t == sorted)
    }

    /// Distinct outcomes sharing some test.
    pub fn distinguishable(&self, x: usize, y: usize) -> bool {
        x != y && self.tests.iter().any(|t| t.contains(&x) && t.contains(&y))
    }

    /// All ordered distinguishable pairs, in lexicographic order.
    pub fn perp_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        (0..n)
            .flat_map(|x| (0..n).map(move |y| (x, y)))
            .filter(|&(x, y)| self.distinguishable(x, y))
            .collect()
    }

    /// True when `p` carries every test onto a test.
    pub fn preserved_by(&self, p: &Perm) -> bool {
        self.tests
            .iter()
            .all(|t| self.test_index(&p.image_set(t)).is_some())
    }
}

/// A probability weight on outcomes, indexed like the outcome list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State(pub Vec<Q>);

impl State {
    pub fn value(&self, x: usize) -> &Q {
        &self.0[x]
    }

    /// `(g α)(x) = α(g⁻¹ x)`.
    pub fn act(&self, g: &Perm) -> State {
        let inv = g.inverse();
        State((0..self.0.len()).map(|x| self.0[inv.apply(x)].clone()).collect())
    }

    pub fn render(&self) -> Vec<String> {
        self.0.iter().map(render_rational).collect()
    }
}

/// Description of the state space `Ω`.
#[derive(Debug, Clone)]
pub enum StateSpace {
    /// Vertex description; every vertex is a [`State`].
    Polytope(Vec<State>),
    /// Density matrices; outcomes are rank-one projections.
    Quantum(QuantumSystem),
}

impl StateSpace {
    pub fn kind(&self) -> &'static str {
        match self {
            StateSpace::Polytope(_) => "polytope",
            StateSpace::Quantum(_) => "quantum",
        }
    }

    pub fn vertices(&self) -> Option<&[State]> {
        match self {
            StateSpace::Polytope(v) => Some(v),
            StateSpace::Quantum(_) => None,
        }
    }

    pub fn quantum(&self) -> Option<&QuantumSystem> {
        match self {
            StateSpace::Quantum(q) => Some(q),
            StateSpace::Polytope(_) => None,
        }
    }
}

/// A probabilistic model `(X, 𝒜, Ω, G)`.
#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub testspace: TestSpace,
    pub states: StateSpace,
    pub group: SymmetryGroup,
    /// Set for the shipped models whose analytic properties are known.
    pub builtin: bool,
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, code: &str, message: String) {
        self.violations.push(Violation {
            code: code.to_string(),
            message,
        });
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.violations {
            writeln!(f, "{} violated: {}", v.code, v.message)?;
        }
        Ok(())
    }
}

/// Checks every structural invariant and lists the failures.
pub fn validate_model(m: &Model) -> ValidationReport {
    let mut r = ValidationReport::default();
    let ts = &m.testspace;
    let n = ts.len();

    let mut seen = HashSet::new();
    for o in &ts.outcomes {
        if !seen.insert(o) {
            r.push("outcome-uniqueness", format!("outcome `{o}` listed twice"));
        }
    }
    let mut covered = vec![false; n];
    for (k, t) in ts.tests.iter().enumerate() {
        if t.is_empty() {
            r.push("test-nonempty", format!("test #{k} is empty"));
        }
        let distinct: BTreeSet<_> = t.iter().collect();
        if distinct.len() != t.len() {
            r.push("test-set", format!("test #{k} repeats an outcome"));
        }
        for &x in t {
            if x >= n {
                r.push("test-outcomes", format!("test #{k} names an unknown outcome"));
            } else {
                covered[x] = true;
            }
        }
    }
    for (x, c) in covered.iter().enumerate() {
        if !c {
            r.push("test-covering", format!("outcome `{}` lies in no test", ts.name(x)));
        }
    }
    if ts.tests.is_empty() {
        r.push("test-covering", "no tests".into());
    }
    if let Err(Error::NonUniformRank(sizes)) = ts.rank() {
        r.push("rank-uniformity", format!("test sizes differ: {sizes:?}"));
    }

    match &m.group {
        SymmetryGroup::Permutation(g) => validate_generators(&mut r, ts, &g.generators, "generator"),
        SymmetryGroup::Linear(l) => {
            if let Some(s) = &l.sample_symmetries {
                validate_generators(&mut r, ts, &s.generators, "sample symmetry");
            }
        }
    }

    match &m.states {
        StateSpace::Polytope(vertices) => {
            if vertices.is_empty() {
                r.push("state-space-nonempty", "no extreme states".into());
            }
            for (i, s) in vertices.iter().enumerate() {
                if s.0.len() != n {
                    r.push(
                        "state-shape",
                        format!("state #{i} has {} values for {n} outcomes", s.0.len()),
                    );
                    continue;
                }
                for (x, v) in s.0.iter().enumerate() {
                    if v < &Q::zero() || v > &Q::one() {
                        r.push(
                            "state-range",
                            format!("state #{i} gives `{}` value {}", ts.name(x), render_rational(v)),
                        );
                    }
                }
                for (k, t) in ts.tests.iter().enumerate() {
                    if t.iter().any(|&x| x >= n) {
                        continue;
                    }
                    let sum: Q = t.iter().map(|&x| s.0[x].clone()).sum();
                    if !sum.is_one() {
                        r.push(
                            "state-normalization",
                            format!("state #{i} sums to {} on test #{k}", render_rational(&sum)),
                        );
                    }
                }
            }
            if let SymmetryGroup::Permutation(g) = &m.group {
                let set: HashSet<&State> = vertices.iter().collect();
                for (gi, p) in g.generators.iter().enumerate() {
                    if p.len() != n || !p.is_bijection() {
                        continue;
                    }
                    for (i, s) in vertices.iter().enumerate() {
                        if s.0.len() == n && !set.contains(&s.act(p)) {
                            r.push(
                                "state-space-invariance",
                                format!("generator #{gi} moves state #{i} off the vertex list"),
                            );
                        }
                    }
                }
            }
            if let SymmetryGroup::Linear(_) = &m.group {
                r.push(
                    "group-kind",
                    "polytope models need a permutation group".into(),
                );
            }
        }
        StateSpace::Quantum(q) => {
            if q.vectors.len() != n {
                r.push(
                    "quantum-outcomes",
                    format!("{} projections for {n} outcomes", q.vectors.len()),
                );
            } else {
                for (k, t) in ts.tests.iter().enumerate() {
                    if t.iter().any(|&x| x >= n) {
                        continue;
                    }
                    let d = q.dim();
                    let mut sum = quantum::CMat::zeros(d, d);
                    for &x in t {
                        sum += q.projection(x);
                    }
                    if (sum - quantum::CMat::identity(d, d)).norm() > QUANTUM_TOL {
                        r.push(
                            "state-normalization",
                            format!("projections of test #{k} do not resolve the identity"),
                        );
                    }
                }
            }
            if let SymmetryGroup::Linear(l) = &m.group {
                let dim = q.basis.len();
                for (i, a) in l.actions.iter().enumerate() {
                    if a.shape() != (dim, dim) {
                        r.push("generator-shape", format!("action #{i} has the wrong shape"));
                    }
                }
                for (i, u) in l.unitaries.iter().enumerate() {
                    let d = q.dim();
                    if u.shape() != (d, d)
                        || (u * u.adjoint() - quantum::CMat::identity(d, d)).norm() > QUANTUM_TOL
                    {
                        r.push("generator-unitary", format!("generator #{i} is not unitary"));
                    }
                }
            }
        }
    }
    r
}

fn validate_generators(r: &mut ValidationReport, ts: &TestSpace, gens: &[Perm], what: &str) {
    let n = ts.len();
    for (gi, p) in gens.iter().enumerate() {
        if p.len() != n || !p.is_bijection() {
            r.push("generator-bijection", format!("{what} #{gi} is not a bijection of X"));
            continue;
        }
        if ts.tests.iter().flatten().any(|&x| x >= n) {
            continue;
        }
        if !ts.preserved_by(p) {
            r.push("generator-tests", format!("{what} #{gi} maps a test off the test family"));
        }
        if !ts.preserved_by(&p.inverse()) {
            r.push(
                "generator-tests",
                format!("inverse of {what} #{gi} maps a test off the test family"),
            );
        }
    }
}

impl Model {
    /// Validates and returns the model, failing on the first class of
    /// violation.
    pub fn new(name: impl Into<String>, testspace: TestSpace, states: StateSpace, group: SymmetryGroup) -> Result<Self> {
        let m = Model {
            name: name.into(),
            testspace,
            states,
            group,
            builtin: false,
        };
        let report = validate_model(&m);
        if report.has("rank-uniformity") {
            return Err(m.testspace.rank().unwrap_err());
        }
        if !report.is_valid() {
            return Err(Error::InvalidModel(report.to_string().trim_end().to_string()));
        }
        Ok(m)
    }

    /// Assembles a model without validating it.
    pub fn unchecked(name: impl Into<String>, testspace: TestSpace, states: StateSpace, group: SymmetryGroup) -> Self {
        Model {
            name: name.into(),
            testspace,
            states,
            group,
            builtin: false,
        }
    }

    pub fn rank(&self) -> Result<usize> {
        self.testspace.rank()
    }

    pub fn num_outcomes(&self) -> usize {
        self.testspace.len()
    }

    pub fn is_quantum(&self) -> bool {
        matches!(self.states, StateSpace::Quantum(_))
    }

    pub fn distinguishable(&self, x: &str, y: &str) -> Result<bool> {
        let (i, j) = (self.testspace.index_of(x)?, self.testspace.index_of(y)?);
        Ok(self.testspace.distinguishable(i, j))
    }

    /// Group elements, when the group is a finite permutation group.
    pub fn group_elements(&self) -> Result<Option<Vec<Perm>>> {
        match &self.group {
            SymmetryGroup::Permutation(g) => g.elements(self.num_outcomes()).map(Some),
            SymmetryGroup::Linear(_) => Ok(None),
        }
    }
}

/// Vertices that are not convex combinations of the others.
pub fn extreme_states(vertices: &[State]) -> Vec<usize> {
    (0..vertices.len())
        .filter(|&i| {
            let others: Vec<&State> = vertices
                .iter()
                .enumerate()
                .filter(|&(j, s)| j != i && s != &vertices[i])
                .map(|(_, s)| s)
                .collect();
            if others.is_empty() {
                return true;
            }
            // first occurrence of a duplicated vertex stays
            if vertices[..i].contains(&vertices[i]) {
                return false;
            }
            let mut lp = LinearProgram::new(others.len());
            let len = vertices[i].0.len();
            for x in 0..len {
                let coeffs = others
                    .iter()
                    .enumerate()
                    .map(|(k, s)| (k, s.0[x].clone()))
                    .collect();
                lp.add_constraint(coeffs, Relation::Eq, vertices[i].0[x].clone());
            }
            let ones = (0..others.len()).map(|k| (k, Q::one())).collect();
            lp.add_constraint(ones, Relation::Eq, Q::one());
            !lp.solve().is_feasible()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bisymmetry {
    pub pure_state_transitive: Tri,
    pub test_transitive: Tri,
    pub pair_transitive: Tri,
    pub fully_bisymmetric: Tri,
    /// Number of orbits on outcomes, when computable.
    pub outcome_orbits: Option<usize>,
}

/// Orbit counts for pure states, tests and distinguishable pairs, and the
/// full bijection-extension property.
pub fn check_bisymmetry(m: &Model) -> Result<Bisymmetry> {
    let ts = &m.testspace;
    let outcome_orbits = m
        .group
        .outcome_action()
        .map(|g| g.outcome_orbits(ts.len()).len());
    let (SymmetryGroup::Permutation(_), StateSpace::Polytope(vertices)) = (&m.group, &m.states)
    else {
        // Unitaries act transitively on rank-one projections, on orthonormal
        // frames and on ordered orthogonal pairs, and any frame bijection
        // extends to a unitary.
        let analytic = if m.builtin && m.is_quantum() {
            Tri::Yes
        } else {
            Tri::Unknown
        };
        return Ok(Bisymmetry {
            pure_state_transitive: analytic,
            test_transitive: analytic,
            pair_transitive: analytic,
            fully_bisymmetric: analytic,
            outcome_orbits,
        });
    };
    let elements = m.group_elements()?.expect("permutation group");

    let extreme: Vec<&State> = extreme_states(vertices).into_iter().map(|i| &vertices[i]).collect();
    let pure = match extreme.first() {
        None => false,
        Some(s0) => {
            let orbit: HashSet<State> = elements.iter().map(|g| s0.act(g)).collect();
            extreme.iter().all(|s| orbit.contains(*s))
        }
    };

    let tests = match ts.tests.first() {
        None => false,
        Some(t0) => {
            let orbit: HashSet<Vec<usize>> = elements.iter().map(|g| g.image_set(t0)).collect();
            orbit.len() == ts.tests.len()
        }
    };

    let pairs = ts.perp_pairs();
    let pair = match pairs.first() {
        None => true,
        Some(&(x, y)) => {
            let orbit: HashSet<(usize, usize)> =
                elements.iter().map(|g| (g.apply(x), g.apply(y))).collect();
            orbit.len() == pairs.len()
        }
    };

    let rank = ts.rank()?;
    let mut realized: HashSet<(usize, Vec<usize>)> = HashSet::new();
    for g in &elements {
        for (k, t) in ts.tests.iter().enumerate() {
            realized.insert((k, t.iter().map(|&x| g.apply(x)).collect()));
        }
    }
    let factorial: usize = (1..=rank).product();
    let needed = ts.tests.len() * ts.tests.len() * factorial;
    let full = realized.len() == needed;

    Ok(Bisymmetry {
        pure_state_transitive: pure.into(),
        test_transitive: tests.into(),
        pair_transitive: pair.into(),
        fully_bisymmetric: full.into(),
        outcome_orbits,
    })
}

/// Every outcome has probability one in exactly one state.
pub fn is_sharp(m: &Model) -> bool {
    match &m.states {
        StateSpace::Polytope(vertices) => (0..m.num_outcomes()).all(|x| {
            let face: HashSet<&State> = vertices.iter().filter(|s| s.0[x].is_one()).collect();
            face.len() == 1
        }),
        // the only density matrix with tr(ρP) = 1 for a rank-one P is P
        StateSpace::Quantum(_) => true,
    }
}
