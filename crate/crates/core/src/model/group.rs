//! Symmetry groups acting on outcomes.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::quantum::CMat;

pub const DEFAULT_CAP: usize = 1_000_000;

/// A bijection of `{0, .., n-1}`, stored as its image list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm(pub Vec<usize>);

impl Perm {
    pub fn identity(n: usize) -> Self {
        Perm((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn is_bijection(&self) -> bool {
        let n = self.0.len();
        let mut seen = vec![false; n];
        self.0.iter().all(|&j| j < n && !std::mem::replace(&mut seen[j], true))
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm(other.0.iter().map(|&j| self.0[j]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Perm(inv)
    }

    /// Image of a set, sorted.
    pub fn image_set(&self, set: &[usize]) -> Vec<usize> {
        let mut v: Vec<usize> = set.iter().map(|&i| self.0[i]).collect();
        v.sort_unstable();
        v
    }
}

/// Finite group generated by outcome permutations.
#[derive(Debug, Clone)]
pub struct PermutationGroup {
    pub generators: Vec<Perm>,
    pub cap: usize,
}

impl PermutationGroup {
    pub fn new(generators: Vec<Perm>, cap: usize) -> Self {
        PermutationGroup { generators, cap }
    }

    /// All group elements, identity first, in breadth-first order over the
    /// generators.
    pub fn elements(&self, degree: usize) -> Result<Vec<Perm>> {
        let id = Perm::identity(degree);
        let mut seen: HashSet<Perm> = HashSet::from([id.clone()]);
        let mut order = vec![id.clone()];
        let mut queue = VecDeque::from([id]);
        while let Some(p) = queue.pop_front() {
            for g in &self.generators {
                let q = g.compose(&p);
                if seen.insert(q.clone()) {
                    if seen.len() > self.cap {
                        return Err(Error::CapExceeded { cap: self.cap });
                    }
                    order.push(q.clone());
                    queue.push_back(q);
                }
            }
        }
        Ok(order)
    }

    /// Orbits of an action given on generators as point maps. Each orbit is
    /// sorted; orbits are sorted by their least element.
    pub fn orbits_of<F>(&self, points: usize, act: F) -> Vec<Vec<usize>>
    where
        F: Fn(&Perm, usize) -> usize,
    {
        let mut parent: Vec<usize> = (0..points).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            let mut j = i;
            while p[j] != r {
                let next = p[j];
                p[j] = r;
                j = next;
            }
            r
        }
        for g in &self.generators {
            for i in 0..points {
                let j = act(g, i);
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..points {
            let r = find(&mut parent, i);
            classes.entry(r).or_default().push(i);
        }
        classes.into_values().collect()
    }

    /// Orbits on outcomes.
    pub fn outcome_orbits(&self, degree: usize) -> Vec<Vec<usize>> {
        self.orbits_of(degree, |g, i| g.apply(i))
    }

    pub fn orbit_partition_set(orbits: &[Vec<usize>]) -> BTreeSet<Vec<usize>> {
        orbits.iter().cloned().collect()
    }
}

/// Group given by invertible linear actions on the effect space
/// (topological generators of a continuous group).
#[derive(Debug, Clone)]
pub struct LinearGroup {
    pub actions: Vec<DMatrix<f64>>,
    /// Unitaries the actions come from, when the model is quantum.
    pub unitaries: Vec<CMat>,
    /// Seed used to draw pseudo-random generators, echoed into reports.
    pub seed: Option<u64>,
    /// A finite subgroup that permutes the sampled outcomes, if known.
    pub sample_symmetries: Option<PermutationGroup>,
}

#[derive(Debug, Clone)]
pub enum SymmetryGroup {
    Permutation(PermutationGroup),
    Linear(LinearGroup),
}

impl SymmetryGroup {
    pub fn kind(&self) -> &'static str {
        match self {
            SymmetryGroup::Permutation(_) => "permutation",
            SymmetryGroup::Linear(_) => "topological",
        }
    }

    pub fn as_permutation(&self) -> Option<&PermutationGroup> {
        match self {
            SymmetryGroup::Permutation(g) => Some(g),
            SymmetryGroup::Linear(_) => None,
        }
    }

    /// A permutation group acting on the outcomes: the group itself, or the
    /// sample symmetries of a linear group.
    pub fn outcome_action(&self) -> Option<&PermutationGroup> {
        match self {
            SymmetryGroup::Permutation(g) => Some(g),
            SymmetryGroup::Linear(l) => l.sample_symmetries.as_ref(),
        }
    }
}
