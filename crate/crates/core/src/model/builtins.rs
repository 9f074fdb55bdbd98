//! Shipped models, addressed by name (`classical:3`, `squit`, `qubit:complex`, ...).

use nalgebra::Complex;
use num::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Q;

use super::quantum::{self, basis_vector, fourier_vector, CMat, CVec, HilbertField, OperatorBasis, QuantumSystem};
use super::{LinearGroup, Model, Perm, PermutationGroup, State, StateSpace, SymmetryGroup, TestSpace, DEFAULT_CAP};

pub const DEFAULT_SEED: u64 = 42;

/// Number of pseudo-random unitaries used as topological generators.
pub const RANDOM_GENERATORS: usize = 2;

/// Every shipped model name, in a fixed order.
pub const BUILTIN_NAMES: &[&str] = &[
    "classical:2",
    "classical:3",
    "classical:4",
    "classical:5",
    "classical-cyclic:3",
    "classical-copies:2:2",
    "bitsum",
    "squit",
    "qubit:real",
    "qubit:complex",
    "qutrit:complex",
];

pub fn builtin(name: &str) -> Result<Model> {
    builtin_with(name, DEFAULT_SEED, DEFAULT_CAP)
}

pub fn builtin_with(name: &str, seed: u64, cap: usize) -> Result<Model> {
    let parts: Vec<&str> = name.split(':').collect();
    let arg = |i: usize| -> Result<usize> {
        parts
            .get(i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad built-in name `{name}`")))
    };
    let mut m = match parts[0] {
        "classical" => classical(arg(1)?, false, cap)?,
        "classical-cyclic" => classical(arg(1)?, true, cap)?,
        "classical-copies" => classical_copies(arg(1)?, arg(2)?, cap)?,
        "bitsum" => bitsum(cap),
        "squit" => squit(cap),
        "qubit" if parts.get(1) == Some(&"real") => qubit_real(seed, cap),
        "qubit" if parts.get(1) == Some(&"complex") => qubit_complex(seed, cap),
        "qutrit" if parts.get(1) == Some(&"complex") => qutrit_complex(seed, cap),
        _ => return Err(Error::Parse(format!("unknown built-in `{name}`"))),
    };
    m.name = name.to_string();
    m.builtin = true;
    Ok(m)
}

fn delta(n: usize, k: usize) -> State {
    State((0..n).map(|i| if i == k { Q::one() } else { Q::zero() }).collect())
}

fn cycle(n: usize) -> Perm {
    Perm((0..n).map(|i| (i + 1) % n).collect())
}

fn transposition(n: usize, a: usize, b: usize) -> Perm {
    let mut p = Perm::identity(n);
    p.0.swap(a, b);
    p
}

fn dedup(mut gens: Vec<Perm>) -> Vec<Perm> {
    let mut out: Vec<Perm> = Vec::new();
    gens.retain(|g| !g.is_identity());
    for g in gens {
        if !out.contains(&g) {
            out.push(g);
        }
    }
    out
}

fn permutation(gens: Vec<Perm>, cap: usize) -> SymmetryGroup {
    SymmetryGroup::Permutation(PermutationGroup::new(dedup(gens), cap))
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Single test of `n` outcomes with the simplex of states, under `S_n`
/// (or the cyclic group).
fn classical(n: usize, cyclic: bool, cap: usize) -> Result<Model> {
    if n < 2 {
        return Err(Error::Parse("classical models need at least 2 outcomes".into()));
    }
    let ts = TestSpace::new(names("a", n), vec![(0..n).collect()]);
    let states = StateSpace::Polytope((0..n).map(|k| delta(n, k)).collect());
    let gens = if cyclic {
        vec![cycle(n)]
    } else {
        vec![transposition(n, 0, 1), cycle(n)]
    };
    Ok(Model::unchecked("", ts, states, permutation(gens, cap)))
}

/// `k` copies of an `n`-outcome test that always agree: outcome `a(c n + i)`
/// is outcome `i` of copy `c`, and the states are the `n` perfectly
/// correlated point masses.
fn classical_copies(n: usize, k: usize, cap: usize) -> Result<Model> {
    if n < 2 || k < 1 {
        return Err(Error::Parse("classical-copies needs n >= 2, k >= 1".into()));
    }
    let size = n * k;
    let tests = (0..k).map(|c| (c * n..(c + 1) * n).collect()).collect();
    let ts = TestSpace::new(names("a", size), tests);
    let states = (0..n)
        .map(|i| {
            State(
                (0..size)
                    .map(|x| if x % n == i { Q::one() } else { Q::zero() })
                    .collect(),
            )
        })
        .collect();
    let lift = |p: &Perm| Perm((0..size).map(|x| (x / n) * n + p.apply(x % n)).collect());
    let mut gens = vec![lift(&transposition(n, 0, 1)), lift(&cycle(n))];
    if k >= 2 {
        gens.push(Perm((0..size).map(|x| ((x / n + 1) % k) * n + x % n).collect()));
    }
    Ok(Model::unchecked("", ts, StateSpace::Polytope(states), permutation(gens, cap)))
}

/// Four outcomes in a single test under `⟨(a0 a1), (b0 b1)⟩`; the symmetry
/// does not mix the two halves.
fn bitsum(cap: usize) -> Model {
    let ts = TestSpace::new(
        vec!["a0".into(), "a1".into(), "b0".into(), "b1".into()],
        vec![vec![0, 1, 2, 3]],
    );
    let states = StateSpace::Polytope((0..4).map(|k| delta(4, k)).collect());
    let gens = vec![transposition(4, 0, 1), transposition(4, 2, 3)];
    Model::unchecked("", ts, states, permutation(gens, cap))
}

/// Two binary tests with the square of states and the dihedral group of order 8.
fn squit(cap: usize) -> Model {
    let ts = TestSpace::new(
        vec!["x0".into(), "x1".into(), "y0".into(), "y1".into()],
        vec![vec![0, 1], vec![2, 3]],
    );
    let vertex = |p: i64, q: i64| {
        State(vec![
            Q::from_integer(p.into()),
            Q::from_integer((1 - p).into()),
            Q::from_integer(q.into()),
            Q::from_integer((1 - q).into()),
        ])
    };
    let states = StateSpace::Polytope(vec![vertex(1, 1), vertex(1, 0), vertex(0, 1), vertex(0, 0)]);
    // r: x0 -> y0 -> x1 -> y1 -> x0, s: y0 <-> y1
    let gens = vec![Perm(vec![2, 3, 1, 0]), Perm(vec![0, 1, 3, 2])];
    Model::unchecked("", ts, states, permutation(gens, cap))
}

fn c(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

fn quantum_model(
    field: HilbertField,
    outcomes: &[&str],
    vectors: Vec<CVec>,
    tests: Vec<Vec<usize>>,
    symmetries: &[CMat],
    seed: u64,
    cap: usize,
) -> Model {
    let d = vectors[0].len();
    let system = QuantumSystem {
        basis: OperatorBasis::new(field, d),
        vectors,
    };
    let ts = TestSpace::new(outcomes.iter().map(|s| s.to_string()).collect(), tests);
    let sample: Vec<Perm> = symmetries
        .iter()
        .map(|u| Perm(system.permutation_from_unitary(u).expect("sample closed under symmetry")))
        .collect();
    let group = SymmetryGroup::Linear(random_linear_group(&system, seed, Some(PermutationGroup::new(dedup(sample), cap))));
    Model::unchecked("", ts, StateSpace::Quantum(system), group)
}

/// Conjugation actions of seeded pseudo-random unitaries.
pub fn random_linear_group(system: &QuantumSystem, seed: u64, sample: Option<PermutationGroup>) -> LinearGroup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unitaries: Vec<CMat> = (0..RANDOM_GENERATORS)
        .map(|_| quantum::random_unitary(system.field(), system.dim(), &mut rng))
        .collect();
    LinearGroup {
        actions: unitaries.iter().map(|u| system.basis.conjugation_action(u)).collect(),
        unitaries,
        seed: Some(seed),
        sample_symmetries: sample,
    }
}

/// Real qubit sampled on the lines at angles 0, π/4, π/2, 3π/4.
fn qubit_real(seed: u64, cap: usize) -> Model {
    let line = |t: f64| CVec::from_vec(vec![c(t.cos(), 0.0), c(t.sin(), 0.0)]);
    let pi = std::f64::consts::PI;
    let vectors = vec![line(0.0), line(pi / 2.0), line(pi / 4.0), line(3.0 * pi / 4.0)];
    let (cs, sn) = ((pi / 4.0).cos(), (pi / 4.0).sin());
    let rotation = CMat::from_row_slice(2, 2, &[c(cs, 0.0), c(-sn, 0.0), c(sn, 0.0), c(cs, 0.0)]);
    let reflection = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
    quantum_model(
        HilbertField::Real,
        &["z+", "z-", "x+", "x-"],
        vectors,
        vec![vec![0, 1], vec![2, 3]],
        &[rotation, reflection],
        seed,
        cap,
    )
}

/// Complex qubit sampled on the six Pauli eigenvectors.
fn qubit_complex(seed: u64, cap: usize) -> Model {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let v = |a: Complex<f64>, b: Complex<f64>| CVec::from_vec(vec![a, b]);
    let vectors = vec![
        v(c(1.0, 0.0), c(0.0, 0.0)),
        v(c(0.0, 0.0), c(1.0, 0.0)),
        v(c(h, 0.0), c(h, 0.0)),
        v(c(h, 0.0), c(-h, 0.0)),
        v(c(h, 0.0), c(0.0, h)),
        v(c(h, 0.0), c(0.0, -h)),
    ];
    let hadamard = CMat::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]);
    let phase = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]);
    quantum_model(
        HilbertField::Complex,
        &["z+", "z-", "x+", "x-", "y+", "y-"],
        vectors,
        vec![vec![0, 1], vec![2, 3], vec![4, 5]],
        &[hadamard, phase],
        seed,
        cap,
    )
}

/// Complex qutrit sampled on the standard and Fourier bases.
fn qutrit_complex(seed: u64, cap: usize) -> Model {
    let mut vectors: Vec<CVec> = (0..3).map(|k| basis_vector(3, k)).collect();
    vectors.extend((0..3).map(|k| fourier_vector(3, k)));
    let shift = CMat::from_fn(3, 3, |i, j| if i == (j + 1) % 3 { c(1.0, 0.0) } else { c(0.0, 0.0) });
    let w = 2.0 * std::f64::consts::PI / 3.0;
    let clock = CMat::from_fn(3, 3, |i, j| if i == j { Complex::from_polar(1.0, w * i as f64) } else { c(0.0, 0.0) });
    let fourier = CMat::from_fn(3, 3, |i, j| fourier_vector(3, j)[i]);
    quantum_model(
        HilbertField::Complex,
        &["e0", "e1", "e2", "f0", "f1", "f2"],
        vectors,
        vec![vec![0, 1, 2], vec![3, 4, 5]],
        &[shift, clock, fourier],
        seed,
        cap,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;

    #[test]
    fn every_builtin_is_valid() {
        for name in BUILTIN_NAMES {
            let m = builtin(name).unwrap();
            let r = validate_model(&m);
            assert!(r.is_valid(), "{name}: {r}");
        }
    }

    #[test]
    fn sample_symmetry_orders() {
        let order = |name: &str| {
            let m = builtin(name).unwrap();
            let g = m.group.outcome_action().unwrap().clone();
            g.elements(m.num_outcomes()).unwrap().len()
        };
        // octahedral rotations on the six Pauli states
        assert_eq!(order("qubit:complex"), 24);
        // dihedral group of the square on four lines
        assert_eq!(order("qubit:real"), 8);
        assert_eq!(order("squit"), 8);
        assert_eq!(order("classical:4"), 24);
        assert_eq!(order("classical-cyclic:3"), 3);
    }

    #[test]
    fn seeds_change_generators_deterministically() {
        let a = builtin_with("qubit:complex", 1, DEFAULT_CAP).unwrap();
        let b = builtin_with("qubit:complex", 1, DEFAULT_CAP).unwrap();
        let c = builtin_with("qubit:complex", 2, DEFAULT_CAP).unwrap();
        let act = |m: &Model| match &m.group {
            SymmetryGroup::Linear(l) => l.actions[0].clone(),
            _ => unreachable!(),
        };
        assert_eq!(act(&a), act(&b));
        assert!((act(&a) - act(&c)).norm() > 1e-6);
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(builtin("classical:1").is_err());
        assert!(builtin("qubit:quaternion").is_err());
        assert!(builtin("nope").is_err());
    }
}
