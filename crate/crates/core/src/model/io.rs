//! JSON model files.
//!
//! ```json
//! {"outcomes": ["x0", "x1"], "tests": [["x0", "x1"]],
//!  "states": {"kind": "polytope", "extreme": [{"x0": "1", "x1": "0"}, {"x0": 0, "x1": "1"}]},
//!  "group": {"kind": "permutation", "generators": [{"x0": "x1", "x1": "x0"}], "cap": 1000000}}
//! ```
//!
//! Probabilities are strings `"p/q"` or decimals and are read exactly;
//! omitted outcomes in a state are zero, omitted outcomes in a generator are
//! fixed. Quantum state spaces read `{"kind": "quantum", "field": "complex",
//! "dim": 2}` with an optional `"vectors"` map from outcome to amplitudes
//! (each a number or a `[re, im]` pair); without it the outcomes take the
//! standard sample of that system in order. Quantum groups are
//! `{"kind": "topological", "seed": 42, "count": 2}` or carry explicit
//! `"unitaries"`, plus optional outcome-permuting `"sample_generators"`.

use std::collections::BTreeMap;

use nalgebra::Complex;
use num::Zero;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scalar::{parse_rational, render_float, render_rational, Q};

use super::builtins::{builtin_with, random_linear_group, DEFAULT_SEED, RANDOM_GENERATORS};
use super::quantum::{basis_vector, dct_vector, fourier_vector, CMat, CVec, HilbertField, OperatorBasis, QuantumSystem};
use super::{LinearGroup, Model, Perm, PermutationGroup, State, StateSpace, SymmetryGroup, TestSpace, DEFAULT_CAP};

/// A number given either as a JSON number or as a string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberJson {
    Text(String),
    Number(serde_json::Number),
}

impl NumberJson {
    pub fn to_rational(&self) -> Result<Q> {
        match self {
            NumberJson::Text(s) => parse_rational(s),
            NumberJson::Number(n) => parse_rational(&n.to_string()),
        }
    }

    pub fn to_f64(&self) -> Result<f64> {
        use crate::scalar::Field;
        Ok(self.to_rational()?.to_f64())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AmplitudeJson {
    Real(NumberJson),
    Pair([NumberJson; 2]),
}

impl AmplitudeJson {
    fn value(&self) -> Result<Complex<f64>> {
        match self {
            AmplitudeJson::Real(r) => Ok(Complex::new(r.to_f64()?, 0.0)),
            AmplitudeJson::Pair([r, i]) => Ok(Complex::new(r.to_f64()?, i.to_f64()?)),
        }
    }

    fn from_value(z: Complex<f64>) -> Self {
        let n = |v: f64| NumberJson::Text(render_float(v));
        if z.im == 0.0 {
            AmplitudeJson::Real(n(z.re))
        } else {
            AmplitudeJson::Pair([n(z.re), n(z.im)])
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StatesJson {
    Polytope {
        extreme: Vec<BTreeMap<String, NumberJson>>,
    },
    Quantum {
        field: HilbertField,
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vectors: Option<BTreeMap<String, Vec<AmplitudeJson>>>,
    },
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroupJson {
    Permutation {
        generators: Vec<BTreeMap<String, String>>,
        #[serde(default = "default_cap")]
        cap: usize,
    },
    Topological {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        unitaries: Vec<Vec<Vec<AmplitudeJson>>>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        sample_generators: Vec<BTreeMap<String, String>>,
        #[serde(default = "default_cap")]
        cap: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub outcomes: Vec<String>,
    pub tests: Vec<Vec<String>>,
    pub states: StatesJson,
    pub group: GroupJson,
}

/// Overrides applied while loading.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Seed for topological groups that do not fix one.
    pub seed: Option<u64>,
    /// Replaces the enumeration cap from the file.
    pub cap: Option<usize>,
}

fn lookup(outcomes: &[String], name: &str) -> Result<usize> {
    outcomes
        .iter()
        .position(|o| o == name)
        .ok_or_else(|| Error::UnknownOutcome(name.to_string()))
}

fn parse_perm(outcomes: &[String], map: &BTreeMap<String, String>) -> Result<Perm> {
    let mut p = Perm::identity(outcomes.len());
    for (from, to) in map {
        p.0[lookup(outcomes, from)?] = lookup(outcomes, to)?;
    }
    Ok(p)
}

fn render_perm(outcomes: &[String], p: &Perm) -> BTreeMap<String, String> {
    (0..p.len())
        .filter(|&i| p.apply(i) != i)
        .map(|i| (outcomes[i].clone(), outcomes[p.apply(i)].clone()))
        .collect()
}

/// Default sample of rank-one projections for a system, matched to the
/// outcome count.
fn default_vectors(field: HilbertField, dim: usize, count: usize) -> Result<Vec<CVec>> {
    let shipped = match (field, dim) {
        (HilbertField::Real, 2) => Some("qubit:real"),
        (HilbertField::Complex, 2) => Some("qubit:complex"),
        (HilbertField::Complex, 3) => Some("qutrit:complex"),
        _ => None,
    };
    if let Some(name) = shipped {
        let m = builtin_with(name, DEFAULT_SEED, DEFAULT_CAP)?;
        let q = m.states.quantum().expect("quantum built-in");
        if q.vectors.len() == count {
            return Ok(q.vectors.clone());
        }
    }
    if count == 2 * dim {
        let mut v: Vec<CVec> = (0..dim).map(|k| basis_vector(dim, k)).collect();
        v.extend((0..dim).map(|k| match field {
            HilbertField::Real => dct_vector(dim, k),
            HilbertField::Complex => fourier_vector(dim, k),
        }));
        return Ok(v);
    }
    Err(Error::Parse(format!(
        "no default sample of {count} outcomes for a {field} system of dimension {dim}; give \"vectors\""
    )))
}

impl ModelJson {
    pub fn into_model(self, opts: LoadOptions) -> Result<Model> {
        let outcomes = self.outcomes;
        let tests = self
            .tests
            .iter()
            .map(|t| t.iter().map(|n| lookup(&outcomes, n)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let ts = TestSpace::new(outcomes.clone(), tests);

        let states = match &self.states {
            StatesJson::Polytope { extreme } => {
                let mut vs = Vec::new();
                for map in extreme {
                    let mut values = vec![Q::zero(); outcomes.len()];
                    for (name, v) in map {
                        values[lookup(&outcomes, name)?] = v.to_rational()?;
                    }
                    vs.push(State(values));
                }
                StateSpace::Polytope(vs)
            }
            StatesJson::Quantum { field, dim, vectors } => {
                let vectors = match vectors {
                    Some(map) => outcomes
                        .iter()
                        .map(|o| {
                            let amps = map
                                .get(o)
                                .ok_or_else(|| Error::Parse(format!("no vector for outcome `{o}`")))?;
                            if amps.len() != *dim {
                                return Err(Error::DimensionMismatch { expected: *dim, got: amps.len() });
                            }
                            let v: Vec<Complex<f64>> =
                                amps.iter().map(|a| a.value()).collect::<Result<_>>()?;
                            if *field == HilbertField::Real && v.iter().any(|z| z.im != 0.0) {
                                return Err(Error::Parse(format!("complex amplitude for `{o}` in a real system")));
                            }
                            Ok(CVec::from_vec(v))
                        })
                        .collect::<Result<Vec<_>>>()?,
                    None => default_vectors(*field, *dim, outcomes.len())?,
                };
                StateSpace::Quantum(QuantumSystem {
                    basis: OperatorBasis::new(*field, *dim),
                    vectors,
                })
            }
        };

        let group = match &self.group {
            GroupJson::Permutation { generators, cap } => {
                let gens = generators
                    .iter()
                    .map(|g| parse_perm(&outcomes, g))
                    .collect::<Result<Vec<_>>>()?;
                SymmetryGroup::Permutation(PermutationGroup::new(gens, opts.cap.unwrap_or(*cap)))
            }
            GroupJson::Topological {
                seed,
                count,
                unitaries,
                sample_generators,
                cap,
            } => {
                let StateSpace::Quantum(system) = &states else {
                    return Err(Error::Unsupported(
                        "topological groups need a quantum state space".into(),
                    ));
                };
                let cap = opts.cap.unwrap_or(*cap);
                let sample = if sample_generators.is_empty() {
                    None
                } else {
                    let gens = sample_generators
                        .iter()
                        .map(|g| parse_perm(&outcomes, g))
                        .collect::<Result<Vec<_>>>()?;
                    Some(PermutationGroup::new(gens, cap))
                };
                if unitaries.is_empty() {
                    if count.is_some_and(|c| c != RANDOM_GENERATORS) {
                        return Err(Error::Unsupported(format!(
                            "only {RANDOM_GENERATORS} random generators are supported"
                        )));
                    }
                    let seed = opts.seed.or(*seed).unwrap_or(DEFAULT_SEED);
                    SymmetryGroup::Linear(random_linear_group(system, seed, sample))
                } else {
                    let d = system.dim();
                    let us = unitaries
                        .iter()
                        .map(|rows| {
                            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                                return Err(Error::DimensionMismatch { expected: d, got: rows.len() });
                            }
                            let vals: Vec<Complex<f64>> = rows
                                .iter()
                                .flatten()
                                .map(|a| a.value())
                                .collect::<Result<_>>()?;
                            Ok(CMat::from_row_slice(d, d, &vals))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    SymmetryGroup::Linear(LinearGroup {
                        actions: us.iter().map(|u| system.basis.conjugation_action(u)).collect(),
                        unitaries: us,
                        seed: None,
                        sample_symmetries: sample,
                    })
                }
            }
        };
        Ok(Model::unchecked(self.name.unwrap_or_default(), ts, states, group))
    }

    pub fn from_model(m: &Model) -> Self {
        let outcomes = m.testspace.outcomes.clone();
        let tests = m
            .testspace
            .tests
            .iter()
            .map(|t| t.iter().map(|&x| outcomes[x].clone()).collect())
            .collect();
        let states = match &m.states {
            StateSpace::Polytope(vs) => StatesJson::Polytope {
                extreme: vs
                    .iter()
                    .map(|s| {
                        s.0.iter()
                            .enumerate()
                            .filter(|(_, v)| !v.is_zero())
                            .map(|(x, v)| (outcomes[x].clone(), NumberJson::Text(render_rational(v))))
                            .collect()
                    })
                    .collect(),
            },
            StateSpace::Quantum(q) => StatesJson::Quantum {
                field: q.field(),
                dim: q.dim(),
                vectors: Some(
                    q.vectors
                        .iter()
                        .enumerate()
                        .map(|(x, v)| {
                            (outcomes[x].clone(), v.iter().map(|z| AmplitudeJson::from_value(*z)).collect())
                        })
                        .collect(),
                ),
            },
        };
        let group = match &m.group {
            SymmetryGroup::Permutation(g) => GroupJson::Permutation {
                generators: g.generators.iter().map(|p| render_perm(&outcomes, p)).collect(),
                cap: g.cap,
            },
            SymmetryGroup::Linear(l) => {
                let sample = l.sample_symmetries.as_ref();
                GroupJson::Topological {
                    seed: l.seed,
                    count: l.seed.map(|_| l.unitaries.len()),
                    unitaries: if l.seed.is_some() {
                        Vec::new()
                    } else {
                        l.unitaries
                            .iter()
                            .map(|u| {
                                (0..u.nrows())
                                    .map(|i| (0..u.ncols()).map(|j| AmplitudeJson::from_value(u[(i, j)])).collect())
                                    .collect()
                            })
                            .collect()
                    },
                    sample_generators: sample
                        .map(|g| g.generators.iter().map(|p| render_perm(&outcomes, p)).collect())
                        .unwrap_or_default(),
                    cap: sample.map(|g| g.cap).unwrap_or(DEFAULT_CAP),
                }
            }
        };
        ModelJson {
            name: if m.name.is_empty() { None } else { Some(m.name.clone()) },
            outcomes,
            tests,
            states,
            group,
        }
    }
}

/// Parses a model without validating it.
pub fn parse_model(text: &str, opts: LoadOptions) -> Result<Model> {
    let value: Value = serde_json::from_str(text)?;
    let mj: ModelJson = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    mj.into_model(opts)
}

pub fn load_model(path: &std::path::Path, opts: LoadOptions) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    let mut m = parse_model(&text, opts)?;
    if m.name.is_empty() {
        m.name = path.display().to_string();
    }
    Ok(m)
}

pub fn model_to_json(m: &Model) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelJson::from_model(m))?)
}
