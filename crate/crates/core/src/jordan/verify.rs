//! Forward checks that a catalog algebra is Euclidean and its cone of
//! squares is symmetric.

use nalgebra::DVector;
use serde::Serialize;

use crate::linalg::{self, Vector};
use crate::scalar::Field;

use super::spectral::{spectral_decomposition, sqrt};
use super::{random_integer_vector, random_vector, rng, JordanAlgebra, Kind};

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: 50,
            seed: 42,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityGate {
    pub passed: bool,
    pub exact: bool,
    pub commutative: bool,
    pub unit_law: bool,
    /// Pairs `(a, b)` checked: `a` over basis and random integer vectors,
    /// `b` over the basis (the identity is linear in `b`).
    pub pairs_checked: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfDualityCheck {
    pub passed: bool,
    pub idempotent_pairs: usize,
    pub cone_pairs: usize,
    pub min_pairing: f64,
    pub non_members: usize,
    /// Non-members separated by one of their own spectral idempotents.
    pub separated: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HomogeneityCheck {
    pub passed: bool,
    pub samples: usize,
    /// Largest `|P(w^{1/2}) e − w|` entry over samples.
    pub max_error: f64,
    pub cone_preserved: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetricConeReport {
    pub kind: Kind,
    pub dim: usize,
    pub seed: u64,
    pub identity: IdentityGate,
    pub trace_associative: bool,
    pub power_associative_residual: Option<f64>,
    pub self_duality: Option<SelfDualityCheck>,
    pub homogeneity: Option<HomogeneityCheck>,
    pub formally_real: bool,
    pub trace_form_min_eigenvalue: f64,
    pub passed: bool,
    pub failure: Option<String>,
}

fn residual_norm<F: Field>(v: &Vector<F>) -> f64 {
    v.iter().map(|x| x.to_f64().abs()).fold(0.0, f64::max)
}

/// Identity gate first; cone checks only run when it passes.
pub fn verify_symmetric_cone<F: Field>(j: &JordanAlgebra<F>, opts: VerifyOptions) -> SymmetricConeReport {
    let mut rng = rng(opts.seed);
    let d = j.dim;
    let commutative = j.is_commutative();
    let unit_law = j.unit_law();
    let mut probes: Vec<Vector<F>> = (0..d).map(|i| j.basis_vector(i)).collect();
    for _ in 0..d {
        probes.push(random_integer_vector(d, &mut rng));
    }
    let mut max_residual: f64 = 0.0;
    let mut exact_zero = true;
    let mut pairs = 0;
    for a in &probes {
        for b in 0..d {
            let r = j.jordan_defect(a, &j.basis_vector(b));
            pairs += 1;
            max_residual = max_residual.max(residual_norm(&r));
            if F::EXACT && r.iter().any(|x| !x.is_zero()) {
                exact_zero = false;
            }
        }
    }
    let scale = probes.iter().map(|p| residual_norm(p)).fold(1.0, f64::max).powi(3);
    let identity_ok = if F::EXACT { exact_zero } else { max_residual <= 1e-8 * scale };
    let identity = IdentityGate {
        passed: commutative && unit_law && identity_ok,
        exact: F::EXACT,
        commutative,
        unit_law,
        pairs_checked: pairs,
        max_residual,
    };

    let tau = j.trace_form();
    let tau_f = linalg::to_float_mat(&tau);
    let formally_real = linalg::is_positive_definite(&tau);
    let trace_form_min_eigenvalue = linalg::min_eigenvalue(&tau_f);
    let trace_associative = (0..d).all(|a| {
        (0..d).all(|b| {
            let ab = j.product(&j.basis_vector(a), &j.basis_vector(b));
            (0..d).all(|c| {
                let ac = j.product(&j.basis_vector(a), &j.basis_vector(c));
                let l = linalg::bilinear(&tau, &ab, &j.basis_vector(c));
                let r = linalg::bilinear(&tau, &j.basis_vector(b), &ac);
                if F::EXACT {
                    (l - r).is_zero()
                } else {
                    (l.to_f64() - r.to_f64()).abs() <= 1e-8 * (1.0 + l.to_f64().abs())
                }
            })
        })
    });

    let mut report = SymmetricConeReport {
        kind: j.kind.clone(),
        dim: d,
        seed: opts.seed,
        identity,
        trace_associative,
        power_associative_residual: None,
        self_duality: None,
        homogeneity: None,
        formally_real,
        trace_form_min_eigenvalue,
        passed: false,
        failure: None,
    };
    if !report.identity.passed {
        report.failure = Some("Jordan identity gate failed".into());
        return report;
    }
    if !formally_real {
        report.failure = Some("trace form is not positive definite".into());
        return report;
    }

    let jf = j.to_float();
    let mut power_res: f64 = 0.0;
    for _ in 0..opts.samples.min(10) {
        let a = random_vector(d, &mut rng);
        let a2 = jf.square(&a);
        let lhs = jf.product(&a, &jf.product(&a, &a2));
        let rhs = jf.square(&a2);
        power_res = power_res.max((lhs - &rhs).amax() / (1.0 + rhs.amax()));
    }
    report.power_associative_residual = Some(power_res);

    match cone_checks(&jf, &tau_f, &mut rng, opts) {
        Ok((sd, hom)) => {
            report.passed = report.trace_associative && power_res <= 1e-8 && sd.passed && hom.passed;
            if !report.passed {
                report.failure = Some("cone checks failed".into());
            }
            report.self_duality = Some(sd);
            report.homogeneity = Some(hom);
        }
        Err(e) => report.failure = Some(e.to_string()),
    }
    report
}

type CheckPair = (SelfDualityCheck, HomogeneityCheck);

fn cone_checks(
    j: &JordanAlgebra<f64>,
    tau: &nalgebra::DMatrix<f64>,
    rng: &mut rand_chacha::ChaCha8Rng,
    opts: VerifyOptions,
) -> crate::error::Result<CheckPair> {
    let d = j.dim;
    let pairing = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * tau * b)[0];

    let mut idempotents: Vec<DVector<f64>> = Vec::new();
    let mut squares: Vec<DVector<f64>> = Vec::new();
    let mut non_members = 0;
    let mut separated = 0;
    for _ in 0..opts.samples.clamp(1, 10) {
        let a = random_vector(d, rng);
        let sp = spectral_decomposition(j, tau, &a)?;
        idempotents.extend(sp.idempotents.iter().cloned());
        squares.push(j.square(&a));
        if sp.min() < -opts.tol {
            non_members += 1;
            if pairing(&a, &sp.idempotents[0]) < -opts.tol {
                separated += 1;
            }
        }
    }
    let mut min_pairing = f64::INFINITY;
    let mut idempotent_pairs = 0;
    for x in &idempotents {
        for y in &idempotents {
            min_pairing = min_pairing.min(pairing(x, y));
            idempotent_pairs += 1;
        }
    }
    let mut cone_pairs = 0;
    for x in &squares {
        for y in &squares {
            min_pairing = min_pairing.min(pairing(x, y) / (1.0 + x.amax() * y.amax()));
            cone_pairs += 1;
        }
    }
    let sd = SelfDualityCheck {
        passed: min_pairing >= -opts.tol && separated == non_members,
        idempotent_pairs,
        cone_pairs,
        min_pairing,
        non_members,
        separated,
    };

    let mut max_error: f64 = 0.0;
    let mut cone_preserved = true;
    for _ in 0..opts.samples {
        let a = random_vector(d, rng) / (d as f64).sqrt();
        let w = j.square(&a) + &j.unit * 0.1;
        let s = sqrt(j, tau, &w)?;
        let p = j.quadratic_rep(&s);
        let err = (&p * &j.unit - &w).amax() / (1.0 + w.amax());
        max_error = max_error.max(err);
        for x in squares.iter().take(3) {
            let y = &p * x;
            let sp = spectral_decomposition(j, tau, &y)?;
            if sp.min() < -opts.tol * (1.0 + y.amax()) {
                cone_preserved = false;
            }
        }
    }
    let hom = HomogeneityCheck {
        passed: max_error <= opts.tol && cone_preserved,
        samples: opts.samples,
        max_error,
        cone_preserved,
    };
    Ok((sd, hom))
}
