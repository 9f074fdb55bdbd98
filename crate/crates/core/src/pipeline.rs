//! The derivation run on one model, stage by stage, with a deterministic
//! report and a re-verification pass over its embedded certificates.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::composites::{
    self, bipartite_to_json, bipartite_violations, default_gamma, diagonal_forces_orthogonality, find_conjugate_state,
    find_conjugate_state_quantum, homogeneity_report, is_isomorphism_state, spin_form_from_conjugate, BipartiteState,
    Conjugate, PSD_GRID,
};
use crate::cones::{self, is_self_dual, is_weakly_self_dual, psd_self_duality, PolyhedralCone, WEAK_RAY_CAP};
use crate::error::{Error, Result};
use crate::forms::{self, check_theorem1, find_orthogonalizing_spin_form, is_irreducible};
use crate::jordan::{self, identify_algebra, verify_symmetric_cone, AlgebraJson, ConeOracle, JordanAlgebra, Kind, VerifyOptions};
use crate::linalg::{self, Mat, Vector};
use crate::linearization::{
    build_effect_space, linearize_group_exact, linearize_group_float, render_matrix, EffectSpace, LinearizedGroup,
    OrderUnitSpace,
};
use crate::model::builtins::builtin_with;
use crate::model::io::{LoadOptions, ModelJson};
use crate::model::quantum::sample_pure_states;
use crate::model::{check_bisymmetry, is_sharp, validate_model, Model, StateSpace, DEFAULT_CAP};
use crate::scalar::{parse_rational, Field, Q};
use crate::verdict::Tri;

pub const STAGES: [&str; 10] = [
    "validation",
    "bisymmetry",
    "irreducibility",
    "spin",
    "conjugate",
    "self-duality",
    "homogeneity",
    "sharpness",
    "jordan-recovery",
    "identification",
];

/// `--expect` tokens and the stage each one declares as failing.
pub const EXPECTATIONS: [(&str, &str); 10] = [
    ("not-valid", "validation"),
    ("not-bisymmetric", "bisymmetry"),
    ("not-irreducible", "irreducibility"),
    ("no-spin", "spin"),
    ("no-conjugate", "conjugate"),
    ("not-self-dual", "self-duality"),
    ("not-homogeneous", "homogeneity"),
    ("not-sharp", "sharpness"),
    ("no-jordan", "jordan-recovery"),
    ("unidentified", "identification"),
];

fn prerequisites(stage: &str) -> &'static [&'static str] {
    match stage {
        "validation" => &[],
        "self-duality" => &["spin"],
        "homogeneity" => &["conjugate"],
        "jordan-recovery" => &["spin", "self-duality"],
        "identification" => &["jordan-recovery"],
        _ => &["validation"],
    }
}

/// Maps an `--expect` token to its stage.
pub fn expectation_stage(token: &str) -> Result<&'static str> {
    let t = token.trim();
    EXPECTATIONS
        .iter()
        .find(|(k, _)| *k == t)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            let known: Vec<&str> = EXPECTATIONS.iter().map(|(k, _)| *k).collect();
            Error::Parse(format!("unknown expectation `{t}` (known: {})", known.join(", ")))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
    Unknown,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::NotApplicable => "not-applicable",
            Status::Unknown => "unknown",
        }
    }
}

impl From<bool> for Status {
    fn from(b: bool) -> Self {
        if b {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

impl From<Tri> for Status {
    fn from(t: Tri) -> Self {
        match t {
            Tri::Yes => Status::Pass,
            Tri::No => Status::Fail,
            Tri::Unknown => Status::Unknown,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageResult {
    pub stage: &'static str,
    pub status: Status,
    /// Failure declared in advance with `--expect`.
    pub expected_failure: bool,
    pub summary: String,
    pub details: Value,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub tol: f64,
    pub seed: u64,
    pub cap: usize,
    pub expect: Vec<String>,
    /// Replaces the SPIN form in the self-duality stage.
    pub form: Option<Mat<Q>>,
    /// Last stage to run; later stages are omitted from the report.
    pub until: Option<String>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            tol: 1e-9,
            seed: crate::model::builtins::DEFAULT_SEED,
            cap: DEFAULT_CAP,
            expect: Vec::new(),
            form: None,
            until: None,
        }
    }
}

/// Where the model came from; embedded so a report can be re-checked alone.
#[derive(Debug, Clone)]
pub enum ModelSource {
    Builtin(String),
    Json(Value),
}

impl ModelSource {
    pub fn to_json(&self) -> Value {
        match self {
            ModelSource::Builtin(n) => json!({ "builtin": n }),
            ModelSource::Json(v) => json!({ "model": v }),
        }
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        if let Some(n) = v.get("builtin").and_then(Value::as_str) {
            return Ok(ModelSource::Builtin(n.to_string()));
        }
        v.get("model")
            .cloned()
            .map(ModelSource::Json)
            .ok_or_else(|| Error::Parse("report source has neither `builtin` nor `model`".into()))
    }

    pub fn load(&self, seed: u64, cap: usize) -> Result<Model> {
        match self {
            ModelSource::Builtin(n) => builtin_with(n, seed, cap),
            ModelSource::Json(v) => {
                let mj: ModelJson = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(e.to_string()))?;
                mj.into_model(LoadOptions {
                    seed: Some(seed),
                    cap: Some(cap),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub model: String,
    pub source: Value,
    pub backend: &'static str,
    pub seed: u64,
    pub tol: f64,
    pub cap: usize,
    pub expect: Vec<String>,
    pub stages: Vec<StageResult>,
    pub unexpected_failures: Vec<&'static str>,
    pub unmet_expectations: Vec<&'static str>,
    pub errors: Vec<String>,
    pub exit_code: i32,
}

impl PipelineReport {
    pub fn stage(&self, name: &str) -> Option<&StageResult> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Markdown with the same content: a summary table, then every stage's
    /// details verbatim.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# kvwb report: {}\n\n", self.model));
        s.push_str("| field | value |\n|---|---|\n");
        s.push_str(&format!("| source | `{}` |\n", self.source));
        s.push_str(&format!("| backend | {} |\n", self.backend));
        s.push_str(&format!("| seed | {} |\n", self.seed));
        s.push_str(&format!("| tol | {:e} |\n", self.tol));
        s.push_str(&format!("| cap | {} |\n", self.cap));
        s.push_str(&format!("| expect | {} |\n", self.expect.join(", ")));
        s.push_str(&format!("| unexpected failures | {} |\n", self.unexpected_failures.join(", ")));
        s.push_str(&format!("| unmet expectations | {} |\n", self.unmet_expectations.join(", ")));
        s.push_str(&format!("| errors | {} |\n", self.errors.join("; ")));
        s.push_str(&format!("| exit code | {} |\n\n", self.exit_code));
        s.push_str("| stage | status | expected failure | summary |\n|---|---|---|---|\n");
        for st in &self.stages {
            s.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                st.stage,
                st.status.as_str(),
                st.expected_failure,
                st.summary.replace('|', "\\|")
            ));
        }
        for st in &self.stages {
            s.push_str(&format!("\n## {}\n\nstatus: {}\n\n{}\n\n", st.stage, st.status.as_str(), st.summary));
            s.push_str("```json\n");
            s.push_str(&serde_json::to_string_pretty(&st.details).expect("details serialize"));
            s.push_str("\n```\n");
        }
        s
    }
}

struct StageOut<T> {
    status: Status,
    summary: String,
    details: Value,
    value: T,
}

impl<T> StageOut<T> {
    fn new(status: Status, summary: impl Into<String>, details: Value, value: T) -> Self {
        StageOut {
            status,
            summary: summary.into(),
            details,
            value,
        }
    }
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("serializable")
}

fn mats_close<F: Field>(a: &Mat<F>, b: &Mat<F>) -> bool {
    a.shape() == b.shape()
        && a.iter().zip(b.iter()).all(|(x, y)| {
            if F::EXACT {
                x == y
            } else {
                (x.to_f64() - y.to_f64()).abs() <= 1e-9 * (1.0 + y.to_f64().abs())
            }
        })
}

/// Per-backend pieces: exact polytope cones or sampled PSD cones.
trait Backend: Field {
    const NAME: &'static str;
    fn linearize(m: &Model, e: &OrderUnitSpace<Self>) -> Result<LinearizedGroup<Self>>;
    fn conjugate(m: &Model, e: &OrderUnitSpace<Self>) -> Result<Option<Conjugate<Self>>>;
    fn self_duality(e: &OrderUnitSpace<Self>, b: &Mat<Self>, cap: usize) -> Result<StageOut<()>>;
    fn homogeneity(m: &Model, e: &OrderUnitSpace<Self>, c: &Conjugate<Self>, seed: u64) -> Result<StageOut<()>>;
    fn recovery_inputs(e: &OrderUnitSpace<Self>) -> Result<(Vec<Vector<Self>>, ConeOracle)>;
}

fn model_cone(e: &OrderUnitSpace<Q>) -> Result<PolyhedralCone> {
    Ok(PolyhedralCone::from_vectors(e.dim, &e.cone_generators)?.irredundant())
}

impl Backend for Q {
    const NAME: &'static str = "exact";

    fn linearize(m: &Model, e: &OrderUnitSpace<Q>) -> Result<LinearizedGroup<Q>> {
        linearize_group_exact(m, e, false)
    }

    fn conjugate(m: &Model, _e: &OrderUnitSpace<Q>) -> Result<Option<Conjugate<Q>>> {
        let gamma = default_gamma(m)?;
        match find_conjugate_state(m, &gamma, true)? {
            Some(c) => Ok(Some(c)),
            None => find_conjugate_state(m, &gamma, false),
        }
    }

    fn self_duality(e: &OrderUnitSpace<Q>, b: &Mat<Q>, cap: usize) -> Result<StageOut<()>> {
        let k = model_cone(e)?;
        let (cert, _) = is_self_dual(&k, b)?;
        let weak = if cert.verdict {
            None
        } else {
            Some(is_weakly_self_dual(&k, b, cap.min(WEAK_RAY_CAP))?)
        };
        let separators = cert.checks.iter().filter(|c| !c.certificate.is_member()).count();
        let summary = if cert.verdict {
            format!("self-dual (exact, {} rays)", k.generators.len())
        } else {
            format!(
                "not self-dual ({separators} separating certificates); weakly self-dual: {}",
                weak.as_ref().map(|w| w.verdict.to_string()).unwrap_or_default()
            )
        };
        Ok(StageOut::new(
            cert.verdict.into(),
            summary,
            json!({ "certificate": cert, "weak": weak }),
            (),
        ))
    }

    fn homogeneity(m: &Model, e: &OrderUnitSpace<Q>, c: &Conjugate<Q>, seed: u64) -> Result<StageOut<()>> {
        let vertices = m
            .states
            .vertices()
            .ok_or_else(|| Error::Unsupported("polytope homogeneity needs vertices".into()))?;
        let n = m.rank()?;
        let k = m.num_outcomes();
        let mut rng = jordan::rng(seed);
        let mut samples: Vec<Vec<Q>> = Vec::new();
        for s in 0..4 {
            let weights: Vec<i64> = (0..vertices.len())
                .map(|_| if s == 0 { 1 } else { rng.random_range(1..=5) })
                .collect();
            let total: i64 = weights.iter().sum();
            samples.push(
                (0..k)
                    .map(|x| {
                        vertices
                            .iter()
                            .zip(&weights)
                            .map(|(v, w)| v.0[x].clone() * Q::from_i64(*w))
                            .sum::<Q>()
                            / Q::from_i64(total)
                    })
                    .collect(),
            );
        }
        // ω_α(x, y) = n α(x) η(x, y)
        let mut witnesses = vec![c.eta.clone()];
        for alpha in &samples {
            let table = Mat::from_fn(k, k, |x, y| Q::from_i64(n as i64) * alpha[x].clone() * c.eta.table[(x, y)].clone());
            let w = BipartiteState::new(table);
            if bipartite_violations(&w, m, e, m, e).is_empty() {
                witnesses.push(w);
            }
        }
        homogeneity_out(m, e, &witnesses, &samples, seed)
    }

    fn recovery_inputs(e: &OrderUnitSpace<Q>) -> Result<(Vec<Vector<Q>>, ConeOracle)> {
        let k = model_cone(e)?;
        let rays = k.generators.iter().map(|g| Vector::from_vec(g.clone())).collect();
        let facets = k
            .facets()
            .iter()
            .map(|f| DVector::from_iterator(f.len(), f.iter().map(Field::to_f64)))
            .collect();
        Ok((rays, ConeOracle::Facets(facets)))
    }
}

impl Backend for f64 {
    const NAME: &'static str = "float";

    fn linearize(m: &Model, e: &OrderUnitSpace<f64>) -> Result<LinearizedGroup<f64>> {
        linearize_group_float(m, e)
    }

    fn conjugate(m: &Model, e: &OrderUnitSpace<f64>) -> Result<Option<Conjugate<f64>>> {
        let gamma = default_gamma(m)?;
        match find_conjugate_state_quantum(m, e, &gamma, true)? {
            Some(c) => Ok(Some(c)),
            None => find_conjugate_state_quantum(m, e, &gamma, false),
        }
    }

    fn self_duality(e: &OrderUnitSpace<f64>, b: &Mat<f64>, _cap: usize) -> Result<StageOut<()>> {
        let ops = e
            .operators
            .as_ref()
            .ok_or_else(|| Error::Unsupported("sampled self-duality needs an operator basis".into()))?;
        let s = psd_self_duality(ops, b, PSD_GRID);
        let summary = format!(
            "{} ({}, {} samples, min pairing {:.3e})",
            if s.verdict { "self-dual" } else { "not self-dual" },
            s.method,
            s.samples,
            s.min_pairing
        );
        Ok(StageOut::new(s.verdict.into(), summary, json!({ "sampled": s }), ()))
    }

    fn homogeneity(m: &Model, e: &OrderUnitSpace<f64>, c: &Conjugate<f64>, seed: u64) -> Result<StageOut<()>> {
        let StateSpace::Quantum(sys) = &m.states else {
            return Err(Error::Unsupported("float homogeneity needs a quantum model".into()));
        };
        let ops = &sys.basis;
        let w = c
            .eta
            .extension
            .clone()
            .ok_or_else(|| Error::Unsupported("conjugate without a bilinear extension".into()))?;
        let n = sys.dim();
        let pure = sample_pure_states(ops, 3, seed);
        let mut rhos = vec![DVector::from_fn(ops.len(), |i, _| if i == 0 { 1.0 / n as f64 } else { 0.0 })];
        for (i, p) in pure.iter().enumerate() {
            let t = 0.3 * (i + 1) as f64;
            rhos.push(&rhos[0] * (1.0 - t) + p * t);
        }
        let k = m.num_outcomes();
        let mut witnesses = vec![c.eta.clone()];
        let mut samples = Vec::new();
        for rho in &rhos {
            let root = psd_sqrt(&ops.matrix(rho));
            let p = DMatrix::from_fn(ops.len(), ops.len(), |_, _| 0.0);
            let mut p = p;
            for (col, el) in ops.elements().iter().enumerate() {
                p.set_column(col, &ops.coords(&(&root * el * &root)));
            }
            let wr = p.transpose() * &w * n as f64;
            let table = DMatrix::from_fn(k, k, |x, z| (e.outcome_vectors[x].transpose() * &wr * &e.outcome_vectors[z])[0]);
            witnesses.push(BipartiteState {
                table,
                extension: Some(wr),
            });
            let rm = ops.matrix(rho);
            samples.push((0..k).map(|x| (&rm * sys.projection(x)).trace().re).collect::<Vec<f64>>());
        }
        homogeneity_out(m, e, &witnesses, &samples, seed)
    }

    fn recovery_inputs(e: &OrderUnitSpace<f64>) -> Result<(Vec<Vector<f64>>, ConeOracle)> {
        let ops = e
            .operators
            .clone()
            .ok_or_else(|| Error::Unsupported("float recovery needs an operator basis".into()))?;
        Ok((e.cone_generators.clone(), ConeOracle::Psd(ops)))
    }
}

fn psd_sqrt(a: &crate::model::quantum::CMat) -> crate::model::quantum::CMat {
    let h = (a + a.adjoint()) * Complex::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| Complex::new(l.max(0.0).sqrt(), 0.0)),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.adjoint()
}

fn homogeneity_out<F: Field>(
    m: &Model,
    e: &OrderUnitSpace<F>,
    witnesses: &[BipartiteState<F>],
    samples: &[Vec<F>],
    seed: u64,
) -> Result<StageOut<()>> {
    let r = homogeneity_report(m, e, witnesses, samples)?;
    let status = if r.uncovered.is_empty() { Status::Pass } else { Status::Unknown };
    let rendered: Vec<Vec<String>> = samples.iter().map(|s| s.iter().map(Field::render).collect()).collect();
    Ok(StageOut::new(
        status,
        r.verdict.clone(),
        json!({ "seed": seed, "samples": rendered, "report": r }),
        (),
    ))
}

struct Runner {
    stages: Vec<StageResult>,
    errors: Vec<String>,
    expected: Vec<&'static str>,
    until: Option<String>,
}

impl Runner {
    fn ready(&self, stage: &str) -> bool {
        prerequisites(stage)
            .iter()
            .all(|p| self.stages.iter().any(|s| s.stage == *p && s.status == Status::Pass))
    }

    fn stopped(&self) -> bool {
        self.until
            .as_deref()
            .is_some_and(|u| self.stages.iter().any(|s| s.stage == u))
    }

    fn push(&mut self, stage: &'static str, status: Status, summary: String, details: Value) {
        self.stages.push(StageResult {
            stage,
            status,
            expected_failure: self.expected.contains(&stage),
            summary,
            details,
        });
    }

    /// Runs `f` when the prerequisites passed; errors become `unknown`.
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<StageOut<T>>) -> Option<T> {
        if self.stopped() {
            return None;
        }
        if !self.ready(stage) {
            let missing: Vec<&str> = prerequisites(stage)
                .iter()
                .copied()
                .filter(|p| !self.stages.iter().any(|s| s.stage == *p && s.status == Status::Pass))
                .collect();
            self.push(
                stage,
                Status::NotApplicable,
                format!("prerequisite did not pass: {}", missing.join(", ")),
                Value::Null,
            );
            return None;
        }
        match f() {
            Ok(out) => {
                self.push(stage, out.status, out.summary, out.details);
                (out.status == Status::Pass).then_some(out.value)
            }
            Err(e) => {
                self.errors.push(format!("{stage}: {e}"));
                self.push(stage, Status::Unknown, format!("error: {e}"), json!({ "error": e.to_string() }));
                None
            }
        }
    }
}

fn form_value<F: Field>(b: &Mat<F>) -> Value {
    to_value(&render_matrix(b))
}

fn run_backend<F: Backend>(r: &mut Runner, m: &Model, e: &OrderUnitSpace<F>, opts: &PipelineOptions) {
    let g = match F::linearize(m, e) {
        Ok(g) => Some(g),
        Err(err) => {
            r.errors.push(format!("linearization: {err}"));
            None
        }
    };
    let g = g.as_ref();
    let need_g = || g.ok_or_else(|| Error::Unsupported("symmetry group could not be linearized".into()));

    r.run("irreducibility", || {
        let irr = is_irreducible(e, need_g()?)?;
        let summary = format!(
            "{} ({} invariant forms on u-perp of dimension {})",
            if irr.irreducible { "irreducible" } else { "reducible" },
            irr.forms_on_u_perp,
            irr.u_perp_dim
        );
        Ok(StageOut::new(irr.irreducible.into(), summary, to_value(&irr), ()))
    });

    let spin = r.run("spin", || {
        let g = need_g()?;
        let s = find_orthogonalizing_spin_form(m, e, g)?;
        let t1 = check_theorem1(m, e, g)?;
        let ok = s.solution_space_dim == 1
            && s.form.as_ref().is_some_and(|f| f.flags.positive_definite.is_yes());
        let summary = match &s.form {
            Some(f) => format!(
                "form found; solution space dimension {}; positive definite: {}",
                s.solution_space_dim, f.flags.positive_definite
            ),
            None => format!("no normalized form; solution space dimension {}", s.solution_space_dim),
        };
        let details = json!({
            "solution_space_dim": s.solution_space_dim,
            "form": s.form.as_ref().map(|f| form_value(&f.matrix)),
            "flags": s.form.as_ref().map(|f| f.flags),
            "theorem1": t1,
        });
        Ok(StageOut::new(ok.into(), summary, details, s.form.map(|f| f.matrix)))
    });
    let spin: Option<Mat<F>> = spin.flatten();

    let conjugate = r.run("conjugate", || {
        let Some(c) = F::conjugate(m, e)? else {
            return Ok(StageOut::new(Status::Fail, "no conjugate state exists", json!({ "found": false }), None));
        };
        let iso = is_isomorphism_state(&c.eta, e, e)?;
        let induced = need_g().and_then(|g| spin_form_from_conjugate(m, e, g, &c));
        let (induced_form, matches) = match (&induced, &spin) {
            (Ok(b), Some(s)) => (Some(form_value(&b.matrix)), Some(mats_close(&b.matrix, s))),
            (Ok(b), None) => (Some(form_value(&b.matrix)), None),
            (Err(_), _) => (None, None),
        };
        let summary = format!(
            "conjugate found (invariant: {}); isomorphism state: {}",
            c.invariant, iso.verdict
        );
        let details = json!({
            "found": true,
            "gamma": c.gamma.0.iter().map(|&y| m.testspace.name(y).to_string()).collect::<Vec<_>>(),
            "invariant": c.invariant,
            "eta": bipartite_to_json(&c.eta, m, m),
            "extension": c.eta.extension.as_ref().map(form_value),
            "isomorphism": iso,
            "diagonal_forces_orthogonality": diagonal_forces_orthogonality(m, &c),
            "induced_form": induced_form,
            "induced_form_equals_spin": matches,
            "induced_form_error": induced.as_ref().err().map(|e| e.to_string()),
        });
        Ok(StageOut::new(Status::Pass, summary, details, Some(c)))
    });
    let conjugate = conjugate.flatten();

    let form_source = if opts.form.is_some() { "override" } else { "spin" };
    let b: Option<Mat<F>> = match &opts.form {
        Some(f) => Some(f.map(|v| F::from_rational(&v))),
        None => spin.clone(),
    };
    let self_dual = r.run("self-duality", || {
        let b = b.clone().ok_or_else(|| Error::Unsupported("no form to pair with".into()))?;
        let mut out = F::self_duality(e, &b, opts.cap)?;
        if let Value::Object(map) = &mut out.details {
            map.insert("form_source".into(), json!(form_source));
            map.insert("form".into(), form_value(&b));
        }
        Ok(out)
    });

    r.run("homogeneity", || {
        let c = conjugate.as_ref().ok_or_else(|| Error::Unsupported("no conjugate".into()))?;
        F::homogeneity(m, e, c, opts.seed)
    });

    r.run("sharpness", || {
        let sharp = is_sharp(m);
        let summary = if sharp { "sharp" } else { "not sharp" };
        Ok(StageOut::new(sharp.into(), summary, json!({ "sharp": sharp }), ()))
    });

    let algebra = r.run("jordan-recovery", || {
        self_dual.ok_or_else(|| Error::Unsupported("cone is not self-dual".into()))?;
        let b = b.clone().ok_or_else(|| Error::Unsupported("no form".into()))?;
        let (rays, cone) = F::recovery_inputs(e)?;
        let problem = jordan::RecoveryProblem {
            form: b,
            unit: e.unit.clone(),
            generators: need_g()?.generators.clone(),
            rays,
            cone,
        };
        let rec = jordan::recover_jordan_product(&problem)?;
        let idempotence = rec.algebra.as_ref().filter(|_| e.is_quantum()).map(|j| {
            let jf = j.to_float();
            e.outcome_vectors
                .iter()
                .map(|x| {
                    let xf = linalg::to_float_vec(x);
                    (jf.square(&xf) - &xf).amax()
                })
                .fold(0.0, f64::max)
        });
        let ok = rec.report.accepted && rec.report.unique;
        let summary = format!(
            "{}; linear solution dimension {}; residual {:.3e}; unique: {}",
            if rec.report.accepted { "product recovered" } else { "no admissible product" },
            rec.report.linear_solution_dim,
            rec.report.residual,
            rec.report.unique
        );
        let details = json!({
            "report": rec.report,
            "algebra": rec.algebra.as_ref().map(AlgebraJson::from),
            "outcome_idempotence_residual": idempotence,
        });
        Ok(StageOut::new(ok.into(), summary, details, rec.algebra))
    });

    r.run("identification", || {
        let j = algebra
            .flatten()
            .ok_or_else(|| Error::Unsupported("no recovered algebra".into()))?;
        let id = identify_algebra(&j)?;
        let verify = verify_symmetric_cone(
            &j,
            VerifyOptions {
                seed: opts.seed,
                tol: opts.tol,
                ..VerifyOptions::default()
            },
        );
        let names: Vec<String> = id.candidates.iter().map(Kind::to_string).collect();
        let ok = !id.candidates.is_empty() && verify.passed;
        let summary = format!(
            "candidates: {}; rank {}; symmetric cone verified: {}",
            if names.is_empty() { "none".to_string() } else { names.join(" | ") },
            id.rank,
            verify.passed
        );
        Ok(StageOut::new(
            ok.into(),
            summary,
            json!({ "identification": id, "symmetric_cone": verify }),
            (),
        ))
    });
}

/// Runs every stage in order. Deterministic for fixed options.
pub fn run_pipeline(m: &Model, source: &ModelSource, opts: &PipelineOptions) -> PipelineReport {
    let mut errors = Vec::new();
    let mut expected = Vec::new();
    for t in &opts.expect {
        match expectation_stage(t) {
            Ok(s) => expected.push(s),
            Err(e) => errors.push(e.to_string()),
        }
    }
    let mut r = Runner {
        stages: Vec::new(),
        errors,
        expected,
        until: opts.until.clone(),
    };
    if let Some(u) = &opts.until {
        if !STAGES.contains(&u.as_str()) {
            r.errors.push(format!("unknown stage `{u}`"));
        }
    }
    r.run("validation", || {
        let v = validate_model(m);
        let summary = if v.is_valid() {
            "all invariants hold".to_string()
        } else {
            format!("{} violations", v.violations.len())
        };
        Ok(StageOut::new(v.is_valid().into(), summary, to_value(&v), ()))
    });
    r.run("bisymmetry", || {
        let b = check_bisymmetry(m)?;
        let summary = format!("fully bisymmetric: {}", b.fully_bisymmetric);
        Ok(StageOut::new(b.fully_bisymmetric.into(), summary, to_value(&b), ()))
    });
    let backend = match build_effect_space(m) {
        Ok(EffectSpace::Exact(e)) => {
            run_backend::<Q>(&mut r, m, &e, opts);
            Q::NAME
        }
        Ok(EffectSpace::Float(e)) => {
            run_backend::<f64>(&mut r, m, &e, opts);
            f64::NAME
        }
        Err(err) => {
            r.errors.push(format!("effect space: {err}"));
            for stage in &STAGES[2..] {
                r.run(stage, || -> Result<StageOut<()>> { Err(Error::InvalidModel(err.to_string())) });
            }
            "none"
        }
    };
    let unexpected_failures: Vec<&'static str> = r
        .stages
        .iter()
        .filter(|s| s.status == Status::Fail && !s.expected_failure)
        .map(|s| s.stage)
        .collect();
    let mut unmet_expectations: Vec<&'static str> = r
        .expected
        .iter()
        .copied()
        .filter(|st| r.stages.iter().any(|s| s.stage == *st && s.status != Status::Fail))
        .collect();
    unmet_expectations.dedup();
    let exit_code = if !r.errors.is_empty() {
        2
    } else if !unexpected_failures.is_empty() || !unmet_expectations.is_empty() {
        1
    } else {
        0
    };
    PipelineReport {
        model: m.name.clone(),
        source: source.to_json(),
        backend,
        seed: opts.seed,
        tol: opts.tol,
        cap: opts.cap,
        expect: opts.expect.clone(),
        stages: r.stages,
        unexpected_failures,
        unmet_expectations,
        errors: r.errors,
        exit_code,
    }
}

/// Parses a square matrix of numbers or rational strings.
pub fn parse_form(v: &Value) -> Result<Mat<Q>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::Parse("form must be an array of rows".into()))?;
    let n = rows.len();
    let mut out = Mat::from_element(n, n, Q::from_i64(0));
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .filter(|r| r.len() == n)
            .ok_or_else(|| Error::Parse(format!("form row {i} must have {n} entries")))?;
        for (j, x) in row.iter().enumerate() {
            out[(i, j)] = number(x)?;
        }
    }
    Ok(out)
}

fn number(x: &Value) -> Result<Q> {
    match x {
        Value::String(s) => parse_rational(s).or_else(|_| {
            s.parse::<f64>()
                .map(Q::from_f64_lossy)
                .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
        }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Q::from_i64(i))
            } else {
                Ok(Q::from_f64_lossy(n.as_f64().unwrap_or(f64::NAN)))
            }
        }
        _ => Err(Error::Parse(format!("not a number: {x}"))),
    }
}

fn parse_field<F: Field>(x: &Value) -> Result<F> {
    if F::EXACT {
        return Ok(F::from_rational(&number(x)?));
    }
    match x {
        Value::String(s) => s
            .parse::<f64>()
            .map(F::from_f64_lossy)
            .or_else(|_| parse_rational(s).map(|q| F::from_rational(&q))),
        _ => number(x).map(|q| F::from_rational(&q)),
    }
}

fn parse_matrix<F: Field>(v: &Value) -> Result<Mat<F>> {
    let rows = v.as_array().ok_or_else(|| Error::Parse("expected a matrix".into()))?;
    let r = rows.len();
    let c = rows.first().and_then(Value::as_array).map_or(0, Vec::len);
    let mut out = Mat::from_element(r, c, F::zero());
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .filter(|x| x.len() == c)
            .ok_or_else(|| Error::Parse("ragged matrix".into()))?;
        for (j, x) in row.iter().enumerate() {
            out[(i, j)] = parse_field(x)?;
        }
    }
    Ok(out)
}

fn parse_q_rows(v: &Value) -> Result<Vec<Vec<Q>>> {
    v.as_array()
        .ok_or_else(|| Error::Parse("expected rows".into()))?
        .iter()
        .map(|r| {
            r.as_array()
                .ok_or_else(|| Error::Parse("expected a row".into()))?
                .iter()
                .map(number)
                .collect()
        })
        .collect()
}

fn parse_certificate(v: &Value) -> Result<cones::MembershipCertificate> {
    if let Some(c) = v.get("coefficients") {
        return Ok(cones::MembershipCertificate::Combination(parse_q_rows(&json!([c]))?.remove(0)));
    }
    if let Some(z) = v.get("separator") {
        return Ok(cones::MembershipCertificate::Separator(parse_q_rows(&json!([z]))?.remove(0)));
    }
    Err(Error::Parse("certificate has neither coefficients nor separator".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct RecheckItem {
    pub stage: String,
    pub check: String,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecheckReport {
    pub model: String,
    pub items: Vec<RecheckItem>,
    pub all_ok: bool,
}

struct Rechecker {
    items: Vec<RecheckItem>,
}

impl Rechecker {
    fn add(&mut self, stage: &str, check: &str, ok: bool) {
        self.items.push(RecheckItem {
            stage: stage.into(),
            check: check.into(),
            ok,
        });
    }

    /// A parse or evaluation error counts as a failed check.
    fn try_add(&mut self, stage: &str, check: &str, f: impl FnOnce() -> Result<bool>) {
        let ok = f().unwrap_or(false);
        self.add(stage, check, ok);
    }
}

fn stage_json<'a>(report: &'a Value, name: &str) -> Option<&'a Value> {
    report
        .get("stages")?
        .as_array()?
        .iter()
        .find(|s| s.get("stage").and_then(Value::as_str) == Some(name))
}

fn claimed(stage: &Value) -> Option<Status> {
    serde_json::from_value(stage.get("status")?.clone()).ok()
}

/// Re-verifies every certificate embedded in a JSON report against a model
/// rebuilt from the report's own source, seed and cap.
pub fn recheck(report: &Value) -> Result<RecheckReport> {
    let seed = report.get("seed").and_then(Value::as_u64).unwrap_or(crate::model::builtins::DEFAULT_SEED);
    let cap = report
        .get("cap")
        .and_then(Value::as_u64)
        .map_or(DEFAULT_CAP, |c| c as usize);
    let source = ModelSource::from_json(report.get("source").unwrap_or(&Value::Null))?;
    let m = source.load(seed, cap)?;
    let mut rc = Rechecker { items: Vec::new() };
    if let Some(v) = stage_json(report, "validation") {
        let valid = validate_model(&m).is_valid();
        rc.add("validation", "validity agrees", Some(Status::from(valid)) == claimed(v));
    }
    match build_effect_space(&m)? {
        EffectSpace::Exact(e) => recheck_backend::<Q>(&mut rc, report, &m, &e)?,
        EffectSpace::Float(e) => recheck_backend::<f64>(&mut rc, report, &m, &e)?,
    }
    let all_ok = rc.items.iter().all(|i| i.ok);
    Ok(RecheckReport {
        model: m.name.clone(),
        items: rc.items,
        all_ok,
    })
}

fn recheck_backend<F: Backend>(rc: &mut Rechecker, report: &Value, m: &Model, e: &OrderUnitSpace<F>) -> Result<()> {
    let g = F::linearize(m, e)?;
    if let Some(st) = stage_json(report, "spin") {
        if let Some(form) = st.pointer("/details/form").filter(|v| !v.is_null()) {
            rc.try_add("spin", "form is symmetric, invariant, normalized and orthogonalizing", || {
                let b: Mat<F> = parse_matrix(form)?;
                let flags = forms::evaluate_flags(m, e, &g, &b);
                Ok(linalg::is_symmetric(&b)
                    && flags.invariant.is_yes()
                    && flags.normalized.is_yes()
                    && flags.orthogonalizing.is_yes())
            });
            rc.try_add("spin", "positive definiteness agrees", || {
                let b: Mat<F> = parse_matrix(form)?;
                let claimed_pd = st.pointer("/details/flags/positive_definite").cloned();
                let pd: Tri = linalg::is_positive_definite(&b).into();
                Ok(claimed_pd == Some(to_value(&pd)))
            });
        }
    }
    if let Some(st) = stage_json(report, "conjugate") {
        if let Some(eta) = st.pointer("/details/eta") {
            rc.try_add("conjugate", "eta is a bipartite state", || {
                let mut w: BipartiteState<F> = composites::parse_bipartite(eta, m, m)?;
                if let Some(ext) = st.pointer("/details/extension").filter(|v| !v.is_null()) {
                    w.extension = Some(parse_matrix(ext)?);
                }
                Ok(bipartite_violations(&w, m, e, m, e).is_empty())
            });
        }
    }
    if let Some(st) = stage_json(report, "self-duality") {
        let form = st.pointer("/details/form").filter(|v| !v.is_null());
        if let (Some(form), Some(cert)) = (form, st.pointer("/details/certificate")) {
            rc.try_add("self-duality", "cone and dual rays match the model", || {
                let b = parse_form(form)?;
                let e = exact_space(m)?;
                let k = model_cone(&e)?;
                let rays = PolyhedralCone::new(k.dim, parse_q_rows(&cert["cone_rays"])?)?;
                let dual = PolyhedralCone::new(k.dim, parse_q_rows(&cert["dual_rays"])?)?;
                Ok(rays.equals(&k) && dual.equals(&cones::dual_cone(&k, &b)?))
            });
            rc.try_add("self-duality", "every ray certificate verifies", || {
                let cone_rays = parse_q_rows(&cert["cone_rays"])?;
                let dual_rays = parse_q_rows(&cert["dual_rays"])?;
                let checks = cert["checks"].as_array().ok_or_else(|| Error::Parse("checks".into()))?;
                let (mut ik, mut id) = (0, 0);
                let mut all_member = true;
                for c in checks {
                    let cert = parse_certificate(&c["certificate"])?;
                    all_member &= cert.is_member();
                    let ok = if c["direction"] == "cone-in-dual" {
                        ik += 1;
                        cert.verify(&dual_rays, cone_rays.get(ik - 1).ok_or_else(|| Error::Parse("ray".into()))?)
                    } else {
                        id += 1;
                        cert.verify(&cone_rays, dual_rays.get(id - 1).ok_or_else(|| Error::Parse("ray".into()))?)
                    };
                    if !ok {
                        return Ok(false);
                    }
                }
                Ok(ik == cone_rays.len()
                    && id == dual_rays.len()
                    && cert["verdict"].as_bool() == Some(all_member)
                    && claimed(st) == Some(all_member.into()))
            });
            if let Some(map) = st.pointer("/details/weak/map").filter(|v| !v.is_null()) {
                rc.try_add("self-duality", "weak map is an order isomorphism onto the dual", || {
                    let b = parse_form(form)?;
                    let t: Mat<Q> = parse_matrix(map)?;
                    let k = model_cone(&exact_space(m)?)?;
                    Ok(cones::is_order_isomorphism(&t, &k, &cones::dual_cone(&k, &b)?))
                });
            }
        }
        if let (Some(form), Some(s)) = (form, st.pointer("/details/sampled")) {
            rc.try_add("self-duality", "sampled verdict reproduces", || {
                let b: Mat<f64> = parse_matrix(form)?;
                let ops = e.operators.as_ref().ok_or_else(|| Error::Parse("operators".into()))?;
                let again = psd_self_duality(ops, &b, PSD_GRID);
                Ok(s["verdict"].as_bool() == Some(again.verdict)
                    && s["proportional_to_trace"].as_bool() == Some(again.proportional_to_trace))
            });
        }
    }
    if let Some(alg) = stage_json(report, "jordan-recovery").and_then(|s| s.pointer("/details/algebra")) {
        if !alg.is_null() {
            rc.try_add("jordan-recovery", "product is commutative, unital and Jordan", || {
                let j = parse_algebra::<F>(alg)?;
                let gate = verify_symmetric_cone(&j, VerifyOptions::default());
                Ok(gate.identity.passed && gate.formally_real)
            });
            if let Some(cands) = stage_json(report, "identification").and_then(|s| s.pointer("/details/identification/candidates")) {
                rc.try_add("identification", "candidates reproduce", || {
                    let j = parse_algebra::<F>(alg)?;
                    let id = identify_algebra(&j)?;
                    Ok(to_value(&id.candidates) == *cands)
                });
            }
        }
    }
    Ok(())
}

/// The irredundant exact cone `E(A)₊` of a polytope model.
pub fn exact_cone(m: &Model) -> Result<PolyhedralCone> {
    model_cone(&exact_space(m)?)
}

fn exact_space(m: &Model) -> Result<OrderUnitSpace<Q>> {
    match build_effect_space(m)? {
        EffectSpace::Exact(e) => Ok(e),
        EffectSpace::Float(_) => Err(Error::Unsupported("exact cone on a quantum model".into())),
    }
}

/// Reads an algebra back from its serialized form.
pub fn parse_algebra<F: Field>(v: &Value) -> Result<JordanAlgebra<F>> {
    let dim = v["dim"].as_u64().ok_or_else(|| Error::Parse("algebra dim".into()))? as usize;
    let list = |key: &str| -> Result<Vec<F>> {
        v[key]
            .as_array()
            .ok_or_else(|| Error::Parse(format!("algebra {key}")))?
            .iter()
            .map(parse_field)
            .collect()
    };
    let kind: Kind = v["kind"].as_str().unwrap_or("Recovered").parse()?;
    let mut j = JordanAlgebra::from_dense(kind, dim, &list("product")?, Vector::from_vec(list("unit")?))?;
    if let Some(labels) = v["labels"].as_array() {
        j.labels = labels.iter().filter_map(|l| l.as_str().map(String::from)).collect();
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtins::builtin;

    fn run(name: &str, expect: &[&str]) -> PipelineReport {
        let m = builtin(name).unwrap();
        let opts = PipelineOptions {
            expect: expect.iter().map(|s| s.to_string()).collect(),
            ..PipelineOptions::default()
        };
        run_pipeline(&m, &ModelSource::Builtin(name.into()), &opts)
    }

    fn status(r: &PipelineReport, s: &str) -> Status {
        r.stage(s).unwrap().status
    }

    #[test]
    fn trit_runs_clean() {
        let r = run("classical:3", &[]);
        assert_eq!(r.exit_code, 0, "{}", r.to_json());
        assert_eq!(r.stages.len(), STAGES.len());
        for (s, name) in r.stages.iter().zip(STAGES) {
            assert_eq!(s.stage, name);
        }
        assert_eq!(status(&r, "identification"), Status::Pass);
        let cands = &r.stage("identification").unwrap().details["identification"]["candidates"];
        assert_eq!(cands[0], "DirectSum(RealSym(1), RealSym(1), RealSym(1))");
        let form = &r.stage("spin").unwrap().details["form"];
        assert_eq!(form[0][0], "1/3");
        assert_eq!(form[0][1], "0");
    }

    #[test]
    fn squit_failures_are_expected() {
        let r = run("squit", &["not-self-dual", "not-sharp"]);
        assert_eq!(status(&r, "self-duality"), Status::Fail);
        assert_eq!(status(&r, "sharpness"), Status::Fail);
        assert_eq!(status(&r, "jordan-recovery"), Status::NotApplicable);
        assert_eq!(status(&r, "identification"), Status::NotApplicable);
        assert_eq!(r.exit_code, 0, "{:?}", r.unexpected_failures);
        let weak = &r.stage("self-duality").unwrap().details["weak"];
        assert_eq!(weak["verdict"], true);
        let bare = run("squit", &[]);
        assert_eq!(bare.exit_code, 1);
    }

    #[test]
    fn unmet_expectations_fail_the_run() {
        let r = run("classical:2", &["not-sharp"]);
        assert_eq!(r.unmet_expectations, vec!["sharpness"]);
        assert_eq!(r.exit_code, 1);
        assert!(expectation_stage("not-a-thing").is_err());
    }

    #[test]
    fn qubit_recovers_hermitian_product() {
        let r = run("qubit:complex", &[]);
        assert_eq!(r.exit_code, 0, "{}", r.to_json());
        let cands = &r.stage("identification").unwrap().details["identification"]["candidates"];
        assert!(cands.as_array().unwrap().iter().any(|c| c == "ComplexHerm(2)"));
        let idem = r.stage("jordan-recovery").unwrap().details["outcome_idempotence_residual"]
            .as_f64()
            .unwrap();
        assert!(idem < 1e-8);
    }

    #[test]
    fn reports_recheck() {
        for (name, expect) in [("classical:3", vec![]), ("squit", vec!["not-self-dual", "not-sharp"]), ("qubit:real", vec![])] {
            let r = run(name, &expect);
            let v: Value = serde_json::from_str(&r.to_json()).unwrap();
            let rc = recheck(&v).unwrap();
            assert!(rc.all_ok, "{name}: {:?}", rc.items);
            assert!(rc.items.len() >= 3, "{name}");
        }
    }

    #[test]
    fn tampered_report_fails_recheck() {
        let r = run("classical:3", &[]);
        let mut v: Value = serde_json::from_str(&r.to_json()).unwrap();
        let spin = v["stages"]
            .as_array_mut()
            .unwrap()
            .iter_mut()
            .find(|s| s["stage"] == "spin")
            .unwrap();
        spin["details"]["form"][0][1] = json!("1/7");
        assert!(!recheck(&v).unwrap().all_ok);
    }

    #[test]
    fn markdown_carries_every_stage() {
        let r = run("classical:2", &[]);
        let md = r.to_markdown();
        for s in STAGES {
            assert!(md.contains(&format!("## {s}")));
        }
    }

    #[test]
    fn form_override_parses() {
        let f = parse_form(&json!([["1/2", 0], [0, 0.5]])).unwrap();
        assert_eq!(f[(0, 0)], f[(1, 1)]);
        assert!(parse_form(&json!([[1, 2]])).is_err());
    }
}
