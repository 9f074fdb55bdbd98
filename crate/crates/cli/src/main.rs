use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use kvwb_core::cones::{dual_cone, is_weakly_self_dual, WEAK_RAY_CAP};
use kvwb_core::error::{Error, Result};
use kvwb_core::jordan::{from_kind, identify_algebra, verify_symmetric_cone, Kind, VerifyOptions};
use kvwb_core::linalg::Mat;
use kvwb_core::model::builtins::{builtin_with, BUILTIN_NAMES, DEFAULT_SEED};
use kvwb_core::model::io::ModelJson;
use kvwb_core::model::morphism::{check_image_closure, image_model, polytope_isomorphism, quantum_image_search, MorphismData};
use kvwb_core::model::{Model, TestSpace, DEFAULT_CAP};
use kvwb_core::pipeline::{self, exact_cone, parse_form, run_pipeline, ModelSource, PipelineOptions, PipelineReport, Status};
use kvwb_core::scalar::{Field, Q};

/// Finite probabilistic models: invariant forms, self-dual cones and
/// Jordan structure.
#[derive(Parser)]
#[command(name = "kvwb", version)]
struct Cli {
    /// Numerical tolerance for floating-point checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Enumeration cap for groups and searches.
    #[arg(long, global = true, env = "KVWB_CAP", default_value_t = DEFAULT_CAP)]
    cap: usize,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model JSON file.
    model: Option<PathBuf>,
    /// Use a built-in model instead of a file (see `kvwb list`).
    #[arg(long, conflicts_with = "model")]
    builtin: Option<String>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated failures that do not affect the exit code,
    /// e.g. `not-self-dual,not-sharp`.
    #[arg(long, value_delimiter = ',')]
    expect: Vec<String>,
    /// Bilinear form (JSON matrix) to use instead of the SPIN form.
    #[arg(long)]
    form: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Clone)]
struct StageArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated failures that do not affect the exit code.
    #[arg(long, value_delimiter = ',')]
    expect: Vec<String>,
}

#[derive(Args, Clone)]
struct FormArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Bilinear form (JSON matrix); defaults to the SPIN form.
    #[arg(long)]
    form: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Md,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every stage and print the JSON report.
    Run(RunArgs),
    /// Run every stage and print the report in the chosen format.
    Report(RunArgs),
    /// Check the model invariants.
    Validate(StageArgs),
    /// Transitivity of the symmetry group on states, tests and pairs.
    Bisym(StageArgs),
    /// The invariant orthogonalizing form and its uniqueness dimension.
    Spin(StageArgs),
    /// Search for a conjugate bipartite state.
    Conjugate(StageArgs),
    #[command(subcommand)]
    Cone(ConeCmd),
    /// Image of the model under an outcome map, or the quantum image search.
    Image {
        #[command(flatten)]
        model: ModelArgs,
        /// Outcome map JSON: {"target": {"outcomes", "tests"}, "map": {x: y}}.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    #[command(subcommand)]
    Jordan(JordanCmd),
    /// Re-verify every certificate embedded in a JSON report.
    Recheck {
        /// JSON report written by `run`.
        report: PathBuf,
    },
    /// List the built-in models.
    List,
}

#[derive(Subcommand)]
enum ConeCmd {
    /// Extreme rays of the cone and of its dual under the form.
    Dual(FormArgs),
    /// Exact self-duality certificate (sampled for quantum models).
    Selfdual(FormArgs),
    /// Search for a linear map taking the cone onto its dual.
    Weak(FormArgs),
}

#[derive(Subcommand)]
enum JordanCmd {
    /// Recover a Jordan product from the model's form and cone.
    Recover(StageArgs),
    /// Check a catalog algebra: Jordan identity, self-duality, homogeneity.
    Verify {
        /// e.g. `RealSym(3)`, `ComplexHerm(2)`, `QuatHerm(2)`, `SpinFactor(4)`.
        #[arg(long)]
        algebra: String,
        /// Perturb one structure constant first.
        #[arg(long)]
        corrupt: bool,
    },
    /// Identify the recovered algebra of a model, or a catalog algebra.
    Identify {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, conflicts_with_all = ["model", "builtin"])]
        algebra: Option<String>,
    },
}

struct Ctx {
    tol: f64,
    seed: u64,
    cap: usize,
}

impl Ctx {
    fn options(&self, expect: &[String], form: Option<Mat<Q>>, until: Option<&str>) -> PipelineOptions {
        PipelineOptions {
            tol: self.tol,
            seed: self.seed,
            cap: self.cap,
            expect: expect.to_vec(),
            form,
            until: until.map(String::from),
        }
    }

    fn load(&self, a: &ModelArgs) -> Result<(Model, ModelSource)> {
        let source = match (&a.builtin, &a.model) {
            (Some(b), _) => ModelSource::Builtin(b.clone()),
            (None, Some(p)) => ModelSource::Json(read_json(p)?),
            (None, None) => return Err(Error::Parse("give a model file or --builtin NAME".into())),
        };
        let m = source.load(self.seed, self.cap)?;
        Ok((m, source))
    }
}

fn read_json(p: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(p)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
}

fn read_form(p: &Path) -> Result<Mat<Q>> {
    let v = read_json(p)?;
    parse_form(v.get("form").unwrap_or(&v))
}

fn pretty<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

struct Output {
    text: String,
    code: u8,
}

fn stage_command(ctx: &Ctx, a: &StageArgs, stage: &str, form: Option<Mat<Q>>) -> Result<Output> {
    let (m, source) = ctx.load(&a.model)?;
    let report = run_pipeline(&m, &source, &ctx.options(&a.expect, form, Some(stage)));
    stage_output(&report, stage)
}

fn stage_output(report: &PipelineReport, stage: &str) -> Result<Output> {
    if let Some(e) = report.errors.first() {
        return Err(Error::Numerical(e.clone()));
    }
    let st = report
        .stage(stage)
        .ok_or_else(|| Error::Unsupported(format!("stage `{stage}` did not run")))?;
    let code = match st.status {
        Status::Pass => 0,
        Status::Fail if st.expected_failure => 0,
        _ => 1,
    };
    if stage == "validation" && st.status == Status::Fail {
        if let Some(vs) = st.details["violations"].as_array() {
            for v in vs {
                eprintln!("{}: {}", v["code"].as_str().unwrap_or("?"), v["message"].as_str().unwrap_or(""));
            }
        }
    }
    let text = pretty(&json!({
        "model": report.model,
        "seed": report.seed,
        "stage": st,
    }));
    Ok(Output { text, code })
}

/// The given form, else the SPIN form of the model.
fn resolve_form(ctx: &Ctx, m: &Model, source: &ModelSource, form: &Option<PathBuf>) -> Result<Mat<Q>> {
    if let Some(p) = form {
        return read_form(p);
    }
    let r = run_pipeline(m, source, &ctx.options(&[], None, Some("spin")));
    r.stage("spin")
        .map(|s| &s.details["form"])
        .filter(|f| !f.is_null())
        .ok_or_else(|| Error::Unsupported("the model has no SPIN form; pass --form".into()))
        .and_then(parse_form)
}

fn render_rays(rays: &[Vec<Q>]) -> Vec<Vec<String>> {
    rays.iter().map(|r| r.iter().map(Field::render).collect()).collect()
}

fn cone(ctx: &Ctx, cmd: &ConeCmd) -> Result<Output> {
    match cmd {
        ConeCmd::Selfdual(a) => {
            let form = a.form.as_deref().map(read_form).transpose()?;
            let args = StageArgs {
                model: a.model.clone(),
                expect: Vec::new(),
            };
            stage_command(ctx, &args, "self-duality", form)
        }
        ConeCmd::Dual(a) => {
            let (m, source) = ctx.load(&a.model)?;
            let b = resolve_form(ctx, &m, &source, &a.form)?;
            let k = exact_cone(&m)?;
            let d = dual_cone(&k, &b)?.irredundant();
            let text = pretty(&json!({
                "model": m.name,
                "form": kvwb_core::linearization::render_matrix(&b),
                "cone_rays": render_rays(&k.generators),
                "dual_rays": render_rays(&d.generators),
                "equal": d.equals(&k),
            }));
            Ok(Output { text, code: 0 })
        }
        ConeCmd::Weak(a) => {
            let (m, source) = ctx.load(&a.model)?;
            let b = resolve_form(ctx, &m, &source, &a.form)?;
            let k = exact_cone(&m)?;
            let w = is_weakly_self_dual(&k, &b, ctx.cap.min(WEAK_RAY_CAP))?;
            let code = if w.verdict.is_yes() { 0 } else { 1 };
            Ok(Output {
                text: pretty(&json!({ "model": m.name, "weak": w })),
                code,
            })
        }
    }
}

/// Built-in polytope models, the closure catalog for `image`.
fn polytope_catalog(ctx: &Ctx) -> Vec<(String, Model)> {
    BUILTIN_NAMES
        .iter()
        .filter_map(|n| builtin_with(n, ctx.seed, ctx.cap).ok().map(|m| (n.to_string(), m)))
        .filter(|(_, m)| !m.is_quantum())
        .collect()
}

fn parse_map(m: &Model, v: &Value) -> Result<MorphismData> {
    let target: Value = v.get("target").cloned().ok_or_else(|| Error::Parse("map needs `target`".into()))?;
    let outcomes: Vec<String> = serde_json::from_value(target["outcomes"].clone()).map_err(|e| Error::Parse(e.to_string()))?;
    let tests: Vec<Vec<String>> = serde_json::from_value(target["tests"].clone()).map_err(|e| Error::Parse(e.to_string()))?;
    let o: Vec<&str> = outcomes.iter().map(String::as_str).collect();
    let t: Vec<Vec<&str>> = tests.iter().map(|t| t.iter().map(String::as_str).collect()).collect();
    let t: Vec<&[&str]> = t.iter().map(Vec::as_slice).collect();
    let target = TestSpace::from_names(&o, &t)?;
    let pairs = v
        .get("map")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Parse("map needs an object `map`".into()))?;
    let pairs: Vec<(&str, &str)> = pairs
        .iter()
        .map(|(x, y)| Ok((x.as_str(), y.as_str().ok_or_else(|| Error::Parse(format!("target of `{x}`")))?)))
        .collect::<Result<_>>()?;
    MorphismData::from_names(&m.testspace, target, &pairs)
}

fn image(ctx: &Ctx, a: &ModelArgs, map: &Option<PathBuf>) -> Result<Output> {
    let (m, _) = ctx.load(a)?;
    let Some(p) = map else {
        if !m.is_quantum() {
            return Err(Error::Unsupported("polytope models need --map".into()));
        }
        let s = quantum_image_search(&m)?;
        let code = if s.no_nontrivial_images { 0 } else { 1 };
        return Ok(Output { text: pretty(&s), code });
    };
    let f = parse_map(&m, &read_json(p)?)?;
    let img = image_model(&m, &f)?;
    let catalog = polytope_catalog(ctx);
    let isomorphic: Vec<&str> = catalog
        .iter()
        .filter(|(_, c)| polytope_isomorphism(&img, c).is_some())
        .map(|(n, _)| n.as_str())
        .collect();
    let models: Vec<Model> = catalog.iter().map(|(_, c)| c.clone()).collect();
    let text = pretty(&json!({
        "model": m.name,
        "image": ModelJson::from_model(&img),
        "isomorphic_to": isomorphic,
        "image_closed_in_builtins": check_image_closure(&models, &f),
    }));
    Ok(Output { text, code: 0 })
}

fn catalog_algebra(name: &str) -> Result<kvwb_core::jordan::JordanAlgebra<Q>> {
    let kind: Kind = name.parse()?;
    from_kind(&kind).ok_or_else(|| Error::Unsupported(format!("no catalog algebra for {kind}")))
}

fn jordan(ctx: &Ctx, cmd: &JordanCmd) -> Result<Output> {
    match cmd {
        JordanCmd::Recover(a) => stage_command(ctx, a, "jordan-recovery", None),
        JordanCmd::Verify { algebra, corrupt } => {
            let mut j = catalog_algebra(algebra)?;
            if *corrupt {
                j = j.corrupted();
            }
            let r = verify_symmetric_cone(
                &j,
                VerifyOptions {
                    seed: ctx.seed,
                    tol: ctx.tol,
                    ..VerifyOptions::default()
                },
            );
            let code = if r.passed { 0 } else { 1 };
            Ok(Output { text: pretty(&r), code })
        }
        JordanCmd::Identify { model, algebra: Some(name) } => {
            let _ = model;
            let id = identify_algebra(&catalog_algebra(name)?)?;
            Ok(Output { text: pretty(&id), code: 0 })
        }
        JordanCmd::Identify { model, algebra: None } => {
            let a = StageArgs {
                model: model.clone(),
                expect: Vec::new(),
            };
            stage_command(ctx, &a, "identification", None)
        }
    }
}

fn run(ctx: &Ctx, a: &RunArgs, format: Format) -> Result<Output> {
    let form = a.form.as_deref().map(read_form).transpose()?;
    let (m, source) = ctx.load(&a.model)?;
    let report = run_pipeline(&m, &source, &ctx.options(&a.expect, form, None));
    for e in &report.errors {
        eprintln!("error: {e}");
    }
    let text = match format {
        Format::Json => report.to_json(),
        Format::Md => report.to_markdown(),
    };
    Ok(Output {
        text,
        code: report.exit_code as u8,
    })
}

fn dispatch(ctx: &Ctx, cmd: &Cmd) -> Result<Output> {
    match cmd {
        Cmd::Run(a) => run(ctx, a, a.format),
        Cmd::Report(a) => run(ctx, a, a.format),
        Cmd::Validate(a) => stage_command(ctx, a, "validation", None),
        Cmd::Bisym(a) => stage_command(ctx, a, "bisymmetry", None),
        Cmd::Spin(a) => stage_command(ctx, a, "spin", None),
        Cmd::Conjugate(a) => stage_command(ctx, a, "conjugate", None),
        Cmd::Cone(c) => cone(ctx, c),
        Cmd::Image { model, map } => image(ctx, model, map),
        Cmd::Jordan(j) => jordan(ctx, j),
        Cmd::Recheck { report } => {
            let r = pipeline::recheck(&read_json(report)?)?;
            let code = if r.all_ok { 0 } else { 1 };
            Ok(Output { text: pretty(&r), code })
        }
        Cmd::List => Ok(Output {
            text: BUILTIN_NAMES.join("\n") + "\n",
            code: 0,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        tol: cli.tol,
        seed: cli.seed,
        cap: cli.cap,
    };
    match dispatch(&ctx, &cli.cmd) {
        Ok(out) => {
            let written = match &cli.out {
                Some(p) => std::fs::write(p, &out.text),
                None => {
                    print!("{}", out.text);
                    Ok(())
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
