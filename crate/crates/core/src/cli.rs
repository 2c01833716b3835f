//! The `strobo` command-line front end.
//!
//! Exit codes: 0 success, 2 input or parse error, 3 domain-invariant
//! violation, 4 observability / time-grid / rank condition unmet.

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::algebra::{max_abs, pauli, CMatrix, HermitianOperator, Tolerances, C64};
use crate::channels::{DecoherenceModel, KrausFamilySpec};
use crate::error::Error;
use crate::generators::{
    gksl_generator, model_generator, parameter_sweep, spectrum_report, GkslComponents,
    JumpOperator, SpectrumReport, Superoperator, SweepPoint,
};
use crate::io::{matrix_from_json, matrix_to_json, MatrixJson};
use crate::observability::{
    alpha_at, is_reconstructible, suggest_observables, validate_time_grid, ObservableSet,
    Reconstructibility, TimeGridCertificate,
};
use crate::reconstruction::{
    dephasing_closed_form, reconstruct_alpha, reconstruct_direct, simulate_measurements,
    DensityMatrix, MeasurementRecord, ReconstructionResult,
};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_CONDITION: i32 = 4;

/// Absolute bound on generator trace/hermiticity defects, per unit of `max |L_ij|`.
const TOL_GENERATOR: f64 = 1e-10;
const HERMITICITY_SAMPLES: usize = 32;

#[derive(Debug, Parser)]
#[command(
    name = "strobo",
    version,
    about = "Stroboscopic tomography of open quantum systems"
)]
pub struct Cli {
    /// Emit machine-readable JSON instead of a text report.
    #[arg(long, global = true)]
    pub json: bool,
    /// Eigenvalue clustering tolerance, relative to max(1, spectral radius).
    #[arg(long, global = true, value_name = "TOL")]
    pub tol_cluster: Option<f64>,
    /// Relative singular-value threshold for numerical rank.
    #[arg(long, global = true, value_name = "TOL")]
    pub tol_rank: Option<f64>,
    /// Relative determinant threshold for time-grid certificates.
    #[arg(long, global = true, value_name = "TOL")]
    pub tol_det: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectrum, index of cyclicity and minimal polynomial degree of a model.
    Analyze { model: PathBuf },
    /// Suggest a minimal observable set or check a given one.
    Observables(ObservablesArgs),
    /// Certify a measurement time grid.
    Plan {
        model: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        times: Vec<f64>,
    },
    /// Simulate a measurement record (always JSON).
    Simulate(SimulateArgs),
    /// Reconstruct the initial state from a measurement record.
    Reconstruct {
        model: PathBuf,
        /// Record file, or `-` for stdin.
        #[arg(long)]
        record: String,
        #[arg(long, value_enum, default_value_t = MethodArg::Alpha)]
        method: MethodArg,
    },
    /// Spectrum of the one-parametric family over a range of `a`.
    Sweep {
        model: PathBuf,
        /// `lo:hi:step`, or a single value.
        #[arg(long)]
        a_range: String,
    },
    /// Built-in end-to-end walkthroughs.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
}

#[derive(Debug, Args)]
pub struct ObservablesArgs {
    pub model: PathBuf,
    #[arg(long, conflicts_with = "check", required_unless_present = "check")]
    pub suggest: bool,
    /// File with the observable matrices to check.
    #[arg(long, value_name = "FILE")]
    pub check: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub observables: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    pub times: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Alpha,
    Direct,
    ClosedForm,
}

#[derive(Debug, Subcommand)]
pub enum Demo {
    /// Qubit dephasing: generator, eta, mu, observables, alpha functions, closed form.
    Dephasing {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.5)]
        t1: f64,
        #[arg(long, default_value_t = 1.0)]
        t2: f64,
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.3, 0.4, 0.5], allow_hyphen_values = true)]
        bloch: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            kind: "input",
            message: message.into(),
        }
    }

    fn invariant(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INVARIANT,
            kind: "invariant",
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::NotReconstructible { .. } => (EXIT_CONDITION, "observability_condition"),
            Error::SingularTimeGrid { .. } => (EXIT_CONDITION, "time_grid_condition"),
            Error::RankDeficient { .. } => (EXIT_CONDITION, "rank_deficient"),
            Error::IllConditioned { .. }
            | Error::SearchFailed { .. }
            | Error::EigenFailure
            | Error::ExpOverflow { .. }
            | Error::InconsistentSpectrum(_)
            | Error::ZeroTraceAfterClipping => (EXIT_CONDITION, "numerical"),
            Error::NotHermitian { .. }
            | Error::NotDensityMatrix(_)
            | Error::NegativeRate { .. } => (EXIT_INVARIANT, "invariant"),
            Error::DimensionMismatch { .. }
            | Error::NotSquareLength(_)
            | Error::NonFinite
            | Error::InvalidParameter(_)
            | Error::EmptyObservableSet
            | Error::WrongGridSize { .. } => (EXIT_INPUT, "input"),
        };
        CliError {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses arguments, runs the command, prints the report and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(out) => {
            print!("{}", out.text);
            out.code
        }
        Err(e) => {
            if json {
                let body = serde_json::json!({
                    "error": { "kind": e.kind, "exit_code": e.code, "message": e.message }
                });
                eprintln!("{body}");
            } else {
                eprintln!("strobo: {}", e.message);
            }
            e.code
        }
    }
}

/// Rendered output plus the exit code. A report can be printed and still
/// signal an unmet condition (e.g. a failed `--check`).
#[derive(Debug, Clone)]
pub struct Output {
    pub text: String,
    pub code: i32,
}

impl Output {
    fn ok(text: String) -> Self {
        Output { text, code: 0 }
    }
}

pub fn run(cli: Cli) -> CliResult<Output> {
    let defaults = Tolerances::default();
    let tol = Tolerances {
        cluster: cli.tol_cluster.unwrap_or(defaults.cluster),
        rank: cli.tol_rank.unwrap_or(defaults.rank),
        det: cli.tol_det.unwrap_or(defaults.det),
    };
    for (name, v) in [
        ("tol-cluster", tol.cluster),
        ("tol-rank", tol.rank),
        ("tol-det", tol.det),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CliError::input(format!(
                "--{name} must be positive, got {v}"
            )));
        }
    }
    let json = cli.json;
    match cli.command {
        Command::Analyze { model } => analyze(&model, &tol, json),
        Command::Observables(args) => observables(&args, &tol, json),
        Command::Plan { model, times } => plan(&model, &times, &tol, json),
        Command::Simulate(args) => simulate(&args),
        Command::Reconstruct {
            model,
            record,
            method,
        } => reconstruct(&model, &record, method, &tol, json),
        Command::Sweep { model, a_range } => sweep(&model, &a_range, &tol, json),
        Command::Demo {
            which:
                Demo::Dephasing {
                    gamma,
                    t1,
                    t2,
                    bloch,
                },
        } => demo_dephasing(gamma, t1, t2, [bloch[0], bloch[1], bloch[2]], &tol, json),
    }
}

// ---------------------------------------------------------------- input files

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModelName {
    Dephasing,
    Depolarizing,
    OneParametric,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    model: Option<ModelName>,
    gamma: Option<f64>,
    a: Option<f64>,
    gksl: Option<GkslFile>,
    generator: Option<MatrixJson>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GkslFile {
    hamiltonian: Option<MatrixJson>,
    #[serde(default)]
    jumps: Vec<JumpFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JumpFile {
    operator: MatrixJson,
    rate: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum StateFile {
    Bloch { bloch: Vec<f64> },
    Matrix(MatrixJson),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ObservablesFile {
    List(Vec<MatrixJson>),
    Wrapped { observables: Vec<MatrixJson> },
}

/// Same layout as a serialized [`MeasurementRecord`]; read loosely so that a
/// non-Hermitian observable is reported as an invariant violation.
#[derive(Debug, Deserialize)]
struct RecordFile {
    observables: Vec<MatrixJson>,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    #[serde(default)]
    noise_sigma: f64,
}

struct Model {
    generator: Superoperator,
    spec: Option<KrausFamilySpec>,
}

fn read_text(path: &Path) -> CliResult<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::input(format!("reading stdin: {e}")))?;
        return Ok(s);
    }
    std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{} is not a valid {what}: {e}", path.display())))
}

fn spec_of(name: ModelName, gamma: f64, a: Option<f64>) -> CliResult<KrausFamilySpec> {
    let model = match name {
        ModelName::Dephasing => DecoherenceModel::Dephasing,
        ModelName::Depolarizing => DecoherenceModel::Depolarizing,
        ModelName::OneParametric => DecoherenceModel::OneParametric {
            a: a.ok_or_else(|| CliError::input("one_parametric model needs a parameter \"a\""))?,
        },
    };
    Ok(KrausFamilySpec::new(model, gamma)?)
}

fn load_model_file(path: &Path) -> CliResult<ModelFile> {
    let f: ModelFile = parse_json(path, "model file")?;
    let present = [f.model.is_some(), f.gksl.is_some(), f.generator.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    if present != 1 {
        return Err(CliError::input(
            "model file needs exactly one of \"model\", \"gksl\" or \"generator\"",
        ));
    }
    if f.model.is_none() && (f.gamma.is_some() || f.a.is_some()) {
        return Err(CliError::input(
            "\"gamma\" and \"a\" only apply to built-in models",
        ));
    }
    Ok(f)
}

fn build_model(f: ModelFile) -> CliResult<Model> {
    if let Some(name) = f.model {
        let gamma = f
            .gamma
            .ok_or_else(|| CliError::input("built-in model needs \"gamma\""))?;
        let spec = spec_of(name, gamma, f.a)?;
        if name != ModelName::OneParametric && f.a.is_some() {
            return Err(CliError::input(
                "\"a\" only applies to the one_parametric model",
            ));
        }
        return Ok(Model {
            generator: model_generator(&spec)?,
            spec: Some(spec),
        });
    }
    if let Some(g) = f.gksl {
        let jumps = g
            .jumps
            .iter()
            .map(|j| {
                Ok(JumpOperator {
                    operator: matrix_from_json(&j.operator)?,
                    rate: j.rate,
                })
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let hamiltonian = match &g.hamiltonian {
            Some(h) => HermitianOperator::new(matrix_from_json(h)?)?,
            None => {
                let first = jumps.first().ok_or_else(|| {
                    CliError::input("gksl model needs a hamiltonian or at least one jump")
                })?;
                let n = first.operator.nrows();
                HermitianOperator::new(CMatrix::zeros(n, n))?
            }
        };
        let generator = gksl_generator(&GkslComponents::new(hamiltonian, jumps)?)?;
        return Ok(Model {
            generator,
            spec: None,
        });
    }
    let m = matrix_from_json(f.generator.as_ref().expect("checked exactly one"))?;
    Ok(Model {
        generator: Superoperator::from_matrix(m)?,
        spec: None,
    })
}

#[derive(Debug, Clone, Serialize)]
struct GeneratorChecks {
    trace_preservation_defect: f64,
    hermiticity_preservation_defect: f64,
    tolerance: f64,
    ok: bool,
}

fn generator_checks(l: &Superoperator) -> GeneratorChecks {
    let tolerance = TOL_GENERATOR * max_abs(l.matrix()).max(1.0);
    let tp = l.trace_preservation_defect();
    let hp = l.hermiticity_preservation_defect(HERMITICITY_SAMPLES, 0);
    GeneratorChecks {
        trace_preservation_defect: tp,
        hermiticity_preservation_defect: hp,
        tolerance,
        ok: tp <= tolerance && hp <= tolerance,
    }
}

fn ensure_generator(l: &Superoperator) -> CliResult<()> {
    let c = generator_checks(l);
    if c.trace_preservation_defect > c.tolerance {
        return Err(CliError::invariant(format!(
            "generator is not trace preserving (defect {:.3e})",
            c.trace_preservation_defect
        )));
    }
    if c.hermiticity_preservation_defect > c.tolerance {
        return Err(CliError::invariant(format!(
            "generator does not preserve hermiticity (defect {:.3e})",
            c.hermiticity_preservation_defect
        )));
    }
    Ok(())
}

fn load_model(path: &Path) -> CliResult<Model> {
    let model = build_model(load_model_file(path)?)?;
    ensure_generator(&model.generator)?;
    Ok(model)
}

fn hermitian_list(ms: &[MatrixJson]) -> CliResult<ObservableSet> {
    let ops = ms
        .iter()
        .map(|m| Ok(HermitianOperator::new(matrix_from_json(m)?)?))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(ObservableSet::new(ops)?)
}

fn load_observables(path: &Path) -> CliResult<ObservableSet> {
    match parse_json::<ObservablesFile>(path, "observables file")? {
        ObservablesFile::List(ms) | ObservablesFile::Wrapped { observables: ms } => {
            hermitian_list(&ms)
        }
    }
}

fn load_state(path: &Path) -> CliResult<DensityMatrix> {
    match parse_json::<StateFile>(path, "state file")? {
        StateFile::Bloch { bloch } => {
            let s: [f64; 3] = bloch
                .try_into()
                .map_err(|_| CliError::input("\"bloch\" needs exactly three coordinates"))?;
            Ok(DensityMatrix::from_bloch(s)?)
        }
        StateFile::Matrix(m) => Ok(DensityMatrix::from_matrix(matrix_from_json(&m)?)?),
    }
}

fn load_record(source: &str) -> CliResult<MeasurementRecord> {
    let f: RecordFile = parse_json(Path::new(source), "measurement record")?;
    let record = MeasurementRecord {
        observables: hermitian_list(&f.observables)?,
        times: f.times,
        values: f.values,
        noise_sigma: f.noise_sigma,
    };
    record.validate()?;
    Ok(record)
}

fn check_model_dim(l: &Superoperator, n: usize, what: &str) -> CliResult<()> {
    if l.hilbert_dim() != n {
        return Err(CliError::input(format!(
            "{what} is {n}x{n} but the model acts on {0}x{0} operators",
            l.hilbert_dim()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- rendering

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

fn fmt_c(z: C64) -> String {
    let snap = |x: f64| if x.abs() < 5e-7 { 0.0 } else { x };
    let z = C64::new(snap(z.re), snap(z.im));
    let scale = z.norm().max(1.0);
    if z.im.abs() <= 1e-12 * scale {
        format!("{:.6}", z.re)
    } else if z.re.abs() <= 1e-12 * scale {
        format!("{:.6}i", z.im)
    } else {
        format!("{:.6}{:+.6}i", z.re, z.im)
    }
}

fn fmt_matrix(m: &CMatrix, indent: &str) -> String {
    let cells: Vec<Vec<String>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| fmt_c(m[(i, j)])).collect())
        .collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(0);
    let mut s = String::new();
    for row in cells {
        let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        let _ = writeln!(s, "{indent}[{}]", line.join("  "));
    }
    s
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn fmt_spectrum(s: &mut String, r: &SpectrumReport) {
    let _ = writeln!(
        s,
        "eigenvalue clusters (value: algebraic, geometric, index):"
    );
    for c in &r.clusters {
        let _ = writeln!(
            s,
            "  {:>22}: {}, {}, {}",
            fmt_c(c.value),
            c.algebraic,
            c.geometric,
            c.index
        );
    }
    let _ = writeln!(s, "index of cyclicity eta = {}", r.eta);
    let _ = writeln!(s, "minimal polynomial degree mu = {}", r.mu);
    let _ = writeln!(s, "degenerate: {}", if r.degenerate { "yes" } else { "no" });
}

fn fmt_reconstructibility(s: &mut String, r: &Reconstructibility) {
    let _ = writeln!(
        s,
        "observability: {} ({} of {} dimensions)",
        if r.ok { "ok" } else { "FAILED" },
        r.achieved_dim,
        r.required_dim
    );
    let dims: Vec<String> = r.krylov_dims.iter().map(usize::to_string).collect();
    let _ = writeln!(s, "Krylov dimensions d_i: ({})", dims.join(", "));
}

fn fmt_certificate(s: &mut String, c: &TimeGridCertificate) {
    let _ = writeln!(s, "times: {}", fmt_list(&c.times));
    let _ = writeln!(s, "alpha matrix (row j: alpha_k(t_j)):");
    for row in &c.alpha_matrix {
        let _ = writeln!(s, "  [{}]", fmt_list(row));
    }
    let _ = writeln!(s, "determinant: {:.6e}", c.determinant);
    let _ = writeln!(s, "valid: {}", if c.valid { "yes" } else { "no" });
}

fn fmt_result(s: &mut String, r: &ReconstructionResult) {
    let method = serde_json::to_value(r.method).expect("method");
    let _ = writeln!(s, "method: {}", method.as_str().unwrap_or_default());
    if let Some(b) = r.rho0.bloch() {
        let _ = writeln!(s, "bloch: ({})", fmt_list(&b));
    }
    let _ = writeln!(s, "rho0:");
    s.push_str(&fmt_matrix(r.rho0.matrix(), "  "));
    let _ = writeln!(s, "residual: {:.3e}", r.residual);
    let _ = writeln!(s, "condition: {:.3e}", r.condition);
}

// ---------------------------------------------------------------- commands

#[derive(Debug, Serialize)]
struct AnalyzeReport {
    hilbert_dim: usize,
    spectrum: SpectrumReport,
    checks: GeneratorChecks,
    /// One-parametric family at a in {0, 1, 2}.
    collision_point: bool,
}

fn analyze(path: &Path, tol: &Tolerances, json: bool) -> CliResult<Output> {
    let model = build_model(load_model_file(path)?)?;
    let l = &model.generator;
    let report = AnalyzeReport {
        hilbert_dim: l.hilbert_dim(),
        spectrum: spectrum_report(l, tol)?,
        checks: generator_checks(l),
        collision_point: model.spec.is_some_and(|s| s.is_boundary_or_collision()),
    };
    let code = if report.checks.ok { 0 } else { EXIT_INVARIANT };
    if json {
        return Ok(Output {
            text: to_json(&report),
            code,
        });
    }
    let mut s = String::new();
    let _ = writeln!(s, "Hilbert space dimension N = {}", report.hilbert_dim);
    fmt_spectrum(&mut s, &report.spectrum);
    let c = &report.checks;
    let _ = writeln!(
        s,
        "trace preservation defect: {:.3e}\nhermiticity preservation defect: {:.3e}\ninvariants: {}",
        c.trace_preservation_defect,
        c.hermiticity_preservation_defect,
        if c.ok { "ok" } else { "VIOLATED" }
    );
    if report.collision_point {
        let _ = writeln!(s, "note: a is a collision point of the family spectrum");
    }
    Ok(Output { text: s, code })
}

#[derive(Debug, Serialize)]
struct SuggestReport {
    observables: ObservableSet,
    certificate: Reconstructibility,
}

fn observables(args: &ObservablesArgs, tol: &Tolerances, json: bool) -> CliResult<Output> {
    let model = load_model(&args.model)?;
    let l = &model.generator;
    if let Some(file) = &args.check {
        let qs = load_observables(file)?;
        check_model_dim(l, qs.dim(), "observable")?;
        let r = is_reconstructible(l, &qs, tol)?;
        let code = if r.ok { 0 } else { EXIT_CONDITION };
        let text = if json {
            to_json(&r)
        } else {
            let mut s = String::new();
            fmt_reconstructibility(&mut s, &r);
            s
        };
        return Ok(Output { text, code });
    }
    let qs = suggest_observables(l, tol, args.seed)?;
    let report = SuggestReport {
        certificate: is_reconstructible(l, &qs, tol)?,
        observables: qs,
    };
    if json {
        return Ok(Output::ok(to_json(&report)));
    }
    let mut s = String::new();
    let _ = writeln!(s, "{} observable(s):", report.observables.len());
    for (i, q) in report.observables.iter().enumerate() {
        let _ = writeln!(s, "Q{}:", i + 1);
        s.push_str(&fmt_matrix(q.matrix(), "  "));
    }
    fmt_reconstructibility(&mut s, &report.certificate);
    Ok(Output::ok(s))
}

fn plan(path: &Path, times: &[f64], tol: &Tolerances, json: bool) -> CliResult<Output> {
    let model = load_model(path)?;
    let cert = validate_time_grid(&model.generator, times, tol)?;
    let code = if cert.valid { 0 } else { EXIT_CONDITION };
    let text = if json {
        to_json(&cert)
    } else {
        let mut s = String::new();
        fmt_certificate(&mut s, &cert);
        s
    };
    Ok(Output { text, code })
}

fn simulate(args: &SimulateArgs) -> CliResult<Output> {
    let model = load_model(&args.model)?;
    let rho0 = load_state(&args.state)?;
    let qs = load_observables(&args.observables)?;
    check_model_dim(&model.generator, rho0.dim(), "state")?;
    check_model_dim(&model.generator, qs.dim(), "observable")?;
    let record = simulate_measurements(
        &model.generator,
        &rho0,
        &qs,
        &args.times,
        args.noise,
        args.seed,
    )?;
    Ok(Output::ok(to_json(&record)))
}

#[derive(Debug, Serialize)]
struct ReconstructReport {
    #[serde(flatten)]
    result: ReconstructionResult,
    bloch: Option<[f64; 3]>,
}

fn is_close(a: &CMatrix, b: &CMatrix) -> bool {
    a.shape() == b.shape() && crate::algebra::max_abs_diff(a, b) <= 1e-12
}

fn closed_form_from_record(
    model: &Model,
    record: &MeasurementRecord,
) -> CliResult<ReconstructionResult> {
    let gamma = match model.spec {
        Some(KrausFamilySpec {
            model: DecoherenceModel::Dephasing,
            gamma,
        }) => gamma,
        _ => {
            return Err(CliError::input(
                "closed-form method needs the built-in dephasing model",
            ))
        }
    };
    let q1 = pauli(1);
    let q2 = pauli(2) + pauli(3);
    let qs = record.observables.observables();
    if qs.len() != 2 || !is_close(qs[0].matrix(), &q1) || !is_close(qs[1].matrix(), &q2) {
        return Err(CliError::input(
            "closed-form method needs observables [sigma_1, sigma_2 + sigma_3] in that order",
        ));
    }
    if record.times.len() != 2 {
        return Err(CliError::input(
            "closed-form method needs exactly two instants",
        ));
    }
    let (t1, t2) = (record.times[0], record.times[1]);
    let v = &record.values;
    Ok(dephasing_closed_form(
        gamma, t1, t2, v[0][0], v[1][0], v[1][1],
    )?)
}

fn reconstruct(
    path: &Path,
    source: &str,
    method: MethodArg,
    tol: &Tolerances,
    json: bool,
) -> CliResult<Output> {
    let model = load_model(path)?;
    let record = load_record(source)?;
    let l = &model.generator;
    check_model_dim(l, record.observables.dim(), "record observable")?;
    let qs = record.observables.clone();
    let result = match method {
        MethodArg::Alpha => reconstruct_alpha(l, &qs, &record, tol).map_err(|e| match e {
            Error::WrongGridSize { expected, found } => CliError::input(format!(
                "alpha method needs exactly mu = {expected} instants, record has {found}; \
                 try --method direct"
            )),
            e => e.into(),
        })?,
        MethodArg::Direct => reconstruct_direct(l, &qs, &record, tol)?,
        MethodArg::ClosedForm => closed_form_from_record(&model, &record)?,
    };
    if json {
        let bloch = result.rho0.bloch();
        return Ok(Output::ok(to_json(&ReconstructReport { result, bloch })));
    }
    let mut s = String::new();
    fmt_result(&mut s, &result);
    Ok(Output::ok(s))
}

pub fn parse_a_range(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |p: &str| -> CliResult<f64> {
        p.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| CliError::input(format!("bad number {p:?} in --a-range")))
    };
    let values = match parts.as_slice() {
        [a] => vec![num(a)?],
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if !(step > 0.0) || hi < lo {
                return Err(CliError::input("--a-range needs lo <= hi and step > 0"));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=count).map(|k| lo + k as f64 * step).collect()
        }
        _ => {
            return Err(CliError::input(
                "--a-range must be lo:hi:step or a single value",
            ))
        }
    };
    if let Some(bad) = values.iter().find(|a| !(0.0..=2.0).contains(*a)) {
        return Err(CliError::input(format!("a = {bad} lies outside [0, 2]")));
    }
    Ok(values)
}

fn sweep(path: &Path, a_range: &str, tol: &Tolerances, json: bool) -> CliResult<Output> {
    let f = load_model_file(path)?;
    if f.model != Some(ModelName::OneParametric) {
        return Err(CliError::input("sweep needs a one_parametric model file"));
    }
    let gamma = f
        .gamma
        .ok_or_else(|| CliError::input("built-in model needs \"gamma\""))?;
    let values = parse_a_range(a_range)?;
    let points: Vec<SweepPoint> = parameter_sweep(gamma, &values, tol)?;
    if json {
        return Ok(Output::ok(to_json(&points)));
    }
    let mut s = String::new();
    let _ = writeln!(s, "{:>8}  {:>4}  eigenvalues", "a", "eta");
    for p in &points {
        let eig: Vec<String> = p.report.eigenvalues().into_iter().map(fmt_c).collect();
        let _ = writeln!(
            s,
            "{:>8.4}  {:>4}  {{{}}}{}",
            p.a,
            p.report.eta,
            eig.join(", "),
            if p.report.degenerate {
                "  degenerate"
            } else {
                ""
            }
        );
    }
    Ok(Output::ok(s))
}

#[derive(Debug, Serialize)]
struct DemoReport {
    gamma: f64,
    #[serde(with = "crate::io::matrix")]
    generator: CMatrix,
    spectrum: SpectrumReport,
    observables: ObservableSet,
    observability: Reconstructibility,
    alpha: Vec<(f64, Vec<f64>)>,
    grid: TimeGridCertificate,
    record: MeasurementRecord,
    closed_form: ReconstructionResult,
    alpha_pipeline: ReconstructionResult,
    direct: ReconstructionResult,
    /// Largest entrywise difference among the three reconstructions.
    max_disagreement: f64,
    /// Largest entrywise difference from the input state.
    error: f64,
}

fn demo_dephasing(
    gamma: f64,
    t1: f64,
    t2: f64,
    bloch: [f64; 3],
    tol: &Tolerances,
    json: bool,
) -> CliResult<Output> {
    let spec = KrausFamilySpec::new(DecoherenceModel::Dephasing, gamma)?;
    let l = model_generator(&spec)?;
    let spectrum = spectrum_report(&l, tol)?;
    let q1 = HermitianOperator::pauli(1);
    let q2 = &HermitianOperator::pauli(2) + &HermitianOperator::pauli(3);
    let qs = ObservableSet::new(vec![q1, q2])?;
    let observability = is_reconstructible(&l, &qs, tol)?;
    let alpha = [t1, t2]
        .iter()
        .map(|&t| Ok((t, alpha_at(&l, t, tol)?)))
        .collect::<crate::Result<Vec<_>>>()?;
    let grid = validate_time_grid(&l, &[t1, t2], tol)?;
    let rho0 = DensityMatrix::from_bloch(bloch)?;
    let record = simulate_measurements(&l, &rho0, &qs, &[t1, t2], 0.0, 0)?;
    let v = &record.values;
    let closed_form = dephasing_closed_form(gamma, t1, t2, v[0][0], v[1][0], v[1][1])?;
    let alpha_pipeline = reconstruct_alpha(&l, &qs, &record, tol)?;
    let direct = reconstruct_direct(&l, &qs, &record, tol)?;
    let diff = crate::algebra::max_abs_diff;
    let max_disagreement = diff(closed_form.rho0.matrix(), alpha_pipeline.rho0.matrix())
        .max(diff(closed_form.rho0.matrix(), direct.rho0.matrix()))
        .max(diff(alpha_pipeline.rho0.matrix(), direct.rho0.matrix()));
    let error = diff(closed_form.rho0.matrix(), rho0.matrix());
    let report = DemoReport {
        gamma,
        generator: l.matrix().clone(),
        spectrum,
        observables: qs,
        observability,
        alpha,
        grid,
        record,
        closed_form,
        alpha_pipeline,
        direct,
        max_disagreement,
        error,
    };
    if json {
        return Ok(Output::ok(to_json(&report)));
    }
    let mut s = String::new();
    let _ = writeln!(s, "== qubit dephasing, gamma = {gamma}");
    let _ = writeln!(s, "\ngenerator L (column-stacking):");
    s.push_str(&fmt_matrix(&report.generator, "  "));
    let _ = writeln!(s);
    fmt_spectrum(&mut s, &report.spectrum);
    let _ = writeln!(s, "\nobservables Q1 = sigma_1, Q2 = sigma_2 + sigma_3");
    fmt_reconstructibility(&mut s, &report.observability);
    let _ = writeln!(
        s,
        "\nalpha functions: alpha_0 = 1, alpha_1 = (1 - exp(-gamma t)) / gamma"
    );
    for (t, a) in &report.alpha {
        let _ = writeln!(s, "  t = {t}: ({})", fmt_list(a));
    }
    let _ = writeln!(s);
    fmt_certificate(&mut s, &report.grid);
    let _ = writeln!(
        s,
        "\ninitial state bloch ({}), exact record:",
        fmt_list(&bloch)
    );
    for (name, row) in ["m1", "m2"].iter().zip(&report.record.values) {
        let _ = writeln!(s, "  {name}(t) = ({})", fmt_list(row));
    }
    let _ = writeln!(s, "\n-- closed form");
    fmt_result(&mut s, &report.closed_form);
    let _ = writeln!(s, "\n-- alpha pipeline");
    fmt_result(&mut s, &report.alpha_pipeline);
    let _ = writeln!(s, "\n-- direct stacked");
    fmt_result(&mut s, &report.direct);
    let _ = writeln!(
        s,
        "\nmax disagreement between routes: {:.3e}\nmax error against input: {:.3e}",
        report.max_disagreement, report.error
    );
    Ok(Output::ok(s))
}

/// Model file contents for a built-in model.
pub fn model_file_json(spec: &KrausFamilySpec) -> serde_json::Value {
    match spec.model {
        DecoherenceModel::Dephasing => {
            serde_json::json!({"model": "dephasing", "gamma": spec.gamma})
        }
        DecoherenceModel::Depolarizing => {
            serde_json::json!({"model": "depolarizing", "gamma": spec.gamma})
        }
        DecoherenceModel::OneParametric { a } => {
            serde_json::json!({"model": "one_parametric", "gamma": spec.gamma, "a": a})
        }
    }
}

/// Model file contents for an explicit generator matrix.
pub fn generator_file_json(l: &Superoperator) -> serde_json::Value {
    serde_json::json!({ "generator": matrix_to_json(l.matrix()) })
}
