mod point;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use bisolve::bench::{render_reports, select_lambda_star, sweep_many, LambdaSet, Summary, SweepJob, SweepRow};
use bisolve::diagnostics::{kkt_regularity_report, llvf_regularity_report, DEFAULT_TAU};
use bisolve::kkt::{check_kkt_stationarity, KktPoint};
use bisolve::llvf::LlvfPoint;
use bisolve::newton::{default_start, residual, solve};
use bisolve::problem::load_quadratic_problem;
use bisolve::suite::{
    boc_problem, dempe_dutta_3, dempe_dutta_3_stationarity, fixtures, get_problem, BOC_DEFAULT_HALF_DIM, PROBLEM_NAMES,
};
use bisolve::{BilevelProblem, Error, Model, SolverConfig, Vector};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "bisolve", version, about = "Semismooth Newton solvers for bilevel programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the bundled problems.
    List {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Solve one problem with one model and one penalty value.
    Solve(SolveArgs),
    /// Sweep a problem over a set of penalty values.
    Sweep(SweepArgs),
    /// Evaluate the residual of every bundled fixture; exits 1 if any exceeds its tolerance.
    Fixtures {
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Regularity report at a given point.
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug)]
struct ProblemArgs {
    /// Bundled problem name, or path to a quadratic problem file (TOML).
    #[arg(long)]
    problem: String,
    /// Half dimension of the optimal control problem `boc`.
    #[arg(long, default_value_t = BOC_DEFAULT_HALF_DIM)]
    half_dim: usize,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Residual tolerance.
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
}

impl SolverArgs {
    fn config(&self, lambda: f64) -> SolverConfig {
        let base = SolverConfig::with_lambda(lambda);
        SolverConfig {
            epsilon: self.eps.unwrap_or(base.epsilon),
            max_iter: self.max_iter.unwrap_or(base.max_iter),
            ..base
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Model to solve.
    #[arg(long, value_enum)]
    model: SingleModel,
    /// Penalty parameter.
    #[arg(long)]
    lambda: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Upper-level starting point, comma separated (default all ones).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Lower-level starting point, comma separated (default all ones).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y0: Option<Vec<f64>>,
    /// Full starting point as a point file; overrides --x0/--y0.
    #[arg(long)]
    start: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, default_value_t = ModelChoice::Both)]
    model: ModelChoice,
    /// Penalty values, comma separated and increasing (default: 2^-3..2^7, or 2^-2..2^2 in
    /// half-powers for `boc`).
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write rows here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the summary table here instead of stderr.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum)]
    model: SingleModel,
    /// Point file with the blocks x, y, z, ... of the chosen model.
    #[arg(long)]
    point: PathBuf,
    #[arg(long)]
    lambda: f64,
    /// Activity tolerance (scaled by 1 + largest multiplier).
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SingleModel {
    Kkt,
    Llvf,
}

impl From<SingleModel> for Model {
    fn from(m: SingleModel) -> Self {
        match m {
            SingleModel::Kkt => Model::Kkt,
            SingleModel::Llvf => Model::Llvf,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelChoice {
    Kkt,
    Llvf,
    Both,
}

impl ModelChoice {
    fn models(self) -> Vec<Model> {
        match self {
            ModelChoice::Kkt => vec![Model::Kkt],
            ModelChoice::Llvf => vec![Model::Llvf],
            ModelChoice::Both => Model::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

enum CliError {
    Usage(String),
    Failure(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Serialize, Deserialize)]
struct SweepDocument {
    rows: Vec<SweepRow>,
    summary: Summary,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProblemEntry {
    name: String,
    n: usize,
    m: usize,
    p: usize,
    q: usize,
    status: String,
    upper_known: Option<f64>,
    lower_known: Option<f64>,
    fixtures: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureLine {
    problem: String,
    model: String,
    lambda: f64,
    residual: f64,
    tolerance: f64,
    pass: bool,
}

fn load_problem(args: &ProblemArgs) -> CliResult<Arc<dyn BilevelProblem>> {
    if args.problem == "boc" {
        if args.half_dim < 2 {
            return Err(CliError::Usage("--half-dim must be at least 2".into()));
        }
        return Ok(Arc::new(boc_problem(args.half_dim)));
    }
    match get_problem(&args.problem) {
        Ok((p, _)) => Ok(p),
        Err(Error::UnknownProblem(name)) => {
            let path = Path::new(&name);
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "'{name}' is neither a bundled problem ({}) nor a readable file",
                    PROBLEM_NAMES.join(", ")
                )));
            }
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{name}: {e}")))?;
            Ok(Arc::new(load_quadratic_problem(&text)?))
        }
        Err(e) => Err(e.into()),
    }
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Failure(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn cmd_list(format: Format) -> CliResult<()> {
    let entries: Vec<ProblemEntry> = PROBLEM_NAMES
        .iter()
        .map(|name| {
            let (p, fx) = get_problem(name).expect("registered");
            let d = p.dims();
            let m = p.meta();
            ProblemEntry {
                name: name.to_string(),
                n: d.n,
                m: d.m,
                p: d.p,
                q: d.q,
                status: m.status.to_string(),
                upper_known: m.upper_known,
                lower_known: m.lower_known,
                fixtures: fx.len(),
            }
        })
        .collect();
    let text = match format {
        Format::Json => to_json(&entries),
        _ => {
            let mut out = format!(
                "{:<24} {:>4} {:>4} {:>4} {:>4} {:>8} {:>8} {:>8}\n",
                "name", "n", "m", "p", "q", "status", "F", "f"
            );
            for e in &entries {
                let v = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
                out.push_str(&format!(
                    "{:<24} {:>4} {:>4} {:>4} {:>4} {:>8} {:>8} {:>8}\n",
                    e.name,
                    e.n,
                    e.m,
                    e.p,
                    e.q,
                    e.status,
                    v(e.upper_known),
                    v(e.lower_known)
                ));
            }
            out
        }
    };
    emit(None, &text)
}

fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let problem = load_problem(&args.problem)?;
    let dims = problem.dims();
    let model = Model::from(args.model);
    let start = match &args.start {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            point::parse_point(&text, model, dims).map_err(CliError::Usage)?
        }
        None => {
            let x0 = args.x0.clone().unwrap_or_else(|| vec![1.0; dims.n]);
            let y0 = args.y0.clone().unwrap_or_else(|| vec![1.0; dims.m]);
            if x0.len() != dims.n || y0.len() != dims.m {
                return Err(CliError::Usage(format!("--x0/--y0 must have lengths {} and {}", dims.n, dims.m)));
            }
            default_start(problem.as_ref(), model, &x0, &y0)
        }
    };
    let report = solve(model, problem.as_ref(), &args.solver.config(args.lambda), &start)?;
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => return Err(CliError::Usage("solve supports --format json or text".into())),
        Format::Text => {
            let mut out = format!(
                "problem {}  model {}  lambda {}\nstatus {}  iterations {}  residual {:.3e}  eoc {}\nF = {}\nf = {}\n",
                problem.name(),
                model,
                args.lambda,
                report.status,
                report.iterations,
                report.final_residual(),
                report.eoc.map(|e| format!("{e:.3}")).unwrap_or_else(|| "-".into()),
                report.upper_value,
                report.lower_value,
            );
            out.push_str(&point::format_point(&report.final_point, model, dims));
            out
        }
    };
    emit(args.output.as_deref(), &text)
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let problem = load_problem(&args.problem)?;
    let lambdas = match &args.lambdas {
        Some(v) => LambdaSet::new(v.clone())?,
        None if args.problem.problem == "boc" => LambdaSet::boc_grid(),
        None => LambdaSet::default_grid(),
    };
    let dims = problem.dims();
    let (x0, y0) = problem.meta().start.clone().unwrap_or_else(|| (vec![1.0; dims.n], vec![1.0; dims.m]));
    let jobs: Vec<SweepJob> = args
        .model
        .models()
        .into_iter()
        .map(|model| SweepJob {
            problem: problem.as_ref(),
            model,
            start: default_start(problem.as_ref(), model, &x0, &y0),
        })
        .collect();
    let rows = sweep_many(&jobs, &lambdas, &args.solver.config(1.0));
    let reports = render_reports(&rows);

    let mut summary_text = reports.summary_text.clone();
    for model in args.model.models() {
        let part: Vec<SweepRow> = rows.iter().filter(|r| r.model == model).cloned().collect();
        if let Some((lambda, row)) = select_lambda_star(&part, problem.meta()) {
            summary_text.push_str(&format!(
                "{model}: lambda* = {lambda} ({}, F = {}, f = {})\n",
                row.status, row.upper_value, row.lower_value
            ));
        }
    }
    let text = match args.format {
        Format::Csv => reports.csv.clone(),
        Format::Json => to_json(&SweepDocument { rows, summary: reports.summary }),
        Format::Text => summary_text.clone(),
    };
    emit(args.output.as_deref(), &text)?;
    match &args.summary {
        Some(path) => emit(Some(path), &summary_text),
        None if args.format != Format::Text => {
            eprint!("{summary_text}");
            Ok(())
        }
        None => Ok(()),
    }
}

fn cmd_fixtures(format: Format) -> CliResult<()> {
    let mut lines = Vec::new();
    for name in PROBLEM_NAMES {
        let (p, _) = get_problem(name).expect("registered");
        for fx in fixtures(name) {
            let r = residual(fx.model, p.as_ref(), fx.lambda, &fx.point)?.amax();
            lines.push(FixtureLine {
                problem: name.to_string(),
                model: fx.model.to_string(),
                lambda: fx.lambda,
                residual: r,
                tolerance: fx.residual_tol,
                pass: r <= fx.residual_tol,
            });
        }
    }
    let st = dempe_dutta_3_stationarity();
    let v = |x: &[f64]| Vector::from_column_slice(x);
    let pt = KktPoint { x: v(&st.x), y: v(&st.y), z: v(&st.z), s: v(&st.s), u: v(&st.u), v: v(&st.v), w: v(&st.w) };
    let violation = check_kkt_stationarity(&dempe_dutta_3(), st.lambda, &pt)?;
    lines.push(FixtureLine {
        problem: "dempe-dutta-3".into(),
        model: "kkt-stationarity".into(),
        lambda: st.lambda,
        residual: violation,
        tolerance: 1e-10,
        pass: violation <= 1e-10,
    });

    let text = match format {
        Format::Json => to_json(&lines),
        _ => lines
            .iter()
            .map(|l| {
                format!(
                    "{} {} {} lambda={} residual={:.3e} tol={:e}\n",
                    if l.pass { "PASS" } else { "FAIL" },
                    l.problem,
                    l.model,
                    l.lambda,
                    l.residual,
                    l.tolerance
                )
            })
            .collect(),
    };
    emit(None, &text)?;
    if lines.iter().all(|l| l.pass) {
        Ok(())
    } else {
        Err(CliError::Failure("fixture residual above tolerance".into()))
    }
}

fn cmd_diagnose(args: &DiagnoseArgs) -> CliResult<()> {
    let problem = load_problem(&args.problem)?;
    let dims = problem.dims();
    let model = Model::from(args.model);
    let text =
        fs::read_to_string(&args.point).map_err(|e| CliError::Usage(format!("{}: {e}", args.point.display())))?;
    let flat = point::parse_point(&text, model, dims).map_err(CliError::Usage)?;
    let out = match model {
        Model::Kkt => {
            let r =
                kkt_regularity_report(problem.as_ref(), args.lambda, &KktPoint::from_slice(dims, &flat)?, args.tau)?;
            match args.format {
                Format::Json => to_json(&r),
                _ => format!(
                    "residual {:.3e}\ngeneral case: {} (independence {}, curvature {})\nfull-rank case: {} (active independence {}, column rank {})\nMFCQ: independence {}, slack {:.3e}\nnotes: {:?}\n",
                    r.residual_inf,
                    r.general_case,
                    r.general_independence.holds,
                    r.curvature.holds,
                    r.full_rank_case,
                    r.active_independence.holds,
                    r.lower_column_rank.holds,
                    r.mfcq_independence.holds,
                    r.mfcq_slack,
                    r.notes
                ),
            }
        }
        Model::Llvf => {
            let r =
                llvf_regularity_report(problem.as_ref(), args.lambda, &LlvfPoint::from_slice(dims, &flat)?, args.tau)?;
            match args.format {
                Format::Json => to_json(&r),
                _ => format!(
                    "residual {:.3e}\nholds: {} (independence {} / {}, no biactive copy index {}, curvature {} on cone of dim {})\nMFCQ slack {:.3e}\nnotes: {:?}\n",
                    r.residual_inf,
                    r.holds,
                    r.active_independence.holds,
                    r.copy_independence.holds,
                    r.copy_strict_complementarity,
                    r.curvature.holds,
                    r.curvature.cone_dim,
                    r.mfcq_slack,
                    r.notes
                ),
            }
        }
    };
    emit(None, &out)
}

fn configure_threads() -> CliResult<()> {
    if let Ok(raw) = std::env::var("BISOLVE_THREADS") {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("BISOLVE_THREADS must be a positive integer, got '{raw}'")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Failure(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::List { format } => cmd_list(format),
        Command::Solve(args) => cmd_solve(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Fixtures { format } => cmd_fixtures(format),
        Command::Diagnose(args) => cmd_diagnose(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
