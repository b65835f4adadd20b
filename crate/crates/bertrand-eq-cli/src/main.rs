//! Command-line front end for the Bertrand–Nash equilibrium solver.
//!
//! Verbs:
//! - `run`      — solve a scenario over a cross product of methods, starting
//!                strategies, seeds, and sample sizes, writing `results.csv`,
//!                `summary.json`, and per-run iteration traces.
//! - `validate` — check a scenario's structural invariants and print
//!                boundedness diagnostics without solving.
//! - `presets`  — list the built-in scenarios.
//!
//! Exit codes: 0 success (including recorded non-convergence), 1 configuration
//! error, 2 at least one run ended in numerical failure.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use bertrand_eq::markup_maps::{ResidualOptions, ResidualSystem};
use bertrand_eq::model_zoo::{preset, preset_names, ModelSpec, Scenario};
use bertrand_eq::newton_krylov::TrustRegionConfig;
use bertrand_eq::solvers::{
    eta_fpi, newton_solve, zeta_fpi, InitStrategy, JacobianMode, NewtonConfig, SolverRun,
};
use bertrand_eq::{Method, Status, Vector};

#[derive(Parser)]
#[command(
    name = "bertrand-eq",
    version,
    about = "Bertrand–Nash equilibrium prices under simulation-based Mixed Logit demand"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write results.csv, summary.json, and traces.
    Run(RunArgs),
    /// Check a scenario's invariants and boundedness without solving.
    Validate(ValidateArgs),
    /// List built-in scenarios.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or path to a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// Comma-separated methods: zeta-fpi, eta-fpi, cg-nm, eta-nm, zeta-nm.
    #[arg(long, default_value = "zeta-fpi")]
    methods: String,
    /// Comma-separated starting strategies: costs, cost-box, box:LO:HI.
    #[arg(long, default_value = "costs")]
    init: String,
    /// Seeds: comma list (1,2,5) or inclusive range (1..10).
    #[arg(long, default_value = "1")]
    seeds: String,
    /// Comma-separated consumer sample sizes (ignored by explicit-draw
    /// scenarios).
    #[arg(long = "S", default_value = "500")]
    sample_sizes: String,
    /// First-order tolerance on the combined gradient.
    #[arg(long = "eps-t", default_value_t = 1e-6)]
    eps_t: f64,
    /// Probability floor below which a product is frozen.
    #[arg(long = "eps-p", default_value_t = 1e-10)]
    eps_p: f64,
    /// Iteration budget (Newton outer iterations or fixed-point steps).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Initial trust radius (default max(1, |p0|_inf)/10).
    #[arg(long)]
    delta0: Option<f64>,
    /// Krylov subspace cap (default min(dimension, 50)).
    #[arg(long)]
    max_krylov: Option<usize>,
    /// Jacobian mode: analytic, fd1, fd2, fd4.
    #[arg(long, default_value = "analytic")]
    jacobian: String,
    /// Reference method for the deviation columns.
    #[arg(long, default_value = "zeta-fpi")]
    reference: String,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker threads (default: number of cores; the BERTRAND_EQ_THREADS
    /// environment variable overrides this flag).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Preset name or path to a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// Sample size used when the scenario draws coefficients.
    #[arg(long = "S", default_value_t = 500)]
    sample_size: usize,
    /// Sampling seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => match cmd_run(&args) {
            Ok(any_numerical_failure) => {
                if any_numerical_failure {
                    2
                } else {
                    0
                }
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                1
            }
        },
        Command::Validate(args) => match cmd_validate(&args) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e:#}");
                1
            }
        },
        Command::Presets => {
            cmd_presets();
            0
        }
    };
    std::process::exit(code);
}

// ---------------------------------------------------------------------------
// Configuration parsing
// ---------------------------------------------------------------------------

/// Where the scenario comes from; a file is parsed once and cloned per job.
#[derive(Clone)]
enum ScenarioSource {
    Preset(String),
    File(Scenario),
}

impl ScenarioSource {
    fn parse(arg: &str) -> anyhow::Result<ScenarioSource> {
        if preset_names().contains(&arg) {
            return Ok(ScenarioSource::Preset(arg.to_string()));
        }
        let path = Path::new(arg);
        if path.exists() {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading scenario file {arg}"))?;
            return Ok(ScenarioSource::File(Scenario::from_json(&text)?));
        }
        bail!(
            "scenario '{arg}' is neither a preset nor an existing file; presets: {}",
            preset_names().join(", ")
        )
    }

    /// Builds the scenario for one job, pointing any sampling recipe at this
    /// job's sample size and seed.
    fn instantiate(&self, s: usize, seed: u64) -> anyhow::Result<Scenario> {
        match self {
            ScenarioSource::Preset(name) => Ok(preset(name, s, seed)?),
            ScenarioSource::File(sc) => {
                let mut sc = sc.clone();
                retarget_sampling(&mut sc.model, s, seed);
                Ok(sc)
            }
        }
    }
}

fn retarget_sampling(spec: &mut ModelSpec, s_new: usize, seed_new: u64) {
    match spec {
        ModelSpec::LinearSampled { s, seed, .. } | ModelSpec::LogIncomeSampled { s, seed, .. } => {
            *s = s_new;
            *seed = seed_new;
        }
        _ => {}
    }
}

fn parse_method(name: &str) -> anyhow::Result<Method> {
    const ALL: [Method; 5] = [
        Method::ZetaFpi,
        Method::EtaFpi,
        Method::CgNewton,
        Method::EtaNewton,
        Method::ZetaNewton,
    ];
    ALL.into_iter().find(|m| m.label() == name).ok_or_else(|| {
        anyhow!(
            "unknown method '{name}'; valid methods: {}",
            ALL.map(|m| m.label()).join(", ")
        )
    })
}

fn parse_methods(arg: &str) -> anyhow::Result<Vec<Method>> {
    arg.split(',').map(|s| parse_method(s.trim())).collect()
}

/// A starting strategy as given on the command line; the seed slot is filled
/// per job.
#[derive(Clone)]
struct InitSpec {
    label: String,
    kind: InitKind,
}

#[derive(Clone, Copy)]
enum InitKind {
    Costs,
    CostBox,
    Box { lo: f64, hi: f64 },
}

impl InitSpec {
    fn strategy(&self, seed: u64) -> InitStrategy {
        match self.kind {
            InitKind::Costs => InitStrategy::AtCosts,
            InitKind::CostBox => InitStrategy::UniformCostBox { seed },
            InitKind::Box { lo, hi } => InitStrategy::UniformBox { lo, hi, seed },
        }
    }
}

fn parse_inits(arg: &str) -> anyhow::Result<Vec<InitSpec>> {
    arg.split(',')
        .map(|raw| {
            let raw = raw.trim();
            let kind = if raw == "costs" {
                InitKind::Costs
            } else if raw == "cost-box" {
                InitKind::CostBox
            } else if let Some(rest) = raw.strip_prefix("box:") {
                let (lo, hi) = rest
                    .split_once(':')
                    .ok_or_else(|| anyhow!("box init must be box:LO:HI, got '{raw}'"))?;
                let lo: f64 = lo.parse().context("box lower bound")?;
                let hi: f64 = hi.parse().context("box upper bound")?;
                InitKind::Box { lo, hi }
            } else {
                bail!("unknown init strategy '{raw}'; valid: costs, cost-box, box:LO:HI")
            };
            Ok(InitSpec { label: raw.to_string(), kind })
        })
        .collect()
}

fn parse_seeds(arg: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = arg.split_once("..") {
        let a: u64 = a.trim().parse().context("seed range start")?;
        let b: u64 = b.trim().parse().context("seed range end")?;
        if b < a {
            bail!("empty seed range {arg}");
        }
        return Ok((a..=b).collect());
    }
    arg.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|e| anyhow!("bad seed '{s}': {e}")))
        .collect()
}

fn parse_sample_sizes(arg: &str) -> anyhow::Result<Vec<usize>> {
    arg.split(',')
        .map(|s| {
            let n: usize =
                s.trim().parse().map_err(|e| anyhow!("bad sample size '{s}': {e}"))?;
            if n == 0 {
                bail!("sample size must be positive");
            }
            Ok(n)
        })
        .collect()
}

fn parse_jacobian(arg: &str) -> anyhow::Result<JacobianMode> {
    match arg {
        "analytic" => Ok(JacobianMode::Analytic),
        "fd1" => Ok(JacobianMode::Fd1),
        "fd2" => Ok(JacobianMode::Fd2),
        "fd4" => Ok(JacobianMode::Fd4),
        other => bail!("unknown jacobian mode '{other}'; valid: analytic, fd1, fd2, fd4"),
    }
}

fn worker_count(flag: Option<usize>) -> anyhow::Result<usize> {
    if let Ok(v) = std::env::var("BERTRAND_EQ_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|e| anyhow!("BERTRAND_EQ_THREADS must be a positive integer: {e}"))?;
        if n == 0 {
            bail!("BERTRAND_EQ_THREADS must be positive");
        }
        return Ok(n);
    }
    if let Some(n) = flag {
        if n == 0 {
            bail!("--workers must be positive");
        }
        return Ok(n);
    }
    Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// One cell of the method × init × seed × S cross product.
#[derive(Clone)]
struct Job {
    index: usize,
    method: Method,
    init: InitSpec,
    seed: u64,
    s: usize,
}

struct SolveOpts {
    eps_t: f64,
    eps_p: f64,
    max_iter: Option<usize>,
    delta0: Option<f64>,
    max_krylov: Option<usize>,
    jacobian: JacobianMode,
}

/// Outcome of one job, with everything the output files need.
struct RowOut {
    job: Job,
    iterations: usize,
    wall_ms: f64,
    status: Status,
    fo_pass: bool,
    so_pass: bool,
    grad_inf: f64,
    p_final: Vec<f64>,
    message: Option<String>,
    trace: Vec<bertrand_eq::newton_krylov::TraceRecord>,
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<bool> {
    let source = ScenarioSource::parse(&args.scenario)?;
    let methods = parse_methods(&args.methods)?;
    let inits = parse_inits(&args.init)?;
    let seeds = parse_seeds(&args.seeds)?;
    let sample_sizes = parse_sample_sizes(&args.sample_sizes)?;
    let reference = parse_method(&args.reference)?;
    let opts = SolveOpts {
        eps_t: args.eps_t,
        eps_p: args.eps_p,
        max_iter: args.max_iter,
        delta0: args.delta0,
        max_krylov: args.max_krylov,
        jacobian: parse_jacobian(&args.jacobian)?,
    };
    if !(opts.eps_t > 0.0 && opts.eps_p > 0.0) {
        bail!("tolerances must be positive");
    }

    let mut jobs = Vec::new();
    for &method in &methods {
        for init in &inits {
            for &seed in &seeds {
                for &s in &sample_sizes {
                    jobs.push(Job { index: jobs.len(), method, init: init.clone(), seed, s });
                }
            }
        }
    }

    let workers = worker_count(args.workers)?.min(jobs.len().max(1));
    let results: Vec<Mutex<Option<anyhow::Result<RowOut>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = run_job(&source, &jobs[i], &opts);
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });

    let mut rows = Vec::with_capacity(jobs.len());
    for cell in results {
        match cell.into_inner().unwrap().expect("worker finished every claimed job") {
            Ok(row) => rows.push(row),
            Err(e) => return Err(e),
        }
    }

    std::fs::create_dir_all(args.out.join("traces"))
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    write_results_csv(&args.out.join("results.csv"), &rows, reference)?;
    write_summary_json(&args.out.join("summary.json"), &args.scenario, &rows, reference)?;
    for row in &rows {
        write_trace_csv(&args.out.join("traces").join(format!("run-{}.csv", row.job.index)), row)?;
    }

    let mut failures = 0usize;
    for row in &rows {
        let note = row.message.as_deref().unwrap_or("");
        println!(
            "run-{}: method={} init={} seed={} S={} status={} iterations={} grad_inf={:.3e} {}",
            row.job.index,
            row.job.method.label(),
            row.job.init.label,
            row.job.seed,
            row.job.s,
            status_label(&row.status),
            row.iterations,
            row.grad_inf,
            note
        );
        if row.status == Status::NumericalFailure {
            failures += 1;
        }
    }
    println!(
        "wrote {} runs to {} ({} numerical failure{})",
        rows.len(),
        args.out.display(),
        failures,
        if failures == 1 { "" } else { "s" }
    );
    Ok(failures > 0)
}

fn run_job(source: &ScenarioSource, job: &Job, opts: &SolveOpts) -> anyhow::Result<RowOut> {
    let scenario = source.instantiate(job.s, job.seed)?;
    let market = scenario.market()?;
    let built = scenario.build_model()?;
    let model = &*built.model;
    let p0 = job.init.strategy(job.seed).prices(&market)?;

    let extended_zeta = job.method.kind() == bertrand_eq::markup_maps::ResidualKind::ZetaMarkup
        && model.max_reservation_price().is_finite();
    let system = ResidualSystem::new(
        job.method.kind(),
        &market,
        model,
        ResidualOptions { eps_p: opts.eps_p, extended_zeta },
    )?;

    let started = Instant::now();
    let solved: bertrand_eq::Result<SolverRun> = match job.method {
        Method::ZetaFpi => zeta_fpi(&system, &p0, opts.eps_t, opts.max_iter.unwrap_or(1000)),
        Method::EtaFpi => eta_fpi(&system, &p0, opts.eps_t, opts.max_iter.unwrap_or(1000)),
        Method::CgNewton | Method::EtaNewton | Method::ZetaNewton => {
            let mut trust = TrustRegionConfig { opt_tol: opts.eps_t, ..TrustRegionConfig::default() };
            if let Some(n) = opts.max_iter {
                trust.max_iter = n;
            }
            trust.delta0 = opts.delta0;
            trust.max_krylov = opts.max_krylov;
            newton_solve(&system, &p0, &NewtonConfig { trust, jacobian: opts.jacobian })
        }
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;

    let row = match solved {
        Ok(run) => RowOut {
            job: job.clone(),
            iterations: run.iterations,
            wall_ms,
            status: run.status,
            fo_pass: run.fo_pass,
            so_pass: run.so_pass,
            grad_inf: run.grad_inf,
            p_final: run.p_final.iter().copied().collect(),
            message: run.message,
            trace: run.trace,
        },
        // A hard numerical error still produces a row so the whole batch can
        // finish; the process exit code reports it.
        Err(bertrand_eq::Error::Numerical(msg)) => RowOut {
            job: job.clone(),
            iterations: 0,
            wall_ms,
            status: Status::NumericalFailure,
            fo_pass: false,
            so_pass: false,
            grad_inf: f64::NAN,
            p_final: p0.iter().copied().collect(),
            message: Some(msg),
            trace: Vec::new(),
        },
        Err(e) => return Err(e.into()),
    };
    Ok(row)
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

fn status_label(status: &Status) -> &'static str {
    match status {
        Status::Converged => "converged",
        Status::MaxIterations => "max-iterations",
        Status::StepTooSmall => "step-too-small",
        Status::NumericalFailure => "numerical-failure",
    }
}

/// Shortest round-trip decimal form, so outputs are reproducible bytewise.
fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// Per-product absolute deviations of this run's final prices from the
/// reference run with the same init, seed, and sample size.
fn deviations(row: &RowOut, rows: &[RowOut], reference: Method) -> Option<Vec<f64>> {
    if row.job.method == reference {
        return None;
    }
    let reference_run = rows.iter().find(|r| {
        r.job.method == reference
            && r.job.init.label == row.job.init.label
            && r.job.seed == row.job.seed
            && r.job.s == row.job.s
    })?;
    if reference_run.p_final.len() != row.p_final.len() {
        return None;
    }
    Some(
        row.p_final
            .iter()
            .zip(&reference_run.p_final)
            .map(|(a, b)| (a - b).abs())
            .collect(),
    )
}

fn min_median_max(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    let median =
        if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    Some((sorted[0], median, sorted[n - 1]))
}

fn write_results_csv(path: &Path, rows: &[RowOut], reference: Method) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "index", "method", "init", "seed", "S", "iterations", "wall_ms", "status", "fo_pass",
        "so_pass", "grad_inf", "dev_min", "dev_median", "dev_max",
    ])?;
    for row in rows {
        let dev = deviations(row, rows, reference).and_then(|d| min_median_max(&d));
        let (dmin, dmed, dmax) = match dev {
            Some((a, b, c)) => (fmt_f64(a), fmt_f64(b), fmt_f64(c)),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            row.job.index.to_string(),
            row.job.method.label().to_string(),
            row.job.init.label.clone(),
            row.job.seed.to_string(),
            row.job.s.to_string(),
            row.iterations.to_string(),
            format!("{:.3}", row.wall_ms),
            status_label(&row.status).to_string(),
            row.fo_pass.to_string(),
            row.so_pass.to_string(),
            fmt_f64(row.grad_inf),
            dmin,
            dmed,
            dmax,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary_json(
    path: &Path,
    scenario: &str,
    rows: &[RowOut],
    reference: Method,
) -> anyhow::Result<()> {
    #[derive(serde::Serialize)]
    struct Stats {
        min: f64,
        median: f64,
        max: f64,
    }
    #[derive(serde::Serialize)]
    struct MethodSummary {
        runs: usize,
        converged: usize,
        iterations: Option<Stats>,
        #[serde(skip_serializing_if = "Option::is_none")]
        deviation_from_reference: Option<Stats>,
    }
    #[derive(serde::Serialize)]
    struct Summary<'a> {
        scenario: &'a str,
        runs: usize,
        reference_method: &'a str,
        methods: BTreeMap<&'static str, MethodSummary>,
    }

    let mut methods: BTreeMap<&'static str, MethodSummary> = BTreeMap::new();
    let mut iter_by: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    let mut dev_by: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for row in rows {
        let label = row.job.method.label();
        let entry = methods.entry(label).or_insert(MethodSummary {
            runs: 0,
            converged: 0,
            iterations: None,
            deviation_from_reference: None,
        });
        entry.runs += 1;
        if row.status == Status::Converged {
            entry.converged += 1;
        }
        iter_by.entry(label).or_default().push(row.iterations as f64);
        if let Some(d) = deviations(row, rows, reference) {
            dev_by.entry(label).or_default().extend(d);
        }
    }
    for (label, summary) in &mut methods {
        summary.iterations = iter_by
            .get(label)
            .and_then(|v| min_median_max(v))
            .map(|(min, median, max)| Stats { min, median, max });
        summary.deviation_from_reference = dev_by
            .get(label)
            .and_then(|v| min_median_max(v))
            .map(|(min, median, max)| Stats { min, median, max });
    }
    let doc = Summary {
        scenario,
        runs: rows.len(),
        reference_method: reference.label(),
        methods,
    };
    let mut file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    file.write_all(serde_json::to_string_pretty(&doc)?.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

fn write_trace_csv(path: &Path, row: &RowOut) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "iteration", "f_norm", "grad_inf", "delta", "krylov_dim", "step_norm", "accepted",
        "x_norm",
    ])?;
    for rec in &row.trace {
        w.write_record([
            rec.iteration.to_string(),
            fmt_f64(rec.f_norm),
            fmt_f64(rec.grad_inf),
            fmt_f64(rec.delta),
            rec.krylov_dim.to_string(),
            fmt_f64(rec.step_norm),
            rec.accepted.to_string(),
            fmt_f64(rec.x_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

fn cmd_validate(args: &ValidateArgs) -> anyhow::Result<()> {
    let source = ScenarioSource::parse(&args.scenario)?;
    let scenario = source.instantiate(args.sample_size, args.seed)?;
    println!("scenario: {} — {}", scenario.name, scenario.description);

    // Structural invariants: positive finite costs, consistent characteristic
    // dimensions, contiguous firm blocks (checked by the market constructor),
    // and a well-formed demand model (e.g. the log-income price coefficient
    // must exceed 1 for profits to remain bounded per draw).
    let market = scenario.market().context("market invariants")?;
    let built = scenario.build_model().context("demand model")?;
    let model = &*built.model;
    println!(
        "ok: {} products, {} firms, {} consumer draws",
        market.product_count(),
        market.firm_count(),
        model.draw_count()
    );

    let mut warnings = 0usize;
    if !model.has_outside_good() {
        warnings += 1;
        println!(
            "warning: no outside good — demand cannot vanish, so equilibrium \
             markups (and the markup fixed-point map) are unbounded as prices grow"
        );
    }
    let sigma_star = model.max_reservation_price();
    if sigma_star.is_finite() {
        println!("ok: finite reservation prices, largest {sigma_star}");
    } else {
        println!("note: infinite reservation prices (no hard budget cap on any draw)");
    }

    // Boundedness diagnostics on a coarse grid of cost multiples: the share
    // a firm can lose by raising prices must actually vanish for markups to
    // stay bounded.
    let c = market.costs();
    let system = ResidualSystem::new(
        bertrand_eq::markup_maps::ResidualKind::ZetaMarkup,
        &market,
        model,
        ResidualOptions::default(),
    )?;
    println!("price-grid diagnostics (prices = multiple of costs):");
    for mult in [1.0, 2.0, 5.0, 10.0, 100.0] {
        let p = Vector::from_iterator(c.len(), c.iter().map(|&x| mult * x));
        match system.eval(&p) {
            Ok(bundle) => {
                let total_share: f64 = bundle.eval.p.iter().sum();
                let live = bundle.eval.p.iter().filter(|&&q| q > 1e-10).count();
                let max_markup = bundle
                    .markup
                    .as_ref()
                    .map(|m| m.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                match max_markup {
                    Some(m) => println!(
                        "  x{mult:<5} inside share {total_share:.4}  live products {live}  max markup {m:.4}"
                    ),
                    None => println!(
                        "  x{mult:<5} inside share {total_share:.4}  live products {live}"
                    ),
                }
            }
            Err(e) => println!("  x{mult:<5} evaluation failed: {e}"),
        }
    }
    if warnings == 0 {
        println!("validation passed with no warnings");
    } else {
        println!("validation passed with {warnings} warning(s)");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// presets
// ---------------------------------------------------------------------------

fn cmd_presets() {
    for name in preset_names() {
        match preset(name, 10, 1) {
            Ok(sc) => println!(
                "{name:<26} {} products, {}: {}",
                sc.products.len(),
                sc.currency,
                sc.description
            ),
            Err(e) => println!("{name:<26} (unavailable: {e})"),
        }
    }
}
