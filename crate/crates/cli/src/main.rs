use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use cvssa::bench::{bench, threshold_sweep, BenchRow, SweepRow};
use cvssa::builtin::{builtin, builtin_models};
use cvssa::error::OracleError;
use cvssa::moment::{constraint_expansion, ControlVariateId, MultiIndex};
use cvssa::oracle::{bd_mean_closed_form, fsp_transient, TruncationBox, MAX_SPECIES};
use cvssa::selection::{run_pipeline, SelectionConfig};
use cvssa::sim::{derive_seed, run_batch, simulate, trajectory_rng, BatchOptions, SimConfig, DEFAULT_MAX_EVENTS};
use cvssa::stats::lcv_estimate;
use cvssa::{parse_model, Model, TargetQuery};

mod record;

use record::{QueryEcho, ResultRecord};

/// Control variate estimation for stochastic reaction networks.
#[derive(Debug, Parser)]
#[command(name = "cvssa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a mean or a threshold probability with selected control variates.
    Estimate(EstimateArgs),
    /// Repeat crude and control variate estimation and report variances and costs as CSV.
    Bench(BenchArgs),
    /// Threshold-probability sweep as CSV, one row per level.
    Sweep(SweepArgs),
    /// Compare a quick SSA estimate against the exact or truncated master equation answer.
    Validate(ValidateArgs),
    /// List the bundled models.
    Models,
    /// Print a bundled model in `.srn` form.
    Show { name: String },
    /// Print the constraint behind one control variate.
    Constraint(ConstraintArgs),
    /// Simulate one trajectory and write it as CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Path to a `.srn` model file.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    model: Option<PathBuf>,
    /// Name of a bundled model (see `cvssa models`).
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// Estimate the mean count of this species.
    #[arg(long, value_name = "SPECIES", conflicts_with = "prob_le", required_unless_present = "prob_le")]
    mean: Option<String>,
    /// Estimate P(count of SPECIES <= LEVEL).
    #[arg(long, num_args = 2, value_names = ["SPECIES", "LEVEL"])]
    prob_le: Option<Vec<String>>,
    #[arg(long)]
    horizon: f64,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Trajectories in the estimation batch.
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    /// Pilot trajectories per resampling round.
    #[arg(long, default_value_t = 10)]
    d: u64,
    #[arg(long, default_value_t = 1)]
    n_max: u32,
    #[arg(long, default_value_t = 10)]
    n_lambda: usize,
    #[arg(long, default_value_t = 2)]
    n_c: usize,
    #[arg(long, default_value_t = 2)]
    n_s: usize,
    #[arg(long, default_value_t = 3)]
    n_r: usize,
    #[arg(long, default_value_t = 1.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    step_sd: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_EVENTS)]
    max_events: u64,
    /// Parallel trajectory workers; results do not depend on it.
    #[arg(long, env = "CV_SSA_WORKERS")]
    workers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ConfigArgs {
    fn selection(&self, baseline: bool) -> SelectionConfig {
        SelectionConfig {
            n: self.n,
            d: self.d,
            n_max: self.n_max,
            n_lambda: self.n_lambda,
            n_c: self.n_c,
            n_s: self.n_s,
            n_r: self.n_r,
            epsilon: self.epsilon,
            step_sd: self.step_sd,
            max_events: self.max_events,
            workers: self.workers,
            baseline,
            ..SelectionConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Skip the crude baseline batch (no slowdown or efficiency figures).
    #[arg(long)]
    no_baseline: bool,
    /// Include the selection audit trail in the record.
    #[arg(long)]
    audit: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    query: QueryArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 200)]
    repetitions: usize,
    /// Crude repetitions; defaults to `--repetitions`.
    #[arg(long)]
    crude_repetitions: Option<usize>,
    /// Also write per-repetition results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    species: String,
    /// Comma-separated threshold levels.
    #[arg(long, value_delimiter = ',', required = true)]
    levels: Vec<i64>,
    #[arg(long)]
    horizon: f64,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    query: QueryArgs,
    /// Comma-separated per-species upper bounds of the truncation box.
    #[arg(long = "box", value_delimiter = ',')]
    bounds: Option<Vec<i64>>,
    /// Acceptable probability mass leaving the box.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Trajectories of the SSA comparison estimate.
    #[arg(long, default_value_t = 10_000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "CV_SSA_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct ConstraintArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Moment exponents, comma-separated, one per species.
    #[arg(long, value_delimiter = ',', required = true)]
    moment: Vec<u32>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: f64,
    #[arg(long)]
    horizon: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_EVENTS)]
    max_events: u64,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Bad input that maps to exit status 1.
#[derive(Debug)]
struct InputError(String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

struct Loaded {
    name: String,
    model: Model,
}

fn load_model(args: &ModelArgs) -> anyhow::Result<Loaded> {
    if let Some(name) = &args.builtin {
        let b = builtin(name).ok_or_else(|| input_error(format!("unknown builtin model `{name}`")))?;
        return Ok(Loaded { name: b.name.to_string(), model: b.model() });
    }
    let path = args.model.as_ref().expect("clap enforces a model source");
    let text = std::fs::read_to_string(path)
        .map_err(|e| input_error(format!("cannot read model file {}: {e}", path.display())))?;
    let model = parse_model(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    Ok(Loaded { name: path.display().to_string(), model })
}

fn species_index(model: &Model, name: &str) -> anyhow::Result<usize> {
    model.species_index(name).ok_or_else(|| input_error(format!("model has no species `{name}`")))
}

fn resolve_query(model: &Model, args: &QueryArgs) -> anyhow::Result<QueryEcho> {
    let horizon = args.horizon;
    let (query, name) = match (&args.mean, &args.prob_le) {
        (Some(s), _) => (TargetQuery::Mean { species: species_index(model, s)?, horizon }, s.clone()),
        (None, Some(v)) => {
            let level: i64 =
                v[1].parse().map_err(|_| input_error(format!("threshold level `{}` is not an integer", v[1])))?;
            (TargetQuery::ThresholdProbability { species: species_index(model, &v[0])?, level, horizon }, v[0].clone())
        }
        (None, None) => return Err(input_error("one of --mean or --prob-le is required")),
    };
    query.validate(model).map_err(|e| input_error(e.to_string()))?;
    Ok(QueryEcho { query, species_name: name })
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> anyhow::Result<()> {
    let loaded = load_model(&args.model)?;
    let echo = resolve_query(&loaded.model, &args.query)?;
    let config = args.config.selection(!args.no_baseline);
    config.validate().map_err(|e| input_error(e.to_string()))?;
    let clock = Instant::now();
    let result = run_pipeline(&loaded.model, &echo.query, &config, args.config.seed).context("estimation failed")?;
    let wall = clock.elapsed().as_secs_f64();
    let record = ResultRecord::new(loaded.name, echo, args.config.seed, config, result, wall, args.audit);
    print_json(&record)
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    let loaded = load_model(&args.model)?;
    let echo = resolve_query(&loaded.model, &args.query)?;
    let config = args.config.selection(false);
    config.validate().map_err(|e| input_error(e.to_string()))?;
    if args.repetitions < 2 {
        return Err(input_error("--repetitions must be at least 2"));
    }
    let crude_reps = args.crude_repetitions.unwrap_or(args.repetitions);
    let report = bench(&loaded.model, &echo.query, &config, args.repetitions, crude_reps, args.config.seed)
        .context("benchmark failed")?;
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    println!("model,{}", BenchRow::CSV_HEADER);
    println!("{},{}", loaded.name, report.row.csv());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let loaded = load_model(&args.model)?;
    let species = species_index(&loaded.model, &args.species)?;
    let config = args.config.selection(true);
    config.validate().map_err(|e| input_error(e.to_string()))?;
    let rows = threshold_sweep(
        &loaded.model,
        species,
        args.horizon,
        &args.levels,
        &config,
        args.repetitions,
        args.config.seed,
    )
    .context("sweep failed")?;
    println!("model,species,horizon,{}", SweepRow::CSV_HEADER);
    for row in rows {
        println!("{},{},{},{}", loaded.name, args.species, args.horizon, row.csv());
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct ValidateRecord {
    schema_version: u32,
    model: String,
    query: QueryEcho,
    oracle_value: f64,
    lost_mass: f64,
    states: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<f64>,
    ssa_estimate: f64,
    ssa_std_error: f64,
    gap_in_std_errors: f64,
}

fn cmd_validate(args: ValidateArgs) -> anyhow::Result<()> {
    let loaded = load_model(&args.model)?;
    let echo = resolve_query(&loaded.model, &args.query)?;
    let n = loaded.model.n_species();
    if n > MAX_SPECIES {
        return Err(OracleError::OutOfScope(format!("{n} species, at most {MAX_SPECIES} supported")).into());
    }
    let default_box = args.model.builtin.as_deref().and_then(builtin).and_then(|b| b.fsp_box);
    let bounds = match (&args.bounds, default_box) {
        (Some(b), _) => b.clone(),
        (None, Some(b)) => b.to_vec(),
        (None, None) => return Err(input_error("--box is required for models without a default truncation box")),
    };
    let window = TruncationBox::new(bounds).with_tolerance(args.tolerance);
    let solution = fsp_transient(&loaded.model, &window, echo.query.horizon())?;
    let oracle_value = match echo.query {
        TargetQuery::Mean { species, .. } => solution.mean(species),
        TargetQuery::ThresholdProbability { species, level, .. } => solution.probability_le(species, level),
    };
    let closed_form = match (loaded.name.as_str(), echo.query) {
        ("birth_death", TargetQuery::Mean { horizon, .. }) => {
            let m = &loaded.model;
            m.rate_constant(0).zip(m.rate_constant(1)).map(|(g, d)| bd_mean_closed_form(g, d, horizon))
        }
        _ => None,
    };

    let opts = BatchOptions::new(args.n, derive_seed(args.seed, "validate", 0)).workers(args.workers);
    let batch = run_batch(&loaded.model, &echo.query, &[], &opts).context("SSA comparison failed")?;
    let est = lcv_estimate(&batch.stats)?;
    let se = est.std_error_crude();
    let gap = if se > 0.0 { (est.point - oracle_value).abs() / se } else { 0.0 };
    print_json(&ValidateRecord {
        schema_version: record::SCHEMA_VERSION,
        model: loaded.name,
        query: echo,
        oracle_value,
        lost_mass: solution.lost_mass,
        states: solution.states.len(),
        closed_form,
        ssa_estimate: est.point,
        ssa_std_error: se,
        gap_in_std_errors: gap,
    })
}

fn cmd_models() -> anyhow::Result<()> {
    for b in builtin_models() {
        let m = b.model();
        println!(
            "{:<14} {:>2} species {:>2} reactions  target {} at T={}  {}",
            b.name,
            m.n_species(),
            m.reactions().len(),
            b.target.0,
            b.target.1,
            b.description
        );
    }
    Ok(())
}

fn cmd_show(name: &str) -> anyhow::Result<()> {
    let b = builtin(name).ok_or_else(|| input_error(format!("unknown builtin model `{name}`")))?;
    print!("{}", cvssa::to_srn(&b.model()));
    Ok(())
}

fn cmd_constraint(args: ConstraintArgs) -> anyhow::Result<()> {
    let loaded = load_model(&args.model)?;
    if args.moment.len() != loaded.model.n_species() {
        return Err(input_error(format!(
            "--moment needs {} exponents, got {}",
            loaded.model.n_species(),
            args.moment.len()
        )));
    }
    let id = ControlVariateId::new(MultiIndex(args.moment), args.lambda);
    let expansion = constraint_expansion(&loaded.model, &id, args.horizon)?;
    print!("{expansion}");
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let loaded = load_model(&args.model)?;
    let config = SimConfig { horizon: args.horizon, max_events: args.max_events };
    config.validate().map_err(|e| input_error(e.to_string()))?;
    let mut rng = trajectory_rng(derive_seed(args.seed, "simulate", 0), 0);
    let tr = simulate(&loaded.model, &config, &mut rng)?;
    let mut out: Box<dyn Write> = match &args.output {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    };
    writeln!(out, "time,{}", loaded.model.species().join(","))?;
    let times = std::iter::once(0.0).chain(tr.jump_times.iter().copied()).chain(std::iter::once(tr.horizon));
    let states = tr.states.iter().chain(std::iter::once(tr.states.last().expect("initial state")));
    for (t, x) in times.zip(states) {
        let row: Vec<String> = x.iter().map(i64::to_string).collect();
        writeln!(out, "{t},{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Models => cmd_models(),
        Command::Show { name } => cmd_show(&name),
        Command::Constraint(a) => cmd_constraint(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
