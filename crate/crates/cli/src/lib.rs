//! `flair` command-line frontend: ingest logs into snapshots, compute
//! competitiveness and toxicity reports, run strategy backtests, generate
//! synthetic scenarios and plot pools on the quadrant.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use flair_core::backtest::{optimize, GridConfig, Objective, StrategyFamily, StrategyOutcome};
use flair_core::metrics::{flair_aggregate, flair_by_owner, flair_group, MetricReport};
use flair_core::scenarios::{closed_form, generate, ScenarioSpec};
use flair_core::timeline::{
    ingest, parse_csv, parse_jsonl, snapshot_load, snapshot_save, write_jsonl, ParsedLog,
    PoolTimeline, TimelineError, Window,
};
use flair_core::toxicity::{lvr, markout, ToxicityReport, Volatility};

/// `println!` that tolerates a closed stdout, e.g. when piped into `head`.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub mod config;
pub mod error;
pub mod svg;

pub use config::{CurveChoice, CurveConfig, Format, RunConfig, ToxicityChoice};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "flair", version, about = "Liquidity provider competitiveness analytics")]
pub struct Cli {
    /// JSON run configuration supplying defaults for the flags below
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for written reports (default: current directory)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report formats to write; repeat or comma-separate (default: all)
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    pub format: Vec<Format>,
    /// Curve family used when an input is a raw event log
    #[arg(long, global = true, value_enum)]
    pub curve: Option<CurveChoice>,
    #[arg(long, global = true)]
    pub fee_rate: Option<f64>,
    #[arg(long, global = true)]
    pub tick_spacing: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy, Default)]
pub struct WindowArgs {
    /// Window start (default: first event)
    #[arg(long = "from")]
    pub from: Option<f64>,
    /// Window end (default: last event)
    #[arg(long = "to")]
    pub to: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a JSONL or CSV event log and write its snapshot
    Ingest {
        log: PathBuf,
        /// Snapshot path (default: <out>/<stem>.snapshot.json)
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Fee return on deployed capital for a position, an owner or the pool
    #[command(group(ArgGroup::new("subject").required(true).args(["position", "aggregate", "owners"])))]
    Flair {
        /// Snapshot or raw event log
        input: PathBuf,
        /// Position id; repeat to treat several positions as one LP
        #[arg(long)]
        position: Vec<String>,
        #[arg(long)]
        aggregate: bool,
        /// JSON object mapping position id to owner; one report per owner
        #[arg(long)]
        owners: Option<PathBuf>,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Loss-versus-rebalancing over a window
    Lvr {
        input: PathBuf,
        /// Annualised-per-log-time volatility (default: realized)
        #[arg(long)]
        sigma: Option<f64>,
        /// Divide by pool value, making the rate comparable across pools
        #[arg(long)]
        normalized: bool,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Pool-side markout of every swap at a fixed horizon
    Markout {
        input: PathBuf,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        normalized: bool,
        /// Fail instead of dropping swaps whose horizon leaves the log
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Place pools on the competitiveness/toxicity plane
    Quadrant {
        inputs: Vec<PathBuf>,
        /// Point labels in input order (default: file stems)
        #[arg(long)]
        label: Vec<String>,
        #[arg(long, value_enum)]
        toxicity: Option<ToxicityChoice>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        normalized: bool,
        #[arg(long)]
        no_svg: bool,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Search a strategy grid for the best entrant
    Backtest {
        input: PathBuf,
        /// Strategy grid JSON
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Entrant capital, overriding the grid's
        #[arg(long)]
        capital: Option<f64>,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Competitiveness)]
        objective: ObjectiveArg,
        /// Volatility charged against fees (default: grid's, else realized)
        #[arg(long)]
        sigma: Option<f64>,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Generate a synthetic event log from a scenario spec
    Scenario {
        spec: PathBuf,
        /// Output file stem (default: the spec's stem)
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Competitiveness,
    Profitability,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Competitiveness => Objective::Competitiveness,
            ObjectiveArg::Profitability => Objective::Profitability,
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLAIR_LOG_LEVEL", "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Resolved global settings.
struct Context {
    cfg: RunConfig,
    curve: CurveConfig,
    out: PathBuf,
    formats: Vec<Format>,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, CliError> {
        let cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let curve = CurveConfig {
            kind: cli.curve,
            fee_rate: cli.fee_rate,
            tick_spacing: cli.tick_spacing,
        }
        .or(&cfg.curve);
        let out = cli
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        let mut formats = if cli.format.is_empty() {
            cfg.formats
                .clone()
                .unwrap_or_else(|| vec![Format::Json, Format::Csv, Format::Svg])
        } else {
            cli.format.clone()
        };
        formats.sort();
        formats.dedup();
        Ok(Self {
            cfg,
            curve,
            out,
            formats,
        })
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::user(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Flags first, then the config file, then the timeline's span.
    fn window(&self, args: WindowArgs, tl: &PoolTimeline<f64>) -> Result<Window<f64>, CliError> {
        let span = tl
            .span()
            .ok_or_else(|| CliError::user("timeline holds no events"))?;
        let base = self.cfg.window.unwrap_or(span);
        let w = Window::new(args.from.unwrap_or(base.start), args.to.unwrap_or(base.end));
        config::check_window(w)?;
        Ok(w)
    }

    fn load(&self, path: &Path) -> Result<PoolTimeline<f64>, CliError> {
        if is_log(path) {
            ingest_log(path, &self.curve)
        } else {
            snapshot_load(path).map_err(|e| CliError::from(e).context(path.display()))
        }
    }
}

fn is_log(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "csv")
    )
}

/// File stem with any `.snapshot` suffix removed.
fn stem(path: &Path) -> String {
    let s = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    s.strip_suffix(".snapshot").map(str::to_owned).unwrap_or(s)
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn read_log(path: &Path) -> Result<ParsedLog<f64>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        parse_csv(file)
    } else {
        parse_jsonl(BufReader::new(file))
    };
    let parsed = parsed.map_err(|e| match e {
        TimelineError::Parse { line, message } => {
            CliError::user(format!("{}:{line}: {message}", path.display()))
        }
        other => CliError::from(other).context(path.display()),
    })?;
    if parsed.events.is_empty() {
        return Err(CliError::user(format!("{}: empty log", path.display())));
    }
    Ok(parsed)
}

fn ingest_log(path: &Path, curve: &CurveConfig) -> Result<PoolTimeline<f64>, CliError> {
    let parsed = read_log(path)?;
    let curve = curve.build()?;
    ingest(parsed.events.iter().cloned(), curve).map_err(|e| {
        let line = e.event_index().and_then(|i| parsed.line_of(i));
        match line {
            Some(line) => CliError::from(e).context(format!("{}:{line}", path.display())),
            None => CliError::from(e).context(path.display()),
        }
    })
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Ingest { log, snapshot } => cmd_ingest(&ctx, log, snapshot.as_deref()),
        Command::Flair {
            input,
            position,
            aggregate,
            owners,
            window,
        } => cmd_flair(&ctx, input, position, *aggregate, owners.as_deref(), *window),
        Command::Lvr {
            input,
            sigma,
            normalized,
            window,
        } => {
            let tl = ctx.load(input)?;
            let w = ctx.window(*window, &tl)?;
            let r = lvr(&tl, volatility(sigma.or(ctx.cfg.sigma)), w, *normalized)?;
            emit_toxicity(&ctx, "lvr", &r)
        }
        Command::Markout {
            input,
            horizon,
            normalized,
            strict,
            window,
        } => {
            let tl = ctx.load(input)?;
            let w = ctx.window(*window, &tl)?;
            let h = horizon_of(*horizon, &ctx)?;
            let r = markout(&tl, h, w, *normalized, *strict)?;
            if r.truncated > 0 {
                warn!("{} swaps dropped: their horizon runs past the log", r.truncated);
            }
            emit_toxicity(&ctx, "markout", &r)
        }
        Command::Quadrant {
            inputs,
            label,
            toxicity,
            sigma,
            horizon,
            normalized,
            no_svg,
            window,
        } => cmd_quadrant(
            &ctx,
            inputs,
            label,
            QuadrantArgs {
                toxicity: toxicity.or(ctx.cfg.toxicity).unwrap_or(ToxicityChoice::Lvr),
                sigma: sigma.or(ctx.cfg.sigma),
                horizon: *horizon,
                normalized: *normalized,
                svg: !*no_svg,
                window: *window,
            },
        ),
        Command::Backtest {
            input,
            grid,
            capital,
            objective,
            sigma,
            window,
        } => cmd_backtest(&ctx, input, grid.as_deref(), *capital, *objective, *sigma, *window),
        Command::Scenario { spec, name } => cmd_scenario(&ctx, spec, name.as_deref()),
    }
}

fn volatility(sigma: Option<f64>) -> Volatility<f64> {
    sigma.map_or(Volatility::Realized, Volatility::Fixed)
}

fn horizon_of(flag: Option<f64>, ctx: &Context) -> Result<f64, CliError> {
    flag.or(ctx.cfg.horizon)
        .ok_or_else(|| CliError::user("markout needs --horizon"))
}

fn cmd_ingest(ctx: &Context, log: &Path, snapshot: Option<&Path>) -> Result<(), CliError> {
    let tl = ingest_log(log, &ctx.curve)?;
    let path = match snapshot {
        Some(p) => p.to_path_buf(),
        None => ctx.out.join(format!("{}.snapshot.json", stem(log))),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::user(format!("{}: {e}", dir.display())))?;
    }
    snapshot_save(&tl, &path).map_err(|e| CliError::from(e).context(path.display()))?;
    let span = tl.span().expect("non-empty log");
    say!("positions: {}", tl.positions().len());
    say!("events: {}", tl.event_count());
    say!("span: [{}, {}]", span.start, span.end);
    say!("total fees: {}", tl.total_fees());
    say!("snapshot: {}", path.display());
    Ok(())
}

fn emit_report(ctx: &Context, r: &MetricReport<f64>) -> Result<(), CliError> {
    let name = format!("flair_{}", file_safe(&r.subject));
    if ctx.wants(Format::Json) {
        ctx.write_json(&format!("{name}.json"), r)?;
    }
    if ctx.wants(Format::Csv) {
        ctx.write(&format!("{name}.csv"), &r.to_csv())?;
    }
    Ok(())
}

fn cmd_flair(
    ctx: &Context,
    input: &Path,
    positions: &[String],
    aggregate: bool,
    owners: Option<&Path>,
    window: WindowArgs,
) -> Result<(), CliError> {
    let tl = ctx.load(input)?;
    let w = ctx.window(window, &tl)?;
    if let Some(path) = owners {
        let text = fs::read_to_string(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        let map: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
        for id in map.keys() {
            tl.position(id)?;
        }
        for r in flair_by_owner(&tl, &map, w)? {
            emit_report(ctx, &r)?;
            say!("{} {:.12}", r.subject, r.value);
        }
        return Ok(());
    }
    let r = if aggregate {
        flair_aggregate(&tl, w)?
    } else {
        for id in positions {
            tl.position(id)?;
        }
        flair_group(&tl, &positions.join("+"), positions, w)?
    };
    emit_report(ctx, &r)?;
    say!("{:.12}", r.value);
    Ok(())
}

fn emit_toxicity(ctx: &Context, name: &str, r: &ToxicityReport<f64>) -> Result<(), CliError> {
    if ctx.wants(Format::Json) {
        ctx.write_json(&format!("{name}.json"), r)?;
    }
    if ctx.wants(Format::Csv) {
        ctx.write(&format!("{name}.csv"), &r.to_csv())?;
    }
    say!("{:.12}", r.value);
    Ok(())
}

struct QuadrantArgs {
    toxicity: ToxicityChoice,
    sigma: Option<f64>,
    horizon: Option<f64>,
    normalized: bool,
    svg: bool,
    window: WindowArgs,
}

#[derive(Serialize)]
struct QuadrantRow {
    label: String,
    cm_agg: f64,
    toxicity: f64,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn cmd_quadrant(
    ctx: &Context,
    inputs: &[PathBuf],
    labels: &[String],
    args: QuadrantArgs,
) -> Result<(), CliError> {
    if inputs.is_empty() {
        return Err(CliError::user("quadrant needs at least one snapshot"));
    }
    if !labels.is_empty() && labels.len() != inputs.len() {
        return Err(CliError::user(format!(
            "{} labels given for {} inputs",
            labels.len(),
            inputs.len()
        )));
    }
    let mut rows = Vec::with_capacity(inputs.len());
    for (i, path) in inputs.iter().enumerate() {
        let tl = ctx.load(path)?;
        let w = ctx.window(args.window, &tl)?;
        let tox = match args.toxicity {
            ToxicityChoice::Lvr => lvr(&tl, volatility(args.sigma), w, args.normalized)?,
            ToxicityChoice::Markout => {
                markout(&tl, horizon_of(args.horizon, ctx)?, w, args.normalized, false)?
            }
        };
        let cm = flair_aggregate(&tl, w).map_err(|e| CliError::from(e).context(path.display()))?;
        rows.push(QuadrantRow {
            label: labels.get(i).cloned().unwrap_or_else(|| stem(path)),
            cm_agg: cm.value,
            toxicity: tox.value,
        });
    }
    if ctx.wants(Format::Csv) {
        let mut csv = String::from("label,cm_agg,toxicity\n");
        for r in &rows {
            csv.push_str(&format!("{},{},{}\n", csv_field(&r.label), r.cm_agg, r.toxicity));
        }
        ctx.write("quadrant.csv", &csv)?;
    }
    if ctx.wants(Format::Json) {
        ctx.write_json("quadrant.json", &rows)?;
    }
    if args.svg && ctx.wants(Format::Svg) {
        let points: Vec<svg::Point<'_>> = rows
            .iter()
            .map(|r| svg::Point {
                label: &r.label,
                cm_agg: r.cm_agg,
                toxicity: r.toxicity,
            })
            .collect();
        ctx.write("quadrant.svg", &svg::render(&points))?;
    }
    for r in &rows {
        say!("{} {:.12} {:.12}", r.label, r.cm_agg, r.toxicity);
    }
    Ok(())
}

fn describe(o: &StrategyOutcome<f64>) -> String {
    let params = match o.spec.family {
        StrategyFamily::PassiveFixedRange {
            tick_lower,
            tick_upper,
        } => format!(" [{tick_lower}, {tick_upper}]"),
        StrategyFamily::TickTracking {
            width,
            rebalance_interval,
        } => format!(" width={width} rebalance_interval={rebalance_interval}"),
        _ => String::new(),
    };
    format!(
        "{}{params} capital={} cm={:.12} profit={:.12} rebalances={}",
        o.spec.family.name(),
        o.spec.capital,
        o.cm,
        o.profit,
        o.rebalances
    )
}

fn cmd_backtest(
    ctx: &Context,
    input: &Path,
    grid: Option<&Path>,
    capital: Option<f64>,
    objective: ObjectiveArg,
    sigma: Option<f64>,
    window: WindowArgs,
) -> Result<(), CliError> {
    let grid_path = grid
        .map(Path::to_path_buf)
        .or_else(|| ctx.cfg.grid.clone())
        .ok_or_else(|| CliError::user("backtest needs --grid"))?;
    let text = fs::read_to_string(&grid_path)
        .map_err(|e| CliError::user(format!("{}: {e}", grid_path.display())))?;
    let mut cfg = GridConfig::<f64>::from_json(&text)
        .map_err(|e| CliError::from(e).context(grid_path.display()))?;
    if let Some(c) = capital {
        cfg.capital = c;
    }
    if let Some(s) = sigma.or(ctx.cfg.sigma) {
        cfg.sigma = Some(s);
    }
    let specs = cfg
        .expand()
        .map_err(|e| CliError::from(e).context(grid_path.display()))?;
    let tl = ctx.load(input)?;
    let defaults = WindowArgs {
        from: window.from.or(cfg.t0),
        to: window.to.or(cfg.t_end),
    };
    let w = ctx.window(defaults, &tl)?;
    info!("evaluating {} strategies", specs.len());
    let result = optimize(&tl, &specs, w, cfg.volatility())?;
    if ctx.wants(Format::Csv) {
        ctx.write("backtest.csv", &result.to_csv())?;
    }
    if ctx.wants(Format::Json) {
        ctx.write_json("backtest.json", &result)?;
    }
    let name = match objective {
        ObjectiveArg::Competitiveness => "competitiveness",
        ObjectiveArg::Profitability => "profitability",
    };
    say!("best {name}: {}", describe(result.best(objective.into())));
    Ok(())
}

/// Curve and window a scenario's log should be ingested with.
fn scenario_config(spec: &ScenarioSpec) -> Result<RunConfig, CliError> {
    let curve = spec.curve()?;
    Ok(RunConfig {
        curve: CurveConfig {
            kind: Some(curve.kind.into()),
            fee_rate: Some(curve.fee_rate),
            tick_spacing: Some(curve.tick_spacing),
        },
        window: Some(Window::new(spec.t0, spec.t_end)),
        ..RunConfig::default()
    })
}

fn cmd_scenario(ctx: &Context, spec_path: &Path, name: Option<&str>) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError::user(format!("{}: {e}", spec_path.display())))?;
    let spec = ScenarioSpec::from_json(&text).map_err(|e| CliError::from(e).context(spec_path.display()))?;
    let events = generate(&spec).map_err(|e| CliError::from(e).context(spec_path.display()))?;
    let stem = name.map(str::to_owned).unwrap_or_else(|| stem(spec_path));
    let mut log = Vec::new();
    write_jsonl(&events, &mut log).map_err(|e| CliError::Internal(e.to_string()))?;
    let log = String::from_utf8(log).map_err(|e| CliError::Internal(e.to_string()))?;
    say!("{}", ctx.write(&format!("{stem}.jsonl"), &log)?.display());
    say!(
        "{}",
        ctx.write_json(&format!("{stem}.run.json"), &scenario_config(&spec)?)?
            .display()
    );
    if let Some(v) = closed_form(&spec) {
        #[derive(Serialize)]
        struct Expected {
            expected_cm_agg: f64,
        }
        let path = ctx.write_json(&format!("{stem}.expected.json"), &Expected { expected_cm_agg: v })?;
        say!("{}", path.display());
    }
    Ok(())
}
