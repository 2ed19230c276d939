//! The `textdrive` command line.
//!
//! Exit codes: 0 success, 1 data or evaluation error, 2 usage error.
//! `--config FILE` reads a JSON object whose scalar and array entries act as
//! flags placed before the ones on the command line, so explicit flags win.
//! Object entries (`generator`, `samples`, `roadgraph`, ...) seed the
//! structured configs that flags then override field by field.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::{kmeans_representatives, median_trajectory, sampling_ablation, sparkline, CandidateSet, Representative};
use crate::codec::{Box3D, RoadGraph, RoadgraphCodecConfig};
use crate::error::Error;
use crate::geometry::Trajectory;
use crate::matching::MatchStrategy;
use crate::mixture::{empirical_ratios, plan as mixture_plan, sample_stream_with, MixturePlan, SamplingMode};
use crate::perception::{detection_pr_with, lane_pr_with, raster_pr, LetConfig, PRReport, Roi};
use crate::planning::{planning_report, HorizonPreset};
use crate::synth::{
    blockage_label, constant_velocity_planner, derive_seed, gen_scenario, noisy_oracle_planner, BlockageConfig,
    GeneratorConfig, Maneuver, Protocol, ScenarioLog, SpeedProfile,
};
use crate::tasks::{build_sample, decode_target, parse_planning_prompt, CotOrder, DecodedTarget, SampleConfig, TaskKind, TaskSample};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn enum_arg<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| format!("invalid value `{s}`"))
}

#[derive(Parser, Debug)]
#[command(
    name = "textdrive",
    version,
    about = "Driving tasks as text: codecs, metrics, labels, and synthetic data",
    args_override_self = true
)]
struct Cli {
    /// JSON file of default flag values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic scenarios as JSON Lines
    Gen(GenArgs),
    /// Build task samples from scenarios
    Samples(SamplesArgs),
    /// Decode task targets to JSON
    Decode(DecodeArgs),
    /// Run a baseline planner on planning samples
    Plan(PlanArgs),
    /// Planning metrics for predicted trajectories
    EvalPlan(EvalPlanArgs),
    /// Lane-level and raster roadgraph metrics
    EvalRg(EvalRgArgs),
    /// 3D detection precision, recall, and F1
    EvalDet(EvalDetArgs),
    /// Reduce candidate trajectories to one per scenario
    Aggregate(AggregateArgs),
    /// ADE of the median trajectory against the number of candidates
    AblateK(AblateArgs),
    /// Mixture plan and a sampled frequency audit
    Mixture(MixtureArgs),
    /// Blockage labels for scenarios
    Blockage(BlockageArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    count: u64,
    /// Scenario i uses seed + i
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// womd | nuscenes
    #[arg(long, value_parser = enum_arg::<Protocol>, default_value = "womd")]
    preset: Protocol,
    /// constant | accel | decel | stop
    #[arg(long, value_parser = enum_arg::<SpeedProfile>)]
    profile: Option<SpeedProfile>,
    /// straight | left | right
    #[arg(long, value_parser = enum_arg::<Maneuver>)]
    maneuver: Option<Maneuver>,
    #[arg(long)]
    max_agents: Option<usize>,
    #[arg(long)]
    max_lanes: Option<u32>,
    #[arg(long)]
    blockage_prob: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SamplesArgs {
    /// Scenario JSON Lines, `-` for stdin
    #[arg(long, short, default_value = "-")]
    input: String,
    /// Comma separated: planning, planning-cot, detection-3d, roadgraph, blockage
    #[arg(long, value_delimiter = ',', default_value = "planning")]
    task: Vec<String>,
    /// Emit PLANNING_COT in place of PLANNING
    #[arg(long)]
    cot: bool,
    /// Shuffle lanes within distance bins
    #[arg(long)]
    train_mode: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// rationale-first | waypoints-first
    #[arg(long, value_parser = enum_arg::<CotOrder>)]
    cot_order: Option<CotOrder>,
    /// Drop far lanes instead of failing when a scene has too many
    #[arg(long)]
    lenient: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Task sample JSON Lines, `-` for stdin
    #[arg(long, short, default_value = "-")]
    input: String,
    /// Only decode samples of this kind; required with --text
    #[arg(long)]
    task: Option<String>,
    /// Decode this target text instead of reading samples
    #[arg(long)]
    text: Option<String>,
    /// Time step when the prompt does not state one
    #[arg(long, default_value_t = 0.5)]
    dt: f64,
    #[arg(long, value_parser = enum_arg::<CotOrder>, default_value = "rationale-first")]
    cot_order: CotOrder,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long, short, default_value = "-")]
    input: String,
    /// cv (constant velocity from the prompt history) | noisy (target plus noise)
    #[arg(long, default_value = "cv")]
    planner: String,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Candidates per scenario; more than 1 writes candidate sets
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = enum_arg::<CotOrder>, default_value = "rationale-first")]
    cot_order: CotOrder,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalPlanArgs {
    #[arg(long)]
    preds: String,
    /// Trajectory records or scenario JSON Lines
    #[arg(long)]
    gts: String,
    /// womd | nuscenes
    #[arg(long, value_parser = enum_arg::<HorizonPreset>, default_value = "womd")]
    preset: HorizonPreset,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct EvalRgArgs {
    #[arg(long)]
    preds: String,
    #[arg(long)]
    gts: String,
    /// Chamfer threshold, meters
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    /// Raster cell size, meters
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    /// min_x,min_y,max_x,max_y
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-50.0, -50.0, 50.0, 50.0])]
    roi: Vec<f64>,
    /// optimal | greedy
    #[arg(long, value_parser = enum_arg::<MatchStrategy>, default_value = "optimal")]
    matcher: MatchStrategy,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct EvalDetArgs {
    #[arg(long)]
    preds: String,
    #[arg(long)]
    gts: String,
    /// Longitudinal tolerance as a fraction of range
    #[arg(long)]
    let_pct: Option<f64>,
    /// Minimum longitudinal tolerance, meters
    #[arg(long)]
    let_min: Option<f64>,
    /// Lateral tolerance, meters
    #[arg(long)]
    lat_tol: Option<f64>,
    #[arg(long, value_parser = enum_arg::<MatchStrategy>, default_value = "optimal")]
    matcher: MatchStrategy,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct AggregateArgs {
    /// Candidate set JSON Lines
    #[arg(long, short, default_value = "-")]
    input: String,
    /// median | kmeans
    #[arg(long, default_value = "median")]
    method: String,
    /// Candidates used by median (default all); clusters for kmeans (default 6)
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    candidates: String,
    #[arg(long)]
    gts: String,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8, 12, 16, 24])]
    ks: Vec<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct MixtureArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<u64>,
    #[arg(long, default_value_t = 1.0)]
    epochs: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Audit draws; 0 audits the full planned stream
    #[arg(long, default_value_t = 0)]
    draws: u64,
    /// iid | epochshuffled
    #[arg(long, value_parser = enum_arg::<SamplingMode>, default_value = "iid")]
    mode: SamplingMode,
}

#[derive(Args, Debug)]
struct BlockageArgs {
    #[arg(long, short, default_value = "-")]
    input: String,
    #[arg(long)]
    lookahead: Option<f64>,
    #[arg(long)]
    coverage: Option<f64>,
    #[arg(long)]
    stationary_speed: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Structured sections of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigSections {
    generator: Option<GeneratorConfig>,
    samples: Option<SampleConfig>,
    roadgraph: Option<RoadgraphCodecConfig>,
    blockage: Option<BlockageConfig>,
    #[serde(rename = "let")]
    let_cfg: Option<LetConfig>,
}

fn flag_value(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => Some(items.iter().filter_map(flag_value).collect::<Vec<_>>().join(",")),
        _ => None,
    }
}

/// Splits `--config` out of argv and turns its scalar entries into flags
/// inserted right after the subcommand name.
fn expand_config(args: &[String]) -> CliResult<(Vec<String>, ConfigSections)> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok((args.to_vec(), ConfigSections::default()));
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {path} is not JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(CliError::Usage(format!("config {path} must be a JSON object")));
    };
    let mut flags = Vec::new();
    let mut sections = serde_json::Map::new();
    for (key, v) in map {
        match &v {
            Value::Object(_) => {
                sections.insert(key, v);
            }
            Value::Bool(true) => flags.push(format!("--{}", key.replace('_', "-"))),
            Value::Bool(false) | Value::Null => {}
            other => {
                flags.push(format!("--{}", key.replace('_', "-")));
                flags.push(flag_value(other).unwrap_or_default());
            }
        }
    }
    let sections: ConfigSections = serde_json::from_value(Value::Object(sections))
        .map_err(|e| CliError::Usage(format!("config {path}: {e}")))?;

    // the subcommand is the first bare word that is not the config path
    let mut out = Vec::with_capacity(args.len() + flags.len());
    let mut inserted = false;
    let mut skip_next = false;
    for (i, a) in args.iter().enumerate() {
        out.push(a.clone());
        if i == 0 || inserted {
            continue;
        }
        if skip_next {
            skip_next = false;
            continue;
        }
        if a == "--config" {
            skip_next = true;
            continue;
        }
        if !a.starts_with('-') {
            out.extend(flags.iter().cloned());
            inserted = true;
        }
    }
    Ok((out, sections))
}

/// Runs the CLI with process stdout and stderr.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_io(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI writing to the given streams; returns the exit code.
pub fn run_io<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let result = expand_config(&args).and_then(|(argv, sections)| match Cli::try_parse_from(&argv) {
        Ok(cli) => dispatch(cli.command, &sections, out),
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
                Ok(())
            } else {
                Err(CliError::Usage(rendered))
            }
        }
    });
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "{}", msg.trim_end());
            2
        }
        Err(CliError::Data(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn dispatch(cmd: Command, sections: &ConfigSections, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a, sections, out),
        Command::Samples(a) => cmd_samples(a, sections, out),
        Command::Decode(a) => cmd_decode(a, out),
        Command::Plan(a) => cmd_plan(a, out),
        Command::EvalPlan(a) => cmd_eval_plan(a, out),
        Command::EvalRg(a) => cmd_eval_rg(a, out),
        Command::EvalDet(a) => cmd_eval_det(a, sections, out),
        Command::Aggregate(a) => cmd_aggregate(a, out),
        Command::AblateK(a) => cmd_ablate(a, out),
        Command::Mixture(a) => cmd_mixture(a, out),
        Command::Blockage(a) => cmd_blockage(a, sections, out),
    }
}

fn read_input(path: &str) -> CliResult<String> {
    if path == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| CliError::Data(format!("{path}: {e}")))
    }
}

/// Non-blank lines as `(line number, value)`.
fn read_jsonl<T: DeserializeOwned>(path: &str) -> CliResult<Vec<(usize, T)>> {
    let text = read_input(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| CliError::Data(format!("{path}:{}: {e}", i + 1)))
        })
        .collect()
}

fn at<T>(path: &str, line: usize, r: crate::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Data(format!("{path}:{line}: {e}")))
}

fn sink(out_path: &Option<PathBuf>, out: &mut dyn Write, text: &str) -> CliResult<()> {
    match out_path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> CliResult<String> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).map_err(|e| CliError::Data(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

fn pretty<T: Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn cmd_gen(a: GenArgs, sections: &ConfigSections, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = sections
        .generator
        .clone()
        .unwrap_or_else(|| GeneratorConfig::for_protocol(a.preset));
    let (dt, h, f) = a.preset.shape();
    if sections.generator.is_none() {
        (cfg.dt, cfg.history_steps, cfg.future_steps) = (dt, h, f);
    }
    cfg.speed_profile = a.profile.or(cfg.speed_profile);
    cfg.maneuver = a.maneuver.or(cfg.maneuver);
    if let Some(n) = a.max_agents {
        cfg.max_agents = n;
    }
    if let Some(n) = a.max_lanes {
        cfg.max_lanes = n;
    }
    if let Some(p) = a.blockage_prob {
        cfg.blockage_probability = p;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let logs = (0..a.count)
        .map(|i| gen_scenario(&cfg, a.seed.wrapping_add(i)))
        .collect::<crate::Result<Vec<_>>>()?;
    sink(&a.out, out, &jsonl(&logs)?)
}

fn cmd_samples(a: SamplesArgs, sections: &ConfigSections, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = sections.samples.clone().unwrap_or_default();
    if let Some(rg) = sections.roadgraph.clone() {
        cfg.roadgraph = rg;
    }
    if let Some(b) = sections.blockage {
        cfg.blockage = b;
    }
    if let Some(o) = a.cot_order {
        cfg.cot_order = o;
    }
    if a.lenient {
        cfg.roadgraph.strict_truncation = false;
    }
    let mut kinds = Vec::new();
    for t in &a.task {
        let k: TaskKind = t.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
        kinds.push(if a.cot && k == TaskKind::Planning { TaskKind::PlanningCot } else { k });
    }
    let logs: Vec<(usize, ScenarioLog)> = read_jsonl(&a.input)?;
    let mut samples = Vec::new();
    for (idx, (line, s)) in logs.iter().enumerate() {
        for &k in &kinds {
            let seed = derive_seed(a.seed, idx as u64, 0);
            samples.push(at(&a.input, *line, build_sample(s, k, &cfg, seed, a.train_mode))?);
        }
    }
    sink(&a.out, out, &jsonl(&samples)?)
}

#[derive(Serialize)]
struct DecodedRecord {
    scenario_id: String,
    kind: TaskKind,
    #[serde(flatten)]
    decoded: DecodedTarget,
}

fn prompt_dt(prompt: &str) -> Option<f64> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix("Time step: "))
        .and_then(|v| v.trim().parse().ok())
}

fn cmd_decode(a: DecodeArgs, out: &mut dyn Write) -> CliResult<()> {
    let filter = a
        .task
        .as_deref()
        .map(str::parse::<TaskKind>)
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(text) = &a.text {
        let kind = filter.ok_or_else(|| CliError::Usage("--text needs --task".into()))?;
        let decoded = decode_target(kind, text, a.dt, a.cot_order)?;
        let rec = DecodedRecord {
            scenario_id: String::new(),
            kind,
            decoded,
        };
        return sink(&a.out, out, &jsonl(&[rec])?);
    }
    let samples: Vec<(usize, TaskSample)> = read_jsonl(&a.input)?;
    let mut recs = Vec::new();
    for (line, s) in samples {
        if filter.is_some_and(|k| k != s.kind) {
            continue;
        }
        let dt = prompt_dt(&s.prompt).unwrap_or(a.dt);
        let decoded = at(&a.input, line, decode_target(s.kind, &s.target, dt, a.cot_order))?;
        recs.push(DecodedRecord {
            scenario_id: s.scenario_id,
            kind: s.kind,
            decoded,
        });
    }
    sink(&a.out, out, &jsonl(&recs)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRecord {
    scenario_id: String,
    trajectory: Trajectory,
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRecord {
    scenario_id: String,
    #[serde(flatten)]
    set: CandidateSet,
}

fn cmd_plan(a: PlanArgs, out: &mut dyn Write) -> CliResult<()> {
    let noisy = match a.planner.as_str() {
        "cv" => false,
        "noisy" => true,
        other => return Err(CliError::Usage(format!("unknown planner `{other}` (cv | noisy)"))),
    };
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be >= 1".into()));
    }
    let samples: Vec<(usize, TaskSample)> = read_jsonl(&a.input)?;
    let mut text = String::new();
    for (idx, (line, s)) in samples.iter().enumerate() {
        if !matches!(s.kind, TaskKind::Planning | TaskKind::PlanningCot) {
            continue;
        }
        let prompt = at(&a.input, *line, parse_planning_prompt(&s.prompt))?;
        let dt = prompt.history.dt();
        let candidates = (0..a.samples)
            .map(|j| {
                if noisy {
                    let gt = match decode_target(s.kind, &s.target, dt, a.cot_order)? {
                        DecodedTarget::Trajectory { trajectory } | DecodedTarget::Cot { trajectory, .. } => trajectory,
                        _ => unreachable!("planning targets decode to trajectories"),
                    };
                    noisy_oracle_planner(&gt, a.sigma, derive_seed(a.seed, idx as u64, j as u64))
                } else {
                    constant_velocity_planner(&prompt.history, prompt.future_steps)
                }
            })
            .collect::<crate::Result<Vec<_>>>();
        let mut candidates = at(&a.input, *line, candidates)?;
        let line_text = if a.samples == 1 {
            serde_json::to_string(&TrajectoryRecord {
                scenario_id: s.scenario_id.clone(),
                trajectory: candidates.remove(0),
            })
        } else {
            serde_json::to_string(&CandidateRecord {
                scenario_id: s.scenario_id.clone(),
                set: CandidateSet {
                    candidates,
                    source_seed: derive_seed(a.seed, idx as u64, 0),
                },
            })
        }
        .map_err(|e| CliError::Data(e.to_string()))?;
        text.push_str(&line_text);
        text.push('\n');
    }
    sink(&a.out, out, &text)
}

fn record_id(v: &Value) -> Option<String> {
    v.get("scenario_id")
        .or_else(|| v.get("id"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

/// Loads one value per scenario id, either from a scenario line (via
/// `from_scenario`) or from a record carrying `field`.
fn load_by_id<T: DeserializeOwned>(
    path: &str,
    field: &str,
    from_scenario: impl Fn(&ScenarioLog) -> crate::Result<T>,
) -> CliResult<BTreeMap<String, T>> {
    let rows: Vec<(usize, Value)> = read_jsonl(path)?;
    let mut out = BTreeMap::new();
    for (line, v) in rows {
        let id = record_id(&v).ok_or_else(|| CliError::Data(format!("{path}:{line}: record has no scenario_id")))?;
        let item = if v.get("ego_pose").is_some() {
            let s: ScenarioLog =
                serde_json::from_value(v).map_err(|e| CliError::Data(format!("{path}:{line}: {e}")))?;
            at(path, line, from_scenario(&s))?
        } else {
            // decoded files may mix task kinds; other kinds are skipped
            let Some(inner) = v.get(field).cloned() else {
                continue;
            };
            serde_json::from_value(inner).map_err(|e| CliError::Data(format!("{path}:{line}: {e}")))?
        };
        if out.insert(id.clone(), item).is_some() {
            return Err(CliError::Data(format!("{path}:{line}: duplicate scenario id `{id}`")));
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{path}: no records with `{field}`")));
    }
    Ok(out)
}

/// Pairs predictions with ground truth, sorted by scenario id.
fn paired<T>(preds: BTreeMap<String, T>, mut gts: BTreeMap<String, T>) -> CliResult<Vec<(String, T, T)>> {
    let mut out = Vec::with_capacity(preds.len());
    for (id, p) in preds {
        let g = gts
            .remove(&id)
            .ok_or_else(|| CliError::Data(format!("no ground truth for scenario `{id}`")))?;
        out.push((id, p, g));
    }
    if let Some(id) = gts.keys().next() {
        return Err(CliError::Data(format!("no prediction for scenario `{id}`")));
    }
    Ok(out)
}

fn cmd_eval_plan(a: EvalPlanArgs, out: &mut dyn Write) -> CliResult<()> {
    let future = |s: &ScenarioLog| Ok(s.ego_future.clone());
    let pairs: Vec<(Trajectory, Trajectory)> = paired(
        load_by_id(&a.preds, "trajectory", future)?,
        load_by_id(&a.gts, "trajectory", future)?,
    )?
    .into_iter()
    .map(|(_, p, g)| (p, g))
    .collect();
    let report = planning_report(&pairs, &a.preset.ade_horizons(), &a.preset.l2_horizons())?;
    let text = if a.json { pretty(&report)? } else { report.to_table() };
    Ok(out.write_all(text.as_bytes())?)
}

fn pr_table(rows: &[(&str, &PRReport)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
    let mut s = format!(
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>6}  {:>6}  {:>6}\n",
        "metric", "precision", "recall", "f1", "tp", "fp", "fn"
    );
    for (name, r) in rows {
        let _ = writeln!(
            s,
            "{name:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>6}  {:>6}  {:>6}",
            r.precision, r.recall, r.f1, r.tp, r.fp, r.fn_
        );
    }
    s
}

#[derive(Serialize)]
struct RoadgraphReport {
    lane: PRReport,
    raster: PRReport,
    n_examples: usize,
}

fn cmd_eval_rg(a: EvalRgArgs, out: &mut dyn Write) -> CliResult<()> {
    if a.roi.len() != 4 {
        return Err(CliError::Usage("--roi takes min_x,min_y,max_x,max_y".into()));
    }
    let roi = Roi::new(a.roi[0], a.roi[1], a.roi[2], a.roi[3]).map_err(|e| CliError::Usage(e.to_string()))?;
    let ego = |s: &ScenarioLog| s.roadgraph.to_ego(&s.ego_pose);
    let pairs = paired::<RoadGraph>(load_by_id(&a.preds, "roadgraph", ego)?, load_by_id(&a.gts, "roadgraph", ego)?)?;
    if pairs.is_empty() {
        return Err(Error::EmptyEvalSet.into());
    }
    let mut lanes = Vec::new();
    let mut rasters = Vec::new();
    for (id, p, g) in &pairs {
        let ctx = |e: Error| CliError::Data(format!("scenario `{id}`: {e}"));
        lanes.push(lane_pr_with(p, g, a.threshold, a.matcher).map_err(ctx)?);
        rasters.push(raster_pr(p, g, &roi, a.resolution).map_err(ctx)?);
    }
    let report = RoadgraphReport {
        lane: PRReport::merge(&lanes),
        raster: PRReport::merge(&rasters),
        n_examples: pairs.len(),
    };
    let text = if a.json {
        pretty(&report)?
    } else {
        let mut t = pr_table(&[("lane", &report.lane), ("raster", &report.raster)]);
        let _ = writeln!(t, "examples {}", report.n_examples);
        t
    };
    Ok(out.write_all(text.as_bytes())?)
}

#[derive(Serialize)]
struct DetectionReport {
    #[serde(flatten)]
    pr: PRReport,
    n_examples: usize,
}

fn cmd_eval_det(a: EvalDetArgs, sections: &ConfigSections, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = sections.let_cfg.unwrap_or_default();
    if let Some(v) = a.let_pct {
        cfg.longitudinal_tolerance_pct = v;
    }
    if let Some(v) = a.let_min {
        cfg.min_longitudinal_tolerance = v;
    }
    if let Some(v) = a.lat_tol {
        cfg.lateral_tolerance = v;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let boxes = |s: &ScenarioLog| Ok(s.plain_boxes());
    let pairs = paired::<Vec<Box3D>>(load_by_id(&a.preds, "boxes", boxes)?, load_by_id(&a.gts, "boxes", boxes)?)?;
    if pairs.is_empty() {
        return Err(Error::EmptyEvalSet.into());
    }
    let reports = pairs
        .iter()
        .map(|(_, p, g)| detection_pr_with(p, g, &cfg, a.matcher))
        .collect::<crate::Result<Vec<_>>>()?;
    let report = DetectionReport {
        pr: PRReport::merge(&reports),
        n_examples: pairs.len(),
    };
    let text = if a.json {
        pretty(&report)?
    } else {
        let mut t = pr_table(&[("3d-det", &report.pr)]);
        let _ = writeln!(t, "examples {}", report.n_examples);
        t
    };
    Ok(out.write_all(text.as_bytes())?)
}

#[derive(Serialize)]
struct AggregateRecord {
    scenario_id: String,
    index: usize,
    trajectory: Trajectory,
    #[serde(skip_serializing_if = "Option::is_none")]
    representatives: Option<Vec<Representative>>,
}

fn cmd_aggregate(a: AggregateArgs, out: &mut dyn Write) -> CliResult<()> {
    let kmeans = match a.method.as_str() {
        "median" => false,
        "kmeans" => true,
        other => return Err(CliError::Usage(format!("unknown method `{other}` (median | kmeans)"))),
    };
    let rows: Vec<(usize, CandidateRecord)> = read_jsonl(&a.input)?;
    let mut recs = Vec::new();
    for (idx, (line, r)) in rows.into_iter().enumerate() {
        let rec = if kmeans {
            let seed = derive_seed(a.seed, idx as u64, 0);
            let reps = at(&a.input, line, kmeans_representatives(&r.set, a.k.unwrap_or(6), a.iters, seed))?;
            AggregateRecord {
                scenario_id: r.scenario_id,
                index: reps[0].index,
                trajectory: reps[0].trajectory.clone(),
                representatives: Some(reps),
            }
        } else {
            let k = a.k.unwrap_or(r.set.len());
            if k == 0 || k > r.set.len() {
                return Err(CliError::Data(format!(
                    "{}:{line}: k = {k} with {} candidates",
                    a.input,
                    r.set.len()
                )));
            }
            let set = CandidateSet {
                candidates: r.set.candidates[..k].to_vec(),
                source_seed: r.set.source_seed,
            };
            let (index, trajectory) = at(&a.input, line, median_trajectory(&set))?;
            AggregateRecord {
                scenario_id: r.scenario_id,
                index,
                trajectory,
                representatives: None,
            }
        };
        recs.push(rec);
    }
    sink(&a.out, out, &jsonl(&recs)?)
}

fn cmd_ablate(a: AblateArgs, out: &mut dyn Write) -> CliResult<()> {
    let rows: Vec<(usize, CandidateRecord)> = read_jsonl(&a.candidates)?;
    let mut cands = BTreeMap::new();
    for (line, r) in rows {
        if cands.insert(r.scenario_id.clone(), r.set).is_some() {
            return Err(CliError::Data(format!("{}:{line}: duplicate scenario id", a.candidates)));
        }
    }
    let mut gts = load_by_id(&a.gts, "trajectory", |s: &ScenarioLog| Ok(s.ego_future.clone()))?;
    let mut sets = Vec::with_capacity(cands.len());
    let mut truths = Vec::with_capacity(cands.len());
    for (id, set) in cands {
        let gt = gts
            .remove(&id)
            .ok_or_else(|| CliError::Data(format!("no ground truth for scenario `{id}`")))?;
        sets.push(set);
        truths.push(gt);
    }
    let curve = sampling_ablation(&sets, &truths, &a.ks)?;
    let text = if a.json {
        pretty(&curve)?
    } else {
        let mut t = String::from("k,ade\n");
        for (k, v) in &curve {
            let _ = writeln!(t, "{k},{v:.6}");
        }
        let values: Vec<f64> = curve.values().copied().collect();
        let _ = writeln!(t, "# {}", sparkline(&values));
        t
    };
    Ok(out.write_all(text.as_bytes())?)
}

fn cmd_mixture(a: MixtureArgs, out: &mut dyn Write) -> CliResult<()> {
    #[derive(Serialize)]
    struct Audit {
        seed: u64,
        mode: SamplingMode,
        draws: usize,
        counts: Vec<u64>,
        empirical: Vec<f64>,
        max_abs_error: f64,
    }
    #[derive(Serialize)]
    struct MixtureOutput {
        plan: MixturePlan,
        audit: Audit,
    }
    let plan = mixture_plan(&a.sizes, a.epochs).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut audit_plan = plan.clone();
    if a.draws > 0 {
        audit_plan.total_iterations = a.draws;
    }
    let draws: Vec<(usize, u64)> = sample_stream_with(&audit_plan, a.seed, a.mode)?.collect();
    let empirical = empirical_ratios(&draws, plan.sizes.len());
    let mut counts = vec![0u64; plan.sizes.len()];
    for &(t, _) in &draws {
        counts[t] += 1;
    }
    let max_abs_error = if draws.is_empty() {
        0.0
    } else {
        empirical
            .iter()
            .zip(&plan.probabilities)
            .map(|(e, p)| (e - p).abs())
            .fold(0.0, f64::max)
    };
    let text = pretty(&MixtureOutput {
        audit: Audit {
            seed: a.seed,
            mode: a.mode,
            draws: draws.len(),
            counts,
            empirical,
            max_abs_error,
        },
        plan,
    })?;
    Ok(out.write_all(text.as_bytes())?)
}

fn cmd_blockage(a: BlockageArgs, sections: &ConfigSections, out: &mut dyn Write) -> CliResult<()> {
    #[derive(Serialize)]
    struct Label {
        scenario_id: String,
        blocked: bool,
    }
    let mut cfg = sections.blockage.unwrap_or_default();
    if let Some(v) = a.lookahead {
        cfg.lookahead = v;
    }
    if let Some(v) = a.coverage {
        cfg.coverage_fraction = v;
    }
    if let Some(v) = a.stationary_speed {
        cfg.stationary_speed = v;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let logs: Vec<(usize, ScenarioLog)> = read_jsonl(&a.input)?;
    let labels: Vec<Label> = logs
        .iter()
        .map(|(_, s)| Label {
            scenario_id: s.id.clone(),
            blocked: blockage_label(s, &cfg),
        })
        .collect();
    sink(&a.out, out, &jsonl(&labels)?)
}
