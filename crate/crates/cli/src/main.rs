//! `graph-locate`: build, simulate, match, merge and evaluate from the shell.
//!
//! Exit codes: 0 success, 2 ambiguous or no match, 3 input error, 4 solver
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use graph_locate::dataset::{benchmark_suite, Dataset, NoiseLevels};
use graph_locate::eval::{
    run_pipeline, run_suite, seed_override, EvalError, PipelineOutput, PipelineParams, SgraphSource,
};
use graph_locate::graph::GraphRole;
use graph_locate::matcher::MatchSet;
use graph_locate::merger::{merge, MergeError};
use graph_locate::render::{match_links, render_svg, Scene};
use graph_locate::sgraph::{ingest_sgraph, parse_graph};
use graph_locate::{
    build_agraph, match_graphs, FloorplanSpec, FrameId, FrameTransform, LayeredGraph, MatchOutcome, MatchParams,
    MatchStatus, MergeParams, SimConfig,
};

const EXIT_UNMATCHED: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_SOLVER: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type Outcome = Result<u8, Failure>;

fn input(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: error.into(),
    }
}

fn solver(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_SOLVER,
        error: error.into(),
    }
}

#[derive(Parser)]
#[command(
    name = "graph-locate",
    version,
    about = "Localize a robot map against an architectural plan"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Architectural graph operations.
    Agraph {
        #[command(subcommand)]
        command: AgraphCommand,
    },
    /// Situational graph operations.
    Sgraph {
        #[command(subcommand)]
        command: SgraphCommand,
    },
    /// Match a situational graph against an architectural graph.
    Match {
        agraph: PathBuf,
        sgraph: PathBuf,
        /// Matching parameters.
        #[arg(short, long)]
        params: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve for the map-to-plan transform and write the merged graph.
    Merge {
        agraph: PathBuf,
        sgraph: PathBuf,
        /// A match set, or a match outcome whose best set is used.
        #[arg(long)]
        matches: PathBuf,
        /// Merging parameters.
        #[arg(short, long)]
        params: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Per-iteration cost trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Match and merge end to end, reporting metrics.
    Pipeline(PipelineArgs),
    /// Run every dataset file in a directory.
    EvalSuite {
        dir: PathBuf,
        /// Pipeline parameters.
        #[arg(short, long)]
        params: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the six-plan benchmark suite as dataset files.
    Generate {
        dir: PathBuf,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Noise::Nominal)]
        noise: Noise,
    },
    /// Draw graphs, a trajectory and matches as SVG.
    Render {
        agraph: PathBuf,
        #[arg(long)]
        sgraph: Option<PathBuf>,
        /// Merged graph whose transform places the situational graph.
        #[arg(long)]
        isgraph: Option<PathBuf>,
        /// Match set or match outcome to draw as links.
        #[arg(long)]
        matches: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum AgraphCommand {
    /// Build from a floorplan spec.
    Build {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum SgraphCommand {
    /// Simulate a walk through the plan.
    Simulate {
        agraph: PathBuf,
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// Dataset file holding a plan and a simulation config.
    #[arg(long, conflicts_with_all = ["agraph", "sgraph", "sim"])]
    dataset: Option<PathBuf>,
    #[arg(long, requires = "source")]
    agraph: Option<PathBuf>,
    #[arg(long, group = "source")]
    sgraph: Option<PathBuf>,
    #[arg(long, group = "source")]
    sim: Option<PathBuf>,
    /// Pipeline parameters.
    #[arg(short, long)]
    params: Option<PathBuf>,
    /// Report JSON; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    isgraph: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Zero,
    Nominal,
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| anyhow!("{}: at {}: {}", path.display(), e.path(), e.inner()))
        .map_err(input)
}

fn read_params<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, Failure> {
    path.as_deref().map_or_else(|| Ok(T::default()), read_json)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(input)?;
    }
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(input)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn emit(path: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_agraph(path: &Path) -> Result<LayeredGraph, Failure> {
    let g = parse_graph(&read(path)?).map_err(|e| input(anyhow!("{}: {e}", path.display())))?;
    if g.role != GraphRole::Architectural || g.frame != FrameId::B {
        return Err(input(anyhow!(
            "{}: expected an architectural graph in frame B",
            path.display()
        )));
    }
    g.validate().map_err(|e| input(anyhow!("{}: {e}", path.display())))?;
    Ok(g)
}

fn load_sgraph(path: &Path) -> Result<LayeredGraph, Failure> {
    let ingested = ingest_sgraph(&read(path)?).map_err(|e| input(anyhow!("{}: {e}", path.display())))?;
    Ok(ingested.graph)
}

/// Reads either a bare match set or a match outcome.
fn load_matches(path: &Path) -> Result<MatchSet, Failure> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("status").is_some() {
        let outcome: MatchOutcome =
            serde_json::from_value(value).map_err(|e| input(anyhow!("{}: {e}", path.display())))?;
        return outcome
            .best
            .ok_or_else(|| input(anyhow!("{}: match outcome has no best set", path.display())));
    }
    serde_json::from_value(value).map_err(|e| input(anyhow!("{}: {e}", path.display())))
}

fn with_seed(mut cfg: SimConfig) -> SimConfig {
    if let Some(seed) = seed_override() {
        cfg.seed = seed;
    }
    cfg
}

fn status_code(status: MatchStatus) -> u8 {
    match status {
        MatchStatus::Unique => 0,
        MatchStatus::Ambiguous | MatchStatus::NoMatch => EXIT_UNMATCHED,
    }
}

fn merge_failure(e: MergeError) -> Failure {
    match e {
        MergeError::MatchRejected { .. } => Failure {
            code: EXIT_UNMATCHED,
            error: e.into(),
        },
        MergeError::MissingNode(_) | MergeError::Graph(_) => input(e),
        _ => solver(e),
    }
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Solver(m) => merge_failure(m),
        EvalError::Stage { stage: "merge", .. } => solver(e),
        other => input(other),
    }
}

fn agraph_build(spec: &Path, output: &Path) -> Outcome {
    let spec: FloorplanSpec = read_json(spec)?;
    let g = build_agraph(&spec).map_err(input)?;
    write(output, &g.to_json())?;
    Ok(0)
}

fn sgraph_simulate(agraph: &Path, config: &Path, output: &Path, truth: &Option<PathBuf>) -> Outcome {
    let a = load_agraph(agraph)?;
    let cfg = with_seed(read_json(config)?);
    let (s, gt) = graph_locate::simulate_sgraph(&a, &cfg).map_err(input)?;
    write(output, &s.to_json())?;
    if let Some(t) = truth {
        write(t, &to_json(&gt))?;
    }
    Ok(0)
}

fn run_match(agraph: &Path, sgraph: &Path, params: &Option<PathBuf>, output: &Option<PathBuf>) -> Outcome {
    let a = load_agraph(agraph)?;
    let s = load_sgraph(sgraph)?;
    let params: MatchParams = read_params(params)?;
    let outcome = match_graphs(&a, &s, &params).map_err(solver)?;
    emit(output, &to_json(&outcome))?;
    Ok(status_code(outcome.status))
}

fn run_merge(
    agraph: &Path,
    sgraph: &Path,
    matches: &Path,
    params: &Option<PathBuf>,
    output: &Option<PathBuf>,
    trace: &Option<PathBuf>,
) -> Outcome {
    let a = load_agraph(agraph)?;
    let s = load_sgraph(sgraph)?;
    let m = load_matches(matches)?;
    let params: MergeParams = read_params(params)?;
    let is = merge(&a, &s, &m, &params).map_err(merge_failure)?;
    for w in &is.warnings {
        log::warn!("{w}");
    }
    let mut text = is.to_json();
    text.push('\n');
    emit(output, &text)?;
    if let Some(t) = trace {
        write(t, &is.trace_csv())?;
    }
    Ok(0)
}

fn pipeline_svg(agraph: &LayeredGraph, out: &PipelineOutput) -> String {
    let mut scene = Scene::default();
    scene.add_graph(agraph, FrameTransform::identity(), "a");
    if let Some(is) = &out.isgraph {
        scene.add_graph(&out.sgraph, is.transform, "s");
        scene.trajectory_of(&out.sgraph, &is.transform);
        if let Some(best) = &out.outcome.best {
            scene.links = match_links(agraph, &FrameTransform::identity(), &out.sgraph, &is.transform, best);
        }
    }
    render_svg(&scene)
}

fn run_pipeline_cmd(args: &PipelineArgs) -> Outcome {
    let params: PipelineParams = read_params(&args.params)?;
    let (name, agraph, source) = if let Some(path) = &args.dataset {
        let ds: Dataset = read_json(path)?;
        let a = build_agraph(&ds.plan).map_err(input)?;
        (ds.id, a, SgraphSource::Simulate(with_seed(ds.sim)))
    } else {
        let Some(apath) = &args.agraph else {
            return Err(input(anyhow!("pass --dataset, or --agraph with --sgraph or --sim")));
        };
        let a = load_agraph(apath)?;
        let source = match (&args.sgraph, &args.sim) {
            (Some(s), None) => SgraphSource::Given(load_sgraph(s)?),
            (None, Some(c)) => SgraphSource::Simulate(with_seed(read_json(c)?)),
            _ => return Err(input(anyhow!("pass exactly one of --sgraph and --sim"))),
        };
        let name = apath
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        (name, a, source)
    };
    let out = run_pipeline(&name, &agraph, &source, &params).map_err(eval_failure)?;
    log::info!(
        "timings: matching {:.3} s, merging {:.3} s",
        out.timings.matching,
        out.timings.merging
    );
    emit(&args.output, &to_json(&out.report))?;
    if let (Some(p), Some(is)) = (&args.isgraph, &out.isgraph) {
        let mut text = is.to_json();
        text.push('\n');
        write(p, &text)?;
    }
    if let Some(p) = &args.svg {
        write(p, &pipeline_svg(&agraph, &out))?;
    }
    Ok(status_code(out.report.status))
}

fn eval_suite(dir: &Path, params: &Option<PathBuf>, output: &Option<PathBuf>) -> Outcome {
    let params: PipelineParams = read_params(params)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))
        .map_err(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(input(anyhow!("{}: no dataset files", dir.display())));
    }
    let datasets = files
        .iter()
        .map(|f| {
            read_json::<Dataset>(f).map(|mut d| {
                d.sim = with_seed(d.sim);
                d
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (report, timings) = run_suite(&datasets, &params).map_err(eval_failure)?;
    for (r, t) in report.reports.iter().zip(&timings) {
        log::info!(
            "{}: matching {:.3} s, merging {:.3} s",
            r.dataset,
            t.matching,
            t.merging
        );
    }
    emit(output, &to_json(&report))?;
    Ok(0)
}

fn generate(dir: &Path, seed: u64, noise: Noise) -> Outcome {
    let seed = seed_override().unwrap_or(seed);
    let levels = match noise {
        Noise::Zero => NoiseLevels::ZERO,
        Noise::Nominal => NoiseLevels::NOMINAL,
    };
    for ds in benchmark_suite(levels, seed) {
        write(&dir.join(format!("{}.json", ds.id)), &to_json(&ds))?;
    }
    Ok(0)
}

fn render(
    agraph: &Path,
    sgraph: &Option<PathBuf>,
    isgraph: &Option<PathBuf>,
    matches: &Option<PathBuf>,
    output: &Path,
) -> Outcome {
    let a = load_agraph(agraph)?;
    let s = sgraph.as_deref().map(load_sgraph).transpose()?;
    let transform = match isgraph {
        Some(p) => {
            let v: serde_json::Value = read_json(p)?;
            let t = v
                .get("transform")
                .cloned()
                .ok_or_else(|| input(anyhow!("{}: no transform", p.display())))?;
            serde_json::from_value(t).map_err(|e| input(anyhow!("{}: {e}", p.display())))?
        }
        None => FrameTransform::identity(),
    };
    let m = matches.as_deref().map(load_matches).transpose()?;
    let mut scene = Scene::default();
    scene.add_graph(&a, FrameTransform::identity(), "a");
    if let Some(s) = &s {
        scene.add_graph(s, transform, "s");
        scene.trajectory_of(s, &transform);
        if let Some(m) = &m {
            scene.links = match_links(&a, &FrameTransform::identity(), s, &transform, m);
        }
    }
    write(output, &render_svg(&scene))?;
    Ok(0)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Agraph {
            command: AgraphCommand::Build { spec, output },
        } => agraph_build(&spec, &output),
        Command::Sgraph {
            command:
                SgraphCommand::Simulate {
                    agraph,
                    config,
                    output,
                    truth,
                },
        } => sgraph_simulate(&agraph, &config, &output, &truth),
        Command::Match {
            agraph,
            sgraph,
            params,
            output,
        } => run_match(&agraph, &sgraph, &params, &output),
        Command::Merge {
            agraph,
            sgraph,
            matches,
            params,
            output,
            trace,
        } => run_merge(&agraph, &sgraph, &matches, &params, &output, &trace),
        Command::Pipeline(args) => run_pipeline_cmd(&args),
        Command::EvalSuite { dir, params, output } => eval_suite(&dir, &params, &output),
        Command::Generate { dir, seed, noise } => generate(&dir, seed, noise),
        Command::Render {
            agraph,
            sgraph,
            isgraph,
            matches,
            output,
        } => render(&agraph, &sgraph, &isgraph, &matches, &output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
