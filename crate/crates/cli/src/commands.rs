//! Subcommand definitions and their implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use sparse_dve::analysis::{
    confusion_reward_study, efficiency_report, partition_checkpoint, sparsify_fit, spread_study, EfficiencyEntry, RunLog,
    SparsifyConfig, SpreadConfig,
};
use sparse_dve::envs::LevelSet;
use sparse_dve::ppo::{
    evaluate, train, Checkpoint, ConfigText, DirSink, EvalRow, EvalSummary, TrainConfig, CONFIG_KEYS,
};

use crate::manifest::RunManifest;
use crate::plot::{charts_for_columns, Chart, Series, Table};
use crate::CliError;

/// Environment variable naming the default artifact root.
pub const RUNS_DIR_VAR: &str = "SPARSE_DVE_RUNS_DIR";
pub const CONFIG_FILE: &str = "config.cfg";

#[derive(Debug, Parser)]
#[command(name = "sparse-dve", version, about = "Multi-scene PPO with a sparsified clustered critic")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a fixed set of levels.
    Eval(EvalArgs),
    /// Run one of the verification analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Draw SVG line charts from metrics CSVs.
    Plot(PlotArgs),
    /// List every config key with its meaning.
    Keys,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Run directory; defaults to `$SPARSE_DVE_RUNS_DIR/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run name under the artifact root.
    #[arg(long)]
    pub name: Option<String>,
    /// Continue the run in an existing directory from its latest checkpoint.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args, Clone)]
pub struct LevelArgs {
    /// Number of evaluation levels (replaces the checkpoint's held-out set).
    #[arg(long, requires = "level_base")]
    pub levels: Option<usize>,
    /// First level seed of the replacement set.
    #[arg(long, requires = "levels")]
    pub level_base: Option<u64>,
    /// Evaluate on the training levels instead of held-out ones.
    #[arg(long, conflicts_with = "levels")]
    pub on_train_levels: bool,
}

impl LevelArgs {
    fn resolve(&self, cfg: &TrainConfig) -> LevelSet {
        match (self.levels, self.level_base) {
            (Some(n), Some(base)) => LevelSet::from_count(n, base),
            _ if self.on_train_levels => cfg.train_levels.clone(),
            _ => cfg.eval_levels.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Episodes to play; defaults to the config's evaluation count.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Action-sampling seed; defaults to the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub levels: LevelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Correlate inverse confusion with reward across dve runs.
    Correlation(CorrelationArgs),
    /// Compare cluster-mean spread of plain and sparsified critic regressions.
    Spread(SpreadArgs),
    /// Minimise the confusion-contribution loss alone on a fixed batch.
    Sparsify(SparsifyArgs),
    /// Partition visited states by their most probable cluster.
    Partition(PartitionArgs),
    /// Compare reward, episode length and revisits of several agents.
    Efficiency(EfficiencyArgs),
}

#[derive(Debug, Args)]
pub struct CorrelationArgs {
    /// Run directories written by `train`.
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub from: u64,
    #[arg(long, default_value_t = u64::MAX)]
    pub to: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpreadArgs {
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SparsifyArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Number of visited states to sample.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub levels: LevelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EfficiencyArgs {
    /// `LABEL=CHECKPOINT`; give at least two.
    #[arg(long = "agent", required = true, value_name = "LABEL=CHECKPOINT")]
    pub agents: Vec<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub levels: LevelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// `[NAME=]PATH` of a metrics CSV; the name defaults to the parent directory.
    #[arg(long = "csv", required = true)]
    pub csvs: Vec<String>,
    /// Column to plot; one chart per column.
    #[arg(long = "column", required = true)]
    pub columns: Vec<String>,
    #[arg(long, default_value = "step")]
    pub x: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command line.
pub fn run(cli: Cli, arguments: Vec<String>) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, arguments),
        Command::Eval(a) => cmd_eval(&a, arguments),
        Command::Analyze(kind) => cmd_analyze(&kind, arguments),
        Command::Plot(a) => cmd_plot(&a, arguments),
        Command::Keys => {
            for (key, doc) in CONFIG_KEYS {
                println!("{key:28} {doc}");
            }
            Ok(())
        }
    }
}

pub fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path.display().to_string()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(CliError::io(path.display().to_string()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(CliError::io(path.display().to_string()))
}

fn write_chart(dir: &Path, file: &str, chart: &Chart) -> Result<(), CliError> {
    write(&dir.join(file), &chart.to_svg()?)
}

/// Config file plus overrides, with every problem reported at once.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig, CliError> {
    let mut text = match path {
        Some(p) => ConfigText::parse(&read(p)?).map_err(CliError::Config)?,
        None => ConfigText::default(),
    };
    let mut errors: Vec<String> = overrides.iter().filter_map(|kv| text.set_pair(kv).err()).collect();
    match text.resolve() {
        Ok(cfg) if errors.is_empty() => Ok(cfg),
        Ok(_) => Err(CliError::Config(errors)),
        Err(more) => {
            errors.extend(more);
            Err(CliError::Config(errors))
        }
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    if path.is_dir() {
        return Err(CliError::Input(format!(
            "{} is a directory; expected a checkpoint file such as {}",
            path.display(),
            path.join(DirSink::CHECKPOINTS).join(DirSink::LATEST).display()
        )));
    }
    let bytes = fs::read(path).map_err(CliError::io(path.display().to_string()))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn default_run_name(cfg: &TrainConfig) -> String {
    format!("{}-{}-seed{}", cfg.mode.name(), cfg.env.name(), cfg.seed)
}

fn is_nonempty_dir(p: &Path) -> bool {
    fs::read_dir(p).map(|mut d| d.next().is_some()).unwrap_or(false)
}

/// Drops CSV rows logged after `max_step`, so a resumed run does not repeat them.
fn truncate_after(path: &Path, max_step: u64) -> Result<(), CliError> {
    if !path.exists() {
        return Ok(());
    }
    let text = read(path)?;
    let mut kept = String::new();
    for (i, line) in text.lines().enumerate() {
        let step = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
        if i == 0 || step.is_some_and(|s| s <= max_step) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    write(path, &kept)
}

pub fn cmd_train(a: &TrainArgs, arguments: Vec<String>) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref(), &a.set)?;
    let dir = match (&a.out, &a.name) {
        (Some(d), _) => d.clone(),
        (None, Some(n)) => runs_root().join(n),
        (None, None) => runs_root().join(default_run_name(&cfg)),
    };
    let resume = if a.resume {
        let previous = RunManifest::load(&dir)?;
        if previous.config_hash.as_deref() != Some(cfg.hash().as_str()) {
            return Err(CliError::Input(format!("{}: config differs from the one the run was started with", dir.display())));
        }
        let ckpt = load_checkpoint(&dir.join(DirSink::CHECKPOINTS).join(DirSink::LATEST))?;
        let done = ckpt.update * cfg.steps_per_update();
        truncate_after(&dir.join(DirSink::METRICS), done)?;
        truncate_after(&dir.join(DirSink::EVAL), done)?;
        info!("resuming {} after update {}", dir.display(), ckpt.update);
        Some(ckpt)
    } else {
        if is_nonempty_dir(&dir) {
            return Err(CliError::Input(format!("run directory {} already exists; pass --resume to continue it", dir.display())));
        }
        None
    };
    create_dir(&dir)?;
    let text = cfg.to_text();
    write(&dir.join(CONFIG_FILE), &text)?;
    let manifest = RunManifest::start("train", arguments).with_config(text, cfg.seed);
    manifest.write(&dir)?;
    let mut sink = DirSink::new(&dir, resume.is_some()).map_err(CliError::io(dir.display().to_string()))?;
    info!("training {} on {} for {} steps into {}", cfg.mode.name(), cfg.env.name(), cfg.total_steps, dir.display());
    let summary = train(&cfg, &mut sink, resume.as_ref())?;
    manifest.finish(&dir)?;
    let s = summary.final_eval;
    println!(
        "{}: reward {:.3}, episode length {:.2}, mean delta {:.4} over {} episodes",
        dir.display(),
        s.mean_reward,
        s.mean_episode_length,
        s.mean_delta,
        s.episodes
    );
    Ok(())
}

const EVAL_HEADER: &str = "agent,episodes,mean_reward,mean_episode_length,mean_revisits,mean_delta,overlaps_training";
const EPISODE_HEADER: &str = "episode,level_id,level_seed,total_reward,length,revisits,mean_delta";

pub fn cmd_eval(a: &EvalArgs, arguments: Vec<String>) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let cfg = ckpt.config()?;
    let net = ckpt.network()?;
    let levels = a.levels.resolve(&cfg);
    let episodes = a.episodes.unwrap_or(cfg.eval_episodes);
    if episodes == 0 {
        return Err(CliError::Input("episode count must be positive".into()));
    }
    let overlaps = levels.overlaps(&cfg.train_levels);
    if overlaps {
        warn!("evaluation levels overlap the training levels; results are not held-out");
    }
    let seed = a.seed.unwrap_or(cfg.seed);
    let eps = evaluate(&net, &cfg.env, &levels, episodes, seed, false)?;
    let s = EvalSummary::from_episodes(&eps);
    create_dir(&a.out)?;
    let label = cfg.mode.name();
    write(
        &a.out.join("eval.csv"),
        &format!(
            "{EVAL_HEADER}\n{label},{},{:.6},{:.6},{:.6},{:.6},{overlaps}\n",
            s.episodes, s.mean_reward, s.mean_episode_length, s.mean_revisits, s.mean_delta
        ),
    )?;
    let mut per_episode = format!("{EPISODE_HEADER}\n");
    for e in &eps {
        per_episode.push_str(&format!(
            "{},{},{},{:.6},{},{},{:.6}\n",
            e.episode, e.level_id, e.level_seed, e.total_reward, e.length, e.revisits, e.mean_delta
        ));
    }
    write(&a.out.join("episodes.csv"), &per_episode)?;
    RunManifest::start("eval", arguments).with_config(ckpt.config_text.clone(), seed).finish(&a.out)?;
    println!("reward {:.3}, episode length {:.2} over {} episodes", s.mean_reward, s.mean_episode_length, s.episodes);
    Ok(())
}

/// Reads `eval.csv` of a run directory.
pub fn read_eval_rows(dir: &Path) -> Result<Vec<EvalRow>, CliError> {
    let path = dir.join(DirSink::EVAL);
    let source = path.display().to_string();
    let table = Table::parse(&read(&path)?, &source)?;
    let col = |name: &str| table.numeric(name, &source);
    let (step, episodes) = (col("step")?, col("episodes")?);
    let (reward, length) = (col("mean_reward")?, col("mean_episode_length")?);
    let (delta, inv, revisits) = (col("mean_delta")?, col("mean_inv_delta")?, col("mean_revisits")?);
    Ok((0..table.rows.len())
        .map(|i| EvalRow {
            step: step[i] as u64,
            summary: EvalSummary {
                episodes: episodes[i] as usize,
                mean_reward: reward[i],
                mean_episode_length: length[i],
                mean_delta: delta[i],
                mean_inv_delta: inv[i],
                mean_revisits: revisits[i],
            },
        })
        .collect())
}

fn run_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string())
}

pub fn cmd_analyze(kind: &AnalyzeCommand, arguments: Vec<String>) -> Result<(), CliError> {
    match kind {
        AnalyzeCommand::Correlation(a) => analyze_correlation(a, arguments),
        AnalyzeCommand::Spread(a) => analyze_spread(a, arguments),
        AnalyzeCommand::Sparsify(a) => analyze_sparsify(a, arguments),
        AnalyzeCommand::Partition(a) => analyze_partition(a, arguments),
        AnalyzeCommand::Efficiency(a) => analyze_efficiency(a, arguments),
    }
}

fn analyze_correlation(a: &CorrelationArgs, arguments: Vec<String>) -> Result<(), CliError> {
    let mut runs = Vec::with_capacity(a.runs.len());
    for dir in &a.runs {
        let manifest = RunManifest::load(dir)?;
        let text = manifest.config.ok_or_else(|| CliError::Input(format!("{}: not a training run", dir.display())))?;
        let cfg = TrainConfig::from_text(&text).map_err(CliError::Config)?;
        runs.push(RunLog { name: run_name(dir), mode: cfg.mode, evals: read_eval_rows(dir)? });
    }
    let report = confusion_reward_study(&runs, a.from, a.to)?;
    create_dir(&a.out)?;
    write(&a.out.join("samples.csv"), &report.samples_csv())?;
    write(&a.out.join("correlation.csv"), &report.summary_csv())?;
    let series = runs
        .iter()
        .map(|r| {
            let pts = report.samples.iter().filter(|s| s.run == r.name).map(|s| (s.inverse_confusion, s.reward)).collect();
            Series::points(r.name.clone(), pts)
        })
        .collect();
    let chart = Chart {
        title: format!("reward vs inverse confusion (r = {:.3})", report.r),
        x_label: "mean 1/delta".into(),
        y_label: "mean reward".into(),
        series,
    };
    write_chart(&a.out, "correlation.svg", &chart)?;
    RunManifest::start("analyze correlation", arguments).finish(&a.out)?;
    println!("pearson r = {:.6} over {} samples", report.r, report.samples.len());
    Ok(())
}

fn analyze_spread(a: &SpreadArgs, arguments: Vec<String>) -> Result<(), CliError> {
    let mut cfg = SpreadConfig { seeds: (0..a.seeds).collect(), ..SpreadConfig::default() };
    if let Some(it) = a.iterations {
        cfg.iterations = it;
    }
    if let Some(l) = a.levels {
        cfg.levels = l;
    }
    let report = spread_study(&cfg)?;
    for row in report.rows.iter().filter(|r| !r.mse.converged || !r.sparse.converged) {
        warn!("seed {}: fit produced a non-finite loss", row.seed);
    }
    create_dir(&a.out)?;
    write(&a.out.join("spread.csv"), &report.to_csv())?;
    let pts = |f: fn(&sparse_dve::analysis::SpreadRow) -> f64| report.rows.iter().map(|r| (r.seed as f64, f(r))).collect();
    let chart = Chart {
        title: "cluster-mean spread per seed".into(),
        x_label: "seed".into(),
        y_label: "spread".into(),
        series: vec![Series::points("mse", pts(|r| r.mse.spread)), Series::points("mse + cc", pts(|r| r.sparse.spread))],
    };
    write_chart(&a.out, "spread.svg", &chart)?;
    RunManifest::start("analyze spread", arguments).finish(&a.out)?;
    println!("sparse fit wider and more accurate in {} of {} seeds", report.wins(), report.rows.len());
    Ok(())
}

fn analyze_sparsify(a: &SparsifyArgs, arguments: Vec<String>) -> Result<(), CliError> {
    let mut cfg = SparsifyConfig { seed: a.seed, ..SparsifyConfig::default() };
    if let Some(it) = a.iterations {
        cfg.iterations = it;
    }
    let report = sparsify_fit(&cfg)?;
    create_dir(&a.out)?;
    write(&a.out.join("sparsify.csv"), &report.to_csv())?;
    let pts = |f: fn(&sparse_dve::analysis::SparsifyCheckpoint) -> f64| {
        report.checkpoints.iter().map(|c| (c.iteration as f64, f(c))).collect()
    };
    let chart = Chart {
        title: "assignment sparsity under the confusion-contribution loss".into(),
        x_label: "iteration".into(),
        y_label: "value".into(),
        series: vec![Series::line("median max alpha", pts(|c| c.median_max_alpha)), Series::line("mean delta", pts(|c| c.mean_delta))],
    };
    write_chart(&a.out, "sparsify.svg", &chart)?;
    RunManifest::start("analyze sparsify", arguments).finish(&a.out)?;
    println!(
        "median max alpha {:.4} -> {:.4}, mean delta {:.4} -> {:.4}",
        report.first().median_max_alpha,
        report.last().median_max_alpha,
        report.first().mean_delta,
        report.last().mean_delta
    );
    Ok(())
}

fn analyze_partition(a: &PartitionArgs, arguments: Vec<String>) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let cfg = ckpt.config()?;
    let levels = a.levels.resolve(&cfg);
    let seed = a.seed.unwrap_or(cfg.seed);
    let partition = partition_checkpoint(&ckpt, &levels, a.samples, seed)?;
    if !partition.is_partition_of(a.samples) {
        return Err(CliError::Runtime("cluster sets do not partition the sampled states".into()));
    }
    let test = partition.label_association()?;
    let confident = partition.confident_share(0.9);
    create_dir(&a.out)?;
    write(&a.out.join("clusters.csv"), &partition.summary_csv())?;
    write(&a.out.join("contingency.csv"), &partition.contingency_csv())?;
    write(
        &a.out.join("association.csv"),
        &format!(
            "states,clusters,confident_share,chi_square,dof,p_value\n{},{},{:.6},{:.6},{},{:.6e}\n",
            partition.total(),
            partition.n_clusters,
            confident,
            test.statistic,
            test.dof,
            test.p_value
        ),
    )?;
    write(&a.out.join("partition.jsonl"), &partition.dump_jsonl())?;
    let table = partition.contingency();
    let series = table
        .iter()
        .enumerate()
        .map(|(i, row)| Series::line(format!("cluster {i}"), row.iter().enumerate().map(|(l, &c)| (l as f64, c as f64)).collect()))
        .collect();
    let chart = Chart { title: "obstacle labels per cluster".into(), x_label: "label".into(), y_label: "states".into(), series };
    write_chart(&a.out, "partition.svg", &chart)?;
    RunManifest::start("analyze partition", arguments).with_config(ckpt.config_text.clone(), seed).finish(&a.out)?;
    println!(
        "{} states, {:.1}% with max alpha >= 0.9, chi-square {:.3} (dof {}), p = {:.3e}",
        partition.total(),
        100.0 * confident,
        test.statistic,
        test.dof,
        test.p_value
    );
    Ok(())
}

fn analyze_efficiency(a: &EfficiencyArgs, arguments: Vec<String>) -> Result<(), CliError> {
    let mut loaded = Vec::with_capacity(a.agents.len());
    for arg in &a.agents {
        let (label, path) =
            arg.split_once('=').ok_or_else(|| CliError::Input(format!("expected LABEL=CHECKPOINT, got '{arg}'")))?;
        let ckpt = load_checkpoint(Path::new(path))?;
        let cfg = ckpt.config()?;
        let net = ckpt.network()?;
        loaded.push((label.to_string(), cfg, net));
    }
    let entries: Vec<EfficiencyEntry> = loaded
        .iter()
        .map(|(label, cfg, net)| EfficiencyEntry { label: label.clone(), net, kind: cfg.env.clone(), levels: a.levels.resolve(cfg) })
        .collect();
    let episodes = a.episodes.unwrap_or_else(|| loaded.first().map_or(0, |l| l.1.eval_episodes));
    let report = efficiency_report(&entries, episodes, a.seed)?;
    create_dir(&a.out)?;
    write(&a.out.join("efficiency.csv"), &report.table_csv())?;
    write(&a.out.join("paired.csv"), &report.paired_csv())?;
    let series = report
        .labels
        .iter()
        .zip(&report.episodes)
        .map(|(l, eps)| Series::line(l.clone(), eps.iter().map(|e| (e.episode as f64, e.length as f64)).collect()))
        .collect();
    let chart = Chart { title: "episode length per evaluation episode".into(), x_label: "episode".into(), y_label: "length".into(), series };
    write_chart(&a.out, "efficiency.svg", &chart)?;
    RunManifest::start("analyze efficiency", arguments).finish(&a.out)?;
    for (l, s) in report.labels.iter().zip(&report.summaries) {
        println!("{l}: reward {:.3}, episode length {:.2}, revisits {:.2}", s.mean_reward, s.mean_episode_length, s.mean_revisits);
    }
    Ok(())
}

pub fn cmd_plot(a: &PlotArgs, arguments: Vec<String>) -> Result<(), CliError> {
    let mut tables = Vec::with_capacity(a.csvs.len());
    for arg in &a.csvs {
        let (name, path) = match arg.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(arg);
                let name = p.parent().filter(|d| !d.as_os_str().is_empty()).map(run_name).unwrap_or_else(|| run_name(&p));
                (name, p)
            }
        };
        let table = Table::parse(&read(&path)?, &path.display().to_string())?;
        tables.push((name, table));
    }
    let charts = charts_for_columns(&tables, &a.columns, &a.x)?;
    create_dir(&a.out)?;
    for (col, chart) in a.columns.iter().zip(&charts) {
        write_chart(&a.out, &format!("{col}.svg"), chart)?;
    }
    RunManifest::start("plot", arguments).finish(&a.out)?;
    Ok(())
}
