use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fairrank::audit::{
    accuracy, group_stats, unfairness_of_labels, unfairness_of_ranking, AuditBasis, AuditReport,
};
use fairrank::dataset::{load_csv, write_csv, Schema};
use fairrank::harness::{
    emit_figure_data, read_manifest, read_rows, run_alpha_sweep, run_case_study, run_zeta_sweep, write_run, ExperimentConfig, Figure,
    RunOutput,
};
use fairrank::northstar::{fit, FitConfig, RankModel};
use fairrank::synthgen::{label_running_example, label_zeta_with_noise, sample_cohort, CohortSpec};
use fairrank::{Dataset, Error};

/// Fair ranking-based classification and meritocratic-fairness audits.
#[derive(Parser)]
#[command(name = "fairrank", version)]
struct Cli {
    /// Root directory for sweep outputs; overrides `output_dir` in configs.
    #[arg(long, global = true, env = "FAIRRANK_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a synthetic applicant cohort.
    Generate(GenerateArgs),
    /// Fit a model on labelled data and write it as JSON.
    Fit(FitArgs),
    /// Rank a dataset with a fitted model.
    Rank(RankArgs),
    /// Classify new observations against the fitted threshold.
    Predict(DataArgs),
    /// Audit labels or a model's ranking for meritocratic unfairness.
    Audit(AuditArgs),
    /// Run the capacity sweep.
    SweepAlpha(SweepArgs),
    /// Run the synthetic discrimination sweep.
    SweepZeta(SweepArgs),
    /// Run the single-capacity case study.
    CaseStudy(SweepArgs),
    /// Write per-figure series from a finished run directory.
    EmitFigures(FigureArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelKind {
    None,
    RunningExample,
    Zeta,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "running-example")]
    labels: LabelKind,
    #[arg(long, default_value_t = 0.0)]
    zeta: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_sd: f64,
    /// CSV to write; the matching schema goes next to it as `<stem>.schema.toml`.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Write here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Capacity share in [0, 1]; defaults to the positive share of the labels.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Experiment config whose `[fit]` section to use.
    #[arg(long, conflicts_with = "fast")]
    config: Option<PathBuf>,
    /// Smaller forests; for quick looks.
    #[arg(long)]
    fast: bool,
    #[arg(long)]
    model: PathBuf,
    /// Also write the training ranking.
    #[arg(long)]
    ranking: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    io: DataArgs,
    /// Cut the ranking at this share instead of using the model's threshold.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Basis {
    /// The label column of the data.
    Labels,
    /// The model's ranking of the data, cut at `--alpha`.
    Model,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    io: DataArgs,
    #[arg(long, value_enum, default_value = "labels")]
    basis: Basis,
    #[arg(long)]
    alpha: Option<f64>,
    /// Admission ratio groups as `attribute:disadvantaged:reference`.
    #[arg(long)]
    group: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config (TOML); synthetic defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args)]
struct FigureArgs {
    /// Run directory containing `results.csv` and `manifest.json`.
    #[arg(long)]
    run: PathBuf,
    /// Figure numbers (1-4); defaults to every figure the run has data for.
    #[arg(long, value_delimiter = ',')]
    figure: Option<Vec<u8>>,
}

fn write_output(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn load_data(data: &Path, schema: &Path) -> Result<Dataset> {
    let schema = Schema::from_file(schema)?;
    Ok(load_csv(data, &schema)?)
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let cohort = sample_cohort(&CohortSpec {
        n: a.n,
        seed: a.seed,
        ..CohortSpec::default()
    })?;
    let label_seed = a.seed ^ 0x5eed;
    let data = match a.labels {
        LabelKind::None => cohort,
        LabelKind::RunningExample => label_running_example(&cohort, label_seed)?,
        LabelKind::Zeta => label_zeta_with_noise(&cohort, a.zeta, a.noise_sd, label_seed)?,
    };
    write_csv(&data, &a.output)?;
    let schema_path = a.output.with_extension("schema.toml");
    std::fs::write(&schema_path, Schema::for_dataset(&data).to_toml_string())
        .with_context(|| format!("writing {}", schema_path.display()))?;
    eprintln!("wrote {} rows to {}", data.len(), a.output.display());
    Ok(())
}

fn fit_cmd(a: &FitArgs) -> Result<()> {
    let data = load_data(&a.data, &a.schema)?;
    let config = match (&a.config, a.fast) {
        (Some(p), _) => ExperimentConfig::from_file(p)?.fit,
        (None, true) => FitConfig::fast(),
        (None, false) => FitConfig::default(),
    };
    let (model, ranked) = fit(&data, a.alpha, &config, a.seed)?;
    model.save(&a.model)?;
    if let Some(p) = &a.ranking {
        ranked.write_csv(p)?;
    }
    let w = &model.weights;
    eprintln!("nu = {}, delta = {:.6}", model.nu, model.delta);
    for (j, name) in model.feature_names().iter().enumerate() {
        eprintln!(
            "  {name}: omega {:.4}, rho {:.4}, psi {:.4}",
            w.importance.weights[j], w.penalties.penalties[j], w.psi[j]
        );
    }
    Ok(())
}

fn rank_cmd(a: &RankArgs) -> Result<()> {
    let model = RankModel::load(&a.io.model)?;
    let data = load_data(&a.io.data, &a.io.schema)?;
    let ranked = model.rank(&data, a.alpha)?;
    write_output(a.io.output.as_deref(), &ranked.to_csv())
}

fn predict_cmd(a: &DataArgs) -> Result<()> {
    let model = RankModel::load(&a.model)?;
    let data = load_data(&a.data, &a.schema)?;
    let mut out = String::from("id,distance,outcome\n");
    for p in model.predict(&data)? {
        let _ = writeln!(out, "{},{},{}", p.id, p.distance, p.outcome.symbol());
    }
    write_output(a.output.as_deref(), &out)
}

fn audit_cmd(a: &AuditArgs) -> Result<()> {
    let model = RankModel::load(&a.io.model)?;
    let data = load_data(&a.io.data, &a.io.schema)?;
    let psi = model.psi();
    let mut reports = Vec::new();
    let outcomes = match a.basis {
        Basis::Labels => {
            let labels = data.training_labels()?.to_vec();
            let z = model.weights.scale(&data)?;
            reports.push(AuditReport::new(AuditBasis::LabelBased, None, unfairness_of_labels(&labels, &z, psi)?));
            labels
        }
        Basis::Model => {
            let ranked = model.rank(&data, a.alpha)?;
            let outcomes = ranked.outcomes().expect("rank assigns outcomes");
            let z = ranked.scaled();
            let alpha = Some(a.alpha.unwrap_or(model.alpha));
            let mut by_rank = AuditReport::new(AuditBasis::RankingBased, alpha, unfairness_of_ranking(&ranked, psi)?);
            let mut by_label =
                AuditReport::new(AuditBasis::LabelBased, alpha, unfairness_of_labels(&outcomes, &z, psi)?);
            if let Some(truth) = data.labels() {
                let acc = accuracy(&outcomes, truth)?;
                by_rank.accuracy = Some(acc);
                by_label.accuracy = Some(acc);
            }
            reports.push(by_rank);
            reports.push(by_label);
            outcomes
        }
    };
    if let Some(g) = &a.group {
        let parts: Vec<&str> = g.split(':').collect();
        let [attr, dis, reference] = parts[..] else {
            bail!(Error::Invalid(format!("--group {g:?}: expected attribute:disadvantaged:reference")));
        };
        let feature = data
            .protected_by_name(attr)
            .ok_or_else(|| Error::Invalid(format!("no protected attribute {attr:?}")))?;
        let stats = group_stats(&outcomes, feature, dis, reference)?;
        for r in &mut reports {
            r.groups = Some(stats.clone());
        }
    }
    let mut out = format!("{}\n", AuditReport::CSV_HEADER);
    for r in &reports {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    write_output(a.io.output.as_deref(), &out)
}

fn sweep(root: Option<&Path>, a: &SweepArgs, experiment: &str, run: fn(&ExperimentConfig) -> fairrank::Result<RunOutput>) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::synthetic(),
    };
    if let Some(seeds) = &a.seeds {
        config.seeds = seeds.clone();
        config.validate()?;
    }
    let dir = root.map_or_else(|| config.output_dir.clone(), Path::to_path_buf).join(experiment);
    let out = run(&config)?;
    let manifest = write_run(&dir, experiment, &config, &out)?;
    eprintln!("{} rows, config {}, written to {}", out.rows.len(), manifest.config_sha256, dir.display());
    Ok(())
}

fn emit_figures(a: &FigureArgs) -> Result<()> {
    let manifest = read_manifest(&a.run)?;
    let rows = read_rows(a.run.join("results.csv"))?;
    let numbers = match &a.figure {
        Some(v) => v.clone(),
        None if manifest.experiment == "alpha-sweep" => vec![1],
        None if manifest.experiment == "zeta-sweep" => vec![2, 3, 4],
        None => bail!(Error::Invalid(format!("no figures for a {} run", manifest.experiment))),
    };
    // series the run never produced (e.g. test labels in an α sweep) are left out
    let methods: Vec<_> = manifest
        .config
        .methods
        .iter()
        .copied()
        .filter(|m| rows.iter().any(|r| r.method == *m))
        .collect();
    for n in numbers {
        let figure = Figure::from_number(n).ok_or_else(|| Error::Invalid(format!("no figure {n}; expected 1-4")))?;
        let body = emit_figure_data(&rows, figure, &methods, &figure.grid(&manifest.config))?;
        let path = a.run.join(format!("figure{n}.csv"));
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let root = cli.out.as_deref();
    match &cli.cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Fit(a) => fit_cmd(a),
        Cmd::Rank(a) => rank_cmd(a),
        Cmd::Predict(a) => predict_cmd(a),
        Cmd::Audit(a) => audit_cmd(a),
        Cmd::SweepAlpha(a) => sweep(root, a, "alpha-sweep", run_alpha_sweep),
        Cmd::SweepZeta(a) => sweep(root, a, "zeta-sweep", run_zeta_sweep),
        Cmd::CaseStudy(a) => sweep(root, a, "case-study", run_case_study),
        Cmd::EmitFigures(a) => emit_figures(a),
    }
}

/// 1 for bad input (arguments, files, configs), 2 for anything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return if err.is_user_error() { 1 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
