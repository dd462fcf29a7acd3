use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trust_clusters::data::{events_to_csv, filter_analyzable, participants_to_csv, Catalog};
use trust_clusters::evaluation::{Criterion, EvalOptions, EvalReport, ModelFamilies};
use trust_clusters::features::feature_matrix;
use trust_clusters::models::SsFitOptions;
use trust_clusters::pipeline::{
    cluster_dataset, create_dir, fit_models, load_dataset, run_pipeline, write_atomic,
    PipelineOptions, EVENTS_FILE, PARTICIPANTS_FILE,
};
use trust_clusters::synth::{generate_population, PopulationSpec};
use trust_clusters::Error;

/// Trust-dynamics clustering of drivers and customized trust / take-over
/// models.
#[derive(Parser)]
#[command(name = "trust-clusters", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population (participants.csv, events.csv).
    Generate(GenerateArgs),
    /// Validate a dataset directory and summarize it.
    Ingest(DataArgs),
    /// Write the trust-dynamics feature table of analyzable participants.
    Features(FeaturesArgs),
    /// Cluster participants and write assignments and diagnostics.
    Cluster(ClusterArgs),
    /// Fit general and customized models on the whole dataset.
    Fit(FitArgs),
    /// Cross-validate general and customized models.
    Evaluate(EvaluateArgs),
    /// Run the full analysis and write every report.
    #[command(alias = "pipeline")]
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Population spec (TOML); omitted keys take their defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's participant count.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Directory holding participants.csv and events.csv.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    /// Cluster counts tried by silhouette selection: `2..6`, `2-6` or `2,3,4`.
    #[arg(long, default_value = "2..6", value_parser = parse_k_range)]
    k_range: KRange,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ModelArgs {
    /// Comma-separated model families: lr, ss.
    #[arg(long, default_value = "lr,ss")]
    models: ModelFamilies,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drop the constant input of the state equation.
    #[arg(long)]
    no_state_offset: bool,
}

impl ModelArgs {
    fn eval_options(&self, folds: usize) -> EvalOptions {
        EvalOptions {
            seed: self.seed,
            folds,
            models: self.models,
            ss: SsFitOptions {
                state_offset: !self.no_state_offset,
            },
            ..EvalOptions::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output model file (TOML).
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated: general, trust-dynamics, age, gender, driving-style.
    #[arg(long, value_delimiter = ',', default_value = "general,trust-dynamics")]
    criteria: Vec<Criterion>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated: trust-dynamics, age, gender, driving-style. The
    /// general model is always evaluated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "trust-dynamics,age,gender,driving-style"
    )]
    criteria: Vec<Criterion>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    eval: EvaluateArgs,
    #[arg(long, default_value = "2..6", value_parser = parse_k_range)]
    k_range: KRange,
}

#[derive(Clone)]
struct KRange(Vec<usize>);

fn parse_k_range(s: &str) -> Result<KRange, String> {
    let bad = || format!("invalid k range `{s}`: expected e.g. 2..6, 2-6 or 2,3,4");
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..").or_else(|| s.split_once('-')) {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|k| k.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if ks.is_empty() || ks.iter().any(|&k| k < 2) {
        return Err(format!("invalid k range `{s}`: need values >= 2"));
    }
    Ok(KRange(ks))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_atomic(path, contents.as_bytes())?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<(), Error> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            PopulationSpec::from_toml_str(&text)?
        }
        None => PopulationSpec::default(),
    };
    spec.seed = args.seed;
    if let Some(n) = args.n {
        spec.n_participants = n;
    }
    let d = generate_population(&spec)?;
    write_file(&args.out.join(PARTICIPANTS_FILE), &participants_to_csv(&d))?;
    write_file(&args.out.join(EVENTS_FILE), &events_to_csv(&d))?;
    println!(
        "generated {} participants, {} events in {}",
        d.len(),
        d.participants.iter().map(|p| p.events.len()).sum::<usize>(),
        args.out.display()
    );
    Ok(())
}

fn ingest(args: &DataArgs) -> Result<(), Error> {
    let d = load_dataset(&args.data, &Catalog::builtin())?;
    let mut by_drive = BTreeMap::new();
    for p in &d.participants {
        *by_drive.entry(p.drive_type).or_insert(0usize) += 1;
    }
    let analyzable: usize = by_drive
        .iter()
        .filter(|(drive, _)| drive.is_analyzable())
        .map(|(_, n)| n)
        .sum();
    println!("{} participants, {analyzable} on analyzable drives", d.len());
    for (drive, n) in by_drive {
        println!("  drive {drive}: {n}");
    }
    Ok(())
}

fn features(args: &FeaturesArgs) -> Result<(), Error> {
    let cat = Catalog::builtin();
    let d = filter_analyzable(&load_dataset(&args.data.data, &cat)?)?;
    let f = feature_matrix(&d, &cat)?;
    write_file(&args.out, &f.to_csv())?;
    println!("{} feature rows written to {}", f.nrows(), args.out.display());
    Ok(())
}

fn cluster(args: &ClusterArgs) -> Result<(), Error> {
    let cat = Catalog::builtin();
    let d = filter_analyzable(&load_dataset(&args.data.data, &cat)?)?;
    let c = cluster_dataset(&d, &cat, &args.k_range.0, args.seed)?;
    write_file(&args.out.join("clusters.csv"), &c.assignments_csv(&d))?;
    write_file(&args.out.join("clustering.json"), &c.diagnostics.to_json())?;
    print!("{}", c.diagnostics.summary());
    Ok(())
}

fn fit(args: &FitArgs) -> Result<(), Error> {
    let cat = Catalog::builtin();
    let d = filter_analyzable(&load_dataset(&args.data.data, &cat)?)?;
    let set = fit_models(&d, &cat, &args.criteria, &args.model.eval_options(5))?;
    write_file(&args.out, &set.to_toml_string())?;
    for (name, g) in &set.groups {
        println!("{name}: {} participants", g.n_participants);
    }
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<(), Error> {
    let cat = Catalog::builtin();
    let d = filter_analyzable(&load_dataset(&args.data.data, &cat)?)?;
    let r = EvalReport::build(&d, &cat, &args.criteria, &args.model.eval_options(args.folds))?;
    write_file(&args.out.join("report.txt"), &r.to_text())?;
    write_file(&args.out.join("report.json"), &r.to_json())?;
    print!("{}", r.to_text());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), Error> {
    let opts = PipelineOptions {
        eval: args.eval.model.eval_options(args.eval.folds),
        criteria: args.eval.criteria.clone(),
        k_range: args.k_range.0.clone(),
    };
    let out = run_pipeline(&args.eval.data.data, &args.eval.out, &Catalog::builtin(), &opts)?;
    print!("{}", out.summary());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Ingest(a) => ingest(a),
        Command::Features(a) => features(a),
        Command::Cluster(a) => cluster(a),
        Command::Fit(a) => fit(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
