use std::fs;
use std::path::{Path, PathBuf};

use activeeval_core::embedding::{embed_manifest, EmbeddingClient, ManifestEntry};
use activeeval_core::engine::{read_metrics_csv, replay as run_replay, write_metrics_csv, Budget};
use activeeval_core::io::{read_json, write_json};
use activeeval_core::report::{aggregate, curves_csv, Run};
use activeeval_core::synthetic::{generate, SyntheticConfig};
use activeeval_core::{CampaignConfig, DatasetSpec, Error as CoreError, MetricsRow, OutcomeKind, Representation, RuleStyle, Strategy};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{Cli, CostStyleArg, EmbedArgs, ReplayArgs, ReportArgs, ServeArgs, SynthArgs};
use crate::error::{CliError, CliResult, InputContext, RunContext};

/// Defaults, then the `--config` file, then `--seed`.
pub fn load_config(cli: &Cli, representation: Option<&str>) -> CliResult<CampaignConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            if !path.is_file() {
                return Err(CliError::config(format!("config file {} not found", path.display())));
            }
            read_json::<CampaignConfig>(path).input()?
        }
        None => CampaignConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(r) = representation {
        config.embedding.representation = r.parse::<Representation>().input()?;
    }
    config.validate().input()?;
    Ok(config)
}

pub fn client(endpoint: Option<&str>, cache_dir: Option<&Path>) -> Option<EmbeddingClient> {
    endpoint.filter(|e| !e.is_empty()).map(|e| {
        let c = EmbeddingClient::new(e);
        match cache_dir {
            Some(dir) => c.with_cache(dir),
            None => c,
        }
    })
}

/// Reads a spec, naming the path when it is missing.
pub fn load_spec(path: &Path) -> CliResult<DatasetSpec> {
    if !path.is_file() {
        return Err(CliError::config(format!("spec file {} not found", path.display())));
    }
    DatasetSpec::load(path).input()
}

fn create_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))
}

#[derive(Debug, Serialize)]
struct RunSummary {
    strategy: String,
    seed: u64,
    file: String,
    steps: u64,
    trials: usize,
    total_cost: f64,
    final_metrics: MetricsRow,
}

pub fn replay(cli: &Cli, args: &ReplayArgs) -> CliResult<()> {
    // Everything is validated before the first file is written.
    let spec = load_spec(&args.spec)?;
    if spec.ground_truth.is_none() {
        return Err(CliError::config(format!("{}: replay needs ground_truth", args.spec.display())));
    }
    let base = load_config(cli, args.representation.as_deref())?;
    let strategies = args
        .strategies
        .iter()
        .map(|s| s.parse::<Strategy>())
        .collect::<Result<Vec<_>, _>>()
        .input()?;
    let seeds = if args.seeds.is_empty() { vec![base.seed] } else { args.seeds.clone() };
    let budget = match (args.steps, args.trials, args.cost) {
        (Some(n), _, _) => Budget::Steps(n),
        (_, Some(n), _) => Budget::Trials(n),
        (_, _, Some(c)) if c.is_finite() && c >= 0.0 => Budget::Cost(c),
        (_, _, Some(c)) => return Err(CliError::config(format!("--cost {c} must be finite and non-negative"))),
        _ => Budget::Trials(1500),
    };
    let client = client(args.embedding_endpoint.as_deref(), None);
    create_out_dir(&cli.out_dir)?;

    let jobs: Vec<(Strategy, u64)> = strategies.iter().flat_map(|&s| seeds.iter().map(move |&k| (s, k))).collect();
    let summaries = jobs
        .par_iter()
        .map(|&(strategy, seed)| {
            let mut config = base.clone();
            config.seed = seed;
            config.acquisition.strategy = strategy;
            let resolved = spec.resolve(&config, client.as_ref()).map_err(classify)?;
            let config = resolved.campaign_config(&config);
            let ground_truth = resolved.ground_truth.as_ref().expect("checked above");
            let reference = resolved.reference.as_ref().expect("ground truth implies a reference");
            let out = run_replay(
                resolved.policies.clone(),
                resolved.tasks.clone(),
                resolved.outcome_kind,
                ground_truth,
                reference,
                &config,
                budget,
            )
            .map_err(classify)?;
            let file = format!("{}_seed{seed}.csv", strategy.name());
            write_metrics_csv(&out.rows, &cli.out_dir.join(&file)).run()?;
            let last = *out.rows.last().expect("replay emits the warm-start row");
            info!("{strategy} seed {seed}: {} steps, cost {:.1}", out.state.step(), out.state.total_cost());
            Ok(RunSummary {
                strategy: strategy.name().to_owned(),
                seed,
                file,
                steps: out.state.step(),
                trials: out.state.dataset().len(),
                total_cost: out.state.total_cost(),
                final_metrics: last,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_json(&cli.out_dir.join("summary.json"), &summaries).run()?;
    for s in &summaries {
        println!(
            "{} seed {}: {} steps, {} trials, cost {:.2}, avg log-lik {:.4}, l1 {:.4} -> {}",
            s.strategy,
            s.seed,
            s.steps,
            s.trials,
            s.total_cost,
            s.final_metrics.avg_log_likelihood,
            s.final_metrics.l1_mean_error,
            s.file
        );
    }
    Ok(())
}

/// Bad inputs and an unreachable embedding service are configuration errors.
fn classify(e: CoreError) -> CliError {
    match e {
        CoreError::InvalidConfig(_)
        | CoreError::ServiceUnavailable { .. }
        | CoreError::MalformedResponse(_)
        | CoreError::DimensionMismatch { .. }
        | CoreError::InsufficientData { .. }
        | CoreError::EmptyDescription => CliError::config(e),
        other => CliError::runtime(other),
    }
}

pub fn embed(cli: &Cli, args: &EmbedArgs) -> CliResult<()> {
    if !args.manifest.is_file() {
        return Err(CliError::config(format!("manifest {} not found", args.manifest.display())));
    }
    let mut entries: Vec<ManifestEntry> = read_json(&args.manifest).input()?;
    let config = load_config(cli, args.representation.as_deref())?.seeded();
    let client = client(args.embedding_endpoint.as_deref(), args.cache_dir.as_deref());
    let pca = embed_manifest(&mut entries, &config.embedding, client.as_ref()).map_err(classify)?;
    create_out_dir(&cli.out_dir)?;
    write_json(&cli.out_dir.join("embedded_manifest.json"), &entries).run()?;
    if let Some(pca) = &pca {
        write_json(&cli.out_dir.join("pca_model.json"), pca).run()?;
    }
    println!("embedded {} tasks -> {}", entries.len(), cli.out_dir.join("embedded_manifest.json").display());
    Ok(())
}

/// `{strategy}_seed{seed}.csv`
fn parse_run_name(path: &Path) -> Option<(String, u64)> {
    let stem = path.file_stem()?.to_str()?;
    let (strategy, seed) = stem.rsplit_once("_seed")?;
    Some((strategy.to_owned(), seed.parse().ok()?))
}

fn collect_csvs(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .input()?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv") && parse_run_name(p).is_some())
                .collect();
            found.sort();
            files.extend(found);
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            return Err(CliError::config(format!("{} not found", input.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::config("no metrics CSVs found"));
    }
    Ok(files)
}

pub fn report(cli: &Cli, args: &ReportArgs) -> CliResult<()> {
    let runs = collect_csvs(&args.inputs)?
        .into_iter()
        .map(|path| {
            let (strategy, seed) = parse_run_name(&path).ok_or_else(|| {
                CliError::config(format!("{}: expected a name like <strategy>_seed<N>.csv", path.display()))
            })?;
            let rows = read_metrics_csv(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            Ok(Run { strategy, seed, rows })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let curves = aggregate(&runs).input()?;
    create_out_dir(&cli.out_dir)?;
    let csv = curves_csv(&curves).run()?;
    fs::write(cli.out_dir.join("report.csv"), csv).run()?;
    write_json(&cli.out_dir.join("plot_data.json"), &curves).run()?;
    for c in &curves {
        if let (Some(cost), Some(mean)) = (c.cost.last(), c.mean.last()) {
            println!("{} {} over {} seeds: {mean:.4} at cost {cost:.2}", c.strategy, c.metric.name(), c.seeds.len());
        }
    }
    Ok(())
}

pub fn serve(_cli: &Cli, args: &ServeArgs) -> CliResult<()> {
    let client = client(args.embedding_endpoint.as_deref(), None);
    let state = activeeval_service::AppState::open(&args.data_dir, client).input()?;
    info!("{} campaigns recovered from {}", state.campaign_ids().len(), args.data_dir.display());
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().run()?;
    rt.block_on(activeeval_service::serve(args.listen, state)).run()
}

pub fn synth(cli: &Cli, args: &SynthArgs) -> CliResult<()> {
    let cfg = SyntheticConfig {
        num_policies: args.policies,
        num_tasks: args.tasks,
        num_clusters: args.clusters,
        outcome_kind: if args.binary { OutcomeKind::Binary } else { OutcomeKind::Continuous },
        raw_dim: args.raw_dim,
        cost_style: match args.costs {
            CostStyleArg::Hamster => RuleStyle::Hamster,
            CostStyleArg::Openvla => RuleStyle::OpenVla,
            CostStyleArg::Metaworld => RuleStyle::MetaWorld,
        },
        seed: cli.seed.unwrap_or(0),
        ..SyntheticConfig::default()
    };
    let spec = generate(&cfg).input()?;
    create_out_dir(&cli.out_dir)?;
    let path = cli.out_dir.join(&args.name);
    write_json(&path, &spec).run()?;
    println!("{} policies x {} tasks -> {}", spec.num_policies(), spec.num_tasks(), path.display());
    Ok(())
}
