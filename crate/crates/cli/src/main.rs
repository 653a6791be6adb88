use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nlpv::dataset::{import_corpus, synth_corpus, Corpus, Format, Label};
use nlpv::embed::{load_embeddings, EmbeddingStore};
use nlpv::geometry::{RotationMode, DEFAULT_SHRINK_DELTA};
use nlpv::metrics::{render_csv, render_markdown};
use nlpv::perturb::{import_perturbations, PerturbationSet};
use nlpv::rng::sub_seed;
use nlpv::train::{Network, PgdConfig, PgdInit, TrainConfig};
use nlpv::verify::{BabConfig, ResultRecord, SplitRule, VerifResult, VerifyMode};
use nlpv_cli::config::{parse_kinds, PipelineConfig, SubspaceConfig, SubspaceKind, TrainMode};
use nlpv_cli::pipeline::{self, ReportInputs, ResultLine};
use nlpv_cli::{export_benchmark, load_bundle, run_config, verify_bundle};

#[derive(Parser)]
#[command(name = "nlpv", version, about = "Verification workbench for NLP classifiers over sentence embeddings")]
struct Cli {
    /// Top-level seed; every random stage derives its stream from it.
    /// Defaults to 0, or to the config's seed for `pipeline run`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or import a labelled corpus.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Rule-based perturbations for every sentence of a corpus.
    Perturb(PerturbArgs),
    /// Produce or validate an embedding file.
    #[command(subcommand)]
    Embed(EmbedCmd),
    /// Drop perturbations whose embedding strays from their origin.
    Filter(FilterArgs),
    #[command(subcommand)]
    Subspace(SubspaceCmd),
    Train(TrainArgs),
    Verify(VerifyArgs),
    Report(ReportArgs),
    #[command(subcommand)]
    Export(ExportCmd),
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Built-in two-intent corpus.
    Gen {
        /// Sentences per class.
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read a CSV or JSONL corpus and write it back as JSONL.
    Import {
        #[arg(long = "in")]
        input: PathBuf,
        /// csv or jsonl; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// `char`, `word`, `all` or a comma list of rule names.
    #[arg(long, default_value = "char")]
    kinds: String,
    /// Perturbations per kind.
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Draw from the held-out stream instead of the training stream.
    #[arg(long)]
    heldout: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EmbedCmd {
    /// Hashed character-trigram embeddings.
    Toy {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        perturbations: Option<PathBuf>,
        /// Held-out perturbations, stored under `<origin>~h<k>` ids.
        #[arg(long)]
        heldout: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate an externally produced embedding file and copy it.
    Import {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    perturbations: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    cosine_threshold: f64,
    /// Treat the perturbations as held-out (`~h` ids).
    #[arg(long)]
    heldout: bool,
    /// Kept perturbations.
    #[arg(long)]
    out: PathBuf,
    /// Per-member cosine log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    EpsCube,
    Hrect,
    Semantic,
}

#[derive(Clone, Copy, ValueEnum)]
enum RotateArg {
    None,
    Centered,
    Uncentered,
}

#[derive(Subcommand)]
enum SubspaceCmd {
    Build(SubspaceArgs),
}

#[derive(Args)]
struct SubspaceArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    perturbations: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "semantic")]
    kind: KindArg,
    #[arg(long, default_value = "pos")]
    class: String,
    #[arg(long, default_value_t = 0.005)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "none")]
    rotate: RotateArg,
    #[arg(long)]
    shrink: bool,
    #[arg(long, default_value_t = DEFAULT_SHRINK_DELTA)]
    shrink_delta: f64,
    /// Cluster the class first; 0 disables.
    #[arg(long, default_value_t = 0)]
    cluster_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainModeArg {
    Base,
    Augment,
    Pgd,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Origin,
    RandomInRect,
}

#[derive(Args)]
struct PgdArgs {
    #[arg(long, default_value_t = 10)]
    pgd_iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    pgd_step_fraction: f64,
    #[arg(long, value_enum, default_value = "origin")]
    pgd_init: InitArg,
    #[arg(long, default_value_t = 1)]
    pgd_restarts: usize,
}

impl PgdArgs {
    fn config(&self) -> PgdConfig {
        PgdConfig {
            iterations: self.pgd_iterations,
            step_fraction: self.pgd_step_fraction,
            init: match self.pgd_init {
                InitArg::Origin => PgdInit::Origin,
                InitArg::RandomInRect => PgdInit::RandomInRect,
            },
            restarts: self.pgd_restarts,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Kept perturbations, used by `augment`.
    #[arg(long)]
    perturbations: Option<PathBuf>,
    /// Subspaces attacked by `pgd`.
    #[arg(long)]
    subspaces: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "base")]
    mode: TrainModeArg,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Hidden widths, comma separated.
    #[arg(long, default_value = "128")]
    hidden: String,
    #[command(flatten)]
    pgd: PgdArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyModeArg {
    Ibp,
    Bab,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, required_unless_present = "bundle")]
    network: Option<PathBuf>,
    #[arg(long, required_unless_present = "bundle")]
    subspaces: Option<PathBuf>,
    /// Verify an exported benchmark bundle with its recorded settings,
    /// unless `--mode` is given.
    #[arg(long, conflicts_with_all = ["network", "subspaces"])]
    bundle: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<VerifyModeArg>,
    #[arg(long, default_value_t = 4096)]
    max_regions: usize,
    /// Wall-clock budget per query; 0 disables it.
    #[arg(long, default_value_t = 10_000)]
    time_budget_ms: u64,
    #[command(flatten)]
    attack: PgdArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    subspaces: PathBuf,
    #[arg(long)]
    results: PathBuf,
    /// Held-out perturbations for generalisability and embedding error.
    #[arg(long)]
    heldout: Option<PathBuf>,
    #[arg(long, default_value = "pos")]
    class: String,
    #[arg(long, default_value = "experiment")]
    name: String,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    markdown: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExportCmd {
    /// Bundle a run's network and subspaces as a benchmark.
    Bench {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Run every stage from a config file.
    Run {
        config: PathBuf,
    },
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    let format = if path.extension().and_then(|e| e.to_str()) == Some("csv") { Format::Csv } else { Format::Jsonl };
    import_corpus(path, format).with_context(|| format!("cannot read corpus {}", path.display()))
}

fn read_store(path: &Path) -> Result<EmbeddingStore<f64>> {
    load_embeddings(path).with_context(|| format!("cannot read embeddings {}", path.display()))
}

fn read_sets(path: Option<&Path>, corpus: &Corpus, heldout: bool) -> Result<Vec<PerturbationSet>> {
    let Some(path) = path else { return Ok(Vec::new()) };
    let mut sets = import_perturbations(path, corpus).with_context(|| format!("cannot read perturbations {}", path.display()))?;
    if heldout {
        pipeline::mark_heldout(&mut sets);
    }
    Ok(sets)
}

fn label(s: &str) -> Result<Label> {
    s.parse().map_err(|_| anyhow::anyhow!("expected pos or neg, got '{s}'"))
}

fn write_results(path: &Path, results: &[VerifResult<f64>]) -> Result<Vec<ResultRecord>> {
    let records: Vec<ResultRecord> = results.iter().map(VerifResult::to_record).collect();
    pipeline::write_jsonl(
        path,
        records.iter().enumerate().map(|(i, r)| ResultLine {
            subspace: i,
            record: r.clone(),
        }),
    )?;
    Ok(records)
}

fn summarize(records: &[ResultRecord]) {
    let verified = records.iter().filter(|r| r.status == nlpv::verify::Outcome::Verified).count();
    println!("verified {verified} of {} subspaces", records.len());
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Dataset(DatasetCmd::Gen { n, out }) => {
            let corpus = synth_corpus(n, seed);
            corpus.export(&out, Format::Jsonl)?;
            println!("{} sentences", corpus.len());
        }
        Command::Dataset(DatasetCmd::Import { input, format, out }) => {
            let corpus = match format {
                Some(f) => import_corpus(&input, f.parse().map_err(anyhow::Error::msg)?)?,
                None => read_corpus(&input)?,
            };
            corpus.export(&out, Format::Jsonl)?;
            println!("{} sentences", corpus.len());
        }
        Command::Perturb(a) => {
            let corpus = read_corpus(&a.corpus)?;
            let kinds = parse_kinds(&a.kinds).map_err(anyhow::Error::msg)?;
            let stream = if a.heldout { "heldout" } else { "perturb" };
            let sets = pipeline::perturb_corpus(&corpus, &kinds, a.n, sub_seed(seed, stream, 0));
            pipeline::write_perturbation_file(&a.out, &sets)?;
            println!("{} perturbations", sets.iter().map(PerturbationSet::len).sum::<usize>());
        }
        Command::Embed(EmbedCmd::Toy {
            corpus,
            perturbations,
            heldout,
            dim,
            out,
        }) => {
            let corpus = read_corpus(&corpus)?;
            let sets = read_sets(perturbations.as_deref(), &corpus, false)?;
            let held = read_sets(heldout.as_deref(), &corpus, true)?;
            let store = pipeline::toy_store(&corpus, &[&sets, &held], dim, sub_seed(seed, "embed", 0))?;
            pipeline::write_store(&out, &store)?;
        }
        Command::Embed(EmbedCmd::Import { input, out }) => {
            let store = read_store(&input)?;
            pipeline::write_store(&out, &store)?;
            println!("{} records of dimension {}", store.len(), store.dim());
        }
        Command::Filter(a) => {
            let corpus = read_corpus(&a.corpus)?;
            let store = read_store(&a.embeddings)?;
            let sets = read_sets(Some(&a.perturbations), &corpus, a.heldout)?;
            let (kept, log) = pipeline::filter_sets(&sets, &store, a.cosine_threshold)?;
            pipeline::write_perturbation_file(&a.out, &kept)?;
            if let Some(p) = a.log {
                pipeline::write_jsonl(&p, &log)?;
            }
            println!("kept {} of {}", log.iter().filter(|r| r.kept).count(), log.len());
        }
        Command::Subspace(SubspaceCmd::Build(a)) => {
            let corpus = read_corpus(&a.corpus)?;
            let store = read_store(&a.embeddings)?;
            let sets = read_sets(a.perturbations.as_deref(), &corpus, false)?;
            let cfg = SubspaceConfig {
                kind: match a.kind {
                    KindArg::EpsCube => SubspaceKind::EpsCube,
                    KindArg::Hrect => SubspaceKind::Hrect,
                    KindArg::Semantic => SubspaceKind::Semantic,
                },
                class: label(&a.class)?,
                epsilon: a.epsilon,
                rotate: match a.rotate {
                    RotateArg::None => RotationMode::None,
                    RotateArg::Centered => RotationMode::Centered,
                    RotateArg::Uncentered => RotationMode::Uncentered,
                },
                shrink: a.shrink,
                shrink_delta: a.shrink_delta,
                cluster_k: a.cluster_k,
            };
            let subs = pipeline::build_subspaces(&cfg, &corpus, &sets, &store, seed)?;
            pipeline::write_subspaces(&a.out, &subs)?;
            println!("{} subspaces", subs.len());
        }
        Command::Train(a) => {
            let corpus = read_corpus(&a.corpus)?;
            let store = read_store(&a.embeddings)?;
            let sets = read_sets(a.perturbations.as_deref(), &corpus, false)?;
            let subs = match &a.subspaces {
                Some(p) => pipeline::read_subspaces(p)?,
                None => Vec::new(),
            };
            let hidden = a
                .hidden
                .split(',')
                .map(|s| s.trim().parse::<usize>().context("invalid --hidden"))
                .collect::<Result<Vec<_>>>()?;
            let train_cfg = TrainConfig {
                learning_rate: a.learning_rate,
                epochs: a.epochs,
                batch_size: a.batch_size,
                seed: sub_seed(seed, "init", 0),
                hidden,
            };
            let mode = match a.mode {
                TrainModeArg::Base => TrainMode::Base,
                TrainModeArg::Augment => TrainMode::Augment,
                TrainModeArg::Pgd => TrainMode::Pgd,
            };
            let net = pipeline::train_network(mode, &train_cfg, &a.pgd.config(), &corpus, &sets, &store, &subs)?;
            fs::write(&a.out, net.to_json())?;
        }
        Command::Verify(a) => {
            let mode = a.mode.map(|m| match m {
                VerifyModeArg::Ibp => VerifyMode::Ibp,
                VerifyModeArg::Bab => VerifyMode::Bab(BabConfig {
                    max_regions: a.max_regions,
                    attack: a.attack.config(),
                    split_rule: SplitRule::WidestDim,
                    time_budget: (a.time_budget_ms > 0).then(|| Duration::from_millis(a.time_budget_ms)),
                    seed: sub_seed(seed, "bab", 0),
                }),
            });
            let results = if let Some(dir) = &a.bundle {
                verify_bundle(&load_bundle(dir)?, mode.as_ref())?
            } else {
                let net_path = a.network.as_ref().expect("required by clap");
                let net = Network::from_json(&fs::read_to_string(net_path)?)?;
                let subs = pipeline::read_subspaces(a.subspaces.as_ref().expect("required by clap"))?;
                pipeline::verify_subspaces(&net, &subs, &mode.unwrap_or_default())?
            };
            summarize(&write_results(&a.out, &results)?);
        }
        Command::Report(a) => {
            let corpus = read_corpus(&a.corpus)?;
            let store = read_store(&a.embeddings)?;
            let net = Network::from_json(&fs::read_to_string(&a.network)?)?;
            let subs = pipeline::read_subspaces(&a.subspaces)?;
            let lines: Vec<ResultLine> = pipeline::read_jsonl(&a.results)?;
            let results: Vec<ResultRecord> = lines.into_iter().map(|l| l.record).collect();
            let heldout = read_sets(a.heldout.as_deref(), &corpus, true)?;
            let report = pipeline::build_report(&ReportInputs {
                experiment: &a.name,
                corpus: &corpus,
                heldout: &heldout,
                store: &store,
                subs: &subs,
                class: label(&a.class)?,
                net: &net,
                results: &results,
            })?;
            let md = render_markdown(std::slice::from_ref(&report));
            if let Some(p) = a.csv {
                fs::write(p, render_csv(std::slice::from_ref(&report)))?;
            }
            if let Some(p) = a.json {
                fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            match a.markdown {
                Some(p) => fs::write(p, md)?,
                None => print!("{md}"),
            }
        }
        Command::Export(ExportCmd::Bench { run, out }) => {
            let m = export_benchmark(&run, &out)?;
            println!("exported {} queries to {}", m.queries, out.display());
        }
        Command::Pipeline(PipelineCmd::Run { config }) => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = run_config(&cfg)?;
            print!("{}", render_markdown(std::slice::from_ref(&out.report)));
            println!("run directory: {}", out.dir.display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
