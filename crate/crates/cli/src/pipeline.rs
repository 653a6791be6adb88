//! Pipeline stages and the end-to-end runner.
//!
//! Randomness comes from the top-level seed through named sub-streams:
//! `perturb`, `heldout`, `embed`, `kmeans`, `init` and `bab`.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use nlpv::dataset::{import_corpus, synth_corpus, Corpus, Format, Label, Split};
use nlpv::embed::{cosine, load_embeddings, toy_embed, EmbeddingMatrix, EmbeddingRecord, EmbeddingStore};
use nlpv::geometry::{
    eps_cube, hrect_of, kmeans, semantic_subspaces, shrink, SemanticOptions, Subspace, SubspaceMeta,
};
use nlpv::metrics::{
    embedding_error, false_positive_rate, generalisability, precision_recall_f1, render_csv, render_markdown,
    verifiability, MetricsReport, VolumeSummary,
};
use nlpv::perturb::{import_perturbations, perturb_set, write_perturbations, PerturbationKind, PerturbationSet};
use nlpv::rng::sub_seed;
use nlpv::train::{augment_train, pgd_train, sgd_train, Example, Network, PgdConfig, TrainConfig};
use nlpv::verify::{verify_suite, ResultRecord, VerifQuery, VerifResult, VerifyMode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{CorpusSource, EmbeddingSource, PipelineConfig, SubspaceConfig, SubspaceKind, TrainMode, VerifyKind};

/// A failed stage, with its name and cause.
#[derive(Debug, Error)]
#[error("{stage} stage failed: {source:#}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: anyhow::Error,
}

fn stage<T>(name: &'static str, r: anyhow::Result<T>) -> Result<T, StageError> {
    r.map_err(|source| StageError { stage: name, source })
}

/// Suffix marking held-out perturbation ids: `<origin>~h<k>`.
pub const HELDOUT_MARK: &str = "~h";

pub fn load_corpus(source: &CorpusSource, seed: u64) -> anyhow::Result<Corpus> {
    Ok(match source {
        CorpusSource::Synth { n_per_class } => synth_corpus(*n_per_class, seed),
        CorpusSource::File { path, format } => import_corpus(path, *format)?,
    })
}

/// Rule-based perturbations: `n_per_kind` per kind for every sentence,
/// each sentence on its own sub-seed.
pub fn perturb_corpus(corpus: &Corpus, kinds: &[PerturbationKind], n_per_kind: usize, seed: u64) -> Vec<PerturbationSet> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, s)| perturb_set(s, kinds, n_per_kind * kinds.len(), sub_seed(seed, "sentence", i as u64)))
        .collect()
}

/// Renames members to `<origin>~h<k>` so held-out vectors can share a
/// store with the training perturbations.
pub fn mark_heldout(sets: &mut [PerturbationSet]) {
    for set in sets {
        for (k, m) in set.members.iter_mut().enumerate() {
            m.id = format!("{}{HELDOUT_MARK}{k}", m.origin_id);
        }
    }
}

/// Toy embeddings for every sentence followed by every perturbation.
pub fn toy_store(corpus: &Corpus, sets: &[&[PerturbationSet]], dim: usize, seed: u64) -> anyhow::Result<EmbeddingStore<f64>> {
    let mut store = EmbeddingStore::from_records(Vec::new())?;
    for s in corpus.iter() {
        store.push(EmbeddingRecord {
            id: s.id.clone(),
            origin_id: None,
            label: s.label,
            split: s.split,
            text: Some(s.text.clone()),
            vector: toy_embed(&s.text, dim, seed)?,
        })?;
    }
    for group in sets {
        for set in group.iter() {
            let split = corpus.get(&set.origin_id).map_or(Split::Train, |s| s.split);
            for m in &set.members {
                store.push(EmbeddingRecord {
                    id: m.id.clone(),
                    origin_id: Some(m.origin_id.clone()),
                    label: m.label,
                    split,
                    text: Some(m.text.clone()),
                    vector: toy_embed(&m.text, dim, seed)?,
                })?;
            }
        }
    }
    Ok(store)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub id: String,
    pub origin_id: String,
    /// `None` when the member has no embedding.
    pub cosine: Option<f64>,
    pub kept: bool,
}

/// Keeps members whose embedding has cosine above `threshold` with their
/// origin. Members without an embedding are dropped.
pub fn filter_sets(
    sets: &[PerturbationSet],
    store: &EmbeddingStore<f64>,
    threshold: f64,
) -> anyhow::Result<(Vec<PerturbationSet>, Vec<FilterRecord>)> {
    let mut kept_sets = Vec::with_capacity(sets.len());
    let mut log = Vec::new();
    for set in sets {
        let origin = store.require(&set.origin_id)?;
        let mut kept = set.clone();
        kept.members.clear();
        for m in &set.members {
            let c = match store.get(&m.id) {
                Some(r) => Some(cosine(&origin.vector, &r.vector)?),
                None => None,
            };
            let keep = c.is_some_and(|c| c > threshold);
            log.push(FilterRecord {
                id: m.id.clone(),
                origin_id: m.origin_id.clone(),
                cosine: c,
                kept: keep,
            });
            if keep {
                kept.members.push(m.clone());
            }
        }
        kept_sets.push(kept);
    }
    Ok((kept_sets, log))
}

fn train_corpus(corpus: &Corpus) -> anyhow::Result<Corpus> {
    let items: Vec<_> = corpus.with_split(Split::Train).cloned().collect();
    Corpus::new(corpus.name(), items).context("corpus has no training sentences")
}

fn originals_matrix(corpus: &Corpus, store: &EmbeddingStore<f64>, class: Label, split: Option<Split>) -> anyhow::Result<EmbeddingMatrix<f64>> {
    let mut x = EmbeddingMatrix::new(store.dim());
    for s in corpus.with_label(class).filter(|s| split.is_none_or(|sp| s.split == sp)) {
        x.push(s.id.clone(), &store.require(&s.id)?.vector)?;
    }
    Ok(x)
}

/// Training-split points (originals and kept perturbations) with labels.
pub fn shrink_points(corpus: &Corpus, sets: &[PerturbationSet], store: &EmbeddingStore<f64>) -> anyhow::Result<Vec<(Vec<f64>, Label)>> {
    let mut out = Vec::new();
    for s in corpus.with_split(Split::Train) {
        out.push((store.require(&s.id)?.vector.clone(), s.label));
    }
    for set in sets {
        if corpus.get(&set.origin_id).map(|s| s.split) != Some(Split::Train) {
            continue;
        }
        for m in &set.members {
            if let Some(r) = store.get(&m.id) {
                out.push((r.vector.clone(), m.label));
            }
        }
    }
    Ok(out)
}

/// Subspaces for the training sentences of `cfg.class`.
pub fn build_subspaces(
    cfg: &SubspaceConfig,
    corpus: &Corpus,
    sets: &[PerturbationSet],
    store: &EmbeddingStore<f64>,
    seed: u64,
) -> anyhow::Result<Vec<Subspace<f64>>> {
    let class = cfg.class;
    let mut subs = match cfg.kind {
        SubspaceKind::EpsCube => {
            let mut subs = Vec::new();
            for s in corpus.with_label(class).filter(|s| s.split == Split::Train) {
                let rect = eps_cube(&store.require(&s.id)?.vector, cfg.epsilon)?;
                let meta = SubspaceMeta {
                    construction: "eps_cube".into(),
                    origin_ids: vec![s.id.clone()],
                };
                subs.push(Subspace::axis_aligned(class, rect, meta));
            }
            subs
        }
        SubspaceKind::Hrect => {
            let x = originals_matrix(corpus, store, class, Some(Split::Train))?;
            anyhow::ensure!(!x.is_empty(), "no training sentences of class {class}");
            let (groups, construction) = if cfg.cluster_k > 0 {
                (kmeans(&x, cfg.cluster_k, sub_seed(seed, "kmeans", 0))?, "cluster")
            } else {
                (vec![x], "hrect")
            };
            groups
                .iter()
                .map(|g| {
                    let meta = SubspaceMeta {
                        construction: construction.into(),
                        origin_ids: g.row_ids().to_vec(),
                    };
                    Subspace::enclosing(g, class, cfg.rotate, meta)
                })
                .collect::<Result<_, _>>()?
        }
        SubspaceKind::Semantic => {
            let opts = SemanticOptions {
                rotation: cfg.rotate,
                class,
            };
            semantic_subspaces(&train_corpus(corpus)?, sets, store, opts)?
        }
    };
    if cfg.shrink {
        let points = shrink_points(corpus, sets, store)?;
        subs = subs
            .iter()
            .map(|s| shrink(s, &points, class, cfg.shrink_delta))
            .collect::<Result<_, _>>()?;
    }
    Ok(subs)
}

/// Training-split originals as labelled examples.
pub fn training_examples(corpus: &Corpus, store: &EmbeddingStore<f64>) -> anyhow::Result<(Vec<String>, Vec<Example<f64>>)> {
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for s in corpus.with_split(Split::Train) {
        ids.push(s.id.clone());
        data.push((store.require(&s.id)?.vector.clone(), s.label));
    }
    anyhow::ensure!(!data.is_empty(), "no training sentences");
    Ok((ids, data))
}

/// `base` trains on originals, `augment` adds the kept training
/// perturbations, `pgd` attacks each original inside the first subspace
/// listing it as an origin.
pub fn train_network(
    mode: TrainMode,
    train_cfg: &TrainConfig,
    pgd_cfg: &PgdConfig,
    corpus: &Corpus,
    sets: &[PerturbationSet],
    store: &EmbeddingStore<f64>,
    subs: &[Subspace<f64>],
) -> anyhow::Result<Network<f64>> {
    let (ids, data) = training_examples(corpus, store)?;
    Ok(match mode {
        TrainMode::Base => sgd_train(&data, train_cfg)?,
        TrainMode::Augment => {
            let mut extra = Vec::new();
            for set in sets.iter().filter(|s| corpus.get(&s.origin_id).map(|o| o.split) == Some(Split::Train)) {
                for m in &set.members {
                    if let Some(r) = store.get(&m.id) {
                        extra.push((r.vector.clone(), m.label));
                    }
                }
            }
            augment_train(&data, &extra, train_cfg)?
        }
        TrainMode::Pgd => {
            let mut owner: HashMap<&str, &Subspace<f64>> = HashMap::new();
            for s in subs {
                for id in &s.meta.origin_ids {
                    owner.entry(id.as_str()).or_insert(s);
                }
            }
            let attached: Vec<Option<&Subspace<f64>>> = ids
                .iter()
                .zip(&data)
                .map(|(id, (_, label))| owner.get(id.as_str()).copied().filter(|s| s.class == *label))
                .collect();
            pgd_train(&data, &attached, train_cfg, pgd_cfg)?
        }
    })
}

pub fn verify_mode(cfg: &PipelineConfig) -> VerifyMode {
    match cfg.verify_mode {
        VerifyKind::Ibp => VerifyMode::Ibp,
        VerifyKind::Bab => VerifyMode::Bab(cfg.bab_config()),
    }
}

/// Verifies every subspace for its own class.
pub fn verify_subspaces(net: &Network<f64>, subs: &[Subspace<f64>], mode: &VerifyMode) -> anyhow::Result<Vec<VerifResult<f64>>> {
    let queries = subs
        .iter()
        .map(|s| VerifQuery::for_subspace(net, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(verify_suite(&queries, mode)?)
}

/// Held-out vectors split by whether their origin has the target class.
fn heldout_vectors(corpus: &Corpus, heldout: &[PerturbationSet], store: &EmbeddingStore<f64>, class: Label) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut same = Vec::new();
    let mut other = Vec::new();
    for set in heldout {
        if corpus.get(&set.origin_id).map(|s| s.split) != Some(Split::Train) {
            continue;
        }
        for m in &set.members {
            if let Some(r) = store.get(&m.id) {
                if m.label == class {
                    same.push(r.vector.clone());
                } else {
                    other.push(r.vector.clone());
                }
            }
        }
    }
    (same, other)
}

pub struct ReportInputs<'a> {
    pub experiment: &'a str,
    pub corpus: &'a Corpus,
    pub heldout: &'a [PerturbationSet],
    pub store: &'a EmbeddingStore<f64>,
    pub subs: &'a [Subspace<f64>],
    pub class: Label,
    pub net: &'a Network<f64>,
    pub results: &'a [ResultRecord],
}

pub fn build_report(inp: &ReportInputs<'_>) -> anyhow::Result<MetricsReport> {
    let outcomes: Vec<_> = inp.results.iter().map(|r| r.status).collect();
    let mut all = EmbeddingMatrix::new(inp.store.dim());
    for s in inp.corpus.iter() {
        all.push(s.id.clone(), &inp.store.require(&s.id)?.vector)?;
    }
    let global = hrect_of(&all)?;
    let (same, other) = heldout_vectors(inp.corpus, inp.heldout, inp.store, inp.class);
    let generalisability = (!same.is_empty()).then(|| generalisability(&same, inp.subs)).transpose()?;
    let (embedding_error, false_positives) = if other.is_empty() || inp.subs.is_empty() {
        (None, None)
    } else {
        (Some(embedding_error(&other, inp.subs)?), Some(false_positive_rate(&other, inp.subs)?))
    };
    let test: Vec<_> = inp.corpus.with_split(Split::Test).collect();
    let classification = if test.is_empty() {
        None
    } else {
        let mut pred = Vec::with_capacity(test.len());
        for s in &test {
            pred.push(inp.net.classify(&inp.store.require(&s.id)?.vector)?);
        }
        let labels: Vec<Label> = test.iter().map(|s| s.label).collect();
        Some(precision_recall_f1(&pred, &labels)?)
    };
    Ok(MetricsReport {
        experiment: inp.experiment.to_string(),
        subspaces: inp.subs.len(),
        volume: VolumeSummary::of(inp.subs, Some(&global)),
        verifiability: verifiability(&outcomes)?,
        generalisability,
        embedding_error,
        false_positives,
        classification,
    })
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub subspace: usize,
    #[serde(flatten)]
    pub record: ResultRecord,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_subspaces(path: &Path, subs: &[Subspace<f64>]) -> anyhow::Result<()> {
    write_jsonl(path, subs)
}

pub fn read_subspaces(path: &Path) -> anyhow::Result<Vec<Subspace<f64>>> {
    read_jsonl(path)
}

pub fn write_perturbation_file(path: &Path, sets: &[PerturbationSet]) -> anyhow::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_perturbations(&mut out, sets)?;
    out.flush()?;
    Ok(())
}

pub fn write_store(path: &Path, store: &EmbeddingStore<f64>) -> anyhow::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    store.write(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Artifact names written into every run directory.
pub mod artifacts {
    pub const CORPUS: &str = "corpus.jsonl";
    pub const PERTURBATIONS: &str = "perturbations.jsonl";
    pub const HELDOUT: &str = "heldout_perturbations.jsonl";
    pub const EMBEDDINGS: &str = "embeddings.jsonl";
    pub const FILTER: &str = "filter.jsonl";
    pub const SUBSPACES: &str = "subspaces.jsonl";
    pub const NETWORK: &str = "network.json";
    pub const RESULTS: &str = "results.jsonl";
    pub const REPORT_CSV: &str = "report.csv";
    pub const REPORT_MD: &str = "report.md";
    pub const METRICS: &str = "metrics.json";
    pub const MANIFEST: &str = "manifest.json";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    /// Canonical `key = value` text of the effective config.
    pub config: String,
    pub versions: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    pub counts: RunCounts,
    pub verifier: crate::bench::VerifierSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub sentences: usize,
    pub perturbations: usize,
    pub kept_perturbations: usize,
    pub heldout: usize,
    pub subspaces: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub report: MetricsReport,
    pub results: Vec<ResultRecord>,
}

/// Reads the config at `path` and runs every stage. See [`run_config`].
pub fn run_pipeline(path: impl AsRef<Path>) -> Result<RunOutput, StageError> {
    let cfg = stage("config", PipelineConfig::load(path).map_err(Into::into))?;
    run_config(&cfg)
}

/// Runs corpus → perturb → embed → filter → subspace → train → verify →
/// report, writing every artifact into `<output.dir>/<config hash>/`.
pub fn run_config(cfg: &PipelineConfig) -> Result<RunOutput, StageError> {
    use artifacts::*;
    let hash = stage("config", cfg.hash().context("cannot hash input files"))?;
    let dir = cfg.output_dir.join(&hash);
    stage("config", fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display())))?;
    let at = |name: &str| dir.join(name);

    let corpus = stage("dataset", (|| {
        let corpus = load_corpus(&cfg.corpus, cfg.seed)?;
        corpus.export(at(CORPUS), Format::Jsonl)?;
        Ok(corpus)
    })())?;

    let (sets, heldout) = stage("perturb", (|| {
        let sets = match &cfg.perturb_import {
            Some(p) => import_perturbations(p, &corpus)?,
            None => perturb_corpus(&corpus, &cfg.perturb_kinds, cfg.perturb_n, sub_seed(cfg.seed, "perturb", 0)),
        };
        let mut heldout = perturb_corpus(&corpus, &cfg.perturb_kinds, cfg.perturb_n, sub_seed(cfg.seed, "heldout", 0));
        mark_heldout(&mut heldout);
        write_perturbation_file(&at(PERTURBATIONS), &sets)?;
        write_perturbation_file(&at(HELDOUT), &heldout)?;
        Ok((sets, heldout))
    })())?;

    let store = stage("embed", (|| {
        let store = match &cfg.embedding {
            EmbeddingSource::Toy => toy_store(&corpus, &[&sets, &heldout], cfg.embedding_dim, sub_seed(cfg.seed, "embed", 0))?,
            EmbeddingSource::File(p) => load_embeddings(p)?,
        };
        write_store(&at(EMBEDDINGS), &store)?;
        Ok(store)
    })())?;

    let (kept, kept_heldout) = stage("filter", (|| {
        let (kept, mut log) = filter_sets(&sets, &store, cfg.cosine_threshold)?;
        let (kept_heldout, log_h) = filter_sets(&heldout, &store, cfg.cosine_threshold)?;
        log.extend(log_h);
        write_jsonl(&at(FILTER), &log)?;
        Ok((kept, kept_heldout))
    })())?;

    let subs = stage("subspace", (|| {
        let subs = build_subspaces(&cfg.subspace, &corpus, &kept, &store, cfg.seed)?;
        anyhow::ensure!(!subs.is_empty(), "no subspaces were built");
        write_subspaces(&at(SUBSPACES), &subs)?;
        Ok(subs)
    })())?;

    let net = stage("train", (|| {
        let train_cfg = TrainConfig {
            seed: sub_seed(cfg.seed, "init", 0),
            ..cfg.train.clone()
        };
        let net = train_network(cfg.train_mode, &train_cfg, &cfg.train_pgd, &corpus, &kept, &store, &subs)?;
        fs::write(at(NETWORK), net.to_json())?;
        Ok(net)
    })())?;

    let results = stage("verify", (|| {
        let results: Vec<ResultRecord> = verify_subspaces(&net, &subs, &verify_mode(cfg))?
            .iter()
            .map(VerifResult::to_record)
            .collect();
        write_jsonl(
            &at(RESULTS),
            results.iter().enumerate().map(|(i, r)| ResultLine {
                subspace: i,
                record: r.clone(),
            }),
        )?;
        Ok(results)
    })())?;

    let report = stage("report", (|| {
        let report = build_report(&ReportInputs {
            experiment: &cfg.name,
            corpus: &corpus,
            heldout: &kept_heldout,
            store: &store,
            subs: &subs,
            class: cfg.subspace.class,
            net: &net,
            results: &results,
        })?;
        fs::write(at(REPORT_CSV), render_csv(std::slice::from_ref(&report)))?;
        fs::write(at(REPORT_MD), render_markdown(std::slice::from_ref(&report)))?;
        fs::write(at(METRICS), serde_json::to_string_pretty(&report)? + "\n")?;
        let count = |s: &[PerturbationSet]| s.iter().map(PerturbationSet::len).sum::<usize>();
        let manifest = RunManifest {
            config_hash: hash.clone(),
            config: cfg.canonical(),
            versions: BTreeMap::from([
                ("nlpv-core".to_string(), nlpv::VERSION.to_string()),
                ("nlpv-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ]),
            artifacts: [CORPUS, PERTURBATIONS, HELDOUT, EMBEDDINGS, FILTER, SUBSPACES, NETWORK, RESULTS, REPORT_CSV, REPORT_MD, METRICS]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            counts: RunCounts {
                sentences: corpus.len(),
                perturbations: count(&sets),
                kept_perturbations: count(&kept),
                heldout: count(&kept_heldout),
                subspaces: subs.len(),
            },
            verifier: crate::bench::VerifierSettings::from_config(cfg),
        };
        fs::write(at(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(report)
    })())?;

    Ok(RunOutput { dir, report, results })
}
