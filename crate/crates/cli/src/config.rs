//! Flat `key = value` pipeline configuration with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! known; repeated keys are rejected. Relative paths resolve against the
//! directory of the config file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use nlpv::dataset::{Format, Label};
use nlpv::geometry::{RotationMode, DEFAULT_SHRINK_DELTA};
use nlpv::perturb::PerturbationKind;
use nlpv::train::{PgdConfig, PgdInit, TrainConfig};
use nlpv::verify::{BabConfig, SplitRule};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("config key '{0}' given twice")]
    DuplicateKey(String),
    #[error("config key '{key}': {reason}")]
    BadValue { key: String, reason: String },
    #[error("config key '{key}': file {path} does not exist")]
    MissingFile { key: String, path: PathBuf },
    #[error("cannot read config {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    /// `n` sentences per class from the built-in generator.
    Synth { n_per_class: usize },
    File { path: PathBuf, format: Format },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSource {
    Toy,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceKind {
    EpsCube,
    Hrect,
    Semantic,
}

impl SubspaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SubspaceKind::EpsCube => "eps_cube",
            SubspaceKind::Hrect => "hrect",
            SubspaceKind::Semantic => "semantic",
        }
    }
}

impl FromStr for SubspaceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "eps_cube" => Ok(SubspaceKind::EpsCube),
            "hrect" => Ok(SubspaceKind::Hrect),
            "semantic" => Ok(SubspaceKind::Semantic),
            _ => Err(format!("expected eps_cube, hrect or semantic, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Base,
    Augment,
    Pgd,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Base => "base",
            TrainMode::Augment => "augment",
            TrainMode::Pgd => "pgd",
        }
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "base" => Ok(TrainMode::Base),
            "augment" => Ok(TrainMode::Augment),
            "pgd" => Ok(TrainMode::Pgd),
            _ => Err(format!("expected base, augment or pgd, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyKind {
    Ibp,
    Bab,
}

impl FromStr for VerifyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ibp" => Ok(VerifyKind::Ibp),
            "bab" => Ok(VerifyKind::Bab),
            _ => Err(format!("expected ibp or bab, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceConfig {
    pub kind: SubspaceKind,
    pub class: Label,
    /// Half-width of ε-cubes.
    pub epsilon: f64,
    pub rotate: RotationMode,
    /// Shrink against wrong-class training embeddings.
    pub shrink: bool,
    pub shrink_delta: f64,
    /// Cluster the class before building hyper-rectangles; 0 disables.
    pub cluster_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Experiment label used in the report tables.
    pub name: String,
    pub corpus: CorpusSource,
    pub perturb_kinds: Vec<PerturbationKind>,
    /// Perturbations drawn per kind.
    pub perturb_n: usize,
    /// Externally generated perturbations replace the rule-based ones.
    pub perturb_import: Option<PathBuf>,
    pub embedding: EmbeddingSource,
    pub embedding_dim: usize,
    pub cosine_threshold: f64,
    pub subspace: SubspaceConfig,
    pub train_mode: TrainMode,
    pub train: TrainConfig,
    pub train_pgd: PgdConfig,
    pub verify_mode: VerifyKind,
    pub bab: BabConfig,
    /// Parent of the content-addressed run directories.
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            name: String::new(),
            corpus: CorpusSource::Synth { n_per_class: 50 },
            perturb_kinds: PerturbationKind::CHAR.to_vec(),
            perturb_n: 4,
            perturb_import: None,
            embedding: EmbeddingSource::Toy,
            embedding_dim: 30,
            cosine_threshold: 0.6,
            subspace: SubspaceConfig {
                kind: SubspaceKind::Semantic,
                class: Label::Pos,
                epsilon: 0.005,
                rotate: RotationMode::None,
                shrink: false,
                shrink_delta: DEFAULT_SHRINK_DELTA,
                cluster_k: 0,
            },
            train_mode: TrainMode::Base,
            train: TrainConfig::default(),
            train_pgd: PgdConfig::default(),
            verify_mode: VerifyKind::Ibp,
            bab: BabConfig::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "name",
    "corpus.source",
    "corpus.synth_n",
    "corpus.path",
    "corpus.format",
    "perturb.kinds",
    "perturb.n",
    "perturb.import",
    "embedding.source",
    "embedding.path",
    "embedding.dim",
    "filter.cosine_threshold",
    "subspace.kind",
    "subspace.class",
    "subspace.epsilon",
    "subspace.rotate",
    "subspace.shrink",
    "subspace.shrink.delta",
    "subspace.cluster_k",
    "train.mode",
    "train.learning_rate",
    "train.epochs",
    "train.batch_size",
    "train.hidden",
    "train.pgd.iterations",
    "train.pgd.step_fraction",
    "train.pgd.init",
    "train.pgd.restarts",
    "verify.mode",
    "verify.max_regions",
    "verify.time_budget_ms",
    "verify.attack.iterations",
    "verify.attack.step_fraction",
    "verify.attack.init",
    "verify.attack.restarts",
    "output.dir",
];

/// Parses `key = value` lines into a map, rejecting unknown and repeated
/// keys. `#` starts a comment at the beginning of a line or after
/// whitespace.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find(" #").or_else(|| raw.find("\t#")) {
            Some(at) => &raw[..at],
            None => raw,
        }
        .trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        if !KEYS.contains(&k) {
            return Err(ConfigError::UnknownKey(k.to_string()));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::DuplicateKey(k.to_string()));
        }
    }
    Ok(out)
}

fn bad(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: ToString,
{
    v.parse().map_err(|e: T::Err| bad(key, e))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, format!("expected true or false, got '{v}'"))),
    }
}

fn parse_rotation(key: &str, v: &str) -> Result<RotationMode, ConfigError> {
    match v {
        "none" | "false" => Ok(RotationMode::None),
        "centered" | "true" => Ok(RotationMode::Centered),
        "uncentered" => Ok(RotationMode::Uncentered),
        _ => Err(bad(key, format!("expected none, centered or uncentered, got '{v}'"))),
    }
}

fn rotation_name(r: RotationMode) -> &'static str {
    match r {
        RotationMode::None => "none",
        RotationMode::Centered => "centered",
        RotationMode::Uncentered => "uncentered",
    }
}

fn parse_init(key: &str, v: &str) -> Result<PgdInit, ConfigError> {
    match v {
        "origin" => Ok(PgdInit::Origin),
        "random_in_rect" => Ok(PgdInit::RandomInRect),
        _ => Err(bad(key, format!("expected origin or random_in_rect, got '{v}'"))),
    }
}

fn init_name(i: PgdInit) -> &'static str {
    match i {
        PgdInit::Origin => "origin",
        PgdInit::RandomInRect => "random_in_rect",
    }
}

/// `char`, `word`, `all`, or a comma list of rule names.
pub fn parse_kinds(v: &str) -> Result<Vec<PerturbationKind>, String> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part {
            "char" => out.extend(PerturbationKind::CHAR.iter().cloned()),
            "word" => out.extend(PerturbationKind::WORD.iter().cloned()),
            "all" => out.extend(PerturbationKind::rules()),
            name => match name.parse::<PerturbationKind>()? {
                PerturbationKind::External(tag) => return Err(format!("unknown perturbation rule '{tag}'")),
                k => out.push(k),
            },
        }
    }
    out.dedup();
    if out.is_empty() {
        return Err("no perturbation kinds given".into());
    }
    Ok(out)
}

fn parse_hidden(key: &str, v: &str) -> Result<Vec<usize>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse::<usize>(key, s))
        .collect()
}

fn resolve(base: &Path, key: &str, v: &str) -> Result<PathBuf, ConfigError> {
    let p = Path::new(v);
    let p = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    if !p.exists() {
        return Err(ConfigError::MissingFile { key: key.into(), path: p });
    }
    Ok(p)
}

fn format_of(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Format::Csv,
        _ => Format::Jsonl,
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let pairs = parse_pairs(text)?;
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let mut c = PipelineConfig::default();

        if let Some(v) = get("seed") {
            c.seed = parse("seed", v)?;
        }
        if let Some(v) = get("name") {
            c.name = v.to_string();
        }

        let source = get("corpus.source").unwrap_or(if get("corpus.path").is_some() { "file" } else { "synth" });
        c.corpus = match source {
            "synth" => {
                let n = match get("corpus.synth_n") {
                    Some(v) => parse("corpus.synth_n", v)?,
                    None => 50,
                };
                if n == 0 {
                    return Err(bad("corpus.synth_n", "must be at least 1"));
                }
                CorpusSource::Synth { n_per_class: n }
            }
            "file" => {
                let v = get("corpus.path").ok_or_else(|| bad("corpus.path", "required when corpus.source = file"))?;
                let path = resolve(base, "corpus.path", v)?;
                let format = match get("corpus.format") {
                    Some(f) => parse("corpus.format", f)?,
                    None => format_of(&path),
                };
                CorpusSource::File { path, format }
            }
            other => return Err(bad("corpus.source", format!("expected synth or file, got '{other}'"))),
        };

        if let Some(v) = get("perturb.kinds") {
            c.perturb_kinds = parse_kinds(v).map_err(|e| bad("perturb.kinds", e))?;
        }
        if let Some(v) = get("perturb.n") {
            c.perturb_n = parse("perturb.n", v)?;
        }
        if let Some(v) = get("perturb.import") {
            c.perturb_import = Some(resolve(base, "perturb.import", v)?);
        }

        let source = get("embedding.source").unwrap_or(if get("embedding.path").is_some() { "file" } else { "toy" });
        c.embedding = match source {
            "toy" => EmbeddingSource::Toy,
            "file" => {
                let v = get("embedding.path").ok_or_else(|| bad("embedding.path", "required when embedding.source = file"))?;
                EmbeddingSource::File(resolve(base, "embedding.path", v)?)
            }
            other => return Err(bad("embedding.source", format!("expected toy or file, got '{other}'"))),
        };
        if let Some(v) = get("embedding.dim") {
            c.embedding_dim = parse("embedding.dim", v)?;
            if c.embedding_dim < 2 {
                return Err(bad("embedding.dim", "must be at least 2"));
            }
        }

        if let Some(v) = get("filter.cosine_threshold") {
            c.cosine_threshold = parse("filter.cosine_threshold", v)?;
            if !(-1.0..=1.0).contains(&c.cosine_threshold) {
                return Err(bad("filter.cosine_threshold", "must lie in [-1, 1]"));
            }
        }

        let s = &mut c.subspace;
        if let Some(v) = get("subspace.kind") {
            s.kind = parse("subspace.kind", v)?;
        }
        if let Some(v) = get("subspace.class") {
            s.class = v.parse().map_err(|_| bad("subspace.class", format!("expected pos or neg, got '{v}'")))?;
        }
        if let Some(v) = get("subspace.epsilon") {
            s.epsilon = parse("subspace.epsilon", v)?;
        }
        if !(s.epsilon > 0.0 && s.epsilon.is_finite()) {
            return Err(bad("subspace.epsilon", "must be positive"));
        }
        if let Some(v) = get("subspace.rotate") {
            s.rotate = parse_rotation("subspace.rotate", v)?;
        }
        if let Some(v) = get("subspace.shrink") {
            s.shrink = parse_bool("subspace.shrink", v)?;
        }
        if let Some(v) = get("subspace.shrink.delta") {
            s.shrink_delta = parse("subspace.shrink.delta", v)?;
            if !(s.shrink_delta > 0.0) {
                return Err(bad("subspace.shrink.delta", "must be positive"));
            }
        }
        if let Some(v) = get("subspace.cluster_k") {
            s.cluster_k = parse("subspace.cluster_k", v)?;
        }

        if let Some(v) = get("train.mode") {
            c.train_mode = parse("train.mode", v)?;
        }
        let t = &mut c.train;
        if let Some(v) = get("train.learning_rate") {
            t.learning_rate = parse("train.learning_rate", v)?;
        }
        if let Some(v) = get("train.epochs") {
            t.epochs = parse("train.epochs", v)?;
        }
        if let Some(v) = get("train.batch_size") {
            t.batch_size = parse("train.batch_size", v)?;
        }
        if let Some(v) = get("train.hidden") {
            t.hidden = parse_hidden("train.hidden", v)?;
        }
        t.validate().map_err(|e| bad("train", e))?;
        apply_pgd(&mut c.train_pgd, "train.pgd", &get)?;

        if let Some(v) = get("verify.mode") {
            c.verify_mode = parse("verify.mode", v)?;
        }
        if let Some(v) = get("verify.max_regions") {
            c.bab.max_regions = parse("verify.max_regions", v)?;
            if c.bab.max_regions == 0 {
                return Err(bad("verify.max_regions", "must be at least 1"));
            }
        }
        if let Some(v) = get("verify.time_budget_ms") {
            let ms: u64 = parse("verify.time_budget_ms", v)?;
            c.bab.time_budget = (ms > 0).then(|| Duration::from_millis(ms));
        }
        apply_pgd(&mut c.bab.attack, "verify.attack", &get)?;

        if let Some(v) = get("output.dir") {
            let p = Path::new(v);
            c.output_dir = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        } else {
            c.output_dir = base.join("runs");
        }
        if c.name.is_empty() {
            c.name = c.default_name();
        }
        Ok(c)
    }

    fn default_name(&self) -> String {
        let s = &self.subspace;
        let mut name = match s.kind {
            SubspaceKind::EpsCube => format!("eps_cube {}", s.epsilon),
            k => k.name().to_string(),
        };
        if s.rotate != RotationMode::None {
            name.push_str(" rotated");
        }
        if s.shrink {
            name.push_str(" shrunk");
        }
        name.push_str(&format!(" / {}", self.train_mode.name()));
        name
    }

    /// Every key with its effective value, one `key = value` per line in
    /// key order. Paths are written as given after resolution. Parsing
    /// the result reproduces the config.
    pub fn canonical(&self) -> String {
        let mut m: BTreeMap<String, String> = BTreeMap::new();
        m.insert("seed".into(), self.seed.to_string());
        m.insert("name".into(), self.name.clone());
        match &self.corpus {
            CorpusSource::Synth { n_per_class } => {
                m.insert("corpus.source".into(), "synth".into());
                m.insert("corpus.synth_n".into(), n_per_class.to_string());
            }
            CorpusSource::File { path, format } => {
                m.insert("corpus.source".into(), "file".into());
                m.insert("corpus.path".into(), path.display().to_string());
                m.insert("corpus.format".into(), if *format == Format::Csv { "csv" } else { "jsonl" }.into());
            }
        }
        m.insert(
            "perturb.kinds".into(),
            self.perturb_kinds.iter().map(|k| k.name().to_string()).collect::<Vec<_>>().join(","),
        );
        m.insert("perturb.n".into(), self.perturb_n.to_string());
        if let Some(p) = &self.perturb_import {
            m.insert("perturb.import".into(), p.display().to_string());
        }
        match &self.embedding {
            EmbeddingSource::Toy => {
                m.insert("embedding.source".into(), "toy".into());
            }
            EmbeddingSource::File(p) => {
                m.insert("embedding.source".into(), "file".into());
                m.insert("embedding.path".into(), p.display().to_string());
            }
        }
        m.insert("embedding.dim".into(), self.embedding_dim.to_string());
        m.insert("filter.cosine_threshold".into(), self.cosine_threshold.to_string());
        let s = &self.subspace;
        m.insert("subspace.kind".into(), s.kind.name().into());
        m.insert("subspace.class".into(), s.class.as_str().into());
        m.insert("subspace.epsilon".into(), s.epsilon.to_string());
        m.insert("subspace.rotate".into(), rotation_name(s.rotate).into());
        m.insert("subspace.shrink".into(), s.shrink.to_string());
        m.insert("subspace.shrink.delta".into(), format!("{:e}", s.shrink_delta));
        m.insert("subspace.cluster_k".into(), s.cluster_k.to_string());
        m.insert("train.mode".into(), self.train_mode.name().into());
        m.insert("train.learning_rate".into(), self.train.learning_rate.to_string());
        m.insert("train.epochs".into(), self.train.epochs.to_string());
        m.insert("train.batch_size".into(), self.train.batch_size.to_string());
        m.insert(
            "train.hidden".into(),
            self.train.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
        );
        for (prefix, p) in [("train.pgd", &self.train_pgd), ("verify.attack", &self.bab.attack)] {
            m.insert(format!("{prefix}.iterations"), p.iterations.to_string());
            m.insert(format!("{prefix}.step_fraction"), p.step_fraction.to_string());
            m.insert(format!("{prefix}.init"), init_name(p.init).into());
            m.insert(format!("{prefix}.restarts"), p.restarts.to_string());
        }
        m.insert(
            "verify.mode".into(),
            match self.verify_mode {
                VerifyKind::Ibp => "ibp",
                VerifyKind::Bab => "bab",
            }
            .into(),
        );
        m.insert("verify.max_regions".into(), self.bab.max_regions.to_string());
        m.insert(
            "verify.time_budget_ms".into(),
            self.bab.time_budget.map_or(0, |d| d.as_millis() as u64).to_string(),
        );
        m.insert("output.dir".into(), self.output_dir.display().to_string());
        let mut out = String::new();
        for (k, v) in m {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Run-directory name: the canonical text without `output.dir`, plus
    /// the contents of every input file, hashed with SHA-256.
    pub fn hash(&self) -> Result<String, std::io::Error> {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for line in self.canonical().lines().filter(|l| !l.starts_with("output.dir")) {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        for p in self.input_files() {
            h.update(std::fs::read(p)?);
        }
        Ok(hex::encode(h.finalize())[..16].to_string())
    }

    pub fn input_files(&self) -> Vec<&Path> {
        let mut out = Vec::new();
        if let CorpusSource::File { path, .. } = &self.corpus {
            out.push(path.as_path());
        }
        if let Some(p) = &self.perturb_import {
            out.push(p.as_path());
        }
        if let EmbeddingSource::File(p) = &self.embedding {
            out.push(p.as_path());
        }
        out
    }

    pub fn bab_config(&self) -> BabConfig {
        BabConfig {
            split_rule: SplitRule::WidestDim,
            seed: nlpv::rng::sub_seed(self.seed, "bab", 0),
            ..self.bab.clone()
        }
    }
}

fn apply_pgd<'a>(p: &mut PgdConfig, prefix: &str, get: &impl Fn(&str) -> Option<&'a str>) -> Result<(), ConfigError> {
    let key = |f: &str| format!("{prefix}.{f}");
    if let Some(v) = get(&key("iterations")) {
        p.iterations = parse(&key("iterations"), v)?;
    }
    if let Some(v) = get(&key("step_fraction")) {
        p.step_fraction = parse(&key("step_fraction"), v)?;
    }
    if let Some(v) = get(&key("init")) {
        p.init = parse_init(&key("init"), v)?;
    }
    if let Some(v) = get(&key("restarts")) {
        p.restarts = parse(&key("restarts"), v)?;
    }
    p.validate().map_err(|e| bad(prefix, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(s: &str) -> Result<PipelineConfig, ConfigError> {
        PipelineConfig::parse(s, Path::new("/tmp"))
    }

    #[test]
    fn defaults() {
        let c = parse_str("").unwrap();
        assert_eq!(c.embedding_dim, 30);
        assert_eq!(c.perturb_n, 4);
        assert_eq!(c.cosine_threshold, 0.6);
        assert_eq!(c.subspace.epsilon, 0.005);
        assert_eq!(c.subspace.shrink_delta, DEFAULT_SHRINK_DELTA);
        assert_eq!(c.bab.max_regions, 4096);
        assert_eq!(c.bab.time_budget, Some(Duration::from_secs(10)));
    }

    #[test]
    fn comments() {
        let c = parse_str("# header\nseed = 9   # inline\nname = a#b\n\tperturb.n = 2\t# tab\n").unwrap();
        assert_eq!((c.seed, c.name.as_str(), c.perturb_n), (9, "a#b", 2));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_str("seed = 1\nsubspace.epsilom = 0.1\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("subspace.epsilom".into()));
        assert!(err.to_string().contains("subspace.epsilom"));
    }

    #[test]
    fn rejects_bad_lines_and_values() {
        assert_eq!(parse_str("seed 1").unwrap_err(), ConfigError::Syntax { line: 1 });
        assert!(matches!(parse_str("seed = 1\nseed = 2"), Err(ConfigError::DuplicateKey(_))));
        assert!(matches!(parse_str("subspace.kind = ball"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(parse_str("subspace.epsilon = -1"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(parse_str("train.epochs = 0"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(parse_str("perturb.kinds = char_teleport"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(
            parse_str("corpus.path = /definitely/not/here.csv"),
            Err(ConfigError::MissingFile { .. })
        ));
    }

    #[test]
    fn parses_all_sections() {
        let c = parse_str(
            "# experiment\nseed = 7\nperturb.kinds = word, char_swap\nsubspace.kind = hrect\n\
             subspace.rotate = centered\nsubspace.shrink = true\ntrain.mode = pgd\ntrain.hidden = 16,8\n\
             train.pgd.init = random_in_rect\nverify.mode = bab\nverify.time_budget_ms = 0\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.perturb_kinds.len(), 7);
        assert_eq!(c.subspace.kind, SubspaceKind::Hrect);
        assert_eq!(c.subspace.rotate, RotationMode::Centered);
        assert_eq!(c.train.hidden, vec![16, 8]);
        assert_eq!(c.train_pgd.init, PgdInit::RandomInRect);
        assert_eq!(c.verify_mode, VerifyKind::Bab);
        assert_eq!(c.bab.time_budget, None);
        assert_eq!(c.name, "hrect rotated shrunk / pgd");
    }

    #[test]
    fn canonical_round_trips() {
        let c = parse_str("seed = 3\nsubspace.kind = eps_cube\nsubspace.epsilon = 0.05\ntrain.hidden = 4").unwrap();
        let again = parse_str(&c.canonical()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash().unwrap(), c.hash().unwrap());
        let other = parse_str("seed = 4\nsubspace.kind = eps_cube\nsubspace.epsilon = 0.05\ntrain.hidden = 4").unwrap();
        assert_ne!(other.hash().unwrap(), c.hash().unwrap());
    }
}
