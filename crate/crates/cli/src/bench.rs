//! Self-contained benchmark bundles exported from a run directory.
//!
//! Layout: `network.json`, `subspaces/sub_XXXX.json`, `queries.jsonl`
//! (one query per subspace) and `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use nlpv::dataset::Label;
use nlpv::geometry::Subspace;
use nlpv::train::{Network, PgdConfig};
use nlpv::verify::{BabConfig, Outcome, SplitRule, VerifResult, VerifyMode};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::pipeline::{artifacts, read_jsonl, read_subspaces, verify_subspaces, write_jsonl, ResultLine, RunManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEntry {
    pub id: String,
    pub network: String,
    pub subspace: String,
    pub target: Label,
    /// Verdict recorded by the source run, if it was verified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Outcome>,
}

/// Verifier settings that reproduce the recorded verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierSettings {
    pub mode: String,
    pub max_regions: usize,
    /// 0 disables the wall-clock budget.
    pub time_budget_ms: u64,
    pub seed: u64,
    pub attack: PgdConfig,
}

impl VerifierSettings {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        let bab = cfg.bab_config();
        VerifierSettings {
            mode: match crate::pipeline::verify_mode(cfg) {
                VerifyMode::Ibp => "ibp".into(),
                VerifyMode::Bab(_) => "bab".into(),
            },
            max_regions: bab.max_regions,
            time_budget_ms: bab.time_budget.map_or(0, |d| d.as_millis() as u64),
            seed: bab.seed,
            attack: bab.attack,
        }
    }

    pub fn mode(&self) -> anyhow::Result<VerifyMode> {
        Ok(match self.mode.as_str() {
            "ibp" => VerifyMode::Ibp,
            "bab" => VerifyMode::Bab(BabConfig {
                max_regions: self.max_regions,
                attack: self.attack.clone(),
                split_rule: SplitRule::WidestDim,
                time_budget: (self.time_budget_ms > 0).then(|| std::time::Duration::from_millis(self.time_budget_ms)),
                seed: self.seed,
            }),
            other => bail!("unknown verifier mode '{other}'"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub source_run: String,
    pub config_hash: Option<String>,
    pub queries: usize,
    pub verifier: Option<VerifierSettings>,
    /// Percentage verified in the source run.
    pub verifiability: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub network: Network<f64>,
    pub subspaces: Vec<Subspace<f64>>,
    pub queries: Vec<QueryEntry>,
    pub manifest: BundleManifest,
}

pub const QUERIES: &str = "queries.jsonl";
pub const SUBSPACE_DIR: &str = "subspaces";

/// Writes a bundle for `run` into `out`. Fails, listing every missing
/// artifact, unless the run holds a network and subspaces.
pub fn export_benchmark(run: &Path, out: &Path) -> anyhow::Result<BundleManifest> {
    let missing: Vec<&str> = [artifacts::NETWORK, artifacts::SUBSPACES]
        .into_iter()
        .filter(|a| !run.join(a).is_file())
        .collect();
    if !missing.is_empty() {
        bail!("run {} is incomplete; missing {}", run.display(), missing.join(", "));
    }
    let net_text = fs::read_to_string(run.join(artifacts::NETWORK))?;
    let network = Network::<f64>::from_json(&net_text).context("invalid network.json")?;
    let subs = read_subspaces(&run.join(artifacts::SUBSPACES))?;
    for s in &subs {
        anyhow::ensure!(s.dim() == network.input_dim(), "subspace dimension {} does not match the network", s.dim());
    }

    let results_path = run.join(artifacts::RESULTS);
    let results: Vec<ResultLine> = if results_path.is_file() { read_jsonl(&results_path)? } else { Vec::new() };
    let expected = |i: usize| results.iter().find(|r| r.subspace == i).map(|r| r.record.status);
    let run_manifest: Option<RunManifest> = match fs::read_to_string(run.join(artifacts::MANIFEST)) {
        Ok(s) => Some(serde_json::from_str(&s).context("invalid manifest.json")?),
        Err(_) => None,
    };
    let verifier = run_manifest.as_ref().map(|m| m.verifier.clone());

    fs::create_dir_all(out.join(SUBSPACE_DIR))?;
    fs::write(out.join(artifacts::NETWORK), net_text)?;
    let mut queries = Vec::with_capacity(subs.len());
    for (i, s) in subs.iter().enumerate() {
        let rel = format!("{SUBSPACE_DIR}/sub_{i:04}.json");
        fs::write(out.join(&rel), serde_json::to_string_pretty(s)? + "\n")?;
        queries.push(QueryEntry {
            id: format!("q{i:04}"),
            network: artifacts::NETWORK.into(),
            subspace: rel,
            target: s.class,
            expected: expected(i),
        });
    }
    write_jsonl(&out.join(QUERIES), &queries)?;
    let verifiability = (!results.is_empty() && results.len() == subs.len()).then(|| {
        100.0 * results.iter().filter(|r| r.record.status == Outcome::Verified).count() as f64 / results.len() as f64
    });
    let manifest = BundleManifest {
        source_run: run.display().to_string(),
        config_hash: run_manifest.map(|m| m.config_hash),
        queries: queries.len(),
        verifier,
        verifiability,
    };
    fs::write(out.join(artifacts::MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn load_bundle(dir: &Path) -> anyhow::Result<Bundle> {
    let read = |p: PathBuf| fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()));
    let manifest: BundleManifest = serde_json::from_str(&read(dir.join(artifacts::MANIFEST))?)?;
    let queries: Vec<QueryEntry> = read_jsonl(&dir.join(QUERIES))?;
    let network = Network::from_json(&read(dir.join(artifacts::NETWORK))?)?;
    let mut subspaces = Vec::with_capacity(queries.len());
    for q in &queries {
        anyhow::ensure!(q.network == artifacts::NETWORK, "query {} names an unknown network {}", q.id, q.network);
        let s: Subspace<f64> = serde_json::from_str(&read(dir.join(&q.subspace))?)
            .with_context(|| format!("invalid subspace {}", q.subspace))?;
        subspaces.push(s.clone());
    }
    Ok(Bundle {
        network,
        subspaces,
        queries,
        manifest,
    })
}

/// Re-verifies every query, with `mode` or else the bundle's recorded
/// settings (IBP when none were recorded).
pub fn verify_bundle(bundle: &Bundle, mode: Option<&VerifyMode>) -> anyhow::Result<Vec<VerifResult<f64>>> {
    let recorded = match &bundle.manifest.verifier {
        Some(v) => v.mode()?,
        None => VerifyMode::Ibp,
    };
    let mode = mode.unwrap_or(&recorded);
    let mut subs = bundle.subspaces.clone();
    for (s, q) in subs.iter_mut().zip(&bundle.queries) {
        s.class = q.target;
    }
    verify_subspaces(&bundle.network, &subs, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::run_config;

    #[test]
    fn missing_artifacts_are_listed() {
        let run = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let err = export_benchmark(run.path(), out.path()).unwrap_err().to_string();
        assert!(err.contains("network.json") && err.contains("subspaces.jsonl"), "{err}");
        fs::write(run.path().join(artifacts::SUBSPACES), "").unwrap();
        let err = export_benchmark(run.path(), out.path()).unwrap_err().to_string();
        assert!(err.contains("network.json") && !err.contains("subspaces.jsonl"), "{err}");
    }

    #[test]
    fn round_trip_reproduces_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::parse(
            "seed = 2\ncorpus.synth_n = 12\ntrain.epochs = 10\ntrain.hidden = 8\nsubspace.kind = eps_cube\nverify.mode = bab\nverify.max_regions = 32\nverify.time_budget_ms = 0\n",
            dir.path(),
        )
        .unwrap();
        let run = run_config(&cfg).unwrap();
        let out = dir.path().join("bundle");
        let manifest = export_benchmark(&run.dir, &out).unwrap();
        assert_eq!(manifest.queries, 10);
        let bundle = load_bundle(&out).unwrap();
        assert_eq!(bundle.queries.len(), 10);
        let verdicts: Vec<Outcome> = verify_bundle(&bundle, None).unwrap().iter().map(|r| r.outcome()).collect();
        let recorded: Vec<Outcome> = run.results.iter().map(|r| r.status).collect();
        assert_eq!(verdicts, recorded);
        assert_eq!(manifest.verifiability, Some(run.report.verifiability.percent));
    }
}
