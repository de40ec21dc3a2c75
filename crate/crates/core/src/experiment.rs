//! Run and campaign configuration, artifact persistence and the command
//! implementations behind the binary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::archive::GridSpec;
use crate::envs::{EnvKind, EnvSpec, KickerPhysics};
use crate::metrics::{self, CoverageCurve, MetricsError};
use crate::numkit::{mann_whitney_u, Alternative, RankTestResult};
use crate::search::{self, Budget, RunArtifacts, RunSettings, SearchError, Variant, VariantKind};

/// Replaces the configured output directory when set.
pub const OUTPUT_ROOT_VAR: &str = "POMS_OUTPUT_ROOT";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    /// 2 for unusable input, 1 for failures during execution.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse { .. } => 2,
            CliError::Search(SearchError::ConfigInvalid(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Environment constants that may be changed from a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kicker: Option<KickerPhysics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: EnvKind,
    #[serde(default)]
    pub overrides: EnvOverrides,
}

impl EnvConfig {
    pub fn resolve(&self) -> Result<EnvSpec, CliError> {
        let mut env = EnvSpec::by_kind(self.name);
        let o = &self.overrides;
        if let Some(v) = o.episode_length {
            env.episode_length = v;
        }
        if let Some(v) = o.action_clip {
            env.action_clip = v;
        }
        if let Some(v) = o.dt {
            env.dt = v;
        }
        if let Some(v) = &o.grid {
            env.grid = v.clone();
        }
        if let Some(v) = &o.kicker {
            env.kicker = v.clone();
        }
        if let Some(v) = &o.probes {
            env.probes = v.clone();
        }
        env.validate()
            .map_err(|e| CliError::Config(format!("env.overrides: {e}")))?;
        Ok(env)
    }
}

fn default_hidden() -> Vec<usize> {
    vec![16, 16]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
        }
    }
}

/// Settings shared by single runs and campaigns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub budget: Budget,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Write an archive snapshot every this many outer loops; 0 disables.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Rollout worker threads; defaults to the available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    #[serde(flatten)]
    pub common: CommonConfig,
    pub variants: Vec<Variant>,
}

impl CommonConfig {
    fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("seeds must be distinct".into()));
        }
        let b = &self.budget;
        for (name, v) in [
            ("budget.bootstrap", b.bootstrap),
            ("budget.loops", b.loops),
            ("budget.iterations", b.iterations),
            ("budget.batch", b.batch),
        ] {
            if v == 0 {
                return Err(CliError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        self.env.resolve()?;
        Ok(())
    }

    fn settings(&self, variant: &Variant, seed: u64, threads: usize) -> Result<RunSettings, CliError> {
        let env = self.env.resolve()?;
        let shape = env
            .policy_shape(self.policy.hidden.clone())
            .map_err(|e| CliError::Config(format!("policy.hidden: {e}")))?;
        Ok(RunSettings {
            env,
            shape,
            variant: variant.clone(),
            budget: self.budget,
            seed,
            threads,
        })
    }

    fn threads(&self) -> usize {
        self.threads.unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        })
    }

    /// Output directory after applying the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => self.output_dir.clone(),
        }
    }
}

fn validate_variant(v: &Variant, at: &str) -> Result<(), CliError> {
    v.validate().map_err(|e| match e {
        SearchError::ConfigInvalid(msg) => {
            CliError::Config(msg.replacen("variant.", &format!("{at}."), 1))
        }
        other => CliError::Search(other),
    })
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.common.validate()?;
        validate_variant(&self.variant, "variant")
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.common.validate()?;
        if self.variants.len() < 2 {
            return Err(CliError::Config("a campaign needs at least 2 variants".into()));
        }
        for (i, v) in self.variants.iter().enumerate() {
            validate_variant(v, &format!("variants[{i}]"))?;
        }
        let mut kinds: Vec<VariantKind> = self.variants.iter().map(|v| v.kind).collect();
        kinds.sort_unstable();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("variants must have distinct kinds".into()));
        }
        Ok(())
    }
}

const COMMON_KEYS: [&str; 7] = [
    "env",
    "policy",
    "budget",
    "seeds",
    "output_dir",
    "checkpoint_every",
    "threads",
];

/// Parses a top-level config object, rejecting keys outside `COMMON_KEYS`
/// and `extra`.
pub fn parse_config<T: serde::de::DeserializeOwned>(
    text: &str,
    extra: &str,
) -> Result<T, serde_json::Error> {
    use serde::de::Error;
    let value: serde_json::Value = serde_json::from_str(text)?;
    if let Some(obj) = value.as_object() {
        if let Some(k) = obj.keys().find(|k| *k != extra && !COMMON_KEYS.contains(&k.as_str())) {
            return Err(serde_json::Error::custom(format!("unknown field `{k}`")));
        }
    }
    serde_json::from_value(value)
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path, extra: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text, extra).map_err(|e| CliError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = read_config(path, "variant")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_campaign_config(path: &Path) -> Result<CampaignConfig, CliError> {
    let cfg: CampaignConfig = read_config(path, "variants")?;
    cfg.validate()?;
    Ok(cfg)
}

/// SHA-256 of the canonical JSON of `config` with the fields that cannot
/// affect results (output location, thread count) removed.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let mut value = serde_json::to_value(config).expect("config serialises");
    if let Some(obj) = value.as_object_mut() {
        obj.remove("output_dir");
        obj.remove("threads");
    }
    let canonical = serde_json::to_string(&value).expect("value serialises");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub engine_version: String,
    pub config_hash: String,
    pub env: String,
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    pub total_evals_per_run: u64,
    pub files: Vec<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, value).map_err(|e| CliError::Io {
        path: path.to_owned(),
        source: e.into(),
    })?;
    w.flush().map_err(io_err(path))
}

fn write_csv_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), MetricsError>,
{
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(io_err(path))
}

pub fn coverage_file(variant: VariantKind, seed: u64) -> String {
    format!("coverage_{variant}_{seed}.csv")
}

pub fn mixing_file(variant: VariantKind, seed: u64) -> String {
    format!("mixing_{variant}_{seed}.csv")
}

pub fn archive_file(variant: VariantKind, seed: u64) -> String {
    format!("archive_{variant}_{seed}.json")
}

pub fn model_file(variant: VariantKind, seed: u64) -> String {
    format!("model_{variant}_{seed}.json")
}

pub fn finals_file(variant: VariantKind) -> String {
    format!("finals_{variant}.csv")
}

/// Per-variant results of a batch of seeds.
#[derive(Debug, Clone)]
pub struct VariantResults {
    pub variant: VariantKind,
    pub curves: Vec<CoverageCurve>,
    pub mixing: Vec<Vec<f64>>,
}

impl VariantResults {
    pub fn finals(&self) -> Vec<f64> {
        self.curves.iter().map(CoverageCurve::final_coverage).collect()
    }
}

/// Runs every seed of one variant, writing per-seed artifacts as each
/// finishes. Returns the produced file names alongside the results.
fn run_variant(
    common: &CommonConfig,
    variant: &Variant,
    out: &Path,
    progress: bool,
) -> Result<(VariantResults, Vec<String>), CliError> {
    let threads = common.threads();
    let env_name = common.env.name.name();
    let kind = variant.kind;
    let mut files = Vec::new();
    let mut results = VariantResults {
        variant: kind,
        curves: Vec::new(),
        mixing: Vec::new(),
    };
    let mut finals = Vec::new();
    for &seed in &common.seeds {
        let settings = common.settings(variant, seed, threads)?;
        let mut checkpoint_error = None;
        let artifacts: RunArtifacts = search::run(&settings, |summary, archive, _| {
            if progress {
                eprintln!(
                    "{kind} seed {seed}: loop {}/{} evals {} coverage {:.4}",
                    summary.loop_index + 1,
                    common.budget.loops,
                    summary.evals,
                    summary.coverage
                );
            }
            let every = common.checkpoint_every;
            if every > 0 && (summary.loop_index + 1) % every == 0 {
                let name = format!("archive_{kind}_{seed}_loop{}.json", summary.loop_index + 1);
                if let Err(e) = write_json(&out.join(&name), &archive.snapshot()) {
                    checkpoint_error.get_or_insert(e);
                }
            }
        })?;
        if let Some(e) = checkpoint_error {
            return Err(e);
        }
        if common.checkpoint_every > 0 {
            let every = common.checkpoint_every;
            files.extend(
                (1..=common.budget.loops)
                    .filter(|l| l % every == 0)
                    .map(|l| format!("archive_{kind}_{seed}_loop{l}.json")),
            );
        }

        let name = coverage_file(kind, seed);
        write_csv_with(&out.join(&name), |w| metrics::write_coverage_csv(&artifacts.coverage, w))?;
        files.push(name);
        let name = mixing_file(kind, seed);
        write_csv_with(&out.join(&name), |w| metrics::write_mixing_csv(&artifacts.mixing, w))?;
        files.push(name);
        let name = archive_file(kind, seed);
        write_json(&out.join(&name), &artifacts.archive.snapshot())?;
        files.push(name);
        if let Some(model) = &artifacts.model {
            let name = model_file(kind, seed);
            write_json(&out.join(&name), &model.to_checkpoint())?;
            files.push(name);
        }

        let curve = CoverageCurve::new(kind.name(), env_name, seed, artifacts.coverage)?;
        finals.push((seed, curve.final_coverage()));
        results.curves.push(curve);
        results.mixing.push(artifacts.mixing);
    }
    let name = finals_file(kind);
    write_csv_with(&out.join(&name), |w| metrics::write_finals_csv(&finals, w))?;
    files.push(name);
    Ok((results, files))
}

fn prepare_output(common: &CommonConfig) -> Result<PathBuf, CliError> {
    let out = common.output_dir();
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    Ok(out)
}

fn write_manifest<T: Serialize>(
    out: &Path,
    config: &T,
    common: &CommonConfig,
    variants: &[VariantKind],
    mut files: Vec<String>,
) -> Result<Manifest, CliError> {
    files.push("manifest.json".into());
    let manifest = Manifest {
        engine_version: ENGINE_VERSION.into(),
        config_hash: config_hash(config),
        env: common.env.name.name().into(),
        variants: variants.iter().map(|v| v.name().to_owned()).collect(),
        seeds: common.seeds.clone(),
        total_evals_per_run: common.budget.total_evals(),
        files,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Runs every seed of the configured variant. With `progress`, one line per
/// outer loop goes to stderr.
pub fn cmd_run(config: &RunConfig, progress: bool) -> Result<Manifest, CliError> {
    config.validate()?;
    let out = prepare_output(&config.common)?;
    let (_, files) = run_variant(&config.common, &config.variant, &out, progress)?;
    write_manifest(&out, config, &config.common, &[config.variant.kind], files)
}

/// One row of `stats.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub variant_a: String,
    pub variant_b: String,
    /// Absent for composite rows.
    pub u: Option<f64>,
    pub p: f64,
    pub method: String,
}

/// Pairwise one-sided comparisons, each pair once. `mape-iso` is always the
/// second sample; otherwise the earlier variant in the list comes first.
/// With two or more latent-variant vs `mape-iso` pairs, a composite row holds
/// the largest of their p-values.
pub fn pairwise_stats(results: &[VariantResults]) -> Result<Vec<StatsRow>, CliError> {
    let mut rows = Vec::new();
    let mut latent_vs_iso = Vec::new();
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            let (a, b) = if results[i].variant == VariantKind::MapeIso {
                (&results[j], &results[i])
            } else {
                (&results[i], &results[j])
            };
            let r = metrics::compare(&a.finals(), &b.finals())?;
            if a.variant.is_latent() && b.variant == VariantKind::MapeIso {
                latent_vs_iso.push((a.variant, r.p_value));
            }
            rows.push(StatsRow {
                variant_a: a.variant.name().into(),
                variant_b: b.variant.name().into(),
                u: Some(r.u_statistic),
                p: r.p_value,
                method: r.method.to_string(),
            });
        }
    }
    if latent_vs_iso.len() >= 2 {
        let names: Vec<&str> = latent_vs_iso.iter().map(|(k, _)| k.name()).collect();
        rows.push(StatsRow {
            variant_a: format!("max({})", names.join("|")),
            variant_b: VariantKind::MapeIso.name().into(),
            u: None,
            p: latent_vs_iso.iter().map(|&(_, p)| p).fold(0.0, f64::max),
            method: "max-p".into(),
        });
    }
    Ok(rows)
}

pub fn write_summary_csv(path: &Path, results: &[VariantResults]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| CliError::Metrics(e.into());
    w.write_record(["variant", "checkpoint", "median", "q25", "q75"])
        .map_err(csv_err)?;
    for r in results {
        for row in metrics::summarise(&r.curves)?.rows {
            w.write_record([
                r.variant.name().to_owned(),
                row.checkpoint.to_string(),
                row.median.to_string(),
                row.q25.to_string(),
                row.q75.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn write_stats_csv(path: &Path, rows: &[StatsRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| CliError::Metrics(e.into());
    w.write_record(["variant_a", "variant_b", "u", "p", "method"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.variant_a.clone(),
            r.variant_b.clone(),
            r.u.map(|u| u.to_string()).unwrap_or_default(),
            r.p.to_string(),
            r.method.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub struct CampaignOutcome {
    pub manifest: Manifest,
    pub results: Vec<VariantResults>,
    pub stats: Vec<StatsRow>,
}

pub fn cmd_compare(config: &CampaignConfig, progress: bool) -> Result<CampaignOutcome, CliError> {
    config.validate()?;
    let out = prepare_output(&config.common)?;
    let mut results = Vec::new();
    let mut files = Vec::new();
    for variant in &config.variants {
        let (r, f) = run_variant(&config.common, variant, &out, progress)?;
        results.push(r);
        files.extend(f);
    }
    write_summary_csv(&out.join("summary.csv"), &results)?;
    files.push("summary.csv".into());
    let mixing_rows: Vec<(VariantKind, Vec<metrics::SummaryRow>)> = results
        .iter()
        .filter(|r| r.variant.is_latent())
        .map(|r| (r.variant, metrics::summarise_mixing(&r.mixing)))
        .collect();
    if !mixing_rows.is_empty() {
        let path = out.join("mixing_summary.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        let csv_err = |e: csv::Error| CliError::Metrics(e.into());
        w.write_record(["variant", "loop", "median", "q25", "q75"])
            .map_err(csv_err)?;
        for (kind, rows) in &mixing_rows {
            for row in rows {
                w.write_record([
                    kind.name().to_owned(),
                    row.checkpoint.to_string(),
                    row.median.to_string(),
                    row.q25.to_string(),
                    row.q75.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(io_err(&path))?;
        files.push("mixing_summary.csv".into());
    }
    let stats = pairwise_stats(&results)?;
    write_stats_csv(&out.join("stats.csv"), &stats)?;
    files.push("stats.csv".into());
    let kinds: Vec<VariantKind> = config.variants.iter().map(|v| v.kind).collect();
    let manifest = write_manifest(&out, config, &config.common, &kinds, files)?;
    Ok(CampaignOutcome {
        manifest,
        results,
        stats,
    })
}

pub fn read_finals(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    metrics::read_final_coverages(file).map_err(|e| CliError::Parse {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Rank test of the final coverages in two files.
pub fn cmd_stats(a: &Path, b: &Path, alternative: Alternative) -> Result<RankTestResult, CliError> {
    let first = read_finals(a)?;
    let second = read_finals(b)?;
    mann_whitney_u(&first, &second, alternative).map_err(|e| CliError::Parse {
        path: a.to_owned(),
        message: e.to_string(),
    })
}
