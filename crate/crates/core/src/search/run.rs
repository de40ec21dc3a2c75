//! The outer search loop for every variant.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::operators::{mutate_iso, mutate_isolinedd};
use super::region::{region_mutate, Branch, BranchRule, LatentNoise, RegionContext};
use super::streams::{stream, StreamRng};
use super::SearchError;
use crate::archive::{Archive, BehaviourDescriptor};
use crate::envs::{evaluate, EnvSpec};
use crate::latent::{
    range_covariance, AeParams, LatentError, LatentModel, PcaModel, TrainOptions, TrainReport,
};
use crate::numkit::Matrix;
use crate::policy::{init_glorot, init_uniform, ParamVector, PolicyShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantKind {
    Poms,
    PomsPca,
    PomsNoJacobian,
    MapeIso,
    MapeIsolinedd,
    PsUniform,
    PsGlorot,
}

impl VariantKind {
    pub const ALL: [VariantKind; 7] = [
        VariantKind::Poms,
        VariantKind::PomsPca,
        VariantKind::PomsNoJacobian,
        VariantKind::MapeIso,
        VariantKind::MapeIsolinedd,
        VariantKind::PsUniform,
        VariantKind::PsGlorot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Poms => "poms",
            VariantKind::PomsPca => "poms-pca",
            VariantKind::PomsNoJacobian => "poms-no-jacobian",
            VariantKind::MapeIso => "mape-iso",
            VariantKind::MapeIsolinedd => "mape-isolinedd",
            VariantKind::PsUniform => "ps-uniform",
            VariantKind::PsGlorot => "ps-glorot",
        }
    }

    /// Variants that mix latent and parameter-space mutations.
    pub fn is_latent(self) -> bool {
        matches!(
            self,
            VariantKind::Poms | VariantKind::PomsPca | VariantKind::PomsNoJacobian
        )
    }

    pub fn uses_autoencoder(self) -> bool {
        matches!(self, VariantKind::Poms | VariantKind::PomsNoJacobian)
    }

    pub fn requires_sigma_theta(self) -> bool {
        self.is_latent() || self == VariantKind::MapeIso
    }

    /// Variants that sample fresh policies instead of mutating elites.
    pub fn is_policy_search(self) -> bool {
        matches!(self, VariantKind::PsUniform | VariantKind::PsGlorot)
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = SearchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SearchError::ConfigInvalid(format!("unknown variant '{s}'")))
    }
}

fn default_sigma_iso() -> f64 {
    0.01
}

fn default_sigma_line() -> f64 {
    0.2
}

fn default_hidden_dim() -> usize {
    64
}

fn default_latent_dim() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub kind: VariantKind,
    /// Variance of the isotropic operator and scale of the latent noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_theta: Option<f64>,
    /// Isotropic standard deviation of the line operator.
    #[serde(default = "default_sigma_iso")]
    pub sigma_iso: f64,
    /// Directional standard deviation of the line operator.
    #[serde(default = "default_sigma_line")]
    pub sigma_line: f64,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default)]
    pub train: TrainOptions,
}

impl Variant {
    pub fn new(kind: VariantKind, sigma_theta: Option<f64>) -> Self {
        Self {
            kind,
            sigma_theta,
            sigma_iso: default_sigma_iso(),
            sigma_line: default_sigma_line(),
            hidden_dim: default_hidden_dim(),
            latent_dim: default_latent_dim(),
            train: TrainOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.kind.requires_sigma_theta() {
            match self.sigma_theta {
                None => {
                    return Err(SearchError::ConfigInvalid(format!(
                        "variant.sigma_theta is required for {}",
                        self.kind
                    )))
                }
                Some(s) if !(s > 0.0) || !s.is_finite() => {
                    return Err(SearchError::ConfigInvalid(format!(
                        "variant.sigma_theta must be positive, got {s}"
                    )))
                }
                _ => {}
            }
        }
        if self.kind == VariantKind::MapeIsolinedd {
            for (name, v) in [("sigma_iso", self.sigma_iso), ("sigma_line", self.sigma_line)] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(SearchError::ConfigInvalid(format!(
                        "variant.{name} must be non-negative, got {v}"
                    )));
                }
            }
        }
        if self.kind.is_latent() && (self.latent_dim == 0 || self.hidden_dim == 0) {
            return Err(SearchError::ConfigInvalid(
                "variant.hidden_dim and variant.latent_dim must be positive".into(),
            ));
        }
        Ok(())
    }

    fn sigma(&self) -> f64 {
        self.sigma_theta.unwrap_or(0.0)
    }
}

/// Evaluation schedule: a uniform bootstrap, then `loops` outer loops of
/// `iterations` batches of `batch` candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub bootstrap: usize,
    pub loops: usize,
    pub iterations: usize,
    pub batch: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            bootstrap: 500,
            loops: 10,
            iterations: 20,
            batch: 60,
        }
    }
}

impl Budget {
    pub fn total_evals(&self) -> u64 {
        (self.bootstrap + self.loops * self.iterations * self.batch) as u64
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.bootstrap == 0 {
            return Err(SearchError::ConfigInvalid("budget.bootstrap must be at least 1".into()));
        }
        if self.loops > 0 && (self.iterations == 0 || self.batch == 0) {
            return Err(SearchError::ConfigInvalid(
                "budget.iterations and budget.batch must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunSettings {
    pub env: EnvSpec,
    pub shape: PolicyShape,
    pub variant: Variant,
    pub budget: Budget,
    pub seed: u64,
    /// Worker threads for rollouts; results do not depend on it.
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub evals: u64,
    pub coverage: f64,
}

/// State reported at the end of every outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSummary {
    /// Zero-based.
    pub loop_index: usize,
    pub evals: u64,
    pub coverage: f64,
    pub mixing_ratio: Option<f64>,
    /// Threshold for the next loop's branch test.
    pub eps_recn: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub coverage: Vec<CoveragePoint>,
    /// Per-loop fraction of candidates mutated in parameter space; empty for
    /// the policy-search baselines.
    pub mixing: Vec<f64>,
    pub archive: Archive,
    pub model: Option<LatentModel>,
    pub evals: u64,
    /// Rollouts that failed and were not inserted.
    pub invalid_evals: u64,
    /// Latent mutations replaced by isotropic ones after a failed factorisation.
    pub fallbacks: u64,
    pub train_reports: Vec<TrainReport>,
}

struct Evaluator<'a> {
    env: &'a EnvSpec,
    shape: &'a PolicyShape,
    pool: rayon::ThreadPool,
}

impl Evaluator<'_> {
    fn descriptors(&self, candidates: &[Option<ParamVector>]) -> Vec<Option<BehaviourDescriptor>> {
        self.pool.install(|| {
            candidates
                .par_iter()
                .map(|c| {
                    c.as_ref()
                        .and_then(|p| evaluate(self.env, self.shape, p).ok())
                        .map(|r| r.bd)
                })
                .collect()
        })
    }
}

struct Search<'a> {
    settings: &'a RunSettings,
    archive: Archive,
    select_rng: StreamRng,
    evals: u64,
    invalid: u64,
    coverage: Vec<CoveragePoint>,
}

impl Search<'_> {
    fn mutation_stream(&self, index: u64) -> StreamRng {
        let label = format!("{}/mutate", self.settings.variant.kind);
        stream(self.settings.seed, &label, index)
    }

    /// Inserts in submission order. Coin flips come from `insert_rng`, or the
    /// selection stream when `None`.
    fn commit(
        &mut self,
        candidates: Vec<Option<ParamVector>>,
        bds: Vec<Option<BehaviourDescriptor>>,
        insert_rng: Option<&mut StreamRng>,
    ) {
        let rng = match insert_rng {
            Some(r) => r,
            None => &mut self.select_rng,
        };
        for (c, bd) in candidates.into_iter().zip(bds) {
            let index = self.evals;
            self.evals += 1;
            match (c, bd) {
                (Some(p), Some(bd)) => {
                    self.archive.insert(p, &bd, index, rng);
                }
                _ => self.invalid += 1,
            }
        }
        self.coverage.push(CoveragePoint {
            evals: self.evals,
            coverage: self.archive.coverage(),
        });
    }
}

/// Latent model plus the quantities fixed for one search phase.
struct LatentState {
    model: Option<LatentModel>,
    eps_recn: Option<f64>,
    range_cov: Option<Matrix>,
}

/// Runs the full search and returns its artifacts. `observer` is called after
/// every outer loop with the live archive.
pub fn run<F>(settings: &RunSettings, mut observer: F) -> Result<RunArtifacts, SearchError>
where
    F: FnMut(&LoopSummary, &Archive, Option<&LatentModel>),
{
    let variant = &settings.variant;
    variant.validate()?;
    settings.budget.validate()?;
    settings.env.validate()?;
    settings.shape.validate()?;
    if settings.shape.input_dim != settings.env.observation_dim
        || settings.shape.output_dim != settings.env.action_dim
    {
        return Err(SearchError::ConfigInvalid(format!(
            "policy maps {} -> {} but the environment needs {} -> {}",
            settings.shape.input_dim,
            settings.shape.output_dim,
            settings.env.observation_dim,
            settings.env.action_dim
        )));
    }
    let evaluator = Evaluator {
        env: &settings.env,
        shape: &settings.shape,
        pool: rayon::ThreadPoolBuilder::new()
            .num_threads(settings.threads.max(1))
            .build()
            .map_err(|e| SearchError::ConfigInvalid(format!("thread pool: {e}")))?,
    };
    let kind = variant.kind;
    let p = settings.shape.param_count();
    let seed = settings.seed;

    let mut search = Search {
        settings,
        archive: Archive::new(settings.env.grid.clone()),
        select_rng: stream(seed, &format!("{kind}/select"), 0),
        evals: 0,
        invalid: 0,
        coverage: Vec::new(),
    };

    // bootstrap, shared by every variant
    let boot: Vec<Option<ParamVector>> = (0..settings.budget.bootstrap as u64)
        .map(|i| Some(init_uniform(&settings.shape, &mut stream(seed, "bootstrap", i))))
        .collect();
    let bds = evaluator.descriptors(&boot);
    search.commit(boot, bds, Some(&mut stream(seed, "bootstrap/insert", 0)));

    let mut latent = LatentState {
        model: None,
        eps_recn: None,
        range_cov: None,
    };
    if kind.uses_autoencoder() {
        let mut init_rng = stream(seed, &format!("{kind}/init"), 0);
        latent.model = Some(LatentModel::Autoencoder(AeParams::glorot(
            p,
            variant.hidden_dim,
            variant.latent_dim,
            &mut init_rng,
        )));
        refresh_range(kind, &mut latent, &search.archive)?;
    } else if kind == VariantKind::PomsPca {
        latent.model = fit_pca(&search.archive, variant.latent_dim, p);
    }

    let mut mixing = Vec::new();
    let mut fallbacks = 0u64;
    let mut train_reports = Vec::new();
    for loop_index in 0..settings.budget.loops {
        let mut parameter_count = 0usize;
        let mut mutated = 0usize;
        for _ in 0..settings.budget.iterations {
            let batch = settings.budget.batch;
            let first = search.evals;
            let candidates: Vec<Option<ParamVector>> = if kind.is_policy_search() {
                (0..batch as u64)
                    .map(|k| {
                        let mut rng = search.mutation_stream(first + k);
                        Some(match kind {
                            VariantKind::PsGlorot => init_glorot(&settings.shape, &mut rng),
                            _ => init_uniform(&settings.shape, &mut rng),
                        })
                    })
                    .collect()
            } else {
                let parents = search.archive.sample_batch(batch, &mut search.select_rng)?;
                let partners = match kind {
                    VariantKind::MapeIsolinedd => {
                        Some(search.archive.sample_batch(batch, &mut search.select_rng)?)
                    }
                    _ => None,
                };
                let rule = if loop_index == 0 {
                    BranchRule::FairCoin
                } else {
                    BranchRule::Threshold(latent.eps_recn.unwrap_or(0.0))
                };
                let outcomes: Vec<(Result<Vec<f64>, SearchError>, Branch, bool)> =
                    evaluator.pool.install(|| {
                        parents
                            .par_iter()
                            .enumerate()
                            .map(|(k, parent)| {
                                let mut rng = search.mutation_stream(first + k as u64);
                                let theta = parent.as_slice();
                                match (kind, &latent.model) {
                                    (VariantKind::MapeIsolinedd, _) => {
                                        let partner = &partners.as_ref().expect("partners")[k];
                                        let r = mutate_isolinedd(
                                            theta,
                                            partner.as_slice(),
                                            variant.sigma_iso,
                                            variant.sigma_line,
                                            &mut rng,
                                        );
                                        (r, Branch::Parameter, false)
                                    }
                                    (kd, Some(model)) if kd.is_latent() => {
                                        let noise = match &latent.range_cov {
                                            Some(cov) if kind == VariantKind::PomsNoJacobian => {
                                                LatentNoise::Range(cov)
                                            }
                                            _ => LatentNoise::Jacobian,
                                        };
                                        let ctx = RegionContext {
                                            model,
                                            rule,
                                            noise,
                                            sigma_theta: variant.sigma(),
                                        };
                                        let m = region_mutate(theta, &ctx, &mut rng);
                                        (m.params, m.branch, m.fell_back)
                                    }
                                    _ => (
                                        mutate_iso(theta, variant.sigma(), &mut rng),
                                        Branch::Parameter,
                                        false,
                                    ),
                                }
                            })
                            .collect()
                    });
                outcomes
                    .into_iter()
                    .map(|(r, branch, fell_back)| {
                        mutated += 1;
                        if branch == Branch::Parameter {
                            parameter_count += 1;
                        }
                        if fell_back {
                            fallbacks += 1;
                        }
                        r.ok().and_then(|v| ParamVector::new(&settings.shape, v).ok())
                    })
                    .collect()
            };
            let bds = evaluator.descriptors(&candidates);
            search.commit(candidates, bds, None);
        }
        let ratio = (mutated > 0).then(|| parameter_count as f64 / mutated as f64);
        if let Some(r) = ratio {
            mixing.push(r);
        }

        // manifold learning phase
        if kind.uses_autoencoder() {
            let collection = search.archive.params();
            let mut train_rng = stream(seed, &format!("{kind}/train"), loop_index as u64);
            let model = latent.model.as_mut().expect("autoencoder");
            let before = model.clone();
            match model.train(&collection, &variant.train, &mut train_rng) {
                Ok(report) => {
                    latent.eps_recn = Some(report.mean_recon_error_over_collection);
                    train_reports.push(report);
                }
                Err(LatentError::DivergedLoss(report)) => {
                    *model = before;
                    latent.eps_recn = Some(model.mean_reconstruction_error(&collection)?);
                    train_reports.push(*report);
                }
                Err(e) => return Err(e.into()),
            }
            refresh_range(kind, &mut latent, &search.archive)?;
        } else if kind == VariantKind::PomsPca {
            if let Some(model) = fit_pca(&search.archive, variant.latent_dim, p) {
                latent.model = Some(model);
            }
            if let Some(model) = &latent.model {
                latent.eps_recn = Some(model.mean_reconstruction_error(&search.archive.params())?);
            }
        }

        let summary = LoopSummary {
            loop_index,
            evals: search.evals,
            coverage: search.archive.coverage(),
            mixing_ratio: ratio,
            eps_recn: latent.eps_recn,
        };
        observer(&summary, &search.archive, latent.model.as_ref());
    }

    Ok(RunArtifacts {
        coverage: search.coverage,
        mixing,
        archive: search.archive,
        model: latent.model,
        evals: search.evals,
        invalid_evals: search.invalid,
        fallbacks,
        train_reports,
    })
}

fn refresh_range(
    kind: VariantKind,
    latent: &mut LatentState,
    archive: &Archive,
) -> Result<(), SearchError> {
    if kind != VariantKind::PomsNoJacobian {
        return Ok(());
    }
    if let Some(model) = &latent.model {
        let codes = model.encode_all(&archive.params())?;
        latent.range_cov = Some(range_covariance(&codes)?);
    }
    Ok(())
}

fn fit_pca(archive: &Archive, latent_dim: usize, param_dim: usize) -> Option<LatentModel> {
    let collection = archive.params();
    let m = latent_dim.min(param_dim).min(collection.len());
    if m == 0 {
        return None;
    }
    PcaModel::fit(&collection, m).ok().map(LatentModel::Pca)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{bd_to_cell, GridSpec};
    use crate::envs::EnvKind;

    fn probe_settings(kind: VariantKind, budget: Budget, seed: u64) -> RunSettings {
        let env = EnvSpec::probe_bd();
        let shape = env.policy_shape(vec![]).unwrap();
        let mut variant = Variant::new(kind, Some(0.05));
        variant.hidden_dim = 8;
        variant.latent_dim = 2;
        variant.train.max_epochs = 30;
        variant.train.learning_rate = 1e-3;
        RunSettings {
            env,
            shape,
            variant,
            budget,
            seed,
            threads: 1,
        }
    }

    fn small_budget() -> Budget {
        Budget {
            bootstrap: 40,
            loops: 3,
            iterations: 2,
            batch: 10,
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for k in VariantKind::ALL {
            assert_eq!(k.name().parse::<VariantKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("poms-x".parse::<VariantKind>().is_err());
    }

    #[test]
    fn missing_sigma_is_rejected() {
        let err = Variant::new(VariantKind::Poms, None).validate().unwrap_err();
        assert!(err.to_string().contains("variant.sigma_theta"));
        assert!(Variant::new(VariantKind::MapeIso, Some(0.0)).validate().is_err());
        assert!(Variant::new(VariantKind::PsUniform, None).validate().is_ok());
        assert!(Variant::new(VariantKind::MapeIsolinedd, None).validate().is_ok());
    }

    #[test]
    fn eval_accounting_is_exact() {
        for kind in VariantKind::ALL {
            let budget = small_budget();
            let mut loops_seen = 0;
            let art = run(&probe_settings(kind, budget, 3), |s, _, _| {
                loops_seen += 1;
                assert!(s.evals <= budget.total_evals());
            })
            .unwrap();
            assert_eq!(loops_seen, budget.loops, "{kind}");
            assert_eq!(art.evals, budget.total_evals(), "{kind}");
            assert_eq!(art.coverage.last().unwrap().evals, budget.total_evals());
            assert_eq!(art.coverage.len(), 1 + budget.loops * budget.iterations);
            assert!(art.coverage.windows(2).all(|w| w[0].evals < w[1].evals));
            assert!(art.coverage.windows(2).all(|w| w[0].coverage <= w[1].coverage));
            assert!(art.mixing.iter().all(|r| (0.0..=1.0).contains(r)));
            if kind.is_policy_search() {
                assert!(art.mixing.is_empty());
            } else {
                assert_eq!(art.mixing.len(), budget.loops);
            }
        }
    }

    #[test]
    fn bootstrap_only_matches_for_every_variant() {
        let budget = Budget {
            bootstrap: 50,
            loops: 0,
            iterations: 0,
            batch: 0,
        };
        let reference = run(&probe_settings(VariantKind::MapeIso, budget, 9), |_, _, _| {}).unwrap();
        // independent replay of the bootstrap
        let settings = probe_settings(VariantKind::MapeIso, budget, 9);
        let mut cells = std::collections::HashSet::new();
        for i in 0..50 {
            let theta = init_uniform(&settings.shape, &mut stream(9, "bootstrap", i));
            let r = evaluate(&settings.env, &settings.shape, &theta).unwrap();
            cells.insert(bd_to_cell(&r.bd.raw, &settings.env.grid).unwrap());
        }
        let total = GridSpec::total_cells(&settings.env.grid) as f64;
        assert_eq!(reference.archive.coverage(), cells.len() as f64 / total);
        for kind in VariantKind::ALL {
            let art = run(&probe_settings(kind, budget, 9), |_, _, _| {}).unwrap();
            assert_eq!(art.archive.snapshot(), reference.archive.snapshot());
        }
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        for kind in [VariantKind::Poms, VariantKind::PomsNoJacobian, VariantKind::MapeIsolinedd] {
            let a = run(&probe_settings(kind, small_budget(), 11), |_, _, _| {}).unwrap();
            let mut s = probe_settings(kind, small_budget(), 11);
            s.threads = 3;
            let b = run(&s, |_, _, _| {}).unwrap();
            assert_eq!(a.coverage, b.coverage);
            assert_eq!(a.mixing, b.mixing);
            assert_eq!(
                serde_json::to_string(&a.archive.snapshot()).unwrap(),
                serde_json::to_string(&b.archive.snapshot()).unwrap()
            );
            let c = run(&probe_settings(kind, small_budget(), 12), |_, _, _| {}).unwrap();
            assert_ne!(a.archive.snapshot(), c.archive.snapshot());
        }
    }

    #[test]
    fn larger_budget_never_lowers_coverage() {
        for kind in [VariantKind::MapeIso, VariantKind::PsUniform, VariantKind::PomsPca] {
            let small = run(&probe_settings(kind, small_budget(), 5), |_, _, _| {}).unwrap();
            let mut bigger = small_budget();
            bigger.loops = 5;
            let large = run(&probe_settings(kind, bigger, 5), |_, _, _| {}).unwrap();
            assert!(large.archive.coverage() >= small.archive.coverage(), "{kind}");
            // the shorter run is a prefix of the longer one
            assert_eq!(&large.coverage[..small.coverage.len()], &small.coverage[..]);
        }
    }

    #[test]
    fn loop_one_mixing_is_a_fair_coin() {
        let budget = Budget {
            bootstrap: 40,
            loops: 1,
            iterations: 10,
            batch: 40,
        };
        let art = run(&probe_settings(VariantKind::Poms, budget, 21), |_, _, _| {}).unwrap();
        let n = 400.0f64;
        let sd = (0.25 / n).sqrt();
        assert!((art.mixing[0] - 0.5).abs() < 3.0 * sd, "{}", art.mixing[0]);
        assert_eq!(art.train_reports.len(), 1);
    }

    #[test]
    fn isotropic_variants_report_full_parameter_mixing() {
        for kind in [VariantKind::MapeIso, VariantKind::MapeIsolinedd] {
            let art = run(&probe_settings(kind, small_budget(), 2), |_, _, _| {}).unwrap();
            assert!(art.mixing.iter().all(|&r| r == 1.0));
        }
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let mut s = probe_settings(VariantKind::MapeIso, small_budget(), 0);
        s.budget.bootstrap = 0;
        assert!(matches!(run(&s, |_, _, _| {}), Err(SearchError::ConfigInvalid(_))));
        let mut s = probe_settings(VariantKind::MapeIso, small_budget(), 0);
        s.shape = EnvSpec::by_kind(EnvKind::PointKicker).policy_shape(vec![4]).unwrap();
        assert!(run(&s, |_, _, _| {}).is_err());
    }
}
