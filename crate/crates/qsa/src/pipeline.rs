//! Cooling schedules, partition-function estimation, the classical baseline,
//! resource accounting and the experiment runner behind the CLI.

use crate::amplitude::{nduae, ndae, AmplitudeInstance, EstimatorContext};
use crate::gibbs::{
    chebyshev_constant, fidelity, glauber_chain, schedule_ratio_variable, spectral_gap, Beta, Direction, GibbsModel,
};
use crate::mean::{medi, qestim, FiniteRandomVariable, ProductConfig, ProductOutcome, ProductPlan, ProductStage};
use crate::phase::{upe, OracleMode, PhaseInstance, StageConfig};
use crate::qcore::RandomSource;
use crate::stats::{claim_test, summarize};
use crate::{precondition, Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// Walk steps charged per reflection are ⌈c/√δ⌉.
pub const DEFAULT_WALK_CONSTANT: f64 = 2.0;

/// Schedule binary searches stop at this width in β.
pub const BETA_TOL: f64 = 1e-9;

/// Success-probability claim and the significance of its binomial test.
pub const SUCCESS_CLAIM: f64 = 2.0 / 3.0;
pub const SUCCESS_ALPHA: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct CoolingSchedule {
    pub betas: Vec<Beta>,
    pub b: f64,
    pub eps: f64,
    pub chebyshev: Vec<f64>,
    pub fidelity: Vec<f64>,
    /// Z(β₀), known in closed form.
    pub start_partition: f64,
    /// The start is a finite β standing in for β = ∞, with Z(β₀) taken as
    /// Z(∞); the induced relative bias is at most ε/8.
    pub start_is_proxy: bool,
}

impl CoolingSchedule {
    pub fn len(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Re-checks every step against both schedule conditions.
    pub fn verify(&self, model: &GibbsModel) -> Result<()> {
        for w in self.betas.windows(2) {
            let c = chebyshev_constant(model, w[0], w[1])?;
            let f = fidelity(model, w[0], w[1])?;
            if c > self.b * (1.0 + 1e-12) || f < (1.0 / self.b) * (1.0 - 1e-12) {
                return Err(Error::Schedule(format!(
                    "step {} -> {} violates the bounds (chebyshev {c}, fidelity {f})",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    pub fn ratio_variables(&self, model: &GibbsModel) -> Result<Vec<FiniteRandomVariable>> {
        self.betas.windows(2).map(|w| schedule_ratio_variable(model, w[0], w[1])).collect()
    }

    /// Z(β₀)·Π E[Xᵢ] from exact stage means.
    pub fn telescoping_product(&self, model: &GibbsModel) -> Result<f64> {
        let start = model.partition(self.betas[0])?;
        Ok(self.ratio_variables(model)?.iter().fold(start, |acc, x| acc * x.mean()))
    }
}

/// Default annealing target: β = ∞ forward, β = 0 backward. Ferromagnetic
/// models have no default.
pub fn default_target(model: &GibbsModel) -> Option<Beta> {
    match model.direction {
        Direction::Forward => Some(Beta::Infinite),
        Direction::Backward => Some(Beta::Finite(0.0)),
        Direction::Ferromagnetic => None,
    }
}

/// Greedy schedule certified against the exact partition function.
///
/// From each βᵢ the next temperature is the furthest one (to within
/// [`BETA_TOL`]) whose ratio variable is B-Chebyshev and whose Gibbs state
/// keeps fidelity ≥ 1/B. Towards β = ∞ the walk stops at the first β with
/// Z(β) ≤ (1 + ε/8)·Z(∞) and then appends ∞. Backward models start at that
/// β and walk down to the target.
pub fn generate_schedule(model: &GibbsModel, b: f64, eps: f64, target: Option<Beta>) -> Result<CoolingSchedule> {
    if b <= 1.0 {
        return precondition("schedule needs B > 1");
    }
    if !(eps > 0.0 && eps < 1.0) {
        return precondition(format!("eps = {eps} outside (0,1)"));
    }
    let target = target
        .or_else(|| default_target(model))
        .ok_or_else(|| Error::Schedule("ferromagnetic models need a finite target β".into()))?;
    let ok = |from: f64, to: f64| -> Result<bool> {
        let (a, c) = (Beta::Finite(from), Beta::Finite(to));
        Ok(chebyshev_constant(model, a, c)? <= b && fidelity(model, a, c)? >= 1.0 / b)
    };
    let furthest = |from: f64, limit: f64| -> Result<f64> {
        if ok(from, limit)? {
            return Ok(limit);
        }
        let (mut good, mut bad) = (from, limit);
        while (bad - good).abs() > BETA_TOL {
            let mid = 0.5 * (good + bad);
            if ok(from, mid)? {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Ok(good)
    };
    let walk = |start: f64, limit: f64| -> Result<Vec<f64>> {
        let mut betas = vec![start];
        let mut cur = start;
        while cur != limit {
            let next = furthest(cur, limit)?;
            if (next - cur).abs() < BETA_TOL / 2.0 {
                return Err(Error::Schedule(format!("no admissible step from β = {cur}")));
            }
            betas.push(next);
            cur = next;
            if betas.len() > 100_000 {
                return Err(Error::Schedule("schedule does not terminate".into()));
            }
        }
        Ok(betas)
    };
    let (betas, start_partition, start_is_proxy) = match (model.direction, target) {
        (Direction::Forward, Beta::Infinite) => {
            let stop = termination_beta(model, eps)?;
            let mut betas: Vec<Beta> = walk(0.0, stop)?.into_iter().map(Beta::Finite).collect();
            betas.push(Beta::Infinite);
            (betas, model.size() as f64, false)
        }
        (Direction::Forward | Direction::Ferromagnetic, Beta::Finite(t)) if t >= 0.0 => {
            (walk(0.0, t)?.into_iter().map(Beta::Finite).collect(), model.size() as f64, false)
        }
        (Direction::Backward, Beta::Finite(t)) if t >= 0.0 => {
            let start = termination_beta(model, eps)?.max(t);
            let z_inf = model.partition(Beta::Infinite).map_err(|e| Error::Schedule(e.to_string()))?;
            (walk(start, t)?.into_iter().map(Beta::Finite).collect(), z_inf, start > t)
        }
        (dir, tgt) => return Err(Error::Schedule(format!("target β = {tgt} unsupported for {dir:?} models"))),
    };
    let mut chebyshev = Vec::new();
    let mut fid = Vec::new();
    for w in betas.windows(2) {
        chebyshev.push(chebyshev_constant(model, w[0], w[1])?);
        fid.push(fidelity(model, w[0], w[1])?);
    }
    let schedule = CoolingSchedule { betas, b, eps, chebyshev, fidelity: fid, start_partition, start_is_proxy };
    schedule.verify(model)?;
    Ok(schedule)
}

/// Smallest β (to within [`BETA_TOL`]) with Z(β) ≤ (1 + ε/8)·Z(∞).
fn termination_beta(model: &GibbsModel, eps: f64) -> Result<f64> {
    let z_inf = model.partition(Beta::Infinite).map_err(|e| Error::Schedule(e.to_string()))?;
    let bound = (1.0 + eps / 8.0) * z_inf;
    let done = |beta: f64| -> Result<bool> { Ok(model.partition(Beta::Finite(beta))? <= bound) };
    if done(0.0)? {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while !done(hi)? {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Schedule("Z(β) does not approach Z(∞); direction mismatch".into()));
        }
    }
    let mut lo = 0.0;
    while hi - lo > BETA_TOL {
        let mid = 0.5 * (lo + hi);
        if done(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResourceLedger {
    /// Reflections charged while the state sits at each schedule temperature.
    pub reflections_per_stage: Vec<u128>,
    pub reflections: u128,
    pub controlled_ops: u128,
    /// Modeled walk steps; absent when some stage has no computable gap.
    pub walk_steps: Option<u128>,
    pub copies: u64,
    pub restoration_failures: u64,
    /// Classical samples drawn (baseline only).
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageDiagnostic {
    pub beta: String,
    pub median: f64,
    pub sigma_tilde: f64,
    pub estimate: f64,
    pub true_mean: f64,
    pub medi_reflections: u128,
    pub qestim_reflections: u128,
    pub anneal_reflections: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub truth: Option<f64>,
    pub rel_error: Option<f64>,
    pub success: Option<bool>,
    pub ledger: ResourceLedger,
    pub stages: Vec<StageDiagnostic>,
}

impl EstimateReport {
    pub fn new(estimate: f64, truth: Option<f64>, eps: f64, ledger: ResourceLedger, stages: Vec<StageDiagnostic>) -> Self {
        let rel_error = truth.map(|z| relative_error(estimate, z));
        Self { estimate, truth, rel_error, success: rel_error.map(|r| r <= eps), ledger, stages }
    }
}

/// |x − truth|/|truth|, or |x − truth| when the truth is zero.
pub fn relative_error(x: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        (x - truth).abs()
    } else {
        (x - truth).abs() / truth.abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionConfig {
    pub b: f64,
    pub target: Option<Beta>,
    pub averaging_scale: f64,
    pub walk_constant: f64,
    pub atom_cap: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            b: std::f64::consts::E.powi(2),
            target: None,
            averaging_scale: 1.0,
            walk_constant: DEFAULT_WALK_CONSTANT,
            atom_cap: crate::mean::DEFAULT_ATOM_CAP,
        }
    }
}

/// Partition-function estimator with its schedule and averaged stage tables
/// prepared once, so repetitions only pay for sampling.
#[derive(Clone, Debug)]
pub struct PartitionPlan {
    pub schedule: CoolingSchedule,
    pub product: ProductPlan,
    /// Spectral gap of the Glauber chain at each stage temperature.
    pub gaps: Vec<Option<f64>>,
    pub truth: f64,
    pub eps: f64,
    pub walk_constant: f64,
}

impl PartitionPlan {
    pub fn new(model: &GibbsModel, eps: f64, config: &PartitionConfig) -> Result<Self> {
        let schedule = generate_schedule(model, config.b, eps, config.target)?;
        let target = *schedule.betas.last().expect("non-empty schedule");
        let truth = model.partition(target)?;
        let vars = schedule.ratio_variables(model)?;
        let stages = vars
            .into_iter()
            .enumerate()
            .map(|(i, variable)| {
                let next = schedule.fidelity.get(i + 1).map(|_| fidelity(model, schedule.betas[i], schedule.betas[i + 1]));
                Ok(ProductStage { variable, fidelity_to_next: next.transpose()? })
            })
            .collect::<Result<Vec<_>>>()?;
        let product = ProductPlan::new(
            stages,
            config.b,
            eps,
            ProductConfig { averaging_scale: config.averaging_scale, atom_cap: config.atom_cap },
        )?;
        let gaps = schedule.betas[..schedule.len()]
            .iter()
            .map(|&beta| glauber_chain(model, beta).and_then(|c| spectral_gap(&c)).ok().filter(|&d| d > 0.0))
            .collect();
        Ok(Self { schedule, product, gaps, truth, eps, walk_constant: config.walk_constant })
    }

    pub fn run(&self, ctx: &EstimatorContext, rng: &mut RandomSource) -> Result<EstimateReport> {
        let out = self.product.run(ctx, rng)?;
        let estimate = self.schedule.start_partition * out.estimate;
        let ledger = product_ledger(&out, Some((&self.gaps, self.walk_constant)));
        let stages = stage_diagnostics(&out, &self.schedule.betas);
        Ok(EstimateReport::new(estimate, Some(self.truth), self.eps, ledger, stages))
    }
}

/// One-shot partition-function estimate.
pub fn estimate_partition(
    model: &GibbsModel,
    eps: f64,
    ctx: &EstimatorContext,
    rng: &mut RandomSource,
    config: &PartitionConfig,
) -> Result<EstimateReport> {
    PartitionPlan::new(model, eps, config)?.run(ctx, rng)
}

/// Walk steps for `reflections` at a temperature with gap δ.
pub fn walk_steps(reflections: u128, delta: f64, c: f64) -> u128 {
    reflections * (c / delta.sqrt()).ceil() as u128
}

pub fn product_ledger(out: &ProductOutcome, gaps: Option<(&[Option<f64>], f64)>) -> ResourceLedger {
    let per_stage: Vec<u128> = out.stages.iter().map(|s| s.reflections()).collect();
    let walk = gaps.and_then(|(gaps, c)| {
        per_stage.iter().zip(gaps).map(|(&r, g)| g.map(|d| walk_steps(r, d, c))).sum::<Option<u128>>()
    });
    ResourceLedger {
        reflections: per_stage.iter().sum(),
        reflections_per_stage: per_stage,
        controlled_ops: out.stages.iter().map(|s| s.controlled_ops).sum(),
        walk_steps: walk,
        copies: out.stages.iter().map(|s| s.copies).sum(),
        restoration_failures: out.stages.iter().map(|s| s.restoration_failures).sum(),
        samples: 0,
    }
}

fn stage_diagnostics(out: &ProductOutcome, betas: &[Beta]) -> Vec<StageDiagnostic> {
    out.stages
        .iter()
        .enumerate()
        .map(|(i, s)| StageDiagnostic {
            beta: betas.get(i).map(|b| b.to_string()).unwrap_or_else(|| i.to_string()),
            median: s.median,
            sigma_tilde: s.sigma_tilde,
            estimate: s.estimate,
            true_mean: s.true_mean,
            medi_reflections: s.medi_reflections,
            qestim_reflections: s.qestim_reflections,
            anneal_reflections: s.anneal_reflections,
        })
        .collect()
}

/// Samples per stage for the classical product of sample means,
/// n = ⌈3ℓ(B−1)/ε²⌉, which bounds the failure probability by 1/3 through
/// Chebyshev's inequality.
pub fn classical_sample_count(l: usize, b: f64, eps: f64) -> u64 {
    ((3.0 * l as f64 * (b - 1.0) / (eps * eps)).ceil() as u64).max(1)
}

/// Product of per-stage sample means drawn exactly from each variable.
pub fn classical_product(stages: &[FiniteRandomVariable], b: f64, eps: f64, rng: &mut RandomSource) -> (f64, u64) {
    let n = classical_sample_count(stages.len(), b, eps);
    let mut product = 1.0;
    for x in stages {
        let sum: f64 = (0..n).map(|_| x.sample(rng)).sum();
        product *= sum / n as f64;
    }
    (product, n * stages.len() as u64)
}

pub fn classical_baseline(
    model: &GibbsModel,
    schedule: &CoolingSchedule,
    eps: f64,
    rng: &mut RandomSource,
) -> Result<EstimateReport> {
    let vars = schedule.ratio_variables(model)?;
    let (product, samples) = classical_product(&vars, schedule.b, eps, rng);
    let truth = model.partition(*schedule.betas.last().expect("non-empty schedule"))?;
    let ledger = ResourceLedger { samples, ..ResourceLedger::default() };
    Ok(EstimateReport::new(schedule.start_partition * product, Some(truth), eps, ledger, Vec::new()))
}

/// Synthetic product suite: ℓ two-point stages {0.8, 1.2} with stage
/// fidelity 0.95, run at B = 1.1.
pub const SYNTHETIC_B: f64 = 1.1;

pub fn synthetic_stages(l: usize) -> Vec<ProductStage> {
    (0..l)
        .map(|i| ProductStage {
            variable: FiniteRandomVariable::uniform(&[0.8, 1.2]).expect("valid table"),
            fidelity_to_next: (i + 1 < l).then_some(0.95),
        })
        .collect()
}

/// Runs `reps` independent repetitions, each with its own estimator context,
/// spread over the available cores and returned in repetition order.
pub fn run_reps<T, F>(reps: u64, mode: OracleMode, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &EstimatorContext) -> Result<T> + Sync,
{
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(reps.max(1) as usize);
    if workers <= 1 {
        let ctx = EstimatorContext::new(mode);
        return (0..reps).map(|r| f(r, &ctx)).collect();
    }
    let f = &f;
    let chunks: Vec<Result<Vec<(u64, T)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    let ctx = EstimatorContext::new(mode);
                    (w as u64..reps).step_by(workers).map(|r| f(r, &ctx).map(|t| (r, t))).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut all = Vec::with_capacity(reps as usize);
    for c in chunks {
        all.extend(c?);
    }
    all.sort_by_key(|(r, _)| *r);
    Ok(all.into_iter().map(|(_, t)| t).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Upe,
    Ae,
    Mean,
    Median,
    Product,
    Schedule,
    Partition,
    Suite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Upe => "upe",
            Command::Ae => "ae",
            Command::Mean => "mean",
            Command::Median => "median",
            Command::Product => "product",
            Command::Schedule => "schedule",
            Command::Partition => "partition",
            Command::Suite => "suite",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub reps: u64,
    pub eps: f64,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 1, reps: 1, eps: 0.1, format: OutputFormat::Json, out: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `family:graph[:k]`, graph being a built-in name or an edge-list path.
    pub spec: Option<String>,
    /// Target inverse temperature, a number or `inf`.
    pub target_beta: Option<String>,
    pub b: f64,
    pub walk_constant: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { spec: None, target_beta: None, b: std::f64::consts::E.powi(2), walk_constant: DEFAULT_WALK_CONSTANT }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub t: f64,
    pub eta: f64,
    pub adversarial_oracles: bool,
    pub averaging_constant_scale: f64,
    /// `ae`: run the unbiased estimator instead of ndae.
    pub unbiased: bool,
    /// `partition`: run the classical baseline instead.
    pub classical: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self { t: 8.0, eta: 0.1, adversarial_oracles: false, averaging_constant_scale: 1.0, unbiased: false, classical: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    /// `upe`: phase in [0, 1/2].
    pub theta: f64,
    /// `ae`: amplitude in [0, 1].
    pub p: f64,
    /// `mean`, `median`: outcomes and probabilities (uniform when empty).
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
    /// `product`: number of synthetic stages.
    pub stages: usize,
}

impl Default for InputSection {
    fn default() -> Self {
        Self { theta: 0.137, p: 0.05, values: vec![0.0, 1.0], probs: Vec::new(), stages: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub inputs: InputSection,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            run: RunSection::default(),
            model: ModelSection::default(),
            estimator: EstimatorSection::default(),
            inputs: InputSection::default(),
        }
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        toml::from_str(&text).map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Err(Error::Config { path: "<config>".into(), message });
        if !(self.run.eps > 0.0 && self.run.eps < 1.0) {
            return bad(format!("eps = {} outside (0,1)", self.run.eps));
        }
        if self.run.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if !(self.estimator.eta > 0.0 && self.estimator.eta < 1.0) {
            return bad(format!("eta = {} outside (0,1)", self.estimator.eta));
        }
        if !(self.estimator.averaging_constant_scale > 0.0) {
            return bad("averaging_constant_scale must be positive".into());
        }
        if self.model.b <= 1.0 {
            return bad("B must exceed 1".into());
        }
        self.target_beta()?;
        Ok(())
    }

    pub fn mode(&self) -> OracleMode {
        if self.estimator.adversarial_oracles {
            OracleMode::Adversarial { sign: 1.0 }
        } else {
            OracleMode::Exact
        }
    }

    pub fn target_beta(&self) -> Result<Option<Beta>> {
        match self.model.target_beta.as_deref() {
            None => Ok(None),
            Some(s) => parse_beta(s)
                .map(Some)
                .ok_or_else(|| Error::Config { path: "<config>".into(), message: format!("bad target_beta {s:?}") }),
        }
    }

    fn variable(&self) -> Result<FiniteRandomVariable> {
        let v = &self.inputs.values;
        let p = &self.inputs.probs;
        let pairs: Vec<(f64, f64)> = if p.is_empty() {
            v.iter().map(|&x| (x, 1.0)).collect()
        } else if p.len() == v.len() {
            v.iter().copied().zip(p.iter().copied()).collect()
        } else {
            return Err(Error::Config { path: "<config>".into(), message: "values and probs differ in length".into() });
        };
        FiniteRandomVariable::from_weights(pairs)
    }

    fn model(&self) -> Result<GibbsModel> {
        let spec = self.model.spec.as_deref().ok_or_else(|| Error::Config {
            path: "<config>".into(),
            message: format!("`{}` needs a model", self.command.name()),
        })?;
        GibbsModel::from_spec(spec)
    }
}

/// `inf`, `infinity` or a finite number.
pub fn parse_beta(s: &str) -> Option<Beta> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "∞" => Some(Beta::Infinite),
        other => other.parse::<f64>().ok().filter(|b| b.is_finite()).map(Beta::Finite),
    }
}

/// One CSV row per repetition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub seed: u64,
    pub estimate: f64,
    pub truth: f64,
    pub rel_error: f64,
    pub reflections: u128,
    pub walk_steps: Option<u128>,
    pub controlled_ops: u128,
    pub restored: bool,
    pub stage_diagnostics: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub reps: u64,
    pub mean_estimate: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub mean_reflections: f64,
    pub restoration_frequency: f64,
    /// Runs with relative error at most ε, when success is defined.
    pub successes: Option<u64>,
    pub success_p_value: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScheduleReport {
    pub betas: Vec<String>,
    pub chebyshev: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub b: f64,
    pub start_partition: f64,
    pub start_is_proxy: bool,
    pub gaps: Vec<Option<f64>>,
}

impl ScheduleReport {
    pub fn new(s: &CoolingSchedule, model: &GibbsModel) -> Self {
        let gaps = s.betas.iter().map(|&b| glauber_chain(model, b).and_then(|c| spectral_gap(&c)).ok()).collect();
        Self {
            betas: s.betas.iter().map(Beta::to_string).collect(),
            chebyshev: s.chebyshev.clone(),
            fidelity: s.fidelity.clone(),
            b: s.b,
            start_partition: s.start_partition,
            start_is_proxy: s.start_is_proxy,
            gaps,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub command: Command,
    pub config: ExperimentConfig,
    pub truth: Option<f64>,
    pub summary: Option<RunSummary>,
    pub schedule: Option<ScheduleReport>,
    pub runs: Vec<RunRow>,
    /// Full per-run reports for the product and partition commands.
    pub reports: Vec<EstimateReport>,
    /// Success criteria met: the binomial test against the 2/3 claim where
    /// success is defined, otherwise true.
    pub success: bool,
}

/// Runs the configured command. Output is deterministic given the seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mode = config.mode();
    let eps = config.run.eps;
    let seed = config.run.seed;
    let reps = config.run.reps;
    let est = &config.estimator;
    let rng_for = |r: u64| RandomSource::new(seed.wrapping_add(r));
    let mut schedule = None;
    let mut reports = Vec::new();
    let (truth, rows, success_defined): (f64, Vec<RunRow>, bool) = match config.command {
        Command::Upe => {
            let theta = config.inputs.theta;
            let t = (est.t.max(1.0) as u64).next_power_of_two();
            let rows = run_reps(reps, mode, |r, ctx| {
                let mut rng = rng_for(r);
                let mut inst = PhaseInstance::new(theta)?;
                let out = upe(&mut inst, t, eps, ctx.mode, StageConfig::default(), &mut rng)?;
                Ok(row(seed + r, out.estimate, theta, 0, None, inst.controlled_ops as u128, inst.restored, String::new()))
            })?;
            (theta, rows, false)
        }
        Command::Ae => {
            let p = config.inputs.p;
            let rows = run_reps(reps, mode, |r, ctx| {
                let mut rng = rng_for(r);
                let mut inst = AmplitudeInstance::new(p)?;
                let (estimate, ops) = if est.unbiased {
                    let out = nduae(&mut inst, est.t, eps, ctx, &mut rng)?;
                    (out.estimate, out.controlled_ops)
                } else {
                    (ndae(&mut inst, est.t, est.eta, ctx, &mut rng)?, 0)
                };
                Ok(row(seed + r, estimate, p, inst.reflections as u128, None, ops as u128, inst.restored, String::new()))
            })?;
            (p, rows, false)
        }
        Command::Mean => {
            let x = config.variable()?;
            let med = exact_median(&x);
            let sigma = x.std_dev();
            let rows = run_reps(reps, mode, |r, ctx| {
                let mut rng = rng_for(r);
                let out = qestim(&x, est.t.max(1.0), med, sigma, eps, ctx, &mut rng)?;
                Ok(row(seed + r, out.estimate, x.mean(), out.reflections, None, out.controlled_ops, out.restored, String::new()))
            })?;
            (x.mean(), rows, false)
        }
        Command::Median => {
            let x = config.variable()?;
            let med = exact_median(&x);
            let rows = run_reps(reps, mode, |r, ctx| {
                let mut rng = rng_for(r);
                let out = medi(&x, est.eta, ctx, &mut rng)?;
                let diag = format!("probes={}", out.probes);
                Ok(row(seed + r, out.median, med, out.reflections as u128, None, 0, out.restoration_failures == 0, diag))
            })?;
            (med, rows, false)
        }
        Command::Product => {
            let l = config.inputs.stages.max(1);
            let plan = ProductPlan::new(
                synthetic_stages(l),
                SYNTHETIC_B,
                eps,
                ProductConfig { averaging_scale: est.averaging_constant_scale, ..ProductConfig::default() },
            )?;
            let truth = plan.true_product();
            let out = run_reps(reps, mode, |r, ctx| {
                let mut rng = rng_for(r);
                let out = plan.run(ctx, &mut rng)?;
                let ledger = product_ledger(&out, None);
                let stages = stage_diagnostics(&out, &[]);
                Ok(EstimateReport::new(out.estimate, Some(truth), eps, ledger, stages))
            })?;
            let rows = out.iter().enumerate().map(|(r, rep)| report_row(seed + r as u64, rep)).collect();
            reports = out;
            (truth, rows, true)
        }
        Command::Schedule => {
            let model = config.model()?;
            let s = generate_schedule(&model, config.model.b, eps, config.target_beta()?)?;
            let truth = model.partition(*s.betas.last().expect("non-empty"))?;
            schedule = Some(ScheduleReport::new(&s, &model));
            (truth, Vec::new(), false)
        }
        Command::Partition => {
            let model = config.model()?;
            let pc = PartitionConfig {
                b: config.model.b,
                target: config.target_beta()?,
                averaging_scale: est.averaging_constant_scale,
                walk_constant: config.model.walk_constant,
                ..PartitionConfig::default()
            };
            let out = if est.classical {
                let s = generate_schedule(&model, pc.b, eps, pc.target)?;
                schedule = Some(ScheduleReport::new(&s, &model));
                run_reps(reps, mode, |r, _| classical_baseline(&model, &s, eps, &mut rng_for(r)))?
            } else {
                let plan = PartitionPlan::new(&model, eps, &pc)?;
                schedule = Some(ScheduleReport::new(&plan.schedule, &model));
                run_reps(reps, mode, |r, ctx| plan.run(ctx, &mut rng_for(r)))?
            };
            let truth = out.first().and_then(|r| r.truth).unwrap_or(f64::NAN);
            let rows = out.iter().enumerate().map(|(r, rep)| report_row(seed + r as u64, rep)).collect();
            reports = out;
            (truth, rows, true)
        }
        Command::Suite => return precondition("the suite is run by the acceptance runner, not run_experiment"),
    };
    let summary = (!rows.is_empty()).then(|| summarize_rows(&rows, eps, success_defined));
    let success = summary.as_ref().and_then(|s| s.success_p_value).is_none_or(|p| p >= SUCCESS_ALPHA);
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        command: config.command,
        config: config.clone(),
        truth: Some(truth).filter(|t| t.is_finite()),
        summary,
        schedule,
        runs: rows,
        reports,
        success,
    })
}

/// Lower median of a finite table.
pub fn exact_median(x: &FiniteRandomVariable) -> f64 {
    let mut acc = 0.0;
    for (v, p) in x.outcomes().iter().zip(x.probs()) {
        acc += p;
        if acc >= 0.5 - 1e-12 {
            return *v;
        }
    }
    *x.outcomes().last().expect("non-empty")
}

#[allow(clippy::too_many_arguments)]
fn row(
    seed: u64,
    estimate: f64,
    truth: f64,
    reflections: u128,
    walk_steps: Option<u128>,
    controlled_ops: u128,
    restored: bool,
    stage_diagnostics: String,
) -> RunRow {
    RunRow {
        seed,
        estimate,
        truth,
        rel_error: relative_error(estimate, truth),
        reflections,
        walk_steps,
        controlled_ops,
        restored,
        stage_diagnostics,
    }
}

fn report_row(seed: u64, rep: &EstimateReport) -> RunRow {
    let mut diag = String::new();
    for (i, s) in rep.stages.iter().enumerate() {
        if i > 0 {
            diag.push(';');
        }
        let _ = write!(diag, "beta={} med={} est={} mean={}", s.beta, s.median, s.estimate, s.true_mean);
    }
    let mut r = row(
        seed,
        rep.estimate,
        rep.truth.unwrap_or(f64::NAN),
        rep.ledger.reflections,
        rep.ledger.walk_steps,
        rep.ledger.controlled_ops,
        rep.ledger.restoration_failures == 0,
        diag,
    );
    if rep.ledger.samples > 0 {
        r.reflections = rep.ledger.samples as u128;
    }
    r
}

fn summarize_rows(rows: &[RunRow], eps: f64, success_defined: bool) -> RunSummary {
    let est: Vec<f64> = rows.iter().map(|r| r.estimate).collect();
    let s = summarize(&est);
    let n = rows.len() as u64;
    let successes = success_defined.then(|| rows.iter().filter(|r| r.rel_error <= eps).count() as u64);
    RunSummary {
        reps: n,
        mean_estimate: s.mean,
        variance: s.variance,
        se_mean: s.se_mean,
        mean_reflections: rows.iter().map(|r| r.reflections as f64).sum::<f64>() / n as f64,
        restoration_frequency: rows.iter().filter(|r| r.restored).count() as f64 / n as f64,
        successes,
        success_p_value: successes.map(|h| claim_test(h, n, SUCCESS_CLAIM, SUCCESS_ALPHA).p_value),
    }
}

pub fn to_json(report: &ExperimentReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Serialize(e.to_string()))
}

/// Per-run rows, or the schedule steps for the schedule command.
pub fn to_csv(report: &ExperimentReport) -> Result<String> {
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    if let (Command::Schedule, Some(s)) = (report.command, &report.schedule) {
        w.write_record(["step", "beta_from", "beta_to", "chebyshev", "fidelity"]).map_err(ser)?;
        for i in 0..s.chebyshev.len() {
            w.write_record([
                i.to_string(),
                s.betas[i].clone(),
                s.betas[i + 1].clone(),
                s.chebyshev[i].to_string(),
                s.fidelity[i].to_string(),
            ])
            .map_err(ser)?;
        }
    } else {
        if report.runs.is_empty() {
            w.write_record([
                "seed",
                "estimate",
                "truth",
                "rel_error",
                "reflections",
                "walk_steps",
                "controlled_ops",
                "restored",
                "stage_diagnostics",
            ])
            .map_err(ser)?;
        }
        for r in &report.runs {
            w.serialize(r).map_err(ser)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
}

/// Writes `<out>/<command>.<ext>` and returns the path.
pub fn write_report(report: &ExperimentReport, out: &Path, format: OutputFormat) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|source| Error::Io { path: out.display().to_string(), source })?;
    let (ext, body) = match format {
        OutputFormat::Json => ("json", to_json(report)?),
        OutputFormat::Csv => ("csv", to_csv(report)?),
    };
    let path = out.join(format!("{}.{ext}", report.command.name()));
    std::fs::write(&path, body).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::Graph;

    #[test]
    fn constant_model_schedule_is_one_step() {
        let m = GibbsModel::constant(5).unwrap();
        let s = generate_schedule(&m, 2.0, 0.1, None).unwrap();
        assert_eq!(s.betas, vec![Beta::Finite(0.0), Beta::Infinite]);
        assert_eq!(s.chebyshev, vec![1.0]);
        let ctx = EstimatorContext::default();
        let rep = estimate_partition(&m, 0.1, &ctx, &mut RandomSource::new(1), &PartitionConfig::default()).unwrap();
        assert_eq!(rep.estimate, 5.0);
    }

    #[test]
    fn potts_triangle_schedule_respects_bounds() {
        let m = GibbsModel::potts(Graph::cycle(3), 3).unwrap();
        let b = std::f64::consts::E.powi(2);
        let s = generate_schedule(&m, b, 0.25, None).unwrap();
        assert!(s.chebyshev.iter().all(|&c| c <= b));
        assert!(s.fidelity.iter().all(|&f| f >= 1.0 / b));
        assert!((s.telescoping_product(&m).unwrap() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn ising_needs_a_target() {
        let m = GibbsModel::ising(Graph::path(2)).unwrap();
        assert!(generate_schedule(&m, 2.0, 0.1, None).is_err());
        let s = generate_schedule(&m, 2.0, 0.1, Some(Beta::Finite(2f64.ln()))).unwrap();
        assert_eq!(*s.betas.last().unwrap(), Beta::Finite(2f64.ln()));
    }

    #[test]
    fn beta_parsing() {
        assert_eq!(parse_beta("inf"), Some(Beta::Infinite));
        assert_eq!(parse_beta("0.5"), Some(Beta::Finite(0.5)));
        assert_eq!(parse_beta("x"), None);
    }

    #[test]
    fn classical_count() {
        assert_eq!(classical_sample_count(2, 2.0, 0.5), 24);
    }
}
