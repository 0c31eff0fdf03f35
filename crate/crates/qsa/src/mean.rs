//! Finite random variables encoded as qsamples |π_X⟩ = Σ √P[X=x]|x⟩, and the
//! estimators built on them: unbiased mean, median, annealing between
//! qsamples, and the product of means.

use crate::amplitude::{ndae, nduae, AmplitudeInstance, EstimatorContext};
use crate::qcore::{ComplexMatrix, ComplexVector, RandomSource, DENSE_CAP};
use crate::{precondition, Error, Result};
use rand_distr::{Distribution, Geometric};

/// Outcomes closer than this (relative to max(1, |x|)) are merged.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteRandomVariable {
    outcomes: Vec<f64>,
    probs: Vec<f64>,
    /// tail[k] = P[X ≥ x_k], accumulated from the top for accuracy.
    tail: Vec<f64>,
}

impl FiniteRandomVariable {
    /// Strictly increasing outcomes with probabilities summing to 1 within 1e-12.
    pub fn new(outcomes: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() || outcomes.len() != probs.len() {
            return Err(Error::InvalidVariable("outcomes and probs must be non-empty and equal length".into()));
        }
        if outcomes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidVariable("outcomes must be strictly increasing".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) || outcomes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidVariable("probabilities must be nonnegative and outcomes finite".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidVariable(format!("probabilities sum to {total}")));
        }
        Ok(Self::from_sorted(outcomes, probs))
    }

    /// Builds a variable from unsorted weighted outcomes, merging near-equal
    /// outcomes, dropping zero weights and normalizing.
    pub fn from_weights(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().filter(|&(_, w)| w > 0.0).collect();
        if pairs.is_empty() {
            return Err(Error::InvalidVariable("no positive weights".into()));
        }
        if pairs.iter().any(|(x, w)| !x.is_finite() || !w.is_finite()) {
            return Err(Error::InvalidVariable("non-finite outcome or weight".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let mut outcomes: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match outcomes.last() {
                Some(&last) if (x - last).abs() <= MERGE_TOL * last.abs().max(1.0) => {
                    *probs.last_mut().unwrap() += w / total;
                }
                _ => {
                    outcomes.push(x);
                    probs.push(w / total);
                }
            }
        }
        Ok(Self::from_sorted(outcomes, probs))
    }

    pub fn point_mass(c: f64) -> Self {
        Self::from_sorted(vec![c], vec![1.0])
    }

    pub fn uniform(outcomes: &[f64]) -> Result<Self> {
        Self::from_weights(outcomes.iter().map(|&x| (x, 1.0)))
    }

    fn from_sorted(outcomes: Vec<f64>, probs: Vec<f64>) -> Self {
        let mut tail = vec![0.0; probs.len()];
        let mut acc = 0.0;
        for k in (0..probs.len()).rev() {
            acc += probs[k];
            tail[k] = acc;
        }
        Self { outcomes, probs, tail }
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn support_size(&self) -> usize {
        self.outcomes.len()
    }

    pub fn mean(&self) -> f64 {
        self.outcomes.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.outcomes.iter().zip(&self.probs).map(|(x, p)| x * x * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.outcomes.iter().zip(&self.probs).map(|(x, p)| (x - m) * (x - m) * p).sum()
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// E[X²]/E[X]²
    pub fn relative_second_moment(&self) -> f64 {
        let m = self.mean();
        self.second_moment() / (m * m)
    }

    /// P[X ≥ x_k] for the 0-based index k.
    pub fn tail(&self, k: usize) -> f64 {
        self.tail[k]
    }

    /// X − c, relabelling outcomes only.
    pub fn shifted(&self, c: f64) -> Self {
        Self::from_sorted(self.outcomes.iter().map(|x| x - c).collect(), self.probs.clone())
    }

    pub fn sample(&self, rng: &mut RandomSource) -> f64 {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (x, p) in self.outcomes.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *x;
            }
        }
        *self.outcomes.last().unwrap()
    }

    /// Index range of outcomes in the half-open interval (lo, hi].
    fn range_open_closed(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.outcomes.partition_point(|&x| x <= lo);
        let b = self.outcomes.partition_point(|&x| x <= hi);
        a..b.max(a)
    }

    /// Index range of outcomes in [lo, hi).
    fn range_closed_open(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.outcomes.partition_point(|&x| x < lo);
        let b = self.outcomes.partition_point(|&x| x < hi);
        a..b.max(a)
    }
}

/// Amplitude encoding of a finite random variable.
#[derive(Clone, Debug)]
pub struct Qsample {
    pub base: FiniteRandomVariable,
    pub amplitudes: Vec<f64>,
    pub restored: bool,
    pub reflections: u64,
}

pub fn make_qsample(x: &FiniteRandomVariable) -> Qsample {
    Qsample {
        base: x.clone(),
        amplitudes: x.probs().iter().map(|p| p.sqrt()).collect(),
        restored: true,
        reflections: 0,
    }
}

impl Qsample {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    /// id − 2|π_X⟩⟨π_X| as a dense matrix.
    pub fn reflection(&self) -> Result<ComplexMatrix> {
        if self.amplitudes.len() > DENSE_CAP {
            return Err(Error::CapExceeded(self.amplitudes.len()));
        }
        Ok(ComplexMatrix::reflection_about(&ComplexVector::from_real(&self.amplitudes)))
    }
}

/// |⟨ψ|φ⟩|² between two amplitude tables over the same carrier.
pub fn overlap(a: &[f64], b: &[f64]) -> f64 {
    let ip: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    ip * ip
}

/// Probability below which partial count vectors are pruned during exact
/// averaging. The discarded mass is at most this value times the number of
/// pruned nodes.
pub const AVERAGING_PRUNE: f64 = 1e-30;

pub const DEFAULT_ATOM_CAP: usize = 1_000_000;

/// Law of (X₁ + … + X_K)/K for i.i.d. copies of X.
///
/// Enumerates count vectors (n_x) with conditional binomials in log space,
/// merging equal averages.
pub fn average_variable(x: &FiniteRandomVariable, k: u64, cap: usize) -> Result<FiniteRandomVariable> {
    if k == 0 {
        return precondition("averaging needs K ≥ 1");
    }
    if k == 1 {
        return Ok(x.clone());
    }
    let (vals, probs): (Vec<f64>, Vec<f64>) =
        x.outcomes().iter().zip(x.probs()).filter(|(_, &p)| p > 0.0).map(|(&v, &p)| (v, p)).unzip();
    let d = vals.len();
    let mut suffix = vec![0.0; d + 1];
    for h in (0..d).rev() {
        suffix[h] = suffix[h + 1] + probs[h];
    }
    let mut ln_fact = vec![0.0f64; k as usize + 1];
    for i in 1..=k as usize {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut walker = Averager {
        vals: &vals,
        probs: &probs,
        suffix: &suffix,
        ln_fact: &ln_fact,
        k,
        cut: AVERAGING_PRUNE.ln(),
        cap,
        out: &mut out,
    };
    walker.visit(0, k, 0.0, 0.0)?;
    FiniteRandomVariable::from_weights(out)
}

struct Averager<'a> {
    vals: &'a [f64],
    probs: &'a [f64],
    suffix: &'a [f64],
    ln_fact: &'a [f64],
    k: u64,
    cut: f64,
    cap: usize,
    out: &'a mut Vec<(f64, f64)>,
}

impl Averager<'_> {
    fn visit(&mut self, h: usize, remaining: u64, log_p: f64, sum: f64) -> Result<()> {
        let d = self.vals.len();
        if h + 1 == d || remaining == 0 {
            let total = sum + remaining as f64 * self.vals[h];
            self.out.push((total / self.k as f64, log_p.exp()));
            if self.out.len() > self.cap {
                return Err(Error::AveragingCap { cap: self.cap });
            }
            return Ok(());
        }
        let q = self.probs[h] / self.suffix[h];
        let (lq, lq1) = (q.ln(), (1.0 - q).ln());
        let r = remaining as usize;
        let log_pmf = |n: usize| {
            self.ln_fact[r] - self.ln_fact[n] - self.ln_fact[r - n] + n as f64 * lq + (r - n) as f64 * lq1
        };
        let mode = ((remaining as f64 + 1.0) * q).floor().min(remaining as f64) as usize;
        for n in mode..=r {
            let lp = log_p + log_pmf(n);
            if lp < self.cut {
                break;
            }
            self.visit(h + 1, remaining - n as u64, lp, sum + n as f64 * self.vals[h])?;
        }
        for n in (0..mode).rev() {
            let lp = log_p + log_pmf(n);
            if lp < self.cut {
                break;
            }
            self.visit(h + 1, remaining - n as u64, lp, sum + n as f64 * self.vals[h])?;
        }
        Ok(())
    }
}

/// Bins used by [`average_variable_binned`] across ±13σ√K of the sum.
pub const DEFAULT_AVERAGING_BINS: usize = 1 << 15;

/// Law of (X₁ + … + X_K)/K coarse-grained onto a grid.
///
/// Copies are added one at a time. Each bin keeps its mass and exact first
/// moment, so the atoms sit at conditional means and E[X̂] = E[X] is exact.
/// Merging inside a bin can only lower the variance, by a relative amount
/// of order 169K/bins².
pub fn average_variable_binned(x: &FiniteRandomVariable, k: u64, bins: usize) -> Result<FiniteRandomVariable> {
    if k == 0 || bins < 2 {
        return precondition("binned averaging needs K ≥ 1 and at least two bins");
    }
    let sd = x.std_dev();
    let lo = *x.outcomes().first().unwrap();
    let hi = *x.outcomes().last().unwrap();
    if sd == 0.0 || lo == hi {
        return Ok(FiniteRandomVariable::point_mass(x.mean()));
    }
    let span = (26.0 * sd * (k as f64).sqrt()).min((hi - lo) * k as f64);
    let w = span / bins as f64;
    let levels: Vec<(f64, f64)> = x.outcomes().iter().copied().zip(x.probs().iter().copied()).filter(|p| p.1 > 0.0).collect();
    // Dense window of bins starting at global index `origin`.
    let mut origin = 0i64;
    let mut mass = vec![1.0f64];
    let mut moment = vec![0.0f64];
    let vmin = levels.first().unwrap().0;
    let vmax = levels.last().unwrap().0;
    for _ in 0..k {
        let new_origin = origin + (vmin / w).floor() as i64 - 1;
        let len = mass.len() + ((vmax - vmin) / w).ceil() as usize + 3;
        let mut nm = vec![0.0f64; len];
        let mut ns = vec![0.0f64; len];
        for (&m, &s) in mass.iter().zip(&moment) {
            if m == 0.0 {
                continue;
            }
            let centre = s / m;
            for &(v, p) in &levels {
                let target = ((centre + v) / w).floor() as i64 - new_origin;
                let j = target.clamp(0, len as i64 - 1) as usize;
                nm[j] += m * p;
                ns[j] += (s + m * v) * p;
            }
        }
        let first = nm.iter().position(|&m| m >= AVERAGING_PRUNE).unwrap_or(0);
        let last = nm.iter().rposition(|&m| m >= AVERAGING_PRUNE).unwrap_or(len - 1);
        mass = nm[first..=last].to_vec();
        moment = ns[first..=last].to_vec();
        origin = new_origin + first as i64;
    }
    let kf = k as f64;
    FiniteRandomVariable::from_weights(
        mass.iter().zip(&moment).filter(|(&m, _)| m > 0.0).map(|(&m, &s)| (s / m / kf, m)),
    )
}

/// Exact averaging when the atom count fits under `cap`, binned otherwise.
/// The flag reports whether binning was used.
pub fn averaged_variable(x: &FiniteRandomVariable, k: u64, cap: usize) -> Result<(FiniteRandomVariable, bool)> {
    match average_variable(x, k, cap) {
        Ok(v) => Ok((v, false)),
        Err(Error::AveragingCap { .. }) => Ok((average_variable_binned(x, k, DEFAULT_AVERAGING_BINS)?, true)),
        Err(e) => Err(e),
    }
}

/// Levels a₋₁ = 0 < a₀ < … < a_k with a_j = 2ʲσ̃ and k = ⌈log₂(580/ε)⌉.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationLadder {
    pub k: u32,
    pub sigma_tilde: f64,
    /// levels[0] = a₋₁ = 0, levels[j+1] = a_j.
    pub levels: Vec<f64>,
}

impl TruncationLadder {
    pub fn new(eps: f64, sigma_tilde: f64) -> Result<Self> {
        if sigma_tilde <= 0.0 || !(eps > 0.0 && eps < 1.0) {
            return precondition("ladder needs σ̃ > 0 and ε ∈ (0,1)");
        }
        let k = (580.0 / eps).log2().ceil() as u32;
        let mut levels = vec![0.0];
        levels.extend((0..=k).map(|j| sigma_tilde * 2f64.powi(j as i32)));
        Ok(Self { k, sigma_tilde, levels })
    }

    pub fn a(&self, j: u32) -> f64 {
        self.levels[j as usize + 1]
    }
}

/// μ⁺ = E[(X̄/a_hi)·1{X̄ ∈ (a_lo, a_hi]}] for sign +1 and the mirrored
/// μ⁻ = E[(|X̄|/a_hi)·1{−X̄ ∈ (a_lo, a_hi]}] for sign −1.
pub fn bernoulli_slice(xbar: &FiniteRandomVariable, a_lo: f64, a_hi: f64, sign: i8) -> Result<(f64, AmplitudeInstance)> {
    if !(0.0 <= a_lo && a_lo < a_hi) {
        return precondition("slice needs 0 ≤ a_lo < a_hi");
    }
    let range = if sign >= 0 {
        xbar.range_open_closed(a_lo, a_hi)
    } else {
        xbar.range_closed_open(-a_hi, -a_lo)
    };
    let mu: f64 = range.map(|i| xbar.probs[i] * xbar.outcomes[i].abs() / a_hi).sum::<f64>().clamp(0.0, 1.0);
    Ok((mu, AmplitudeInstance::new(mu)?))
}

/// All slice means (μ_j⁺, μ_j⁻) for j = 0..=k.
pub fn slice_means(xbar: &FiniteRandomVariable, ladder: &TruncationLadder) -> Vec<(f64, f64)> {
    (0..=ladder.k)
        .map(|j| {
            let (lo, hi) = (ladder.levels[j as usize], ladder.levels[j as usize + 1]);
            let plus = bernoulli_slice(xbar, lo, hi, 1).map(|r| r.0).unwrap_or(0.0);
            let minus = bernoulli_slice(xbar, lo, hi, -1).map(|r| r.0).unwrap_or(0.0);
            (plus, minus)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QestimOutcome {
    pub estimate: f64,
    pub reflections: u128,
    pub controlled_ops: u128,
    pub restoration_failures: u64,
    pub restored: bool,
}

/// Unbiased mean estimator.
///
/// Writes X̄ = X − med̃ as a telescoping sum of slices over the truncation
/// ladder and estimates each slice mean with nduae(300t, (ε/(2320t))²).
pub fn qestim(
    x: &FiniteRandomVariable,
    t: f64,
    med_tilde: f64,
    sigma_tilde: f64,
    eps: f64,
    ctx: &EstimatorContext,
    rng: &mut RandomSource,
) -> Result<QestimOutcome> {
    if t < 1.0 {
        return precondition("qestim needs t ≥ 1");
    }
    if sigma_tilde <= 0.0 {
        // Only admissible when σ = 0, where |μ − med̃| ≤ 17σ forces med̃ = μ.
        return Ok(QestimOutcome { estimate: med_tilde, reflections: 0, controlled_ops: 0, restoration_failures: 0, restored: true });
    }
    let ladder = TruncationLadder::new(eps, sigma_tilde)?;
    let xbar = x.shifted(med_tilde);
    let slices = slice_means(&xbar, &ladder);
    let t_slice = 300.0 * t;
    let eps_slice = (eps / (2320.0 * t)).powi(2);
    let mut estimate = med_tilde;
    let mut reflections = 0u128;
    let mut controlled_ops = 0u128;
    let mut failures = 0u64;
    for (j, &(plus, minus)) in slices.iter().enumerate() {
        let a = ladder.a(j as u32);
        for (mu, sign) in [(plus, 1.0), (minus, -1.0)] {
            let mut inst = AmplitudeInstance::new(mu)?;
            let out = nduae(&mut inst, t_slice, eps_slice, ctx, rng)?;
            reflections += inst.reflections as u128;
            controlled_ops += out.controlled_ops as u128;
            if !inst.restored {
                failures += 1;
            }
            estimate += sign * a * out.estimate;
        }
    }
    Ok(QestimOutcome { estimate, reflections, controlled_ops, restoration_failures: failures, restored: failures == 0 })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MediOutcome {
    pub median: f64,
    pub probes: u32,
    pub reflections: u64,
    pub restoration_failures: u64,
}

/// Nondestructive median estimator by binary search over the support.
///
/// Each probe estimates p_k = P[X ≥ x_k] with ndae(3√2, η/log₂ n) and moves
/// left when the estimate is at most 1/6.
pub fn medi(x: &FiniteRandomVariable, eta: f64, ctx: &EstimatorContext, rng: &mut RandomSource) -> Result<MediOutcome> {
    if !(eta > 0.0 && eta < 1.0) {
        return precondition(format!("eta = {eta} outside (0,1)"));
    }
    let n = x.support_size();
    let eta_probe = (eta / (n as f64).log2().max(1.0)).min(0.49);
    let t = 3.0 * 2f64.sqrt();
    let (mut a, mut b) = (1usize, n + 1);
    let mut probes = 0u32;
    let mut reflections = 0u64;
    let mut failures = 0u64;
    while a < b {
        let k = (a + b) / 2;
        let mut inst = AmplitudeInstance::new(x.tail(k - 1).clamp(0.0, 1.0))?;
        let estimate = ndae(&mut inst, t, eta_probe, ctx, rng)?;
        probes += 1;
        reflections += inst.reflections;
        if !inst.restored {
            failures += 1;
        }
        if estimate <= 1.0 / 6.0 {
            b = k;
        } else {
            a = k + 1;
        }
    }
    let idx = a.saturating_sub(1).max(1) - 1;
    Ok(MediOutcome { median: x.outcomes[idx], probes, reflections, restoration_failures: failures })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnnealOutcome {
    /// Measurement rounds used.
    pub rounds: u64,
    /// The two states coincide, so one round suffices and the
    /// 1 + 1/(2F) formula does not apply.
    pub identical: bool,
}

/// Marriott–Watrous style annealing from |ψ⟩ to |φ⟩ with F = |⟨ψ|φ⟩|².
///
/// The first {|φ⟩⟨φ|, id − |φ⟩⟨φ|} measurement succeeds with probability F.
/// Afterwards the state alternates inside span{ψ, φ} and each further round
/// lands on |φ⟩ with probability 2F(1−F), so E[rounds] = 1 + 1/(2F).
pub fn anneal(fidelity: f64, rng: &mut RandomSource) -> Result<AnnealOutcome> {
    if !(fidelity > 0.0) || fidelity > 1.0 + 1e-12 {
        return precondition(format!("annealing needs overlap in (0,1], got {fidelity}"));
    }
    if fidelity >= 1.0 - 1e-12 {
        return Ok(AnnealOutcome { rounds: 1, identical: true });
    }
    if rng.bernoulli(fidelity) {
        return Ok(AnnealOutcome { rounds: 1, identical: false });
    }
    let f = 2.0 * fidelity * (1.0 - fidelity);
    let failures = Geometric::new(f).expect("f in (0,1/2]").sample(rng);
    Ok(AnnealOutcome { rounds: failures + 2, identical: false })
}

/// Annealing between two qsamples over a common carrier.
pub fn anneal_qsamples(src: &Qsample, dst: &Qsample, rng: &mut RandomSource) -> Result<AnnealOutcome> {
    if src.amplitudes.len() != dst.amplitudes.len() {
        return Err(Error::DimensionMismatch { expected: src.amplitudes.len(), got: dst.amplitudes.len() });
    }
    let f = overlap(&src.amplitudes, &dst.amplitudes);
    if f <= 0.0 {
        return precondition("annealing between orthogonal states");
    }
    anneal(f, rng)
}

/// One stage of a product: the variable whose mean is a factor, and the
/// fidelity between this stage's qsample and the next one.
#[derive(Clone, Debug)]
pub struct ProductStage {
    pub variable: FiniteRandomVariable,
    pub fidelity_to_next: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductConfig {
    /// Scales the averaging constant 1156 in K = max{1, 1156(B−1)}.
    pub averaging_scale: f64,
    pub atom_cap: usize,
}

impl Default for ProductConfig {
    fn default() -> Self {
        Self { averaging_scale: 1.0, atom_cap: DEFAULT_ATOM_CAP }
    }
}

/// K = max{1, ⌈1156·scale·(B−1)⌉}.
pub fn averaging_count(b: f64, scale: f64) -> u64 {
    ((1156.0 * scale * (b - 1.0)).ceil() as u64).max(1)
}

/// The product estimator with its averaged stage tables precomputed.
#[derive(Clone, Debug)]
pub struct ProductPlan {
    pub b: f64,
    pub eps: f64,
    pub k: u64,
    pub stages: Vec<ProductStage>,
    pub averaged: Vec<FiniteRandomVariable>,
    /// Stages whose averaged table was coarse-grained.
    pub binned: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub median: f64,
    pub sigma_tilde: f64,
    pub estimate: f64,
    pub true_mean: f64,
    pub medi_reflections: u128,
    pub qestim_reflections: u128,
    pub anneal_reflections: u128,
    /// Controlled phase-oracle applications inside qestim, per averaged copy.
    pub controlled_ops: u128,
    pub restoration_failures: u64,
    pub copies: u64,
}

impl StageReport {
    pub fn reflections(&self) -> u128 {
        self.medi_reflections + self.qestim_reflections + self.anneal_reflections
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductOutcome {
    pub estimate: f64,
    pub stages: Vec<StageReport>,
}

impl ProductOutcome {
    pub fn reflections(&self) -> u128 {
        self.stages.iter().map(StageReport::reflections).sum()
    }
}

impl ProductPlan {
    pub fn new(stages: Vec<ProductStage>, b: f64, eps: f64, config: ProductConfig) -> Result<Self> {
        if stages.is_empty() {
            return precondition("product needs at least one stage");
        }
        if b <= 1.0 {
            return precondition("product needs B > 1");
        }
        if !(eps > 0.0 && eps < 1.0) {
            return precondition(format!("eps = {eps} outside (0,1)"));
        }
        let k = averaging_count(b, config.averaging_scale);
        let (averaged, binned) = stages
            .iter()
            .map(|s| averaged_variable(&s.variable, k, config.atom_cap))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(Self { b, eps, k, stages, averaged, binned })
    }

    pub fn true_product(&self) -> f64 {
        self.stages.iter().map(|s| s.variable.mean()).product()
    }

    pub fn run(&self, ctx: &EstimatorContext, rng: &mut RandomSource) -> Result<ProductOutcome> {
        let l = self.stages.len() as f64;
        let eta = 1.0 / (11.0 * l);
        let t = 96.0 * self.b * l.sqrt() / self.eps;
        let eps_stage = self.eps / (6.0 * l * self.b);
        let mut reports = Vec::with_capacity(self.stages.len());
        let mut product = 1.0;
        for (i, (stage, xhat)) in self.stages.iter().zip(&self.averaged).enumerate() {
            let med = medi(xhat, eta, ctx, rng)?;
            let sigma_tilde = med.median * self.b;
            let est = qestim(xhat, t, med.median, sigma_tilde, eps_stage, ctx, rng)?;
            let failures = med.restoration_failures + est.restoration_failures;
            let mut anneal_rounds = 0u128;
            let mut copies = self.k;
            // A damaged stage state is rebuilt by annealing again from the
            // previous stage (or prepared afresh at the first stage).
            for _ in 0..failures {
                copies += self.k;
                anneal_rounds += match i {
                    0 => self.k as u128,
                    _ => self.anneal_copies(self.stages[i - 1].fidelity_to_next, rng)?,
                };
            }
            if i + 1 < self.stages.len() {
                anneal_rounds += self.anneal_copies(stage.fidelity_to_next, rng)?;
            }
            product *= est.estimate;
            reports.push(StageReport {
                median: med.median,
                sigma_tilde,
                estimate: est.estimate,
                true_mean: stage.variable.mean(),
                medi_reflections: med.reflections as u128 * self.k as u128,
                qestim_reflections: est.reflections * self.k as u128,
                anneal_reflections: anneal_rounds,
                controlled_ops: est.controlled_ops * self.k as u128,
                restoration_failures: failures,
                copies,
            });
        }
        Ok(ProductOutcome { estimate: product, stages: reports })
    }

    fn anneal_copies(&self, fidelity: Option<f64>, rng: &mut RandomSource) -> Result<u128> {
        let f = fidelity.unwrap_or(1.0);
        let mut rounds = 0;
        for _ in 0..self.k {
            rounds += anneal(f, rng)?.rounds as u128;
        }
        Ok(rounds)
    }
}

/// Var[Π μ̃ᵢ]/E[Π μ̃ᵢ]² = Π(1 + Var[μ̃ᵢ]/E[μ̃ᵢ]²) − 1 for independent stages.
pub fn product_relative_variance(stage_moments: &[(f64, f64)]) -> f64 {
    stage_moments.iter().map(|&(m, v)| 1.0 + v / (m * m)).product::<f64>() - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variable_validation() {
        assert!(FiniteRandomVariable::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(FiniteRandomVariable::new(vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
        let x = FiniteRandomVariable::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(x.mean(), 0.5);
        assert_eq!(x.variance(), 0.25);
    }

    #[test]
    fn qsample_amplitudes() {
        let q = make_qsample(&FiniteRandomVariable::point_mass(3.0));
        assert_eq!(q.amplitudes, vec![1.0]);
        let q = make_qsample(&FiniteRandomVariable::uniform(&[0.0, 1.0]).unwrap());
        assert!((q.amplitudes[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(q.reflection().unwrap().is_unitary());
    }

    #[test]
    fn averaging_two_fair_bits() {
        let x = FiniteRandomVariable::uniform(&[0.0, 1.0]).unwrap();
        assert_eq!(average_variable(&x, 1, 10).unwrap(), x);
        let y = average_variable(&x, 2, 10).unwrap();
        assert_eq!(y.outcomes(), &[0.0, 0.5, 1.0]);
        for (p, e) in y.probs().iter().zip([0.25, 0.5, 0.25]) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn averaging_cap_is_reported() {
        let x = FiniteRandomVariable::uniform(&[0.0, 0.3, 1.0, 2.7]).unwrap();
        assert!(matches!(average_variable(&x, 200, 1000), Err(Error::AveragingCap { .. })));
    }

    #[test]
    fn slice_example() {
        let xbar = FiniteRandomVariable::uniform(&[0.5, 1.5]).unwrap();
        let (mu0, _) = bernoulli_slice(&xbar, 0.0, 1.0, 1).unwrap();
        let (mu1, _) = bernoulli_slice(&xbar, 1.0, 2.0, 1).unwrap();
        assert!((mu0 - 0.25).abs() < 1e-15 && (mu1 - 0.375).abs() < 1e-15);
    }

    #[test]
    fn ladder_shape() {
        let l = TruncationLadder::new(0.05, 0.5).unwrap();
        assert_eq!(l.k, 14);
        assert_eq!(l.levels[0], 0.0);
        assert_eq!(l.a(0), 0.5);
        assert!(l.levels.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn qestim_point_mass_is_exact() {
        let ctx = EstimatorContext::default();
        let mut rng = RandomSource::new(3);
        let x = FiniteRandomVariable::point_mass(2.5);
        for _ in 0..5 {
            let out = qestim(&x, 8.0, 2.5, 1.0, 0.05, &ctx, &mut rng).unwrap();
            assert_eq!(out.estimate, 2.5);
        }
    }

    #[test]
    fn medi_point_mass() {
        let ctx = EstimatorContext::default();
        let mut rng = RandomSource::new(3);
        let out = medi(&FiniteRandomVariable::point_mass(4.0), 0.1, &ctx, &mut rng).unwrap();
        assert_eq!(out.median, 4.0);
    }

    #[test]
    fn medi_probe_count_is_logarithmic() {
        let ctx = EstimatorContext::default();
        let mut rng = RandomSource::new(8);
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let x = FiniteRandomVariable::uniform(&xs).unwrap();
        for _ in 0..20 {
            let out = medi(&x, 0.1, &ctx, &mut rng).unwrap();
            assert!(out.probes <= 7);
        }
    }

    #[test]
    fn anneal_identical_states_cost_one() {
        let mut rng = RandomSource::new(1);
        assert_eq!(anneal(1.0, &mut rng).unwrap(), AnnealOutcome { rounds: 1, identical: true });
        assert!(anneal(0.0, &mut rng).is_err());
    }

    #[test]
    fn product_of_point_masses_is_one() {
        let stage = ProductStage { variable: FiniteRandomVariable::point_mass(1.0), fidelity_to_next: Some(1.0) };
        let plan = ProductPlan::new(vec![stage; 3], 1.1, 0.1, ProductConfig::default()).unwrap();
        let ctx = EstimatorContext::default();
        let mut rng = RandomSource::new(2);
        assert_eq!(plan.run(&ctx, &mut rng).unwrap().estimate, 1.0);
    }
}
