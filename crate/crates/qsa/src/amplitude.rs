//! Amplitude estimation inside the two-dimensional Grover plane.
//!
//! For |ψ⟩ with p = ‖Π|ψ⟩‖², the Grover operator G = −R_ψR_Π acts on the plane
//! spanned by Π|ψ⟩ and (id−Π)|ψ⟩ with eigenphases ±θ_p, θ_p = arcsin(√p)/π.
//! Every routine here is simulated by the exact outcome law of that plane.

use crate::phase::{self, OracleMode, PhaseInstance, StageConfig};
use crate::qcore::{RandomSource, TwoLevelState};
use crate::stats::binomial_upper_tail;
use crate::{precondition, Result};
use rand_distr::{Distribution, Geometric};
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

/// Loop cap of the coin flip; reaching it indicates a simulation bug.
pub const COIN_LOOP_CAP: u64 = 1_000_000;

/// Above this many cells the amplitude-estimation distribution is kept only
/// in a window around its peak.
pub const FULL_TABLE_CAP: u64 = 1 << 14;

/// Half-width, in cells, of the retained window.
pub const WINDOW: u64 = 512;

#[derive(Clone, Debug)]
pub struct AmplitudeInstance {
    pub p: f64,
    pub state: TwoLevelState,
    /// Applications of id − 2|ψ⟩⟨ψ| and id − 2Π.
    pub reflections: u64,
    pub restored: bool,
}

impl AmplitudeInstance {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return precondition(format!("amplitude p = {p} outside [0,1]"));
        }
        Ok(Self { p, state: TwoLevelState::initial(p), reflections: 0, restored: true })
    }

    fn mark_damaged(&mut self) {
        self.restored = false;
        self.state = TwoLevelState::bad();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoinFlip {
    pub b: bool,
    /// Iterations of the restoration loop.
    pub iterations: u64,
}

/// Nondestructive coin flip: measure Π, then alternate {|ψ⟩⟨ψ|, id−|ψ⟩⟨ψ|} and
/// {Π, id−Π} until |ψ⟩ is recovered.
///
/// After b is read, the first ψ-measurement restores |ψ⟩ with probability p
/// (b = 1) or 1 − p (b = 0). From the residual state each loop iteration
/// restores with probability r = 2p(1−p).
pub fn coin_flip(inst: &mut AmplitudeInstance, rng: &mut RandomSource) -> Result<CoinFlip> {
    let p = inst.p;
    inst.reflections += 2;
    if p <= 0.0 || p >= 1.0 {
        return Ok(CoinFlip { b: p >= 1.0, iterations: 0 });
    }
    let b = rng.bernoulli(p);
    let first = if b { p } else { 1.0 - p };
    if rng.bernoulli(first) {
        return Ok(CoinFlip { b, iterations: 0 });
    }
    let r = 2.0 * p * (1.0 - p);
    let failures = Geometric::new(r).expect("r in (0,1]").sample(rng);
    let iterations = failures + 1;
    if iterations > COIN_LOOP_CAP {
        return precondition("coin flip loop exceeded its cap");
    }
    inst.reflections += 2 * iterations;
    inst.state = TwoLevelState::initial(p);
    Ok(CoinFlip { b, iterations })
}

/// θ_p = arcsin(√p)/π, the Grover eigenphase in turns.
pub fn grover_phase(p: f64) -> f64 {
    p.sqrt().asin() / PI
}

/// Outcome law of canonical amplitude estimation with `t` points, folded so
/// that cells i and t − i report the same estimate p̃ = sin²(πi/t).
///
/// For `t` above [`FULL_TABLE_CAP`] only folded indices within [`WINDOW`]
/// cells of the peak are tabulated; the masses of the two excluded tails are
/// kept in `below` and `above`.
#[derive(Clone, Debug)]
pub struct AeDistribution {
    pub t: u64,
    /// First folded index f of the table; the value at position j is
    /// sin²(π(first + j)/t).
    pub first: u64,
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
    pub below: f64,
    pub above: f64,
}

impl AeDistribution {
    pub fn total(&self) -> f64 {
        self.below + self.above + self.probs.iter().sum::<f64>()
    }

    /// Mass on estimates with |p̃ − p| < bound.
    pub fn mass_within(&self, p: f64, bound: f64) -> f64 {
        self.values.iter().zip(&self.probs).filter(|(v, _)| (*v - p).abs() < bound).map(|(_, w)| w).sum()
    }
}

struct PeLaw {
    x: f64,
    t: f64,
    sin2: f64,
}

impl PeLaw {
    fn new(theta: f64, t: u64) -> Self {
        let x = theta * t as f64;
        let s = (PI * x.fract()).sin();
        Self { x, t: t as f64, sin2: s * s }
    }

    /// Probability of cell i; periodic in i with period t.
    fn cell(&self, i: f64) -> f64 {
        if self.sin2 == 0.0 {
            let d = (i - self.x).rem_euclid(self.t);
            return if d == 0.0 { 1.0 } else { 0.0 };
        }
        let s = (PI * (i - self.x) / self.t).sin();
        (self.sin2 / (self.t * self.t * s * s)).min(1.0)
    }

    /// Mass of cells a, a+1, …, a+len−1 where the arc stays clear of the
    /// peak by at least [`WINDOW`] cells. Terms near the arc ends are summed
    /// exactly; the interior uses the midpoint integral of csc² with its
    /// first Euler–Maclaurin correction.
    fn arc(&self, a: f64, len: u64) -> f64 {
        if len == 0 || self.sin2 == 0.0 {
            return 0.0;
        }
        if len <= 4 * WINDOW {
            return (0..len).map(|j| self.cell(a + j as f64)).sum();
        }
        let exact: f64 = (0..WINDOW).map(|j| self.cell(a + j as f64)).sum::<f64>()
            + (0..WINDOW).map(|j| self.cell(a + (len - 1 - j) as f64)).sum::<f64>();
        // Interior cells a+W ..= a+len−1−W, shifted so u = i − x ∈ (0, t).
        let lo = a + WINDOW as f64 - self.x;
        let lo = lo - self.t * (lo / self.t).floor();
        let hi = lo + (len - 2 * WINDOW - 1) as f64;
        let k = PI / self.t;
        let cot = |u: f64| 1.0 / (k * u).tan();
        let csc2 = |u: f64| 1.0 / (k * u).sin().powi(2);
        let (ua, ub) = (lo - 0.5, hi + 0.5);
        let integral = (cot(ua) - cot(ub)) / k;
        let dh = |u: f64| -2.0 * k * csc2(u) * cot(u);
        let correction = -(dh(ub) - dh(ua)) / 24.0;
        exact + self.sin2 / (self.t * self.t) * (integral + correction)
    }
}

pub fn ae_distribution(p: f64, t: u64) -> Result<AeDistribution> {
    if t < 2 {
        return precondition("amplitude estimation needs t ≥ 2");
    }
    if !(0.0..=1.0).contains(&p) {
        return precondition(format!("amplitude p = {p} outside [0,1]"));
    }
    let law = PeLaw::new(grover_phase(p), t);
    let half = t / 2;
    let (first, last) = if t <= FULL_TABLE_CAP {
        (0, half)
    } else {
        let c = (law.x.round() as u64).min(half);
        (c.saturating_sub(WINDOW), (c + WINDOW).min(half))
    };
    let mut values = Vec::with_capacity((last - first + 1) as usize);
    let mut probs = Vec::with_capacity(values.capacity());
    for f in first..=last {
        let mut w = law.cell(f as f64);
        if f != 0 && 2 * f != t {
            w += law.cell((t - f) as f64);
        }
        values.push((PI * f as f64 / t as f64).sin().powi(2));
        probs.push(w);
    }
    let below = if first > 0 { law.arc((t - first + 1) as f64, 2 * first - 1) } else { 0.0 };
    let above_len = (t - last).saturating_sub(last + 1);
    let above = if last < half { law.arc((last + 1) as f64, above_len) } else { 0.0 };
    Ok(AeDistribution { t, first, values, probs, below, above })
}

/// The same law from a register-level simulation: Σ_j |j⟩⊗G^j|ψ⟩/√t, inverse
/// Fourier transform on the register, readout folded to p̃.
pub fn ae_distribution_statevector(p: f64, t: u64) -> Result<Vec<(f64, f64)>> {
    use crate::qcore::{grover_operator, C64, ComplexMatrix, ComplexVector};
    let psi = ComplexVector::from_real(&[(1.0 - p).sqrt(), p.sqrt()]);
    let pi = ComplexMatrix::basis_projector(2, &[1]);
    let g = grover_operator(&psi, &pi)?.matrix;
    let n = t as usize;
    let amp = 1.0 / (n as f64).sqrt();
    let mut branch = psi.clone();
    let mut joint = vec![C64::new(0.0, 0.0); 2 * n];
    for j in 0..n {
        joint[2 * j] = branch.entries[0] * amp;
        joint[2 * j + 1] = branch.entries[1] * amp;
        branch = g.apply(&branch);
    }
    let mut out = vec![0.0; n];
    for (a, slot) in out.iter_mut().enumerate() {
        for s in 0..2 {
            let z: C64 = (0..n)
                .map(|j| joint[2 * j + s] * C64::from_polar(amp, -2.0 * PI * (a * j) as f64 / n as f64))
                .sum();
            *slot += z.norm_sqr();
        }
    }
    let mut folded: Vec<(f64, f64)> = Vec::new();
    for f in 0..=n / 2 {
        let mut w = out[f];
        if f != 0 && 2 * f != n {
            w += out[n - f];
        }
        folded.push(((PI * f as f64 / n as f64).sin().powi(2), w));
    }
    Ok(folded)
}

/// Fixed-point amplitude amplification parameters for amplified
/// uncomputation with success target 1 − δ².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Uncomputation {
    /// Odd sequence length L ≥ ln(2/δ)/√λ_lb.
    pub length: u64,
    pub delta: f64,
    /// Probability that the residual state is not restored.
    pub failure: f64,
    /// Subroutine calls (forward or inverse) charged per invocation.
    pub calls: u64,
}

/// Failure probability δ²·T_L(γ√(1−λ))² of fixed-point amplification with
/// γ = cosh(acosh(1/δ)/L), where T_L is the Chebyshev polynomial.
pub fn uncomputation(lambda: f64, lambda_lb: f64, eta: f64) -> Result<Uncomputation> {
    if !(eta > 0.0 && eta < 1.0) {
        return precondition(format!("eta = {eta} outside (0,1)"));
    }
    if lambda_lb <= 0.0 || lambda_lb > lambda + 1e-12 {
        return precondition(format!("lambda_lb = {lambda_lb} exceeds Σπ² = {lambda}"));
    }
    let delta = (eta / 2.0).sqrt();
    let mut length = ((2.0 / delta).ln() / lambda_lb.sqrt()).ceil() as u64;
    if length.is_multiple_of(2) {
        length += 1;
    }
    let l = length as f64;
    let gamma = ((1.0 / delta).acosh() / l).cosh();
    let arg = gamma * (1.0 - lambda).max(0.0).sqrt();
    let cheb = if arg <= 1.0 { (l * arg.acos()).cos() } else { (l * arg.acosh()).cosh() };
    let failure = (delta * delta * cheb * cheb).clamp(0.0, 1.0);
    Ok(Uncomputation { length, delta, failure, calls: 2 * length })
}

/// A finite output law of a subroutine together with its uncomputation
/// behaviour.
#[derive(Clone, Debug)]
pub struct UncomputationTable {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
    pub plan: Uncomputation,
    squared_cdf: Vec<f64>,
    plain_cdf: Vec<f64>,
}

impl UncomputationTable {
    pub fn new(values: Vec<f64>, probs: Vec<f64>, lambda_lb: f64, eta: f64) -> Result<Self> {
        let lambda: f64 = probs.iter().map(|w| w * w).sum();
        let plan = uncomputation(lambda, lambda_lb, eta)?;
        let mut squared_cdf = Vec::with_capacity(probs.len());
        let mut plain_cdf = Vec::with_capacity(probs.len());
        let (mut s, mut q) = (0.0, 0.0);
        for w in &probs {
            s += w * w;
            q += w;
            squared_cdf.push(s);
            plain_cdf.push(q);
        }
        Ok(Self { values, probs, plan, squared_cdf, plain_cdf })
    }

    /// Σπ²
    pub fn lambda(&self) -> f64 {
        *self.squared_cdf.last().unwrap_or(&0.0)
    }

    /// On success the sample follows π²/Σπ²; on failure the residual state
    /// is damaged and the sample follows π.
    pub fn draw(&self, rng: &mut RandomSource) -> (f64, bool) {
        let restored = !rng.bernoulli(self.plan.failure);
        let cdf = if restored { &self.squared_cdf } else { &self.plain_cdf };
        (self.values[rng.categorical_cdf(cdf)], restored)
    }
}

/// Amplified uncomputation of a subroutine with output law `probs`.
pub fn amplified_uncomputation(
    probs: &[f64],
    lambda_lb: f64,
    eta: f64,
    rng: &mut RandomSource,
) -> Result<(usize, bool)> {
    let values: Vec<f64> = (0..probs.len()).map(|i| i as f64).collect();
    let table = UncomputationTable::new(values, probs.to_vec(), lambda_lb, eta)?;
    let (v, restored) = table.draw(rng);
    Ok((v as usize, restored))
}

/// Lower bound on Σπ² assumed by the estimator's uncomputation.
pub const NDAE_LAMBDA_LB: f64 = 1.0 / 8.0;

/// Median count m = ⌈18·ln(2/η)⌉, rounded up to odd.
pub fn median_count(eta: f64) -> u64 {
    let m = (18.0 * (2.0 / eta).ln()).ceil() as u64;
    m | 1
}

/// Precomputed law of one nondestructive amplitude estimate.
///
/// The estimate is two-staged. A median of m estimates at T₁ = ⌈1.25t⌉
/// decides whether p is negligible (median 0 ⇒ output 0); otherwise the
/// output is the median of m estimates at T₂ = ⌈2πt⌉. The first stage makes
/// the zero rule for p ≤ 1/(4t²) hold, the second gives the error bound
/// |p̃ − p| < √(p(1−p))/t + 1/t².
#[derive(Clone, Debug)]
pub struct NdaeTable {
    pub p: f64,
    pub t: f64,
    pub eta: f64,
    pub m: u64,
    pub t1: u64,
    pub t2: u64,
    pub table: UncomputationTable,
    /// Reflections charged per call.
    pub reflections: u64,
}

impl NdaeTable {
    pub fn build(p: f64, t: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 0.5) {
            return precondition(format!("ndae needs eta ∈ (0, 1/2), got {eta}"));
        }
        if t < 1.0 {
            return precondition("ndae needs t ≥ 1");
        }
        let m = median_count(eta);
        let k = m.div_ceil(2);
        let t1 = (1.25 * t).ceil() as u64;
        let t2 = (2.0 * PI * t).ceil() as u64;
        let theta = grover_phase(p);
        let zero_single = PeLaw::new(theta, t1.max(2)).cell(0.0);
        let p0 = binomial_upper_tail(m, zero_single, k);

        let ae = ae_distribution(p, t2)?;
        let median_cdf = |f: f64| binomial_upper_tail(m, f.clamp(0.0, 1.0), k);
        let mut cum = ae.below;
        let mut prev = median_cdf(cum);
        let mut values = Vec::with_capacity(ae.values.len() + 1);
        let mut probs = Vec::with_capacity(ae.values.len() + 1);
        let lead = prev;
        for (j, (&v, &w)) in ae.values.iter().zip(&ae.probs).enumerate() {
            cum += w;
            let g = if j + 1 == ae.values.len() { 1.0 } else { median_cdf(cum) };
            let mut mass = g - prev;
            if j == 0 {
                mass += lead;
            }
            prev = g;
            let mass = (1.0 - p0) * mass.max(0.0);
            if mass > 0.0 {
                values.push(v);
                probs.push(mass);
            }
        }
        if values.first() == Some(&0.0) {
            probs[0] += p0;
        } else {
            values.insert(0, 0.0);
            probs.insert(0, p0);
        }
        let table = UncomputationTable::new(values, probs, NDAE_LAMBDA_LB, eta)?;
        let reflections = table.plan.calls * 2 * m * (t1 + t2);
        Ok(Self { p, t, eta, m, t1, t2, table, reflections })
    }

    /// P(|p̃ − p| < √(p(1−p))/t + 1/t²) under the output law.
    pub fn error_bound_mass(&self) -> f64 {
        let bound = (self.p * (1.0 - self.p)).sqrt() / self.t + 1.0 / (self.t * self.t);
        self.table
            .values
            .iter()
            .zip(&self.table.probs)
            .filter(|(v, _)| (*v - self.p).abs() < bound)
            .map(|(_, w)| w)
            .sum()
    }

    pub fn zero_mass(&self) -> f64 {
        self.table.values.iter().zip(&self.table.probs).filter(|(v, _)| **v == 0.0).map(|(_, w)| w).sum()
    }
}

/// Shared oracle settings and caches for the estimators.
#[derive(Debug)]
pub struct EstimatorContext {
    pub mode: OracleMode,
    pub stage: StageConfig,
    /// Multiplies the Θ-constant of the amplitude-to-phase precision ε′.
    pub eps_prime_scale: f64,
    ndae_cache: RefCell<HashMap<(u64, u64, u64), Rc<NdaeTable>>>,
}

const NDAE_CACHE_CAP: usize = 4096;

impl Default for EstimatorContext {
    fn default() -> Self {
        Self::new(OracleMode::Exact)
    }
}

impl EstimatorContext {
    pub fn new(mode: OracleMode) -> Self {
        Self { mode, stage: StageConfig::default(), eps_prime_scale: 1.0, ndae_cache: RefCell::new(HashMap::new()) }
    }

    pub fn ndae_table(&self, p: f64, t: f64, eta: f64) -> Result<Rc<NdaeTable>> {
        let key = (p.to_bits(), t.to_bits(), eta.to_bits());
        if let Some(table) = self.ndae_cache.borrow().get(&key) {
            return Ok(table.clone());
        }
        let table = Rc::new(NdaeTable::build(p, t, eta)?);
        let mut cache = self.ndae_cache.borrow_mut();
        if cache.len() >= NDAE_CACHE_CAP {
            cache.clear();
        }
        cache.insert(key, table.clone());
        Ok(table)
    }
}

/// Nondestructive amplitude estimation.
pub fn ndae(
    inst: &mut AmplitudeInstance,
    t: f64,
    eta: f64,
    ctx: &EstimatorContext,
    rng: &mut RandomSource,
) -> Result<f64> {
    let table = ctx.ndae_table(inst.p, t, eta)?;
    inst.reflections += table.reflections;
    let (v, restored) = table.table.draw(rng);
    if !restored {
        inst.mark_damaged();
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmplificationResult {
    pub tau: f64,
    pub p_amplified: f64,
    pub eps_used: f64,
    /// Reflections through |ψ⟩ and Π per application of the amplifier.
    pub reflections: u64,
}

/// Reflections charged per application of a linear amplifier, ⌈τ·log₂(1/ε)⌉.
pub fn amplifier_cost(tau: f64, eps: f64) -> u64 {
    (tau * (1.0 / eps).log2()).ceil().max(1.0) as u64
}

/// Linear amplitude amplification √p ↦ τ√p.
pub fn linear_amplify(p: f64, tau: f64, eps: f64, mode: OracleMode) -> Result<AmplificationResult> {
    if tau < 1.0 {
        return precondition("linear amplification needs τ ≥ 1");
    }
    if tau > 1.0 && tau * p.sqrt() > 0.5 {
        return precondition(format!("τ√p = {} exceeds 1/2", tau * p.sqrt()));
    }
    Ok(amplify_unchecked(p, tau, eps, mode))
}

fn amplify_unchecked(p: f64, tau: f64, eps: f64, mode: OracleMode) -> AmplificationResult {
    let p_amplified = match mode {
        OracleMode::Exact => (tau * tau * p).min(1.0),
        OracleMode::Adversarial { sign } => ((tau * p.sqrt()).min(1.0) + sign * eps).clamp(0.0, 1.0).powi(2),
    };
    AmplificationResult { tau, p_amplified, eps_used: eps, reflections: amplifier_cost(tau, eps) }
}

/// Amplitude-to-phase conversion: an eigenphase θ = p/(2π) (turns), shifted
/// by ±ε′/(2π) in adversarial mode.
pub fn amp_to_phase_oracle(p_amplified: f64, eps_prime: f64, mode: OracleMode) -> Result<PhaseInstance> {
    let radians = match mode {
        OracleMode::Exact => p_amplified,
        OracleMode::Adversarial { sign } => (p_amplified + sign * eps_prime).max(0.0),
    };
    PhaseInstance::new(radians / (2.0 * PI))
}

/// Applications of the amplified state's preparation per controlled use of
/// the converted unitary, ⌈log₂(1/ε′)⌉.
pub fn phase_conversion_cost(eps_prime: f64) -> u64 {
    (1.0 / eps_prime).log2().ceil().max(1.0) as u64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NduaeBranch {
    Coin,
    Phase,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NduaeOutcome {
    pub estimate: f64,
    pub branch: NduaeBranch,
    pub rough: f64,
    pub tau: f64,
    /// The amplification precondition τ√p ≤ 1/2 failed because the rough
    /// estimate was off; the amplifier saturated instead.
    pub saturated: bool,
    pub shift_found: bool,
    /// Controlled applications of the phase oracle in the phase branch.
    pub controlled_ops: u64,
}

/// Nondestructive unbiased amplitude estimation.
pub fn nduae(
    inst: &mut AmplitudeInstance,
    t: f64,
    eps: f64,
    ctx: &EstimatorContext,
    rng: &mut RandomSource,
) -> Result<NduaeOutcome> {
    if t < 4.0 {
        return precondition("nduae needs t ≥ 4");
    }
    if !(eps > 0.0 && eps < 1.0) {
        return precondition(format!("eps = {eps} outside (0,1)"));
    }
    let q = ndae(inst, 2.0 * t, eps / 8.0, ctx, rng)?;
    let tau = if q > 0.0 { (0.25 * t.min(1.0 / q.sqrt())).max(1.0) } else { (0.25 * t).max(1.0) };
    let (amp, saturated) = match linear_amplify(inst.p, tau, eps / 40.0, ctx.mode) {
        Ok(a) => (a, false),
        Err(_) => (amplify_unchecked(inst.p, tau, eps / 40.0, ctx.mode), true),
    };
    // A reflection through the amplified state costs two amplifier uses and
    // one reflection through |ψ⟩.
    let amplified_reflection = 2 * amp.reflections + 1;
    let tau2 = tau * tau;
    if q <= 1.0 / (t * t) {
        let mut amplified = AmplitudeInstance::new(amp.p_amplified)?;
        let flip = coin_flip(&mut amplified, rng)?;
        inst.reflections += amplified.reflections * amplified_reflection;
        let estimate = if flip.b { 1.0 / tau2 } else { 0.0 };
        return Ok(NduaeOutcome { estimate, branch: NduaeBranch::Coin, rough: q, tau, saturated, shift_found: true, controlled_ops: 0 });
    }
    let log_term = (t / (eps * tau)).ln().max(1.0);
    let eps_prime = (ctx.eps_prime_scale * tau2 / (t * t * log_term)).min(0.5);
    let mut phase_inst = amp_to_phase_oracle(amp.p_amplified, eps_prime, ctx.mode)?;
    let t_upe = ((7.0 * t / tau).ceil() as u64).next_power_of_two().max(8);
    let out = phase::upe(&mut phase_inst, t_upe, eps / 90.0, ctx.mode, ctx.stage, rng)?;
    inst.reflections += phase_inst.controlled_ops * phase_conversion_cost(eps_prime) * amplified_reflection;
    let estimate = 2.0 * PI * out.estimate / tau2;
    Ok(NduaeOutcome {
        estimate,
        branch: NduaeBranch::Phase,
        rough: q,
        tau,
        saturated,
        shift_found: out.shift_found,
        controlled_ops: phase_inst.controlled_ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coin_degenerate_cases() {
        let mut rng = RandomSource::new(1);
        for _ in 0..10 {
            let mut z = AmplitudeInstance::new(0.0).unwrap();
            assert_eq!(coin_flip(&mut z, &mut rng).unwrap(), CoinFlip { b: false, iterations: 0 });
            let mut o = AmplitudeInstance::new(1.0).unwrap();
            assert_eq!(coin_flip(&mut o, &mut rng).unwrap(), CoinFlip { b: true, iterations: 0 });
        }
    }

    #[test]
    fn ae_zero_and_grid_cases() {
        let d = ae_distribution(0.0, 8).unwrap();
        assert_eq!(d.probs[0], 1.0);
        let p = (PI * 3.0 / 8.0).sin().powi(2);
        let d = ae_distribution(p, 8).unwrap();
        assert!((d.probs[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ae_half_mass_near_truth() {
        let d = ae_distribution(0.5, 8).unwrap();
        let bound = 2.0 * PI * 0.5 / 8.0 + PI * PI / 64.0;
        assert!(d.mass_within(0.5, bound) >= 8.0 / (PI * PI));
        assert!((d.total() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn windowed_table_keeps_total_mass() {
        for &p in &[1e-9, 1e-4, 0.03, 0.3, 0.77, 0.999] {
            let d = ae_distribution(p, 1_234_567).unwrap();
            assert!((d.total() - 1.0).abs() < 1e-9, "p={p} total={}", d.total());
        }
    }

    #[test]
    fn uncomputation_rejects_optimistic_bound() {
        assert!(uncomputation(0.1, 0.2, 0.05).is_err());
        let u = uncomputation(1.0, 0.125, 0.05).unwrap();
        assert!(u.failure <= 0.025 + 1e-15);
        assert_eq!(u.length % 2, 1);
    }

    #[test]
    fn ndae_zero_amplitude_is_exact() {
        let t = NdaeTable::build(0.0, 8.0, 0.05).unwrap();
        assert_eq!(t.table.values, vec![0.0]);
        assert!((t.zero_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_amplification_examples() {
        let a = linear_amplify(0.3, 1.0, 0.01, OracleMode::Exact).unwrap();
        assert_eq!(a.p_amplified, 0.3);
        let a = linear_amplify(0.01, 4.0, 0.01, OracleMode::Exact).unwrap();
        assert!((a.p_amplified - 0.16).abs() < 1e-15);
        assert!(linear_amplify(0.1, 4.0, 0.01, OracleMode::Exact).is_err());
    }

    #[test]
    fn phase_conversion_scaling() {
        assert_eq!(amp_to_phase_oracle(0.0, 1e-3, OracleMode::Exact).unwrap().theta_f64(), 0.0);
        let th = amp_to_phase_oracle(PI / 4.0, 1e-3, OracleMode::Exact).unwrap().theta_f64();
        assert!((th - 0.125).abs() < 1e-15);
    }

    #[test]
    fn nduae_zero_is_zero() {
        let ctx = EstimatorContext::default();
        let mut rng = RandomSource::new(4);
        for _ in 0..50 {
            let mut inst = AmplitudeInstance::new(0.0).unwrap();
            assert_eq!(nduae(&mut inst, 16.0, 0.01, &ctx, &mut rng).unwrap().estimate, 0.0);
        }
    }
}
