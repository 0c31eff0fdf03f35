//! Phase estimation on an exact eigenvector.
//!
//! Since |ψ⟩ is an eigenvector of U with eigenphase θ, every run of phase
//! estimation leaves |ψ⟩ untouched and reports cell i ∈ {0..t−1} with the
//! closed-form probability
//!
//! ```text
//! p(i) = sin²(t·Δᵢ·π) / (t²·sin²(Δᵢ·π))
//! ```
//!
//! where Δᵢ is the circular distance between θ and i/t. The whole (U, |ψ⟩)
//! pair is therefore simulated by the scalar θ held in 128-bit fixed point.

use crate::qcore::{ComplexMatrix, ComplexVector, RandomSource, C64};
use crate::{precondition, Result};
use std::f64::consts::PI;

const TWO_POW_128: f64 = 340282366920938463463374607431768211456.0;

/// A phase in turns, stored as a 128-bit binary fraction of a full turn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FixedPhase(pub u128);

impl FixedPhase {
    pub const ZERO: Self = Self(0);

    /// Exact conversion of `x mod 1`; every f64 in [0,1) is a dyadic rational.
    pub fn from_f64(x: f64) -> Self {
        let m = x.rem_euclid(1.0);
        Self((m * TWO_POW_128) as u128)
    }

    /// num / 2^log_den.
    pub fn dyadic(num: u128, log_den: u32) -> Self {
        if log_den == 0 {
            return Self::ZERO;
        }
        Self(num << (128 - log_den))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / TWO_POW_128
    }

    pub fn add(self, other: Self) -> Self {
        Self(self.0.wrapping_add(other.0))
    }

    pub fn sub(self, other: Self) -> Self {
        Self(self.0.wrapping_sub(other.0))
    }

    /// The first τ binary digits, θ_{≤τ}.
    pub fn high(self, tau: u32) -> Self {
        match tau {
            0 => Self::ZERO,
            t if t >= 128 => self,
            t => Self(self.0 & !(u128::MAX >> t)),
        }
    }

    /// The remaining digits scaled up, θ_{>τ} = 2^τ·θ mod 1.
    pub fn low(self, tau: u32) -> Self {
        if tau >= 128 {
            Self::ZERO
        } else {
            Self(self.0 << tau)
        }
    }

    /// Integer cell ⌊θ·2^bits⌋ and the fractional remainder in cell units.
    pub fn cell(self, bits: u32) -> (u64, f64) {
        if bits == 0 {
            return (0, self.to_f64());
        }
        let c = (self.0 >> (128 - bits)) as u64;
        (c, self.low(bits).to_f64())
    }
}

/// θ = high + 2^{−τ}·low with `high` having at most τ binary digits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BitSplit {
    pub tau: u32,
    pub high: f64,
    pub low: f64,
    pub high_fixed: FixedPhase,
    pub low_fixed: FixedPhase,
}

impl BitSplit {
    /// Recombines the two parts exactly in fixed point.
    pub fn reconstruct(&self) -> FixedPhase {
        let shifted = if self.tau >= 128 { 0 } else { self.low_fixed.0 >> self.tau };
        FixedPhase(self.high_fixed.0 | shifted)
    }
}

pub fn bit_split(theta: f64, tau: u32) -> BitSplit {
    split_fixed(FixedPhase::from_f64(theta), tau)
}

pub fn split_fixed(theta: FixedPhase, tau: u32) -> BitSplit {
    let high_fixed = theta.high(tau);
    let low_fixed = theta.low(tau);
    BitSplit { tau, high: high_fixed.to_f64(), low: low_fixed.to_f64(), high_fixed, low_fixed }
}

fn check_power_of_two(t: u64) -> Result<u32> {
    if t < 2 || !t.is_power_of_two() {
        return precondition(format!("t = {t} must be a power of two ≥ 2"));
    }
    Ok(t.trailing_zeros())
}

/// Probability of a cell at distance `d` cells from the true position when
/// the fractional offset is `frac` and `sin2_frac` = sin²(π·frac).
#[inline]
fn cell_weight(sin2_frac: f64, d: f64, t: f64) -> f64 {
    if sin2_frac == 0.0 {
        return if d == 0.0 { 1.0 } else { 0.0 };
    }
    let s = (PI * d / t).sin();
    (sin2_frac / (t * t * s * s)).min(1.0)
}

/// Output distribution of textbook phase estimation with `t` points.
pub fn pe_distribution(theta: f64, t: u64) -> Result<Vec<f64>> {
    let bits = check_power_of_two(t)?;
    let (c, frac) = FixedPhase::from_f64(theta).cell(bits);
    Ok(cell_distribution(c, frac, t))
}

/// Phase-estimation distribution for a position `c + frac` in cell units on
/// a circle of `t` cells; `t` need not be a power of two.
pub fn cell_distribution(c: u64, frac: f64, t: u64) -> Vec<f64> {
    let tf = t as f64;
    let s = (PI * frac).sin();
    let sin2 = s * s;
    (0..t)
        .map(|i| {
            let raw = (i as f64 - c as f64 - frac).rem_euclid(tf);
            let d = raw.min(tf - raw);
            cell_weight(sin2, d, tf)
        })
        .collect()
}

/// The same distribution computed by simulating the full register.
///
/// A ⌈log t⌉-qubit counting register in uniform superposition picks up the
/// phase e^{2πi·jθ} on |j⟩ (one system qubit stays in the eigenvector), then
/// the inverse Fourier transform is applied as a dense unitary and the
/// register is read out. Used to validate [`pe_distribution`].
pub fn pe_distribution_statevector(theta: f64, t: u64) -> Result<Vec<f64>> {
    check_power_of_two(t)?;
    let n = t as usize;
    let amp = 1.0 / (n as f64).sqrt();
    // Register ⊗ system qubit in |1⟩, the eigenvector of diag(1, e^{2πiθ}).
    let dim = 2 * n;
    let mut state = vec![C64::new(0.0, 0.0); dim];
    for j in 0..n {
        state[2 * j + 1] = C64::from_polar(amp, 2.0 * PI * theta * j as f64);
    }
    let mut qft_inv = ComplexMatrix::zeros(dim);
    for a in 0..n {
        for j in 0..n {
            let z = C64::from_polar(amp, -2.0 * PI * (a * j) as f64 / n as f64);
            for s in 0..2 {
                qft_inv.set(2 * a + s, 2 * j + s, z);
            }
        }
    }
    let qft_inv = qft_inv.into_unitary()?;
    let out = crate::qcore::apply_unitary(&qft_inv, &ComplexVector::new(state))?;
    Ok((0..n).map(|a| out.entries[2 * a].norm_sqr() + out.entries[2 * a + 1].norm_sqr()).collect())
}

/// Draws outcome counts of `n` independent phase-estimation runs at the
/// position `c + frac` on a circle of `t` cells.
///
/// Cells are visited in order of distance from the position and each count
/// is an exact conditional binomial. Visiting stops as soon as fewer than
/// `min_count` runs remain unassigned, so only cells that can still reach
/// `min_count` are materialized. With `min_count = 1` the full multinomial
/// is drawn.
pub fn draw_cell_counts(
    c: u64,
    frac: f64,
    t: u64,
    n: u64,
    min_count: u64,
    rng: &mut RandomSource,
) -> Vec<(u64, u64)> {
    let tf = t as f64;
    let s = (PI * frac).sin();
    let sin2 = s * s;
    let mut remaining_runs = n;
    let mut remaining_mass = 1.0f64;
    let mut counts = Vec::new();
    let min_count = min_count.max(1);
    for step in 0..t {
        if remaining_runs < min_count {
            break;
        }
        let offset: i64 = if step % 2 == 0 { -((step / 2) as i64) } else { (step / 2 + 1) as i64 };
        let cell = (c as i64 + offset).rem_euclid(t as i64) as u64;
        let d = (offset as f64 - frac).abs();
        let d = d.min(tf - d);
        let w = cell_weight(sin2, d, tf);
        let k = if step + 1 == t || w >= remaining_mass {
            remaining_runs
        } else {
            rng.binomial(remaining_runs, w / remaining_mass)
        };
        remaining_mass = (remaining_mass - w).max(0.0);
        remaining_runs -= k;
        if k > 0 {
            counts.push((cell, k));
        }
    }
    counts
}

/// The simulated (U, |ψ⟩) pair: an eigenphase with a cost counter.
#[derive(Clone, Debug)]
pub struct PhaseInstance {
    pub theta: FixedPhase,
    pub controlled_ops: u64,
    pub restored: bool,
}

impl PhaseInstance {
    /// θ must lie in [0, 1/2].
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&theta) {
            return precondition(format!("eigenphase {theta} outside [0, 1/2]"));
        }
        Ok(Self { theta: FixedPhase::from_f64(theta), controlled_ops: 0, restored: true })
    }

    pub fn theta_f64(&self) -> f64 {
        self.theta.to_f64()
    }
}

/// One run of phase estimation on U_φ = e^{2πiφ}U with `t` points; returns
/// the reported cell i (the estimate is i/t).
pub fn sample_phase_estimate(
    inst: &mut PhaseInstance,
    phi: FixedPhase,
    t: u64,
    rng: &mut RandomSource,
) -> Result<u64> {
    let bits = check_power_of_two(t)?;
    let (c, frac) = inst.theta.add(phi).cell(bits);
    inst.controlled_ops += t;
    let counts = draw_cell_counts(c, frac, t, 1, 1, rng);
    Ok(counts[0].0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseShift {
    pub k: u32,
    /// φ = k/(16·t′)
    pub phi: FixedPhase,
    pub t_prime: u64,
}

impl PhaseShift {
    pub fn new(k: u32, t_prime: u64) -> Self {
        let log_den = 4 + t_prime.trailing_zeros();
        Self { k, phi: FixedPhase::dyadic(k as u128, log_den), t_prime }
    }
}

/// Candidate shifts tried by the exact-phase stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ShiftGrid {
    /// k ∈ {0..8} as in the algorithm listing. Spans only half of a cell of
    /// width 1/t, so for many θ no shift can satisfy the detection window.
    Verbatim,
    /// k ∈ {0..127}: shifts k/(16t′) covering a full period 1/t.
    #[default]
    FullPeriod,
}

impl ShiftGrid {
    pub fn len(self) -> u32 {
        match self {
            ShiftGrid::Verbatim => 9,
            ShiftGrid::FullPeriod => 128,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ShiftOrder {
    /// k = 0, 1, 2, …
    Natural,
    /// Round k = 0 first; remaining shifts by circular distance from the
    /// shift its counts predict to land in the detection window.
    #[default]
    Predicted,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageConfig {
    pub grid: ShiftGrid,
    pub order: ShiftOrder,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self { grid: ShiftGrid::FullPeriod, order: ShiftOrder::Predicted }
    }
}

/// Repetitions per candidate shift, N = ⌈200·ln(72t′/ε)⌉.
pub fn repetitions(t_prime: u64, eps: f64) -> u64 {
    (200.0 * (72.0 * t_prime as f64 / eps).ln()).ceil() as u64
}

/// Result of the exact-phase stage.
#[derive(Clone, Debug, PartialEq)]
pub enum PhaseStage {
    /// A pair (i, i+1) of frequent cells with i inside the window was found.
    Found { shift: PhaseShift, theta_hat: FixedPhase, cell: u64, rounds: u32 },
    /// All candidate shifts were exhausted. `fallback` is the plain
    /// phase-estimation estimate of θ from the most frequent cell of the
    /// last round.
    NoShiftFound { last_shift: PhaseShift, fallback: f64, rounds: u32 },
}

/// Window test on the low digits of i/t′: (i/t′)_{>τ} = (i mod 8)/8 must lie
/// strictly inside (4/7, 5/7), which only i ≡ 5 (mod 8) satisfies.
fn in_window(cell: u64) -> bool {
    let r = cell % 8;
    32 < 7 * r && 7 * r < 40
}

/// Steps 1–5: find a shift φ and the exact high digits θ̂ = (θ+φ)_{≤τ}.
pub fn exact_phase_stage(
    inst: &mut PhaseInstance,
    t: u64,
    eps: f64,
    config: StageConfig,
    rng: &mut RandomSource,
) -> Result<PhaseStage> {
    let tau = check_power_of_two(t)?;
    if t < 8 {
        return precondition("exact phase stage needs t ≥ 8");
    }
    if !(eps > 0.0 && eps < 1.0) {
        return precondition(format!("eps = {eps} outside (0,1)"));
    }
    let t_prime = 8 * t;
    let bits = tau + 3;
    let n = repetitions(t_prime, eps);
    // count·100 ≥ 17·N, the 0.17 frequency threshold in integers.
    let threshold = (17 * n).div_ceil(100);
    let grid = config.grid.len();
    let mut schedule: Vec<u32> = (0..grid).collect();
    let mut rounds = 0u32;
    let mut idx = 0usize;
    let mut last = (PhaseShift::new(0, t_prime), 0u64);
    while idx < schedule.len() {
        let shift = PhaseShift::new(schedule[idx], t_prime);
        idx += 1;
        rounds += 1;
        let (c, frac) = inst.theta.add(shift.phi).cell(bits);
        inst.controlled_ops += n * t_prime;
        let counts = draw_cell_counts(c, frac, t_prime, n, threshold.min(n), rng);
        let heavy = |cell: u64| counts.iter().any(|&(x, k)| x == cell && k >= threshold);
        let mut found = None;
        for &(cell, k) in &counts {
            if k >= threshold && in_window(cell) && heavy((cell + 1) % t_prime) {
                found = Some(cell);
                break;
            }
        }
        let mode = counts.iter().max_by_key(|&&(_, k)| k).map(|&(x, _)| x).unwrap_or(c);
        last = (shift, mode);
        if let Some(cell) = found {
            let theta_hat = FixedPhase::dyadic((cell / 8) as u128, tau);
            return Ok(PhaseStage::Found { shift, theta_hat, cell, rounds });
        }
        if rounds == 1 && config.order == ShiftOrder::Predicted && grid == 128 {
            let target = predicted_shift(&counts, t_prime);
            schedule[1..].sort_by_key(|&k| {
                let d = (k as i64 - target as i64).rem_euclid(128);
                (d.min(128 - d), k)
            });
        }
    }
    let (last_shift, mode) = last;
    let fallback = mode as f64 / t_prime as f64 - last_shift.phi.to_f64();
    Ok(PhaseStage::NoShiftFound { last_shift, fallback, rounds })
}

/// Shift index k that moves the position estimated from unshifted counts to
/// the middle of a window pair (5.5 cells mod 8).
fn predicted_shift(counts: &[(u64, u64)], t_prime: u64) -> u32 {
    let Some(&(mode, nm)) = counts.iter().max_by_key(|&&(_, k)| k) else {
        return 0;
    };
    let get = |cell: u64| counts.iter().find(|&&(x, _)| x == cell).map(|&(_, k)| k).unwrap_or(0);
    let up = get((mode + 1) % t_prime);
    let down = get((mode + t_prime - 1) % t_prime);
    // Position between the mode and its heavier neighbour from the count ratio.
    let position = if up >= down {
        let r = (up as f64 / nm as f64).sqrt();
        mode as f64 + r / (1.0 + r)
    } else {
        let r = (down as f64 / nm as f64).sqrt();
        mode as f64 - r / (1.0 + r)
    };
    let cells_to_move = (5.5 - position).rem_euclid(8.0);
    ((cells_to_move * 16.0).round() as u32) % 128
}

/// How conversion oracles deviate from their ideal outputs.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum OracleMode {
    /// Ideal contract outputs.
    #[default]
    Exact,
    /// Worst admissible ε-perturbation with the given sign (+1 or −1).
    Adversarial { sign: f64 },
}

/// Phase-to-amplitude conversion: the amplitude of the auxiliary register
/// for a target value `lambda` in the admissible band [1/4, 3/4].
pub fn phase_to_amplitude_oracle(lambda: f64, eps: f64, mode: OracleMode) -> Result<f64> {
    if !(0.25..=0.75).contains(&lambda) {
        return precondition(format!("phase {lambda} outside the conversion band [1/4, 3/4]"));
    }
    Ok(match mode {
        OracleMode::Exact => lambda,
        OracleMode::Adversarial { sign } => (lambda.sqrt() + sign * eps).clamp(0.0, 1.0).powi(2),
    })
}

/// Applications of the converted unitary charged per conversion.
pub fn conversion_applications(eps: f64) -> u64 {
    (1.0 / eps).log2().ceil().max(1.0) as u64
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpeOutcome {
    /// θ̃ = θ̂ + b/t − φ
    pub estimate: f64,
    pub shift_found: bool,
    pub rounds: u32,
    pub b: bool,
}

/// Unbiased low-variance phase estimation.
///
/// After the exact stage, (θ+φ) = θ̂ + λ/t with λ = (θ+φ)_{>τ}. A coin b with
/// P(b = 1) = p′ ≈ λ then gives E[θ̂ + b/t − φ] = θ. The coin is realized by
/// phase-to-amplitude conversion on U_φ^t followed by a measurement, which
/// leaves |ψ⟩ intact.
pub fn upe(
    inst: &mut PhaseInstance,
    t: u64,
    eps: f64,
    mode: OracleMode,
    config: StageConfig,
    rng: &mut RandomSource,
) -> Result<UpeOutcome> {
    if inst.theta > FixedPhase::dyadic(1, 1) {
        return precondition("upe needs θ ∈ [0, 1/2]");
    }
    let tau = check_power_of_two(t)?;
    match exact_phase_stage(inst, t, eps, config, rng)? {
        PhaseStage::Found { shift, theta_hat, rounds, .. } => {
            let lambda = inst.theta.add(shift.phi).low(tau).to_f64();
            let p_prime = phase_to_amplitude_oracle(lambda, eps / 4.0, mode)?;
            inst.controlled_ops += t * conversion_applications(eps / 4.0);
            let b = rng.bernoulli(p_prime);
            let estimate = theta_hat.to_f64() + if b { 1.0 / t as f64 } else { 0.0 } - shift.phi.to_f64();
            Ok(UpeOutcome { estimate, shift_found: true, rounds, b })
        }
        PhaseStage::NoShiftFound { fallback, rounds, .. } => {
            Ok(UpeOutcome { estimate: fallback, shift_found: false, rounds, b: false })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_phase_is_certain() {
        let p = pe_distribution(3.0 / 8.0, 8).unwrap();
        assert_eq!(p[3], 1.0);
        assert!(p.iter().enumerate().all(|(i, &x)| i == 3 || x == 0.0));
    }

    #[test]
    fn half_cell_offset_splits_evenly() {
        let p = pe_distribution(1.0 / 16.0, 8).unwrap();
        let expect = 1.0 / (64.0 * (PI / 16.0).sin().powi(2));
        assert!((p[0] - expect).abs() < 1e-14 && (p[1] - expect).abs() < 1e-14);
        assert!((expect - 0.4105).abs() < 1e-4);
    }

    #[test]
    fn closed_form_matches_register_simulation() {
        let mut rng = RandomSource::new(21);
        for t in [8u64, 16] {
            for _ in 0..5 {
                let theta = rng.uniform();
                let a = pe_distribution(theta, t).unwrap();
                let b = pe_distribution_statevector(theta, t).unwrap();
                let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-10, "t={t} θ={theta} diff={diff}");
            }
        }
    }

    #[test]
    fn bit_split_examples() {
        let s = bit_split(0.6875, 2);
        assert_eq!((s.high, s.low), (0.5, 0.75));
        let s = bit_split(0.3, 0);
        assert_eq!((s.high, s.low), (0.0, 0.3));
        let s = bit_split(5.0 / 7.0, 3);
        assert_eq!(s.high, 5.0 / 8.0);
        assert!((s.low - (8.0 * 5.0 / 7.0 - 5.0)).abs() < 1e-15);
    }

    #[test]
    fn shift_is_dyadic() {
        let s = PhaseShift::new(3, 64);
        assert_eq!(s.phi.to_f64(), 3.0 / 1024.0);
    }

    #[test]
    fn window_selects_residue_five() {
        let hits: Vec<u64> = (0..16).filter(|&i| in_window(i)).collect();
        assert_eq!(hits, vec![5, 13]);
    }

    #[test]
    fn sampled_estimate_costs_t() {
        let mut inst = PhaseInstance::new(0.25).unwrap();
        let mut rng = RandomSource::new(1);
        let i = sample_phase_estimate(&mut inst, FixedPhase::ZERO, 16, &mut rng).unwrap();
        assert_eq!(i, 4);
        assert_eq!(inst.controlled_ops, 16);
    }

    #[test]
    fn full_multinomial_conserves_runs() {
        let mut rng = RandomSource::new(2);
        let counts = draw_cell_counts(3, 0.37, 16, 1000, 1, &mut rng);
        assert_eq!(counts.iter().map(|c| c.1).sum::<u64>(), 1000);
    }

    #[test]
    fn upe_zero_phase_finds_shift() {
        let mut rng = RandomSource::new(9);
        let mut inst = PhaseInstance::new(0.0).unwrap();
        let out = upe(&mut inst, 16, 0.01, OracleMode::Exact, StageConfig::default(), &mut rng).unwrap();
        assert!(out.shift_found);
        assert!(out.estimate.abs() <= 1.0 / 16.0 + 1e-12);
    }

    #[test]
    fn conversion_band_is_enforced() {
        assert!(phase_to_amplitude_oracle(0.2, 0.01, OracleMode::Exact).is_err());
        assert_eq!(phase_to_amplitude_oracle(0.3, 0.01, OracleMode::Exact).unwrap(), 0.3);
        let p = phase_to_amplitude_oracle(0.3, 0.01, OracleMode::Adversarial { sign: 1.0 }).unwrap();
        assert!((p.sqrt() - 0.3f64.sqrt() - 0.01).abs() < 1e-12);
    }
}
