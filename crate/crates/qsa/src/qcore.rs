//! Seeded randomness and dense complex linear algebra at desk scale.
//!
//! Matrices are row-major and carry a tag recording which structural
//! property was verified at construction. Operations that need a unitary or
//! a projector check the tag rather than re-verifying.

use crate::{Error, Result};
use nalgebra::{DMatrix, Schur};
use num_complex::Complex;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

pub type C64 = Complex<f64>;

/// Largest dimension accepted by the dense routines.
pub const DENSE_CAP: usize = 1 << 12;

pub const NORM_TOL: f64 = 1e-10;

/// Measurement probabilities this close to 0 or 1 are treated as certain.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Deterministic random source.
///
/// Stream derivation: the ChaCha8 key is the 32-byte array whose first eight
/// bytes are `seed` in little-endian order and whose remaining bytes are zero;
/// the ChaCha stream id is the repetition index; the word position starts at
/// zero. The same `(seed, stream)` pair and the same call sequence always give
/// the same outputs.
#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Independent stream for Monte Carlo repetition `rep`.
    pub fn substream(seed: u64, rep: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(rep);
        Self { seed, stream: rep, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw from [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Bernoulli draw; certain outcomes consume no randomness.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform() < p
        }
    }

    /// Exact binomial draw; certain outcomes consume no randomness.
    pub fn binomial(&mut self, n: u64, p: f64) -> u64 {
        if n == 0 || p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        Binomial::new(n, p).expect("p checked in (0,1)").sample(&mut self.rng)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Index drawn from cumulative weights `cdf` (last entry is the total).
    pub fn categorical_cdf(&mut self, cdf: &[f64]) -> usize {
        let total = *cdf.last().expect("non-empty cdf");
        let u = self.uniform() * total;
        cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVector {
    pub entries: Vec<C64>,
}

impl ComplexVector {
    pub fn new(entries: Vec<C64>) -> Self {
        Self { entries }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut entries = vec![C64::new(0.0, 0.0); dim];
        entries[i] = C64::new(1.0, 0.0);
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// ⟨self|other⟩, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.entries.iter().map(|z| z / n).collect())
    }

    pub fn is_state(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    /// Random state with i.i.d. complex Gaussian entries, normalized.
    pub fn random_state(dim: usize, rng: &mut RandomSource) -> Self {
        let v: Vec<C64> = (0..dim).map(|_| C64::new(rng.normal(), rng.normal())).collect();
        Self::new(v).normalized()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixTag {
    General,
    Unitary,
    Projector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<C64>,
    tag: MatrixTag,
}

impl ComplexMatrix {
    pub fn from_entries(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        Ok(Self { dim, entries, tag: MatrixTag::General })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![C64::new(0.0, 0.0); dim * dim], tag: MatrixTag::General }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = C64::new(1.0, 0.0);
        }
        m.tag = MatrixTag::Unitary;
        m
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * diag.len() + i] = d;
        }
        m
    }

    /// |a⟩⟨b|
    pub fn outer(a: &ComplexVector, b: &ComplexVector) -> Self {
        let dim = a.dim();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.entries[i * dim + j] = a.entries[i] * b.entries[j].conj();
            }
        }
        m
    }

    /// Projector onto the span of the given computational basis indices.
    pub fn basis_projector(dim: usize, indices: &[usize]) -> Self {
        let mut m = Self::zeros(dim);
        for &i in indices {
            m.entries[i * dim + i] = C64::new(1.0, 0.0);
        }
        m.tag = MatrixTag::Projector;
        m
    }

    /// id − 2|ψ⟩⟨ψ| for a normalized ψ.
    pub fn reflection_about(psi: &ComplexVector) -> Self {
        let mut m = Self::identity(psi.dim());
        let p = Self::outer(psi, psi);
        for (e, q) in m.entries.iter_mut().zip(&p.entries) {
            *e -= q * 2.0;
        }
        m
    }

    /// id − 2Π for a projector Π.
    pub fn reflection_through(projector: &Self) -> Self {
        let mut m = Self::identity(projector.dim);
        for (e, q) in m.entries.iter_mut().zip(&projector.entries) {
            *e -= q * 2.0;
        }
        m
    }

    /// Haar-like random unitary from Gram–Schmidt on a complex Gaussian matrix.
    pub fn random_unitary(dim: usize, rng: &mut RandomSource) -> Self {
        let mut cols: Vec<ComplexVector> = Vec::with_capacity(dim);
        while cols.len() < dim {
            let mut v = ComplexVector::random_state(dim, rng);
            for c in &cols {
                let overlap = c.inner(&v);
                for (x, y) in v.entries.iter_mut().zip(&c.entries) {
                    *x -= overlap * y;
                }
            }
            if v.norm() > 1e-6 {
                cols.push(v.normalized());
            }
        }
        let mut m = Self::zeros(dim);
        for (j, c) in cols.iter().enumerate() {
            for i in 0..dim {
                m.entries[i * dim + j] = c.entries[i];
            }
        }
        m.tag = MatrixTag::Unitary;
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tag(&self) -> MatrixTag {
        self.tag
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        self.entries[i * self.dim + j] = z;
        self.tag = MatrixTag::General;
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.entries[j * d + i] = self.entries[i * d + j].conj();
            }
        }
        m.tag = self.tag;
        m
    }

    pub fn mul(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut m = Self::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    m.entries[i * d + j] += a * other.entries[k * d + j];
                }
            }
        }
        if self.tag == MatrixTag::Unitary && other.tag == MatrixTag::Unitary {
            m.tag = MatrixTag::Unitary;
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z * s).collect(),
            tag: if s.norm() == 1.0 && self.tag == MatrixTag::Unitary {
                MatrixTag::Unitary
            } else {
                MatrixTag::General
            },
        }
    }

    /// Matrix–vector product without tag checks.
    pub fn apply(&self, v: &ComplexVector) -> ComplexVector {
        let d = self.dim;
        let out = (0..d)
            .map(|i| (0..d).map(|j| self.entries[i * d + j] * v.entries[j]).sum())
            .collect();
        ComplexVector::new(out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_unitary(&self) -> bool {
        self.adjoint().mul(self).max_abs_diff(&Self::identity(self.dim)) <= NORM_TOL
    }

    pub fn is_projector(&self) -> bool {
        self.mul(self).max_abs_diff(self) <= NORM_TOL && self.adjoint().max_abs_diff(self) <= NORM_TOL
    }

    /// Verifies U†U = I and tags the matrix as unitary.
    pub fn into_unitary(mut self) -> Result<Self> {
        if !self.is_unitary() {
            return Err(Error::NotTagged("unitary"));
        }
        self.tag = MatrixTag::Unitary;
        Ok(self)
    }

    /// Verifies Π² = Π = Π† and tags the matrix as a projector.
    pub fn into_projector(mut self) -> Result<Self> {
        if !self.is_projector() {
            return Err(Error::NotTagged("a projector"));
        }
        self.tag = MatrixTag::Projector;
        Ok(self)
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }
}

pub fn apply_unitary(u: &ComplexMatrix, psi: &ComplexVector) -> Result<ComplexVector> {
    if u.dim != psi.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim, got: psi.dim() });
    }
    if u.tag != MatrixTag::Unitary {
        return Err(Error::NotTagged("unitary"));
    }
    Ok(u.apply(psi))
}

#[derive(Clone, Debug)]
pub struct Measurement {
    pub bit: bool,
    pub post_state: ComplexVector,
    /// Probability of outcome 1 before measuring.
    pub probability: f64,
}

/// Two-outcome projective measurement {Π, id − Π}.
pub fn measure_projector(
    psi: &ComplexVector,
    projector: &ComplexMatrix,
    rng: &mut RandomSource,
) -> Result<Measurement> {
    if projector.dim != psi.dim() {
        return Err(Error::DimensionMismatch { expected: projector.dim, got: psi.dim() });
    }
    if projector.tag != MatrixTag::Projector {
        return Err(Error::NotTagged("a projector"));
    }
    let inside = projector.apply(psi);
    let p = inside.norm_sqr().clamp(0.0, 1.0);
    if p <= DEGENERATE_TOL {
        return Ok(Measurement { bit: false, post_state: psi.clone(), probability: 0.0 });
    }
    if p >= 1.0 - DEGENERATE_TOL {
        return Ok(Measurement { bit: true, post_state: psi.clone(), probability: 1.0 });
    }
    let bit = rng.uniform() < p;
    let post = if bit {
        inside.normalized()
    } else {
        let outside: Vec<C64> = psi.entries.iter().zip(&inside.entries).map(|(a, b)| a - b).collect();
        ComplexVector::new(outside).normalized()
    };
    Ok(Measurement { bit, post_state: post, probability: p })
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    /// Eigenphase θ ∈ [0, 1) with eigenvalue e^{2πiθ}.
    pub phase: f64,
    pub vector: ComplexVector,
}

/// Spectral decomposition of a unitary via the complex Schur form.
///
/// For normal matrices the Schur factor is diagonal, so its columns are the
/// eigenvectors.
pub fn eigendecompose_unitary(u: &ComplexMatrix) -> Result<Vec<Eigenpair>> {
    if u.dim > DENSE_CAP {
        return Err(Error::CapExceeded(u.dim));
    }
    if u.tag != MatrixTag::Unitary {
        return Err(Error::NotTagged("unitary"));
    }
    let (q, t) = Schur::new(u.to_nalgebra()).unpack();
    let d = u.dim;
    let pairs = (0..d)
        .map(|k| {
            let lambda = t[(k, k)];
            let phase = lambda.arg().rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU;
            let phase = if phase >= 1.0 { 0.0 } else { phase };
            let vector = ComplexVector::new((0..d).map(|i| q[(i, k)]).collect());
            Eigenpair { phase, vector }
        })
        .collect();
    Ok(pairs)
}

/// Σ e^{2πiθ_k}|v_k⟩⟨v_k|
pub fn reconstruct(pairs: &[Eigenpair]) -> ComplexMatrix {
    let d = pairs[0].vector.dim();
    let mut m = ComplexMatrix::zeros(d);
    for pair in pairs {
        let z = C64::from_polar(1.0, std::f64::consts::TAU * pair.phase);
        let outer = ComplexMatrix::outer(&pair.vector, &pair.vector);
        for (e, o) in m.entries.iter_mut().zip(&outer.entries) {
            *e += z * o;
        }
    }
    m
}

#[derive(Clone, Debug)]
pub struct GroverOperator {
    pub matrix: ComplexMatrix,
    /// p = ‖Πψ‖²
    pub p: f64,
    /// The Grover plane collapses to a line when p ∈ {0, 1}.
    pub degenerate: bool,
}

/// G = −(id − 2|ψ⟩⟨ψ|)(id − 2Π).
pub fn grover_operator(psi: &ComplexVector, projector: &ComplexMatrix) -> Result<GroverOperator> {
    if projector.tag != MatrixTag::Projector {
        return Err(Error::NotTagged("a projector"));
    }
    if !psi.is_state() {
        return crate::precondition("grover_operator needs a normalized state");
    }
    let p = projector.apply(psi).norm_sqr();
    let r_psi = ComplexMatrix::reflection_about(psi);
    let r_pi = ComplexMatrix::reflection_through(projector);
    let mut matrix = r_psi.mul(&r_pi).scale(C64::new(-1.0, 0.0));
    matrix.tag = MatrixTag::Unitary;
    let degenerate = p <= DEGENERATE_TOL || p >= 1.0 - DEGENERATE_TOL;
    Ok(GroverOperator { matrix, p, degenerate })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaneBasis {
    /// {Π|ψ⟩/‖Π|ψ⟩‖, (id−Π)|ψ⟩/‖(id−Π)|ψ⟩‖}
    GoodBad,
    /// The two Grover eigenvectors of the plane.
    Eigen,
}

/// State confined to a two-dimensional Grover plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoLevelState {
    pub alpha: C64,
    pub beta: C64,
    pub basis: PlaneBasis,
}

impl TwoLevelState {
    /// |ψ⟩ = √p|good⟩ + √(1−p)|bad⟩.
    pub fn initial(p: f64) -> Self {
        Self {
            alpha: C64::new(p.sqrt(), 0.0),
            beta: C64::new((1.0 - p).sqrt(), 0.0),
            basis: PlaneBasis::GoodBad,
        }
    }

    pub fn good() -> Self {
        Self { alpha: C64::new(1.0, 0.0), beta: C64::new(0.0, 0.0), basis: PlaneBasis::GoodBad }
    }

    pub fn bad() -> Self {
        Self { alpha: C64::new(0.0, 0.0), beta: C64::new(1.0, 0.0), basis: PlaneBasis::GoodBad }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.alpha.norm_sqr() + self.beta.norm_sqr()
    }

    pub fn overlap_sqr(&self, other: &Self) -> f64 {
        (self.alpha.conj() * other.alpha + self.beta.conj() * other.beta).norm_sqr()
    }
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations,
/// sorted ascending. Independent of nalgebra; used as a cross-check.
pub fn jacobi_eigenvalues(matrix: &[f64], n: usize) -> Vec<f64> {
    let mut a = matrix.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let mut rng = RandomSource::new(1);
        let psi = ComplexVector::random_state(5, &mut rng);
        let out = apply_unitary(&ComplexMatrix::identity(5), &psi).unwrap();
        assert!(out.max_abs_diff(&psi) < 1e-15);
    }

    #[test]
    fn global_phase_on_basis_vector() {
        let u = ComplexMatrix::diagonal(&[c(0.0, 1.0), c(0.0, 1.0)]).into_unitary().unwrap();
        let out = apply_unitary(&u, &ComplexVector::basis(2, 0)).unwrap();
        assert!(out.max_abs_diff(&ComplexVector::new(vec![c(0.0, 1.0), c(0.0, 0.0)])) < 1e-15);
    }

    #[test]
    fn untagged_matrix_is_rejected() {
        let m = ComplexMatrix::zeros(2);
        assert!(apply_unitary(&m, &ComplexVector::basis(2, 0)).is_err());
        assert!(m.into_unitary().is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let r = apply_unitary(&ComplexMatrix::identity(3), &ComplexVector::basis(2, 0));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn random_unitary_preserves_norm() {
        let mut rng = RandomSource::new(7);
        for _ in 0..20 {
            let u = ComplexMatrix::random_unitary(8, &mut rng);
            assert!(u.is_unitary());
            let psi = ComplexVector::random_state(8, &mut rng);
            let out = apply_unitary(&u, &psi).unwrap();
            assert!((out.norm() - 1.0).abs() < NORM_TOL);
        }
    }

    #[test]
    fn deterministic_measurements_do_not_consume_randomness() {
        let pi = ComplexMatrix::basis_projector(2, &[1]);
        let mut rng = RandomSource::new(3);
        let before = rng.clone();
        let m = measure_projector(&ComplexVector::basis(2, 1), &pi, &mut rng).unwrap();
        assert!(m.bit && m.probability == 1.0);
        let m = measure_projector(&ComplexVector::basis(2, 0), &pi, &mut rng).unwrap();
        assert!(!m.bit && m.probability == 0.0);
        assert_eq!(rng.next_u64(), before.clone().next_u64());
    }

    #[test]
    fn measurement_frequency_matches_born_rule() {
        let pi = ComplexMatrix::basis_projector(2, &[1]);
        let psi = ComplexVector::from_real(&[1.0, 1.0]).normalized();
        let mut rng = RandomSource::new(11);
        let n = 100_000;
        let ones = (0..n).filter(|_| measure_projector(&psi, &pi, &mut rng).unwrap().bit).count();
        let freq = ones as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((freq - 0.5).abs() <= 3.0 * se, "freq {freq}");
    }

    #[test]
    fn post_state_is_projected() {
        let pi = ComplexMatrix::basis_projector(3, &[0, 1]);
        let psi = ComplexVector::from_real(&[1.0, 1.0, 1.0]).normalized();
        let mut rng = RandomSource::new(5);
        for _ in 0..20 {
            let m = measure_projector(&psi, &pi, &mut rng).unwrap();
            assert!((m.probability - 2.0 / 3.0).abs() < 1e-12);
            let expected = if m.bit {
                ComplexVector::from_real(&[1.0, 1.0, 0.0]).normalized()
            } else {
                ComplexVector::basis(3, 2)
            };
            assert!(m.post_state.max_abs_diff(&expected) < 1e-12);
        }
    }

    #[test]
    fn eigendecomposition_of_simple_unitaries() {
        let pairs = eigendecompose_unitary(&ComplexMatrix::identity(4)).unwrap();
        assert!(pairs.iter().all(|p| p.phase.abs() < 1e-12));
        let u = ComplexMatrix::diagonal(&[c(1.0, 0.0), c(-1.0, 0.0)]).into_unitary().unwrap();
        let mut phases: Vec<f64> = eigendecompose_unitary(&u).unwrap().iter().map(|p| p.phase).collect();
        phases.sort_by(f64::total_cmp);
        assert!(phases[0].abs() < 1e-12 && (phases[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectral_reconstruction_of_random_unitaries() {
        let mut rng = RandomSource::new(13);
        for dim in [2, 5, 16, 40] {
            let u = ComplexMatrix::random_unitary(dim, &mut rng);
            let pairs = eigendecompose_unitary(&u).unwrap();
            assert!(reconstruct(&pairs).max_abs_diff(&u) < 1e-8);
            for (i, a) in pairs.iter().enumerate() {
                for (j, b) in pairs.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((a.vector.inner(&b.vector) - c(expect, 0.0)).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn grover_fixed_point_at_zero_amplitude() {
        let psi = ComplexVector::basis(2, 0);
        let pi = ComplexMatrix::basis_projector(2, &[1]);
        let g = grover_operator(&psi, &pi).unwrap();
        assert!(g.degenerate && g.p == 0.0);
        assert!(g.matrix.apply(&psi).max_abs_diff(&psi) < 1e-15);
    }

    #[test]
    fn grover_half_amplitude_has_quarter_phases() {
        let psi = ComplexVector::from_real(&[1.0, 1.0]).normalized();
        let pi = ComplexMatrix::basis_projector(2, &[1]);
        let g = grover_operator(&psi, &pi).unwrap();
        let mut phases: Vec<f64> =
            eigendecompose_unitary(&g.matrix).unwrap().iter().map(|p| p.phase).collect();
        phases.sort_by(f64::total_cmp);
        assert!((phases[0] - 0.25).abs() < 1e-10 && (phases[1] - 0.75).abs() < 1e-10);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let m = [2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0];
        let e = jacobi_eigenvalues(&m, 3);
        for (a, b) in e.iter().zip([1.0, 3.0, 5.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let mut a = RandomSource::substream(42, 3);
        let mut b = RandomSource::substream(42, 3);
        let mut c2 = RandomSource::substream(42, 4);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..4).map(|_| c2.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }
}
