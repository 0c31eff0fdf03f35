//! Enumerable Gibbs models with integer Hamiltonians, their exact partition
//! functions, Glauber dynamics and Szegedy walks.

use crate::mean::{FiniteRandomVariable, Qsample};
use crate::qcore::{jacobi_eigenvalues, ComplexMatrix, RandomSource, C64, DENSE_CAP};
use crate::{precondition, Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

/// Exact enumeration is limited to this many states.
pub const STATE_CAP: usize = 1 << 16;

/// Glauber chains are built densely only up to this many states.
pub const CHAIN_CAP: usize = DENSE_CAP;

/// Inverse temperature, with ∞ kept symbolic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Beta {
    Finite(f64),
    Infinite,
}

impl Beta {
    pub fn finite(self) -> Option<f64> {
        match self {
            Beta::Finite(b) => Some(b),
            Beta::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Beta::Infinite)
    }

    /// (a + b)/2
    pub fn midpoint(self, other: Beta) -> Beta {
        match (self, other) {
            (Beta::Finite(a), Beta::Finite(b)) => Beta::Finite(0.5 * (a + b)),
            _ => Beta::Infinite,
        }
    }

    /// 2·next − self, the extrapolated temperature in the second moment of
    /// a schedule ratio.
    pub fn extrapolate(self, next: Beta) -> Result<Beta> {
        match (self, next) {
            (Beta::Finite(a), Beta::Finite(b)) => Ok(Beta::Finite(2.0 * b - a)),
            (Beta::Finite(_), Beta::Infinite) => Ok(Beta::Infinite),
            (Beta::Infinite, _) => precondition("cannot extrapolate from β = ∞"),
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Finite(b) => write!(f, "{b}"),
            Beta::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub name: String,
}

impl Graph {
    pub fn new(vertices: usize, edges: Vec<(usize, usize)>, name: impl Into<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(u, v) in &edges {
            if u == v {
                return Err(Error::Model(format!("self-loop at vertex {u}")));
            }
            if u >= vertices || v >= vertices {
                return Err(Error::Model(format!("edge ({u},{v}) outside {vertices} vertices")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::Model(format!("duplicate edge ({u},{v})")));
            }
        }
        Ok(Self { vertices, edges, name: name.into() })
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i)).collect(), format!("path{n}")).expect("valid path")
    }

    pub fn cycle(n: usize) -> Self {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Self::new(n, edges, format!("cycle{n}")).expect("valid cycle")
    }

    pub fn grid(rows: usize, cols: usize) -> Self {
        let id = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        Self::new(rows * cols, edges, format!("grid{rows}x{cols}")).expect("valid grid")
    }

    /// Built-in graphs: `edge`, `triangle`, `pathN`/`PN`, `cycleN`/`CN`,
    /// `grid2x2`, `grid3x3`.
    pub fn builtin(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        let num = |prefix: &str| lower.strip_prefix(prefix).and_then(|s| s.parse::<usize>().ok());
        let g = match lower.as_str() {
            "edge" => Graph::path(2),
            "triangle" => Graph::cycle(3),
            "grid2x2" => Graph::grid(2, 2),
            "grid3x3" => Graph::grid(3, 3),
            _ => {
                if let Some(n) = num("path").or_else(|| num("p")) {
                    Graph::path(n)
                } else if let Some(n) = num("cycle").or_else(|| num("c")) {
                    Graph::cycle(n)
                } else {
                    return None;
                }
            }
        };
        (g.vertices > 0).then_some(Graph { name: lower, ..g })
    }

    /// Edge-list text: one `u v` pair per line, 0-indexed; `#` starts a comment.
    pub fn parse_edge_list(text: &str, name: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut vertices = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Model(format!("{name}:{}: bad vertex {s:?}", lineno + 1)))
            };
            if parts.len() != 2 {
                return Err(Error::Model(format!("{name}:{}: expected `u v`", lineno + 1)));
            }
            let (u, v) = (parse(parts[0])?, parse(parts[1])?);
            vertices = vertices.max(u + 1).max(v + 1);
            edges.push((u, v));
        }
        if edges.is_empty() {
            return Err(Error::Model(format!("{name}: no edges")));
        }
        Self::new(vertices, edges, name)
    }

    /// A built-in name, or else a path to an edge-list file.
    pub fn resolve(spec: &str) -> Result<Self> {
        if let Some(g) = Graph::builtin(spec) {
            return Ok(g);
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: spec.to_string(), source })?;
        Graph::parse_edge_list(&text, spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// H = number of same-sign edges.
    Ising,
    /// H = number of monochromatic edges.
    Potts { k: u32 },
    /// Monomer-dimer model, H = matching size.
    Matchings,
    /// Hard-core model, H = independent-set size.
    IndependentSets,
    /// H ≡ 0 on `size` states; no dynamics.
    Constant { size: usize },
}

/// Sign and annealing direction of the Boltzmann weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// e^{−βH}, annealed from β = 0 where Z = |Ω| towards β = ∞.
    Forward,
    /// e^{−βH}, annealed from β = ∞ where Z = 1 down to β = 0.
    Backward,
    /// e^{+βH}, annealed from β = 0 up to a finite target.
    Ferromagnetic,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Ferromagnetic => 1.0,
            _ => -1.0,
        }
    }
}

/// An enumerable Gibbs model.
///
/// The uniqueness regions under which Glauber dynamics mixes rapidly are not
/// enforced; gaps are computed directly instead.
#[derive(Clone, Debug)]
pub struct GibbsModel {
    pub family: Family,
    pub graph: Option<Graph>,
    pub direction: Direction,
    /// State codes: vertex bitmasks (Ising, hard-core), edge bitmasks
    /// (matchings) or base-k colour digits (Potts).
    pub states: Vec<u64>,
    pub energies: Vec<u32>,
    /// degeneracy[h] = |H⁻¹(h)|.
    pub degeneracy: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl GibbsModel {
    fn build(family: Family, graph: Option<Graph>, direction: Direction, states: Vec<u64>) -> Result<Self> {
        if states.len() > STATE_CAP {
            return Err(Error::CapExceeded(states.len()));
        }
        let energies: Vec<u32> = states.iter().map(|&s| energy_of(family, graph.as_ref(), s)).collect();
        let n = match (family, &graph) {
            (Family::Ising | Family::Potts { .. }, Some(g)) => g.edges.len(),
            (Family::Matchings, Some(g)) => g.vertices / 2,
            (Family::IndependentSets, Some(g)) => g.vertices,
            _ => 0,
        };
        let mut degeneracy = vec![0u64; n + 1];
        for &h in &energies {
            degeneracy[h as usize] += 1;
        }
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self { family, graph, direction, states, energies, degeneracy, index })
    }

    /// Ferromagnetic Ising model.
    pub fn ising(graph: Graph) -> Result<Self> {
        if graph.vertices > 16 {
            return Err(Error::CapExceeded(1 << graph.vertices.min(63)));
        }
        let states = (0..1u64 << graph.vertices).collect();
        Self::build(Family::Ising, Some(graph), Direction::Ferromagnetic, states)
    }

    /// Potts model with k colours; Z(∞) counts proper colourings.
    pub fn potts(graph: Graph, k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::Model("Potts needs k ≥ 2".into()));
        }
        let size = (k as u128).checked_pow(graph.vertices as u32).unwrap_or(u128::MAX);
        if size > STATE_CAP as u128 {
            return Err(Error::CapExceeded(size.min(usize::MAX as u128) as usize));
        }
        let states = (0..size as u64).collect();
        Self::build(Family::Potts { k }, Some(graph), Direction::Forward, states)
    }

    /// Monomer-dimer model on the matchings of the graph.
    pub fn matchings(graph: Graph) -> Result<Self> {
        if graph.edges.len() > 63 {
            return Err(Error::Model("too many edges".into()));
        }
        let mut states = Vec::new();
        collect_matchings(&graph, 0, 0, 0, &mut states, STATE_CAP + 1);
        Self::build(Family::Matchings, Some(graph), Direction::Backward, states)
    }

    /// Hard-core model on the independent sets of the graph.
    pub fn independent_sets(graph: Graph) -> Result<Self> {
        if graph.vertices > 63 {
            return Err(Error::Model("too many vertices".into()));
        }
        let nbr = neighbour_masks(&graph);
        let mut states = Vec::new();
        collect_independent(&nbr, 0, 0, &mut states, STATE_CAP + 1);
        Self::build(Family::IndependentSets, Some(graph), Direction::Backward, states)
    }

    pub fn constant(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Model("empty state space".into()));
        }
        Self::build(Family::Constant { size }, None, Direction::Forward, (0..size as u64).collect())
    }

    /// `family:graph[:k]` where family is `ising`, `potts`, `matchings`,
    /// `independent-sets` (alias `hardcore`) or `constant:N`, and graph is a
    /// built-in name or an edge-list path.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let mut parts = spec.splitn(3, ':');
        let family = parts.next().unwrap_or("").to_ascii_lowercase();
        let graph_spec = parts.next().ok_or_else(|| Error::Model(format!("{spec}: expected family:graph")))?;
        let extra = parts.next();
        if family == "constant" {
            let size = graph_spec.parse().map_err(|_| Error::Model(format!("{spec}: bad size")))?;
            return Self::constant(size);
        }
        let graph = Graph::resolve(graph_spec)?;
        match family.as_str() {
            "ising" => Self::ising(graph),
            "potts" => {
                let k = extra.map(str::parse).transpose().map_err(|_| Error::Model(format!("{spec}: bad k")))?;
                Self::potts(graph, k.unwrap_or(3))
            }
            "matchings" | "monomer-dimer" => Self::matchings(graph),
            "independent-sets" | "independent_sets" | "hardcore" | "hard-core" => Self::independent_sets(graph),
            other => Err(Error::Model(format!("unknown family {other:?}"))),
        }
    }

    pub fn name(&self) -> String {
        let g = self.graph.as_ref().map(|g| g.name.as_str()).unwrap_or("");
        match self.family {
            Family::Ising => format!("ising:{g}"),
            Family::Potts { k } => format!("potts:{g}:{k}"),
            Family::Matchings => format!("matchings:{g}"),
            Family::IndependentSets => format!("independent-sets:{g}"),
            Family::Constant { size } => format!("constant:{size}"),
        }
    }

    pub fn size(&self) -> usize {
        self.states.len()
    }

    pub fn max_energy(&self) -> u32 {
        self.degeneracy.len() as u32 - 1
    }

    pub fn index_of(&self, code: u64) -> Option<usize> {
        self.index.get(&code).copied()
    }

    /// ln Z(β), accumulated by log-sum-exp over energy levels.
    pub fn log_partition(&self, beta: Beta) -> Result<f64> {
        let s = self.direction.sign();
        match beta {
            Beta::Infinite => {
                if s > 0.0 {
                    return precondition("ferromagnetic Z(∞) diverges");
                }
                let c0 = self.degeneracy[0];
                if c0 == 0 {
                    return precondition("no zero-energy state, Z(∞) = 0");
                }
                Ok((c0 as f64).ln())
            }
            Beta::Finite(b) => {
                let terms: Vec<f64> = self
                    .degeneracy
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(h, &c)| (c as f64).ln() + s * b * h as f64)
                    .collect();
                Ok(log_sum_exp(&terms))
            }
        }
    }

    pub fn partition(&self, beta: Beta) -> Result<f64> {
        self.log_partition(beta).map(f64::exp)
    }

    /// π_β(x) for every enumerated state.
    pub fn gibbs_probs(&self, beta: Beta) -> Result<Vec<f64>> {
        let s = self.direction.sign();
        match beta {
            Beta::Infinite => {
                let c0 = self.degeneracy[0] as f64;
                if s > 0.0 || c0 == 0.0 {
                    return precondition("π_∞ undefined for this model");
                }
                Ok(self.energies.iter().map(|&h| if h == 0 { 1.0 / c0 } else { 0.0 }).collect())
            }
            Beta::Finite(b) => {
                let lz = self.log_partition(beta)?;
                Ok(self.energies.iter().map(|&h| (s * b * h as f64 - lz).exp()).collect())
            }
        }
    }

    /// Probability of each energy level under π_β.
    pub fn level_probs(&self, beta: Beta) -> Result<Vec<f64>> {
        let s = self.direction.sign();
        match beta {
            Beta::Infinite => {
                let mut out = vec![0.0; self.degeneracy.len()];
                self.log_partition(beta)?;
                out[0] = 1.0;
                Ok(out)
            }
            Beta::Finite(b) => {
                let lz = self.log_partition(beta)?;
                Ok(self
                    .degeneracy
                    .iter()
                    .enumerate()
                    .map(|(h, &c)| if c == 0 { 0.0 } else { ((c as f64).ln() + s * b * h as f64 - lz).exp() })
                    .collect())
            }
        }
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn neighbour_masks(g: &Graph) -> Vec<u64> {
    let mut nbr = vec![0u64; g.vertices];
    for &(u, v) in &g.edges {
        nbr[u] |= 1 << v;
        nbr[v] |= 1 << u;
    }
    nbr
}

fn collect_independent(nbr: &[u64], v: usize, set: u64, out: &mut Vec<u64>, cap: usize) {
    if out.len() >= cap {
        return;
    }
    if v == nbr.len() {
        out.push(set);
        return;
    }
    collect_independent(nbr, v + 1, set, out, cap);
    if nbr[v] & set == 0 {
        collect_independent(nbr, v + 1, set | 1 << v, out, cap);
    }
}

fn collect_matchings(g: &Graph, e: usize, covered: u64, set: u64, out: &mut Vec<u64>, cap: usize) {
    if out.len() >= cap {
        return;
    }
    if e == g.edges.len() {
        out.push(set);
        return;
    }
    collect_matchings(g, e + 1, covered, set, out, cap);
    let (u, v) = g.edges[e];
    let mask = 1u64 << u | 1u64 << v;
    if covered & mask == 0 {
        collect_matchings(g, e + 1, covered | mask, set | 1 << e, out, cap);
    }
}

fn potts_colour(code: u64, v: usize, k: u32) -> u64 {
    (code / (k as u64).pow(v as u32)) % k as u64
}

fn energy_of(family: Family, graph: Option<&Graph>, code: u64) -> u32 {
    match (family, graph) {
        (Family::Ising, Some(g)) => g.edges.iter().filter(|&&(u, v)| (code >> u & 1) == (code >> v & 1)).count() as u32,
        (Family::Potts { k }, Some(g)) => {
            g.edges.iter().filter(|&&(u, v)| potts_colour(code, u, k) == potts_colour(code, v, k)).count() as u32
        }
        (Family::Matchings | Family::IndependentSets, _) => code.count_ones(),
        _ => 0,
    }
}

/// Amplitudes √π_β(x) over Ω.
pub fn gibbs_qsample(model: &GibbsModel, beta: Beta) -> Result<Qsample> {
    let probs = model.gibbs_probs(beta)?;
    let pairs: Vec<(f64, f64)> = probs.iter().enumerate().map(|(i, &p)| (i as f64, p)).collect();
    let base = FiniteRandomVariable::from_weights(pairs)?;
    Ok(Qsample { base, amplitudes: probs.iter().map(|p| p.sqrt()).collect(), restored: true, reflections: 0 })
}

/// |⟨π_a|π_b⟩|² = Z((a+b)/2)²/(Z(a)Z(b)).
pub fn fidelity(model: &GibbsModel, a: Beta, b: Beta) -> Result<f64> {
    let lz = 2.0 * model.log_partition(a.midpoint(b))? - model.log_partition(a)? - model.log_partition(b)?;
    Ok(lz.exp().min(1.0))
}

/// Z(2b − a)·Z(a)/Z(b)², the relative second moment of the ratio variable.
pub fn chebyshev_constant(model: &GibbsModel, a: Beta, b: Beta) -> Result<f64> {
    if a == b {
        return Ok(1.0);
    }
    let l = model.log_partition(a.extrapolate(b)?)? + model.log_partition(a)? - 2.0 * model.log_partition(b)?;
    Ok(l.exp())
}

/// X(x) = e^{s(b−a)H(x)} under π_a, so that E[X] = Z(b)/Z(a).
pub fn schedule_ratio_variable(model: &GibbsModel, a: Beta, b: Beta) -> Result<FiniteRandomVariable> {
    if a == b {
        return Ok(FiniteRandomVariable::point_mass(1.0));
    }
    let s = model.direction.sign();
    let probs = model.level_probs(a)?;
    let value = |h: usize| -> Result<f64> {
        match (a, b) {
            (Beta::Finite(x), Beta::Finite(y)) => Ok((s * (y - x) * h as f64).exp()),
            (Beta::Finite(_), Beta::Infinite) if s < 0.0 => Ok(if h == 0 { 1.0 } else { 0.0 }),
            _ => precondition("ratio variable needs a finite starting temperature"),
        }
    };
    let mut pairs = Vec::with_capacity(probs.len());
    for (h, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            pairs.push((value(h)?, p));
        }
    }
    FiniteRandomVariable::from_weights(pairs)
}

#[derive(Clone, Debug)]
pub struct MarkovChain {
    pub n: usize,
    /// Row-major transition matrix.
    pub p: Vec<f64>,
    pub stationary: Vec<f64>,
    pub reversible: bool,
    pub ergodic: bool,
}

impl MarkovChain {
    pub fn new(n: usize, p: Vec<f64>, stationary: Vec<f64>) -> Result<Self> {
        if p.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: p.len() });
        }
        if stationary.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: stationary.len() });
        }
        for i in 0..n {
            let row: f64 = p[i * n..(i + 1) * n].iter().sum();
            if (row - 1.0).abs() > 1e-12 || p[i * n..(i + 1) * n].iter().any(|&x| x < 0.0) {
                return precondition(format!("row {i} is not a distribution (sum {row})"));
            }
        }
        let reversible = (0..n).all(|i| {
            (0..n).all(|j| (stationary[i] * p[i * n + j] - stationary[j] * p[j * n + i]).abs() <= 1e-10)
        });
        let ergodic = connected(n, &p);
        Ok(Self { n, p, stationary, reversible, ergodic })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    /// max_y |(πP)(y) − π(y)|
    pub fn stationarity_error(&self) -> f64 {
        (0..self.n)
            .map(|j| ((0..self.n).map(|i| self.stationary[i] * self.get(i, j)).sum::<f64>() - self.stationary[j]).abs())
            .fold(0.0, f64::max)
    }

    /// Discriminant D = diag(√π) P diag(√π)⁻¹, symmetric for reversible chains.
    fn discriminant(&self) -> Result<Vec<f64>> {
        if !self.reversible {
            return precondition("spectral quantities need a reversible chain");
        }
        let n = self.n;
        let sq: Vec<f64> = self.stationary.iter().map(|p| p.sqrt()).collect();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                // Symmetrized explicitly to remove rounding asymmetry.
                d[i * n + j] = (self.get(i, j) * self.get(j, i)).sqrt();
                if sq[i] == 0.0 || sq[j] == 0.0 {
                    d[i * n + j] = 0.0;
                }
            }
        }
        Ok(d)
    }
}

fn connected(n: usize, p: &[f64]) -> bool {
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && p[i * n + j] > 0.0 {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Eigenvalues of the discriminant, sorted descending (nalgebra path).
pub fn discriminant_spectrum(chain: &MarkovChain) -> Result<Vec<f64>> {
    let d = chain.discriminant()?;
    let m = DMatrix::from_row_slice(chain.n, chain.n, &d);
    let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// Same spectrum by cyclic Jacobi rotations, sorted descending.
pub fn discriminant_spectrum_jacobi(chain: &MarkovChain) -> Result<Vec<f64>> {
    let mut eig = jacobi_eigenvalues(&chain.discriminant()?, chain.n);
    eig.reverse();
    Ok(eig)
}

/// 1 − max_{j≥2} |λ_j|.
pub fn spectral_gap(chain: &MarkovChain) -> Result<f64> {
    let eig = discriminant_spectrum(chain)?;
    let second = eig.iter().skip(1).map(|l| l.abs()).fold(0.0, f64::max);
    Ok((1.0 - second).max(0.0))
}

/// Lazy single-site heat-bath dynamics with holding probability 1/2 over the
/// support of π_β. Matchings update one edge at a time.
pub fn glauber_chain(model: &GibbsModel, beta: Beta) -> Result<MarkovChain> {
    let graph = model.graph.as_ref().ok_or_else(|| Error::Model("no dynamics for this model".into()))?;
    let probs = model.gibbs_probs(beta)?;
    let support: Vec<usize> = (0..model.size()).filter(|&i| probs[i] > 0.0).collect();
    let n = support.len();
    if n > CHAIN_CAP {
        return Err(Error::CapExceeded(n));
    }
    let local: HashMap<usize, usize> = support.iter().enumerate().map(|(a, &i)| (i, a)).collect();
    let sites = match model.family {
        Family::Matchings => graph.edges.len(),
        _ => graph.vertices,
    };
    if sites == 0 {
        return Err(Error::Model("graph has no sites to update".into()));
    }
    let s = model.direction.sign();
    let mut p = vec![0.0; n * n];
    for (a, &i) in support.iter().enumerate() {
        p[a * n + a] += 0.5;
        let code = model.states[i];
        for site in 0..sites {
            let options: Vec<usize> = site_options(model, code, site)
                .into_iter()
                .filter_map(|c| model.index_of(c))
                .filter(|j| local.contains_key(j))
                .collect();
            let h0 = model.energies[i] as f64;
            let weights: Vec<f64> = options
                .iter()
                .map(|&j| match beta {
                    Beta::Finite(b) => (s * b * (model.energies[j] as f64 - h0)).exp(),
                    Beta::Infinite => 1.0,
                })
                .collect();
            let total: f64 = weights.iter().sum();
            for (&j, w) in options.iter().zip(weights) {
                p[a * n + local[&j]] += 0.5 / sites as f64 * w / total;
            }
        }
    }
    let stationary: Vec<f64> = support.iter().map(|&i| probs[i]).collect();
    let total: f64 = stationary.iter().sum();
    MarkovChain::new(n, p, stationary.into_iter().map(|x| x / total).collect())
}

/// States reachable by resampling one site, including the state itself.
fn site_options(model: &GibbsModel, code: u64, site: usize) -> Vec<u64> {
    match model.family {
        Family::Ising | Family::IndependentSets | Family::Matchings => vec![code & !(1 << site), code | 1 << site],
        Family::Potts { k } => {
            let base = (k as u64).pow(site as u32);
            let c = potts_colour(code, site, k);
            (0..k as u64).map(|new| code - c * base + new * base).collect()
        }
        Family::Constant { .. } => vec![code],
    }
}

/// Lazy reversible chain with random symmetric edge weights.
pub fn random_reversible_chain(n: usize, rng: &mut RandomSource) -> Result<MarkovChain> {
    if n == 0 {
        return precondition("chain needs at least one state");
    }
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let x = rng.uniform() + 0.05;
            w[i * n + j] = x;
            w[j * n + i] = x;
        }
    }
    let rows: Vec<f64> = (0..n).map(|i| w[i * n..(i + 1) * n].iter().sum()).collect();
    let total: f64 = rows.iter().sum();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = 0.5 * w[i * n + j] / rows[i] + if i == j { 0.5 } else { 0.0 };
        }
    }
    MarkovChain::new(n, p, rows.iter().map(|r| r / total).collect())
}

/// Bipartite walk W = S(2Π_A − I) on Ω×Ω, where Π_A projects onto
/// span{|x⟩⊗Σ_y √P(x,y)|y⟩} and S swaps the registers.
pub fn szegedy_walk(chain: &MarkovChain) -> Result<ComplexMatrix> {
    let w = walk_real(chain)?;
    let dim = chain.n * chain.n;
    let entries = w.iter().map(|&x| C64::new(x, 0.0)).collect();
    ComplexMatrix::from_entries(dim, entries)?.into_unitary()
}

fn walk_real(chain: &MarkovChain) -> Result<Vec<f64>> {
    let n = chain.n;
    let dim = n * n;
    if dim > DENSE_CAP {
        return Err(Error::CapExceeded(dim));
    }
    // R = 2Π_A − I, block diagonal in the first register.
    let mut r = vec![0.0; dim * dim];
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let v = 2.0 * (chain.get(x, y) * chain.get(x, z)).sqrt();
                r[(x * n + y) * dim + x * n + z] = v;
            }
        }
    }
    for i in 0..dim {
        r[i * dim + i] -= 1.0;
    }
    // W = S·R permutes rows.
    let mut w = vec![0.0; dim * dim];
    for x in 0..n {
        for y in 0..n {
            let src = x * n + y;
            let dst = y * n + x;
            w[dst * dim..(dst + 1) * dim].copy_from_slice(&r[src * dim..(src + 1) * dim]);
        }
    }
    Ok(w)
}

/// cos(2πθ) for the eigenphases of the walk restricted to the busy subspace
/// span{A, SA}, sorted descending.
pub fn walk_busy_cosines(chain: &MarkovChain) -> Result<Vec<f64>> {
    let n = chain.n;
    let dim = n * n;
    let w = DMatrix::from_row_slice(dim, dim, &walk_real(chain)?);
    let mut gen = DMatrix::<f64>::zeros(dim, 2 * n);
    for x in 0..n {
        for y in 0..n {
            let a = chain.get(x, y).sqrt();
            gen[(x * n + y, x)] = a;
            gen[(y * n + x, n + x)] = a;
        }
    }
    let q = orthonormal_columns(&gen, 1e-8);
    let restricted = q.transpose() * w * &q;
    // The restriction is real orthogonal, hence normal: the real parts of
    // its eigenvalues are the eigenvalues of its symmetric part.
    let sym = (&restricted + restricted.transpose()) * 0.5;
    let mut cos: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    cos.sort_by(|a, b| b.total_cmp(a));
    Ok(cos)
}

/// Modified Gram–Schmidt with one reorthogonalization pass, dropping
/// columns whose residual norm falls below `tol`.
fn orthonormal_columns(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        let norm0 = v.norm();
        for _pass in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        let norm = v.norm();
        if norm > tol * norm0.max(1.0) {
            basis.push(v / norm);
        }
    }
    DMatrix::from_columns(&basis)
}

/// Cosines the busy walk spectrum should show: every discriminant eigenvalue
/// strictly inside (−1, 1) twice, eigenvalues ±1 once.
pub fn expected_walk_cosines(spectrum: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for &l in spectrum {
        out.push(l);
        if l.abs() < 1.0 - 1e-9 {
            out.push(l);
        }
    }
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// Smallest nonzero walk eigenphase, arccos(1 − δ)/(2π) for a lazy chain.
pub fn walk_phase_gap(chain: &MarkovChain) -> Result<f64> {
    let eig = discriminant_spectrum(chain)?;
    let second = eig.get(1).copied().unwrap_or(0.0).clamp(-1.0, 1.0);
    Ok(second.acos() / (2.0 * std::f64::consts::PI))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_ising() -> GibbsModel {
        GibbsModel::ising(Graph::builtin("edge").unwrap()).unwrap()
    }

    #[test]
    fn enumerated_partition_functions() {
        let ising = edge_ising();
        let b = 2f64.ln();
        assert!((ising.partition(Beta::Finite(b)).unwrap() - 6.0).abs() < 1e-12);
        let potts = GibbsModel::potts(Graph::builtin("triangle").unwrap(), 3).unwrap();
        assert!((potts.partition(Beta::Finite(0.0)).unwrap() - 27.0).abs() < 1e-10);
        assert!((potts.partition(Beta::Infinite).unwrap() - 6.0).abs() < 1e-12);
        let m = GibbsModel::matchings(Graph::builtin("triangle").unwrap()).unwrap();
        assert_eq!(m.size(), 4);
        assert!((m.partition(Beta::Infinite).unwrap() - 1.0).abs() < 1e-15);
        let is = GibbsModel::independent_sets(Graph::builtin("P3").unwrap()).unwrap();
        assert_eq!(is.size(), 5);
        let c4 = GibbsModel::potts(Graph::builtin("C4").unwrap(), 3).unwrap();
        assert!((c4.partition(Beta::Infinite).unwrap() - 18.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_variable_and_fidelity_examples() {
        let m = edge_ising();
        let (a, b) = (Beta::Finite(0.0), Beta::Finite(2f64.ln()));
        let x = schedule_ratio_variable(&m, a, b).unwrap();
        assert!((x.mean() - 1.5).abs() < 1e-12);
        assert!((x.relative_second_moment() - 40.0 / 36.0).abs() < 1e-12);
        assert!((chebyshev_constant(&m, a, b).unwrap() - 40.0 / 36.0).abs() < 1e-12);
        let f = (2.0 * 2f64.sqrt() + 2.0).powi(2) / 24.0;
        assert!((fidelity(&m, a, b).unwrap() - f).abs() < 1e-12);
    }

    #[test]
    fn glauber_stationary_and_gap() {
        let m = edge_ising();
        let chain = glauber_chain(&m, Beta::Finite(0.0)).unwrap();
        assert!(chain.reversible && chain.ergodic);
        assert!(chain.stationary.iter().all(|&p| (p - 0.25).abs() < 1e-12));
        let chain = glauber_chain(&m, Beta::Finite(2f64.ln())).unwrap();
        let gap = spectral_gap(&chain).unwrap();
        let jac = discriminant_spectrum_jacobi(&chain).unwrap();
        assert!((gap - (1.0 - jac[1])).abs() < 1e-10);
        assert!(chain.stationarity_error() < 1e-12);
    }

    #[test]
    fn hardcore_stationary_uniform_at_zero() {
        let m = GibbsModel::independent_sets(Graph::path(3)).unwrap();
        let chain = glauber_chain(&m, Beta::Finite(0.0)).unwrap();
        assert_eq!(chain.n, 5);
        assert!(chain.stationary.iter().all(|&p| (p - 0.2).abs() < 1e-12));
        assert!(chain.reversible && chain.ergodic);
    }

    #[test]
    fn two_state_chain_has_gap_one_and_quarter_phase() {
        let chain = MarkovChain::new(2, vec![0.5; 4], vec![0.5, 0.5]).unwrap();
        assert!((spectral_gap(&chain).unwrap() - 1.0).abs() < 1e-12);
        assert!((walk_phase_gap(&chain).unwrap() - 0.25).abs() < 1e-12);
        let cos = walk_busy_cosines(&chain).unwrap();
        let want = expected_walk_cosines(&discriminant_spectrum(&chain).unwrap());
        assert_eq!(cos.len(), want.len());
        for (c, w) in cos.iter().zip(&want) {
            assert!((c - w).abs() < 1e-8);
        }
        assert!(szegedy_walk(&chain).unwrap().is_unitary());
    }

    #[test]
    fn edge_list_parsing() {
        let g = Graph::parse_edge_list("# square\n0 1\n1 2\n2 3\n3 0\n", "sq").unwrap();
        assert_eq!((g.vertices, g.edges.len()), (4, 4));
        assert!(Graph::parse_edge_list("0 0\n", "bad").is_err());
        assert!(Graph::parse_edge_list("0 x\n", "bad").is_err());
        assert!(matches!(Graph::resolve("/nonexistent/graph.txt"), Err(Error::Io { .. })));
    }
}
