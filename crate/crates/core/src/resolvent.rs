//! Discretized generator and resolvent-norm sweeps along the imaginary axis.
//!
//! The state is `z = (y, v, p, q)` on the nodes of a [`Mesh`], with the
//! energy inner product `⟨z, z⟩_W = yᵀK y + vᵀW v + Σ(p² + m q²)`, so that
//! `‖z‖²_W` is twice the discrete energy. The semi-discrete system of
//! [`crate::dynamics`] reads `z' = A_h z`.
//!
//! `‖(iβ - A_h)⁻¹‖_W` is the square root of the top eigenvalue of the
//! `W`-self-adjoint operator `W⁻¹T⁻ᴴW T⁻¹`, `T = iβ - A_h`, computed by
//! Lanczos with full reorthogonalization. Shifted solves use a banded LU
//! after a reverse Cuthill–McKee ordering of the nodes.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BandMatrix, BandedLu, C64};
use crate::mesh::Mesh;
use crate::network::MetricGraph;

#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    mesh: Mesh,
    nodes: usize,
    oscs: usize,
    /// Nonzeros of `A_h` in the natural layout `(y, v, p, q)`.
    entries: Vec<(usize, usize, f64)>,
    /// Natural index to banded index.
    perm: Vec<usize>,
    kl: usize,
    ku: usize,
    /// `K` factored in node order `node_perm`.
    stiffness: BandedLu,
    node_perm: Vec<usize>,
    masses: Vec<f64>,
}

/// Reverse Cuthill–McKee order of an undirected graph given by adjacency lists.
fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let bfs_far = |start: usize| {
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        let mut last = start;
        while let Some(a) = queue.pop_front() {
            last = a;
            for &b in &adj[a] {
                if dist[b] == usize::MAX {
                    dist[b] = dist[a] + 1;
                    queue.push_back(b);
                }
            }
        }
        last
    };
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let start = bfs_far(bfs_far(s));
        let start = if seen[start] { s } else { start };
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(a) = queue.pop_front() {
            order.push(a);
            let mut next: Vec<usize> = adj[a].iter().copied().filter(|&b| !seen[b]).collect();
            next.sort_by_key(|&b| (adj[b].len(), b));
            next.dedup();
            for b in next {
                seen[b] = true;
                queue.push_back(b);
            }
        }
    }
    order.reverse();
    order
}

impl DiscreteGenerator {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let n = mesh.node_count();
        let no = mesh.oscillators().len();
        let w = mesh.weights();
        let mut adj = vec![Vec::new(); n];
        let mut kentries = Vec::new();
        for j in 0..mesh.cells().len() {
            let inv = 1.0 / mesh.spacing()[j];
            for pair in mesh.edge_nodes(j).windows(2) {
                for (a, b) in [(pair[0], pair[1]), (pair[1], pair[0])] {
                    if let Some(a) = a {
                        kentries.push((a, a, inv));
                        if let Some(b) = b {
                            kentries.push((a, b, -inv));
                            adj[a].push(b);
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for &o in mesh.coupling(i) {
                let node = mesh.oscillators()[o].node;
                if node != i {
                    adj[i].push(node);
                    adj[node].push(i);
                }
            }
        }

        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, n + i, 1.0));
            entries.push((n + i, n + i, -mesh.damping()[i] / w[i]));
            for &o in mesh.coupling(i) {
                entries.push((n + i, 2 * n + no + o, 1.0 / w[i]));
            }
        }
        for &(a, b, k) in &kentries {
            entries.push((n + a, b, -k / w[a]));
        }
        for (o, osc) in mesh.oscillators().iter().enumerate() {
            entries.push((2 * n + o, 2 * n + no + o, 1.0));
            entries.push((2 * n + no + o, 2 * n + o, -1.0 / osc.mass));
            entries.push((2 * n + no + o, n + osc.node, -1.0 / osc.mass));
        }

        let node_perm_order = reverse_cuthill_mckee(&adj);
        let mut node_perm = vec![0usize; n];
        for (pos, &i) in node_perm_order.iter().enumerate() {
            node_perm[i] = pos;
        }
        let mut perm = vec![0usize; 2 * n + 2 * no];
        let mut next = 0;
        for &i in &node_perm_order {
            perm[i] = next;
            perm[n + i] = next + 1;
            next += 2;
            for (o, osc) in mesh.oscillators().iter().enumerate() {
                if osc.node == i {
                    perm[2 * n + o] = next;
                    perm[2 * n + no + o] = next + 1;
                    next += 2;
                }
            }
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for &(r, c, _) in &entries {
            let (r, c) = (perm[r], perm[c]);
            kl = kl.max(r.saturating_sub(c));
            ku = ku.max(c.saturating_sub(r));
        }

        let kb = kentries.iter().map(|&(a, b, _)| node_perm[a].abs_diff(node_perm[b])).max().unwrap_or(0);
        let mut kband = BandMatrix::zeros(n, kb, kb);
        for &(a, b, k) in &kentries {
            kband.add(node_perm[a], node_perm[b], C64::new(k, 0.0));
        }
        let stiffness = kband.factor();
        if stiffness.is_singular() {
            return Err(Error::Singular("stiffness matrix".into()));
        }
        let masses = mesh.oscillators().iter().map(|o| o.mass).collect();
        Ok(DiscreteGenerator { mesh, nodes: n, oscs: no, entries, perm, kl, ku, stiffness, node_perm, masses })
    }

    pub fn dim(&self) -> usize {
        2 * self.nodes + 2 * self.oscs
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Largest mesh width.
    pub fn h(&self) -> f64 {
        self.mesh.max_spacing()
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn apply<T>(&self, z: &[T]) -> Vec<T>
    where
        T: Copy + Default + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
    {
        let mut out = vec![T::default(); self.dim()];
        for &(r, c, v) in &self.entries {
            out[r] += z[c] * v;
        }
        out
    }

    /// `W z`.
    pub fn weight_apply(&self, z: &[C64]) -> Vec<C64> {
        let n = self.nodes;
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        let yk = self.stiffness_times(&z[..n]);
        out[..n].copy_from_slice(&yk);
        for i in 0..n {
            out[n + i] = z[n + i] * self.mesh.weights()[i];
        }
        for o in 0..self.oscs {
            out[2 * n + o] = z[2 * n + o];
            out[2 * n + self.oscs + o] = z[2 * n + self.oscs + o] * self.masses[o];
        }
        out
    }

    fn stiffness_times(&self, y: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); y.len()];
        for j in 0..self.mesh.cells().len() {
            let inv = 1.0 / self.mesh.spacing()[j];
            for pair in self.mesh.edge_nodes(j).windows(2) {
                let a = pair[0].map_or(C64::new(0.0, 0.0), |i| y[i]);
                let b = pair[1].map_or(C64::new(0.0, 0.0), |i| y[i]);
                let g = (b - a) * inv;
                if let Some(i) = pair[0] {
                    out[i] -= g;
                }
                if let Some(i) = pair[1] {
                    out[i] += g;
                }
            }
        }
        out
    }

    /// `W⁻¹ z`.
    pub fn weight_solve(&self, z: &[C64]) -> Vec<C64> {
        let n = self.nodes;
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        let mut y = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            y[self.node_perm[i]] = z[i];
        }
        self.stiffness.solve(&mut y);
        for i in 0..n {
            out[i] = y[self.node_perm[i]];
            out[n + i] = z[n + i] / self.mesh.weights()[i];
        }
        for o in 0..self.oscs {
            out[2 * n + o] = z[2 * n + o];
            out[2 * n + self.oscs + o] = z[2 * n + self.oscs + o] / self.masses[o];
        }
        out
    }

    /// `⟨a, b⟩_W = bᴴ W a`.
    pub fn inner(&self, a: &[C64], b: &[C64]) -> C64 {
        let wa = self.weight_apply(a);
        wa.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
    }

    pub fn norm(&self, z: &[C64]) -> f64 {
        self.inner(z, z).re.max(0.0).sqrt()
    }

    /// `Re⟨A z, z⟩_W` for a real state, evaluated term by term.
    pub fn dissipation(&self, z: &[f64]) -> f64 {
        let az = self.apply(z);
        let zc: Vec<C64> = z.iter().map(|&x| C64::new(x, 0.0)).collect();
        let azc: Vec<C64> = az.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.inner(&azc, &zc).re
    }

    /// Banded LU of `σ - A_h`.
    pub fn shifted(&self, sigma: C64) -> ShiftedSystem<'_> {
        let mut band = BandMatrix::zeros(self.dim(), self.kl, self.ku);
        for i in 0..self.dim() {
            band.add(self.perm[i], self.perm[i], sigma);
        }
        for &(r, c, v) in &self.entries {
            band.add(self.perm[r], self.perm[c], C64::new(-v, 0.0));
        }
        ShiftedSystem { generator: self, lu: band.factor() }
    }
}

/// Factored `σ - A_h` with solves in the natural layout.
pub struct ShiftedSystem<'g> {
    generator: &'g DiscreteGenerator,
    lu: BandedLu,
}

impl ShiftedSystem<'_> {
    pub fn is_singular(&self) -> bool {
        self.lu.is_singular()
    }

    pub fn pivot_range(&self) -> (f64, f64) {
        self.lu.pivot_range()
    }

    fn permuted<F: Fn(&BandedLu, &mut [C64])>(&self, b: &[C64], f: F) -> Vec<C64> {
        let perm = &self.generator.perm;
        let mut x = vec![C64::new(0.0, 0.0); b.len()];
        for (i, &v) in b.iter().enumerate() {
            x[perm[i]] = v;
        }
        f(&self.lu, &mut x);
        (0..b.len()).map(|i| x[perm[i]]).collect()
    }

    /// `(σ - A_h)⁻¹ b`.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        self.permuted(b, |lu, x| lu.solve(x))
    }

    /// `(σ - A_h)⁻ᴴ b`.
    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        self.permuted(b, |lu, x| lu.solve_adjoint(x))
    }
}

/// Generator on the mesh of width at most `h`.
pub fn assemble_generator(graph: &MetricGraph, h: f64) -> Result<DiscreteGenerator> {
    DiscreteGenerator::new(Mesh::with_spacing(graph, h)?)
}

/// `(σ - A_h)⁻¹ f`.
pub fn apply_resolvent(gen: &DiscreteGenerator, sigma: C64, f: &[C64]) -> Result<Vec<C64>> {
    let sys = gen.shifted(sigma);
    if sys.is_singular() {
        return Err(Error::Singular(format!("σ = {sigma} is an eigenvalue of the discrete generator")));
    }
    Ok(sys.solve(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub beta: f64,
    pub norm: f64,
    pub sigma_min: f64,
    pub iterations: usize,
}

const LANCZOS_BLOCK: usize = 40;
const LANCZOS_RESTARTS: usize = 30;
const NORM_RTOL: f64 = 1e-6;

/// `‖(iβ - A_h)⁻¹‖_W`, `+∞` when `iβ` is an exact discrete eigenvalue.
pub fn resolvent_norm(gen: &DiscreteGenerator, beta: f64) -> Result<NormEstimate> {
    let sys = gen.shifted(C64::new(0.0, beta));
    if sys.is_singular() {
        return Ok(NormEstimate { beta, norm: f64::INFINITY, sigma_min: 0.0, iterations: 0 });
    }
    let op = |x: &[C64]| {
        let a = sys.solve(x);
        let wa = gen.weight_apply(&a);
        let b = sys.solve_adjoint(&wa);
        gen.weight_solve(&b)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let start: Vec<C64> =
        (0..gen.dim()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    match lanczos_top(gen, op, start) {
        Some((theta, iterations)) => {
            let norm = theta.sqrt();
            Ok(NormEstimate { beta, norm, sigma_min: 1.0 / norm, iterations })
        }
        None => {
            let (lo, hi) = sys.pivot_range();
            Err(Error::NoConvergence(format!(
                "Lanczos at β = {beta} did not converge; pivot range [{lo:.3e}, {hi:.3e}]"
            )))
        }
    }
}

/// Largest eigenvalue of a `W`-self-adjoint positive operator.
fn lanczos_top(gen: &DiscreteGenerator, op: impl Fn(&[C64]) -> Vec<C64>, mut x: Vec<C64>) -> Option<(f64, usize)> {
    let mut total = 0;
    let mut prev = f64::NAN;
    for _ in 0..LANCZOS_RESTARTS {
        let nx = gen.norm(&x);
        if nx == 0.0 || !nx.is_finite() {
            return None;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let mut basis: Vec<Vec<C64>> = vec![x.clone()];
        let mut wbasis: Vec<Vec<C64>> = vec![gen.weight_apply(&x)];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut best = (0.0, Vec::new());
        let dot = |a: &[C64], wb: &[C64]| -> C64 { a.iter().zip(wb).map(|(x, y)| x * y.conj()).sum() };
        for k in 0..LANCZOS_BLOCK.min(gen.dim()) {
            let mut w = op(&basis[k]);
            total += 1;
            let a = dot(&w, &wbasis[k]).re;
            alpha.push(a);
            for _ in 0..2 {
                for (q, wq) in basis.iter().zip(&wbasis) {
                    let c = dot(&w, wq);
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
                }
            }
            let ww = gen.weight_apply(&w);
            let b = dot(&w, &ww).re.max(0.0).sqrt();
            let m = alpha.len();
            let mut t = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                t[(i, i)] = alpha[i];
                if i + 1 < m {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let (imax, theta) = eig
                .eigenvalues
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            let s: Vec<f64> = eig.eigenvectors.column(imax).iter().copied().collect();
            let resid = b * s[m - 1].abs();
            best = (theta, s);
            let invariant = b <= 1e-14 * theta.abs().max(f64::MIN_POSITIVE);
            if resid <= NORM_RTOL * 1e-2 * theta || invariant {
                return Some((theta, total));
            }
            if (theta - prev).abs() <= 1e-12 * theta && resid <= NORM_RTOL * theta {
                return Some((theta, total));
            }
            prev = theta;
            beta.push(b);
            basis.push(w.iter().map(|v| v / b).collect());
            wbasis.push(ww.iter().map(|v| v / b).collect());
        }
        let (theta, s) = best;
        let mut ritz = vec![C64::new(0.0, 0.0); gen.dim()];
        for (q, &c) in basis.iter().zip(&s) {
            ritz.iter_mut().zip(q).for_each(|(r, qi)| *r += qi * c);
        }
        x = ritz;
        if !theta.is_finite() {
            return None;
        }
    }
    None
}

/// Eigenvalue of `A_h` nearest to `sigma`, by shifted inverse iteration.
pub fn nearest_eigenvalue(gen: &DiscreteGenerator, sigma: C64) -> Result<C64> {
    let sys = gen.shifted(sigma);
    if sys.is_singular() {
        return Ok(sigma);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut x: Vec<C64> =
        (0..gen.dim()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let mut mu = sigma;
    for _ in 0..200 {
        let nx = crate::linalg::norm2(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let y = sys.solve(&x);
        let theta: C64 = y.iter().zip(&x).map(|(a, b)| a * b.conj()).sum();
        let next = sigma - 1.0 / theta;
        let done = (next - mu).norm() <= 1e-13 * next.norm().max(1.0);
        mu = next;
        x = y;
        if done {
            return Ok(mu);
        }
    }
    Err(Error::NoConvergence(format!("inverse iteration near {sigma}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Coarsest mesh width.
    pub h_base: f64,
    /// Number of mesh levels, each halving `h`.
    pub levels: usize,
    /// Resolution coupling `h·|β| ≤ coupling`.
    pub coupling: f64,
    /// Local maxima refined by golden-section search, per level.
    pub refine: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { h_base: 0.05, levels: 3, coupling: 0.2, refine: 3 }
    }
}

impl SweepConfig {
    /// Mesh key `k` with `h = h_base / 2^k` for `β` at ladder level `level`.
    pub fn mesh_key(&self, beta: f64, level: usize) -> u32 {
        let mut k = 0u32;
        while self.h_base / 2f64.powi(k as i32) * beta.abs() > self.coupling {
            k += 1;
        }
        k + level as u32
    }

    pub fn spacing(&self, key: u32) -> f64 {
        self.h_base / 2f64.powi(key as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub beta: f64,
    pub level: usize,
    pub h: f64,
    pub sigma_min: f64,
    pub norm: f64,
    pub refined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub sup: f64,
    pub beta_at_sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Unbounded,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Bounded => "bounded",
            Verdict::Unbounded => "unbounded",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub samples: Vec<SweepSample>,
    pub levels: Vec<LevelSummary>,
    pub verdict: Verdict,
    /// `sup_finest / sup_previous`.
    pub ratio: Option<f64>,
    pub config: SweepConfig,
}

impl SweepReport {
    /// `β` of the largest norm on the finest level.
    pub fn peak(&self) -> Option<f64> {
        self.levels.last().map(|l| l.beta_at_sup)
    }
}

/// Mesh-ladder verdict from the sups of the two finest levels: bounded when
/// they differ by less than 20%, unbounded when the sup more than doubles.
pub fn verdict_from(levels: &[LevelSummary]) -> (Verdict, Option<f64>) {
    if levels.len() < 2 {
        return (Verdict::Inconclusive, None);
    }
    let (a, b) = (levels[levels.len() - 2].sup, levels[levels.len() - 1].sup);
    let ratio = b / a;
    let v = if !b.is_finite() || ratio > 2.0 {
        Verdict::Unbounded
    } else if (ratio - 1.0).abs() < 0.2 {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    };
    (v, Some(ratio))
}

struct GeneratorCache<'a> {
    graph: &'a MetricGraph,
    config: SweepConfig,
    gens: BTreeMap<u32, DiscreteGenerator>,
}

impl GeneratorCache<'_> {
    fn norm(&mut self, beta: f64, key: u32) -> Result<(f64, f64)> {
        if !self.gens.contains_key(&key) {
            let g = assemble_generator(self.graph, self.config.spacing(key))?;
            self.gens.insert(key, g);
        }
        let g = &self.gens[&key];
        Ok((resolvent_norm(g, beta)?.norm, g.h()))
    }

    /// Imaginary part of the discrete eigenvalue nearest to `iβ`.
    fn eigen_beta(&mut self, beta: f64, key: u32) -> Result<f64> {
        self.norm(beta, key)?;
        Ok(nearest_eigenvalue(&self.gens[&key], C64::new(0.0, beta))?.im)
    }
}

/// Resolvent norms over `betas` on a ladder of meshes, with golden-section
/// refinement of the largest local maxima.
pub fn sweep(graph: &MetricGraph, betas: &[f64], config: &SweepConfig) -> Result<SweepReport> {
    if config.levels == 0 || !(config.h_base > 0.0) || !(config.coupling > 0.0) {
        return Err(Error::InvalidArgument("sweep needs levels ≥ 1 and positive h_base, coupling".into()));
    }
    let mut samples = Vec::new();
    let mut levels = Vec::new();
    if betas.is_empty() {
        return Ok(SweepReport { samples, levels, verdict: Verdict::Inconclusive, ratio: None, config: *config });
    }
    let mut grid: Vec<f64> = betas.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut cache = GeneratorCache { graph, config: *config, gens: BTreeMap::new() };
    for level in 0..config.levels {
        let mut values = Vec::with_capacity(grid.len());
        for &b in &grid {
            let (norm, h) = cache.norm(b, config.mesh_key(b, level))?;
            values.push(norm);
            samples.push(SweepSample { beta: b, level, h, sigma_min: 1.0 / norm, norm, refined: false });
        }
        let mut maxima: Vec<usize> = (0..grid.len())
            .filter(|&i| {
                let left = i == 0 || values[i] >= values[i - 1];
                let right = i + 1 == grid.len() || values[i] >= values[i + 1];
                left && right
            })
            .collect();
        maxima.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        maxima.truncate(config.refine);
        let (mut sup, mut at) =
            values
                .iter()
                .zip(&grid)
                .fold((f64::NEG_INFINITY, grid[0]), |acc, (&v, &b)| if v > acc.0 { (v, b) } else { acc });
        for i in maxima {
            if grid.len() < 2 || !values[i].is_finite() {
                continue;
            }
            let lo = grid[i.saturating_sub(1)];
            let hi = grid[(i + 1).min(grid.len() - 1)];
            let key = config.mesh_key(lo.abs().max(hi.abs()), level);
            let (mut b, mut v, h) = golden_max(&mut cache, lo, hi, key)?;
            // A peak narrower than the search tolerance sits at the imaginary
            // part of a nearby discrete eigenvalue.
            if let Ok(eb) = cache.eigen_beta(b, key) {
                if eb >= lo && eb <= hi {
                    let (ev, _) = cache.norm(eb, key)?;
                    if ev > v {
                        (b, v) = (eb, ev);
                    }
                }
            }
            samples.push(SweepSample { beta: b, level, h, sigma_min: 1.0 / v, norm: v, refined: true });
            if v > sup {
                sup = v;
                at = b;
            }
        }
        levels.push(LevelSummary { level, sup, beta_at_sup: at });
    }
    let (verdict, ratio) = verdict_from(&levels);
    Ok(SweepReport { samples, levels, verdict, ratio, config: *config })
}

fn golden_max(cache: &mut GeneratorCache, mut a: f64, mut b: f64, key: u32) -> Result<(f64, f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, h) = cache.norm(c, key)?;
    let (mut fd, _) = cache.norm(d, key)?;
    let tol = 1e-9 * (1.0 + a.abs().max(b.abs()));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = cache.norm(c, key)?.0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = cache.norm(d, key)?.0;
        }
        if !fc.is_finite() || !fd.is_finite() {
            break;
        }
    }
    Ok(if fc > fd { (c, fc, h) } else { (d, fd, h) })
}

/// Uniform grid `start, start + step, …` up to `stop` inclusive.
pub fn beta_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || stop < start {
        return Vec::new();
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{GraphSpec, Variant};

    fn chain(l1: f64) -> MetricGraph {
        GraphSpec::new(Variant::Tree)
            .root("a1")
            .mass("a2", 1.0)
            .controlled("a3")
            .edge("e1", "a1", "a2", l1)
            .edge("e2", "a2", "a3", 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn dimension_count() {
        let g = chain(2.0);
        let gen = assemble_generator(&g, 0.25).unwrap();
        // Nodes: 8 + 4 + 1 shared - 1 root, masses 1.
        let nodes = (8 + 1) + (4 + 1) - 1 - 1;
        assert_eq!(gen.dim(), 2 * nodes + 2);
    }

    #[test]
    fn dense_and_sparse_agree() {
        let g = chain(2.0);
        let gen = assemble_generator(&g, 0.25).unwrap();
        let z: Vec<f64> = (0..gen.dim()).map(|i| (i as f64).sin()).collect();
        let dense = gen.to_dense() * nalgebra::DVector::from_vec(z.clone());
        let sparse = gen.apply(&z);
        for (a, b) in dense.iter().zip(&sparse) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_solve_inverts() {
        let g = chain(2.0);
        let gen = assemble_generator(&g, 0.1).unwrap();
        let z: Vec<C64> = (0..gen.dim()).map(|i| C64::new((i as f64).cos(), 0.3)).collect();
        let back = gen.weight_solve(&gen.weight_apply(&z));
        let err = back.iter().zip(&z).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn norm_matches_dense_svd() {
        let g = chain(2.0);
        let gen = assemble_generator(&g, 0.25).unwrap();
        let beta = 1.3;
        let n = gen.dim();
        // Dense oracle: ‖G T⁻¹ G⁻¹‖₂ with G = W^{1/2} from a Cholesky factor.
        let mut w = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[i] = C64::new(1.0, 0.0);
            for (r, v) in gen.weight_apply(&e).iter().enumerate() {
                w[(r, i)] = v.re;
            }
        }
        let chol = w.cholesky().unwrap();
        let l = chol.l().map(|x| C64::new(x, 0.0));
        let a = gen.to_dense().map(|x| C64::new(x, 0.0));
        let t = DMatrix::<C64>::identity(n, n) * C64::new(0.0, beta) - a;
        let tinv = t.try_inverse().unwrap();
        let lh = l.adjoint();
        let m = &lh * tinv * lh.try_inverse().unwrap();
        let oracle = m.singular_values().max();
        let est = resolvent_norm(&gen, beta).unwrap().norm;
        assert!((est - oracle).abs() <= 1e-6 * oracle, "{est} vs {oracle}");
    }

    #[test]
    fn empty_grid_gives_empty_report() {
        let g = chain(2.0);
        let r = sweep(&g, &[], &SweepConfig::default()).unwrap();
        assert!(r.samples.is_empty() && r.levels.is_empty());
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }
}
