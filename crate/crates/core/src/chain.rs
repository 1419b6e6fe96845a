//! Stability of a chain of strings with unequal point masses.
//!
//! Vertices are `a_1 … a_{N+1}` (1-based): damping at `a_1`, masses
//! `m_2 … m_N` at the interior vertices, Dirichlet at `a_{N+1}`. Edge `j`
//! joins `a_j` to `a_{j+1}`.
//!
//! For a mass value `m` resonating at `β = 1/√m`, the group members
//! `i_1 < … < i_k` cut the chain into spans `[i_r, i_{r+1})`; the last span
//! runs to the Dirichlet end `N+1`. On each span the determinant `Δ` of the
//! local transfer system must not vanish.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::length::Length;
use crate::network::{GraphSpec, MetricGraph, Variant};

/// Longest span evaluated by explicit enumeration of index chains.
pub const MAX_CLOSED_SPAN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    /// `ℓ_1 … ℓ_N`.
    pub lengths: Vec<Length>,
    /// `m_2 … m_N`.
    pub masses: Vec<f64>,
}

/// Sign of the flux-jump coupling in the span system.
///
/// `Kirchhoff` follows the dissipative vertex law used by the rest of the
/// crate and gives `c_j = -β/(m_j β² - 1)`; `Reversed` flips it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxSign {
    #[default]
    Kirchhoff,
    Reversed,
}

impl FluxSign {
    fn factor(self) -> f64 {
        match self {
            FluxSign::Kirchhoff => -1.0,
            FluxSign::Reversed => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassGroup {
    pub mass: f64,
    /// Vertex indices `i_1(m) < … < i_k(m)`, 1-based.
    pub nodes: Vec<usize>,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaPair {
    pub delta: f64,
    pub m: f64,
}

/// Inputs `x_2 … x_n` and `c_3 … c_n` of a span in local numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanInputs {
    pub x: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaWitness {
    pub mass: f64,
    pub r: usize,
    pub span_start: usize,
    pub span_end: usize,
    pub beta: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainVerdict {
    pub stable: bool,
    pub tol: f64,
    /// Entries with `|Δ| ≤ tol`.
    pub witnesses: Vec<DeltaWitness>,
    /// Every `(m, r)` pair that was evaluated.
    pub table: Vec<DeltaWitness>,
}

impl ChainSpec {
    pub fn new(lengths: Vec<Length>, masses: Vec<f64>) -> Result<Self> {
        let c = ChainSpec { lengths, masses };
        c.validate()?;
        Ok(c)
    }

    pub fn from_values(lengths: &[f64], masses: &[f64]) -> Result<Self> {
        ChainSpec::new(lengths.iter().map(|&l| Length::from_f64(l)).collect(), masses.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lengths.len();
        if n == 0 {
            return Err(Error::InvalidArgument("chain needs at least one edge".into()));
        }
        if self.masses.len() + 1 != n {
            return Err(Error::InvalidArgument(format!(
                "chain with {n} edges needs {} masses, got {}",
                n - 1,
                self.masses.len()
            )));
        }
        for (j, l) in self.lengths.iter().enumerate() {
            if !(l.value() > 0.0) || !l.value().is_finite() {
                return Err(Error::NonpositiveLength(format!("e{}", j + 1)));
            }
        }
        if self.masses.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument("masses must be positive".into()));
        }
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.lengths.len()
    }

    /// `ℓ_j`, 1-based.
    pub fn length(&self, j: usize) -> f64 {
        self.lengths[j - 1].value()
    }

    /// `m_j` for `2 ≤ j ≤ N`.
    pub fn mass(&self, j: usize) -> f64 {
        self.masses[j - 2]
    }

    /// The chain as a metric graph: `a1` controlled, `a{N+1}` root.
    pub fn to_graph(&self) -> Result<MetricGraph> {
        self.validate()?;
        let n = self.edge_count();
        let mut spec = GraphSpec::new(Variant::Chain).controlled("a1");
        for j in 2..=n {
            spec = spec.mass(&format!("a{j}"), self.mass(j));
        }
        spec = spec.root(&format!("a{}", n + 1));
        for j in 1..=n {
            spec = spec.edge(&format!("e{j}"), &format!("a{j}"), &format!("a{}", j + 1), self.lengths[j - 1].clone());
        }
        spec.build()
    }
}

fn same_mass(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Groups interior vertices by mass value, in order of first appearance.
pub fn mass_groups(chain: &ChainSpec) -> Vec<MassGroup> {
    let mut groups: Vec<MassGroup> = Vec::new();
    for j in 2..=chain.edge_count() {
        let m = chain.mass(j);
        match groups.iter_mut().find(|g| same_mass(g.mass, m)) {
            Some(g) => g.nodes.push(j),
            None => groups.push(MassGroup { mass: m, nodes: vec![j], beta: 1.0 / m.sqrt() }),
        }
    }
    groups
}

/// `(i_r, i_{r+1})` with `i_{k+1} = N + 1`.
pub fn span(chain: &ChainSpec, group: &MassGroup, r: usize) -> Result<(usize, usize)> {
    let k = group.nodes.len();
    if r == 0 || r > k {
        return Err(Error::InvalidArgument(format!("r = {r} outside 1..={k}")));
    }
    let start = group.nodes[r - 1];
    let end = if r < k { group.nodes[r] } else { chain.edge_count() + 1 };
    Ok((start, end))
}

/// Local inputs of span `r` of `group` at frequency `beta`.
pub fn span_inputs(chain: &ChainSpec, group: &MassGroup, r: usize, beta: f64, sign: FluxSign) -> Result<SpanInputs> {
    let (start, end) = span(chain, group, r)?;
    let x = (start..end).map(|j| beta * chain.length(j)).collect();
    let mut c = Vec::with_capacity(end - start - 1);
    for j in start + 1..end {
        let denom = chain.mass(j) * beta * beta - 1.0;
        if denom == 0.0 {
            return Err(Error::Singular(format!("vertex a{j} resonates at beta = {beta}")));
        }
        c.push(sign.factor() * beta / denom);
    }
    Ok(SpanInputs { x, c })
}

/// Two-term recurrence for `(Δ_n, M_n)` from `x_2 … x_n`, `c_3 … c_n`.
pub fn delta_recurrence(x: &[f64], c: &[f64]) -> Result<DeltaPair> {
    if x.is_empty() || c.len() + 1 != x.len() {
        return Err(Error::InvalidArgument(format!("need x_2..x_n and c_3..c_n, got {} and {}", x.len(), c.len())));
    }
    let mut delta = x[0].sin();
    let mut m = -x[0].cos();
    for (xk, ck) in x[1..].iter().zip(c) {
        let (s, co) = xk.sin_cos();
        let d_next = (-co + ck * s) * delta + s * m;
        let m_next = (-s - ck * co) * delta - co * m;
        delta = d_next;
        m = m_next;
    }
    Ok(DeltaPair { delta, m })
}

/// Closed form by enumeration of index chains `2 = j_0 < j_1 < … < j_s ≤ n`.
pub fn delta_closed_sum(x: &[f64], c: &[f64]) -> Result<DeltaPair> {
    if x.is_empty() || c.len() + 1 != x.len() {
        return Err(Error::InvalidArgument("need x_2..x_n and c_3..c_n".into()));
    }
    if x.len() > MAX_CLOSED_SPAN {
        return Err(Error::InvalidArgument(format!(
            "span of {} edges exceeds the enumeration cap {MAX_CLOSED_SPAN}",
            x.len()
        )));
    }
    let n = x.len() + 1;
    let mut prefix = vec![0.0; n + 1];
    for k in 2..=n {
        prefix[k] = prefix[k - 1] + x[k - 2];
    }
    let angle = |a: usize, b: usize| prefix[b] - prefix[a - 1];
    let cand = n - 2;
    let (mut delta, mut m) = (0.0, 0.0);
    for mask in 0u32..(1u32 << cand) {
        let mut prod = 1.0;
        let mut prev = 2;
        let mut s = 0usize;
        for bit in 0..cand {
            if mask & (1 << bit) != 0 {
                let j = bit + 3;
                prod *= c[j - 3] * angle(prev, j - 1).sin();
                prev = j;
                s += 1;
            }
        }
        let tail = angle(prev, n);
        let sgn = if (n - s) % 2 == 0 { 1.0 } else { -1.0 };
        delta += sgn * prod * tail.sin();
        m += -sgn * prod * tail.cos();
    }
    Ok(DeltaPair { delta, m })
}

/// `det S_n` and the companion determinant, by dense LU.
pub fn delta_dense(x: &[f64], c: &[f64]) -> Result<DeltaPair> {
    if x.is_empty() || c.len() + 1 != x.len() {
        return Err(Error::InvalidArgument("need x_2..x_n and c_3..c_n".into()));
    }
    let k = x.len();
    let size = 2 * k;
    let build = |last_cos: bool| {
        let mut s = DMatrix::<f64>::zeros(size, size);
        s[(0, 0)] = 1.0;
        for i in 0..k - 1 {
            let (sn, cs) = x[i].sin_cos();
            let (r1, r2) = (1 + 2 * i, 2 + 2 * i);
            let (a, g) = (2 * i, 2 * i + 1);
            s[(r1, a)] = cs;
            s[(r1, g)] = sn;
            s[(r1, a + 2)] = -1.0;
            s[(r2, a)] = sn;
            s[(r2, g)] = -cs;
            s[(r2, a + 2)] = c[i];
            s[(r2, g + 2)] = 1.0;
        }
        let (sn, cs) = x[k - 1].sin_cos();
        let (a, g) = (2 * k - 2, 2 * k - 1);
        if last_cos {
            s[(size - 1, a)] = cs;
            s[(size - 1, g)] = sn;
        } else {
            s[(size - 1, a)] = sn;
            s[(size - 1, g)] = -cs;
        }
        s.determinant()
    };
    Ok(DeltaPair { delta: build(true), m: build(false) })
}

/// `Δ_{r(m)}` by the closed form at the resonance `β = 1/√m`.
pub fn delta_closed(group: &MassGroup, r: usize, chain: &ChainSpec, sign: FluxSign) -> Result<f64> {
    delta_closed_at(chain, group, r, group.beta, sign)
}

pub fn delta_closed_at(chain: &ChainSpec, group: &MassGroup, r: usize, beta: f64, sign: FluxSign) -> Result<f64> {
    let inp = span_inputs(chain, group, r, beta, sign)?;
    Ok(delta_closed_sum(&inp.x, &inp.c)?.delta)
}

/// `Δ_{r(m)}` by the recurrence, the production path.
pub fn delta_at(chain: &ChainSpec, group: &MassGroup, r: usize, beta: f64, sign: FluxSign) -> Result<f64> {
    let inp = span_inputs(chain, group, r, beta, sign)?;
    Ok(delta_recurrence(&inp.x, &inp.c)?.delta)
}

/// Exponentially stable iff `|Δ_{r(m)}| > tol` for every group and span.
pub fn chain_stable(chain: &ChainSpec, tol: f64, sign: FluxSign) -> Result<ChainVerdict> {
    chain.validate()?;
    let mut table = Vec::new();
    for g in mass_groups(chain) {
        for r in 1..=g.nodes.len() {
            let (span_start, span_end) = span(chain, &g, r)?;
            let delta = delta_at(chain, &g, r, g.beta, sign)?;
            table.push(DeltaWitness { mass: g.mass, r, span_start, span_end, beta: g.beta, delta });
        }
    }
    let witnesses: Vec<_> = table.iter().filter(|w| w.delta.abs() <= tol).cloned().collect();
    Ok(ChainVerdict { stable: witnesses.is_empty(), tol, witnesses, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grouping() {
        let c = ChainSpec::from_values(&[1.0; 4], &[1.0, 2.0, 1.0]).unwrap();
        let g = mass_groups(&c);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].nodes, vec![2, 4]);
        assert_eq!(g[1].nodes, vec![3]);
        let near = ChainSpec::from_values(&[1.0; 3], &[1.0, 1.0 + 1e-9]).unwrap();
        assert_eq!(mass_groups(&near).len(), 2);
    }

    #[test]
    fn seeds_and_single_span() {
        let p = delta_recurrence(&[0.7], &[]).unwrap();
        assert_eq!(p.delta, 0.7f64.sin());
        assert_eq!(p.m, -0.7f64.cos());
        let stable = ChainSpec::from_values(&[1.0, PI / 2.0], &[1.0]).unwrap();
        let v = chain_stable(&stable, 1e-9, FluxSign::Kirchhoff).unwrap();
        assert!(v.stable);
        assert!((v.table[0].delta - 1.0).abs() < 1e-15);
        let unstable = ChainSpec::from_values(&[1.0, PI], &[1.0]).unwrap();
        let v = chain_stable(&unstable, 1e-9, FluxSign::Kirchhoff).unwrap();
        assert!(!v.stable);
        assert_eq!((v.witnesses[0].mass, v.witnesses[0].r), (1.0, 1));
    }

    #[test]
    fn single_edge_vacuous() {
        let c = ChainSpec::from_values(&[PI], &[]).unwrap();
        assert!(chain_stable(&c, 1e-9, FluxSign::Kirchhoff).unwrap().stable);
    }

    #[test]
    fn three_edge_span_by_hand() {
        let x = [PI / 3.0, PI / 4.0, PI / 6.0];
        let c = [1.0, 2.0];
        let s = f64::sin;
        let expected = s(x[0] + x[1] + x[2]) - c[0] * s(x[0]) * s(x[1] + x[2]) - c[1] * s(x[0] + x[1]) * s(x[2])
            + c[0] * c[1] * s(x[0]) * s(x[1]) * s(x[2]);
        let closed = delta_closed_sum(&x, &c).unwrap().delta;
        assert!((closed - expected).abs() < 1e-14);
        assert!((delta_recurrence(&x, &c).unwrap().delta - expected).abs() < 1e-14);
        assert!((delta_dense(&x, &c).unwrap().delta - expected).abs() < 1e-13);
    }

    #[test]
    fn zero_angles_give_zero() {
        let d = delta_closed_sum(&[0.0; 5], &[0.3, -1.0, 2.0, 0.5]).unwrap();
        assert_eq!(d.delta, 0.0);
    }

    #[test]
    fn rotation_preserves_modulus() {
        let p = delta_recurrence(&[0.3, 1.1, 2.7, -0.4], &[0.0; 3]).unwrap();
        assert!((p.delta.powi(2) + p.m.powi(2) - 1.0).abs() < 1e-14);
    }
}
