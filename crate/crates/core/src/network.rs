//! Metric graphs: vertices, oriented edges, incidence, and the Pi-tree test.
//!
//! Every edge is parametrized from its tail (`x = 0`) to its head (`x = ℓ`).
//! The incidence entry `d_kj` is `+1` when edge `j` ends at vertex `k` and
//! `-1` when it starts there.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::length::Length;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Tree,
    Circuit,
    Star,
    Chain,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Tree => "tree",
            Variant::Circuit => "circuit",
            Variant::Star => "star",
            Variant::Chain => "chain",
        }
    }
}

/// Reading of the circuit inner-node feedback.
///
/// `PerNode` couples node `k` to its own oscillator velocity `q_k`;
/// `SharedFirst` couples every inner node to `q_1` of the first mass vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitCoupling {
    #[default]
    PerNode,
    SharedFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VertexKind {
    Root,
    InteriorMass { mass: f64 },
    ControlledLeaf,
    FixedLeaf,
}

impl VertexKind {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, VertexKind::Root | VertexKind::FixedLeaf)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: String,
    pub kind: VertexKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub tail: usize,
    pub head: usize,
    pub length: Length,
}

impl Edge {
    pub fn len(&self) -> f64 {
        self.length.value()
    }
}

/// One end of an edge seen from a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeEnd {
    pub edge: usize,
    pub at_head: bool,
}

impl EdgeEnd {
    /// Incidence sign `d_kj` of this end.
    pub fn sign(self) -> f64 {
        if self.at_head {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    Root,
    #[serde(alias = "mass", alias = "interior")]
    InteriorMass,
    #[serde(alias = "controlled")]
    ControlledLeaf,
    #[serde(alias = "fixed")]
    FixedLeaf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSpec {
    pub id: String,
    pub kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub length: Length,
}

/// Structured graph description, the JSON config format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub variant: Variant,
    pub vertices: Vec<VertexSpec>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub circuit_coupling: CircuitCoupling,
}

impl GraphSpec {
    pub fn new(variant: Variant) -> Self {
        GraphSpec { variant, vertices: Vec::new(), edges: Vec::new(), circuit_coupling: CircuitCoupling::PerNode }
    }

    pub fn root(mut self, id: &str) -> Self {
        self.vertices.push(VertexSpec { id: id.into(), kind: KindTag::Root, mass: None });
        self
    }

    pub fn mass(mut self, id: &str, mass: f64) -> Self {
        self.vertices.push(VertexSpec { id: id.into(), kind: KindTag::InteriorMass, mass: Some(mass) });
        self
    }

    pub fn controlled(mut self, id: &str) -> Self {
        self.vertices.push(VertexSpec { id: id.into(), kind: KindTag::ControlledLeaf, mass: None });
        self
    }

    pub fn fixed(mut self, id: &str) -> Self {
        self.vertices.push(VertexSpec { id: id.into(), kind: KindTag::FixedLeaf, mass: None });
        self
    }

    pub fn edge(mut self, id: &str, tail: &str, head: &str, length: impl Into<Length>) -> Self {
        self.edges.push(EdgeSpec { id: id.into(), tail: tail.into(), head: head.into(), length: length.into() });
        self
    }

    pub fn coupling(mut self, coupling: CircuitCoupling) -> Self {
        self.circuit_coupling = coupling;
        self
    }

    pub fn build(&self) -> Result<MetricGraph> {
        build_graph(self)
    }
}

/// Validated, immutable metric graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    variant: Variant,
    coupling: CircuitCoupling,
    incident: Vec<Vec<EdgeEnd>>,
}

pub fn build_graph(spec: &GraphSpec) -> Result<MetricGraph> {
    let invalid = |m: String| Error::InvalidGraph(m);
    if spec.edges.is_empty() {
        return Err(invalid("graph has no edges".into()));
    }
    let mut index = HashMap::new();
    let mut vertices = Vec::with_capacity(spec.vertices.len());
    for v in &spec.vertices {
        if index.insert(v.id.clone(), vertices.len()).is_some() {
            return Err(invalid(format!("duplicate vertex id `{}`", v.id)));
        }
        let kind = match v.kind {
            KindTag::Root => VertexKind::Root,
            KindTag::ControlledLeaf => VertexKind::ControlledLeaf,
            KindTag::FixedLeaf => VertexKind::FixedLeaf,
            KindTag::InteriorMass => {
                let mass = v.mass.unwrap_or(1.0);
                if !(mass > 0.0 && mass.is_finite()) {
                    return Err(invalid(format!("mass of `{}` must be positive", v.id)));
                }
                VertexKind::InteriorMass { mass }
            }
        };
        if v.mass.is_some() && v.kind != KindTag::InteriorMass {
            return Err(invalid(format!("vertex `{}` carries a mass but is not interior", v.id)));
        }
        vertices.push(Vertex { id: v.id.clone(), kind });
    }

    let mut edges = Vec::with_capacity(spec.edges.len());
    let mut edge_ids = HashMap::new();
    for e in &spec.edges {
        if edge_ids.insert(e.id.clone(), ()).is_some() {
            return Err(invalid(format!("duplicate edge id `{}`", e.id)));
        }
        let l = e.length.value();
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::NonpositiveLength(e.id.clone()));
        }
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| invalid(format!("edge `{}` references unknown vertex `{id}`", e.id)))
        };
        let tail = lookup(&e.tail)?;
        let head = lookup(&e.head)?;
        if tail == head {
            return Err(invalid(format!("edge `{}` is a self-loop", e.id)));
        }
        edges.push(Edge { id: e.id.clone(), tail, head, length: e.length.clone() });
    }

    let roots = vertices.iter().filter(|v| v.kind == VertexKind::Root).count();
    if roots != 1 {
        return Err(Error::RootCount(roots));
    }
    let allows_fixed = matches!(spec.variant, Variant::Star | Variant::Chain);
    if !allows_fixed {
        if let Some(v) = vertices.iter().find(|v| v.kind == VertexKind::FixedLeaf) {
            return Err(invalid(format!("fixed leaf `{}` is only allowed in star and chain variants", v.id)));
        }
    }

    let mut incident = vec![Vec::new(); vertices.len()];
    for (j, e) in edges.iter().enumerate() {
        incident[e.tail].push(EdgeEnd { edge: j, at_head: false });
        incident[e.head].push(EdgeEnd { edge: j, at_head: true });
    }

    let mut seen = vec![false; vertices.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(k) = queue.pop_front() {
        for end in &incident[k] {
            let e = &edges[end.edge];
            let other = if end.at_head { e.tail } else { e.head };
            if !seen[other] {
                seen[other] = true;
                queue.push_back(other);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Disconnected);
    }

    let cycles = edges.len() + 1 - vertices.len();
    match spec.variant {
        Variant::Circuit => {
            if cycles != 1 {
                return Err(Error::CycleCount(cycles));
            }
        }
        other => {
            if cycles != 0 {
                return Err(Error::UnexpectedCycle { variant: other.name().into() });
            }
        }
    }

    for (k, v) in vertices.iter().enumerate() {
        let deg = incident[k].len();
        match v.kind {
            VertexKind::InteriorMass { .. } if deg < 2 => {
                return Err(invalid(format!("vertex `{}` has multiplicity 1 and must be a leaf or the root", v.id)));
            }
            VertexKind::Root | VertexKind::ControlledLeaf | VertexKind::FixedLeaf if deg != 1 => {
                return Err(invalid(format!("exterior vertex `{}` has multiplicity {deg}, expected 1", v.id)));
            }
            _ => {}
        }
        if spec.variant == Variant::Chain && deg > 2 {
            return Err(invalid(format!("chain vertex `{}` has degree {deg}", v.id)));
        }
    }

    Ok(MetricGraph { vertices, edges, variant: spec.variant, coupling: spec.circuit_coupling, incident })
}

impl MetricGraph {
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn circuit_coupling(&self) -> CircuitCoupling {
        self.coupling
    }

    pub fn incident(&self, k: usize) -> &[EdgeEnd] {
        &self.incident[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.incident[k].len()
    }

    /// Incidence entry `d_kj`.
    pub fn incidence(&self, k: usize, j: usize) -> i8 {
        let e = &self.edges[j];
        if e.head == k {
            1
        } else if e.tail == k {
            -1
        } else {
            0
        }
    }

    pub fn incidence_matrix(&self) -> Vec<Vec<i8>> {
        (0..self.vertices.len()).map(|k| (0..self.edges.len()).map(|j| self.incidence(k, j)).collect()).collect()
    }

    pub fn mass(&self, k: usize) -> Option<f64> {
        match self.vertices[k].kind {
            VertexKind::InteriorMass { mass } => Some(mass),
            _ => None,
        }
    }

    /// Interior vertices `I_M`, in vertex order.
    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&k| self.mass(k).is_some()).collect()
    }

    /// Controlled leaves `I_S`, in vertex order.
    pub fn controlled_leaves(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&k| self.vertices[k].kind == VertexKind::ControlledLeaf).collect()
    }

    pub fn root(&self) -> usize {
        self.vertices.iter().position(|v| v.kind == VertexKind::Root).expect("validated graph has a root")
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// Whether inner nodes carry the extra velocity damping of the circuit model.
    pub fn damped_interior(&self) -> bool {
        self.variant == Variant::Circuit
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(Edge::len).sum()
    }

    pub fn min_length(&self) -> f64 {
        self.edges.iter().map(Edge::len).fold(f64::INFINITY, f64::min)
    }

    /// Largest shortest-path distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let n = self.vertices.len();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (k, row) in d.iter_mut().enumerate() {
            row[k] = 0.0;
        }
        for e in &self.edges {
            let l = e.len();
            if l < d[e.tail][e.head] {
                d[e.tail][e.head] = l;
                d[e.head][e.tail] = l;
            }
        }
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][m] + d[m][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Reconstructs the structured description.
    pub fn spec(&self) -> GraphSpec {
        GraphSpec {
            variant: self.variant,
            vertices: self
                .vertices
                .iter()
                .map(|v| {
                    let (kind, mass) = match v.kind {
                        VertexKind::Root => (KindTag::Root, None),
                        VertexKind::InteriorMass { mass } => (KindTag::InteriorMass, Some(mass)),
                        VertexKind::ControlledLeaf => (KindTag::ControlledLeaf, None),
                        VertexKind::FixedLeaf => (KindTag::FixedLeaf, None),
                    };
                    VertexSpec { id: v.id.clone(), kind, mass }
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    id: e.id.clone(),
                    tail: self.vertices[e.tail].id.clone(),
                    head: self.vertices[e.head].id.clone(),
                    length: e.length.clone(),
                })
                .collect(),
            circuit_coupling: self.coupling,
        }
    }
}

/// Circuit of four strings: `e1: c0→r`, `e2: c0→w`, `e3: c0→u`, `e4: w→u`,
/// with `ℓ1 = ℓ2 = ℓ3 = 1` and unit masses at `c0`, `w`, `u`.
pub fn circuit_graph(l4: Length, coupling: CircuitCoupling) -> Result<MetricGraph> {
    GraphSpec::new(Variant::Circuit)
        .mass("c0", 1.0)
        .root("r")
        .mass("w", 1.0)
        .mass("u", 1.0)
        .edge("e1", "c0", "r", Length::rational(1, 1))
        .edge("e2", "c0", "w", Length::rational(1, 1))
        .edge("e3", "c0", "u", Length::rational(1, 1))
        .edge("e4", "w", "u", l4)
        .coupling(coupling)
        .build()
}

/// Star with a unit mass at the centre: `e1` to a controlled leaf, `e2` to
/// the root and `e3` to a fixed leaf; `ℓ1 = ℓ2 = 1`.
pub fn star_graph(l3: Length) -> Result<MetricGraph> {
    GraphSpec::new(Variant::Star)
        .mass("c", 1.0)
        .controlled("leaf")
        .root("r")
        .fixed("f")
        .edge("e1", "c", "leaf", Length::rational(1, 1))
        .edge("e2", "c", "r", Length::rational(1, 1))
        .edge("e3", "c", "f", l3)
        .build()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiTreeVerdict {
    pub is_pi_tree: bool,
    /// Ids of edges whose length is within tolerance of a positive multiple of π.
    pub witnesses: Vec<String>,
    pub tol: f64,
}

/// Pi-tree predicate: no edge outside the controlled-leaf edges has length in `πℕ*`.
///
/// `tol` is relative to the edge length. Lengths written as exact multiples
/// of π are flagged regardless of `tol`.
pub fn pi_tree_check(graph: &MetricGraph, tol: f64) -> Result<PiTreeVerdict> {
    if graph.variant != Variant::Tree {
        return Err(Error::NotATree);
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument("tolerance must be nonnegative".into()));
    }
    let mut witnesses = Vec::new();
    for e in &graph.edges {
        let leaf_edge = [e.tail, e.head].iter().any(|&k| graph.vertices[k].kind == VertexKind::ControlledLeaf);
        if leaf_edge {
            continue;
        }
        if e.length.exact_pi_multiple().is_some() || distance_to_pi_multiple(e.len()) <= tol * e.len() {
            witnesses.push(e.id.clone());
        }
    }
    Ok(PiTreeVerdict { is_pi_tree: witnesses.is_empty(), witnesses, tol })
}

/// `dist(ℓ, πℕ*)`.
pub fn distance_to_pi_multiple(l: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let k = (l / pi).round().max(1.0);
    (l - k * pi).abs()
}
