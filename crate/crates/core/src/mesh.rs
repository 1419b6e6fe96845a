//! Uniform per-edge grids with shared vertex nodes.
//!
//! Unknown nodal values exclude Dirichlet vertices. Node weights are the
//! lumped masses of piecewise-linear elements, so `Σ w_i v_i²` and
//! `Σ_cells (Δy)²/h` are the trapezoid and exact-gradient energies.

use crate::error::{Error, Result};
use crate::network::{CircuitCoupling, MetricGraph, VertexKind};

/// Oscillator attached to a vertex node.
#[derive(Debug, Clone, PartialEq)]
pub struct Oscillator {
    pub vertex: usize,
    pub node: usize,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    cells: Vec<usize>,
    h: Vec<f64>,
    edge_nodes: Vec<Vec<Option<usize>>>,
    vertex_node: Vec<Option<usize>>,
    weight: Vec<f64>,
    oscillators: Vec<Oscillator>,
    /// Velocity damping coefficient per node (1 at controlled leaves and
    /// damped circuit nodes).
    damping: Vec<f64>,
    /// `coupling[i]` lists oscillators whose velocity enters the flux at node `i`.
    coupling: Vec<Vec<usize>>,
}

impl Mesh {
    /// `n_j = ceil(ℓ_j · cells_per_unit)`.
    pub fn new(graph: &MetricGraph, cells_per_unit: f64) -> Result<Mesh> {
        if !(cells_per_unit > 0.0 && cells_per_unit.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cells per unit length must be positive, got {cells_per_unit}"
            )));
        }
        let cells = graph.edges().iter().map(|e| (e.len() * cells_per_unit - 1e-9).ceil().max(1.0) as usize).collect();
        Mesh::with_cells(graph, cells)
    }

    /// Mesh with width at most `h` on every edge.
    pub fn with_spacing(graph: &MetricGraph, h: f64) -> Result<Mesh> {
        Mesh::new(graph, 1.0 / h)
    }

    pub fn with_cells(graph: &MetricGraph, cells: Vec<usize>) -> Result<Mesh> {
        let edges = graph.edges();
        if cells.len() != edges.len() {
            return Err(Error::InvalidArgument(format!("{} cell counts for {} edges", cells.len(), edges.len())));
        }
        for (e, &n) in edges.iter().zip(&cells) {
            if n < 4 {
                return Err(Error::UnderResolved { edge: e.id.clone(), cells: n });
            }
        }
        let h: Vec<f64> = edges.iter().zip(&cells).map(|(e, &n)| e.len() / n as f64).collect();

        let mut count = 0;
        let mut vertex_node = vec![None; graph.vertices().len()];
        for (k, v) in graph.vertices().iter().enumerate() {
            if !v.kind.is_dirichlet() {
                vertex_node[k] = Some(count);
                count += 1;
            }
        }
        let mut edge_nodes = Vec::with_capacity(edges.len());
        for (e, &n) in edges.iter().zip(&cells) {
            let mut nodes = Vec::with_capacity(n + 1);
            nodes.push(vertex_node[e.tail]);
            for _ in 1..n {
                nodes.push(Some(count));
                count += 1;
            }
            nodes.push(vertex_node[e.head]);
            edge_nodes.push(nodes);
        }

        let mut weight = vec![0.0; count];
        for (nodes, &hj) in edge_nodes.iter().zip(&h) {
            for (i, node) in nodes.iter().enumerate() {
                if let Some(a) = *node {
                    let end = i == 0 || i + 1 == nodes.len();
                    weight[a] += if end { 0.5 * hj } else { hj };
                }
            }
        }

        let mut oscillators = Vec::new();
        for k in graph.interior_vertices() {
            let node = vertex_node[k].expect("interior vertex has a node");
            oscillators.push(Oscillator { vertex: k, node, mass: graph.mass(k).unwrap() });
        }
        let mut damping = vec![0.0; count];
        let mut coupling = vec![Vec::new(); count];
        for (k, v) in graph.vertices().iter().enumerate() {
            match v.kind {
                VertexKind::ControlledLeaf => damping[vertex_node[k].unwrap()] = 1.0,
                VertexKind::InteriorMass { .. } => {
                    let node = vertex_node[k].unwrap();
                    if graph.damped_interior() {
                        damping[node] = 1.0;
                    }
                    let own = oscillators.iter().position(|o| o.vertex == k).unwrap();
                    let shared = graph.damped_interior() && graph.circuit_coupling() == CircuitCoupling::SharedFirst;
                    coupling[node].push(if shared { 0 } else { own });
                }
                _ => {}
            }
        }

        Ok(Mesh { cells, h, edge_nodes, vertex_node, weight, oscillators, damping, coupling })
    }

    pub fn node_count(&self) -> usize {
        self.weight.len()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn min_spacing(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    /// Node indices along edge `j` from tail to head; `None` at Dirichlet ends.
    pub fn edge_nodes(&self, j: usize) -> &[Option<usize>] {
        &self.edge_nodes[j]
    }

    pub fn vertex_node(&self, k: usize) -> Option<usize> {
        self.vertex_node[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn oscillators(&self) -> &[Oscillator] {
        &self.oscillators
    }

    pub fn damping(&self) -> &[f64] {
        &self.damping
    }

    pub fn coupling(&self, node: usize) -> &[usize] {
        &self.coupling[node]
    }

    /// Nodes with damping or oscillator coupling.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> =
            (0..self.node_count()).filter(|&i| self.damping[i] != 0.0 || !self.coupling[i].is_empty()).collect();
        for o in &self.oscillators {
            if !nodes.contains(&o.node) {
                nodes.push(o.node);
            }
        }
        nodes.sort_unstable();
        nodes
    }

    /// `out = K y` for the stiffness `Σ_cells (y_{i+1} - y_i)² / h`.
    pub fn apply_stiffness(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (nodes, &hj) in self.edge_nodes.iter().zip(&self.h) {
            let inv = 1.0 / hj;
            for w in nodes.windows(2) {
                let a = w[0].map_or(0.0, |i| y[i]);
                let b = w[1].map_or(0.0, |i| y[i]);
                let g = (b - a) * inv;
                if let Some(i) = w[0] {
                    out[i] -= g;
                }
                if let Some(i) = w[1] {
                    out[i] += g;
                }
            }
        }
    }

    /// `yᵀ K z`.
    pub fn stiffness_form(&self, y: &[f64], z: &[f64]) -> f64 {
        let mut s = 0.0;
        for (nodes, &hj) in self.edge_nodes.iter().zip(&self.h) {
            for w in nodes.windows(2) {
                let val = |u: &[f64], n: Option<usize>| n.map_or(0.0, |i| u[i]);
                s += (val(y, w[1]) - val(y, w[0])) * (val(z, w[1]) - val(z, w[0])) / hj;
            }
        }
        s
    }

    /// Grid positions `x_i = i h_j` on edge `j`.
    pub fn positions(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let h = self.h[j];
        (0..=self.cells[j]).map(move |i| i as f64 * h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{GraphSpec, Variant};

    fn tree() -> MetricGraph {
        GraphSpec::new(Variant::Tree)
            .root("r")
            .mass("a", 1.0)
            .controlled("b")
            .controlled("c")
            .edge("e1", "r", "a", 1.0)
            .edge("e2", "a", "b", 2.0)
            .edge("e3", "c", "a", 1.5)
            .build()
            .unwrap()
    }

    #[test]
    fn counts_and_weights() {
        let g = tree();
        let m = Mesh::new(&g, 8.0).unwrap();
        assert_eq!(m.cells(), &[8, 16, 12]);
        // 3 free vertices + interior nodes 7 + 15 + 11.
        assert_eq!(m.node_count(), 3 + 7 + 15 + 11);
        let total: f64 = m.weights().iter().sum();
        // Root half-cell carries no node.
        assert!((total - (g.total_length() - 0.5 / 8.0)).abs() < 1e-12);
        assert_eq!(m.boundary_nodes().len(), 3);
    }

    #[test]
    fn under_resolved_refused() {
        let g = tree();
        assert!(matches!(Mesh::new(&g, 2.0), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn stiffness_is_symmetric() {
        let g = tree();
        let m = Mesh::new(&g, 5.0).unwrap();
        let n = m.node_count();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let z: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        let mut ky = vec![0.0; n];
        m.apply_stiffness(&y, &mut ky);
        let lhs: f64 = ky.iter().zip(&z).map(|(a, b)| a * b).sum();
        assert!((lhs - m.stiffness_form(y.as_slice(), &z)).abs() < 1e-10);
    }
}
