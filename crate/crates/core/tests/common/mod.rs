#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wavenet::{GraphSpec, Length, MetricGraph, Variant};

/// Random tree: a root, `masses` mass vertices with random masses, and a
/// controlled leaf under every mass vertex that would otherwise be a leaf.
pub fn random_tree(rng: &mut ChaCha8Rng, masses: usize) -> MetricGraph {
    let mut spec = GraphSpec::new(Variant::Tree).root("r");
    let mut children = vec![0usize; masses];
    let len = |rng: &mut ChaCha8Rng| Length::from_f64(rng.random_range(0.5..2.0));
    for k in 0..masses {
        spec = spec.mass(&format!("m{k}"), rng.random_range(0.3..3.0));
        if k == 0 {
            spec = spec.edge("e0", "r", "m0", len(rng));
        } else {
            let parent = rng.random_range(0..k);
            children[parent] += 1;
            spec = spec.edge(&format!("e{k}"), &format!("m{parent}"), &format!("m{k}"), len(rng));
        }
    }
    let mut leaf = 0;
    for k in 0..masses {
        let extra = if children[k] == 0 { 1 + rng.random_range(0..2) } else { rng.random_range(0..2) };
        for _ in 0..extra {
            let id = format!("c{leaf}");
            spec = spec.controlled(&id).edge(&format!("f{leaf}"), &format!("m{k}"), &id, len(rng));
            leaf += 1;
        }
    }
    spec.build().expect("random tree is valid")
}

/// Root `a1`, unit mass `a2`, controlled leaf `a3`; `ℓ2 = 1`.
pub fn two_edge_chain(l1: Length) -> MetricGraph {
    GraphSpec::new(Variant::Tree)
        .root("a1")
        .mass("a2", 1.0)
        .controlled("a3")
        .edge("e1", "a1", "a2", l1)
        .edge("e2", "a2", "a3", 1.0)
        .build()
        .unwrap()
}

/// Root, one mass and two controlled leaves; no edge is a multiple of π.
pub fn three_edge_pi_tree() -> MetricGraph {
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

pub fn matched_edge(l: f64) -> MetricGraph {
    GraphSpec::new(Variant::Tree).root("r").controlled("l").edge("e", "r", "l", l).build().unwrap()
}

/// `-slope` of the least-squares line through `(t, ln E)` for `t ≥ t0`.
pub fn raw_decay_rate(samples: &[wavenet::dynamics::EnergySample], t0: f64) -> f64 {
    let pts: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.t >= t0 && s.energy > 0.0).map(|s| (s.t, s.energy.ln())).collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    -sty / stt
}
