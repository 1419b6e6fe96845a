mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavenet::chain::{delta_closed_sum, delta_dense, delta_recurrence};
use wavenet::dynamics::{init_state_with, stable_step, step, Stepper};
use wavenet::linalg::C64;
use wavenet::mesh::Mesh;
use wavenet::resolvent::{assemble_generator, resolvent_norm};
use wavenet::spectra::char_det;
use wavenet::{pi_tree_check, GraphSpec, Length, MetricGraph, Variant};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

/// Smooth data vanishing at Dirichlet ends, continuous at vertices.
fn random_state(g: &MetricGraph, mesh: &Mesh, rng: &mut ChaCha8Rng) -> wavenet::dynamics::NetworkState {
    let e = g.edges().len();
    let amp: Vec<[f64; 4]> = (0..e).map(|_| [0; 4].map(|_| rng.random_range(-1.0..1.0))).collect();
    let lens: Vec<f64> = g.edges().iter().map(|e| e.len()).collect();
    // Bubble functions vanish at both ends, so continuity and Dirichlet hold trivially.
    let bubble = |j: usize, x: f64, a: f64, b: f64| {
        let s = x / lens[j];
        s * (1.0 - s) * (a + b * (3.0 * s).sin())
    };
    let osc: Vec<(f64, f64)> =
        mesh.oscillators().iter().map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    init_state_with(g, mesh, |j, x| bubble(j, x, amp[j][0], amp[j][1]), |j, x| bubble(j, x, amp[j][2], amp[j][3]), &osc)
        .unwrap()
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn recurrence_closed_form_and_dense_agree(
        x in prop::collection::vec(0.0..std::f64::consts::TAU, 1..9),
        cs in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let c = &cs[..x.len() - 1];
        let r = delta_recurrence(&x, c).unwrap();
        let s = delta_closed_sum(&x, c).unwrap();
        let d = delta_dense(&x, c).unwrap();
        let scale: f64 = c.iter().map(|v| 1.0 + v.abs()).product();
        prop_assert!((r.delta - s.delta).abs() <= 1e-12 * scale);
        prop_assert!((r.m - s.m).abs() <= 1e-12 * scale);
        prop_assert!((r.delta - d.delta).abs() <= 1e-10 * scale);
    }

    #[test]
    fn pi_tree_relabel_invariant_and_monotone(seed in any::<u64>(), masses in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_tree(&mut rng, masses);
        let base = pi_tree_check(&g, 1e-9).unwrap();
        prop_assert!(base.is_pi_tree);

        // Reversing every edge and renaming every id leaves the verdict unchanged.
        let spec = g.spec();
        let mut relabelled = GraphSpec::new(Variant::Tree);
        for v in &spec.vertices {
            relabelled.vertices.push(wavenet::network::VertexSpec { id: format!("x_{}", v.id), ..v.clone() });
        }
        for e in &spec.edges {
            relabelled.edges.push(wavenet::network::EdgeSpec {
                id: format!("x_{}", e.id),
                tail: format!("x_{}", e.head),
                head: format!("x_{}", e.tail),
                ..e.clone()
            });
        }
        let again = pi_tree_check(&relabelled.build().unwrap(), 1e-9).unwrap();
        prop_assert_eq!(again.is_pi_tree, base.is_pi_tree);

        // Lengthening the root edge to 2π makes it a witness.
        let mut bad = g.spec();
        bad.edges[0].length = Length::pi_times(2, 1);
        let v = pi_tree_check(&bad.build().unwrap(), 1e-9).unwrap();
        prop_assert!(!v.is_pi_tree);
        prop_assert_eq!(v.witnesses, vec![bad.edges[0].id.clone()]);
    }

    #[test]
    fn generator_is_dissipative(seed in any::<u64>(), masses in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_tree(&mut rng, masses);
        let generator = assemble_generator(&g, 0.1).unwrap();
        for _ in 0..20 {
            let z: Vec<f64> = (0..generator.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let zc: Vec<C64> = z.iter().map(|&v| C64::new(v, 0.0)).collect();
            prop_assert!(generator.dissipation(&z) <= 1e-12 * generator.norm(&zc).powi(2));
        }
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn staggered_energy_never_increases(seed in any::<u64>(), masses in 1usize..4, cfl in 0.3f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_tree(&mut rng, masses);
        let mesh = Mesh::new(&g, 16.0).unwrap();
        let mut state = random_state(&g, &mesh, &mut rng);
        let mut stepper = Stepper::new(&mesh, cfl * stable_step(&mesh)).unwrap();
        let mut prev = f64::INFINITY;
        for _ in 0..400 {
            let e = stepper.step(&mut state).staggered_energy;
            prop_assert!(e <= prev * (1.0 + 1e-12) + 1e-15);
            prev = e;
        }
    }

    #[test]
    fn step_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_tree(&mut rng, 2);
        let mesh = Mesh::new(&g, 12.0).unwrap();
        let x = random_state(&g, &mesh, &mut rng);
        let y = random_state(&g, &mesh, &mut rng);
        let dt = 0.8 * stable_step(&mesh);
        let lhs = step(&mesh, &x.combine(a, &y, b), dt).unwrap();
        let rhs = step(&mesh, &x, dt).unwrap().combine(a, &step(&mesh, &y, dt).unwrap(), b);
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
    }

    #[test]
    fn characteristic_determinant_is_conjugate_symmetric(seed in any::<u64>(), re in -3.0f64..0.5, im in 0.1f64..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_tree(&mut rng, 2);
        let lam = C64::new(re, im);
        let a = char_det(&g, lam);
        let b = char_det(&g, lam.conj());
        prop_assert!((a - b.conj()).norm() <= 1e-9 * a.norm().max(1e-300));
    }
}

fn undamped_star() -> MetricGraph {
    GraphSpec::new(Variant::Star)
        .mass("c", 1.5)
        .root("r")
        .fixed("f1")
        .fixed("f2")
        .edge("e1", "c", "r", 1.0)
        .edge("e2", "c", "f1", 1.3)
        .edge("e3", "f2", "c", 0.8)
        .build()
        .unwrap()
}

#[test]
fn undamped_star_is_time_reversible() {
    let g = undamped_star();
    let mesh = Mesh::new(&g, 20.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = random_state(&g, &mesh, &mut rng);
    let mut s = start.clone();
    let mut stepper = Stepper::new(&mesh, 0.7 * stable_step(&mesh)).unwrap();
    for _ in 0..300 {
        stepper.step(&mut s);
    }
    // The flux couples to the oscillator velocity, so reversal maps
    // (y, v, p, q) to (y, -v, -p, q).
    let flip = |s: &mut wavenet::dynamics::NetworkState| {
        s.v.iter_mut().chain(s.p.iter_mut()).for_each(|x| *x = -*x);
    };
    flip(&mut s);
    for _ in 0..300 {
        stepper.step(&mut s);
    }
    flip(&mut s);
    assert!(s.max_abs_diff(&start) < 1e-10, "{}", s.max_abs_diff(&start));
}

#[test]
fn resolvent_norm_is_even_in_beta() {
    let g = common::two_edge_chain(Length::from_f64(2.0));
    let generator = assemble_generator(&g, 0.1).unwrap();
    for beta in [0.7, 3.1, 9.4] {
        let a = resolvent_norm(&generator, beta).unwrap().norm;
        let b = resolvent_norm(&generator, -beta).unwrap().norm;
        assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
    }
}
