//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! with status 1 if any criterion fails.

mod common;

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavenet::chain::{chain_stable, delta_closed_sum, delta_recurrence, mass_groups, ChainSpec, FluxSign};
use wavenet::counterex::{asymptotic_checks, circuit_probes, growth_law, ProbeShift};
use wavenet::dynamics::{run, InitialData, SimConfig};
use wavenet::linalg::{C64, I};
use wavenet::network::circuit_graph;
use wavenet::resolvent::{assemble_generator, beta_grid, sweep, SweepConfig, Verdict};
use wavenet::spectra::{char_det, count_zeros, eigenfunction, newton, SearchBox, SearchOptions};
use wavenet::{CircuitCoupling, Length};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn energy_identity() -> Outcome {
    let start = Instant::now();
    let g = common::three_edge_pi_tree();
    let data = InitialData::generic(&g);
    let levels = [25.0, 50.0, 100.0, 200.0, 400.0];
    let mut res = Vec::new();
    for &cpu in &levels {
        let cfg = SimConfig { t_final: Some(12.0), cells_per_unit: cpu, ..SimConfig::default() };
        match run(&g, &cfg, &data) {
            Ok(s) => res.push(s.relative_residual()),
            Err(e) => return outcome(false, format!("simulation failed at {cpu} cells/unit: {e}")),
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let n = res.len();
    let order = (res[n - 2] / res[n - 1]).log2();
    let finest = res[n - 1];
    let pass = finest <= 1e-3 && order >= 1.8 && elapsed < 60.0;
    let list: Vec<String> = res.iter().map(|r| format!("{r:.2e}")).collect();
    outcome(pass, format!("residual/E0 [{}], order {order:.2}, {elapsed:.1}s", list.join(", ")))
}

fn pi_tree_stable() -> Outcome {
    let g = common::two_edge_chain(Length::from_f64(2.0));
    let series = match run(&g, &SimConfig::default(), &InitialData::generic(&g)) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("simulation failed: {e}")),
    };
    let report = match sweep(&g, &beta_grid(0.0, 200.0, 0.5), &SweepConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let pass = series.omega > 0.0 && series.fit_residual < 0.2 && report.verdict == Verdict::Bounded;
    outcome(
        pass,
        format!(
            "omega {:.4}, fit residual {:.3}, sweep {} (ratio {:.4})",
            series.omega,
            series.fit_residual,
            report.verdict.name(),
            report.ratio.unwrap_or(f64::NAN)
        ),
    )
}

fn pi_edge_failure() -> Outcome {
    let g = common::two_edge_chain(Length::pi_times(1, 1));
    let det = char_det(&g, I).norm();
    let ef = match eigenfunction(&g, I, 1e-10) {
        Ok(ef) => ef,
        Err(e) => return outcome(false, format!("no eigenfunction at i: {e}")),
    };
    let osc = ef.oscillator("a2").unwrap();
    let scale = osc.p;
    let q = osc.q / scale;
    let e1 = ef.mode("e1").unwrap();
    let e2 = ef.mode("e2").unwrap();
    let kappa = e1.value(PI / 2.0) / scale / I;
    let mut y_err: f64 = 0.0;
    for k in 0..=40 {
        let x = PI * k as f64 / 40.0;
        y_err = y_err.max((e1.value(x) / scale - kappa * I * x.sin()).norm());
        y_err = y_err.max((e2.value(x / PI) / scale).norm());
    }
    let fit_err = y_err.max(kappa.im.abs()).max((q - I).norm());

    let cfg = SimConfig { t_final: Some(80.0), ..SimConfig::default() };
    let series = match run(&g, &cfg, &InitialData::generic(&g)) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("simulation failed: {e}")),
    };
    let rate = common::raw_decay_rate(&series.samples, 40.0);
    let plateau = series.last().energy / series.initial_energy();
    let pass = det <= 1e-8 && fit_err <= 1e-6 && series.omega <= 1e-3 && rate.abs() <= 1e-3;
    outcome(
        pass,
        format!(
            "|det M(i)| {det:.1e}, y = {:.6} i sin x, eigenvector error {fit_err:.1e}, omega {:.1e}, raw rate {rate:.1e}, E(T)/E0 {plateau:.3}",
            kappa.re, series.omega
        ),
    )
}

fn circuit_growth() -> Outcome {
    let l4 = Length::sqrt_of(2, 1);
    let start = Instant::now();
    let probes = match circuit_probes(&l4, 2, 1_200_000, ProbeShift::Shifted) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("probe construction failed: {e}")),
    };
    let growth = growth_law(&probes, l4.value());
    let elapsed = start.elapsed().as_secs_f64();
    let growth = match growth {
        Ok(g) => g,
        Err(e) => return outcome(false, format!("growth law failed: {e}")),
    };
    let last = probes.last().unwrap();
    let checks = asymptotic_checks(last, l4.value()).unwrap();
    let eqcir_worst = probes.iter().map(|p| p.eqcir_rel_diff).fold(0.0, f64::max);
    let reduced_worst = probes.iter().map(|p| p.reduced_rel_diff).fold(0.0, f64::max);
    let checks_pass = checks.iter().all(|c| c.rel_error < 0.05);
    let pass = growth.rel_error <= 0.1 && eqcir_worst <= 1e-10 && checks_pass && elapsed < 1.0;
    let errs: Vec<String> = checks.iter().map(|c| format!("{} {:.2}", c.name, c.rel_error)).collect();
    outcome(
        pass,
        format!(
            "q up to {}, limit {:.3e} vs predicted {:.4} (rel {:.2}), eqcir vs full {eqcir_worst:.1e}, \
             exact reduction vs full {reduced_worst:.1e}, asymptotics [{}], {elapsed:.3}s",
            last.pair.unwrap().q,
            growth.limit,
            growth.predicted,
            growth.rel_error,
            errs.join(", ")
        ),
    )
}

fn reference_delta(x: &[f64], c: &[f64]) -> (f64, f64) {
    let s = f64::sin;
    let co = f64::cos;
    match x.len() {
        1 => (s(x[0]), -co(x[0])),
        2 => (-s(x[0] + x[1]) + c[0] * s(x[0]) * s(x[1]), co(x[0] + x[1]) - c[0] * s(x[0]) * co(x[1])),
        3 => (
            s(x[0] + x[1] + x[2]) - c[0] * s(x[0]) * s(x[1] + x[2]) - c[1] * s(x[0] + x[1]) * s(x[2])
                + c[0] * c[1] * s(x[0]) * s(x[1]) * s(x[2]),
            -co(x[0] + x[1] + x[2]) + c[0] * s(x[0]) * co(x[1] + x[2]) + c[1] * s(x[0] + x[1]) * co(x[2])
                - c[0] * c[1] * s(x[0]) * s(x[1]) * co(x[2]),
        ),
        _ => unreachable!(),
    }
}

fn axis_root_near(graph: &wavenet::MetricGraph, beta: f64) -> bool {
    for half in [1e-3, 1.3e-3, 1.7e-3] {
        let b = SearchBox::new(-half, half, beta - half, beta + half);
        if let Ok(n) = count_zeros(graph, &b, &SearchOptions::default()) {
            return n > 0;
        }
    }
    panic!("root on every probing contour near {beta}");
}

fn chain_determinants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_rec: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=7);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        let c: Vec<f64> = (1..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a = delta_recurrence(&x, &c).unwrap();
        let b = delta_closed_sum(&x, &c).unwrap();
        let scale = c.iter().map(|v| 1.0 + v.abs()).product::<f64>();
        worst_rec = worst_rec.max((a.delta - b.delta).abs().max((a.m - b.m).abs()) / scale);
    }
    let mut worst_reference: f64 = 0.0;
    for _ in 0..100 {
        for n in 1..=3 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
            let c: Vec<f64> = (1..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (d, m) = reference_delta(&x, &c);
            let r = delta_recurrence(&x, &c).unwrap();
            worst_reference = worst_reference.max((r.delta - d).abs()).max((r.m - m).abs());
        }
    }
    let curated: [(&[f64], &[f64]); 5] = [
        (&[1.0, PI / 2.0], &[1.0]),
        (&[1.0, PI], &[1.0]),
        (&[1.0, 1.0, PI], &[1.0, 1.0]),
        (&[1.0, PI / 2.0, PI - 3f64.atan()], &[1.0, 4.0]),
        (&[0.7, 1.3, 2.1], &[1.0, 2.0]),
    ];
    let mut agree = 0;
    let mut verdicts = Vec::new();
    for (lengths, masses) in curated {
        let chain = ChainSpec::from_values(lengths, masses).unwrap();
        let verdict = chain_stable(&chain, 1e-9, FluxSign::Kirchhoff).unwrap();
        let graph = chain.to_graph().unwrap();
        let axis = mass_groups(&chain).iter().any(|g| axis_root_near(&graph, g.beta));
        if verdict.stable != axis {
            agree += 1;
        }
        verdicts.push(if verdict.stable { "stable" } else { "unstable" });
    }
    let pass = worst_rec <= 1e-12 && worst_reference <= 1e-12 && agree == 5;
    outcome(
        pass,
        format!(
            "recurrence vs closed form {worst_rec:.1e}, reference forms {worst_reference:.1e}, \
             spectral agreement {agree}/5 [{}]",
            verdicts.join(", ")
        ),
    )
}

fn rational_circuit() -> Outcome {
    let target = C64::new(0.0, TAU);
    let mut details = Vec::new();
    let mut pass = true;
    for coupling in [CircuitCoupling::PerNode, CircuitCoupling::SharedFirst] {
        let g = circuit_graph(Length::rational(1, 2), coupling).unwrap();
        let root = newton(&g, target + C64::new(1e-3, 1e-3), 80);
        let dist = root.map_or(f64::INFINITY, |z| (z - target).norm());
        pass &= dist <= 1e-8;
        details.push(format!("{coupling:?}: |root - 2πi| {dist:.1e}"));
    }
    outcome(pass, details.join(", "))
}

fn dissipativity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut graphs: Vec<_> = (0..4).map(|k| common::random_tree(&mut rng, 2 + k)).collect();
    graphs.push(circuit_graph(Length::from_f64(rng.random_range(0.5..2.0)), CircuitCoupling::PerNode).unwrap());
    let mut worst = f64::NEG_INFINITY;
    for g in &graphs {
        let generator = assemble_generator(g, 0.05).unwrap();
        for _ in 0..1000 {
            let z: Vec<f64> = (0..generator.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let zc: Vec<C64> = z.iter().map(|&v| C64::new(v, 0.0)).collect();
            worst = worst.max(generator.dissipation(&z) / generator.norm(&zc).powi(2));
        }
    }
    outcome(worst <= 1e-12, format!("max Re<A z, z>/|z|^2 = {worst:.2e} over 5 graphs x 1000 states"))
}

fn matched_edge() -> Outcome {
    let g = common::matched_edge(1.0);
    let count = count_zeros(&g, &SearchBox::new(-10.0, 0.0, -100.0, 100.0), &SearchOptions::default());
    let count = match count {
        Ok(n) => n,
        Err(e) => return outcome(false, format!("count failed: {e}")),
    };
    let mut ratios = Vec::new();
    for cpu in [100.0, 200.0, 400.0] {
        let cfg = SimConfig { t_final: Some(2.0), cells_per_unit: cpu, ..SimConfig::default() };
        let s = run(&g, &cfg, &InitialData::generic(&g)).unwrap();
        ratios.push(s.last().energy / s.initial_energy());
    }
    let shrinking = ratios.windows(2).all(|w| w[1] <= w[0]);
    let pass = count == 0 && ratios.iter().all(|&r| r < 1e-4) && shrinking;
    let list: Vec<String> = ratios.iter().map(|r| format!("{r:.1e}")).collect();
    outcome(pass, format!("eigenvalue count {count}, E(2l)/E0 [{}]", list.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("energy identity", energy_identity),
        ("Pi-tree chain is stable", pi_tree_stable),
        ("length-pi edge gives an axis eigenvalue", pi_edge_failure),
        ("circuit growth law", circuit_growth),
        ("chain determinants", chain_determinants),
        ("rational circuit eigenvalue", rational_circuit),
        ("generator dissipativity", dissipativity),
        ("matched single edge", matched_edge),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {name}: {} ({:.1}s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
