use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wavenet::chain::{chain_stable, ChainVerdict, FluxSign};
use wavenet::counterex::{
    asymptotic_checks, circuit_probe, dirichlet_convergents, growth_law, predicted_limit, star_probe_at, ProbeShift,
};
use wavenet::dynamics::{run, InitialData};
use wavenet::resolvent::{beta_grid, sweep, Verdict};
use wavenet::spectra::{find_eigenvalues, SearchBox, SearchOptions};
use wavenet::{pi_tree_check, Length, PiTreeVerdict, Variant};

use crate::config::{ChainSection, RunConfig, SpectrumSection, SweepSection};
use crate::emit::{Cell, Outputs, Table};
use crate::svg::{Axis, Mark, Plot};

/// What a subcommand hands back to the dispatcher.
pub struct Outcome {
    /// Printed to stdout and saved under `summary_file`.
    pub summary: Value,
    pub summary_file: &'static str,
    pub parameters: Value,
    /// Unstable or unbounded, for `--expect-stable`.
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub variant: Variant,
    pub vertices: usize,
    pub edges: usize,
    pub total_length: f64,
    pub diameter: f64,
    pub pi_tree: Option<PiTreeVerdict>,
    pub chain: Option<ChainVerdict>,
}

pub fn check(cfg: &RunConfig, tol: f64) -> Result<Outcome> {
    let g = cfg.graph()?;
    let pi_tree = match g.variant() {
        Variant::Tree => Some(pi_tree_check(&g, tol)?),
        _ => None,
    };
    let chain = match cfg.is_chain() {
        true => {
            let c = cfg.chain.unwrap_or_default();
            Some(chain_stable(&cfg.chain_spec()?, c.tol, c.sign)?)
        }
        false => None,
    };
    let unstable = pi_tree.as_ref().is_some_and(|v| !v.is_pi_tree) || chain.as_ref().is_some_and(|v| !v.stable);
    let report = CheckReport {
        variant: g.variant(),
        vertices: g.vertices().len(),
        edges: g.edges().len(),
        total_length: g.total_length(),
        diameter: g.diameter(),
        pi_tree,
        chain,
    };
    Ok(Outcome {
        summary: serde_json::to_value(&report)?,
        summary_file: "verdict.json",
        parameters: json!({ "tol": tol, "graph": cfg.graph_spec()? }),
        unstable,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOverrides {
    pub t_final: Option<f64>,
    pub cfl: Option<f64>,
    pub cells_per_unit: Option<f64>,
    pub sample_stride: Option<usize>,
}

pub fn simulate(cfg: &RunConfig, o: SimOverrides, out: &mut Outputs, svg: bool) -> Result<Outcome> {
    let g = cfg.graph()?;
    let mut sim = cfg.simulation.unwrap_or_default();
    sim.t_final = o.t_final.or(sim.t_final).or(Some(8.0 * g.diameter()));
    sim.cfl = o.cfl.unwrap_or(sim.cfl);
    sim.cells_per_unit = o.cells_per_unit.unwrap_or(sim.cells_per_unit);
    sim.sample_stride = o.sample_stride.unwrap_or(sim.sample_stride);
    let data = cfg.initial.clone().unwrap_or_else(|| InitialData::generic(&g));
    let series = run(&g, &sim, &data)?;

    let mut table = Table::new(&["t", "E", "D", "R"]);
    for s in &series.samples {
        table.floats(&[s.t, s.energy, s.dissipation, s.residual]);
    }
    out.csv("energy.csv", &table)?;
    if svg {
        let pts = series.samples.iter().map(|s| (s.t, s.energy)).collect();
        out.svg("energy.svg", &Plot::new("Energy", Axis::linear("t"), Axis::log("E(t)")).series("E", pts, Mark::Line))?;
    }
    let last = series.last();
    let summary = json!({
        "omega": series.omega,
        "fit_residual": series.fit_residual,
        "decaying": series.omega > 0.0,
        "initial_energy": series.initial_energy(),
        "final_energy": last.energy,
        "final_time": last.t,
        "relative_residual": series.relative_residual(),
        "max_staggered_increase": series.max_staggered_increase,
        "dt": series.dt,
        "steps": series.steps,
        "cells": series.cells,
    });
    Ok(Outcome {
        summary,
        summary_file: "summary.json",
        parameters: json!({ "simulation": sim, "initial": data }),
        unstable: !(series.omega > 0.0),
    })
}

pub fn spectrum(cfg: &RunConfig, search_box: Option<SearchBox>, out: &mut Outputs, svg: bool) -> Result<Outcome> {
    let g = cfg.graph()?;
    let mut sec: SpectrumSection = cfg.spectrum.unwrap_or_default();
    if let Some(b) = search_box {
        sec.search_box = b;
    }
    let b = sec.search_box;
    if !(b.re_min < b.re_max && b.im_min < b.im_max) {
        bail!("search box must have re_min < re_max and im_min < im_max");
    }
    let opts = SearchOptions { tol: sec.tol, ..SearchOptions::default() };
    let mut report = find_eigenvalues(&g, b, &opts)?;
    report.roots.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));

    let mut table = Table::new(&["re", "im", "residual", "box_count"]);
    for r in &report.roots {
        table.push(vec![Cell::Float(r.re), Cell::Float(r.im), Cell::Float(r.residual), Cell::Int(r.box_count as u64)]);
    }
    out.csv("spectrum.csv", &table)?;
    if svg {
        let pts = report.roots.iter().map(|r| (r.re, r.im)).collect();
        out.svg(
            "spectrum.svg",
            &Plot::new("Spectrum", Axis::linear("Re λ"), Axis::linear("Im λ")).series("roots", pts, Mark::Dots),
        )?;
    }
    let axis_roots = report.roots.iter().filter(|r| r.re > -sec.axis_tol).count();
    let summary = json!({ "report": report, "axis_roots": axis_roots });
    Ok(Outcome {
        summary,
        summary_file: "summary.json",
        parameters: json!({ "spectrum": sec, "search": opts }),
        unstable: axis_roots > 0,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOverrides {
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
    pub h_base: Option<f64>,
    pub levels: Option<usize>,
}

pub fn sweep_cmd(cfg: &RunConfig, o: SweepOverrides, out: &mut Outputs, svg: bool) -> Result<Outcome> {
    let g = cfg.graph()?;
    let mut sec: SweepSection = cfg.sweep.unwrap_or_default();
    sec.start = o.start.unwrap_or(sec.start);
    sec.stop = o.stop.unwrap_or(sec.stop);
    sec.step = o.step.unwrap_or(sec.step);
    sec.ladder.h_base = o.h_base.unwrap_or(sec.ladder.h_base);
    sec.ladder.levels = o.levels.unwrap_or(sec.ladder.levels);
    if !(sec.step > 0.0) || sec.stop < sec.start {
        bail!("sweep needs step > 0 and stop ≥ start");
    }
    let report = sweep(&g, &beta_grid(sec.start, sec.stop, sec.step), &sec.ladder)?;

    let mut table = Table::new(&["beta", "mesh", "sigma_min", "norm"]);
    for s in &report.samples {
        table.floats(&[s.beta, s.h, s.sigma_min, s.norm]);
    }
    out.csv("sweep.csv", &table)?;
    if svg {
        let mut plot = Plot::new("Resolvent norm", Axis::linear("β"), Axis::log("‖(iβ − A_h)⁻¹‖"));
        for level in 0..sec.ladder.levels {
            let mut pts: Vec<(f64, f64)> =
                report.samples.iter().filter(|s| s.level == level).map(|s| (s.beta, s.norm)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            plot = plot.series(&format!("level {level}"), pts, Mark::Line);
        }
        out.svg("sweep.svg", &plot)?;
    }
    let summary = json!({
        "verdict": report.verdict,
        "ratio": report.ratio,
        "levels": report.levels,
        "peak_beta": report.peak(),
        "samples": report.samples.len(),
    });
    Ok(Outcome {
        summary,
        summary_file: "summary.json",
        parameters: serde_json::to_value(sec)?,
        unstable: report.verdict == Verdict::Unbounded,
    })
}

pub fn chain_check(cfg: &RunConfig, tol: Option<f64>, sign: Option<FluxSign>) -> Result<Outcome> {
    if !cfg.is_chain() {
        bail!("chain-check needs a chain config with `lengths` and `masses`");
    }
    let spec = cfg.chain_spec()?;
    let mut sec: ChainSection = cfg.chain.unwrap_or_default();
    sec.tol = tol.unwrap_or(sec.tol);
    sec.sign = sign.unwrap_or(sec.sign);
    let verdict = chain_stable(&spec, sec.tol, sec.sign)?;
    Ok(Outcome {
        unstable: !verdict.stable,
        summary: serde_json::to_value(&verdict)?,
        summary_file: "verdict.json",
        parameters: json!({ "chain": spec, "tol": sec.tol, "sign": sec.sign }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CexVariant {
    Circuit,
    Star,
}

/// Growth of a positive sequence: the last three increase and the last is
/// at least ten times the smallest.
fn grows(values: &[f64]) -> bool {
    let n = values.len();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    n >= 3 && values[n - 3] < values[n - 2] && values[n - 2] < values[n - 1] && values[n - 1] >= 10.0 * min
}

fn growth_name(g: bool) -> &'static str {
    if g {
        "non_exponential"
    } else {
        "inconclusive"
    }
}

pub fn counterexample(
    variant: CexVariant,
    length: &str,
    probes: usize,
    shift: ProbeShift,
    out: &mut Outputs,
    svg: bool,
) -> Result<Outcome> {
    let len = Length::parse(length)?;
    if probes == 0 {
        bail!("--probes must be positive");
    }
    let pairs = dirichlet_convergents(&len, probes)?;
    let mut table = Table::new(&["q_n", "beta_n", "b1_re", "b1_im", "ratio"]);
    let mut ratio_pts = Vec::new();
    let parameters =
        json!({ "variant": format!("{variant:?}").to_lowercase(), "length": len, "probes": probes, "shift": shift });

    let (summary, unstable) = match variant {
        CexVariant::Circuit => {
            let mut rows = Vec::new();
            for &pair in &pairs {
                rows.push(circuit_probe(pair, &len, shift)?);
            }
            for (pair, p) in pairs.iter().zip(&rows) {
                let ratio = p.ratio.map_or(f64::NAN, |r| r.norm());
                table.push(vec![
                    Cell::Int(pair.q),
                    Cell::Float(p.beta()),
                    Cell::Float(p.b1().re),
                    Cell::Float(p.b1().im),
                    Cell::Float(ratio),
                ]);
                ratio_pts.push((pair.q as f64, ratio));
            }
            let l4 = len.value();
            let growth = if rows.len() >= 3 { Some(growth_law(&rows, l4)?) } else { None };
            let checks = match rows.last() {
                Some(p) => asymptotic_checks(p, l4)?,
                None => Vec::new(),
            };
            let state: Vec<f64> = rows.iter().map(|p| p.state_norm_ratio).collect();
            let eqcir = rows.iter().map(|p| p.eqcir_rel_diff).fold(0.0, f64::max);
            let reduced = rows.iter().map(|p| p.reduced_rel_diff).fold(0.0, f64::max);
            let verdict = growth.as_ref().map_or("inconclusive", |g| match g.verdict {
                wavenet::counterex::GrowthVerdict::NonExponential => "non_exponential",
                wavenet::counterex::GrowthVerdict::Inconclusive => "inconclusive",
            });
            let state_growth = grows(&state);
            let summary = json!({
                "predicted_limit": predicted_limit(l4),
                "limit_estimate": growth.as_ref().map(|g| g.limit),
                "growth": growth,
                "asymptotic_checks": checks,
                "eqcir_max_rel_diff": eqcir,
                "reduced_max_rel_diff": reduced,
                "state_norm_ratios": state,
                "verdict": verdict,
                "state_norm_verdict": growth_name(state_growth),
            });
            (summary, verdict == "non_exponential" || state_growth)
        }
        CexVariant::Star => {
            let mut ratios = Vec::new();
            for &pair in &pairs {
                let p = star_probe_at(pair, &len, shift)?;
                table.push(vec![
                    Cell::Int(pair.q),
                    Cell::Float(p.beta),
                    Cell::Float(p.b.re),
                    Cell::Float(p.b.im),
                    Cell::Float(p.norm_ratio),
                ]);
                ratio_pts.push((pair.q as f64, p.norm_ratio));
                ratios.push(p.norm_ratio);
            }
            let g = grows(&ratios);
            let summary = json!({
                "limit_estimate": Value::Null,
                "norm_ratios": ratios,
                "verdict": growth_name(g),
            });
            (summary, g)
        }
    };
    out.csv("probes.csv", &table)?;
    if svg {
        out.svg(
            "probes.svg",
            &Plot::new("Probe ratios", Axis::log("q_n"), Axis::log("ratio")).series("ratio", ratio_pts, Mark::Line),
        )?;
    }
    Ok(Outcome { summary, summary_file: "summary.json", parameters, unstable })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_needs_three_increasing_values() {
        assert!(grows(&[1.0, 5.0, 9.0, 12.0]));
        assert!(!grows(&[1.0, 12.0]));
        assert!(!grows(&[1.0, 3.0, 2.0, 4.0]));
        assert!(!grows(&[1.0, 2.0, 3.0]));
        assert!(grows(&[4.0, 0.5, 1.0, 2.0, 6.0]));
    }
}
