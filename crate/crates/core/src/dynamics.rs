//! Time-domain simulation with energy accounting.
//!
//! Space: lumped piecewise-linear elements on each edge, which is the
//! standard three-point stencil in the interior and a ghost-free
//! realization of the flux conditions at vertices. Time: velocity Verlet.
//! The first half kick is explicit; the second is implicit in the vertex
//! velocities and oscillator velocities only, a small constant system that
//! is factored once per time step size.
//!
//! Along the staggered iterates the modified energy
//! `½|v^{n+½}|²_W + ½(yⁿ)ᵀK y^{n+1} + ½Σ(m q^{n+½}² + pⁿ p^{n+1})`
//! decreases by exactly `dt·Σ γ (vⁿ)²` per step (up to round-off), which is
//! the discrete form of the energy identity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::network::{CircuitCoupling, MetricGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: f64,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl NetworkState {
    pub fn zeros(mesh: &Mesh) -> Self {
        let n = mesh.node_count();
        let k = mesh.oscillators().len();
        NetworkState { t: 0.0, y: vec![0.0; n], v: vec![0.0; n], p: vec![0.0; k], q: vec![0.0; k] }
    }

    /// `a·self + b·other`, used by linearity checks.
    pub fn combine(&self, a: f64, other: &NetworkState, b: f64) -> NetworkState {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, w)| a * u + b * w).collect();
        NetworkState {
            t: self.t,
            y: mix(&self.y, &other.y),
            v: mix(&self.v, &other.v),
            p: mix(&self.p, &other.p),
            q: mix(&self.q, &other.q),
        }
    }

    pub fn max_abs_diff(&self, other: &NetworkState) -> f64 {
        let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, w)| (u - w).abs()).fold(0.0, f64::max);
        d(&self.y, &other.y).max(d(&self.v, &other.v)).max(d(&self.p, &other.p)).max(d(&self.q, &other.q))
    }
}

/// Closed-form initial profile on one edge, in the edge's own coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `a·sin(kπx/ℓ)`.
    Sine {
        edge: String,
        #[serde(default = "default_mode")]
        mode: u32,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    /// Smooth compactly supported bump, peak `a` at `center·ℓ`, support
    /// half-width `width·ℓ`.
    Bump {
        edge: String,
        #[serde(default = "default_center")]
        center: f64,
        #[serde(default = "default_width")]
        width: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
}

fn default_mode() -> u32 {
    1
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_center() -> f64 {
    0.5
}
fn default_width() -> f64 {
    0.25
}

impl Profile {
    pub fn edge(&self) -> &str {
        match self {
            Profile::Sine { edge, .. } | Profile::Bump { edge, .. } => edge,
        }
    }

    pub fn eval(&self, x: f64, len: f64) -> f64 {
        match *self {
            Profile::Sine { mode, amplitude, .. } => amplitude * (mode as f64 * std::f64::consts::PI * x / len).sin(),
            Profile::Bump { center, width, amplitude, .. } => {
                let r = (x / len - center) / width;
                if r.abs() >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - r * r)).exp()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorInit {
    pub vertex: String,
    #[serde(default)]
    pub s0: f64,
    #[serde(default)]
    pub s1: f64,
}

/// Initial data: sums of profiles for `y₀` and `y₁`, oscillator `(s₀, s₁)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    #[serde(default)]
    pub displacement: Vec<Profile>,
    #[serde(default)]
    pub velocity: Vec<Profile>,
    #[serde(default)]
    pub oscillators: Vec<OscillatorInit>,
}

impl InitialData {
    /// One bump on every edge, alternating sign, plus a unit displacement of
    /// every oscillator.
    pub fn generic(graph: &MetricGraph) -> InitialData {
        let displacement = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(j, e)| Profile::Bump {
                edge: e.id.clone(),
                center: 0.4 + 0.05 * (j % 3) as f64,
                width: 0.3,
                amplitude: if j % 2 == 0 { 1.0 } else { -0.7 },
            })
            .collect();
        let oscillators = graph
            .interior_vertices()
            .into_iter()
            .map(|k| OscillatorInit { vertex: graph.vertices()[k].id.clone(), s0: 0.5, s1: 0.0 })
            .collect();
        InitialData { displacement, velocity: Vec::new(), oscillators }
    }

    fn check(&self, graph: &MetricGraph) -> Result<()> {
        for p in self.displacement.iter().chain(&self.velocity) {
            if graph.edge_index(p.edge()).is_none() {
                return Err(Error::InitialData(format!("unknown edge `{}`", p.edge())));
            }
            if let Profile::Bump { width, center, .. } = *p {
                if !(width > 0.0) || !center.is_finite() {
                    return Err(Error::InitialData(format!("bump on `{}` needs a positive width", p.edge())));
                }
            }
        }
        for o in &self.oscillators {
            match graph.vertex_index(&o.vertex) {
                Some(k) if graph.mass(k).is_some() => {}
                _ => return Err(Error::InitialData(format!("`{}` is not a mass vertex", o.vertex))),
            }
        }
        Ok(())
    }

    fn sum(profiles: &[Profile], graph: &MetricGraph, j: usize, x: f64) -> f64 {
        let e = &graph.edges()[j];
        profiles.iter().filter(|p| p.edge() == e.id).map(|p| p.eval(x, e.len())).sum()
    }
}

/// Samples the data on the mesh after checking continuity and Dirichlet values.
pub fn init_state(graph: &MetricGraph, mesh: &Mesh, data: &InitialData) -> Result<NetworkState> {
    data.check(graph)?;
    let mut osc = vec![(0.0, 0.0); mesh.oscillators().len()];
    for o in &data.oscillators {
        let k = graph.vertex_index(&o.vertex).unwrap();
        let i = mesh.oscillators().iter().position(|m| m.vertex == k).unwrap();
        osc[i] = (osc[i].0 + o.s0, osc[i].1 + o.s1);
    }
    init_state_with(
        graph,
        mesh,
        |j, x| InitialData::sum(&data.displacement, graph, j, x),
        |j, x| InitialData::sum(&data.velocity, graph, j, x),
        &osc,
    )
}

/// As [`init_state`] with arbitrary edgewise functions `y0(j, x)`, `y1(j, x)`
/// and oscillator pairs `(s₀, s₁)` in mesh oscillator order.
pub fn init_state_with(
    graph: &MetricGraph,
    mesh: &Mesh,
    y0: impl Fn(usize, f64) -> f64,
    y1: impl Fn(usize, f64) -> f64,
    oscillators: &[(f64, f64)],
) -> Result<NetworkState> {
    if oscillators.len() != mesh.oscillators().len() {
        return Err(Error::InitialData(format!(
            "{} oscillator pairs for {} mass vertices",
            oscillators.len(),
            mesh.oscillators().len()
        )));
    }
    let edges = graph.edges();
    let mut scale: f64 = 1.0;
    for (j, e) in edges.iter().enumerate() {
        scale = scale.max(y0(j, 0.0).abs()).max(y0(j, e.len()).abs());
    }
    let tol = 1e-9 * scale;
    for (k, v) in graph.vertices().iter().enumerate() {
        let values: Vec<f64> = graph
            .incident(k)
            .iter()
            .map(|end| y0(end.edge, if end.at_head { edges[end.edge].len() } else { 0.0 }))
            .collect();
        if v.kind.is_dirichlet() {
            if let Some(bad) = values.iter().find(|y| y.abs() > tol) {
                return Err(Error::InitialData(format!("y0 = {bad} at Dirichlet vertex `{}`", v.id)));
            }
        } else {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > tol {
                return Err(Error::InitialData(format!("y0 is discontinuous at vertex `{}`", v.id)));
            }
        }
    }

    let n = mesh.node_count();
    let mut y = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut hits = vec![0usize; n];
    for j in 0..edges.len() {
        for (node, x) in mesh.edge_nodes(j).iter().zip(mesh.positions(j)) {
            if let Some(i) = *node {
                y[i] += y0(j, x);
                v[i] += y1(j, x);
                hits[i] += 1;
            }
        }
    }
    for i in 0..n {
        y[i] /= hits[i] as f64;
        v[i] /= hits[i] as f64;
    }
    Ok(NetworkState {
        t: 0.0,
        y,
        v,
        p: oscillators.iter().map(|o| o.0).collect(),
        q: oscillators.iter().map(|o| o.1).collect(),
    })
}

/// `½Σ w v² + ½ yᵀK y + ½Σ(m q² + p²)`.
pub fn energy(mesh: &Mesh, state: &NetworkState) -> f64 {
    let kinetic: f64 = mesh.weights().iter().zip(&state.v).map(|(w, v)| w * v * v).sum();
    let potential = mesh.stiffness_form(&state.y, &state.y);
    let osc: f64 =
        mesh.oscillators().iter().zip(state.p.iter().zip(&state.q)).map(|(o, (p, q))| o.mass * q * q + p * p).sum();
    0.5 * (kinetic + potential + osc)
}

/// Rate at which the vertex conditions remove energy, `-dE/dt`.
pub fn dissipation_rate(mesh: &Mesh, state: &NetworkState) -> f64 {
    let mut power = 0.0;
    for i in mesh.boundary_nodes() {
        let v = state.v[i];
        let flux: f64 = mesh.coupling(i).iter().map(|&o| state.q[o]).sum();
        power += v * (flux - mesh.damping()[i] * v);
    }
    for (o, osc) in mesh.oscillators().iter().enumerate() {
        power -= state.q[o] * state.v[osc.node];
    }
    -power
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Modified energy at the half step.
    pub staggered_energy: f64,
}

/// Largest stable step: the mesh CFL limit and the oscillator limit `2√m`.
pub fn stable_step(mesh: &Mesh) -> f64 {
    mesh.oscillators().iter().map(|o| 2.0 * o.mass.sqrt()).fold(mesh.min_spacing(), f64::min)
}

/// Velocity-Verlet stepper for a fixed mesh and step size.
#[derive(Debug, Clone)]
pub struct Stepper<'m> {
    mesh: &'m Mesh,
    dt: f64,
    nodes: Vec<usize>,
    local: Vec<Option<usize>>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    ky: Vec<f64>,
}

impl<'m> Stepper<'m> {
    pub fn new(mesh: &'m Mesh, dt: f64) -> Result<Self> {
        let limit = stable_step(mesh);
        if !(dt > 0.0) || dt > limit {
            return Err(Error::Cfl { dt, limit });
        }
        let nodes = mesh.boundary_nodes();
        let mut local = vec![None; mesh.node_count()];
        for (a, &i) in nodes.iter().enumerate() {
            local[i] = Some(a);
        }
        let nb = nodes.len();
        let no = mesh.oscillators().len();
        let tau = 0.5 * dt;
        let mut m = DMatrix::zeros(nb + no, nb + no);
        for (a, &i) in nodes.iter().enumerate() {
            m[(a, a)] = mesh.weights()[i] + tau * mesh.damping()[i];
            for &o in mesh.coupling(i) {
                m[(a, nb + o)] -= tau;
            }
        }
        for (o, osc) in mesh.oscillators().iter().enumerate() {
            m[(nb + o, nb + o)] = osc.mass;
            m[(nb + o, local[osc.node].unwrap())] += tau;
        }
        let lu = m.lu();
        Ok(Stepper { mesh, dt, nodes, local, lu, ky: vec![0.0; mesh.node_count()] })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Boundary force `Σ C q - γ v` at node `i`.
    fn boundary_force(&self, i: usize, v: &[f64], q: &[f64]) -> f64 {
        let flux: f64 = self.mesh.coupling(i).iter().map(|&o| q[o]).sum();
        flux - self.mesh.damping()[i] * v[i]
    }

    pub fn step(&mut self, s: &mut NetworkState) -> StepInfo {
        let mesh = self.mesh;
        let (dt, tau) = (self.dt, 0.5 * self.dt);
        let w = mesh.weights();
        let n = mesh.node_count();
        let oscs = mesh.oscillators();

        mesh.apply_stiffness(&s.y, &mut self.ky);
        let mut vh = vec![0.0; n];
        for i in 0..n {
            let extra = if self.local[i].is_some() { self.boundary_force(i, &s.v, &s.q) } else { 0.0 };
            vh[i] = s.v[i] + tau / w[i] * (-self.ky[i] + extra);
        }
        let qh: Vec<f64> =
            oscs.iter().enumerate().map(|(o, osc)| s.q[o] + tau / osc.mass * (-s.p[o] - s.v[osc.node])).collect();

        let y_old = std::mem::take(&mut s.y);
        let p_old = std::mem::take(&mut s.p);
        s.y = y_old.iter().zip(&vh).map(|(y, v)| y + dt * v).collect();
        s.p = p_old.iter().zip(&qh).map(|(p, q)| p + dt * q).collect();

        let kinetic: f64 = w.iter().zip(&vh).map(|(w, v)| w * v * v).sum();
        let cross: f64 = self.ky.iter().zip(&s.y).map(|(a, b)| a * b).sum();
        let osc_e: f64 = oscs.iter().enumerate().map(|(o, osc)| osc.mass * qh[o] * qh[o] + p_old[o] * s.p[o]).sum();
        let staggered_energy = 0.5 * (kinetic + cross + osc_e);

        mesh.apply_stiffness(&s.y, &mut self.ky);
        for i in 0..n {
            if self.local[i].is_none() {
                s.v[i] = vh[i] - tau / w[i] * self.ky[i];
            }
        }
        let nb = self.nodes.len();
        let mut rhs = DVector::zeros(nb + oscs.len());
        for (a, &i) in self.nodes.iter().enumerate() {
            rhs[a] = w[i] * vh[i] - tau * self.ky[i];
        }
        for (o, osc) in oscs.iter().enumerate() {
            rhs[nb + o] = osc.mass * qh[o] - tau * s.p[o];
        }
        if self.lu.solve_mut(&mut rhs) {
            for (a, &i) in self.nodes.iter().enumerate() {
                s.v[i] = rhs[a];
            }
            for o in 0..oscs.len() {
                s.q[o] = rhs[nb + o];
            }
        }
        s.t += dt;
        StepInfo { staggered_energy }
    }
}

/// One step of size `dt`, building a stepper on the fly.
pub fn step(mesh: &Mesh, state: &NetworkState, dt: f64) -> Result<NetworkState> {
    let mut st = Stepper::new(mesh, dt)?;
    let mut next = state.clone();
    st.step(&mut next);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Final time; defaults to eight graph diameters.
    #[serde(default, rename = "T", alias = "t_final")]
    pub t_final: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_cells", rename = "cells-per-unit-length", alias = "cells_per_unit")]
    pub cells_per_unit: f64,
    #[serde(default = "default_stride", rename = "sample-stride", alias = "sample_stride")]
    pub sample_stride: usize,
}

fn default_cfl() -> f64 {
    0.9
}
fn default_cells() -> f64 {
    64.0
}
fn default_stride() -> usize {
    10
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_final: None,
            cfl: default_cfl(),
            cells_per_unit: default_cells(),
            sample_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub samples: Vec<EnergySample>,
    /// Fitted decay exponent of `E(t) ~ e^{-ωt}` on `[T/2, T]`; zero when
    /// the fit is rejected.
    pub omega: f64,
    /// Relative residual `√(1 - R²)` of the log-linear fit.
    pub fit_residual: f64,
    /// Largest increase of the staggered energy over one step, relative to `E(0)`.
    pub max_staggered_increase: f64,
    pub dt: f64,
    pub steps: usize,
    pub cells: Vec<usize>,
}

impl EnergySeries {
    pub fn initial_energy(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.energy)
    }

    pub fn last(&self) -> &EnergySample {
        self.samples.last().expect("series has samples")
    }

    /// `|R(T)| / E(0)`.
    pub fn relative_residual(&self) -> f64 {
        let e0 = self.initial_energy();
        if e0 == 0.0 {
            0.0
        } else {
            self.last().residual.abs() / e0
        }
    }
}

/// Least-squares fit of `ln E` against `t` on the second half of the run.
///
/// Returns `(ω, residual)` with `ω = -slope`, set to zero when the relative
/// residual exceeds 0.2.
pub fn decay_fit(samples: &[EnergySample]) -> (f64, f64) {
    let Some(first) = samples.first() else { return (0.0, 0.0) };
    let t_end = samples.last().unwrap().t;
    let floor = first.energy * 1e-25;
    let usable = |s: &&EnergySample| s.energy > floor && s.energy > 0.0;
    let mut pts: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.t >= 0.5 * t_end).filter(usable).map(|s| (s.t, s.energy.ln())).collect();
    if pts.len() < 3 {
        pts = samples.iter().filter(usable).map(|s| (s.t, s.energy.ln())).collect();
    }
    if pts.len() < 3 {
        return (0.0, 0.0);
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return (0.0, 0.0);
    }
    let slope = sty / stt;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mt)).powi(2)).sum();
    let residual = if syy == 0.0 { 0.0 } else { (ss_res / syy).sqrt() };
    let omega = if residual > 0.2 { 0.0 } else { -slope };
    (omega, residual)
}

/// Simulates from `data` and records `E`, `D` and `R = E(0) - E - D`.
///
/// `E` is the energy at the integer time levels. The blow-up guard watches
/// the staggered energy, which is the one that is exactly nonincreasing;
/// the integer-level energy may oscillate by `O(dt²)` relative amounts.
pub fn run(graph: &MetricGraph, config: &SimConfig, data: &InitialData) -> Result<EnergySeries> {
    let mesh = Mesh::new(graph, config.cells_per_unit)?;
    let state = init_state(graph, &mesh, data)?;
    run_state(graph, &mesh, config, state)
}

/// As [`run`] from an explicit state on a given mesh.
pub fn run_state(
    graph: &MetricGraph,
    mesh: &Mesh,
    config: &SimConfig,
    mut state: NetworkState,
) -> Result<EnergySeries> {
    if !(config.cfl > 0.0 && config.cfl <= 1.0) {
        return Err(Error::InvalidArgument(format!("cfl must lie in (0, 1], got {}", config.cfl)));
    }
    if config.sample_stride == 0 {
        return Err(Error::InvalidArgument("sample stride must be positive".into()));
    }
    let t_final = config.t_final.unwrap_or(8.0 * graph.diameter());
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t_final}")));
    }
    let limit = stable_step(mesh);
    let steps = (t_final / (config.cfl * limit)).ceil().max(1.0) as usize;
    let dt = t_final / steps as f64;
    let mut stepper = Stepper::new(mesh, dt)?;
    let dissipative = !(graph.damped_interior() && graph.circuit_coupling() == CircuitCoupling::SharedFirst);

    let e0 = energy(mesh, &state);
    let mut samples = vec![EnergySample { t: 0.0, energy: e0, dissipation: 0.0, residual: 0.0 }];
    let mut d = 0.0;
    let mut rate = dissipation_rate(mesh, &state);
    let mut prev_staggered = f64::NAN;
    let mut max_increase: f64 = 0.0;
    let mut last_staggered = f64::NAN;
    for n in 1..=steps {
        let info = stepper.step(&mut state);
        if prev_staggered.is_finite() && e0 > 0.0 {
            max_increase = max_increase.max((info.staggered_energy - prev_staggered) / e0);
        }
        prev_staggered = info.staggered_energy;
        let next_rate = dissipation_rate(mesh, &state);
        d += 0.5 * dt * (rate + next_rate);
        rate = next_rate;
        if n % config.sample_stride == 0 || n == steps {
            let e = energy(mesh, &state);
            let grew = dissipative && info.staggered_energy > 1.01 * last_staggered + 1e-12 * e0;
            if !e.is_finite() || grew {
                return Err(Error::BlowUp { t: state.t, from: last_staggered, to: info.staggered_energy });
            }
            last_staggered = info.staggered_energy;
            samples.push(EnergySample { t: state.t, energy: e, dissipation: d, residual: e0 - e - d });
        }
    }
    let (omega, fit_residual) = decay_fit(&samples);
    Ok(EnergySeries {
        samples,
        omega,
        fit_residual,
        max_staggered_increase: max_increase,
        dt,
        steps,
        cells: mesh.cells().to_vec(),
    })
}
