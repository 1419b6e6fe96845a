//! Probe frequencies that defeat uniform resolvent bounds on the circuit
//! and the star.
//!
//! Frequencies are `β_n = 2π q_n + 2π q_n^{-1/4}` built from Dirichlet
//! convergents `p_n/q_n` of an irrational length. Trigonometric values at
//! `β_n` are evaluated after exact removal of the multiples of `2π`, with
//! `q_n ℓ - p_n` formed in double-double arithmetic.
//!
//! The circuit boundary system is solved as given in the unknowns
//! `(a_1, …, a_4, b_1, …, b_4)` of `y^j = a_j sin βx + b_j cos βx` (plus the
//! particular solution `-x cos βx / (2β)` on edge 2), forced by
//! `g = -sin βx` on edge 2.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::length::{Length, LengthExpr};
use crate::linalg::{C64, I};

const TAU: f64 = std::f64::consts::TAU;
const PI: f64 = std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergentPair {
    pub p: u64,
    pub q: u64,
}

impl ConvergentPair {
    /// `q ℓ - p` in double-double arithmetic.
    pub fn defect(&self, len: &Length) -> TwoFloat {
        len.to_dd() * TwoFloat::from(self.q) - TwoFloat::from(self.p)
    }

    /// `|q ℓ - p| < 1/q`, checked in double-double arithmetic.
    pub fn satisfies_dirichlet(&self, len: &Length) -> bool {
        self.defect(len).abs() < TwoFloat::from(self.q).recip()
    }
}

/// Absolute accuracy of the double-double value of a length.
fn dd_accuracy(len: &Length) -> f64 {
    match len.expr() {
        LengthExpr::Float => f64::EPSILON * len.value(),
        _ => 1e-30 * len.value().max(1.0),
    }
}

fn refuse_rational(len: &Length) -> Result<()> {
    if len.is_rational() {
        return Err(Error::RationalLength);
    }
    if !(len.value() > 0.0) {
        return Err(Error::InvalidArgument(format!("length must be positive, got {len}")));
    }
    Ok(())
}

/// Continued-fraction convergents of `ℓ` satisfying `|qℓ - p| < 1/q`,
/// ascending in `q`, stopping after `count` pairs, past `q_limit`, or at the
/// precision limit of the double-double value.
fn convergent_scan(len: &Length, count: usize, q_limit: u64) -> Result<Vec<ConvergentPair>> {
    refuse_rational(len)?;
    let q_max = (0.01 / dd_accuracy(len)).sqrt().min(2f64.powi(52));
    let l = len.to_dd();
    let mut out: Vec<ConvergentPair> = Vec::new();
    // Partial quotients come from the defects `r_k = |q_k ℓ - p_k|`, which are
    // evaluated directly and do not accumulate error as `x ← 1/frac(x)` does.
    let (mut p1, mut q1, mut r1) = (1u128, 0u128, TwoFloat::from(1.0));
    let (mut p2, mut q2, mut r2) = (0u128, 1u128, l);
    while out.len() < count && out.last().map_or(true, |p| p.q <= q_limit) {
        if r1.hi() <= 0.0 {
            break;
        }
        let a = (r2 / r1).floor().hi();
        if !(a >= 0.0) || a > 2f64.powi(52) {
            break;
        }
        let a = a as u128;
        let (p, q) = (a * p1 + p2, a * q1 + q2);
        if q as f64 > q_max {
            break;
        }
        let r = (l * TwoFloat::from(q as f64) - TwoFloat::from(p as f64)).abs();
        (p2, q2, r2, p1, q1, r1) = (p1, q1, r1, p, q, r);
        if q > 0 {
            let pair = ConvergentPair { p: p as u64, q: q as u64 };
            if pair.satisfies_dirichlet(len) {
                match out.last_mut() {
                    Some(last) if last.q == pair.q => *last = pair,
                    _ => out.push(pair),
                }
            }
        }
    }
    Ok(out)
}

/// The first `count` Dirichlet convergents of an irrational length.
///
/// When two convergents share a denominator the later, better one is kept.
pub fn dirichlet_convergents(len: &Length, count: usize) -> Result<Vec<ConvergentPair>> {
    let out = convergent_scan(len, count, u64::MAX)?;
    if out.len() < count {
        return Err(Error::NoConvergence(format!(
            "only {} convergents of {len} are resolvable at double-double precision",
            out.len()
        )));
    }
    Ok(out)
}

/// Convergents with `q_min ≤ q ≤ q_max`.
pub fn convergents_between(len: &Length, q_min: u64, q_max: u64) -> Result<Vec<ConvergentPair>> {
    let all = convergent_scan(len, usize::MAX, q_max)?;
    if all.last().map_or(true, |p| p.q < q_max.min(q_min.max(1))) {
        return Err(Error::NoConvergence(format!("no convergents of {len} with {q_min} <= q <= {q_max}")));
    }
    Ok(all.into_iter().filter(|p| p.q >= q_min && p.q <= q_max).collect())
}

/// Offset of the probe frequency from `2πq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeShift {
    /// `β = 2πq + 2π q^{-1/4}`.
    #[default]
    Shifted,
    /// `β = 2πq`.
    Unshifted,
}

impl ProbeShift {
    pub fn offset(self, q: u64) -> f64 {
        match self {
            ProbeShift::Shifted => TAU / (q as f64).powf(0.25),
            ProbeShift::Unshifted => 0.0,
        }
    }
}

pub fn beta_n(q: u64, shift: ProbeShift) -> f64 {
    TAU * q as f64 + shift.offset(q)
}

/// `sin`, `cos` of `β` and of `βℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeAngles {
    pub beta: f64,
    pub sin_b: f64,
    pub cos_b: f64,
    pub sin_bl: f64,
    pub cos_bl: f64,
    /// `βℓ` reduced by the multiple of `2π` that was removed.
    pub reduced_bl: f64,
}

impl ProbeAngles {
    pub fn direct(beta: f64, len: f64) -> Self {
        let bl = beta * len;
        ProbeAngles { beta, sin_b: beta.sin(), cos_b: beta.cos(), sin_bl: bl.sin(), cos_bl: bl.cos(), reduced_bl: bl }
    }

    /// Angles at `β = 2πq + δ`: `β ≡ δ` and `βℓ ≡ 2π(qℓ - p) + δℓ` mod `2π`.
    pub fn for_pair(pair: ConvergentPair, len: &Length, shift: ProbeShift) -> Self {
        let delta = shift.offset(pair.q);
        let reduced = TwoFloat::from(TAU) * pair.defect(len) + TwoFloat::from(delta) * len.to_dd();
        let r = reduced.hi() + reduced.lo();
        ProbeAngles {
            beta: beta_n(pair.q, shift),
            sin_b: delta.sin(),
            cos_b: delta.cos(),
            sin_bl: r.sin(),
            cos_bl: r.cos(),
            reduced_bl: r,
        }
    }
}

/// Bracketing `0 < λ_n < βℓ - 2πp < μ_n < π/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketCheck {
    pub lambda: f64,
    pub angle: f64,
    pub mu: f64,
    pub holds: bool,
}

pub fn bracketing(pair: ConvergentPair, len: &Length) -> BracketCheck {
    let qq = (pair.q as f64).powf(0.25);
    let l = len.value();
    let lambda = -TAU / pair.q as f64 + TAU * l / qq;
    let mu = TAU / pair.q as f64 + TAU * l / qq;
    let angle = ProbeAngles::for_pair(pair, len, ProbeShift::Shifted).reduced_bl;
    let holds = 0.0 < lambda && lambda < angle && angle < mu && mu < PI / 2.0;
    BracketCheck { lambda, angle, mu, holds }
}

/// Coefficients of the scalar reduction `(FB + AG) β b₁ = AH - FβC`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitCoefficients {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub f: C64,
    pub g: C64,
    pub h: C64,
}

impl CircuitCoefficients {
    pub fn at(t: &ProbeAngles) -> Self {
        let (s, c, ss, cc, beta) = (t.sin_b, t.cos_b, t.sin_bl, t.cos_bl, t.beta);
        let e = C64::new(c, -s);
        let half_m1i = C64::new(-0.5, 0.5);
        CircuitCoefficients {
            a: (1.0 + cc) * s + e * ss,
            b: (2.0 - cc * c) + I * (e * ss - s),
            c: s / (2.0 * beta * beta) - (0.5 * s + half_m1i * c) * ss + c * cc / (2.0 * beta),
            f: e * (c - 1.0) - s * ss,
            g: e * (c / s - 2.0 * I) - c * ss - I * e * cc,
            h: -e / (2.0 * beta) - c * ss / (2.0 * beta) - 0.5 * s * cc - half_m1i * c * cc,
        }
    }

    /// `b₁ = (AH - FβC) / ((FB + AG)β)`.
    pub fn b1(&self, beta: f64) -> C64 {
        (self.a * self.h - self.f * beta * self.c) / ((self.f * self.b + self.a * self.g) * beta)
    }
}

/// The eight boundary and transmission rows in `(a_1..a_4, b_1..b_4)`.
pub fn circuit_system(t: &ProbeAngles) -> (DMatrix<C64>, DVector<C64>) {
    let (s, c, ss, cc, b) = (t.sin_b, t.cos_b, t.sin_bl, t.cos_bl, t.beta);
    let r = |x: f64| C64::new(x, 0.0);
    let mut m = DMatrix::<C64>::zeros(8, 8);
    let mut rhs = DVector::<C64>::zeros(8);
    // y¹(1) = 0 at the root.
    m[(0, 0)] = r(s);
    m[(0, 4)] = r(c);
    // b₁ = b₂ = b₃.
    m[(1, 4)] = r(1.0);
    m[(1, 5)] = r(-1.0);
    m[(2, 5)] = r(1.0);
    m[(2, 6)] = r(-1.0);
    // Flux balance at the common node of edges 1, 2, 3.
    m[(3, 0)] = r(b);
    m[(3, 1)] = r(b);
    m[(3, 2)] = r(b);
    m[(3, 4)] = I * b;
    rhs[3] = r(1.0 / (2.0 * b));
    // Continuity between edge 2 and edge 4.
    m[(4, 1)] = r(s);
    m[(4, 5)] = r(c);
    m[(4, 7)] = r(-1.0);
    rhs[4] = r(c / (2.0 * b));
    // Flux balance at the node joining edges 2 and 4.
    m[(5, 3)] = r(b);
    m[(5, 5)] = r(b * s);
    m[(5, 1)] = r(-b * c);
    m[(5, 7)] = I * b;
    rhs[5] = r(0.5 * s - c / (2.0 * b));
    // Continuity between edge 3 and edge 4.
    m[(6, 2)] = r(s);
    m[(6, 4)] = r(c);
    m[(6, 3)] = r(-ss);
    m[(6, 7)] = r(-cc);
    // Flux balance at the node joining edges 3 and 4.
    m[(7, 6)] = r(-b * s);
    m[(7, 2)] = C64::new(b * c, -b * s);
    m[(7, 7)] = r(-b * ss);
    m[(7, 3)] = r(b * cc);
    m[(7, 4)] = -I * b * c;
    (m, rhs)
}

/// `b₁` from the two-unknown elimination of the six reduced rows.
pub fn reduced_b1(t: &ProbeAngles) -> C64 {
    let (s, c, ss, cc, b) = (t.sin_b, t.cos_b, t.sin_bl, t.cos_bl, t.beta);
    let p1 = cc * s + ss * c - I * ss * s + s;
    let q1 = -2.0 * cc * c + I * cc * s - ss * c * c / s + 3.0 * I * ss * c + 2.0 * ss * s + c;
    let r1 = (b * (cc * c - I * ss * c - ss * s) + s * (-cc + I * ss)) / (2.0 * b * b);
    let p2 = -cc * c + I * cc * s + ss * s + c - I * s;
    let q2 = cc * c * c / s - 3.0 * I * cc * c - 2.0 * cc * s - 2.0 * ss * c + I * ss * s - I * c - s;
    let r2 = (b * (I * cc * c + cc * s + ss * c) - s * (I * cc + ss)) / (2.0 * b * b);
    (p2 * r1 - p1 * r2) / (p1 * q2 - p2 * q1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitProbe {
    pub pair: Option<ConvergentPair>,
    pub angles: ProbeAngles,
    pub coefficients: CircuitCoefficients,
    pub a: [C64; 4],
    pub b: [C64; 4],
    pub b1_eqcir: C64,
    pub b1_reduced: C64,
    /// `|b₁(full) - b₁(eqcir)| / |b₁(full)|`.
    pub eqcir_rel_diff: f64,
    /// `|b₁(full) - b₁(reduced)| / |b₁(full)|`.
    pub reduced_rel_diff: f64,
    /// `β b₁ / ((-1+i) π³ q^{1/4})`, present for convergent-driven probes.
    pub ratio: Option<C64>,
    pub ratio_eqcir: Option<C64>,
    /// `‖(y, v)‖_H / ‖f‖` of the solved state.
    pub state_norm_ratio: f64,
}

impl CircuitProbe {
    pub fn beta(&self) -> f64 {
        self.angles.beta
    }

    pub fn b1(&self) -> C64 {
        self.b[0]
    }
}

fn solve_circuit(angles: ProbeAngles, l4: f64, pair: Option<ConvergentPair>) -> Result<CircuitProbe> {
    let (m, rhs) = circuit_system(&angles);
    let x = m
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular(format!("circuit system at β = {}", angles.beta)))?;
    let a = [x[0], x[1], x[2], x[3]];
    let b = [x[4], x[5], x[6], x[7]];
    let coefficients = CircuitCoefficients::at(&angles);
    let beta = angles.beta;
    let b1_eqcir = coefficients.b1(beta);
    let b1_reduced = reduced_b1(&angles);
    let rel = |z: C64| (z - b[0]).norm() / b[0].norm();
    let scale = pair.map(|p| C64::new(-1.0, 1.0) * PI.powi(3) * (p.q as f64).powf(0.25));
    let energy = homogeneous_energy(a[0], b[0], beta, 1.0)
        + forced_energy(a[1], b[1], &angles)
        + homogeneous_energy(a[2], b[2], beta, 1.0)
        + homogeneous_energy(a[3], b[3], beta, l4);
    Ok(CircuitProbe {
        pair,
        angles,
        coefficients,
        a,
        b,
        b1_eqcir,
        b1_reduced,
        eqcir_rel_diff: rel(b1_eqcir),
        reduced_rel_diff: rel(b1_reduced),
        ratio: scale.map(|s| beta * b[0] / s),
        ratio_eqcir: scale.map(|s| beta * b1_eqcir / s),
        state_norm_ratio: energy.sqrt() / forcing_norm(&angles),
    })
}

/// Solves the circuit boundary system at an arbitrary `β`.
pub fn circuit_solve(beta: f64, l4: f64) -> Result<CircuitProbe> {
    if !(beta > 0.0) || !(l4 > 0.0) {
        return Err(Error::InvalidArgument("β and ℓ₄ must be positive".into()));
    }
    solve_circuit(ProbeAngles::direct(beta, l4), l4, None)
}

/// Solves at the probe frequency of a convergent of `ℓ₄`.
pub fn circuit_probe(pair: ConvergentPair, l4: &Length, shift: ProbeShift) -> Result<CircuitProbe> {
    refuse_rational(l4)?;
    solve_circuit(ProbeAngles::for_pair(pair, l4, shift), l4.value(), Some(pair))
}

/// Probes at the first `count` convergents of `ℓ₄` with `q ≥ q_min`.
pub fn circuit_probes(l4: &Length, q_min: u64, q_max: u64, shift: ProbeShift) -> Result<Vec<CircuitProbe>> {
    let pairs = convergents_between(l4, q_min, q_max)?;
    pairs.into_iter().map(|p| circuit_probe(p, l4, shift)).collect()
}

/// `∫₀^L |y'|² + β²|y|²` for `y = a sin βx + b cos βx`.
fn homogeneous_energy(a: C64, b: C64, beta: f64, len: f64) -> f64 {
    beta * beta * (a.norm_sqr() + b.norm_sqr()) * len
}

/// Same on `[0, 1]` for `y = a sin βx + (b - x/(2β)) cos βx`.
fn forced_energy(a: C64, b: C64, t: &ProbeAngles) -> f64 {
    let beta = t.beta;
    let s2 = 2.0 * t.sin_b * t.cos_b;
    let c2 = t.cos_b * t.cos_b - t.sin_b * t.sin_b;
    let int_cos2 = 0.5 + s2 / (4.0 * beta);
    let int_b2 = b.norm_sqr() - b.re / (2.0 * beta) + 1.0 / (12.0 * beta * beta);
    let int_x_sin2 = -c2 / (2.0 * beta) + s2 / (4.0 * beta * beta);
    let int_sin2 = (1.0 - c2) / (2.0 * beta);
    let int_bsc = 0.5 * (b.re * int_sin2 - int_x_sin2 / (2.0 * beta));
    beta * beta * (a.norm_sqr() + int_b2) - a.re * int_cos2 + int_bsc + int_cos2 / (4.0 * beta * beta)
}

/// `‖f‖ = (∫₀¹ sin² βx)^{1/2}`.
fn forcing_norm(t: &ProbeAngles) -> f64 {
    let s2 = 2.0 * t.sin_b * t.cos_b;
    (0.5 - s2 / (4.0 * t.beta)).sqrt()
}

/// Relative error of one reference leading-order form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCheck {
    pub name: String,
    pub value: C64,
    pub predicted: C64,
    pub rel_error: f64,
}

/// Leading-order forms of `A, B, C, F, G, H` at the probe's `q`.
pub fn asymptotic_checks(probe: &CircuitProbe, l4: f64) -> Result<Vec<AsymptoticCheck>> {
    let q =
        probe.pair.ok_or_else(|| Error::InvalidArgument("asymptotics need a convergent-driven probe".into()))?.q as f64;
    let q4 = q.powf(0.25);
    let m1i = C64::new(-1.0, 1.0);
    let k = probe.coefficients;
    let rows = [
        ("A", k.a, C64::new(TAU * (2.0 + l4) / q4, 0.0)),
        ("B", k.b, C64::new(1.0, 0.0)),
        ("C", k.c, m1i * PI * l4 / q4),
        ("F", k.f, C64::new(-2.0 * PI * PI * (2.0 * l4 + 1.0) / q.sqrt(), 0.0)),
        ("G", k.g, C64::new(q4 / TAU, -4.0)),
        ("H", k.h, -0.5 * m1i),
    ];
    Ok(rows
        .into_iter()
        .map(|(name, value, predicted)| AsymptoticCheck {
            name: name.into(),
            value,
            predicted,
            rel_error: (value - predicted).norm() / predicted.norm(),
        })
        .collect())
}

/// Predicted limit `2ℓ(2ℓ+1)/(ℓ+2)` of `β b₁ / ((-1+i)π³ q^{1/4})`.
pub fn predicted_limit(l4: f64) -> f64 {
    2.0 * l4 * (2.0 * l4 + 1.0) / (l4 + 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthVerdict {
    NonExponential,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub q: Vec<u64>,
    pub ratios: Vec<C64>,
    pub predicted: f64,
    /// Richardson extrapolation of the last two ratios in `q^{-1/4}`.
    pub limit: C64,
    pub rel_error: f64,
    pub monotone: bool,
    pub verdict: GrowthVerdict,
}

/// Limit of the growth ratios against the predicted constant.
pub fn growth_law(probes: &[CircuitProbe], l4: f64) -> Result<GrowthReport> {
    let mut rows: Vec<(u64, C64)> = Vec::new();
    for p in probes {
        match (p.pair, p.ratio) {
            (Some(pair), Some(r)) => rows.push((pair.q, r)),
            _ => return Err(Error::InvalidArgument("growth law needs convergent-driven probes".into())),
        }
    }
    if rows.len() < 3 {
        return Err(Error::InvalidArgument(format!("growth law needs at least 3 probes, got {}", rows.len())));
    }
    rows.sort_by_key(|r| r.0);
    let predicted = predicted_limit(l4);
    let n = rows.len();
    let (q1, r1) = rows[n - 2];
    let (q2, r2) = rows[n - 1];
    let (h1, h2) = ((q1 as f64).powf(-0.25), (q2 as f64).powf(-0.25));
    let limit = (r2 * h1 - r1 * h2) / (h1 - h2);
    let rel_error = (limit - predicted).norm() / predicted;
    let dists: Vec<f64> = rows[n - 3..].iter().map(|r| (r.1 - limit).norm()).collect();
    let monotone = dists.windows(2).all(|w| w[1] <= w[0]);
    let verdict =
        if rel_error <= 0.1 && monotone { GrowthVerdict::NonExponential } else { GrowthVerdict::Inconclusive };
    Ok(GrowthReport {
        q: rows.iter().map(|r| r.0).collect(),
        ratios: rows.iter().map(|r| r.1).collect(),
        predicted,
        limit,
        rel_error,
        monotone,
        verdict,
    })
}

/// Exact solve of `(iβ - A) z = (0, g, 0, 0)` on the star with a unit mass
/// at the centre, `g = -sin βx` on the root edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarProbe {
    pub pair: Option<ConvergentPair>,
    pub beta: f64,
    /// Sine coefficients on the leaf, root and fixed edges.
    pub a: [C64; 3],
    /// Common value at the centre.
    pub b: C64,
    pub p: C64,
    pub q: C64,
    /// `‖z‖_H / ‖f‖`, a lower bound for the resolvent norm at `β`.
    pub norm_ratio: f64,
}

fn check_star_length(l3: &Length) -> Result<()> {
    refuse_rational(l3)?;
    if l3.exact_pi_multiple().is_some() || crate::network::distance_to_pi_multiple(l3.value()) < 1e-12 * l3.value() {
        return Err(Error::AxisEigenvalue { beta: 1.0 });
    }
    Ok(())
}

fn solve_star(t: &ProbeAngles, l3: f64, pair: Option<ConvergentPair>) -> Result<StarProbe> {
    let (s, c, s3, c3, b) = (t.sin_b, t.cos_b, t.sin_bl, t.cos_bl, t.beta);
    if (b * b - 1.0).abs() < 1e-12 {
        return Err(Error::Singular("β at the oscillator resonance".into()));
    }
    let r = |x: f64| C64::new(x, 0.0);
    let mut m = DMatrix::<C64>::zeros(4, 4);
    let mut rhs = DVector::<C64>::zeros(4);
    m[(0, 1)] = r(s);
    m[(0, 3)] = r(c);
    rhs[0] = r(c / (2.0 * b));
    m[(1, 2)] = r(s3);
    m[(1, 3)] = r(c3);
    m[(2, 0)] = C64::new(b * c, b * s);
    m[(2, 3)] = C64::new(-b * s, b * c);
    m[(3, 0)] = r(b);
    m[(3, 1)] = r(b);
    m[(3, 2)] = r(b);
    m[(3, 3)] = r(b * b / (1.0 - b * b));
    rhs[3] = r(1.0 / (2.0 * b));
    let x = m
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular(format!("star system at β = {b}")))?;
    let p = -I * b * x[3] / (1.0 - b * b);
    let q = I * b * p;
    let energy = homogeneous_energy(x[0], x[3], b, 1.0)
        + forced_energy(x[1], x[3], t)
        + homogeneous_energy(x[2], x[3], b, l3)
        + p.norm_sqr()
        + q.norm_sqr();
    Ok(StarProbe { pair, beta: b, a: [x[0], x[1], x[2]], b: x[3], p, q, norm_ratio: energy.sqrt() / forcing_norm(t) })
}

/// Star probe at an arbitrary `β`.
pub fn star_probe(beta: f64, l3: &Length) -> Result<StarProbe> {
    check_star_length(l3)?;
    solve_star(&ProbeAngles::direct(beta, l3.value()), l3.value(), None)
}

/// Star probe at the frequency of a convergent of `ℓ₃`.
pub fn star_probe_at(pair: ConvergentPair, l3: &Length, shift: ProbeShift) -> Result<StarProbe> {
    check_star_length(l3)?;
    solve_star(&ProbeAngles::for_pair(pair, l3, shift), l3.value(), Some(pair))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt2_convergents() {
        let l = Length::sqrt_of(2, 1);
        let pairs = dirichlet_convergents(&l, 5).unwrap();
        let expected = [(1, 1), (3, 2), (7, 5), (17, 12), (41, 29)];
        for (pair, (p, q)) in pairs.iter().zip(expected) {
            assert_eq!((pair.p, pair.q), (p, q));
        }
    }

    #[test]
    fn sqrt2_recurrence_holds_to_high_order() {
        let pairs = convergents_between(&Length::sqrt_of(2, 1), 1, 10u64.pow(13)).unwrap();
        assert!(pairs.last().unwrap().q > 10u64.pow(12));
        for w in pairs.windows(3) {
            assert_eq!(w[2].q, 2 * w[1].q + w[0].q);
            assert_eq!(w[2].p, 2 * w[1].p + w[0].p);
        }
    }

    #[test]
    fn rational_refused() {
        assert_eq!(dirichlet_convergents(&Length::rational(1, 2), 3), Err(Error::RationalLength));
        assert!(matches!(star_probe(10.0, &Length::pi_times(1, 1)), Err(Error::AxisEigenvalue { .. })));
    }

    #[test]
    fn beta_for_sixteen() {
        assert!((beta_n(16, ProbeShift::Shifted) - 33.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn reduced_angles_match_direct() {
        let l = Length::sqrt_of(2, 1);
        let pair = ConvergentPair { p: 17, q: 12 };
        let t = ProbeAngles::for_pair(pair, &l, ProbeShift::Shifted);
        let d = ProbeAngles::direct(t.beta, l.value());
        assert!((t.sin_b - d.sin_b).abs() < 1e-12 && (t.cos_bl - d.cos_bl).abs() < 1e-12);
        assert!((t.sin_bl - d.sin_bl).abs() < 1e-12);
    }

    #[test]
    fn reduction_matches_full_system() {
        for beta in [3.3, 7.1, 12.9, 41.0] {
            let p = circuit_solve(beta, 2f64.sqrt()).unwrap();
            assert!(p.reduced_rel_diff < 1e-10, "β = {beta}: {}", p.reduced_rel_diff);
        }
    }

    fn brute_force(l: f64, q_max: u64) -> Vec<(u64, u64)> {
        let mut best = f64::INFINITY;
        let mut out = Vec::new();
        for q in 1..=q_max {
            let p = (q as f64 * l).round() as u64;
            let d = (q as f64 * l - p as f64).abs();
            if d < best {
                best = d;
                if d < 1.0 / q as f64 {
                    out.push((p, q));
                }
            }
        }
        out
    }

    #[test]
    fn golden_ratio_gives_fibonacci() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let got: Vec<(u64, u64)> =
            convergents_between(&Length::from_f64(phi), 1, 100).unwrap().iter().map(|c| (c.p, c.q)).collect();
        assert_eq!(got, brute_force(phi, 100));
        for w in got.windows(2) {
            assert_eq!(w[1].1, w[0].0);
        }
    }

    #[test]
    fn sqrt2_matches_brute_force() {
        let got: Vec<(u64, u64)> =
            convergents_between(&Length::sqrt_of(2, 1), 1, 50).unwrap().iter().map(|c| (c.p, c.q)).collect();
        assert_eq!(got, brute_force(2f64.sqrt(), 50));
    }

    #[test]
    fn closed_form_energy_matches_quadrature() {
        use crate::quadrature::Composite;
        let beta = 7.3;
        let (a, b) = (C64::new(0.3, -1.1), C64::new(-0.7, 0.4));
        let t = ProbeAngles::direct(beta, 1.0);
        let rule = Composite::for_frequency(0.0, 1.0, beta);
        let density = |x: f64| {
            let (s, c) = (beta * x).sin_cos();
            let bx = b - x / (2.0 * beta);
            let y = a * s + bx * c;
            let dy = beta * (a * c - bx * s) - c / (2.0 * beta);
            dy.norm_sqr() + beta * beta * y.norm_sqr()
        };
        let exact = rule.integrate(density);
        assert!((forced_energy(a, b, &t) - exact).abs() < 1e-10 * exact);
        let f2 = rule.integrate(|x| (beta * x).sin().powi(2));
        assert!((forcing_norm(&t).powi(2) - f2).abs() < 1e-12);
    }

    #[test]
    fn star_solution_satisfies_vertex_conditions() {
        let l3 = Length::sqrt_of(2, 1);
        let beta = 5.7;
        let z = star_probe(beta, &l3).unwrap();
        let (s, c) = beta.sin_cos();
        // Fixed far ends of the root and fixed edges.
        assert!((z.a[1] * s + (z.b - 1.0 / (2.0 * beta)) * c).norm() < 1e-12);
        let bl = beta * l3.value();
        assert!((z.a[2] * bl.sin() + z.b * bl.cos()).norm() < 1e-12);
        // Oscillator: iβ p = q and iβ q = -p - iβ y(0).
        assert!((I * beta * z.p - z.q).norm() < 1e-12);
        assert!((I * beta * z.q + z.p + I * beta * z.b).norm() < 1e-12);
    }
}
