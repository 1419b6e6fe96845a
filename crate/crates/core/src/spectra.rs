//! Characteristic system of the generator and eigenvalue location.
//!
//! On edge `j` an eigenfunction satisfies `y'' = λ² y`. Two bases are used:
//! `cosh(λx)`, `sinh(λx)/λ` (entire, nonsingular at `λ = 0`) when
//! `|λ|ℓ_j ≤ 1`, and `e^{λx}`, `e^{λ(ℓ_j - x)}` otherwise. The function
//! whose zeros are tracked is the determinant in the first basis; the second
//! basis is related to it by an explicit analytic factor.
//!
//! Vertex rows, with oscillator unknowns eliminated through
//! `(mλ² + 1) p = -λ y` and denominators cleared:
//! - root / fixed leaf: `y = 0`;
//! - controlled leaf: `d·y' + λ y = 0`;
//! - mass vertex: continuity, then `(mλ² + 1) Σ d·y' + λ² y = 0`, plus
//!   `λ(mλ² + 1) y` for the damped circuit nodes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_det_and_trace, Dual, C64};
use crate::network::{CircuitCoupling, EdgeEnd, MetricGraph, VertexKind};
use crate::quadrature::Composite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `cosh(λx)`, `sinh(λx)/λ`.
    CoshSinh,
    /// `e^{λx}`, `e^{λ(ℓ - x)}`.
    Exponential,
}

impl Basis {
    fn choose(lambda: C64, len: f64) -> Basis {
        if lambda.norm() * len <= 1.0 {
            Basis::CoshSinh
        } else {
            Basis::Exponential
        }
    }
}

/// `sinh(z)/z` and its derivative.
fn shc(z: C64) -> (C64, C64) {
    if z.norm() < 0.1 {
        let z2 = z * z;
        let v = 1.0 + z2 * (1.0 / 6.0 + z2 * (1.0 / 120.0 + z2 * (1.0 / 5040.0 + z2 / 362880.0)));
        let d = z * (1.0 / 3.0 + z2 * (1.0 / 30.0 + z2 * (1.0 / 840.0 + z2 / 45360.0)));
        (v, d)
    } else {
        let (s, c) = (z.sinh(), z.cosh());
        (s / z, (z * c - s) / (z * z))
    }
}

/// Values `[u1, u2]` and derivatives `[u1', u2']` of the basis at one end.
fn end_values(basis: Basis, lambda: C64, len: f64, at_head: bool) -> ([Dual; 2], [Dual; 2]) {
    let one = Dual::constant(1.0);
    let zero = Dual::ZERO;
    let lam = Dual::var(lambda);
    match (basis, at_head) {
        (Basis::CoshSinh, false) => ([one, zero], [zero, one]),
        (Basis::CoshSinh, true) => {
            let z = lambda * len;
            let (s, c) = (z.sinh(), z.cosh());
            let (h, hd) = shc(z);
            let u1 = Dual::new(c, s * len);
            let u2 = Dual::new(h * len, hd * len * len);
            let du1 = Dual::new(lambda * s, s + z * c);
            let du2 = Dual::new(c, s * len);
            ([u1, u2], [du1, du2])
        }
        (Basis::Exponential, false) => {
            let e = (lam.scale(len)).exp();
            ([one, e], [lam, -(lam * e)])
        }
        (Basis::Exponential, true) => {
            let e = (lam.scale(len)).exp();
            ([e, one], [lam * e, -lam])
        }
    }
}

/// One row entry pair for edge-end `end`: coefficient `a` on `y` and `b` on `y'`.
fn push_end(row: &mut [Dual], end: EdgeEnd, a: Dual, b: Dual, bases: &[Basis], lambda: C64, graph: &MetricGraph) {
    let j = end.edge;
    let (val, der) = end_values(bases[j], lambda, graph.edges()[j].len(), end.at_head);
    for k in 0..2 {
        row[2 * j + k] = row[2 * j + k] + a * val[k] + b * der[k];
    }
}

/// Rows with their positive normalization scale.
fn assemble(graph: &MetricGraph, lambda: C64, bases: &[Basis]) -> (Vec<Vec<Dual>>, Vec<f64>) {
    let n = 2 * graph.edges().len();
    let lam = Dual::var(lambda);
    let r = lambda.norm();
    let mut rows = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    let one = Dual::constant(1.0);
    let zero = Dual::ZERO;
    let first_mass = graph.interior_vertices().first().copied();
    for (k, v) in graph.vertices().iter().enumerate() {
        let ends = graph.incident(k);
        match v.kind {
            VertexKind::Root | VertexKind::FixedLeaf => {
                for &e in ends {
                    let mut row = vec![zero; n];
                    push_end(&mut row, e, one, zero, bases, lambda, graph);
                    rows.push(row);
                    scales.push(1.0);
                }
            }
            VertexKind::ControlledLeaf => {
                for &e in ends {
                    let mut row = vec![zero; n];
                    push_end(&mut row, e, lam, Dual::constant(e.sign()), bases, lambda, graph);
                    rows.push(row);
                    scales.push(1.0 + r);
                }
            }
            VertexKind::InteriorMass { mass } => {
                for &e in &ends[1..] {
                    let mut row = vec![zero; n];
                    push_end(&mut row, ends[0], one, zero, bases, lambda, graph);
                    push_end(&mut row, e, -one, zero, bases, lambda, graph);
                    rows.push(row);
                    scales.push(1.0);
                }
                let circuit = graph.damped_interior();
                let shared = circuit && graph.circuit_coupling() == CircuitCoupling::SharedFirst;
                let (m_ref, ref_end) = if shared {
                    let f = first_mass.expect("mass vertex exists");
                    (graph.mass(f).unwrap(), graph.incident(f)[0])
                } else {
                    (mass, ends[0])
                };
                let poly = (lam * lam).scale(m_ref) + one;
                let mut row = vec![zero; n];
                for &e in ends {
                    push_end(&mut row, e, zero, poly * Dual::constant(e.sign()), bases, lambda, graph);
                }
                push_end(&mut row, ref_end, lam * lam, zero, bases, lambda, graph);
                if circuit {
                    push_end(&mut row, ends[0], lam * poly, zero, bases, lambda, graph);
                }
                rows.push(row);
                scales.push((1.0 + m_ref * r * r) * (1.0 + r));
            }
        }
    }
    (rows, scales)
}

fn to_matrices(rows: &[Vec<Dual>], scales: Option<&[f64]>) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = rows.len();
    let mut m = DMatrix::zeros(n, n);
    let mut d = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let s = scales.map_or(1.0, |s| 1.0 / s[i]);
        for (j, e) in row.iter().enumerate() {
            m[(i, j)] = e.v * s;
            d[(i, j)] = e.d * s;
        }
    }
    (m, d)
}

/// Characteristic matrix in the entire `cosh`/`sinh(λx)/λ` basis.
#[derive(Debug, Clone)]
pub struct CharacteristicSystem {
    pub lambda: C64,
    /// Coefficient pairs `(α_j, γ_j)` of `y = α cosh(λx) + γ sinh(λx)/λ`.
    pub matrix: DMatrix<C64>,
    /// Entrywise `d/dλ` of `matrix`.
    pub derivative: DMatrix<C64>,
}

impl CharacteristicSystem {
    /// Plain determinant; loses accuracy once `|Re λ|ℓ` is large.
    pub fn det(&self) -> C64 {
        self.matrix.clone().determinant()
    }
}

pub fn char_matrix(graph: &MetricGraph, lambda: C64) -> CharacteristicSystem {
    let bases = vec![Basis::CoshSinh; graph.edges().len()];
    let (rows, _) = assemble(graph, lambda, &bases);
    let (matrix, derivative) = to_matrices(&rows, None);
    CharacteristicSystem { lambda, matrix, derivative }
}

/// Evaluation of `f(λ) = det M(λ)` in log form.
#[derive(Debug, Clone, Copy)]
pub struct CharValue {
    pub lambda: C64,
    /// `ln f` up to a real, positive, λ-continuous normalization.
    pub log_f: C64,
    /// `f'/f`.
    pub log_deriv: C64,
    /// Natural log of the normalized modulus `|χ(λ)|`.
    pub ln_abs_chi: f64,
}

impl CharValue {
    /// Normalized characteristic value `|χ(λ)|`.
    pub fn abs_chi(&self) -> f64 {
        self.ln_abs_chi.exp()
    }
}

/// Robust evaluation in the mixed basis.
///
/// `χ(λ) = det M(λ) · Π_j e^{-|Re λ|ℓ_j} / Π_rows s_r(|λ|)` with positive row
/// scales `s_r`; its zeros and argument are those of `det M`.
pub fn char_value(graph: &MetricGraph, lambda: C64) -> Option<CharValue> {
    let bases: Vec<Basis> = graph.edges().iter().map(|e| Basis::choose(lambda, e.len())).collect();
    let (rows, scales) = assemble(graph, lambda, &bases);
    let (m, d) = to_matrices(&rows, Some(&scales));
    let (mut log_f, mut log_deriv) = log_det_and_trace(&m, &d)?;
    let mut ln_abs = log_f.re;
    log_f += scales.iter().map(|s| s.ln()).sum::<f64>();
    for (e, b) in graph.edges().iter().zip(&bases) {
        let l = e.len();
        if *b == Basis::Exponential {
            log_f -= lambda * l + (-2.0 * lambda).ln();
            log_deriv -= C64::new(l, 0.0) + 1.0 / lambda;
            ln_abs -= lambda.re * l + (2.0 * lambda.norm()).ln();
        }
        ln_abs -= lambda.re.abs() * l;
    }
    Some(CharValue { lambda, log_f, log_deriv, ln_abs_chi: ln_abs })
}

/// Normalized characteristic value `χ(λ)`.
pub fn char_det(graph: &MetricGraph, lambda: C64) -> C64 {
    match char_value(graph, lambda) {
        Some(v) => C64::from_polar(v.abs_chi(), v.log_f.im),
        None => C64::new(0.0, 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl SearchBox {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        SearchBox { re_min, re_max, im_min, im_max }
    }

    /// `[-20, 0.5] × [-b, b]`.
    pub fn default_for(b: f64) -> Self {
        SearchBox::new(-20.0, 0.5, -b, b)
    }

    fn contains(&self, z: C64, slack: f64) -> bool {
        z.re >= self.re_min - slack
            && z.re <= self.re_max + slack
            && z.im >= self.im_min - slack
            && z.im <= self.im_max + slack
    }

    fn center(&self) -> C64 {
        C64::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }

    fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    fn height(&self) -> f64 {
        self.im_max - self.im_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Required `|χ|` at accepted roots.
    pub tol: f64,
    /// Target argument increment per contour step (radians).
    pub arg_step: f64,
    pub max_depth: usize,
    /// Boxes smaller than this with count ≥ 2 are reported as clusters.
    pub cluster_size: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { tol: 1e-10, arg_step: 0.25, max_depth: 60, cluster_size: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenRoot {
    pub re: f64,
    pub im: f64,
    /// `|χ(λ)|` at the refined root.
    pub residual: f64,
    /// Argument-principle count of the isolating box (the multiplicity).
    pub box_count: usize,
}

impl EigenRoot {
    pub fn lambda(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub search_box: SearchBox,
    /// Argument-principle count on the full box.
    pub total_count: usize,
    pub roots: Vec<EigenRoot>,
}

impl EigenReport {
    /// Roots counted with multiplicity.
    pub fn counted(&self) -> usize {
        self.roots.iter().map(|r| r.box_count).sum()
    }
}

fn wrap(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut x = a % tau;
    if x > std::f64::consts::PI {
        x -= tau;
    } else if x < -std::f64::consts::PI {
        x += tau;
    }
    x
}

/// Argument increment of `f` along a straight segment.
fn arg_segment(graph: &MetricGraph, a: C64, b: C64, opts: &SearchOptions) -> Result<f64> {
    let span = b - a;
    let len = span.norm();
    let on_contour = || Error::RootOnContour(0);
    let mut t = 0.0;
    let mut cur = char_value(graph, a).ok_or_else(on_contour)?;
    let mut total = 0.0;
    let min_dt = 1e-13;
    while 1.0 - t > 1e-15 {
        let g = cur.log_deriv.norm().max(1e-3);
        let mut dt = (opts.arg_step / (g * len)).min(1.0 - t);
        loop {
            if dt < min_dt && dt < 1.0 - t {
                return Err(on_contour());
            }
            let z = a + span * (t + dt);
            match char_value(graph, z) {
                Some(next) => {
                    let darg = wrap(next.log_f.im - cur.log_f.im);
                    let predicted = (0.5 * (cur.log_deriv + next.log_deriv) * span * dt).im;
                    let g_next = next.log_deriv.norm() * len * dt;
                    if darg.abs() <= 2.0 * opts.arg_step
                        && (darg - predicted).abs() <= 0.1
                        && g_next <= 4.0 * opts.arg_step
                    {
                        total += darg;
                        t = if dt >= 1.0 - t { 1.0 } else { t + dt };
                        cur = next;
                        break;
                    }
                    dt *= 0.5;
                }
                None => dt *= 0.37,
            }
        }
    }
    Ok(total)
}

fn corners(b: &SearchBox) -> [C64; 4] {
    [
        C64::new(b.re_min, b.im_min),
        C64::new(b.re_max, b.im_min),
        C64::new(b.re_max, b.im_max),
        C64::new(b.re_min, b.im_max),
    ]
}

/// Number of zeros inside `b` by the argument principle, checked at a
/// second, finer step size.
pub fn count_zeros(graph: &MetricGraph, b: &SearchBox, opts: &SearchOptions) -> Result<usize> {
    let c = corners(b);
    let winding = |o: &SearchOptions| -> Result<f64> {
        let mut total = 0.0;
        for k in 0..4 {
            total += arg_segment(graph, c[k], c[(k + 1) % 4], o)?;
        }
        Ok(total / std::f64::consts::TAU)
    };
    let w1 = winding(opts)?;
    let n1 = w1.round();
    if (w1 - n1).abs() > 0.05 || n1 < 0.0 {
        let fine = SearchOptions { arg_step: opts.arg_step * 0.25, ..*opts };
        let w2 = winding(&fine)?;
        let n2 = w2.round();
        if (w2 - n2).abs() > 0.05 || n2 < 0.0 {
            return Err(Error::RootOnContour(0));
        }
        return Ok(n2 as usize);
    }
    Ok(n1 as usize)
}

/// Newton iteration on `f'/f`.
pub fn newton(graph: &MetricGraph, start: C64, max_iter: usize) -> Option<C64> {
    let mut z = start;
    for _ in 0..max_iter {
        let v = match char_value(graph, z) {
            Some(v) => v,
            None => return Some(z),
        };
        if v.log_deriv.norm() == 0.0 || !v.log_deriv.is_finite() {
            return None;
        }
        let step = 1.0 / v.log_deriv;
        z -= step;
        if !z.is_finite() {
            return None;
        }
        if step.norm() <= 1e-14 * z.norm().max(1.0) {
            return Some(z);
        }
    }
    None
}

fn residual(graph: &MetricGraph, z: C64) -> f64 {
    char_value(graph, z).map_or(0.0, |v| v.abs_chi())
}

/// Argument-principle search with bisection and Newton refinement.
pub fn find_eigenvalues(graph: &MetricGraph, search: SearchBox, opts: &SearchOptions) -> Result<EigenReport> {
    if !(search.re_max > search.re_min && search.im_max > search.im_min) {
        return Err(Error::InvalidArgument("empty search box".into()));
    }
    let mut top = search;
    let mut total = None;
    for attempt in 0..6 {
        match count_zeros(graph, &top, opts) {
            Ok(n) => {
                total = Some(n);
                break;
            }
            Err(_) => {
                let d = 1e-6 * (attempt as f64 + 1.0).powi(3) * (search.width() + search.height());
                top = SearchBox::new(
                    search.re_min - d,
                    search.re_max + 0.7 * d,
                    search.im_min - 1.3 * d,
                    search.im_max + d,
                );
            }
        }
    }
    let total = total.ok_or(Error::RootOnContour(6))?;
    let mut roots = Vec::new();
    if total > 0 {
        refine_box(graph, top, total, 0, opts, &mut roots)?;
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(EigenReport { search_box: top, total_count: total, roots })
}

fn refine_box(
    graph: &MetricGraph,
    b: SearchBox,
    count: usize,
    depth: usize,
    opts: &SearchOptions,
    out: &mut Vec<EigenRoot>,
) -> Result<()> {
    if count == 0 {
        return Ok(());
    }
    let size = b.width().max(b.height());
    if count == 1 || size < opts.cluster_size || depth >= opts.max_depth {
        let slack = 1e-9 * size.max(1e-12);
        if let Some(z) = newton(graph, b.center(), 80) {
            if b.contains(z, slack) || count > 1 {
                out.push(EigenRoot { re: z.re, im: z.im, residual: residual(graph, z), box_count: count });
                return Ok(());
            }
        }
        if size < opts.cluster_size || depth >= opts.max_depth {
            return Err(Error::NoConvergence(format!(
                "Newton failed in a box of size {size:.3e} holding {count} root(s)"
            )));
        }
    }
    let fractions = [0.5 - 0.0123, 0.5 + 0.0371, 0.5 - 0.0947, 0.5 + 0.1311];
    let split_re = b.width() >= b.height();
    for f in fractions {
        let (lo, hi) = if split_re {
            let x = b.re_min + f * b.width();
            (SearchBox { re_max: x, ..b }, SearchBox { re_min: x, ..b })
        } else {
            let y = b.im_min + f * b.height();
            (SearchBox { im_max: y, ..b }, SearchBox { im_min: y, ..b })
        };
        let (Ok(n_lo), Ok(n_hi)) = (count_zeros(graph, &lo, opts), count_zeros(graph, &hi, opts)) else {
            continue;
        };
        if n_lo + n_hi != count {
            continue;
        }
        refine_box(graph, lo, n_lo, depth + 1, opts, out)?;
        refine_box(graph, hi, n_hi, depth + 1, opts, out)?;
        return Ok(());
    }
    Err(Error::RootOnContour(fractions.len()))
}

/// Eigenfunction restricted to one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMode {
    pub edge: String,
    pub length: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub basis: Basis,
    pub coeffs: [C64; 2],
}

impl EdgeMode {
    fn lambda(&self) -> C64 {
        C64::new(self.lambda_re, self.lambda_im)
    }

    pub fn value(&self, x: f64) -> C64 {
        let lam = self.lambda();
        let [a, b] = self.coeffs;
        match self.basis {
            Basis::CoshSinh => {
                let z = lam * x;
                a * z.cosh() + b * x * shc(z).0
            }
            Basis::Exponential => a * (lam * x).exp() + b * (lam * (self.length - x)).exp(),
        }
    }

    pub fn derivative(&self, x: f64) -> C64 {
        let lam = self.lambda();
        let [a, b] = self.coeffs;
        match self.basis {
            Basis::CoshSinh => {
                let z = lam * x;
                a * lam * z.sinh() + b * z.cosh()
            }
            Basis::Exponential => lam * (a * (lam * x).exp() - b * (lam * (self.length - x)).exp()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorValue {
    pub vertex: String,
    pub p: C64,
    pub q: C64,
}

/// Unit-norm eigenvector `(y, v = λy, p, q = λp)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenfunction {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub modes: Vec<EdgeMode>,
    pub oscillators: Vec<OscillatorValue>,
    /// `‖M c‖ / ‖c‖` in the row-normalized mixed basis.
    pub residual: f64,
}

impl Eigenfunction {
    pub fn lambda(&self) -> C64 {
        C64::new(self.lambda_re, self.lambda_im)
    }

    pub fn mode(&self, edge: &str) -> Option<&EdgeMode> {
        self.modes.iter().find(|m| m.edge == edge)
    }

    pub fn oscillator(&self, vertex: &str) -> Option<&OscillatorValue> {
        self.oscillators.iter().find(|o| o.vertex == vertex)
    }
}

/// State-space norm² of `(y, λy, p, λp)`.
fn state_norm_sq(graph: &MetricGraph, lambda: C64, modes: &[EdgeMode], osc: &[OscillatorValue]) -> f64 {
    let mut total = 0.0;
    for m in modes {
        let rule = Composite::for_frequency(0.0, m.length, lambda.norm());
        total += rule.integrate(|x| (lambda * m.value(x)).norm_sqr() + m.derivative(x).norm_sqr());
    }
    for o in osc {
        let k = graph.vertex_index(&o.vertex).unwrap();
        let mass = graph.mass(k).unwrap_or(1.0);
        total += mass * o.q.norm_sqr() + o.p.norm_sqr();
    }
    total
}

/// Null vector of the characteristic matrix at `lambda`, lifted to a state.
pub fn eigenfunction(graph: &MetricGraph, lambda: C64, tol: f64) -> Result<Eigenfunction> {
    let bases: Vec<Basis> = graph.edges().iter().map(|e| Basis::choose(lambda, e.len())).collect();
    let (rows, scales) = assemble(graph, lambda, &bases);
    let (m, _) = to_matrices(&rows, Some(&scales));
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let (imin, smin) =
        sv.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let thresh = (1e3 * tol).max(1e-9) * smax.max(1e-300);
    let nullity = sv.iter().filter(|&&s| s <= thresh).count();
    if nullity > 1 {
        return Err(Error::MultipleNullSpace(nullity));
    }
    if smin > thresh {
        return Err(Error::Singular(format!(
            "characteristic matrix is not singular at {lambda}: sigma_min/sigma_max = {:.3e}",
            smin / smax
        )));
    }
    let c: Vec<C64> = v_t.row(imin).iter().map(|z| z.conj()).collect();
    let cv = nalgebra::DVector::from_vec(c.clone());
    let resid = (&m * &cv).norm() / cv.norm();

    let mut modes: Vec<EdgeMode> = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(j, e)| EdgeMode {
            edge: e.id.clone(),
            length: e.len(),
            lambda_re: lambda.re,
            lambda_im: lambda.im,
            basis: bases[j],
            coeffs: [c[2 * j], c[2 * j + 1]],
        })
        .collect();

    let end_vals = |modes: &[EdgeMode], e: EdgeEnd| {
        let md = &modes[e.edge];
        let x = if e.at_head { md.length } else { 0.0 };
        (md.value(x), md.derivative(x))
    };
    let lift = |modes: &[EdgeMode]| -> Vec<OscillatorValue> {
        let shared = graph.damped_interior() && graph.circuit_coupling() == CircuitCoupling::SharedFirst;
        let first = graph.interior_vertices().first().copied();
        graph
            .interior_vertices()
            .into_iter()
            .map(|k| {
                let ends = graph.incident(k);
                let y = end_vals(modes, ends[0]).0;
                let flux: C64 = ends.iter().map(|&e| end_vals(modes, e).1 * e.sign()).sum();
                let mass = graph.mass(k).unwrap();
                let coupled = !shared || Some(k) == first;
                let p = if lambda.norm() < 1e-12 {
                    C64::new(0.0, 0.0)
                } else if coupled {
                    let damp = if graph.damped_interior() { lambda * y } else { C64::new(0.0, 0.0) };
                    (flux + damp) / lambda
                } else {
                    -lambda * y / (mass * lambda * lambda + 1.0)
                };
                OscillatorValue { vertex: graph.vertices()[k].id.clone(), p, q: lambda * p }
            })
            .collect()
    };
    let mut osc = lift(&modes);
    let norm = state_norm_sq(graph, lambda, &modes, &osc).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Singular("null vector lifts to the zero state".into()));
    }
    let big_p = osc.iter().map(|o| o.p).fold(C64::new(0.0, 0.0), |a, p| if p.norm() > a.norm() { p } else { a });
    let anchor = if big_p.norm() > 1e-8 * norm {
        big_p
    } else {
        c.iter().copied().fold(C64::new(0.0, 0.0), |a, z| if z.norm() > a.norm() { z } else { a })
    };
    let phase = anchor.conj() / anchor.norm();
    let factor = phase / norm;
    for md in &mut modes {
        md.coeffs[0] *= factor;
        md.coeffs[1] *= factor;
    }
    osc = lift(&modes);
    Ok(Eigenfunction { lambda_re: lambda.re, lambda_im: lambda.im, modes, oscillators: osc, residual: resid })
}

/// Unit-norm check helper: state norm of an eigenfunction.
pub fn eigenfunction_norm(graph: &MetricGraph, ef: &Eigenfunction) -> f64 {
    state_norm_sq(graph, ef.lambda(), &ef.modes, &ef.oscillators).sqrt()
}
