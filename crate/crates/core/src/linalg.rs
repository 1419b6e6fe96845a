//! Small complex linear-algebra kernels: forward-mode duals, dense
//! log-determinants, and a banded LU with partial pivoting.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

/// Value and first derivative with respect to the spectral parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: C64,
    pub d: C64,
}

impl Dual {
    pub const ZERO: Dual = Dual { v: C64::new(0.0, 0.0), d: C64::new(0.0, 0.0) };

    pub fn new(v: C64, d: C64) -> Self {
        Dual { v, d }
    }

    pub fn constant(v: impl Into<C64>) -> Self {
        Dual { v: v.into(), d: C64::new(0.0, 0.0) }
    }

    /// The independent variable itself.
    pub fn var(v: C64) -> Self {
        Dual { v, d: C64::new(1.0, 0.0) }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Dual { v: e, d: e * self.d }
    }

    pub fn scale(self, s: f64) -> Self {
        Dual { v: self.v * s, d: self.d * s }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Mul<C64> for Dual {
    type Output = Dual;
    fn mul(self, c: C64) -> Dual {
        Dual { v: self.v * c, d: self.d * c }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

/// `ln det M` (principal branch per pivot) and `tr(M⁻¹ M')`.
///
/// Returns `None` when a pivot vanishes exactly.
pub fn log_det_and_trace(m: &DMatrix<C64>, dm: &DMatrix<C64>) -> Option<(C64, C64)> {
    let n = m.nrows();
    let lu = m.clone().lu();
    let u = lu.u();
    let mut log_det = C64::new(0.0, 0.0);
    for i in 0..n {
        let p = u[(i, i)];
        if p == C64::new(0.0, 0.0) || !p.is_finite() {
            return None;
        }
        log_det += p.ln();
    }
    if lu.p().determinant::<f64>() < 0.0 {
        log_det += C64::new(0.0, std::f64::consts::PI);
    }
    let x = lu.solve(dm)?;
    let trace = (0..n).map(|i| x[(i, i)]).sum();
    Some((log_det, trace))
}

/// Complex banded LU factorization with partial pivoting.
///
/// Row `i` keeps columns `i - kl ..= i + kl + ku`; the extra `kl`
/// superdiagonals absorb pivoting fill.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<C64>,
    l: Vec<C64>,
    piv: Vec<usize>,
    singular: bool,
}

/// Banded matrix under assembly.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, a: vec![C64::new(0.0, 0.0); n * width] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize + self.kl as isize - i as isize;
        if off < 0 || off as usize > self.kl + self.ku {
            None
        } else {
            Some(i * self.width + off as usize)
        }
    }

    /// Adds `v` at `(i, j)`; panics outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        let s = self.slot(i, j).unwrap_or_else(|| panic!("({i}, {j}) outside band"));
        self.a[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.slot(i, j).map(|s| self.a[s]).unwrap_or_default()
    }

    pub fn factor(self) -> BandedLu {
        BandedLu::factor(self)
    }
}

impl BandedLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn factor(m: BandMatrix) -> Self {
        let BandMatrix { n, kl, ku, width, a } = m;
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            width,
            a,
            l: vec![C64::new(0.0, 0.0); n * kl.max(1)],
            piv: vec![0; n],
            singular: false,
        };
        let upper = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.a[lu.idx(k, k)].norm();
            for i in k + 1..=last {
                let v = lu.a[lu.idx(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            lu.piv[k] = p;
            if best == 0.0 || !best.is_finite() {
                lu.singular = true;
                continue;
            }
            let jmax = (k + upper).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (x, y) = (lu.idx(k, j), lu.idx(p, j));
                    lu.a.swap(x, y);
                }
            }
            let pivot = lu.a[lu.idx(k, k)];
            for i in k + 1..=last {
                let ik = lu.idx(i, k);
                let f = lu.a[ik] / pivot;
                lu.a[ik] = C64::new(0.0, 0.0);
                lu.l[k * kl.max(1) + (i - k - 1)] = f;
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..=jmax {
                    let kj = lu.a[lu.idx(k, j)];
                    if kj != C64::new(0.0, 0.0) {
                        let ij = lu.idx(i, j);
                        lu.a[ij] -= f * kj;
                    }
                }
            }
        }
        lu
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Smallest and largest absolute pivot, a cheap conditioning hint.
    pub fn pivot_range(&self) -> (f64, f64) {
        (0..self.n)
            .map(|k| self.a[self.idx(k, k)].norm())
            .fold((f64::INFINITY, 0.0), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [C64]) {
        let (n, kl) = (self.n, self.kl);
        let upper = self.kl + self.ku;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.l[k * kl.max(1) + (i - k - 1)] * bk;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + upper).min(n - 1) {
                s -= self.a[self.idx(i, j)] * b[j];
            }
            b[i] = s / self.a[self.idx(i, i)];
        }
    }

    /// Solves `Aᴴ x = b` in place.
    pub fn solve_adjoint(&self, b: &mut [C64]) {
        let (n, kl) = (self.n, self.kl);
        let upper = self.kl + self.ku;
        for i in 0..n {
            let mut s = b[i];
            for j in i.saturating_sub(upper)..i {
                s -= self.a[self.idx(j, i)].conj() * b[j];
            }
            b[i] = s / self.a[self.idx(i, i)].conj();
        }
        for k in (0..n).rev() {
            let mut s = C64::new(0.0, 0.0);
            for i in k + 1..=(k + kl).min(n - 1) {
                s += self.l[k * kl.max(1) + (i - k - 1)].conj() * b[i];
            }
            b[k] -= s;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }
}

/// Euclidean norm of a complex vector.
pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
