//! Gauss-Legendre rules and an adaptive box integrator for weakly singular
//! kernels.
//!
//! Integrands are vector valued (several test/trial combinations share one
//! kernel evaluation). A box is split along every axis at the kernel's
//! singular point and at caller-supplied kinks. Sub-boxes with the singular
//! point at a corner go through a Duffy transform, which cancels the `1/r`
//! behavior. Boxes far from the singular point (relative to their size) get
//! one tensor rule whose order follows from the analyticity radius of `1/r`;
//! every other box is integrated by tensor rules of two orders and bisected
//! until they agree.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, ceil, cos, ln, sqrt, C64, PI};

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                let dx = p / d;
                x -= dx;
                if abs(dx) < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 1.0 / ((1.0 - x * x) * dp * dp);
            // x > 0 here; map ±x from [-1, 1] to [0, 1]
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Adaptive tensor-product integrator.
#[derive(Debug, Clone)]
pub struct Integrator {
    /// Rules with `1..=order + 1` points.
    rules: Vec<GaussRule>,
    order: usize,
    tol: f64,
    max_depth: u32,
    near_factor: f64,
}

/// Lowest far-box order; keeps the phase factor resolved across a box.
const FAR_MIN_ORDER: usize = 4;

/// Running worst relative error estimate of boxes accepted at the depth limit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadStats {
    pub worst: f64,
    pub boxes: usize,
}

impl Integrator {
    /// Boxes are accepted when rules of `order` and `order + 1` points agree
    /// to `tol` relative to the larger component. A box whose distance to
    /// the singular point is at least `near_factor` times its diameter is
    /// integrated by a single rule of at most `order` points.
    pub fn new(order: usize, tol: f64, max_depth: u32, near_factor: f64) -> Self {
        assert!(order >= 1, "order must be positive");
        let rules = (1..=order + 1).map(GaussRule::new).collect();
        Integrator { rules, order, tol, max_depth, near_factor }
    }

    fn rule(&self, n: usize) -> &GaussRule {
        &self.rules[n - 1]
    }

    /// Points per axis for a far box: Gauss error on `1/r` decays like
    /// `ρ^{-2n}` with `ρ` the Bernstein ellipse through the singularity.
    fn far_order(&self, dist_center: f64, half_diag: f64) -> usize {
        let t = dist_center / half_diag;
        let rho = t + sqrt(t * t - 1.0);
        let n = ceil(-ln(self.tol) / (2.0 * ln(rho))) as usize + 1;
        n.clamp(FAR_MIN_ORDER.min(self.order), self.order)
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    fn tensor<const D: usize, F>(rule: &GaussRule, f: &mut F, lo: &[f64; D], hi: &[f64; D], out: &mut [C64], tmp: &mut [C64])
    where
        F: FnMut(&[f64; D], &mut [C64]),
    {
        let n = rule.len();
        let mut vol = 1.0;
        for d in 0..D {
            vol *= hi[d] - lo[d];
        }
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        let mut idx = [0usize; D];
        let mut x = [0.0; D];
        loop {
            let mut w = vol;
            for d in 0..D {
                x[d] = lo[d] + (hi[d] - lo[d]) * rule.nodes[idx[d]];
                w *= rule.weights[idx[d]];
            }
            f(&x, tmp);
            for (o, t) in out.iter_mut().zip(tmp.iter()) {
                *o += t * w;
            }
            let mut d = 0;
            loop {
                if d == D {
                    return;
                }
                idx[d] += 1;
                if idx[d] < n {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn adaptive<const D: usize, F>(
        &self,
        f: &mut F,
        lo: [f64; D],
        hi: [f64; D],
        sing: Option<(&[f64; D], f64)>,
        depth: u32,
        acc: &mut [C64],
        stats: &mut QuadStats,
    ) where
        F: FnMut(&[f64; D], &mut [C64]),
    {
        let m = acc.len();
        let mut qh = vec![C64::new(0.0, 0.0); m];
        let mut tmp = vec![C64::new(0.0, 0.0); m];
        if let Some((s, gap)) = sing {
            let (mut near2, mut center2, mut hd2) = (gap * gap, gap * gap, 0.0);
            for d in 0..D {
                let c = 0.5 * (lo[d] + hi[d]);
                let e = 0.5 * (hi[d] - lo[d]);
                let out = (abs(s[d] - c) - e).max(0.0);
                near2 += out * out;
                center2 += (s[d] - c) * (s[d] - c);
                hd2 += e * e;
            }
            if near2 >= self.near_factor * self.near_factor * 4.0 * hd2 {
                let n = self.far_order(sqrt(center2), sqrt(hd2));
                Self::tensor(self.rule(n), f, &lo, &hi, &mut qh, &mut tmp);
                stats.boxes += 1;
                for (a, q) in acc.iter_mut().zip(&qh) {
                    *a += q;
                }
                return;
            }
        }
        let mut ql = vec![C64::new(0.0, 0.0); m];
        Self::tensor(self.rule(self.order), f, &lo, &hi, &mut ql, &mut tmp);
        Self::tensor(self.rule(self.order + 1), f, &lo, &hi, &mut qh, &mut tmp);
        let est = ql.iter().zip(&qh).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let scale = qh.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if est <= self.tol * scale || est <= f64::MIN_POSITIVE || depth >= self.max_depth {
            if depth >= self.max_depth && scale > 0.0 && est > self.tol * scale {
                stats.worst = stats.worst.max(est / scale);
            }
            stats.boxes += 1;
            for (a, q) in acc.iter_mut().zip(&qh) {
                *a += q;
            }
            return;
        }
        for corner in 0..(1usize << D) {
            let mut clo = lo;
            let mut chi = hi;
            for d in 0..D {
                let mid = 0.5 * (lo[d] + hi[d]);
                if corner >> d & 1 == 0 {
                    chi[d] = mid;
                } else {
                    clo[d] = mid;
                }
            }
            self.adaptive(f, clo, chi, sing, depth + 1, acc, stats);
        }
    }

    /// Integrates `f` over the box `[lo, hi]`, writing `m` components.
    ///
    /// `cuts` lists, per axis, extra coordinates where the integrand has a
    /// kink. `singular` is the point `(s, gap)` near which `f` behaves like
    /// `1/√(|x − s|² + gap²)`, if any.
    pub fn integrate<const D: usize, F>(
        &self,
        mut f: F,
        lo: [f64; D],
        hi: [f64; D],
        cuts: &[&[f64]; D],
        singular: Option<([f64; D], f64)>,
        m: usize,
    ) -> Result<Vec<C64>>
    where
        F: FnMut(&[f64; D], &mut [C64]),
    {
        let mut acc = vec![C64::new(0.0, 0.0); m];
        let mut stats = QuadStats::default();
        let mut breaks: [Vec<f64>; D] = core::array::from_fn(|_| Vec::new());
        for d in 0..D {
            let mut b = vec![lo[d], hi[d]];
            let extra = cuts[d].iter().copied().chain(singular.map(|s| s.0[d]));
            for c in extra {
                if c > lo[d] && c < hi[d] {
                    b.push(c);
                }
            }
            b.sort_by(|a, b| a.total_cmp(b));
            b.dedup();
            breaks[d] = b;
        }
        let counts: [usize; D] = core::array::from_fn(|d| breaks[d].len() - 1);
        let mut idx = [0usize; D];
        loop {
            let blo: [f64; D] = core::array::from_fn(|d| breaks[d][idx[d]]);
            let bhi: [f64; D] = core::array::from_fn(|d| breaks[d][idx[d] + 1]);
            let corner = singular.filter(|s| s.1 == 0.0).and_then(|s| corner_of(&blo, &bhi, &s.0));
            match corner {
                Some((c, o)) => self.duffy(&mut f, c, o, &mut acc, &mut stats),
                None => {
                    let sing = singular.as_ref().map(|(p, g)| (p, *g));
                    self.adaptive(&mut f, blo, bhi, sing, 0, &mut acc, &mut stats)
                }
            }
            let mut d = 0;
            loop {
                if d == D {
                    if stats.worst > self.tol {
                        return Err(Error::Quadrature { worst_estimate: stats.worst, tolerance: self.tol });
                    }
                    return Ok(acc);
                }
                idx[d] += 1;
                if idx[d] < counts[d] {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    /// Box with corner `c` at the singularity and opposite corner `o`.
    fn duffy<const D: usize, F>(&self, f: &mut F, c: [f64; D], o: [f64; D], acc: &mut [C64], stats: &mut QuadStats)
    where
        F: FnMut(&[f64; D], &mut [C64]),
    {
        let e: [f64; D] = core::array::from_fn(|d| o[d] - c[d]);
        let jac: f64 = e.iter().map(|v| abs(*v)).product();
        for k in 0..D {
            let mut g = |y: &[f64; D], out: &mut [C64]| {
                let z = y[0];
                let mut x = [0.0; D];
                let mut t = 1;
                for d in 0..D {
                    let w = if d == k {
                        z
                    } else {
                        t += 1;
                        z * y[t - 1]
                    };
                    x[d] = c[d] + w * e[d];
                }
                f(&x, out);
                let s = jac * powi(z, D - 1);
                out.iter_mut().for_each(|v| *v *= s);
            };
            self.adaptive(&mut g, [0.0; D], [1.0; D], None, 0, acc, stats);
        }
    }
}

fn powi(x: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |a, _| a * x)
}

fn corner_of<const D: usize>(lo: &[f64; D], hi: &[f64; D], s: &[f64; D]) -> Option<([f64; D], [f64; D])> {
    let mut c = [0.0; D];
    let mut o = [0.0; D];
    for d in 0..D {
        let tol = 1e-12 * (1.0 + abs(s[d]));
        if abs(s[d] - lo[d]) <= tol {
            c[d] = lo[d];
            o[d] = hi[d];
        } else if abs(s[d] - hi[d]) <= tol {
            c[d] = hi[d];
            o[d] = lo[d];
        } else {
            return None;
        }
    }
    Some((c, o))
}

/// Euclidean norm of a 3-vector.
pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}
