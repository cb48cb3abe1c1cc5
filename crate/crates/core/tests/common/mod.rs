//! Shared helpers for the integration tests: random small convex programs and
//! a zooming grid-search oracle that evaluates them independently of `cvxcore`.
#![allow(dead_code)]

use jcsmc::cvxcore::{ConvexSubproblem, CubicConstraint, Objective, Point, QuadraticConstraint, SquareTerm};
use jcsmc::linalg::{CVec, C64};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small instance together with the plain-number description the oracle uses.
pub struct SmallInstance {
    pub problem: ConvexSubproblem,
    pub start: Point,
    /// Objective: `c·x + ½ Σ d_i x_i² + 2 Re{conj(b) p}`.
    c: Vec<f64>,
    d: Vec<f64>,
    b: Option<C64>,
    /// Square constraint: `w |conj(u) p − t|² + Σ a_i x_i + off ≤ 0`.
    sq: (f64, C64, C64, Vec<f64>, f64),
    /// Quadratic-in-x constraint `½ xᵀQx + Σ l_i x_i + off ≤ 0` (two-variable instances only).
    qx: Option<(DMatrix<f64>, Vec<f64>, f64)>,
    /// Cubic constraint: `Σ e_i x_i³ + |p|² ≤ rhs`.
    cubic: (Vec<f64>, f64),
    upper: Vec<f64>,
}

/// Instance `index` of the family: even indices have two real variables,
/// odd ones one real and one complex variable.
pub fn small_instance(seed: u64, index: usize) -> SmallInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let (n, m) = if index % 2 == 0 { (2, 0) } else { (1, 1) };
    let start_x = vec![0.1; n];
    let start_p = C64::new(0.0, 0.0);

    let c: Vec<f64> = (0..n).map(|_| -rng.random_range(0.5..2.0)).collect();
    let d: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { rng.random_range(0.0..0.5) } else { 0.0 }).collect();
    let b = (m == 1).then(|| C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));

    let w = rng.random_range(0.5..2.0);
    let u = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let t = C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let sq_at_start = if m == 1 { w * (u.conj() * start_p - t).norm_sqr() } else { 0.0 }
        + a.iter().zip(&start_x).map(|(a, x)| a * x).sum::<f64>();
    let sq_off = -sq_at_start - rng.random_range(0.5..3.0);

    let qx = (n == 2 && rng.random_bool(0.7)).then(|| {
        let g = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let q = &g * g.transpose() + DMatrix::identity(2, 2) * 0.1;
        let l: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
        let xs = DVector::from_vec(start_x.clone());
        let at_start = 0.5 * (xs.transpose() * &q * &xs)[(0, 0)] + l.iter().zip(&start_x).map(|(l, x)| l * x).sum::<f64>();
        let off = -at_start - rng.random_range(0.5..3.0);
        (q, l, off)
    });

    let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let rhs = e.iter().zip(&start_x).map(|(e, x)| e * x.powi(3)).sum::<f64>() + rng.random_range(0.5..4.0);
    let upper: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { rng.random_range(0.3..1.5) } else { f64::INFINITY }).collect();

    let mut constraints = vec![QuadraticConstraint {
        p_squares: if m == 1 { vec![SquareTerm { u: CVec::from_element(1, u), target: t, weight: w }] } else { vec![] },
        x_linear: a.iter().cloned().enumerate().collect(),
        offset: sq_off,
        ..Default::default()
    }];
    if let Some((q, l, off)) = &qx {
        constraints.push(QuadraticConstraint {
            x_quad: Some(q.clone()),
            x_linear: l.iter().cloned().enumerate().collect(),
            offset: *off,
            ..Default::default()
        });
    }
    let problem = ConvexSubproblem {
        real_dim: n,
        complex_dim: m,
        objective: Objective {
            x_linear: DVector::from_vec(c.clone()),
            p_linear: b.map(|b| CVec::from_element(1, b)),
            x_quad: d.iter().any(|&v| v > 0.0).then(|| DMatrix::from_diagonal(&DVector::from_vec(d.clone()))),
            constant: 0.0,
        },
        quadratic_constraints: constraints,
        cubic_constraint: Some(CubicConstraint { terms: e.iter().cloned().enumerate().collect(), p_norm_weight: 1.0, rhs }),
        bounds: upper.iter().map(|&u| (0.0, u)).collect(),
    };
    let start = Point { x: DVector::from_vec(start_x), p: CVec::from_element(m, start_p) };
    SmallInstance { problem, start, c, d, b, sq: (w, u, t, a, sq_off), qx, cubic: (e, rhs), upper }
}

impl SmallInstance {
    fn split(&self, v: &[f64]) -> (Vec<f64>, C64) {
        let n = self.c.len();
        let p = if self.b.is_some() { C64::new(v[n], v[n + 1]) } else { C64::new(0.0, 0.0) };
        (v[..n].to_vec(), p)
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        let (x, p) = self.split(v);
        let mut f: f64 = x.iter().zip(&self.c).map(|(x, c)| c * x).sum();
        f += 0.5 * x.iter().zip(&self.d).map(|(x, d)| d * x * x).sum::<f64>();
        if let Some(b) = self.b {
            f += 2.0 * (b.conj() * p).re;
        }
        f
    }

    pub fn feasible(&self, v: &[f64]) -> bool {
        let (x, p) = self.split(v);
        if x.iter().zip(&self.upper).any(|(x, u)| *x < 0.0 || x > u) {
            return false;
        }
        let (w, u, t, a, off) = &self.sq;
        let mut g = off + a.iter().zip(&x).map(|(a, x)| a * x).sum::<f64>();
        if self.b.is_some() {
            g += w * (u.conj() * p - t).norm_sqr();
        }
        if g > 0.0 {
            return false;
        }
        if let Some((q, l, off)) = &self.qx {
            let xs = DVector::from_vec(x.clone());
            let g = 0.5 * (xs.transpose() * q * &xs)[(0, 0)] + l.iter().zip(&x).map(|(l, x)| l * x).sum::<f64>() + off;
            if g > 0.0 {
                return false;
            }
        }
        let (e, rhs) = &self.cubic;
        e.iter().zip(&x).map(|(e, x)| e * x.powi(3)).sum::<f64>() + p.norm_sqr() <= *rhs
    }

    fn dim(&self) -> usize {
        self.c.len() + if self.b.is_some() { 2 } else { 0 }
    }

    /// Box that contains the feasible set (the cubic budget bounds every variable).
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.c.len();
        let (e, rhs) = &self.cubic;
        let mut lo = vec![0.0; n];
        let mut hi: Vec<f64> = (0..n).map(|i| (rhs / e[i]).cbrt().min(self.upper[i])).collect();
        for _ in n..self.dim() {
            lo.push(-rhs.sqrt());
            hi.push(rhs.sqrt());
        }
        (lo, hi)
    }

    fn objective_gradient(&self, v: &[f64]) -> Vec<f64> {
        let n = self.c.len();
        let mut g: Vec<f64> = (0..n).map(|i| self.c[i] + self.d[i] * v[i]).collect();
        if let Some(b) = self.b {
            g.extend([2.0 * b.re, 2.0 * b.im]);
        }
        g
    }

    /// Value and gradient of the most violated constraint, if any is violated.
    fn worst_violation(&self, v: &[f64]) -> Option<(f64, Vec<f64>)> {
        let n = self.c.len();
        let dim = self.dim();
        let (x, p) = self.split(v);
        let mut worst: Option<(f64, Vec<f64>)> = None;
        let mut consider = |g: f64, grad: Vec<f64>| {
            if g > 0.0 && worst.as_ref().is_none_or(|(w, _)| g > *w) {
                worst = Some((g, grad));
            }
        };
        for i in 0..n {
            let mut grad = vec![0.0; dim];
            grad[i] = -1.0;
            consider(-x[i], grad.clone());
            grad[i] = 1.0;
            consider(x[i] - self.upper[i], grad);
        }
        let (w, u, t, a, off) = &self.sq;
        let mut g = off + a.iter().zip(&x).map(|(a, x)| a * x).sum::<f64>();
        let mut grad: Vec<f64> = a.clone();
        if self.b.is_some() {
            let e = u.conj() * p - t;
            g += w * e.norm_sqr();
            let du = u.conj();
            grad.extend([2.0 * w * (e.conj() * du).re, 2.0 * w * (e.conj() * C64::new(0.0, 1.0) * du).re]);
        }
        consider(g, grad);
        if let Some((q, l, off)) = &self.qx {
            let xs = DVector::from_vec(x.clone());
            let qxv = q * &xs;
            let g = 0.5 * xs.dot(&qxv) + l.iter().zip(&x).map(|(l, x)| l * x).sum::<f64>() + off;
            consider(g, (0..2).map(|i| qxv[i] + l[i]).collect());
        }
        let (e, rhs) = &self.cubic;
        let g = e.iter().zip(&x).map(|(e, x)| e * x.powi(3)).sum::<f64>() + p.norm_sqr() - rhs;
        let mut grad: Vec<f64> = (0..n).map(|i| 3.0 * e[i] * x[i] * x[i]).collect();
        if self.b.is_some() {
            grad.extend([2.0 * p.re, 2.0 * p.im]);
        }
        consider(g, grad);
        worst
    }

    /// Central-cut ellipsoid method started from the ball around the bounding
    /// box. Returns the best feasible value and a bound on its suboptimality.
    pub fn ellipsoid_oracle(&self) -> (f64, f64) {
        let dim = self.dim();
        let nf = dim as f64;
        let (lo, hi) = self.bounding_box();
        let mut centre = DVector::from_fn(dim, |i, _| 0.5 * (lo[i] + hi[i]));
        let r2: f64 = lo.iter().zip(&hi).map(|(l, h)| 0.25 * (h - l) * (h - l)).sum::<f64>() * 1.01;
        let mut shape = DMatrix::identity(dim, dim) * r2;
        let mut best = f64::INFINITY;
        let mut gap = f64::INFINITY;
        for _ in 0..20_000 {
            let v: Vec<f64> = centre.iter().cloned().collect();
            let g = match self.worst_violation(&v) {
                Some((_, grad)) => DVector::from_vec(grad),
                None => {
                    let f = self.objective(&v);
                    best = best.min(f);
                    let g = DVector::from_vec(self.objective_gradient(&v));
                    // f(v) − min over the ellipsoid of the linearization.
                    gap = gap.min(f - best + (g.dot(&(&shape * &g))).sqrt());
                    g
                }
            };
            let pg = &shape * &g;
            let norm2 = g.dot(&pg);
            if !(norm2 > 1e-30) {
                break;
            }
            let step = &pg / norm2.sqrt();
            centre -= &step / (nf + 1.0);
            shape = (&shape - (&step * step.transpose()) * (2.0 / (nf + 1.0))) * (nf * nf / (nf * nf - 1.0));
            if gap < 1e-12 {
                break;
            }
        }
        (best, gap)
    }

    /// Best feasible value found by repeatedly refining a grid around the incumbent.
    pub fn grid_oracle(&self) -> f64 {
        let dim = self.dim();
        let (mut lo, mut hi) = self.bounding_box();
        let (glo, ghi) = (lo.clone(), hi.clone());
        let mut half: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)).collect();
        let points = if dim == 2 { 61 } else { 25 };
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut idx = vec![0usize; dim];
        let mut v = vec![0.0; dim];
        for _level in 0..100 {
            idx.iter_mut().for_each(|i| *i = 0);
            'grid: loop {
                for k in 0..dim {
                    v[k] = lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (points - 1) as f64;
                }
                if self.feasible(&v) {
                    let f = self.objective(&v);
                    if best.as_ref().is_none_or(|(b, _)| f < *b) {
                        best = Some((f, v.clone()));
                    }
                }
                for k in 0..dim {
                    idx[k] += 1;
                    if idx[k] < points {
                        continue 'grid;
                    }
                    idx[k] = 0;
                }
                break;
            }
            let (_, centre) = best.as_ref().expect("the start region contains feasible grid points");
            // The half-width shrinks geometrically regardless of clipping so the
            // incumbent can still travel along a bound.
            for k in 0..dim {
                half[k] *= 0.75;
                lo[k] = (centre[k] - half[k]).max(glo[k]);
                hi[k] = (centre[k] + half[k]).min(ghi[k]);
            }
        }
        best.expect("feasible point").0
    }

    /// The better of the grid and ellipsoid values; both are feasible points
    /// under this module's own evaluation of the constraints.
    pub fn oracle(&self) -> f64 {
        self.grid_oracle().min(self.ellipsoid_oracle().0)
    }
}
