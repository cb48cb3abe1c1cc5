//! Small primal log-barrier interior-point solver for the inner subproblems.
//!
//! Variables are a real vector `x` and a complex vector `p`; internally `p` is
//! embedded as `[Re p; Im p]` after `x`. The solver minimizes
//!
//! ```text
//!   f(x, p) = c_x^T x + 2 Re{c_p^H p} + ½ x^T Q x + const
//! ```
//!
//! subject to convex quadratic constraints, at most one cubic power
//! constraint `Σ a_k x_k³ + w ‖p‖² ≤ rhs`, and per-variable bounds on `x`.
//! The barrier parameter starts at `mu0` and shrinks geometrically; every
//! stage is centred by damped Newton steps with a feasibility-preserving line
//! search.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, CMat, CVec, C64};

/// `weight · |u^H p − target|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareTerm {
    pub u: CVec,
    pub target: C64,
    pub weight: f64,
}

/// `Σ_j w_j |u_j^H p − t_j|² + p^H A p + 2 Re{b^H p} + ½ x^T Q x + Σ l_i x_i + offset ≤ 0`.
///
/// The factored squares and the expanded `(A, b)` form are interchangeable;
/// the factored one is evaluated without cancellation and should be preferred
/// when the weights are large.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadraticConstraint {
    pub p_squares: Vec<SquareTerm>,
    pub p_quad: Option<CMat>,
    pub p_linear: Option<CVec>,
    pub x_quad: Option<DMatrix<f64>>,
    pub x_linear: Vec<(usize, f64)>,
    pub offset: f64,
}

/// `Σ a_k x_k³ + w ‖p‖² ≤ rhs` over variables with nonnegative lower bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicConstraint {
    pub terms: Vec<(usize, f64)>,
    pub p_norm_weight: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub x_linear: DVector<f64>,
    /// Contributes `2 Re{c_p^H p}`.
    pub p_linear: Option<CVec>,
    /// Contributes `½ x^T Q x`; must be positive semidefinite.
    pub x_quad: Option<DMatrix<f64>>,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSubproblem {
    pub real_dim: usize,
    pub complex_dim: usize,
    pub objective: Objective,
    pub quadratic_constraints: Vec<QuadraticConstraint>,
    pub cubic_constraint: Option<CubicConstraint>,
    /// Lower and upper bound of every real variable; infinite values mean unbounded.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: DVector<f64>,
    pub p: CVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Target duality gap; also the bound on the reported KKT residuals.
    pub tol: f64,
    pub mu0: f64,
    pub mu_factor: f64,
    /// Minimum slack required of the start point in every inequality.
    pub slack_eps: f64,
    pub max_newton_per_stage: usize,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, mu0: 1.0, mu_factor: 10.0, slack_eps: 1e-9, max_newton_per_stage: 200, record_trace: false }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Multipliers estimated from the barrier, `λ_i = μ / slack_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    pub quadratic: Vec<f64>,
    pub cubic: Option<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// `‖∇f + Σ λ_i ∇g_i‖_∞`.
    pub stationarity: f64,
    /// `max_i |λ_i g_i|`.
    pub complementarity: f64,
    /// Largest constraint violation (zero for interior iterates).
    pub primal: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.complementarity).max(self.primal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub mu: f64,
    pub objective: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: DVector<f64>,
    pub p: CVec,
    pub objective: f64,
    pub duals: Duals,
    pub kkt: KktResidual,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    pub trace: Vec<TraceRow>,
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "mu", "objective", "max_violation"])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            format!("{:e}", r.mu),
            format!("{:.12e}", r.objective),
            format!("{:e}", r.max_violation),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `p ↦ [Re p; Im p]`.
pub fn complex_embedding(p: &CVec) -> DVector<f64> {
    let n = p.len();
    DVector::from_fn(2 * n, |i, _| if i < n { p[i].re } else { p[i - n].im })
}

pub fn complex_from_embedding(v: &DVector<f64>) -> CVec {
    let n = v.len() / 2;
    CVec::from_fn(n, |i, _| C64::new(v[i], v[i + n]))
}

/// Real symmetric `Â` with `p^H A p = ỹ^T Â ỹ` for Hermitian `A` and `ỹ = [Re p; Im p]`.
pub fn hermitian_embedding(a: &CMat) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, ri) = (i / n, i % n);
        let (bj, rj) = (j / n, j % n);
        let z = a[(ri, rj)];
        match (bi, bj) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    })
}

/// `Σ w_j (a_j^T y − t_j)² + ½ y^T H y + g^T y + c` over the stacked real variable vector.
#[derive(Debug, Clone)]
struct RealQuadratic {
    squares: Vec<(DVector<f64>, f64, f64)>,
    hess: Option<DMatrix<f64>>,
    /// Hessian including the squares.
    hess_total: Option<DMatrix<f64>>,
    grad: DVector<f64>,
    constant: f64,
}

impl RealQuadratic {
    fn new(squares: Vec<(DVector<f64>, f64, f64)>, hess: Option<DMatrix<f64>>, grad: DVector<f64>, constant: f64) -> Self {
        let n = grad.len();
        let hess_total = if squares.is_empty() {
            hess.clone()
        } else {
            let mut h = hess.clone().unwrap_or_else(|| DMatrix::zeros(n, n));
            for (a, _, w) in &squares {
                h.ger(2.0 * w, a, a, 1.0);
            }
            Some(h)
        };
        Self { squares, hess, hess_total, grad, constant }
    }

    fn value_and_gradient(&self, y: &DVector<f64>) -> (f64, DVector<f64>) {
        let (mut v, mut g) = match &self.hess {
            Some(h) => {
                let hy = h * y;
                (0.5 * y.dot(&hy) + self.grad.dot(y) + self.constant, hy + &self.grad)
            }
            None => (self.grad.dot(y) + self.constant, self.grad.clone()),
        };
        for (a, t, w) in &self.squares {
            let r = a.dot(y) - t;
            v += w * r * r;
            g.axpy(2.0 * w * r, a, 1.0);
        }
        (v, g)
    }
}

/// Splits `w |u^H p − t|²` into two real squares over the stacked vector.
fn real_squares(term: &SquareTerm, offset: usize, dim: usize) -> [(DVector<f64>, f64, f64); 2] {
    let n = term.u.len();
    let mut re = DVector::zeros(dim);
    let mut im = DVector::zeros(dim);
    for i in 0..n {
        let u = term.u[i];
        re[offset + i] = u.re;
        re[offset + n + i] = u.im;
        im[offset + i] = -u.im;
        im[offset + n + i] = u.re;
    }
    [(re, term.target.re, term.weight), (im, term.target.im, term.weight)]
}

struct Compiled<'a> {
    problem: &'a ConvexSubproblem,
    dim: usize,
    objective: RealQuadratic,
    constraints: Vec<RealQuadratic>,
}

fn psd_tolerance(norm: f64) -> f64 {
    -1e-10 * norm.max(1e-300)
}

impl ConvexSubproblem {
    /// Checks dimensions and the convexity certificate of every term.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let (r, c) = (self.real_dim, self.complex_dim);
        if self.objective.x_linear.len() != r || self.bounds.len() != r {
            return bad("objective or bounds do not match real_dim".into());
        }
        let check_x_quad = |q: &DMatrix<f64>, what: &str| -> Result<()> {
            if q.nrows() != r || q.ncols() != r {
                return Err(Error::InvalidArgument(format!("{what}: x_quad must be {r}x{r}")));
            }
            if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1e-300) {
                return Err(Error::InvalidArgument(format!("{what}: x_quad is not symmetric")));
            }
            let e = nalgebra::SymmetricEigen::new(q.clone()).eigenvalues.min();
            if e < psd_tolerance(q.amax()) {
                return Err(Error::InvalidArgument(format!("{what}: x_quad is not PSD (min eig {e:e})")));
            }
            Ok(())
        };
        if let Some(q) = &self.objective.x_quad {
            check_x_quad(q, "objective")?;
        }
        if let Some(b) = &self.objective.p_linear {
            if b.len() != c {
                return bad("objective p_linear has wrong length".into());
            }
        }
        for (i, g) in self.quadratic_constraints.iter().enumerate() {
            if let Some(a) = &g.p_quad {
                if a.nrows() != c || a.ncols() != c {
                    return bad(format!("constraint {i}: p_quad must be {c}x{c}"));
                }
                let norm = a.norm();
                if crate::linalg::hermitian_defect(a) > 1e-10 * norm.max(1e-300) {
                    return bad(format!("constraint {i}: p_quad is not Hermitian"));
                }
                let e = min_eigenvalue(a);
                if e < psd_tolerance(norm) {
                    return bad(format!("constraint {i}: p_quad is not PSD (min eig {e:e})"));
                }
            }
            if let Some(b) = &g.p_linear {
                if b.len() != c {
                    return bad(format!("constraint {i}: p_linear has wrong length"));
                }
            }
            for t in &g.p_squares {
                if t.u.len() != c || !(t.weight >= 0.0) {
                    return bad(format!("constraint {i}: square term needs length {c} and a nonnegative weight"));
                }
            }
            if let Some(q) = &g.x_quad {
                check_x_quad(q, &format!("constraint {i}"))?;
            }
            if g.x_linear.iter().any(|&(j, _)| j >= r) {
                return bad(format!("constraint {i}: variable index out of range"));
            }
        }
        if let Some(cub) = &self.cubic_constraint {
            for &(j, a) in &cub.terms {
                if j >= r {
                    return bad("cubic constraint: variable index out of range".into());
                }
                if a < 0.0 || self.bounds[j].0 < 0.0 {
                    return bad(format!(
                        "cubic constraint: variable {j} needs a nonnegative coefficient and lower bound"
                    ));
                }
            }
            if cub.p_norm_weight < 0.0 {
                return bad("cubic constraint: negative power weight".into());
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return bad(format!("bounds of variable {j} are empty"));
            }
        }
        Ok(())
    }

    /// Number of inequality constraints seen by the barrier.
    pub fn n_inequalities(&self) -> usize {
        self.quadratic_constraints.len()
            + usize::from(self.cubic_constraint.is_some())
            + self.bounds.iter().map(|(l, h)| usize::from(l.is_finite()) + usize::from(h.is_finite())).sum::<usize>()
    }

    pub fn objective_value(&self, pt: &Point) -> f64 {
        let o = &self.objective;
        let mut v = o.x_linear.dot(&pt.x) + o.constant;
        if let Some(b) = &o.p_linear {
            v += 2.0 * b.dotc(&pt.p).re;
        }
        if let Some(q) = &o.x_quad {
            v += 0.5 * pt.x.dot(&(q * &pt.x));
        }
        v
    }

    /// Values `g_i(x, p)` of the quadratic constraints followed by the cubic one.
    pub fn constraint_values(&self, pt: &Point) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .quadratic_constraints
            .iter()
            .map(|g| {
                let mut v = g.offset;
                for t in &g.p_squares {
                    v += t.weight * (t.u.dotc(&pt.p) - t.target).norm_sqr();
                }
                if let Some(a) = &g.p_quad {
                    v += pt.p.dotc(&(a * &pt.p)).re;
                }
                if let Some(b) = &g.p_linear {
                    v += 2.0 * b.dotc(&pt.p).re;
                }
                if let Some(q) = &g.x_quad {
                    v += 0.5 * pt.x.dot(&(q * &pt.x));
                }
                v + g.x_linear.iter().map(|&(j, a)| a * pt.x[j]).sum::<f64>()
            })
            .collect();
        if let Some(c) = &self.cubic_constraint {
            out.push(cubic_value(c, &pt.x, pt.p.norm_squared()));
        }
        out
    }

    fn compile(&self) -> Compiled<'_> {
        let r = self.real_dim;
        let dim = r + 2 * self.complex_dim;
        let embed = |x_quad: &Option<DMatrix<f64>>, p_quad: &Option<CMat>| -> Option<DMatrix<f64>> {
            if x_quad.is_none() && p_quad.is_none() {
                return None;
            }
            let mut h = DMatrix::zeros(dim, dim);
            if let Some(q) = x_quad {
                h.view_mut((0, 0), (r, r)).copy_from(q);
            }
            if let Some(a) = p_quad {
                let e = hermitian_embedding(a) * 2.0;
                h.view_mut((r, r), (dim - r, dim - r)).copy_from(&e);
            }
            Some(h)
        };
        let p_grad = |g: &mut DVector<f64>, b: &Option<CVec>| {
            if let Some(b) = b {
                let e = complex_embedding(b) * 2.0;
                g.rows_mut(r, dim - r).copy_from(&e);
            }
        };
        let mut g = DVector::zeros(dim);
        g.rows_mut(0, r).copy_from(&self.objective.x_linear);
        p_grad(&mut g, &self.objective.p_linear);
        let objective = RealQuadratic::new(vec![], embed(&self.objective.x_quad, &None), g, self.objective.constant);
        let constraints = self
            .quadratic_constraints
            .iter()
            .map(|c| {
                let mut g = DVector::zeros(dim);
                for &(j, a) in &c.x_linear {
                    g[j] += a;
                }
                p_grad(&mut g, &c.p_linear);
                let squares = c.p_squares.iter().flat_map(|t| real_squares(t, r, dim)).collect();
                RealQuadratic::new(squares, embed(&c.x_quad, &c.p_quad), g, c.offset)
            })
            .collect();
        Compiled { problem: self, dim, objective, constraints }
    }
}

fn cubic_value(c: &CubicConstraint, x: &DVector<f64>, p_norm2: f64) -> f64 {
    c.terms.iter().map(|&(j, a)| a * x[j].powi(3)).sum::<f64>() + c.p_norm_weight * p_norm2 - c.rhs
}

/// Slack of every inequality (positive when strictly feasible), in the order
/// quadratic, cubic, lower bounds, upper bounds.
struct Slacks {
    quad: Vec<f64>,
    cubic: Option<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Slacks {
    fn min(&self) -> f64 {
        self.quad
            .iter()
            .chain(self.cubic.iter())
            .chain(self.lower.iter())
            .chain(self.upper.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn barrier(&self) -> f64 {
        self.quad
            .iter()
            .chain(self.cubic.iter())
            .chain(self.lower.iter().filter(|s| s.is_finite()))
            .chain(self.upper.iter().filter(|s| s.is_finite()))
            .map(|s| -s.ln())
            .sum()
    }
}

impl<'a> Compiled<'a> {
    fn p_of(&self, y: &DVector<f64>) -> DVector<f64> {
        y.rows(self.problem.real_dim, self.dim - self.problem.real_dim).into_owned()
    }

    fn slacks(&self, y: &DVector<f64>) -> Slacks {
        let r = self.problem.real_dim;
        let quad = self.constraints.iter().map(|c| -c.value_and_gradient(y).0).collect();
        let cubic = self.problem.cubic_constraint.as_ref().map(|c| {
            let x = y.rows(0, r).into_owned();
            -cubic_value(c, &x, self.p_of(y).norm_squared())
        });
        let lower = (0..r).map(|j| y[j] - self.problem.bounds[j].0).collect();
        let upper = (0..r).map(|j| self.problem.bounds[j].1 - y[j]).collect();
        Slacks { quad, cubic, lower, upper }
    }

    fn objective(&self, y: &DVector<f64>) -> f64 {
        self.objective.value_and_gradient(y).0
    }

    /// Barrier value `f + μ B`, or `None` outside the strict interior.
    fn merit(&self, y: &DVector<f64>, mu: f64) -> Option<f64> {
        let s = self.slacks(y);
        if !(s.min() > 0.0) {
            return None;
        }
        Some(self.objective(y) + mu * s.barrier())
    }

    /// Gradient and Hessian of `f + μ B`, plus the multipliers.
    fn derivatives(&self, y: &DVector<f64>, mu: f64) -> (DVector<f64>, DMatrix<f64>, Duals) {
        let r = self.problem.real_dim;
        let n = self.dim;
        let (_, mut grad) = self.objective.value_and_gradient(y);
        let mut hess = self.objective.hess_total.clone().unwrap_or_else(|| DMatrix::zeros(n, n));
        let mut quad_duals = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let (v, g) = c.value_and_gradient(y);
            let s = -v;
            let lam = mu / s;
            quad_duals.push(lam);
            grad.axpy(lam, &g, 1.0);
            if let Some(h) = &c.hess_total {
                hess += h * lam;
            }
            hess.ger(lam / s, &g, &g, 1.0);
        }
        let mut cubic_dual = None;
        if let Some(c) = &self.problem.cubic_constraint {
            let x = y.rows(0, r).into_owned();
            let p = self.p_of(y);
            let s = -cubic_value(c, &x, p.norm_squared());
            let lam = mu / s;
            cubic_dual = Some(lam);
            let mut g = DVector::zeros(n);
            for &(j, a) in &c.terms {
                g[j] += 3.0 * a * x[j] * x[j];
                hess[(j, j)] += lam * 6.0 * a * x[j];
            }
            for i in r..n {
                g[i] = 2.0 * c.p_norm_weight * y[i];
                hess[(i, i)] += lam * 2.0 * c.p_norm_weight;
            }
            grad.axpy(lam, &g, 1.0);
            hess.ger(lam / s, &g, &g, 1.0);
        }
        let mut lower = vec![0.0; r];
        let mut upper = vec![0.0; r];
        for j in 0..r {
            let (lo, hi) = self.problem.bounds[j];
            if lo.is_finite() {
                let s = y[j] - lo;
                lower[j] = mu / s;
                grad[j] -= lower[j];
                hess[(j, j)] += lower[j] / s;
            }
            if hi.is_finite() {
                let s = hi - y[j];
                upper[j] = mu / s;
                grad[j] += upper[j];
                hess[(j, j)] += upper[j] / s;
            }
        }
        (grad, hess, Duals { quadratic: quad_duals, cubic: cubic_dual, lower, upper })
    }
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        if reg > 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += reg;
            }
        }
        if let Some(ch) = nalgebra::Cholesky::new(h) {
            let d = -ch.solve(grad);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    None
}

/// Stages that could not be centred exactly are still accepted when the final
/// point satisfies the KKT conditions to this multiple of the tolerance.
const INEXACT_KKT_FACTOR: f64 = 1e3;

/// Minimizes the subproblem from a strictly feasible start.
pub fn solve(problem: &ConvexSubproblem, start: &Point, opts: &SolverOptions) -> Result<SolveResult> {
    problem.validate()?;
    if start.x.len() != problem.real_dim || start.p.len() != problem.complex_dim {
        return Err(Error::InvalidArgument("start point has wrong dimensions".into()));
    }
    let compiled = problem.compile();
    let r = problem.real_dim;
    let mut y = DVector::zeros(compiled.dim);
    y.rows_mut(0, r).copy_from(&start.x);
    y.rows_mut(r, compiled.dim - r).copy_from(&complex_embedding(&start.p));

    let s0 = compiled.slacks(&y);
    let all: Vec<f64> = s0
        .quad
        .iter()
        .chain(s0.cubic.iter())
        .chain(s0.lower.iter())
        .chain(s0.upper.iter())
        .cloned()
        .collect();
    if let Some((index, s)) = all.iter().enumerate().find(|(_, s)| !(**s > opts.slack_eps)) {
        return Err(Error::NeedsPhaseOne { index, value: -s });
    }

    let m = problem.n_inequalities().max(1) as f64;
    let mut mu = opts.mu0;
    let mut trace = Vec::new();
    let mut newton_steps = 0;
    let mut outer = 0;
    let stationarity_target = 1e-3 * opts.tol;
    let mut inexact = false;

    loop {
        outer += 1;
        let mut stage_steps = 0;
        let mut stalled = 0;
        let mut phi = compiled.merit(&y, mu).expect("iterate is interior");
        loop {
            let (grad, hess, _) = compiled.derivatives(&y, mu);
            let Some(dir) = newton_direction(&hess, &grad) else {
                return Err(failure(&compiled, &y, mu, outer, newton_steps, trace));
            };
            let slope = grad.dot(&dir);
            let decrement = -slope / mu;
            if decrement <= 1e-6 || grad.amax() <= stationarity_target {
                break;
            }
            if stage_steps >= opts.max_newton_per_stage {
                // Ill-conditioned centring: move on and judge the end point by KKT.
                inexact |= decrement > 1e-8;
                break;
            }
            let full_step = decrement < 0.04;
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha > 1e-16 {
                let cand = &y + &dir * alpha;
                if let Some(v) = compiled.merit(&cand, mu) {
                    if full_step || v <= phi + 0.25 * alpha * slope {
                        accepted = Some((cand, v));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            newton_steps += 1;
            stage_steps += 1;
            match accepted {
                Some((cand, v)) => {
                    let gain = phi - v;
                    y = cand;
                    phi = v;
                    // Remaining progress is below what the merit function can resolve.
                    if gain <= 1e-14 * phi.abs().max(1.0) {
                        stalled += 1;
                        if stalled >= 3 {
                            break;
                        }
                    } else {
                        stalled = 0;
                    }
                }
                None => {
                    inexact |= grad.amax() > 1e-3;
                    break;
                }
            }
        }
        if opts.record_trace {
            trace.push(TraceRow { iteration: outer, mu, objective: compiled.objective(&y), max_violation: (-compiled.slacks(&y).min()).max(0.0) });
        }
        if m * mu <= opts.tol {
            break;
        }
        mu /= opts.mu_factor;
    }
    let result = finish(&compiled, &y, mu, outer, newton_steps, trace);
    if inexact && result.kkt.max() > INEXACT_KKT_FACTOR * opts.tol {
        return Err(Error::ConvergenceFailure { iterations: newton_steps, best: Box::new(result) });
    }
    Ok(result)
}

fn finish(c: &Compiled, y: &DVector<f64>, mu: f64, outer: usize, newton_steps: usize, trace: Vec<TraceRow>) -> SolveResult {
    let r = c.problem.real_dim;
    let n = c.dim;
    let slacks = c.slacks(y);
    let (_, barrier_grad_unused, barrier) = c.derivatives(y, mu);
    drop(barrier_grad_unused);

    // Stack every finite inequality: gradient, slack and barrier multiplier.
    let mut grads: Vec<DVector<f64>> = Vec::new();
    let mut slack: Vec<f64> = Vec::new();
    let mut lam0: Vec<f64> = Vec::new();
    for (i, q) in c.constraints.iter().enumerate() {
        grads.push(q.value_and_gradient(y).1);
        slack.push(slacks.quad[i]);
        lam0.push(barrier.quadratic[i]);
    }
    if let (Some(cub), Some(s), Some(l)) = (&c.problem.cubic_constraint, slacks.cubic, barrier.cubic) {
        let mut g = DVector::zeros(n);
        for &(j, a) in &cub.terms {
            g[j] += 3.0 * a * y[j] * y[j];
        }
        for i in r..n {
            g[i] = 2.0 * cub.p_norm_weight * y[i];
        }
        grads.push(g);
        slack.push(s);
        lam0.push(l);
    }
    let mut bound_slots = Vec::new();
    for j in 0..r {
        for (upper, s, l) in [(false, slacks.lower[j], barrier.lower[j]), (true, slacks.upper[j], barrier.upper[j])] {
            if s.is_finite() {
                let mut g = DVector::zeros(n);
                g[j] = if upper { 1.0 } else { -1.0 };
                bound_slots.push((j, upper, grads.len()));
                grads.push(g);
                slack.push(s);
                lam0.push(l);
            }
        }
    }
    let (_, f_grad) = c.objective.value_and_gradient(y);
    let residual = |lam: &[f64]| -> KktResidual {
        let mut g = f_grad.clone();
        let mut comp: f64 = 0.0;
        for (i, gi) in grads.iter().enumerate() {
            g.axpy(lam[i], gi, 1.0);
            comp = comp.max((lam[i] * slack[i]).abs());
        }
        KktResidual { stationarity: g.amax(), complementarity: comp, primal: (-slacks.min()).max(0.0) }
    };

    // Multipliers minimizing ‖∇f + Σ λ_i ∇g_i‖² + Σ (λ_i s_i)²; the barrier
    // estimates μ/s_i carry the round-off of tiny slacks, this fit does not.
    let m = grads.len();
    let mut lam = lam0.clone();
    let mut kkt = residual(&lam0);
    if m > 0 {
        let jt = DMatrix::from_columns(&grads);
        let mut normal = jt.transpose() * &jt;
        for i in 0..m {
            normal[(i, i)] += slack[i] * slack[i];
        }
        let rhs = -(jt.transpose() * &f_grad);
        if let Some(ch) = nalgebra::Cholesky::new(normal) {
            let fit: Vec<f64> = ch.solve(&rhs).iter().map(|v| v.max(0.0)).collect();
            let k = residual(&fit);
            if k.max() < kkt.max() {
                lam = fit;
                kkt = k;
            }
        }
    }
    let nq = c.constraints.len();
    let mut duals = Duals {
        quadratic: lam[..nq].to_vec(),
        cubic: barrier.cubic.map(|_| lam[nq]),
        lower: vec![0.0; r],
        upper: vec![0.0; r],
    };
    for (j, upper, slot) in bound_slots {
        if upper {
            duals.upper[j] = lam[slot];
        } else {
            duals.lower[j] = lam[slot];
        }
    }
    SolveResult {
        x: y.rows(0, r).into_owned(),
        p: complex_from_embedding(&c.p_of(y)),
        objective: c.objective(y),
        duals,
        kkt,
        outer_iterations: outer,
        newton_steps,
        trace,
    }
}

fn failure(c: &Compiled, y: &DVector<f64>, mu: f64, outer: usize, newton_steps: usize, trace: Vec<TraceRow>) -> Error {
    Error::ConvergenceFailure { iterations: newton_steps, best: Box::new(finish(c, y, mu, outer, newton_steps, trace)) }
}
