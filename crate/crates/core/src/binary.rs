//! ADMM-based alternating optimization for binary offloading.
//!
//! Offloading decisions `m` are relaxed to `[0, 1]` and tied to the rates
//! through the splitting `z_b = M r_b`, `z_c = (I − M) r_c`; integrality is
//! expressed as `m = m̃`, `M (1 − m̃) = 0`. Each iteration refreshes the WMMSE
//! block, updates `(r_b, r_c, m̃)` in closed form, solves the convex
//! `(z_b, z_c, p, m)` block and takes a dual ascent step.
//!
//! Rates inside [`AdmmState`] are in bit/s/Hz; the penalty parameters act on
//! that scale. [`BinarySolution`] reports bit/s.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::cvxcore::{self, ConvexSubproblem, KktResidual, Objective, Point};
use crate::error::{Error, Result};
use crate::linalg::{CVec, C64};
use crate::partial::{
    feasible_set, feasible_start, serialize_cvec, solve_partial_pinned, solver_options, PartialSolution, RateLayout,
    RatePins,
};
use crate::rates::{DecodingOrder, MultipleAccess, SystemModel};
use crate::scenario::{ChannelRealization, ScenarioConfig};
use crate::wmmse::{awmse_quadratics, optimal_state, WmmseState};

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub z_b: Vec<f64>,
    pub z_c: Vec<f64>,
    pub r_b: Vec<f64>,
    pub r_c: Vec<f64>,
    pub m: Vec<f64>,
    pub m_tilde: Vec<f64>,
    pub p: CVec,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
    pub lambda4: Vec<f64>,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub rho4: f64,
    pub wmmse: WmmseState,
}

impl AdmmState {
    /// Starting point built from a partial-offloading solution: `z = r̆`,
    /// `m = r̆_b ⊘ (r̆_b + r̆_c)` (0.5 where both are zero), zero duals.
    pub fn warm_start(model: &SystemModel, partial: &PartialSolution) -> Result<Self> {
        let cfg = model.cfg;
        let b = cfg.bandwidth;
        let [rho1, rho2, rho3, rho4] = cfg.algorithm.rho;
        if [rho1, rho2, rho3, rho4].iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidConfig("ADMM penalty parameters must be positive".into()));
        }
        let z_b: Vec<f64> = partial.r_b.iter().map(|r| r / b).collect();
        let z_c: Vec<f64> = partial.r_c.iter().map(|r| r / b).collect();
        let m: Vec<f64> = z_b
            .iter()
            .zip(&z_c)
            .map(|(&zb, &zc)| if zb + zc > 0.0 { zb / (zb + zc) } else { 0.5 })
            .collect();
        let k = z_b.len();
        Ok(Self {
            r_b: z_b.clone(),
            r_c: z_c.clone(),
            m_tilde: m.clone(),
            z_b,
            z_c,
            m,
            p: partial.p.clone(),
            lambda1: vec![0.0; k],
            lambda2: vec![0.0; k],
            lambda3: vec![0.0; k],
            lambda4: vec![0.0; k],
            rho1,
            rho2,
            rho3,
            rho4,
            wmmse: optimal_state(model, &partial.p)?,
        })
    }

    pub fn n_users(&self) -> usize {
        self.m.len()
    }

    /// `f = Σ ω_k (z_{b,k} + z_{c,k})`.
    pub fn objective(&self, weights: &[f64]) -> f64 {
        weights.iter().zip(self.z_b.iter().zip(&self.z_c)).map(|(w, (b, c))| w * (b + c)).sum()
    }

    /// Rounded decisions: user `k` computes at the BS iff `m_k > 0.5`.
    pub fn decisions(&self) -> Vec<bool> {
        self.m.iter().map(|&m| m > 0.5).collect()
    }

    /// `Σ ω_k (m̆_k z_{b,k} + (1 − m̆_k) z_{c,k})`.
    pub fn effective_rate(&self, weights: &[f64]) -> f64 {
        self.decisions()
            .iter()
            .enumerate()
            .map(|(k, &at_bs)| weights[k] * if at_bs { self.z_b[k] } else { self.z_c[k] })
            .sum()
    }

    /// The four penalty terms of `Π`, each `(1/2ρ)‖·‖²`.
    pub fn penalty(&self) -> f64 {
        let mut pi = 0.0;
        for k in 0..self.n_users() {
            let m = self.m[k];
            let t1 = self.z_b[k] - m * self.r_b[k] + self.rho1 * self.lambda1[k];
            let t2 = self.z_c[k] - (1.0 - m) * self.r_c[k] + self.rho2 * self.lambda2[k];
            let t3 = m - self.m_tilde[k] + self.rho3 * self.lambda3[k];
            let t4 = m * (1.0 - self.m_tilde[k]) + self.rho4 * self.lambda4[k];
            pi += t1 * t1 / (2.0 * self.rho1)
                + t2 * t2 / (2.0 * self.rho2)
                + t3 * t3 / (2.0 * self.rho3)
                + t4 * t4 / (2.0 * self.rho4);
        }
        pi
    }

    /// `−f + Π`, the augmented Lagrangian on the feasible region.
    pub fn augmented_lagrangian(&self, weights: &[f64]) -> f64 {
        -self.objective(weights) + self.penalty()
    }
}

/// Sets the weights and receivers to their closed-form optima at the current beamformer.
pub fn admm_update_wmmse(state: &mut AdmmState, model: &SystemModel) -> Result<()> {
    state.wmmse = optimal_state(model, &state.p)?;
    Ok(())
}

/// Minimizes `Π` over `(r_b, r_c, m̃)`. A rate whose coefficient (`m_k` or
/// `1 − m_k`) is at most `dummy_threshold` no longer affects `Π` and keeps its value.
pub fn admm_update_r_mtilde(state: &mut AdmmState, dummy_threshold: f64) {
    for k in 0..state.n_users() {
        let m = state.m[k];
        if m.abs() > dummy_threshold {
            state.r_b[k] = (state.z_b[k] + state.rho1 * state.lambda1[k]) / m;
        }
        if (1.0 - m).abs() > dummy_threshold {
            state.r_c[k] = (state.z_c[k] + state.rho2 * state.lambda2[k]) / (1.0 - m);
        }
        // Stationarity of the last two penalty terms in m̃_k; with ρ₃ = ρ₄ this is
        // (m_k² + 1) m̃_k = m_k² + ρ₄ m_k λ₄ + m_k + ρ₃ λ₃.
        let (r3, r4) = (state.rho3, state.rho4);
        state.m_tilde[k] =
            (m / r3 + state.lambda3[k] + m * m / r4 + m * state.lambda4[k]) / (1.0 / r3 + m * m / r4);
    }
}

/// Dual ascent step on all four splitting constraints.
pub fn admm_update_duals(state: &mut AdmmState) {
    for k in 0..state.n_users() {
        let m = state.m[k];
        state.lambda1[k] += (state.z_b[k] - m * state.r_b[k]) / state.rho1;
        state.lambda2[k] += (state.z_c[k] - (1.0 - m) * state.r_c[k]) / state.rho2;
        state.lambda3[k] += (m - state.m_tilde[k]) / state.rho3;
        state.lambda4[k] += m * (1.0 - state.m_tilde[k]) / state.rho4;
    }
}

/// Largest violation of the splitting and integrality constraints.
pub fn constraint_violation(state: &AdmmState) -> f64 {
    let mut d: f64 = 0.0;
    for k in 0..state.n_users() {
        let m = state.m[k];
        d = d
            .max((state.z_b[k] - m * state.r_b[k]).abs())
            .max((state.z_c[k] - (1.0 - m) * state.r_c[k]).abs())
            .max((m - state.m_tilde[k]).abs())
            .max((m * (1.0 - state.m_tilde[k])).abs());
    }
    d
}

/// Real variables are `[z_b, z_c, m]`.
fn zpm_subproblem(model: &SystemModel, state: &AdmmState) -> Result<ConvexSubproblem> {
    let cfg = model.cfg;
    let k = state.n_users();
    let n = 3 * k;
    let layout = RateLayout::new(&RatePins::none(k));
    let quads = awmse_quadratics(model, &state.wmmse)?;
    let (constraints, cubic) = feasible_set(cfg, &quads, &layout);

    // (1/2ρ)(aᵀx + d)² = ½ xᵀ(aaᵀ/ρ)x + (d/ρ) aᵀx + d²/(2ρ)
    let mut q = nalgebra::DMatrix::zeros(n, n);
    let mut lin = DVector::zeros(n);
    let mut constant = 0.0;
    let mut add = |a: &[(usize, f64)], d: f64, rho: f64| {
        for &(i, ai) in a {
            for &(j, aj) in a {
                q[(i, j)] += ai * aj / rho;
            }
            lin[i] += d / rho * ai;
        }
        constant += d * d / (2.0 * rho);
    };
    for u in 0..k {
        let (zb, zc, m) = (u, k + u, 2 * k + u);
        add(&[(zb, 1.0), (m, -state.r_b[u])], state.rho1 * state.lambda1[u], state.rho1);
        add(&[(zc, 1.0), (m, state.r_c[u])], state.rho2 * state.lambda2[u] - state.r_c[u], state.rho2);
        add(&[(m, 1.0)], state.rho3 * state.lambda3[u] - state.m_tilde[u], state.rho3);
        add(&[(m, 1.0 - state.m_tilde[u])], state.rho4 * state.lambda4[u], state.rho4);
    }
    for u in 0..k {
        lin[u] -= cfg.user_weights[u];
        lin[k + u] -= cfg.user_weights[u];
    }
    let mut bounds = vec![(0.0, f64::INFINITY); 2 * k];
    bounds.extend(std::iter::repeat_n((0.0, 1.0), k));
    Ok(ConvexSubproblem {
        real_dim: n,
        complex_dim: cfg.n_antennas,
        objective: Objective { x_linear: lin, p_linear: None, x_quad: Some(q), constant },
        quadratic_constraints: constraints,
        cubic_constraint: Some(cubic),
        bounds,
    })
}

/// Minimizes `−f + Π` over `(z_b, z_c, p, m)` in the feasible region at the
/// current weights and receivers. Returns the solver's KKT residual.
pub fn admm_update_zpm(state: &mut AdmmState, model: &SystemModel) -> Result<KktResidual> {
    let k = state.n_users();
    let problem = zpm_subproblem(model, state)?;
    let opts = solver_options(model.cfg);
    let mut x: Vec<f64> = state.z_b.clone();
    x.extend(&state.z_c);
    x.extend(&state.m);
    let current = Point { x: DVector::from_vec(x), p: state.p.clone() };

    // The previous iterate stays feasible under the refreshed surrogates; if
    // round-off puts it on the boundary, pull it towards a strictly interior point.
    let mut res = cvxcore::solve(&problem, &current, &opts);
    if matches!(res, Err(Error::NeedsPhaseOne { .. })) {
        let inner = feasible_start(model, &RateLayout::new(&RatePins::none(k)))?;
        let mut xi = inner.x.as_slice().to_vec();
        xi.extend(std::iter::repeat_n(0.5, k));
        let xi = DVector::from_vec(xi);
        for t in [1e-9, 1e-6, 1e-3, 1e-1, 1.0] {
            let start = Point { x: &current.x * (1.0 - t) + &xi * t, p: &current.p * C64::new(1.0 - t, 0.0) + &inner.p * C64::new(t, 0.0) };
            res = cvxcore::solve(&problem, &start, &opts);
            if !matches!(res, Err(Error::NeedsPhaseOne { .. })) {
                break;
            }
        }
    }
    let res = res?;
    state.z_b = res.x.rows(0, k).iter().copied().collect();
    state.z_c = res.x.rows(k, k).iter().copied().collect();
    state.m = res.x.rows(2 * k, k).iter().map(|m| m.clamp(0.0, 1.0)).collect();
    state.p = res.p;
    Ok(res.kkt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmmTraceRow {
    pub iteration: usize,
    /// `f` in bit/s.
    pub objective: f64,
    /// Effective rate with the decisions rounded at this iterate, bit/s.
    pub effective_rate: f64,
    pub violation: f64,
    /// Augmented Lagrangian (bit/s/Hz scale) at the start of the iteration and
    /// after the WMMSE, `(r, m̃)` and `(z, p, m)` blocks.
    pub lagrangian: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinarySolution {
    /// `true` where the user computes at the BS.
    pub at_bs: Vec<bool>,
    /// Relaxed decisions before rounding.
    pub m: Vec<f64>,
    #[serde(serialize_with = "serialize_cvec")]
    pub p: CVec,
    pub z_b: Vec<f64>,
    pub z_c: Vec<f64>,
    /// Weighted computation rate of the rounded decisions, bit/s.
    pub effective_rate: f64,
    /// `Σ ω_k (z_{b,k} + z_{c,k})` at the last iterate, bit/s.
    pub objective: f64,
    pub trace: Vec<AdmmTraceRow>,
    pub iterations: usize,
    pub converged: bool,
    pub sensing_sinr_achieved: f64,
    /// Result of the partial-offloading warm start.
    #[serde(skip)]
    pub warm_start: Option<PartialSolution>,
}

impl BinarySolution {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "objective", "effective_rate", "violation"])?;
        for r in &self.trace {
            w.write_record([
                r.iteration.to_string(),
                format!("{:.9e}", r.objective),
                format!("{:.9e}", r.effective_rate),
                format!("{:.6e}", r.violation),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// ADMM binary offloading on a prepared system model, warm-started from the partial-offloading solution.
pub fn solve_binary_model(model: &SystemModel) -> Result<BinarySolution> {
    let partial = solve_partial_pinned(model, &RatePins::none(model.n_users()))?;
    solve_binary_from(model, partial)
}

/// ADMM binary offloading warm-started from an existing partial-offloading solution of the same model.
pub fn solve_binary_from(model: &SystemModel, partial: PartialSolution) -> Result<BinarySolution> {
    let cfg = model.cfg;
    let mut state = AdmmState::warm_start(model, &partial)?;
    let w = &cfg.user_weights;
    let b = cfg.bandwidth;
    let alg = &cfg.algorithm;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut prev: Option<f64> = None;
    for it in 1..=alg.binary_max_iter {
        let l0 = state.augmented_lagrangian(w);
        admm_update_wmmse(&mut state, model)?;
        let l1 = state.augmented_lagrangian(w);
        admm_update_r_mtilde(&mut state, alg.dummy_threshold);
        let l2 = state.augmented_lagrangian(w);
        admm_update_zpm(&mut state, model)?;
        let l3 = state.augmented_lagrangian(w);
        admm_update_duals(&mut state);
        let obj = state.objective(w);
        let delta = constraint_violation(&state);
        trace.push(AdmmTraceRow {
            iteration: it,
            objective: obj * b,
            effective_rate: state.effective_rate(w) * b,
            violation: delta,
            lagrangian: [l0, l1, l2, l3],
        });
        let stagnant = prev.is_some_and(|p| (obj - p).abs() <= alg.rel_tol * obj.abs().max(1e-300));
        if stagnant && delta <= alg.violation_tol {
            converged = true;
            break;
        }
        prev = Some(obj);
    }
    Ok(BinarySolution {
        at_bs: state.decisions(),
        m: state.m.clone(),
        effective_rate: state.effective_rate(w) * b,
        objective: state.objective(w) * b,
        z_b: state.z_b.iter().map(|z| z * b).collect(),
        z_c: state.z_c.iter().map(|z| z * b).collect(),
        sensing_sinr_achieved: model.sensing_sinr(&state.p)?,
        p: state.p,
        iterations: trace.len(),
        trace,
        converged,
        warm_start: Some(partial),
    })
}

/// ADMM binary offloading for NOMA with the given decoding order.
pub fn solve_binary(ch: &ChannelRealization, cfg: &ScenarioConfig, order: &DecodingOrder) -> Result<BinarySolution> {
    let model = SystemModel::noma(cfg, ch, order.clone())?;
    solve_binary_model(&model)
}

/// Largest `K` accepted by the exhaustive subset search.
pub const BINARY_ORACLE_MAX_USERS: usize = 12;

#[derive(Debug, Clone)]
pub struct BinaryOracle {
    pub at_bs: Vec<bool>,
    /// Best weighted computation rate, bit/s.
    pub rate: f64,
    pub solution: PartialSolution,
}

/// Every BS/CS assignment solved by the partial-offloading optimizer with the complementary rates pinned to zero.
pub fn exhaustive_binary_oracle_model(model: &SystemModel) -> Result<BinaryOracle> {
    let k = model.n_users();
    if k > BINARY_ORACLE_MAX_USERS {
        return Err(Error::TooLarge { what: "exhaustive offloading search", size: k, limit: BINARY_ORACLE_MAX_USERS });
    }
    let mut best: Option<BinaryOracle> = None;
    for mask in 0..(1usize << k) {
        let at_bs: Vec<bool> = (0..k).map(|u| mask >> u & 1 == 1).collect();
        let sol = solve_partial_pinned(model, &RatePins::subset(&at_bs))?;
        if best.as_ref().is_none_or(|b| sol.objective > b.rate) {
            best = Some(BinaryOracle { at_bs, rate: sol.objective, solution: sol });
        }
    }
    Ok(best.expect("at least one subset"))
}

pub fn exhaustive_binary_oracle(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    order: &DecodingOrder,
) -> Result<BinaryOracle> {
    let model = SystemModel::new(cfg, ch, MultipleAccess::Noma, order.clone())?;
    exhaustive_binary_oracle_model(&model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::partial::propose_decoding_order;
    use crate::scenario::sample_channels;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dummy_wmmse(k: usize) -> WmmseState {
        WmmseState {
            user_receivers: vec![CVec::zeros(1); k],
            cs_receiver: C64::new(0.0, 0.0),
            sensing_receiver: CVec::zeros(1),
            user_weights: vec![1.0; k],
            cs_weight: 1.0,
            sensing_weight: 1.0,
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, k: usize, rho: [f64; 4]) -> AdmmState {
        let mut v = |lo: f64, hi: f64| (0..k).map(|_| rng.random_range(lo..hi)).collect::<Vec<_>>();
        AdmmState {
            z_b: v(0.0, 5.0),
            z_c: v(0.0, 5.0),
            r_b: v(0.0, 5.0),
            r_c: v(0.0, 5.0),
            m: v(0.0, 1.0),
            m_tilde: v(0.0, 1.0),
            p: CVec::zeros(1),
            lambda1: v(-1.0, 1.0),
            lambda2: v(-1.0, 1.0),
            lambda3: v(-1.0, 1.0),
            lambda4: v(-1.0, 1.0),
            rho1: rho[0],
            rho2: rho[1],
            rho3: rho[2],
            rho4: rho[3],
            wmmse: dummy_wmmse(k),
        }
    }

    #[test]
    fn r_update_with_unit_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = random_state(&mut rng, 3, [1.0, 1.0, 0.1, 0.1]);
        s.m = vec![1.0; 3];
        s.lambda1 = vec![0.0; 3];
        let r_c = s.r_c.clone();
        admm_update_r_mtilde(&mut s, 1e-6);
        assert_eq!(s.r_b, s.z_b);
        // 1 − m = 0: r_c is a dummy and keeps its value.
        assert_eq!(s.r_c, r_c);
    }

    #[test]
    fn m_tilde_zero_decisions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = random_state(&mut rng, 4, [1.0, 1.0, 0.1, 0.1]);
        s.m = vec![0.0; 4];
        s.lambda3 = vec![0.0; 4];
        s.lambda4 = vec![0.0; 4];
        admm_update_r_mtilde(&mut s, 1e-6);
        assert!(s.m_tilde.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn m_tilde_matches_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let rho = rng.random_range(0.01..2.0);
            let mut s = random_state(&mut rng, 5, [1.0, 1.0, rho, rho]);
            let k = 5;
            let mm = nalgebra::DMatrix::from_diagonal(&DVector::from_vec(s.m.clone()));
            let m = DVector::from_vec(s.m.clone());
            let a = mm.transpose() * &mm + nalgebra::DMatrix::identity(k, k);
            let rhs = mm.transpose() * &m
                + mm.transpose() * DVector::from_vec(s.lambda4.clone()) * rho
                + &m
                + DVector::from_vec(s.lambda3.clone()) * rho;
            let want = a.lu().solve(&rhs).unwrap();
            admm_update_r_mtilde(&mut s, 1e-6);
            for i in 0..k {
                assert!((s.m_tilde[i] - want[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn r_mtilde_update_minimizes_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let mut s = random_state(&mut rng, 3, [0.7, 1.3, 0.2, 0.05]);
            admm_update_r_mtilde(&mut s, 1e-6);
            let base = s.penalty();
            for field in 0..3 {
                for u in 0..3 {
                    for h in [-1e-4, 1e-4] {
                        let mut t = s.clone();
                        match field {
                            0 => t.r_b[u] += h,
                            1 => t.r_c[u] += h,
                            _ => t.m_tilde[u] += h,
                        }
                        assert!(t.penalty() >= base - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn dual_update_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = random_state(&mut rng, 3, [0.5, 1.0, 0.1, 0.1]);
        s.m = vec![1.0, 0.0, 1.0];
        s.m_tilde = s.m.clone();
        for k in 0..3 {
            s.z_b[k] = s.m[k] * s.r_b[k];
            s.z_c[k] = (1.0 - s.m[k]) * s.r_c[k];
        }
        let before = s.clone();
        admm_update_duals(&mut s);
        assert_eq!(s, before);

        for k in 0..3 {
            s.z_b[k] += s.rho1;
        }
        admm_update_duals(&mut s);
        for k in 0..3 {
            assert!((s.lambda1[k] - before.lambda1[k] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn dual_update_matches_transcription() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let s0 = random_state(&mut rng, 4, [0.3, 1.7, 0.1, 0.4]);
            let mut s = s0.clone();
            admm_update_duals(&mut s);
            for k in 0..4 {
                let l1 = s0.lambda1[k] + 1.0 / s0.rho1 * (s0.z_b[k] - s0.m[k] * s0.r_b[k]);
                let l2 = s0.lambda2[k] + 1.0 / s0.rho2 * (s0.z_c[k] - (1.0 - s0.m[k]) * s0.r_c[k]);
                let l3 = s0.lambda3[k] + 1.0 / s0.rho3 * (s0.m[k] - s0.m_tilde[k]);
                let l4 = s0.lambda4[k] + 1.0 / s0.rho4 * s0.m[k] * (1.0 - s0.m_tilde[k]);
                assert!((s.lambda1[k] - l1).abs() <= 1e-14 * l1.abs().max(1.0));
                assert!((s.lambda2[k] - l2).abs() <= 1e-14 * l2.abs().max(1.0));
                assert!((s.lambda3[k] - l3).abs() <= 1e-14 * l3.abs().max(1.0));
                assert!((s.lambda4[k] - l4).abs() <= 1e-14 * l4.abs().max(1.0));
            }
        }
    }

    #[test]
    fn violation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = random_state(&mut rng, 3, [1.0, 1.0, 0.1, 0.1]);
        s.m = vec![1.0, 0.0, 1.0];
        s.m_tilde = s.m.clone();
        for k in 0..3 {
            s.z_b[k] = s.m[k] * s.r_b[k];
            s.z_c[k] = (1.0 - s.m[k]) * s.r_c[k];
        }
        assert_eq!(constraint_violation(&s), 0.0);
        s.m = vec![0.5; 3];
        s.m_tilde = s.m.clone();
        for k in 0..3 {
            s.z_b[k] = s.m[k] * s.r_b[k];
            s.z_c[k] = (1.0 - s.m[k]) * s.r_c[k];
        }
        assert!((constraint_violation(&s) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn subproblem_objective_is_augmented_lagrangian() {
        let cfg = ScenarioConfig::default();
        let ch = sample_channels(&cfg, 0).unwrap();
        let model = SystemModel::noma(&cfg, &ch, propose_decoding_order(&cfg)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = random_state(&mut rng, 3, [1.0, 1.0, 0.1, 0.1]);
        s.p = crate::partial::initialize_beamformer(&cfg);
        s.wmmse = optimal_state(&model, &s.p).unwrap();
        let problem = zpm_subproblem(&model, &s).unwrap();
        let mut x = s.z_b.clone();
        x.extend(&s.z_c);
        x.extend(&s.m);
        let v = problem.objective_value(&Point { x: DVector::from_vec(x), p: s.p.clone() });
        let want = s.augmented_lagrangian(&cfg.user_weights);
        assert!((v - want).abs() <= 1e-12 * want.abs().max(1.0), "{v} vs {want}");
    }

    #[test]
    fn solves_default_instance() {
        let cfg = ScenarioConfig::default();
        let ch = sample_channels(&cfg, 0).unwrap();
        let order = propose_decoding_order(&cfg);
        let sol = solve_binary(&ch, &cfg, &order).unwrap();
        assert_eq!(sol.at_bs.len(), 3);
        assert!(sol.m.iter().all(|m| (0.0..=1.0).contains(m)));
        assert!(sol.effective_rate > 0.0);
        if sol.converged {
            let last = sol.trace.last().unwrap();
            assert!(last.violation <= cfg.algorithm.violation_tol);
        }
        for row in &sol.trace {
            // The (r, m̃) block is an exact minimization.
            assert!(row.lagrangian[2] <= row.lagrangian[1] + 1e-9);
        }
    }

    #[test]
    fn oracle_guard() {
        let cfg = ScenarioConfig::default().with_users(13);
        let ch = sample_channels(&cfg, 0).unwrap();
        let r = exhaustive_binary_oracle(&ch, &cfg, &DecodingOrder::identity(13));
        assert!(matches!(r, Err(Error::TooLarge { .. })));
    }
}
