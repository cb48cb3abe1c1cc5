//! WMMSE-based alternating optimization for partial offloading.
//!
//! Each round refreshes the AWMSE weights and MMSE receivers at the current
//! beamformer and then solves the resulting convex subproblem jointly in the
//! rates and the beamformer. Rates are handled internally in bit/s/Hz and
//! reported in bit/s.

use serde::Serialize;

use crate::cvxcore::{self, ConvexSubproblem, CubicConstraint, KktResidual, Objective, Point, QuadraticConstraint, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{CVec, C64};
use crate::rates::{DecodingOrder, MultipleAccess, SystemModel};
use crate::scenario::{ChannelRealization, ScenarioConfig};
use crate::wmmse::{awmse_quadratics, optimal_state, QuadForm, StreamQuadratics, WmmseState, RATE_WMMSE_CONSTANT};
use nalgebra::DVector;

/// Rates forced to zero; pinned rates are removed from the subproblem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatePins {
    pub bs_zero: Vec<bool>,
    pub cs_zero: Vec<bool>,
}

impl RatePins {
    pub fn none(k: usize) -> Self {
        Self { bs_zero: vec![false; k], cs_zero: vec![false; k] }
    }

    /// Every user computes at the BS.
    pub fn bs_only(k: usize) -> Self {
        Self { bs_zero: vec![false; k], cs_zero: vec![true; k] }
    }

    /// Every user computes at the CS.
    pub fn cs_only(k: usize) -> Self {
        Self { bs_zero: vec![true; k], cs_zero: vec![false; k] }
    }

    /// Users with `at_bs[k]` compute at the BS, the others at the CS.
    pub fn subset(at_bs: &[bool]) -> Self {
        Self { bs_zero: at_bs.iter().map(|b| !b).collect(), cs_zero: at_bs.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSolution {
    #[serde(serialize_with = "serialize_cvec")]
    pub p: CVec,
    /// Bits per second computed at the BS, per user.
    pub r_b: Vec<f64>,
    /// Bits per second computed at the CS, per user.
    pub r_c: Vec<f64>,
    /// Weighted sum computation rate in bit/s.
    pub objective: f64,
    /// Objective after every round, bit/s.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub sensing_sinr_achieved: f64,
    /// Weights and receivers used by the last subproblem.
    #[serde(skip)]
    pub wmmse: WmmseState,
    #[serde(skip)]
    pub kkt: KktResidual,
}

pub(crate) fn serialize_cvec<S: serde::Serializer>(p: &CVec, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(p.len()))?;
    for z in p.iter() {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

impl PartialSolution {
    /// Objective of one more round from the returned point, relative to the
    /// returned objective.
    pub fn fixed_point_gap(&self, model: &SystemModel, pins: &RatePins) -> Result<FixedPointGap> {
        let opt = optimal_state(model, &self.p)?;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        let mut weights: f64 = rel(self.wmmse.cs_weight, opt.cs_weight).max(rel(self.wmmse.sensing_weight, opt.sensing_weight));
        for (a, b) in self.wmmse.user_weights.iter().zip(&opt.user_weights) {
            weights = weights.max(rel(*a, *b));
        }
        let vrel = |a: &CVec, b: &CVec| (a - b).norm() / b.norm().max(1e-300);
        let mut receivers: f64 = vrel(&self.wmmse.sensing_receiver, &opt.sensing_receiver)
            .max((self.wmmse.cs_receiver - opt.cs_receiver).norm() / opt.cs_receiver.norm().max(1e-300));
        for (a, b) in self.wmmse.user_receivers.iter().zip(&opt.user_receivers) {
            receivers = receivers.max(vrel(a, b));
        }
        let mut again = self.clone();
        let round = run_rounds(model, pins, &mut again, 1)?;
        Ok(FixedPointGap { weights, receivers, objective: rel(round, self.objective) })
    }

    /// Constraint violations of the returned point, relative to each bound
    /// (empty when everything holds within `tol`).
    pub fn violations(&self, model: &SystemModel, tol: f64) -> Result<Vec<String>> {
        let cfg = model.cfg;
        let b = cfg.bandwidth;
        let mut out = Vec::new();
        let power: f64 = self.r_b.iter().map(|r| cfg.cpu_power_factor * (cfg.cycles_per_bit * r).powi(3)).sum::<f64>()
            + self.p.norm_squared();
        if power > cfg.bs_power_budget * (1.0 + tol) {
            out.push(format!("power {power:e} exceeds budget {:e}", cfg.bs_power_budget));
        }
        for (k, r) in model.uplink_rates(&self.p)?.iter().enumerate() {
            if self.r_b[k] < 0.0 || self.r_c[k] < 0.0 {
                out.push(format!("user {k} has a negative rate"));
            }
            if self.r_b[k] + self.r_c[k] > b * r * (1.0 + tol) {
                out.push(format!("user {k} computes more than it offloads"));
            }
        }
        let cs: f64 = self.r_c.iter().sum();
        if cs > b * model.downlink_rate(&self.p) * (1.0 + tol) {
            out.push("CS computes more than the BS relays".into());
        }
        let g = model.sensing_sinr(&self.p)?;
        if g < cfg.sensing_sinr_min * (1.0 - tol) {
            out.push(format!("sensing SINR {g:e} below {:e}", cfg.sensing_sinr_min));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointGap {
    /// Largest relative difference between the used and the optimal weights.
    pub weights: f64,
    /// Largest relative difference between the used and the MMSE receivers.
    pub receivers: f64,
    /// Relative objective change of one further round.
    pub objective: f64,
}

/// Beamformer aimed at the target with the whole power budget.
pub fn initialize_beamformer(cfg: &ScenarioConfig) -> CVec {
    let a = cfg.target_steering();
    let scale = cfg.bs_power_budget.sqrt() / a.norm();
    a * C64::new(scale, 0.0)
}

/// Lower weight decoded first; among equal weights the larger path loss first;
/// then by user index.
pub fn propose_decoding_order(cfg: &ScenarioConfig) -> DecodingOrder {
    let mut seq: Vec<usize> = (0..cfg.n_users).collect();
    seq.sort_by(|&i, &j| {
        cfg.user_weights[i]
            .total_cmp(&cfg.user_weights[j])
            .then(cfg.user_path_loss(j).total_cmp(&cfg.user_path_loss(i)))
            .then(i.cmp(&j))
    });
    DecodingOrder::from_sequence(&seq).expect("sorted indices form a permutation")
}

/// Index of every unpinned rate in the subproblem's real variables.
#[derive(Debug, Clone)]
pub(crate) struct RateLayout {
    pub bs: Vec<Option<usize>>,
    pub cs: Vec<Option<usize>>,
    pub n_rates: usize,
}

impl RateLayout {
    pub fn new(pins: &RatePins) -> Self {
        let mut n = 0;
        let mut next = |pinned: bool| {
            if pinned {
                None
            } else {
                n += 1;
                Some(n - 1)
            }
        };
        let bs: Vec<_> = pins.bs_zero.iter().map(|&z| next(z)).collect();
        let cs: Vec<_> = pins.cs_zero.iter().map(|&z| next(z)).collect();
        Self { bs, cs, n_rates: n }
    }

    pub fn gather(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let pick = |idx: &Vec<Option<usize>>| idx.iter().map(|i| i.map_or(0.0, |i| x[i])).collect();
        (pick(&self.bs), pick(&self.cs))
    }
}

/// `κ (φ B)^3`, the computing-power coefficient of a rate in bit/s/Hz.
pub(crate) fn cubic_coefficient(cfg: &ScenarioConfig) -> f64 {
    cfg.cpu_power_factor * (cfg.cycles_per_bit * cfg.bandwidth).powi(3)
}

fn awmse_constraint(q: &QuadForm, x_linear: Vec<(usize, f64)>, extra: f64) -> QuadraticConstraint {
    QuadraticConstraint {
        p_squares: q.squares.clone(),
        p_quad: None,
        p_linear: None,
        x_quad: None,
        x_linear,
        offset: q.offset - RATE_WMMSE_CONSTANT + extra,
    }
}

/// Causality, sensing and power constraints over the rate variables of `layout`
/// (placed in a problem with `n_real` real variables).
pub(crate) fn feasible_set(
    cfg: &ScenarioConfig,
    quads: &StreamQuadratics,
    layout: &RateLayout,
) -> (Vec<QuadraticConstraint>, CubicConstraint) {
    let mut cons = Vec::new();
    for (k, q) in quads.users.iter().enumerate() {
        let vars: Vec<(usize, f64)> = [layout.bs[k], layout.cs[k]].iter().flatten().map(|&i| (i, 1.0)).collect();
        if !vars.is_empty() {
            cons.push(awmse_constraint(q, vars, 0.0));
        }
    }
    let cs_vars: Vec<(usize, f64)> = layout.cs.iter().flatten().map(|&i| (i, 1.0)).collect();
    if !cs_vars.is_empty() {
        cons.push(awmse_constraint(&quads.cs, cs_vars, 0.0));
    }
    let gamma = (1.0 + cfg.sensing_sinr_min).log2();
    cons.push(awmse_constraint(&quads.sensing, vec![], gamma));
    let a = cubic_coefficient(cfg);
    let cubic = CubicConstraint {
        terms: layout.bs.iter().flatten().map(|&i| (i, a)).collect(),
        p_norm_weight: 1.0,
        rhs: cfg.bs_power_budget,
    };
    (cons, cubic)
}

fn subproblem(cfg: &ScenarioConfig, quads: &StreamQuadratics, layout: &RateLayout) -> ConvexSubproblem {
    let (constraints, cubic) = feasible_set(cfg, quads, layout);
    let mut c = DVector::zeros(layout.n_rates);
    for k in 0..cfg.n_users {
        for i in [layout.bs[k], layout.cs[k]].iter().flatten() {
            c[*i] = -cfg.user_weights[k];
        }
    }
    ConvexSubproblem {
        real_dim: layout.n_rates,
        complex_dim: cfg.n_antennas,
        objective: Objective { x_linear: c, p_linear: None, x_quad: None, constant: 0.0 },
        quadratic_constraints: constraints,
        cubic_constraint: Some(cubic),
        bounds: vec![(0.0, f64::INFINITY); layout.n_rates],
    }
}

/// Strictly feasible start: target-aimed beamformer scaled just below the
/// budget, and small positive rates.
pub(crate) fn feasible_start(model: &SystemModel, layout: &RateLayout) -> Result<Point> {
    let cfg = model.cfg;
    let p0 = initialize_beamformer(cfg);
    let achieved = model.sensing_sinr(&p0)?;
    let gamma = (1.0 + cfg.sensing_sinr_min).log2();
    if achieved < cfg.sensing_sinr_min {
        return Err(Error::InfeasibleSensing { achieved, required: cfg.sensing_sinr_min });
    }
    let mut shrink: f64 = 1e-3;
    let p = loop {
        let p = &p0 * C64::new((1.0 - shrink).sqrt(), 0.0);
        if model.sensing_rate(&p)? - gamma >= 1e-9 && cfg.bs_power_budget * shrink >= 1e-9 {
            break p;
        }
        shrink /= 10.0;
        if shrink < 1e-12 {
            return Err(Error::InfeasibleSensing { achieved, required: cfg.sensing_sinr_min });
        }
    };
    let rates = model.uplink_rates(&p)?;
    let rd = model.downlink_rate(&p);
    let k = cfg.n_users as f64;
    let rb = (0.5 * cfg.bs_power_budget * shrink / (k * cubic_coefficient(cfg))).cbrt();
    let mut x = DVector::zeros(layout.n_rates);
    for u in 0..cfg.n_users {
        if let Some(i) = layout.bs[u] {
            x[i] = rb.min(0.1 * rates[u]);
        }
        if let Some(i) = layout.cs[u] {
            x[i] = (0.25 * rates[u]).min(0.5 * rd / k);
        }
    }
    Ok(Point { x, p })
}

pub(crate) fn solver_options(cfg: &ScenarioConfig) -> SolverOptions {
    SolverOptions { tol: cfg.algorithm.solver_tol, slack_eps: 0.0, ..SolverOptions::default() }
}

/// One WMMSE round from `point`: returns the new point, objective in bit/s/Hz,
/// the state used and the solver residual.
fn round(
    model: &SystemModel,
    layout: &RateLayout,
    point: &Point,
) -> Result<(Point, f64, WmmseState, KktResidual)> {
    let cfg = model.cfg;
    let state = optimal_state(model, &point.p)?;
    let quads = awmse_quadratics(model, &state)?;
    let problem = subproblem(cfg, &quads, layout);
    let res = cvxcore::solve(&problem, point, &solver_options(cfg))?;
    Ok((Point { x: res.x, p: res.p }, -res.objective, state, res.kkt))
}

/// Runs up to `max_rounds` further rounds on `sol` (used for diagnostics);
/// returns the last objective in bit/s.
fn run_rounds(model: &SystemModel, pins: &RatePins, sol: &mut PartialSolution, max_rounds: usize) -> Result<f64> {
    let layout = RateLayout::new(pins);
    let b = model.cfg.bandwidth;
    let mut x = DVector::zeros(layout.n_rates);
    for k in 0..model.n_users() {
        if let Some(i) = layout.bs[k] {
            x[i] = sol.r_b[k] / b;
        }
        if let Some(i) = layout.cs[k] {
            x[i] = sol.r_c[k] / b;
        }
    }
    let mut point = Point { x, p: sol.p.clone() };
    let mut obj = sol.objective;
    for _ in 0..max_rounds {
        let (next, o, _, _) = round(model, &layout, &point)?;
        point = next;
        obj = o * b;
    }
    Ok(obj)
}

/// Alternating WMMSE optimization for partial offloading with some rates pinned to zero.
pub fn solve_partial_pinned(model: &SystemModel, pins: &RatePins) -> Result<PartialSolution> {
    let cfg = model.cfg;
    let k = cfg.n_users;
    if pins.bs_zero.len() != k || pins.cs_zero.len() != k {
        return Err(Error::InvalidArgument("rate pins must cover every user".into()));
    }
    let layout = RateLayout::new(pins);
    let b = cfg.bandwidth;
    let mut point = feasible_start(model, &layout)?;
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;
    let mut converged = false;
    let mut last_state = None;
    let mut kkt = KktResidual { stationarity: 0.0, complementarity: 0.0, primal: 0.0 };
    for _ in 0..cfg.algorithm.partial_max_iter {
        let (next, obj, state, res) = round(model, &layout, &point)?;
        point = next;
        last_state = Some(state);
        kkt = res;
        trace.push(obj * b);
        if let Some(p) = prev {
            if (obj - p).abs() <= cfg.algorithm.rel_tol * obj.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
        prev = Some(obj);
    }
    let (r_b, r_c) = layout.gather(&point.x);
    let scale = |v: Vec<f64>| v.into_iter().map(|r| r * b).collect::<Vec<_>>();
    let objective = *trace.last().unwrap_or(&0.0);
    Ok(PartialSolution {
        sensing_sinr_achieved: model.sensing_sinr(&point.p)?,
        p: point.p,
        r_b: scale(r_b),
        r_c: scale(r_c),
        objective,
        iterations: trace.len(),
        trace,
        converged,
        wmmse: last_state.expect("at least one round"),
        kkt,
    })
}

/// Partial-offloading optimization for NOMA with the given decoding order.
pub fn solve_partial(ch: &ChannelRealization, cfg: &ScenarioConfig, order: &DecodingOrder) -> Result<PartialSolution> {
    let model = SystemModel::noma(cfg, ch, order.clone())?;
    solve_partial_pinned(&model, &RatePins::none(cfg.n_users))
}

/// Largest `K` accepted by [`exhaustive_order_oracle`].
pub const ORDER_ORACLE_MAX_USERS: usize = 5;

/// Solves the partial-offloading problem for every decoding order and returns the best.
pub fn exhaustive_order_oracle(ch: &ChannelRealization, cfg: &ScenarioConfig) -> Result<(DecodingOrder, PartialSolution)> {
    let k = cfg.n_users;
    if k > ORDER_ORACLE_MAX_USERS {
        return Err(Error::TooLarge { what: "exhaustive decoding-order search", size: k, limit: ORDER_ORACLE_MAX_USERS });
    }
    let mut best: Option<(DecodingOrder, PartialSolution)> = None;
    for order in DecodingOrder::all(k) {
        let model = SystemModel::new(cfg, ch, MultipleAccess::Noma, order.clone())?;
        let sol = solve_partial_pinned(&model, &RatePins::none(k))?;
        if best.as_ref().is_none_or(|(_, b)| sol.objective > b.objective) {
            best = Some((order, sol));
        }
    }
    Ok(best.expect("at least one order"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::sample_channels;

    #[test]
    fn beamformer_initialization() {
        let cfg = ScenarioConfig { n_antennas: 4, ..ScenarioConfig::default() };
        let p = initialize_beamformer(&cfg);
        for z in p.iter() {
            assert!((z - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
        let cfg = ScenarioConfig { bs_power_budget: 2.5, target_angle: 0.3, ..ScenarioConfig::default() };
        assert!((initialize_beamformer(&cfg).norm_squared() - 2.5).abs() < 1e-14);
    }

    #[test]
    fn decoding_order_heuristic() {
        let cfg = ScenarioConfig { user_weights: vec![1.0, 0.5, 1.5], ..ScenarioConfig::default() };
        assert_eq!(propose_decoding_order(&cfg).positions(), &[1, 0, 2]);
        let cfg = ScenarioConfig { user_weights: vec![0.5, 1.0, 1.5], ..ScenarioConfig::default() };
        assert_eq!(propose_decoding_order(&cfg).positions(), &[0, 1, 2]);
        let cfg = ScenarioConfig { user_distances: vec![80.0, 60.0, 40.0], ..ScenarioConfig::default() };
        assert_eq!(propose_decoding_order(&cfg).positions(), &[0, 1, 2]);
        let cfg = ScenarioConfig { user_distances: vec![40.0, 80.0, 60.0], ..ScenarioConfig::default() };
        assert_eq!(propose_decoding_order(&cfg).positions(), &[2, 0, 1]);
        assert_eq!(propose_decoding_order(&ScenarioConfig::default()), DecodingOrder::identity(3));
    }

    #[test]
    fn layout_drops_pinned_rates() {
        let l = RateLayout::new(&RatePins::subset(&[true, false, true]));
        assert_eq!(l.bs, vec![Some(0), None, Some(1)]);
        assert_eq!(l.cs, vec![None, Some(2), None]);
        assert_eq!(l.n_rates, 3);
        assert_eq!(RateLayout::new(&RatePins::none(2)).n_rates, 4);
    }

    #[test]
    fn solves_default_instance() {
        let cfg = ScenarioConfig::default();
        let ch = sample_channels(&cfg, 0).unwrap();
        let order = propose_decoding_order(&cfg);
        let sol = solve_partial(&ch, &cfg, &order).unwrap();
        let model = SystemModel::noma(&cfg, &ch, order).unwrap();
        assert!(sol.objective > 0.0);
        assert!(sol.violations(&model, 1e-6).unwrap().is_empty());
        let b = cfg.bandwidth;
        assert!(sol.trace.windows(2).all(|w| w[1] >= w[0] - 1e-7 * b));
    }

    #[test]
    fn infeasible_sensing_is_reported() {
        let cfg = ScenarioConfig { sensing_sinr_min: 1e9, ..ScenarioConfig::default() };
        let ch = sample_channels(&cfg, 0).unwrap();
        let err = solve_partial(&ch, &cfg, &DecodingOrder::identity(3)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSensing { .. }));
    }

    #[test]
    fn order_oracle_guard() {
        let cfg = ScenarioConfig::default().with_users(6);
        let ch = sample_channels(&cfg, 0).unwrap();
        assert!(matches!(exhaustive_order_oracle(&ch, &cfg), Err(Error::TooLarge { .. })));
    }
}
