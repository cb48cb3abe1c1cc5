//! MSE machinery behind both alternating-optimization algorithms.
//!
//! Every stream (K uplink users, the BS-CS link, and the virtual sensing
//! stream) has an MSE `e` for a given receiver, an MMSE receiver, a minimum MSE
//! `e^MMSE = 2^{-R}`, and an augmented weighted MSE `ε = ϖ e − log2 ϖ`. For fixed
//! weights and receivers each `ε` is a convex quadratic in the beamformer.

use std::f64::consts::LN_2;

use crate::cvxcore::SquareTerm;
use crate::error::{Error, Result};
use crate::linalg::{hpd_solve, outer, CMat, CVec, C64};
use crate::rates::SystemModel;

/// `c = 1/ln 2 + log2(ln 2)`, the AWMSE value of a zero-rate stream.
pub const RATE_WMMSE_CONSTANT: f64 = 0.913_928_667_944_065_7;

/// Receivers and positive weights of all streams.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub user_receivers: Vec<CVec>,
    pub cs_receiver: C64,
    pub sensing_receiver: CVec,
    pub user_weights: Vec<f64>,
    pub cs_weight: f64,
    pub sensing_weight: f64,
}

/// Per-stream scalars, users first.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamValues {
    pub users: Vec<f64>,
    pub cs: f64,
    pub sensing: f64,
}

impl StreamValues {
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.users.iter().copied().chain([self.cs, self.sensing])
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> StreamValues {
        StreamValues { users: self.users.iter().map(|&x| f(x)).collect(), cs: f(self.cs), sensing: f(self.sensing) }
    }
}

/// `p^H A p + 2 Re{b^H p} + constant` with Hermitian PSD `A`, also kept in the
/// factored form `Σ_j w_j |u_j^H p − t_j|² + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    pub a: CMat,
    pub b: CVec,
    pub constant: f64,
    pub squares: Vec<SquareTerm>,
    /// Constant left over after the squares.
    pub offset: f64,
}

impl QuadForm {
    fn from_squares(n: usize, squares: Vec<SquareTerm>, offset: f64) -> Self {
        let mut a = CMat::zeros(n, n);
        let mut b = CVec::zeros(n);
        let mut constant = offset;
        for t in &squares {
            a += outer(&t.u) * C64::new(t.weight, 0.0);
            b -= &t.u * (t.target * t.weight);
            constant += t.weight * t.target.norm_sqr();
        }
        Self { a, b, constant, squares, offset }
    }

    /// Value from the expanded coefficients.
    pub fn eval(&self, p: &CVec) -> f64 {
        p.dotc(&(&self.a * p)).re + 2.0 * self.b.dotc(p).re + self.constant
    }

    /// Value from the factored form (no cancellation between the terms).
    pub fn eval_factored(&self, p: &CVec) -> f64 {
        self.offset + self.squares.iter().map(|t| t.weight * (t.u.dotc(p) - t.target).norm_sqr()).sum::<f64>()
    }
}

/// AWMSE quadratics of all streams.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamQuadratics {
    pub users: Vec<QuadForm>,
    pub cs: QuadForm,
    pub sensing: QuadForm,
}

pub fn mmse_receivers(model: &SystemModel, p: &CVec) -> Result<(Vec<CVec>, C64, CVec)> {
    let cfg = model.cfg;
    let ch = model.ch;
    let pu = cfg.user_tx_power;
    let mut users = Vec::with_capacity(model.n_users());
    for (k, h) in ch.uplink_channels.iter().enumerate() {
        let total = model.interference_covariance(k, p)? + outer(h) * C64::new(pu, 0.0);
        users.push(hpd_solve(&total, h)? * C64::new(pu.sqrt(), 0.0));
    }
    let a = ch.bs_cs_channel.dotc(p);
    let cs = a / (a.norm_sqr() + cfg.noise_power_cs);
    let hs_p = &ch.target_matrix * p;
    let total = model.sensing_covariance(p) + outer(&hs_p);
    let sensing = hpd_solve(&total, &hs_p)?;
    Ok((users, cs, sensing))
}

/// Minimum MSEs in closed (Woodbury) form; each equals `2^{-R}` of its stream.
pub fn mmse_errors(model: &SystemModel, p: &CVec) -> Result<StreamValues> {
    let users = model.uplink_rates(p)?.iter().map(|r| 2f64.powf(-r)).collect();
    let cs = 1.0 / (1.0 + model.ch.bs_cs_channel.dotc(p).norm_sqr() / model.cfg.noise_power_cs);
    let sensing = 1.0 / (1.0 + model.sensing_sinr(p)?);
    Ok(StreamValues { users, cs, sensing })
}

/// MSEs of the given receivers, evaluated directly from signal and interference powers.
pub fn mse(model: &SystemModel, p: &CVec, state: &WmmseState) -> Result<StreamValues> {
    let cfg = model.cfg;
    let ch = model.ch;
    let one = C64::new(1.0, 0.0);
    let mut users = Vec::with_capacity(model.n_users());
    for (k, h) in ch.uplink_channels.iter().enumerate() {
        let w = &state.user_receivers[k];
        let r = model.interference_covariance(k, p)?;
        let gain = w.dotc(h) * cfg.user_tx_power.sqrt();
        users.push((gain - one).norm_sqr() + w.dotc(&(&r * w)).re);
    }
    let wd = state.cs_receiver;
    let a = ch.bs_cs_channel.dotc(p);
    let cs = (wd.conj() * a - one).norm_sqr() + wd.norm_sqr() * cfg.noise_power_cs;
    let ws = &state.sensing_receiver;
    let gain = ws.dotc(&(&ch.target_matrix * p));
    let sensing = (gain - one).norm_sqr() + ws.dotc(&(model.sensing_covariance(p) * ws)).re;
    Ok(StreamValues { users, cs, sensing })
}

pub fn weights_from_errors(errors: &StreamValues) -> StreamValues {
    errors.map(|e| 1.0 / (e * LN_2))
}

pub fn optimal_weights(model: &SystemModel, p: &CVec) -> Result<StreamValues> {
    Ok(weights_from_errors(&mmse_errors(model, p)?))
}

/// Closed-form optimal weights and receivers at `p`.
pub fn optimal_state(model: &SystemModel, p: &CVec) -> Result<WmmseState> {
    let (user_receivers, cs_receiver, sensing_receiver) = mmse_receivers(model, p)?;
    let w = optimal_weights(model, p)?;
    Ok(WmmseState {
        user_receivers,
        cs_receiver,
        sensing_receiver,
        user_weights: w.users,
        cs_weight: w.cs,
        sensing_weight: w.sensing,
    })
}

fn check_weights(state: &WmmseState) -> Result<()> {
    let all = state.user_weights.iter().chain([&state.cs_weight, &state.sensing_weight]);
    for &w in all {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidArgument(format!("AWMSE weights must be positive, got {w}")));
        }
    }
    Ok(())
}

pub fn awmse_scalar(weight: f64, error: f64) -> f64 {
    weight * error - weight.log2()
}

/// AWMSEs `ϖ e − log2 ϖ` at the state's (not necessarily optimal) receivers and weights.
pub fn awmse(model: &SystemModel, p: &CVec, state: &WmmseState) -> Result<StreamValues> {
    check_weights(state)?;
    let e = mse(model, p, state)?;
    Ok(StreamValues {
        users: e.users.iter().zip(&state.user_weights).map(|(&e, &w)| awmse_scalar(w, e)).collect(),
        cs: awmse_scalar(state.cs_weight, e.cs),
        sensing: awmse_scalar(state.sensing_weight, e.sensing),
    })
}

/// Expansion of every AWMSE as a quadratic in `p` at fixed weights and receivers.
pub fn awmse_quadratics(model: &SystemModel, state: &WmmseState) -> Result<StreamQuadratics> {
    check_weights(state)?;
    let cfg = model.cfg;
    let ch = model.ch;
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let n = cfg.n_antennas;
    let g_adj = model.echo_matrix().adjoint();

    let users = (0..model.n_users())
        .map(|k| {
            let w = &state.user_receivers[k];
            let varpi = state.user_weights[k];
            let h = &ch.uplink_channels[k];
            let base = model.user_base_covariance(k);
            let e0 = (w.dotc(h) * cfg.user_tx_power.sqrt() - one).norm_sqr() + w.dotc(&(base * w)).re;
            let q = &g_adj * w;
            QuadForm::from_squares(n, vec![SquareTerm { u: q, target: zero, weight: varpi }], varpi * e0 - varpi.log2())
        })
        .collect();

    let wd = state.cs_receiver;
    let varpi = state.cs_weight;
    let hd = &ch.bs_cs_channel;
    let cs = QuadForm::from_squares(
        n,
        vec![SquareTerm { u: hd * wd, target: one, weight: varpi }],
        varpi * wd.norm_sqr() * cfg.noise_power_cs - varpi.log2(),
    );

    let ws = &state.sensing_receiver;
    let varpi = state.sensing_weight;
    let u = ch.target_matrix.adjoint() * ws;
    let v = ch.clutter_matrix.adjoint() * ws;
    let e0 = ws.dotc(&(model.sensing_base_covariance() * ws)).re;
    let sensing = QuadForm::from_squares(
        n,
        vec![SquareTerm { u, target: one, weight: varpi }, SquareTerm { u: v, target: zero, weight: varpi }],
        varpi * e0 - varpi.log2(),
    );

    Ok(StreamQuadratics { users, cs, sensing })
}
