//! Closed-form communication and sensing quantities.
//!
//! Rates are spectral efficiencies in bit/s/Hz. [`SystemModel`] binds a channel
//! draw to a multiple-access scheme and a decoding order and caches the
//! beamformer-independent parts of every covariance.

use crate::error::{Error, Result};
use crate::linalg::{hpd_solve, inverse_quad_form, outer, scaled_identity, CMat, CVec, C64};
use crate::scenario::{ChannelRealization, ScenarioConfig};

/// How the BS separates the uplink offloading signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MultipleAccess {
    /// Successive interference cancellation in a fixed decoding order; the
    /// sensing receiver sees the echo only after all users are removed.
    Noma,
    /// Every user is decoded against all others; user signals also act as
    /// clutter for the sensing receiver.
    Sdma,
}

/// SIC decoding order; `position(k)` is the 0-based slot in which user `k` is decoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DecodingOrder {
    positions: Vec<usize>,
}

impl DecodingOrder {
    /// Builds an order from decode positions, rejecting anything that is not a permutation.
    pub fn new(positions: Vec<usize>) -> Result<Self> {
        let k = positions.len();
        let mut seen = vec![false; k];
        for &p in &positions {
            if p >= k || seen[p] {
                return Err(Error::InvalidArgument(format!(
                    "decode positions {positions:?} are not a permutation of 0..{k}"
                )));
            }
            seen[p] = true;
        }
        Ok(Self { positions })
    }

    pub fn identity(k: usize) -> Self {
        Self { positions: (0..k).collect() }
    }

    /// Builds an order from the sequence of users in decoding order.
    pub fn from_sequence(sequence: &[usize]) -> Result<Self> {
        let k = sequence.len();
        let mut positions = vec![usize::MAX; k];
        for (slot, &user) in sequence.iter().enumerate() {
            if user >= k || positions[user] != usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "decode sequence {sequence:?} is not a permutation of 0..{k}"
                )));
            }
            positions[user] = slot;
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, user: usize) -> usize {
        self.positions[user]
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Users listed in the order they are decoded.
    pub fn sequence(&self) -> Vec<usize> {
        let mut seq = vec![0; self.positions.len()];
        for (user, &slot) in self.positions.iter().enumerate() {
            seq[slot] = user;
        }
        seq
    }

    /// All `k!` orders, in lexicographic order of their decode sequences.
    pub fn all(k: usize) -> Vec<DecodingOrder> {
        let mut out = Vec::new();
        let mut seq: Vec<usize> = (0..k).collect();
        permute(&mut seq, 0, &mut out);
        out.sort_by(|a, b| a.sequence().cmp(&b.sequence()));
        out
    }
}

fn permute(seq: &mut Vec<usize>, start: usize, out: &mut Vec<DecodingOrder>) {
    if start + 1 >= seq.len() {
        out.push(DecodingOrder::from_sequence(seq).expect("permutation"));
        return;
    }
    for i in start..seq.len() {
        seq.swap(start, i);
        permute(seq, start + 1, out);
        seq.swap(start, i);
    }
}

/// A channel draw viewed through one access scheme and decoding order.
#[derive(Debug, Clone)]
pub struct SystemModel<'a> {
    pub cfg: &'a ScenarioConfig,
    pub ch: &'a ChannelRealization,
    pub access: MultipleAccess,
    pub order: DecodingOrder,
    /// `H_s + H_c`, the BS self-echo seen by the uplink receiver.
    echo: CMat,
    /// Per-user interference-plus-noise covariance without the echo term.
    user_bases: Vec<CMat>,
    /// Sensing clutter-plus-noise covariance without the `H_c p` term.
    sensing_base: CMat,
}

impl<'a> SystemModel<'a> {
    pub fn new(
        cfg: &'a ScenarioConfig,
        ch: &'a ChannelRealization,
        access: MultipleAccess,
        order: DecodingOrder,
    ) -> Result<Self> {
        let k_users = ch.uplink_channels.len();
        if order.len() != k_users {
            return Err(Error::InvalidArgument(format!(
                "decoding order covers {} users, channel has {k_users}",
                order.len()
            )));
        }
        let n = cfg.n_antennas;
        let noise = scaled_identity(n, cfg.noise_power_bs);
        let pu = C64::new(cfg.user_tx_power, 0.0);
        let user_terms: Vec<CMat> = ch.uplink_channels.iter().map(|h| outer(h) * pu).collect();
        let user_bases = (0..k_users)
            .map(|k| {
                let mut r = noise.clone();
                for i in 0..k_users {
                    let interferes = match access {
                        MultipleAccess::Noma => order.position(i) > order.position(k),
                        MultipleAccess::Sdma => i != k,
                    };
                    if interferes {
                        r += &user_terms[i];
                    }
                }
                r
            })
            .collect();
        let mut sensing_base = noise;
        if access == MultipleAccess::Sdma {
            for t in &user_terms {
                sensing_base += t;
            }
        }
        Ok(Self {
            cfg,
            ch,
            access,
            order,
            echo: &ch.target_matrix + &ch.clutter_matrix,
            user_bases,
            sensing_base,
        })
    }

    pub fn noma(cfg: &'a ScenarioConfig, ch: &'a ChannelRealization, order: DecodingOrder) -> Result<Self> {
        Self::new(cfg, ch, MultipleAccess::Noma, order)
    }

    pub fn n_users(&self) -> usize {
        self.user_bases.len()
    }

    fn check_user(&self, k: usize) -> Result<()> {
        if k >= self.n_users() {
            return Err(Error::InvalidArgument(format!(
                "user index {k} out of range for {} users",
                self.n_users()
            )));
        }
        Ok(())
    }

    /// `H_s + H_c`.
    pub fn echo_matrix(&self) -> &CMat {
        &self.echo
    }

    /// Interference-plus-noise covariance of user `k` without the echo term.
    pub fn user_base_covariance(&self, k: usize) -> &CMat {
        &self.user_bases[k]
    }

    /// Sensing covariance without the clutter echo of `p`.
    pub fn sensing_base_covariance(&self) -> &CMat {
        &self.sensing_base
    }

    pub fn interference_covariance(&self, k: usize, p: &CVec) -> Result<CMat> {
        self.check_user(k)?;
        Ok(&self.user_bases[k] + outer(&(&self.echo * p)))
    }

    pub fn uplink_rate(&self, k: usize, p: &CVec) -> Result<f64> {
        let r = self.interference_covariance(k, p)?;
        let h = &self.ch.uplink_channels[k];
        let snr = self.cfg.user_tx_power * inverse_quad_form(&r, h)?;
        Ok((1.0 + snr.max(0.0)).log2())
    }

    pub fn uplink_rates(&self, p: &CVec) -> Result<Vec<f64>> {
        (0..self.n_users()).map(|k| self.uplink_rate(k, p)).collect()
    }

    pub fn downlink_rate(&self, p: &CVec) -> f64 {
        downlink_rate_raw(p, self.ch, self.cfg)
    }

    pub fn sensing_covariance(&self, p: &CVec) -> CMat {
        &self.sensing_base + outer(&(&self.ch.clutter_matrix * p))
    }

    pub fn sensing_sinr(&self, p: &CVec) -> Result<f64> {
        let hs_p = &self.ch.target_matrix * p;
        if hs_p.iter().all(|z| *z == C64::new(0.0, 0.0)) {
            return Ok(0.0);
        }
        Ok(inverse_quad_form(&self.sensing_covariance(p), &hs_p)?.max(0.0))
    }

    /// Sensing rate `log2(1 + γ_s)` of the equivalent virtual stream.
    pub fn sensing_rate(&self, p: &CVec) -> Result<f64> {
        Ok((1.0 + self.sensing_sinr(p)?).log2())
    }

    pub fn mvdr_receiver(&self, p: &CVec) -> Result<CVec> {
        let hs_p = &self.ch.target_matrix * p;
        let y = hpd_solve(&self.sensing_covariance(p), &hs_p)?;
        let gain = hs_p.dotc(&y).re;
        if !(gain > 0.0) || hs_p.norm() == 0.0 {
            return Err(Error::DegenerateSensing);
        }
        Ok(y / C64::new(gain, 0.0))
    }
}

fn downlink_rate_raw(p: &CVec, ch: &ChannelRealization, cfg: &ScenarioConfig) -> f64 {
    let g = ch.bs_cs_channel.dotc(p).norm_sqr();
    (1.0 + g / cfg.noise_power_cs).log2()
}

/// Sensing SINR of an arbitrary receiver, `|w^H H_s p|^2 / (w^H R w)`.
pub fn receiver_sinr(w: &CVec, p: &CVec, model: &SystemModel) -> f64 {
    let signal = w.dotc(&(&model.ch.target_matrix * p)).norm_sqr();
    let noise = w.dotc(&(model.sensing_covariance(p) * w)).re;
    signal / noise
}

pub fn noma_interference_covariance(
    k: usize,
    order: &DecodingOrder,
    p: &CVec,
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
) -> Result<CMat> {
    SystemModel::noma(cfg, ch, order.clone())?.interference_covariance(k, p)
}

pub fn noma_uplink_rate(
    k: usize,
    order: &DecodingOrder,
    p: &CVec,
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
) -> Result<f64> {
    SystemModel::noma(cfg, ch, order.clone())?.uplink_rate(k, p)
}

pub fn downlink_rate(p: &CVec, ch: &ChannelRealization, cfg: &ScenarioConfig) -> f64 {
    downlink_rate_raw(p, ch, cfg)
}

pub fn clutter_covariance(p: &CVec, ch: &ChannelRealization, cfg: &ScenarioConfig) -> CMat {
    scaled_identity(cfg.n_antennas, cfg.noise_power_bs) + outer(&(&ch.clutter_matrix * p))
}

pub fn mvdr_receiver(p: &CVec, ch: &ChannelRealization, cfg: &ScenarioConfig) -> Result<CVec> {
    let k = ch.uplink_channels.len();
    SystemModel::noma(cfg, ch, DecodingOrder::identity(k))?.mvdr_receiver(p)
}

pub fn sensing_sinr(p: &CVec, ch: &ChannelRealization, cfg: &ScenarioConfig) -> Result<f64> {
    let k = ch.uplink_channels.len();
    SystemModel::noma(cfg, ch, DecodingOrder::identity(k))?.sensing_sinr(p)
}

pub fn sdma_uplink_rate(k: usize, p: &CVec, ch: &ChannelRealization, cfg: &ScenarioConfig) -> Result<f64> {
    let order = DecodingOrder::identity(ch.uplink_channels.len());
    SystemModel::new(cfg, ch, MultipleAccess::Sdma, order)?.uplink_rate(k, p)
}

pub fn sdma_sensing_sinr(p: &CVec, ch: &ChannelRealization, cfg: &ScenarioConfig) -> Result<f64> {
    let order = DecodingOrder::identity(ch.uplink_channels.len());
    SystemModel::new(cfg, ch, MultipleAccess::Sdma, order)?.sensing_sinr(p)
}
