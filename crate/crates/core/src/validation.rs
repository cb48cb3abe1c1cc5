//! Closed-form identity checks on random instances.
//!
//! Each check compares two independent evaluations of the same quantity over
//! random channel draws and random beamformers and reports the worst error.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{CVec, C64};
use crate::rates::{receiver_sinr, DecodingOrder, MultipleAccess, SystemModel};
use crate::scenario::{sample_channels, ScenarioConfig};
use crate::wmmse::{awmse, mmse_errors, mse, optimal_state};

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    /// Largest error seen (absolute or relative, see `name`).
    pub worst: f64,
    pub tolerance: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

fn random_beamformer(rng: &mut ChaCha8Rng, n: usize, power: f64) -> CVec {
    let v = CVec::from_fn(n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let scale = (power / v.norm_squared()).sqrt();
    v * C64::new(scale, 0.0)
}

/// Runs every identity on `instances` draws of `cfg` with beamformers of random
/// direction and power in `(0, P_b]`.
pub fn identity_suite(cfg: &ScenarioConfig, instances: usize, seed: u64) -> Result<Vec<IdentityCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = 1.0 / LN_2 + LN_2.log2();
    let mut rate_mse: f64 = 0.0;
    let mut woodbury: f64 = 0.0;
    let mut rate_wmmse: f64 = 0.0;
    let mut mvdr: f64 = 0.0;
    let mut order_invariance: f64 = 0.0;
    let orders = DecodingOrder::all(cfg.n_users);
    for i in 0..instances {
        let ch = sample_channels(cfg, i as u64)?;
        let power = cfg.bs_power_budget * rng.random_range(0.01..1.0);
        let p = random_beamformer(&mut rng, cfg.n_antennas, power);
        let model = SystemModel::new(cfg, &ch, MultipleAccess::Noma, orders[i % orders.len()].clone())?;

        let state = optimal_state(&model, &p)?;
        let direct = mse(&model, &p, &state)?;
        let closed = mmse_errors(&model, &p)?;
        let rates = model.uplink_rates(&p)?;
        for (k, r) in rates.iter().enumerate() {
            rate_mse = rate_mse.max((r + direct.users[k].log2()).abs());
        }
        rate_mse = rate_mse
            .max((model.downlink_rate(&p) + direct.cs.log2()).abs())
            .max((model.sensing_rate(&p)? + direct.sensing.log2()).abs());
        for (a, b) in direct.iter().zip(closed.iter()) {
            woodbury = woodbury.max((a - b).abs());
        }

        let eps = awmse(&model, &p, &state)?;
        let all_rates = rates.iter().copied().chain([model.downlink_rate(&p), model.sensing_rate(&p)?]);
        for (e, r) in eps.iter().zip(all_rates) {
            rate_wmmse = rate_wmmse.max((e - (c - r)).abs());
        }

        let quad = model.sensing_sinr(&p)?;
        let ratio = receiver_sinr(&model.mvdr_receiver(&p)?, &p, &model);
        mvdr = mvdr.max((quad - ratio).abs() / quad.max(1e-300));

        let sums: Vec<f64> = orders
            .iter()
            .map(|o| -> Result<f64> {
                let m = SystemModel::new(cfg, &ch, MultipleAccess::Noma, o.clone())?;
                Ok(m.uplink_rates(&p)?.iter().sum())
            })
            .collect::<Result<_>>()?;
        let reference = sums[0];
        for s in &sums {
            order_invariance = order_invariance.max((s - reference).abs() / reference.abs().max(1e-300));
        }
    }
    Ok(vec![
        IdentityCheck { name: "rate equals -log2 of the MMSE (abs)", worst: rate_mse, tolerance: 1e-10 },
        IdentityCheck { name: "Woodbury MMSE equals direct MSE (abs)", worst: woodbury, tolerance: 1e-10 },
        IdentityCheck { name: "optimal AWMSE equals c - R (abs)", worst: rate_wmmse, tolerance: 1e-9 },
        IdentityCheck { name: "MVDR quadratic form equals ratio form (rel)", worst: mvdr, tolerance: 1e-9 },
        IdentityCheck { name: "sum rate is decoding-order invariant (rel)", worst: order_invariance, tolerance: 1e-9 },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities_hold_on_default_scenario() {
        let checks = identity_suite(&ScenarioConfig::default(), 20, 3).unwrap();
        for c in &checks {
            assert!(c.passed(), "{}: {:e}", c.name, c.worst);
        }
    }
}
