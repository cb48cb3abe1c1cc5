//! Physical scenario, model parameters and seeded channel realizations.
//!
//! All quantities are stored in linear SI units (watts, meters, hertz, radians).
//! Channel draws are a pure function of `(seed, draw_index)`: every random
//! component (each user channel, the BS-CS channel, the reflection phases)
//! reads from its own block of a ChaCha keystream, so a user's channel does not
//! change when other users are added or removed.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};

/// Parameters of the two alternating-optimization algorithms and the inner solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmParams {
    /// Relative objective change that ends the outer loops.
    pub rel_tol: f64,
    pub partial_max_iter: usize,
    pub binary_max_iter: usize,
    /// Constraint-violation threshold for the ADMM loop.
    pub violation_tol: f64,
    /// ADMM penalty parameters.
    pub rho: [f64; 4],
    /// Below this magnitude of `m_k` (or `1 - m_k`) the matching rate is a dummy variable.
    pub dummy_threshold: f64,
    /// Duality-gap tolerance of the interior-point solver.
    pub solver_tol: f64,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            rel_tol: 1e-4,
            partial_max_iter: 100,
            binary_max_iter: 300,
            violation_tol: 1e-3,
            rho: [1.0, 1.0, 0.1, 0.1],
            dummy_threshold: 1e-6,
            solver_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    /// Clutter directions in radians.
    pub clutter_angles: Vec<f64>,
    /// Target direction in radians.
    pub target_angle: f64,
    /// BS-user distances in meters.
    pub user_distances: Vec<f64>,
    /// BS-target (index 0) and BS-clutter distances in meters.
    pub sensing_distances: Vec<f64>,
    /// Magnitudes of the reflection coefficients, target first.
    pub reflection_magnitudes: Vec<f64>,
    /// BS-CS distance in meters.
    pub bs_cs_distance: f64,
    /// User transmit power in watts.
    pub user_tx_power: f64,
    /// Total BS power (transmit plus computing) in watts.
    pub bs_power_budget: f64,
    pub noise_power_bs: f64,
    pub noise_power_cs: f64,
    /// Hertz.
    pub bandwidth: f64,
    pub cycles_per_bit: f64,
    /// CPU power factor so that computing power is `kappa * f^3`.
    pub cpu_power_factor: f64,
    pub user_weights: Vec<f64>,
    /// Antenna spacing over wavelength.
    pub antenna_spacing_ratio: f64,
    /// Minimum sensing SINR, linear.
    pub sensing_sinr_min: f64,
    pub seed: u64,
    #[serde(default)]
    pub algorithm: AlgorithmParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let deg = PI / 180.0;
        Self {
            n_antennas: 8,
            n_users: 3,
            clutter_angles: vec![-60.0 * deg, -30.0 * deg, 30.0 * deg, 60.0 * deg],
            target_angle: 0.0,
            user_distances: vec![60.0; 3],
            sensing_distances: vec![50.0; 5],
            reflection_magnitudes: vec![1.0; 5],
            bs_cs_distance: 80.0,
            user_tx_power: 0.1,
            bs_power_budget: 1.0,
            noise_power_bs: dbm_to_watts(-80.0),
            noise_power_cs: dbm_to_watts(-80.0),
            bandwidth: 30e6,
            cycles_per_bit: 3e3,
            cpu_power_factor: 1e-26,
            user_weights: vec![1.0; 3],
            antenna_spacing_ratio: 0.5,
            sensing_sinr_min: db_to_linear(30.0),
            seed: 0,
            algorithm: AlgorithmParams::default(),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

impl ScenarioConfig {
    pub fn n_clutters(&self) -> usize {
        self.clutter_angles.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let m = self.n_clutters();
        if self.n_antennas == 0 {
            return bad("n_antennas must be at least 1".into());
        }
        if self.n_users == 0 {
            return bad("n_users must be at least 1".into());
        }
        if self.user_distances.len() != self.n_users {
            return bad(format!(
                "user_distances has {} entries, expected {}",
                self.user_distances.len(),
                self.n_users
            ));
        }
        if self.user_weights.len() != self.n_users {
            return bad(format!(
                "user_weights has {} entries, expected {}",
                self.user_weights.len(),
                self.n_users
            ));
        }
        if self.sensing_distances.len() != m + 1 {
            return bad(format!(
                "sensing_distances has {} entries, expected {} (target plus clutters)",
                self.sensing_distances.len(),
                m + 1
            ));
        }
        if self.reflection_magnitudes.len() != m + 1 {
            return bad(format!(
                "reflection_magnitudes has {} entries, expected {}",
                self.reflection_magnitudes.len(),
                m + 1
            ));
        }
        let positive = [
            ("bs_cs_distance", self.bs_cs_distance),
            ("user_tx_power", self.user_tx_power),
            ("bs_power_budget", self.bs_power_budget),
            ("noise_power_bs", self.noise_power_bs),
            ("noise_power_cs", self.noise_power_cs),
            ("bandwidth", self.bandwidth),
            ("cycles_per_bit", self.cycles_per_bit),
            ("cpu_power_factor", self.cpu_power_factor),
            ("antenna_spacing_ratio", self.antenna_spacing_ratio),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.user_distances.iter().chain(&self.sensing_distances).any(|d| !(*d > 0.0)) {
            return bad("all distances must be positive".into());
        }
        if self.user_weights.iter().any(|w| !(*w > 0.0)) {
            return bad("user weights must be positive".into());
        }
        if self.reflection_magnitudes.iter().any(|b| !(*b >= 0.0)) {
            return bad("reflection magnitudes must be nonnegative".into());
        }
        if !(self.sensing_sinr_min >= 0.0) {
            return bad("sensing_sinr_min must be nonnegative".into());
        }
        let a = &self.algorithm;
        if a.rho.iter().any(|r| !(*r > 0.0)) {
            return bad("ADMM penalty parameters must be positive".into());
        }
        if !(a.rel_tol > 0.0 && a.violation_tol > 0.0 && a.solver_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }

    /// Copy of this configuration with `k` users; distances and weights are
    /// extended by cycling the existing lists.
    pub fn with_users(&self, k: usize) -> ScenarioConfig {
        let cycle = |v: &[f64]| (0..k).map(|i| v[i % v.len()]).collect::<Vec<_>>();
        ScenarioConfig {
            n_users: k,
            user_distances: cycle(&self.user_distances),
            user_weights: cycle(&self.user_weights),
            ..self.clone()
        }
    }

    pub fn user_path_loss(&self, k: usize) -> f64 {
        path_loss_linear(self.user_distances[k], false).expect("validated distance")
    }

    pub fn sensing_path_loss(&self, m: usize) -> f64 {
        path_loss_linear(self.sensing_distances[m], true).expect("validated distance")
    }

    pub fn target_steering(&self) -> CVec {
        steering_vector(self.target_angle, self.n_antennas, self.antenna_spacing_ratio)
            .expect("validated antenna count")
    }

    /// Angles of target (index 0) and clutters.
    pub fn sensing_angles(&self) -> Vec<f64> {
        std::iter::once(self.target_angle)
            .chain(self.clutter_angles.iter().copied())
            .collect()
    }
}

/// ULA steering vector with entries `exp(j 2π (d/λ) i sin θ)`.
pub fn steering_vector(theta: f64, n: usize, spacing_ratio: f64) -> Result<CVec> {
    if n == 0 {
        return Err(Error::InvalidArgument("steering vector needs at least one antenna".into()));
    }
    let phase = 2.0 * PI * spacing_ratio * theta.sin();
    Ok(CVec::from_fn(n, |i, _| {
        if i == 0 {
            C64::new(1.0, 0.0)
        } else {
            C64::from_polar(1.0, phase * i as f64)
        }
    }))
}

/// Linear path loss `10^((30 + 30 log10 D)/10)`, with `D` doubled for round trips.
pub fn path_loss_linear(distance: f64, round_trip: bool) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {distance}")));
    }
    let d = if round_trip { 2.0 * distance } else { distance };
    Ok(db_to_linear(30.0 + 30.0 * d.log10()))
}

/// One draw of every channel in the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `h_{u,k}` for every user.
    pub uplink_channels: Vec<CVec>,
    /// `h_d`, BS to CS.
    pub bs_cs_channel: CVec,
    /// `β_m`, target first.
    pub reflection_factors: Vec<C64>,
    /// `H_s = β_0 a(θ0) a(θ0)^T`.
    pub target_matrix: CMat,
    /// `H_c = Σ_m β_m a(θ_m) a(θ_m)^T`.
    pub clutter_matrix: CMat,
}

const STREAM_BS_CS: u64 = 0;
const STREAM_REFLECTIONS: u64 = 1;
const STREAM_USER_BASE: u64 = 16;

/// Generator for one random component of one draw.
fn component_rng(seed: u64, draw_index: u64, component: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw_index);
    rng.set_word_pos((component as u128) << 32);
    rng
}

fn rayleigh_vector(rng: &mut ChaCha8Rng, n: usize, path_loss: f64) -> CVec {
    let scale = (0.5 / path_loss).sqrt();
    CVec::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    })
}

pub fn sample_channels(cfg: &ScenarioConfig, draw_index: u64) -> Result<ChannelRealization> {
    cfg.validate()?;
    let n = cfg.n_antennas;

    let uplink_channels = (0..cfg.n_users)
        .map(|k| {
            let mut rng = component_rng(cfg.seed, draw_index, STREAM_USER_BASE + k as u64);
            rayleigh_vector(&mut rng, n, cfg.user_path_loss(k))
        })
        .collect();

    let mut rng = component_rng(cfg.seed, draw_index, STREAM_BS_CS);
    let d_loss = path_loss_linear(cfg.bs_cs_distance, false)?;
    let bs_cs_channel = rayleigh_vector(&mut rng, n, d_loss);

    let mut rng = component_rng(cfg.seed, draw_index, STREAM_REFLECTIONS);
    let reflection_factors: Vec<C64> = (0..=cfg.n_clutters())
        .map(|m| {
            let phase = rng.random::<f64>() * 2.0 * PI;
            let mag = cfg.reflection_magnitudes[m] / cfg.sensing_path_loss(m).sqrt();
            C64::from_polar(mag, phase)
        })
        .collect();

    let angles = cfg.sensing_angles();
    let echo = |m: usize| -> Result<CMat> {
        let a = steering_vector(angles[m], n, cfg.antenna_spacing_ratio)?;
        Ok(&a * a.transpose() * reflection_factors[m])
    };
    let target_matrix = echo(0)?;
    let mut clutter_matrix = CMat::zeros(n, n);
    for m in 1..=cfg.n_clutters() {
        clutter_matrix += echo(m)?;
    }

    Ok(ChannelRealization {
        uplink_channels,
        bs_cs_channel,
        reflection_factors,
        target_matrix,
        clutter_matrix,
    })
}
