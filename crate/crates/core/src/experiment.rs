//! Benchmark schemes, Monte Carlo sweeps, feasibility study and beampatterns.
//!
//! Sweep output is deterministic: channel draw `t` is shared by every grid
//! value and scheme, jobs may run on several threads, and rows are always
//! written in (value, trial, scheme) order. Wall-clock times are kept out of
//! the CSV unless explicitly requested.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::binary::{solve_binary_from, BinarySolution};
use crate::error::{Error, Result};
use crate::linalg::{CVec, C64};
use crate::partial::{initialize_beamformer, propose_decoding_order, solve_partial_pinned, PartialSolution, RatePins};
use crate::rates::{DecodingOrder, MultipleAccess, SystemModel};
use crate::scenario::{db_to_linear, dbm_to_watts, sample_channels, steering_vector, ChannelRealization, ScenarioConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Scheme {
    NomaPartial,
    NomaBinary,
    SdmaPartial,
    SdmaBinary,
    BsOnly,
    CsOnly,
}

impl Scheme {
    pub const ALL: [Scheme; 6] =
        [Scheme::NomaPartial, Scheme::NomaBinary, Scheme::SdmaPartial, Scheme::SdmaBinary, Scheme::BsOnly, Scheme::CsOnly];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::NomaPartial => "noma-partial",
            Scheme::NomaBinary => "noma-binary",
            Scheme::SdmaPartial => "sdma-partial",
            Scheme::SdmaBinary => "sdma-binary",
            Scheme::BsOnly => "bs-only",
            Scheme::CsOnly => "cs-only",
        }
    }

    pub fn access(self) -> MultipleAccess {
        match self {
            Scheme::SdmaPartial | Scheme::SdmaBinary => MultipleAccess::Sdma,
            _ => MultipleAccess::Noma,
        }
    }

    fn partial_pins(self, k: usize) -> RatePins {
        match self {
            Scheme::BsOnly => RatePins::bs_only(k),
            Scheme::CsOnly => RatePins::cs_only(k),
            _ => RatePins::none(k),
        }
    }

    fn is_binary(self) -> bool {
        matches!(self, Scheme::NomaBinary | Scheme::SdmaBinary)
    }

    /// Scheme whose partial solution warm-starts this one.
    fn warm_start(self) -> Option<Scheme> {
        match self {
            Scheme::NomaBinary => Some(Scheme::NomaPartial),
            Scheme::SdmaBinary => Some(Scheme::SdmaPartial),
            _ => None,
        }
    }

    /// Comma-separated list of names, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<Scheme>> {
        if s.trim() == "all" {
            return Ok(Scheme::ALL.to_vec());
        }
        let mut out: Vec<Scheme> = Vec::new();
        for part in s.split(',') {
            let scheme: Scheme = part.trim().parse()?;
            if !out.contains(&scheme) {
                out.push(scheme);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub enum SchemeOutcome {
    Partial(PartialSolution),
    Binary(BinarySolution),
}

impl SchemeOutcome {
    /// Weighted computation rate in bit/s (the effective rate for binary schemes).
    pub fn rate(&self) -> f64 {
        match self {
            SchemeOutcome::Partial(s) => s.objective,
            SchemeOutcome::Binary(s) => s.effective_rate,
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            SchemeOutcome::Partial(s) => s.iterations,
            SchemeOutcome::Binary(s) => s.iterations,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            SchemeOutcome::Partial(s) => s.converged,
            SchemeOutcome::Binary(s) => s.converged,
        }
    }

    pub fn beamformer(&self) -> &CVec {
        match self {
            SchemeOutcome::Partial(s) => &s.p,
            SchemeOutcome::Binary(s) => &s.p,
        }
    }
}

/// Runs one scheme on one channel draw.
pub fn run_benchmark(
    scheme: Scheme,
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    order: &DecodingOrder,
) -> Result<SchemeOutcome> {
    let model = SystemModel::new(cfg, ch, scheme.access(), order.clone())?;
    let partial = solve_partial_pinned(&model, &scheme.partial_pins(cfg.n_users))?;
    if scheme.is_binary() {
        Ok(SchemeOutcome::Binary(solve_binary_from(&model, partial)?))
    } else {
        Ok(SchemeOutcome::Partial(partial))
    }
}

/// Runs several schemes on one draw; binary schemes reuse the partial solution
/// of the same access scheme when it is also requested.
pub fn run_schemes(
    schemes: &[Scheme],
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    order: &DecodingOrder,
) -> Vec<(Scheme, Result<SchemeOutcome>, f64)> {
    let mut out: Vec<(Scheme, Result<SchemeOutcome>, f64)> = Vec::new();
    for &scheme in schemes {
        let start = Instant::now();
        let shared = scheme.warm_start().and_then(|w| {
            out.iter().find_map(|(s, r, t)| match (s == &w, r) {
                (true, Ok(SchemeOutcome::Partial(p))) => Some((p.clone(), *t)),
                _ => None,
            })
        });
        let (result, extra) = match shared {
            Some((partial, t)) => {
                let r = SystemModel::new(cfg, ch, scheme.access(), order.clone())
                    .and_then(|m| solve_binary_from(&m, partial))
                    .map(SchemeOutcome::Binary);
                (r, t)
            }
            None => (run_benchmark(scheme, ch, cfg, order), 0.0),
        };
        out.push((scheme, result, start.elapsed().as_secs_f64() + extra));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepParameter {
    /// Minimum sensing SINR in dB.
    SensingSinrDb,
    /// BS power budget in dBm.
    PowerBudgetDbm,
    /// Number of users.
    Users,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::SensingSinrDb => "sensing_sinr_min_db",
            SweepParameter::PowerBudgetDbm => "bs_power_budget_dbm",
            SweepParameter::Users => "n_users",
        }
    }

    /// `base` with the swept parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let cfg = match self {
            SweepParameter::SensingSinrDb => ScenarioConfig { sensing_sinr_min: db_to_linear(value), ..base.clone() },
            SweepParameter::PowerBudgetDbm => ScenarioConfig { bs_power_budget: dbm_to_watts(value), ..base.clone() },
            SweepParameter::Users => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::InvalidArgument(format!("user count must be a positive integer, got {value}")));
                }
                base.with_users(value as usize)
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Inclusive grid `start:step:stop`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("grid must be start:step:stop, got {s:?}"));
    let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    let [start, step, stop] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(bad());
    }
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub seed: u64,
    /// Scenario the grid values are applied to.
    pub base: ScenarioConfig,
    /// Worker threads; `0` uses the available parallelism.
    pub workers: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("sweep grid is empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("sweep needs at least one trial".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one scheme".into()));
        }
        for &v in &self.grid {
            self.parameter.apply(&self.base, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowStatus {
    Ok,
    Infeasible,
    Failed,
}

impl RowStatus {
    fn name(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub value: f64,
    pub trial: usize,
    /// bit/s; `None` unless the run succeeded.
    pub rate: Option<f64>,
    pub feasible: bool,
    pub iterations: usize,
    pub converged: bool,
    pub status: RowStatus,
    pub failure: Option<String>,
    pub wall_time: f64,
}

fn row_from(scheme: Scheme, value: f64, trial: usize, result: &Result<SchemeOutcome>, wall_time: f64) -> SweepRow {
    let base = SweepRow {
        scheme,
        value,
        trial,
        rate: None,
        feasible: false,
        iterations: 0,
        converged: false,
        status: RowStatus::Failed,
        failure: None,
        wall_time,
    };
    match result {
        Ok(o) => SweepRow {
            rate: Some(o.rate()),
            feasible: true,
            iterations: o.iterations(),
            converged: o.converged(),
            status: RowStatus::Ok,
            ..base
        },
        Err(e @ Error::InfeasibleSensing { .. }) => {
            SweepRow { status: RowStatus::Infeasible, failure: Some(e.to_string()), ..base }
        }
        Err(e) => SweepRow { failure: Some(e.to_string()), ..base },
    }
}

/// Runs `jobs` on up to `workers` threads and returns results in job order.
fn run_parallel<J: Sync, R: Send>(jobs: &[J], workers: usize, f: impl Fn(&J) -> R + Sync) -> Vec<R> {
    let workers = match workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        w => w,
    }
    .min(jobs.len())
    .max(1);
    if workers == 1 {
        return jobs.iter().map(&f).collect();
    }
    let f = &f;
    let mut parts: Vec<Vec<(usize, R)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || jobs.iter().enumerate().skip(w).step_by(workers).map(|(i, j)| (i, f(j))).collect())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut all: Vec<(usize, R)> = parts.drain(..).flatten().collect();
    all.sort_by_key(|(i, _)| *i);
    all.into_iter().map(|(_, r)| r).collect()
}

/// Every (value, trial) pair with all requested schemes.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let jobs: Vec<(f64, usize)> =
        spec.grid.iter().flat_map(|&v| (0..spec.trials).map(move |t| (v, t))).collect();
    let per_job = run_parallel(&jobs, spec.workers, |&(value, trial)| -> Result<Vec<SweepRow>> {
        let mut cfg = spec.parameter.apply(&spec.base, value)?;
        cfg.seed = spec.seed;
        let ch = sample_channels(&cfg, trial as u64)?;
        let order = propose_decoding_order(&cfg);
        Ok(run_schemes(&spec.schemes, &ch, &cfg, &order)
            .iter()
            .map(|(s, r, t)| row_from(*s, value, trial, r, *t))
            .collect())
    });
    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r?);
    }
    Ok(rows)
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

/// CSV with a `#schema_version` comment line; `wall_time_s` only when `timing` is set.
pub fn write_sweep_csv<W: Write>(mut out: W, parameter: SweepParameter, rows: &[SweepRow], timing: bool) -> Result<()> {
    writeln!(out, "#schema_version={SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["scheme", parameter.name(), "trial", "rate_bps", "feasible", "iterations", "converged", "status", "failure"];
    if timing {
        header.push("wall_time_s");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.scheme.name().to_string(),
            fmt_value(r.value),
            r.trial.to_string(),
            r.rate.map_or(String::new(), |x| format!("{x:.9e}")),
            r.feasible.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.status.name().to_string(),
            r.failure.clone().unwrap_or_default(),
        ];
        if timing {
            rec.push(format!("{:.6}", r.wall_time));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub value: f64,
    /// Mean rate over draws feasible for every compared scheme, bit/s.
    pub mean_rate: Option<f64>,
    pub common_draws: usize,
    pub feasible_draws: usize,
    pub trials: usize,
}

/// Per (value, scheme) means restricted to draws where every scheme in `compare` succeeded.
pub fn summarize(rows: &[SweepRow], compare: &[Scheme]) -> Vec<SummaryRow> {
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.contains(&r.value) {
            values.push(r.value);
        }
    }
    let mut out = Vec::new();
    for &v in &values {
        let at: Vec<&SweepRow> = rows.iter().filter(|r| r.value == v).collect();
        let mut trials: Vec<usize> = at.iter().map(|r| r.trial).collect();
        trials.sort_unstable();
        trials.dedup();
        let common: Vec<usize> = trials
            .iter()
            .copied()
            .filter(|&t| {
                compare.iter().all(|s| at.iter().any(|r| r.trial == t && r.scheme == *s && r.rate.is_some()))
            })
            .collect();
        for &s in compare {
            let mine: Vec<&&SweepRow> = at.iter().filter(|r| r.scheme == s).collect();
            let rates: Vec<f64> =
                mine.iter().filter(|r| common.contains(&r.trial)).filter_map(|r| r.rate).collect();
            out.push(SummaryRow {
                scheme: s,
                value: v,
                mean_rate: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
                common_draws: common.len(),
                feasible_draws: mine.iter().filter(|r| r.rate.is_some()).count(),
                trials: mine.len(),
            });
        }
    }
    out
}

pub fn write_summary_csv<W: Write>(mut out: W, parameter: SweepParameter, rows: &[SummaryRow]) -> Result<()> {
    writeln!(out, "#schema_version={SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", parameter.name(), "mean_rate_bps", "common_draws", "feasible_draws", "trials"])?;
    for r in rows {
        w.write_record([
            r.scheme.name().to_string(),
            fmt_value(r.value),
            r.mean_rate.map_or(String::new(), |x| format!("{x:.9e}")),
            r.common_draws.to_string(),
            r.feasible_draws.to_string(),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityRow {
    pub access: &'static str,
    pub sensing_sinr_min_db: f64,
    pub n_users: usize,
    pub probability: f64,
    pub trials: usize,
}

/// Whether the target-aimed start meets the sensing requirement under `access`.
pub fn feasible_start_exists(cfg: &ScenarioConfig, ch: &ChannelRealization, access: MultipleAccess) -> Result<bool> {
    let model = SystemModel::new(cfg, ch, access, propose_decoding_order(cfg))?;
    Ok(model.sensing_sinr(&initialize_beamformer(cfg))? >= cfg.sensing_sinr_min)
}

/// Fraction of draws with a sensing-feasible start, for NOMA and SDMA, over
/// the SINR grid and user counts.
pub fn feasibility_study(
    cfg: &ScenarioConfig,
    gamma_grid_db: &[f64],
    user_counts: &[usize],
    trials: usize,
) -> Result<Vec<FeasibilityRow>> {
    if trials == 0 || gamma_grid_db.is_empty() || user_counts.is_empty() {
        return Err(Error::InvalidArgument("feasibility study needs trials, SINR values and user counts".into()));
    }
    let mut out = Vec::new();
    for &k in user_counts {
        let base = cfg.with_users(k);
        base.validate()?;
        // The start's SINR does not depend on the requirement: one draw serves every grid value.
        let mut sinr = [Vec::with_capacity(trials), Vec::with_capacity(trials)];
        for t in 0..trials {
            let ch = sample_channels(&base, t as u64)?;
            for (i, access) in [MultipleAccess::Noma, MultipleAccess::Sdma].into_iter().enumerate() {
                let model = SystemModel::new(&base, &ch, access, propose_decoding_order(&base))?;
                sinr[i].push(model.sensing_sinr(&initialize_beamformer(&base))?);
            }
        }
        for &g in gamma_grid_db {
            let need = db_to_linear(g);
            for (i, access) in ["noma", "sdma"].into_iter().enumerate() {
                let ok = sinr[i].iter().filter(|&&s| s >= need).count();
                out.push(FeasibilityRow {
                    access,
                    sensing_sinr_min_db: g,
                    n_users: k,
                    probability: ok as f64 / trials as f64,
                    trials,
                });
            }
        }
    }
    Ok(out)
}

pub fn write_feasibility_csv<W: Write>(mut out: W, rows: &[FeasibilityRow]) -> Result<()> {
    writeln!(out, "#schema_version={SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["access", "sensing_sinr_min_db", "n_users", "probability", "trials"])?;
    for r in rows {
        w.write_record([
            r.access.to_string(),
            fmt_value(r.sensing_sinr_min_db),
            r.n_users.to_string(),
            format!("{}", r.probability),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const BEAMPATTERN_POINTS: usize = 101;

/// Angles `−π/2 + iπ/100`, `i = 0..=100`.
pub fn beampattern_grid() -> Vec<f64> {
    (0..BEAMPATTERN_POINTS).map(|i| -PI / 2.0 + i as f64 * PI / 100.0).collect()
}

/// Normalized transmit-receive response `|w_sᴴ a(θ) a(θ)ᵀ p|²` on the grid.
pub fn beampattern(p: &CVec, w_s: &CVec, cfg: &ScenarioConfig) -> Result<Vec<(f64, f64)>> {
    if p.len() != cfg.n_antennas || w_s.len() != cfg.n_antennas {
        return Err(Error::InvalidArgument("beamformer and receiver must have one entry per antenna".into()));
    }
    let raw: Vec<(f64, f64)> = beampattern_grid()
        .into_iter()
        .map(|theta| {
            let a = steering_vector(theta, cfg.n_antennas, cfg.antenna_spacing_ratio)?;
            let tx: C64 = a.iter().zip(p.iter()).map(|(x, y)| x * y).sum();
            let rx = w_s.dotc(&a);
            Ok((theta, (rx * tx).norm_sqr()))
        })
        .collect::<Result<_>>()?;
    let peak = raw.iter().map(|r| r.1).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::DegeneratePattern);
    }
    Ok(raw.into_iter().map(|(t, v)| (t, v / peak)).collect())
}

/// Beampattern of `p` with the MVDR sensing receiver of `model`.
pub fn beampattern_for(model: &SystemModel, p: &CVec) -> Result<Vec<(f64, f64)>> {
    beampattern(p, &model.mvdr_receiver(p)?, model.cfg)
}

pub fn write_beampattern_csv<W: Write>(mut out: W, pattern: &[(f64, f64)]) -> Result<()> {
    writeln!(out, "#schema_version={SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta_rad", "theta_deg", "gain", "gain_db"])?;
    for &(t, g) in pattern {
        w.write_record([
            format!("{t:.12}"),
            format!("{:.6}", t.to_degrees()),
            format!("{g:.9e}"),
            format!("{:.6}", 10.0 * g.max(1e-300).log10()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
