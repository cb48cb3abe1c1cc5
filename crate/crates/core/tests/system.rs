use jcsmc::binary::{exhaustive_binary_oracle, solve_binary};
use jcsmc::experiment::{
    feasibility_study, run_benchmark, run_sweep, Scheme, SchemeOutcome, SweepParameter, SweepSpec,
};
use jcsmc::partial::{propose_decoding_order, solve_partial, solve_partial_pinned, RatePins};
use jcsmc::{sample_channels, DecodingOrder, MultipleAccess, ScenarioConfig, SystemModel};

fn rate(o: SchemeOutcome) -> f64 {
    o.rate()
}

#[test]
fn single_user_sdma_uplink_equals_noma() {
    // Without co-users both receivers see the same interference; only the
    // sensing stream differs, since SDMA leaves the user signal in the echo.
    let cfg = ScenarioConfig::default().with_users(1);
    let p = jcsmc::partial::initialize_beamformer(&cfg);
    for draw in 0..3 {
        let ch = sample_channels(&cfg, draw).unwrap();
        let noma = SystemModel::new(&cfg, &ch, MultipleAccess::Noma, DecodingOrder::identity(1)).unwrap();
        let sdma = SystemModel::new(&cfg, &ch, MultipleAccess::Sdma, DecodingOrder::identity(1)).unwrap();
        let (a, b) = (noma.uplink_rate(0, &p).unwrap(), sdma.uplink_rate(0, &p).unwrap());
        assert!((a - b).abs() <= 1e-12 * a, "draw {draw}: {a} vs {b}");
    }
}

#[test]
fn single_user_sdma_optimum_is_close_to_noma() {
    let cfg = ScenarioConfig::default().with_users(1);
    let order = DecodingOrder::identity(1);
    let ch = sample_channels(&cfg, 0).unwrap();
    let noma = rate(run_benchmark(Scheme::NomaPartial, &ch, &cfg, &order).unwrap());
    let sdma = rate(run_benchmark(Scheme::SdmaPartial, &ch, &cfg, &order).unwrap());
    assert!((noma - sdma).abs() <= 1e-4 * noma, "{noma} vs {sdma}");
}

#[test]
fn bs_only_respects_the_cubic_power_bound() {
    let mut cfg = ScenarioConfig::default();
    cfg.user_weights = vec![0.5, 1.0, 2.0];
    let order = propose_decoding_order(&cfg);
    // max Σ ω r  s.t.  κ φ³ Σ r³ ≤ P_b  is  (P_b / κφ³)^{1/3} (Σ ω^{3/2})^{2/3}.
    let c = cfg.bs_power_budget / (cfg.cpu_power_factor * cfg.cycles_per_bit.powi(3));
    let bound = c.cbrt() * cfg.user_weights.iter().map(|w| w.powf(1.5)).sum::<f64>().powf(2.0 / 3.0);
    for draw in 0..3 {
        let ch = sample_channels(&cfg, draw).unwrap();
        let r = rate(run_benchmark(Scheme::BsOnly, &ch, &cfg, &order).unwrap());
        assert!(r > 0.0 && r <= bound * (1.0 + 1e-9), "{r} vs {bound}");
    }
}

#[test]
fn cs_only_is_limited_by_the_relay_link() {
    let cfg = ScenarioConfig::default();
    let order = propose_decoding_order(&cfg);
    let w_max = cfg.user_weights.iter().cloned().fold(0.0, f64::max);
    for draw in 0..3 {
        let ch = sample_channels(&cfg, draw).unwrap();
        let model = SystemModel::noma(&cfg, &ch, order.clone()).unwrap();
        let sol = solve_partial_pinned(&model, &RatePins::cs_only(cfg.n_users)).unwrap();
        let relay = cfg.bandwidth * model.downlink_rate(&sol.p);
        assert!(sol.r_b.iter().all(|&r| r == 0.0));
        assert!(sol.objective <= w_max * relay * (1.0 + 1e-6), "{} vs {}", sol.objective, w_max * relay);
    }
}

#[test]
fn partial_solution_is_feasible_and_monotone() {
    let cfg = ScenarioConfig::default();
    let order = propose_decoding_order(&cfg);
    for draw in 0..4 {
        let ch = sample_channels(&cfg, draw).unwrap();
        let model = SystemModel::noma(&cfg, &ch, order.clone()).unwrap();
        let sol = solve_partial(&ch, &cfg, &order).unwrap();
        assert!(sol.violations(&model, 1e-6).unwrap().is_empty());
        assert!(sol.sensing_sinr_achieved >= cfg.sensing_sinr_min * (1.0 - 1e-6));
        let slack = 1e-7 * cfg.bandwidth;
        for w in sol.trace.windows(2) {
            assert!(w[1] >= w[0] - slack, "draw {draw}: {} after {}", w[1], w[0]);
        }
        assert!(sol.kkt.max() <= 1e-6);
    }
}

#[test]
fn partial_dominates_its_restrictions() {
    let cfg = ScenarioConfig::default();
    let order = propose_decoding_order(&cfg);
    let ch = sample_channels(&cfg, 1).unwrap();
    let full = rate(run_benchmark(Scheme::NomaPartial, &ch, &cfg, &order).unwrap());
    for s in [Scheme::BsOnly, Scheme::CsOnly] {
        let r = rate(run_benchmark(s, &ch, &cfg, &order).unwrap());
        assert!(full >= r * (1.0 - 1e-3), "{s}: {r} > {full}");
    }
}

#[test]
fn binary_decisions_are_integral_and_consistent() {
    let cfg = ScenarioConfig::default();
    let order = propose_decoding_order(&cfg);
    let ch = sample_channels(&cfg, 0).unwrap();
    let sol = solve_binary(&ch, &cfg, &order).unwrap();
    assert_eq!(sol.at_bs.len(), cfg.n_users);
    let recomputed: f64 = sol
        .at_bs
        .iter()
        .enumerate()
        .map(|(k, &bs)| cfg.user_weights[k] * if bs { sol.z_b[k] } else { sol.z_c[k] })
        .sum();
    assert!((recomputed - sol.effective_rate).abs() <= 1e-9 * sol.effective_rate);
    assert!(sol.sensing_sinr_achieved >= cfg.sensing_sinr_min * (1.0 - 1e-6));
}

#[test]
fn single_user_oracle_picks_the_better_tier() {
    let cfg = ScenarioConfig::default().with_users(1);
    let order = DecodingOrder::identity(1);
    let ch = sample_channels(&cfg, 2).unwrap();
    let oracle = exhaustive_binary_oracle(&ch, &cfg, &order).unwrap();
    let bs = rate(run_benchmark(Scheme::BsOnly, &ch, &cfg, &order).unwrap());
    let cs = rate(run_benchmark(Scheme::CsOnly, &ch, &cfg, &order).unwrap());
    assert_eq!(oracle.rate, bs.max(cs));
    assert_eq!(oracle.at_bs, vec![bs > cs]);
}

#[test]
fn one_trial_sweep_has_one_row_per_scheme_and_value() {
    let base = ScenarioConfig::default();
    let spec = SweepSpec {
        parameter: SweepParameter::SensingSinrDb,
        grid: vec![20.0, 30.0],
        trials: 1,
        schemes: vec![Scheme::NomaPartial, Scheme::BsOnly],
        seed: 4,
        base,
        workers: 1,
    };
    let rows = run_sweep(&spec).unwrap();
    assert_eq!(rows.len(), 4);
    for v in [20.0, 30.0] {
        for s in &spec.schemes {
            assert_eq!(rows.iter().filter(|r| r.value == v && r.scheme == *s && r.trial == 0).count(), 1);
        }
    }
}

#[test]
fn infeasible_sensing_requirement_is_reported() {
    let base = ScenarioConfig::default();
    let spec = SweepSpec {
        parameter: SweepParameter::SensingSinrDb,
        grid: vec![80.0],
        trials: 1,
        schemes: vec![Scheme::NomaPartial],
        seed: 0,
        base,
        workers: 1,
    };
    let rows = run_sweep(&spec).unwrap();
    assert!(!rows[0].feasible && rows[0].rate.is_none());
}

#[test]
fn feasibility_decreases_with_the_requirement() {
    let cfg = ScenarioConfig::default();
    let grid: Vec<f64> = (30..=44).map(f64::from).collect();
    let rows = feasibility_study(&cfg, &grid, &[3], 100).unwrap();
    for access in ["noma", "sdma"] {
        let probs: Vec<f64> = rows.iter().filter(|r| r.access == access).map(|r| r.probability).collect();
        assert!(probs.windows(2).all(|w| w[1] <= w[0]), "{access}: {probs:?}");
    }
    let at = |access: &str, g: f64| rows.iter().find(|r| r.access == access && r.sensing_sinr_min_db == g).unwrap().probability;
    assert_eq!(at("noma", 30.0), 1.0);
    assert!(at("sdma", 30.0) <= at("noma", 30.0));
}

#[test]
fn sdma_model_is_not_noma() {
    let cfg = ScenarioConfig::default();
    let ch = sample_channels(&cfg, 0).unwrap();
    let m = SystemModel::new(&cfg, &ch, MultipleAccess::Sdma, DecodingOrder::identity(3)).unwrap();
    let p = jcsmc::partial::initialize_beamformer(&cfg);
    let n = SystemModel::noma(&cfg, &ch, DecodingOrder::identity(3)).unwrap();
    assert!(m.sensing_sinr(&p).unwrap() < n.sensing_sinr(&p).unwrap());
}
