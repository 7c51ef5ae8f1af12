//! Integrator oracles: exact degenerate cases, closed-form decay rates,
//! determinism and shared-noise contracts.

use std::sync::Arc;

use mvms::error::Error;
use mvms::integrator::{
    build_averaged_drift, estimate_invariant_measure, fluctuation_ensemble, simulate_averaged,
    simulate_coupled, simulate_frozen, simulate_limit, AveragedDerivs, GridSpec, InitLaw,
    PathBundle, ProcessLabel, ScaleParams,
};
use mvms::measure::{EmpiricalMeasure, MeasureView};
use mvms::model::{build_example_model, ExampleParams, ModelDims, ModelSpec};
use mvms::stats::{fit_line, mean, variance};

fn example() -> ModelSpec {
    build_example_model(ExampleParams::default()).unwrap()
}

fn example_scale(eps: f64) -> ScaleParams {
    ScaleParams {
        eps,
        t: 1.0,
        p: 2.0,
        y0: vec![1.0],
        law_rho: InitLaw::normal1(0.0, 1.0),
        law_xi: InitLaw::normal1(0.0, 0.5f64.sqrt()),
    }
}

/// A 1-D model with constant slow drift, no slow noise, and a benign fast
/// system the slow component ignores.
fn constant_drift_model(c: f64) -> ModelSpec {
    ModelSpec {
        dims: ModelDims { n: 1, m: 1, d1: 1, d2: 1 },
        b1: Arc::new(move |_x, _mu, _y, _nu, out: &mut [f64]| out[0] = c),
        sigma1: Arc::new(|_x, _mu, out: &mut [f64]| out[0] = 0.0),
        b2: Arc::new(|y: &[f64], _nu, out: &mut [f64]| out[0] = -y[0]),
        sigma2: Arc::new(|_y, _nu, out: &mut [f64]| out[0] = 1.0),
        derivs: None,
        b1_split: None,
    }
}

#[test]
fn constant_drift_is_integrated_exactly() {
    // Dyadic step: 256 steps over T=1, so every partial sum is exact.
    let model = constant_drift_model(1.0);
    let scale = ScaleParams {
        eps: 1.0,
        t: 1.0,
        p: 2.0,
        y0: vec![0.0],
        law_rho: InitLaw::point1(0.0),
        law_xi: InitLaw::point1(0.0),
    };
    let grid = GridSpec { h: 1.0 / 256.0, rho_fast: 1.0, record_stride: 64, noise_atoms: 0 };
    let bundle = simulate_coupled(&model, &scale, &grid, 4, 0).unwrap();
    let xe = bundle.ensemble(ProcessLabel::XEps).unwrap();
    for i in 0..4 {
        assert_eq!(xe.value(i, xe.n_frames - 1, 0), 1.0);
    }
}

#[test]
fn fast_legs_bit_identical_when_started_together() {
    // y0 equal to every particle's xi draw: same W, same law input, so the
    // two fast paths must agree bit for bit.
    let model = example();
    let scale = ScaleParams {
        y0: vec![0.7],
        law_xi: InitLaw::point1(0.7),
        ..example_scale(0.25)
    };
    let grid = GridSpec::default();
    let bundle = simulate_coupled(&model, &scale, &grid, 32, 42).unwrap();
    let yxi = bundle.ensemble(ProcessLabel::YEpsXi).unwrap();
    let yy0 = bundle.ensemble(ProcessLabel::YEpsY0).unwrap();
    assert_eq!(yxi.data(), yy0.data());
}

#[test]
fn identical_seeds_give_bit_identical_bundles() {
    let model = example();
    let scale = example_scale(0.25);
    let grid = GridSpec::default();
    let a = simulate_coupled(&model, &scale, &grid, 64, 7).unwrap();
    let b = simulate_coupled(&model, &scale, &grid, 64, 7).unwrap();
    for label in [ProcessLabel::XEps, ProcessLabel::YEpsXi, ProcessLabel::YEpsY0] {
        assert_eq!(a.ensemble(label).unwrap().data(), b.ensemble(label).unwrap().data());
    }
    assert_eq!(a.ledger, b.ledger);
}

#[test]
fn results_independent_of_thread_count() {
    let model = example();
    let scale = example_scale(0.25);
    let grid = GridSpec::default();
    let run = || simulate_coupled(&model, &scale, &grid, 64, 3).unwrap();
    let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = pool1.install(run);
    let b = pool4.install(run);
    assert_eq!(
        a.ensemble(ProcessLabel::XEps).unwrap().data(),
        b.ensemble(ProcessLabel::XEps).unwrap().data()
    );
    assert_eq!(
        a.ensemble(ProcessLabel::YEpsXi).unwrap().data(),
        b.ensemble(ProcessLabel::YEpsXi).unwrap().data()
    );
}

/// The W increments consumed by the two fast legs are identical per
/// (particle, step) and regenerable from the seed ledger alone.
#[test]
fn shared_noise_contract_assertable_from_ledger() {
    let model = ModelSpec {
        dims: ModelDims { n: 1, m: 1, d1: 1, d2: 1 },
        b1: Arc::new(|_x, _mu, _y, _nu, out: &mut [f64]| out[0] = 0.0),
        sigma1: Arc::new(|_x, _mu, out: &mut [f64]| out[0] = 0.0),
        b2: Arc::new(|_y, _nu, out: &mut [f64]| out[0] = 0.0),
        sigma2: Arc::new(|_y, _nu, out: &mut [f64]| out[0] = 1.0),
        derivs: None,
        b1_split: None,
    };
    let scale = ScaleParams {
        eps: 1.0,
        t: 1.0,
        p: 2.0,
        y0: vec![0.0],
        law_rho: InitLaw::point1(0.0),
        law_xi: InitLaw::point1(0.0),
    };
    let grid = GridSpec { h: 0.125, rho_fast: 1.0, record_stride: 1, noise_atoms: 0 };
    let bundle = simulate_coupled(&model, &scale, &grid, 8, 11).unwrap();
    let yxi = bundle.ensemble(ProcessLabel::YEpsXi).unwrap();
    let mut dw = [0.0];
    for i in 0..8 {
        for f in 0..yxi.n_frames - 1 {
            bundle.ledger.fast_increment(i, f, &mut dw);
            let observed = yxi.value(i, f + 1, 0) - yxi.value(i, f, 0);
            assert!((observed - dw[0]).abs() < 1e-15);
        }
    }
}

#[test]
fn blow_up_aborts_with_structured_error() {
    let mut model = example();
    model.b2 = Arc::new(|y: &[f64], _nu, out: &mut [f64]| out[0] = y[0].powi(3) * 1e3 + 1e3);
    let err = simulate_coupled(&model, &example_scale(0.25), &GridSpec::default(), 8, 0)
        .unwrap_err();
    match err {
        Error::BlowUp { process, .. } => assert_eq!(process, "Y_eps_xi"),
        other => panic!("expected blow-up, got {other:?}"),
    }
}

#[test]
fn frozen_deterministic_contraction_tracks_exponential() {
    // b2 = -y, sigma2 = 0: the point-started leg is the ODE solution e^{-t}.
    let model = ModelSpec {
        dims: ModelDims { n: 1, m: 1, d1: 1, d2: 1 },
        b1: Arc::new(|_x, _mu, _y, _nu, out: &mut [f64]| out[0] = 0.0),
        sigma1: Arc::new(|_x, _mu, out: &mut [f64]| out[0] = 0.0),
        b2: Arc::new(|y: &[f64], _nu, out: &mut [f64]| out[0] = -y[0]),
        sigma2: Arc::new(|_y, _nu, out: &mut [f64]| out[0] = 0.0),
        derivs: None,
        b1_split: None,
    };
    let grid = GridSpec { h: 1e-3, rho_fast: 1.0, record_stride: 0, noise_atoms: 0 };
    let bundle =
        simulate_frozen(&model, &InitLaw::point1(0.3), &[1.0], 2.0, &grid, 4, 0).unwrap();
    let yy0 = bundle.ensemble(ProcessLabel::YEpsY0).unwrap();
    for (f, t) in bundle.times.iter().enumerate() {
        let exact = (-t).exp();
        assert!((yy0.value(0, f, 0) - exact).abs() < 5e-3, "t={t}");
    }
}

#[test]
fn frozen_mean_decays_at_the_linear_rate() {
    // d<Y>/dt = -(k-m)<Y>; fitted log-mean slope should sit near -(k-m).
    let model = example();
    let grid = GridSpec { h: 2e-3, rho_fast: 1.0, record_stride: 0, noise_atoms: 0 };
    let bundle =
        simulate_frozen(&model, &InitLaw::normal1(1.0, 0.3), &[1.0], 3.0, &grid, 8192, 5).unwrap();
    let yxi = bundle.ensemble(ProcessLabel::YEpsXi).unwrap();
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    for (f, t) in bundle.times.iter().enumerate() {
        let m = mean(yxi.frame(f));
        if m > 0.05 {
            ts.push(*t);
            logs.push(m.ln());
        }
    }
    let fit = fit_line(&ts, &logs);
    let rate = -fit.slope;
    assert!((rate - 0.75).abs() < 0.06, "fitted mean decay rate {rate}");
}

#[test]
fn frozen_runs_bit_identical_across_reruns() {
    let model = example();
    let grid = GridSpec::default();
    let a = simulate_frozen(&model, &InitLaw::normal1(0.0, 0.7), &[1.0], 2.0, &grid, 128, 9)
        .unwrap();
    let b = simulate_frozen(&model, &InitLaw::normal1(0.0, 0.7), &[1.0], 2.0, &grid, 128, 9)
        .unwrap();
    assert_eq!(
        a.ensemble(ProcessLabel::YEpsXi).unwrap().data(),
        b.ensemble(ProcessLabel::YEpsXi).unwrap().data()
    );
}

#[test]
fn invariant_measure_matches_stationary_gaussian() {
    // Stationary law of the frozen example: N(0, 1/(2k)).
    let model = example();
    let grid = GridSpec { h: 0.01, rho_fast: 1.0, record_stride: 0, noise_atoms: 0 };
    let est = estimate_invariant_measure(
        &model,
        &InitLaw::normal1(0.0, 0.5),
        20.0,
        20.0,
        &grid,
        2048,
        13,
    )
    .unwrap();
    let v = est.measure.view();
    assert!(v.mean1().abs() < 0.05, "mean {}", v.mean1());
    let var = v.moment(2) - v.mean1() * v.mean1();
    assert!((var - 0.5).abs() < 0.05, "var {var}");
}

#[test]
fn invariant_measure_pure_ou_variance() {
    let model = build_example_model(ExampleParams { m: 0.0, ..ExampleParams::default() }).unwrap();
    let grid = GridSpec { h: 0.01, rho_fast: 1.0, record_stride: 0, noise_atoms: 0 };
    let est = estimate_invariant_measure(
        &model,
        &InitLaw::normal1(0.0, 0.5),
        20.0,
        20.0,
        &grid,
        1024,
        3,
    )
    .unwrap();
    let v = est.measure.view();
    let var = v.moment(2) - v.mean1() * v.mean1();
    assert!((var - 0.5).abs() < 0.06, "var {var}");
}

#[test]
fn invariant_measure_deterministic_contraction_collapses_to_point() {
    let model = ModelSpec {
        dims: ModelDims { n: 1, m: 1, d1: 1, d2: 1 },
        b1: Arc::new(|_x, _mu, _y, _nu, out: &mut [f64]| out[0] = 0.0),
        sigma1: Arc::new(|_x, _mu, out: &mut [f64]| out[0] = 0.0),
        b2: Arc::new(|y: &[f64], _nu, out: &mut [f64]| out[0] = -y[0]),
        sigma2: Arc::new(|_y, _nu, out: &mut [f64]| out[0] = 0.0),
        derivs: None,
        b1_split: None,
    };
    let grid = GridSpec { h: 0.01, rho_fast: 1.0, record_stride: 0, noise_atoms: 0 };
    let est =
        estimate_invariant_measure(&model, &InitLaw::normal1(0.0, 1.0), 25.0, 5.0, &grid, 64, 0)
            .unwrap();
    for s in est.measure.samples() {
        assert!(s.abs() < 1e-8, "pooled sample {s}");
    }
}

#[test]
fn averaged_drift_reduces_to_b1_without_fast_dependence() {
    let model = constant_drift_model(2.5);
    let eta = EmpiricalMeasure::from_points_1d(vec![-1.0, 0.0, 2.0, 5.0]).unwrap();
    let drift = build_averaged_drift(&model, eta).unwrap();
    let mu = EmpiricalMeasure::dirac(&[0.3]);
    let mut out = [0.0];
    drift.eval(&[0.1], &mu.view(), &mut out);
    assert_eq!(out[0], 2.5);
}

#[test]
fn averaged_drift_matches_gauss_hermite_oracle() {
    // At (0, delta_0) the averaged drift is 2 exp(-1/(4k)).
    let model = example();
    let eta = EmpiricalMeasure::gauss_hermite_1d(0.0, 0.5, 64);
    let drift = build_averaged_drift(&model, eta).unwrap();
    let mu = EmpiricalMeasure::dirac(&[0.0]);
    let mut out = [0.0];
    drift.eval(&[0.0], &mu.view(), &mut out);
    let exact = 2.0 * (-0.25f64).exp();
    assert!((out[0] - exact).abs() < 1e-10, "{} vs {exact}", out[0]);
    // And the generic cloud average agrees with the split fast path.
    let mut generic = [0.0];
    drift.eval_generic(&[0.0], &mu.view(), &mut generic);
    assert!((out[0] - generic[0]).abs() < 1e-12);
}

#[test]
fn averaged_drift_additive_structure() {
    // bbar1(x, mu) - bbar1(0, delta_0) = sin(a x) + <mu>, independent of eta.
    let model = example();
    let eta = EmpiricalMeasure::from_points_1d(vec![0.3, -0.8, 1.4, 0.05]).unwrap();
    let drift = build_averaged_drift(&model, eta).unwrap();
    let origin_mu = EmpiricalMeasure::dirac(&[0.0]);
    let mut base = [0.0];
    drift.eval(&[0.0], &origin_mu.view(), &mut base);
    let mu = EmpiricalMeasure::from_points_1d(vec![0.9, -0.2, 0.45]).unwrap();
    for x in [-1.2, 0.0, 0.7, 2.4] {
        let mut out = [0.0];
        drift.eval(&[x], &mu.view(), &mut out);
        let expect = x.sin() + mu.view().mean1();
        assert!((out[0] - base[0] - expect).abs() < 1e-12);
    }
}

#[test]
fn averaged_without_drift_or_noise_keeps_initial_draws() {
    let model = ModelSpec {
        dims: ModelDims { n: 1, m: 1, d1: 1, d2: 1 },
        b1: Arc::new(|_x, _mu, _y, _nu, out: &mut [f64]| out[0] = 0.0),
        sigma1: Arc::new(|_x, _mu, out: &mut [f64]| out[0] = 0.0),
        b2: Arc::new(|y: &[f64], _nu, out: &mut [f64]| out[0] = -y[0]),
        sigma2: Arc::new(|_y, _nu, out: &mut [f64]| out[0] = 1.0),
        derivs: None,
        b1_split: None,
    };
    let eta = EmpiricalMeasure::from_points_1d(vec![0.0, 1.0]).unwrap();
    let drift = build_averaged_drift(&model, eta).unwrap();
    let scale = example_scale(1.0);
    let grid = GridSpec { h: 0.05, rho_fast: 1.0, record_stride: 1, noise_atoms: 0 };
    let bundle = simulate_averaged(&model, &drift, &scale, &grid, 16, 21, None).unwrap();
    let xb = bundle.ensemble(ProcessLabel::XBar).unwrap();
    for i in 0..16 {
        let mut rho = [0.0];
        bundle.ledger.rho_draw(&scale.law_rho, i, &mut rho);
        for f in 0..xb.n_frames {
            assert_eq!(xb.value(i, f, 0), rho[0]);
        }
    }
}

/// With no fast dependence in b1 and shared noise, the coupled and averaged
/// slow paths are bit-identical (update rules coincide step by step).
#[test]
fn coupled_and_averaged_agree_bit_exactly_without_fast_dependence() {
    let model = ModelSpec {
        dims: ModelDims { n: 1, m: 1, d1: 1, d2: 1 },
        b1: Arc::new(|x: &[f64], mu: &MeasureView, _y, _nu, out: &mut [f64]| {
            out[0] = 0.5 * x[0] + mu.mean1();
        }),
        sigma1: Arc::new(|_x, _mu, out: &mut [f64]| out[0] = 0.5),
        b2: Arc::new(|y: &[f64], _nu, out: &mut [f64]| out[0] = -y[0]),
        sigma2: Arc::new(|_y, _nu, out: &mut [f64]| out[0] = 1.0),
        derivs: None,
        b1_split: None,
    };
    let scale = ScaleParams {
        eps: 1.0,
        t: 0.75,
        p: 2.0,
        y0: vec![0.0],
        law_rho: InitLaw::normal1(0.0, 1.0),
        law_xi: InitLaw::point1(0.0),
    };
    // Three-step grid by construction.
    let grid = GridSpec { h: 0.25, rho_fast: 1.0, record_stride: 1, noise_atoms: 0 };
    let coupled = simulate_coupled(&model, &scale, &grid, 8, 17).unwrap();
    let eta = EmpiricalMeasure::from_points_1d(vec![-0.4, 0.1, 0.6, 2.0]).unwrap();
    let drift = build_averaged_drift(&model, eta).unwrap();
    let averaged = simulate_averaged(&model, &drift, &scale, &grid, 8, 17, Some(&coupled)).unwrap();
    let xe = coupled.ensemble(ProcessLabel::XEps).unwrap();
    let xb = averaged.ensemble(ProcessLabel::XBar).unwrap();
    assert_eq!(xe.data(), xb.data());
    let u = fluctuation_ensemble(&coupled, &averaged).unwrap();
    assert!(u.data().iter().all(|v| *v == 0.0));
}

#[test]
fn averaged_rejects_mismatched_coupling_grid() {
    let model = example();
    let scale = example_scale(0.25);
    let coupled = simulate_coupled(&model, &scale, &GridSpec::default(), 16, 1).unwrap();
    let eta = EmpiricalMeasure::from_points_1d(vec![0.0, 0.5]).unwrap();
    let drift = build_averaged_drift(&model, eta).unwrap();
    let other = GridSpec { h: 0.5, rho_fast: 1.0, record_stride: 1, noise_atoms: 0 };
    let err =
        simulate_averaged(&model, &drift, &scale, &other, 16, 1, Some(&coupled)).unwrap_err();
    assert!(matches!(err, Error::GridMismatch(_)));
}

fn zero_derivs() -> AveragedDerivs {
    AveragedDerivs {
        dx: Arc::new(|_x, _mu, _dir, out: &mut [f64]| out.fill(0.0)),
        dmu: Arc::new(|_x, _mu, _xt, _dir, out: &mut [f64]| out.fill(0.0)),
        dmu_base_free: true,
        dx_sigma1: Arc::new(|_x, _mu, _dir, out: &mut [f64]| out.fill(0.0)),
        dmu_sigma1: Arc::new(|_x, _mu, _xt, _dir, out: &mut [f64]| out.fill(0.0)),
        dmu_sigma1_base_free: true,
    }
}

fn flat_xbar_bundle(n_particles: usize, frames: usize) -> PathBundle {
    // Xbar == rho == 0 via a zero-coefficient averaged run.
    let model = ModelSpec {
        dims: ModelDims { n: 1, m: 1, d1: 1, d2: 1 },
        b1: Arc::new(|_x, _mu, _y, _nu, out: &mut [f64]| out[0] = 0.0),
        sigma1: Arc::new(|_x, _mu, out: &mut [f64]| out[0] = 0.0),
        b2: Arc::new(|y: &[f64], _nu, out: &mut [f64]| out[0] = -y[0]),
        sigma2: Arc::new(|_y, _nu, out: &mut [f64]| out[0] = 1.0),
        derivs: None,
        b1_split: None,
    };
    let eta = EmpiricalMeasure::from_points_1d(vec![0.0, 1.0]).unwrap();
    let drift = build_averaged_drift(&model, eta).unwrap();
    let scale = ScaleParams {
        eps: 1.0,
        t: 1.0,
        p: 2.0,
        y0: vec![0.0],
        law_rho: InitLaw::point1(0.0),
        law_xi: InitLaw::point1(0.0),
    };
    let grid = GridSpec {
        h: 1.0 / (frames as f64 - 1.0),
        rho_fast: 1.0,
        record_stride: 1,
        noise_atoms: 0,
    };
    simulate_averaged(&model, &drift, &scale, &grid, n_particles, 29, None).unwrap()
}

#[test]
fn limit_equation_zero_everything_stays_zero() {
    let model = constant_drift_model(0.0);
    let bundle = flat_xbar_bundle(32, 9);
    let ups = |_x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]| out[0] = 0.0;
    let out = simulate_limit(&model, &zero_derivs(), &ups, &bundle, 5).unwrap();
    let u = out.ensemble(ProcessLabel::ULimit).unwrap();
    assert!(u.data().iter().all(|v| *v == 0.0));
}

/// Frozen-coefficient linear case: dU = c U dt + s dV has
/// Var U_t = s^2 (e^{2ct} - 1) / (2c) and Gaussian marginals.
#[test]
fn limit_equation_linear_case_variance_and_kurtosis() {
    let model = constant_drift_model(0.0);
    let (c, s) = (-0.8, 0.5);
    let derivs = AveragedDerivs {
        dx: Arc::new(move |_x, _mu, dir: &[f64], out: &mut [f64]| out[0] = c * dir[0]),
        ..zero_derivs()
    };
    let ups = move |_x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]| out[0] = s;
    let bundle = flat_xbar_bundle(8192, 257);
    let out = simulate_limit(&model, &derivs, &ups, &bundle, 23).unwrap();
    let u = out.ensemble(ProcessLabel::ULimit).unwrap();
    let terminal = u.terminal_1d();
    let var = variance(&terminal);
    let exact = s * s * ((2.0f64 * c).exp() - 1.0) / (2.0 * c);
    assert!((var - exact).abs() < 0.1 * exact, "var {var} vs {exact}");
    let kurt = mvms::stats::excess_kurtosis(&terminal);
    assert!(kurt.abs() < 0.2, "excess kurtosis {kurt}");
}

#[test]
fn limit_runs_are_deterministic() {
    let model = constant_drift_model(0.0);
    let derivs = zero_derivs();
    let ups = |_x: &[f64], _mu: &MeasureView<'_>, out: &mut [f64]| out[0] = 1.0;
    let bundle = flat_xbar_bundle(64, 17);
    let a = simulate_limit(&model, &derivs, &ups, &bundle, 2).unwrap();
    let b = simulate_limit(&model, &derivs, &ups, &bundle, 2).unwrap();
    assert_eq!(
        a.ensemble(ProcessLabel::ULimit).unwrap().data(),
        b.ensemble(ProcessLabel::ULimit).unwrap().data()
    );
}

/// Time-change identity: the fast component at time t has the law of the
/// frozen system at t/eps; moments 1..4 must agree within Monte Carlo error
/// (the two runs share the discretization in fast time).
#[test]
fn time_change_identity_moment_match() {
    let model = example();
    let eps = 0.0625;
    let t = 0.5;
    let n = 2048;
    let scale = ScaleParams { t, ..example_scale(eps) };
    let grid = GridSpec { h: 0.01, rho_fast: 20.0, record_stride: 0, noise_atoms: 0 };
    let coupled = simulate_coupled(&model, &scale, &grid, n, 31).unwrap();
    let yxi = coupled.ensemble(ProcessLabel::YEpsXi).unwrap();
    let fast_end: Vec<f64> = yxi.terminal_1d();

    let frozen_grid = GridSpec { h: eps / 20.0 / eps, rho_fast: 1.0, record_stride: 0, noise_atoms: 0 };
    let frozen = simulate_frozen(
        &model,
        &InitLaw::normal1(0.0, 0.5f64.sqrt()),
        &[1.0],
        t / eps,
        &frozen_grid,
        n,
        77,
    )
    .unwrap();
    let frozen_end: Vec<f64> = frozen.ensemble(ProcessLabel::YEpsXi).unwrap().terminal_1d();

    for k in 1..=4u32 {
        let mk = |xs: &[f64]| -> (f64, f64) {
            let v: Vec<f64> = xs.iter().map(|x| x.powi(k as i32)).collect();
            (mean(&v), mvms::stats::standard_error(&v))
        };
        let (ma, sa) = mk(&fast_end);
        let (mb, sb) = mk(&frozen_end);
        let se = (sa * sa + sb * sb).sqrt();
        assert!(
            (ma - mb).abs() < 3.0 * se,
            "moment {k}: {ma} vs {mb} (3se = {})",
            3.0 * se
        );
    }
}
