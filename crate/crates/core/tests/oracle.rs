use ltbarrier::oracle::*;
use ltbarrier::*;

fn cfg(paths: usize, steps: usize, seed: u64, bridge: bool) -> McConfig {
    McConfig {
        paths,
        steps,
        seed,
        bridge_correction: bridge,
    }
}

#[test]
fn drifting_single_barrier_matches_monte_carlo() {
    let model = Diffusion::gbm(0.03, 0.2).unwrap();
    let c =
        BarrierContract::down_and_out(Barrier::constant(90.0), Payoff::Call { strike: 110.0 }, 1.0)
            .with_rates(0.03, 0.0);
    let exact = closed_form_gbm_single(&model, &c, 100.0).unwrap();
    let e = mc_price(&model, &c, 100.0, &cfg(1_000_000, 50, 11, true)).unwrap();
    assert!(
        (e.mean - exact).abs() < 3.0 * e.std_error,
        "{e:?} vs {exact}"
    );
}

#[test]
fn knocked_out_at_inception() {
    let model = Diffusion::gbm(0.0, 0.2).unwrap();
    let c =
        BarrierContract::down_and_out(Barrier::constant(90.0), Payoff::Call { strike: 100.0 }, 1.0);
    assert_eq!(closed_form_gbm_single(&model, &c, 90.0).unwrap(), 0.0);
    let d = BarrierContract::double(
        Barrier::constant(90.0),
        Barrier::constant(110.0),
        Payoff::Put { strike: 100.0 },
        1.0,
    );
    assert_eq!(
        closed_form_gbm_double(&model, &d, 110.0, 20).unwrap().value,
        0.0
    );
    assert_eq!(
        closed_form_gbm_double(&model, &d, 90.0, 20).unwrap().value,
        0.0
    );
}

#[test]
fn wide_corridor_limit() {
    let model = Diffusion::gbm(0.0, 0.25).unwrap();
    for payoff in [Payoff::Call { strike: 95.0 }, Payoff::Put { strike: 120.0 }] {
        let single = BarrierContract::up_and_out(Barrier::constant(130.0), payoff.clone(), 1.0);
        let double = BarrierContract::double(
            Barrier::constant(1e-3),
            Barrier::constant(130.0),
            payoff,
            1.0,
        );
        let a = closed_form_gbm_single(&model, &single, 100.0).unwrap();
        let b = closed_form_gbm_double(&model, &double, 100.0, 50)
            .unwrap()
            .value;
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn double_no_touch_series_matches_monte_carlo() {
    let model = Diffusion::gbm(0.0, 0.2).unwrap();
    let c = BarrierContract::double(
        Barrier::constant(90.0),
        Barrier::constant(110.0),
        Payoff::DoubleNoTouch,
        0.5,
    );
    let exact = closed_form_gbm_double(&model, &c, 100.0, 50).unwrap();
    assert!(exact.last_term < 1e-12);
    let e = mc_price(&model, &c, 100.0, &cfg(1_000_000, 50, 5, true)).unwrap();
    assert!(
        (e.mean - exact.value).abs() < 3.0 * e.std_error,
        "{e:?} vs {exact:?}"
    );
}

#[test]
fn model_free_monte_carlo() {
    let model = Diffusion::gbm(0.0, 0.2).unwrap();
    let c =
        BarrierContract::down_and_out(Barrier::constant(90.0), Payoff::Call { strike: 90.0 }, 1.0);
    let e = mc_price(&model, &c, 100.0, &cfg(100_000, 50, 2, true)).unwrap();
    assert!((e.mean - 10.0).abs() < 3.0 * e.std_error, "{e:?}");
}

#[test]
fn bridge_removes_monitoring_bias() {
    let model = Diffusion::gbm(0.0, 0.2).unwrap();
    let c =
        BarrierContract::down_and_out(Barrier::constant(90.0), Payoff::Call { strike: 100.0 }, 1.0);
    let coarse = mc_price(&model, &c, 100.0, &cfg(100_000, 50, 3, true)).unwrap();
    let fine = mc_price(&model, &c, 100.0, &cfg(20_000, 5000, 4, false)).unwrap();
    let se = coarse.std_error.hypot(fine.std_error);
    assert!(
        (coarse.mean - fine.mean).abs() < 3.0 * se,
        "{coarse:?} vs {fine:?}"
    );
    // without the bridge the coarse estimate is visibly biased upwards
    let plain = mc_price(&model, &c, 100.0, &cfg(100_000, 50, 3, false)).unwrap();
    assert!(plain.mean - coarse.mean > 3.0 * coarse.std_error.hypot(plain.std_error));
}

#[test]
fn bridge_is_unbiased_across_configurations() {
    let cases = [
        (
            0.0,
            0.2,
            Barrier::constant(90.0),
            None,
            Payoff::Call { strike: 100.0 },
        ),
        (
            0.05,
            0.3,
            Barrier::constant(80.0),
            None,
            Payoff::Put { strike: 100.0 },
        ),
        (
            -0.02,
            0.15,
            Barrier::constant(95.0),
            None,
            Payoff::Call { strike: 90.0 },
        ),
        (
            0.03,
            0.25,
            Barrier::constant(120.0),
            Some(()),
            Payoff::Put { strike: 110.0 },
        ),
        (
            0.0,
            0.4,
            Barrier::constant(150.0),
            Some(()),
            Payoff::Call { strike: 100.0 },
        ),
    ];
    for (k, (mu, sigma, b, up, payoff)) in cases.into_iter().enumerate() {
        let model = Diffusion::gbm(mu, sigma).unwrap();
        let c = match up {
            Some(()) => BarrierContract::up_and_out(b, payoff, 1.0),
            None => BarrierContract::down_and_out(b, payoff, 1.0),
        }
        .with_rates(mu.max(0.0), mu.max(0.0) - mu);
        let exact = closed_form_gbm_single(&model, &c, 100.0).unwrap();
        let e = mc_price(&model, &c, 100.0, &cfg(100_000, 50, 100 + k as u64, true)).unwrap();
        assert!(
            (e.mean - exact).abs() < 3.0 * e.std_error,
            "case {k}: {e:?} vs {exact}"
        );
    }
}

/// First-order bias of the band estimator: the band `[b, b + eps)` sees the
/// local time at `b + eps / 2`.
fn band_bias(model: &Diffusion, barrier: &Barrier, s0: f64, t: f64, eps: f64) -> f64 {
    let shift = |d: f64| match *barrier {
        Barrier::Constant { level } => Barrier::constant(level + d),
        Barrier::Exponential { level0, growth } => Barrier::exponential(level0 + d, growth),
    };
    let d = 0.01;
    let up = expected_local_time(model, &shift(d), s0, t).unwrap();
    let down = expected_local_time(model, &shift(-d), s0, t).unwrap();
    0.5 * eps * (up - down) / (2.0 * d)
}

#[test]
fn local_time_identity_for_curves() {
    let model = Diffusion::gbm(0.0, 0.2).unwrap();
    for barrier in [Barrier::constant(90.0), Barrier::exponential(88.0, 0.05)] {
        let eps = 0.25;
        let exact = expected_local_time(&model, &barrier, 100.0, 1.0).unwrap();
        let bias = band_bias(&model, &barrier, 100.0, 1.0, eps);
        let e = mc_local_time(
            &model,
            &barrier,
            100.0,
            1.0,
            eps,
            &cfg(50_000, 500, 9, false),
        )
        .unwrap();
        assert!(
            (e.mean - exact).abs() < 3.0 * e.std_error + bias.abs(),
            "{barrier:?}: {e:?} vs {exact} (bias {bias})"
        );
    }
}

#[test]
fn halving_the_band() {
    let model = Diffusion::gbm(0.0, 0.2).unwrap();
    let b = Barrier::constant(90.0);
    let wide = mc_local_time(&model, &b, 100.0, 1.0, 0.1, &cfg(40_000, 400, 21, false)).unwrap();
    let narrow =
        mc_local_time(&model, &b, 100.0, 1.0, 0.05, &cfg(160_000, 400, 22, false)).unwrap();
    assert!(
        (wide.mean - narrow.mean).abs() < wide.std_error + narrow.std_error,
        "{wide:?} vs {narrow:?}"
    );
}

#[test]
fn cev_monte_carlo_is_deterministic_and_absorbs() {
    let model = Diffusion::cev(0.0, 2.0, 0.5).unwrap();
    let c =
        BarrierContract::up_and_out(Barrier::constant(130.0), Payoff::Put { strike: 100.0 }, 1.0);
    let a = mc_price(&model, &c, 100.0, &cfg(20_000, 100, 1, true)).unwrap();
    let b = mc_price(&model, &c, 100.0, &cfg(20_000, 100, 1, true)).unwrap();
    assert_eq!(a, b);
    assert!(a.mean > 0.0 && a.mean < 100.0);
}
