use ltbarrier::oracle::closed_form_gbm_single;
use ltbarrier::pricing::*;
use ltbarrier::volterra::solve_contract;
use ltbarrier::*;

fn gbm() -> Diffusion {
    Diffusion::gbm(0.0, 0.2).unwrap()
}

fn model_free() -> BarrierContract {
    BarrierContract::down_and_out(Barrier::constant(90.0), Payoff::Call { strike: 90.0 }, 1.0)
}

fn spots(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

#[test]
fn zero_payoff_prices_to_zero() {
    let model = gbm();
    let c = BarrierContract::double(
        Barrier::constant(90.0),
        Barrier::constant(110.0),
        Payoff::Call { strike: 150.0 },
        1.0,
    );
    let p = solve_contract(&model, &c, 32).unwrap();
    let r = price(&model, &c, 100.0, &p).unwrap();
    assert_eq!(
        (r.european, r.premium_lower, r.premium_upper, r.price),
        (0.0, 0.0, 0.0, 0.0)
    );
}

#[test]
fn model_free_price_is_forward() {
    let model = gbm();
    let c = model_free();
    let p = solve_contract(&model, &c, 256).unwrap();
    for s0 in [95.0, 100.0, 110.0] {
        let v = price(&model, &c, s0, &p).unwrap().price;
        assert!((v - (s0 - 90.0)).abs() < 1e-3 * (s0 - 90.0), "S0 {s0}: {v}");
    }
}

#[test]
fn down_and_out_call_matches_reflection() {
    let model = gbm();
    let c =
        BarrierContract::down_and_out(Barrier::constant(90.0), Payoff::Call { strike: 110.0 }, 1.0);
    let p = solve_contract(&model, &c, 256).unwrap();
    for s0 in [92.0, 100.0, 120.0] {
        let v = price(&model, &c, s0, &p).unwrap().price;
        let exact = closed_form_gbm_single(&model, &c, s0).unwrap();
        assert!((v - exact).abs() < 5e-3 * exact, "S0 {s0}: {v} vs {exact}");
    }
}

#[test]
fn discounting_and_decomposition() {
    let model = Diffusion::gbm(0.02, 0.25).unwrap();
    let c = BarrierContract::double(
        Barrier::constant(80.0),
        Barrier::constant(125.0),
        Payoff::Put { strike: 105.0 },
        1.0,
    )
    .with_rates(0.05, 0.03);
    let p = solve_contract(&model, &c, 128).unwrap();
    let r = price(&model, &c, 100.0, &p).unwrap();
    assert_eq!(r.price, r.european + r.premium_lower + r.premium_upper);
    assert!((r.discount_factor - (-0.05f64).exp()).abs() < 1e-15);
    assert_eq!(r.discounted_price, r.discount_factor * r.price);
    assert!(r.premium_lower <= 0.0 && r.premium_upper <= 0.0);
    assert!(r.price <= r.european);
}

#[test]
fn premiums_are_nonpositive_on_smooth_contracts() {
    let model = gbm();
    for (lo, hi) in [(90.0, 110.0), (70.0, 140.0)] {
        let c = BarrierContract::double(
            Barrier::constant(lo),
            Barrier::constant(hi),
            Payoff::SmoothBump {
                left: lo,
                right: hi,
                height: 1.0,
            },
            1.0,
        );
        let p = solve_contract(&model, &c, 128).unwrap();
        for s0 in spots(lo + 1.0, hi - 1.0, 7) {
            let r = price(&model, &c, s0, &p).unwrap();
            assert!(r.premium_lower <= 1e-6 * r.european && r.premium_upper <= 1e-6 * r.european);
            assert!(r.price <= r.european + 1e-9);
        }
    }
}

#[test]
fn spots_outside_the_corridor_are_rejected() {
    let model = gbm();
    let c = model_free();
    let p = solve_contract(&model, &c, 16).unwrap();
    assert!(matches!(
        price(&model, &c, 90.0, &p),
        Err(Error::SpotOutsideCorridor { .. })
    ));
    assert!(matches!(
        price(&model, &c, 50.0, &p),
        Err(Error::SpotOutsideCorridor { .. })
    ));
    let other =
        BarrierContract::up_and_out(Barrier::constant(120.0), Payoff::Put { strike: 100.0 }, 1.0);
    assert!(matches!(
        price(&model, &other, 100.0, &p),
        Err(Error::ProfileMismatch(_))
    ));
}

#[test]
fn model_free_ladder_has_unit_deltas() {
    let model = gbm();
    let c = model_free();
    let p = solve_contract(&model, &c, 256).unwrap();
    let l = ladder(&model, &c, &spots(91.0, 130.0, 14), &p).unwrap();
    for d in &l.deltas {
        assert!((d - 1.0).abs() < 1e-3, "{d}");
    }
    for g in &l.gammas {
        assert!(g.abs() < 1e-3);
    }
}

#[test]
fn single_spot_ladder_equals_price() {
    let model = gbm();
    let c = BarrierContract::double(
        Barrier::constant(90.0),
        Barrier::constant(110.0),
        Payoff::DoubleNoTouch,
        0.5,
    );
    let p = solve_contract(&model, &c, 64).unwrap();
    let l = ladder(&model, &c, &[101.0], &p).unwrap();
    assert_eq!(l.prices[0], price(&model, &c, 101.0, &p).unwrap().price);
    assert_eq!(l.gammas.len(), 1);
    assert!(ladder(&model, &c, &[], &p).is_err());
}

fn fd_gap(l: &Ladder) -> f64 {
    let k = l.spots.len();
    (1..k - 1)
        .map(|i| {
            let fd = (l.prices[i + 1] - l.prices[i - 1]) / (l.spots[i + 1] - l.spots[i - 1]);
            (l.deltas[i] - fd).abs() / l.deltas[i].abs().max(1e-2)
        })
        .fold(0.0, f64::max)
}

#[test]
fn ladder_deltas_match_price_differences() {
    let model = gbm();
    let cases = [
        (
            BarrierContract::down_and_out(
                Barrier::constant(90.0),
                Payoff::Call { strike: 110.0 },
                1.0,
            ),
            spots(92.0, 130.0, 9),
        ),
        (
            BarrierContract::double(
                Barrier::constant(90.0),
                Barrier::constant(110.0),
                Payoff::DoubleNoTouch,
                0.5,
            ),
            spots(92.0, 108.0, 9),
        ),
        (
            BarrierContract::up_and_out(
                Barrier::constant(120.0),
                Payoff::Put { strike: 105.0 },
                1.0,
            ),
            spots(80.0, 118.0, 9),
        ),
    ];
    for (c, s) in cases {
        let p = solve_contract(&model, &c, 256).unwrap();
        // fine stencils around each spot keep the difference error small
        for &s0 in &s {
            let ds = 0.01;
            let l = ladder(&model, &c, &[s0 - ds, s0, s0 + ds], &p).unwrap();
            assert!(fd_gap(&l) < 1e-3, "S0 {s0}: {}", fd_gap(&l));
        }
        let l = ladder(&model, &c, &s, &p).unwrap();
        assert!(l
            .prices
            .iter()
            .chain(&l.deltas)
            .chain(&l.gammas)
            .all(|v| v.is_finite()));
    }
}

#[test]
fn gammas_agree_with_second_differences() {
    let model = gbm();
    let c = BarrierContract::double(
        Barrier::constant(90.0),
        Barrier::constant(110.0),
        Payoff::DoubleNoTouch,
        0.5,
    );
    let p = solve_contract(&model, &c, 256).unwrap();
    let s = spots(93.0, 107.0, 29);
    let l = ladder(&model, &c, &s, &p).unwrap();
    for i in 1..s.len() - 1 {
        let ds = s[i + 1] - s[i];
        let second = (l.prices[i + 1] - 2.0 * l.prices[i] + l.prices[i - 1]) / (ds * ds);
        assert!(
            (l.gammas[i] - second).abs() < 0.1 * second.abs().max(1e-3),
            "S0 {}: {} vs {second}",
            s[i],
            l.gammas[i]
        );
    }
}

#[test]
fn price_vanishes_towards_the_barrier() {
    let model = gbm();
    let c =
        BarrierContract::down_and_out(Barrier::constant(90.0), Payoff::Call { strike: 100.0 }, 1.0);
    let p = solve_contract(&model, &c, 256).unwrap();
    let v: Vec<f64> = [91.0, 90.5, 90.1, 90.01, 90.001]
        .iter()
        .map(|&s| price(&model, &c, s, &p).unwrap().price)
        .collect();
    for w in v[2..].windows(2) {
        assert!(w[1].abs() < w[0].abs());
    }
    assert!(v[4].abs() < 1e-3);
}

#[test]
fn barrier_deltas_interpolate_the_profile() {
    let model = gbm();
    let c = model_free();
    let p = solve_contract(&model, &c, 64).unwrap();
    let nodes = p.delta_minus().unwrap();
    let t = p.grid().nodes().to_vec();
    assert_eq!(delta_at_barrier(&p, t[10]), (None, Some(nodes[10])));
    let mid = 0.25 * t[10] + 0.75 * t[11];
    let v = delta_at_barrier(&p, mid).1.unwrap();
    assert!((v - (0.25 * nodes[10] + 0.75 * nodes[11])).abs() < 1e-12);
    for &ti in &t {
        assert!((delta_at_barrier(&p, ti).1.unwrap() - 1.0).abs() < 1e-3);
    }
}
