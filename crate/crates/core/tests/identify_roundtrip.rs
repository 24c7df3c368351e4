use soh_fusion::apso::ApsoConfig;
use soh_fusion::cell::{
    reference_capacity, simulate_protocol, AgingParameterSet, CellModel, CellParameters, SimConfig,
};
use soh_fusion::identify::{
    combined_rmse_mv, identify_aging, identify_pristine, AgingFitConfig, CurveMeta, MeasuredCurve, PristineConfig,
};
use soh_fusion::protocol::make_cccv;

fn aged_truth(base: &CellParameters) -> AgingParameterSet {
    let mut a = base.aging();
    a.eps_s_n *= 0.90;
    a.eps_s_p *= 0.93;
    a.d_s_n *= 0.8;
    a.d_s_p *= 0.85;
    a.r0 *= 1.3;
    a
}

fn charge_curve(base: &CellParameters, aging: &AgingParameterSet) -> MeasuredCurve {
    let proto = make_cccv(1.0, 4.2, 0.16).unwrap();
    let tr = simulate_protocol(base, aging, &proto, 0.0, SimConfig::default()).unwrap();
    MeasuredCurve::from_trace(&tr, 1, CurveMeta::builder().rate(1.0).build()).unwrap()
}

fn five_free() -> AgingFitConfig {
    AgingFitConfig {
        apso: ApsoConfig::new(Vec::new()).with_iters(60).with_particles(40).with_seed(3),
        // eps_s_p, eps_s_n, d_s_p, d_s_n, r0; kinetics stay at warm start
        free: [true, true, true, true, false, false, true],
        ..AgingFitConfig::default()
    }
}

#[test]
fn aging_round_trip_recovers_active_fractions() {
    let base = CellParameters::reference();
    let truth = aged_truth(&base);
    let curve = charge_curve(&base, &truth);
    let t0 = std::time::Instant::now();
    let fit = identify_aging(&[curve], &base, &base.aging(), &five_free()).unwrap();
    eprintln!("fit {:?} in {:?}", fit, t0.elapsed());
    assert!(fit.rmse_mv < 2.0, "{}", fit.rmse_mv);
    assert!((fit.aging.eps_s_n / truth.eps_s_n - 1.0).abs() < 0.02);
    assert!((fit.aging.eps_s_p / truth.eps_s_p - 1.0).abs() < 0.02);
    assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    let cap = |a: &AgingParameterSet| {
        reference_capacity(&CellModel::new(&base, a, SimConfig::default()).unwrap()).unwrap()
    };
    assert!((cap(&fit.aging) / cap(&truth) - 1.0).abs() < 0.01);
}

#[test]
fn pristine_curve_is_a_fixed_point() {
    let base = CellParameters::reference();
    let curve = charge_curve(&base, &base.aging());
    let fit = identify_aging(&[curve], &base, &base.aging(), &five_free()).unwrap();
    assert!(fit.rmse_mv < 0.5, "{}", fit.rmse_mv);
    assert!((fit.aging.eps_s_n / base.active_vol_frac.n - 1.0).abs() < 0.01);
    assert!((fit.aging.eps_s_p / base.active_vol_frac.p - 1.0).abs() < 0.01);
    let w = base.aging().to_array();
    for (x, w) in fit.aging.to_array().iter().zip(w) {
        assert!(*x >= 0.5 * w - 1e-18 && *x <= 1.5 * w + 1e-18);
    }
}

#[test]
fn pristine_round_trip_over_two_rates() {
    let truth = CellParameters::reference();
    let curves: Vec<MeasuredCurve> = [0.5, 2.0]
        .iter()
        .map(|&r| {
            let tr = simulate_protocol(&truth, &truth.aging(), &make_cccv(r, 4.2, 0.16).unwrap(), 0.0, SimConfig::default()).unwrap();
            MeasuredCurve::from_trace(&tr, 1, CurveMeta::builder().rate(r).build()).unwrap()
        })
        .collect();
    let mut guess = truth.clone();
    guess.active_vol_frac.n *= 1.08;
    guess.active_vol_frac.p *= 0.94;
    guess.d_s.n *= 2.0;
    guess.ohmic_resistance *= 0.6;
    let config = PristineConfig {
        apso: ApsoConfig::new(Vec::new()).with_iters(80).with_particles(60).with_seed(5),
        ..PristineConfig::default()
    };
    let fit = identify_pristine(&curves, &guess, &config).unwrap();
    for r in &fit.per_curve_rmse_mv {
        assert!(*r < 2.0, "{:?}", fit.per_curve_rmse_mv);
    }
    // Truth scores no worse with one rate than with two: the fitness is a mean.
    let one = combined_rmse_mv(&truth, &curves[..1], SimConfig::default()).unwrap();
    let two = combined_rmse_mv(&truth, &curves, SimConfig::default()).unwrap();
    assert!(two.iter().sum::<f64>() / 2.0 <= one[0] + 1e-2);
}
