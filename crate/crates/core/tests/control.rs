use dmpkit_core::control::{
    closed_loop_poles, coupled_step, crossover_frequency, velocity_filter, Controller, CoupledState,
};
use dmpkit_core::sim::{reference_dmp, run_scenario, Perturbation, Scenario};
use dmpkit_core::{delay_margin, Dmp, Gains};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Crossover of `(k_v s + k_p) / s^2` from `w^4 = k_v^2 w^2 + k_p^2`.
fn closed_form_crossover(k_p: f64, k_v: f64) -> f64 {
    ((k_v.powi(2) + (k_v.powi(4) + 4.0 * k_p * k_p).sqrt()) / 2.0).sqrt()
}

fn closed_form_margin(k_p: f64, k_v: f64) -> f64 {
    let w = closed_form_crossover(k_p, k_v);
    (k_v * w / k_p).atan() / w
}

#[test]
fn double_pole_at_minus_five() {
    let poles = closed_loop_poles(25.0, 10.0);
    for p in poles {
        assert_eq!(p.re, -5.0);
        assert_eq!(p.im, 0.0);
    }
}

#[test]
fn delay_margins_of_both_tunings() {
    let proposed = delay_margin(25.0, 10.0);
    let legacy = delay_margin(1000.0, 125.0);
    assert!((proposed - closed_form_margin(25.0, 10.0)).abs() < 1e-12);
    assert!((legacy - closed_form_margin(1000.0, 125.0)).abs() < 1e-12);
    assert!((proposed - 0.130).abs() <= 0.002, "{proposed}");
    assert!((legacy - 0.012).abs() <= 0.0005, "{legacy}");
    assert!((crossover_frequency(25.0, 10.0) - 10.29).abs() < 0.01);
}

#[test]
fn margin_approaches_quarter_period_for_large_velocity_gain() {
    let k_p = 25.0;
    let mut prev_err = f64::INFINITY;
    for k_v in [1e2, 1e3, 1e4] {
        let ratio = delay_margin(k_p, k_v) / (std::f64::consts::FRAC_PI_2 / k_v);
        let err = (ratio - 1.0).abs();
        assert!(err < prev_err);
        prev_err = err;
    }
    assert!(prev_err < 1e-3);
}

proptest! {
    #[test]
    fn margin_matches_closed_form(k_p in 0.1f64..5000.0, k_v in 0.1f64..500.0) {
        let got = delay_margin(k_p, k_v);
        let expected = closed_form_margin(k_p, k_v);
        prop_assert!((got - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn adaptive_time_constant_never_below_nominal(e0 in -0.5f64..0.5, e1 in -0.5f64..0.5, ya in -1.0f64..1.0) {
        let dmp = reference_dmp();
        let mut st = CoupledState::start(&dmp);
        st.e = vec![e0, e1];
        let (next, _) = coupled_step(&dmp, &st, &[ya, -ya], &[0.0, 0.0], &Gains::proposed(), 0.004);
        prop_assert!(next.tau_a >= dmp.tau());
    }
}

#[test]
fn filter_step_and_noise_attenuation() {
    let out = velocity_filter(&[0.0], &[1.0], 20.0, 0.004);
    assert!((out[0] - (1.0 - (-0.08f64).exp())).abs() < 1e-15);
    assert!((out[0] - 0.0769).abs() < 5e-5);

    let (cutoff, dt) = (20.0, 0.004);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = [0.0];
    let n = 100_000;
    let (mut var_in, mut var_out) = (0.0, 0.0);
    for _ in 0..n {
        let raw: f64 = StandardNormal.sample(&mut rng);
        state = [velocity_filter(&state, &[raw], cutoff, dt)[0]];
        var_in += raw * raw;
        var_out += state[0] * state[0];
    }
    var_in /= n as f64;
    var_out /= n as f64;
    assert!(var_out < var_in);
    // Stationary variance ratio of a first-order smoother with gain a is a / (2 - a).
    let a = 1.0 - (-cutoff * dt).exp();
    let expected = a / (2.0 - a);
    assert!((var_out / var_in - expected).abs() < 0.05 * expected, "{} vs {expected}", var_out / var_in);
}

/// Ideal plant held still between 2 s and 3 s; returns (dt, y_c_dot, y_c_ddot) per step.
fn stop_run() -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dmp = reference_dmp();
    let dt = 0.004;
    let mut ctrl = Controller::new(&dmp, Gains::proposed());
    let mut y = dmp.start().to_vec();
    let mut v = [0.0; 2];
    let mut prev_y = y.clone();
    let (mut vel, mut acc) = (Vec::new(), Vec::new());
    for n in 0..2500 {
        let t = n as f64 * dt;
        let raw: Vec<f64> = y.iter().zip(&prev_y).map(|(a, b)| (a - b) / dt).collect();
        prev_y = y.clone();
        let out = ctrl.step(&y, &raw, dt);
        vel.push(out.y_c_dot.clone());
        acc.push(out.y_c_ddot.clone());
        if (2.0..3.0).contains(&t) {
            v.fill(0.0);
        } else {
            for c in 0..2 {
                v[c] += out.acc[c] * dt;
                y[c] += v[c] * dt;
            }
        }
    }
    (dt, vel, acc)
}

#[test]
fn reference_acceleration_is_derivative_of_reference_velocity() {
    let (dt, vel, acc) = stop_run();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..vel.len() - 1 {
        for c in 0..2 {
            let fd = (vel[k + 1][c] - vel[k - 1][c]) / (2.0 * dt);
            num += (fd - acc[k][c]).powi(2);
            den += acc[k][c].powi(2);
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel < 0.02, "relative rms {rel}");
}

#[test]
fn reference_slows_while_plant_is_held() {
    let (dt, vel, _) = stop_run();
    let speed = |k: usize| vel[k].iter().map(|v| v * v).sum::<f64>().sqrt();
    let start = (2.05 / dt) as usize;
    let end = (3.0 / dt) as usize;
    for k in start..end {
        assert!(speed(k + 1) <= speed(k), "speed rose at t = {}", k as f64 * dt);
    }
    let mid = (2.5 / dt) as usize;
    assert!(speed(end) < 0.6 * speed(mid));
    assert!(speed(end) < 0.2 * speed((2.0 / dt) as usize));
}

#[test]
fn execution_time_scales_with_tau() {
    let mut dmp = reference_dmp();
    let scenario = Scenario { duration: 30.0, ..Scenario::ideal(Gains::proposed(), Perturbation::None) };
    let time_to_finish = |dmp: &Dmp| {
        let r = run_scenario(dmp, &scenario).unwrap();
        r.log.iter().find(|row| row.x_c <= 0.01).map(|row| row.t).unwrap()
    };
    let base = time_to_finish(&dmp);
    dmp.set_tau(2.0 * dmp.tau()).unwrap();
    let doubled = time_to_finish(&dmp);
    assert!((doubled / base - 2.0).abs() < 0.01, "{base} -> {doubled}");
}
