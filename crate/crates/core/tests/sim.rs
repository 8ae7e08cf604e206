use dmpkit_core::sim::{reference_dmp, run_scenario, NoiseConfig, Perturbation, Scenario, ScenarioResult};
use dmpkit_core::Gains;

fn noisy(perturbation: Perturbation, seed: u64) -> Scenario {
    Scenario::new(Gains::proposed(), NoiseConfig::realistic(seed), perturbation)
}

fn span(r: &ScenarioResult) -> f64 {
    let first = &r.log[0].y_u;
    let dmp = reference_dmp();
    dmp.goal().iter().zip(first).map(|(g, s)| (g - s).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn identical_seeds_give_identical_logs() {
    let dmp = reference_dmp();
    let a = run_scenario(&dmp, &noisy(Perturbation::stop(), 17)).unwrap();
    let b = run_scenario(&dmp, &noisy(Perturbation::stop(), 17)).unwrap();
    assert_eq!(a, b);
    let c = run_scenario(&dmp, &noisy(Perturbation::stop(), 18)).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn controller_reads_measurement_exactly_delay_steps_old() {
    let dmp = reference_dmp();
    let scenario = Scenario { duration: 2.0, ..noisy(Perturbation::None, 4) };
    let delay = scenario.delay_steps().unwrap();
    assert_eq!(delay, 3);
    let r = run_scenario(&dmp, &scenario).unwrap();
    for (n, row) in r.log.iter().enumerate() {
        let source = n.saturating_sub(delay);
        assert_eq!(row.seen, r.log[source].measured, "step {n}");
    }
}

#[test]
fn measurement_noise_has_configured_variance() {
    let dmp = reference_dmp();
    let std = 1e-3;
    let noise = NoiseConfig {
        pos_meas_std: std,
        vel_proc_std: 0.0,
        kinematic_bias_std: 0.0,
        kinematic_bias_rate: 0.1,
        seed: 8,
    };
    let scenario =
        Scenario { duration: 400.0, delay: 0.0, ..Scenario::new(Gains::proposed(), noise, Perturbation::None) };
    let r = run_scenario(&dmp, &scenario).unwrap();
    let residuals: Vec<f64> =
        r.log.iter().flat_map(|row| row.measured.iter().zip(&row.y_a).map(|(m, y)| m - y)).collect();
    assert!(residuals.len() >= 100_000);
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var - std * std).abs() < 0.05 * std * std, "variance {var}");
}

#[test]
fn kinematic_bias_is_slow_and_calibrated() {
    let dmp = reference_dmp();
    let noise = NoiseConfig {
        pos_meas_std: 0.0,
        vel_proc_std: 0.0,
        kinematic_bias_std: 1e-3,
        kinematic_bias_rate: 5.0,
        seed: 2,
    };
    let scenario =
        Scenario { duration: 400.0, delay: 0.0, ..Scenario::new(Gains::proposed(), noise, Perturbation::None) };
    let r = run_scenario(&dmp, &scenario).unwrap();
    let bias: Vec<f64> = r.log.iter().map(|row| row.measured[0] - row.y_a[0]).collect();
    let n = bias.len() as f64;
    let var = bias.iter().map(|b| b * b).sum::<f64>() / n;
    // About 2000 correlation times, so the sample variance is within a few percent.
    assert!((var - 1e-6).abs() < 0.1e-6, "variance {var}");
    let lag1 = bias.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0) / var;
    let expected = (-5.0f64 * 0.004).exp();
    assert!((lag1 - expected).abs() < 0.01, "lag-one correlation {lag1}");
}

#[test]
fn unperturbed_run_is_not_slowed() {
    let dmp = reference_dmp();
    let r = run_scenario(&dmp, &Scenario::ideal(Gains::proposed(), Perturbation::None)).unwrap();
    assert!((0.99..=1.01).contains(&r.metrics.slowdown_ratio), "{}", r.metrics.slowdown_ratio);
    assert!(r.metrics.final_goal_error < 1e-2 * span(&r));
    assert!(r.metrics.max_reference_deviation < 0.01 * r.range);
    assert!(r.log.iter().all(|row| row.tau_a >= dmp.tau()));
}

#[test]
fn stop_adds_at_least_most_of_its_length() {
    let dmp = reference_dmp();
    // Long enough for both phases to reach the timing threshold.
    let duration = 20.0;
    let nominal = {
        let s = Scenario { duration, ..Scenario::ideal(Gains::proposed(), Perturbation::None) };
        let r = run_scenario(&dmp, &s).unwrap();
        r.log.iter().find(|row| row.x_u <= 0.01).unwrap().t
    };
    for seed in 0..3 {
        let r = run_scenario(&dmp, &Scenario { duration, ..noisy(Perturbation::stop(), seed) }).unwrap();
        let bound = 1.0 + 1.0 / nominal * 0.8;
        assert!(r.metrics.slowdown_ratio >= bound, "seed {seed}: {} < {bound}", r.metrics.slowdown_ratio);
        assert!(r.metrics.final_goal_error < 1e-2 * span(&r));
    }
}

#[test]
fn log_is_uniform_and_complete() {
    let dmp = reference_dmp();
    let r = run_scenario(&dmp, &noisy(Perturbation::push(), 1)).unwrap();
    assert!(!r.aborted && !r.diverged);
    assert_eq!(r.log.len(), 2501);
    for (k, row) in r.log.iter().enumerate() {
        assert!((row.t - k as f64 * 0.004).abs() < 1e-12);
    }
}

#[test]
fn held_plant_does_not_move() {
    let dmp = reference_dmp();
    let r = run_scenario(&dmp, &noisy(Perturbation::stop(), 5)).unwrap();
    let held: Vec<_> = r.log.iter().filter(|row| row.t > 2.0 + 1e-9 && row.t < 3.0 - 1e-9).collect();
    assert!(held.windows(2).all(|w| w[0].y_a == w[1].y_a));
}
