//! Monte Carlo oracles for the integrator and the fast-block samplers,
//! checked against closed forms.

use slowflow_core::integrate::{
    integrate_fast_frozen, sample_fast_stationary_with_dt, simulate_slow, SimGrid,
};
use slowflow_core::rng::stream_rng;
use slowflow_core::system::{Preset, ScalarOu, SlowFastSystem, System};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

#[test]
fn ou_reaches_stationary_variance() {
    // dx = -x dt + sqrt(2) dW has stationary variance 1.
    let ou = ScalarOu::new(1.0, std::f64::consts::SQRT_2);
    let grid = SimGrid::new(1e-4, 0.1);
    let n_paths = 10_000;
    let mut finals = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let mut rng = stream_rng(100, i as u64);
        // 1e5 fine steps.
        let traj = simulate_slow(&ou, &[0.0], &[], 10.0, &grid, &mut rng).unwrap();
        finals.push(traj.state(traj.len() - 1)[0]);
    }
    let (_, var) = mean_var(&finals);
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn ou_weak_moments_at_unit_time() {
    // Mean and variance at t = 1 against the closed form, within 3
    // standard errors at dt = 1e-4.
    let theta = 0.7;
    let sigma = 0.9;
    let ou = ScalarOu::new(theta, sigma);
    let grid = SimGrid::new(1e-4, 0.01);
    let x0 = 1.3;
    let n = 10_000;
    let mut finals = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(7, i as u64);
        let traj = simulate_slow(&ou, &[x0], &[], 1.0, &grid, &mut rng).unwrap();
        finals.push(traj.state(traj.len() - 1)[0]);
    }
    let (mean, var) = mean_var(&finals);
    let mean_true = ou.mean_at(x0, 1.0);
    let var_true = ou.variance_at(1.0);
    let se_mean = (var_true / n as f64).sqrt();
    let se_var = var_true * (2.0 / n as f64).sqrt();
    assert!(
        (mean - mean_true).abs() < 3.0 * se_mean,
        "mean {mean} vs {mean_true} (se {se_mean})"
    );
    assert!(
        (var - var_true).abs() < 3.0 * se_var,
        "var {var} vs {var_true} (se {se_var})"
    );
}

#[test]
fn skew_product_stays_bounded_over_unit_horizon() {
    let sys = System::preset(Preset::SkewProduct);
    let grid = SimGrid::default();
    for i in 0..100 {
        let mut rng = stream_rng(55, i);
        let y0 = sample_fast_stationary_with_dt(&sys, &[1.5], 1e-4, &mut rng).unwrap();
        let traj = simulate_slow(&sys, &[1.5], &y0, 1.0, &grid, &mut rng).unwrap();
        assert!(traj.values.iter().all(|v| v.is_finite() && v.abs() < 1e3));
    }
}

#[test]
fn triad_ensemble_mean_follows_effective_ou() {
    // The averaged dynamics of the triad slow variable is an OU process
    // with rate 1/2: from x0 = 1 the mean at t = 1 is e^{-1/2}.
    let sys = System::preset(Preset::Triad);
    let grid = SimGrid::default();
    let n = 10_000;
    let mut finals = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(21, i as u64);
        let y0 = sample_fast_stationary_with_dt(&sys, &[1.0], grid.dt_fine, &mut rng).unwrap();
        let traj = simulate_slow(&sys, &[1.0], &y0, 1.0, &grid, &mut rng).unwrap();
        finals.push(traj.state(traj.len() - 1)[0]);
    }
    let (mean, _) = mean_var(&finals);
    let expect = (-0.5f64).exp();
    assert!((mean - expect).abs() < 0.03, "mean {mean} vs {expect}");
}

/// Drawing from the conditioned stationary law and integrating the frozen-x
/// fast block for one slaving time must leave the sample moments unchanged
/// within Monte Carlo bands.
#[test]
fn fast_samplers_are_stationary_fixed_points() {
    let n = 20_000;
    let cases: Vec<(System, Vec<f64>)> = vec![
        (System::preset(Preset::SkewProduct), vec![0.5]),
        (System::preset(Preset::ExpOu), vec![0.3]),
        (System::preset(Preset::Triad), vec![1.0]),
        (System::preset(Preset::Nonlinear3d), vec![1.0, 0.5]),
        (System::preset(Preset::Oscillator), vec![1.0, 1.0]),
    ];
    for (sys, x) in cases {
        let name = sys.id().name();
        let relax = sys.fast_relaxation_time();
        // Fine enough that the explicit-scheme bias sits inside the bands.
        let dt = relax / 100.0;
        let duration = match sys.id() {
            Preset::Triad => {
                let System::Triad { epsilon, .. } = &sys else {
                    unreachable!()
                };
                *epsilon
            }
            Preset::SkewProduct => 0.005,
            _ => 0.001,
        };
        let df = sys.dim_fast();
        let ds = sys.dim_slow();
        let mut before = vec![Vec::with_capacity(n); df];
        let mut after = vec![Vec::with_capacity(n); df];
        for i in 0..n {
            let mut rng = stream_rng(777, i as u64);
            let y = sample_fast_stationary_with_dt(&sys, &x, dt, &mut rng).unwrap();
            let mut state = x.clone();
            state.extend_from_slice(&y);
            integrate_fast_frozen(&sys, &mut state, duration, dt, &mut rng).unwrap();
            for c in 0..df {
                before[c].push(y[c]);
                after[c].push(state[ds + c]);
            }
        }
        for c in 0..df {
            let (mb, vb) = mean_var(&before[c]);
            let (ma, va) = mean_var(&after[c]);
            let se_mean = (vb * 2.0 / n as f64).sqrt();
            let se_var = vb * (4.0 / n as f64).sqrt();
            assert!(
                (ma - mb).abs() < 3.0 * se_mean,
                "{name} fast coord {c}: mean {mb} -> {ma} (se {se_mean})"
            );
            assert!(
                (va - vb).abs() < 3.0 * se_var,
                "{name} fast coord {c}: var {vb} -> {va} (se {se_var})"
            );
        }
    }
}
