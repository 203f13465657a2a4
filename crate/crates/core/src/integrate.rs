//! Fine-step Euler-Maruyama integration of the benchmark systems.
//!
//! Trajectories are integrated at a fine step `dt_fine` (default `1e-4`) and
//! the slow block is recorded every `lag` (default `0.01`). Both steps are
//! configurable but must be commensurate.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Error;
use crate::rng;
use crate::system::{check_slow_dim, fast_stationary_gaussian, Preset, SlowFastSystem, System};
use crate::Result;

/// Fine integration step and coarse recording lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrid {
    pub dt_fine: f64,
    pub lag: f64,
}

impl Default for SimGrid {
    fn default() -> Self {
        SimGrid {
            dt_fine: 1e-4,
            lag: 0.01,
        }
    }
}

impl SimGrid {
    pub fn new(dt_fine: f64, lag: f64) -> Self {
        SimGrid { dt_fine, lag }
    }

    /// Number of fine steps per lag; errors unless `lag` is an integer
    /// multiple of `dt_fine`.
    pub fn steps_per_lag(&self) -> Result<usize> {
        if !(self.dt_fine > 0.0) || !(self.lag > 0.0) {
            return Err(Error::config(format!(
                "time steps must be positive: dt_fine = {}, lag = {}",
                self.dt_fine, self.lag
            )));
        }
        integer_ratio(self.lag, self.dt_fine).ok_or_else(|| {
            Error::config(format!(
                "lag {} is not an integer multiple of dt_fine {}",
                self.lag, self.dt_fine
            ))
        })
    }

    /// Number of lags covering `[0, t_end]`; errors unless `t_end` is an
    /// integer multiple of `lag`.
    pub fn lags_until(&self, t_end: f64) -> Result<usize> {
        if !(t_end >= 0.0) {
            return Err(Error::config(format!("horizon must be >= 0, got {t_end}")));
        }
        integer_ratio(t_end, self.lag).ok_or_else(|| {
            Error::config(format!(
                "horizon {} is not an integer multiple of lag {}",
                t_end, self.lag
            ))
        })
    }
}

fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let ratio = a / b;
    let k = libm::round(ratio);
    if (ratio - k).abs() <= 1e-9 * ratio.max(1.0) && k >= 0.0 && k < 2e9 {
        Some(k as usize)
    } else {
        None
    }
}

/// Slow-variable states recorded on the lag grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub system: Option<Preset>,
    pub lag: f64,
    /// Recorded (slow) dimension.
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major `times.len() x dim`.
    pub values: Vec<f64>,
    /// Fast block on the same grid, when recorded for diagnostics.
    pub fast_values: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    #[inline]
    pub fn state(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
}

/// Scratch buffers for the inner stepping loop.
pub struct Stepper {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    noise: Vec<f64>,
}

impl Stepper {
    pub fn new(sys: &impl SlowFastSystem) -> Self {
        Stepper {
            drift: vec![0.0; sys.dim()],
            diffusion: vec![0.0; sys.dim() * sys.noise_dim()],
            noise: vec![0.0; sys.noise_dim()],
        }
    }

    /// One in-place Euler-Maruyama step with the given standard normal
    /// draws: `s += f(s) dt + g(s) sqrt(dt) xi`.
    #[inline]
    pub fn step_with_noise(
        &mut self,
        sys: &impl SlowFastSystem,
        state: &mut [f64],
        dt: f64,
        noise: &[f64],
    ) {
        let dim = state.len();
        let m = noise.len();
        sys.drift(state, &mut self.drift);
        sys.diffusion(state, &mut self.diffusion);
        let sqrt_dt = libm::sqrt(dt);
        for i in 0..dim {
            let mut acc = state[i] + self.drift[i] * dt;
            let row = &self.diffusion[i * m..(i + 1) * m];
            for j in 0..m {
                acc += row[j] * sqrt_dt * noise[j];
            }
            state[i] = acc;
        }
    }

    /// One in-place step drawing its own noise.
    #[inline]
    pub fn step(&mut self, sys: &impl SlowFastSystem, state: &mut [f64], dt: f64, rng: &mut impl Rng) {
        rng::fill_normal(rng, &mut self.noise);
        sys.drift(state, &mut self.drift);
        sys.diffusion(state, &mut self.diffusion);
        let dim = state.len();
        let m = self.noise.len();
        let sqrt_dt = libm::sqrt(dt);
        for i in 0..dim {
            let mut acc = state[i] + self.drift[i] * dt;
            let row = &self.diffusion[i * m..(i + 1) * m];
            for j in 0..m {
                acc += row[j] * sqrt_dt * self.noise[j];
            }
            state[i] = acc;
        }
    }

    /// As [`Stepper::step`], but only the fast block is advanced; the slow
    /// coordinates stay frozen.
    #[inline]
    pub fn step_fast_frozen(
        &mut self,
        sys: &impl SlowFastSystem,
        state: &mut [f64],
        dt: f64,
        rng: &mut impl Rng,
    ) {
        rng::fill_normal(rng, &mut self.noise);
        sys.drift(state, &mut self.drift);
        sys.diffusion(state, &mut self.diffusion);
        let dim = state.len();
        let m = self.noise.len();
        let sqrt_dt = libm::sqrt(dt);
        for i in sys.dim_slow()..dim {
            let mut acc = state[i] + self.drift[i] * dt;
            let row = &self.diffusion[i * m..(i + 1) * m];
            for j in 0..m {
                acc += row[j] * sqrt_dt * self.noise[j];
            }
            state[i] = acc;
        }
    }
}

#[inline]
fn all_finite(state: &[f64]) -> bool {
    state.iter().all(|v| v.is_finite())
}

fn blowup(t: f64, state: &[f64]) -> Error {
    Error::IntegrationBlowup {
        time: t,
        state: state.to_vec(),
        trajectory: None,
    }
}

/// One Euler-Maruyama step as a pure function:
/// `state + drift(state) dt + diffusion(state) sqrt(dt) noise`.
///
/// `t` only decorates the blow-up error. `noise` must hold one standard
/// normal draw per independent Brownian component.
pub fn euler_maruyama_step(
    sys: &impl SlowFastSystem,
    t: f64,
    state: &[f64],
    dt: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("dt must be positive, got {dt}")));
    }
    if state.len() != sys.dim() {
        return Err(Error::shape(format!(
            "state has {} coordinates, system expects {}",
            state.len(),
            sys.dim()
        )));
    }
    if noise.len() != sys.noise_dim() {
        return Err(Error::shape(format!(
            "{} noise draws supplied, system has {} Brownian components",
            noise.len(),
            sys.noise_dim()
        )));
    }
    let mut out = state.to_vec();
    let mut stepper = Stepper::new(sys);
    stepper.step_with_noise(sys, &mut out, dt, noise);
    if !all_finite(&out) {
        return Err(blowup(t, &out));
    }
    Ok(out)
}

/// Integrate the full system from `(x0, y0)` to `t_end`, recording the slow
/// block every lag. Returns `t_end / lag + 1` slow states.
pub fn simulate_slow(
    sys: &impl SlowFastSystem,
    x0: &[f64],
    y0: &[f64],
    t_end: f64,
    grid: &SimGrid,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    simulate(sys, x0, y0, t_end, grid, rng, false)
}

/// As [`simulate_slow`], optionally recording the fast block for
/// diagnostics.
pub fn simulate(
    sys: &impl SlowFastSystem,
    x0: &[f64],
    y0: &[f64],
    t_end: f64,
    grid: &SimGrid,
    rng: &mut impl Rng,
    record_fast: bool,
) -> Result<Trajectory> {
    let (ds, df) = (sys.dim_slow(), sys.dim_fast());
    if x0.len() != ds || y0.len() != df {
        return Err(Error::shape(format!(
            "initial condition ({}, {}) does not match system dimensions ({ds}, {df})",
            x0.len(),
            y0.len()
        )));
    }
    let steps_per_lag = grid.steps_per_lag()?;
    let n_lags = grid.lags_until(t_end)?;

    let mut state = Vec::with_capacity(ds + df);
    state.extend_from_slice(x0);
    state.extend_from_slice(y0);
    if !all_finite(&state) {
        return Err(blowup(0.0, &state));
    }

    let mut times = Vec::with_capacity(n_lags + 1);
    let mut values = Vec::with_capacity((n_lags + 1) * ds);
    let mut fast_values = record_fast.then(|| Vec::with_capacity((n_lags + 1) * df));

    times.push(0.0);
    values.extend_from_slice(&state[..ds]);
    if let Some(fv) = fast_values.as_mut() {
        fv.extend_from_slice(&state[ds..]);
    }

    let mut stepper = Stepper::new(sys);
    for k in 0..n_lags {
        for sub in 0..steps_per_lag {
            stepper.step(sys, &mut state, grid.dt_fine, rng);
            if !all_finite(&state) {
                let t = k as f64 * grid.lag + (sub + 1) as f64 * grid.dt_fine;
                return Err(blowup(t, &state));
            }
        }
        times.push((k + 1) as f64 * grid.lag);
        values.extend_from_slice(&state[..ds]);
        if let Some(fv) = fast_values.as_mut() {
            fv.extend_from_slice(&state[ds..]);
        }
    }

    Ok(Trajectory {
        system: sys.preset_id(),
        lag: grid.lag,
        dim: ds,
        times,
        values,
        fast_values,
    })
}

/// Advance only the fast block for `duration` with the slow coordinates
/// frozen at their current values.
pub fn integrate_fast_frozen(
    sys: &impl SlowFastSystem,
    state: &mut [f64],
    duration: f64,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    if !(dt > 0.0) || !(duration >= 0.0) {
        return Err(Error::config(format!(
            "fast equilibration wants dt > 0 and duration >= 0, got {dt}, {duration}"
        )));
    }
    let n = libm::ceil(duration / dt) as usize;
    let mut stepper = Stepper::new(sys);
    for k in 0..n {
        stepper.step_fast_frozen(sys, state, dt, rng);
        if !all_finite(state) {
            return Err(blowup((k + 1) as f64 * dt, state));
        }
    }
    Ok(())
}

/// Default fine step used by the empirical fast-block sampler.
pub const FAST_SAMPLER_DT: f64 = 1e-4;

/// Draw one fast-block sample from the stationary law conditioned on the
/// slow state `x`.
///
/// Systems with a known conditioned Gaussian law sample it directly. The
/// triad system has no stated closed form; its fast block is equilibrated
/// empirically by integrating for ten relaxation times with `x` frozen.
pub fn sample_fast_stationary(sys: &System, x: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
    sample_fast_stationary_with_dt(sys, x, FAST_SAMPLER_DT, rng)
}

/// As [`sample_fast_stationary`] with an explicit burn-in step for the
/// empirical path.
pub fn sample_fast_stationary_with_dt(
    sys: &System,
    x: &[f64],
    dt: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    check_slow_dim(sys, x)?;
    if let Some((mean, std)) = fast_stationary_gaussian(sys, x) {
        let mut y = vec![0.0; mean.len()];
        for i in 0..y.len() {
            y[i] = mean[i] + std[i] * rng::normal(rng);
        }
        return Ok(y);
    }
    // Empirical: burn in the fast block from rest for ten relaxation times.
    let mut state = vec![0.0; sys.dim()];
    state[..x.len()].copy_from_slice(x);
    let horizon = 10.0 * sys.fast_relaxation_time();
    integrate_fast_frozen(sys, &mut state, horizon, dt, rng)?;
    Ok(state[sys.dim_slow()..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::system::ScalarOu;

    /// Fixture with zero drift and zero diffusion.
    struct Still;
    impl SlowFastSystem for Still {
        fn dim_slow(&self) -> usize {
            2
        }
        fn dim_fast(&self) -> usize {
            0
        }
        fn noise_dim(&self) -> usize {
            1
        }
        fn drift(&self, _s: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn diffusion(&self, _s: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn ic_domain(&self) -> &[(f64, f64)] {
            &[(0.0, 1.0), (0.0, 1.0)]
        }
    }

    #[test]
    fn zero_drift_zero_diffusion_is_identity() {
        let s = [0.7, -0.3];
        let out = euler_maruyama_step(&Still, 0.0, &s, 0.5, &[1.3]).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn deterministic_euler_matches_hand_value() {
        // dx = -x dt, x = 1, dt = 0.1, no noise -> 0.9
        let ou = ScalarOu::new(1.0, 1.0);
        let out = euler_maruyama_step(&ou, 0.0, &[1.0], 0.1, &[0.0]).unwrap();
        assert!((out[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_wrong_noise_count() {
        let sys = System::preset(Preset::Triad);
        let err = euler_maruyama_step(&sys, 0.0, &[0.0, 0.0, 0.0], 1e-4, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn blowup_is_reported_with_time() {
        // Unstable explicit Euler: theta*dt = -40 explodes from x0 = 1.
        let ou = ScalarOu::new(-400.0, 0.0);
        let grid = SimGrid::new(0.1, 0.1);
        let mut rng = stream_rng(0, 0);
        let err = simulate_slow(&ou, &[1e300], &[], 1.0, &grid, &mut rng).unwrap_err();
        match err {
            Error::IntegrationBlowup { time, .. } => assert!(time > 0.0),
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn single_lag_burst_has_two_states() {
        let sys = System::preset(Preset::SkewProduct);
        let grid = SimGrid::default();
        let mut rng = stream_rng(1, 0);
        let traj = simulate_slow(&sys, &[1.0], &[0.0], 0.01, &grid, &mut rng).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.state(0), &[1.0]);
        assert_eq!(traj.system, Some(Preset::SkewProduct));
    }

    #[test]
    fn grid_rejects_non_commensurate_steps() {
        assert!(SimGrid::new(3e-4, 0.01).steps_per_lag().is_err());
        assert!(SimGrid::new(1e-4, 0.01).steps_per_lag().unwrap() == 100);
        let grid = SimGrid::default();
        assert!(grid.lags_until(0.015).is_err());
        assert_eq!(grid.lags_until(1.0).unwrap(), 100);
    }

    #[test]
    fn identical_seed_bit_identical_trajectory() {
        let sys = System::preset(Preset::ExpOu);
        let grid = SimGrid::default();
        let a = simulate_slow(&sys, &[1.5], &[0.2], 0.2, &grid, &mut stream_rng(9, 3)).unwrap();
        let b = simulate_slow(&sys, &[1.5], &[0.2], 0.2, &grid, &mut stream_rng(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lag_spacing_is_uniform() {
        let sys = System::preset(Preset::SkewProduct);
        let grid = SimGrid::default();
        let mut rng = stream_rng(4, 0);
        let traj = simulate_slow(&sys, &[0.5], &[0.1], 0.5, &grid, &mut rng).unwrap();
        for k in 1..traj.len() {
            let dt = traj.times[k] - traj.times[k - 1];
            assert!((dt - grid.lag).abs() <= 1e-12 * grid.lag);
        }
    }

    #[test]
    fn closed_form_fast_sampler_moments() {
        // skew product: N(0, lambda/alpha), variance 2.4
        let sys = System::preset(Preset::SkewProduct);
        let mut rng = stream_rng(11, 0);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let y = sample_fast_stationary(&sys, &[0.3], &mut rng).unwrap()[0];
            s += y;
            s2 += y * y;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 2.4).abs() < 0.05, "var {var}");

        // exp-mean OU at x = 0: mean 1.0
        let sys = System::preset(Preset::ExpOu);
        let n = 10_000;
        let mut s = 0.0;
        for _ in 0..n {
            s += sample_fast_stationary(&sys, &[0.0], &mut rng).unwrap()[0];
        }
        assert!((s / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn oscillator_fast_sampler_moments() {
        // at the origin: mean 0, std 0.1
        let sys = System::preset(Preset::Oscillator);
        let mut rng = stream_rng(12, 0);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let y = sample_fast_stationary(&sys, &[0.0, 0.0], &mut rng).unwrap()[0];
            s += y;
            s2 += y * y;
        }
        let mean = s / n as f64;
        let std = libm::sqrt(s2 / n as f64 - mean * mean);
        assert!(mean.abs() < 5e-3, "mean {mean}");
        assert!((std - 0.1).abs() < 0.005, "std {std}");
    }

    #[test]
    fn fast_sampler_rejects_bad_slow_state() {
        let sys = System::preset(Preset::Oscillator);
        let mut rng = stream_rng(0, 0);
        assert!(sample_fast_stationary(&sys, &[0.0], &mut rng).is_err());
    }
}
