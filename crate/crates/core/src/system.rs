//! Benchmark slow-fast SDE systems.
//!
//! Every system splits its state `[x..., y...]` into a slow block of
//! dimension `dim_slow` and a fast block whose drift and diffusion carry the
//! `1/eps` scale separation. Each system declares its independent Brownian
//! components explicitly; the integrator consumes exactly `noise_dim`
//! standard normal draws per step, so there is no implicit correlation
//! between equations.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

/// Drift/diffusion contract shared by the benchmark systems and test
/// fixtures.
pub trait SlowFastSystem {
    fn dim_slow(&self) -> usize;
    fn dim_fast(&self) -> usize;
    fn dim(&self) -> usize {
        self.dim_slow() + self.dim_fast()
    }
    /// Number of independent Brownian components.
    fn noise_dim(&self) -> usize;
    /// Drift at `state`, written to `out` (length `dim`), in state units per
    /// unit time. Fast-block entries carry their `1/eps` factors.
    fn drift(&self, state: &[f64], out: &mut [f64]);
    /// Diffusion coefficient matrix at `state`, written row-major to `out`
    /// (`dim x noise_dim`). Fast-block rows carry their `1/sqrt(eps)`
    /// factors.
    fn diffusion(&self, state: &[f64], out: &mut [f64]);
    /// Per-coordinate sampling intervals for initial conditions.
    fn ic_domain(&self) -> &[(f64, f64)];
    /// Benchmark identifier, for systems that have one.
    fn preset_id(&self) -> Option<Preset> {
        None
    }
}

/// Identifiers of the five benchmark systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    SkewProduct,
    ExpOu,
    Triad,
    Nonlinear3d,
    Oscillator,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::SkewProduct,
        Preset::ExpOu,
        Preset::Triad,
        Preset::Nonlinear3d,
        Preset::Oscillator,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::SkewProduct => "skew_product",
            Preset::ExpOu => "exp_ou",
            Preset::Triad => "triad",
            Preset::Nonlinear3d => "nonlinear3d",
            Preset::Oscillator => "oscillator",
        }
    }

    /// Accepts both the descriptive names and the short `ex*` aliases.
    pub fn parse(s: &str) -> Option<Preset> {
        match s {
            "skew_product" | "ex1" => Some(Preset::SkewProduct),
            "exp_ou" | "ex2" => Some(Preset::ExpOu),
            "triad" | "ext" => Some(Preset::Triad),
            "nonlinear3d" | "ex3" => Some(Preset::Nonlinear3d),
            "oscillator" | "ex4" => Some(Preset::Oscillator),
            _ => None,
        }
    }
}

/// One of the five benchmark systems, with parameters and IC domain.
///
/// `preset(..)` constructs them with the standard parameter values; all
/// fields stay public so tests and overrides can adjust them.
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    /// 2d skew product: `dx = (1 - y^2) x dt`,
    /// `dy = -(alpha/eps) y dt + sqrt(2 lambda/eps) dW`.
    SkewProduct {
        alpha: f64,
        lambda: f64,
        epsilon: f64,
        ic_domain: Vec<(f64, f64)>,
    },
    /// 2d exponential-mean OU: `dx = (1 - x + y) dt`,
    /// `dy = (e^{-x} - y)/eps dt + sqrt(2/eps) dW`.
    ExpOu {
        epsilon: f64,
        ic_domain: Vec<(f64, f64)>,
    },
    /// 3d triad: `dx = -(2/eps) y1 y2 dt`,
    /// `dy1 = (-y1/eps^2 + x y2/eps) dt + (sigma/eps) dW1`,
    /// `dy2 = (-2 y2/eps^2 + x y1/eps) dt + (sigma/eps) dW2`.
    Triad {
        sigma: f64,
        epsilon: f64,
        ic_domain: Vec<(f64, f64)>,
    },
    /// 3d nonlinear system with 2 slow coordinates:
    /// `dx1 = x2 dt + sigma1 dW1`,
    /// `dx2 = (-x1 - x2 + y^2) dt + sigma2 dW2`,
    /// `dy = -(y - x1/4)/eps dt + sigma3 sqrt(2/eps) dW3`.
    Nonlinear3d {
        sigma1: f64,
        sigma2: f64,
        sigma3: f64,
        epsilon: f64,
        ic_domain: Vec<(f64, f64)>,
    },
    /// 3d stochastic oscillator with 2 slow coordinates:
    /// `dx1 = (lambda x1 - theta x2 - gamma x1 y) dt + sigma dW1`,
    /// `dx2 = (theta x1 + lambda x2 - gamma x2 y) dt + sigma dW2`,
    /// `dy = -(y - x1^2 - x2^2)/eps dt + sigma sqrt(2/eps) dW3`.
    Oscillator {
        lambda: f64,
        theta: f64,
        gamma: f64,
        sigma: f64,
        epsilon: f64,
        ic_domain: Vec<(f64, f64)>,
    },
}

impl System {
    /// Standard parameter values and IC sampling domains.
    pub fn preset(which: Preset) -> System {
        match which {
            Preset::SkewProduct => System::SkewProduct {
                alpha: 1.0,
                lambda: 2.4,
                epsilon: 0.005,
                ic_domain: vec![(-1.5, 2.0), (-1.0, 1.6)],
            },
            Preset::ExpOu => System::ExpOu {
                epsilon: 0.001,
                ic_domain: vec![(-1.5, 2.0), (-4.0, 4.0)],
            },
            // eps^2 = 0.001
            Preset::Triad => System::Triad {
                sigma: 1.0,
                epsilon: libm::sqrt(0.001),
                ic_domain: vec![(-2.0, 3.0), (-1.0, 1.0), (-1.0, 1.0)],
            },
            Preset::Nonlinear3d => System::Nonlinear3d {
                sigma1: 0.3,
                sigma2: 0.3,
                sigma3: 0.1,
                epsilon: 0.001,
                ic_domain: vec![(-1.5, 2.5), (-2.0, 1.5), (-0.6, 1.0)],
            },
            Preset::Oscillator => System::Oscillator {
                lambda: 1.0,
                theta: 1.0,
                gamma: 1.0,
                sigma: 0.1,
                epsilon: 0.001,
                ic_domain: vec![(-1.5, 1.5), (-1.5, 1.5), (0.1, 2.5)],
            },
        }
    }

    pub fn id(&self) -> Preset {
        match self {
            System::SkewProduct { .. } => Preset::SkewProduct,
            System::ExpOu { .. } => Preset::ExpOu,
            System::Triad { .. } => Preset::Triad,
            System::Nonlinear3d { .. } => Preset::Nonlinear3d,
            System::Oscillator { .. } => Preset::Oscillator,
        }
    }

    /// Replace the IC sampling domain (must keep the state dimension).
    pub fn set_ic_domain(&mut self, domain: Vec<(f64, f64)>) -> Result<()> {
        if domain.len() != self.dim() {
            return Err(Error::config(alloc::format!(
                "ic domain has {} intervals, system state is {}-dimensional",
                domain.len(),
                self.dim()
            )));
        }
        for (i, &(lo, hi)) in domain.iter().enumerate() {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config(alloc::format!(
                    "ic interval {i} is empty or non-finite: ({lo}, {hi})"
                )));
            }
        }
        match self {
            System::SkewProduct { ic_domain, .. }
            | System::ExpOu { ic_domain, .. }
            | System::Triad { ic_domain, .. }
            | System::Nonlinear3d { ic_domain, .. }
            | System::Oscillator { ic_domain, .. } => *ic_domain = domain,
        }
        Ok(())
    }

    /// Relaxation time of the stiffest fast coordinate (used to choose
    /// equilibration horizons).
    pub fn fast_relaxation_time(&self) -> f64 {
        match self {
            System::SkewProduct { alpha, epsilon, .. } => epsilon / alpha,
            System::ExpOu { epsilon, .. } => *epsilon,
            System::Triad { epsilon, .. } => epsilon * epsilon,
            System::Nonlinear3d { epsilon, .. } => *epsilon,
            System::Oscillator { epsilon, .. } => *epsilon,
        }
    }
}

impl SlowFastSystem for System {
    fn dim_slow(&self) -> usize {
        match self {
            System::SkewProduct { .. } | System::ExpOu { .. } | System::Triad { .. } => 1,
            System::Nonlinear3d { .. } | System::Oscillator { .. } => 2,
        }
    }

    fn dim_fast(&self) -> usize {
        match self {
            System::SkewProduct { .. } | System::ExpOu { .. } => 1,
            System::Triad { .. } => 2,
            System::Nonlinear3d { .. } | System::Oscillator { .. } => 1,
        }
    }

    fn noise_dim(&self) -> usize {
        match self {
            System::SkewProduct { .. } | System::ExpOu { .. } => 1,
            System::Triad { .. } => 2,
            System::Nonlinear3d { .. } | System::Oscillator { .. } => 3,
        }
    }

    fn drift(&self, s: &[f64], out: &mut [f64]) {
        match self {
            System::SkewProduct { alpha, epsilon, .. } => {
                let (x, y) = (s[0], s[1]);
                out[0] = (1.0 - y * y) * x;
                out[1] = -(alpha / epsilon) * y;
            }
            System::ExpOu { epsilon, .. } => {
                let (x, y) = (s[0], s[1]);
                out[0] = 1.0 - x + y;
                out[1] = (libm::exp(-x) - y) / epsilon;
            }
            System::Triad { epsilon, .. } => {
                let (x, y1, y2) = (s[0], s[1], s[2]);
                let eps2 = epsilon * epsilon;
                out[0] = -2.0 * y1 * y2 / epsilon;
                out[1] = -y1 / eps2 + x * y2 / epsilon;
                out[2] = -2.0 * y2 / eps2 + x * y1 / epsilon;
            }
            System::Nonlinear3d { epsilon, .. } => {
                let (x1, x2, y) = (s[0], s[1], s[2]);
                out[0] = x2;
                out[1] = -x1 - x2 + y * y;
                out[2] = -(y - 0.25 * x1) / epsilon;
            }
            System::Oscillator {
                lambda,
                theta,
                gamma,
                epsilon,
                ..
            } => {
                let (x1, x2, y) = (s[0], s[1], s[2]);
                out[0] = lambda * x1 - theta * x2 - gamma * x1 * y;
                out[1] = theta * x1 + lambda * x2 - gamma * x2 * y;
                out[2] = -(y - x1 * x1 - x2 * x2) / epsilon;
            }
        }
    }

    fn diffusion(&self, _s: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self {
            System::SkewProduct {
                lambda, epsilon, ..
            } => {
                // (2 x 1): noise drives the fast coordinate only.
                out[1] = libm::sqrt(2.0 * lambda / epsilon);
            }
            System::ExpOu { epsilon, .. } => {
                out[1] = libm::sqrt(2.0 / epsilon);
            }
            System::Triad { sigma, epsilon, .. } => {
                // (3 x 2): rows y1, y2 get their own components.
                out[1 * 2 + 0] = sigma / epsilon;
                out[2 * 2 + 1] = sigma / epsilon;
            }
            System::Nonlinear3d {
                sigma1,
                sigma2,
                sigma3,
                epsilon,
                ..
            } => {
                // (3 x 3) diagonal.
                out[0] = *sigma1;
                out[1 * 3 + 1] = *sigma2;
                out[2 * 3 + 2] = sigma3 * libm::sqrt(2.0 / epsilon);
            }
            System::Oscillator { sigma, epsilon, .. } => {
                out[0] = *sigma;
                out[1 * 3 + 1] = *sigma;
                out[2 * 3 + 2] = sigma * libm::sqrt(2.0 / epsilon);
            }
        }
    }

    fn ic_domain(&self) -> &[(f64, f64)] {
        match self {
            System::SkewProduct { ic_domain, .. }
            | System::ExpOu { ic_domain, .. }
            | System::Triad { ic_domain, .. }
            | System::Nonlinear3d { ic_domain, .. }
            | System::Oscillator { ic_domain, .. } => ic_domain,
        }
    }

    fn preset_id(&self) -> Option<Preset> {
        Some(self.id())
    }
}

/// Scalar Ornstein-Uhlenbeck process `dx = -theta x dt + sigma dW`.
///
/// Test fixture with closed-form moments: mean `x0 e^{-theta t}`, variance
/// `sigma^2/(2 theta) (1 - e^{-2 theta t})`. Treated as a 1-dimensional
/// "slow" system with no fast block.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarOu {
    pub theta: f64,
    pub sigma: f64,
    pub ic_domain: Vec<(f64, f64)>,
}

impl ScalarOu {
    pub fn new(theta: f64, sigma: f64) -> Self {
        ScalarOu {
            theta,
            sigma,
            ic_domain: vec![(-1.0, 1.0)],
        }
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }

    pub fn mean_at(&self, x0: f64, t: f64) -> f64 {
        x0 * libm::exp(-self.theta * t)
    }

    pub fn variance_at(&self, t: f64) -> f64 {
        self.stationary_variance() * (1.0 - libm::exp(-2.0 * self.theta * t))
    }
}

impl SlowFastSystem for ScalarOu {
    fn dim_slow(&self) -> usize {
        1
    }
    fn dim_fast(&self) -> usize {
        0
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn drift(&self, s: &[f64], out: &mut [f64]) {
        out[0] = -self.theta * s[0];
    }
    fn diffusion(&self, _s: &[f64], out: &mut [f64]) {
        out[0] = self.sigma;
    }
    fn ic_domain(&self) -> &[(f64, f64)] {
        &self.ic_domain
    }
}

/// The conditioned stationary law of a system's fast block, where a closed
/// form exists.
pub(crate) fn fast_stationary_gaussian(sys: &System, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    match sys {
        System::SkewProduct { alpha, lambda, .. } => {
            Some((vec![0.0], vec![libm::sqrt(lambda / alpha)]))
        }
        System::ExpOu { .. } => Some((vec![libm::exp(-x[0])], vec![1.0])),
        System::Nonlinear3d { sigma3, .. } => Some((vec![0.25 * x[0]], vec![*sigma3])),
        System::Oscillator { sigma, .. } => {
            Some((vec![x[0] * x[0] + x[1] * x[1]], vec![*sigma]))
        }
        System::Triad { .. } => None,
    }
}

pub(crate) fn check_slow_dim(sys: &System, x: &[f64]) -> Result<()> {
    if x.len() != sys.dim_slow() {
        return Err(Error::Shape(
            alloc::format!(
                "slow state has {} coordinates, system {} expects {}",
                x.len(),
                sys.id().name().to_string(),
                sys.dim_slow()
            ),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_dimensions_and_noise_counts() {
        let expect = [
            (Preset::SkewProduct, 1, 1, 1),
            (Preset::ExpOu, 1, 1, 1),
            (Preset::Triad, 1, 2, 2),
            (Preset::Nonlinear3d, 2, 1, 3),
            (Preset::Oscillator, 2, 1, 3),
        ];
        for (p, ds, df, m) in expect {
            let s = System::preset(p);
            assert_eq!(s.dim_slow(), ds, "{}", p.name());
            assert_eq!(s.dim_fast(), df, "{}", p.name());
            assert_eq!(s.noise_dim(), m, "{}", p.name());
            assert_eq!(s.ic_domain().len(), ds + df, "{}", p.name());
        }
    }

    #[test]
    fn drift_and_diffusion_finite_on_ic_domain_corners() {
        for p in Preset::ALL {
            let s = System::preset(p);
            let dim = s.dim();
            let m = s.noise_dim();
            // All corners of the IC box.
            for corner in 0..(1usize << dim) {
                let state: Vec<f64> = (0..dim)
                    .map(|i| {
                        let (lo, hi) = s.ic_domain()[i];
                        if corner >> i & 1 == 0 {
                            lo
                        } else {
                            hi
                        }
                    })
                    .collect();
                let mut f = vec![0.0; dim];
                let mut g = vec![0.0; dim * m];
                s.drift(&state, &mut f);
                s.diffusion(&state, &mut g);
                assert!(f.iter().all(|v| v.is_finite()), "{} drift", p.name());
                assert!(g.iter().all(|v| v.is_finite()), "{} diffusion", p.name());
            }
        }
    }

    #[test]
    fn preset_parameters_match_reference_values() {
        match System::preset(Preset::SkewProduct) {
            System::SkewProduct {
                alpha,
                lambda,
                epsilon,
                ..
            } => {
                assert_eq!(alpha, 1.0);
                assert_eq!(lambda, 2.4);
                assert_eq!(epsilon, 0.005);
            }
            _ => unreachable!(),
        }
        match System::preset(Preset::Triad) {
            System::Triad { sigma, epsilon, .. } => {
                assert_eq!(sigma, 1.0);
                assert!((epsilon * epsilon - 0.001).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
        match System::preset(Preset::Oscillator) {
            System::Oscillator {
                lambda,
                theta,
                gamma,
                sigma,
                epsilon,
                ..
            } => {
                assert_eq!((lambda, theta, gamma, sigma, epsilon), (1.0, 1.0, 1.0, 0.1, 0.001));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn name_round_trip_and_aliases() {
        for p in Preset::ALL {
            assert_eq!(Preset::parse(p.name()), Some(p));
        }
        assert_eq!(Preset::parse("ex1"), Some(Preset::SkewProduct));
        assert_eq!(Preset::parse("ex2"), Some(Preset::ExpOu));
        assert_eq!(Preset::parse("ext"), Some(Preset::Triad));
        assert_eq!(Preset::parse("ex3"), Some(Preset::Nonlinear3d));
        assert_eq!(Preset::parse("ex4"), Some(Preset::Oscillator));
        assert_eq!(Preset::parse("ex5"), None);
    }

    #[test]
    fn ic_domain_override_validates() {
        let mut s = System::preset(Preset::SkewProduct);
        assert!(s.set_ic_domain(vec![(0.0, 1.0)]).is_err());
        assert!(s.set_ic_domain(vec![(0.0, 1.0), (2.0, 1.0)]).is_err());
        assert!(s.set_ic_domain(vec![(0.0, 1.0), (-1.0, 1.0)]).is_ok());
        assert_eq!(s.ic_domain()[0], (0.0, 1.0));
    }
}
