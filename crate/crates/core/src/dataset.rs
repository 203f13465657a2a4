//! Pairwise training data from short burst simulations.
//!
//! Each trajectory of `L` lags contributes the consecutive slow-state pairs
//! `(x_{k-1}, x_k)`; a dataset of `M` pairs therefore needs `ceil(M / L)`
//! trajectories. Record order is deterministic (trajectory index, then step
//! index) and each trajectory draws from its own seed stream, so generation
//! is reproducible record-for-record.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::affine::Affine;
use crate::error::Error;
use crate::integrate::{simulate_slow, SimGrid};
use crate::rng::{stream_rng, uniform};
use crate::system::{Preset, SlowFastSystem, System};
use crate::Result;

/// One-step training pairs `(x0, x1)` at a common lag.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub system: Option<Preset>,
    /// Slow dimension of each pair member.
    pub dim: usize,
    pub lag: f64,
    /// Fine integration step used during generation (provenance).
    pub dt_fine: f64,
    pub seed: u64,
    /// Pairs contributed by each full trajectory; pair `i` came from
    /// trajectory `i / pairs_per_trajectory`.
    pub pairs_per_trajectory: usize,
    /// Records, row-major `(x0 || x1)`, `2 * dim` values per pair.
    pub pairs: Vec<f64>,
    /// When present, `pairs` holds standardized values and this affine maps
    /// physical to standardized units.
    pub normalization: Option<Affine>,
}

impl PairDataset {
    pub fn from_pairs(
        dim: usize,
        lag: f64,
        pairs: Vec<f64>,
        pairs_per_trajectory: usize,
        system: Option<Preset>,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || pairs_per_trajectory == 0 {
            return Err(Error::config("dim and pairs_per_trajectory must be >= 1"));
        }
        if !(lag > 0.0) {
            return Err(Error::config("lag must be positive"));
        }
        if pairs.len() % (2 * dim) != 0 {
            return Err(Error::shape(format!(
                "pair buffer length {} is not a multiple of 2 * dim = {}",
                pairs.len(),
                2 * dim
            )));
        }
        Ok(PairDataset {
            system,
            dim,
            lag,
            dt_fine: 0.0,
            seed,
            pairs_per_trajectory,
            pairs,
            normalization: None,
        })
    }

    /// Number of records `M`.
    pub fn len(&self) -> usize {
        self.pairs.len() / (2 * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    #[inline]
    pub fn x0(&self, i: usize) -> &[f64] {
        &self.pairs[i * 2 * self.dim..i * 2 * self.dim + self.dim]
    }

    #[inline]
    pub fn x1(&self, i: usize) -> &[f64] {
        &self.pairs[i * 2 * self.dim + self.dim..(i + 1) * 2 * self.dim]
    }

    /// Trajectory that produced record `i`.
    pub fn trajectory_of(&self, i: usize) -> usize {
        i / self.pairs_per_trajectory
    }

    pub fn n_trajectories(&self) -> usize {
        self.len().div_ceil(self.pairs_per_trajectory)
    }

    /// The affine in effect (identity when not standardized).
    pub fn affine(&self) -> Affine {
        self.normalization
            .clone()
            .unwrap_or_else(|| Affine::identity(self.dim))
    }
}

fn checked_domain<'a>(sys: &'a impl SlowFastSystem) -> Result<&'a [(f64, f64)]> {
    let domain = sys.ic_domain();
    for (i, &(lo, hi)) in domain.iter().enumerate() {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(format!(
                "ic interval {i} is empty or non-finite: ({lo}, {hi})"
            )));
        }
    }
    Ok(domain)
}

fn draw_ic(domain: &[(f64, f64)], rng: &mut impl Rng, out: &mut [f64]) {
    for (i, &(lo, hi)) in domain.iter().enumerate() {
        out[i] = uniform(rng, lo, hi);
    }
}

/// `m` i.i.d. uniform draws of the full state over the system's IC domain,
/// row-major `m x dim`. Draw `i` comes from stream `i` of `seed`, matching
/// the streams used by [`build_pairs`].
pub fn sample_initial_conditions(
    sys: &impl SlowFastSystem,
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::config("need at least one initial condition"));
    }
    let domain = checked_domain(sys)?;
    let dim = sys.dim();
    let mut out = vec![0.0; m * dim];
    for i in 0..m {
        let mut rng = stream_rng(seed, i as u64);
        draw_ic(domain, &mut rng, &mut out[i * dim..(i + 1) * dim]);
    }
    Ok(out)
}

/// Simulate bursts of horizon `t_burst` and slice them into consecutive
/// pairs until `m_pairs` records are collected.
pub fn build_pairs(
    sys: &System,
    m_pairs: usize,
    t_burst: f64,
    grid: &SimGrid,
    seed: u64,
) -> Result<PairDataset> {
    if m_pairs == 0 {
        return Err(Error::config("need at least one training pair"));
    }
    let pairs_per_traj = grid.lags_until(t_burst)?;
    if pairs_per_traj == 0 {
        return Err(Error::config(format!(
            "burst horizon {t_burst} is shorter than the lag {}",
            grid.lag
        )));
    }
    let domain = checked_domain(sys)?;
    let ds = sys.dim_slow();
    let dim = sys.dim();
    let n_traj = m_pairs.div_ceil(pairs_per_traj);

    let mut pairs = Vec::with_capacity(m_pairs * 2 * ds);
    let mut ic = vec![0.0; dim];
    'outer: for i in 0..n_traj {
        let mut rng = stream_rng(seed, i as u64);
        draw_ic(domain, &mut rng, &mut ic);
        let traj = simulate_slow(sys, &ic[..ds], &ic[ds..], t_burst, grid, &mut rng).map_err(
            |e| match e {
                Error::IntegrationBlowup { time, state, .. } => Error::IntegrationBlowup {
                    time,
                    state,
                    trajectory: Some(i),
                },
                other => other,
            },
        )?;
        for k in 1..traj.len() {
            pairs.extend_from_slice(traj.state(k - 1));
            pairs.extend_from_slice(traj.state(k));
            if pairs.len() == m_pairs * 2 * ds {
                break 'outer;
            }
        }
    }

    Ok(PairDataset {
        system: Some(sys.id()),
        dim: ds,
        lag: grid.lag,
        dt_fine: grid.dt_fine,
        seed,
        pairs_per_trajectory: pairs_per_traj,
        pairs,
        normalization: None,
    })
}

/// Standardize each coordinate by the mean and standard deviation of the
/// pooled `x0` states, applying the same affine to both pair members.
///
/// The affine is stored so physical units can be recovered exactly; rollout
/// and density evaluation undo it internally.
pub fn normalize(ds: &PairDataset) -> Result<PairDataset> {
    if ds.normalization.is_some() {
        return Err(Error::config("dataset is already standardized"));
    }
    let m = ds.len();
    if m < 2 {
        return Err(Error::config("standardization needs at least two records"));
    }
    let dim = ds.dim;
    let mut mean = vec![0.0; dim];
    for i in 0..m {
        let x0 = ds.x0(i);
        for c in 0..dim {
            mean[c] += x0[c];
        }
    }
    for c in 0..dim {
        mean[c] /= m as f64;
    }
    let mut var = vec![0.0; dim];
    for i in 0..m {
        let x0 = ds.x0(i);
        for c in 0..dim {
            let d = x0[c] - mean[c];
            var[c] += d * d;
        }
    }
    let mut scale = vec![0.0; dim];
    for c in 0..dim {
        let v = var[c] / m as f64;
        if v <= 0.0 {
            return Err(Error::DegenerateData { coordinate: c });
        }
        scale[c] = libm::sqrt(v);
    }
    let affine = Affine { mean, scale };

    let mut pairs = ds.pairs.clone();
    for rec in pairs.chunks_mut(2 * dim) {
        for c in 0..dim {
            rec[c] = (rec[c] - affine.mean[c]) / affine.scale[c];
            rec[dim + c] = (rec[dim + c] - affine.mean[c]) / affine.scale[c];
        }
    }

    Ok(PairDataset {
        normalization: Some(affine),
        pairs,
        ..ds.clone()
    })
}

/// Undo standardization, recovering physical units.
pub fn to_physical(ds: &PairDataset) -> PairDataset {
    let Some(affine) = &ds.normalization else {
        return ds.clone();
    };
    let dim = ds.dim;
    let mut pairs = ds.pairs.clone();
    for rec in pairs.chunks_mut(2 * dim) {
        for c in 0..dim {
            rec[c] = affine.mean[c] + affine.scale[c] * rec[c];
            rec[dim + c] = affine.mean[c] + affine.scale[c] * rec[dim + c];
        }
    }
    PairDataset {
        normalization: None,
        pairs,
        ..ds.clone()
    }
}

/// Deterministic train/validation split by trajectory, so the pairs of one
/// path never straddle the split.
pub fn train_val_split(
    ds: &PairDataset,
    val_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let n_traj = ds.n_trajectories();
    let mut traj_ids: Vec<usize> = (0..n_traj).collect();
    // Fisher-Yates with a dedicated stream.
    let mut rng = stream_rng(seed, u64::MAX);
    for i in (1..n_traj).rev() {
        let j = rng.random_range(0..=i);
        traj_ids.swap(i, j);
    }
    let n_val_traj = if val_fraction <= 0.0 || n_traj < 2 {
        0
    } else {
        (libm::round(val_fraction * n_traj as f64) as usize).clamp(1, n_traj - 1)
    };
    let mut is_val = vec![false; n_traj];
    for &t in traj_ids.iter().take(n_val_traj) {
        is_val[t] = true;
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for i in 0..ds.len() {
        if is_val[ds.trajectory_of(i)] {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ScalarOu;

    #[test]
    fn degenerate_interval_yields_the_point() {
        let mut sys = System::preset(Preset::SkewProduct);
        sys.set_ic_domain(vec![(0.3, 0.3), (-0.1, -0.1)]).unwrap();
        let ics = sample_initial_conditions(&sys, 1, 5).unwrap();
        assert_eq!(ics, vec![0.3, -0.1]);
    }

    #[test]
    fn uniform_ic_moments_match() {
        let sys = System::preset(Preset::SkewProduct);
        let m = 100_000;
        let ics = sample_initial_conditions(&sys, m, 42).unwrap();
        for (c, &(lo, hi)) in sys.ic_domain().iter().enumerate() {
            let mean: f64 = ics.chunks(2).map(|s| s[c]).sum::<f64>() / m as f64;
            let mid = 0.5 * (lo + hi);
            let tol = 3.0 * (hi - lo) / libm::sqrt(12.0 * m as f64);
            assert!((mean - mid).abs() < tol, "coord {c}: {mean} vs {mid}");
        }
    }

    #[test]
    fn ic_draws_stay_inside_domain() {
        let sys = System::preset(Preset::Nonlinear3d);
        let ics = sample_initial_conditions(&sys, 10, 3).unwrap();
        for s in ics.chunks(3) {
            for (c, &(lo, hi)) in sys.ic_domain().iter().enumerate() {
                assert!(s[c] >= lo && s[c] < hi);
            }
        }
    }

    #[test]
    fn single_lag_bursts_one_pair_each() {
        let sys = System::preset(Preset::SkewProduct);
        let grid = SimGrid::default();
        let ds = build_pairs(&sys, 7, 0.01, &grid, 1).unwrap();
        assert_eq!(ds.len(), 7);
        assert_eq!(ds.pairs_per_trajectory, 1);
        assert_eq!(ds.n_trajectories(), 7);
    }

    #[test]
    fn pair_slicing_counts_match() {
        let sys = System::preset(Preset::SkewProduct);
        let grid = SimGrid::new(1e-3, 0.01);
        let ds = build_pairs(&sys, 250, 0.1, &grid, 2).unwrap();
        assert_eq!(ds.pairs_per_trajectory, 10);
        assert_eq!(ds.len(), 250);
        assert_eq!(ds.n_trajectories(), 25);
    }

    #[test]
    fn pairs_replay_from_their_seed_stream() {
        let sys = System::preset(Preset::ExpOu);
        let grid = SimGrid::new(1e-3, 0.01);
        let ds = build_pairs(&sys, 30, 0.05, &grid, 77).unwrap();
        // Re-simulate trajectory 2 and compare its pairs.
        let mut rng = stream_rng(77, 2);
        let mut ic = vec![0.0; 2];
        draw_ic(sys.ic_domain(), &mut rng, &mut ic);
        let traj = simulate_slow(&sys, &ic[..1], &ic[1..], 0.05, &grid, &mut rng).unwrap();
        for k in 1..traj.len() {
            let rec = 2 * ds.pairs_per_trajectory + (k - 1);
            assert_eq!(ds.x0(rec), traj.state(k - 1));
            assert_eq!(ds.x1(rec), traj.state(k));
        }
    }

    #[test]
    fn pair_values_finite_and_consecutive() {
        let sys = System::preset(Preset::Triad);
        let grid = SimGrid::default();
        let ds = build_pairs(&sys, 200, 0.05, &grid, 3).unwrap();
        for i in 0..ds.len() {
            assert!(ds.x0(i).iter().all(|v| v.is_finite()));
            assert!(ds.x1(i).iter().all(|v| v.is_finite()));
            // Within a trajectory, x1 of one pair is x0 of the next.
            if (i + 1) % ds.pairs_per_trajectory != 0 && i + 1 < ds.len() {
                assert_eq!(ds.x1(i), ds.x0(i + 1));
            }
        }
    }

    #[test]
    fn normalize_centers_and_scales() {
        let sys = System::preset(Preset::SkewProduct);
        let grid = SimGrid::new(1e-3, 0.01);
        let ds = build_pairs(&sys, 500, 0.05, &grid, 4).unwrap();
        let n = normalize(&ds).unwrap();
        let m = n.len() as f64;
        let mean: f64 = (0..n.len()).map(|i| n.x0(i)[0]).sum::<f64>() / m;
        let var: f64 = (0..n.len()).map(|i| n.x0(i)[0] * n.x0(i)[0]).sum::<f64>() / m;
        assert!(mean.abs() < 1e-10, "mean {mean}");
        assert!((libm::sqrt(var - mean * mean) - 1.0).abs() < 1e-10);
        // Round trip back to physical units.
        let back = to_physical(&n);
        for (a, b) in back.pairs.iter().zip(ds.pairs.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn normalize_rejects_constant_coordinate() {
        let pairs = vec![1.0, 2.0, 1.0, 3.0, 1.0, 4.0]; // x0 always 1.0
        let ds = PairDataset::from_pairs(1, 0.01, pairs, 1, None, 0).unwrap();
        match normalize(&ds).unwrap_err() {
            Error::DegenerateData { coordinate } => assert_eq!(coordinate, 0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn already_standardized_data_gets_identity_affine() {
        // Construct pairs whose pooled x0 has exactly mean 0 and variance 1.
        let pairs = vec![-1.0, 0.5, 1.0, -0.5, -1.0, 0.1, 1.0, 0.2];
        let ds = PairDataset::from_pairs(1, 0.01, pairs, 1, None, 0).unwrap();
        let n = normalize(&ds).unwrap();
        let affine = n.normalization.unwrap();
        assert!(affine.mean[0].abs() < 1e-12);
        assert!((affine.scale[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_keeps_trajectories_whole() {
        let sys = System::preset(Preset::SkewProduct);
        let grid = SimGrid::new(1e-3, 0.01);
        let ds = build_pairs(&sys, 300, 0.03, &grid, 9).unwrap(); // 100 trajs of 3
        let (train, val) = train_val_split(&ds, 0.1, 123);
        assert_eq!(train.len() + val.len(), ds.len());
        assert_eq!(val.len(), 30); // 10 trajectories x 3 pairs
        for &i in &val {
            let t = ds.trajectory_of(i);
            // No pair of this trajectory appears in train.
            assert!(train.iter().all(|&j| ds.trajectory_of(j) != t));
        }
        // Deterministic given the seed.
        let again = train_val_split(&ds, 0.1, 123);
        assert_eq!(again.0, train);
        assert_eq!(again.1, val);
    }

    #[test]
    fn build_pairs_supports_test_fixture_via_generic_ic() {
        // sample_initial_conditions works with any SlowFastSystem.
        let ou = ScalarOu::new(1.0, 1.0);
        let ics = sample_initial_conditions(&ou, 4, 0).unwrap();
        assert_eq!(ics.len(), 4);
    }
}
