//! Conditional masked affine autoregressive flow.
//!
//! The one-step generative model maps an l-dimensional standard normal `z`
//! to the next slow state `x1`, conditioned on the current state `x0`,
//! through a stack of `K` affine autoregressive layers. Layer conditioners
//! are tanh networks emitting a shift `m_j` and log-scale `s_j` per
//! coordinate (`2l` outputs); MADE masks restrict `(m_j, s_j)` to the
//! conditioning input `x0` and coordinates strictly preceding `j` in the
//! layer's ordering, which is reversed between consecutive layers.
//!
//! Each layer transforms `u_j = m_j + exp(s_j) v_j`, a diffeomorphism for
//! any finite conditioner output, so the inverse and exact log-density come
//! for free: generation is sequential per coordinate, density evaluation is
//! a single parallel pass per layer. Densities are reported in physical
//! units; the dataset standardization affine is part of the model and its
//! Jacobian is included.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::affine::Affine;
use crate::error::Error;
use crate::net::{made_masks, Mlp, Tape, DEGREE_BLOCKED};
use crate::rng::stream_rng;
use crate::Result;

pub const LN_2PI: f64 = 1.8378770664093453;

/// What each layer's conditioner is allowed to see besides `x0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionerMode {
    /// Shift and log-scale of coordinate `j` may depend on the preceding
    /// coordinates of the layer input (masked autoregressive flow).
    FullMaf,
    /// Shift and log-scale depend on `x0` only; coordinates are transformed
    /// independently given the conditioning state.
    Hypernet,
}

impl ConditionerMode {
    pub fn name(&self) -> &'static str {
        match self {
            ConditionerMode::FullMaf => "full_maf",
            ConditionerMode::Hypernet => "hypernet",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full_maf" => Some(ConditionerMode::FullMaf),
            "hypernet" => Some(ConditionerMode::Hypernet),
            _ => None,
        }
    }
}

/// Flow architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Slow dimension l.
    pub dim: usize,
    /// Number of stacked affine autoregressive layers.
    pub n_layers: usize,
    /// Hidden widths of each conditioner network.
    pub hidden: Vec<usize>,
    pub mode: ConditionerMode,
    /// Log-scales are clamped to `[-c, c]` before exponentiation, guarding
    /// against overflow in the first optimizer steps.
    pub log_scale_clamp: f64,
}

impl FlowConfig {
    pub fn new(dim: usize) -> Self {
        FlowConfig {
            dim,
            n_layers: 5,
            hidden: vec![20, 20, 20],
            mode: ConditionerMode::FullMaf,
            log_scale_clamp: 7.0,
        }
    }

    pub fn with_layers(mut self, n_layers: usize) -> Self {
        self.n_layers = n_layers;
        self
    }

    pub fn with_mode(mut self, mode: ConditionerMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_layers == 0 {
            return Err(Error::config("flow needs dim >= 1 and n_layers >= 1"));
        }
        if !(self.log_scale_clamp > 0.0) {
            return Err(Error::config("log_scale_clamp must be positive"));
        }
        Ok(())
    }

    /// Conditioner input/output width: `(x0, u)` in, `(m, s)` out.
    fn net_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![2 * self.dim];
        sizes.extend_from_slice(&self.hidden);
        sizes.push(2 * self.dim);
        sizes
    }
}

/// Trained (or initialized) conditional flow, including the data
/// standardization affine it was fitted under.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    cfg: FlowConfig,
    /// Per-layer coordinate ordering: `orderings[k][p]` is the coordinate
    /// transformed at position `p`.
    orderings: Vec<Vec<usize>>,
    nets: Vec<Mlp>,
    norm: Affine,
    /// Time lag of the one-step map (inherited from the training data).
    lag: f64,
}

/// Reusable buffers for flow evaluation and gradients.
pub struct FlowWorkspace {
    tapes: Vec<Tape>,
    input: Vec<f64>,
    /// `us[k]` is the input of layer `k` in the sampling direction
    /// (`us[0] = z`, `us[K] = x1` standardized).
    us: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    s_raw: Vec<Vec<f64>>,
    cv: Vec<f64>,
    cv_next: Vec<f64>,
    out_cot: Vec<f64>,
    in_cot: Vec<f64>,
    x0n: Vec<f64>,
    x1n: Vec<f64>,
}

impl FlowWorkspace {
    pub fn for_model(model: &FlowModel) -> FlowWorkspace {
        let l = model.cfg.dim;
        let k = model.cfg.n_layers;
        FlowWorkspace {
            tapes: model.nets.iter().map(Tape::for_net).collect(),
            input: vec![0.0; 2 * l],
            us: vec![vec![0.0; l]; k + 1],
            m: vec![vec![0.0; l]; k],
            s: vec![vec![0.0; l]; k],
            s_raw: vec![vec![0.0; l]; k],
            cv: vec![0.0; l],
            cv_next: vec![0.0; l],
            out_cot: vec![0.0; 2 * l],
            in_cot: vec![0.0; 2 * l],
            x0n: vec![0.0; l],
            x1n: vec![0.0; l],
        }
    }
}

fn build_orderings(dim: usize, n_layers: usize) -> Vec<Vec<usize>> {
    (0..n_layers)
        .map(|k| {
            let mut ord: Vec<usize> = (0..dim).collect();
            if k % 2 == 1 {
                ord.reverse();
            }
            ord
        })
        .collect()
}

fn build_masks(cfg: &FlowConfig, ordering: &[usize]) -> Vec<Option<Vec<f64>>> {
    let l = cfg.dim;
    let mut pos = vec![0usize; l];
    for (p, &j) in ordering.iter().enumerate() {
        pos[j] = p;
    }
    let mut in_degrees = vec![0usize; 2 * l];
    for j in 0..l {
        in_degrees[l + j] = match cfg.mode {
            ConditionerMode::FullMaf => pos[j] + 1,
            ConditionerMode::Hypernet => DEGREE_BLOCKED,
        };
    }
    let mut out_degrees = vec![0usize; 2 * l];
    for j in 0..l {
        out_degrees[j] = pos[j] + 1; // shift block
        out_degrees[l + j] = pos[j] + 1; // log-scale block
    }
    let hidden_max = match cfg.mode {
        ConditionerMode::FullMaf => l - 1,
        ConditionerMode::Hypernet => 0,
    };
    made_masks(&in_degrees, &cfg.hidden, &out_degrees, hidden_max)
}

impl FlowModel {
    /// Glorot-initialized flow.
    pub fn new(cfg: FlowConfig, norm: Affine, seed: u64) -> Result<FlowModel> {
        cfg.validate()?;
        Self::check_norm(&cfg, &norm)?;
        let orderings = build_orderings(cfg.dim, cfg.n_layers);
        let sizes = cfg.net_sizes();
        let mut rng = stream_rng(seed, 0);
        let nets = orderings
            .iter()
            .map(|ord| Mlp::glorot(&sizes, build_masks(&cfg, ord), &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(FlowModel {
            cfg,
            orderings,
            nets,
            norm,
            lag: 0.01,
        })
    }

    /// All-zero parameters: every layer is the identity transform.
    pub fn zeroed(cfg: FlowConfig, norm: Affine) -> Result<FlowModel> {
        cfg.validate()?;
        Self::check_norm(&cfg, &norm)?;
        let orderings = build_orderings(cfg.dim, cfg.n_layers);
        let sizes = cfg.net_sizes();
        let nets = orderings
            .iter()
            .map(|ord| Mlp::zeros(&sizes, build_masks(&cfg, ord)))
            .collect::<Result<Vec<_>>>()?;
        Ok(FlowModel {
            cfg,
            orderings,
            nets,
            norm,
            lag: 0.01,
        })
    }

    /// Time lag of the one-step map.
    pub fn lag(&self) -> f64 {
        self.lag
    }

    pub fn set_lag(&mut self, lag: f64) -> Result<()> {
        if !(lag > 0.0) {
            return Err(Error::config("lag must be positive"));
        }
        self.lag = lag;
        Ok(())
    }

    fn check_norm(cfg: &FlowConfig, norm: &Affine) -> Result<()> {
        if norm.dim() != cfg.dim {
            return Err(Error::shape(format!(
                "normalization affine has dim {}, flow has dim {}",
                norm.dim(),
                cfg.dim
            )));
        }
        if norm.scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::config("normalization scales must be positive"));
        }
        Ok(())
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    pub fn normalization(&self) -> &Affine {
        &self.norm
    }

    pub fn orderings(&self) -> &[Vec<usize>] {
        &self.orderings
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.nets
    }

    pub fn n_params(&self) -> usize {
        self.nets.iter().map(Mlp::n_params).sum()
    }

    /// Range of layer `k`'s parameters in the concatenated flat vector.
    pub fn param_range(&self, k: usize) -> core::ops::Range<usize> {
        let start: usize = self.nets[..k].iter().map(Mlp::n_params).sum();
        start..start + self.nets[k].n_params()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for net in &self.nets {
            flat.extend_from_slice(net.params());
        }
        flat
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::shape(format!(
                "{} parameters supplied, flow has {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for net in &mut self.nets {
            let n = net.n_params();
            net.set_params(&flat[off..off + n])?;
            off += n;
        }
        Ok(())
    }

    #[inline]
    fn clamp_log_scale(&self, s: f64) -> f64 {
        s.clamp(-self.cfg.log_scale_clamp, self.cfg.log_scale_clamp)
    }

    /// Evaluate layer `k`'s conditioner on the staged `ws.input`, filling
    /// `ws.m[k]`, `ws.s_raw[k]`, `ws.s[k]`.
    fn eval_conditioner(&self, k: usize, ws: &mut FlowWorkspace) -> Result<()> {
        let l = self.cfg.dim;
        self.nets[k].forward(&ws.input, &mut ws.tapes[k])?;
        let out = ws.tapes[k].output();
        for j in 0..l {
            let m = out[j];
            let s_raw = out[l + j];
            if !m.is_finite() || !s_raw.is_finite() {
                return Err(Error::NumericalInstability { layer: k });
            }
            ws.m[k][j] = m;
            ws.s_raw[k][j] = s_raw;
            ws.s[k][j] = self.clamp_log_scale(s_raw);
        }
        Ok(())
    }

    /// One-step generation: map `(x0, z)` to `x1` in physical units.
    ///
    /// The conditioning state is standardized internally; autoregressive
    /// layers generate their coordinates sequentially in layer order.
    pub fn sample(&self, x0: &[f64], z: &[f64], ws: &mut FlowWorkspace) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.cfg.dim];
        self.sample_into(x0, z, ws, &mut out)?;
        Ok(out)
    }

    pub fn sample_into(
        &self,
        x0: &[f64],
        z: &[f64],
        ws: &mut FlowWorkspace,
        out: &mut [f64],
    ) -> Result<()> {
        let l = self.cfg.dim;
        if x0.len() != l || z.len() != l || out.len() != l {
            return Err(Error::shape("sample: dimension mismatch"));
        }
        self.norm.to_normalized(x0, &mut ws.x0n);
        ws.us[0].copy_from_slice(z);
        for k in 0..self.cfg.n_layers {
            // Sequential forward: coordinate at position p only needs the
            // already-generated coordinates before it.
            let (head, tail) = ws.us.split_at_mut(k + 1);
            let v = &head[k];
            let u = &mut tail[0];
            u.fill(0.0);
            for p in 0..l {
                let j = self.orderings[k][p];
                // Re-evaluate the conditioner with the coordinates generated
                // so far; masks make unset entries inert.
                ws.input[..l].copy_from_slice(&ws.x0n);
                ws.input[l..].copy_from_slice(u);
                self.nets[k].forward(&ws.input, &mut ws.tapes[k])?;
                let net_out = ws.tapes[k].output();
                let m = net_out[j];
                let s = self.clamp_log_scale(net_out[l + j]);
                if !m.is_finite() || !s.is_finite() {
                    return Err(Error::NumericalInstability { layer: k });
                }
                u[j] = m + libm::exp(s) * v[j];
                if !u[j].is_finite() {
                    return Err(Error::NumericalInstability { layer: k });
                }
            }
        }
        self.norm.to_physical(&ws.us[self.cfg.n_layers], out);
        Ok(())
    }

    /// Map `x1` (physical) back to latent `z`, returning the accumulated
    /// `log |det d z / d x1|` including the standardization Jacobian.
    ///
    /// The inverse of an autoregressive layer is coordinate-parallel: all
    /// conditioner inputs are known.
    pub fn inverse(&self, x0: &[f64], x1: &[f64], ws: &mut FlowWorkspace) -> Result<(Vec<f64>, f64)> {
        let log_det = self.inverse_pass(x0, x1, ws)?;
        Ok((ws.us[0].clone(), log_det))
    }

    /// Shared inverse pass; leaves intermediate states, shifts, log-scales,
    /// and conditioner tapes in the workspace. Returns the inverse log-det.
    fn inverse_pass(&self, x0: &[f64], x1: &[f64], ws: &mut FlowWorkspace) -> Result<f64> {
        let l = self.cfg.dim;
        if x0.len() != l || x1.len() != l {
            return Err(Error::shape("inverse: dimension mismatch"));
        }
        self.norm.to_normalized(x0, &mut ws.x0n);
        self.norm.to_normalized(x1, &mut ws.x1n);
        self.inverse_pass_normalized(ws)
    }

    fn inverse_pass_normalized(&self, ws: &mut FlowWorkspace) -> Result<f64> {
        let l = self.cfg.dim;
        let kk = self.cfg.n_layers;
        ws.us[kk].copy_from_slice(&ws.x1n);
        let mut log_det = self.norm.log_det_to_normalized();
        for k in (0..kk).rev() {
            ws.input[..l].copy_from_slice(&ws.x0n);
            ws.input[l..].copy_from_slice(&ws.us[k + 1]);
            self.eval_conditioner(k, ws)?;
            let (lo, hi) = ws.us.split_at_mut(k + 1);
            let v = &mut lo[k];
            let u = &hi[0];
            for j in 0..l {
                let s = ws.s[k][j];
                v[j] = (u[j] - ws.m[k][j]) * libm::exp(-s);
                if !v[j].is_finite() {
                    return Err(Error::NumericalInstability { layer: k });
                }
                log_det -= s;
            }
        }
        Ok(log_det)
    }

    /// Exact conditional log-density `log p(x1 | x0)` in physical units:
    /// `log N(z; 0, I) + log |det d z / d x1|`.
    pub fn log_likelihood(&self, x0: &[f64], x1: &[f64], ws: &mut FlowWorkspace) -> Result<f64> {
        let log_det = self.inverse_pass(x0, x1, ws)?;
        let z = &ws.us[0];
        let sq: f64 = z.iter().map(|&v| v * v).sum();
        Ok(-0.5 * (sq + self.cfg.dim as f64 * LN_2PI) + log_det)
    }

    /// NLL of one standardized record, value only. Consistent with
    /// [`FlowModel::nll_grad_normalized`]: the standardization Jacobian is
    /// excluded (it is a constant offset in physical units).
    pub fn nll_normalized(&self, x0n: &[f64], x1n: &[f64], ws: &mut FlowWorkspace) -> Result<f64> {
        let l = self.cfg.dim;
        if x0n.len() != l || x1n.len() != l {
            return Err(Error::shape("nll: dimension mismatch"));
        }
        ws.x0n.copy_from_slice(x0n);
        ws.x1n.copy_from_slice(x1n);
        let log_det = self.inverse_pass_normalized(ws)?;
        let sum_s = self.norm.log_det_to_normalized() - log_det;
        let z_sq: f64 = ws.us[0].iter().map(|&v| v * v).sum();
        Ok(0.5 * (z_sq + l as f64 * LN_2PI) + sum_s)
    }

    /// Negative log-likelihood of one standardized record and its exact
    /// gradient, accumulated into `grad` (flat layout over all layers).
    ///
    /// The returned NLL is in standardized units; add
    /// `-normalization.log_det_to_normalized()` for physical units (a
    /// parameter-independent constant).
    pub fn nll_grad_normalized(
        &self,
        x0n: &[f64],
        x1n: &[f64],
        ws: &mut FlowWorkspace,
        grad: &mut [f64],
    ) -> Result<f64> {
        let l = self.cfg.dim;
        let kk = self.cfg.n_layers;
        if grad.len() != self.n_params() {
            return Err(Error::shape("gradient buffer has wrong length"));
        }
        if x0n.len() != l || x1n.len() != l {
            return Err(Error::shape("nll: dimension mismatch"));
        }
        ws.x0n.copy_from_slice(x0n);
        ws.x1n.copy_from_slice(x1n);

        // Inverse pass, keeping every layer's tape.
        ws.us[kk].copy_from_slice(&ws.x1n);
        let mut sum_s = 0.0;
        for k in (0..kk).rev() {
            ws.input[..l].copy_from_slice(&ws.x0n);
            ws.input[l..].copy_from_slice(&ws.us[k + 1]);
            self.eval_conditioner(k, ws)?;
            let (lo, hi) = ws.us.split_at_mut(k + 1);
            let v = &mut lo[k];
            let u = &hi[0];
            for j in 0..l {
                let s = ws.s[k][j];
                v[j] = (u[j] - ws.m[k][j]) * libm::exp(-s);
                if !v[j].is_finite() {
                    return Err(Error::NumericalInstability { layer: k });
                }
                sum_s += s;
            }
        }
        let z_sq: f64 = ws.us[0].iter().map(|&v| v * v).sum();
        let nll = 0.5 * (z_sq + l as f64 * LN_2PI) + sum_s;

        // Backward sweep in sampling order. `cv` is d nll / d v for the
        // current layer; its input-side cotangent feeds the next layer up.
        ws.cv.copy_from_slice(&ws.us[0]); // d(0.5 z^2)/dz = z
        for k in 0..kk {
            // Tapes hold the conditioner evaluation at (x0n, u) from the
            // inverse pass above (positions are re-evaluated identically).
            for j in 0..l {
                let e = libm::exp(-ws.s[k][j]);
                let v = ws.us[k][j];
                let dm = -ws.cv[j] * e;
                // d nll/d s_j: -cv_j * v_j through the value path, +1 from
                // the log-det term; the clamp gates the conditioner side.
                let gate = if ws.s_raw[k][j].abs() < self.cfg.log_scale_clamp {
                    1.0
                } else {
                    0.0
                };
                ws.out_cot[j] = dm;
                ws.out_cot[l + j] = (-ws.cv[j] * v + 1.0) * gate;
            }
            let range = self.param_range(k);
            self.nets[k].backward(
                &mut ws.tapes[k],
                &ws.out_cot,
                &mut grad[range],
                &mut ws.in_cot,
            )?;
            for j in 0..l {
                let e = libm::exp(-ws.s[k][j]);
                ws.cv_next[j] = ws.cv[j] * e + ws.in_cot[l + j];
            }
            core::mem::swap(&mut ws.cv, &mut ws.cv_next);
        }
        Ok(nll)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_normal, stream_rng};

    fn identity_affine(dim: usize) -> Affine {
        Affine::identity(dim)
    }

    #[test]
    fn zeroed_flow_is_identity_transform() {
        let cfg = FlowConfig::new(2).with_layers(3);
        let model = FlowModel::zeroed(cfg, identity_affine(2)).unwrap();
        let mut ws = FlowWorkspace::for_model(&model);
        let z = [0.7, -1.3];
        let x1 = model.sample(&[0.0, 0.0], &z, &mut ws).unwrap();
        assert_eq!(x1, z.to_vec());
    }

    #[test]
    fn zeroed_flow_with_affine_denormalizes_z() {
        let cfg = FlowConfig::new(1);
        let norm = Affine {
            mean: vec![2.0],
            scale: vec![3.0],
        };
        let model = FlowModel::zeroed(cfg, norm).unwrap();
        let mut ws = FlowWorkspace::for_model(&model);
        let x1 = model.sample(&[0.0], &[1.0], &mut ws).unwrap();
        assert_eq!(x1, vec![2.0 + 3.0 * 1.0]);
        // Inverse log-det carries the affine Jacobian.
        let (z, log_det) = model.inverse(&[0.0], &x1, &mut ws).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12);
        assert!((log_det - (-libm::log(3.0))).abs() < 1e-12);
    }

    #[test]
    fn forced_affine_layer_by_hand() {
        // K = 1, l = 1, m = 2, s = ln 3, no normalization: z = 1 -> 5.
        let cfg = FlowConfig {
            dim: 1,
            n_layers: 1,
            hidden: vec![],
            mode: ConditionerMode::FullMaf,
            log_scale_clamp: 7.0,
        };
        let mut model = FlowModel::zeroed(cfg, identity_affine(1)).unwrap();
        // Single linear masked layer [2 -> 2]; biases are the last two
        // parameters, (m, s).
        let n = model.nets()[0].n_params();
        model.nets_mut()[0].params_mut()[n - 2] = 2.0;
        model.nets_mut()[0].params_mut()[n - 1] = libm::log(3.0);
        let mut ws = FlowWorkspace::for_model(&model);
        let x1 = model.sample(&[0.0], &[1.0], &mut ws).unwrap();
        assert!((x1[0] - 5.0).abs() < 1e-12);
        // Closed-form Gaussian density: log N((x-m)e^{-s}; 0, 1) - s.
        let x = 4.2;
        let got = model.log_likelihood(&[0.0], &[x], &mut ws).unwrap();
        let z = (x - 2.0) / 3.0;
        let expect = -0.5 * (z * z + LN_2PI) - libm::log(3.0);
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn identity_log_likelihood_standard_normal() {
        let cfg = FlowConfig::new(1);
        let model = FlowModel::zeroed(cfg, identity_affine(1)).unwrap();
        let mut ws = FlowWorkspace::for_model(&model);
        let ll = model.log_likelihood(&[0.3], &[0.0], &mut ws).unwrap();
        assert!((ll - (-0.5 * LN_2PI)).abs() < 1e-12);
        assert!((-0.5 * LN_2PI - (-0.918938533204673)).abs() < 1e-12);
    }

    #[test]
    fn round_trip_recovers_latent() {
        let mut rng = stream_rng(21, 0);
        for &dim in &[1usize, 2] {
            for &k in &[1usize, 2, 5] {
                let cfg = FlowConfig::new(dim).with_layers(k);
                let norm = Affine {
                    mean: vec![0.3; dim],
                    scale: vec![1.7; dim],
                };
                let model = FlowModel::new(cfg, norm, 1000 + k as u64).unwrap();
                let mut ws = FlowWorkspace::for_model(&model);
                let mut z = vec![0.0; dim];
                let mut x0 = vec![0.0; dim];
                for _ in 0..200 {
                    fill_normal(&mut rng, &mut z);
                    fill_normal(&mut rng, &mut x0);
                    let x1 = model.sample(&x0, &z, &mut ws).unwrap();
                    let (z_back, _) = model.inverse(&x0, &x1, &mut ws).unwrap();
                    for j in 0..dim {
                        assert!(
                            (z_back[j] - z[j]).abs() < 1e-10,
                            "dim {dim} K {k}: {} vs {}",
                            z_back[j],
                            z[j]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn log_det_matches_numerical_jacobian() {
        let mut rng = stream_rng(8, 0);
        for &dim in &[1usize, 2] {
            for &k in &[1usize, 2, 5] {
                let cfg = FlowConfig::new(dim).with_layers(k);
                let norm = Affine {
                    mean: vec![0.1; dim],
                    scale: vec![0.8; dim],
                };
                let model = FlowModel::new(cfg, norm, 7 + k as u64).unwrap();
                let mut ws = FlowWorkspace::for_model(&model);
                let mut x0 = vec![0.0; dim];
                let mut x1 = vec![0.0; dim];
                fill_normal(&mut rng, &mut x0);
                fill_normal(&mut rng, &mut x1);
                let (_, log_det) = model.inverse(&x0, &x1, &mut ws).unwrap();

                // Central-difference Jacobian of the inverse map.
                let h = 1e-5;
                let mut jac = vec![0.0; dim * dim];
                for b in 0..dim {
                    let mut xp = x1.clone();
                    xp[b] += h;
                    let (zp, _) = model.inverse(&x0, &xp, &mut ws).unwrap();
                    let mut xm = x1.clone();
                    xm[b] -= h;
                    let (zm, _) = model.inverse(&x0, &xm, &mut ws).unwrap();
                    for a in 0..dim {
                        jac[a * dim + b] = (zp[a] - zm[a]) / (2.0 * h);
                    }
                }
                let det = match dim {
                    1 => jac[0],
                    2 => jac[0] * jac[3] - jac[1] * jac[2],
                    _ => unreachable!(),
                };
                let log_det_num = libm::log(det.abs());
                assert!(
                    (log_det - log_det_num).abs() < 1e-6,
                    "dim {dim} K {k}: {log_det} vs {log_det_num}"
                );
            }
        }
    }

    #[test]
    fn density_normalizes_by_quadrature() {
        // l = 1: integrate p(x1 | x0) over the image of z in [-12, 12].
        let cfg = FlowConfig::new(1);
        let norm = Affine {
            mean: vec![0.4],
            scale: vec![2.3],
        };
        let model = FlowModel::new(cfg, norm, 99).unwrap();
        let mut ws = FlowWorkspace::for_model(&model);
        let x0 = [0.7];
        let n = 10_000;
        let mut xs = Vec::with_capacity(n);
        let mut ps = Vec::with_capacity(n);
        for i in 0..n {
            let z = -12.0 + 24.0 * i as f64 / (n - 1) as f64;
            let x1 = model.sample(&x0, &[z], &mut ws).unwrap();
            let p = libm::exp(model.log_likelihood(&x0, &x1, &mut ws).unwrap());
            xs.push(x1[0]);
            ps.push(p);
        }
        let mut integral = 0.0;
        for i in 1..n {
            assert!(xs[i] > xs[i - 1], "flow must be monotone in z");
            integral += (xs[i] - xs[i - 1]) * 0.5 * (ps[i] + ps[i - 1]);
        }
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn density_normalizes_by_importance_sampling_2d() {
        // l = 2: Monte Carlo check of the normalization within 1%.
        let cfg = FlowConfig::new(2);
        let model = FlowModel::new(cfg, identity_affine(2), 3).unwrap();
        let mut ws = FlowWorkspace::for_model(&model);
        let x0 = [0.2, -0.4];
        // Moments of the model's own samples define the proposal.
        let mut rng = stream_rng(17, 0);
        let n_fit = 4000;
        let mut mean = [0.0; 2];
        let mut var = [0.0; 2];
        let mut samples = Vec::with_capacity(n_fit);
        let mut z = [0.0; 2];
        for _ in 0..n_fit {
            fill_normal(&mut rng, &mut z);
            let x = model.sample(&x0, &z, &mut ws).unwrap();
            mean[0] += x[0];
            mean[1] += x[1];
            samples.push(x);
        }
        mean[0] /= n_fit as f64;
        mean[1] /= n_fit as f64;
        for x in &samples {
            var[0] += (x[0] - mean[0]) * (x[0] - mean[0]);
            var[1] += (x[1] - mean[1]) * (x[1] - mean[1]);
        }
        let std = [
            libm::sqrt(var[0] / n_fit as f64) * 2.0,
            libm::sqrt(var[1] / n_fit as f64) * 2.0,
        ];
        // Importance estimate of the integral under a wide Gaussian.
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x = [
                mean[0] + std[0] * crate::rng::normal(&mut rng),
                mean[1] + std[1] * crate::rng::normal(&mut rng),
            ];
            let logq = -0.5
                * (((x[0] - mean[0]) / std[0]).powi(2)
                    + ((x[1] - mean[1]) / std[1]).powi(2)
                    + 2.0 * LN_2PI)
                - libm::log(std[0] * std[1]);
            let logp = model.log_likelihood(&x0, &x, &mut ws).unwrap();
            acc += libm::exp(logp - logq);
        }
        let integral = acc / n as f64;
        assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
    }

    #[test]
    fn autoregressive_structure_when_single_layer() {
        // K = 1, identity ordering: dz_0/dx1_1 must vanish identically.
        let cfg = FlowConfig::new(2).with_layers(1);
        let model = FlowModel::new(cfg, identity_affine(2), 5).unwrap();
        let mut ws = FlowWorkspace::for_model(&model);
        let x0 = [0.1, 0.2];
        let x1 = [0.5, -0.3];
        let (z0, _) = model.inverse(&x0, &x1, &mut ws).unwrap();
        let (z1, _) = model.inverse(&x0, &[0.5, 4.7], &mut ws).unwrap();
        assert_eq!(z0[0], z1[0]);
        assert_ne!(z0[1], z1[1]);
    }

    #[test]
    fn hypernet_mode_transforms_coordinates_independently() {
        let cfg = FlowConfig::new(2).with_mode(ConditionerMode::Hypernet);
        let model = FlowModel::new(cfg, identity_affine(2), 6).unwrap();
        let mut ws = FlowWorkspace::for_model(&model);
        let x0 = [0.3, -0.1];
        let (za, _) = model.inverse(&x0, &[0.4, 0.8], &mut ws).unwrap();
        let (zb, _) = model.inverse(&x0, &[0.4, -2.0], &mut ws).unwrap();
        let (zc, _) = model.inverse(&x0, &[1.5, 0.8], &mut ws).unwrap();
        assert_eq!(za[0], zb[0], "z0 must ignore x1[1]");
        assert_eq!(za[1], zc[1], "z1 must ignore x1[0]");
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let mut rng = stream_rng(77, 0);
        for &(dim, k, mode) in &[
            (1usize, 1usize, ConditionerMode::FullMaf),
            (2, 2, ConditionerMode::FullMaf),
            (2, 2, ConditionerMode::Hypernet),
        ] {
            let cfg = FlowConfig::new(dim).with_layers(k).with_mode(mode);
            let mut model = FlowModel::new(cfg, identity_affine(dim), 50).unwrap();
            let mut ws = FlowWorkspace::for_model(&model);
            let mut x0 = vec![0.0; dim];
            let mut x1 = vec![0.0; dim];
            fill_normal(&mut rng, &mut x0);
            fill_normal(&mut rng, &mut x1);

            let mut grad = vec![0.0; model.n_params()];
            model
                .nll_grad_normalized(&x0, &x1, &mut ws, &mut grad)
                .unwrap();

            let h = 1e-6;
            let mut flat = model.flat_params();
            let mut scratch = vec![0.0; model.n_params()];
            for idx in 0..flat.len() {
                let orig = flat[idx];
                flat[idx] = orig + h;
                model.set_flat_params(&flat).unwrap();
                scratch.fill(0.0);
                let up = model
                    .nll_grad_normalized(&x0, &x1, &mut ws, &mut scratch)
                    .unwrap();
                flat[idx] = orig - h;
                model.set_flat_params(&flat).unwrap();
                scratch.fill(0.0);
                let dn = model
                    .nll_grad_normalized(&x0, &x1, &mut ws, &mut scratch)
                    .unwrap();
                flat[idx] = orig;
                let fd = (up - dn) / (2.0 * h);
                // The floor keeps fp roundoff of the central difference
                // (~1e-10 absolute) out of the relative comparison for
                // near-zero coordinates.
                let denom = fd.abs().max(grad[idx].abs()).max(1e-3);
                assert!(
                    (fd - grad[idx]).abs() / denom < 1e-5,
                    "dim {dim} K {k} {:?} param {idx}: fd {fd} vs {}",
                    mode,
                    grad[idx]
                );
            }
            model.set_flat_params(&flat).unwrap();
        }
    }

    #[test]
    fn likelihood_is_pure_in_its_record() {
        let cfg = FlowConfig::new(1);
        let model = FlowModel::new(cfg, identity_affine(1), 12).unwrap();
        let mut ws = FlowWorkspace::for_model(&model);
        let a = model.log_likelihood(&[0.5], &[0.2], &mut ws).unwrap();
        // Interleave unrelated evaluations.
        model.log_likelihood(&[-3.0], &[8.0], &mut ws).unwrap();
        model.sample(&[1.0], &[0.4], &mut ws).unwrap();
        let b = model.log_likelihood(&[0.5], &[0.2], &mut ws).unwrap();
        assert_eq!(a, b);
    }
}
