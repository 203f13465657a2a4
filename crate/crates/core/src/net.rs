//! Minimal dense-network engine.
//!
//! A tanh multilayer perceptron with an identity output layer, exact
//! reverse-mode gradients, optional per-layer binary masks (for MADE-style
//! autoregressive conditioners), and a flat parameter view the optimizer can
//! index directly. Everything is `f64`; gradients are exact up to rounding,
//! which keeps finite-difference checks tight.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::Error;
use crate::rng::uniform;
use crate::Result;

/// Input degree marking a unit that no output may depend on.
pub const DEGREE_BLOCKED: usize = usize::MAX;

/// Dense tanh network with a flat parameter vector.
///
/// Parameter layout: for each layer, the weight matrix row-major
/// (`out x in`) followed by the bias vector. Masked weight entries are
/// multiplied by their 0/1 mask in every pass, so a masked parameter is
/// inert no matter what value the flat view holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    masks: Vec<Option<Vec<f64>>>,
    offsets: Vec<usize>,
}

/// Activation record produced by a forward pass and consumed by backward.
#[derive(Debug, Clone)]
pub struct Tape {
    sizes: Vec<usize>,
    /// `acts[0]` is the input; `acts[l]` the post-activation of layer `l`.
    acts: Vec<Vec<f64>>,
    cot_a: Vec<f64>,
    cot_b: Vec<f64>,
}

impl Tape {
    pub fn for_net(net: &Mlp) -> Tape {
        let widest = *net.sizes.iter().max().unwrap();
        Tape {
            sizes: net.sizes.clone(),
            acts: net.sizes.iter().map(|&n| vec![0.0; n]).collect(),
            cot_a: vec![0.0; widest],
            cot_b: vec![0.0; widest],
        }
    }

    /// Network output recorded by the last forward pass.
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

fn layer_offsets(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len() - 1);
    let mut total = 0;
    for l in 0..sizes.len() - 1 {
        offsets.push(total);
        total += sizes[l + 1] * sizes[l] + sizes[l + 1];
    }
    (offsets, total)
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(sizes: &[usize], masks: Vec<Option<Vec<f64>>>) -> Result<Mlp> {
        if sizes.len() < 2 || sizes.iter().any(|&n| n == 0) {
            return Err(Error::config(format!("bad architecture {sizes:?}")));
        }
        if masks.len() != sizes.len() - 1 {
            return Err(Error::shape(format!(
                "{} masks for {} layers",
                masks.len(),
                sizes.len() - 1
            )));
        }
        for (l, m) in masks.iter().enumerate() {
            if let Some(m) = m {
                if m.len() != sizes[l + 1] * sizes[l] {
                    return Err(Error::shape(format!("mask {l} has wrong shape")));
                }
                if m.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::config(format!("mask {l} is not 0/1")));
                }
            }
        }
        let (offsets, total) = layer_offsets(sizes);
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; total],
            masks,
            offsets,
        })
    }

    /// Glorot-uniform weights (`U(+-sqrt(6/(fan_in+fan_out)))`), zero
    /// biases; masked entries are zeroed after init.
    pub fn glorot(sizes: &[usize], masks: Vec<Option<Vec<f64>>>, rng: &mut impl Rng) -> Result<Mlp> {
        let mut net = Mlp::zeros(sizes, masks)?;
        for l in 0..net.layer_count() {
            let (n_out, n_in) = (net.sizes[l + 1], net.sizes[l]);
            let bound = libm::sqrt(6.0 / (n_in + n_out) as f64);
            let off = net.offsets[l];
            for k in 0..n_out * n_in {
                net.params[off + k] = uniform(rng, -bound, bound);
            }
            if let Some(mask) = &net.masks[l] {
                for k in 0..n_out * n_in {
                    net.params[off + k] *= mask[k];
                }
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Flat parameter view; writing through [`Mlp::params_mut`] and reading
    /// back is the identity.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.params.len() {
            return Err(Error::shape(format!(
                "{} parameters supplied, network has {}",
                flat.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(flat);
        Ok(())
    }

    pub fn masks(&self) -> &[Option<Vec<f64>>] {
        &self.masks
    }

    /// Offset of layer `l`'s block in the flat vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    /// Affine-tanh composition; the tape records post-activations for the
    /// backward pass.
    pub fn forward(&self, input: &[f64], tape: &mut Tape) -> Result<()> {
        if input.len() != self.sizes[0] {
            return Err(Error::shape(format!(
                "input has {} entries, network expects {}",
                input.len(),
                self.sizes[0]
            )));
        }
        if tape.sizes != self.sizes {
            return Err(Error::shape("tape does not match this architecture"));
        }
        tape.acts[0].copy_from_slice(input);
        let n_layers = self.layer_count();
        for l in 0..n_layers {
            let (n_out, n_in) = (self.sizes[l + 1], self.sizes[l]);
            let off = self.offsets[l];
            let w = &self.params[off..off + n_out * n_in];
            let b = &self.params[off + n_out * n_in..off + n_out * n_in + n_out];
            let (prev, rest) = tape.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let a = &mut rest[0];
            let last = l + 1 == n_layers;
            match &self.masks[l] {
                Some(mask) => {
                    for i in 0..n_out {
                        let row = &w[i * n_in..(i + 1) * n_in];
                        let mrow = &mask[i * n_in..(i + 1) * n_in];
                        let mut acc = b[i];
                        for j in 0..n_in {
                            acc += row[j] * mrow[j] * x[j];
                        }
                        a[i] = if last { acc } else { libm::tanh(acc) };
                    }
                }
                None => {
                    for i in 0..n_out {
                        let row = &w[i * n_in..(i + 1) * n_in];
                        let mut acc = b[i];
                        for j in 0..n_in {
                            acc += row[j] * x[j];
                        }
                        a[i] = if last { acc } else { libm::tanh(acc) };
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact reverse-mode gradient of `<output, cotangent>`.
    ///
    /// Parameter gradients are accumulated (`+=`) into `grad` (flat layout);
    /// the cotangent with respect to the input is written to `input_cot`.
    pub fn backward(
        &self,
        tape: &mut Tape,
        output_cot: &[f64],
        grad: &mut [f64],
        input_cot: &mut [f64],
    ) -> Result<()> {
        if tape.sizes != self.sizes {
            return Err(Error::shape("tape does not match this architecture"));
        }
        let n_layers = self.layer_count();
        if output_cot.len() != self.sizes[n_layers] {
            return Err(Error::shape("output cotangent has wrong length"));
        }
        if grad.len() != self.params.len() || input_cot.len() != self.sizes[0] {
            return Err(Error::shape("gradient buffers have wrong length"));
        }

        tape.cot_a[..output_cot.len()].copy_from_slice(output_cot);
        for l in (0..n_layers).rev() {
            let (n_out, n_in) = (self.sizes[l + 1], self.sizes[l]);
            let off = self.offsets[l];
            let w = &self.params[off..off + n_out * n_in];
            let x = &tape.acts[l];
            let a = &tape.acts[l + 1];
            let last = l + 1 == n_layers;

            // Cotangent through the activation: identity on the output
            // layer, tanh' = 1 - a^2 on hidden layers.
            if !last {
                for i in 0..n_out {
                    tape.cot_a[i] *= 1.0 - a[i] * a[i];
                }
            }

            let (gw, gb) = grad[off..off + n_out * n_in + n_out].split_at_mut(n_out * n_in);
            tape.cot_b[..n_in].fill(0.0);
            match &self.masks[l] {
                Some(mask) => {
                    for i in 0..n_out {
                        let cz = tape.cot_a[i];
                        gb[i] += cz;
                        let row = &w[i * n_in..(i + 1) * n_in];
                        let mrow = &mask[i * n_in..(i + 1) * n_in];
                        let grow = &mut gw[i * n_in..(i + 1) * n_in];
                        for j in 0..n_in {
                            grow[j] += cz * x[j] * mrow[j];
                            tape.cot_b[j] += row[j] * mrow[j] * cz;
                        }
                    }
                }
                None => {
                    for i in 0..n_out {
                        let cz = tape.cot_a[i];
                        gb[i] += cz;
                        let row = &w[i * n_in..(i + 1) * n_in];
                        let grow = &mut gw[i * n_in..(i + 1) * n_in];
                        for j in 0..n_in {
                            grow[j] += cz * x[j];
                            tape.cot_b[j] += row[j] * cz;
                        }
                    }
                }
            }
            core::mem::swap(&mut tape.cot_a, &mut tape.cot_b);
        }
        input_cot.copy_from_slice(&tape.cot_a[..self.sizes[0]]);
        Ok(())
    }
}

/// MADE-style masks for an autoregressive conditioner.
///
/// `in_degrees[j]` is the autoregressive degree of input `j`: degree 0 marks
/// conditioning inputs visible to every output, degree `d >= 1` the `d`-th
/// coordinate in the autoregressive ordering, and [`DEGREE_BLOCKED`] an
/// input nothing may depend on. `out_degrees[k]` gives the degree of output
/// `k`; an output of degree `d` may depend only on inputs of degree
/// strictly less than `d`. Hidden units cycle through degrees
/// `0..=hidden_max_degree`.
///
/// Connection rules: input/hidden unit of degree `a` feeds a hidden unit of
/// degree `b` iff `a <= b`, and an output of degree `d` iff `a < d`.
/// All-ones masks are returned as `None`.
pub fn made_masks(
    in_degrees: &[usize],
    hidden: &[usize],
    out_degrees: &[usize],
    hidden_max_degree: usize,
) -> Vec<Option<Vec<f64>>> {
    let hidden_degree = |k: usize| k % (hidden_max_degree + 1);
    let mut masks = Vec::with_capacity(hidden.len() + 1);
    let mut prev: Vec<usize> = in_degrees.to_vec();
    for &n in hidden {
        let mut mask = vec![0.0; n * prev.len()];
        for i in 0..n {
            let di = hidden_degree(i);
            for (j, &dj) in prev.iter().enumerate() {
                if dj != DEGREE_BLOCKED && dj <= di {
                    mask[i * prev.len() + j] = 1.0;
                }
            }
        }
        masks.push(dense_or_none(mask));
        prev = (0..n).map(hidden_degree).collect();
    }
    let mut mask = vec![0.0; out_degrees.len() * prev.len()];
    for (i, &di) in out_degrees.iter().enumerate() {
        for (j, &dj) in prev.iter().enumerate() {
            if dj != DEGREE_BLOCKED && dj < di {
                mask[i * prev.len() + j] = 1.0;
            }
        }
    }
    masks.push(dense_or_none(mask));
    masks
}

fn dense_or_none(mask: Vec<f64>) -> Option<Vec<f64>> {
    if mask.iter().all(|&v| v == 1.0) {
        None
    } else {
        Some(mask)
    }
}
