//! Fourier Neural Operator: lifting, four spectral layers with a local
//! linear bypass, and a two-stage projection head.

mod io;
mod spectral;
mod tape;
mod train;

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use spectral::{spectral_backward, spectral_forward, SpectralGrads, SpectralShape};
pub use tape::{gelu, gelu_derivative, mse, relative_l2, NodeId, Tape, REL_L2_EPS};
pub use train::{
    adam_step, train, train_with, AdamState, EpochLog, LossKind, TrainConfig, TrainOutput, Trainable,
};

/// Number of spectral layers.
pub const LAYERS: usize = 4;

/// Real scalars in the full-size model with 8 input channels.
pub const FULL_PRESET_PARAM_COUNT: usize = 67_135_690;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::config("preset", format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FnoConfig {
    pub modes: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub proj_hidden: usize,
}

impl FnoConfig {
    pub fn preset(preset: Preset, in_channels: usize) -> Self {
        let (modes, width) = match preset {
            Preset::Desk => (12, 32),
            Preset::Paper => (32, 64),
        };
        FnoConfig {
            modes,
            width,
            in_channels,
            out_channels: 10,
            proj_hidden: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("modes", self.modes),
            ("width", self.width),
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("proj_hidden", self.proj_hidden),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        Ok(())
    }

    /// `(name, length)` of every parameter tensor in storage order.
    pub fn tensor_layout(&self) -> Vec<(String, usize)> {
        let (w, m) = (self.width, self.modes);
        let spec = 2 * m * m * w * w;
        let mut out = vec![("lift.w".to_string(), w * self.in_channels), ("lift.b".into(), w)];
        for l in 0..LAYERS {
            out.push((format!("layer{l}.spectral.re"), spec));
            out.push((format!("layer{l}.spectral.im"), spec));
            out.push((format!("layer{l}.local.w"), w * w));
            out.push((format!("layer{l}.local.b"), w));
        }
        out.push(("proj1.w".into(), self.proj_hidden * w));
        out.push(("proj1.b".into(), self.proj_hidden));
        out.push(("proj2.w".into(), self.out_channels * self.proj_hidden));
        out.push(("proj2.b".into(), self.out_channels));
        out
    }

    /// Total real scalars; each complex spectral weight counts twice.
    pub fn param_count(&self) -> usize {
        self.tensor_layout().iter().map(|(_, n)| n).sum()
    }

    pub fn spectral_shape(&self, h: usize, w: usize) -> Result<SpectralShape> {
        SpectralShape::new(self.width, h, w, self.modes)
    }
}

// tensor indices
const LIFT_W: usize = 0;
const LIFT_B: usize = 1;
const fn layer(l: usize) -> usize {
    2 + 4 * l
}
const PROJ1_W: usize = 2 + 4 * LAYERS;
const PROJ1_B: usize = PROJ1_W + 1;
const PROJ2_W: usize = PROJ1_W + 2;
const PROJ2_B: usize = PROJ1_W + 3;

#[derive(Clone, Debug, PartialEq)]
pub struct FnoParameters {
    pub config: FnoConfig,
    pub seed: u64,
    tensors: Vec<Vec<f64>>,
}

/// Intermediate tensors of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub lifted: Vec<f64>,
    /// Input to each layer's activation.
    pub pre_activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl FnoParameters {
    /// Seeded initialization: spectral weights uniform in `[0, 1/width^2)`,
    /// affine maps uniform in `+-1/sqrt(fan_in)`.
    pub fn init(config: FnoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = config.width;
        let spectral_scale = 1.0 / (w * w) as f64;
        let fan_in = |name: &str| -> usize {
            if name.starts_with("lift") {
                config.in_channels
            } else if name.starts_with("proj2") {
                config.proj_hidden
            } else {
                w
            }
        };
        let tensors = config
            .tensor_layout()
            .into_iter()
            .map(|(name, n)| {
                if name.contains("spectral") {
                    (0..n).map(|_| spectral_scale * rng.gen::<f64>()).collect()
                } else {
                    let bound = 1.0 / (fan_in(&name) as f64).sqrt();
                    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
                }
            })
            .collect();
        Ok(FnoParameters { config, seed, tensors })
    }

    pub fn zeros(config: FnoConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config.tensor_layout().into_iter().map(|(_, n)| vec![0.0; n]).collect();
        Ok(FnoParameters {
            config,
            seed: 0,
            tensors,
        })
    }

    pub fn from_tensors(config: FnoConfig, seed: u64, tensors: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let layout = config.tensor_layout();
        if layout.len() != tensors.len() || layout.iter().zip(&tensors).any(|((_, n), t)| *n != t.len()) {
            return Err(Error::Shape("tensor lengths do not match the configuration".into()));
        }
        Ok(FnoParameters { config, seed, tensors })
    }

    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    fn check_input(&self, input: &[f64], h: usize, w: usize) -> Result<()> {
        let expected = self.config.in_channels * h * w;
        if input.len() != expected {
            return Err(Error::Contract(format!(
                "model expects {} channels of {h}x{w} ({expected} values), got {}",
                self.config.in_channels,
                input.len()
            )));
        }
        Ok(())
    }

    /// Records the forward pass; returns the output node and the
    /// pre-activation node of every layer.
    pub fn record<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        input: NodeId,
        shape: &'a SpectralShape,
    ) -> (NodeId, Vec<NodeId>) {
        let c = &self.config;
        let t = &self.tensors;
        let p = |tape: &mut Tape<'a>, i: usize| tape.param(i, &t[i]);
        let (lw, lb) = (p(tape, LIFT_W), p(tape, LIFT_B));
        let mut h = tape.affine(input, lw, lb, c.in_channels, c.width);
        let mut pre = Vec::with_capacity(LAYERS + 1);
        pre.push(h);
        for l in 0..LAYERS {
            let base = layer(l);
            let (re, im) = (p(tape, base), p(tape, base + 1));
            let (mw, mb) = (p(tape, base + 2), p(tape, base + 3));
            let s = tape.spectral(h, re, im, shape);
            let local = tape.affine(h, mw, mb, c.width, c.width);
            let z = tape.add(s, local);
            pre.push(z);
            h = tape.gelu(z);
        }
        let (w1, b1) = (p(tape, PROJ1_W), p(tape, PROJ1_B));
        let z = tape.affine(h, w1, b1, c.width, c.proj_hidden);
        let a = tape.gelu(z);
        let (w2, b2) = (p(tape, PROJ2_W), p(tape, PROJ2_B));
        (tape.affine(a, w2, b2, c.proj_hidden, c.out_channels), pre)
    }

    /// `in_channels x h x w` to `out_channels x h x w`.
    pub fn forward(&self, input: &[f64], h: usize, w: usize) -> Result<Vec<f64>> {
        Ok(self.trace(input, h, w)?.output)
    }

    pub fn trace(&self, input: &[f64], h: usize, w: usize) -> Result<ForwardTrace> {
        self.check_input(input, h, w)?;
        let shape = self.config.spectral_shape(h, w)?;
        let mut tape = Tape::new();
        let x = tape.constant(input);
        let (out, pre) = self.record(&mut tape, x, &shape);
        Ok(ForwardTrace {
            lifted: tape.value(pre[0]).to_vec(),
            pre_activations: pre[1..].iter().map(|&n| tape.value(n).to_vec()).collect(),
            output: tape.value(out).to_vec(),
        })
    }

    /// Loss on one sample; with `grads`, adds `scale * dloss/dparams`.
    pub fn sample_loss(
        &self,
        shape: &SpectralShape,
        input: &[f64],
        target: &[f64],
        kind: LossKind,
        grads: Option<(&mut [Vec<f64>], f64)>,
    ) -> Result<f64> {
        self.check_input(input, shape.h, shape.w)?;
        if target.len() != self.config.out_channels * shape.h * shape.w {
            return Err(Error::Contract("target size does not match the model output".into()));
        }
        let mut tape = Tape::new();
        let x = tape.constant(input);
        let (out, _) = self.record(&mut tape, x, shape);
        let loss = match kind {
            LossKind::RelativeL2 => tape.relative_l2(out, target),
            LossKind::Mse => tape.mse(out, target),
        };
        let value = tape.value(loss)[0];
        if let Some((g, scale)) = grads {
            tape.backward(loss, scale, g);
        }
        Ok(value)
    }
}
