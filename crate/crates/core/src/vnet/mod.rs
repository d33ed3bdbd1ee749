//! Residual encoder-decoder segmentation network.
//!
//! The architecture runs I -> D1 -> D2 -> D3 -> L -> U3 -> U2 -> U1 -> F.
//! Each block is a stack of 5x5x5 same-padded convolutions (SELU after each)
//! wrapped in a residual skip from the stack input (a learned 1x1x1
//! projection reconciles channel mismatches), followed by a resolution
//! change: a 2x2x2 stride-2 convolution on the way down, a 2x2x2 stride-2
//! transpose convolution on the way up. Every resolution change doubles
//! (down) or halves (up) the channel count. Encoder features are
//! concatenated channelwise into the equal-resolution decoder stage; the
//! skip source is each block's pre-downsampling feature map. The final
//! block applies one 5x5x5 convolution, a 1x1x1 classifier and a sigmoid.
//!
//! At the reference scale (`base_filters = 8`) the convolution widths are
//! 8/16/32/64/128; `base_filters = 2` gives the desk-scale 2/4/8/16/32.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::autograd::{elem, AutogradError, Element, Shape, Tape, Tensor, Var};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VnetError {
    #[error("invalid architecture spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Network shape description. Four downsamplings require every input dim to
/// be divisible by 16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_dims: (usize, usize, usize),
    /// Filter count of the very first convolution; all other widths are
    /// fixed multiples of it.
    pub base_filters: usize,
}

impl ArchitectureSpec {
    pub fn new(input_dims: (usize, usize, usize), base_filters: usize) -> Result<Self, VnetError> {
        let (nx, ny, nz) = input_dims;
        for d in [nx, ny, nz] {
            if d == 0 || d % 16 != 0 {
                return Err(VnetError::Spec(format!(
                    "input dims must be positive multiples of 16, got {input_dims:?}"
                )));
            }
        }
        if base_filters == 0 {
            return Err(VnetError::Spec("base_filters must be positive".into()));
        }
        Ok(Self {
            input_dims,
            base_filters,
        })
    }

    /// Full-size configuration: 96x96x192 crops, widths 8/16/32/64/128.
    pub fn paper_scale() -> Self {
        Self {
            input_dims: (96, 96, 192),
            base_filters: 8,
        }
    }

    /// Reduced configuration for CPU runs: 32x32x64 crops, widths 2/4/8/16/32.
    pub fn desk_scale() -> Self {
        Self {
            input_dims: (32, 32, 64),
            base_filters: 2,
        }
    }
}

/// One convolution unit: kernel size, channels, and role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ConvKind {
    /// 5x5x5, stride 1, same padding
    Stack,
    /// 1x1x1 residual projection
    Projection,
    /// 2x2x2 stride-2 downsampling
    Down,
    /// 2x2x2 stride-2 transpose upsampling
    Up,
    /// 1x1x1 classifier
    Classify,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvPlan {
    pub name: String,
    pub kind: ConvKind,
    pub cin: usize,
    pub cout: usize,
}

impl ConvPlan {
    fn kernel(&self) -> usize {
        match self.kind {
            ConvKind::Stack => 5,
            ConvKind::Down | ConvKind::Up => 2,
            ConvKind::Projection | ConvKind::Classify => 1,
        }
    }

    pub fn weight_shape(&self) -> Shape {
        let k = self.kernel();
        Shape::new(self.cout, self.cin, k, k, k)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.cout, 1, 1, 1)
    }

    pub fn parameter_count(&self) -> usize {
        self.weight_shape().len() + self.cout
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BlockPlan {
    pub convs: Vec<ConvPlan>,
    pub proj: Option<ConvPlan>,
    pub resample: Option<ConvPlan>,
}

/// Fixed block layout for a base width `b`.
pub(crate) fn block_plans(b: usize) -> Vec<BlockPlan> {
    let conv = |name: String, kind, cin, cout| ConvPlan {
        name,
        kind,
        cin,
        cout,
    };
    let stack = |block: &str, widths: &[(usize, usize)]| -> Vec<ConvPlan> {
        widths
            .iter()
            .enumerate()
            .map(|(i, &(cin, cout))| conv(format!("{block}.conv{i}"), ConvKind::Stack, cin, cout))
            .collect()
    };
    let proj_if = |block: &str, cin: usize, cout: usize| -> Option<ConvPlan> {
        (cin != cout).then(|| conv(format!("{block}.proj"), ConvKind::Projection, cin, cout))
    };

    vec![
        // I: one 5^3 conv, then downsample
        BlockPlan {
            convs: stack("i", &[(1, b)]),
            proj: proj_if("i", 1, b),
            resample: Some(conv("i.down".into(), ConvKind::Down, b, 2 * b)),
        },
        // D1: two convs
        BlockPlan {
            convs: stack("d1", &[(2 * b, 4 * b), (4 * b, 4 * b)]),
            proj: proj_if("d1", 2 * b, 4 * b),
            resample: Some(conv("d1.down".into(), ConvKind::Down, 4 * b, 8 * b)),
        },
        // D2: three convs, width unchanged
        BlockPlan {
            convs: stack("d2", &[(8 * b, 8 * b), (8 * b, 8 * b), (8 * b, 8 * b)]),
            proj: None,
            resample: Some(conv("d2.down".into(), ConvKind::Down, 8 * b, 16 * b)),
        },
        // D3
        BlockPlan {
            convs: stack("d3", &[(16 * b, 16 * b), (16 * b, 16 * b), (16 * b, 16 * b)]),
            proj: None,
            resample: Some(conv("d3.down".into(), ConvKind::Down, 16 * b, 32 * b)),
        },
        // L: bottom of the ladder, transpose conv back up
        BlockPlan {
            convs: stack("l", &[(32 * b, 16 * b), (16 * b, 16 * b), (16 * b, 16 * b)]),
            proj: proj_if("l", 32 * b, 16 * b),
            resample: Some(conv("l.up".into(), ConvKind::Up, 16 * b, 8 * b)),
        },
        // U3: consumes concat(d3 skip 16b, upsampled 8b)
        BlockPlan {
            convs: stack("u3", &[(24 * b, 16 * b), (16 * b, 16 * b), (16 * b, 16 * b)]),
            proj: proj_if("u3", 24 * b, 16 * b),
            resample: Some(conv("u3.up".into(), ConvKind::Up, 16 * b, 8 * b)),
        },
        // U2: concat(d2 skip 8b, 8b)
        BlockPlan {
            convs: stack("u2", &[(16 * b, 8 * b), (8 * b, 8 * b), (8 * b, 8 * b)]),
            proj: proj_if("u2", 16 * b, 8 * b),
            resample: Some(conv("u2.up".into(), ConvKind::Up, 8 * b, 4 * b)),
        },
        // U1: concat(d1 skip 4b, 4b)
        BlockPlan {
            convs: stack("u1", &[(8 * b, 4 * b), (4 * b, 4 * b), (4 * b, 4 * b)]),
            proj: proj_if("u1", 8 * b, 4 * b),
            resample: Some(conv("u1.up".into(), ConvKind::Up, 4 * b, 2 * b)),
        },
        // F: concat(i skip b, 2b) -> one conv, classifier handled separately
        BlockPlan {
            convs: stack("f", &[(3 * b, 2 * b)]),
            proj: proj_if("f", 3 * b, 2 * b),
            resample: Some(conv("f.classify".into(), ConvKind::Classify, 2 * b, 1)),
        },
    ]
}

/// Flat, ordered list of every convolution in the network.
pub(crate) fn conv_plans(b: usize) -> Vec<ConvPlan> {
    let mut out = Vec::new();
    for block in block_plans(b) {
        out.extend(block.convs.iter().cloned());
        if let Some(p) = &block.proj {
            out.push(p.clone());
        }
        if let Some(r) = &block.resample {
            out.push(r.clone());
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct NamedParam<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// A built network: architecture plus ordered named parameters (weight then
/// bias per convolution) and creation metadata.
#[derive(Debug, Clone)]
pub struct Model<T: Element> {
    spec: ArchitectureSpec,
    params: Vec<NamedParam<T>>,
    seed: u64,
    config_digest: String,
}

/// Construct a network with Gaussian `N(0, 1/fan_in)` weights (standard
/// deviation `1/sqrt(fan_in)`, suited to SELU self-normalization) and zero
/// biases, deterministically from `seed`.
pub fn build_model<T: Element>(spec: ArchitectureSpec, seed: u64) -> Model<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for plan in conv_plans(spec.base_filters) {
        let fan_in = plan.weight_shape().channels * plan.weight_shape().spatial_len();
        let sd = 1.0 / (fan_in as f64).sqrt();
        let normal = Normal::new(0.0, sd).unwrap();
        let weights = Tensor::from_fn(plan.weight_shape(), |_| elem::<T>(normal.sample(&mut rng)));
        params.push(NamedParam {
            name: format!("{}.w", plan.name),
            tensor: weights,
        });
        params.push(NamedParam {
            name: format!("{}.b", plan.name),
            tensor: Tensor::zeros(plan.bias_shape()),
        });
    }
    Model {
        spec,
        params,
        seed,
        config_digest: String::new(),
    }
}

impl<T: Element> Model<T> {
    pub(crate) fn from_parts(
        spec: ArchitectureSpec,
        params: Vec<NamedParam<T>>,
        seed: u64,
        config_digest: String,
    ) -> Self {
        Self {
            spec,
            params,
            seed,
            config_digest,
        }
    }

    pub fn spec(&self) -> ArchitectureSpec {
        self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn set_config_digest(&mut self, digest: impl Into<String>) {
        self.config_digest = digest.into();
    }

    pub fn params(&self) -> &[NamedParam<T>] {
        &self.params
    }

    pub fn param_tensors(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| p.tensor.clone()).collect()
    }

    pub fn set_param_tensors(&mut self, tensors: Vec<Tensor<T>>) {
        assert_eq!(tensors.len(), self.params.len());
        for (p, t) in self.params.iter_mut().zip(tensors) {
            assert_eq!(p.tensor.shape(), t.shape(), "parameter {}", p.name);
            p.tensor = t;
        }
    }

    /// Total scalar parameter count.
    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(|p| p.tensor.data().len()).sum()
    }

    /// Build the forward graph on `tape`, returning the output node and the
    /// parameter leaf vars (same order as `params`).
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        input: Var,
    ) -> Result<(Var, Vec<Var>), VnetError> {
        let param_vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.tensor.clone()))
            .collect();
        let out = self.forward_with_params(tape, input, &param_vars)?;
        Ok((out, param_vars))
    }

    /// Build the forward graph against parameter vars already on the tape
    /// (in `params` order); used where gradients must flow to caller-owned
    /// leaves.
    pub fn forward_with_params(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        param_vars: &[Var],
    ) -> Result<Var, VnetError> {
        let shape = tape.shape(input);
        let (nx, ny, nz) = self.spec.input_dims;
        if shape.channels != 1 || shape.spatial() != (nx, ny, nz) {
            return Err(VnetError::Autograd(AutogradError::ShapeMismatch(format!(
                "input {shape:?} does not match spec dims ({nx}, {ny}, {nz}) with 1 channel"
            ))));
        }
        if param_vars.len() != self.params.len() {
            return Err(VnetError::Autograd(AutogradError::InvalidArgument(
                format!(
                    "expected {} parameter vars, got {}",
                    self.params.len(),
                    param_vars.len()
                ),
            )));
        }
        let mut next = param_vars.iter().copied();
        let mut take_pair = || {
            let w = next.next().expect("parameter list exhausted");
            let b = next.next().expect("parameter list exhausted");
            (w, b)
        };

        // Applies one block: SELU after every stack conv, residual combine
        // from the block input, then the resolution change (SELU after it,
        // except the classifier which gets the sigmoid).
        let blocks = block_plans(self.spec.base_filters);
        let mut skips: Vec<Var> = Vec::new();
        let mut x = input;
        let mut out = None;

        for (bi, block) in blocks.iter().enumerate() {
            // decoder blocks consume the matching encoder skip first
            if bi >= 5 {
                let skip = skips[8 - bi]; // u3 <- d3, u2 <- d2, u1 <- d1, f <- i
                x = tape.concat_channels(skip, x)?;
            }
            let block_input = x;
            let mut h = x;
            for _ in &block.convs {
                let (w, b) = take_pair();
                h = tape.conv3d(h, w, b, 1, 2)?;
                h = tape.selu(h);
            }
            let proj = block.proj.as_ref().map(|_| take_pair());
            let residual = tape.residual_combine(block_input, h, proj)?;

            let (w, b) = take_pair();
            let plan = block.resample.as_ref().expect("every block resamples");
            x = match plan.kind {
                ConvKind::Down => {
                    skips.push(residual);
                    let d = tape.conv3d(residual, w, b, 2, 0)?;
                    tape.selu(d)
                }
                ConvKind::Up => {
                    let u = tape.conv3d_transpose(residual, w, b)?;
                    tape.selu(u)
                }
                ConvKind::Classify => {
                    let logits = tape.conv3d(residual, w, b, 1, 0)?;
                    out = Some(tape.sigmoid(logits));
                    residual
                }
                _ => unreachable!(),
            };
        }
        Ok(out.expect("classifier block present"))
    }

    /// Forward pass on a fresh tape: returns the probability map (one
    /// channel, input spatial dims, values in (0,1)).
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, VnetError> {
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone());
        let (out, _) = self.forward_on_tape(&mut tape, x)?;
        Ok(tape.value(out).clone())
    }

    /// Convert parameter storage through f64.
    pub fn cast<U: Element>(&self) -> Model<U> {
        Model {
            spec: self.spec,
            params: self
                .params
                .iter()
                .map(|p| NamedParam {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                })
                .collect(),
            seed: self.seed,
            config_digest: self.config_digest.clone(),
        }
    }
}

/// Analytic parameter count for a base width, computed from the block plan
/// formulas (`k^3 * cin * cout + cout` per convolution).
pub fn expected_parameter_count(base_filters: usize) -> usize {
    conv_plans(base_filters)
        .iter()
        .map(|p| p.parameter_count())
        .sum()
}
