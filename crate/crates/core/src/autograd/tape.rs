//! Reverse-mode tape. Operations append nodes in topological order; the
//! backward pass walks nodes in reverse, accumulating gradients into each
//! node's slot. Graph execution is single-threaded per step; individual
//! kernels parallelize internally with serial-equivalent results.

use super::conv::{
    conv3d_backward_input, conv3d_backward_params, conv3d_forward,
    conv3d_transpose_backward_input, conv3d_transpose_backward_params, conv3d_transpose_forward,
};
use super::tensor::{elem, Element, Shape, Tensor};
use super::AutogradError;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// SELU fixed-point constants of the self-normalizing network family.
pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

/// Smoothing term in the squared-denominator soft Dice loss.
pub const DICE_EPSILON: f64 = 1e-6;

enum OpRecord {
    Leaf,
    Selu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    ConcatChannels {
        a: Var,
        b: Var,
    },
    Conv3d {
        x: Var,
        w: Var,
        bias: Var,
        stride: usize,
        pad: usize,
    },
    ConvTranspose3d {
        x: Var,
        w: Var,
        bias: Var,
    },
    SoftDiceLoss {
        probs: Var,
        target: Var,
        // cached reduction terms: numerator 2*sum(p*g), denominator
        numer: f64,
        denom: f64,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: OpRecord,
}

/// Computation graph for one forward/backward pass.
pub struct Tape<T: Element> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: OpRecord) -> Var {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Insert an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, OpRecord::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated for `v` by the last `backward` call.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Elementwise scaled exponential linear unit.
    pub fn selu(&mut self, x: Var) -> Var {
        let lambda = elem::<T>(SELU_LAMBDA);
        let alpha = elem::<T>(SELU_ALPHA);
        let xv = &self.nodes[x.0].value;
        let mut out = Tensor::zeros(xv.shape());
        for (o, &v) in out.data_mut().iter_mut().zip(xv.data()) {
            *o = if v > T::zero() {
                lambda * v
            } else {
                lambda * alpha * (v.exp() - T::one())
            };
        }
        self.push(out, OpRecord::Selu { x })
    }

    /// Elementwise logistic sigmoid, numerically stable for large |x|.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let mut out = Tensor::zeros(xv.shape());
        for (o, &v) in out.data_mut().iter_mut().zip(xv.data()) {
            *o = stable_sigmoid(v);
        }
        self.push(out, OpRecord::Sigmoid { x })
    }

    /// Elementwise sum of two equal-shaped tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutogradError::ShapeMismatch(format!(
                "add of {sa:?} and {sb:?}"
            )));
        }
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let data = av.iter().zip(bv).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(sa, data)?;
        Ok(self.push(out, OpRecord::Add { a, b }))
    }

    /// Channelwise concatenation (a's channels first).
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.batch != sb.batch || !sa.same_spatial(&sb) {
            return Err(AutogradError::ShapeMismatch(format!(
                "concat of {sa:?} and {sb:?}"
            )));
        }
        let out_shape = Shape::new(sa.batch, sa.channels + sb.channels, sa.nx, sa.ny, sa.nz);
        let spatial = sa.spatial_len();
        let mut data = Vec::with_capacity(out_shape.len());
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        for bt in 0..sa.batch {
            data.extend_from_slice(&av[bt * sa.channels * spatial..][..sa.channels * spatial]);
            data.extend_from_slice(&bv[bt * sb.channels * spatial..][..sb.channels * spatial]);
        }
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push(out, OpRecord::ConcatChannels { a, b }))
    }

    /// 3D convolution; `w` read as (dst, src, kx, ky, kz), `bias` as
    /// (1, dst, 1, 1, 1). Stride 1 keeps spatial dims when `pad = (k-1)/2`;
    /// stride 2 with the 2x2x2 kernel and no padding halves them.
    pub fn conv3d(
        &mut self,
        x: Var,
        w: Var,
        bias: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var, AutogradError> {
        let out = conv3d_forward(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[bias.0].value,
            stride,
            pad,
        )?;
        Ok(self.push(
            out,
            OpRecord::Conv3d {
                x,
                w,
                bias,
                stride,
                pad,
            },
        ))
    }

    /// Stride-2 transpose convolution; doubles each spatial dim.
    pub fn conv3d_transpose(&mut self, x: Var, w: Var, bias: Var) -> Result<Var, AutogradError> {
        let out = conv3d_transpose_forward(
            &self.nodes[x.0].value,
            &self.nodes[w.0].value,
            &self.nodes[bias.0].value,
        )?;
        Ok(self.push(out, OpRecord::ConvTranspose3d { x, w, bias }))
    }

    /// Residual skip: plain elementwise sum when channel counts match. On a
    /// channel mismatch the block input must be routed through a learned
    /// 1x1x1 projection, supplied here as its weight/bias vars.
    pub fn residual_combine(
        &mut self,
        block_input: Var,
        block_output: Var,
        projection: Option<(Var, Var)>,
    ) -> Result<Var, AutogradError> {
        let si = self.shape(block_input);
        let so = self.shape(block_output);
        if !si.same_spatial(&so) || si.batch != so.batch {
            return Err(AutogradError::ShapeMismatch(format!(
                "residual combine of {si:?} and {so:?}"
            )));
        }
        if si.channels == so.channels {
            return self.add(block_input, block_output);
        }
        let (w, bias) = projection.ok_or_else(|| {
            AutogradError::ShapeMismatch(format!(
                "residual combine needs a projection for {} -> {} channels",
                si.channels, so.channels
            ))
        })?;
        let projected = self.conv3d(block_input, w, bias, 1, 0)?;
        self.add(projected, block_output)
    }

    /// Squared-denominator soft Dice loss over the whole tensor:
    /// `1 - 2*sum(p*g) / (sum(p^2) + sum(g^2) + eps)`. Sums accumulate in
    /// double precision. Returns a scalar-shaped node.
    pub fn soft_dice_loss(&mut self, probs: Var, target: Var) -> Result<Var, AutogradError> {
        let (sp, st) = (self.shape(probs), self.shape(target));
        if sp != st {
            return Err(AutogradError::ShapeMismatch(format!(
                "soft dice loss of {sp:?} and {st:?}"
            )));
        }
        let pv = self.nodes[probs.0].value.data();
        let gv = self.nodes[target.0].value.data();
        let mut inter = 0.0f64;
        let mut sum_p2 = 0.0f64;
        let mut sum_g2 = 0.0f64;
        for (&p, &g) in pv.iter().zip(gv) {
            let (p, g) = (p.to_f64().unwrap(), g.to_f64().unwrap());
            inter += p * g;
            sum_p2 += p * p;
            sum_g2 += g * g;
        }
        let numer = 2.0 * inter;
        let denom = sum_p2 + sum_g2 + DICE_EPSILON;
        let loss = 1.0 - numer / denom;
        let out = Tensor::scalar(elem::<T>(loss));
        Ok(self.push(
            out,
            OpRecord::SoftDiceLoss {
                probs,
                target,
                numer,
                denom,
            },
        ))
    }

    fn grad_slot(grads: &mut [Option<Tensor<T>>], v: Var, shape: Shape) -> &mut Tensor<T> {
        grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
    }

    /// Run the backward pass from a scalar node, accumulating gradients for
    /// every node that (transitively) feeds it. Clears previous gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutogradError> {
        if self.nodes[loss.0].value.shape().len() != 1 {
            return Err(AutogradError::InvalidArgument(
                "backward requires a scalar loss node".into(),
            ));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::scalar(T::one()));

        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for i in (0..nodes.len()).rev() {
            let Some(g_out) = grads[i].take() else {
                continue;
            };
            match &nodes[i].op {
                OpRecord::Leaf => {}
                OpRecord::Selu { x } => {
                    let lambda = elem::<T>(SELU_LAMBDA);
                    let alpha = elem::<T>(SELU_ALPHA);
                    let xv = nodes[x.0].value.data();
                    let gx = Self::grad_slot(grads, *x, nodes[x.0].value.shape());
                    for ((d, &v), &g) in gx.data_mut().iter_mut().zip(xv).zip(g_out.data()) {
                        let der = if v > T::zero() {
                            lambda
                        } else {
                            lambda * alpha * v.exp()
                        };
                        *d = *d + g * der;
                    }
                }
                OpRecord::Sigmoid { x } => {
                    let yv = nodes[i].value.data();
                    let gx = Self::grad_slot(grads, *x, nodes[x.0].value.shape());
                    for ((d, &y), &g) in gx.data_mut().iter_mut().zip(yv).zip(g_out.data()) {
                        *d = *d + g * y * (T::one() - y);
                    }
                }
                OpRecord::Add { a, b } => {
                    for v in [*a, *b] {
                        let gv = Self::grad_slot(grads, v, nodes[v.0].value.shape());
                        for (d, &g) in gv.data_mut().iter_mut().zip(g_out.data()) {
                            *d = *d + g;
                        }
                    }
                }
                OpRecord::ConcatChannels { a, b } => {
                    let sa = nodes[a.0].value.shape();
                    let sb = nodes[b.0].value.shape();
                    let spatial = sa.spatial_len();
                    let (a, b) = (*a, *b);
                    {
                        let ga = Self::grad_slot(grads, a, sa);
                        for bt in 0..sa.batch {
                            let src = &g_out.data()[bt * (sa.channels + sb.channels) * spatial..]
                                [..sa.channels * spatial];
                            let dst =
                                &mut ga.data_mut()[bt * sa.channels * spatial..][..sa.channels * spatial];
                            for (d, &g) in dst.iter_mut().zip(src) {
                                *d = *d + g;
                            }
                        }
                    }
                    {
                        let gb = Self::grad_slot(grads, b, sb);
                        for bt in 0..sb.batch {
                            let src = &g_out.data()[bt * (sa.channels + sb.channels) * spatial
                                + sa.channels * spatial..][..sb.channels * spatial];
                            let dst =
                                &mut gb.data_mut()[bt * sb.channels * spatial..][..sb.channels * spatial];
                            for (d, &g) in dst.iter_mut().zip(src) {
                                *d = *d + g;
                            }
                        }
                    }
                }
                OpRecord::Conv3d {
                    x,
                    w,
                    bias,
                    stride,
                    pad,
                } => {
                    let (x, w, bias, stride, pad) = (*x, *w, *bias, *stride, *pad);
                    let w_shape = nodes[w.0].value.shape();
                    {
                        let gx = Self::grad_slot(grads, x, nodes[x.0].value.shape());
                        conv3d_backward_input(gx, &nodes[w.0].value, &g_out, stride, pad);
                    }
                    // split the weight/bias slots to satisfy the borrow checker
                    let (gw_part, gb_part) = if w.0 < bias.0 {
                        let (lo, hi) = grads.split_at_mut(bias.0);
                        (&mut lo[w.0], &mut hi[0])
                    } else {
                        let (lo, hi) = grads.split_at_mut(w.0);
                        (&mut hi[0], &mut lo[bias.0])
                    };
                    let gw = gw_part.get_or_insert_with(|| Tensor::zeros(w_shape));
                    let gb =
                        gb_part.get_or_insert_with(|| Tensor::zeros(nodes[bias.0].value.shape()));
                    conv3d_backward_params(
                        gw,
                        gb,
                        &nodes[x.0].value,
                        &g_out,
                        w_shape,
                        stride,
                        pad,
                    );
                }
                OpRecord::ConvTranspose3d { x, w, bias } => {
                    let (x, w, bias) = (*x, *w, *bias);
                    let w_shape = nodes[w.0].value.shape();
                    {
                        let gx = Self::grad_slot(grads, x, nodes[x.0].value.shape());
                        conv3d_transpose_backward_input(gx, &nodes[w.0].value, &g_out);
                    }
                    let (gw_part, gb_part) = if w.0 < bias.0 {
                        let (lo, hi) = grads.split_at_mut(bias.0);
                        (&mut lo[w.0], &mut hi[0])
                    } else {
                        let (lo, hi) = grads.split_at_mut(w.0);
                        (&mut hi[0], &mut lo[bias.0])
                    };
                    let gw = gw_part.get_or_insert_with(|| Tensor::zeros(w_shape));
                    let gb =
                        gb_part.get_or_insert_with(|| Tensor::zeros(nodes[bias.0].value.shape()));
                    conv3d_transpose_backward_params(gw, gb, &nodes[x.0].value, &g_out, w_shape);
                }
                OpRecord::SoftDiceLoss {
                    probs,
                    target,
                    numer,
                    denom,
                } => {
                    // d/dp (1 - N/D): (2 p N - 2 g D) / D^2, and symmetrically
                    // for the target side.
                    let g = g_out.item().to_f64().unwrap();
                    let (probs, target, numer, denom) = (*probs, *target, *numer, *denom);
                    let d2 = denom * denom;
                    let pv = nodes[probs.0].value.data();
                    let gv = nodes[target.0].value.data();
                    {
                        let gp = Self::grad_slot(grads, probs, nodes[probs.0].value.shape());
                        for ((d, &p), &t) in gp.data_mut().iter_mut().zip(pv).zip(gv) {
                            let (p, t) = (p.to_f64().unwrap(), t.to_f64().unwrap());
                            let der = (2.0 * p * numer - 2.0 * t * denom) / d2;
                            *d = *d + elem::<T>(g * der);
                        }
                    }
                    {
                        let gt = Self::grad_slot(grads, target, nodes[target.0].value.shape());
                        for ((d, &t), &p) in gt.data_mut().iter_mut().zip(gv).zip(pv) {
                            let (p, t) = (p.to_f64().unwrap(), t.to_f64().unwrap());
                            let der = (2.0 * t * numer - 2.0 * p * denom) / d2;
                            *d = *d + elem::<T>(g * der);
                        }
                    }
                }
            }
            grads[i] = Some(g_out);
        }
        Ok(())
    }
}

#[inline]
fn stable_sigmoid<T: Element>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
