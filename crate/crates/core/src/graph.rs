//! Reverse-mode computation tape.
//!
//! A `Graph` records every operation of one forward pass as a node holding
//! its output value, its parent node ids, and a one-shot backward closure
//! that maps the output gradient to one gradient per differentiable input.
//! `backward` sweeps the tape in reverse insertion order (parents always
//! precede children), accumulating gradients; node values are released as
//! soon as no pending backward can read them.
//!
//! Every op validates shapes up front and rejects non-finite outputs.

use crate::error::{Error, Result};
use crate::ops::{act, conv, dropout, linear, loss, norm, pool, shape};
use crate::ops::{ConvCfg, DropoutStyle, RunningStats};
use crate::rng::StreamRng;
use crate::tensor::{Scalar, Tensor};

/// Train vs eval semantics for batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

type BackwardFn<T> =
    Box<dyn FnOnce(&Tensor<T>, &[&Tensor<T>]) -> Result<Vec<Option<Tensor<T>>>> + Send>;

struct Node<T: Scalar> {
    value: Tensor<T>,
    parents: Vec<NodeId>,
    backward: Option<BackwardFn<T>>,
    op: &'static str,
}

/// Gradients keyed by node id, produced by [`Graph::backward`].
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    param_leaves: Vec<(NodeId, usize)>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_leaves: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Output value of a node. Values of interior nodes are released by
    /// `backward`; read what you need before running it.
    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Leaves registered through [`Graph::param`], as `(node, param index)`.
    pub fn param_leaves(&self) -> &[(NodeId, usize)] {
        &self.param_leaves
    }

    fn push(
        &mut self,
        value: Tensor<T>,
        parents: Vec<NodeId>,
        op: &'static str,
        backward: Option<BackwardFn<T>>,
    ) -> Result<NodeId> {
        value.ensure_finite(op)?;
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            parents,
            backward,
            op,
        });
        Ok(id)
    }

    /// Constant or network-input leaf.
    pub fn input(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push(value, vec![], "input", None)
    }

    /// Parameter leaf; `param_index` lets callers scatter gradients back into
    /// their own parameter storage after `backward`.
    pub fn param(&mut self, param_index: usize, value: Tensor<T>) -> Result<NodeId> {
        let id = self.push(value, vec![], "param", None)?;
        self.param_leaves.push((id, param_index));
        Ok(id)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add_tensor(self.value(b))?;
        self.push(
            value,
            vec![a, b],
            "add",
            Some(Box::new(|gy, _| Ok(vec![Some(gy.clone()), Some(gy.clone())]))),
        )
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, cfg: ConvCfg) -> Result<NodeId> {
        let y = conv::forward(self.value(x), self.value(w), self.value(b), &cfg)?;
        let cout = self.value(w).shape()[0];
        self.push(
            y,
            vec![x, w, b],
            "conv2d",
            Some(Box::new(move |gy, pv| {
                let (x, w, b) = (pv[0], pv[1], pv[2]);
                let gx = conv::backward_input(gy, x, w, b, &cfg)?;
                let gw = conv::backward_weight(gy, x, w, b, &cfg)?;
                let gb = conv::backward_bias(gy, cout);
                Ok(vec![Some(gx), Some(gw), Some(gb)])
            })),
        )
    }

    pub fn maxpool2d(
        &mut self,
        x: NodeId,
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Result<NodeId> {
        let (y, argmax) = pool::maxpool_forward(self.value(x), kernel, stride)?;
        let in_shape = self.value(x).shape().to_vec();
        self.push(
            y,
            vec![x],
            "maxpool2d",
            Some(Box::new(move |gy, _| {
                Ok(vec![Some(pool::maxpool_backward(gy, &argmax, &in_shape))])
            })),
        )
    }

    pub fn freq_avgpool(&mut self, x: NodeId) -> Result<NodeId> {
        let f = self.value(x).dim(2);
        let y = pool::freq_avgpool_forward(self.value(x))?;
        self.push(
            y,
            vec![x],
            "freq_avgpool",
            Some(Box::new(move |gy, _| {
                Ok(vec![Some(pool::freq_avgpool_backward(gy, f))])
            })),
        )
    }

    pub fn broadcast_freq(&mut self, x: NodeId, f: usize) -> Result<NodeId> {
        let y = pool::broadcast_freq_forward(self.value(x), f)?;
        self.push(
            y,
            vec![x],
            "broadcast_freq",
            Some(Box::new(move |gy, _| {
                Ok(vec![Some(pool::broadcast_freq_backward(gy))])
            })),
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm2d(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running: &mut RunningStats<T>,
        mode: Mode,
        eps: f64,
        momentum: f64,
    ) -> Result<NodeId> {
        let (_, c, f, t) = self.value(x).dims4("batchnorm2d")?;
        let (y, ctx) = norm::batchnorm_forward(
            self.value(x),
            self.value(gamma),
            self.value(beta),
            running,
            mode,
            eps,
            momentum,
            c,
            f * t,
        )?;
        self.push(
            y,
            vec![x, gamma, beta],
            "batchnorm2d",
            Some(Box::new(move |gy, pv| {
                let (gx, gg, gb) = norm::batchnorm_backward(gy, pv[0], pv[1], &ctx);
                Ok(vec![Some(gx), Some(gg), Some(gb)])
            })),
        )
    }

    /// Batch norm applied independently to `groups` contiguous frequency
    /// bands of each channel; gamma/beta/running stats carry `C*groups`
    /// entries.
    #[allow(clippy::too_many_arguments)]
    pub fn subspectral_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running: &mut RunningStats<T>,
        groups: usize,
        mode: Mode,
        eps: f64,
        momentum: f64,
    ) -> Result<NodeId> {
        let (channels, slab) = norm::ssn_view(self.value(x), groups)?;
        let (y, ctx) = norm::batchnorm_forward(
            self.value(x),
            self.value(gamma),
            self.value(beta),
            running,
            mode,
            eps,
            momentum,
            channels,
            slab,
        )?;
        self.push(
            y,
            vec![x, gamma, beta],
            "subspectral_norm",
            Some(Box::new(move |gy, pv| {
                let (gx, gg, gb) = norm::batchnorm_backward(gy, pv[0], pv[1], &ctx);
                Ok(vec![Some(gx), Some(gg), Some(gb)])
            })),
        )
    }

    /// Parameter-free instance norm over `(c, t)` per `(n, f)`; identical in
    /// train and eval.
    pub fn freq_instance_norm(&mut self, x: NodeId, eps: f64) -> Result<NodeId> {
        let (y, ctx) = norm::freq_instance_norm_forward(self.value(x), eps)?;
        self.push(
            y,
            vec![x],
            "freq_instance_norm",
            Some(Box::new(move |gy, pv| {
                Ok(vec![Some(norm::freq_instance_norm_backward(gy, pv[0], &ctx))])
            })),
        )
    }

    pub fn swish(&mut self, x: NodeId) -> Result<NodeId> {
        let y = act::swish_forward(self.value(x));
        self.push(
            y,
            vec![x],
            "swish",
            Some(Box::new(|gy, pv| Ok(vec![Some(act::swish_backward(gy, pv[0]))]))),
        )
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let y = act::relu_forward(self.value(x));
        self.push(
            y,
            vec![x],
            "relu",
            Some(Box::new(|gy, pv| Ok(vec![Some(act::relu_backward(gy, pv[0]))]))),
        )
    }

    /// Dropout. Identity in eval mode or at `p == 0`; in train mode zeroes
    /// elements (or whole channels) with probability `p` and scales survivors
    /// by `1/(1-p)`, mask drawn from `rng`.
    pub fn dropout(
        &mut self,
        x: NodeId,
        p: f64,
        style: DropoutStyle,
        mode: Mode,
        rng: Option<&mut StreamRng>,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!(
                "dropout probability must be in [0, 1), got {}",
                p
            )));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let rng = rng.ok_or_else(|| {
            Error::config("train-mode dropout requires an RNG stream")
        })?;
        let (y, mask) = dropout::forward(self.value(x), p, style, rng)?;
        self.push(
            y,
            vec![x],
            "dropout",
            Some(Box::new(move |gy, _| {
                Ok(vec![Some(dropout::apply(gy, &mask, style))])
            })),
        )
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let y = linear::forward(self.value(x), self.value(w), self.value(b))?;
        self.push(
            y,
            vec![x, w, b],
            "linear",
            Some(Box::new(move |gy, pv| {
                let (gx, gw, gb) = linear::backward(gy, pv[0], pv[1]);
                Ok(vec![Some(gx), Some(gw), Some(gb)])
            })),
        )
    }

    /// Mean over the batch of `-ln softmax(logits)[label]`, optionally
    /// class-weighted. Output is a scalar node.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
        class_weights: Option<Vec<T>>,
    ) -> Result<NodeId> {
        let (value, probs, weight_sum) =
            loss::forward(self.value(logits), labels, class_weights.as_deref())?;
        let labels = labels.to_vec();
        self.push(
            Tensor::scalar(value),
            vec![logits],
            "softmax_cross_entropy",
            Some(Box::new(move |gy, _| {
                let g = loss::backward(
                    gy.data()[0],
                    &probs,
                    &labels,
                    class_weights.as_deref(),
                    weight_sum,
                );
                Ok(vec![Some(g)])
            })),
        )
    }

    pub fn permute(&mut self, x: NodeId, perm: &[usize]) -> Result<NodeId> {
        let y = shape::permute(self.value(x), perm)?;
        let inv = shape::inverse_perm(perm);
        self.push(
            y,
            vec![x],
            "permute",
            Some(Box::new(move |gy, _| Ok(vec![Some(shape::permute(gy, &inv)?)]))),
        )
    }

    pub fn reshape(&mut self, x: NodeId, new_shape: &[usize]) -> Result<NodeId> {
        let in_shape = self.value(x).shape().to_vec();
        let y = self.value(x).clone().reshaped(new_shape)?;
        self.push(
            y,
            vec![x],
            "reshape",
            Some(Box::new(move |gy, _| {
                Ok(vec![Some(gy.clone().reshaped(&in_shape)?)])
            })),
        )
    }

    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let y = shape::mean_axis(self.value(x), axis)?;
        let in_shape = self.value(x).shape().to_vec();
        self.push(
            y,
            vec![x],
            "mean_axis",
            Some(Box::new(move |gy, _| {
                Ok(vec![Some(shape::mean_axis_backward(gy, &in_shape, axis))])
            })),
        )
    }

    /// Dot product with fixed weights; scalarizes a tensor output so that a
    /// whole-op gradient can be checked against finite differences.
    pub fn weighted_sum(&mut self, x: NodeId, weights: Tensor<T>) -> Result<NodeId> {
        if weights.shape() != self.value(x).shape() {
            return Err(Error::shape(
                "weighted_sum",
                format!(
                    "weights {:?} vs input {:?}",
                    weights.shape(),
                    self.value(x).shape()
                ),
            ));
        }
        let mut acc = T::ZERO;
        for (&a, &b) in self.value(x).data().iter().zip(weights.data()) {
            acc += a * b;
        }
        self.push(
            Tensor::scalar(acc),
            vec![x],
            "weighted_sum",
            Some(Box::new(move |gy, _| {
                let g = gy.data()[0];
                Ok(vec![Some(weights.scale(g))])
            })),
        )
    }

    /// Scale by `factor` but report `claimed` as the derivative. Exists only
    /// so the gradient-check harness can prove it catches wrong backwards.
    #[doc(hidden)]
    pub fn scale_with_wrong_gradient(
        &mut self,
        x: NodeId,
        factor: f64,
        claimed: f64,
    ) -> Result<NodeId> {
        let y = self.value(x).scale(T::from_f64(factor));
        let claimed = T::from_f64(claimed);
        self.push(
            y,
            vec![x],
            "wrong_gradient_fixture",
            Some(Box::new(move |gy, _| Ok(vec![Some(gy.scale(claimed))]))),
        )
    }

    /// Reverse sweep from a scalar root. Consumes the tape's backward
    /// closures; a second call on the same graph is an error.
    pub fn backward(&mut self, root: NodeId) -> Result<Gradients<T>> {
        if self.value(root).len() != 1 {
            return Err(Error::Internal(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.value(root).shape(), T::ONE));

        for i in (0..=root.0).rev() {
            if self.nodes[i].backward.is_none() {
                continue; // leaf: gradient stays for the caller
            }
            let Some(grad_out) = grads[i].take() else {
                continue;
            };
            let backward = self.nodes[i].backward.take().ok_or_else(|| {
                Error::Internal(format!("backward already consumed at node {}", i))
            })?;
            let parents = self.nodes[i].parents.clone();
            let contribs = {
                let parent_vals: Vec<&Tensor<T>> =
                    parents.iter().map(|p| &self.nodes[p.0].value).collect();
                backward(&grad_out, &parent_vals)?
            };
            if contribs.len() != parents.len() {
                return Err(Error::Internal(format!(
                    "op {} returned {} gradients for {} inputs",
                    self.nodes[i].op,
                    contribs.len(),
                    parents.len()
                )));
            }
            for (p, contrib) in parents.iter().zip(contribs) {
                let Some(contrib) = contrib else { continue };
                if contrib.shape() != self.nodes[p.0].value.shape() {
                    return Err(Error::Internal(format!(
                        "op {} produced gradient {:?} for input {:?}",
                        self.nodes[i].op,
                        contrib.shape(),
                        self.nodes[p.0].value.shape()
                    )));
                }
                contrib.ensure_finite(self.nodes[i].op)?;
                match &mut grads[p.0] {
                    Some(g) => g.add_assign(&contrib)?,
                    slot => *slot = Some(contrib),
                }
            }
            // All consumers of this node ran; release its activation.
            if i != root.0 {
                self.nodes[i].value = Tensor::zeros(&[0]);
            }
        }
        Ok(Gradients { grads })
    }
}
