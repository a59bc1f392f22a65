//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! A [`Tape`] records one forward pass (one window during training). Node
//! values are kept so that [`Tape::backward`] can replay the record in
//! reverse. Learnable tensors live in a [`ParamSet`] that the tape reads
//! during the forward pass and accumulates gradients into on the way back.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::Tensor2;
use crate::error::{config_err, Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

/// Handle to a tensor in a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A learnable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParamTensor {
    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Ordered, named collection of learnable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    params: Vec<ParamTensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Result<ParamId> {
        let name = name.into();
        let numel: usize = shape.iter().product();
        if numel != value.len() || shape.is_empty() {
            return Err(config_err!("parameter {name}: shape {shape:?} does not hold {} values", value.len()));
        }
        if self.params.iter().any(|p| p.name == name) {
            return Err(config_err!("duplicate parameter name {name}"));
        }
        let grad = vec![0.0; numel];
        self.params.push(ParamTensor { name, shape, value, grad });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.params.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(ParamTensor::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv { input: NodeId, weight: ParamId, bias: ParamId, kernel_size: usize, dilation: usize },
    Relu(NodeId),
    Sigmoid(NodeId),
    Add(NodeId, NodeId),
    MaskMul(NodeId, Vec<f64>),
    /// Scalar function of `input` whose local gradient was fixed at record time.
    Scalar { input: NodeId, local_grad: Tensor2 },
    WeightedSum(Vec<(NodeId, f64)>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor2,
    op: Op,
}

/// Gradients with respect to recorded nodes, produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `node`, if the loss depends on it.
    pub fn wrt(&self, node: NodeId) -> Option<&Tensor2> {
        self.grads.get(node.0).and_then(Option::as_ref)
    }
}

/// Linear record of a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &Tensor2 {
        &self.nodes[node.0].value
    }

    fn push(&mut self, value: Tensor2, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn conv1d_dilated(
        &mut self,
        params: &ParamSet,
        input: NodeId,
        weight: ParamId,
        bias: ParamId,
        kernel_size: usize,
        dilation: usize,
    ) -> Result<NodeId> {
        let (w, b) = (params.get(weight), params.get(bias));
        let x = self.value(input);
        if w.shape.len() != 3 || w.shape[2] != kernel_size {
            return Err(config_err!("parameter {} is not a width-{kernel_size} kernel", w.name));
        }
        let value = kernels::conv1d_dilated(x, &w.value, &b.value, kernel_size, dilation)?;
        Ok(self.push(value, Op::Conv { input, weight, bias, kernel_size, dilation }))
    }

    pub fn pointwise_conv(&mut self, params: &ParamSet, input: NodeId, weight: ParamId, bias: ParamId) -> Result<NodeId> {
        let (w, b) = (params.get(weight), params.get(bias));
        if w.shape.len() != 2 {
            return Err(config_err!("parameter {} is not a pointwise kernel", w.name));
        }
        let value = kernels::pointwise_conv(self.value(input), &w.value, &b.value)?;
        Ok(self.push(value, Op::Conv { input, weight, bias, kernel_size: 1, dilation: 1 }))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let value = kernels::relu(self.value(input));
        self.push(value, Op::Relu(input))
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let value = kernels::sigmoid(self.value(input));
        self.push(value, Op::Sigmoid(input))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = kernels::add(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mask_mul(&mut self, input: NodeId, mask: &[f64]) -> Result<NodeId> {
        let value = kernels::mask_mul(self.value(input), mask)?;
        Ok(self.push(value, Op::MaskMul(input, mask.to_vec())))
    }

    /// Records a scalar `value` computed from `input` by an external function,
    /// together with that function's gradient at the current point.
    pub fn scalar_fn(&mut self, input: NodeId, value: f64, local_grad: Tensor2) -> Result<NodeId> {
        if !local_grad.same_shape(self.value(input)) {
            return Err(config_err!("local gradient shape does not match its input"));
        }
        if !value.is_finite() {
            return Err(Error::Numeric(alloc::format!("scalar node value {value}")));
        }
        Ok(self.push(Tensor2::scalar(value), Op::Scalar { input, local_grad }))
    }

    /// `Σ weight·node` over same-shaped nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let (first, _) = *terms.first().ok_or_else(|| config_err!("empty weighted sum"))?;
        let shape = self.value(first);
        let mut value = Tensor2::zeros(shape.channels(), shape.length());
        for &(node, w) in terms {
            let v = self.value(node);
            if !v.same_shape(&value) {
                return Err(config_err!("weighted sum over tensors of different shapes"));
            }
            for (acc, x) in value.as_mut_slice().iter_mut().zip(v.as_slice()) {
                *acc += w * x;
            }
        }
        let value = value.ensure_finite("weighted_sum")?;
        Ok(self.push(value, Op::WeightedSum(terms.to_vec())))
    }

    /// Back-propagates from the scalar `root` (seeded with 1), accumulating
    /// parameter gradients into `params` and returning node gradients.
    pub fn backward(&self, root: NodeId, params: &mut ParamSet) -> Result<Gradients> {
        let Some(root_node) = self.nodes.get(root.0) else {
            return Err(Error::Usage(alloc::format!(
                "backward from node {} but only {} nodes were recorded",
                root.0,
                self.nodes.len()
            )));
        };
        if root_node.value.channels() != 1 || root_node.value.length() != 1 {
            return Err(Error::Usage("backward requires a scalar root".into()));
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor2::scalar(1.0));

        fn slot<'a>(grads: &'a mut [Option<Tensor2>], node: NodeId, like: &Tensor2) -> &'a mut Tensor2 {
            grads[node.0].get_or_insert_with(|| Tensor2::zeros(like.channels(), like.length()))
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Conv { input, weight, bias, kernel_size, dilation } => {
                    let x = &self.nodes[input.0].value;
                    let gi = slot(&mut grads, *input, x);
                    let (weight, bias) = (*weight, *bias);
                    let mut gw = core::mem::take(&mut params.get_mut(weight).grad);
                    let mut gb = core::mem::take(&mut params.get_mut(bias).grad);
                    let w = &params.get(weight).value;
                    kernels::conv1d_dilated_backward(x, w, *kernel_size, *dilation, &g, Some(gi), &mut gw, &mut gb);
                    params.get_mut(bias).grad = gb;
                    params.get_mut(weight).grad = gw;
                }
                Op::Relu(input) => {
                    let x = &self.nodes[input.0].value;
                    let gi = slot(&mut grads, *input, x);
                    for ((d, &gv), &xv) in gi.as_mut_slice().iter_mut().zip(g.as_slice()).zip(x.as_slice()) {
                        if xv > 0.0 {
                            *d += gv;
                        }
                    }
                }
                Op::Sigmoid(input) => {
                    let y = &node.value;
                    let gi = slot(&mut grads, *input, y);
                    for ((d, &gv), &yv) in gi.as_mut_slice().iter_mut().zip(g.as_slice()).zip(y.as_slice()) {
                        *d += gv * yv * (1.0 - yv);
                    }
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, &g).accumulate(&g);
                    slot(&mut grads, *b, &g).accumulate(&g);
                }
                Op::MaskMul(input, mask) => {
                    let gi = slot(&mut grads, *input, &g);
                    for c in 0..g.channels() {
                        for ((d, &gv), &m) in gi.row_mut(c).iter_mut().zip(g.row(c)).zip(mask) {
                            if m != 0.0 {
                                *d += gv;
                            }
                        }
                    }
                }
                Op::Scalar { input, local_grad } => {
                    let upstream = g.as_slice()[0];
                    let gi = slot(&mut grads, *input, local_grad);
                    for (d, &lg) in gi.as_mut_slice().iter_mut().zip(local_grad.as_slice()) {
                        *d += upstream * lg;
                    }
                }
                Op::WeightedSum(terms) => {
                    for &(n, w) in terms {
                        let gi = slot(&mut grads, n, &g);
                        for (d, &gv) in gi.as_mut_slice().iter_mut().zip(g.as_slice()) {
                            *d += w * gv;
                        }
                    }
                }
            }
            grads[idx] = Some(g);
        }
        if grads.iter().flatten().any(|t| t.as_slice().iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        Ok(Gradients { grads })
    }
}
