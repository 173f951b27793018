use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ops::{op_backward, op_forward, Conv2dAttrs, Op, PoolAttrs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node {
    op: Option<Op>,
    inputs: Vec<NodeId>,
    value: Tensor,
    requires_grad: bool,
}

/// Define-by-run computation record. Nodes are appended in evaluation order,
/// so the node list is always a valid topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { op: None, inputs: Vec::new(), value, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn apply(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor> = inputs.iter().map(|id| &self.nodes[id.0].value).collect();
        let value = op_forward(&op, &values)?;
        if !value.all_finite() {
            return Err(Error::NonFinite(format!("output of {}", op.name())));
        }
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        self.nodes.push(Node { op: Some(op), inputs: inputs.to_vec(), value, requires_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        backward(self, loss)
    }

    pub fn conv2d(&mut self, x: NodeId, k: NodeId, b: NodeId, attrs: Conv2dAttrs) -> Result<NodeId> {
        self.apply(Op::Conv2d(attrs), &[x, k, b])
    }

    pub fn max_pool2d(&mut self, x: NodeId, attrs: PoolAttrs) -> Result<NodeId> {
        self.apply(Op::MaxPool2d(attrs), &[x])
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Linear, &[x, w, b])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Relu, &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sigmoid, &[x])
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Softmax, &[x])
    }

    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::LogSoftmax, &[x])
    }

    pub fn upsample(&mut self, x: NodeId, factor: usize) -> Result<NodeId> {
        self.apply(Op::UpsampleBilinear { factor }, &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Div, &[a, b])
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Min, &[a, b])
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Log, &[x])
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Square, &[x])
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Op::AddScalar(c), &[x])
    }

    pub fn mul_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Op::MulScalar(c), &[x])
    }

    pub fn wrap(&mut self, x: NodeId, period: f64) -> Result<NodeId> {
        self.apply(Op::Wrap { period }, &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum, &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Mean, &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.apply(Op::Reshape(shape.to_vec()), &[x])
    }

    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> Result<NodeId> {
        self.apply(Op::Concat { axis }, xs)
    }
}

/// Gradients of a scalar loss with respect to every node that requires them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of `id`, or zeros of its shape when the loss does not depend on it.
    pub fn get_or_zeros(&self, graph: &Graph, id: NodeId) -> Tensor {
        self.get(id).cloned().unwrap_or_else(|| Tensor::zeros(graph.value(id).shape()))
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

pub fn backward(graph: &Graph, loss: NodeId) -> Result<Gradients> {
    let root = &graph.nodes[loss.0];
    if root.value.numel() != 1 {
        return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
    }
    let mut grads: Vec<Option<Tensor>> = vec![None; graph.nodes.len()];
    grads[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));
    for idx in (0..=loss.0).rev() {
        let node = &graph.nodes[idx];
        let Some(op) = &node.op else { continue };
        if !node.requires_grad {
            continue;
        }
        let Some(grad_out) = grads[idx].as_ref() else { continue };
        let inputs: Vec<&Tensor> = node.inputs.iter().map(|i| &graph.nodes[i.0].value).collect();
        let needs: Vec<bool> = node.inputs.iter().map(|i| graph.nodes[i.0].requires_grad).collect();
        let input_grads = op_backward(op, &inputs, &node.value, grad_out, &needs);
        for ((input, g), need) in node.inputs.iter().zip(input_grads).zip(needs) {
            let (true, Some(g)) = (need, g) else { continue };
            match &mut grads[input.0] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
    }
    for (node, g) in graph.nodes.iter().zip(grads.iter_mut()) {
        if !node.requires_grad {
            *g = None;
        }
    }
    Ok(Gradients { grads })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_square() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.square(x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn fan_out_accumulates() {
        // y = x * x + x  => dy/dx = 2x + 1
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let sq = g.mul(x, x).unwrap();
        let y = g.add(sq, x).unwrap();
        assert_eq!(g.backward(y).unwrap().get(x).unwrap().item(), 5.0);
    }

    #[test]
    fn rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[3]));
        let y = g.relu(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let c = g.constant(Tensor::scalar(5.0));
        let y = g.mul(x, c).unwrap();
        let grads = g.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().item(), 5.0);
    }

    #[test]
    fn log_of_zero_is_rejected() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(0.0));
        assert!(matches!(g.log(x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_softmax_minus_onehot() {
        let logits = [0.3, -1.2, 2.0, 0.5];
        let target = 2;
        let mut g = Graph::new();
        let x = g.param(Tensor::new(vec![1, 4], logits.to_vec()).unwrap());
        let ls = g.log_softmax(x).unwrap();
        let mut onehot = vec![0.0; 4];
        onehot[target] = -1.0;
        let oh = g.constant(Tensor::new(vec![1, 4], onehot).unwrap());
        let picked = g.mul(ls, oh).unwrap();
        let loss = g.sum(picked).unwrap();
        let grad = g.backward(loss).unwrap().get(x).unwrap().clone();

        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
        for (i, &l) in logits.iter().enumerate() {
            let p = (l - max).exp() / z;
            let expect = p - if i == target { 1.0 } else { 0.0 };
            assert!((grad.data()[i] - expect).abs() < 1e-14);
        }
    }
}
