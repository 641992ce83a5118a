use std::cell::RefCell;
use std::rc::Rc;

use crate::tensor::Tensor;

/// Backward rule: receives the gradient of the node's output and a flag per
/// parent saying whether that parent needs a gradient. Returns one entry per
/// parent, in order.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

struct Node {
    value: Rc<Tensor>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

/// Recording of a computation for reverse-mode differentiation.
///
/// A tape is single-threaded and cheap to create; build one per sample and
/// drop it after calling [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_node(Rc::new(value), true, Vec::new(), None)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(Rc::new(value), false, Vec::new(), None)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_node(
        &self,
        value: Rc<Tensor>,
        requires_grad: bool,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
    ) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            requires_grad,
            parents,
            backward,
        });
        Var { tape: self, id }
    }

    /// Records an op output. The backward rule is only built (and whatever it
    /// captures only kept alive) when some parent requires a gradient.
    pub(crate) fn push_op<'t, F>(&'t self, value: Tensor, parents: &[Var<'t>], make_backward: F) -> Var<'t>
    where
        F: FnOnce() -> BackwardFn,
    {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| {
                debug_assert!(std::ptr::eq(p.tape, self), "vars from different tapes");
                nodes[p.id].requires_grad
            })
        };
        let backward = requires_grad.then(make_backward);
        self.push_node(
            Rc::new(value),
            requires_grad,
            parents.iter().map(|p| p.id).collect(),
            backward,
        )
    }

    /// Reverse sweep from a single-element output.
    pub fn backward(&self, output: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        let out = &nodes[output.id];
        assert_eq!(out.value.len(), 1, "backward() needs a scalar output");
        if out.requires_grad {
            grads[output.id] = Some(Tensor::new(out.value.shape(), vec![1.0]));
        }
        for id in (0..=output.id).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if let Some(backward) = &node.backward {
                let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
                let parent_grads = backward(&grad, &needs);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for ((&pid, pg), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                    let (Some(pg), true) = (pg, need) else {
                        continue;
                    };
                    match &mut grads[pid] {
                        Some(acc) => acc.add_assign(&pg),
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
            // Leaves keep their gradient; interior nodes are released.
            if node.parents.is_empty() {
                grads[id] = Some(grad);
            }
        }
        Gradients { grads }
    }
}

/// Gradients of a scalar with respect to every leaf that took part in it.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf, or `None` if it did not influence the output or is
    /// a constant.
    pub fn wrt(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Same value, recorded as a constant: no gradient flows back through it.
    pub fn detach(self) -> Var<'t> {
        let value = self.value();
        self.tape.push_node(value, false, Vec::new(), None)
    }

    /// Scalar value of a single-element var.
    pub fn item(&self) -> f64 {
        self.value().item()
    }
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({:?})", self.id, self.value())
    }
}
