//! Reverse-mode tape: records one backward closure per produced tensor and
//! replays them in reverse topological order.

use std::cell::RefCell;
use std::rc::Rc;

use thiserror::Error;

use super::tensor::{NodeRef, Real, Tensor, TensorData};

#[derive(Debug, Error)]
pub enum NumError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid argument: {msg}")]
    InvalidArg { op: &'static str, msg: String },
    #[error("{op}: id {id} out of range for table of {size} rows")]
    IdOutOfRange {
        op: &'static str,
        id: usize,
        size: usize,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("loss tensor is not attached to this tape")]
    DetachedLoss,
    #[error("tape already consumed by backward; rebuild the forward pass first")]
    TapeConsumed,
    #[error("{op}: inputs belong to different tapes")]
    TapeMismatch { op: &'static str },
}

/// Gradient buffer indexed by node id. Entries are allocated lazily.
pub(crate) struct GradBuf {
    slots: Vec<Option<Vec<Real>>>,
}

impl GradBuf {
    fn new(n: usize) -> Self {
        GradBuf {
            slots: (0..n).map(|_| None).collect(),
        }
    }

    /// Accumulate `contrib` into the gradient slot for node `id`.
    pub(crate) fn add(&mut self, id: usize, len: usize, contrib: impl Fn(usize) -> Real) {
        let slot = self.slots[id].get_or_insert_with(|| vec![0.0; len]);
        debug_assert_eq!(slot.len(), len);
        for (i, g) in slot.iter_mut().enumerate() {
            *g += contrib(i);
        }
    }
}

type BackwardFn = Box<dyn FnOnce(&[Real], &mut GradBuf)>;

pub(crate) struct TapeInner {
    nodes: Vec<Option<BackwardFn>>,
    grads: Option<GradBuf>,
    consumed: bool,
}

/// Owns the op record for one forward pass. Single-threaded by construction;
/// independent tapes may run on different threads.
pub struct Tape {
    pub(crate) inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                grads: None,
                consumed: false,
            })),
        }
    }

    /// Register a gradient-tracked leaf holding a copy of `t`'s data.
    pub fn var(&self, t: &Tensor) -> Tensor {
        self.var_from(t.shape(), t.values().to_vec())
    }

    pub fn var_from(&self, shape: &[usize], values: Vec<Real>) -> Tensor {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        // Leaves have no backward work; their slot just collects gradients.
        inner.nodes.push(Some(Box::new(|_, _| {})));
        drop(inner);
        Tensor {
            data: Rc::new(TensorData::new(shape.to_vec(), values)),
            node: Some(NodeRef {
                tape: Rc::clone(&self.inner),
                id,
            }),
        }
    }

    /// Run reverse-mode accumulation from a scalar loss. Consumes the tape:
    /// a second call without rebuilding the forward pass is an error.
    pub fn backward(&self, loss: &Tensor) -> Result<(), NumError> {
        if loss.len() != 1 {
            return Err(NumError::NonScalarLoss {
                shape: loss.shape().to_vec(),
            });
        }
        let node = loss.node.as_ref().ok_or(NumError::DetachedLoss)?;
        if !Rc::ptr_eq(&node.tape, &self.inner) {
            return Err(NumError::DetachedLoss);
        }
        let loss_id = node.id;

        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(NumError::TapeConsumed);
        }
        inner.consumed = true;
        let mut nodes = std::mem::take(&mut inner.nodes);
        let n = nodes.len();
        drop(inner);

        let mut grads = GradBuf::new(n);
        grads.slots[loss_id] = Some(vec![1.0]);
        for id in (0..=loss_id).rev() {
            let Some(step) = nodes[id].take() else { continue };
            // Parents always precede their outputs, so taking the slot out
            // while the step writes earlier slots is safe.
            let Some(g) = grads.slots[id].take() else { continue };
            step(&g, &mut grads);
            grads.slots[id] = Some(g);
        }

        self.inner.borrow_mut().grads = Some(grads);
        Ok(())
    }

    /// Gradient of the loss w.r.t. `t`, available after `backward`.
    /// Returns `None` if `t` is untracked or received no gradient.
    pub fn grad(&self, t: &Tensor) -> Option<Tensor> {
        let node = t.node.as_ref()?;
        if !Rc::ptr_eq(&node.tape, &self.inner) {
            return None;
        }
        let inner = self.inner.borrow();
        let buf = inner.grads.as_ref()?;
        let g = buf.slots.get(node.id)?.as_ref()?;
        Some(Tensor::from_vec(t.shape(), g.clone()))
    }
}

/// Push an op's backward rule, returning the new node id.
/// Must only be called when at least one input is tracked.
pub(crate) fn push_node(
    tape: &Rc<RefCell<TapeInner>>,
    backward: BackwardFn,
) -> Result<usize, NumError> {
    let mut inner = tape.borrow_mut();
    if inner.consumed {
        return Err(NumError::TapeConsumed);
    }
    let id = inner.nodes.len();
    inner.nodes.push(Some(backward));
    Ok(id)
}

/// Resolve the common tape of an op's inputs, erroring on a mix of tapes.
pub(crate) fn common_tape(
    op: &'static str,
    inputs: &[&Tensor],
) -> Result<Option<Rc<RefCell<TapeInner>>>, NumError> {
    let mut tape: Option<Rc<RefCell<TapeInner>>> = None;
    for t in inputs {
        if let Some(node) = &t.node {
            match &tape {
                None => tape = Some(Rc::clone(&node.tape)),
                Some(existing) => {
                    if !Rc::ptr_eq(existing, &node.tape) {
                        return Err(NumError::TapeMismatch { op });
                    }
                }
            }
        }
    }
    Ok(tape)
}

pub(crate) fn attach(tensor: &mut Tensor, tape: Rc<RefCell<TapeInner>>, id: usize) {
    tensor.node = Some(NodeRef { tape, id });
}

pub(crate) fn node_id(t: &Tensor) -> Option<usize> {
    t.node.as_ref().map(|n| n.id)
}
