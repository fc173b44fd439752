//! Dense row-major tensor storage and the tape handle it may be attached to.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::tape::TapeInner;

/// Scalar type used throughout the numeric core.
///
/// Everything runs in 64-bit so finite-difference gradient checks are
/// meaningful; on-disk formats narrow to 32-bit floats.
pub type Real = f64;

/// Immutable shape + values storage, shared between tensors via `Rc`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub values: Vec<Real>,
}

impl TensorData {
    pub fn new(shape: Vec<usize>, values: Vec<Real>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        TensorData { shape, values }
    }
}

/// Reference from a tensor back to the tape node that produced it.
#[derive(Clone)]
pub(crate) struct NodeRef {
    pub tape: Rc<RefCell<TapeInner>>,
    pub id: usize,
}

/// A dense tensor, optionally attached to an autodiff tape.
///
/// Tensors are immutable once built. Cloning is cheap (shared storage).
/// Operations on tensors whose inputs carry a tape reference record their
/// backward rule on that tape; operations on detached tensors are plain
/// eager math.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) data: Rc<TensorData>,
    pub(crate) node: Option<NodeRef>,
}

impl Tensor {
    /// Detached constant tensor (no gradient tracking).
    pub fn from_vec(shape: &[usize], values: Vec<Real>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "tensor shape {:?} does not match {} values",
            shape,
            values.len()
        );
        Tensor {
            data: Rc::new(TensorData::new(shape.to_vec(), values)),
            node: None,
        }
    }

    pub fn scalar(v: Real) -> Tensor {
        Tensor::from_vec(&[1], vec![v])
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_vec(shape, vec![0.0; shape.iter().product()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.data.shape
    }

    pub fn values(&self) -> &[Real] {
        &self.data.values
    }

    pub fn len(&self) -> usize {
        self.data.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.values.is_empty()
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> Real {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape());
        self.data.values[0]
    }

    /// Whether this tensor participates in gradient tracking.
    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    pub(crate) fn rows(&self) -> usize {
        match self.data.shape.len() {
            1 => 1,
            2 => self.data.shape[0],
            n => panic!("rank-{n} tensor where rank 1 or 2 expected"),
        }
    }

    pub(crate) fn cols(&self) -> usize {
        match self.data.shape.len() {
            1 => self.data.shape[0],
            2 => self.data.shape[1],
            n => panic!("rank-{n} tensor where rank 1 or 2 expected"),
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.data.shape)
            .field("tracked", &self.node.is_some())
            .finish()
    }
}
