//! Dense row-major f32 tensor.
//!
//! Tensors are immutable after creation; gradients accumulate on the tape,
//! keyed by the tensor's [`NodeId`]. Data is reference-counted so recording
//! an operation for backward never copies activations.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// Handle of a value recorded on a [`Tape`](crate::tape::Tape).
///
/// Carries the owning tape's identity and generation, so using a handle
/// against the wrong tape, or after [`Tape::reset`](crate::tape::Tape::reset),
/// is a detected error rather than silent corruption.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId {
    pub(crate) tape: u32,
    pub(crate) generation: u32,
    pub(crate) index: u32,
}

#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
    node: Option<NodeId>,
    requires_grad: bool,
}

impl Tensor {
    /// Builds a tensor, checking that `shape` accounts for every element.
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CoreError::dim(
                "from_vec",
                alloc::format!("shape {shape:?} implies {expected} elements, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::new(data),
            node: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; len]),
            node: None,
            requires_grad: false,
        }
    }

    pub fn scalar(value: f32) -> Tensor {
        Tensor {
            shape: Vec::new(),
            data: Arc::new(vec![value]),
            node: None,
            requires_grad: false,
        }
    }

    pub(crate) fn with_node(
        shape: Vec<usize>,
        data: Arc<Vec<f32>>,
        node: Option<NodeId>,
        requires_grad: bool,
    ) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data,
            node,
            requires_grad,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Scalars are rank-0 (one element).
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<f32>> {
        Arc::clone(&self.data)
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Value of a one-element tensor.
    pub fn scalar_value(&self) -> Result<f32> {
        if !self.is_scalar() {
            return Err(CoreError::Contract(alloc::format!(
                "expected scalar tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
