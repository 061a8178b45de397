//! Dense row-major tensors with a tape-free reverse-mode autodiff.
//!
//! Every tensor produced by a differentiable op keeps a reference to its
//! parents and a backward closure. Node ids grow monotonically, so sorting
//! reachable nodes by descending id is a valid reverse topological order;
//! it also fixes the gradient accumulation order.

mod ops;
mod store;

pub use ops::{gemm, gemm_acc};
pub(crate) use ops::{sigmoid, softplus};
pub use store::ParamStore;

use std::cell::{Cell, Ref, RefCell};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Gradient of an op with respect to each of its parents, `None` where the
/// parent does not need one.
pub type ParentGrads = Vec<Option<Vec<f64>>>;

type BackwardFn = Box<dyn Fn(&[f64]) -> ParentGrads>;

struct GradFn {
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Node {
    id: usize,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    grad_fn: Option<GradFn>,
}

#[derive(Clone)]
pub struct Tensor(Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish_non_exhaustive()
    }
}

/// Runs `f` with graph recording disabled. Ops still compute values but
/// results never require gradients.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

fn next_id() -> usize {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape(format!(
                "dimensions must be positive, got {shape:?}"
            )));
        }
        if numel(shape) != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} holds {} values, got {}",
                numel(shape),
                data.len()
            )));
        }
        Ok(Self::leaf(shape.to_vec(), data, false))
    }

    /// A trainable leaf.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        Ok(Self::leaf(t.0.shape.clone(), t.0.data.clone(), true))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::leaf(shape.to_vec(), vec![0.0; numel(shape)], false)
    }

    pub fn scalar(value: f64) -> Self {
        Self::leaf(vec![1], vec![value], false)
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self::leaf(vec![data.len()], data, false)
    }

    fn leaf(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Self {
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            grad_fn: None,
        }))
    }

    /// Builds the result of a differentiable op. The backward closure
    /// receives the upstream gradient and returns one entry per parent.
    /// When no parent requires a gradient (or recording is off) the
    /// closure is dropped and the result is a constant.
    pub fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: impl Fn(&[f64]) -> ParentGrads + 'static,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        let track = grad_enabled() && parents.iter().any(Tensor::requires_grad);
        let grad_fn = track.then(|| GradFn {
            parents,
            backward: Box::new(backward),
        });
        Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data,
            requires_grad: track,
            grad: RefCell::new(None),
            grad_fn,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn len(&self) -> usize {
        self.0.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn item(&self) -> f64 {
        self.0.data[0]
    }

    pub fn grad(&self) -> Option<Ref<'_, Vec<f64>>> {
        let g = self.0.grad.borrow();
        if g.is_some() {
            Some(Ref::map(g, |g| g.as_ref().unwrap()))
        } else {
            None
        }
    }

    pub fn grad_vec(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Detached copy with the same values, as a constant.
    pub fn detach(&self) -> Tensor {
        Self::leaf(self.0.shape.clone(), self.0.data.clone(), false)
    }

    /// Same values as a fresh trainable leaf.
    pub fn to_param(&self) -> Tensor {
        Self::leaf(self.0.shape.clone(), self.0.data.clone(), true)
    }

    /// Replaces the values of a leaf by building a new leaf with the same
    /// flags. Used by optimizers.
    pub fn with_data(&self, data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), self.len());
        Self::leaf(self.0.shape.clone(), data, self.0.requires_grad)
    }

    fn accumulate(&self, g: &[f64]) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Backpropagates from a scalar, accumulating into every reachable
    /// leaf that requires a gradient.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::Contract(
                "loss does not depend on any tensor requiring a gradient".into(),
            ));
        }

        let mut nodes: Vec<Tensor> = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            if let Some(gf) = &t.0.grad_fn {
                for p in &gf.parents {
                    if p.requires_grad() && !seen.contains(&p.id()) {
                        stack.push(p.clone());
                    }
                }
            }
            nodes.push(t);
        }
        nodes.sort_by(|a, b| b.id().cmp(&a.id()));

        let mut pending: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        pending.insert(self.id(), vec![1.0]);
        for node in &nodes {
            let Some(g) = pending.remove(&node.id()) else {
                continue;
            };
            match &node.0.grad_fn {
                None => node.accumulate(&g),
                Some(gf) => {
                    let grads = (gf.backward)(&g);
                    debug_assert_eq!(grads.len(), gf.parents.len());
                    for (p, pg) in gf.parents.iter().zip(grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.len());
                        match pending.get_mut(&p.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(&[0], vec![]).is_err());
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let x = Tensor::param(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        x.sum().backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_square_sum() {
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        x.mul(&x).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let loss = x.mul(&x).unwrap().sum();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![4.0, 8.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(x.backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn no_grad_disables_recording() {
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = no_grad(|| x.mul(&x).unwrap());
        assert!(!y.requires_grad());
        assert!(grad_enabled());
    }

    #[test]
    fn shared_subexpression_gets_both_contributions() {
        // loss = sum(y * y) with y = 3x, dloss/dx = 18x
        let x = Tensor::param(&[2], vec![1.0, -1.0]).unwrap();
        let y = x.scale(3.0);
        y.mul(&y).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![18.0, -18.0]);
    }
}
