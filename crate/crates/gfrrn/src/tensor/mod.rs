//! Minimal reverse-mode autodiff over `ndarray` double-precision arrays.
//!
//! Every forward op builds a node holding its value, its parents, and a
//! closure that maps the incoming gradient to per-parent gradients. Graphs
//! are rebuilt on every forward pass; parameters are long-lived leaf nodes
//! whose gradients accumulate across `backward` calls until cleared.

mod conv;
mod fftops;
mod ops;
mod resize;

pub use fftops::{fft2d, gaussian_freq_mask, ifft2d};

use ndarray::{ArrayD, IxDyn};
use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

type BackwardFn = Box<dyn Fn(&ArrayD<f64>) -> Vec<Option<ArrayD<f64>>>>;

pub(crate) struct Inner {
    id: u64,
    value: RefCell<ArrayD<f64>>,
    grad: RefCell<Option<ArrayD<f64>>>,
    requires_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// A node in the autodiff graph. Cheap to clone (shared reference).
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.shape())
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl Tensor {
    fn new(
        value: ArrayD<f64>,
        requires_grad: bool,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                value: RefCell::new(value),
                grad: RefCell::new(None),
                requires_grad,
                parents,
                backward,
            }),
        }
    }

    /// Trainable leaf (a parameter).
    pub fn leaf(value: ArrayD<f64>) -> Tensor {
        Tensor::new(value, true, Vec::new(), None)
    }

    /// Non-differentiable input or buffer.
    pub fn constant(value: ArrayD<f64>) -> Tensor {
        Tensor::new(value, false, Vec::new(), None)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::constant(ArrayD::zeros(IxDyn(shape)))
    }

    /// Internal: result of an op. Drops the graph edge when no parent
    /// needs gradients so inference does not retain intermediates.
    pub(crate) fn from_op(value: ArrayD<f64>, parents: Vec<Tensor>, backward: BackwardFn) -> Tensor {
        let requires = parents.iter().any(|p| p.inner.requires_grad);
        if requires {
            Tensor::new(value, true, parents, Some(backward))
        } else {
            Tensor::new(value, false, Vec::new(), None)
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn value(&self) -> Ref<'_, ArrayD<f64>> {
        self.inner.value.borrow()
    }

    pub fn to_array(&self) -> ArrayD<f64> {
        self.inner.value.borrow().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.value.borrow().shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.inner.value.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scalar extraction; panics unless the tensor holds exactly one value.
    pub fn item(&self) -> f64 {
        let v = self.inner.value.borrow();
        assert_eq!(v.len(), 1, "item() on tensor with {} elements", v.len());
        *v.iter().next().unwrap()
    }

    /// Overwrite a leaf's value in place (optimizer updates, checkpoint load).
    pub fn set_value(&self, value: ArrayD<f64>) {
        assert_eq!(
            self.inner.value.borrow().shape(),
            value.shape(),
            "set_value shape mismatch"
        );
        *self.inner.value.borrow_mut() = value;
    }

    /// Perturb a single element in place (finite-difference probes).
    pub fn nudge(&self, flat_index: usize, delta: f64) {
        let mut v = self.inner.value.borrow_mut();
        let slice = v.as_slice_mut().expect("non-contiguous leaf");
        slice[flat_index] += delta;
    }

    pub fn grad(&self) -> Option<ArrayD<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    fn accumulate_grad(&self, g: ArrayD<f64>) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(existing) => *existing += &g,
            None => *slot = Some(g),
        }
    }

    /// Reverse pass from this node, seeding with ones. Gradients land on
    /// every reachable node that requires them; intermediates are cleared
    /// as soon as they have been propagated.
    pub fn backward(&self) {
        let seed = ArrayD::ones(self.inner.value.borrow().raw_dim());
        self.accumulate_grad(seed);

        // Node ids increase monotonically with creation order, so a
        // descending sort of the reachable set is a reverse topological order.
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack = vec![self.clone()];
        let mut nodes: Vec<Tensor> = Vec::new();
        while let Some(n) = stack.pop() {
            if visited.insert(n.inner.id) {
                for p in &n.inner.parents {
                    if p.inner.requires_grad {
                        stack.push(p.clone());
                    }
                }
                nodes.push(n);
            }
        }
        nodes.sort_by(|a, b| b.inner.id.cmp(&a.inner.id));

        for n in &nodes {
            let Some(bw) = n.inner.backward.as_ref() else {
                continue;
            };
            let g = {
                let slot = n.inner.grad.borrow();
                match slot.as_ref() {
                    Some(g) => g.clone(),
                    None => continue,
                }
            };
            let parent_grads = bw(&g);
            debug_assert_eq!(parent_grads.len(), n.inner.parents.len());
            for (p, pg) in n.inner.parents.iter().zip(parent_grads) {
                if !p.inner.requires_grad {
                    continue;
                }
                if let Some(pg) = pg {
                    debug_assert_eq!(pg.shape(), p.inner.value.borrow().shape());
                    p.accumulate_grad(pg);
                }
            }
            // Non-leaf grads are consumed; free them eagerly.
            *n.inner.grad.borrow_mut() = None;
        }
    }
}

/// Numpy-style broadcast result shape; panics on incompatibility.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0usize; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        out[i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            panic!("cannot broadcast {:?} with {:?}", a, b)
        };
    }
    out
}

/// Sum a broadcast gradient back down to `target` shape.
pub(crate) fn reduce_to_shape(grad: &ArrayD<f64>, target: &[usize]) -> ArrayD<f64> {
    let mut g = grad.clone();
    while g.ndim() > target.len() {
        g = g.sum_axis(ndarray::Axis(0));
    }
    for (ax, (&gd, &td)) in g.shape().to_vec().iter().zip(target).enumerate() {
        if gd != td {
            debug_assert_eq!(td, 1);
            let summed = g.sum_axis(ndarray::Axis(ax)).insert_axis(ndarray::Axis(ax));
            g = summed;
        }
    }
    g
}
