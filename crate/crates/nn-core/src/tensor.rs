use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use crate::{Element, NnError, Result};

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Gradient contributions for each parent of an op, in parent order.
/// `None` skips a parent (constant input or gradient not needed).
pub(crate) type BackwardFn<E> = Box<dyn Fn(&[E], &[Tensor<E>]) -> Vec<Option<Vec<E>>>>;

struct Inner<E: Element> {
    id: u64,
    shape: Vec<usize>,
    data: Rc<Vec<E>>,
    requires_grad: bool,
    /// True when this node or any ancestor requires a gradient.
    track: bool,
    grad: RefCell<Option<Vec<E>>>,
    parents: Vec<Tensor<E>>,
    backward: Option<BackwardFn<E>>,
}

/// Dense N-dimensional array participating in an autodiff graph. Cloning is
/// cheap (shared reference); the value itself is immutable.
pub struct Tensor<E: Element> {
    inner: Rc<Inner<E>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<E: Element> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl<E: Element> Tensor<E> {
    fn construct(
        shape: Vec<usize>,
        data: Vec<E>,
        requires_grad: bool,
        parents: Vec<Tensor<E>>,
        backward: Option<BackwardFn<E>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let track = requires_grad || parents.iter().any(|p| p.inner.track);
        // Prune the tape below nodes nothing differentiable depends on.
        let (parents, backward) = if track {
            (parents, backward)
        } else {
            (Vec::new(), None)
        };
        Tensor {
            inner: Rc::new(Inner {
                id: next_id(),
                shape,
                data: Rc::new(data),
                requires_grad,
                track,
                grad: RefCell::new(None),
                parents,
                backward,
            }),
        }
    }

    /// Constant leaf (no gradient).
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<E>) -> Self {
        Self::construct(shape.into(), data, false, Vec::new(), None)
    }

    /// Leaf that accumulates a gradient during backward passes.
    pub fn param(shape: impl Into<Vec<usize>>, data: Vec<E>) -> Self {
        Self::construct(shape.into(), data, true, Vec::new(), None)
    }

    pub fn scalar(v: E) -> Self {
        Self::from_vec(vec![1], vec![v])
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Self::from_vec(shape, vec![E::ZERO; len])
    }

    pub fn full(shape: impl Into<Vec<usize>>, v: E) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Self::from_vec(shape, vec![v; len])
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward: BackwardFn<E>,
    ) -> Self {
        Self::construct(shape, data, false, parents, Some(backward))
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn track(&self) -> bool {
        self.inner.track
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> E {
        assert_eq!(self.len(), 1, "item() requires a single-element tensor");
        self.inner.data[0]
    }

    /// Accumulated gradient, if a backward pass has reached this leaf.
    pub fn grad(&self) -> Option<Vec<E>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Shares the underlying buffer under a new shape of equal length.
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor<E>> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.len() {
            return Err(NnError::Shape {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape,
            });
        }
        let parent = self.clone();
        Ok(Tensor::from_op(
            shape,
            self.data().to_vec(),
            vec![parent],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        ))
    }

    /// Reverse-mode gradient accumulation from a scalar loss. Gradients of
    /// `requires_grad` leaves accumulate across calls (call [`Tensor::zero_grad`]
    /// between steps); a second backward on the same graph doubles them.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(NnError::NonScalarLoss {
                shape: self.shape().to_vec(),
            });
        }

        // Iterative post-order topological sort over the tape.
        let mut order: Vec<Tensor<E>> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<E>, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            for p in &node.inner.parents {
                if p.inner.track && !visited.contains(&p.id()) {
                    stack.push((p.clone(), false));
                }
            }
        }

        let mut grads: HashMap<u64, Vec<E>> = HashMap::new();
        grads.insert(self.id(), vec![E::ONE]);

        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.id()) else {
                continue;
            };
            if node.inner.requires_grad {
                let mut slot = node.inner.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => accumulate(acc, &g),
                    None => *slot = Some(g.clone()),
                }
            }
            if let Some(backward) = &node.inner.backward {
                let parent_grads = backward(&g, &node.inner.parents);
                debug_assert_eq!(parent_grads.len(), node.inner.parents.len());
                for (parent, pg) in node.inner.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !parent.inner.track {
                        continue;
                    }
                    debug_assert_eq!(pg.len(), parent.len());
                    grads
                        .entry(parent.id())
                        .and_modify(|acc| accumulate(acc, &pg))
                        .or_insert(pg);
                }
            }
        }
        Ok(())
    }
}

fn accumulate<E: Element>(dst: &mut [E], src: &[E]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}
