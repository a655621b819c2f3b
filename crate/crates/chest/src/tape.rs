//! Reverse-mode automatic differentiation on a scalar tape.
//!
//! Every arithmetic operation on a [`Var`] appends one node to the owning
//! [`Tape`], storing its parent indices and the local derivatives computed at
//! forward time. A backward sweep then walks the tape once in reverse,
//! accumulating adjoints, so the gradient of a scalar output with respect to
//! every recorded variable costs one pass over the tape regardless of how
//! many inputs there are.
//!
//! The sweep is strictly sequential over a `Vec`, so gradients are
//! bitwise-deterministic for identical inputs within a build.

use std::cell::RefCell;

use crate::scalar::Real;

#[derive(Clone, Copy)]
struct Node {
    parents: [usize; 2],
    weights: [f64; 2],
}

/// Growable record of one differentiable computation.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(nodes)),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Forget all recorded nodes but keep the allocation. Any [`Var`] created
    /// before the reset must no longer be used; reuse is confined to
    /// crate-internal loops that re-lift their leaves each iteration.
    pub(crate) fn reset(&self) {
        self.nodes.borrow_mut().clear();
    }

    /// Record an input variable.
    pub fn leaf(&self, value: f64) -> Var<'_> {
        let index = self.push_leaf();
        Var {
            tape: self,
            index,
            value,
        }
    }

    fn push_leaf(&self) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(Node {
            parents: [index, index],
            weights: [0.0, 0.0],
        });
        index
    }

    fn push_unary(&self, parent: usize, weight: f64) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(Node {
            parents: [parent, parent],
            weights: [weight, 0.0],
        });
        index
    }

    fn push_binary(&self, parents: [usize; 2], weights: [f64; 2]) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(Node { parents, weights });
        index
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Variable recorded on a [`Tape`]. Copyable; carries its forward value.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl<'t> Var<'t> {
    fn unary(self, value: f64, weight: f64) -> Var<'t> {
        Var {
            tape: self.tape,
            index: self.tape.push_unary(self.index, weight),
            value,
        }
    }

    fn binary(self, rhs: Var<'t>, value: f64, weights: [f64; 2]) -> Var<'t> {
        debug_assert!(
            std::ptr::eq(self.tape, rhs.tape),
            "variables from different tapes"
        );
        Var {
            tape: self.tape,
            index: self.tape.push_binary([self.index, rhs.index], weights),
            value,
        }
    }

    /// Adjoints of every tape node with respect to `self`.
    pub fn backward(self) -> Grads {
        let nodes = self.tape.nodes.borrow();
        let mut adjoints = vec![0.0; self.index + 1];
        adjoints[self.index] = 1.0;
        for i in (0..=self.index).rev() {
            let a = adjoints[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            adjoints[node.parents[0]] += a * node.weights[0];
            adjoints[node.parents[1]] += a * node.weights[1];
        }
        Grads { adjoints }
    }
}

/// Result of a backward sweep.
pub struct Grads {
    adjoints: Vec<f64>,
}

impl Grads {
    /// Gradient with respect to `var`; zero for nodes the output never used.
    pub fn get(&self, var: Var<'_>) -> f64 {
        self.adjoints.get(var.index).copied().unwrap_or(0.0)
    }

    /// Gradients for a slice of variables, in order.
    pub fn get_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|&v| self.get(v)).collect()
    }
}

impl std::ops::Add for Var<'_> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.value + rhs.value, [1.0, 1.0])
    }
}

impl std::ops::Sub for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.value - rhs.value, [1.0, -1.0])
    }
}

impl std::ops::Mul for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.value * rhs.value, [rhs.value, self.value])
    }
}

impl std::ops::Div for Var<'_> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.value;
        self.binary(rhs, self.value * inv, [inv, -self.value * inv * inv])
    }
}

impl std::ops::Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl std::ops::Add<f64> for Var<'_> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.value + rhs, 1.0)
    }
}

impl std::ops::Sub<f64> for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.value - rhs, 1.0)
    }
}

impl std::ops::Mul<f64> for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.value * rhs, rhs)
    }
}

impl std::ops::Div<f64> for Var<'_> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self.unary(self.value / rhs, 1.0 / rhs)
    }
}

impl Real for Var<'_> {
    fn value(self) -> f64 {
        self.value
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(self.value.ln(), 1.0 / self.value)
    }

    fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        self.unary(r, 0.5 / r)
    }

    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }

    fn atanh(self) -> Self {
        self.unary(self.value.atanh(), 1.0 / (1.0 - self.value * self.value))
    }

    fn rsub(self, lhs: f64) -> Self {
        self.unary(lhs - self.value, -1.0)
    }

    fn rdiv(self, lhs: f64) -> Self {
        let v = lhs / self.value;
        self.unary(v, -v / self.value)
    }

    fn relu(self) -> Self {
        if self.value > 0.0 {
            self.unary(self.value, 1.0)
        } else {
            self.unary(0.0, 0.0)
        }
    }
}
