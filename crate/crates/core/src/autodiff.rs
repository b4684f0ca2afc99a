//! Reverse-mode automatic differentiation over scalar computation graphs.
//!
//! Every arithmetic operation on a [`Var`] appends a node to its [`Tape`] and
//! computes the value eagerly. [`Tape::gradient`] runs a plain reverse sweep
//! producing `f64` adjoints; [`Tape::gradient_graph`] runs the same sweep but
//! records every adjoint update on the tape, so the returned adjoints are
//! themselves `Var`s and can be differentiated again. Nesting the second form
//! gives derivative towers of any order.
//!
//! Node indices are assigned in creation order, which is a topological order
//! of the graph, so a sweep is a single pass over indices `root..=0`.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::real::{powi_f64, Real};

/// Operation tag of a graph node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Tanh,
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Powi(i32),
    /// Subgradient at 0 is 0.
    Abs,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Leaf => f.write_str("leaf"),
            Op::Const => f.write_str("const"),
            Op::Add => f.write_str("add"),
            Op::Sub => f.write_str("sub"),
            Op::Mul => f.write_str("mul"),
            Op::Div => f.write_str("div"),
            Op::Neg => f.write_str("neg"),
            Op::Tanh => f.write_str("tanh"),
            Op::Exp => f.write_str("exp"),
            Op::Ln => f.write_str("ln"),
            Op::Sin => f.write_str("sin"),
            Op::Cos => f.write_str("cos"),
            Op::Sqrt => f.write_str("sqrt"),
            Op::Powi(n) => write!(f, "powi({n})"),
            Op::Abs => f.write_str("abs"),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AutodiffError {
    #[error("non-finite value {value} produced by `{op}` at node {index}")]
    NonFinite { op: Op, index: usize, value: f64 },
    #[error("node {index} is not a leaf")]
    NotALeaf { index: usize },
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: Op,
    lhs: u32,
    rhs: u32,
    value: f64,
}

/// Append-only record of a scalar computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("index", &self.index)
            .field("value", &self.value())
            .finish()
    }
}

/// Adjoints of the requested leaves, in request order.
#[derive(Clone, Debug)]
pub struct GradientMap<T> {
    leaves: Vec<u32>,
    adjoints: Vec<T>,
}

impl<T: Copy> GradientMap<T> {
    /// Adjoint of `leaf`, if it was part of the request.
    pub fn get(&self, leaf: &Var<'_>) -> Option<T> {
        self.leaves
            .iter()
            .position(|&i| i == leaf.index)
            .map(|k| self.adjoints[k])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.adjoints
    }

    pub fn into_vec(self) -> Vec<T> {
        self.adjoints
    }

    pub fn len(&self) -> usize {
        self.adjoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjoints.is_empty()
    }
}

impl<T> core::ops::Index<usize> for GradientMap<T> {
    type Output = T;
    fn index(&self, k: usize) -> &T {
        &self.adjoints[k]
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(nodes)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Drops every node. Requires exclusive access, so no `Var` can outlive it.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    pub fn leaf(&self, value: f64) -> Var<'_> {
        self.push(Op::Leaf, 0, 0, value)
    }

    pub fn leaves(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push(Op::Const, 0, 0, value)
    }

    fn push(&self, op: Op, lhs: u32, rhs: u32, value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = u32::try_from(nodes.len()).expect("tape exceeds u32 node indices");
        nodes.push(Node {
            op,
            lhs,
            rhs,
            value,
        });
        Var { tape: self, index }
    }

    fn node(&self, index: u32) -> Node {
        self.nodes.borrow()[index as usize]
    }

    fn var(&self, index: u32) -> Var<'_> {
        Var { tape: self, index }
    }

    /// Reassigns a leaf; call [`Tape::evaluate`] to propagate.
    pub fn set_value(&self, leaf: Var<'_>, value: f64) -> Result<(), AutodiffError> {
        let mut nodes = self.nodes.borrow_mut();
        let node = &mut nodes[leaf.index as usize];
        if node.op != Op::Leaf {
            return Err(AutodiffError::NotALeaf {
                index: leaf.index as usize,
            });
        }
        node.value = value;
        Ok(())
    }

    /// Recomputes every node up to `root` from the current leaf values.
    ///
    /// Fails on the first non-finite intermediate, naming its operation.
    pub fn evaluate(&self, root: Var<'_>) -> Result<f64, AutodiffError> {
        let mut nodes = self.nodes.borrow_mut();
        for i in 0..=root.index as usize {
            let n = nodes[i];
            let a = nodes[n.lhs as usize].value;
            let b = nodes[n.rhs as usize].value;
            let value = match n.op {
                Op::Leaf | Op::Const => n.value,
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Neg => -a,
                Op::Tanh => libm::tanh(a),
                Op::Exp => libm::exp(a),
                Op::Ln => libm::log(a),
                Op::Sin => libm::sin(a),
                Op::Cos => libm::cos(a),
                Op::Sqrt => libm::sqrt(a),
                Op::Powi(k) => powi_f64(a, k),
                Op::Abs => libm::fabs(a),
            };
            if !value.is_finite() {
                return Err(AutodiffError::NonFinite {
                    op: n.op,
                    index: i,
                    value,
                });
            }
            nodes[i].value = value;
        }
        Ok(nodes[root.index as usize].value)
    }

    fn check_leaves(&self, wrt: &[Var<'_>]) -> Result<(), AutodiffError> {
        let nodes = self.nodes.borrow();
        for v in wrt {
            if nodes[v.index as usize].op != Op::Leaf {
                return Err(AutodiffError::NotALeaf {
                    index: v.index as usize,
                });
            }
        }
        Ok(())
    }

    /// Plain reverse sweep: `d root / d leaf` for every leaf in `wrt`.
    pub fn gradient(
        &self,
        root: Var<'_>,
        wrt: &[Var<'_>],
    ) -> Result<GradientMap<f64>, AutodiffError> {
        self.check_leaves(wrt)?;
        let nodes = self.nodes.borrow();
        let top = root.index as usize;
        let mut adj = vec![0.0f64; top + 1];
        adj[top] = 1.0;
        for i in (0..=top).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let n = nodes[i];
            let (a, b) = (n.lhs as usize, n.rhs as usize);
            let av = nodes[a].value;
            let bv = nodes[b].value;
            match n.op {
                Op::Leaf | Op::Const => {}
                Op::Add => {
                    adj[a] += g;
                    adj[b] += g;
                }
                Op::Sub => {
                    adj[a] += g;
                    adj[b] -= g;
                }
                Op::Mul => {
                    adj[a] += g * bv;
                    adj[b] += g * av;
                }
                Op::Div => {
                    adj[a] += g / bv;
                    adj[b] -= g * n.value / bv;
                }
                Op::Neg => adj[a] -= g,
                Op::Tanh => adj[a] += g * (1.0 - n.value * n.value),
                Op::Exp => adj[a] += g * n.value,
                Op::Ln => adj[a] += g / av,
                Op::Sin => adj[a] += g * libm::cos(av),
                Op::Cos => adj[a] -= g * libm::sin(av),
                Op::Sqrt => adj[a] += g * 0.5 / n.value,
                Op::Powi(k) => {
                    if k != 0 {
                        adj[a] += g * f64::from(k) * powi_f64(av, k - 1);
                    }
                }
                Op::Abs => adj[a] += g * sign_or_zero(av),
            }
        }
        Ok(GradientMap {
            leaves: wrt.iter().map(|v| v.index).collect(),
            adjoints: wrt
                .iter()
                .map(|v| adj.get(v.index as usize).copied().unwrap_or(0.0))
                .collect(),
        })
    }

    /// Differentiable reverse sweep: adjoints are recorded on this tape and
    /// returned as `Var`s, ready for another sweep.
    pub fn gradient_graph<'t>(
        &'t self,
        root: Var<'t>,
        wrt: &[Var<'t>],
    ) -> Result<GradientMap<Var<'t>>, AutodiffError> {
        self.check_leaves(wrt)?;
        let top = root.index as usize;
        let mut adj: Vec<Option<Var<'t>>> = vec![None; top + 1];
        adj[top] = Some(self.constant(1.0));

        fn acc<'t>(slot: &mut Option<Var<'t>>, term: Var<'t>) {
            *slot = Some(match *slot {
                Some(prev) => prev + term,
                None => term,
            });
        }

        for i in (0..=top).rev() {
            let Some(g) = adj[i] else { continue };
            let n = self.node(i as u32);
            let (ai, bi) = (n.lhs as usize, n.rhs as usize);
            let a = self.var(n.lhs);
            let b = self.var(n.rhs);
            let out = self.var(i as u32);
            match n.op {
                Op::Leaf | Op::Const => {}
                Op::Add => {
                    acc(&mut adj[ai], g);
                    acc(&mut adj[bi], g);
                }
                Op::Sub => {
                    acc(&mut adj[ai], g);
                    acc(&mut adj[bi], -g);
                }
                Op::Mul => {
                    acc(&mut adj[ai], g * b);
                    acc(&mut adj[bi], g * a);
                }
                Op::Div => {
                    acc(&mut adj[ai], g / b);
                    acc(&mut adj[bi], -(g * out / b));
                }
                Op::Neg => acc(&mut adj[ai], -g),
                Op::Tanh => acc(&mut adj[ai], g * (1.0 - out * out)),
                Op::Exp => acc(&mut adj[ai], g * out),
                Op::Ln => acc(&mut adj[ai], g / a),
                Op::Sin => acc(&mut adj[ai], g * Real::cos(a)),
                Op::Cos => acc(&mut adj[ai], -(g * Real::sin(a))),
                Op::Sqrt => acc(&mut adj[ai], g * 0.5 / out),
                Op::Powi(k) => {
                    if k != 0 {
                        acc(&mut adj[ai], g * f64::from(k) * Real::powi(a, k - 1));
                    }
                }
                Op::Abs => {
                    let s = sign_or_zero(a.value());
                    acc(&mut adj[ai], g * s);
                }
            }
        }
        let adjoints = wrt
            .iter()
            .map(|v| match adj.get(v.index as usize).copied().flatten() {
                Some(x) => x,
                None => self.constant(0.0),
            })
            .collect();
        Ok(GradientMap {
            leaves: wrt.iter().map(|v| v.index).collect(),
            adjoints,
        })
    }
}

fn sign_or_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.tape.node(self.index).value
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn op(&self) -> Op {
        self.tape.node(self.index).op
    }

    fn unary(self, op: Op, value: f64) -> Var<'t> {
        self.tape.push(op, self.index, self.index, value)
    }

    fn binary(self, rhs: Var<'t>, op: Op, value: f64) -> Var<'t> {
        debug_assert!(core::ptr::eq(self.tape, rhs.tape), "mixing tapes");
        self.tape.push(op, self.index, rhs.index, value)
    }

    pub fn abs(self) -> Var<'t> {
        let v = libm::fabs(self.value());
        self.unary(Op::Abs, v)
    }

    /// Differentiable gradient of `self` with respect to `wrt`.
    pub fn grad_graph(self, wrt: &[Var<'t>]) -> Result<GradientMap<Var<'t>>, AutodiffError> {
        self.tape.gradient_graph(self, wrt)
    }

    pub fn grad(self, wrt: &[Var<'t>]) -> Result<GradientMap<f64>, AutodiffError> {
        self.tape.gradient(self, wrt)
    }
}

impl<'t> Real for Var<'t> {
    fn lift(&self, c: f64) -> Self {
        self.tape.constant(c)
    }
    fn value(&self) -> f64 {
        Var::value(self)
    }
    fn tanh(self) -> Self {
        let v = libm::tanh(self.value());
        self.unary(Op::Tanh, v)
    }
    fn exp(self) -> Self {
        let v = libm::exp(self.value());
        self.unary(Op::Exp, v)
    }
    fn ln(self) -> Self {
        let v = libm::log(self.value());
        self.unary(Op::Ln, v)
    }
    fn sin(self) -> Self {
        let v = libm::sin(self.value());
        self.unary(Op::Sin, v)
    }
    fn cos(self) -> Self {
        let v = libm::cos(self.value());
        self.unary(Op::Cos, v)
    }
    fn sqrt(self) -> Self {
        let v = libm::sqrt(self.value());
        self.unary(Op::Sqrt, v)
    }
    fn powi(self, n: i32) -> Self {
        let v = powi_f64(self.value(), n);
        self.unary(Op::Powi(n), v)
    }
}

macro_rules! binary_ops {
    ($trait:ident, $method:ident, $op:expr, $f:expr) => {
        impl<'t> $trait<Var<'t>> for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                let v = $f(self.value(), rhs.value());
                self.binary(rhs, $op, v)
            }
        }
        impl<'t> $trait<f64> for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: f64) -> Var<'t> {
                let c = self.tape.constant(rhs);
                $trait::$method(self, c)
            }
        }
        impl<'t> $trait<Var<'t>> for f64 {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                let c = rhs.tape.constant(self);
                $trait::$method(c, rhs)
            }
        }
    };
}

binary_ops!(Add, add, Op::Add, |a: f64, b: f64| a + b);
binary_ops!(Sub, sub, Op::Sub, |a: f64, b: f64| a - b);
binary_ops!(Mul, mul, Op::Mul, |a: f64, b: f64| a * b);
binary_ops!(Div, div, Op::Div, |a: f64, b: f64| a / b);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        let v = -self.value();
        self.unary(Op::Neg, v)
    }
}

/// Guard added to the denominator of [`finite_difference_check`].
pub const FD_FLOOR: f64 = 1e-8;

/// Compares the reverse-mode gradient of `f` at `point` against central
/// differences with the given `step`.
///
/// Returns `max_i |ad_i - fd_i| / (|fd_i| + FD_FLOOR)`. Evaluation errors
/// count as an infinite discrepancy.
pub fn finite_difference_check<F>(f: F, point: &[f64], step: f64) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let eval = |x: &[f64]| -> f64 {
        let tape = Tape::new();
        let leaves = tape.leaves(x);
        f(&tape, &leaves).value()
    };
    let tape = Tape::new();
    let leaves = tape.leaves(point);
    let root = f(&tape, &leaves);
    let ad = match tape.gradient(root, &leaves) {
        Ok(g) => g.into_vec(),
        Err(_) => return f64::INFINITY,
    };
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let fp = eval(&x);
        x[i] = point[i] - step;
        let fm = eval(&x);
        x[i] = point[i];
        let fd = (fp - fm) / (2.0 * step);
        let err = libm::fabs(ad[i] - fd) / (libm::fabs(fd) + FD_FLOOR);
        if err.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        let tape = Tape::new();
        let x = tape.leaf(3.0);
        let y = x * x;
        assert_eq!(tape.evaluate(y).unwrap(), 9.0);

        let z = tape.leaf(0.0);
        let t = Real::tanh(z);
        assert_eq!(tape.evaluate(t).unwrap(), 0.0);

        let a = tape.leaf(0.333);
        let b = tape.leaf(0.133);
        let s = a + b;
        assert!((tape.evaluate(s).unwrap() - 0.466).abs() < 1e-15);
    }

    #[test]
    fn evaluate_reports_offending_op() {
        let tape = Tape::new();
        let x = tape.leaf(-1.0);
        let y = Real::ln(x) + 1.0;
        let err = tape.evaluate(y).unwrap_err();
        match err {
            AutodiffError::NonFinite { op, .. } => assert_eq!(op, Op::Ln),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn evaluate_follows_new_leaf_values() {
        let tape = Tape::new();
        let x = tape.leaf(1.0);
        let y = Real::exp(x) * x;
        tape.set_value(x, 2.0).unwrap();
        let v = tape.evaluate(y).unwrap();
        assert!((v - 2.0 * libm::exp(2.0)).abs() < 1e-12);
        assert!(tape.set_value(y, 0.0).is_err());
    }

    #[test]
    fn reverse_examples() {
        let tape = Tape::new();
        let x = tape.leaf(3.0);
        let y = x * x;
        assert_eq!(y.grad(&[x]).unwrap()[0], 6.0);

        let z = tape.leaf(0.0);
        let t = Real::tanh(z);
        let dt = t.grad_graph(&[z]).unwrap()[0];
        let d2t = dt.grad(&[z]).unwrap()[0];
        assert_eq!(d2t, 0.0);

        let w = tape.leaf(core::f64::consts::FRAC_PI_2);
        let s = Real::sin(w);
        let ds = s.grad_graph(&[w]).unwrap()[0];
        let d2s = ds.grad(&[w]).unwrap()[0];
        assert!((d2s + 1.0).abs() < 1e-15);
    }

    #[test]
    fn unreachable_leaf_has_zero_adjoint() {
        let tape = Tape::new();
        let x = tape.leaf(2.0);
        let y = tape.leaf(5.0);
        let f = x * 3.0;
        let g = f.grad(&[x, y]).unwrap();
        assert_eq!(g[1], 0.0);
        let gg = f.grad_graph(&[x, y]).unwrap();
        assert_eq!(gg[1].value(), 0.0);
        assert_eq!(gg.get(&y).unwrap().value(), 0.0);
    }

    #[test]
    fn gradient_rejects_non_leaf() {
        let tape = Tape::new();
        let x = tape.leaf(2.0);
        let y = x * x;
        assert_eq!(
            y.grad(&[y]).unwrap_err(),
            AutodiffError::NotALeaf { index: y.index() }
        );
    }

    #[test]
    fn abs_subgradient_is_zero_at_kink() {
        let tape = Tape::new();
        let x = tape.leaf(0.0);
        assert_eq!(x.abs().grad(&[x]).unwrap()[0], 0.0);
        let y = tape.leaf(-2.0);
        assert_eq!(y.abs().grad(&[y]).unwrap()[0], -1.0);
    }

    #[test]
    fn fd_check_examples() {
        let cube = finite_difference_check(|_, x| x[0] * x[0] * x[0], &[1.0], 1e-5);
        assert!(cube < 1e-8, "{cube}");

        let constant = finite_difference_check(|t, _| t.constant(4.2), &[0.7], 1e-5);
        assert_eq!(constant, 0.0);

        let th = finite_difference_check(|_, x| Real::tanh(x[0] * 2.0), &[0.3], 1e-5);
        assert!(th < 1e-7, "{th}");
    }

    #[test]
    fn sweep_only_adds_linear_number_of_nodes() {
        let tape = Tape::new();
        let x = tape.leaf(0.4);
        let mut y = x;
        for _ in 0..100 {
            y = Real::tanh(y) * 1.1 + x;
        }
        let before = tape.len();
        let _ = y.grad_graph(&[x]).unwrap();
        let added = tape.len() - before;
        assert!(added <= 10 * before, "added {added} for {before}");
    }
}
