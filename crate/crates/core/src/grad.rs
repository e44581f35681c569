//! Reverse-mode differentiation over complex matrix programs.
//!
//! The engine records an eager tape of matrix operations and back-propagates
//! a real scalar loss. Gradient convention for complex quantities is the
//! conjugate Wirtinger derivative: the reported gradient of a node holding
//! `z` is `∂L/∂z̄`, so a gradient-descent update is `z ← z − η·grad` and a
//! gradient-ascent update is `z ← z + η·grad`. Real-valued nodes carry the
//! ordinary derivative `∂L/∂x`.
//!
//! Two stop-gradient mechanisms are structural rather than explicit ops:
//! discrete choices (atom selection) shape the recorded graph but are not
//! nodes, and decompositions used for initialization enter as constants.
//! Both therefore contribute exactly zero gradient.
//!
//! A gradient evaluation is single-threaded and owns its tape; independent
//! evaluations may run in parallel, each on its own tape.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{self, frob_inner, CMat, RMat};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Matrix payload of a node: complex or real.
#[derive(Debug, Clone)]
pub enum Value {
    C(CMat),
    R(RMat),
}

#[derive(Debug, Clone)]
enum Op {
    ConstC,
    ConstR,
    ParamC,
    ParamR,
    // complex linear / structural
    MatMul(NodeId, NodeId),
    Adjoint(NodeId),
    Transpose(NodeId),
    Conj(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Neg(NodeId),
    ScaleConst(NodeId, f64),
    ScaleRe(NodeId, NodeId),
    Col(NodeId, usize),
    HStack(Vec<NodeId>),
    // complex non-holomorphic / nonlinear
    Cis(NodeId),
    UnitModulus(NodeId),
    SolveHpd(NodeId, NodeId),
    // complex → real
    LogDetPsd(NodeId),
    FrobSq(NodeId),
    Abs(NodeId),
    // real
    AddR(NodeId, NodeId),
    SubR(NodeId, NodeId),
    MulR(NodeId, NodeId),
    DivR(NodeId, NodeId),
    MatMulR(NodeId, NodeId),
    ScaleConstR(NodeId, f64),
    SqrtR(NodeId),
    ExpR(NodeId),
    MinConstR(NodeId, f64),
    ElemR(NodeId, usize, usize),
}

struct Node {
    op: Op,
    value: Value,
}

/// Eager computation tape: node values are materialized at construction time
/// so recorded programs can branch on intermediate numerics (e.g. greedy
/// atom selection) without a separate forward pass.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Complex value of a node; panics on a real node (builder bug).
    pub fn value_c(&self, id: NodeId) -> &CMat {
        match &self.nodes[id.0].value {
            Value::C(m) => m,
            Value::R(_) => panic!("expected complex node"),
        }
    }

    /// Real value of a node; panics on a complex node (builder bug).
    pub fn value_r(&self, id: NodeId) -> &RMat {
        match &self.nodes[id.0].value {
            Value::R(m) => m,
            Value::C(_) => panic!("expected real node"),
        }
    }

    /// Scalar value of a 1×1 real node.
    pub fn value_scalar(&self, id: NodeId) -> f64 {
        self.value_r(id).as_scalar()
    }

    // ── leaves ──

    pub fn const_c(&mut self, m: CMat) -> NodeId {
        self.push(Op::ConstC, Value::C(m))
    }

    pub fn const_r(&mut self, m: RMat) -> NodeId {
        self.push(Op::ConstR, Value::R(m))
    }

    pub fn scalar_r(&mut self, x: f64) -> NodeId {
        self.const_r(RMat::scalar(x))
    }

    fn param_c(&mut self, m: CMat) -> NodeId {
        self.push(Op::ParamC, Value::C(m))
    }

    fn param_r(&mut self, m: RMat) -> NodeId {
        self.push(Op::ParamR, Value::R(m))
    }

    // ── complex ops ──

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = numerics::matmul(self.value_c(a), self.value_c(b)).expect("tape matmul shape");
        self.push(Op::MatMul(a, b), Value::C(v))
    }

    pub fn adjoint(&mut self, a: NodeId) -> NodeId {
        let v = self.value_c(a).adjoint();
        self.push(Op::Adjoint(a), Value::C(v))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value_c(a).transpose();
        self.push(Op::Transpose(a), Value::C(v))
    }

    pub fn conj(&mut self, a: NodeId) -> NodeId {
        let v = self.value_c(a).conj();
        self.push(Op::Conj(a), Value::C(v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value_c(a).add(self.value_c(b));
        self.push(Op::Add(a, b), Value::C(v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value_c(a).sub(self.value_c(b));
        self.push(Op::Sub(a, b), Value::C(v))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value_c(a).scale_re(-1.0);
        self.push(Op::Neg(a), Value::C(v))
    }

    pub fn scale_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value_c(a).scale_re(c);
        self.push(Op::ScaleConst(a, c), Value::C(v))
    }

    /// Complex matrix scaled by a 1×1 real node.
    pub fn scale_re(&mut self, a: NodeId, r: NodeId) -> NodeId {
        let s = self.value_scalar(r);
        let v = self.value_c(a).scale_re(s);
        self.push(Op::ScaleRe(a, r), Value::C(v))
    }

    /// Extract column `j` as a fresh column node.
    pub fn col(&mut self, a: NodeId, j: usize) -> NodeId {
        let v = self.value_c(a).column_matrix(j);
        self.push(Op::Col(a, j), Value::C(v))
    }

    /// Concatenate single-width or multi-width column blocks horizontally.
    pub fn hstack(&mut self, parts: &[NodeId]) -> NodeId {
        let blocks: Vec<&CMat> = parts.iter().map(|&p| self.value_c(p)).collect();
        let v = CMat::hstack(&blocks).expect("tape hstack shape");
        self.push(Op::HStack(parts.to_vec()), Value::C(v))
    }

    /// Entry-wise `e^{j·x}` of a real node (unit-modulus complex output).
    pub fn cis(&mut self, x: NodeId) -> NodeId {
        let xv = self.value_r(x);
        let mut v = CMat::zeros(xv.rows(), xv.cols());
        for (dst, &t) in v.data_mut().iter_mut().zip(xv.data()) {
            let (s, c) = t.sin_cos();
            *dst = Complex64::new(c, s);
        }
        self.push(Op::Cis(x), Value::C(v))
    }

    /// Entry-wise projection onto the unit circle (`z/|z|`, zeros map to 1).
    pub fn unit_modulus(&mut self, a: NodeId) -> NodeId {
        let av = self.value_c(a);
        let mut v = av.clone();
        for z in v.data_mut() {
            *z = numerics::unit_modulus(*z);
        }
        self.push(Op::UnitModulus(a), Value::C(v))
    }

    /// Solve `S·X = B` for Hermitian positive definite `S`.
    pub fn solve_hpd(&mut self, s: NodeId, b: NodeId) -> Result<NodeId> {
        let v = numerics::solve_hpd(self.value_c(s), self.value_c(b))?;
        Ok(self.push(Op::SolveHpd(s, b), Value::C(v)))
    }

    /// `ln det(S)` of a Hermitian positive definite node, as a real scalar.
    pub fn logdet_psd(&mut self, s: NodeId) -> Result<NodeId> {
        let v = numerics::logdet_psd(self.value_c(s))?;
        Ok(self.push(Op::LogDetPsd(s), Value::R(RMat::scalar(v))))
    }

    /// Squared Frobenius norm as a real scalar node.
    pub fn frob_sq(&mut self, a: NodeId) -> NodeId {
        let v = self.value_c(a).frob_norm_sq();
        self.push(Op::FrobSq(a), Value::R(RMat::scalar(v)))
    }

    /// Entry-wise modulus (complex → real).
    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let av = self.value_c(a);
        let v = RMat::from_fn(av.rows(), av.cols(), |i, j| av[(i, j)].norm());
        self.push(Op::Abs(a), Value::R(v))
    }

    // ── real ops ──

    pub fn add_r(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value_r(a).add(self.value_r(b));
        self.push(Op::AddR(a, b), Value::R(v))
    }

    pub fn sub_r(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value_r(a).sub(self.value_r(b));
        self.push(Op::SubR(a, b), Value::R(v))
    }

    /// Entry-wise real product.
    pub fn mul_r(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value_r(a), self.value_r(b));
        assert_eq!((av.rows(), av.cols()), (bv.rows(), bv.cols()), "mul_r shape");
        let mut v = av.clone();
        for (x, &y) in v.data_mut().iter_mut().zip(bv.data()) {
            *x *= y;
        }
        self.push(Op::MulR(a, b), Value::R(v))
    }

    /// Entry-wise real quotient.
    pub fn div_r(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value_r(a), self.value_r(b));
        assert_eq!((av.rows(), av.cols()), (bv.rows(), bv.cols()), "div_r shape");
        let mut v = av.clone();
        for (x, &y) in v.data_mut().iter_mut().zip(bv.data()) {
            *x /= y;
        }
        self.push(Op::DivR(a, b), Value::R(v))
    }

    pub fn matmul_r(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value_r(a).matmul(self.value_r(b)).expect("tape matmul_r shape");
        self.push(Op::MatMulR(a, b), Value::R(v))
    }

    pub fn scale_const_r(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value_r(a).scale(c);
        self.push(Op::ScaleConstR(a, c), Value::R(v))
    }

    /// Entry-wise square root (entries must be positive for the gradient).
    pub fn sqrt_r(&mut self, a: NodeId) -> NodeId {
        let av = self.value_r(a);
        let v = RMat::from_fn(av.rows(), av.cols(), |i, j| av[(i, j)].sqrt());
        self.push(Op::SqrtR(a), Value::R(v))
    }

    /// Entry-wise exponential of a real matrix.
    pub fn exp_r(&mut self, a: NodeId) -> NodeId {
        let av = self.value_r(a);
        let v = RMat::from_fn(av.rows(), av.cols(), |i, j| av[(i, j)].exp());
        self.push(Op::ExpR(a), Value::R(v))
    }

    /// Entry-wise `min(x, c)`; the clamped side has zero gradient.
    pub fn min_const_r(&mut self, a: NodeId, c: f64) -> NodeId {
        let av = self.value_r(a);
        let v = RMat::from_fn(av.rows(), av.cols(), |i, j| av[(i, j)].min(c));
        self.push(Op::MinConstR(a, c), Value::R(v))
    }

    /// Extract entry (i, j) of a real node as a 1×1 scalar node.
    pub fn elem_r(&mut self, a: NodeId, i: usize, j: usize) -> NodeId {
        let v = RMat::scalar(self.value_r(a)[(i, j)]);
        self.push(Op::ElemR(a, i, j), Value::R(v))
    }

    // ── backward pass ──

    /// Back-propagate from a 1×1 real loss node; returns per-node adjoints.
    fn backward(&self, loss: NodeId) -> Vec<Option<Value>> {
        let lv = self.value_r(loss);
        assert_eq!((lv.rows(), lv.cols()), (1, 1), "loss must be a real scalar node");
        let mut adj: Vec<Option<Value>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Value::R(RMat::scalar(1.0)));

        for i in (0..=loss.0).rev() {
            // Parameters keep their accumulated adjoint; constants drop it.
            match self.nodes[i].op {
                Op::ParamC | Op::ParamR | Op::ConstC | Op::ConstR => continue,
                _ => {}
            }
            let g = match adj[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.dispatch(i, g, &mut adj);
        }
        adj
    }

    fn dispatch(&self, i: usize, g: Value, adj: &mut [Option<Value>]) {
        match (&self.nodes[i].op, g) {
            (Op::MatMul(a, b), Value::C(g)) => {
                let ga = numerics::matmul(&g, &self.value_c(*b).adjoint()).unwrap();
                let gb = numerics::matmul(&self.value_c(*a).adjoint(), &g).unwrap();
                acc_c(&mut adj[a.0], ga);
                acc_c(&mut adj[b.0], gb);
            }
            (Op::Adjoint(a), Value::C(g)) => acc_c(&mut adj[a.0], g.adjoint()),
            (Op::Transpose(a), Value::C(g)) => acc_c(&mut adj[a.0], g.transpose()),
            (Op::Conj(a), Value::C(g)) => acc_c(&mut adj[a.0], g.conj()),
            (Op::Add(a, b), Value::C(g)) => {
                acc_c(&mut adj[a.0], g.clone());
                acc_c(&mut adj[b.0], g);
            }
            (Op::Sub(a, b), Value::C(g)) => {
                acc_c(&mut adj[b.0], g.scale_re(-1.0));
                acc_c(&mut adj[a.0], g);
            }
            (Op::Neg(a), Value::C(g)) => acc_c(&mut adj[a.0], g.scale_re(-1.0)),
            (Op::ScaleConst(a, c), Value::C(g)) => acc_c(&mut adj[a.0], g.scale_re(*c)),
            (Op::ScaleRe(a, r), Value::C(g)) => {
                let s = self.value_scalar(*r);
                let gr = 2.0 * frob_inner(&g, self.value_c(*a)).re;
                acc_c(&mut adj[a.0], g.scale_re(s));
                acc_r(&mut adj[r.0], RMat::scalar(gr));
            }
            (Op::Col(a, j), Value::C(g)) => {
                let av = self.value_c(*a);
                let slot = adj[a.0].get_or_insert_with(|| Value::C(CMat::zeros(av.rows(), av.cols())));
                if let Value::C(m) = slot {
                    for (dst, src) in m.col_mut(*j).iter_mut().zip(g.col(0)) {
                        *dst += src;
                    }
                }
            }
            (Op::HStack(parts), Value::C(g)) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.value_c(*p).cols();
                    let block = CMat::from_fn(g.rows(), w, |i2, j2| g[(i2, offset + j2)]);
                    acc_c(&mut adj[p.0], block);
                    offset += w;
                }
            }
            (Op::Cis(x), Value::C(g)) => {
                // z = e^{jx}: ∂L/∂x = 2·Im(g·conj(z)).
                let zv = self.value_c(NodeId(i));
                let xv = self.value_r(*x);
                let gx = RMat::from_fn(xv.rows(), xv.cols(), |r, c| {
                    2.0 * (g[(r, c)] * zv[(r, c)].conj()).im
                });
                acc_r(&mut adj[x.0], gx);
            }
            (Op::UnitModulus(a), Value::C(g)) => {
                // w = z/|z|: ∂L/∂z̄ = (g − ḡ·w²) / (2|z|); zero entries get zero.
                let av = self.value_c(*a);
                let wv = self.value_c(NodeId(i));
                let ga = CMat::from_fn(av.rows(), av.cols(), |r, c| {
                    let z = av[(r, c)];
                    let n = z.norm();
                    if n == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        let w = wv[(r, c)];
                        let ge = g[(r, c)];
                        (ge - ge.conj() * w * w) / (2.0 * n)
                    }
                });
                acc_c(&mut adj[a.0], ga);
            }
            (Op::SolveHpd(s, b), Value::C(g)) => {
                // X = S⁻¹B: ∂L/∂B̄ = S⁻¹g, ∂L/∂S̄ = −(S⁻¹g)·Xᴴ.
                let sv = self.value_c(*s);
                let xv = self.value_c(NodeId(i));
                let gb = numerics::solve_hpd(sv, &g).expect("solve_hpd backward");
                let gs = numerics::matmul(&gb, &xv.adjoint()).unwrap().scale_re(-1.0);
                acc_c(&mut adj[b.0], gb);
                acc_c(&mut adj[s.0], gs);
            }
            (Op::LogDetPsd(s), Value::R(g)) => {
                // y = ln det(S) on the Hermitian cone: ∂y/∂S̄ = S⁻¹/2. The
                // half comes from the conjugate-Wirtinger convention at the
                // complex→real boundary (compare FrobSq, whose |·|² supplies
                // the compensating 2 itself).
                let sv = self.value_c(*s);
                let inv = numerics::solve_hpd(sv, &CMat::identity(sv.rows())).expect("logdet backward");
                acc_c(&mut adj[s.0], inv.scale_re(0.5 * g.as_scalar()));
            }
            (Op::FrobSq(a), Value::R(g)) => {
                acc_c(&mut adj[a.0], self.value_c(*a).scale_re(g.as_scalar()));
            }
            (Op::Abs(a), Value::R(g)) => {
                // y = |z| = (z·z̄)^{1/2}: ∂y/∂z̄ = z/(2|z|); zeros get zero.
                let av = self.value_c(*a);
                let ga = CMat::from_fn(av.rows(), av.cols(), |r, c| {
                    let z = av[(r, c)];
                    let n = z.norm();
                    if n == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        z * (g[(r, c)] / (2.0 * n))
                    }
                });
                acc_c(&mut adj[a.0], ga);
            }
            (Op::AddR(a, b), Value::R(g)) => {
                acc_r(&mut adj[a.0], g.clone());
                acc_r(&mut adj[b.0], g);
            }
            (Op::SubR(a, b), Value::R(g)) => {
                acc_r(&mut adj[b.0], g.scale(-1.0));
                acc_r(&mut adj[a.0], g);
            }
            (Op::MulR(a, b), Value::R(g)) => {
                let (av, bv) = (self.value_r(*a), self.value_r(*b));
                let ga = RMat::from_fn(g.rows(), g.cols(), |r, c| g[(r, c)] * bv[(r, c)]);
                let gb = RMat::from_fn(g.rows(), g.cols(), |r, c| g[(r, c)] * av[(r, c)]);
                acc_r(&mut adj[a.0], ga);
                acc_r(&mut adj[b.0], gb);
            }
            (Op::DivR(a, b), Value::R(g)) => {
                let bv = self.value_r(*b);
                let cv = self.value_r(NodeId(i));
                let ga = RMat::from_fn(g.rows(), g.cols(), |r, c| g[(r, c)] / bv[(r, c)]);
                let gb = RMat::from_fn(g.rows(), g.cols(), |r, c| {
                    -g[(r, c)] * cv[(r, c)] / bv[(r, c)]
                });
                acc_r(&mut adj[a.0], ga);
                acc_r(&mut adj[b.0], gb);
            }
            (Op::MatMulR(a, b), Value::R(g)) => {
                let ga = g.matmul(&self.value_r(*b).transpose()).unwrap();
                let gb = self.value_r(*a).transpose().matmul(&g).unwrap();
                acc_r(&mut adj[a.0], ga);
                acc_r(&mut adj[b.0], gb);
            }
            (Op::ScaleConstR(a, c), Value::R(g)) => acc_r(&mut adj[a.0], g.scale(*c)),
            (Op::SqrtR(a), Value::R(g)) => {
                let uv = self.value_r(NodeId(i));
                let ga = RMat::from_fn(g.rows(), g.cols(), |r, c| g[(r, c)] / (2.0 * uv[(r, c)]));
                acc_r(&mut adj[a.0], ga);
            }
            (Op::ExpR(a), Value::R(g)) => {
                let uv = self.value_r(NodeId(i));
                let ga = RMat::from_fn(g.rows(), g.cols(), |r, c| g[(r, c)] * uv[(r, c)]);
                acc_r(&mut adj[a.0], ga);
            }
            (Op::MinConstR(a, cst), Value::R(g)) => {
                let av = self.value_r(*a);
                let ga = RMat::from_fn(g.rows(), g.cols(), |r, c| {
                    if av[(r, c)] < *cst {
                        g[(r, c)]
                    } else {
                        0.0
                    }
                });
                acc_r(&mut adj[a.0], ga);
            }
            (Op::ElemR(a, r0, c0), Value::R(g)) => {
                let av = self.value_r(*a);
                let slot = adj[a.0].get_or_insert_with(|| Value::R(RMat::zeros(av.rows(), av.cols())));
                if let Value::R(m) = slot {
                    m[(*r0, *c0)] += g.as_scalar();
                }
            }
            (Op::ConstC | Op::ConstR | Op::ParamC | Op::ParamR, _) => {}
            (op, _) => panic!("adjoint type mismatch on {op:?}"),
        }
    }
}

fn acc_c(slot: &mut Option<Value>, add: CMat) {
    match slot {
        None => *slot = Some(Value::C(add)),
        Some(Value::C(m)) => {
            for (dst, src) in m.data_mut().iter_mut().zip(add.data()) {
                *dst += src;
            }
        }
        Some(Value::R(_)) => panic!("adjoint kind mismatch"),
    }
}

fn acc_r(slot: &mut Option<Value>, add: RMat) {
    match slot {
        None => *slot = Some(Value::R(add)),
        Some(Value::R(m)) => {
            for (dst, src) in m.data_mut().iter_mut().zip(add.data()) {
                *dst += src;
            }
        }
        Some(Value::C(_)) => panic!("adjoint kind mismatch"),
    }
}

// ─── Parameters and results ──────────────────────────────────────────────────

/// Named tensor: real or complex matrix.
#[derive(Debug, Clone)]
pub enum Tensor {
    C(CMat),
    R(RMat),
}

impl Tensor {
    pub fn zeros_like(&self) -> Tensor {
        match self {
            Tensor::C(m) => Tensor::C(CMat::zeros(m.rows(), m.cols())),
            Tensor::R(m) => Tensor::R(RMat::zeros(m.rows(), m.cols())),
        }
    }

    pub fn as_c(&self) -> &CMat {
        match self {
            Tensor::C(m) => m,
            Tensor::R(_) => panic!("expected complex tensor"),
        }
    }

    pub fn as_r(&self) -> &RMat {
        match self {
            Tensor::R(m) => m,
            Tensor::C(_) => panic!("expected real tensor"),
        }
    }

    /// Number of real scalars backing this tensor (complex counts two each).
    pub fn real_dof(&self) -> usize {
        match self {
            Tensor::C(m) => 2 * m.rows() * m.cols(),
            Tensor::R(m) => m.rows() * m.cols(),
        }
    }
}

/// Ordered collection of named trainable tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    /// Insert a parameter; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Tensor)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of real degrees of freedom across all parameters.
    pub fn real_dof(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.real_dof()).sum()
    }
}

/// Parameter leaves materialized on a tape, addressable by name.
pub struct ParamNodes {
    names: Vec<String>,
    ids: Vec<NodeId>,
}

impl ParamNodes {
    /// Node for the named parameter; panics on unknown names (builder bug).
    pub fn id(&self, name: &str) -> NodeId {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.ids[i])
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }
}

/// Loss value plus one gradient tensor per parameter.
#[derive(Debug, Clone)]
pub struct GradResult {
    pub value: f64,
    grads: Vec<(String, Tensor)>,
}

impl GradResult {
    pub fn grad(&self, name: &str) -> &Tensor {
        self.grads
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn grads(&self) -> impl Iterator<Item = &(String, Tensor)> {
        self.grads.iter()
    }
}

/// Evaluate `loss_fn` and back-propagate to every parameter.
///
/// Parameters that do not influence the loss receive exactly-zero gradients.
pub fn backprop<F>(loss_fn: F, params: &ParamSet) -> Result<GradResult>
where
    F: Fn(&mut Tape, &ParamNodes) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let mut nodes = ParamNodes { names: Vec::new(), ids: Vec::new() };
    for (name, t) in params.entries.iter() {
        let id = match t {
            Tensor::C(m) => tape.param_c(m.clone()),
            Tensor::R(m) => tape.param_r(m.clone()),
        };
        nodes.names.push(name.clone());
        nodes.ids.push(id);
    }
    let loss = loss_fn(&mut tape, &nodes)?;
    let value = tape.value_scalar(loss);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite: {value}")));
    }
    let adj = tape.backward(loss);
    let mut grads = Vec::with_capacity(params.entries.len());
    for (i, (name, t)) in params.entries.iter().enumerate() {
        let g = match adj[nodes.ids[i].0].clone() {
            Some(Value::C(m)) => Tensor::C(m),
            Some(Value::R(m)) => Tensor::R(m),
            None => t.zeros_like(),
        };
        grads.push((name.clone(), g));
    }
    Ok(GradResult { value, grads })
}

/// Evaluate the loss only (used by finite differencing and reporting).
pub fn eval<F>(loss_fn: F, params: &ParamSet) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamNodes) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let mut nodes = ParamNodes { names: Vec::new(), ids: Vec::new() };
    for (name, t) in params.entries.iter() {
        let id = match t {
            Tensor::C(m) => tape.param_c(m.clone()),
            Tensor::R(m) => tape.param_r(m.clone()),
        };
        nodes.names.push(name.clone());
        nodes.ids.push(id);
    }
    let loss = loss_fn(&mut tape, &nodes)?;
    Ok(tape.value_scalar(loss))
}

/// Outcome of a finite-difference audit of the reverse-mode gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error per parameter (unit-floored denominator).
    pub per_param: Vec<(String, f64)>,
    /// Worst relative error overall.
    pub max_rel_err: f64,
    /// True when `max_rel_err` is at or below the requested tolerance.
    pub pass: bool,
}

/// Compare reverse-mode gradients against central finite differences.
///
/// Each real degree of freedom is perturbed by `1e-6·max(1, |x|)`, with one
/// Richardson refinement — `(4·D(h/2) − D(h))/3` — so the O(h²) truncation
/// term cancels. That matters for coordinates with steep higher derivatives
/// (antenna positions are measured in meters but enter the loss through
/// phases scaled by 2π/λ ≈ 587 rad/m, cubing into the truncation term).
/// Complex entries are checked on real and imaginary parts and recombined as
/// `(∂L/∂x + j·∂L/∂y)/2`, matching the conjugate Wirtinger convention.
/// Relative error uses a unit-floored denominator so near-zero gradients are
/// compared absolutely.
pub fn grad_check<F>(loss_fn: F, params: &ParamSet, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamNodes) -> Result<NodeId>,
{
    let bp = backprop(&loss_fn, params)?;
    let mut per_param = Vec::new();
    let mut overall: f64 = 0.0;

    for (name, tensor) in params.entries.iter() {
        let mut worst: f64 = 0.0;
        match tensor {
            Tensor::R(m) => {
                let gm = bp.grad(name).as_r().clone();
                for idx in 0..m.data().len() {
                    let x = m.data()[idx];
                    let h = 1e-6 * x.abs().max(1.0);
                    let fd = refined_diff(&loss_fn, params, name, idx, false, h)?;
                    let g = gm.data()[idx];
                    worst = worst.max(rel_err(g, fd));
                }
            }
            Tensor::C(m) => {
                let gm = bp.grad(name).as_c().clone();
                for idx in 0..m.data().len() {
                    let z = m.data()[idx];
                    let hre = 1e-6 * z.re.abs().max(1.0);
                    let him = 1e-6 * z.im.abs().max(1.0);
                    let dre = refined_diff(&loss_fn, params, name, idx, false, hre)?;
                    let dim = refined_diff(&loss_fn, params, name, idx, true, him)?;
                    let fd = Complex64::new(dre / 2.0, dim / 2.0);
                    let g = gm.data()[idx];
                    worst = worst.max(((g - fd).norm()) / g.norm().max(fd.norm()).max(1.0));
                }
            }
        }
        overall = overall.max(worst);
        per_param.push((name.clone(), worst));
    }

    Ok(GradCheckReport { per_param, max_rel_err: overall, pass: overall <= tol })
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Central difference with one step of Richardson extrapolation.
fn refined_diff<F>(
    loss_fn: &F,
    params: &ParamSet,
    name: &str,
    idx: usize,
    imag: bool,
    h: f64,
) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamNodes) -> Result<NodeId>,
{
    let coarse = central_diff(loss_fn, params, name, idx, imag, h)?;
    let fine = central_diff(loss_fn, params, name, idx, imag, h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

fn central_diff<F>(
    loss_fn: &F,
    params: &ParamSet,
    name: &str,
    idx: usize,
    imag: bool,
    h: f64,
) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamNodes) -> Result<NodeId>,
{
    let mut plus = params.clone();
    let mut minus = params.clone();
    for (set, sign) in [(&mut plus, 1.0), (&mut minus, -1.0)] {
        match set.get_mut(name).unwrap() {
            Tensor::R(m) => m.data_mut()[idx] += sign * h,
            Tensor::C(m) => {
                if imag {
                    m.data_mut()[idx].im += sign * h;
                } else {
                    m.data_mut()[idx].re += sign * h;
                }
            }
        }
    }
    let lp = eval(loss_fn, &plus)?;
    let lm = eval(loss_fn, &minus)?;
    Ok((lp - lm) / (2.0 * h))
}
