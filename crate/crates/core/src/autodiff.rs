//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Tape`] records every forward operation. Parameters live in a
//! [`ParameterStore`] and are copied onto the tape when first used, so one
//! store can back many tapes at once during inference.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: dimension mismatch ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("backward root must be a scalar, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Lookup(ParamId, usize),
    MatMul(Var, Var),
    Affine(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Maximum(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Pick(Var, usize),
    Sum(Var),
}

#[derive(Clone, Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

/// Computation graph recorded in creation order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, op_name: &'static str, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Result<Var> {
        debug_assert_eq!(value.len(), rows * cols);
        if value.iter().any(|x| !x.is_finite()) {
            return Err(AutodiffError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { rows, cols, value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Input or constant matrix.
    pub fn input(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var> {
        if value.len() != rows * cols {
            return Err(shape_err("input", format!("{} values for {rows}x{cols}", value.len())));
        }
        self.push("input", rows, cols, value, Op::Leaf)
    }

    pub fn vector(&mut self, value: Vec<f64>) -> Result<Var> {
        let n = value.len();
        self.input(n, 1, value)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.push("zeros", n, 1, vec![0.0; n], Op::Leaf)
            .expect("zeros are finite")
    }

    /// The whole parameter as one node; repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = &store.params[id.0];
        let v = self
            .push("param", p.rows, p.cols, p.value.clone(), Op::Param(id))
            .expect("parameters are finite");
        self.params.insert(id, v);
        v
    }

    /// Row `row` of an embedding table, as a column vector.
    pub fn lookup(&mut self, store: &ParameterStore, id: ParamId, row: usize) -> Result<Var> {
        let p = &store.params[id.0];
        if row >= p.rows {
            return Err(shape_err("lookup", format!("row {row} of {} rows", p.rows)));
        }
        let value = p.value[row * p.cols..(row + 1) * p.cols].to_vec();
        self.push("lookup", p.cols, 1, value, Op::Lookup(id, row))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} * {k2}x{n}")));
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aip * b;
                }
            }
        }
        self.push("matmul", m, n, out, Op::MatMul(a, b))
    }

    /// `w * x + b` for a column vector `x`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(w);
        let (xr, xc) = self.shape(x);
        let (br, bc) = self.shape(b);
        if xr != k || xc != 1 || br != m || bc != 1 {
            return Err(shape_err("affine", format!("W {m}x{k}, x {xr}x{xc}, b {br}x{bc}")));
        }
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let bv = &self.nodes[b.0].value;
        let out: Vec<f64> = (0..m).map(|i| bv[i] + dot(&wv[i * k..(i + 1) * k], xv)).collect();
        self.push("affine", m, 1, out, Op::Affine(w, x, b))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(shape_err(op, format!("{}x{} vs {}x{}", sa.0, sa.1, sb.0, sb.1)));
        }
        Ok(sa)
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (r, c) = self.same_shape(name, a, b)?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(name, r, c, out, op)
    }

    fn map(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(name, r, c, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    /// Sum of several same-shaped nodes, folded left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| shape_err("add", "no terms".to_string()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("max", a, b, Op::Maximum(a, b), f64::max)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.map("scale", a, Op::Scale(a, k), |x| x * k)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        self.map("add_scalar", a, Op::AddScalar(a), |x| x + k)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("logistic", a, Op::Sigmoid(a), logistic)
    }

    /// Stacks column vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            let (_, c) = self.shape(p);
            if c != 1 {
                return Err(shape_err("concat", format!("part with {c} columns")));
            }
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        let n = out.len();
        self.push("concat", n, 1, out, Op::Concat(parts.to_vec()))
    }

    /// Rows `start..start + len` of a column vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if c != 1 || start + len > r {
            return Err(shape_err("slice", format!("{start}+{len} of {r}x{c}")));
        }
        let out = self.nodes[a.0].value[start..start + len].to_vec();
        self.push("slice", len, 1, out, Op::Slice(a, start))
    }

    /// Element `index` as a scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let n = self.dim(a);
        if index >= n {
            return Err(shape_err("pick", format!("index {index} of {n}")));
        }
        let v = self.nodes[a.0].value[index];
        self.push("pick", 1, 1, vec![v], Op::Pick(a, index))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.nodes[a.0].value.iter().sum();
        self.push("sum", 1, 1, vec![s], Op::Sum(a))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let (rows, cols) = self.shape(root);
        if rows * cols != 1 {
            return Err(AutodiffError::NonScalarRoot { rows, cols });
        }
        Ok(self.backward_seeded(root, vec![1.0]))
    }

    fn backward_seeded(&self, root: Var, seed: Vec<f64>) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed);
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf | Op::Param(_) | Op::Lookup(..) => {}
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = node.cols;
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = acc(&mut grads, *a, m * k);
                    for i in 0..m {
                        for p in 0..k {
                            ga[i * k + p] += dot(&g[i * n..(i + 1) * n], &bv[p * n..(p + 1) * n]);
                        }
                    }
                    let gb = acc(&mut grads, *b, k * n);
                    for i in 0..m {
                        for p in 0..k {
                            let aip = av[i * k + p];
                            for j in 0..n {
                                gb[p * n + j] += aip * g[i * n + j];
                            }
                        }
                    }
                }
                Op::Affine(w, x, b) => {
                    let (m, k) = self.shape(*w);
                    let wv = self.value(*w);
                    let xv = self.value(*x);
                    let gw = acc(&mut grads, *w, m * k);
                    for i in 0..m {
                        if g[i] == 0.0 {
                            continue;
                        }
                        for (gw, &x) in gw[i * k..(i + 1) * k].iter_mut().zip(xv) {
                            *gw += g[i] * x;
                        }
                    }
                    let gx = acc(&mut grads, *x, k);
                    for i in 0..m {
                        if g[i] == 0.0 {
                            continue;
                        }
                        for (gx, &w) in gx.iter_mut().zip(&wv[i * k..(i + 1) * k]) {
                            *gx += g[i] * w;
                        }
                    }
                    add_into(acc(&mut grads, *b, m), &g);
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                    add_into(acc(&mut grads, *b, g.len()), &g);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g);
                    for (o, &x) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g) {
                        *o -= x;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    for ((o, &x), &y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(bv) {
                        *o += x * y;
                    }
                    for ((o, &x), &y) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g).zip(av) {
                        *o += x * y;
                    }
                }
                Op::Scale(a, k) => {
                    for (o, &x) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *o += x * k;
                    }
                }
                Op::AddScalar(a) => add_into(acc(&mut grads, *a, g.len()), &g),
                Op::Tanh(a) => {
                    for ((o, &x), &y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(&node.value) {
                        *o += x * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    for ((o, &x), &y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(&node.value) {
                        *o += x * y * (1.0 - y);
                    }
                }
                Op::Maximum(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    // Ties route the gradient to the first argument.
                    let mut to_b = vec![0.0; g.len()];
                    {
                        let ga = acc(&mut grads, *a, g.len());
                        for i in 0..g.len() {
                            if av[i] >= bv[i] {
                                ga[i] += g[i];
                            } else {
                                to_b[i] = g[i];
                            }
                        }
                    }
                    add_into(acc(&mut grads, *b, g.len()), &to_b);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let d = self.dim(p);
                        add_into(acc(&mut grads, p, d), &g[offset..offset + d]);
                        offset += d;
                    }
                }
                Op::Slice(a, start) => {
                    let d = self.dim(*a);
                    add_into(&mut acc(&mut grads, *a, d)[*start..*start + g.len()], &g);
                }
                Op::Pick(a, index) => {
                    let d = self.dim(*a);
                    acc(&mut grads, *a, d)[*index] += g[0];
                }
                Op::Sum(a) => {
                    let d = self.dim(*a);
                    for o in acc(&mut grads, *a, d).iter_mut() {
                        *o += g[0];
                    }
                }
            }
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    /// `k x dim(wrt)` Jacobian of the vector `out`, one backward pass per
    /// output component.
    pub fn jacobian(&self, out: Var, wrt: Var) -> Result<Vec<Vec<f64>>> {
        Ok(self.jacobians(out, &[wrt])?.pop().expect("one matrix per wrt"))
    }

    /// Jacobians of `out` with respect to several nodes, sharing the
    /// backward passes.
    pub fn jacobians(&self, out: Var, wrt: &[Var]) -> Result<Vec<Vec<Vec<f64>>>> {
        let (rows, cols) = self.shape(out);
        if cols != 1 {
            return Err(shape_err("jacobian", format!("output is {rows}x{cols}")));
        }
        for &w in wrt {
            if w.0 > out.0 {
                return Err(shape_err("jacobian", format!("node {} created after output", w.0)));
            }
        }
        let mut result: Vec<Vec<Vec<f64>>> = wrt.iter().map(|_| Vec::with_capacity(rows)).collect();
        for j in 0..rows {
            let mut seed = vec![0.0; rows];
            seed[j] = 1.0;
            let grads = self.backward_seeded(out, seed);
            for (m, &w) in result.iter_mut().zip(wrt) {
                m.push(grads.dense(w, self.dim(w)));
            }
        }
        Ok(result)
    }
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a node, or `None` when the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of a node with unreached nodes reported as zeros.
    pub fn dense(&self, v: Var, dim: usize) -> Vec<f64> {
        self.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; dim])
    }

    /// Adds parameter gradients into the store's accumulators.
    pub fn accumulate(&self, tape: &Tape, store: &mut ParameterStore) {
        for (id, node) in tape.nodes.iter().enumerate().take(self.grads.len()) {
            let Some(g) = self.grads[id].as_ref() else { continue };
            match node.op {
                Op::Param(p) => add_into(&mut store.params[p.0].grad, g),
                Op::Lookup(p, row) => {
                    let param = &mut store.params[p.0];
                    let c = param.cols;
                    add_into(&mut param.grad[row * c..(row + 1) * c], g);
                }
                _ => {}
            }
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, dim: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; dim])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn shape_err(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::Shape { op, detail }
}

/// Rounds to the nearest single-precision value; parameters are stored at
/// that precision.
fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Named parameters plus Adam state. Values are kept at single precision.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        ParameterStore::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, value: Vec<f64>) -> ParamId {
        assert_eq!(value.len(), rows * cols, "parameter {name}");
        assert!(self.params.iter().all(|p| p.name != name), "duplicate parameter {name}");
        let n = rows * cols;
        self.params.push(Parameter {
            name: name.to_string(),
            rows,
            cols,
            value: value.into_iter().map(quantize).collect(),
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform initialization in `±sqrt(6 / (rows + cols))`.
    pub fn add_uniform<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let value = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, rows, cols, value)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, rows, cols, vec![0.0; rows * cols])
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Flattened parameter values in declaration order.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f64>]) {
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            p.value.clone_from(s);
        }
    }

    /// Bias-corrected Adam update using the accumulated gradients, which are
    /// cleared afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for p in &mut self.params {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
                p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = p.m[i] / c1;
                let v_hat = p.v[i] / c2;
                p.value[i] = quantize(p.value[i] - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon));
                p.grad[i] = 0.0;
            }
        }
    }
}
