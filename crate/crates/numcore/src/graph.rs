//! Reverse-mode tape.
//!
//! A [`Graph`] borrows a [`ParamStore`] and records every op in creation
//! order. Parameters are bound lazily the first time a name is requested and
//! reused afterwards, so one parameter has exactly one leaf per graph. The
//! backward pass walks the tape in reverse and accumulates in that fixed
//! order, which keeps gradients bitwise reproducible between runs.

use crate::array::ParamStore;
use crate::{NumError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddN(Vec<Var>),
    Scale(Var, f64),
    OneMinus(Var),
    Tanh(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Sum(Var),
    Row(Var, usize),
    LogSoftmax(Var),
    LogSoftmaxSubset(Var, Vec<usize>),
    Pick(Var, usize),
    MaxN(Vec<Var>, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

/// Parameter gradients produced by [`Graph::backward`], keyed by store index.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    entries: Vec<(usize, Vec<f64>)>,
}

impl Gradients {
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.entries.iter().map(|(i, g)| (*i, g.as_slice()))
    }

    pub fn get(&self, param: usize) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|(i, _)| *i == param)
            .map(|(_, g)| g.as_slice())
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    bound: Vec<Option<Var>>,
}

fn check_finite(op: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NumError::NonFinite { op })
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            bound: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        let idx = self.params.index_of(name)?;
        if let Some(v) = self.bound[idx] {
            return Ok(v);
        }
        let (_, arr) = self.params.by_index(idx);
        let v = self.push(arr.shape().to_vec(), arr.data().to_vec(), Op::Param);
        self.bound[idx] = Some(v);
        Ok(v)
    }

    /// Constant input vector.
    pub fn input(&mut self, data: Vec<f64>) -> Result<Var> {
        if data.is_empty() {
            return Err(NumError::shape("input", "empty input"));
        }
        check_finite("input", &data)?;
        Ok(self.push(vec![data.len()], data, Op::Leaf))
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() || data.is_empty() {
            return Err(NumError::shape("constant", format!("{shape:?} vs {}", data.len())));
        }
        check_finite("constant", &data)?;
        Ok(self.push(shape, data, Op::Leaf))
    }

    pub fn zeros(&mut self, len: usize) -> Result<Var> {
        self.input(vec![0.0; len])
    }

    /// `a` of shape `[r, k]` times `b` of shape `[k]` or `[k, c]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 {
            return Err(NumError::shape("matmul", format!("lhs must be rank 2, got {sa:?}")));
        }
        let (r, k) = (sa[0], sa[1]);
        if sb[0] != k || sb.len() > 2 {
            return Err(NumError::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let matrix = sb.len() == 2;
        let c = if matrix { sb[1] } else { 1 };
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let out: Vec<f64> = if matrix {
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                let arow = &av[i * k..(i + 1) * k];
                let orow = &mut out[i * c..(i + 1) * c];
                for (kk, &aik) in arow.iter().enumerate() {
                    if aik == 0.0 {
                        continue;
                    }
                    for (o, &b) in orow.iter_mut().zip(&bv[kk * c..(kk + 1) * c]) {
                        *o += aik * b;
                    }
                }
            }
            out
        } else {
            av.chunks_exact(k)
                .map(|row| row.iter().zip(bv).fold(0.0, |acc, (x, y)| acc + x * y))
                .collect()
        };
        check_finite("matmul", &out)?;
        let shape = if matrix { vec![r, c] } else { vec![r] };
        Ok(self.push(shape, out, Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(NumError::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        check_finite(name, &out)?;
        Ok(self.push(self.shape(a).to_vec(), out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| NumError::shape("add_n", "no operands"))?;
        let mut out = self.value(first).to_vec();
        for &x in &xs[1..] {
            self.same_shape("add_n", first, x)?;
            for (o, v) in out.iter_mut().zip(self.value(x)) {
                *o += v;
            }
        }
        check_finite("add_n", &out)?;
        Ok(self.push(self.shape(first).to_vec(), out, Op::AddN(xs.to_vec())))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out: Vec<f64> = self.value(a).iter().map(|x| x * s).collect();
        check_finite("scale", &out)?;
        Ok(self.push(self.shape(a).to_vec(), out, Op::Scale(a, s)))
    }

    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let out: Vec<f64> = self.value(a).iter().map(|x| 1.0 - x).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::OneMinus(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out: Vec<f64> = self.value(a).iter().map(|x| x.tanh()).collect();
        check_finite("tanh", &out)?;
        Ok(self.push(self.shape(a).to_vec(), out, Op::Tanh(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .map(|&x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            })
            .collect();
        check_finite("sigmoid", &out)?;
        Ok(self.push(self.shape(a).to_vec(), out, Op::Sigmoid(a)))
    }

    /// Concatenates rank-1 nodes.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(NumError::shape("concat", "no operands"));
        }
        let mut out = Vec::new();
        for &x in xs {
            if self.shape(x).len() != 1 {
                return Err(NumError::shape(
                    "concat",
                    format!("rank-1 only, got {:?}", self.shape(x)),
                ));
            }
            out.extend_from_slice(self.value(x));
        }
        Ok(self.push(vec![out.len()], out, Op::Concat(xs.to_vec())))
    }

    /// Sum of all elements, as a one-element node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).iter().sum();
        check_finite("sum", &[s])?;
        Ok(self.push(vec![1], vec![s], Op::Sum(a)))
    }

    /// Row `i` of a rank-2 node (embedding lookup).
    pub fn row(&mut self, table: Var, i: usize) -> Result<Var> {
        let shape = self.shape(table);
        if shape.len() != 2 || i >= shape[0] {
            return Err(NumError::shape("row", format!("row {i} of {shape:?}")));
        }
        let cols = shape[1];
        let out = self.value(table)[i * cols..(i + 1) * cols].to_vec();
        Ok(self.push(vec![cols], out, Op::Row(table, i)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        if self.shape(a).len() != 1 {
            return Err(NumError::shape("log_softmax", "rank-1 only"));
        }
        let out = log_softmax_values(self.value(a));
        check_finite("log_softmax", &out)?;
        Ok(self.push(self.shape(a).to_vec(), out, Op::LogSoftmax(a)))
    }

    /// Log-softmax restricted to `indices`; the output has one entry per
    /// index, in the given order, and every other logit is ignored.
    pub fn log_softmax_subset(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let len = self.value(a).len();
        if indices.is_empty() || indices.iter().any(|&i| i >= len) {
            return Err(NumError::shape(
                "log_softmax_subset",
                format!("{} indices into length {len}", indices.len()),
            ));
        }
        let picked: Vec<f64> = indices.iter().map(|&i| self.value(a)[i]).collect();
        let out = log_softmax_values(&picked);
        check_finite("log_softmax_subset", &out)?;
        Ok(self.push(vec![indices.len()], out, Op::LogSoftmaxSubset(a, indices.to_vec())))
    }

    /// Element `i` as a one-element node.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let v = *self
            .value(a)
            .get(i)
            .ok_or_else(|| NumError::shape("pick", format!("index {i} out of range")))?;
        Ok(self.push(vec![1], vec![v], Op::Pick(a, i)))
    }

    /// Elementwise maximum over equally shaped nodes; ties go to the first.
    pub fn max_n(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| NumError::shape("max_n", "no operands"))?;
        let mut out = self.value(first).to_vec();
        let mut arg = vec![0usize; out.len()];
        for (j, &x) in xs.iter().enumerate().skip(1) {
            self.same_shape("max_n", first, x)?;
            for (k, &v) in self.value(x).iter().enumerate() {
                if v > out[k] {
                    out[k] = v;
                    arg[k] = j;
                }
            }
        }
        Ok(self.push(self.shape(first).to_vec(), out, Op::MaxN(xs.to_vec(), arg)))
    }

    /// Backpropagates from a one-element node and returns parameter gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(NumError::shape("backward", "loss must be a single value"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let sa = &self.nodes[a.0].shape;
                    let sb = &self.nodes[b.0].shape;
                    let (r, k) = (sa[0], sa[1]);
                    let c = if sb.len() == 2 { sb[1] } else { 1 };
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    {
                        let ga = acc(&mut grads, *a, r * k);
                        for i in 0..r {
                            let gi = &g[i * c..(i + 1) * c];
                            for kk in 0..k {
                                let brow = &bv[kk * c..(kk + 1) * c];
                                let s: f64 = gi.iter().zip(brow).map(|(x, y)| x * y).sum();
                                ga[i * k + kk] += s;
                            }
                        }
                    }
                    let gb = acc(&mut grads, *b, k * c);
                    for i in 0..r {
                        let gi = &g[i * c..(i + 1) * c];
                        for kk in 0..k {
                            let aik = av[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            let row = &mut gb[kk * c..(kk + 1) * c];
                            for (o, &x) in row.iter_mut().zip(gi) {
                                *o += aik * x;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut grads, *b, g.len()), &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut grads, *b, g.len()), &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    {
                        let ga = acc(&mut grads, *a, g.len());
                        for ((o, gi), y) in ga.iter_mut().zip(&g).zip(bv) {
                            *o += gi * y;
                        }
                    }
                    let gb = acc(&mut grads, *b, g.len());
                    for ((o, gi), x) in gb.iter_mut().zip(&g).zip(av) {
                        *o += gi * x;
                    }
                }
                Op::AddN(xs) => {
                    for x in xs {
                        add_into(acc(&mut grads, *x, g.len()), &g, 1.0);
                    }
                }
                Op::Scale(a, s) => add_into(acc(&mut grads, *a, g.len()), &g, *s),
                Op::OneMinus(a) => add_into(acc(&mut grads, *a, g.len()), &g, -1.0),
                Op::Tanh(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, gi), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *o += gi * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, gi), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *o += gi * y * (1.0 - y);
                    }
                }
                Op::Concat(xs) => {
                    let mut off = 0;
                    for x in xs {
                        let n = self.nodes[x.0].value.len();
                        add_into(acc(&mut grads, *x, n), &g[off..off + n], 1.0);
                        off += n;
                    }
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.len();
                    acc(&mut grads, *a, n).iter_mut().for_each(|o| *o += g[0]);
                }
                Op::Row(t, i) => {
                    let n = self.nodes[t.0].value.len();
                    let cols = g.len();
                    let gt = acc(&mut grads, *t, n);
                    add_into(&mut gt[i * cols..(i + 1) * cols], &g, 1.0);
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.iter().sum();
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, gi), y) in ga.iter_mut().zip(&g).zip(&node.value) {
                        *o += gi - y.exp() * total;
                    }
                }
                Op::LogSoftmaxSubset(a, indices) => {
                    let total: f64 = g.iter().sum();
                    let n = self.nodes[a.0].value.len();
                    let ga = acc(&mut grads, *a, n);
                    for ((&i, gi), y) in indices.iter().zip(&g).zip(&node.value) {
                        ga[i] += gi - y.exp() * total;
                    }
                }
                Op::Pick(a, i) => {
                    let n = self.nodes[a.0].value.len();
                    acc(&mut grads, *a, n)[*i] += g[0];
                }
                Op::MaxN(xs, arg) => {
                    for (k, &j) in arg.iter().enumerate() {
                        let x = xs[j];
                        let n = self.nodes[x.0].value.len();
                        acc(&mut grads, x, n)[k] += g[k];
                    }
                }
            }
        }

        let mut entries = Vec::new();
        for (pidx, bound) in self.bound.iter().enumerate() {
            if let Some(v) = bound {
                if let Some(g) = grads.get_mut(v.0).and_then(Option::take) {
                    check_finite("backward", &g)?;
                    entries.push((pidx, g));
                }
            }
        }
        Ok(Gradients { entries })
    }
}

fn add_into(dst: &mut [f64], src: &[f64], s: f64) {
    for (d, v) in dst.iter_mut().zip(src) {
        *d += s * v;
    }
}

fn log_softmax_values(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array;
    use crate::gradcheck::finite_diff_check;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn store_with(entries: &[(&str, &[usize])], seed: u64) -> ParamStore {
        let mut rng = Rng::seed_from_u64(seed);
        let mut s = ParamStore::new(seed);
        for (name, shape) in entries {
            s.insert(*name, Array::randn(shape, 0.7, &mut rng)).unwrap();
        }
        s
    }

    #[test]
    fn log_softmax_of_uniform_logits() {
        let s = ParamStore::new(0);
        let mut g = Graph::new(&s);
        let x = g.input(vec![0.0, 0.0, 0.0]).unwrap();
        let y = g.log_softmax(x).unwrap();
        for v in g.value(y) {
            assert!((v + 3f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn add_zero_is_identity() {
        let s = ParamStore::new(0);
        let mut g = Graph::new(&s);
        let x = g.input(vec![1.5, -2.0, 0.25]).unwrap();
        let z = g.zeros(3).unwrap();
        let y = g.add(x, z).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn tanh_derivative_at_zero_is_one() {
        let mut s = ParamStore::new(0);
        s.insert("x", Array::zeros(&[1])).unwrap();
        let mut g = Graph::new(&s);
        let x = g.param("x").unwrap();
        let y = g.tanh(x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(0).unwrap(), &[1.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let s = ParamStore::new(0);
        let mut g = Graph::new(&s);
        let a = g.input(vec![1.0, 2.0]).unwrap();
        let b = g.input(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(g.add(a, b), Err(NumError::Shape { .. })));
        let m = g.constant(vec![2, 2], vec![1.0; 4]).unwrap();
        assert!(matches!(g.matmul(m, b), Err(NumError::Shape { .. })));
    }

    #[test]
    fn overflow_is_a_numeric_error() {
        let s = ParamStore::new(0);
        let mut g = Graph::new(&s);
        let a = g.input(vec![1e300]).unwrap();
        assert!(matches!(g.scale(a, 1e10), Err(NumError::NonFinite { .. })));
    }

    #[test]
    fn subset_log_softmax_ignores_other_logits() {
        let s = ParamStore::new(0);
        let mut g = Graph::new(&s);
        let a = g.input(vec![5.0, 0.0, -3.0, 0.0]).unwrap();
        let y = g.log_softmax_subset(a, &[1, 3]).unwrap();
        for v in g.value(y) {
            assert!((v + 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn reused_param_is_bound_once() {
        let s = store_with(&[("w", &[2])], 1);
        let mut g = Graph::new(&s);
        let a = g.param("w").unwrap();
        let b = g.param("w").unwrap();
        assert_eq!(a, b);
        let p = g.mul(a, b).unwrap();
        let l = g.sum(p).unwrap();
        let grads = g.backward(l).unwrap();
        let w = s.get("w").unwrap().data();
        let gw = grads.get(0).unwrap();
        for i in 0..2 {
            assert!((gw[i] - 2.0 * w[i]).abs() < 1e-14);
        }
    }

    /// Exercises every op through a random composite scalar function.
    fn composite(g: &mut Graph) -> Result<Var> {
        let w = g.param("w")?;
        let m = g.param("m")?;
        let x = g.param("x")?;
        let e = g.param("emb")?;
        let r0 = g.row(e, 1)?;
        let r1 = g.row(e, 2)?;
        let c = g.concat(&[x, r0])?;
        let h = g.matmul(w, c)?;
        let t = g.tanh(h)?;
        let s = g.sigmoid(h)?;
        let om = g.one_minus(s)?;
        let p = g.mul(t, om)?;
        let q = g.sub(p, s)?;
        let mx = g.max_n(&[t, q, p])?;
        let mm = g.matmul(m, w)?; // [2,3] x [3,5]
        let mmv = g.matmul(mm, c)?;
        let mmv = g.scale(mmv, 0.3)?;
        let sum = g.add_n(&[mx, t, q])?;
        let cat = g.concat(&[sum, mmv, r1])?;
        let ls = g.log_softmax(cat)?;
        let sub = g.log_softmax_subset(cat, &[0, 2, 4])?;
        let a = g.pick(ls, 1)?;
        let b = g.pick(sub, 2)?;
        let tot = g.sum(sub)?;
        let ab = g.add(a, b)?;
        let ab = g.add(ab, tot)?;
        g.scale(ab, -1.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn every_op_passes_gradient_check(seed in 0u64..1_000_000) {
            let s = store_with(
                &[("w", &[3, 5]), ("m", &[2, 3]), ("x", &[3]), ("emb", &[4, 2])],
                seed,
            );
            let report = finite_diff_check(&s, 1e-5, composite).unwrap();
            prop_assert!(report.max_rel_error < 1e-4, "{report:?}");
        }

        #[test]
        fn log_softmax_normalises(xs in proptest::collection::vec(-30.0f64..30.0, 1..12)) {
            let s = ParamStore::new(0);
            let mut g = Graph::new(&s);
            let x = g.input(xs).unwrap();
            let y = g.log_softmax(x).unwrap();
            let total: f64 = g.value(y).iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
