//! Reverse-mode automatic differentiation over dense `f64` vectors.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! borrowed from a [`ParameterSet`] rather than copied; their gradients are
//! accumulated into a [`Gradients`] buffer by [`Tape::backward`].

use super::params::{Gradients, ParamId, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Value {
    Owned(Vec<f64>),
    Param(ParamId),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    /// Elementwise max; stores the winning input per coordinate.
    MaxPool(Vec<Var>, Vec<usize>),
    Dot(Var, Var),
    Scale(Var, f64),
    Affine(Var, f64),
    Stack(Vec<Var>),
    Sum(Var),
    Softmax(Var),
    WeightedSum(Var, Vec<Var>),
    Pick(Var, usize),
    Ln(Var, f64),
    Square(Var),
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParameterSet,
    nodes: Vec<Node>,
    bound: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParameterSet) -> Tape<'p> {
        Tape {
            params,
            nodes: Vec::new(),
            bound: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].value {
            Value::Owned(x) => x,
            Value::Param(id) => &self.params.get(*id).data,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let x = self.value(v);
        debug_assert_eq!(x.len(), 1);
        x[0]
    }

    /// A constant input.
    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// The tape node for a parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
        });
        let v = Var(self.nodes.len() - 1);
        self.bound[id.index()] = Some(v);
        v
    }

    fn matrix_shape(&self, w: Var) -> (usize, usize) {
        match &self.nodes[w.0].value {
            Value::Param(id) => {
                let t = self.params.get(*id);
                (t.rows, t.cols)
            }
            Value::Owned(_) => panic!("matvec expects a parameter matrix"),
        }
    }

    /// `W x` for a parameter matrix `W`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (rows, cols) = self.matrix_shape(w);
        let wv = self.value(w);
        let xv = self.value(x);
        assert_eq!(xv.len(), cols, "matvec: input width {} vs {cols} columns", xv.len());
        let out: Vec<f64> = wv
            .chunks_exact(cols)
            .take(rows)
            .map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        self.push(out, Op::MatVec(w, x))
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.len(), bv.len(), "elementwise op on mismatched lengths");
        let out = av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect();
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        self.push(out, op)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    /// Elementwise `m * a + c`.
    pub fn affine(&mut self, a: Var, m: f64, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| m * x + c).collect();
        self.push(out, Op::Affine(a, m))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    /// `ln(max(a, floor))`; the gradient is zero where the floor applies.
    pub fn ln_floor(&mut self, a: Var, floor: f64) -> Var {
        self.map(a, |x| x.max(floor).ln(), Op::Ln(a, floor))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(self.value(*p));
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a)[start..start + len].to_vec();
        self.push(out, Op::Slice(a, start))
    }

    pub fn max_pool(&mut self, inputs: &[Var]) -> Var {
        assert!(!inputs.is_empty(), "max_pool over no inputs");
        let n = self.value(inputs[0]).len();
        let mut out = self.value(inputs[0]).to_vec();
        let mut arg = vec![0usize; n];
        for (k, v) in inputs.iter().enumerate().skip(1) {
            for (j, x) in self.value(*v).iter().enumerate() {
                if *x > out[j] {
                    out[j] = *x;
                    arg[j] = k;
                }
            }
        }
        self.push(out, Op::MaxPool(inputs.to_vec(), arg))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let s = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        self.push(vec![s], Op::Dot(a, b))
    }

    /// Collect scalars into one vector.
    pub fn stack(&mut self, scalars: &[Var]) -> Var {
        let out = scalars.iter().map(|s| self.scalar(*s)).collect();
        self.push(out, Op::Stack(scalars.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![s], Op::Sum(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let out = softmax(self.value(a));
        self.push(out, Op::Softmax(a))
    }

    /// `Σ_k weights[k] * values[k]`.
    pub fn weighted_sum(&mut self, weights: Var, values: &[Var]) -> Var {
        let w = self.value(weights).to_vec();
        assert_eq!(w.len(), values.len());
        let mut out = vec![0.0; self.value(values[0]).len()];
        for (wk, v) in w.iter().zip(values) {
            for (o, x) in out.iter_mut().zip(self.value(*v)) {
                *o += wk * x;
            }
        }
        self.push(out, Op::WeightedSum(weights, values.to_vec()))
    }

    pub fn pick(&mut self, a: Var, i: usize) -> Var {
        let x = self.value(a)[i];
        self.push(vec![x], Op::Pick(a, i))
    }

    /// Gradients of the scalar `root` with respect to every parameter used.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads = Gradients::zeros_like(self.params);
        self.backward_into(root, 1.0, &mut grads);
        grads
    }

    /// Accumulate `seed * d root / d params` into `grads`.
    pub fn backward_into(&self, root: Var, seed: f64, grads: &mut Gradients) {
        assert_eq!(self.value(root).len(), 1, "backward from a non-scalar");
        let mut g: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[root.0] = Some(vec![seed]);

        fn acc(g: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            g[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=root.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    if let Value::Param(id) = node.value {
                        for (d, x) in grads.get_mut(id).iter_mut().zip(&gi) {
                            *d += x;
                        }
                    }
                }
                Op::MatVec(w, x) => {
                    let (rows, cols) = self.matrix_shape(*w);
                    let wv = self.value(*w);
                    let xv = self.value(*x);
                    if let Value::Param(id) = self.nodes[w.0].value {
                        let gw = grads.get_mut(id);
                        for r in 0..rows {
                            let gr = gi[r];
                            if gr == 0.0 {
                                continue;
                            }
                            let row = &mut gw[r * cols..(r + 1) * cols];
                            for (d, xc) in row.iter_mut().zip(xv) {
                                *d += gr * xc;
                            }
                        }
                    }
                    let gx = acc(&mut g, *x, cols);
                    for r in 0..rows {
                        let gr = gi[r];
                        if gr == 0.0 {
                            continue;
                        }
                        for (d, wrc) in gx.iter_mut().zip(&wv[r * cols..(r + 1) * cols]) {
                            *d += gr * wrc;
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut g, *a, gi.len()), &gi, 1.0);
                    add_into(acc(&mut g, *b, gi.len()), &gi, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut g, *a, gi.len()), &gi, 1.0);
                    add_into(acc(&mut g, *b, gi.len()), &gi, -1.0);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = acc(&mut g, *a, gi.len());
                    for k in 0..gi.len() {
                        ga[k] += gi[k] * bv[k];
                    }
                    let gb = acc(&mut g, *b, gi.len());
                    for k in 0..gi.len() {
                        gb[k] += gi[k] * av[k];
                    }
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(i));
                    let ga = acc(&mut g, *a, gi.len());
                    for k in 0..gi.len() {
                        ga[k] += gi[k] * (1.0 - y[k] * y[k]);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = self.value(Var(i));
                    let ga = acc(&mut g, *a, gi.len());
                    for k in 0..gi.len() {
                        ga[k] += gi[k] * y[k] * (1.0 - y[k]);
                    }
                }
                Op::Scale(a, c) | Op::Affine(a, c) => {
                    add_into(acc(&mut g, *a, gi.len()), &gi, *c);
                }
                Op::Square(a) => {
                    let av = self.value(*a);
                    let ga = acc(&mut g, *a, gi.len());
                    for k in 0..gi.len() {
                        ga[k] += 2.0 * av[k] * gi[k];
                    }
                }
                Op::Ln(a, floor) => {
                    let av = self.value(*a);
                    let ga = acc(&mut g, *a, gi.len());
                    for k in 0..gi.len() {
                        if av[k] > *floor {
                            ga[k] += gi[k] / av[k];
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        add_into(acc(&mut g, *p, n), &gi[off..off + n], 1.0);
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = self.value(*a).len();
                    let ga = acc(&mut g, *a, n);
                    add_into(&mut ga[*start..start + gi.len()], &gi, 1.0);
                }
                Op::MaxPool(inputs, arg) => {
                    for (j, &k) in arg.iter().enumerate() {
                        acc(&mut g, inputs[k], gi.len())[j] += gi[j];
                    }
                }
                Op::Dot(a, b) => {
                    let s = gi[0];
                    let (av, bv) = (self.value(*a), self.value(*b));
                    add_into(acc(&mut g, *a, bv.len()), bv, s);
                    add_into(acc(&mut g, *b, av.len()), av, s);
                }
                Op::Stack(scalars) => {
                    for (k, s) in scalars.iter().enumerate() {
                        acc(&mut g, *s, 1)[0] += gi[k];
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    for d in acc(&mut g, *a, n).iter_mut() {
                        *d += gi[0];
                    }
                }
                Op::Softmax(a) => {
                    let y = self.value(Var(i));
                    let inner: f64 = gi.iter().zip(y).map(|(gk, yk)| gk * yk).sum();
                    let ga = acc(&mut g, *a, gi.len());
                    for k in 0..gi.len() {
                        ga[k] += y[k] * (gi[k] - inner);
                    }
                }
                Op::WeightedSum(w, values) => {
                    let wv = self.value(*w);
                    let mut gw = vec![0.0; values.len()];
                    for (k, v) in values.iter().enumerate() {
                        gw[k] = self.value(*v).iter().zip(&gi).map(|(x, y)| x * y).sum();
                        add_into(acc(&mut g, *v, gi.len()), &gi, wv[k]);
                    }
                    add_into(acc(&mut g, *w, values.len()), &gw, 1.0);
                }
                Op::Pick(a, idx) => {
                    let n = self.value(*a).len();
                    acc(&mut g, *a, n)[*idx] += gi[0];
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Tensor;

    /// Central-difference check of d(out)/d(param) for a closure that
    /// builds a scalar on a fresh tape.
    fn check(params: &mut ParameterSet, f: impl Fn(&mut Tape) -> Var) {
        let analytic = {
            let mut tape = Tape::new(params);
            let out = f(&mut tape);
            tape.backward(out)
        };
        let h = 1e-6;
        for id in params.ids().collect::<Vec<_>>() {
            for k in 0..params.get(id).data.len() {
                let orig = params.get(id).data[k];
                params.get_mut(id).data[k] = orig + h;
                let plus = {
                    let mut t = Tape::new(params);
                    let o = f(&mut t);
                    t.scalar(o)
                };
                params.get_mut(id).data[k] = orig - h;
                let minus = {
                    let mut t = Tape::new(params);
                    let o = f(&mut t);
                    t.scalar(o)
                };
                params.get_mut(id).data[k] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic.get(id)[k];
                assert!(
                    (a - numeric).abs() <= 1e-6 * a.abs().max(numeric.abs()).max(1.0),
                    "param {} [{k}]: analytic {a} numeric {numeric}",
                    params.name(id)
                );
            }
        }
    }

    fn small_params() -> ParameterSet {
        let mut p = ParameterSet::default();
        p.insert("w", Tensor::from_rows(2, 3, vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.6]));
        p.insert("v", Tensor::vector(vec![0.7, -0.1, 0.2]));
        p.insert("u", Tensor::vector(vec![0.25, -0.4]));
        p
    }

    #[test]
    fn elementwise_chain() {
        let mut p = small_params();
        let (w, v, u) = (p.id("w").unwrap(), p.id("v").unwrap(), p.id("u").unwrap());
        check(&mut p, |t| {
            let (w, v, u) = (t.param(w), t.param(v), t.param(u));
            let wx = t.matvec(w, v);
            let a = t.tanh(wx);
            let b = t.sigmoid(u);
            let c = t.mul(a, b);
            let d = t.sub(c, u);
            let e = t.square(d);
            let f = t.affine(e, -2.0, 1.0);
            let s = t.scale(f, 0.5);
            let cat = t.concat(&[s, v]);
            let sl = t.slice(cat, 1, 3);
            t.sum(sl)
        });
    }

    #[test]
    fn attention_like_ops() {
        let mut p = small_params();
        let (w, v, u) = (p.id("w").unwrap(), p.id("v").unwrap(), p.id("u").unwrap());
        check(&mut p, |t| {
            let (w, v, u) = (t.param(w), t.param(v), t.param(u));
            let a = t.matvec(w, v);
            let b = t.tanh(u);
            let d1 = t.dot(a, b);
            let d2 = t.dot(a, u);
            let scores = t.stack(&[d1, d2]);
            let weights = t.softmax(scores);
            let mix = t.weighted_sum(weights, &[a, b]);
            let pooled = t.max_pool(&[mix, b, u]);
            let p0 = t.pick(pooled, 0);
            let probs = t.softmax(pooled);
            let pk = t.pick(probs, 1);
            let l = t.ln_floor(pk, 1e-12);
            let s = t.add(l, p0);
            t.sum(s)
        });
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut p = ParameterSet::default();
        let x = p.insert("x", Tensor::vector(vec![3.0]));
        let tape_grad = {
            let mut t = Tape::new(&p);
            let a = t.param(x);
            let b = t.param(x);
            assert_eq!(a, b);
            let sq = t.mul(a, b);
            let out = t.add(sq, a);
            t.backward(out)
        };
        // d(x^2 + x)/dx at 3
        assert_eq!(tape_grad.get(x), &[7.0]);
    }

    #[test]
    fn softmax_is_stable() {
        let s = softmax(&[1000.0, 1000.0]);
        assert_eq!(s, vec![0.5, 0.5]);
        let s = softmax(&[2.0, 0.0]);
        assert!((s[0] - 0.880797).abs() < 1e-6 && (s[1] - 0.119203).abs() < 1e-6);
    }
}
