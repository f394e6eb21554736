use rand::Rng;

use super::params::{ParamId, ParameterSet, Tensor};
use super::tape::{Tape, Var};

/// Affine map `W x + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng>(params: &mut ParameterSet, name: &str, input: usize, output: usize, rng: &mut R) -> Linear {
        let w = params.insert(&format!("{name}.w"), Tensor::xavier(output, input, rng));
        let b = params.insert(&format!("{name}.b"), Tensor::zeros(output, 1));
        Linear { w, b, input, output }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let (w, b) = (t.param(self.w), t.param(self.b));
        let wx = t.matvec(w, x);
        t.add(wx, b)
    }
}

/// Gated recurrent unit with gates ordered reset, update, candidate:
///
/// ```text
/// r = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gru {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new<R: Rng>(params: &mut ParameterSet, name: &str, input: usize, hidden: usize, rng: &mut R) -> Gru {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut reg = |suffix: &str, rows, cols, rng: &mut R| {
            params.insert(&format!("{name}.{suffix}"), Tensor::uniform(rows, cols, k, rng))
        };
        Gru {
            w_ih: reg("w_ih", 3 * hidden, input, rng),
            w_hh: reg("w_hh", 3 * hidden, hidden, rng),
            b_ih: reg("b_ih", 3 * hidden, 1, rng),
            b_hh: reg("b_hh", 3 * hidden, 1, rng),
            input,
            hidden,
        }
    }

    pub fn step(&self, t: &mut Tape, x: Var, h: Var) -> Var {
        let hd = self.hidden;
        let (w_ih, w_hh) = (t.param(self.w_ih), t.param(self.w_hh));
        let (b_ih, b_hh) = (t.param(self.b_ih), t.param(self.b_hh));
        let gi = t.matvec(w_ih, x);
        let gi = t.add(gi, b_ih);
        let gh = t.matvec(w_hh, h);
        let gh = t.add(gh, b_hh);

        let (ir, hr) = (t.slice(gi, 0, hd), t.slice(gh, 0, hd));
        let r = t.add(ir, hr);
        let r = t.sigmoid(r);
        let (iz, hz) = (t.slice(gi, hd, hd), t.slice(gh, hd, hd));
        let z = t.add(iz, hz);
        let z = t.sigmoid(z);
        let (inn, hn) = (t.slice(gi, 2 * hd, hd), t.slice(gh, 2 * hd, hd));
        let gated = t.mul(r, hn);
        let n = t.add(inn, gated);
        let n = t.tanh(n);
        // h' = n + z ⊙ (h − n)
        let diff = t.sub(h, n);
        let zd = t.mul(z, diff);
        t.add(n, zd)
    }

    /// Hidden states aligned with `xs`, starting from a zero state. With
    /// `reverse` the recurrence runs right to left.
    pub fn run(&self, t: &mut Tape, xs: &[Var], reverse: bool) -> Vec<Var> {
        let mut h = t.constant(vec![0.0; self.hidden]);
        let mut out = vec![h; xs.len()];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..xs.len()).rev())
        } else {
            Box::new(0..xs.len())
        };
        for i in order {
            h = self.step(t, xs[i], h);
            out[i] = h;
        }
        out
    }
}

/// Single-head scaled dot-product self-attention with learned query, key
/// and value projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attention {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub dim: usize,
}

impl Attention {
    pub fn new<R: Rng>(params: &mut ParameterSet, name: &str, dim: usize, rng: &mut R) -> Attention {
        Attention {
            wq: params.insert(&format!("{name}.wq"), Tensor::xavier(dim, dim, rng)),
            wk: params.insert(&format!("{name}.wk"), Tensor::xavier(dim, dim, rng)),
            wv: params.insert(&format!("{name}.wv"), Tensor::xavier(dim, dim, rng)),
            dim,
        }
    }

    /// `out_i = Σ_k softmax_k(⟨q_i, k_k⟩ / √d) v_k`, where `k` ranges over
    /// all positions, or over positions `≤ i` when `causal`.
    pub fn forward(&self, t: &mut Tape, states: &[Var], causal: bool) -> Vec<Var> {
        let (wq, wk, wv) = (t.param(self.wq), t.param(self.wk), t.param(self.wv));
        let scale = 1.0 / (self.dim as f64).sqrt();
        let qs: Vec<Var> = states.iter().map(|s| t.matvec(wq, *s)).collect();
        let ks: Vec<Var> = states.iter().map(|s| t.matvec(wk, *s)).collect();
        let vs: Vec<Var> = states.iter().map(|s| t.matvec(wv, *s)).collect();
        (0..states.len())
            .map(|i| {
                let upto = if causal { i + 1 } else { states.len() };
                let scores: Vec<Var> = (0..upto)
                    .map(|k| {
                        let d = t.dot(qs[i], ks[k]);
                        t.scale(d, scale)
                    })
                    .collect();
                let scores = t.stack(&scores);
                let weights = t.softmax(scores);
                t.weighted_sum(weights, &vs[..upto])
            })
            .collect()
    }
}
