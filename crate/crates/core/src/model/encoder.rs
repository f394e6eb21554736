use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelError, Variant};
use crate::nn::{Attention, Gru, Linear, ParameterSet, Tape, Tensor, Var};

/// Inverted dropout with its own random stream.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Dropout {
        Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn apply(&mut self, t: &mut Tape, x: Var) -> Var {
        if self.rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..t.value(x).len())
            .map(|_| {
                if self.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let m = t.constant(mask);
        t.mul(x, m)
    }
}

/// Token-level BiGRU, self-attention, fusion and max-pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceEncoder {
    pub variant: Variant,
    pub fwd: Gru,
    pub bwd: Gru,
    pub att_fwd: Option<Attention>,
    pub att_bwd: Option<Attention>,
    pub fuse: Linear,
}

impl UtteranceEncoder {
    pub fn new<R: Rng>(
        params: &mut ParameterSet,
        variant: Variant,
        d_embed: usize,
        d_h1: usize,
        rng: &mut R,
    ) -> UtteranceEncoder {
        let fwd = Gru::new(params, "utt.gru_fwd", d_embed, d_h1, rng);
        let bwd = Gru::new(params, "utt.gru_bwd", d_embed, d_h1, rng);
        let (att_fwd, att_bwd) = if variant.uses_attention() {
            (
                Some(Attention::new(params, "utt.att_fwd", d_h1, rng)),
                Some(Attention::new(params, "utt.att_bwd", d_h1, rng)),
            )
        } else {
            (None, None)
        };
        let width = match variant {
            Variant::Base => 2 * d_h1,
            Variant::F => 2 * d_h1 + d_embed,
            Variant::Sf => 4 * d_h1 + d_embed,
        };
        let fuse = Linear::new(params, "utt.fuse", width, d_h1, rng);
        UtteranceEncoder {
            variant,
            fwd,
            bwd,
            att_fwd,
            att_bwd,
            fuse,
        }
    }

    /// Fused per-token vectors `e_c(w_k)`.
    pub fn fused(&self, t: &mut Tape, tokens: &[Var]) -> Vec<Var> {
        let hf = self.fwd.run(t, tokens, false);
        let hb = self.bwd.run(t, tokens, true);
        let (af, ab) = match (&self.att_fwd, &self.att_bwd) {
            (Some(a), Some(b)) => (a.forward(t, &hf, false), b.forward(t, &hb, false)),
            _ => (Vec::new(), Vec::new()),
        };
        (0..tokens.len())
            .map(|k| {
                let cat = match self.variant {
                    Variant::Base => t.concat(&[hf[k], hb[k]]),
                    Variant::F => t.concat(&[hf[k], tokens[k], hb[k]]),
                    Variant::Sf => t.concat(&[af[k], hf[k], tokens[k], hb[k], ab[k]]),
                };
                let z = self.fuse.forward(t, cat);
                t.tanh(z)
            })
            .collect()
    }

    /// `e(u) = max_k e_c(w_k)`.
    pub fn forward(&self, t: &mut Tape, tokens: &[Var]) -> Var {
        let fused = self.fused(t, tokens);
        t.max_pool(&fused)
    }

    /// Embedding of one utterance given its token vectors.
    pub fn encode(&self, params: &ParameterSet, tokens: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::Empty("utterance has no tokens"));
        }
        let d = self.fwd.input;
        if let Some(bad) = tokens.iter().find(|v| v.len() != d) {
            return Err(ModelError::Shape(format!(
                "token vector of width {}, encoder expects {d}",
                bad.len()
            )));
        }
        let mut t = Tape::new(params);
        let toks: Vec<Var> = tokens.iter().map(|v| t.constant(v.clone())).collect();
        let out = self.forward(&mut t, &toks);
        Ok(t.value(out).to_vec())
    }
}

/// Scaled dot-product self-attention with explicit projections, evaluated
/// outside any model. With `causal`, position `i` attends to `0..=i`.
pub fn self_attention(
    states: &[Vec<f64>],
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    causal: bool,
) -> Result<Vec<Vec<f64>>, ModelError> {
    let Some(first) = states.first() else {
        return Err(ModelError::Empty("attention over no states"));
    };
    let d = first.len();
    if states.iter().any(|s| s.len() != d) {
        return Err(ModelError::Shape("states of differing width".into()));
    }
    for (name, w) in [("wq", wq), ("wk", wk), ("wv", wv)] {
        if w.shape() != (d, d) {
            return Err(ModelError::Shape(format!(
                "{name} is {:?}, expected ({d}, {d})",
                w.shape()
            )));
        }
    }
    let mut params = ParameterSet::default();
    let att = Attention {
        wq: params.insert("wq", wq.clone()),
        wk: params.insert("wk", wk.clone()),
        wv: params.insert("wv", wv.clone()),
        dim: d,
    };
    let mut t = Tape::new(&params);
    let vars: Vec<Var> = states.iter().map(|s| t.constant(s.clone())).collect();
    let out = att.forward(&mut t, &vars, causal);
    Ok(out.iter().map(|v| t.value(*v).to_vec()).collect())
}
