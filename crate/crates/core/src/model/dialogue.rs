use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{Dropout, UtteranceEncoder};
use super::{Architecture, ModelError, Variant};
use crate::nn::{sigmoid, Attention, Gru, Linear, ParameterSet, Tape, Var};
use crate::taxonomy::{label_space, FaceAct};

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DonationLossKind {
    #[default]
    Mse,
    Bce,
}

impl std::str::FromStr for DonationLossKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(DonationLossKind::Mse),
            "bce" => Ok(DonationLossKind::Bce),
            _ => Err(ModelError::Config(format!("unknown donation loss {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceActPrediction {
    pub probs: Vec<f64>,
    pub label: FaceAct,
}

impl FaceActPrediction {
    pub fn from_probs(probs: Vec<f64>, space: &[FaceAct]) -> FaceActPrediction {
        let best = argmax(&probs);
        FaceActPrediction {
            label: space[best],
            probs,
        }
    }
}

/// Index of the largest value; the first one on ties.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Latent donation probability over a conversation: `probs[j]` is
/// `o'_{j+1} = σ(o'_j + deltas[j])`, starting from `initial`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonationTrace {
    pub initial: f64,
    pub deltas: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DonationTrace {
    /// Run the recursion from given deltas.
    pub fn from_deltas(initial: f64, deltas: Vec<f64>) -> DonationTrace {
        let mut o = initial;
        let probs = deltas
            .iter()
            .map(|d| {
                o = sigmoid(o + d);
                o
            })
            .collect();
        DonationTrace { initial, deltas, probs }
    }

    pub fn last(&self) -> Option<f64> {
        self.probs.last().copied()
    }

    /// Probability before step `j` (0-based), i.e. the lag value.
    pub fn previous(&self, j: usize) -> f64 {
        if j == 0 {
            self.initial
        } else {
            self.probs[j - 1]
        }
    }
}

/// Training targets for one conversation. `gold[j]` is the class index in
/// the model's label space, or `None` when utterance `j` is out of scope.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub gold: Vec<Option<usize>>,
    pub outcome: f64,
}

/// Tape nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub utterances: Vec<Var>,
    pub context: Vec<Var>,
    pub probs: Vec<Var>,
    pub deltas: Vec<Var>,
    pub donation: Vec<Var>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub face: f64,
    pub donation: f64,
    /// Gold probabilities that hit [`PROB_FLOOR`].
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct ConversationEncoder {
    gru: Gru,
    att: Option<Attention>,
    fuse: Linear,
}

#[derive(Debug, Clone, PartialEq)]
struct Classifier {
    hidden: Linear,
    out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
struct DonationHead {
    att: Attention,
    out: Linear,
}

/// Hierarchical GRU model with face-act and donation heads.
#[derive(Debug, Clone, PartialEq)]
pub struct HiGru {
    pub arch: Architecture,
    pub utterance: UtteranceEncoder,
    conversation: Option<ConversationEncoder>,
    classifier: Classifier,
    donation: DonationHead,
}

impl HiGru {
    /// Register all parameters in `params` and return the model layout.
    pub fn new<R: Rng>(arch: Architecture, params: &mut ParameterSet, rng: &mut R) -> Result<HiGru, ModelError> {
        arch.validate()?;
        let utterance = UtteranceEncoder::new(params, arch.variant, arch.d_embed, arch.d_h1, rng);
        let (conversation, ctx_dim) = if arch.hierarchical {
            let gru = Gru::new(params, "conv.gru", arch.d_h1, arch.d_h2, rng);
            let att = arch
                .variant
                .uses_attention()
                .then(|| Attention::new(params, "conv.att", arch.d_h2, rng));
            let width = match arch.variant {
                Variant::Base => arch.d_h2,
                Variant::F => arch.d_h2 + arch.d_h1,
                Variant::Sf => 2 * arch.d_h2 + arch.d_h1,
            };
            let fuse = Linear::new(params, "conv.fuse", width, arch.d_h2, rng);
            (Some(ConversationEncoder { gru, att, fuse }), arch.d_h2)
        } else {
            (None, arch.d_h1)
        };
        let classifier = Classifier {
            hidden: Linear::new(params, "cls.hidden", ctx_dim, arch.d_fc, rng),
            out: Linear::new(params, "cls.out", arch.d_fc, arch.classes(), rng),
        };
        let donation = DonationHead {
            att: Attention::new(params, "don.att", ctx_dim, rng),
            out: Linear::new(params, "don.out", ctx_dim, 1, rng),
        };
        Ok(HiGru {
            arch,
            utterance,
            conversation,
            classifier,
            donation,
        })
    }

    pub fn label_space(&self) -> &'static [FaceAct] {
        label_space(self.arch.scope)
    }

    fn check_tokens(&self, conversation: &[Vec<Vec<f64>>]) -> Result<(), ModelError> {
        if conversation.is_empty() {
            return Err(ModelError::Empty("conversation has no utterances"));
        }
        for (j, toks) in conversation.iter().enumerate() {
            if toks.is_empty() {
                return Err(ModelError::Shape(format!("utterance {j} has no tokens")));
            }
            if let Some(v) = toks.iter().find(|v| v.len() != self.arch.d_embed) {
                return Err(ModelError::Shape(format!(
                    "utterance {j}: token width {}, model expects {}",
                    v.len(),
                    self.arch.d_embed
                )));
            }
        }
        Ok(())
    }

    /// Full forward pass. `conversation[j]` holds the token vectors of
    /// utterance `j`; `dropout` is applied only on the classifier hidden
    /// layer and only when given.
    pub fn forward(
        &self,
        t: &mut Tape,
        conversation: &[Vec<Vec<f64>>],
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Forward, ModelError> {
        self.check_tokens(conversation)?;
        let utterances: Vec<Var> = conversation
            .iter()
            .map(|toks| {
                let vars: Vec<Var> = toks.iter().map(|v| t.constant(v.clone())).collect();
                self.utterance.forward(t, &vars)
            })
            .collect();
        let context = self.context(t, &utterances);
        let probs = context
            .iter()
            .map(|c| {
                let h = self.classifier.hidden.forward(t, *c);
                let mut h = t.tanh(h);
                if let Some(d) = dropout.as_deref_mut() {
                    h = d.apply(t, h);
                }
                let logits = self.classifier.out.forward(t, h);
                t.softmax(logits)
            })
            .collect();
        let (deltas, donation) = self.donation_vars(t, &context);
        Ok(Forward {
            utterances,
            context,
            probs,
            deltas,
            donation,
        })
    }

    /// Contextual utterance embeddings `e_c(u_j)`, causal in `j`.
    pub fn context(&self, t: &mut Tape, utterances: &[Var]) -> Vec<Var> {
        let Some(enc) = &self.conversation else {
            return utterances.to_vec();
        };
        let h = enc.gru.run(t, utterances, false);
        let ah = enc.att.as_ref().map(|a| a.forward(t, &h, true));
        (0..utterances.len())
            .map(|j| {
                let cat = match self.arch.variant {
                    Variant::Base => h[j],
                    Variant::F => t.concat(&[h[j], utterances[j]]),
                    Variant::Sf => {
                        let ah = ah.as_ref().expect("sf has attention");
                        t.concat(&[ah[j], h[j], utterances[j]])
                    }
                };
                let z = enc.fuse.forward(t, cat);
                t.tanh(z)
            })
            .collect()
    }

    fn donation_vars(&self, t: &mut Tape, context: &[Var]) -> (Vec<Var>, Vec<Var>) {
        let ed = self.donation.att.forward(t, context, true);
        let mut o = t.constant(vec![self.arch.initial_probability]);
        let mut deltas = Vec::with_capacity(ed.len());
        let mut probs = Vec::with_capacity(ed.len());
        for e in ed {
            let z = self.donation.out.forward(t, e);
            let d = t.tanh(z);
            let s = t.add(o, d);
            o = t.sigmoid(s);
            deltas.push(d);
            probs.push(o);
        }
        (deltas, probs)
    }

    /// Face-act, donation and weighted total loss of one forward pass.
    pub fn loss(
        &self,
        t: &mut Tape,
        fwd: &Forward,
        targets: &Targets,
        alpha: f64,
        kind: DonationLossKind,
    ) -> Result<LossParts, ModelError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ModelError::Alpha(alpha));
        }
        if targets.gold.len() != fwd.probs.len() {
            return Err(ModelError::Shape(format!(
                "{} gold labels for {} utterances",
                targets.gold.len(),
                fwd.probs.len()
            )));
        }
        let mut clamped = 0;
        let mut terms = Vec::new();
        for (p, g) in fwd.probs.iter().zip(&targets.gold) {
            if let Some(g) = g {
                let pg = t.pick(*p, *g);
                if t.scalar(pg) < PROB_FLOOR {
                    clamped += 1;
                }
                terms.push(t.ln_floor(pg, PROB_FLOOR));
            }
        }
        let face = if terms.is_empty() {
            t.constant(vec![0.0])
        } else {
            let s = t.stack(&terms);
            let s = t.sum(s);
            t.scale(s, -1.0)
        };
        let last = *fwd.donation.last().expect("non-empty conversation");
        let y = targets.outcome;
        let donation = match kind {
            DonationLossKind::Mse => {
                let d = t.affine(last, 1.0, -y);
                t.square(d)
            }
            DonationLossKind::Bce => {
                let lp = t.ln_floor(last, PROB_FLOOR);
                let q = t.affine(last, -1.0, 1.0);
                let lq = t.ln_floor(q, PROB_FLOOR);
                let a = t.scale(lp, -y);
                let b = t.scale(lq, -(1.0 - y));
                t.add(a, b)
            }
        };
        let fa = t.scale(face, alpha);
        let da = t.scale(donation, 1.0 - alpha);
        let total = t.add(fa, da);
        Ok(LossParts {
            total,
            face: t.scalar(face),
            donation: t.scalar(donation),
            clamped,
        })
    }

    /// Utterance embeddings `e(u_j)`.
    pub fn encode_utterances(
        &self,
        params: &ParameterSet,
        conversation: &[Vec<Vec<f64>>],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_tokens(conversation)?;
        conversation
            .iter()
            .map(|toks| self.utterance.encode(params, toks))
            .collect()
    }

    /// Contextual embeddings `e_c(u_j)` from utterance embeddings.
    pub fn encode_conversation(
        &self,
        params: &ParameterSet,
        utterances: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_width(utterances, self.arch.d_h1)?;
        let mut t = Tape::new(params);
        let vars: Vec<Var> = utterances.iter().map(|u| t.constant(u.clone())).collect();
        let ctx = self.context(&mut t, &vars);
        Ok(ctx.iter().map(|v| t.value(*v).to_vec()).collect())
    }

    fn ctx_dim(&self) -> usize {
        if self.arch.hierarchical {
            self.arch.d_h2
        } else {
            self.arch.d_h1
        }
    }

    fn check_width(&self, xs: &[Vec<f64>], d: usize) -> Result<(), ModelError> {
        if xs.is_empty() {
            return Err(ModelError::Empty("conversation has no utterances"));
        }
        if let Some(x) = xs.iter().find(|x| x.len() != d) {
            return Err(ModelError::Shape(format!("vector of width {}, expected {d}", x.len())));
        }
        Ok(())
    }

    /// Face-act distributions (inference: no dropout).
    pub fn classify_face_acts(
        &self,
        params: &ParameterSet,
        context: &[Vec<f64>],
    ) -> Result<Vec<FaceActPrediction>, ModelError> {
        self.check_width(context, self.ctx_dim())?;
        let mut t = Tape::new(params);
        Ok(context
            .iter()
            .map(|c| {
                let x = t.constant(c.clone());
                let h = self.classifier.hidden.forward(&mut t, x);
                let h = t.tanh(h);
                let logits = self.classifier.out.forward(&mut t, h);
                let p = t.softmax(logits);
                FaceActPrediction::from_probs(t.value(p).to_vec(), self.label_space())
            })
            .collect())
    }

    /// Donation trace from contextual embeddings, starting at `initial`.
    pub fn donation_trace(
        &self,
        params: &ParameterSet,
        context: &[Vec<f64>],
        initial: f64,
    ) -> Result<DonationTrace, ModelError> {
        self.check_width(context, self.ctx_dim())?;
        let mut t = Tape::new(params);
        let vars: Vec<Var> = context.iter().map(|c| t.constant(c.clone())).collect();
        let ed = self.donation.att.forward(&mut t, &vars, true);
        let deltas = ed
            .into_iter()
            .map(|e| {
                let z = self.donation.out.forward(&mut t, e);
                let d = t.tanh(z);
                t.scalar(d)
            })
            .collect();
        Ok(DonationTrace::from_deltas(initial, deltas))
    }

    /// Predictions and donation trace for one conversation.
    pub fn predict(
        &self,
        params: &ParameterSet,
        conversation: &[Vec<Vec<f64>>],
    ) -> Result<(Vec<FaceActPrediction>, DonationTrace), ModelError> {
        let mut t = Tape::new(params);
        let fwd = self.forward(&mut t, conversation, None)?;
        let preds = fwd
            .probs
            .iter()
            .map(|p| FaceActPrediction::from_probs(t.value(*p).to_vec(), self.label_space()))
            .collect();
        let trace = DonationTrace {
            initial: self.arch.initial_probability,
            deltas: fwd.deltas.iter().map(|d| t.scalar(*d)).collect(),
            probs: fwd.donation.iter().map(|o| t.scalar(*o)).collect(),
        };
        Ok((preds, trace))
    }
}

/// `L_f = -Σ ln max(p_gold, 1e-12)` over utterances; also returns how many
/// gold probabilities were clamped.
pub fn face_loss(preds: &[FaceActPrediction], gold: &[usize]) -> Result<(f64, usize), ModelError> {
    if preds.len() != gold.len() {
        return Err(ModelError::Shape(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            gold.len()
        )));
    }
    let mut clamped = 0;
    let mut loss = 0.0;
    for (p, g) in preds.iter().zip(gold) {
        let pg = *p
            .probs
            .get(*g)
            .ok_or_else(|| ModelError::Shape(format!("gold index {g} out of range")))?;
        if pg < PROB_FLOOR {
            clamped += 1;
        }
        loss -= pg.max(PROB_FLOOR).ln();
    }
    if clamped > 0 {
        log::warn!("{clamped} gold probabilities clamped at {PROB_FLOOR}");
    }
    Ok((loss, clamped))
}

/// Loss on the final donation probability against the binary outcome.
pub fn donation_loss(trace: &DonationTrace, outcome: f64, kind: DonationLossKind) -> Result<f64, ModelError> {
    let o = trace.last().ok_or(ModelError::Empty("donation trace"))?;
    Ok(match kind {
        DonationLossKind::Mse => (o - outcome).powi(2),
        DonationLossKind::Bce => -(outcome * o.max(PROB_FLOOR).ln() + (1.0 - outcome) * (1.0 - o).max(PROB_FLOOR).ln()),
    })
}

/// `α L_f + (1 - α) L_d`.
pub fn total_loss(face: f64, donation: f64, alpha: f64) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ModelError::Alpha(alpha));
    }
    Ok(alpha * face + (1.0 - alpha) * donation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(variant: Variant, seed: u64) -> (HiGru, ParameterSet) {
        let mut p = ParameterSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = HiGru::new(Architecture::tiny(variant, 4), &mut p, &mut rng).unwrap();
        (m, p)
    }

    fn random_conv(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<Vec<f64>>> {
        (0..n)
            .map(|_| {
                let k = rng.random_range(1..5);
                (0..k)
                    .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn zero_deltas_iterate_sigmoid() {
        let tr = DonationTrace::from_deltas(0.0, vec![0.0; 3]);
        let want = [0.5, 0.622_459_331_201_854_6, 0.650_777_678_214_700_5];
        for (a, b) in tr.probs.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let floor = DonationTrace::from_deltas(0.0, vec![-1.0]);
        assert!((floor.probs[0] - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn loss_arithmetic() {
        let p = FaceActPrediction::from_probs(vec![0.8808, 0.1192], &[FaceAct::SPosRaise, FaceAct::Other]);
        assert_eq!(p.label, FaceAct::SPosRaise);
        let (l, c) = face_loss(&[p], &[0]).unwrap();
        assert!((l - 0.126_928).abs() < 1e-5 && c == 0);
        let uniform = FaceActPrediction::from_probs(vec![0.25; 4], label_space(crate::taxonomy::Scope::All));
        let (l, _) = face_loss(&[uniform.clone(), uniform.clone(), uniform], &[0, 1, 2]).unwrap();
        assert!((l - 3.0 * 4f64.ln()).abs() < 1e-12);
        let zero = FaceActPrediction::from_probs(vec![1.0, 0.0], &[FaceAct::SPosRaise, FaceAct::Other]);
        assert_eq!(face_loss(&[zero], &[1]).unwrap().1, 1);

        let tr = DonationTrace::from_deltas(0.0, vec![1.0, 1.0]);
        let mse = donation_loss(&tr, 1.0, DonationLossKind::Mse).unwrap();
        assert!((mse - (tr.probs[1] - 1.0).powi(2)).abs() < 1e-15);
        let half = DonationTrace {
            initial: 0.0,
            deltas: vec![0.0],
            probs: vec![0.5],
        };
        assert!((donation_loss(&half, 0.0, DonationLossKind::Bce).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((total_loss(2.0, 0.4, 0.75).unwrap() - 1.6).abs() < 1e-15);
        assert_eq!(total_loss(2.0, 0.4, 1.0).unwrap(), 2.0);
        assert_eq!(total_loss(2.0, 0.4, 0.0).unwrap(), 0.4);
        assert!(matches!(total_loss(1.0, 1.0, 1.5), Err(ModelError::Alpha(_))));
    }

    #[test]
    fn softmax_outputs_are_distributions() {
        let (m, p) = model(Variant::Sf, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let conv = random_conv(&mut rng, 5, 4);
        let (preds, trace) = m.predict(&p, &conv).unwrap();
        for pr in &preds {
            assert_eq!(pr.probs.len(), 8);
            assert!((pr.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(pr.probs.iter().all(|x| *x > 0.0));
        }
        assert_eq!(trace.probs.len(), 5);
    }

    #[test]
    fn zeroed_output_layer_is_uniform() {
        let (m, mut p) = model(Variant::F, 3);
        for name in ["cls.out.w", "cls.out.b"] {
            let id = p.id(name).unwrap();
            p.get_mut(id).data.iter_mut().for_each(|x| *x = 0.0);
        }
        let ctx = vec![vec![0.3, -0.2, 0.9, 0.1]];
        let preds = m.classify_face_acts(&p, &ctx).unwrap();
        assert!(preds[0].probs.iter().all(|x| (x - 0.125).abs() < 1e-15));
    }

    #[test]
    fn stepwise_api_matches_forward() {
        for v in Variant::ALL {
            let (m, p) = model(v, 11);
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let conv = random_conv(&mut rng, 4, 4);
            let utt = m.encode_utterances(&p, &conv).unwrap();
            let ctx = m.encode_conversation(&p, &utt).unwrap();
            let preds = m.classify_face_acts(&p, &ctx).unwrap();
            let trace = m.donation_trace(&p, &ctx, 0.0).unwrap();
            let (preds2, trace2) = m.predict(&p, &conv).unwrap();
            assert_eq!(preds, preds2);
            assert_eq!(trace, trace2);
        }
    }

    #[test]
    fn scalar_conversation_by_hand() {
        let mut p = ParameterSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = HiGru::new(Architecture::tiny(Variant::F, 1), &mut p, &mut rng).unwrap();
        let mut set = |name: &str, v: &[f64]| {
            let id = p.id(name).unwrap();
            p.get_mut(id).data.copy_from_slice(v);
        };
        set("conv.gru.w_ih", &[0.5, -0.3, 0.8]);
        set("conv.gru.w_hh", &[0.2, 0.4, -0.6]);
        set("conv.gru.b_ih", &[0.1, 0.0, -0.1]);
        set("conv.gru.b_hh", &[0.0, 0.2, 0.3]);
        set("conv.fuse.w", &[0.9, -0.4]);
        set("conv.fuse.b", &[0.1]);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let step = |x: f64, h: f64| {
            let r = sig(0.5 * x + 0.1 + 0.2 * h);
            let z = sig(-0.3 * x + 0.4 * h + 0.2);
            let n = (0.8 * x - 0.1 + r * (-0.6 * h + 0.3)).tanh();
            (1.0 - z) * n + z * h
        };
        let (u1, u2) = (0.4, -0.8);
        let h1 = step(u1, 0.0);
        let h2 = step(u2, h1);
        let want = [(0.9 * h1 - 0.4 * u1 + 0.1).tanh(), (0.9 * h2 - 0.4 * u2 + 0.1).tanh()];
        let got = m.encode_conversation(&p, &[vec![u1], vec![u2]]).unwrap();
        assert!((got[0][0] - want[0]).abs() < 1e-15);
        assert!((got[1][0] - want[1]).abs() < 1e-15);
    }

    #[test]
    fn flat_baseline_skips_conversation_level() {
        let mut p = ParameterSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let arch = Architecture {
            hierarchical: false,
            ..Architecture::tiny(Variant::Base, 3)
        };
        let m = HiGru::new(arch, &mut p, &mut rng).unwrap();
        assert!(p.id("conv.gru.w_ih").is_none());
        let conv = random_conv(&mut rng, 3, 3);
        let utt = m.encode_utterances(&p, &conv).unwrap();
        assert_eq!(m.encode_conversation(&p, &utt).unwrap(), utt);
    }

    #[test]
    fn parameter_counts_grow_with_variant() {
        let count = |v| {
            let mut p = ParameterSet::default();
            let arch = Architecture {
                variant: v,
                ..Architecture::default()
            };
            HiGru::new(arch, &mut p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            p.count()
        };
        let (b, f, sf) = (count(Variant::Base), count(Variant::F), count(Variant::Sf));
        assert!(b < f && f < sf);
        assert!((1_500_000..2_500_000).contains(&b), "{b}");
    }

    #[test]
    fn loss_checks() {
        let (m, p) = model(Variant::Base, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let conv = random_conv(&mut rng, 2, 4);
        let mut t = Tape::new(&p);
        let fwd = m.forward(&mut t, &conv, None).unwrap();
        let targets = Targets {
            gold: vec![Some(0), None],
            outcome: 1.0,
        };
        assert!(matches!(
            m.loss(&mut t, &fwd, &targets, -0.1, DonationLossKind::Mse),
            Err(ModelError::Alpha(_))
        ));
        let short = Targets {
            gold: vec![Some(0)],
            outcome: 1.0,
        };
        assert!(m.loss(&mut t, &fwd, &short, 0.5, DonationLossKind::Mse).is_err());
        let parts = m.loss(&mut t, &fwd, &targets, 0.75, DonationLossKind::Bce).unwrap();
        let want = 0.75 * parts.face + 0.25 * parts.donation;
        assert!((t.scalar(parts.total) - want).abs() < 1e-12);
        assert!(m.forward(&mut t, &[], None).is_err());
    }
}
