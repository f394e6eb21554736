use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, confusion, macro_f1, macro_f1_present, mcnemar, threshold_select, McNemar};
use super::{Adam, ModelConfig, TrainError};
use crate::corpus::{stratified_folds, Corpus, FoldSplit, Outcome};
use crate::model::{DonationTrace, Dropout, FaceActPrediction, HiGru, Targets, TokenEmbedder};
use crate::nn::{load_checkpoint, save_checkpoint, Gradients, ParameterSet, Tape};
use crate::taxonomy::{label_space, FaceAct, Role, Scope};

/// A conversation with its tokens already embedded.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedConversation {
    pub id: String,
    pub tokens: Vec<Vec<Vec<f64>>>,
    pub roles: Vec<Role>,
    pub gold: Vec<FaceAct>,
    pub outcome: Outcome,
}

impl EmbeddedConversation {
    /// Gold class indices for utterances inside `scope` whose label the
    /// scope can express.
    pub fn targets(&self, scope: Scope) -> Targets {
        let space = label_space(scope);
        Targets {
            gold: self
                .roles
                .iter()
                .zip(&self.gold)
                .map(|(r, g)| {
                    if scope.includes(*r) {
                        space.iter().position(|s| s == g)
                    } else {
                        None
                    }
                })
                .collect(),
            outcome: self.outcome.as_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedCorpus {
    pub dim: usize,
    pub digest: String,
    pub conversations: Vec<EmbeddedConversation>,
}

impl EmbeddedCorpus {
    pub fn get(&self, id: &str) -> Option<&EmbeddedConversation> {
        self.conversations.iter().find(|c| c.id == id)
    }

    fn select(&self, ids: &[String]) -> Result<Vec<&EmbeddedConversation>, TrainError> {
        ids.iter()
            .map(|id| self.get(id).ok_or_else(|| TrainError::UnknownConversation(id.clone())))
            .collect()
    }
}

pub fn embed_corpus(corpus: &Corpus, embedder: &dyn TokenEmbedder) -> Result<EmbeddedCorpus, TrainError> {
    let conversations = corpus
        .conversations
        .iter()
        .map(|c| {
            let tokens = c
                .utterances
                .iter()
                .map(|u| embedder.embed(&u.text))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(EmbeddedConversation {
                id: c.id.clone(),
                tokens,
                roles: c.utterances.iter().map(|u| u.role).collect(),
                gold: c.utterances.iter().map(|u| u.selected_gold).collect(),
                outcome: c.outcome,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(EmbeddedCorpus {
        dim: embedder.dim(),
        digest: corpus.digest.clone(),
        conversations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub lr: f64,
    /// Means over the epoch's conversations.
    pub total: f64,
    pub face: f64,
    pub donation: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: HiGru,
    pub params: ParameterSet,
    pub loss_curve: Vec<EpochLoss>,
    pub clamped: usize,
}

fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Train a fresh model on `data`. One conversation is one optimization
/// step; conversation order is reshuffled every epoch.
pub fn train_on(
    config: &ModelConfig,
    data: &[&EmbeddedConversation],
    d_embed: usize,
    seed: u64,
) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    let mut params = ParameterSet::default();
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix(seed, 1));
    let model = HiGru::new(config.architecture(d_embed), &mut params, &mut init_rng)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix(seed, 2));
    let mut dropout = Dropout::new(config.dropout, mix(seed, 3));
    let mut opt = Adam::new(&params);
    let targets: Vec<Targets> = data.iter().map(|c| c.targets(config.scope)).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut clamped = 0;

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut order_rng);
        let (mut tot, mut face, mut don) = (0.0, 0.0, 0.0);
        for &i in &order {
            let (loss, parts_face, parts_don, grads) = {
                let mut t = Tape::new(&params);
                let fwd = model.forward(&mut t, &data[i].tokens, Some(&mut dropout))?;
                let parts = model.loss(&mut t, &fwd, &targets[i], config.alpha, config.donation_loss)?;
                clamped += parts.clamped;
                let loss = t.scalar(parts.total);
                let grads = if loss.is_finite() {
                    Some(t.backward(parts.total))
                } else {
                    None
                };
                (loss, parts.face, parts.donation, grads)
            };
            let grads: Gradients = match grads {
                Some(g) if g.is_finite() => g,
                _ => {
                    return Err(TrainError::Diverged {
                        epoch,
                        conversation: data[i].id.clone(),
                        loss,
                    })
                }
            };
            opt.update(&mut params, &grads, lr);
            tot += loss;
            face += parts_face;
            don += parts_don;
        }
        let n = data.len().max(1) as f64;
        let e = EpochLoss {
            epoch,
            lr,
            total: tot / n,
            face: face / n,
            donation: don / n,
        };
        log::info!(
            "epoch {epoch}: lr {lr:.3e} loss {:.5} (face {:.5}, donation {:.5})",
            e.total,
            e.face,
            e.donation
        );
        curve.push(e);
    }
    Ok(TrainedModel {
        model,
        params,
        loss_curve: curve,
        clamped,
    })
}

/// Train on the training side of one split.
pub fn train_fold(config: &ModelConfig, fold: &FoldSplit, data: &EmbeddedCorpus) -> Result<TrainedModel, TrainError> {
    let train = data.select(&fold.train_ids)?;
    train_on(config, &train, data.dim, mix(config.seed, 100 + fold.fold_index as u64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversationPrediction {
    pub id: String,
    pub outcome: Outcome,
    pub roles: Vec<Role>,
    pub gold: Vec<FaceAct>,
    pub predictions: Vec<FaceActPrediction>,
    pub trace: DonationTrace,
}

pub fn evaluate(
    model: &HiGru,
    params: &ParameterSet,
    data: &[&EmbeddedConversation],
) -> Result<Vec<ConversationPrediction>, TrainError> {
    data.iter()
        .map(|c| {
            let (predictions, trace) = model.predict(params, &c.tokens)?;
            Ok(ConversationPrediction {
                id: c.id.clone(),
                outcome: c.outcome,
                roles: c.roles.clone(),
                gold: c.gold.clone(),
                predictions,
                trace,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceMetrics {
    /// Scored utterances.
    pub n: usize,
    pub accuracy: f64,
    /// Over every class of the label space.
    pub macro_f1: f64,
    /// Over classes present in gold or predictions only.
    pub macro_f1_present: f64,
}

/// Scored (prediction, gold) pairs: utterances inside `scope` whose gold
/// label belongs to its label space.
fn scored_pairs(preds: &[ConversationPrediction], scope: Scope, role: Option<Role>) -> (Vec<FaceAct>, Vec<FaceAct>) {
    let space = label_space(scope);
    let mut p = Vec::new();
    let mut g = Vec::new();
    for c in preds {
        for ((r, gold), pr) in c.roles.iter().zip(&c.gold).zip(&c.predictions) {
            if scope.includes(*r) && role.is_none_or(|x| x == *r) && space.contains(gold) {
                p.push(pr.label);
                g.push(*gold);
            }
        }
    }
    (p, g)
}

pub fn face_metrics(preds: &[ConversationPrediction], scope: Scope) -> Result<FaceMetrics, TrainError> {
    let (p, g) = scored_pairs(preds, scope, None);
    let space = label_space(scope);
    Ok(FaceMetrics {
        n: g.len(),
        accuracy: accuracy(&p, &g)?,
        macro_f1: macro_f1(&p, &g, space)?,
        macro_f1_present: macro_f1_present(&p, &g, space)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold_index: usize,
    pub train_size: usize,
    pub val_ids: Vec<String>,
    pub metrics: FaceMetrics,
    pub loss_curve: Vec<EpochLoss>,
    pub clamped: usize,
}

/// Confusion matrices pooled over folds, rows gold and columns predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub labels: Vec<FaceAct>,
    pub er: Option<Vec<Vec<usize>>>,
    pub ee: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DonationReport {
    pub threshold: f64,
    pub f1: f64,
    pub f1_at_reference_threshold: f64,
}

/// Published figures the run can be compared against. Not gating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTargets {
    pub static_sf_all_macro_f1: f64,
    pub contextual_f_all_macro_f1: f64,
    pub donation_f1: f64,
    pub donation_threshold: f64,
}

impl Default for ReferenceTargets {
    fn default() -> Self {
        ReferenceTargets {
            static_sf_all_macro_f1: 0.52,
            contextual_f_all_macro_f1: 0.60,
            donation_f1: 0.672,
            donation_threshold: 0.813,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub fold: usize,
    pub conv_id: String,
    pub index: usize,
    pub role: Role,
    pub gold: FaceAct,
    pub pred: FaceAct,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub fold: usize,
    pub conv_id: String,
    pub outcome: Outcome,
    pub trace: DonationTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: ModelConfig,
    pub config_digest: String,
    pub corpus_digest: String,
    pub labels: Vec<FaceAct>,
    pub folds: Vec<FoldReport>,
    /// Arithmetic means of the fold metrics.
    pub mean: FaceMetrics,
    pub confusion: ConfusionReport,
    /// Absent when the pooled validation outcomes hold a single class.
    pub donation: Option<DonationReport>,
    pub reference: ReferenceTargets,
    pub traces: Vec<TraceRecord>,
    pub predictions: Vec<PredictionRecord>,
}

impl CvReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(raw: &str) -> Result<CvReport, TrainError> {
        serde_json::from_str(raw).map_err(|e| TrainError::Config(format!("bad report: {e}")))
    }
}

fn role_confusion(
    preds: &[ConversationPrediction],
    scope: Scope,
    role: Role,
) -> Result<Option<Vec<Vec<usize>>>, TrainError> {
    if !scope.includes(role) {
        return Ok(None);
    }
    let (p, g) = scored_pairs(preds, scope, Some(role));
    Ok(Some(confusion(&p, &g, label_space(scope))?))
}

/// k-fold cross-validation on the outcome-stratified splits of `corpus`.
pub fn run_cv(config: &ModelConfig, corpus: &Corpus, data: &EmbeddedCorpus) -> Result<CvReport, TrainError> {
    config.validate()?;
    let folds = stratified_folds(corpus, config.folds, config.seed)?;
    let run = |f: &FoldSplit| -> Result<(TrainedModel, Vec<ConversationPrediction>), TrainError> {
        let trained = train_fold(config, f, data)?;
        let val = data.select(&f.val_ids)?;
        let preds = evaluate(&trained.model, &trained.params, &val)?;
        Ok((trained, preds))
    };
    let results: Vec<Result<_, TrainError>> = if config.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = folds.iter().map(|f| s.spawn(|| run(f))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fold thread panicked"))
                .collect()
        })
    } else {
        folds.iter().map(run).collect()
    };

    let mut fold_reports = Vec::new();
    let mut all_preds: Vec<(usize, ConversationPrediction)> = Vec::new();
    for (f, res) in folds.iter().zip(results) {
        let (trained, preds) = res?;
        fold_reports.push(FoldReport {
            fold_index: f.fold_index,
            train_size: f.train_ids.len(),
            val_ids: f.val_ids.clone(),
            metrics: face_metrics(&preds, config.scope)?,
            loss_curve: trained.loss_curve,
            clamped: trained.clamped,
        });
        all_preds.extend(preds.into_iter().map(|p| (f.fold_index, p)));
    }
    let k = fold_reports.len() as f64;
    let mean_of = |g: fn(&FaceMetrics) -> f64| fold_reports.iter().map(|f| g(&f.metrics)).sum::<f64>() / k;
    let mean = FaceMetrics {
        n: fold_reports.iter().map(|f| f.metrics.n).sum(),
        accuracy: mean_of(|m| m.accuracy),
        macro_f1: mean_of(|m| m.macro_f1),
        macro_f1_present: mean_of(|m| m.macro_f1_present),
    };

    let pooled: Vec<ConversationPrediction> = all_preds.iter().map(|(_, p)| p.clone()).collect();
    let confusion = ConfusionReport {
        labels: label_space(config.scope).to_vec(),
        er: role_confusion(&pooled, config.scope, Role::Er)?,
        ee: role_confusion(&pooled, config.scope, Role::Ee)?,
    };
    let finals: Vec<f64> = pooled.iter().map(|p| p.trace.last().expect("non-empty")).collect();
    let outcomes: Vec<bool> = pooled.iter().map(|p| p.outcome == Outcome::Donor).collect();
    let reference = ReferenceTargets::default();
    let donation = match threshold_select(&finals, &outcomes) {
        Ok(t) => Some(DonationReport {
            threshold: t.theta,
            f1: t.f1,
            f1_at_reference_threshold: super::metrics::donation_f1(&finals, &outcomes, reference.donation_threshold)?,
        }),
        Err(_) => None,
    };

    let mut traces = Vec::new();
    let mut predictions = Vec::new();
    for (fold, p) in &all_preds {
        traces.push(TraceRecord {
            fold: *fold,
            conv_id: p.id.clone(),
            outcome: p.outcome,
            trace: p.trace.clone(),
        });
        for (j, pr) in p.predictions.iter().enumerate() {
            predictions.push(PredictionRecord {
                fold: *fold,
                conv_id: p.id.clone(),
                index: j,
                role: p.roles[j],
                gold: p.gold[j],
                pred: pr.label,
                probs: pr.probs.clone(),
            });
        }
    }
    Ok(CvReport {
        config: config.clone(),
        config_digest: config.digest(),
        corpus_digest: corpus.digest.clone(),
        labels: label_space(config.scope).to_vec(),
        folds: fold_reports,
        mean,
        confusion,
        donation,
        reference,
        traces,
        predictions,
    })
}

/// McNemar test between two reports over the utterances both scored,
/// matched by conversation id and index.
pub fn compare_predictions(a: &CvReport, b: &CvReport) -> Result<McNemar, TrainError> {
    let scored = |r: &CvReport| -> BTreeMap<(String, usize), (FaceAct, FaceAct)> {
        r.predictions
            .iter()
            .filter(|p| r.config.scope.includes(p.role) && r.labels.contains(&p.gold))
            .map(|p| ((p.conv_id.clone(), p.index), (p.pred, p.gold)))
            .collect()
    };
    let (ma, mb) = (scored(a), scored(b));
    let mut pa = Vec::new();
    let mut pb = Vec::new();
    let mut gold = Vec::new();
    for (key, (pred_a, g)) in &ma {
        if let Some((pred_b, gb)) = mb.get(key) {
            if g != gb {
                return Err(TrainError::Metric(format!(
                    "gold labels disagree at {}:{}",
                    key.0, key.1
                )));
            }
            pa.push(*pred_a);
            pb.push(*pred_b);
            gold.push(*g);
        }
    }
    mcnemar(&pa, &pb, &gold)
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: ModelConfig,
    config_digest: String,
    d_embed: usize,
}

pub fn save_model(path: &Path, config: &ModelConfig, trained: &TrainedModel) -> Result<(), TrainError> {
    let meta = CheckpointMeta {
        config: config.clone(),
        config_digest: config.digest(),
        d_embed: trained.model.arch.d_embed,
    };
    let meta = serde_json::to_value(&meta).expect("meta serializes");
    save_checkpoint(path, &meta, &trained.params)?;
    Ok(())
}

/// Load a checkpoint, rebuilding the model from its stored config. Shapes
/// and names must match the layout that config implies.
pub fn load_model(path: &Path) -> Result<(ModelConfig, HiGru, ParameterSet), TrainError> {
    let (meta, stored) = load_checkpoint(path)?;
    let meta: CheckpointMeta =
        serde_json::from_value(meta).map_err(|e| TrainError::Checkpoint(format!("bad metadata: {e}")))?;
    if meta.config.digest() != meta.config_digest {
        return Err(TrainError::Checkpoint(
            "config digest does not match stored config".into(),
        ));
    }
    let mut params = ParameterSet::default();
    let model = HiGru::new(
        meta.config.architecture(meta.d_embed),
        &mut params,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    params.assign_from(&stored)?;
    Ok((meta.config, model, params))
}
