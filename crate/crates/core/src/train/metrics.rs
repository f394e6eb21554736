use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::TrainError;

fn check_lengths(a: usize, b: usize) -> Result<(), TrainError> {
    if a != b {
        return Err(TrainError::Metric(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(TrainError::Metric("empty input".into()));
    }
    Ok(())
}

pub fn accuracy<T: PartialEq>(preds: &[T], gold: &[T]) -> Result<f64, TrainError> {
    check_lengths(preds.len(), gold.len())?;
    let hits = preds.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// `matrix[g][p]` counts items with gold `space[g]` predicted as `space[p]`.
/// Labels outside `space` are rejected.
pub fn confusion<T: PartialEq + std::fmt::Debug>(
    preds: &[T],
    gold: &[T],
    space: &[T],
) -> Result<Vec<Vec<usize>>, TrainError> {
    if preds.len() != gold.len() {
        return Err(TrainError::Metric(format!(
            "length mismatch: {} vs {}",
            preds.len(),
            gold.len()
        )));
    }
    let pos = |x: &T| {
        space
            .iter()
            .position(|s| s == x)
            .ok_or_else(|| TrainError::Metric(format!("label {x:?} outside the label space")))
    };
    let mut m = vec![vec![0usize; space.len()]; space.len()];
    for (p, g) in preds.iter().zip(gold) {
        m[pos(g)?][pos(p)?] += 1;
    }
    Ok(m)
}

/// Per-class F1 from a confusion matrix; 0 when the class never occurs in
/// gold or predictions.
pub fn per_class_f1(m: &[Vec<usize>]) -> Vec<f64> {
    (0..m.len())
        .map(|k| {
            let tp = m[k][k];
            let fn_: usize = m[k].iter().sum::<usize>() - tp;
            let fp: usize = m.iter().map(|row| row[k]).sum::<usize>() - tp;
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1 over every class in `space`.
pub fn macro_f1<T: PartialEq + std::fmt::Debug>(preds: &[T], gold: &[T], space: &[T]) -> Result<f64, TrainError> {
    check_lengths(preds.len(), gold.len())?;
    let f1 = per_class_f1(&confusion(preds, gold, space)?);
    Ok(f1.iter().sum::<f64>() / f1.len() as f64)
}

/// Macro-F1 over only the classes present in gold or predictions.
pub fn macro_f1_present<T: PartialEq + std::fmt::Debug>(
    preds: &[T],
    gold: &[T],
    space: &[T],
) -> Result<f64, TrainError> {
    check_lengths(preds.len(), gold.len())?;
    let m = confusion(preds, gold, space)?;
    let f1 = per_class_f1(&m);
    let present: Vec<f64> = (0..space.len())
        .filter(|&k| m[k].iter().sum::<usize>() > 0 || m.iter().any(|row| row[k] > 0))
        .map(|k| f1[k])
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// A right, B wrong.
    pub b: usize,
    /// A wrong, B right.
    pub c: usize,
    pub statistic: f64,
    pub p: f64,
}

/// Continuity-corrected McNemar test on paired predictions.
pub fn mcnemar<T: PartialEq>(a: &[T], b: &[T], gold: &[T]) -> Result<McNemar, TrainError> {
    check_lengths(a.len(), gold.len())?;
    check_lengths(b.len(), gold.len())?;
    let (mut nb, mut nc) = (0usize, 0usize);
    for ((x, y), g) in a.iter().zip(b).zip(gold) {
        match (x == g, y == g) {
            (true, false) => nb += 1,
            (false, true) => nc += 1,
            _ => {}
        }
    }
    if nb + nc == 0 {
        return Ok(McNemar {
            b: 0,
            c: 0,
            statistic: 0.0,
            p: 1.0,
        });
    }
    let diff = (nb as f64 - nc as f64).abs() - 1.0;
    let statistic = diff * diff / (nb + nc) as f64;
    Ok(McNemar {
        b: nb,
        c: nc,
        statistic,
        p: chi2_1_sf(statistic),
    })
}

/// Upper tail of the χ² distribution with one degree of freedom.
pub fn chi2_1_sf(x: f64) -> f64 {
    ChiSquared::new(1.0).expect("valid dof").sf(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub theta: f64,
    pub f1: f64,
}

/// Binary macro-F1 when predicting donor for `prob >= theta`.
pub fn donation_f1(probs: &[f64], outcomes: &[bool], theta: f64) -> Result<f64, TrainError> {
    let preds: Vec<bool> = probs.iter().map(|p| *p >= theta).collect();
    macro_f1(&preds, outcomes, &[false, true])
}

/// Pick the threshold maximizing binary macro-F1.
///
/// Thresholds between two consecutive distinct probabilities classify
/// identically, so each such interval (plus `[0, min]` and `(max, 1]`) is
/// scored once and the midpoint of the best interval returned. Ties prefer
/// the widest interval, then the lowest.
pub fn threshold_select(probs: &[f64], outcomes: &[bool]) -> Result<Threshold, TrainError> {
    check_lengths(probs.len(), outcomes.len())?;
    if outcomes.iter().all(|o| *o) || outcomes.iter().all(|o| !*o) {
        return Err(TrainError::Metric("threshold selection needs both classes".into()));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(TrainError::Metric("non-finite probability".into()));
    }
    let mut u: Vec<f64> = probs.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let lo = 0f64.min(u[0]);
    let hi = 1f64.max(*u.last().expect("non-empty"));
    let last = *u.last().expect("non-empty");
    // (low, high, probe): any theta in (low, high] classifies like `probe`.
    let mut intervals = vec![(lo, u[0], u[0])];
    intervals.extend(u.windows(2).map(|w| (w[0], w[1], w[1])));
    intervals.push((last, hi, f64::INFINITY));
    let mut best: Option<(f64, f64, f64)> = None; // (f1, width, midpoint)
    for (a, b, probe) in intervals {
        let f1 = donation_f1(probs, outcomes, probe)?;
        let width = b - a;
        let better = match best {
            None => true,
            Some((bf, bw, _)) => f1 > bf + 1e-12 || ((f1 - bf).abs() <= 1e-12 && width > bw + 1e-15),
        };
        if better {
            best = Some((f1, width, 0.5 * (a + b)));
        }
    }
    let (f1, _, theta) = best.expect("at least one interval");
    Ok(Threshold { theta, f1 })
}
