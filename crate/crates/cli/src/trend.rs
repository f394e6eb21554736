//! Mean donation probability per step, donors vs non-donors.

use facedyn::corpus::Outcome;
use facedyn::train::TraceRecord;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRow {
    /// 1-based step `j` of `o'_j`.
    pub step: usize,
    pub donor_mean: Option<f64>,
    pub donor_n: usize,
    pub non_donor_mean: Option<f64>,
    pub non_donor_n: usize,
}

pub fn trend_export(traces: &[TraceRecord]) -> Result<Vec<TrendRow>, CliError> {
    let len = traces.iter().map(|t| t.trace.probs.len()).max().unwrap_or(0);
    if len == 0 {
        return Err(CliError::Input("report holds no donation traces".into()));
    }
    let mut sums = vec![[0.0f64; 2]; len];
    let mut counts = vec![[0usize; 2]; len];
    for t in traces {
        let k = usize::from(t.outcome == Outcome::NonDonor);
        for (j, p) in t.trace.probs.iter().enumerate() {
            sums[j][k] += p;
            counts[j][k] += 1;
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    Ok((0..len)
        .map(|j| TrendRow {
            step: j + 1,
            donor_mean: mean(sums[j][0], counts[j][0]),
            donor_n: counts[j][0],
            non_donor_mean: mean(sums[j][1], counts[j][1]),
            non_donor_n: counts[j][1],
        })
        .collect())
}

pub fn trend_csv(rows: &[TrendRow]) -> String {
    let cell = |m: Option<f64>| m.map_or(String::new(), |v| format!("{v:.6}"));
    let mut out = String::from("step,donor_mean,donor_n,non_donor_mean,non_donor_n\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step,
            cell(r.donor_mean),
            r.donor_n,
            cell(r.non_donor_mean),
            r.non_donor_n
        ));
    }
    out
}
