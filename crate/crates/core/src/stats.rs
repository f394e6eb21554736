//! Corpus summary statistics: face-act distributions per role and outcome,
//! with donor vs non-donor t-tests.

use std::fmt::Write as _;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corpus::{Corpus, Outcome};
use crate::taxonomy::{label_space, FaceAct, Role, Scope};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("t-test needs at least 2 samples per group (got {0} and {1})")]
    InsufficientSamples(usize, usize),
    #[error("p-value {0} is outside [0, 1]")]
    InvalidP(f64),
}

/// Two-sided pooled-variance t-test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// Student's two-sample t-test with pooled variance.
pub fn independent_t_test(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InsufficientSamples(a.len(), b.len()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let ss = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    let df = a.len() + b.len() - 2;
    let pooled = (ss(a, ma) + ss(b, mb)) / df as f64;
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let diff = ma - mb;
    let scale = ma.abs().max(mb.abs()).max(1.0);
    if se <= f64::EPSILON * scale {
        // Degenerate: no within-group spread.
        return Ok(if diff.abs() <= f64::EPSILON * scale {
            TTest { t: 0.0, p: 1.0, df }
        } else {
            TTest {
                t: diff.signum() * f64::INFINITY,
                p: 0.0,
                df,
            }
        });
    }
    let t = diff / se;
    Ok(TTest {
        t,
        p: t_two_sided_p(t, df as f64),
        df,
    })
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// `***` for p ≤ 0.001, `**` for p ≤ 0.01, `*` for p ≤ 0.05.
pub fn significance_stars(p: f64) -> Result<&'static str, StatsError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::InvalidP(p));
    }
    Ok(if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        ""
    })
}

/// The four table columns: role × outcome.
pub const COLUMNS: [(Role, Outcome); 4] = [
    (Role::Er, Outcome::Donor),
    (Role::Er, Outcome::NonDonor),
    (Role::Ee, Outcome::Donor),
    (Role::Ee, Outcome::NonDonor),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub act: FaceAct,
    /// Percentages in [`COLUMNS`] order.
    pub percent: [f64; 4],
    /// Donor vs non-donor test on per-conversation proportions, ER then EE.
    /// `None` when a group has fewer than two conversations with that role.
    pub tests: [Option<TTest>; 2],
}

impl DistributionRow {
    /// Stars for a column; they sit on the larger of the role's two cells.
    pub fn stars(&self, column: usize) -> &'static str {
        let role = column / 2;
        let (d, n) = (self.percent[2 * role], self.percent[2 * role + 1]);
        let larger = if d >= n { 2 * role } else { 2 * role + 1 };
        if larger != column {
            return "";
        }
        self.tests[role]
            .and_then(|t| significance_stars(t.p).ok())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionTable {
    pub rows: Vec<DistributionRow>,
    /// Utterance counts per column.
    pub totals: [usize; 4],
}

/// Percentage of each role's utterances carrying each (selected gold) act,
/// split by conversation outcome, with t-tests over per-conversation
/// proportions.
pub fn face_act_distribution(corpus: &Corpus) -> Result<DistributionTable, StatsError> {
    if corpus.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let acts = label_space(Scope::All);
    let mut counts = vec![[0usize; 4]; acts.len()];
    let mut totals = [0usize; 4];
    // Per role, per outcome: per-conversation proportion vectors (one per act).
    let mut props: [[Vec<Vec<f64>>; 2]; 2] = Default::default();

    for conv in &corpus.conversations {
        for (r, role) in Role::BOTH.into_iter().enumerate() {
            let col = COLUMNS
                .iter()
                .position(|&c| c == (role, conv.outcome))
                .expect("column exists");
            let mut local = vec![0usize; acts.len()];
            let mut n = 0usize;
            for u in conv.utterances.iter().filter(|u| u.role == role) {
                n += 1;
                if let Some(i) = acts.iter().position(|&a| a == u.selected_gold) {
                    local[i] += 1;
                    counts[i][col] += 1;
                }
            }
            totals[col] += n;
            if n > 0 {
                let o = usize::from(conv.outcome == Outcome::NonDonor);
                props[r][o].push(local.iter().map(|&c| c as f64 / n as f64).collect());
            }
        }
    }

    let mut rows = Vec::with_capacity(acts.len());
    for (i, &act) in acts.iter().enumerate() {
        let mut percent = [0.0; 4];
        for col in 0..4 {
            if totals[col] > 0 {
                percent[col] = 100.0 * counts[i][col] as f64 / totals[col] as f64;
            }
        }
        let test = |r: usize| {
            let donor: Vec<f64> = props[r][0].iter().map(|p| p[i]).collect();
            let non: Vec<f64> = props[r][1].iter().map(|p| p[i]).collect();
            independent_t_test(&donor, &non).ok()
        };
        rows.push(DistributionRow {
            act,
            percent,
            tests: [test(0), test(1)],
        });
    }
    Ok(DistributionTable { rows, totals })
}

impl DistributionTable {
    pub fn row(&self, act: FaceAct) -> Option<&DistributionRow> {
        self.rows.iter().find(|r| r.act == act)
    }

    pub fn percent(&self, act: FaceAct, role: Role, outcome: Outcome) -> Option<f64> {
        let col = COLUMNS.iter().position(|&c| c == (role, outcome))?;
        self.row(act).map(|r| r.percent[col])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("face_act,ER_D,ER_N,EE_D,EE_N,ER_t,ER_p,EE_t,EE_p\n");
        for r in &self.rows {
            let _ = write!(out, "{}", r.act);
            for col in 0..4 {
                let _ = write!(out, ",{:.2}{}", r.percent[col], r.stars(col));
            }
            for t in &r.tests {
                match t {
                    Some(t) => {
                        let _ = write!(out, ",{:.4},{:.6}", t.t, t.p);
                    }
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8}{:>12}{:>12}{:>12}{:>12}", "", "ER", "", "EE", "");
        let _ = writeln!(out, "{:<8}{:>12}{:>12}{:>12}{:>12}", "act", "D", "N", "D", "N");
        for r in &self.rows {
            let _ = write!(out, "{:<8}", r.act.name());
            for col in 0..4 {
                let cell = format!("{:.2}{:<3}", r.percent[col], r.stars(col));
                let _ = write!(out, "{cell:>12}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "n       {:>12}{:>12}{:>12}{:>12}",
            self.totals[0], self.totals[1], self.totals[2], self.totals[3]
        );
        out
    }
}
