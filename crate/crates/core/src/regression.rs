//! Regression of the local donation probability on predicted face acts:
//! `y_i = β_0 y_{i-1} + Σ_k β_k f_i^k` without intercept, fitted per role,
//! plus the fraction of each act's occurrences that raised the probability.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::DonationTrace;
use crate::stats::{significance_stars, t_two_sided_p};
use crate::taxonomy::{label_space, FaceAct, Role, Scope};
use crate::train::CvReport;

#[derive(Debug, Error, PartialEq)]
pub enum RegressionError {
    #[error("conversation {conv_id}: {message}")]
    Misaligned { conv_id: String, message: String },
    #[error("{rows} rows cannot identify {cols} coefficients")]
    TooFewRows { rows: usize, cols: usize },
    #[error("design is rank deficient: columns {0:?} are collinear")]
    RankDeficient(Vec<String>),
    #[error("no {0} utterances to regress on")]
    Empty(&'static str),
    #[error("non-finite value in design or response")]
    NonFinite,
}

/// Predicted acts and donation trace of one conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationSteps {
    pub conv_id: String,
    pub fold: Option<usize>,
    pub roles: Vec<Role>,
    pub acts: Vec<FaceAct>,
    pub trace: DonationTrace,
}

impl ConversationSteps {
    fn check(&self) -> Result<(), RegressionError> {
        let n = self.trace.probs.len();
        if self.roles.len() != n || self.acts.len() != n {
            return Err(RegressionError::Misaligned {
                conv_id: self.conv_id.clone(),
                message: format!(
                    "{} roles and {} acts for a trace of {n} steps",
                    self.roles.len(),
                    self.acts.len()
                ),
            });
        }
        Ok(())
    }
}

/// Per-conversation steps from a cross-validation report. Each utterance
/// takes the most probable act its role can perform, so role-impossible
/// acts never enter the design.
pub fn steps_from_report(report: &CvReport) -> Result<Vec<ConversationSteps>, RegressionError> {
    let mut out = Vec::new();
    for tr in &report.traces {
        let mut preds: Vec<_> = report
            .predictions
            .iter()
            .filter(|p| p.conv_id == tr.conv_id && p.fold == tr.fold)
            .collect();
        preds.sort_by_key(|p| p.index);
        let acts = preds
            .iter()
            .map(|p| role_masked_argmax(&p.probs, &report.labels, p.role))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| RegressionError::Misaligned {
                conv_id: tr.conv_id.clone(),
                message: "prediction with no act available to its role".into(),
            })?;
        let steps = ConversationSteps {
            conv_id: tr.conv_id.clone(),
            fold: Some(tr.fold),
            roles: preds.iter().map(|p| p.role).collect(),
            acts,
            trace: tr.trace.clone(),
        };
        steps.check()?;
        out.push(steps);
    }
    Ok(out)
}

/// The most probable label among those `role` can perform.
pub fn role_masked_argmax(probs: &[f64], labels: &[FaceAct], role: Role) -> Option<FaceAct> {
    let allowed = label_space(Scope::from(role));
    labels
        .iter()
        .zip(probs)
        .filter(|(l, _)| allowed.contains(l))
        .fold(None, |best: Option<(FaceAct, f64)>, (l, p)| match best {
            Some((_, bp)) if bp >= *p => best,
            _ => Some((*l, *p)),
        })
        .map(|(l, _)| l)
}

/// Regression design for one role: a lag column followed by one indicator
/// column per act of the role's label space.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub role: Role,
    pub columns: Vec<String>,
    pub acts: Vec<FaceAct>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// `(conversation id, utterance index)` per row.
    pub rows: Vec<(String, usize)>,
}

pub const LAG_COLUMN: &str = "lag";

pub fn build_design(steps: &[ConversationSteps], role: Role) -> Result<Design, RegressionError> {
    let acts = label_space(Scope::from(role)).to_vec();
    let mut columns = vec![LAG_COLUMN.to_string()];
    columns.extend(acts.iter().map(|a| a.name().to_string()));
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut rows = Vec::new();
    for c in steps {
        c.check()?;
        for (j, (r, act)) in c.roles.iter().zip(&c.acts).enumerate() {
            if *r != role {
                continue;
            }
            let k = acts
                .iter()
                .position(|a| a == act)
                .ok_or_else(|| RegressionError::Misaligned {
                    conv_id: c.conv_id.clone(),
                    message: format!("utterance {j}: {} cannot perform {act}", role.name()),
                })?;
            let mut row = vec![0.0; columns.len()];
            row[0] = c.trace.previous(j);
            row[k + 1] = 1.0;
            x.push(row);
            y.push(c.trace.probs[j]);
            rows.push((c.conv_id.clone(), j));
        }
    }
    Ok(Design {
        role,
        columns,
        acts,
        x,
        y,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub df: usize,
    pub rss: f64,
}

/// Least squares without intercept via Householder QR.
///
/// Standard errors use `σ² = RSS / (n - k)`; p-values are two-sided with
/// `n - k` degrees of freedom and are NaN when `n = k`.
pub fn fit_ols(x: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<OlsFit, RegressionError> {
    let n = x.len();
    let k = names.len();
    if n < k || k == 0 {
        return Err(RegressionError::TooFewRows { rows: n, cols: k });
    }
    if y.len() != n || x.iter().any(|r| r.len() != k) {
        return Err(RegressionError::Misaligned {
            conv_id: String::new(),
            message: "design rows and response differ in shape".into(),
        });
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    let xm = DMatrix::from_fn(n, k, |i, j| x[i][j]);
    let yv = DVector::from_column_slice(y);
    let qr = xm.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|j| xm.column(j).norm()).fold(0.0, f64::max);
    let tol = scale * (n.max(k) as f64) * f64::EPSILON * 16.0;
    if let Some(j) = (0..k).find(|&j| r[(j, j)].abs() <= tol) {
        return Err(RegressionError::RankDeficient(collinear(&r, j, tol, names)));
    }
    let qty = qr.q().transpose() * &yv;
    let rk = r.view((0, 0), (k, k)).into_owned();
    let beta = rk
        .solve_upper_triangular(&qty.rows(0, k).into_owned())
        .expect("nonsingular after rank check");
    let resid = &yv - &xm * &beta;
    let rss = resid.norm_squared();
    let df = n - k;
    let rinv = rk
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("nonsingular after rank check");
    let sigma2 = if df > 0 { rss / df as f64 } else { f64::NAN };
    let mut se = Vec::with_capacity(k);
    let mut t = Vec::with_capacity(k);
    let mut p = Vec::with_capacity(k);
    for i in 0..k {
        // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ, so its diagonal is the squared row norm of R⁻¹.
        let s = (sigma2 * rinv.row(i).norm_squared()).sqrt();
        let ti = beta[i] / s;
        let pi = if df == 0 {
            f64::NAN
        } else if s == 0.0 {
            if beta[i] == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            t_two_sided_p(ti, df as f64)
        };
        se.push(s);
        t.push(ti);
        p.push(pi);
    }
    Ok(OlsFit {
        beta: beta.iter().copied().collect(),
        se,
        t,
        p,
        df,
        rss,
    })
}

/// Column `j` together with the earlier columns that span it.
fn collinear(r: &DMatrix<f64>, j: usize, tol: f64, names: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    if j > 0 {
        let head = r.view((0, 0), (j, j)).into_owned();
        let rhs = r.view((0, j), (j, 1)).into_owned();
        if let Some(c) = head.solve_upper_triangular(&rhs) {
            for (i, v) in c.iter().enumerate() {
                if v.abs() > tol.max(1e-9) {
                    out.push(names[i].clone());
                }
            }
        }
    }
    out.push(names[j].clone());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracEntry {
    pub act: FaceAct,
    pub count: usize,
    pub increases: usize,
    /// `None` when the act never occurs (printed as "-").
    pub frac: Option<f64>,
}

/// Share of each act's steps where the probability strictly rose.
pub fn frac_metric(steps: &[ConversationSteps], role: Role) -> Result<Vec<FracEntry>, RegressionError> {
    let acts = label_space(Scope::from(role));
    let mut count = vec![0usize; acts.len()];
    let mut inc = vec![0usize; acts.len()];
    for c in steps {
        c.check()?;
        for (j, (r, act)) in c.roles.iter().zip(&c.acts).enumerate() {
            if *r != role {
                continue;
            }
            let Some(k) = acts.iter().position(|a| a == act) else {
                return Err(RegressionError::Misaligned {
                    conv_id: c.conv_id.clone(),
                    message: format!("utterance {j}: {} cannot perform {act}", role.name()),
                });
            };
            count[k] += 1;
            if c.trace.probs[j] > c.trace.previous(j) {
                inc[k] += 1;
            }
        }
    }
    Ok(acts
        .iter()
        .enumerate()
        .map(|(k, act)| FracEntry {
            act: *act,
            count: count[k],
            increases: inc[k],
            frac: (count[k] > 0).then(|| inc[k] as f64 / count[k] as f64),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub beta: f64,
    pub se: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActRow {
    pub act: FaceAct,
    pub frac: FracEntry,
    /// `None` for acts that never occur (their column is dropped).
    pub coef: Option<Coefficient>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleRegression {
    pub role: Role,
    pub n: usize,
    pub df: usize,
    pub lag: Coefficient,
    pub acts: Vec<ActRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub roles: Vec<RoleRegression>,
    /// Fold ids contributing rows, kept for re-analysis per fold.
    pub folds: Vec<usize>,
}

/// Fit one role, dropping indicator columns of acts that never occur.
pub fn regress_role(steps: &[ConversationSteps], role: Role) -> Result<RoleRegression, RegressionError> {
    let design = build_design(steps, role)?;
    if design.y.is_empty() {
        return Err(RegressionError::Empty(role.name()));
    }
    let keep: Vec<usize> = (0..design.columns.len())
        .filter(|&j| j == 0 || design.x.iter().any(|r| r[j] != 0.0))
        .collect();
    let x: Vec<Vec<f64>> = design.x.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
    let names: Vec<String> = keep.iter().map(|&j| design.columns[j].clone()).collect();
    let fit = fit_ols(&x, &design.y, &names)?;
    let coef = |i: usize| Coefficient {
        beta: fit.beta[i],
        se: fit.se[i],
        p: fit.p[i],
    };
    let fracs = frac_metric(steps, role)?;
    let acts = design
        .acts
        .iter()
        .zip(fracs)
        .enumerate()
        .map(|(k, (act, frac))| ActRow {
            act: *act,
            frac,
            coef: keep.iter().position(|&j| j == k + 1).map(coef),
        })
        .collect();
    Ok(RoleRegression {
        role,
        n: design.y.len(),
        df: fit.df,
        lag: coef(0),
        acts,
    })
}

/// Both roles, pooled over all conversations given.
pub fn regress(steps: &[ConversationSteps]) -> Result<RegressionResult, RegressionError> {
    let mut folds: Vec<usize> = steps.iter().filter_map(|s| s.fold).collect();
    folds.sort_unstable();
    folds.dedup();
    Ok(RegressionResult {
        roles: Role::BOTH
            .iter()
            .map(|r| regress_role(steps, *r))
            .collect::<Result<_, _>>()?,
        folds,
    })
}

impl RegressionResult {
    /// One line per (role, term): `role,term,count,frac,beta,se,p,stars`.
    /// Absent values print as `-`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("role,term,count,frac,beta,se,p,stars\n");
        let stars = |p: f64| {
            if p.is_finite() {
                significance_stars(p).unwrap_or("")
            } else {
                ""
            }
        };
        for r in &self.roles {
            let l = r.lag;
            out.push_str(&format!(
                "{},{LAG_COLUMN},{},-,{:.6},{:.6},{:.6},{}\n",
                r.role.name(),
                r.n,
                l.beta,
                l.se,
                l.p,
                stars(l.p)
            ));
            for a in &r.acts {
                let frac = a.frac.frac.map_or("-".to_string(), |f| format!("{f:.3}"));
                match a.coef {
                    Some(c) => out.push_str(&format!(
                        "{},{},{},{frac},{:.6},{:.6},{:.6},{}\n",
                        r.role.name(),
                        a.act,
                        a.frac.count,
                        c.beta,
                        c.se,
                        c.p,
                        stars(c.p)
                    )),
                    None => out.push_str(&format!("{},{},0,-,-,-,-,\n", r.role.name(), a.act)),
                }
            }
        }
        out
    }
}
