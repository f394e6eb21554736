use std::collections::BTreeMap;

use serde::Serialize;

use super::TaxonomyError;

/// Observed and chance agreement between two annotators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Agreement {
    pub n: usize,
    pub observed: f64,
    pub expected: f64,
    pub kappa: f64,
}

/// Square contingency table over the labels either annotator used, in
/// sorted label order. Rows index `a`, columns index `b`.
pub fn contingency<T: Ord + Clone>(a: &[T], b: &[T]) -> Result<(Vec<T>, Vec<Vec<usize>>), TaxonomyError> {
    if a.len() != b.len() {
        return Err(TaxonomyError::LengthMismatch(a.len(), b.len()));
    }
    let mut index: BTreeMap<T, usize> = BTreeMap::new();
    for l in a.iter().chain(b) {
        index.entry(l.clone()).or_insert(0);
    }
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    let k = index.len();
    let mut table = vec![vec![0usize; k]; k];
    for (x, y) in a.iter().zip(b) {
        table[index[x]][index[y]] += 1;
    }
    Ok((index.into_keys().collect(), table))
}

/// Cohen's kappa, `(p_o - p_e) / (1 - p_e)`.
///
/// When chance agreement is 1 both annotators used one identical label
/// throughout, and kappa is reported as 1.
pub fn cohens_kappa<T: Ord + Clone>(a: &[T], b: &[T]) -> Result<Agreement, TaxonomyError> {
    let (_, table) = contingency(a, b)?;
    if a.is_empty() {
        return Err(TaxonomyError::Empty);
    }
    let n = a.len() as f64;
    let k = table.len();
    let diag: usize = (0..k).map(|i| table[i][i]).sum();
    let observed = diag as f64 / n;
    let expected: f64 = (0..k)
        .map(|i| {
            let row: usize = table[i].iter().sum();
            let col: usize = table.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    let kappa = if (1.0 - expected).abs() < 1e-15 {
        1.0
    } else {
        (observed - expected) / (1.0 - expected)
    };
    Ok(Agreement {
        n: a.len(),
        observed,
        expected,
        kappa,
    })
}
