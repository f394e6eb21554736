//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export takes and returns plain strings (JSON on the way out) so the
//! page needs no generated type glue beyond the wasm-bindgen loader. The
//! `*_json` functions hold the logic and are what the native tests call.

use facedyn::model::DonationTrace;
use facedyn::taxonomy::{cohens_kappa, FaceAct, FlowStep, Flowchart};
use facedyn::train::metrics::mcnemar;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Serialize)]
struct TraceView {
    probs: Vec<f64>,
    /// Interval every step must fall in when deltas lie in (-1, 1) and
    /// the initial value in [0, 1).
    lower: f64,
    upper: f64,
}

/// Run the donation recursion `o_j = sigmoid(o_{j-1} + d_j)` over
/// comma- or space-separated deltas.
pub fn trace_json(initial: f64, deltas: &str) -> Result<String, String> {
    if !(0.0..1.0).contains(&initial) {
        return Err(format!("initial value {initial} must lie in [0, 1)"));
    }
    let deltas = parse_numbers(deltas)?;
    if let Some(d) = deltas.iter().find(|d| d.abs() >= 1.0) {
        return Err(format!("delta {d} is outside (-1, 1)"));
    }
    let t = DonationTrace::from_deltas(initial, deltas);
    Ok(serde_json::to_string(&TraceView {
        probs: t.probs,
        lower: sigmoid(-1.0),
        upper: sigmoid(2.0),
    })
    .expect("serializes"))
}

fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}")))
        .collect()
}

fn parse_labels(text: &str) -> Result<Vec<FaceAct>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<FaceAct>().map_err(|e| e.to_string()))
        .collect()
}

/// Follow newline-separated `answers` from the root of the bundled
/// flowchart. Returns the next question or the reached face act.
pub fn flowchart_json(answers: &str) -> Result<String, String> {
    let chart = Flowchart::bundled();
    let mut node = chart.root();
    for a in answers.lines().map(str::trim).filter(|a| !a.is_empty()) {
        match chart.step(node, a).map_err(|e| e.to_string())? {
            FlowStep::Node(n) => node = n,
            FlowStep::Label(l) => return Ok(json!({ "label": l.name() }).to_string()),
        }
    }
    Ok(json!({
        "id": node.id,
        "question": node.question,
        "answers": node.answer_texts(),
    })
    .to_string())
}

/// Cohen's kappa between two label sequences, plus McNemar's test when a
/// gold sequence is given (treating the two as competing predictions).
pub fn agreement_json(a: &str, b: &str, gold: &str) -> Result<String, String> {
    let a = parse_labels(a)?;
    let b = parse_labels(b)?;
    let ag = cohens_kappa(&a, &b).map_err(|e| e.to_string())?;
    let gold = parse_labels(gold)?;
    let test = if gold.is_empty() {
        None
    } else {
        Some(mcnemar(&a, &b, &gold).map_err(|e| e.to_string())?)
    };
    Ok(json!({ "agreement": ag, "mcnemar": test }).to_string())
}

#[wasm_bindgen]
pub fn trace(initial: f64, deltas: &str) -> Result<String, JsError> {
    trace_json(initial, deltas).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn flowchart(answers: &str) -> Result<String, JsError> {
    flowchart_json(answers).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn agreement(a: &str, b: &str, gold: &str) -> Result<String, JsError> {
    agreement_json(a, b, gold).map_err(|e| JsError::new(&e))
}
