use facedyn::taxonomy::Flowchart;
use facedyn_demo::{agreement_json, flowchart_json, trace_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn trace_stays_inside_its_bounds() {
    let v = parse(&trace_json(0.0, "0.999, 0.999 0.999,-0.999 -0.999").unwrap());
    let (lo, hi) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
    let probs: Vec<f64> = v["probs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_f64().unwrap())
        .collect();
    assert_eq!(probs.len(), 5);
    assert!(probs.iter().all(|p| *p > lo && *p < hi), "{probs:?}");
    assert!((probs[0] - 1.0 / (1.0 + (-0.999f64).exp())).abs() < 1e-15);
    assert!(trace_json(0.0, "1.0").is_err());
    assert!(trace_json(1.0, "0").is_err());
    assert!(trace_json(0.0, "abc").is_err());
}

#[test]
fn flowchart_walk_matches_direct_evaluation() {
    let chart = Flowchart::bundled();
    let root = parse(&flowchart_json("").unwrap());
    assert_eq!(root["id"], chart.root().id.as_str());
    for (path, label) in chart.paths() {
        let v = parse(&flowchart_json(&path.join("\n")).unwrap());
        assert_eq!(v["label"], label.name(), "path {path:?}");
        let partial = parse(&flowchart_json(&path[..path.len() - 1].join("\n")).unwrap());
        assert!(partial["question"].is_string());
    }
    assert!(flowchart_json("not an answer").is_err());
}

#[test]
fn agreement_and_mcnemar() {
    let v = parse(&agreement_json("HPos+ SNeg+ Other", "HPos+,SNeg+,Other", "").unwrap());
    assert_eq!(v["agreement"]["kappa"], 1.0);
    assert!(v["mcnemar"].is_null());

    let v = parse(
        &agreement_json(
            "HPos+ HPos+ Other Other",
            "HPos+ Other Other HPos+",
            "HPos+ HPos+ Other Other",
        )
        .unwrap(),
    );
    assert_eq!(v["agreement"]["kappa"], 0.0);
    assert_eq!(v["mcnemar"]["b"], 2);
    assert_eq!(v["mcnemar"]["c"], 0);
    assert!(agreement_json("HPos+", "HPos+ Other", "").is_err());
    assert!(agreement_json("Nope", "Nope", "").is_err());
}
