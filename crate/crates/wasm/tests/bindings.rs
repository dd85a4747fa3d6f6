use mwauction_wasm::{residual_curve_json, revenue_curve_json, search_json};
use serde_json::Value;

fn demo() -> String {
    std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../instances/single_buyer.json"
    ))
    .unwrap()
}

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn revenue_curve_turns_infeasible_above_opt() {
    let v = parse(revenue_curve_json(&demo(), 0.15, 5, 2.0, 0).unwrap());
    assert_eq!(v["opt"], 1.0);
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 5);
    assert_eq!(pts[0]["feasible"], true);
    assert_eq!(pts[4]["feasible"], false);
    for p in pts.iter().filter(|p| p["feasible"] == true) {
        assert!(p["objective"].as_f64().unwrap() >= p["target"].as_f64().unwrap() - 0.3);
        assert!(p["bic"].as_f64().unwrap() <= 0.3);
    }
}

#[test]
fn averaged_residual_reaches_zero() {
    let v = parse(residual_curve_json(&demo(), 0.15, 0.8, 600, 0).unwrap());
    let mean = v["mean_violation"].as_array().unwrap();
    assert_eq!(mean.len(), 600);
    assert_eq!(v["status"], "feasible");
    assert!(mean.last().unwrap().as_f64().unwrap() < mean[0].as_f64().unwrap());
}

#[test]
fn search_passes_and_bad_input_errors() {
    let v = parse(search_json(&demo(), 0.15, 0).unwrap());
    assert_eq!(v["report"]["pass"], true);
    assert!(search_json("{}", 0.15, 0).unwrap_err().contains("malformed"));
    let bad = demo().replace("0.5, 0.5", "0.5, 0.6");
    assert!(search_json(&bad, 0.15, 0).unwrap_err().contains("invalid instance"));
}
