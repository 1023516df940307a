use serde_json::Value;
use smp_wasm_demo::{certify_json, simulate_json, synthesize_json};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn simulate_returns_matching_series() {
    let out = simulate_json(r#"{"k":[0.39,0.62],"theta":"constant","paths":500,"steps":20,"seed":3}"#).unwrap();
    let v = parse(&out);
    let ms = v["mean_square"].as_array().unwrap();
    let ex = v["expanded"].as_array().unwrap();
    assert_eq!(ms.len(), 21);
    assert_eq!(ex.len(), 21);
    assert_eq!(ms[0].as_f64().unwrap(), 2.0);
    assert!(v["expanded_beta_hat"].as_f64().unwrap() < 0.985);
}

#[test]
fn simulate_rejects_bad_requests() {
    assert!(simulate_json(r#"{"k":[0,0],"theta":"constant","paths":0,"steps":5,"seed":1}"#).is_err());
    assert!(simulate_json(r#"{"k":[0,0],"theta":"sometimes","paths":5,"steps":5,"seed":1}"#).is_err());
    assert!(simulate_json("not json").is_err());
}

#[test]
fn certify_separates_designed_and_zero_gain() {
    let good = parse(&certify_json(r#"{"k":[0.3921,0.6183],"beta_tilde":0.97}"#).unwrap());
    assert_eq!(good["certified"], Value::Bool(true));
    let zero = parse(&certify_json(r#"{"k":[0.0,0.0],"beta_tilde":0.97}"#).unwrap());
    assert_eq!(zero["certified"], Value::Bool(false));
    assert!(zero["corner_rates"].as_array().unwrap().iter().any(|r| r.as_f64().unwrap() > 1.0));
    assert!(certify_json(r#"{"k":[0.0,0.0],"beta_tilde":1.5}"#).is_err());
}

#[test]
fn synthesize_reports_trace() {
    let v = parse(&synthesize_json(r#"{"beta_tilde":0.97,"eta":0.1}"#).unwrap());
    assert_eq!(v["status"], Value::String("verified".into()));
    let eps = v["epsilon"].as_array().unwrap();
    assert!(eps.len() >= 2);
    assert!(eps.last().unwrap().as_f64().unwrap() < 1e-6);
}
