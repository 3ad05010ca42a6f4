use csntax_wasm_demo::{generate_pair_json, permutation_json, train_demo_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn generated_pair_has_one_natural_side() {
    for rule in ["deprel-set", "pos-set", "depth-limit"] {
        for seed in 0..20 {
            let v = parse(generate_pair_json(rule, seed, 8).unwrap());
            let (a, b) = (v["a"]["natural"].as_bool().unwrap(), v["b"]["natural"].as_bool().unwrap());
            assert_ne!(a, b);
            let label = v["pair"]["label"].as_str().unwrap();
            assert_eq!(label == "A", a);
            assert_eq!(parse(generate_pair_json(rule, seed, 8).unwrap()), v);
        }
    }
    assert!(generate_pair_json("word-order", 0, 8).is_err());
    assert!(generate_pair_json("deprel-set", 0, 2).is_err());
}

#[test]
fn tiny_model_learns_the_rule() {
    let v = parse(train_demo_json("deprel-set", 1500, 20, 3).unwrap());
    let epochs = v["epochs"].as_array().unwrap();
    assert_eq!(epochs.len(), 20);
    assert!(v["test_accuracy"].as_f64().unwrap() >= 0.9, "{v}");
    assert!(v["parameters"].as_u64().unwrap() > 0);
    assert_eq!(train_demo_json("deprel-set", 40, 2, 3).unwrap(), train_demo_json("deprel-set", 40, 2, 3).unwrap());
    assert!(train_demo_json("deprel-set", 4, 2, 3).is_err());
    assert!(train_demo_json("deprel-set", 40, 0, 3).is_err());
}

#[test]
fn permutation_explorer_reports_exact_value() {
    let v = parse(permutation_json("1110", "0000", true, 10_000, 0).unwrap());
    assert_eq!(v["exact_p"].as_f64().unwrap(), 0.25);
    assert!((v["report"]["p_value"].as_f64().unwrap() - 0.25).abs() < 0.02);
    assert_eq!(v["accuracy_x"].as_f64().unwrap(), 0.75);

    let v = parse(permutation_json("11", "00", false, 10_000, 0).unwrap());
    assert!((v["exact_p"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);

    let long = "1".repeat(40);
    let v = parse(permutation_json(&long, &long, true, 100, 0).unwrap());
    assert!(v["exact_p"].is_null());
    assert!(permutation_json("1", "10", true, 100, 0).is_err());
}
