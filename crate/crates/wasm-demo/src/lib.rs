//! Browser demo over `csntax-core`. Every operation takes plain numbers and
//! strings and returns a JSON document for the page to render.
//!
//! The `*_json` functions are ordinary Rust and carry the logic; the exported
//! wrappers only convert errors into JavaScript exceptions.

use csntax_core::model::{param_count, Architecture, ModelConfig};
use csntax_core::stats::{paired_permutation_test, unpaired_permutation_test, PermutationReport, StatsConfig};
use csntax_core::synth::{generate_dataset, is_natural, switch_edges, GenConfig, RuleFamily, SyntheticRule};
use csntax_core::train::{evaluate, train, EpochRecord, Optimizer, TrainConfig};
use csntax_core::ud::{CandidateSentence, Dataset, Label, MinimalPair, Split};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest sample for which the exact permutation p-value is enumerated.
pub const EXACT_LIMIT: usize = 16;
pub const MAX_TRAIN_PAIRS: usize = 2000;
pub const MAX_EPOCHS: usize = 50;

#[derive(Serialize)]
struct Switch {
    node: usize,
    allowed: bool,
}

#[derive(Serialize)]
struct CandidateView {
    natural: bool,
    switches: Vec<Switch>,
}

#[derive(Serialize)]
struct PairView {
    rule: SyntheticRule,
    pair: MinimalPair,
    a: CandidateView,
    b: CandidateView,
}

fn view(c: &CandidateSentence, rule: &SyntheticRule) -> CandidateView {
    let depths = c.g1.depths();
    let switches = switch_edges(&c.g1)
        .into_iter()
        .map(|i| Switch { node: i, allowed: rule.allows(&c.g1.nodes[i], depths[i]) })
        .collect();
    CandidateView { natural: is_natural(c, rule), switches }
}

fn family(rule: &str) -> Result<RuleFamily, String> {
    rule.parse()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// One generated pair under a seeded rule, with its switch points marked.
pub fn generate_pair_json(rule: &str, seed: u32, max_len: usize) -> Result<String, String> {
    let rule = SyntheticRule::sample(family(rule)?, seed.into());
    let gcfg = GenConfig { n_pairs: 1, min_len: 3, max_len, perturbation: 0.1, seed: seed.into() };
    let pair = generate_dataset(&rule, &gcfg).map_err(|e| e.to_string())?.pairs.remove(0);
    to_json(&PairView { a: view(&pair.a, &rule), b: view(&pair.b, &rule), rule, pair })
}

#[derive(Serialize)]
struct TrainView {
    parameters: usize,
    initial_train_loss: f64,
    epochs: Vec<EpochRecord>,
    selected_epoch: usize,
    test_accuracy: f64,
    examples: Vec<ExampleView>,
}

#[derive(Serialize)]
struct ExampleView {
    id: String,
    label: Label,
    p_a: f64,
    correct: bool,
}

fn split(rule: &SyntheticRule, split: Split, n: usize, seed: u64) -> Result<Dataset, String> {
    let gcfg = GenConfig { n_pairs: n, min_len: 4, max_len: 10, perturbation: 0.1, seed };
    let mut d = generate_dataset(rule, &gcfg).map_err(|e| e.to_string())?;
    d.split = split;
    Ok(d)
}

/// Trains the default GINE model on freshly generated data and reports the
/// per-epoch curve and test accuracy.
pub fn train_demo_json(rule: &str, n_train: usize, epochs: usize, seed: u32) -> Result<String, String> {
    if !(8..=MAX_TRAIN_PAIRS).contains(&n_train) {
        return Err(format!("training size must lie within 8..={MAX_TRAIN_PAIRS}"));
    }
    if !(1..=MAX_EPOCHS).contains(&epochs) {
        return Err(format!("epochs must lie within 1..={MAX_EPOCHS}"));
    }
    let seed = u64::from(seed);
    let rule = SyntheticRule::sample(family(rule)?, seed);
    let held_out = (n_train / 4).max(20);
    let train_set = split(&rule, Split::Train, n_train, seed)?;
    let val = split(&rule, Split::Validation, held_out, seed + 1)?;
    let test = split(&rule, Split::Test, held_out, seed + 2)?;
    let cfg = ModelConfig { architecture: Architecture::Gine, seed, ..Default::default() };
    let tcfg = TrainConfig {
        learning_rate: 0.001,
        batch_size: 32,
        max_epochs: epochs,
        early_stop_patience: epochs,
        seeds: vec![seed],
        optimizer: Optimizer::default(),
    };
    let (params, report) = train(&train_set, &val, &cfg, &tcfg).map_err(|e| e.to_string())?;
    let eval = evaluate(&params, &test);
    let examples = eval
        .items
        .iter()
        .take(8)
        .map(|it| {
            let [la, lb] = it.logits;
            ExampleView { id: it.id.clone(), label: it.label, p_a: 1.0 / (1.0 + (lb - la).exp()), correct: it.correct }
        })
        .collect();
    to_json(&TrainView {
        parameters: param_count(&cfg).map_err(|e| e.to_string())?,
        initial_train_loss: report.initial_train_loss,
        selected_epoch: report.selected_epoch,
        epochs: report.epochs,
        test_accuracy: eval.accuracy,
        examples,
    })
}

#[derive(Serialize)]
struct PermutationView {
    accuracy_x: f64,
    accuracy_y: f64,
    report: PermutationReport,
    /// Enumerated over every relabeling; absent for large samples.
    exact_p: Option<f64>,
}

fn parse_bits(s: &str) -> Result<Vec<bool>, String> {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| match c {
            '1' => Ok(true),
            '0' => Ok(false),
            other => Err(format!("unexpected `{other}`: outcomes are 0 or 1")),
        })
        .collect()
}

fn mean(v: &[bool]) -> f64 {
    v.iter().filter(|&&b| b).count() as f64 / v.len() as f64
}

/// Exact two-sided p-value of the paired sign-flip test.
pub fn exact_paired(x: &[bool], y: &[bool]) -> f64 {
    let d: Vec<i64> = x.iter().zip(y).map(|(&a, &b)| a as i64 - b as i64).collect();
    let observed = d.iter().sum::<i64>().abs();
    let n = d.len();
    let hits = (0u64..1 << n)
        .filter(|m| (0..n).map(|i| if m >> i & 1 == 1 { -d[i] } else { d[i] }).sum::<i64>().abs() >= observed)
        .count();
    hits as f64 / (1u64 << n) as f64
}

/// Exact two-sided p-value over all ways to split the pooled outcomes.
pub fn exact_unpaired(x: &[bool], y: &[bool]) -> f64 {
    let pooled: Vec<bool> = x.iter().chain(y).copied().collect();
    let (nx, ny) = (x.len() as i64, y.len() as i64);
    let total_ones = pooled.iter().filter(|&&b| b).count() as i64;
    // scaled statistic: ones(x) * ny - ones(y) * nx
    let stat = |ones_x: i64| (ones_x * ny - (total_ones - ones_x) * nx).abs();
    let observed = stat(x.iter().filter(|&&b| b).count() as i64);
    let (mut hits, mut total) = (0u64, 0u64);
    for m in 0u64..1 << pooled.len() {
        if m.count_ones() as i64 != nx {
            continue;
        }
        let ones_x = (0..pooled.len()).filter(|&i| m >> i & 1 == 1 && pooled[i]).count() as i64;
        total += 1;
        hits += (stat(ones_x) >= observed) as u64;
    }
    hits as f64 / total as f64
}

/// Monte Carlo permutation test on two 0/1 outcome strings, with the exact
/// value alongside when the sample is small enough to enumerate.
pub fn permutation_json(x: &str, y: &str, paired: bool, replications: usize, seed: u32) -> Result<String, String> {
    let (x, y) = (parse_bits(x)?, parse_bits(y)?);
    let cfg = StatsConfig { replications, seed: seed.into(), ..Default::default() };
    let (report, exact_p) = if paired {
        let r = paired_permutation_test(&x, &y, &cfg).map_err(|e| e.to_string())?;
        (r, (x.len() <= EXACT_LIMIT).then(|| exact_paired(&x, &y)))
    } else {
        let r = unpaired_permutation_test(&x, &y, &cfg).map_err(|e| e.to_string())?;
        (r, (x.len() + y.len() <= EXACT_LIMIT).then(|| exact_unpaired(&x, &y)))
    };
    to_json(&PermutationView { accuracy_x: mean(&x), accuracy_y: mean(&y), report, exact_p })
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = generatePair)]
pub fn generate_pair(rule: &str, seed: u32, max_len: usize) -> Result<String, JsValue> {
    js(generate_pair_json(rule, seed, max_len))
}

#[wasm_bindgen(js_name = trainDemo)]
pub fn train_demo(rule: &str, n_train: usize, epochs: usize, seed: u32) -> Result<String, JsValue> {
    js(train_demo_json(rule, n_train, epochs, seed))
}

#[wasm_bindgen(js_name = permutationTest)]
pub fn permutation_test(x: &str, y: &str, paired: bool, replications: usize, seed: u32) -> Result<String, JsValue> {
    js(permutation_json(x, y, paired, replications, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bits_parse() {
        assert_eq!(parse_bits("1 0,1").unwrap(), vec![true, false, true]);
        assert!(parse_bits("102").is_err());
    }

    #[test]
    fn exact_values() {
        let b = |s: &str| parse_bits(s).unwrap();
        assert_eq!(exact_paired(&b("1110"), &b("0000")), 0.25);
        assert!((exact_unpaired(&b("11"), &b("00")) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(exact_paired(&b("101"), &b("101")), 1.0);
    }
}
