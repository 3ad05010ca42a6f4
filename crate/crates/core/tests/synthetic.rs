use std::collections::HashMap;

use csntax_core::synth::{generate_dataset, switch_edges, GenConfig, RuleFamily, SyntheticRule};
use csntax_core::ud::{Label, MinimalPair};

/// Plug-in mutual information (nats) of two discrete samples.
fn mutual_information(xs: &[usize], ys: &[usize]) -> f64 {
    let n = xs.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut px: HashMap<usize, f64> = HashMap::new();
    let mut py: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in xs.iter().zip(ys) {
        *joint.entry((x, y)).or_default() += 1.0;
        *px.entry(x).or_default() += 1.0;
        *py.entry(y).or_default() += 1.0;
    }
    joint.iter().map(|(&(x, y), &c)| c / n * (c * n / (px[&x] * py[&y])).ln()).sum()
}

/// Node whose language differs between the candidates.
fn pivot(pair: &MinimalPair) -> usize {
    pair.a.g1.nodes.iter().zip(&pair.b.g1.nodes).position(|(u, v)| u.lang != v.lang).unwrap()
}

// Under independence 2·n·MI is asymptotically chi-squared with (17-1)(2-1) = 16
// degrees of freedom; 39.25 is its 0.999 quantile.
const CHI2_16_999: f64 = 39.25;

#[test]
fn deprel_labels_carry_no_pos_information() {
    let rule = SyntheticRule::sample(RuleFamily::DeprelSet, 7);
    let n = 10_000;
    let d = generate_dataset(&rule, &GenConfig { n_pairs: n, seed: 2024, ..Default::default() }).unwrap();
    let labels: Vec<usize> = d.pairs.iter().map(|p| p.label.index()).collect();
    let pivot_pos: Vec<usize> = d.pairs.iter().map(|p| p.a.g1.nodes[pivot(p)].upos.index()).collect();
    let root_pos: Vec<usize> = d
        .pairs
        .iter()
        .map(|p| p.a.g1.nodes.iter().find(|x| x.head == 0).unwrap().upos.index())
        .collect();
    for (what, feature) in [("pivot", &pivot_pos), ("root", &root_pos)] {
        let mi = mutual_information(&labels, feature);
        assert!(2.0 * n as f64 * mi < CHI2_16_999, "{what}: MI {mi}");
    }
}

#[test]
fn labels_are_balanced_and_switch_counts_uninformative() {
    let rule = SyntheticRule::sample(RuleFamily::DeprelSet, 7);
    let d = generate_dataset(&rule, &GenConfig { n_pairs: 4000, seed: 99, ..Default::default() }).unwrap();
    let a_share = d.pairs.iter().filter(|p| p.label == Label::A).count() as f64 / 4000.0;
    assert!((a_share - 0.5).abs() < 0.04, "{a_share}");
    // "natural side has fewer switch edges" must not predict the label
    let (mut hits, mut decided) = (0usize, 0usize);
    for p in &d.pairs {
        let (sa, sb) = (switch_edges(&p.a.g1).len(), switch_edges(&p.b.g1).len());
        if sa != sb {
            decided += 1;
            let guess = if sa < sb { Label::A } else { Label::B };
            hits += (guess == p.label) as usize;
        }
    }
    let acc = hits as f64 / decided as f64;
    assert!((acc - 0.5).abs() < 0.05, "switch-count heuristic accuracy {acc} over {decided}");
}
