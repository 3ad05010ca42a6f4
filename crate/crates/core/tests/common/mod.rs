#![allow(dead_code)]

use csntax_core::model::{ModelConfig, ModelParameters};
use csntax_core::ud::{
    CandidateSentence, DepRelTag, Label, LanguageTag, MinimalPair, ParseNode, SentenceGraph, UposTag,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_graph<R: Rng>(rng: &mut R, n: usize) -> SentenceGraph {
    let non_root: Vec<DepRelTag> = DepRelTag::non_root().collect();
    // root placed at a random position; every other node hangs off an earlier-visited node
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut heads = vec![0; n];
    for k in 1..n {
        heads[order[k]] = order[rng.gen_range(0..k)] + 1;
    }
    let nodes = heads
        .into_iter()
        .map(|head| ParseNode {
            upos: UposTag::ALL[rng.gen_range(0..UposTag::COUNT)],
            lang: [LanguageTag::L1, LanguageTag::L2, LanguageTag::Other][rng.gen_range(0..3)],
            head,
            deprel: if head == 0 { DepRelTag::Root } else { non_root[rng.gen_range(0..non_root.len())] },
        })
        .collect();
    SentenceGraph::new(nodes).expect("random tree is valid")
}

pub fn random_candidate<R: Rng>(rng: &mut R, max_len: usize) -> CandidateSentence {
    let n1 = rng.gen_range(1..=max_len);
    let n2 = rng.gen_range(1..=max_len);
    CandidateSentence { g1: random_graph(rng, n1), g2: random_graph(rng, n2) }
}

pub fn random_pair<R: Rng>(rng: &mut R, id: &str, max_len: usize) -> MinimalPair {
    MinimalPair {
        id: id.to_string(),
        label: if rng.gen() { Label::A } else { Label::B },
        human_agreement: if rng.gen() { Some(rng.gen_range(0.0..=1.0)) } else { None },
        a: random_candidate(rng, max_len),
        b: random_candidate(rng, max_len),
    }
}

/// Parameters with every scalar (biases and eps included) drawn from [-scale, scale].
pub fn random_params<R: Rng>(rng: &mut R, cfg: &ModelConfig, scale: f64) -> ModelParameters {
    let mut p = ModelParameters::zeros(cfg).unwrap();
    let flat: Vec<f64> = (0..p.num_params()).map(|_| rng.gen_range(-scale..=scale)).collect();
    p.set_flat(&flat);
    p
}
