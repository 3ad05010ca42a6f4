//! Numeric union graphs and the feature-randomization harness used for
//! ablations.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ud::{
    CandidateSentence, Dataset, DepRelTag, Label, LanguageTag, MinimalPair, SentenceGraph, UposTag,
};

/// Which monolingual parse a node came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    FromG1,
    FromG2,
}

impl Origin {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Feature index spaces. The vocabularies are closed, so the sizes are fixed;
/// bumping [`FeatureVocab::VERSION`] invalidates checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureVocab;

impl FeatureVocab {
    pub const VERSION: u32 = 1;
    pub const UPOS: usize = UposTag::COUNT;
    pub const DEPREL: usize = DepRelTag::COUNT;
    pub const LANG: usize = LanguageTag::COUNT;
    pub const ORIGIN: usize = Origin::COUNT;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub rel: u8,
}

/// Union graph of one candidate sentence: the g1 nodes followed by the g2
/// nodes, with no edges between the two components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedGraph {
    pub node_upos: Vec<u8>,
    pub node_lang: Vec<u8>,
    pub node_origin: Vec<u8>,
    pub edges: Vec<Edge>,
}

impl EncodedGraph {
    pub fn node_count(&self) -> usize {
        self.node_upos.len()
    }

    pub fn component(&self, node: usize) -> Origin {
        if self.node_origin[node] == 0 {
            Origin::FromG1
        } else {
            Origin::FromG2
        }
    }

    fn push_sentence(&mut self, g: &SentenceGraph, origin: Origin) {
        let offset = self.node_count() as u32;
        for node in &g.nodes {
            self.node_upos.push(node.upos.index() as u8);
            self.node_lang.push(node.lang.index() as u8);
            self.node_origin.push(origin.index() as u8);
        }
        for (pos, node) in g.nodes.iter().enumerate() {
            let me = offset + pos as u32;
            self.edges.push(Edge { src: me, dst: me, rel: DepRelTag::SelfLoop.index() as u8 });
            if node.head != 0 {
                let head = offset + node.head as u32 - 1;
                let rel = node.deprel.index() as u8;
                self.edges.push(Edge { src: head, dst: me, rel });
                self.edges.push(Edge { src: me, dst: head, rel });
            }
        }
    }

    /// Checks the structural invariants of the encoding.
    pub fn is_well_formed(&self) -> bool {
        let n = self.node_count();
        if self.node_lang.len() != n || self.node_origin.len() != n {
            return false;
        }
        let features_ok = self.node_upos.iter().all(|&u| (u as usize) < FeatureVocab::UPOS)
            && self.node_lang.iter().all(|&l| (l as usize) < FeatureVocab::LANG)
            && self.node_origin.iter().all(|&o| (o as usize) < FeatureVocab::ORIGIN);
        if !features_ok {
            return false;
        }
        let self_rel = DepRelTag::SelfLoop.index() as u8;
        let mut self_loops = vec![0usize; n];
        let mut forward = Vec::new();
        let mut backward = Vec::new();
        for e in &self.edges {
            let (s, d) = (e.src as usize, e.dst as usize);
            if s >= n || d >= n || (e.rel as usize) >= FeatureVocab::DEPREL {
                return false;
            }
            if self.node_origin[s] != self.node_origin[d] {
                return false;
            }
            if s == d {
                if e.rel != self_rel {
                    return false;
                }
                self_loops[s] += 1;
            } else {
                forward.push((e.src, e.dst, e.rel));
                backward.push((e.dst, e.src, e.rel));
            }
        }
        forward.sort_unstable();
        backward.sort_unstable();
        self_loops.iter().all(|&c| c == 1) && forward == backward
    }
}

/// Encodes one candidate as a union graph with self-loops and bidirectional
/// dependency edges sharing the relation index.
pub fn encode_candidate(c: &CandidateSentence) -> EncodedGraph {
    let n = c.g1.len() + c.g2.len();
    let mut enc = EncodedGraph {
        node_upos: Vec::with_capacity(n),
        node_lang: Vec::with_capacity(n),
        node_origin: Vec::with_capacity(n),
        edges: Vec::with_capacity(3 * n),
    };
    enc.push_sentence(&c.g1, Origin::FromG1);
    enc.push_sentence(&c.g2, Origin::FromG2);
    enc
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub a: EncodedGraph,
    pub b: EncodedGraph,
    pub label: Label,
}

impl EncodedPair {
    pub fn graph(&self, side: Label) -> &EncodedGraph {
        match side {
            Label::A => &self.a,
            Label::B => &self.b,
        }
    }
}

pub fn encode_pair(pair: &MinimalPair) -> EncodedPair {
    EncodedPair { a: encode_candidate(&pair.a), b: encode_candidate(&pair.b), label: pair.label }
}

pub fn encode_dataset(d: &Dataset) -> Vec<EncodedPair> {
    d.pairs.iter().map(encode_pair).collect()
}

/// Information source destroyed by an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    None,
    RandomDeprel,
    RandomPos,
    RandomDeprelPos,
    RandomLang,
    RandomAll,
}

impl AblationMode {
    pub const ALL: [AblationMode; 6] = [
        AblationMode::None,
        AblationMode::RandomDeprel,
        AblationMode::RandomPos,
        AblationMode::RandomDeprelPos,
        AblationMode::RandomLang,
        AblationMode::RandomAll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::None => "none",
            AblationMode::RandomDeprel => "random_deprel",
            AblationMode::RandomPos => "random_pos",
            AblationMode::RandomDeprelPos => "random_deprel_pos",
            AblationMode::RandomLang => "random_lang",
            AblationMode::RandomAll => "random_all",
        }
    }

    pub fn randomizes_deprel(self) -> bool {
        matches!(self, Self::RandomDeprel | Self::RandomDeprelPos | Self::RandomAll)
    }

    pub fn randomizes_pos(self) -> bool {
        matches!(self, Self::RandomPos | Self::RandomDeprelPos | Self::RandomAll)
    }

    pub fn randomizes_lang(self) -> bool {
        matches!(self, Self::RandomLang | Self::RandomAll)
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s || m.as_str().replace('_', "-") == s)
            .ok_or_else(|| format!("unknown ablation mode `{s}`"))
    }
}

/// Re-draws the features selected by `mode` independently and uniformly for
/// every token (or every dependency, for relations). Tree structure, ids,
/// labels and agreement values are untouched. `SELF` is never drawn.
pub fn randomize_features(d: &Dataset, mode: AblationMode, seed: u64) -> Dataset {
    let mut out = d.clone();
    if mode == AblationMode::None {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relations = DepRelTag::universal();
    for pair in &mut out.pairs {
        for cand in [&mut pair.a, &mut pair.b] {
            for g in [&mut cand.g1, &mut cand.g2] {
                for node in &mut g.nodes {
                    if mode.randomizes_pos() {
                        node.upos = UposTag::ALL[rng.gen_range(0..UposTag::COUNT)];
                    }
                    if mode.randomizes_deprel() {
                        node.deprel = relations[rng.gen_range(0..relations.len())];
                    }
                    if mode.randomizes_lang() {
                        node.lang = LanguageTag::ALL[rng.gen_range(0..LanguageTag::COUNT)];
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ud::{ParseNode, Split};

    fn tree(heads: &[usize]) -> SentenceGraph {
        SentenceGraph::new(
            heads
                .iter()
                .map(|&head| ParseNode {
                    upos: UposTag::Verb,
                    lang: LanguageTag::L2,
                    head,
                    deprel: if head == 0 { DepRelTag::Root } else { DepRelTag::Obj },
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_tokens_encode_to_two_self_loops() {
        let c = CandidateSentence { g1: tree(&[0]), g2: tree(&[0]) };
        let enc = encode_candidate(&c);
        assert_eq!(enc.node_count(), 2);
        assert_eq!(enc.edges.len(), 2);
        assert!(enc.edges.iter().all(|e| e.src == e.dst && e.rel == 37));
        assert_eq!(enc.node_origin, vec![0, 1]);
        assert!(enc.is_well_formed());
    }

    #[test]
    fn edge_count_for_three_plus_two() {
        let c = CandidateSentence { g1: tree(&[0, 1, 1]), g2: tree(&[2, 0]) };
        let enc = encode_candidate(&c);
        assert_eq!(enc.node_count(), 5);
        // hand enumeration: g1 has 2 dependencies (4 directed edges) + 3 loops,
        // g2 has 1 dependency (2 edges) + 2 loops
        let mut expected = vec![
            (0, 0, 37), (1, 1, 37), (2, 2, 37), (0, 1, 28), (1, 0, 28), (0, 2, 28), (2, 0, 28),
            (3, 3, 37), (4, 4, 37), (4, 3, 28), (3, 4, 28),
        ];
        let mut got: Vec<(u32, u32, u8)> = enc.edges.iter().map(|e| (e.src, e.dst, e.rel)).collect();
        expected.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, expected);
        assert_eq!(enc.node_origin, vec![0, 0, 0, 1, 1]);
        assert_eq!(enc.component(3), Origin::FromG2);
    }

    #[test]
    fn ablation_mode_names() {
        for m in AblationMode::ALL {
            assert_eq!(m.as_str().parse::<AblationMode>().unwrap(), m);
        }
        assert_eq!("random-lang".parse::<AblationMode>().unwrap(), AblationMode::RandomLang);
        assert!("random".parse::<AblationMode>().is_err());
    }

    fn toy_dataset(n: usize) -> Dataset {
        let c = CandidateSentence { g1: tree(&[0, 1, 1, 2, 2]), g2: tree(&[2, 0, 2, 3, 3]) };
        let pairs = (0..n)
            .map(|i| MinimalPair {
                id: format!("p{i}"),
                label: if i % 2 == 0 { Label::A } else { Label::B },
                human_agreement: Some(0.5),
                a: c.clone(),
                b: c.clone(),
            })
            .collect();
        Dataset::new(Split::Train, pairs)
    }

    #[test]
    fn none_is_identity() {
        let d = toy_dataset(3);
        assert_eq!(randomize_features(&d, AblationMode::None, 9), d);
    }

    #[test]
    fn random_lang_is_uniform() {
        // 500 pairs x 20 tokens = 10,000 token draws
        let d = toy_dataset(500);
        let r = randomize_features(&d, AblationMode::RandomLang, 1);
        let mut counts = [0usize; 3];
        let mut total = 0;
        for p in &r.pairs {
            for c in [&p.a, &p.b] {
                for g in [&c.g1, &c.g2] {
                    for n in &g.nodes {
                        counts[n.lang.index()] += 1;
                        total += 1;
                    }
                }
            }
        }
        assert_eq!(total, 10_000);
        for c in counts {
            let frac = c as f64 / total as f64;
            assert!((frac - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn random_all_keeps_structure() {
        let d = toy_dataset(20);
        let r = randomize_features(&d, AblationMode::RandomAll, 5);
        let mut changed = [false; 3];
        for (p, q) in d.pairs.iter().zip(&r.pairs) {
            assert_eq!(p.id, q.id);
            assert_eq!(p.label, q.label);
            assert_eq!(p.human_agreement, q.human_agreement);
            for (c, e) in [(&p.a, &q.a), (&p.b, &q.b)] {
                for (g, h) in [(&c.g1, &e.g1), (&c.g2, &e.g2)] {
                    assert_eq!(g.len(), h.len());
                    for (x, y) in g.nodes.iter().zip(&h.nodes) {
                        assert_eq!(x.head, y.head);
                        assert_ne!(y.deprel, DepRelTag::SelfLoop);
                        changed[0] |= x.upos != y.upos;
                        changed[1] |= x.deprel != y.deprel;
                        changed[2] |= x.lang != y.lang;
                    }
                    assert!(h.validate().is_ok());
                }
            }
        }
        assert_eq!(changed, [true; 3]);
    }

    #[test]
    fn random_pos_leaves_other_features() {
        let d = toy_dataset(10);
        let r = randomize_features(&d, AblationMode::RandomPos, 2);
        for (p, q) in d.pairs.iter().zip(&r.pairs) {
            for (x, y) in p.a.g1.nodes.iter().zip(&q.a.g1.nodes) {
                assert_eq!((x.lang, x.deprel, x.head), (y.lang, y.deprel, y.head));
            }
        }
    }

    #[test]
    fn seeds_matter() {
        let d = toy_dataset(10);
        for mode in &AblationMode::ALL[1..] {
            let x = randomize_features(&d, *mode, 1);
            let y = randomize_features(&d, *mode, 2);
            assert_ne!(x, y, "{mode}");
            assert_eq!(x, randomize_features(&d, *mode, 1));
        }
    }
}
