//! Planted-rule minimal pairs.
//!
//! A rule decides which dependency edges may carry a language switch. Every
//! generated pair contains one candidate whose switch edges all satisfy the
//! rule and one that violates it, differing in the language of a single node.
//!
//! Construction: sample a random-attachment tree and a split edge `h → d`;
//! the base labelling puts the subtree under `d` in L2 and everything else in
//! L1. A pivot node `v ∈ {h, d}` is chosen and the two candidates are the base
//! labelling and the base labelling with `v` flipped. Flipping `v` trades the
//! single base switch edge for all other edges of `v`. A fair coin picks which
//! of the two is natural, and only the rule-relevant attributes of those
//! switch edges are conditioned on that coin. Without the rule attributes, the
//! two candidates are exchangeable, so a model can only beat chance by reading
//! them.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ud::{
    CandidateSentence, Dataset, DepRelTag, Label, LanguageTag, MinimalPair, ParseNode,
    SentenceGraph, Split, UposTag,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleFamily {
    DeprelSet,
    PosSet,
    DepthLimit,
}

impl std::str::FromStr for RuleFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "deprel_set" => Ok(RuleFamily::DeprelSet),
            "pos_set" => Ok(RuleFamily::PosSet),
            "depth_limit" => Ok(RuleFamily::DepthLimit),
            _ => Err(format!("unknown rule family `{s}` (deprel-set, pos-set, depth-limit)")),
        }
    }
}

/// Which switch edges a rule allows, judged on the dependent of the edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SyntheticRule {
    DeprelSet { allowed: BTreeSet<DepRelTag> },
    PosSet { allowed: BTreeSet<UposTag> },
    DepthLimit { max_depth: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("rule is unsatisfiable at lengths {min_len}..={max_len}: {attempts} attempts failed")]
    Unsatisfiable { min_len: usize, max_len: usize, attempts: usize },
    #[error("pair `{id}` is ambiguous under the rule: {reason}")]
    Ambiguous { id: String, reason: &'static str },
}

const MAX_ATTEMPTS: usize = 1000;

impl SyntheticRule {
    pub fn family(&self) -> RuleFamily {
        match self {
            SyntheticRule::DeprelSet { .. } => RuleFamily::DeprelSet,
            SyntheticRule::PosSet { .. } => RuleFamily::PosSet,
            SyntheticRule::DepthLimit { .. } => RuleFamily::DepthLimit,
        }
    }

    /// A seeded default rule: half of the non-root relations, 8 of the 17 POS
    /// tags, or depth at most 2.
    pub fn sample(family: RuleFamily, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match family {
            RuleFamily::DeprelSet => {
                let mut rels: Vec<DepRelTag> = DepRelTag::non_root().collect();
                rels.shuffle(&mut rng);
                SyntheticRule::DeprelSet { allowed: rels[..rels.len() / 2].iter().copied().collect() }
            }
            RuleFamily::PosSet => {
                let mut tags = UposTag::ALL.to_vec();
                tags.shuffle(&mut rng);
                SyntheticRule::PosSet { allowed: tags[..8].iter().copied().collect() }
            }
            RuleFamily::DepthLimit => SyntheticRule::DepthLimit { max_depth: 2 },
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        match self {
            SyntheticRule::DeprelSet { allowed } => {
                if allowed.contains(&DepRelTag::SelfLoop) {
                    return Err(SynthError::InvalidRule("SELF cannot be an allowed relation".into()));
                }
                let usable = DepRelTag::non_root().filter(|r| allowed.contains(r)).count();
                if usable == 0 || usable == DepRelTag::non_root().count() {
                    return Err(SynthError::InvalidRule(
                        "allowed relations must be a nonempty proper subset of the non-root relations".into(),
                    ));
                }
            }
            SyntheticRule::PosSet { allowed } => {
                if allowed.is_empty() || allowed.len() == UposTag::COUNT {
                    return Err(SynthError::InvalidRule(
                        "allowed POS tags must be a nonempty proper subset".into(),
                    ));
                }
            }
            SyntheticRule::DepthLimit { max_depth } => {
                if *max_depth == 0 {
                    return Err(SynthError::InvalidRule("depth limit must be at least 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Whether a switch on the edge into `dependent` (at `depth`) is allowed.
    pub fn allows(&self, dependent: &ParseNode, depth: usize) -> bool {
        match self {
            SyntheticRule::DeprelSet { allowed } => allowed.contains(&dependent.deprel),
            SyntheticRule::PosSet { allowed } => allowed.contains(&dependent.upos),
            SyntheticRule::DepthLimit { max_depth } => depth <= *max_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_pairs: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a non-root relation in g2 is re-drawn.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { n_pairs: 1000, min_len: 5, max_len: 15, perturbation: 0.1, seed: 0 }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_pairs == 0 {
            return Err(SynthError::InvalidConfig("n_pairs must be at least 1".into()));
        }
        if self.min_len < 2 || self.max_len > 64 || self.min_len > self.max_len {
            return Err(SynthError::InvalidConfig(format!(
                "length range {}..={} must lie within 2..=64",
                self.min_len, self.max_len
            )));
        }
        if !(0.0..=1.0).contains(&self.perturbation) {
            return Err(SynthError::InvalidConfig("perturbation must be a probability".into()));
        }
        Ok(())
    }
}

/// Rule and generator settings, persisted next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSidecar {
    pub rule: SyntheticRule,
    pub generator: GenConfig,
}

/// Switch edges of a sentence, identified by their dependent (0-based).
/// An edge is a switch when both endpoints carry different non-OTHER tags.
pub fn switch_edges(g: &SentenceGraph) -> Vec<usize> {
    g.nodes
        .iter()
        .enumerate()
        .filter(|(_, node)| node.head != 0)
        .filter(|(_, node)| {
            let head = g.nodes[node.head - 1].lang;
            node.lang != LanguageTag::Other && head != LanguageTag::Other && node.lang != head
        })
        .map(|(i, _)| i)
        .collect()
}

/// True when every switch edge of the Lang1 parse satisfies the rule.
pub fn is_natural(c: &CandidateSentence, rule: &SyntheticRule) -> bool {
    let depths = c.g1.depths();
    switch_edges(&c.g1).into_iter().all(|i| rule.allows(&c.g1.nodes[i], depths[i]))
}

/// Recomputes the natural side of a pair from the planted rule.
pub fn oracle_label(pair: &MinimalPair, rule: &SyntheticRule) -> Result<Label, SynthError> {
    match (is_natural(&pair.a, rule), is_natural(&pair.b, rule)) {
        (true, false) => Ok(Label::A),
        (false, true) => Ok(Label::B),
        (true, true) => Err(SynthError::Ambiguous { id: pair.id.clone(), reason: "both candidates satisfy the rule" }),
        (false, false) => Err(SynthError::Ambiguous { id: pair.id.clone(), reason: "neither candidate satisfies the rule" }),
    }
}

fn random_tree<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    // 1-based heads; node i (0-based) attaches to a uniform earlier node
    (0..n).map(|i| if i == 0 { 0 } else { rng.gen_range(1..=i) }).collect()
}

fn draw_from<T: Copy, R: Rng>(rng: &mut R, pool: &[T]) -> T {
    pool[rng.gen_range(0..pool.len())]
}

struct Draft {
    nodes: Vec<ParseNode>,
    natural: Vec<LanguageTag>,
    manipulated: Vec<LanguageTag>,
}

fn draft_pair<R: Rng>(rng: &mut R, rule: &SyntheticRule, gcfg: &GenConfig) -> Option<Draft> {
    let n = rng.gen_range(gcfg.min_len..=gcfg.max_len);
    let heads = random_tree(rng, n);
    let non_root: Vec<DepRelTag> = DepRelTag::non_root().collect();
    let mut nodes: Vec<ParseNode> = heads
        .iter()
        .map(|&head| ParseNode {
            upos: draw_from(rng, UposTag::ALL),
            lang: LanguageTag::L1,
            head,
            deprel: if head == 0 { DepRelTag::Root } else { draw_from(rng, &non_root) },
        })
        .collect();
    let mut children = vec![Vec::new(); n];
    for (i, &h) in heads.iter().enumerate() {
        if h != 0 {
            children[h - 1].push(i);
        }
    }

    let split = rng.gen_range(1..n);
    let split_head = heads[split] - 1;
    let mut stack = vec![split];
    while let Some(i) = stack.pop() {
        nodes[i].lang = LanguageTag::L2;
        stack.extend(&children[i]);
    }

    // flipping the pivot must turn at least one other edge into a switch
    let mut pivots = Vec::new();
    if !children[split].is_empty() {
        pivots.push(split);
    }
    if heads[split_head] != 0 || children[split_head].len() > 1 {
        pivots.push(split_head);
    }
    if pivots.is_empty() {
        return None;
    }
    let pivot = draw_from(rng, &pivots);
    let flipped_switches: Vec<usize> = if pivot == split {
        children[split].clone()
    } else {
        let mut edges: Vec<usize> = children[split_head].iter().copied().filter(|&c| c != split).collect();
        if heads[split_head] != 0 {
            edges.push(split_head);
        }
        edges
    };
    let base_switches = vec![split];
    let flip_is_natural = rng.gen_bool(0.5);
    let (natural_edges, manipulated_edges) = if flip_is_natural {
        (&flipped_switches, &base_switches)
    } else {
        (&base_switches, &flipped_switches)
    };

    match rule {
        SyntheticRule::DeprelSet { allowed } => {
            let ok: Vec<DepRelTag> = non_root.iter().copied().filter(|r| allowed.contains(r)).collect();
            for &i in natural_edges {
                nodes[i].deprel = draw_from(rng, &ok);
            }
            loop {
                for &i in manipulated_edges {
                    nodes[i].deprel = draw_from(rng, &non_root);
                }
                if manipulated_edges.iter().any(|&i| !allowed.contains(&nodes[i].deprel)) {
                    break;
                }
            }
        }
        SyntheticRule::PosSet { allowed } => {
            let ok: Vec<UposTag> = UposTag::ALL.iter().copied().filter(|t| allowed.contains(t)).collect();
            for &i in natural_edges {
                nodes[i].upos = draw_from(rng, &ok);
            }
            loop {
                for &i in manipulated_edges {
                    nodes[i].upos = draw_from(rng, UposTag::ALL);
                }
                if manipulated_edges.iter().any(|&i| !allowed.contains(&nodes[i].upos)) {
                    break;
                }
            }
        }
        SyntheticRule::DepthLimit { max_depth } => {
            let depths = SentenceGraph { nodes: nodes.clone() }.depths();
            let natural_ok = natural_edges.iter().all(|&i| depths[i] <= *max_depth);
            let violated = manipulated_edges.iter().any(|&i| depths[i] > *max_depth);
            if !(natural_ok && violated) {
                return None;
            }
        }
    }

    let base: Vec<LanguageTag> = nodes.iter().map(|n| n.lang).collect();
    let mut flipped = base.clone();
    flipped[pivot] = flipped[pivot].flipped();
    let (natural, manipulated) = if flip_is_natural { (flipped, base) } else { (base, flipped) };
    Some(Draft { nodes, natural, manipulated })
}

fn build_candidate(
    nodes: &[ParseNode],
    langs: &[LanguageTag],
    g2_relations: &[DepRelTag],
) -> CandidateSentence {
    let g1: Vec<ParseNode> =
        nodes.iter().zip(langs).map(|(n, &lang)| ParseNode { lang, ..*n }).collect();
    let g2: Vec<ParseNode> =
        g1.iter().zip(g2_relations).map(|(n, &deprel)| ParseNode { deprel, ..*n }).collect();
    CandidateSentence { g1: SentenceGraph { nodes: g1 }, g2: SentenceGraph { nodes: g2 } }
}

/// Generates `gcfg.n_pairs` labelled pairs under `rule`. Deterministic in
/// `(rule, gcfg)`.
pub fn generate_dataset(rule: &SyntheticRule, gcfg: &GenConfig) -> Result<Dataset, SynthError> {
    rule.validate()?;
    gcfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(gcfg.seed);
    let non_root: Vec<DepRelTag> = DepRelTag::non_root().collect();
    let mut pairs = Vec::with_capacity(gcfg.n_pairs);
    for index in 0..gcfg.n_pairs {
        let mut attempts = 0;
        let draft = loop {
            if let Some(d) = draft_pair(&mut rng, rule, gcfg) {
                break d;
            }
            attempts += 1;
            if attempts >= MAX_ATTEMPTS {
                return Err(SynthError::Unsatisfiable {
                    min_len: gcfg.min_len,
                    max_len: gcfg.max_len,
                    attempts,
                });
            }
        };
        // the second translation shares the tree and tags but drifts in relations
        let g2_relations: Vec<DepRelTag> = draft
            .nodes
            .iter()
            .map(|n| {
                if n.head != 0 && rng.gen_bool(gcfg.perturbation) {
                    draw_from(&mut rng, &non_root)
                } else {
                    n.deprel
                }
            })
            .collect();
        let natural = build_candidate(&draft.nodes, &draft.natural, &g2_relations);
        let manipulated = build_candidate(&draft.nodes, &draft.manipulated, &g2_relations);
        let (label, a, b) = if rng.gen_bool(0.5) {
            (Label::A, natural, manipulated)
        } else {
            (Label::B, manipulated, natural)
        };
        pairs.push(MinimalPair {
            id: format!("synth-{}-{index}", gcfg.seed),
            label,
            human_agreement: None,
            a,
            b,
        });
    }
    Ok(Dataset::new(Split::Train, pairs))
}
