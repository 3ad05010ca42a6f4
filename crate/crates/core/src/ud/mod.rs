//! Minimal-pair dataset model and its line-delimited JSON file format.
//!
//! A record bundles one minimal pair: two candidate sentences, each carried as
//! two monolingual dependency parses whose tokens are tagged with the language
//! of the aligned code-switched word.

mod tags;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use tags::{DepRelTag, LanguageTag, UnknownTag, UposTag};

/// One token of a dependency parse. Its 1-based index is its position in the
/// owning [`SentenceGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParseNode {
    pub upos: UposTag,
    pub lang: LanguageTag,
    /// CoNLL-U head: 0 for the root, otherwise the 1-based index of the head.
    pub head: usize,
    pub deprel: DepRelTag,
}

/// Why a sentence graph was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphViolation {
    Empty,
    HeadOutOfRange { node: usize, head: usize },
    SelfHead { node: usize },
    ReservedDeprel { node: usize },
    Cycle { node: usize },
    MultipleRoots { roots: Vec<usize> },
}

impl GraphViolation {
    /// Stable machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            GraphViolation::Empty => "empty",
            GraphViolation::HeadOutOfRange { .. } => "head_out_of_range",
            GraphViolation::SelfHead { .. } => "self_head",
            GraphViolation::ReservedDeprel { .. } => "reserved_deprel",
            GraphViolation::Cycle { .. } => "cycle",
            GraphViolation::MultipleRoots { .. } => "multiple_roots",
        }
    }
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphViolation::Empty => write!(f, "empty: sentence has no nodes"),
            GraphViolation::HeadOutOfRange { node, head } => {
                write!(f, "head_out_of_range: node {node} has head {head}")
            }
            GraphViolation::SelfHead { node } => write!(f, "self_head: node {node} is its own head"),
            GraphViolation::ReservedDeprel { node } => {
                write!(f, "reserved_deprel: node {node} uses SELF")
            }
            GraphViolation::Cycle { node } => {
                write!(f, "cycle: node {node} does not reach the root")
            }
            GraphViolation::MultipleRoots { roots } => {
                write!(f, "multiple_roots: nodes {roots:?} all have head 0")
            }
        }
    }
}

/// A single-rooted dependency tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceGraph {
    pub nodes: Vec<ParseNode>,
}

impl SentenceGraph {
    pub fn new(nodes: Vec<ParseNode>) -> Result<Self, GraphViolation> {
        let g = SentenceGraph { nodes };
        g.validate()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Checks that the head links form one tree rooted at a single node.
    pub fn validate(&self) -> Result<(), GraphViolation> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(GraphViolation::Empty);
        }
        for (pos, node) in self.nodes.iter().enumerate() {
            let index = pos + 1;
            if node.head > n {
                return Err(GraphViolation::HeadOutOfRange { node: index, head: node.head });
            }
            if node.head == index {
                return Err(GraphViolation::SelfHead { node: index });
            }
            if node.deprel == DepRelTag::SelfLoop {
                return Err(GraphViolation::ReservedDeprel { node: index });
            }
        }
        // 0 = unvisited, 1 = on current path, 2 = known to reach the root
        let mut state = vec![0u8; n + 1];
        state[0] = 2;
        let mut path = Vec::new();
        for start in 1..=n {
            let mut cur = start;
            while state[cur] == 0 {
                state[cur] = 1;
                path.push(cur);
                cur = self.nodes[cur - 1].head;
            }
            if state[cur] == 1 {
                return Err(GraphViolation::Cycle { node: cur });
            }
            for &p in &path {
                state[p] = 2;
            }
            path.clear();
        }
        let roots: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, node)| node.head == 0)
            .map(|(pos, _)| pos + 1)
            .collect();
        if roots.len() > 1 {
            return Err(GraphViolation::MultipleRoots { roots });
        }
        Ok(())
    }

    /// Distance from the root for every node (root = 0). Assumes a valid tree.
    pub fn depths(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut depth = vec![usize::MAX; n];
        for start in 0..n {
            let mut chain = Vec::new();
            let mut cur = start;
            let base = loop {
                if depth[cur] != usize::MAX {
                    break depth[cur];
                }
                chain.push(cur);
                match self.nodes[cur].head {
                    0 => break usize::MAX,
                    h => cur = h - 1,
                }
            };
            let mut d = if base == usize::MAX { 0 } else { base + 1 };
            for &c in chain.iter().rev() {
                depth[c] = d;
                d += 1;
            }
        }
        depth
    }
}

/// One candidate sentence: its parse in the Lang1 translation and in the Lang2
/// translation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSentence {
    pub g1: SentenceGraph,
    pub g2: SentenceGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

impl Label {
    pub fn other(self) -> Self {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }

    /// 0 for A, 1 for B; the logit position of the label.
    pub fn index(self) -> usize {
        match self {
            Label::A => 0,
            Label::B => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::A => "A",
            Label::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimalPair {
    pub id: String,
    /// The naturally observed candidate.
    pub label: Label,
    #[serde(default)]
    pub human_agreement: Option<f64>,
    #[serde(rename = "A")]
    pub a: CandidateSentence,
    #[serde(rename = "B")]
    pub b: CandidateSentence,
}

impl MinimalPair {
    pub fn candidate(&self, side: Label) -> &CandidateSentence {
        match side {
            Label::A => &self.a,
            Label::B => &self.b,
        }
    }

    /// The same pair presented in the opposite order.
    pub fn swapped(&self) -> MinimalPair {
        MinimalPair {
            id: self.id.clone(),
            label: self.label.other(),
            human_agreement: self.human_agreement,
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub pairs: Vec<MinimalPair>,
}

/// Errors raised while reading or writing dataset files.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: pair `{id}` candidate {side} graph {graph}: {violation}")]
    InvalidGraph {
        line: usize,
        id: String,
        side: Label,
        graph: &'static str,
        violation: GraphViolation,
    },
    #[error("line {line}: pair `{id}` has human_agreement {value} outside [0, 1]")]
    AgreementOutOfRange { line: usize, id: String, value: f64 },
    #[error("line {line}: duplicate pair id `{id}`")]
    DuplicateId { line: usize, id: String },
}

fn check_pair(pair: &MinimalPair, line: usize) -> Result<(), DataError> {
    if let Some(value) = pair.human_agreement {
        if !(0.0..=1.0).contains(&value) {
            return Err(DataError::AgreementOutOfRange { line, id: pair.id.clone(), value });
        }
    }
    for side in [Label::A, Label::B] {
        let cand = pair.candidate(side);
        for (graph, g) in [("g1", &cand.g1), ("g2", &cand.g2)] {
            g.validate().map_err(|violation| DataError::InvalidGraph {
                line,
                id: pair.id.clone(),
                side,
                graph,
                violation,
            })?;
        }
    }
    Ok(())
}

impl Dataset {
    pub fn new(split: Split, pairs: Vec<MinimalPair>) -> Self {
        Dataset { split, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parses line-delimited records. Blank lines are skipped; line numbers in
    /// errors are 1-based.
    pub fn from_reader<R: BufRead>(reader: R, split: Split) -> Result<Self, DataError> {
        let mut pairs = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| DataError::Io { path: PathBuf::new(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: MinimalPair = serde_json::from_str(&line)
                .map_err(|source| DataError::Malformed { line: line_no, source })?;
            check_pair(&pair, line_no)?;
            if !seen.insert(pair.id.clone()) {
                return Err(DataError::DuplicateId { line: line_no, id: pair.id });
            }
            pairs.push(pair);
        }
        Ok(Dataset { split, pairs })
    }

    pub fn from_jsonl(text: &str, split: Split) -> Result<Self, DataError> {
        Self::from_reader(text.as_bytes(), split)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        String::from_utf8(out).expect("serde_json emits UTF-8")
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for pair in &self.pairs {
            serde_json::to_writer(&mut w, pair)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads a dataset file.
pub fn read_dataset(path: impl AsRef<Path>, split: Split) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| DataError::Io { path: path.into(), source })?;
    Dataset::from_reader(BufReader::new(file), split).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::Io { path: path.into(), source },
        other => other,
    })
}

/// Writes a dataset file, one record per line.
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io { path: path.into(), source };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    dataset.write_to(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}
