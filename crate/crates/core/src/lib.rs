//! Syntax-only acceptability model for code-switched minimal pairs.
//!
//! Each candidate sentence of a minimal pair is given to the network as two
//! monolingual dependency parses whose tokens carry the language of the aligned
//! code-switched word. A small graph isomorphism network (GINE, or a
//! single-head attention variant) embeds each candidate and a pairwise MLP
//! picks the naturally observed one.
//!
//! Modules:
//! * [`ud`]: dataset model and the JSON-lines file format
//! * [`encoding`]: union-graph encoding and ablation randomization
//! * [`model`]: parameters, layers, classifier, exact gradients, checkpoints
//! * [`train`]: optimizer loop, evaluation, median-of-runs, learning curves
//! * [`stats`]: permutation tests, Cohen's kappa, rank correlation, temperature scaling
//! * [`synth`]: planted-rule dataset generator and its oracle

pub mod encoding;
pub mod linalg;
pub mod model;
pub mod synth;
pub mod stats;
pub mod train;
pub mod ud;
