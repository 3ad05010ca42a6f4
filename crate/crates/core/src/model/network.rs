use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedGraph, EncodedPair};
use crate::linalg::{relu, Matrix};
use crate::ud::Label;

use super::layers::{
    gat_backward, gat_layer, gine_backward, gine_forward, mean_pool, mean_pool_backward, node_init,
    node_init_backward, GatCache, GineCache,
};
use super::{LayerParams, ModelParameters};

/// Two class scores; position 0 belongs to candidate A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logits(pub [f64; 2]);

impl Logits {
    pub fn score(&self, side: Label) -> f64 {
        self.0[side.index()]
    }

    pub fn swapped(self) -> Logits {
        Logits([self.0[1], self.0[0]])
    }

    /// The preferred candidate, or `None` on an exact tie.
    pub fn decision(&self) -> Option<Label> {
        let [a, b] = self.0;
        if a > b {
            Some(Label::A)
        } else if b > a {
            Some(Label::B)
        } else {
            None
        }
    }

    pub fn scaled(self, factor: f64) -> Logits {
        Logits([self.0[0] * factor, self.0[1] * factor])
    }

    /// `|softmax_A - softmax_B|`
    pub fn margin(&self) -> f64 {
        let [pa, pb] = softmax2(*self);
        (pa - pb).abs()
    }
}

pub fn softmax2(logits: Logits) -> [f64; 2] {
    let [a, b] = logits.0;
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    let z = ea + eb;
    [ea / z, eb / z]
}

/// `-log softmax(logits)[label]`, max-shifted.
pub fn cross_entropy(logits: Logits, label: Label) -> f64 {
    let [a, b] = logits.0;
    let m = a.max(b);
    // log-sum-exp of two terms is m + ln(1 + e^-|a-b|)
    (m - logits.score(label)) + (-(a - b).abs()).exp().ln_1p()
}

enum LayerCache {
    Gine(GineCache),
    Gat(GatCache),
}

/// Layer inputs and caches for one candidate graph.
struct GraphTrace {
    inputs: Vec<Matrix>,
    caches: Vec<LayerCache>,
}

fn graph_forward(enc: &EncodedGraph, p: &ModelParameters) -> (Vec<f64>, GraphTrace) {
    let mut x = node_init(enc, p);
    let mut inputs = Vec::with_capacity(p.layers.len());
    let mut caches = Vec::with_capacity(p.layers.len());
    for layer in &p.layers {
        let (next, cache) = match layer {
            LayerParams::Gine(g) => {
                let (out, c) = gine_forward(&x, enc, &p.deprel_embed, g);
                (out, LayerCache::Gine(c))
            }
            LayerParams::Gat(g) => {
                let (out, c) = gat_layer(&x, enc, &p.deprel_embed, g);
                (out, LayerCache::Gat(c))
            }
        };
        inputs.push(std::mem::replace(&mut x, next));
        caches.push(cache);
    }
    (mean_pool(&x), GraphTrace { inputs, caches })
}

fn graph_backward(
    enc: &EncodedGraph,
    p: &ModelParameters,
    trace: &GraphTrace,
    demb: &[f64],
    grad: &mut ModelParameters,
) {
    let mut dx = mean_pool_backward(enc.node_count(), demb);
    for l in (0..p.layers.len()).rev() {
        let x = &trace.inputs[l];
        dx = match (&p.layers[l], &trace.caches[l], &mut grad.layers[l]) {
            (LayerParams::Gine(layer), LayerCache::Gine(cache), LayerParams::Gine(g)) => {
                gine_backward(x, enc, &p.deprel_embed, layer, cache, &dx, g, &mut grad.deprel_embed)
            }
            (LayerParams::Gat(layer), LayerCache::Gat(cache), LayerParams::Gat(g)) => {
                gat_backward(x, enc, layer, cache, &dx, g, &mut grad.deprel_embed)
            }
            _ => unreachable!("gradient buffer built from the same config"),
        };
    }
    node_init_backward(enc, &dx, grad);
}

/// Graph embedding: node init, all message-passing layers, mean pooling.
pub fn embed_graph(enc: &EncodedGraph, p: &ModelParameters) -> Vec<f64> {
    graph_forward(enc, p).0
}

/// Raw classifier output for the ordered pair `(emb_a, emb_b)`.
pub fn classify_pair(emb_a: &[f64], emb_b: &[f64], p: &ModelParameters) -> Logits {
    let input = [emb_a, emb_b].concat();
    let mut hidden = vec![0.0; p.classifier_hidden.output_dim()];
    p.classifier_hidden.apply(&input, &mut hidden);
    hidden.iter_mut().for_each(|h| *h = relu(*h));
    let mut out = [0.0; 2];
    p.classifier_out.apply(&hidden, &mut out);
    Logits(out)
}

/// Order-invariant logits: the average of both presentation orders.
pub fn symmetrized_logits(emb_a: &[f64], emb_b: &[f64], p: &ModelParameters) -> Logits {
    let forward = classify_pair(emb_a, emb_b, p).0;
    let reverse = classify_pair(emb_b, emb_a, p).0;
    Logits([0.5 * (forward[0] + reverse[1]), 0.5 * (forward[1] + reverse[0])])
}

/// Inference logits for a pair.
pub fn forward(pair: &EncodedPair, p: &ModelParameters) -> Logits {
    symmetrized_logits(&embed_graph(&pair.a, p), &embed_graph(&pair.b, p), p)
}

/// Training-path logits, with `first` presented as candidate A.
pub fn forward_raw(first: &EncodedGraph, second: &EncodedGraph, p: &ModelParameters) -> Logits {
    classify_pair(&embed_graph(first, p), &embed_graph(second, p), p)
}

/// Cross-entropy of the raw logits for `(first, second)` against `label`;
/// parameter gradients are added into `grad`.
pub fn loss_and_gradients(
    first: &EncodedGraph,
    second: &EncodedGraph,
    label: Label,
    p: &ModelParameters,
    grad: &mut ModelParameters,
) -> f64 {
    let (emb_a, trace_a) = graph_forward(first, p);
    let (emb_b, trace_b) = graph_forward(second, p);
    let d = emb_a.len();
    let input = [emb_a.as_slice(), emb_b.as_slice()].concat();
    let width = p.classifier_hidden.output_dim();
    let mut hidden_pre = vec![0.0; width];
    p.classifier_hidden.apply(&input, &mut hidden_pre);
    let hidden: Vec<f64> = hidden_pre.iter().map(|&h| relu(h)).collect();
    let mut out = [0.0; 2];
    p.classifier_out.apply(&hidden, &mut out);
    let logits = Logits(out);
    let loss = cross_entropy(logits, label);

    let mut dlogits = softmax2(logits);
    dlogits[label.index()] -= 1.0;
    let mut dhidden = vec![0.0; width];
    p.classifier_out.backward(&hidden, &dlogits, &mut grad.classifier_out, &mut dhidden);
    for (g, &z) in dhidden.iter_mut().zip(&hidden_pre) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    let mut dinput = vec![0.0; 2 * d];
    p.classifier_hidden.backward(&input, &dhidden, &mut grad.classifier_hidden, &mut dinput);
    graph_backward(first, p, &trace_a, &dinput[..d], grad);
    graph_backward(second, p, &trace_b, &dinput[d..], grad);
    loss
}

/// Loss and a fresh gradient for one pair under the training path.
pub fn gradients(
    first: &EncodedGraph,
    second: &EncodedGraph,
    label: Label,
    p: &ModelParameters,
) -> (f64, ModelParameters) {
    let mut grad = p.zeros_like();
    let loss = loss_and_gradients(first, second, label, p, &mut grad);
    (loss, grad)
}
