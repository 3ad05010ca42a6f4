use crate::encoding::EncodedGraph;
use crate::linalg::{axpy, dot, relu, Matrix};

use super::{GatParams, GineParams, ModelParameters};

const LEAKY_SLOPE: f64 = 0.2;

/// Initial node states: the sum of the UPOS, language and origin embeddings.
pub fn node_init(enc: &EncodedGraph, p: &ModelParameters) -> Matrix {
    let d = p.config.hidden_dim;
    let mut x = Matrix::zeros(enc.node_count(), d);
    for i in 0..enc.node_count() {
        let row = x.row_mut(i);
        row.copy_from_slice(p.upos_embed.row(enc.node_upos[i] as usize));
        axpy(row, 1.0, p.lang_embed.row(enc.node_lang[i] as usize));
        axpy(row, 1.0, p.origin_embed.row(enc.node_origin[i] as usize));
    }
    x
}

pub(super) fn node_init_backward(enc: &EncodedGraph, dx: &Matrix, grad: &mut ModelParameters) {
    for i in 0..enc.node_count() {
        let g = dx.row(i);
        axpy(grad.upos_embed.row_mut(enc.node_upos[i] as usize), 1.0, g);
        axpy(grad.lang_embed.row_mut(enc.node_lang[i] as usize), 1.0, g);
        axpy(grad.origin_embed.row_mut(enc.node_origin[i] as usize), 1.0, g);
    }
}

/// Intermediate values of one GINE layer needed for its backward pass.
#[derive(Debug, Clone)]
pub struct GineCache {
    /// `(1 + eps) x_i + Σ_j ReLU(x_j + e_ji)`
    pub aggregated: Matrix,
    /// First MLP affine output, before its ReLU.
    pub hidden_pre: Matrix,
}

/// `x'_i = h((1 + eps) x_i + Σ_{j→i} ReLU(x_j + e_ji))` with
/// `h = mlp2 ∘ ReLU ∘ mlp1`. Neighbourhoods include the self-loop.
pub fn gine_layer(x: &Matrix, enc: &EncodedGraph, edge_embed: &Matrix, layer: &GineParams) -> Matrix {
    gine_forward(x, enc, edge_embed, layer).0
}

pub(super) fn gine_forward(
    x: &Matrix,
    enc: &EncodedGraph,
    edge_embed: &Matrix,
    layer: &GineParams,
) -> (Matrix, GineCache) {
    let n = x.rows();
    let d = x.cols();
    let mut agg = Matrix::zeros(n, d);
    let self_weight = 1.0 + layer.eps;
    for (a, v) in agg.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *a = self_weight * v;
    }
    for e in &enc.edges {
        let src = x.row(e.src as usize);
        let rel = edge_embed.row(e.rel as usize);
        let dst = agg.row_mut(e.dst as usize);
        for k in 0..d {
            dst[k] += relu(src[k] + rel[k]);
        }
    }
    let width = layer.mlp1.output_dim();
    let mut hidden_pre = Matrix::zeros(n, width);
    let mut hidden = vec![0.0; width];
    let mut out = Matrix::zeros(n, layer.mlp2.output_dim());
    for i in 0..n {
        layer.mlp1.apply(agg.row(i), hidden_pre.row_mut(i));
        for (h, &z) in hidden.iter_mut().zip(hidden_pre.row(i)) {
            *h = relu(z);
        }
        layer.mlp2.apply(&hidden, out.row_mut(i));
    }
    (out, GineCache { aggregated: agg, hidden_pre })
}

/// Returns the gradient with respect to the layer input and accumulates the
/// parameter gradients.
pub(super) fn gine_backward(
    x: &Matrix,
    enc: &EncodedGraph,
    edge_embed: &Matrix,
    layer: &GineParams,
    cache: &GineCache,
    dout: &Matrix,
    grad: &mut GineParams,
    grad_edge_embed: &mut Matrix,
) -> Matrix {
    let n = x.rows();
    let d = x.cols();
    let width = layer.mlp1.output_dim();
    let mut hidden = vec![0.0; width];
    let mut dhidden = vec![0.0; width];
    let mut dagg = Matrix::zeros(n, d);
    for i in 0..n {
        let pre = cache.hidden_pre.row(i);
        for (h, &z) in hidden.iter_mut().zip(pre) {
            *h = relu(z);
        }
        dhidden.fill(0.0);
        layer.mlp2.backward(&hidden, dout.row(i), &mut grad.mlp2, &mut dhidden);
        for (g, &z) in dhidden.iter_mut().zip(pre) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        layer.mlp1.backward(cache.aggregated.row(i), &dhidden, &mut grad.mlp1, dagg.row_mut(i));
    }
    grad.eps += dot(dagg.as_slice(), x.as_slice());
    let self_weight = 1.0 + layer.eps;
    let mut dx = Matrix::zeros(n, d);
    for (g, &v) in dx.as_mut_slice().iter_mut().zip(dagg.as_slice()) {
        *g = self_weight * v;
    }
    for e in &enc.edges {
        let (s, t, r) = (e.src as usize, e.dst as usize, e.rel as usize);
        for k in 0..d {
            if x.get(s, k) + edge_embed.get(r, k) > 0.0 {
                let g = dagg.get(t, k);
                dx.row_mut(s)[k] += g;
                grad_edge_embed.row_mut(r)[k] += g;
            }
        }
    }
    dx
}

/// Intermediate values of one attention layer.
#[derive(Debug, Clone)]
pub struct GatCache {
    /// `W x_i + b` per node.
    pub projected: Matrix,
    /// `m_j = W x_j + b + e_ji` per edge.
    pub messages: Matrix,
    /// Pre-activation attention score per edge.
    pub scores: Vec<f64>,
    /// Normalized attention weight per edge (softmax over edges into `dst`).
    pub alpha: Vec<f64>,
}

/// Single-head attention: `m_j = W x_j + e_ji`,
/// `α_ij = softmax_j LeakyReLU(a · [W x_i ‖ m_j])`, `x'_i = Σ_j α_ij m_j`.
pub fn gat_layer(x: &Matrix, enc: &EncodedGraph, edge_embed: &Matrix, layer: &GatParams) -> (Matrix, GatCache) {
    let n = x.rows();
    let d = layer.lin.output_dim();
    let mut projected = Matrix::zeros(n, d);
    for i in 0..n {
        layer.lin.apply(x.row(i), projected.row_mut(i));
    }
    let (attn_dst, attn_msg) = layer.attn.split_at(d);
    let m = enc.edges.len();
    let mut messages = Matrix::zeros(m, d);
    let mut scores = vec![0.0; m];
    let mut max_score = vec![f64::NEG_INFINITY; n];
    for (k, e) in enc.edges.iter().enumerate() {
        let msg = messages.row_mut(k);
        msg.copy_from_slice(projected.row(e.src as usize));
        axpy(msg, 1.0, edge_embed.row(e.rel as usize));
        let s = dot(attn_dst, projected.row(e.dst as usize)) + dot(attn_msg, msg);
        let t = if s > 0.0 { s } else { LEAKY_SLOPE * s };
        scores[k] = s;
        let dst = e.dst as usize;
        max_score[dst] = max_score[dst].max(t);
    }
    let mut alpha = vec![0.0; m];
    let mut norm = vec![0.0; n];
    for (k, e) in enc.edges.iter().enumerate() {
        let s = scores[k];
        let t = if s > 0.0 { s } else { LEAKY_SLOPE * s };
        alpha[k] = (t - max_score[e.dst as usize]).exp();
        norm[e.dst as usize] += alpha[k];
    }
    let mut out = Matrix::zeros(n, d);
    for (k, e) in enc.edges.iter().enumerate() {
        alpha[k] /= norm[e.dst as usize];
        axpy(out.row_mut(e.dst as usize), alpha[k], messages.row(k));
    }
    (out, GatCache { projected, messages, scores, alpha })
}

pub(super) fn gat_backward(
    x: &Matrix,
    enc: &EncodedGraph,
    layer: &GatParams,
    cache: &GatCache,
    dout: &Matrix,
    grad: &mut GatParams,
    grad_edge_embed: &mut Matrix,
) -> Matrix {
    let n = x.rows();
    let d = layer.lin.output_dim();
    let m = enc.edges.len();
    let (attn_dst, attn_msg) = layer.attn.split_at(d);

    let mut dalpha = vec![0.0; m];
    let mut weighted = vec![0.0; n];
    for (k, e) in enc.edges.iter().enumerate() {
        dalpha[k] = dot(dout.row(e.dst as usize), cache.messages.row(k));
        weighted[e.dst as usize] += cache.alpha[k] * dalpha[k];
    }
    let mut dprojected = Matrix::zeros(n, d);
    let mut dmsg = vec![0.0; d];
    let mut dattn = vec![0.0; 2 * d];
    for (k, e) in enc.edges.iter().enumerate() {
        let dst = e.dst as usize;
        let dt = cache.alpha[k] * (dalpha[k] - weighted[dst]);
        let ds = if cache.scores[k] > 0.0 { dt } else { LEAKY_SLOPE * dt };
        let msg = cache.messages.row(k);
        axpy(&mut dattn[..d], ds, cache.projected.row(dst));
        axpy(&mut dattn[d..], ds, msg);
        axpy(dprojected.row_mut(dst), ds, attn_dst);

        for (g, (&o, &a)) in dmsg.iter_mut().zip(dout.row(dst).iter().zip(attn_msg)) {
            *g = cache.alpha[k] * o + ds * a;
        }
        axpy(dprojected.row_mut(e.src as usize), 1.0, &dmsg);
        axpy(grad_edge_embed.row_mut(e.rel as usize), 1.0, &dmsg);
    }
    axpy(&mut grad.attn, 1.0, &dattn);
    let mut dx = Matrix::zeros(n, x.cols());
    for i in 0..n {
        layer.lin.backward(x.row(i), dprojected.row(i), &mut grad.lin, dx.row_mut(i));
    }
    dx
}

/// Mean over all nodes of the union graph.
pub fn mean_pool(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let mut out = vec![0.0; x.cols()];
    for i in 0..n {
        axpy(&mut out, 1.0, x.row(i));
    }
    let inv = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    out
}

pub(super) fn mean_pool_backward(n: usize, demb: &[f64]) -> Matrix {
    let inv = 1.0 / n as f64;
    let mut dx = Matrix::zeros(n, demb.len());
    for i in 0..n {
        for (g, &v) in dx.row_mut(i).iter_mut().zip(demb) {
            *g = v * inv;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::Edge;
    use crate::linalg::Affine;
    use crate::model::{Architecture, LayerParams, ModelConfig};

    fn graph(n: usize, edges: &[(u32, u32, u8)]) -> EncodedGraph {
        EncodedGraph {
            node_upos: vec![0; n],
            node_lang: vec![0; n],
            node_origin: vec![0; n],
            edges: edges.iter().map(|&(src, dst, rel)| Edge { src, dst, rel }).collect(),
        }
    }

    /// d = 1 layer whose MLP is the identity: relu(x) - relu(-x).
    fn identity_layer(eps: f64) -> GineParams {
        GineParams {
            eps,
            mlp1: Affine { weight: Matrix::from_rows(&[vec![1.0], vec![-1.0]]), bias: vec![0.0; 2] },
            mlp2: Affine { weight: Matrix::from_rows(&[vec![1.0, -1.0]]), bias: vec![0.0] },
        }
    }

    fn edge_table(self_feature: f64, rel_feature: f64) -> Matrix {
        let mut e = Matrix::zeros(38, 1);
        e.set(37, 0, self_feature);
        e.set(0, 0, rel_feature);
        e
    }

    #[test]
    fn gine_zero_fixed_point() {
        let g = graph(1, &[(0, 0, 37)]);
        let out = gine_layer(&Matrix::zeros(1, 1), &g, &edge_table(0.0, 0.0), &identity_layer(0.0));
        assert_eq!(out.as_slice(), &[0.0]);
    }

    #[test]
    fn gine_single_node_with_eps() {
        let g = graph(1, &[(0, 0, 37)]);
        let x = Matrix::from_vec(1, 1, vec![3.0]);
        let out = gine_layer(&x, &g, &edge_table(0.0, 0.0), &identity_layer(1.0));
        assert!((out.get(0, 0) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn gine_two_nodes() {
        let g = graph(2, &[(0, 0, 37), (1, 1, 37), (0, 1, 0), (1, 0, 0)]);
        let x = Matrix::from_vec(2, 1, vec![1.0, 2.0]);
        let out = gine_layer(&x, &g, &edge_table(0.0, 0.5), &identity_layer(0.0));
        assert!((out.get(0, 0) - 4.5).abs() < 1e-12);
        assert!((out.get(1, 0) - 5.5).abs() < 1e-12);
    }

    fn gat_params(d: usize, w: Vec<f64>, attn: Vec<f64>) -> GatParams {
        GatParams { lin: Affine { weight: Matrix::from_vec(d, d, w), bias: vec![0.0; d] }, attn }
    }

    #[test]
    fn gat_singleton_neighbourhood() {
        let g = graph(1, &[(0, 0, 37)]);
        let layer = gat_params(2, vec![1.0, 2.0, 0.0, -1.0], vec![0.3, -0.2, 0.1, 0.4]);
        let mut e = Matrix::zeros(38, 2);
        e.row_mut(37).copy_from_slice(&[0.25, -0.75]);
        let x = Matrix::from_vec(1, 2, vec![1.0, 1.0]);
        let (out, cache) = gat_layer(&x, &g, &e, &layer);
        assert_eq!(cache.alpha, vec![1.0]);
        assert!((out.get(0, 0) - 3.25).abs() < 1e-15);
        assert!((out.get(0, 1) + 1.75).abs() < 1e-15);
    }

    #[test]
    fn gat_identical_neighbours_split_evenly() {
        // node 0 receives from 1 and 2 only; both carry the same state and relation
        let g = graph(3, &[(1, 0, 4), (2, 0, 4), (1, 1, 37), (2, 2, 37)]);
        let layer = gat_params(1, vec![1.5], vec![0.7, -0.3]);
        let x = Matrix::from_vec(3, 1, vec![0.2, 1.0, 1.0]);
        let (_, cache) = gat_layer(&x, &g, &Matrix::zeros(38, 1), &layer);
        assert_eq!(cache.alpha[0], 0.5);
        assert_eq!(cache.alpha[1], 0.5);
    }

    #[test]
    fn gat_star_matches_direct_softmax() {
        // centre 0 with leaves 1..=3 plus its self-loop
        let g = graph(4, &[(0, 0, 37), (1, 0, 2), (2, 0, 5), (3, 0, 9), (1, 1, 37), (2, 2, 37), (3, 3, 37)]);
        let w = 0.8;
        let attn = [0.5, 1.2];
        let layer = gat_params(1, vec![w], attn.to_vec());
        let mut e = Matrix::zeros(38, 1);
        for (r, v) in [(2, 0.3), (5, -1.1), (9, 0.6), (37, 0.05)] {
            e.set(r, 0, v);
        }
        let xs = [0.4, -0.9, 1.7, 0.1];
        let x = Matrix::from_vec(4, 1, xs.to_vec());
        let (out, cache) = gat_layer(&x, &g, &e, &layer);

        let leaky = |s: f64| if s > 0.0 { s } else { 0.2 * s };
        let msgs = [w * xs[0] + 0.05, w * xs[1] + 0.3, w * xs[2] - 1.1, w * xs[3] + 0.6];
        let raw: Vec<f64> = msgs.iter().map(|m| leaky(attn[0] * w * xs[0] + attn[1] * m)).collect();
        let z: f64 = raw.iter().map(|r| r.exp()).sum();
        let expected: Vec<f64> = raw.iter().map(|r| r.exp() / z).collect();
        for k in 0..4 {
            assert!((cache.alpha[k] - expected[k]).abs() < 1e-12);
        }
        let centre: f64 = expected.iter().zip(&msgs).map(|(a, m)| a * m).sum();
        assert!((out.get(0, 0) - centre).abs() < 1e-12);
    }

    #[test]
    fn pooling() {
        let x = Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 5.0]]);
        assert_eq!(mean_pool(&x), vec![2.0, 4.0]);
        let x = Matrix::from_rows(&[vec![3.0, 5.0], vec![1.0, 3.0]]);
        assert_eq!(mean_pool(&x), vec![2.0, 4.0]);
        let one = Matrix::from_rows(&[vec![0.1, -7.0]]);
        assert_eq!(mean_pool(&one), vec![0.1, -7.0]);
    }

    #[test]
    fn init_states_are_embedding_sums() {
        let cfg = ModelConfig { hidden_dim: 3, num_layers: 1, architecture: Architecture::Gine, ..Default::default() };
        let mut p = ModelParameters::zeros(&cfg).unwrap();
        let g = EncodedGraph {
            node_upos: vec![4, 4],
            node_lang: vec![1, 1],
            node_origin: vec![0, 1],
            edges: vec![],
        };
        assert_eq!(node_init(&g, &p).as_slice(), &[0.0; 6]);
        p.upos_embed.set(4, 0, 1.0);
        p.lang_embed.set(1, 1, 1.0);
        p.origin_embed.row_mut(0).copy_from_slice(&[0.5, 0.0, 2.0]);
        p.origin_embed.row_mut(1).copy_from_slice(&[-1.0, 3.0, 0.25]);
        let x = node_init(&g, &p);
        assert_eq!(x.row(0), &[1.5, 1.0, 2.0]);
        let diff: Vec<f64> = x.row(1).iter().zip(x.row(0)).map(|(a, b)| a - b).collect();
        let expected: Vec<f64> =
            p.origin_embed.row(1).iter().zip(p.origin_embed.row(0)).map(|(a, b)| a - b).collect();
        assert_eq!(diff, expected);
        assert!(matches!(p.layers[0], LayerParams::Gine(_)));
    }
}
