
use super::train::LossConfig;
use super::{Gradients, Layer, StudentParams};
use crate::corpus::{Collection, PairwiseSample, TermId};
use crate::error::{invalid, FwlError, Result};
use crate::scalar::{dot, sigmoid, Scalar};

/// Resolved term ids of a pairwise sample.
#[derive(Debug, Clone, Copy)]
pub struct SampleTerms<'a> {
    pub query: &'a [TermId],
    pub pos: &'a [TermId],
    pub neg: &'a [TermId],
}

impl<'a> SampleTerms<'a> {
    pub fn resolve(collection: &'a Collection, sample: &PairwiseSample) -> Result<Self> {
        let q = collection
            .query_terms(&sample.query_id)
            .ok_or_else(|| invalid(format!("unknown query `{}`", sample.query_id)))?;
        let doc = |id: &str| collection.doc_terms(id).ok_or_else(|| invalid(format!("unknown document `{id}`")));
        Ok(Self { query: q, pos: doc(&sample.pos_doc_id)?, neg: doc(&sample.neg_doc_id)? })
    }
}

/// Importance-weighted embedding average of one input component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTrace<T> {
    /// In-vocabulary terms, in input order.
    pub terms: Vec<TermId>,
    /// Softmax of the terms' importance weights.
    pub weights: Vec<T>,
    pub vector: Vec<T>,
    /// Every token was out of vocabulary; `vector` is zero.
    pub empty: bool,
}

pub fn component<T: Scalar>(params: &StudentParams<T>, terms: &[TermId]) -> ComponentTrace<T> {
    let e = params.embed_dim;
    let terms: Vec<TermId> = terms.iter().copied().filter(|&t| (t as usize) < params.vocab_size).collect();
    let mut vector = vec![T::zero(); e];
    if terms.is_empty() {
        return ComponentTrace { terms, weights: Vec::new(), vector, empty: true };
    }
    let max = terms
        .iter()
        .map(|&t| params.importance[t as usize])
        .fold(T::neg_infinity(), T::max);
    let mut weights: Vec<T> = terms.iter().map(|&t| (params.importance[t as usize] - max).exp()).collect();
    let z: T = weights.iter().copied().sum();
    for w in &mut weights {
        *w /= z;
    }
    for (&t, &a) in terms.iter().zip(&weights) {
        for (v, &x) in vector.iter_mut().zip(params.embedding(t)) {
            *v += a * x;
        }
    }
    ComponentTrace { terms, weights, vector, empty: false }
}

/// Per-layer values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    /// Query, positive document, negative document.
    pub components: [ComponentTrace<T>; 3],
    pub rep: Vec<T>,
    /// Pre-activation of every layer.
    pub pre: Vec<Vec<T>>,
    /// Activation of every hidden layer.
    pub hidden: Vec<Vec<T>>,
    pub logit: T,
    pub y_hat: T,
}

fn affine<T: Scalar>(layer: &Layer<T>, x: &[T]) -> Vec<T> {
    (0..layer.outputs).map(|o| dot(layer.row(o), x) + layer.bias[o]).collect()
}

/// Forward pass through `φ`, returning (pre-activations, hidden activations, logit).
fn feed_forward<T: Scalar>(params: &StudentParams<T>, rep: &[T]) -> (Vec<Vec<T>>, Vec<Vec<T>>, T) {
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut hidden = Vec::with_capacity(params.layers.len() - 1);
    let last = params.layers.len() - 1;
    let mut x = rep.to_vec();
    for (i, layer) in params.layers.iter().enumerate() {
        let z = affine(layer, &x);
        if i < last {
            x = z.iter().map(|v| v.tanh()).collect();
            hidden.push(x.clone());
        }
        pre.push(z);
    }
    let logit = pre[last][0];
    (pre, hidden, logit)
}

/// `ψ(x)`: concatenated query, positive and negative component vectors.
pub fn represent<T: Scalar>(params: &StudentParams<T>, collection: &Collection, sample: &PairwiseSample) -> Result<Vec<T>> {
    let terms = SampleTerms::resolve(collection, sample)?;
    let mut rep = Vec::with_capacity(params.rep_dim());
    for part in [terms.query, terms.pos, terms.neg] {
        rep.extend(component(params, part).vector);
    }
    Ok(rep)
}

/// `φ(rep)`: probability that the first document outranks the second.
pub fn predict<T: Scalar>(params: &StudentParams<T>, rep: &[T]) -> Result<T> {
    if rep.len() != params.rep_dim() {
        return Err(FwlError::ShapeMismatch(format!(
            "representation width {} but the network takes {}",
            rep.len(),
            params.rep_dim()
        )));
    }
    Ok(sigmoid(feed_forward(params, rep).2))
}

pub fn forward_terms<T: Scalar>(params: &StudentParams<T>, terms: SampleTerms<'_>) -> ForwardTrace<T> {
    let components = [
        component(params, terms.query),
        component(params, terms.pos),
        component(params, terms.neg),
    ];
    let rep: Vec<T> = components.iter().flat_map(|c| c.vector.iter().copied()).collect();
    let (pre, hidden, logit) = feed_forward(params, &rep);
    ForwardTrace { components, rep, pre, hidden, logit, y_hat: sigmoid(logit) }
}

pub fn forward<T: Scalar>(params: &StudentParams<T>, collection: &Collection, sample: &PairwiseSample) -> Result<ForwardTrace<T>> {
    Ok(forward_terms(params, SampleTerms::resolve(collection, sample)?))
}

/// Binary cross-entropy plus `(λ/2)·‖w‖²` over layer weights and embeddings.
pub fn loss<T: Scalar>(y_hat: T, label: T, params: &StudentParams<T>, cfg: &LossConfig) -> T {
    let one = T::one();
    let xent = |y: T, p: T| if y == T::zero() { T::zero() } else { -y * p.ln() };
    let ce = xent(label, y_hat) + xent(one - label, one - y_hat);
    ce + T::of(cfg.l2_lambda * 0.5) * params.regularized_sq_norm()
}

/// Cross-entropy from the pre-sigmoid logit; finite for any finite logit.
pub fn loss_from_logit<T: Scalar>(logit: T, label: T) -> T {
    // max(z, 0) - y z + ln(1 + e^{-|z|})
    logit.max(T::zero()) - label * logit + (-logit.abs()).exp().ln_1p()
}

/// Exact gradient of [`loss`] with respect to every parameter.
pub fn backward<T: Scalar>(
    params: &StudentParams<T>,
    trace: &ForwardTrace<T>,
    label: T,
    cfg: &LossConfig,
) -> Result<Gradients<T>> {
    let n_layers = params.layers.len();
    let stale = trace.rep.len() != params.rep_dim()
        || trace.pre.len() != n_layers
        || trace.hidden.len() + 1 != n_layers
        || trace.pre.iter().zip(&params.layers).any(|(z, l)| z.len() != l.outputs)
        || trace
            .components
            .iter()
            .any(|c| c.terms.iter().any(|&t| t as usize >= params.vocab_size));
    if stale {
        return Err(FwlError::ShapeMismatch("forward trace does not match the parameters".into()));
    }
    let lambda = T::of(cfg.l2_lambda);

    // Output node: d(cross-entropy)/d(logit) = ŷ - y.
    let mut delta = vec![trace.y_hat - label];
    let mut layer_grads: Vec<Layer<T>> = Vec::with_capacity(n_layers);
    let mut g_rep = Vec::new();
    for i in (0..n_layers).rev() {
        let layer = &params.layers[i];
        let input: &[T] = if i == 0 { &trace.rep } else { &trace.hidden[i - 1] };
        let mut g = Layer::zeros(layer.inputs, layer.outputs);
        for o in 0..layer.outputs {
            let d = delta[o];
            g.bias[o] = d;
            let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
            for ((gw, &x), &w) in row.iter_mut().zip(input).zip(layer.row(o)) {
                *gw = d * x + lambda * w;
            }
        }
        let mut back = vec![T::zero(); layer.inputs];
        for o in 0..layer.outputs {
            let d = delta[o];
            for (b, &w) in back.iter_mut().zip(layer.row(o)) {
                *b += w * d;
            }
        }
        if i > 0 {
            let h = &trace.hidden[i - 1];
            for (b, &a) in back.iter_mut().zip(h) {
                *b *= T::one() - a * a;
            }
            delta = back;
        } else {
            g_rep = back;
        }
        layer_grads.push(g);
    }
    layer_grads.reverse();

    // Through the importance-softmax composition of each component: for a
    // term with total weight a_c in component c,
    // dL/dE_t = Σ_c a_c g_c and dL/du_t = E_t·(Σ_c a_c g_c) - Σ_c a_c (v_c·g_c).
    let e = params.embed_dim;
    let v_dot_g: Vec<T> = (0..3).map(|c| dot(&trace.components[c].vector, &g_rep[c * e..(c + 1) * e])).collect();
    let mut entries: Vec<(TermId, usize, T)> = Vec::new();
    for (c, comp) in trace.components.iter().enumerate() {
        if !comp.empty {
            entries.extend(comp.terms.iter().zip(&comp.weights).map(|(&t, &a)| (t, c, a)));
        }
    }
    entries.sort_unstable_by_key(|&(t, c, _)| (t, c));
    let mut embed_terms: Vec<TermId> = Vec::new();
    let mut embed_rows: Vec<T> = Vec::new();
    let mut importance: Vec<T> = Vec::new();
    let mut weight = [T::zero(); 3];
    let mut start = 0;
    while start < entries.len() {
        let t = entries[start].0;
        let mut end = start;
        weight.fill(T::zero());
        while end < entries.len() && entries[end].0 == t {
            weight[entries[end].1] += entries[end].2;
            end += 1;
        }
        let base = embed_rows.len();
        embed_rows.extend(std::iter::repeat_n(T::zero(), e));
        let row = &mut embed_rows[base..];
        let mut offset = T::zero();
        for (c, &a) in weight.iter().enumerate() {
            if a != T::zero() {
                for (r, &gj) in row.iter_mut().zip(&g_rep[c * e..(c + 1) * e]) {
                    *r += a * gj;
                }
                offset += a * v_dot_g[c];
            }
        }
        importance.push(dot(params.embedding(t), row) - offset);
        embed_terms.push(t);
        start = end;
    }

    Ok(Gradients {
        embed_dim: e,
        importance_terms: embed_terms.clone(),
        embed_terms,
        embed_rows,
        importance,
        layers: layer_grads,
        embed_decay: lambda,
    })
}
