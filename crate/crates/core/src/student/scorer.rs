use super::network::component;
use super::StudentParams;
use crate::corpus::TermId;
use crate::scalar::{dot, sigmoid, Scalar};

/// Cached pairwise predictions for one query over a fixed candidate set.
///
/// The first layer is linear in `[q; d+; d-]`, so its contribution splits
/// into per-query and per-document partial products computed once; each pair
/// then costs one pass through the remaining nonlinearity.
pub struct QueryScorer<'p, T> {
    params: &'p StudentParams<T>,
    query_part: Vec<T>,
    pos_parts: Vec<Vec<T>>,
    neg_parts: Vec<Vec<T>>,
}

impl<'p, T: Scalar> QueryScorer<'p, T> {
    pub fn new(params: &'p StudentParams<T>, query: &[TermId], docs: &[&[TermId]]) -> Self {
        let e = params.embed_dim;
        let first = &params.layers[0];
        let partial = |v: &[T], block: usize| -> Vec<T> {
            (0..first.outputs)
                .map(|o| dot(&first.row(o)[block * e..(block + 1) * e], v))
                .collect()
        };
        let q = component(params, query).vector;
        let query_part = partial(&q, 0).into_iter().zip(&first.bias).map(|(x, &b)| x + b).collect();
        let vecs: Vec<Vec<T>> = docs.iter().map(|d| component(params, d).vector).collect();
        let pos_parts = vecs.iter().map(|v| partial(v, 1)).collect();
        let neg_parts = vecs.iter().map(|v| partial(v, 2)).collect();
        Self { params, query_part, pos_parts, neg_parts }
    }

    pub fn len(&self) -> usize {
        self.pos_parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos_parts.is_empty()
    }

    /// Predicted probability that candidate `a` outranks candidate `b`.
    pub fn prob(&self, a: usize, b: usize) -> T {
        let layers = &self.params.layers;
        let (pa, nb) = (&self.pos_parts[a], &self.neg_parts[b]);
        let z: Vec<T> = (0..self.query_part.len()).map(|o| self.query_part[o] + pa[o] + nb[o]).collect();
        if layers.len() == 1 {
            return sigmoid(z[0]);
        }
        let mut x: Vec<T> = z.into_iter().map(|v| v.tanh()).collect();
        for (i, layer) in layers.iter().enumerate().skip(1) {
            let z: Vec<T> = (0..layer.outputs).map(|o| dot(layer.row(o), &x) + layer.bias[o]).collect();
            if i + 1 == layers.len() {
                return sigmoid(z[0]);
            }
            x = z.into_iter().map(|v| v.tanh()).collect();
        }
        unreachable!("network has an output layer")
    }

    /// Mean win probability of every candidate against all the others
    /// (0.5 for a lone candidate).
    pub fn tournament_scores(&self) -> Vec<T> {
        let n = self.len();
        if n == 1 {
            return vec![T::of(0.5)];
        }
        let layers = &self.params.layers;
        let width = layers.iter().map(|l| l.outputs).max().unwrap_or(1);
        let mut x = vec![T::zero(); width];
        let mut z = vec![T::zero(); width];
        let mut scores = vec![T::zero(); n];
        for a in 0..n {
            let mut total = T::zero();
            for b in (0..n).filter(|&b| b != a) {
                let (pa, nb) = (&self.pos_parts[a], &self.neg_parts[b]);
                let mut len = self.query_part.len();
                for o in 0..len {
                    z[o] = self.query_part[o] + pa[o] + nb[o];
                }
                for layer in &layers[1..] {
                    for o in 0..len {
                        x[o] = z[o].tanh();
                    }
                    for o in 0..layer.outputs {
                        z[o] = dot(layer.row(o), &x[..len]) + layer.bias[o];
                    }
                    len = layer.outputs;
                }
                total += sigmoid(z[0]);
            }
            scores[a] = total / T::count(n - 1);
        }
        scores
    }
}
