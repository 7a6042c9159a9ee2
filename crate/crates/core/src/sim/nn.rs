//! Minimal feed-forward networks with hand-written backpropagation.
//!
//! Batches are row-major matrices stored as flat slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out × n_in`, row-major.
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    /// Uniform weights in `±1/sqrt(n_in)`, zero bias.
    pub fn init<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let w = (0..n_in * n_out).map(|_| T::lit(rng.random_range(-bound..bound))).collect();
        Dense { n_in, n_out, w, b: vec![T::zero(); n_out] }
    }

    pub fn zeros_like(&self) -> Self {
        Dense { n_in: self.n_in, n_out: self.n_out, w: vec![T::zero(); self.w.len()], b: vec![T::zero(); self.b.len()] }
    }

    pub fn forward(&self, x: &[T], rows: usize) -> Vec<T> {
        let mut y = Vec::with_capacity(rows * self.n_out);
        for r in 0..rows {
            let xr = &x[r * self.n_in..(r + 1) * self.n_in];
            for o in 0..self.n_out {
                let wo = &self.w[o * self.n_in..(o + 1) * self.n_in];
                let mut acc = self.b[o];
                for (a, b) in wo.iter().zip(xr) {
                    acc = acc + *a * *b;
                }
                y.push(acc);
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[T], dy: &[T], rows: usize, grad: &mut Self) -> Vec<T> {
        let mut dx = vec![T::zero(); rows * self.n_in];
        for r in 0..rows {
            let xr = &x[r * self.n_in..(r + 1) * self.n_in];
            for o in 0..self.n_out {
                let g = dy[r * self.n_out + o];
                grad.b[o] = grad.b[o] + g;
                for i in 0..self.n_in {
                    grad.w[o * self.n_in + i] = grad.w[o * self.n_in + i] + g * xr[i];
                    dx[r * self.n_in + i] = dx[r * self.n_in + i] + g * self.w[o * self.n_in + i];
                }
            }
        }
        dx
    }
}

/// Stack of dense layers with tanh between them; the last layer is linear
/// unless `tanh_out` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
    pub tanh_out: bool,
}

/// Activations saved by [`Mlp::forward`]: the input to every layer, then
/// the network output.
pub struct MlpCache<T> {
    acts: Vec<Vec<T>>,
    rows: usize,
}

impl<T> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("cache holds the input")
    }
}

impl<T: Scalar> Mlp<T> {
    /// `sizes = [n_in, hidden..., n_out]`.
    pub fn init<R: Rng>(sizes: &[usize], tanh_out: bool, rng: &mut R) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Mlp { layers, tanh_out }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp { layers: self.layers.iter().map(Dense::zeros_like).collect(), tanh_out: self.tanh_out }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().expect("at least one layer").n_out
    }

    fn activates(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.tanh_out
    }

    pub fn forward(&self, x: &[T], rows: usize) -> MlpCache<T> {
        let mut acts = vec![x.to_vec()];
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(acts.last().expect("non-empty"), rows);
            if self.activates(l) {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(y);
        }
        MlpCache { acts, rows }
    }

    /// Gradients for `dL/d(output)`; returns the parameter gradients and
    /// `dL/d(input)`.
    pub fn backward(&self, cache: &MlpCache<T>, dout: &[T]) -> (Self, Vec<T>) {
        let mut grad = self.zeros_like();
        let mut d = dout.to_vec();
        for l in (0..self.layers.len()).rev() {
            if self.activates(l) {
                for (g, y) in d.iter_mut().zip(&cache.acts[l + 1]) {
                    *g = *g * (T::one() - *y * *y);
                }
            }
            d = self.layers[l].backward(&cache.acts[l], &d, cache.rows, &mut grad.layers[l]);
        }
        (grad, d)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }

    pub fn set_params(&mut self, p: &[T]) {
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = it.next().expect("parameter count matches");
            }
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: T, other: &Self) {
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            for (p, g) in l.w.iter_mut().zip(&o.w).chain(l.b.iter_mut().zip(&o.b)) {
                *p = *p + a * *g;
            }
        }
    }
}

/// Identity on the forward pass; multiplies the gradient by `-lambda` on
/// the backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReverse<T> {
    pub lambda: T,
}

impl<T: Scalar> GradReverse<T> {
    pub fn new(lambda: T) -> Self {
        GradReverse { lambda }
    }

    pub fn forward(&self, v: &[T]) -> Vec<T> {
        v.to_vec()
    }

    pub fn backward(&self, g: &[T]) -> Vec<T> {
        g.iter().map(|&x| -self.lambda * x).collect()
    }
}

/// Numerically stable `log(1 + exp(z))`.
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Mean binary cross-entropy of logits against 0/1 targets, and its
/// gradient with respect to each logit.
pub fn bce_with_logits<T: Scalar>(logits: &[T], targets: &[bool]) -> (T, Vec<T>) {
    let n = T::from_count(logits.len());
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        let y = if y { T::one() } else { T::zero() };
        loss = loss + softplus(z) - z * y;
        grad.push((sigmoid(z) - y) / n);
    }
    (loss / n, grad)
}

/// Mean softmax cross-entropy over `rows × classes` logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], classes: usize, targets: &[usize]) -> (T, Vec<T>) {
    let rows = targets.len();
    let n = T::from_count(rows);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for (r, &t) in targets.iter().enumerate() {
        let z = &logits[r * classes..(r + 1) * classes];
        let m = z.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = z.iter().map(|&v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        loss = loss + lse - z[t];
        for c in 0..classes {
            let p = (z[c] - lse).exp();
            let y = if c == t { T::one() } else { T::zero() };
            grad[r * classes + c] = (p - y) / n;
        }
    }
    (loss / n, grad)
}

/// Edge-reconstruction loss over node embeddings `emb` (`rows × dim`).
///
/// Every pair `i < j` with different domains is scored by the logistic of
/// the inner product of their embeddings against `adjacent(d_i, d_j)`.
/// Returns the mean binary cross-entropy and its gradient with respect to
/// the embeddings; a batch without cross-domain pairs has zero loss.
pub fn edge_reconstruction_loss<T: Scalar>(
    emb: &[T],
    dim: usize,
    domains: &[usize],
    adjacent: impl Fn(usize, usize) -> bool,
) -> (T, Vec<T>) {
    let rows = domains.len();
    let mut pairs = Vec::new();
    for i in 0..rows {
        for j in i + 1..rows {
            if domains[i] != domains[j] {
                pairs.push((i, j));
            }
        }
    }
    let mut grad = vec![T::zero(); emb.len()];
    if pairs.is_empty() {
        return (T::zero(), grad);
    }
    let row = |i: usize| &emb[i * dim..(i + 1) * dim];
    let logits: Vec<T> = pairs.iter().map(|&(i, j)| row(i).iter().zip(row(j)).map(|(a, b)| *a * *b).sum()).collect();
    let targets: Vec<bool> = pairs.iter().map(|&(i, j)| adjacent(domains[i], domains[j])).collect();
    let (loss, dlogit) = bce_with_logits(&logits, &targets);
    for (&(i, j), &g) in pairs.iter().zip(&dlogit) {
        for k in 0..dim {
            let (ei, ej) = (emb[i * dim + k], emb[j * dim + k]);
            grad[i * dim + k] = grad[i * dim + k] + g * ej;
            grad[j * dim + k] = grad[j * dim + k] + g * ei;
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reversal_is_identity_forward() {
        let r = GradReverse::new(1.0f64);
        assert_eq!(r.forward(&[1.5, -2.0]), vec![1.5, -2.0]);
        assert_eq!(r.backward(&[1.5, -2.0]), vec![-1.5, 2.0]);
        assert_eq!(GradReverse::new(0.25f64).backward(&[4.0]), vec![-1.0]);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::<f64>::init(&[3, 4, 2], false, &mut rng);
        let x = [0.3, -0.7, 1.1, -0.2, 0.5, 0.9];
        let loss = |net: &Mlp<f64>| net.forward(&x, 2).output().iter().map(|v| v * v).sum::<f64>();
        let cache = net.forward(&x, 2);
        let dout: Vec<f64> = cache.output().iter().map(|v| 2.0 * v).collect();
        let (grad, _) = net.backward(&cache, &dout);
        let analytic = grad.params();
        let p = net.params();
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k] += 1e-6;
            net.set_params(&q);
            let up = loss(&net);
            q[k] -= 2e-6;
            net.set_params(&q);
            let down = loss(&net);
            let fd = (up - down) / 2e-6;
            assert!((fd - analytic[k]).abs() < 1e-6, "param {k}: {fd} vs {}", analytic[k]);
        }
    }

    #[test]
    fn bce_matches_definition() {
        let (l, g) = bce_with_logits(&[0.0f64, 2.0], &[true, false]);
        let expected = (2f64.ln() + (1.0 + 2f64.exp()).ln()) / 2.0;
        assert!((l - expected).abs() < 1e-12);
        assert!((g[0] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_domain_batch_has_no_pairs() {
        let (l, g) = edge_reconstruction_loss(&[1.0f64, 2.0], 1, &[0, 0], |_, _| true);
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }
}
