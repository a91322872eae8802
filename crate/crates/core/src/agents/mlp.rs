//! A small fully connected ReLU network with a linear output layer and
//! hand-written backpropagation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Parameters live in one flat vector: for each layer, the `out x in`
/// weight matrix (row-major) followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Forward-pass intermediates needed for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input plus each layer's post-activation output.
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty trace")
    }
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let mut params = Vec::with_capacity(Self::count(sizes));
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = (6.0 / n_in as f64).sqrt();
            params.extend((0..n_in * n_out).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let at = offset;
            offset += w[0] * w[1] + w[1];
            (at, w[0], w[1])
        })
    }

    pub fn forward(&self, x: &[f64]) -> Trace {
        debug_assert_eq!(x.len(), self.input_dim());
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for (l, (at, n_in, n_out)) in self.layers().enumerate() {
            let input = &acts[l];
            let nz: Vec<usize> = (0..n_in).filter(|&i| input[i] != 0.0).collect();
            let w = &self.params[at..at + n_in * n_out];
            let b = &self.params[at + n_in * n_out..at + n_in * n_out + n_out];
            let mut out = b.to_vec();
            for (o, slot) in out.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                for &i in &nz {
                    *slot += row[i] * input[i];
                }
            }
            if l + 1 < n_layers {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        Trace { acts }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).acts.pop().unwrap()
    }

    /// Adds d(loss)/d(params) to `grad`, given d(loss)/d(output).
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grad: &mut [f64]) {
        let layers: Vec<_> = self.layers().collect();
        let mut delta = d_out.to_vec();
        for (l, &(at, n_in, n_out)) in layers.iter().enumerate().rev() {
            let input = &trace.acts[l];
            let w_end = at + n_in * n_out;
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[w_end + o] += d;
                let row = &mut grad[at + o * n_in..at + (o + 1) * n_in];
                for (i, g) in row.iter_mut().enumerate() {
                    if input[i] != 0.0 {
                        *g += d * input[i];
                    }
                }
            }
            if l == 0 {
                break;
            }
            // through the weights, then the ReLU of the previous layer
            let w = &self.params[at..w_end];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (i, p) in prev.iter_mut().enumerate() {
                    *p += w[o * n_in + i] * d;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
