//! Small fully connected regressors with tanh hidden layers, inverted
//! dropout after each hidden activation, a linear scalar output, manual
//! backpropagation and Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Parameters are stored flat, layer by layer, each as a row-major
/// `out × in` weight matrix followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    input_dim: usize,
    /// Layer output widths; the last is 1.
    widths: Vec<usize>,
    dropout: f64,
    params: Vec<f64>,
}

struct Layer {
    inputs: usize,
    outputs: usize,
    /// Offset of the weights in the flat parameter vector.
    offset: usize,
}

impl Layer {
    fn bias(&self) -> usize {
        self.offset + self.inputs * self.outputs
    }
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    /// Input to each layer (after dropout for hidden layers).
    inputs: Vec<Vec<f64>>,
    /// Hidden tanh outputs before dropout.
    hidden: Vec<Vec<f64>>,
    /// Dropout scale per hidden unit: 0 or 1/(1-p).
    masks: Vec<Vec<f64>>,
    output: f64,
}

fn nonzeros(x: &[f64]) -> Vec<usize> {
    x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

impl Mlp {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng>(input_dim: usize, widths: &[usize], dropout: f64, rng: &mut R) -> Self {
        assert!(!widths.is_empty() && *widths.last().unwrap() == 1, "the last layer must have width 1");
        let mut net = Self {
            input_dim,
            widths: widths.to_vec(),
            dropout,
            params: Vec::new(),
        };
        let layers = net.layers();
        net.params = vec![0.0; net.param_count()];
        for l in &layers {
            let limit = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            for w in &mut net.params[l.offset..l.bias()] {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        net
    }

    fn layers(&self) -> Vec<Layer> {
        let mut out = Vec::with_capacity(self.widths.len());
        let (mut inputs, mut offset) = (self.input_dim, 0);
        for &w in &self.widths {
            out.push(Layer {
                inputs,
                outputs: w,
                offset,
            });
            offset += inputs * w + w;
            inputs = w;
        }
        out
    }

    pub fn param_count(&self) -> usize {
        let mut inputs = self.input_dim;
        let mut n = 0;
        for &w in &self.widths {
            n += inputs * w + w;
            inputs = w;
        }
        n
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn from_parts(input_dim: usize, widths: Vec<usize>, dropout: f64, params: Vec<f64>) -> Option<Self> {
        let net = Self {
            input_dim,
            widths,
            dropout,
            params,
        };
        (net.widths.last() == Some(&1) && net.params.len() == net.param_count()).then_some(net)
    }

    /// Affine map of one layer. Zero inputs are skipped, which keeps the
    /// first layer cheap on sparse embeddings.
    fn affine(&self, l: &Layer, x: &[f64]) -> Vec<f64> {
        let nz = nonzeros(x);
        let p = &self.params;
        (0..l.outputs)
            .map(|j| {
                let row = l.offset + j * l.inputs;
                p[l.bias() + j] + nz.iter().map(|&k| p[row + k] * x[k]).sum::<f64>()
            })
            .collect()
    }

    fn forward<R: Rng>(&self, x: &[f64], mut rng: Option<&mut R>) -> Trace {
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut trace = Trace {
            inputs: Vec::with_capacity(layers.len()),
            hidden: Vec::new(),
            masks: Vec::new(),
            output: 0.0,
        };
        let mut a = x.to_vec();
        for (i, l) in layers.iter().enumerate() {
            let z = self.affine(l, &a);
            trace.inputs.push(a);
            if i == last {
                trace.output = z[0];
                break;
            }
            let h: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
            let mask: Vec<f64> = match rng.as_deref_mut() {
                Some(r) if self.dropout > 0.0 => {
                    let keep = 1.0 / (1.0 - self.dropout);
                    (0..h.len())
                        .map(|_| if r.gen::<f64>() < self.dropout { 0.0 } else { keep })
                        .collect()
                }
                _ => vec![1.0; h.len()],
            };
            a = h.iter().zip(&mask).map(|(v, m)| v * m).collect();
            trace.hidden.push(h);
            trace.masks.push(mask);
        }
        trace
    }

    /// Inference output; dropout is off.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forward::<rand::rngs::ThreadRng>(x, None).output
    }

    /// Mean squared error over the batch and its gradient with respect to
    /// every parameter. With `rng`, dropout masks are sampled; without it
    /// the network is deterministic.
    pub fn loss_and_grad<R: Rng>(&self, batch: &[(&[f64], f64)], mut rng: Option<&mut R>) -> (f64, Vec<f64>) {
        let layers = self.layers();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let n = batch.len() as f64;
        for (x, target) in batch {
            let trace = self.forward(x, rng.as_deref_mut());
            let err = trace.output - target;
            loss += err * err / n;
            // dL/dz for the current layer's outputs.
            let mut delta = vec![2.0 * err / n];
            for (i, l) in layers.iter().enumerate().rev() {
                let input = &trace.inputs[i];
                let nz = nonzeros(input);
                for (j, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    grad[l.bias() + j] += d;
                    let row = l.offset + j * l.inputs;
                    for &k in &nz {
                        grad[row + k] += d * input[k];
                    }
                }
                if i == 0 {
                    break;
                }
                // Back through dropout and tanh of the previous hidden layer.
                let (h, mask) = (&trace.hidden[i - 1], &trace.masks[i - 1]);
                delta = (0..l.inputs)
                    .map(|k| {
                        if mask[k] == 0.0 {
                            return 0.0;
                        }
                        let back: f64 = delta
                            .iter()
                            .enumerate()
                            .map(|(j, d)| d * self.params[l.offset + j * l.inputs + k])
                            .sum();
                        back * mask[k] * (1.0 - h[k] * h[k])
                    })
                    .collect();
            }
        }
        (loss, grad)
    }

    /// Mean squared error with dropout off.
    pub fn mse(&self, data: &[(&[f64], f64)]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        data.iter().map(|(x, t)| (self.predict(x) - t).powi(2)).sum::<f64>() / data.len() as f64
    }
}

/// Adam with the usual moment coefficients.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Largest relative difference between analytic and central-difference
/// gradients of the batch loss. Near-zero pairs are compared against a
/// floor of `1e-6` instead of their own magnitude.
pub fn gradient_check(net: &Mlp, batch: &[(&[f64], f64)], step: f64) -> f64 {
    let (_, analytic) = net.loss_and_grad::<rand::rngs::ThreadRng>(batch, None);
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    #[allow(clippy::needless_range_loop)]
    for i in 0..net.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + step;
        let (up, _) = probe.loss_and_grad::<rand::rngs::ThreadRng>(batch, None);
        probe.params[i] = orig - step;
        let (down, _) = probe.loss_and_grad::<rand::rngs::ThreadRng>(batch, None);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from_seed;

    #[test]
    fn shapes_and_parameter_counts() {
        let mut rng = rng_from_seed(1);
        let net = Mlp::new(5, &[4, 3, 1], 0.0, &mut rng);
        assert_eq!(net.param_count(), 5 * 4 + 4 + 4 * 3 + 3 + 3 + 1);
        assert_eq!(net.params().len(), net.param_count());
        assert!(Mlp::from_parts(5, vec![4, 1], 0.0, vec![0.0; 3]).is_none());
    }

    #[test]
    fn one_layer_net_is_affine() {
        let net = Mlp::from_parts(3, vec![1], 0.0, vec![1.0, -2.0, 0.5, 0.25]).unwrap();
        assert!((net.predict(&[1.0, 1.0, 2.0]) - (1.0 - 2.0 + 1.0 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng_from_seed(7);
        for widths in [vec![1], vec![6, 1], vec![6, 4, 1], vec![5, 4, 3, 1]] {
            let net = Mlp::new(4, &widths, 0.0, &mut rng);
            let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let batch: Vec<(&[f64], f64)> = xs.iter().map(|x| (x.as_slice(), rng.gen_range(-1.0..1.0))).collect();
            let worst = gradient_check(&net, &batch, 1e-6);
            assert!(worst < 1e-4, "{widths:?}: {worst}");
        }
    }

    #[test]
    fn dropout_zeroes_units_in_training_only() {
        let mut rng = rng_from_seed(3);
        let net = Mlp::new(3, &[50, 1], 0.5, &mut rng);
        let x = [0.3, -0.2, 0.9];
        let trace = net.forward(&x, Some(&mut rng));
        let dropped = trace.masks[0].iter().filter(|m| **m == 0.0).count();
        assert!(dropped > 5 && dropped < 45);
        assert!(trace.masks[0].iter().all(|m| *m == 0.0 || *m == 2.0));
        assert_eq!(net.predict(&x), net.predict(&x));
    }

    #[test]
    fn adam_fits_a_line() {
        let mut rng = rng_from_seed(5);
        let mut net = Mlp::new(1, &[8, 1], 0.0, &mut rng);
        let xs: Vec<[f64; 1]> = (0..20).map(|i| [i as f64 / 20.0 - 0.5]).collect();
        let data: Vec<(&[f64], f64)> = xs.iter().map(|x| (x.as_slice(), 0.6 * x[0] + 0.1)).collect();
        let mut adam = Adam::new(net.param_count(), 1e-2);
        for _ in 0..2000 {
            let (_, g) = net.loss_and_grad::<rand::rngs::ThreadRng>(&data, None);
            adam.step(net.params_mut(), &g);
        }
        assert!(net.mse(&data) < 1e-4);
    }
}
