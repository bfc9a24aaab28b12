//! Small dense networks over flat parameter vectors, with exact
//! backpropagation and the two optimizers used by the perception model and
//! the agent.

use rand::Rng;

/// Fully connected network: tanh on hidden layers, identity output.
///
/// Parameters live outside the struct as one flat `[f64]`; layer `l`
/// stores its weights row-major (`out x in`) followed by its biases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `layers[0]` is the input, `layers[l]` the output of layer `l`.
    layers: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("tape has an input layer")
    }
}

impl Mlp {
    pub fn new(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0));
        Mlp {
            sizes: sizes.to_vec(),
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Uniform in ±1/sqrt(fan_in); the output layer is further scaled by
    /// `output_scale`.
    pub fn init(&self, rng: &mut impl Rng, output_scale: f64) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let scale = if l == last { output_scale } else { 1.0 };
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound) * scale);
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Tape {
        debug_assert_eq!(params.len(), self.param_count());
        debug_assert_eq!(input.len(), self.input_dim());
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(input.to_vec());
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &params[offset..offset + fan_in * fan_out];
            let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let x = &layers[l];
            let mut y: Vec<f64> = weights
                .chunks_exact(fan_in)
                .zip(bias)
                .map(|(row, b)| b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>())
                .collect();
            if l + 1 < n_layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(y);
        }
        Tape { layers }
    }

    /// Accumulates `d loss / d params` into `grad` and returns
    /// `d loss / d input`.
    pub fn backward(&self, params: &[f64], tape: &Tape, grad_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.param_count());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = grad_output.to_vec();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < n_layers {
                // Through tanh: d/dz = 1 - y^2.
                for (d, y) in delta.iter_mut().zip(&tape.layers[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let off = offsets[l];
            let x = &tape.layers[l];
            let weights = &params[off..off + fan_in * fan_out];
            {
                let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    if *d != 0.0 {
                        for (g, xi) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(x) {
                            *g += d * xi;
                        }
                    }
                }
            }
            let mut next = vec![0.0; fan_in];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    for (n, w) in next.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                        *n += d * w;
                    }
                }
            }
            delta = next;
        }
        delta
    }
}

/// Adam with the usual defaults for the moment decay rates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
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
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Stochastic gradient descent with heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(n: usize, lr: f64, momentum: f64) -> Self {
        SgdMomentum {
            lr,
            momentum,
            velocity: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= self.lr * *v;
        }
    }
}

/// Either optimizer behind one interface.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(SgdMomentum),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Sgd(o) => o.step(params, grad),
            Optimizer::Adam(o) => o.step(params, grad),
        }
    }
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn loss(net: &Mlp, p: &[f64], x: &[f64]) -> f64 {
        // Arbitrary smooth scalar of the outputs.
        net.forward(p, x)
            .output()
            .iter()
            .enumerate()
            .map(|(i, y)| (i as f64 + 1.0) * y + 0.5 * y * y)
            .sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = StdRng::seed_from_u64(3);
        let net = Mlp::new(&[4, 6, 5, 3]);
        let p = net.init(&mut rng, 1.0);
        let x = vec![0.3, -0.7, 0.1, 0.9];
        let tape = net.forward(&p, &x);
        let gout: Vec<f64> = tape
            .output()
            .iter()
            .enumerate()
            .map(|(i, y)| i as f64 + 1.0 + y)
            .collect();
        let mut grad = vec![0.0; net.param_count()];
        let gin = net.backward(&p, &tape, &gout, &mut grad);
        let h = 1e-6;
        for i in 0..p.len() {
            let mut pp = p.clone();
            pp[i] += h;
            let mut pm = p.clone();
            pm[i] -= h;
            let fd = (loss(&net, &pp, &x) - loss(&net, &pm, &x)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&net, &p, &xp) - loss(&net, &p, &xm)) / (2.0 * h);
            assert!((fd - gin[i]).abs() < 1e-7 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn param_count_and_init_bounds() {
        let net = Mlp::new(&[8, 64, 64, 1]);
        assert_eq!(net.param_count(), 8 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
        let p = net.init(&mut StdRng::seed_from_u64(0), 1.0);
        assert_eq!(p.len(), net.param_count());
        assert!(p[..8 * 64].iter().all(|w| w.abs() <= 1.0 / 8f64.sqrt()));
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut p = vec![1.0, 2.0];
        let mut opt = SgdMomentum::new(2, 0.0, 0.9);
        opt.step(&mut p, &[5.0, -3.0]);
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-2), "{p:?}");
    }
}
