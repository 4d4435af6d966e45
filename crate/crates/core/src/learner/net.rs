use rand::Rng;
use sha2::{Digest, Sha256};

use super::{Activation, Input, LearnerError, ModelConfig, CLASSES};
use crate::seed::keyed_rng;

const KERNEL: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

#[derive(Debug, Clone, Copy)]
struct ConvShape {
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    weight: usize,
    bias: usize,
}

/// Small convolutional classifier with all parameters in one flat vector:
/// per block a 3x3 stride-2 convolution and a pointwise nonlinearity, then
/// global average pooling and a linear head.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub params: Vec<f64>,
    convs: Vec<ConvShape>,
    head_weight: usize,
    head_bias: usize,
}

fn out_dim(n: usize) -> usize {
    (n + 2 * PAD - KERNEL) / STRIDE + 1
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace {
    /// Block inputs; `inputs[0]` is the image.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations per block.
    pre: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    logits: [f64; CLASSES],
}

impl Network {
    /// He-uniform weights, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, LearnerError> {
        config.validate()?;
        let mut net = Self::zeros(config)?;
        let mut rng = keyed_rng(seed, &[0x696e_6974]);
        for c in net.convs.clone() {
            let bound = (6.0 / (c.cin * KERNEL * KERNEL) as f64).sqrt();
            for p in &mut net.params[c.weight..c.weight + c.cout * c.cin * KERNEL * KERNEL] {
                *p = rng.random_range(-bound..bound);
            }
        }
        let last = *net.config.channels.last().expect("validated");
        let bound = (6.0 / (last + CLASSES) as f64).sqrt();
        let hw = net.head_weight;
        for p in &mut net.params[hw..hw + CLASSES * last] {
            *p = rng.random_range(-bound..bound);
        }
        Ok(net)
    }

    /// All parameters zero.
    pub fn zeros(config: ModelConfig) -> Result<Self, LearnerError> {
        config.validate()?;
        let mut convs = Vec::new();
        let (mut h, mut w, mut cin) = (config.internal_size as usize, config.internal_size as usize, 3usize);
        let mut offset = 0;
        for &cout in &config.channels {
            let (oh, ow) = (out_dim(h), out_dim(w));
            let weight = offset;
            let bias = weight + cout * cin * KERNEL * KERNEL;
            offset = bias + cout;
            convs.push(ConvShape {
                cin,
                cout,
                h,
                w,
                oh,
                ow,
                weight,
                bias,
            });
            (h, w, cin) = (oh, ow, cout);
        }
        let head_weight = offset;
        let head_bias = head_weight + CLASSES * cin;
        let total = head_bias + CLASSES;
        Ok(Network {
            config,
            params: vec![0.0; total],
            convs,
            head_weight,
            head_bias,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Range of the head weights within `params`.
    pub fn head_range(&self) -> std::ops::Range<usize> {
        self.head_weight..self.head_bias + CLASSES
    }

    /// Hex SHA-256 of the parameter bytes (little-endian f64).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, x: &Input) -> Result<(), LearnerError> {
        let s = self.config.internal_size as usize;
        if x.channels != 3 || x.height != s || x.width != s || x.data.len() != 3 * s * s {
            return Err(LearnerError::Shape {
                expected: format!("3x{s}x{s}"),
                got: format!("{}x{}x{}", x.channels, x.height, x.width),
            });
        }
        Ok(())
    }

    /// Class scores (logits) for each image of the batch.
    pub fn forward(&self, batch: &[Input]) -> Result<Vec<[f64; CLASSES]>, LearnerError> {
        if batch.is_empty() {
            return Err(LearnerError::EmptyBatch);
        }
        batch.iter().map(|x| self.trace(x).map(|t| t.logits)).collect()
    }

    fn trace(&self, x: &Input) -> Result<Trace, LearnerError> {
        self.check_input(x)?;
        let act = self.config.activation;
        let mut inputs = vec![x.data.clone()];
        let mut pre = Vec::with_capacity(self.convs.len());
        for (layer, c) in self.convs.iter().enumerate() {
            let z = conv_forward(&self.params, c, inputs.last().expect("non-empty"));
            if !z.iter().all(|v| v.is_finite()) {
                return Err(LearnerError::NonFinite { layer });
            }
            inputs.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
        }
        let last = self.convs.last().expect("validated");
        let a = inputs.last().expect("non-empty");
        let area = (last.oh * last.ow) as f64;
        let pooled: Vec<f64> = a.chunks_exact(last.oh * last.ow).map(|ch| ch.iter().sum::<f64>() / area).collect();
        let mut logits = [0.0; CLASSES];
        for (k, l) in logits.iter_mut().enumerate() {
            let row = &self.params[self.head_weight + k * last.cout..self.head_weight + (k + 1) * last.cout];
            *l = self.params[self.head_bias + k] + row.iter().zip(&pooled).map(|(w, g)| w * g).sum::<f64>();
        }
        if !logits.iter().all(|v| v.is_finite()) {
            return Err(LearnerError::NonFinite { layer: self.convs.len() });
        }
        Ok(Trace {
            inputs,
            pre,
            pooled,
            logits,
        })
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every parameter. Also returns the logits of the forward pass.
    pub fn loss_and_grads(&self, batch: &[Input], labels: &[usize]) -> Result<(f64, Vec<f64>, Vec<[f64; CLASSES]>), LearnerError> {
        if batch.is_empty() {
            return Err(LearnerError::EmptyBatch);
        }
        if batch.len() != labels.len() {
            return Err(LearnerError::Shape {
                expected: format!("{} labels", batch.len()),
                got: format!("{} labels", labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= CLASSES) {
            return Err(LearnerError::Label(bad));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut all_logits = Vec::with_capacity(batch.len());
        for (x, &y) in batch.iter().zip(labels) {
            let t = self.trace(x)?;
            let p = softmax(&t.logits);
            loss -= p[y].ln() * scale;
            let mut dlogits = p;
            dlogits[y] -= 1.0;
            dlogits.iter_mut().for_each(|d| *d *= scale);
            self.backward(&t, &dlogits, &mut grads);
            all_logits.push(t.logits);
        }
        Ok((loss, grads, all_logits))
    }

    fn backward(&self, t: &Trace, dlogits: &[f64; CLASSES], grads: &mut [f64]) {
        let last = self.convs.last().expect("validated");
        let mut dpooled = vec![0.0; last.cout];
        for (k, &d) in dlogits.iter().enumerate() {
            grads[self.head_bias + k] += d;
            let w0 = self.head_weight + k * last.cout;
            for c in 0..last.cout {
                grads[w0 + c] += d * t.pooled[c];
                dpooled[c] += d * self.params[w0 + c];
            }
        }
        let area = last.oh * last.ow;
        let mut dact: Vec<f64> = dpooled.iter().flat_map(|&d| std::iter::repeat_n(d / area as f64, area)).collect();
        let act = self.config.activation;
        for (layer, c) in self.convs.iter().enumerate().rev() {
            let dz: Vec<f64> = dact.iter().zip(&t.pre[layer]).map(|(d, &z)| d * act.derivative(z)).collect();
            let need_input_grad = layer > 0;
            dact = conv_backward(&self.params, c, &t.inputs[layer], &dz, grads, need_input_grad);
        }
    }
}

fn conv_forward(params: &[f64], c: &ConvShape, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; c.cout * c.oh * c.ow];
    for co in 0..c.cout {
        let plane = &mut out[co * c.oh * c.ow..(co + 1) * c.oh * c.ow];
        plane.fill(params[c.bias + co]);
        for ci in 0..c.cin {
            let src = &x[ci * c.h * c.w..(ci + 1) * c.h * c.w];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let wv = params[c.weight + ((co * c.cin + ci) * KERNEL + ky) * KERNEL + kx];
                    for oy in 0..c.oh {
                        let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                        if iy < 0 || iy >= c.h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * c.w..(iy as usize + 1) * c.w];
                        let dst = &mut plane[oy * c.ow..(oy + 1) * c.ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                            if ix >= 0 && ix < c.w as isize {
                                *d += wv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient (or
/// an empty vector when not needed).
fn conv_backward(params: &[f64], c: &ConvShape, x: &[f64], dz: &[f64], grads: &mut [f64], need_input_grad: bool) -> Vec<f64> {
    let mut dx = if need_input_grad { vec![0.0; c.cin * c.h * c.w] } else { Vec::new() };
    for co in 0..c.cout {
        let dplane = &dz[co * c.oh * c.ow..(co + 1) * c.oh * c.ow];
        grads[c.bias + co] += dplane.iter().sum::<f64>();
        for ci in 0..c.cin {
            let src = &x[ci * c.h * c.w..(ci + 1) * c.h * c.w];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let widx = c.weight + ((co * c.cin + ci) * KERNEL + ky) * KERNEL + kx;
                    let wv = params[widx];
                    let mut gw = 0.0;
                    for oy in 0..c.oh {
                        let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                        if iy < 0 || iy >= c.h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        for ox in 0..c.ow {
                            let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                            if ix < 0 || ix >= c.w as isize {
                                continue;
                            }
                            let d = dplane[oy * c.ow + ox];
                            gw += d * src[iy * c.w + ix as usize];
                            if need_input_grad {
                                dx[ci * c.h * c.w + iy * c.w + ix as usize] += d * wv;
                            }
                        }
                    }
                    grads[widx] += gw;
                }
            }
        }
    }
    dx
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64; CLASSES]) -> [f64; CLASSES] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|l| (l - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// Index of the largest score, earliest on ties.
pub fn argmax(scores: &[f64; CLASSES]) -> usize {
    let mut best = 0;
    for k in 1..CLASSES {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    best
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            internal_size: 8,
            channels: vec![2, 3],
            ..ModelConfig::default()
        }
    }

    fn input(seed: u64, size: usize) -> Input {
        let mut rng = keyed_rng(seed, &[]);
        Input {
            channels: 3,
            height: size,
            width: size,
            data: (0..3 * size * size).map(|_| rng.random_range(0.0..1.0)).collect(),
        }
    }

    #[test]
    fn layout_counts_parameters() {
        let net = Network::zeros(tiny()).unwrap();
        // conv1 2*3*9+2, conv2 3*2*9+3, head 3*3+3
        assert_eq!(net.param_count(), 56 + 57 + 12);
    }

    #[test]
    fn zero_head_gives_uniform_softmax() {
        let mut net = Network::new(tiny(), 1).unwrap();
        let r = net.head_range();
        net.params[r].fill(0.0);
        let out = net.forward(&[input(1, 8)]).unwrap();
        let p = softmax(&out[0]);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let (loss, _, _) = net.loss_and_grads(&[input(1, 8)], &[2]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_batch_rows_match() {
        let net = Network::new(tiny(), 2).unwrap();
        let x = input(3, 8);
        let out = net.forward(&[x.clone(), x]).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn duplicated_sample_gradient_equals_single() {
        let net = Network::new(tiny(), 2).unwrap();
        let x = input(3, 8);
        let (l1, g1, _) = net.loss_and_grads(std::slice::from_ref(&x), &[1]).unwrap();
        let (l2, g2, _) = net.loss_and_grads(&[x.clone(), x], &[1, 1]).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_label_and_shape() {
        let net = Network::new(tiny(), 2).unwrap();
        assert!(matches!(net.loss_and_grads(&[input(1, 8)], &[3]), Err(LearnerError::Label(3))));
        assert!(matches!(net.forward(&[input(1, 9)]), Err(LearnerError::Shape { .. })));
        assert!(matches!(net.forward(&[]), Err(LearnerError::EmptyBatch)));
    }

    #[test]
    fn non_finite_reports_layer() {
        let mut net = Network::new(tiny(), 2).unwrap();
        net.params[0] = f64::NAN;
        assert!(matches!(net.forward(&[input(1, 8)]), Err(LearnerError::NonFinite { layer: 0 })));
    }

    #[test]
    fn digest_tracks_parameters() {
        let mut net = Network::new(tiny(), 2).unwrap();
        let d = net.digest();
        assert_eq!(d, net.digest());
        net.params[5] += 1e-12;
        assert_ne!(d, net.digest());
    }
}
