//! Inference-time ResNet-1D + GRU forward pass.
//!
//! Stem conv → BN → hardswish, eight residual blocks
//! (conv → BN → hardswish → conv → BN, plus identity or 1×1 conv + BN
//! shortcut, summed before the final hardswish), channel-wise average
//! pooling at every time step, a GRU over the pooled sequence, and a dense
//! unit on the last hidden state followed by a sigmoid.

use super::bundle::{Tensor, WeightBundle};
use super::spec::{BlockKind, NetworkSpec};
use super::Segment;
use crate::error::{Error, Result};

/// Activations laid out as `channels × len`, row-major.
#[derive(Debug, Clone)]
struct Activation {
    channels: usize,
    len: usize,
    data: Vec<f32>,
}

impl Activation {
    fn row(&self, c: usize) -> &[f32] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    fn check_finite(&self, layer: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(layer.to_string()))
        }
    }
}

fn hardswish(x: f32) -> f32 {
    x * (x + 3.0).clamp(0.0, 6.0) / 6.0
}

fn sigmoid32(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

struct BatchNorm<'a> {
    gamma: &'a [f32],
    beta: &'a [f32],
    mean: &'a [f32],
    var: &'a [f32],
    eps: f32,
}

impl BatchNorm<'_> {
    fn apply(&self, act: &mut Activation) {
        let len = act.len;
        for c in 0..act.channels {
            let scale = self.gamma[c] / (self.var[c] + self.eps).sqrt();
            let shift = self.beta[c] - self.mean[c] * scale;
            for v in &mut act.data[c * len..(c + 1) * len] {
                *v = *v * scale + shift;
            }
        }
    }
}

struct Conv<'a> {
    weight: &'a Tensor,
    stride: usize,
}

impl Conv<'_> {
    /// Zero-padded (`kernel / 2` per side) strided convolution without bias.
    fn apply(&self, input: &Activation) -> Activation {
        let (out_c, in_c, k) = (self.weight.shape[0], self.weight.shape[1], self.weight.shape[2]);
        debug_assert_eq!(in_c, input.channels);
        let pad = k / 2;
        let out_len = super::spec::conv_out_len(input.len, k, self.stride);
        let mut data = vec![0.0f32; out_c * out_len];
        let w = &self.weight.data;
        for o in 0..out_c {
            let out_row = &mut data[o * out_len..(o + 1) * out_len];
            for i in 0..in_c {
                let x = input.row(i);
                for j in 0..k {
                    let wv = w[(o * in_c + i) * k + j];
                    if wv == 0.0 {
                        continue;
                    }
                    // output t reads x[t*stride + j - pad]
                    let t_lo = pad.saturating_sub(j).div_ceil(self.stride);
                    let t_hi = if input.len + pad > j {
                        ((input.len + pad - j - 1) / self.stride + 1).min(out_len)
                    } else {
                        0
                    };
                    if self.stride == 1 {
                        let off = j as isize - pad as isize;
                        for t in t_lo..t_hi {
                            out_row[t] += wv * x[(t as isize + off) as usize];
                        }
                    } else {
                        for t in t_lo..t_hi {
                            out_row[t] += wv * x[t * self.stride + j - pad];
                        }
                    }
                }
            }
        }
        Activation { channels: out_c, len: out_len, data }
    }
}

struct Block<'a> {
    name: String,
    conv1: Conv<'a>,
    bn1: BatchNorm<'a>,
    conv2: Conv<'a>,
    bn2: BatchNorm<'a>,
    shortcut: Option<(Conv<'a>, BatchNorm<'a>)>,
}

struct Gate<'a> {
    w_ih: &'a [f32],
    w_hh: &'a [f32],
    b_ih: &'a [f32],
    b_hh: &'a [f32],
}

impl Gate<'_> {
    /// `(W_ih·x + b_ih, W_hh·h + b_hh)` for scalar input `x`.
    fn parts(&self, x: f32, h: &[f32], out_in: &mut [f32], out_h: &mut [f32]) {
        let n = h.len();
        for r in 0..n {
            out_in[r] = self.w_ih[r] * x + self.b_ih[r];
            let row = &self.w_hh[r * n..(r + 1) * n];
            let mut acc = self.b_hh[r];
            for (w, hv) in row.iter().zip(h) {
                acc += w * hv;
            }
            out_h[r] = acc;
        }
    }
}

/// A validated bundle viewed as runnable layers.
pub struct Network<'a> {
    spec: &'a NetworkSpec,
    stem: Conv<'a>,
    stem_bn: BatchNorm<'a>,
    blocks: Vec<Block<'a>>,
    reset: Gate<'a>,
    update: Gate<'a>,
    candidate: Gate<'a>,
    head_w: &'a [f32],
    head_b: f32,
}

impl<'a> Network<'a> {
    pub fn new(bundle: &'a WeightBundle) -> Result<Self> {
        bundle.validate()?;
        let spec = &bundle.spec;
        let t = |name: String| bundle.tensor(&name);
        let bn = |prefix: &str| -> Result<BatchNorm<'a>> {
            Ok(BatchNorm {
                gamma: &bundle.tensor(&format!("{prefix}.gamma"))?.data,
                beta: &bundle.tensor(&format!("{prefix}.beta"))?.data,
                mean: &bundle.tensor(&format!("{prefix}.running_mean"))?.data,
                var: &bundle.tensor(&format!("{prefix}.running_var"))?.data,
                eps: spec.bn_eps,
            })
        };
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for (i, b) in spec.blocks.iter().enumerate() {
            let shortcut = match b.kind {
                BlockKind::Identity => None,
                BlockKind::ConvShortcut => Some((
                    Conv { weight: t(format!("blocks.{i}.shortcut.conv.weight"))?, stride: b.stride },
                    bn(&format!("blocks.{i}.shortcut.bn"))?,
                )),
            };
            blocks.push(Block {
                name: format!("blocks.{i}"),
                conv1: Conv { weight: t(format!("blocks.{i}.conv1.weight"))?, stride: b.stride },
                bn1: bn(&format!("blocks.{i}.bn1"))?,
                conv2: Conv { weight: t(format!("blocks.{i}.conv2.weight"))?, stride: 1 },
                bn2: bn(&format!("blocks.{i}.bn2"))?,
                shortcut,
            });
        }
        let gate = |g: &str| -> Result<Gate<'a>> {
            Ok(Gate {
                w_ih: &bundle.tensor(&format!("gru.{g}.w_ih"))?.data,
                w_hh: &bundle.tensor(&format!("gru.{g}.w_hh"))?.data,
                b_ih: &bundle.tensor(&format!("gru.{g}.b_ih"))?.data,
                b_hh: &bundle.tensor(&format!("gru.{g}.b_hh"))?.data,
            })
        };
        Ok(Self {
            spec,
            stem: Conv { weight: t("stem.conv.weight".into())?, stride: spec.stem.stride },
            stem_bn: bn("stem.bn")?,
            blocks,
            reset: gate("reset")?,
            update: gate("update")?,
            candidate: gate("candidate")?,
            head_w: &bundle.tensor("head.weight")?.data,
            head_b: bundle.tensor("head.bias")?.data[0],
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.spec
    }

    /// Logit of the improvement probability.
    pub fn logit(&self, segment: &Segment) -> Result<f32> {
        let spec = self.spec;
        if segment.channels != spec.input_channels || segment.len != spec.segment_len {
            return Err(Error::InvalidParameter(format!(
                "segment is {}×{}, network expects {}×{}",
                segment.channels, segment.len, spec.input_channels, spec.segment_len
            )));
        }
        let input = Activation { channels: segment.channels, len: segment.len, data: segment.data.clone() };
        let mut x = self.stem.apply(&input);
        self.stem_bn.apply(&mut x);
        x.data.iter_mut().for_each(|v| *v = hardswish(*v));
        x.check_finite("stem")?;

        for block in &self.blocks {
            let mut y = block.conv1.apply(&x);
            block.bn1.apply(&mut y);
            y.data.iter_mut().for_each(|v| *v = hardswish(*v));
            let mut y = block.conv2.apply(&y);
            block.bn2.apply(&mut y);
            let skip = match &block.shortcut {
                Some((conv, bn)) => {
                    let mut s = conv.apply(&x);
                    bn.apply(&mut s);
                    s
                }
                None => x,
            };
            for (a, b) in y.data.iter_mut().zip(&skip.data) {
                *a = hardswish(*a + b);
            }
            y.check_finite(&block.name)?;
            x = y;
        }

        // Average over channels at each time step.
        let inv_c = 1.0 / x.channels as f32;
        let sequence: Vec<f32> =
            (0..x.len).map(|t| (0..x.channels).map(|c| x.data[c * x.len + t]).sum::<f32>() * inv_c).collect();

        let h_size = spec.gru_hidden;
        let mut h = vec![0.0f32; h_size];
        let (mut ri, mut rh) = (vec![0.0; h_size], vec![0.0; h_size]);
        let (mut zi, mut zh) = (vec![0.0; h_size], vec![0.0; h_size]);
        let (mut ni, mut nh) = (vec![0.0; h_size], vec![0.0; h_size]);
        for &xt in &sequence {
            self.reset.parts(xt, &h, &mut ri, &mut rh);
            self.update.parts(xt, &h, &mut zi, &mut zh);
            self.candidate.parts(xt, &h, &mut ni, &mut nh);
            for k in 0..h_size {
                let r = sigmoid32(ri[k] + rh[k]);
                let z = sigmoid32(zi[k] + zh[k]);
                let n = (ni[k] + r * nh[k]).tanh();
                h[k] = (1.0 - z) * n + z * h[k];
            }
        }
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("gru".into()));
        }
        let logit = self.head_w.iter().zip(&h).map(|(w, v)| w * v).sum::<f32>() + self.head_b;
        if !logit.is_finite() {
            return Err(Error::NonFinite("head".into()));
        }
        Ok(logit)
    }

    /// Improvement probability, strictly inside (0, 1).
    pub fn probability(&self, segment: &Segment) -> Result<f64> {
        let logit = f64::from(self.logit(segment)?);
        Ok((1.0 / (1.0 + (-logit).exp())).clamp(1e-12, 1.0 - 1e-12))
    }
}

/// One-shot forward pass: validates `bundle` against `spec` and evaluates.
pub fn forward(spec: &NetworkSpec, bundle: &WeightBundle, segment: &Segment) -> Result<f64> {
    if &bundle.spec != spec {
        return Err(Error::Bundle("bundle was built for a different network spec".into()));
    }
    Network::new(bundle)?.probability(segment)
}
