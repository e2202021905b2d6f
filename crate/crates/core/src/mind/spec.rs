//! Architecture description shared by the trainer and the inference engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESIDUAL_BLOCKS: usize = 8;
pub const GRU_HIDDEN: usize = 128;
pub const GRU_GATES: [&str; 3] = ["reset", "update", "candidate"];
pub const BN_PARAMS: [&str; 4] = ["gamma", "beta", "running_mean", "running_var"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    Identity,
    ConvShortcut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_channels: usize,
    /// Samples per segment (120 s at the recording rate).
    pub segment_len: usize,
    pub stem: ConvSpec,
    pub blocks: Vec<BlockSpec>,
    pub gru_hidden: usize,
    pub bn_eps: f32,
}

impl Default for NetworkSpec {
    /// Stem conv(k7, s2, 32) then four stages of two blocks at 32/64/128/256
    /// channels, each stage after the first opened by a stride-2
    /// conv-shortcut block.
    fn default() -> Self {
        Self::with_widths([32, 64, 128, 256], 12_000)
    }
}

impl NetworkSpec {
    /// The default layout with custom stage widths (stem width = first stage).
    pub fn with_widths(widths: [usize; 4], segment_len: usize) -> Self {
        let mut blocks = Vec::with_capacity(RESIDUAL_BLOCKS);
        for (stage, &c) in widths.iter().enumerate() {
            let opens_with_change = stage > 0;
            blocks.push(BlockSpec {
                kind: if opens_with_change { BlockKind::ConvShortcut } else { BlockKind::Identity },
                channels: c,
                kernel: 3,
                stride: if opens_with_change { 2 } else { 1 },
            });
            blocks.push(BlockSpec { kind: BlockKind::Identity, channels: c, kernel: 3, stride: 1 });
        }
        Self {
            input_channels: 3,
            segment_len,
            stem: ConvSpec { out_channels: widths[0], kernel: 7, stride: 2 },
            blocks,
            gru_hidden: GRU_HIDDEN,
            bn_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Bundle(format!("invalid network spec: {m}")));
        if self.input_channels != 3 {
            return bad(format!("expected 3 input channels, got {}", self.input_channels));
        }
        if self.blocks.len() != RESIDUAL_BLOCKS {
            return bad(format!("expected {RESIDUAL_BLOCKS} residual blocks, got {}", self.blocks.len()));
        }
        if self.gru_hidden != GRU_HIDDEN {
            return bad(format!("expected {GRU_HIDDEN} recurrent units, got {}", self.gru_hidden));
        }
        let convs = std::iter::once((self.stem.out_channels, self.stem.kernel, self.stem.stride))
            .chain(self.blocks.iter().map(|b| (b.channels, b.kernel, b.stride)));
        for (c, k, s) in convs {
            if c == 0 || k == 0 || s == 0 {
                return bad("zero channels, kernel or stride".into());
            }
        }
        let mut channels = self.stem.out_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            let reshapes = b.channels != channels || b.stride != 1;
            if reshapes && b.kind != BlockKind::ConvShortcut {
                return bad(format!("block {i} changes shape and needs a conv shortcut"));
            }
            channels = b.channels;
        }
        if self.bn_eps.is_nan() || self.bn_eps <= 0.0 {
            return bad("batch-norm epsilon must be positive".into());
        }
        if self.time_steps() == 0 {
            return bad("segment too short for the stride chain".into());
        }
        Ok(())
    }

    /// Length of the sequence the recurrent layer runs over.
    pub fn time_steps(&self) -> usize {
        let mut len = conv_out_len(self.segment_len, self.stem.kernel, self.stem.stride);
        for b in &self.blocks {
            len = conv_out_len(len, b.kernel, b.stride);
        }
        len
    }

    /// Every tensor the spec demands, in canonical order, with its shape.
    pub fn parameter_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let bn = |out: &mut Vec<(String, Vec<usize>)>, prefix: &str, c: usize| {
            for p in BN_PARAMS {
                out.push((format!("{prefix}.{p}"), vec![c]));
            }
        };
        out.push(("stem.conv.weight".into(), vec![self.stem.out_channels, self.input_channels, self.stem.kernel]));
        bn(&mut out, "stem.bn", self.stem.out_channels);
        let mut cin = self.stem.out_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            let c = b.channels;
            out.push((format!("blocks.{i}.conv1.weight"), vec![c, cin, b.kernel]));
            bn(&mut out, &format!("blocks.{i}.bn1"), c);
            out.push((format!("blocks.{i}.conv2.weight"), vec![c, c, b.kernel]));
            bn(&mut out, &format!("blocks.{i}.bn2"), c);
            if b.kind == BlockKind::ConvShortcut {
                out.push((format!("blocks.{i}.shortcut.conv.weight"), vec![c, cin, 1]));
                bn(&mut out, &format!("blocks.{i}.shortcut.bn"), c);
            }
            cin = c;
        }
        let h = self.gru_hidden;
        for gate in GRU_GATES {
            out.push((format!("gru.{gate}.w_ih"), vec![h, 1]));
            out.push((format!("gru.{gate}.w_hh"), vec![h, h]));
            out.push((format!("gru.{gate}.b_ih"), vec![h]));
            out.push((format!("gru.{gate}.b_hh"), vec![h]));
        }
        out.push(("head.weight".into(), vec![1, h]));
        out.push(("head.bias".into(), vec![1]));
        out
    }

    /// Total scalar count across all tensors, batch-norm statistics included.
    pub fn parameter_count(&self) -> usize {
        self.parameter_layout().iter().map(|(_, shape)| shape.iter().product::<usize>()).sum()
    }
}

/// Output length of a convolution with `kernel / 2` zero padding per side.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize) -> usize {
    let padded = len + 2 * (kernel / 2);
    if padded < kernel {
        0
    } else {
        (padded - kernel) / stride + 1
    }
}
