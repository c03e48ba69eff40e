use rand_chacha::ChaCha8Rng;

use super::{dropout, CausalConv1d, Ctx, PointwiseConv};
use crate::autodiff::{prefixed, Graph, Param, Parameterized, Var};
use crate::error::{Error, Result};

/// Residual block: two weight-normalised causal convolutions sharing one
/// dilation, each followed by ReLU and dropout, added to the input (through
/// a 1×1 convolution when channel counts differ) and passed through a final
/// ReLU.
#[derive(Clone, Debug)]
pub struct TcnBlock {
    pub conv1: CausalConv1d,
    pub conv2: CausalConv1d,
    pub downsample: Option<PointwiseConv>,
    pub dropout: f64,
}

impl TcnBlock {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let conv1 = CausalConv1d::new(in_ch, out_ch, kernel, dilation, rng);
        let conv2 = CausalConv1d::new(out_ch, out_ch, kernel, dilation, rng);
        let downsample = (in_ch != out_ch).then(|| PointwiseConv::new(in_ch, out_ch, rng));
        TcnBlock {
            conv1,
            conv2,
            downsample,
            dropout,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels()
    }

    pub fn dilation(&self) -> usize {
        self.conv1.dilation()
    }

    /// `x: [B, in_ch, T] → [B, out_ch, T]`
    pub fn forward(&self, g: &mut Graph, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let h = self.conv1.forward(g, x)?;
        let h = g.relu(h);
        let h = dropout(g, h, self.dropout, ctx);
        let h = self.conv2.forward(g, h)?;
        let h = g.relu(h);
        let h = dropout(g, h, self.dropout, ctx);
        let residual = match &self.downsample {
            Some(ds) => ds.forward(g, x)?,
            None => x,
        };
        let sum = g.add(h, residual)?;
        Ok(g.relu(sum))
    }
}

impl Parameterized for TcnBlock {
    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = prefixed("conv1", self.conv1.named_params());
        out.extend(prefixed("conv2", self.conv2.named_params()));
        if let Some(ds) = &self.downsample {
            out.extend(prefixed("downsample", ds.named_params()));
        }
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = prefixed("conv1", self.conv1.named_params_mut());
        out.extend(prefixed("conv2", self.conv2.named_params_mut()));
        if let Some(ds) = &mut self.downsample {
            out.extend(prefixed("downsample", ds.named_params_mut()));
        }
        out
    }
}

/// A stack of residual blocks with per-block dilations.
#[derive(Clone, Debug)]
pub struct Tcn {
    pub blocks: Vec<TcnBlock>,
}

impl Tcn {
    /// `dilations.len()` blocks: `in_ch → hidden`, then `hidden → hidden`.
    pub fn new(
        in_ch: usize,
        hidden: usize,
        kernel: usize,
        dilations: &[usize],
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let blocks = dilations
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let cin = if i == 0 { in_ch } else { hidden };
                TcnBlock::new(cin, hidden, kernel, d, dropout, rng)
            })
            .collect();
        Tcn { blocks }
    }

    /// Exponential dilations `1, 2, 4, …` for `depth` blocks.
    pub fn default_dilations(depth: usize) -> Vec<usize> {
        (0..depth).map(|i| 1usize << i).collect()
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map_or(0, TcnBlock::out_channels)
    }

    /// Number of input steps (including the current one) that can influence
    /// one output step.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .blocks
            .iter()
            .map(|b| 2 * (b.conv1.kernel() - 1) * b.dilation())
            .sum::<usize>()
    }

    pub fn forward(&self, g: &mut Graph, x: Var, ctx: &mut Ctx) -> Result<Var> {
        if self.blocks.is_empty() {
            return Err(Error::contract("TCN with no blocks"));
        }
        let mut h = x;
        for b in &self.blocks {
            h = b.forward(g, h, ctx)?;
        }
        Ok(h)
    }
}

impl Parameterized for Tcn {
    fn named_params(&self) -> Vec<(String, &Param)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(i, b)| prefixed(&format!("blocks.{i}"), b.named_params()))
            .collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        self.blocks
            .iter_mut()
            .enumerate()
            .flat_map(|(i, b)| prefixed(&format!("blocks.{i}"), b.named_params_mut()))
            .collect()
    }
}
