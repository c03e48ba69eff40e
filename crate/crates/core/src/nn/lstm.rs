use rand_chacha::ChaCha8Rng;

use super::init_uniform;
use crate::autodiff::{prefixed, Graph, Param, Parameterized, Tensor, Var};
use crate::error::{Error, Result};

/// One LSTM layer with gate order (input, forget, cell, output) and separate
/// input-side and hidden-side bias vectors.
#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub w_ih: Param,
    pub w_hh: Param,
    pub b_ih: Param,
    pub b_hh: Param,
}

/// Final recurrent state of a layer.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub hidden: Var,
    pub cell: Var,
}

impl LstmLayer {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        LstmLayer {
            w_ih: Param::new(init_uniform(rng, &[4 * hidden, input], input)),
            w_hh: Param::new(init_uniform(rng, &[4 * hidden, hidden], hidden)),
            b_ih: Param::new(Tensor::zeros(&[4 * hidden])),
            b_hh: Param::new(Tensor::zeros(&[4 * hidden])),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.value.shape()[1]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.value.shape()[1]
    }

    /// `x: [B, T, in] → [B, T, h]`, starting from zero state.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        Ok(self.forward_from(g, x, None)?.0)
    }

    /// Runs the recurrence from an optional initial state; returns all
    /// hidden states and the final state.
    pub fn forward_from(&self, g: &mut Graph, x: Var, init: Option<LstmState>) -> Result<(Var, LstmState)> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[2] != self.input_size() {
            return Err(Error::shape("lstm", &s, self.w_ih.value.shape()));
        }
        let (b, t_len, input) = (s[0], s[1], s[2]);
        let h = self.hidden_size();

        let flat = g.reshape(x, &[b * t_len, input])?;
        let w_ih = g.param(&self.w_ih);
        let w_ih_t = g.transpose(w_ih, 0, 1)?;
        let pre = g.matmul(flat, w_ih_t)?;
        let b_ih = g.param(&self.b_ih);
        let b_hh = g.param(&self.b_hh);
        let pre = g.add_bias(pre, b_ih)?;
        let pre = g.add_bias(pre, b_hh)?;
        let pre = g.reshape(pre, &[b, t_len, 4 * h])?;
        let w_hh = g.param(&self.w_hh);
        let w_hh_t = g.transpose(w_hh, 0, 1)?;

        let mut state = init;
        let mut outputs = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let xt = g.slice(pre, 1, t, 1)?;
            let mut gates = g.reshape(xt, &[b, 4 * h])?;
            if let Some(st) = state {
                let rec = g.matmul(st.hidden, w_hh_t)?;
                gates = g.add(gates, rec)?;
            }
            let i = g.slice(gates, 1, 0, h)?;
            let i = g.sigmoid(i);
            let f = g.slice(gates, 1, h, h)?;
            let f = g.sigmoid(f);
            let cand = g.slice(gates, 1, 2 * h, h)?;
            let cand = g.tanh(cand);
            let o = g.slice(gates, 1, 3 * h, h)?;
            let o = g.sigmoid(o);
            let fresh = g.mul(i, cand)?;
            let cell = match state {
                Some(st) => {
                    let kept = g.mul(f, st.cell)?;
                    g.add(kept, fresh)?
                }
                None => fresh,
            };
            let tc = g.tanh(cell);
            let hidden = g.mul(o, tc)?;
            outputs.push(g.reshape(hidden, &[b, 1, h])?);
            state = Some(LstmState { hidden, cell });
        }
        let out = g.concat(&outputs, 1)?;
        Ok((out, state.expect("sequence length >= 1")))
    }
}

impl Parameterized for LstmLayer {
    fn named_params(&self) -> Vec<(String, &Param)> {
        vec![
            ("w_ih".into(), &self.w_ih),
            ("w_hh".into(), &self.w_hh),
            ("b_ih".into(), &self.b_ih),
            ("b_hh".into(), &self.b_hh),
        ]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![
            ("w_ih".into(), &mut self.w_ih),
            ("w_hh".into(), &mut self.w_hh),
            ("b_ih".into(), &mut self.b_ih),
            ("b_hh".into(), &mut self.b_hh),
        ]
    }
}

/// Stacked LSTM: `input → hidden`, then `hidden → hidden`.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, depth: usize, rng: &mut ChaCha8Rng) -> Self {
        let layers = (0..depth)
            .map(|i| LstmLayer::new(if i == 0 { input } else { hidden }, hidden, rng))
            .collect();
        Lstm { layers }
    }

    pub fn hidden_size(&self) -> usize {
        self.layers.last().map_or(0, LstmLayer::hidden_size)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        if self.layers.is_empty() {
            return Err(Error::contract("LSTM with no layers"));
        }
        let mut h = x;
        for l in &self.layers {
            h = l.forward(g, h)?;
        }
        Ok(h)
    }
}

impl Parameterized for Lstm {
    fn named_params(&self) -> Vec<(String, &Param)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layers.{i}"), l.named_params()))
            .collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layers.{i}"), l.named_params_mut()))
            .collect()
    }
}
