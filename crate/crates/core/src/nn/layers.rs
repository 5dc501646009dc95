//! Parameterized layers. Each layer registers its tensors in a
//! [`ParamStore`] under a name prefix and records its forward pass on a
//! [`Graph`].

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::{Graph, Init, ParamId, ParamStore, Scalar, Var};
use crate::Result;

/// `y = x W + b`
#[derive(Debug, Clone)]
pub struct Affine {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Affine {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, input: usize, output: usize) -> Result<Self> {
        let w =
            store.add(&format!("{name}.weight"), &[input, output], Init::Glorot { fan_in: input, fan_out: output })?;
        let b = store.add(&format!("{name}.bias"), &[output], Init::Zeros)?;
        Ok(Self { w, b, input, output })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }

    pub fn num_parameters(&self) -> usize {
        self.input * self.output + self.output
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, vocab: usize, dim: usize) -> Result<Self> {
        let table = store.add(name, &[vocab, dim], Init::Uniform(0.1))?;
        Ok(Self { table, vocab, dim })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, ids: &[u32]) -> Result<Var> {
        let t = g.param(self.table);
        g.gather(t, ids)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Result<Self> {
        let gain = store.add(&format!("{name}.gain"), &[dim], Init::Ones)?;
        let bias = store.add(&format!("{name}.bias"), &[dim], Init::Zeros)?;
        Ok(Self { gain, bias })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let (gain, bias) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm(x, gain, bias, T::of(Self::EPS))
    }
}

/// Symbol embedding followed by parallel same-padded 1-D convolutions, each
/// max-pooled over positions, concatenated: `[len] ids -> [1, kernels * filters]`.
#[derive(Debug, Clone)]
pub struct ConvBank {
    pub embedding: Embedding,
    pub convs: Vec<(usize, ParamId, ParamId)>,
    pub filters: usize,
}

impl ConvBank {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        symbols: usize,
        embedding_dim: usize,
        kernels: &[usize],
        filters: usize,
    ) -> Result<Self> {
        let embedding = Embedding::new(store, &format!("{name}.embedding"), symbols, embedding_dim)?;
        let mut convs = Vec::with_capacity(kernels.len());
        for &k in kernels {
            let w = store.add(
                &format!("{name}.conv{k}.weight"),
                &[k, embedding_dim, filters],
                Init::Glorot { fan_in: k * embedding_dim, fan_out: filters },
            )?;
            let b = store.add(&format!("{name}.conv{k}.bias"), &[filters], Init::Zeros)?;
            convs.push((k, w, b));
        }
        Ok(Self { embedding, convs, filters })
    }

    pub fn output_dim(&self) -> usize {
        self.convs.len() * self.filters
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, ids: &[u32]) -> Result<Var> {
        let x = self.embedding.forward(g, ids)?;
        let mut pooled = Vec::with_capacity(self.convs.len());
        for &(k, w, b) in &self.convs {
            let (w, b) = (g.param(w), g.param(b));
            let y = g.conv1d_same(x, w, b, k)?;
            pooled.push(g.max_over_rows(y)?);
        }
        g.concat_cols(&pooled)
    }
}

/// Single-direction LSTM with gate order input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let w_ih = store.add(
            &format!("{name}.w_ih"),
            &[input, 4 * hidden],
            Init::Glorot { fan_in: input, fan_out: 4 * hidden },
        )?;
        let w_hh = store.add(
            &format!("{name}.w_hh"),
            &[hidden, 4 * hidden],
            Init::Glorot { fan_in: hidden, fan_out: 4 * hidden },
        )?;
        let b = store.add(&format!("{name}.bias"), &[4 * hidden], Init::Zeros)?;
        Ok(Self { w_ih, w_hh, b, input, hidden })
    }

    /// Runs over the rows of `x` (`[len, input]`), right to left when
    /// `reverse`. Output row `t` is the hidden state after reading row `t`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, reverse: bool) -> Result<Var> {
        let len = g.shape(x).0;
        let h = self.hidden;
        let (w_ih, w_hh, b) = (g.param(self.w_ih), g.param(self.w_hh), g.param(self.b));
        let xw = g.matmul(x, w_ih)?;
        let xw = g.add_row(xw, b)?;
        let mut outputs: Vec<Option<Var>> = alloc::vec![None; len];
        let mut state: Option<(Var, Var)> = None;
        for step in 0..len {
            let t = if reverse { len - 1 - step } else { step };
            let mut gates = g.slice_rows(xw, t, 1)?;
            if let Some((h_prev, _)) = state {
                let hw = g.matmul(h_prev, w_hh)?;
                gates = g.add(gates, hw)?;
            }
            let i = g.slice_cols(gates, 0, h)?;
            let i = g.sigmoid(i);
            let f = g.slice_cols(gates, h, h)?;
            let f = g.sigmoid(f);
            let cand = g.slice_cols(gates, 2 * h, h)?;
            let cand = g.tanh(cand);
            let o = g.slice_cols(gates, 3 * h, h)?;
            let o = g.sigmoid(o);
            let ic = g.mul(i, cand)?;
            let c = match state {
                Some((_, c_prev)) => {
                    let fc = g.mul(f, c_prev)?;
                    g.add(fc, ic)?
                }
                None => ic,
            };
            let tc = g.tanh(c);
            let h_new = g.mul(o, tc)?;
            outputs[t] = Some(h_new);
            state = Some((h_new, c));
        }
        let rows: Vec<Var> = outputs.into_iter().map(|v| v.expect("every step ran")).collect();
        g.concat_rows(&rows)
    }

    pub fn num_parameters(&self) -> usize {
        (self.input + self.hidden + 1) * 4 * self.hidden
    }
}

/// Forward and backward LSTMs over the same rows, outputs concatenated
/// `[forward | backward]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            forward: Lstm::new(store, &format!("{name}.fwd"), input, hidden)?,
            backward: Lstm::new(store, &format!("{name}.bwd"), input, hidden)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn run<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let f = self.forward.forward(g, x, false)?;
        let b = self.backward.forward(g, x, true)?;
        g.concat_cols(&[f, b])
    }
}

/// Inverted dropout; identity when `rate` is zero.
pub fn dropout<T: Scalar, R: Rng>(g: &mut Graph<'_, T>, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
    if rate <= 0.0 {
        return Ok(x);
    }
    let (r, c) = g.shape(x);
    let keep = T::of(1.0 / (1.0 - rate));
    let mask = (0..r * c).map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep }).collect();
    let m = g.input(r, c, mask)?;
    g.mul(x, m)
}
