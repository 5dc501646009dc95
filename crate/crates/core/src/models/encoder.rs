use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand_chacha::ChaCha8Rng;

use crate::nn::layers::{dropout, Affine, Embedding, LayerNorm};
use crate::nn::{Graph, ParamStore, Scalar, Var};
use crate::{Error, Result};

/// Transformer encoder hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden_dim: usize,
    pub ff_dim: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    /// Small from-scratch encoder used in place of a pretrained backbone.
    pub fn desk() -> Self {
        Self { layers: 2, heads: 4, hidden_dim: 128, ff_dim: 512, max_seq_len: 256, dropout: 0.0 }
    }

    /// BERT-base geometry.
    pub fn base() -> Self {
        Self { layers: 12, heads: 12, hidden_dim: 768, ff_dim: 3072, max_seq_len: 512, dropout: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.hidden_dim == 0 || self.ff_dim == 0 || self.max_seq_len < 3 {
            return Err(Error::Config(format!("encoder dimensions must be positive: {self:?}")));
        }
        if self.hidden_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Block {
    q: Affine,
    k: Affine,
    v: Affine,
    o: Affine,
    ln1: LayerNorm,
    ff1: Affine,
    ff2: Affine,
    ln2: LayerNorm,
}

/// Post-LN transformer encoder with learned position and segment embeddings.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    tokens: Embedding,
    positions: Embedding,
    segments: Embedding,
    embed_ln: LayerNorm,
    blocks: Vec<Block>,
}

impl Encoder {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        config: EncoderConfig,
        vocab_size: usize,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let tokens = Embedding::new(store, &format!("{name}.token_embedding"), vocab_size, h)?;
        let positions = Embedding::new(store, &format!("{name}.position_embedding"), config.max_seq_len, h)?;
        let segments = Embedding::new(store, &format!("{name}.segment_embedding"), 2, h)?;
        let embed_ln = LayerNorm::new(store, &format!("{name}.embed_ln"), h)?;
        let mut blocks = Vec::with_capacity(config.layers);
        for i in 0..config.layers {
            let p = format!("{name}.layer{i}");
            blocks.push(Block {
                q: Affine::new(store, &format!("{p}.attn.q"), h, h)?,
                k: Affine::new(store, &format!("{p}.attn.k"), h, h)?,
                v: Affine::new(store, &format!("{p}.attn.v"), h, h)?,
                o: Affine::new(store, &format!("{p}.attn.o"), h, h)?,
                ln1: LayerNorm::new(store, &format!("{p}.ln1"), h)?,
                ff1: Affine::new(store, &format!("{p}.ff1"), h, config.ff_dim)?,
                ff2: Affine::new(store, &format!("{p}.ff2"), config.ff_dim, h)?,
                ln2: LayerNorm::new(store, &format!("{p}.ln2"), h)?,
            });
        }
        Ok(Self { config, tokens, positions, segments, embed_ln, blocks })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.vocab
    }

    /// Contextual vectors `[len, hidden]`. Keys with `key_mask[j] == false`
    /// receive zero attention. Dropout is applied only when `rng` is given.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        ids: &[u32],
        segments: &[u32],
        key_mask: Option<&[bool]>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let n = ids.len();
        if segments.len() != n {
            return Err(Error::LengthMismatch { what: "segment ids", expected: n, got: segments.len() });
        }
        if n == 0 || n > self.config.max_seq_len {
            return Err(Error::Shape {
                op: "encoder",
                detail: format!("sequence length {n} outside 1..={}", self.config.max_seq_len),
            });
        }
        let rate = if rng.is_some() { self.config.dropout } else { 0.0 };
        let positions: Vec<u32> = (0..n as u32).collect();
        let tok = self.tokens.forward(g, ids)?;
        let pos = self.positions.forward(g, &positions)?;
        let seg = self.segments.forward(g, segments)?;
        let x = g.add(tok, pos)?;
        let x = g.add(x, seg)?;
        let mut x = self.embed_ln.forward(g, x)?;
        if let Some(r) = rng.as_deref_mut() {
            x = dropout(g, x, rate, r)?;
        }
        let heads = self.config.heads;
        let d = self.config.hidden_dim / heads;
        let scale = T::of(1.0 / Float::sqrt(d as f64));
        for b in &self.blocks {
            let q = b.q.forward(g, x)?;
            let k = b.k.forward(g, x)?;
            let v = b.v.forward(g, x)?;
            let mut ctx = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = g.slice_cols(q, h * d, d)?;
                let kh = g.slice_cols(k, h * d, d)?;
                let vh = g.slice_cols(v, h * d, d)?;
                let scores = g.matmul_nt(qh, kh)?;
                let scores = g.scale(scores, scale);
                let attn = g.masked_softmax(scores, key_mask)?;
                ctx.push(g.matmul(attn, vh)?);
            }
            let ctx = g.concat_cols(&ctx)?;
            let mut a = b.o.forward(g, ctx)?;
            if let Some(r) = rng.as_deref_mut() {
                a = dropout(g, a, rate, r)?;
            }
            let res = g.add(x, a)?;
            x = b.ln1.forward(g, res)?;
            let f = b.ff1.forward(g, x)?;
            let f = g.gelu(f);
            let mut f = b.ff2.forward(g, f)?;
            if let Some(r) = rng.as_deref_mut() {
                f = dropout(g, f, rate, r)?;
            }
            let res = g.add(x, f)?;
            x = b.ln2.forward(g, res)?;
        }
        Ok(x)
    }
}
