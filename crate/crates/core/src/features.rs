//! Orthographic word shapes and the character and pattern feature
//! extractors attached to the span detector.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::nn::layers::{Affine, BiLstm, ConvBank};
use crate::nn::{Graph, ParamStore, Scalar, Var};
use crate::subword::{Vocab, CLS, CONTINUATION, SEP};
use crate::{Error, Result};

fn strip_continuation(token: &str) -> &str {
    match token.strip_prefix(CONTINUATION) {
        Some(rest) if !rest.is_empty() => rest,
        _ => token,
    }
}

/// Word shape of a (sub)token. Whole-token classes collapse to a single
/// letter; mixed tokens map per character and keep other characters.
pub fn pattern_of(token: &str) -> String {
    if token == CLS {
        return "C".into();
    }
    if token == SEP {
        return "S".into();
    }
    let t = strip_continuation(token);
    if t.chars().all(char::is_uppercase) {
        return "U".into();
    }
    if t.chars().all(char::is_lowercase) {
        return "L".into();
    }
    if t.chars().all(|c| c.is_ascii_digit()) {
        return "D".into();
    }
    t.chars()
        .map(|c| match c {
            c if c.is_uppercase() => 'u',
            c if c.is_lowercase() => 'l',
            c if c.is_ascii_digit() => 'd',
            c => c,
        })
        .collect()
}

pub fn pattern_sequence<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().map(|t| pattern_of(t.as_ref())).collect()
}

/// Character inventory for an embedding table. Id 0 is reserved for
/// characters outside the inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<char>,
    lookup: BTreeMap<char, u32>,
}

impl SymbolTable {
    pub const UNKNOWN: u32 = 0;

    pub fn new(chars: impl IntoIterator<Item = char>) -> Self {
        let mut symbols: Vec<char> = chars.into_iter().collect();
        symbols.sort_unstable();
        symbols.dedup();
        let lookup = symbols.iter().enumerate().map(|(i, &c)| (c, i as u32 + 1)).collect();
        Self { symbols, lookup }
    }

    /// Every character appearing in the vocabulary entries.
    pub fn characters(vocab: &Vocab) -> Self {
        Self::new(vocab.entries().iter().flat_map(|e| e.chars()))
    }

    /// Shape letters plus every character of the vocabulary that a shape can
    /// retain verbatim.
    pub fn patterns(vocab: &Vocab) -> Self {
        let retained =
            vocab.entries().iter().flat_map(|e| e.chars()).filter(|c| !c.is_alphabetic() && !c.is_ascii_digit());
        Self::new("ULDuldCS".chars().chain(retained))
    }

    /// Table size including the unknown row.
    pub fn len(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> u32 {
        self.lookup.get(&c).copied().unwrap_or(Self::UNKNOWN)
    }

    pub fn encode(&self, s: &str) -> Vec<u32> {
        s.chars().map(|c| self.id(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharFeatureConfig {
    pub kernels: Vec<usize>,
    pub filters: usize,
    pub embedding_dim: usize,
    pub output_dim: usize,
}

impl CharFeatureConfig {
    pub fn full() -> Self {
        Self { kernels: (1..=5).collect(), filters: 16, embedding_dim: 50, output_dim: 768 }
    }

    /// Full-size setup with the output width tied to a smaller encoder.
    pub fn scaled(hidden: usize) -> Self {
        Self { output_dim: hidden, ..Self::full() }
    }

    pub fn concat_dim(&self) -> usize {
        self.kernels.len() * self.filters
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternFeatureConfig {
    pub kernels: Vec<usize>,
    pub filters: usize,
    pub embedding_dim: usize,
    /// Per direction; the feature is twice as wide.
    pub lstm_hidden: usize,
}

impl PatternFeatureConfig {
    pub fn full() -> Self {
        Self { kernels: (1..=3).collect(), filters: 16, embedding_dim: 50, lstm_hidden: 256 }
    }

    /// Output width `hidden` (rounded down to even) for a smaller encoder.
    pub fn scaled(hidden: usize) -> Self {
        Self { lstm_hidden: (hidden / 2).max(1), ..Self::full() }
    }

    pub fn concat_dim(&self) -> usize {
        self.kernels.len() * self.filters
    }

    pub fn output_dim(&self) -> usize {
        2 * self.lstm_hidden
    }
}

/// Per-token character CNN: embed, convolve, max-pool, concat, affine, ReLU.
#[derive(Debug, Clone)]
pub struct CharFeature {
    pub config: CharFeatureConfig,
    pub symbols: SymbolTable,
    bank: ConvBank,
    proj: Affine,
}

impl CharFeature {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        config: CharFeatureConfig,
        symbols: SymbolTable,
    ) -> Result<Self> {
        let bank = ConvBank::new(store, name, symbols.len(), config.embedding_dim, &config.kernels, config.filters)?;
        let proj = Affine::new(store, &alloc::format!("{name}.proj"), config.concat_dim(), config.output_dim)?;
        Ok(Self { config, symbols, bank, proj })
    }

    /// `[1, output_dim]` for one token.
    pub fn forward_token<T: Scalar>(&self, g: &mut Graph<'_, T>, token: &str) -> Result<Var> {
        if token.is_empty() {
            return Err(Error::InvalidToken(token.to_string()));
        }
        let ids = self.symbols.encode(strip_continuation(token));
        let pooled = self.bank.forward(g, &ids)?;
        let y = self.proj.forward(g, pooled)?;
        Ok(g.relu(y))
    }

    /// `[tokens, output_dim]`, each row computed independently.
    pub fn forward<T: Scalar, S: AsRef<str>>(&self, g: &mut Graph<'_, T>, tokens: &[S]) -> Result<Var> {
        let rows = tokens.iter().map(|t| self.forward_token(g, t.as_ref())).collect::<Result<Vec<_>>>()?;
        g.concat_rows(&rows)
    }
}

/// Per-token shape CNN followed by a BiLSTM across the token sequence.
#[derive(Debug, Clone)]
pub struct PatternFeature {
    pub config: PatternFeatureConfig,
    pub symbols: SymbolTable,
    bank: ConvBank,
    lstm: BiLstm,
}

impl PatternFeature {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        config: PatternFeatureConfig,
        symbols: SymbolTable,
    ) -> Result<Self> {
        let bank = ConvBank::new(store, name, symbols.len(), config.embedding_dim, &config.kernels, config.filters)?;
        let lstm = BiLstm::new(store, &alloc::format!("{name}.lstm"), config.concat_dim(), config.lstm_hidden)?;
        Ok(Self { config, symbols, bank, lstm })
    }

    /// `[tokens, 2 * lstm_hidden]` from raw (sub)tokens.
    pub fn forward<T: Scalar, S: AsRef<str>>(&self, g: &mut Graph<'_, T>, tokens: &[S]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::Shape { op: "pattern feature", detail: "empty token sequence".into() });
        }
        let rows = tokens
            .iter()
            .map(|t| {
                let ids = self.symbols.encode(&pattern_of(t.as_ref()));
                self.bank.forward(g, &ids)
            })
            .collect::<Result<Vec<_>>>()?;
        let x = g.concat_rows(&rows)?;
        self.lstm.run(g, x)
    }
}
