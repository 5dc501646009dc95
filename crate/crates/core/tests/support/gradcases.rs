//! Finite-difference gradient cases for every layer, activation and loss.
//! Each case returns the worst relative error over 50 random instances in
//! `f64` and in `f32`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitner_core::features::{CharFeature, CharFeatureConfig, PatternFeature, PatternFeatureConfig, SymbolTable};
use splitner_core::models::{Encoder, EncoderConfig};
use splitner_core::nn::layers::{dropout, Affine, BiLstm, ConvBank, Embedding, LayerNorm, Lstm};
use splitner_core::nn::{
    grad_check, grad_check_f32, random_projection_loss, GradFn, Graph, Init, ParamId, ParamStore, Scalar, Var,
};
use splitner_core::Result;

const INSTANCES: u64 = 50;
const EPS: f64 = 1e-5;

fn project<T: Scalar>(g: &mut Graph<'_, T>, y: Var, seed: u64) -> Result<Var> {
    random_projection_loss(g, y, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn randomize(store: &mut ParamStore<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for id in store.ids().collect::<Vec<_>>() {
        for v in &mut store.get_mut(id).data {
            *v = rng.gen_range(-0.8..0.8);
        }
    }
}

/// Worst relative error in `f64` and in `f32`.
pub type Worst = (f64, f64);

fn run<C: GradFn>(build: impl Fn(&mut ParamStore<f64>, u64) -> C) -> Worst {
    let (mut worst64, mut worst32) = (0.0f64, 0.0f64);
    for i in 0..INSTANCES {
        let mut store = ParamStore::new(i);
        let case = build(&mut store, i);
        randomize(&mut store, i);
        worst64 = worst64.max(grad_check(&mut store, &case, EPS).unwrap());
        worst32 = worst32.max(grad_check_f32(&mut store, &case, EPS).unwrap());
    }
    (worst64, worst32)
}

fn input(store: &mut ParamStore<f64>, rows: usize, cols: usize) -> ParamId {
    store.add("x", &[rows, cols], Init::Zeros).unwrap()
}

struct AffineCase {
    x: ParamId,
    layer: Affine,
    seed: u64,
}

impl GradFn for AffineCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let x = g.param(self.x);
        let y = self.layer.forward(g, x)?;
        project(g, y, self.seed)
    }
}

pub fn affine() -> Worst {
    run(|s, seed| AffineCase { x: input(s, 3, 4), layer: Affine::new(s, "a", 4, 5).unwrap(), seed })
}

#[derive(Clone, Copy)]
enum Act {
    Relu,
    Sigmoid,
    Tanh,
    Gelu,
    Softmax,
    MaskedSoftmax,
}

struct ActCase {
    x: ParamId,
    act: Act,
    seed: u64,
}

impl GradFn for ActCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let x = g.param(self.x);
        let y = match self.act {
            Act::Relu => g.relu(x),
            Act::Sigmoid => g.sigmoid(x),
            Act::Tanh => g.tanh(x),
            Act::Gelu => g.gelu(x),
            Act::Softmax => g.softmax(x),
            Act::MaskedSoftmax => g.masked_softmax(x, Some(&[true, false, true, true, false]))?,
        };
        project(g, y, self.seed)
    }
}

/// All six activations; the result is the worst of them.
pub fn activations() -> Worst {
    [Act::Relu, Act::Sigmoid, Act::Tanh, Act::Gelu, Act::Softmax, Act::MaskedSoftmax]
        .into_iter()
        .map(|act| run(|s, seed| ActCase { x: input(s, 3, 5), act, seed }))
        .fold((0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
}

struct EmbeddingCase {
    layer: Embedding,
    ids: Vec<u32>,
    seed: u64,
}

impl GradFn for EmbeddingCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let y = self.layer.forward(g, &self.ids)?;
        project(g, y, self.seed)
    }
}

fn random_ids(seed: u64, n: usize, vocab: u32) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0..vocab)).collect()
}

pub fn embedding() -> Worst {
    run(|s, seed| EmbeddingCase { layer: Embedding::new(s, "e", 7, 3).unwrap(), ids: random_ids(seed, 5, 7), seed })
}

struct LayerNormCase {
    x: ParamId,
    layer: LayerNorm,
    seed: u64,
}

impl GradFn for LayerNormCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let x = g.param(self.x);
        let y = self.layer.forward(g, x)?;
        project(g, y, self.seed)
    }
}

pub fn layer_norm() -> Worst {
    run(|s, seed| LayerNormCase { x: input(s, 3, 6), layer: LayerNorm::new(s, "ln", 6).unwrap(), seed })
}

struct ConvCase {
    bank: ConvBank,
    ids: Vec<u32>,
    seed: u64,
}

impl GradFn for ConvCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let y = self.bank.forward(g, &self.ids)?;
        project(g, y, self.seed)
    }
}

pub fn conv_bank_with_max_pooling() -> Worst {
    run(|s, seed| ConvCase {
        bank: ConvBank::new(s, "c", 6, 3, &[1, 2, 3], 2).unwrap(),
        ids: random_ids(seed, 1 + seed as usize % 5, 6),
        seed,
    })
}

struct LstmCase {
    x: ParamId,
    fwd: Lstm,
    bi: Option<BiLstm>,
    seed: u64,
}

impl GradFn for LstmCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let x = g.param(self.x);
        let y = match &self.bi {
            Some(bi) => bi.run(g, x)?,
            None => self.fwd.forward(g, x, self.seed % 2 == 1)?,
        };
        project(g, y, self.seed)
    }
}

pub fn lstm() -> Worst {
    run(|s, seed| LstmCase { x: input(s, 4, 3), fwd: Lstm::new(s, "l", 3, 2).unwrap(), bi: None, seed })
}

pub fn bilstm() -> Worst {
    run(|s, seed| {
        let x = input(s, 4, 3);
        let fwd = Lstm::new(s, "unused", 1, 1).unwrap();
        LstmCase { x, fwd, bi: Some(BiLstm::new(s, "bl", 3, 2).unwrap()), seed }
    })
}

struct ShapeOpsCase {
    a: ParamId,
    b: ParamId,
    seed: u64,
}

impl GradFn for ShapeOpsCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let (a, b) = (g.param(self.a), g.param(self.b));
        let nt = g.matmul_nt(a, b)?;
        let left = g.slice_cols(a, 1, 2)?;
        let wide = g.concat_cols(&[nt, left])?;
        let top = g.slice_rows(b, 1, 2)?;
        let tall = g.concat_rows(&[a, top])?;
        let ab = g.matmul(wide, tall)?;
        let prod = g.mul(ab, ab)?;
        let scaled = g.scale(prod, T::of(0.7));
        let m = g.mean(scaled);
        let p = project(g, ab, self.seed)?;
        g.add(p, m)
    }
}

pub fn matmul_slice_concat_and_reductions() -> Worst {
    run(|s, seed| ShapeOpsCase {
        a: s.add("a", &[3, 4], Init::Zeros).unwrap(),
        b: s.add("b", &[3, 4], Init::Zeros).unwrap(),
        seed,
    })
}

struct DropoutCase {
    x: ParamId,
    seed: u64,
}

impl GradFn for DropoutCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let x = g.param(self.x);
        let y = dropout(g, x, 0.3, &mut ChaCha8Rng::seed_from_u64(self.seed))?;
        project(g, y, self.seed)
    }
}

pub fn dropout_with_fixed_mask() -> Worst {
    run(|s, seed| DropoutCase { x: input(s, 4, 4), seed })
}

struct EncoderCase {
    encoder: Encoder,
    ids: Vec<u32>,
    segments: Vec<u32>,
    mask: Option<Vec<bool>>,
    seed: u64,
}

impl GradFn for EncoderCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let y = self.encoder.forward(g, &self.ids, &self.segments, self.mask.as_deref(), None)?;
        project(g, y, self.seed)
    }
}

pub fn transformer_encoder() -> Worst {
    let cfg = EncoderConfig { layers: 1, heads: 2, hidden_dim: 4, ff_dim: 6, max_seq_len: 8, dropout: 0.0 };
    run(|s, seed| {
        let n = 2 + seed as usize % 4;
        EncoderCase {
            encoder: Encoder::new(s, "enc", cfg.clone(), 6).unwrap(),
            ids: random_ids(seed, n, 6),
            segments: (0..n as u32).map(|i| u32::from(i >= 1)).collect(),
            mask: (seed % 2 == 0).then(|| (0..n).map(|i| i + 1 < n).collect()),
            seed,
        }
    })
}

struct CharCase {
    feature: CharFeature,
    words: Vec<String>,
    seed: u64,
}

impl GradFn for CharCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let y = self.feature.forward(g, &self.words)?;
        project(g, y, self.seed)
    }
}

struct PatternCase {
    feature: PatternFeature,
    words: Vec<String>,
    seed: u64,
}

impl GradFn for PatternCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let y = self.feature.forward(g, &self.words)?;
        project(g, y, self.seed)
    }
}

fn random_words(seed: u64) -> Vec<String> {
    let pool = ["Emily", "lives", "in", "IBM", "x7-b", "2024", "United", "##ly"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..1 + seed as usize % 3).map(|_| pool[rng.gen_range(0..pool.len())].to_string()).collect()
}

pub fn character_feature() -> Worst {
    let cfg = CharFeatureConfig { kernels: vec![1, 2], filters: 2, embedding_dim: 3, output_dim: 3 };
    run(|s, seed| CharCase {
        feature: CharFeature::new(s, "char", cfg.clone(), SymbolTable::new("EmilyvsnIBMx7-b2024Ut".chars())).unwrap(),
        words: random_words(seed),
        seed,
    })
}

pub fn pattern_feature() -> Worst {
    let cfg = PatternFeatureConfig { kernels: vec![1, 2], filters: 2, embedding_dim: 3, lstm_hidden: 2 };
    run(|s, seed| PatternCase {
        feature: PatternFeature::new(s, "pattern", cfg.clone(), SymbolTable::new("ULDuldCS-".chars())).unwrap(),
        words: random_words(seed),
        seed,
    })
}

struct CrossEntropyCase {
    logits: ParamId,
    targets: Vec<u32>,
    mask: Vec<bool>,
}

impl GradFn for CrossEntropyCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let z = g.param(self.logits);
        g.cross_entropy(z, &self.targets, &self.mask)
    }
}

pub fn cross_entropy_loss() -> Worst {
    run(|s, seed| {
        let mut mask: Vec<bool> = (0..4).map(|i| (seed >> i) & 1 == 1).collect();
        mask[seed as usize % 4] = true;
        CrossEntropyCase { logits: input(s, 4, 3), targets: random_ids(seed, 4, 3), mask }
    })
}

struct DiceCase {
    p: ParamId,
    y: Vec<f64>,
    through_softmax: bool,
    gamma: f64,
}

impl GradFn for DiceCase {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var> {
        let mut p = g.param(self.p);
        if self.through_softmax {
            p = g.softmax(p);
        }
        let y: Vec<T> = self.y.iter().map(|&v| T::of(v)).collect();
        g.dice(p, &y, T::of(self.gamma))
    }
}

pub fn dice_loss() -> Worst {
    run(|s, seed| {
        let (rows, classes) = (2, 4);
        let targets = random_ids(seed, rows, classes as u32);
        let mut y = vec![0.0; rows * classes];
        for (r, &t) in targets.iter().enumerate() {
            y[r * classes + t as usize] = 1.0;
        }
        DiceCase { p: input(s, rows, classes), y, through_softmax: seed % 2 == 0, gamma: 0.5 + (seed % 3) as f64 * 0.5 }
    })
}

pub const CASES: [(&str, fn() -> Worst); 14] = [
    ("affine", affine),
    ("activations", activations),
    ("embedding", embedding),
    ("layer_norm", layer_norm),
    ("conv_bank", conv_bank_with_max_pooling),
    ("lstm", lstm),
    ("bilstm", bilstm),
    ("shape_ops", matmul_slice_concat_and_reductions),
    ("dropout", dropout_with_fixed_mask),
    ("encoder", transformer_encoder),
    ("char_feature", character_feature),
    ("pattern_feature", pattern_feature),
    ("cross_entropy", cross_entropy_loss),
    ("dice", dice_loss),
];

/// Dice loss at `gamma = 1` of one probability row against a target row.
pub fn dice_value(p: &[f64], y: &[f64]) -> f64 {
    let store = ParamStore::<f64>::new(0);
    let mut g = Graph::new(&store);
    let p = g.input(1, p.len(), p.to_vec()).unwrap();
    let d = g.dice(p, y, 1.0).unwrap();
    g.scalar(d)
}
