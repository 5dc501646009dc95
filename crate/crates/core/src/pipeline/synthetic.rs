use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Mention, Sentence};
use crate::{Error, Result};

/// Surface form family of a synthetic entity type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `Zorbin`
    Capitalized,
    /// `Kelmar Vostu`
    CapitalizedBigram,
    /// `KTX`
    AllCaps,
    /// `2047`
    Digits,
    /// `Rb-42`
    MixedCode,
    /// `zorbin-7`
    LowerHyphenDigit,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Capitalized,
        Family::CapitalizedBigram,
        Family::AllCaps,
        Family::Digits,
        Family::MixedCode,
        Family::LowerHyphenDigit,
    ];
}

/// Entity types with their surface families.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeSpec {
    pub types: Vec<(String, Family)>,
}

impl TypeSpec {
    /// `PER`, `LOC`, `ORG`, `NUM`.
    pub fn four() -> Self {
        Self::first(4)
    }

    /// The first `t` (at most 6) of `PER, LOC, ORG, NUM, CODE, CHEM`.
    pub fn first(t: usize) -> Self {
        let names = ["PER", "LOC", "ORG", "NUM", "CODE", "CHEM"];
        Self { types: names.iter().zip(Family::ALL).take(t).map(|(n, f)| (n.to_string(), f)).collect() }
    }

    fn validate(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::Config("type spec has no types".into()));
        }
        let names: BTreeSet<&str> = self.types.iter().map(|(n, _)| n.as_str()).collect();
        if names.len() != self.types.len() {
            return Err(Error::Config("type spec repeats a type name".into()));
        }
        if let Some((n, _)) = self.types.iter().find(|(n, _)| n.is_empty() || n.chars().any(char::is_whitespace)) {
            return Err(Error::Config(format!("invalid type name `{n}`")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub sentences: usize,
    pub spec: TypeSpec,
    /// Mean mentions per sentence.
    pub density: f64,
    /// Seed of the entity lexicon. Corpora with different lexicon seeds share
    /// filler words but not entity surface forms.
    pub lexicon_seed: u64,
    /// Distinct surface forms per type.
    pub lexicon_size: usize,
}

impl SyntheticConfig {
    pub fn new(seed: u64, sentences: usize) -> Self {
        Self { seed, sentences, spec: TypeSpec::four(), density: 1.5, lexicon_seed: 0, lexicon_size: 40 }
    }
}

const FILLER: [&str; 48] = [
    "the",
    "a",
    "of",
    "and",
    "to",
    "in",
    "was",
    "with",
    "on",
    "for",
    "from",
    "by",
    "at",
    "near",
    "after",
    "before",
    "said",
    "told",
    "reported",
    "visited",
    "met",
    "joined",
    "left",
    "sent",
    "found",
    "made",
    "saw",
    "called",
    "today",
    "yesterday",
    "later",
    "again",
    "then",
    "also",
    "only",
    "still",
    "into",
    "over",
    "under",
    "about",
    "report",
    "meeting",
    "city",
    "group",
    "team",
    "office",
    "letter",
    "plan",
];

const CONSONANTS: &[u8] = b"bcdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn syllables<R: Rng>(rng: &mut R, count: core::ops::Range<usize>) -> String {
    let count = rng.gen_range(count);
    let mut s = String::new();
    for _ in 0..count {
        s.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        s.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    if rng.gen_bool(0.5) {
        s.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
    }
    s
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn surface<R: Rng>(rng: &mut R, family: Family) -> Vec<String> {
    match family {
        Family::Capitalized => alloc::vec![capitalize(&syllables(rng, 2..4))],
        Family::CapitalizedBigram => alloc::vec![capitalize(&syllables(rng, 2..4)), capitalize(&syllables(rng, 1..3)),],
        Family::AllCaps => {
            let n = rng.gen_range(2..5);
            alloc::vec![(0..n).map(|_| (b'A' + rng.gen_range(0..26)) as char).collect()]
        }
        Family::Digits => {
            let n = rng.gen_range(2..5);
            alloc::vec![(0..n).map(|_| (b'0' + rng.gen_range(0..10)) as char).collect()]
        }
        Family::MixedCode => {
            let head = capitalize(&syllables(rng, 1..2));
            alloc::vec![format!("{head}-{}", rng.gen_range(10..100))]
        }
        Family::LowerHyphenDigit => alloc::vec![format!("{}-{}", syllables(rng, 2..3), rng.gen_range(1..10))],
    }
}

/// Deterministic corpus of lowercase filler sentences with mentions of the
/// spec's types inserted between filler runs, so that mentions never touch.
/// Mentions per sentence follow a binomial distribution with mean `density`.
pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Result<Dataset> {
    config.spec.validate()?;
    if !config.density.is_finite() || config.density < 0.0 {
        return Err(Error::Config(format!("density {} must be a non-negative number", config.density)));
    }
    if config.lexicon_size == 0 {
        return Err(Error::Config("lexicon_size must be positive".into()));
    }
    let mut lex_rng = ChaCha8Rng::seed_from_u64(config.lexicon_seed ^ 0x6c65_7869_636f_6e00);
    let lexicon: Vec<Vec<Vec<String>>> = config
        .spec
        .types
        .iter()
        .map(|(_, family)| (0..config.lexicon_size).map(|_| surface(&mut lex_rng, *family)).collect())
        .collect();

    let trials = 2 * Float::ceil(config.density).max(1.0) as usize;
    let p = config.density / trials as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut items = Vec::with_capacity(config.sentences);
    for i in 0..config.sentences {
        let k = (0..trials).filter(|_| rng.gen_bool(p)).count();
        let mut words: Vec<String> = Vec::new();
        let mut mentions = Vec::with_capacity(k);
        for _ in 0..k {
            for _ in 0..rng.gen_range(1..4) {
                words.push(FILLER[rng.gen_range(0..FILLER.len())].into());
            }
            let t = rng.gen_range(0..config.spec.types.len());
            let form = &lexicon[t][rng.gen_range(0..config.lexicon_size)];
            let start = words.len();
            words.extend(form.iter().cloned());
            mentions.push(Mention::typed(start, words.len() - 1, config.spec.types[t].0.clone()));
        }
        for _ in 0..rng.gen_range(1..4) {
            words.push(FILLER[rng.gen_range(0..FILLER.len())].into());
        }
        items.push((Sentence::new(format!("{i}"), words)?, mentions));
    }
    let mut data = Dataset::from_annotated(items);
    data.type_inventory = config.spec.types.iter().map(|(n, _)| n.clone()).collect();
    data.type_inventory.sort();
    Ok(data)
}
