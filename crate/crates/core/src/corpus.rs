//! Sentences, mentions and BIOE tag sequences.
//!
//! Indices are 0-based and spans are inclusive on both ends. Single-token
//! spans are encoded as a lone `B` (BIOE has no unit symbol). The decoder is
//! total: it accepts any tag string, including illegal model output, and
//! repairs it left to right:
//!
//! * `I`/`E` with no open span opens one;
//! * a type switch inside a span closes it and opens a new one;
//! * `O` or the end of the sequence closes an open span at the previous token;
//! * `E` closes the span at its own position.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new<I, S>(id: impl Into<String>, words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let id = id.into();
        let mut tokens = Vec::new();
        for (index, word) in words.into_iter().enumerate() {
            let text = word.into();
            if text.is_empty() || text.chars().any(char::is_whitespace) {
                return Err(Error::InvalidToken(text));
            }
            tokens.push(Token { text, index });
        }
        if tokens.is_empty() {
            return Err(Error::EmptySentence(id));
        }
        Ok(Self { id, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    /// Surface text of `start..=end`, tokens joined by single spaces.
    pub fn span_text(&self, start: usize, end: usize) -> Result<String> {
        if start > end || end >= self.len() {
            return Err(Error::SpanOutOfBounds { start, end, len: self.len() });
        }
        let mut out = String::new();
        for (i, tok) in self.tokens[start..=end].iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&tok.text);
        }
        Ok(out)
    }
}

/// A typed or untyped inclusive token span.
///
/// Ordering is by start, then end, then type (untyped first).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub entity_type: Option<String>,
}

impl Mention {
    pub fn typed(start: usize, end: usize, entity_type: impl Into<String>) -> Self {
        Self { start, end, entity_type: Some(entity_type.into()) }
    }

    pub fn untyped(start: usize, end: usize) -> Self {
        Self { start, end, entity_type: None }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Mention) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn without_type(&self) -> Self {
        Self::untyped(self.start, self.end)
    }
}

impl fmt::Display for Mention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.entity_type {
            Some(t) => write!(f, "({},{},{})", self.start, self.end, t),
            None => write!(f, "({},{})", self.start, self.end),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Prefix {
    B,
    I,
    O,
    E,
}

impl Prefix {
    pub const ALL: [Prefix; 4] = [Prefix::B, Prefix::I, Prefix::O, Prefix::E];

    pub fn as_char(self) -> char {
        match self {
            Prefix::B => 'B',
            Prefix::I => 'I',
            Prefix::O => 'O',
            Prefix::E => 'E',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub prefix: Prefix,
    pub entity_type: Option<String>,
}

impl Tag {
    pub const OUTSIDE: Tag = Tag { prefix: Prefix::O, entity_type: None };

    pub fn new(prefix: Prefix, entity_type: Option<String>) -> Self {
        if prefix == Prefix::O {
            Self::OUTSIDE
        } else {
            Self { prefix, entity_type }
        }
    }

    pub fn is_outside(&self) -> bool {
        self.prefix == Prefix::O
    }

    /// Parses `O`, `B`, `I`, `E` or the typed forms `B-PER`, `I-PER`, `E-PER`.
    pub fn parse(s: &str) -> Result<Self> {
        let illegal = || Error::IllegalTag(s.to_string());
        let mut chars = s.chars();
        let prefix = match chars.next() {
            Some('B') => Prefix::B,
            Some('I') => Prefix::I,
            Some('E') => Prefix::E,
            Some('O') => {
                return if s.len() == 1 { Ok(Self::OUTSIDE) } else { Err(illegal()) };
            }
            _ => return Err(illegal()),
        };
        let rest = chars.as_str();
        if rest.is_empty() {
            return Ok(Self::new(prefix, None));
        }
        match rest.strip_prefix('-') {
            Some(ty) if !ty.is_empty() && !ty.chars().any(char::is_whitespace) => {
                Ok(Self::new(prefix, Some(ty.to_string())))
            }
            _ => Err(illegal()),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.entity_type {
            Some(t) if self.prefix != Prefix::O => write!(f, "{}-{}", self.prefix.as_char(), t),
            _ => write!(f, "{}", self.prefix.as_char()),
        }
    }
}

/// Per-token tags with a parallel loss mask.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagSequence {
    pub tags: Vec<Tag>,
    pub loss_mask: Vec<bool>,
}

impl TagSequence {
    /// All positions included in the loss.
    pub fn from_tags(tags: Vec<Tag>) -> Self {
        let loss_mask = alloc::vec![true; tags.len()];
        Self { tags, loss_mask }
    }

    pub fn parse<'a>(tags: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let tags = tags.into_iter().map(Tag::parse).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_tags(tags))
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.tags.iter().map(ToString::to_string).collect()
    }
}

/// Sorts `mentions` and checks they are in bounds and pairwise disjoint.
fn sorted_checked(mentions: &[Mention], n: usize) -> Result<Vec<Mention>> {
    let mut sorted = mentions.to_vec();
    sorted.sort();
    sorted.dedup();
    for m in &sorted {
        if m.start > m.end || m.end >= n {
            return Err(Error::SpanOutOfBounds { start: m.start, end: m.end, len: n });
        }
    }
    for pair in sorted.windows(2) {
        if pair[0].overlaps(&pair[1]) {
            return Err(Error::Overlap(format!("{} and {}", pair[0], pair[1])));
        }
    }
    Ok(sorted)
}

/// BIOE-encodes non-overlapping mentions over `n` tokens. With `typed` false
/// the tags carry no type, which is what the entity-agnostic detector trains on.
pub fn encode_tags(mentions: &[Mention], n: usize, typed: bool) -> Result<TagSequence> {
    let sorted = sorted_checked(mentions, n)?;
    let mut tags = alloc::vec![Tag::OUTSIDE; n];
    for m in &sorted {
        let ty = if typed { m.entity_type.clone() } else { None };
        tags[m.start] = Tag::new(Prefix::B, ty.clone());
        if m.end > m.start {
            for tag in &mut tags[m.start + 1..m.end] {
                *tag = Tag::new(Prefix::I, ty.clone());
            }
            tags[m.end] = Tag::new(Prefix::E, ty);
        }
    }
    Ok(TagSequence::from_tags(tags))
}

/// Decodes any tag sequence into sorted, disjoint, in-bounds mentions.
pub fn decode_tags(seq: &TagSequence) -> Vec<Mention> {
    decode_slice(&seq.tags)
}

pub fn decode_slice(tags: &[Tag]) -> Vec<Mention> {
    let mut out = Vec::new();
    let mut open: Option<(usize, Option<String>)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag.prefix {
            Prefix::O => {
                if let Some((s, ty)) = open.take() {
                    out.push(Mention { start: s, end: i - 1, entity_type: ty });
                }
            }
            Prefix::B => {
                if let Some((s, ty)) = open.take() {
                    out.push(Mention { start: s, end: i - 1, entity_type: ty });
                }
                open = Some((i, tag.entity_type.clone()));
            }
            Prefix::I | Prefix::E => {
                let continues = matches!(&open, Some((_, ty)) if *ty == tag.entity_type);
                if !continues {
                    if let Some((s, ty)) = open.take() {
                        out.push(Mention { start: s, end: i - 1, entity_type: ty });
                    }
                    open = Some((i, tag.entity_type.clone()));
                }
                if tag.prefix == Prefix::E {
                    let (s, ty) = open.take().expect("span is open");
                    out.push(Mention { start: s, end: i, entity_type: ty });
                }
            }
        }
    }
    if let Some((s, ty)) = open {
        out.push(Mention { start: s, end: tags.len() - 1, entity_type: ty });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Bio,
    Bioe,
}

impl Scheme {
    fn name(self) -> &'static str {
        match self {
            Scheme::Bio => "BIO",
            Scheme::Bioe => "BIOE",
        }
    }

    /// Strict well-formedness: `I`/`E` must continue a span of the same type,
    /// BIO has no `E`, and in BIOE an `I` must be followed by `I` or `E`.
    pub fn validate(self, tags: &[Tag]) -> Result<()> {
        let err = |position| Error::InvalidScheme { scheme: self.name(), position };
        let mut open: Option<&Option<String>> = None;
        for (i, tag) in tags.iter().enumerate() {
            match tag.prefix {
                Prefix::O => open = None,
                Prefix::B => open = Some(&tag.entity_type),
                Prefix::I | Prefix::E => {
                    if self == Scheme::Bio && tag.prefix == Prefix::E {
                        return Err(err(i));
                    }
                    if open != Some(&tag.entity_type) {
                        return Err(err(i));
                    }
                    if tag.prefix == Prefix::E {
                        open = None;
                    }
                }
            }
            let after_inside = i > 0 && tags[i - 1].prefix == Prefix::I;
            if self == Scheme::Bioe && after_inside && !matches!(tag.prefix, Prefix::I | Prefix::E) {
                return Err(err(i));
            }
        }
        if self == Scheme::Bioe && tags.last().is_some_and(|t| t.prefix == Prefix::I) {
            return Err(err(tags.len() - 1));
        }
        Ok(())
    }
}

/// Converts between BIO and BIOE. The input must be valid in `from`.
pub fn convert_scheme(seq: &TagSequence, from: Scheme, to: Scheme) -> Result<TagSequence> {
    from.validate(&seq.tags)?;
    let mut tags = seq.tags.clone();
    match (from, to) {
        (Scheme::Bio, Scheme::Bioe) => {
            for i in 0..tags.len() {
                let continues = tags.get(i + 1).is_some_and(|t| t.prefix == Prefix::I);
                if tags[i].prefix == Prefix::I && !continues {
                    tags[i].prefix = Prefix::E;
                }
            }
        }
        (Scheme::Bioe, Scheme::Bio) => {
            for tag in &mut tags {
                if tag.prefix == Prefix::E {
                    tag.prefix = Prefix::I;
                }
            }
        }
        _ => {}
    }
    Ok(TagSequence { tags, loss_mask: seq.loss_mask.clone() })
}

/// Sentences with gold mentions and the ordered entity type inventory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub sentences: Vec<Sentence>,
    pub gold: BTreeMap<String, Vec<Mention>>,
    pub type_inventory: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from sentences paired with their gold mentions.
    /// Repeated mentions collapse and the inventory is the sorted set of types.
    pub fn from_annotated(items: Vec<(Sentence, Vec<Mention>)>) -> Self {
        let mut types = BTreeSet::new();
        let mut sentences = Vec::with_capacity(items.len());
        let mut gold = BTreeMap::new();
        for (sentence, mut mentions) in items {
            mentions.sort();
            mentions.dedup();
            types.extend(mentions.iter().filter_map(|m| m.entity_type.clone()));
            gold.insert(sentence.id.clone(), mentions);
            sentences.push(sentence);
        }
        Self { sentences, gold, type_inventory: types.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_types(&self) -> usize {
        self.type_inventory.len()
    }

    pub fn gold_of(&self, sentence: &Sentence) -> &[Mention] {
        self.gold.get(&sentence.id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total_mentions(&self) -> usize {
        self.sentences.iter().map(|s| self.gold_of(s).len()).sum()
    }

    pub fn type_index(&self, ty: &str) -> Option<usize> {
        self.type_inventory.iter().position(|t| t == ty)
    }

    /// Gold mentions in sentence order.
    pub fn gold_lists(&self) -> Vec<Vec<Mention>> {
        self.sentences.iter().map(|s| self.gold_of(s).to_vec()).collect()
    }

    /// Sub-dataset over the sentence indices in `range`, keeping the inventory.
    pub fn slice(&self, range: core::ops::Range<usize>) -> Self {
        let sentences: Vec<Sentence> = self.sentences[range].to_vec();
        let gold = sentences.iter().filter_map(|s| self.gold.get(&s.id).map(|g| (s.id.clone(), g.clone()))).collect();
        Self { sentences, gold, type_inventory: self.type_inventory.clone() }
    }
}

/// Parses `token<TAB>tag` lines with blank lines between sentences. Sentence
/// ids are their 0-based position in the file.
pub fn parse_conll(text: &str) -> Result<Dataset> {
    let mut items = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();
    let flush =
        |words: &mut Vec<String>, tags: &mut Vec<Tag>, items: &mut Vec<(Sentence, Vec<Mention>)>| -> Result<()> {
            if words.is_empty() {
                return Ok(());
            }
            let sentence = Sentence::new(items.len().to_string(), words.drain(..))?;
            let mentions = decode_slice(tags);
            tags.clear();
            items.push((sentence, mentions));
            Ok(())
        };
    for (lineno, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            flush(&mut words, &mut tags, &mut items)?;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        let word = fields[0];
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::Parse { line: line_no, message: format!("invalid token `{word}`") });
        }
        let tag = Tag::parse(fields[1]).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        words.push(word.to_string());
        tags.push(tag);
    }
    flush(&mut words, &mut tags, &mut items)?;
    Ok(Dataset::from_annotated(items))
}

/// Canonical CoNLL rendering: typed BIOE tags, `\n` line endings and a blank
/// line after every sentence.
pub fn to_conll(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for sentence in &dataset.sentences {
        let tags = encode_tags(dataset.gold_of(sentence), sentence.len(), true)?;
        for (tok, tag) in sentence.tokens.iter().zip(&tags.tags) {
            out.push_str(&tok.text);
            out.push('\t');
            out.push_str(&tag.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    StartAfterEnd { sentence: String, mention: Mention },
    OutOfBounds { sentence: String, mention: Mention, len: usize },
    Overlap { sentence: String, first: Mention, second: Mention },
    UnknownType { sentence: String, mention: Mention },
    Untyped { sentence: String, mention: Mention },
    UnknownSentence(String),
    DuplicateSentenceId(String),
    EmptyTypeInventory,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StartAfterEnd { sentence, mention } => {
                write!(f, "sentence {sentence}: mention {mention}: start>end")
            }
            Violation::OutOfBounds { sentence, mention, len } => {
                write!(f, "sentence {sentence}: mention {mention} out of bounds for {len} tokens")
            }
            Violation::Overlap { sentence, first, second } => {
                write!(f, "sentence {sentence}: mentions {first} and {second} overlap")
            }
            Violation::UnknownType { sentence, mention } => {
                write!(f, "sentence {sentence}: mention {mention} has a type outside the inventory")
            }
            Violation::Untyped { sentence, mention } => {
                write!(f, "sentence {sentence}: gold mention {mention} has no type")
            }
            Violation::UnknownSentence(id) => write!(f, "gold mentions for unknown sentence {id}"),
            Violation::DuplicateSentenceId(id) => write!(f, "duplicate sentence id {id}"),
            Violation::EmptyTypeInventory => write!(f, "type inventory is empty"),
        }
    }
}

pub fn validate_dataset(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if d.type_inventory.is_empty() {
        out.push(Violation::EmptyTypeInventory);
    }
    let mut seen = BTreeMap::new();
    for s in &d.sentences {
        if seen.insert(s.id.as_str(), s.len()).is_some() {
            out.push(Violation::DuplicateSentenceId(s.id.clone()));
        }
    }
    for (id, mentions) in &d.gold {
        let Some(&len) = seen.get(id.as_str()) else {
            out.push(Violation::UnknownSentence(id.clone()));
            continue;
        };
        let mut valid = Vec::new();
        for m in mentions {
            let sentence = id.clone();
            if m.start > m.end {
                out.push(Violation::StartAfterEnd { sentence, mention: m.clone() });
                continue;
            }
            if m.end >= len {
                out.push(Violation::OutOfBounds { sentence, mention: m.clone(), len });
                continue;
            }
            match &m.entity_type {
                None => out.push(Violation::Untyped { sentence, mention: m.clone() }),
                Some(t) if !d.type_inventory.contains(t) => {
                    out.push(Violation::UnknownType { sentence, mention: m.clone() })
                }
                _ => {}
            }
            valid.push(m);
        }
        valid.sort();
        for (i, a) in valid.iter().enumerate() {
            for b in &valid[i + 1..] {
                if a.overlaps(b) {
                    out.push(Violation::Overlap { sentence: id.clone(), first: (*a).clone(), second: (*b).clone() });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tags(s: &[&str]) -> TagSequence {
        TagSequence::parse(s.iter().copied()).unwrap()
    }

    #[test]
    fn parse_single_token_corpus() {
        let d = parse_conll("Emily\tB-PER\n\n").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.gold_of(&d.sentences[0]), &[Mention::typed(0, 0, "PER")]);
        assert_eq!(d.type_inventory, vec!["PER"]);
    }

    #[test]
    fn parse_bioe_span() {
        let d = parse_conll("United\tB-LOC\nStates\tE-LOC\n\n").unwrap();
        assert_eq!(d.gold_of(&d.sentences[0]), &[Mention::typed(0, 1, "LOC")]);
    }

    #[test]
    fn parse_rejects_illegal_symbol_with_line() {
        let err = parse_conll("Emily\tO\nBob\tQ-PER\n\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("Q-PER"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_wrong_field_count() {
        assert!(matches!(parse_conll("a\tO\nb O\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_conll("a\tO\textra\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn parse_accepts_crlf_and_bio() {
        let d = parse_conll("New\tB-LOC\r\nYork\tI-LOC\r\nis\tO\r\n\r\nok\tO\r\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.gold_of(&d.sentences[0]), &[Mention::typed(0, 1, "LOC")]);
        assert!(d.gold_of(&d.sentences[1]).is_empty());
    }

    #[test]
    fn encode_examples() {
        let m = [Mention::typed(0, 0, "PER"), Mention::typed(3, 4, "LOC")];
        assert_eq!(encode_tags(&m, 5, true).unwrap(), tags(&["B-PER", "O", "O", "B-LOC", "E-LOC"]));
        assert_eq!(encode_tags(&[], 3, true).unwrap(), tags(&["O", "O", "O"]));
        let m = [Mention::typed(1, 3, "X")];
        assert_eq!(encode_tags(&m, 5, false).unwrap(), tags(&["O", "B", "I", "E", "O"]));
    }

    #[test]
    fn encode_rejects_overlap_and_bounds() {
        let m = [Mention::typed(0, 2, "A"), Mention::typed(2, 3, "B")];
        assert!(matches!(encode_tags(&m, 5, true), Err(Error::Overlap(_))));
        assert!(matches!(encode_tags(&[Mention::untyped(4, 5)], 5, false), Err(Error::SpanOutOfBounds { .. })));
    }

    #[test]
    fn decode_examples_and_repairs() {
        assert_eq!(
            decode_tags(&tags(&["B-PER", "O", "O", "B-LOC", "E-LOC"])),
            vec![Mention::typed(0, 0, "PER"), Mention::typed(3, 4, "LOC")]
        );
        assert_eq!(decode_tags(&tags(&["I", "E", "O"])), vec![Mention::untyped(0, 1)]);
        assert_eq!(decode_tags(&tags(&["B", "I", "O"])), vec![Mention::untyped(0, 1)]);
        // type switch mid-span
        assert_eq!(
            decode_tags(&tags(&["B-A", "I-B", "E-B"])),
            vec![Mention::typed(0, 0, "A"), Mention::typed(1, 2, "B")]
        );
        // E closes, a following I opens fresh
        assert_eq!(decode_tags(&tags(&["E", "I"])), vec![Mention::untyped(0, 0), Mention::untyped(1, 1)]);
        assert!(decode_tags(&TagSequence::default()).is_empty());
    }

    #[test]
    fn convert_examples() {
        let out = convert_scheme(&tags(&["B-PER", "I-PER", "O"]), Scheme::Bio, Scheme::Bioe).unwrap();
        assert_eq!(out, tags(&["B-PER", "E-PER", "O"]));
        let out = convert_scheme(&tags(&["B-PER", "O"]), Scheme::Bio, Scheme::Bioe).unwrap();
        assert_eq!(out, tags(&["B-PER", "O"]));
        assert!(convert_scheme(&tags(&["I-PER", "O"]), Scheme::Bio, Scheme::Bioe).is_err());
        let back = convert_scheme(&tags(&["B-X", "I-X", "E-X", "B-Y"]), Scheme::Bioe, Scheme::Bio).unwrap();
        assert_eq!(back, tags(&["B-X", "I-X", "I-X", "B-Y"]));
    }

    #[test]
    fn bioe_validation() {
        assert!(Scheme::Bioe.validate(&tags(&["B", "I", "O"]).tags).is_err());
        assert!(Scheme::Bioe.validate(&tags(&["B", "I"]).tags).is_err());
        assert!(Scheme::Bioe.validate(&tags(&["B", "I", "E", "B", "O"]).tags).is_ok());
        assert!(Scheme::Bio.validate(&tags(&["B", "E"]).tags).is_err());
    }

    #[test]
    fn validate_reports_violations() {
        let d = parse_conll("a\tB-PER\nb\tO\nc\tO\n\n").unwrap();
        assert!(validate_dataset(&d).is_empty());

        let mut bad = d.clone();
        bad.gold.insert("0".into(), vec![Mention::typed(2, 1, "PER")]);
        let v = validate_dataset(&bad);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("start>end"));

        let mut bad = d.clone();
        bad.gold.insert("0".into(), vec![Mention::typed(0, 0, "FOO")]);
        assert!(matches!(validate_dataset(&bad)[..], [Violation::UnknownType { .. }]));

        let mut bad = d;
        bad.gold.insert("0".into(), vec![Mention::typed(0, 1, "PER"), Mention::typed(1, 2, "PER")]);
        assert!(matches!(validate_dataset(&bad)[..], [Violation::Overlap { .. }]));
    }

    #[test]
    fn duplicates_collapse() {
        let s = Sentence::new("x", ["a", "b"]).unwrap();
        let d = Dataset::from_annotated(vec![(s, vec![Mention::typed(0, 0, "A"), Mention::typed(0, 0, "A")])]);
        assert_eq!(d.total_mentions(), 1);
    }

    #[test]
    fn sentence_rejects_bad_tokens() {
        assert!(Sentence::new("x", ["a b"]).is_err());
        assert!(Sentence::new("x", [""]).is_err());
        assert!(Sentence::new("x", Vec::<String>::new()).is_err());
    }
}
