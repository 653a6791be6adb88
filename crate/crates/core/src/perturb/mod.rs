//! Rule-based character and word perturbations, plus import of externally
//! generated rephrasings.
//!
//! Character rules pick a word of at least three characters and never touch
//! its first or last character. Word rules operate on whitespace tokens with
//! trailing punctuation split off; verb-dependent rules consult a small
//! lexicon and report [`PerturbError::Inapplicable`] when it finds nothing.

mod lexicon;
pub mod tokens;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Corpus, Label, LabeledSentence};
use crate::rng;
use lexicon::Negation;
use tokens::{render, tokenize, Token};

pub use lexicon::keyboard_neighbours;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PerturbError {
    #[error("{0} is not applicable to this sentence")]
    Inapplicable(PerturbationKind),
    #[error("{0} is not a character-level kind")]
    NotCharKind(PerturbationKind),
    #[error("{0} is not a word-level kind")]
    NotWordKind(PerturbationKind),
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: unknown origin_id '{origin_id}'")]
    UnknownOrigin { line: usize, origin_id: String },
    #[error("line {line}: empty kind tag")]
    EmptyKind { line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PerturbationKind {
    CharInsert,
    CharDelete,
    CharReplace,
    CharSwap,
    CharRepeat,
    WordDelete,
    WordRepeat,
    WordNegate,
    WordSingPlur,
    WordOrder,
    WordTense,
    External(String),
}

impl PerturbationKind {
    pub const CHAR: [PerturbationKind; 5] = [
        PerturbationKind::CharInsert,
        PerturbationKind::CharDelete,
        PerturbationKind::CharReplace,
        PerturbationKind::CharSwap,
        PerturbationKind::CharRepeat,
    ];

    pub const WORD: [PerturbationKind; 6] = [
        PerturbationKind::WordDelete,
        PerturbationKind::WordRepeat,
        PerturbationKind::WordNegate,
        PerturbationKind::WordSingPlur,
        PerturbationKind::WordOrder,
        PerturbationKind::WordTense,
    ];

    /// All eleven rule-based kinds, character kinds first.
    pub fn rules() -> Vec<PerturbationKind> {
        Self::CHAR.iter().chain(Self::WORD.iter()).cloned().collect()
    }

    pub fn is_char(&self) -> bool {
        Self::CHAR.contains(self)
    }

    pub fn is_word(&self) -> bool {
        Self::WORD.contains(self)
    }

    pub fn name(&self) -> &str {
        match self {
            PerturbationKind::CharInsert => "char_insert",
            PerturbationKind::CharDelete => "char_delete",
            PerturbationKind::CharReplace => "char_replace",
            PerturbationKind::CharSwap => "char_swap",
            PerturbationKind::CharRepeat => "char_repeat",
            PerturbationKind::WordDelete => "word_delete",
            PerturbationKind::WordRepeat => "word_repeat",
            PerturbationKind::WordNegate => "word_negate",
            PerturbationKind::WordSingPlur => "word_sing_plur",
            PerturbationKind::WordOrder => "word_order",
            PerturbationKind::WordTense => "word_tense",
            PerturbationKind::External(tag) => tag,
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = String;

    /// Parses a rule name; any other non-empty string is an external tag.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            return Err("empty perturbation kind".into());
        }
        Ok(Self::rules()
            .into_iter()
            .find(|k| k.name() == s)
            .unwrap_or_else(|| PerturbationKind::External(s.to_string())))
    }
}

impl Serialize for PerturbationKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for PerturbationKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbedSentence {
    /// `<origin_id>~<k>`, where `k` is the member's index within its set.
    pub id: String,
    pub origin_id: String,
    pub kind: PerturbationKind,
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationSet {
    pub origin_id: String,
    pub label: Label,
    pub members: Vec<PerturbedSentence>,
    pub requested_n: usize,
}

pub fn member_id(origin_id: &str, index: usize) -> String {
    format!("{origin_id}~{index}")
}

impl PerturbationSet {
    fn new(origin: &LabeledSentence, requested_n: usize) -> Self {
        PerturbationSet {
            origin_id: origin.id.clone(),
            label: origin.label,
            members: Vec::new(),
            requested_n,
        }
    }

    fn push(&mut self, kind: PerturbationKind, text: String) {
        let id = member_id(&self.origin_id, self.members.len());
        self.members.push(PerturbedSentence {
            id,
            origin_id: self.origin_id.clone(),
            kind,
            text,
            label: self.label,
        });
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone)]
struct CharSite {
    token: usize,
    pos: usize,
}

fn char_sites(tokens: &[Token], kind: &PerturbationKind) -> Vec<Vec<CharSite>> {
    let mut per_word = Vec::new();
    for (ti, tok) in tokens.iter().enumerate() {
        if !tok.is_word() {
            continue;
        }
        let chars: Vec<char> = tok.text.chars().collect();
        let n = chars.len();
        if n < 3 {
            continue;
        }
        let positions: Vec<usize> = match kind {
            // Insert between characters, after the first and before the last.
            PerturbationKind::CharInsert => (1..n).collect(),
            PerturbationKind::CharDelete | PerturbationKind::CharRepeat => (1..n - 1).collect(),
            PerturbationKind::CharReplace => (1..n - 1)
                .filter(|&p| !keyboard_neighbours(chars[p].to_ascii_lowercase()).is_empty())
                .collect(),
            // Swap `p` with `p + 1`, both interior, and the swap must change the word.
            PerturbationKind::CharSwap => (1..n.saturating_sub(2))
                .filter(|&p| chars[p] != chars[p + 1])
                .collect(),
            _ => Vec::new(),
        };
        if !positions.is_empty() {
            per_word.push(
                positions
                    .into_iter()
                    .map(|pos| CharSite { token: ti, pos })
                    .collect(),
            );
        }
    }
    per_word
}

fn match_case(template: &str, word: &str) -> String {
    let upper = template.chars().next().is_some_and(char::is_uppercase);
    if !upper {
        return word.to_string();
    }
    let mut cs = word.chars();
    match cs.next() {
        Some(f) => f.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

/// Applies a single character edit to a uniformly chosen eligible word at a
/// uniformly chosen interior position.
pub fn perturb_char(
    text: &str,
    kind: &PerturbationKind,
    seed: u64,
) -> Result<String, PerturbError> {
    if !kind.is_char() {
        return Err(PerturbError::NotCharKind(kind.clone()));
    }
    let mut tokens = tokenize(text);
    let sites = char_sites(&tokens, kind);
    let mut rng = rng::stream(seed, "char", 0);
    let word_sites = sites
        .choose(&mut rng)
        .ok_or_else(|| PerturbError::Inapplicable(kind.clone()))?;
    let site = word_sites.choose(&mut rng).expect("non-empty site list");
    let mut chars: Vec<char> = tokens[site.token].text.chars().collect();
    let p = site.pos;
    match kind {
        PerturbationKind::CharInsert => {
            let c = rng.gen_range(b'a'..=b'z') as char;
            chars.insert(p, c);
        }
        PerturbationKind::CharDelete => {
            chars.remove(p);
        }
        PerturbationKind::CharRepeat => {
            chars.insert(p + 1, chars[p]);
        }
        PerturbationKind::CharReplace => {
            let orig = chars[p];
            let neighbours: Vec<char> = keyboard_neighbours(orig.to_ascii_lowercase())
                .chars()
                .collect();
            let c = *neighbours.choose(&mut rng).expect("site has neighbours");
            chars[p] = if orig.is_uppercase() {
                c.to_ascii_uppercase()
            } else {
                c
            };
        }
        PerturbationKind::CharSwap => chars.swap(p, p + 1),
        _ => unreachable!(),
    }
    tokens[site.token].text = chars.into_iter().collect();
    Ok(render(&tokens))
}

/// Applies one word-level edit.
pub fn perturb_word(
    text: &str,
    kind: &PerturbationKind,
    seed: u64,
) -> Result<String, PerturbError> {
    if !kind.is_word() {
        return Err(PerturbError::NotWordKind(kind.clone()));
    }
    let inapplicable = || PerturbError::Inapplicable(kind.clone());
    let mut tokens = tokenize(text);
    let mut rng = rng::stream(seed, "word", 0);
    let word_idx: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i].is_word()).collect();
    let lower: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();

    match kind {
        PerturbationKind::WordDelete => {
            if word_idx.len() < 2 {
                return Err(inapplicable());
            }
            let i = *word_idx.choose(&mut rng).unwrap();
            tokens.remove(i);
            if let Some(first) = tokens.first_mut() {
                first.attached = false;
            }
        }
        PerturbationKind::WordRepeat => {
            let i = *word_idx.choose(&mut rng).ok_or_else(inapplicable)?;
            let copy = if i == 0 && tokens[i].text != "I" {
                tokens[i].text.to_lowercase()
            } else {
                tokens[i].text.clone()
            };
            tokens.insert(
                i + 1,
                Token {
                    text: copy,
                    attached: false,
                },
            );
        }
        PerturbationKind::WordOrder => {
            let pairs: Vec<usize> = word_idx
                .windows(2)
                .filter(|w| w[1] == w[0] + 1 && lower[w[0]] != lower[w[1]])
                .map(|w| w[0])
                .collect();
            let i = *pairs.choose(&mut rng).ok_or_else(inapplicable)?;
            let (a, b) = (tokens[i].text.clone(), tokens[i + 1].text.clone());
            tokens[i].text = b;
            tokens[i + 1].text = a;
        }
        PerturbationKind::WordNegate => {
            // A sentence-initial auxiliary is a question inversion; skip it.
            let cands: Vec<(usize, Negation)> = word_idx
                .iter()
                .filter(|&&i| i > 0)
                .filter_map(|&i| {
                    lexicon::negation(&lower[i], lower.get(i + 1).map(String::as_str))
                        .map(|n| (i, n))
                })
                .collect();
            let (i, edit) = cands.choose(&mut rng).cloned().ok_or_else(inapplicable)?;
            match edit {
                Negation::InsertNot => tokens.insert(
                    i + 1,
                    Token {
                        text: "not".into(),
                        attached: false,
                    },
                ),
                Negation::RemoveNot => {
                    tokens.remove(i + 1);
                }
                Negation::Expand(positive) => {
                    tokens[i].text = match_case(&tokens[i].text, positive);
                }
            }
        }
        PerturbationKind::WordSingPlur | PerturbationKind::WordTense => {
            let cands: Vec<(usize, String)> = word_idx
                .iter()
                .filter_map(|&i| {
                    let replaced = if *kind == PerturbationKind::WordTense {
                        lexicon::past_of(&lower[i])
                    } else {
                        lexicon::number_flip(&lower[i])
                    };
                    replaced
                        .filter(|r| *r != lower[i])
                        .map(|r| (i, r))
                })
                .collect();
            let (i, form) = cands.choose(&mut rng).cloned().ok_or_else(inapplicable)?;
            tokens[i].text = match_case(&tokens[i].text, &form);
        }
        _ => unreachable!(),
    }
    Ok(render(&tokens))
}

/// Dispatches to [`perturb_char`] or [`perturb_word`].
pub fn perturb(text: &str, kind: &PerturbationKind, seed: u64) -> Result<String, PerturbError> {
    if kind.is_char() {
        perturb_char(text, kind, seed)
    } else {
        perturb_word(text, kind, seed)
    }
}

/// Consecutive duplicate draws after which a kind is considered exhausted.
const MAX_DUPLICATE_STREAK: usize = 8;

/// Cycles through `kinds`, drawing fresh sub-seeds, until `n` distinct
/// perturbations exist or every kind is exhausted.
pub fn perturb_set(
    sentence: &LabeledSentence,
    kinds: &[PerturbationKind],
    n: usize,
    seed: u64,
) -> PerturbationSet {
    let mut set = PerturbationSet::new(sentence, n);
    let rule_kinds: Vec<&PerturbationKind> =
        kinds.iter().filter(|k| k.is_char() || k.is_word()).collect();
    let mut streaks = vec![0usize; rule_kinds.len()];
    let mut alive = vec![true; rule_kinds.len()];
    let mut seen: HashSet<String> = HashSet::new();
    seen.insert(sentence.text.clone());
    let mut attempt = 0u64;
    while set.len() < n && alive.iter().any(|&a| a) {
        for (ki, kind) in rule_kinds.iter().enumerate() {
            if set.len() >= n {
                break;
            }
            if !alive[ki] {
                continue;
            }
            let sub = rng::sub_seed(seed, "perturb_set", attempt);
            attempt += 1;
            match perturb(&sentence.text, kind, sub) {
                Ok(text) if seen.insert(text.clone()) => {
                    streaks[ki] = 0;
                    set.push((*kind).clone(), text);
                }
                Ok(_) => {
                    streaks[ki] += 1;
                    if streaks[ki] >= MAX_DUPLICATE_STREAK {
                        alive[ki] = false;
                    }
                }
                Err(_) => alive[ki] = false,
            }
        }
    }
    set
}

#[derive(Serialize, Deserialize)]
struct PerturbationRecord {
    origin_id: String,
    kind: String,
    text: String,
}

/// Reads externally generated perturbations, grouped by origin in order of
/// first appearance. Every record's kind becomes `External(tag)`. Members
/// equal to their origin text or to an earlier member are dropped.
pub fn read_perturbations<R: Read>(
    input: R,
    corpus: &Corpus,
) -> Result<Vec<PerturbationSet>, ImportError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, PerturbationSet> = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PerturbationRecord =
            serde_json::from_str(&line).map_err(|e| ImportError::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
        let origin = corpus
            .get(&rec.origin_id)
            .ok_or_else(|| ImportError::UnknownOrigin {
                line: line_no,
                origin_id: rec.origin_id.clone(),
            })?;
        if rec.kind.trim().is_empty() {
            return Err(ImportError::EmptyKind { line: line_no });
        }
        let set = groups.entry(rec.origin_id.clone()).or_insert_with(|| {
            order.push(rec.origin_id.clone());
            PerturbationSet::new(origin, 0)
        });
        set.requested_n += 1;
        if rec.text == origin.text || !seen.insert((rec.origin_id.clone(), rec.text.clone())) {
            continue;
        }
        set.push(PerturbationKind::External(rec.kind.trim().to_string()), rec.text);
    }
    Ok(order
        .into_iter()
        .filter_map(|id| groups.remove(&id))
        .collect())
}

pub fn import_perturbations(
    path: impl AsRef<Path>,
    corpus: &Corpus,
) -> Result<Vec<PerturbationSet>, ImportError> {
    read_perturbations(std::fs::File::open(path)?, corpus)
}

/// Writes sets in the `{"origin_id","kind","text"}` line format.
pub fn write_perturbations<W: Write>(
    mut out: W,
    sets: &[PerturbationSet],
) -> std::io::Result<()> {
    for set in sets {
        for m in &set.members {
            let rec = PerturbationRecord {
                origin_id: m.origin_id.clone(),
                kind: m.kind.name().to_string(),
                text: m.text.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;

    const ROBOT: &str = "Are you a robot?";
    const CHATBOT: &str = "Can u tell me if you are a chatbot?";

    fn sentence(text: &str) -> LabeledSentence {
        LabeledSentence {
            id: "s1".into(),
            text: text.into(),
            label: Label::Pos,
            split: Split::Train,
        }
    }

    fn outcomes(text: &str, kind: &PerturbationKind) -> HashSet<String> {
        (0..400).filter_map(|s| perturb(text, kind, s).ok()).collect()
    }

    #[test]
    fn char_delete_reaches_table_example() {
        let seen = outcomes(ROBOT, &PerturbationKind::CharDelete);
        assert!(seen.contains("Are you a robt?"), "{seen:?}");
        // "Are" has one interior char, "you" one, "robot" three.
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn char_swap_reaches_table_example() {
        let seen = outcomes(ROBOT, &PerturbationKind::CharSwap);
        assert!(seen.contains("Are you a rboot?"), "{seen:?}");
        assert!(seen.iter().all(|s| s.len() == ROBOT.len()));
    }

    #[test]
    fn char_replace_uses_keyboard_neighbours() {
        let seen = outcomes(ROBOT, &PerturbationKind::CharReplace);
        assert!(seen.contains("Are you a ronot?"), "{seen:?}");
    }

    #[test]
    fn char_repeat_reaches_table_example() {
        let seen = outcomes(ROBOT, &PerturbationKind::CharRepeat);
        assert!(seen.contains("Arre you a robot?"), "{seen:?}");
    }

    #[test]
    fn short_words_are_inapplicable() {
        for kind in PerturbationKind::CHAR {
            assert_eq!(
                perturb_char("a b", &kind, 9),
                Err(PerturbError::Inapplicable(kind.clone()))
            );
        }
    }

    #[test]
    fn wrong_granularity_is_rejected() {
        assert!(matches!(
            perturb_char(ROBOT, &PerturbationKind::WordDelete, 0),
            Err(PerturbError::NotCharKind(_))
        ));
        assert!(matches!(
            perturb_word(ROBOT, &PerturbationKind::CharDelete, 0),
            Err(PerturbError::NotWordKind(_))
        ));
    }

    #[test]
    fn word_repeat_reaches_table_example() {
        let seen = outcomes(CHATBOT, &PerturbationKind::WordRepeat);
        assert!(seen.contains("Can can u tell me if you are a chatbot?"), "{seen:?}");
    }

    #[test]
    fn word_negate_matches_table() {
        for seed in 0..20 {
            assert_eq!(
                perturb_word(CHATBOT, &PerturbationKind::WordNegate, seed).unwrap(),
                "Can u tell me if you are not a chatbot?"
            );
        }
        assert_eq!(
            perturb_word("you are not a bot", &PerturbationKind::WordNegate, 1).unwrap(),
            "you are a bot"
        );
    }

    #[test]
    fn word_table_examples_are_reachable() {
        let del = outcomes(CHATBOT, &PerturbationKind::WordDelete);
        assert!(del.contains("Can u tell if you are a chatbot?"));
        let sp = outcomes(CHATBOT, &PerturbationKind::WordSingPlur);
        assert!(sp.contains("Can u tell me if you is a chatbot?"), "{sp:?}");
        let order = outcomes(CHATBOT, &PerturbationKind::WordOrder);
        assert!(order.contains("Can u tell me if you are chatbot a?"), "{order:?}");
        let tense = outcomes(CHATBOT, &PerturbationKind::WordTense);
        assert!(tense.contains("Can u tell me if you were a chatbot?"), "{tense:?}");
    }

    #[test]
    fn verbless_sentence_has_no_tense() {
        let s = "peritonsillar abscess drainage aftercare";
        for kind in [
            PerturbationKind::WordTense,
            PerturbationKind::WordSingPlur,
            PerturbationKind::WordNegate,
        ] {
            assert_eq!(
                perturb_word(s, &kind, 5),
                Err(PerturbError::Inapplicable(kind.clone()))
            );
        }
    }

    #[test]
    fn set_respects_cardinality_and_dedups() {
        let s = sentence(ROBOT);
        let set = perturb_set(&s, &[PerturbationKind::CharDelete], 4, 11);
        assert!(set.len() <= 4);
        let texts: HashSet<_> = set.members.iter().map(|m| &m.text).collect();
        assert_eq!(texts.len(), set.len());
        assert!(set.members.iter().all(|m| m.text != ROBOT && m.origin_id == "s1"));
    }

    #[test]
    fn set_over_all_rules_fills_sixteen() {
        let set = perturb_set(&sentence(CHATBOT), &PerturbationKind::rules(), 16, 3);
        assert_eq!(set.len(), 16);
        assert_eq!(set, perturb_set(&sentence(CHATBOT), &PerturbationKind::rules(), 16, 3));
        assert_eq!(set.members[3].id, "s1~3");
    }

    #[test]
    fn import_groups_by_origin() {
        let corpus = Corpus::new("c", vec![sentence(ROBOT)]).unwrap();
        let lines: String = (0..5)
            .map(|i| format!("{{\"origin_id\":\"s1\",\"kind\":\"vicuna\",\"text\":\"variant {i}\"}}\n"))
            .collect();
        let sets = read_perturbations(lines.as_bytes(), &corpus).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].len(), 5);
        assert_eq!(sets[0].members[0].kind, PerturbationKind::External("vicuna".into()));

        assert!(read_perturbations("".as_bytes(), &corpus).unwrap().is_empty());

        let bad = "{\"origin_id\":\"zz9\",\"kind\":\"pj\",\"text\":\"x\"}\n";
        let err = read_perturbations(bad.as_bytes(), &corpus).unwrap_err();
        assert!(err.to_string().contains("zz9"));
    }
}
