//! Keyboard adjacency and the verb lexicon used by the word rules.

/// QWERTY neighbours of lowercase letters and digits.
pub fn keyboard_neighbours(c: char) -> &'static str {
    match c {
        'q' => "wa",
        'w' => "qeas",
        'e' => "wrsd",
        'r' => "etdf",
        't' => "ryfg",
        'y' => "tugh",
        'u' => "yihj",
        'i' => "uojk",
        'o' => "ipkl",
        'p' => "ol",
        'a' => "qwsz",
        's' => "weadzx",
        'd' => "erfsxc",
        'f' => "rtgdcv",
        'g' => "tyhfvb",
        'h' => "yujgbn",
        'j' => "uikhnm",
        'k' => "iojlm",
        'l' => "opk",
        'z' => "asx",
        'x' => "zsdc",
        'c' => "xdfv",
        'v' => "cfgb",
        'b' => "vghn",
        'n' => "bhjm",
        'm' => "njk",
        '1' => "2",
        '2' => "13",
        '3' => "24",
        '4' => "35",
        '5' => "46",
        '6' => "57",
        '7' => "68",
        '8' => "79",
        '9' => "80",
        '0' => "9",
        _ => "",
    }
}

/// Auxiliaries and copulas that take a following "not".
const NEGATABLE: &[&str] = &[
    "is", "are", "am", "was", "were", "do", "does", "did", "can", "could", "will", "would",
    "should", "shall", "may", "might", "must",
];

const CONTRACTIONS: &[(&str, &str)] = &[
    ("isn't", "is"),
    ("aren't", "are"),
    ("wasn't", "was"),
    ("weren't", "were"),
    ("don't", "do"),
    ("doesn't", "does"),
    ("didn't", "did"),
    ("can't", "can"),
    ("cannot", "can"),
    ("couldn't", "could"),
    ("won't", "will"),
    ("wouldn't", "would"),
    ("shouldn't", "should"),
    ("mustn't", "must"),
];

const AUX_NUMBER: &[(&str, &str)] = &[
    ("is", "are"),
    ("are", "is"),
    ("am", "are"),
    ("was", "were"),
    ("were", "was"),
    ("has", "have"),
    ("have", "has"),
    ("does", "do"),
    ("do", "does"),
];

const AUX_PAST: &[(&str, &str)] = &[
    ("is", "was"),
    ("am", "was"),
    ("are", "were"),
    ("do", "did"),
    ("does", "did"),
    ("has", "had"),
    ("have", "had"),
    ("can", "could"),
    ("will", "would"),
    ("shall", "should"),
    ("may", "might"),
];

/// Base forms of common main verbs. Past forms are regular unless listed
/// in [`IRREGULAR_PAST`].
const MAIN_VERBS: &[&str] = &[
    "tell", "talk", "chat", "speak", "need", "want", "like", "help", "work", "play", "call",
    "book", "find", "know", "think", "feel", "check", "order", "plan", "share", "count",
    "translate", "remind", "recommend", "answer", "ask", "say", "make", "take", "give", "get",
    "go", "see", "come", "write", "hear", "understand", "mean", "live", "look", "sound", "seem",
    "start", "stop", "use", "try", "love", "hate", "prefer", "wonder",
];

const IRREGULAR_PAST: &[(&str, &str)] = &[
    ("tell", "told"),
    ("speak", "spoke"),
    ("find", "found"),
    ("know", "knew"),
    ("think", "thought"),
    ("feel", "felt"),
    ("say", "said"),
    ("make", "made"),
    ("take", "took"),
    ("give", "gave"),
    ("get", "got"),
    ("go", "went"),
    ("see", "saw"),
    ("come", "came"),
    ("write", "wrote"),
    ("hear", "heard"),
    ("understand", "understood"),
    ("mean", "meant"),
    ("chat", "chatted"),
    ("plan", "planned"),
    ("stop", "stopped"),
];

fn lookup<'a>(table: &'a [(&str, &str)], key: &str) -> Option<&'a str> {
    table.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

fn third_person(base: &str) -> String {
    let b = base.as_bytes();
    let consonant_y =
        base.ends_with('y') && b.len() >= 2 && !b"aeiou".contains(&b[b.len() - 2]);
    if consonant_y {
        format!("{}ies", &base[..base.len() - 1])
    } else if ["s", "sh", "ch", "x", "z", "o"].iter().any(|s| base.ends_with(s)) {
        format!("{base}es")
    } else {
        format!("{base}s")
    }
}

fn regular_past(base: &str) -> String {
    let b = base.as_bytes();
    let consonant_y =
        base.ends_with('y') && b.len() >= 2 && !b"aeiou".contains(&b[b.len() - 2]);
    if consonant_y {
        format!("{}ied", &base[..base.len() - 1])
    } else if base.ends_with('e') {
        format!("{base}d")
    } else {
        format!("{base}ed")
    }
}

/// Resolves a lowercase word to `(base, is_third_person)` when it is a
/// known main verb.
fn main_verb(word: &str) -> Option<(&'static str, bool)> {
    MAIN_VERBS.iter().find_map(|&base| {
        if base == word {
            Some((base, false))
        } else if third_person(base) == word {
            Some((base, true))
        } else {
            None
        }
    })
}

/// Flipped polarity of an auxiliary, expressed as an edit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Negation {
    /// Insert "not" after the word.
    InsertNot,
    /// Remove the following "not".
    RemoveNot,
    /// Replace a contraction with its positive form.
    Expand(&'static str),
}

pub fn negation(word: &str, next: Option<&str>) -> Option<Negation> {
    if let Some(pos) = lookup(CONTRACTIONS, word) {
        return Some(Negation::Expand(pos));
    }
    if NEGATABLE.contains(&word) {
        return Some(if next == Some("not") {
            Negation::RemoveNot
        } else {
            Negation::InsertNot
        });
    }
    None
}

/// Singular/plural counterpart of a verb form.
pub fn number_flip(word: &str) -> Option<String> {
    if let Some(v) = lookup(AUX_NUMBER, word) {
        return Some(v.to_string());
    }
    main_verb(word).map(|(base, third)| {
        if third {
            base.to_string()
        } else {
            third_person(base)
        }
    })
}

/// Past form of a present verb form.
pub fn past_of(word: &str) -> Option<String> {
    if let Some(v) = lookup(AUX_PAST, word) {
        return Some(v.to_string());
    }
    main_verb(word).map(|(base, _)| {
        lookup(IRREGULAR_PAST, base)
            .map(str::to_string)
            .unwrap_or_else(|| regular_past(base))
    })
}
