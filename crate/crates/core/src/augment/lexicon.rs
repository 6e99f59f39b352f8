//! Directional phrase lexicon and the lexical remapping pass.
//!
//! Phrases are grouped into families of four (one per quadrant) that share a
//! surface style, e.g. `in front of me / on my right / behind me / on my left`.
//! Remapping swaps a phrase for the family member of the permuted quadrant,
//! which keeps the rewrite a bijection on text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::AugmentError;
use crate::model::Quadrant;

/// One phrase per quadrant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseFamily {
    pub front: String,
    pub right: String,
    pub back: String,
    pub left: String,
}

impl PhraseFamily {
    pub fn new(front: &str, right: &str, back: &str, left: &str) -> Self {
        Self {
            front: front.into(),
            right: right.into(),
            back: back.into(),
            left: left.into(),
        }
    }

    pub fn get(&self, q: Quadrant) -> &str {
        match q {
            Quadrant::Front => &self.front,
            Quadrant::Right => &self.right,
            Quadrant::Back => &self.back,
            Quadrant::Left => &self.left,
        }
    }
}

/// On-disk lexicon layout (TOML or JSON).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconSpec {
    #[serde(rename = "family")]
    pub families: Vec<PhraseFamily>,
    /// Single-word answers for "which direction" questions.
    pub answer: PhraseFamily,
    #[serde(default = "default_facing")]
    pub facing: Vec<String>,
}

fn default_facing() -> Vec<String> {
    vec!["facing".into()]
}

/// Words that signal a direction; a hit outside every known phrase is
/// reported as uncovered.
const DIRECTION_CUES: [&str; 8] = ["left", "right", "behind", "front", "ahead", "o'clock", "oclock", "clockwise"];

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalLexicon {
    /// phrase (lowercase, single-spaced) → (family index, quadrant)
    term_map: BTreeMap<String, (usize, Quadrant)>,
    families: Vec<PhraseFamily>,
    answer: PhraseFamily,
    facing: Vec<String>,
    /// phrase token lists, longest first
    patterns: Vec<(Vec<String>, usize, Quadrant)>,
}

/// A located directional phrase. Offsets are byte offsets into the text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseHit {
    pub start: usize,
    pub end: usize,
    pub family: usize,
    pub quadrant: Quadrant,
}

/// A word with its byte span in the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub start: usize,
    pub end: usize,
    pub norm: String,
}

/// Splits text into lowercase word tokens, keeping apostrophes inside words.
pub(crate) fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        let is_word = c.is_alphanumeric() || c == '\'';
        match (is_word, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                tokens.push(Token {
                    start: s,
                    end: i,
                    norm: text[s..i].to_lowercase(),
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            start: s,
            end: text.len(),
            norm: text[s..].to_lowercase(),
        });
    }
    tokens
}

fn words(phrase: &str) -> Vec<String> {
    tokenize(phrase).into_iter().map(|t| t.norm).collect()
}

impl DirectionalLexicon {
    pub fn from_spec(spec: LexiconSpec) -> Result<Self, AugmentError> {
        let mut term_map = BTreeMap::new();
        let mut patterns = Vec::new();
        for (fi, fam) in spec.families.iter().enumerate() {
            for q in Quadrant::ALL {
                let w = words(fam.get(q));
                if w.is_empty() {
                    return Err(AugmentError::Lexicon(format!("family {fi} has an empty {q} phrase")));
                }
                let key = w.join(" ");
                if let Some((_, prev)) = term_map.insert(key.clone(), (fi, q)) {
                    if prev != q {
                        return Err(AugmentError::Lexicon(format!(
                            "phrase {key:?} maps to both {prev} and {q}"
                        )));
                    }
                    return Err(AugmentError::Lexicon(format!("phrase {key:?} listed twice")));
                }
                patterns.push((w, fi, q));
            }
        }
        patterns.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(Self {
            term_map,
            families: spec.families,
            answer: spec.answer,
            facing: spec.facing.iter().map(|f| words(f).join(" ")).collect(),
            patterns,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, AugmentError> {
        let spec: LexiconSpec = toml::from_str(text).map_err(|e| AugmentError::Lexicon(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn from_json(text: &str) -> Result<Self, AugmentError> {
        let spec: LexiconSpec = serde_json::from_str(text).map_err(|e| AugmentError::Lexicon(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn spec(&self) -> LexiconSpec {
        LexiconSpec {
            families: self.families.clone(),
            answer: self.answer.clone(),
            facing: self.facing.clone(),
        }
    }

    pub fn quadrant_of(&self, phrase: &str) -> Option<Quadrant> {
        self.term_map.get(&words(phrase).join(" ")).map(|(_, q)| *q)
    }

    /// The phrase of `family` naming quadrant `q`.
    pub fn phrase(&self, family: usize, q: Quadrant) -> &str {
        self.families[family].get(q)
    }

    /// First family's phrase for `q`.
    pub fn canonical(&self, q: Quadrant) -> &str {
        self.phrase(0, q)
    }

    pub fn answer_word(&self, q: Quadrant) -> &str {
        self.answer.get(q)
    }

    /// Quadrant named by a one-word answer such as "left" or "behind".
    pub fn quadrant_of_answer(&self, answer: &str) -> Option<Quadrant> {
        let norm = crate::metrics::normalize_answer(answer);
        Quadrant::ALL.into_iter().find(|q| norm == self.answer.get(*q))
    }

    pub fn facing_verbs(&self) -> &[String] {
        &self.facing
    }

    /// All non-overlapping phrase hits, scanning left to right and preferring
    /// the longest phrase at each position.
    pub fn find_phrases(&self, text: &str) -> Vec<PhraseHit> {
        let tokens = tokenize(text);
        let mut hits = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let found = self.patterns.iter().find(|(pat, _, _)| {
                i + pat.len() <= tokens.len() && pat.iter().zip(&tokens[i..]).all(|(p, t)| *p == t.norm)
            });
            match found {
                Some((pat, fi, q)) => {
                    hits.push(PhraseHit {
                        start: tokens[i].start,
                        end: tokens[i + pat.len() - 1].end,
                        family: *fi,
                        quadrant: *q,
                    });
                    i += pat.len();
                }
                None => i += 1,
            }
        }
        hits
    }

    /// Direction cue words that sit outside every recognized phrase, each with
    /// up to three words of leading context.
    pub fn uncovered_phrases(&self, text: &str) -> Vec<String> {
        let hits = self.find_phrases(text);
        let tokens = tokenize(text);
        let mut out = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            let covered = hits.iter().any(|h| tok.start >= h.start && tok.end <= h.end);
            if covered || !DIRECTION_CUES.contains(&tok.norm.as_str()) {
                continue;
            }
            let from = tokens[i.saturating_sub(3)..i]
                .iter()
                .rev()
                .take_while(|t| !hits.iter().any(|h| t.start >= h.start && t.end <= h.end))
                .last()
                .map_or(tok.start, |t| t.start);
            out.push(text[from..tok.end].to_string());
        }
        out
    }

    /// Replaces each directional phrase with its family member for the
    /// quadrant an observer turned `quarter_turns` × 90° counterclockwise would
    /// use. Text outside the phrases is untouched.
    pub fn remap_quarter_turns(&self, text: &str, quarter_turns: u32) -> Result<String, AugmentError> {
        let uncovered = self.uncovered_phrases(text);
        if !uncovered.is_empty() {
            return Err(AugmentError::UncoveredPhrase(uncovered));
        }
        let mut out = String::with_capacity(text.len());
        let mut cursor = 0;
        for hit in self.find_phrases(text) {
            out.push_str(&text[cursor..hit.start]);
            let replacement = self.phrase(hit.family, hit.quadrant.after_quarter_turns(quarter_turns));
            out.push_str(&match_case(&text[hit.start..hit.end], replacement));
            cursor = hit.end;
        }
        out.push_str(&text[cursor..]);
        Ok(out)
    }
}

/// Capitalizes `replacement` when `original` starts with an uppercase letter.
pub(crate) fn match_case(original: &str, replacement: &str) -> String {
    let upper = original.chars().next().is_some_and(char::is_uppercase);
    if !upper {
        return replacement.to_string();
    }
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

impl Default for DirectionalLexicon {
    fn default() -> Self {
        let spec = LexiconSpec {
            families: vec![
                PhraseFamily::new("in front of me", "on my right", "behind me", "on my left"),
                PhraseFamily::new("ahead of me", "to my right", "at my back", "to my left"),
                PhraseFamily::new("to my front", "to the right of me", "to my rear", "to the left of me"),
                PhraseFamily::new("in front of you", "on your right", "behind you", "on your left"),
                PhraseFamily::new("ahead of you", "to your right", "at your back", "to your left"),
            ],
            answer: PhraseFamily::new("front", "right", "behind", "left"),
            facing: default_facing(),
        };
        Self::from_spec(spec).expect("built-in lexicon is consistent")
    }
}
