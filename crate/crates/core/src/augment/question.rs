//! Small rule-based parser for situation and question text.
//!
//! Two jobs: turn a machine-checkable question (distance, direction, counting,
//! existence) into an intent the geometry oracle can answer, and pull the
//! object mentions out of situation text so they can be re-grounded after a
//! rotation.

use std::fmt;

use crate::augment::lexicon::{tokenize, DirectionalLexicon, PhraseHit, Token};
use crate::error::GeometryError;
use crate::geometry;
use crate::model::{ObserverPose, Quadrant, Scene, VrsType};

const DETERMINERS: [&str; 6] = ["a", "an", "the", "any", "some", "my"];

/// Words that end a noun phrase.
const NOUN_STOPS: [&str; 22] = [
    "are", "is", "do", "does", "can", "could", "there", "in", "on", "to", "behind", "at", "near", "around", "that",
    "which", "i", "you", "me", "from", "of", "with",
];

/// Words that never count as an object mention by themselves.
const FILLER: [&str; 58] = [
    "i", "am", "i'm", "is", "are", "was", "were", "be", "there", "here", "a", "an", "the", "my", "me", "you", "your",
    "some", "of", "to", "on", "in", "at", "it", "its", "this", "that", "these", "those", "what", "which", "how",
    "many", "much", "do", "does", "can", "could", "see", "have", "has", "standing", "sitting", "stand", "sit",
    "located", "object", "objects", "thing", "things", "something", "right", "now", "just", "color", "colour",
    "kind", "turn",
];

const NEAREST_CUES: [&str; 3] = ["closest", "nearest", "close"];
const FARTHEST_CUES: [&str; 3] = ["farthest", "furthest", "far"];

const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

/// Counting answers are spelled out up to twenty.
pub fn number_answer(n: usize) -> String {
    NUMBER_WORDS.get(n).map_or_else(|| n.to_string(), |w| w.to_string())
}

/// What a machine-checkable question asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuestionIntent {
    /// "What is on my right?"
    ObjectIn { quadrant: Quadrant, label: Option<String> },
    /// "Which direction is the door?"
    DirectionOf { label: String },
    /// "What is the closest object on my left?"
    Extreme {
        farthest: bool,
        quadrant: Option<Quadrant>,
        label: Option<String>,
    },
    /// "How many chairs are behind me?"
    Count { label: String, quadrant: Option<Quadrant> },
    /// "Is there a sofa on my left?"
    Exists { label: String, quadrant: Option<Quadrant> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError(pub String);

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cannot parse question: {}", self.0)
    }
}

impl std::error::Error for ParseError {}

fn plural(word: &str) -> Vec<String> {
    let mut forms = vec![word.to_string(), format!("{word}s"), format!("{word}es")];
    if let Some(stem) = word.strip_suffix('y') {
        forms.push(format!("{stem}ies"));
    }
    forms
}

fn singular(word: &str) -> String {
    if let Some(stem) = word.strip_suffix("ies") {
        format!("{stem}y")
    } else if let Some(stem) = word.strip_suffix("ches").or_else(|| word.strip_suffix("shes")) {
        format!("{}{}", stem, &word[stem.len()..stem.len() + 2])
    } else if word.ends_with("ss") {
        word.to_string()
    } else if let Some(stem) = word.strip_suffix('s') {
        stem.to_string()
    } else {
        word.to_string()
    }
}

/// Surface token sequences that name `label` (singular and plural of the head noun).
fn label_forms(label: &str) -> Vec<Vec<String>> {
    let words: Vec<String> = tokenize(label).into_iter().map(|t| t.norm).collect();
    let Some((head, rest)) = words.split_last() else {
        return Vec::new();
    };
    plural(head)
        .into_iter()
        .map(|h| {
            let mut w = rest.to_vec();
            w.push(h);
            w
        })
        .collect()
}

/// A scene label found in text, as a token index range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LabelHit {
    pub first: usize,
    pub last: usize,
    pub label: String,
}

/// Non-overlapping scene-label occurrences, longest label first at each position.
pub(crate) fn find_labels(tokens: &[Token], scene: &Scene) -> Vec<LabelHit> {
    let mut forms: Vec<(Vec<String>, String)> = scene
        .labels()
        .into_iter()
        .flat_map(|l| label_forms(l).into_iter().map(move |f| (f, l.to_string())))
        .collect();
    forms.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
    let mut hits = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let found = forms.iter().find(|(f, _)| {
            i + f.len() <= tokens.len() && f.iter().zip(&tokens[i..]).all(|(w, t)| *w == t.norm)
        });
        match found {
            Some((f, label)) => {
                hits.push(LabelHit {
                    first: i,
                    last: i + f.len() - 1,
                    label: label.clone(),
                });
                i += f.len();
            }
            None => i += 1,
        }
    }
    hits
}

fn token_range_of(hit: &PhraseHit, tokens: &[Token]) -> (usize, usize) {
    let first = tokens.iter().position(|t| t.start == hit.start).unwrap_or(0);
    let last = tokens.iter().rposition(|t| t.end == hit.end).unwrap_or(first);
    (first, last)
}

/// Noun phrase following `cue_end`, stopped by a stop word, a directional phrase or the end.
fn noun_after(tokens: &[Token], cue_end: usize, phrase_starts: &[usize]) -> Vec<String> {
    let mut i = cue_end;
    while i < tokens.len() && DETERMINERS.contains(&tokens[i].norm.as_str()) {
        i += 1;
    }
    let mut noun = Vec::new();
    while i < tokens.len() && !NOUN_STOPS.contains(&tokens[i].norm.as_str()) && !phrase_starts.contains(&i) {
        noun.push(tokens[i].norm.clone());
        i += 1;
    }
    noun
}

/// Maps a free noun phrase to a scene label when one matches, otherwise to a
/// singularized form (which will simply match nothing).
fn resolve_noun(noun: &[String], scene: &Scene) -> Option<String> {
    if noun.is_empty() {
        return None;
    }
    for label in scene.labels() {
        if label_forms(label).iter().any(|f| f.as_slice() == noun) {
            return Some(label.to_string());
        }
    }
    let mut words = noun.to_vec();
    let head = words.pop()?;
    words.push(singular(&head));
    Some(words.join(" "))
}

fn find_cue(tokens: &[Token], cue: &[&str]) -> Option<usize> {
    tokens
        .windows(cue.len())
        .position(|w| w.iter().zip(cue).all(|(t, c)| t.norm == *c))
        .map(|p| p + cue.len())
}

pub fn parse_question(
    question: &str,
    vrs_type: VrsType,
    lexicon: &DirectionalLexicon,
    scene: &Scene,
) -> Result<QuestionIntent, ParseError> {
    let tokens = tokenize(question);
    let hits = lexicon.find_phrases(question);
    let quadrant = hits.first().map(|h| h.quadrant);
    let phrase_starts: Vec<usize> = hits.iter().map(|h| token_range_of(h, &tokens).0).collect();
    let labels = find_labels(&tokens, scene);
    let first_label = labels.first().map(|l| l.label.clone());
    let has = |cues: &[&str]| tokens.iter().any(|t| cues.contains(&t.norm.as_str()));

    match vrs_type {
        VrsType::Distance => {
            let farthest = if has(&FARTHEST_CUES) {
                true
            } else if has(&NEAREST_CUES) {
                false
            } else {
                return Err(ParseError("distance question without nearest/farthest cue".into()));
            };
            Ok(QuestionIntent::Extreme {
                farthest,
                quadrant,
                label: first_label,
            })
        }
        VrsType::Direction => match (quadrant, first_label) {
            (Some(quadrant), label) => Ok(QuestionIntent::ObjectIn { quadrant, label }),
            (None, Some(label)) => Ok(QuestionIntent::DirectionOf { label }),
            (None, None) => Err(ParseError("direction question names neither a direction nor an object".into())),
        },
        VrsType::Counting => {
            let end = find_cue(&tokens, &["how", "many"])
                .ok_or_else(|| ParseError("counting question without 'how many'".into()))?;
            let noun = noun_after(&tokens, end, &phrase_starts);
            let label = resolve_noun(&noun, scene).ok_or_else(|| ParseError("no object after 'how many'".into()))?;
            Ok(QuestionIntent::Count { label, quadrant })
        }
        VrsType::Existence => {
            let end = find_cue(&tokens, &["is", "there"])
                .or_else(|| find_cue(&tokens, &["are", "there"]))
                .or_else(|| find_cue(&tokens, &["do", "i", "have"]))
                .ok_or_else(|| ParseError("existence question without 'is there' / 'are there'".into()))?;
            let noun = noun_after(&tokens, end, &phrase_starts);
            let label = resolve_noun(&noun, scene).ok_or_else(|| ParseError("no object after 'is there'".into()))?;
            Ok(QuestionIntent::Exists { label, quadrant })
        }
    }
}

/// Ground-truth answer for an intent at the given pose.
pub fn answer_intent(
    intent: &QuestionIntent,
    scene: &Scene,
    pose: &ObserverPose,
    lexicon: &DirectionalLexicon,
) -> Result<String, GeometryError> {
    match intent {
        QuestionIntent::ObjectIn { quadrant, label } => {
            geometry::nearest_object(scene, pose, Some(*quadrant), label.as_deref()).map(|o| o.label.clone())
        }
        QuestionIntent::DirectionOf { label } => {
            let obj = geometry::nearest_object(scene, pose, None, Some(label))?;
            let q = geometry::classify_quadrant(obj, pose)?;
            Ok(lexicon.answer_word(q).to_string())
        }
        QuestionIntent::Extreme {
            farthest,
            quadrant,
            label,
        } => {
            let obj = if *farthest {
                geometry::farthest_object(scene, pose, *quadrant, label.as_deref())?
            } else {
                geometry::nearest_object(scene, pose, *quadrant, label.as_deref())?
            };
            Ok(obj.label.clone())
        }
        QuestionIntent::Count { label, quadrant } => Ok(number_answer(match quadrant {
            Some(q) => geometry::count_in_quadrant(scene, pose, *q, label),
            None => geometry::count_label(scene, label),
        })),
        QuestionIntent::Exists { label, quadrant } => {
            let present = match quadrant {
                Some(q) => geometry::exists_in_quadrant(scene, pose, *q, label),
                None => geometry::count_label(scene, label) > 0,
            };
            Ok(if present { "yes" } else { "no" }.to_string())
        }
    }
}

/// An object placed in an egocentric quadrant by the text, e.g. "the table is behind me".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    /// Scene label the mention resolved to; `None` when the text names
    /// something the scene does not contain.
    pub label: Option<String>,
    pub text: String,
    pub quadrant: Quadrant,
}

/// "facing a trash can": the object the observer looks at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FacingClause {
    /// Byte span of the determiner + noun phrase being faced.
    pub start: usize,
    pub end: usize,
    pub determiner: Option<String>,
    pub label: Option<String>,
    pub text: String,
}

pub fn find_facing(text: &str, lexicon: &DirectionalLexicon, scene: &Scene) -> Vec<FacingClause> {
    let tokens = tokenize(text);
    let labels = find_labels(&tokens, scene);
    let verbs: Vec<Vec<String>> = lexicon
        .facing_verbs()
        .iter()
        .map(|v| tokenize(v).into_iter().map(|t| t.norm).collect())
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let verb = verbs.iter().find(|v| {
            !v.is_empty() && i + v.len() <= tokens.len() && v.iter().zip(&tokens[i..]).all(|(w, t)| *w == t.norm)
        });
        let Some(verb) = verb else {
            i += 1;
            continue;
        };
        let mut j = i + verb.len();
        let determiner = tokens
            .get(j)
            .filter(|t| ["a", "an", "the"].contains(&t.norm.as_str()))
            .map(|t| t.norm.clone());
        let np_start = j;
        if determiner.is_some() {
            j += 1;
        }
        if let Some(hit) = labels.iter().find(|l| l.first == j) {
            out.push(FacingClause {
                start: tokens[np_start].start,
                end: tokens[hit.last].end,
                determiner,
                label: Some(hit.label.clone()),
                text: text[tokens[j].start..tokens[hit.last].end].to_string(),
            });
            i = hit.last + 1;
        } else {
            let noun = noun_after(&tokens, j, &[]);
            if noun.is_empty() || j >= tokens.len() {
                i = j;
                continue;
            }
            let last = j + noun.len() - 1;
            out.push(FacingClause {
                start: tokens[np_start].start,
                end: tokens[last].end,
                determiner,
                label: None,
                text: text[tokens[j].start..tokens[last].end].to_string(),
            });
            i = last + 1;
        }
    }
    out
}

const CLAUSE_WORDS: [&str; 6] = ["and", "but", "while", "with", "where", "so"];

/// Token index ranges of clauses, split at punctuation and conjunctions.
fn clauses(text: &str, tokens: &[Token]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..tokens.len() {
        let splits_before = i > 0 && text[tokens[i - 1].end..tokens[i].start].chars().any(|c| ".,;!?:".contains(c));
        if splits_before && start < i {
            out.push((start, i));
            start = i;
        }
        if CLAUSE_WORDS.contains(&tokens[i].norm.as_str()) {
            if start < i {
                out.push((start, i));
            }
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push((start, tokens.len()));
    }
    out
}

/// Objects placed in quadrants by directional phrases. Objects inside a
/// facing clause are excluded.
pub fn extract_mentions(text: &str, lexicon: &DirectionalLexicon, scene: &Scene) -> Vec<Mention> {
    let tokens = tokenize(text);
    let hits = lexicon.find_phrases(text);
    let facing = find_facing(text, lexicon, scene);
    let in_facing = |t: &Token| facing.iter().any(|f| t.start >= f.start && t.end <= f.end);
    let labels: Vec<LabelHit> = find_labels(&tokens, scene)
        .into_iter()
        .filter(|l| !in_facing(&tokens[l.first]))
        .collect();
    let verbs: Vec<&str> = lexicon.facing_verbs().iter().map(String::as_str).collect();
    let mut mentions = Vec::new();
    for (c0, c1) in clauses(text, &tokens) {
        for hit in &hits {
            let (h0, h1) = token_range_of(hit, &tokens);
            if h0 < c0 || h0 >= c1 {
                continue;
            }
            let nearest = labels
                .iter()
                .filter(|l| l.first >= c0 && l.last < c1)
                .min_by_key(|l| if l.last < h0 { h0 - l.last } else { l.first.saturating_sub(h1) });
            if let Some(l) = nearest {
                mentions.push(Mention {
                    label: Some(l.label.clone()),
                    text: text[tokens[l.first].start..tokens[l.last].end].to_string(),
                    quadrant: hit.quadrant,
                });
                continue;
            }
            let content: Vec<&str> = tokens[c0..c1]
                .iter()
                .enumerate()
                .filter(|(k, t)| {
                    let idx = c0 + k;
                    !(h0..=h1).contains(&idx)
                        && !in_facing(t)
                        && !FILLER.contains(&t.norm.as_str())
                        && !verbs.contains(&t.norm.as_str())
                        && !hits.iter().any(|h| t.start >= h.start && t.end <= h.end)
                })
                .map(|(_, t)| t.norm.as_str())
                .collect();
            if !content.is_empty() {
                mentions.push(Mention {
                    label: None,
                    text: content.join(" "),
                    quadrant: hit.quadrant,
                });
            }
        }
    }
    mentions
}
