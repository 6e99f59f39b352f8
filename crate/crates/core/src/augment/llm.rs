//! Optional LLM-assisted rewriting of rotated situations.
//!
//! The model only proposes text. Every candidate goes through the same
//! geometric validation as the deterministic rewrite, and any transport or
//! parsing failure falls back to the deterministic rewrite.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::augment::question::{extract_mentions, find_facing};
use crate::augment::{rotate_record, DirectionalLexicon, RotatedVariant, Validity};
use crate::error::{AugmentError, LlmError};
use crate::geometry;
use crate::model::{QARecord, Quadrant, Scene};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

/// Anything that can answer a chat-completion request.
pub trait ChatClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

pub const SYSTEM_INSTRUCTION: &str = "You rewrite situation descriptions for a situated 3D question answering \
benchmark. The agent stays at the same position and turns in place. Objects in the room do not move. Rewrite the \
situation so that it describes what the agent sees after the turn: update which object the agent is facing and \
update every directional phrase (in front of me, on my right, behind me, on my left). Keep the question's intent \
and do not invent objects. Reply with JSON: {\"situation\": \"...\"}.";

/// In-context examples: (user request, assistant reply).
pub const EXAMPLES: [(&str, &str); 2] = [
    (
        "Scene objects relative to the original view:\n- trash can: front, 2.0 m\n- whiteboard: right, 2.0 m\n- table: back, 2.0 m\n- door: left, 2.0 m\n\
Original situation: I am facing a trash can and the table is behind me.\nQuestion: What is on my right?\n\
Rotation: turn 90 degrees counterclockwise.",
        "{\"situation\": \"I am facing a door and the table is on my left.\"}",
    ),
    (
        "Scene objects relative to the original view:\n- sink: front, 1.5 m\n- bed: back, 3.0 m\n\
Original situation: I am facing a sink with the bed behind me.\nQuestion: How many chairs are on my left?\n\
Rotation: turn 180 degrees counterclockwise.",
        "{\"situation\": \"I am facing a bed with the bed in front of me.\"}",
    ),
];

/// Placeholders: {scene_summary}, {situation}, {question}, {rotation_deg}.
pub const DEFAULT_ROTATION_TEMPLATE: &str = "Scene objects relative to the original view:\n{scene_summary}\n\
Original situation: {situation}\nQuestion: {question}\nRotation: turn {rotation_deg} degrees counterclockwise.";

/// One line per object: label, quadrant and ground distance from the seed pose.
pub fn scene_summary(seed: &QARecord, scene: &Scene) -> String {
    let mut lines: Vec<(f64, String)> = scene
        .objects
        .iter()
        .filter_map(|o| {
            let q = geometry::classify_quadrant(o, &seed.pose).ok()?;
            let d = o.center.ground_distance(seed.pose.position);
            Some((d, format!("- {}: {}, {:.1} m", o.label, q, d)))
        })
        .collect();
    lines.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    lines.into_iter().map(|(_, l)| l).collect::<Vec<_>>().join("\n")
}

pub fn build_rotation_prompt(seed: &QARecord, deg: u32, scene: &Scene, template: &str) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::new("system", SYSTEM_INSTRUCTION)];
    for (user, assistant) in EXAMPLES {
        messages.push(ChatMessage::new("user", user));
        messages.push(ChatMessage::new("assistant", assistant));
    }
    let body = template
        .replace("{scene_summary}", &scene_summary(seed, scene))
        .replace("{situation}", &seed.situation)
        .replace("{question}", &seed.question)
        .replace("{rotation_deg}", &deg.to_string());
    messages.push(ChatMessage::new("user", body));
    messages
}

/// Pulls the situation text out of a model reply: a JSON object with a
/// `situation` field (optionally inside a code fence) or a bare sentence.
pub fn parse_rewrite_response(reply: &str) -> Result<String, LlmError> {
    let trimmed = reply.trim();
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .map(str::trim)
        .unwrap_or(trimmed);
    if unfenced.starts_with('{') {
        let value: serde_json::Value =
            serde_json::from_str(unfenced).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        return value
            .get("situation")
            .and_then(|s| s.as_str())
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| LlmError::MalformedResponse("missing 'situation' string".into()));
    }
    if unfenced.is_empty() || unfenced.contains('\n') {
        return Err(LlmError::MalformedResponse("expected a single-line situation".into()));
    }
    Ok(unfenced.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteSource {
    Llm,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewriteOutcome {
    pub text: String,
    pub source: RewriteSource,
    pub error: Option<LlmError>,
}

/// Candidate rotated situation text. Without a client, or on any client
/// error, the deterministic rewrite is returned instead.
pub fn llm_rewrite(
    seed: &QARecord,
    deg: u32,
    scene: &Scene,
    lexicon: &DirectionalLexicon,
    client: Option<&dyn ChatClient>,
    template: &str,
) -> Result<RewriteOutcome, AugmentError> {
    let fallback = |error: Option<LlmError>| -> Result<RewriteOutcome, AugmentError> {
        Ok(RewriteOutcome {
            text: rotate_record(seed, deg, scene, lexicon)?.record.situation,
            source: RewriteSource::Fallback,
            error,
        })
    };
    let Some(client) = client else {
        return fallback(None);
    };
    let reply = client
        .complete(&build_rotation_prompt(seed, deg, scene, template))
        .and_then(|r| parse_rewrite_response(&r));
    match reply {
        Ok(text) => Ok(RewriteOutcome {
            text,
            source: RewriteSource::Llm,
            error: None,
        }),
        Err(e) => fallback(Some(e)),
    }
}

/// Checks an externally produced situation for the `deg` variant of `seed`.
///
/// The candidate is kept when every object it places is where the scene says
/// it is. A wrong facing object is replaced by the oracle's choice
/// (AnswerCorrected); mentions that cannot be grounded make the variant Invalid.
pub fn validate_candidate(
    seed: &QARecord,
    deg: u32,
    candidate: &str,
    scene: &Scene,
    lexicon: &DirectionalLexicon,
) -> Result<RotatedVariant, AugmentError> {
    let mut variant = rotate_record(seed, deg, scene, lexicon)?;
    if candidate == variant.record.situation {
        return Ok(variant);
    }
    let pose = variant.record.pose;
    let mut notes = Vec::new();
    let mut invalid = false;
    let mut wrong_facing = false;

    let uncovered = lexicon.uncovered_phrases(candidate);
    if !uncovered.is_empty() {
        invalid = true;
        variant.needs_review = true;
        notes.push(format!("candidate has uncovered directional phrases {uncovered:?}"));
    }
    let front = geometry::nearest_object(scene, &pose, Some(Quadrant::Front), None).ok();
    for clause in find_facing(candidate, lexicon, scene) {
        match clause.label {
            None => {
                invalid = true;
                notes.push(format!("candidate faces '{}', which is not in the scene", clause.text));
            }
            Some(label) => {
                if geometry::count_in_quadrant(scene, &pose, Quadrant::Front, &label) == 0 {
                    wrong_facing = true;
                    notes.push(format!(
                        "candidate facing '{label}' replaced by oracle '{}'",
                        front.map_or("nothing", |o| o.label.as_str())
                    ));
                }
            }
        }
    }
    for m in extract_mentions(candidate, lexicon, scene) {
        let grounded = m
            .label
            .as_deref()
            .is_some_and(|l| geometry::count_in_quadrant(scene, &pose, m.quadrant, l) > 0);
        if !grounded {
            invalid = true;
            notes.push(format!("candidate places '{}' {} but the scene does not", m.text, m.quadrant));
        }
    }

    if invalid {
        variant.validity = Validity::Invalid;
    } else if wrong_facing {
        if variant.validity == Validity::Valid {
            variant.validity = Validity::AnswerCorrected;
        }
    } else {
        variant.record.situation = candidate.to_string();
    }
    if !notes.is_empty() {
        if !variant.validation_note.is_empty() {
            notes.insert(0, variant.validation_note.clone());
        }
        variant.validation_note = notes.join("; ");
    }
    Ok(variant)
}

/// Rewrites many (seed, rotation) jobs with at most `max_in_flight` client
/// calls running at once. Output order matches `jobs`.
pub fn rewrite_batch(
    jobs: &[(&QARecord, u32, &Scene)],
    lexicon: &DirectionalLexicon,
    client: Option<&dyn ChatClient>,
    template: &str,
    max_in_flight: usize,
) -> Vec<Result<RewriteOutcome, AugmentError>> {
    let workers = max_in_flight.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<Result<RewriteOutcome, AugmentError>>> = vec![None; jobs.len()];
    let chunks: Vec<Vec<(usize, Result<RewriteOutcome, AugmentError>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some((seed, deg, scene)) = jobs.get(i) else {
                            break;
                        };
                        done.push((i, llm_rewrite(seed, *deg, scene, lexicon, client, template)));
                    }
                    done
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rewrite worker panicked")).collect()
    });
    for (i, r) in chunks.into_iter().flatten() {
        results[i] = Some(r);
    }
    results.into_iter().map(|r| r.expect("every job ran")).collect()
}
