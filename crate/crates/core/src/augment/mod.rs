//! Viewpoint-rotation augmentation.
//!
//! A seed record is turned into three variants by turning the observer 90°,
//! 180° and 270° counterclockwise (seen from above) in place. Directional
//! phrases in the situation are remapped so they still describe the same
//! world-fixed objects, the "facing" object is re-grounded from the scene, and
//! answers to geometry-checkable questions are recomputed by the oracle.
//!
//! The question text of a geometry-checkable question is kept verbatim: its
//! directional phrase is a query slot ("what is on my right?"), so the answer
//! moves with the observer. For every other question the phrases are
//! referring expressions and are remapped like the situation.

pub mod lexicon;
pub mod llm;
pub mod question;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

pub use lexicon::{DirectionalLexicon, LexiconSpec, PhraseFamily};
pub use question::{answer_intent, parse_question, QuestionIntent};

use crate::error::AugmentError;
use crate::geometry;
use crate::metrics::normalize_answer;
use crate::model::{ObserverPose, QARecord, Quadrant, Scene};
use question::{extract_mentions, find_facing};

pub const ROTATIONS: [u32; 3] = [90, 180, 270];

fn quarter_turns(deg: u32) -> Result<u32, AugmentError> {
    match deg {
        90 | 180 | 270 => Ok(deg / 90),
        other => Err(AugmentError::InvalidAngle(other)),
    }
}

/// Turns the observer counterclockwise by `deg` ∈ {90, 180, 270}; position is unchanged.
pub fn rotate_pose(pose: &ObserverPose, deg: u32) -> Result<ObserverPose, AugmentError> {
    let quarters = quarter_turns(deg)?;
    Ok(turn(pose, quarters))
}

fn turn(pose: &ObserverPose, quarters: u32) -> ObserverPose {
    if quarters.is_multiple_of(4) {
        return *pose;
    }
    ObserverPose::new(pose.position, pose.heading_rad + quarters as f64 * FRAC_PI_2)
        .expect("finite heading stays finite")
}

/// Rewrites every directional phrase for an observer turned `deg`
/// counterclockwise. Non-directional text is byte-identical.
pub fn remap_directional_terms(text: &str, deg: u32, lexicon: &DirectionalLexicon) -> Result<String, AugmentError> {
    lexicon.remap_quarter_turns(text, quarter_turns(deg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    AnswerCorrected,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotatedVariant {
    pub record: QARecord,
    pub validity: Validity,
    pub validation_note: String,
    /// Set when no oracle could check the record, or when text was not fully
    /// covered by the lexicon.
    pub needs_review: bool,
}

struct Verdict {
    validity: Validity,
    notes: Vec<String>,
    needs_review: bool,
}

impl Verdict {
    fn new() -> Self {
        Self {
            validity: Validity::Valid,
            notes: Vec::new(),
            needs_review: false,
        }
    }

    fn invalid(&mut self, note: String) {
        self.validity = Validity::Invalid;
        self.notes.push(note);
    }

    fn corrected(&mut self, note: String) {
        if self.validity == Validity::Valid {
            self.validity = Validity::AnswerCorrected;
        }
        self.notes.push(note);
    }
}

fn article_for(label: &str, original: Option<&str>) -> Option<String> {
    match original {
        Some("a") | Some("an") => Some(
            if label.starts_with(['a', 'e', 'i', 'o', 'u']) {
                "an"
            } else {
                "a"
            }
            .to_string(),
        ),
        other => other.map(str::to_string),
    }
}

/// Rewrites each facing clause to the nearest object in front at `pose`.
/// With `rewrite = false` the clauses are only checked.
fn reground_facing(
    text: &str,
    pose: &ObserverPose,
    scene: &Scene,
    lexicon: &DirectionalLexicon,
    rewrite: bool,
    verdict: &mut Verdict,
) -> String {
    let clauses = find_facing(text, lexicon, scene);
    if clauses.is_empty() {
        return text.to_string();
    }
    let front = geometry::nearest_object(scene, pose, Some(Quadrant::Front), None).ok();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for clause in clauses {
        out.push_str(&text[cursor..clause.start]);
        cursor = clause.end;
        let original = &text[clause.start..clause.end];
        let Some(label) = clause.label.as_deref() else {
            verdict.invalid(format!("facing target '{}' is not in the scene", clause.text));
            out.push_str(original);
            continue;
        };
        if !rewrite {
            if geometry::count_in_quadrant(scene, pose, Quadrant::Front, label) == 0 {
                verdict.invalid(format!("facing target '{label}' is not in front of the observer"));
            }
            out.push_str(original);
            continue;
        }
        match front {
            Some(obj) => {
                let phrase = match article_for(&obj.label, clause.determiner.as_deref()) {
                    Some(det) => format!("{det} {}", obj.label),
                    None => obj.label.clone(),
                };
                out.push_str(&lexicon::match_case(original, &phrase));
            }
            None => {
                verdict.invalid("nothing in front of the rotated observer to face".into());
                out.push_str(original);
            }
        }
    }
    out.push_str(&text[cursor..]);
    out
}

/// Every object the text places in a quadrant must exist there at `pose`.
fn check_mentions(text: &str, pose: &ObserverPose, scene: &Scene, lexicon: &DirectionalLexicon, verdict: &mut Verdict) {
    for m in extract_mentions(text, lexicon, scene) {
        match m.label {
            None => verdict.invalid(format!("'{}' {} cannot be re-grounded in the scene", m.text, m.quadrant)),
            Some(label) => {
                if geometry::count_in_quadrant(scene, pose, m.quadrant, &label) == 0 {
                    verdict.invalid(format!("no {label} {} of the observer", m.quadrant));
                }
            }
        }
    }
}

fn remap_or_flag(text: &str, quarters: u32, lexicon: &DirectionalLexicon, verdict: &mut Verdict) -> String {
    match lexicon.remap_quarter_turns(text, quarters) {
        Ok(t) => t,
        Err(AugmentError::UncoveredPhrase(list)) => {
            verdict.invalid(format!("uncovered directional phrases {list:?}"));
            verdict.needs_review = true;
            text.to_string()
        }
        Err(e) => {
            verdict.invalid(e.to_string());
            text.to_string()
        }
    }
}

pub(crate) fn variant_qid(group_id: &str, rotation_deg: u32) -> String {
    format!("{group_id}_r{rotation_deg}")
}

/// Turns any record (seed or variant) a further `deg` ∈ {0, 90, 180, 270}
/// and validates the result against the scene. `deg = 0` validates in place.
pub fn rotate_record(
    record: &QARecord,
    deg: u32,
    scene: &Scene,
    lexicon: &DirectionalLexicon,
) -> Result<RotatedVariant, AugmentError> {
    if record.scene_id != scene.scene_id {
        return Err(AugmentError::SceneMismatch {
            qid: record.qid.clone(),
            expected: record.scene_id.clone(),
            got: scene.scene_id.clone(),
        });
    }
    let quarters = match deg {
        0 => 0,
        d => quarter_turns(d)?,
    };
    let pose = turn(&record.pose, quarters);
    let rotation_deg = (record.rotation_deg + deg) % 360;
    let mut verdict = Verdict::new();

    let situation = remap_or_flag(&record.situation, quarters, lexicon, &mut verdict);
    let situation = reground_facing(&situation, &pose, scene, lexicon, quarters != 0, &mut verdict);
    check_mentions(&situation, &pose, scene, lexicon, &mut verdict);

    let checkable = record.vrs_type.filter(|_| !record.category.is_subjective());
    let question = match checkable {
        Some(_) => record.question.clone(),
        None => {
            let q = remap_or_flag(&record.question, quarters, lexicon, &mut verdict);
            check_mentions(&q, &pose, scene, lexicon, &mut verdict);
            q
        }
    };

    let textual_answer = match lexicon.quadrant_of_answer(&record.answer) {
        Some(q) => lexicon.answer_word(q.after_quarter_turns(quarters)).to_string(),
        None => record.answer.clone(),
    };
    let answer = match checkable {
        Some(vrs_type) => match parse_question(&question, vrs_type, lexicon, scene) {
            Err(e) => {
                verdict.invalid(e.to_string());
                verdict.needs_review = true;
                textual_answer
            }
            Ok(intent) => match answer_intent(&intent, scene, &pose, lexicon) {
                Err(e) => {
                    verdict.invalid(format!("oracle: {e}"));
                    textual_answer
                }
                Ok(oracle) => {
                    if normalize_answer(&oracle) != normalize_answer(&textual_answer) {
                        verdict.corrected(format!("answer '{textual_answer}' replaced by oracle answer '{oracle}'"));
                    }
                    oracle
                }
            },
        },
        None => {
            verdict.needs_review = true;
            verdict.notes.push(format!("no geometric oracle for {} question; needs human review", record.category));
            textual_answer
        }
    };

    let qid = if deg == 0 {
        record.qid.clone()
    } else {
        variant_qid(&record.group_id, rotation_deg)
    };
    Ok(RotatedVariant {
        record: QARecord {
            qid,
            pose,
            situation,
            question,
            answer,
            rotation_deg,
            ..record.clone()
        },
        validity: verdict.validity,
        validation_note: verdict.notes.join("; "),
        needs_review: verdict.needs_review,
    })
}

fn check_seed(seed: &QARecord, scene: &Scene) -> Result<(), AugmentError> {
    if !seed.is_seed() {
        return Err(AugmentError::NotASeed(seed.qid.clone(), seed.rotation_deg));
    }
    if seed.scene_id != scene.scene_id {
        return Err(AugmentError::SceneMismatch {
            qid: seed.qid.clone(),
            expected: seed.scene_id.clone(),
            got: scene.scene_id.clone(),
        });
    }
    Ok(())
}

/// The three rotated variants (90°, 180°, 270°) of a seed.
pub fn augment_seed(
    seed: &QARecord,
    scene: &Scene,
    lexicon: &DirectionalLexicon,
) -> Result<Vec<RotatedVariant>, AugmentError> {
    check_seed(seed, scene)?;
    ROTATIONS.iter().map(|deg| rotate_record(seed, *deg, scene, lexicon)).collect()
}

/// A seed with its verdict plus its three variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedGroup {
    pub group_id: String,
    pub scene_id: String,
    pub seed: RotatedVariant,
    pub variants: Vec<RotatedVariant>,
}

impl AugmentedGroup {
    pub fn members(&self) -> impl Iterator<Item = &RotatedVariant> {
        std::iter::once(&self.seed).chain(self.variants.iter())
    }

    /// All four records carry a usable answer.
    pub fn is_exportable(&self) -> bool {
        self.variants.len() == 3 && self.members().all(|v| v.validity != Validity::Invalid)
    }

    pub fn needs_review(&self) -> bool {
        self.members().any(|v| v.needs_review)
    }

    pub fn records(&self) -> Vec<QARecord> {
        self.members().map(|v| v.record.clone()).collect()
    }
}

/// Validates the seed in place and builds its variants.
pub fn augment_group(seed: &QARecord, scene: &Scene, lexicon: &DirectionalLexicon) -> Result<AugmentedGroup, AugmentError> {
    check_seed(seed, scene)?;
    let seed_verdict = rotate_record(seed, 0, scene, lexicon)?;
    let variants = augment_seed(seed, scene, lexicon)?;
    Ok(AugmentedGroup {
        group_id: seed.group_id.clone(),
        scene_id: seed.scene_id.clone(),
        seed: seed_verdict,
        variants,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantsReport {
    pub groups: usize,
    pub exportable_groups: usize,
    pub valid: usize,
    pub answer_corrected: usize,
    pub invalid: usize,
    pub needs_review: usize,
    /// Invalid variant counts keyed by rotation.
    pub invalid_by_rotation: BTreeMap<u32, usize>,
}

impl VariantsReport {
    pub fn from_groups<'a>(groups: impl IntoIterator<Item = &'a AugmentedGroup>) -> Self {
        let mut report = VariantsReport::default();
        for g in groups {
            report.groups += 1;
            report.exportable_groups += g.is_exportable() as usize;
            for v in &g.variants {
                match v.validity {
                    Validity::Valid => report.valid += 1,
                    Validity::AnswerCorrected => report.answer_corrected += 1,
                    Validity::Invalid => {
                        report.invalid += 1;
                        *report.invalid_by_rotation.entry(v.record.rotation_deg).or_default() += 1;
                    }
                }
                report.needs_review += v.needs_review as usize;
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{heading_distance, Category, SceneObject, Vec3, VrsType};
    use std::f64::consts::PI;

    fn room() -> Scene {
        let o = |id: &str, label: &str, x: f64, y: f64| {
            SceneObject::new(id, label, Vec3::xyz(x, y, 0.4), Vec3::xyz(0.3, 0.3, 0.4)).unwrap()
        };
        Scene::new(
            "scene0000",
            vec![
                o("o1", "trash can", 2.0, 0.0),
                o("o2", "whiteboard", 0.0, -2.0),
                o("o3", "table", -2.0, 0.0),
                o("o4", "door", 0.0, 2.0),
            ],
        )
        .unwrap()
    }

    fn seed(situation: &str, question: &str, answer: &str, cat: Category, vrs: Option<VrsType>) -> QARecord {
        QARecord {
            qid: "q1".into(),
            scene_id: "scene0000".into(),
            pose: ObserverPose::new(Vec3::ZERO, 0.0).unwrap(),
            situation: situation.into(),
            question: question.into(),
            answer: answer.into(),
            category: cat,
            vrs_type: vrs,
            group_id: "g1".into(),
            rotation_deg: 0,
        }
    }

    #[test]
    fn rotate_pose_examples() {
        let p = ObserverPose::new(Vec3::ZERO, 0.0).unwrap();
        assert!((rotate_pose(&p, 90).unwrap().heading_rad - PI / 2.0).abs() < 1e-15);
        let p = ObserverPose::new(Vec3::ZERO, 1.5 * PI).unwrap();
        assert!((rotate_pose(&p, 180).unwrap().heading_rad - PI / 2.0).abs() < 1e-12);
        assert_eq!(rotate_pose(&p, 45), Err(AugmentError::InvalidAngle(45)));
        let mut q = p;
        for _ in 0..4 {
            q = rotate_pose(&q, 90).unwrap();
        }
        assert!(heading_distance(q.heading_rad, p.heading_rad) < 1e-12);
    }

    #[test]
    fn fig4_right_answer_follows_the_permutation() {
        let lex = DirectionalLexicon::default();
        let s = room();
        let rec = seed(
            "I am facing a trash can and the table is behind me.",
            "What is on my right?",
            "whiteboard",
            Category::SpatialRelation,
            Some(VrsType::Direction),
        );
        let group = augment_group(&rec, &s, &lex).unwrap();
        assert_eq!(group.seed.validity, Validity::Valid);
        // the object now on the right is the one whose seed quadrant q has σ^k(q) = Right
        let seed_quadrant_label = |q: Quadrant| {
            geometry::nearest_object(&s, &rec.pose, Some(q), None).unwrap().label.clone()
        };
        for v in &group.variants {
            let k = v.record.rotation_deg / 90;
            let source = Quadrant::ALL
                .into_iter()
                .find(|q| q.after_quarter_turns(k) == Quadrant::Right)
                .unwrap();
            assert_eq!(v.record.answer, seed_quadrant_label(source));
            assert_eq!(v.validity, Validity::AnswerCorrected);
            assert_eq!(v.record.question, "What is on my right?");
        }
        let r90 = &group.variants[0].record;
        assert_eq!(r90.answer, "trash can");
        assert_eq!(r90.situation, "I am facing a door and the table is on my left.");
        assert_eq!(group.variants[1].record.answer, "door");
        assert_eq!(group.variants[1].record.situation, "I am facing a table and the table is in front of me.");
        assert_eq!(group.variants[2].record.answer, "table");
        assert!(group.is_exportable());
    }

    #[test]
    fn rotation_insensitive_existence_stays_valid() {
        let lex = DirectionalLexicon::default();
        let rec = seed(
            "I am facing a trash can.",
            "Is there a door in this room?",
            "yes",
            Category::Object,
            Some(VrsType::Existence),
        );
        for v in augment_seed(&rec, &room(), &lex).unwrap() {
            assert_eq!(v.validity, Validity::Valid, "{}", v.validation_note);
            assert_eq!(v.record.answer, "yes");
        }
    }

    #[test]
    fn window_frames_cannot_be_rotated() {
        let lex = DirectionalLexicon::default();
        let rec = seed(
            "I am facing a trash can with window frames to my right.",
            "What color are the window frames to my right?",
            "white",
            Category::Color,
            None,
        );
        let variants = augment_seed(&rec, &room(), &lex).unwrap();
        assert!(variants.iter().all(|v| v.validity == Validity::Invalid));
        assert!(variants[0].validation_note.contains("window frames"));
    }

    #[test]
    fn direction_word_answers_are_remapped() {
        let lex = DirectionalLexicon::default();
        let rec = seed(
            "I am facing a trash can.",
            "Which direction is the door?",
            "left",
            Category::Navigation,
            Some(VrsType::Direction),
        );
        let answers: Vec<String> = augment_seed(&rec, &room(), &lex)
            .unwrap()
            .into_iter()
            .map(|v| {
                assert_eq!(v.validity, Validity::Valid);
                v.record.answer
            })
            .collect();
        assert_eq!(answers, ["front", "right", "behind"]);
    }

    #[test]
    fn subjective_categories_go_to_review() {
        let lex = DirectionalLexicon::default();
        let rec = seed(
            "I am facing a trash can and the table is behind me.",
            "Is the table behind me clean?",
            "yes",
            Category::State,
            Some(VrsType::Existence),
        );
        let v = &augment_seed(&rec, &room(), &lex).unwrap()[1];
        assert!(v.needs_review);
        assert_eq!(v.validity, Validity::Valid);
        assert_eq!(v.record.question, "Is the table in front of me clean?");
    }

    #[test]
    fn uncovered_phrase_routes_to_review() {
        let lex = DirectionalLexicon::default();
        let rec = seed(
            "The door is at my 9 o'clock.",
            "Is there a door in this room?",
            "yes",
            Category::Object,
            Some(VrsType::Existence),
        );
        let v = &augment_seed(&rec, &room(), &lex).unwrap()[0];
        assert_eq!(v.validity, Validity::Invalid);
        assert!(v.needs_review);
    }

    #[test]
    fn augment_requires_a_seed() {
        let lex = DirectionalLexicon::default();
        let mut rec = seed("", "Is there a door?", "yes", Category::Object, Some(VrsType::Existence));
        rec.rotation_deg = 90;
        assert!(matches!(augment_seed(&rec, &room(), &lex), Err(AugmentError::NotASeed(..))));
    }

    #[test]
    fn report_counts() {
        let lex = DirectionalLexicon::default();
        let rec = seed(
            "I am facing a trash can.",
            "What is on my right?",
            "whiteboard",
            Category::Object,
            Some(VrsType::Direction),
        );
        let g = augment_group(&rec, &room(), &lex).unwrap();
        let r = VariantsReport::from_groups([&g]);
        assert_eq!(r.groups, 1);
        assert_eq!(r.answer_corrected, 3);
        assert_eq!(r.exportable_groups, 1);
    }
}
