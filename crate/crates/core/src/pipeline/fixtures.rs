//! Synthetic scenes and seed questions for desk-scale runs and tests.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI, TAU};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mock::GeometricOracle;
use crate::augment::{augment_group, AugmentedGroup, DirectionalLexicon};
use crate::geometry::{classify_quadrant, nearest_object};
use crate::model::{Category, ObserverPose, QARecord, Quadrant, Scene, SceneObject, Vec3, VrsType};

/// Labels with regular plurals and no directional words.
pub const LABELS: [&str; 16] = [
    "chair",
    "table",
    "door",
    "window",
    "sofa",
    "lamp",
    "bed",
    "desk",
    "cabinet",
    "trash can",
    "whiteboard",
    "plant",
    "monitor",
    "pillow",
    "towel",
    "printer",
];

/// Minimum angular distance of generated objects from a quadrant boundary.
pub const BOUNDARY_MARGIN_RAD: f64 = 3.0 * PI / 180.0;

/// A square room with one object on each side of an observer at the origin
/// facing +x: trash can ahead, whiteboard right, table behind, door left.
pub fn cross_room() -> Scene {
    let o = |id: &str, label: &str, x: f64, y: f64| {
        SceneObject::new(id, label, Vec3::xyz(x, y, 0.4), Vec3::xyz(0.3, 0.3, 0.4)).expect("finite")
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
    .expect("valid scene")
}

#[allow(clippy::too_many_arguments)]
fn seed_record(
    group: &str,
    scene_id: &str,
    pose: ObserverPose,
    situation: &str,
    question: &str,
    answer: &str,
    category: Category,
    vrs_type: Option<VrsType>,
) -> QARecord {
    QARecord {
        qid: format!("{group}_r0"),
        scene_id: scene_id.to_string(),
        pose,
        situation: situation.to_string(),
        question: question.to_string(),
        answer: answer.to_string(),
        category,
        vrs_type,
        group_id: group.to_string(),
        rotation_deg: 0,
    }
}

/// Hand-written seeds in [`cross_room`], one per question type plus one
/// subjective question.
pub fn cross_room_seeds() -> Vec<QARecord> {
    let pose = ObserverPose::new(Vec3::ZERO, 0.0).expect("finite");
    let s = "scene0000";
    let situation = "I am facing a trash can and the table is behind me.";
    vec![
        seed_record("g_right", s, pose, situation, "What is on my right?", "whiteboard", Category::Object, Some(VrsType::Direction)),
        seed_record("g_door", s, pose, situation, "Which direction is the door?", "left", Category::SpatialRelation, Some(VrsType::Direction)),
        seed_record("g_far", s, pose, situation, "What is the farthest object in front of me?", "trash can", Category::Object, Some(VrsType::Distance)),
        seed_record("g_count", s, pose, situation, "How many tables are behind me?", "one", Category::Number, Some(VrsType::Counting)),
        seed_record("g_exists", s, pose, situation, "Is there a door on my left?", "yes", Category::Object, Some(VrsType::Existence)),
        seed_record("g_state", s, pose, situation, "Is the door on my left open?", "no", Category::State, None),
    ]
}

/// The cross room with its augmented seed groups.
pub fn cross_room_groups() -> (BTreeMap<String, Scene>, Vec<AugmentedGroup>) {
    let scene = cross_room();
    let lexicon = DirectionalLexicon::default();
    let groups = cross_room_seeds()
        .iter()
        .map(|s| augment_group(s, &scene, &lexicon).expect("fixture seeds augment"))
        .collect();
    (BTreeMap::from([(scene.scene_id.clone(), scene)]), groups)
}

fn near_boundary(bearing: f64) -> bool {
    [FRAC_PI_4, 3.0 * FRAC_PI_4, -FRAC_PI_4, -3.0 * FRAC_PI_4]
        .iter()
        .any(|b| (bearing - b).abs() < BOUNDARY_MARGIN_RAD)
}

/// Observer at the origin with a random heading, objects at 1–5 m and never
/// within [`BOUNDARY_MARGIN_RAD`] of a quadrant boundary.
pub fn random_scene(rng: &mut impl Rng, scene_id: &str, n_objects: usize) -> (Scene, ObserverPose) {
    let heading = rng.random_range(0.0..TAU);
    let pose = ObserverPose::new(Vec3::ZERO, heading).expect("finite");
    let objects = (0..n_objects.max(1))
        .map(|i| {
            let bearing = loop {
                let b = rng.random_range(-PI..PI);
                if !near_boundary(b) {
                    break b;
                }
            };
            let r = rng.random_range(1.0..5.0);
            let a = heading + bearing;
            let label = *LABELS.choose(rng).expect("non-empty");
            let half = Vec3::xyz(rng.random_range(0.1..0.6), rng.random_range(0.1..0.6), rng.random_range(0.2..0.8));
            SceneObject::new(format!("o{i}"), label, Vec3::xyz(r * a.cos(), r * a.sin(), half.z), half).expect("finite")
        })
        .collect();
    (Scene::new(scene_id, objects).expect("unique ids"), pose)
}

fn plural(label: &str) -> String {
    format!("{label}s")
}

/// A seed question of the given type with its oracle answer, or None when
/// the scene cannot support one.
pub fn random_seed(
    rng: &mut impl Rng,
    scene: &Scene,
    pose: ObserverPose,
    group_id: &str,
    vrs_type: VrsType,
    lexicon: &DirectionalLexicon,
) -> Option<QARecord> {
    let q = *Quadrant::ALL.choose(rng)?;
    let phrase = lexicon.canonical(q);
    let label = scene.objects.choose(rng)?.label.clone();
    let (question, category) = match vrs_type {
        VrsType::Direction if rng.random_bool(0.5) => (format!("What is {phrase}?"), Category::Object),
        VrsType::Direction => (format!("Which direction is the {label}?"), Category::SpatialRelation),
        VrsType::Distance => {
            let which = if rng.random_bool(0.5) { "closest" } else { "farthest" };
            (format!("What is the {which} object {phrase}?"), Category::Object)
        }
        VrsType::Counting => (format!("How many {} are {phrase}?", plural(&label)), Category::Number),
        VrsType::Existence => {
            let probe = LABELS.choose(rng)?;
            let article = if probe.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
            (format!("Is there {article} {probe} {phrase}?"), Category::Object)
        }
    };
    let facing = nearest_object(scene, &pose, Some(Quadrant::Front), None).ok();
    let situation = match facing {
        Some(obj) if rng.random_bool(0.5) => format!("I am facing the {}.", obj.label),
        _ => "I am standing in the room.".to_string(),
    };
    let mut rec = seed_record(group_id, &scene.scene_id, pose, &situation, &question, "?", category, Some(vrs_type));
    let oracle = GeometricOracle {
        lexicon: lexicon.clone(),
    };
    rec.answer = oracle.answer(&rec, scene).ok()?;
    Some(rec)
}

/// `n_groups` seeds spread over the four question types, one random scene each.
pub fn synthetic_seeds(n_groups: usize, seed: u64, lexicon: &DirectionalLexicon) -> (BTreeMap<String, Scene>, Vec<QARecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = BTreeMap::new();
    let mut seeds = Vec::with_capacity(n_groups);
    let mut i = 0;
    while seeds.len() < n_groups {
        let scene_id = format!("syn{i:05}");
        let n_objects = rng.random_range(3..9);
        let (scene, pose) = random_scene(&mut rng, &scene_id, n_objects);
        let vrs_type = VrsType::ALL[i % 4];
        if let Some(rec) = random_seed(&mut rng, &scene, pose, &format!("g{i:05}"), vrs_type, lexicon) {
            seeds.push(rec);
            scenes.insert(scene_id, scene);
        }
        i += 1;
    }
    (scenes, seeds)
}

/// "Which direction is the X?" groups where X is unique in its scene. Every
/// group's four answers are a cyclic shift of front/right/behind/left, so
/// answers are exactly balanced.
pub fn direction_groups(
    n_groups: usize,
    seed: u64,
    lexicon: &DirectionalLexicon,
) -> (BTreeMap<String, Scene>, Vec<AugmentedGroup>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = BTreeMap::new();
    let mut groups = Vec::with_capacity(n_groups);
    for i in 0..n_groups {
        let scene_id = format!("dir{i:05}");
        let (mut scene, pose) = random_scene(&mut rng, &scene_id, 4);
        let target = *LABELS.choose(&mut rng).expect("non-empty");
        for (k, obj) in scene.objects.iter_mut().enumerate() {
            obj.label = if k == 0 {
                target.to_string()
            } else {
                LABELS.iter().filter(|l| **l != target).nth(k).expect("enough labels").to_string()
            };
        }
        let q = classify_quadrant(&scene.objects[0], &pose).expect("not degenerate");
        let rec = seed_record(
            &format!("d{i:05}"),
            &scene_id,
            pose,
            "I am standing in the room.",
            &format!("Which direction is the {target}?"),
            lexicon.answer_word(q),
            Category::SpatialRelation,
            Some(VrsType::Direction),
        );
        groups.push(augment_group(&rec, &scene, lexicon).expect("direction seeds augment"));
        scenes.insert(scene_id, scene);
    }
    (scenes, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Validity;

    #[test]
    fn cross_room_groups_are_exportable() {
        let (_, groups) = cross_room_groups();
        for g in &groups {
            assert!(g.is_exportable(), "{}: {:?}", g.group_id, g.members().map(|v| v.validity).collect::<Vec<_>>());
        }
        let state = groups.iter().find(|g| g.group_id == "g_state").unwrap();
        assert!(state.needs_review());
        assert!(state.members().all(|v| v.validity != Validity::Invalid));
        let right = groups.iter().find(|g| g.group_id == "g_right").unwrap();
        let answers: Vec<&str> = right.members().map(|v| v.record.answer.as_str()).collect();
        assert_eq!(answers, ["whiteboard", "trash can", "door", "table"]);
    }

    #[test]
    fn synthetic_seeds_are_deterministic_and_oracle_consistent() {
        let lex = DirectionalLexicon::default();
        let (s1, a) = synthetic_seeds(40, 9, &lex);
        let (s2, b) = synthetic_seeds(40, 9, &lex);
        assert_eq!(a, b);
        assert_eq!(s1, s2);
        let oracle = GeometricOracle { lexicon: lex };
        for r in &a {
            assert_eq!(oracle.answer(r, &s1[&r.scene_id]).unwrap(), r.answer);
        }
    }

    #[test]
    fn direction_groups_cycle_all_four_answers() {
        let lex = DirectionalLexicon::default();
        let (_, groups) = direction_groups(20, 1, &lex);
        for g in &groups {
            assert!(g.is_exportable());
            let mut answers: Vec<String> = g.members().map(|v| v.record.answer.clone()).collect();
            answers.sort();
            assert_eq!(answers, ["behind", "front", "left", "right"]);
        }
    }
}
