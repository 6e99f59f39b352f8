//! Domain types shared by every stage: scenes, observer poses and QA records.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// A point or extent in scene coordinates (meters, +z up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, ModelError> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(ModelError::NonFinite(format!("({x}, {y}, {z})")));
        }
        Ok(Self { x, y, z })
    }

    /// Unchecked constructor for literals known to be finite.
    pub const fn xyz(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Euclidean distance after dropping the z component.
    pub fn ground_distance(self, other: Vec3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;

    fn add(self, other: Vec3) -> Vec3 {
        Vec3::xyz(self.x + other.x, self.y + other.y, self.z + other.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;

    fn sub(self, other: Vec3) -> Vec3 {
        Vec3::xyz(self.x - other.x, self.y - other.y, self.z - other.z)
    }
}

impl TryFrom<[f64; 3]> for Vec3 {
    type Error = ModelError;

    fn try_from(v: [f64; 3]) -> Result<Self, Self::Error> {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub label: String,
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl SceneObject {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        center: Vec3,
        half_extents: Vec3,
    ) -> Result<Self, ModelError> {
        let obj = Self {
            id: id.into(),
            label: label.into().to_lowercase(),
            center,
            half_extents,
        };
        obj.validate()?;
        Ok(obj)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let h = self.half_extents;
        if h.x < 0.0 || h.y < 0.0 || h.z < 0.0 {
            return Err(ModelError::NegativeExtent(self.id.clone()));
        }
        if self.id.is_empty() {
            return Err(ModelError::EmptyField("object id"));
        }
        if self.label.trim().is_empty() {
            return Err(ModelError::EmptyField("object label"));
        }
        Ok(())
    }
}

/// A labeled set of axis-aligned boxes. Up axis is always +z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScene")]
pub struct Scene {
    pub scene_id: String,
    pub objects: Vec<SceneObject>,
}

#[derive(Deserialize)]
struct RawScene {
    scene_id: String,
    objects: Vec<SceneObject>,
}

impl TryFrom<RawScene> for Scene {
    type Error = ModelError;

    fn try_from(raw: RawScene) -> Result<Self, Self::Error> {
        Scene::new(raw.scene_id, raw.objects)
    }
}

impl Scene {
    pub fn new(scene_id: impl Into<String>, objects: Vec<SceneObject>) -> Result<Self, ModelError> {
        let scene_id = scene_id.into();
        if objects.is_empty() {
            return Err(ModelError::EmptyScene(scene_id));
        }
        let mut seen = BTreeSet::new();
        for obj in &objects {
            obj.validate()?;
            if !seen.insert(obj.id.as_str()) {
                return Err(ModelError::DuplicateObjectId(obj.id.clone()));
            }
        }
        let objects = objects
            .into_iter()
            .map(|mut o| {
                o.label = o.label.to_lowercase();
                o
            })
            .collect();
        Ok(Self { scene_id, objects })
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Distinct labels, longest first so multi-word labels win when matching text.
    pub fn labels(&self) -> Vec<&str> {
        let mut labels: Vec<&str> = self.objects.iter().map(|o| o.label.as_str()).collect();
        labels.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        labels.dedup();
        labels
    }

    /// Same scene with every object shifted by `offset`.
    pub fn translated(&self, offset: Vec3) -> Scene {
        Scene {
            scene_id: self.scene_id.clone(),
            objects: self
                .objects
                .iter()
                .map(|o| SceneObject {
                    center: o.center + offset,
                    ..o.clone()
                })
                .collect(),
        }
    }
}

/// Observer position plus yaw; heading is counterclockwise from +x, kept in [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose")]
pub struct ObserverPose {
    pub position: Vec3,
    pub heading_rad: f64,
}

#[derive(Deserialize)]
struct RawPose {
    position: Vec3,
    heading_rad: f64,
}

impl TryFrom<RawPose> for ObserverPose {
    type Error = ModelError;

    fn try_from(raw: RawPose) -> Result<Self, Self::Error> {
        ObserverPose::new(raw.position, raw.heading_rad)
    }
}

impl ObserverPose {
    pub fn new(position: Vec3, heading_rad: f64) -> Result<Self, ModelError> {
        if !heading_rad.is_finite() {
            return Err(ModelError::NonFinite(format!("heading {heading_rad}")));
        }
        Ok(Self {
            position,
            heading_rad: normalize_angle(heading_rad),
        })
    }

    pub fn translated(&self, offset: Vec3) -> ObserverPose {
        ObserverPose {
            position: self.position + offset,
            heading_rad: self.heading_rad,
        }
    }
}

/// Wraps an angle into [0, 2π).
pub fn normalize_angle(rad: f64) -> f64 {
    let r = rad.rem_euclid(TAU);
    // rem_euclid can round up to TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Smallest absolute difference between two headings, in [0, π].
pub fn heading_distance(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b);
    d.min(TAU - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrant {
    Front,
    Right,
    Back,
    Left,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::Front, Quadrant::Right, Quadrant::Back, Quadrant::Left];

    /// Where a world-fixed object in this quadrant appears after the observer
    /// turns 90° counterclockwise: Front→Right→Back→Left→Front.
    pub fn after_ccw_turn(self) -> Quadrant {
        match self {
            Quadrant::Front => Quadrant::Right,
            Quadrant::Right => Quadrant::Back,
            Quadrant::Back => Quadrant::Left,
            Quadrant::Left => Quadrant::Front,
        }
    }

    /// Applies `after_ccw_turn` once per quarter turn.
    pub fn after_quarter_turns(self, quarters: u32) -> Quadrant {
        (0..quarters % 4).fold(self, |q, _| q.after_ccw_turn())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::Front => "front",
            Quadrant::Right => "right",
            Quadrant::Back => "back",
            Quadrant::Left => "left",
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quadrant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "front" => Ok(Quadrant::Front),
            "right" => Ok(Quadrant::Right),
            "back" | "behind" => Ok(Quadrant::Back),
            "left" => Ok(Quadrant::Left),
            other => Err(ModelError::UnknownTag("quadrant", other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Measurement,
    Color,
    Number,
    SpatialRelation,
    Shape,
    State,
    Object,
    Visibility,
    Navigation,
    Reasoning,
    Other,
}

impl Category {
    pub const ALL: [Category; 11] = [
        Category::Measurement,
        Category::Color,
        Category::Number,
        Category::SpatialRelation,
        Category::Shape,
        Category::State,
        Category::Object,
        Category::Visibility,
        Category::Navigation,
        Category::Reasoning,
        Category::Other,
    ];

    /// Categories whose answers cannot be recomputed from box geometry.
    pub fn is_subjective(self) -> bool {
        matches!(self, Category::Reasoning | Category::State | Category::Shape)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Measurement => "measurement",
            Category::Color => "color",
            Category::Number => "number",
            Category::SpatialRelation => "spatial_relation",
            Category::Shape => "shape",
            Category::State => "state",
            Category::Object => "object",
            Category::Visibility => "visibility",
            Category::Navigation => "navigation",
            Category::Reasoning => "reasoning",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VrsType {
    Distance,
    Direction,
    Counting,
    Existence,
}

impl VrsType {
    pub const ALL: [VrsType; 4] = [
        VrsType::Distance,
        VrsType::Direction,
        VrsType::Counting,
        VrsType::Existence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VrsType::Distance => "distance",
            VrsType::Direction => "direction",
            VrsType::Counting => "counting",
            VrsType::Existence => "existence",
        }
    }
}

impl fmt::Display for VrsType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The benchmark atom: one situated question with its gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub qid: String,
    pub scene_id: String,
    pub pose: ObserverPose,
    pub situation: String,
    pub question: String,
    pub answer: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vrs_type: Option<VrsType>,
    pub group_id: String,
    #[serde(default)]
    pub rotation_deg: u32,
}

impl QARecord {
    pub fn is_seed(&self) -> bool {
        self.rotation_deg == 0
    }

    /// Checks the per-record invariants (answer non-empty, rotation in range).
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.qid.is_empty() {
            return Err(ModelError::EmptyField("qid"));
        }
        if crate::metrics::normalize_answer(&self.answer).is_empty() {
            return Err(ModelError::EmptyAnswer(self.qid.clone()));
        }
        if !matches!(self.rotation_deg, 0 | 90 | 180 | 270) {
            return Err(ModelError::BadRotation(self.qid.clone(), self.rotation_deg));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_angle_stays_in_range() {
        assert_eq!(normalize_angle(0.0), 0.0);
        assert!((normalize_angle(-std::f64::consts::FRAC_PI_2) - 1.5 * std::f64::consts::PI).abs() < 1e-15);
        assert!(normalize_angle(-1e-300) < TAU);
        assert!((normalize_angle(5.0 * TAU + 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scene_rejects_duplicates_and_empty() {
        let a = SceneObject::new("a", "chair", Vec3::ZERO, Vec3::ZERO).unwrap();
        assert!(matches!(
            Scene::new("s", vec![a.clone(), a.clone()]),
            Err(ModelError::DuplicateObjectId(_))
        ));
        assert!(matches!(Scene::new("s", vec![]), Err(ModelError::EmptyScene(_))));
    }

    #[test]
    fn scene_json_round_trip_uses_arrays() {
        let json = r#"{"scene_id":"s0","objects":[{"id":"o1","label":"Chair","center":[1,2,0],"half_extents":[0.5,0.5,0.5]}]}"#;
        let scene: Scene = serde_json::from_str(json).unwrap();
        assert_eq!(scene.objects[0].label, "chair");
        let back = serde_json::to_string(&scene).unwrap();
        assert!(back.contains("\"center\":[1.0,2.0,0.0]"));
    }

    #[test]
    fn negative_extent_and_nan_are_rejected() {
        let bad = r#"{"scene_id":"s0","objects":[{"id":"o1","label":"chair","center":[1,2,0],"half_extents":[-0.5,0.5,0.5]}]}"#;
        assert!(serde_json::from_str::<Scene>(bad).is_err());
        assert!(Vec3::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn pose_heading_normalized_on_parse() {
        let pose: ObserverPose =
            serde_json::from_str(r#"{"position":[0,0,0],"heading_rad":-1.5707963267948966}"#).unwrap();
        assert!((pose.heading_rad - 3.0 * std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_permutation_has_order_four() {
        for q in Quadrant::ALL {
            assert_eq!(q.after_quarter_turns(4), q);
            assert_ne!(q.after_quarter_turns(1), q);
        }
        assert_eq!(Quadrant::Right.after_quarter_turns(2), Quadrant::Left);
    }
}
