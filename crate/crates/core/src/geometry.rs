//! Egocentric geometry over scene boxes: quadrant classification and the
//! spatial queries (nearest, farthest, counting, existence) that serve as the
//! answer oracle for augmentation and mock answering.
//!
//! All distances use box centers projected onto the ground (x–y) plane.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::GeometryError;
use crate::model::{ObserverPose, Quadrant, Scene, SceneObject, Vec3};

const MIN_GROUND_DISTANCE: f64 = 1e-9;

/// Signed angle in (−π, π] from the facing direction to `point`, positive
/// counterclockwise. `None` when the point is on top of the observer.
pub fn relative_bearing(point: Vec3, pose: &ObserverPose) -> Option<f64> {
    let dx = point.x - pose.position.x;
    let dy = point.y - pose.position.y;
    if dx.hypot(dy) < MIN_GROUND_DISTANCE {
        return None;
    }
    let (sin_h, cos_h) = pose.heading_rad.sin_cos();
    // rotate into the observer frame: u forward, v to the left
    let u = dx * cos_h + dy * sin_h;
    let v = -dx * sin_h + dy * cos_h;
    let theta = v.atan2(u);
    Some(if theta <= -PI { PI } else { theta })
}

/// Maps a bearing in (−π, π] to its quadrant. Each sector is closed on its
/// counterclockwise edge.
pub fn quadrant_of_bearing(theta: f64) -> Quadrant {
    const Q3: f64 = 3.0 * FRAC_PI_4;
    if theta > -FRAC_PI_4 && theta <= FRAC_PI_4 {
        Quadrant::Front
    } else if theta > FRAC_PI_4 && theta <= Q3 {
        Quadrant::Left
    } else if theta > -Q3 && theta <= -FRAC_PI_4 {
        Quadrant::Right
    } else {
        Quadrant::Back
    }
}

pub fn classify_quadrant(obj: &SceneObject, pose: &ObserverPose) -> Result<Quadrant, GeometryError> {
    relative_bearing(obj.center, pose)
        .map(quadrant_of_bearing)
        .ok_or_else(|| GeometryError::DegeneratePosition(obj.id.clone()))
}

/// Filters shared by the distance queries.
#[derive(Debug, Clone, Copy, Default)]
pub struct ObjectQuery<'a> {
    pub quadrant: Option<Quadrant>,
    pub label: Option<&'a str>,
}

impl<'a> ObjectQuery<'a> {
    fn accepts(&self, obj: &SceneObject, pose: &ObserverPose) -> bool {
        if let Some(label) = self.label {
            if obj.label != label {
                return false;
            }
        }
        match self.quadrant {
            None => true,
            // objects on the observer have no quadrant and never match one
            Some(q) => classify_quadrant(obj, pose).is_ok_and(|got| got == q),
        }
    }
}

fn extreme_object<'s>(
    scene: &'s Scene,
    pose: &ObserverPose,
    query: ObjectQuery<'_>,
    farthest: bool,
) -> Result<&'s SceneObject, GeometryError> {
    scene
        .objects
        .iter()
        .filter(|o| query.accepts(o, pose))
        .min_by(|a, b| {
            let da = a.center.ground_distance(pose.position);
            let db = b.center.ground_distance(pose.position);
            let by_dist = if farthest { db.total_cmp(&da) } else { da.total_cmp(&db) };
            match by_dist {
                Ordering::Equal => a.id.cmp(&b.id),
                other => other,
            }
        })
        .ok_or(GeometryError::NoMatch)
}

/// Closest object (ground-plane center distance) among those matching the
/// filters. Ties go to the smallest id.
pub fn nearest_object<'s>(
    scene: &'s Scene,
    pose: &ObserverPose,
    quadrant: Option<Quadrant>,
    label_filter: Option<&str>,
) -> Result<&'s SceneObject, GeometryError> {
    extreme_object(scene, pose, ObjectQuery { quadrant, label: label_filter }, false)
}

/// Mirror of [`nearest_object`] for "farthest" questions. Ties go to the smallest id.
pub fn farthest_object<'s>(
    scene: &'s Scene,
    pose: &ObserverPose,
    quadrant: Option<Quadrant>,
    label_filter: Option<&str>,
) -> Result<&'s SceneObject, GeometryError> {
    extreme_object(scene, pose, ObjectQuery { quadrant, label: label_filter }, true)
}

pub fn count_in_quadrant(scene: &Scene, pose: &ObserverPose, quadrant: Quadrant, label: &str) -> usize {
    let query = ObjectQuery {
        quadrant: Some(quadrant),
        label: Some(label),
    };
    scene.objects.iter().filter(|o| query.accepts(o, pose)).count()
}

pub fn exists_in_quadrant(scene: &Scene, pose: &ObserverPose, quadrant: Quadrant, label: &str) -> bool {
    count_in_quadrant(scene, pose, quadrant, label) > 0
}

/// Count over the whole scene, ignoring the observer.
pub fn count_label(scene: &Scene, label: &str) -> usize {
    scene.objects.iter().filter(|o| o.label == label).count()
}
