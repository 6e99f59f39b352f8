//! Ground-plane projections served to the review console.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::augment::rotate_pose;
use crate::metrics::normalize_answer;
use crate::model::{normalize_angle, ObserverPose, QARecord, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedBox {
    pub id: String,
    pub label: String,
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTopDown {
    pub scene_id: String,
    pub bounds: Bounds,
    pub objects: Vec<ProjectedBox>,
}

impl SceneTopDown {
    pub fn of(scene: &Scene) -> Self {
        let objects: Vec<ProjectedBox> = scene
            .objects
            .iter()
            .map(|o| ProjectedBox {
                id: o.id.clone(),
                label: o.label.clone(),
                center: [o.center.x, o.center.y],
                half_extents: [o.half_extents.x, o.half_extents.y],
            })
            .collect();
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for b in &objects {
            for k in 0..2 {
                min[k] = min[k].min(b.center[k] - b.half_extents[k]);
                max[k] = max[k].max(b.center[k] + b.half_extents[k]);
            }
        }
        Self {
            scene_id: scene.scene_id.clone(),
            bounds: Bounds { min, max },
            objects,
        }
    }
}

/// Observer heading after one rotation, with its quadrant boundary rays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingArrow {
    pub rotation_deg: u32,
    /// Radians CCW from +x.
    pub heading_rad: f64,
    /// Unit vector along the heading.
    pub direction: [f64; 2],
    /// Headings of the ±45° and ±135° rays, CCW from +x.
    pub boundary_rays_rad: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerHighlight {
    pub qid: String,
    pub rotation_deg: u32,
    /// Objects whose label equals the gold answer, nearest first.
    pub object_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTopDown {
    pub scene: SceneTopDown,
    pub observer: [f64; 2],
    pub arrows: Vec<HeadingArrow>,
    pub highlights: Vec<AnswerHighlight>,
}

fn arrow(seed_pose: &ObserverPose, rotation_deg: u32) -> HeadingArrow {
    let h = if rotation_deg == 0 {
        seed_pose.heading_rad
    } else {
        rotate_pose(seed_pose, rotation_deg)
            .map(|p| p.heading_rad)
            .unwrap_or(seed_pose.heading_rad)
    };
    HeadingArrow {
        rotation_deg,
        heading_rad: h,
        direction: [h.cos(), h.sin()],
        boundary_rays_rad: [FRAC_PI_4, 3.0 * FRAC_PI_4, -3.0 * FRAC_PI_4, -FRAC_PI_4].map(|d| normalize_angle(h + d)),
    }
}

/// Plan view of a group: boxes, observer, one arrow per rotation and the
/// objects named by each member's answer.
pub fn group_topdown(scene: &Scene, members: &[&QARecord]) -> GroupTopDown {
    let seed_pose = members
        .iter()
        .find(|r| r.is_seed())
        .or(members.first())
        .map(|r| r.pose)
        .unwrap_or_else(|| ObserverPose::new(crate::model::Vec3::ZERO, 0.0).expect("finite"));
    let highlights = members
        .iter()
        .map(|r| {
            let answer = normalize_answer(&r.answer);
            let mut hits: Vec<_> = scene
                .objects
                .iter()
                .filter(|o| normalize_answer(&o.label) == answer)
                .map(|o| (o.center.ground_distance(r.pose.position), o.id.clone()))
                .collect();
            hits.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            AnswerHighlight {
                qid: r.qid.clone(),
                rotation_deg: r.rotation_deg,
                object_ids: hits.into_iter().map(|(_, id)| id).collect(),
            }
        })
        .collect();
    GroupTopDown {
        scene: SceneTopDown::of(scene),
        observer: [seed_pose.position.x, seed_pose.position.y],
        arrows: [0, 90, 180, 270].into_iter().map(|d| arrow(&seed_pose, d)).collect(),
        highlights,
    }
}
