//! Expert-review queue with an append-only JSONL decision log.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ingest::parse_jsonl;
use super::topdown::{group_topdown, GroupTopDown};
use crate::augment::{AugmentedGroup, Validity};
use crate::error::ReviewError;
use crate::metrics::{cohens_kappa, normalize_answer, AgreementResult};
use crate::model::{QARecord, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Accepted,
    Corrected,
    Rejected,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::Accepted => "accepted",
            DecisionKind::Corrected => "corrected",
            DecisionKind::Rejected => "rejected",
        }
    }
}

/// Body of `POST /api/decision`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub group_id: String,
    pub reviewer_id: String,
    pub status: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_answer: Option<String>,
    /// Member the correction applies to; defaults to the first flagged member.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub group_id: String,
    pub reviewer_id: String,
    pub status: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Corrected { corrected_qid: String, corrected_answer: String },
    Rejected,
}

impl ReviewStatus {
    pub fn name(&self) -> &'static str {
        match self {
            ReviewStatus::Pending => "pending",
            ReviewStatus::Accepted => "accepted",
            ReviewStatus::Corrected { .. } => "corrected",
            ReviewStatus::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberVerdict {
    pub qid: String,
    pub rotation_deg: u32,
    pub validity: Validity,
    pub note: String,
    pub needs_review: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub group_id: String,
    pub scene_id: String,
    pub seed: QARecord,
    pub variants: Vec<QARecord>,
    pub verdicts: Vec<MemberVerdict>,
    pub topdown: GroupTopDown,
    #[serde(flatten)]
    pub status: ReviewStatus,
    /// Reviewer and time of the decision that set the status.
    pub reviewer_id: Option<String>,
    pub timestamp_ms: Option<u64>,
    pub decisions: Vec<Decision>,
}

impl ReviewItem {
    pub fn from_group(group: &AugmentedGroup, scene: &Scene) -> Self {
        let members: Vec<&QARecord> = group.members().map(|v| &v.record).collect();
        Self {
            group_id: group.group_id.clone(),
            scene_id: group.scene_id.clone(),
            seed: group.seed.record.clone(),
            variants: group.variants.iter().map(|v| v.record.clone()).collect(),
            verdicts: group
                .members()
                .map(|v| MemberVerdict {
                    qid: v.record.qid.clone(),
                    rotation_deg: v.record.rotation_deg,
                    validity: v.validity,
                    note: v.validation_note.clone(),
                    needs_review: v.needs_review,
                })
                .collect(),
            topdown: group_topdown(scene, &members),
            status: ReviewStatus::Pending,
            reviewer_id: None,
            timestamp_ms: None,
            decisions: Vec::new(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &QARecord> {
        std::iter::once(&self.seed).chain(&self.variants)
    }

    /// First member a reviewer would look at: non-Valid or flagged, else the seed.
    fn default_correction_target(&self) -> &str {
        self.verdicts
            .iter()
            .find(|v| v.validity != Validity::Valid || v.needs_review)
            .map_or(self.seed.qid.as_str(), |v| v.qid.as_str())
    }

    /// Records with the decided correction applied, or None unless Accepted/Corrected.
    pub fn exported_records(&self) -> Option<Vec<QARecord>> {
        match &self.status {
            ReviewStatus::Accepted => Some(self.records().cloned().collect()),
            ReviewStatus::Corrected {
                corrected_qid,
                corrected_answer,
            } => Some(
                self.records()
                    .cloned()
                    .map(|mut r| {
                        if &r.qid == corrected_qid {
                            r.answer = corrected_answer.clone();
                        }
                        r
                    })
                    .collect(),
            ),
            _ => None,
        }
    }
}

/// Human-readable qualification checklist shown before reviewing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualificationChecklist {
    #[serde(default)]
    pub items: Vec<QualificationItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualificationItem {
    pub id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub status: String,
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
    pub items: Vec<ReviewItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Items with at least two decisions from distinct reviewers.
    pub dual_reviewed: usize,
    /// None when no item is dual-reviewed.
    pub agreement: Option<AgreementResult>,
}

/// Status filter for queue listings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusFilter {
    All,
    Pending,
    Accepted,
    Corrected,
    Rejected,
}

impl StatusFilter {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "all" => StatusFilter::All,
            "pending" => StatusFilter::Pending,
            "accepted" => StatusFilter::Accepted,
            "corrected" => StatusFilter::Corrected,
            "rejected" => StatusFilter::Rejected,
            _ => return None,
        })
    }

    fn admits(self, status: &ReviewStatus) -> bool {
        match self {
            StatusFilter::All => true,
            StatusFilter::Pending => *status == ReviewStatus::Pending,
            StatusFilter::Accepted => *status == ReviewStatus::Accepted,
            StatusFilter::Corrected => matches!(status, ReviewStatus::Corrected { .. }),
            StatusFilter::Rejected => *status == ReviewStatus::Rejected,
        }
    }

    fn name(self) -> &'static str {
        match self {
            StatusFilter::All => "all",
            StatusFilter::Pending => "pending",
            StatusFilter::Accepted => "accepted",
            StatusFilter::Corrected => "corrected",
            StatusFilter::Rejected => "rejected",
        }
    }
}

/// In-memory review state. Statuses only move from Pending; an item is
/// decided once `required_reviews` distinct reviewers have ruled, taking the
/// first reviewer's ruling.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewQueue {
    items: BTreeMap<String, ReviewItem>,
    scenes: BTreeMap<String, Scene>,
    required_reviews: usize,
}

impl ReviewQueue {
    pub fn new(groups: &[AugmentedGroup], scenes: &BTreeMap<String, Scene>, required_reviews: usize) -> Result<Self, ReviewError> {
        if required_reviews == 0 {
            return Err(ReviewError::BadRequest("required_reviews must be at least 1".into()));
        }
        let mut items = BTreeMap::new();
        for g in groups {
            let scene = scenes
                .get(&g.scene_id)
                .ok_or_else(|| ReviewError::NotFound(format!("scene {} for group {}", g.scene_id, g.group_id)))?;
            if items.insert(g.group_id.clone(), ReviewItem::from_group(g, scene)).is_some() {
                return Err(ReviewError::Conflict(format!("duplicate group {}", g.group_id)));
            }
        }
        Ok(Self {
            items,
            scenes: scenes.clone(),
            required_reviews,
        })
    }

    pub fn required_reviews(&self) -> usize {
        self.required_reviews
    }

    pub fn item(&self, group_id: &str) -> Option<&ReviewItem> {
        self.items.get(group_id)
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values()
    }

    pub fn scene(&self, scene_id: &str) -> Option<&Scene> {
        self.scenes.get(scene_id)
    }

    /// 1-based pages in group_id order.
    pub fn page(&self, filter: StatusFilter, page: usize, per_page: usize) -> QueuePage {
        let page = page.max(1);
        let per_page = per_page.clamp(1, 500);
        let matching: Vec<&ReviewItem> = self.items.values().filter(|i| filter.admits(&i.status)).collect();
        QueuePage {
            status: filter.name().to_string(),
            page,
            per_page,
            total: matching.len(),
            items: matching
                .into_iter()
                .skip((page - 1) * per_page)
                .take(per_page)
                .cloned()
                .collect(),
        }
    }

    /// Checks a request against the current state without changing it.
    pub fn check(&self, req: &DecisionRequest) -> Result<(), ReviewError> {
        if req.reviewer_id.trim().is_empty() {
            return Err(ReviewError::BadRequest("reviewer_id is empty".into()));
        }
        let item = self
            .items
            .get(&req.group_id)
            .ok_or_else(|| ReviewError::NotFound(format!("group {}", req.group_id)))?;
        match (req.status, &req.corrected_answer) {
            (DecisionKind::Corrected, None) => {
                return Err(ReviewError::BadRequest("corrected status needs corrected_answer".into()))
            }
            (DecisionKind::Corrected, Some(a)) if normalize_answer(a).is_empty() => {
                return Err(ReviewError::BadRequest("corrected_answer is empty".into()))
            }
            (DecisionKind::Accepted | DecisionKind::Rejected, Some(_)) => {
                return Err(ReviewError::BadRequest("corrected_answer only goes with corrected status".into()))
            }
            _ => {}
        }
        if let Some(qid) = &req.qid {
            if !item.records().any(|r| &r.qid == qid) {
                return Err(ReviewError::BadRequest(format!("qid {qid} is not in group {}", req.group_id)));
            }
        }
        if item.decisions.iter().any(|d| d.reviewer_id == req.reviewer_id) {
            return Err(ReviewError::Conflict(format!(
                "reviewer {} already decided group {}",
                req.reviewer_id, req.group_id
            )));
        }
        if item.status != ReviewStatus::Pending {
            return Err(ReviewError::Conflict(format!("group {} is already {}", req.group_id, item.status.name())));
        }
        Ok(())
    }

    /// Validates and applies a decision.
    pub fn apply(&mut self, decision: Decision) -> Result<&ReviewItem, ReviewError> {
        let req = DecisionRequest {
            group_id: decision.group_id.clone(),
            reviewer_id: decision.reviewer_id.clone(),
            status: decision.status,
            corrected_answer: decision.corrected_answer.clone(),
            qid: decision.qid.clone(),
            note: decision.note.clone(),
        };
        self.check(&req)?;
        let required = self.required_reviews;
        let item = self.items.get_mut(&decision.group_id).expect("checked");
        item.decisions.push(decision);
        if item.decisions.len() >= required {
            let first = item.decisions[0].clone();
            item.status = match first.status {
                DecisionKind::Accepted => ReviewStatus::Accepted,
                DecisionKind::Rejected => ReviewStatus::Rejected,
                DecisionKind::Corrected => ReviewStatus::Corrected {
                    corrected_qid: first
                        .qid
                        .clone()
                        .unwrap_or_else(|| item.default_correction_target().to_string()),
                    corrected_answer: first.corrected_answer.clone().unwrap_or_default(),
                },
            };
            item.reviewer_id = Some(first.reviewer_id);
            item.timestamp_ms = Some(first.timestamp_ms);
        }
        Ok(item)
    }

    /// Applies logged decisions in order; any rejection means the log does
    /// not belong to this queue.
    pub fn replay(&mut self, decisions: &[Decision]) -> Result<(), ReviewError> {
        for (i, d) in decisions.iter().enumerate() {
            self.apply(d.clone())
                .map_err(|e| ReviewError::Log(format!("entry {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Cohen's kappa between the first two reviewers over dual-reviewed items.
    pub fn agreement(&self) -> AgreementReport {
        let (a, b): (Vec<DecisionKind>, Vec<DecisionKind>) = self
            .items
            .values()
            .filter(|i| i.decisions.len() >= 2)
            .map(|i| (i.decisions[0].status, i.decisions[1].status))
            .unzip();
        AgreementReport {
            dual_reviewed: a.len(),
            agreement: cohens_kappa(&a, &b).ok(),
        }
    }

    /// Records of complete Accepted/Corrected groups, in group order.
    pub fn export(&self) -> Vec<QARecord> {
        self.items
            .values()
            .filter_map(ReviewItem::exported_records)
            .filter(|recs| recs.len() == 4)
            .flatten()
            .collect()
    }

    pub fn status_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut counts = BTreeMap::from([("pending", 0), ("accepted", 0), ("corrected", 0), ("rejected", 0)]);
        for item in self.items.values() {
            *counts.entry(item.status.name()).or_default() += 1;
        }
        counts
    }
}

/// Append-only JSONL file of decisions; each write is flushed and synced.
#[derive(Debug)]
pub struct DecisionLog {
    path: PathBuf,
    file: File,
}

impl DecisionLog {
    /// Opens (creating if needed) and returns the decisions already logged.
    pub fn open(path: impl Into<PathBuf>) -> Result<(Self, Vec<Decision>), ReviewError> {
        let path = path.into();
        let existing = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| ReviewError::Log(format!("{}: {e}", path.display())))?;
            parse_jsonl(&path.display().to_string(), &text).map_err(|e| ReviewError::Log(e.to_string()))?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ReviewError::Log(format!("{}: {e}", path.display())))?;
        Ok((Self { path, file }, existing))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, decision: &Decision) -> Result<(), ReviewError> {
        let mut line = serde_json::to_string(decision).map_err(|e| ReviewError::Log(e.to_string()))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| ReviewError::Log(format!("{}: {e}", self.path.display())))
    }
}

/// A queue backed by a decision log: decisions are validated, logged, then applied.
#[derive(Debug)]
pub struct ReviewStore {
    pub queue: ReviewQueue,
    log: DecisionLog,
}

impl ReviewStore {
    /// Replays the log over a fresh queue.
    pub fn open(mut queue: ReviewQueue, log_path: impl Into<PathBuf>) -> Result<Self, ReviewError> {
        let (log, existing) = DecisionLog::open(log_path)?;
        queue.replay(&existing)?;
        Ok(Self { queue, log })
    }

    pub fn decide(&mut self, req: DecisionRequest, timestamp_ms: u64) -> Result<&ReviewItem, ReviewError> {
        self.queue.check(&req)?;
        let decision = Decision {
            group_id: req.group_id,
            reviewer_id: req.reviewer_id,
            status: req.status,
            corrected_answer: req.corrected_answer,
            qid: req.qid,
            note: req.note,
            timestamp_ms,
        };
        self.log.append(&decision)?;
        self.queue.apply(decision)
    }

    pub fn log_path(&self) -> &Path {
        self.log.path()
    }
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::fixtures::cross_room_groups;

    fn queue(required: usize) -> ReviewQueue {
        let (scenes, groups) = cross_room_groups();
        ReviewQueue::new(&groups, &scenes, required).unwrap()
    }

    fn req(group: &str, reviewer: &str, status: DecisionKind) -> DecisionRequest {
        DecisionRequest {
            group_id: group.into(),
            reviewer_id: reviewer.into(),
            status,
            corrected_answer: None,
            qid: None,
            note: None,
        }
    }

    fn decision(r: DecisionRequest) -> Decision {
        Decision {
            group_id: r.group_id,
            reviewer_id: r.reviewer_id,
            status: r.status,
            corrected_answer: r.corrected_answer,
            qid: r.qid,
            note: r.note,
            timestamp_ms: 1,
        }
    }

    #[test]
    fn status_leaves_pending_once() {
        let mut q = queue(1);
        let gid = q.items().next().unwrap().group_id.clone();
        q.apply(decision(req(&gid, "ann", DecisionKind::Accepted))).unwrap();
        assert_eq!(q.item(&gid).unwrap().status, ReviewStatus::Accepted);
        assert!(matches!(q.check(&req(&gid, "ann", DecisionKind::Rejected)), Err(ReviewError::Conflict(_))));
        assert!(matches!(q.check(&req(&gid, "bob", DecisionKind::Rejected)), Err(ReviewError::Conflict(_))));
        assert!(matches!(q.check(&req("nope", "bob", DecisionKind::Rejected)), Err(ReviewError::NotFound(_))));
    }

    #[test]
    fn malformed_corrections_are_bad_requests() {
        let q = queue(1);
        let gid = q.items().next().unwrap().group_id.clone();
        assert!(matches!(q.check(&req(&gid, "a", DecisionKind::Corrected)), Err(ReviewError::BadRequest(_))));
        let mut r = req(&gid, "a", DecisionKind::Accepted);
        r.corrected_answer = Some("x".into());
        assert!(matches!(q.check(&r), Err(ReviewError::BadRequest(_))));
        let mut r = req(&gid, "a", DecisionKind::Corrected);
        r.corrected_answer = Some("x".into());
        r.qid = Some("other_group_r90".into());
        assert!(matches!(q.check(&r), Err(ReviewError::BadRequest(_))));
    }

    #[test]
    fn corrections_reach_the_export() {
        let mut q = queue(1);
        let gid = q.items().next().unwrap().group_id.clone();
        let target = format!("{gid}_r180");
        let mut r = req(&gid, "a", DecisionKind::Corrected);
        r.corrected_answer = Some("sofa".into());
        r.qid = Some(target.clone());
        q.apply(decision(r)).unwrap();
        let out = q.export();
        assert_eq!(out.len(), 4);
        assert_eq!(out.iter().find(|x| x.qid == target).unwrap().answer, "sofa");
    }

    #[test]
    fn dual_review_agreement_and_first_ruling() {
        let mut q = queue(2);
        let ids: Vec<String> = q.items().map(|i| i.group_id.clone()).collect();
        for id in &ids {
            q.apply(decision(req(id, "a", DecisionKind::Accepted))).unwrap();
            assert_eq!(q.item(id).unwrap().status, ReviewStatus::Pending);
            q.apply(decision(req(id, "b", DecisionKind::Rejected))).unwrap();
            assert_eq!(q.item(id).unwrap().status, ReviewStatus::Accepted);
        }
        let report = q.agreement();
        assert_eq!(report.dual_reviewed, ids.len());
        assert!(report.agreement.unwrap().kappa <= 0.0);
    }

    #[test]
    fn log_replay_reproduces_statuses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decisions.jsonl");
        let mut store = ReviewStore::open(queue(1), &path).unwrap();
        let ids: Vec<String> = store.queue.items().map(|i| i.group_id.clone()).collect();
        store.decide(req(&ids[0], "a", DecisionKind::Rejected), 5).unwrap();
        assert!(store.decide(req(&ids[0], "a", DecisionKind::Accepted), 6).is_err());
        let before: Vec<ReviewStatus> = store.queue.items().map(|i| i.status.clone()).collect();
        drop(store);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
        let reopened = ReviewStore::open(queue(1), &path).unwrap();
        let after: Vec<ReviewStatus> = reopened.queue.items().map(|i| i.status.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn pagination() {
        let q = queue(1);
        let total = q.items().count();
        let p = q.page(StatusFilter::Pending, 1, 1);
        assert_eq!((p.total, p.items.len()), (total, 1));
        assert!(q.page(StatusFilter::Pending, total + 1, 1).items.is_empty());
        assert_eq!(q.page(StatusFilter::Accepted, 1, 10).total, 0);
    }
}
