use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{IngestErrors, PipelineError};
use crate::model::{QARecord, Scene};

/// Parses one JSON value per non-empty line.
pub fn parse_jsonl<T: DeserializeOwned>(file: &str, text: &str) -> Result<Vec<T>, PipelineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Parse {
                file: file.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|it| serde_json::to_string(it).expect("serializable") + "\n")
        .collect()
}

pub fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    parse_jsonl(&path.display().to_string(), &read_text(path)?)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    std::fs::write(path, to_jsonl(items)).map_err(|e| PipelineError::io(path, e))
}

/// Scenes from a `.jsonl` file (one per line) or a JSON document holding a
/// single scene or an array of scenes.
pub fn parse_scenes(file: &str, text: &str) -> Result<Vec<Scene>, PipelineError> {
    if file.ends_with(".jsonl") {
        return parse_jsonl(file, text);
    }
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| PipelineError::Parse {
        file: file.to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let result = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|s| vec![s])
    };
    result.map_err(|e| PipelineError::Parse {
        file: file.to_string(),
        line: 0,
        message: e.to_string(),
    })
}

/// Cross-referenced, invariant-checked scenes and QA records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenes: BTreeMap<String, Scene>,
    pub records: Vec<QARecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetCounts {
    pub scenes: usize,
    pub records: usize,
    pub seeds: usize,
    pub groups: usize,
}

impl Dataset {
    pub fn counts(&self) -> DatasetCounts {
        DatasetCounts {
            scenes: self.scenes.len(),
            records: self.records.len(),
            seeds: self.records.iter().filter(|r| r.is_seed()).count(),
            groups: self.records.iter().map(|r| r.group_id.as_str()).collect::<BTreeSet<_>>().len(),
        }
    }

    pub fn scene(&self, scene_id: &str) -> Option<&Scene> {
        self.scenes.get(scene_id)
    }

    pub fn seeds(&self) -> impl Iterator<Item = &QARecord> {
        self.records.iter().filter(|r| r.is_seed())
    }
}

/// Checks scenes and records against each other, collecting every problem.
pub fn validate_dataset(scenes: Vec<Scene>, records: Vec<QARecord>) -> Result<Dataset, IngestErrors> {
    let mut errors = Vec::new();
    let mut by_id = BTreeMap::new();
    for scene in scenes {
        let id = scene.scene_id.clone();
        if by_id.insert(id.clone(), scene).is_some() {
            errors.push(PipelineError::InvariantViolation(format!("duplicate scene_id {id}")));
        }
    }
    let mut qids = BTreeSet::new();
    let mut groups: BTreeMap<&str, Vec<&QARecord>> = BTreeMap::new();
    for rec in &records {
        if !qids.insert(rec.qid.as_str()) {
            errors.push(PipelineError::InvariantViolation(format!("duplicate qid {}", rec.qid)));
        }
        if let Err(e) = rec.validate() {
            errors.push(PipelineError::InvariantViolation(e.to_string()));
        }
        if !by_id.contains_key(&rec.scene_id) {
            errors.push(PipelineError::DanglingSceneRef {
                qid: rec.qid.clone(),
                scene_id: rec.scene_id.clone(),
            });
        }
        groups.entry(rec.group_id.as_str()).or_default().push(rec);
    }
    for (gid, members) in &groups {
        if members.iter().any(|r| r.scene_id != members[0].scene_id) {
            errors.push(PipelineError::InvariantViolation(format!("group {gid} spans several scenes")));
        }
        let rotations: BTreeSet<u32> = members.iter().map(|r| r.rotation_deg).collect();
        if rotations.len() != members.len() {
            errors.push(PipelineError::InvariantViolation(format!("group {gid} repeats a rotation")));
        }
    }
    if errors.is_empty() {
        Ok(Dataset { scenes: by_id, records })
    } else {
        Err(IngestErrors(errors))
    }
}

/// Parses scene files and a QA JSONL file, then validates them together.
/// Parse failures are reported alongside validation failures.
pub fn ingest(scene_files: &[(String, String)], qa_file: (&str, &str)) -> Result<Dataset, IngestErrors> {
    let mut errors = Vec::new();
    let mut scenes = Vec::new();
    for (name, text) in scene_files {
        match parse_scenes(name, text) {
            Ok(s) => scenes.extend(s),
            Err(e) => errors.push(e),
        }
    }
    let (qa_name, qa_text) = qa_file;
    let mut records = Vec::new();
    for (i, line) in qa_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<QARecord>(line) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(PipelineError::Parse {
                file: qa_name.to_string(),
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    match validate_dataset(scenes, records) {
        Ok(ds) if errors.is_empty() => Ok(ds),
        Ok(_) => Err(IngestErrors(errors)),
        Err(IngestErrors(more)) => {
            errors.extend(more);
            Err(IngestErrors(errors))
        }
    }
}

pub fn ingest_paths(scene_paths: &[impl AsRef<Path>], qa_path: &Path) -> Result<Dataset, IngestErrors> {
    let mut errors = Vec::new();
    let mut scene_files = Vec::new();
    for p in scene_paths {
        let p = p.as_ref();
        match read_text(p) {
            Ok(t) => scene_files.push((p.display().to_string(), t)),
            Err(e) => errors.push(e),
        }
    }
    let qa_text = read_text(qa_path).map_err(|e| IngestErrors(vec![e]))?;
    if !errors.is_empty() {
        return Err(IngestErrors(errors));
    }
    ingest(&scene_files, (&qa_path.display().to_string(), &qa_text))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENE: &str = r#"{"scene_id": "s1", "objects": [{"id": "o1", "label": "Chair", "center": [1, 0, 0], "half_extents": [0.3, 0.3, 0.5]}]}"#;

    fn qa(qid: &str, scene: &str) -> String {
        format!(
            r#"{{"qid": "{qid}", "scene_id": "{scene}", "pose": {{"position": [0, 0, 0], "heading_rad": 0}}, "situation": "I am standing.", "question": "What is in front of me?", "answer": "chair", "category": "object", "vrs_type": "direction", "group_id": "{qid}"}}"#
        )
    }

    #[test]
    fn well_formed_fixture_loads() {
        let text = [qa("q1", "s1"), qa("q2", "s1")].join("\n");
        let ds = ingest(&[("s.json".into(), SCENE.into())], ("qa.jsonl", &text)).unwrap();
        assert_eq!(
            ds.counts(),
            DatasetCounts {
                scenes: 1,
                records: 2,
                seeds: 2,
                groups: 2
            }
        );
        assert_eq!(ds.scene("s1").unwrap().objects[0].label, "chair");
    }

    #[test]
    fn dangling_scene_is_reported() {
        let err = ingest(&[("s.json".into(), SCENE.into())], ("qa.jsonl", &qa("q1", "nope"))).unwrap_err();
        assert_eq!(
            err.0,
            vec![PipelineError::DanglingSceneRef {
                qid: "q1".into(),
                scene_id: "nope".into()
            }]
        );
    }

    #[test]
    fn duplicate_qid_is_an_invariant_violation() {
        let text = [qa("q1", "s1"), qa("q1", "s1")].join("\n");
        let err = ingest(&[("s.json".into(), SCENE.into())], ("qa.jsonl", &text)).unwrap_err();
        assert!(err.0.iter().any(|e| matches!(e, PipelineError::InvariantViolation(m) if m.contains("duplicate qid"))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = format!("{}\n\n{{not json\n", qa("q1", "s1"));
        let err = ingest(&[("s.json".into(), SCENE.into())], ("qa.jsonl", &text)).unwrap_err();
        assert!(matches!(&err.0[0], PipelineError::Parse { line: 3, .. }));
    }

    #[test]
    fn scenes_accept_arrays_and_jsonl() {
        assert_eq!(parse_scenes("a.json", &format!("[{SCENE}]")).unwrap().len(), 1);
        assert_eq!(parse_scenes("a.jsonl", &format!("{SCENE}\n{SCENE}\n")).unwrap().len(), 2);
    }
}
