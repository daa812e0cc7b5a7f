//! Task tags and the deterministic text-prompt featurizer.
//!
//! Prompts are structured records: a task tag plus clinical and demographic
//! key-value maps. The featurizer maps a record to a fixed-width embedding:
//! a one-hot block over the three tasks, then a 16-wide signed
//! feature-hashing block. Every entry is rendered as "clinical.key=value" or
//! "demographic.key=value" (keys iterated in sorted order), hashed with
//! FNV-1a (64 bit), bucketed by the residue modulo 16, signed by the hash's
//! top bit, and the block is L2-normalized. No learned components and no
//! tokenizer: the same record always produces bitwise-identical features.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lesion task conditioning the segmentation model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "ORN")]
    Orn,
    #[serde(rename = "CE")]
    Ce,
    #[serde(rename = "CRN")]
    Crn,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Orn, Task::Ce, Task::Crn];

    /// Position of the task in the one-hot block.
    pub fn index(self) -> usize {
        match self {
            Task::Orn => 0,
            Task::Ce => 1,
            Task::Crn => 2,
        }
    }

    /// Canonical tag used in files and on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            Task::Orn => "ORN",
            Task::Ce => "CE",
            Task::Crn => "CRN",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ORN" => Ok(Task::Orn),
            "CE" => Ok(Task::Ce),
            "CRN" => Ok(Task::Crn),
            other => Err(Error::InvalidArgument {
                name: "task",
                reason: format!("unknown task tag {other:?}; expected ORN, CE, or CRN"),
            }),
        }
    }
}

/// Structured text prompt: the task plus clinical and demographic fields.
/// Ordered maps keep the record canonical regardless of insertion order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPromptRecord {
    pub task: Task,
    #[serde(default)]
    pub clinical: BTreeMap<String, String>,
    #[serde(default)]
    pub demographic: BTreeMap<String, String>,
}

impl TextPromptRecord {
    /// Record carrying only a task tag.
    pub fn for_task(task: Task) -> Self {
        TextPromptRecord {
            task,
            clinical: BTreeMap::new(),
            demographic: BTreeMap::new(),
        }
    }
}

/// Width of the hashed attribute block.
pub const AUX_DIM: usize = 16;

/// Fixed-width embedding of a text prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskEmbedding {
    /// One-hot over [ORN, CE, CRN]; exactly one component is 1.
    pub task_onehot: [f64; 3],
    /// L2-normalized signed hash of the attribute pairs (zero when both
    /// maps are empty).
    pub aux_features: [f64; AUX_DIM],
}

impl TaskEmbedding {
    /// Flat feature vector: one-hot block then hashed block.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + AUX_DIM);
        v.extend_from_slice(&self.task_onehot);
        v.extend_from_slice(&self.aux_features);
        v
    }

    /// Task recovered as the argmax of the one-hot block.
    pub fn task(&self) -> Task {
        let mut best = Task::Orn;
        for t in Task::ALL {
            if self.task_onehot[t.index()] > self.task_onehot[best.index()] {
                best = t;
            }
        }
        best
    }
}

/// FNV-1a 64-bit hash.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministically embed a prompt record.
pub fn featurize_text(record: &TextPromptRecord) -> TaskEmbedding {
    let mut task_onehot = [0.0f64; 3];
    task_onehot[record.task.index()] = 1.0;
    let mut aux_features = [0.0f64; AUX_DIM];
    for (section, map) in [("clinical", &record.clinical), ("demographic", &record.demographic)] {
        for (key, value) in map {
            let h = fnv1a64(format!("{section}.{key}={value}").as_bytes());
            let bucket = (h % AUX_DIM as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            aux_features[bucket] += sign;
        }
    }
    let norm = aux_features.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut aux_features {
            *v /= norm;
        }
    }
    TaskEmbedding {
        task_onehot,
        aux_features,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_matches_published_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn task_tags_round_trip() {
        for t in Task::ALL {
            assert_eq!(t.tag().parse::<Task>().unwrap(), t);
            assert_eq!(t.to_string(), t.tag());
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, format!("\"{}\"", t.tag()));
            assert_eq!(serde_json::from_str::<Task>(&json).unwrap(), t);
        }
        assert_eq!("crn".parse::<Task>().unwrap(), Task::Crn);
        assert!("ORNX".parse::<Task>().is_err());
    }

    #[test]
    fn task_only_record_gives_pure_onehot() {
        for t in Task::ALL {
            let e = featurize_text(&TextPromptRecord::for_task(t));
            for other in Task::ALL {
                let want = if other == t { 1.0 } else { 0.0 };
                assert_eq!(e.task_onehot[other.index()], want);
            }
            assert_eq!(e.task(), t);
            assert!(e.aux_features.iter().all(|&v| v == 0.0));
        }
    }

    fn record_with(task: Task, clinical: &[(&str, &str)], demographic: &[(&str, &str)]) -> TextPromptRecord {
        let mut rec = TextPromptRecord::for_task(task);
        for &(k, v) in clinical {
            rec.clinical.insert(k.to_string(), v.to_string());
        }
        for &(k, v) in demographic {
            rec.demographic.insert(k.to_string(), v.to_string());
        }
        rec
    }

    #[test]
    fn hashed_block_is_normalized_and_deterministic() {
        let rec = record_with(
            Task::Ce,
            &[
                ("site", "temporal lobe"),
                ("appearance", "ring enhancing"),
                ("history", "radiotherapy"),
            ],
            &[("age_band", "60-69"), ("sex", "F")],
        );
        let a = featurize_text(&rec);
        let b = featurize_text(&rec);
        for i in 0..AUX_DIM {
            assert_eq!(a.aux_features[i].to_bits(), b.aux_features[i].to_bits());
        }
        let norm: f64 = a.aux_features.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn insertion_order_does_not_change_the_embedding() {
        let fwd = record_with(Task::Orn, &[("k1", "v1"), ("k2", "v2")], &[("k3", "v3")]);
        let rev = record_with(Task::Orn, &[("k2", "v2"), ("k1", "v1")], &[("k3", "v3")]);
        let ea = featurize_text(&fwd);
        let eb = featurize_text(&rev);
        for i in 0..AUX_DIM {
            assert_eq!(ea.aux_features[i].to_bits(), eb.aux_features[i].to_bits());
        }
    }

    #[test]
    fn section_prefix_separates_identical_keys() {
        // The same key=value pair in different sections hashes differently.
        let clin = record_with(Task::Ce, &[("note", "stable")], &[]);
        let demo = record_with(Task::Ce, &[], &[("note", "stable")]);
        assert_ne!(featurize_text(&clin).aux_features, featurize_text(&demo).aux_features);
    }

    #[test]
    fn one_changed_clinical_value_separates_records() {
        let a = featurize_text(&record_with(Task::Crn, &[("site", "pons")], &[]));
        let b = featurize_text(&record_with(Task::Crn, &[("site", "mandible")], &[]));
        assert_ne!(a.aux_features, b.aux_features);
    }

    #[test]
    fn record_serde_round_trip() {
        let rec = record_with(Task::Crn, &[("site", "brainstem")], &[("sex", "M")]);
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"CRN\""));
        let back: TextPromptRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
        // Maps default to empty when omitted.
        let bare: TextPromptRecord = serde_json::from_str(r#"{"task":"ORN"}"#).unwrap();
        assert_eq!(bare.task, Task::Orn);
        assert!(bare.clinical.is_empty() && bare.demographic.is_empty());
    }

    #[test]
    fn flat_vector_has_both_blocks() {
        let rec = record_with(Task::Ce, &[("site", "parotid")], &[]);
        let e = featurize_text(&rec);
        let v = e.to_vec();
        assert_eq!(v.len(), 3 + AUX_DIM);
        assert_eq!(&v[..3], &e.task_onehot);
        assert_eq!(&v[3..], &e.aux_features);
    }
}
