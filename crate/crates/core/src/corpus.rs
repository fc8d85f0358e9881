//! Semantic corpus: images, their subject-relation-object triplets and the
//! per-triplet importance scores that weight the quality metric.
//!
//! Triplet order inside a record is significant: index `j` of a triplet is
//! its position in the record, independent of its importance.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject-relation-object unit with its importance score in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticTriplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub importance: f64,
}

impl SemanticTriplet {
    /// Space-joined phrase, e.g. `"sign on pole"`.
    pub fn phrase(&self) -> String {
        format!("{} {} {}", self.subject, self.relation, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub triplets: Vec<SemanticTriplet>,
}

impl ImageRecord {
    /// Number of triplets `N`.
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn importances(&self) -> Vec<f64> {
        self.triplets.iter().map(|t| t.importance).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProvenanceKind {
    Synthetic,
    Scored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    pub note: String,
}

/// A validated collection of image records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub provenance: Provenance,
    pub records: Vec<ImageRecord>,
}

impl Corpus {
    /// Checks every record invariant, reporting the first offending field.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for (i, record) in self.records.iter().enumerate() {
            if !seen.insert(record.image_id.as_str()) {
                return Err(Error::validation(format!(
                    "records[{i}].image_id: duplicate image_id {:?}",
                    record.image_id
                )));
            }
            if record.triplets.is_empty() {
                return Err(Error::validation(format!(
                    "records[{i}].triplets: record {:?} has no triplets",
                    record.image_id
                )));
            }
            for (j, t) in record.triplets.iter().enumerate() {
                let at = format!("records[{i}].triplets[{j}]");
                for (name, value) in [
                    ("subject", &t.subject),
                    ("relation", &t.relation),
                    ("object", &t.object),
                ] {
                    if value.trim().is_empty() {
                        return Err(Error::validation(format!("{at}.{name}: empty string")));
                    }
                }
                if !(0.0..=1.0).contains(&t.importance) {
                    return Err(Error::validation(format!(
                        "{at}.importance: importance out of range [0, 1]: {}",
                        t.importance
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let corpus: Corpus = serde_json::from_str(text)?;
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn to_json(&self) -> String {
        // Serializing plain structs of strings and floats cannot fail.
        serde_json::to_string_pretty(self).expect("corpus serialization")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Sum of all importances in the corpus.
    pub fn total_importance(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.triplets.iter())
            .map(|t| t.importance)
            .sum()
    }

    pub fn max_triplets(&self) -> usize {
        self.records.iter().map(ImageRecord::len).max().unwrap_or(0)
    }
}

/// Reads and validates a corpus JSON file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_json(&text)
}

/// Maps a raw cosine score in `[-1, 1]` to an importance in `[0, 1]` by
/// clamping negatives to zero.
pub fn normalize_importance(raw: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&raw) {
        return Err(Error::invalid(format!(
            "raw cosine score must lie in [-1, 1], got {raw}"
        )));
    }
    Ok(raw.max(0.0))
}

fn beta22(rng: &mut impl Rng) -> f64 {
    let mut u: [f64; 3] = std::array::from_fn(|_| rng.gen());
    u.sort_by(f64::total_cmp);
    u[1]
}

const SUBJECTS: &[&str] = &[
    "man", "woman", "dog", "cat", "car", "tree", "sign", "building", "boy", "girl", "horse",
    "bus", "plate", "table", "window", "person",
];
const RELATIONS: &[&str] = &[
    "on", "near", "holding", "wearing", "behind", "in front of", "riding", "has", "under",
    "next to", "sitting on", "standing on",
];
const OBJECTS: &[&str] = &[
    "pole", "street", "shirt", "hat", "grass", "bench", "sidewalk", "car", "table", "sky",
    "building", "fence", "water", "road", "chair", "umbrella",
];

/// Deterministic synthetic corpus. Importances are Beta(2, 2) draws sorted in
/// descending order within each record.
///
/// Beta(2, 2) is sampled as the median of three uniforms, which needs no
/// transcendental functions and so is bit-identical across builds.
pub fn synth_corpus(num_images: usize, triplets_per_image: usize, seed: u64) -> Result<Corpus> {
    if num_images == 0 || triplets_per_image == 0 {
        return Err(Error::invalid(
            "synthetic corpus needs at least one image and one triplet per image",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..num_images)
        .map(|i| {
            let mut scores: Vec<f64> = (0..triplets_per_image)
                .map(|_| beta22(&mut rng))
                .collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            let triplets = scores
                .into_iter()
                .map(|importance| SemanticTriplet {
                    subject: pick(SUBJECTS, &mut rng),
                    relation: pick(RELATIONS, &mut rng),
                    object: pick(OBJECTS, &mut rng),
                    importance,
                })
                .collect();
            ImageRecord {
                image_id: format!("synth-{seed}-{i:05}"),
                triplets,
            }
        })
        .collect();
    Ok(Corpus {
        provenance: Provenance {
            kind: ProvenanceKind::Synthetic,
            note: format!(
                "synth_corpus(images={num_images}, triplets={triplets_per_image}, seed={seed}); importance ~ Beta(2,2) sorted descending"
            ),
        },
        records,
    })
}

fn pick(words: &[&str], rng: &mut ChaCha8Rng) -> String {
    words.choose(rng).expect("non-empty vocabulary").to_string()
}
