//! Experiment history passed between rounds, and its randomized variant.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub name: String,
    pub score: f64,
    pub hit: bool,
}

/// All observations so far, in order of discovery.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub records: Vec<FeedbackRecord>,
}

impl Feedback {
    pub fn new(records: Vec<FeedbackRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn hits(&self) -> impl Iterator<Item = &FeedbackRecord> {
        self.records.iter().filter(|r| r.hit)
    }

    pub fn others(&self) -> impl Iterator<Item = &FeedbackRecord> {
        self.records.iter().filter(|r| !r.hit)
    }

    pub fn hit_count(&self) -> usize {
        self.hits().count()
    }

    pub fn push(&mut self, record: FeedbackRecord) {
        self.records.push(record);
    }
}

/// How level-2 randomization reassigns hit labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelShuffle {
    /// Permute labels among records; the number of hits is preserved.
    #[default]
    Permute,
    /// Flip each label independently with probability 1/2.
    Flip,
}

/// In-place Fisher-Yates: for `i` from `len-1` down to 1, swap `i` with a
/// uniform `j` in `0..=i`.
pub fn fisher_yates<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Breaks the pairing between names and outcomes.
///
/// Level 1 permutes scores across records; level 2 permutes hit labels
/// (or flips them, with [`LabelShuffle::Flip`]). Scores are shuffled before
/// labels, each with its own Fisher-Yates pass over `rng`.
pub fn randomize_feedback<R: Rng + ?Sized>(
    feedback: &Feedback,
    level1: bool,
    level2: bool,
    labels: LabelShuffle,
    rng: &mut R,
) -> Feedback {
    let mut out = feedback.clone();
    if level1 {
        let mut scores: Vec<f64> = out.records.iter().map(|r| r.score).collect();
        fisher_yates(&mut scores, rng);
        for (r, s) in out.records.iter_mut().zip(scores) {
            r.score = s;
        }
    }
    if level2 {
        match labels {
            LabelShuffle::Permute => {
                let mut hits: Vec<bool> = out.records.iter().map(|r| r.hit).collect();
                fisher_yates(&mut hits, rng);
                for (r, h) in out.records.iter_mut().zip(hits) {
                    r.hit = h;
                }
            }
            LabelShuffle::Flip => {
                for r in &mut out.records {
                    if rng.gen_bool(0.5) {
                        r.hit = !r.hit;
                    }
                }
            }
        }
    }
    out
}
