//! Confidence buckets over NA probability, dataset sampling and partitioning,
//! binarized predictions and classification metrics against human labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{BinaryLabel, PointwiseAnnotation};
use crate::error::{Error, Result};
use crate::reliability::{krippendorff_alpha, majority_label, Level, ReliabilityGrid};
use crate::rng::stream_rng;
use crate::stats::PredictionSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConfidenceBucket {
    /// NA probability at most 0.05.
    #[serde(rename = "H_pol")]
    HighPolitical,
    /// NA probability in [0.45, 0.55].
    #[serde(rename = "L")]
    Low,
    /// NA probability at least 0.95.
    #[serde(rename = "H_apol")]
    HighApolitical,
}

impl ConfidenceBucket {
    pub const ALL: [ConfidenceBucket; 3] = [
        ConfidenceBucket::HighPolitical,
        ConfidenceBucket::Low,
        ConfidenceBucket::HighApolitical,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ConfidenceBucket::HighPolitical => "H_pol",
            ConfidenceBucket::Low => "L",
            ConfidenceBucket::HighApolitical => "H_apol",
        }
    }

    fn stream(self) -> u64 {
        match self {
            ConfidenceBucket::HighPolitical => 0,
            ConfidenceBucket::Low => 1,
            ConfidenceBucket::HighApolitical => 2,
        }
    }

    pub fn is_confident(self) -> bool {
        !matches!(self, ConfidenceBucket::Low)
    }
}

impl fmt::Display for ConfidenceBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for ConfidenceBucket {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ConfidenceBucket::ALL
            .into_iter()
            .find(|b| b.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown bucket {s:?}"))
    }
}

pub fn assign_bucket(na_probability: f64) -> Result<Option<ConfidenceBucket>> {
    if !(0.0..=1.0).contains(&na_probability) {
        return Err(Error::invalid(format!(
            "NA probability {na_probability} outside [0, 1]"
        )));
    }
    Ok(if na_probability <= 0.05 {
        Some(ConfidenceBucket::HighPolitical)
    } else if (0.45..=0.55).contains(&na_probability) {
        Some(ConfidenceBucket::Low)
    } else if na_probability >= 0.95 {
        Some(ConfidenceBucket::HighApolitical)
    } else {
        None
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub h_pol: usize,
    pub l: usize,
    pub h_apol: usize,
}

impl BucketCounts {
    pub fn get(&self, bucket: ConfidenceBucket) -> usize {
        match bucket {
            ConfidenceBucket::HighPolitical => self.h_pol,
            ConfidenceBucket::Low => self.l,
            ConfidenceBucket::HighApolitical => self.h_apol,
        }
    }
}

impl Default for BucketCounts {
    fn default() -> Self {
        BucketCounts {
            h_pol: 400,
            l: 200,
            h_apol: 400,
        }
    }
}

/// Arguments tagged with their confidence bucket.
///
/// The confident partition holds both high-confidence buckets, the ambiguous
/// partition holds the low-confidence bucket; together they cover the dataset
/// exactly once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PointwiseDataset {
    pub members: BTreeMap<String, ConfidenceBucket>,
}

impl PointwiseDataset {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn all(&self) -> BTreeSet<String> {
        self.members.keys().cloned().collect()
    }

    pub fn confident(&self) -> BTreeSet<String> {
        self.filtered(|b| b.is_confident())
    }

    pub fn ambiguous(&self) -> BTreeSet<String> {
        self.filtered(|b| !b.is_confident())
    }

    pub fn bucket(&self, bucket: ConfidenceBucket) -> BTreeSet<String> {
        self.filtered(|b| b == bucket)
    }

    fn filtered(&self, keep: impl Fn(ConfidenceBucket) -> bool) -> BTreeSet<String> {
        self.members
            .iter()
            .filter(|(_, b)| keep(**b))
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Buckets every summary that falls in one; others are left out.
    pub fn from_summaries(summaries: &[PredictionSummary]) -> Result<PointwiseDataset> {
        let mut members = BTreeMap::new();
        for s in summaries {
            if let Some(b) = assign_bucket(s.na_probability())? {
                members.insert(s.argument_id.clone(), b);
            }
        }
        Ok(PointwiseDataset { members })
    }

    pub fn partition(&self, which: Partition) -> BTreeSet<String> {
        match which {
            Partition::Full => self.all(),
            Partition::Confident => self.confident(),
            Partition::Ambiguous => self.ambiguous(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Full,
    #[serde(rename = "conf")]
    Confident,
    #[serde(rename = "ambig")]
    Ambiguous,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Full, Partition::Confident, Partition::Ambiguous];

    pub fn tag(self) -> &'static str {
        match self {
            Partition::Full => "full",
            Partition::Confident => "conf",
            Partition::Ambiguous => "ambig",
        }
    }
}

/// Uniform per-bucket sample without replacement from the reference scorer's summaries.
///
/// Each bucket draws from its own generator stream keyed by `(seed, bucket)`.
pub fn sample_dataset(summaries: &[PredictionSummary], counts: BucketCounts, seed: u64) -> Result<PointwiseDataset> {
    let pool = PointwiseDataset::from_summaries(summaries)?;
    let mut members = BTreeMap::new();
    for bucket in ConfidenceBucket::ALL {
        let want = counts.get(bucket);
        let candidates: Vec<String> = pool.bucket(bucket).into_iter().collect();
        if candidates.len() < want {
            return Err(Error::invalid(format!(
                "bucket {bucket}: requested {want}, only {} candidates (short by {})",
                candidates.len(),
                want - candidates.len()
            )));
        }
        let mut rng = stream_rng(seed, bucket.stream());
        for i in index::sample(&mut rng, candidates.len(), want) {
            members.insert(candidates[i].clone(), bucket);
        }
    }
    Ok(PointwiseDataset { members })
}

/// Apolitical iff the NA probability strictly exceeds `threshold`.
pub fn binarize_prediction(summary: &PredictionSummary, threshold: f64) -> BinaryLabel {
    if summary.na_probability() > threshold {
        BinaryLabel::Apolitical
    } else {
        BinaryLabel::Political
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub n: usize,
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// Precision for the political class.
    pub precision: f64,
    /// Recall for the political class.
    pub recall: f64,
    pub balanced_accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

/// Binary metrics with human labels as truth and political as the positive class.
pub fn classification_metrics(
    truth: &BTreeMap<String, BinaryLabel>,
    pred: &BTreeMap<String, BinaryLabel>,
    subset: &BTreeSet<String>,
) -> Result<ClassificationMetrics> {
    if subset.is_empty() {
        return Err(Error::invalid("classification metrics over an empty subset"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for id in subset {
        let (t, p) = match (truth.get(id), pred.get(id)) {
            (Some(t), Some(p)) => (*t, *p),
            _ => {
                return Err(Error::invalid(format!(
                    "argument {id} lacks a truth or predicted label"
                )))
            }
        };
        match (t, p) {
            (BinaryLabel::Political, BinaryLabel::Political) => tp += 1,
            (BinaryLabel::Political, BinaryLabel::Apolitical) => fn_ += 1,
            (BinaryLabel::Apolitical, BinaryLabel::Political) => fp += 1,
            (BinaryLabel::Apolitical, BinaryLabel::Apolitical) => tn += 1,
        }
    }
    let n = subset.len();
    let f1_pol = f1(tp, fp, fn_);
    let f1_apol = f1(tn, fn_, fp);
    let recall_pol = ratio(tp, tp + fn_);
    let recall_apol = ratio(tn, tn + fp);
    Ok(ClassificationMetrics {
        n,
        macro_f1: (f1_pol + f1_apol) / 2.0,
        micro_f1: ratio(tp + tn, n),
        precision: ratio(tp, tp + fp),
        recall: recall_pol,
        balanced_accuracy: (recall_pol + recall_apol) / 2.0,
    })
}

/// Nominal alpha across models (raters) over the subset's arguments (units).
pub fn inter_model_alpha(
    predictions: &BTreeMap<String, BTreeMap<String, BinaryLabel>>,
    subset: &BTreeSet<String>,
) -> Result<f64> {
    if predictions.len() < 2 {
        return Err(Error::invalid(format!(
            "inter-model alpha needs at least 2 models, got {}",
            predictions.len()
        )));
    }
    let mut grid = ReliabilityGrid::new(Level::Nominal);
    for (model, labels) in predictions {
        for id in subset {
            if let Some(l) = labels.get(id) {
                grid.insert_label(id, model, l.as_str());
            }
        }
    }
    krippendorff_alpha(&grid)
}

/// Human majority label per argument, with a unanimity flag.
pub fn human_majority(annotations: &[PointwiseAnnotation]) -> Result<BTreeMap<String, (BinaryLabel, bool)>> {
    let mut votes: BTreeMap<&str, Vec<BinaryLabel>> = BTreeMap::new();
    for a in annotations {
        votes.entry(&a.argument_id).or_default().push(a.label);
    }
    votes
        .into_iter()
        .map(|(id, v)| {
            majority_label(&v)
                .map(|m| (id.to_owned(), m))
                .map_err(|e| Error::invalid(format!("argument {id}: {e}")))
        })
        .collect()
}

/// Nominal inter-annotator alpha restricted to `subset`.
pub fn annotator_alpha(annotations: &[PointwiseAnnotation], subset: &BTreeSet<String>) -> Result<f64> {
    let mut grid = ReliabilityGrid::new(Level::Nominal);
    for a in annotations.iter().filter(|a| subset.contains(&a.argument_id)) {
        grid.insert_label(&a.argument_id, &a.annotator_id, a.label.as_str());
    }
    krippendorff_alpha(&grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryLabel::{Apolitical as A, Political as P};

    fn summary(id: &str, na: usize, reps: usize) -> PredictionSummary {
        PredictionSummary {
            scorer_id: "E".into(),
            argument_id: id.into(),
            mean_score: (na < reps).then_some(50.0),
            score_sd: None,
            na_count: na,
            n_reps: reps,
        }
    }

    #[test]
    fn bucket_thresholds() {
        assert_eq!(assign_bucket(0.03).unwrap(), Some(ConfidenceBucket::HighPolitical));
        assert_eq!(assign_bucket(0.05).unwrap(), Some(ConfidenceBucket::HighPolitical));
        assert_eq!(assign_bucket(0.50).unwrap(), Some(ConfidenceBucket::Low));
        assert_eq!(assign_bucket(0.45).unwrap(), Some(ConfidenceBucket::Low));
        assert_eq!(assign_bucket(0.55).unwrap(), Some(ConfidenceBucket::Low));
        assert_eq!(assign_bucket(0.95).unwrap(), Some(ConfidenceBucket::HighApolitical));
        assert_eq!(assign_bucket(0.70).unwrap(), None);
        assert_eq!(assign_bucket(0.06).unwrap(), None);
        assert!(assign_bucket(1.2).is_err());
        assert!(assign_bucket(-0.1).is_err());
        // 9/20 and 11/20 computed from repetition counts land on the boundaries.
        assert_eq!(
            assign_bucket(summary("x", 9, 20).na_probability()).unwrap(),
            Some(ConfidenceBucket::Low)
        );
        assert_eq!(
            assign_bucket(summary("x", 11, 20).na_probability()).unwrap(),
            Some(ConfidenceBucket::Low)
        );
    }

    fn pool() -> Vec<PredictionSummary> {
        let mut v = Vec::new();
        for i in 0..500 {
            v.push(summary(&format!("p{i:03}"), 0, 60));
            v.push(summary(&format!("a{i:03}"), 60, 60));
            v.push(summary(&format!("x{i:03}"), 20, 60));
        }
        for i in 0..300 {
            v.push(summary(&format!("l{i:03}"), 30, 60));
        }
        v
    }

    #[test]
    fn sampling_sizes_and_determinism() {
        let p = pool();
        let d = sample_dataset(&p, BucketCounts::default(), 11).unwrap();
        assert_eq!(d.len(), 1000);
        assert_eq!(d.bucket(ConfidenceBucket::HighPolitical).len(), 400);
        assert_eq!(d.bucket(ConfidenceBucket::Low).len(), 200);
        assert_eq!(d.bucket(ConfidenceBucket::HighApolitical).len(), 400);
        assert_eq!(d, sample_dataset(&p, BucketCounts::default(), 11).unwrap());
        assert_ne!(d, sample_dataset(&p, BucketCounts::default(), 12).unwrap());

        let empty = sample_dataset(
            &p,
            BucketCounts {
                h_pol: 0,
                l: 0,
                h_apol: 0,
            },
            1,
        )
        .unwrap();
        assert!(empty.is_empty());

        let err = sample_dataset(
            &p,
            BucketCounts {
                h_pol: 0,
                l: 301,
                h_apol: 0,
            },
            1,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bucket L") && msg.contains("short by 1"), "{msg}");
    }

    #[test]
    fn partitions_are_exact() {
        let d = sample_dataset(&pool(), BucketCounts::default(), 3).unwrap();
        let conf = d.confident();
        let ambig = d.ambiguous();
        assert!(conf.is_disjoint(&ambig));
        let union: BTreeSet<String> = conf.union(&ambig).cloned().collect();
        assert_eq!(union, d.all());
        assert_eq!(conf.len(), 800);
    }

    #[test]
    fn binarization_boundary() {
        assert_eq!(binarize_prediction(&summary("x", 4, 5), 0.5), A);
        assert_eq!(binarize_prediction(&summary("x", 0, 5), 0.5), P);
        assert_eq!(binarize_prediction(&summary("x", 5, 10), 0.5), P);
    }

    fn labelled(
        pairs: &[(BinaryLabel, BinaryLabel)],
    ) -> (
        BTreeMap<String, BinaryLabel>,
        BTreeMap<String, BinaryLabel>,
        BTreeSet<String>,
    ) {
        let mut t = BTreeMap::new();
        let mut p = BTreeMap::new();
        for (i, (a, b)) in pairs.iter().enumerate() {
            t.insert(format!("u{i:04}"), *a);
            p.insert(format!("u{i:04}"), *b);
        }
        let s = t.keys().cloned().collect();
        (t, p, s)
    }

    #[test]
    fn confusion_matrix_metrics() {
        let mut rows = Vec::new();
        rows.extend(std::iter::repeat_n((P, P), 40));
        rows.extend(std::iter::repeat_n((P, A), 10));
        rows.extend(std::iter::repeat_n((A, P), 20));
        rows.extend(std::iter::repeat_n((A, A), 30));
        let (t, p, s) = labelled(&rows);
        let m = classification_metrics(&t, &p, &s).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 0.8).abs() < 1e-15);
        assert!((m.balanced_accuracy - 0.7).abs() < 1e-15);
        assert!((m.micro_f1 - 0.7).abs() < 1e-15);
        // F1_pol = 80/110, F1_apol = 60/90.
        assert!((m.macro_f1 - (80.0 / 110.0 + 60.0 / 90.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_constant_predictions() {
        let (t, p, s) = labelled(&[(P, P), (A, A), (P, P), (A, A)]);
        let m = classification_metrics(&t, &p, &s).unwrap();
        assert_eq!(
            (m.macro_f1, m.micro_f1, m.precision, m.recall, m.balanced_accuracy),
            (1.0, 1.0, 1.0, 1.0, 1.0)
        );
        let (t, p, s) = labelled(&[(P, P), (A, P), (P, P), (A, P)]);
        let m = classification_metrics(&t, &p, &s).unwrap();
        assert_eq!(m.balanced_accuracy, 0.5);
        assert!(classification_metrics(&t, &p, &BTreeSet::new()).is_err());
    }

    #[test]
    fn inter_model_agreement() {
        let (a, b, s) = labelled(&[(P, A), (A, P), (P, A), (A, P)]);
        let same: BTreeMap<String, _> = [("m1".to_string(), a.clone()), ("m2".to_string(), a.clone())].into();
        assert_eq!(inter_model_alpha(&same, &s).unwrap(), 1.0);
        let opposite: BTreeMap<String, _> = [("m1".to_string(), a.clone()), ("m2".to_string(), b)].into();
        // Four fully disagreeing balanced units: -1 + 1/4.
        assert!((inter_model_alpha(&opposite, &s).unwrap() + 0.75).abs() < 1e-12);
        let single: BTreeMap<String, _> = [("m1".to_string(), a)].into();
        assert!(inter_model_alpha(&single, &s).is_err());
    }

    #[test]
    fn human_majorities() {
        let ann = |who: &str, id: &str, l| PointwiseAnnotation {
            annotator_id: who.into(),
            argument_id: id.into(),
            label: l,
        };
        let rows = vec![ann("x", "a", P), ann("y", "a", P), ann("z", "a", A), ann("x", "b", A)];
        let m = human_majority(&rows).unwrap();
        assert_eq!(m["a"], (P, false));
        assert_eq!(m["b"], (A, true));
        let bad = vec![ann("x", "a", P), ann("y", "a", A)];
        assert!(human_majority(&bad).is_err());
    }
}
