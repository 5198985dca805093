//! Per-scorer summaries over repetitions, pooled ensembles, and the
//! high-confidence model filter.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{PredictionRecord, PredictionValue};
use crate::error::{Error, Result};

/// Repetition statistics for one (scorer, argument).
///
/// `mean_score` is `None` when every repetition was NA. `score_sd` is the
/// sample standard deviation and needs at least two scored repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub scorer_id: String,
    pub argument_id: String,
    pub mean_score: Option<f64>,
    pub score_sd: Option<f64>,
    pub na_count: usize,
    pub n_reps: usize,
}

impl PredictionSummary {
    /// Fraction of repetitions that returned NA.
    pub fn na_probability(&self) -> f64 {
        self.na_count as f64 / self.n_reps as f64
    }

    fn from_values(scorer_id: &str, argument_id: &str, values: &[PredictionValue]) -> Self {
        let scores: Vec<f64> = values.iter().filter_map(|v| v.score()).collect();
        let mean = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
        let sd = match (mean, scores.len()) {
            (Some(m), n) if n >= 2 => {
                let ss: f64 = scores.iter().map(|s| (s - m) * (s - m)).sum();
                Some((ss / (n - 1) as f64).sqrt())
            }
            _ => None,
        };
        PredictionSummary {
            scorer_id: scorer_id.to_owned(),
            argument_id: argument_id.to_owned(),
            mean_score: mean,
            score_sd: sd,
            na_count: values.len() - scores.len(),
            n_reps: values.len(),
        }
    }
}

/// Named set of member models whose repetitions are pooled into one scorer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub ensemble_id: String,
    pub member_model_ids: BTreeSet<String>,
}

impl EnsembleSpec {
    pub fn new<I, S>(ensemble_id: impl Into<String>, members: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        EnsembleSpec {
            ensemble_id: ensemble_id.into(),
            member_model_ids: members.into_iter().map(Into::into).collect(),
        }
    }
}

/// Groups repetition values by argument in a fixed (argument, model, repetition) order.
fn group_by_argument<'a, I>(records: I) -> BTreeMap<&'a str, Vec<PredictionValue>>
where
    I: IntoIterator<Item = &'a PredictionRecord>,
{
    let mut keyed: Vec<&PredictionRecord> = records.into_iter().collect();
    keyed.sort_by(|a, b| (&a.argument_id, &a.model_id, a.repetition).cmp(&(&b.argument_id, &b.model_id, b.repetition)));
    let mut groups: BTreeMap<&str, Vec<PredictionValue>> = BTreeMap::new();
    for r in keyed {
        groups.entry(r.argument_id.as_str()).or_default().push(r.value);
    }
    groups
}

/// One summary per argument for the given records, labelled with `scorer_id`.
pub fn summarize<'a, I>(scorer_id: &str, records: I) -> Result<Vec<PredictionSummary>>
where
    I: IntoIterator<Item = &'a PredictionRecord>,
{
    let groups = group_by_argument(records);
    if groups.is_empty() {
        return Err(Error::invalid(format!("no prediction records for scorer {scorer_id}")));
    }
    Ok(groups
        .into_iter()
        .map(|(arg, values)| PredictionSummary::from_values(scorer_id, arg, &values))
        .collect())
}

/// Summaries for every model in `records`, ordered by (model, argument).
pub fn summarize_models(records: &[PredictionRecord]) -> Result<Vec<PredictionSummary>> {
    let mut by_model: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        by_model.entry(&r.model_id).or_default().push(r);
    }
    let mut out = Vec::new();
    for (model, recs) in by_model {
        out.extend(summarize(model, recs)?);
    }
    Ok(out)
}

fn check_members(spec: &EnsembleSpec, records: &[PredictionRecord]) -> Result<()> {
    if spec.member_model_ids.is_empty() {
        return Err(Error::invalid(format!("ensemble {} has no members", spec.ensemble_id)));
    }
    let present: BTreeSet<&str> = records.iter().map(|r| r.model_id.as_str()).collect();
    for m in &spec.member_model_ids {
        if !present.contains(m.as_str()) {
            return Err(Error::invalid(format!(
                "ensemble {}: member {m} has no prediction records",
                spec.ensemble_id
            )));
        }
    }
    Ok(())
}

/// Summaries over the pooled repetitions of all ensemble members.
pub fn pool_ensemble(spec: &EnsembleSpec, records: &[PredictionRecord]) -> Result<Vec<PredictionSummary>> {
    check_members(spec, records)?;
    summarize(
        &spec.ensemble_id,
        records.iter().filter(|r| spec.member_model_ids.contains(&r.model_id)),
    )
}

/// Per-model counts of arguments whose repetitions were mostly scored vs mostly NA.
///
/// An argument counts as political for a model when strictly more of its
/// repetitions carry a score than NA; an exact tie counts as apolitical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoliticalCounts {
    pub political: usize,
    pub apolitical: usize,
}

pub fn political_counts(model_id: &str, records: &[PredictionRecord]) -> Result<PoliticalCounts> {
    let groups = group_by_argument(records.iter().filter(|r| r.model_id == model_id));
    if groups.is_empty() {
        return Err(Error::invalid(format!("no prediction records for model {model_id}")));
    }
    let mut counts = PoliticalCounts {
        political: 0,
        apolitical: 0,
    };
    for values in groups.values() {
        let na = values.iter().filter(|v| v.is_na()).count();
        if values.len() - na > na {
            counts.political += 1;
        } else {
            counts.apolitical += 1;
        }
    }
    Ok(counts)
}

/// Models with more political-majority arguments than NA-majority arguments.
pub fn select_high_confidence_models<S: AsRef<str>>(
    records: &[PredictionRecord],
    candidate_models: &[S],
) -> Result<BTreeSet<String>> {
    if candidate_models.is_empty() {
        return Err(Error::invalid("empty candidate model set"));
    }
    let mut reference: Option<(&str, BTreeSet<&str>)> = None;
    let mut selected = BTreeSet::new();
    for m in candidate_models {
        let m = m.as_ref();
        let args: BTreeSet<&str> = records
            .iter()
            .filter(|r| r.model_id == m)
            .map(|r| r.argument_id.as_str())
            .collect();
        match &reference {
            None => reference = Some((m, args)),
            Some((first, ref_args)) if *ref_args != args => {
                return Err(Error::invalid(format!(
                    "models {first} and {m} were scored on different argument sets"
                )));
            }
            Some(_) => {}
        }
        let c = political_counts(m, records)?;
        if c.political > c.apolitical {
            selected.insert(m.to_owned());
        }
    }
    Ok(selected)
}
