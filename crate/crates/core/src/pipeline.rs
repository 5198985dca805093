//! Pipeline stages and the end-to-end run.
//!
//! Each stage is a plain function over in-memory data plus a renderer for its
//! artifact, so the CLI subcommands and [`run_pipeline`] produce the same bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifacts::{csv_text, json_text, read_checked, rounded, sha256_file, summaries_text, OutputDir};
use crate::btrank::{fit_bt_ilsr, IlsrOptions, LatentScale};
use crate::comparisons::{
    confidence_partition, human_win_matrix, model_win_matrix, normalized, repetition_deciles, ConfidencePartition,
    FramingFilter, PairSubset, WinMatrix,
};
use crate::config::PipelineConfig;
use crate::corpus::{self, Framing, PairwiseAnnotation, PointwiseAnnotation, PredictionRecord};
use crate::error::{Error, Result};
use crate::pairs::{
    bin_scores, check_sample_size, count_components, node_entropy, sample_pairs, EntropyReport, ItemPair, PairSet,
    PositionBinning, SampleSizeCheck,
};
use crate::pointwise::{
    annotator_alpha, binarize_prediction, classification_metrics, human_majority, inter_model_alpha, sample_dataset,
    ClassificationMetrics, Partition, PointwiseDataset,
};
use crate::rank_eval::{evaluate_scorers, EvalInputs, ReportRow};
use crate::reliability::two_party_alpha;
use crate::stats::{
    political_counts, pool_ensemble, select_high_confidence_models, summarize_models, EnsembleSpec, PredictionSummary,
};

/// An ensemble with its final member list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedEnsemble {
    pub id: String,
    pub members: Vec<String>,
    pub high_confidence: bool,
    /// Per-candidate counts; filled only for high-confidence ensembles.
    pub candidates: Vec<CandidateCount>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCount {
    pub model: String,
    pub political: usize,
    pub apolitical: usize,
    pub selected: bool,
}

impl ResolvedEnsemble {
    pub fn spec(&self) -> EnsembleSpec {
        EnsembleSpec::new(self.id.clone(), self.members.iter().cloned())
    }
}

pub fn model_ids(records: &[PredictionRecord]) -> BTreeSet<String> {
    records.iter().map(|r| r.model_id.clone()).collect()
}

pub fn resolve_ensembles(cfg: &PipelineConfig, records: &[PredictionRecord]) -> Result<Vec<ResolvedEnsemble>> {
    let models = model_ids(records);
    let mut out = Vec::new();
    for def in &cfg.ensembles {
        if models.contains(&def.id) {
            return Err(Error::Config(format!(
                "ensemble id {} collides with a model id",
                def.id
            )));
        }
        if let Some(m) = def.members.iter().find(|m| !models.contains(*m)) {
            return Err(Error::invalid(format!(
                "ensemble {}: member {m} has no prediction records",
                def.id
            )));
        }
        if !def.high_confidence {
            let mut members = def.members.clone();
            members.sort();
            out.push(ResolvedEnsemble {
                id: def.id.clone(),
                members,
                high_confidence: false,
                candidates: Vec::new(),
            });
            continue;
        }
        let selected = select_high_confidence_models(records, &def.members)?;
        if selected.is_empty() {
            return Err(Error::invalid(format!(
                "ensemble {}: no candidate model qualifies",
                def.id
            )));
        }
        let mut candidates = Vec::new();
        for m in &def.members {
            let c = political_counts(m, records)?;
            candidates.push(CandidateCount {
                model: m.clone(),
                political: c.political,
                apolitical: c.apolitical,
                selected: selected.contains(m),
            });
        }
        candidates.sort_by(|a, b| a.model.cmp(&b.model));
        out.push(ResolvedEnsemble {
            id: def.id.clone(),
            members: selected.into_iter().collect(),
            high_confidence: true,
            candidates,
        });
    }
    Ok(out)
}

pub fn ensemble_summaries(
    ensembles: &[ResolvedEnsemble],
    records: &[PredictionRecord],
) -> Result<Vec<PredictionSummary>> {
    let mut out = Vec::new();
    for e in ensembles {
        out.extend(pool_ensemble(&e.spec(), records)?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    ensembles: Vec<ResolvedEnsemble>,
}

pub fn ensembles_text(hash: &str, ensembles: &[ResolvedEnsemble]) -> Result<String> {
    json_text(
        Some(hash),
        &EnsembleFile {
            ensembles: ensembles.to_vec(),
        },
    )
}

/// Summaries of one scorer, keyed by argument.
pub fn scorer_summaries<'a>(summaries: &'a [PredictionSummary], scorer: &str) -> Result<Vec<&'a PredictionSummary>> {
    let found: Vec<&PredictionSummary> = summaries.iter().filter(|s| s.scorer_id == scorer).collect();
    if found.is_empty() {
        return Err(Error::invalid(format!("no summaries for scorer {scorer}")));
    }
    Ok(found)
}

fn reference_of(cfg: &PipelineConfig) -> Result<&str> {
    cfg.reference
        .as_deref()
        .ok_or_else(|| Error::Config("`reference` (scorer id) is required for this stage".into()))
}

pub fn pointwise_sample_text(hash: &str, dataset: &PointwiseDataset) -> Result<String> {
    csv_text(
        hash,
        &["argument_id", "bucket"],
        dataset
            .members
            .iter()
            .map(|(id, b)| vec![id.clone(), b.tag().to_owned()]),
    )
}

/// Draws the bucketed pointwise sample from the reference scorer's summaries.
pub fn sample_pointwise(cfg: &PipelineConfig, summaries: &[PredictionSummary]) -> Result<PointwiseDataset> {
    let reference = reference_of(cfg)?;
    let counts = cfg
        .buckets
        .ok_or_else(|| Error::Config("`[buckets]` is required for pointwise sampling".into()))?;
    let own: Vec<PredictionSummary> = scorer_summaries(summaries, reference)?.into_iter().cloned().collect();
    sample_dataset(&own, counts, cfg.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRow {
    pub scorer: String,
    pub partition: String,
    pub n: usize,
    pub metrics: Option<ClassificationMetrics>,
    /// Nominal alpha between the scorer's labels and the human majority.
    pub alpha_n: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionAgreement {
    pub partition: String,
    pub n: usize,
    pub annotator_alpha: Option<f64>,
    pub unanimous_fraction: Option<f64>,
    pub inter_model_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseEvaluation {
    pub reference: String,
    pub threshold: f64,
    pub n_annotated: usize,
    /// Annotated arguments outside every confidence bucket of the reference scorer.
    pub n_unbucketed: usize,
    pub bucket_sizes: BTreeMap<String, usize>,
    pub agreement: Vec<PartitionAgreement>,
    pub rows: Vec<PointwiseRow>,
}

const PARTITIONS: [Partition; 3] = [Partition::Full, Partition::Confident, Partition::Ambiguous];

fn optional<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_computation() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores every scorer's binarized predictions against the human majority.
///
/// The evaluated set is every annotated argument that falls in a confidence
/// bucket under the reference scorer; `models` names the scorers that take
/// part in inter-model agreement.
pub fn evaluate_pointwise(
    summaries: &[PredictionSummary],
    scorers: &[String],
    models: &BTreeSet<String>,
    reference: &str,
    annotations: &[PointwiseAnnotation],
    threshold: f64,
) -> Result<PointwiseEvaluation> {
    let reference_summaries: Vec<PredictionSummary> =
        scorer_summaries(summaries, reference)?.into_iter().cloned().collect();
    let pool = PointwiseDataset::from_summaries(&reference_summaries)?;
    let annotated: BTreeSet<&str> = annotations.iter().map(|a| a.argument_id.as_str()).collect();
    let dataset = PointwiseDataset {
        members: pool
            .members
            .into_iter()
            .filter(|(id, _)| annotated.contains(id.as_str()))
            .collect(),
    };
    let in_data: Vec<PointwiseAnnotation> = annotations
        .iter()
        .filter(|a| dataset.members.contains_key(&a.argument_id))
        .cloned()
        .collect();
    let majority = human_majority(&in_data)?;
    let truth: BTreeMap<String, _> = majority.iter().map(|(k, (l, _))| (k.clone(), *l)).collect();

    let mut predictions = BTreeMap::new();
    for scorer in scorers {
        let own = scorer_summaries(summaries, scorer)?;
        let labels: BTreeMap<String, _> = own
            .into_iter()
            .filter(|s| dataset.members.contains_key(&s.argument_id))
            .map(|s| (s.argument_id.clone(), binarize_prediction(s, threshold)))
            .collect();
        predictions.insert(scorer.clone(), labels);
    }

    let mut agreement = Vec::new();
    let mut rows = Vec::new();
    for part in PARTITIONS {
        let subset = dataset.partition(part);
        let n = subset.len();
        let unanimous = subset.iter().filter(|id| majority[*id].1).count();
        let model_preds: BTreeMap<String, _> = predictions
            .iter()
            .filter(|(k, _)| models.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        agreement.push(PartitionAgreement {
            partition: part.tag().to_owned(),
            n,
            annotator_alpha: if n == 0 {
                None
            } else {
                optional(annotator_alpha(&in_data, &subset))?
            },
            unanimous_fraction: (n > 0).then(|| unanimous as f64 / n as f64),
            inter_model_alpha: if n == 0 || model_preds.len() < 2 {
                None
            } else {
                optional(inter_model_alpha(&model_preds, &subset))?
            },
        });
        for scorer in scorers {
            let pred = &predictions[scorer];
            if let Some(missing) = subset.iter().find(|id| !pred.contains_key(*id)) {
                return Err(Error::invalid(format!(
                    "scorer {scorer} has no prediction for argument {missing}"
                )));
            }
            if n == 0 {
                rows.push(PointwiseRow {
                    scorer: scorer.clone(),
                    partition: part.tag().to_owned(),
                    n,
                    metrics: None,
                    alpha_n: None,
                    note: Some("empty partition".into()),
                });
                continue;
            }
            let restrict = |m: &BTreeMap<String, _>| -> BTreeMap<String, _> {
                m.iter()
                    .filter(|(k, _)| subset.contains(*k))
                    .map(|(k, v)| (k.clone(), *v))
                    .collect()
            };
            let alpha = optional(two_party_alpha(&restrict(&truth), &restrict(pred)))?;
            rows.push(PointwiseRow {
                scorer: scorer.clone(),
                partition: part.tag().to_owned(),
                n,
                metrics: Some(classification_metrics(&truth, pred, &subset)?),
                alpha_n: alpha,
                note: alpha.is_none().then(|| "alpha undefined (single label)".to_owned()),
            });
        }
    }
    let mut bucket_sizes = BTreeMap::new();
    for b in dataset.members.values() {
        *bucket_sizes.entry(b.tag().to_owned()).or_insert(0) += 1;
    }
    Ok(PointwiseEvaluation {
        reference: reference.to_owned(),
        threshold,
        n_annotated: annotated.len(),
        n_unbucketed: annotated.len() - dataset.len(),
        bucket_sizes,
        agreement,
        rows,
    })
}

pub fn pointwise_metrics_text(hash: &str, eval: &PointwiseEvaluation) -> Result<String> {
    let full = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    csv_text(
        hash,
        &[
            "scorer",
            "partition",
            "n",
            "macro_f1",
            "micro_f1",
            "precision",
            "recall",
            "balanced_accuracy",
            "alpha_n",
        ],
        eval.rows.iter().map(|r| {
            let m = r.metrics;
            vec![
                r.scorer.clone(),
                r.partition.clone(),
                r.n.to_string(),
                full(m.map(|m| m.macro_f1)),
                full(m.map(|m| m.micro_f1)),
                full(m.map(|m| m.precision)),
                full(m.map(|m| m.recall)),
                full(m.map(|m| m.balanced_accuracy)),
                full(r.alpha_n),
            ]
        }),
    )
}

pub fn pointwise_agreement_text(hash: &str, eval: &PointwiseEvaluation) -> Result<String> {
    json_text(Some(hash), eval)
}

/// Sorted distinct items referenced by pairwise annotations.
pub fn pairwise_items(annotations: &[PairwiseAnnotation]) -> Vec<String> {
    annotations
        .iter()
        .flat_map(|a| [a.arg_i.clone(), a.arg_j.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Reference mean scores for `items`, or for every scored argument when `items` is None.
pub fn reference_scores(
    summaries: &[PredictionSummary],
    reference: &str,
    items: Option<&[String]>,
) -> Result<BTreeMap<String, f64>> {
    let own = scorer_summaries(summaries, reference)?;
    let by_id: BTreeMap<&str, &PredictionSummary> = own.iter().map(|s| (s.argument_id.as_str(), *s)).collect();
    match items {
        Some(items) => items
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .and_then(|s| s.mean_score)
                    .map(|m| (id.clone(), m))
                    .ok_or_else(|| Error::invalid(format!("item {id} has no mean score under {reference}")))
            })
            .collect(),
        None => Ok(by_id
            .into_iter()
            .filter_map(|(id, s)| s.mean_score.map(|m| (id.to_owned(), m)))
            .collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDiagnostics {
    pub n_items: usize,
    pub n_pairs: usize,
    pub components: usize,
    pub connected: bool,
    pub sample_size: SampleSizeCheck,
    pub entropy: Option<EntropyReport>,
    pub entropy_note: Option<String>,
}

pub fn graph_diagnostics(pairs: &[ItemPair], binning: &PositionBinning) -> Result<GraphDiagnostics> {
    let items = binning.items();
    let components = count_components(pairs.iter().map(|p| (p.first.as_str(), p.second.as_str())), &items);
    let (entropy, entropy_note) = match node_entropy(pairs, binning) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(GraphDiagnostics {
        n_items: items.len(),
        n_pairs: pairs.len(),
        components,
        connected: components == 1,
        sample_size: check_sample_size(pairs.len(), items.len())?,
        entropy,
        entropy_note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinInfo {
    pub bin: usize,
    pub decile: u8,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumInfo {
    pub stratum: String,
    pub requested: usize,
    pub available: usize,
    pub drawn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub seed: u64,
    pub intra_per_bin: usize,
    pub inter_per_binpair: usize,
    pub bins: Vec<BinInfo>,
    pub strata: Vec<StratumInfo>,
    pub sampled: GraphDiagnostics,
    /// The same checks on the annotated pairs, when annotations are available.
    pub annotated: Option<GraphDiagnostics>,
}

pub struct PairDesign {
    pub binning: PositionBinning,
    pub pairs: PairSet,
    pub diagnostics: PairDiagnostics,
}

pub fn design_pairs(
    cfg: &PipelineConfig,
    scores: &BTreeMap<String, f64>,
    annotated: Option<&[ItemPair]>,
) -> Result<PairDesign> {
    let binning = bin_scores(scores)?;
    let pairs = sample_pairs(&binning, cfg.pairs.intra, cfg.pairs.inter, cfg.seed);
    let bins = (1..=binning.k())
        .map(|b| BinInfo {
            bin: b,
            decile: binning.occupied_deciles[b - 1],
            size: binning.members(b).len(),
        })
        .collect();
    let strata = pairs
        .strata
        .iter()
        .map(|s| StratumInfo {
            stratum: s.stratum.to_string(),
            requested: s.requested,
            available: s.available,
            drawn: s.drawn,
        })
        .collect();
    let sampled = graph_diagnostics(&pairs.item_pairs(), &binning)?;
    let annotated = annotated.map(|p| graph_diagnostics(p, &binning)).transpose()?;
    Ok(PairDesign {
        diagnostics: PairDiagnostics {
            seed: cfg.seed,
            intra_per_bin: cfg.pairs.intra,
            inter_per_binpair: cfg.pairs.inter,
            bins,
            strata,
            sampled,
            annotated,
        },
        binning,
        pairs,
    })
}

pub fn pairs_text(hash: &str, pairs: &PairSet) -> Result<String> {
    csv_text(
        hash,
        &["arg_i", "arg_j", "stratum"],
        pairs
            .pairs
            .iter()
            .map(|p| vec![p.pair.first.clone(), p.pair.second.clone(), p.stratum.to_string()]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixRole {
    Human,
    HumanLeft,
    HumanRight,
    Model,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerMatrix {
    pub name: String,
    pub role: MatrixRole,
    pub members: Vec<String>,
    pub matrix: WinMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedScorer {
    pub scorer: String,
    pub reason: String,
}

/// Human and scorer win matrices over the pairwise items.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSet {
    pub items: Vec<String>,
    /// Human matrices first (aggregate, left, right), then scorers in report order.
    pub entries: Vec<ScorerMatrix>,
    pub skipped: Vec<SkippedScorer>,
}

impl MatrixSet {
    pub fn get(&self, name: &str) -> Option<&ScorerMatrix> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn role(&self, role: MatrixRole) -> Option<&WinMatrix> {
        self.entries.iter().find(|e| e.role == role).map(|e| &e.matrix)
    }

    pub fn human(&self) -> Result<&WinMatrix> {
        self.role(MatrixRole::Human)
            .ok_or_else(|| Error::invalid("matrix set has no aggregate human matrix"))
    }

    /// Pairs with at least one human judgement.
    pub fn annotated_pairs(&self) -> Result<Vec<ItemPair>> {
        Ok(self.human()?.compared_pairs())
    }
}

pub const HUMAN_MATRIX: &str = "human";
pub const HUMAN_LEFT_MATRIX: &str = "human_left";
pub const HUMAN_RIGHT_MATRIX: &str = "human_right";

/// Scorers in report order: models sorted by id, then ensembles in config order.
pub fn scorer_members(
    records: &[PredictionRecord],
    ensembles: &[ResolvedEnsemble],
) -> Vec<(String, MatrixRole, Vec<String>)> {
    let mut out: Vec<_> = model_ids(records)
        .into_iter()
        .map(|m| (m.clone(), MatrixRole::Model, vec![m]))
        .collect();
    out.extend(
        ensembles
            .iter()
            .map(|e| (e.id.clone(), MatrixRole::Ensemble, e.members.clone())),
    );
    out
}

/// Builds every matrix; scorers lacking a valid repetition for some item are skipped.
pub fn build_matrices(
    records: &[PredictionRecord],
    scorers: &[(String, MatrixRole, Vec<String>)],
    annotations: &[PairwiseAnnotation],
) -> Result<MatrixSet> {
    let items = pairwise_items(annotations);
    if items.len() < 2 {
        return Err(Error::invalid("pairwise annotations cover fewer than 2 items"));
    }
    let mut entries = vec![ScorerMatrix {
        name: HUMAN_MATRIX.into(),
        role: MatrixRole::Human,
        members: Vec::new(),
        matrix: human_win_matrix(annotations, &items, FramingFilter::Both)?,
    }];
    for (framing, filter, name, role) in [
        (
            Framing::Left,
            FramingFilter::Left,
            HUMAN_LEFT_MATRIX,
            MatrixRole::HumanLeft,
        ),
        (
            Framing::Right,
            FramingFilter::Right,
            HUMAN_RIGHT_MATRIX,
            MatrixRole::HumanRight,
        ),
    ] {
        if annotations.iter().any(|a| a.framing == framing) {
            entries.push(ScorerMatrix {
                name: name.into(),
                role,
                members: Vec::new(),
                matrix: human_win_matrix(annotations, &items, filter)?,
            });
        }
    }
    let mut skipped = Vec::new();
    for (name, role, members) in scorers {
        let set: BTreeSet<String> = members.iter().cloned().collect();
        let reps = repetition_deciles(records, &set, &items)?;
        if let Some((id, _)) = reps.iter().find(|(_, r)| r.is_empty()) {
            return Err(Error::invalid(format!(
                "scorer {name} has no predictions for item {id}"
            )));
        }
        match model_win_matrix(&reps) {
            Ok(matrix) => entries.push(ScorerMatrix {
                name: name.clone(),
                role: *role,
                members: members.clone(),
                matrix,
            }),
            Err(e) => {
                log::warn!("skipping scorer {name}: {e}");
                skipped.push(SkippedScorer {
                    scorer: name.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(MatrixSet {
        items,
        entries,
        skipped,
    })
}

/// File stem for a scorer name: anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    role: MatrixRole,
    file: String,
    members: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixIndex {
    items: Vec<String>,
    entries: Vec<IndexEntry>,
    skipped: Vec<SkippedScorer>,
}

pub fn matrix_text(hash: &str, wm: &WinMatrix) -> Result<String> {
    let mut buf = format!("{}{hash}\n", crate::artifacts::HASH_PREFIX).into_bytes();
    wm.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Long-format win mass over `pairs` with normalized values and confidence flags.
pub fn matrix_pairs_text(hash: &str, wm: &WinMatrix, pairs: &[ItemPair], margin: f64) -> Result<String> {
    let mut rows = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (i, j) = match (wm.index_of(&p.first), wm.index_of(&p.second)) {
            (Some(i), Some(j)) => (i, j),
            _ => return Err(Error::invalid(format!("pair {p} not in matrix"))),
        };
        let m = wm.mass(i, j);
        let hat = (m > 0.0).then(|| wm.get(i, j) / m);
        rows.push(vec![
            p.first.clone(),
            p.second.clone(),
            wm.get(i, j).to_string(),
            wm.get(j, i).to_string(),
            m.to_string(),
            hat.map_or_else(|| "NA".into(), |h| h.to_string()),
            hat.map_or_else(String::new, |h| crate::comparisons::is_confident(h, margin).to_string()),
        ]);
    }
    csv_text(
        hash,
        &["arg_i", "arg_j", "W_ij", "W_ji", "M_ij", "W_hat_ij", "confident"],
        rows,
    )
}

/// Writes `matrices/<stem>.csv`, `matrix_pairs/<stem>.csv` and `matrices/index.json`.
pub fn write_matrix_set(out: &mut OutputDir, hash: &str, set: &MatrixSet, margin: f64) -> Result<()> {
    let pairs = set.annotated_pairs()?;
    let mut entries = Vec::new();
    let mut stems = BTreeSet::new();
    for e in &set.entries {
        let stem = file_stem(&e.name);
        if !stems.insert(stem.clone()) {
            return Err(Error::invalid(format!("scorer names collide on file name {stem}")));
        }
        out.write(&format!("matrices/{stem}.csv"), &matrix_text(hash, &e.matrix)?)?;
        out.write(
            &format!("matrix_pairs/{stem}.csv"),
            &matrix_pairs_text(hash, &e.matrix, &pairs, margin)?,
        )?;
        entries.push(IndexEntry {
            name: e.name.clone(),
            role: e.role,
            file: format!("{stem}.csv"),
            members: e.members.clone(),
        });
    }
    let index = MatrixIndex {
        items: set.items.clone(),
        entries,
        skipped: set.skipped.clone(),
    };
    out.write("matrices/index.json", &json_text(Some(hash), &index)?)?;
    Ok(())
}

/// Loads a directory written by [`write_matrix_set`].
pub fn read_matrix_set(dir: &Path, hash: &str, force: bool) -> Result<MatrixSet> {
    let index: MatrixIndex = serde_json::from_str(&read_checked(&dir.join("index.json"), hash, force)?)?;
    let mut entries = Vec::new();
    for e in index.entries {
        let path = dir.join(&e.file);
        let text = read_checked(&path, hash, force)?;
        let matrix = WinMatrix::read_csv(text.as_bytes(), &path.display().to_string())?;
        if matrix.ids() != index.items.as_slice() {
            return Err(Error::invalid(format!(
                "{}: item order differs from index",
                path.display()
            )));
        }
        entries.push(ScorerMatrix {
            name: e.name,
            role: e.role,
            members: e.members,
            matrix,
        });
    }
    Ok(MatrixSet {
        items: index.items,
        entries,
        skipped: index.skipped,
    })
}

/// Model side of the partition comes from the reference scorer's matrix.
pub fn partition_pairs(set: &MatrixSet, reference: &str, margin: f64) -> Result<ConfidencePartition> {
    let model = set
        .get(reference)
        .filter(|e| matches!(e.role, MatrixRole::Model | MatrixRole::Ensemble))
        .ok_or_else(|| Error::invalid(format!("reference scorer {reference} has no win matrix")))?;
    let pairs = set.annotated_pairs()?;
    confidence_partition(&normalized(&model.matrix), &normalized(set.human()?), &pairs, margin)
}

pub fn confidence_text(
    hash: &str,
    set: &MatrixSet,
    reference: &str,
    partition: &ConfidencePartition,
) -> Result<String> {
    let model = normalized(&set.get(reference).expect("partition built from reference").matrix);
    let human = normalized(set.human()?);
    csv_text(
        hash,
        &[
            "arg_i",
            "arg_j",
            "model_w_hat",
            "human_w_hat",
            "model_confident",
            "human_confident",
            "subset",
        ],
        partition.labels.iter().map(|(p, (m, h))| {
            vec![
                p.first.clone(),
                p.second.clone(),
                model.get_pair(p).map_or_else(String::new, |v| v.to_string()),
                human.get_pair(p).map_or_else(String::new, |v| v.to_string()),
                m.to_string(),
                h.to_string(),
                PairSubset::cell(*m, *h).tag().to_owned(),
            ]
        }),
    )
}

/// A fitted scale as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFile {
    pub name: String,
    pub ids: Vec<String>,
    pub theta: Vec<f64>,
    pub ranking: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub reg: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl ScaleFile {
    pub fn new(name: &str, scale: &LatentScale, opts: &IlsrOptions) -> ScaleFile {
        ScaleFile {
            name: name.to_owned(),
            ids: scale.ids.clone(),
            theta: scale.theta.clone(),
            ranking: scale.ranking.clone(),
            converged: scale.converged,
            iterations: scale.iterations,
            reg: opts.reg,
            tol: opts.tol,
            max_iter: opts.max_iter,
        }
    }
}

pub fn scale_text(hash: &str, file: &ScaleFile) -> Result<String> {
    json_text(Some(hash), file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub reference: String,
    pub settings: serde_json::Value,
    pub n_items: usize,
    pub n_annotated_pairs: usize,
    pub subset_sizes: BTreeMap<String, usize>,
    pub skipped_scorers: Vec<SkippedScorer>,
    pub rows: Vec<ReportRow>,
}

/// Refits and compares every scorer against the human aggregate on each pair subset.
pub fn evaluate_rankings(cfg: &PipelineConfig, set: &MatrixSet) -> Result<(ConfidencePartition, Report)> {
    let reference = reference_of(cfg)?;
    let partition = partition_pairs(set, reference, cfg.margin)?;
    let scorers: Vec<(String, WinMatrix)> = set
        .entries
        .iter()
        .filter(|e| matches!(e.role, MatrixRole::Model | MatrixRole::Ensemble))
        .map(|e| (e.name.clone(), e.matrix.clone()))
        .collect();
    let rows = evaluate_scorers(&EvalInputs {
        human: set.human()?,
        human_left: set.role(MatrixRole::HumanLeft),
        human_right: set.role(MatrixRole::HumanRight),
        scorers: &scorers,
        partition: &partition,
        bt: cfg.bt,
        tie_rule: cfg.tie_rule,
        baseline_samples: cfg.baseline_samples,
        seed: cfg.seed,
    })?;
    let subset_sizes = PairSubset::ALL
        .iter()
        .map(|s| (s.tag().to_owned(), partition.subset(*s).len()))
        .collect();
    let report = Report {
        reference: reference.to_owned(),
        settings: cfg.settings_json(),
        n_items: set.items.len(),
        n_annotated_pairs: partition.labels.len(),
        subset_sizes,
        skipped_scorers: set.skipped.clone(),
        rows,
    };
    Ok((partition, report))
}

pub fn report_json_text(hash: &str, report: &Report) -> Result<String> {
    json_text(Some(hash), report)
}

pub fn report_csv_text(hash: &str, report: &Report) -> Result<String> {
    csv_text(
        hash,
        &[
            "scorer",
            "kind",
            "subset",
            "n_pairs",
            "d_footrule",
            "d_tau",
            "alpha_o",
            "macro_f1",
            "note",
        ],
        report.rows.iter().map(|r| {
            vec![
                r.scorer.clone(),
                serde_json::to_value(r.kind)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default(),
                r.subset.tag().to_owned(),
                r.n_pairs.to_string(),
                rounded(r.d_footrule),
                rounded(r.d_tau),
                rounded(r.alpha_o),
                rounded(r.macro_f1),
                r.note.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// Loaded raw inputs.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub predictions: Vec<PredictionRecord>,
    pub pointwise: Option<Vec<PointwiseAnnotation>>,
    pub pairwise: Option<Vec<PairwiseAnnotation>>,
    pub arguments: Option<Vec<corpus::ArgumentRef>>,
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let predictions = cfg
        .inputs
        .predictions
        .as_deref()
        .ok_or_else(|| Error::Config("`inputs.predictions` is required".into()))?;
    let inputs = Inputs {
        predictions: corpus::read_predictions(predictions)?,
        pointwise: cfg
            .inputs
            .pointwise
            .as_deref()
            .map(corpus::read_pointwise)
            .transpose()?,
        pairwise: cfg.inputs.pairwise.as_deref().map(corpus::read_pairwise).transpose()?,
        arguments: cfg
            .inputs
            .arguments
            .as_deref()
            .map(corpus::read_arguments)
            .transpose()?,
    };
    if let Some(args) = &inputs.arguments {
        let known: BTreeSet<&str> = args.iter().map(|a| a.argument_id.as_str()).collect();
        let referenced = inputs
            .predictions
            .iter()
            .map(|r| r.argument_id.as_str())
            .chain(inputs.pointwise.iter().flatten().map(|a| a.argument_id.as_str()))
            .chain(
                inputs
                    .pairwise
                    .iter()
                    .flatten()
                    .flat_map(|a| [a.arg_i.as_str(), a.arg_j.as_str()]),
            );
        for id in referenced {
            if !known.contains(id) {
                return Err(Error::invalid(format!("argument {id} is not in the argument table")));
            }
        }
    }
    Ok(inputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub settings: serde_json::Value,
    pub inputs: BTreeMap<String, InputDigest>,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub config_hash: String,
    pub manifest: Manifest,
    pub report: Option<Report>,
}

/// Runs every stage whose inputs are configured and writes all artifacts.
///
/// Pointwise stages need `inputs.pointwise`; matrix, scale and ranking stages
/// need `inputs.pairwise`. An output directory holding a manifest from a
/// different config is refused unless `force`.
pub fn run_pipeline(cfg: &PipelineConfig, force: bool) -> Result<RunOutcome> {
    cfg.validate()?;
    let hash = cfg.hash();
    let manifest_path = cfg.output_dir.join("manifest.json");
    if manifest_path.exists() {
        read_checked(&manifest_path, &hash, force)?;
    }
    let inputs = load_inputs(cfg).map_err(|e| e.in_stage("load"))?;
    let mut out = OutputDir::create(&cfg.output_dir)?;

    let summaries = summarize_models(&inputs.predictions).map_err(|e| e.in_stage("aggregate"))?;
    out.write("summaries.csv", &summaries_text(&hash, &summaries)?)?;

    let ensembles = resolve_ensembles(cfg, &inputs.predictions).map_err(|e| e.in_stage("ensemble"))?;
    let pooled = ensemble_summaries(&ensembles, &inputs.predictions).map_err(|e| e.in_stage("ensemble"))?;
    out.write("ensemble_summaries.csv", &summaries_text(&hash, &pooled)?)?;
    out.write("ensembles.json", &ensembles_text(&hash, &ensembles)?)?;

    let mut all = summaries;
    all.extend(pooled);
    let models = model_ids(&inputs.predictions);
    let scorers = scorer_members(&inputs.predictions, &ensembles);
    let scorer_names: Vec<String> = scorers.iter().map(|s| s.0.clone()).collect();
    let needs_reference = inputs.pointwise.is_some() || inputs.pairwise.is_some() || cfg.buckets.is_some();
    if needs_reference {
        let reference = reference_of(cfg)?;
        if !scorer_names.iter().any(|s| s == reference) {
            return Err(Error::Config(format!(
                "reference {reference} is neither a model nor an ensemble"
            )));
        }
    }

    if cfg.buckets.is_some() {
        let sample = sample_pointwise(cfg, &all).map_err(|e| e.in_stage("sample-pointwise"))?;
        out.write("pointwise_sample.csv", &pointwise_sample_text(&hash, &sample)?)?;
    }

    if let Some(pointwise) = &inputs.pointwise {
        let eval = evaluate_pointwise(
            &all,
            &scorer_names,
            &models,
            reference_of(cfg)?,
            pointwise,
            cfg.threshold,
        )
        .map_err(|e| e.in_stage("pointwise-eval"))?;
        out.write("pointwise_metrics.csv", &pointwise_metrics_text(&hash, &eval)?)?;
        out.write("pointwise_agreement.json", &pointwise_agreement_text(&hash, &eval)?)?;
    }

    let mut report = None;
    if let Some(pairwise) = &inputs.pairwise {
        let items = pairwise_items(pairwise);
        let scores =
            reference_scores(&all, reference_of(cfg)?, Some(&items)).map_err(|e| e.in_stage("sample-pairs"))?;
        let matrices = build_matrices(&inputs.predictions, &scorers, pairwise).map_err(|e| e.in_stage("win-matrix"))?;
        let annotated = matrices.annotated_pairs()?;
        let design = design_pairs(cfg, &scores, Some(&annotated)).map_err(|e| e.in_stage("sample-pairs"))?;
        out.write("pairs.csv", &pairs_text(&hash, &design.pairs)?)?;
        out.write("pair_diagnostics.json", &json_text(Some(&hash), &design.diagnostics)?)?;
        write_matrix_set(&mut out, &hash, &matrices, cfg.margin)?;

        for e in &matrices.entries {
            match fit_bt_ilsr(&e.matrix, &cfg.bt) {
                Ok(scale) => {
                    let file = ScaleFile::new(&e.name, &scale, &cfg.bt);
                    out.write(
                        &format!("scales/{}.json", file_stem(&e.name)),
                        &scale_text(&hash, &file)?,
                    )?;
                }
                Err(err) if err.is_computation() => log::warn!("fit-bt {}: {err}", e.name),
                Err(err) => return Err(err.in_stage("fit-bt")),
            }
        }

        let (partition, rep) = evaluate_rankings(cfg, &matrices).map_err(|e| e.in_stage("rank-eval"))?;
        out.write(
            "confidence.csv",
            &confidence_text(&hash, &matrices, reference_of(cfg)?, &partition)?,
        )?;
        out.write("report.json", &report_json_text(&hash, &rep)?)?;
        out.write("report.csv", &report_csv_text(&hash, &rep)?)?;
        report = Some(rep);
    } else {
        let scores = if needs_reference {
            Some(reference_scores(&all, reference_of(cfg)?, None).map_err(|e| e.in_stage("sample-pairs"))?)
        } else {
            None
        };
        if let Some(scores) = scores {
            let design = design_pairs(cfg, &scores, None).map_err(|e| e.in_stage("sample-pairs"))?;
            out.write("pairs.csv", &pairs_text(&hash, &design.pairs)?)?;
            out.write("pair_diagnostics.json", &json_text(Some(&hash), &design.diagnostics)?)?;
        }
    }

    let mut input_digests = BTreeMap::new();
    for (role, path) in [
        ("predictions", &cfg.inputs.predictions),
        ("pointwise", &cfg.inputs.pointwise),
        ("pairwise", &cfg.inputs.pairwise),
        ("arguments", &cfg.inputs.arguments),
    ] {
        if let Some(p) = path {
            input_digests.insert(
                role.to_owned(),
                InputDigest {
                    file: p
                        .file_name()
                        .map(|f| f.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    sha256: sha256_file(p)?,
                },
            );
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config_hash: hash.clone(),
        seed: cfg.seed,
        settings: cfg.settings_json(),
        inputs: input_digests,
        artifacts: out.written().clone(),
    };
    out.write("manifest.json", &json_text(None, &manifest)?)?;
    Ok(RunOutcome {
        output_dir: out.root().to_owned(),
        config_hash: hash,
        manifest,
        report,
    })
}
