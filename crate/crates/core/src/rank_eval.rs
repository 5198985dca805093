//! Agreement between rankings (footrule, Kendall, ordinal alpha) and between
//! win matrices (pairwise macro F1), and the per-scorer evaluation table.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::btrank::{fit_bt_ilsr, worst_case_baseline, IlsrOptions, LatentScale};
use crate::comparisons::{normalized, ConfidencePartition, NormalizedMatrix, PairSubset, WinMatrix};
use crate::error::{Error, Result};
use crate::pairs::ItemPair;
use crate::reliability::{krippendorff_alpha, Level, ReliabilityGrid};
use crate::rng::stream_rng;

/// Total order of items; rank 1 is the strongest (most right-wing).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    order: Vec<String>,
    rank: BTreeMap<String, usize>,
}

impl Ranking {
    pub fn from_order(order: Vec<String>) -> Result<Ranking> {
        let mut rank = BTreeMap::new();
        for (pos, id) in order.iter().enumerate() {
            if rank.insert(id.clone(), pos + 1).is_some() {
                return Err(Error::invalid(format!("item {id} ranked twice")));
            }
        }
        Ok(Ranking { order, rank })
    }

    pub fn from_scale(scale: &LatentScale) -> Ranking {
        Ranking::from_order(scale.ranking.clone()).expect("scale ids are unique")
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.rank.get(id).copied()
    }
}

/// Ranks of `b` listed in `a`'s id order, after checking both cover the same items.
fn aligned(a: &Ranking, b: &Ranking) -> Result<Vec<(usize, usize)>> {
    if a.len() < 2 {
        return Err(Error::invalid(format!(
            "rankings need at least 2 items, got {}",
            a.len()
        )));
    }
    if a.len() != b.len() || a.rank.keys().ne(b.rank.keys()) {
        return Err(Error::invalid("rankings cover different item sets"));
    }
    Ok(a.rank.iter().map(|(id, ra)| (*ra, b.rank[id])).collect())
}

/// `1 − Σ|r1(i) − r2(i)| / ⌊n²/2⌋`.
pub fn footrule_similarity(r1: &Ranking, r2: &Ranking) -> Result<f64> {
    let pairs = aligned(r1, r2)?;
    let n = pairs.len();
    let total: usize = pairs.iter().map(|(a, b)| a.abs_diff(*b)).sum();
    Ok(1.0 - total as f64 / (n * n / 2) as f64)
}

/// Counts inversions in `v` by merge sort.
fn inversions(v: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = inversions(&mut v[..mid]) + inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            merged.push(v[i]);
            i += 1;
        } else {
            merged.push(v[j]);
            count += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    count
}

/// Number of item pairs ordered differently by the two rankings.
pub fn discordant_pairs(r1: &Ranking, r2: &Ranking) -> Result<u64> {
    let mut pairs = aligned(r1, r2)?;
    pairs.sort_unstable();
    let mut seq: Vec<usize> = pairs.into_iter().map(|(_, b)| b).collect();
    Ok(inversions(&mut seq))
}

/// `1 − K / (n(n−1)/2)` with `K` the number of discordant pairs.
pub fn kendall_similarity(r1: &Ranking, r2: &Ranking) -> Result<f64> {
    let k = discordant_pairs(r1, r2)?;
    let n = r1.len() as u64;
    Ok(1.0 - k as f64 / (n * (n - 1) / 2) as f64)
}

/// Ordinal alpha with items as units and the two rankings as raters.
pub fn ordinal_alpha_rankings(r1: &Ranking, r2: &Ranking) -> Result<f64> {
    let pairs = aligned(r1, r2)?;
    let mut grid = ReliabilityGrid::new(Level::Ordinal);
    for (id, (a, b)) in r1.rank.keys().zip(pairs) {
        grid.insert(id, "r1", a as i64);
        grid.insert(id, "r2", b as i64);
    }
    krippendorff_alpha(&grid)
}

/// How an exact 0.5 model prediction is labelled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TieRule {
    /// Ties count as a loss for the first item.
    #[default]
    Loss,
    /// Ties are labelled by a seeded coin flip.
    Random { seed: u64 },
}

/// Macro F1 over win/loss labels of the subset's pairs (canonical orientation).
///
/// Pairs where the human value is exactly 0.5 are not scored. Classes absent
/// from both truth and prediction are left out of the average.
pub fn pairwise_macro_f1(
    model: &NormalizedMatrix,
    human: &NormalizedMatrix,
    subset: &[ItemPair],
    tie_rule: TieRule,
) -> Result<f64> {
    let mut rng = match tie_rule {
        TieRule::Random { seed } => Some(stream_rng(seed, 0xF1)),
        TieRule::Loss => None,
    };
    // [truth][pred] with index 1 = win.
    let mut confusion = [[0usize; 2]; 2];
    for p in subset {
        let h = human
            .get_pair(p)
            .ok_or_else(|| Error::Undefined(format!("no human judgement for {p}")))?;
        let m = model
            .get_pair(p)
            .ok_or_else(|| Error::Undefined(format!("no model judgement for {p}")))?;
        if h == 0.5 {
            continue;
        }
        let truth = usize::from(h > 0.5);
        let pred = if m == 0.5 {
            rng.as_mut().map_or(0, |r| usize::from(r.random::<bool>()))
        } else {
            usize::from(m > 0.5)
        };
        confusion[truth][pred] += 1;
    }
    let scored: usize = confusion.iter().flatten().sum();
    if scored == 0 {
        return Err(Error::invalid("no scorable pairs in subset (empty or all human ties)"));
    }
    let mut f1s = Vec::with_capacity(2);
    for (class, row) in confusion.iter().enumerate() {
        let other = 1 - class;
        let (tp, fn_) = (row[class], row[other]);
        let fp = confusion[other][class];
        if tp + fn_ + fp == 0 {
            continue;
        }
        f1s.push(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
    }
    Ok(f1s.iter().sum::<f64>() / f1s.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Human,
    Model,
    Baseline,
}

/// One (scorer, subset) cell of the evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scorer: String,
    pub kind: ScorerKind,
    pub subset: PairSubset,
    pub n_pairs: usize,
    pub d_footrule: Option<f64>,
    pub d_tau: Option<f64>,
    pub alpha_o: Option<f64>,
    pub macro_f1: Option<f64>,
    pub note: Option<String>,
}

pub const HUMAN_AGG: &str = "Human (agg)";
pub const HUMAN_LEFT: &str = "Human (left)";
pub const HUMAN_RIGHT: &str = "Human (right)";
pub const RANDOM_BASELINE: &str = "Random Baseline";
pub const WORST_BASELINE: &str = "Worst-case Baseline";

/// Everything [`evaluate_scorers`] compares against the aggregate human judgements.
pub struct EvalInputs<'a> {
    pub human: &'a WinMatrix,
    pub human_left: Option<&'a WinMatrix>,
    pub human_right: Option<&'a WinMatrix>,
    /// Model and ensemble matrices, in report order.
    pub scorers: &'a [(String, WinMatrix)],
    pub partition: &'a ConfidencePartition,
    pub bt: IlsrOptions,
    pub tie_rule: TieRule,
    /// Random rankings averaged for the random baseline's rank metrics.
    pub baseline_samples: usize,
    pub seed: u64,
}

struct SubsetContext {
    subset: PairSubset,
    pairs: Vec<ItemPair>,
    /// None when the subset is empty or the human fit failed (see `skip_note`).
    human_scale: Option<LatentScale>,
    skip_note: String,
    human_norm: NormalizedMatrix,
}

fn fit_for_subset(wm: &WinMatrix, ctx_pairs: &[ItemPair], subset: PairSubset, bt: &IlsrOptions) -> Result<LatentScale> {
    if subset == PairSubset::All {
        fit_bt_ilsr(wm, bt)
    } else {
        fit_bt_ilsr(&wm.restricted_to(ctx_pairs)?, bt)
    }
}

fn rank_metrics(scale: &Ranking, human: &Ranking) -> Result<(f64, f64, f64)> {
    Ok((
        footrule_similarity(scale, human)?,
        kendall_similarity(scale, human)?,
        ordinal_alpha_rankings(scale, human)?,
    ))
}

fn empty_row(scorer: &str, kind: ScorerKind, ctx: &SubsetContext, note: String) -> ReportRow {
    ReportRow {
        scorer: scorer.to_owned(),
        kind,
        subset: ctx.subset,
        n_pairs: ctx.pairs.len(),
        d_footrule: None,
        d_tau: None,
        alpha_o: None,
        macro_f1: None,
        note: Some(note),
    }
}

fn matrix_row(
    scorer: &str,
    kind: ScorerKind,
    wm: &WinMatrix,
    ctx: &SubsetContext,
    inputs: &EvalInputs<'_>,
) -> Result<ReportRow> {
    let Some(human_scale) = &ctx.human_scale else {
        return Ok(empty_row(scorer, kind, ctx, ctx.skip_note.clone()));
    };
    let scale = match fit_for_subset(wm, &ctx.pairs, ctx.subset, &inputs.bt) {
        Ok(s) => s,
        Err(e) if e.is_computation() => return Ok(empty_row(scorer, kind, ctx, format!("fit failed: {e}"))),
        Err(e) => return Err(e),
    };
    let (fr, tau, alpha) = rank_metrics(&Ranking::from_scale(&scale), &Ranking::from_scale(human_scale))?;
    let own = normalized(wm);
    // Single-framing human matrices only cover part of the pairs.
    let covered: Vec<ItemPair> = ctx
        .pairs
        .iter()
        .filter(|p| own.get_pair(p).is_some())
        .cloned()
        .collect();
    let (f1, note) = match pairwise_macro_f1(&own, &ctx.human_norm, &covered, inputs.tie_rule) {
        Ok(v) if covered.len() < ctx.pairs.len() => (
            Some(v),
            Some(format!("F1 over {} of {} pairs", covered.len(), ctx.pairs.len())),
        ),
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ReportRow {
        scorer: scorer.to_owned(),
        kind,
        subset: ctx.subset,
        n_pairs: ctx.pairs.len(),
        d_footrule: Some(fr),
        d_tau: Some(tau),
        alpha_o: Some(alpha),
        macro_f1: f1,
        note,
    })
}

/// All-zero strengths leave every ordering equally likely, so rank metrics are
/// averaged over uniformly shuffled rankings; every pairwise prediction is 0.5.
fn random_row(ctx: &SubsetContext, inputs: &EvalInputs<'_>, stream: u64) -> Result<ReportRow> {
    let Some(human_scale) = &ctx.human_scale else {
        return Ok(empty_row(
            RANDOM_BASELINE,
            ScorerKind::Baseline,
            ctx,
            ctx.skip_note.clone(),
        ));
    };
    let human = Ranking::from_scale(human_scale);
    let samples = inputs.baseline_samples.max(1);
    let mut rng = stream_rng(inputs.seed, stream);
    let mut sums = (0.0, 0.0, 0.0);
    let mut order = human.order().to_vec();
    order.sort();
    for _ in 0..samples {
        let mut perm = order.clone();
        perm.shuffle(&mut rng);
        let (fr, tau, alpha) = rank_metrics(&Ranking::from_order(perm)?, &human)?;
        sums.0 += fr;
        sums.1 += tau;
        sums.2 += alpha;
    }
    let k = samples as f64;
    let flat = NormalizedMatrix::from_values(ctx.pairs.iter().map(|p| (p.clone(), 0.5)));
    let (f1, note) = match pairwise_macro_f1(&flat, &ctx.human_norm, &ctx.pairs, inputs.tie_rule) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ReportRow {
        scorer: RANDOM_BASELINE.into(),
        kind: ScorerKind::Baseline,
        subset: ctx.subset,
        n_pairs: ctx.pairs.len(),
        d_footrule: Some(sums.0 / k),
        d_tau: Some(sums.1 / k),
        alpha_o: Some(sums.2 / k),
        macro_f1: f1,
        note,
    })
}

fn worst_row(ctx: &SubsetContext, inputs: &EvalInputs<'_>) -> Result<ReportRow> {
    let Some(human_scale) = &ctx.human_scale else {
        return Ok(empty_row(
            WORST_BASELINE,
            ScorerKind::Baseline,
            ctx,
            ctx.skip_note.clone(),
        ));
    };
    let worst = worst_case_baseline(human_scale);
    let (fr, tau, alpha) = rank_metrics(&Ranking::from_scale(&worst), &Ranking::from_scale(human_scale))?;
    let inverted = NormalizedMatrix::from_values(
        ctx.pairs
            .iter()
            .filter_map(|p| ctx.human_norm.get_pair(p).map(|v| (p.clone(), 1.0 - v))),
    );
    let (f1, note) = match pairwise_macro_f1(&inverted, &ctx.human_norm, &ctx.pairs, inputs.tie_rule) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ReportRow {
        scorer: WORST_BASELINE.into(),
        kind: ScorerKind::Baseline,
        subset: ctx.subset,
        n_pairs: ctx.pairs.len(),
        d_footrule: Some(fr),
        d_tau: Some(tau),
        alpha_o: Some(alpha),
        macro_f1: f1,
        note,
    })
}

/// Builds the scorer × subset table.
///
/// On the full pair set every scorer is fitted on its whole matrix; on each
/// confidence cell both the scorer and the human aggregate are refitted on
/// comparisons restricted to that cell before rankings are compared.
pub fn evaluate_scorers(inputs: &EvalInputs<'_>) -> Result<Vec<ReportRow>> {
    let human_norm = normalized(inputs.human);
    let contexts: Vec<SubsetContext> = PairSubset::ALL
        .par_iter()
        .map(|&subset| {
            let pairs = inputs.partition.subset(subset);
            let (human_scale, skip_note) = if pairs.is_empty() {
                (None, "empty subset".to_string())
            } else {
                match fit_for_subset(inputs.human, &pairs, subset, &inputs.bt) {
                    Ok(s) => (Some(s), String::new()),
                    Err(e) if e.is_computation() => (None, format!("human fit failed: {e}")),
                    Err(e) => return Err(e),
                }
            };
            Ok(SubsetContext {
                subset,
                pairs,
                human_scale,
                skip_note,
                human_norm: human_norm.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let mut entries: Vec<(&str, ScorerKind, &WinMatrix)> = vec![(HUMAN_AGG, ScorerKind::Human, inputs.human)];
    if let Some(l) = inputs.human_left {
        entries.push((HUMAN_LEFT, ScorerKind::Human, l));
    }
    if let Some(r) = inputs.human_right {
        entries.push((HUMAN_RIGHT, ScorerKind::Human, r));
    }
    for (name, wm) in inputs.scorers {
        entries.push((name.as_str(), ScorerKind::Model, wm));
    }

    let cells: Vec<(usize, usize)> = (0..entries.len())
        .flat_map(|e| (0..contexts.len()).map(move |c| (e, c)))
        .collect();
    let mut rows: Vec<ReportRow> = cells
        .par_iter()
        .map(|&(e, c)| {
            let (name, kind, wm) = entries[e];
            matrix_row(name, kind, wm, &contexts[c], inputs)
        })
        .collect::<Result<_>>()?;

    for (c, ctx) in contexts.iter().enumerate() {
        rows.push(random_row(ctx, inputs, 0xBA5E_0000 + c as u64)?);
    }
    for ctx in &contexts {
        rows.push(worst_row(ctx, inputs)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(order: &[usize]) -> Ranking {
        Ranking::from_order(order.iter().map(|i| format!("x{i:03}")).collect()).unwrap()
    }

    #[test]
    fn identical_and_reversed() {
        let a = ranking(&[0, 1, 2, 3, 4]);
        let r = ranking(&[4, 3, 2, 1, 0]);
        assert_eq!(footrule_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(ordinal_alpha_rankings(&a, &a).unwrap(), 1.0);
        assert_eq!(footrule_similarity(&a, &r).unwrap(), 0.0);
        assert_eq!(kendall_similarity(&a, &r).unwrap(), 0.0);
    }

    #[test]
    fn item_set_mismatch() {
        let a = ranking(&[0, 1, 2]);
        let b = ranking(&[0, 1, 3]);
        assert!(footrule_similarity(&a, &b).is_err());
        assert!(kendall_similarity(&a, &ranking(&[0, 1])).is_err());
        assert!(Ranking::from_order(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn kendall_matches_quadratic_count() {
        let a = ranking(&[3, 1, 4, 0, 5, 9, 2, 6, 8, 7]);
        let b = ranking(&[2, 7, 1, 8, 0, 4, 5, 9, 3, 6]);
        let mut k = 0;
        let ids: Vec<String> = (0..10).map(|i| format!("x{i:03}")).collect();
        for x in 0..10 {
            for y in x + 1..10 {
                let da = a.rank_of(&ids[x]).unwrap() as i64 - a.rank_of(&ids[y]).unwrap() as i64;
                let db = b.rank_of(&ids[x]).unwrap() as i64 - b.rank_of(&ids[y]).unwrap() as i64;
                if da * db < 0 {
                    k += 1;
                }
            }
        }
        assert_eq!(discordant_pairs(&a, &b).unwrap(), k);
        assert_eq!(discordant_pairs(&b, &a).unwrap(), k);
    }

    fn norm(values: &[f64]) -> (NormalizedMatrix, Vec<ItemPair>) {
        let pairs: Vec<ItemPair> = (0..values.len())
            .map(|i| ItemPair::new(format!("a{i:03}"), format!("b{i:03}")).unwrap())
            .collect();
        (
            NormalizedMatrix::from_values(pairs.iter().cloned().zip(values.iter().copied())),
            pairs,
        )
    }

    #[test]
    fn macro_f1_cases() {
        let (h, pairs) = norm(&[0.9, 0.2, 0.75, 0.1, 0.5]);
        assert_eq!(pairwise_macro_f1(&h, &h, &pairs, TieRule::Loss).unwrap(), 1.0);

        let (comp, _) = norm(&[0.1, 0.8, 0.25, 0.9, 0.5]);
        assert_eq!(pairwise_macro_f1(&comp, &h, &pairs, TieRule::Loss).unwrap(), 0.0);

        // Balanced truth (2 wins, 2 losses), every prediction a tie → all "loss":
        // loss F1 = 2·2/(2·2 + 2) = 2/3, win F1 = 0.
        let (flat, _) = norm(&[0.5; 5]);
        let f1 = pairwise_macro_f1(&flat, &h, &pairs, TieRule::Loss).unwrap();
        assert!((f1 - 1.0 / 3.0).abs() < 1e-15);

        let (ties, tie_pairs) = norm(&[0.5, 0.5]);
        assert!(pairwise_macro_f1(&ties, &ties, &tie_pairs, TieRule::Loss).is_err());
        assert!(pairwise_macro_f1(&h, &h, &[], TieRule::Loss).is_err());
    }

    #[test]
    fn random_tie_rule_averages_near_half() {
        let truth: Vec<f64> = (0..4000).map(|i| if i % 2 == 0 { 0.9 } else { 0.1 }).collect();
        let (h, pairs) = norm(&truth);
        let (flat, _) = norm(&vec![0.5; truth.len()]);
        let f1 = pairwise_macro_f1(&flat, &h, &pairs, TieRule::Random { seed: 5 }).unwrap();
        assert!((f1 - 0.5).abs() < 0.03, "{f1}");
    }
}
