mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::sample::subsequence;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dualscale::btrank::{fit_bt_ilsr, fit_bt_ilsr_traced, log_likelihood, IlsrOptions};
use dualscale::comparisons::{confidence_partition, model_win_matrix, NormalizedMatrix, PairSubset, WinMatrix};
use dualscale::corpus::{load_predictions, write_predictions, BinaryLabel, Format, PredictionRecord, PredictionValue};
use dualscale::pairs::{bin_scores, node_entropy, sample_pairs, ItemPair};
use dualscale::pointwise::{binarize_prediction, classification_metrics, sample_dataset, BucketCounts};
use dualscale::rank_eval::{footrule_similarity, kendall_similarity, ordinal_alpha_rankings, Ranking};
use dualscale::reliability::{krippendorff_alpha, Level, ReliabilityGrid};
use dualscale::stats::{pool_ensemble, select_high_confidence_models, summarize, EnsembleSpec, PredictionSummary};

fn grid_of(units: &[Vec<Option<i64>>], level: Level) -> ReliabilityGrid {
    let mut g = ReliabilityGrid::new(level);
    for (u, unit) in units.iter().enumerate() {
        for (r, v) in unit.iter().enumerate() {
            if let Some(v) = v {
                g.insert(&format!("u{u:02}"), &format!("r{r}"), *v);
            }
        }
    }
    g
}

fn reliability_units(raters: usize) -> impl Strategy<Value = Vec<Vec<Option<i64>>>> {
    prop::collection::vec(
        prop::collection::vec(prop::option::weighted(0.8, 0i64..5), raters),
        2..16,
    )
}

fn same_outcome(a: dualscale::Result<f64>, b: dualscale::Result<f64>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => (x - y).abs() < 1e-12,
        (Err(x), Err(y)) => std::mem::discriminant(&x) == std::mem::discriminant(&y),
        _ => false,
    }
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("i{i:02}")).collect()
}

fn ranking_of(order: &[usize]) -> Ranking {
    Ranking::from_order(order.iter().map(|i| format!("i{i:03}")).collect()).unwrap()
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<usize>>()).prop_shuffle()
}

fn two_permutations() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2usize..40).prop_flat_map(|n| (permutation(n), permutation(n)))
}

fn record(model: &str, arg: &str, rep: u32, value: Option<f64>) -> PredictionRecord {
    PredictionRecord {
        model_id: model.into(),
        argument_id: arg.into(),
        repetition: rep,
        value: value.map_or(PredictionValue::Na, PredictionValue::Score),
    }
}

/// Records for `models × args × reps` with integer scores or NA.
fn prediction_records() -> impl Strategy<Value = Vec<PredictionRecord>> {
    (1usize..4, 1usize..6, 1usize..5).prop_flat_map(|(models, args, reps)| {
        prop::collection::vec(prop::option::weighted(0.6, 0u8..=100), models * args * reps).prop_map(move |values| {
            let mut out = Vec::new();
            let mut it = values.into_iter();
            for m in 0..models {
                for a in 0..args {
                    for r in 0..reps {
                        let v = it.next().unwrap().map(f64::from);
                        out.push(record(&format!("m{m}"), &format!("a{a}"), r as u32 + 1, v));
                    }
                }
            }
            out
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn alpha_ignores_unit_and_rater_order(
        units in reliability_units(4),
        unit_perm in Just((0..16).collect::<Vec<usize>>()).prop_shuffle(),
        rater_perm in permutation(4),
    ) {
        let order: Vec<usize> = unit_perm.into_iter().filter(|u| *u < units.len()).collect();
        let shuffled: Vec<Vec<Option<i64>>> = order
            .iter()
            .map(|&u| rater_perm.iter().map(|&r| units[u][r]).collect())
            .collect();
        for level in [Level::Nominal, Level::Ordinal] {
            prop_assert!(same_outcome(
                krippendorff_alpha(&grid_of(&units, level)),
                krippendorff_alpha(&grid_of(&shuffled, level)),
            ));
        }
    }

    #[test]
    fn nominal_alpha_ignores_category_names(units in reliability_units(3), relabel in permutation(5)) {
        let renamed: Vec<Vec<Option<i64>>> = units
            .iter()
            .map(|u| u.iter().map(|v| v.map(|c| 10 * relabel[c as usize] as i64 - 7)).collect())
            .collect();
        prop_assert!(same_outcome(
            krippendorff_alpha(&grid_of(&units, Level::Nominal)),
            krippendorff_alpha(&grid_of(&renamed, Level::Nominal)),
        ));
    }

    #[test]
    fn ordinal_alpha_depends_only_on_category_order(units in reliability_units(3), gaps in prop::collection::vec(1i64..20, 5)) {
        let cut: Vec<i64> = gaps.iter().scan(0, |acc, g| { *acc += g; Some(*acc) }).collect();
        let stretched: Vec<Vec<Option<i64>>> = units
            .iter()
            .map(|u| u.iter().map(|v| v.map(|c| cut[c as usize])).collect())
            .collect();
        prop_assert!(same_outcome(
            krippendorff_alpha(&grid_of(&units, Level::Ordinal)),
            krippendorff_alpha(&grid_of(&stretched, Level::Ordinal)),
        ));
    }

    #[test]
    fn two_rater_alpha_matches_coincidence_oracle(units in reliability_units(2)) {
        for (level, ordinal) in [(Level::Nominal, false), (Level::Ordinal, true)] {
            let grid = grid_of(&units, level);
            let got = krippendorff_alpha(&grid);
            match common::brute_alpha(&units, ordinal) {
                _ if grid.n_pairable_units() < 2 => prop_assert!(got.is_err()),
                Some(want) => prop_assert!((got.unwrap() - want).abs() < 1e-12),
                None => prop_assert!(matches!(got, Err(dualscale::Error::AlphaUndefined))),
            }
        }
    }

    #[test]
    fn model_win_matrix_matches_double_loop(
        reps in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.7, 0u8..10), 1..6), 1..6)
    ) {
        prop_assume!(reps.iter().all(|r| r.iter().any(Option::is_some)));
        let bins: BTreeMap<String, Vec<Option<u8>>> =
            reps.iter().enumerate().map(|(i, r)| (format!("i{i}"), r.clone())).collect();
        let wm = model_win_matrix(&bins).unwrap();
        let as_f64 = bins
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|x| x.map(f64::from)).collect()))
            .collect();
        let want = common::brute_win_matrix(&as_f64);
        let valid: Vec<f64> = bins.values().map(|r| r.iter().flatten().count() as f64).collect();
        for i in 0..wm.n() {
            prop_assert_eq!(wm.get(i, i), 0.0);
            for j in 0..wm.n() {
                prop_assert_eq!(wm.get(i, j), want[i][j]);
                if i != j {
                    prop_assert_eq!(wm.get(i, j) + wm.get(j, i), valid[i] * valid[j]);
                }
            }
        }
    }

    #[test]
    fn bt_matches_zermelo_mle(
        (n, counts) in (2usize..=4).prop_flat_map(|n| (Just(n), prop::collection::vec(0u8..=5, n * n))),
        reg in 0.05f64..1.0,
    ) {
        let mut dense: Vec<f64> = counts.iter().map(|c| f64::from(*c)).collect();
        for i in 0..n {
            dense[i * n + i] = 0.0;
        }
        let wm = WinMatrix::from_dense(names(n), dense.clone()).unwrap();
        let fit = fit_bt_ilsr(&wm, &IlsrOptions { reg, tol: 1e-12, max_iter: 10_000 }).unwrap();
        let w: Vec<Vec<f64>> = dense.chunks(n).map(<[f64]>::to_vec).collect();
        let oracle = common::zermelo_mle(&w, reg);
        for i in 0..n {
            for j in 0..n {
                let p = |t: &[f64]| 1.0 / (1.0 + (t[j] - t[i]).exp());
                prop_assert!((p(&fit.theta) - p(&oracle)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn bt_likelihood_never_decreases(
        (n, counts) in (2usize..=8).prop_flat_map(|n| (Just(n), prop::collection::vec(0u8..=6, n * n))),
        reg in 0.01f64..1.0,
    ) {
        let mut dense: Vec<f64> = counts.iter().map(|c| f64::from(*c)).collect();
        for i in 0..n {
            dense[i * n + i] = 0.0;
        }
        let wm = WinMatrix::from_dense(names(n), dense).unwrap();
        let (fit, trace) = fit_bt_ilsr_traced(&wm, &IlsrOptions { reg, ..Default::default() }).unwrap();
        for step in trace.windows(2) {
            prop_assert!(step[1] >= step[0] - 1e-9 * step[0].abs().max(1.0));
        }
        let shifted: Vec<f64> = fit.theta.iter().map(|t| t + 3.7).collect();
        let base = log_likelihood(&wm, reg, &fit.theta);
        prop_assert!((log_likelihood(&wm, reg, &shifted) - base).abs() < 1e-9 * base.abs().max(1.0));
        prop_assert!(fit.theta.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn bt_scale_follows_items_under_relabelling(
        (n, counts, perm) in (2usize..=7).prop_flat_map(|n| (Just(n), prop::collection::vec(0u8..=6, n * n), permutation(n))),
    ) {
        let mut dense: Vec<f64> = counts.iter().map(|c| f64::from(*c)).collect();
        for i in 0..n {
            dense[i * n + i] = 0.0;
        }
        let ids = names(n);
        let wm = WinMatrix::from_dense(ids.clone(), dense.clone()).unwrap();
        // Same comparisons presented in a different item order.
        let pids: Vec<String> = perm.iter().map(|&p| ids[p].clone()).collect();
        let mut pdense = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                pdense[a * n + b] = dense[perm[a] * n + perm[b]];
            }
        }
        let pwm = WinMatrix::from_dense(pids.clone(), pdense).unwrap();
        let opts = IlsrOptions { tol: 1e-12, max_iter: 1000, ..Default::default() };
        let fit = fit_bt_ilsr(&wm, &opts).unwrap();
        let pfit = fit_bt_ilsr(&pwm, &opts).unwrap();
        for (a, id) in pids.iter().enumerate() {
            let i = ids.iter().position(|x| x == id).unwrap();
            prop_assert!((pfit.theta[a] - fit.theta[i]).abs() < 1e-6);
        }
        let mut sorted = fit.theta.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[1] - w[0] > 1e-6) {
            prop_assert_eq!(Ranking::from_scale(&fit), Ranking::from_scale(&pfit));
        }
    }

    #[test]
    fn rank_similarities_match_oracles((r1, r2) in two_permutations()) {
        let (a, b) = (ranking_of(&r1), ranking_of(&r2));
        let fr = footrule_similarity(&a, &b).unwrap();
        let tau = kendall_similarity(&a, &b).unwrap();
        prop_assert!((fr - common::brute_footrule(&r1, &r2)).abs() < 1e-12);
        prop_assert!((tau - common::brute_kendall(&r1, &r2)).abs() < 1e-12);
        prop_assert_eq!(fr, footrule_similarity(&b, &a).unwrap());
        prop_assert_eq!(tau, kendall_similarity(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&fr) && (0.0..=1.0).contains(&tau));

        let n = r1.len();
        let pos = |r: &[usize], x: usize| Some(r.iter().position(|y| *y == x).unwrap() as i64);
        let units: Vec<Vec<Option<i64>>> = (0..n).map(|x| vec![pos(&r1, x), pos(&r2, x)]).collect();
        let alpha = ordinal_alpha_rankings(&a, &b).unwrap();
        prop_assert!((alpha - common::brute_alpha(&units, true).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn kendall_ignores_common_relabelling((r1, r2) in two_permutations(), seed in any::<u64>()) {
        let n = r1.len();
        let mut relabel: Vec<usize> = (0..n).collect();
        relabel.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let map = |r: &[usize]| r.iter().map(|x| relabel[*x]).collect::<Vec<_>>();
        let before = kendall_similarity(&ranking_of(&r1), &ranking_of(&r2)).unwrap();
        let after = kendall_similarity(&ranking_of(&map(&r1)), &ranking_of(&map(&r2))).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn pair_sampling_respects_strata(
        scores in prop::collection::btree_map("[a-z]{3}", 0.0f64..100.0, 4..60),
        intra in 0usize..8,
        inter in 0usize..5,
        seed in any::<u64>(),
    ) {
        let binning = bin_scores(&scores).unwrap();
        let set = sample_pairs(&binning, intra, inter, seed);
        let distinct: BTreeSet<&ItemPair> = set.pairs.iter().map(|p| &p.pair).collect();
        prop_assert_eq!(distinct.len(), set.pairs.len());
        for p in &set.pairs {
            let (bi, bj) = (binning.bin_of(&p.pair.first).unwrap(), binning.bin_of(&p.pair.second).unwrap());
            prop_assert!(p.stratum.contains(bi, bj));
        }
        for d in &set.strata {
            prop_assert_eq!(d.drawn, d.requested.min(d.available));
            prop_assert_eq!(d.drawn, set.pairs.iter().filter(|p| p.stratum == d.stratum).count());
        }

        // Same scores inserted in reverse order give the same design.
        let reversed: BTreeMap<String, f64> = scores.iter().rev().map(|(k, v)| (k.clone(), *v)).collect();
        prop_assert_eq!(sample_pairs(&bin_scores(&reversed).unwrap(), intra, inter, seed), set.clone());

        let pairs = set.item_pairs();
        let touched: BTreeSet<&str> = pairs.iter().flat_map(|p| [p.first.as_str(), p.second.as_str()]).collect();
        if touched.len() == binning.items().len() {
            let report = node_entropy(&pairs, &binning).unwrap();
            let cap = (binning.k() as f64).log2();
            prop_assert!(report.per_item.values().all(|h| *h >= 0.0 && *h <= cap + 1e-12));
        }
    }

    #[test]
    fn binning_survives_whole_decile_shift(scores in prop::collection::btree_map("[a-z]{3}", 0.0f64..80.0, 1..40)) {
        let shifted: BTreeMap<String, f64> = scores.iter().map(|(k, v)| (k.clone(), v + 10.0)).collect();
        let (a, b) = (bin_scores(&scores).unwrap(), bin_scores(&shifted).unwrap());
        prop_assert_eq!(a.k(), b.k());
        for id in scores.keys() {
            prop_assert_eq!(a.bin_of(id), b.bin_of(id));
        }
    }

    #[test]
    fn confidence_cells_partition_pairs(
        values in prop::collection::vec((0u8..=12, 0u8..=6), 1..40),
        margin in prop::sample::select(vec![0.05, 0.25, 0.5]),
    ) {
        let pairs: Vec<ItemPair> = (0..values.len())
            .map(|k| ItemPair::new(format!("x{k:02}"), format!("y{k:02}")).unwrap())
            .collect();
        let model = NormalizedMatrix::from_values(pairs.iter().cloned().zip(values.iter().map(|v| f64::from(v.0) / 12.0)));
        let human = NormalizedMatrix::from_values(pairs.iter().cloned().zip(values.iter().map(|v| f64::from(v.1) / 6.0)));
        let part = confidence_partition(&model, &human, &pairs, margin).unwrap();
        let sizes: usize = PairSubset::CELLS.iter().map(|c| part.subset(*c).len()).sum();
        prop_assert_eq!(sizes, pairs.len());
        prop_assert_eq!(part.subset(PairSubset::All).len(), pairs.len());
        let joint: BTreeSet<ItemPair> = part
            .subset(PairSubset::BothConfident)
            .into_iter()
            .chain(part.subset(PairSubset::ModelOnly))
            .collect();
        let model_conf: BTreeSet<ItemPair> = pairs
            .iter()
            .filter(|p| (model.get_pair(p).unwrap() - 0.5).abs() >= margin)
            .cloned()
            .collect();
        prop_assert_eq!(joint, model_conf);
    }

    #[test]
    fn pointwise_sample_partitions(
        na in prop::collection::vec(0usize..=20, 1..80),
        h_pol in 0usize..10, l in 0usize..10, h_apol in 0usize..10,
        seed in any::<u64>(),
    ) {
        let summaries: Vec<PredictionSummary> = na
            .iter()
            .enumerate()
            .map(|(a, k)| PredictionSummary {
                scorer_id: "E".into(),
                argument_id: format!("a{a:02}"),
                mean_score: (*k < 20).then_some(40.0),
                score_sd: None,
                na_count: *k,
                n_reps: 20,
            })
            .collect();
        let counts = BucketCounts { h_pol, l, h_apol };
        match sample_dataset(&summaries, counts, seed) {
            Ok(d) => {
                prop_assert!(d.confident().is_disjoint(&d.ambiguous()));
                let union: BTreeSet<String> = d.confident().union(&d.ambiguous()).cloned().collect();
                prop_assert_eq!(union, d.all());
                prop_assert_eq!(d.len(), h_pol + l + h_apol);
                prop_assert_eq!(sample_dataset(&summaries, counts, seed).unwrap(), d);
            }
            Err(e) => prop_assert!(e.to_string().contains("short by")),
        }
    }

    #[test]
    fn binarization_is_monotone_in_threshold(na in 0usize..=20, t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let s = PredictionSummary {
            scorer_id: "m".into(),
            argument_id: "a".into(),
            mean_score: None,
            score_sd: None,
            na_count: na,
            n_reps: 20,
        };
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        if binarize_prediction(&s, hi) == BinaryLabel::Apolitical {
            prop_assert_eq!(binarize_prediction(&s, lo), BinaryLabel::Apolitical);
        }
    }

    #[test]
    fn micro_f1_is_accuracy(labels in prop::collection::vec((any::<bool>(), any::<bool>()), 1..50)) {
        let lab = |b: bool| if b { BinaryLabel::Political } else { BinaryLabel::Apolitical };
        let ids: Vec<String> = (0..labels.len()).map(|k| format!("a{k:02}")).collect();
        let truth = ids.iter().cloned().zip(labels.iter().map(|l| lab(l.0))).collect();
        let pred = ids.iter().cloned().zip(labels.iter().map(|l| lab(l.1))).collect();
        let m = classification_metrics(&truth, &pred, &ids.iter().cloned().collect()).unwrap();
        let correct = labels.iter().filter(|(t, p)| t == p).count();
        prop_assert!((m.micro_f1 - correct as f64 / labels.len() as f64).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.macro_f1));
    }

    #[test]
    fn summaries_ignore_repetition_order(records in prediction_records(), seed in any::<u64>()) {
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = summarize("x", &records).unwrap();
        let b = summarize("x", &shuffled).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.na_count, y.na_count);
            prop_assert_eq!(x.na_probability(), y.na_probability());
            match (x.mean_score, y.mean_score) {
                (Some(p), Some(q)) => prop_assert!((p - q).abs() < 1e-9),
                (p, q) => prop_assert_eq!(p, q),
            }
        }
    }

    #[test]
    fn ensemble_mean_is_weighted_member_mean(records in prediction_records()) {
        let models: BTreeSet<String> = records.iter().map(|r| r.model_id.clone()).collect();
        let spec = EnsembleSpec::new("E", models.iter().cloned());
        let pooled = pool_ensemble(&spec, &records).unwrap();
        for e in &pooled {
            let mut total = 0.0;
            let mut valid = 0usize;
            for m in &models {
                let member = summarize(m, records.iter().filter(|r| &r.model_id == m)).unwrap();
                let s = member.iter().find(|s| s.argument_id == e.argument_id).unwrap();
                let k = s.n_reps - s.na_count;
                if let Some(mean) = s.mean_score {
                    total += mean * k as f64;
                }
                valid += k;
            }
            match e.mean_score {
                Some(mean) => prop_assert!((mean - total / valid as f64).abs() < 1e-9),
                None => prop_assert_eq!(valid, 0),
            }
        }
    }

    #[test]
    fn selection_is_monotone_in_scored_repetitions(records in prediction_records(), flip in any::<prop::sample::Index>()) {
        let models: Vec<String> = records.iter().map(|r| r.model_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let before = select_high_confidence_models(&records, &models).unwrap();
        let mut more = records.clone();
        let k = flip.index(more.len());
        more[k].value = PredictionValue::Score(50.0);
        let after = select_high_confidence_models(&more, &models).unwrap();
        prop_assert!(before.is_subset(&after));
    }

    #[test]
    fn predictions_round_trip_in_any_row_order(
        records in prediction_records(),
        keep in Just(()).prop_flat_map(|_| subsequence((0..60).collect::<Vec<usize>>(), 0..=60)),
    ) {
        let mut buf = Vec::new();
        write_predictions(&mut buf, &records).unwrap();
        let back = load_predictions(buf.as_slice(), Format::Csv, "mem").unwrap();
        prop_assert_eq!(&back, &records);

        // Rows moved to the front in a different order still load to the same records.
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let header = lines.remove(0);
        let mut reordered: Vec<&str> = keep.iter().rev().filter(|k| **k < lines.len()).map(|k| lines[*k]).collect();
        let picked: BTreeSet<usize> = keep.iter().copied().collect();
        reordered.extend(lines.iter().enumerate().filter(|(k, _)| !picked.contains(k)).map(|(_, l)| *l));
        let permuted = format!("{header}\n{}\n", reordered.join("\n"));
        prop_assert_eq!(load_predictions(permuted.as_bytes(), Format::Csv, "mem").unwrap(), records);
    }
}
