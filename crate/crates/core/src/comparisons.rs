//! Win matrices from model repetitions and framed human choices, their
//! normalized view, and the two-party confidence partition of pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{Choice, Framing, PairwiseAnnotation, PredictionRecord};
use crate::error::{Error, Result};
use crate::pairs::{decile, ItemPair};

/// Outcome of comparing two binned scores: 1 for a win, 0.5 for a draw, 0 for a loss.
pub fn win<T: PartialOrd>(x: T, y: T) -> f64 {
    if x > y {
        1.0
    } else if x == y {
        0.5
    } else {
        0.0
    }
}

/// Hollow square matrix of win mass; entry `(i, j)` is the mass of `i` beating `j`.
///
/// All mass is a multiple of 0.5, so sums stay exact in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct WinMatrix {
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
    w: Vec<f64>,
}

impl WinMatrix {
    pub fn new(ids: Vec<String>) -> Result<WinMatrix> {
        let mut index = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate item id {id}")));
            }
        }
        let n = ids.len();
        Ok(WinMatrix {
            ids,
            index,
            w: vec![0.0; n * n],
        })
    }

    /// Builds from a row-major `n × n` array of win mass.
    pub fn from_dense(ids: Vec<String>, values: Vec<f64>) -> Result<WinMatrix> {
        let mut m = WinMatrix::new(ids)?;
        if values.len() != m.w.len() {
            return Err(Error::invalid(format!(
                "expected {} matrix entries, got {}",
                m.w.len(),
                values.len()
            )));
        }
        m.w = values;
        m.check_invariants()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id)
            .ok_or_else(|| Error::invalid(format!("unknown item {id}")))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n() + j]
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.get(i, j) + self.get(j, i)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    fn add(&mut self, i: usize, j: usize, amount: f64) {
        let n = self.n();
        self.w[i * n + j] += amount;
    }

    /// Records `winner` beating `loser` once.
    pub fn add_win(&mut self, winner: &str, loser: &str) -> Result<()> {
        let (i, j) = (self.require(winner)?, self.require(loser)?);
        if i == j {
            return Err(Error::invalid(format!("self-comparison of {winner}")));
        }
        self.add(i, j, 1.0);
        Ok(())
    }

    /// Records a draw: half a win in each direction.
    pub fn add_draw(&mut self, a: &str, b: &str) -> Result<()> {
        let (i, j) = (self.require(a)?, self.require(b)?);
        if i == j {
            return Err(Error::invalid(format!("self-comparison of {a}")));
        }
        self.add(i, j, 0.5);
        self.add(j, i, 0.5);
        Ok(())
    }

    pub fn transpose(&self) -> WinMatrix {
        let n = self.n();
        let mut t = self.clone();
        for i in 0..n {
            for j in 0..n {
                t.w[i * n + j] = self.w[j * n + i];
            }
        }
        t
    }

    pub fn plus(&self, other: &WinMatrix) -> Result<WinMatrix> {
        if self.ids != other.ids {
            return Err(Error::invalid("win matrices cover different items"));
        }
        let mut out = self.clone();
        for (a, b) in out.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        Ok(out)
    }

    /// Copy keeping only the listed pairs' entries (both orientations).
    pub fn restricted_to(&self, pairs: &[ItemPair]) -> Result<WinMatrix> {
        let mut out = WinMatrix::new(self.ids.clone())?;
        let n = self.n();
        for p in pairs {
            let (i, j) = (self.require(&p.first)?, self.require(&p.second)?);
            out.w[i * n + j] = self.get(i, j);
            out.w[j * n + i] = self.get(j, i);
        }
        Ok(out)
    }

    /// `W_ij / M_ij`; undefined when the pair was never compared.
    pub fn normalized_entry(&self, a: &str, b: &str) -> Result<f64> {
        let (i, j) = (self.require(a)?, self.require(b)?);
        let m = self.mass(i, j);
        if i == j || m <= 0.0 {
            return Err(Error::Undefined(format!("no comparisons between {a} and {b}")));
        }
        Ok(self.get(i, j) / m)
    }

    /// Pairs `(i < j)` by position with positive comparison mass.
    pub fn compared_pairs(&self) -> Vec<ItemPair> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.mass(i, j) > 0.0 {
                    out.extend(ItemPair::new(self.ids[i].clone(), self.ids[j].clone()));
                }
            }
        }
        out.sort();
        out
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(Error::invalid(format!("diagonal entry for {} is nonzero", self.ids[i])));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!(
                        "entry ({}, {}) = {v} is not a finite nonnegative mass",
                        self.ids[i], self.ids[j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Dense CSV: header `id,<ids...>`, then one row per item.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend((0..self.n()).map(|j| format!("{}", self.get(i, j))));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<matrix writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, name: &str) -> Result<WinMatrix> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header.first().map(String::as_str) != Some("id") {
            return Err(Error::invalid(format!("{name}: first header cell must be \"id\"")));
        }
        let ids: Vec<String> = header[1..].to_vec();
        let n = ids.len();
        let mut values = Vec::with_capacity(n * n);
        let mut rows = 0usize;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rows >= n || rec.get(0) != Some(ids[rows].as_str()) {
                return Err(Error::row(name, line, "row ids must match the header order"));
            }
            if rec.len() != n + 1 {
                return Err(Error::row(name, line, format!("expected {} cells", n + 1)));
            }
            for cell in rec.iter().skip(1) {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::row(name, line, format!("unparseable mass {cell:?}")))?;
                values.push(v);
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::invalid(format!("{name}: expected {n} rows, found {rows}")));
        }
        WinMatrix::from_dense(ids, values)
    }
}

/// Decile of each repetition (None for NA) per item, pooled over `members`.
pub fn repetition_deciles(
    records: &[PredictionRecord],
    members: &BTreeSet<String>,
    items: &[String],
) -> Result<BTreeMap<String, Vec<Option<u8>>>> {
    let wanted: BTreeSet<&str> = items.iter().map(String::as_str).collect();
    let mut keyed: Vec<&PredictionRecord> = records
        .iter()
        .filter(|r| members.contains(&r.model_id) && wanted.contains(r.argument_id.as_str()))
        .collect();
    keyed.sort_by(|a, b| (&a.argument_id, &a.model_id, a.repetition).cmp(&(&b.argument_id, &b.model_id, b.repetition)));
    let mut out: BTreeMap<String, Vec<Option<u8>>> = items.iter().map(|id| (id.clone(), Vec::new())).collect();
    for r in keyed {
        let d = r.value.score().map(decile).transpose()?;
        out.get_mut(&r.argument_id).expect("filtered to items").push(d);
    }
    Ok(out)
}

/// Dense win matrix over every item pair from all combinations of repetitions.
///
/// Combinations involving an NA repetition are skipped entirely, so
/// `M_ij` counts valid combinations.
pub fn model_win_matrix<B>(bins: &BTreeMap<String, Vec<Option<B>>>) -> Result<WinMatrix>
where
    B: Copy + Ord,
{
    let levels: Vec<B> = bins
        .values()
        .flatten()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let ids: Vec<String> = bins.keys().cloned().collect();
    let mut hist = Vec::with_capacity(ids.len());
    for (id, reps) in bins {
        let mut h = vec![0u64; levels.len()];
        for b in reps.iter().flatten() {
            h[levels.binary_search(b).expect("level collected above")] += 1;
        }
        if h.iter().all(|c| *c == 0) {
            return Err(Error::invalid(format!("item {id} has no valid repetitions")));
        }
        hist.push(h);
    }
    // below[i][x]: repetitions of i strictly below level x.
    let below: Vec<Vec<u64>> = hist
        .iter()
        .map(|h| {
            let mut acc = 0;
            h.iter()
                .map(|c| {
                    let b = acc;
                    acc += c;
                    b
                })
                .collect()
        })
        .collect();
    let mut m = WinMatrix::new(ids)?;
    let n = m.n();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // Twice the win mass is an integer: 2·[x > y] + [x == y].
            let twice: u64 = (0..levels.len())
                .map(|x| hist[i][x] * (2 * below[j][x] + hist[j][x]))
                .sum();
            m.w[i * n + j] = twice as f64 / 2.0;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FramingFilter {
    Left,
    Right,
    Both,
}

/// Win matrix from framed pairwise choices, oriented as "more right-wing wins".
///
/// Left-framed choices are accumulated as "more left-wing wins" and the
/// resulting matrix is transposed before being added to the right-framed one.
pub fn human_win_matrix(
    annotations: &[PairwiseAnnotation],
    ids: &[String],
    filter: FramingFilter,
) -> Result<WinMatrix> {
    let mut left = WinMatrix::new(ids.to_vec())?;
    let mut right = WinMatrix::new(ids.to_vec())?;
    for a in annotations {
        let target = match a.framing {
            Framing::Left => &mut left,
            Framing::Right => &mut right,
        };
        for id in [&a.arg_i, &a.arg_j] {
            if target.index_of(id).is_none() {
                return Err(Error::invalid(format!(
                    "annotation by {} references unknown item {id}",
                    a.annotator_id
                )));
            }
        }
        match a.choice {
            Choice::First => target.add_win(&a.arg_i, &a.arg_j)?,
            Choice::Second => target.add_win(&a.arg_j, &a.arg_i)?,
            Choice::Equal => target.add_draw(&a.arg_i, &a.arg_j)?,
        }
    }
    match filter {
        FramingFilter::Left => Ok(left.transpose()),
        FramingFilter::Right => Ok(right),
        FramingFilter::Both => left.transpose().plus(&right),
    }
}

/// Per-pair win mass in canonical orientation, from which `Ŵ` is read.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormalizedMatrix {
    entries: BTreeMap<ItemPair, (f64, f64)>,
}

impl NormalizedMatrix {
    /// `Ŵ_ab`, if the pair was compared.
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let pair = ItemPair::new(a, b)?;
        let (w_first, w_second) = *self.entries.get(&pair)?;
        let mass = w_first + w_second;
        Some(if pair.first == a {
            w_first / mass
        } else {
            w_second / mass
        })
    }

    pub fn get_pair(&self, pair: &ItemPair) -> Option<f64> {
        self.get(&pair.first, &pair.second)
    }

    fn require(&self, pair: &ItemPair) -> Result<f64> {
        self.get_pair(pair)
            .ok_or_else(|| Error::Undefined(format!("no normalized entry for {pair}")))
    }

    pub fn pairs(&self) -> impl Iterator<Item = &ItemPair> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Builds from canonical pairs and their normalized values.
    pub fn from_values<I: IntoIterator<Item = (ItemPair, f64)>>(values: I) -> NormalizedMatrix {
        NormalizedMatrix {
            entries: values.into_iter().map(|(p, v)| (p, (v, 1.0 - v))).collect(),
        }
    }
}

/// Normalized view `Ŵ_ij = W_ij / M_ij` over all compared pairs.
pub fn normalized(wm: &WinMatrix) -> NormalizedMatrix {
    let mut entries = BTreeMap::new();
    let n = wm.n();
    for i in 0..n {
        for j in i + 1..n {
            if wm.mass(i, j) > 0.0 {
                let pair = ItemPair::new(wm.ids[i].clone(), wm.ids[j].clone()).expect("distinct ids");
                let (wi, wj) = (wm.get(i, j), wm.get(j, i));
                let v = if pair.first == wm.ids[i] { (wi, wj) } else { (wj, wi) };
                entries.insert(pair, v);
            }
        }
    }
    NormalizedMatrix { entries }
}

/// Confident iff `|Ŵ − 0.5| ≥ margin`; symmetric in pair orientation.
pub fn is_confident(normalized_value: f64, margin: f64) -> bool {
    (normalized_value - 0.5).abs() >= margin
}

/// The four model × human confidence cells, plus the full pair set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairSubset {
    #[serde(rename = "P")]
    All,
    #[serde(rename = "P11")]
    BothConfident,
    #[serde(rename = "P10")]
    ModelOnly,
    #[serde(rename = "P01")]
    HumanOnly,
    #[serde(rename = "P00")]
    Neither,
}

impl PairSubset {
    pub const ALL: [PairSubset; 5] = [
        PairSubset::All,
        PairSubset::BothConfident,
        PairSubset::ModelOnly,
        PairSubset::HumanOnly,
        PairSubset::Neither,
    ];

    pub const CELLS: [PairSubset; 4] = [
        PairSubset::BothConfident,
        PairSubset::ModelOnly,
        PairSubset::HumanOnly,
        PairSubset::Neither,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PairSubset::All => "P",
            PairSubset::BothConfident => "P11",
            PairSubset::ModelOnly => "P10",
            PairSubset::HumanOnly => "P01",
            PairSubset::Neither => "P00",
        }
    }

    pub fn cell(model_confident: bool, human_confident: bool) -> PairSubset {
        match (model_confident, human_confident) {
            (true, true) => PairSubset::BothConfident,
            (true, false) => PairSubset::ModelOnly,
            (false, true) => PairSubset::HumanOnly,
            (false, false) => PairSubset::Neither,
        }
    }
}

impl fmt::Display for PairSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidencePartition {
    pub margin: f64,
    /// (model_confident, human_confident) per pair.
    pub labels: BTreeMap<ItemPair, (bool, bool)>,
}

impl ConfidencePartition {
    pub fn subset(&self, which: PairSubset) -> Vec<ItemPair> {
        self.labels
            .iter()
            .filter(|(_, (m, h))| which == PairSubset::All || PairSubset::cell(*m, *h) == which)
            .map(|(p, _)| p.clone())
            .collect()
    }
}

pub fn confidence_partition(
    model: &NormalizedMatrix,
    human: &NormalizedMatrix,
    pairs: &[ItemPair],
    margin: f64,
) -> Result<ConfidencePartition> {
    if !(margin > 0.0 && margin <= 0.5) {
        return Err(Error::invalid(format!("margin {margin} outside (0, 0.5]")));
    }
    let mut labels = BTreeMap::new();
    for p in pairs {
        let m = model.require(p)?;
        let h = human.require(p)?;
        labels.insert(p.clone(), (is_confident(m, margin), is_confident(h, margin)));
    }
    Ok(ConfidencePartition { margin, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn win_truth_table() {
        assert_eq!(win(5, 3), 1.0);
        assert_eq!(win(3, 3), 0.5);
        assert_eq!(win(2, 4), 0.0);
    }

    #[test]
    fn two_item_enumeration() {
        let bins: BTreeMap<String, Vec<Option<u8>>> = [
            ("i".to_string(), vec![Some(3), Some(3)]),
            ("j".to_string(), vec![Some(2), Some(4)]),
        ]
        .into();
        let m = model_win_matrix(&bins).unwrap();
        assert_eq!((m.get(0, 1), m.get(1, 0), m.mass(0, 1)), (2.0, 2.0, 4.0));

        let flat: BTreeMap<String, Vec<Option<u8>>> =
            [("i".to_string(), vec![Some(5); 5]), ("j".to_string(), vec![Some(5); 5])].into();
        let m = model_win_matrix(&flat).unwrap();
        assert_eq!(m.get(0, 1), m.mass(0, 1) / 2.0);

        let ordered: BTreeMap<String, Vec<Option<u8>>> = [
            ("i".to_string(), vec![Some(7), Some(8)]),
            ("j".to_string(), vec![Some(1), None]),
        ]
        .into();
        let m = model_win_matrix(&ordered).unwrap();
        assert_eq!((m.get(0, 1), m.get(1, 0), m.mass(0, 1)), (2.0, 0.0, 2.0));

        let dead: BTreeMap<String, Vec<Option<u8>>> =
            [("i".to_string(), vec![Some(1)]), ("j".to_string(), vec![None, None])].into();
        assert!(model_win_matrix(&dead).unwrap_err().to_string().contains("item j"));
    }

    fn ann(i: &str, j: &str, framing: Framing, choice: Choice) -> PairwiseAnnotation {
        PairwiseAnnotation {
            annotator_id: "h".into(),
            arg_i: i.into(),
            arg_j: j.into(),
            framing,
            choice,
        }
    }

    #[test]
    fn framing_orientation() {
        let items = ids(&["i", "j"]);
        let r = human_win_matrix(
            &[ann("i", "j", Framing::Right, Choice::First)],
            &items,
            FramingFilter::Both,
        )
        .unwrap();
        assert_eq!((r.get(0, 1), r.get(1, 0)), (1.0, 0.0));
        let l = human_win_matrix(
            &[ann("i", "j", Framing::Left, Choice::First)],
            &items,
            FramingFilter::Both,
        )
        .unwrap();
        assert_eq!((l.get(0, 1), l.get(1, 0)), (0.0, 1.0));

        let mut six = vec![
            ann("i", "j", Framing::Right, Choice::First),
            ann("i", "j", Framing::Right, Choice::First),
            ann("i", "j", Framing::Right, Choice::Equal),
            ann("i", "j", Framing::Left, Choice::Second),
            ann("j", "i", Framing::Left, Choice::First),
        ];
        six.push(ann("j", "i", Framing::Right, Choice::Second));
        let h = human_win_matrix(&six, &items, FramingFilter::Both).unwrap();
        assert_eq!((h.get(0, 1), h.get(1, 0)), (5.5, 0.5));
        assert_eq!(h.normalized_entry("i", "j").unwrap(), 11.0 / 12.0);

        let err = human_win_matrix(
            &[ann("i", "zz", Framing::Right, Choice::First)],
            &items,
            FramingFilter::Both,
        );
        assert!(err.unwrap_err().to_string().contains("zz"));
    }

    #[test]
    fn normalization() {
        let mut m = WinMatrix::new(ids(&["a", "b", "c"])).unwrap();
        for _ in 0..3 {
            m.add_win("a", "b").unwrap();
        }
        m.add_win("b", "a").unwrap();
        m.add_draw("a", "c").unwrap();
        let n = normalized(&m);
        assert_eq!(n.get("a", "b"), Some(0.75));
        assert_eq!(n.get("b", "a"), Some(0.25));
        assert_eq!(n.get("c", "a"), Some(0.5));
        assert_eq!(n.get("b", "c"), None);
        assert!(matches!(m.normalized_entry("b", "c"), Err(Error::Undefined(_))));
    }

    #[test]
    fn confidence_cells() {
        assert!(is_confident(0.75, 0.25));
        assert!(is_confident(0.25, 0.25));
        assert!(!is_confident(0.6, 0.25));
        let p = ItemPair::new("a", "b").unwrap();
        let model = NormalizedMatrix::from_values([(p.clone(), 0.9)]);
        let human = NormalizedMatrix::from_values([(p.clone(), 0.5)]);
        let part = confidence_partition(&model, &human, std::slice::from_ref(&p), 0.25).unwrap();
        assert_eq!(part.subset(PairSubset::ModelOnly), vec![p.clone()]);
        assert!(part.subset(PairSubset::BothConfident).is_empty());
        assert!(confidence_partition(&model, &human, &[p], 0.0).is_err());
    }

    #[test]
    fn dense_csv_round_trip() {
        let mut m = WinMatrix::new(ids(&["a", "b"])).unwrap();
        m.add_win("a", "b").unwrap();
        m.add_draw("a", "b").unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = WinMatrix::read_csv(buf.as_slice(), "m.csv").unwrap();
        assert_eq!(back, m);
        assert!(WinMatrix::from_dense(ids(&["a", "b"]), vec![1.0, 0.0, 0.0, 0.0]).is_err());
    }
}
