//! Decile binning of position scores, stratified pair sampling and design
//! diagnostics (connectivity, sample size, per-item partner-bin entropy).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Unordered pair of item ids, stored with `first < second`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemPair {
    pub first: String,
    pub second: String,
}

impl ItemPair {
    /// Canonical (lexicographic) orientation of `{a, b}`; `None` for a self-pair.
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Option<ItemPair> {
        let (a, b) = (a.into(), b.into());
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(ItemPair { first: a, second: b }),
            std::cmp::Ordering::Greater => Some(ItemPair { first: b, second: a }),
            std::cmp::Ordering::Equal => None,
        }
    }
}

impl fmt::Display for ItemPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.first, self.second)
    }
}

/// Decile index 0..=9 of a score in `[0, 100]`; 100 falls in the last decile.
pub fn decile(score: f64) -> Result<u8> {
    if !score.is_finite() || !(0.0..=100.0).contains(&score) {
        return Err(Error::invalid(format!("score {score} outside [0, 100]")));
    }
    Ok(((score / 10.0).floor() as u8).min(9))
}

/// Assignment of items to the occupied deciles, relabelled 1..=K in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionBinning {
    /// Occupied decile indices, ascending; bin `b` is `occupied_deciles[b - 1]`.
    pub occupied_deciles: Vec<u8>,
    pub assignment: BTreeMap<String, usize>,
}

impl PositionBinning {
    pub fn k(&self) -> usize {
        self.occupied_deciles.len()
    }

    pub fn bin_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn items(&self) -> Vec<String> {
        self.assignment.keys().cloned().collect()
    }

    pub fn members(&self, bin: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, b)| **b == bin)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Score range `[lo, hi)` covered by a bin (the top decile is closed).
    pub fn range(&self, bin: usize) -> Option<(f64, f64)> {
        let d = *self.occupied_deciles.get(bin.checked_sub(1)?)? as f64;
        Some((d * 10.0, d * 10.0 + 10.0))
    }
}

pub fn bin_scores(scores: &BTreeMap<String, f64>) -> Result<PositionBinning> {
    let mut deciles = BTreeMap::new();
    for (id, s) in scores {
        let d = decile(*s).map_err(|e| Error::invalid(format!("argument {id}: {e}")))?;
        deciles.insert(id.clone(), d);
    }
    let occupied: Vec<u8> = deciles.values().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let relabel: BTreeMap<u8, usize> = occupied.iter().enumerate().map(|(i, d)| (*d, i + 1)).collect();
    Ok(PositionBinning {
        assignment: deciles.into_iter().map(|(id, d)| (id, relabel[&d])).collect(),
        occupied_deciles: occupied,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stratum {
    Intra(usize),
    Inter(usize, usize),
}

impl Stratum {
    fn stream(self) -> u64 {
        match self {
            Stratum::Intra(b) => b as u64,
            Stratum::Inter(a, b) => (1 << 32) | ((a as u64) << 16) | b as u64,
        }
    }

    pub fn contains(self, bin_i: usize, bin_j: usize) -> bool {
        match self {
            Stratum::Intra(b) => bin_i == b && bin_j == b,
            Stratum::Inter(a, b) => (bin_i, bin_j) == (a, b) || (bin_i, bin_j) == (b, a),
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::Intra(b) => write!(f, "intra:{b}"),
            Stratum::Inter(a, b) => write!(f, "inter:{a}-{b}"),
        }
    }
}

impl FromStr for Stratum {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("unknown stratum {s:?}");
        if let Some(b) = s.strip_prefix("intra:") {
            return b.parse().map(Stratum::Intra).map_err(|_| bad());
        }
        let rest = s.strip_prefix("inter:").ok_or_else(bad)?;
        let (a, b) = rest.split_once('-').ok_or_else(bad)?;
        Ok(Stratum::Inter(
            a.parse().map_err(|_| bad())?,
            b.parse().map_err(|_| bad())?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledPair {
    pub pair: ItemPair,
    pub stratum: Stratum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumDraw {
    pub stratum: Stratum,
    pub requested: usize,
    pub available: usize,
    pub drawn: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    pub seed: u64,
    pub pairs: Vec<SampledPair>,
    pub strata: Vec<StratumDraw>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn item_pairs(&self) -> Vec<ItemPair> {
        self.pairs.iter().map(|p| p.pair.clone()).collect()
    }
}

/// Uniform draw without replacement of `intra_per_bin` pairs within each bin and
/// `inter_per_binpair` pairs for each unordered pair of distinct bins.
///
/// Strata with fewer candidate pairs than requested contribute all of them.
pub fn sample_pairs(binning: &PositionBinning, intra_per_bin: usize, inter_per_binpair: usize, seed: u64) -> PairSet {
    let k = binning.k();
    let members: Vec<Vec<&str>> = (1..=k).map(|b| binning.members(b)).collect();
    let mut strata: Vec<Stratum> = (1..=k).map(Stratum::Intra).collect();
    for a in 1..=k {
        for b in a + 1..=k {
            strata.push(Stratum::Inter(a, b));
        }
    }

    let mut pairs = Vec::new();
    let mut draws = Vec::with_capacity(strata.len());
    for stratum in strata {
        let (candidates, requested) = match stratum {
            Stratum::Intra(b) => {
                let m = &members[b - 1];
                let mut c = Vec::new();
                for x in 0..m.len() {
                    for y in x + 1..m.len() {
                        c.extend(ItemPair::new(m[x], m[y]));
                    }
                }
                (c, intra_per_bin)
            }
            Stratum::Inter(a, b) => {
                let mut c = Vec::new();
                for x in &members[a - 1] {
                    for y in &members[b - 1] {
                        c.extend(ItemPair::new(*x, *y));
                    }
                }
                (c, inter_per_binpair)
            }
        };
        let take = requested.min(candidates.len());
        let mut chosen: Vec<ItemPair> = if take == candidates.len() {
            candidates.clone()
        } else {
            let mut rng = stream_rng(seed, stratum.stream());
            index::sample(&mut rng, candidates.len(), take)
                .into_iter()
                .map(|i| candidates[i].clone())
                .collect()
        };
        chosen.sort();
        pairs.extend(chosen.into_iter().map(|pair| SampledPair { pair, stratum }));
        draws.push(StratumDraw {
            stratum,
            requested,
            available: candidates.len(),
            drawn: take,
        });
    }
    PairSet {
        seed,
        pairs,
        strata: draws,
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Number of connected components of the undirected graph on `items`.
///
/// Edges touching ids outside `items` are ignored.
pub fn count_components<'a, I>(pairs: I, items: &[String]) -> usize
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let index: BTreeMap<&str, usize> = items.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut sets = DisjointSets::new(items.len());
    for (a, b) in pairs {
        if let (Some(&x), Some(&y)) = (index.get(a), index.get(b)) {
            sets.union(x, y);
        }
    }
    (0..items.len()).filter(|&i| sets.find(i) == i).count()
}

/// True iff the comparison graph over `items` forms a single component.
pub fn check_connectivity(pairs: &[ItemPair], items: &[String]) -> bool {
    count_components(pairs.iter().map(|p| (p.first.as_str(), p.second.as_str())), items) <= 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeCheck {
    pub n_items: usize,
    pub n_pairs: usize,
    /// `n ln n`.
    pub target: f64,
    pub satisfied: bool,
}

pub fn check_sample_size(n_pairs: usize, n_items: usize) -> Result<SampleSizeCheck> {
    if n_items < 2 {
        return Err(Error::invalid(format!("sample size check needs n >= 2, got {n_items}")));
    }
    let n = n_items as f64;
    let target = n * n.ln();
    Ok(SampleSizeCheck {
        n_items,
        n_pairs,
        target,
        satisfied: n_pairs as f64 >= target,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub per_item: BTreeMap<String, f64>,
    pub median: f64,
    /// Share of items with entropy in `[2.2, 2.8]`.
    pub fraction_in_band: f64,
}

pub const ENTROPY_BAND: (f64, f64) = (2.2, 2.8);

/// Shannon entropy (bits) of each item's partner-bin distribution.
pub fn node_entropy(pairs: &[ItemPair], binning: &PositionBinning) -> Result<EntropyReport> {
    let mut partner_bins: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    for p in pairs {
        for (me, other) in [(&p.first, &p.second), (&p.second, &p.first)] {
            let bin = binning
                .bin_of(other)
                .ok_or_else(|| Error::invalid(format!("item {other} has no bin assignment")))?;
            *partner_bins.entry(me.as_str()).or_default().entry(bin).or_default() += 1;
        }
    }
    let mut per_item = BTreeMap::new();
    for id in binning.assignment.keys() {
        let counts = partner_bins
            .get(id.as_str())
            .ok_or_else(|| Error::invalid(format!("item {id} appears in no pair")))?;
        let total: usize = counts.values().sum();
        let h: f64 = counts
            .values()
            .map(|&c| {
                let f = c as f64 / total as f64;
                -f * f.log2()
            })
            .sum();
        per_item.insert(id.clone(), h.max(0.0));
    }
    let mut values: Vec<f64> = per_item.values().copied().collect();
    values.sort_by(f64::total_cmp);
    let median = match values.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => values[n / 2],
        n => (values[n / 2 - 1] + values[n / 2]) / 2.0,
    };
    let in_band = values
        .iter()
        .filter(|h| (ENTROPY_BAND.0..=ENTROPY_BAND.1).contains(*h))
        .count();
    Ok(EntropyReport {
        fraction_in_band: if values.is_empty() {
            0.0
        } else {
            in_band as f64 / values.len() as f64
        },
        per_item,
        median,
    })
}
