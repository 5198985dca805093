//! Krippendorff's alpha over incomplete rater × unit grids, and majority labels.
//!
//! Coincidence counts are accumulated exactly (integer pair counts, rational
//! per-unit weights `1 / (m_u - 1)`), and only the final ratio is converted to
//! floating point.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::corpus::BinaryLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Nominal,
    Ordinal,
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nominal" => Ok(Level::Nominal),
            "ordinal" => Ok(Level::Ordinal),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

/// Partial map from (unit, rater) to a category code.
///
/// Ordinal grids use the caller's integer levels directly; nominal grids can
/// be filled with string tokens via [`ReliabilityGrid::insert_label`], which
/// interns each token to a code.
#[derive(Debug, Clone)]
pub struct ReliabilityGrid {
    level: Level,
    units: BTreeMap<String, BTreeMap<String, i64>>,
    raters: BTreeMap<String, ()>,
    tokens: BTreeMap<String, i64>,
}

impl ReliabilityGrid {
    pub fn new(level: Level) -> Self {
        ReliabilityGrid {
            level,
            units: BTreeMap::new(),
            raters: BTreeMap::new(),
            tokens: BTreeMap::new(),
        }
    }

    pub fn level(&self) -> Level {
        self.level
    }

    /// Sets a cell, returning the previous value if one was present.
    pub fn insert(&mut self, unit: &str, rater: &str, value: i64) -> Option<i64> {
        self.raters.insert(rater.to_owned(), ());
        self.units
            .entry(unit.to_owned())
            .or_default()
            .insert(rater.to_owned(), value)
    }

    pub fn insert_label(&mut self, unit: &str, rater: &str, token: &str) -> Option<i64> {
        let next = self.tokens.len() as i64;
        let code = *self.tokens.entry(token.to_owned()).or_insert(next);
        self.insert(unit, rater, code)
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn n_values(&self) -> usize {
        self.units.values().map(BTreeMap::len).sum()
    }

    /// Units holding at least two values, i.e. those that contribute pairs.
    pub fn n_pairable_units(&self) -> usize {
        self.units.values().filter(|u| u.len() >= 2).count()
    }

    pub fn alpha(&self) -> Result<f64> {
        krippendorff_alpha(self)
    }
}

/// Chance-corrected agreement `1 - D_o / D_e` from the coincidence matrix.
pub fn krippendorff_alpha(grid: &ReliabilityGrid) -> Result<f64> {
    let pairable: Vec<Vec<i64>> = grid
        .units
        .values()
        .filter(|u| u.len() >= 2)
        .map(|u| u.values().copied().collect())
        .collect();
    if pairable.len() < 2 {
        return Err(Error::invalid(format!(
            "krippendorff alpha needs at least 2 units with 2 or more values, found {}",
            pairable.len()
        )));
    }

    // Category frequencies over pairable values.
    let mut freq: BTreeMap<i64, i128> = BTreeMap::new();
    for u in &pairable {
        for v in u {
            *freq.entry(*v).or_default() += 1;
        }
    }
    let cats: Vec<i64> = freq.keys().copied().collect();
    let index: BTreeMap<i64, usize> = cats.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let counts: Vec<i128> = freq.values().copied().collect();
    let n: i128 = counts.iter().sum();
    let delta = distance_table(grid.level, &counts);

    let mut observed = Ratio::from_integer(0i128);
    for u in &pairable {
        let mut within = vec![0i128; cats.len()];
        for v in u {
            within[index[v]] += 1;
        }
        let mut s: i128 = 0;
        for c in 0..cats.len() {
            if within[c] == 0 {
                continue;
            }
            for k in 0..cats.len() {
                if c != k {
                    s += within[c] * within[k] * delta[c][k];
                }
            }
        }
        if s != 0 {
            observed += Ratio::new(s, u.len() as i128 - 1);
        }
    }

    let mut expected: i128 = 0;
    for c in 0..cats.len() {
        for k in 0..cats.len() {
            if c != k {
                expected += counts[c] * counts[k] * delta[c][k];
            }
        }
    }
    if expected == 0 {
        return Err(Error::AlphaUndefined);
    }

    let alpha = Ratio::from_integer(1) - observed * Ratio::from_integer(n - 1) / Ratio::from_integer(expected);
    alpha
        .to_f64()
        .ok_or_else(|| Error::NonFinite("krippendorff alpha".into()))
}

/// Pairwise distances scaled to integers: nominal `[c != k]`, ordinal `4 δ²`.
fn distance_table(level: Level, counts: &[i128]) -> Vec<Vec<i128>> {
    let k = counts.len();
    let mut table = vec![vec![0i128; k]; k];
    match level {
        Level::Nominal => {
            for (c, row) in table.iter_mut().enumerate() {
                for (j, d) in row.iter_mut().enumerate() {
                    *d = i128::from(c != j);
                }
            }
        }
        Level::Ordinal => {
            for c in 0..k {
                for j in c + 1..k {
                    let span: i128 = counts[c..=j].iter().sum();
                    let d = 2 * span - counts[c] - counts[j];
                    table[c][j] = d * d;
                    table[j][c] = d * d;
                }
            }
        }
    }
    table
}

/// Strict-majority label of an odd number of binary votes, with a unanimity flag.
pub fn majority_label(labels: &[BinaryLabel]) -> Result<(BinaryLabel, bool)> {
    if labels.len().is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "majority label needs an odd number of votes, got {}",
            labels.len()
        )));
    }
    let political = labels.iter().filter(|l| **l == BinaryLabel::Political).count();
    let label = if 2 * political > labels.len() {
        BinaryLabel::Political
    } else {
        BinaryLabel::Apolitical
    };
    let unanimous = political == 0 || political == labels.len();
    Ok((label, unanimous))
}

/// Nominal alpha treating two label maps as two raters over their shared units.
pub fn two_party_alpha(
    labels_a: &BTreeMap<String, BinaryLabel>,
    labels_b: &BTreeMap<String, BinaryLabel>,
) -> Result<f64> {
    let mut grid = ReliabilityGrid::new(Level::Nominal);
    let mut shared = 0usize;
    for (unit, a) in labels_a {
        if let Some(b) = labels_b.get(unit) {
            grid.insert_label(unit, "a", a.as_str());
            grid.insert_label(unit, "b", b.as_str());
            shared += 1;
        }
    }
    if shared == 0 {
        return Err(Error::invalid("label maps share no units"));
    }
    krippendorff_alpha(&grid)
}
