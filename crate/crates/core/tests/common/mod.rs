//! Independent reference implementations used by the integration tests.
//!
//! These are deliberately naive (quadratic loops, plain floats) and share no
//! code with the library.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

/// Win mass by looping over every pair of repetitions; NA combinations are skipped.
pub fn brute_win_matrix(reps: &BTreeMap<String, Vec<Option<f64>>>) -> Vec<Vec<f64>> {
    let rows: Vec<&Vec<Option<f64>>> = reps.values().collect();
    let n = rows.len();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for a in rows[i].iter().flatten() {
                for b in rows[j].iter().flatten() {
                    w[i][j] += if a > b {
                        1.0
                    } else if a == b {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    w
}

/// Krippendorff's alpha from the textbook coincidence matrix.
///
/// `units[u][r]` is rater r's value for unit u. Returns None when the expected
/// disagreement is zero or fewer than two values are pairable.
pub fn brute_alpha(units: &[Vec<Option<i64>>], ordinal: bool) -> Option<f64> {
    let values: BTreeSet<i64> = units.iter().flatten().flatten().copied().collect();
    let cats: Vec<i64> = values.into_iter().collect();
    let k = cats.len();
    let idx = |v: i64| cats.iter().position(|c| *c == v).unwrap();
    let mut o = vec![vec![0.0f64; k]; k];
    for unit in units {
        let vals: Vec<i64> = unit.iter().flatten().copied().collect();
        let m = vals.len();
        if m < 2 {
            continue;
        }
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    o[idx(vals[a])][idx(vals[b])] += 1.0 / (m as f64 - 1.0);
                }
            }
        }
    }
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    if n < 2.0 {
        return None;
    }
    let delta = |c: usize, d: usize| -> f64 {
        if c == d {
            return 0.0;
        }
        if !ordinal {
            return 1.0;
        }
        let (lo, hi) = (c.min(d), c.max(d));
        let s: f64 = (lo..=hi).map(|g| n_c[g]).sum::<f64>() - (n_c[c] + n_c[d]) / 2.0;
        s * s
    };
    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..k {
        for d in 0..k {
            d_o += o[c][d] * delta(c, d);
            d_e += n_c[c] * n_c[d] * delta(c, d);
        }
    }
    if d_e == 0.0 {
        return None;
    }
    Some(1.0 - (n - 1.0) * d_o / d_e)
}

/// BT maximum likelihood by Zermelo's fixed-point iteration on the
/// regularized counts; returns zero-mean log-strengths.
pub fn zermelo_mle(w: &[Vec<f64>], reg: f64) -> Vec<f64> {
    let n = w.len();
    let c: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { w[i][j] + reg }).collect())
        .collect();
    let mut p = vec![1.0; n];
    for _ in 0..200_000 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let wins: f64 = c[i].iter().sum();
            let denom: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (c[i][j] + c[j][i]) / (p[i] + p[j]))
                .sum();
            next[i] = wins / denom;
        }
        let g = next.iter().map(|x| x.ln()).sum::<f64>() / n as f64;
        let next: Vec<f64> = next.iter().map(|x| x / g.exp()).collect();
        let delta = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a.ln() - b.ln()).abs())
            .fold(0.0, f64::max);
        p = next;
        if delta < 1e-13 {
            break;
        }
    }
    p.iter().map(|x| x.ln()).collect()
}

/// Footrule similarity from positions: 1 - Σ|r1 - r2| / floor(n²/2).
pub fn brute_footrule(r1: &[usize], r2: &[usize]) -> f64 {
    let n = r1.len();
    let pos = |r: &[usize], x: usize| r.iter().position(|y| *y == x).unwrap() as i64;
    let total: i64 = (0..n).map(|x| (pos(r1, x) - pos(r2, x)).abs()).sum();
    1.0 - total as f64 / ((n * n / 2) as f64)
}

/// Kendall similarity by counting discordant pairs directly.
pub fn brute_kendall(r1: &[usize], r2: &[usize]) -> f64 {
    let n = r1.len();
    let pos = |r: &[usize], x: usize| r.iter().position(|y| *y == x).unwrap() as i64;
    let mut disc = 0;
    for x in 0..n {
        for y in x + 1..n {
            if (pos(r1, x) - pos(r1, y)) * (pos(r2, x) - pos(r2, y)) < 0 {
                disc += 1;
            }
        }
    }
    1.0 - disc as f64 / (n * (n - 1) / 2) as f64
}

pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}
