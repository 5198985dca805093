//! Bradley–Terry strengths by Iterative Luce Spectral Ranking (I-LSR).
//!
//! Each iteration builds a continuous-time Markov chain whose rate from `j`
//! to `i` is `W_ij / (e^θ_i + e^θ_j)` under the current estimate, takes its
//! stationary distribution `π`, and sets `θ ← log π` (re-centred to zero mean).
//! The fixed point is the maximum-likelihood BT estimate for the win data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::comparisons::WinMatrix;
use crate::error::{Error, Result};
use crate::pairs::count_components;

/// Above this size the stationary distribution is found by power iteration.
pub const DENSE_SOLVE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlsrOptions {
    /// Pseudo-wins added in both directions for every item pair.
    pub reg: f64,
    /// Convergence threshold on `max_i |Δθ_i|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IlsrOptions {
    fn default() -> Self {
        IlsrOptions {
            reg: 0.01,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Fitted strengths with the derived ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentScale {
    pub ids: Vec<String>,
    /// Zero-mean strengths, aligned with `ids`.
    pub theta: Vec<f64>,
    /// Ids by descending strength; ties broken by ascending id.
    pub ranking: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
}

impl LatentScale {
    /// Centres `theta` and derives the ranking.
    pub fn from_theta(ids: Vec<String>, theta: Vec<f64>, converged: bool, iterations: usize) -> LatentScale {
        let theta = centred(&theta);
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then_with(|| ids[a].cmp(&ids[b])));
        LatentScale {
            ranking: order.iter().map(|&i| ids[i].clone()).collect(),
            ids,
            theta,
            converged,
            iterations,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `P(i beats j) = e^θ_i / (e^θ_i + e^θ_j)`.
    pub fn win_probability(&self, i: usize, j: usize) -> f64 {
        logistic(self.theta[i] - self.theta[j])
    }
}

fn centred(theta: &[f64]) -> Vec<f64> {
    if theta.is_empty() {
        return Vec::new();
    }
    let mean = theta.iter().sum::<f64>() / theta.len() as f64;
    theta.iter().map(|t| t - mean).collect()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Win mass with `reg` pseudo-wins added to every off-diagonal entry.
fn regularized_counts(wm: &WinMatrix, reg: f64) -> Vec<f64> {
    let n = wm.n();
    let mut c = wm.as_slice().to_vec();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                c[i * n + j] += reg;
            }
        }
    }
    c
}

/// BT log-likelihood `Σ W_ij log σ(θ_i − θ_j)` of the regularized win data.
pub fn log_likelihood(wm: &WinMatrix, reg: f64, theta: &[f64]) -> f64 {
    let n = wm.n();
    let c = regularized_counts(wm, reg);
    let mut ll = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = c[i * n + j];
            if i != j && w > 0.0 {
                ll += w * log_logistic(theta[i] - theta[j]);
            }
        }
    }
    ll
}

/// Stationary distribution of the chain with off-diagonal rates `rate[j][i]` (j → i).
fn stationary(rates: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = rates.nrows();
    let mut generator = rates.clone();
    for j in 0..n {
        let out: f64 = (0..n).filter(|&i| i != j).map(|i| rates[(j, i)]).sum();
        generator[(j, j)] = -out;
    }
    let pi = if n <= DENSE_SOLVE_LIMIT {
        // π Q = 0 with Σπ = 1: solve Qᵀ π = 0 with the last equation replaced.
        let mut a = generator.transpose();
        for c in 0..n {
            a[(n - 1, c)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::NonFinite("stationary distribution (singular chain)".into()))?;
        x.iter().copied().collect::<Vec<f64>>()
    } else {
        power_stationary(&generator)
    };
    if pi.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::NonFinite(
            "stationary distribution (item with zero mass; the win graph is not strongly connected)".into(),
        ));
    }
    Ok(pi)
}

/// Power iteration on the uniformized chain `I + Q / λ`.
fn power_stationary(generator: &DMatrix<f64>) -> Vec<f64> {
    let n = generator.nrows();
    let lambda = (0..n).map(|j| -generator[(j, j)]).fold(0.0, f64::max) * 1.05;
    if lambda <= 0.0 {
        return vec![1.0 / n as f64; n];
    }
    let mut step = generator / lambda;
    for j in 0..n {
        step[(j, j)] += 1.0;
    }
    let step_t = step.transpose();
    let mut pi = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..100_000 {
        let mut next = &step_t * &pi;
        let s = next.sum();
        next /= s;
        let delta = (&next - &pi).amax();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi.iter().copied().collect()
}

pub fn fit_bt_ilsr(wm: &WinMatrix, opts: &IlsrOptions) -> Result<LatentScale> {
    fit(wm, opts, None)
}

/// Like [`fit_bt_ilsr`] but also returns the log-likelihood after every iterate
/// (starting with the initial all-zero estimate).
pub fn fit_bt_ilsr_traced(wm: &WinMatrix, opts: &IlsrOptions) -> Result<(LatentScale, Vec<f64>)> {
    let mut trace = Vec::new();
    let scale = fit(wm, opts, Some(&mut trace))?;
    Ok((scale, trace))
}

fn fit(wm: &WinMatrix, opts: &IlsrOptions, mut trace: Option<&mut Vec<f64>>) -> Result<LatentScale> {
    if !(opts.reg >= 0.0 && opts.reg.is_finite()) {
        return Err(Error::invalid(format!(
            "regularization {} must be finite and >= 0",
            opts.reg
        )));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::invalid(format!("tolerance {} must be > 0", opts.tol)));
    }
    wm.check_invariants()?;
    let n = wm.n();
    let ids = wm.ids().to_vec();
    if n <= 1 {
        return Ok(LatentScale::from_theta(ids, vec![0.0; n], true, 0));
    }
    if opts.reg == 0.0 {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if wm.mass(i, j) > 0.0 {
                    edges.push((ids[i].as_str(), ids[j].as_str()));
                }
            }
        }
        let components = count_components(edges, &ids);
        if components > 1 {
            return Err(Error::Disconnected { components });
        }
    }

    let counts = regularized_counts(wm, opts.reg);
    let mut theta = vec![0.0; n];
    if let Some(t) = trace.as_deref_mut() {
        t.push(log_likelihood(wm, opts.reg, &theta));
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let weights: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let mut rates = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    // Rate from the loser j to the winner i.
                    rates[(j, i)] = counts[i * n + j] / (weights[i] + weights[j]);
                }
            }
        }
        let pi = stationary(&rates)?;
        let next = centred(&pi.iter().map(|p| p.ln()).collect::<Vec<_>>());
        if next.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("I-LSR update".into()));
        }
        let delta = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        theta = next;
        if let Some(t) = trace.as_deref_mut() {
            t.push(log_likelihood(wm, opts.reg, &theta));
        }
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(LatentScale::from_theta(ids, theta, converged, iterations))
}

/// Smoothed `n × n` win probabilities, row-major; the diagonal is 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
}

impl ProbabilityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend((0..self.ids.len()).map(|j| format!("{}", self.get(i, j))));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<probability writer>", e))?;
        Ok(())
    }
}

pub fn probability_matrix(scale: &LatentScale) -> ProbabilityMatrix {
    let n = scale.len();
    let mut values = vec![0.5; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let p = scale.win_probability(i, j);
            values[i * n + j] = p;
            values[j * n + i] = 1.0 - p;
        }
    }
    ProbabilityMatrix {
        ids: scale.ids.clone(),
        values,
    }
}

/// All strengths zero: every pairwise probability is 0.5.
pub fn random_baseline(ids: &[String]) -> LatentScale {
    LatentScale::from_theta(ids.to_vec(), vec![0.0; ids.len()], true, 0)
}

/// Negated human strengths: reverses the ranking and complements probabilities.
pub fn worst_case_baseline(human: &LatentScale) -> LatentScale {
    LatentScale::from_theta(
        human.ids.clone(),
        human.theta.iter().map(|t| -t).collect(),
        human.converged,
        0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i}")).collect()
    }

    #[test]
    fn two_item_closed_form() {
        let wm = WinMatrix::from_dense(ids(2), vec![0.0, 3.0, 1.0, 0.0]).unwrap();
        let s = fit_bt_ilsr(
            &wm,
            &IlsrOptions {
                reg: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(s.converged);
        assert!((s.theta[0] - s.theta[1] - 3f64.ln()).abs() < 1e-9);
        assert!((probability_matrix(&s).get(0, 1) - 0.75).abs() < 1e-9);
        assert_eq!(s.ranking, vec!["i0", "i1"]);
    }

    #[test]
    fn symmetric_data_gives_zero_theta() {
        let mut v = vec![2.0; 16];
        for i in 0..4 {
            v[i * 4 + i] = 0.0;
        }
        let s = fit_bt_ilsr(&WinMatrix::from_dense(ids(4), v).unwrap(), &IlsrOptions::default()).unwrap();
        assert!(s.theta.iter().all(|t| t.abs() < 1e-12));
        assert_eq!(s.ranking, ids(4));
    }

    #[test]
    fn disconnected_without_regularization() {
        let mut wm = WinMatrix::new(ids(4)).unwrap();
        wm.add_win("i0", "i1").unwrap();
        wm.add_win("i2", "i3").unwrap();
        let err = fit_bt_ilsr(
            &wm,
            &IlsrOptions {
                reg: 0.0,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Disconnected { components: 2 }));
        assert!(fit_bt_ilsr(&wm, &IlsrOptions::default()).is_ok());
    }

    #[test]
    fn undefeated_item_without_regularization_is_non_finite() {
        let mut wm = WinMatrix::new(ids(3)).unwrap();
        wm.add_win("i0", "i1").unwrap();
        wm.add_win("i1", "i2").unwrap();
        wm.add_win("i2", "i1").unwrap();
        let err = fit_bt_ilsr(
            &wm,
            &IlsrOptions {
                reg: 0.0,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(err.is_computation(), "{err}");
    }

    #[test]
    fn probability_matrix_complement() {
        let s = LatentScale::from_theta(ids(3), vec![0.3, -1.2, 2.0], true, 0);
        let p = probability_matrix(&s);
        for i in 0..3 {
            assert_eq!(p.get(i, i), 0.5);
            for j in 0..3 {
                assert!((p.get(i, j) + p.get(j, i) - 1.0).abs() < 1e-15);
            }
        }
        let eq = LatentScale::from_theta(ids(2), vec![0.4, 0.4], true, 0);
        assert_eq!(probability_matrix(&eq).get(0, 1), 0.5);
    }

    #[test]
    fn baselines() {
        let r = random_baseline(&ids(3));
        assert!(probability_matrix(&r).values.iter().all(|v| *v == 0.5));
        assert_eq!(r.ranking, ids(3));
        assert_eq!(random_baseline(&ids(1)).theta, vec![0.0]);

        let human = LatentScale::from_theta(ids(3), vec![1.0, 0.0, -1.0], true, 5);
        let worst = worst_case_baseline(&human);
        assert_eq!(worst.theta, vec![-1.0, 0.0, 1.0]);
        let mut rev = human.ranking.clone();
        rev.reverse();
        assert_eq!(worst.ranking, rev);

        let h = LatentScale::from_theta(
            ids(2),
            vec![2.1972245773362196 / 2.0, -2.1972245773362196 / 2.0],
            true,
            0,
        );
        let (ph, pw) = (probability_matrix(&h), probability_matrix(&worst_case_baseline(&h)));
        assert!((ph.get(0, 1) - 0.9).abs() < 1e-12);
        assert!((pw.get(0, 1) - 0.1).abs() < 1e-12);

        let ties = random_baseline(&ids(4));
        assert_eq!(worst_case_baseline(&ties).ranking, ties.ranking);
    }
}
