//! Single-layer correlation explanation.
//!
//! A layer holds `m` discrete latent factors with `k` states each. Each
//! factor's soft label for a sample is a product over observed columns of
//! `(p(y|x_i) / p(y))^alpha_ij`, normalized over the `k` states; in log
//! space that is a weighted linear sum followed by log-sum-exp. Fitting
//! alternates four steps until the explained correlation stops moving:
//!
//! 1. estimate `p(y_j)` and `p(y_j | x_i = v)` from the current soft labels,
//! 2. compute `I(X_i : Y_j)` from those marginals,
//! 3. move `alpha` a step of size `lambda` toward an annealed soft-max of
//!    each column's normalized mutual information across factors,
//! 4. recompute every sample's soft labels.
//!
//! The per-factor objective is `E_x[log Z_j(x)]`, the mean log-normalizer.
//!
//! Per-sample loops run on rayon over fixed-size row chunks whose partial
//! sums are combined in chunk order, so results do not depend on the
//! thread count.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, MISSING};
use crate::error::{Error, Result};
use crate::info::entropy_of_counts;

/// Rows per parallel work unit. Fixed so reductions are reproducible.
const ROW_CHUNK: usize = 128;

/// Consecutive small changes of the objective required to stop.
const CONVERGENCE_STREAK: usize = 10;

/// Hyperparameters of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorexConfig {
    /// Number of latent factors.
    pub m: usize,
    /// States per latent factor.
    pub k: usize,
    /// Step size of the alpha update.
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once the objective changes by less than this for 10 iterations.
    pub tol: f64,
    pub seed: u64,
    /// If set, marginals are estimated each iteration from a random subset
    /// of this many samples.
    pub batch_size: Option<usize>,
    /// Floor applied to every marginal probability before renormalizing.
    pub smoothing: f64,
    /// Multiplier on `|E[log Z_j]|` in the annealing schedule.
    pub dj_scale: f64,
    /// Independent random starts; the one explaining the most correlation wins.
    pub restarts: usize,
}

impl Default for CorexConfig {
    fn default() -> Self {
        CorexConfig {
            m: 1,
            k: 2,
            lambda: 0.3,
            max_iter: 1000,
            tol: 1e-5,
            seed: 0,
            batch_size: None,
            smoothing: 1e-10,
            dj_scale: 500.0,
            restarts: 1,
        }
    }
}

impl CorexConfig {
    pub fn new(m: usize) -> Self {
        CorexConfig {
            m,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.m < 1 {
            return bad("m must be at least 1");
        }
        if self.k < 2 {
            return bad("k must be at least 2");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda must lie in (0, 1]");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.smoothing > 0.0 && self.smoothing < 1.0 / self.k as f64) {
            return bad("smoothing must lie in (0, 1/k)");
        }
        if !(self.dj_scale >= 0.0) || !self.dj_scale.is_finite() {
            return bad("dj_scale must be finite and nonnegative");
        }
        if self.restarts < 1 {
            return bad("restarts must be at least 1");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be positive");
        }
        Ok(())
    }
}

/// Relaxed group-membership weights, `m x n`, each in `[0, 1]`.
///
/// The optimizer keeps every entry strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlphaMatrix(Array2<f64>);

impl AlphaMatrix {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && **w <= 1.0)) {
            return Err(Error::InvalidData(format!("alpha entry {w} outside [0, 1]")));
        }
        Ok(AlphaMatrix(weights))
    }

    pub fn filled(m: usize, n: usize, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((m, n), value))
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn m(&self) -> usize {
        self.0.nrows()
    }

    pub fn n(&self) -> usize {
        self.0.ncols()
    }
}

/// Latent marginals estimated from soft labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    /// `log p(y_j = y)`, shape `m x k`.
    pub log_py: Array2<f64>,
    /// `log p(y_j = y | x_i = v)`, shape `m x n x max_cardinality x k`
    /// flattened over the last two axes as `[j, i, v * k + y]`.
    pub log_py_given_xi: Array3<f64>,
    /// `I(X_i : Y_j)` in nats, shape `m x n`.
    pub mi: Array2<f64>,
}

impl Marginals {
    pub fn m(&self) -> usize {
        self.log_py.nrows()
    }

    pub fn k(&self) -> usize {
        self.log_py.ncols()
    }

    pub fn n(&self) -> usize {
        self.log_py_given_xi.len_of(Axis(1))
    }

    pub fn max_cardinality(&self) -> usize {
        self.log_py_given_xi.len_of(Axis(2)) / self.k()
    }

    pub fn log_py_given(&self, j: usize, i: usize, v: usize, y: usize) -> f64 {
        self.log_py_given_xi[[j, i, v * self.k() + y]]
    }

    /// Entropy of each factor's marginal `p(y_j)`.
    pub fn factor_entropies(&self) -> Vec<f64> {
        self.log_py
            .rows()
            .into_iter()
            .map(|row| -row.iter().map(|&lp| lp.exp() * lp).sum::<f64>())
            .collect()
    }
}

/// Per-sample soft labels `log p(y_j = y | x)` and log-normalizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabels {
    /// Shape `n_samples x m x k`.
    pub log_pyx: Array3<f64>,
    /// `log Z_j(x)`, shape `n_samples x m`.
    pub log_z: Array2<f64>,
}

impl SoftLabels {
    /// Labels from (unnormalized) probabilities; `log_z` is set to zero.
    pub fn from_probabilities(probs: Array3<f64>) -> Result<Self> {
        let (n_samples, m, k) = probs.dim();
        let mut log_pyx = Array3::zeros((n_samples, m, k));
        for l in 0..n_samples {
            for j in 0..m {
                let total: f64 = (0..k).map(|y| probs[[l, j, y]]).sum();
                if !(total > 0.0) || !total.is_finite() {
                    return Err(Error::InvalidData(format!(
                        "label slice ({l}, {j}) has total mass {total}"
                    )));
                }
                for y in 0..k {
                    log_pyx[[l, j, y]] = (probs[[l, j, y]] / total).ln();
                }
            }
        }
        Ok(SoftLabels {
            log_pyx,
            log_z: Array2::zeros((n_samples, m)),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.log_pyx.len_of(Axis(0))
    }

    pub fn m(&self) -> usize {
        self.log_pyx.len_of(Axis(1))
    }

    pub fn k(&self) -> usize {
        self.log_pyx.len_of(Axis(2))
    }

    pub fn probability(&self, sample: usize, factor: usize, state: usize) -> f64 {
        self.log_pyx[[sample, factor, state]].exp()
    }
}

/// A fitted layer: everything needed to label new samples, plus the fit
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorexLayer {
    pub config: CorexConfig,
    /// Cardinality of each input column seen during training.
    pub cardinalities: Vec<usize>,
    pub alpha: AlphaMatrix,
    pub marginals: Marginals,
    /// Plug-in entropy `H(X_i)` of each input column.
    pub hx: Vec<f64>,
    /// `E_x[log Z_j(x)]` for each factor.
    pub tc_per_factor: Vec<f64>,
    pub tc_total: f64,
    pub iterations_run: usize,
    pub converged: bool,
    /// `tc_total` after every iteration of the winning restart.
    pub objective_history: Vec<f64>,
    /// Which restart produced this layer.
    pub best_restart: usize,
}

impl CorexLayer {
    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn n_vars(&self) -> usize {
        self.cardinalities.len()
    }
}

fn init_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * restart as u64);
    rng
}

fn batch_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * restart as u64 + 1);
    rng
}

/// Random starting point: `alpha ~ U(1/2, 1)` and flat-Dirichlet soft
/// labels, both drawn from `config.seed`.
pub fn init_state(data: &DataMatrix, config: &CorexConfig) -> (AlphaMatrix, SoftLabels) {
    let mut rng = init_rng(config.seed, 0);
    init_state_from(data.n_samples(), data.n_vars(), config, &mut rng)
}

fn init_state_from<R: Rng>(
    n_samples: usize,
    n_vars: usize,
    config: &CorexConfig,
    rng: &mut R,
) -> (AlphaMatrix, SoftLabels) {
    let (m, k) = (config.m, config.k);
    let alpha = Array2::from_shape_simple_fn((m, n_vars), || rng.gen_range(0.5..1.0));

    // Dirichlet(1, ..., 1) via normalized unit exponentials.
    let mut log_pyx = Array3::zeros((n_samples, m, k));
    let mut draws = vec![0.0; k];
    for l in 0..n_samples {
        for j in 0..m {
            for d in draws.iter_mut() {
                let u: f64 = rng.gen();
                *d = -(1.0 - u).ln();
            }
            let total: f64 = draws.iter().sum();
            for (y, &d) in draws.iter().enumerate() {
                log_pyx[[l, j, y]] = (d / total).ln();
            }
        }
    }
    (
        AlphaMatrix(alpha),
        SoftLabels {
            log_pyx,
            log_z: Array2::zeros((n_samples, m)),
        },
    )
}

/// Estimates `p(y_j)`, `p(y_j | x_i = v)` and `I(X_i : Y_j)` from soft
/// labels over every sample.
pub fn estimate_marginals(data: &DataMatrix, labels: &SoftLabels, smoothing: f64) -> Marginals {
    let rows: Vec<usize> = (0..data.n_samples()).collect();
    estimate_marginals_on(data, labels, &rows, smoothing)
}

/// Sufficient statistics accumulated over a set of rows.
struct Tallies {
    py: Vec<f64>,
    cond: Vec<f64>,
    counts: Vec<usize>,
}

impl Tallies {
    fn zeros(m: usize, n: usize, card: usize, k: usize) -> Self {
        Tallies {
            py: vec![0.0; m * k],
            cond: vec![0.0; m * n * card * k],
            counts: vec![0; n * card],
        }
    }

    fn merge(mut self, other: Tallies) -> Self {
        self.py.iter_mut().zip(&other.py).for_each(|(a, b)| *a += b);
        self.cond.iter_mut().zip(&other.cond).for_each(|(a, b)| *a += b);
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self
    }
}

/// Floors a distribution at `eps`, renormalizes, and takes logs in place.
fn floor_normalize_log(p: &mut [f64], eps: f64) {
    p.iter_mut().for_each(|v| *v = v.max(eps));
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v = (*v / total).ln());
}

/// As [`estimate_marginals`], restricted to the given rows.
pub fn estimate_marginals_on(
    data: &DataMatrix,
    labels: &SoftLabels,
    rows: &[usize],
    smoothing: f64,
) -> Marginals {
    let (m, k) = (labels.m(), labels.k());
    let n = data.n_vars();
    let card = data.max_cardinality();
    let cells = data.cells();

    let tallies = rows
        .par_chunks(ROW_CHUNK)
        .map(|chunk| {
            let mut t = Tallies::zeros(m, n, card, k);
            let mut p = vec![0.0; k];
            for &l in chunk {
                let row = cells.row(l);
                for (i, &v) in row.iter().enumerate() {
                    if v != MISSING {
                        t.counts[i * card + v as usize] += 1;
                    }
                }
                for j in 0..m {
                    for (y, py) in p.iter_mut().enumerate() {
                        *py = labels.log_pyx[[l, j, y]].exp();
                    }
                    for y in 0..k {
                        t.py[j * k + y] += p[y];
                    }
                    for (i, &v) in row.iter().enumerate() {
                        if v == MISSING {
                            continue;
                        }
                        let base = ((j * n + i) * card + v as usize) * k;
                        for y in 0..k {
                            t.cond[base + y] += p[y];
                        }
                    }
                }
            }
            t
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Tallies::zeros(m, n, card, k), Tallies::merge);

    let n_rows = rows.len().max(1) as f64;
    let mut log_py = Array2::zeros((m, k));
    let mut prior = vec![vec![0.0; k]; m];
    for j in 0..m {
        let mut p: Vec<f64> = (0..k).map(|y| tallies.py[j * k + y] / n_rows).collect();
        floor_normalize_log(&mut p, smoothing);
        for y in 0..k {
            log_py[[j, y]] = p[y];
            prior[j][y] = p[y].exp();
        }
    }

    let mut log_py_given_xi = Array3::zeros((m, n, card * k));
    let mut mi = Array2::zeros((m, n));
    let mut p = vec![0.0; k];
    for i in 0..n {
        let col_counts = &tallies.counts[i * card..(i + 1) * card];
        let observed: usize = col_counts.iter().sum();
        let distinct = col_counts.iter().filter(|&&c| c > 0).count();
        for j in 0..m {
            let mut info = 0.0;
            for v in 0..card {
                let count = col_counts[v];
                let base = ((j * n + i) * card + v) * k;
                if count == 0 {
                    p.copy_from_slice(&prior[j]);
                } else {
                    for y in 0..k {
                        p[y] = tallies.cond[base + y] / count as f64;
                    }
                }
                floor_normalize_log(&mut p, smoothing);
                for y in 0..k {
                    log_py_given_xi[[j, i, v * k + y]] = p[y];
                }
                if count > 0 {
                    let pv = count as f64 / observed as f64;
                    info += pv
                        * (0..k)
                            .map(|y| p[y].exp() * (p[y] - log_py[[j, y]]))
                            .sum::<f64>();
                }
            }
            mi[[j, i]] = if distinct <= 1 { 0.0 } else { info.max(0.0) };
        }
    }

    Marginals {
        log_py,
        log_py_given_xi,
        mi,
    }
}

/// One damped step of the alpha schedule.
///
/// Each entry moves toward `exp(gamma_ij * (I(X_i:Y_j) - max_j' I(X_i:Y_j')))`
/// with `gamma_ij = (1 + dj_scale * |tc_j|) / H(X_i)`. Constant columns
/// (`H(X_i) = 0`) are not updated; they take the smallest updated weight.
pub fn update_alpha(
    alpha: &AlphaMatrix,
    marginals: &Marginals,
    hx: &[f64],
    tc_per_factor: &[f64],
    config: &CorexConfig,
) -> AlphaMatrix {
    let (m, n) = alpha.0.dim();
    let lambda = config.lambda;
    let mut next = alpha.0.clone();
    let mut min_entry = f64::INFINITY;
    let mut constant = Vec::new();

    for i in 0..n {
        if !(hx[i] > 0.0) {
            constant.push(i);
            continue;
        }
        let col = marginals.mi.column(i);
        let best = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for j in 0..m {
            let gamma = (1.0 + config.dj_scale * tc_per_factor[j].abs()) / hx[i];
            let target = (gamma * (col[j] - best)).exp();
            let updated = ((1.0 - lambda) * alpha.0[[j, i]] + lambda * target).max(f64::MIN_POSITIVE);
            next[[j, i]] = updated;
            min_entry = min_entry.min(updated);
        }
    }
    if min_entry.is_finite() {
        for i in constant {
            next.column_mut(i).fill(min_entry);
        }
    }
    AlphaMatrix(next)
}

/// Soft labels for every sample of `data` under fixed parameters.
///
/// `log p(y_j | x) = log p(y_j) + Σ_i α_ij (log p(y_j | x_i) - log p(y_j)) - log Z_j(x)`;
/// missing cells drop out of the sum entirely.
pub fn compute_labels(data: &DataMatrix, alpha: &AlphaMatrix, marginals: &Marginals) -> SoftLabels {
    let (m, k) = (marginals.m(), marginals.k());
    let n = data.n_vars();
    let card = marginals.max_cardinality();
    let n_samples = data.n_samples();

    // weight[j, i, v, y] = α_ij (log p(y|v) - log p(y))
    let mut weight = vec![0.0; m * n * card * k];
    for j in 0..m {
        for i in 0..n {
            let a = alpha.0[[j, i]];
            for v in 0..card {
                let base = ((j * n + i) * card + v) * k;
                for y in 0..k {
                    let diff = marginals.log_py_given_xi[[j, i, v * k + y]] - marginals.log_py[[j, y]];
                    weight[base + y] = if a == 0.0 { 0.0 } else { a * diff };
                }
            }
        }
    }

    let cells = data.cells();
    let mut log_pyx = vec![0.0; n_samples * m * k];
    let mut log_z = vec![0.0; n_samples * m];
    log_pyx
        .par_chunks_mut(m * k)
        .zip(log_z.par_chunks_mut(m))
        .enumerate()
        .for_each(|(l, (out, out_z))| {
            let row = cells.row(l);
            for j in 0..m {
                let s = &mut out[j * k..(j + 1) * k];
                for y in 0..k {
                    s[y] = marginals.log_py[[j, y]];
                }
                for (i, &v) in row.iter().enumerate() {
                    if v == MISSING {
                        continue;
                    }
                    let base = ((j * n + i) * card + v as usize) * k;
                    for y in 0..k {
                        s[y] += weight[base + y];
                    }
                }
                let z = log_sum_exp(s);
                s.iter_mut().for_each(|v| *v -= z);
                out_z[j] = z;
            }
        });

    SoftLabels {
        log_pyx: Array3::from_shape_vec((n_samples, m, k), log_pyx).expect("label shape"),
        log_z: Array2::from_shape_vec((n_samples, m), log_z).expect("normalizer shape"),
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Correlation explained by each factor: the sample mean of `log Z_j(x)`.
pub fn factor_tc(labels: &SoftLabels) -> Vec<f64> {
    let n = labels.n_samples().max(1) as f64;
    labels
        .log_z
        .columns()
        .into_iter()
        .map(|col| col.iter().sum::<f64>() / n)
        .collect()
}

/// Most likely state of every factor for every sample; ties go to the
/// lowest state.
pub fn hard_labels(labels: &SoftLabels) -> Array2<u32> {
    let (n_samples, m, k) = labels.log_pyx.dim();
    Array2::from_shape_fn((n_samples, m), |(l, j)| {
        let mut best = 0;
        for y in 1..k {
            if labels.log_pyx[[l, j, y]] > labels.log_pyx[[l, j, best]] {
                best = y;
            }
        }
        best as u32
    })
}

/// Column entropies for fitting; all-missing columns count as constant.
fn fit_entropies(data: &DataMatrix) -> Vec<f64> {
    (0..data.n_vars())
        .map(|i| entropy_of_counts(&data.value_counts(i)))
        .collect()
}

/// Fits a layer, keeping the restart with the largest `tc_total`.
///
/// Returns the layer and the soft labels of the training samples under the
/// final parameters.
pub fn fit_layer(data: &DataMatrix, config: &CorexConfig) -> Result<(CorexLayer, SoftLabels)> {
    config.validate()?;
    let hx = fit_entropies(data);
    if hx.iter().all(|&h| !(h > 0.0)) {
        return Err(Error::AllColumnsConstant);
    }

    let mut best: Option<(CorexLayer, SoftLabels)> = None;
    for restart in 0..config.restarts {
        let run = fit_single(data, config, &hx, restart);
        if best.as_ref().is_none_or(|(b, _)| run.0.tc_total > b.tc_total) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn fit_single(data: &DataMatrix, config: &CorexConfig, hx: &[f64], restart: usize) -> (CorexLayer, SoftLabels) {
    let n_samples = data.n_samples();
    let mut rng = init_rng(config.seed, restart);
    let (mut alpha, mut labels) = init_state_from(n_samples, data.n_vars(), config, &mut rng);
    let mut batches = batch_rng(config.seed, restart);
    let all_rows: Vec<usize> = (0..n_samples).collect();

    let mut tc = vec![0.0; config.m];
    let mut history = Vec::new();
    let mut streak = 0;
    let mut converged = false;
    let mut marginals = None;

    for _ in 0..config.max_iter {
        let est = match config.batch_size {
            Some(b) if b < n_samples => {
                let mut rows = sample_indices(&mut batches, n_samples, b).into_vec();
                rows.sort_unstable();
                estimate_marginals_on(data, &labels, &rows, config.smoothing)
            }
            _ => estimate_marginals_on(data, &labels, &all_rows, config.smoothing),
        };
        alpha = update_alpha(&alpha, &est, hx, &tc, config);
        labels = compute_labels(data, &alpha, &est);
        marginals = Some(est);

        tc = factor_tc(&labels);
        let total: f64 = tc.iter().sum();
        if let Some(&prev) = history.last() {
            let delta: f64 = total - prev;
            streak = if delta.abs() < config.tol { streak + 1 } else { 0 };
        }
        history.push(total);
        if streak >= CONVERGENCE_STREAK {
            converged = true;
            break;
        }
    }

    let marginals = marginals.unwrap_or_else(|| estimate_marginals_on(data, &labels, &all_rows, config.smoothing));
    let tc_total = tc.iter().sum();
    let layer = CorexLayer {
        config: config.clone(),
        cardinalities: data.cardinalities().to_vec(),
        alpha,
        marginals,
        hx: hx.to_vec(),
        tc_per_factor: tc,
        tc_total,
        iterations_run: history.len(),
        converged,
        objective_history: history,
        best_restart: restart,
    };
    (layer, labels)
}

/// Labels new samples with a fitted layer's frozen parameters.
pub fn transform(layer: &CorexLayer, data: &DataMatrix) -> Result<SoftLabels> {
    if data.n_vars() != layer.n_vars() {
        return Err(Error::SchemaMismatch(format!(
            "data has {} columns, layer was trained on {}",
            data.n_vars(),
            layer.n_vars()
        )));
    }
    for (i, &card) in layer.cardinalities.iter().enumerate() {
        if let Some(&code) = data.column(i).iter().find(|&&c| c != MISSING && c as usize >= card) {
            return Err(Error::UnseenCategory {
                column: data.column_label(i),
                code: code.to_string(),
                cardinality: card,
            });
        }
    }
    Ok(compute_labels(data, &layer.alpha, &layer.marginals))
}
