//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use corex::info::{mutual_information, JointTable};
use corex::layer::{Marginals, SoftLabels};
use corex::{DataMatrix, MISSING};
use ndarray::{Array2, Array3};
use rand::Rng;

/// A random point on the simplex with every entry at least `floor`.
pub fn random_simplex<R: Rng>(rng: &mut R, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln() + floor).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Random categorical data, with each cell missing with probability `missing`.
pub fn random_data<R: Rng>(rng: &mut R, n_samples: usize, cards: &[usize], missing: f64) -> DataMatrix {
    let cells = Array2::from_shape_fn((n_samples, cards.len()), |(_, i)| {
        if rng.gen::<f64>() < missing {
            MISSING
        } else {
            rng.gen_range(0..cards[i] as u32)
        }
    });
    DataMatrix::new(cells, cards.to_vec()).unwrap()
}

pub fn random_labels<R: Rng>(rng: &mut R, n_samples: usize, m: usize, k: usize) -> SoftLabels {
    let mut probs = Array3::zeros((n_samples, m, k));
    for l in 0..n_samples {
        for j in 0..m {
            for (y, p) in random_simplex(rng, k, 0.01).into_iter().enumerate() {
                probs[[l, j, y]] = p;
            }
        }
    }
    SoftLabels::from_probabilities(probs).unwrap()
}

/// Mixed-radix index of a full assignment, last axis fastest.
pub fn flat_index(dims: &[usize], values: &[usize]) -> usize {
    dims.iter().zip(values).fold(0, |acc, (&d, &v)| acc * d + v)
}

/// The empirical joint `p(x, y_j)` over the whole product space, built by
/// placing each sample's label distribution at its cell. Complete data only.
pub fn empirical_joint(data: &DataMatrix, labels: &SoftLabels, j: usize) -> JointTable {
    let mut dims = data.cardinalities().to_vec();
    let k = labels.k();
    dims.push(k);
    let mut weights = vec![0.0; dims.iter().product()];
    for l in 0..data.n_samples() {
        let mut values: Vec<usize> = data.row(l).iter().map(|&v| v as usize).collect();
        values.push(0);
        for y in 0..k {
            *values.last_mut().unwrap() = y;
            weights[flat_index(&dims, &values)] += labels.probability(l, j, y);
        }
    }
    JointTable::from_weights(dims, weights).unwrap()
}

pub struct MarginalOracle {
    pub py: Vec<f64>,
    /// `[i][v][y]`
    pub py_given: Vec<Vec<Vec<f64>>>,
    pub mi: Vec<f64>,
}

/// `p(y_j)`, `p(y_j | x_i = v)` and `I(X_i : Y_j)` read off the empirical
/// joint; unobserved values fall back to `p(y_j)`.
pub fn oracle_marginals(data: &DataMatrix, labels: &SoftLabels, j: usize) -> MarginalOracle {
    let joint = empirical_joint(data, labels, j);
    let y_axis = data.n_vars();
    let k = labels.k();
    let py = joint.marginal(&[y_axis]).probs().to_vec();
    let mut py_given = Vec::new();
    let mut mi = Vec::new();
    for i in 0..data.n_vars() {
        let pair = joint.marginal(&[i, y_axis]);
        let card = data.cardinalities()[i];
        let rows: Vec<Vec<f64>> = (0..card)
            .map(|v| {
                let row = &pair.probs()[v * k..(v + 1) * k];
                let pv: f64 = row.iter().sum();
                if pv > 0.0 {
                    row.iter().map(|p| p / pv).collect()
                } else {
                    py.clone()
                }
            })
            .collect();
        py_given.push(rows);
        mi.push(mutual_information(&pair).unwrap());
    }
    MarginalOracle { py, py_given, mi }
}

/// Labels from `p(y) prod_i (p(y|x_i) / p(y))^alpha_i`, evaluated with
/// products and powers and normalized by an explicit sum.
pub fn oracle_labels(data: &DataMatrix, alpha: &Array2<f64>, marginals: &Marginals) -> (Array3<f64>, Array2<f64>) {
    let (m, k) = (marginals.m(), marginals.k());
    let n_samples = data.n_samples();
    let mut probs = Array3::zeros((n_samples, m, k));
    let mut log_z = Array2::zeros((n_samples, m));
    for l in 0..n_samples {
        for j in 0..m {
            let unnorm: Vec<f64> = (0..k)
                .map(|y| {
                    let py = marginals.log_py[[j, y]].exp();
                    data.row(l).iter().enumerate().fold(py, |acc, (i, &v)| {
                        if v == MISSING {
                            acc
                        } else {
                            let ratio = marginals.log_py_given(j, i, v as usize, y).exp() / py;
                            acc * ratio.powf(alpha[[j, i]])
                        }
                    })
                })
                .collect();
            let z: f64 = unnorm.iter().sum();
            for y in 0..k {
                probs[[l, j, y]] = unnorm[y] / z;
            }
            log_z[[l, j]] = z.ln();
        }
    }
    (probs, log_z)
}

/// A naive Bayes model `p(y) prod_i p(x_i | y)` as a joint table with the
/// latent state on the last axis.
pub fn naive_bayes_joint<R: Rng>(rng: &mut R, cards: &[usize], k: usize) -> JointTable {
    let py = random_simplex(rng, k, 0.05);
    let cond: Vec<Vec<Vec<f64>>> = cards
        .iter()
        .map(|&c| (0..k).map(|_| random_simplex(rng, c, 0.05)).collect())
        .collect();
    let mut dims = cards.to_vec();
    dims.push(k);
    let total: usize = dims.iter().product();
    let mut probs = vec![0.0; total];
    let mut values = vec![0usize; dims.len()];
    for p in probs.iter_mut() {
        let y = values[cards.len()];
        *p = py[y] * (0..cards.len()).map(|i| cond[i][y][values[i]]).product::<f64>();
        for a in (0..dims.len()).rev() {
            values[a] += 1;
            if values[a] < dims[a] {
                break;
            }
            values[a] = 0;
        }
    }
    JointTable::new(dims, probs).unwrap()
}

/// Exact marginals of a naive Bayes joint, in the layer's layout.
pub fn model_marginals(joint: &JointTable) -> Marginals {
    let dims = joint.dims();
    let n = dims.len() - 1;
    let k = dims[n];
    let card = dims[..n].iter().copied().max().unwrap();
    let py = joint.marginal(&[n]).probs().to_vec();
    let log_py = Array2::from_shape_fn((1, k), |(_, y)| py[y].ln());
    let mut log_py_given_xi = Array3::zeros((1, n, card * k));
    let mut mi = Array2::zeros((1, n));
    for i in 0..n {
        let pair = joint.marginal(&[i, n]);
        for v in 0..card {
            for y in 0..k {
                log_py_given_xi[[0, i, v * k + y]] = if v < dims[i] {
                    let row = &pair.probs()[v * k..(v + 1) * k];
                    (row[y] / row.iter().sum::<f64>()).ln()
                } else {
                    py[y].ln()
                };
            }
        }
        mi[[0, i]] = mutual_information(&pair).unwrap();
    }
    Marginals {
        log_py,
        log_py_given_xi,
        mi,
    }
}

/// `p(y | observed cells)` and `log [p(x_obs) / prod_obs p(x_i)]` by summing
/// the joint over every completion of the missing cells.
pub fn oracle_posterior(joint: &JointTable, row: &[Option<usize>]) -> (Vec<f64>, f64) {
    let dims = joint.dims();
    let n = row.len();
    let k = dims[n];
    let observed: Vec<usize> = (0..n).filter(|&i| row[i].is_some()).collect();
    let mut axes = observed.clone();
    axes.push(n);
    let sub = joint.marginal(&axes);
    let sub_dims = sub.dims().to_vec();
    let mut values: Vec<usize> = observed.iter().map(|&i| row[i].unwrap()).collect();
    values.push(0);
    let unnorm: Vec<f64> = (0..k)
        .map(|y| {
            *values.last_mut().unwrap() = y;
            sub.probs()[flat_index(&sub_dims, &values)]
        })
        .collect();
    let p_obs: f64 = unnorm.iter().sum();
    let singles: f64 = observed
        .iter()
        .map(|&i| joint.marginal(&[i]).probs()[row[i].unwrap()])
        .product();
    (unnorm.iter().map(|p| p / p_obs).collect(), (p_obs / singles).ln())
}

/// Adjusted Rand index by looking at every pair of items.
pub fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
    let (mut both, mut in_a, mut in_b, mut total) = (0i128, 0i128, 0i128, 0i128);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += i128::from(sa && sb);
            in_a += i128::from(sa);
            in_b += i128::from(sb);
            total += 1;
        }
    }
    // (index - in_a in_b / total) / ((in_a + in_b) / 2 - in_a in_b / total),
    // scaled by 2 total
    let num = 2 * total * both - 2 * in_a * in_b;
    let den = total * (in_a + in_b) - 2 * in_a * in_b;
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}
