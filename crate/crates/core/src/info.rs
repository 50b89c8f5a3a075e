//! Exact information measures over dense joint probability tables.
//!
//! These enumerate the full product space, so they only serve small
//! instances: the checks and oracles that validate the sample-based
//! optimizer. All quantities are in nats.

use crate::data::{DataMatrix, MISSING};
use crate::error::{Error, Result};

/// Largest product space a [`JointTable`] may enumerate.
pub const STATE_LIMIT: u128 = 10_000_000;

const SUM_TOLERANCE: f64 = 1e-9;

/// A dense joint distribution over discrete variables, stored row-major
/// (the last variable varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    dims: Vec<usize>,
    probs: Vec<f64>,
}

fn state_count(dims: &[usize]) -> Result<usize> {
    let states = dims.iter().fold(1u128, |acc, &d| acc.saturating_mul(d as u128));
    if states > STATE_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            states,
            limit: STATE_LIMIT,
        });
    }
    Ok(states as usize)
}

impl JointTable {
    /// Wraps a probability vector. It must be nonnegative and sum to one
    /// within 1e-9; it is renormalized exactly on construction.
    pub fn new(dims: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let sum = Self::validate(&dims, &probs)?;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidData(format!("probabilities sum to {sum}")));
        }
        Ok(Self::normalized(dims, probs, sum))
    }

    /// Normalizes arbitrary nonnegative weights into a distribution.
    pub fn from_weights(dims: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        let sum = Self::validate(&dims, &weights)?;
        if sum <= 0.0 {
            return Err(Error::InvalidData("weights sum to zero".into()));
        }
        Ok(Self::normalized(dims, weights, sum))
    }

    /// The empirical joint distribution of the selected columns.
    pub fn from_data(data: &DataMatrix, columns: &[usize]) -> Result<Self> {
        let dims: Vec<usize> = columns.iter().map(|&i| data.cardinalities()[i]).collect();
        let mut weights = vec![0.0; state_count(&dims)?];
        for l in 0..data.n_samples() {
            let mut flat = 0usize;
            for (&i, &d) in columns.iter().zip(&dims) {
                let code = data.cells()[[l, i]];
                if code == MISSING {
                    return Err(Error::InvalidData(format!(
                        "missing cell at ({l}, {i}) cannot enter an exact joint table"
                    )));
                }
                flat = flat * d + code as usize;
            }
            weights[flat] += 1.0;
        }
        Self::from_weights(dims, weights)
    }

    fn validate(dims: &[usize], probs: &[f64]) -> Result<f64> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidData(format!("bad dimensions {dims:?}")));
        }
        let states = state_count(dims)?;
        if probs.len() != states {
            return Err(Error::LengthMismatch {
                left: probs.len(),
                right: states,
            });
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidData(format!("invalid probability {p}")));
        }
        Ok(probs.iter().sum())
    }

    fn normalized(dims: Vec<usize>, mut probs: Vec<f64>, sum: f64) -> Self {
        probs.iter_mut().for_each(|p| *p /= sum);
        JointTable { dims, probs }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_vars(&self) -> usize {
        self.dims.len()
    }

    /// Marginal over `axes`, kept in ascending axis order.
    pub fn marginal(&self, axes: &[usize]) -> JointTable {
        let mut keep: Vec<usize> = axes.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let out_dims: Vec<usize> = keep.iter().map(|&a| self.dims[a]).collect();
        let mut out = vec![0.0; out_dims.iter().product()];

        let mut index = vec![0usize; self.dims.len()];
        for &p in &self.probs {
            let flat = keep
                .iter()
                .fold(0usize, |acc, &a| acc * self.dims[a] + index[a]);
            out[flat] += p;
            // odometer increment, last axis fastest
            for a in (0..index.len()).rev() {
                index[a] += 1;
                if index[a] < self.dims[a] {
                    break;
                }
                index[a] = 0;
            }
        }
        JointTable {
            dims: out_dims,
            probs: out,
        }
    }

    fn entropy_of(&self, axes: &[usize]) -> f64 {
        entropy(&self.marginal(axes))
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.n_vars() {
            return Err(Error::InvalidConfig(format!(
                "axis {axis} out of range for a table over {} variables",
                self.n_vars()
            )));
        }
        Ok(())
    }
}

/// `-Σ p ln p` of a probability vector, with `0 ln 0 = 0`.
pub fn entropy_of_probs(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Plug-in entropy of a histogram.
pub fn entropy_of_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}

pub fn entropy(table: &JointTable) -> f64 {
    entropy_of_probs(&table.probs)
}

/// `I(X1 : X2) = H(X1) + H(X2) - H(X1, X2)` for a two-variable table.
pub fn mutual_information(table: &JointTable) -> Result<f64> {
    if table.n_vars() != 2 {
        return Err(Error::Arity {
            expected: 2,
            got: table.n_vars(),
        });
    }
    let mi = table.entropy_of(&[0]) + table.entropy_of(&[1]) - entropy(table);
    Ok(mi.max(0.0))
}

/// `TC(X) = Σ_i H(X_i) - H(X)`.
pub fn total_correlation(table: &JointTable) -> f64 {
    let marginals: f64 = (0..table.n_vars()).map(|a| table.entropy_of(&[a])).sum();
    (marginals - entropy(table)).max(0.0)
}

/// `TC(X | Y) = Σ_i H(X_i | Y) - H(X | Y)` where `Y` is `cond_axis` and
/// `X` all remaining axes.
pub fn conditional_total_correlation(table: &JointTable, cond_axis: usize) -> Result<f64> {
    table.check_axis(cond_axis)?;
    let h_y = table.entropy_of(&[cond_axis]);
    let others = other_axes(table, cond_axis);
    let sum_conditional: f64 = others
        .iter()
        .map(|&a| table.entropy_of(&[a, cond_axis]) - h_y)
        .sum();
    let joint_conditional = entropy(table) - h_y;
    Ok((sum_conditional - joint_conditional).max(0.0))
}

/// `TC(X; Y) = TC(X) - TC(X | Y)`: the correlation in `X` explained by
/// the variable at `cond_axis`.
pub fn tc_explained(table: &JointTable, cond_axis: usize) -> Result<f64> {
    table.check_axis(cond_axis)?;
    let others = other_axes(table, cond_axis);
    let tc_x = total_correlation(&table.marginal(&others));
    let tc_x_given_y = conditional_total_correlation(table, cond_axis)?;
    Ok((tc_x - tc_x_given_y).max(0.0))
}

/// The same quantity through mutual informations:
/// `Σ_i I(X_i : Y) - I(X : Y)`.
pub fn tc_explained_by_mi(table: &JointTable, cond_axis: usize) -> Result<f64> {
    table.check_axis(cond_axis)?;
    let others = other_axes(table, cond_axis);
    let h_y = table.entropy_of(&[cond_axis]);
    let sum_mi: f64 = others
        .iter()
        .map(|&a| table.entropy_of(&[a]) + h_y - table.entropy_of(&[a, cond_axis]))
        .sum();
    let joint_mi = table.entropy_of(&others) + h_y - entropy(table);
    Ok((sum_mi - joint_mi).max(0.0))
}

fn other_axes(table: &JointTable, axis: usize) -> Vec<usize> {
    (0..table.n_vars()).filter(|&a| a != axis).collect()
}
