//! Ground-truth latent trees for recovery experiments.
//!
//! A fair root bit `Z` feeds `b` intermediate bits `Y_j` through binary
//! symmetric channels; each `Y_j` feeds `c` observed leaves through binary
//! erasure channels. Leaves are ternary with codes `0` (bit 0), `1`
//! (erased), `2` (bit 1). Optional noise columns are independent fair bits.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::info::JointTable;

/// Leaf code of an erased bit.
pub const ERASED: u32 = 1;

/// Generator parameters, with every default already resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTreeSpec {
    /// Number of branches (intermediate latent bits).
    pub b: usize,
    /// Leaves per branch.
    pub c: usize,
    pub erasure: f64,
    pub root_flip: f64,
    pub n_samples: usize,
    pub noise_vars: usize,
    pub seed: u64,
}

impl LatentTreeSpec {
    /// Defaults: erasure `1 - 2/c` (at least 0), root flip `1/3`,
    /// `max(200, 2bc)` samples, no noise columns, seed 0.
    pub fn new(b: usize, c: usize) -> Self {
        LatentTreeSpec {
            b,
            c,
            erasure: default_erasure(c),
            root_flip: 1.0 / 3.0,
            n_samples: default_samples(b, c),
            noise_vars: 0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise_vars(mut self, noise_vars: usize) -> Self {
        self.noise_vars = noise_vars;
        self
    }

    pub fn n_leaves(&self) -> usize {
        self.b * self.c
    }

    pub fn n_vars(&self) -> usize {
        self.n_leaves() + self.noise_vars
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 1 || self.c < 1 {
            return Err(Error::InvalidConfig("b and c must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.erasure) {
            return Err(Error::InvalidConfig(format!("erasure {} outside [0, 1]", self.erasure)));
        }
        if !(0.0..=0.5).contains(&self.root_flip) {
            return Err(Error::InvalidConfig(format!("flip {} outside [0, 0.5]", self.root_flip)));
        }
        if self.n_samples < 1 {
            return Err(Error::InvalidConfig("need at least one sample".into()));
        }
        Ok(())
    }
}

pub fn default_erasure(c: usize) -> f64 {
    (1.0 - 2.0 / c as f64).max(0.0)
}

pub fn default_samples(b: usize, c: usize) -> usize {
    200.max(2 * b * c)
}

/// The hidden values behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: LatentTreeSpec,
    /// Root bit per sample.
    pub z: Vec<u8>,
    /// Intermediate bits, one row per sample, one entry per branch.
    pub y: Vec<Vec<u8>>,
    /// True branch of every column; `None` for noise columns.
    pub cluster_of: Vec<Option<usize>>,
}

impl GroundTruth {
    /// Intermediate bit `j` across samples.
    pub fn branch_values(&self, j: usize) -> Vec<usize> {
        self.y.iter().map(|row| row[j] as usize).collect()
    }

    pub fn root_values(&self) -> Vec<usize> {
        self.z.iter().map(|&z| z as usize).collect()
    }
}

/// Passes `bit` with probability `1 - delta`; `None` means erased.
pub fn bec<R: Rng + ?Sized>(bit: bool, delta: f64, rng: &mut R) -> Option<bool> {
    if rng.gen::<f64>() < delta {
        None
    } else {
        Some(bit)
    }
}

/// Flips `bit` with probability `flip`.
pub fn bsc<R: Rng + ?Sized>(bit: bool, flip: f64, rng: &mut R) -> bool {
    bit ^ (rng.gen::<f64>() < flip)
}

/// Integer code of a channel output: `0`, erased `1`, `2`.
pub fn leaf_code(output: Option<bool>) -> u32 {
    match output {
        Some(false) => 0,
        None => ERASED,
        Some(true) => 2,
    }
}

/// Draws a dataset and its hidden variables.
pub fn generate(spec: &LatentTreeSpec) -> Result<(DataMatrix, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n_samples, n_vars, leaves) = (spec.n_samples, spec.n_vars(), spec.n_leaves());

    let mut cells = Array2::<u32>::zeros((n_samples, n_vars));
    let mut z = Vec::with_capacity(n_samples);
    let mut y = Vec::with_capacity(n_samples);
    for l in 0..n_samples {
        let root = rng.gen::<bool>();
        let branches: Vec<bool> = (0..spec.b).map(|_| bsc(root, spec.root_flip, &mut rng)).collect();
        for (j, &bit) in branches.iter().enumerate() {
            for leaf in 0..spec.c {
                cells[[l, j * spec.c + leaf]] = leaf_code(bec(bit, spec.erasure, &mut rng));
            }
        }
        for noise in 0..spec.noise_vars {
            cells[[l, leaves + noise]] = u32::from(rng.gen::<bool>());
        }
        z.push(u8::from(root));
        y.push(branches.into_iter().map(u8::from).collect());
    }

    let mut cardinalities = vec![3; leaves];
    cardinalities.extend(std::iter::repeat_n(2, spec.noise_vars));
    let names = (0..n_vars).map(|i| format!("x{i}")).collect();
    let data = DataMatrix::new(cells, cardinalities)?.with_column_names(names)?;

    let cluster_of = (0..n_vars)
        .map(|i| (i < leaves).then_some(i / spec.c))
        .collect();
    Ok((
        data,
        GroundTruth {
            spec: spec.clone(),
            z,
            y,
            cluster_of,
        },
    ))
}

/// The exact joint distribution of every column plus the combined
/// intermediate state `(Y_1, ..., Y_b)` as the final axis (of size `2^b`).
///
/// Only feasible for small trees; the state-space guard applies.
pub fn analytic_joint(spec: &LatentTreeSpec) -> Result<JointTable> {
    spec.validate()?;
    let (b, c, leaves) = (spec.b, spec.c, spec.n_leaves());
    let mut dims = vec![3; leaves];
    dims.extend(std::iter::repeat_n(2, spec.noise_vars));
    let y_states = 1usize << b;
    dims.push(y_states);
    let states = dims.iter().try_fold(1u128, |acc, &d| acc.checked_mul(d as u128));
    if states.is_none_or(|s| s > crate::info::STATE_LIMIT) {
        return Err(Error::StateSpaceTooLarge {
            states: states.unwrap_or(u128::MAX),
            limit: crate::info::STATE_LIMIT,
        });
    }

    // p(y-vector) from the root mixture
    let py: Vec<f64> = (0..y_states)
        .map(|ys| {
            let ones = ys.count_ones() as i32;
            let p = spec.root_flip;
            let given = |root_bit: bool| {
                let agree = if root_bit { ones } else { b as i32 - ones };
                (1.0 - p).powi(agree) * p.powi(b as i32 - agree)
            };
            0.5 * given(false) + 0.5 * given(true)
        })
        .collect();
    let leaf_prob = |bit: bool, code: usize| -> f64 {
        match (code, bit) {
            (1, _) => spec.erasure,
            (0, false) | (2, true) => 1.0 - spec.erasure,
            _ => 0.0,
        }
    };

    let total: usize = states.unwrap() as usize;
    let mut probs = vec![0.0; total];
    let mut index = vec![0usize; dims.len()];
    for p in probs.iter_mut() {
        let ys = index[dims.len() - 1];
        let mut prob = py[ys];
        for col in 0..leaves {
            // bit j of ys belongs to branch j
            let bit = (ys >> (col / c)) & 1 == 1;
            prob *= leaf_prob(bit, index[col]);
            if prob == 0.0 {
                break;
            }
        }
        prob *= 0.5f64.powi(spec.noise_vars as i32);
        *p = prob;
        for a in (0..dims.len()).rev() {
            index[a] += 1;
            if index[a] < dims[a] {
                break;
            }
            index[a] = 0;
        }
    }
    JointTable::new(dims, probs)
}
