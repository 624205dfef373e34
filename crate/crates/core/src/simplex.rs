//! Euclidean projection onto the probability simplex and the weight vectors
//! that live on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking simplex membership.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimplexMode {
    /// `sum = 1`
    #[default]
    Unit,
    /// `sum <= 1`
    Capped,
}

/// Nonnegative merging coefficients summing to one (unit) or at most one (capped).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights {
    values: Vec<f64>,
    mode: SimplexMode,
}

impl SimplexWeights {
    /// Wrap `values`, rejecting anything outside the simplex.
    pub fn new(values: Vec<f64>, mode: SimplexMode) -> Result<Self> {
        let w = SimplexWeights { values, mode };
        w.validate()?;
        Ok(w)
    }

    /// The `index`-th standard basis vector of length `n`.
    pub fn vertex(n: usize, index: usize, mode: SimplexMode) -> Result<Self> {
        if index >= n {
            return Err(Error::Dimension(format!("vertex {index} of a {n}-simplex")));
        }
        let mut values = vec![0.0; n];
        values[index] = 1.0;
        Ok(SimplexWeights { values, mode })
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Simplex("empty weight vector".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Simplex(format!("entry {v} is negative or non-finite")));
        }
        let sum: f64 = self.values.iter().sum();
        let ok = match self.mode {
            SimplexMode::Unit => (sum - 1.0).abs() <= SIMPLEX_TOL,
            SimplexMode::Capped => sum <= 1.0 + SIMPLEX_TOL,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Simplex(format!("sum {sum} violates {:?} mode", self.mode)))
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> SimplexMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// `n` equal weights of `1/n` in unit mode.
pub fn uniform_weights(n: usize) -> Result<SimplexWeights> {
    if n == 0 {
        return Err(Error::Dimension("uniform weights over zero vertices".into()));
    }
    Ok(SimplexWeights {
        values: vec![1.0 / n as f64; n],
        mode: SimplexMode::Unit,
    })
}

/// Euclidean projection of `v` onto the unit or capped simplex.
///
/// Sort-and-threshold: with `u` sorted descending, take the largest `rho`
/// for which `u[rho] - (sum(u[..=rho]) - 1) / (rho + 1) > 0`, shift everything
/// by that threshold and clip at zero. Equal entries keep their original order.
pub fn project_simplex(v: &[f64], mode: SimplexMode) -> Result<SimplexWeights> {
    if v.is_empty() {
        return Err(Error::Dimension("cannot project an empty vector".into()));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numerics(format!("non-finite entry at index {i}")));
    }
    if mode == SimplexMode::Capped {
        let clipped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
        if clipped.iter().sum::<f64>() <= 1.0 {
            return Ok(SimplexWeights {
                values: clipped,
                mode,
            });
        }
    }

    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));

    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        cumsum += v[i];
        let candidate = (cumsum - 1.0) / (rank + 1) as f64;
        if v[i] - candidate > 0.0 {
            threshold = candidate;
        }
    }
    let values = v.iter().map(|&x| (x - threshold).max(0.0)).collect();
    Ok(SimplexWeights { values, mode })
}
