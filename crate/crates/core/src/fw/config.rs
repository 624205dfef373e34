use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::SimplexMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Hard,
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LmoGranularity {
    #[default]
    #[serde(alias = "task-wise")]
    Task,
    #[serde(alias = "layer-wise")]
    Layer,
}

/// Whether soft merging weights are one scalar per vertex or one per vertex and layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaGranularity {
    #[default]
    Scalar,
    Layer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeFnKind {
    #[default]
    Convex,
    External,
}

/// Settings of one Frank-Wolfe merge run. Every field has a default and the
/// resolved values are echoed into the trace header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FWConfig {
    pub variant: Variant,
    pub lmo: LmoGranularity,
    /// Iteration budget `T`.
    pub budget: usize,
    /// Stop once the FW gap drops to this value.
    pub epsilon: f64,
    /// Soft top-k; `None` means `min(4, pool size)`.
    pub k: Option<usize>,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub simplex_mode: SimplexMode,
    pub lambda_granularity: LambdaGranularity,
    pub line_search_points: usize,
    pub merge_fn: MergeFnKind,
    /// Name of the external merger when `merge_fn` is `external`.
    pub external_merger: Option<String>,
    /// Trim density for the built-in `ties` merger.
    pub ties_density: f64,
}

impl Default for FWConfig {
    fn default() -> Self {
        FWConfig {
            variant: Variant::Hard,
            lmo: LmoGranularity::Task,
            budget: 10,
            epsilon: 1e-6,
            k: None,
            inner_steps: 50,
            inner_lr: 0.1,
            simplex_mode: SimplexMode::Unit,
            lambda_granularity: LambdaGranularity::Scalar,
            line_search_points: 21,
            merge_fn: MergeFnKind::Convex,
            external_merger: None,
            ties_density: 0.8,
        }
    }
}

pub const DEFAULT_MAX_K: usize = 4;

impl FWConfig {
    pub fn hard() -> Self {
        FWConfig::default()
    }

    pub fn soft() -> Self {
        FWConfig {
            variant: Variant::Soft,
            ..FWConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("FW config: {e}")))
    }

    /// `k` after applying the pool-size default.
    pub fn resolved_k(&self, pool_size: usize) -> usize {
        self.k.unwrap_or(DEFAULT_MAX_K.min(pool_size)).max(1)
    }

    /// Check internal consistency against a pool of `pool_size` vertices.
    pub fn validate(&self, pool_size: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.budget == 0 {
            return fail("budget must be at least 1".into());
        }
        if !(self.epsilon >= 0.0) {
            return fail(format!("epsilon {} must be nonnegative", self.epsilon));
        }
        if let Some(k) = self.k {
            if k == 0 || k > pool_size {
                return fail(format!("k = {k} must lie in 1..={pool_size}"));
            }
        }
        if self.lambda_granularity == LambdaGranularity::Layer && self.variant != Variant::Soft {
            return fail("per-layer merging weights need the soft variant".into());
        }
        if self.line_search_points < 2 {
            return fail("line search needs at least 2 grid points".into());
        }
        if self.variant == Variant::Soft {
            if self.inner_steps == 0 {
                return fail("inner_steps must be at least 1".into());
            }
            if !(self.inner_lr > 0.0 && self.inner_lr.is_finite()) {
                return fail(format!("inner_lr {} must be positive", self.inner_lr));
            }
        }
        if self.merge_fn == MergeFnKind::External {
            if self.lambda_granularity == LambdaGranularity::Layer {
                return fail("external mergers take scalar weights only".into());
            }
            if !(self.ties_density > 0.0 && self.ties_density <= 1.0) {
                return fail(format!("ties_density {} outside (0, 1]", self.ties_density));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_json() {
        let cfg = FWConfig::from_json(r#"{"variant":"soft","lmo":"layer-wise","k":2}"#).unwrap();
        assert_eq!(cfg.variant, Variant::Soft);
        assert_eq!(cfg.lmo, LmoGranularity::Layer);
        assert_eq!(cfg.line_search_points, 21);
        assert_eq!(cfg.epsilon, 1e-6);
        assert!(FWConfig::from_json(r#"{"bogus":1}"#).is_err());
        assert_eq!(FWConfig::default().resolved_k(9), 4);
        assert_eq!(FWConfig::default().resolved_k(2), 2);
    }

    #[test]
    fn validation() {
        assert!(FWConfig::default().validate(3).is_ok());
        let bad = [
            FWConfig { budget: 0, ..FWConfig::default() },
            FWConfig { epsilon: -1.0, ..FWConfig::default() },
            FWConfig { k: Some(4), ..FWConfig::soft() },
            FWConfig { lambda_granularity: LambdaGranularity::Layer, ..FWConfig::hard() },
            FWConfig { line_search_points: 1, ..FWConfig::default() },
            FWConfig { inner_steps: 0, ..FWConfig::soft() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(3), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
