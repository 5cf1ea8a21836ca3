//! Merge parameterizations mapping a coefficient vector `phi` to a merged
//! model.
//!
//! | kind           | `d_phi` | merged model                                  |
//! |----------------|---------|-----------------------------------------------|
//! | `TaskArith`    | 1       | `base + phi_0 * mean_m(tau_m)`                 |
//! | `Ties`         | 1       | `base + phi_0 * ties(tau_1..tau_M)`            |
//! | `TaskWiseAda`  | M       | `base + sum_m phi_m * tau_m`                   |
//! | `LayerWiseAda` | M * L   | `base^l + sum_m phi_{m,l} * tau_m^l` per layer |
//!
//! Layer-wise coefficients are stored member-major: `phi[m * L + l]`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param_space::{ModelPool, ParamVector};

pub const DEFAULT_TRIM_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeKind {
    TaskArith,
    Ties,
    TaskWiseAda,
    LayerWiseAda,
}

impl MergeKind {
    pub const ALL: [MergeKind; 4] = [
        MergeKind::TaskArith,
        MergeKind::Ties,
        MergeKind::TaskWiseAda,
        MergeKind::LayerWiseAda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MergeKind::TaskArith => "task_arith",
            MergeKind::Ties => "ties",
            MergeKind::TaskWiseAda => "task_wise_ada",
            MergeKind::LayerWiseAda => "layer_wise_ada",
        }
    }
}

impl fmt::Display for MergeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MergeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MergeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown merge kind `{s}`")))
    }
}

/// Cached TIES trim/elect/disjoint-mean result for one pool.
#[derive(Clone, Debug, PartialEq)]
pub struct TiesPreprocessed {
    pub trim_fraction: f64,
    pub trimmed: Vec<ParamVector>,
    /// +1, -1, or 0 where no member keeps a nonzero entry.
    pub elected_sign: Vec<i8>,
    /// Mean of the sign-agreeing trimmed entries per coordinate.
    pub merged_delta: ParamVector,
}

/// Keeps the `ceil(trim_fraction * len)` largest-magnitude entries of each
/// task vector (ties broken by lower index), elects a sign per coordinate from
/// the summed trimmed values (an exact zero sum elects +1), then averages the
/// trimmed entries that agree with the elected sign.
pub fn ties_preprocess(pool: &ModelPool, trim_fraction: f64) -> Result<TiesPreprocessed> {
    if !(trim_fraction > 0.0 && trim_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "trim_fraction {trim_fraction} outside (0, 1]"
        )));
    }
    let len = pool.base().len();
    let keep = ((trim_fraction * len as f64).ceil() as usize).min(len);

    let trimmed: Vec<ParamVector> = pool
        .members()
        .iter()
        .map(|(_, tv)| {
            let values = tv.delta().values();
            let mut order: Vec<usize> = (0..len).collect();
            // stable sort keeps lower indices first among equal magnitudes
            order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
            let mut kept = vec![0.0f32; len];
            for &i in &order[..keep] {
                kept[i] = values[i];
            }
            ParamVector::new(kept, pool.base().layers().to_vec())
        })
        .collect::<Result<_>>()?;

    let mut elected_sign = vec![0i8; len];
    let mut merged = vec![0.0f32; len];
    for i in 0..len {
        let mut sum = 0.0f64;
        let mut any = false;
        for t in &trimmed {
            let v = t.values()[i];
            if v != 0.0 {
                any = true;
                sum += v as f64;
            }
        }
        if !any {
            continue;
        }
        let sign: i8 = if sum < 0.0 { -1 } else { 1 };
        elected_sign[i] = sign;
        let (mut acc, mut count) = (0.0f64, 0usize);
        for t in &trimmed {
            let v = t.values()[i];
            if v != 0.0 && (v > 0.0) == (sign > 0) {
                acc += v as f64;
                count += 1;
            }
        }
        merged[i] = (acc / count as f64) as f32;
    }

    Ok(TiesPreprocessed {
        trim_fraction,
        trimmed,
        elected_sign,
        merged_delta: ParamVector::new(merged, pool.base().layers().to_vec())?,
    })
}

/// A merge parameterization over a fixed pool. Immutable once built.
#[derive(Clone, Debug)]
pub struct MergeScheme {
    kind: MergeKind,
    pool: Arc<ModelPool>,
    /// Mean task vector (TaskArith) or TIES-resolved delta (Ties).
    scalar_direction: Option<ParamVector>,
    ties: Option<TiesPreprocessed>,
}

impl MergeScheme {
    pub fn new(kind: MergeKind, pool: Arc<ModelPool>, trim_fraction: f64) -> Result<Self> {
        let (scalar_direction, ties) = match kind {
            MergeKind::TaskArith => {
                let m = pool.len() as f64;
                let scales = vec![1.0 / m; pool.layer_count()];
                let zero = ParamVector::zeros(pool.base().layers())?;
                let terms: Vec<_> = pool
                    .members()
                    .iter()
                    .map(|(_, tv)| (tv.delta(), scales.as_slice()))
                    .collect();
                (Some(zero.add_scaled_layers(&terms)?), None)
            }
            MergeKind::Ties => {
                let pre = ties_preprocess(&pool, trim_fraction)?;
                (Some(pre.merged_delta.clone()), Some(pre))
            }
            MergeKind::TaskWiseAda | MergeKind::LayerWiseAda => (None, None),
        };
        Ok(Self {
            kind,
            pool,
            scalar_direction,
            ties,
        })
    }

    pub fn with_defaults(kind: MergeKind, pool: Arc<ModelPool>) -> Result<Self> {
        Self::new(kind, pool, DEFAULT_TRIM_FRACTION)
    }

    pub fn kind(&self) -> MergeKind {
        self.kind
    }

    pub fn pool(&self) -> &ModelPool {
        &self.pool
    }

    pub fn ties(&self) -> Option<&TiesPreprocessed> {
        self.ties.as_ref()
    }

    pub fn d_phi(&self) -> usize {
        match self.kind {
            MergeKind::TaskArith | MergeKind::Ties => 1,
            MergeKind::TaskWiseAda => self.pool.len(),
            MergeKind::LayerWiseAda => self.pool.len() * self.pool.layer_count(),
        }
    }

    /// Prior-mean coefficients: `1/M` per model coefficient, `1.0` for the
    /// scalar schemes (whose direction is already the average task vector).
    pub fn default_phi(&self) -> Vec<f64> {
        match self.kind {
            MergeKind::TaskArith | MergeKind::Ties => vec![1.0],
            _ => vec![1.0 / self.pool.len() as f64; self.d_phi()],
        }
    }

    pub fn realize(&self, phi: &[f64]) -> Result<ParamVector> {
        if phi.len() != self.d_phi() {
            return Err(Error::Structure(format!(
                "{} coefficients for {} (d_phi = {})",
                phi.len(),
                self.kind,
                self.d_phi()
            )));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("merge coefficients"));
        }
        let base = self.pool.base();
        let layers = self.pool.layer_count();
        match self.kind {
            MergeKind::TaskArith | MergeKind::Ties => {
                let dir = self.scalar_direction.as_ref().expect("scalar scheme direction");
                base.axpy(phi[0], dir)
            }
            MergeKind::TaskWiseAda => {
                let scales: Vec<Vec<f64>> = phi.iter().map(|&p| vec![p; layers]).collect();
                let terms: Vec<_> = self
                    .pool
                    .members()
                    .iter()
                    .zip(&scales)
                    .map(|((_, tv), s)| (tv.delta(), s.as_slice()))
                    .collect();
                base.add_scaled_layers(&terms)
            }
            MergeKind::LayerWiseAda => {
                let terms: Vec<_> = self
                    .pool
                    .members()
                    .iter()
                    .zip(phi.chunks_exact(layers))
                    .map(|((_, tv), row)| (tv.delta(), row))
                    .collect();
                base.add_scaled_layers(&terms)
            }
        }
    }
}
