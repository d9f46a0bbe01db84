use rayon::prelude::*;

use super::{MeshError, SpatialIndex, TriangleMesh};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DistanceMapOptions {
    pub signed: bool,
    /// Vertices with `|d| > clamp_mm` are masked out (not saturated).
    pub clamp_mm: Option<f64>,
    /// Vertices with `d` outside `[lo, hi]` are masked out.
    pub roi: Option<(f64, f64)>,
}

/// Per-vertex distances from a source surface to a target surface.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    pub source_id: String,
    pub target_id: String,
    pub signed: bool,
    pub clamp_mm: Option<f64>,
    pub roi: Option<(f64, f64)>,
    /// `None` marks a masked vertex.
    pub values: Vec<Option<f64>>,
    pub masked_by_clamp: usize,
    pub masked_by_roi: usize,
}

impl DistanceMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().filter_map(|v| *v)
    }

    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }
}

pub fn distance_map(
    source: &TriangleMesh,
    target: &SpatialIndex,
    options: &DistanceMapOptions,
) -> DistanceMap {
    let raw: Vec<f64> = source
        .vertices()
        .par_iter()
        .map(|q| {
            let hit = target.closest_point(q);
            if options.signed {
                target.sign_of(q, &hit) * hit.distance
            } else {
                hit.distance
            }
        })
        .collect();

    let mut masked_by_clamp = 0;
    let mut masked_by_roi = 0;
    let values = raw
        .into_iter()
        .map(|d| {
            if options.clamp_mm.is_some_and(|c| d.abs() > c) {
                masked_by_clamp += 1;
                return None;
            }
            if options.roi.is_some_and(|(lo, hi)| d < lo || d > hi) {
                masked_by_roi += 1;
                return None;
            }
            Some(d)
        })
        .collect();
    DistanceMap {
        source_id: source.name().to_string(),
        target_id: target.mesh().name().to_string(),
        signed: options.signed,
        clamp_mm: options.clamp_mm,
        roi: options.roi,
        values,
        masked_by_clamp,
        masked_by_roi,
    }
}

/// Count, mean and population standard deviation of a set of distances.
#[derive(Clone, Copy, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct MapStats {
    pub n: usize,
    pub mu: f64,
    pub sigma: f64,
}

impl MapStats {
    pub fn from_values(values: &[f64]) -> Result<Self, MeshError> {
        if values.is_empty() {
            return Err(MeshError::EmptyMap);
        }
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        Ok(MapStats {
            n: values.len(),
            mu,
            sigma: var.sqrt(),
        })
    }
}

pub fn map_stats(map: &DistanceMap) -> Result<MapStats, MeshError> {
    let values: Vec<f64> = map.valid_values().collect();
    MapStats::from_values(&values)
}

/// Pooled mean and standard deviation from per-sample `(N, μ, σ)`:
/// `μ = ΣNμ/ΣN`, `σ² = ΣN(σ² + μ²)/ΣN − μ²`.
pub fn weighted_aggregate(per_sample: &[MapStats]) -> Result<MapStats, MeshError> {
    if per_sample.is_empty() {
        return Err(MeshError::EmptyInput);
    }
    if let Some(bad) = per_sample
        .iter()
        .find(|s| s.n == 0 || s.sigma < 0.0 || !s.mu.is_finite() || !s.sigma.is_finite())
    {
        return Err(MeshError::InvalidStats(format!("{bad:?}")));
    }
    let total: usize = per_sample.iter().map(|s| s.n).sum();
    let w = total as f64;
    let mu = per_sample.iter().map(|s| s.n as f64 * s.mu).sum::<f64>() / w;
    let second = per_sample
        .iter()
        .map(|s| s.n as f64 * (s.sigma * s.sigma + s.mu * s.mu))
        .sum::<f64>()
        / w;
    Ok(MapStats {
        n: total,
        mu,
        sigma: (second - mu * mu).max(0.0).sqrt(),
    })
}
