//! Joint-space simulation: condyle meshes are carried by mandibular
//! transforms and compared against the static fossa.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{distance_map, map_stats, weighted_aggregate, DistanceMap, DistanceMapOptions, MapStats, MeshError, SpatialIndex, TriangleMesh};
use crate::se3::RigidTransform;

/// Default joint-space window (mm).
pub const JOINT_ROI: (f64, f64) = (0.0, 10.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TmjError {
    #[error("no fossa vertex of '{fossa}' lies within the region of interest")]
    EmptyMap { fossa: String },
    #[error("distance maps live on different vertex sets ({left} vs {right})")]
    VertexSetMismatch { left: String, right: String },
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            _ => Err(format!("unknown side '{s}' (expected left|right)")),
        }
    }
}

/// Fossa and condyle of one joint, both in the CBCT frame with the mandible
/// at maximum intercuspation.
#[derive(Clone, Debug, PartialEq)]
pub struct JointModel {
    pub side: Side,
    pub fossa: TriangleMesh,
    pub condyle: TriangleMesh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfigLabel {
    Planned,
    Measured,
}

#[derive(Clone, Copy, Debug)]
pub struct JointConfiguration<'a> {
    pub joint: &'a JointModel,
    /// Mandibular motion in the CBCT frame.
    pub mandible_transform: RigidTransform,
    pub label: ConfigLabel,
}

pub fn propagate(config: &JointConfiguration<'_>) -> TriangleMesh {
    config.joint.condyle.transformed(&config.mandible_transform)
}

/// Unsigned distance from every fossa vertex to the posed condyle. Values
/// outside `roi` are masked.
pub fn joint_distance_map(
    joint: &JointModel,
    condyle_posed: &TriangleMesh,
    roi: Option<(f64, f64)>,
) -> Result<DistanceMap, TmjError> {
    let index = SpatialIndex::build(condyle_posed.clone())?;
    let map = distance_map(
        &joint.fossa,
        &index,
        &DistanceMapOptions {
            signed: false,
            clamp_mm: None,
            roi,
        },
    );
    if map.valid_count() == 0 {
        return Err(TmjError::EmptyMap {
            fossa: joint.fossa.name().to_string(),
        });
    }
    Ok(map)
}

/// `measured − planned`, valid where both are.
pub fn difference_map(planned: &DistanceMap, measured: &DistanceMap) -> Result<DistanceMap, TmjError> {
    if planned.source_id != measured.source_id || planned.len() != measured.len() {
        return Err(TmjError::VertexSetMismatch {
            left: format!("{} ({} vertices)", planned.source_id, planned.len()),
            right: format!("{} ({} vertices)", measured.source_id, measured.len()),
        });
    }
    let values: Vec<Option<f64>> = planned
        .values
        .iter()
        .zip(&measured.values)
        .map(|(p, m)| Some((*m)? - (*p)?))
        .collect();
    let masked = values.iter().filter(|v| v.is_none()).count();
    Ok(DistanceMap {
        source_id: planned.source_id.clone(),
        target_id: format!("{}-minus-{}", measured.target_id, planned.target_id),
        signed: true,
        clamp_mm: None,
        roi: planned.roi,
        values,
        masked_by_clamp: 0,
        masked_by_roi: masked,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointReport {
    pub splint_id: String,
    pub repeat_id: String,
    pub side: Side,
    pub planned_map: DistanceMap,
    pub measured_map: DistanceMap,
    pub diff_map: DistanceMap,
    /// `None` when the planned and measured maps share no valid vertex.
    pub diff_stats: Option<MapStats>,
}

pub fn joint_report(
    joint: &JointModel,
    splint_id: &str,
    repeat_id: &str,
    planned: &RigidTransform,
    measured: &RigidTransform,
    roi: Option<(f64, f64)>,
) -> Result<JointReport, TmjError> {
    let posed = |t: &RigidTransform, label| {
        propagate(&JointConfiguration {
            joint,
            mandible_transform: *t,
            label,
        })
        .with_name(format!("{}-{}", joint.condyle.name(), if label == ConfigLabel::Planned { "planned" } else { "measured" }))
    };
    let planned_map = joint_distance_map(joint, &posed(planned, ConfigLabel::Planned), roi)?;
    let measured_map = joint_distance_map(joint, &posed(measured, ConfigLabel::Measured), roi)?;
    let diff_map = difference_map(&planned_map, &measured_map)?;
    let diff_stats = map_stats(&diff_map).ok();
    Ok(JointReport {
        splint_id: splint_id.to_string(),
        repeat_id: repeat_id.to_string(),
        side: joint.side,
        planned_map,
        measured_map,
        diff_map,
        diff_stats,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub splint_id: String,
    pub repeat_id: String,
    pub side: Side,
    pub stats: MapStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSummary {
    /// Sorted by side, splint, repeat.
    pub points: Vec<SummaryPoint>,
    /// Pooled statistics per side over all of that side's points.
    pub pooled: Vec<(Side, MapStats)>,
}

impl JointSummary {
    pub fn pooled(&self, side: Side) -> Option<&MapStats> {
        self.pooled.iter().find(|(s, _)| *s == side).map(|(_, m)| m)
    }
}

/// Per-report difference statistics and their per-side pooled aggregate.
/// Reports without any valid difference vertex are skipped with a warning.
pub fn joint_summary(reports: &[JointReport]) -> Result<JointSummary, TmjError> {
    if reports.is_empty() {
        return Err(TmjError::EmptyInput);
    }
    let mut points: Vec<SummaryPoint> = reports
        .iter()
        .filter_map(|r| {
            if r.diff_stats.is_none() {
                log::warn!("{} {} {}: no overlap between planned and measured maps", r.splint_id, r.repeat_id, r.side);
            }
            r.diff_stats.map(|stats| SummaryPoint {
                splint_id: r.splint_id.clone(),
                repeat_id: r.repeat_id.clone(),
                side: r.side,
                stats,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(TmjError::EmptyInput);
    }
    points.sort_by(|a, b| (a.side, &a.splint_id, &a.repeat_id).cmp(&(b.side, &b.splint_id, &b.repeat_id)));
    let mut pooled = Vec::new();
    for side in Side::BOTH {
        let stats: Vec<MapStats> = points.iter().filter(|p| p.side == side).map(|p| p.stats).collect();
        if !stats.is_empty() {
            pooled.push((side, weighted_aggregate(&stats)?));
        }
    }
    Ok(JointSummary { points, pooled })
}
