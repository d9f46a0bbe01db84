//! Closed-form rigid fitting, trimmed point-to-point ICP and the two-stage
//! splint accuracy measurement built on it.

use std::fmt;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{SpatialIndex, TriangleMesh};
use crate::se3::{exp_se3, log_se3, RigidTransform, Rotation, Se3Mode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("point sets differ in length ({source_len} vs {target_len})")]
    LengthMismatch { source_len: usize, target_len: usize },
    #[error("need at least 3 point pairs, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate geometry: cross-covariance rank below 2")]
    DegenerateGeometry,
    #[error("weights must be finite, nonnegative and not all zero")]
    InvalidWeights,
    #[error("every correspondence rejected at iteration {iteration}")]
    NoCorrespondences { iteration: usize },
    #[error("source point set is empty")]
    EmptySource,
    #[error("invalid ICP parameters: {0}")]
    InvalidParams(String),
}

/// Minimizes `Σ wᵢ‖R·sᵢ + t − tᵢ‖²` via the SVD of the weighted
/// cross-covariance, forcing `det R = +1`.
pub fn best_fit(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    weights: Option<&[f64]>,
) -> Result<RigidTransform, RegistrationError> {
    if source.len() != target.len() {
        return Err(RegistrationError::LengthMismatch {
            source_len: source.len(),
            target_len: target.len(),
        });
    }
    if source.len() < 3 {
        return Err(RegistrationError::TooFewPoints(source.len()));
    }
    if let Some(w) = weights {
        if w.len() != source.len() || w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(RegistrationError::InvalidWeights);
        }
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..source.len()).map(weight).sum();
    let mut cs = Vector3::zeros();
    let mut ct = Vector3::zeros();
    for i in 0..source.len() {
        cs += source[i].coords * weight(i);
        ct += target[i].coords * weight(i);
    }
    cs /= total;
    ct /= total;

    let mut h = Matrix3::zeros();
    for i in 0..source.len() {
        h += (source[i].coords - cs) * (target[i].coords - ct).transpose() * weight(i);
    }
    let svd = h.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(RegistrationError::DegenerateGeometry);
    };
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = svd.singular_values;
    if !(s[order[0]] > 0.0) || s[order[1]] <= 1e-12 * s[order[0]] {
        return Err(RegistrationError::DegenerateGeometry);
    }
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(order[2], order[2])] = -1.0;
    }
    let r = v * d * u.transpose();
    let rotation = Rotation::project(&r);
    let translation = ct - rotation.rotate(&cs);
    Ok(RigidTransform::new(rotation, translation))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcpMetric {
    #[default]
    PointToPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the trimmed RMS changes by less than this (mm).
    pub convergence_tol_mm: f64,
    /// Pairs farther apart than this are rejected (mm).
    pub max_correspondence_mm: f64,
    /// Fraction of the worst remaining pairs discarded each iteration.
    pub trim_fraction: f64,
    pub metric: IcpMetric,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 100,
            convergence_tol_mm: 1e-6,
            max_correspondence_mm: 2.0,
            trim_fraction: 0.1,
            metric: IcpMetric::PointToPoint,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: &str| Err(RegistrationError::InvalidParams(m.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.convergence_tol_mm > 0.0) {
            return bad("convergence_tol_mm must be positive");
        }
        if !(self.max_correspondence_mm > 0.0) {
            return bad("max_correspondence_mm must be positive");
        }
        if !(0.0..=0.5).contains(&self.trim_fraction) {
            return bad("trim_fraction must lie in [0, 0.5]");
        }
        Ok(())
    }

    pub fn with_radius(mut self, mm: f64) -> Self {
        self.max_correspondence_mm = mm;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpIteration {
    pub iteration: usize,
    pub inliers: usize,
    /// Trimmed RMS at the start of the iteration.
    pub rms_before_mm: f64,
    /// Trimmed RMS after the update, with fresh correspondences.
    pub rms_after_mm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub rms_mm: f64,
    pub iterations_used: usize,
    pub inlier_count: usize,
    pub converged: bool,
    pub trace: Vec<IcpIteration>,
}

struct Matching {
    /// `(distance, source index, moved source, target point)`, sorted.
    pairs: Vec<(f64, usize, Point3<f64>, Point3<f64>)>,
    rms: f64,
}

fn match_trimmed(
    source: &[Point3<f64>],
    target: &SpatialIndex,
    transform: &RigidTransform,
    params: &IcpParams,
    keep_cap: usize,
    iteration: usize,
) -> Result<Matching, RegistrationError> {
    let mut pairs: Vec<(f64, usize, Point3<f64>, Point3<f64>)> = source
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let moved = transform.apply(p);
            target
                .closest_within(&moved, params.max_correspondence_mm)
                .map(|hit| (hit.distance, i, moved, hit.point))
        })
        .collect();
    if pairs.is_empty() {
        return Err(RegistrationError::NoCorrespondences { iteration });
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let trimmed = ((1.0 - params.trim_fraction) * pairs.len() as f64).floor() as usize;
    let keep = trimmed.max(1).min(keep_cap);
    if keep < 3 {
        return Err(RegistrationError::TooFewPoints(keep));
    }
    pairs.truncate(keep);
    let rms = (pairs.iter().map(|p| p.0 * p.0).sum::<f64>() / keep as f64).sqrt();
    Ok(Matching { pairs, rms })
}

const ACCEL_MAX_ANGLE: f64 = 10.0 * std::f64::consts::PI / 180.0;
const ACCEL_MAX_GAIN: f64 = 25.0;
const ACCEL_PROBES: usize = 1000;

/// Extrapolates along the last two pose updates when their source-point
/// displacement fields are nearly parallel and shrinking, assuming the
/// step lengths decay geometrically. Frame-independent: alignment is judged
/// on displacements and the jump follows the screw motion of the last step.
fn extrapolate(source: &[Point3<f64>], history: &[RigidTransform]) -> Option<RigidTransform> {
    let [a, b, c] = history else { return None };
    let stride = source.len().div_ceil(ACCEL_PROBES).max(1);
    let (mut n1, mut n2, mut dot) = (0.0, 0.0, 0.0);
    for p in source.iter().step_by(stride) {
        let pb = b.apply(p);
        let d1 = pb - a.apply(p);
        let d2 = c.apply(p) - pb;
        n1 += d1.norm_squared();
        n2 += d2.norm_squared();
        dot += d1.dot(&d2);
    }
    if n1 == 0.0 || n2 == 0.0 || n2 >= n1 {
        return None;
    }
    let (n1, n2) = (n1.sqrt(), n2.sqrt());
    if dot / (n1 * n2) < ACCEL_MAX_ANGLE.cos() {
        return None;
    }
    let ratio = n2 / n1;
    let gain = (ratio / (1.0 - ratio)).min(ACCEL_MAX_GAIN);
    let last = c.compose(&b.inverse());
    let twist = log_se3(&last, Se3Mode::Coupled).ok()?;
    let jump = exp_se3(&(twist * gain), Se3Mode::Coupled);
    Some(jump.compose(c))
}

/// Trimmed point-to-point ICP of `source` onto the surface in `target`,
/// starting from `init`.
///
/// The number of kept pairs never grows between iterations, so the trimmed
/// RMS is non-increasing: the fit lowers the RMS of the matched pairs and
/// re-matching can only shorten each distance. Steps are extrapolated
/// along the pose trajectory when consecutive steps line up; an
/// extrapolated pose is kept only if it beats the plain step.
pub fn icp(
    source: &[Point3<f64>],
    target: &SpatialIndex,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, RegistrationError> {
    params.validate()?;
    if source.is_empty() {
        return Err(RegistrationError::EmptySource);
    }
    let mut transform = *init;
    let mut current = match_trimmed(source, target, &transform, params, usize::MAX, 1)?;
    let mut history = vec![transform];
    let mut trace = Vec::new();
    let mut converged = current.rms < params.convergence_tol_mm;

    if !converged {
        for iteration in 1..=params.max_iterations {
            let keep = current.pairs.len();
            let src: Vec<Point3<f64>> = current.pairs.iter().map(|p| p.2).collect();
            let dst: Vec<Point3<f64>> = current.pairs.iter().map(|p| p.3).collect();
            let step = best_fit(&src, &dst, None)?;
            let fit_rms = (src
                .iter()
                .zip(&dst)
                .map(|(s, d)| (step.apply(s) - d).norm_squared())
                .sum::<f64>()
                / keep as f64)
                .sqrt();
            let step = if fit_rms <= current.rms { step } else { RigidTransform::identity() };

            let mut next_transform = step.compose(&transform);
            let mut next = match_trimmed(source, target, &next_transform, params, keep, iteration)?;
            history.push(next_transform);
            if history.len() > 3 {
                history.remove(0);
            }
            if let Some(jump) = extrapolate(source, &history) {
                if let Ok(m) = match_trimmed(source, target, &jump, params, keep, iteration) {
                    if m.rms < next.rms {
                        next_transform = jump;
                        next = m;
                        history.clear();
                        history.push(next_transform);
                    }
                }
            }

            trace.push(IcpIteration {
                iteration,
                inliers: next.pairs.len(),
                rms_before_mm: current.rms,
                rms_after_mm: next.rms,
            });
            let change = current.rms - next.rms;
            transform = next_transform;
            current = next;
            if change < params.convergence_tol_mm || current.rms < params.convergence_tol_mm {
                converged = true;
                break;
            }
        }
    }

    Ok(IcpResult {
        transform,
        rms_mm: current.rms,
        iterations_used: trace.len(),
        inlier_count: current.pairs.len(),
        converged,
        trace,
    })
}

fn principal_frame(points: &[Point3<f64>]) -> (Vector3<f64>, Matrix3<f64>) {
    let n = points.len() as f64;
    let c = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cov = points
        .iter()
        .fold(Matrix3::zeros(), |a, p| a + (p.coords - c) * (p.coords - c).transpose())
        / n;
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes = Matrix3::from_columns(&[
        eig.eigenvectors.column(idx[0]).into_owned(),
        eig.eigenvectors.column(idx[1]).into_owned(),
        eig.eigenvectors.column(idx[0]).cross(&eig.eigenvectors.column(idx[1])),
    ]);
    (c, axes)
}

/// Coarse initial alignment from centroids and principal axes. The four
/// proper sign choices of the axes are scored by mean closest distance.
pub fn prealign(source: &[Point3<f64>], target: &SpatialIndex) -> Result<RigidTransform, RegistrationError> {
    if source.len() < 3 {
        return Err(RegistrationError::TooFewPoints(source.len()));
    }
    let (cs, axes_s) = principal_frame(source);
    let (ct, axes_t) = principal_frame(target.mesh().vertices());
    let step = (source.len() / 500).max(1);
    let mut best: Option<(f64, RigidTransform)> = None;
    for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let flip = Matrix3::from_diagonal(&Vector3::new(a, b, a * b));
        let r = Rotation::project(&(axes_t * flip * axes_s.transpose()));
        let t = RigidTransform::new(r, ct - r.rotate(&cs));
        let score: f64 = source
            .iter()
            .step_by(step)
            .map(|p| target.closest_point(&t.apply(p)).distance)
            .sum();
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, t));
        }
    }
    Ok(best.expect("four candidates").1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplintStage {
    /// Scan aligned to the reference through the maxilla surface.
    Maxilla,
    /// Planned mandible registered onto the scan's mandibular region.
    Mandible,
}

impl fmt::Display for SplintStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplintStage::Maxilla => f.write_str("stage 1 (maxilla)"),
            SplintStage::Mandible => f.write_str("stage 2 (mandible)"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage}: {error}")]
pub struct SplintError {
    pub stage: SplintStage,
    pub error: RegistrationError,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplintParams {
    /// Fine ICP settings; the correspondence radius bounds the tolerance
    /// range used for the measurement.
    pub icp: IcpParams,
    /// Radius of the coarse mandible pass preceding the fine one.
    pub coarse_correspondence_mm: f64,
    /// Scan vertices closer than this to the aligned maxilla are not part
    /// of the mandibular region.
    pub maxilla_exclusion_mm: f64,
}

impl Default for SplintParams {
    fn default() -> Self {
        SplintParams {
            icp: IcpParams::default(),
            coarse_correspondence_mm: 10.0,
            maxilla_exclusion_mm: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplintMeasurement {
    /// Maps the planned mandible onto the realized one (reference frame).
    pub error: RigidTransform,
    /// Maps scan coordinates into the reference frame.
    pub scan_alignment: RigidTransform,
    pub maxilla: IcpResult,
    pub mandible_coarse: IcpResult,
    pub mandible: IcpResult,
}

/// Splint positioning error from one scan.
///
/// `scan_to_reference` is the initial guess for the scan pose (identity if
/// the scan is already roughly in the reference frame).
pub fn splint_positioning_error(
    planned_mandible: &TriangleMesh,
    measured_scan: &TriangleMesh,
    maxilla_ref: &TriangleMesh,
    scan_to_reference: &RigidTransform,
    params: &SplintParams,
) -> Result<SplintMeasurement, SplintError> {
    let stage1 = |error| SplintError {
        stage: SplintStage::Maxilla,
        error,
    };
    let stage2 = |error| SplintError {
        stage: SplintStage::Mandible,
        error,
    };

    let scan_index = SpatialIndex::build(measured_scan.clone())
        .map_err(|_| stage1(RegistrationError::EmptySource))?;
    let maxilla = icp(
        maxilla_ref.vertices(),
        &scan_index,
        &scan_to_reference.inverse(),
        &params.icp,
    )
    .map_err(stage1)?;
    let scan_alignment = maxilla.transform.inverse();

    let maxilla_index = SpatialIndex::build(maxilla_ref.clone())
        .map_err(|_| stage1(RegistrationError::EmptySource))?;
    let aligned = measured_scan.transformed(&scan_alignment);
    let exclusion = params.maxilla_exclusion_mm;
    let far_from_maxilla: Vec<bool> = aligned
        .vertices()
        .par_iter()
        .map(|p| maxilla_index.closest_within(p, exclusion).is_none())
        .collect();
    let region = aligned
        .filter_vertices(|i, _| far_from_maxilla[i])
        .ok_or(stage2(RegistrationError::NoCorrespondences { iteration: 0 }))?;
    let region_index =
        SpatialIndex::build(region).map_err(|_| stage2(RegistrationError::NoCorrespondences { iteration: 0 }))?;

    let coarse_params = params.icp.with_radius(params.coarse_correspondence_mm.max(params.icp.max_correspondence_mm));
    let mandible_coarse = icp(
        planned_mandible.vertices(),
        &region_index,
        &RigidTransform::identity(),
        &coarse_params,
    )
    .map_err(stage2)?;
    let mandible = icp(
        planned_mandible.vertices(),
        &region_index,
        &mandible_coarse.transform,
        &params.icp,
    )
    .map_err(stage2)?;

    Ok(SplintMeasurement {
        error: mandible.transform,
        scan_alignment,
        maxilla,
        mandible_coarse,
        mandible,
    })
}
