//! End-to-end pipeline: scans to positioning errors, errors to statistics,
//! planned and measured poses to joint distance maps.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{
    fixed, write_component_stats_csv, write_histogram_csv, write_joint_summary_csv, write_json, write_pca_csv,
    write_samples_csv,
};
use crate::lie_stats::{
    component_stats, histogram, karcher_mean, pca_ellipsoid, ComponentStats, Histogram, KarcherMean, KarcherOptions,
    PcaEllipsoid, PcaSpace, StatsError, StdConvention, TransformSample,
};
use crate::registration::{splint_positioning_error, SplintError, SplintParams};
use crate::se3::RigidTransform;
use crate::mesh::TriangleMesh;
use crate::synth::Scenario;
use crate::tmj_sim::{joint_report, joint_summary, JointModel, JointReport, JointSummary, TmjError, JOINT_ROI};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{splint_id} {repeat_id}: {source}")]
    Splint {
        splint_id: String,
        repeat_id: String,
        #[source]
        source: SplintError,
    },
    #[error("{splint_id} {repeat_id}: {source}")]
    Joint {
        splint_id: String,
        repeat_id: String,
        #[source]
        source: TmjError,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Tmj(#[from] TmjError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub splint: SplintParams,
    pub karcher: KarcherOptions,
    pub convention: StdConvention,
    pub roi: Option<(f64, f64)>,
    pub histogram_bins: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            splint: SplintParams::default(),
            karcher: KarcherOptions::default(),
            convention: StdConvention::Sample,
            roi: Some(JOINT_ROI),
            histogram_bins: 10,
        }
    }
}

/// A recovered positioning error, next to the injected one when known.
#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    pub splint_id: String,
    pub repeat_id: String,
    pub recovered: RigidTransform,
    pub ground_truth: Option<RigidTransform>,
    /// `‖t_rec − t_gt‖`.
    pub translation_error_mm: Option<f64>,
    /// Angle of `R_rec·R_gtᵀ`.
    pub rotation_error_deg: Option<f64>,
    pub scan_rms_mm: f64,
}

/// One splint scan to measure.
#[derive(Clone, Debug)]
pub struct ScanCase<'a> {
    pub splint_id: String,
    pub repeat_id: String,
    /// Planned mandible pose in the reference frame.
    pub planned: RigidTransform,
    pub scan: &'a TriangleMesh,
    pub ground_truth: Option<RigidTransform>,
}

/// Two-stage splint registration on every scan. Scans are assumed roughly
/// in the reference frame.
pub fn measure_scans(
    maxilla: &TriangleMesh,
    mandible: &TriangleMesh,
    cases: &[ScanCase<'_>],
    params: &SplintParams,
) -> Result<Vec<Recovery>, PipelineError> {
    cases
        .par_iter()
        .map(|c| {
            let planned_mandible = mandible.transformed(&c.planned);
            let m = splint_positioning_error(&planned_mandible, c.scan, maxilla, &RigidTransform::identity(), params)
                .map_err(|source| PipelineError::Splint {
                    splint_id: c.splint_id.clone(),
                    repeat_id: c.repeat_id.clone(),
                    source,
                })?;
            let gt = c.ground_truth;
            Ok(Recovery {
                splint_id: c.splint_id.clone(),
                repeat_id: c.repeat_id.clone(),
                recovered: m.error,
                ground_truth: gt,
                translation_error_mm: gt.map(|g| (m.error.translation - g.translation).norm()),
                rotation_error_deg: gt.map(|g| m.error.rotation.compose(&g.rotation.inverse()).log().angle_degrees()),
                scan_rms_mm: m.mandible.rms_mm,
            })
        })
        .collect()
}

fn scenario_cases(scenario: &Scenario) -> Vec<ScanCase<'_>> {
    scenario
        .samples
        .iter()
        .map(|s| ScanCase {
            splint_id: s.splint_id.clone(),
            repeat_id: s.repeat_id.clone(),
            planned: s.planned,
            scan: &s.scan,
            ground_truth: Some(s.ground_truth_error),
        })
        .collect()
}

/// Runs the two-stage splint registration on every scan of the scenario.
pub fn evaluate_scenario(scenario: &Scenario, params: &SplintParams) -> Result<Vec<Recovery>, PipelineError> {
    let p = &scenario.phantom;
    measure_scans(&p.maxilla_arch, &p.mandible_arch, &scenario_cases(scenario), params)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MahalanobisRow {
    pub splint_id: String,
    pub repeat_id: String,
    pub translation: f64,
    pub rotation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsReport {
    pub karcher: KarcherMean,
    pub components: ComponentStats,
    /// Absent below three samples.
    pub translation_pca: Option<PcaEllipsoid>,
    pub rotation_pca: Option<PcaEllipsoid>,
    pub mahalanobis: Vec<MahalanobisRow>,
    pub t_norm_histogram: Histogram,
    pub theta_histogram: Histogram,
}

/// Translation (mm) and rotation vector (deg) of each sample.
pub fn pca_points(samples: &[TransformSample]) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    samples
        .iter()
        .map(|s| (s.transform.translation, s.transform.rotation.log().0.map(f64::to_degrees)))
        .unzip()
}

pub fn analyze_samples(samples: &[TransformSample], options: &PipelineOptions) -> Result<StatsReport, StatsError> {
    crate::lie_stats::check_unique(samples)?;
    let transforms: Vec<RigidTransform> = samples.iter().map(|s| s.transform).collect();
    let karcher = karcher_mean(&transforms, &options.karcher)?;
    let components = component_stats(samples, &karcher.mean, options.convention)?;

    let (t, r) = pca_points(samples);
    let pca = |points: &[Vector3<f64>], space| match pca_ellipsoid(points, space, options.convention) {
        Ok(e) => Ok(Some(e)),
        Err(StatsError::TooFewSamples { .. } | StatsError::RankDeficient) => {
            log::warn!("{} PCA skipped for {} samples", space.as_str(), points.len());
            Ok(None)
        }
        Err(e) => Err(e),
    };
    let translation_pca = pca(&t, PcaSpace::Translation)?;
    let rotation_pca = pca(&r, PcaSpace::Rotation)?;
    let mut mahalanobis = Vec::new();
    if let (Some(tp), Some(rp)) = (&translation_pca, &rotation_pca) {
        for (i, s) in samples.iter().enumerate() {
            mahalanobis.push(MahalanobisRow {
                splint_id: s.splint_id.clone(),
                repeat_id: s.repeat_id.clone(),
                translation: tp.mahalanobis(&t[i])?,
                rotation: rp.mahalanobis(&r[i])?,
            });
        }
    }
    let t_norm: Vec<f64> = t.iter().map(|v| v.norm()).collect();
    let theta: Vec<f64> = transforms.iter().map(|x| x.angle_degrees()).collect();
    Ok(StatsReport {
        karcher,
        components,
        translation_pca,
        rotation_pca,
        mahalanobis,
        t_norm_histogram: histogram(&t_norm, options.histogram_bins)?,
        theta_histogram: histogram(&theta, options.histogram_bins)?,
    })
}

#[derive(Serialize)]
struct KarcherJson {
    matrix: Vec<f64>,
    iterations: usize,
    residual: f64,
    n: usize,
}

/// CSV and JSON files describing a statistics report, keyed by file name.
pub fn stats_outputs(report: &StatsReport) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    out.insert(
        "karcher_mean.json".into(),
        write_json(&KarcherJson {
            matrix: report.karcher.mean.to_row_major().to_vec(),
            iterations: report.karcher.iterations,
            residual: report.karcher.residual,
            n: report.components.n,
        }),
    );
    out.insert("component_stats.csv".into(), write_component_stats_csv(&report.components));
    let pcas: Vec<PcaEllipsoid> = [&report.translation_pca, &report.rotation_pca].into_iter().flatten().cloned().collect();
    out.insert("pca.csv".into(), write_pca_csv(&pcas));
    let mut m = String::from("splint_id,repeat_id,mahalanobis_translation,mahalanobis_rotation\n");
    for row in &report.mahalanobis {
        m += &format!("{},{},{},{}\n", row.splint_id, row.repeat_id, fixed(row.translation), fixed(row.rotation));
    }
    out.insert("mahalanobis.csv".into(), m);
    out.insert("histogram_t_norm.csv".into(), write_histogram_csv(&report.t_norm_histogram));
    out.insert("histogram_theta.csv".into(), write_histogram_csv(&report.theta_histogram));
    out
}

/// One planned/measured mandible pose pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PosePair {
    pub splint_id: String,
    pub repeat_id: String,
    pub planned: RigidTransform,
    pub measured: RigidTransform,
}

/// Joint reports for every pose pair and joint, ordered by pair then joint.
pub fn simulate_joints(
    joints: &[JointModel],
    pairs: &[PosePair],
    roi: Option<(f64, f64)>,
) -> Result<(Vec<JointReport>, JointSummary), PipelineError> {
    let jobs: Vec<(&PosePair, &JointModel)> = pairs.iter().flat_map(|p| joints.iter().map(move |j| (p, j))).collect();
    let reports = jobs
        .par_iter()
        .map(|(p, j)| {
            joint_report(j, &p.splint_id, &p.repeat_id, &p.planned, &p.measured, roi).map_err(|source| {
                PipelineError::Joint {
                    splint_id: p.splint_id.clone(),
                    repeat_id: p.repeat_id.clone(),
                    source,
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = joint_summary(&reports)?;
    Ok((reports, summary))
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub recoveries: Vec<Recovery>,
    pub stats: StatsReport,
    pub reports: Vec<JointReport>,
    pub summary: JointSummary,
}

/// Everything a full run needs, independent of where it came from.
#[derive(Clone, Debug)]
pub struct PipelineInputs<'a> {
    pub maxilla: &'a TriangleMesh,
    pub mandible: &'a TriangleMesh,
    pub joints: &'a [JointModel],
    pub cases: Vec<ScanCase<'a>>,
}

/// Registration, statistics and joint simulation. The measured pose of each
/// joint simulation is the recovered error applied to the planned pose.
pub fn run_pipeline_on(inputs: &PipelineInputs<'_>, options: &PipelineOptions) -> Result<PipelineRun, PipelineError> {
    let recoveries = measure_scans(inputs.maxilla, inputs.mandible, &inputs.cases, &options.splint)?;
    let samples: Vec<TransformSample> = recoveries
        .iter()
        .map(|r| TransformSample::new(r.splint_id.as_str(), r.repeat_id.as_str(), r.recovered))
        .collect();
    let stats = analyze_samples(&samples, options)?;
    let pairs: Vec<PosePair> = inputs
        .cases
        .iter()
        .zip(&recoveries)
        .map(|(c, r)| PosePair {
            splint_id: c.splint_id.clone(),
            repeat_id: c.repeat_id.clone(),
            planned: c.planned,
            measured: r.recovered.compose(&c.planned),
        })
        .collect();
    let (reports, summary) = simulate_joints(inputs.joints, &pairs, options.roi)?;
    Ok(PipelineRun {
        recoveries,
        stats,
        reports,
        summary,
    })
}

pub fn run_pipeline(scenario: &Scenario, options: &PipelineOptions) -> Result<PipelineRun, PipelineError> {
    let joints = [scenario.phantom.left.model.clone(), scenario.phantom.right.model.clone()];
    let inputs = PipelineInputs {
        maxilla: &scenario.phantom.maxilla_arch,
        mandible: &scenario.phantom.mandible_arch,
        joints: &joints,
        cases: scenario_cases(scenario),
    };
    run_pipeline_on(&inputs, options)
}

impl PipelineRun {
    /// Every text output of the run, keyed by file name.
    pub fn outputs(&self) -> BTreeMap<String, String> {
        let samples: Vec<TransformSample> = self
            .recoveries
            .iter()
            .map(|r| TransformSample::new(r.splint_id.as_str(), r.repeat_id.as_str(), r.recovered))
            .collect();
        let mut out = stats_outputs(&self.stats);
        out.insert("samples.csv".into(), write_samples_csv(&samples));
        let mut rec = String::from("splint_id,repeat_id,translation_error_mm,rotation_error_deg,scan_rms_mm\n");
        for r in &self.recoveries {
            let opt = |v: Option<f64>| v.map(fixed).unwrap_or_default();
            rec += &format!(
                "{},{},{},{},{}\n",
                r.splint_id,
                r.repeat_id,
                opt(r.translation_error_mm),
                opt(r.rotation_error_deg),
                fixed(r.scan_rms_mm)
            );
        }
        out.insert("recovery.csv".into(), rec);
        out.insert("joint_summary.csv".into(), write_joint_summary_csv(&self.summary));
        out
    }
}
