//! Pipeline configuration: TOML file, then command-line overrides.
//! Relative paths in a config file are resolved against its directory.

use std::path::{Path, PathBuf};

use jawkit::lie_stats::{KarcherOptions, StdConvention};
use jawkit::pipeline::PipelineOptions;
use jawkit::registration::{IcpParams, SplintParams};
use jawkit::se3::Se3Mode;
use jawkit::synth::{ErrorBounds, NoiseModel, PhantomParams, ScenarioOptions};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorScale {
    /// Upper end of the distance ramp (lower end is 0).
    pub distance_max_mm: f64,
    /// Difference maps span `±diff_limit_mm`.
    pub diff_limit_mm: f64,
}

impl Default for ColorScale {
    fn default() -> Self {
        ColorScale { distance_max_mm: 10.0, diff_limit_mm: 2.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeCheckConfig {
    /// Loops beyond either threshold fail with exit code 2; unset means report only.
    pub max_theta_deg: Option<f64>,
    pub max_t_norm_mm: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Zero,
    Isotropic,
    #[default]
    Clinical,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub splints: usize,
    pub repeats: usize,
    pub jitter_sigma_mm: f64,
    pub scan_pose_deg: f64,
    pub scan_pose_mm: f64,
    pub noise: NoiseKind,
    /// Used by the isotropic model.
    pub rot_sd_deg: f64,
    pub trans_sd_mm: f64,
    pub bounds: Option<ErrorBounds>,
    pub phantom: PhantomParams,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        let o = ScenarioOptions::default();
        FixtureConfig {
            splints: o.splints,
            repeats: o.repeats,
            jitter_sigma_mm: o.jitter_sigma_mm,
            scan_pose_deg: o.scan_pose_deg,
            scan_pose_mm: o.scan_pose_mm,
            noise: NoiseKind::Clinical,
            rot_sd_deg: 1.0,
            trans_sd_mm: 1.0,
            bounds: None,
            phantom: PhantomParams::default(),
        }
    }
}

impl FixtureConfig {
    pub fn noise_model(&self) -> NoiseModel {
        match self.noise {
            NoiseKind::Zero => NoiseModel::zero(),
            NoiseKind::Isotropic => NoiseModel::isotropic(self.rot_sd_deg, self.trans_sd_mm),
            NoiseKind::Clinical => NoiseModel::clinical_like(),
        }
    }

    pub fn scenario_options(&self, seed: u64) -> ScenarioOptions {
        ScenarioOptions {
            splints: self.splints,
            repeats: self.repeats,
            jitter_sigma_mm: self.jitter_sigma_mm,
            scan_pose_deg: self.scan_pose_deg,
            scan_pose_mm: self.scan_pose_mm,
            bounds: self.bounds,
            seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub tree: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: u64,
    pub mode: Se3Mode,
    pub std: StdConvention,
    /// Distance-map tolerance band; larger magnitudes are masked.
    pub clamp_mm: Option<f64>,
    /// Region of interest of joint maps.
    pub roi: Option<[f64; 2]>,
    pub histogram_bins: usize,
    /// Write PNG heatmaps and SVG plots next to the tables.
    pub images: bool,
    pub icp: IcpParams,
    pub coarse_correspondence_mm: f64,
    pub maxilla_exclusion_mm: f64,
    pub colors: ColorScale,
    pub tree_check: TreeCheckConfig,
    pub fixture: FixtureConfig,
    pub paths: Paths,
}

impl Default for Config {
    fn default() -> Self {
        let splint = SplintParams::default();
        Config {
            out: None,
            jobs: None,
            seed: 0,
            mode: Se3Mode::Coupled,
            std: StdConvention::Sample,
            clamp_mm: Some(2.0),
            roi: Some([jawkit::tmj_sim::JOINT_ROI.0, jawkit::tmj_sim::JOINT_ROI.1]),
            histogram_bins: 10,
            images: true,
            icp: splint.icp,
            coarse_correspondence_mm: splint.coarse_correspondence_mm,
            maxilla_exclusion_mm: splint.maxilla_exclusion_mm,
            colors: ColorScale::default(),
            tree_check: TreeCheckConfig::default(),
            fixture: FixtureConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Parses `LO:HI`.
pub fn parse_roi(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got '{s}'"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("'{v}' is not a number"));
    Ok([p(lo)?, p(hi)?])
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: Config =
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        resolve(&mut config.out);
        resolve(&mut config.paths.manifest);
        resolve(&mut config.paths.tree);
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::config(format!("invalid configuration: {m}")));
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if let Some(c) = self.clamp_mm {
            if !(c > 0.0) {
                return bad(format!("clamp_mm must be positive, got {c}"));
            }
        }
        if let Some([lo, hi]) = self.roi {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("roi must satisfy LO < HI, got {lo}:{hi}"));
            }
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be at least 1".into());
        }
        if !(self.colors.distance_max_mm > 0.0 && self.colors.diff_limit_mm > 0.0) {
            return bad("color scale bounds must be positive".into());
        }
        if !(self.coarse_correspondence_mm > 0.0 && self.maxilla_exclusion_mm >= 0.0) {
            return bad("coarse_correspondence_mm must be positive, maxilla_exclusion_mm nonnegative".into());
        }
        self.icp.validate().map_err(|e| CliError::config(format!("invalid configuration: {e}")))?;
        let f = &self.fixture;
        if f.splints == 0 || f.repeats == 0 {
            return bad("fixture splints and repeats must be at least 1".into());
        }
        if !(f.jitter_sigma_mm >= 0.0 && f.scan_pose_deg >= 0.0 && f.scan_pose_mm >= 0.0) {
            return bad("fixture jitter and scan pose ranges must be nonnegative".into());
        }
        if !(f.rot_sd_deg >= 0.0 && f.trans_sd_mm >= 0.0) {
            return bad("fixture standard deviations must be nonnegative".into());
        }
        f.phantom.validate().map_err(|e| CliError::config(format!("invalid configuration: {e}")))?;
        for t in [&self.tree_check.max_theta_deg, &self.tree_check.max_t_norm_mm].into_iter().flatten() {
            if !(*t >= 0.0) {
                return bad("tree_check thresholds must be nonnegative".into());
            }
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("jawkit-out"))
    }

    pub fn roi(&self) -> Option<(f64, f64)> {
        self.roi.map(|[lo, hi]| (lo, hi))
    }

    pub fn splint_params(&self) -> SplintParams {
        SplintParams {
            icp: self.icp,
            coarse_correspondence_mm: self.coarse_correspondence_mm,
            maxilla_exclusion_mm: self.maxilla_exclusion_mm,
        }
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            splint: self.splint_params(),
            karcher: KarcherOptions { mode: self.mode, ..Default::default() },
            convention: self.std,
            roi: self.roi(),
            histogram_bins: self.histogram_bins,
        }
    }
}
