//! Statistics of rigid-transform samples: Karcher mean on SE(3), tangent
//! residuals, per-component summaries, PCA ellipsoids and Mahalanobis
//! distances.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::{exp_rotation, exp_se3, log_rotation, log_se3, RigidTransform, RotationVector, Se3Error, Se3Mode, TangentVector};

/// 0.95 quantile of χ² with 3 degrees of freedom, as tabulated to 4 decimals.
pub const CHI2_95_3: f64 = 7.8147;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("Karcher mean did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: RigidTransform,
    },
    #[error("sample {index}: rotation relative to the mean is too close to pi ({theta})")]
    ThetaNearPi { index: usize, theta: f64 },
    #[error("duplicate sample ({splint_id}, {repeat_id})")]
    DuplicateSample { splint_id: String, repeat_id: String },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("all residuals coincide; covariance is zero")]
    RankDeficient,
    #[error("covariance is singular after regularization")]
    SingularCovariance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformSample {
    pub splint_id: String,
    pub repeat_id: String,
    pub transform: RigidTransform,
}

impl TransformSample {
    pub fn new(splint_id: impl Into<String>, repeat_id: impl Into<String>, transform: RigidTransform) -> Self {
        TransformSample {
            splint_id: splint_id.into(),
            repeat_id: repeat_id.into(),
            transform,
        }
    }
}

pub fn check_unique(samples: &[TransformSample]) -> Result<(), StatsError> {
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert((s.splint_id.as_str(), s.repeat_id.as_str())) {
            return Err(StatsError::DuplicateSample {
                splint_id: s.splint_id.clone(),
                repeat_id: s.repeat_id.clone(),
            });
        }
    }
    Ok(())
}

/// `vᵢ = log(μ⁻¹·Tᵢ)`. In product mode the translation part is `tᵢ − t_μ`.
pub fn tangent_residuals(
    samples: &[RigidTransform],
    mean: &RigidTransform,
    mode: Se3Mode,
) -> Result<Vec<TangentVector>, StatsError> {
    let inv = mean.inverse();
    samples
        .par_iter()
        .enumerate()
        .map(|(index, t)| match mode {
            Se3Mode::Coupled => log_se3(&inv.compose(t), mode).map_err(|e| match e {
                Se3Error::ThetaNearPi { theta } => StatsError::ThetaNearPi { index, theta },
                _ => unreachable!("log of a valid transform only fails near pi"),
            }),
            Se3Mode::Product => {
                let w = log_rotation(&inv.rotation.compose(&t.rotation));
                Ok(TangentVector::new(w.0, t.translation - mean.translation))
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KarcherOptions {
    pub mode: Se3Mode,
    /// Bound on the norm of the mean tangent residual (rad and mm mixed).
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        KarcherOptions {
            mode: Se3Mode::Coupled,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KarcherMean {
    pub mean: RigidTransform,
    pub iterations: usize,
    /// Norm of the mean tangent residual at `mean`.
    pub residual: f64,
}

fn mean_tangent(v: &[TangentVector]) -> TangentVector {
    let mut acc = TangentVector::zero();
    for x in v {
        acc += *x;
    }
    acc * (1.0 / v.len() as f64)
}

fn update(mean: &RigidTransform, step: &TangentVector, mode: Se3Mode) -> RigidTransform {
    match mode {
        Se3Mode::Coupled => mean.compose(&exp_se3(step, mode)),
        // translation stays at the arithmetic mean
        Se3Mode::Product => RigidTransform::new(
            mean.rotation.compose(&exp_rotation(&RotationVector(step.rot))),
            mean.translation,
        ),
    }
}

/// Fixed-point Karcher mean `μ ← μ·exp(mean log(μ⁻¹Tᵢ))`, started at the
/// first sample. The step is halved while it fails to shrink the mean
/// residual, which is the quantity that vanishes at the fixed point.
pub fn karcher_mean(samples: &[RigidTransform], options: &KarcherOptions) -> Result<KarcherMean, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mode = options.mode;
    let mut mean = samples[0];
    if mode == Se3Mode::Product {
        let mut t = Vector3::zeros();
        for s in samples {
            t += s.translation;
        }
        mean.translation = t / samples.len() as f64;
    }
    let stationarity = |v: &TangentVector| match mode {
        Se3Mode::Coupled => v.norm(),
        Se3Mode::Product => v.rot.norm(),
    };

    let mut residuals = tangent_residuals(samples, &mean, mode)?;
    let mut residual = stationarity(&mean_tangent(&residuals));
    for iteration in 1..=options.max_iter {
        if residual < options.tol {
            return Ok(KarcherMean { mean, iterations: iteration, residual });
        }
        let step = mean_tangent(&residuals);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let candidate = update(&mean, &(step * alpha), mode);
            let r = tangent_residuals(samples, &candidate, mode)?;
            let rc = stationarity(&mean_tangent(&r));
            if rc < residual {
                accepted = Some((candidate, r, rc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((candidate, r, rc)) = accepted else { break };
        mean = candidate;
        residuals = r;
        residual = rc;
    }
    Err(StatsError::NoConvergence {
        iterations: options.max_iter,
        residual,
        last: mean,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdConvention {
    /// Divide by N − 1 (0 for a single sample).
    #[default]
    Sample,
    /// Divide by N.
    Population,
}

impl StdConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            StdConvention::Sample => "sample",
            StdConvention::Population => "population",
        }
    }

    fn denominator(&self, n: usize) -> Option<f64> {
        match self {
            StdConvention::Population => Some(n as f64),
            StdConvention::Sample if n > 1 => Some((n - 1) as f64),
            StdConvention::Sample => None,
        }
    }
}

impl FromStr for StdConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sample" => Ok(StdConvention::Sample),
            "population" => Ok(StdConvention::Population),
            _ => Err(format!("unknown std convention '{s}' (expected sample|population)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Tx,
    Ty,
    Tz,
    TNorm,
    Rx,
    Ry,
    Rz,
    Theta,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::Tx,
        Quantity::Ty,
        Quantity::Tz,
        Quantity::TNorm,
        Quantity::Rx,
        Quantity::Ry,
        Quantity::Rz,
        Quantity::Theta,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Quantity::Tx => "t_x",
            Quantity::Ty => "t_y",
            Quantity::Tz => "t_z",
            Quantity::TNorm => "t_norm",
            Quantity::Rx => "r_x",
            Quantity::Ry => "r_y",
            Quantity::Rz => "r_z",
            Quantity::Theta => "theta",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Quantity::Tx | Quantity::Ty | Quantity::Tz | Quantity::TNorm => "mm",
            _ => "deg",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// `(t_x, t_y, t_z, ‖t‖, r_x, r_y, r_z, θ)` with the rotation vector and
/// angle in degrees.
pub fn decompose(t: &RigidTransform) -> [f64; 8] {
    let r = t.rotation.log();
    let d = r.degrees();
    [
        t.translation.x,
        t.translation.y,
        t.translation.z,
        t.translation.norm(),
        d.x,
        d.y,
        d.z,
        r.angle_degrees(),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Even counts average the two middle values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn summarize(values: &[f64], convention: StdConvention) -> Result<Summary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    let std = convention.denominator(values.len()).map_or(0.0, |d| (ss / d).sqrt());
    Ok(Summary {
        n: values.len(),
        mean: m,
        std,
        median: median(values),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub quantity: Quantity,
    /// The quantity evaluated on the supplied mean transform.
    pub karcher: f64,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub n: usize,
    pub convention: StdConvention,
    pub rows: Vec<ComponentRow>,
}

impl ComponentStats {
    pub fn row(&self, q: Quantity) -> &ComponentRow {
        self.rows.iter().find(|r| r.quantity == q).expect("every quantity has a row")
    }
}

pub fn component_stats(
    samples: &[TransformSample],
    karcher: &RigidTransform,
    convention: StdConvention,
) -> Result<ComponentStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let per_sample: Vec<[f64; 8]> = samples.iter().map(|s| decompose(&s.transform)).collect();
    let k = decompose(karcher);
    let rows = Quantity::ALL
        .iter()
        .enumerate()
        .map(|(j, &quantity)| {
            let column: Vec<f64> = per_sample.iter().map(|d| d[j]).collect();
            Ok(ComponentRow {
                quantity,
                karcher: k[j],
                summary: summarize(&column, convention)?,
            })
        })
        .collect::<Result<Vec<_>, StatsError>>()?;
    Ok(ComponentStats {
        n: samples.len(),
        convention,
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaSpace {
    /// mm
    Translation,
    /// deg
    Rotation,
}

impl PcaSpace {
    pub fn as_str(&self) -> &'static str {
        match self {
            PcaSpace::Translation => "translation",
            PcaSpace::Rotation => "rotation",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            PcaSpace::Translation => "mm",
            PcaSpace::Rotation => "deg",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaEllipsoid {
    pub space: PcaSpace,
    pub n: usize,
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    /// Descending.
    pub eigenvalues: [f64; 3],
    pub shares: [f64; 3],
    pub r95: [f64; 3],
    /// Unit columns matching `eigenvalues`; largest-magnitude entry positive.
    pub eigenvectors: [Vector3<f64>; 3],
    pub rank: usize,
}

fn fix_sign(v: Vector3<f64>) -> Vector3<f64> {
    let i = v.iamax();
    if v[i] < 0.0 {
        -v
    } else {
        v
    }
}

impl PcaEllipsoid {
    /// Derived quantities from given variances along the coordinate axes.
    pub fn from_eigenvalues(space: PcaSpace, eigenvalues: [f64; 3]) -> Self {
        let mut ev = eigenvalues;
        ev.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = ev.iter().sum();
        let rank = ev.iter().filter(|&&l| l > 1e-12 * ev[0]).count();
        PcaEllipsoid {
            space,
            n: 0,
            mean: Vector3::zeros(),
            covariance: Matrix3::from_diagonal(&Vector3::from(ev)),
            eigenvalues: ev,
            shares: ev.map(|l| if total > 0.0 { l / total } else { 0.0 }),
            r95: ev.map(|l| (CHI2_95_3 * l).sqrt()),
            eigenvectors: [Vector3::x(), Vector3::y(), Vector3::z()],
            rank,
        }
    }

    pub fn mahalanobis(&self, x: &Vector3<f64>) -> Result<f64, StatsError> {
        mahalanobis(x, &self.mean, &self.covariance)
    }
}

/// PCA of 3-vectors about their mean. Zero-variance directions are kept
/// with zero share and reported through `rank`.
pub fn pca_ellipsoid(
    points: &[Vector3<f64>],
    space: PcaSpace,
    convention: StdConvention,
) -> Result<PcaEllipsoid, StatsError> {
    if points.len() < 3 {
        return Err(StatsError::TooFewSamples { needed: 3, got: points.len() });
    }
    let n = points.len();
    let mut mean = Vector3::zeros();
    for p in points {
        mean += p;
    }
    mean /= n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        cov += (p - mean) * (p - mean).transpose();
    }
    cov /= convention.denominator(n).expect("n >= 3");
    let cov = (cov + cov.transpose()) * 0.5;
    if cov.trace() <= 0.0 {
        return Err(StatsError::RankDeficient);
    }

    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = idx.map(|i| eig.eigenvalues[i].max(0.0));
    let eigenvectors = idx.map(|i| fix_sign(eig.eigenvectors.column(i).normalize()));
    let total: f64 = eigenvalues.iter().sum();
    let rank = eigenvalues.iter().filter(|&&l| l > 1e-12 * eigenvalues[0]).count();
    if rank < 3 {
        log::warn!("{} PCA is rank deficient (rank {rank})", space.as_str());
    }
    Ok(PcaEllipsoid {
        space,
        n,
        mean,
        covariance: cov,
        eigenvalues,
        shares: eigenvalues.map(|l| l / total),
        r95: eigenvalues.map(|l| (CHI2_95_3 * l).sqrt()),
        eigenvectors,
        rank,
    })
}

/// `√((x−μ)ᵀΣ⁻¹(x−μ))`, regularizing `Σ` by `1e-12·tr(Σ)·I` if it is not
/// positive definite.
pub fn mahalanobis(x: &Vector3<f64>, mean: &Vector3<f64>, cov: &Matrix3<f64>) -> Result<f64, StatsError> {
    let d = x - mean;
    let chol = Cholesky::new(*cov)
        .or_else(|| Cholesky::new(cov + Matrix3::identity() * (1e-12 * cov.trace())))
        .ok_or(StatsError::SingularCovariance)?;
    let y = chol.solve(&d);
    Ok(d.dot(&y).max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub median: f64,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..=self.counts.len()).map(|i| self.lo + i as f64 * w).collect()
    }
}

/// Uniform bins over `[min, max]`; a constant input gives one bin.
pub fn histogram(values: &[f64], bin_count: usize) -> Result<Histogram, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = if hi > lo { bin_count.max(1) } else { 1 };
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for v in values {
        let i = if width > 0.0 { ((v - lo) / width).floor() as usize } else { 0 };
        counts[i.min(bins - 1)] += 1;
    }
    Ok(Histogram {
        lo,
        hi,
        counts,
        mean: mean(values),
        median: median(values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Rotation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    fn random_tangent(rng: &mut impl Rng, rot: f64, trans: f64) -> TangentVector {
        let mut u = || rng.random_range(-1.0..1.0);
        TangentVector::new(Vector3::new(u(), u(), u()) * rot, Vector3::new(u(), u(), u()) * trans)
    }

    fn close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
        (a.rotation.matrix() - b.rotation.matrix()).amax() < tol && (a.translation - b.translation).amax() < tol
    }

    #[test]
    fn identical_samples_are_a_fixed_point() {
        let t = RigidTransform::new(Rotation::about_axis(&Vector3::new(1.0, 2.0, 3.0), 0.4), Vector3::new(1.0, -2.0, 0.5));
        for mode in [Se3Mode::Coupled, Se3Mode::Product] {
            let k = karcher_mean(&[t; 5], &KarcherOptions { mode, ..Default::default() }).unwrap();
            assert!(close(&k.mean, &t, 1e-12));
            assert_eq!(k.iterations, 1);
        }
    }

    #[test]
    fn symmetric_pair_averages_to_identity() {
        let s = [
            RigidTransform::from_rotation(Rotation::rz(deg(10.0))),
            RigidTransform::from_rotation(Rotation::rz(deg(-10.0))),
        ];
        for mode in [Se3Mode::Coupled, Se3Mode::Product] {
            let k = karcher_mean(&s, &KarcherOptions { mode, ..Default::default() }).unwrap();
            assert!((k.mean.rotation.matrix() - Matrix3::identity()).amax() < 1e-9);
        }
    }

    #[test]
    fn empty_input() {
        assert_eq!(karcher_mean(&[], &KarcherOptions::default()), Err(StatsError::EmptyInput));
    }

    #[test]
    fn symmetric_perturbations_recover_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let center = RigidTransform::new(Rotation::about_axis(&Vector3::new(-0.1, 0.5, 0.8), deg(1.3)), Vector3::new(-1.9, -0.4, -0.4));
        for mode in [Se3Mode::Coupled, Se3Mode::Product] {
            let mut samples = Vec::new();
            for _ in 0..16 {
                let w = random_tangent(&mut rng, deg(3.0), 3.0);
                if mode == Se3Mode::Coupled {
                    samples.push(center.compose(&exp_se3(&w, mode)));
                    samples.push(center.compose(&exp_se3(&-w, mode)));
                } else {
                    let r = exp_rotation(&RotationVector(w.rot));
                    let r_neg = exp_rotation(&RotationVector(-w.rot));
                    samples.push(RigidTransform::new(center.rotation.compose(&r), center.translation + w.trans));
                    samples.push(RigidTransform::new(center.rotation.compose(&r_neg), center.translation - w.trans));
                }
            }
            let k = karcher_mean(&samples, &KarcherOptions { mode, ..Default::default() }).unwrap();
            assert!(close(&k.mean, &center, 1e-9), "{mode}");
        }
    }

    #[test]
    fn stationarity_and_product_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<_> = (0..32).map(|_| exp_se3(&random_tangent(&mut rng, deg(4.0), 5.0), Se3Mode::Coupled)).collect();
        let opts = KarcherOptions::default();
        let k = karcher_mean(&samples, &opts).unwrap();
        let r = tangent_residuals(&samples, &k.mean, Se3Mode::Coupled).unwrap();
        assert!(mean_tangent(&r).norm() < opts.tol);

        let k = karcher_mean(&samples, &KarcherOptions { mode: Se3Mode::Product, ..opts }).unwrap();
        let mut t = Vector3::zeros();
        for s in &samples {
            t += s.translation;
        }
        assert_eq!(k.mean.translation, t / 32.0);
    }

    #[test]
    fn no_convergence_reports_last_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let samples: Vec<_> = (0..8).map(|_| exp_se3(&random_tangent(&mut rng, 0.5, 5.0), Se3Mode::Coupled)).collect();
        let err = karcher_mean(&samples, &KarcherOptions { max_iter: 1, ..Default::default() }).unwrap_err();
        assert!(matches!(err, StatsError::NoConvergence { iterations: 1, residual, .. } if residual > 0.0));
    }

    #[test]
    fn residual_matches_matrix_arithmetic() {
        let mean = RigidTransform::new(Rotation::ry(0.3), Vector3::new(1.0, 2.0, 3.0));
        let sample = RigidTransform::new(Rotation::about_axis(&Vector3::new(1.0, 1.0, 0.0), 0.5), Vector3::new(-1.0, 0.0, 4.0));
        let v = tangent_residuals(&[sample, mean], &mean, Se3Mode::Coupled).unwrap();
        assert_eq!(v[1].norm(), 0.0);
        let rel = mean.to_homogeneous().try_inverse().unwrap() * sample.to_homogeneous();
        let rel = RigidTransform::from_row_major(&rel.transpose().as_slice().try_into().unwrap(), 1e-9).unwrap().0;
        let expected = log_se3(&rel, Se3Mode::Coupled).unwrap();
        assert!((v[0] - expected).norm() < 1e-12);
        // product mode: rotation part from Rᵀ·Rᵢ, translation a plain difference
        let p = tangent_residuals(&[sample], &mean, Se3Mode::Product).unwrap();
        let rot = log_rotation(&Rotation::from_matrix(mean.rotation.matrix().transpose() * sample.rotation.matrix()).unwrap());
        assert!((p[0].rot - rot.0).norm() < 1e-12);
        assert_eq!(p[0].trans, Vector3::new(-2.0, -2.0, 1.0));
    }

    #[test]
    fn rotation_is_bi_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let samples: Vec<_> = (0..20).map(|_| exp_se3(&random_tangent(&mut rng, deg(5.0), 3.0), Se3Mode::Coupled)).collect();
        let q = RigidTransform::new(Rotation::about_axis(&Vector3::new(0.2, -1.0, 0.4), 1.1), Vector3::new(3.0, 1.0, -2.0));
        let conj: Vec<_> = samples.iter().map(|s| q.compose(s).compose(&q.inverse())).collect();
        for mode in [Se3Mode::Coupled, Se3Mode::Product] {
            let opts = KarcherOptions { mode, ..Default::default() };
            let a = karcher_mean(&samples, &opts).unwrap().mean;
            let b = karcher_mean(&conj, &opts).unwrap().mean;
            let expected = q.compose(&a).compose(&q.inverse());
            assert!((b.rotation.matrix() - expected.rotation.matrix()).amax() < 10.0 * opts.tol);
            if mode == Se3Mode::Coupled {
                assert!((b.translation - expected.translation).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0], StdConvention::Population).unwrap();
        assert_eq!((s.median, s.min, s.max, s.mean), (2.5, 1.0, 4.0, 2.5));
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
        let s = summarize(&[4.0, 1.0, 3.0, 2.0], StdConvention::Sample).unwrap();
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let s = summarize(&[7.0], StdConvention::Sample).unwrap();
        assert_eq!((s.mean, s.median, s.min, s.max, s.std), (7.0, 7.0, 7.0, 7.0, 0.0));
        assert_eq!(median(&[5.0, -1.0, 2.0]), 2.0);
    }

    #[test]
    fn component_stats_single_and_four_samples() {
        let t = RigidTransform::new(Rotation::rz(deg(2.0)), Vector3::new(3.0, 4.0, 0.0));
        let one = component_stats(&[TransformSample::new("a", "1", t)], &t, StdConvention::Sample).unwrap();
        for row in &one.rows {
            let s = row.summary;
            assert!(s.mean == s.median && s.min == s.max && s.mean == row.karcher && s.std == 0.0);
        }
        assert!((one.row(Quantity::TNorm).karcher - 5.0).abs() < 1e-15);
        assert!((one.row(Quantity::Theta).karcher - 2.0).abs() < 1e-12);

        let xs = [1.0, -2.0, 5.0, 0.5];
        let samples: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| TransformSample::new("s", i.to_string(), RigidTransform::new(Rotation::rx(deg(x)), Vector3::new(x, 0.0, 0.0))))
            .collect();
        let stats = component_stats(&samples, &RigidTransform::identity(), StdConvention::Sample).unwrap();
        // sorted: -2, 0.5, 1, 5
        assert_eq!(stats.row(Quantity::Tx).summary.median, 0.75);
        assert_eq!(stats.row(Quantity::TNorm).summary.median, 1.5);
        assert!((stats.row(Quantity::Rx).summary.median - 0.75).abs() < 1e-12);
        assert!((stats.row(Quantity::Theta).summary.median - 1.5).abs() < 1e-12);
    }

    #[test]
    fn duplicate_samples_rejected() {
        let t = RigidTransform::identity();
        let s = [TransformSample::new("A", "3t", t), TransformSample::new("A", "3t", t)];
        assert!(matches!(check_unique(&s), Err(StatsError::DuplicateSample { .. })));
    }

    #[test]
    fn derived_ellipsoid_quantities() {
        let e = PcaEllipsoid::from_eigenvalues(PcaSpace::Translation, [0.3477, 2.4358, 0.7820]);
        assert_eq!(e.eigenvalues, [2.4358, 0.7820, 0.3477]);
        assert!((e.shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (r, l) in e.r95.iter().zip(e.eigenvalues) {
            assert!((r / l.sqrt() - 2.7955).abs() < 1e-4);
        }
    }

    #[test]
    fn mahalanobis_examples() {
        let z = Vector3::zeros();
        assert_eq!(mahalanobis(&z, &z, &Matrix3::identity()).unwrap(), 0.0);
        assert!((mahalanobis(&Vector3::new(3.0, 0.0, 0.0), &z, &Matrix3::identity()).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(mahalanobis(&Vector3::x(), &z, &Matrix3::zeros()), Err(StatsError::SingularCovariance));
        // singular but regularizable along the null direction
        let flat = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert!((mahalanobis(&Vector3::new(0.0, 2.0, 0.0), &z, &flat).unwrap() - 2.0).abs() < 1e-9);
    }

    fn cloud(rng: &mut impl Rng, n: usize, scales: Vector3<f64>) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                let g: Vector3<f64> = Vector3::from_fn(|_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
                g.component_mul(&scales) + Vector3::new(1.0, -2.0, 0.5)
            })
            .collect()
    }

    #[test]
    fn ellipsoid_surface_has_chi_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = pca_ellipsoid(&cloud(&mut rng, 200, Vector3::new(3.0, 1.0, 0.5)), PcaSpace::Translation, StdConvention::Sample).unwrap();
        for i in 0..3 {
            let p = e.mean + e.eigenvectors[i] * e.r95[i];
            assert!((e.mahalanobis(&p).unwrap() - CHI2_95_3.sqrt()).abs() < 1e-6);
        }
        for i in 0..3 {
            for j in 0..3 {
                let d = e.eigenvectors[i].dot(&e.eigenvectors[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
            }
            assert!(e.eigenvectors[i][e.eigenvectors[i].iamax()] > 0.0);
        }
    }

    #[test]
    fn isotropic_cloud_has_equal_shares() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = pca_ellipsoid(&cloud(&mut rng, 20000, Vector3::new(1.0, 1.0, 1.0)), PcaSpace::Rotation, StdConvention::Sample).unwrap();
        for s in e.shares {
            assert!((s - 1.0 / 3.0).abs() < 0.02);
        }
        assert!((e.r95[0] - e.r95[2]).abs() / e.r95[0] < 0.05);
    }

    #[test]
    fn pca_rank_handling() {
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let e = pca_ellipsoid(&line, PcaSpace::Translation, StdConvention::Sample).unwrap();
        assert_eq!(e.rank, 1);
        assert_eq!(e.shares[0], 1.0);
        assert_eq!(e.shares[2], 0.0);
        let same = vec![Vector3::new(1.0, 1.0, 1.0); 4];
        assert_eq!(pca_ellipsoid(&same, PcaSpace::Translation, StdConvention::Sample), Err(StatsError::RankDeficient));
        assert!(matches!(pca_ellipsoid(&line[..2], PcaSpace::Translation, StdConvention::Sample), Err(StatsError::TooFewSamples { .. })));
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[2.0; 10], 8).unwrap();
        assert_eq!(h.counts, vec![10]);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let h = histogram(&v, 10).unwrap();
        assert_eq!(h.counts, vec![10; 10]);
        let s = summarize(&v, StdConvention::Sample).unwrap();
        assert_eq!((h.mean, h.median), (s.mean, s.median));
        assert_eq!(histogram(&[], 4), Err(StatsError::EmptyInput));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn pca_is_rotation_equivariant(seed in any::<u64>(), axis in prop::array::uniform3(-1.0..1.0f64), angle in 0.1..3.0f64) {
            prop_assume!(Vector3::from(axis).norm() > 0.1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = cloud(&mut rng, 40, Vector3::new(3.0, 1.5, 0.5));
            let q = Rotation::about_axis(&Vector3::from(axis), angle);
            let rotated: Vec<_> = pts.iter().map(|p| q.rotate(p)).collect();
            let a = pca_ellipsoid(&pts, PcaSpace::Translation, StdConvention::Sample).unwrap();
            let b = pca_ellipsoid(&rotated, PcaSpace::Translation, StdConvention::Sample).unwrap();
            for i in 0..3 {
                prop_assert!((a.eigenvalues[i] - b.eigenvalues[i]).abs() < 1e-9 * a.eigenvalues[0].max(1.0));
                let qa = q.rotate(&a.eigenvectors[i]);
                prop_assert!((qa.dot(&b.eigenvectors[i]).abs() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn summary_ordering(values in prop::collection::vec(-100.0..100.0f64, 1..50)) {
            let s = summarize(&values, StdConvention::Sample).unwrap();
            prop_assert!(s.min <= s.median && s.median <= s.max && s.std >= 0.0);
            let h = histogram(&values, 7).unwrap();
            prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
        }
    }
}
