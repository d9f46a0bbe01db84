//! Parametric jaw and joint phantoms, SE(3) noise sampling, and complete
//! measurement scenarios with exact ground truth.
//!
//! Frame conventions: x lateral (left positive), y anterior, z superior.
//! The origin is the midpoint between the condyle centers, so rotations
//! about the x axis are hinge rotations about the transverse condylar axis.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Point3, SymmetricEigen, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{MeshError, TriangleMesh};
use crate::se3::{exp_se3, RigidTransform, Rotation, Se3Mode, TangentVector};
use crate::tmj_sim::{JointModel, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid phantom parameters: {0}")]
    InvalidPhantom(String),
    #[error("edge length {edge_mm} mm exceeds the smallest feature ({feature} = {feature_mm} mm)")]
    ResolutionTooCoarse {
        edge_mm: f64,
        feature: &'static str,
        feature_mm: f64,
    },
    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NonPsdCovariance { min_eigenvalue: f64 },
    #[error("covariance is not symmetric (max asymmetry {0:.3e})")]
    AsymmetricCovariance(f64),
    #[error("sample count must be at least 1")]
    InvalidCount,
    #[error("error bounds not met after {draws} draws")]
    BoundsUnreachable { draws: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomParams {
    /// Lateral, anteroposterior and vertical semi-axes.
    pub condyle_semi_axes_mm: [f64; 3],
    /// Left condyle center; the right one mirrors x.
    pub condyle_center_mm: [f64; 3],
    /// Fossa gap at the top of the condyle.
    pub gap_min_mm: f64,
    /// Fossa gap at the rim of the fossa.
    pub gap_max_mm: f64,
    /// Rim of the fossa as a polar angle of the ellipsoid parametrization.
    pub fossa_extent_deg: f64,
    pub arch_half_span_mm: f64,
    pub arch_depth_mm: f64,
    /// y of the incisal point of both arches.
    pub arch_front_y_mm: f64,
    /// z midway between the opposing cusp tips.
    pub occlusal_z_mm: f64,
    /// Vertical clearance between opposing cusp tips (splint thickness).
    pub occlusal_gap_mm: f64,
    pub ridge_half_width_mm: f64,
    pub ridge_height_mm: f64,
    pub cusp_height_mm: f64,
    pub tooth_pitch_mm: f64,
    /// Target edge length of the joint meshes.
    pub edge_mm: f64,
    /// Target edge length of the arch meshes.
    pub arch_edge_mm: f64,
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            condyle_semi_axes_mm: [10.0, 6.0, 7.0],
            condyle_center_mm: [50.0, 0.0, 0.0],
            gap_min_mm: 1.5,
            gap_max_mm: 4.0,
            fossa_extent_deg: 60.0,
            arch_half_span_mm: 25.0,
            arch_depth_mm: 40.0,
            arch_front_y_mm: 65.0,
            occlusal_z_mm: -30.0,
            occlusal_gap_mm: 5.0,
            ridge_half_width_mm: 5.0,
            ridge_height_mm: 4.0,
            cusp_height_mm: 1.5,
            tooth_pitch_mm: 8.0,
            edge_mm: 0.5,
            arch_edge_mm: 1.0,
            seed: 0,
        }
    }
}

const ARCH_HALF_ANGLE: f64 = 1.9;

impl PhantomParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = [
            ("condyle semi-axis", self.condyle_semi_axes_mm.iter().copied().fold(f64::INFINITY, f64::min)),
            ("gap_max_mm", self.gap_max_mm),
            ("fossa_extent_deg", self.fossa_extent_deg),
            ("arch_half_span_mm", self.arch_half_span_mm),
            ("arch_depth_mm", self.arch_depth_mm),
            ("ridge_half_width_mm", self.ridge_half_width_mm),
            ("ridge_height_mm", self.ridge_height_mm),
            ("tooth_pitch_mm", self.tooth_pitch_mm),
            ("edge_mm", self.edge_mm),
            ("arch_edge_mm", self.arch_edge_mm),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SynthError::InvalidPhantom(format!("{name} must be positive")));
            }
        }
        if !(self.gap_min_mm >= 0.0) || self.gap_min_mm > self.gap_max_mm {
            return Err(SynthError::InvalidPhantom("need 0 <= gap_min_mm <= gap_max_mm".into()));
        }
        if !(self.cusp_height_mm >= 0.0) || !(self.occlusal_gap_mm >= 0.0) {
            return Err(SynthError::InvalidPhantom("cusp height and occlusal gap must be nonnegative".into()));
        }
        if self.fossa_extent_deg >= 90.0 {
            return Err(SynthError::InvalidPhantom("fossa_extent_deg must stay below 90".into()));
        }
        let [a, b, c] = self.condyle_semi_axes_mm;
        let joint_feature = a.min(b).min(c);
        if self.edge_mm > joint_feature {
            return Err(SynthError::ResolutionTooCoarse {
                edge_mm: self.edge_mm,
                feature: "condyle semi-axis",
                feature_mm: joint_feature,
            });
        }
        let mut arch = [
            ("ridge half-width", self.ridge_half_width_mm),
            ("half tooth pitch", 0.5 * self.tooth_pitch_mm),
        ]
        .to_vec();
        if self.cusp_height_mm > 0.0 {
            arch.push(("cusp height", self.cusp_height_mm));
        }
        for (feature, size) in arch {
            if self.arch_edge_mm > size {
                return Err(SynthError::ResolutionTooCoarse {
                    edge_mm: self.arch_edge_mm,
                    feature,
                    feature_mm: size,
                });
            }
        }
        Ok(())
    }

    /// Fossa gap as a function of the polar parameter (radians).
    pub fn gap_profile(&self, theta: f64) -> f64 {
        let s = theta / self.fossa_extent_deg.to_radians();
        self.gap_min_mm + (self.gap_max_mm - self.gap_min_mm) * s * s
    }

    pub fn condyle_center(&self, side: Side) -> Vector3<f64> {
        let [x, y, z] = self.condyle_center_mm;
        match side {
            Side::Left => Vector3::new(x, y, z),
            Side::Right => Vector3::new(-x, y, z),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointPhantom {
    pub model: JointModel,
    /// Exact gap at each fossa vertex.
    pub gap: Vec<f64>,
    /// Outward condyle normal under each fossa vertex.
    pub fossa_normals: Vec<Vector3<f64>>,
}

impl JointPhantom {
    pub fn analytic_gap(&self, fossa_vertex: usize) -> f64 {
        self.gap[fossa_vertex]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub params: PhantomParams,
    pub left: JointPhantom,
    pub right: JointPhantom,
    pub maxilla_arch: TriangleMesh,
    pub mandible_arch: TriangleMesh,
}

impl Phantom {
    pub fn joint(&self, side: Side) -> &JointPhantom {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

struct Ellipsoid {
    axes: Vector3<f64>,
    center: Vector3<f64>,
}

impl Ellipsoid {
    fn point(&self, theta: f64, phi: f64) -> Point3<f64> {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Point3::from(self.center + Vector3::new(self.axes.x * st * cp, self.axes.y * st * sp, self.axes.z * ct))
    }

    fn normal(&self, theta: f64, phi: f64) -> Vector3<f64> {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Vector3::new(st * cp / self.axes.x, st * sp / self.axes.y, ct / self.axes.z).normalize()
    }
}

fn segments(length: f64, edge: f64, min: usize) -> usize {
    ((length / edge).ceil() as usize).max(min)
}

/// Closed ellipsoid with outward winding, poles at ±z.
fn ellipsoid_mesh(e: &Ellipsoid, edge: f64) -> Result<TriangleMesh, MeshError> {
    let n_theta = segments(PI * e.axes.x.max(e.axes.z).max(e.axes.y), edge, 8);
    let n_phi = segments(2.0 * PI * e.axes.x.max(e.axes.y), edge, 12);
    let mut v = vec![e.point(0.0, 0.0)];
    for i in 1..n_theta {
        let theta = PI * i as f64 / n_theta as f64;
        for j in 0..n_phi {
            v.push(e.point(theta, 2.0 * PI * j as f64 / n_phi as f64));
        }
    }
    v.push(e.point(PI, 0.0));
    let south = (v.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * n_phi + j % n_phi) as u32;
    let mut t = Vec::new();
    for j in 0..n_phi {
        t.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..n_theta - 1 {
        for j in 0..n_phi {
            t.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
            t.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
        }
    }
    for j in 0..n_phi {
        t.push([ring(n_theta - 1, j), south, ring(n_theta - 1, j + 1)]);
    }
    TriangleMesh::new(v, t)
}

fn make_joint(params: &PhantomParams, side: Side) -> Result<JointPhantom, MeshError> {
    let e = Ellipsoid {
        axes: Vector3::from(params.condyle_semi_axes_mm),
        center: params.condyle_center(side),
    };
    let condyle = ellipsoid_mesh(&e, params.edge_mm)?.with_name(format!("condyle_{side}"));

    let extent = params.fossa_extent_deg.to_radians();
    let r_max = e.axes.max();
    let n_rings = segments(extent * r_max, params.edge_mm, 4);
    let n_phi = segments(2.0 * PI * e.axes.x.max(e.axes.y) * extent.sin(), params.edge_mm, 12);
    let mut v = vec![e.point(0.0, 0.0) + e.normal(0.0, 0.0) * params.gap_profile(0.0)];
    let mut gap = vec![params.gap_profile(0.0)];
    let mut normals = vec![e.normal(0.0, 0.0)];
    for i in 1..=n_rings {
        let theta = extent * i as f64 / n_rings as f64;
        let g = params.gap_profile(theta);
        for j in 0..n_phi {
            let phi = 2.0 * PI * j as f64 / n_phi as f64;
            let n = e.normal(theta, phi);
            v.push(e.point(theta, phi) + n * g);
            gap.push(g);
            normals.push(n);
        }
    }
    let ring = |i: usize, j: usize| (1 + (i - 1) * n_phi + j % n_phi) as u32;
    // winding faces the condyle
    let mut t = Vec::new();
    for j in 0..n_phi {
        t.push([0, ring(1, j + 1), ring(1, j)]);
    }
    for i in 1..n_rings {
        for j in 0..n_phi {
            t.push([ring(i, j), ring(i + 1, j + 1), ring(i + 1, j)]);
            t.push([ring(i, j), ring(i, j + 1), ring(i + 1, j + 1)]);
        }
    }
    let fossa = TriangleMesh::new(v, t)?.with_name(format!("fossa_{side}"));
    Ok(JointPhantom {
        model: JointModel { side, fossa, condyle },
        gap,
        fossa_normals: normals,
    })
}

/// Arc-length parametrized U curve in the xy-plane, incisal point first at
/// the middle of the parameter range.
struct ArchCurve {
    u: Vec<f64>,
    s: Vec<f64>,
    half_span: f64,
    depth: f64,
    front: f64,
}

impl ArchCurve {
    fn new(params: &PhantomParams) -> Self {
        let n = 4000;
        let mut curve = ArchCurve {
            u: Vec::with_capacity(n + 1),
            s: Vec::with_capacity(n + 1),
            half_span: params.arch_half_span_mm,
            depth: params.arch_depth_mm,
            front: params.arch_front_y_mm,
        };
        let mut acc = 0.0;
        let mut prev: Option<Vector3<f64>> = None;
        for k in 0..=n {
            let u = -ARCH_HALF_ANGLE + 2.0 * ARCH_HALF_ANGLE * k as f64 / n as f64;
            let p = curve.point(u);
            if let Some(q) = prev {
                acc += (p - q).norm();
            }
            prev = Some(p);
            curve.u.push(u);
            curve.s.push(acc);
        }
        curve
    }

    fn point(&self, u: f64) -> Vector3<f64> {
        Vector3::new(self.half_span * u.sin(), self.front - self.depth * (1.0 - u.cos()), 0.0)
    }

    fn tangent(&self, u: f64) -> Vector3<f64> {
        Vector3::new(self.half_span * u.cos(), -self.depth * u.sin(), 0.0).normalize()
    }

    fn length(&self) -> f64 {
        *self.s.last().expect("nonempty table")
    }

    fn param_at(&self, s: f64) -> f64 {
        let k = self.s.partition_point(|&x| x < s).clamp(1, self.s.len() - 1);
        let (s0, s1) = (self.s[k - 1], self.s[k]);
        let w = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.u[k - 1] + w * (self.u[k] - self.u[k - 1])
    }
}

/// Half-tube ridge along the arch curve; `up` selects the mandibular
/// (cusps up) or maxillary (cusps down) arch.
fn arch_mesh(params: &PhantomParams, curve: &ArchCurve, up: bool, cusps: &[f64]) -> Result<TriangleMesh, MeshError> {
    let length = curve.length();
    let n_s = segments(length, params.arch_edge_mm, 16);
    let w = params.ridge_half_width_mm;
    let h_max = params.ridge_height_mm + params.cusp_height_mm * cusps.iter().copied().fold(0.0, f64::max);
    let n_phi = segments(PI * ((w * w + h_max * h_max) / 2.0).sqrt(), params.arch_edge_mm, 8);
    let dir = if up { 1.0 } else { -1.0 };
    let tip = params.occlusal_z_mm - dir * 0.5 * params.occlusal_gap_mm;
    let base = tip - dir * (params.ridge_height_mm + params.cusp_height_mm);
    let tooth = length / cusps.len() as f64;

    let mut v = Vec::with_capacity((n_s + 1) * (n_phi + 1));
    for k in 0..=n_s {
        let s = length * k as f64 / n_s as f64;
        let u = curve.param_at(s);
        let c = curve.point(u);
        let lateral = Vector3::z().cross(&curve.tangent(u));
        let t = ((s / tooth).floor() as usize).min(cusps.len() - 1);
        let bump = 0.5 - 0.5 * (2.0 * PI * (s - t as f64 * tooth) / tooth).cos();
        let h = params.ridge_height_mm + params.cusp_height_mm * cusps[t] * bump;
        for i in 0..=n_phi {
            let phi = PI * i as f64 / n_phi as f64;
            let p = c + lateral * (w * phi.cos()) + Vector3::z() * (base + dir * h * phi.sin());
            v.push(Point3::from(p));
        }
    }
    let idx = |k: usize, i: usize| (k * (n_phi + 1) + i) as u32;
    let mut t = Vec::with_capacity(2 * n_s * n_phi);
    for k in 0..n_s {
        for i in 0..n_phi {
            t.push([idx(k, i), idx(k + 1, i), idx(k + 1, i + 1)]);
            t.push([idx(k, i), idx(k + 1, i + 1), idx(k, i + 1)]);
        }
    }
    let mut mesh = TriangleMesh::new(v, t)?;
    // crest normals point away from the jaw body
    let crest = 2 * (n_s / 2 * n_phi + n_phi / 2);
    if mesh.face_normal(crest).z * dir < 0.0 {
        mesh = mesh.flipped();
    }
    Ok(mesh)
}

/// Builds the phantom. Cusp amplitudes vary per tooth with the seed, which
/// breaks the periodicity along the arch.
pub fn make_phantom(params: &PhantomParams) -> Result<Phantom, SynthError> {
    params.validate()?;
    let left = make_joint(params, Side::Left)?;
    let right = make_joint(params, Side::Right)?;
    let curve = ArchCurve::new(params);
    let teeth = ((curve.length() / params.tooth_pitch_mm).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let upper: Vec<f64> = (0..teeth).map(|_| rng.random_range(0.6..1.0)).collect();
    let lower: Vec<f64> = (0..teeth).map(|_| rng.random_range(0.6..1.0)).collect();
    Ok(Phantom {
        params: params.clone(),
        left,
        right,
        maxilla_arch: arch_mesh(params, &curve, false, &upper)?.with_name("maxilla"),
        mandible_arch: arch_mesh(params, &curve, true, &lower)?.with_name("mandible"),
    })
}

/// Gaussian model on the tangent space: `T = exp(mean + L·z)`.
/// Rotation coordinates are in degrees, translation in mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub mean_rot_deg: Vector3<f64>,
    pub mean_trans_mm: Vector3<f64>,
    /// Rotation block first (deg²), translation block second (mm²).
    pub covariance: Matrix6<f64>,
    pub mode: Se3Mode,
}

fn embed(rot: &Matrix3<f64>, trans: &Matrix3<f64>) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rot);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(trans);
    m
}

fn from_principal(values: [f64; 3], axes: [[f64; 3]; 3]) -> Matrix3<f64> {
    let v = Matrix3::from_columns(&axes.map(Vector3::from));
    let q = Rotation::project(&v);
    q.matrix() * Matrix3::from_diagonal(&Vector3::from(values)) * q.matrix().transpose()
}

impl NoiseModel {
    pub fn zero() -> Self {
        NoiseModel {
            mean_rot_deg: Vector3::zeros(),
            mean_trans_mm: Vector3::zeros(),
            covariance: Matrix6::zeros(),
            mode: Se3Mode::Coupled,
        }
    }

    pub fn isotropic(rot_sd_deg: f64, trans_sd_mm: f64) -> Self {
        NoiseModel {
            covariance: embed(&(Matrix3::identity() * rot_sd_deg.powi(2)), &(Matrix3::identity() * trans_sd_mm.powi(2))),
            ..Self::zero()
        }
    }

    /// Offsets and anisotropy resembling splint repositioning errors seen
    /// in practice: a few millimetres, dominated by one lateral direction,
    /// with rotations of one to two degrees.
    pub fn clinical_like() -> Self {
        let trans = from_principal(
            [2.4358, 0.7820, 0.3477],
            [[-0.9726, -0.2070, -0.1061], [-0.2324, 0.8833, 0.4071], [-0.0094, -0.4206, 0.9072]],
        );
        let rot = from_principal(
            [1.3594, 0.5300, 0.3812],
            [[-0.0905, 0.3178, 0.9438], [-0.3062, 0.8929, -0.3301], [0.9477, 0.3188, -0.0165]],
        );
        NoiseModel {
            mean_rot_deg: Vector3::new(-0.1680, 0.7570, 1.0660),
            mean_trans_mm: Vector3::new(-1.9276, -0.4282, -0.3883),
            covariance: embed(&rot, &trans),
            mode: Se3Mode::Coupled,
        }
    }

    pub fn mean_tangent(&self) -> TangentVector {
        TangentVector::new(self.mean_rot_deg.map(f64::to_radians), self.mean_trans_mm)
    }

    /// A square-root factor `L` with `L·Lᵀ = Σ`: Cholesky when Σ is
    /// positive definite, otherwise the symmetric eigen square root.
    pub fn factor(&self) -> Result<Matrix6<f64>, SynthError> {
        let c = &self.covariance;
        let asym = (c - c.transpose()).amax();
        if asym > 1e-9 {
            return Err(SynthError::AsymmetricCovariance(asym));
        }
        let sym = (c + c.transpose()) * 0.5;
        if let Some(ch) = sym.cholesky() {
            return Ok(ch.l());
        }
        let eig = SymmetricEigen::new(sym);
        let min = eig.eigenvalues.min();
        if min < -1e-9 {
            return Err(SynthError::NonPsdCovariance { min_eigenvalue: min });
        }
        let sqrt = Matrix6::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        Ok(eig.eigenvectors * sqrt)
    }

    /// Tangent draws in the model's units (deg, mm), without the mean.
    fn draw(&self, factor: &Matrix6<f64>, rng: &mut impl Rng) -> Vector6<f64> {
        let z = Vector6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        factor * z
    }

    fn to_transform(&self, delta: &Vector6<f64>) -> RigidTransform {
        let v = TangentVector::new(
            (self.mean_rot_deg + delta.fixed_rows::<3>(0)).map(f64::to_radians),
            self.mean_trans_mm + delta.fixed_rows::<3>(3),
        );
        exp_se3(&v, self.mode)
    }
}

pub fn sample_transforms(model: &NoiseModel, n: usize, seed: u64) -> Result<Vec<RigidTransform>, SynthError> {
    if n == 0 {
        return Err(SynthError::InvalidCount);
    }
    let factor = model.factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| model.to_transform(&model.draw(&factor, &mut rng))).collect())
}

/// Accepted ranges for a sampled error transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    pub t_norm_mm: (f64, f64),
    pub theta_deg: (f64, f64),
}

impl ErrorBounds {
    pub fn contains(&self, t: &RigidTransform) -> bool {
        let (tn, th) = (t.translation_norm(), t.angle_degrees());
        (self.t_norm_mm.0..=self.t_norm_mm.1).contains(&tn) && (self.theta_deg.0..=self.theta_deg.1).contains(&th)
    }
}

/// Rejection sampling into `bounds`, giving up after `1000·n` draws.
pub fn sample_transforms_bounded(
    model: &NoiseModel,
    n: usize,
    seed: u64,
    bounds: &ErrorBounds,
) -> Result<Vec<RigidTransform>, SynthError> {
    if n == 0 {
        return Err(SynthError::InvalidCount);
    }
    let factor = model.factor()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let limit = 1000 * n;
    for _ in 0..limit {
        let t = model.to_transform(&model.draw(&factor, &mut rng));
        if bounds.contains(&t) {
            out.push(t);
            if out.len() == n {
                return Ok(out);
            }
        }
    }
    Err(SynthError::BoundsUnreachable { draws: limit })
}

fn pose(rot_deg: [f64; 3], t: [f64; 3]) -> RigidTransform {
    let r = rot_deg.map(f64::to_radians);
    let rotation = Rotation::rz(r[2]).compose(&Rotation::ry(r[1])).compose(&Rotation::rx(r[0]));
    RigidTransform::new(rotation, Vector3::from(t))
}

/// Target mandibular poses for the splints: protrusion, laterotrusion and
/// hinge opening about the transverse condylar axis.
pub fn planned_presets() -> Vec<(&'static str, RigidTransform)> {
    vec![
        ("protrusion", pose([-4.0, 0.0, 0.0], [0.0, 6.0, -1.5])),
        ("half-protrusion", pose([-2.0, 0.0, 0.0], [0.0, 3.0, -0.8])),
        ("laterotrusion-left", pose([0.0, 0.0, 5.0], [4.0, 0.5, -0.5])),
        ("laterotrusion-right", pose([0.0, 0.0, -5.0], [-4.0, 0.5, -0.5])),
        ("opening", pose([-20.0, 0.0, 0.0], [0.0, 0.0, 0.0])),
        ("half-opening", pose([-10.0, 0.0, 0.0], [0.0, 1.0, 0.0])),
        ("protrusion-left", pose([-3.0, 0.0, 3.0], [2.0, 4.0, -1.0])),
        ("edge-to-edge", pose([-6.0, 0.0, 0.0], [0.0, 4.5, -2.5])),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioOptions {
    pub splints: usize,
    pub repeats: usize,
    /// Isotropic per-coordinate scan vertex noise.
    pub jitter_sigma_mm: f64,
    /// Largest scanner-frame rotation (about the scan centroid).
    pub scan_pose_deg: f64,
    /// Largest scanner-frame translation.
    pub scan_pose_mm: f64,
    pub bounds: Option<ErrorBounds>,
    pub seed: u64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            splints: 8,
            repeats: 4,
            jitter_sigma_mm: 0.05,
            scan_pose_deg: 0.5,
            scan_pose_mm: 0.5,
            bounds: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSample {
    pub splint_id: String,
    pub repeat_id: String,
    pub planned: RigidTransform,
    pub measured: RigidTransform,
    /// `measured·planned⁻¹`, the error a perfect measurement recovers.
    pub ground_truth_error: RigidTransform,
    /// Maps scan coordinates to the reference frame.
    pub scan_to_reference: RigidTransform,
    pub scan: TriangleMesh,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub phantom: Phantom,
    pub model: NoiseModel,
    pub options: ScenarioOptions,
    pub samples: Vec<ScenarioSample>,
}

pub fn splint_id(k: usize) -> String {
    format!("S{}", k + 1)
}

pub fn repeat_id(r: usize) -> String {
    format!("{}t", r + 3)
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

/// Planned poses cycle through [`planned_presets`]; each measured pose is
/// the sampled error applied after the planned one. Scans contain the
/// maxillary arch and the measured mandibular arch in a perturbed scanner
/// frame, with vertex jitter.
pub fn build_scenario(params: &PhantomParams, model: &NoiseModel, options: &ScenarioOptions) -> Result<Scenario, SynthError> {
    if options.splints == 0 || options.repeats == 0 {
        return Err(SynthError::InvalidCount);
    }
    let phantom = make_phantom(params)?;
    let n = options.splints * options.repeats;
    let errors = match &options.bounds {
        Some(b) => sample_transforms_bounded(model, n, options.seed, b)?,
        None => sample_transforms(model, n, options.seed)?,
    };
    let presets = planned_presets();
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let (k, r) = (i / options.repeats, i % options.repeats);
            let planned = presets[k % presets.len()].1;
            let error = errors[i];
            let measured = error.compose(&planned);

            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(i as u64 + 1);
            let scene = phantom.maxilla_arch.merged(&phantom.mandible_arch.transformed(&measured));
            let centroid = scene.centroid().coords;
            let rot = Rotation::about_axis(&random_unit(&mut rng), rng.random_range(0.0..=1.0) * options.scan_pose_deg.to_radians());
            let shift = random_unit(&mut rng) * rng.random_range(0.0..=1.0) * options.scan_pose_mm;
            let scan_to_reference = RigidTransform::from_translation(centroid + shift)
                .compose(&RigidTransform::from_rotation(rot))
                .compose(&RigidTransform::from_translation(-centroid));
            let mut scan = scene.transformed(&scan_to_reference.inverse());
            if options.jitter_sigma_mm > 0.0 {
                let jittered: Vec<Point3<f64>> = scan
                    .vertices()
                    .iter()
                    .map(|p| p + Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)) * options.jitter_sigma_mm)
                    .collect();
                scan = TriangleMesh::new(jittered, scan.triangles().to_vec())?;
            }
            Ok(ScenarioSample {
                splint_id: splint_id(k),
                repeat_id: repeat_id(r),
                planned,
                measured,
                ground_truth_error: error,
                scan_to_reference,
                scan: scan.with_name(format!("scan_{}_{}", splint_id(k), repeat_id(r))),
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok(Scenario {
        phantom,
        model: model.clone(),
        options: options.clone(),
        samples,
    })
}
