//! Rigid transformations: SO(3) rotations, SE(3) transforms and their
//! exponential and logarithmic maps.
//!
//! Angles are radians internally. Degrees only appear in the explicit
//! `degrees()` views used for reporting.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use thiserror::Error;

/// Orthonormality tolerance for a value to count as a rotation.
pub const ROTATION_TOL: f64 = 1e-9;

/// Largest deviation accepted (and repaired by projection) when reading
/// matrices from files.
pub const READ_TOL: f64 = 1e-4;

/// Below this angle the exp/log maps switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-6;

/// Above `PI - NEAR_PI` the rotation log takes its axis from the symmetric part.
const NEAR_PI: f64 = 1e-3;

/// Coupled SE(3) log refuses rotations closer than this to `PI`.
pub const COUPLED_LOG_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Se3Error {
    #[error("matrix is not a rotation: deviation {deviation:.3e} exceeds {tolerance:.1e}")]
    NotARotation { deviation: f64, tolerance: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("homogeneous matrix bottom row must be [0, 0, 0, 1]")]
    BadBottomRow,
    #[error("rotation angle {theta:.6} rad is too close to pi for the coupled SE(3) log")]
    ThetaNearPi { theta: f64 },
}

pub(crate) fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub(crate) fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Max entry of `|mᵀm - I|` combined with `|det m - 1|`.
pub fn orthonormality_deviation(m: &Matrix3<f64>) -> f64 {
    let gram = m.transpose() * m - Matrix3::identity();
    let entry = gram.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    entry.max((m.determinant() - 1.0).abs())
}

/// A 3×3 rotation matrix (`RᵀR = I`, `det R = +1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Accepts `m` only if it already satisfies the rotation invariants.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, Se3Error> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Se3Error::NonFinite);
        }
        let deviation = orthonormality_deviation(&m);
        if deviation > ROTATION_TOL {
            return Err(Se3Error::NotARotation {
                deviation,
                tolerance: ROTATION_TOL,
            });
        }
        Ok(Rotation(m))
    }

    /// Accepts `m` if it is within `tolerance` of a rotation and projects it
    /// onto SO(3). Returns the rotation and the measured deviation.
    pub fn from_matrix_projected(m: Matrix3<f64>, tolerance: f64) -> Result<(Self, f64), Se3Error> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Se3Error::NonFinite);
        }
        let deviation = orthonormality_deviation(&m);
        if deviation > tolerance {
            return Err(Se3Error::NotARotation {
                deviation,
                tolerance,
            });
        }
        if deviation <= ROTATION_TOL {
            return Ok((Rotation(m), deviation));
        }
        Ok((Self::project(&m), deviation))
    }

    /// Nearest rotation in the Frobenius sense (SVD with reflection fix).
    pub fn project(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let (Some(mut u), Some(v_t)) = (svd.u, svd.v_t) else {
            return Self::identity();
        };
        if (u * v_t).determinant() < 0.0 {
            let (min_idx, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
            let mut col = u.column_mut(min_idx);
            col.neg_mut();
        }
        Rotation(u * v_t)
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn about_axis(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        exp_rotation(&RotationVector(axis * (angle / n)))
    }

    pub fn rx(angle: f64) -> Self {
        Self::about_axis(&Vector3::x(), angle)
    }

    pub fn ry(angle: f64) -> Self {
        Self::about_axis(&Vector3::y(), angle)
    }

    pub fn rz(angle: f64) -> Self {
        Self::about_axis(&Vector3::z(), angle)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// `self · other`, re-projected when round-off pushes it off SO(3).
    pub fn compose(&self, other: &Rotation) -> Self {
        let m = self.0 * other.0;
        if orthonormality_deviation(&m) > ROTATION_TOL {
            Self::project(&m)
        } else {
            Rotation(m)
        }
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn log(&self) -> RotationVector {
        log_rotation(self)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        self.log().angle()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

/// Axis-angle coordinates `θ·u` in radians.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RotationVector(pub Vector3<f64>);

impl RotationVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        RotationVector(Vector3::new(x, y, z))
    }

    pub fn from_degrees(v: Vector3<f64>) -> Self {
        RotationVector(v.map(f64::to_radians))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    /// Components scaled by 180/π.
    pub fn degrees(&self) -> Vector3<f64> {
        self.0.map(f64::to_degrees)
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn angle_degrees(&self) -> f64 {
        self.angle().to_degrees()
    }

    /// Unit axis, `None` for the zero vector.
    pub fn axis(&self) -> Option<Vector3<f64>> {
        let n = self.0.norm();
        (n > 0.0).then(|| self.0 / n)
    }
}

/// SO(3) logarithm.
///
/// Uses `atan2` for the angle, a Taylor series below 1e-6 rad and the
/// symmetric part of `R` near π. At exactly π the axis sign is chosen so
/// that its first nonzero component is positive.
pub fn log_rotation(r: &Rotation) -> RotationVector {
    let m = r.matrix();
    let w = vee(&(m - m.transpose())) * 0.5;
    let s = w.norm();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);

    if theta < SMALL_ANGLE {
        return RotationVector(w * (1.0 + theta * theta / 6.0));
    }
    if theta < PI - NEAR_PI {
        return RotationVector(w * (theta / s));
    }

    // R + Rᵀ = 2cI + 2(1-c)uuᵀ
    let sym = (m + m.transpose()) * 0.5;
    let uut = (sym - Matrix3::identity() * c) / (1.0 - c);
    let k = (0..3)
        .max_by(|&a, &b| uut[(a, a)].total_cmp(&uut[(b, b)]))
        .unwrap_or(0);
    let mut u: Vector3<f64> = uut.column(k).into_owned() / uut[(k, k)].max(0.0).sqrt();
    u.normalize_mut();

    let d = w.dot(&u);
    if s > 1e-14 && d.abs() > 1e-14 {
        if d < 0.0 {
            u = -u;
        }
    } else if let Some(first) = u.iter().copied().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            u = -u;
        }
    }
    RotationVector(u * theta)
}

/// SO(3) exponential (Rodrigues).
pub fn exp_rotation(v: &RotationVector) -> Rotation {
    let theta = v.angle();
    let k = hat(&v.0);
    let k2 = k * k;
    let m = if theta < SMALL_ANGLE {
        Matrix3::identity() + k + k2 * 0.5
    } else {
        let a = theta.sin() / theta;
        let b = 2.0 * (0.5 * theta).sin().powi(2) / (theta * theta);
        Matrix3::identity() + k * a + k2 * b
    };
    Rotation(m)
}

/// A rigid transform `x ↦ R·x + t`, translation in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Vector3::zeros())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        RigidTransform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.inverse();
        RigidTransform {
            rotation: rt,
            translation: -(rt.rotate(&self.translation)),
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.rotate(&p.coords) + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(v)
    }

    /// `self⁻¹ · motion · self`.
    pub fn conjugate(&self, motion: &RigidTransform) -> Self {
        self.inverse().compose(motion).compose(self)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major 4×4 entries.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_homogeneous();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    /// Parses a row-major homogeneous matrix. The rotation block may deviate
    /// from SO(3) by up to `tolerance`, in which case it is projected; the
    /// deviation is returned alongside.
    pub fn from_row_major(entries: &[f64; 16], tolerance: f64) -> Result<(Self, f64), Se3Error> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Se3Error::NonFinite);
        }
        let bottom = &entries[12..16];
        if bottom[0].abs() > tolerance
            || bottom[1].abs() > tolerance
            || bottom[2].abs() > tolerance
            || (bottom[3] - 1.0).abs() > tolerance
        {
            return Err(Se3Error::BadBottomRow);
        }
        let m = Matrix3::new(
            entries[0], entries[1], entries[2], entries[4], entries[5], entries[6], entries[8],
            entries[9], entries[10],
        );
        let (rotation, deviation) = Rotation::from_matrix_projected(m, tolerance)?;
        let translation = Vector3::new(entries[3], entries[7], entries[11]);
        Ok((Self::new(rotation, translation), deviation))
    }

    /// Rotation angle in degrees.
    pub fn angle_degrees(&self) -> f64 {
        self.rotation.log().angle_degrees()
    }

    pub fn translation_norm(&self) -> f64 {
        self.translation.norm()
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl fmt::Display for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.to_homogeneous();
        for r in 0..4 {
            writeln!(
                f,
                "[{:>10.4} {:>10.4} {:>10.4} {:>10.4}]",
                m[(r, 0)],
                m[(r, 1)],
                m[(r, 2)],
                m[(r, 3)]
            )?;
        }
        Ok(())
    }
}

/// Six tangent coordinates: rotation vector (rad) and translation part (mm).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TangentVector {
    pub rot: Vector3<f64>,
    pub trans: Vector3<f64>,
}

impl TangentVector {
    pub fn new(rot: Vector3<f64>, trans: Vector3<f64>) -> Self {
        TangentVector { rot, trans }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn norm(&self) -> f64 {
        (self.rot.norm_squared() + self.trans.norm_squared()).sqrt()
    }

    /// `[rx, ry, rz, tx, ty, tz]`
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.rot.x,
            self.rot.y,
            self.rot.z,
            self.trans.x,
            self.trans.y,
            self.trans.z,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        TangentVector {
            rot: Vector3::new(a[0], a[1], a[2]),
            trans: Vector3::new(a[3], a[4], a[5]),
        }
    }
}

impl Add for TangentVector {
    type Output = TangentVector;
    fn add(self, rhs: TangentVector) -> TangentVector {
        TangentVector::new(self.rot + rhs.rot, self.trans + rhs.trans)
    }
}

impl AddAssign for TangentVector {
    fn add_assign(&mut self, rhs: TangentVector) {
        self.rot += rhs.rot;
        self.trans += rhs.trans;
    }
}

impl Sub for TangentVector {
    type Output = TangentVector;
    fn sub(self, rhs: TangentVector) -> TangentVector {
        TangentVector::new(self.rot - rhs.rot, self.trans - rhs.trans)
    }
}

impl Neg for TangentVector {
    type Output = TangentVector;
    fn neg(self) -> TangentVector {
        TangentVector::new(-self.rot, -self.trans)
    }
}

impl Mul<f64> for TangentVector {
    type Output = TangentVector;
    fn mul(self, s: f64) -> TangentVector {
        TangentVector::new(self.rot * s, self.trans * s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Se3Mode {
    /// Full group log/exp; translation coordinates are `V(ω)⁻¹·t`.
    #[default]
    Coupled,
    /// SO(3) × R³; translation coordinates are `t` itself.
    Product,
}

impl Se3Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Se3Mode::Coupled => "coupled",
            Se3Mode::Product => "product",
        }
    }
}

impl fmt::Display for Se3Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Se3Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "coupled" => Ok(Se3Mode::Coupled),
            "product" => Ok(Se3Mode::Product),
            other => Err(format!("unknown SE(3) mode '{other}' (expected coupled|product)")),
        }
    }
}

/// `(1 - (θ/2)·cot(θ/2)) / θ²`, the `[ω]²` coefficient of `V⁻¹`.
fn left_jacobian_inv_coeff(theta: f64) -> f64 {
    if theta < 1e-2 {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1_209_600.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / (theta * theta)
    }
}

/// Coefficients `(1-cosθ)/θ²` and `(θ-sinθ)/θ³` of `V`.
fn left_jacobian_coeffs(theta: f64) -> (f64, f64) {
    if theta < 1e-2 {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        (
            0.5 - t2 / 24.0 + t4 / 720.0 - t4 * t2 / 40320.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t4 * t2 / 362_880.0,
        )
    } else {
        let t2 = theta * theta;
        (
            2.0 * (0.5 * theta).sin().powi(2) / t2,
            (theta - theta.sin()) / (t2 * theta),
        )
    }
}

/// Left Jacobian `V(ω)` of SO(3).
pub fn left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let (b, c) = left_jacobian_coeffs(omega.norm());
    let w = hat(omega);
    Matrix3::identity() + w * b + w * w * c
}

/// SE(3) logarithm in the requested parametrization.
pub fn log_se3(t: &RigidTransform, mode: Se3Mode) -> Result<TangentVector, Se3Error> {
    let omega = log_rotation(&t.rotation).0;
    match mode {
        Se3Mode::Product => Ok(TangentVector::new(omega, t.translation)),
        Se3Mode::Coupled => {
            let theta = omega.norm();
            if theta >= PI - COUPLED_LOG_MARGIN {
                return Err(Se3Error::ThetaNearPi { theta });
            }
            let w = hat(&omega);
            let v_inv = Matrix3::identity() - w * 0.5 + w * w * left_jacobian_inv_coeff(theta);
            Ok(TangentVector::new(omega, v_inv * t.translation))
        }
    }
}

/// SE(3) exponential in the requested parametrization.
pub fn exp_se3(v: &TangentVector, mode: Se3Mode) -> RigidTransform {
    let rotation = exp_rotation(&RotationVector(v.rot));
    let translation = match mode {
        Se3Mode::Product => v.trans,
        Se3Mode::Coupled => left_jacobian(&v.rot) * v.trans,
    };
    RigidTransform::new(rotation, translation)
}
