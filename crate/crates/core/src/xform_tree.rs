//! Coordinate frames connected by rigid transforms.
//!
//! An edge `a -> b` stores `P_ab`, the transform mapping coordinates
//! expressed in frame `b` into frame `a`. Spanning edges form a forest and
//! drive [`TransformTree::resolve`]; check edges close loops and only feed
//! [`TransformTree::consistency_error`].

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::se3::{exp_se3, log_se3, RigidTransform, Se3Error, Se3Mode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("frame name must be nonempty")]
    EmptyFrameName,
    #[error("frame '{0}' is already registered")]
    DuplicateFrame(FrameId),
    #[error("unknown frame '{0}'")]
    UnknownFrame(FrameId),
    #[error("edge {from} -> {to} ({role}) already exists")]
    DuplicateEdge { from: FrameId, to: FrameId, role: EdgeRole },
    #[error("spanning edge {from} -> {to} would close a loop")]
    SpanningCycle { from: FrameId, to: FrameId },
    #[error("frames '{from}' and '{to}' are not connected by spanning edges")]
    DisconnectedFrames { from: FrameId, to: FrameId },
    #[error("no edge between '{from}' and '{to}'")]
    MissingEdge { from: FrameId, to: FrameId },
    #[error("cycle must list at least two frames and end where it starts")]
    OpenCycle,
    #[error("motion timestamps must be strictly increasing (sample {index})")]
    NonMonotonicTime { index: usize },
    #[error("motion track is empty")]
    EmptyTrack,
    #[error(transparent)]
    Se3(#[from] Se3Error),
}

/// Name of a coordinate frame, e.g. `C`, `F`, `K` or `scan_3t`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameId(String);

impl FrameId {
    pub fn new(name: impl Into<String>) -> Result<Self, TreeError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(TreeError::EmptyFrameName);
        }
        Ok(FrameId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeRole {
    Spanning,
    Check,
}

impl EdgeRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeRole::Spanning => "spanning",
            EdgeRole::Check => "check",
        }
    }
}

impl fmt::Display for EdgeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EdgeRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spanning" => Ok(EdgeRole::Spanning),
            "check" => Ok(EdgeRole::Check),
            other => Err(format!("unknown edge role '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: FrameId,
    pub to: FrameId,
    pub transform: RigidTransform,
    pub role: EdgeRole,
    pub label: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct TransformTree {
    frames: BTreeMap<FrameId, usize>,
    names: Vec<FrameId>,
    edges: Vec<Edge>,
    // union-find over spanning edges
    parent: Vec<usize>,
}

impl TransformTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_frame(&mut self, id: FrameId) -> Result<(), TreeError> {
        if self.frames.contains_key(&id) {
            return Err(TreeError::DuplicateFrame(id));
        }
        let idx = self.names.len();
        self.frames.insert(id.clone(), idx);
        self.names.push(id);
        self.parent.push(idx);
        Ok(())
    }

    /// Registers `name` if it is not already present.
    pub fn ensure_frame(&mut self, name: &str) -> Result<FrameId, TreeError> {
        let id = FrameId::new(name)?;
        if !self.frames.contains_key(&id) {
            self.add_frame(id.clone())?;
        }
        Ok(id)
    }

    pub fn frames(&self) -> &[FrameId] {
        &self.names
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, id: &FrameId) -> bool {
        self.frames.contains_key(id)
    }

    fn index(&self, id: &FrameId) -> Result<usize, TreeError> {
        self.frames
            .get(id)
            .copied()
            .ok_or_else(|| TreeError::UnknownFrame(id.clone()))
    }

    fn root(&self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    pub fn add_edge(
        &mut self,
        from: &FrameId,
        to: &FrameId,
        transform: RigidTransform,
        role: EdgeRole,
    ) -> Result<(), TreeError> {
        self.add_labeled_edge(from, to, transform, role, None)
    }

    pub fn add_labeled_edge(
        &mut self,
        from: &FrameId,
        to: &FrameId,
        transform: RigidTransform,
        role: EdgeRole,
        label: Option<String>,
    ) -> Result<(), TreeError> {
        let a = self.index(from)?;
        let b = self.index(to)?;
        if self
            .edges
            .iter()
            .any(|e| e.role == role && &e.from == from && &e.to == to)
        {
            return Err(TreeError::DuplicateEdge {
                from: from.clone(),
                to: to.clone(),
                role,
            });
        }
        if role == EdgeRole::Spanning {
            let (ra, rb) = (self.root(a), self.root(b));
            if ra == rb {
                return Err(TreeError::SpanningCycle {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
            self.parent[ra] = rb;
        }
        self.edges.push(Edge {
            from: from.clone(),
            to: to.clone(),
            transform,
            role,
            label,
        });
        Ok(())
    }

    /// `P_from,to`: maps coordinates in `to` into `from`, composed along the
    /// unique spanning path.
    pub fn resolve(&self, from: &FrameId, to: &FrameId) -> Result<RigidTransform, TreeError> {
        let a = self.index(from)?;
        let b = self.index(to)?;
        if a == b {
            return Ok(RigidTransform::identity());
        }
        // BFS from `a`; each visited frame records P_a,frame.
        let mut acc: Vec<Option<RigidTransform>> = vec![None; self.names.len()];
        acc[a] = Some(RigidTransform::identity());
        let mut queue = VecDeque::from([a]);
        while let Some(cur) = queue.pop_front() {
            let p_cur = acc[cur].expect("visited");
            if cur == b {
                return Ok(p_cur);
            }
            for e in self.edges.iter().filter(|e| e.role == EdgeRole::Spanning) {
                let (ef, et) = (self.frames[&e.from], self.frames[&e.to]);
                let (next, step) = if ef == cur {
                    (et, e.transform)
                } else if et == cur {
                    (ef, e.transform.inverse())
                } else {
                    continue;
                };
                if acc[next].is_none() {
                    acc[next] = Some(p_cur.compose(&step));
                    queue.push_back(next);
                }
            }
        }
        Err(TreeError::DisconnectedFrames {
            from: from.clone(),
            to: to.clone(),
        })
    }

    /// Stored `P_from,to` for a single hop, inverting a reversed edge. Check
    /// edges take precedence over spanning ones between the same pair.
    pub fn edge_transform(&self, from: &FrameId, to: &FrameId) -> Result<RigidTransform, TreeError> {
        self.index(from)?;
        self.index(to)?;
        let lookup = |role: EdgeRole| {
            self.edges.iter().filter(|e| e.role == role).find_map(|e| {
                if &e.from == from && &e.to == to {
                    Some(e.transform)
                } else if &e.from == to && &e.to == from {
                    Some(e.transform.inverse())
                } else {
                    None
                }
            })
        };
        lookup(EdgeRole::Check)
            .or_else(|| lookup(EdgeRole::Spanning))
            .ok_or_else(|| TreeError::MissingEdge {
                from: from.clone(),
                to: to.clone(),
            })
    }

    /// Loop transform `E = P_f0f1 · P_f1f2 · … · P_fn-1fn` for a closed
    /// cycle `[f0, f1, …, fn = f0]`. Consistent registrations give `E ≈ I`.
    pub fn consistency_error(&self, cycle: &[FrameId]) -> Result<RigidTransform, TreeError> {
        if cycle.len() < 3 || cycle.first() != cycle.last() {
            return Err(TreeError::OpenCycle);
        }
        cycle.windows(2).try_fold(RigidTransform::identity(), |acc, pair| {
            Ok(acc.compose(&self.edge_transform(&pair[0], &pair[1])?))
        })
    }
}

/// Rotation angle (degrees) and translation norm (mm) of an error transform.
pub fn error_magnitude(e: &RigidTransform) -> (f64, f64) {
    (e.angle_degrees(), e.translation_norm())
}

/// How a track is evaluated between its samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Piecewise constant: the latest sample at or before `t`.
    #[default]
    Hold,
    /// Geodesic between neighbouring samples via the SE(3) exp/log.
    Geodesic,
}

/// Time-stamped rigid motion of a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionTrack {
    frame: FrameId,
    samples: Vec<(f64, RigidTransform)>,
}

impl MotionTrack {
    pub fn new(frame: FrameId, samples: Vec<(f64, RigidTransform)>) -> Result<Self, TreeError> {
        if let Some(index) = samples
            .windows(2)
            .position(|w| !(w[1].0 > w[0].0))
            .map(|i| i + 1)
        {
            return Err(TreeError::NonMonotonicTime { index });
        }
        if samples.iter().any(|(t, _)| !t.is_finite()) {
            return Err(TreeError::NonMonotonicTime { index: 0 });
        }
        Ok(MotionTrack { frame, samples })
    }

    pub fn frame(&self) -> &FrameId {
        &self.frame
    }

    pub fn samples(&self) -> &[(f64, RigidTransform)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Pose at time `t`; clamps outside the sampled interval.
    pub fn at(&self, t: f64, interp: Interpolation) -> Result<RigidTransform, TreeError> {
        let first = self.samples.first().ok_or(TreeError::EmptyTrack)?;
        if t <= first.0 {
            return Ok(first.1);
        }
        let idx = self.samples.partition_point(|(ts, _)| *ts <= t);
        let (t0, p0) = self.samples[idx - 1];
        if idx == self.samples.len() || interp == Interpolation::Hold {
            return Ok(p0);
        }
        let (t1, p1) = self.samples[idx];
        let s = (t - t0) / (t1 - t0);
        let delta = log_se3(&p0.inverse().compose(&p1), Se3Mode::Coupled)?;
        Ok(p0.compose(&exp_se3(&(delta * s), Se3Mode::Coupled)))
    }
}

/// Re-expresses a motion recorded in frame F in frame K:
/// `P_K(t) = P_FK⁻¹ · P_F(t) · P_FK`.
pub fn conjugate_motion(track: &MotionTrack, bridge: &RigidTransform, target: FrameId) -> MotionTrack {
    let inv = bridge.inverse();
    MotionTrack {
        frame: target,
        samples: track
            .samples
            .iter()
            .map(|(t, p)| (*t, inv.compose(p).compose(bridge)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{exp_rotation, Rotation, RotationVector};
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn fid(s: &str) -> FrameId {
        FrameId::new(s).unwrap()
    }

    fn tree_ckf(p_ck: RigidTransform, p_cf: RigidTransform) -> TransformTree {
        let mut tree = TransformTree::new();
        for f in ["C", "F", "K"] {
            tree.add_frame(fid(f)).unwrap();
        }
        tree.add_edge(&fid("C"), &fid("K"), p_ck, EdgeRole::Spanning).unwrap();
        tree.add_edge(&fid("C"), &fid("F"), p_cf, EdgeRole::Spanning).unwrap();
        tree
    }

    fn sample_transforms() -> (RigidTransform, RigidTransform) {
        (
            RigidTransform::new(Rotation::rz(0.4), Vector3::new(10.0, -3.0, 2.0)),
            RigidTransform::new(Rotation::rx(-0.7), Vector3::new(-1.0, 5.0, 8.0)),
        )
    }

    fn close(a: &RigidTransform, b: &RigidTransform, tol: f64) -> bool {
        (a.rotation.matrix() - b.rotation.matrix()).amax() < tol
            && (a.translation - b.translation).amax() < tol
    }

    #[test]
    fn frame_names_must_be_nonempty() {
        assert_eq!(FrameId::new(""), Err(TreeError::EmptyFrameName));
    }

    #[test]
    fn edge_insertion_rules() {
        let (p_ck, p_cf) = sample_transforms();
        let mut tree = tree_ckf(p_ck, p_cf);
        let p_fk = p_cf.inverse().compose(&p_ck);
        tree.add_edge(&fid("F"), &fid("K"), p_fk, EdgeRole::Check).unwrap();

        assert!(matches!(
            tree.add_edge(&fid("C"), &fid("K"), p_ck, EdgeRole::Spanning),
            Err(TreeError::DuplicateEdge { .. })
        ));
        assert!(matches!(
            tree.add_edge(&fid("K"), &fid("F"), p_fk.inverse(), EdgeRole::Spanning),
            Err(TreeError::SpanningCycle { .. })
        ));
        assert!(matches!(
            tree.add_edge(&fid("C"), &fid("X"), p_ck, EdgeRole::Check),
            Err(TreeError::UnknownFrame(_))
        ));
    }

    #[test]
    fn resolve_matches_hand_product() {
        let (p_ck, p_cf) = sample_transforms();
        let mut tree = tree_ckf(p_ck, p_cf);
        tree.add_frame(fid("iso")).unwrap();

        assert_eq!(tree.resolve(&fid("C"), &fid("C")).unwrap(), RigidTransform::identity());
        // P_KF = P_KC · P_CF, checked with 4x4 matrices.
        let expected = p_ck.to_homogeneous().try_inverse().unwrap() * p_cf.to_homogeneous();
        let got = tree.resolve(&fid("K"), &fid("F")).unwrap().to_homogeneous();
        assert!((got - expected).amax() < 1e-12);
        assert!(matches!(
            tree.resolve(&fid("C"), &fid("iso")),
            Err(TreeError::DisconnectedFrames { .. })
        ));
    }

    #[test]
    fn consistent_cycle_is_identity() {
        let (p_ck, p_cf) = sample_transforms();
        let mut tree = tree_ckf(p_ck, p_cf);
        let p_fk = tree
            .resolve(&fid("F"), &fid("C"))
            .unwrap()
            .compose(&tree.resolve(&fid("C"), &fid("K")).unwrap());
        tree.add_edge(&fid("F"), &fid("K"), p_fk, EdgeRole::Check).unwrap();
        let e = tree
            .consistency_error(&[fid("F"), fid("C"), fid("K"), fid("F")])
            .unwrap();
        assert!(close(&e, &RigidTransform::identity(), 1e-12));
    }

    #[test]
    fn translation_perturbation_is_reported() {
        let p_ck = RigidTransform::from_translation(Vector3::new(3.0, 1.0, 0.0));
        let p_cf = RigidTransform::from_translation(Vector3::new(-2.0, 4.0, 1.0));
        let mut tree = tree_ckf(p_ck, p_cf);
        let p_fk = p_cf.inverse().compose(&p_ck);
        let bump = RigidTransform::from_translation(Vector3::new(0.5, 0.0, 0.0));
        tree.add_edge(&fid("F"), &fid("K"), p_fk.compose(&bump), EdgeRole::Check)
            .unwrap();
        let e = tree
            .consistency_error(&[fid("F"), fid("C"), fid("K"), fid("F")])
            .unwrap();
        let (theta, tnorm) = error_magnitude(&e);
        assert_eq!(theta, 0.0);
        assert!((tnorm - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cycle_errors() {
        let (p_ck, p_cf) = sample_transforms();
        let tree = tree_ckf(p_ck, p_cf);
        assert!(matches!(
            tree.consistency_error(&[fid("F"), fid("C"), fid("K"), fid("F")]),
            Err(TreeError::MissingEdge { .. })
        ));
        assert_eq!(
            tree.consistency_error(&[fid("F"), fid("C")]),
            Err(TreeError::OpenCycle)
        );
    }

    #[test]
    fn error_magnitude_cases() {
        assert_eq!(error_magnitude(&RigidTransform::identity()), (0.0, 0.0));
        let (theta, t) = error_magnitude(&RigidTransform::from_rotation(Rotation::rz(2f64.to_radians())));
        assert!((theta - 2.0).abs() < 1e-12);
        assert_eq!(t, 0.0);
    }

    #[test]
    fn conjugation_examples() {
        let track = MotionTrack::new(
            fid("F"),
            vec![
                (0.0, RigidTransform::identity()),
                (0.1, RigidTransform::from_rotation(Rotation::rz(30f64.to_radians()))),
            ],
        )
        .unwrap();
        let same = conjugate_motion(&track, &RigidTransform::identity(), fid("K"));
        assert_eq!(same.samples(), track.samples());

        let bridge = RigidTransform::from_rotation(Rotation::rx(PI / 2.0));
        let k = conjugate_motion(&track, &bridge, fid("K"));
        assert_eq!(k.frame(), &fid("K"));
        assert_eq!(k.samples()[0].1, RigidTransform::identity());
        // axis becomes Rx(90)ᵀ·z = y
        let v = k.samples()[1].1.rotation.log().0;
        assert!((v - Vector3::new(0.0, 30f64.to_radians(), 0.0)).norm() < 1e-12);
        assert_eq!(k.samples()[1].0, 0.1);
    }

    #[test]
    fn track_rejects_unordered_time() {
        let err = MotionTrack::new(
            fid("F"),
            vec![(0.0, RigidTransform::identity()), (0.0, RigidTransform::identity())],
        );
        assert_eq!(err, Err(TreeError::NonMonotonicTime { index: 1 }));
    }

    #[test]
    fn track_interpolation() {
        let end = RigidTransform::new(Rotation::rz(0.2), Vector3::new(2.0, 0.0, 0.0));
        let track = MotionTrack::new(fid("F"), vec![(0.0, RigidTransform::identity()), (1.0, end)]).unwrap();
        assert_eq!(track.at(0.5, Interpolation::Hold).unwrap(), RigidTransform::identity());
        assert_eq!(track.at(2.0, Interpolation::Geodesic).unwrap(), end);
        let mid = track.at(0.5, Interpolation::Geodesic).unwrap();
        assert!((mid.rotation.angle() - 0.1).abs() < 1e-12);
        let twice = mid.compose(&mid);
        assert!(close(&twice, &end, 1e-12));
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.0..1.0f64),
            0.0..3.0f64,
            prop::array::uniform3(-20.0..20.0f64),
        )
            .prop_map(|(axis, angle, t)| {
                let a = Vector3::from(axis);
                let r = if a.norm() < 1e-6 {
                    Rotation::identity()
                } else {
                    exp_rotation(&RotationVector(a.normalize() * angle))
                };
                RigidTransform::new(r, Vector3::from(t))
            })
    }

    proptest! {
        #[test]
        fn conjugation_preserves_angle(p in arb_transform(), bridge in arb_transform()) {
            let track = MotionTrack::new(fid("F"), vec![(0.0, p)]).unwrap();
            let k = conjugate_motion(&track, &bridge, fid("K"));
            prop_assert!((k.samples()[0].1.rotation.angle() - p.rotation.angle()).abs() < 1e-9);
        }

        #[test]
        fn resolve_is_antisymmetric(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let mut tree = tree_ckf(a, b);
            tree.add_frame(fid("S")).unwrap();
            tree.add_edge(&fid("S"), &fid("K"), c, EdgeRole::Spanning).unwrap();
            let fwd = tree.resolve(&fid("S"), &fid("F")).unwrap();
            let back = tree.resolve(&fid("F"), &fid("S")).unwrap().inverse();
            prop_assert!((fwd.rotation.matrix() - back.rotation.matrix()).amax() < 1e-12);
            prop_assert!((fwd.translation - back.translation).amax() < 1e-12);
        }

        #[test]
        fn resolve_derived_check_edges_close(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let mut tree = tree_ckf(a, b);
            tree.add_frame(fid("S")).unwrap();
            tree.add_edge(&fid("K"), &fid("S"), c, EdgeRole::Spanning).unwrap();
            let p_fs = tree.resolve(&fid("F"), &fid("S")).unwrap();
            tree.add_edge(&fid("F"), &fid("S"), p_fs, EdgeRole::Check).unwrap();
            let e = tree.consistency_error(&[fid("C"), fid("K"), fid("S"), fid("F"), fid("C")]).unwrap();
            prop_assert!((e.rotation.matrix() - Matrix3::identity()).amax() < 1e-9);
            prop_assert!(e.translation.amax() < 1e-9);
        }
    }
}
