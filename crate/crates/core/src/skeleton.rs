//! Joint hierarchy, neutral pose, and the rule table that maps
//! `(body part, position)` pairs to joint rotations.
//!
//! Coordinates: +X is the avatar's left, +Y is up, +Z is forward.
//!
//! Euler triples are in degrees and named anatomically rather than by world
//! axis:
//! - `x` yaws about the vertical axis; positive turns toward the avatar's left.
//! - `y` pitches about the lateral axis pointing to the avatar's right;
//!   positive swings a downward-pointing segment forward (elbow flexion).
//! - `z` rolls about the forward axis; positive swings an upward-pointing
//!   segment toward the avatar's right.
//!
//! Components are applied `z` first, then `y`, then `x`, all about the
//! parent's fixed axes, i.e. `R = Rx * Ry * Rz`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use indexmap::IndexMap;
use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{BodyPartId, PoseTaxonomy};

const BUNDLED_SKELETON: &str = include_str!("../data/skeleton.json");
const BUNDLED_RULES: &str = include_str!("../data/rules.json");

pub type Vec3 = [f64; 3];

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("no rotation rule for {part} position `{position}`")]
    UnknownPosition { part: BodyPartId, position: String },
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("invalid rule table: {0}")]
    InvalidRules(String),
    #[error("failed to parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rotation in degrees; see the module docs for axis semantics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerRotationDeg {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EulerRotationDeg {
    pub const ZERO: EulerRotationDeg = EulerRotationDeg { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        EulerRotationDeg { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.z == 0.0
    }

    pub fn max_abs(&self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    /// Each component wrapped into (-180, 180].
    pub fn canonicalized(&self) -> Self {
        fn wrap(a: f64) -> f64 {
            let r = a.rem_euclid(360.0);
            if r > 180.0 {
                r - 360.0
            } else {
                r
            }
        }
        EulerRotationDeg::new(wrap(self.x), wrap(self.y), wrap(self.z))
    }

    pub fn clamped(&self, limit: f64) -> Self {
        EulerRotationDeg::new(
            self.x.clamp(-limit, limit),
            self.y.clamp(-limit, limit),
            self.z.clamp(-limit, limit),
        )
    }

    /// Component-wise linear interpolation; `alpha = 0` gives `self`.
    pub fn lerp(&self, other: &EulerRotationDeg, alpha: f64) -> Self {
        let l = |a: f64, b: f64| a + (b - a) * alpha;
        EulerRotationDeg::new(l(self.x, other.x), l(self.y, other.y), l(self.z, other.z))
    }

    /// Mirror across the sagittal plane.
    pub fn mirrored(&self) -> Self {
        EulerRotationDeg::new(-self.x, self.y, -self.z) + EulerRotationDeg::ZERO
    }

    /// World-frame rotation matrix.
    pub fn matrix(&self) -> Rotation3<f64> {
        let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), self.x.to_radians());
        let pitch = Rotation3::from_axis_angle(&Vector3::x_axis(), -self.y.to_radians());
        let roll = Rotation3::from_axis_angle(&Vector3::z_axis(), self.z.to_radians());
        yaw * pitch * roll
    }
}

impl std::ops::Add for EulerRotationDeg {
    type Output = EulerRotationDeg;

    // Adding +0.0 also normalizes -0.0.
    fn add(self, rhs: Self) -> Self {
        EulerRotationDeg::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Serialize for EulerRotationDeg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for EulerRotationDeg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Ok(EulerRotationDeg { x, y, z })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<String>,
    /// Rest-pose translation from the parent, meters.
    pub offset: Vec3,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSkeleton {
    version: String,
    #[serde(default, flatten)]
    docs: BTreeMap<String, serde_json::Value>,
    joints: Vec<Joint>,
    part_joints: BTreeMap<BodyPartId, Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    pub version: String,
    /// Parents always precede their children.
    joints: Vec<Joint>,
    parents: Vec<Option<usize>>,
    index: HashMap<String, usize>,
    part_joints: BTreeMap<BodyPartId, Vec<String>>,
}

/// Joint rotations plus root translation. Keys follow skeleton order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotations: IndexMap<String, EulerRotationDeg>,
    pub root_translation: Vec3,
}

impl Skeleton {
    pub fn bundled() -> &'static Skeleton {
        static CELL: OnceLock<Skeleton> = OnceLock::new();
        CELL.get_or_init(|| Skeleton::from_json_str(BUNDLED_SKELETON).expect("bundled skeleton is valid"))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SkeletonError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, SkeletonError> {
        let raw: RawSkeleton = serde_json::from_str(s)?;
        Self::build(raw.version, raw.joints, raw.part_joints)
    }

    fn build(
        version: String,
        joints: Vec<Joint>,
        part_joints: BTreeMap<BodyPartId, Vec<String>>,
    ) -> Result<Self, SkeletonError> {
        let mut index = HashMap::new();
        let mut parents = Vec::with_capacity(joints.len());
        let mut roots = 0;
        for (i, j) in joints.iter().enumerate() {
            if index.insert(j.name.clone(), i).is_some() {
                return Err(SkeletonError::InvalidSkeleton(format!("duplicate joint {}", j.name)));
            }
            if !j.offset.iter().all(|c| c.is_finite()) {
                return Err(SkeletonError::InvalidSkeleton(format!("non-finite offset on {}", j.name)));
            }
            match &j.parent {
                None => {
                    roots += 1;
                    parents.push(None);
                }
                Some(p) => match index.get(p) {
                    Some(&pi) => parents.push(Some(pi)),
                    None => {
                        return Err(SkeletonError::InvalidSkeleton(format!(
                            "joint {} lists parent {p} before it is defined",
                            j.name
                        )))
                    }
                },
            }
        }
        if roots != 1 {
            return Err(SkeletonError::InvalidSkeleton(format!("expected one root, found {roots}")));
        }
        for part in BodyPartId::ALL {
            let names = part_joints
                .get(&part)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| SkeletonError::InvalidSkeleton(format!("{part} maps to no joint")))?;
            if let Some(bad) = names.iter().find(|n| !index.contains_key(*n)) {
                return Err(SkeletonError::UnknownJoint(bad.clone()));
            }
        }
        Ok(Skeleton { version, joints, parents, index, part_joints })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint_names(&self) -> impl Iterator<Item = &str> {
        self.joints.iter().map(|j| j.name.as_str())
    }

    pub fn contains(&self, joint: &str) -> bool {
        self.index.contains_key(joint)
    }

    pub fn root(&self) -> &Joint {
        &self.joints[0]
    }

    pub fn parent_index(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn children(&self, joint: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents.iter().enumerate().filter(move |(_, p)| **p == Some(joint)).map(|(i, _)| i)
    }

    /// Joint indices in depth-first preorder from the root.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.joints.len());
        let mut stack = vec![0];
        while let Some(j) = stack.pop() {
            out.push(j);
            let kids: Vec<usize> = self.children(j).collect();
            stack.extend(kids.into_iter().rev());
        }
        out
    }

    pub fn joints_for(&self, part: BodyPartId) -> &[String] {
        &self.part_joints[&part]
    }

    pub fn neutral_pose(&self) -> Pose {
        Pose {
            rotations: self.joints.iter().map(|j| (j.name.clone(), EulerRotationDeg::ZERO)).collect(),
            root_translation: [0.0; 3],
        }
    }

    /// World positions of every joint, in skeleton order.
    pub fn forward_kinematics(&self, pose: &Pose) -> IndexMap<String, Vec3> {
        let mut world_rot: Vec<Rotation3<f64>> = Vec::with_capacity(self.joints.len());
        let mut world_pos: Vec<Vector3<f64>> = Vec::with_capacity(self.joints.len());
        for (i, joint) in self.joints.iter().enumerate() {
            let local = pose.rotations.get(&joint.name).copied().unwrap_or_default().matrix();
            let offset = Vector3::from(joint.offset);
            match self.parents[i] {
                None => {
                    world_pos.push(offset + Vector3::from(pose.root_translation));
                    world_rot.push(local);
                }
                Some(p) => {
                    world_pos.push(world_pos[p] + world_rot[p] * offset);
                    world_rot.push(world_rot[p] * local);
                }
            }
        }
        self.joints
            .iter()
            .zip(world_pos)
            .map(|(j, p)| (j.name.clone(), [p.x, p.y, p.z]))
            .collect()
    }

    /// FK shifted vertically so the lowest joint sits at the rest pose's
    /// floor height. Kneeling and crouching poses come down instead of
    /// lifting their feet.
    pub fn forward_kinematics_grounded(&self, pose: &Pose) -> IndexMap<String, Vec3> {
        let lowest = |fk: &IndexMap<String, Vec3>| fk.values().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let floor = lowest(&self.forward_kinematics(&self.neutral_pose()));
        let mut fk = self.forward_kinematics(pose);
        let drop = lowest(&fk) - floor;
        for p in fk.values_mut() {
            p[1] -= drop;
        }
        fk
    }
}

/// Neutral pose of the bundled skeleton.
pub fn neutral_pose() -> Pose {
    Skeleton::bundled().neutral_pose()
}

/// FK on the bundled skeleton.
pub fn forward_kinematics(pose: &Pose) -> IndexMap<String, Vec3> {
    Skeleton::bundled().forward_kinematics(pose)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationRule {
    pub part: BodyPartId,
    pub position: String,
    #[serde(rename = "rotations")]
    pub joint_rotations: IndexMap<String, EulerRotationDeg>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRules {
    version: String,
    taxonomy_version: String,
    skeleton_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mirror_rule: Option<String>,
    rules: Vec<RotationRule>,
}

/// The mapping model's rule table, cross-validated against a taxonomy and a
/// skeleton at load.
#[derive(Debug, Clone)]
pub struct RuleTable {
    pub version: String,
    pub taxonomy_version: String,
    pub skeleton_version: String,
    rules: Vec<RotationRule>,
    index: HashMap<(BodyPartId, String), usize>,
}

impl RuleTable {
    pub fn bundled() -> &'static RuleTable {
        static CELL: OnceLock<RuleTable> = OnceLock::new();
        CELL.get_or_init(|| {
            RuleTable::from_json_str(BUNDLED_RULES, PoseTaxonomy::bundled(), Skeleton::bundled())
                .expect("bundled rule table is valid")
        })
    }

    pub fn from_path(
        path: impl AsRef<Path>,
        taxonomy: &PoseTaxonomy,
        skeleton: &Skeleton,
    ) -> Result<Self, SkeletonError> {
        Self::from_json_str(&std::fs::read_to_string(path)?, taxonomy, skeleton)
    }

    pub fn from_json_str(
        s: &str,
        taxonomy: &PoseTaxonomy,
        skeleton: &Skeleton,
    ) -> Result<Self, SkeletonError> {
        let raw: RawRules = serde_json::from_str(s)?;
        Self::new(raw.version, raw.taxonomy_version, raw.skeleton_version, raw.rules, taxonomy, skeleton)
    }

    pub fn new(
        version: String,
        taxonomy_version: String,
        skeleton_version: String,
        rules: Vec<RotationRule>,
        taxonomy: &PoseTaxonomy,
        skeleton: &Skeleton,
    ) -> Result<Self, SkeletonError> {
        let invalid = |m: String| Err(SkeletonError::InvalidRules(m));
        if taxonomy_version != taxonomy.version {
            return invalid(format!(
                "rules target taxonomy {taxonomy_version}, loaded taxonomy is {}",
                taxonomy.version
            ));
        }
        if skeleton_version != skeleton.version {
            return invalid(format!(
                "rules target skeleton {skeleton_version}, loaded skeleton is {}",
                skeleton.version
            ));
        }
        let mut index = HashMap::new();
        for (i, rule) in rules.iter().enumerate() {
            if !taxonomy.contains(rule.part, &rule.position) {
                return invalid(format!("rule for unknown position {} {}", rule.part, rule.position));
            }
            if index.insert((rule.part, rule.position.clone()), i).is_some() {
                return invalid(format!("duplicate rule for {} {}", rule.part, rule.position));
            }
            let own = skeleton.joints_for(rule.part);
            for (joint, rot) in &rule.joint_rotations {
                if !own.contains(joint) {
                    return invalid(format!("{} rule rotates foreign joint {joint}", rule.part));
                }
                if !rot.is_finite() || rot.max_abs() > 180.0 {
                    return invalid(format!("{} {} rotates {joint} out of bounds", rule.part, rule.position));
                }
            }
            if rule.position == "neutral" && !rule.joint_rotations.values().all(|r| r.is_zero()) {
                return invalid(format!("neutral rule for {} is not all-zero", rule.part));
            }
        }
        for (part, entry) in &taxonomy.parts {
            for p in &entry.positions {
                if !index.contains_key(&(*part, p.id.clone())) {
                    return invalid(format!("no rule for {part} {}", p.id));
                }
            }
        }
        Ok(RuleTable { version, taxonomy_version, skeleton_version, rules, index })
    }

    pub fn rules(&self) -> &[RotationRule] {
        &self.rules
    }

    pub fn rule(&self, part: BodyPartId, position: &str) -> Option<&RotationRule> {
        self.index.get(&(part, position.to_string())).map(|&i| &self.rules[i])
    }

    /// Set `part`'s joints to the rule's rotations. Joints the rule does not
    /// list are zeroed; joints of other parts are untouched.
    pub fn apply_position(
        &self,
        skeleton: &Skeleton,
        pose: &Pose,
        part: BodyPartId,
        position: &str,
    ) -> Result<Pose, SkeletonError> {
        let rule = self.rule(part, position).ok_or_else(|| SkeletonError::UnknownPosition {
            part,
            position: position.to_string(),
        })?;
        let mut out = pose.clone();
        for joint in skeleton.joints_for(part) {
            let rot = rule.joint_rotations.get(joint).copied().unwrap_or_default();
            out.rotations.insert(joint.clone(), rot);
        }
        Ok(out)
    }
}

/// Complete bundled rule table.
pub fn rotation_rules() -> &'static [RotationRule] {
    RuleTable::bundled().rules()
}

/// Apply a bundled rule to `pose`.
pub fn apply_position(pose: &Pose, part: BodyPartId, position: &str) -> Result<Pose, SkeletonError> {
    RuleTable::bundled().apply_position(Skeleton::bundled(), pose, part, position)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::Side;

    fn dist(a: Vec3, b: Vec3) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn neutral_pose_is_zero_and_standing() {
        let pose = neutral_pose();
        assert_eq!(pose.rotations["m_avg_L_Elbow"], EulerRotationDeg::ZERO);
        assert_eq!(pose.rotations.len(), 24);
        let fk = forward_kinematics(&pose);
        assert!(fk["m_avg_Head"][1] > fk["m_avg_Pelvis"][1]);
        // Arms hang: wrists below shoulders.
        assert!(fk["m_avg_L_Wrist"][1] < fk["m_avg_L_Shoulder"][1] - 0.4);
    }

    #[test]
    fn bent_knees_lower_the_head_once_grounded() {
        let sk = Skeleton::bundled();
        let mut pose = sk.neutral_pose();
        for part in [BodyPartId::LeftKnee, BodyPartId::RightKnee] {
            pose = apply_position(&pose, part, "bent_at_90_degrees").unwrap();
        }
        let rest = sk.forward_kinematics_grounded(&sk.neutral_pose());
        assert_eq!(rest, sk.forward_kinematics(&sk.neutral_pose()));
        // Ungrounded, the pelvis stays put and the feet lift.
        let free = sk.forward_kinematics(&pose);
        assert_eq!(free["m_avg_Head"], rest["m_avg_Head"]);
        assert!(free["m_avg_L_Ankle"][1] > rest["m_avg_L_Ankle"][1]);
        let grounded = sk.forward_kinematics_grounded(&pose);
        let shin = dist(rest["m_avg_L_Knee"], rest["m_avg_L_Ankle"]);
        assert!(grounded["m_avg_Head"][1] < rest["m_avg_Head"][1] - 0.5 * shin);
        assert!((dist(grounded["m_avg_Head"], grounded["m_avg_Neck"]) - dist(rest["m_avg_Head"], rest["m_avg_Neck"])).abs() < 1e-12);
    }

    #[test]
    fn neutral_fk_is_rest_offsets() {
        let sk = Skeleton::bundled();
        let fk = sk.forward_kinematics(&sk.neutral_pose());
        for (i, j) in sk.joints().iter().enumerate() {
            let mut expected = Vector3::from(j.offset);
            let mut p = sk.parent_index(i);
            while let Some(pi) = p {
                expected += Vector3::from(sk.joints()[pi].offset);
                p = sk.parent_index(pi);
            }
            let got = fk[&j.name];
            assert!(dist(got, [expected.x, expected.y, expected.z]) < 1e-12, "{}", j.name);
        }
    }

    #[test]
    fn elbow_mapping_fixed_point() {
        let pose = apply_position(&neutral_pose(), BodyPartId::LeftElbow, "bent_in_90_degrees").unwrap();
        assert_eq!(pose.rotations["m_avg_L_Elbow"], EulerRotationDeg::new(0.0, 90.0, 0.0));
        let rule = RuleTable::bundled().rule(BodyPartId::LeftElbow, "bent_in_90_degrees").unwrap();
        assert_eq!(rule.joint_rotations["m_avg_L_Elbow"], EulerRotationDeg::new(0.0, 90.0, 0.0));
    }

    #[test]
    fn elbow_flexion_brings_the_wrist_forward() {
        let pose = apply_position(&neutral_pose(), BodyPartId::LeftElbow, "bent_in_90_degrees").unwrap();
        let before = forward_kinematics(&neutral_pose());
        let after = forward_kinematics(&pose);
        assert!(after["m_avg_L_Wrist"][2] > before["m_avg_L_Wrist"][2] + 0.2);
        assert!((after["m_avg_L_Wrist"][1] - after["m_avg_L_Elbow"][1]).abs() < 0.05);
    }

    #[test]
    fn apply_position_is_idempotent_and_local() {
        let p1 = apply_position(&neutral_pose(), BodyPartId::RightKnee, "fully_bent").unwrap();
        let p2 = apply_position(&p1, BodyPartId::RightKnee, "fully_bent").unwrap();
        assert_eq!(p1, p2);
        for (joint, rot) in &p1.rotations {
            if joint != "m_avg_R_Knee" {
                assert!(rot.is_zero(), "{joint}");
            }
        }
        let back = apply_position(&p1, BodyPartId::RightKnee, "neutral").unwrap();
        assert_eq!(back, neutral_pose());
    }

    #[test]
    fn unknown_position_is_an_error() {
        let err = apply_position(&neutral_pose(), BodyPartId::LeftKnee, "bent_in_90_degrees").unwrap_err();
        assert!(matches!(err, SkeletonError::UnknownPosition { part: BodyPartId::LeftKnee, .. }));
    }

    #[test]
    fn rule_table_is_total() {
        let tax = PoseTaxonomy::bundled();
        let expected: usize = tax.parts.values().map(|e| e.positions.len()).sum();
        assert_eq!(expected, 2 * (20 + 4 + 6 + 15 + 4 + 5 + 3) + 13 + 12);
        assert_eq!(rotation_rules().len(), expected);
        for rule in rotation_rules() {
            if rule.position == "neutral" {
                assert!(rule.joint_rotations.values().all(|r| r.is_zero()));
            }
            for r in rule.joint_rotations.values() {
                assert!(r.max_abs() <= 180.0);
                assert_eq!(*r, r.canonicalized());
            }
        }
    }

    #[test]
    fn right_rules_mirror_left_rules() {
        let table = RuleTable::bundled();
        let sk = Skeleton::bundled();
        for rule in rotation_rules() {
            if rule.part.side() != Some(Side::Left) {
                continue;
            }
            let right_part = rule.part.paired().unwrap();
            let right = table.rule(right_part, &rule.position).unwrap();
            for (lj, rj) in sk.joints_for(rule.part).iter().zip(sk.joints_for(right_part)) {
                assert_eq!(rj.replace("_R_", "_L_"), *lj);
                assert_eq!(right.joint_rotations[rj], rule.joint_rotations[lj].mirrored(), "{} {}", rule.part, rule.position);
            }
        }
    }

    #[test]
    fn bone_lengths_survive_posing() {
        let sk = Skeleton::bundled();
        let mut pose = sk.neutral_pose();
        for rule in rotation_rules().iter().step_by(7) {
            pose = apply_position(&pose, rule.part, &rule.position).unwrap();
        }
        pose.root_translation = [0.3, -0.1, 2.0];
        let rest = sk.forward_kinematics(&sk.neutral_pose());
        let posed = sk.forward_kinematics(&pose);
        for (i, j) in sk.joints().iter().enumerate() {
            if let Some(p) = sk.parent_index(i) {
                let pn = &sk.joints()[p].name;
                let a = dist(rest[&j.name], rest[pn]);
                let b = dist(posed[&j.name], posed[pn]);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn canonicalize_wraps_into_half_open_range() {
        let r = EulerRotationDeg::new(-180.0, 540.0, 190.0).canonicalized();
        assert_eq!(r, EulerRotationDeg::new(180.0, 180.0, -170.0));
    }

    #[test]
    fn preorder_starts_at_pelvis() {
        let sk = Skeleton::bundled();
        let order = sk.preorder();
        assert_eq!(order.len(), 24);
        assert_eq!(sk.joints()[order[0]].name, "m_avg_Pelvis");
        for (pos, &j) in order.iter().enumerate() {
            if let Some(p) = sk.parent_index(j) {
                assert!(order[..pos].contains(&p));
            }
        }
    }

    #[test]
    fn rules_reject_taxonomy_version_drift() {
        let text = BUNDLED_RULES.replacen("\"taxonomy_version\": \"1.0.0\"", "\"taxonomy_version\": \"0.9\"", 1);
        let err = RuleTable::from_json_str(&text, PoseTaxonomy::bundled(), Skeleton::bundled()).unwrap_err();
        assert!(matches!(err, SkeletonError::InvalidRules(_)));
    }
}
