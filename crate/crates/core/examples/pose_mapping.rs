//! Map taxonomy positions to joint rotations and see where the hand ends up.

use motion_ground::skeleton::{RuleTable, Skeleton};
use motion_ground::taxonomy::BodyPartId;

fn main() {
    let sk = Skeleton::bundled();
    let rules = RuleTable::bundled();
    let rest = sk.neutral_pose();

    let mut pose = rest.clone();
    for (part, tok) in [(BodyPartId::LeftUpperArm, "neutral_to_forward"), (BodyPartId::LeftElbow, "bent_in_90_degrees")] {
        let rule = rules.rule(part, tok).expect("rule exists");
        for (joint, rot) in &rule.joint_rotations {
            println!("{part} = {tok}: {joint} -> ({}, {}, {})", rot.x, rot.y, rot.z);
        }
        pose = rules.apply_position(sk, &pose, part, tok).expect("position applies");
    }

    let before = sk.forward_kinematics(&rest);
    let after = sk.forward_kinematics(&pose);
    for joint in ["m_avg_L_Elbow", "m_avg_L_Wrist", "m_avg_L_Hand"] {
        let (a, b) = (before[joint], after[joint]);
        println!("{joint:<14} rest [{:.3} {:.3} {:.3}]  posed [{:.3} {:.3} {:.3}]", a[0], a[1], a[2], b[0], b[1], b[2]);
    }
}
