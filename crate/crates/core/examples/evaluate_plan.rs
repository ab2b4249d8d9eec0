//! Score a predicted plan against an oracle: BPPA, motion complexity and
//! reflection statistics.

use motion_ground::eval::{bppa_frames, complexity_report, reflection_stats, OracleAnnotation};
use motion_ground::low_level::{ReflectionEvent, StepPoseAssignment};
use motion_ground::taxonomy::BodyPartId;

fn frame(step: u32, moves: &[(BodyPartId, &str)]) -> StepPoseAssignment {
    let mut f = StepPoseAssignment::neutral(step);
    for (p, t) in moves {
        f.positions.insert(*p, t.to_string());
    }
    f
}

fn main() {
    use BodyPartId::*;
    let predicted = vec![
        frame(1, &[(LeftElbow, "bent_in_90_degrees"), (LeftUpperArm, "neutral_to_forward")]),
        frame(2, &[(LeftElbow, "bent_in_90_degrees"), (LeftUpperArm, "neutral_to_forward"), (Head, "tilted_down_fully")]),
    ];
    let oracle = OracleAnnotation {
        motion_id: 3,
        frames: vec![
            frame(1, &[(LeftElbow, "bent_in_90_degrees"), (LeftUpperArm, "forward_to_midline")]),
            frame(2, &[(LeftElbow, "bent_in_90_degrees"), (LeftUpperArm, "forward_to_midline"), (Head, "tilted_down_slightly")]),
        ],
    };

    let r = bppa_frames(3, &predicted, &oracle).expect("same shape");
    println!("BPPA {:.4} ({}/{})", r.overall, r.matched, r.total);
    for s in &r.by_step {
        println!("  step {}: {}/{}", s.step_number, s.matched, s.total);
    }
    for (kind, acc) in &r.by_part {
        println!("  {kind:?}: {acc:.2}");
    }

    let c = complexity_report(&predicted);
    println!("complexity {:.4}", c.value);
    for s in &c.steps {
        println!("  step {}: {} moved / {} unmoved", s.step_number, s.moved, s.unmoved);
    }

    let events = vec![ReflectionEvent {
        step_number: 2,
        part: Head,
        position_before: "tilted_down_fully".into(),
        position_after: "tilted_down_slightly".into(),
        analysis: "looking at a wrist needs only a small tilt".into(),
        judgement: "yes".into(),
        corrected: true,
    }];
    let st = reflection_stats(&events, &oracle);
    println!(
        "reflection: {:.2}% of cells corrected, success {:.2}, perfect {:.2}",
        st.correction_percentage * 100.0,
        st.success_rate,
        st.perfect_reflection_rate
    );
}
