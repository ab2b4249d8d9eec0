mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use motion_ground::compiler::{self, AnimationClip, ClipSource, Keyframe};
use motion_ground::eval::{
    aggregate_bpq, average_pairwise_agreement, bppa_frames, complexity_report, weighted_kappa, BpqLabel,
    KappaWeighting, OracleAnnotation, RatingRecord, TargetKind, BPQ_GROUPS,
};
use motion_ground::low_level::StepPoseAssignment;
use motion_ground::parse;
use motion_ground::skeleton::{EulerRotationDeg, Pose, Skeleton};
use motion_ground::taxonomy::{BodyPartId, OptionTarget, PoseTaxonomy};

fn ratings(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    len.prop_flat_map(|n| (prop::collection::vec(1u8..=5, n), prop::collection::vec(1u8..=5, n)))
}

fn weighting() -> impl Strategy<Value = KappaWeighting> {
    prop_oneof![Just(KappaWeighting::Linear), Just(KappaWeighting::Quadratic)]
}

/// Steps whose cells are drawn from each part's position set.
fn frames(steps: std::ops::Range<usize>) -> impl Strategy<Value = Vec<StepPoseAssignment>> {
    prop::collection::vec(prop::collection::vec(0usize..64, 16), steps).prop_map(|picks| {
        let tax = PoseTaxonomy::bundled();
        picks
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut f = StepPoseAssignment::neutral(i as u32 + 1);
                for (part, k) in BodyPartId::ALL.iter().zip(row) {
                    let opts = tax.positions_for(*part);
                    f.positions.insert(*part, opts[k % opts.len()].id.clone());
                }
                f
            })
            .collect()
    })
}

fn euler() -> impl Strategy<Value = EulerRotationDeg> {
    (-180.0f64..180.0, -180.0f64..180.0, -180.0f64..180.0).prop_map(|(x, y, z)| EulerRotationDeg::new(x, y, z))
}

fn random_pose(sk: &Skeleton) -> impl Strategy<Value = Pose> {
    let names: Vec<String> = sk.joint_names().map(str::to_string).collect();
    (prop::collection::vec(euler(), names.len()), prop::array::uniform3(-1.0f64..1.0)).prop_map(move |(rs, t)| Pose {
        rotations: names.iter().cloned().zip(rs).collect(),
        root_translation: t,
    })
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// The bundled skeleton with right offsets mirrored from the left and the
/// midline joints centred.
fn symmetric_skeleton() -> Skeleton {
    let mut v: serde_json::Value = serde_json::from_str(include_str!("../data/skeleton.json")).unwrap();
    let offsets: BTreeMap<String, Vec<f64>> = v["joints"]
        .as_array()
        .unwrap()
        .iter()
        .map(|j| (j["name"].as_str().unwrap().to_string(), serde_json::from_value(j["offset"].clone()).unwrap()))
        .collect();
    for j in v["joints"].as_array_mut().unwrap() {
        let name = j["name"].as_str().unwrap().to_string();
        let o = if name.contains("_R_") {
            let l = &offsets[&name.replace("_R_", "_L_")];
            vec![-l[0], l[1], l[2]]
        } else if name.contains("_L_") {
            offsets[&name].clone()
        } else {
            let o = &offsets[&name];
            vec![0.0, o[1], o[2]]
        };
        j["offset"] = serde_json::json!(o);
    }
    Skeleton::from_json_str(&v.to_string()).unwrap()
}

fn swap_side(name: &str) -> String {
    if name.contains("_L_") {
        name.replace("_L_", "_R_")
    } else {
        name.replace("_R_", "_L_")
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kappa_is_symmetric((a, b) in ratings(1..40), w in weighting()) {
        let ab = weighted_kappa(&a, &b, 5, w).unwrap();
        let ba = weighted_kappa(&b, &a, 5, w).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
    }

    #[test]
    fn kappa_of_identical_ratings_is_one((a, _) in ratings(1..40), w in weighting()) {
        prop_assert!((weighted_kappa(&a, &a, 5, w).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_ignores_item_order((a, b) in ratings(2..40), w in weighting(), seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..a.len()).collect();
        let mut s = seed;
        for i in (1..idx.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (s >> 33) as usize % (i + 1));
        }
        let pa: Vec<u8> = idx.iter().map(|i| a[*i]).collect();
        let pb: Vec<u8> = idx.iter().map(|i| b[*i]).collect();
        let k1 = weighted_kappa(&a, &b, 5, w).unwrap();
        let k2 = weighted_kappa(&pa, &pb, 5, w).unwrap();
        prop_assert!((k1 - k2).abs() < 1e-12);
    }

    #[test]
    fn kappa_swapping_both_scales_is_invariant((a, b) in ratings(1..40), w in weighting()) {
        // Reversing the scale (1 <-> 5) for both raters keeps every distance.
        let ra: Vec<u8> = a.iter().map(|v| 6 - v).collect();
        let rb: Vec<u8> = b.iter().map(|v| 6 - v).collect();
        let k1 = weighted_kappa(&a, &b, 5, w).unwrap();
        let k2 = weighted_kappa(&ra, &rb, 5, w).unwrap();
        prop_assert!((k1 - k2).abs() < 1e-12);
    }

    #[test]
    fn pairwise_agreement_is_bounded_and_order_free(
        labels in prop::collection::vec(prop::collection::vec(0u8..4, 12), 2..8)
    ) {
        let named: BTreeMap<String, Vec<u8>> =
            labels.iter().enumerate().map(|(i, l)| (format!("r{i:02}"), l.clone())).collect();
        let renamed: BTreeMap<String, Vec<u8>> =
            labels.iter().enumerate().map(|(i, l)| (format!("z{:02}", 99 - i), l.clone())).collect();
        let a = average_pairwise_agreement(&named).unwrap();
        let b = average_pairwise_agreement(&renamed).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() < 1e-12);
        let same: BTreeMap<String, Vec<u8>> = (0..labels.len()).map(|i| (format!("r{i}"), labels[0].clone())).collect();
        prop_assert_eq!(average_pairwise_agreement(&same).unwrap(), 1.0);
    }

    #[test]
    fn bpq_shares_sum_to_one_hundred(picks in prop::collection::vec(prop::collection::vec(0usize..4, 6), 1..20)) {
        let labels = [BpqLabel::Good, BpqLabel::PartiallyGood, BpqLabel::Bad, BpqLabel::NotRelevant];
        let records: Vec<RatingRecord> = picks
            .iter()
            .enumerate()
            .map(|(i, row)| RatingRecord {
                rater_id: format!("r{i}"),
                target_kind: TargetKind::Animation,
                motion_id: 1,
                system_tag: "s".into(),
                score: 3,
                bpq: Some(BPQ_GROUPS.iter().zip(row).map(|(g, k)| (*g, labels[*k])).collect()),
                task_id: None,
                comment: String::new(),
                submitted_at: None,
            })
            .collect();
        let agg = aggregate_bpq(&records);
        for (gi, g) in BPQ_GROUPS.iter().enumerate() {
            let share = &agg["s"][g];
            let nr = picks.iter().filter(|r| r[gi] == 3).count();
            prop_assert_eq!(share.not_relevant, nr);
            prop_assert_eq!(share.counted, picks.len() - nr);
            if share.counted > 0 {
                prop_assert!((share.good + share.partially_good + share.bad - 100.0).abs() < 1e-9);
                let good = picks.iter().filter(|r| r[gi] == 0).count() as f64 / share.counted as f64 * 100.0;
                prop_assert!((share.good - good).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bppa_is_bounded_and_consistent(pred in frames(1..6), seed in any::<u64>()) {
        // Oracle: the prediction with a seed-chosen subset of cells replaced.
        let mut oracle = pred.clone();
        let mut s = seed;
        let mut expect = 0usize;
        for f in &mut oracle {
            for part in BodyPartId::ALL {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if (s >> 40) % 3 == 0 {
                    f.positions.insert(part, "__other__".into());
                } else {
                    expect += 1;
                }
            }
        }
        let r = bppa_frames(4, &pred, &OracleAnnotation { motion_id: 4, frames: oracle }).unwrap();
        prop_assert_eq!(r.matched, expect);
        prop_assert_eq!(r.total, 16 * pred.len());
        prop_assert!((0.0..=1.0).contains(&r.overall));
        let mean_step = r.by_step.iter().map(|s| s.accuracy).sum::<f64>() / r.by_step.len() as f64;
        prop_assert!((mean_step - r.overall).abs() < 1e-12);
        let mean_part = r.by_body_part.values().sum::<f64>() / 16.0;
        prop_assert!((mean_part - r.overall).abs() < 1e-12);
        prop_assert!(r.by_part.values().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn bppa_against_itself_is_one(pred in frames(1..6)) {
        let r = bppa_frames(1, &pred, &OracleAnnotation { motion_id: 1, frames: pred.clone() }).unwrap();
        prop_assert_eq!(r.overall, 1.0);
    }

    #[test]
    fn complexity_of_alternating_steps(n in 1usize..10, m in 1usize..16) {
        let parts = &BodyPartId::ALL[..m];
        let tax = PoseTaxonomy::bundled();
        let moved: Vec<(BodyPartId, &str)> =
            parts.iter().map(|p| (*p, tax.positions_for(*p)[1].id.as_str())).collect();
        let steps: Vec<StepPoseAssignment> = (0..n)
            .map(|i| if i % 2 == 0 { common::frame_with(i as u32 + 1, &moved) } else { StepPoseAssignment::neutral(i as u32 + 1) })
            .collect();
        let r = complexity_report(&steps);
        let want = n as f64 * m as f64 / (16 - m) as f64;
        prop_assert!((r.value - want).abs() < 1e-9, "{} vs {}", r.value, want);
        prop_assert!(r.steps.iter().all(|s| s.moved == m && !s.all_moved));
    }

    #[test]
    fn complexity_is_nonnegative_and_bounded(f in frames(1..8)) {
        let r = complexity_report(&f);
        prop_assert!(r.value >= 0.0);
        prop_assert!(r.value <= 16.0 * f.len() as f64);
        prop_assert_eq!(r.steps.len(), f.len());
    }

    #[test]
    fn sampling_stays_between_keyframes(
        a in euler(), b in euler(), c in euler(), t1 in 0.1f64..3.0, t2 in 0.1f64..3.0, u in 0.0f64..=1.0
    ) {
        let sk = Skeleton::bundled();
        let key = |time: f64, r: EulerRotationDeg| {
            let mut k = Keyframe { time, rotations: Default::default(), root_translation: [0.0; 3] };
            for n in sk.joint_names() {
                k.rotations.insert(n.to_string(), r);
            }
            k
        };
        let clip = AnimationClip {
            schema: compiler::CLIP_SCHEMA.into(),
            skeleton_version: sk.version.clone(),
            rules_version: None,
            motion_id: None,
            source: ClipSource::Raw,
            duration: t1 + t2,
            keyframes: vec![key(0.0, a), key(t1, b), key(t1 + t2, c)],
        };
        clip.validate(sk).unwrap();
        for (t, want) in [(0.0, a), (t1, b), (t1 + t2, c)] {
            let p = compiler::sample(&clip, t).unwrap();
            prop_assert_eq!(p.rotations["m_avg_L_Elbow"], want);
        }
        let t = u * (t1 + t2);
        let p = compiler::sample(&clip, t).unwrap().rotations["m_avg_L_Elbow"];
        let (lo, hi) = if t <= t1 { (a, b) } else { (b, c) };
        for (v, l, h) in [(p.x, lo.x, hi.x), (p.y, lo.y, hi.y), (p.z, lo.z, hi.z)] {
            prop_assert!(v >= l.min(h) - 1e-9 && v <= l.max(h) + 1e-9);
        }
        prop_assert!(compiler::sample(&clip, t1 + t2 + 1e-6).is_err());
        prop_assert!(compiler::sample(&clip, -1e-6).is_err());
    }

    #[test]
    fn mirroring_conjugates_by_the_sagittal_reflection(e in euler()) {
        let r = e.matrix();
        let m = e.mirrored().matrix();
        // diag(-1, 1, 1) R diag(-1, 1, 1)
        for i in 0..3 {
            for j in 0..3 {
                let sign = if (i == 0) != (j == 0) { -1.0 } else { 1.0 };
                prop_assert!((m[(i, j)] - sign * r[(i, j)]).abs() < 1e-12);
            }
        }
        prop_assert_eq!(e.mirrored().mirrored(), e);
    }

    #[test]
    fn fk_preserves_bone_lengths(pose in random_pose(Skeleton::bundled())) {
        let sk = Skeleton::bundled();
        let world = sk.forward_kinematics(&pose);
        let rest = sk.forward_kinematics(&sk.neutral_pose());
        for j in sk.joints() {
            if let Some(p) = &j.parent {
                let a = dist(world[&j.name], world[p]);
                let b = dist(rest[&j.name], rest[p]);
                prop_assert!((a - b).abs() < 1e-9, "{}", j.name);
            }
        }
    }

    #[test]
    fn fk_of_mirrored_pose_is_the_reflection(pose in random_pose(Skeleton::bundled())) {
        let sk = symmetric_skeleton();
        let mirrored = Pose {
            rotations: pose.rotations.keys().map(|n| (n.clone(), pose.rotations[&swap_side(n)].mirrored())).collect(),
            root_translation: [-pose.root_translation[0], pose.root_translation[1], pose.root_translation[2]],
        };
        let a = sk.forward_kinematics(&pose);
        let b = sk.forward_kinematics(&mirrored);
        for (n, p) in &a {
            let q = b[&swap_side(n)];
            prop_assert!(dist([-p[0], p[1], p[2]], q) < 1e-9, "{n}");
        }
    }

    #[test]
    fn random_tree_walks_reach_positions(part in 0usize..16, choices in prop::collection::vec(0usize..16, 8)) {
        let tax = PoseTaxonomy::bundled();
        let part = BodyPartId::ALL[part];
        let tree = tax.decision_tree(part);
        let mut node = tree.root();
        let mut labels = Vec::new();
        for c in &choices {
            let opts: Vec<&str> = node.labels().collect();
            let label = opts[c % opts.len()];
            labels.push(label.to_string());
            match node.target(label).unwrap() {
                OptionTarget::Position(tok) => {
                    prop_assert!(tax.contains(part, tok));
                    prop_assert_eq!(tree.walk(&labels), Some(tok.as_str()));
                    return Ok(());
                }
                OptionTarget::Node(id) => node = tree.node(*id).unwrap(),
            }
        }
        prop_assert!(false, "no leaf within 8 questions");
    }

    #[test]
    fn parsers_never_panic(s in "\\PC{0,200}") {
        let _ = parse::extract_json(&s);
        let _ = parse::parse_text(&s);
        let _ = parse::parse_seconds(&s);
        let _ = parse::parse_yes_no(&s);
        let _ = parse::parse_judgement(&s);
        let _ = parse::parse_in_one_go(&s);
        let _ = parse::normalize(&s);
    }

    #[test]
    fn seconds_round_trip(v in 0.0f64..100.0) {
        let v = (v * 100.0).round() / 100.0;
        let got = parse::parse_seconds(&format!("The step takes about {v} seconds.")).unwrap();
        prop_assert!((got - v).abs() < 1e-9);
    }
}
