//! Agreement between raters: weighted kappa, the pairwise matrix and
//! body-part quality shares.

use std::collections::BTreeMap;

use motion_ground::eval::{
    aggregate_bpq, average_pairwise_agreement, classify_agreement, kappa_matrix, weighted_kappa, BpqLabel,
    KappaWeighting, RatingRecord, TargetKind, BPQ_GROUPS,
};

fn main() {
    let scores: [(&str, [u8; 8]); 3] =
        [("ana", [5, 4, 4, 2, 1, 3, 5, 4]), ("ben", [5, 4, 3, 2, 2, 3, 4, 4]), ("cai", [4, 5, 4, 1, 1, 2, 5, 3])];

    let k = weighted_kappa(&scores[0].1, &scores[1].1, 5, KappaWeighting::Linear).expect("same length");
    println!("ana vs ben: {k:.3} ({})", classify_agreement(k).label());

    let labels = [BpqLabel::Good, BpqLabel::PartiallyGood, BpqLabel::Bad, BpqLabel::NotRelevant];
    let mut records = Vec::new();
    for (rater, row) in &scores {
        for (item, score) in row.iter().enumerate() {
            records.push(RatingRecord {
                rater_id: rater.to_string(),
                target_kind: TargetKind::Animation,
                motion_id: item as u32 + 1,
                system_tag: if item % 2 == 0 { "model-a" } else { "model-b" }.into(),
                score: *score,
                bpq: Some(BPQ_GROUPS.iter().enumerate().map(|(g, grp)| (*grp, labels[(g + *score as usize) % 4])).collect()),
                task_id: None,
                comment: String::new(),
                submitted_at: None,
            });
        }
    }

    for w in [KappaWeighting::Linear, KappaWeighting::Quadratic] {
        let m = kappa_matrix(&records, TargetKind::Animation, w);
        println!("\n{} weights", w.as_str());
        for (i, r) in m.raters.iter().enumerate() {
            let row: Vec<String> = m.values[i].iter().map(|v| v.map_or("-".into(), |v| format!("{v:.3}"))).collect();
            println!("  {r:<4} {}", row.join("  "));
        }
        if let (Some(avg), Some(band)) = (m.average, m.band) {
            println!("  average {avg:.3}: {}", band.label());
        }
    }

    let per_rater: BTreeMap<String, Vec<BpqLabel>> = scores
        .iter()
        .map(|(r, _)| {
            let mine: Vec<BpqLabel> = records.iter().filter(|x| x.rater_id == *r).flat_map(|x| x.bpq.as_ref().unwrap().values().copied()).collect();
            (r.to_string(), mine)
        })
        .collect();
    println!("\nBPQ label agreement {:.3}", average_pairwise_agreement(&per_rater).expect("three raters"));
    for (system, groups) in aggregate_bpq(&records) {
        println!("{system}");
        for (g, s) in groups {
            println!("  {:<10} good {:5.1}%  partial {:5.1}%  bad {:5.1}%  ({} not relevant)", format!("{g:?}"), s.good, s.partially_good, s.bad, s.not_relevant);
        }
    }
}
