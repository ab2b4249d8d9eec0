use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    HighLevelPlan,
    Animation,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::HighLevelPlan => "high_level_plan",
            TargetKind::Animation => "animation",
        }
    }

    /// Name of the whole-item score for this target.
    pub fn metric(self) -> &'static str {
        match self {
            TargetKind::HighLevelPlan => "HPS",
            TargetKind::Animation => "WBS",
        }
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetKind {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "high_level_plan" | "plan" | "hps" | "HPS" => Ok(TargetKind::HighLevelPlan),
            "animation" | "wbs" | "WBS" => Ok(TargetKind::Animation),
            other => Err(EvalError::InvalidInput(format!("unknown target kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BpqGroup {
    Head,
    Torso,
    #[serde(rename = "Left Arm")]
    LeftArm,
    #[serde(rename = "Right Arm")]
    RightArm,
    #[serde(rename = "Left Leg")]
    LeftLeg,
    #[serde(rename = "Right Leg")]
    RightLeg,
}

pub const BPQ_GROUPS: [BpqGroup; 6] =
    [BpqGroup::Head, BpqGroup::Torso, BpqGroup::LeftArm, BpqGroup::RightArm, BpqGroup::LeftLeg, BpqGroup::RightLeg];

impl BpqGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            BpqGroup::Head => "Head",
            BpqGroup::Torso => "Torso",
            BpqGroup::LeftArm => "Left Arm",
            BpqGroup::RightArm => "Right Arm",
            BpqGroup::LeftLeg => "Left Leg",
            BpqGroup::RightLeg => "Right Leg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BpqLabel {
    Good,
    #[serde(rename = "Partially Good", alias = "PartiallyGood")]
    PartiallyGood,
    Bad,
    #[serde(rename = "Not Relevant", alias = "NotRelevant")]
    NotRelevant,
}

/// One human judgement of a plan (HPS) or an animation (WBS + BPQ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub target_kind: TargetKind,
    pub motion_id: u32,
    pub system_tag: String,
    pub score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bpq: Option<BTreeMap<BpqGroup, BpqLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub comment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<String>,
}

impl RatingRecord {
    /// Rubric checks: score in 1-5, BPQ present with all six groups iff the
    /// target is an animation.
    pub fn validate(&self) -> Result<(), EvalError> {
        let mut problems = Vec::new();
        if self.rater_id.trim().is_empty() {
            problems.push("empty rater id".to_string());
        }
        if !(1..=5).contains(&self.score) {
            problems.push(format!("{} score {} outside 1-5", self.target_kind.metric(), self.score));
        }
        match (self.target_kind, &self.bpq) {
            (TargetKind::Animation, None) => problems.push("animation rating without BPQ".into()),
            (TargetKind::Animation, Some(bpq)) => {
                for g in BPQ_GROUPS {
                    if !bpq.contains_key(&g) {
                        problems.push(format!("missing BPQ group {}", g.as_str()));
                    }
                }
            }
            (TargetKind::HighLevelPlan, Some(_)) => problems.push("plan rating carries BPQ".into()),
            (TargetKind::HighLevelPlan, None) => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(EvalError::InvalidInput(problems.join("; ")))
        }
    }

    /// Identity of the rated item, shared across raters.
    pub fn item_key(&self) -> (TargetKind, u32, String) {
        (self.target_kind, self.motion_id, self.system_tag.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaWeighting {
    #[default]
    Linear,
    Quadratic,
}

impl FromStr for KappaWeighting {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "linear" => Ok(KappaWeighting::Linear),
            "quadratic" => Ok(KappaWeighting::Quadratic),
            other => Err(EvalError::InvalidInput(format!("unknown kappa weighting {other:?}"))),
        }
    }
}

impl KappaWeighting {
    pub fn as_str(self) -> &'static str {
        match self {
            KappaWeighting::Linear => "linear",
            KappaWeighting::Quadratic => "quadratic",
        }
    }

    fn weight(self, i: usize, j: usize, k: usize) -> f64 {
        if k < 2 {
            return 0.0;
        }
        let d = (i as f64 - j as f64).abs() / (k - 1) as f64;
        match self {
            KappaWeighting::Linear => d,
            KappaWeighting::Quadratic => d * d,
        }
    }
}

/// Weighted Cohen's kappa for paired ratings on the scale 1..=k. When the
/// chance-expected disagreement is zero (both raters constant on the same
/// category) the result is 1.
pub fn weighted_kappa(a: &[u8], b: &[u8], k: u8, weighting: KappaWeighting) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::ShapeMismatch(format!("{} vs {} ratings", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(EvalError::InvalidInput("no paired ratings".into()));
    }
    let k = k as usize;
    if let Some(bad) = a.iter().chain(b).find(|v| **v == 0 || **v as usize > k) {
        return Err(EvalError::InvalidInput(format!("rating {bad} outside 1..={k}")));
    }
    let n = a.len() as f64;
    let mut observed = vec![vec![0.0; k]; k];
    let mut ma = vec![0.0; k];
    let mut mb = vec![0.0; k];
    for (x, y) in a.iter().zip(b) {
        let (i, j) = (*x as usize - 1, *y as usize - 1);
        observed[i][j] += 1.0 / n;
        ma[i] += 1.0 / n;
        mb[j] += 1.0 / n;
    }
    let mut wo = 0.0;
    let mut we = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = weighting.weight(i, j, k);
            wo += w * observed[i][j];
            we += w * ma[i] * mb[j];
        }
    }
    if we == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - wo / we)
}

/// Mean over unordered rater pairs of the fraction of items with identical labels.
pub fn average_pairwise_agreement<T: PartialEq>(labels: &BTreeMap<String, Vec<T>>) -> Result<f64, EvalError> {
    if labels.len() < 2 {
        return Err(EvalError::InvalidInput("need at least two raters".into()));
    }
    let lists: Vec<&Vec<T>> = labels.values().collect();
    let items = lists[0].len();
    if items == 0 || lists.iter().any(|l| l.len() != items) {
        return Err(EvalError::ShapeMismatch("raters labelled different item counts".into()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..lists.len() {
        for j in i + 1..lists.len() {
            let same = lists[i].iter().zip(lists[j]).filter(|(x, y)| x == y).count();
            total += same as f64 / items as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementBand {
    SlightOrWorse,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl AgreementBand {
    pub fn label(self) -> &'static str {
        match self {
            AgreementBand::SlightOrWorse => "slight or worse",
            AgreementBand::Fair => "fair",
            AgreementBand::Moderate => "moderate",
            AgreementBand::Substantial => "substantial",
            AgreementBand::AlmostPerfect => "almost perfect",
        }
    }
}

impl fmt::Display for AgreementBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bands: (-inf, 0.20] slight or worse, (0.20, 0.40) fair, [0.40, 0.60)
/// moderate, [0.60, 0.80] substantial, above 0.80 almost perfect.
pub fn classify_agreement(kappa: f64) -> AgreementBand {
    if kappa <= 0.20 {
        AgreementBand::SlightOrWorse
    } else if kappa < 0.40 {
        AgreementBand::Fair
    } else if kappa < 0.60 {
        AgreementBand::Moderate
    } else if kappa <= 0.80 {
        AgreementBand::Substantial
    } else {
        AgreementBand::AlmostPerfect
    }
}

/// Pairwise kappa between raters over the items both rated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaMatrix {
    pub target_kind: TargetKind,
    pub weighting: KappaWeighting,
    pub raters: Vec<String>,
    /// `None` where two raters share no item.
    pub values: Vec<Vec<Option<f64>>>,
    pub average: Option<f64>,
    pub band: Option<AgreementBand>,
}

pub fn kappa_matrix(records: &[RatingRecord], target_kind: TargetKind, weighting: KappaWeighting) -> KappaMatrix {
    let mut by_rater: BTreeMap<&str, BTreeMap<(u32, &str), u8>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.target_kind == target_kind) {
        // Later submissions for the same item replace earlier ones.
        by_rater.entry(&r.rater_id).or_default().insert((r.motion_id, &r.system_tag), r.score);
    }
    let raters: Vec<&str> = by_rater.keys().copied().collect();
    let n = raters.len();
    let mut values = vec![vec![None; n]; n];
    let mut off = Vec::new();
    for i in 0..n {
        values[i][i] = Some(1.0);
        for j in i + 1..n {
            let (ri, rj) = (&by_rater[raters[i]], &by_rater[raters[j]]);
            let shared: Vec<_> = ri.keys().filter(|k| rj.contains_key(*k)).collect();
            if shared.is_empty() {
                continue;
            }
            let a: Vec<u8> = shared.iter().map(|k| ri[*k]).collect();
            let b: Vec<u8> = shared.iter().map(|k| rj[*k]).collect();
            if let Ok(v) = weighted_kappa(&a, &b, 5, weighting) {
                values[i][j] = Some(v);
                values[j][i] = Some(v);
                off.push(v);
            }
        }
    }
    let average = if off.is_empty() { None } else { Some(off.iter().sum::<f64>() / off.len() as f64) };
    KappaMatrix {
        target_kind,
        weighting,
        raters: raters.into_iter().map(String::from).collect(),
        values,
        average,
        band: average.map(classify_agreement),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpqShare {
    pub good: f64,
    pub partially_good: f64,
    pub bad: f64,
    /// Labels other than Not Relevant.
    pub counted: usize,
    pub not_relevant: usize,
}

/// Percentages of Good / Partially Good / Bad per system tag and group,
/// excluding Not Relevant labels.
pub fn aggregate_bpq(records: &[RatingRecord]) -> BTreeMap<String, BTreeMap<BpqGroup, BpqShare>> {
    let mut tally: BTreeMap<String, BTreeMap<BpqGroup, [usize; 4]>> = BTreeMap::new();
    for r in records {
        let Some(bpq) = &r.bpq else { continue };
        let groups = tally.entry(r.system_tag.clone()).or_default();
        for (g, l) in bpq {
            let slot = match l {
                BpqLabel::Good => 0,
                BpqLabel::PartiallyGood => 1,
                BpqLabel::Bad => 2,
                BpqLabel::NotRelevant => 3,
            };
            groups.entry(*g).or_default()[slot] += 1;
        }
    }
    tally
        .into_iter()
        .map(|(tag, groups)| {
            let shares = groups
                .into_iter()
                .map(|(g, c)| {
                    let counted = c[0] + c[1] + c[2];
                    let pct = |x: usize| if counted == 0 { 0.0 } else { 100.0 * x as f64 / counted as f64 };
                    (g, BpqShare { good: pct(c[0]), partially_good: pct(c[1]), bad: pct(c[2]), counted, not_relevant: c[3] })
                })
                .collect();
            (tag, shares)
        })
        .collect()
}

/// Distinct raters in `records`.
pub fn raters(records: &[RatingRecord]) -> BTreeSet<&str> {
    records.iter().map(|r| r.rater_id.as_str()).collect()
}
