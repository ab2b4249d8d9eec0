//! Discrete pose vocabulary for the sixteen preset body parts.
//!
//! Every body part owns a finite set of position tokens (`neutral`,
//! `bent_in_90_degrees`, ...) and a decision tree whose questions narrow a
//! choice from coarse to atomic. The bundled data lives in
//! `data/taxonomy.json`; the file format is documented in `docs/formats.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_TAXONOMY: &str = include_str!("../data/taxonomy.json");

/// Deepest question chain any tree may have.
pub const MAX_TREE_DEPTH: usize = 5;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("failed to parse taxonomy: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("failed to read taxonomy file: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown body part `{0}`")]
    UnknownPart(String),
}

/// One of the sixteen preset body parts, in canonical query order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BodyPartId {
    Head,
    Torso,
    LeftUpperArm,
    RightUpperArm,
    LeftElbow,
    RightElbow,
    LeftWrist,
    RightWrist,
    LeftUpperLeg,
    RightUpperLeg,
    LeftKnee,
    RightKnee,
    LeftAnkle,
    RightAnkle,
    LeftToes,
    RightToes,
}

/// Body part kind shared by a left/right pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartKind {
    Head,
    Torso,
    UpperArm,
    Elbow,
    Wrist,
    UpperLeg,
    Knee,
    Ankle,
    Toes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl BodyPartId {
    pub const ALL: [BodyPartId; 16] = [
        BodyPartId::Head,
        BodyPartId::Torso,
        BodyPartId::LeftUpperArm,
        BodyPartId::RightUpperArm,
        BodyPartId::LeftElbow,
        BodyPartId::RightElbow,
        BodyPartId::LeftWrist,
        BodyPartId::RightWrist,
        BodyPartId::LeftUpperLeg,
        BodyPartId::RightUpperLeg,
        BodyPartId::LeftKnee,
        BodyPartId::RightKnee,
        BodyPartId::LeftAnkle,
        BodyPartId::RightAnkle,
        BodyPartId::LeftToes,
        BodyPartId::RightToes,
    ];

    pub fn as_str(self) -> &'static str {
        use BodyPartId::*;
        match self {
            Head => "Head",
            Torso => "Torso",
            LeftUpperArm => "LeftUpperArm",
            RightUpperArm => "RightUpperArm",
            LeftElbow => "LeftElbow",
            RightElbow => "RightElbow",
            LeftWrist => "LeftWrist",
            RightWrist => "RightWrist",
            LeftUpperLeg => "LeftUpperLeg",
            RightUpperLeg => "RightUpperLeg",
            LeftKnee => "LeftKnee",
            RightKnee => "RightKnee",
            LeftAnkle => "LeftAnkle",
            RightAnkle => "RightAnkle",
            LeftToes => "LeftToes",
            RightToes => "RightToes",
        }
    }

    pub fn kind(self) -> PartKind {
        use BodyPartId::*;
        match self {
            Head => PartKind::Head,
            Torso => PartKind::Torso,
            LeftUpperArm | RightUpperArm => PartKind::UpperArm,
            LeftElbow | RightElbow => PartKind::Elbow,
            LeftWrist | RightWrist => PartKind::Wrist,
            LeftUpperLeg | RightUpperLeg => PartKind::UpperLeg,
            LeftKnee | RightKnee => PartKind::Knee,
            LeftAnkle | RightAnkle => PartKind::Ankle,
            LeftToes | RightToes => PartKind::Toes,
        }
    }

    pub fn side(self) -> Option<Side> {
        match self {
            BodyPartId::Head | BodyPartId::Torso => None,
            p if p.as_str().starts_with("Left") => Some(Side::Left),
            _ => Some(Side::Right),
        }
    }

    /// The mirrored counterpart, if this part is one of a left/right pair.
    pub fn paired(self) -> Option<BodyPartId> {
        let idx = Self::ALL.iter().position(|p| *p == self)?;
        match self.side()? {
            Side::Left => Some(Self::ALL[idx + 1]),
            Side::Right => Some(Self::ALL[idx - 1]),
        }
    }
}

impl fmt::Display for BodyPartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BodyPartId {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| TaxonomyError::UnknownPart(s.to_string()))
    }
}

impl PartKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PartKind::Head => "Head",
            PartKind::Torso => "Torso",
            PartKind::UpperArm => "UpperArm",
            PartKind::Elbow => "Elbow",
            PartKind::Wrist => "Wrist",
            PartKind::UpperLeg => "UpperLeg",
            PartKind::Knee => "Knee",
            PartKind::Ankle => "Ankle",
            PartKind::Toes => "Toes",
        }
    }

    /// Part kinds in canonical order, each listed once.
    pub fn all() -> Vec<PartKind> {
        let mut out: Vec<PartKind> = Vec::new();
        for p in BodyPartId::ALL {
            if !out.contains(&p.kind()) {
                out.push(p.kind());
            }
        }
        out
    }
}

impl fmt::Display for PartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All sixteen parts in canonical order. Left/right counterparts are adjacent.
pub fn list_body_parts() -> &'static [BodyPartId; 16] {
    &BodyPartId::ALL
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionSpec {
    pub id: String,
    pub description: String,
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OptionTarget {
    Position(String),
    Node(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionNode {
    pub question: String,
    /// Option label to target, in presentation order.
    pub options: Vec<(String, OptionTarget)>,
}

impl DecisionNode {
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.options.iter().map(|(l, _)| l.as_str())
    }

    pub fn target(&self, label: &str) -> Option<&OptionTarget> {
        self.options.iter().find(|(l, _)| l == label).map(|(_, t)| t)
    }
}

/// Question tree stored as an arena so that malformed (cyclic) trees can be
/// represented and reported by [`validate_taxonomy`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTree {
    pub nodes: Vec<DecisionNode>,
    pub root: NodeId,
}

impl DecisionTree {
    pub fn root(&self) -> &DecisionNode {
        &self.nodes[self.root]
    }

    pub fn node(&self, id: NodeId) -> Option<&DecisionNode> {
        self.nodes.get(id)
    }

    /// Leaf tokens in depth-first option order. Edges that would revisit a
    /// node on the current path are skipped.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.collect_leaves(self.root, &mut path, &mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, id: NodeId, path: &mut Vec<NodeId>, out: &mut Vec<&'a str>) {
        let Some(node) = self.nodes.get(id) else { return };
        path.push(id);
        for (_, target) in &node.options {
            match target {
                OptionTarget::Position(tok) => out.push(tok),
                OptionTarget::Node(child) if !path.contains(child) => {
                    self.collect_leaves(*child, path, out)
                }
                OptionTarget::Node(_) => {}
            }
        }
        path.pop();
    }

    /// Number of questions on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, id: NodeId, path: &mut Vec<NodeId>) -> usize {
            let Some(node) = t.nodes.get(id) else { return 0 };
            path.push(id);
            let mut deepest = 0;
            for (_, target) in &node.options {
                if let OptionTarget::Node(c) = target {
                    if !path.contains(c) {
                        deepest = deepest.max(go(t, *c, path));
                    }
                }
            }
            path.pop();
            deepest + 1
        }
        go(self, self.root, &mut Vec::new())
    }

    /// Follow option labels from the root. Returns the reached token, or
    /// `None` if a label is unknown or the path stops at a question.
    pub fn walk<S: AsRef<str>>(&self, labels: &[S]) -> Option<&str> {
        let mut node = self.root();
        for (i, label) in labels.iter().enumerate() {
            match node.target(label.as_ref())? {
                OptionTarget::Position(tok) => {
                    return (i + 1 == labels.len()).then_some(tok.as_str());
                }
                OptionTarget::Node(id) => node = self.node(*id)?,
            }
        }
        None
    }

    fn from_raw(raw: &RawNode) -> Self {
        let mut tree = DecisionTree { nodes: Vec::new(), root: 0 };
        tree.root = tree.push_raw(raw);
        tree
    }

    fn push_raw(&mut self, raw: &RawNode) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(DecisionNode { question: raw.question.clone(), options: Vec::new() });
        let mut options = Vec::with_capacity(raw.options.len());
        for (label, target) in &raw.options {
            let t = match target {
                RawTarget::Leaf(tok) => OptionTarget::Position(tok.clone()),
                RawTarget::Node(child) => OptionTarget::Node(self.push_raw(child)),
            };
            options.push((label.clone(), t));
        }
        self.nodes[id].options = options;
        id
    }

    fn to_raw(&self, id: NodeId, path: &mut Vec<NodeId>) -> RawNode {
        let node = &self.nodes[id];
        path.push(id);
        let mut options = IndexMap::new();
        for (label, target) in &node.options {
            let raw = match target {
                OptionTarget::Position(tok) => RawTarget::Leaf(tok.clone()),
                OptionTarget::Node(c) if !path.contains(c) && *c < self.nodes.len() => {
                    RawTarget::Node(Box::new(self.to_raw(*c, path)))
                }
                // Cycles and dangling references cannot be written out.
                OptionTarget::Node(_) => continue,
            };
            options.insert(label.clone(), raw);
        }
        path.pop();
        RawNode { question: node.question.clone(), options }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartEntry {
    pub positions: Vec<PositionSpec>,
    pub tree: DecisionTree,
}

impl PartEntry {
    pub fn position(&self, token: &str) -> Option<&PositionSpec> {
        self.positions.iter().find(|p| p.id == token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoseTaxonomy {
    pub version: String,
    pub parts: BTreeMap<BodyPartId, PartEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawNode {
    question: String,
    options: IndexMap<String, RawTarget>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawTarget {
    Leaf(String),
    Node(Box<RawNode>),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPart {
    positions: Vec<PositionSpec>,
    tree: RawNode,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawTaxonomy {
    version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    descriptions: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question_suffix: Option<String>,
    parts: IndexMap<BodyPartId, RawPart>,
}

impl PoseTaxonomy {
    /// The taxonomy shipped with the crate.
    pub fn bundled() -> &'static PoseTaxonomy {
        static CELL: OnceLock<PoseTaxonomy> = OnceLock::new();
        CELL.get_or_init(|| {
            PoseTaxonomy::from_json_str(BUNDLED_TAXONOMY).expect("bundled taxonomy must parse")
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self, TaxonomyError> {
        let raw: RawTaxonomy = serde_json::from_str(s)?;
        let parts = raw
            .parts
            .iter()
            .map(|(id, p)| {
                let entry =
                    PartEntry { positions: p.positions.clone(), tree: DecisionTree::from_raw(&p.tree) };
                (*id, entry)
            })
            .collect();
        Ok(PoseTaxonomy { version: raw.version, parts })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawTaxonomy {
            version: self.version.clone(),
            descriptions: None,
            question_suffix: None,
            parts: self
                .parts
                .iter()
                .map(|(id, e)| {
                    let tree = e.tree.to_raw(e.tree.root, &mut Vec::new());
                    (*id, RawPart { positions: e.positions.clone(), tree })
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("taxonomy serializes")
    }

    pub fn part(&self, part: BodyPartId) -> &PartEntry {
        self.parts.get(&part).unwrap_or_else(|| panic!("taxonomy has no entry for {part}"))
    }

    pub fn positions_for(&self, part: BodyPartId) -> &[PositionSpec] {
        &self.part(part).positions
    }

    pub fn decision_tree(&self, part: BodyPartId) -> &DecisionTree {
        &self.part(part).tree
    }

    pub fn position(&self, part: BodyPartId, token: &str) -> Option<&PositionSpec> {
        self.parts.get(&part)?.position(token)
    }

    pub fn contains(&self, part: BodyPartId, token: &str) -> bool {
        self.position(part, token).is_some()
    }

    /// Description for a token, or the token itself when unknown.
    pub fn describe<'a>(&'a self, part: BodyPartId, token: &'a str) -> &'a str {
        self.position(part, token).map(|p| p.description.as_str()).unwrap_or(token)
    }
}

/// Positions of `part` in the bundled taxonomy.
pub fn positions_for(part: BodyPartId) -> &'static [PositionSpec] {
    PoseTaxonomy::bundled().positions_for(part)
}

/// Decision tree of `part` in the bundled taxonomy.
pub fn decision_tree(part: BodyPartId) -> &'static DecisionTree {
    PoseTaxonomy::bundled().decision_tree(part)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ViolationKind {
    MissingPart,
    MissingNeutral,
    NeutralNotAtRoot,
    DuplicatePosition { token: String },
    LeafSetMismatch { missing: Vec<String>, extra: Vec<String> },
    Cycle { target: NodeId },
    DanglingNode { target: NodeId },
    EmptyOptions,
    DepthExceeded { depth: usize },
    PairMismatch { paired: BodyPartId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub part: BodyPartId,
    /// Option labels from the root to the offending node; empty for part-level rules.
    pub path: Vec<String>,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {:?}", self.part, self.path.join(" > "), self.kind)
    }
}

/// Check every structural rule of the taxonomy. An empty result means the
/// taxonomy is usable by the planners.
pub fn validate_taxonomy(taxonomy: &PoseTaxonomy) -> Vec<Violation> {
    let mut out = Vec::new();
    for part in BodyPartId::ALL {
        let Some(entry) = taxonomy.parts.get(&part) else {
            out.push(Violation { part, path: vec![], kind: ViolationKind::MissingPart });
            continue;
        };
        validate_part(part, entry, &mut out);
    }
    for part in BodyPartId::ALL {
        if part.side() != Some(Side::Left) {
            continue;
        }
        let paired = part.paired().expect("left parts are paired");
        if let (Some(l), Some(r)) = (taxonomy.parts.get(&part), taxonomy.parts.get(&paired)) {
            let mirrored = swap_sides(&l.tree.to_raw(l.tree.root, &mut Vec::new()));
            let right = serde_json::to_value(r.tree.to_raw(r.tree.root, &mut Vec::new()))
                .expect("tree serializes");
            if mirrored != right {
                out.push(Violation { part, path: vec![], kind: ViolationKind::PairMismatch { paired } });
            }
        }
    }
    out
}

fn validate_part(part: BodyPartId, entry: &PartEntry, out: &mut Vec<Violation>) {
    let mut seen = BTreeSet::new();
    for p in &entry.positions {
        if !seen.insert(p.id.as_str()) {
            out.push(Violation {
                part,
                path: vec![],
                kind: ViolationKind::DuplicatePosition { token: p.id.clone() },
            });
        }
    }
    if !seen.contains("neutral") {
        out.push(Violation { part, path: vec![], kind: ViolationKind::MissingNeutral });
    }

    let tree = &entry.tree;
    if tree.node(tree.root).is_none() {
        out.push(Violation { part, path: vec![], kind: ViolationKind::DanglingNode { target: tree.root } });
        return;
    }
    let root_has_neutral = tree
        .root()
        .options
        .iter()
        .any(|(_, t)| matches!(t, OptionTarget::Position(tok) if tok == "neutral"));
    if !root_has_neutral {
        out.push(Violation { part, path: vec![], kind: ViolationKind::NeutralNotAtRoot });
    }

    let mut path_nodes = Vec::new();
    let mut labels = Vec::new();
    check_nodes(part, tree, tree.root, &mut path_nodes, &mut labels, out);

    let depth = tree.depth();
    if depth > MAX_TREE_DEPTH {
        out.push(Violation { part, path: vec![], kind: ViolationKind::DepthExceeded { depth } });
    }

    // Multiset comparison: duplicates on either side count as a mismatch.
    let mut leaves: Vec<String> = tree.leaves().into_iter().map(str::to_string).collect();
    let mut positions: Vec<String> = entry.positions.iter().map(|p| p.id.clone()).collect();
    leaves.sort();
    positions.sort();
    if leaves != positions {
        let (missing, extra) = multiset_diff(&positions, &leaves);
        out.push(Violation {
            part,
            path: vec![],
            kind: ViolationKind::LeafSetMismatch { missing, extra },
        });
    }
}

fn check_nodes(
    part: BodyPartId,
    tree: &DecisionTree,
    id: NodeId,
    path_nodes: &mut Vec<NodeId>,
    labels: &mut Vec<String>,
    out: &mut Vec<Violation>,
) {
    let node = &tree.nodes[id];
    if node.options.is_empty() {
        out.push(Violation { part, path: labels.clone(), kind: ViolationKind::EmptyOptions });
    }
    path_nodes.push(id);
    for (label, target) in &node.options {
        if let OptionTarget::Node(child) = target {
            labels.push(label.clone());
            if path_nodes.contains(child) {
                out.push(Violation {
                    part,
                    path: labels.clone(),
                    kind: ViolationKind::Cycle { target: *child },
                });
            } else if tree.node(*child).is_none() {
                out.push(Violation {
                    part,
                    path: labels.clone(),
                    kind: ViolationKind::DanglingNode { target: *child },
                });
            } else {
                check_nodes(part, tree, *child, path_nodes, labels, out);
            }
            labels.pop();
        }
    }
    path_nodes.pop();
}

fn multiset_diff(expected: &[String], actual: &[String]) -> (Vec<String>, Vec<String>) {
    let mut missing = Vec::new();
    let mut rest: Vec<&String> = actual.iter().collect();
    for e in expected {
        match rest.iter().position(|a| *a == e) {
            Some(i) => {
                rest.remove(i);
            }
            None => missing.push(e.clone()),
        }
    }
    (missing, rest.into_iter().cloned().collect())
}

fn swap_sides(raw: &RawNode) -> serde_json::Value {
    let text = serde_json::to_string(raw).expect("tree serializes");
    let re = regex::Regex::new(r"\bleft\b").expect("valid regex");
    serde_json::from_str(&re.replace_all(&text, "right")).expect("still valid json")
}
