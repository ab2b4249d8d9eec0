//! Prompt templates and their renderers.
//!
//! Template bodies are reproduced verbatim, typos included. Step numbers are
//! glued to the word ("Step1"), matching the placeholder layout of the
//! original listing. The JSON format notes are an addition: they are appended
//! after a blank line and can be switched off with [`FormatNotes::Off`].

use crate::skeleton::Skeleton;
use crate::taxonomy::{BodyPartId, DecisionNode, OptionTarget, PositionSpec};

pub const SYSTEM_PROMPT: &str = "You will be given a textual human motion instruction, followed by a sequence of clarification questions about different aspects about the motion. You should use your daily knowledge about human motions to answer the questions accurately and concisely.";

pub const SETUP: &str = "The human initially stands naturally with arms hanging beside the body. The textual human motion instruction is \"{motion instruction}\".";
pub const MOVEMENT: &str = "What are the movements of relevant body parts in Step{step number}? The movements should be simple enough to be only **single-directional**.";
pub const INITIAL_STATE: &str = "What are the initial states of relevant body parts in Step{step number}?";
pub const FINAL_STATE: &str = "What are the final states of relevant body parts in Step{step number}?";
pub const TIMING: &str = "How long does Step{step number} last in the second unit?";
pub const IS_END: &str = "Is it the end of this motion?";

pub const IN_ONE_GO: &str = "The human initially stands naturally with arms hanging beside the body. The textual human motion instruction is \"{motion instruction}\". Decompose it step-by-step with three language descriptions for each step (one for the initial state of moved body parts, one for the final state of moved body parts and one for the movement). Each step should be simple enough to include only **single-direction** motions for all moved body parts. Estimate a time range in the second unit for each step (the end time of the last step should exactly be the start time of the next step).";

pub const STEP_SETUP: &str = "The human initially stands naturally with arms hanging beside the body. The textual human motion instruction is \"{motion instruction}\". In the high-leve plan of Step{step number}, the initial states of relevant body parts are \"{initial states}\", the final states of relevant body parts are \"{final states}\", and the movements of relevant body parts are \"{movements}\".";
pub const LANGUAGE_DESCRIPTION: &str = "The last position of {body part} is **{position}** ({description}). Describe the movement of this body part during Step{step number} and final position at the end of the step in language.";
pub const ONE_BY_ONE_CHOICE: &str = "The last position of {body part} is **{position}** ({description}). Is the next position **{next position}** ({next description})?";
pub const ALL_CHOICE: &str = "There are multiple possible positions for {body part}:\n{positions with descriptions}\nThe last position of this body part is **{position}**. Choose the next position from the options above.";
pub const REFLECTION_ANALYSIS: &str = "Analyze this body part with its planned next position. Is this body part necessary for this step? If so, does the planned next position of this body part achieve the goal final state in the high-level plan?";
pub const REFLECTION_JUDGEMENT: &str = "Do you think there's need to replan this body part in order to achieve the goal final state in the high-level plan? Give your judgement.";
pub const CORRECTION: &str = "You think that: {reflection}. So the next position of {body part} should not be **{position}**.\nBased on the thought, replan this body part in Step{step number}.";

// Raw-parameter mode. These have no published wording.
pub const RAW_SETUP: &str = "The human avatar is a skeleton of named joints. In the rest pose it stands naturally with arms hanging beside the body. Joint names and rest-pose world coordinates in meters (+X is the avatar's left, +Y is up, +Z is forward):\n{joint table}\nEach joint rotation is three angles in degrees [x, y, z], applied about the parent's axes: z first (roll about the forward axis; positive swings an upward-pointing segment toward the avatar's right), then y (pitch about the axis pointing to the avatar's right; positive swings a downward-pointing segment forward, so positive y bends an elbow), then x (yaw about the vertical axis; positive turns toward the avatar's left). The root may also translate in meters along the same world axes.";
pub const RAW_JOINTS: &str = "Which joints rotate in Step{step number}?";
pub const RAW_DIRECTIONS: &str = "In which directions do these joints rotate in Step{step number}?";
pub const RAW_QUANTITIES: &str = "By how many degrees does each of these joints rotate in Step{step number}, and how far does the root move?";

pub const NOTE_IN_ONE_GO: &str = "Reply with a fenced ```json block holding a list of steps, each an object with the keys \"step_number\", \"time_range\" ([start, end] in seconds), \"movement\", \"initial_state\" and \"final_state\".";
pub const NOTE_TIMING: &str = "End your reply with a fenced ```json block of the form {\"seconds\": <number>}.";
pub const NOTE_YES_NO: &str = "End your reply with a fenced ```json block of the form {\"answer\": \"yes\"} or {\"answer\": \"no\"}.";
pub const NOTE_CHOICE: &str = "End your reply with a fenced ```json block of the form {\"choice\": \"<option>\"}.";
pub const NOTE_JUDGEMENT: &str = "End your reply with a fenced ```json block of the form {\"replan\": true} or {\"replan\": false}.";
pub const NOTE_RAW_QUANTITIES: &str = "Reply with a fenced ```json block of the form {\"joints\": [{\"joint\": \"<joint name>\", \"direction\": \"<text>\", \"rotation\": [x, y, z]}], \"root_translation\": [x, y, z], \"root_rotation\": [x, y, z]}. Rotations are changes relative to the end of the previous step.";

pub const NUDGE: &str = "Please reply in the requested format.";

/// Whether machine-readable format notes are appended to prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatNotes {
    #[default]
    On,
    Off,
}

impl FormatNotes {
    pub fn apply(self, prompt: String, note: &str) -> String {
        match self {
            FormatNotes::On => format!("{prompt}\n\n{note}"),
            FormatNotes::Off => prompt,
        }
    }
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    // Single left-to-right pass so substituted text is never re-scanned.
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        match pairs.iter().find(|(k, _)| tail[1..].starts_with(k) && tail[1 + k.len()..].starts_with('}')) {
            Some((k, v)) => {
                out.push_str(v);
                rest = &tail[k.len() + 2..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn setup(instruction: &str) -> String {
    fill(SETUP, &[("motion instruction", instruction)])
}

pub fn movement(step: u32) -> String {
    fill(MOVEMENT, &[("step number", &step.to_string())])
}

pub fn initial_state(step: u32) -> String {
    fill(INITIAL_STATE, &[("step number", &step.to_string())])
}

pub fn final_state(step: u32) -> String {
    fill(FINAL_STATE, &[("step number", &step.to_string())])
}

pub fn timing(step: u32) -> String {
    fill(TIMING, &[("step number", &step.to_string())])
}

pub fn is_end() -> String {
    IS_END.to_string()
}

pub fn in_one_go(instruction: &str) -> String {
    fill(IN_ONE_GO, &[("motion instruction", instruction)])
}

pub fn step_setup(instruction: &str, step: u32, initial: &str, final_: &str, movements: &str) -> String {
    fill(
        STEP_SETUP,
        &[
            ("motion instruction", instruction),
            ("step number", &step.to_string()),
            ("initial states", initial),
            ("final states", final_),
            ("movements", movements),
        ],
    )
}

pub fn language_description(part: BodyPartId, last: &PositionSpec, step: u32) -> String {
    fill(
        LANGUAGE_DESCRIPTION,
        &[
            ("body part", part.as_str()),
            ("position", &last.id),
            ("description", &last.description),
            ("step number", &step.to_string()),
        ],
    )
}

/// A tree node's question followed by its option labels.
pub fn hierarchical_choice(node: &DecisionNode) -> String {
    let labels: Vec<&str> = node.labels().collect();
    format!("{} [{}].", node.question, labels.join(", "))
}

pub fn one_by_one_choice(part: BodyPartId, last: &PositionSpec, candidate: &PositionSpec) -> String {
    fill(
        ONE_BY_ONE_CHOICE,
        &[
            ("body part", part.as_str()),
            ("position", &last.id),
            ("description", &last.description),
            ("next position", &candidate.id),
            ("next description", &candidate.description),
        ],
    )
}

pub fn positions_with_descriptions(positions: &[PositionSpec]) -> String {
    positions
        .iter()
        .map(|p| format!("- {}: {}", p.id, p.description))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn all_choice(part: BodyPartId, positions: &[PositionSpec], last: &str) -> String {
    fill(
        ALL_CHOICE,
        &[
            ("body part", part.as_str()),
            ("positions with descriptions", &positions_with_descriptions(positions)),
            ("position", last),
        ],
    )
}

pub fn reflection_analysis() -> String {
    REFLECTION_ANALYSIS.to_string()
}

pub fn reflection_judgement() -> String {
    REFLECTION_JUDGEMENT.to_string()
}

pub fn correction(reflection: &str, part: BodyPartId, rejected: &str, step: u32) -> String {
    fill(
        CORRECTION,
        &[
            ("reflection", reflection),
            ("body part", part.as_str()),
            ("position", rejected),
            ("step number", &step.to_string()),
        ],
    )
}

pub fn joint_table(skeleton: &Skeleton) -> String {
    let fk = skeleton.forward_kinematics(&skeleton.neutral_pose());
    fk.iter()
        .map(|(name, p)| format!("- {name}: [{:.3}, {:.3}, {:.3}]", p[0], p[1], p[2]))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn raw_setup(skeleton: &Skeleton) -> String {
    fill(RAW_SETUP, &[("joint table", &joint_table(skeleton))])
}

pub fn raw_joints(step: u32) -> String {
    fill(RAW_JOINTS, &[("step number", &step.to_string())])
}

pub fn raw_directions(step: u32) -> String {
    fill(RAW_DIRECTIONS, &[("step number", &step.to_string())])
}

pub fn raw_quantities(step: u32) -> String {
    fill(RAW_QUANTITIES, &[("step number", &step.to_string())])
}

/// Re-ask text listing the admissible labels.
pub fn choice_nudge(labels: &[&str]) -> String {
    format!("{NUDGE} Choose exactly one of [{}].", labels.join(", "))
}

/// Every option label reachable from a node, paired with the label it
/// resolves to at that node: the label itself plus every leaf token beneath it.
pub fn option_aliases(tree: &crate::taxonomy::DecisionTree, node: &DecisionNode) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (label, target) in &node.options {
        out.push((label.clone(), label.clone()));
        let mut stack = vec![target];
        let mut seen = Vec::new();
        while let Some(t) = stack.pop() {
            match t {
                OptionTarget::Position(tok) => {
                    if tok != label {
                        out.push((tok.clone(), label.clone()));
                    }
                }
                OptionTarget::Node(id) => {
                    if seen.contains(id) {
                        continue;
                    }
                    seen.push(*id);
                    if let Some(n) = tree.node(*id) {
                        stack.extend(n.options.iter().map(|(_, t)| t));
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{decision_tree, positions_for};

    #[test]
    fn placeholders_are_filled_once() {
        let s = setup("say {step number}");
        assert_eq!(
            s,
            "The human initially stands naturally with arms hanging beside the body. The textual human motion instruction is \"say {step number}\"."
        );
    }

    #[test]
    fn step_number_has_no_space() {
        assert_eq!(timing(3), "How long does Step3 last in the second unit?");
    }

    #[test]
    fn correction_uses_a_real_newline() {
        let c = correction("It should be bent", BodyPartId::LeftElbow, "neutral", 2);
        assert_eq!(
            c,
            "You think that: It should be bent. So the next position of LeftElbow should not be **neutral**.\nBased on the thought, replan this body part in Step2."
        );
    }

    #[test]
    fn all_choice_lists_every_elbow_position() {
        let p = all_choice(BodyPartId::LeftElbow, positions_for(BodyPartId::LeftElbow), "neutral");
        assert_eq!(p.lines().filter(|l| l.starts_with("- ")).count(), 4);
    }

    #[test]
    fn hierarchical_prompt_appends_labels() {
        let tree = decision_tree(BodyPartId::LeftElbow);
        assert_eq!(
            hierarchical_choice(tree.root()),
            "At the end of this step, is the left elbow stright or bent? Choose one from [straight, bent]."
        );
    }

    #[test]
    fn aliases_cover_descendant_leaves() {
        let tree = decision_tree(BodyPartId::LeftElbow);
        let a = option_aliases(tree, tree.root());
        assert!(a.contains(&("neutral".into(), "straight".into())));
        assert!(a.contains(&("fully_bent".into(), "bent".into())));
    }

    #[test]
    fn notes_can_be_disabled() {
        assert_eq!(FormatNotes::Off.apply(is_end(), NOTE_YES_NO), IS_END);
        assert!(FormatNotes::On.apply(is_end(), NOTE_YES_NO).ends_with(NOTE_YES_NO));
    }
}
