#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use motion_ground::high_level::{HighLevelPlan, HighLevelStep, HighStrategy, MotionInstruction};
use motion_ground::llm::{last_user, FnClient, LlmConfig, Message, Role};
use motion_ground::low_level::StepPoseAssignment;
use motion_ground::run::{self, LlmSource, PlanOptions};
use motion_ground::taxonomy::{BodyPartId, PoseTaxonomy};

pub const INSTRUCTION_3: &str = "Look down to check the time of the watch on the left wrist.";

pub fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every template rendered with the placeholder values used by the golden files.
pub fn rendered_prompts() -> Vec<(&'static str, String)> {
    use motion_ground::prompts as p;
    let tax = PoseTaxonomy::bundled();
    let part = BodyPartId::LeftElbow;
    let neutral = tax.position(part, "neutral").unwrap().clone();
    let bent90 = tax.position(part, "bent_in_90_degrees").unwrap().clone();
    let tree = tax.decision_tree(part);
    let root = tree.root();
    let bent_node = match root.target("bent").unwrap() {
        motion_ground::taxonomy::OptionTarget::Node(n) => tree.node(*n).unwrap(),
        other => panic!("unexpected {other:?}"),
    };
    vec![
        ("system", p::SYSTEM_PROMPT.to_string()),
        ("setup", p::setup(INSTRUCTION_3)),
        ("movement", p::movement(2)),
        ("initial_state", p::initial_state(2)),
        ("final_state", p::final_state(2)),
        ("timing", p::timing(2)),
        ("is_end", p::is_end()),
        ("in_one_go", p::in_one_go(INSTRUCTION_3)),
        (
            "step_setup",
            p::step_setup(
                INSTRUCTION_3,
                2,
                "head upright; left arm hanging",
                "head tilted down; left elbow bent",
                "head tilts down; left forearm rises",
            ),
        ),
        ("language_description", p::language_description(part, &neutral, 2)),
        ("choice_hierarchical_root", p::hierarchical_choice(root)),
        ("choice_hierarchical_bent", p::hierarchical_choice(bent_node)),
        ("choice_one_by_one", p::one_by_one_choice(part, &neutral, &bent90)),
        ("choice_all", p::all_choice(part, tax.positions_for(part), "neutral")),
        ("reflection_analysis", p::reflection_analysis()),
        ("reflection_judgement", p::reflection_judgement()),
        (
            "correction",
            p::correction("the elbow must bend further to bring the watch into view", part, "slightly_bent_in", 2),
        ),
    ]
}

fn desired(part: Option<BodyPartId>) -> &'static str {
    match part {
        Some(BodyPartId::Head) => "tilted_down_slightly",
        Some(BodyPartId::LeftElbow) => "bent_in_90_degrees",
        _ => "neutral",
    }
}

fn part_in(text: &str) -> Option<BodyPartId> {
    let lower = text.to_lowercase();
    if lower.contains("the head") || text.contains(" Head ") || text.contains("for Head:") {
        Some(BodyPartId::Head)
    } else if lower.contains("left elbow") || text.contains("LeftElbow") {
        Some(BodyPartId::LeftElbow)
    } else {
        None
    }
}

fn bracket_labels(prompt: &str) -> Option<Vec<String>> {
    let first = prompt.split("\n\n").next().unwrap_or(prompt);
    let open = first.rfind("Choose one from [")? + "Choose one from [".len();
    let close = first[open..].find(']')? + open;
    Some(first[open..close].split(", ").map(str::to_string).collect())
}

/// A cooperative model: two-step plans that tilt the head down and bend the
/// left elbow, answered from the prompt text alone.
pub fn cooperative(messages: &[Message]) -> String {
    let prompt = last_user(messages);
    if prompt.contains("skeleton of named joints") {
        return "```json\n[{\"step_number\": 1, \"time_range\": [0, 1.5], \"movement\": \"left forearm rises\", \
                \"initial_state\": \"arm hanging\", \"final_state\": \"elbow bent\"}]\n```"
            .into();
    }
    if prompt.contains("Decompose it step-by-step") {
        return "```json\n[\
                {\"step_number\": 1, \"time_range\": [0, 1.5], \"movement\": \"left forearm rises\", \"initial_state\": \"left arm hanging\", \"final_state\": \"left elbow bent\"},\
                {\"step_number\": 2, \"time_range\": [1.5, 2.5], \"movement\": \"head tilts down\", \"initial_state\": \"head upright\", \"final_state\": \"head tilted down\"}\
                ]\n```"
            .into();
    }
    if prompt.starts_with("The human initially stands naturally") {
        return "Understood.".into();
    }
    if prompt.starts_with("What are the movements") {
        return "The left forearm rises and the head tilts down.".into();
    }
    if prompt.starts_with("What are the initial states") {
        return "Head upright, left arm hanging.".into();
    }
    if prompt.starts_with("What are the final states") {
        return "Head tilted down, left elbow bent.".into();
    }
    if prompt.starts_with("How long does Step") {
        return "About 1.5 seconds.".into();
    }
    if prompt.starts_with("Is it the end of this motion?") {
        let asked = messages.iter().filter(|m| m.role == Role::User && m.content.starts_with("Is it the end")).count();
        return if asked >= 2 { "Yes, the motion ends here.".into() } else { "No, there is more.".into() };
    }
    if prompt.starts_with("Which joints rotate") {
        return "m_avg_L_Elbow".into();
    }
    if prompt.starts_with("In which directions") {
        return "The left elbow bends so the forearm comes forward.".into();
    }
    if prompt.starts_with("By how many degrees") {
        return "```json\n{\"joints\": [{\"joint\": \"m_avg_L_Elbow\", \"direction\": \"bend\", \"rotation\": [0, 90, 0]}], \
                \"root_translation\": [0, 0, 0]}\n```"
            .into();
    }
    if prompt.starts_with("Analyze this body part") {
        return "The planned position fits the step.".into();
    }
    if prompt.starts_with("Do you think there's need to replan") {
        return "No, there is no need to replan.".into();
    }
    if let Some(labels) = bracket_labels(prompt) {
        let want = desired(part_in(prompt));
        let pick = labels
            .iter()
            .find(|l| l.as_str() == want)
            .or_else(|| labels.iter().find(|l| want.starts_with(l.as_str())))
            .or_else(|| labels.iter().find(|l| l.as_str() == "neutral"))
            .unwrap_or(&labels[0]);
        return format!("Choice: {pick}");
    }
    if let Some(rest) = prompt.split("Is the next position **").nth(1) {
        let cand = rest.split("**").next().unwrap_or("");
        let part = prompt.strip_prefix("The last position of ").and_then(|r| r.split(' ').next());
        let part = part.and_then(|p| p.parse::<BodyPartId>().ok());
        return if cand == desired(part) { "Yes.".into() } else { "No.".into() };
    }
    if let Some(rest) = prompt.strip_prefix("There are multiple possible positions for ") {
        let part = rest.split(':').next().and_then(|p| p.parse::<BodyPartId>().ok());
        return format!("Choice: {}", desired(part));
    }
    if prompt.starts_with("The last position of") {
        return "It moves a little and settles.".into();
    }
    "neutral".into()
}

pub fn cooperative_client() -> FnClient {
    FnClient::new(cooperative).with_config(LlmConfig { model_name: "fixture-model".into(), ..LlmConfig::default() })
}

/// Replies that no parser can use.
pub fn hostile(_messages: &[Message]) -> String {
    "\u{1F643} purple monkey dishwasher ]]] {{{ not json".into()
}

pub fn fixed_high_plan(id: u32, steps: usize) -> HighLevelPlan {
    let steps = (0..steps)
        .map(|i| HighLevelStep {
            step_number: i as u32 + 1,
            time_range: [i as f64, i as f64 + 1.0],
            movement: format!("movement {}", i + 1),
            initial_state: format!("initial {}", i + 1),
            final_state: format!("final {}", i + 1),
        })
        .collect();
    HighLevelPlan {
        instruction: MotionInstruction::new(id, motion_ground::corpus::Corpus::bundled().get(id).unwrap().text.clone()),
        strategy: HighStrategy::Manual,
        steps,
        warnings: vec![],
    }
}

pub fn write_fixed_high(dir: &Path, ids: &[u32], steps: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for id in ids {
        std::fs::write(dir.join(format!("motion-{id:02}.json")), fixed_high_plan(*id, steps).to_json_string()).unwrap();
    }
}

/// Plan the given instructions with the cooperative model into `dir`.
pub fn cooperative_run(dir: &Path, ids: &[u32]) -> run::PlanOutcome {
    let mut opts = PlanOptions::new(dir);
    opts.instruction_ids = Some(ids.to_vec());
    opts.jobs = 2;
    run::cmd_plan(&opts, LlmSource::Factory(Arc::new(cooperative_client()))).unwrap()
}

pub fn frame_with(step: u32, moves: &[(BodyPartId, &str)]) -> StepPoseAssignment {
    let mut f = StepPoseAssignment::neutral(step);
    for (p, t) in moves {
        f.positions.insert(*p, t.to_string());
    }
    f
}

pub fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}
