//! A scripted stand-in for a chat model, so the examples run offline.
#![allow(dead_code)]

use motion_ground::llm::{last_user, FnClient, LlmConfig, Message, Role};
use motion_ground::taxonomy::BodyPartId;

/// What the scripted model wants each part to end up as.
fn wanted(part: Option<BodyPartId>) -> &'static str {
    match part {
        Some(BodyPartId::Head) => "tilted_down_slightly",
        Some(BodyPartId::LeftElbow) => "bent_in_90_degrees",
        Some(BodyPartId::LeftUpperArm) => "neutral_to_forward",
        _ => "neutral",
    }
}

fn part_named(prompt: &str) -> Option<BodyPartId> {
    let lower = prompt.to_lowercase();
    for (needle, part) in [
        ("the head", BodyPartId::Head),
        ("left elbow", BodyPartId::LeftElbow),
        ("left upper arm", BodyPartId::LeftUpperArm),
    ] {
        if lower.contains(needle) {
            return Some(part);
        }
    }
    BodyPartId::ALL.iter().copied().find(|p| prompt.contains(&format!(" {} ", p.as_str())) || prompt.contains(&format!("for {}:", p.as_str())))
}

const STEPS: &str = r#"[
 {"step_number": 1, "time_range": [0, 1.2], "movement": "the left arm lifts and the elbow bends", "initial_state": "standing", "final_state": "left forearm across the body"},
 {"step_number": 2, "time_range": [1.2, 2.0], "movement": "the head tilts down", "initial_state": "head upright", "final_state": "looking at the wrist"}
]"#;

pub fn reply(messages: &[Message]) -> String {
    let prompt = last_user(messages);
    if prompt.contains("skeleton of named joints") {
        return format!("```json\n{STEPS}\n```");
    }
    if prompt.contains("Decompose it step-by-step") {
        return format!("```json\n{STEPS}\n```");
    }
    if prompt.starts_with("How long does Step") {
        return if prompt.contains("Step1") { "1.2 seconds".into() } else { "0.8 seconds".into() };
    }
    if prompt.starts_with("Is it the end of this motion?") {
        let asked = messages.iter().filter(|m| m.role == Role::User && m.content.starts_with("Is it the end")).count();
        return if asked >= 2 { "Yes.".into() } else { "No.".into() };
    }
    if prompt.starts_with("Which joints rotate") {
        return "m_avg_L_Elbow, m_avg_Head".into();
    }
    if prompt.starts_with("By how many degrees") && !prompt.contains("Step1") {
        // Deltas accumulate, so later steps only move the head further.
        return "```json\n{\"joints\": [{\"joint\": \"m_avg_Head\", \"direction\": \"down\", \"rotation\": [0, 10, 0]}]}\n```".into();
    }
    if prompt.starts_with("By how many degrees") {
        return "```json\n{\"joints\": [{\"joint\": \"m_avg_L_Elbow\", \"direction\": \"bend\", \"rotation\": [0, 90, 0]}, \
                {\"joint\": \"m_avg_Head\", \"direction\": \"down\", \"rotation\": [0, 20, 0]}], \"root_translation\": [0, 0, 0]}\n```"
            .into();
    }
    if prompt.starts_with("Do you think there's need to replan") {
        return "No.".into();
    }
    if let Some(open) = prompt.split("\n\n").next().and_then(|p| p.rfind("Choose one from [")) {
        let first = prompt.split("\n\n").next().unwrap();
        let list = &first[open + "Choose one from [".len()..];
        let labels: Vec<&str> = list.split(']').next().unwrap_or("").split(", ").collect();
        let want = wanted(part_named(prompt));
        let pick = labels
            .iter()
            .find(|l| **l == want)
            .or_else(|| labels.iter().find(|l| want.starts_with(**l)))
            .or_else(|| labels.iter().find(|l| **l == "neutral"))
            .unwrap_or(&labels[0]);
        return format!("Choice: {pick}");
    }
    if let Some(rest) = prompt.split("Is the next position **").nth(1) {
        let cand = rest.split("**").next().unwrap_or("");
        let part = prompt.strip_prefix("The last position of ").and_then(|r| r.split(' ').next()).and_then(|p| p.parse().ok());
        return if cand == wanted(part) { "Yes.".into() } else { "No.".into() };
    }
    if let Some(rest) = prompt.strip_prefix("There are multiple possible positions for ") {
        let part = rest.split(':').next().and_then(|p| p.parse().ok());
        return format!("Choice: {}", wanted(part));
    }
    "Understood.".into()
}

pub fn client() -> FnClient {
    FnClient::new(reply).with_config(LlmConfig { model_name: "scripted-demo".into(), ..LlmConfig::default() })
}
