mod common;

use motion_ground::prompts::{self, FormatNotes};

#[test]
fn rendered_prompts_match_golden_files_byte_for_byte() {
    let mut failures = Vec::new();
    for (name, rendered) in common::rendered_prompts() {
        let expected = common::golden(name);
        if rendered != expected {
            failures.push(format!("{name}:\n  expected {expected:?}\n  rendered {rendered:?}"));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn every_golden_file_is_checked() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut on_disk: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path().file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    on_disk.sort();
    let mut rendered: Vec<String> = common::rendered_prompts().into_iter().map(|(n, _)| n.to_string()).collect();
    rendered.sort();
    assert_eq!(on_disk, rendered);
}

#[test]
fn format_notes_follow_a_blank_line_and_can_be_disabled() {
    let base = prompts::timing(1);
    assert_eq!(FormatNotes::Off.apply(base.clone(), prompts::NOTE_TIMING), base);
    let on = FormatNotes::On.apply(base.clone(), prompts::NOTE_TIMING);
    assert_eq!(on, format!("{base}\n\n{}", prompts::NOTE_TIMING));
}

#[test]
fn placeholders_do_not_leak() {
    for (name, rendered) in common::rendered_prompts() {
        for ph in ["{motion instruction}", "{step number}", "{body part}", "{position}", "{description}", "{reflection}"] {
            assert!(!rendered.contains(ph), "{name} still holds {ph}");
        }
    }
}
