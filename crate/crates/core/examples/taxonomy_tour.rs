//! Walk the bundled pose taxonomy: parts, position counts and one decision tree.

use motion_ground::taxonomy::{validate_taxonomy, BodyPartId, OptionTarget, PoseTaxonomy};

fn main() {
    let tax = PoseTaxonomy::bundled();
    let violations = validate_taxonomy(tax);
    println!("taxonomy {} ({} violations)", tax.version, violations.len());

    for part in BodyPartId::ALL {
        let tree = tax.decision_tree(part);
        println!("{:<14} {:>2} positions, tree depth {}", part.as_str(), tax.positions_for(part).len(), tree.depth());
    }

    // Answer "bent", then "bent in 90 degrees", the way the hierarchical strategy would.
    let part = BodyPartId::LeftElbow;
    let tree = tax.decision_tree(part);
    let mut node = tree.root();
    println!("\n{}", node.question);
    for answer in ["bent", "bent_in_90_degrees"] {
        match node.target(answer) {
            Some(OptionTarget::Node(id)) => {
                node = tree.node(*id).unwrap();
                println!("  {answer} -> {}", node.question);
            }
            Some(OptionTarget::Position(tok)) => {
                println!("  {answer} -> {tok}: {}", tax.describe(part, tok));
                break;
            }
            None => println!("  {answer} is not an option here"),
        }
    }
}
