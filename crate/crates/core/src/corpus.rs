//! The bundled set of twenty motion instructions.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::high_level::MotionInstruction;

const BUNDLED: &str = include_str!("../data/instructions.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub version: String,
    pub instructions: Vec<MotionInstruction>,
}

impl Corpus {
    pub fn bundled() -> &'static Corpus {
        static CORPUS: OnceLock<Corpus> = OnceLock::new();
        CORPUS.get_or_init(|| serde_json::from_str(BUNDLED).expect("bundled instructions parse"))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Corpus, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    pub fn get(&self, id: u32) -> Option<&MotionInstruction> {
        self.instructions.iter().find(|i| i.id == id)
    }

    pub fn ids(&self) -> Vec<u32> {
        self.instructions.iter().map(|i| i.id).collect()
    }
}
