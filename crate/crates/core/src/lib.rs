#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compiler;
pub mod corpus;
pub mod eval;
pub mod high_level;
pub mod llm;
pub mod low_level;
pub mod parse;
pub mod prompts;
pub mod run;
pub mod service;
pub mod skeleton;
pub mod taxonomy;
