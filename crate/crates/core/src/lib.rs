//! Center-embedding agreement workbench: grammar sampling, corpora and
//! number-agreement tasks, recurrent language models with exact gradients,
//! training, evaluation and unit-level analysis.

pub mod analysis;
pub mod cells;
pub mod config;
pub mod corpus;
pub mod evaluation;
pub mod grammar;
pub mod numcore;
pub mod pipeline;
pub mod training;
