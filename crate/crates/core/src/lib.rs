//! Lecture-to-video compilation: outline in, synchronized and laid-out
//! animated slides out.

pub mod canon;
pub mod cli;
pub mod codegen;
pub mod composer;
pub mod debugger;
pub mod exact;
pub mod gateway;
pub mod layout;
pub mod llm;
pub mod mock;
pub mod model;
pub mod narrator;
pub mod paginator;
pub mod pipeline;
pub mod render;
pub mod review;
pub mod store;
pub mod synchronizer;
pub mod words;
