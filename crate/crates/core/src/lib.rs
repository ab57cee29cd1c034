//! Coordinate-free smartphone agent.
//!
//! The agent sees an annotated screenshot where every interactive element
//! carries a number, acts through six element-relative functions, learns
//! per-element documentation by exploring an app (on its own or by watching a
//! human), and consults that documentation when executing tasks.

pub mod action;
pub mod bench;
pub mod corpus;
pub mod device;
pub mod explorer;
pub mod font;
pub mod kb;
pub mod llm;
pub mod operator;
pub mod prompts;
pub mod session;
pub mod sim;
pub mod ui_model;
