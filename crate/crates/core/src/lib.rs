//! Stateful four-room gridworld benchmark with hindsight workflow memory.
//!
//! The crate is organised bottom-up:
//!
//! - [`world`]: procedural gridworld generation and dynamics.
//! - [`textview`]: egocentric text observations and goal strings.
//! - [`episode`]: trajectories, the episode loop and JSONL logs.
//! - [`lm`]: language-model backends and tolerant output parsing.
//! - [`prompts`]: the fixed prompt texts used by the agent and the strategies.
//! - [`strategies`]: cross-episode memory (ECHO, Reflexion, AWM, AWM++).
//! - [`oracle`]: BFS planner and scripted backends for offline runs.
//! - [`harness`]: experiment streams, metrics and the workflow validity check.

pub mod canonical;
pub mod episode;
pub mod harness;
pub mod lm;
pub mod oracle;
pub mod prompts;
pub mod strategies;
pub mod textview;
pub mod world;
