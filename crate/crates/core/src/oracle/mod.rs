//! Ground truth for offline runs: the BFS planner, the workflow text codec,
//! and scripted language-model backends.

pub mod bfs;
pub mod demo;
pub mod scripted;
pub mod workflow;

pub use bfs::{bfs_plan, bfs_plan_within, PlanError};
pub use demo::{known_workflow, AgentMode, DemoBackend, OraclePolicy};
pub use scripted::{Exhaustion, ScriptedBackend};
pub use workflow::{decode_workflow, encode_workflow, WorkflowParseError};
