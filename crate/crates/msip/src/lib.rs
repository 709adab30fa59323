//! Episodic reinforcement learning from multi-source imperfect preference
//! feedback: ground-truth simulator, weighted comparison and transition
//! learners, importance filtering, policy-level optimistic planning, baseline
//! agents, hard-instance factories and an experiment harness.

pub mod agents;
pub mod comparison_learning;
pub mod env;
pub mod feedback;
pub mod filtering;
pub mod harness;
pub mod instances;
pub mod linalg;
pub mod model;
pub mod planner;
pub mod transition_learning;
