//! Language-model-guided symbolic regression.
//!
//! A chat model proposes candidate equations with symbolic constants; the
//! constants are fitted numerically, the results are kept on a
//! complexity/error Pareto front, and the best candidates are fed back into
//! the next prompt.

pub mod expr;
pub mod data;
pub mod optimize;
pub mod pareto;
pub mod llm;
pub mod prompts;
pub mod engine;
