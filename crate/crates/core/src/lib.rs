//! Query-time deduplication engine: answers select-project-join queries with
//! a DEDUP modifier over dirty CSV collections, resolving only the entities
//! that influence the answer and caching every discovered link for later
//! queries.

pub mod baseline;
pub mod blocking;
pub mod catalog;
pub mod exec;
#[cfg(test)]
pub(crate) mod fixtures;
pub mod matching;
pub mod metablocking;
pub mod planner;
pub mod session;
pub mod sqlfront;
