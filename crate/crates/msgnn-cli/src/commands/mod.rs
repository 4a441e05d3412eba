pub mod bench;
pub mod eval;
pub mod gen;
pub mod graph_info;
pub mod remesh;
pub mod rollout;
pub mod train;
