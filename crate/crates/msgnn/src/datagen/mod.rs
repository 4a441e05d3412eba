//! Advection data generation with exact or reference-numeric oracles, and
//! the binary dataset container (including externally produced flow data).

pub mod advect;
pub mod dataset;
pub mod fourier;

pub use advect::{
    advect_exact, advect_semi_lagrangian, GridTrajectory, RigidRotation, SemiLagConfig,
    TaylorGreenVelocity, UniformVelocity, VelocityField,
};
pub use dataset::{
    derive_seed, exact_frames, gen_advection_dataset, read_trajectory, sim_inputs, sim_nodes,
    write_trajectory, AdvectionKind, Dataset, DatasetMeta, GenConfig, SimMeta, Trajectory,
    META_SCHEMA_VERSION, TRAJECTORY_MAGIC, TRAJECTORY_VERSION,
};
pub use fourier::{FourierIc, CALIBRATION_GRID};
