//! Diminished-reality object substitution with edge offloading.
//!
//! A frame enters [`pipeline::Session::process_frame`], which runs two
//! branches: the 2D branch segments the target and inpaints the hole it
//! leaves, the 3D branch estimates the target's pose in two stages. Two
//! gates in [`gating`] skip work on temporally redundant frames. The merged
//! result drives [`compose`], which renders a virtual substitute at the
//! real object's pose. [`transport`] carries frames and results between a
//! client and an edge server; [`scenegen`] and [`bench`] provide ground
//! truth scenes and quality metrics.

pub mod bench;
pub mod compose;
pub mod gating;
pub mod imageio;
pub mod perception;
pub mod pipeline;
pub mod scenegen;
pub mod transport;
pub mod types;

pub use types::{
    budget_for_fps, quat_geodesic_deg, CoreError, Frame, InstanceMask, LatencyBudget,
    PinholeIntrinsics, Pose6D, Stage, StageTimings,
};
