//! Global localization of a robot map against an architectural plan.
//!
//! An *architectural graph* ([`agraph`]) is built in plan frame `B` from a
//! floorplan; a *situational graph* ([`sgraph`]) is estimated by the robot in
//! its map frame `M`. The [`matcher`] associates their rooms and wall
//! surfaces, and the [`merger`] solves for the map-to-plan transform and
//! re-expresses the robot graph in the plan frame. [`eval`] wires the stages
//! into a pipeline with metrics, [`dataset`] generates synthetic plans and
//! [`render`] draws SVG snapshots.

pub mod agraph;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod matcher;
pub mod merger;
pub mod render;
pub mod sgraph;

pub use agraph::{build_agraph, FloorplanSpec};
pub use geometry::{FrameId, FrameTransform, PlaneCP, Pose2};
pub use graph::{LayeredGraph, MatchLevel};
pub use matcher::{match_graphs, MatchOutcome, MatchParams, MatchStatus};
pub use merger::{solve_merge, ISGraph, MergeParams};
pub use sgraph::{simulate_sgraph, GroundTruth, SimConfig};
