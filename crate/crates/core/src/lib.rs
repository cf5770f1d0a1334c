//! Proactive human-robot interaction pipeline over a simulated waiting room.
//!
//! Raw perceptions from [`simworld`] flow over the [`bus`] through the
//! perception [`refiners`] into the environment state tracker ([`est`]),
//! whose snapshots drive the [`planner`] and the [`actions`]. The
//! [`harness`] wires everything together, runs scenarios in virtual time,
//! records traces and computes engagement metrics.

pub mod actions;
pub mod bus;
pub mod config;
pub mod est;
pub mod geometry;
pub mod harness;
pub mod messages;
pub mod pipeline;
pub mod planner;
pub mod refiners;
pub mod scalar;
pub mod simworld;

pub use bus::{Bus, BusError, Envelope, Millis, Subscription, TopicMode, TopicSpec};
pub use config::Config;
pub use geometry::{Point, Pose};
pub use scalar::Scalar;

/// Single-precision geometry.
pub type Point32 = geometry::Point<f32>;
pub type Pose32 = geometry::Pose<f32>;
/// Single-precision voice activity detector.
pub type VadDetector32 = refiners::VoiceActivityDetector<f32>;
pub type VadParams32 = refiners::VadParams<f32>;
pub type IabParams32 = refiners::IabParams<f32>;
pub type ControlParams32 = actions::ControlParams<f32>;
