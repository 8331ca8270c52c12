//! Deterministic multi-agent simulator of a six-armed precision pollination
//! robot.
//!
//! The robot is modelled as a set of independent agents: one drive base,
//! up to six manipulators riding two rails of a shared mast, and a referee
//! that only intervenes when manipulators get in each other's way. Agents
//! talk exclusively through a lockstep message bus, so a trial is a pure
//! function of its scenario and seed.
//!
//! Module map:
//!
//! - [`model`]: poses, ids, [`Params`], DoF bookkeeping
//! - [`kinematics`]: kiwi drive and planar arm kinematics, workspace tests
//! - [`grid`]: height-field used for occlusion and traversability
//! - [`world`]: ground-truth flowers, sway, disturbance and contact
//! - [`perception`]: noisy detector and classifier metric arithmetic
//! - [`flowers`]: per-arm flower track store
//! - [`arm`]: manipulator behavior state machine
//! - [`drive`]: waypoint manager, primitive planner, path follower modes
//! - [`referee`]: conflict and anomaly arbitration
//! - [`bus`], [`engine`], [`log`], [`metrics`]: scheduling, messages, event log
//! - [`scenario`]: scenario configuration

/// `as_str`, `Display` and `FromStr` for fieldless enums, using the
/// variant names verbatim.
macro_rules! text_enum {
    ($t:ident { $($v:ident),* $(,)? }) => {
        impl $t {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($t::$v => stringify!($v),)*
                }
            }
        }

        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $(stringify!($v) => Ok($t::$v),)*
                    _ => Err(format!("unknown {} `{}`", stringify!($t), s)),
                }
            }
        }
    };
}

pub mod arm;
pub mod bus;
pub mod drive;
pub mod engine;
pub mod flowers;
pub mod grid;
pub mod kinematics;
pub mod log;
pub mod metrics;
pub mod model;
pub mod perception;
pub mod referee;
pub mod rng;
pub mod scenario;
pub mod world;

pub use engine::{run_trial, Engine, ExecOrder};
pub use log::{Event, EventKind, EventLog};
pub use metrics::{metrics, TrialRecord};
pub use model::{ArmId, FlowerId, Params, Pose2D, Pose3D, RailSide, Tier, TrackId, Twist, Vec3};
pub use scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("arm count {0} out of range 0..=6")]
    ArmCount(usize),
    #[error("arm index {0} out of range 0..=5")]
    ArmIndex(usize),
    #[error("joint limit violated: {0}")]
    JointLimit(String),
    #[error("invalid parameter {0}: {1}")]
    InvalidParam(&'static str, String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("confusion matrix has all zero counts")]
    EmptyConfusionMatrix,
    #[error("log line {line}: {msg}")]
    LogParse { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
