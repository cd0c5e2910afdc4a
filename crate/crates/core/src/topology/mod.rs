//! Distributed layer: Bot / Origin / Master-Origin roles over a simulated
//! message bus, proximity and coverage fusion, event-driven ACF upload to a
//! cloud classifier, bandwidth accounting and the detection-event store.

mod accounting;
mod codec;
mod coverage;
mod deployment;
mod events;
mod pipeline;
mod proximity;

use thiserror::Error;

use crate::foundation::SensingError;
use crate::subject_id::SubjectError;

pub use accounting::{
    account_bandwidth, apply_contention, base_efficiency, effective_csi_rate, project_daily, BandwidthReport,
    DailyProjection, CONTENTION_LOAD_DEGRADATION, CONTENTION_PER_DEVICE,
};
pub use codec::{
    upload_features, UploadMessage, WindowReport, WindowSummary, FLAG_MOTION, FLAG_ROWS, REPORT_HEADER_BYTES,
    UPLOAD_HEADER_BYTES, UPLOAD_MAGIC, UPLOAD_VERSION,
};
pub use coverage::{fuse_coverage, CoverageReport, PresenceInterval, RegionCoverage, COVERED_ABOVE};
pub use deployment::{Deployment, Link, Mode, NodeId, NodeRole, Role};
pub use events::{Classification, DetectionEvent, DetectionLog};
pub use pipeline::{run_pipeline, Failover, OffloadPolicy, PipelineConfig, PipelineOutput, Traffic};
pub use proximity::{proximity_score, proximity_score_with, ProximityReading, DEFAULT_PROXIMITY_THRESHOLD};

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("deployment has no master origin")]
    NoMaster,
    #[error("deployment has more than one master origin: {0:?}")]
    DuplicateMaster(Vec<NodeId>),
    #[error("node {0} is not declared")]
    UnknownNode(NodeId),
    #[error("node {0} has no path to the master")]
    Unreachable(NodeId),
    #[error("bot {node} is {hops} hops from the master (at most 2 allowed)")]
    TooManyHops { node: NodeId, hops: usize },
    #[error("malformed topology: {0}")]
    Malformed(String),
    #[error("malformed message: {0}")]
    Codec(String),
    #[error("trace for {0} which is not a bot")]
    UnknownTrace(NodeId),
    #[error("presence truth log is empty")]
    EmptyTruth,
    #[error("event for device {device} at {time_s} s precedes its previous event at {previous_s} s")]
    NonMonotone { device: NodeId, time_s: f64, previous_s: f64 },
    #[error("policy needs cloud classification but no model was given")]
    MissingModel,
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Subject(#[from] SubjectError),
}
