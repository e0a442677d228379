//! Logical-consistency evaluation harness for vision-language models.
//!
//! The pipeline is file-driven: a dataset manifest is expanded into probes
//! ([`derive`]), a model answers each probe with probabilities (outside this crate),
//! the answers are joined back per sample ([`io::join`]) and scored ([`metrics`]),
//! then aggregated and compared across models ([`analysis`]).
//!
//! Scoring needs no ground truth. When the manifest carries it, the gt-dependent
//! metrics (accuracy, joint accuracy, F1, gt-anchored consistency) are filled in too.

pub mod analysis;
pub mod derive;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod par;

pub use error::{CorrelationError, Error, MetricError, Result};
pub use metrics::{JoinedSample, McProbBundle, NbProbBundle, SampleProbs, ScoringConfig};
pub use model::{
    DatasetSummary, DerivedTest, Format, GtPairing, Manifest, McItem, NbUnit, ProbRecord,
    ResponseClass, SampleScore, Subtest,
};
