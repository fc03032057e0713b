//! JSON wire types shared by the session service and its clients.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::acquisition::SyntheticProfile;
use crate::evaluation::VarianceTable;
use crate::forest::TrainConfig;
use crate::realtime::{SessionConfig, SessionState, VarianceComparison};
use crate::signal::{EmotionLabel, SubjectInfo};

/// Where a session's frames come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum SourceSpec {
    Replay {
        path: PathBuf,
        /// Defaults to the session rate.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate_hz: Option<f64>,
    },
    Synthetic {
        /// Defaults to the bundled profile.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        profile: Option<SyntheticProfile>,
        label: EmotionLabel,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub subject: SubjectInfo,
    pub source: SourceSpec,
    pub model_id: String,
    #[serde(default)]
    pub config: Option<SessionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResource {
    pub id: String,
    pub subject: SubjectInfo,
    pub source: SourceSpec,
    pub model_id: String,
    pub state: SessionState,
    /// RFC 3339.
    pub created_at: String,
    pub config: SessionConfig,
    #[serde(default)]
    pub prediction_count: usize,
    /// Why the session ended abnormally.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }

    /// Status only moves forward; DONE and FAILED are both final.
    pub fn can_advance_to(self, next: JobStatus) -> bool {
        !self.is_terminal() && next > self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub dataset: PathBuf,
    #[serde(default)]
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub id: String,
    pub dataset: PathBuf,
    pub config: TrainConfig,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub n_trees: usize,
    pub labels: Vec<EmotionLabel>,
    pub config: TrainConfig,
    /// A variance table of the training data is stored alongside.
    pub has_variance: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSource {
    /// Computed from the model's training data.
    Training,
    /// The bundled synthetic profile's variances.
    DefaultProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub session_id: String,
    pub model_id: String,
    pub model_variance_source: VarianceSource,
    #[serde(flatten)]
    pub comparison: VarianceComparison,
}

impl VarianceReport {
    pub fn model(&self) -> &VarianceTable {
        &self.comparison.model
    }
}

pub mod codes {
    pub const NOT_FOUND: &str = "not_found";
    pub const CONFLICT: &str = "conflict";
    pub const VALIDATION: &str = "validation";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

/// `{"error": {"code": …, "message": …}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl ErrorBody {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ErrorBody {
            error: ErrorDetail { code: code.to_string(), message: message.into() },
        }
    }
}
