//! Wire messages. Each request and response is one JSON object on one
//! line; every message carries the protocol version in `v`.

use serde::{Deserialize, Serialize};

use learndyn_core::trial::{Phase, TrialRecord};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub v: u32,
    #[serde(flatten)]
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Create {
        observer_id: String,
    },
    Status {
        session_id: String,
    },
    NextTrial {
        session_id: String,
    },
    Submit {
        session_id: String,
        trial_id: String,
        response_label: String,
        #[serde(default)]
        client: Option<ClientReport>,
    },
    Export {
        session_id: String,
        #[serde(default)]
        partial: bool,
    },
    Asset {
        session_id: String,
        handle: String,
    },
}

/// What the client measured while running a trial.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    /// Client wall clock at response, ms since the Unix epoch.
    pub responded_at_ms: Option<u64>,
    pub response_time_ms: Option<u64>,
    /// Measured segment durations and flags, logged verbatim.
    pub audit: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub v: u32,
    #[serde(flatten)]
    pub body: Reply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Session(SessionInfo),
    Trial(TrialDescriptor),
    Feedback(FeedbackDirective),
    Export(ExportReply),
    Asset(AssetReply),
    Error(ErrorReply),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Practice,
    Training,
    Testing,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cursor {
    pub phase: Phase,
    /// 1-based; 0 during practice.
    pub epoch: u32,
    /// 1-based position within the current block.
    pub trial_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub observer_id: String,
    pub status: Status,
    /// Next trial to be served; absent once finished.
    pub cursor: Option<Cursor>,
    /// Answered trials, practice included.
    pub answered: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub fixation_ms: u32,
    pub stimulus_ms: u32,
    pub mask_ms: u32,
}

/// Opaque asset handles; fetch with the `asset` operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialAssets {
    pub fixation: String,
    pub stimulus: String,
    pub mask: String,
}

/// Everything the client needs to run one trial. Carries no label or
/// correctness information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDescriptor {
    pub trial_id: String,
    pub status: Status,
    pub cursor: Cursor,
    pub block_size: u32,
    pub assets: TrialAssets,
    pub schedule: Schedule,
    /// Response options in fixed on-screen order.
    pub options: Vec<String>,
    /// Whether a feedback directive follows the response.
    pub feedback: bool,
    pub stimulus_px: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Highlight {
    Green,
    Red,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightStep {
    pub colour: Highlight,
    /// The option to highlight (the one chosen).
    pub option: String,
    pub duration_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionStep {
    pub correct_option: String,
    pub duration_ms: u32,
}

/// How the client reacts to a response. Test trials get `none`, with no
/// further fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "feedback", rename_all = "snake_case")]
pub enum Directive {
    None,
    Correct { highlight: HighlightStep },
    Incorrect { highlight: HighlightStep, correction: CorrectionStep },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackDirective {
    pub trial_id: String,
    pub directive: Directive,
    pub session: SessionInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportReply {
    pub session_id: String,
    pub partial: bool,
    /// Where the server wrote the JSON Lines log.
    pub path: String,
    pub records: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetReply {
    pub handle: String,
    pub mime: String,
    pub data_base64: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    UnsupportedVersion,
    UnknownSession,
    ObserverBusy,
    TrialOutstanding,
    NoOutstandingTrial,
    UnknownTrial,
    InvalidLabel,
    Finished,
    NotFinished,
    UnknownAsset,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub code: ErrorCode,
    pub message: String,
}
