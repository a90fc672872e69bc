use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One request left unmatched when the simulator went quiescent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StuckRequest {
    pub kind: StuckKind,
    pub src: usize,
    pub dst: usize,
    pub tag: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StuckKind {
    Send,
    Recv,
}

impl fmt::Display for StuckRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            StuckKind::Send => "send",
            StuckKind::Recv => "recv",
        };
        write!(
            f,
            "{kind}(src={}, dst={}, tag={})",
            self.src, self.dst, self.tag
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("index {index} outside domain {domain}")]
    Domain { index: usize, domain: String },

    #[error("rank {rank} is not in communicator of size {size}")]
    InvalidRank { rank: usize, size: usize },

    #[error("rank {0} posted a request after finalize")]
    Finalized(usize),

    #[error("rank {rank} waited on request {request} it does not own")]
    ForeignRequest { rank: usize, request: usize },

    #[error("deadlock: {} unmatched request(s): {}", .0.len(), DisplayList(.0))]
    Deadlock(Vec<StuckRequest>),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("temporary buffer: {0}")]
    TempBuffer(String),

    #[error("rank {rank} failed: {source}")]
    RankFailed {
        rank: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    /// True for errors caused by bad user-supplied parameters, looking
    /// through rank attribution.
    pub fn is_parameter_error(&self) -> bool {
        match self {
            Error::Param(_) | Error::Domain { .. } => true,
            Error::RankFailed { source, .. } => source.is_parameter_error(),
            _ => false,
        }
    }
}

struct DisplayList<'a>(&'a [StuckRequest]);

impl fmt::Display for DisplayList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}
