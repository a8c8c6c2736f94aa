use std::fmt;

/// A failed run, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or flag values: exit 1.
    Usage(String),
    /// Missing or malformed input files and configs: exit 2.
    Data(String),
    /// Anything that goes wrong after inputs were accepted: exit 3.
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<gram::Error> for Failure {
    fn from(e: gram::Error) -> Self {
        use gram::Error::*;
        let msg = e.to_string();
        match e {
            Io { .. } | Corpus { .. } | Json(_) | CorruptCheckpoint(_) | CheckpointVersion { .. } | InvalidGraph(_) => {
                Failure::Data(msg)
            }
            Spec(_) | Config(_) => Failure::Data(msg),
            _ => Failure::Runtime(msg),
        }
    }
}
