use std::path::{Path, PathBuf};

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: record {locus}: {message}")]
    Record {
        path: PathBuf,
        locus: String,
        message: String,
    },
    #[error("{path}: duplicate id `{id}` on lines {first} and {second}")]
    DuplicateId {
        path: PathBuf,
        id: String,
        first: usize,
        second: usize,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] readcomp_core::Error),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<HarnessError>,
    },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short category used in the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Io { .. } => "io",
            HarnessError::Parse { .. } => "parse",
            HarnessError::Record { .. } => "record",
            HarnessError::DuplicateId { .. } => "duplicate_id",
            HarnessError::Config(_) => "config",
            HarnessError::Core(readcomp_core::Error::InvalidConfig(_)) => "config",
            HarnessError::Core(_) => "core",
            HarnessError::Stage { source, .. } => source.kind(),
        }
    }

    pub fn stage(&self) -> Option<&str> {
        match self {
            HarnessError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// One JSON object on one line: `{"error":kind,"stage":..,"message":..}`.
    pub fn to_line(&self) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert("error".into(), self.kind().into());
        if let Some(stage) = self.stage() {
            obj.insert("stage".into(), stage.into());
        }
        obj.insert("message".into(), self.to_string().into());
        serde_json::Value::Object(obj).to_string()
    }
}

pub(crate) fn in_stage<T>(stage: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| HarnessError::Stage {
        stage: stage.to_string(),
        source: Box::new(e),
    })
}
