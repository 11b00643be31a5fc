use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: kinetic_core::Error,
    },
    #[error("reports are not comparable: {0}")]
    Mismatch(String),
}

pub type ToolResult<T> = std::result::Result<T, ToolError>;

/// Attaches the calling step to core errors.
pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> ToolResult<T>;
}

impl<T> Context<T> for kinetic_core::Result<T> {
    fn context(self, what: impl Into<String>) -> ToolResult<T> {
        self.map_err(|source| ToolError::Core { context: what.into(), source })
    }
}
