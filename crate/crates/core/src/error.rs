use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("class {class} has no labeled samples")]
    EmptyClass { class: usize },
    #[error("label {label} out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("class {class} has no samples to stratify")]
    Stratification { class: usize },
    #[error("non-finite value in {what} (layer/step {index})")]
    NonFinite { what: &'static str, index: usize },
    #[error("non-finite {phase} loss at epoch {epoch}, batch {batch}")]
    Diverged { phase: &'static str, epoch: usize, batch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            found,
        }
    }
}
