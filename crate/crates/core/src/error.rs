use alloc::string::String;

/// Errors raised by the core pipeline stages.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("duplicate class name {0:?}")]
    DuplicateClass(String),
    #[error("duplicate attribute {attribute:?} in class {class:?}")]
    DuplicateAttribute { class: String, attribute: String },
    #[error("association {association:?} of class {class:?} targets undeclared class {target:?}")]
    DanglingTarget {
        class: String,
        association: String,
        target: String,
    },
    #[error("element reference does not resolve: {0}")]
    UnresolvedRef(String),
    #[error("surface text: {0}")]
    Surface(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown token id {0}")]
    UnknownTokenId(u32),
    #[error("decoded bytes are not valid UTF-8")]
    InvalidUtf8,
    #[error("context must contain exactly one mask token, found {0}")]
    MaskCount(usize),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("empty run")]
    EmptyRun,
    #[error("unknown element kind {0:?}")]
    UnknownKind(String),
}

pub type Result<T> = core::result::Result<T, Error>;
