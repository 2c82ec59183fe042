use thiserror::Error;

pub type Result<T> = std::result::Result<T, RpivError>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed input or configuration.
    Data,
    /// Rank or degeneracy failure inside the estimation pipeline.
    Rank,
}

#[derive(Debug, Error)]
pub enum RpivError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty file")]
    EmptyFile,
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("non-numeric cell in column {column:?} at data row {row}: {value:?}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("column {0:?} assigned to more than one role")]
    DuplicateRole(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("control column {0:?} is constant (collinear with intercept)")]
    ConstantControl(String),
    #[error("sample too small to split: n = {n}, n_aux = {n_aux}, n_main = {n_main}, need at least {min} in each")]
    SampleTooSmall {
        n: usize,
        n_aux: usize,
        n_main: usize,
        min: usize,
    },
    #[error("instrument Gram matrix singular")]
    InstrumentGramSingular,
    #[error("rank condition failed (instruments irrelevant?)")]
    RankConditionFailed,
    #[error("singular Gram matrix")]
    SingularGram,
    #[error("too few observations: {0}")]
    TooFewObservations(String),
    #[error("cluster column required")]
    ClusterRequired,
    #[error("need at least 2 clusters, found {0}")]
    TooFewClusters(usize),
    #[error("just-identified: J-test undefined; augment instruments first")]
    JustIdentified,
    #[error("augmentation adds collinear column")]
    CollinearAugmentation,
    #[error("column {0} is not an instrument")]
    NotAnInstrument(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl RpivError {
    pub fn class(&self) -> ErrorClass {
        match self {
            RpivError::InstrumentGramSingular
            | RpivError::RankConditionFailed
            | RpivError::SingularGram
            | RpivError::SampleTooSmall { .. }
            | RpivError::TooFewObservations(_)
            | RpivError::TooFewClusters(_)
            | RpivError::JustIdentified
            | RpivError::CollinearAugmentation => ErrorClass::Rank,
            _ => ErrorClass::Data,
        }
    }
}
