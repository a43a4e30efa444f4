//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    // dataset
    #[error("missing column {0:?} in csv header")]
    MissingColumn(String),
    #[error("duplicate (station, date) key: ({station}, {date})")]
    DuplicateKey { station: String, date: String },
    #[error("unparseable cell at data row {row}, column {column:?}: {value:?}")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-finite values rejected: {}", format_row_report(.cells))]
    NonFiniteValues { cells: Vec<(usize, String)> },
    #[error("invalid date {value:?} at data row {row}: expected yyyy-mm-dd")]
    BadDate { row: usize, value: String },
    #[error("column name collision: {0:?} already exists")]
    ColumnCollision(String),
    #[error("empty result: {0}")]
    EmptyResult(String),
    #[error("unknown feature column {0:?}")]
    UnknownFeature(String),
    #[error("row {0} has no target value")]
    MissingTarget(u64),

    // synth
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown preset {name:?}; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },

    // models
    #[error("invalid regressor spec: {0}")]
    InvalidSpec(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("sample weights invalid: {0}")]
    InvalidWeights(String),
    #[error("weights length {got} does not match row count {expected}")]
    WeightLength { got: usize, expected: usize },
    #[error("knn requires k <= n_rows (k={k}, n={n})")]
    KnnTooFewRows { k: usize, n: usize },
    #[error("prediction schema mismatch; missing columns: {0:?}")]
    SchemaMismatch(Vec<String>),
    #[error("unsupported model blob version {0}")]
    BlobVersion(u32),

    // metrics
    #[error("length mismatch: truth has {truth}, predictions have {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("degenerate target range (max == min)")]
    DegenerateRange,
    #[error("no evaluable dates in the evaluation set")]
    NoEvaluableDates,
    #[error("series share no common dates")]
    EmptyIntersection,
    #[error("baseline series has zero mean nrmse")]
    ZeroBaselineMean,
    #[error("dispersion undefined: {0}")]
    DegenerateDispersion(String),
    #[error("nonpositive normalization range")]
    NonPositiveRange,

    // detector
    #[error("detector config invalid: {0}")]
    InvalidDetectorConfig(String),
    #[error("out-of-order date fed to detector: {got} after {last}")]
    OutOfOrderDate { got: String, last: String },
    #[error("non-finite value fed to detector")]
    NonFiniteInput,

    // explainer
    #[error("correlation threshold must lie in (0, 1], got {0}")]
    BadTau(f64),
    #[error("feature {0:?} is constant over the reference set; no usable quantiles")]
    ConstantFeature(String),
    #[error("bin count must be >= 2, got {0}")]
    BadBinCount(usize),

    // mitigator
    #[error("invalid mitigation config: {0}")]
    InvalidMitigationConfig(String),
    #[error("no feature group with positive importance")]
    NoPositiveGroups,
    #[error("candidate pool has no rows in any positively-weighted bin")]
    EmptyPool,
    #[error("plan/frame id mismatch: row index {index} expected id {expected}, found {found}")]
    PlanIdMismatch {
        index: usize,
        expected: u64,
        found: u64,
    },
    #[error("plan references row index {0} outside the frame")]
    PlanIndexOutOfRange(usize),

    // harness
    #[error("dataset span too short: {0}")]
    InsufficientSpan(String),
    #[error("target column {0:?} not found")]
    TargetAbsent(String),
    #[error("scheme reports do not share a baseline: {a:?} vs {b:?}")]
    BaselineMismatch { a: String, b: String },
    #[error("causality violation: model trained at {trained_at} on targets up to {max_target_date} first served {first_served}")]
    CausalityViolation {
        trained_at: String,
        max_target_date: String,
        first_served: String,
    },
}

fn format_row_report(cells: &[(usize, String)]) -> String {
    cells
        .iter()
        .map(|(row, col)| format!("data row {row} column {col:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;
