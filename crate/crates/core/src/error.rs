use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout error: {0}")]
    Layout(String),

    #[error("non-finite value at sample {sample}: {detail}")]
    Numeric { sample: usize, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("row {row}: {detail}")]
    Parse { row: usize, detail: String },

    #[error("split `{0}` selects no records")]
    EmptySplit(String),

    #[error("non-uniform sampling at record {index}: dt = {dt} s, expected {expected} s; resample the data before windowing")]
    Resample { index: usize, dt: f64, expected: f64 },

    #[error("vehicle became unstable: {0}")]
    Instability(String),

    #[error("lateral acceleration {requested} m/s^2 unreachable at v_x = {v_x} m/s (max {max} m/s^2)")]
    Saturation { requested: f64, v_x: f64, max: f64 },

    #[error("degenerate least-squares fit: {0}")]
    DegenerateFit(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input data (as opposed to numerics or I/O).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::EmptySplit(_)
                | Error::Resample { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Layout(_)
                | Error::Argument(_)
        )
    }

    pub fn is_numeric_error(&self) -> bool {
        matches!(
            self,
            Error::Numeric { .. }
                | Error::Diverged { .. }
                | Error::Instability(_)
                | Error::Saturation { .. }
                | Error::DegenerateFit(_)
                | Error::Domain(_)
        )
    }
}
