use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: `{field}`: {message}")]
    Config { field: String, message: String },

    /// An operation was applied to data in the wrong state.
    #[error("invalid state: {0}")]
    State(String),

    /// Imported or in-memory trial data violates the dataset schema.
    #[error("data error{}: {message}", location(.row, .column))]
    Data {
        row: Option<usize>,
        column: Option<String>,
        message: String,
    },

    /// A quantity cannot be identified from the available cells.
    #[error("not identifiable: {0}")]
    Identifiability(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location(row: &Option<usize>, column: &Option<String>) -> String {
    match (row, column) {
        (Some(r), Some(c)) => format!(" at row {r}, column `{c}`"),
        (Some(r), None) => format!(" at row {r}"),
        (None, Some(c)) => format!(" in column `{c}`"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data {
            row: None,
            column: None,
            message: message.into(),
        }
    }

    pub fn data_at(row: usize, column: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            row: Some(row),
            column: Some(column.into()),
            message: message.into(),
        }
    }
}
