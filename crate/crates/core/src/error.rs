use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{entity}: missing required field `{field}`")]
    MissingField { entity: &'static str, field: String },

    #[error("{entity}: invalid value for `{field}`: {reason}")]
    InvalidValue {
        entity: &'static str,
        field: String,
        reason: String,
    },

    #[error("{entity}: unknown key `{key}`")]
    UnknownKey { entity: &'static str, key: String },

    #[error("unknown {entity} `{name}`")]
    UnknownName { entity: &'static str, name: String },

    #[error("bit width {bits} exceeds the widest memory port ({max} bits)")]
    WidthOverflow { bits: u64, max: u64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(entity: &'static str, field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            entity,
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input, as opposed to a design that
    /// does not fit the device.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Infeasible(_))
    }
}
