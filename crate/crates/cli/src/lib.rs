//! Experiment harness around the `redunet` library: configuration, model
//! archives, CSV output, the experiment suite and the self-test.

pub mod archive;
pub mod config;
pub mod csv;
pub mod experiments;
pub mod metrics;
pub mod selftest;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    /// Process exit status: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<redunet::Error> for CliError {
    fn from(e: redunet::Error) -> Self {
        use redunet::Error as E;
        match e {
            E::NotPositiveDefinite
            | E::NotHermitian(_)
            | E::ZeroVector
            | E::ImaginaryResidue(_)
            | E::NonFinite(_) => CliError::Numerical(e.to_string()),
            E::Io(_) | E::BadMagic { .. } | E::TruncatedFile(_) | E::LabelImageCountMismatch { .. } | E::EmptyClass(_) => {
                CliError::Data(e.to_string())
            }
            E::ShapeMismatch(_)
            | E::LengthMismatch { .. }
            | E::InvalidArgument(_)
            | E::RadiusOutOfBounds { .. }
            | E::StepsNotDividingGamma { .. } => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<archive::ArchiveError> for CliError {
    fn from(e: archive::ArchiveError) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
