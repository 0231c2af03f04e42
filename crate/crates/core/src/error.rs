use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no entries")]
    Empty,
    #[error("expected {expected} Hz mono audio, got {rate} Hz with {channels} channels")]
    NotPreprocessed {
        expected: u32,
        rate: u32,
        channels: u16,
    },
    #[error("row {row} has {samples} samples, shorter than the encoder receptive field ({field})")]
    TooShort {
        row: usize,
        samples: usize,
        field: usize,
    },
    #[error("entry `{id}` costs {seconds:.3} s, over the {budget:.3} s batch budget")]
    OverBudget {
        id: String,
        seconds: f64,
        budget: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("both genuine and fake records are required (genuine={genuine}, fake={fake})")]
    SingleClass { genuine: usize, fake: usize },
    #[error("all-zero signal: {0}")]
    Silent(&'static str),
}
