use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parameter `{name}` out of domain: {value}")]
    Domain { name: &'static str, value: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate signal: {0}")]
    Degenerate(&'static str),

    #[error("singular system: {0}")]
    Singular(&'static str),

    #[error("exhaustive search over M = {m} exceeds the cap of {cap}")]
    OracleCap { m: usize, cap: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64) -> Self {
        Error::Domain { name, value }
    }
}

pub(crate) fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape(alloc::format!(
            "{what}: expected length {expected}, found {found}"
        )))
    }
}
