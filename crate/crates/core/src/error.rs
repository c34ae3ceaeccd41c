use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("normal state: kinetic inductance undefined (T = {temperature} K, Tc = {t_c} K)")]
    NormalState { temperature: f64, t_c: f64 },

    #[error("superconducting state: RC limit not applicable")]
    RcNotApplicable,

    #[error("no interior optimum: efficiency unbounded in L")]
    NoInteriorOptimum,

    #[error("no nulls: velocity matched")]
    VelocityMatched,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("{}", fmt_config(.line, .message))]
    Config { line: Option<usize>, message: String },

    #[error("unit error: {0}")]
    Unit(#[from] crate::units::UnitError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_config(line: &Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("config line {l}: {message}"),
        None => format!("config: {message}"),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
