use std::fmt;

/// CLI failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unparsable config, unknown key or out-of-range value.
    Config(String),
    /// Temperature at or below an ordering instability.
    Phase(String),
    Io(String),
    /// `validate` ran and at least one check failed.
    Validation(usize),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config(_) => 2,
            CliError::Phase(_) => 3,
            CliError::Io(_) => 4,
            CliError::Validation(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Phase(m) => write!(f, "phase error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Validation(n) => write!(f, "{n} validation check(s) failed"),
            CliError::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<spinflux::Error> for CliError {
    fn from(e: spinflux::Error) -> Self {
        use spinflux::Error as E;
        let msg = e.to_string();
        match e.root() {
            E::BelowCritical { .. } | E::PhaseAtQ { .. } | E::Instability { .. } | E::Domain(_) => {
                CliError::Phase(msg)
            }
            E::Lattice(_) | E::Input(_) => CliError::Config(msg),
            _ => CliError::Other(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
