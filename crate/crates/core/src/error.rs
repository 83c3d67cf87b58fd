use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    Lattice(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error(
        "below critical temperature: 4T - J has eigenvalue {eigenvalue:.6e} <= 0 at T = {temperature}"
    )]
    BelowCritical { temperature: f64, eigenvalue: f64 },

    #[error("phase violation at q = ({qx:.6}, {qy:.6}): 4T - J(q) = {value:.6e}")]
    PhaseAtQ { qx: f64, qy: f64, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("ill-conditioned eigenbasis: biorthogonality residual {residual:.3e}")]
    Conditioning { residual: f64 },

    #[error("Goldstone singularity: resolvent is singular at omega = 0 with zero relaxation")]
    GoldstoneSingularity,

    #[error("negative total density weight {total:.6e}: instability")]
    Instability { total: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("instance {index} (seed {seed}) failed: {source}")]
    Instance {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The underlying error, looking through instance wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Instance { source, .. } => source.root(),
            e => e,
        }
    }
}
