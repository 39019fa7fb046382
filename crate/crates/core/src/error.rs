use thiserror::Error;

/// Every failure surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unregistered function `{0}`")]
    Unregistered(String),
    #[error("point outside the smoothness domain of `{0}`")]
    OutsideDomain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("metric `{name}` is not Hermitian (residual {residual:.3e})")]
    NonHermitian { name: String, residual: f64 },
    #[error("degenerate metric: minimum eigenvalue {min_eig:.3e} below tolerance")]
    DegenerateMetric { min_eig: f64 },
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("fiber Hessian not positive definite (min eigenvalue {min_eig:.3e}); strict pseudoconvexity violated")]
    NotStrictlyPsh { min_eig: f64 },
    #[error("invalid family: denominator rho - |d rho|^2 = {value:.3e} is not negative")]
    Denominator { value: f64 },
    #[error("boundary degeneracy: |d rho|^2 = {value:.3e}")]
    BoundaryDegenerate { value: f64 },
    #[error("sample is not on the boundary (|rho| = {value:.3e})")]
    NotOnBoundary { value: f64 },
    #[error("ray root-finding failed: {0}")]
    RootFinding(String),
    #[error("quadrature resolution too low: {0}")]
    Resolution(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("Gram matrix is not positive definite (min eigenvalue {min_eig:.3e}); increase quadrature resolution")]
    IndefiniteGram { min_eig: f64 },
    #[error("Gram matrix ill-conditioned (condition {condition:.3e}); degree cap too high")]
    IllConditioned { condition: f64 },
    #[error("finite-difference stencil leaves the base domain at t = {0}")]
    StencilOutside(String),
    #[error("Bergman kernel below positivity floor ({0:.3e})")]
    KernelFloor(f64),
    #[error("fiber curvature block is singular (min eigenvalue {min_eig:.3e}); F is not fiberwise Nakano strictly positive")]
    NotFiberPositive { min_eig: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("resolution tier mismatch between interior and boundary rules")]
    TierMismatch,
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
