use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grading violation: bracket [Y{i},Y{j}] has a component on Y{k} but weights {wi}+{wj} != {wk}")]
    GradingViolation {
        i: usize,
        j: usize,
        k: usize,
        wi: u32,
        wj: u32,
        wk: u32,
    },
    #[error("bracket table is not antisymmetric at [Y{i},Y{j}] -> Y{k}")]
    AntisymmetryViolation { i: usize, j: usize, k: usize },
    #[error("Jacobi identity fails for (Y{i},Y{j},Y{l}) on component Y{m}")]
    JacobiViolation {
        i: usize,
        j: usize,
        l: usize,
        m: usize,
    },
    #[error("invalid group description: {0}")]
    InvalidGroup(String),
    #[error("step {0} exceeds the largest supported nilpotency step (4)")]
    UnsupportedStep(u32),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-finite value at node {0}")]
    NonFiniteValue(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("basis change is not orthogonal (deviation {0:.3e})")]
    NonOrthogonalRotation(f64),
    #[error("basis change of the first layer is singular or has the wrong shape")]
    SingularBasis,
    #[error("dense eigen backend limited to {limit} nodes, grid has {nodes}")]
    DenseThresholdExceeded { nodes: usize, limit: usize },
    #[error("Chebyshev degree {0} is below the minimum of 8")]
    ChebyshevDegreeTooLow(usize),
    #[error("Chebyshev expansion did not reach sup error {target:.1e} (best {achieved:.3e} at degree {degree})")]
    ChebyshevNotConverged {
        target: f64,
        achieved: f64,
        degree: usize,
    },
    #[error("the identity element is not a grid node (use an odd number of points per axis)")]
    IdentityNodeMissing,
    #[error("operation requires a Euclidean group")]
    NonEuclideanGroup,
    #[error("invalid bump: {0}")]
    InvalidBump(String),
    #[error("negative radicand {value:.3e} at xi = {xi}: phi_hat is not monotone")]
    NegativeRadicand { xi: f64, value: f64 },
    #[error("scale {j} is not resolvable: band [{lo:.3e}, {hi:.3e}] misses the spectral window [{win_lo:.3e}, {win_hi:.3e}]")]
    ScaleRangeUnresolvable {
        j: i32,
        lo: f64,
        hi: f64,
        win_lo: f64,
        win_hi: f64,
    },
    #[error("scale {j} outside the cached range {lo}..={hi}")]
    ScaleOutOfRange { j: i32, lo: i32, hi: i32 },
    #[error(
        "smoothness s = {s} violates |s| < k for a wavelet with k = {order} vanishing moments"
    )]
    MomentOrderTooLow { s: f64, order: u32 },
    #[error("sampling set has no points inside the box at scale {0}")]
    EmptySampleSet(i32),
    #[error("tiling check failed: {0}")]
    TilingViolation(String),
    #[error("density precheck failed: osc_l1 = {osc:.3e} >= 1")]
    DensityPrecheckFailed { osc: f64 },
    #[error("frame deviation rho = {rho:.4} >= 1 at alpha = {alpha}: sampling too sparse")]
    NotContractive { rho: f64, alpha: f64 },
    #[error("Neumann iteration stopped after {iters} steps with residual {residual:.3e}")]
    MaxIterExceeded { iters: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
