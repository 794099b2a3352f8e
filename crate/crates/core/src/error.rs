use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// A set, dilation or flow reached the outermost cell layer of the box.
    #[error("domain overflow: {0}")]
    DomainOverflow(String),

    #[error("set is empty")]
    EmptySet,

    #[error("set covers the whole space")]
    FullSet,

    #[error("operands live on different grids")]
    GeometryMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("negative pairwise weight {weight} between nodes {i} and {j}")]
    NegativeWeight { i: usize, j: usize, weight: f64 },

    #[error("integer capacity overflow: {0}")]
    CapacityOverflow(String),

    #[error("degenerate curvature probe: {0}")]
    DegenerateProbe(String),

    #[error("brute force limited to 16 free cells, got {0}")]
    TooManyCells(usize),

    #[error("argmin set is not closed under union/intersection")]
    NonLattice,

    #[error("ball curvature table is not monotone: {0}")]
    NonMonotoneTable(String),

    #[error("invalid level grid: {0}")]
    InvalidLevels(String),

    /// An internal consistency check failed.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
