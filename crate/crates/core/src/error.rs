use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The voxelization produced no cells.
    DegenerateMesh,
    /// The mesh is not a solid without handles (tree-cotree gauge needs it).
    UnsupportedTopology { euler_characteristic: i64, boundary_components: usize },
    /// Two atoms share a center, so no grid refinement separates them.
    IndistinguishableAtoms { first: usize, second: usize },
    /// Two atoms' voxel hulls intersect.
    OverlappingAtoms { first: usize, second: usize },
    /// Kernel evaluated at zero distance outside a singular quadrature rule.
    SingularEvaluation,
    /// Adaptive quadrature ran out of depth before reaching the tolerance.
    Quadrature { worst_estimate: f64, tolerance: f64 },
    /// Dense oracle requested above the configured DoF cap.
    DenseOracleDisabled { dofs: usize, cap: usize },
    /// A metric needs the dense oracle but it was not supplied.
    OracleRequired,
    /// A diagonal block could not be factored.
    PreconditionerBreakdown { block: usize },
    /// A dense factorization met an exactly singular pivot.
    SingularMatrix,
    /// GMRES produced non-finite values.
    Breakdown { iteration: usize },
    /// Vector or matrix sizes do not agree.
    DimensionMismatch { expected: usize, found: usize },
    /// A reference vector with zero norm.
    ZeroReference,
    /// Invalid input parameter.
    InvalidInput(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegenerateMesh => write!(f, "degenerate mesh"),
            Error::UnsupportedTopology { euler_characteristic, boundary_components } => write!(
                f,
                "unsupported topology (euler characteristic {euler_characteristic}, {boundary_components} boundary components)"
            ),
            Error::IndistinguishableAtoms { first, second } => {
                write!(f, "indistinguishable atoms {first} and {second}")
            }
            Error::OverlappingAtoms { first, second } => {
                write!(f, "overlapping atoms {first} and {second}")
            }
            Error::SingularEvaluation => write!(f, "singular evaluation"),
            Error::Quadrature { worst_estimate, tolerance } => write!(
                f,
                "quadrature failed to reach tolerance {tolerance:e} (worst element-pair estimate {worst_estimate:e})"
            ),
            Error::DenseOracleDisabled { dofs, cap } => {
                write!(f, "dense oracle disabled at this size ({dofs} DoFs > cap {cap})")
            }
            Error::OracleRequired => write!(f, "oracle required"),
            Error::PreconditionerBreakdown { block } => {
                write!(f, "preconditioner breakdown in diagonal block {block}")
            }
            Error::SingularMatrix => write!(f, "singular matrix"),
            Error::Breakdown { iteration } => write!(f, "breakdown at iteration {iteration}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::ZeroReference => write!(f, "reference vector has zero norm"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
