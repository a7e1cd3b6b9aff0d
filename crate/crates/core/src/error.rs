use thiserror::Error;

/// Errors raised by the library. Variants split into input validation
/// problems and numerical failures; see [`CmvError::is_numeric`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CmvError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("pair violates |alpha|^2 + |rho|^2 = 1 (defect {defect:.3e})")]
    NotVerblunsky { defect: f64 },
    #[error("the complexified twin is only defined for s = 2 (got s = {0})")]
    TwinRequiresS2(u32),
    #[error("no mobility edge: lambda1^2/lambda1' = {lhs:.6} is not below 2 lambda2/lambda2' = {rhs:.6}")]
    NoMobilityEdge { lhs: f64, rhs: f64 },
    #[error("degenerate coupling: {0}")]
    DegenerateCoupling(String),
    #[error("continued fraction terminates after {terms} terms")]
    RationalInput { terms: usize },
    #[error("window [{a}, {b}] is too small (need at least 2 sites)")]
    WindowTooSmall { a: i64, b: i64 },
    #[error("window [{a}, {b}] is not a union of walk cells (need a odd, b even)")]
    MisalignedWindow { a: i64, b: i64 },
    #[error("window [{a}, {b}] is not symmetric about {center}")]
    AsymmetricWindow { a: i64, b: i64, center: f64 },
    #[error("expected a unimodular value at index {index}, modulus {modulus:.3e}")]
    NonUnimodularInput { index: i64, modulus: f64 },
    #[error("norm condition violated at index {index} (defect {defect:.3e})")]
    NormConditionViolated { index: i64, defect: f64 },
    #[error("rho vanishes at index {index} (|rho| = {modulus:.3e})")]
    SingularRho { index: i64, modulus: f64 },
    #[error("phase shift {epsilon:.4e} leaves the analyticity strip of radius {radius:.4e}")]
    StripExceeded { epsilon: f64, radius: f64 },
    #[error("classification inconclusive: {0}")]
    Inconclusive(String),
    #[error("located {found} eigenvalues, expected {expected}")]
    RootCountMismatch { found: usize, expected: usize },
    #[error("spectral parameter is too close to an eigenvalue (relative determinant {relative:.3e})")]
    NearEigenvalue { relative: f64 },
    #[error("angle is not an eigenvalue of the truncation (residual {residual:.3e})")]
    NotAnEigenvalue { residual: f64 },
    #[error("shooting and inverse iteration both failed (residual {residual:.3e})")]
    ShootingUnstable { residual: f64 },
    #[error("profile peak at {peak} is closer than {margin} sites to the boundary")]
    PeakTooCloseToBoundary { peak: usize, margin: usize },
    #[error("profile tail is dominated by the numeric floor")]
    FloorDominated,
    #[error("interpolation nodes are not distinct")]
    DuplicateNodes,
    #[error("coefficient recovery is ill-conditioned at entry ({row}, {col})")]
    RecoveryIllConditioned { row: i64, col: i64 },
    #[error("spectral parameter must lie on the unit circle (|z| = {modulus})")]
    NotOnUnitCircle { modulus: f64 },
}

impl CmvError {
    /// True for failures of a numerical procedure, false for rejected input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CmvError::SingularRho { .. }
                | CmvError::Inconclusive(_)
                | CmvError::RootCountMismatch { .. }
                | CmvError::NearEigenvalue { .. }
                | CmvError::NotAnEigenvalue { .. }
                | CmvError::ShootingUnstable { .. }
                | CmvError::FloorDominated
                | CmvError::RecoveryIllConditioned { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, CmvError>;
