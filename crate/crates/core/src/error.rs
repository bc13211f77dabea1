use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix had the wrong shape.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A point that must lie on the manifold does not.
    OffManifold { residual: f64 },
    /// A frame or Gram matrix lost rank.
    RankDeficient { what: &'static str },
    /// A matrix that must be invertible is (numerically) singular.
    Degenerate { what: &'static str },
    /// A vector field leaves the tangent space.
    NotTangent { field: String, residual: f64 },
    UnknownName(String),
    InvalidParameter {
        name: &'static str,
        reason: String,
    },
    /// `a > 0` with `b` too small to absorb it: the certificate does not hold
    /// at this point.
    CertificateViolation {
        a: f64,
        b: f64,
        node: Option<usize>,
    },
    /// Rotation angle at (or too close to) π; the minimizing geodesic is not
    /// unique.
    CutLocus { angle: f64 },
    /// The endpoints lie in different connected components.
    ComponentMismatch,
    NotImplemented(&'static str),
    /// The reference pair does not satisfy the dynamics.
    InfeasibleReference { time: f64, residual: f64 },
    InvalidInput(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected dimension {expected}, found {found}"),
            Error::OffManifold { residual } => {
                write!(f, "point is off the manifold (constraint residual {residual:.3e})")
            }
            Error::RankDeficient { what } => write!(f, "{what} is rank deficient"),
            Error::Degenerate { what } => write!(f, "{what} is numerically singular"),
            Error::NotTangent { field, residual } => write!(
                f,
                "vector field {field} is not tangent to the manifold (residual {residual:.3e})"
            ),
            Error::UnknownName(name) => write!(f, "unknown name `{name}`"),
            Error::InvalidParameter { name, reason } => {
                write!(f, "invalid parameter `{name}`: {reason}")
            }
            Error::CertificateViolation { a, b, node } => {
                write!(f, "certificate violated (a = {a:.6e} > 0, b = {b:.6e})")?;
                if let Some(node) = node {
                    write!(f, " at path node {node}")?;
                }
                Ok(())
            }
            Error::CutLocus { angle } => write!(
                f,
                "rotation angle {angle:.9} is at the cut locus; geodesic is not unique"
            ),
            Error::ComponentMismatch => {
                write!(f, "points lie in different connected components")
            }
            Error::NotImplemented(what) => write!(f, "not implemented: {what}"),
            Error::InfeasibleReference { time, residual } => write!(
                f,
                "reference is not a feasible pair at t = {time} (residual {residual:.3e})"
            ),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
