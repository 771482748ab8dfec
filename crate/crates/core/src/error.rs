use thiserror::Error;

use crate::lattice::LatticePoint;

/// Errors raised by the numerical pipeline.
///
/// Violations of hypotheses that are findings (decay bounds, verifier
/// margins) are reported as data; this type covers inputs that cannot be
/// processed and numerical breakdowns.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("lattice point {0} has dimension {1}, expected {2}")]
    DimensionMismatch(LatticePoint, usize, usize),

    #[error("the origin is not an admissible label")]
    ZeroLabel,

    #[error("rationally dependent frequencies: n = {0} gives n.omega = 0")]
    RationallyDependent(LatticePoint),

    #[error("k = {0} is nonresonant within the search box")]
    Nonresonant(f64),

    #[error("Galerkin dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("eigensolver did not converge (residual {residual:e})")]
    NonConvergence { residual: f64 },

    #[error("ambiguous branch selection at k = {k}: |v(0)| values {first} and {second} differ by less than 1e-3")]
    AmbiguousSelection { k: f64, first: f64, second: f64 },

    #[error("no eigenpair pair carries 90% of its mass on {{0, {0}}}")]
    ModeSelection(LatticePoint),

    #[error("resonance cluster at label {0} overlaps the Galerkin box boundary or the dimension cap")]
    ClusterOverlap(LatticePoint),

    #[error("gaps {0} and {1} overlap")]
    GapOverlap(String, String),

    #[error("refinement budget of {budget} cells exhausted without pass or witness (best certified ratio {best:.6})")]
    BudgetExhausted { budget: usize, best: f64 },

    #[error("separation constants too weak: no sigma_0 > 0 closes the small-window branch")]
    ConstantsTooWeak,

    #[error("ill-conditioned finite-difference model: h^2 max|V| = {0:e} > 0.1")]
    IllConditioned(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
