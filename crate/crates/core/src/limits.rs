//! Central numeric guard thresholds.
//!
//! Every hard cutoff that decides between "proceed" and "refuse" lives here,
//! with the reasoning attached, so the values are not scattered as magic
//! numbers through the solver.

/// Rejection band around the forbidden permittivity ratio eps1/eps2 = -1.
///
/// The transmission problem degenerates as the contrast approaches -1: the
/// interface operator loses invertibility and discrete systems become
/// arbitrarily ill-conditioned. Configurations inside this band are refused
/// outright rather than solved badly.
pub const CRITICAL_CONTRAST_GUARD: f64 = 1e-6;

/// Detection band for grazing diffraction orders, |alpha_n| == kappa1.
///
/// A mode with vanishing vertical wavenumber has no well-defined outgoing
/// direction, so the transparent boundary operator is undefined for it.
/// Mode sets containing such an order are rejected as a hard error.
pub const GRAZING_ORDER_GUARD: f64 = 1e-10;

/// Reciprocal condition estimate below which a factorization is reported as
/// singular instead of returning a meaningless solution.
pub const RCOND_FLOOR: f64 = 1e-14;

/// Magnitude floor for the per-mode 2x2 interface determinant in the layered
/// reference solution; smaller values indicate a resonant (degenerate) layer.
pub const LAYER_DETERMINANT_FLOOR: f64 = 1e-13;

/// Minimum interior angle (degrees) a mesh may have and still be assembled.
/// Thinner triangles ruin the conditioning of the stiffness matrix faster
/// than they improve geometric resolution.
pub const MIN_TRIANGLE_ANGLE_DEG: f64 = 1.0;

/// Evanescent-tail target used when choosing the default number of retained
/// diffraction orders: the slowest-decaying truncated mode should be damped
/// by at least this factor between the interface crest and the top boundary.
pub const TRUNCATION_TAIL_TARGET: f64 = 1e-10;

/// Relative residual allowed in the discrete energy identity of an accepted
/// solve. Direct factorization leaves residuals many orders below this; a
/// violation signals an assembly/solve inconsistency, not roundoff.
pub const ENERGY_RESIDUAL_REL: f64 = 1e-8;
