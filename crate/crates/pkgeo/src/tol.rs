//! Centralized numerical tolerances. No ad-hoc magic numbers at call
//! sites: every threshold lives here with the reason it has its value.

/// Identities that hold to machine precision by construction (𝕁² = −Id,
/// 𝔾 = Ω(𝕁·,·), antisymmetry): only roundoff crosses them.
pub const TOL_EXACT: f64 = 1e-12;

/// Nijenhuis tensor on curved charts: analytic zero reached through a
/// chain of symbolic derivatives and curvature terms; roundoff accumulates
/// a few orders above machine epsilon on O(1) inputs.
pub const TOL_NIJENHUIS: f64 = 1e-9;

/// Connection residuals (torsion, metric compatibility, parallel 𝕁):
/// analytic zeros through longer cancellation chains.
pub const TOL_CONNECTION: f64 = 1e-8;

/// Lagrangian defect of gradient graphs and affine normal bundles: exact
/// symbolic zero up to evaluation roundoff.
pub const TOL_LAGRANGIAN_DEFECT: f64 = 1e-10;

/// Degeneracy threshold on |EG−F²| relative to the fourth power of the
/// immersion scale; below it a point counts as null and curvature
/// operations refuse.
pub const TOL_NULL_REL: f64 = 1e-10;

/// Rank thresholds for singular values relative to the largest one;
/// Jacobians are symbolic, so this only guards constructed degeneracies.
pub const TOL_RANK_REL: f64 = 1e-8;

/// Pointwise targets from the verification suites.
pub const TOL_RANK1_METRIC: f64 = 1e-8;
pub const TOL_RANK1_H: f64 = 1e-8;
pub const TOL_MEAN_CURV_ARG: f64 = 1e-7;
pub const TOL_ANGLE_GRADIENT: f64 = 1e-6;
pub const TOL_BETA_STDDEV: f64 = 1e-9;
pub const TOL_INDUCED_FLAT: f64 = 1e-6;

/// Hamiltonian-stationarity residual: dominated by the central-difference
/// truncation of the divergence at `HSTAT_STEP`.
pub const TOL_HSTATIONARY: f64 = 1e-5;

/// Central-difference step for the divergence in the stationarity
/// residual; h² truncation ~1e-8 stays below TOL_HSTATIONARY while h is
/// large enough to avoid cancellation noise.
pub const HSTAT_STEP: f64 = 1e-4;

/// Finite-difference step used only by test oracles that cross-check
/// symbolic derivatives.
pub const FD_STEP: f64 = 1e-5;

/// Mean-curvature magnitude on surfaces that are minimal by construction
/// (constant-angle family members): symbolic zero plus roundoff.
pub const TOL_MINIMAL_H: f64 = 1e-8;

/// Constant-angle equation residual for family members: the profile
/// substitution cancels exactly, leaving evaluation roundoff.
pub const TOL_CONSTANT_ANGLE_PDE: f64 = 1e-12;

/// Congruence suite: the area identity is checked relatively (quadrature
/// limited), the metric identities absolutely. Umbilic congruences, where
/// both sides collapse to zero, are checked absolutely instead.
pub const TOL_AREA_REL: f64 = 1e-6;
pub const TOL_AREA_ABS: f64 = 1e-10;
pub const TOL_CONGRUENCE_METRIC: f64 = 1e-9;
pub const TOL_VARIATION_POINTWISE: f64 = 1e-6;
pub const TOL_VARIATION_SUP: f64 = 1e-5;

/// ε-schedule for the Hamiltonian-variation finite difference; the two
/// values Richardson-combine to cancel the O(ε²) term.
pub const VARIATION_EPS: (f64, f64) = (1e-3, 5e-4);

/// Floor for the minimal-graph non-existence probe on curved charts: the
/// probe must never reach below this.
pub const PROBE_FLOOR: f64 = 1e-3;

/// Defaults for quadrature and grid sweeps.
pub const QUAD_ORDER_DEFAULT: usize = 32;
pub const QUAD_REL_TOL: f64 = 1e-9;
pub const QUAD_MAX_DEPTH: usize = 6;
pub const GRID_DEFAULT: usize = 33;
