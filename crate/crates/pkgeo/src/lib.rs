//! Geometry of the tangent bundle TΣ of a Riemannian surface carrying its
//! natural pseudo-Kähler structure (𝕁, 𝔾, Ω), with a focus on Lagrangian
//! surfaces: their induced metric, extrinsic curvature, mean curvature and
//! the minimal / Hamiltonian-stationary families, plus the application to
//! normal line congruences of surfaces in Euclidean and Minkowski 3-space.
//!
//! Modules:
//! - [`expr`]: the expression DSL (parsing, exact symbolic partials).
//! - [`basegeo`]: conformal charts, curves, Frénet data, geodesics.
//! - [`tbundle`]: Ω, 𝕁, 𝔾 and the Levi-Civita connection on TΣ.
//! - [`lagrangian`]: immersed surfaces in TΣ and their curvature.
//! - [`flatlab`]: the flat case ℝ² (Lagrangian angle, minimal family).
//! - [`congruence`]: normal congruences in TS² and TH².
//! - [`scene`], [`report`], [`cli`]: batch interface for the `pkgeo` bin.

pub mod basegeo;
pub mod cli;
pub mod congruence;
pub mod expr;
pub mod flatlab;
pub mod lagrangian;
pub mod numerics;
pub mod report;
pub mod scene;
pub mod tbundle;
pub mod tol;
